//! Mini-batch SGD training loop, deterministic given the config seed.
//!
//! Each epoch shuffles sample order with the seeded generator, walks fixed
//! batch-size chunks (final partial chunk included), and applies one SGD step
//! per batch. The reported epoch loss is the sample-weighted mean of the
//! batch losses, i.e. the mean pre-update loss per sample over the epoch.

use rand::seq::SliceRandom;

use super::matrix::Matrix;
use super::{apply_gradients, backprop, AutoencoderError, LossSpec, NetworkParams};
use crate::seeds;

/// Training phase: reconstruction pretraining (MSE against the input, labels
/// ignored) or classification fine-tuning (cross-entropy; decoder frozen).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Finetune,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub phase: Phase,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AutoencoderError> {
        if self.max_epochs == 0 {
            return Err(AutoencoderError::BadTrainConfig("max_epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(AutoencoderError::BadTrainConfig("batch_size must be >= 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(AutoencoderError::BadTrainConfig(
                "learning_rate must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Mean per-sample loss of one epoch, measured before each batch's update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub phase: Phase,
    pub loss: f64,
}

/// Trains for exactly `cfg.max_epochs` epochs and returns the updated
/// parameters with the per-epoch loss history. Divergence (a non-finite
/// batch loss or forward pass) aborts with the offending epoch.
pub fn train(
    net: NetworkParams,
    inputs: &Matrix,
    labels: Option<&[u8]>,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, Vec<EpochLoss>), AutoencoderError> {
    cfg.validate()?;
    net.validate()?;
    if inputs.rows() == 0 {
        return Err(AutoencoderError::EmptyBatch);
    }
    let labels = match cfg.phase {
        Phase::Pretrain => None,
        Phase::Finetune => Some(labels.ok_or(AutoencoderError::MissingLabels)?),
    };

    let n = inputs.rows();
    let mut net = net;
    let mut rng = seeds::rng(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.max_epochs);

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let rows: Vec<&[f64]> = chunk.iter().map(|&i| inputs.row(i)).collect();
            let batch = Matrix::from_rows(&rows);
            let batch_labels: Vec<u8>;
            let loss_spec = match labels {
                None => LossSpec::Mse,
                Some(all) => {
                    batch_labels = chunk.iter().map(|&i| all[i]).collect();
                    LossSpec::CrossEntropy(&batch_labels)
                }
            };
            let out = match backprop(&net, &batch, &loss_spec) {
                Ok(out) => out,
                Err(AutoencoderError::NonFiniteForward) => {
                    return Err(AutoencoderError::Diverged { epoch })
                }
                Err(e) => return Err(e),
            };
            if !out.loss.is_finite() {
                return Err(AutoencoderError::Diverged { epoch });
            }
            apply_gradients(&mut net, &out.gradients, cfg.learning_rate);
            loss_sum += out.loss * chunk.len() as f64;
        }
        history.push(EpochLoss { epoch, phase: cfg.phase, loss: loss_sum / n as f64 });
    }
    Ok((net, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_inputs(n: usize, dim: usize) -> Matrix {
        let data = (0..n * dim).map(|i| ((i as f64 * 0.713).sin() + 1.0) / 2.0).collect();
        Matrix::from_vec(n, dim, data)
    }

    fn cfg(phase: Phase) -> TrainConfig {
        TrainConfig { max_epochs: 5, batch_size: 4, learning_rate: 0.05, seed: 42, phase }
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let net = NetworkParams::new_seeded(6, &[4], 3, 7).unwrap();
        let inputs = toy_inputs(10, 6);
        let c = TrainConfig { learning_rate: 0.0, ..cfg(Phase::Pretrain) };
        let (trained, history) = train(net.clone(), &inputs, None, &c).unwrap();
        assert_eq!(trained, net);
        assert_eq!(history.len(), 5);
        assert!(history.windows(2).all(|w| w[0].loss == w[1].loss), "history not flat");
    }

    #[test]
    fn same_seed_trains_bit_identically() {
        let net = NetworkParams::new_seeded(6, &[4], 3, 7).unwrap();
        let inputs = toy_inputs(10, 6);
        let labels = vec![0u8, 1, 2, 0, 1, 2, 0, 1, 2, 0];
        let c = cfg(Phase::Finetune);
        let a = train(net.clone(), &inputs, Some(&labels), &c).unwrap();
        let b = train(net.clone(), &inputs, Some(&labels), &c).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);

        let other = TrainConfig { seed: 43, ..c };
        let d = train(net, &inputs, Some(&labels), &other).unwrap();
        assert_ne!(a.0, d.0);
    }

    #[test]
    fn pretraining_reduces_reconstruction_loss() {
        let net = NetworkParams::new_seeded(8, &[6, 3], 2, 11).unwrap();
        let inputs = toy_inputs(24, 8);
        let c = TrainConfig { max_epochs: 40, batch_size: 8, learning_rate: 0.5, seed: 1, phase: Phase::Pretrain };
        let (_, history) = train(net, &inputs, None, &c).unwrap();
        assert!(history.last().unwrap().loss < history[0].loss);
        assert!(history.iter().all(|e| e.phase == Phase::Pretrain));
        assert_eq!(history.last().unwrap().epoch, 40);
    }

    #[test]
    fn finetuning_freezes_the_decoder() {
        let net = NetworkParams::new_seeded(6, &[4], 3, 19).unwrap();
        let inputs = toy_inputs(12, 6);
        let labels = vec![0u8, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2];
        let (trained, history) = train(net.clone(), &inputs, Some(&labels), &cfg(Phase::Finetune)).unwrap();
        assert_eq!(trained.decoder, net.decoder, "decoder must stay bit-identical");
        assert_ne!(trained.encoder, net.encoder);
        assert_ne!(trained.head, net.head);
        assert!(history.iter().all(|e| e.phase == Phase::Finetune));
    }

    #[test]
    fn finetune_without_labels_is_an_error() {
        let net = NetworkParams::new_seeded(6, &[4], 3, 19).unwrap();
        let inputs = toy_inputs(4, 6);
        assert!(matches!(
            train(net, &inputs, None, &cfg(Phase::Finetune)),
            Err(AutoencoderError::MissingLabels)
        ));
    }

    #[test]
    fn divergence_reports_the_epoch() {
        // A sigmoid output saturates instead of overflowing, so divergence
        // needs unbounded activations: all-linear autoencoder, huge step.
        use super::super::{Activation, LayerParams};
        let linear = |out: usize, inp: usize| LayerParams {
            weights: Matrix::from_vec(out, inp, vec![0.5; out * inp]),
            biases: vec![0.0; out],
            activation: Activation::Linear,
        };
        let net = NetworkParams {
            encoder: vec![linear(4, 6)],
            decoder: vec![linear(6, 4)],
            head: vec![LayerParams {
                weights: Matrix::zeros(2, 4),
                biases: vec![0.0; 2],
                activation: Activation::Softmax,
            }],
        };
        let inputs = toy_inputs(16, 6);
        let c = TrainConfig { max_epochs: 50, batch_size: 16, learning_rate: 1e6, seed: 2, phase: Phase::Pretrain };
        match train(net, &inputs, None, &c) {
            Err(AutoencoderError::Diverged { epoch }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let bad = [
            TrainConfig { max_epochs: 0, ..cfg(Phase::Pretrain) },
            TrainConfig { batch_size: 0, ..cfg(Phase::Pretrain) },
            TrainConfig { learning_rate: -0.1, ..cfg(Phase::Pretrain) },
            TrainConfig { learning_rate: f64::NAN, ..cfg(Phase::Pretrain) },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?} should fail validation");
        }
    }
}
