//! Dataset splitting, per-group accuracy accounting, and the multi-run
//! fine-tuning protocol that produces the accuracy report.
//!
//! Splits are stratified by (flavor, dilution class) so every class keeps
//! train and test representation at small dataset sizes, and are index-based:
//! patches stay in the caller's buffer. Each run re-splits and re-draws the
//! classifier head from salts of its own seed, fine-tunes from the shared
//! pretrained network, and is scored on the combined test set and on each
//! flavor's subset, tracked as integer correct/total counts so group
//! accuracies satisfy the weighted-mean identity exactly.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::autoencoder::matrix::Matrix;
use crate::autoencoder::train::{train, EpochLoss, Phase, TrainConfig};
use crate::autoencoder::{argmax, AutoencoderError, NetworkParams};
use crate::imaging::Patch;
use crate::seeds;

/// Salt for a run's dataset split seed.
pub const SPLIT_SALT: u64 = 0xA1;
/// Salt for a run's head re-initialization seed.
pub const HEAD_SALT: u64 = 0xA2;
/// Salt for a run's batch-shuffle seed.
pub const SHUFFLE_SALT: u64 = 0xA3;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("no patches supplied")]
    NoPatches,
    #[error("train fraction {0} must lie in (0, 1]")]
    BadFraction(f64),
    #[error("stratum (flavor {flavor_id}, class {class}) has {count} patches, need at least 5")]
    StratumTooSmall { flavor_id: u8, class: u8, count: usize },
    #[error("split leaves the test set empty")]
    EmptyTestSplit,
    #[error("split leaves the training set empty")]
    EmptyTrainSplit,
    #[error("prediction/label lengths differ: {predictions} vs {labels}")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("cannot score an empty set")]
    EmptyEvaluation,
    #[error("the protocol needs patches from at least two flavors")]
    NeedTwoFlavors,
    #[error("no flavor name registered for flavor id {0}")]
    UnknownFlavor(u8),
    #[error("duplicate run id {0:?}")]
    DuplicateRunId(String),
    #[error("at least one run is required")]
    NoRuns,
    #[error("run {run_id} must use the finetune phase")]
    WrongPhase { run_id: String },
    #[error("input scale must be finite and positive, got {0}")]
    BadScale(f64),
    #[error("run {run_id}: {source}")]
    Run {
        run_id: String,
        #[source]
        source: AutoencoderError,
    },
    #[error(transparent)]
    Autoencoder(#[from] AutoencoderError),
}

/// Index-based partition of a patch buffer; indices are sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Stratified train/test split: every (flavor, class) stratum is shuffled
/// with its own seed derived from `seed` and split at
/// `floor(frac * n + 0.5)` (round half up). Deterministic given `seed`.
pub fn split_dataset(patches: &[Patch], frac: f64, seed: u64) -> Result<DatasetSplit, ExperimentError> {
    if patches.is_empty() {
        return Err(ExperimentError::NoPatches);
    }
    if !frac.is_finite() || frac <= 0.0 || frac > 1.0 {
        return Err(ExperimentError::BadFraction(frac));
    }
    let mut strata: BTreeMap<(u8, u8), Vec<usize>> = BTreeMap::new();
    for (i, p) in patches.iter().enumerate() {
        strata.entry((p.flavor_id, p.class)).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (ordinal, (&(flavor_id, class), members)) in strata.iter().enumerate() {
        if members.len() < 5 {
            return Err(ExperimentError::StratumTooSmall { flavor_id, class, count: members.len() });
        }
        let mut shuffled = members.clone();
        let mut rng = seeds::rng(seeds::derive(seed, ordinal as u64));
        shuffled.shuffle(&mut rng);
        let n_train = ((frac * shuffled.len() as f64 + 0.5).floor() as usize).min(shuffled.len());
        train.extend_from_slice(&shuffled[..n_train]);
        test.extend_from_slice(&shuffled[n_train..]);
    }
    if train.is_empty() {
        return Err(ExperimentError::EmptyTrainSplit);
    }
    if test.is_empty() {
        return Err(ExperimentError::EmptyTestSplit);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(DatasetSplit { train, test, seed })
}

/// Top-1 accuracy as a percentage: `100 * correct / total`.
pub fn accuracy(predictions: &[usize], labels: &[u8]) -> Result<f64, ExperimentError> {
    if predictions.is_empty() {
        return Err(ExperimentError::EmptyEvaluation);
    }
    if predictions.len() != labels.len() {
        return Err(ExperimentError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| **p == **l as usize).count();
    Ok(100.0 * correct as f64 / predictions.len() as f64)
}

/// Integer accuracy bookkeeping for one scored group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupCount {
    pub group: String,
    pub correct: usize,
    pub total: usize,
}

impl GroupCount {
    pub fn percent(&self) -> f64 {
        100.0 * self.correct as f64 / self.total as f64
    }
}

/// All group scores for one run; "combined" first, then flavors by name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunGroups {
    pub run_id: String,
    pub groups: Vec<GroupCount>,
}

/// Mean/std/max of one group's accuracy across runs. Std is the sample
/// standard deviation (n-1), zero for a single run.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub group: String,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub n_runs: usize,
}

/// Per-run group accuracies, ordered by run id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccuracyReport {
    pub runs: Vec<RunGroups>,
}

impl AccuracyReport {
    /// Group names in report order: "combined" first, then flavor groups.
    pub fn group_names(&self) -> Vec<String> {
        match self.runs.first() {
            Some(run) => run.groups.iter().map(|g| g.group.clone()).collect(),
            None => Vec::new(),
        }
    }

    /// Per-group mean, sample std, and max across runs.
    pub fn summary(&self) -> Vec<GroupSummary> {
        self.group_names()
            .into_iter()
            .map(|name| {
                let values: Vec<f64> = self
                    .runs
                    .iter()
                    .flat_map(|r| r.groups.iter().filter(|g| g.group == name).map(GroupCount::percent))
                    .collect();
                let n = values.len();
                let mean = values.iter().sum::<f64>() / n as f64;
                let std = if n > 1 {
                    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
                    (ss / (n - 1) as f64).sqrt()
                } else {
                    0.0
                };
                let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                GroupSummary { group: name, mean, std, max, n_runs: n }
            })
            .collect()
    }
}

/// One fine-tuning run: its report id, base seed, and training config.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub run_id: String,
    pub seed: u64,
    pub cfg: TrainConfig,
}

/// Trained artifacts of one run, for checkpointing and loss export.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run_id: String,
    pub net: NetworkParams,
    pub history: Vec<EpochLoss>,
}

/// Gathers selected patches into a network input matrix (pixels scaled by
/// `1/t_max`) plus their class labels.
pub fn patches_to_inputs(
    patches: &[Patch],
    indices: &[usize],
    t_max: f64,
) -> Result<(Matrix, Vec<u8>), ExperimentError> {
    if !t_max.is_finite() || t_max <= 0.0 {
        return Err(ExperimentError::BadScale(t_max));
    }
    if indices.is_empty() {
        return Err(ExperimentError::EmptyEvaluation);
    }
    let dim = patches[indices[0]].pixels.len();
    let mut data = Vec::with_capacity(indices.len() * dim);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        data.extend(patches[i].pixels.iter().map(|&v| v as f64 / t_max));
        labels.push(patches[i].class);
    }
    Ok((Matrix::from_vec(indices.len(), dim, data), labels))
}

/// Scores `net` on the selected patches: a "combined" group over all of
/// them plus one group per flavor present, as integer correct/total counts.
pub fn evaluate_subset(
    net: &NetworkParams,
    patches: &[Patch],
    indices: &[usize],
    flavor_names: &BTreeMap<u8, String>,
    t_max: f64,
) -> Result<Vec<GroupCount>, ExperimentError> {
    let (inputs, labels) = patches_to_inputs(patches, indices, t_max)?;
    let probs = net.classify_batch(&inputs)?;
    let hits: Vec<bool> = (0..probs.rows())
        .map(|r| argmax(probs.row(r)) == labels[r] as usize)
        .collect();

    let mut flavor_counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut combined = (0usize, 0usize);
    for (&i, &hit) in indices.iter().zip(&hits) {
        let name = flavor_names
            .get(&patches[i].flavor_id)
            .ok_or(ExperimentError::UnknownFlavor(patches[i].flavor_id))?;
        let slot = flavor_counts.entry(name).or_insert((0, 0));
        slot.0 += hit as usize;
        slot.1 += 1;
        combined.0 += hit as usize;
        combined.1 += 1;
    }
    let mut groups = vec![GroupCount { group: "combined".into(), correct: combined.0, total: combined.1 }];
    groups.extend(flavor_counts.into_iter().map(|(name, (correct, total))| GroupCount {
        group: name.to_owned(),
        correct,
        total,
    }));
    Ok(groups)
}

/// Runs the full fine-tuning protocol against a shared pretrained network.
///
/// Per run: stratified re-split with `derive(run.seed, SPLIT_SALT)`, head
/// re-draw with `derive(run.seed, HEAD_SALT)`, fine-tune on the combined
/// training set, score the combined and per-flavor test sets. Report rows
/// are ordered by run id; training errors carry the offending run id.
pub fn run_protocol(
    patches: &[Patch],
    flavor_names: &BTreeMap<u8, String>,
    pretrained: &NetworkParams,
    runs: &[RunSpec],
    train_fraction: f64,
    t_max: f64,
) -> Result<(AccuracyReport, Vec<RunOutcome>), ExperimentError> {
    if patches.is_empty() {
        return Err(ExperimentError::NoPatches);
    }
    if runs.is_empty() {
        return Err(ExperimentError::NoRuns);
    }
    let mut distinct_flavors: Vec<u8> = patches.iter().map(|p| p.flavor_id).collect();
    distinct_flavors.sort_unstable();
    distinct_flavors.dedup();
    if distinct_flavors.len() < 2 {
        return Err(ExperimentError::NeedTwoFlavors);
    }
    let mut ids: Vec<&str> = runs.iter().map(|r| r.run_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(dup) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(ExperimentError::DuplicateRunId(dup[0].to_owned()));
    }
    if let Some(bad) = runs.iter().find(|r| r.cfg.phase != Phase::Finetune) {
        return Err(ExperimentError::WrongPhase { run_id: bad.run_id.clone() });
    }

    let mut report_runs = Vec::with_capacity(runs.len());
    let mut outcomes = Vec::with_capacity(runs.len());
    for run in runs {
        let wrap = |source: AutoencoderError| ExperimentError::Run { run_id: run.run_id.clone(), source };
        let split = split_dataset(patches, train_fraction, seeds::derive(run.seed, SPLIT_SALT))?;
        let mut net = pretrained.clone();
        net.reinit_head(seeds::derive(run.seed, HEAD_SALT));
        let (inputs, labels) = patches_to_inputs(patches, &split.train, t_max)?;
        let (net, history) = train(net, &inputs, Some(&labels), &run.cfg).map_err(wrap)?;
        let groups = evaluate_subset(&net, patches, &split.test, flavor_names, t_max)?;
        report_runs.push(RunGroups { run_id: run.run_id.clone(), groups });
        outcomes.push(RunOutcome { run_id: run.run_id.clone(), net, history });
    }
    report_runs.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    outcomes.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    Ok((AccuracyReport { runs: report_runs }, outcomes))
}
