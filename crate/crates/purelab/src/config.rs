//! TOML run configuration: schema, strict parsing, validation, and
//! conversion into the domain types the pipeline stages consume.
//!
//! The schema is versioned (`version = 1`) and closed: unknown keys are
//! parse errors. Every random decision in the pipeline flows from the
//! explicit `[seeds]` table and per-run seeds; there are no wall-clock or
//! entropy defaults. A `--seed` master override rewrites all of them
//! through the deterministic seed-derivation function.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::autoencoder::train::{Phase, TrainConfig};
use crate::experiment::{RunSpec, SHUFFLE_SALT};
use crate::photonics::{
    ChromophoreTerm, DilutionSeries, Geometry, Illumination, NoiseSpec, OpticalMedium,
};
use crate::seeds;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("config invalid: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    pub output: OutputSection,
    pub geometry: GeometrySection,
    pub illumination: IlluminationSection,
    pub noise: NoiseSection,
    #[serde(default)]
    pub normalize: NormalizeSection,
    pub dilution: DilutionSection,
    pub flavors: Vec<FlavorSection>,
    pub patches: PatchSection,
    pub network: NetworkSection,
    pub pretrain: TrainSection,
    pub finetune: TrainSection,
    pub split: SplitSection,
    #[serde(default)]
    pub analyze: AnalyzeSection,
    pub seeds: SeedsSection,
    pub runs: Vec<RunSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub width: usize,
    pub height: usize,
    pub mm_per_pixel: f64,
    /// Central region analyzed and patched, [width_mm, height_mm].
    pub roi_mm: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlluminationSection {
    pub white_level: f64,
    pub dark_level: f64,
    pub tau1_ms: f64,
    pub tau2_ms: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma_read: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizeSection {
    #[serde(default = "default_denom_eps")]
    pub denom_eps: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
}

fn default_denom_eps() -> f64 {
    1e-6
}

fn default_t_max() -> f64 {
    2.0
}

impl Default for NormalizeSection {
    fn default() -> Self {
        Self { denom_eps: default_denom_eps(), t_max: default_t_max() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DilutionSection {
    pub fractions: Vec<f64>,
    pub diluent: String,
    pub diluent_pure_concentration: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlavorSection {
    pub name: String,
    /// Whether this flavor's patches enter the classification dataset.
    #[serde(default = "default_true")]
    pub classify: bool,
    pub terms: Vec<TermSection>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSection {
    pub name: String,
    pub extinction: [f64; 3],
    pub concentration: f64,
    pub path_length_mm: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSection {
    pub per_stack: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub encoder_dims: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeSection {
    /// Channel for transmittance map export: 0 = R, 1 = G, 2 = B.
    #[serde(default)]
    pub channel: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsSection {
    pub simulate: u64,
    pub corpus: u64,
    pub patch: u64,
    pub pretrain: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub id: String,
    pub seed: u64,
}

/// Number of dilution classes: one per configured fraction.
pub const N_CLASSES: usize = 5;

impl Config {
    /// Reads, parses, and validates a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let cfg: Config = toml::from_str(&text)
            .map_err(|e| ConfigError::Parse { path: path.display().to_string(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replaces every seed with one derived from `master`, so a single flag
    /// reproducibly re-keys the whole pipeline.
    pub fn override_master_seed(&mut self, master: u64) {
        self.seeds.simulate = seeds::derive(master, 1);
        self.seeds.corpus = seeds::derive(master, 2);
        self.seeds.patch = seeds::derive(master, 3);
        self.seeds.pretrain = seeds::derive(master, 4);
        for (i, run) in self.runs.iter_mut().enumerate() {
            run.seed = seeds::derive(master, 100 + i as u64);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Validation(msg));
        if self.version != 1 {
            return bad(format!("unsupported config version {}, expected 1", self.version));
        }
        if self.output.dir.is_empty() {
            return bad("output.dir must not be empty".into());
        }

        // Domain constructors own the numeric rules; surface their errors.
        let geom = self.geometry().map_err(|e| ConfigError::Validation(e.to_string()))?;
        self.illumination().map_err(|e| ConfigError::Validation(e.to_string()))?;
        NoiseSpec::new(self.noise.sigma_read, 0).map_err(|e| ConfigError::Validation(e.to_string()))?;

        let [roi_w_mm, roi_h_mm] = self.geometry.roi_mm;
        if !(roi_w_mm.is_finite() && roi_w_mm > 0.0) || !(roi_h_mm.is_finite() && roi_h_mm > 0.0) {
            return bad("geometry.roi_mm components must be positive".into());
        }
        let roi_w = (roi_w_mm / geom.mm_per_pixel).floor() as usize;
        let roi_h = (roi_h_mm / geom.mm_per_pixel).floor() as usize;
        if roi_w > geom.width || roi_h > geom.height {
            return bad(format!(
                "ROI {roi_w}x{roi_h} px exceeds the {}x{} px image",
                geom.width, geom.height
            ));
        }
        if roi_w < crate::imaging::PATCH_WIDTH || roi_h < crate::imaging::PATCH_HEIGHT {
            return bad(format!(
                "ROI {roi_w}x{roi_h} px cannot hold a {}x{} patch",
                crate::imaging::PATCH_WIDTH,
                crate::imaging::PATCH_HEIGHT
            ));
        }

        if !(self.normalize.denom_eps.is_finite() && self.normalize.denom_eps > 0.0) {
            return bad("normalize.denom_eps must be finite and positive".into());
        }
        if !(self.normalize.t_max.is_finite() && self.normalize.t_max > 0.0) {
            return bad("normalize.t_max must be finite and positive".into());
        }

        if self.dilution.fractions.len() != N_CLASSES {
            return bad(format!(
                "dilution.fractions must list exactly {N_CLASSES} fractions, got {}",
                self.dilution.fractions.len()
            ));
        }
        if self.flavors.is_empty() {
            return bad("at least one [[flavors]] entry is required".into());
        }
        if self.flavors.len() > u8::MAX as usize {
            return bad("too many flavors".into());
        }
        let mut names: Vec<&str> = self.flavors.iter().map(|f| f.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("flavor names must be unique".into());
        }
        if self.flavors.iter().any(|f| f.name.is_empty() || f.name.contains(['/', '\\'])) {
            return bad("flavor names must be non-empty and free of path separators".into());
        }
        // Building each series exercises the full photonics validation:
        // term values, fraction monotonicity, diluent presence.
        for i in 0..self.flavors.len() {
            self.series(i).map_err(|e| {
                ConfigError::Validation(format!("flavor {:?}: {e}", self.flavors[i].name))
            })?;
        }

        if self.patches.per_stack < 5 {
            return bad("patches.per_stack must be at least 5 (the stratified-split minimum)".into());
        }
        if self.network.encoder_dims.is_empty() || self.network.encoder_dims.contains(&0) {
            return bad("network.encoder_dims must be non-empty positive dimensions".into());
        }
        self.pretrain_cfg()
            .validate()
            .map_err(|e| ConfigError::Validation(format!("pretrain: {e}")))?;
        self.run_specs()
            .first()
            .map(|r| r.cfg.validate())
            .transpose()
            .map_err(|e| ConfigError::Validation(format!("finetune: {e}")))?;

        let frac = self.split.train_fraction;
        if !frac.is_finite() || frac <= 0.0 || frac >= 1.0 {
            return bad("split.train_fraction must lie strictly between 0 and 1".into());
        }
        if self.analyze.channel >= crate::imaging::CHANNELS {
            return bad(format!("analyze.channel must be 0..=2, got {}", self.analyze.channel));
        }

        if self.runs.is_empty() {
            return bad("at least one [[runs]] entry is required".into());
        }
        let mut ids: Vec<&str> = self.runs.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("duplicate run id {:?}", w[0]));
        }
        if self.runs.iter().any(|r| r.id.is_empty() || r.id.contains(['/', '\\'])) {
            return bad("run ids must be non-empty and free of path separators".into());
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<Geometry, crate::photonics::PhotonicsError> {
        Geometry::new(self.geometry.width, self.geometry.height, self.geometry.mm_per_pixel)
    }

    pub fn illumination(&self) -> Result<Illumination, crate::photonics::PhotonicsError> {
        Illumination::new(
            self.illumination.white_level,
            self.illumination.dark_level,
            self.illumination.tau1_ms,
            self.illumination.tau2_ms,
        )
    }

    /// The dilution series for flavor index `i`; the flavor id is the index.
    pub fn series(&self, i: usize) -> Result<DilutionSeries, crate::photonics::PhotonicsError> {
        let flavor = &self.flavors[i];
        let terms = flavor
            .terms
            .iter()
            .map(|t| ChromophoreTerm::new(&t.name, t.extinction, t.concentration, t.path_length_mm))
            .collect::<Result<Vec<_>, _>>()?;
        DilutionSeries::new(
            OpticalMedium::new(terms)?,
            self.dilution.fractions.clone(),
            &flavor.name,
            i as u8,
            &self.dilution.diluent,
            self.dilution.diluent_pure_concentration,
        )
    }

    pub fn pretrain_cfg(&self) -> TrainConfig {
        TrainConfig {
            max_epochs: self.pretrain.max_epochs,
            batch_size: self.pretrain.batch_size,
            learning_rate: self.pretrain.learning_rate,
            seed: seeds::derive(self.seeds.pretrain, 1),
            phase: Phase::Pretrain,
        }
    }

    /// Run specs for the fine-tuning protocol; each run's shuffle seed is a
    /// salt of its own seed.
    pub fn run_specs(&self) -> Vec<RunSpec> {
        self.runs
            .iter()
            .map(|r| RunSpec {
                run_id: r.id.clone(),
                seed: r.seed,
                cfg: TrainConfig {
                    max_epochs: self.finetune.max_epochs,
                    batch_size: self.finetune.batch_size,
                    learning_rate: self.finetune.learning_rate,
                    seed: seeds::derive(r.seed, SHUFFLE_SALT),
                    phase: Phase::Finetune,
                },
            })
            .collect()
    }

    /// Indices of flavors that enter the classification dataset.
    pub fn classify_flavor_indices(&self) -> Vec<usize> {
        (0..self.flavors.len()).filter(|&i| self.flavors[i].classify).collect()
    }
}
