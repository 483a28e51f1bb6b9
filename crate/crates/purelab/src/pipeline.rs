//! Stage orchestration over an on-disk artifact tree.
//!
//! Every command reads its inputs from the output directory of the previous
//! stage, so stages can run standalone or composed by [`Pipeline::cmd_run`]:
//!
//! ```text
//! <out>/
//!   raw/<flavor>_f<pct>/{normal,dark,white}.praw + meta.csv
//!   transmittance/<flavor>_f<pct>/t.praw [+ mask.bin] + meta.csv
//!   patches/patches.bin          classification patches (classify flavors)
//!   corpus/corpus.bin            reflectance-like pretraining patches
//!   net/pretrained.net, pretrain_loss.csv,
//!       finetuned_<run>.net, finetune_loss_<run>.csv
//!   report/report.csv, summary.csv, counts.csv
//!   analysis/distributions.csv, lnorm_ab.csv,
//!            map_<label>_ch<k>.csv, profile_<label>_ch<k>.csv
//! ```
//!
//! All artifacts are byte-deterministic given config and seeds: floats are
//! serialized with the shortest round-trip form (or fixed 9-significant-digit
//! scientific notation where the CSV schema pins it), and every directory
//! iteration is sorted.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::autoencoder::checkpoint::{load_network, save_network};
use crate::autoencoder::train::{train, EpochLoss};
use crate::autoencoder::NetworkParams;
use crate::colorspace::{l_normalized_ab, lab_distribution, srgb_to_lab_batch, LabDistribution, NormalizedAb};
use crate::config::{Config, N_CLASSES};
use crate::experiment::{
    evaluate_subset, patches_to_inputs, run_protocol, split_dataset, AccuracyReport, RunGroups,
    RunOutcome, SPLIT_SALT,
};
use crate::imaging::files::{
    read_mask, read_patches, read_praw, write_mask, write_patches, write_praw,
};
use crate::imaging::{
    center_roi, extract_patches, normalize, transmittance_map, AcquisitionStack, Patch, RawImage,
    StackLabel, TransmittanceImage, PATCH_LEN,
};
use crate::photonics::{simulate_acquisition, NoiseSpec};
use crate::seeds;

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Config or input-set problems knowable before work starts; exit code 2.
    #[error("{0}")]
    Validation(String),
    /// A stage failed mid-flight; exit code 1.
    #[error("stage {stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::Validation(_) => 2,
            PipelineError::Stage { .. } => 1,
        }
    }
}

fn fail<E: std::fmt::Display>(stage: &'static str, e: E) -> PipelineError {
    PipelineError::Stage { stage, message: e.to_string() }
}

/// Formats a float with 9 significant digits, the distribution-CSV contract.
fn fmt9(v: f64) -> String {
    format!("{v:.8e}")
}

pub struct Pipeline {
    cfg: Config,
    out: PathBuf,
    quiet: bool,
}

struct LoadedTransmittance {
    image: TransmittanceImage,
    label: StackLabel,
    mm_per_pixel: f64,
}

impl Pipeline {
    /// Binds a validated config to an output directory, creating it (the
    /// config's `output.dir` unless overridden). An uncreatable or unwritable
    /// output directory is a validation failure.
    pub fn new(cfg: Config, out_override: Option<PathBuf>, quiet: bool) -> Result<Self, PipelineError> {
        let out = out_override.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
        fs::create_dir_all(&out)
            .map_err(|e| PipelineError::Validation(format!("cannot create {}: {e}", out.display())))?;
        let probe = out.join(".write_probe");
        fs::write(&probe, b"")
            .map_err(|e| PipelineError::Validation(format!("{} not writable: {e}", out.display())))?;
        let _ = fs::remove_file(&probe);
        Ok(Self { cfg, out, quiet })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    fn log(&self, line: String) {
        if !self.quiet {
            println!("{line}");
        }
    }

    fn flavor_names(&self) -> BTreeMap<u8, String> {
        self.cfg
            .flavors
            .iter()
            .enumerate()
            .map(|(i, f)| (i as u8, f.name.clone()))
            .collect()
    }

    fn require_two_classify_flavors(&self) -> Result<(), PipelineError> {
        if self.cfg.classify_flavor_indices().len() < 2 {
            return Err(PipelineError::Validation(
                "the fine-tuning protocol needs at least two flavors with classify = true".into(),
            ));
        }
        Ok(())
    }

    // ---- simulate ----------------------------------------------------

    /// Synthesizes one acquisition stack per flavor/fraction under `raw/`.
    pub fn cmd_simulate(&self) -> Result<(), PipelineError> {
        const STAGE: &str = "simulate";
        let t0 = Instant::now();
        let geom = self.cfg.geometry().map_err(|e| fail(STAGE, e))?;
        let illum = self.cfg.illumination().map_err(|e| fail(STAGE, e))?;
        let mut count = 0;
        for i in 0..self.cfg.flavors.len() {
            let series = self.cfg.series(i).map_err(|e| fail(STAGE, e))?;
            let noise = NoiseSpec::new(
                self.cfg.noise.sigma_read,
                seeds::derive(self.cfg.seeds.simulate, i as u64),
            )
            .map_err(|e| fail(STAGE, e))?;
            let stacks = simulate_acquisition(&series, &geom, &illum, &noise).map_err(|e| fail(STAGE, e))?;
            for stack in &stacks {
                self.write_stack(stack).map_err(|e| fail(STAGE, e))?;
                count += 1;
            }
        }
        self.log(format!(
            "simulate: {count} stacks -> {} ({:.2?})",
            self.out.join("raw").display(),
            t0.elapsed()
        ));
        Ok(())
    }

    fn write_stack(&self, stack: &AcquisitionStack) -> Result<(), String> {
        let dir = self.out.join("raw").join(stack.label.dir_name());
        fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        let (w, h) = (stack.normal.width(), stack.normal.height());
        write_praw(&dir.join("normal.praw"), w, h, stack.normal.data(), stack.tau1_ms)
            .map_err(|e| e.to_string())?;
        write_praw(&dir.join("dark.praw"), w, h, stack.dark.data(), stack.tau1_ms)
            .map_err(|e| e.to_string())?;
        write_praw(&dir.join("white.praw"), w, h, stack.white.data(), stack.tau2_ms)
            .map_err(|e| e.to_string())?;
        let meta = format!(
            "flavor,flavor_id,fraction,class,tau1_ms,tau2_ms,mm_per_pixel\n{},{},{},{},{},{},{}\n",
            stack.label.flavor,
            stack.label.flavor_id,
            stack.label.fraction,
            stack.label.class,
            stack.tau1_ms,
            stack.tau2_ms,
            stack.mm_per_pixel
        );
        fs::write(dir.join("meta.csv"), meta).map_err(|e| e.to_string())
    }

    fn sorted_subdirs(&self, parent: &Path) -> Result<Vec<PathBuf>, String> {
        let mut dirs = Vec::new();
        let entries = fs::read_dir(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
        for entry in entries {
            let entry = entry.map_err(|e| e.to_string())?;
            if entry.path().is_dir() {
                dirs.push(entry.path());
            }
        }
        dirs.sort();
        Ok(dirs)
    }

    fn read_meta(path: &Path) -> Result<BTreeMap<String, String>, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut lines = text.lines();
        let (header, values) = match (lines.next(), lines.next()) {
            (Some(h), Some(v)) => (h, v),
            _ => return Err(format!("{}: expected a header and a value line", path.display())),
        };
        let keys: Vec<&str> = header.split(',').collect();
        let vals: Vec<&str> = values.split(',').collect();
        if keys.len() != vals.len() {
            return Err(format!("{}: header/value column mismatch", path.display()));
        }
        Ok(keys.iter().zip(vals).map(|(k, v)| (k.to_string(), v.to_string())).collect())
    }

    fn meta_field<T: std::str::FromStr>(
        meta: &BTreeMap<String, String>,
        key: &str,
        path: &Path,
    ) -> Result<T, String> {
        meta.get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format!("{}: missing or invalid field {key}", path.display()))
    }

    fn load_stacks(&self) -> Result<Vec<AcquisitionStack>, String> {
        let raw = self.out.join("raw");
        if !raw.is_dir() {
            return Err(format!("{} not found; run the simulate stage first", raw.display()));
        }
        let mut stacks = Vec::new();
        for dir in self.sorted_subdirs(&raw)? {
            let meta_path = dir.join("meta.csv");
            let meta = Self::read_meta(&meta_path)?;
            let label = StackLabel {
                flavor: Self::meta_field(&meta, "flavor", &meta_path)?,
                flavor_id: Self::meta_field(&meta, "flavor_id", &meta_path)?,
                fraction: Self::meta_field(&meta, "fraction", &meta_path)?,
                class: Self::meta_field(&meta, "class", &meta_path)?,
            };
            let tau1_ms: f64 = Self::meta_field(&meta, "tau1_ms", &meta_path)?;
            let tau2_ms: f64 = Self::meta_field(&meta, "tau2_ms", &meta_path)?;
            let mm_per_pixel: f64 = Self::meta_field(&meta, "mm_per_pixel", &meta_path)?;
            let mut frames = Vec::with_capacity(3);
            for name in ["normal.praw", "dark.praw", "white.praw"] {
                let praw = read_praw(&dir.join(name)).map_err(|e| e.to_string())?;
                frames.push(
                    RawImage::new(praw.width, praw.height, praw.data).map_err(|e| e.to_string())?,
                );
            }
            let white = frames.pop().unwrap();
            let dark = frames.pop().unwrap();
            let normal = frames.pop().unwrap();
            stacks.push(
                AcquisitionStack::new(normal, dark, white, tau1_ms, tau2_ms, mm_per_pixel, label)
                    .map_err(|e| e.to_string())?,
            );
        }
        if stacks.is_empty() {
            return Err(format!("no acquisition stacks under {}", raw.display()));
        }
        Ok(stacks)
    }

    // ---- normalize ---------------------------------------------------

    /// Converts every raw stack into a transmittance image with validity mask.
    pub fn cmd_normalize(&self) -> Result<(), PipelineError> {
        const STAGE: &str = "normalize";
        let t0 = Instant::now();
        let stacks = self.load_stacks().map_err(|e| fail(STAGE, e))?;
        let count = stacks.len();
        for stack in &stacks {
            let out = normalize(stack, self.cfg.normalize.denom_eps, self.cfg.normalize.t_max)
                .map_err(|e| fail(STAGE, e))?;
            if out.mask_warning {
                eprintln!(
                    "warning: {} has {:.1}% of pixels masked",
                    stack.label.dir_name(),
                    out.masked_fraction * 100.0
                );
            }
            let dir = self.out.join("transmittance").join(stack.label.dir_name());
            fs::create_dir_all(&dir).map_err(|e| fail(STAGE, format!("{}: {e}", dir.display())))?;
            let img = &out.image;
            write_praw(&dir.join("t.praw"), img.width(), img.height(), img.data(), 1.0)
                .map_err(|e| fail(STAGE, e))?;
            if out.masked_fraction > 0.0 {
                let mask: Vec<bool> = (0..img.height())
                    .flat_map(|y| (0..img.width()).map(move |x| (x, y)))
                    .map(|(x, y)| img.valid(x, y))
                    .collect();
                write_mask(&dir.join("mask.bin"), img.width(), img.height(), &mask).map_err(|e| fail(STAGE, e))?;
            }
            let meta = format!(
                "flavor,flavor_id,fraction,class,mm_per_pixel,masked_fraction\n{},{},{},{},{},{}\n",
                stack.label.flavor,
                stack.label.flavor_id,
                stack.label.fraction,
                stack.label.class,
                stack.mm_per_pixel,
                out.masked_fraction
            );
            fs::write(dir.join("meta.csv"), meta).map_err(|e| fail(STAGE, format!("{}: {e}", dir.display())))?;
        }
        self.log(format!(
            "normalize: {count} images -> {} ({:.2?})",
            self.out.join("transmittance").display(),
            t0.elapsed()
        ));
        Ok(())
    }

    fn load_transmittance(&self) -> Result<Vec<LoadedTransmittance>, String> {
        let root = self.out.join("transmittance");
        if !root.is_dir() {
            return Err(format!("{} not found; run the normalize stage first", root.display()));
        }
        let mut loaded = Vec::new();
        for dir in self.sorted_subdirs(&root)? {
            let meta_path = dir.join("meta.csv");
            let meta = Self::read_meta(&meta_path)?;
            let label = StackLabel {
                flavor: Self::meta_field(&meta, "flavor", &meta_path)?,
                flavor_id: Self::meta_field(&meta, "flavor_id", &meta_path)?,
                fraction: Self::meta_field(&meta, "fraction", &meta_path)?,
                class: Self::meta_field(&meta, "class", &meta_path)?,
            };
            let mm_per_pixel: f64 = Self::meta_field(&meta, "mm_per_pixel", &meta_path)?;
            let praw = read_praw(&dir.join("t.praw")).map_err(|e| e.to_string())?;
            let mask_path = dir.join("mask.bin");
            let mask = if mask_path.exists() {
                let (mw, mh, mask) = read_mask(&mask_path).map_err(|e| e.to_string())?;
                if (mw, mh) != (praw.width, praw.height) {
                    return Err(format!("{}: mask dims disagree with image", mask_path.display()));
                }
                mask
            } else {
                vec![true; praw.width * praw.height]
            };
            let image = TransmittanceImage::from_parts(praw.width, praw.height, praw.data, mask)
                .map_err(|e| e.to_string())?;
            loaded.push(LoadedTransmittance { image, label, mm_per_pixel });
        }
        if loaded.is_empty() {
            return Err(format!("no transmittance images under {}", root.display()));
        }
        // Stable protocol order regardless of flavor naming.
        loaded.sort_by_key(|t| (t.label.flavor_id, t.label.class));
        Ok(loaded)
    }

    // ---- patch -------------------------------------------------------

    /// Samples classification patches (classify flavors, transmittance
    /// values) and the pretraining corpus (all flavors, reflectance-like
    /// `1 - T`) from each image's central ROI.
    pub fn cmd_patch(&self) -> Result<(), PipelineError> {
        const STAGE: &str = "patch";
        let t0 = Instant::now();
        let classify_ids: Vec<u8> =
            self.cfg.classify_flavor_indices().iter().map(|&i| i as u8).collect();
        if classify_ids.is_empty() {
            return Err(PipelineError::Validation(
                "no flavors have classify = true; nothing to patch".into(),
            ));
        }
        let loaded = self.load_transmittance().map_err(|e| fail(STAGE, e))?;
        let roi_mm = (self.cfg.geometry.roi_mm[0], self.cfg.geometry.roi_mm[1]);
        let per_stack = self.cfg.patches.per_stack;

        let mut class_patches = Vec::new();
        let mut corpus_patches = Vec::new();
        for item in &loaded {
            let roi = center_roi(&item.image, roi_mm, item.mm_per_pixel).map_err(|e| fail(STAGE, e))?;
            let ordinal = item.label.flavor_id as u64 * N_CLASSES as u64 + item.label.class as u64;
            if classify_ids.contains(&item.label.flavor_id) {
                let seed = seeds::derive(self.cfg.seeds.patch, ordinal);
                class_patches
                    .extend(extract_patches(&roi, per_stack, &item.label, seed).map_err(|e| fail(STAGE, e))?);
            }
            // Reflectance-like view: R = 1 - T on valid pixels, clamped to [0, 1].
            let mut data = Vec::with_capacity(roi.width() * roi.height() * crate::imaging::CHANNELS);
            let mut mask = Vec::with_capacity(roi.width() * roi.height());
            for y in 0..roi.height() {
                for x in 0..roi.width() {
                    mask.push(roi.valid(x, y));
                    for ch in 0..crate::imaging::CHANNELS {
                        data.push(if roi.valid(x, y) {
                            (1.0 - roi.get(x, y, ch)).clamp(0.0, 1.0)
                        } else {
                            0.0
                        });
                    }
                }
            }
            let reflectance =
                TransmittanceImage::from_parts(roi.width(), roi.height(), data, mask).map_err(|e| fail(STAGE, e))?;
            let seed = seeds::derive(self.cfg.seeds.corpus, ordinal);
            corpus_patches
                .extend(extract_patches(&reflectance, per_stack, &item.label, seed).map_err(|e| fail(STAGE, e))?);
        }

        let patch_dir = self.out.join("patches");
        fs::create_dir_all(&patch_dir).map_err(|e| fail(STAGE, format!("{}: {e}", patch_dir.display())))?;
        write_patches(&patch_dir.join("patches.bin"), &class_patches).map_err(|e| fail(STAGE, e))?;
        let corpus_dir = self.out.join("corpus");
        fs::create_dir_all(&corpus_dir).map_err(|e| fail(STAGE, format!("{}: {e}", corpus_dir.display())))?;
        write_patches(&corpus_dir.join("corpus.bin"), &corpus_patches).map_err(|e| fail(STAGE, e))?;
        self.log(format!(
            "patch: {} classification + {} corpus patches ({:.2?})",
            class_patches.len(),
            corpus_patches.len(),
            t0.elapsed()
        ));
        Ok(())
    }

    // ---- pretrain ----------------------------------------------------

    /// Reconstruction-pretrains a fresh network on the corpus patches.
    pub fn cmd_pretrain(&self) -> Result<(), PipelineError> {
        const STAGE: &str = "pretrain";
        let t0 = Instant::now();
        let corpus_path = self.out.join("corpus").join("corpus.bin");
        if !corpus_path.exists() {
            return Err(fail(STAGE, format!(
                "{} not found; run the patch stage first",
                corpus_path.display()
            )));
        }
        let corpus = read_patches(&corpus_path).map_err(|e| fail(STAGE, e))?;
        let indices: Vec<usize> = (0..corpus.len()).collect();
        let (inputs, _) =
            patches_to_inputs(&corpus, &indices, self.cfg.normalize.t_max).map_err(|e| fail(STAGE, e))?;
        let net = NetworkParams::new_seeded(
            PATCH_LEN,
            &self.cfg.network.encoder_dims,
            N_CLASSES,
            self.cfg.seeds.pretrain,
        )
        .map_err(|e| fail(STAGE, e))?;
        let (net, history) = train(net, &inputs, None, &self.cfg.pretrain_cfg()).map_err(|e| fail(STAGE, e))?;

        let net_dir = self.out.join("net");
        fs::create_dir_all(&net_dir).map_err(|e| fail(STAGE, format!("{}: {e}", net_dir.display())))?;
        save_network(&net_dir.join("pretrained.net"), &net).map_err(|e| fail(STAGE, e))?;
        self.write_loss_csv(&net_dir.join("pretrain_loss.csv"), &history).map_err(|e| fail(STAGE, e))?;
        self.log(format!(
            "pretrain: {} patches, {} epochs, final loss {:.6} ({:.2?})",
            corpus.len(),
            history.len(),
            history.last().map(|e| e.loss).unwrap_or(f64::NAN),
            t0.elapsed()
        ));
        Ok(())
    }

    fn write_loss_csv(&self, path: &Path, history: &[EpochLoss]) -> Result<(), String> {
        let mut text = String::from("epoch,phase,loss\n");
        for e in history {
            let _ = writeln!(text, "{},{},{}", e.epoch, e.phase, e.loss);
        }
        fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
    }

    // ---- finetune ----------------------------------------------------

    /// Runs the full fine-tuning protocol from the pretrained checkpoint and
    /// writes per-run networks, loss histories, and the accuracy report.
    pub fn cmd_finetune(&self) -> Result<(), PipelineError> {
        const STAGE: &str = "finetune";
        let t0 = Instant::now();
        self.require_two_classify_flavors()?;
        let patches = self.read_class_patches().map_err(|e| fail(STAGE, e))?;
        let pretrained_path = self.out.join("net").join("pretrained.net");
        if !pretrained_path.exists() {
            return Err(fail(STAGE, format!(
                "{} not found; run the pretrain stage first",
                pretrained_path.display()
            )));
        }
        let pretrained = load_network(&pretrained_path).map_err(|e| fail(STAGE, e))?;
        let (report, outcomes) = run_protocol(
            &patches,
            &self.flavor_names(),
            &pretrained,
            &self.cfg.run_specs(),
            self.cfg.split.train_fraction,
            self.cfg.normalize.t_max,
        )
        .map_err(|e| fail(STAGE, e))?;

        let net_dir = self.out.join("net");
        fs::create_dir_all(&net_dir).map_err(|e| fail(STAGE, format!("{}: {e}", net_dir.display())))?;
        for RunOutcome { run_id, net, history } in &outcomes {
            save_network(&net_dir.join(format!("finetuned_{run_id}.net")), net).map_err(|e| fail(STAGE, e))?;
            self.write_loss_csv(&net_dir.join(format!("finetune_loss_{run_id}.csv")), history)
                .map_err(|e| fail(STAGE, e))?;
        }
        self.write_report(&report).map_err(|e| fail(STAGE, e))?;
        self.log(format!("finetune: {} runs ({:.2?})", report.runs.len(), t0.elapsed()));
        self.print_table(&report);
        Ok(())
    }

    fn read_class_patches(&self) -> Result<Vec<Patch>, String> {
        let path = self.out.join("patches").join("patches.bin");
        if !path.exists() {
            return Err(format!("{} not found; run the patch stage first", path.display()));
        }
        read_patches(&path).map_err(|e| e.to_string())
    }

    fn write_report(&self, report: &AccuracyReport) -> Result<(), String> {
        let dir = self.out.join("report");
        fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;

        let mut rows = String::from("run_id,group,accuracy_percent\n");
        let mut counts = String::from("run_id,group,correct,total\n");
        for run in &report.runs {
            for g in &run.groups {
                let _ = writeln!(rows, "{},{},{}", run.run_id, g.group, g.percent());
                let _ = writeln!(counts, "{},{},{},{}", run.run_id, g.group, g.correct, g.total);
            }
        }
        fs::write(dir.join("report.csv"), rows).map_err(|e| e.to_string())?;
        fs::write(dir.join("counts.csv"), counts).map_err(|e| e.to_string())?;

        let mut summary = String::from("group,mean,std,max,n_runs\n");
        for s in report.summary() {
            let _ = writeln!(summary, "{},{},{},{},{}", s.group, s.mean, s.std, s.max, s.n_runs);
        }
        fs::write(dir.join("summary.csv"), summary).map_err(|e| e.to_string())
    }

    /// Prints the accuracy table: one row per run, then mean/std/max rows,
    /// whole percents (half away from zero).
    fn print_table(&self, report: &AccuracyReport) {
        let groups = report.group_names();
        if groups.is_empty() {
            return;
        }
        let id_width = report
            .runs
            .iter()
            .map(|r| r.run_id.len())
            .chain(["run".len(), "mean".len()])
            .max()
            .unwrap()
            .max(4);
        let pct = |v: f64| v.round() as i64;

        let mut header = format!("{:<id_width$}", "run");
        for g in &groups {
            let _ = write!(header, "  {g:>9}");
        }
        println!("{header}");
        for run in &report.runs {
            let mut line = format!("{:<id_width$}", run.run_id);
            for g in &run.groups {
                let _ = write!(line, "  {:>9}", pct(g.percent()));
            }
            println!("{line}");
        }
        type StatRow = (&'static str, fn(&crate::experiment::GroupSummary) -> f64);
        let summary = report.summary();
        let stat_rows: [StatRow; 3] =
            [("mean", |s| s.mean), ("std", |s| s.std), ("max", |s| s.max)];
        for (name, value) in stat_rows {
            let mut line = format!("{name:<id_width$}");
            for s in &summary {
                let _ = write!(line, "  {:>9}", pct(value(s)));
            }
            println!("{line}");
        }
    }

    // ---- eval --------------------------------------------------------

    /// Re-scores saved fine-tuned networks on their runs' test splits and
    /// rewrites the report files, without retraining.
    pub fn cmd_eval(&self) -> Result<(), PipelineError> {
        const STAGE: &str = "eval";
        let t0 = Instant::now();
        self.require_two_classify_flavors()?;
        let patches = self.read_class_patches().map_err(|e| fail(STAGE, e))?;
        let names = self.flavor_names();
        let mut runs = Vec::new();
        for spec in self.cfg.run_specs() {
            let net_path = self.out.join("net").join(format!("finetuned_{}.net", spec.run_id));
            if !net_path.exists() {
                return Err(fail(STAGE, format!(
                    "{} not found; run the finetune stage first",
                    net_path.display()
                )));
            }
            let net = load_network(&net_path).map_err(|e| fail(STAGE, e))?;
            let split = split_dataset(
                &patches,
                self.cfg.split.train_fraction,
                seeds::derive(spec.seed, SPLIT_SALT),
            )
            .map_err(|e| fail(STAGE, e))?;
            let groups = evaluate_subset(&net, &patches, &split.test, &names, self.cfg.normalize.t_max)
                .map_err(|e| fail(STAGE, e))?;
            runs.push(RunGroups { run_id: spec.run_id, groups });
        }
        runs.sort_by(|a, b| a.run_id.cmp(&b.run_id));
        let report = AccuracyReport { runs };
        self.write_report(&report).map_err(|e| fail(STAGE, e))?;
        self.log(format!("eval: {} runs ({:.2?})", report.runs.len(), t0.elapsed()));
        self.print_table(&report);
        Ok(())
    }

    // ---- analyze -----------------------------------------------------

    /// CIELAB distributions and percent-transmittance maps for every
    /// transmittance image's central ROI.
    pub fn cmd_analyze(&self) -> Result<(), PipelineError> {
        const STAGE: &str = "analyze";
        let t0 = Instant::now();
        let root = self.out.join("transmittance");
        if !root.is_dir() || self.sorted_subdirs(&root).map_err(|e| fail(STAGE, e))?.is_empty() {
            return Err(PipelineError::Validation(format!(
                "no transmittance inputs under {}; run the normalize stage first",
                root.display()
            )));
        }
        let loaded = self.load_transmittance().map_err(|e| fail(STAGE, e))?;
        let mut items: Vec<&LoadedTransmittance> = loaded.iter().collect();
        items.sort_by_key(|t| t.label.dir_name());
        let roi_mm = (self.cfg.geometry.roi_mm[0], self.cfg.geometry.roi_mm[1]);
        let channel = self.cfg.analyze.channel;

        let dir = self.out.join("analysis");
        fs::create_dir_all(&dir).map_err(|e| fail(STAGE, format!("{}: {e}", dir.display())))?;
        let mut dist_csv =
            String::from("label,n,mean_L,mean_a,mean_b,cov_LL,cov_La,cov_Lb,cov_aa,cov_ab,cov_bb\n");
        let mut lnorm_csv = String::from("label,n,a_over_L,b_over_L,cov_aa,cov_ab,cov_bb\n");

        for item in items {
            let label = item.label.dir_name();
            let roi = center_roi(&item.image, roi_mm, item.mm_per_pixel).map_err(|e| fail(STAGE, e))?;
            // Clamped transmittance triplets double as encoded sRGB.
            let pixels: Vec<[f64; 3]> = (0..roi.height())
                .flat_map(|y| (0..roi.width()).map(move |x| (x, y)))
                .filter(|&(x, y)| roi.valid(x, y))
                .map(|(x, y)| {
                    [
                        roi.get(x, y, 0).clamp(0.0, 1.0),
                        roi.get(x, y, 1).clamp(0.0, 1.0),
                        roi.get(x, y, 2).clamp(0.0, 1.0),
                    ]
                })
                .collect();
            let labs = srgb_to_lab_batch(&pixels).map_err(|e| fail(STAGE, e))?;
            let dist = lab_distribution(&labs, &label).map_err(|e| fail(STAGE, e))?;
            self.push_distribution_row(&mut dist_csv, &dist);
            let lnorm = l_normalized_ab(&dist).map_err(|e| fail(STAGE, e))?;
            self.push_lnorm_row(&mut lnorm_csv, &label, dist.n, &lnorm);

            let map = transmittance_map(&roi, channel).map_err(|e| fail(STAGE, e))?;
            let mut grid = String::new();
            for y in 0..map.height {
                let row: Vec<String> = (0..map.width)
                    .map(|x| {
                        let v = map.percent[y * map.width + x];
                        if v.is_nan() {
                            String::new()
                        } else {
                            v.to_string()
                        }
                    })
                    .collect();
                let _ = writeln!(grid, "{}", row.join(","));
            }
            let map_path = dir.join(format!("map_{label}_ch{channel}.csv"));
            fs::write(&map_path, grid).map_err(|e| fail(STAGE, format!("{}: {e}", map_path.display())))?;

            let mut profile = String::from("row,mean_percent\n");
            for (y, v) in map.profile.iter().enumerate() {
                if v.is_nan() {
                    let _ = writeln!(profile, "{y},");
                } else {
                    let _ = writeln!(profile, "{y},{v}");
                }
            }
            let profile_path = dir.join(format!("profile_{label}_ch{channel}.csv"));
            fs::write(&profile_path, profile)
                .map_err(|e| fail(STAGE, format!("{}: {e}", profile_path.display())))?;
        }

        fs::write(dir.join("distributions.csv"), dist_csv)
            .map_err(|e| fail(STAGE, format!("{}: {e}", dir.display())))?;
        fs::write(dir.join("lnorm_ab.csv"), lnorm_csv)
            .map_err(|e| fail(STAGE, format!("{}: {e}", dir.display())))?;
        self.log(format!(
            "analyze: {} images -> {} ({:.2?})",
            loaded.len(),
            dir.display(),
            t0.elapsed()
        ));
        Ok(())
    }

    fn push_distribution_row(&self, csv: &mut String, d: &LabDistribution) {
        let c = &d.covariance;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            d.label,
            d.n,
            fmt9(d.mean[0]),
            fmt9(d.mean[1]),
            fmt9(d.mean[2]),
            fmt9(c[0][0]),
            fmt9(c[0][1]),
            fmt9(c[0][2]),
            fmt9(c[1][1]),
            fmt9(c[1][2]),
            fmt9(c[2][2]),
        );
    }

    fn push_lnorm_row(&self, csv: &mut String, label: &str, n: usize, v: &NormalizedAb) {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            label,
            n,
            fmt9(v.a),
            fmt9(v.b),
            fmt9(v.covariance[0][0]),
            fmt9(v.covariance[0][1]),
            fmt9(v.covariance[1][1]),
        );
    }

    // ---- run ---------------------------------------------------------

    /// The full pipeline: simulate, normalize, patch, pretrain, finetune
    /// (which writes the report and prints the table), then analyze.
    pub fn cmd_run(&self) -> Result<(), PipelineError> {
        self.cmd_simulate()?;
        self.cmd_normalize()?;
        self.cmd_patch()?;
        self.cmd_pretrain()?;
        self.cmd_finetune()?;
        self.cmd_analyze()?;
        Ok(())
    }
}
