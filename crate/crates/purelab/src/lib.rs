//! Computational-imaging toolkit for dilution-series puree analysis.
//!
//! The crate covers the full loop: Beer-Lambert synthesis of raw acquisition
//! stacks ([`photonics`]), exposure-corrected transmittance normalization and
//! patch extraction ([`imaging`]), CIELAB colorimetry ([`colorspace`]), a
//! small pretrain/fine-tune autoencoder classifier ([`autoencoder`]), and the
//! multi-run accuracy protocol ([`experiment`]). [`pipeline`] wires the stages
//! to an on-disk artifact layout; [`config`] parses the TOML that drives it.
//!
//! Heavy kernels are data-parallel with rayon when the default `parallel`
//! feature is on, and fall back to sequential loops when it is off. Both paths
//! produce bit-identical output; `benches/parallel.rs` compares them.

pub mod autoencoder;
pub mod colorspace;
pub mod config;
pub mod experiment;
pub mod imaging;
pub mod photonics;
pub mod pipeline;
pub mod seeds;
