//! Beer-Lambert forward model for homogeneous puree media, dilution-series
//! construction, and synthesis of raw acquisition stacks.
//!
//! Transmittance per channel is `T = exp(-sum_i eps_i * c_i * l_i)` over the
//! medium's absorber terms. The simulator inverts the normalization:
//! `I = I_d + T * (I_w - I_d) * tau1 / tau2 + noise`, so normalizing a
//! zero-noise stack recovers T up to f64 rounding.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::imaging::{
    AcquisitionStack, ImagingError, RawImage, StackLabel, CHANNELS, PATCH_HEIGHT, PATCH_WIDTH,
};
use crate::seeds;

#[derive(Debug, Error)]
pub enum PhotonicsError {
    #[error("term {name}: extinction components must be finite and >= 0")]
    BadExtinction { name: String },
    #[error("term {name}: concentration must be finite and >= 0, got {value}")]
    BadConcentration { name: String, value: f64 },
    #[error("term {name}: path length must be positive, got {value}")]
    BadPathLength { name: String, value: f64 },
    #[error("a medium needs at least one absorber term")]
    EmptyMedium,
    #[error("dilution fraction {0} outside (0, 1]")]
    BadFraction(f64),
    #[error("diluent term {0:?} not present in the medium")]
    MissingDiluent(String),
    #[error("fractions must be non-empty, within (0, 1], and strictly monotone")]
    BadFractions,
    #[error("pure-diluent concentration must be finite and >= 0, got {0}")]
    BadPureConcentration(f64),
    #[error("read-noise sigma must be finite and >= 0, got {0}")]
    BadSigma(f64),
    #[error("image {width}x{height} is smaller than one {PATCH_WIDTH}x{PATCH_HEIGHT} patch")]
    BadGeometry { width: usize, height: usize },
    #[error("pixel pitch must be positive, got {0}")]
    BadPixelPitch(f64),
    #[error("illumination requires white > dark >= 0 and positive exposure times")]
    BadIllumination,
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// One absorber: per-channel extinction, relative concentration, path length.
#[derive(Debug, Clone, PartialEq)]
pub struct ChromophoreTerm {
    pub name: String,
    /// Per-channel extinction, 1/mm per unit relative concentration.
    pub extinction: [f64; 3],
    /// Relative concentration, dimensionless, >= 0.
    pub concentration: f64,
    /// Mean photon path length through this absorber, mm.
    pub path_length_mm: f64,
}

impl ChromophoreTerm {
    pub fn new(
        name: &str,
        extinction: [f64; 3],
        concentration: f64,
        path_length_mm: f64,
    ) -> Result<Self, PhotonicsError> {
        if extinction.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(PhotonicsError::BadExtinction { name: name.to_owned() });
        }
        if !concentration.is_finite() || concentration < 0.0 {
            return Err(PhotonicsError::BadConcentration { name: name.to_owned(), value: concentration });
        }
        if !path_length_mm.is_finite() || path_length_mm <= 0.0 {
            return Err(PhotonicsError::BadPathLength { name: name.to_owned(), value: path_length_mm });
        }
        Ok(Self { name: name.to_owned(), extinction, concentration, path_length_mm })
    }
}

/// A homogeneous medium: one or more absorber terms.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalMedium {
    terms: Vec<ChromophoreTerm>,
}

impl OpticalMedium {
    pub fn new(terms: Vec<ChromophoreTerm>) -> Result<Self, PhotonicsError> {
        if terms.is_empty() {
            return Err(PhotonicsError::EmptyMedium);
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[ChromophoreTerm] {
        &self.terms
    }

    pub fn term(&self, name: &str) -> Option<&ChromophoreTerm> {
        self.terms.iter().find(|t| t.name == name)
    }
}

/// A base medium sampled at a list of dilution fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct DilutionSeries {
    pub base: OpticalMedium,
    /// Relative concentration fractions, strictly monotone, in (0, 1].
    pub fractions: Vec<f64>,
    pub flavor: String,
    pub flavor_id: u8,
    /// Which term absorbs the displaced volume (water).
    pub diluent: String,
    /// Concentration of the pure diluent, used by the mixing rule.
    pub diluent_pure_concentration: f64,
}

impl DilutionSeries {
    pub fn new(
        base: OpticalMedium,
        fractions: Vec<f64>,
        flavor: &str,
        flavor_id: u8,
        diluent: &str,
        diluent_pure_concentration: f64,
    ) -> Result<Self, PhotonicsError> {
        let ok_values = !fractions.is_empty()
            && fractions.iter().all(|f| f.is_finite() && *f > 0.0 && *f <= 1.0);
        let increasing = fractions.windows(2).all(|w| w[0] < w[1]);
        let decreasing = fractions.windows(2).all(|w| w[0] > w[1]);
        if !ok_values || !(increasing || decreasing) {
            return Err(PhotonicsError::BadFractions);
        }
        if base.term(diluent).is_none() {
            return Err(PhotonicsError::MissingDiluent(diluent.to_owned()));
        }
        if !diluent_pure_concentration.is_finite() || diluent_pure_concentration < 0.0 {
            return Err(PhotonicsError::BadPureConcentration(diluent_pure_concentration));
        }
        Ok(Self {
            base,
            fractions,
            flavor: flavor.to_owned(),
            flavor_id,
            diluent: diluent.to_owned(),
            diluent_pure_concentration,
        })
    }
}

/// Additive Gaussian read noise on the normal image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma_read: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma_read: f64, seed: u64) -> Result<Self, PhotonicsError> {
        if !sigma_read.is_finite() || sigma_read < 0.0 {
            return Err(PhotonicsError::BadSigma(sigma_read));
        }
        Ok(Self { sigma_read, seed })
    }
}

/// Sensor geometry for synthesized acquisitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub width: usize,
    pub height: usize,
    pub mm_per_pixel: f64,
}

impl Geometry {
    pub fn new(width: usize, height: usize, mm_per_pixel: f64) -> Result<Self, PhotonicsError> {
        if width < PATCH_WIDTH || height < PATCH_HEIGHT {
            return Err(PhotonicsError::BadGeometry { width, height });
        }
        if !mm_per_pixel.is_finite() || mm_per_pixel <= 0.0 {
            return Err(PhotonicsError::BadPixelPitch(mm_per_pixel));
        }
        Ok(Self { width, height, mm_per_pixel })
    }
}

/// Flat-field illumination levels and exposure times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Illumination {
    pub white_level: f64,
    pub dark_level: f64,
    /// Exposure during normal acquisition, ms.
    pub tau1_ms: f64,
    /// Exposure during white acquisition, ms.
    pub tau2_ms: f64,
}

impl Illumination {
    pub fn new(
        white_level: f64,
        dark_level: f64,
        tau1_ms: f64,
        tau2_ms: f64,
    ) -> Result<Self, PhotonicsError> {
        let levels_ok = white_level.is_finite()
            && dark_level.is_finite()
            && dark_level >= 0.0
            && white_level > dark_level;
        let taus_ok = tau1_ms.is_finite() && tau1_ms > 0.0 && tau2_ms.is_finite() && tau2_ms > 0.0;
        if !levels_ok || !taus_ok {
            return Err(PhotonicsError::BadIllumination);
        }
        Ok(Self { white_level, dark_level, tau1_ms, tau2_ms })
    }
}

/// Per-channel transmittance of a medium: `exp(-sum eps * c * l)`.
///
/// Terms accumulate in their stored order, so the exponent is reproducible
/// bit-for-bit across calls.
pub fn transmittance(m: &OpticalMedium) -> [f64; 3] {
    let mut t = [0.0; 3];
    for (ch, out) in t.iter_mut().enumerate() {
        let mut exponent = 0.0;
        for term in &m.terms {
            exponent += term.extinction[ch] * term.concentration * term.path_length_mm;
        }
        *out = (-exponent).exp();
    }
    t
}

/// Dilutes a medium: non-diluent concentrations scale by `fraction`; the
/// diluent concentration follows the volume-conserving mixing rule
/// `c' = c * fraction + (1 - fraction) * pure_concentration`.
pub fn dilute(
    m: &OpticalMedium,
    fraction: f64,
    diluent: &str,
    pure_concentration: f64,
) -> Result<OpticalMedium, PhotonicsError> {
    if !fraction.is_finite() || fraction <= 0.0 || fraction > 1.0 {
        return Err(PhotonicsError::BadFraction(fraction));
    }
    if !pure_concentration.is_finite() || pure_concentration < 0.0 {
        return Err(PhotonicsError::BadPureConcentration(pure_concentration));
    }
    if m.term(diluent).is_none() {
        return Err(PhotonicsError::MissingDiluent(diluent.to_owned()));
    }
    let terms = m
        .terms
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.concentration = if t.name == diluent {
                t.concentration * fraction + (1.0 - fraction) * pure_concentration
            } else {
                t.concentration * fraction
            };
            t
        })
        .collect();
    OpticalMedium::new(terms)
}

/// Synthesizes one acquisition stack per fraction of the series.
///
/// Dark and white frames are clean flat references; Gaussian read noise is
/// added to the normal frame only, clamped at the sensor floor of zero.
/// Fully deterministic: fraction `k` uses seed `derive(noise.seed, k)` and
/// row `y` within it uses `derive(stack_seed, y)`, so the parallel build is
/// bit-identical to the sequential one.
pub fn simulate_acquisition(
    series: &DilutionSeries,
    geom: &Geometry,
    illum: &Illumination,
    noise: &NoiseSpec,
) -> Result<Vec<AcquisitionStack>, PhotonicsError> {
    simulate_impl(series, geom, illum, noise, cfg!(feature = "parallel"))
}

/// Sequential twin of [`simulate_acquisition`]; the benchmark baseline.
#[doc(hidden)]
pub fn simulate_acquisition_seq(
    series: &DilutionSeries,
    geom: &Geometry,
    illum: &Illumination,
    noise: &NoiseSpec,
) -> Result<Vec<AcquisitionStack>, PhotonicsError> {
    simulate_impl(series, geom, illum, noise, false)
}

fn simulate_impl(
    series: &DilutionSeries,
    geom: &Geometry,
    illum: &Illumination,
    noise: &NoiseSpec,
    parallel: bool,
) -> Result<Vec<AcquisitionStack>, PhotonicsError> {
    NoiseSpec::new(noise.sigma_read, noise.seed)?;
    let mut stacks = Vec::with_capacity(series.fractions.len());
    for (k, &fraction) in series.fractions.iter().enumerate() {
        let medium = dilute(&series.base, fraction, &series.diluent, series.diluent_pure_concentration)?;
        let t = transmittance(&medium);
        let stack_seed = seeds::derive(noise.seed, k as u64);
        let signal: [f64; 3] = std::array::from_fn(|ch| {
            illum.dark_level + t[ch] * (illum.white_level - illum.dark_level) * illum.tau1_ms / illum.tau2_ms
        });
        let normal = synth_normal(geom, signal, noise.sigma_read, stack_seed, parallel);
        let label = StackLabel {
            flavor: series.flavor.clone(),
            flavor_id: series.flavor_id,
            fraction,
            class: k as u8,
        };
        stacks.push(AcquisitionStack::new(
            RawImage::new(geom.width, geom.height, normal)?,
            RawImage::constant(geom.width, geom.height, illum.dark_level)?,
            RawImage::constant(geom.width, geom.height, illum.white_level)?,
            illum.tau1_ms,
            illum.tau2_ms,
            geom.mm_per_pixel,
            label,
        )?);
    }
    Ok(stacks)
}

fn synth_row(row: &mut [f64], signal: [f64; 3], sigma: f64, row_seed: u64) {
    if sigma == 0.0 {
        for (i, v) in row.iter_mut().enumerate() {
            *v = signal[i % CHANNELS];
        }
        return;
    }
    let mut rng = seeds::rng(row_seed);
    for (i, v) in row.iter_mut().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        *v = (signal[i % CHANNELS] + sigma * z).max(0.0);
    }
}

fn synth_normal(
    geom: &Geometry,
    signal: [f64; 3],
    sigma: f64,
    stack_seed: u64,
    parallel: bool,
) -> Vec<f64> {
    let row_len = geom.width * CHANNELS;
    let mut data = vec![0.0; geom.width * geom.height * CHANNELS];
    if parallel {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            data.par_chunks_mut(row_len)
                .enumerate()
                .for_each(|(y, row)| synth_row(row, signal, sigma, seeds::derive(stack_seed, y as u64)));
        }
    } else {
        for (y, row) in data.chunks_mut(row_len).enumerate() {
            synth_row(row, signal, sigma, seeds::derive(stack_seed, y as u64));
        }
    }
    data
}
