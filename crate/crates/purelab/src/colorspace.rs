//! sRGB to CIELAB conversion and per-group CIELAB distribution fitting.
//!
//! Conversions follow the standard chain encoded sRGB -> linear RGB ->
//! XYZ (D65, 2 degree observer) -> CIELAB. The reference white is the XYZ
//! of encoded white computed through the same matrix, so (1,1,1) maps to
//! exactly (100, 0, 0) rather than picking up rounding residue from an
//! independently rounded white point.

use thiserror::Error;

/// Linear RGB -> XYZ for sRGB primaries under D65 (IEC 61966-2-1).
pub const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

/// Reference white: row sums of the matrix, i.e. XYZ of linear (1,1,1).
pub const REFERENCE_WHITE: [f64; 3] = [
    SRGB_TO_XYZ[0][0] + SRGB_TO_XYZ[0][1] + SRGB_TO_XYZ[0][2],
    SRGB_TO_XYZ[1][0] + SRGB_TO_XYZ[1][1] + SRGB_TO_XYZ[1][2],
    SRGB_TO_XYZ[2][0] + SRGB_TO_XYZ[2][1] + SRGB_TO_XYZ[2][2],
];

/// Inputs this far outside [0, 1] are rejected; anything closer is clamped.
const CHANNEL_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ColorError {
    #[error("channel {channel} value {value} outside [0, 1] (slack {CHANNEL_SLACK:e})")]
    ChannelOutOfRange { channel: char, value: f64 },
    #[error("cannot fit a distribution to zero pixels")]
    EmptyInput,
    #[error("mean L {0} is not positive; cannot L-normalize")]
    NonPositiveL(f64),
}

fn checked_channel(value: f64, channel: char) -> Result<f64, ColorError> {
    if !value.is_finite() || !(-CHANNEL_SLACK..=1.0 + CHANNEL_SLACK).contains(&value) {
        return Err(ColorError::ChannelOutOfRange { channel, value });
    }
    Ok(value.clamp(0.0, 1.0))
}

/// Gamma-encoded sRGB color, channels in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodedRgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl EncodedRgb {
    pub fn new(r: f64, g: f64, b: f64) -> Result<Self, ColorError> {
        Ok(Self {
            r: checked_channel(r, 'r')?,
            g: checked_channel(g, 'g')?,
            b: checked_channel(b, 'b')?,
        })
    }

    pub fn to_linear(self) -> LinearRgb {
        LinearRgb {
            r: srgb_eotf(self.r),
            g: srgb_eotf(self.g),
            b: srgb_eotf(self.b),
        }
    }
}

/// Linear-light RGB, channels in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearRgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl LinearRgb {
    pub fn new(r: f64, g: f64, b: f64) -> Result<Self, ColorError> {
        Ok(Self {
            r: checked_channel(r, 'r')?,
            g: checked_channel(g, 'g')?,
            b: checked_channel(b, 'b')?,
        })
    }

    pub fn to_encoded(self) -> EncodedRgb {
        EncodedRgb {
            r: srgb_oetf(self.r),
            g: srgb_oetf(self.g),
            b: srgb_oetf(self.b),
        }
    }

    pub fn to_xyz(self) -> [f64; 3] {
        let rgb = [self.r, self.g, self.b];
        let mut xyz = [0.0; 3];
        for (row, out) in SRGB_TO_XYZ.iter().zip(xyz.iter_mut()) {
            // Left-to-right accumulation matches REFERENCE_WHITE exactly.
            *out = row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2];
        }
        xyz
    }
}

/// CIELAB color; L in [0, 100], a and b unbounded (typically within +-128).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

/// sRGB electro-optical transfer function (encoded -> linear).
pub fn srgb_eotf(u: f64) -> f64 {
    if u <= 0.04045 {
        u / 12.92
    } else {
        ((u + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB opto-electronic transfer function (linear -> encoded).
pub fn srgb_oetf(v: f64) -> f64 {
    if v <= 0.0031308 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// CIELAB companding function with the exact rational threshold (6/29)^3.
fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    const DELTA3: f64 = DELTA * DELTA * DELTA;
    if t > DELTA3 {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// XYZ (D65) -> CIELAB against [`REFERENCE_WHITE`].
pub fn xyz_to_lab(xyz: [f64; 3]) -> LabColor {
    let fx = lab_f(xyz[0] / REFERENCE_WHITE[0]);
    let fy = lab_f(xyz[1] / REFERENCE_WHITE[1]);
    let fz = lab_f(xyz[2] / REFERENCE_WHITE[2]);
    LabColor {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// Full conversion chain for one gamma-encoded sRGB color.
pub fn srgb_to_lab(c: EncodedRgb) -> LabColor {
    xyz_to_lab(c.to_linear().to_xyz())
}

/// Converts a batch of encoded sRGB triplets.
///
/// Each output depends only on its own input, so the parallel build splits
/// the batch across threads and produces bit-identical results.
pub fn srgb_to_lab_batch(pixels: &[[f64; 3]]) -> Result<Vec<LabColor>, ColorError> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        pixels
            .par_iter()
            .map(|p| EncodedRgb::new(p[0], p[1], p[2]).map(srgb_to_lab))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        srgb_to_lab_batch_seq(pixels)
    }
}

/// Sequential twin of [`srgb_to_lab_batch`]; the benchmark baseline.
#[doc(hidden)]
pub fn srgb_to_lab_batch_seq(pixels: &[[f64; 3]]) -> Result<Vec<LabColor>, ColorError> {
    pixels
        .iter()
        .map(|p| EncodedRgb::new(p[0], p[1], p[2]).map(srgb_to_lab))
        .collect()
}

/// Euclidean distance in CIELAB (the 1976 color-difference formula).
pub fn delta_e76(x: &LabColor, y: &LabColor) -> f64 {
    let dl = x.l - y.l;
    let da = x.a - y.a;
    let db = x.b - y.b;
    (dl * dl + da * da + db * db).sqrt()
}

/// Gaussian summary of one group's CIELAB pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabDistribution {
    pub label: String,
    pub n: usize,
    /// Arithmetic mean (L, a, b).
    pub mean: [f64; 3],
    /// Unbiased sample covariance; the zero matrix when n = 1.
    pub covariance: [[f64; 3]; 3],
}

/// Fits mean and unbiased sample covariance to a group of pixels.
// Symmetric upper-triangle accumulation reads clearest with indices.
#[allow(clippy::needless_range_loop)]
pub fn lab_distribution(pixels: &[LabColor], label: &str) -> Result<LabDistribution, ColorError> {
    if pixels.is_empty() {
        return Err(ColorError::EmptyInput);
    }
    let n = pixels.len();
    let mut mean = [0.0; 3];
    for p in pixels {
        mean[0] += p.l;
        mean[1] += p.a;
        mean[2] += p.b;
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut covariance = [[0.0; 3]; 3];
    if n > 1 {
        for p in pixels {
            let d = [p.l - mean[0], p.a - mean[1], p.b - mean[2]];
            for i in 0..3 {
                for j in i..3 {
                    covariance[i][j] += d[i] * d[j];
                }
            }
        }
        for i in 0..3 {
            for j in i..3 {
                covariance[i][j] /= (n - 1) as f64;
                covariance[j][i] = covariance[i][j];
            }
        }
    }
    Ok(LabDistribution {
        label: label.to_owned(),
        n,
        mean,
        covariance,
    })
}

/// a*b* coordinates of a distribution divided by its mean L*.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedAb {
    pub a: f64,
    pub b: f64,
    /// (a, b) covariance block with rows and columns divided by mean L.
    pub covariance: [[f64; 2]; 2],
}

/// L-normalizes a distribution: (a/L, b/L) plus the rescaled covariance block.
pub fn l_normalized_ab(d: &LabDistribution) -> Result<NormalizedAb, ColorError> {
    let l = d.mean[0];
    if l <= 0.0 {
        return Err(ColorError::NonPositiveL(l));
    }
    let scale = 1.0 / (l * l);
    Ok(NormalizedAb {
        a: d.mean[1] / l,
        b: d.mean[2] / l,
        covariance: [
            [d.covariance[1][1] * scale, d.covariance[1][2] * scale],
            [d.covariance[2][1] * scale, d.covariance[2][2] * scale],
        ],
    })
}
