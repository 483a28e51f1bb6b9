//! Transmittance normalization, ROI selection, patch extraction, and
//! % transmittance map emission.
//!
//! The normalization maps a raw acquisition (normal, dark, white frames plus
//! exposure times) to per-pixel, per-channel transmittance
//! `T = (I - I_d) / (I_w - I_d) * tau2 / tau1`, masking pixels whose
//! white-dark denominator is too small to divide by.

pub mod files;

use thiserror::Error;

pub const CHANNELS: usize = 3;
/// Patch geometry is pinned by the dataset file format and the network
/// input width (25 * 50 * 3 = 3750).
pub const PATCH_HEIGHT: usize = 25;
pub const PATCH_WIDTH: usize = 50;
/// Finite and strictly positive; rejects NaN and infinities.
fn pos(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

pub const PATCH_LEN: usize = PATCH_HEIGHT * PATCH_WIDTH * CHANNELS;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("image dimensions {width}x{height} invalid or data length {len} != w*h*3")]
    BadDimensions { width: usize, height: usize, len: usize },
    #[error("image data contains a non-finite or negative value at index {0}")]
    BadValue(usize),
    #[error("stack images have mismatched dimensions")]
    DimensionMismatch,
    #[error("exposure times and pixel pitch must be positive (tau1 {tau1}, tau2 {tau2}, mm_per_pixel {mm_per_pixel})")]
    BadStackParams { tau1: f64, tau2: f64, mm_per_pixel: f64 },
    #[error("denominator epsilon must be positive, got {0}")]
    BadDenomEps(f64),
    #[error("transmittance ceiling must be positive, got {0}")]
    BadTmax(f64),
    #[error("ROI of {roi_w}x{roi_h} px does not fit a {width}x{height} px image")]
    RoiTooLarge { roi_w: usize, roi_h: usize, width: usize, height: usize },
    #[error("image {width}x{height} is smaller than a {PATCH_WIDTH}x{PATCH_HEIGHT} patch")]
    TooSmallForPatch { width: usize, height: usize },
    #[error("placed only {placed} of {wanted} patches after {attempts} draws (masked regions too large)")]
    PatchPlacement { placed: usize, wanted: usize, attempts: usize },
    #[error("channel index {0} out of range (0..3)")]
    BadChannel(usize),
    #[error("every pixel is masked; no valid data")]
    AllMasked,
    #[error("patch count must be at least 1")]
    ZeroPatches,
}

/// Row-major, channel-interleaved intensity image; values finite and >= 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || data.len() != width * height * CHANNELS {
            return Err(ImagingError::BadDimensions { width, height, len: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(ImagingError::BadValue(i));
        }
        Ok(Self { width, height, data })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self, ImagingError> {
        Self::new(width, height, vec![value; width * height * CHANNELS])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, ch: usize) -> f64 {
        self.data[(y * self.width + x) * CHANNELS + ch]
    }
}

/// Identifies one acquisition: flavor, dilution fraction, and the fraction's
/// position in the series (the classification target).
#[derive(Debug, Clone, PartialEq)]
pub struct StackLabel {
    pub flavor: String,
    pub flavor_id: u8,
    pub fraction: f64,
    pub class: u8,
}

impl StackLabel {
    /// Filesystem-safe name, e.g. "sp8_f020" for sp8 at fraction 0.2.
    pub fn dir_name(&self) -> String {
        format!("{}_f{:03}", self.flavor, (self.fraction * 100.0).round() as u32)
    }
}

/// One acquisition: normal, dark, and white frames with exposure times.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionStack {
    pub normal: RawImage,
    pub dark: RawImage,
    pub white: RawImage,
    pub tau1_ms: f64,
    pub tau2_ms: f64,
    pub mm_per_pixel: f64,
    pub label: StackLabel,
}

impl AcquisitionStack {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        normal: RawImage,
        dark: RawImage,
        white: RawImage,
        tau1_ms: f64,
        tau2_ms: f64,
        mm_per_pixel: f64,
        label: StackLabel,
    ) -> Result<Self, ImagingError> {
        let dims = (normal.width, normal.height);
        if (dark.width, dark.height) != dims || (white.width, white.height) != dims {
            return Err(ImagingError::DimensionMismatch);
        }
        if !pos(tau1_ms) || !pos(tau2_ms) || !pos(mm_per_pixel) {
            return Err(ImagingError::BadStackParams { tau1: tau1_ms, tau2: tau2_ms, mm_per_pixel });
        }
        Ok(Self { normal, dark, white, tau1_ms, tau2_ms, mm_per_pixel, label })
    }
}

/// Per-pixel, per-channel transmittance with a validity mask.
///
/// A pixel is valid when every channel's white-dark denominator exceeds the
/// normalization epsilon. Valid values are clipped to [0, t_max]; masked
/// pixels hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmittanceImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
    mask: Vec<bool>,
}

impl TransmittanceImage {
    pub fn from_parts(
        width: usize,
        height: usize,
        data: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || data.len() != width * height * CHANNELS {
            return Err(ImagingError::BadDimensions { width, height, len: data.len() });
        }
        if mask.len() != width * height {
            return Err(ImagingError::BadDimensions { width, height, len: mask.len() });
        }
        Ok(Self { width, height, data, mask })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, ch: usize) -> f64 {
        self.data[(y * self.width + x) * CHANNELS + ch]
    }

    #[inline]
    pub fn valid(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn masked_fraction(&self) -> f64 {
        let masked = self.mask.iter().filter(|v| !**v).count();
        masked as f64 / self.mask.len() as f64
    }
}

/// A normalized image plus the mask metadata callers must surface.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizeOutput {
    pub image: TransmittanceImage,
    pub masked_fraction: f64,
    /// Set when more than half the pixels are masked; the result is likely
    /// unusable and callers should warn.
    pub mask_warning: bool,
}

#[allow(clippy::too_many_arguments)]
fn normalize_row(
    t_row: &mut [f64],
    mask_row: &mut [bool],
    normal: &[f64],
    dark: &[f64],
    white: &[f64],
    exposure_ratio: f64,
    denom_eps: f64,
    t_max: f64,
) {
    for (x, valid) in mask_row.iter_mut().enumerate() {
        let base = x * CHANNELS;
        let mut ok = true;
        for ch in 0..CHANNELS {
            if white[base + ch] - dark[base + ch] <= denom_eps {
                ok = false;
                break;
            }
        }
        *valid = ok;
        for ch in 0..CHANNELS {
            let i = base + ch;
            t_row[i] = if ok {
                let t = (normal[i] - dark[i]) / (white[i] - dark[i]) * exposure_ratio;
                t.clamp(0.0, t_max)
            } else {
                0.0
            };
        }
    }
}

/// White/dark normalization with exposure correction.
///
/// `T = (I - I_d) / (I_w - I_d) * tau2 / tau1`, clipped to [0, t_max].
/// Pixels where any channel's denominator is at most `denom_eps` are masked.
pub fn normalize(
    stack: &AcquisitionStack,
    denom_eps: f64,
    t_max: f64,
) -> Result<NormalizeOutput, ImagingError> {
    #[cfg(feature = "parallel")]
    {
        normalize_impl(stack, denom_eps, t_max, true)
    }
    #[cfg(not(feature = "parallel"))]
    {
        normalize_impl(stack, denom_eps, t_max, false)
    }
}

/// Sequential twin of [`normalize`]; the benchmark baseline.
#[doc(hidden)]
pub fn normalize_seq(
    stack: &AcquisitionStack,
    denom_eps: f64,
    t_max: f64,
) -> Result<NormalizeOutput, ImagingError> {
    normalize_impl(stack, denom_eps, t_max, false)
}

fn normalize_impl(
    stack: &AcquisitionStack,
    denom_eps: f64,
    t_max: f64,
    parallel: bool,
) -> Result<NormalizeOutput, ImagingError> {
    if !pos(denom_eps) {
        return Err(ImagingError::BadDenomEps(denom_eps));
    }
    if !pos(t_max) {
        return Err(ImagingError::BadTmax(t_max));
    }
    let (w, h) = (stack.normal.width, stack.normal.height);
    let ratio = stack.tau2_ms / stack.tau1_ms;
    let mut data = vec![0.0; w * h * CHANNELS];
    let mut mask = vec![false; w * h];
    let row_len = w * CHANNELS;

    let run_row = |y: usize, t_row: &mut [f64], mask_row: &mut [bool]| {
        let lo = y * row_len;
        normalize_row(
            t_row,
            mask_row,
            &stack.normal.data[lo..lo + row_len],
            &stack.dark.data[lo..lo + row_len],
            &stack.white.data[lo..lo + row_len],
            ratio,
            denom_eps,
            t_max,
        );
    };

    if parallel {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            data.par_chunks_mut(row_len)
                .zip(mask.par_chunks_mut(w))
                .enumerate()
                .for_each(|(y, (t_row, mask_row))| run_row(y, t_row, mask_row));
        }
    } else {
        for (y, (t_row, mask_row)) in data.chunks_mut(row_len).zip(mask.chunks_mut(w)).enumerate()
        {
            run_row(y, t_row, mask_row);
        }
    }

    let image = TransmittanceImage::from_parts(w, h, data, mask)?;
    let masked_fraction = image.masked_fraction();
    Ok(NormalizeOutput { image, masked_fraction, mask_warning: masked_fraction > 0.5 })
}

/// Central crop of `roi_mm` (width, height) millimeters; ties toward top-left.
pub fn center_roi(
    img: &TransmittanceImage,
    roi_mm: (f64, f64),
    mm_per_pixel: f64,
) -> Result<TransmittanceImage, ImagingError> {
    let roi_w = (roi_mm.0 / mm_per_pixel).floor() as usize;
    let roi_h = (roi_mm.1 / mm_per_pixel).floor() as usize;
    if roi_w == 0 || roi_h == 0 || roi_w > img.width || roi_h > img.height {
        return Err(ImagingError::RoiTooLarge {
            roi_w,
            roi_h,
            width: img.width,
            height: img.height,
        });
    }
    let x0 = (img.width - roi_w) / 2;
    let y0 = (img.height - roi_h) / 2;
    let mut data = Vec::with_capacity(roi_w * roi_h * CHANNELS);
    let mut mask = Vec::with_capacity(roi_w * roi_h);
    for y in y0..y0 + roi_h {
        let lo = (y * img.width + x0) * CHANNELS;
        data.extend_from_slice(&img.data[lo..lo + roi_w * CHANNELS]);
        mask.extend_from_slice(&img.mask[y * img.width + x0..y * img.width + x0 + roi_w]);
    }
    TransmittanceImage::from_parts(roi_w, roi_h, data, mask)
}

/// One 25x50x3 sample cut from a transmittance image.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// Row-major, channel-interleaved; length [`PATCH_LEN`].
    pub pixels: Vec<f32>,
    /// Top-left corner in the source image; None when loaded from a dataset
    /// file, which does not persist origins.
    pub origin: Option<(usize, usize)>,
    pub class: u8,
    pub flavor_id: u8,
}

/// Draws `n` patch origins uniformly over the valid origin set.
///
/// Origins whose patch would contain a masked pixel are rejected and
/// redrawn; after `100 * n` total draws the function gives up.
pub fn sample_origins(
    img: &TransmittanceImage,
    n: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>, ImagingError> {
    use rand::Rng;
    if n == 0 {
        return Err(ImagingError::ZeroPatches);
    }
    if img.width < PATCH_WIDTH || img.height < PATCH_HEIGHT {
        return Err(ImagingError::TooSmallForPatch { width: img.width, height: img.height });
    }
    let mut rng = crate::seeds::rng(seed);
    let max_x = img.width - PATCH_WIDTH;
    let max_y = img.height - PATCH_HEIGHT;
    let mut origins = Vec::with_capacity(n);
    let mut attempts = 0usize;
    let budget = 100 * n;
    while origins.len() < n && attempts < budget {
        attempts += 1;
        let x = rng.gen_range(0..=max_x);
        let y = rng.gen_range(0..=max_y);
        let clean = (y..y + PATCH_HEIGHT)
            .all(|py| img.mask[py * img.width + x..py * img.width + x + PATCH_WIDTH].iter().all(|m| *m));
        if clean {
            origins.push((x, y));
        }
    }
    if origins.len() < n {
        return Err(ImagingError::PatchPlacement { placed: origins.len(), wanted: n, attempts });
    }
    Ok(origins)
}

/// Extracts `n` random 25x50 patches (overlap permitted), stamped with the
/// stack's label. Deterministic given the seed.
pub fn extract_patches(
    img: &TransmittanceImage,
    n: usize,
    label: &StackLabel,
    seed: u64,
) -> Result<Vec<Patch>, ImagingError> {
    let origins = sample_origins(img, n, seed)?;
    let mut patches = Vec::with_capacity(n);
    for (x, y) in origins {
        let mut pixels = Vec::with_capacity(PATCH_LEN);
        for py in y..y + PATCH_HEIGHT {
            let lo = (py * img.width + x) * CHANNELS;
            pixels.extend(img.data[lo..lo + PATCH_WIDTH * CHANNELS].iter().map(|v| *v as f32));
        }
        patches.push(Patch {
            pixels,
            origin: Some((x, y)),
            class: label.class,
            flavor_id: label.flavor_id,
        });
    }
    Ok(patches)
}

/// Percent-transmittance view of one channel plus its row-mean profile.
///
/// Masked pixels are NaN in the grid and excluded from row means; a row with
/// no valid pixel has a NaN profile entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmittanceMap {
    pub width: usize,
    pub height: usize,
    pub channel: usize,
    pub percent: Vec<f64>,
    pub profile: Vec<f64>,
}

pub fn transmittance_map(
    img: &TransmittanceImage,
    channel: usize,
) -> Result<TransmittanceMap, ImagingError> {
    if channel >= CHANNELS {
        return Err(ImagingError::BadChannel(channel));
    }
    if img.mask.iter().all(|m| !*m) {
        return Err(ImagingError::AllMasked);
    }
    let mut percent = vec![f64::NAN; img.width * img.height];
    let mut profile = Vec::with_capacity(img.height);
    for y in 0..img.height {
        let mut sum = 0.0;
        let mut count = 0usize;
        for x in 0..img.width {
            if img.valid(x, y) {
                let v = 100.0 * img.get(x, y, channel);
                percent[y * img.width + x] = v;
                sum += v;
                count += 1;
            }
        }
        profile.push(if count > 0 { sum / count as f64 } else { f64::NAN });
    }
    Ok(TransmittanceMap { width: img.width, height: img.height, channel, percent, profile })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label() -> StackLabel {
        StackLabel { flavor: "sp8".into(), flavor_id: 1, fraction: 0.2, class: 4 }
    }

    fn uniform_stack(w: usize, h: usize, i: f64, d: f64, wv: f64, tau1: f64, tau2: f64) -> AcquisitionStack {
        AcquisitionStack::new(
            RawImage::constant(w, h, i).unwrap(),
            RawImage::constant(w, h, d).unwrap(),
            RawImage::constant(w, h, wv).unwrap(),
            tau1,
            tau2,
            0.5,
            label(),
        )
        .unwrap()
    }

    #[test]
    fn normalize_identity_and_zero_cases() {
        let eq = normalize(&uniform_stack(4, 3, 0.9, 0.0, 0.9, 10.0, 10.0), 1e-6, 2.0).unwrap();
        assert!(eq.image.data().iter().all(|t| (*t - 1.0).abs() < 1e-12));
        assert_eq!(eq.masked_fraction, 0.0);
        assert!(!eq.mask_warning);

        let dark = normalize(&uniform_stack(4, 3, 0.1, 0.1, 0.9, 10.0, 10.0), 1e-6, 2.0).unwrap();
        assert!(dark.image.data().iter().all(|t| t.abs() < 1e-12));
    }

    #[test]
    fn normalize_applies_exposure_correction() {
        // (0.5 - 0.1) / (0.9 - 0.1) * 20 / 10 = 1.0
        let out = normalize(&uniform_stack(2, 2, 0.5, 0.1, 0.9, 10.0, 20.0), 1e-6, 2.0).unwrap();
        assert!(out.image.data().iter().all(|t| (*t - 1.0).abs() < 1e-12));
    }

    #[test]
    fn normalize_masks_degenerate_denominators_and_warns() {
        // white == dark on every pixel: all masked.
        let out = normalize(&uniform_stack(4, 4, 0.5, 0.5, 0.5, 10.0, 10.0), 1e-6, 2.0).unwrap();
        assert_eq!(out.masked_fraction, 1.0);
        assert!(out.mask_warning);
        assert!(out.image.data().iter().all(|t| *t == 0.0));
    }

    #[test]
    fn normalize_clips_to_t_max() {
        let out = normalize(&uniform_stack(2, 2, 5.0, 0.0, 1.0, 10.0, 10.0), 1e-6, 2.0).unwrap();
        assert!(out.image.data().iter().all(|t| *t == 2.0));
    }

    #[test]
    fn normalize_rejects_mismatched_dims() {
        let stack = AcquisitionStack::new(
            RawImage::constant(4, 3, 0.5).unwrap(),
            RawImage::constant(3, 4, 0.0).unwrap(),
            RawImage::constant(4, 3, 1.0).unwrap(),
            10.0,
            10.0,
            0.5,
            label(),
        );
        assert!(matches!(stack, Err(ImagingError::DimensionMismatch)));
    }

    #[test]
    fn normalize_parallel_matches_sequential_bitwise() {
        let stack = uniform_stack(33, 17, 0.47, 0.05, 1.0, 10.0, 20.0);
        let a = normalize(&stack, 1e-6, 2.0).unwrap();
        let b = normalize_seq(&stack, 1e-6, 2.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn center_roi_crops_with_ties_toward_top_left() {
        let img = TransmittanceImage::from_parts(
            200,
            200,
            vec![0.5; 200 * 200 * 3],
            vec![true; 200 * 200],
        )
        .unwrap();
        let roi = center_roi(&img, (35.0, 35.0), 0.5).unwrap();
        assert_eq!((roi.width(), roi.height()), (70, 70));

        // Odd remainder: 5x5 image, 2x2 ROI starts at floor(3/2) = 1.
        let mut data = vec![0.0; 5 * 5 * 3];
        for y in 0..5 {
            for x in 0..5 {
                for ch in 0..3 {
                    data[(y * 5 + x) * 3 + ch] = (y * 5 + x) as f64;
                }
            }
        }
        let img = TransmittanceImage::from_parts(5, 5, data, vec![true; 25]).unwrap();
        let roi = center_roi(&img, (2.0, 2.0), 1.0).unwrap();
        assert_eq!(roi.get(0, 0, 0), (5 + 1) as f64);
    }

    #[test]
    fn center_roi_accepts_full_image_and_rejects_oversize() {
        let img =
            TransmittanceImage::from_parts(30, 30, vec![0.1; 30 * 30 * 3], vec![true; 900]).unwrap();
        let full = center_roi(&img, (30.0, 30.0), 1.0).unwrap();
        assert_eq!((full.width(), full.height()), (30, 30));
        assert!(center_roi(&img, (35.0, 35.0), 0.5).is_err());
    }

    #[test]
    fn extract_patches_is_deterministic_and_respects_bounds() {
        let img = TransmittanceImage::from_parts(
            70,
            140,
            vec![0.25; 70 * 140 * 3],
            vec![true; 70 * 140],
        )
        .unwrap();
        let a = extract_patches(&img, 400, &label(), 99).unwrap();
        let b = extract_patches(&img, 400, &label(), 99).unwrap();
        assert_eq!(a.len(), 400);
        let origins_a: Vec<_> = a.iter().map(|p| p.origin).collect();
        let origins_b: Vec<_> = b.iter().map(|p| p.origin).collect();
        assert_eq!(origins_a, origins_b);
        for p in &a {
            let (x, y) = p.origin.unwrap();
            assert!(x + PATCH_WIDTH <= 70 && y + PATCH_HEIGHT <= 140);
            assert_eq!(p.pixels.len(), PATCH_LEN);
            assert!(p.pixels.iter().all(|v| *v == 0.25));
        }
    }

    #[test]
    fn extract_patches_rejects_too_narrow_images() {
        let img =
            TransmittanceImage::from_parts(49, 140, vec![0.2; 49 * 140 * 3], vec![true; 49 * 140])
                .unwrap();
        assert!(matches!(
            extract_patches(&img, 1, &label(), 1),
            Err(ImagingError::TooSmallForPatch { .. })
        ));
    }

    #[test]
    fn extract_patches_avoids_masked_pixels() {
        // Mask the left half; all patches must come from the right half.
        let w = 120;
        let h = 60;
        let mask: Vec<bool> = (0..w * h).map(|i| (i % w) >= 60).collect();
        let img = TransmittanceImage::from_parts(w, h, vec![0.5; w * h * 3], mask).unwrap();
        let patches = extract_patches(&img, 50, &label(), 7).unwrap();
        for p in &patches {
            assert!(p.origin.unwrap().0 >= 60);
        }
    }

    #[test]
    fn extract_patches_errors_when_no_valid_placement() {
        let img =
            TransmittanceImage::from_parts(60, 30, vec![0.5; 60 * 30 * 3], vec![false; 60 * 30])
                .unwrap();
        assert!(matches!(
            extract_patches(&img, 4, &label(), 3),
            Err(ImagingError::PatchPlacement { placed: 0, .. })
        ));
    }

    #[test]
    fn transmittance_map_examples() {
        let img =
            TransmittanceImage::from_parts(3, 2, vec![0.5; 3 * 2 * 3], vec![true; 6]).unwrap();
        let map = transmittance_map(&img, 0).unwrap();
        assert!(map.percent.iter().all(|v| *v == 50.0));
        assert!(map.profile.iter().all(|v| *v == 50.0));

        // Two rows 0.2 and 0.4 -> profile {20, 40}.
        let mut data = vec![0.0; 2 * 2 * 3];
        for x in 0..2 {
            for ch in 0..3 {
                data[(x) * 3 + ch] = 0.2;
                data[(2 + x) * 3 + ch] = 0.4;
            }
        }
        let img = TransmittanceImage::from_parts(2, 2, data, vec![true; 4]).unwrap();
        let map = transmittance_map(&img, 1).unwrap();
        assert!((map.profile[0] - 20.0).abs() < 1e-12);
        assert!((map.profile[1] - 40.0).abs() < 1e-12);
    }

    #[test]
    fn transmittance_map_guards() {
        let img =
            TransmittanceImage::from_parts(2, 2, vec![0.5; 12], vec![false; 4]).unwrap();
        assert!(matches!(transmittance_map(&img, 0), Err(ImagingError::AllMasked)));
        let img = TransmittanceImage::from_parts(2, 2, vec![0.5; 12], vec![true; 4]).unwrap();
        assert!(matches!(transmittance_map(&img, 3), Err(ImagingError::BadChannel(3))));
    }

    #[test]
    fn raw_image_validation() {
        assert!(RawImage::new(2, 2, vec![0.0; 11]).is_err());
        assert!(RawImage::new(2, 2, vec![-1.0; 12]).is_err());
        let mut data = vec![0.0; 12];
        data[5] = f64::NAN;
        assert!(matches!(RawImage::new(2, 2, data), Err(ImagingError::BadValue(5))));
    }
}
