//! Exposure-simulated pseudo ground-truth synthesis.
//!
//! From a dark input this derives a brightened, color-corrected reference
//! image entirely from the input itself: a quantile-based white-balance mask
//! picks trustworthy bright pixels, patch-local maxima give a rough
//! amplification map that a large Gaussian turns into a smooth target gain,
//! and a luminance ramp desaturates deep shadows so amplified chroma noise
//! cannot masquerade as color.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{self, ImageTensor, ScalarMap};

/// Parameters of the pseudo ground-truth pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoGtConfig {
    /// Quantile fraction for the white-balance mask (0 < q < 1).
    pub q: f64,
    /// Tile size in pixels for the rough gain map.
    pub patch: usize,
    /// Gaussian standard deviation in pixels for the target gain.
    pub sigma: f64,
    /// Lower edge of the shadow luminance transition band.
    pub theta_min: f64,
    /// Upper edge of the shadow luminance transition band.
    pub theta_max: f64,
    /// Stabilizer added to denominators.
    pub epsilon: f64,
}

impl Default for PseudoGtConfig {
    fn default() -> Self {
        Self {
            q: 0.95,
            patch: 16,
            sigma: 25.0,
            theta_min: 0.05,
            theta_max: 0.25,
            epsilon: 1e-8,
        }
    }
}

impl PseudoGtConfig {
    /// Check every field invariant, naming the offending field on failure.
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidConfig {
                field: "pseudo_gt.q",
                reason: format!("must satisfy 0 < q < 1, got {}", self.q),
            });
        }
        if self.patch < 1 {
            return Err(Error::InvalidConfig {
                field: "pseudo_gt.patch",
                reason: "must be >= 1".into(),
            });
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidConfig {
                field: "pseudo_gt.sigma",
                reason: format!("must be a finite positive value, got {}", self.sigma),
            });
        }
        if !(self.theta_min >= 0.0 && self.theta_min < self.theta_max && self.theta_max <= 1.0) {
            return Err(Error::InvalidConfig {
                field: "pseudo_gt.theta_min/theta_max",
                reason: format!(
                    "must satisfy 0 <= theta_min < theta_max <= 1, got [{}, {}]",
                    self.theta_min, self.theta_max
                ),
            });
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidConfig {
                field: "pseudo_gt.epsilon",
                reason: format!("must be a finite positive value, got {}", self.epsilon),
            });
        }
        Ok(())
    }
}

/// Every intermediate of the pipeline, kept for inspection and export.
#[derive(Debug, Clone)]
pub struct PseudoGtBundle {
    /// Binary white-balance mask (values exactly 0 or 1).
    pub mask: ScalarMap,
    /// Per-channel white-balance gains (r, g, b).
    pub gains: [f64; 3],
    /// Input with white-balance gains applied (unclipped).
    pub wb_image: ImageTensor,
    /// Reciprocal of the patch-local maximum of the white-balanced image.
    pub rough_gain: ScalarMap,
    /// Gaussian-smoothed rough gain; strictly positive.
    pub target_gain: ScalarMap,
    /// Gain-brightened image, clipped to [0, 1].
    pub bright_image: ImageTensor,
    /// Shadow desaturation weight in [0, 1].
    pub chroma_weight: ScalarMap,
    /// Final pseudo ground truth in [0, 1].
    pub pseudo_gt: ImageTensor,
}

/// Binary mask of pixels whose luminance reaches the q-th quantile.
/// Ties with the quantile value are included.
pub fn white_balance_mask(y: &ScalarMap, q: f64) -> Result<ScalarMap> {
    let threshold = image::quantile(y, q)?;
    Ok(y.map(|v| if v >= threshold { 1.0 } else { 0.0 }))
}

/// Gray-world gains over the masked region: w_c = mean-of-means / (mean_c + ε).
pub fn white_balance_gains(img: &ImageTensor, mask: &ScalarMap, epsilon: f64) -> Result<[f64; 3]> {
    assert_eq!(img.channels(), 3, "white balance requires an RGB image");
    assert_eq!(
        (img.height(), img.width()),
        (mask.height(), mask.width()),
        "mask shape mismatch"
    );
    let mut sums = [0.0f64; 3];
    let mut count = 0usize;
    for y in 0..img.height() {
        for x in 0..img.width() {
            if mask.get(y, x) != 0.0 {
                count += 1;
                for (c, sum) in sums.iter_mut().enumerate() {
                    *sum += img.get(y, x, c);
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let means = sums.map(|s| s / count as f64);
    let grand = (means[0] + means[1] + means[2]) / 3.0;
    Ok([
        grand / (means[0] + epsilon),
        grand / (means[1] + epsilon),
        grand / (means[2] + epsilon),
    ])
}

/// Apply per-channel gains (no clipping).
pub fn apply_gains(img: &ImageTensor, gains: [f64; 3]) -> ImageTensor {
    assert_eq!(img.channels(), 3);
    let data = img
        .data()
        .chunks_exact(3)
        .flat_map(|px| [px[0] * gains[0], px[1] * gains[1], px[2] * gains[2]])
        .collect();
    ImageTensor::new(img.height(), img.width(), 3, data)
}

/// Rough amplification map 1 / (patch-local maximum + ε).
pub fn rough_gain(img: &ImageTensor, patch: usize, epsilon: f64) -> ScalarMap {
    image::patch_max(img, patch).map(|m| 1.0 / (m + epsilon))
}

/// Smooth the rough gain with a Gaussian low-pass; stays strictly positive.
pub fn target_gain(rough: &ScalarMap, sigma: f64) -> ScalarMap {
    image::gaussian_filter(rough, sigma)
}

/// Per-channel brightening clip(I(p, c) * gain(p), 0, 1).
pub fn brighten(wb_image: &ImageTensor, gain: &ScalarMap) -> ImageTensor {
    assert_eq!(
        (wb_image.height(), wb_image.width()),
        (gain.height(), gain.width()),
        "gain shape mismatch"
    );
    let mut out = wb_image.clone();
    for y in 0..wb_image.height() {
        for x in 0..wb_image.width() {
            let g = gain.get(y, x);
            debug_assert!(g > 0.0, "gain must be positive");
            for c in 0..wb_image.channels() {
                out.set(y, x, c, (wb_image.get(y, x, c) * g).clamp(0.0, 1.0));
            }
        }
    }
    out
}

/// Shadow transition ramp clip((Y − θ_min) / (θ_max − θ_min), 0, 1).
pub fn chroma_weight(y_bright: &ScalarMap, theta_min: f64, theta_max: f64) -> ScalarMap {
    assert!(theta_min < theta_max, "theta_min must be below theta_max");
    let span = theta_max - theta_min;
    y_bright.map(|v| ((v - theta_min) / span).clamp(0.0, 1.0))
}

/// Blend toward grayscale in shadows: Y + W_c ⊙ (I − Y), Y broadcast to RGB.
pub fn desaturate_blend(bright: &ImageTensor, w_c: &ScalarMap) -> ImageTensor {
    assert_eq!(bright.channels(), 3, "desaturation requires an RGB image");
    assert_eq!(
        (bright.height(), bright.width()),
        (w_c.height(), w_c.width()),
        "weight shape mismatch"
    );
    let y = image::luminance(bright);
    let mut out = bright.clone();
    for yy in 0..bright.height() {
        for xx in 0..bright.width() {
            let lum = y.get(yy, xx);
            let w = w_c.get(yy, xx);
            for c in 0..3 {
                out.set(yy, xx, c, lum + w * (bright.get(yy, xx, c) - lum));
            }
        }
    }
    out
}

/// Run the full pipeline: mask → gains → white balance → rough gain (on the
/// white-balanced image) → target gain → brighten → chroma weight → blend.
pub fn generate_pseudo_gt(img: &ImageTensor, cfg: &PseudoGtConfig) -> Result<PseudoGtBundle> {
    cfg.validate()?;
    assert_eq!(
        img.channels(),
        3,
        "pseudo ground truth requires an RGB input"
    );

    let y_low = image::luminance(img);
    let mask = white_balance_mask(&y_low, cfg.q)?;
    let gains = white_balance_gains(img, &mask, cfg.epsilon)?;
    let wb_image = apply_gains(img, gains);
    let rough = rough_gain(&wb_image, cfg.patch, cfg.epsilon);
    let target = target_gain(&rough, cfg.sigma);
    let bright_image = brighten(&wb_image, &target);
    let y_bright = image::luminance(&bright_image);
    let w_c = chroma_weight(&y_bright, cfg.theta_min, cfg.theta_max);
    let pseudo_gt = desaturate_blend(&bright_image, &w_c);

    Ok(PseudoGtBundle {
        mask,
        gains,
        wb_image,
        rough_gain: rough,
        target_gain: target,
        bright_image,
        chroma_weight: w_c,
        pseudo_gt,
    })
}
