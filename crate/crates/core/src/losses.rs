//! Spatial-domain stage-1 objectives: a scale-aligned perceptual loss with a
//! closed-form alignment factor, Retinex self-reconstruction, illumination
//! guidance, the aggregated color loss, and the combined stage-1 total.
//!
//! All L1-style norms are means over elements so values are comparable
//! across resolutions; the relative weights absorb the convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gafm::FeatureTensor;
use crate::image::{ImageTensor, ScalarMap};
use crate::pseudo_gt::PseudoGtBundle;
use crate::spectral::{sisc_loss, SiscConfig};

/// Pooling tile size (pixels) of the local color term.
pub const COLOR_POOL: usize = 16;

/// Weights of the stage-1 objective.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_rec: f64,
    pub lambda_guide: f64,
    pub lambda_loc: f64,
    pub lambda_glo: f64,
    pub lambda_iap: f64,
    pub epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_rec: 1.0,
            lambda_guide: 1.0,
            lambda_loc: 0.5,
            lambda_glo: 0.5,
            lambda_iap: 0.1,
            epsilon: 1e-8,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("weights.lambda_rec", self.lambda_rec),
            ("weights.lambda_guide", self.lambda_guide),
            ("weights.lambda_loc", self.lambda_loc),
            ("weights.lambda_glo", self.lambda_glo),
            ("weights.lambda_iap", self.lambda_iap),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig {
                    field: name,
                    reason: format!("must be a finite value >= 0, got {v}"),
                });
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidConfig {
                field: "weights.epsilon",
                reason: format!("must be a finite positive value, got {}", self.epsilon),
            });
        }
        Ok(())
    }
}

/// Deterministic multi-level feature map Φ. Implementations must be
/// reentrant and must derive feature dimensions purely from input
/// dimensions.
pub trait FeatureExtractor {
    fn features(&self, img: &ImageTensor) -> Vec<FeatureTensor>;
}

/// Default Φ: an L-level half-resolution pyramid of horizontal and vertical
/// finite-difference maps, two tensors per level, per channel.
#[derive(Debug, Clone)]
pub struct GradientPyramid {
    pub levels: usize,
}

impl Default for GradientPyramid {
    fn default() -> Self {
        Self { levels: 3 }
    }
}

impl GradientPyramid {
    fn downsample(img: &ImageTensor) -> ImageTensor {
        let (h, w, c) = (img.height() / 2, img.width() / 2, img.channels());
        let mut data = vec![0.0; h * w * c];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let s = img.get(2 * y, 2 * x, ch)
                        + img.get(2 * y, 2 * x + 1, ch)
                        + img.get(2 * y + 1, 2 * x, ch)
                        + img.get(2 * y + 1, 2 * x + 1, ch);
                    data[(y * w + x) * c + ch] = s / 4.0;
                }
            }
        }
        ImageTensor::new(h, w, c, data)
    }

    fn gradients(img: &ImageTensor) -> (FeatureTensor, FeatureTensor) {
        let (h, w, c) = (img.height(), img.width(), img.channels());
        let mut dx = FeatureTensor::zeros(c, h, w - 1);
        let mut dy = FeatureTensor::zeros(c, h - 1, w);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w - 1 {
                    dx.set(ch, y, x, img.get(y, x + 1, ch) - img.get(y, x, ch));
                }
            }
            for y in 0..h - 1 {
                for x in 0..w {
                    dy.set(ch, y, x, img.get(y + 1, x, ch) - img.get(y, x, ch));
                }
            }
        }
        (dx, dy)
    }
}

impl FeatureExtractor for GradientPyramid {
    fn features(&self, img: &ImageTensor) -> Vec<FeatureTensor> {
        let mut out = Vec::with_capacity(2 * self.levels);
        let mut current = img.clone();
        for level in 0..self.levels {
            let (dx, dy) = Self::gradients(&current);
            out.push(dx);
            out.push(dy);
            if level + 1 < self.levels && current.height() >= 4 && current.width() >= 4 {
                current = Self::downsample(&current);
            }
        }
        out
    }
}

/// All stage-1 components plus the alignment factor k. The total always
/// equals the weighted recombination of the components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stage1LossReport {
    pub rec: f64,
    pub guide: f64,
    pub color_local: f64,
    pub color_global: f64,
    pub iap: f64,
    pub sisc: f64,
    pub total: f64,
    pub k: f64,
}

/// Closed-form least-squares scale aligning R̂ to I_low:
/// k = ⟨R̂, I_low⟩ / (‖R̂‖² + ε).
pub fn iap_scale_k(r_hat: &ImageTensor, i_low: &ImageTensor, epsilon: f64) -> Result<f64> {
    if !r_hat.same_shape(i_low) {
        return Err(Error::DimensionMismatch(format!(
            "iap_scale_k inputs {} vs {}",
            r_hat.shape_string(),
            i_low.shape_string()
        )));
    }
    let mut dot = 0.0;
    let mut norm_sq = 0.0;
    for (r, i) in r_hat.data().iter().zip(i_low.data()) {
        dot += r * i;
        norm_sq += r * r;
    }
    Ok(dot / (norm_sq + epsilon))
}

/// Scale-aligned perceptual loss: Σ_j mean |Φ_j(k·R̂) − Φ_j(I_low)| with k
/// from [`iap_scale_k`]. k·R̂ is deliberately not clipped so the closed-form
/// optimality of k carries into the features.
pub fn iap_loss(
    r_hat: &ImageTensor,
    i_low: &ImageTensor,
    phi: &dyn FeatureExtractor,
    epsilon: f64,
) -> Result<f64> {
    let k = iap_scale_k(r_hat, i_low, epsilon)?;
    let scaled = ImageTensor::new(
        r_hat.height(),
        r_hat.width(),
        r_hat.channels(),
        r_hat.data().iter().map(|v| k * v).collect(),
    );
    let fa = phi.features(&scaled);
    let fb = phi.features(i_low);
    debug_assert_eq!(fa.len(), fb.len());
    let mut loss = 0.0;
    for (a, b) in fa.iter().zip(&fb) {
        let n = a.data().len() as f64;
        loss += a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / n;
    }
    Ok(loss)
}

/// Retinex self-reconstruction: mean |R̂ ⊙ L − I_low| with L broadcast over
/// channels.
pub fn rec_loss(r_hat: &ImageTensor, l: &ScalarMap, i_low: &ImageTensor) -> f64 {
    assert!(r_hat.same_shape(i_low), "reflectance and input disagree");
    assert_eq!(
        (r_hat.height(), r_hat.width()),
        (l.height(), l.width()),
        "illumination shape mismatch"
    );
    let c = r_hat.channels();
    let mut sum = 0.0;
    for y in 0..r_hat.height() {
        for x in 0..r_hat.width() {
            let lum = l.get(y, x);
            for ch in 0..c {
                sum += (r_hat.get(y, x, ch) * lum - i_low.get(y, x, ch)).abs();
            }
        }
    }
    sum / r_hat.data().len() as f64
}

/// Illumination guidance: mean |L − 1/(G_target + ε)|.
pub fn guide_loss(l: &ScalarMap, g_target: &ScalarMap, epsilon: f64) -> f64 {
    assert_eq!(
        (l.height(), l.width()),
        (g_target.height(), g_target.width()),
        "guide shape mismatch"
    );
    let n = l.data().len() as f64;
    l.data()
        .iter()
        .zip(g_target.data())
        .map(|(lv, gv)| (lv - 1.0 / (gv + epsilon)).abs())
        .sum::<f64>()
        / n
}

/// Aggregated color terms, returned unweighted.
///
/// Local: mean over pooled tiles of 1 − cos between the tile-mean RGB
/// vectors of the two images (ε-stabilized norms). Global: Σ_c |μ_c(R̂) −
/// μ_gray(R̂)|, the gray-world deviation of the prediction alone.
pub fn color_loss(
    r_hat: &ImageTensor,
    i_pseudo: &ImageTensor,
    weights: &LossWeights,
    pool: usize,
) -> (f64, f64) {
    assert_eq!(r_hat.channels(), 3, "color loss requires RGB");
    assert!(r_hat.same_shape(i_pseudo), "color loss inputs disagree");
    assert!(pool >= 1);

    let (h, w) = (r_hat.height(), r_hat.width());
    let mut local_sum = 0.0;
    let mut tiles = 0usize;
    let mut ty = 0;
    while ty < h {
        let th = (ty + pool).min(h);
        let mut tx = 0;
        while tx < w {
            let tw = (tx + pool).min(w);
            let mut u = [0.0f64; 3];
            let mut v = [0.0f64; 3];
            let count = ((th - ty) * (tw - tx)) as f64;
            for y in ty..th {
                for x in tx..tw {
                    for c in 0..3 {
                        u[c] += r_hat.get(y, x, c);
                        v[c] += i_pseudo.get(y, x, c);
                    }
                }
            }
            for c in 0..3 {
                u[c] /= count;
                v[c] /= count;
            }
            let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
            let nu = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
            let nv = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            local_sum += 1.0 - dot / (nu * nv + weights.epsilon);
            tiles += 1;
            tx = tw;
        }
        ty = th;
    }
    let local = local_sum / tiles as f64;

    let n = (h * w) as f64;
    let mut channel_means = [0.0f64; 3];
    for px in r_hat.data().chunks_exact(3) {
        for c in 0..3 {
            channel_means[c] += px[c];
        }
    }
    for m in &mut channel_means {
        *m /= n;
    }
    let gray = (channel_means[0] + channel_means[1] + channel_means[2]) / 3.0;
    let global = channel_means.iter().map(|m| (m - gray).abs()).sum();

    (local, global)
}

/// Combine components into a report; `total` is the exact weighted sum.
#[allow(clippy::too_many_arguments)]
pub fn assemble_report(
    rec: f64,
    guide: f64,
    color_local: f64,
    color_global: f64,
    iap: f64,
    sisc: f64,
    k: f64,
    weights: &LossWeights,
) -> Stage1LossReport {
    let total = weights.lambda_rec * rec
        + weights.lambda_guide * guide
        + weights.lambda_loc * color_local
        + weights.lambda_glo * color_global
        + weights.lambda_iap * iap
        + sisc;
    Stage1LossReport {
        rec,
        guide,
        color_local,
        color_global,
        iap,
        sisc,
        total,
        k,
    }
}

/// Full stage-1 objective over one scene. The spectral term compares the
/// two predictions; every spatial term evaluates on `r_hat1` (pass the
/// predictions in the other order to evaluate them on the second one). All
/// inputs must share one resolution.
#[allow(clippy::too_many_arguments)]
pub fn stage1_loss(
    r_hat1: &ImageTensor,
    r_hat2: &ImageTensor,
    l: &ScalarMap,
    i_low: &ImageTensor,
    bundle: &PseudoGtBundle,
    weights: &LossWeights,
    sisc_cfg: &SiscConfig,
    phi: &dyn FeatureExtractor,
) -> Result<Stage1LossReport> {
    weights.validate()?;
    if !r_hat1.same_shape(i_low)
        || !r_hat1.same_shape(&bundle.pseudo_gt)
        || (l.height(), l.width()) != (r_hat1.height(), r_hat1.width())
    {
        return Err(Error::DimensionMismatch(format!(
            "stage1_loss needs matching shapes, got prediction {} input {} reference {} illumination {}x{}",
            r_hat1.shape_string(),
            i_low.shape_string(),
            bundle.pseudo_gt.shape_string(),
            l.height(),
            l.width()
        )));
    }
    if r_hat1.channels() != 3 {
        return Err(Error::InvalidInput(
            "stage1_loss requires RGB inputs".into(),
        ));
    }

    let rec = rec_loss(r_hat1, l, i_low);
    let guide = guide_loss(l, &bundle.target_gain, weights.epsilon);
    let (color_local, color_global) = color_loss(r_hat1, &bundle.pseudo_gt, weights, COLOR_POOL);
    let iap = iap_loss(r_hat1, i_low, phi, weights.epsilon)?;
    let k = iap_scale_k(r_hat1, i_low, weights.epsilon)?;
    let sisc = sisc_loss(r_hat1, r_hat2, sisc_cfg)?.total;

    Ok(assemble_report(
        rec,
        guide,
        color_local,
        color_global,
        iap,
        sisc,
        k,
        weights,
    ))
}
