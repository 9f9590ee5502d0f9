//! Gain-adaptive feature modulation with fixed or seeded weights.
//!
//! An estimated illumination map becomes a spatial gain prior (its
//! ε-guarded reciprocal), is compressed into the log domain, and a small
//! convolutional adapter turns it into per-channel affine parameters that
//! modulate feature tensors: F̃ = F ⊙ (1 + Γ) + Δ. Weights are either all
//! zero (identity behavior), seeded-random, or loaded from a file; nothing
//! here trains.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, ScalarMap};

/// Epsilon of the per-channel standardization inside [`gain_aware_block`].
pub const NORM_EPSILON: f64 = 1e-5;

/// C×H×W tensor of finite values, stored channel-planar.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert!(channels > 0 && height > 0 && width > 0, "empty tensor");
        assert_eq!(
            data.len(),
            channels * height * width,
            "data length mismatch"
        );
        debug_assert!(data.iter().all(|v| v.is_finite()), "non-finite value");
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::new(
            channels,
            height,
            width,
            vec![0.0; channels * height * width],
        )
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Reinterpret an interleaved image as a planar feature tensor.
    pub fn from_image(img: &ImageTensor) -> Self {
        let (h, w, c) = (img.height(), img.width(), img.channels());
        let mut data = vec![0.0; c * h * w];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    data[(ch * h + y) * w + x] = img.get(y, x, ch);
                }
            }
        }
        Self::new(c, h, w, data)
    }

    /// Back to an interleaved image; caller is responsible for value range.
    pub fn to_image(&self) -> ImageTensor {
        assert!(self.channels == 1 || self.channels == 3);
        let mut data = vec![0.0; self.data.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                for ch in 0..self.channels {
                    data[(y * self.width + x) * self.channels + ch] = self.get(ch, y, x);
                }
            }
        }
        ImageTensor::new(self.height, self.width, self.channels, data)
    }

    pub fn from_scalar_map(map: &ScalarMap) -> Self {
        Self::new(1, map.height(), map.width(), map.data().to_vec())
    }
}

/// A plain 2-D convolution (kernel 1×1 or 3×3) with edge replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// out × in × kernel × kernel, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        assert!(kernel == 1 || kernel == 3, "kernel must be 1 or 3");
        Self {
            in_channels,
            out_channels,
            kernel,
            weights: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    /// Weights drawn uniformly from ±1/sqrt(fan-in), biases zero.
    pub fn from_rng(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut conv = Self::zeros(in_channels, out_channels, kernel);
        let bound = 1.0 / ((in_channels * kernel * kernel) as f64).sqrt();
        for w in &mut conv.weights {
            *w = rng.gen_range(-bound..=bound);
        }
        conv
    }

    /// Same-size convolution with replicated borders.
    pub fn apply(&self, t: &FeatureTensor) -> Result<FeatureTensor> {
        if t.channels() != self.in_channels {
            return Err(Error::DimensionMismatch(format!(
                "convolution expects {} input channels, got {}",
                self.in_channels,
                t.channels()
            )));
        }
        let (h, w) = (t.height(), t.width());
        let radius = (self.kernel / 2) as i64;
        let mut out = FeatureTensor::zeros(self.out_channels, h, w);
        for oc in 0..self.out_channels {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for ic in 0..self.in_channels {
                        for ky in 0..self.kernel {
                            for kx in 0..self.kernel {
                                let sy = (y as i64 + ky as i64 - radius).clamp(0, h as i64 - 1);
                                let sx = (x as i64 + kx as i64 - radius).clamp(0, w as i64 - 1);
                                let wgt =
                                    self.weights[((oc * self.in_channels + ic) * self.kernel + ky)
                                        * self.kernel
                                        + kx];
                                acc += wgt * t.get(ic, sy as usize, sx as usize);
                            }
                        }
                    }
                    out.set(oc, y, x, acc + self.bias[oc]);
                }
            }
        }
        Ok(out)
    }
}

/// Adapter + projection weights of the modulation path.
///
/// `adapter` is a 3×3 convolution mapping the single-channel log gain to
/// `c_hidden` latent channels; `proj` is a 1×1 convolution mapping the
/// latent channels to 2·C channels that split into the scale Γ and shift Δ.
#[derive(Debug, Clone, PartialEq)]
pub struct GafmParams {
    pub adapter: Conv2d,
    pub proj: Conv2d,
    /// Seed recorded when the weights were randomly initialized.
    pub seed: Option<u64>,
}

impl GafmParams {
    /// All-zero weights: modulation becomes the identity map.
    pub fn zeros(c_hidden: usize, channels: usize) -> Self {
        Self {
            adapter: Conv2d::zeros(1, c_hidden, 3),
            proj: Conv2d::zeros(c_hidden, 2 * channels, 1),
            seed: None,
        }
    }

    /// Seeded random weights for property tests and demos.
    pub fn seeded(c_hidden: usize, channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            adapter: Conv2d::from_rng(1, c_hidden, 3, &mut rng),
            proj: Conv2d::from_rng(c_hidden, 2 * channels, 1, &mut rng),
            seed: Some(seed),
        }
    }

    pub fn c_hidden(&self) -> usize {
        self.adapter.out_channels
    }

    pub fn channels(&self) -> usize {
        self.proj.out_channels / 2
    }
}

/// Spatial gain prior 1 / (L̂ + ε): strictly positive, finite, large where
/// the scene was dark.
pub fn gain_prior(l_hat: &ScalarMap, epsilon: f64) -> ScalarMap {
    debug_assert!(
        l_hat.data().iter().all(|&v| v >= 0.0),
        "negative illumination"
    );
    assert!(epsilon > 0.0);
    l_hat.map(|v| 1.0 / (v + epsilon))
}

/// Natural log of a strictly positive gain map.
pub fn log_gain(g_prior: &ScalarMap) -> ScalarMap {
    debug_assert!(
        g_prior.data().iter().all(|&v| v > 0.0),
        "gain must be positive"
    );
    g_prior.map(f64::ln)
}

/// (C, H, W) → (C·f², H/f, W/f) block-to-channel rearrangement.
/// Output channel c·f² + dy·f + dx at (y, x) reads input channel c at
/// (y·f + dy, x·f + dx).
pub fn pixel_unshuffle(t: &FeatureTensor, factor: usize) -> Result<FeatureTensor> {
    assert!(factor >= 1);
    if !t.height().is_multiple_of(factor) || !t.width().is_multiple_of(factor) {
        return Err(Error::DimensionMismatch(format!(
            "spatial dims {}x{} not divisible by factor {factor}",
            t.height(),
            t.width()
        )));
    }
    let (c, h, w) = (t.channels(), t.height() / factor, t.width() / factor);
    let mut out = FeatureTensor::zeros(c * factor * factor, h, w);
    for ic in 0..c {
        for dy in 0..factor {
            for dx in 0..factor {
                let oc = ic * factor * factor + dy * factor + dx;
                for y in 0..h {
                    for x in 0..w {
                        out.set(oc, y, x, t.get(ic, y * factor + dy, x * factor + dx));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Exact inverse of [`pixel_unshuffle`].
pub fn pixel_shuffle(t: &FeatureTensor, factor: usize) -> Result<FeatureTensor> {
    assert!(factor >= 1);
    if !t.channels().is_multiple_of(factor * factor) {
        return Err(Error::DimensionMismatch(format!(
            "{} channels not divisible by factor^2 = {}",
            t.channels(),
            factor * factor
        )));
    }
    let c = t.channels() / (factor * factor);
    let (h, w) = (t.height() * factor, t.width() * factor);
    let mut out = FeatureTensor::zeros(c, h, w);
    for oc in 0..c {
        for dy in 0..factor {
            for dx in 0..factor {
                let ic = oc * factor * factor + dy * factor + dx;
                for y in 0..t.height() {
                    for x in 0..t.width() {
                        out.set(oc, y * factor + dy, x * factor + dx, t.get(ic, y, x));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// 3×3 replicate-padded convolution lifting the log gain into the latent
/// space.
pub fn smoother_adapter(g_log: &ScalarMap, params: &GafmParams) -> Result<FeatureTensor> {
    params.adapter.apply(&FeatureTensor::from_scalar_map(g_log))
}

/// Produce (Γ, Δ) from the log gain: adapter → 1×1 projection → channel
/// split into two C-channel tensors.
pub fn modulation_params(
    g_log: &ScalarMap,
    params: &GafmParams,
) -> Result<(FeatureTensor, FeatureTensor)> {
    let hidden = smoother_adapter(g_log, params)?;
    let both = params.proj.apply(&hidden)?;
    let c = both.channels() / 2;
    let (h, w) = (both.height(), both.width());
    let plane = h * w;
    let gamma = FeatureTensor::new(c, h, w, both.data()[..c * plane].to_vec());
    let delta = FeatureTensor::new(c, h, w, both.data()[c * plane..].to_vec());
    Ok((gamma, delta))
}

/// Affine feature modulation F̃ = F ⊙ (1 + Γ) + Δ with (Γ, Δ) derived from
/// the log gain. The projection must emit exactly 2× the feature channels.
pub fn gafm_modulate(
    f: &FeatureTensor,
    g_log: &ScalarMap,
    params: &GafmParams,
) -> Result<FeatureTensor> {
    if (g_log.height(), g_log.width()) != (f.height(), f.width()) {
        return Err(Error::DimensionMismatch(format!(
            "gain map {}x{} vs features {}x{}",
            g_log.height(),
            g_log.width(),
            f.height(),
            f.width()
        )));
    }
    if params.proj.out_channels != 2 * f.channels() {
        return Err(Error::DimensionMismatch(format!(
            "projection emits {} channels, features need {}",
            params.proj.out_channels,
            2 * f.channels()
        )));
    }
    let (gamma, delta) = modulation_params(g_log, params)?;
    let mut out = f.clone();
    for c in 0..f.channels() {
        for y in 0..f.height() {
            for x in 0..f.width() {
                let v = f.get(c, y, x) * (1.0 + gamma.get(c, y, x)) + delta.get(c, y, x);
                out.set(c, y, x, v);
            }
        }
    }
    Ok(out)
}

/// Mean absolute difference between a noisy reflectance and its denoised
/// reconstruction.
pub fn denoise_loss(r_hat: &ImageTensor, i_clean_hat: &ImageTensor) -> Result<f64> {
    if !r_hat.same_shape(i_clean_hat) {
        return Err(Error::DimensionMismatch(format!(
            "denoise_loss inputs {} vs {}",
            r_hat.shape_string(),
            i_clean_hat.shape_string()
        )));
    }
    let n = r_hat.data().len() as f64;
    Ok(r_hat
        .data()
        .iter()
        .zip(i_clean_hat.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n)
}

/// Per-channel standardization over spatial positions.
fn channel_norm(f: &FeatureTensor) -> FeatureTensor {
    let plane = f.height() * f.width();
    let mut out = f.clone();
    for c in 0..f.channels() {
        let slice = &f.data()[c * plane..(c + 1) * plane];
        let mean = slice.iter().sum::<f64>() / plane as f64;
        let var = slice.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / plane as f64;
        let inv = 1.0 / (var + NORM_EPSILON).sqrt();
        for y in 0..f.height() {
            for x in 0..f.width() {
                out.set(c, y, x, (f.get(c, y, x) - mean) * inv);
            }
        }
    }
    out
}

/// One residual gain-aware block: standardize → modulate → 3×3 convolution →
/// add the input back.
pub fn gain_aware_block(
    f: &FeatureTensor,
    g_log: &ScalarMap,
    params: &GafmParams,
    conv: &Conv2d,
) -> Result<FeatureTensor> {
    if conv.in_channels != f.channels() || conv.out_channels != f.channels() {
        return Err(Error::DimensionMismatch(format!(
            "block convolution is {}→{}, features have {} channels",
            conv.in_channels,
            conv.out_channels,
            f.channels()
        )));
    }
    let normed = channel_norm(f);
    let modulated = gafm_modulate(&normed, g_log, params)?;
    let refined = conv.apply(&modulated)?;
    let mut out = f.clone();
    for i in 0..out.data().len() {
        let v = out.data()[i] + refined.data()[i];
        out.data_mut()[i] = v;
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct WeightHeader {
    c_hidden: usize,
    channels: usize,
    seed: Option<u64>,
}

const WEIGHT_MAGIC: &[u8; 4] = b"GAFM";

/// Write parameters as a JSON header (shapes, seed) followed by the flat
/// little-endian f32 payload: adapter weights, adapter bias, projection
/// weights, projection bias.
pub fn save_params<P: AsRef<Path>>(params: &GafmParams, path: P) -> Result<()> {
    let path = path.as_ref();
    let header = serde_json::to_vec(&WeightHeader {
        c_hidden: params.c_hidden(),
        channels: params.channels(),
        seed: params.seed,
    })
    .expect("header serializes");
    let mut bytes = Vec::new();
    bytes.extend_from_slice(WEIGHT_MAGIC);
    bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header);
    for group in [
        &params.adapter.weights,
        &params.adapter.bias,
        &params.proj.weights,
        &params.proj.bias,
    ] {
        for &v in group.iter() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(&bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Read parameters written by [`save_params`].
pub fn load_params<P: AsRef<Path>>(path: P) -> Result<GafmParams> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let fail = |msg: &str| Error::InvalidInput(format!("{}: {msg}", path.display()));
    if bytes.len() < 8 || &bytes[..4] != WEIGHT_MAGIC {
        return Err(fail("not a weight file"));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + header_len {
        return Err(fail("truncated header"));
    }
    let header: WeightHeader = serde_json::from_slice(&bytes[8..8 + header_len])
        .map_err(|e| fail(&format!("bad header: {e}")))?;
    let mut params = GafmParams::zeros(header.c_hidden, header.channels);
    params.seed = header.seed;
    let counts = [
        params.adapter.weights.len(),
        params.adapter.bias.len(),
        params.proj.weights.len(),
        params.proj.bias.len(),
    ];
    let expected = counts.iter().sum::<usize>() * 4;
    let payload = &bytes[8 + header_len..];
    if payload.len() != expected {
        return Err(fail(&format!(
            "payload holds {} bytes, shapes need {expected}",
            payload.len()
        )));
    }
    let mut offset = 0usize;
    let mut read_group = |len: usize| -> Vec<f64> {
        let out = payload[offset..offset + len * 4]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        offset += len * 4;
        out
    };
    params.adapter.weights = read_group(counts[0]);
    params.adapter.bias = read_group(counts[1]);
    params.proj.weights = read_group(counts[2]);
    params.proj.bias = read_group(counts[3]);
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_features(seed: u64, c: usize, h: usize, w: usize) -> FeatureTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..c * h * w).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        FeatureTensor::new(c, h, w, data)
    }

    #[test]
    fn gain_prior_values_and_monotonicity() {
        let ones = ScalarMap::filled(2, 2, 1.0);
        let g = gain_prior(&ones, 1e-8);
        assert!(g.data().iter().all(|&v| (v - 1.0).abs() < 1e-7));

        let zeros = ScalarMap::filled(2, 2, 0.0);
        let g = gain_prior(&zeros, 1e-8);
        assert!(g.data().iter().all(|&v| (v - 1e8).abs() < 1.0));

        let ramp = ScalarMap::new(1, 10, (1..=10).map(|i| i as f64 / 10.0).collect());
        let g = gain_prior(&ramp, 1e-8);
        for x in 1..10 {
            assert!(g.get(0, x) < g.get(0, x - 1));
        }
    }

    #[test]
    fn log_gain_values_and_composition() {
        let e = ScalarMap::filled(1, 2, std::f64::consts::E);
        assert!((log_gain(&e).get(0, 0) - 1.0).abs() < 1e-12);
        let one = ScalarMap::filled(1, 2, 1.0);
        assert_eq!(log_gain(&one).get(0, 0), 0.0);

        let ramp = ScalarMap::new(1, 10, (1..=10).map(|i| i as f64 / 10.0).collect());
        let lg = log_gain(&gain_prior(&ramp, 1e-8));
        for x in 1..10 {
            assert!(lg.get(0, x) < lg.get(0, x - 1));
        }
    }

    #[test]
    fn unshuffle_shapes_and_identity_factor() {
        let t = random_features(1, 3, 8, 8);
        assert_eq!(pixel_unshuffle(&t, 1).unwrap(), t);
        let u = pixel_unshuffle(&t, 2).unwrap();
        assert_eq!((u.channels(), u.height(), u.width()), (12, 4, 4));
        assert!(pixel_unshuffle(&random_features(2, 1, 5, 8), 2).is_err());
    }

    #[test]
    fn shuffle_round_trips_bit_exactly() {
        for seed in 0..10 {
            let t = random_features(seed, 3, 8, 12);
            let u = pixel_unshuffle(&t, 2).unwrap();
            let back = pixel_shuffle(&u, 2).unwrap();
            assert_eq!(back, t);
        }
        assert!(pixel_shuffle(&random_features(0, 3, 4, 4), 2).is_err());
    }

    #[test]
    fn adapter_zero_and_center_tap() {
        let g = ScalarMap::new(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let zero = GafmParams::zeros(4, 3);
        let h = smoother_adapter(&g, &zero).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));

        let mut center = GafmParams::zeros(1, 3);
        center.adapter.weights[4] = 1.0; // center tap of the 3x3 kernel
        let h = smoother_adapter(&g, &center).unwrap();
        assert_eq!(h.data(), g.data());
    }

    #[test]
    fn adapter_matches_naive_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = ScalarMap::new(6, 7, (0..42).map(|_| rng.gen_range(-1.0..=1.0)).collect());
        let params = GafmParams::seeded(4, 3, 11);
        let h = smoother_adapter(&g, &params).unwrap();
        for oc in 0..4 {
            for y in 0..6i64 {
                for x in 0..7i64 {
                    let mut acc = params.adapter.bias[oc];
                    for ky in -1i64..=1 {
                        for kx in -1i64..=1 {
                            let sy = (y + ky).clamp(0, 5) as usize;
                            let sx = (x + kx).clamp(0, 6) as usize;
                            let w = params.adapter.weights
                                [(oc * 3 + (ky + 1) as usize) * 3 + (kx + 1) as usize];
                            acc += w * g.get(sy, sx);
                        }
                    }
                    assert!((h.get(oc, y as usize, x as usize) - acc).abs() < 1e-12);
                }
            }
        }

        // constant input stays constant away from the (replicated) border too
        let flat = ScalarMap::filled(6, 7, 0.4);
        let h = smoother_adapter(&flat, &params).unwrap();
        for oc in 0..4 {
            let v = h.get(oc, 3, 3);
            for y in 0..6 {
                for x in 0..7 {
                    assert!((h.get(oc, y, x) - v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn modulate_identity_at_zero_params() {
        let f = random_features(7, 3, 6, 6);
        let g = ScalarMap::filled(6, 6, 0.3);
        let out = gafm_modulate(&f, &g, &GafmParams::zeros(8, 3)).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn modulate_pure_shift() {
        let f = random_features(8, 2, 5, 5);
        let g = ScalarMap::filled(5, 5, 1.7);
        let mut params = GafmParams::zeros(4, 2);
        // zero adapter => hidden = 0; projection bias supplies Γ = 0, Δ = d
        params.proj.bias = vec![0.0, 0.0, 0.25, 0.25];
        let out = gafm_modulate(&f, &g, &params).unwrap();
        for i in 0..f.data().len() {
            assert_eq!(out.data()[i], f.data()[i] + 0.25);
        }
    }

    #[test]
    fn modulate_matches_composition_oracle() {
        let f = random_features(9, 3, 6, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = ScalarMap::new(6, 8, (0..48).map(|_| rng.gen_range(-1.0..=1.0)).collect());
        let params = GafmParams::seeded(5, 3, 21);
        let out = gafm_modulate(&f, &g, &params).unwrap();

        let hidden = params
            .adapter
            .apply(&FeatureTensor::from_scalar_map(&g))
            .unwrap();
        let both = params.proj.apply(&hidden).unwrap();
        for c in 0..3 {
            for y in 0..6 {
                for x in 0..8 {
                    let gamma = both.get(c, y, x);
                    let delta = both.get(c + 3, y, x);
                    let expect = f.get(c, y, x) * (1.0 + gamma) + delta;
                    assert_eq!(out.get(c, y, x), expect);
                }
            }
        }
    }

    #[test]
    fn modulate_rejects_channel_mismatch() {
        let f = random_features(1, 4, 4, 4);
        let g = ScalarMap::filled(4, 4, 0.0);
        let params = GafmParams::zeros(8, 3); // projects to 6 channels, f has 4
        assert!(matches!(
            gafm_modulate(&f, &g, &params),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn unshuffled_modulation_commutes_for_pointwise_adapter() {
        // With a center-tap-only adapter the modulation is pointwise in the
        // gain, so block rearrangement before or after must agree.
        let f = random_features(12, 2, 8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = ScalarMap::new(8, 8, (0..64).map(|_| rng.gen_range(0.1..=2.0)).collect());
        let mut params = GafmParams::seeded(1, 2, 40);
        for (i, w) in params.adapter.weights.iter_mut().enumerate() {
            if i != 4 {
                *w = 0.0;
            }
        }

        let full = gafm_modulate(&f, &g, &params).unwrap();
        let full_un = pixel_unshuffle(&full, 2).unwrap();

        let f_un = pixel_unshuffle(&f, 2).unwrap();
        let g_un = pixel_unshuffle(&FeatureTensor::from_scalar_map(&g), 2).unwrap();
        for phase in 0..4 {
            // gather the phase slice of the unshuffled features
            let mut slice = FeatureTensor::zeros(2, 4, 4);
            for c in 0..2 {
                for y in 0..4 {
                    for x in 0..4 {
                        slice.set(c, y, x, f_un.get(c * 4 + phase, y, x));
                    }
                }
            }
            let g_phase = ScalarMap::new(
                4,
                4,
                (0..16).map(|i| g_un.get(phase, i / 4, i % 4)).collect(),
            );
            let modulated = gafm_modulate(&slice, &g_phase, &params).unwrap();
            for c in 0..2 {
                for y in 0..4 {
                    for x in 0..4 {
                        assert_eq!(
                            modulated.get(c, y, x),
                            full_un.get(c * 4 + phase, y, x),
                            "phase {phase} channel {c} at ({y},{x})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn denoise_loss_cases() {
        let a = ImageTensor::filled(4, 4, 3, 0.5);
        assert_eq!(denoise_loss(&a, &a).unwrap(), 0.0);
        let b = ImageTensor::filled(4, 4, 3, 0.8);
        assert!((denoise_loss(&a, &b).unwrap() - 0.3).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = ImageTensor::new(3, 5, 1, (0..15).map(|_| rng.gen_range(0.0..=1.0)).collect());
        let y = ImageTensor::new(3, 5, 1, (0..15).map(|_| rng.gen_range(0.0..=1.0)).collect());
        let expect = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 15.0;
        assert_eq!(denoise_loss(&x, &y).unwrap(), expect);

        let c = ImageTensor::filled(4, 5, 3, 0.5);
        assert!(denoise_loss(&a, &c).is_err());
    }

    #[test]
    fn block_identity_with_zero_branch() {
        let f = random_features(13, 3, 8, 8);
        let g = ScalarMap::filled(8, 8, 0.7);
        let out =
            gain_aware_block(&f, &g, &GafmParams::zeros(4, 3), &Conv2d::zeros(3, 3, 3)).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn block_preserves_shape_with_random_params() {
        let f = random_features(14, 3, 10, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let g = ScalarMap::new(10, 6, (0..60).map(|_| rng.gen_range(-1.0..=1.0)).collect());
        let params = GafmParams::seeded(4, 3, 16);
        let conv = Conv2d::from_rng(3, 3, 3, &mut rng);
        let out = gain_aware_block(&f, &g, &params, &conv).unwrap();
        assert_eq!(
            (out.channels(), out.height(), out.width()),
            (f.channels(), f.height(), f.width())
        );
    }

    #[test]
    fn block_gain_influence_is_local() {
        let f = random_features(17, 2, 12, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let g = ScalarMap::new(
            12,
            12,
            (0..144).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        );
        let params = GafmParams::seeded(3, 2, 19);
        let conv = Conv2d::from_rng(2, 2, 3, &mut rng);
        let base = gain_aware_block(&f, &g, &params, &conv).unwrap();

        let (py, px) = (5usize, 7usize);
        let mut g2 = g.clone();
        g2.set(py, px, g.get(py, px) + 1.0);
        let bumped = gain_aware_block(&f, &g2, &params, &conv).unwrap();
        for c in 0..2 {
            for y in 0..12 {
                for x in 0..12 {
                    let changed = base.get(c, y, x) != bumped.get(c, y, x);
                    let inside =
                        (y as i64 - py as i64).abs() <= 2 && (x as i64 - px as i64).abs() <= 2;
                    if !inside {
                        assert!(!changed, "leak at ({c},{y},{x})");
                    }
                }
            }
        }
    }

    #[test]
    fn weight_file_round_trip() {
        let params = GafmParams::seeded(6, 3, 77);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        save_params(&params, &path).unwrap();
        let back = load_params(&path).unwrap();
        assert_eq!(back.seed, Some(77));
        assert_eq!(back.c_hidden(), 6);
        assert_eq!(back.channels(), 3);
        for (a, b) in params.adapter.weights.iter().zip(&back.adapter.weights) {
            assert!((a - b).abs() <= f32::EPSILON as f64 * a.abs().max(1.0));
        }
        // corrupt magic
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(load_params(&path).is_err());
    }
}
