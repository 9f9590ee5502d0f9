//! Fourier-domain machinery: amplitude spectra, concentric radial frequency
//! bands, band log-energies, the cross-frequency correlation (CFC) matrix,
//! the binary frequency mask and the shift-invariant spectral consistency
//! loss built from them.
//!
//! The loss compares two images through (a) the masked difference of their
//! CFC matrices and (b) the mean absolute difference of their amplitude
//! spectra. Both views ignore spatial phase, so circularly shifted images
//! compare as equal.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// Per-channel amplitude spectrum with the zero-frequency bin shifted to the
/// spatial center (row height/2, column width/2). Layout matches
/// [`ImageTensor`]: row-major, pixel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSpectrum {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl AmplitudeSpectrum {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

/// Concentric radial band layout over a centered spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPartition {
    k_bands: usize,
    /// Radii r_0 = 0 < r_1 < … < r_K = R_max.
    thresholds: Vec<f64>,
    /// Band index per frequency bin, row-major.
    membership: Vec<usize>,
    height: usize,
    width: usize,
}

impl BandPartition {
    pub fn k_bands(&self) -> usize {
        self.k_bands
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of bins in each band.
    pub fn populations(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.k_bands];
        for &b in &self.membership {
            counts[b] += 1;
        }
        counts
    }
}

/// K×K normalized cross-frequency correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CfcMatrix {
    k: usize,
    /// Row-major K×K values.
    values: Vec<f64>,
}

impl CfcMatrix {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.values[m * self.k + n]
    }

    pub fn trace(&self) -> f64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }
}

/// Binary symmetric mask over band pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqMask {
    k: usize,
    values: Vec<f64>,
}

impl FreqMask {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.values[m * self.k + n]
    }
}

/// Configuration of the spectral consistency loss.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiscConfig {
    /// Number of radial bands K.
    pub k_bands: usize,
    /// First retained band (inclusive).
    pub keep_lo: usize,
    /// Last retained band (inclusive).
    pub keep_hi: usize,
    /// Weight of the amplitude penalty.
    pub gamma: f64,
    /// Stabilizer for energies and the correlation denominator.
    pub epsilon: f64,
}

impl Default for SiscConfig {
    fn default() -> Self {
        // Mid bands 2..=5 of 8 survive; the extremes carry illumination
        // offsets and amplified noise rather than shared texture.
        Self {
            k_bands: 8,
            keep_lo: 2,
            keep_hi: 5,
            gamma: 1.0,
            epsilon: 1e-8,
        }
    }
}

impl SiscConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_bands < 2 {
            return Err(Error::InvalidConfig {
                field: "sisc.k_bands",
                reason: format!("must be >= 2, got {}", self.k_bands),
            });
        }
        if !(self.keep_lo <= self.keep_hi && self.keep_hi < self.k_bands) {
            return Err(Error::InvalidConfig {
                field: "sisc.keep_lo/keep_hi",
                reason: format!(
                    "must satisfy 0 <= keep_lo <= keep_hi < k_bands, got {}..{} of {}",
                    self.keep_lo, self.keep_hi, self.k_bands
                ),
            });
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidConfig {
                field: "sisc.gamma",
                reason: format!("must be >= 0, got {}", self.gamma),
            });
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidConfig {
                field: "sisc.epsilon",
                reason: format!("must be a finite positive value, got {}", self.epsilon),
            });
        }
        Ok(())
    }
}

/// Loss value with its two summands. `amplitude_term` is the raw mean
/// absolute amplitude difference; `total = correlation_term + gamma *
/// amplitude_term`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SiscBreakdown {
    pub total: f64,
    pub correlation_term: f64,
    pub amplitude_term: f64,
}

/// Unnormalized forward 2-D DFT per channel, magnitude, zero frequency
/// shifted to the center bin.
pub fn amplitude_spectrum(img: &ImageTensor) -> AmplitudeSpectrum {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let mut planner = FftPlanner::new();
    let fft_w = planner.plan_fft_forward(w);
    let fft_h = planner.plan_fft_forward(h);
    let mut out = vec![0.0f64; h * w * c];

    for ch in 0..c {
        let mut buf: Vec<Complex<f64>> = (0..h * w)
            .map(|i| Complex::new(img.data()[i * c + ch], 0.0))
            .collect();
        // rows
        for row in buf.chunks_exact_mut(w) {
            fft_w.process(row);
        }
        // columns via transpose
        let mut t: Vec<Complex<f64>> = vec![Complex::default(); h * w];
        for y in 0..h {
            for x in 0..w {
                t[x * h + y] = buf[y * w + x];
            }
        }
        for col in t.chunks_exact_mut(h) {
            fft_h.process(col);
        }
        // shift zero frequency to (h/2, w/2) while transposing back
        for x in 0..w {
            for y in 0..h {
                let sy = (y + h / 2) % h;
                let sx = (x + w / 2) % w;
                out[(sy * w + sx) * c + ch] = t[x * h + y].norm();
            }
        }
    }

    AmplitudeSpectrum {
        height: h,
        width: w,
        channels: c,
        data: out,
    }
}

/// Evenly spaced radial thresholds on [0, R_max]; each bin joins the band
/// whose half-open interval [r_{k-1}, r_k) contains its centered radius.
/// Bins exactly at R_max fold into the last band.
pub fn radial_bands(height: usize, width: usize, k: usize) -> BandPartition {
    assert!(k >= 2, "need at least two bands");
    let (cy, cx) = (height / 2, width / 2);
    let r_max = ((cy * cy + cx * cx) as f64).sqrt();
    let thresholds: Vec<f64> = (0..=k).map(|i| r_max * i as f64 / k as f64).collect();

    let mut membership = vec![0usize; height * width];
    for y in 0..height {
        for x in 0..width {
            let du = y as f64 - cy as f64;
            let dv = x as f64 - cx as f64;
            let r = (du * du + dv * dv).sqrt();
            let mut idx = ((r / r_max) * k as f64) as usize;
            if idx >= k {
                idx = k - 1;
            }
            // settle float boundary cases against the literal thresholds
            while idx > 0 && r < thresholds[idx] {
                idx -= 1;
            }
            while idx + 1 < k && r >= thresholds[idx + 1] {
                idx += 1;
            }
            membership[y * width + x] = idx;
        }
    }

    BandPartition {
        k_bands: k,
        thresholds,
        membership,
        height,
        width,
    }
}

/// Average log-energy per band: E_k = ln(mean of A² over the band's bins and
/// all channels + ε). Errors if a band holds no bins.
pub fn band_log_energy(
    spec: &AmplitudeSpectrum,
    bands: &BandPartition,
    epsilon: f64,
) -> Result<Vec<f64>> {
    assert_eq!(
        (spec.height(), spec.width()),
        (bands.height(), bands.width()),
        "spectrum and band layout disagree"
    );
    let k = bands.k_bands();
    let mut sums = vec![0.0f64; k];
    let mut counts = vec![0usize; k];
    let c = spec.channels();
    for (bin, &band) in bands.membership().iter().enumerate() {
        for ch in 0..c {
            let a = spec.data()[bin * c + ch];
            sums[band] += a * a;
        }
        counts[band] += 1;
    }
    let mut energies = Vec::with_capacity(k);
    for band in 0..k {
        if counts[band] == 0 {
            return Err(Error::EmptyBand { band });
        }
        energies.push((sums[band] / (counts[band] * c) as f64 + epsilon).ln());
    }
    Ok(energies)
}

/// Normalized outer product of the centered energy vector. The denominator
/// is the scalar population variance plus ε, so trace(C) ≈ K for any
/// non-constant energy vector and a constant vector maps to the zero matrix.
pub fn cfc_matrix(energies: &[f64], epsilon: f64) -> CfcMatrix {
    let k = energies.len();
    assert!(k >= 2, "need at least two bands");
    // Shifted mean: constant vectors center to exact zeros.
    let shift = energies[0];
    let mean_d = energies.iter().map(|e| e - shift).sum::<f64>() / k as f64;
    let centered: Vec<f64> = energies.iter().map(|e| (e - shift) - mean_d).collect();
    let var = centered.iter().map(|c| c * c).sum::<f64>() / k as f64;
    let denom = var + epsilon;
    let mut values = vec![0.0f64; k * k];
    for m in 0..k {
        for n in 0..k {
            values[m * k + n] = centered[m] * centered[n] / denom;
        }
    }
    CfcMatrix { k, values }
}

/// M\[m\]\[n\] = 1 iff both m and n lie in the retained band range.
pub fn freq_mask(cfg: &SiscConfig) -> FreqMask {
    let k = cfg.k_bands;
    let keep = cfg.keep_lo..=cfg.keep_hi;
    let mut values = vec![0.0f64; k * k];
    for m in 0..k {
        for n in 0..k {
            if keep.contains(&m) && keep.contains(&n) {
                values[m * k + n] = 1.0;
            }
        }
    }
    FreqMask { k, values }
}

/// Shift-invariant spectral consistency loss between two equally sized
/// images: Frobenius norm of the masked CFC difference plus γ times the mean
/// absolute amplitude difference over all bins and channels.
pub fn sisc_loss(
    img1: &ImageTensor,
    img2: &ImageTensor,
    cfg: &SiscConfig,
) -> Result<SiscBreakdown> {
    cfg.validate()?;
    if !img1.same_shape(img2) {
        return Err(Error::DimensionMismatch(format!(
            "sisc_loss inputs {} vs {}",
            img1.shape_string(),
            img2.shape_string()
        )));
    }
    let spec1 = amplitude_spectrum(img1);
    let spec2 = amplitude_spectrum(img2);
    let bands = radial_bands(img1.height(), img1.width(), cfg.k_bands);
    let e1 = band_log_energy(&spec1, &bands, cfg.epsilon)?;
    let e2 = band_log_energy(&spec2, &bands, cfg.epsilon)?;
    let c1 = cfc_matrix(&e1, cfg.epsilon);
    let c2 = cfc_matrix(&e2, cfg.epsilon);
    let mask = freq_mask(cfg);

    let mut sq = 0.0f64;
    for i in 0..c1.values().len() {
        let d = mask.values()[i] * (c1.values()[i] - c2.values()[i]);
        sq += d * d;
    }
    let correlation_term = sq.sqrt();

    let n = spec1.data().len() as f64;
    let amplitude_term = spec1
        .data()
        .iter()
        .zip(spec2.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n;

    Ok(SiscBreakdown {
        total: correlation_term + cfg.gamma * amplitude_term,
        correlation_term,
        amplitude_term,
    })
}

/// Log-scaled, min-max normalized view of a spectrum for visual export.
/// Returns the image plus the (min, max) of ln(1 + A) used for scaling.
pub fn spectrum_log_image(spec: &AmplitudeSpectrum) -> (ImageTensor, (f64, f64)) {
    let logged: Vec<f64> = spec.data().iter().map(|&a| (1.0 + a).ln()).collect();
    let (lo, hi) = logged
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let data = logged.iter().map(|&v| (v - lo) / span).collect();
    (
        ImageTensor::new(spec.height(), spec.width(), spec.channels(), data),
        (lo, hi),
    )
}
