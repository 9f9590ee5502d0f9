//! Luminance-distribution analytics: per-image mean-luminance samples,
//! 1-D Wasserstein distance between empirical distributions, Gaussian
//! kernel density estimation, and deterministic CSV export.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{self, load_image};

/// Scalar luminance samples in [0, 1] with a label naming their origin.
#[derive(Debug, Clone, PartialEq)]
pub struct LuminanceSampleSet {
    pub samples: Vec<f64>,
    pub source: String,
}

impl LuminanceSampleSet {
    pub fn new(samples: Vec<f64>, source: impl Into<String>) -> Self {
        debug_assert!(samples.iter().all(|v| (0.0..=1.0).contains(v)));
        Self {
            samples,
            source: source.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Density curve on an ascending grid; trapezoidal mass is 1 within 1e-3.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityCurve {
    /// Trapezoidal integral of the density over the grid.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }
}

fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(g, v)| 0.5 * (v[0] + v[1]) * (g[1] - g[0]))
        .sum()
}

/// Result of collecting samples from a file list: the usable set plus any
/// per-file failures. Collection fails outright only when every file fails.
#[derive(Debug)]
pub struct SampleCollection {
    pub set: LuminanceSampleSet,
    pub failures: Vec<(PathBuf, Error)>,
}

/// One sample per image: the spatial mean of its luminance.
pub fn mean_luminance_set(paths: &[PathBuf], label: &str) -> Result<SampleCollection> {
    collect_samples(paths, label, |samples, img| {
        samples.push(image::luminance(img).mean());
    })
}

/// Every pixel's luminance from every image, for whole-corpus curves.
pub fn pixel_luminance_set(paths: &[PathBuf], label: &str) -> Result<SampleCollection> {
    collect_samples(paths, label, |samples, img| {
        samples.extend_from_slice(image::luminance(img).data());
    })
}

fn collect_samples(
    paths: &[PathBuf],
    label: &str,
    mut push: impl FnMut(&mut Vec<f64>, &crate::image::ImageTensor),
) -> Result<SampleCollection> {
    if paths.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no image files supplied for set '{label}'"
        )));
    }
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for path in paths {
        match load_image(path) {
            Ok(img) => push(&mut samples, &img),
            Err(e) => failures.push((path.clone(), e)),
        }
    }
    if samples.is_empty() {
        return Err(Error::InvalidInput(format!(
            "all {} file(s) of set '{label}' failed to decode",
            paths.len()
        )));
    }
    Ok(SampleCollection {
        set: LuminanceSampleSet::new(samples, label),
        failures,
    })
}

/// 1-D Wasserstein distance between the empirical distributions of two
/// sample sets. Equal sizes reduce to the mean absolute difference of the
/// ascending sorts; unequal sizes integrate the inverse-CDF difference over
/// the merged quantile breakpoints.
pub fn wasserstein_1d(xs: &LuminanceSampleSet, ys: &LuminanceSampleSet) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::InvalidInput(
            "wasserstein distance needs non-empty sample sets".into(),
        ));
    }
    let mut a = xs.samples.clone();
    let mut b = ys.samples.clone();
    a.sort_by(|p, q| p.partial_cmp(q).expect("finite samples"));
    b.sort_by(|p, q| p.partial_cmp(q).expect("finite samples"));

    if a.len() == b.len() {
        let n = a.len() as f64;
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n);
    }

    // Piecewise-constant inverse CDFs: merge the quantile breakpoints
    // {i/n} ∪ {j/m}; on each sub-interval both quantile functions are
    // constant, so the integral is a weighted sum of |x_(i) - y_(j)|.
    let (n, m) = (a.len(), b.len());
    let mut cuts: Vec<f64> = Vec::with_capacity(n + m + 1);
    cuts.push(0.0);
    cuts.extend((1..n).map(|i| i as f64 / n as f64));
    cuts.extend((1..m).map(|j| j as f64 / m as f64));
    cuts.push(1.0);
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    cuts.dedup();

    let mut dist = 0.0;
    for win in cuts.windows(2) {
        let (lo, hi) = (win[0], win[1]);
        let q = 0.5 * (lo + hi);
        let xi = ((q * n as f64).floor() as usize).min(n - 1);
        let yj = ((q * m as f64).floor() as usize).min(m - 1);
        dist += (a[xi] - b[yj]).abs() * (hi - lo);
    }
    Ok(dist)
}

/// Gaussian-kernel density on a uniform grid spanning the samples plus four
/// bandwidths of margin (so at least 99.99% of each kernel's mass lies on
/// the grid). `bandwidth = None` selects Silverman's rule
/// 1.06·σ̂·n^(−1/5) with the sample standard deviation floored at 1e-3.
pub fn kde(
    samples: &LuminanceSampleSet,
    grid_points: usize,
    bandwidth: Option<f64>,
) -> Result<DensityCurve> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("kde needs at least one sample".into()));
    }
    if grid_points < 2 {
        return Err(Error::InvalidInput(
            "kde needs at least two grid points".into(),
        ));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 => h,
        Some(h) => {
            return Err(Error::InvalidInput(format!(
                "bandwidth must be positive, got {h}"
            )))
        }
        None => {
            if samples.len() < 2 {
                return Err(Error::InvalidInput(
                    "automatic bandwidth needs at least two samples".into(),
                ));
            }
            let n = samples.len() as f64;
            let mean = samples.samples.iter().sum::<f64>() / n;
            let var = samples
                .samples
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / (n - 1.0);
            let sd = var.sqrt().max(1e-3);
            1.06 * sd * n.powf(-0.2)
        }
    };

    let lo = samples
        .samples
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        - 4.0 * h;
    let hi = samples
        .samples
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        + 4.0 * h;
    let step = (hi - lo) / (grid_points - 1) as f64;
    let grid: Vec<f64> = (0..grid_points).map(|i| lo + step * i as f64).collect();
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density: Vec<f64> = grid
        .iter()
        .map(|&g| {
            samples
                .samples
                .iter()
                .map(|&s| {
                    let z = (g - s) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();

    Ok(DensityCurve {
        grid,
        density,
        bandwidth: h,
    })
}

fn format_value(v: f64) -> String {
    // 9 significant digits, '.' decimal, locale independent
    format!("{v:.8e}")
}

/// Write a row-major matrix as UTF-8 CSV with a band-index header row.
/// Byte output is deterministic for identical inputs.
pub fn export_matrix_csv<P: AsRef<Path>>(rows: &[Vec<f64>], path: P) -> Result<()> {
    let path = path.as_ref();
    let cols = rows.first().map_or(0, |r| r.len());
    let mut out = String::new();
    let header: Vec<String> = (0..cols).map(|i| format!("band_{i}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        assert_eq!(row.len(), cols, "ragged matrix");
        let line: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write a density curve as `grid,density` CSV rows under a header line.
pub fn export_curve_csv<P: AsRef<Path>>(curve: &DensityCurve, path: P) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("grid,density\n");
    for (g, d) in curve.grid.iter().zip(&curve.density) {
        out.push_str(&format_value(*g));
        out.push(',');
        out.push_str(&format_value(*d));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
