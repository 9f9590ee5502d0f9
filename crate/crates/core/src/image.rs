//! Raster types and the pixel-level utilities every other module builds on:
//! PNG I/O, luminance, quantiles, patch statistics and Gaussian filtering.
//!
//! All pixel data is held as `f64` in row-major order; 8-bit quantization
//! happens only at the PNG boundary. Every function here is pure.

use std::path::Path;

use crate::error::{Error, Result};

/// Rec.601 luma weights. Chosen so a gray pixel maps to its own value.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// An H×W×C raster with samples stored row-major, pixel-interleaved.
///
/// Channels are 1 (grayscale) or 3 (RGB). Samples are nominally in [0, 1];
/// operations that can leave that range say so, and operations that clip
/// declare it in their contract.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    /// Wrap raw samples. Panics if the shape is inconsistent; finiteness is
    /// a debug-checked invariant (producers guard it with epsilon terms).
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        assert!(height > 0 && width > 0, "empty image");
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        assert_eq!(
            data.len(),
            height * width * channels,
            "data length mismatch"
        );
        debug_assert!(data.iter().all(|v| v.is_finite()), "non-finite sample");
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    /// Constant-valued image.
    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

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

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.index(y, x, c);
        self.data[i] = v;
    }

    /// True when both spatial dimensions and channel counts agree.
    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// A single-channel H×W map of finite values; the range is documented by
/// whichever operation produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ScalarMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Self {
        assert!(height > 0 && width > 0, "empty map");
        assert_eq!(data.len(), height * width, "data length mismatch");
        debug_assert!(data.iter().all(|v| v.is_finite()), "non-finite sample");
        Self {
            height,
            width,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self::new(height, width, vec![value; height * width])
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

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Elementwise map into a new `ScalarMap`.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> ScalarMap {
        ScalarMap::new(
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }
}

/// Load an 8-bit grayscale or RGB PNG, scaling samples to [0, 1] as v/255.
pub fn load_image<P: AsRef<Path>>(path: P) -> Result<ImageTensor> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let decoded = reader.decode().map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, raw) = match decoded {
        image::DynamicImage::ImageLuma8(img) => (1, img.into_raw()),
        image::DynamicImage::ImageRgb8(img) => (3, img.into_raw()),
        other => {
            return Err(Error::Unsupported {
                path: path.to_path_buf(),
                detail: format!("expected 8-bit grayscale or RGB, got {:?}", other.color()),
            })
        }
    };
    let data = raw.iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(ImageTensor::new(height, width, channels, data))
}

/// Save as an 8-bit PNG; sample v encodes as round(clip(v, 0, 1) * 255).
pub fn save_image<P: AsRef<Path>>(img: &ImageTensor, path: P) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let result = match img.channels() {
        1 => image::GrayImage::from_raw(w, h, bytes)
            .expect("buffer sized from tensor")
            .save(path),
        3 => image::RgbImage::from_raw(w, h, bytes)
            .expect("buffer sized from tensor")
            .save(path),
        _ => unreachable!("ImageTensor enforces 1 or 3 channels"),
    };
    result.map_err(|source| match source {
        image::ImageError::IoError(e) => Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
        other => Error::Decode {
            path: path.to_path_buf(),
            source: other,
        },
    })
}

/// Rec.601 luminance; single-channel images pass through as a copy.
pub fn luminance(img: &ImageTensor) -> ScalarMap {
    if img.channels() == 1 {
        return ScalarMap::new(img.height(), img.width(), img.data().to_vec());
    }
    let data = img
        .data()
        .chunks_exact(3)
        .map(|px| LUMA_WEIGHTS[0] * px[0] + LUMA_WEIGHTS[1] * px[1] + LUMA_WEIGHTS[2] * px[2])
        .collect();
    ScalarMap::new(img.height(), img.width(), data)
}

/// Lower empirical quantile without interpolation: the value at ascending
/// sorted index floor(q * (n - 1)).
pub fn quantile(map: &ScalarMap, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidInput(format!(
            "quantile fraction q={q} outside [0, 1]"
        )));
    }
    let mut sorted = map.data().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let idx = (q * (sorted.len() - 1) as f64).floor() as usize;
    Ok(sorted[idx])
}

/// Tile the image into non-overlapping `patch`×`patch` tiles (edge tiles may
/// be smaller) and replicate each tile's maximum over all channels and pixels
/// back to full resolution.
pub fn patch_max(img: &ImageTensor, patch: usize) -> ScalarMap {
    assert!(patch >= 1, "patch must be >= 1");
    let (h, w) = (img.height(), img.width());
    let mut out = vec![0.0; h * w];
    let mut ty = 0;
    while ty < h {
        let th = (ty + patch).min(h);
        let mut tx = 0;
        while tx < w {
            let tw = (tx + patch).min(w);
            let mut m = f64::NEG_INFINITY;
            for y in ty..th {
                for x in tx..tw {
                    for c in 0..img.channels() {
                        m = m.max(img.get(y, x, c));
                    }
                }
            }
            for y in ty..th {
                for x in tx..tw {
                    out[y * w + x] = m;
                }
            }
            tx = tw;
        }
        ty = th;
    }
    ScalarMap::new(h, w, out)
}

/// Separable Gaussian low-pass with kernel radius ceil(4σ), kernel
/// normalized to unit sum and borders handled by edge replication.
///
/// Each 1-D pass is a convex combination of input samples, so the output
/// never leaves the input's value range; constants are preserved exactly.
pub fn gaussian_filter(map: &ScalarMap, sigma: f64) -> ScalarMap {
    assert!(sigma > 0.0, "sigma must be positive");
    let radius = (4.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= sum;
    }

    let (h, w) = (map.height(), map.width());
    let horizontal = convolve_rows(map.data(), h, w, &kernel, radius);
    let data = {
        // Transpose, filter rows again, transpose back.
        let t = transpose(&horizontal, h, w);
        let filtered = convolve_rows(&t, w, h, &kernel, radius);
        transpose(&filtered, w, h)
    };
    ScalarMap::new(h, w, data)
}

fn convolve_rows(data: &[f64], rows: usize, cols: usize, kernel: &[f64], radius: i64) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        let row = &data[r * cols..(r + 1) * cols];
        let (lo, hi) = row
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        for c in 0..cols {
            let mut acc = 0.0;
            for (k, &wk) in kernel.iter().enumerate() {
                let src = (c as i64 + k as i64 - radius).clamp(0, cols as i64 - 1) as usize;
                acc += wk * row[src];
            }
            // Convex weights: clamp away rounding drift at the range edges.
            out[r * cols + c] = acc.clamp(lo, hi);
        }
    }
    out
}

fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Per-pixel chroma spread max(R,G,B) − min(R,G,B).
pub fn saturation(img: &ImageTensor) -> ScalarMap {
    assert_eq!(img.channels(), 3, "saturation requires an RGB image");
    let data = img
        .data()
        .chunks_exact(3)
        .map(|px| {
            let max = px[0].max(px[1]).max(px[2]);
            let min = px[0].min(px[1]).min(px[2]);
            max - min
        })
        .collect();
    ScalarMap::new(img.height(), img.width(), data)
}
