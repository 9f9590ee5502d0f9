//! Spatial sub-sampling of one image into two half-resolution sub-images.
//!
//! The image is split into non-overlapping 2×2 cells; inside each cell a
//! seeded draw picks two distinct positions, one feeding each sub-image.
//! Both sub-images therefore share the scene structure while carrying
//! independent noise realizations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// Identifier of the selection generator, recorded in output metadata so a
/// run can be reproduced elsewhere: a ChaCha8 stream seeded with the u64
/// seed, consumed two draws per cell with cells visited in row-major order
/// (draw 1: position in 0..4; draw 2: position in 0..3, skipping draw 1).
/// Cell positions are numbered row-major: 0=(0,0), 1=(0,1), 2=(1,0), 3=(1,1).
pub const GENERATOR_ID: &str = "chacha8/2x2-cells-rowmajor";

/// The two sub-images plus the seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsamplePair {
    pub sub1: ImageTensor,
    pub sub2: ImageTensor,
    pub seed: u64,
}

/// Split `img` into two half-resolution sub-images with per-cell distinct
/// pixel picks. Odd trailing rows/columns are dropped. Deterministic for a
/// given seed.
pub fn neighbor_subsample(img: &ImageTensor, seed: u64) -> Result<SubsamplePair> {
    let h = img.height() - img.height() % 2;
    let w = img.width() - img.width() % 2;
    if h < 2 || w < 2 {
        return Err(Error::InvalidInput(format!(
            "image {} too small to sub-sample (needs at least 2x2)",
            img.shape_string()
        )));
    }
    let c = img.channels();
    let (sh, sw) = (h / 2, w / 2);
    let mut sub1 = vec![0.0; sh * sw * c];
    let mut sub2 = vec![0.0; sh * sw * c];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for cy in 0..sh {
        for cx in 0..sw {
            let first = rng.gen_range(0..4usize);
            let second = {
                let r = rng.gen_range(0..3usize);
                if r >= first {
                    r + 1
                } else {
                    r
                }
            };
            let src = |pos: usize, ch: usize| {
                let (dy, dx) = (pos / 2, pos % 2);
                img.get(2 * cy + dy, 2 * cx + dx, ch)
            };
            let at = (cy * sw + cx) * c;
            for ch in 0..c {
                sub1[at + ch] = src(first, ch);
                sub2[at + ch] = src(second, ch);
            }
        }
    }

    Ok(SubsamplePair {
        sub1: ImageTensor::new(sh, sw, c, sub1),
        sub2: ImageTensor::new(sh, sw, c, sub2),
        seed,
    })
}
