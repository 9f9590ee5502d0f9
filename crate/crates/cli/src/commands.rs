//! Implementations of the CLI subcommands. Each one is deterministic given
//! its inputs, config and seed: repeated runs write byte-identical files
//! and print byte-identical JSON. Machine-readable output goes to standard
//! output, diagnostics to standard error.

use std::path::{Path, PathBuf};

use irle_core::analysis::{
    export_curve_csv, export_matrix_csv, kde, mean_luminance_set, pixel_luminance_set,
    wasserstein_1d, LuminanceSampleSet, SampleCollection,
};
use irle_core::gafm::{self, Conv2d, FeatureTensor, GafmParams};
use irle_core::image::{self, load_image, save_image, ImageTensor, ScalarMap};
use irle_core::losses::{
    assemble_report, color_loss, guide_loss, iap_loss, iap_scale_k, rec_loss, GradientPyramid,
    COLOR_POOL,
};
use irle_core::pseudo_gt::generate_pseudo_gt;
use irle_core::spectral::{
    amplitude_spectrum, band_log_energy, cfc_matrix, radial_bands, sisc_loss, spectrum_log_image,
};
use irle_core::subsample::{neighbor_subsample, GENERATOR_ID};
use irle_core::{Error, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;

/// Epsilon of the gain prior in the demo command.
const GAIN_EPSILON: f64 = 1e-8;

fn ensure_outdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn require_rgb(img: &ImageTensor, name: &str) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::InvalidInput(format!(
            "{name} must be an RGB image, got {} channel(s)",
            img.channels()
        )));
    }
    Ok(())
}

fn write_json<P: AsRef<Path>, T: Serialize>(value: &T, path: P) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Min-max normalize a map into [0, 1] for PNG export; a constant map
/// normalizes to zeros. Returns the image plus the original (min, max).
fn normalized_gray(map: &ScalarMap) -> (ImageTensor, (f64, f64)) {
    let lo = map.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = map.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let data: Vec<f64> = if span > 0.0 {
        map.data().iter().map(|v| (v - lo) / span).collect()
    } else {
        vec![0.0; map.data().len()]
    };
    (
        ImageTensor::new(map.height(), map.width(), 1, data),
        (lo, hi),
    )
}

#[derive(Serialize)]
struct Range {
    min: f64,
    max: f64,
}

impl From<(f64, f64)> for Range {
    fn from((min, max): (f64, f64)) -> Self {
        Self { min, max }
    }
}

#[derive(Serialize)]
struct PseudoGtSummary<'a> {
    gains: [f64; 3],
    config: &'a irle_core::pseudo_gt::PseudoGtConfig,
    luminance: LuminanceStats,
    visualization: VisualizationScales,
}

#[derive(Serialize)]
struct LuminanceStats {
    input_mean: f64,
    bright_mean: f64,
    pseudo_mean: f64,
}

#[derive(Serialize)]
struct VisualizationScales {
    gain_rough: Range,
    gain_target: Range,
}

pub fn cmd_pseudo_gt(input: &Path, config: Option<&Path>, outdir: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let img = load_image(input)?;
    require_rgb(&img, "input")?;
    ensure_outdir(outdir)?;

    let bundle = generate_pseudo_gt(&img, &cfg.pseudo_gt)?;
    save_image(&bundle.pseudo_gt, outdir.join("pseudo_gt.png"))?;
    save_image(&bundle.bright_image, outdir.join("bright.png"))?;
    save_image(&bundle.wb_image, outdir.join("wb.png"))?;

    let (rough_img, rough_range) = normalized_gray(&bundle.rough_gain);
    save_image(&rough_img, outdir.join("gain_rough.png"))?;
    let (target_img, target_range) = normalized_gray(&bundle.target_gain);
    save_image(&target_img, outdir.join("gain_target.png"))?;
    let weight_img = ImageTensor::new(
        img.height(),
        img.width(),
        1,
        bundle.chroma_weight.data().to_vec(),
    );
    save_image(&weight_img, outdir.join("chroma_weight.png"))?;

    let summary = PseudoGtSummary {
        gains: bundle.gains,
        config: &cfg.pseudo_gt,
        luminance: LuminanceStats {
            input_mean: image::luminance(&img).mean(),
            bright_mean: image::luminance(&bundle.bright_image).mean(),
            pseudo_mean: image::luminance(&bundle.pseudo_gt).mean(),
        },
        visualization: VisualizationScales {
            gain_rough: rough_range.into(),
            gain_target: target_range.into(),
        },
    };
    write_json(&summary, outdir.join("bundle.json"))
}

#[derive(Serialize)]
struct SiscOutput {
    total: f64,
    corr_term: f64,
    amp_term: f64,
    #[serde(rename = "K")]
    k: usize,
    gamma: f64,
}

pub fn cmd_sisc(img1: &Path, img2: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let a = load_image(img1)?;
    let b = load_image(img2)?;
    let breakdown = sisc_loss(&a, &b, &cfg.sisc)?;
    let out = SiscOutput {
        total: breakdown.total,
        corr_term: breakdown.correlation_term,
        amp_term: breakdown.amplitude_term,
        k: cfg.sisc.k_bands,
        gamma: cfg.sisc.gamma,
    };
    println!("{}", serde_json::to_string(&out).expect("serializable"));
    Ok(())
}

#[derive(Serialize)]
struct CfcOutput {
    trace: f64,
    k: usize,
}

pub fn cmd_cfc(input: &Path, k: usize, outdir: &Path, spectrum: Option<&Path>) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("k must be >= 2, got {k}")));
    }
    let img = load_image(input)?;
    ensure_outdir(outdir)?;
    let spec = amplitude_spectrum(&img);
    let bands = radial_bands(img.height(), img.width(), k);
    let energies = band_log_energy(&spec, &bands, 1e-8)?;
    let matrix = cfc_matrix(&energies, 1e-8);

    let rows: Vec<Vec<f64>> = (0..k)
        .map(|m| (0..k).map(|n| matrix.get(m, n)).collect())
        .collect();
    export_matrix_csv(&rows, outdir.join("cfc.csv"))?;
    export_matrix_csv(&[energies], outdir.join("bands.csv"))?;

    if let Some(path) = spectrum {
        let (log_img, _) = spectrum_log_image(&spec);
        save_image(&log_img, path)?;
    }

    let out = CfcOutput {
        trace: matrix.trace(),
        k,
    };
    println!("{}", serde_json::to_string(&out).expect("serializable"));
    Ok(())
}

pub fn cmd_losses(r_hat: &Path, i_low: &Path, config: Option<&Path>, seed: u64) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let prediction = load_image(r_hat)?;
    let input = load_image(i_low)?;
    require_rgb(&prediction, "r_hat")?;
    require_rgb(&input, "i_low")?;
    if !prediction.same_shape(&input) {
        return Err(Error::DimensionMismatch(format!(
            "r_hat {} vs i_low {}",
            prediction.shape_string(),
            input.shape_string()
        )));
    }

    let bundle = generate_pseudo_gt(&input, &cfg.pseudo_gt)?;
    // Illumination implied by the prediction: L = Y_low / (Y_r̂ + ε).
    let y_low = image::luminance(&input);
    let y_pred = image::luminance(&prediction);
    let l = ScalarMap::new(
        input.height(),
        input.width(),
        y_low
            .data()
            .iter()
            .zip(y_pred.data())
            .map(|(yl, yp)| yl / (yp + cfg.weights.epsilon))
            .collect(),
    );

    let pair = neighbor_subsample(&prediction, seed)?;
    let sisc = sisc_loss(&pair.sub1, &pair.sub2, &cfg.sisc)?.total;

    let phi = GradientPyramid::default();
    let rec = rec_loss(&prediction, &l, &input);
    let guide = guide_loss(&l, &bundle.target_gain, cfg.weights.epsilon);
    let (color_local, color_global) =
        color_loss(&prediction, &bundle.pseudo_gt, &cfg.weights, COLOR_POOL);
    let iap = iap_loss(&prediction, &input, &phi, cfg.weights.epsilon)?;
    let k = iap_scale_k(&prediction, &input, cfg.weights.epsilon)?;

    let report = assemble_report(
        rec,
        guide,
        color_local,
        color_global,
        iap,
        sisc,
        k,
        &cfg.weights,
    );
    println!("{}", serde_json::to_string(&report).expect("serializable"));
    Ok(())
}

#[derive(Serialize)]
struct SubsampleMeta {
    seed: u64,
    generator: &'static str,
    dropped_rows: usize,
    dropped_cols: usize,
}

pub fn cmd_subsample(input: &Path, seed: u64, outdir: &Path) -> Result<()> {
    let img = load_image(input)?;
    ensure_outdir(outdir)?;
    let dropped_rows = img.height() % 2;
    let dropped_cols = img.width() % 2;
    if dropped_rows + dropped_cols > 0 {
        eprintln!(
            "warning: odd dimensions, dropping {dropped_rows} trailing row(s) and {dropped_cols} column(s)"
        );
    }
    let pair = neighbor_subsample(&img, seed)?;
    save_image(&pair.sub1, outdir.join("sub1.png"))?;
    save_image(&pair.sub2, outdir.join("sub2.png"))?;
    write_json(
        &SubsampleMeta {
            seed,
            generator: GENERATOR_ID,
            dropped_rows,
            dropped_cols,
        },
        outdir.join("meta.json"),
    )
}

#[derive(Serialize)]
struct AnalyzeSummary {
    labels: Vec<String>,
    counts: Vec<usize>,
    per_pixel: bool,
    wasserstein: Vec<Vec<f64>>,
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .map(|ext| ext.eq_ignore_ascii_case("png"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    Ok(files)
}

pub fn cmd_analyze(
    dirs: &[PathBuf],
    labels: &[String],
    outdir: &Path,
    config: Option<&Path>,
) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    if dirs.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} --dir flag(s) but {} --label flag(s); supply one label per directory",
            dirs.len(),
            labels.len()
        )));
    }
    ensure_outdir(outdir)?;

    let mut sets: Vec<LuminanceSampleSet> = Vec::new();
    for (dir, label) in dirs.iter().zip(labels) {
        let files = png_files(dir)?;
        if files.is_empty() {
            return Err(Error::InvalidInput(format!(
                "directory {} holds no PNG files",
                dir.display()
            )));
        }
        let SampleCollection { set, failures } = if cfg.analysis.per_pixel {
            pixel_luminance_set(&files, label)?
        } else {
            mean_luminance_set(&files, label)?
        };
        for (path, err) in failures {
            eprintln!("warning: skipped {}: {err}", path.display());
        }
        let curve = kde(&set, cfg.analysis.grid_points, cfg.analysis.bandwidth)?;
        export_curve_csv(&curve, outdir.join(format!("kde_{label}.csv")))?;
        sets.push(set);
    }

    let n = sets.len();
    let mut matrix = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = wasserstein_1d(&sets[i], &sets[j])?;
            matrix[i][j] = d;
            matrix[j][i] = d;
        }
    }
    write_json(
        &AnalyzeSummary {
            labels: labels.to_vec(),
            counts: sets.iter().map(|s| s.len()).collect(),
            per_pixel: cfg.analysis.per_pixel,
            wasserstein: matrix,
        },
        outdir.join("wdist.json"),
    )
}

#[derive(Serialize)]
struct GafmDemoMeta {
    seed: u64,
    c_hidden: usize,
    zero_weights: bool,
    gamma_range: Range,
    delta_range: Range,
}

/// Min-max normalize a feature tensor for PNG export.
fn normalized_feature_image(t: &FeatureTensor) -> (ImageTensor, (f64, f64)) {
    let lo = t.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let data: Vec<f64> = if span > 0.0 {
        t.data().iter().map(|v| (v - lo) / span).collect()
    } else {
        vec![0.0; t.data().len()]
    };
    let normalized = FeatureTensor::new(t.channels(), t.height(), t.width(), data);
    (normalized.to_image(), (lo, hi))
}

pub fn cmd_gafm_demo(
    input: &Path,
    l_hat: &Path,
    seed: u64,
    outdir: &Path,
    config: Option<&Path>,
    weights_file: Option<&Path>,
) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let img = load_image(input)?;
    let l_img = load_image(l_hat)?;
    if (img.height(), img.width()) != (l_img.height(), l_img.width()) {
        return Err(Error::DimensionMismatch(format!(
            "input {} vs illumination {}",
            img.shape_string(),
            l_img.shape_string()
        )));
    }
    ensure_outdir(outdir)?;

    let l_map = image::luminance(&l_img);
    let g_log = gafm::log_gain(&gafm::gain_prior(&l_map, GAIN_EPSILON));

    let channels = img.channels();
    let zero_weights = seed == 0 && weights_file.is_none();
    // One seeded stream feeds the adapter, the projection and the block
    // convolution, in that order.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (params, conv) = if zero_weights {
        (
            GafmParams::zeros(cfg.gafm.c_hidden, channels),
            Conv2d::zeros(channels, channels, 3),
        )
    } else {
        let params = match weights_file {
            Some(path) => {
                let loaded = gafm::load_params(path)?;
                if loaded.channels() != channels {
                    return Err(Error::DimensionMismatch(format!(
                        "weight file modulates {} channels, image has {channels}",
                        loaded.channels()
                    )));
                }
                // keep the stream position consistent with the seeded path
                let _ = Conv2d::from_rng(1, cfg.gafm.c_hidden, 3, &mut rng);
                let _ = Conv2d::from_rng(cfg.gafm.c_hidden, 2 * channels, 1, &mut rng);
                loaded
            }
            None => GafmParams {
                adapter: Conv2d::from_rng(1, cfg.gafm.c_hidden, 3, &mut rng),
                proj: Conv2d::from_rng(cfg.gafm.c_hidden, 2 * channels, 1, &mut rng),
                seed: Some(seed),
            },
        };
        let conv = Conv2d::from_rng(channels, channels, 3, &mut rng);
        (params, conv)
    };

    let features = FeatureTensor::from_image(&img);
    let modulated = gafm::gain_aware_block(&features, &g_log, &params, &conv)?;
    save_image(&img, outdir.join("before.png"))?;
    save_image(&modulated.to_image(), outdir.join("modulated.png"))?;

    let (gamma, delta) = gafm::modulation_params(&g_log, &params)?;
    let (gamma_img, gamma_range) = normalized_feature_image(&gamma);
    let (delta_img, delta_range) = normalized_feature_image(&delta);
    save_image(&gamma_img, outdir.join("gamma.png"))?;
    save_image(&delta_img, outdir.join("delta.png"))?;

    write_json(
        &GafmDemoMeta {
            seed,
            c_hidden: cfg.gafm.c_hidden,
            zero_weights,
            gamma_range: gamma_range.into(),
            delta_range: delta_range.into(),
        },
        outdir.join("demo.json"),
    )
}
