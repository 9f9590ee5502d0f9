//! Run configuration: one JSON document with per-subsystem sections.
//! Unknown keys are rejected so a run is fully specified by the input
//! files, this config and the seed flags.

use std::path::Path;

use irle_core::losses::LossWeights;
use irle_core::pseudo_gt::PseudoGtConfig;
use irle_core::spectral::SiscConfig;
use irle_core::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pseudo_gt: PseudoGtConfig,
    pub sisc: SiscConfig,
    pub weights: LossWeights,
    pub gafm: GafmSection,
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GafmSection {
    /// Width of the adapter's latent space.
    pub c_hidden: usize,
}

impl Default for GafmSection {
    fn default() -> Self {
        Self { c_hidden: 16 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Collect one sample per pixel instead of one per image.
    pub per_pixel: bool,
    /// Grid resolution of exported density curves.
    pub grid_points: usize,
    /// Fixed bandwidth; omitted means Silverman's rule.
    pub bandwidth: Option<f64>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            per_pixel: false,
            grid_points: 256,
            bandwidth: None,
        }
    }
}

impl RunConfig {
    /// Parse and validate; nothing computes before every section checks out.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let config = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| Error::Io {
                    path: p.to_path_buf(),
                    source,
                })?;
                serde_json::from_str(&text).map_err(|e| Error::InvalidConfig {
                    field: "config",
                    reason: e.to_string(),
                })?
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.pseudo_gt.validate()?;
        self.sisc.validate()?;
        self.weights.validate()?;
        if self.gafm.c_hidden == 0 {
            return Err(Error::InvalidConfig {
                field: "gafm.c_hidden",
                reason: "must be at least 1".into(),
            });
        }
        if self.analysis.grid_points < 2 {
            return Err(Error::InvalidConfig {
                field: "analysis.grid_points",
                reason: "must be at least 2".into(),
            });
        }
        if let Some(h) = self.analysis.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::InvalidConfig {
                    field: "analysis.bandwidth",
                    reason: format!("must be positive, got {h}"),
                });
            }
        }
        Ok(())
    }
}
