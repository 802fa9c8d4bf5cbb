//! Engine configuration, read from TOML. Every key is optional and falls
//! back to the published defaults.
//!
//! ```toml
//! [tracking]
//! iou_threshold = 0.5
//!
//! [pose]
//! min_confidence = 0.3
//!
//! [association]
//! spatial_weight = 0.4
//! reid_weight = 0.6
//! max_cost = 0.7
//! max_gap = 30
//!
//! [filter]
//! max_overlap_iou = 0.1
//! min_area_ratio = 0.02
//! max_area_ratio = 0.80
//! min_coverage = 0.40
//! min_tracking = 0.90
//!
//! [run]
//! threads = 0        # 0 picks the number of CPUs
//! format = "json"    # or "csv"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::curation::{AssociationParams, FilterThresholds};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("config value `{key}` out of range: {message}")]
    Range { key: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    /// IoU gate for CLEAR and identity matching.
    pub iou_threshold: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseConfig {
    /// Keypoints below this confidence count as missing.
    pub min_confidence: f64,
}

impl Default for PoseConfig {
    fn default() -> Self {
        Self { min_confidence: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads; 0 means one per CPU.
    pub threads: usize,
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub tracking: TrackingConfig,
    pub pose: PoseConfig,
    pub association: AssociationParams,
    pub filter: FilterThresholds,
    pub run: RunConfig,
}

fn unit(key: &'static str, v: f64, open_low: bool) -> Result<(), ConfigError> {
    let ok = v.is_finite() && v <= 1.0 && if open_low { v > 0.0 } else { v >= 0.0 };
    if !ok {
        let range = if open_low { "(0, 1]" } else { "[0, 1]" };
        return Err(ConfigError::Range { key, message: format!("{v} is outside {range}") });
    }
    Ok(())
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        unit("tracking.iou_threshold", self.tracking.iou_threshold, true)?;
        unit("pose.min_confidence", self.pose.min_confidence, false)?;
        let a = &self.association;
        unit("association.spatial_weight", a.spatial_weight, false)?;
        unit("association.reid_weight", a.reid_weight, false)?;
        if a.spatial_weight + a.reid_weight <= 0.0 {
            return Err(ConfigError::Range { key: "association", message: "weights must not both be zero".into() });
        }
        if !(a.max_cost.is_finite() && a.max_cost > 0.0) {
            return Err(ConfigError::Range { key: "association.max_cost", message: format!("{} must be positive", a.max_cost) });
        }
        let f = &self.filter;
        unit("filter.max_overlap_iou", f.max_overlap_iou, true)?;
        unit("filter.min_area_ratio", f.min_area_ratio, false)?;
        unit("filter.max_area_ratio", f.max_area_ratio, true)?;
        unit("filter.min_coverage", f.min_coverage, false)?;
        unit("filter.min_tracking", f.min_tracking, false)?;
        if f.min_area_ratio >= f.max_area_ratio {
            return Err(ConfigError::Range {
                key: "filter.min_area_ratio",
                message: format!("{} must be below max_area_ratio {}", f.min_area_ratio, f.max_area_ratio),
            });
        }
        if self.run.threads > 1024 {
            return Err(ConfigError::Range { key: "run.threads", message: format!("{} exceeds 1024", self.run.threads) });
        }
        Ok(())
    }

    /// SHA-256 over the settings that can change scores. Thread count and
    /// output format are left out, so they never alter a report.
    pub fn hash(&self) -> String {
        let scoring = serde_json::json!({
            "tracking": self.tracking,
            "pose": self.pose,
            "association": self.association,
            "filter": self.filter,
        });
        let digest = Sha256::digest(scoring.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
