//! Per-clip and corpus score reports in JSON and CSV.
//!
//! Scores are stored at report scale: tracking ratios times 100, jerk
//! times 1e-6, acceleration times 1e-4 and FVMD times 1e-5. Undefined
//! values are written as `null` in JSON and as empty CSV cells.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::formats::{to_json_bytes, SCHEMA_VERSION};

pub const TRACK1_COLUMNS: [&str; 10] = ["HOTA", "DetA", "AssA", "MOTA", "MOTP", "IDF1", "LocA", "IDP", "IDR", "IDSW"];

pub const TRACK2_COLUMNS: [&str; 7] =
    ["MPJPE_2D", "OKS", "PoseSSIM", "SmoothRMS", "TimeDyn_RMSE", "FVMD", "TimeDyn_RMSE_diff"];

pub const QUALITY_COLUMNS: [&str; 12] =
    ["L1", "PSNR", "SSIM", "LPIPS", "DISTS", "CLIP", "ST-SSIM", "GMSD-T", "FVD", "FID", "C-FID", "DISTS_raw"];

/// Prefix of the masked-region variants of [`QUALITY_COLUMNS`].
pub const MASKED_PREFIX: &str = "Masked_";

pub const TRACKING_SCALE: f64 = 100.0;
pub const SMOOTH_RMS_SCALE: f64 = 1e-6;
pub const TIME_DYN_SCALE: f64 = 1e-4;
pub const FVMD_SCALE: f64 = 1e-5;

/// Every metric column in table order.
pub fn columns() -> Vec<String> {
    TRACK1_COLUMNS
        .iter()
        .chain(&TRACK2_COLUMNS)
        .chain(&QUALITY_COLUMNS)
        .map(|s| s.to_string())
        .chain(QUALITY_COLUMNS.iter().map(|s| format!("{MASKED_PREFIX}{s}")))
        .collect()
}

/// `None` stands for an undefined value such as MOTA without ground truth.
pub type Score = Option<f64>;

pub fn score(v: f64) -> Score {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipReport {
    pub clip_id: String,
    pub metrics: BTreeMap<String, Score>,
    /// Notes on metrics that were degenerate or partially evaluated.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl ClipReport {
    pub fn new(clip_id: impl Into<String>) -> Self {
        Self { clip_id: clip_id.into(), ..Self::default() }
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), score(value));
    }

    pub fn get(&self, name: &str) -> Score {
        self.metrics.get(name).copied().flatten()
    }

    pub fn flag(&mut self, note: impl Into<String>) {
        self.flags.push(note.into());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipFailure {
    /// Clip id, or the manifest path when the manifest itself is unreadable.
    pub clip: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportMetadata {
    pub engine_version: String,
    pub config_hash: String,
    /// Evaluated tracks, e.g. `[1, 2, 3]`.
    pub tracks: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusReport {
    pub schema_version: u32,
    pub metadata: ReportMetadata,
    pub clips: Vec<ClipReport>,
    /// Mean of each metric over the clips that report it.
    pub means: BTreeMap<String, Score>,
    #[serde(default)]
    pub errors: Vec<ClipFailure>,
}

impl CorpusReport {
    pub fn new(metadata: ReportMetadata, clips: Vec<ClipReport>, errors: Vec<ClipFailure>) -> Self {
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for clip in &clips {
            for (name, v) in &clip.metrics {
                let entry = sums.entry(name.clone()).or_default();
                if let Some(v) = v {
                    entry.0 += v;
                    entry.1 += 1;
                }
            }
        }
        let means = sums.into_iter().map(|(k, (s, n))| (k, (n > 0).then(|| s / n as f64))).collect();
        Self { schema_version: SCHEMA_VERSION, metadata, clips, means, errors }
    }

    pub fn to_json(&self) -> Vec<u8> {
        to_json_bytes(self)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    /// One row per clip; columns `clip_id` followed by [`columns`].
    pub fn to_csv(&self) -> Vec<u8> {
        let cols = columns();
        let mut out = String::from("clip_id");
        for c in &cols {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for clip in &self.clips {
            out.push_str(&csv_field(&clip.clip_id));
            for c in &cols {
                out.push(',');
                if let Some(v) = clip.get(c) {
                    out.push_str(&sig6(v));
                }
            }
            out.push('\n');
        }
        out.into_bytes()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Six significant digits, `%g` style: plain notation for exponents in
/// `[-4, 6)`, scientific otherwise, trailing zeros removed.
pub fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-4..6).contains(&exp) {
        trim(&format!("{v:.*}", (5 - exp) as usize))
    } else {
        format!("{}e{}{:02}", trim(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}
