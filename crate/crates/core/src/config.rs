//! Project configuration shared by the command line and the label service.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Connectivity, SegmentParams};
use crate::recognize::{ClassifyParams, RecognizeParams};
use crate::training::ClusterParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config value `{field}` out of range: {reason}")]
    Range { field: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub lang_code: String,
    pub tessdata: PathBuf,
    pub dpi: u32,
    pub invert: bool,
    pub connectivity: Connectivity,
    pub noise_floor: u32,
    pub gap_factor: f64,
    pub oversized_factor: f64,
    pub reject_threshold: f64,
    pub pruner_survivors: usize,
    pub iou_threshold: f64,
    pub k_max: usize,
    pub seed: u64,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        let seg = SegmentParams::default();
        let cls = ClassifyParams::default();
        let clu = ClusterParams::default();
        Self {
            lang_code: "num".into(),
            tessdata: PathBuf::from("tessdata"),
            dpi: 300,
            invert: false,
            connectivity: seg.connectivity,
            noise_floor: seg.noise_floor,
            gap_factor: seg.gap_factor,
            oversized_factor: seg.oversized_factor,
            reject_threshold: cls.reject_threshold,
            pruner_survivors: cls.pruner_survivors,
            iou_threshold: 0.5,
            k_max: clu.k_max,
            seed: clu.seed,
        }
    }
}

impl ProjectConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn range(field: &'static str, ok: bool, reason: &str) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Range { field, reason: reason.to_string() })
            }
        }
        range(
            "lang_code",
            self.lang_code.len() == 3 && self.lang_code.bytes().all(|b| b.is_ascii_lowercase()),
            "must be three lowercase ASCII letters",
        )?;
        range("dpi", self.dpi > 0, "must be positive")?;
        range("gap_factor", self.gap_factor.is_finite() && self.gap_factor >= 0.0, "must be a non-negative number")?;
        range("oversized_factor", self.oversized_factor.is_finite() && self.oversized_factor >= 1.0, "must be at least 1")?;
        range("reject_threshold", self.reject_threshold.is_finite() && self.reject_threshold >= 0.0, "must be a non-negative number")?;
        range("pruner_survivors", self.pruner_survivors >= 1, "must be at least 1")?;
        range("iou_threshold", self.iou_threshold > 0.0 && self.iou_threshold <= 1.0, "must lie in (0, 1]")?;
        range("k_max", self.k_max >= 1, "must be at least 1")
    }

    pub fn segment_params(&self) -> SegmentParams {
        SegmentParams {
            connectivity: self.connectivity,
            noise_floor: self.noise_floor,
            gap_factor: self.gap_factor,
            oversized_factor: self.oversized_factor,
        }
    }

    pub fn recognize_params(&self) -> RecognizeParams {
        RecognizeParams {
            segment: self.segment_params(),
            classify: ClassifyParams {
                reject_threshold: self.reject_threshold,
                pruner_survivors: self.pruner_survivors,
            },
        }
    }

    pub fn cluster_params(&self) -> ClusterParams {
        ClusterParams { k_max: self.k_max, seed: self.seed, ..ClusterParams::default() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ProjectConfig::default();
        assert_eq!(ProjectConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(ProjectConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn partial_files_keep_defaults() {
        let cfg = ProjectConfig::from_toml("reject_threshold = 0.5\nconnectivity = \"Four\"\n").unwrap();
        assert_eq!(cfg.reject_threshold, 0.5);
        assert_eq!(cfg.connectivity, Connectivity::Four);
        assert_eq!(cfg.recognize_params().classify.reject_threshold, 0.5);
        assert_eq!(cfg.noise_floor, 8);
    }

    #[test]
    fn bad_values_are_rejected() {
        for text in ["iou_threshold = 0.0", "lang_code = \"EN\"", "k_max = 0", "dpi = 0", "unknown = 1"] {
            assert!(ProjectConfig::from_toml(text).is_err(), "{text}");
        }
    }
}
