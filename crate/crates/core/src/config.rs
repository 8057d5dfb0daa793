//! Run configuration: one TOML file drives every pipeline stage, and
//! command-line flags override individual keys.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::{KMeansConfig, SelectionConfig};
use crate::error::{Error, Result};
use crate::ingest::{CourtDims, MatchTimeline, PlayerId, RecordFormat};
use crate::kalman::KalmanConfig;

/// Kalman stage settings. Disabling the stage keeps the carried-forward
/// positions untouched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanSettings {
    pub enabled: bool,
    pub process_noise: f64,
    pub measurement_noise: f64,
    pub initial_velocity_variance: f64,
}

impl Default for KalmanSettings {
    fn default() -> Self {
        let base = KalmanConfig::default();
        KalmanSettings {
            enabled: true,
            process_noise: base.process_noise,
            measurement_noise: base.measurement_noise,
            initial_velocity_variance: base.initial_velocity_variance,
        }
    }
}

impl KalmanSettings {
    pub fn filter_config(&self) -> KalmanConfig {
        KalmanConfig {
            process_noise: self.process_noise,
            measurement_noise: self.measurement_noise,
            initial_velocity_variance: self.initial_velocity_variance,
        }
    }
}

/// Clustering settings: a fixed `k`, or an inclusive `k_range` to search
/// with the elbow rule. Exactly one of the two must be set before
/// fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_range: Option<[usize; 2]>,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub min_ratio: f64,
    pub min_gain: f64,
}

impl Default for ClusteringSettings {
    fn default() -> Self {
        let km = KMeansConfig::default();
        let sel = SelectionConfig::default();
        ClusteringSettings {
            k: None,
            k_range: None,
            seed: km.seed,
            restarts: km.restarts,
            max_iter: km.max_iter,
            tol: km.tol,
            min_ratio: sel.min_ratio,
            min_gain: sel.min_gain,
        }
    }
}

impl ClusteringSettings {
    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            seed: self.seed,
            restarts: self.restarts,
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }

    pub fn selection(&self) -> SelectionConfig {
        SelectionConfig {
            min_ratio: self.min_ratio,
            min_gain: self.min_gain,
        }
    }
}

/// Everything a pipeline run needs. All fields have defaults except the
/// clustering choice, which must be made explicitly before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Raw sample feed; required by `ingest` and `run`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Directory receiving every artifact.
    pub out: PathBuf,
    /// Grid resolution in milliseconds.
    pub grid_ms: i64,
    /// Active five-player roster. When omitted the feed must contain
    /// exactly five players.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roster: Option<Vec<u32>>,
    pub format: RecordFormat,
    /// Play periods with attack directions. When omitted the whole feed
    /// is treated as a single period attacking positive x.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeline: Option<MatchTimeline>,
    pub court: CourtDims,
    pub kalman: KalmanSettings,
    pub clustering: ClusteringSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: None,
            out: PathBuf::from("out"),
            grid_ms: 20,
            roster: None,
            format: RecordFormat::default(),
            timeline: None,
            court: CourtDims::default(),
            kalman: KalmanSettings::default(),
            clustering: ClusteringSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path)?;
        PipelineConfig::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<PipelineConfig> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every field that any stage depends on. The clustering
    /// choice may still be unset; [`PipelineConfig::validate`] enforces
    /// it for the fitting stages.
    pub fn validate_base(&self) -> Result<()> {
        if self.grid_ms < 1 {
            return Err(Error::BadGridStep(self.grid_ms));
        }
        if !(self.court.length_m > 0.0 && self.court.length_m.is_finite())
            || !(self.court.width_m > 0.0 && self.court.width_m.is_finite())
        {
            return Err(Error::Config(format!(
                "court dimensions must be positive, got {} x {}",
                self.court.length_m, self.court.width_m
            )));
        }
        if !(self.format.scale > 0.0 && self.format.scale.is_finite()) {
            return Err(Error::Config(format!(
                "format scale must be positive, got {}",
                self.format.scale
            )));
        }
        if let Some(roster) = &self.roster {
            if roster.len() != 5 {
                return Err(Error::RosterSize(roster.len()));
            }
        }
        if let Some(timeline) = &self.timeline {
            timeline.validate()?;
        }
        self.kalman.filter_config().validate()?;
        self.clustering.kmeans().validate()?;
        let c = &self.clustering;
        if !(c.min_ratio >= 0.0 && c.min_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "clustering min_ratio must be in [0, 1], got {}",
                c.min_ratio
            )));
        }
        if !(c.min_gain >= 0.0 && c.min_gain.is_finite()) {
            return Err(Error::Config(format!(
                "clustering min_gain must be non-negative, got {}",
                c.min_gain
            )));
        }
        match (c.k, c.k_range) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "clustering.k and clustering.k_range are mutually exclusive".into(),
                ))
            }
            (Some(0), _) => return Err(Error::BadK(0)),
            (_, Some([a, b])) if a < 1 || a > b => {
                return Err(Error::Config(format!(
                    "clustering.k_range must satisfy 1 <= low <= high, got [{a}, {b}]"
                )))
            }
            _ => {}
        }
        Ok(())
    }

    /// Full validation for stages that fit or report clusters: on top of
    /// the base checks, exactly one of `k` / `k_range` must be set.
    pub fn validate(&self) -> Result<()> {
        self.validate_base()?;
        match (self.clustering.k, self.clustering.k_range) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            (None, None) => Err(Error::Config(
                "set exactly one of clustering.k or clustering.k_range".into(),
            )),
            (Some(_), Some(_)) => Err(Error::Config(
                "clustering.k and clustering.k_range are mutually exclusive".into(),
            )),
        }
    }

    pub fn input_path(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::Config("input path is required (--input or config)".into()))
    }

    pub fn roster_ids(&self) -> Option<Vec<PlayerId>> {
        self.roster
            .as_ref()
            .map(|r| r.iter().map(|id| PlayerId(*id)).collect())
    }
}
