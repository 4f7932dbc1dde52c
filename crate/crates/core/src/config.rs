//! Run configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibrate;
use crate::diagram::Fov;
use crate::discretize::DEFAULT_MIN_COVERAGE;
use crate::error::{Error, Result};
use crate::estimate;
use crate::ga::GaParams;
use crate::grid::GridSpec;
use crate::scenario::ScenarioBatch;

/// Externally produced trajectories instead of the built-in generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    /// CSV file; relative paths resolve against the config file's directory.
    pub path: PathBuf,
    pub fov: Fov,
    /// Minimum spacing of stopped vehicles (m); sets the jam density.
    pub s_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizeConfig {
    /// Fraction of a cell's area the camera must see for the cell to count
    /// as observed.
    pub min_coverage: f64,
}

impl Default for DiscretizeConfig {
    fn default() -> Self {
        DiscretizeConfig {
            min_coverage: DEFAULT_MIN_COVERAGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSearchConfig {
    pub fd: bool,
    pub boundary_phase_one: bool,
    pub boundary_phase_two: bool,
    /// GA restarts per lattice point.
    pub repetitions: usize,
    pub max_points: usize,
    /// Diagrams used by the boundary searches; 0 means all.
    pub boundary_diagrams: usize,
    /// Whether `pipeline` also runs the grid searches.
    pub in_pipeline: bool,
}

impl Default for GridSearchConfig {
    fn default() -> Self {
        GridSearchConfig {
            fd: true,
            boundary_phase_one: true,
            boundary_phase_two: true,
            repetitions: 1,
            max_points: 1000,
            boundary_diagrams: 0,
            in_pipeline: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub jobs: usize,
    pub out_dir: PathBuf,
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioBatch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingest: Option<IngestConfig>,
    #[serde(default)]
    pub discretize: DiscretizeConfig,
    #[serde(default = "calibrate::default_params")]
    pub calibration: GaParams,
    #[serde(default = "estimate::default_params")]
    pub estimation: GaParams,
    #[serde(default)]
    pub gridsearch: GridSearchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 2024,
            jobs: 0,
            out_dir: PathBuf::from("out"),
            grid: GridSpec::new(100.0, 16.0, 20.0, 2.0).expect("valid grid"),
            scenario: Some(ScenarioBatch::default()),
            ingest: None,
            discretize: DiscretizeConfig::default(),
            calibration: calibrate::default_params(),
            estimation: estimate::default_params(),
            gridsearch: GridSearchConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; a relative ingest path is resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let (Some(ing), Some(dir)) = (cfg.ingest.as_mut(), path.parent()) {
            if ing.path.is_relative() {
                ing.path = dir.join(&ing.path);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.scenario, &self.ingest) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("set exactly one of `scenario` or `ingest`, not both".into()))
            }
            (None, None) => return Err(Error::Config("one of `scenario` or `ingest` must be set".into())),
            _ => {}
        }
        if let Some(s) = &self.scenario {
            if s.count == 0 {
                return Err(Error::Config("scenario.count must be >= 1".into()));
            }
            // one representative run catches bad ranges early
            for c in s.configs(self.grid, self.seed).iter().take(1) {
                c.validate().map_err(|e| Error::Config(format!("scenario: {e}")))?;
            }
        }
        if let Some(i) = &self.ingest {
            if !(i.s_min > 0.0 && i.s_min.is_finite()) {
                return Err(Error::Config(format!("ingest.s_min must be positive, got {}", i.s_min)));
            }
        }
        let c = self.discretize.min_coverage;
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::Config(format!("discretize.min_coverage must lie in [0, 1], got {c}")));
        }
        self.calibration
            .validate()
            .map_err(|e| Error::Config(format!("calibration: {e}")))?;
        self.estimation
            .validate()
            .map_err(|e| Error::Config(format!("estimation: {e}")))?;
        if self.gridsearch.repetitions == 0 {
            return Err(Error::Config("gridsearch.repetitions must be >= 1".into()));
        }
        Ok(())
    }

    /// Jam density implied by the minimum spacing.
    pub fn k_j(&self) -> f64 {
        let s_min = match (&self.scenario, &self.ingest) {
            (Some(s), _) => s.s_min,
            (_, Some(i)) => i.s_min,
            _ => unreachable!("validated config"),
        };
        1.0 / s_min
    }

    pub fn fov(&self) -> Fov {
        match (&self.scenario, &self.ingest) {
            (Some(s), _) => s.fov,
            (_, Some(i)) => i.fov,
            _ => unreachable!("validated config"),
        }
    }
}
