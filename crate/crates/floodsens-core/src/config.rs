//! Single-file pipeline configuration.
//!
//! One TOML file drives every stage (database build, campaign, analysis) so
//! a study is reproducible from the config and its seeds alone. Validation
//! reports every violation at once, each with the field path that caused
//! it.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{SamplingPlan, SamplingStrategy, Scenario};
use crate::ensemble::{FeatureLayer, FeatureStack, NoiseSpec};
use crate::probe::ProbeSet;
use crate::raster::{self, ResampleMethod};
use crate::solver::{BoundarySpec, Hydrograph, InitialCondition, SolverConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("configuration invalid:\n{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
}

/// One validation finding, anchored to a config field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("  - {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackSection {
    pub dtm: PathBuf,
    pub buildings: PathBuf,
    pub walls: PathBuf,
    pub thin_structures: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignSection {
    pub s_levels: Vec<u8>,
    pub r_factors: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HydrographSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialSection {
    pub mode: InitialCondition,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplingSection {
    /// `without_replacement_uniform` or `stratified_min_per_cell`.
    pub strategy: String,
    #[serde(default)]
    pub min_e_per_sr: u32,
    pub budget: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbesSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisSection {
    /// Analysis grid cell size (m).
    pub cellsize: f64,
    /// `average` or `nearest`.
    #[serde(default = "default_method")]
    pub method: String,
    /// Bootstrap replicates.
    #[serde(default = "default_boot")]
    pub boot: usize,
    /// Bootstrap subsample size.
    #[serde(default = "default_boot_n")]
    pub boot_n: usize,
    #[serde(default)]
    pub boot_seed: u64,
    /// Minimum aligned samples required for sensitivity maps.
    #[serde(default = "default_min_samples")]
    pub min_samples: usize,
    /// Seed of the convergence-trace permutation.
    #[serde(default)]
    pub order_seed: u64,
}

fn default_method() -> String {
    "average".into()
}
fn default_boot() -> usize {
    10_000
}
fn default_boot_n() -> usize {
    1_000
}
fn default_min_samples() -> usize {
    100
}

/// The full pipeline configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub stack: StackSection,
    pub noise: NoiseSpec,
    pub design: DesignSection,
    pub solver: SolverConfig,
    pub boundaries: BoundarySpec,
    pub hydrograph: HydrographSection,
    pub initial: InitialSection,
    pub sampling: SamplingSection,
    pub probes: ProbesSection,
    pub analysis: AnalysisSection,
    /// Directory every relative path resolves against (the config file's
    /// directory; not serialized).
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    /// Parse a TOML config without validating it.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config: PipelineConfig =
            toml::from_str(&text).map_err(|source| ConfigError::Parse {
                path: path.display().to_string(),
                source: Box::new(source),
            })?;
        config.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(config)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Check every cross-field constraint, returning all violations.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let mut push = |field: &str, message: String| {
            diags.push(Diagnostic {
                field: field.to_string(),
                message,
            })
        };

        for (field, path) in [
            ("stack.dtm", &self.stack.dtm),
            ("stack.buildings", &self.stack.buildings),
            ("stack.walls", &self.stack.walls),
            ("stack.thin_structures", &self.stack.thin_structures),
            ("hydrograph.path", &self.hydrograph.path),
            ("probes.path", &self.probes.path),
        ] {
            let resolved = self.resolve(path);
            if !resolved.exists() {
                push(field, format!("file not found: {}", resolved.display()));
            }
        }

        if !(self.noise.sigma > 0.0) {
            push("noise.sigma", format!("must be > 0, got {}", self.noise.sigma));
        }
        if self.noise.n_draws < 2 {
            push(
                "noise.n_draws",
                format!("must be >= 2, got {}", self.noise.n_draws),
            );
        }

        if self.design.s_levels.is_empty() {
            push("design.s_levels", "must not be empty".into());
        }
        for &s in &self.design.s_levels {
            if !(1..=4).contains(&s) {
                push("design.s_levels", format!("level {s} outside 1..=4"));
            }
        }
        if self.design.r_factors.is_empty() {
            push("design.r_factors", "must not be empty".into());
        }
        for &r in &self.design.r_factors {
            if !(1..=5).contains(&r) {
                push("design.r_factors", format!("factor {r} outside 1..=5"));
            }
        }

        if let Err(e) = self.solver.validate() {
            push("solver", e.to_string());
        }

        let design_size =
            self.design.s_levels.len() * self.design.r_factors.len() * self.noise.n_draws as usize;
        if self.sampling.budget == 0 {
            push("sampling.budget", "must be >= 1".into());
        }
        if self.sampling.budget > design_size {
            push(
                "sampling.budget",
                format!(
                    "budget {} exceeds design size {design_size}",
                    self.sampling.budget
                ),
            );
        }
        match self.sampling.strategy.as_str() {
            "without_replacement_uniform" => {}
            "stratified_min_per_cell" => {
                let cells = self.design.s_levels.len() * self.design.r_factors.len();
                let needed = self.sampling.min_e_per_sr as usize * cells;
                if self.sampling.min_e_per_sr == 0 {
                    push("sampling.min_e_per_sr", "must be >= 1".into());
                }
                if self.sampling.min_e_per_sr > self.noise.n_draws {
                    push(
                        "sampling.min_e_per_sr",
                        format!(
                            "floor {} exceeds n_draws {}",
                            self.sampling.min_e_per_sr, self.noise.n_draws
                        ),
                    );
                }
                if needed > self.sampling.budget {
                    push(
                        "sampling.min_e_per_sr",
                        format!(
                            "floor needs {needed} runs, budget is {}",
                            self.sampling.budget
                        ),
                    );
                }
            }
            other => push("sampling.strategy", format!("unknown strategy {other:?}")),
        }

        if !(self.analysis.cellsize > 0.0) {
            push(
                "analysis.cellsize",
                format!("must be > 0, got {}", self.analysis.cellsize),
            );
        }
        if ResampleMethod_parse(&self.analysis.method).is_none() {
            push(
                "analysis.method",
                format!("unknown method {:?}", self.analysis.method),
            );
        }
        if self.analysis.boot == 0 {
            push("analysis.boot", "must be >= 1".into());
        }
        if self.analysis.boot_n < 2 {
            push("analysis.boot_n", "must be >= 2".into());
        }
        if self.analysis.boot_n > self.sampling.budget {
            push(
                "analysis.boot_n",
                format!(
                    "subsample {} exceeds budget {}",
                    self.analysis.boot_n, self.sampling.budget
                ),
            );
        }

        // Deep checks only when the referenced files parse.
        if let Ok(probes) = ProbeSet::read_csv(&self.resolve(&self.probes.path)) {
            if let Ok(dtm) = raster::read_raster(&self.resolve(&self.stack.dtm)) {
                if let Err(e) = probes.check_inside(&dtm.header) {
                    push("probes.path", e.to_string());
                }
            }
        }
        if self.resolve(&self.hydrograph.path).exists() {
            if let Err(e) = Hydrograph::read_csv(&self.resolve(&self.hydrograph.path)) {
                push("hydrograph.path", e.to_string());
            }
        }

        diags
    }

    /// Load the feature stack referenced by the config.
    pub fn load_stack(&self) -> Result<FeatureStack, crate::ensemble::EnsembleError> {
        let dtm = raster::read_raster(&self.resolve(&self.stack.dtm))?;
        let mut layers = Vec::new();
        for (name, path) in [
            ("buildings", &self.stack.buildings),
            ("walls", &self.stack.walls),
            ("thin_structures", &self.stack.thin_structures),
        ] {
            layers.push(FeatureLayer {
                name: name.to_string(),
                mask: raster::read_raster(&self.resolve(path))?,
            });
        }
        FeatureStack::new(dtm, layers)
    }

    pub fn load_probes(&self) -> Result<ProbeSet, crate::probe::ProbeError> {
        ProbeSet::read_csv(&self.resolve(&self.probes.path))
    }

    pub fn load_hydrograph(&self) -> Result<Hydrograph, crate::solver::SolverError> {
        Hydrograph::read_csv(&self.resolve(&self.hydrograph.path))
    }

    pub fn sampling_plan(&self) -> SamplingPlan {
        let strategy = match self.sampling.strategy.as_str() {
            "stratified_min_per_cell" => SamplingStrategy::StratifiedMinPerCell {
                min_e_per_sr: self.sampling.min_e_per_sr,
            },
            _ => SamplingStrategy::WithoutReplacementUniform,
        };
        SamplingPlan {
            strategy,
            budget: self.sampling.budget,
            seed: self.sampling.seed,
        }
    }

    /// Assemble the per-run scenario (solver + boundaries + hydrograph).
    pub fn scenario(&self) -> Result<Scenario, crate::solver::SolverError> {
        Ok(Scenario {
            solver: self.solver,
            bc: self.boundaries,
            hydrograph: self.load_hydrograph()?,
            initial: self.initial.mode,
        })
    }

    pub fn analysis_method(&self) -> ResampleMethod {
        ResampleMethod_parse(&self.analysis.method).unwrap_or(ResampleMethod::Average)
    }

    /// Serialize the resolved config back to TOML (for provenance copies).
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[allow(non_snake_case)]
fn ResampleMethod_parse(s: &str) -> Option<ResampleMethod> {
    match s {
        "average" => Some(ResampleMethod::Average),
        "nearest" => Some(ResampleMethod::Nearest),
        _ => None,
    }
}

/// Parse and fully validate a config file.
///
/// Returns the resolved config, or `ConfigError::Invalid` with every
/// violation found.
pub fn validate_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let config = PipelineConfig::load(path)?;
    let diags = config.validate();
    if diags.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Invalid(diags))
    }
}

/// A ready-to-run config for a freshly generated fixture directory.
pub fn demo_config_toml() -> String {
    r#"# Demo pipeline configuration; paths are relative to this file.

[stack]
dtm = "dtm.asc"
buildings = "buildings.asc"
walls = "walls.asc"
thin_structures = "thin_structures.asc"

[noise]
sigma = 0.2        # vertical error std-dev (m)
n_draws = 10       # independent error grids
master_seed = 42

[design]
s_levels = [1, 2, 3, 4]
r_factors = [1, 2, 3, 4, 5]

[solver]
manning_n = 0.015
cfl = 0.5
h_dry = 1e-6
reconstruction = "first_order"
t_end = 360.0
output_interval = 60.0

[boundaries]
north = { type = "inflow_discharge" }
south = { type = "neumann_outflow" }
east = { type = "wall" }
west = { type = "wall" }

[hydrograph]
path = "hydrograph.csv"

[initial]
mode = "dry"

[sampling]
strategy = "stratified_min_per_cell"
min_e_per_sr = 5
budget = 150
seed = 7

[probes]
path = "probes.csv"

[analysis]
cellsize = 5.0
method = "average"
boot = 2000
boot_n = 100
boot_seed = 11
min_samples = 100
order_seed = 13
"#
    .to_string()
}
