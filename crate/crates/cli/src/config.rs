//! TOML configuration with sections `problem`, `basis`, `design`, `delay`,
//! `sim` and `sweep`. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use rdstab_core::control::QuadRule;
use rdstab_core::delay::{DelayField, DelayKind};
use rdstab_core::design::{ControllerDesign, DEFAULT_ENVELOPE_SAMPLES};
use rdstab_core::sim::{InitialCondition, SimulationConfig, EIGEN_TOL};
use rdstab_core::spectral::{solve_eigensystem, Grid, SpectralBasis, SturmLiouvilleProblem};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{0}")]
    Syntax(String),

    /// `key` is the dotted path of the offending entry, e.g. `problem.p`.
    #[error("{key}: {message}")]
    Schema { key: String, message: String },
}

impl ConfigError {
    fn schema(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Schema {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub problem: SturmLiouvilleProblem,
    #[serde(default)]
    pub basis: BasisSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<DelaySection>,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisSection {
    /// Modes computed and simulated.
    pub n_modes: usize,
    pub grid_nodes: usize,
    pub tol: f64,
}

impl Default for BasisSection {
    fn default() -> Self {
        Self {
            n_modes: 20,
            grid_nodes: Grid::DEFAULT_NODES,
            tol: EIGEN_TOL,
        }
    }
}

fn default_t0() -> f64 {
    0.2
}

fn default_true() -> bool {
    true
}

fn default_samples() -> usize {
    DEFAULT_ENVELOPE_SAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    #[serde(default)]
    pub margin: f64,
    pub d0: f64,
    pub poles: Vec<f64>,
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default = "default_true")]
    pub sigma_search: bool,
    #[serde(default = "default_samples")]
    pub envelope_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelaySection {
    Constant {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta_claimed: Option<f64>,
    },
    UniformSinusoid {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta_claimed: Option<f64>,
    },
    Reference {
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta_claimed: Option<f64>,
    },
    /// CSV with columns `t, xi, D` on a rectangular lattice.
    CustomSampled {
        file: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta_claimed: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub t_end: f64,
    pub dt: f64,
    pub rule: QuadRule,
    pub open_loop: bool,
    pub output_every: usize,
    pub initial: InitialCondition,
    pub divergence_threshold: f64,
    /// Certify the design before simulating and record the result.
    pub attach_certificate: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            t_end: 30.0,
            dt: 1e-3,
            rule: QuadRule::LeftRiemann,
            open_loop: false,
            output_every: 10,
            initial: InitialCondition::Reference,
            divergence_threshold: 1e12,
            attach_certificate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub deltas: Vec<f64>,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub open_loop: bool,
    pub dt: Option<f64>,
    pub modes: Option<usize>,
    pub rule: Option<QuadRule>,
}

/// Turns a serde message about a field into the dotted key it names.
fn schema_error(path: &str, message: String) -> ConfigError {
    let named = ["missing field `", "unknown field `"]
        .iter()
        .find_map(|prefix| message.strip_prefix(prefix))
        .and_then(|rest| rest.split('`').next());
    let key = match (path, named) {
        (".", Some(field)) => field.to_string(),
        (p, Some(field)) if p != field && !p.ends_with(&format!(".{field}")) => {
            format!("{p}.{field}")
        }
        (p, _) => p.to_string(),
    };
    ConfigError::Schema { key, message }
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let value: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let config: Self =
            serde_path_to_error::deserialize(toml::Value::Table(value)).map_err(|e| {
                let path = e.path().to_string();
                let message = e.into_inner().to_string();
                schema_error(
                    &path,
                    message.lines().next().unwrap_or_default().to_string(),
                )
            })?;
        config.check()?;
        Ok(config)
    }

    /// Reads `path`; a relative sampled-delay file is resolved against the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.into(),
            source,
        })?;
        let mut config = Self::from_toml(&text)?;
        if let Some(DelaySection::CustomSampled { file, .. }) = &mut config.delay {
            if file.is_relative() {
                *file = path.parent().unwrap_or(Path::new(".")).join(&*file);
            }
        }
        Ok(config)
    }

    fn check(&self) -> Result<(), ConfigError> {
        if self.basis.n_modes == 0 {
            return Err(ConfigError::schema("basis.n_modes", "must be at least 1"));
        }
        if self.basis.grid_nodes < 3 || self.basis.grid_nodes.is_multiple_of(2) {
            return Err(ConfigError::schema(
                "basis.grid_nodes",
                "must be an odd number ≥ 3",
            ));
        }
        if self.sim.dt.is_nan() || self.sim.dt <= 0.0 {
            return Err(ConfigError::schema("sim.dt", "must be positive"));
        }
        if self.sim.t_end.is_nan() || self.sim.t_end <= 0.0 {
            return Err(ConfigError::schema("sim.t_end", "must be positive"));
        }
        if self.sim.output_every == 0 {
            return Err(ConfigError::schema(
                "sim.output_every",
                "must be at least 1",
            ));
        }
        if let Some(d) = &self.design {
            if d.poles.is_empty() {
                return Err(ConfigError::schema(
                    "design.poles",
                    "needs at least one pole",
                ));
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if o.open_loop {
            self.sim.open_loop = true;
        }
        if let Some(dt) = o.dt {
            self.sim.dt = dt;
        }
        if let Some(m) = o.modes {
            self.basis.n_modes = m;
        }
        if let Some(r) = o.rule {
            self.sim.rule = r;
        }
        self.check()
    }

    pub fn design_section(&self) -> Result<&DesignSection, ConfigError> {
        self.design
            .as_ref()
            .ok_or_else(|| ConfigError::schema("design", "section is required for this command"))
    }

    pub fn delay_section(&self) -> Result<&DelaySection, ConfigError> {
        self.delay
            .as_ref()
            .ok_or_else(|| ConfigError::schema("delay", "section is required for this command"))
    }

    pub fn grid(&self) -> rdstab_core::Result<Grid> {
        Grid::uniform(self.basis.grid_nodes)
    }

    pub fn basis(&self) -> rdstab_core::Result<SpectralBasis> {
        solve_eigensystem(
            &self.problem,
            self.basis.n_modes,
            &self.grid()?,
            self.basis.tol,
        )
    }

    pub fn controller(&self, basis: &SpectralBasis) -> anyhow::Result<ControllerDesign> {
        let d = self.design_section()?;
        Ok(ControllerDesign::from_basis(
            basis, d.margin, d.d0, &d.poles, d.t0,
        )?)
    }

    pub fn delay_field(&self) -> anyhow::Result<DelayField> {
        let d0 = self.design_section()?.d0;
        let (kind, claimed) = match self.delay_section()? {
            DelaySection::Constant { delta_claimed } => (DelayKind::Constant, *delta_claimed),
            DelaySection::UniformSinusoid {
                amplitude,
                omega,
                phase,
                delta_claimed,
            } => (
                DelayKind::UniformSinusoid {
                    amplitude: *amplitude,
                    omega: *omega,
                    phase: *phase,
                },
                *delta_claimed,
            ),
            DelaySection::Reference {
                amplitude,
                delta_claimed,
            } => (
                DelayKind::Reference {
                    amplitude: *amplitude,
                },
                *delta_claimed,
            ),
            DelaySection::CustomSampled {
                file,
                delta_claimed,
            } => (read_sampled_delay(file)?, *delta_claimed),
        };
        let mut field = DelayField {
            kind,
            d0,
            delta_claimed: 0.0,
        };
        field.delta_claimed = claimed.unwrap_or_else(|| field.deviation_bound());
        field.validate()?;
        Ok(field)
    }

    pub fn simulation(
        &self,
        design: ControllerDesign,
        delay: DelayField,
        certified_delta: Option<f64>,
    ) -> SimulationConfig {
        let mut c = SimulationConfig::new(
            self.problem.clone(),
            design,
            delay,
            self.sim.initial.clone(),
        );
        c.n_sim_modes = self.basis.n_modes;
        c.t_end = self.sim.t_end;
        c.dt = self.sim.dt;
        c.grid = Grid::uniform(self.basis.grid_nodes).unwrap_or_default();
        c.rule = self.sim.rule;
        c.open_loop = self.sim.open_loop;
        c.output_every = self.sim.output_every;
        c.divergence_threshold = self.sim.divergence_threshold;
        c.certified_delta = certified_delta;
        c
    }
}

#[derive(Debug, Deserialize)]
struct DelayRow {
    t: f64,
    xi: f64,
    #[serde(rename = "D")]
    d: f64,
}

/// Reads a long-format `t, xi, D` table covering a full rectangular lattice.
fn read_sampled_delay(path: &Path) -> anyhow::Result<DelayKind> {
    let invalid = |m: String| ConfigError::schema("delay.file", m);
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let rows: Vec<DelayRow> = reader
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let axis = |f: fn(&DelayRow) -> f64| {
        let mut v: Vec<f64> = rows.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let times = axis(|r| r.t);
    let positions = axis(|r| r.xi);
    if rows.len() != times.len() * positions.len() {
        return Err(invalid(format!(
            "{} rows do not fill a {}×{} lattice",
            rows.len(),
            times.len(),
            positions.len()
        ))
        .into());
    }
    let mut values = vec![f64::NAN; rows.len()];
    for r in &rows {
        let i = times.partition_point(|t| *t < r.t);
        let j = positions.partition_point(|x| *x < r.xi);
        values[i * positions.len() + j] = r.d;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(invalid("duplicate lattice points".into()).into());
    }
    Ok(DelayKind::CustomSampled {
        times,
        positions,
        values,
    })
}
