//! Scenario files: JSON documents mirroring [`SystemConfig`] plus the run
//! settings. Unknown fields are rejected.

use std::path::Path;

use ecc_market::solver::{grid_steps, SweepParams};
use ecc_market::{AllocationState, CcpWeights, EcpWeights, PopulationState, SystemConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Olsec,
    Ssec,
    FixedControls,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Olsec => "olsec",
            Scheme::Ssec => "ssec",
            Scheme::FixedControls => "fixed-controls",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "olsec" => Ok(Scheme::Olsec),
            "ssec" => Ok(Scheme::Ssec),
            "fixed-controls" => Ok(Scheme::FixedControls),
            other => Err(CliError::invalid("scheme", format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Keyword {
    /// `Kφ = Σ R_n + R_c`, evaluated on the file's own values.
    Balanced,
}

/// A number, or `"balanced"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NominalRate {
    Value(f64),
    Keyword(Keyword),
}

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    #[serde(rename = "R_c")]
    CloudPower,
    #[serde(rename = "p_c")]
    CloudPrice,
    #[serde(rename = "tau_x")]
    Delay,
}

impl SweepParameter {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParameter::CloudPower => "R_c",
            SweepParameter::CloudPrice => "p_c",
            SweepParameter::Delay => "tau_x",
        }
    }

    /// Copy of `cfg` with this parameter set to `value`.
    pub fn apply(&self, cfg: &SystemConfig, value: f64) -> SystemConfig {
        let mut cfg = cfg.clone();
        match self {
            SweepParameter::CloudPower => cfg.cloud_power = value,
            SweepParameter::CloudPrice => cfg.cloud_access_price = value,
            SweepParameter::Delay => cfg.population_delay = value,
        }
        cfg
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "R_c" => Ok(SweepParameter::CloudPower),
            "p_c" => Ok(SweepParameter::CloudPrice),
            "tau_x" => Ok(SweepParameter::Delay),
            other => Err(CliError::invalid(
                "param",
                format!("cannot sweep {other:?}; expected R_c, p_c or tau_x"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iter: usize,
    pub tol: f64,
    pub relaxation: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let p = SweepParams::default();
        Self {
            max_iter: p.max_iter,
            tol: p.tol,
            relaxation: p.relaxation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EcpWeightsFile {
    pub revenue: f64,
    pub payment: f64,
    pub mismatch: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcpWeightsFile {
    pub revenue: f64,
    pub sales: f64,
    pub mismatch: f64,
}

/// The on-disk document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub ecp_power: Vec<f64>,
    pub ecp_access_price: Vec<f64>,
    pub n_users: u32,
    pub cloud_power: f64,
    pub cloud_access_price: f64,
    pub learning_rate: f64,
    pub mapping_factor: f64,
    pub discount_rate: f64,
    pub ecp_weights: EcpWeightsFile,
    pub ccp_weights: CcpWeightsFile,
    pub nominal_rate: NominalRate,
    pub horizon: f64,
    #[serde(default)]
    pub population_delay: f64,
    #[serde(default)]
    pub price_cap: Option<f64>,
    pub x0: Vec<f64>,
    pub r0: Vec<f64>,
    /// Price used by the fixed-controls scheme.
    #[serde(default)]
    pub p0: f64,
    pub dt: f64,
    pub eps_convergence: f64,
    pub scheme: Scheme,
    #[serde(default)]
    pub sweeps: Vec<SweepBlock>,
    #[serde(default)]
    pub solver: SolverSettings,
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub scheme: Option<Scheme>,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SystemConfig,
    pub x0: PopulationState,
    pub r0: AllocationState,
    pub p0: f64,
    pub dt: f64,
    pub eps_convergence: f64,
    pub scheme: Scheme,
    pub sweeps: Vec<SweepBlock>,
    pub solver: SweepParams,
}

impl Scenario {
    pub fn load(path: &Path, overrides: Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: Overrides) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(schema_error)?;
        file.resolve(overrides)
    }

    /// Values for `parameter` from the file's sweep blocks, if any.
    pub fn sweep_values(&self, parameter: SweepParameter) -> Option<&[f64]> {
        self.sweeps
            .iter()
            .find(|s| s.parameter == parameter)
            .map(|s| s.values.as_slice())
    }
}

/// Names the offending field: the path serde was at, or for missing fields
/// (reported one level up) the name quoted in the message.
fn schema_error(e: serde_path_to_error::Error<serde_json::Error>) -> CliError {
    let path = e.path().to_string();
    let msg = e.inner().to_string();
    let quoted = msg.split('`').nth(1).filter(|_| msg.contains("field"));
    let field = match (path.as_str(), quoted) {
        (".", Some(name)) => name.to_string(),
        (".", None) => "scenario".to_string(),
        (p, Some(name)) if msg.contains("missing field") => format!("{p}.{name}"),
        (p, _) => p.to_string(),
    };
    CliError::InvalidScenario { field, reason: msg }
}

impl ScenarioFile {
    pub fn resolve(mut self, overrides: Overrides) -> Result<Scenario, CliError> {
        if let Some(dt) = overrides.dt {
            self.dt = dt;
        }
        if let Some(h) = overrides.horizon {
            self.horizon = h;
        }
        if let Some(s) = overrides.scheme {
            self.scheme = s;
        }

        let mut config = SystemConfig {
            ecp_power: self.ecp_power,
            ecp_access_price: self.ecp_access_price,
            n_users: self.n_users,
            cloud_power: self.cloud_power,
            cloud_access_price: self.cloud_access_price,
            learning_rate: self.learning_rate,
            mapping_factor: self.mapping_factor,
            discount_rate: self.discount_rate,
            ecp_weights: EcpWeights {
                revenue: self.ecp_weights.revenue,
                payment: self.ecp_weights.payment,
                mismatch: self.ecp_weights.mismatch,
            },
            ccp_weights: CcpWeights {
                revenue: self.ccp_weights.revenue,
                sales: self.ccp_weights.sales,
                mismatch: self.ccp_weights.mismatch,
            },
            nominal_rate: 0.0,
            horizon: self.horizon,
            population_delay: self.population_delay,
            price_cap: self.price_cap,
        };
        config.nominal_rate = match self.nominal_rate {
            NominalRate::Value(v) => v,
            NominalRate::Keyword(Keyword::Balanced) => config.balanced_nominal_rate(),
        };
        config.validate()?;
        let n = config.n_ecps();

        if self.x0.len() != n + 1 {
            return Err(CliError::invalid(
                "x0",
                format!("expected {} entries, got {}", n + 1, self.x0.len()),
            ));
        }
        if self.x0.iter().any(|v| !(*v > 0.0)) {
            return Err(CliError::invalid("x0", "every share must be positive"));
        }
        let x0 = PopulationState::new(self.x0).map_err(|e| CliError::invalid("x0", e.to_string()))?;

        if self.r0.len() != n {
            return Err(CliError::invalid(
                "r0",
                format!("expected {n} entries, got {}", self.r0.len()),
            ));
        }
        let r0 = AllocationState::new(self.r0).map_err(|e| CliError::invalid("r0", e.to_string()))?;

        if !(self.p0 >= 0.0 && self.p0 <= config.price_cap()) {
            return Err(CliError::invalid("p0", "must lie in [0, price_cap]"));
        }
        grid_steps(0.0, config.horizon, self.dt).map_err(|e| CliError::invalid("dt", e.to_string()))?;
        if !(self.eps_convergence > 0.0) {
            return Err(CliError::invalid("eps_convergence", "must be positive"));
        }
        for block in &self.sweeps {
            if block.values.is_empty() {
                return Err(CliError::invalid(
                    "sweeps",
                    format!("no values for {}", block.parameter.as_str()),
                ));
            }
        }
        let s = self.solver;
        if s.max_iter == 0 {
            return Err(CliError::invalid("solver", "max_iter must be positive"));
        }
        if !(s.tol > 0.0) || !(s.relaxation > 0.0 && s.relaxation <= 1.0) {
            return Err(CliError::invalid("solver", "need tol > 0 and relaxation in (0, 1]"));
        }

        Ok(Scenario {
            config,
            x0,
            r0,
            p0: self.p0,
            dt: self.dt,
            eps_convergence: self.eps_convergence,
            scheme: self.scheme,
            sweeps: self.sweeps,
            solver: SweepParams {
                max_iter: s.max_iter,
                tol: s.tol,
                relaxation: s.relaxation,
            },
        })
    }
}
