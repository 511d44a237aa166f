//! Scenario configuration files (TOML).

use std::path::Path;

use qmep::assumptions::AssumptionSettings;
use qmep::operator::Tolerances;
use qmep::pathspace::{check_cap, DEFAULT_CAP};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::source::RhoPolicy;

pub const CONFIG_VERSION: u32 = 1;

fn default_cap() -> usize {
    DEFAULT_CAP
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_cap")]
    pub cap: usize,
    pub instrument: InstrumentConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub tasks: Tasks,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentConfig {
    /// `builtin:name(args)` or a path relative to the config file.
    pub source: String,
    #[serde(default)]
    pub rho: RhoPolicy,
    #[serde(default)]
    pub theta: Option<Vec<(String, String)>>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tasks {
    pub validate: Option<ValidateTask>,
    pub assumptions: Option<AssumptionSettings>,
    pub ep: Option<EpTask>,
    pub pressure: Option<PressureTask>,
    pub ldp: Option<LdpTask>,
    pub hypotest: Option<HypotestTask>,
    pub sample: Option<SampleTask>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateTask {
    /// Word length for the reversal identity check.
    #[serde(default = "default_or_horizon")]
    pub or_horizon: usize,
}

fn default_or_horizon() -> usize {
    4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpTask {
    pub t_max: usize,
    #[serde(default)]
    pub mc_t: Option<usize>,
    #[serde(default = "default_mc_n")]
    pub mc_n: usize,
}

fn default_mc_n() -> usize {
    1000
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureTask {
    /// Explicit α values; otherwise the default grid.
    #[serde(default)]
    pub alphas: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub t_min: usize,
    pub t_max: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpTask {
    pub interval: (f64, f64),
    #[serde(default = "one")]
    pub t_min: usize,
    pub t_max: usize,
    /// Horizon of the pressure curve behind the rate function; defaults to `t_max`.
    #[serde(default)]
    pub pressure_t_max: Option<usize>,
    #[serde(default)]
    pub s_grid: Option<Vec<f64>>,
    #[serde(default = "default_s_points")]
    pub s_points: usize,
}

fn default_s_points() -> usize {
    201
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypotestTask {
    pub epsilon: f64,
    #[serde(default = "one")]
    pub t_min: usize,
    pub t_max: usize,
    /// `ψ` is evaluated on `s_points` values in `[0, s_max]`.
    #[serde(default = "default_s_max")]
    pub s_max: f64,
    #[serde(default = "default_s_points")]
    pub s_points: usize,
}

fn default_s_max() -> f64 {
    2.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleTask {
    pub t: usize,
    pub n: usize,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: ScenarioConfig = toml::from_str(text)?;
        if c.version != CONFIG_VERSION {
            return Err(CliError::usage(format!("unsupported config version {}", c.version)));
        }
        Ok(c)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CliError::usage(format!("config file {} does not exist", path.display()))
            } else {
                CliError::io(path, e)
            }
        })?;
        Self::from_toml(&text)
    }

    /// SHA-256 of the canonical JSON form of the parsed config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Largest `T` each enumerating task needs, by task name.
    pub fn horizons(&self) -> Vec<(&'static str, usize)> {
        let t = &self.tasks;
        let mut out = Vec::new();
        if let Some(v) = &t.validate {
            out.push(("validate", v.or_horizon));
        }
        if let Some(a) = &t.assumptions {
            out.push(("assumptions", a.b_horizon));
        }
        if let Some(e) = &t.ep {
            out.push(("ep", e.t_max));
        }
        if let Some(p) = &t.pressure {
            out.push(("pressure", p.t_max));
        }
        if let Some(l) = &t.ldp {
            out.push(("ldp", l.t_max.max(l.pressure_t_max.unwrap_or(0))));
        }
        if let Some(h) = &t.hypotest {
            out.push(("hypotest", h.t_max));
        }
        out
    }

    /// Grid and range checks, and the enumeration cap against each task's
    /// horizon, before any work starts.
    pub fn check(&self, letters: usize) -> Result<()> {
        let t = &self.tasks;
        let range = |name: &str, lo: usize, hi: usize| -> Result<()> {
            if lo == 0 || lo > hi {
                return Err(CliError::usage(format!("task `{name}`: T range must satisfy 1 ≤ t_min ≤ t_max")));
            }
            Ok(())
        };
        if let Some(p) = &t.pressure {
            range("pressure", p.t_min, p.t_max)?;
            if p.alphas.as_ref().is_some_and(|a| a.is_empty()) {
                return Err(CliError::usage("task `pressure`: alpha grid is empty"));
            }
        }
        if let Some(l) = &t.ldp {
            range("ldp", l.t_min, l.t_max)?;
            if !(l.interval.0 < l.interval.1) {
                return Err(CliError::usage("task `ldp`: interval must satisfy a < b"));
            }
            if l.s_grid.as_ref().is_some_and(|g| g.is_empty()) || l.s_points == 0 {
                return Err(CliError::usage("task `ldp`: s grid is empty"));
            }
        }
        if let Some(h) = &t.hypotest {
            range("hypotest", h.t_min, h.t_max)?;
            if !(h.epsilon > 0.0 && h.epsilon < 1.0) {
                return Err(CliError::usage("task `hypotest`: epsilon must lie in (0, 1)"));
            }
            if h.s_points == 0 || !(h.s_max >= 0.0) {
                return Err(CliError::usage("task `hypotest`: s grid is empty"));
            }
        }
        if let Some(e) = &t.ep {
            range("ep", 1, e.t_max)?;
        }
        if let Some(s) = &t.sample {
            if s.t == 0 || s.n == 0 {
                return Err(CliError::usage("task `sample`: t and n must be positive"));
            }
        }
        for (name, horizon) in self.horizons() {
            if check_cap(letters, horizon, self.cap).is_err() {
                return Err(CliError::usage(format!(
                    "task `{name}`: {letters}^{horizon} words exceed the cap {}",
                    self.cap
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1
seed = 3
[instrument]
source = "builtin:bernoulli(0.7)"
[tasks.pressure]
t_max = 6
"#;

    #[test]
    fn parse_and_hash() {
        let c = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.cap, DEFAULT_CAP);
        assert_eq!(c.tasks.pressure.as_ref().unwrap().t_min, 1);
        assert_eq!(c.hash(), ScenarioConfig::from_toml(MINIMAL).unwrap().hash());
        c.check(2).unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ScenarioConfig::from_toml(&MINIMAL.replace("version = 1", "version = 9")).is_err());
        assert!(ScenarioConfig::from_toml(&MINIMAL.replace("seed = 3", "sede = 3")).is_err());
        let big = ScenarioConfig::from_toml(&MINIMAL.replace("t_max = 6", "t_max = 40")).unwrap();
        let err = big.check(2).unwrap_err();
        assert!(err.to_string().contains("pressure"));
        assert_eq!(err.exit_code(), 2);
    }
}
