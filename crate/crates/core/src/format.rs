//! Instrument files.
//!
//! ```json
//! {
//!   "version": 1,
//!   "dim": 1,
//!   "alphabet": ["a", "b"],
//!   "kraus": {"a": [[[0.8366600265340756]]], "b": [[[0.5477225575051661]]]},
//!   "theta": [["a", "b"]]
//! }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::instrument::{Instrument, Involution, Process};
use crate::operator::{json, CpMap, Operator, Tolerances};

pub const FORMAT_VERSION: u32 = 1;

/// How the listed Kraus operators act on observables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KrausConvention {
    /// `Φ[X] = Σ V* X V`.
    #[default]
    VStarXV,
    /// `Φ[X] = Σ V X V*`; operators are adjointed on ingestion.
    VXVStar,
}

fn default_version() -> u32 {
    FORMAT_VERSION
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentFile {
    #[serde(default = "default_version")]
    pub version: u32,
    pub dim: usize,
    pub alphabet: Vec<String>,
    pub kraus: BTreeMap<String, Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<(String, String)>>,
    #[serde(default)]
    pub convention: KrausConvention,
    /// Accept a faithful `ρ` that is not invariant.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub relaxed: bool,
}

impl InstrumentFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let f: InstrumentFile = serde_json::from_str(text)?;
        if f.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {}", f.version)));
        }
        Ok(f)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn instrument(&self) -> Result<Instrument> {
        for label in self.kraus.keys() {
            if !self.alphabet.contains(label) {
                return Err(Error::UnknownLabel(label.clone()));
            }
        }
        let maps = self
            .alphabet
            .iter()
            .map(|label| {
                let ops = self
                    .kraus
                    .get(label)
                    .ok_or_else(|| Error::Format(format!("no Kraus operators for `{label}`")))?;
                let kraus = ops
                    .iter()
                    .map(|v| {
                        let m = json::from_value(v)?;
                        if m.nrows() != self.dim {
                            return Err(Error::DimensionMismatch { expected: self.dim, found: m.nrows() });
                        }
                        Ok(match self.convention {
                            KrausConvention::VStarXV => m,
                            KrausConvention::VXVStar => m.adjoint(),
                        })
                    })
                    .collect::<Result<Vec<Operator>>>()?;
                if kraus.is_empty() {
                    return Err(Error::Format(format!("no Kraus operators for `{label}`")));
                }
                CpMap::new(kraus)
            })
            .collect::<Result<Vec<_>>>()?;
        Instrument::new(self.alphabet.clone(), maps)
    }

    pub fn involution(&self) -> Result<Involution> {
        match &self.theta {
            Some(pairs) => Involution::from_label_pairs(&self.alphabet, pairs),
            None => Ok(Involution::identity(self.alphabet.len())),
        }
    }

    /// Process with the canonical reversal attached whenever it exists.
    pub fn process(&self, tol: &Tolerances) -> Result<Process> {
        let instrument = self.instrument()?;
        let theta = self.involution()?;
        let p = match &self.rho {
            None => Process::with_invariant_state(instrument, theta)?,
            Some(v) => {
                let rho = json::from_value(v)?;
                if self.relaxed {
                    Process::relaxed(instrument, rho, theta)?
                } else {
                    Process::new_with(instrument, rho, theta, tol)?
                }
            }
        };
        Ok(p.clone().with_canonical_reversal().unwrap_or(p))
    }

    /// File for a process, Kraus operators in the `V* X V` convention.
    pub fn from_process(p: &Process) -> Self {
        let instr = p.instrument();
        let kraus = instr
            .alphabet()
            .iter()
            .zip(instr.maps())
            .map(|(label, m)| (label.clone(), m.kraus().iter().map(json::to_value).collect()))
            .collect();
        let theta = (!p.theta().is_identity()).then(|| p.theta().label_pairs(instr.alphabet()));
        InstrumentFile {
            version: FORMAT_VERSION,
            dim: instr.dim(),
            alphabet: instr.alphabet().to_vec(),
            kraus,
            rho: Some(json::to_value(p.rho())),
            theta,
            convention: KrausConvention::VStarXV,
            relaxed: p.is_relaxed(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::bernoulli;
    use crate::pathspace::{log_prob_labels, Direction};

    #[test]
    fn round_trip_bernoulli() {
        let p = bernoulli(0.7).unwrap();
        let f = InstrumentFile::from_process(&p);
        let text = f.to_json().unwrap();
        let q = InstrumentFile::from_json(&text).unwrap().process(&Tolerances::default()).unwrap();
        assert_eq!(q.instrument().alphabet(), p.instrument().alphabet());
        let w = ["a", "a", "b"];
        let a = log_prob_labels(&p, &w, Direction::Reversed).unwrap();
        let b = log_prob_labels(&q, &w, Direction::Reversed).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn convention_and_errors() {
        let text = r#"{"dim": 2, "alphabet": ["x"],
            "kraus": {"x": [[[0, 1], [0, 0]], [[0, 0], [1, 0]]]},
            "convention": "v_x_v_star"}"#;
        let f = InstrumentFile::from_json(text).unwrap();
        let p = f.process(&Tolerances::default()).unwrap();
        assert!((p.lambda0() - 0.5).abs() < 1e-12);
        let bad = r#"{"dim": 1, "alphabet": ["a"], "kraus": {"a": [[[0.5]]]}}"#;
        let f = InstrumentFile::from_json(bad).unwrap();
        assert!(matches!(f.process(&Tolerances::default()), Err(Error::NotUnital { .. })));
        let v2 = r#"{"version": 2, "dim": 1, "alphabet": ["a"], "kraus": {"a": [[[1]]]}}"#;
        assert!(InstrumentFile::from_json(v2).is_err());
        let unknown = r#"{"dim": 1, "alphabet": ["a"], "kraus": {"a": [[[1]]], "z": [[[1]]]}}"#;
        let f = InstrumentFile::from_json(unknown).unwrap();
        assert!(matches!(f.instrument(), Err(Error::UnknownLabel(_))));
    }
}
