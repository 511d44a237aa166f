//! Instrument sources: `builtin:name(args)` or a path to an instrument file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use qmep::format::InstrumentFile;
use qmep::instrument::{self, Instrument, Involution, Process};
use qmep::operator::{c64, diag, identity, kron, matrix_unit, real_matrix, Operator, Tolerances, C64};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Builtin {
    Bernoulli(f64),
    Markov(Vec<Vec<f64>>),
    Cycle(usize, f64),
    VonNeumann(f64),
    Ancilla(f64, f64),
    Trivial(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Builtin(Builtin),
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoPolicy {
    /// Use the unique invariant state of `Φ`.
    #[default]
    Auto,
    /// Use `rho` from the instrument file.
    Explicit,
}

fn numbers(args: &str) -> Result<Vec<serde_json::Value>> {
    serde_json::from_str::<Vec<serde_json::Value>>(&format!("[{args}]"))
        .map_err(|e| CliError::usage(format!("cannot parse builtin arguments `{args}`: {e}")))
}

fn num(v: &serde_json::Value, what: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| CliError::usage(format!("{what} must be a number")))
}

fn count(v: &serde_json::Value, what: &str) -> Result<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| CliError::usage(format!("{what} must be a non-negative integer")))
}

impl FromStr for Builtin {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(i) if s.ends_with(')') => (&s[..i], &s[i + 1..s.len() - 1]),
            None => (s, ""),
            _ => return Err(CliError::usage(format!("malformed builtin `{s}`"))),
        };
        let a = numbers(args)?;
        let arity = |n: usize| -> Result<()> {
            if a.len() == n {
                Ok(())
            } else {
                Err(CliError::usage(format!("builtin `{name}` takes {n} argument(s)")))
            }
        };
        Ok(match name.trim() {
            "bernoulli" => {
                arity(1)?;
                Builtin::Bernoulli(num(&a[0], "p")?)
            }
            "markov" => {
                arity(1)?;
                let rows: Vec<Vec<f64>> = serde_json::from_value(a[0].clone())
                    .map_err(|e| CliError::usage(format!("markov expects a matrix: {e}")))?;
                Builtin::Markov(rows)
            }
            "cycle" => {
                arity(2)?;
                Builtin::Cycle(count(&a[0], "n")?, num(&a[1], "q")?)
            }
            "von_neumann" => {
                arity(1)?;
                Builtin::VonNeumann(num(&a[0], "angle")?)
            }
            "ancilla" => {
                arity(2)?;
                Builtin::Ancilla(num(&a[0], "angle")?, num(&a[1], "q")?)
            }
            "trivial" => match a.len() {
                0 => Builtin::Trivial(1),
                1 => Builtin::Trivial(count(&a[0], "d")?),
                _ => return Err(CliError::usage("builtin `trivial` takes at most one argument")),
            },
            other => return Err(CliError::usage(format!("unknown builtin `{other}`"))),
        })
    }
}

impl FromStr for Source {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("builtin:") {
            Some(rest) => Ok(Source::Builtin(rest.parse()?)),
            None => Ok(Source::File(PathBuf::from(s))),
        }
    }
}

/// Qubit rotation by `angle` followed by a computational-basis measurement.
fn von_neumann_rotation(angle: f64) -> Result<Instrument> {
    let (c, s) = (angle.cos(), angle.sin());
    let u = real_matrix(&[vec![c, -s], vec![s, c]])?;
    Ok(instrument::von_neumann(&u, &[matrix_unit(2, 0, 0), matrix_unit(2, 1, 1)])?)
}

/// Qubit coupled to a probe in `diag(q, 1−q)` by `cos(angle)𝟙 − i sin(angle) SWAP`,
/// probe measured in the computational basis.
fn exchange_ancilla(angle: f64, q: f64) -> Result<Instrument> {
    let swap = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .fold(Operator::zeros(4, 4), |acc, (i, j)| acc + kron(&matrix_unit(2, i, j), &matrix_unit(2, j, i)));
    let u = identity(4) * c64(angle.cos()) - swap * C64::new(0.0, angle.sin());
    Ok(instrument::ancilla(&u, &diag(&[q, 1.0 - q]), &[matrix_unit(2, 0, 0), matrix_unit(2, 1, 1)])?)
}

impl Builtin {
    pub fn process(&self) -> Result<Process> {
        let p = match self {
            Builtin::Bernoulli(p) => instrument::bernoulli(*p)?,
            Builtin::Markov(rows) => instrument::classical_markov(rows)?,
            Builtin::Cycle(n, q) => instrument::markov_cycle(*n, *q)?,
            Builtin::Trivial(d) => instrument::trivial(*d)?,
            Builtin::VonNeumann(angle) => {
                let instr = von_neumann_rotation(*angle)?;
                let n = instr.len();
                Process::with_invariant_state(instr, Involution::identity(n))?.with_canonical_reversal()?
            }
            Builtin::Ancilla(angle, q) => {
                let instr = exchange_ancilla(*angle, *q)?;
                let n = instr.len();
                Process::with_invariant_state(instr, Involution::identity(n))?.with_canonical_reversal()?
            }
        };
        Ok(p)
    }
}

impl Source {
    /// Resolve relative file paths against `base`.
    pub fn resolved(self, base: Option<&Path>) -> Source {
        match (self, base) {
            (Source::File(p), Some(b)) if p.is_relative() => Source::File(b.join(p)),
            (s, _) => s,
        }
    }

    pub fn read_file(path: &Path) -> Result<InstrumentFile> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CliError::usage(format!("instrument file {} does not exist", path.display()))
            } else {
                CliError::io(path, e)
            }
        })?;
        Ok(InstrumentFile::from_json(&text)?)
    }

    /// The instrument alone, without building a process.
    pub fn instrument(&self) -> Result<Instrument> {
        match self {
            Source::Builtin(b) => Ok(b.process()?.instrument().clone()),
            Source::File(path) => Ok(Source::read_file(path)?.instrument()?),
        }
    }

    pub fn process(&self, tol: &Tolerances, rho: RhoPolicy, theta: Option<&[(String, String)]>) -> Result<Process> {
        let p = match self {
            Source::Builtin(b) => b.process()?,
            Source::File(path) => {
                let mut f = Source::read_file(path)?;
                match rho {
                    RhoPolicy::Auto => f.rho = None,
                    RhoPolicy::Explicit if f.rho.is_none() => {
                        return Err(CliError::usage("rho policy `explicit` needs `rho` in the instrument file"));
                    }
                    RhoPolicy::Explicit => {}
                }
                f.process(tol)?
            }
        };
        match theta {
            Some(pairs) => {
                let theta = Involution::from_label_pairs(p.instrument().alphabet(), pairs)?;
                Ok(p.with_theta(theta)?)
            }
            None => Ok(p),
        }
    }
}
