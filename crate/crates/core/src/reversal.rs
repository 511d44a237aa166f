//! Outcome-reversed processes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instrument::{Instrument, Involution, Process};
use crate::operator::{inv_sqrt_floored, psd_sqrt, CpMap};
use crate::pathspace::{self, PathTable};

/// A process tagged as the outcome reversal of a parent, with the
/// involution used.
#[derive(Clone, Debug)]
pub struct ReversedProcess {
    pub process: Process,
    pub theta: Involution,
}

/// `Φ̂_a[X] = ρ^{-1/2} Φ*_{θ(a)}[ρ^{1/2} X ρ^{1/2}] ρ^{-1/2}`, `ρ̂ = ρ`.
/// Kraus operators are `ρ^{1/2} V*_{θ(a),k} ρ^{-1/2}`.
pub fn canonical_or(p: &Process) -> Result<ReversedProcess> {
    if p.is_relaxed() {
        return Err(Error::invalid("canonical reversal needs an invariant state"));
    }
    let rho = p.rho();
    let floor = p.lambda0() * 1e-6;
    let s = psd_sqrt(rho);
    let s_inv = inv_sqrt_floored(rho, floor);
    let instr = p.instrument();
    let maps = (0..instr.len())
        .map(|a| {
            let src = instr.map(p.theta().apply(a));
            CpMap::new(src.kraus().iter().map(|v| &s * v.adjoint() * &s_inv).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let instrument = Instrument::new(instr.alphabet().to_vec(), maps)?;
    let process = Process::new(instrument, rho.clone(), p.theta().clone())?;
    Ok(ReversedProcess { process, theta: p.theta().clone() })
}

#[derive(Clone, Debug, Serialize)]
pub struct OrRow {
    pub t: usize,
    pub max_defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrVerification {
    pub passed: bool,
    pub tol: f64,
    pub rows: Vec<OrRow>,
    pub worst_defect: f64,
    /// Word attaining the largest defect, with its length.
    pub worst_word: Option<Vec<String>>,
}

/// Check `ℙ̂_T(ω) = ℙ_T(Θ_T ω)` for all words up to `t_max`, where `ℙ̂` is
/// the path measure of `q`.
pub fn verify_or(p: &Process, q: &Process, t_max: usize, tol: f64, cap: usize) -> Result<OrVerification> {
    if p.instrument().alphabet() != q.instrument().alphabet() {
        return Err(Error::invalid("processes have different alphabets"));
    }
    if p.theta() != q.theta() {
        return Err(Error::invalid("processes have different involutions"));
    }
    let l = p.letters();
    pathspace::check_cap(l, t_max, cap)?;
    let mut rows = Vec::new();
    let mut worst_defect = 0.0f64;
    let mut worst_word = None;
    for t in 1..=t_max {
        let tp = PathTable::build(p, t, cap)?;
        let tq = PathTable::build(q, t, cap)?;
        let mut max_defect = 0.0f64;
        let mut arg = 0usize;
        for (i, &lq) in tq.log_p().iter().enumerate() {
            let w = pathspace::word_at(i, t, l);
            debug_assert_eq!(p.theta().reverse_word(&p.theta().reverse_word(&w)), w);
            let j = pathspace::word_index(&p.theta().reverse_word(&w), l);
            let defect = (lq.exp() - tp.log_p()[j].exp()).abs();
            if defect > max_defect {
                max_defect = defect;
                arg = i;
            }
        }
        if max_defect > worst_defect {
            worst_defect = max_defect;
            worst_word = Some(pathspace::labels_of(p.instrument(), &pathspace::word_at(arg, t, l)));
        }
        rows.push(OrRow { t, max_defect });
    }
    Ok(OrVerification { passed: worst_defect <= tol, tol, rows, worst_defect, worst_word })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::{bernoulli, trivial};

    #[test]
    fn bernoulli_reversal_swaps_probabilities() {
        let p = bernoulli(0.7).unwrap();
        let or = canonical_or(&p).unwrap();
        let k = |a: usize| or.process.instrument().map(a).kraus()[0][(0, 0)].re.powi(2);
        assert!((k(0) - 0.3).abs() < 1e-15);
        assert!((k(1) - 0.7).abs() < 1e-15);
        let half = bernoulli(0.5).unwrap();
        let or = canonical_or(&half).unwrap();
        assert!((or.process.instrument().map(0).kraus()[0][(0, 0)].re.powi(2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn verify_trivial_and_corrupted() {
        let p = trivial(2).unwrap();
        let v = verify_or(&p, p.reversal().unwrap(), 4, 1e-10, 1 << 21).unwrap();
        assert!(v.passed);
        let b = bernoulli(0.7).unwrap();
        let or = b.reversal().unwrap().clone();
        let mut maps = or.instrument().maps().to_vec();
        maps[0] = maps[0].scaled(1.01 * 1.01);
        let bad = Instrument::new(or.instrument().alphabet().to_vec(), maps).unwrap();
        let bad = Process::unchecked(bad, or.rho().clone(), or.theta().clone()).unwrap();
        let v = verify_or(&b, &bad, 3, 1e-10, 1 << 20).unwrap();
        assert!(!v.passed);
        assert_eq!(v.worst_word.unwrap(), vec!["a"]);
    }
}
