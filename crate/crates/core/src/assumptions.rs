//! Certificates for the standing assumptions and ergodicity diagnostics.
//!
//! (A) faithful invariant initial state, (B) support equality of `ℙ_T` and
//! `ℙ̂_T`, (C) uniform gluing of words with pads of length `≤ τ`, and (D)
//! two-sided quasi-Bernoulli concatenation bounds.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::entropic::{PressureConstants, SuperadditivityConstant};
use crate::error::{Error, Result};
use crate::instrument::Process;
use crate::operator::{
    identity, is_irreducible_family, is_positivity_improving, kron, spectral_report, trace, Operator,
    SpectralReport, EIGEN_CLUSTER_TOL, INVARIANCE_TOL, STRICT_POSITIVITY_TOL,
};
use crate::pathspace::{labels_of, PathCache};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Assumption {
    A,
    B,
    C,
    D,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Certified,
    Refuted,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Algebraic,
    Enumerative,
    Randomized,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Constants {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    /// `min sp(Φ_a[𝟙])` per letter.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_tau: Option<f64>,
    /// Enumerated `C_τ` for `τ = 0, 1, …`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_by_tau: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d0: Option<f64>,
}

/// Explicit evidence, replayable through the path-space evaluators.
#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub kind: String,
    pub words: Vec<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionCertificate {
    pub which: Assumption,
    pub status: Status,
    pub method: Method,
    pub constants: Constants,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    /// Word-length horizon behind an enumerative answer.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub notes: Vec<String>,
}

impl AssumptionCertificate {
    fn new(which: Assumption, status: Status, method: Method) -> Self {
        AssumptionCertificate {
            which,
            status,
            method,
            constants: Constants::default(),
            witness: None,
            horizon: None,
            notes: Vec::new(),
        }
    }

    pub fn is_certified(&self) -> bool {
        self.status == Status::Certified
    }
}

#[allow(non_snake_case)]
pub fn check_A(p: &Process) -> AssumptionCertificate {
    let defect = p.invariance_defect();
    let lambda0 = p.lambda0();
    let ok = defect <= INVARIANCE_TOL && lambda0 > STRICT_POSITIVITY_TOL;
    let mut c = AssumptionCertificate::new(
        Assumption::A,
        if ok { Status::Certified } else { Status::Refuted },
        Method::Algebraic,
    );
    c.constants.lambda0 = Some(lambda0);
    if defect > INVARIANCE_TOL {
        c.notes.push(format!("‖Φ*[ρ] − ρ‖ = {defect:e}"));
    }
    if lambda0 <= STRICT_POSITIVITY_TOL {
        c.notes.push(format!("ρ is not faithful: min sp(ρ) = {lambda0:e}"));
    }
    c
}

/// Algebraic when every letter is strictly positive, otherwise support
/// comparison up to `t_max`. A mismatch at some `T` persists for all
/// larger `T`, so it refutes.
#[allow(non_snake_case)]
pub fn check_B(cache: &PathCache, t_max: usize) -> AssumptionCertificate {
    let p = cache.process();
    let report = p.instrument().validate();
    let eps: Vec<f64> = report.letters.iter().map(|l| l.epsilon).collect();
    if report.all_strictly_positive {
        let mut c = AssumptionCertificate::new(Assumption::B, Status::Certified, Method::Algebraic);
        c.constants.epsilon = Some(eps);
        return c;
    }
    let mut c = AssumptionCertificate::new(Assumption::B, Status::Inconclusive, Method::Enumerative);
    c.constants.epsilon = Some(eps);
    let mut horizon = 0;
    for t in 1..=t_max {
        let table = match cache.table(t) {
            Ok(tab) => tab,
            Err(e) => {
                c.notes.push(format!("stopped at T={t}: {e}"));
                break;
            }
        };
        if let Some(i) = table.support_mismatch() {
            c.status = Status::Refuted;
            let w = table.word_at(i);
            let (lp, lph) = (table.log_p()[i], table.log_p_hat()[i]);
            c.witness = Some(Witness {
                kind: if lp > lph { "P>0, P_hat=0" } else { "P=0, P_hat>0" }.into(),
                words: vec![labels_of(p.instrument(), &w)],
                value: Some(lp.max(lph).exp()),
            });
            c.horizon = Some(t);
            return c;
        }
        horizon = t;
    }
    c.horizon = Some(horizon);
    c.notes.push(format!("supports of P_T and P_hat_T agree for T ≤ {horizon}"));
    c
}

fn all_kraus(p: &Process) -> Vec<Operator> {
    p.instrument().maps().iter().flat_map(|m| m.kraus().iter().cloned()).collect()
}

/// Algebraic sufficient criterion: the family `V_{a,j} ⊗ V̂_{a,k}` built from
/// the reversal's Kraus operators acts irreducibly on `ℋ ⊗ ℋ`. The
/// canonical reversal is used when none is attached. A reducible family
/// is inconclusive.
#[allow(non_snake_case)]
pub fn check_C(p: &Process) -> AssumptionCertificate {
    let mut c = AssumptionCertificate::new(Assumption::C, Status::Inconclusive, Method::Algebraic);
    c.constants.lambda0 = Some(p.lambda0());
    let owned;
    let or = match p.reversal() {
        Some(or) => or,
        None => match crate::reversal::canonical_or(p) {
            Ok(r) => {
                owned = r.process;
                c.notes.push("canonical reversal attached for the check".into());
                &owned
            }
            Err(e) => {
                c.notes.push(format!("no reversal available: {e}"));
                return c;
            }
        },
    };
    let mut family = Vec::new();
    for (m, mh) in p.instrument().maps().iter().zip(or.instrument().maps()) {
        for v in m.kraus() {
            for vh in mh.kraus() {
                family.push(kron(v, vh));
            }
        }
    }
    let phi_irreducible = is_irreducible_family(&all_kraus(p));
    if is_irreducible_family(&family) {
        let ergodic = spectral_report(&p.instrument().total(), EIGEN_CLUSTER_TOL)
            .map(|r| r.eigenvalue_one_simple)
            .unwrap_or(false);
        if phi_irreducible && ergodic {
            c.status = Status::Certified;
        } else {
            c.notes.push("tensor family irreducible but Φ failed the implied irreducibility check".into());
        }
    } else {
        let dim = crate::operator::algebra_dimension(&family);
        let d2 = p.dim() * p.dim();
        c.witness = Some(Witness {
            kind: format!("tensor family generates an algebra of dimension {dim} < {}", d2 * d2),
            words: vec![],
            value: Some(dim as f64),
        });
    }
    if !phi_irreducible {
        c.notes.push("Φ is reducible".into());
    }
    c
}

/// Supported words `ω` with `|ω| ≤ len_max` (`ℙ(ω) > 0`, and `ℙ̂(ω) > 0`
/// when `both` is set), the empty word first, in length-lex order.
fn supported_words(p: &Process, len_max: usize, both: bool) -> Vec<Vec<usize>> {
    let instr = p.instrument();
    let l = instr.len();
    let mut out = vec![vec![]];
    let mut frontier: Vec<(Vec<usize>, Operator)> = vec![(vec![], p.rho().clone())];
    for _ in 0..len_max {
        let mut next = Vec::new();
        for (w, s) in &frontier {
            for a in 0..l {
                let s2 = instr.map(a).schrodinger(s);
                if trace(&s2).re <= crate::pathspace::ZERO_TRACE {
                    continue;
                }
                let mut w2 = w.clone();
                w2.push(a);
                next.push((w2, s2));
            }
        }
        for (w, _) in &next {
            let keep = !both || {
                let rev = p.theta().reverse_word(w);
                crate::pathspace::forward_log_prob(instr, p.rho(), &rev) > f64::NEG_INFINITY
            };
            if keep {
                out.push(w.clone());
            }
        }
        frontier = next;
    }
    out
}

/// `S_ω = Φ*_ω[ρ]` and `H_ω = Φ_ω[𝟙]`, so `ℙ(ωη) = tr(S_ω H_η)`.
fn word_operators(p: &Process, words: &[Vec<usize>]) -> (Vec<Operator>, Vec<Operator>) {
    let instr = p.instrument();
    let d = p.dim();
    words
        .par_iter()
        .map(|w| {
            let mut s = p.rho().clone();
            for &a in w {
                s = instr.map(a).schrodinger(&s);
            }
            let mut h = identity(d);
            for &a in w.iter().rev() {
                h = instr.map(a).heisenberg(&h);
            }
            (s, h)
        })
        .unzip()
}

/// `tr(S H)` with `ht = Hᵀ` precomputed.
fn tr_prod(s: &Operator, ht: &Operator) -> f64 {
    s.dot(ht).re
}

fn all_words(l: usize, len_max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..len_max {
        let mut next = Vec::new();
        for w in &frontier {
            for a in 0..l {
                let mut w2: Vec<usize> = w.clone();
                w2.push(a);
                next.push(w2);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn check_work(required: u128, cap: usize) -> Result<()> {
    // Pair enumerations are cheap per item, so allow 64 per cap unit.
    let budget = (cap as u128).saturating_mul(64);
    if required > budget {
        return Err(Error::CapExceeded { required, cap });
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct CEstimate {
    /// `C_τ` over the enumerated pairs, for `τ = 0..=τ_max`. Each value is an
    /// upper bound on the true constant.
    pub c_by_tau: Vec<f64>,
    pub word_len_max: usize,
    pub words: usize,
    pub pairs: usize,
    /// Pair attaining `C_τ` at `τ_max`.
    pub worst_pair: Option<(Vec<String>, Vec<String>)>,
}

impl CEstimate {
    /// `(τ, C_τ)` with the largest superadditivity constant
    /// `log(C_τ λ0²/(τ+1))` among positive values.
    pub fn best(&self, lambda0: f64) -> Option<(usize, f64)> {
        self.c_by_tau
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0.0)
            .map(|(t, &c)| (t, c, SuperadditivityConstant::new(t, c, lambda0, true).c))
            .fold(None, |acc: Option<(usize, f64, f64)>, x| match acc {
                Some(a) if a.2 >= x.2 => Some(a),
                _ => Some(x),
            })
            .map(|(t, c, _)| (t, c))
    }
}

/// `min_{ω,ν} max_{|ξ|≤τ} ℙ(ωξν)ℙ̂(ωξν) / (ℙ(ω)ℙ(ν)ℙ̂(ω)ℙ̂(ν))` over
/// supported words (including the empty word) of length `≤ word_len_max`.
#[allow(non_snake_case)]
pub fn estimate_C_constants(p: &Process, tau_max: usize, word_len_max: usize, cap: usize) -> Result<CEstimate> {
    let instr = p.instrument();
    let l = instr.len();
    let words = supported_words(p, word_len_max, true);
    let pads = all_words(l, tau_max);
    let n = words.len();
    check_work((n as u128) * (n as u128) * (pads.len() as u128), cap)?;
    let index: HashMap<&[usize], usize> = words.iter().enumerate().map(|(i, w)| (w.as_slice(), i)).collect();
    let theta_of: Vec<usize> = words
        .iter()
        .map(|w| index[p.theta().reverse_word(w).as_slice()])
        .collect();
    let pad_index: HashMap<&[usize], usize> = pads.iter().enumerate().map(|(i, w)| (w.as_slice(), i)).collect();
    let pad_theta: Vec<usize> = pads.iter().map(|w| pad_index[p.theta().reverse_word(w).as_slice()]).collect();
    let (s_ops, h_ops) = word_operators(p, &words);
    let prob: Vec<f64> = words
        .iter()
        .zip(&h_ops)
        .map(|(w, h)| if w.is_empty() { 1.0 } else { trace(&(p.rho() * h)).re })
        .collect();
    // G[ξ][ν] = (Φ_ξ[H_ν])ᵀ, built by prepending letters.
    let g: Vec<Vec<Operator>> = {
        let mut g: Vec<Vec<Operator>> = Vec::with_capacity(pads.len());
        for (k, xi) in pads.iter().enumerate() {
            let row = if xi.is_empty() {
                h_ops.clone()
            } else {
                let parent = pad_index[&xi[1..]];
                debug_assert!(parent < k);
                g[parent].par_iter().map(|h| instr.map(xi[0]).heisenberg(h)).collect()
            };
            g.push(row);
        }
        g.into_iter().map(|row| row.into_iter().map(|h| h.transpose()).collect()).collect()
    };
    let pad_len: Vec<usize> = pads.iter().map(Vec::len).collect();
    let per_omega: Vec<(Vec<f64>, Vec<usize>)> = (0..n)
        .into_par_iter()
        .map(|o| {
            let mut mins = vec![f64::INFINITY; tau_max + 1];
            let mut arg = vec![0usize; tau_max + 1];
            let th_o = theta_of[o];
            for v in 0..n {
                let th_v = theta_of[v];
                let denom = prob[o] * prob[v] * prob[th_o] * prob[th_v];
                let mut best = vec![0.0f64; tau_max + 1];
                for (k, _) in pads.iter().enumerate() {
                    let f = tr_prod(&s_ops[o], &g[k][v]);
                    if f <= 0.0 {
                        continue;
                    }
                    let fh = tr_prod(&s_ops[th_v], &g[pad_theta[k]][th_o]);
                    let r = (f * fh).max(0.0) / denom;
                    let len = pad_len[k];
                    if r > best[len] {
                        best[len] = r;
                    }
                }
                let mut running = 0.0f64;
                for t in 0..=tau_max {
                    running = running.max(best[t]);
                    if running < mins[t] {
                        mins[t] = running;
                        arg[t] = v;
                    }
                }
            }
            (mins, arg)
        })
        .collect();
    let mut c_by_tau = vec![f64::INFINITY; tau_max + 1];
    let mut worst = (0usize, 0usize);
    for (o, (mins, arg)) in per_omega.iter().enumerate() {
        for t in 0..=tau_max {
            if mins[t] < c_by_tau[t] {
                c_by_tau[t] = mins[t];
                if t == tau_max {
                    worst = (o, arg[t]);
                }
            }
        }
    }
    Ok(CEstimate {
        c_by_tau,
        word_len_max,
        words: n,
        pairs: n * n,
        worst_pair: Some((labels_of(instr, &words[worst.0]), labels_of(instr, &words[worst.1]))),
    })
}

/// Combined (C) certificate. The algebraic criterion certifies outright;
/// otherwise a positive enumerated `C_τ` together with an irreducible `Φ`
/// certifies to the enumeration horizon.
#[allow(non_snake_case)]
pub fn certify_C(p: &Process, tau_max: usize, word_len_max: usize, cap: usize) -> AssumptionCertificate {
    let mut c = check_C(p);
    let est = match estimate_C_constants(p, tau_max, word_len_max, cap) {
        Ok(e) => e,
        Err(e) => {
            c.notes.push(format!("constant enumeration skipped: {e}"));
            return c;
        }
    };
    c.constants.c_by_tau = Some(est.c_by_tau.clone());
    c.horizon = Some(word_len_max);
    if let Some((tau, c_tau)) = est.best(p.lambda0()) {
        c.constants.tau = Some(tau);
        c.constants.c_tau = Some(c_tau);
    }
    if c.status == Status::Certified {
        c.notes.push("C_τ is an enumerated estimate (horizon-limited)".into());
        return c;
    }
    let phi_irreducible = is_irreducible_family(&all_kraus(p));
    match (c.constants.c_tau, phi_irreducible) {
        (Some(_), true) => {
            c.status = Status::Certified;
            c.method = Method::Enumerative;
            c.notes.push("certified by enumeration over words up to the horizon (horizon-limited)".into());
        }
        (None, _) => {
            let (w1, w2) = est.worst_pair.clone().unwrap_or_default();
            c.witness = Some(Witness {
                kind: format!("no pad of length ≤ {tau_max} glues this pair"),
                words: vec![w1, w2],
                value: Some(0.0),
            });
        }
        (Some(_), false) => {}
    }
    c
}

#[derive(Clone, Debug, Serialize)]
pub struct DEstimate {
    /// `min ℙ(ων)/(ℙ(ω)ℙ(ν))` over enumerated non-empty supported words.
    pub d0: f64,
    pub word_len_max: usize,
    pub words: usize,
    pub pair: Option<(Vec<String>, Vec<String>)>,
}

#[allow(non_snake_case)]
pub fn estimate_D0(p: &Process, word_len_max: usize, cap: usize) -> Result<DEstimate> {
    let instr = p.instrument();
    let words: Vec<Vec<usize>> = supported_words(p, word_len_max, false).into_iter().skip(1).collect();
    let n = words.len();
    check_work((n as u128) * (n as u128), cap)?;
    let (s_ops, h_ops) = word_operators(p, &words);
    let ht: Vec<Operator> = h_ops.iter().map(|h| h.transpose()).collect();
    let prob: Vec<f64> = h_ops.iter().map(|h| trace(&(p.rho() * h)).re).collect();
    let per: Vec<(f64, usize)> = (0..n)
        .into_par_iter()
        .map(|o| {
            let mut best = (f64::INFINITY, 0usize);
            for v in 0..n {
                let r = tr_prod(&s_ops[o], &ht[v]).max(0.0) / (prob[o] * prob[v]);
                if r < best.0 {
                    best = (r, v);
                }
            }
            best
        })
        .collect();
    let mut d0 = f64::INFINITY;
    let mut pair = None;
    for (o, &(r, v)) in per.iter().enumerate() {
        if r < d0 {
            d0 = r;
            pair = Some((o, v));
        }
    }
    // Structural zeros are exact: treat tiny ratios as zero.
    if d0 < crate::pathspace::NEAR_ZERO {
        d0 = 0.0;
    }
    Ok(DEstimate {
        d0,
        word_len_max,
        words: n,
        pair: pair.map(|(o, v)| (labels_of(instr, &words[o]), labels_of(instr, &words[v]))),
    })
}

/// Certified when every `Φ_a` is positivity improving (local search);
/// refuted by an enumerated zero ratio `ℙ(ων) = 0 < ℙ(ω)ℙ(ν)`.
#[allow(non_snake_case)]
pub fn check_D(p: &Process, word_len_max: usize, cap: usize, seed: u64) -> AssumptionCertificate {
    let mut c = AssumptionCertificate::new(Assumption::D, Status::Inconclusive, Method::Randomized);
    let improving: Vec<bool> = p
        .instrument()
        .maps()
        .iter()
        .enumerate()
        .map(|(a, m)| is_positivity_improving(m, 16, seed.wrapping_add(a as u64)).improving)
        .collect();
    match estimate_D0(p, word_len_max, cap) {
        Ok(est) => {
            c.horizon = Some(word_len_max);
            c.constants.d0 = Some(est.d0);
            if est.d0 == 0.0 {
                c.status = Status::Refuted;
                c.method = Method::Enumerative;
                let (w1, w2) = est.pair.unwrap_or_default();
                c.witness = Some(Witness {
                    kind: "P(ων) = 0 while P(ω)P(ν) > 0".into(),
                    words: vec![w1, w2],
                    value: Some(0.0),
                });
                return c;
            }
        }
        Err(e) => c.notes.push(format!("D0 enumeration skipped: {e}")),
    }
    if improving.iter().all(|&b| b) {
        c.status = Status::Certified;
        c.notes.push("every letter is positivity improving; D0 is an enumerated estimate".into());
    } else {
        let bad: Vec<String> = improving
            .iter()
            .enumerate()
            .filter(|(_, &b)| !b)
            .map(|(a, _)| p.instrument().label(a).to_string())
            .collect();
        c.notes.push(format!("letters not positivity improving: {}", bad.join(", ")));
    }
    c
}

#[derive(Clone, Debug, Serialize)]
pub struct Correlation {
    pub n: usize,
    /// `E[f(ω₁) g(ω_{n+1})] − E[f] E[g]`.
    pub value: f64,
    /// `|c(1)| e^{−γ(n−1)}`.
    pub envelope: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErgodicityReport {
    pub ergodic: bool,
    pub mixing: bool,
    pub gap: f64,
    pub spectral: SpectralReport,
    pub correlations: Vec<Correlation>,
    /// Every correlation lies under its envelope (up to a factor `n`
    /// allowing for Jordan blocks).
    pub within_envelope: bool,
}

/// Spectral diagnostics of `Φ` and, given single-letter functions `f`, `g`,
/// the correlation decay `n = 1..=n_max`.
pub fn ergodicity_report(p: &Process, cylinder: Option<(&[f64], &[f64], usize)>) -> Result<ErgodicityReport> {
    let phi = p.instrument().total();
    let spectral = spectral_report(&phi, EIGEN_CLUSTER_TOL)?;
    let ergodic = spectral.eigenvalue_one_simple;
    let mixing = ergodic && spectral.peripheral_count == 1;
    let gap = spectral.gap;
    let mut correlations = Vec::new();
    if let Some((f, g, n_max)) = cylinder {
        let instr = p.instrument();
        let l = instr.len();
        if f.len() != l || g.len() != l {
            return Err(Error::DimensionMismatch { expected: l, found: f.len().min(g.len()) });
        }
        let d = p.dim();
        let weighted = |w: &[f64]| -> Operator {
            instr
                .maps()
                .iter()
                .zip(w)
                .fold(Operator::zeros(d, d), |acc, (m, &x)| acc + m.unit_image() * crate::operator::c64(x))
        };
        let gf = weighted(g);
        let mean = |x: &Operator| trace(&(p.rho() * x)).re;
        let ef = mean(&weighted(f));
        let eg = mean(&gf);
        // h_n = Φ^{n−1}[Σ g(b) Φ_b[𝟙]], then E[f g∘φⁿ] = Σ f(a) tr(ρ Φ_a[h_n]).
        let mut h = gf;
        let mut first = None;
        for n in 1..=n_max {
            let joint: f64 = instr
                .maps()
                .iter()
                .zip(f)
                .map(|(m, &x)| x * mean(&m.heisenberg(&h)))
                .sum();
            let value = joint - ef * eg;
            let c1 = *first.get_or_insert(value.abs());
            let envelope = if gap.is_finite() { c1 * (-gap * (n as f64 - 1.0)).exp() } else if n == 1 { c1 } else { 0.0 };
            correlations.push(Correlation { n, value, envelope });
            h = phi.heisenberg(&h);
        }
    }
    let within_envelope = correlations
        .iter()
        .all(|c| c.value.abs() <= c.envelope * (c.n as f64) * (1.0 + 1e-6) + 1e-12);
    Ok(ErgodicityReport { ergodic, mixing, gap, spectral, correlations, within_envelope })
}

/// Horizons for a full certificate run.
#[derive(Clone, Copy, Debug, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AssumptionSettings {
    pub b_horizon: usize,
    pub tau_max: usize,
    pub word_len_max: usize,
    pub seed: u64,
}

impl Default for AssumptionSettings {
    fn default() -> Self {
        AssumptionSettings { b_horizon: 6, tau_max: 2, word_len_max: 4, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionBundle {
    pub a: AssumptionCertificate,
    pub b: AssumptionCertificate,
    pub c: AssumptionCertificate,
    pub d: AssumptionCertificate,
    pub ergodicity: ErgodicityReport,
    pub pressure_constants: PressureConstants,
}

pub fn certify_all(cache: &PathCache, settings: &AssumptionSettings) -> Result<AssumptionBundle> {
    let p = cache.process();
    let a = check_A(p);
    let b = check_B(cache, settings.b_horizon);
    let c = certify_C(p, settings.tau_max, settings.word_len_max, cache.cap());
    let d = check_D(p, settings.word_len_max, cache.cap(), settings.seed);
    let ergodicity = ergodicity_report(p, None)?;
    let pressure_constants = pressure_constants(p, &c, &d);
    Ok(AssumptionBundle { a, b, c, d, ergodicity, pressure_constants })
}

/// Constants for the pressure bounds: `c` from a certified (C), `D_0` from
/// a certified (D).
pub fn pressure_constants(p: &Process, c: &AssumptionCertificate, d: &AssumptionCertificate) -> PressureConstants {
    let lambda0 = p.lambda0();
    let superadditivity = match (c.is_certified(), c.constants.tau, c.constants.c_tau) {
        (true, Some(tau), Some(c_tau)) => Some(SuperadditivityConstant::new(tau, c_tau, lambda0, true)),
        _ => None,
    };
    let d0 = d.constants.d0.filter(|&v| d.is_certified() && v > 0.0);
    PressureConstants { lambda0, superadditivity, d0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::{bernoulli, classical_markov, markov_cycle, sum, trivial};
    use crate::pathspace::DEFAULT_CAP;

    #[test]
    fn bernoulli_certificates() {
        let p = bernoulli(0.7).unwrap();
        let cache = PathCache::new(&p, DEFAULT_CAP);
        let a = check_A(&p);
        assert!(a.is_certified());
        assert_eq!(a.constants.lambda0, Some(1.0));
        let b = check_B(&cache, 4);
        assert!(b.is_certified());
        assert_eq!(b.method, Method::Algebraic);
        let c = certify_C(&p, 2, 3, DEFAULT_CAP);
        assert!(c.is_certified());
        assert_eq!(c.method, Method::Algebraic);
        assert!((c.constants.c_by_tau.as_ref().unwrap()[0] - 1.0).abs() < 1e-12);
        let d = check_D(&p, 3, DEFAULT_CAP, 0);
        assert!(d.is_certified());
        assert!((d.constants.d0.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cycle_certificates() {
        let p = markov_cycle(3, 0.8).unwrap();
        assert!((p.lambda0() - 1.0 / 3.0).abs() < 1e-12);
        let cache = PathCache::new(&p, DEFAULT_CAP);
        let b = check_B(&cache, 5);
        assert_eq!(b.status, Status::Inconclusive);
        assert_eq!(b.horizon, Some(5));
        let d = check_D(&p, 4, DEFAULT_CAP, 0);
        assert_eq!(d.status, Status::Refuted);
        let w = d.witness.unwrap();
        let (o, v) = (w.words[0].clone(), w.words[1].clone());
        let joined: Vec<String> = o.iter().chain(&v).cloned().collect();
        let lp = crate::pathspace::log_prob_labels(&p, &joined, crate::pathspace::Direction::Forward).unwrap();
        assert_eq!(lp, f64::NEG_INFINITY);
        let c = certify_C(&p, 2, 4, DEFAULT_CAP);
        let by_tau = c.constants.c_by_tau.clone().unwrap();
        assert_eq!(by_tau[0], 0.0);
        assert!(by_tau[2] > 0.0);
        assert!(c.is_certified());
        assert_eq!(c.method, Method::Enumerative);
    }

    #[test]
    fn one_way_transition_refutes_b() {
        let p = classical_markov(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let cache = PathCache::new(&p, DEFAULT_CAP);
        let b = check_B(&cache, 3);
        assert_eq!(b.status, Status::Refuted);
        assert_eq!(b.horizon, Some(1));
    }

    #[test]
    fn sum_is_not_ergodic_and_c_inconclusive() {
        let s = sum(&bernoulli(0.7).unwrap(), &bernoulli(0.4).unwrap(), 0.5, &["a", "b"]).unwrap();
        let e = ergodicity_report(&s, None).unwrap();
        assert!(!e.ergodic);
        let c = check_C(&s);
        assert_eq!(c.status, Status::Inconclusive);
        assert!(c.witness.is_some());
    }

    #[test]
    fn trivial_and_bernoulli_ergodicity() {
        let e = ergodicity_report(&trivial(1).unwrap(), None).unwrap();
        assert!(e.ergodic && e.mixing);
        let p = bernoulli(0.7).unwrap();
        let e = ergodicity_report(&p, Some((&[1.0, 0.0], &[1.0, -1.0], 4))).unwrap();
        assert!(e.correlations.iter().all(|c| c.value.abs() < 1e-15));
    }

    #[test]
    fn constants_feed_pressure() {
        let p = bernoulli(0.7).unwrap();
        let cache = PathCache::new(&p, DEFAULT_CAP);
        let bundle = certify_all(&cache, &AssumptionSettings::default()).unwrap();
        let pc = bundle.pressure_constants;
        assert_eq!(pc.d0.map(|d| (d - 1.0).abs() < 1e-12), Some(true));
        assert!(pc.superadditivity.is_some());
    }
}
