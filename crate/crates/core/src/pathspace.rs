//! Path measures `ℙ_T`, `ℙ̂_T`: word codec, exact tables and sampling.
//!
//! Words of length `T` over an alphabet of size `ℓ` are indexed by their
//! base-`ℓ` digit value, first letter most significant, which is the
//! lexicographic order of the alphabet.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instrument::{Instrument, Process};
use crate::operator::{json, CpMap, Operator};

/// Default enumeration cap, `2²¹` words.
pub const DEFAULT_CAP: usize = 1 << 21;
/// Running traces at or below this value are exact zeros.
pub const ZERO_TRACE: f64 = 1e-300;
/// Conditional probabilities below this value are flagged as near-zero.
pub const NEAR_ZERO: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reversed,
}

/// `ℓ^T`, or `CapExceeded` when it is larger than `cap`.
pub fn check_cap(letters: usize, t: usize, cap: usize) -> Result<usize> {
    let mut n: u128 = 1;
    for _ in 0..t {
        n = n.saturating_mul(letters as u128);
    }
    if n > cap as u128 {
        return Err(Error::CapExceeded { required: n, cap });
    }
    Ok(n as usize)
}

pub fn word_index(w: &[usize], letters: usize) -> usize {
    w.iter().fold(0, |acc, &a| acc * letters + a)
}

pub fn word_at(mut idx: usize, t: usize, letters: usize) -> Vec<usize> {
    let mut w = vec![0; t];
    for k in (0..t).rev() {
        w[k] = idx % letters;
        idx /= letters;
    }
    w
}

pub fn labels_of(instr: &Instrument, w: &[usize]) -> Vec<String> {
    w.iter().map(|&a| instr.label(a).to_string()).collect()
}

pub fn parse_word<S: AsRef<str>>(instr: &Instrument, labels: &[S]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|l| instr.index_of(l.as_ref()).ok_or_else(|| Error::UnknownLabel(l.as_ref().to_string())))
        .collect()
}

/// One Schrödinger step with renormalization: `(Φ_a*[s]/t, log t)`, or
/// `None` on an exact zero.
fn step(map: &CpMap, state: &Operator) -> Option<(Operator, f64, bool)> {
    let next = map.schrodinger(state);
    let t = next.trace().re;
    if !(t > ZERO_TRACE) {
        return None;
    }
    Some((next / crate::operator::c64(t), t.ln(), t < NEAR_ZERO))
}

/// `log tr(Φ*_{ω_T}∘⋯∘Φ*_{ω₁}[ρ])` for an instrument and a state.
pub fn forward_log_prob(instr: &Instrument, rho: &Operator, w: &[usize]) -> f64 {
    let mut state = rho.clone();
    let mut acc = 0.0;
    for &a in w {
        match step(instr.map(a), &state) {
            Some((next, lt, _)) => {
                state = next;
                acc += lt;
            }
            None => return f64::NEG_INFINITY,
        }
    }
    acc
}

/// `log ℙ_T(w)`, or `log ℙ̂_T(w)` through the attached reversal. Without
/// a reversal `ℙ̂_T(w)` is evaluated as `ℙ_T(Θ_T w)`.
pub fn log_prob(p: &Process, w: &[usize], which: Direction) -> Result<f64> {
    if let Some(&a) = w.iter().find(|&&a| a >= p.letters()) {
        return Err(Error::UnknownLabel(format!("#{a}")));
    }
    Ok(match which {
        Direction::Forward => forward_log_prob(p.instrument(), p.rho(), w),
        Direction::Reversed => match p.reversal() {
            Some(r) => forward_log_prob(r.instrument(), r.rho(), w),
            None => forward_log_prob(p.instrument(), p.rho(), &p.theta().reverse_word(w)),
        },
    })
}

pub fn log_prob_labels<S: AsRef<str>>(p: &Process, labels: &[S], which: Direction) -> Result<f64> {
    let w = parse_word(p.instrument(), labels)?;
    log_prob(p, &w, which)
}

fn descend(maps: &[CpMap], state: &Operator, logw: f64, remaining: usize, out: &mut [f64]) -> usize {
    if remaining == 0 {
        out[0] = logw;
        return 0;
    }
    let block = out.len() / maps.len();
    let mut near = 0;
    for (map, chunk) in maps.iter().zip(out.chunks_mut(block)) {
        if let Some((next, lt, flag)) = step(map, state) {
            near += flag as usize;
            near += descend(maps, &next, logw + lt, remaining - 1, chunk);
        }
    }
    near
}

/// `log ℙ_T` over all words by prefix-sharing depth-first propagation,
/// parallel over first-letter subtrees. Returns the table and the number
/// of near-zero conditional probabilities met.
pub fn forward_log_probs(instr: &Instrument, rho: &Operator, t: usize) -> (Vec<f64>, usize) {
    let l = instr.len();
    let n = l.pow(t as u32);
    let mut out = vec![f64::NEG_INFINITY; n];
    if t == 0 {
        out[0] = 0.0;
        return (out, 0);
    }
    let block = n / l;
    let maps = instr.maps();
    let near: usize = out
        .par_chunks_mut(block)
        .enumerate()
        .map(|(a, chunk)| match step(&maps[a], rho) {
            Some((next, lt, flag)) => flag as usize + descend(maps, &next, lt, t - 1, chunk),
            None => 0,
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    (out, near)
}

/// Index of `Θ_T(w)` for every word index `w`.
pub fn theta_index_map(p: &Process, t: usize) -> Vec<usize> {
    let l = p.letters();
    let n = l.pow(t as u32);
    (0..n)
        .into_par_iter()
        .map(|i| word_index(&p.theta().reverse_word(&word_at(i, t, l)), l))
        .collect()
}

/// Exact table of `log ℙ_T` and `log ℙ̂_T` in lexicographic word order.
/// `ℙ̂_T` is `ℙ_T ∘ Θ_T`, which is the defining identity of an outcome
/// reversal; attached reversal instruments are checked against it with
/// [`crate::reversal::verify_or`].
#[derive(Clone, Debug)]
pub struct PathTable {
    t: usize,
    letters: usize,
    log_p: Vec<f64>,
    log_p_hat: Vec<f64>,
    near_zero: usize,
}

pub fn enumerate_table(p: &Process, t: usize, cap: usize) -> Result<PathTable> {
    PathTable::build(p, t, cap)
}

impl PathTable {
    pub fn build(p: &Process, t: usize, cap: usize) -> Result<Self> {
        let l = p.letters();
        check_cap(l, t, cap)?;
        let (log_p, near_zero) = forward_log_probs(p.instrument(), p.rho(), t);
        let log_p_hat = if p.theta().is_identity() && t <= 1 {
            log_p.clone()
        } else {
            theta_index_map(p, t).into_iter().map(|j| log_p[j]).collect()
        };
        Ok(PathTable { t, letters: l, log_p, log_p_hat, near_zero })
    }

    /// Table from explicit log-probabilities, for callers holding their own
    /// measures.
    pub fn from_parts(t: usize, letters: usize, log_p: Vec<f64>, log_p_hat: Vec<f64>) -> Result<Self> {
        let n = check_cap(letters, t, usize::MAX)?;
        if log_p.len() != n || log_p_hat.len() != n {
            return Err(Error::invalid(format!("tables must have {n} entries")));
        }
        Ok(PathTable { t, letters, log_p, log_p_hat, near_zero: 0 })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn letters(&self) -> usize {
        self.letters
    }

    pub fn len(&self) -> usize {
        self.log_p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_p.is_empty()
    }

    pub fn log_p(&self) -> &[f64] {
        &self.log_p
    }

    pub fn log_p_hat(&self) -> &[f64] {
        &self.log_p_hat
    }

    pub fn p(&self, i: usize) -> f64 {
        self.log_p[i].exp()
    }

    pub fn p_hat(&self, i: usize) -> f64 {
        self.log_p_hat[i].exp()
    }

    /// Near-zero conditional probabilities met during enumeration.
    pub fn near_zero(&self) -> usize {
        self.near_zero
    }

    pub fn index_of(&self, w: &[usize]) -> usize {
        word_index(w, self.letters)
    }

    pub fn word_at(&self, i: usize) -> Vec<usize> {
        word_at(i, self.t, self.letters)
    }

    /// `σ_T` of word `i` with the conventions `log(x/0) = +∞`, `log(0/y) = −∞`.
    pub fn sigma(&self, i: usize) -> f64 {
        sigma_of(self.log_p[i], self.log_p_hat[i])
    }

    /// `logsumexp(log ℙ_T)`.
    pub fn log_normalization(&self) -> f64 {
        log_sum_exp(&self.log_p)
    }

    pub fn log_normalization_hat(&self) -> f64 {
        log_sum_exp(&self.log_p_hat)
    }

    /// `ℙ_T` with the last letter summed out.
    pub fn marginal_last(&self) -> Vec<f64> {
        self.log_p
            .chunks(self.letters)
            .map(|c| c.iter().map(|x| x.exp()).sum())
            .collect()
    }

    /// `ℙ_T` with the first letter summed out.
    pub fn marginal_first(&self) -> Vec<f64> {
        let block = self.len() / self.letters.max(1);
        let mut out = vec![0.0; block];
        for chunk in self.log_p.chunks(block) {
            for (o, x) in out.iter_mut().zip(chunk) {
                *o += x.exp();
            }
        }
        out
    }

    /// First word where exactly one of `ℙ_T`, `ℙ̂_T` vanishes.
    pub fn support_mismatch(&self) -> Option<usize> {
        self.log_p
            .iter()
            .zip(&self.log_p_hat)
            .position(|(a, b)| (*a == f64::NEG_INFINITY) != (*b == f64::NEG_INFINITY))
    }

    pub fn support_size(&self) -> (usize, usize) {
        let count = |v: &[f64]| v.iter().filter(|x| **x > f64::NEG_INFINITY).count();
        (count(&self.log_p), count(&self.log_p_hat))
    }

    /// CSV with columns `word,label-string,log_p,log_p_hat`; `word` is the
    /// table index and labels are joined by spaces.
    pub fn write_csv<W: Write>(&self, instr: &Instrument, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["word", "label-string", "log_p", "log_p_hat"])?;
        for i in 0..self.len() {
            let labels = labels_of(instr, &self.word_at(i)).join(" ");
            w.write_record([
                i.to_string(),
                labels,
                fmt_f64(self.log_p[i]),
                fmt_f64(self.log_p_hat[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn sigma_of(lp: f64, lph: f64) -> f64 {
    if lp == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if lph == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        lp - lph
    }
}

/// `log Σ exp(x)` with `−∞` entries ignored; `−∞` for an empty sum.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Write-once cache of path tables for one process.
#[derive(Debug)]
pub struct PathCache<'a> {
    process: &'a Process,
    cap: usize,
    tables: Mutex<BTreeMap<usize, Arc<PathTable>>>,
}

impl<'a> PathCache<'a> {
    pub fn new(process: &'a Process, cap: usize) -> Self {
        PathCache { process, cap, tables: Mutex::new(BTreeMap::new()) }
    }

    pub fn process(&self) -> &'a Process {
        self.process
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn table(&self, t: usize) -> Result<Arc<PathTable>> {
        let mut tables = self.tables.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(tab) = tables.get(&t) {
            return Ok(tab.clone());
        }
        let tab = Arc::new(PathTable::build(self.process, t, self.cap)?);
        tables.insert(t, tab.clone());
        Ok(tab)
    }

    /// Insert a table computed elsewhere, e.g. read from a disk cache.
    pub fn preload(&self, table: PathTable) -> Result<()> {
        if table.letters() != self.process.letters() {
            return Err(Error::DimensionMismatch { expected: self.process.letters(), found: table.letters() });
        }
        let mut tables = self.tables.lock().unwrap_or_else(|e| e.into_inner());
        tables.entry(table.t()).or_insert_with(|| Arc::new(table));
        Ok(())
    }

    /// Tables built or loaded so far, by `T`.
    pub fn cached(&self) -> Vec<Arc<PathTable>> {
        let tables = self.tables.lock().unwrap_or_else(|e| e.into_inner());
        tables.values().cloned().collect()
    }

    /// Fails early if any `T` in the range would exceed the cap.
    pub fn check_range(&self, t_max: usize) -> Result<()> {
        check_cap(self.process.letters(), t_max, self.cap).map(|_| ())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub word: Vec<usize>,
    pub log_p: f64,
    pub log_p_hat: f64,
    #[serde(skip)]
    pub conditioned_states: Option<Vec<Operator>>,
}

#[derive(Serialize)]
struct TrajectoryLine<'a> {
    index: usize,
    t: usize,
    word: Vec<&'a str>,
    log_p: f64,
    log_p_hat: f64,
    sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    conditioned_states: Option<Vec<serde_json::Value>>,
}

impl Trajectory {
    pub fn sigma(&self) -> f64 {
        sigma_of(self.log_p, self.log_p_hat)
    }

    /// One JSON line; infinite log-probabilities are written as `null`.
    pub fn to_json_line(&self, instr: &Instrument, index: usize) -> Result<String> {
        let line = TrajectoryLine {
            index,
            t: self.word.len(),
            word: self.word.iter().map(|&a| instr.label(a)).collect(),
            log_p: self.log_p,
            log_p_hat: self.log_p_hat,
            sigma: self.sigma(),
            conditioned_states: self
                .conditioned_states
                .as_ref()
                .map(|s| s.iter().map(json::to_value).collect()),
        };
        Ok(serde_json::to_string(&line)?)
    }
}

/// Generator for trajectory `index` of a batch with base seed `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn sample_trajectory(p: &Process, t: usize, seed: u64) -> Trajectory {
    sample_with_rng(p, t, &mut trajectory_rng(seed, 0), false)
}

/// Sequential sampling from `tr(Φ_a*[ρ_cur])`, optionally recording the
/// conditioned states after each step.
pub fn sample_with_rng<R: Rng>(p: &Process, t: usize, rng: &mut R, record_states: bool) -> Trajectory {
    let instr = p.instrument();
    let effects: Vec<Operator> = instr.maps().iter().map(|m| m.unit_image()).collect();
    let mut state = p.rho().clone();
    let mut word = Vec::with_capacity(t);
    let mut log_p = 0.0;
    let mut states = record_states.then(Vec::new);
    for _ in 0..t {
        let probs: Vec<f64> = effects.iter().map(|e| (&state * e).trace().re.max(0.0)).collect();
        let total: f64 = probs.iter().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = probs.iter().rposition(|&x| x > 0.0).unwrap_or(0);
        for (a, &x) in probs.iter().enumerate() {
            acc += x;
            if u < acc && x > 0.0 {
                pick = a;
                break;
            }
        }
        word.push(pick);
        match step(instr.map(pick), &state) {
            Some((next, lt, _)) => {
                state = next;
                log_p += lt;
            }
            None => {
                log_p = f64::NEG_INFINITY;
            }
        }
        if let Some(s) = states.as_mut() {
            s.push(state.clone());
        }
    }
    let log_p_hat = log_prob(p, &word, Direction::Reversed).unwrap_or(f64::NAN);
    Trajectory { word, log_p, log_p_hat, conditioned_states: states }
}

/// `n` trajectories; trajectory `i` uses stream `i` of the seeded generator,
/// so batches are reproducible regardless of thread count.
pub fn sample_batch(p: &Process, t: usize, n: usize, seed: u64) -> Vec<Trajectory> {
    (0..n)
        .into_par_iter()
        .map(|i| sample_with_rng(p, t, &mut trajectory_rng(seed, i as u64), false))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SubadditivityReport {
    pub pairs_checked: usize,
    pub violations: usize,
    /// Largest `ℙ_{T+T'}(ωω') − λ0⁻¹ ℙ_T(ω) ℙ_{T'}(ω')` over both measures.
    pub max_excess: f64,
}

/// Per-word check of `ℙ_{T+T'}(ωω') ≤ λ0⁻¹ ℙ_T(ω) ℙ_{T'}(ω')` and the same
/// for `ℙ̂`, for `1 ≤ T, T' ≤ t_max`.
pub fn check_subadditivity(cache: &PathCache, t_max: usize, slack: f64) -> Result<SubadditivityReport> {
    let inv_l0 = 1.0 / cache.process().lambda0();
    let mut pairs_checked = 0;
    let mut violations = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for t1 in 1..=t_max {
        for t2 in 1..=t_max {
            let (a, b, ab) = (cache.table(t1)?, cache.table(t2)?, cache.table(t1 + t2)?);
            for hat in [false, true] {
                let pick = |tab: &PathTable| if hat { tab.log_p_hat().to_vec() } else { tab.log_p().to_vec() };
                let (pa, pb, pab) = (pick(&a), pick(&b), pick(&ab));
                for (i, la) in pa.iter().enumerate() {
                    for (j, lb) in pb.iter().enumerate() {
                        let joint = pab[i * pb.len() + j].exp();
                        let excess = joint - inv_l0 * la.exp() * lb.exp();
                        pairs_checked += 1;
                        if excess > slack {
                            violations += 1;
                        }
                        max_excess = max_excess.max(excess);
                    }
                }
            }
        }
    }
    Ok(SubadditivityReport { pairs_checked, violations, max_excess })
}
