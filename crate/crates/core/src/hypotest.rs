//! Hypothesis tests between `ℙ_T` and its reversal `ℙ̂_T`.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::entropic::{pressure_curve, PressureConstants, PressureCurve};
use crate::error::{Error, Result};
use crate::operator::{spectral_report, EIGEN_CLUSTER_TOL};
use crate::pathspace::{fmt_f64, PathCache, PathTable};

/// A deterministic test: words with `σ_T ≥ threshold`, with membership
/// flipped on `exceptions`.
#[derive(Clone, Debug, Serialize)]
pub struct TestSet {
    pub t: usize,
    pub threshold: f64,
    pub exceptions: Vec<usize>,
    /// `ℙ_T(𝒯ᶜ)`.
    pub type_i: f64,
    /// `ℙ̂_T(𝒯)`.
    pub type_ii: f64,
}

impl TestSet {
    pub fn contains(&self, table: &PathTable, i: usize) -> bool {
        let base = table.sigma(i) >= self.threshold;
        base ^ self.exceptions.binary_search(&i).is_ok()
    }

    pub fn bayes_error(&self) -> f64 {
        0.5 * (self.type_i + self.type_ii)
    }

    /// Test given by an explicit indicator over word indices.
    pub fn from_indicator(table: &PathTable, members: &[bool]) -> Result<Self> {
        if members.len() != table.len() {
            return Err(Error::DimensionMismatch { expected: table.len(), found: members.len() });
        }
        let exceptions = (0..table.len())
            .filter(|&i| members[i] != (table.sigma(i) >= 0.0))
            .collect();
        let (type_i, type_ii) = test_errors(table, members);
        Ok(TestSet { t: table.t(), threshold: 0.0, exceptions, type_i, type_ii })
    }
}

/// `(ℙ_T(𝒯ᶜ), ℙ̂_T(𝒯))` for an indicator over word indices.
pub fn test_errors(table: &PathTable, members: &[bool]) -> (f64, f64) {
    let mut type_i = 0.0;
    let mut type_ii = 0.0;
    for (i, &m) in members.iter().enumerate() {
        if m {
            type_ii += table.p_hat(i);
        } else {
            type_i += table.p(i);
        }
    }
    (type_i, type_ii)
}

#[derive(Clone, Debug, Serialize)]
pub struct NpTest {
    pub test: TestSet,
    pub c_t: f64,
    /// `|½(type I + type II) − c_T|`.
    pub saturation_defect: f64,
}

pub fn np_from_table(table: &PathTable) -> NpTest {
    let members: Vec<bool> = (0..table.len()).map(|i| table.sigma(i) >= 0.0).collect();
    let (type_i, type_ii) = test_errors(table, &members);
    let test = TestSet { t: table.t(), threshold: 0.0, exceptions: vec![], type_i, type_ii };
    let c_t = chernoff_from_table(table);
    NpTest { saturation_defect: (test.bayes_error() - c_t).abs(), test, c_t }
}

/// Neyman–Pearson set `{σ_T ≥ 0}`.
pub fn np_test(cache: &PathCache, t: usize) -> Result<NpTest> {
    Ok(np_from_table(&*cache.table(t)?))
}

/// `c_T = ½ Σ min(ℙ_T, ℙ̂_T)`.
pub fn chernoff_from_table(table: &PathTable) -> f64 {
    0.5 * (0..table.len()).map(|i| table.p(i).min(table.p_hat(i))).sum::<f64>()
}

pub fn chernoff_ct(cache: &PathCache, t: usize) -> Result<f64> {
    Ok(chernoff_from_table(&*cache.table(t)?))
}

/// Smallest `½(type I + type II) − c_T` over `n` random tests; NP
/// optimality says this is non-negative.
pub fn np_optimality_margin(table: &PathTable, n: usize, seed: u64) -> f64 {
    let c_t = chernoff_from_table(table);
    (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let density: f64 = rng.random();
            let members: Vec<bool> = (0..table.len()).map(|_| rng.random::<f64>() < density).collect();
            let (a, b) = test_errors(table, &members);
            0.5 * (a + b) - c_t
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, Serialize)]
pub struct ChernoffRow {
    pub t: usize,
    pub c_t: f64,
    /// `(1/T) log c_T`.
    pub rate: f64,
    /// `(e_T(½) − log 2)/T`.
    pub upper_bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChernoffReport {
    pub rows: Vec<ChernoffRow>,
    /// Bracket `[lower, upper]` for `e(½)`; `lower` needs a certified
    /// superadditivity constant.
    pub target_lower: Option<f64>,
    pub target_upper: Option<f64>,
    /// Gluing constants are certified, so the rate has limit `e(½)`; finite-`T`
    /// rates can still sit far from it (see `residual`).
    pub limit_certified: bool,
    /// Rate at the largest `T` minus the bracket midpoint, or minus the
    /// upper end when no lower bound exists.
    pub residual: f64,
}

impl ChernoffReport {
    /// CSV with columns `T,c_T,rate,upper_bound`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["T", "c_T", "rate", "upper_bound"])?;
        for r in &self.rows {
            w.write_record([r.t.to_string(), fmt_f64(r.c_t), fmt_f64(r.rate), fmt_f64(r.upper_bound)])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn bracket_at(curve: &PressureCurve, alpha: f64) -> (Option<f64>, Option<f64>) {
    curve.point(alpha).map_or((None, None), |p| (p.lower, p.upper))
}

pub fn chernoff_exponent(
    cache: &PathCache,
    t_min: usize,
    t_max: usize,
    constants: &PressureConstants,
) -> Result<ChernoffReport> {
    let curve = pressure_curve(cache, &[0.5], t_min, t_max, constants)?;
    let point = curve.point(0.5).expect("requested alpha");
    let rows = (t_min..=t_max)
        .zip(&point.rows)
        .map(|(t, r)| {
            let c_t = chernoff_ct(cache, t)?;
            Ok(ChernoffRow {
                t,
                c_t,
                rate: c_t.ln() / t as f64,
                upper_bound: (r.e_t - std::f64::consts::LN_2) / t as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (target_lower, target_upper) = bracket_at(&curve, 0.5);
    let target = match (target_lower, target_upper) {
        (Some(l), Some(u)) => 0.5 * (l + u),
        (_, Some(u)) => u,
        _ => f64::NAN,
    };
    let residual = rows.last().map_or(f64::NAN, |r| r.rate - target);
    Ok(ChernoffReport {
        rows,
        target_lower,
        target_upper,
        limit_certified: curve.lower_certified,
        residual,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SteinResult {
    pub t: usize,
    pub epsilon: f64,
    /// `ℙ̂_T(𝒯)` for the greedy test.
    pub value: f64,
    pub test: TestSet,
}

/// Greedy Stein test: words by decreasing `σ_T` (ties by word index) until
/// the `ℙ_T`-mass reaches `1 − ε`.
pub fn stein_from_table(table: &PathTable, epsilon: f64) -> Result<SteinResult> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon must lie in (0, 1)"));
    }
    let mut order: Vec<usize> = (0..table.len()).collect();
    let sig: Vec<f64> = order.iter().map(|&i| table.sigma(i)).collect();
    order.sort_by(|&a, &b| sig[b].total_cmp(&sig[a]).then(a.cmp(&b)));
    let goal = 1.0 - epsilon - 1e-12;
    let mut members = vec![false; table.len()];
    let mut mass = 0.0;
    for &i in &order {
        if mass >= goal {
            break;
        }
        members[i] = true;
        mass += table.p(i);
    }
    let test = TestSet::from_indicator(table, &members)?;
    Ok(SteinResult { t: table.t(), epsilon, value: test.type_ii, test })
}

pub fn stein_st(cache: &PathCache, t: usize, epsilon: f64) -> Result<SteinResult> {
    stein_from_table(&*cache.table(t)?, epsilon)
}

#[derive(Clone, Debug, Serialize)]
pub struct SteinRow {
    pub t: usize,
    pub s_t: f64,
    /// `(1/T) log s_T(ε)`.
    pub rate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SteinReport {
    pub epsilon: f64,
    pub rows: Vec<SteinRow>,
    /// `−ep` bracket: `−E[σ_T]/T` at the largest `T` and `−ep_lb`.
    pub target_lower: f64,
    pub target_upper: f64,
    /// Rate at the largest `T` plus `ep_lb`.
    pub residual: f64,
    pub ergodic: bool,
    pub warnings: Vec<String>,
}

impl SteinReport {
    /// CSV with columns `T,s_T,rate`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["T", "s_T", "rate"])?;
        for r in &self.rows {
            w.write_record([r.t.to_string(), fmt_f64(r.s_t), fmt_f64(r.rate)])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn stein_exponent(cache: &PathCache, t_min: usize, t_max: usize, epsilon: f64) -> Result<SteinReport> {
    if t_min == 0 || t_min > t_max {
        return Err(Error::invalid("T range must satisfy 1 ≤ T_min ≤ T_max"));
    }
    cache.check_range(t_max)?;
    let p = cache.process();
    let ergodic = spectral_report(&p.instrument().total(), EIGEN_CLUSTER_TOL)?.eigenvalue_one_simple;
    let mut rows = Vec::new();
    let mut ep_lb = f64::NEG_INFINITY;
    let mut ep_est = f64::NAN;
    for t in t_min..=t_max {
        let table = cache.table(t)?;
        let s = stein_from_table(&table, epsilon)?;
        rows.push(SteinRow { t, s_t: s.value, rate: s.value.ln() / t as f64 });
        let m = crate::entropic::mean_sigma_from_table(&table, p.lambda0());
        ep_lb = ep_lb.max(m.lower_bound_ep);
        ep_est = m.mean_sigma / t as f64;
    }
    for t in 1..t_min {
        let m = crate::entropic::mean_sigma_from_table(&*cache.table(t)?, p.lambda0());
        ep_lb = ep_lb.max(m.lower_bound_ep);
    }
    let mut warnings = Vec::new();
    if !ergodic {
        warnings.push("eigenvalue 1 of Φ is not simple: the Stein exponent need not equal −ep".into());
    }
    let residual = rows.last().map_or(f64::NAN, |r| r.rate + ep_lb);
    Ok(SteinReport {
        epsilon,
        rows,
        target_lower: -ep_est.max(ep_lb),
        target_upper: -ep_lb,
        residual,
        ergodic,
        warnings,
    })
}

/// Unit grid with `n` points plus `1 − 2^{-k}`, `k = 1..=20`, sorted.
pub fn hoeffding_alpha_grid(n: usize) -> Vec<f64> {
    let mut g = crate::entropic::unit_alpha_grid(n);
    g.extend((1..=20).map(|k| 1.0 - 0.5f64.powi(k)));
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    g
}

#[derive(Clone, Debug, Serialize)]
pub struct HoeffdingCurve {
    pub s_grid: Vec<f64>,
    pub psi: Vec<f64>,
    /// `ψ` from the lower and upper pressure envelopes.
    pub psi_lower: Vec<f64>,
    pub psi_upper: Vec<f64>,
    /// `ψ(0) + ep_lb`.
    pub psi0_vs_ep: f64,
    pub increasing: bool,
    pub concave: bool,
}

impl HoeffdingCurve {
    /// CSV with columns `s,psi,psi_lower,psi_upper`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "psi", "psi_lower", "psi_upper"])?;
        for k in 0..self.s_grid.len() {
            w.write_record([
                fmt_f64(self.s_grid[k]),
                fmt_f64(self.psi[k]),
                fmt_f64(self.psi_lower[k]),
                fmt_f64(self.psi_upper[k]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn psi_at(alphas: &[f64], e: &[f64], s: f64) -> f64 {
    alphas
        .iter()
        .zip(e)
        .map(|(&a, &v)| (s * a + v) / (1.0 - a))
        .fold(f64::INFINITY, f64::min)
}

/// `ψ(s) = inf_{α∈[0,1)} (sα + e(α))/(1 − α)`.
pub fn hoeffding_psi(curve: &PressureCurve, s_grid: &[f64]) -> Result<HoeffdingCurve> {
    if s_grid.is_empty() {
        return Err(Error::EmptyGrid("s grid"));
    }
    if s_grid.iter().any(|&s| s < 0.0) {
        return Err(Error::invalid("ψ is defined for s ≥ 0"));
    }
    let mut alphas = Vec::new();
    let (mut est, mut lo, mut up) = (Vec::new(), Vec::new(), Vec::new());
    for p in curve.points.iter().filter(|p| (0.0..1.0).contains(&p.alpha)) {
        let (Some(u), Some(l)) = (p.upper, p.lower) else {
            return Err(Error::UncertifiedCurve);
        };
        alphas.push(p.alpha);
        est.push(p.estimate);
        lo.push(l);
        up.push(u);
    }
    if alphas.is_empty() {
        return Err(Error::EmptyGrid("alpha grid in [0,1)"));
    }
    let psi: Vec<f64> = s_grid.iter().map(|&s| psi_at(&alphas, &est, s)).collect();
    let psi_lower: Vec<f64> = s_grid.iter().map(|&s| psi_at(&alphas, &lo, s)).collect();
    let psi_upper: Vec<f64> = s_grid.iter().map(|&s| psi_at(&alphas, &up, s)).collect();
    let tol = 1e-12;
    let increasing = psi.windows(2).all(|w| w[1] >= w[0] - tol);
    let concave = psi
        .windows(3)
        .zip(s_grid.windows(3))
        .all(|(v, s)| v[1] * (s[2] - s[0]) >= v[0] * (s[2] - s[1]) + v[2] * (s[1] - s[0]) - tol);
    Ok(HoeffdingCurve {
        psi0_vs_ep: psi_at(&alphas, &est, 0.0) + curve.ep_lower_bound,
        s_grid: s_grid.to_vec(),
        psi,
        psi_lower,
        psi_upper,
        increasing,
        concave,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::{bernoulli, trivial};
    use crate::pathspace::DEFAULT_CAP;

    #[test]
    fn bernoulli_t1() {
        let p = bernoulli(0.7).unwrap();
        let cache = PathCache::new(&p, DEFAULT_CAP);
        let np = np_test(&cache, 1).unwrap();
        assert!((np.test.type_i - 0.3).abs() < 1e-15);
        assert!((np.test.type_ii - 0.3).abs() < 1e-15);
        assert!((np.c_t - 0.3).abs() < 1e-15);
        assert!(np.saturation_defect < 1e-15);
        let s = stein_st(&cache, 1, 0.35).unwrap();
        assert!((s.value - 0.3).abs() < 1e-15);
    }

    #[test]
    fn trivial_tests() {
        let p = trivial(2).unwrap();
        let cache = PathCache::new(&p, DEFAULT_CAP);
        for t in 1..4 {
            assert!((chernoff_ct(&cache, t).unwrap() - 0.5).abs() < 1e-12);
            assert!((stein_st(&cache, t, 0.3).unwrap().value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn np_beats_random_tests() {
        let p = bernoulli(0.7).unwrap();
        let cache = PathCache::new(&p, DEFAULT_CAP);
        for t in 1..=6 {
            assert!(np_optimality_margin(&cache.table(t).unwrap(), 200, 3) >= -1e-12);
        }
    }

    #[test]
    fn stein_monotone_in_epsilon() {
        let p = bernoulli(0.7).unwrap();
        let cache = PathCache::new(&p, DEFAULT_CAP);
        let t = cache.table(6).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..20 {
            let v = stein_from_table(&t, k as f64 / 20.0).unwrap().value;
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn hoeffding_bernoulli() {
        let p = bernoulli(0.7).unwrap();
        let cache = PathCache::new(&p, DEFAULT_CAP);
        let consts = PressureConstants { lambda0: 1.0, superadditivity: None, d0: Some(1.0) };
        let curve = pressure_curve(&cache, &hoeffding_alpha_grid(41), 1, 4, &consts).unwrap();
        let s: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let h = hoeffding_psi(&curve, &s).unwrap();
        assert!(h.psi0_vs_ep.abs() < 1e-4);
        assert!(h.increasing && h.concave);
        assert!(*h.psi.last().unwrap() <= 0.0);
    }
}
