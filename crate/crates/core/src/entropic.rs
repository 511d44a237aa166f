//! Entropy production, Rényi pressures and their finite-`T` bounds.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instrument::Process;
use crate::operator::{spectral_report, EIGEN_CLUSTER_TOL};
use crate::pathspace::{self, fmt_f64, log_sum_exp, sigma_of, Direction, PathCache, PathTable};

/// `S(p) = −Σ p log p`.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// `S(P|Q) = Σ P log(P/Q)`, `+∞` unless `P ≪ Q`.
pub fn relative_entropy(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b > 0.0 {
                s += a * (a / b).ln();
            } else {
                return f64::INFINITY;
            }
        }
    }
    s
}

/// `S_α(P|Q) = log Σ P^{1−α} Q^α` with zero terms dropped on `[0,1]` and
/// `+∞` outside `[0,1]` when the supports differ.
pub fn renyi_relative_entropy(p: &[f64], q: &[f64], alpha: f64) -> f64 {
    let lp: Vec<f64> = p.iter().map(|x| x.ln()).collect();
    let lq: Vec<f64> = q.iter().map(|x| x.ln()).collect();
    renyi_log(&lp, &lq, alpha)
}

fn renyi_log(log_p: &[f64], log_q: &[f64], alpha: f64) -> f64 {
    if alpha == 0.0 || alpha == 1.0 {
        let src = if alpha == 0.0 { log_p } else { log_q };
        // Exact normalization is part of the contract at the endpoints.
        let total = log_sum_exp(src);
        return if total.abs() < 1e-9 { 0.0 } else { total };
    }
    let outside = !(0.0..=1.0).contains(&alpha);
    let mut terms = Vec::with_capacity(log_p.len());
    for (&a, &b) in log_p.iter().zip(log_q) {
        match (a == f64::NEG_INFINITY, b == f64::NEG_INFINITY) {
            (false, false) => terms.push((1.0 - alpha) * a + alpha * b),
            (true, true) => {}
            _ if outside => return f64::INFINITY,
            _ => {}
        }
    }
    log_sum_exp(&terms)
}

/// `log Σ e^f p`.
pub fn gibbs_log_partition(f: &[f64], p: &[f64]) -> f64 {
    let terms: Vec<f64> = f.iter().zip(p).map(|(&fi, &pi)| fi + pi.ln()).collect();
    log_sum_exp(&terms)
}

/// The maximizer `e^f p / Σ e^f p` of `Q ↦ Σ f Q − S(Q|P)`.
pub fn gibbs_measure(f: &[f64], p: &[f64]) -> Vec<f64> {
    let z = gibbs_log_partition(f, p);
    f.iter().zip(p).map(|(&fi, &pi)| (fi + pi.ln() - z).exp()).collect()
}

/// `σ_T(w) = log ℙ_T(w) − log ℙ̂_T(w)`.
pub fn sigma(p: &Process, w: &[usize]) -> Result<f64> {
    let lp = pathspace::log_prob(p, w, Direction::Forward)?;
    let lph = pathspace::log_prob(p, w, Direction::Reversed)?;
    Ok(sigma_of(lp, lph))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SigmaStats {
    pub t: usize,
    /// `E[σ_T] = S(ℙ_T|ℙ̂_T)`, possibly `+∞`.
    pub mean_sigma: f64,
    /// `(E[σ_T] + log λ0)/T`.
    pub lower_bound_ep: f64,
}

pub fn mean_sigma_from_table(table: &PathTable, lambda0: f64) -> SigmaStats {
    let mut s = 0.0;
    for i in 0..table.len() {
        let lp = table.log_p()[i];
        if lp == f64::NEG_INFINITY {
            continue;
        }
        let lph = table.log_p_hat()[i];
        if lph == f64::NEG_INFINITY {
            s = f64::INFINITY;
            break;
        }
        s += lp.exp() * (lp - lph);
    }
    let t = table.t();
    let lower_bound_ep = if t == 0 { f64::NAN } else { (s + lambda0.ln()) / t as f64 };
    SigmaStats { t, mean_sigma: s, lower_bound_ep }
}

pub fn mean_sigma(cache: &PathCache, t: usize) -> Result<SigmaStats> {
    Ok(mean_sigma_from_table(&*cache.table(t)?, cache.process().lambda0()))
}

#[derive(Clone, Debug, Serialize)]
pub struct EpRow {
    pub t: usize,
    pub mean_sigma: f64,
    /// `E[σ_T]/T`.
    pub rate: f64,
    /// `(E[σ_T] + log λ0)/T`.
    pub lower: f64,
    /// Running supremum of `lower`.
    pub running_lower: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EpBounds {
    pub rows: Vec<EpRow>,
    /// Certified lower bound `sup_T (E[σ_T] + log λ0)/T` over the horizon.
    pub lower_bound: f64,
    /// `−log ε` when every `Φ_a[𝟙] ≥ ε𝟙` with `ε > 0`.
    pub ceiling: Option<f64>,
    /// First `T` with `E[σ_T] = +∞`.
    pub support_violation_at: Option<usize>,
    pub warnings: Vec<String>,
}

impl EpBounds {
    /// CSV with columns `T,mean_sigma,rate,lower,running_lower`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["T", "mean_sigma", "rate", "lower", "running_lower"])?;
        for r in &self.rows {
            w.write_record([
                r.t.to_string(),
                fmt_f64(r.mean_sigma),
                fmt_f64(r.rate),
                fmt_f64(r.lower),
                fmt_f64(r.running_lower),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn relaxed_warning(p: &Process) -> Option<String> {
    p.is_relaxed().then(|| "initial state is not invariant: ℙ is not shift-invariant".to_string())
}

/// `−log min_a min sp(Φ_a[𝟙])` if every letter is strictly positive.
pub fn strict_positivity_ceiling(p: &Process) -> Option<f64> {
    let report = p.instrument().validate();
    if !report.all_strictly_positive {
        return None;
    }
    let eps = report.letters.iter().map(|l| l.epsilon).fold(f64::INFINITY, f64::min);
    Some(-eps.ln())
}

pub fn ep_bounds(cache: &PathCache, t_max: usize) -> Result<EpBounds> {
    cache.check_range(t_max)?;
    let p = cache.process();
    let mut rows = Vec::new();
    let mut running = f64::NEG_INFINITY;
    let mut support_violation_at = None;
    for t in 1..=t_max {
        let s = mean_sigma(cache, t)?;
        if s.mean_sigma == f64::INFINITY && support_violation_at.is_none() {
            support_violation_at = Some(t);
        }
        running = running.max(s.lower_bound_ep);
        rows.push(EpRow {
            t,
            mean_sigma: s.mean_sigma,
            rate: s.mean_sigma / t as f64,
            lower: s.lower_bound_ep,
            running_lower: running,
        });
    }
    let mut warnings: Vec<String> = relaxed_warning(p).into_iter().collect();
    if let Some(t) = support_violation_at {
        warnings.push(format!("support equality violated at T={t}: E[σ_T] = +∞"));
    }
    Ok(EpBounds {
        rows,
        lower_bound: running,
        ceiling: strict_positivity_ceiling(p),
        support_violation_at,
        warnings,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MonteCarloEstimate {
    pub t: usize,
    pub n: usize,
    pub seed: u64,
    /// Mean of `σ_T/T`.
    pub mean: f64,
    pub std_dev: f64,
    pub std_error: f64,
    /// Normal 95% interval.
    pub ci_low: f64,
    pub ci_high: f64,
    pub infinite_count: usize,
    pub ergodic: bool,
    pub warnings: Vec<String>,
}

/// Mean of `σ_T/T` over `n` sampled trajectories. The time average
/// converges almost surely (and in `L¹` when `ep < ∞`); for non-ergodic
/// processes the limit may be random.
pub fn ep_monte_carlo(p: &Process, t: usize, n: usize, seed: u64) -> Result<MonteCarloEstimate> {
    if t == 0 || n == 0 {
        return Err(Error::invalid("T and n must be positive"));
    }
    let ergodic = spectral_report(&p.instrument().total(), EIGEN_CLUSTER_TOL)?.eigenvalue_one_simple;
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = pathspace::trajectory_rng(seed, i as u64);
            pathspace::sample_with_rng(p, t, &mut rng, false).sigma() / t as f64
        })
        .collect();
    let infinite_count = values.iter().filter(|v| !v.is_finite()).count();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 && infinite_count == 0 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let std_dev = var.sqrt();
    let std_error = std_dev / (n as f64).sqrt();
    let mut warnings: Vec<String> = relaxed_warning(p).into_iter().collect();
    if !ergodic {
        warnings.push("eigenvalue 1 of Φ is not simple: the almost-sure limit may be random".into());
    }
    Ok(MonteCarloEstimate {
        t,
        n,
        seed,
        mean,
        std_dev,
        std_error,
        ci_low: mean - 1.96 * std_error,
        ci_high: mean + 1.96 * std_error,
        infinite_count,
        ergodic,
        warnings,
    })
}

/// `e_T(α) = log Σ ℙ_T^{1−α} ℙ̂_T^α`.
pub fn renyi_from_table(table: &PathTable, alpha: f64) -> f64 {
    if alpha == 0.0 || alpha == 1.0 {
        return 0.0;
    }
    renyi_log(table.log_p(), table.log_p_hat(), alpha)
}

pub fn renyi_pressure(cache: &PathCache, alpha: f64, t: usize) -> Result<f64> {
    Ok(renyi_from_table(&*cache.table(t)?, alpha))
}

/// Superadditivity constant obtained from gluing constants `(τ, C_τ)`:
/// `c = log(C_τ λ0² / (τ + 1))`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SuperadditivityConstant {
    pub tau: usize,
    pub c_tau: f64,
    pub c: f64,
    /// `C_τ` comes from a finite word horizon.
    pub horizon_limited: bool,
}

impl SuperadditivityConstant {
    pub fn new(tau: usize, c_tau: f64, lambda0: f64, horizon_limited: bool) -> Self {
        let c = (c_tau * lambda0 * lambda0 / (tau as f64 + 1.0)).ln();
        SuperadditivityConstant { tau, c_tau, c, horizon_limited }
    }
}

/// Constants feeding the two-sided pressure bounds.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PressureConstants {
    pub lambda0: f64,
    pub superadditivity: Option<SuperadditivityConstant>,
    /// `D_0` from a certified quasi-Bernoulli lower bound.
    pub d0: Option<f64>,
}

impl PressureConstants {
    pub fn uncertified(lambda0: f64) -> Self {
        PressureConstants { lambda0, superadditivity: None, d0: None }
    }

    /// Best superadditivity constant on `[0,1]`.
    pub fn c(&self) -> Option<f64> {
        let from_c = self.superadditivity.map(|s| s.c);
        let from_d = self.d0.filter(|d| *d > 0.0).map(f64::ln);
        match (from_c, from_d) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        }
    }

    /// `(c_up, c_lo)` such that `e_T + c_up` is subadditive and `e_T + c_lo`
    /// superadditive at this `α`.
    fn offsets(&self, alpha: f64) -> (Option<f64>, Option<f64>) {
        let ll = self.lambda0.ln();
        if (0.0..=1.0).contains(&alpha) {
            return (Some(-ll), self.c());
        }
        let Some(d0) = self.d0.filter(|d| *d > 0.0) else { return (None, None) };
        let ld = d0.ln();
        if alpha > 1.0 {
            (Some((1.0 - alpha) * ld - alpha * ll), Some((alpha - 1.0) * ll + alpha * ld))
        } else {
            (Some(-(1.0 - alpha) * ll + alpha * ld), Some(-alpha * ll + (1.0 - alpha) * ld))
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PressureRow {
    pub t: usize,
    pub e_t: f64,
    /// `(e_T(α) + c_up)/T`.
    pub upper: Option<f64>,
    /// `(e_T(α) + c_lo)/T`.
    pub lower: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PressurePoint {
    pub alpha: f64,
    pub outside_unit: bool,
    pub rows: Vec<PressureRow>,
    /// Best (smallest) upper bound over the horizon.
    pub upper: Option<f64>,
    /// Best (largest) lower bound over the horizon.
    pub lower: Option<f64>,
    /// `e_{T_max}(α)/T_max`, clamped into the bracket.
    pub estimate: f64,
}

impl PressurePoint {
    pub fn midpoint(&self) -> Option<f64> {
        match (self.upper, self.lower) {
            (Some(u), Some(l)) => Some(0.5 * (u + l)),
            _ => None,
        }
    }

    pub fn width(&self) -> Option<f64> {
        match (self.upper, self.lower) {
            (Some(u), Some(l)) => Some(u - l),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PressureCurve {
    pub t_min: usize,
    pub t_max: usize,
    pub lambda0: f64,
    pub constants: PressureConstants,
    /// Lower bounds are available on `[0,1]`.
    pub lower_certified: bool,
    /// Lower bounds rest on constants estimated over a finite horizon.
    pub horizon_limited: bool,
    /// Bounds outside `[0,1]` are available.
    pub extended: bool,
    /// `sup_T (E[σ_T] + log λ0)/T` over the same horizon.
    pub ep_lower_bound: f64,
    /// `E[σ_{T_max}]/T_max`.
    pub ep_estimate: f64,
    pub points: Vec<PressurePoint>,
    pub warnings: Vec<String>,
}

impl PressureCurve {
    pub fn alphas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.alpha).collect()
    }

    pub fn point(&self, alpha: f64) -> Option<&PressurePoint> {
        self.points.iter().find(|p| (p.alpha - alpha).abs() < 1e-12)
    }

    /// CSV with columns `alpha,T,e_T,upper,lower`; missing bounds are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["alpha", "T", "e_T", "upper", "lower"])?;
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        for p in &self.points {
            for r in &p.rows {
                w.write_record([fmt_f64(p.alpha), r.t.to_string(), fmt_f64(r.e_t), opt(r.upper), opt(r.lower)])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `n` uniform points on `[0,1]`.
pub fn unit_alpha_grid(n: usize) -> Vec<f64> {
    uniform_grid(0.0, 1.0, n)
}

/// Uniform grid on `[a, b]` whose interior points are exact multiples of
/// the step, so that `α ↦ 1 − α` maps the unit grid onto itself.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// 41 points on `[0,1]`, or 121 on `[−1,2]` when bounds outside `[0,1]`
/// are available.
pub fn default_alpha_grid(extended: bool) -> Vec<f64> {
    if extended {
        uniform_grid(-1.0, 2.0, 121)
    } else {
        unit_alpha_grid(41)
    }
}

pub fn pressure_curve(
    cache: &PathCache,
    alphas: &[f64],
    t_min: usize,
    t_max: usize,
    constants: &PressureConstants,
) -> Result<PressureCurve> {
    if alphas.is_empty() {
        return Err(Error::EmptyGrid("alpha grid"));
    }
    if t_min == 0 || t_min > t_max {
        return Err(Error::invalid("T range must satisfy 1 ≤ T_min ≤ T_max"));
    }
    cache.check_range(t_max)?;
    let p = cache.process();
    let mut e_values = vec![Vec::with_capacity(t_max - t_min + 1); alphas.len()];
    let mut ep_lower_bound = f64::NEG_INFINITY;
    let mut ep_estimate = f64::NAN;
    for t in t_min..=t_max {
        let table = cache.table(t)?;
        let es: Vec<f64> = alphas.par_iter().map(|&a| renyi_from_table(&table, a)).collect();
        for (k, e) in es.into_iter().enumerate() {
            e_values[k].push(e);
        }
        let s = mean_sigma_from_table(&table, p.lambda0());
        ep_lower_bound = ep_lower_bound.max(s.lower_bound_ep);
        ep_estimate = s.mean_sigma / t as f64;
    }
    let points = alphas
        .iter()
        .zip(e_values)
        .map(|(&alpha, es)| {
            let outside_unit = !(0.0..=1.0).contains(&alpha);
            let endpoint = alpha == 0.0 || alpha == 1.0;
            let (c_up, c_lo) = constants.offsets(alpha);
            let rows: Vec<PressureRow> = es
                .iter()
                .enumerate()
                .map(|(k, &e_t)| {
                    let t = (t_min + k) as f64;
                    if endpoint {
                        return PressureRow { t: t_min + k, e_t, upper: Some(0.0), lower: Some(0.0) };
                    }
                    PressureRow {
                        t: t_min + k,
                        e_t,
                        upper: c_up.map(|c| (e_t + c) / t),
                        lower: c_lo.map(|c| (e_t + c) / t),
                    }
                })
                .collect();
            let upper = rows.iter().filter_map(|r| r.upper).reduce(f64::min);
            let lower = rows.iter().filter_map(|r| r.lower).reduce(f64::max);
            let mut estimate = es.last().copied().unwrap_or(f64::NAN) / t_max as f64;
            if let Some(u) = upper {
                estimate = estimate.min(u);
            }
            if let Some(l) = lower {
                estimate = estimate.max(l);
            }
            PressurePoint { alpha, outside_unit, rows, upper, lower, estimate }
        })
        .collect();
    let lower_certified = constants.c().is_some();
    let mut warnings: Vec<String> = relaxed_warning(p).into_iter().collect();
    if !lower_certified {
        warnings.push("no certified superadditivity constant: lower bounds omitted".into());
    }
    if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) && constants.d0.is_none() {
        warnings.push("bounds outside [0,1] need a certified quasi-Bernoulli constant".into());
    }
    Ok(PressureCurve {
        t_min,
        t_max,
        lambda0: p.lambda0(),
        constants: *constants,
        lower_certified,
        horizon_limited: constants.superadditivity.is_some_and(|s| s.horizon_limited),
        extended: constants.d0.is_some(),
        ep_lower_bound,
        ep_estimate,
        points,
        warnings,
    })
}

/// `Q_T(ω) = e^{−e_T(α)} ℙ_T(ω)^{1−α} ℙ̂_T(ω)^α` in log-domain.
#[derive(Clone, Debug, Serialize)]
pub struct TiltedMeasure {
    pub alpha: f64,
    pub t: usize,
    pub log_q: Vec<f64>,
}

impl TiltedMeasure {
    pub fn log_normalization(&self) -> f64 {
        log_sum_exp(&self.log_q)
    }
}

pub fn tilted_from_table(table: &PathTable, alpha: f64) -> TiltedMeasure {
    let e = renyi_log(table.log_p(), table.log_p_hat(), alpha);
    let log_q = table
        .log_p()
        .iter()
        .zip(table.log_p_hat())
        .map(|(&a, &b)| {
            if alpha == 0.0 {
                a - e
            } else if alpha == 1.0 {
                b - e
            } else if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                (1.0 - alpha) * a + alpha * b - e
            }
        })
        .collect();
    TiltedMeasure { alpha, t: table.t(), log_q }
}

pub fn tilted_measure(cache: &PathCache, alpha: f64, t: usize) -> Result<TiltedMeasure> {
    Ok(tilted_from_table(&*cache.table(t)?, alpha))
}

/// `S(ℙ_T)`.
pub fn table_entropy(table: &PathTable) -> f64 {
    -table
        .log_p()
        .iter()
        .filter(|x| x.is_finite())
        .map(|&x| x.exp() * x)
        .sum::<f64>()
}

/// `S(ℙ_T)/T` for each `T` in the range; each value bounds the
/// Kolmogorov–Sinai entropy from above.
pub fn ks_entropy_estimate(cache: &PathCache, t_min: usize, t_max: usize) -> Result<Vec<(usize, f64)>> {
    cache.check_range(t_max)?;
    (t_min.max(1)..=t_max)
        .map(|t| Ok((t, table_entropy(&*cache.table(t)?) / t as f64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::{bernoulli, trivial};
    use crate::pathspace::DEFAULT_CAP;

    const EP: f64 = 0.338_919_144_154_881_3;

    #[test]
    fn bernoulli_sigma_and_mean() {
        let p = bernoulli(0.7).unwrap();
        let s = sigma(&p, &[0, 0, 1]).unwrap();
        assert!((s - (7.0f64 / 3.0).ln()).abs() < 1e-14);
        let cache = PathCache::new(&p, DEFAULT_CAP);
        let m = mean_sigma(&cache, 3).unwrap();
        assert!((m.mean_sigma - 3.0 * 0.4 * (7.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((m.mean_sigma - 1.016757).abs() < 1e-6);
    }

    #[test]
    fn bernoulli_ep_bounds() {
        let p = bernoulli(0.7).unwrap();
        let cache = PathCache::new(&p, DEFAULT_CAP);
        let b = ep_bounds(&cache, 4).unwrap();
        assert!((b.rows[0].lower - EP).abs() < 1e-12);
        assert!((b.ceiling.unwrap() - 1.203973).abs() < 1e-6);
        assert!(b.ceiling.unwrap() >= EP);
    }

    #[test]
    fn trivial_is_zero() {
        let p = trivial(1).unwrap();
        let cache = PathCache::new(&p, DEFAULT_CAP);
        let b = ep_bounds(&cache, 5).unwrap();
        assert!(b.rows.iter().all(|r| r.mean_sigma == 0.0 && r.lower == 0.0));
        let mc = ep_monte_carlo(&p, 20, 10, 1).unwrap();
        assert_eq!(mc.mean, 0.0);
        assert_eq!(mc.std_dev, 0.0);
    }

    #[test]
    fn renyi_endpoints_and_closed_form() {
        let p = bernoulli(0.7).unwrap();
        let cache = PathCache::new(&p, DEFAULT_CAP);
        assert_eq!(renyi_pressure(&cache, 0.0, 4).unwrap(), 0.0);
        assert_eq!(renyi_pressure(&cache, 1.0, 4).unwrap(), 0.0);
        let e6 = renyi_pressure(&cache, 0.5, 6).unwrap();
        assert!((e6 - 6.0 * (2.0 * 0.21f64.sqrt()).ln()).abs() < 1e-12);
        let a = renyi_pressure(&cache, 0.3, 5).unwrap();
        let b = renyi_pressure(&cache, 0.7, 5).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn tilted_half_is_fair_coin() {
        let p = bernoulli(0.7).unwrap();
        let cache = PathCache::new(&p, DEFAULT_CAP);
        let q = tilted_measure(&cache, 0.5, 3).unwrap();
        assert!(q.log_normalization().abs() < 1e-12);
        for lq in &q.log_q {
            assert!((lq.exp() - 0.125).abs() < 1e-12);
        }
        let t0 = tilted_measure(&cache, 0.0, 3).unwrap();
        let tab = cache.table(3).unwrap();
        for (a, b) in t0.log_q.iter().zip(tab.log_p()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ks_entropy_bernoulli() {
        let p = bernoulli(0.7).unwrap();
        let cache = PathCache::new(&p, DEFAULT_CAP);
        for (_, h) in ks_entropy_estimate(&cache, 1, 6).unwrap() {
            assert!((h - 0.610864).abs() < 1e-6);
        }
    }

    #[test]
    fn classical_utilities() {
        let p = [0.5, 0.5, 0.0];
        let q = [0.25, 0.25, 0.5];
        assert!((shannon_entropy(&p) - 2f64.ln()).abs() < 1e-15);
        assert!((relative_entropy(&p, &q) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(relative_entropy(&q, &p), f64::INFINITY);
        assert_eq!(renyi_relative_entropy(&p, &q, 1.5), f64::INFINITY);
        assert!(renyi_relative_entropy(&p, &q, 0.5) <= 0.0);
        let g = gibbs_measure(&[1.0, 0.0, 2.0], &q);
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pressure_curve_without_constants() {
        let p = bernoulli(0.7).unwrap();
        let cache = PathCache::new(&p, DEFAULT_CAP);
        let consts = PressureConstants::uncertified(p.lambda0());
        let curve = pressure_curve(&cache, &[0.0, 0.5, 1.0, 1.5], 1, 4, &consts).unwrap();
        assert!(!curve.lower_certified);
        let half = curve.point(0.5).unwrap();
        assert!(half.lower.is_none());
        assert!(curve.point(1.5).unwrap().upper.is_none());
        assert_eq!(curve.point(0.0).unwrap().upper, Some(0.0));
        assert!(pressure_curve(&cache, &[], 1, 4, &consts).is_err());
    }
}
