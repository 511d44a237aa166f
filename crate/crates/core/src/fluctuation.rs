//! Law of `σ_T/T`, the finite-time fluctuation relation, rate functions
//! and empirical large-deviation checks.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::entropic::{mean_sigma_from_table, PressureCurve};
use crate::error::{Error, Result};
use crate::pathspace::{fmt_f64, PathCache, PathTable};

/// Grouping tolerance for `σ_T/T`, a few hundred ulps of typical
/// log-probabilities.
pub const ATOM_CLUSTER_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SigmaAtom {
    pub s: f64,
    pub mass_p: f64,
    pub mass_p_hat: f64,
}

/// Law `Q_T` of `σ_T/T` under `ℙ_T`.
#[derive(Clone, Debug, Serialize)]
pub struct SigmaLaw {
    pub t: usize,
    /// Finite atoms in increasing `s`, symmetric under `s ↦ −s`.
    pub atoms: Vec<SigmaAtom>,
    /// `ℙ_T(σ_T = +∞)`, equal to the `ℙ̂_T`-mass outside `supp ℙ_T`.
    pub infinite_mass: f64,
}

impl SigmaLaw {
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass_p).sum::<f64>() + self.infinite_mass
    }

    pub fn atom(&self, s: f64) -> Option<&SigmaAtom> {
        self.atoms.iter().find(|a| (a.s - s).abs() <= ATOM_CLUSTER_TOL)
    }

    /// CSV with columns `s,mass_p,mass_p_hat`; a `+∞` atom is written last.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "mass_p", "mass_p_hat"])?;
        for a in &self.atoms {
            w.write_record([fmt_f64(a.s), fmt_f64(a.mass_p), fmt_f64(a.mass_p_hat)])?;
        }
        if self.infinite_mass > 0.0 {
            w.write_record(["inf".to_string(), fmt_f64(self.infinite_mass), "0.0".to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn sigma_law_from_table(table: &PathTable) -> SigmaLaw {
    let t = table.t();
    let tf = t.max(1) as f64;
    let mut finite: Vec<(f64, f64, f64)> = Vec::new();
    let mut infinite_mass = 0.0;
    for i in 0..table.len() {
        let (lp, lph) = (table.log_p()[i], table.log_p_hat()[i]);
        if lp == f64::NEG_INFINITY {
            continue;
        }
        if lph == f64::NEG_INFINITY {
            infinite_mass += lp.exp();
            continue;
        }
        finite.push(((lp - lph) / tf, lp.exp(), lph.exp()));
    }
    finite.sort_by(|a, b| a.0.total_cmp(&b.0));
    let tol = ATOM_CLUSTER_TOL;
    let mut atoms: Vec<SigmaAtom> = Vec::new();
    let mut members = 0usize;
    let mut last = f64::NEG_INFINITY;
    for (s, p, ph) in finite {
        match atoms.last_mut() {
            Some(a) if s - last <= tol => {
                members += 1;
                a.s += (s - a.s) / members as f64;
                a.mass_p += p;
                a.mass_p_hat += ph;
            }
            _ => {
                members = 1;
                atoms.push(SigmaAtom { s, mass_p: p, mass_p_hat: ph });
            }
        }
        last = s;
    }
    symmetrize(&mut atoms, tol);
    SigmaLaw { t, atoms, infinite_mass }
}

/// Pair `s` with `−s`, averaging their magnitudes; unpaired atoms get a
/// zero-mass partner so the support is symmetric by construction.
fn symmetrize(atoms: &mut Vec<SigmaAtom>, tol: f64) {
    let mut extra = Vec::new();
    let n = atoms.len();
    for i in 0..n {
        let s = atoms[i].s;
        if s < -tol {
            continue;
        }
        if s.abs() <= tol {
            atoms[i].s = 0.0;
            continue;
        }
        match (0..n).find(|&j| (atoms[j].s + s).abs() <= tol) {
            Some(j) => {
                let m = 0.5 * (s - atoms[j].s);
                atoms[i].s = m;
                atoms[j].s = -m;
            }
            None => extra.push(SigmaAtom { s: -s, mass_p: 0.0, mass_p_hat: 0.0 }),
        }
    }
    for i in 0..n {
        let s = atoms[i].s;
        if s < -tol && !atoms.iter().any(|a| (a.s + s).abs() <= tol) {
            extra.push(SigmaAtom { s: -s, mass_p: 0.0, mass_p_hat: 0.0 });
        }
    }
    atoms.extend(extra);
    atoms.sort_by(|a, b| a.s.total_cmp(&b.s));
}

pub fn sigma_law(cache: &PathCache, t: usize) -> Result<SigmaLaw> {
    Ok(sigma_law_from_table(&*cache.table(t)?))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FluctuationCheck {
    /// `max |Q(−s) − e^{−Ts} Q(s)| / Q(s)` over atoms with `s ≥ 0`.
    pub max_relative_defect: f64,
    pub worst_s: Option<f64>,
    /// `max |ℙ̂-mass − e^{−Ts} ℙ-mass|` over atoms.
    pub max_hat_defect: f64,
}

pub fn check_fluctuation_relation(law: &SigmaLaw) -> FluctuationCheck {
    let t = law.t as f64;
    let mut max_relative_defect = 0.0f64;
    let mut worst_s = None;
    let mut max_hat_defect = 0.0f64;
    for a in &law.atoms {
        max_hat_defect = max_hat_defect.max((a.mass_p_hat - (-t * a.s).exp() * a.mass_p).abs());
        if a.s < 0.0 || a.mass_p <= 0.0 {
            continue;
        }
        let partner = law.atom(-a.s).map_or(0.0, |b| b.mass_p);
        let defect = (partner - (-t * a.s).exp() * a.mass_p).abs() / a.mass_p;
        if defect > max_relative_defect {
            max_relative_defect = defect;
            worst_s = Some(a.s);
        }
    }
    FluctuationCheck { max_relative_defect, worst_s, max_hat_defect }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct JarzynskiCheck {
    pub t: usize,
    /// `|E[e^{−σ_T}] − 1|` with `e^{−∞} = 0`.
    pub identity_defect: f64,
    /// `E[σ_T]/T`.
    pub inequality_value: f64,
    /// `σ_T = +∞` has positive probability; the identity then fails by
    /// exactly that probability.
    pub infinite_sigma: bool,
}

pub fn jarzynski_from_table(table: &PathTable) -> JarzynskiCheck {
    let mut e = 0.0;
    let mut infinite_sigma = false;
    for i in 0..table.len() {
        let (lp, lph) = (table.log_p()[i], table.log_p_hat()[i]);
        if lp == f64::NEG_INFINITY {
            continue;
        }
        if lph == f64::NEG_INFINITY {
            infinite_sigma = true;
            continue;
        }
        e += lph.exp();
    }
    let s = mean_sigma_from_table(table, 1.0);
    JarzynskiCheck {
        t: table.t(),
        identity_defect: (e - 1.0).abs(),
        inequality_value: s.mean_sigma / table.t().max(1) as f64,
        infinite_sigma,
    }
}

pub fn check_jarzynski(cache: &PathCache, t: usize) -> Result<JarzynskiCheck> {
    Ok(jarzynski_from_table(&*cache.table(t)?))
}

/// Discrete Legendre transform `I(s) = −min_α (α s + e(α))` of a pressure
/// curve with error bars from its upper and lower envelopes.
#[derive(Clone, Debug, Serialize)]
pub struct RateFunction {
    pub s_grid: Vec<f64>,
    pub values: Vec<f64>,
    /// `I − I_upper-envelope ≥ 0`.
    pub err_lo: Vec<f64>,
    /// `I_lower-envelope − I ≥ 0`.
    pub err_hi: Vec<f64>,
    pub validity: (f64, f64),
    /// Built from pressure data on `[0,1]` only.
    pub local: bool,
    pub alpha_range: (f64, f64),
    pub ep_lower_bound: f64,
    #[serde(skip)]
    alphas: Vec<f64>,
    #[serde(skip)]
    e_mid: Vec<f64>,
    #[serde(skip)]
    e_up: Vec<f64>,
    #[serde(skip)]
    e_lo: Vec<f64>,
}

fn legendre(alphas: &[f64], e: &[f64], s: f64) -> f64 {
    let m = alphas
        .iter()
        .zip(e)
        .map(|(&a, &v)| a * s + v)
        .fold(f64::INFINITY, f64::min);
    if m == 0.0 {
        0.0
    } else {
        -m
    }
}

impl RateFunction {
    pub fn eval(&self, s: f64) -> f64 {
        legendre(&self.alphas, &self.e_mid, s)
    }

    pub fn eval_with_error(&self, s: f64) -> (f64, f64, f64) {
        let i = self.eval(s);
        let up = legendre(&self.alphas, &self.e_up, s);
        let lo = legendre(&self.alphas, &self.e_lo, s);
        (i, (i - up).max(0.0), (lo - i).max(0.0))
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.validity.0 - 1e-12 && s <= self.validity.1 + 1e-12
    }

    /// `inf_{s∈[a,b]} I(s)` by dense evaluation; `I` is convex so this is
    /// also the infimum over the open interval.
    pub fn infimum(&self, a: f64, b: f64) -> f64 {
        let n = 4000;
        (0..=n)
            .map(|k| self.eval(a + (b - a) * k as f64 / n as f64))
            .fold(f64::INFINITY, f64::min)
    }

    /// `max |I(−s) − I(s) − s|` over grid points whose mirror is valid.
    pub fn symmetry_defect(&self) -> f64 {
        self.s_grid
            .iter()
            .filter(|&&s| self.contains(s) && self.contains(-s))
            .map(|&s| (self.eval(-s) - self.eval(s) - s).abs())
            .fold(0.0, f64::max)
    }

    /// Largest negative second difference on the grid.
    pub fn convexity_defect(&self) -> f64 {
        self.values
            .windows(3)
            .zip(self.s_grid.windows(3))
            .map(|(v, s)| {
                let (h1, h2) = (s[1] - s[0], s[2] - s[1]);
                let lhs = v[1] * (h1 + h2);
                let rhs = v[0] * h2 + v[2] * h1;
                (lhs - rhs).max(0.0)
            })
            .fold(0.0, f64::max)
    }

    /// CSV with columns `s,I,I_err_lo,I_err_hi`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "I", "I_err_lo", "I_err_hi"])?;
        for k in 0..self.s_grid.len() {
            w.write_record([
                fmt_f64(self.s_grid[k]),
                fmt_f64(self.values[k]),
                fmt_f64(self.err_lo[k]),
                fmt_f64(self.err_hi[k]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Validity interval of a curve: `[−ep_lb, ep_lb]` for data on `[0,1]`,
/// otherwise the range of one-sided end slopes.
pub fn validity_interval(curve: &PressureCurve) -> Result<(f64, f64)> {
    let ep = curve.ep_lower_bound.max(0.0);
    let pts = &curve.points;
    let unit_only = pts.iter().all(|p| !p.outside_unit);
    if unit_only || pts.len() < 2 {
        return Ok((-ep, ep));
    }
    let mid = |k: usize| pts[k].midpoint().ok_or(Error::UncertifiedCurve);
    let n = pts.len();
    let left = (mid(1)? - mid(0)?) / (pts[1].alpha - pts[0].alpha);
    let right = (mid(n - 1)? - mid(n - 2)?) / (pts[n - 1].alpha - pts[n - 2].alpha);
    if !left.is_finite() || !right.is_finite() {
        return Ok((-ep, ep));
    }
    Ok(((-right).min(-ep), (-left).max(ep)))
}

/// `n` points across the validity interval, or `{lo}` if it is degenerate.
pub fn default_s_grid(validity: (f64, f64), n: usize) -> Vec<f64> {
    let (lo, hi) = validity;
    if hi - lo <= 0.0 || n < 2 {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

pub fn rate_function(curve: &PressureCurve, s_grid: Option<&[f64]>) -> Result<RateFunction> {
    if curve.points.is_empty() {
        return Err(Error::EmptyGrid("pressure curve"));
    }
    let mut alphas = Vec::new();
    let mut e_mid = Vec::new();
    let mut e_up = Vec::new();
    let mut e_lo = Vec::new();
    for p in &curve.points {
        let (Some(u), Some(l)) = (p.upper, p.lower) else {
            return Err(Error::UncertifiedCurve);
        };
        alphas.push(p.alpha);
        e_mid.push(0.5 * (u + l));
        e_up.push(u);
        e_lo.push(l);
    }
    let validity = validity_interval(curve)?;
    let s_grid = match s_grid {
        Some(g) if g.is_empty() => return Err(Error::EmptyGrid("s grid")),
        Some(g) => g.to_vec(),
        None => default_s_grid(validity, 201),
    };
    let evals: Vec<(f64, f64, f64)> = s_grid
        .par_iter()
        .map(|&s| {
            let i = legendre(&alphas, &e_mid, s);
            let up = legendre(&alphas, &e_up, s);
            let lo = legendre(&alphas, &e_lo, s);
            (i, (i - up).max(0.0), (lo - i).max(0.0))
        })
        .collect();
    let alpha_range = (
        alphas.iter().copied().fold(f64::INFINITY, f64::min),
        alphas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    Ok(RateFunction {
        values: evals.iter().map(|e| e.0).collect(),
        err_lo: evals.iter().map(|e| e.1).collect(),
        err_hi: evals.iter().map(|e| e.2).collect(),
        s_grid,
        validity,
        local: alpha_range.0 >= 0.0 && alpha_range.1 <= 1.0,
        alpha_range,
        ep_lower_bound: curve.ep_lower_bound,
        alphas,
        e_mid,
        e_up,
        e_lo,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LdpRow {
    pub t: usize,
    /// `ℙ_T(σ_T/T ∈ O)` for the open interval.
    pub probability: f64,
    /// `(1/T) log ℙ_T(σ_T/T ∈ O)`.
    pub empirical_rate: f64,
    /// `(1/T) log ℙ_T(σ_T/T ∈ Ō)`.
    pub closed_rate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LdpComparison {
    pub interval: (f64, f64),
    pub rows: Vec<LdpRow>,
    /// `−inf_{s∈O} I(s)`.
    pub theory: f64,
    /// Empirical rate minus theory at the largest `T`.
    pub residual: f64,
    /// Empirical rates are non-increasing in `T`.
    pub decreasing: bool,
    /// Closed-set rate at the largest `T` stays below `−inf_Ō I` plus the
    /// given slack.
    pub upper_bound_holds: bool,
    pub inside_validity: bool,
}

impl LdpComparison {
    /// CSV with columns `T,probability,empirical_rate,closed_rate,theory`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["T", "probability", "empirical_rate", "closed_rate", "theory"])?;
        for r in &self.rows {
            w.write_record([
                r.t.to_string(),
                fmt_f64(r.probability),
                fmt_f64(r.empirical_rate),
                fmt_f64(r.closed_rate),
                fmt_f64(self.theory),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn interval_masses(table: &PathTable, a: f64, b: f64) -> (f64, f64) {
    let tf = table.t() as f64;
    let mut open = 0.0;
    let mut closed = 0.0;
    for i in 0..table.len() {
        let lp = table.log_p()[i];
        if lp == f64::NEG_INFINITY {
            continue;
        }
        let s = table.sigma(i) / tf;
        let p = lp.exp();
        let eps = ATOM_CLUSTER_TOL;
        if s > a + eps && s < b - eps {
            open += p;
        }
        if s >= a - eps && s <= b + eps {
            closed += p;
        }
    }
    (open, closed)
}

pub fn ldp_empirical(
    cache: &PathCache,
    rate: &RateFunction,
    interval: (f64, f64),
    t_min: usize,
    t_max: usize,
    slack: f64,
) -> Result<LdpComparison> {
    let (a, b) = interval;
    if !(a < b) {
        return Err(Error::invalid("interval must satisfy a < b"));
    }
    if t_min == 0 || t_min > t_max {
        return Err(Error::invalid("T range must satisfy 1 ≤ T_min ≤ T_max"));
    }
    cache.check_range(t_max)?;
    let mut rows = Vec::new();
    for t in t_min..=t_max {
        let table = cache.table(t)?;
        let (open, closed) = interval_masses(&table, a, b);
        rows.push(LdpRow {
            t,
            probability: open,
            empirical_rate: open.ln() / t as f64,
            closed_rate: closed.ln() / t as f64,
        });
    }
    let theory = -rate.infimum(a, b);
    let last = rows.last().expect("non-empty range");
    let residual = last.empirical_rate - theory;
    let upper_bound_holds = last.closed_rate <= theory + slack;
    let decreasing = rows.windows(2).all(|w| w[1].empirical_rate <= w[0].empirical_rate + 1e-12);
    Ok(LdpComparison {
        interval,
        residual,
        decreasing,
        upper_bound_holds,
        inside_validity: rate.contains(a) && rate.contains(b),
        theory,
        rows,
    })
}
