//! Instruments, processes and the operations on them.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::{
    self, c64, compose, diag, hermitian_eigen, identity, is_hermitian, kron, matrix_unit,
    min_eigenvalue, op_norm, strict_positivity_with, tensor, CpMap, Operator, Tolerances,
};
use crate::reversal;

/// Finite family of CP maps indexed by an ordered alphabet.
#[derive(Clone, Debug)]
pub struct Instrument {
    dim: usize,
    alphabet: Vec<String>,
    maps: Vec<CpMap>,
}

impl Instrument {
    pub fn new(alphabet: Vec<String>, maps: Vec<CpMap>) -> Result<Self> {
        if alphabet.is_empty() {
            return Err(Error::invalid("empty alphabet"));
        }
        if alphabet.len() != maps.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} maps",
                alphabet.len(),
                maps.len()
            )));
        }
        let distinct: BTreeSet<&String> = alphabet.iter().collect();
        if distinct.len() != alphabet.len() {
            return Err(Error::invalid("duplicate outcome labels"));
        }
        let dim = maps[0].dim();
        if let Some(m) = maps.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: m.dim() });
        }
        Ok(Instrument { dim, alphabet, maps })
    }

    pub fn from_pairs(pairs: Vec<(String, CpMap)>) -> Result<Self> {
        let (alphabet, maps) = pairs.into_iter().unzip();
        Instrument::new(alphabet, maps)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.alphabet.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphabet.is_empty()
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn label(&self, a: usize) -> &str {
        &self.alphabet[a]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.alphabet.iter().position(|l| l == label)
    }

    pub fn maps(&self) -> &[CpMap] {
        &self.maps
    }

    pub fn map(&self, a: usize) -> &CpMap {
        &self.maps[a]
    }

    /// `Φ = Σ_a Φ_a`.
    pub fn total(&self) -> CpMap {
        CpMap::sum(&self.maps).expect("instrument maps share a dimension")
    }

    pub fn unitality_defect(&self) -> f64 {
        self.total().unitality_defect()
    }

    pub fn validate(&self) -> ValidationReport {
        validate_with(self, &Tolerances::default())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LetterReport {
    pub label: String,
    pub kraus_count: usize,
    /// `min sp(Φ_a[𝟙])`.
    pub epsilon: f64,
    pub strictly_positive: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub dim: usize,
    pub unitality_defect: f64,
    pub letters: Vec<LetterReport>,
    /// All letters strictly positive, which is sufficient for support equality.
    pub all_strictly_positive: bool,
    pub failures: Vec<String>,
}

pub fn validate(instr: &Instrument) -> ValidationReport {
    instr.validate()
}

pub fn validate_with(instr: &Instrument, tol: &Tolerances) -> ValidationReport {
    let mut failures = Vec::new();
    let mut letters = Vec::new();
    for (label, map) in instr.alphabet.iter().zip(&instr.maps) {
        if !map.is_finite() {
            failures.push(format!("letter `{label}` has non-finite Kraus entries"));
        }
        let sp = strict_positivity_with(map, tol.strict_positivity);
        letters.push(LetterReport {
            label: label.clone(),
            kraus_count: map.kraus().len(),
            epsilon: sp.epsilon,
            strictly_positive: sp.strictly_positive,
        });
    }
    let unitality_defect = instr.unitality_defect();
    if !(unitality_defect <= tol.unitality) {
        failures.push(format!("unitality defect {unitality_defect:e} exceeds {:e}", tol.unitality));
    }
    ValidationReport {
        valid: failures.is_empty(),
        dim: instr.dim,
        unitality_defect,
        all_strictly_positive: letters.iter().all(|l| l.strictly_positive),
        letters,
        failures,
    }
}

/// Self-inverse permutation of the alphabet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Involution {
    perm: Vec<usize>,
}

impl Involution {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        for (a, &b) in perm.iter().enumerate() {
            if b >= n || perm[b] != a {
                return Err(Error::invalid("theta is not an involution"));
            }
        }
        Ok(Involution { perm })
    }

    pub fn identity(n: usize) -> Self {
        Involution { perm: (0..n).collect() }
    }

    pub fn swap(n: usize, a: usize, b: usize) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.swap(a, b);
        Involution { perm }
    }

    pub fn from_label_pairs(alphabet: &[String], pairs: &[(String, String)]) -> Result<Self> {
        let mut perm: Vec<usize> = (0..alphabet.len()).collect();
        let find = |l: &str| {
            alphabet.iter().position(|x| x == l).ok_or_else(|| Error::UnknownLabel(l.to_string()))
        };
        for (x, y) in pairs {
            let (i, j) = (find(x)?, find(y)?);
            if (perm[i] != i && perm[i] != j) || (perm[j] != j && perm[j] != i) {
                return Err(Error::invalid(format!("label paired twice in theta: {x}, {y}")));
            }
            perm[i] = j;
            perm[j] = i;
        }
        Involution::new(perm)
    }

    /// Nontrivial pairs `(a, θ(a))` with `a < θ(a)`.
    pub fn label_pairs(&self, alphabet: &[String]) -> Vec<(String, String)> {
        self.perm
            .iter()
            .enumerate()
            .filter(|(a, b)| a < b)
            .map(|(a, &b)| (alphabet[a].clone(), alphabet[b].clone()))
            .collect()
    }

    pub fn apply(&self, a: usize) -> usize {
        self.perm[a]
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(a, &b)| a == b)
    }

    /// `Θ_T(ω₁,…,ω_T) = (θ(ω_T),…,θ(ω₁))`.
    pub fn reverse_word(&self, w: &[usize]) -> Vec<usize> {
        w.iter().rev().map(|&a| self.perm[a]).collect()
    }
}

/// Instrument with an initial state and an involution of the alphabet,
/// optionally carrying an outcome-reversed process.
#[derive(Clone, Debug)]
pub struct Process {
    instrument: Instrument,
    rho: Operator,
    theta: Involution,
    lambda0: f64,
    relaxed: bool,
    reversal: Option<Box<Process>>,
}

fn check_density(rho: &Operator, d: usize, tol: &Tolerances) -> Result<f64> {
    if rho.nrows() != d || rho.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rho.nrows() });
    }
    if !is_hermitian(rho, 1e-10) {
        return Err(Error::invalid("rho is not Hermitian"));
    }
    let tr = rho.trace().re;
    if (tr - 1.0).abs() > 1e-10 {
        return Err(Error::invalid(format!("rho has trace {tr}")));
    }
    let lambda0 = min_eigenvalue(rho);
    if !(lambda0 > tol.strict_positivity) {
        return Err(Error::NotPositive { min_eigenvalue: lambda0 });
    }
    Ok(lambda0)
}

impl Process {
    /// Process under the invariance requirement `Φ*[ρ] = ρ > 0`.
    pub fn new(instrument: Instrument, rho: Operator, theta: Involution) -> Result<Self> {
        Process::new_with(instrument, rho, theta, &Tolerances::default())
    }

    pub fn new_with(
        instrument: Instrument,
        rho: Operator,
        theta: Involution,
        tol: &Tolerances,
    ) -> Result<Self> {
        let p = Process::build(instrument, rho, theta, tol, false)?;
        let defect = p.invariance_defect();
        if defect > tol.invariance {
            return Err(Error::NotInvariant { defect });
        }
        Ok(p)
    }

    /// Process with the invariant state of `Φ`, which must be unique and faithful.
    pub fn with_invariant_state(instrument: Instrument, theta: Involution) -> Result<Self> {
        let tol = Tolerances::default();
        let state = operator::invariant_state(&instrument.total(), tol.eigen_cluster)?;
        Process::new_with(instrument, state.rho, theta, &tol)
    }

    /// Relaxed mode: `ρ > 0` need not be invariant, but a faithful invariant
    /// state must exist. Path measures are then not shift-invariant.
    pub fn relaxed(instrument: Instrument, rho: Operator, theta: Involution) -> Result<Self> {
        let tol = Tolerances::default();
        let inv = operator::invariant_state(&instrument.total(), tol.eigen_cluster)?;
        if !(inv.min_eigenvalue > tol.strict_positivity) {
            return Err(Error::NotPositive { min_eigenvalue: inv.min_eigenvalue });
        }
        let mut p = Process::build(instrument, rho, theta, &tol, true)?;
        p.relaxed = p.invariance_defect() > tol.invariance;
        Ok(p)
    }

    /// No unitality, positivity or invariance checks, for diagnostics on
    /// candidate processes that may be invalid.
    pub fn unchecked(instrument: Instrument, rho: Operator, theta: Involution) -> Result<Self> {
        if theta.len() != instrument.len() {
            return Err(Error::invalid("theta and alphabet have different sizes"));
        }
        if rho.nrows() != instrument.dim() {
            return Err(Error::DimensionMismatch { expected: instrument.dim(), found: rho.nrows() });
        }
        let lambda0 = min_eigenvalue(&rho);
        Ok(Process { instrument, rho, theta, lambda0, relaxed: true, reversal: None })
    }

    fn build(
        instrument: Instrument,
        rho: Operator,
        theta: Involution,
        tol: &Tolerances,
        relaxed: bool,
    ) -> Result<Self> {
        if theta.len() != instrument.len() {
            return Err(Error::invalid("theta and alphabet have different sizes"));
        }
        let defect = instrument.unitality_defect();
        if !(defect <= tol.unitality) {
            return Err(Error::NotUnital { defect });
        }
        let lambda0 = check_density(&rho, instrument.dim(), tol)?;
        let rho = operator::hermitian_part(&rho);
        Ok(Process { instrument, rho, theta, lambda0, relaxed, reversal: None })
    }

    pub fn instrument(&self) -> &Instrument {
        &self.instrument
    }

    pub fn rho(&self) -> &Operator {
        &self.rho
    }

    pub fn theta(&self) -> &Involution {
        &self.theta
    }

    /// `λ0 = min sp(ρ)`.
    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn dim(&self) -> usize {
        self.instrument.dim()
    }

    pub fn letters(&self) -> usize {
        self.instrument.len()
    }

    pub fn is_relaxed(&self) -> bool {
        self.relaxed
    }

    /// `‖Φ*[ρ] − ρ‖`.
    pub fn invariance_defect(&self) -> f64 {
        op_norm(&(self.instrument.total().schrodinger(&self.rho) - &self.rho))
    }

    pub fn reversal(&self) -> Option<&Process> {
        self.reversal.as_deref()
    }

    /// Attach an outcome reversal. It must share the alphabet and `θ`;
    /// whether it actually reverses the path measures is checked by
    /// [`reversal::verify_or`].
    pub fn with_reversal(mut self, or: Process) -> Result<Self> {
        if or.instrument.alphabet != self.instrument.alphabet {
            return Err(Error::invalid("reversal alphabet differs"));
        }
        if or.theta != self.theta {
            return Err(Error::invalid("reversal involution differs"));
        }
        self.reversal = Some(Box::new(or.without_reversal()));
        Ok(self)
    }

    pub fn without_reversal(mut self) -> Self {
        self.reversal = None;
        self
    }

    pub fn with_canonical_reversal(self) -> Result<Self> {
        let or = reversal::canonical_or(&self)?;
        self.with_reversal(or.process)
    }

    /// Canonical reversal attached when it can be built, otherwise unchanged.
    pub(crate) fn try_canonical(self) -> Self {
        match reversal::canonical_or(&self) {
            Ok(or) => self.clone().with_reversal(or.process).unwrap_or(self),
            Err(_) => self,
        }
    }

    /// The same process viewed under a different involution.
    pub fn with_theta(mut self, theta: Involution) -> Result<Self> {
        if theta.len() != self.letters() {
            return Err(Error::invalid("theta and alphabet have different sizes"));
        }
        self.theta = theta;
        self.reversal = None;
        Ok(self.try_canonical())
    }
}

fn labels(prefix: &[&str]) -> Vec<String> {
    prefix.iter().map(|s| s.to_string()).collect()
}

/// Letter labels `a, b, c, …, z, a1, b1, …`.
pub fn default_labels(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let c = (b'a' + (i % 26) as u8) as char;
            if i < 26 {
                c.to_string()
            } else {
                format!("{c}{}", i / 26)
            }
        })
        .collect()
}

fn is_unitary(u: &Operator) -> bool {
    u.is_square() && op_norm(&(u.adjoint() * u - identity(u.nrows()))) <= 1e-10
}

fn check_projections(ps: &[Operator], d: usize) -> Result<()> {
    if ps.is_empty() {
        return Err(Error::invalid("empty projection family"));
    }
    let mut sum = Operator::zeros(d, d);
    for (i, p) in ps.iter().enumerate() {
        if p.nrows() != d || p.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: p.nrows() });
        }
        if !is_hermitian(p, 1e-10) || op_norm(&(p * p - p)) > 1e-10 {
            return Err(Error::invalid(format!("operator {i} is not an orthogonal projection")));
        }
        for q in &ps[i + 1..] {
            if op_norm(&(p * q)) > 1e-10 {
                return Err(Error::invalid("projections are not mutually orthogonal"));
            }
        }
        sum += p;
    }
    if op_norm(&(sum - identity(d))) > 1e-10 {
        return Err(Error::invalid("projections do not sum to the identity"));
    }
    Ok(())
}

/// Projective measurement after a unitary step: `Φ_a[X] = U* P_a X P_a U`,
/// Kraus operator `P_a U`.
pub fn von_neumann(u: &Operator, projections: &[Operator]) -> Result<Instrument> {
    if !is_unitary(u) {
        return Err(Error::invalid("U is not unitary"));
    }
    check_projections(projections, u.nrows())?;
    let maps = projections
        .iter()
        .map(|p| CpMap::new(vec![p * u]))
        .collect::<Result<Vec<_>>>()?;
    Instrument::new((0..maps.len()).map(|i| i.to_string()).collect(), maps)
}

/// Orthonormal basis of the range of a projection.
fn range_basis(p: &Operator) -> Vec<nalgebra::DVector<operator::C64>> {
    let (vals, vecs) = hermitian_eigen(p);
    vals.iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.5)
        .map(|(k, _)| vecs.column(k).into_owned())
        .collect()
}

/// Indirect measurement through a probe: `Φ_a*[ρ] = tr_p((𝟙⊗P_a) U (ρ⊗ρ_p) U*)`.
/// Tensor index of `|i⟩⊗|j⟩` is `i·d_p + j`.
pub fn ancilla(u: &Operator, rho_p: &Operator, projections: &[Operator]) -> Result<Instrument> {
    let dp = rho_p.nrows();
    if dp == 0 || u.nrows() % dp != 0 {
        return Err(Error::invalid("U dimension is not a multiple of the probe dimension"));
    }
    let d = u.nrows() / dp;
    if !is_unitary(u) {
        return Err(Error::invalid("U is not unitary"));
    }
    if !is_hermitian(rho_p, 1e-10)
        || (rho_p.trace().re - 1.0).abs() > 1e-10
        || min_eigenvalue(rho_p) < -1e-12
    {
        return Err(Error::invalid("probe state is not a density matrix"));
    }
    check_projections(projections, dp)?;
    let (pvals, pvecs) = hermitian_eigen(rho_p);
    let mut maps = Vec::new();
    for p in projections {
        let mut kraus = Vec::new();
        for (m, &pm) in pvals.iter().enumerate() {
            if pm <= 1e-15 {
                continue;
            }
            let psi = pvecs.column(m);
            let inj = Operator::from_fn(d * dp, d, |r, c| if r / dp == c { psi[r % dp] } else { c64(0.0) });
            for e in range_basis(p) {
                let proj = Operator::from_fn(d, d * dp, |r, c| {
                    if c / dp == r {
                        e[c % dp].conj()
                    } else {
                        c64(0.0)
                    }
                });
                kraus.push(proj * u * &inj * c64(pm.sqrt()));
            }
        }
        if kraus.is_empty() {
            kraus.push(Operator::zeros(d, d));
        }
        maps.push(CpMap::new(kraus)?);
    }
    Instrument::new((0..maps.len()).map(|i| i.to_string()).collect(), maps)
}

/// Stationary vector of an irreducible stochastic matrix.
fn stationary(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = p.len();
    // π (P − 𝟙) = 0 with the last equation replaced by Σ π = 1.
    let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(j, i)] = p[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..n {
        a[(n - 1, i)] = 1.0;
    }
    let mut b = nalgebra::DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or_else(|| Error::invalid("singular stationarity system"))?;
    Ok(pi.iter().copied().collect())
}

fn is_irreducible_chain(p: &[Vec<f64>]) -> bool {
    let n = p.len();
    let reach = |start: usize, forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if forward { p[i][j] } else { p[j][i] };
                if w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    reach(0, true) && reach(0, false)
}

/// Classical Markov chain as a process on `ℂ^n`. The alphabet is the set of
/// pairs `i>j` with `P_ij > 0` or `P_ji > 0`, so that it is closed under
/// `θ(i>j) = j>i`; letter `i>j` has Kraus operator `√P_ij |j⟩⟨i|`.
pub fn classical_markov(p: &[Vec<f64>]) -> Result<Process> {
    let n = p.len();
    if n == 0 || p.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("transition matrix must be square and nonempty"));
    }
    for row in p {
        if row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid("negative or non-finite transition probability"));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("row sums to {s}")));
        }
    }
    if !is_irreducible_chain(p) {
        return Err(Error::invalid("transition matrix is reducible"));
    }
    let pi = stationary(p)?;
    if pi.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::invalid("stationary vector is not positive"));
    }
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if p[i][j] > 0.0 || p[j][i] > 0.0 {
                pairs.push((i, j));
            }
        }
    }
    let alphabet: Vec<String> = pairs.iter().map(|(i, j)| format!("{i}>{j}")).collect();
    let maps = pairs
        .iter()
        .map(|&(i, j)| CpMap::new(vec![matrix_unit(n, j, i) * c64(p[i][j].sqrt())]))
        .collect::<Result<Vec<_>>>()?;
    let perm = pairs
        .iter()
        .map(|&(i, j)| pairs.iter().position(|&(a, b)| a == j && b == i).expect("closed under swap"))
        .collect();
    let instrument = Instrument::new(alphabet, maps)?;
    Process::new(instrument, diag(&pi), Involution::new(perm)?)?.with_canonical_reversal()
}

/// Nearest-neighbour walk on a ring of `n ≥ 3` sites: forward with
/// probability `q`, backward with `1 − q`.
pub fn markov_cycle(n: usize, q: f64) -> Result<Process> {
    if n < 3 {
        return Err(Error::invalid("cycle needs at least 3 sites"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid("q must lie in [0, 1]"));
    }
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        p[i][(i + 1) % n] += q;
        p[i][(i + n - 1) % n] += 1.0 - q;
    }
    classical_markov(&p)
}

/// i.i.d. two-outcome process on `ℂ`: letters `a`, `b` with probabilities
/// `p`, `1 − p`, and `θ` swapping them.
pub fn bernoulli(p: f64) -> Result<Process> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("p must lie in (0, 1)"));
    }
    let instrument = Instrument::new(labels(&["a", "b"]), vec![CpMap::scalar(1, p), CpMap::scalar(1, 1.0 - p)])?;
    Process::new(instrument, identity(1), Involution::swap(2, 0, 1))?.with_canonical_reversal()
}

/// One-outcome process on `ℂ^d` with `Φ_a = id`.
pub fn trivial(d: usize) -> Result<Process> {
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let instrument = Instrument::new(labels(&["a"]), vec![CpMap::identity(d)])?;
    Process::new(instrument, identity(d) * c64(1.0 / d as f64), Involution::identity(1))?
        .with_canonical_reversal()
}

/// `X ↦ tr(ρX)𝟙`, unital with `Ψ*[ρ] = ρ` and positivity improving when `ρ > 0`.
pub fn replacement_map(rho: &Operator) -> Result<CpMap> {
    let d = rho.nrows();
    let (vals, vecs) = hermitian_eigen(rho);
    let mut kraus = Vec::new();
    for (i, &l) in vals.iter().enumerate() {
        if l <= 0.0 {
            continue;
        }
        let e = vecs.column(i);
        for j in 0..d {
            let k = Operator::from_fn(d, d, |r, c| if c == j { e[r] * c64(l.sqrt()) } else { c64(0.0) });
            kraus.push(k);
        }
    }
    CpMap::new(kraus)
}

/// Random process on `ℂ^d` with `letters` outcomes and up to
/// `max_kraus` Kraus operators per letter; `θ` is a random involution and
/// the canonical reversal is attached. Generic draws are primitive, so the
/// invariant state is unique and faithful.
pub fn random_process(d: usize, letters: usize, max_kraus: usize, seed: u64) -> Result<Process> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = (0..letters).map(|_| rng.random_range(1..=max_kraus.max(1))).collect();
    let groups = operator::random_groups(&mut rng, d, &sizes);
    let maps = operator::normalize_groups(groups);
    let instrument = Instrument::new(default_labels(letters), maps)?;
    let mut perm: Vec<usize> = (0..letters).collect();
    let mut free: Vec<usize> = (0..letters).collect();
    while free.len() >= 2 {
        let i = free.remove(rng.random_range(0..free.len()));
        if rng.random_bool(0.6) {
            let j = free.remove(rng.random_range(0..free.len()));
            perm[i] = j;
            perm[j] = i;
        }
    }
    Process::with_invariant_state(instrument, Involution::new(perm)?)?.with_canonical_reversal()
}

/// `(𝒥₁⊗𝒥₂, ρ₁⊗ρ₂)` with letters `a:b` in lexicographic order.
pub fn product(p1: &Process, p2: &Process) -> Result<Process> {
    let (i1, i2) = (p1.instrument(), p2.instrument());
    let mut alphabet = Vec::new();
    let mut maps = Vec::new();
    let mut perm = Vec::new();
    for a in 0..i1.len() {
        for b in 0..i2.len() {
            alphabet.push(format!("{}:{}", i1.label(a), i2.label(b)));
            maps.push(tensor(i1.map(a), i2.map(b)));
            perm.push(p1.theta().apply(a) * i2.len() + p2.theta().apply(b));
        }
    }
    let instrument = Instrument::new(alphabet, maps)?;
    let rho = kron(p1.rho(), p2.rho());
    let theta = Involution::new(perm)?;
    let p = if p1.is_relaxed() || p2.is_relaxed() {
        Process::relaxed(instrument, rho, theta)?
    } else {
        Process::new(instrument, rho, theta)?
    };
    match (p1.reversal(), p2.reversal()) {
        (Some(r1), Some(r2)) => {
            let r = product(r1, r2)?;
            p.with_reversal(r)
        }
        _ => Ok(p.try_canonical()),
    }
}

/// Embed `X` into the `block` of a direct sum with block sizes `d1`, `d2`.
fn embed(x: &Operator, d1: usize, d2: usize, block: usize) -> Operator {
    let mut out = Operator::zeros(d1 + d2, d1 + d2);
    let off = if block == 0 { 0 } else { d1 };
    out.view_mut((off, off), (x.nrows(), x.ncols())).copy_from(x);
    out
}

/// `(𝒥₁⊕𝒥₂, μρ₁⊕(1−μ)ρ₂)`. Labels listed in `overlap` are identified
/// between the two alphabets; any other shared label is an error.
pub fn sum(p1: &Process, p2: &Process, mu: f64, overlap: &[&str]) -> Result<Process> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::invalid("mu must lie in (0, 1)"));
    }
    let (i1, i2) = (p1.instrument(), p2.instrument());
    for l in overlap {
        if i1.index_of(l).is_none() || i2.index_of(l).is_none() {
            return Err(Error::invalid(format!("overlap label `{l}` is not in both alphabets")));
        }
    }
    for l in i1.alphabet() {
        if i2.index_of(l).is_some() && !overlap.contains(&l.as_str()) {
            return Err(Error::invalid(format!("label `{l}` occurs in both alphabets but is not declared as overlap")));
        }
    }
    for l in overlap {
        let (a1, a2) = (i1.index_of(l).unwrap_or(0), i2.index_of(l).unwrap_or(0));
        if i1.label(p1.theta().apply(a1)) != i2.label(p2.theta().apply(a2)) {
            return Err(Error::invalid(format!("involutions disagree on overlap label `{l}`")));
        }
    }
    let (d1, d2) = (i1.dim(), i2.dim());
    let mut alphabet: Vec<String> = i1.alphabet().to_vec();
    alphabet.extend(i2.alphabet().iter().filter(|l| i1.index_of(l).is_none()).cloned());
    let mut maps = Vec::new();
    for l in &alphabet {
        let mut kraus = Vec::new();
        if let Some(a) = i1.index_of(l) {
            kraus.extend(i1.map(a).kraus().iter().map(|v| embed(v, d1, d2, 0)));
        }
        if let Some(b) = i2.index_of(l) {
            kraus.extend(i2.map(b).kraus().iter().map(|v| embed(v, d1, d2, 1)));
        }
        maps.push(CpMap::new(kraus)?);
    }
    let perm = alphabet
        .iter()
        .map(|l| {
            let image = match i1.index_of(l) {
                Some(a) => i1.label(p1.theta().apply(a)),
                None => {
                    let b = i2.index_of(l).expect("label from one of the alphabets");
                    i2.label(p2.theta().apply(b))
                }
            };
            alphabet.iter().position(|x| x == image).expect("image in merged alphabet")
        })
        .collect();
    let rho = embed(p1.rho(), d1, d2, 0) * c64(mu) + embed(p2.rho(), d1, d2, 1) * c64(1.0 - mu);
    let p = Process::new(Instrument::new(alphabet, maps)?, rho, Involution::new(perm)?)?;
    match (p1.reversal(), p2.reversal()) {
        (Some(r1), Some(r2)) => {
            let r = sum(r1, r2, mu, overlap)?;
            p.with_reversal(r)
        }
        _ => Ok(p.try_canonical()),
    }
}

/// Coarse graining `Φ₂_b = Σ_a M_ab Φ₁_a` with `M` row-stochastic
/// (`ℓ₁ × ℓ₂`), requiring `M_{θ₁(a)θ₂(b)} = M_ab`.
pub fn coarse_grain(
    p: &Process,
    m: &[Vec<f64>],
    new_alphabet: Vec<String>,
    new_theta: Involution,
) -> Result<Process> {
    let instr = p.instrument();
    let l1 = instr.len();
    let l2 = new_alphabet.len();
    if m.len() != l1 || m.iter().any(|r| r.len() != l2) {
        return Err(Error::invalid(format!("M must be {l1}×{l2}")));
    }
    if new_theta.len() != l2 {
        return Err(Error::invalid("new theta and new alphabet have different sizes"));
    }
    for (a, row) in m.iter().enumerate() {
        if row.iter().any(|&x| !(x >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("row {a} of M is not a probability vector")));
        }
    }
    for a in 0..l1 {
        for b in 0..l2 {
            let lhs = m[p.theta().apply(a)][new_theta.apply(b)];
            if (lhs - m[a][b]).abs() > 1e-12 {
                return Err(Error::ThetaIncompatible(format!(
                    "M[θ({})][θ({})] = {lhs} but M[{}][{}] = {}",
                    instr.label(a),
                    new_alphabet[b],
                    instr.label(a),
                    new_alphabet[b],
                    m[a][b]
                )));
            }
        }
    }
    let coarse = |src: &Instrument| -> Result<Instrument> {
        let maps = (0..l2)
            .map(|b| {
                let mut kraus = Vec::new();
                for a in 0..l1 {
                    if m[a][b] > 0.0 {
                        kraus.extend(src.map(a).kraus().iter().map(|v| v * c64(m[a][b].sqrt())));
                    }
                }
                if kraus.is_empty() {
                    kraus.push(Operator::zeros(src.dim(), src.dim()));
                }
                CpMap::new(kraus)
            })
            .collect::<Result<Vec<_>>>()?;
        Instrument::new(new_alphabet.clone(), maps)
    };
    let build = |src: &Process| -> Result<Process> {
        let instrument = coarse(src.instrument())?;
        if src.is_relaxed() {
            Process::relaxed(instrument, src.rho().clone(), new_theta.clone())
        } else {
            Process::new(instrument, src.rho().clone(), new_theta.clone())
        }
    };
    let out = build(p)?;
    match p.reversal() {
        Some(r) => out.with_reversal(build(r)?),
        None => Ok(out.try_canonical()),
    }
}

/// `(𝒥₁∘𝒥₂, ρ)` with letters `a:b` and `Φ_{a:b} = Φ₁_a ∘ Φ₂_b`.
pub fn composition(p1: &Process, p2: &Process) -> Result<Process> {
    let (i1, i2) = (p1.instrument(), p2.instrument());
    if i1.dim() != i2.dim() {
        return Err(Error::DimensionMismatch { expected: i1.dim(), found: i2.dim() });
    }
    if op_norm(&(p1.rho() - p2.rho())) > 1e-10 {
        return Err(Error::invalid("composition needs equal states"));
    }
    let total2 = i2.total();
    for a in 0..i1.len() {
        let norm = operator::commutator_norm(i1.map(a), &total2)?;
        if norm > 1e-9 {
            return Err(Error::CommutationFailure { norm });
        }
    }
    let mut alphabet = Vec::new();
    let mut maps = Vec::new();
    let mut perm = Vec::new();
    for a in 0..i1.len() {
        for b in 0..i2.len() {
            alphabet.push(format!("{}:{}", i1.label(a), i2.label(b)));
            maps.push(compose(i1.map(a), i2.map(b))?);
            perm.push(p1.theta().apply(a) * i2.len() + p2.theta().apply(b));
        }
    }
    Process::new(Instrument::new(alphabet, maps)?, p1.rho().clone(), Involution::new(perm)?)?
        .with_canonical_reversal()
}

/// Noise models for [`deform_noise`].
#[derive(Clone, Debug)]
pub enum Noise {
    /// `{(1−ε)Φ_a} ∪ {εΞ}` with a fresh, θ-fixed letter `noise`.
    FreshLetter(CpMap),
    /// `{(1−ε)Φ_a + (ε/ℓ)Ψ_a}` with each `Ψ_a` unital and `Ψ_a*[ρ] = ρ`.
    Blend(Vec<CpMap>),
}

fn check_noise_map(m: &CpMap, rho: &Operator) -> Result<()> {
    if m.dim() != rho.nrows() {
        return Err(Error::DimensionMismatch { expected: rho.nrows(), found: m.dim() });
    }
    let defect = m.unitality_defect();
    if defect > 1e-10 {
        return Err(Error::NotUnital { defect });
    }
    let defect = op_norm(&(m.schrodinger(rho) - rho));
    if defect > 1e-9 {
        return Err(Error::NotInvariant { defect });
    }
    Ok(())
}

pub const NOISE_LABEL: &str = "noise";

pub fn deform_noise(p: &Process, eps: f64, noise: &Noise) -> Result<Process> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid("epsilon must lie in (0, 1)"));
    }
    let instr = p.instrument();
    let l = instr.len();
    let (alphabet, maps, perm) = match noise {
        Noise::FreshLetter(xi) => {
            check_noise_map(xi, p.rho())?;
            if instr.index_of(NOISE_LABEL).is_some() {
                return Err(Error::invalid("alphabet already has a `noise` letter"));
            }
            let mut alphabet = instr.alphabet().to_vec();
            alphabet.push(NOISE_LABEL.to_string());
            let mut maps: Vec<CpMap> = instr.maps().iter().map(|m| m.scaled(1.0 - eps)).collect();
            maps.push(xi.scaled(eps));
            let mut perm = p.theta().perm().to_vec();
            perm.push(l);
            (alphabet, maps, perm)
        }
        Noise::Blend(psis) => {
            if psis.len() != l {
                return Err(Error::invalid("blend needs one noise map per letter"));
            }
            for psi in psis {
                check_noise_map(psi, p.rho())?;
            }
            let maps = instr
                .maps()
                .iter()
                .zip(psis)
                .map(|(m, psi)| m.scaled(1.0 - eps).plus(&psi.scaled(eps / l as f64)))
                .collect::<Result<Vec<_>>>()?;
            (instr.alphabet().to_vec(), maps, p.theta().perm().to_vec())
        }
    };
    Process::new(Instrument::new(alphabet, maps)?, p.rho().clone(), Involution::new(perm)?)?
        .with_canonical_reversal()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::real_matrix;

    #[test]
    fn validate_examples() {
        let one = Instrument::new(labels(&["a"]), vec![CpMap::identity(2)]).unwrap();
        assert!(one.validate().valid);
        let b = bernoulli(0.7).unwrap();
        let r = b.instrument().validate();
        assert!(r.valid);
        assert!((r.letters[0].epsilon - 0.7).abs() < 1e-15);
        assert!((r.letters[1].epsilon - 0.3).abs() < 1e-15);
        let bad = Instrument::new(labels(&["a", "b"]), vec![CpMap::scalar(2, 0.6), CpMap::scalar(2, 0.3)]).unwrap();
        let r = bad.validate();
        assert!(!r.valid);
        assert!((r.unitality_defect - 0.1).abs() < 1e-12);
        assert_eq!(r.failures.len(), 1);
    }

    #[test]
    fn involution_checks() {
        assert!(Involution::new(vec![1, 2, 0]).is_err());
        let t = Involution::new(vec![1, 0, 2]).unwrap();
        assert_eq!(t.reverse_word(&[0, 2, 2]), vec![2, 2, 1]);
        let ab = labels(&["a", "b", "c"]);
        let pairs = t.label_pairs(&ab);
        assert_eq!(Involution::from_label_pairs(&ab, &pairs).unwrap(), t);
    }

    #[test]
    fn von_neumann_born_rule() {
        let ps = [matrix_unit(2, 0, 0), matrix_unit(2, 1, 1)];
        let instr = von_neumann(&identity(2), &ps).unwrap();
        let rho = diag(&[0.3, 0.7]);
        let p0 = instr.map(0).schrodinger(&rho).trace().re;
        assert!((p0 - 0.3).abs() < 1e-15);
        let h = real_matrix(&[vec![1.0, 1.0], vec![1.0, -1.0]]).unwrap() * c64(0.5f64.sqrt());
        let instr = von_neumann(&h, &ps).unwrap();
        let p0 = instr.map(0).schrodinger(&diag(&[0.5, 0.5])).trace().re;
        assert!((p0 - 0.5).abs() < 1e-15);
        assert!(von_neumann(&identity(2), &[matrix_unit(2, 0, 0)]).is_err());
        let one = von_neumann(&identity(2), &[identity(2)]).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn ancilla_swap_reads_populations() {
        let mut swap = Operator::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                swap[(i * 2 + j, j * 2 + i)] = c64(1.0);
            }
        }
        let ps = [matrix_unit(2, 0, 0), matrix_unit(2, 1, 1)];
        let instr = ancilla(&swap, &matrix_unit(2, 0, 0), &ps).unwrap();
        assert!(instr.validate().valid);
        assert!(instr.maps().iter().all(|m| m.kraus().len() == 1));
        let rho = real_matrix(&[vec![0.6, 0.2], vec![0.2, 0.4]]).unwrap();
        assert!((instr.map(0).schrodinger(&rho).trace().re - 0.6).abs() < 1e-14);
        assert!((instr.map(1).schrodinger(&rho).trace().re - 0.4).abs() < 1e-14);
        let id = ancilla(&identity(4), &diag(&[0.5, 0.5]), &[identity(2)]).unwrap();
        assert_eq!(id.len(), 1);
        assert!(id.validate().valid);
    }

    #[test]
    fn markov_builder() {
        let p = markov_cycle(3, 0.8).unwrap();
        assert_eq!(p.letters(), 6);
        assert!((p.lambda0() - 1.0 / 3.0).abs() < 1e-14);
        assert!(classical_markov(&[vec![1.0, 0.0], vec![0.0, 1.0]]).is_err());
        let one = classical_markov(&[vec![1.0]]).unwrap();
        assert_eq!(one.letters(), 1);
    }

    #[test]
    fn sum_rejects_undeclared_collision() {
        let b = bernoulli(0.7).unwrap();
        let c = bernoulli(0.4).unwrap();
        assert!(sum(&b, &c, 0.5, &[]).is_err());
        let s = sum(&b, &c, 0.5, &["a", "b"]).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.letters(), 2);
    }

    #[test]
    fn composition_requires_commutation() {
        let a = random_process(2, 2, 1, 4).unwrap();
        let b = random_process(2, 2, 1, 5).unwrap();
        assert!(composition(&a, &b).is_err());
        let b1 = bernoulli(0.7).unwrap();
        let b2 = bernoulli(0.6).unwrap();
        let c = composition(&b1, &b2).unwrap();
        assert_eq!(c.letters(), 4);
    }

    #[test]
    fn coarse_grain_theta_check() {
        let b = bernoulli(0.7).unwrap();
        let bad = [vec![1.0, 0.0], vec![1.0, 0.0]];
        assert!(matches!(
            coarse_grain(&b, &bad, labels(&["x", "y"]), Involution::swap(2, 0, 1)),
            Err(Error::ThetaIncompatible(_))
        ));
        let merge = [vec![1.0], vec![1.0]];
        let c = coarse_grain(&b, &merge, labels(&["x"]), Involution::identity(1)).unwrap();
        assert_eq!(c.letters(), 1);
    }

    #[test]
    fn deform_requires_invariant_noise() {
        let p = random_process(2, 2, 2, 8).unwrap();
        let other = random_process(2, 2, 2, 9).unwrap();
        let r = deform_noise(&p, 0.1, &Noise::FreshLetter(other.instrument().total()));
        assert!(r.is_err());
        let ok = deform_noise(&p, 0.1, &Noise::FreshLetter(replacement_map(p.rho()).unwrap())).unwrap();
        assert_eq!(ok.letters(), 3);
    }
}
