//! Complex operators, CP maps in Kraus form, superoperators and the
//! structural tests built on them.
//!
//! Conventions: a [`CpMap`] with Kraus family `{V_k}` acts on observables as
//! `Φ[X] = Σ V_k* X V_k` (Heisenberg) and on states as `Φ*[ρ] = Σ V_k ρ V_k*`
//! (Schrödinger). Superoperators use column stacking,
//! `vec(X)[i + j·d] = X[i, j]`, so that `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Operator = DMatrix<C64>;

pub const UNITALITY_TOL: f64 = 1e-10;
pub const EIGEN_CLUSTER_TOL: f64 = 1e-8;
pub const STRICT_POSITIVITY_TOL: f64 = 1e-12;
pub const INVARIANCE_TOL: f64 = 1e-10;

const SCHUR_MAX_ITER: usize = 100_000;

/// Numerical tolerances used across the crate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub unitality: f64,
    pub eigen_cluster: f64,
    pub strict_positivity: f64,
    pub invariance: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            unitality: UNITALITY_TOL,
            eigen_cluster: EIGEN_CLUSTER_TOL,
            strict_positivity: STRICT_POSITIVITY_TOL,
            invariance: INVARIANCE_TOL,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Picture {
    Heisenberg,
    Schrodinger,
}

pub fn c64(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(d: usize) -> Operator {
    Operator::identity(d, d)
}

/// Real diagonal operator.
pub fn diag(values: &[f64]) -> Operator {
    let n = values.len();
    Operator::from_fn(n, n, |i, j| if i == j { c64(values[i]) } else { C64::new(0.0, 0.0) })
}

/// Operator from real entries given row by row.
pub fn real_matrix(rows: &[Vec<f64>]) -> Result<Operator> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("matrix must be square and nonempty"));
    }
    Ok(Operator::from_fn(n, n, |i, j| c64(rows[i][j])))
}

/// `|i⟩⟨j|` on dimension `d`.
pub fn matrix_unit(d: usize, i: usize, j: usize) -> Operator {
    let mut m = Operator::zeros(d, d);
    m[(i, j)] = c64(1.0);
    m
}

pub fn kron(a: &Operator, b: &Operator) -> Operator {
    a.kronecker(b)
}

pub fn trace(a: &Operator) -> C64 {
    a.trace()
}

/// Column-stacking vectorization.
pub fn vec_op(a: &Operator) -> DVector<C64> {
    DVector::from_column_slice(a.as_slice())
}

pub fn unvec(v: &DVector<C64>, d: usize) -> Operator {
    Operator::from_column_slice(d, d, v.as_slice())
}

pub fn hermitian_part(a: &Operator) -> Operator {
    (a + a.adjoint()) * c64(0.5)
}

pub fn is_hermitian(a: &Operator, tol: f64) -> bool {
    a.is_square() && (a - a.adjoint()).iter().all(|z| z.norm() <= tol)
}

/// Largest singular value.
pub fn op_norm(a: &Operator) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

/// Eigenvalues (ascending) and eigenvectors of the Hermitian part of `a`.
pub fn hermitian_eigen(a: &Operator) -> (Vec<f64>, Operator) {
    let h = hermitian_part(a);
    let eig = h.symmetric_eigen();
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let vals = idx.iter().map(|&k| eig.eigenvalues[k]).collect();
    let n = a.nrows();
    let vecs = Operator::from_fn(n, idx.len(), |i, j| eig.eigenvectors[(i, idx[j])]);
    (vals, vecs)
}

pub fn min_eigenvalue(a: &Operator) -> f64 {
    hermitian_eigen(a).0.first().copied().unwrap_or(f64::NAN)
}

/// `f(A)` for Hermitian `A` through its spectral decomposition.
pub fn hermitian_fn(a: &Operator, f: impl Fn(f64) -> f64) -> Operator {
    if is_real_diagonal(a) {
        let n = a.nrows();
        return Operator::from_fn(n, n, |i, j| if i == j { c64(f(a[(i, i)].re)) } else { c64(0.0) });
    }
    let (vals, vecs) = hermitian_eigen(a);
    let fd = DMatrix::from_fn(vals.len(), vals.len(), |i, j| {
        if i == j {
            c64(f(vals[i]))
        } else {
            c64(0.0)
        }
    });
    &vecs * fd * vecs.adjoint()
}

/// Diagonal with real diagonal entries, exactly. Such operators take a
/// fast exact path in functional calculus so structural zeros survive.
pub fn is_real_diagonal(a: &Operator) -> bool {
    a.is_square()
        && a.iter().enumerate().all(|(k, z)| {
            let (i, j) = (k % a.nrows(), k / a.nrows());
            if i == j {
                z.im == 0.0
            } else {
                z.re == 0.0 && z.im == 0.0
            }
        })
}

/// Positive square root of a positive semidefinite operator.
pub fn psd_sqrt(a: &Operator) -> Operator {
    hermitian_fn(a, |x| x.max(0.0).sqrt())
}

/// Inverse square root with the eigenvalue floor `floor`.
pub fn inv_sqrt_floored(a: &Operator, floor: f64) -> Operator {
    hermitian_fn(a, |x| 1.0 / x.max(floor).sqrt())
}

fn random_gaussian_matrix(rng: &mut ChaCha8Rng, d: usize) -> Operator {
    Operator::from_fn(d, d, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im)
    })
}

/// A CP map held as a Kraus family.
#[derive(Clone, Debug, PartialEq)]
pub struct CpMap {
    dim: usize,
    kraus: Vec<Operator>,
}

impl CpMap {
    pub fn new(kraus: Vec<Operator>) -> Result<Self> {
        let first = kraus.first().ok_or_else(|| Error::invalid("empty Kraus family"))?;
        let dim = first.nrows();
        if dim == 0 {
            return Err(Error::invalid("zero-dimensional operator"));
        }
        for k in &kraus {
            if !k.is_square() {
                return Err(Error::invalid("Kraus operators must be square"));
            }
            if k.nrows() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: k.nrows() });
            }
        }
        Ok(CpMap { dim, kraus })
    }

    pub fn identity(d: usize) -> Self {
        CpMap { dim: d, kraus: vec![identity(d)] }
    }

    /// `p·id` on dimension `d`.
    pub fn scalar(d: usize, p: f64) -> Self {
        CpMap { dim: d, kraus: vec![identity(d) * c64(p.max(0.0).sqrt())] }
    }

    /// `X ↦ U* X U`, unitary conjugation in the Heisenberg picture.
    pub fn unitary(u: Operator) -> Result<Self> {
        CpMap::new(vec![u])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus(&self) -> &[Operator] {
        &self.kraus
    }

    pub fn into_kraus(self) -> Vec<Operator> {
        self.kraus
    }

    pub fn apply(&self, x: &Operator, picture: Picture) -> Result<Operator> {
        if x.nrows() != self.dim || x.ncols() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.nrows() });
        }
        Ok(match picture {
            Picture::Heisenberg => self.heisenberg(x),
            Picture::Schrodinger => self.schrodinger(x),
        })
    }

    /// `Σ V* X V`, unchecked dimensions.
    pub fn heisenberg(&self, x: &Operator) -> Operator {
        let mut out = Operator::zeros(self.dim, self.dim);
        for v in &self.kraus {
            out += v.adjoint() * x * v;
        }
        out
    }

    /// `Σ V X V*`, unchecked dimensions.
    pub fn schrodinger(&self, x: &Operator) -> Operator {
        let mut out = Operator::zeros(self.dim, self.dim);
        for v in &self.kraus {
            out += v * x * v.adjoint();
        }
        out
    }

    /// `Φ[𝟙] = Σ V* V`.
    pub fn unit_image(&self) -> Operator {
        let mut out = Operator::zeros(self.dim, self.dim);
        for v in &self.kraus {
            out += v.adjoint() * v;
        }
        out
    }

    pub fn unitality_defect(&self) -> f64 {
        op_norm(&(self.unit_image() - identity(self.dim)))
    }

    pub fn is_unital(&self, tol: f64) -> bool {
        self.unitality_defect() <= tol
    }

    /// `c·Φ` for `c ≥ 0`.
    pub fn scaled(&self, c: f64) -> CpMap {
        let s = c64(c.max(0.0).sqrt());
        CpMap { dim: self.dim, kraus: self.kraus.iter().map(|v| v * s).collect() }
    }

    /// Kraus family of `Φ + Ψ`.
    pub fn plus(&self, other: &CpMap) -> Result<CpMap> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let mut kraus = self.kraus.clone();
        kraus.extend(other.kraus.iter().cloned());
        Ok(CpMap { dim: self.dim, kraus })
    }

    /// Kraus family of `Σ Φ_i`.
    pub fn sum<'a>(maps: impl IntoIterator<Item = &'a CpMap>) -> Result<CpMap> {
        let mut it = maps.into_iter();
        let first = it.next().ok_or_else(|| Error::invalid("empty sum of maps"))?;
        let mut acc = first.clone();
        for m in it {
            acc = acc.plus(m)?;
        }
        Ok(acc)
    }

    pub fn superoperator(&self, picture: Picture) -> Operator {
        let n = self.dim * self.dim;
        let mut m = Operator::zeros(n, n);
        for v in &self.kraus {
            match picture {
                Picture::Heisenberg => m += v.transpose().kronecker(&v.adjoint()),
                Picture::Schrodinger => m += v.conjugate().kronecker(v),
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.kraus.iter().all(|v| v.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }
}

/// Heisenberg superoperator matrix, `vec(Φ[X]) = M vec(X)`.
pub fn superoperator_matrix(map: &CpMap) -> Operator {
    map.superoperator(Picture::Heisenberg)
}

/// Operator norm of the superoperator commutator `[Φ_1, Φ_2]`.
pub fn commutator_norm(a: &CpMap, b: &CpMap) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, found: b.dim });
    }
    let ma = superoperator_matrix(a);
    let mb = superoperator_matrix(b);
    Ok(op_norm(&(&ma * &mb - &mb * &ma)))
}

/// `Φ ⊗ Ψ` with Kraus `{V_i ⊗ W_j}`.
pub fn tensor(a: &CpMap, b: &CpMap) -> CpMap {
    let mut kraus = Vec::with_capacity(a.kraus.len() * b.kraus.len());
    for v in &a.kraus {
        for w in &b.kraus {
            kraus.push(kron(v, w));
        }
    }
    CpMap { dim: a.dim * b.dim, kraus }
}

/// `a ∘ b` in the Heisenberg picture, Kraus `{W_j V_i}`.
pub fn compose(a: &CpMap, b: &CpMap) -> Result<CpMap> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, found: b.dim });
    }
    let mut kraus = Vec::with_capacity(a.kraus.len() * b.kraus.len());
    for v in &a.kraus {
        for w in &b.kraus {
            kraus.push(w * v);
        }
    }
    Ok(CpMap { dim: a.dim, kraus })
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub spectral_radius: f64,
    pub eigenvalue_one_simple: bool,
    /// Eigenvalues within tolerance of 1, counted with algebraic multiplicity.
    pub multiplicity_one: usize,
    /// `dim ker(M − 𝟙)`.
    pub fixed_space_dim: usize,
    pub peripheral_count: usize,
    /// `−log|λ₂|`; `+∞` when there is no subleading eigenvalue or it is 0.
    pub gap: f64,
    pub has_subleading: bool,
    pub unital: bool,
    /// Eigenvalues sorted by decreasing modulus.
    #[serde(skip)]
    pub eigenvalues: Vec<C64>,
}

fn schur_eigenvalues(m: &Operator) -> Result<Vec<C64>> {
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::EigenFailure("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    let vals: Vec<C64> = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    if vals.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }
    Ok(vals)
}

/// Numerical rank with relative threshold `tol`.
fn rank(m: &Operator, tol: f64) -> usize {
    let sv = m.clone().singular_values();
    let smax = sv.max().max(1.0);
    sv.iter().filter(|&&s| s > tol * smax).count()
}

pub fn spectral_report(map: &CpMap, tol: f64) -> Result<SpectralReport> {
    let m = superoperator_matrix(map);
    let n = m.nrows();
    let mut eigenvalues = schur_eigenvalues(&m)?;
    eigenvalues.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let spectral_radius = eigenvalues.first().map(|z| z.norm()).unwrap_or(0.0);
    let one = c64(1.0);
    let multiplicity_one = eigenvalues.iter().filter(|z| (**z - one).norm() <= tol).count();
    let fixed_space_dim = n - rank(&(&m - Operator::identity(n, n)), tol);
    let peripheral_count = eigenvalues.iter().filter(|z| z.norm() >= 1.0 - tol).count();

    // Drop the eigenvalue nearest to 1, the remaining top modulus is λ₂.
    let mut rest = eigenvalues.clone();
    if let Some((k, _)) = rest
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| (**a - one).norm().total_cmp(&(**b - one).norm()))
    {
        rest.remove(k);
    }
    let has_subleading = !rest.is_empty();
    let second = rest.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let gap = if !has_subleading || second == 0.0 {
        f64::INFINITY
    } else if second >= 1.0 - tol {
        0.0
    } else {
        -second.ln()
    };
    Ok(SpectralReport {
        spectral_radius,
        eigenvalue_one_simple: multiplicity_one == 1 && fixed_space_dim == 1,
        multiplicity_one,
        fixed_space_dim,
        peripheral_count,
        gap,
        has_subleading,
        unital: map.is_unital(UNITALITY_TOL),
        eigenvalues,
    })
}

#[derive(Clone, Debug)]
pub struct InvariantState {
    pub rho: Operator,
    /// Smallest eigenvalue after projection onto the positive cone.
    pub min_eigenvalue: f64,
    /// Smallest eigenvalue of the Hermitized fixed vector before clipping.
    pub min_eigenvalue_raw: f64,
    pub invariance_defect: f64,
}

/// Fixed state of the Schrödinger dual of a unital map.
pub fn invariant_state(map: &CpMap, tol: f64) -> Result<InvariantState> {
    let defect = map.unitality_defect();
    if defect > UNITALITY_TOL.max(tol) {
        return Err(Error::NotUnital { defect });
    }
    let d = map.dim();
    if d == 1 {
        return Ok(InvariantState {
            rho: identity(1),
            min_eigenvalue: 1.0,
            min_eigenvalue_raw: 1.0,
            invariance_defect: 0.0,
        });
    }
    let report = spectral_report(map, tol)?;
    if report.fixed_space_dim != 1 {
        return Err(Error::NonUniqueInvariantState { fixed_dim: report.fixed_space_dim });
    }
    let n = d * d;
    let a = map.superoperator(Picture::Schrodinger) - Operator::identity(n, n);
    let svd = nalgebra::linalg::SVD::try_new(a, false, true, f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::EigenFailure("SVD did not converge".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::EigenFailure("missing singular vectors".into()))?;
    let null = v_t.row(n - 1).adjoint();
    let x = unvec(&null, d);
    let tr = x.trace();
    if tr.norm() < 1e-300 {
        return Err(Error::NotPositive { min_eigenvalue: 0.0 });
    }
    let x = hermitian_part(&(x / tr));
    let (vals, vecs) = hermitian_eigen(&x);
    let min_raw = vals[0];
    if min_raw < -tol.max(STRICT_POSITIVITY_TOL) {
        return Err(Error::NotPositive { min_eigenvalue: min_raw });
    }
    let clipped: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let dm = diag(&clipped.iter().map(|v| v / total).collect::<Vec<_>>());
    let rho = hermitian_part(&(&vecs * dm * vecs.adjoint()));
    let invariance_defect = op_norm(&(map.schrodinger(&rho) - &rho));
    if invariance_defect > INVARIANCE_TOL.max(tol) {
        return Err(Error::NotInvariant { defect: invariance_defect });
    }
    Ok(InvariantState {
        min_eigenvalue: min_eigenvalue(&rho),
        rho,
        min_eigenvalue_raw: min_raw,
        invariance_defect,
    })
}

/// Dimension of the unital algebra generated by `ops`.
pub fn algebra_dimension(ops: &[Operator]) -> usize {
    let Some(first) = ops.first() else { return 0 };
    let d = first.nrows();
    let full = d * d;
    let gens: Vec<Operator> = ops
        .iter()
        .filter_map(|g| {
            let n = g.norm();
            (n > 0.0).then(|| g / c64(n))
        })
        .collect();
    let mut basis: Vec<DVector<C64>> = Vec::new();
    let add = |m: &Operator, basis: &mut Vec<DVector<C64>>| -> Option<Operator> {
        let mut v = vec_op(m);
        let n0 = v.norm();
        if n0 == 0.0 {
            return None;
        }
        v /= c64(n0);
        for _ in 0..2 {
            for b in basis.iter() {
                let c = b.dotc(&v);
                v -= b * c;
            }
        }
        let n1 = v.norm();
        if n1 <= 1e-10 {
            return None;
        }
        v /= c64(n1);
        let out = unvec(&v, d);
        basis.push(v);
        Some(out)
    };
    let mut queue = Vec::new();
    if let Some(e) = add(&identity(d), &mut basis) {
        queue.push(e);
    }
    while let Some(b) = queue.pop() {
        for g in &gens {
            if basis.len() == full {
                return full;
            }
            if let Some(e) = add(&(g * &b), &mut basis) {
                queue.push(e);
            }
        }
    }
    basis.len()
}

/// Burnside test: the generated unital algebra is all of `M_D(ℂ)`.
pub fn is_irreducible_family(ops: &[Operator]) -> bool {
    let Some(first) = ops.first() else { return false };
    let d = first.nrows();
    if ops.iter().any(|o| o.nrows() != d || o.ncols() != d) {
        return false;
    }
    algebra_dimension(ops) == d * d
}

/// Result of the positivity-improving search.
#[derive(Clone, Debug)]
pub struct PositivityImproving {
    pub improving: bool,
    /// Smallest `min sp Φ[|φ⟩⟨φ|]` found over unit `φ`.
    pub margin: f64,
    pub witness: Option<DVector<C64>>,
}

fn unit_vector(v: DVector<C64>) -> DVector<C64> {
    let n = v.norm();
    v / c64(n)
}

fn lowest_eigvec(m: &Operator) -> (f64, DVector<C64>) {
    let (vals, vecs) = hermitian_eigen(m);
    (vals[0], vecs.column(0).into_owned())
}

fn gram(vs: impl Iterator<Item = DVector<C64>>, d: usize) -> Operator {
    vs.fold(Operator::zeros(d, d), |acc, v| acc + &v * v.adjoint())
}

/// Searches for a unit `φ` with `Φ[|φ⟩⟨φ|]` singular. In the Heisenberg
/// picture that means unit `u, φ` with `Σ_k |⟨V_k u, φ⟩|² = 0`; the bilinear
/// objective is minimised by alternating lowest eigenvectors, started from
/// the basis vectors and `trials` random vectors. A negative answer comes
/// with a witness; a positive one means no local minimum reached zero.
pub fn is_positivity_improving(map: &CpMap, trials: usize, seed: u64) -> PositivityImproving {
    let d = map.dim();
    let kraus = map.kraus();
    let adj: Vec<Operator> = kraus.iter().map(|v| v.adjoint()).collect();
    let scale = op_norm(&map.heisenberg(&identity(d))).max(f64::MIN_POSITIVE);
    let tol = 1e-10 * scale;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<DVector<C64>> = (0..d).map(|i| DVector::from_fn(d, |j, _| c64(f64::from(u8::from(i == j))))).collect();
    starts.extend((0..trials).map(|_| unit_vector(random_gaussian_matrix(&mut rng, d).column(0).into_owned())));
    let mut best = (f64::INFINITY, None);
    for mut phi in starts {
        let mut value = f64::INFINITY;
        for _ in 0..500 {
            let (_, u) = lowest_eigvec(&gram(adj.iter().map(|v| v * &phi), d));
            let (next_value, next_phi) = lowest_eigvec(&gram(kraus.iter().map(|v| v * &u), d));
            phi = next_phi;
            let done = value - next_value <= 1e-15 * scale;
            value = next_value.max(0.0);
            if done || value <= tol * 1e-3 {
                break;
            }
        }
        if value < best.0 {
            best = (value, Some(phi));
        }
    }
    let (margin, phi) = best;
    if margin <= tol {
        PositivityImproving { improving: false, margin, witness: phi }
    } else {
        PositivityImproving { improving: true, margin, witness: None }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StrictPositivity {
    pub strictly_positive: bool,
    /// `min sp(Φ[𝟙])`.
    pub epsilon: f64,
}

pub fn is_strictly_positive(map: &CpMap) -> StrictPositivity {
    strict_positivity_with(map, STRICT_POSITIVITY_TOL)
}

pub fn strict_positivity_with(map: &CpMap, tol: f64) -> StrictPositivity {
    let epsilon = min_eigenvalue(&map.unit_image());
    StrictPositivity { strictly_positive: epsilon > tol, epsilon }
}

/// Random unital CP map on dimension `d` with `k` Kraus operators.
pub fn random_unital_map(d: usize, k: usize, seed: u64) -> CpMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gs: Vec<Operator> = (0..k.max(1)).map(|_| random_gaussian_matrix(&mut rng, d)).collect();
    normalize_family(gs).into_iter().next().unwrap_or_else(|| CpMap::identity(d))
}

/// Rescale a family of Kraus groups so that the total map is unital:
/// `V ↦ V S^{-1/2}` with `S = Σ V*V`.
pub(crate) fn normalize_groups(groups: Vec<Vec<Operator>>) -> Vec<CpMap> {
    let d = groups[0][0].nrows();
    let mut s = Operator::zeros(d, d);
    for g in &groups {
        for v in g {
            s += v.adjoint() * v;
        }
    }
    let s_inv = inv_sqrt_floored(&s, 1e-300);
    groups
        .into_iter()
        .map(|g| CpMap { dim: d, kraus: g.into_iter().map(|v| v * &s_inv).collect() })
        .collect()
}

fn normalize_family(gs: Vec<Operator>) -> Vec<CpMap> {
    normalize_groups(vec![gs])
}

pub(crate) fn random_groups(rng: &mut ChaCha8Rng, d: usize, sizes: &[usize]) -> Vec<Vec<Operator>> {
    sizes
        .iter()
        .map(|&k| (0..k).map(|_| random_gaussian_matrix(rng, d)).collect())
        .collect()
}

/// JSON encoding of operators: row-major nested arrays of `[re, im]` pairs.
pub mod json {
    use super::*;
    use serde_json::Value;

    pub fn to_value(a: &Operator) -> Value {
        Value::Array(
            (0..a.nrows())
                .map(|i| {
                    Value::Array(
                        (0..a.ncols())
                            .map(|j| {
                                let z = a[(i, j)];
                                serde_json::json!([z.re, z.im])
                            })
                            .collect(),
                    )
                })
                .collect(),
        )
    }

    fn entry(v: &Value) -> Result<C64> {
        match v {
            Value::Number(n) => Ok(c64(n.as_f64().unwrap_or(f64::NAN))),
            Value::Array(p) if p.len() == 2 => {
                let re = p[0].as_f64().ok_or_else(|| Error::Format("non-numeric entry".into()))?;
                let im = p[1].as_f64().ok_or_else(|| Error::Format("non-numeric entry".into()))?;
                Ok(C64::new(re, im))
            }
            _ => Err(Error::Format(format!("bad matrix entry {v}"))),
        }
    }

    /// Accepts nested rows, or a flat row-major list of `d²` entries.
    pub fn from_value(v: &Value) -> Result<Operator> {
        let arr = v.as_array().ok_or_else(|| Error::Format("matrix must be an array".into()))?;
        if arr.is_empty() {
            return Err(Error::Format("empty matrix".into()));
        }
        if arr.iter().all(|r| r.as_array().is_some_and(|r| r.len() == arr.len())) {
            let n = arr.len();
            let mut m = Operator::zeros(n, n);
            for (i, row) in arr.iter().enumerate() {
                for (j, e) in row.as_array().unwrap_or(&Vec::new()).iter().enumerate() {
                    m[(i, j)] = entry(e)?;
                }
            }
            return Ok(m);
        }
        let n = (arr.len() as f64).sqrt().round() as usize;
        if n * n != arr.len() {
            return Err(Error::Format(format!("cannot shape {} entries as a square matrix", arr.len())));
        }
        let mut m = Operator::zeros(n, n);
        for (k, e) in arr.iter().enumerate() {
            m[(k / n, k % n)] = entry(e)?;
        }
        Ok(m)
    }

    pub mod op {
        use super::*;
        use serde::{Deserializer, Serializer};

        pub fn serialize<S: Serializer>(a: &Operator, s: S) -> std::result::Result<S::Ok, S::Error> {
            to_value(a).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Operator, D::Error> {
            let v = Value::deserialize(d)?;
            from_value(&v).map_err(serde::de::Error::custom)
        }
    }

    pub mod op_opt {
        use super::*;
        use serde::{Deserializer, Serializer};

        pub fn serialize<S: Serializer>(a: &Option<Operator>, s: S) -> std::result::Result<S::Ok, S::Error> {
            a.as_ref().map(to_value).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Operator>, D::Error> {
            let v = Option::<Value>::deserialize(d)?;
            v.map(|v| from_value(&v)).transpose().map_err(serde::de::Error::custom)
        }
    }

    pub mod op_vec {
        use super::*;
        use serde::{Deserializer, Serializer};

        pub fn serialize<S: Serializer>(a: &[Operator], s: S) -> std::result::Result<S::Ok, S::Error> {
            a.iter().map(to_value).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Operator>, D::Error> {
            let v = Vec::<Value>::deserialize(d)?;
            v.iter().map(from_value).collect::<Result<_>>().map_err(serde::de::Error::custom)
        }
    }
}
