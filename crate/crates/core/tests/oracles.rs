//! Frozen reference values for the Bernoulli and Markov-cycle oracles and
//! a few small quantum examples.

use qmep::assumptions::{check_A, check_D, ergodicity_report, estimate_C_constants, Status};
use qmep::entropic::{
    ep_bounds, ep_monte_carlo, mean_sigma, renyi_pressure, strict_positivity_ceiling, table_entropy,
};
use qmep::fluctuation::{check_jarzynski, sigma_law};
use qmep::hypotest::{stein_from_table, test_errors};
use qmep::instrument::{
    bernoulli, classical_markov, deform_noise, markov_cycle, product, sum, von_neumann, Noise,
};
use qmep::operator::{c64, identity, matrix_unit, op_norm, real_matrix, spectral_report, CpMap, Picture};
use qmep::pathspace::{sample_batch, word_at, PathCache, PathTable};
use qmep::reversal::{canonical_or, verify_or};

const CAP: usize = 1 << 21;
const BERNOULLI_EP: f64 = 0.338_919_144_154_881_4;

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
}

fn cycle_matrix(q: f64) -> Vec<Vec<f64>> {
    vec![vec![0.0, q, 1.0 - q], vec![1.0 - q, 0.0, q], vec![q, 1.0 - q, 0.0]]
}

#[test]
fn cycle_total_map_restricts_to_markov_matrix() {
    let p = markov_cycle(3, 0.8).unwrap();
    let total = p.instrument().total();
    let m = cycle_matrix(0.8);
    // Heisenberg action on diagonal f gives P f.
    for j in 0..3 {
        let image = total.apply(&matrix_unit(3, j, j), Picture::Heisenberg).unwrap();
        for i in 0..3 {
            close(image[(i, i)].re, m[i][j], 1e-14);
        }
    }
}

#[test]
fn cycle_spectrum_and_state() {
    let p = markov_cycle(3, 0.8).unwrap();
    let diag_part = p.rho().diagonal();
    for i in 0..3 {
        close(diag_part[i].re, 1.0 / 3.0, 1e-12);
    }
    close(p.lambda0(), 1.0 / 3.0, 1e-12);
    // Classical chain: the Markov spectrum is {1, ω-pair with modulus √(1 − 3q(1−q))}.
    let second = (1.0f64 - 3.0 * 0.8 * 0.2).sqrt();
    let report = spectral_report(&p.instrument().total(), 1e-8).unwrap();
    assert_eq!(report.peripheral_count, 1);
    close(report.gap, -second.ln(), 1e-9);
}

#[test]
fn classical_ep_values() {
    let two = classical_markov(&[vec![0.7, 0.3], vec![0.6, 0.4]]).unwrap();
    let cache = PathCache::new(&two, CAP);
    for t in 1..=6 {
        assert!(mean_sigma(&cache, t).unwrap().mean_sigma.abs() < 1e-12);
    }
    let p = markov_cycle(3, 0.8).unwrap();
    let mc = ep_monte_carlo(&p, 200, 10_000, 3).unwrap();
    close(mc.mean, 0.6 * 4f64.ln(), 0.02);
    let cache = PathCache::new(&p, CAP);
    let s = mean_sigma(&cache, 5).unwrap();
    assert!((s.mean_sigma + p.lambda0().ln()) / 5.0 <= 0.831_777 + 1e-6);
}

#[test]
fn bernoulli_reference_values() {
    let p = bernoulli(0.7).unwrap();
    let cache = PathCache::new(&p, CAP);
    close(mean_sigma(&cache, 3).unwrap().mean_sigma, 1.016_757, 1e-6);
    let bounds = ep_bounds(&cache, 4).unwrap();
    close(bounds.lower_bound, BERNOULLI_EP, 1e-12);
    close(strict_positivity_ceiling(&p).unwrap(), 1.203_973, 1e-6);
    close(renyi_pressure(&cache, 0.5, 6).unwrap(), 6.0 * (2.0 * 0.21f64.sqrt()).ln(), 1e-12);
    for t in 1..=6 {
        close(table_entropy(&cache.table(t).unwrap()) / t as f64, 0.610_864, 1e-6);
    }
    close(check_jarzynski(&cache, 4).unwrap().inequality_value, BERNOULLI_EP, 1e-9);
    let mc = ep_monte_carlo(&p, 200, 10_000, 5).unwrap();
    close(mc.mean, BERNOULLI_EP, 0.01);
}

#[test]
fn bernoulli_sampling_frequency() {
    let p = bernoulli(0.7).unwrap();
    let runs = sample_batch(&p, 1, 100_000, 17);
    let a = runs.iter().filter(|r| r.word[0] == 0).count() as f64 / runs.len() as f64;
    close(a, 0.7, 0.005);
}

#[test]
fn bernoulli_reversal_and_law() {
    let p = bernoulli(0.7).unwrap();
    let or = canonical_or(&p).unwrap().process;
    close(or.instrument().map(0).kraus()[0][(0, 0)].norm_sqr(), 0.3, 1e-15);
    close(or.instrument().map(1).kraus()[0][(0, 0)].norm_sqr(), 0.7, 1e-15);
    let law = sigma_law(&PathCache::new(&p, CAP), 2).unwrap();
    let q = law.atom(-(7.0f64 / 3.0).ln()).unwrap();
    close(q.mass_p, 0.09, 1e-15);
    close(q.mass_p, 9.0 / 49.0 * law.atom((7.0f64 / 3.0).ln()).unwrap().mass_p, 1e-15);
}

#[test]
fn canonical_reversal_of_measurements() {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h = real_matrix(&[vec![s, s], vec![s, -s]]).unwrap();
    let instr = von_neumann(&h, &[matrix_unit(2, 0, 0), matrix_unit(2, 1, 1)]).unwrap();
    let p = qmep::instrument::Process::with_invariant_state(instr, qmep::instrument::Involution::identity(2))
        .unwrap()
        .with_canonical_reversal()
        .unwrap();
    let t1 = PathCache::new(&p, CAP).table(1).unwrap();
    close(t1.p(0), 0.5, 1e-12);
    close(t1.p(1), 0.5, 1e-12);
    let report = verify_or(&p, p.reversal().unwrap(), 8, 1e-10, CAP).unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn self_dual_identity_theta_has_equal_measures() {
    // Detailed balance: reversing every transition leaves the measure unchanged.
    let p = classical_markov(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    let cache = PathCache::new(&p, CAP);
    for t in 1..=8 {
        let tab = cache.table(t).unwrap();
        for i in 0..tab.len() {
            let (a, b) = (tab.log_p()[i], tab.log_p_hat()[i]);
            assert!(a == b || (a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn products_double_entropy_production() {
    let p = bernoulli(0.7).unwrap();
    let pp = product(&p, &p).unwrap();
    let (c, cc) = (PathCache::new(&p, CAP), PathCache::new(&pp, CAP));
    for t in 1..=6 {
        close(mean_sigma(&cc, t).unwrap().mean_sigma, 2.0 * mean_sigma(&c, t).unwrap().mean_sigma, 1e-12);
    }
}

#[test]
fn noise_deformation_lowers_pressure_by_at_most_log_one_minus_eps() {
    let p = bernoulli(0.7).unwrap();
    let xi = CpMap::identity(1);
    let q = deform_noise(&p, 0.1, &Noise::FreshLetter(xi)).unwrap();
    let (cp, cq) = (PathCache::new(&p, CAP), PathCache::new(&q, CAP));
    for t in 1..=8 {
        for k in 0..=10 {
            let a = k as f64 / 10.0;
            let (e, e_eps) = (renyi_pressure(&cp, a, t).unwrap(), renyi_pressure(&cq, a, t).unwrap());
            assert!(e_eps / t as f64 >= 0.9f64.ln() + e / t as f64 - 1e-12);
        }
    }
}

#[test]
fn np_and_stein_at_t1() {
    let p = bernoulli(0.7).unwrap();
    let tab = PathCache::new(&p, CAP).table(1).unwrap();
    let (i, ii) = test_errors(&tab, &[true, false]);
    close(i, 0.3, 1e-15);
    close(ii, 0.3, 1e-15);
}

/// Smallest `ℙ̂(𝒯)` over all subsets with `ℙ(𝒯) ≥ 1 − ε`.
fn exhaustive_stein(tab: &PathTable, eps: f64) -> f64 {
    let n = tab.len();
    (0u64..1 << n)
        .filter_map(|mask| {
            let members: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let (type_i, type_ii) = test_errors(tab, &members);
            (type_i <= eps + 1e-12).then_some(type_ii)
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn greedy_stein_within_one_atom_of_optimum() {
    for p in [bernoulli(0.7).unwrap(), bernoulli(0.55).unwrap()] {
        let cache = PathCache::new(&p, CAP);
        for t in 1..=3 {
            let tab = cache.table(t).unwrap();
            let law = sigma_law(&cache, t).unwrap();
            let atom = law.atoms.iter().map(|a| a.mass_p_hat).fold(0.0, f64::max);
            for eps in [0.1, 0.2, 0.35, 0.5] {
                let greedy = stein_from_table(&tab, eps).unwrap().value;
                let best = exhaustive_stein(&tab, eps);
                assert!(greedy >= best - 1e-12 && greedy <= best + atom + 1e-12, "T={t} ε={eps}");
            }
        }
    }
}

#[test]
fn assumption_oracles() {
    let cycle = markov_cycle(3, 0.8).unwrap();
    assert_eq!(check_A(&cycle).status, Status::Certified);
    let c = estimate_C_constants(&cycle, 2, 4, CAP).unwrap();
    assert_eq!(c.c_by_tau[0], 0.0);
    assert!(c.c_by_tau[2] > 0.0);
    let d = check_D(&cycle, 4, CAP, 0);
    assert_eq!(d.status, Status::Refuted);
    let b = bernoulli(0.7).unwrap();
    let cb = estimate_C_constants(&b, 0, 3, CAP).unwrap();
    close(cb.c_by_tau[0], 1.0, 1e-12);
    let db = check_D(&b, 3, CAP, 0);
    assert_eq!(db.status, Status::Certified);
    close(db.constants.d0.unwrap(), 1.0, 1e-12);
}

#[test]
fn disjoint_sum_is_not_ergodic() {
    let (p1, p2) = (bernoulli(0.7).unwrap(), bernoulli(0.4).unwrap());
    let s = sum(&p1, &p2, 0.5, &["a", "b"]).unwrap();
    let report = ergodicity_report(&s, None).unwrap();
    assert!(!report.ergodic);
    assert_eq!(report.spectral.multiplicity_one, 2);
}

#[test]
fn identity_and_scalars() {
    let id = CpMap::identity(2);
    let x = real_matrix(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    assert_eq!(id.heisenberg(&x), x);
    let half = CpMap::scalar(2, 0.5);
    assert!(op_norm(&(half.heisenberg(&identity(2)) - identity(2) * c64(0.5))) < 1e-15);
    assert_eq!(word_at(3, 2, 2), vec![1, 1]);
}
