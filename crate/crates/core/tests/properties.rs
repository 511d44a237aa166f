use proptest::prelude::*;

use qmep::entropic::{mean_sigma, pressure_curve, renyi_pressure, unit_alpha_grid, PressureConstants};
use qmep::fluctuation::{check_fluctuation_relation, check_jarzynski, sigma_law};
use qmep::format::InstrumentFile;
use qmep::hypotest::{chernoff_ct, np_optimality_margin, stein_st};
use qmep::instrument::{bernoulli, product, random_process, Process};
use qmep::operator::{op_norm, random_unital_map, trace, Tolerances};
use qmep::pathspace::{check_subadditivity, theta_index_map, word_at, word_index, PathCache};
use qmep::reversal::verify_or;

const CAP: usize = 1 << 18;

fn process() -> impl Strategy<Value = Process> {
    (1usize..=3, 2usize..=3, 1usize..=2, any::<u64>())
        .prop_map(|(d, l, k, seed)| random_process(d, l, k, seed).expect("random process"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tables_are_normalized_and_consistent(p in process()) {
        let cache = PathCache::new(&p, CAP);
        for t in 1..=5 {
            let tab = cache.table(t).unwrap();
            prop_assert!(tab.log_normalization().abs() < 1e-10);
            prop_assert!(tab.log_normalization_hat().abs() < 1e-10);
            if t > 1 {
                let prev = cache.table(t - 1).unwrap();
                for (k, (a, b)) in tab.marginal_last().iter().zip(tab.marginal_first()).enumerate() {
                    prop_assert!((a - prev.p(k)).abs() < 1e-10);
                    prop_assert!((b - prev.p(k)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn canonical_reversal_reverses(p in process()) {
        let report = verify_or(&p, p.reversal().unwrap(), 5, 1e-10, CAP).unwrap();
        prop_assert!(report.passed, "{:?}", report.worst_defect);
    }

    #[test]
    fn sigma_is_antisymmetric(p in process()) {
        let cache = PathCache::new(&p, CAP);
        for t in 1..=5 {
            let tab = cache.table(t).unwrap();
            let theta = theta_index_map(&p, t);
            for i in 0..tab.len() {
                prop_assert_eq!(theta[theta[i]], i);
                if tab.sigma(i).is_finite() {
                    prop_assert_eq!(tab.sigma(theta[i]), -tab.sigma(i));
                }
            }
        }
    }

    #[test]
    fn measures_are_subadditive(p in process()) {
        let cache = PathCache::new(&p, CAP);
        let report = check_subadditivity(&cache, 3, 1e-12).unwrap();
        prop_assert_eq!(report.violations, 0);
    }

    #[test]
    fn fluctuation_relation_and_jarzynski(p in process()) {
        let cache = PathCache::new(&p, CAP);
        for t in 1..=6 {
            let law = sigma_law(&cache, t).unwrap();
            prop_assert!((law.total_mass() - 1.0).abs() < 1e-10);
            for a in &law.atoms {
                prop_assert!(law.atom(-a.s).is_some());
            }
            prop_assert!(check_fluctuation_relation(&law).max_relative_defect < 1e-10);
            let j = check_jarzynski(&cache, t).unwrap();
            prop_assert!(j.identity_defect < 1e-10);
            prop_assert!(j.inequality_value >= -1e-12);
        }
    }

    #[test]
    fn pressure_is_symmetric_and_convex(p in process()) {
        let cache = PathCache::new(&p, CAP);
        let grid = unit_alpha_grid(11);
        for t in [1, 3, 5] {
            let e: Vec<f64> = grid.iter().map(|&a| renyi_pressure(&cache, a, t).unwrap()).collect();
            for k in 0..e.len() {
                prop_assert!((e[k] - e[e.len() - 1 - k]).abs() < 1e-10);
                prop_assert!(e[k] <= 1e-12);
            }
            for w in e.windows(3) {
                prop_assert!(w[1] <= 0.5 * (w[0] + w[2]) + 1e-10);
            }
        }
    }

    #[test]
    fn upper_envelope_improves_under_doubling(p in process()) {
        let cache = PathCache::new(&p, CAP);
        let consts = PressureConstants::uncertified(p.lambda0());
        let curve = pressure_curve(&cache, &unit_alpha_grid(5), 1, 4, &consts).unwrap();
        for point in &curve.points {
            let up: Vec<f64> = point.rows.iter().map(|r| r.upper.unwrap()).collect();
            prop_assert!(up[0] >= point.rows[0].e_t - 1e-12);
            prop_assert!(up[1] <= up[0] + 1e-10);
            prop_assert!(up[3] <= up[1] + 1e-10);
        }
    }

    #[test]
    fn hypothesis_tests_are_consistent(p in process(), seed in any::<u64>()) {
        let cache = PathCache::new(&p, CAP);
        for t in 1..=4 {
            let c = chernoff_ct(&cache, t).unwrap();
            prop_assert!((0.0..=0.5 + 1e-12).contains(&c));
            prop_assert!(np_optimality_margin(&cache.table(t).unwrap(), 50, seed) >= -1e-12);
            let (lo, hi) = (stein_st(&cache, t, 0.1).unwrap().value, stein_st(&cache, t, 0.4).unwrap().value);
            prop_assert!(hi <= lo + 1e-12);
        }
    }

    #[test]
    fn products_add_mean_sigma(p in process(), q in 0.2f64..0.8) {
        let b = bernoulli(q).unwrap();
        let joint = product(&p, &b).unwrap();
        let (cp, cb, cj) = (PathCache::new(&p, CAP), PathCache::new(&b, CAP), PathCache::new(&joint, CAP));
        for t in 1..=3 {
            let sum = mean_sigma(&cp, t).unwrap().mean_sigma + mean_sigma(&cb, t).unwrap().mean_sigma;
            prop_assert!((mean_sigma(&cj, t).unwrap().mean_sigma - sum).abs() < 1e-9);
        }
    }

    #[test]
    fn instrument_files_round_trip(p in process()) {
        let text = InstrumentFile::from_process(&p).to_json().unwrap();
        let q = InstrumentFile::from_json(&text).unwrap().process(&Tolerances::default()).unwrap();
        let (a, b) = (PathCache::new(&p, CAP), PathCache::new(&q, CAP));
        let (ta, tb) = (a.table(3).unwrap(), b.table(3).unwrap());
        for i in 0..ta.len() {
            prop_assert!((ta.p(i) - tb.p(i)).abs() < 1e-12);
            prop_assert!((ta.p_hat(i) - tb.p_hat(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn duality_of_pictures(d in 1usize..=3, k in 1usize..=3, seed in any::<u64>()) {
        let m = random_unital_map(d, k, seed);
        let x = random_unital_map(d, 1, seed ^ 1).kraus()[0].clone();
        let y = random_unital_map(d, 1, seed ^ 2).kraus()[0].clone();
        let lhs = trace(&(m.schrodinger(&x) * &y));
        let rhs = trace(&(&x * m.heisenberg(&y)));
        prop_assert!((lhs - rhs).norm() < 1e-10);
        prop_assert!(op_norm(&(m.heisenberg(&qmep::operator::identity(d)) - qmep::operator::identity(d))) < 1e-10);
    }

    #[test]
    fn word_codec_round_trips(t in 1usize..=6, l in 1usize..=4, raw in any::<u64>()) {
        let n = l.pow(t as u32);
        let i = (raw % n as u64) as usize;
        prop_assert_eq!(word_index(&word_at(i, t, l), l), i);
    }
}
