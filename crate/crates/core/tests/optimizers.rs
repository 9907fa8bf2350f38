use proptest::prelude::*;
use sacasscf::optimize::*;

fn budget(max_evals: usize, bounds: Option<Vec<(f64, f64)>>) -> OptimizerBudget {
    OptimizerBudget { max_evals, tol: 1e-8, bounds }
}

fn check_trace(r: &OptResult, max_evals: usize) {
    assert!(r.eval_trace.len() <= max_evals);
    let min = r.eval_trace.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
    assert_eq!(r.best_value, min);
    assert!(r.eval_trace.iter().any(|(x, v)| *x == r.best_params && *v == r.best_value));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn cobyla_finds_the_minimum_of_a_convex_quadratic(centre in prop::collection::vec(-1.0f64..1.0, 3), w in prop::collection::vec(0.5f64..3.0, 3)) {
        let mut f = |x: &[f64]| x.iter().zip(&centre).zip(&w).map(|((a, c), w)| w * (a - c) * (a - c)).sum::<f64>();
        let r = cobyla_minimize(&mut f, &[0.0; 3], &budget(2000, None)).unwrap();
        check_trace(&r, 2000);
        prop_assert!(r.converged);
        prop_assert!(r.best_value < 1e-8, "{}", r.best_value);
        for (a, c) in r.best_params.iter().zip(&centre) {
            prop_assert!((a - c).abs() < 1e-3);
        }
    }

    #[test]
    fn cobyla_stays_inside_bounds(lo in -2.0f64..-0.5, hi in 0.5f64..2.0) {
        let mut f = |x: &[f64]| -x[0] + x[1] * x[1];
        let b = vec![(lo, hi), (lo, hi)];
        let r = cobyla_minimize(&mut f, &[0.0, 0.3], &budget(500, Some(b))).unwrap();
        prop_assert!(r.eval_trace.iter().all(|(x, _)| x.iter().all(|v| (lo..=hi).contains(v))));
        prop_assert!((r.best_params[0] - hi).abs() < 1e-4);
    }
}

#[test]
fn cobyla_solves_the_rosenbrock_valley() {
    let mut f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
    let r = cobyla_minimize(&mut f, &[-1.2, 1.0], &budget(20000, None)).unwrap();
    assert!(r.best_value < 1e-4, "{}", r.best_value);
}

#[test]
fn cobyla_reports_an_exhausted_budget() {
    let mut f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 2.0).powi(2);
    let r = cobyla_minimize(&mut f, &[0.0, 0.0], &budget(10, None)).unwrap();
    assert_eq!(r.eval_trace.len(), 10);
    assert_eq!(r.reason, StopReason::Budget);
    assert!(!r.converged);
    check_trace(&r, 10);
}

#[test]
fn invalid_budgets_are_rejected() {
    let mut f = |x: &[f64]| x[0];
    assert!(cobyla_minimize(&mut f, &[0.0], &budget(0, None)).is_err());
    assert!(cobyla_minimize(&mut f, &[0.0], &OptimizerBudget { max_evals: 5, tol: 0.0, bounds: None }).is_err());
    assert!(cobyla_minimize(&mut f, &[0.0], &budget(5, Some(vec![(1.0, 0.0)]))).is_err());
    assert!(cobyla_minimize(&mut f, &[0.0], &budget(5, Some(vec![(0.0, 1.0), (0.0, 1.0)]))).is_err());
}

#[test]
fn bayes_locates_a_periodic_minimum_within_a_small_budget() {
    let b = vec![(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2); 2];
    let mut f = |x: &[f64]| 2.0 - (x[0] - 0.3).cos() - (x[1] + 0.5).cos();
    let r = bayes_minimize(&mut f, &budget(44, Some(b.clone())), 3).unwrap();
    check_trace(&r, 44);
    assert!(r.best_value < 1e-2, "{}", r.best_value);
    assert!(r.eval_trace.iter().all(|(x, _)| x.iter().zip(&b).all(|(v, (lo, hi))| (*lo..=*hi).contains(v))));
    let again = bayes_minimize(&mut f, &budget(44, Some(b)), 3).unwrap();
    assert_eq!(r.eval_trace, again.eval_trace);
}

#[test]
fn bayes_evaluates_the_warm_start_first() {
    let b = vec![(-1.0, 1.0)];
    let mut f = |x: &[f64]| (x[0] - 0.2).powi(2);
    let opts = BayesOptions { x0: Some(vec![0.25]), ..BayesOptions::default() };
    let r = bayes_minimize_with(&mut f, &budget(12, Some(b)), 1, &opts).unwrap();
    assert_eq!(r.eval_trace[0].0, vec![0.25]);
    assert!(r.best_value <= 0.0025);
}

#[test]
fn bayes_tolerates_noisy_objectives() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let b = vec![(-1.5, 1.5)];
    let mut f = |x: &[f64]| (x[0] - 0.7).powi(2) + rng.random_range(-0.01..0.01);
    let opts = BayesOptions { acquisition: Acquisition::LowerConfidenceBound, ..BayesOptions::default() };
    let r = bayes_minimize_with(&mut f, &budget(22, Some(b)), 8, &opts).unwrap();
    assert!((r.best_params[0] - 0.7).abs() < 0.25, "{:?}", r.best_params);
}
