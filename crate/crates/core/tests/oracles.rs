//! Monte Carlo and closed-form oracles for families, models and estimators.

use sba_core::rng::{substream, Lane};
use sba_core::{
    EstimatorBank64, Floors, InventoryModel64, ParametricFamily, QuadraticModel64, Scenario, SimulationModel,
};

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn draws(fam: ParametricFamily, theta: &[f64], n: usize, seed: u64) -> Vec<f64> {
    let sampler = fam.sampler(theta).unwrap();
    let mut rng = substream(seed, 0, 0, Lane::Aux, 0);
    (0..n).map(|_| sampler.draw::<f64>(&mut rng)).collect()
}

#[test]
fn exponential_sample_mean() {
    let xs = draws(ParametricFamily::exponential(), &[2.0], 100_000, 11);
    assert!(xs.iter().all(|&x| x >= 0.0));
    let (m, _) = mean_and_se(&xs);
    assert!((m - 2.0).abs() <= 0.05, "{m}");
}

#[test]
fn poisson_zero_mean_rejected() {
    assert!(ParametricFamily::poisson().sampler(&[0.0f64]).is_err());
}

#[test]
fn normal_moment_sample_moments() {
    let xs = draws(ParametricFamily::normal_moment(), &[0.0, 1.0], 100_000, 12);
    let (m1, se1) = mean_and_se(&xs);
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let (m2, se2) = mean_and_se(&sq);
    assert!(m1.abs() <= 4.0 * se1, "{m1}");
    assert!((m2 - 1.0).abs() <= 4.0 * se2, "{m2}");
}

fn grid() -> Vec<(ParametricFamily, Vec<f64>)> {
    vec![
        (ParametricFamily::exponential(), vec![0.5]),
        (ParametricFamily::exponential(), vec![3.0]),
        (ParametricFamily::poisson(), vec![0.7]),
        (ParametricFamily::poisson(), vec![13.0]),
        (ParametricFamily::normal_moment(), vec![1.0, 3.0]),
        (ParametricFamily::normal_moment(), vec![-2.0, 4.5]),
    ]
}

#[test]
fn moment_map_is_unbiased() {
    for (k, (fam, theta)) in grid().into_iter().enumerate() {
        let xs = draws(fam, &theta, 100_000, 100 + k as u64);
        for (a, &target) in theta.iter().enumerate() {
            let vals: Vec<f64> = xs.iter().map(|&z| fam.moment_map(z)[a]).collect();
            let (m, se) = mean_and_se(&vals);
            assert!((m - target).abs() <= 4.0 * se, "{fam:?} {theta:?} component {a}: {m} +- {se}");
        }
    }
}

#[test]
fn score_has_zero_mean() {
    for (k, (fam, theta)) in grid().into_iter().enumerate() {
        let xs = draws(fam, &theta, 100_000, 200 + k as u64);
        for a in 0..theta.len() {
            let vals: Vec<f64> = xs.iter().map(|&z| fam.score(&theta, &[z]).unwrap()[a]).collect();
            let (m, se) = mean_and_se(&vals);
            assert!(m.abs() <= 4.0 * se, "{fam:?} {theta:?} component {a}: {m} +- {se}");
        }
    }
}

#[test]
fn score_matches_finite_differences() {
    let h = 1e-5;
    for (k, (fam, theta)) in grid().into_iter().enumerate() {
        let xs = draws(fam, &theta, 5, 300 + k as u64);
        let log_q = |th: &[f64]| xs.iter().map(|&z| fam.log_density(th, z).unwrap()).sum::<f64>();
        let score = fam.score(&theta, &xs).unwrap();
        for a in 0..theta.len() {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[a] += h;
            dn[a] -= h;
            let fd = (log_q(&up) - log_q(&dn)) / (2.0 * h);
            let rel = (fd - score[a]).abs() / score[a].abs().max(1e-3);
            assert!(rel <= 1e-4, "{fam:?} {theta:?} component {a}: score {} fd {fd}", score[a]);
        }
    }
}

#[test]
fn score_hand_values() {
    let e = ParametricFamily::exponential();
    assert_eq!(e.score(&[2.0], &[2.0]).unwrap(), vec![0.0]);
    assert_eq!(e.score(&[1.0], &[2.0, 0.0]).unwrap(), vec![0.0]);
    assert_eq!(ParametricFamily::poisson().score(&[3.0], &[3.0, 3.0]).unwrap(), vec![0.0]);
}

fn simulate_quadratic(model: &QuadraticModel64, design: usize, theta: &[f64], n: usize, seed: u64) -> Vec<(f64, Vec<f64>)> {
    let fam = ParametricFamily::exponential();
    let samplers: Vec<_> = theta.iter().map(|&t| fam.sampler(&[t]).unwrap()).collect();
    let mut rng = substream(seed, 0, 0, Lane::Aux, design as u64);
    let mut sc = Scenario::with_shape(theta.len(), 1);
    (0..n)
        .map(|_| {
            sc.refill(&samplers, 1, &mut rng);
            let x = model.evaluate(design, &sc, &mut rng).unwrap();
            let scores = (0..theta.len())
                .map(|s| fam.score(&[theta[s]], sc.stream(s)).unwrap()[0])
                .collect();
            (x, scores)
        })
        .collect()
}

#[test]
fn quadratic_true_mean_matches_monte_carlo() {
    let cases: [(usize, &[f64]); 5] = [
        (0, &[2.0, 1.0]),
        (1, &[2.0, 1.0]),
        (3, &[0.5, 1.5, 0.25]),
        (2, &[1.0, 2.0, 3.0, 3.0, 2.0, 1.0]),
        (5, &[0.3]),
    ];
    for (k, (design, theta)) in cases.iter().enumerate() {
        let total: f64 = theta.iter().sum();
        let model = QuadraticModel64::centered(total, 6, theta.len(), 1.0).unwrap();
        let out = simulate_quadratic(&model, *design, theta, 1_000_000, 400 + k as u64);
        let xs: Vec<f64> = out.iter().map(|o| o.0).collect();
        let (m, se) = mean_and_se(&xs);
        let truth = model.true_mean(*design, theta).unwrap();
        assert!((m - truth).abs() <= 4.0 * se, "design {design} {theta:?}: {m} +- {se} vs {truth}");
    }
}

#[test]
fn quadratic_hand_means() {
    let model = QuadraticModel64::new(vec![3.0, 4.0, 0.0], 2, 1.0).unwrap();
    assert_eq!(model.true_mean(0, &[2.0, 1.0]).unwrap(), -5.0);
    assert_eq!(model.true_mean(1, &[2.0, 1.0]).unwrap(), -6.0);
    assert!(model.true_mean(2, &[1e-9, 1e-9]).unwrap().abs() < 1e-8);
}

#[test]
fn quadratic_estimators_at_frozen_theta() {
    let theta = [2.0, 1.0];
    let model = QuadraticModel64::centered(3.0, 3, 2, 1.0).unwrap();
    for design in 0..3 {
        let out = simulate_quadratic(&model, design, &theta, 100_000, 500 + design as u64);
        let mut bank = EstimatorBank64::new(&[ParametricFamily::exponential(); 2], 3, Floors::default());
        let xs: Vec<f64> = out.iter().map(|o| o.0).collect();
        let sc: Vec<Vec<f64>> = out.iter().map(|o| o.1.clone()).collect();
        bank.update_output(design, &xs, &sc).unwrap();
        let (_, se) = mean_and_se(&xs);
        let mu = bank.mean(design).unwrap();
        let truth = model.true_mean(design, &theta).unwrap();
        assert!((mu - truth).abs() <= 4.0 * se, "mean {mu} vs {truth}");
        let var = bank.variance(design).unwrap();
        let tv = model.true_variance(design, &theta).unwrap();
        assert!((var / tv - 1.0).abs() <= 0.10, "variance {var} vs {tv}");
    }
}

#[test]
fn quadratic_variance_matches_brute_force() {
    let theta = [2.0, 1.0];
    let model = QuadraticModel64::centered(3.0, 2, 2, 1.0).unwrap();
    let out = simulate_quadratic(&model, 1, &theta, 1_000_000, 600);
    let xs: Vec<f64> = out.iter().map(|o| o.0).collect();
    let (m, _) = mean_and_se(&xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0);
    let tv = model.true_variance(1, &theta).unwrap();
    assert!((var / tv - 1.0).abs() <= 0.03, "{var} vs {tv}");
}

#[test]
fn lr_gradient_matches_analytic_gradient() {
    let theta = [2.0, 1.0];
    let model = QuadraticModel64::centered(3.0, 3, 2, 1.0).unwrap();
    for design in [0, 2] {
        let out = simulate_quadratic(&model, design, &theta, 1_000_000, 700 + design as u64);
        let mut bank = EstimatorBank64::new(&[ParametricFamily::exponential(); 2], 3, Floors::default());
        let xs: Vec<f64> = out.iter().map(|o| o.0).collect();
        let sc: Vec<Vec<f64>> = out.iter().map(|o| o.1.clone()).collect();
        bank.update_output(design, &xs, &sc).unwrap();
        let grad = bank.gradient(design).unwrap();
        let truth = model.true_gradient(design, &theta).unwrap();
        let total: f64 = theta.iter().sum();
        for s in 0..2 {
            let hand = 2.0 * (model.points[design] - total) - 2.0 * theta[s];
            assert!((truth[s] - hand).abs() < 1e-12);
            let terms: Vec<f64> = out.iter().map(|o| o.0 * o.1[s]).collect();
            let (_, se) = mean_and_se(&terms);
            assert!((grad[s] - truth[s]).abs() <= 4.0 * se, "design {design} s {s}: {} +- {se} vs {}", grad[s], truth[s]);
        }
    }
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let model = QuadraticModel64::centered(12.0, 21, 6, 1.0).unwrap();
    let theta = [1.0, 2.0, 3.0, 3.0, 2.0, 1.0];
    let h = 1e-5;
    for design in [0, 4, 20] {
        let g = model.true_gradient(design, &theta).unwrap();
        for s in 0..6 {
            let mut up = theta;
            let mut dn = theta;
            up[s] += h;
            dn[s] -= h;
            let fd = (model.true_mean(design, &up).unwrap() - model.true_mean(design, &dn).unwrap()) / (2.0 * h);
            assert!((fd - g[s]).abs() / g[s].abs().max(1.0) <= 1e-6, "{design} {s}: {fd} vs {}", g[s]);
        }
    }
}

#[test]
fn quadratic_argmax_is_the_closest_point() {
    let model = QuadraticModel64::new((0..15).map(|i| i as f64).collect(), 3, 1.0).unwrap();
    for theta in [[0.3, 1.1, 2.05], [4.2, 0.1, 0.4], [1.0, 1.0, 1.7]] {
        let total: f64 = theta.iter().sum();
        let best = (0..15)
            .max_by(|&a, &b| model.true_mean(a, &theta).unwrap().total_cmp(&model.true_mean(b, &theta).unwrap()))
            .unwrap();
        let closest = (0..15)
            .min_by(|&a, &b| (a as f64 - total).abs().total_cmp(&(b as f64 - total).abs()))
            .unwrap();
        assert_eq!(best, closest);
    }
}

/// Exact expected negated cost with unbounded production: every period
/// starts at the order-up-to level, so `I_v = level - D_v`,
/// `R_{v-1} = D_{v-1}` for `v >= 2` and the problem reduces to a newsvendor.
fn newsvendor_mean(level: f64, total_mean: f64, periods: usize, ch: f64, cb: f64) -> f64 {
    let mut pmf = (-total_mean).exp();
    let mut over = 0.0;
    let mut under = 0.0;
    for k in 0..400 {
        let d = k as f64;
        over += pmf * (level - d).max(0.0);
        under += pmf * (d - level).max(0.0);
        pmf *= total_mean / (d + 1.0);
    }
    let v = periods as f64;
    -(ch * (v - 1.0) * total_mean + v * (ch * over + cb * under))
}

#[test]
fn inventory_oracle_matches_newsvendor() {
    let cases: [(Vec<f64>, Vec<f64>, usize); 2] = [
        (vec![5.0, 2.0], (1..=10).map(f64::from).collect(), 7),
        (vec![4.0, 4.0, 3.0, 2.0], (0..10).map(|i| 10.0 + 2.0 * i as f64).collect(), 2),
    ];
    for (theta, levels, best) in cases {
        let total: f64 = theta.iter().sum();
        let model = InventoryModel64::new(levels.clone(), 6, theta.len(), 0.5, 1.0, None).unwrap();
        let est = model.oracle(&theta, 100_000, 9).unwrap();
        let exact: Vec<f64> = levels.iter().map(|&l| newsvendor_mean(l, total, 6, 0.5, 1.0)).collect();
        let exact_best = (0..levels.len()).max_by(|&a, &b| exact[a].total_cmp(&exact[b])).unwrap();
        assert_eq!(exact_best, best);
        assert_eq!(est.best, best);
        for i in 0..levels.len() {
            assert!(
                (est.means[i] - exact[i]).abs() <= 4.0 * est.std_errors[i],
                "level {}: {} +- {} vs {}",
                levels[i],
                est.means[i],
                est.std_errors[i],
                exact[i]
            );
        }
    }
}

#[test]
fn inventory_oracle_is_chunk_reproducible() {
    let model = InventoryModel64::new(vec![4.0, 8.0], 6, 2, 0.5, 1.0, None).unwrap();
    let a = model.oracle(&[5.0, 2.0], 25_000, 3).unwrap();
    let b = model.oracle(&[5.0, 2.0], 25_000, 3).unwrap();
    assert_eq!(a, b);
    let mut merged = model.oracle_chunk(&[5.0, 2.0], 3, 0, 10_000).unwrap();
    merged.merge(&model.oracle_chunk(&[5.0, 2.0], 3, 1, 10_000).unwrap());
    merged.merge(&model.oracle_chunk(&[5.0, 2.0], 3, 2, 5_000).unwrap());
    assert_eq!(merged.estimate(), a);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn inventory_recursion_invariants(
            level in 0.0f64..30.0,
            cap in prop_oneof![Just(f64::INFINITY), 0.0f64..10.0],
            demand in proptest::collection::vec(0u32..20, 1..12),
        ) {
            let model = InventoryModel64::new(vec![level], demand.len(), 1, 0.5, 1.0, Some(cap)).unwrap();
            let d: Vec<f64> = demand.iter().map(|&x| x as f64).collect();
            let trace = model.trace(level, d.iter().copied());
            let mut inv = level;
            let mut prod = 0.0;
            for (p, &dv) in trace.iter().zip(&d) {
                prop_assert_eq!(p.inventory, inv + prod - dv);
                prop_assert!(p.production >= 0.0);
                prop_assert!(p.production <= cap);
                inv = p.inventory;
                prod = p.production;
            }
        }
    }
}
