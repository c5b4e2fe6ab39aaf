use rand::Rng;
use sba_core::rate::{pae_rate, pcs_balance_residuals, solve_input_allocation, Partition};
use sba_core::rng::{substream, Lane};
use sba_core::{PaeProblem64, PcsRateParams64, SolverOptions64};

fn random_instance(rng: &mut impl Rng) -> PaeProblem64 {
    let rows = rng.random_range(1..=3);
    let mut weights: Vec<Vec<f64>> = (0..rows)
        .map(|_| {
            (0..2)
                .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.05..5.0) })
                .collect()
        })
        .collect();
    // every stream needs at least one sensitive row
    for s in 0..2 {
        if weights.iter().all(|w| w[s] == 0.0) {
            weights[0][s] = rng.random_range(0.05..5.0);
        }
    }
    PaeProblem64 {
        sq_gaps: (0..rows).map(|_| rng.random_range(0.1..5.0)).collect(),
        weights,
        costs: vec![rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)],
        partitions: vec![Partition::new(vec![0, 1], rng.random_range(1.0..20.0))],
    }
}

fn grid_best(p: &PaeProblem64) -> f64 {
    let u = p.partitions[0].budget;
    (1..1000)
        .map(|k| {
            let f = k as f64 * 1e-3;
            let n = [f * u / p.costs[0], (1.0 - f) * u / p.costs[1]];
            pae_rate(&n, p).unwrap()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn solver_beats_grid_search_on_random_instances() {
    let mut rng = substream(2024, 0, 0, Lane::Aux, 0);
    let opts = SolverOptions64::default();
    for case in 0..50 {
        let p = random_instance(&mut rng);
        let sol = solve_input_allocation(&p, &opts).unwrap();
        let grid = grid_best(&p);
        assert!(sol.achieved_rate >= grid - 1e-3, "case {case}: {} < {grid}", sol.achieved_rate);
        assert!(sol.kkt_residual <= 1e-8, "case {case}: residual {}", sol.kkt_residual);
        let spent = sol.rates[0] * p.costs[0] + sol.rates[1] * p.costs[1];
        assert!((spent - p.partitions[0].budget).abs() <= 1e-9);
        assert!(sol.rates.iter().all(|&n| n > 0.0));
    }
}

#[test]
fn hand_derived_instance() {
    let p = PaeProblem64 {
        sq_gaps: vec![1.0],
        weights: vec![vec![4.0, 1.0]],
        costs: vec![1.0, 1.0],
        partitions: vec![Partition::new(vec![0, 1], 2.0)],
    };
    let sol = solve_input_allocation(&p, &SolverOptions64::default()).unwrap();
    assert!((sol.rates[0] - 4.0 / 3.0).abs() <= 1e-6);
    assert!((sol.rates[1] - 2.0 / 3.0).abs() <= 1e-6);
    // grid oracle at resolution 1e-4
    let best = (1..20_000)
        .map(|k| {
            let n0 = k as f64 * 1e-4;
            (pae_rate(&[n0, 2.0 - n0], &p).unwrap(), n0)
        })
        .fold((f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    assert!((best.1 - 4.0 / 3.0).abs() <= 1e-4);
}

#[test]
fn pae_rate_is_concave_along_segments() {
    let mut rng = substream(2025, 0, 0, Lane::Aux, 0);
    for _ in 0..100 {
        let p = random_instance(&mut rng);
        let u = p.partitions[0].budget;
        let point = |f: f64| [f * u / p.costs[0], (1.0 - f) * u / p.costs[1]];
        let (a, b) = (rng.random_range(0.01..0.99), rng.random_range(0.01..0.99));
        let mid = pae_rate(&point((a + b) / 2.0), &p).unwrap();
        let avg = (pae_rate(&point(a), &p).unwrap() + pae_rate(&point(b), &p).unwrap()) / 2.0;
        assert!(mid - avg >= -1e-10, "{mid} < {avg}");
    }
}

#[test]
fn scaling_budgets_scales_the_rate() {
    let mut rng = substream(2026, 0, 0, Lane::Aux, 0);
    let opts = SolverOptions64::default();
    for _ in 0..20 {
        let p = random_instance(&mut rng);
        let lambda = rng.random_range(0.1..10.0);
        let mut q = p.clone();
        q.partitions[0].budget *= lambda;
        let a = solve_input_allocation(&p, &opts).unwrap().achieved_rate;
        let b = solve_input_allocation(&q, &opts).unwrap().achieved_rate;
        assert!((b / (lambda * a) - 1.0).abs() <= 1e-6, "{b} vs {}", lambda * a);
    }
}

#[test]
fn mixed_partitions_and_many_designs() {
    let p = PaeProblem64 {
        sq_gaps: (1..21).map(|i| (i * i) as f64).collect(),
        weights: (1..21)
            .map(|i| {
                let i = i as f64;
                [1.0, 2.0, 3.0, 3.0, 2.0, 1.0].iter().map(|t: &f64| 4.0 * i * i * t * t).collect()
            })
            .collect(),
        costs: vec![1.0; 6],
        partitions: vec![
            Partition::new(vec![0, 1, 2], 10.0),
            Partition::given_stream(3, 20.0),
            Partition::given_stream(4, 20.0),
            Partition::given_stream(5, 20.0),
        ],
    };
    let sol = solve_input_allocation(&p, &SolverOptions64::default()).unwrap();
    assert!(sol.converged);
    // weights proportional to theta_s^2 put rates proportional to theta_s
    for (s, t) in [1.0, 2.0, 3.0].iter().enumerate() {
        assert!((sol.rates[s] - 10.0 * t / 6.0).abs() <= 1e-6, "{:?}", sol.rates);
    }
    assert_eq!(&sol.rates[3..], &[20.0, 20.0, 20.0]);
}

#[test]
fn balance_residual_examples() {
    let sqrt2 = 2f64.sqrt();
    let params = PcsRateParams64 {
        best: 0,
        sq_gaps: vec![0.0, 1.0, 1.0],
        g: vec![vec![0.0]; 3],
        variances: vec![1.0; 3],
        sim_costs: vec![1.0; 3],
    };
    let r = pcs_balance_residuals(&[2.0, sqrt2, sqrt2], &[1.0], &params).unwrap();
    assert!(r.rate_gap.abs() < 1e-12);
    assert!(r.global_defect < 1e-12);
    let two = PcsRateParams64 {
        best: 0,
        sq_gaps: vec![0.0, 1.0],
        g: vec![vec![0.0]; 2],
        variances: vec![1.0; 2],
        sim_costs: vec![1.0; 2],
    };
    assert_eq!(pcs_balance_residuals(&[3.0, 3.0], &[1.0], &two).unwrap().global_defect, 0.0);
    assert!(pcs_balance_residuals(&[0.0, 3.0], &[1.0], &two).is_err());
}

mod props {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    proptest! {
        #[test]
        fn solutions_are_feasible_and_positive(
            seed in 0u64..10_000,
            streams in 2usize..5,
            rows in 1usize..6,
            budget in 0.5f64..50.0,
        ) {
            let mut rng = substream(seed, 0, 0, Lane::Aux, 1);
            let p = PaeProblem64 {
                sq_gaps: (0..rows).map(|_| rng.random_range(0.01..10.0)).collect(),
                weights: (0..rows)
                    .map(|_| (0..streams).map(|_| rng.random_range(0.01..10.0)).collect())
                    .collect(),
                costs: (0..streams).map(|_| rng.random_range(0.2..5.0)).collect(),
                partitions: vec![
                    Partition::new((0..streams - 1).collect(), budget),
                    Partition::new(vec![streams - 1], budget / 2.0),
                ],
            };
            let sol = solve_input_allocation(&p, &SolverOptions64::default()).unwrap();
            for part in &p.partitions {
                let spent: f64 = part.streams.iter().map(|&s| p.costs[s] * sol.rates[s]).sum();
                prop_assert!((spent - part.budget).abs() <= 1e-9 * part.budget.max(1.0));
            }
            prop_assert!(sol.rates.iter().all(|&n| n > 0.0));
            prop_assert!(sol.kkt_residual <= 1e-8);
        }
    }
}
