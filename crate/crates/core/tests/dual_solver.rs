use arturo::{
    dual_derivative, kl_mean_term, primal_mean, primal_variance, solve_eta, Bisection, DualSolver, DualState,
    ParameterDistribution, SolverOptions, TrustRegionParams,
};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Instance {
    a: Vec<f64>,
    b: Vec<f64>,
    prev: ParameterDistribution,
    tr: TrustRegionParams,
}

fn instance() -> impl Strategy<Value = Instance> {
    (1usize..=100).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..10.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec(1e-3f64..10.0, n),
            1e-4f64..1.0,
            0.0f64..2.0,
            0.0f64..0.01,
        )
            .prop_map(|(a, b, mu, sigma2, epsilon, rho, lambda_prec)| Instance {
                a,
                b,
                prev: ParameterDistribution::new(mu, sigma2).unwrap(),
                tr: TrustRegionParams { epsilon, rho, nu: 1.3, lambda_prec },
            })
    })
}

fn satisfied(c_mu: f64, eta: f64, eps: f64) -> bool {
    (eta == 0.0 && c_mu <= eps) || (c_mu - eps).abs() <= 0.1 * eps
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn solution_meets_the_bound(inst in instance(), warm in -6.0f64..6.0) {
        // Instances with ρλ = 0 and some a_j = 0 have no admissible η = 0.
        let dual = DualState { eta_warm: 10f64.powf(warm) };
        let sol = solve_eta(&inst.a, &inst.b, &inst.prev, &inst.tr, &dual).unwrap();
        prop_assert!(sol.eta >= 0.0);
        prop_assert!(
            satisfied(sol.c_mu, sol.eta, inst.tr.epsilon) || (sol.interior && sol.c_mu <= inst.tr.epsilon),
            "eta {} c_mu {} eps {}", sol.eta, sol.c_mu, inst.tr.epsilon
        );
        prop_assert_eq!(sol.c_mu, kl_mean_term(&sol.mu, &inst.prev));
        prop_assert_eq!(&sol.mu, &primal_mean(&inst.a, &inst.b, &inst.prev, sol.eta, &inst.tr).unwrap());
    }

    #[test]
    fn mean_change_shrinks_as_eta_grows(inst in instance(), e1 in -4.0f64..4.0, de in 0.01f64..3.0) {
        let (lo, hi) = (10f64.powf(e1), 10f64.powf(e1 + de));
        let g_lo = dual_derivative(lo, &inst.a, &inst.b, &inst.prev, &inst.tr).unwrap();
        let g_hi = dual_derivative(hi, &inst.a, &inst.b, &inst.prev, &inst.tr).unwrap();
        prop_assert!(g_hi <= g_lo + 1e-12 * g_lo.abs().max(1.0));
    }

    #[test]
    fn warm_start_does_not_change_the_answer_beyond_tolerance(inst in instance(), w1 in -6.0f64..6.0, w2 in -6.0f64..6.0) {
        let s1 = solve_eta(&inst.a, &inst.b, &inst.prev, &inst.tr, &DualState { eta_warm: 10f64.powf(w1) }).unwrap();
        let s2 = solve_eta(&inst.a, &inst.b, &inst.prev, &inst.tr, &DualState { eta_warm: 10f64.powf(w2) }).unwrap();
        prop_assert_eq!(s1.interior, s2.interior);
        prop_assert!((s1.c_mu - s2.c_mu).abs() <= 0.2 * inst.tr.epsilon);
    }

    #[test]
    fn variance_is_positive(inst in instance()) {
        let s2 = primal_variance(&inst.a, &inst.prev, &inst.tr);
        prop_assert!(s2.iter().all(|&v| v > 0.0 && v.is_finite()));
    }

    #[test]
    fn huge_eta_keeps_the_mean(inst in instance()) {
        let mu = primal_mean(&inst.a, &inst.b, &inst.prev, 1e12, &inst.tr).unwrap();
        let norm_prev = inst.prev.mu.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff = mu.iter().zip(&inst.prev.mu).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        prop_assume!(norm_prev > 1e-3);
        prop_assert!(diff / norm_prev < 1e-6);
    }

    #[test]
    fn zero_eta_without_prior_is_newton(
        a in prop::collection::vec(0.1f64..10.0, 1..50),
        seed_b in -5.0f64..5.0,
    ) {
        let n = a.len();
        let b: Vec<f64> = (0..n).map(|j| seed_b * (j as f64 + 1.0).sin()).collect();
        let prev = ParameterDistribution::isotropic(vec![0.7; n], 0.5).unwrap();
        let tr = TrustRegionParams { epsilon: 0.1, rho: 0.0, nu: 1.3, lambda_prec: 0.0 };
        let mu = primal_mean(&a, &b, &prev, 0.0, &tr).unwrap();
        for j in 0..n {
            let newton = -b[j] / a[j];
            prop_assert!((mu[j] - newton).abs() <= 1e-10 * newton.abs().max(1.0));
        }
    }
}

#[test]
fn warm_started_trajectory_needs_few_bisections() {
    // Slowly drifting surrogate, as between consecutive optimizer steps.
    let n = 50;
    let tr = TrustRegionParams { epsilon: 0.05, rho: 0.06, nu: 1.3, lambda_prec: 0.0015 };
    let mut prev = ParameterDistribution::isotropic(vec![0.0; n], 0.01).unwrap();
    let mut dual = DualState::default();
    let solver = Bisection { options: SolverOptions::default() };
    let mut iters = Vec::new();
    for t in 0..300 {
        let a: Vec<f64> = (0..n).map(|j| 0.5 + 0.3 * ((j + t) as f64 * 0.01).sin()).collect();
        let b: Vec<f64> = (0..n).map(|j| -(1.0 + 0.1 * ((j * 7 + t) as f64 * 0.02).cos())).collect();
        let sol = solver.solve(&a, &b, &prev, &tr, &dual).unwrap();
        iters.push(sol.iterations);
        dual.eta_warm = sol.eta.max(1e-6);
        let sigma2 = primal_variance(&a, &prev, &tr);
        prev = ParameterDistribution::new(sol.mu, sigma2).unwrap();
    }
    iters.sort_unstable();
    assert!(iters[iters.len() / 2] <= 6, "median {}", iters[iters.len() / 2]);
}
