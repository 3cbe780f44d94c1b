use misdirection::controls::FeedbackPolicy;
use misdirection::moments::{expected_log_lr, solve_moments};
use misdirection::red::MlpNetwork;
use misdirection::riccati::solve_value_coeffs;
use misdirection::sde::{monte_carlo_with, McOptions};
use misdirection::{GridConfig, ModelParams, Pattern, TimeFunction, ValidatedParams};
use proptest::prelude::*;

fn model() -> impl Strategy<Value = ModelParams> {
    (
        (0.1f64..1.0, 0.1f64..0.4, 0.15f64..0.4, 0.5f64..3.0),
        (2.0f64..15.0, 0.5f64..2.0, 0.5f64..2.0),
        (-2.0f64..2.0, -3.0f64..3.0, 0.0f64..=1.0),
    )
        .prop_map(|((horizon, sigma_b, sigma_w, r_alpha), (r_beta, r_v, t_v), (v0, y0, share))| {
            let mut m = ModelParams {
                horizon,
                sigma_b,
                sigma_w,
                r_alpha,
                r_beta,
                r_v,
                t_v,
                vbar_terminal: 0.0,
                vbar: TimeFunction::zero(),
                lambda: 0.0,
                v0,
                y0,
            };
            m.lambda = share * m.lambda_max();
            m
        })
}

fn slope(horizon: f64) -> impl Strategy<Value = TimeFunction> {
    prop_oneof![
        (-1.5f64..1.5, -1.0f64..1.0).prop_map(move |(a, b)| TimeFunction::affine(a, b / horizon)),
        (0.2f64..1.5, 1.0f64..4.0, 0.0f64..3.0)
            .prop_map(move |(amp, k, phase)| TimeFunction::sinusoid(amp, k * std::f64::consts::PI / horizon, phase)),
    ]
}

fn with_slope() -> impl Strategy<Value = (ModelParams, TimeFunction)> {
    model().prop_flat_map(|m| {
        let h = m.horizon;
        (Just(m), slope(h))
    })
}

fn solve(params: &ValidatedParams, f: &TimeFunction, grid: &GridConfig) -> (misdirection::moments::MomentCurves, f64) {
    let coeffs = solve_value_coeffs(params, &Pattern::slope_only(f.clone()), grid).unwrap();
    let m = solve_moments(params, &coeffs, f, grid).unwrap();
    let e = expected_log_lr(params, &coeffs, f, &m, grid).unwrap();
    (m, e)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn grid_sampling_round_trips(
        (m, f) in with_slope(),
        n in 2usize..300,
    ) {
        let grid = GridConfig::new(m.horizon, n).unwrap();
        let values = f.sample_values(&grid);
        let sampled = TimeFunction::grid_sampled(&grid, values.clone()).unwrap();
        for (k, t) in grid.times().enumerate() {
            prop_assert_eq!(sampled.eval(t), values[k]);
        }
        prop_assert_eq!(sampled.sample_values(&grid), values);
    }

    #[test]
    fn moments_are_a_valid_second_moment_matrix((m, f) in with_slope()) {
        let params = m.validate().unwrap();
        let grid = GridConfig::new(params.horizon, 200).unwrap();
        let (mc, _) = solve(&params, &f, &grid);
        prop_assert_eq!(mc.h20[0], params.v0 * params.v0);
        prop_assert_eq!(mc.h11[0], params.v0 * params.y0);
        prop_assert_eq!(mc.h02[0], params.y0 * params.y0);
        for k in 0..grid.n_nodes() {
            prop_assert!(mc.h20[k] >= 0.0 && mc.h02[k] >= 0.0);
        }
        prop_assert!(mc.cauchy_schwarz_excess() <= 1e-6);
    }

    #[test]
    fn full_intensity_log_lr_is_the_energy_term((m, f) in with_slope()) {
        let m = m.clone().with_lambda(m.lambda_max());
        let params = m.validate().unwrap();
        let grid = GridConfig::new(params.horizon, 200).unwrap();
        let (mc, e) = solve(&params, &f, &grid);
        let fv = f.sample_values(&grid);
        let energy: Vec<f64> = mc.h02.iter().zip(&fv).map(|(h, f)| h * f * f).collect();
        let expected = 0.5 / params.sigma_w2() * grid.trapezoid(&energy);
        prop_assert!((e - expected).abs() <= 1e-10 * expected.abs().max(1e-12));
        prop_assert!(e > 0.0);
    }

    #[test]
    fn exponential_output_is_positive(seed in 0u64..10_000, horizon in 0.05f64..2.0) {
        let net = MlpNetwork::random(horizon, true, seed);
        let grid = GridConfig::new(horizon, 50).unwrap();
        prop_assert!(net.outputs(&grid).iter().all(|v| *v > 0.0 && v.is_finite()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn summary_identity_and_seed_determinism((m, f) in with_slope(), seed in any::<u64>()) {
        let params = m.validate().unwrap();
        let grid = GridConfig::new(params.horizon, 100).unwrap();
        let pattern = Pattern::slope_only(f);
        let coeffs = solve_value_coeffs(&params, &pattern, &grid).unwrap();
        let policy = FeedbackPolicy::new(&params, &pattern, &coeffs).unwrap();
        let a = monte_carlo_with(&policy, &pattern, &grid, 200, seed, McOptions::default()).unwrap();
        let b = monte_carlo_with(&policy, &pattern, &grid, 200, seed, McOptions { threads: Some(2), ..McOptions::default() }).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.se_primary_cost >= 0.0 && a.se_log_lr >= 0.0);
        let blue = a.mean_primary_cost - params.lambda * a.mean_log_lr;
        prop_assert!((a.mean_blue_cost - blue).abs() <= 1e-12 * blue.abs().max(1.0));
    }
}
