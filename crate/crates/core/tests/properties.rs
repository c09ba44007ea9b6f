use proptest::prelude::*;
use zdjscc::analysis::{match_check, monte_carlo_eval, nonlinearity_index, opta, GridSampler};
use zdjscc::csvio::{read_mapping, write_mapping};
use zdjscc::density::{make_gaussian, make_uniform};
use zdjscc::solver::{opta_slope_lambda, solve, solve_for_power};
use zdjscc::{GridSpec, Init, ProblemInstance, SampledMapping, SolverConfig};

fn gaussian_problem(step: f64, lambda: f64) -> ProblemInstance {
    let g = GridSpec::symmetric(5.0, step, 1).unwrap();
    let x = make_gaussian(1.0, &g).unwrap();
    ProblemInstance::new(x.clone(), x, lambda).unwrap()
}

proptest! {
    #[test]
    fn opta_decreases_in_power_and_increases_in_m(
        vx in 0.1f64..10.0, vz in 0.1f64..10.0, p in 0.01f64..100.0, dp in 0.01f64..10.0, k in 1usize..4, m in 1usize..4,
    ) {
        prop_assert!(opta(vx, vz, p + dp, k, m).unwrap() < opta(vx, vz, p, k, m).unwrap());
        prop_assert!(opta(vx, vz, p, k, m + 1).unwrap() > opta(vx, vz, p, k, m).unwrap());
    }

    #[test]
    fn nonlinearity_index_ignores_scale(c in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0], a in -1.0f64..1.0) {
        let grid = GridSpec::symmetric(4.0, 0.05, 1).unwrap();
        let w = make_gaussian(1.0, &grid).unwrap();
        let g = SampledMapping::from_fn(grid, 1, |x, y| y[0] = x[0] + a * x[0].powi(3)).unwrap();
        let i0 = nonlinearity_index(&g, &w).unwrap();
        let i1 = nonlinearity_index(&g.scaled(c), &w).unwrap();
        prop_assert!((i0 - i1).abs() < 1e-10, "{} vs {}", i0, i1);
    }

    #[test]
    fn mapping_csv_round_trip(values in prop::collection::vec(-1e6f64..1e6, 21), lo in -3.0f64..0.0, step in 0.01f64..0.5) {
        let grid = GridSpec::new(vec![lo], step, vec![21]).unwrap();
        let g = SampledMapping::new(grid, 1, values).unwrap();
        let mut buf = Vec::new();
        write_mapping(&mut buf, &g).unwrap();
        let back = read_mapping(&buf[..]).unwrap();
        prop_assert_eq!(back.domain(), g.domain());
        for x in g.domain().axis_values(0) {
            prop_assert_eq!(back.eval(&[x]).unwrap(), g.eval(&[x]).unwrap());
        }
    }

    #[test]
    fn match_mismatch_is_invariant_to_joint_rescaling(s in 0.5f64..2.0, gamma in 0.2f64..5.0) {
        // scaling both amplitudes by s maps F(ω) to F(sω); the window shrinks accordingly
        let base = GridSpec::symmetric(6.0, 0.02, 1).unwrap();
        let scaled = GridSpec::new(vec![base.lower()[0] * s], base.step() * s, base.counts().to_vec()).unwrap();
        let x0 = make_gaussian(1.0, &base).unwrap();
        let z0 = make_uniform(1.0, &base).unwrap();
        let x1 = make_gaussian(s * s, &scaled).unwrap();
        let z1 = make_uniform(s, &scaled).unwrap();
        let m0 = match_check(&x0, &z0, gamma * z0.variance_per_dim(), 4.0, 200).unwrap();
        let m1 = match_check(&x1, &z1, gamma * z1.variance_per_dim(), 4.0 / s, 200).unwrap();
        prop_assert!((m0.max_abs_mismatch - m1.max_abs_mismatch).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn accepted_steps_never_increase_the_lagrangian(lambda in 0.02f64..0.8, seed in 0u64..1000, random in any::<bool>()) {
        let p = gaussian_problem(0.1, lambda);
        let mut cfg = SolverConfig::default().with_seed(seed);
        cfg.max_iters = 60;
        let init = if random { Init::Random } else { Init::Linear { gain: 0.5 } };
        let r = solve(&p, &cfg, &init).unwrap();
        for w in r.trace.windows(2) {
            prop_assert!(w[1].lagrangian <= w[0].lagrangian);
        }
    }

    #[test]
    fn solved_gaussian_points_respect_the_bound(power in 0.2f64..20.0) {
        let p = gaussian_problem(0.05, opta_slope_lambda(1.0, 1.0, 1, 1, power));
        let r = solve_for_power(&p, &SolverConfig::default(), &Init::Linear { gain: power.sqrt() }, power).unwrap();
        let bound = opta(1.0, 1.0, r.power, 1, 1).unwrap();
        prop_assert!(r.distortion >= bound * 0.99, "D={} bound={}", r.distortion, bound);
    }

    #[test]
    fn monte_carlo_is_reproducible(seed in any::<u64>()) {
        let p = gaussian_problem(0.05, 0.25);
        let g = SampledMapping::from_fn(p.source().grid().clone(), 1, |x, y| y[0] = x[0]).unwrap();
        let h = p.decoder_for(&g).unwrap();
        let (sx, sz) = (GridSampler::new(p.source()).unwrap(), GridSampler::new(p.noise()).unwrap());
        let a = monte_carlo_eval(&g, &h, &sx, &sz, 40_000, seed).unwrap();
        let b = monte_carlo_eval(&g, &h, &sx, &sz, 40_000, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
