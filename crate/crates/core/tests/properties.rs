use std::sync::Arc;

use kslab::functionals::{energy_report, p_upper, param_window, StatePair};
use kslab::grid::{ball_volume, build_grid, laplacian_radial, RadialGrid};
use kslab::initial_data::{choose_eta, phi_ln, Baseline};
use kslab::io::{ExperimentConfig, InitialSpec, OutputSpec};
use kslab::quadrature::power_moment;
use kslab::solver::{step, SolverConfig};
use kslab::verifier::{inequality_suite, StateCorpus};
use kslab::GridSpec;
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = Arc<RadialGrid>> {
    (3usize..=5, 0.5f64..3.0, 16usize..96, 1.0f64..1.06)
        .prop_map(|(n, r, cells, g)| build_grid(n, r, cells, g).unwrap())
}

/// Smooth positive profile from a few random cosine modes.
fn profile(grid: &Arc<RadialGrid>, level: f64, amps: &[f64]) -> kslab::RadialField {
    let radius = grid.radius();
    grid.sample(|r| {
        let x = std::f64::consts::PI * r / radius;
        level
            * (1.0
                + amps
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * ((k + 1) as f64 * x).cos())
                    .sum::<f64>())
    })
}

fn state_strategy() -> impl Strategy<Value = StatePair> {
    (
        grid_strategy(),
        0.2f64..5.0,
        0.2f64..5.0,
        prop::collection::vec(-0.15f64..0.15, 3),
        prop::collection::vec(-0.15f64..0.15, 3),
    )
        .prop_map(|(g, cu, cv, au, av)| {
            StatePair::new(profile(&g, cu, &au), profile(&g, cv, &av), 0.0).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cell_weights_sum_to_ball_volume(g in grid_strategy()) {
        let exact = ball_volume(g.dim(), g.radius());
        prop_assert!((g.constant(1.0).integrate() - exact).abs() <= 1e-12 * exact);
    }

    #[test]
    fn laplacian_has_zero_total_flux(s in state_strategy()) {
        let lap = laplacian_radial(&s.u);
        let scale: f64 = s.u.integrate().abs().max(1.0) * 1e-10 / s.grid().min_width().powi(2);
        prop_assert!(lap.integrate().abs() <= scale * 1e-3);
    }

    #[test]
    fn step_conserves_u_mass_and_positivity(s in state_strategy(), dt in 1e-6f64..1e-3) {
        let next = step(&s, dt).unwrap();
        let (m0, m1) = (s.u.integrate(), next.u.integrate());
        prop_assert!((m1 - m0).abs() <= 1e-12 * m0);
        prop_assert!(next.u.min() > 0.0 && next.v.min() > 0.0);
    }

    #[test]
    fn energy_report_bookkeeping(s in state_strategy()) {
        let r = energy_report(&s).unwrap();
        let f = 0.5 * r.grad_v_sq + 0.5 * r.v_sq - r.uv + r.entropy;
        prop_assert!((r.energy - f).abs() <= 1e-12 * (1.0 + f.abs()));
        prop_assert!((r.dissipation - r.f_norm_sq - r.g_norm_sq).abs() <= 1e-12 * (1.0 + r.dissipation));
        prop_assert!(r.dissipation >= 0.0);
    }

    #[test]
    fn windows_are_nonempty_below_critical_p(n in 3usize..=8, frac in 0.01f64..0.99, dk in 0.01f64..3.0) {
        let p = 1.0 + frac * (p_upper(n) - 1.0);
        let w = param_window(n, p, n as f64 - 2.0 + dk, None).unwrap();
        prop_assert!(w.theta > 0.0 && w.theta < 1.0);
        prop_assert!(w.alpha_lo < w.alpha && w.alpha < w.alpha_hi);
    }

    #[test]
    fn eta_choice_keeps_nonnegative_margin(k in 1u32..40, n in 3usize..=5) {
        let r = 0.5f64.powi(k as i32 + 1);
        let c = choose_eta(r, k as f64, n, 1.0).unwrap();
        prop_assert!(c.margin >= 0.0);
        // r^n φ(η/r²) at the chosen η reaches the target
        let ln_val = n as f64 * r.ln() + phi_ln(c.ln_eta - 2.0 * r.ln(), n);
        prop_assert!(ln_val >= (k as f64).ln() - 1e-12);
    }

    #[test]
    fn power_moment_decreases_in_xi(a in 0.0f64..4.0, b in 0.1f64..3.0, l in -40.0f64..5.0, d in 0.1f64..5.0) {
        let m0 = power_moment(a, b, l, false);
        let m1 = power_moment(a, b, l + d, false);
        prop_assert!(m0 > 0.0 && m1 > 0.0);
        prop_assert!(m1 <= m0 * (1.0 + 1e-12));
    }

    #[test]
    fn config_round_trips(c in 0.1f64..10.0, delta in -0.9f64..0.9, cells in 16usize..512, t_end in 1e-3f64..10.0) {
        let cfg = ExperimentConfig {
            grid: GridSpec { n: 3, radius: 1.0, cells, grading: 1.0 },
            initial: if delta > 0.0 { InitialSpec::Perturbed { c, delta } } else { InitialSpec::Constant { c } },
            solver: SolverConfig { t_end, ..SolverConfig::default() },
            checks: Default::default(),
            output: OutputSpec::default(),
            sweep: None,
        };
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn suite_constants_grow_under_corpus_extension(amps in prop::collection::vec(-0.3f64..0.3, 6)) {
        let g = build_grid(3, 1.0, 64, 1.02).unwrap();
        let mass = ball_volume(3, 1.0);
        let member = |a: &[f64]| {
            let u = profile(&g, 1.0, a);
            let total = u.integrate();
            let u = u.map(|x| mass * x / total);
            let v = profile(&g, 1.0, &[a[1], a[0]]);
            StatePair::new(u, v, 0.0).unwrap()
        };
        let base = vec![
            kslab::initial_data::baseline_profiles(Baseline::Constant { c: 1.0 }, &g).unwrap(),
            member(&amps[..3]),
        ];
        let mut wide = base.clone();
        wide.push(member(&amps[3..]));
        let class = StateCorpus::enclosing(wide.clone(), 2.0, 1e-6).unwrap().class;
        let small = inequality_suite(&StateCorpus::new(base, class).unwrap()).unwrap();
        let large = inequality_suite(&StateCorpus::new(wide, class).unwrap()).unwrap();
        for (s, l) in small.iter().zip(&large) {
            prop_assert_eq!(&s.name, &l.name);
            prop_assert!(l.worst_ratio >= s.worst_ratio);
        }
    }
}

#[test]
fn shipped_configs_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "json") {
            ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
