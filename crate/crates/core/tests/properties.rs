use fujita_lab::data::InitialData;
use fujita_lab::evolution::{picard_iterate, run, run_fixed, OutcomeKind, RunConfig};
use fujita_lab::experiments::{ak_constant, threshold_weak_norm, ExponentTable};
use fujita_lab::geometry::{h, h_inverse, muckenhoupt_constant, BallSampler};
use fujita_lab::grid::{Field, Grid};
use fujita_lab::kernel::{build_propagator, Boundary, Scheme};
use fujita_lab::lorentz::{distribution_function, rearrangement, spherical_rearrangement, strong_norm, weak_norm};
use fujita_lab::weight::critical_exponent;
use fujita_lab::Weight;
use proptest::prelude::*;

fn field_1d(values: Vec<f64>, half: f64) -> Field {
    let grid = Grid::new(1, values.len(), half).unwrap();
    Field::new(grid, values).unwrap()
}

fn nonneg_values() -> impl Strategy<Value = Vec<f64>> {
    (4usize..40).prop_flat_map(|n| prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..10.0], 2 * n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn h_is_increasing_in_r(a in -0.9f64..0.9, x in -50.0f64..50.0, r1 in 1e-3f64..1e2, k in 1.01f64..10.0) {
        let w = Weight::axis(a, 1);
        prop_assert!(h(&w, &[x], r1).unwrap() < h(&w, &[x], k * r1).unwrap());
    }

    #[test]
    fn h_inverse_round_trip(a in -0.9f64..0.9, x in -10.0f64..10.0, e in -3.0f64..3.0) {
        let w = Weight::axis(a, 1);
        let t = 10f64.powf(e);
        let r = h_inverse(&w, &[x], t).unwrap();
        let back = h(&w, &[x], r).unwrap();
        prop_assert!((back - t).abs() <= 1e-8 * t, "t {t} back {back}");
    }

    #[test]
    fn h_depends_on_distance_to_singular_set(a in -0.9f64..0.9, x1 in -5.0f64..5.0, y in -5.0f64..5.0, y2 in -5.0f64..5.0, r in 0.01f64..10.0) {
        let w = Weight::axis(a, 2);
        let base = h(&w, &[x1, y], r).unwrap();
        for p in [[-x1, y], [x1, y2], [-x1, y2]] {
            let other = h(&w, &p, r).unwrap();
            prop_assert!((other - base).abs() <= 1e-5 * base);
        }
        let b = Weight::radial(a, 2);
        let (s, c) = (0.7f64.sin(), 0.7f64.cos());
        let base = h(&b, &[x1, y], r).unwrap();
        let rotated = h(&b, &[c * x1 - s * y, s * x1 + c * y], r).unwrap();
        prop_assert!((rotated - base).abs() <= 1e-5 * base);
    }

    #[test]
    fn unweighted_h_is_lebesgue(x in -5.0f64..5.0, y in -5.0f64..5.0, r in 0.01f64..10.0) {
        let one = h(&Weight::axis(0.0, 1), &[x], r).unwrap();
        prop_assert!((one - 4.0 * r * r).abs() <= 1e-9 * one);
        let two = h(&Weight::axis(0.0, 2), &[x, y], r).unwrap();
        let exact = std::f64::consts::PI * r * r;
        prop_assert!((two - exact).abs() <= 1e-6 * exact);
    }

    #[test]
    fn rearrangements_are_equimeasurable(values in nonneg_values()) {
        let f = field_1d(values, 3.0);
        let table = rearrangement(&f);
        let sharp = spherical_rearrangement(&f);
        for &lambda in &table.thresholds {
            let mu = distribution_function(&f, lambda);
            prop_assert_eq!(mu, table.distribution(lambda));
            prop_assert_eq!(mu, distribution_function(&sharp, lambda));
        }
    }

    #[test]
    fn weak_norm_below_strong_norm(values in nonneg_values(), r in 1.01f64..8.0) {
        let f = field_1d(values, 2.0);
        let weak = weak_norm(&f, r).unwrap().value;
        let strong = strong_norm(&f, r).unwrap().value;
        prop_assert!(weak <= strong * (1.0 + 1e-12), "weak {weak} strong {strong}");
    }

    #[test]
    fn weak_norm_is_homogeneous(values in nonneg_values(), r in 1.01f64..8.0, c in -5.0f64..5.0, k in -4i32..4) {
        let f = field_1d(values, 2.0);
        let base = weak_norm(&f, r).unwrap().value;
        let two = 2f64.powi(k);
        prop_assert_eq!(weak_norm(&f.scaled(two), r).unwrap().value, two * base);
        let scaled = weak_norm(&f.scaled(c), r).unwrap().value;
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-13 * c.abs() * base.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn rearrangement_ignores_cell_order(values in nonneg_values(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let f = field_1d(values.clone(), 2.0);
        let mut shuffled = values;
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let g = field_1d(shuffled, 2.0);
        prop_assert_eq!(rearrangement(&f), rearrangement(&g));
    }

    #[test]
    fn symmetrized_power_profile_stays_below_envelope(m in 1.0f64..50.0, c1 in 0.1f64..5.0, r in 1.2f64..6.0) {
        let grid = Grid::new(1, 128, 4.0).unwrap();
        let f = Field::from_fn(grid, |x| m.min(c1 * x[0].abs().powf(-1.0 / r)));
        let sharp = spherical_rearrangement(&f);
        let h = grid.spacing();
        for i in 0..grid.len() {
            let inner = grid.center(i)[0].abs() - h / 2.0;
            if inner > 0.0 {
                prop_assert!(sharp.values[i] <= c1 * inner.powf(-1.0 / r) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn kernel_steps_conserve_mass_and_sign(a in -0.9f64..0.9, half in 1.0f64..20.0, n in 4usize..48, dt in 1e-4f64..1e-1, values in prop::collection::vec(0.0f64..1.0, 96)) {
        let w = Weight::axis(a, 1);
        let grid = Grid::new(1, 2 * n, half).unwrap();
        let prop = build_propagator(&w, grid, dt, Boundary::Reflecting, Scheme::ImplicitEuler).unwrap();
        let mut u = values[..2 * n].to_vec();
        let mass0: f64 = u.iter().sum();
        prop.evolve(&mut u, 20).unwrap();
        let mass: f64 = u.iter().sum();
        prop_assert!((mass - mass0).abs() <= 1e-12 * mass0.max(1.0));
        prop_assert!(u.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn kernel_is_symmetric(a in -0.9f64..0.9, n in 4usize..32, i in 0usize..64, j in 0usize..64) {
        let w = Weight::axis(a, 1);
        let grid = Grid::new(1, 2 * n, 4.0).unwrap();
        let prop = build_propagator(&w, grid, 0.01, Boundary::Absorbing, Scheme::ImplicitEuler).unwrap();
        let (i, j) = (i % (2 * n), j % (2 * n));
        let column = |k: usize| {
            let mut u = vec![0.0; 2 * n];
            u[k] = 1.0;
            prop.evolve(&mut u, 10).unwrap();
            u
        };
        let (ci, cj) = (column(i), column(j));
        prop_assert!((ci[j] - cj[i]).abs() <= 1e-10 * ci[j].abs().max(1e-300));
    }

    #[test]
    fn nonlinear_comparison(a in -0.5f64..0.5, p in 1.5f64..4.0, lo in prop::collection::vec(0.0f64..0.4, 32), gap in prop::collection::vec(0.0f64..0.1, 32)) {
        let w = Weight::axis(a, 1);
        let grid = Grid::new(1, 32, 4.0).unwrap();
        let prop = build_propagator(&w, grid, 1e-3, Boundary::Reflecting, Scheme::ImplicitEuler).unwrap();
        let phi1 = Field::new(grid, lo.clone()).unwrap();
        let phi2 = Field::new(grid, lo.iter().zip(&gap).map(|(a, b)| a + b).collect()).unwrap();
        let u1 = run_fixed(&prop, &phi1, p, 0.5, 1e-3, 200, 20).unwrap();
        let u2 = run_fixed(&prop, &phi2, p, 0.5, 1e-3, 200, 20).unwrap();
        for (f1, f2) in u1.iter().zip(&u2) {
            prop_assert!(f1.values.iter().all(|&v| v >= 0.0));
            for (x, y) in f1.values.iter().zip(&f2.values) {
                prop_assert!(*x <= y + 1e-10);
            }
        }
    }

    #[test]
    fn exponent_identities(alpha in -0.9f64..0.9, dim in 1usize..3, p in 1.01f64..8.0) {
        let t = ExponentTable::new(alpha, dim, p);
        let ps = critical_exponent(alpha, dim);
        prop_assume!((p - ps).abs() > 1e-9);
        prop_assert_eq!(t.r_star > 1.0, p > ps);
        prop_assert_eq!(t.decay(t.r_star), 0.0);
        prop_assert!((t.decay(f64::INFINITY) - 1.0 / (p - 1.0)).abs() <= 1e-12 / (p - 1.0));
    }

    #[test]
    fn threshold_weak_norm_is_linear(delta in 1e-3f64..10.0, k in 1.5f64..4.0, alpha in -0.5f64..0.5, p in 3.6f64..6.0) {
        let grid = Grid::new(1, 256, 16.0).unwrap();
        let one = threshold_weak_norm(delta, alpha, p, &grid).unwrap();
        let two = threshold_weak_norm(k * delta, alpha, p, &grid).unwrap();
        prop_assert!(one.is_finite() && one > 0.0);
        prop_assert!((two - k * one).abs() <= 1e-10 * k * one);
    }

    #[test]
    fn product_constant_bounded_by_comparison_series(p in 1.05f64..100.0) {
        let c = ak_constant(p, 40).unwrap();
        prop_assert!(c.monotone);
        prop_assert!(c.partial_products.iter().all(|&v| v <= c.comparison_bound * (1.0 + 1e-12)));
    }
}

#[test]
fn muckenhoupt_constant_grows_towards_the_admissibility_edge() {
    let sampler = BallSampler::default();
    let values: Vec<f64> = [0.5, 0.7, 0.8, 0.9, 0.95]
        .iter()
        .map(|&a| muckenhoupt_constant(&Weight::axis(a, 1), 2.0, &sampler).unwrap())
        .collect();
    assert!(values.windows(2).all(|w| w[1] > w[0]), "{values:?}");
}

#[test]
fn picard_iterates_stay_below_the_stepped_solution() {
    let dt = 1e-3;
    let tau = 0.3;
    let mut cfg = RunConfig::new(
        Weight::axis(0.5, 1),
        2.0,
        Grid::new(1, 64, 4.0).unwrap(),
        InitialData::Bump {
            amplitude: 0.5,
            radius: 1.5,
        },
        tau,
    );
    cfg.dt0 = dt;
    let r = picard_iterate(&cfg, 6, tau, 1).unwrap();
    let prop = cfg.propagator().unwrap();
    let phi = cfg.data.to_field(&cfg.grid);
    let stepped = run_fixed(&prop, &phi, cfg.p, cfg.theta, dt, (tau / dt).round() as usize, 1).unwrap();
    let mut gaps = Vec::new();
    for it in &r.iterates {
        let mut gap: f64 = 0.0;
        for (a, b) in it.iter().zip(&stepped) {
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!(*x <= y + 1e-4);
                gap = gap.max((x - y).abs());
            }
        }
        gaps.push(gap);
    }
    // the gap shrinks until it meets the time-discretization floor, then stays there
    let floor = *gaps.last().unwrap();
    assert!(floor < 1e-4, "{gaps:?}");
    for g in gaps.windows(2) {
        assert!(g[1] < g[0] || g[1] <= 2.0 * floor, "{gaps:?}");
    }
    assert!(
        gaps.iter().skip_while(|&&g| g > 2.0 * floor).all(|&g| g <= 2.0 * floor),
        "{gaps:?}"
    );
}

#[test]
fn successive_refinements_shrink() {
    let w = Weight::axis(0.0, 1);
    let data = InitialData::Bump {
        amplitude: 1.0,
        radius: 1.0,
    };
    let sups: Vec<f64> = [32usize, 64, 128, 256]
        .iter()
        .map(|&cells| {
            let grid = Grid::new(1, cells, 4.0).unwrap();
            let prop = build_propagator(&w, grid, 1e-4, Boundary::Reflecting, Scheme::ImplicitEuler).unwrap();
            let mut u = data.to_field(&grid).values;
            prop.evolve(&mut u, 2000).unwrap();
            u.iter().cloned().fold(0.0, f64::max)
        })
        .collect();
    let diffs: Vec<f64> = sups.windows(2).map(|s| (s[1] - s[0]).abs()).collect();
    assert!(diffs.windows(2).all(|d| d[1] < d[0]), "{diffs:?}");
}

#[test]
fn survival_is_monotone_in_amplitude() {
    let w = Weight::axis(0.5, 1);
    let survived: Vec<bool> = [0.125, 0.25, 0.5, 1.0, 2.0]
        .iter()
        .map(|&delta| {
            let cfg = RunConfig::new(
                w,
                4.0,
                Grid::new(1, 800, 200.0).unwrap(),
                InitialData::threshold(delta, 0.5, 4.0),
                50.0,
            );
            !matches!(run(&cfg).unwrap().kind, OutcomeKind::BlowUp { .. })
        })
        .collect();
    assert!(survived[0] && !survived[4], "{survived:?}");
    assert!(survived.windows(2).all(|s| s[0] || !s[1]), "{survived:?}");
}
