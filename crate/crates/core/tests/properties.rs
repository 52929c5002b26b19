use phasefield_core::graphs::{MonotoneGraph, ShiftedLog};
use phasefield_core::harness::RateTable;
use phasefield_core::kernel::{assemble_default, KernelKind};
use phasefield_core::{Field, Grid, RunConfig, Unit};
use proptest::prelude::*;

fn field(grid: Grid, values: Vec<f64>) -> Field {
    Field::new(grid, values, Unit::Generic).unwrap()
}

fn graphs() -> impl Strategy<Value = MonotoneGraph> {
    prop_oneof![
        Just(MonotoneGraph::Log),
        Just(MonotoneGraph::Indicator),
        Just(MonotoneGraph::Power),
        Just(MonotoneGraph::NaturalLog),
    ]
}

fn kinds() -> impl Strategy<Value = KernelKind> {
    prop_oneof![
        Just(KernelKind::Indicator),
        Just(KernelKind::Polynomial),
        Just(KernelKind::GaussianTruncated),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn yosida_is_monotone_and_lipschitz(g in graphs(), lambda in 0.01f64..0.9, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (ya, yb) = (g.yosida(lambda, a).unwrap(), g.yosida(lambda, b).unwrap());
        prop_assert!((ya - yb) * (a - b) >= -1e-12);
        prop_assert!((ya - yb).abs() <= (a - b).abs() / lambda * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn resolvent_is_nonexpansive(g in graphs(), lambda in 0.01f64..0.9, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (ja, jb) = (g.resolvent(lambda, a).unwrap(), g.resolvent(lambda, b).unwrap());
        prop_assert!((ja - jb).abs() <= (a - b).abs() + 1e-12);
        // J lies in the closed domain; near an endpoint it may round onto it.
        let d = g.domain();
        prop_assert!(d.lower <= ja && ja <= d.upper);
    }

    #[test]
    fn moreau_envelope_sits_below_the_primitive(g in prop_oneof![Just(MonotoneGraph::Log), Just(MonotoneGraph::Power)], lambda in 0.01f64..0.9, r in -0.95f64..0.95) {
        let m = g.moreau(lambda, r).unwrap();
        prop_assert!(m <= g.primitive(r) + 1e-12);
        prop_assert!(m >= 0.0);
    }

    #[test]
    fn yosida_error_is_first_order_for_the_power_graph(r in 0.2f64..1.5, lambda in 0.001f64..0.01) {
        let g = MonotoneGraph::Power;
        let exact = r.powi(3);
        let e1 = (g.yosida(lambda, r).unwrap() - exact).abs();
        let e2 = (g.yosida(lambda / 2.0, r).unwrap() - exact).abs();
        let ratio = e2 / e1;
        prop_assert!((0.45..0.55).contains(&ratio), "ratio {}", ratio);
    }

    #[test]
    fn shifted_log_inverts(lambda in 0.01f64..0.9, theta in 0.01f64..10.0) {
        let l = ShiftedLog::new(lambda);
        let u = l.value(theta).unwrap();
        prop_assert!((l.inverse(u).unwrap() - theta).abs() <= 1e-10 * theta.max(1.0));
    }

    #[test]
    fn laplacian_pairs_nonnegatively_with_yosida(g in graphs(), lambda in 0.01f64..0.9, values in prop::collection::vec(-2.0f64..2.0, 36)) {
        let grid = Grid::unit_square(6);
        let neg_lap: Vec<f64> = grid.laplacian(&values).into_iter().map(|v| -v).collect();
        let b: Vec<f64> = values.iter().map(|x| g.yosida(lambda, *x).unwrap()).collect();
        prop_assert!(grid.inner(&neg_lap, &b) >= -1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn nonlocal_form_is_symmetric_nonnegative_and_kills_constants(
        kind in kinds(),
        eps in 0.2f64..0.6,
        a in prop::collection::vec(-1.0f64..1.0, 64),
        b in prop::collection::vec(-1.0f64..1.0, 64),
        c in -5.0f64..5.0,
    ) {
        let grid = Grid::unit_square(8);
        let op = assemble_default(&grid, eps, kind).unwrap();
        let (fa, fb) = (field(grid, a.clone()), field(grid, b));
        let ab = op.bilinear(&fa, &fb).unwrap();
        let ba = op.bilinear(&fb, &fa).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(1.0));
        prop_assert!(op.energy(&fa).unwrap() >= 0.0);
        let shifted = field(grid, a.iter().map(|x| x + c).collect());
        let (e0, e1) = (op.energy(&fa).unwrap(), op.energy(&shifted).unwrap());
        prop_assert!((e0 - e1).abs() <= 1e-10 * e0.max(1.0));
        let bc = op.apply(&Field::constant(grid, c, Unit::Generic)).unwrap();
        prop_assert!(bc.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn robin_operator_is_positive(values in prop::collection::vec(-1.0f64..1.0, 25)) {
        prop_assume!(values.iter().any(|v| v.abs() > 1e-3));
        let grid = Grid::unit_square(5);
        let op = phasefield_core::grid::RobinOperator::new(grid);
        let mut y = vec![0.0; values.len()];
        op.apply(&values, &mut y);
        prop_assert!(phasefield_core::linalg::dot(&values, &y) > 0.0);
    }

    #[test]
    fn config_roundtrips_through_toml(eps in 0.05f64..0.95, lambda in 0.01f64..0.95, seed in any::<u64>()) {
        let c = RunConfig { eps, lambda, seed, ..RunConfig::default() };
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn rate_table_ratios_are_consistent(values in prop::collection::vec(0.0f64..1.0, 2..8)) {
        let params: Vec<f64> = (0..values.len()).map(|k| 0.5f64.powi(k as i32)).collect();
        let t = RateTable::new("t", &params, &values);
        for w in t.rows.windows(2) {
            prop_assert!(w[1].value > 0.0);
            prop_assert!((w[1].ratio.unwrap() - w[1].value / w[0].value).abs() <= 1e-15 * w[1].ratio.unwrap().abs());
        }
        for (r, v) in t.rows.iter().zip(&values) {
            prop_assert_eq!(r.floored, v.abs() < phasefield_core::harness::RATE_FLOOR);
        }
    }
}
