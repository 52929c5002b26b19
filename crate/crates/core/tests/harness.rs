use phasefield_core::expr::Expr;
use phasefield_core::harness::{self, RATE_FLOOR};
use phasefield_core::{Assumption, Coupling, Error, RunConfig};

fn base(cells: usize) -> RunConfig {
    let mut c = RunConfig {
        final_time: 0.02,
        time_step: Some(0.002),
        coupling: Coupling::PerStep,
        ..RunConfig::default()
    };
    c.grid.cells = vec![cells, cells];
    c
}

#[test]
fn equilibrium_lambda_sweep_is_flat() {
    let mut c = base(8);
    c.phase.initial = Expr::constant(0.0);
    let s = harness::sweep_lambda(&c, &[0.5, 0.25, 0.125]).unwrap();
    assert!(s.cauchy.rows.iter().all(|r| r.floored && r.value == RATE_FLOOR));
    assert!(s.beta_l2.rows.iter().all(|r| r.floored));
}

#[test]
fn constant_fields_close_every_eps_gap() {
    let mut c = base(24);
    c.phase.initial = Expr::constant(0.1);
    let s = harness::sweep_epsilon(&c, &[0.4, 0.2]).unwrap();
    assert!(s.solution_gap.rows.iter().all(|r| r.floored));
    assert!(s.energy_gap.rows.iter().all(|r| r.floored));
    assert_eq!(s.local_dirichlet_energy, 0.0);
}

#[test]
fn eps_below_resolution_is_rejected() {
    let c = base(16);
    let err = harness::sweep_epsilon(&c, &[0.4, 0.2, 0.1]).unwrap_err();
    assert!(matches!(err, Error::Config { label: Assumption::Schema, .. }), "{err}");
}

#[test]
fn lambda_cauchy_column_shrinks_fourfold_over_five_rungs() {
    // Frozen from the first verified run, where delta_K / delta_0 = 0.085.
    let mut c = base(16);
    c.final_time = 0.05;
    c.time_step = Some(0.0025);
    let s = harness::sweep_lambda(&c, &harness::dyadic_ladder(0.5, 6)).unwrap();
    let d = s.cauchy.values();
    assert_eq!(d.len(), 5);
    assert!(s.cauchy_decreasing, "{d:?}");
    assert!(d[4] < d[0] / 4.0, "{d:?}");
    let g = s.graph_distance.values();
    assert!(g.windows(2).all(|w| w[1] < w[0]), "{g:?}");
}

#[test]
fn operator_report_passes_on_defaults() {
    let r = harness::check_operator_lemmas(&RunConfig::default()).unwrap();
    for b in &r.batteries {
        assert!(b.passed, "{} {}", b.name, b.metrics);
    }
    assert!(r.passed);
}

#[test]
fn operator_report_rejects_a_misnormalized_kernel() {
    let mut c = RunConfig::default();
    c.kernel.normalization = Some(1.0);
    let err = harness::check_operator_lemmas(&c).unwrap_err();
    assert_eq!(err.assumption(), Some(Assumption::C1));
}

#[test]
fn rate_table_csv_layout() {
    let t = harness::RateTable::new("x", &[0.4, 0.2], &[2.0, 1.0]);
    assert_eq!(t.to_csv(), "rung,value,ratio\n0,2.000000000000e0,\n1,1.000000000000e0,5.000000000000e-1\n");
}
