use macflow::newton::{NewtonSolver, SolverConfig};
use macflow::runner::{simulate, ExperimentKind, RunConfig};
use macflow::scheme::SchemeParams;
use macflow::{Error, GasLaw};

#[test]
fn huge_time_step_never_returns_nonpositive_density() {
    let cfg = RunConfig {
        experiment: ExperimentKind::Gresho,
        gamma: 2.0,
        ..Default::default()
    };
    let prev = cfg.initial_state(16).unwrap();
    let params = SchemeParams::new(GasLaw::new(1.0, 2.0).unwrap(), 1.0, 0.0, 1.6, 100.0, 100.0).unwrap();
    let mut solver = NewtonSolver::new(*prev.grid(), SolverConfig::default()).unwrap();
    match solver.step(&params, &prev) {
        Ok(out) => {
            assert!(out.state.min_density() > 0.0);
            assert!(out.residual_norm <= 1e-10);
        }
        Err(Error::StepFailure(f)) => assert!(!f.residual_history.is_empty()),
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn manufactured_newton_iterations_are_bounded() {
    let cfg = RunConfig {
        n: vec![32],
        gamma: 1.4,
        ..Default::default()
    };
    let records = simulate(&cfg, 32, |_| Ok(())).unwrap();
    assert_eq!(records.len(), 4);
    for r in &records {
        assert!(r.newton_iterations <= 8, "{r:?}");
        assert!(r.mass_drift <= 1024.0 * 1e-10);
    }
}

#[test]
fn three_dimensional_runs() {
    let cfg = RunConfig {
        experiment: ExperimentKind::Custom,
        dim: 3,
        n: vec![6],
        t_end: 0.2,
        ..Default::default()
    };
    let records = simulate(&cfg, 6, |_| Ok(())).unwrap();
    assert!(!records.is_empty());
    assert!(records.iter().all(|r| r.min_density > 0.0 && r.energy_slack >= -1e-9));
}
