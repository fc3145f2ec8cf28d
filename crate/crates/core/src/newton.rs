//! Damped Newton iteration for one implicit time step.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FaceField, State};
use crate::grid::StaggeredGrid;
use crate::linear::{LinearSolver, LinearSolverConfig};
use crate::scheme::{residual, state_from_vec, state_to_vec, OperatorMatrices, Residual, SchemeParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Absolute tolerance on `max(dt |R_rho|_inf, |R_u|_inf)`.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// Step-length reduction factor used when the residual grows.
    pub damping: f64,
    /// Largest fraction of the current density a correction may remove.
    pub positivity_fraction: f64,
    pub max_backtracks: usize,
    pub linear: LinearSolverConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            max_newton_iters: 30,
            damping: 0.5,
            positivity_fraction: 0.9,
            max_backtracks: 30,
            linear: LinearSolverConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) {
            return Err(Error::Config(format!(
                "newton_tol must be > 0, got {}",
                self.newton_tol
            )));
        }
        if self.max_newton_iters == 0 {
            return Err(Error::Config("max_newton_iters must be >= 1".into()));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::Config(format!(
                "damping must lie in (0, 1), got {}",
                self.damping
            )));
        }
        if !(self.positivity_fraction > 0.0 && self.positivity_fraction < 1.0) {
            return Err(Error::Config(format!(
                "positivity_fraction must lie in (0, 1), got {}",
                self.positivity_fraction
            )));
        }
        self.linear.validate()
    }
}

/// Diagnostic record of a time step the nonlinear solver could not complete.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepFailure {
    /// Index of the step being computed (1-based).
    pub step: usize,
    /// Target time of the step.
    pub time: f64,
    pub reason: String,
    pub residual_history: Vec<f64>,
    /// Smallest density of the last accepted iterate.
    pub min_density: f64,
}

impl fmt::Display for StepFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step {} (t = {}) failed: {}; min density {:e}; residuals {:?}",
            self.step, self.time, self.reason, self.min_density, self.residual_history
        )
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: State,
    /// Number of accepted Newton updates.
    pub iterations: usize,
    pub residual_norm: f64,
    pub residual_history: Vec<f64>,
}

/// Newton driver holding the per-grid operator matrices and the linear
/// solver (whose symbolic factorization is reused across steps).
pub struct NewtonSolver {
    config: SolverConfig,
    ops: OperatorMatrices,
    linear: LinearSolver,
}

impl NewtonSolver {
    pub fn new(grid: StaggeredGrid, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        faer::set_global_parallelism(faer::Par::Seq);
        Ok(Self {
            config,
            ops: OperatorMatrices::new(grid),
            linear: LinearSolver::new(config.linear),
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Advances `prev` by one step of `params.dt`. The forcing, when present,
    /// is evaluated at the new time level.
    pub fn step(&mut self, params: &SchemeParams, prev: &State) -> Result<StepOutcome> {
        let grid = *prev.grid();
        self.ops.grid().ensure_same(&grid)?;
        let source = params.source(&grid, prev.time + params.dt);
        self.step_with_source(params, prev, source.as_ref())
    }

    pub fn step_with_source(
        &mut self,
        params: &SchemeParams,
        prev: &State,
        source: Option<&FaceField>,
    ) -> Result<StepOutcome> {
        let cfg = self.config;
        let dt = params.dt;
        let mut trial = prev.clone();
        trial.step = prev.step + 1;
        trial.time = prev.time + dt;

        let fail = |reason: String, history: &[f64], s: &State| {
            Error::StepFailure(Box::new(StepFailure {
                step: prev.step + 1,
                time: prev.time + dt,
                reason,
                residual_history: history.to_vec(),
                min_density: s.min_density(),
            }))
        };

        let mut res = match residual(params, prev, &trial, source) {
            Ok(r) => r,
            Err(Error::Domain(m)) => return Err(fail(m, &[], &trial)),
            Err(e) => return Err(e),
        };
        let mut norm = res.scaled_max_norm(dt);
        let mut history = vec![norm];
        let mut iterations = 0;
        // Krylov forcing term (Eisenstat-Walker, choice 2)
        let mut eta: f64 = 1e-4;

        while !(norm <= cfg.newton_tol) {
            if !norm.is_finite() {
                return Err(fail("non-finite residual".into(), &history, &trial));
            }
            if iterations >= cfg.max_newton_iters {
                return Err(fail(
                    format!("no convergence in {} Newton iterations", cfg.max_newton_iters),
                    &history,
                    &trial,
                ));
            }
            let jac = match self.ops.jacobian(params, &trial) {
                Ok(j) => j,
                Err(Error::Domain(m)) => return Err(fail(m, &history, &trial)),
                Err(e) => return Err(e),
            };
            let rhs: Vec<f64> = res.to_vec().iter().map(|v| -v).collect();
            let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
            let floor = 0.1 * cfg.newton_tol / rhs_norm.max(f64::MIN_POSITIVE);
            let delta = match self.linear.solve_to(&jac, &rhs, eta.max(floor).min(1e-4)) {
                Ok(d) => d,
                Err(e @ (Error::LinearBreakdown(_) | Error::LinearNotConverged { .. })) => {
                    return Err(fail(e.to_string(), &history, &trial))
                }
                Err(e) => return Err(e),
            };

            let x = state_to_vec(&trial);
            let ncell = grid_cells(&trial);
            let mut tau: f64 = 1.0;
            for (r, d) in x[..ncell].iter().zip(&delta[..ncell]) {
                if *d < 0.0 {
                    tau = tau.min(cfg.positivity_fraction * r / -d);
                }
            }

            let mut accepted = None;
            for _ in 0..=cfg.max_backtracks {
                let cand: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + tau * b).collect();
                let cand = state_from_vec(&trial, &cand)?;
                if cand.min_density() > 0.0 {
                    match residual(params, prev, &cand, source) {
                        Ok(r) => {
                            let n = r.scaled_max_norm(dt);
                            if n.is_finite() && n < norm {
                                accepted = Some((cand, r, n));
                                break;
                            }
                        }
                        Err(Error::Domain(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
                tau *= cfg.damping;
            }
            let Some((cand, r, n)) = accepted else {
                return Err(fail("line search found no residual decrease".into(), &history, &trial));
            };
            eta = 0.9 * (n / norm).powi(2);
            trial = cand;
            res = r;
            norm = n;
            history.push(norm);
            iterations += 1;
        }

        // final acceptance check on a freshly evaluated residual
        let check: Residual = residual(params, prev, &trial, source)?;
        let final_norm = check.scaled_max_norm(dt);
        if !(final_norm <= cfg.newton_tol) || !(trial.min_density() > 0.0) {
            return Err(fail("accepted iterate fails the final check".into(), &history, &trial));
        }
        Ok(StepOutcome {
            state: trial,
            iterations,
            residual_norm: final_norm,
            residual_history: history,
        })
    }
}

fn grid_cells(s: &State) -> usize {
    s.grid().cell_count()
}

/// One implicit step from `prev` with a freshly built solver.
pub fn newton_step_solve(params: &SchemeParams, prev: &State, config: &SolverConfig) -> Result<State> {
    let mut solver = NewtonSolver::new(*prev.grid(), *config)?;
    Ok(solver.step(params, prev)?.state)
}
