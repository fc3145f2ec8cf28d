//! The implicit MAC scheme: nonlinear residuals of the discrete continuity
//! and momentum equations, their sparse linearization, and per-step
//! structural diagnostics.
//!
//! Unknown ordering for the stacked system is `[rho | u_0 | u_1 (| u_2)]`,
//! each block of length `n^d` in the grid's linear order.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{
    cell_average_axis, face_average_axis, integrate_cells, project_faces, CellField, FaceField, State,
};
use crate::grid::{StaggeredGrid, MAX_DIM};
use crate::operators::{
    div_cells, grad_bidual, laplace_cells, laplace_face_component, neg, partial_cells, partial_edges, pos,
    upwind_divergence,
};
use crate::sparse::CsrMatrix;
use crate::thermo::{total_energy, GasLaw};

/// Momentum source `f_i(t, x)`; arguments are time, component, position.
pub type Forcing = Arc<dyn Fn(f64, usize, &[f64; MAX_DIM]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct SchemeParams {
    pub law: GasLaw,
    pub mu: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub dt: f64,
    pub t_end: f64,
    pub forcing: Option<Forcing>,
}

impl fmt::Debug for SchemeParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SchemeParams")
            .field("law", &self.law)
            .field("mu", &self.mu)
            .field("lambda", &self.lambda)
            .field("alpha", &self.alpha)
            .field("dt", &self.dt)
            .field("t_end", &self.t_end)
            .field("forcing", &self.forcing.is_some())
            .finish()
    }
}

impl SchemeParams {
    pub fn new(law: GasLaw, mu: f64, lambda: f64, alpha: f64, dt: f64, t_end: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::Config(format!("shear viscosity must be > 0, got {mu}")));
        }
        if !(mu + lambda >= 0.0) {
            return Err(Error::Config(format!("need mu + lambda >= 0, got {}", mu + lambda)));
        }
        if !alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be finite, got {alpha}")));
        }
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time step must be > 0, got {dt}")));
        }
        if !(t_end >= dt * (1.0 - 1e-12)) {
            return Err(Error::Config(format!("end time {t_end} shorter than one step {dt}")));
        }
        Ok(Self {
            law,
            mu,
            lambda,
            alpha,
            dt,
            t_end,
            forcing: None,
        })
    }

    pub fn with_forcing(mut self, f: Forcing) -> Self {
        self.forcing = Some(f);
        self
    }

    /// Number of steps `N_t = T / dt`, rounded to the nearest integer.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }

    /// Message when `alpha` lies outside the admissible range for this
    /// `gamma` and dimension: `(1, 2 gamma - d/3)` for `gamma < 2`, `(1, inf)`
    /// otherwise.
    pub fn alpha_warning(&self, dim: usize) -> Option<String> {
        let gamma = self.law.gamma();
        let upper = if gamma < 2.0 {
            2.0 * gamma - dim as f64 / 3.0
        } else {
            f64::INFINITY
        };
        if self.alpha > 1.0 && self.alpha < upper {
            None
        } else {
            Some(format!(
                "alpha = {} outside the admissible range (1, {upper}) for gamma = {gamma}, d = {dim}",
                self.alpha
            ))
        }
    }

    /// `Pi_E f(t, .)`, or `None` when unforced.
    pub fn source(&self, grid: &StaggeredGrid, t: f64) -> Option<FaceField> {
        self.forcing.as_ref().map(|f| project_faces(grid, |i, x| f(t, i, x)))
    }
}

/// Stacked residual of both equations.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub mass: CellField,
    pub momentum: FaceField,
}

impl Residual {
    /// `[mass | momentum_0 | ...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.mass.values().to_vec();
        for c in self.momentum.components() {
            v.extend_from_slice(c);
        }
        v
    }

    /// Max norm with the mass rows scaled by `dt`.
    pub fn scaled_max_norm(&self, dt: f64) -> f64 {
        let m = self.mass.max_abs() * dt;
        m.max(self.momentum.max_abs())
    }

    pub fn is_finite(&self) -> bool {
        self.mass.is_finite() && self.momentum.is_finite()
    }
}

fn check_shapes(prev: &State, trial: &State) -> Result<StaggeredGrid> {
    let g = *prev.grid();
    g.ensure_same(trial.grid())?;
    g.ensure_same(prev.velocity.grid())?;
    g.ensure_same(trial.velocity.grid())?;
    Ok(g)
}

/// `D_t rho + div_Up[rho, u] - h^alpha Delta_M rho` per cell.
pub fn residual_density(params: &SchemeParams, prev: &State, trial: &State) -> Result<CellField> {
    let g = check_shapes(prev, trial)?;
    let ha = g.h().powf(params.alpha);
    let inv_dt = 1.0 / params.dt;
    let conv = upwind_divergence(&trial.density, &trial.velocity);
    let diff = laplace_cells(&trial.density);
    let rho = trial.density.values();
    let rho0 = prev.density.values();
    Ok(CellField::from_fn(g, |k| {
        (rho[k] - rho0[k]) * inv_dt + conv.values()[k] - ha * diff.values()[k]
    }))
}

/// Momentum residual at `t`; the forcing (when configured) is projected at `t`.
pub fn residual_momentum(params: &SchemeParams, prev: &State, trial: &State, t: f64) -> Result<FaceField> {
    let source = params.source(trial.grid(), t);
    residual_momentum_with_source(params, prev, trial, source.as_ref())
}

/// Momentum residual with a precomputed source term `Pi_E f`.
pub fn residual_momentum_with_source(
    params: &SchemeParams,
    prev: &State,
    trial: &State,
    source: Option<&FaceField>,
) -> Result<FaceField> {
    let g = check_shapes(prev, trial)?;
    let d = g.dim();
    let rho = &trial.density;
    let min = rho.min();
    if !(min > 0.0) {
        return Err(Error::Domain(format!("nonpositive trial density {min:e}")));
    }
    let ha = g.h().powf(params.alpha);
    let inv_dt = 1.0 / params.dt;
    let pressure = CellField::from_values(
        g,
        rho.values()
            .iter()
            .map(|&r| params.law.pressure(r))
            .collect::<Result<_>>()?,
    )?;
    let div_u = div_cells(&trial.velocity);
    let grad_rho: Vec<Vec<f64>> = (0..d).map(|j| partial_edges(rho, j)).collect();

    let mut comps = Vec::with_capacity(d);
    for i in 0..d {
        let u_i = trial.velocity.component(i);
        let ubar = cell_average_axis(&g, u_i, i);
        let ubar_prev = cell_average_axis(&g, prev.velocity.component(i), i);
        let mom = rho.zip_with(&ubar, |a, b| a * b)?;
        let mom_prev = prev.density.zip_with(&ubar_prev, |a, b| a * b)?;

        let dm = mom.zip_with(&mom_prev, |a, b| (a - b) * inv_dt)?;
        let time = face_average_axis(&dm, i);
        let conv = face_average_axis(&upwind_divergence(&mom, &trial.velocity), i);
        let dp = partial_edges(&pressure, i);
        let lap = laplace_face_component(&g, u_i);
        let graddiv = partial_edges(&div_u, i);

        // h^alpha sum_j d_M^j( {bar u_i}^(j) d_E^j rho ), then averaged onto E_i
        let mut art = CellField::zeros(g);
        for (j, grj) in grad_rho.iter().enumerate() {
            let flux: Vec<f64> = face_average_axis(&ubar, j)
                .iter()
                .zip(grj)
                .map(|(a, b)| a * b)
                .collect();
            let dj = partial_cells(&g, &flux, j);
            art.values_mut().iter_mut().zip(dj.values()).for_each(|(a, b)| *a += b);
        }
        let art = face_average_axis(&art, i);

        let f_i = source.map(|s| s.component(i));
        let comp: Vec<f64> = (0..g.face_count())
            .map(|k| {
                time[k] + conv[k] + dp[k]
                    - params.mu * lap[k]
                    - (params.mu + params.lambda) * graddiv[k]
                    - ha * art[k]
                    - f_i.map_or(0.0, |f| f[k])
            })
            .collect();
        comps.push(comp);
    }
    FaceField::from_components(g, comps)
}

/// Both residuals at time `t` (the new time level).
pub fn residual(params: &SchemeParams, prev: &State, trial: &State, source: Option<&FaceField>) -> Result<Residual> {
    Ok(Residual {
        mass: residual_density(params, prev, trial)?,
        momentum: residual_momentum_with_source(params, prev, trial, source)?,
    })
}

/// Constant sparse operators of one grid, reused by every Jacobian assembly.
pub struct OperatorMatrices {
    grid: StaggeredGrid,
    /// `{.}^(a)`: cells -> faces of axis `a`.
    face_avg: Vec<CsrMatrix>,
    /// `bar .`: faces of axis `a` -> cells.
    cell_avg: Vec<CsrMatrix>,
    /// `d_E^(a)`: cells -> faces of axis `a`.
    grad: Vec<CsrMatrix>,
    /// `d_M^(a)`: faces of axis `a` -> cells.
    dcell: Vec<CsrMatrix>,
    /// `+e_a` neighbour selection.
    shift_plus: Vec<CsrMatrix>,
    lap: CsrMatrix,
    /// `{d_M^(a) .}^(i)` indexed `[i][a]`.
    avg_dcell: Vec<Vec<CsrMatrix>>,
    /// `d_E^(i) d_M^(a)` indexed `[i][a]`.
    grad_dcell: Vec<Vec<CsrMatrix>>,
    /// `{bar .}^(j)` of component `i`, indexed `[j][i]`.
    avg_bar: Vec<Vec<CsrMatrix>>,
}

impl OperatorMatrices {
    pub fn new(grid: StaggeredGrid) -> Self {
        let n = grid.cell_count();
        let d = grid.dim();
        let h = grid.h();
        let id = CsrMatrix::identity(n);
        let shift_plus: Vec<_> = (0..d)
            .map(|a| CsrMatrix::selection(n, n, |k| grid.shift(k, a, true)))
            .collect();
        let shift_minus: Vec<_> = (0..d)
            .map(|a| CsrMatrix::selection(n, n, |k| grid.shift(k, a, false)))
            .collect();
        let face_avg: Vec<_> = shift_plus.iter().map(|s| id.add_scaled(0.5, s, 0.5)).collect();
        let cell_avg: Vec<_> = shift_minus.iter().map(|s| id.add_scaled(0.5, s, 0.5)).collect();
        let grad: Vec<_> = shift_plus
            .iter()
            .map(|s| s.add_scaled(1.0 / h, &id, -1.0 / h))
            .collect();
        let dcell: Vec<_> = shift_minus
            .iter()
            .map(|s| id.add_scaled(1.0 / h, s, -1.0 / h))
            .collect();
        let mut lap = CsrMatrix::from_triplets(n, n, &[]);
        for a in 0..d {
            lap = lap.add(&shift_plus[a].add(&shift_minus[a]).add_scaled(1.0, &id, -2.0));
        }
        let lap = lap.scaled(1.0 / (h * h));
        let avg_dcell = (0..d)
            .map(|i| (0..d).map(|a| face_avg[i].mul(&dcell[a])).collect())
            .collect();
        let grad_dcell = (0..d)
            .map(|i| (0..d).map(|a| grad[i].mul(&dcell[a])).collect())
            .collect();
        let avg_bar = (0..d)
            .map(|j| (0..d).map(|i| face_avg[j].mul(&cell_avg[i])).collect())
            .collect();
        Self {
            grid,
            face_avg,
            cell_avg,
            grad,
            dcell,
            shift_plus,
            lap,
            avg_dcell,
            grad_dcell,
            avg_bar,
        }
    }

    pub fn grid(&self) -> &StaggeredGrid {
        &self.grid
    }

    /// `Delta` stencil matrix (identical on cells and on each dual grid).
    pub fn laplacian(&self) -> &CsrMatrix {
        &self.lap
    }

    /// Linearization of `Up^(a)[r, .]` with respect to the transported
    /// quantity: `diag(u^+) + diag(u^-) S_+`.
    fn upwind_transport(&self, a: usize, u: &[f64]) -> CsrMatrix {
        let plus: Vec<f64> = u.iter().map(|&v| pos(v)).collect();
        let minus: Vec<f64> = u.iter().map(|&v| neg(v)).collect();
        CsrMatrix::diagonal(&plus).add(&self.shift_plus[a].clone().scale_rows(&minus))
    }

    /// Derivative of `Up^(a)[r, u]_sigma` with respect to `u_sigma` with the
    /// sign of `u` frozen and `sign(0) = 0`: `{r} - h/2 sign(u) d_E r`.
    fn upwind_velocity_weight(&self, r: &CellField, a: usize, u: &[f64]) -> Vec<f64> {
        let avg = face_average_axis(r, a);
        let dr = partial_edges(r, a);
        let half_h = 0.5 * self.grid.h();
        (0..u.len())
            .map(|k| {
                let s = if u[k] > 0.0 {
                    1.0
                } else if u[k] < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                avg[k] - half_h * s * dr[k]
            })
            .collect()
    }

    /// Jacobian of the stacked residual with respect to `(rho, u)` at `trial`.
    pub fn jacobian(&self, params: &SchemeParams, trial: &State) -> Result<CsrMatrix> {
        let g = self.grid;
        g.ensure_same(trial.grid())?;
        let d = g.dim();
        let n = g.cell_count();
        let ha = g.h().powf(params.alpha);
        let inv_dt = 1.0 / params.dt;
        let rho = &trial.density;
        if !(rho.min() > 0.0) {
            return Err(Error::Domain(format!("nonpositive trial density {:e}", rho.min())));
        }
        let u: Vec<&[f64]> = (0..d).map(|a| trial.velocity.component(a)).collect();
        let transport: Vec<CsrMatrix> = (0..d).map(|a| self.upwind_transport(a, u[a])).collect();

        // 1/dt I + sum_a d_M^a (diag(u^+) + diag(u^-) S_+)
        let mut mconv = CsrMatrix::identity(n).scaled(inv_dt);
        for a in 0..d {
            mconv = mconv.add(&self.dcell[a].mul(&transport[a]));
        }

        let mut blocks: Vec<Vec<CsrMatrix>> = Vec::with_capacity(d + 1);

        // mass rows
        let mut row = Vec::with_capacity(d + 1);
        row.push(mconv.add_scaled(1.0, &self.lap, -ha));
        for a in 0..d {
            let w = self.upwind_velocity_weight(rho, a, u[a]);
            row.push(self.dcell[a].clone().scale_cols(&w));
        }
        blocks.push(row);

        let dp: Vec<f64> = rho
            .values()
            .iter()
            .map(|&r| params.law.pressure_derivative(r))
            .collect();
        let grad_rho: Vec<Vec<f64>> = (0..d).map(|j| partial_edges(rho, j)).collect();

        for i in 0..d {
            let ubar = cell_average_axis(&g, u[i], i);
            let mom = rho.zip_with(&ubar, |a, b| a * b)?;
            let avg_mconv = self.face_avg[i].mul(&mconv);

            // d/d rho
            let mut jr = avg_mconv.clone().scale_cols(ubar.values());
            jr = jr.add(&self.grad[i].clone().scale_cols(&dp));
            for j in 0..d {
                let ubar_j = face_average_axis(&ubar, j);
                let inner = self.grad[j].clone().scale_rows(&ubar_j);
                jr = jr.add_scaled(1.0, &self.avg_dcell[i][j].mul(&inner), -ha);
            }

            let mut row = Vec::with_capacity(d + 1);
            row.push(jr);
            for a in 0..d {
                let w = self.upwind_velocity_weight(&mom, a, u[a]);
                let mut ja = self.avg_dcell[i][a].clone().scale_cols(&w).add_scaled(
                    1.0,
                    &self.grad_dcell[i][a],
                    -(params.mu + params.lambda),
                );
                if a == i {
                    ja = ja.add(&avg_mconv.clone().scale_cols(rho.values()).mul(&self.cell_avg[i]));
                    ja = ja.add_scaled(1.0, &self.lap, -params.mu);
                    for j in 0..d {
                        let inner = self.avg_bar[j][i].clone().scale_rows(&grad_rho[j]);
                        ja = ja.add_scaled(1.0, &self.avg_dcell[i][j].mul(&inner), -ha);
                    }
                }
                row.push(ja);
            }
            blocks.push(row);
        }

        let refs: Vec<Vec<Option<&CsrMatrix>>> = blocks.iter().map(|r| r.iter().map(Some).collect()).collect();
        Ok(CsrMatrix::from_blocks(&refs))
    }
}

/// Jacobian of the stacked residual at `trial`. The previous state enters the
/// residual only through constant terms.
pub fn assemble_jacobian(params: &SchemeParams, prev: &State, trial: &State) -> Result<CsrMatrix> {
    let g = check_shapes(prev, trial)?;
    OperatorMatrices::new(g).jacobian(params, trial)
}

/// Stacks a state into `[rho | u_0 | ...]`.
pub fn state_to_vec(s: &State) -> Vec<f64> {
    let mut v = s.density.values().to_vec();
    for c in s.velocity.components() {
        v.extend_from_slice(c);
    }
    v
}

/// Inverse of [`state_to_vec`], keeping `step` and `time` from `template`.
pub fn state_from_vec(template: &State, v: &[f64]) -> Result<State> {
    let g = *template.grid();
    let n = g.cell_count();
    if v.len() != n * (g.dim() + 1) {
        return Err(Error::Config("state vector length mismatch".into()));
    }
    let density = CellField::from_values(g, v[..n].to_vec())?;
    let velocity = FaceField::from_components(g, (0..g.dim()).map(|i| v[(i + 1) * n..(i + 2) * n].to_vec()).collect())?;
    Ok(State {
        density,
        velocity,
        step: template.step,
        time: template.time,
    })
}

/// Per-step structural record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub mass: f64,
    pub min_density: f64,
    pub energy: f64,
    /// `E(prev) - E(s) - dt (mu |grad_eps u|^2 + (mu + lambda) |div_h u|^2)`.
    pub energy_dissipation_slack: f64,
}

pub fn diagnostics(params: &SchemeParams, s: &State, prev: &State) -> Result<Diagnostics> {
    let energy = total_energy(&params.law, s)?;
    let energy_prev = total_energy(&params.law, prev)?;
    let grad = grad_bidual(&s.velocity).norm_sq();
    let div = div_cells(&s.velocity);
    let div_sq = crate::fields::cell_inner(&div, &div);
    let dissipation = params.dt * (params.mu * grad + (params.mu + params.lambda) * div_sq);
    Ok(Diagnostics {
        mass: integrate_cells(&s.density),
        min_density: s.min_density(),
        energy,
        energy_dissipation_slack: energy_prev - energy - dissipation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::project_faces;

    fn params(gamma: f64, dt: f64) -> SchemeParams {
        SchemeParams::new(GasLaw::new(1.0, gamma).unwrap(), 1.0, 0.0, 1.6, dt, 1.0).unwrap()
    }

    fn constant_state(g: StaggeredGrid, rho: f64, u: &[f64]) -> State {
        State::new(CellField::constant(g, rho), FaceField::constant(g, u)).unwrap()
    }

    #[test]
    fn params_validation() {
        let law = GasLaw::new(1.0, 1.4).unwrap();
        assert!(SchemeParams::new(law, 0.0, 0.0, 1.6, 0.1, 1.0).is_err());
        assert!(SchemeParams::new(law, 1.0, -1.5, 1.6, 0.1, 1.0).is_err());
        assert!(SchemeParams::new(law, 1.0, -1.0, 1.6, 0.1, 1.0).is_ok());
        assert!(SchemeParams::new(law, 1.0, 0.0, 1.6, 0.0, 1.0).is_err());
        assert!(SchemeParams::new(law, 1.0, 0.0, 1.6, 0.2, 0.1).is_err());
        let p = SchemeParams::new(law, 1.0, 0.0, 1.6, 0.025, 0.1).unwrap();
        assert_eq!(p.n_steps(), 4);
        assert!(p.alpha_warning(2).is_none());
        let p = SchemeParams::new(law, 1.0, 0.0, 2.5, 0.1, 1.0).unwrap();
        assert!(p.alpha_warning(2).is_some());
        let p = SchemeParams::new(GasLaw::new(1.0, 2.0).unwrap(), 1.0, 0.0, 7.0, 0.1, 1.0).unwrap();
        assert!(p.alpha_warning(3).is_none());
        let p = SchemeParams::new(law, 1.0, 0.0, 0.9, 0.1, 1.0).unwrap();
        assert!(p.alpha_warning(2).is_some());
    }

    #[test]
    fn constant_state_is_steady() {
        for (d, n) in [(2, 4), (3, 3)] {
            let g = StaggeredGrid::new(d, n).unwrap();
            let s = constant_state(g, 1.7, &vec![0.0; d]);
            let p = params(1.4, 0.1);
            let r = residual(&p, &s, &s, None).unwrap();
            assert_eq!(r.scaled_max_norm(p.dt), 0.0);
        }
    }

    #[test]
    fn uniform_flow_is_steady() {
        // constant density transported by a constant velocity
        let g = StaggeredGrid::new(2, 4).unwrap();
        let s = constant_state(g, 1.3, &[0.7, -0.4]);
        let p = params(2.0, 0.05);
        let r = residual(&p, &s, &s, None).unwrap();
        assert!(r.scaled_max_norm(p.dt) < 1e-13);
    }

    #[test]
    fn pressure_only_hand_check() {
        // columns rho = (1, 2) along axis 0, u = 0, a = 1, gamma = 2: (4 - 1)/h
        let g = StaggeredGrid::new(2, 2).unwrap();
        let rho = CellField::from_values(g, vec![1.0, 2.0, 1.0, 2.0]).unwrap();
        let s = State::new(rho, FaceField::zeros(g)).unwrap();
        let p = params(2.0, 0.1);
        let r = residual_momentum(&p, &s, &s, 0.0).unwrap();
        assert_eq!(r.component(0), &[6.0, -6.0, 6.0, -6.0]);
        assert_eq!(r.component(1), &[0.0; 4]);
    }

    #[test]
    fn nonpositive_density_is_a_domain_error() {
        let g = StaggeredGrid::new(2, 3).unwrap();
        let s = constant_state(g, 1.0, &[0.0, 0.0]);
        let mut bad = s.clone();
        bad.density.values_mut()[4] = -0.1;
        let p = params(1.4, 0.1);
        assert!(matches!(residual_momentum(&p, &s, &bad, 0.1), Err(Error::Domain(_))));
        // the continuity residual stays evaluable
        assert!(residual_density(&p, &s, &bad).is_ok());
    }

    #[test]
    fn mass_residual_sums_to_mass_change() {
        let g = StaggeredGrid::new(2, 5).unwrap();
        let prev = State::new(
            CellField::from_fn(g, |k| 1.0 + 0.1 * (k % 3) as f64),
            FaceField::zeros(g),
        )
        .unwrap();
        let trial = State::new(
            CellField::from_fn(g, |k| 1.0 + 0.05 * (k % 7) as f64),
            FaceField::from_fn(g, |i, k| ((k * 3 + i) % 5) as f64 - 2.0),
        )
        .unwrap();
        let p = params(1.4, 0.2);
        let r = residual_density(&p, &prev, &trial).unwrap();
        let lhs = integrate_cells(&r);
        let rhs = (integrate_cells(&trial.density) - integrate_cells(&prev.density)) / p.dt;
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let a = constant_state(StaggeredGrid::new(2, 4).unwrap(), 1.0, &[0.0, 0.0]);
        let b = constant_state(StaggeredGrid::new(2, 8).unwrap(), 1.0, &[0.0, 0.0]);
        let p = params(1.4, 0.1);
        assert!(matches!(residual_density(&p, &a, &b), Err(Error::GridMismatch { .. })));
        assert!(matches!(assemble_jacobian(&p, &a, &b), Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn jacobian_mass_row_sums() {
        // a uniform density shift changes the mass rows by (1/dt + div_h u) times the shift
        let g = StaggeredGrid::new(2, 4).unwrap();
        let s = State::new(
            CellField::from_fn(g, |k| 1.0 + 0.1 * (k % 5) as f64),
            project_faces(&g, |i, x| (6.0 * x[i]).sin() + 0.3 * x[1 - i]),
        )
        .unwrap();
        let p = params(1.4, 0.25);
        let j = assemble_jacobian(&p, &s, &s).unwrap();
        let div = div_cells(&s.velocity);
        for row in 0..g.cell_count() {
            let sum: f64 = j.row(row).filter(|&(c, _)| c < g.cell_count()).map(|(_, v)| v).sum();
            let want = 1.0 / p.dt + div.values()[row];
            assert!((sum - want).abs() < 1e-10, "row {row}: {sum} vs {want}");
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let g = StaggeredGrid::new(2, 4).unwrap();
        let prev = State::new(
            CellField::from_fn(g, |k| 1.0 + 0.2 * ((k * 7) % 5) as f64),
            project_faces(&g, |i, x| (6.0 * x[1 - i]).cos() + 0.2),
        )
        .unwrap();
        let trial = State::new(
            CellField::from_fn(g, |k| 0.8 + 0.1 * ((k * 3) % 7) as f64),
            project_faces(&g, |i, x| (6.0 * x[i]).sin() + 0.37 + 0.1 * i as f64),
        )
        .unwrap();
        let p = params(1.67, 0.1);
        let j = assemble_jacobian(&p, &prev, &trial).unwrap();
        let x = state_to_vec(&trial);
        let dir: Vec<f64> = (0..x.len()).map(|m| ((m * 37 % 11) as f64 - 5.0) / 5.0).collect();
        let eval = |e: f64| {
            let y: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + e * b).collect();
            residual(&p, &prev, &state_from_vec(&trial, &y).unwrap(), None)
                .unwrap()
                .to_vec()
        };
        let e = 1e-6;
        let (rp, rm) = (eval(e), eval(-e));
        let jd = j.mul_vec(&dir);
        let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * e)).collect();
        let err = jd.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = fd.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(err <= 1e-6 * scale, "{err} vs {scale}");
    }

    #[test]
    fn jacobian_pattern_is_state_independent() {
        let g = StaggeredGrid::new(2, 4).unwrap();
        let p = params(1.4, 0.1);
        let a = constant_state(g, 1.0, &[0.0, 0.0]);
        let b = State::new(
            CellField::from_fn(g, |k| 1.0 + 0.1 * k as f64),
            FaceField::from_fn(g, |i, k| (k as f64 - 7.5) * (i as f64 + 0.5)),
        )
        .unwrap();
        let ops = OperatorMatrices::new(g);
        assert!(ops
            .jacobian(&p, &a)
            .unwrap()
            .same_pattern(&ops.jacobian(&p, &b).unwrap()));
    }

    #[test]
    fn diagnostics_constant_state() {
        let g = StaggeredGrid::new(2, 4).unwrap();
        let s = constant_state(g, 1.2, &[0.0, 0.0]);
        let d = diagnostics(&params(1.4, 0.1), &s, &s).unwrap();
        assert_eq!(d.energy_dissipation_slack, 0.0);
        assert!((d.mass - 1.2).abs() < 1e-14);
        assert_eq!(d.min_density, 1.2);
    }
}
