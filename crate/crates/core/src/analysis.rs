//! Space-time error norms against a reference solution, experimental orders
//! of convergence, and fine-to-coarse restriction of numerical references.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{cell_average_velocity, CellField, FaceField, State};
use crate::grid::StaggeredGrid;
use crate::operators::grad_bidual;
use crate::thermo::{relative_energy, GasLaw};

/// Reference density and velocity at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub density: CellField,
    pub velocity: FaceField,
}

impl Snapshot {
    pub fn of_state(s: &State) -> Self {
        Self {
            time: s.time,
            density: s.density.clone(),
            velocity: s.velocity.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorReport {
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub gamma: f64,
    /// `max_n E(rho^n, bar u^n | r, bar U)`.
    pub e_energy: f64,
    /// `(dt sum_n |grad_eps (u^n - U)|^2)^(1/2)`.
    pub e_grad_u: f64,
    /// `dt sum_n |rho^n - r|_{L^1}`.
    pub e_rho: f64,
    /// `(dt sum_n |u^n - U|^2_{L^2})^(1/2)`.
    pub e_u: f64,
    /// `max_n max_K |p(rho^n) - p(r)|`.
    pub e_p: f64,
    /// Number of time levels that entered the norms.
    pub levels: usize,
}

impl ErrorReport {
    /// `[e_E, e_gradu, e_rho, e_u, e_p]`.
    pub fn errors(&self) -> [f64; 5] {
        [self.e_energy, self.e_grad_u, self.e_rho, self.e_u, self.e_p]
    }
}

pub const ERROR_NAMES: [&str; 5] = ["e_E", "e_gradu", "e_rho", "e_u", "e_p"];

pub const CSV_HEADER: &str = "h,dt,gamma,e_E,eoc_E,e_gradu,eoc_gradu,e_rho,eoc_rho,e_u,eoc_u,e_p,eoc_p,config_hash";

/// `log2(e_coarse / e_fine)`; `None` unless both errors are positive and finite.
pub fn eoc(e_coarse: f64, e_fine: f64) -> Option<f64> {
    if e_coarse > 0.0 && e_fine > 0.0 && e_coarse.is_finite() && e_fine.is_finite() {
        Some((e_coarse / e_fine).log2())
    } else {
        None
    }
}

/// Least-squares fit of `log e = q log h + c`; returns `(q, R^2)`.
/// `None` with fewer than two points or nonpositive entries.
pub fn fit_order(h: &[f64], e: &[f64]) -> Option<(f64, f64)> {
    if h.len() != e.len() || h.len() < 2 || h.iter().chain(e).any(|v| !(*v > 0.0 && v.is_finite())) {
        return None;
    }
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let q = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((q, r2))
}

/// One CSV line (no newline). EOC columns are empty for the first row of a
/// sweep or when undefined.
pub fn csv_row(report: &ErrorReport, coarser: Option<&ErrorReport>, config_hash: &str) -> String {
    let mut cols = vec![
        format!("{:.6e}", report.h),
        format!("{:.6e}", report.dt),
        format!("{}", report.gamma),
    ];
    let errs = report.errors();
    let prev = coarser.map(|c| c.errors());
    for (i, e) in errs.iter().enumerate() {
        cols.push(format!("{e:.6e}"));
        let rate = prev.and_then(|p| eoc(p[i], *e));
        cols.push(rate.map(|r| format!("{r:.4}")).unwrap_or_default());
    }
    cols.push(config_hash.to_string());
    cols.join(",")
}

/// Running accumulation of the five norms over time levels.
#[derive(Clone, Debug)]
pub struct ErrorAccumulator {
    law: GasLaw,
    grid: StaggeredGrid,
    dt: f64,
    levels: usize,
    energy: f64,
    grad_sq: f64,
    rho_l1: f64,
    u_sq: f64,
    p_max: f64,
}

impl ErrorAccumulator {
    pub fn new(law: GasLaw, grid: StaggeredGrid, dt: f64) -> Self {
        Self {
            law,
            grid,
            dt,
            levels: 0,
            energy: 0.0,
            grad_sq: 0.0,
            rho_l1: 0.0,
            u_sq: 0.0,
            p_max: 0.0,
        }
    }

    /// Adds time level `s` compared with `(r, U)` on the same grid.
    pub fn add(&mut self, s: &State, r: &CellField, u_ref: &FaceField) -> Result<()> {
        let g = self.grid;
        g.ensure_same(s.grid())?;
        g.ensure_same(r.grid())?;
        g.ensure_same(u_ref.grid())?;
        let vol = g.cell_volume();

        let ubar_ref = cell_average_velocity(u_ref);
        self.energy = self.energy.max(relative_energy(&self.law, s, r, &ubar_ref)?);

        let du = s.velocity.zip_with(u_ref, |a, b| a - b)?;
        self.grad_sq += self.dt * grad_bidual(&du).norm_sq();
        let u_sq: f64 = du.components().iter().flatten().map(|x| x * x).sum();
        self.u_sq += self.dt * vol * u_sq;

        let mut l1 = 0.0;
        for (&rho, &rr) in s.density.values().iter().zip(r.values()) {
            l1 += (rho - rr).abs();
            let dp = (self.law.pressure(rho)? - self.law.pressure(rr)?).abs();
            self.p_max = self.p_max.max(dp);
        }
        self.rho_l1 += self.dt * vol * l1;
        self.levels += 1;
        Ok(())
    }

    pub fn finish(&self) -> Result<ErrorReport> {
        if self.levels == 0 {
            return Err(Error::Config("no time levels to measure".into()));
        }
        let report = ErrorReport {
            n: self.grid.n(),
            h: self.grid.h(),
            dt: self.dt,
            gamma: self.law.gamma(),
            e_energy: self.energy,
            e_grad_u: self.grad_sq.sqrt(),
            e_rho: self.rho_l1,
            e_u: self.u_sq.sqrt(),
            e_p: self.p_max,
            levels: self.levels,
        };
        if report.errors().iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::Invariant(format!("non-finite error norm in {report:?}")));
        }
        Ok(report)
    }
}

/// Norms of a run history (levels `1..=N_t`) against references at the same
/// times.
pub fn error_norms(law: &GasLaw, dt: f64, run: &[State], reference: &[Snapshot]) -> Result<ErrorReport> {
    if run.is_empty() || run.len() != reference.len() {
        return Err(Error::Config(format!(
            "{} run levels but {} reference snapshots",
            run.len(),
            reference.len()
        )));
    }
    let mut acc = ErrorAccumulator::new(*law, *run[0].grid(), dt);
    for (s, r) in run.iter().zip(reference) {
        check_time(s.time, r.time, dt)?;
        acc.add(s, &r.density, &r.velocity)?;
    }
    acc.finish()
}

fn check_time(t: f64, t_ref: f64, dt: f64) -> Result<()> {
    if (t - t_ref).abs() > 1e-9 * dt.max(1e-300) {
        return Err(Error::Config(format!(
            "reference time {t_ref} does not match level time {t}"
        )));
    }
    Ok(())
}

/// Fine-grid density and velocity averaged onto `coarse`: each coarse cell
/// gets the mean of the fine cells it contains, each coarse face the mean of
/// the fine faces of the same axis lying in its plane.
pub fn restrict_fields(
    density: &CellField,
    velocity: &FaceField,
    coarse: &StaggeredGrid,
) -> Result<(CellField, FaceField)> {
    let fine = *density.grid();
    fine.ensure_same(velocity.grid())?;
    if fine.dim() != coarse.dim() || !fine.n().is_multiple_of(coarse.n()) {
        return Err(Error::Config(format!(
            "fine grid n={} d={} does not nest coarse grid n={} d={}",
            fine.n(),
            fine.dim(),
            coarse.n(),
            coarse.dim()
        )));
    }
    let d = fine.dim();
    let ratio = fine.n() / coarse.n();
    let fd = density.values();

    // offsets of the ratio^d fine cells in the block of coarse cell 0
    let block: Vec<[usize; 3]> = (0..ratio.pow(d as u32))
        .map(|m| {
            let mut c = [0; 3];
            let mut m = m;
            for cj in c.iter_mut().take(d) {
                *cj = m % ratio;
                m /= ratio;
            }
            c
        })
        .collect();
    let fine_index = |c: &[usize; 3]| -> usize { (0..d).map(|j| c[j] * fine.stride(j)).sum() };

    let rho = CellField::from_fn(*coarse, |k| {
        let base = coarse.delinearize(k).coords;
        let sum: f64 = block
            .iter()
            .map(|off| {
                let mut c = [0; 3];
                for j in 0..d {
                    c[j] = base[j] * ratio + off[j];
                }
                fd[fine_index(&c)]
            })
            .sum();
        sum / block.len() as f64
    });

    let plane = ratio.pow(d as u32 - 1) as f64;
    let vel = FaceField::from_fn(*coarse, |i, k| {
        let base = coarse.delinearize(k).coords;
        let comp = velocity.component(i);
        let sum: f64 = block
            .iter()
            .filter(|off| off[i] == 0)
            .map(|off| {
                let mut c = [0; 3];
                for j in 0..d {
                    c[j] = if j == i {
                        (base[j] + 1) * ratio - 1
                    } else {
                        base[j] * ratio + off[j]
                    };
                }
                comp[fine_index(&c)]
            })
            .sum();
        sum / plane
    });
    Ok((rho, vel))
}

/// Restricts fine snapshots onto `coarse` at each of `times`; every time must
/// match a stored fine snapshot.
pub fn restrict_reference(fine: &[Snapshot], coarse: &StaggeredGrid, times: &[f64], dt: f64) -> Result<Vec<Snapshot>> {
    times
        .iter()
        .map(|&t| {
            let snap = fine
                .iter()
                .find(|s| check_time(s.time, t, dt).is_ok())
                .ok_or_else(|| Error::Config(format!("no fine snapshot at time {t}")))?;
            let (density, velocity) = restrict_fields(&snap.density, &snap.velocity, coarse)?;
            Ok(Snapshot {
                time: t,
                density,
                velocity,
            })
        })
        .collect()
}
