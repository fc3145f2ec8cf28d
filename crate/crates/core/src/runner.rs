//! Configuration-driven experiment runner: resolution sweeps, reference
//! solutions, per-step invariant checks, error tables and field dumps.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{csv_row, restrict_reference, ErrorAccumulator, ErrorReport, Snapshot, CSV_HEADER};
use crate::error::{Error, Result};
use crate::experiments::{vortex_velocity, FourierData, Manufactured};
use crate::fields::{
    cell_average_velocity, project_cells, project_faces, write_cell_csv, write_face_csv, CellField, State,
};
use crate::grid::StaggeredGrid;
use crate::newton::{NewtonSolver, SolverConfig};
use crate::scheme::{diagnostics, residual, SchemeParams};
use crate::thermo::GasLaw;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Forced cellular flow with a closed-form solution.
    Manufactured,
    /// Rotating vortex compared against a fine-grid numerical reference.
    Gresho,
    /// Fourier-mode initial data; diagnostics only.
    Custom,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DumpConfig {
    pub vtk: bool,
    pub csv: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub dim: usize,
    /// Resolutions of the sweep, strictly increasing.
    pub n: Vec<usize>,
    pub gamma: f64,
    pub a: f64,
    pub mu: f64,
    pub lambda: f64,
    pub alpha: f64,
    /// Time step bound `dt <= c_dt h`.
    pub c_dt: f64,
    pub t_end: f64,
    /// Decay rate of the manufactured solution.
    pub k: f64,
    /// Resolution of the numerical reference for the vortex problem.
    pub n_fine: usize,
    pub custom: FourierData,
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
    /// Field dumps are written every `snapshot_stride` steps.
    pub snapshot_stride: usize,
    pub dump: DumpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Manufactured,
            dim: 2,
            n: vec![32, 64, 128],
            gamma: 1.4,
            a: 1.0,
            mu: 1.0,
            lambda: 0.0,
            alpha: 1.6,
            c_dt: 1.0,
            t_end: 0.1,
            k: 0.01,
            n_fine: 256,
            custom: FourierData::default(),
            solver: SolverConfig::default(),
            output_dir: PathBuf::from("out"),
            snapshot_stride: 1,
            dump: DumpConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn law(&self) -> Result<GasLaw> {
        GasLaw::new(self.a, self.gamma)
    }

    /// Checks every parameter and returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(2..=3).contains(&self.dim) {
            return Err(Error::Config(format!("dimension must be 2 or 3, got {}", self.dim)));
        }
        if self.n.is_empty() {
            return Err(Error::Config("resolution list is empty".into()));
        }
        if self.n[0] < 2 || self.n.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "resolutions must be >= 2 and strictly increasing, got {:?}",
                self.n
            )));
        }
        if !(self.c_dt > 0.0 && self.c_dt.is_finite()) {
            return Err(Error::Config(format!("c_dt must be > 0, got {}", self.c_dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be > 0, got {}", self.t_end)));
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::Config(format!("decay rate k must be >= 0, got {}", self.k)));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Config("snapshot_stride must be >= 1".into()));
        }
        self.solver.validate()?;
        let mut warnings = Vec::new();
        for &n in &self.n {
            let p = self.scheme_params(n)?;
            if let Some(w) = p.alpha_warning(self.dim) {
                if !warnings.contains(&w) {
                    warnings.push(w);
                }
            }
        }
        if self.experiment == ExperimentKind::Gresho {
            let last = *self.n.last().expect("nonempty");
            if self.n_fine <= last {
                return Err(Error::Config(format!(
                    "reference resolution {} must exceed the finest sweep entry {last}",
                    self.n_fine
                )));
            }
            if self.n.windows(2).any(|w| !w[1].is_multiple_of(w[0])) || !self.n_fine.is_multiple_of(last) {
                return Err(Error::Config(format!(
                    "with a numerical reference each resolution must divide the next: {:?} -> {}",
                    self.n, self.n_fine
                )));
            }
        }
        if self.experiment == ExperimentKind::Custom && self.custom.density_amplitude.abs() >= 1.0 {
            return Err(Error::Config("custom density amplitude must be < 1".into()));
        }
        Ok(warnings)
    }

    /// Step count on an `n`-grid: the coarsest entry takes
    /// `ceil(T / (c_dt h))` steps and finer nested grids scale it by the
    /// refinement ratio, so every coarse time level is also a fine one.
    pub fn time_steps(&self, n: usize) -> usize {
        let steps_for = |n: usize| ((self.t_end * n as f64 / self.c_dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let base = self.n[0];
        if n.is_multiple_of(base) {
            steps_for(base) * (n / base)
        } else {
            steps_for(n)
        }
    }

    pub fn dt(&self, n: usize) -> f64 {
        self.t_end / self.time_steps(n) as f64
    }

    pub fn scheme_params(&self, n: usize) -> Result<SchemeParams> {
        let law = self.law()?;
        let p = SchemeParams::new(law, self.mu, self.lambda, self.alpha, self.dt(n), self.t_end)?;
        Ok(match self.experiment {
            ExperimentKind::Manufactured => p.with_forcing(self.manufactured().forcing_fn()),
            _ => p,
        })
    }

    fn manufactured(&self) -> Manufactured {
        Manufactured { k: self.k, mu: self.mu }
    }

    pub fn initial_state(&self, n: usize) -> Result<State> {
        let g = StaggeredGrid::new(self.dim, n)?;
        let d = self.dim;
        let (rho, u) = match self.experiment {
            ExperimentKind::Manufactured => {
                let m = self.manufactured();
                (
                    project_cells(&g, |x| m.density(0.0, x)),
                    project_faces(&g, |i, x| m.velocity(0.0, i, x)),
                )
            }
            ExperimentKind::Gresho => {
                let gamma = self.gamma;
                (
                    CellField::constant(g, 1.0),
                    project_faces(&g, |i, x| vortex_velocity(gamma, i, x)),
                )
            }
            ExperimentKind::Custom => {
                let c = self.custom;
                (
                    project_cells(&g, |x| c.density(d, x)),
                    project_faces(&g, |i, x| c.velocity(d, i, x)),
                )
            }
        };
        State::new(rho, u)
    }

    /// Hex digest (16 chars) of the configuration without its output location.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// One row of the per-step run log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub mass_drift: f64,
    pub min_density: f64,
    pub energy: f64,
    pub energy_slack: f64,
    pub newton_iterations: usize,
    pub residual: f64,
}

pub const STEP_LOG_HEADER: &str =
    "step,time,mass,mass_drift,min_density,energy,energy_slack,newton_iterations,residual";

impl StepRecord {
    fn csv(&self) -> String {
        format!(
            "{},{:.10e},{:.16e},{:.6e},{:.16e},{:.16e},{:.6e},{},{:.6e}",
            self.step,
            self.time,
            self.mass,
            self.mass_drift,
            self.min_density,
            self.energy,
            self.energy_slack,
            self.newton_iterations,
            self.residual
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolutionSummary {
    pub n: usize,
    pub dt: f64,
    pub steps: usize,
    pub max_mass_drift: f64,
    pub min_density: f64,
    pub min_energy_slack: f64,
    pub max_newton_iterations: usize,
    pub total_newton_iterations: usize,
    pub report: Option<ErrorReport>,
}

impl ResolutionSummary {
    fn from_records(n: usize, dt: f64, records: &[StepRecord], report: Option<ErrorReport>) -> Self {
        Self {
            n,
            dt,
            steps: records.len(),
            max_mass_drift: records.iter().map(|r| r.mass_drift).fold(0.0, f64::max),
            min_density: records.iter().map(|r| r.min_density).fold(f64::INFINITY, f64::min),
            min_energy_slack: records.iter().map(|r| r.energy_slack).fold(f64::INFINITY, f64::min),
            max_newton_iterations: records.iter().map(|r| r.newton_iterations).max().unwrap_or(0),
            total_newton_iterations: records.iter().map(|r| r.newton_iterations).sum(),
            report,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub config_hash: String,
    pub warnings: Vec<String>,
    pub resolutions: Vec<ResolutionSummary>,
    /// Error table (header plus one row per resolution) when a reference exists.
    pub table: Option<String>,
    pub reference: Option<ResolutionSummary>,
}

/// Time-marches the configured problem on an `n`-grid, checking the
/// structural invariants after every step and handing each new state to
/// `on_step`.
pub fn simulate(cfg: &RunConfig, n: usize, mut on_step: impl FnMut(&State) -> Result<()>) -> Result<Vec<StepRecord>> {
    let params = cfg.scheme_params(n)?;
    let mut state = cfg.initial_state(n)?;
    let grid = *state.grid();
    let mut solver = NewtonSolver::new(grid, cfg.solver)?;
    let tol = cfg.solver.newton_tol;
    let mass0 = crate::fields::integrate_cells(&state.density);
    let drift_cap = grid.cell_count() as f64 * tol;
    let slack_floor = -10.0 * tol;
    let steps = cfg.time_steps(n);
    let mut records = Vec::with_capacity(steps);
    on_step(&state)?;
    for _ in 0..steps {
        let out = solver.step(&params, &state)?;
        let diag = diagnostics(&params, &out.state, &state)?;
        let rec = StepRecord {
            step: out.state.step,
            time: out.state.time,
            mass: diag.mass,
            mass_drift: (diag.mass - mass0).abs(),
            min_density: diag.min_density,
            energy: diag.energy,
            energy_slack: diag.energy_dissipation_slack,
            newton_iterations: out.iterations,
            residual: out.residual_norm,
        };
        if !(rec.mass_drift <= drift_cap) {
            return Err(Error::Invariant(format!(
                "mass drift {:e} exceeds {drift_cap:e} at step {}",
                rec.mass_drift, rec.step
            )));
        }
        if !(rec.min_density > 0.0) {
            return Err(Error::Invariant(format!(
                "nonpositive density {:e} at step {}",
                rec.min_density, rec.step
            )));
        }
        if params.forcing.is_none() && !(rec.energy_slack >= slack_floor) {
            return Err(Error::Invariant(format!(
                "energy inequality violated by {:e} at step {}",
                -rec.energy_slack, rec.step
            )));
        }
        records.push(rec);
        state = out.state;
        on_step(&state)?;
    }
    Ok(records)
}

/// Max norm of the scheme residual, evaluated on one step of the
/// projected manufactured solution `(Pi r, Pi_E U)` from `t = 0` to `t = dt`.
pub fn consistency_residual(cfg: &RunConfig, n: usize) -> Result<f64> {
    if cfg.experiment != ExperimentKind::Manufactured {
        return Err(Error::Config(
            "consistency residual needs the manufactured experiment".into(),
        ));
    }
    let params = cfg.scheme_params(n)?;
    let grid = StaggeredGrid::new(cfg.dim, n)?;
    let m = cfg.manufactured();
    let at = |t: f64| -> Result<State> {
        let mut s = State::new(
            project_cells(&grid, |x| m.density(t, x)),
            project_faces(&grid, |i, x| m.velocity(t, i, x)),
        )?;
        s.time = t;
        Ok(s)
    };
    let (prev, trial) = (at(0.0)?, at(params.dt)?);
    let source = params.source(&grid, params.dt);
    let r = residual(&params, &prev, &trial, source.as_ref())?;
    Ok(r.to_vec().iter().fold(0.0, |a, v| a.max(v.abs())))
}

fn write_step_log(path: &Path, records: &[StepRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{STEP_LOG_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.csv())?;
    }
    w.flush()?;
    Ok(())
}

/// Legacy structured-points VTK file with cell density, pressure and the
/// cell-averaged velocity.
pub fn write_vtk(path: &Path, s: &State, law: &GasLaw) -> Result<()> {
    let g = s.grid();
    let n = g.n();
    let h = g.h();
    let mut w = BufWriter::new(File::create(path)?);
    let nz = if g.dim() == 3 { n + 1 } else { 1 };
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "macflow step {} t={}", s.step, s.time)?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {nz}", n + 1, n + 1)?;
    writeln!(w, "ORIGIN 0 0 0")?;
    writeln!(w, "SPACING {h} {h} {h}")?;
    writeln!(w, "CELL_DATA {}", g.cell_count())?;
    writeln!(w, "SCALARS density double 1\nLOOKUP_TABLE default")?;
    for v in s.density.values() {
        writeln!(w, "{v:e}")?;
    }
    writeln!(w, "SCALARS pressure double 1\nLOOKUP_TABLE default")?;
    for &v in s.density.values() {
        writeln!(w, "{:e}", law.pressure(v)?)?;
    }
    writeln!(w, "VECTORS velocity double")?;
    let ubar = cell_average_velocity(&s.velocity);
    for k in 0..g.cell_count() {
        let c = |i: usize| ubar.get(i).map_or(0.0, |f| f.values()[k]);
        writeln!(w, "{:e} {:e} {:e}", c(0), c(1), c(2))?;
    }
    w.flush()?;
    Ok(())
}

fn dump_fields(cfg: &RunConfig, dir: &Path, tag: &str, s: &State) -> Result<()> {
    if !s.step.is_multiple_of(cfg.snapshot_stride) {
        return Ok(());
    }
    if cfg.dump.vtk {
        write_vtk(&dir.join(format!("fields_{tag}_{:05}.vtk", s.step)), s, &cfg.law()?)?;
    }
    if cfg.dump.csv {
        let mut w = BufWriter::new(File::create(dir.join(format!("density_{tag}_{:05}.csv", s.step)))?);
        write_cell_csv(&s.density, &mut w)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(dir.join(format!("velocity_{tag}_{:05}.csv", s.step)))?);
        write_face_csv(&s.velocity, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// Runs the whole sweep and writes `eoc.csv`, `steps_n<N>.csv`,
/// `summary.json` and optional dumps into the output directory.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentSummary> {
    let warnings = cfg.validate()?;
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let hash = cfg.hash();
    let law = cfg.law()?;

    // fine-grid reference snapshots at every time level of the sweep
    let mut fine_snaps: Vec<Snapshot> = Vec::new();
    let mut reference = None;
    if cfg.experiment == ExperimentKind::Gresho {
        let nf = cfg.n_fine;
        let fine_steps = cfg.time_steps(nf);
        let strides: Vec<usize> = cfg.n.iter().map(|&n| fine_steps / cfg.time_steps(n)).collect();
        let records = simulate(cfg, nf, |s| {
            if s.step > 0 && strides.iter().any(|&r| s.step % r == 0) {
                fine_snaps.push(Snapshot::of_state(s));
            }
            Ok(())
        })?;
        write_step_log(&dir.join(format!("steps_reference_n{nf}.csv")), &records)?;
        reference = Some(ResolutionSummary::from_records(nf, cfg.dt(nf), &records, None));
    }

    let mut resolutions = Vec::new();
    for &n in &cfg.n {
        let grid = StaggeredGrid::new(cfg.dim, n)?;
        let dt = cfg.dt(n);
        let tag = format!("n{n}");
        let mut acc = ErrorAccumulator::new(law, grid, dt);
        let m = cfg.manufactured();
        let records = simulate(cfg, n, |s| {
            dump_fields(cfg, &dir, &tag, s)?;
            if s.step == 0 {
                return Ok(());
            }
            match cfg.experiment {
                ExperimentKind::Manufactured => {
                    let t = s.time;
                    let r = project_cells(&grid, |x| m.density(t, x));
                    let u = project_faces(&grid, |i, x| m.velocity(t, i, x));
                    acc.add(s, &r, &u)
                }
                ExperimentKind::Gresho => {
                    let refs = restrict_reference(&fine_snaps, &grid, &[s.time], dt)?;
                    acc.add(s, &refs[0].density, &refs[0].velocity)
                }
                ExperimentKind::Custom => Ok(()),
            }
        })?;
        write_step_log(&dir.join(format!("steps_{tag}.csv")), &records)?;
        let report = match cfg.experiment {
            ExperimentKind::Custom => None,
            _ => Some(acc.finish()?),
        };
        resolutions.push(ResolutionSummary::from_records(n, dt, &records, report));
    }

    let table = if cfg.experiment == ExperimentKind::Custom {
        None
    } else {
        let mut t = String::from(CSV_HEADER);
        t.push('\n');
        let reports: Vec<&ErrorReport> = resolutions.iter().filter_map(|r| r.report.as_ref()).collect();
        for (i, r) in reports.iter().enumerate() {
            let prev = if i > 0 { Some(reports[i - 1]) } else { None };
            t.push_str(&csv_row(r, prev, &hash));
            t.push('\n');
        }
        fs::write(dir.join("eoc.csv"), &t)?;
        Some(t)
    };

    let summary = ExperimentSummary {
        config_hash: hash,
        warnings,
        resolutions,
        table,
        reference,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Invariant(e.to_string()))?;
    fs::write(dir.join("summary.json"), json)?;
    Ok(summary)
}
