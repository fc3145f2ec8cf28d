//! Isentropic pressure law, its Helmholtz potential, and the energy
//! functionals built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{cell_average_velocity, CellField, State};

/// `p(rho) = a rho^gamma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GasLaw {
    a: f64,
    gamma: f64,
}

impl GasLaw {
    pub fn new(a: f64, gamma: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Config(format!("pressure coefficient must be > 0, got {a}")));
        }
        if !(gamma > 1.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("adiabatic exponent must be > 1, got {gamma}")));
        }
        Ok(Self { a, gamma })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn pressure(&self, rho: f64) -> Result<f64> {
        if rho < 0.0 || rho.is_nan() {
            return Err(Error::Domain(format!("pressure of negative density {rho}")));
        }
        Ok(self.a * rho.powf(self.gamma))
    }

    /// `p'(rho)`; callers guarantee `rho > 0`.
    #[inline]
    pub fn pressure_derivative(&self, rho: f64) -> f64 {
        self.a * self.gamma * rho.powf(self.gamma - 1.0)
    }

    /// `H(rho) = a (rho^gamma - rho) / (gamma - 1)`, normalized so `H(1) = 0`.
    pub fn helmholtz(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::Domain(format!("Helmholtz function of density {rho}")));
        }
        Ok(self.a * (rho.powf(self.gamma) - rho) / (self.gamma - 1.0))
    }

    /// `H'(rho) = a (gamma rho^(gamma-1) - 1) / (gamma - 1)`.
    pub fn helmholtz_derivative(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::Domain(format!("Helmholtz derivative at density {rho}")));
        }
        Ok(self.a * (self.gamma * rho.powf(self.gamma - 1.0) - 1.0) / (self.gamma - 1.0))
    }

    /// `H''(rho) = p'(rho) / rho`.
    pub fn helmholtz_second(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::Domain(format!("Helmholtz second derivative at density {rho}")));
        }
        Ok(self.pressure_derivative(rho) / rho)
    }

    /// Bregman divergence `E(rho | r) = H(rho) - H'(r)(rho - r) - H(r)`.
    pub fn bregman(&self, rho: f64, r: f64) -> Result<f64> {
        Ok(self.helmholtz(rho)? - self.helmholtz_derivative(r)? * (rho - r) - self.helmholtz(r)?)
    }
}

/// `int 1/2 rho |bar u|^2 + H(rho)`.
pub fn total_energy(law: &GasLaw, s: &State) -> Result<f64> {
    let g = s.grid();
    let ubar = cell_average_velocity(&s.velocity);
    let rho = s.density.values();
    let mut sum = 0.0;
    for k in 0..g.cell_count() {
        let u2: f64 = ubar.iter().map(|c| c.values()[k].powi(2)).sum();
        sum += 0.5 * rho[k] * u2 + law.helmholtz(rho[k])?;
    }
    Ok(sum * g.cell_volume())
}

/// Relative energy of `s` with respect to the cell density `r` and the
/// cell-centered comparison velocity `ubar_ref` (one field per component).
/// The numerical velocity enters through its cell averages.
pub fn relative_energy(law: &GasLaw, s: &State, r: &CellField, ubar_ref: &[CellField]) -> Result<f64> {
    let g = s.grid();
    g.ensure_same(r.grid())?;
    if ubar_ref.len() != g.dim() {
        return Err(Error::Config(format!(
            "comparison velocity needs {} components, got {}",
            g.dim(),
            ubar_ref.len()
        )));
    }
    for c in ubar_ref {
        g.ensure_same(c.grid())?;
    }
    let ubar = cell_average_velocity(&s.velocity);
    let rho = s.density.values();
    let rr = r.values();
    let mut sum = 0.0;
    for k in 0..g.cell_count() {
        let du2: f64 = ubar
            .iter()
            .zip(ubar_ref)
            .map(|(a, b)| (a.values()[k] - b.values()[k]).powi(2))
            .sum();
        sum += 0.5 * rho[k] * du2 + law.bregman(rho[k], rr[k])?;
    }
    Ok(sum * g.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FaceField;
    use crate::grid::StaggeredGrid;
    use proptest::prelude::*;

    fn quadratic() -> GasLaw {
        GasLaw::new(1.0, 2.0).unwrap()
    }

    #[test]
    fn construction_checks() {
        assert!(GasLaw::new(0.0, 1.4).is_err());
        assert!(GasLaw::new(1.0, 1.0).is_err());
        assert!(GasLaw::new(1.0, 1.4).is_ok());
    }

    #[test]
    fn pressure_values() {
        for gamma in [1.4, 1.67, 2.0, 3.0] {
            let law = GasLaw::new(1.0, gamma).unwrap();
            assert_eq!(law.pressure(1.0).unwrap(), 1.0);
            assert_eq!(law.pressure(0.0).unwrap(), 0.0);
        }
        assert_eq!(quadratic().pressure(3.0).unwrap(), 9.0);
        assert!(matches!(quadratic().pressure(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn helmholtz_values() {
        let law = GasLaw::new(1.3, 1.4).unwrap();
        assert_eq!(law.helmholtz(1.0).unwrap(), 0.0);
        assert_eq!(quadratic().helmholtz(2.0).unwrap(), 2.0);
        assert!(law.helmholtz(0.0).is_err());
        for rho in [0.5, 1.0, 2.0] {
            let lhs = rho * law.helmholtz_derivative(rho).unwrap() - law.helmholtz(rho).unwrap();
            assert!((lhs - law.pressure(rho).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn helmholtz_convex_on_log_grid() {
        for gamma in [1.05, 1.4, 2.0, 5.0] {
            let law = GasLaw::new(1.0, gamma).unwrap();
            for e in -40..=40 {
                let rho = 10f64.powf(e as f64 / 10.0);
                let h2 = law.helmholtz_second(rho).unwrap();
                assert!(h2 > 0.0);
                // finite-difference cross-check of H'' = p'/rho
                let eps = 1e-4 * rho;
                let fd = (law.helmholtz_derivative(rho + eps).unwrap() - law.helmholtz_derivative(rho - eps).unwrap())
                    / (2.0 * eps);
                assert!((fd - h2).abs() <= 1e-6 * h2.max(1.0));
            }
        }
    }

    fn state(g: StaggeredGrid, rho: f64, u: &[f64]) -> State {
        State::new(CellField::constant(g, rho), FaceField::constant(g, u)).unwrap()
    }

    #[test]
    fn total_energy_examples() {
        let g = StaggeredGrid::new(2, 4).unwrap();
        let law = quadratic();
        assert_eq!(total_energy(&law, &state(g, 1.0, &[0.0, 0.0])).unwrap(), 0.0);
        assert!((total_energy(&law, &state(g, 1.0, &[1.0, 0.0])).unwrap() - 0.5).abs() < 1e-14);
        assert!((total_energy(&law, &state(g, 2.0, &[0.0, 0.0])).unwrap() - 2.0).abs() < 1e-14);
        assert!(total_energy(&law, &state(g, 0.0, &[0.0, 0.0])).is_err());
    }

    #[test]
    fn relative_energy_examples() {
        let g = StaggeredGrid::new(2, 4).unwrap();
        let law = quadratic();
        let s = state(g, 2.0, &[0.3, -0.2]);
        let ubar = cell_average_velocity(&s.velocity);
        assert_eq!(relative_energy(&law, &s, &s.density, &ubar).unwrap(), 0.0);
        let one = CellField::constant(g, 1.0);
        assert!((relative_energy(&law, &s, &one, &ubar).unwrap() - 1.0).abs() < 1e-14);
        assert!(relative_energy(&law, &s, &CellField::zeros(g), &ubar).is_err());
    }

    #[test]
    fn total_energy_is_relative_energy_to_rest() {
        // E(s) = Rel(s | 1, 0) + H'(1) int (rho - 1) + H(1) |Omega|
        let g = StaggeredGrid::new(2, 3).unwrap();
        let law = GasLaw::new(0.7, 1.4).unwrap();
        let s = State::new(
            CellField::from_fn(g, |k| 0.5 + 0.1 * k as f64),
            FaceField::from_fn(g, |i, k| (k as f64 - 4.0) * 0.2 * (i as f64 + 1.0)),
        )
        .unwrap();
        let zero = vec![CellField::zeros(g); 2];
        let rel = relative_energy(&law, &s, &CellField::constant(g, 1.0), &zero).unwrap();
        let mass_excess = crate::fields::integrate_cells(&s.density) - 1.0;
        let want = rel + law.helmholtz_derivative(1.0).unwrap() * mass_excess;
        assert!((total_energy(&law, &s).unwrap() - want).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn relative_energy_nonnegative(
            rho in proptest::collection::vec(0.05f64..5.0, 9),
            r in proptest::collection::vec(0.05f64..5.0, 9),
            u in proptest::collection::vec(-3.0f64..3.0, 18),
            w in proptest::collection::vec(-3.0f64..3.0, 18),
            gamma in 1.01f64..4.0,
        ) {
            let g = StaggeredGrid::new(2, 3).unwrap();
            let law = GasLaw::new(1.0, gamma).unwrap();
            let s = State::new(
                CellField::from_values(g, rho).unwrap(),
                FaceField::from_components(g, vec![u[..9].to_vec(), u[9..].to_vec()]).unwrap(),
            ).unwrap();
            let ubar = vec![
                CellField::from_values(g, w[..9].to_vec()).unwrap(),
                CellField::from_values(g, w[9..].to_vec()).unwrap(),
            ];
            let rr = CellField::from_values(g, r).unwrap();
            prop_assert!(relative_energy(&law, &s, &rr, &ubar).unwrap() >= -1e-14);
        }

        #[test]
        fn relative_energy_zero_iff_equal(
            rho in proptest::collection::vec(0.1f64..3.0, 9),
            u in proptest::collection::vec(-2.0f64..2.0, 18),
            which in 0usize..9, delta in 0.01f64..0.5, perturb_velocity: bool,
        ) {
            let g = StaggeredGrid::new(2, 3).unwrap();
            let law = quadratic();
            let s = State::new(
                CellField::from_values(g, rho.clone()).unwrap(),
                FaceField::from_components(g, vec![u[..9].to_vec(), u[9..].to_vec()]).unwrap(),
            ).unwrap();
            let ubar = cell_average_velocity(&s.velocity);
            prop_assert!(relative_energy(&law, &s, &s.density, &ubar).unwrap().abs() < 1e-14);
            let mut r2 = rho;
            let mut ubar2 = ubar.clone();
            if perturb_velocity {
                ubar2[1].values_mut()[which] += delta;
            } else {
                r2[which] += delta;
            }
            let rr = CellField::from_values(g, r2).unwrap();
            let e = relative_energy(&law, &s, &rr, &ubar2).unwrap();
            // gamma = 2: E(rho|r) = (rho - r)^2, kinetic part 1/2 rho du^2
            let want = if perturb_velocity {
                0.5 * s.density.values()[which] * delta * delta / 9.0
            } else {
                delta * delta / 9.0
            };
            prop_assert!(e > 0.0);
            prop_assert!((e - want).abs() < 1e-12);
        }
    }
}
