//! Analytic data of the built-in test problems.
//!
//! Both problems are planar; in three dimensions they are extended
//! uniformly along the third axis with zero third velocity component.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::grid::MAX_DIM;
use crate::scheme::Forcing;

/// Divergence-free decaying cellular flow with constant density, driven by
/// the body force that makes it an exact solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Manufactured {
    /// Decay rate of `e^{-k t}`.
    pub k: f64,
    pub mu: f64,
}

impl Manufactured {
    pub fn density(&self, _t: f64, _x: &[f64; MAX_DIM]) -> f64 {
        1.0
    }

    pub fn velocity(&self, t: f64, i: usize, x: &[f64; MAX_DIM]) -> f64 {
        let s = (-self.k * t).exp();
        match i {
            0 => (TAU * x[0]).sin() * (TAU * x[1]).cos() * s,
            1 => -(TAU * x[0]).cos() * (TAU * x[1]).sin() * s,
            _ => 0.0,
        }
    }

    /// `f = d_t U + (U . grad) U - mu Lap U` with `Lap U = -8 pi^2 U`; the
    /// pressure gradient vanishes at constant density and `div U = 0`.
    pub fn forcing(&self, t: f64, i: usize, x: &[f64; MAX_DIM]) -> f64 {
        if i > 1 {
            return 0.0;
        }
        let s = (-self.k * t).exp();
        let advect = PI * s * s * (2.0 * TAU * x[i]).sin();
        (8.0 * PI * PI * self.mu - self.k) * self.velocity(t, i, x) + advect
    }

    pub fn forcing_fn(self) -> Forcing {
        Arc::new(move |t, i, x| self.forcing(t, i, x))
    }
}

pub const VORTEX_RADIUS: f64 = 0.2;

/// Angular speed profile of the Gresho-type vortex centred at `(1/2, 1/2)`.
pub fn vortex_speed(gamma: f64, r: f64) -> f64 {
    let r0 = VORTEX_RADIUS;
    let s = if r < 0.5 * r0 {
        2.0 * r / r0
    } else if r < r0 {
        2.0 * (1.0 - r / r0)
    } else {
        0.0
    };
    gamma.sqrt() * s
}

/// Clockwise rotating vortex at rest density 1; zero at the centre.
pub fn vortex_velocity(gamma: f64, i: usize, x: &[f64; MAX_DIM]) -> f64 {
    let dx = x[0] - 0.5;
    let dy = x[1] - 0.5;
    let r = dx.hypot(dy);
    if r == 0.0 || i > 1 {
        return 0.0;
    }
    let w = vortex_speed(gamma, r) / r;
    if i == 0 {
        w * dy
    } else {
        -w * dx
    }
}

/// Smooth periodic initial data for ad hoc runs without a reference:
/// `rho = 1 + A_rho prod_j cos(2 pi m x_j)`, `u_i = A_u sin(2 pi m x_{i+1})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FourierData {
    pub density_amplitude: f64,
    pub velocity_amplitude: f64,
    pub mode: usize,
}

impl Default for FourierData {
    fn default() -> Self {
        Self {
            density_amplitude: 0.2,
            velocity_amplitude: 0.5,
            mode: 1,
        }
    }
}

impl FourierData {
    pub fn density(&self, dim: usize, x: &[f64; MAX_DIM]) -> f64 {
        let m = self.mode as f64;
        1.0 + self.density_amplitude * (0..dim).map(|j| (TAU * m * x[j]).cos()).product::<f64>()
    }

    pub fn velocity(&self, dim: usize, i: usize, x: &[f64; MAX_DIM]) -> f64 {
        let m = self.mode as f64;
        self.velocity_amplitude * (TAU * m * x[(i + 1) % dim]).sin()
    }
}
