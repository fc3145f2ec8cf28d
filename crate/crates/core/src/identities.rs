//! Exact discrete identities of the operator set, evaluated on random fields.
//! Used by the `operators-selftest` command and the test suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::fields::{cell_inner, face_average_axis, face_inner, CellField, FaceField};
use crate::grid::StaggeredGrid;
use crate::operators::{
    div_cells, grad_bidual, grad_edges, laplace_cells, laplace_faces, partial_cells, partial_edges, upwind_divergence,
    upwind_flux,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub dim: usize,
    pub n: usize,
    /// Discrepancy relative to the magnitude of the terms involved.
    pub relative_error: f64,
    pub passed: bool,
}

pub const IDENTITY_TOLERANCE: f64 = 1e-12;

/// Grids exercised by default.
pub const DEFAULT_CASES: [(usize, usize); 3] = [(2, 4), (2, 8), (3, 4)];

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn random_cells(g: StaggeredGrid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> CellField {
    let v = (0..g.cell_count()).map(|_| rng.gen_range(lo..hi)).collect();
    CellField::from_values(g, v).expect("length follows the grid")
}

fn random_faces(g: StaggeredGrid, rng: &mut ChaCha8Rng) -> FaceField {
    let comps = (0..g.dim())
        .map(|_| (0..g.face_count()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    FaceField::from_components(g, comps).expect("length follows the grid")
}

fn flat(v: &FaceField) -> Vec<f64> {
    v.components().iter().flatten().copied().collect()
}

/// Runs every identity on `(d, n)` with fields drawn from `seed`.
pub fn check_identities(dim: usize, n: usize, seed: u64) -> crate::Result<Vec<IdentityCheck>> {
    let g = StaggeredGrid::new(dim, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = random_cells(g, &mut rng, 0.5, 1.5);
    let phi = random_cells(g, &mut rng, -1.0, 1.0);
    let v = random_faces(g, &mut rng);
    let w = random_faces(g, &mut rng);
    let vol = g.cell_volume();
    let mut out = Vec::new();
    let mut push = |name, err: f64| {
        out.push(IdentityCheck {
            name,
            dim,
            n,
            relative_error: err,
            passed: err.is_finite() && err <= IDENTITY_TOLERANCE,
        })
    };

    // -int Lap_M r phi = int grad_E r . grad_E phi
    let lap = laplace_cells(&r);
    let (gr, gphi) = (grad_edges(&r), grad_edges(&phi));
    let lhs = -cell_inner(&lap, &phi);
    let rhs = face_inner(&gr, &gphi);
    let scale =
        vol.sqrt() * norm(lap.values()) * vol.sqrt() * norm(phi.values()) + vol * norm(&flat(&gr)) * norm(&flat(&gphi));
    push("cell Laplacian summation by parts", (lhs - rhs).abs() / scale);

    // -int Lap_E v . w = int grad_eps v : grad_eps w
    let lapv = laplace_faces(&v);
    let (gv, gw) = (grad_bidual(&v), grad_bidual(&w));
    let lhs = -face_inner(&lapv, &w);
    let rhs = gv.inner(&gw);
    let scale = vol * norm(&flat(&lapv)) * norm(&flat(&w)) + gv.norm_sq().sqrt() * gw.norm_sq().sqrt();
    push("face Laplacian summation by parts", (lhs - rhs).abs() / scale);

    // -int div v r = int v . grad_E r
    let div = div_cells(&v);
    let lhs = -cell_inner(&div, &r);
    let rhs = face_inner(&v, &gr);
    let scale = vol * (norm(div.values()) * norm(r.values()) + norm(&flat(&v)) * norm(&flat(&gr)));
    push("divergence-gradient duality", (lhs - rhs).abs() / scale);

    // -int div_Up[r, v] phi = sum_i int Up_i[r, v] d_E^i phi
    let divup = upwind_divergence(&r, &v);
    let up = upwind_flux(&r, &v);
    let lhs = -cell_inner(&divup, &phi);
    let rhs = face_inner(&up, &gphi);
    let scale = vol * (norm(divup.values()) * norm(phi.values()) + norm(&flat(&up)) * norm(&flat(&gphi)));
    push("upwind divergence summation by parts", (lhs - rhs).abs() / scale);

    // Up_i = {r} v - h/2 |v| d_E r, pointwise
    let mut worst: f64 = 0.0;
    let mut mag: f64 = 0.0;
    for i in 0..dim {
        let avg = face_average_axis(&r, i);
        let dr = partial_edges(&r, i);
        let vi = v.component(i);
        for k in 0..g.face_count() {
            let alt = avg[k] * vi[k] - 0.5 * g.h() * vi[k].abs() * dr[k];
            worst = worst.max((up.component(i)[k] - alt).abs());
            mag = mag
                .max((avg[k] * vi[k]).abs())
                .max((0.5 * g.h() * vi[k].abs() * dr[k]).abs());
        }
    }
    push("upwind flux average form", worst / mag);

    // sum_K div_Up[r, v]_K = 0
    let total: f64 = divup.values().iter().sum();
    let mag: f64 = divup.values().iter().map(|x| x.abs()).sum();
    push("zero total upwind divergence", total.abs() / mag);

    // Lap_M = sum_i d_M^i d_E^i
    let mut composed = vec![0.0; g.cell_count()];
    for i in 0..dim {
        let di = partial_cells(&g, &partial_edges(&r, i), i);
        composed.iter_mut().zip(di.values()).for_each(|(a, b)| *a += b);
    }
    let diff: Vec<f64> = composed.iter().zip(lap.values()).map(|(a, b)| a - b).collect();
    push("cell Laplacian factorization", norm(&diff) / norm(lap.values()));

    Ok(out)
}

/// All identities on [`DEFAULT_CASES`].
pub fn run_selftest(seed: u64) -> crate::Result<Vec<IdentityCheck>> {
    let mut all = Vec::new();
    for (d, n) in DEFAULT_CASES {
        all.extend(check_identities(d, n, seed)?);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identities_hold_on_default_cases() {
        for seed in 0..4 {
            for c in run_selftest(seed).unwrap() {
                assert!(c.passed, "{c:?}");
            }
        }
    }

    #[test]
    fn odd_grid_sizes() {
        for c in check_identities(2, 5, 7)
            .unwrap()
            .into_iter()
            .chain(check_identities(3, 3, 7).unwrap())
        {
            assert!(c.passed, "{c:?}");
        }
    }
}
