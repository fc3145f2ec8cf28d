//! Matrix-free discrete calculus on the MAC grid.
//!
//! Conventions: `partial_edges` maps cells to faces (`(r_L - r_K)/h` on
//! `sigma = K -> L`), `partial_cells` maps faces to cells
//! (`(v_{K,i+} - v_{K,i-})/h`). Every operator is periodic index arithmetic;
//! there are no ghost layers.

use crate::fields::{CellField, FaceField};
use crate::grid::StaggeredGrid;

/// `grad_eps v`: entry `(i, j)` holds `(v_{i,sigma'} - v_{i,sigma}) / h` on the
/// bidual face `sigma -> sigma' = sigma + h e_j`, stored at the linear index of
/// the base face `sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct BidualGradient {
    grid: StaggeredGrid,
    comps: Vec<Vec<f64>>,
}

impl BidualGradient {
    #[inline]
    pub fn grid(&self) -> &StaggeredGrid {
        &self.grid
    }

    /// Entry `(i, j)` = `eth_j v_i`.
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> &[f64] {
        &self.comps[i * self.grid.dim() + j]
    }

    /// `int grad v : grad w` with every bidual cell of measure `h^d`.
    pub fn inner(&self, other: &BidualGradient) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.grid.cell_volume()
            * self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
                .sum::<f64>()
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }
}

/// `v^+ = max(v, 0)`.
#[inline]
pub fn pos(v: f64) -> f64 {
    v.max(0.0)
}

/// `v^- = min(v, 0)`.
#[inline]
pub fn neg(v: f64) -> f64 {
    v.min(0.0)
}

/// `d_E^(axis) r` as a raw face array for one axis.
pub fn partial_edges(r: &CellField, axis: usize) -> Vec<f64> {
    let g = r.grid();
    let inv_h = 1.0 / g.h();
    let v = r.values();
    (0..g.face_count())
        .map(|k| (v[g.shift(k, axis, true)] - v[k]) * inv_h)
        .collect()
}

/// `d_M^(axis) v` for one face component stored on faces of `axis`.
pub fn partial_cells(grid: &StaggeredGrid, v: &[f64], axis: usize) -> CellField {
    let inv_h = 1.0 / grid.h();
    CellField::from_fn(*grid, |k| (v[k] - v[grid.shift(k, axis, false)]) * inv_h)
}

/// `grad_E r`.
pub fn grad_edges(r: &CellField) -> FaceField {
    let g = *r.grid();
    FaceField::from_components(g, (0..g.dim()).map(|i| partial_edges(r, i)).collect()).expect("shapes follow the grid")
}

/// `div_h v = sum_i d_M^(i) v_i`.
pub fn div_cells(v: &FaceField) -> CellField {
    let g = v.grid();
    let inv_h = 1.0 / g.h();
    CellField::from_fn(*g, |k| {
        (0..g.dim())
            .map(|i| {
                let c = v.component(i);
                c[k] - c[g.shift(k, i, false)]
            })
            .sum::<f64>()
            * inv_h
    })
}

/// `Delta_M r`: the `2d+1` point periodic stencil scaled by `1/h^2`.
pub fn laplace_cells(r: &CellField) -> CellField {
    let g = r.grid();
    let v = r.values();
    let inv_h2 = 1.0 / (g.h() * g.h());
    CellField::from_fn(*g, |k| {
        let mut s = 0.0;
        for a in 0..g.dim() {
            s += v[g.shift(k, a, true)] + v[g.shift(k, a, false)] - 2.0 * v[k];
        }
        s * inv_h2
    })
}

/// `Delta_E v_i` applied to one face component: the same `2d+1` stencil on
/// the dual grid, since dual neighbours of `sigma` are the faces owned by the
/// cell neighbours of its owner.
pub fn laplace_face_component(grid: &StaggeredGrid, v: &[f64]) -> Vec<f64> {
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    (0..grid.face_count())
        .map(|k| {
            let mut s = 0.0;
            for a in 0..grid.dim() {
                s += v[grid.shift(k, a, true)] + v[grid.shift(k, a, false)] - 2.0 * v[k];
            }
            s * inv_h2
        })
        .collect()
}

pub fn laplace_faces(v: &FaceField) -> FaceField {
    let g = *v.grid();
    FaceField::from_components(
        g,
        (0..g.dim())
            .map(|i| laplace_face_component(&g, v.component(i)))
            .collect(),
    )
    .expect("shapes follow the grid")
}

/// `grad_eps v`.
pub fn grad_bidual(v: &FaceField) -> BidualGradient {
    let g = *v.grid();
    let inv_h = 1.0 / g.h();
    let d = g.dim();
    let mut comps = Vec::with_capacity(d * d);
    for i in 0..d {
        let vi = v.component(i);
        for j in 0..d {
            comps.push(
                (0..g.face_count())
                    .map(|k| (vi[g.shift(k, j, true)] - vi[k]) * inv_h)
                    .collect(),
            );
        }
    }
    BidualGradient { grid: g, comps }
}

/// `Up^(axis)[r, v]` on the faces of `axis`: `r_K v^+ + r_L v^-`.
pub fn upwind_flux_axis(r: &CellField, v: &[f64], axis: usize) -> Vec<f64> {
    let g = r.grid();
    let rv = r.values();
    (0..g.face_count())
        .map(|k| rv[k] * pos(v[k]) + rv[g.shift(k, axis, true)] * neg(v[k]))
        .collect()
}

pub fn upwind_flux(r: &CellField, v: &FaceField) -> FaceField {
    let g = *r.grid();
    debug_assert_eq!(&g, v.grid());
    FaceField::from_components(
        g,
        (0..g.dim()).map(|i| upwind_flux_axis(r, v.component(i), i)).collect(),
    )
    .expect("shapes follow the grid")
}

/// `div_Up[r, v] = div_h Up[r, v]`.
pub fn upwind_divergence(r: &CellField, v: &FaceField) -> CellField {
    div_cells(&upwind_flux(r, v))
}
