//! Piecewise-constant fields on the primary grid (`X_M`) and on the dual
//! grids (`Y_{i,E}`), projections onto them, and the averaging operators
//! that move data between the two.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::{StaggeredGrid, MAX_DIM};

/// One value per primary cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellField {
    grid: StaggeredGrid,
    values: Vec<f64>,
}

/// One value per face, per axis: component `i` lives on the dual cells of `E_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField {
    grid: StaggeredGrid,
    comps: Vec<Vec<f64>>,
}

/// Density and face velocity at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub density: CellField,
    pub velocity: FaceField,
    pub step: usize,
    pub time: f64,
}

impl CellField {
    pub fn zeros(grid: StaggeredGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: StaggeredGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.cell_count()],
        }
    }

    pub fn from_values(grid: StaggeredGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::Config(format!(
                "cell field needs {} values, got {}",
                grid.cell_count(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: StaggeredGrid, f: impl Fn(usize) -> f64) -> Self {
        Self {
            grid,
            values: (0..grid.cell_count()).map(f).collect(),
        }
    }

    #[inline]
    pub fn grid(&self) -> &StaggeredGrid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &CellField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl FaceField {
    pub fn zeros(grid: StaggeredGrid) -> Self {
        Self::constant(grid, &vec![0.0; grid.dim()])
    }

    pub fn constant(grid: StaggeredGrid, c: &[f64]) -> Self {
        assert_eq!(c.len(), grid.dim());
        Self {
            grid,
            comps: c.iter().map(|&ci| vec![ci; grid.face_count()]).collect(),
        }
    }

    pub fn from_components(grid: StaggeredGrid, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim() || comps.iter().any(|c| c.len() != grid.face_count()) {
            return Err(Error::Config(format!(
                "face field needs {} components of {} values",
                grid.dim(),
                grid.face_count()
            )));
        }
        Ok(Self { grid, comps })
    }

    pub fn from_fn(grid: StaggeredGrid, f: impl Fn(usize, usize) -> f64) -> Self {
        Self {
            grid,
            comps: (0..grid.dim())
                .map(|i| (0..grid.face_count()).map(|k| f(i, k)).collect())
                .collect(),
        }
    }

    #[inline]
    pub fn grid(&self) -> &StaggeredGrid {
        &self.grid
    }

    #[inline]
    pub fn component(&self, axis: usize) -> &[f64] {
        &self.comps[axis]
    }

    #[inline]
    pub fn component_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.comps[axis]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn zip_with(&self, other: &FaceField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().flatten().all(|v| v.is_finite())
    }
}

impl State {
    pub fn new(density: CellField, velocity: FaceField) -> Result<Self> {
        density.grid().ensure_same(velocity.grid())?;
        Ok(Self {
            density,
            velocity,
            step: 0,
            time: 0.0,
        })
    }

    pub fn grid(&self) -> &StaggeredGrid {
        self.density.grid()
    }

    pub fn min_density(&self) -> f64 {
        self.density.min()
    }
}

/// Two-point Gauss nodes on `[c - h/2, c + h/2]`.
#[inline]
fn gauss_pair(center: f64, h: f64) -> [f64; 2] {
    let off = 0.5 * h / 3f64.sqrt();
    [center - off, center + off]
}

/// Tensor Gauss average of `f` over the box centered at `center` with side
/// `h` on every axis except `skip` (held at `center[skip]`).
fn box_mean(
    dim: usize,
    center: [f64; MAX_DIM],
    h: f64,
    skip: Option<usize>,
    f: &impl Fn(&[f64; MAX_DIM]) -> f64,
) -> f64 {
    let axes: Vec<usize> = (0..dim).filter(|&a| Some(a) != skip).collect();
    let npts = 1usize << axes.len();
    let mut sum = 0.0;
    for mask in 0..npts {
        let mut x = center;
        for (bit, &a) in axes.iter().enumerate() {
            x[a] = gauss_pair(center[a], h)[(mask >> bit) & 1];
        }
        sum += f(&x);
    }
    sum / npts as f64
}

/// `Pi_M`: cell means of `phi`, evaluated with `2^d`-point tensor Gauss
/// quadrature (exact for multilinear `phi`).
pub fn project_cells(grid: &StaggeredGrid, phi: impl Fn(&[f64; MAX_DIM]) -> f64) -> CellField {
    let h = grid.h();
    CellField::from_fn(*grid, |k| box_mean(grid.dim(), grid.cell_center(k), h, None, &phi))
}

/// `Pi_E`: face means of component `i` of `phi` over faces orthogonal to `i`,
/// with a `2^(d-1)`-point Gauss rule on each face. `phi(i, x)` returns the
/// `i`-th component at `x`.
pub fn project_faces(grid: &StaggeredGrid, phi: impl Fn(usize, &[f64; MAX_DIM]) -> f64) -> FaceField {
    let h = grid.h();
    FaceField::from_fn(*grid, |i, k| {
        box_mean(grid.dim(), grid.face_center(i, k), h, Some(i), &|x| phi(i, x))
    })
}

/// `{r}^(axis)`: mean of the two cells adjacent to every face of `axis`.
pub fn face_average_axis(r: &CellField, axis: usize) -> Vec<f64> {
    let g = r.grid();
    let v = r.values();
    (0..g.face_count())
        .map(|k| 0.5 * (v[k] + v[g.shift(k, axis, true)]))
        .collect()
}

/// `{r}` on every axis.
pub fn face_average(r: &CellField) -> FaceField {
    let g = *r.grid();
    let comps = (0..g.dim()).map(|i| face_average_axis(r, i)).collect();
    FaceField { grid: g, comps }
}

/// `bar v_i`: mean of the two `i`-faces of each cell, for one component
/// stored on faces of `axis`.
pub fn cell_average_axis(grid: &StaggeredGrid, v: &[f64], axis: usize) -> CellField {
    CellField::from_fn(*grid, |k| 0.5 * (v[k] + v[grid.shift(k, axis, false)]))
}

/// The bar operator on a full velocity field: one cell field per component.
pub fn cell_average_velocity(v: &FaceField) -> Vec<CellField> {
    let g = v.grid();
    (0..g.dim()).map(|i| cell_average_axis(g, v.component(i), i)).collect()
}

/// `int r = h^d sum_K r_K`.
pub fn integrate_cells(r: &CellField) -> f64 {
    r.grid().cell_volume() * r.values().iter().sum::<f64>()
}

/// `int v_i = h^d sum_sigma v_{i,sigma}` over the dual cells of one axis.
pub fn integrate_faces(v: &FaceField, axis: usize) -> f64 {
    v.grid().cell_volume() * v.component(axis).iter().sum::<f64>()
}

/// `int r s` over the primary grid.
pub fn cell_inner(a: &CellField, b: &CellField) -> f64 {
    debug_assert_eq!(a.grid(), b.grid());
    a.grid().cell_volume() * a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>()
}

/// `int u . w` with each component integrated over its own dual grid.
pub fn face_inner(a: &FaceField, b: &FaceField) -> f64 {
    debug_assert_eq!(a.grid(), b.grid());
    let vol = a.grid().cell_volume();
    a.components()
        .iter()
        .zip(b.components())
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .sum::<f64>()
        * vol
}

fn coord_header(dim: usize) -> &'static str {
    if dim == 2 {
        "x,y"
    } else {
        "x,y,z"
    }
}

fn write_coords(w: &mut impl Write, x: &[f64; MAX_DIM], dim: usize) -> std::io::Result<()> {
    for (a, xa) in x.iter().enumerate().take(dim) {
        if a > 0 {
            write!(w, ",")?;
        }
        write!(w, "{xa:.17e}")?;
    }
    Ok(())
}

/// CSV dump in linear cell order: `k,x,y[,z],value`.
pub fn write_cell_csv(r: &CellField, w: &mut impl Write) -> std::io::Result<()> {
    let g = r.grid();
    writeln!(w, "k,{},value", coord_header(g.dim()))?;
    for (k, v) in r.values().iter().enumerate() {
        write!(w, "{k},")?;
        write_coords(w, &g.cell_center(k), g.dim())?;
        writeln!(w, ",{v:.17e}")?;
    }
    Ok(())
}

/// CSV dump of a face field, axis-major then linear face order:
/// `axis,k,x,y[,z],value` where `x` is the face center.
pub fn write_face_csv(v: &FaceField, w: &mut impl Write) -> std::io::Result<()> {
    let g = v.grid();
    writeln!(w, "axis,k,{},value", coord_header(g.dim()))?;
    for i in 0..g.dim() {
        for (k, val) in v.component(i).iter().enumerate() {
            write!(w, "{i},{k},")?;
            write_coords(w, &g.face_center(i, k), g.dim())?;
            writeln!(w, ",{val:.17e}")?;
        }
    }
    Ok(())
}

/// Raw little-endian `f64` values in linear order (face fields: axis-major).
pub fn write_binary(values: impl IntoIterator<Item = f64>, w: &mut impl Write) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_cell_binary(grid: StaggeredGrid, r: &mut impl Read) -> Result<CellField> {
    let values = read_f64s(r, grid.cell_count())?;
    CellField::from_values(grid, values)
}

pub fn read_face_binary(grid: StaggeredGrid, r: &mut impl Read) -> Result<FaceField> {
    let comps = (0..grid.dim())
        .map(|_| read_f64s(r, grid.face_count()))
        .collect::<Result<Vec<_>>>()?;
    FaceField::from_components(grid, comps)
}

fn read_f64s(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * count];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}
