//! Uniform periodic MAC grid on the unit torus.
//!
//! Cells are linearized row-major with axis 0 fastest:
//! `k = c0 + n*c1 + n^2*c2`. Faces orthogonal to axis `i` are stored per axis
//! and keyed by their owning cell: face `k` of axis `i` is the "+" face of cell
//! `k`, i.e. it sits at `x_K + h/2 e_i` and separates `K` from its `+e_i`
//! neighbour. The "-" face of `K` is the "+" face of its `-e_i` neighbour.
//!
//! Dual cells `D_sigma` (one per face) and bidual faces are never stored; they
//! are addressed through the same linear indices.

use crate::error::{Error, Result};

/// Maximum supported dimension.
pub const MAX_DIM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StaggeredGrid {
    dim: usize,
    n: usize,
}

/// Cell coordinates, one per axis, each in `0..n`. Unused trailing axes are 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CellIndex {
    pub coords: [usize; MAX_DIM],
}

/// The face `sigma_{K,i+}` orthogonal to `axis` owned by cell `owner`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FaceIndex {
    pub axis: usize,
    pub owner: CellIndex,
}

/// Bidual face `eps = D_sigma -> D_sigma'` with `sigma, sigma'` in `E_i`
/// and `x_sigma' - x_sigma = h e_j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BidualFaceIndex {
    pub component: usize,
    pub direction: usize,
    pub base: FaceIndex,
}

impl CellIndex {
    pub fn new(coords: &[usize]) -> Self {
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Self { coords: c }
    }
}

impl StaggeredGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::Config(format!("dimension must be 2 or 3, got {dim}")));
        }
        if n < 2 {
            return Err(Error::Config(format!("need at least 2 cells per axis, got {n}")));
        }
        Ok(Self { dim, n })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Number of faces orthogonal to one axis; equals the cell count on the torus.
    #[inline]
    pub fn face_count(&self) -> usize {
        self.cell_count()
    }

    /// `|K| = |D_sigma| = |D_eps| = h^d`.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow(axis as u32)
    }

    pub fn linearize(&self, cell: CellIndex) -> usize {
        (0..self.dim).map(|a| cell.coords[a] * self.stride(a)).sum()
    }

    pub fn delinearize(&self, mut k: usize) -> CellIndex {
        let mut coords = [0; MAX_DIM];
        for c in coords.iter_mut().take(self.dim) {
            *c = k % self.n;
            k /= self.n;
        }
        CellIndex { coords }
    }

    #[inline]
    pub fn coord(&self, k: usize, axis: usize) -> usize {
        (k / self.stride(axis)) % self.n
    }

    /// Linear index of the periodic neighbour of cell `k` one step along `axis`.
    #[inline]
    pub fn shift(&self, k: usize, axis: usize, forward: bool) -> usize {
        let s = self.stride(axis);
        let c = self.coord(k, axis);
        if forward {
            if c + 1 == self.n {
                k + s - self.n * s
            } else {
                k + s
            }
        } else if c == 0 {
            k + self.n * s - s
        } else {
            k - s
        }
    }

    /// Neighbour of `cell` along `axis` in direction `dir` (`+1` or `-1`).
    pub fn neighbor_cell(&self, cell: CellIndex, axis: usize, dir: i32) -> CellIndex {
        debug_assert!(dir == 1 || dir == -1);
        let mut out = cell;
        out.coords[axis] = if dir > 0 {
            (cell.coords[axis] + 1) % self.n
        } else {
            (cell.coords[axis] + self.n - 1) % self.n
        };
        out
    }

    /// The two cells `(K, L)` separated by `face`, oriented so that
    /// `x_L - x_K = h e_axis` (modulo the torus).
    pub fn face_cells(&self, face: FaceIndex) -> (CellIndex, CellIndex) {
        (face.owner, self.neighbor_cell(face.owner, face.axis, 1))
    }

    /// Faces of the same axis whose dual cells share a side with `D_sigma`:
    /// one per axis and direction, `2d` in total.
    pub fn dual_neighbors(&self, face: FaceIndex) -> Vec<FaceIndex> {
        let mut out = Vec::with_capacity(2 * self.dim);
        for axis in 0..self.dim {
            for dir in [-1, 1] {
                out.push(FaceIndex {
                    axis: face.axis,
                    owner: self.neighbor_cell(face.owner, axis, dir),
                });
            }
        }
        out
    }

    /// All bidual faces of `E~_direction` built from faces in `E_component`.
    pub fn bidual_faces(&self, component: usize, direction: usize) -> impl Iterator<Item = BidualFaceIndex> + '_ {
        (0..self.cell_count()).map(move |k| BidualFaceIndex {
            component,
            direction,
            base: FaceIndex {
                axis: component,
                owner: self.delinearize(k),
            },
        })
    }

    /// The face `sigma'` on the far side of a bidual face.
    pub fn bidual_target(&self, eps: BidualFaceIndex) -> FaceIndex {
        FaceIndex {
            axis: eps.component,
            owner: self.neighbor_cell(eps.base.owner, eps.direction, 1),
        }
    }

    pub fn cell_center(&self, k: usize) -> [f64; MAX_DIM] {
        let h = self.h();
        let mut x = [0.0; MAX_DIM];
        for (a, xa) in x.iter_mut().enumerate().take(self.dim) {
            *xa = (self.coord(k, a) as f64 + 0.5) * h;
        }
        x
    }

    /// Center of face `k` of `axis`, i.e. `x_K + h/2 e_axis`. May equal 1.0 on
    /// the wrapped face.
    pub fn face_center(&self, axis: usize, k: usize) -> [f64; MAX_DIM] {
        let mut x = self.cell_center(k);
        x[axis] += 0.5 * self.h();
        x
    }

    pub fn ensure_same(&self, other: &StaggeredGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected_d: self.dim,
                expected_n: self.n,
                found_d: other.dim,
                found_n: other.n,
            })
        }
    }
}
