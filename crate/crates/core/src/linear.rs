//! Linear solvers for the Newton correction: a sparse direct LU (backed by
//! `faer`) and BiCGSTAB with an ILU(0) preconditioner.

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolverKind {
    /// BiCGSTAB first, sparse LU when the Krylov solve fails.
    #[default]
    Auto,
    Direct,
    Bicgstab,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearSolverConfig {
    pub kind: LinearSolverKind,
    /// Relative residual tolerance `|Ax - b| / |b|`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for LinearSolverConfig {
    fn default() -> Self {
        Self {
            kind: LinearSolverKind::Auto,
            tol: 1e-12,
            max_iters: 1000,
        }
    }
}

impl LinearSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("linear tolerance must be > 0, got {}", self.tol)));
        }
        if self.max_iters < 1 {
            return Err(Error::Config("linear iteration cap must be >= 1".into()));
        }
        Ok(())
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64], bnorm: f64) -> (Vec<f64>, f64) {
    let mut r = a.mul_vec(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let rel = norm2(&r) / bnorm;
    (r, rel)
}

/// Stateful solver; caches the symbolic LU for a fixed sparsity pattern.
pub struct LinearSolver {
    config: LinearSolverConfig,
    kind: LinearSolverKind,
    symbolic: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
    /// Iterations of the last Krylov solve (0 for direct).
    pub last_iterations: usize,
}

impl LinearSolver {
    pub fn new(config: LinearSolverConfig) -> Self {
        Self {
            config,
            kind: config.kind,
            symbolic: None,
            last_iterations: 0,
        }
    }

    pub fn kind(&self) -> LinearSolverKind {
        self.kind
    }

    pub fn solve(&mut self, a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_to(a, b, self.config.tol)
    }

    /// Like [`solve`](Self::solve) with a Krylov relative tolerance of
    /// `max(tol, config.tol)`; the direct path always uses the configured one.
    pub fn solve_to(&mut self, a: &CsrMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
        let tol = tol.max(self.config.tol);
        if a.nrows() != a.ncols() || a.nrows() != b.len() {
            return Err(Error::Config("linear system shape mismatch".into()));
        }
        if b.iter().any(|v| !v.is_finite()) || a.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearBreakdown("non-finite system entries".into()));
        }
        let bnorm = norm2(b);
        if bnorm == 0.0 {
            self.last_iterations = 0;
            return Ok(vec![0.0; b.len()]);
        }
        match self.kind {
            LinearSolverKind::Bicgstab => self.solve_bicgstab(a, b, bnorm, tol),
            LinearSolverKind::Direct => self.solve_direct(a, b, bnorm),
            LinearSolverKind::Auto => match self.solve_bicgstab(a, b, bnorm, tol) {
                Err(Error::LinearBreakdown(_) | Error::LinearNotConverged { .. }) => self.solve_direct(a, b, bnorm),
                other => other,
            },
        }
    }

    fn solve_direct(&mut self, a: &CsrMatrix, b: &[f64], bnorm: f64) -> Result<Vec<f64>> {
        self.last_iterations = 0;
        let n = a.nrows();
        // The CSR arrays of `a` are the CSC arrays of `a^T`; factor that and
        // solve with the transpose.
        let reuse = matches!(&self.symbolic, Some((p, i, _)) if p == a.indptr() && i == a.indices());
        if !reuse {
            let sym = SymbolicSparseColMatRef::new_checked(n, n, a.indptr(), None, a.indices());
            let lu = SymbolicLu::try_new(sym)
                .map_err(|e| Error::LinearBreakdown(format!("symbolic factorization: {e:?}")))?;
            self.symbolic = Some((a.indptr().to_vec(), a.indices().to_vec(), lu));
        }
        let (indptr, indices, symbolic) = self.symbolic.as_ref().expect("set above");
        let sym = SymbolicSparseColMatRef::new_checked(n, n, indptr, None, indices);
        let mat = SparseColMatRef::new(sym, a.data());
        let lu = Lu::try_new_with_symbolic(symbolic.clone(), mat)
            .map_err(|e| Error::LinearBreakdown(format!("numeric factorization: {e:?}")))?;

        let mut x = b.to_vec();
        lu.solve_transpose_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(&mut x, n, 1));
        let (mut r, mut rel) = relative_residual(a, &x, b, bnorm);
        // iterative refinement with the same factors
        for _ in 0..3 {
            if !(rel > self.config.tol) {
                break;
            }
            lu.solve_transpose_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(&mut r, n, 1));
            for (xi, di) in x.iter_mut().zip(&r) {
                *xi += di;
            }
            let next = relative_residual(a, &x, b, bnorm);
            r = next.0;
            rel = next.1;
        }
        if !rel.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearBreakdown("singular matrix: non-finite solution".into()));
        }
        if rel > self.config.tol {
            return Err(Error::LinearBreakdown(format!(
                "singular or ill-conditioned matrix: relative residual {rel:e} after refinement"
            )));
        }
        Ok(x)
    }

    fn solve_bicgstab(&mut self, a: &CsrMatrix, b: &[f64], bnorm: f64, tol: f64) -> Result<Vec<f64>> {
        let ilu = Ilu0::new(a)?;
        let n = b.len();
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut phat = vec![0.0; n];
        let mut shat = vec![0.0; n];
        let mut t = vec![0.0; n];
        for it in 1..=self.config.max_iters {
            let rho_new = dot(&r_hat, &r);
            if rho_new == 0.0 || !rho_new.is_finite() {
                return Err(Error::LinearBreakdown("BiCGSTAB: rho vanished".into()));
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            ilu.apply(&p, &mut phat);
            a.matvec(&phat, &mut v);
            let denom = dot(&r_hat, &v);
            if denom == 0.0 || !denom.is_finite() {
                return Err(Error::LinearBreakdown("BiCGSTAB: <r_hat, v> vanished".into()));
            }
            alpha = rho / denom;
            let mut s = r.clone();
            for i in 0..n {
                s[i] -= alpha * v[i];
            }
            if norm2(&s) / bnorm <= tol {
                for i in 0..n {
                    x[i] += alpha * phat[i];
                }
                return self.finish(a, x, b, bnorm, it, tol);
            }
            ilu.apply(&s, &mut shat);
            a.matvec(&shat, &mut t);
            let tt = dot(&t, &t);
            if tt == 0.0 {
                return Err(Error::LinearBreakdown("BiCGSTAB: t vanished".into()));
            }
            omega = dot(&t, &s) / tt;
            for i in 0..n {
                x[i] += alpha * phat[i] + omega * shat[i];
                r[i] = s[i] - omega * t[i];
            }
            let rel = norm2(&r) / bnorm;
            if !rel.is_finite() {
                return Err(Error::LinearBreakdown("BiCGSTAB: non-finite residual".into()));
            }
            if rel <= tol {
                return self.finish(a, x, b, bnorm, it, tol);
            }
            if omega == 0.0 {
                return Err(Error::LinearBreakdown("BiCGSTAB: omega vanished".into()));
            }
        }
        let (_, rel) = relative_residual(a, &x, b, bnorm);
        self.last_iterations = self.config.max_iters;
        Err(Error::LinearNotConverged {
            iterations: self.config.max_iters,
            residual: rel,
        })
    }

    fn finish(&mut self, a: &CsrMatrix, x: Vec<f64>, b: &[f64], bnorm: f64, it: usize, tol: f64) -> Result<Vec<f64>> {
        self.last_iterations = it;
        // the recursive residual can drift from the true one
        let (_, rel) = relative_residual(a, &x, b, bnorm);
        if rel <= 10.0 * tol {
            Ok(x)
        } else {
            Err(Error::LinearNotConverged {
                iterations: it,
                residual: rel,
            })
        }
    }
}

/// Incomplete LU factorization with zero fill on the pattern of `A`.
pub struct Ilu0 {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let indptr = a.indptr().to_vec();
        let indices = a.indices().to_vec();
        let mut data = a.data().to_vec();
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            for p in indptr[i]..indptr[i + 1] {
                if indices[p] == i {
                    diag[i] = p;
                }
            }
            if diag[i] == usize::MAX {
                return Err(Error::LinearBreakdown(format!("ILU(0): missing diagonal in row {i}")));
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            for p in indptr[i]..indptr[i + 1] {
                pos[indices[p]] = p;
            }
            for p in indptr[i]..diag[i] {
                let k = indices[p];
                let pivot = data[diag[k]];
                if pivot == 0.0 {
                    return Err(Error::LinearBreakdown(format!("ILU(0): zero pivot in row {k}")));
                }
                let lik = data[p] / pivot;
                data[p] = lik;
                for q in diag[k] + 1..indptr[k + 1] {
                    let j = indices[q];
                    if pos[j] != usize::MAX && pos[j] >= indptr[i] && pos[j] < indptr[i + 1] {
                        data[pos[j]] -= lik * data[q];
                    }
                }
            }
            for p in indptr[i]..indptr[i + 1] {
                pos[indices[p]] = usize::MAX;
            }
            if data[diag[i]] == 0.0 {
                return Err(Error::LinearBreakdown(format!("ILU(0): zero pivot in row {i}")));
            }
        }
        Ok(Self {
            n,
            indptr,
            indices,
            data,
            diag,
        })
    }

    /// `z = (LU)^{-1} r`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        for i in 0..self.n {
            let mut s = r[i];
            for p in self.indptr[i]..self.diag[i] {
                s -= self.data[p] * z[self.indices[p]];
            }
            z[i] = s;
        }
        for i in (0..self.n).rev() {
            let mut s = z[i];
            for p in self.diag[i] + 1..self.indptr[i + 1] {
                s -= self.data[p] * z[self.indices[p]];
            }
            z[i] = s / self.data[self.diag[i]];
        }
    }
}
