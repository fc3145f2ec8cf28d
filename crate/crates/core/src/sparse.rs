//! Minimal compressed-sparse-row matrix used to assemble the Newton Jacobian.
//!
//! Structural entries are never dropped, even when their value is zero, so a
//! Jacobian assembled on a fixed grid always has the same pattern and the
//! symbolic factorization can be reused across Newton iterations.

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets, summing duplicates. Column
    /// indices within a row come out sorted.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            row.clear();
            row.extend((counts[i]..counts[i + 1]).map(|p| (cols[p], vals[p])));
            row.sort_by_key(|e| e.0);
            for &(c, v) in &row {
                if indices.len() > indptr[i] && *indices.last().unwrap() == c {
                    *data.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: d.to_vec(),
        }
    }

    /// A row-selection operator: row `i` has a single `1` at column `map(i)`.
    pub fn selection(nrows: usize, ncols: usize, map: impl Fn(usize) -> usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: (0..=nrows).collect(),
            indices: (0..nrows).map(map).collect(),
            data: vec![1.0; nrows],
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |p| (self.indices[p], self.data[p]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(p) => self.data[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in self.indptr[i]..self.indptr[i + 1] {
                s += self.data[p] * x[self.indices[p]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// Sparse product `self * other` over the structural pattern.
    pub fn mul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows, "inner dimensions differ");
        let mut marker = vec![usize::MAX; other.ncols];
        let mut acc = vec![0.0; other.ncols];
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        let mut cols: Vec<usize> = Vec::new();
        indptr.push(0);
        for i in 0..self.nrows {
            cols.clear();
            for p in self.indptr[i]..self.indptr[i + 1] {
                let (k, a) = (self.indices[p], self.data[p]);
                for q in other.indptr[k]..other.indptr[k + 1] {
                    let j = other.indices[q];
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        cols.push(j);
                    }
                    acc[j] += a * other.data[q];
                }
            }
            cols.sort_unstable();
            for &j in &cols {
                indices.push(j);
                data.push(acc[j]);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: other.ncols,
            indptr,
            indices,
            data,
        }
    }

    /// `alpha * self + beta * other` over the union of both patterns.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut data = Vec::with_capacity(self.nnz() + other.nnz());
        indptr.push(0);
        for i in 0..self.nrows {
            let (mut p, pe) = (self.indptr[i], self.indptr[i + 1]);
            let (mut q, qe) = (other.indptr[i], other.indptr[i + 1]);
            while p < pe || q < qe {
                let cp = if p < pe { self.indices[p] } else { usize::MAX };
                let cq = if q < qe { other.indices[q] } else { usize::MAX };
                if cp == cq {
                    indices.push(cp);
                    data.push(alpha * self.data[p] + beta * other.data[q]);
                    p += 1;
                    q += 1;
                } else if cp < cq {
                    indices.push(cp);
                    data.push(alpha * self.data[p]);
                    p += 1;
                } else {
                    indices.push(cq);
                    data.push(beta * other.data[q]);
                    q += 1;
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn add(&self, other: &CsrMatrix) -> CsrMatrix {
        self.add_scaled(1.0, other, 1.0)
    }

    pub fn scaled(mut self, c: f64) -> CsrMatrix {
        self.data.iter_mut().for_each(|v| *v *= c);
        self
    }

    /// `diag(s) * self`.
    pub fn scale_rows(mut self, s: &[f64]) -> CsrMatrix {
        assert_eq!(s.len(), self.nrows);
        for (i, si) in s.iter().enumerate() {
            for p in self.indptr[i]..self.indptr[i + 1] {
                self.data[p] *= si;
            }
        }
        self
    }

    /// `self * diag(s)`.
    pub fn scale_cols(mut self, s: &[f64]) -> CsrMatrix {
        assert_eq!(s.len(), self.ncols);
        for (p, v) in self.data.iter_mut().enumerate() {
            *v *= s[self.indices[p]];
        }
        self
    }

    /// Assembles a block matrix from a square grid of optional equally sized blocks.
    pub fn from_blocks(blocks: &[Vec<Option<&CsrMatrix>>]) -> CsrMatrix {
        let nb = blocks.len();
        let bs = blocks
            .iter()
            .flatten()
            .flatten()
            .next()
            .map(|b| b.nrows)
            .expect("at least one block");
        let mut indptr = Vec::with_capacity(nb * bs + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for brow in blocks {
            assert_eq!(brow.len(), nb);
            for i in 0..bs {
                for (bc, blk) in brow.iter().enumerate() {
                    if let Some(b) = blk {
                        assert_eq!((b.nrows, b.ncols), (bs, bs));
                        for p in b.indptr[i]..b.indptr[i + 1] {
                            indices.push(bc * bs + b.indices[p]);
                            data.push(b.data[p]);
                        }
                    }
                }
                indptr.push(indices.len());
            }
        }
        CsrMatrix {
            nrows: nb * bs,
            ncols: nb * bs,
            indptr,
            indices,
            data,
        }
    }

    /// True when both matrices share the same structural pattern.
    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.indptr == other.indptr
            && self.indices == other.indices
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] += v;
            }
        }
        out
    }
}
