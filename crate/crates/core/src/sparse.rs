//! Sparse matrix assembly and the direct linear-solve contract.
//!
//! Matrices are assembled as coordinate triplets in a deterministic order.
//! [`LuSolver`] keeps the symbolic analysis (fill-reducing ordering and value
//! scatter order) for the last pattern it saw, so repeated Newton
//! factorizations on an unchanged topology only redo the numeric phase.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use faer::Mat;

use crate::error::{Error, Result};

/// Coordinate-format matrix under assembly. Duplicate entries are summed.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            ..Default::default()
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            rows: Vec::with_capacity(cap),
            cols: Vec::with_capacity(cap),
            vals: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(
            row < self.nrows && col < self.ncols,
            "({row},{col}) out of bounds"
        );
        self.rows.push(row);
        self.cols.push(col);
        self.vals.push(val);
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn clear(&mut self) {
        self.rows.clear();
        self.cols.clear();
        self.vals.clear();
    }

    /// Appends `scale * other`, shifted by the given offsets.
    pub fn extend_scaled(&mut self, other: &Triplets, row_off: usize, col_off: usize, scale: f64) {
        for k in 0..other.len() {
            self.push(
                other.rows[k] + row_off,
                other.cols[k] + col_off,
                scale * other.vals[k],
            );
        }
    }

    pub fn to_matrix(&self) -> SparseMatrix {
        SparseMatrix::from_triplets(self)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for k in 0..self.len() {
            d[self.rows[k]][self.cols[k]] += self.vals[k];
        }
        d
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for k in 0..self.len() {
            y[self.rows[k]] += self.vals[k] * x[self.cols[k]];
        }
        y
    }
}

/// Compressed sparse column matrix with summed duplicates.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    inner: SparseColMat<usize, f64>,
}

impl SparseMatrix {
    pub fn from_triplets(t: &Triplets) -> Self {
        let idx: Vec<Pair<usize, usize>> = (0..t.len())
            .map(|k| Pair {
                row: t.rows[k],
                col: t.cols[k],
            })
            .collect();
        let (symbolic, argsort) =
            SymbolicSparseColMat::try_new_from_indices(t.nrows, t.ncols, &idx)
                .expect("triplet indices within bounds");
        let inner =
            SparseColMat::new_from_argsort(symbolic, &argsort, &t.vals).expect("allocation");
        Self { inner }
    }

    pub fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn nnz(&self) -> usize {
        self.inner.compute_nnz()
    }

    pub fn as_faer(&self) -> &SparseColMat<usize, f64> {
        &self.inner
    }

    /// Iterates stored entries as `(row, col, value)` in column-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let m = self.inner.as_ref();
        let col_ptr = m.symbolic().col_ptr();
        let row_idx = m.symbolic().row_idx();
        let vals = m.val();
        (0..m.ncols())
            .flat_map(move |j| (col_ptr[j]..col_ptr[j + 1]).map(move |p| (row_idx[p], j, vals[p])))
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries()
            .filter(|&(r, c, _)| r == row && c == col)
            .map(|(_, _, v)| v)
            .sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols()]; self.nrows()];
        for (r, c, v) in self.entries() {
            d[r][c] += v;
        }
        d
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols());
        let mut y = vec![0.0; self.nrows()];
        for (r, c, v) in self.entries() {
            y[r] += v * x[c];
        }
        y
    }
}

struct CachedPattern {
    nrows: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    lu_symbolic: SymbolicLu<usize>,
}

/// Sparse LU with partial pivoting, reusing symbolic analysis across calls
/// with an identical triplet pattern.
#[derive(Default)]
pub struct LuSolver {
    cache: Option<CachedPattern>,
}

/// A numeric LU factorization ready for repeated solves.
pub struct LuFactor {
    lu: Lu<usize, f64>,
    n: usize,
}

impl LuSolver {
    pub fn new() -> Self {
        Self::default()
    }

    fn pattern_matches(&self, t: &Triplets) -> bool {
        match &self.cache {
            Some(c) => c.nrows == t.nrows && c.rows == t.rows && c.cols == t.cols,
            None => false,
        }
    }

    /// Factorizes the square matrix described by `t`.
    pub fn factor(&mut self, t: &Triplets, what: &'static str) -> Result<LuFactor> {
        assert_eq!(t.nrows, t.ncols, "LU needs a square matrix");
        if !self.pattern_matches(t) {
            let idx: Vec<Pair<usize, usize>> = (0..t.len())
                .map(|k| Pair {
                    row: t.rows[k],
                    col: t.cols[k],
                })
                .collect();
            let (symbolic, argsort) = SymbolicSparseColMat::try_new_from_indices(
                t.nrows, t.ncols, &idx,
            )
            .map_err(|_| Error::InvalidArgument(format!("bad sparsity pattern in {what}")))?;
            let lu_symbolic =
                SymbolicLu::try_new(symbolic.as_ref()).map_err(|_| Error::Singular(what))?;
            self.cache = Some(CachedPattern {
                nrows: t.nrows,
                rows: t.rows.clone(),
                cols: t.cols.clone(),
                symbolic,
                argsort,
                lu_symbolic,
            });
        }
        let c = self.cache.as_ref().expect("pattern cached above");
        if t.vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular(what));
        }
        let mat = SparseColMat::new_from_argsort(c.symbolic.clone(), &c.argsort, &t.vals)
            .map_err(|_| Error::Singular(what))?;
        let lu = Lu::try_new_with_symbolic(c.lu_symbolic.clone(), mat.as_ref())
            .map_err(|_| Error::Singular(what))?;
        Ok(LuFactor { lu, n: t.nrows })
    }
}

impl LuFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place. Fails if the result is not finite, which is
    /// how an exactly singular pivot shows up.
    pub fn solve_in_place(&self, b: &mut [f64], what: &'static str) -> Result<()> {
        assert_eq!(b.len(), self.n);
        let mut rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(rhs.as_mut());
        for (i, bi) in b.iter_mut().enumerate() {
            let v = rhs[(i, 0)];
            if !v.is_finite() {
                return Err(Error::Singular(what));
            }
            *bi = v;
        }
        Ok(())
    }

    /// Solves for many right-hand sides given as the columns of a dense
    /// column-major block (`n` rows, `ncols` columns).
    pub fn solve_columns(&self, cols: &mut Mat<f64>, what: &'static str) -> Result<()> {
        assert_eq!(cols.nrows(), self.n);
        self.lu.solve_in_place(cols.as_mut());
        for j in 0..cols.ncols() {
            for i in 0..cols.nrows() {
                if !cols[(i, j)].is_finite() {
                    return Err(Error::Singular(what));
                }
            }
        }
        Ok(())
    }
}

/// Infinity norm of a slice.
#[inline]
pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
