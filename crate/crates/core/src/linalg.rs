//! Sparse direct solve for the Newton systems.
//!
//! Backed by faer's simplicial sparse LU with partial pivoting, using an
//! approximate-minimum-degree column order computed on the pattern of
//! `A + Aᵀ` (power-flow matrices are nearly structurally symmetric). The
//! pattern, its ordering and the triplet-to-CSC map are cached while
//! successive matrices keep the same triplet layout, as the Newton matrices
//! of one circuit do. Everything runs sequentially so results are bitwise
//! reproducible regardless of how many Monte Carlo workers are active.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::perm::PermRef;
use faer::sparse::linalg::amd;
use faer::sparse::linalg::lu::simplicial::{
    factorize_simplicial_numeric_lu, factorize_simplicial_numeric_lu_scratch, SimplicialLu,
};
use faer::sparse::linalg::LuError;
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use faer::{Conj, Mat, Par};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("singular system (pivot row {pivot:?})")]
    Singular { pivot: Option<usize> },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
}

/// Residual bound targeted by iterative refinement, relative to `‖b‖_∞`.
const REFINE_TOL: f64 = 1e-9;
const REFINE_STEPS: usize = 2;

struct Pattern {
    dim: usize,
    indices: Vec<(usize, usize)>,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    perm: Vec<usize>,
    perm_inv: Vec<usize>,
}

impl Pattern {
    fn new(dim: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, LinalgError> {
        let fact = |e: &dyn std::fmt::Debug| LinalgError::Factorization(format!("{e:?}"));
        let pairs: Vec<Pair<usize, usize>> = triplets.iter().map(|&(r, c, _)| Pair::new(r, c)).collect();
        let (symbolic, argsort) = SymbolicSparseColMat::try_new_from_indices(dim, dim, &pairs).map_err(|e| fact(&e))?;
        // upper triangle of pattern(A + Aᵀ) for the ordering
        let mut upper = Vec::with_capacity(symbolic.compute_nnz());
        for j in 0..dim {
            for &i in symbolic.row_idx_of_col_raw(j) {
                upper.push(if i <= j { Pair::new(i, j) } else { Pair::new(j, i) });
            }
        }
        let (upper, _) = SymbolicSparseColMat::try_new_from_indices(dim, dim, &upper).map_err(|e| fact(&e))?;
        let mut perm = vec![0usize; dim];
        let mut perm_inv = vec![0usize; dim];
        let mut buf = MemBuffer::new(amd::order_scratch::<usize>(dim, upper.compute_nnz()));
        amd::order(&mut perm, &mut perm_inv, upper.as_ref(), Default::default(), MemStack::new(&mut buf))
            .map_err(|e| fact(&e))?;
        Ok(Pattern { dim, indices: triplets.iter().map(|&(r, c, _)| (r, c)).collect(), symbolic, argsort, perm, perm_inv })
    }

    fn matches(&self, dim: usize, triplets: &[(usize, usize, f64)]) -> bool {
        self.dim == dim
            && self.indices.len() == triplets.len()
            && self.indices.iter().zip(triplets).all(|(&(r, c), &(tr, tc, _))| r == tr && c == tc)
    }
}

/// Reusable LU solver. The symbolic analysis is kept while the triplet
/// layout of successive matrices stays the same.
#[derive(Default)]
pub struct SparseLuSolver {
    pattern: Option<Pattern>,
    lu: SimplicialLu<usize, f64>,
}

impl std::fmt::Debug for SparseLuSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLuSolver").field("cached", &self.pattern.is_some()).finish()
    }
}

impl SparseLuSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Solves `A x = b` for the square matrix given as (row, col, value)
    /// triplets; duplicate entries are summed.
    pub fn solve(&mut self, dim: usize, triplets: &[(usize, usize, f64)], rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if rhs.len() != dim {
            return Err(LinalgError::Dimension(format!("rhs has {} rows, matrix {dim}", rhs.len())));
        }
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= dim || *c >= dim) {
            return Err(LinalgError::Dimension(format!("entry ({r}, {c}) outside {dim}x{dim}")));
        }
        if dim == 0 {
            return Ok(Vec::new());
        }
        if !self.pattern.as_ref().is_some_and(|p| p.matches(dim, triplets)) {
            self.pattern = Some(Pattern::new(dim, triplets)?);
        }
        let pat = self.pattern.as_ref().expect("set above");
        let values: Vec<f64> = triplets.iter().map(|t| t.2).collect();
        let a = SparseColMat::new_from_argsort(pat.symbolic.clone(), &pat.argsort, &values)
            .map_err(|e| LinalgError::Factorization(format!("{e:?}")))?;

        let col_perm = PermRef::new_checked(&pat.perm, &pat.perm_inv, dim);
        let mut row_perm = vec![0usize; dim];
        let mut row_perm_inv = vec![0usize; dim];
        let mut buf = MemBuffer::new(factorize_simplicial_numeric_lu_scratch::<usize, f64>(dim, dim));
        factorize_simplicial_numeric_lu(&mut row_perm, &mut row_perm_inv, &mut self.lu, a.as_ref(), col_perm, MemStack::new(&mut buf))
            .map_err(|e| match e {
                LuError::SymbolicSingular { index } => LinalgError::Singular { pivot: Some(index) },
                other => LinalgError::Factorization(format!("{other:?}")),
            })?;

        let lu = &self.lu;
        let row_perm = PermRef::new_checked(&row_perm, &row_perm_inv, dim);
        let mut solve_buf = MemBuffer::new(faer::perm::permute_rows_in_place_scratch::<usize, f64>(dim, 1));
        let mut solve = |b: &[f64]| -> Vec<f64> {
            let mut x = Mat::<f64>::from_fn(dim, 1, |i, _| b[i]);
            lu.solve_in_place_with_conj(row_perm, col_perm, Conj::No, x.as_mut(), Par::Seq, MemStack::new(&mut solve_buf));
            (0..dim).map(|i| x[(i, 0)]).collect()
        };

        let mut x = solve(rhs);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::Singular { pivot: None });
        }
        let b_norm = rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for _ in 0..REFINE_STEPS {
            let r = residual(dim, triplets, &x, rhs);
            let r_norm = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if r_norm <= REFINE_TOL * b_norm {
                break;
            }
            let dx = solve(&r);
            if dx.iter().any(|v| !v.is_finite()) {
                return Err(LinalgError::Singular { pivot: None });
            }
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
        }
        Ok(x)
    }
}

/// `b - A x` for a triplet matrix.
pub fn residual(dim: usize, triplets: &[(usize, usize, f64)], x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = b.to_vec();
    debug_assert_eq!(r.len(), dim);
    for &(i, j, v) in triplets {
        r[i] -= v * x[j];
    }
    r
}

/// One-shot sparse solve of `A x = b`.
pub fn solve_linear(dim: usize, triplets: &[(usize, usize, f64)], rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    SparseLuSolver::new().solve(dim, triplets, rhs)
}
