//! Sparse direct factorization (backed by faer) with reusable sparsity
//! pattern, and a Jacobi-preconditioned conjugate gradient.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use faer::MatMut;

use crate::error::{Error, Result};

/// A square sparsity pattern given as a list of (row, col) entries.
/// Duplicates are allowed and summed. Values passed to `factor` must follow
/// the same order as the entry list.
pub(crate) struct SparsePattern {
    n: usize,
    len: usize,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    lu_symbolic: SymbolicLu<usize>,
}

impl SparsePattern {
    pub fn new(n: usize, entries: &[(usize, usize)]) -> Result<Self> {
        let pairs: Vec<Pair<usize, usize>> = entries.iter().map(|&(row, col)| Pair { row, col }).collect();
        let (symbolic, argsort) = SymbolicSparseColMat::try_new_from_indices(n, n, &pairs)
            .map_err(|e| Error::Solver(format!("sparsity pattern: {e:?}")))?;
        let lu_symbolic = SymbolicLu::try_new(symbolic.as_ref())
            .map_err(|e| Error::Solver(format!("symbolic LU: {e:?}")))?;
        Ok(SparsePattern {
            n,
            len: entries.len(),
            symbolic,
            argsort,
            lu_symbolic,
        })
    }

    pub fn factor(&self, values: &[f64]) -> Result<Factored> {
        if values.len() != self.len {
            return Err(Error::Shape {
                expected: self.len,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("non-finite matrix entry".into()));
        }
        let mat = SparseColMat::new_from_argsort(self.symbolic.clone(), &self.argsort, values)
            .map_err(|e| Error::Solver(format!("assembly: {e:?}")))?;
        let lu = Lu::try_new_with_symbolic(self.lu_symbolic.clone(), mat.as_ref())
            .map_err(|e| Error::Solver(format!("numeric LU: {e:?}")))?;
        Ok(Factored { lu, n: self.n })
    }
}

pub(crate) struct Factored {
    lu: Lu<usize, f64>,
    n: usize,
}

impl Factored {
    pub fn solve_in_place(&self, rhs: &mut [f64]) -> Result<()> {
        debug_assert_eq!(rhs.len(), self.n);
        self.lu
            .solve_in_place(MatMut::from_column_major_slice_mut(rhs, self.n, 1));
        if rhs.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Solver("singular Jacobian".into()))
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned CG for a symmetric positive semidefinite operator whose
/// kernel is handled by `project`, which must map onto a complement of the
/// kernel and leave residuals unchanged. Stops when `|r| <= rtol |b|`.
pub(crate) fn pcg(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    diag: &[f64],
    project: impl Fn(&mut [f64]),
    rtol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let precond = |r: &[f64]| -> Vec<f64> { r.iter().zip(diag).map(|(v, d)| v / d).collect() };
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver("operator lost positivity".into()));
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        project(&mut x);
        if dot(&r, &r).sqrt() <= rtol * bnorm {
            // Recompute the true residual to guard against drift.
            let ax = apply(&x);
            let true_res: f64 = b.iter().zip(&ax).map(|(bi, ai)| (bi - ai) * (bi - ai)).sum::<f64>().sqrt();
            if true_res <= rtol * bnorm {
                return Ok(x);
            }
            for k in 0..n {
                r[k] = b[k] - ax[k];
            }
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    let ax = apply(&x);
    let res: f64 = b.iter().zip(&ax).map(|(bi, ai)| (bi - ai) * (bi - ai)).sum::<f64>().sqrt();
    Err(Error::Solver(format!(
        "conjugate gradient stalled after {max_iter} iterations (relative residual {:e})",
        res / bnorm
    )))
}
