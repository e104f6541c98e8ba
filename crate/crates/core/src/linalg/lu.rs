//! Banded LU factorization with partial pivoting.
//!
//! The factorization works on a row-windowed band layout: row `i` stores
//! columns `i - kl ..= i + kl + ku`, which is wide enough to hold the fill
//! created by row interchanges. All problems in this crate come from
//! stencils of small bandwidth, so no fill-reducing reordering is applied.

use std::cell::Cell;

use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

/// Pivots smaller than this fraction of the largest entry are treated as zero.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-14;

thread_local! {
    static FACTORIZATIONS: Cell<u64> = const { Cell::new(0) };
}

/// Number of LU factorizations performed on the calling thread so far.
pub fn factorization_count() -> u64 {
    FACTORIZATIONS.with(|c| c.get())
}

#[derive(Debug, Clone)]
pub struct LuFactorization {
    n: usize,
    kl: usize,
    /// Upper bandwidth of `U` (= `kl + ku` of the input).
    ku2: usize,
    width: usize,
    /// Row-windowed storage; after factorization holds `U` in columns `i..=i+ku2`.
    band: Vec<f64>,
    /// Gauss multipliers, `kl` per elimination step.
    lower: Vec<f64>,
    /// Row swapped with row `k` at step `k`.
    pivots: Vec<usize>,
}

impl LuFactorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, row: usize, col: usize) -> usize {
        row * self.width + (col + self.kl - row)
    }

    fn check_rhs(&self, rhs: &[f64]) -> Result<()> {
        if rhs.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: rhs.len(),
                context: "LU right-hand side",
            });
        }
        Ok(())
    }

    /// Solve `A x = rhs` (or `A^T x = rhs` when `transpose`).
    pub fn solve(&self, rhs: &[f64], transpose: bool) -> Result<Vec<f64>> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x, transpose)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [f64], transpose: bool) -> Result<()> {
        self.check_rhs(x)?;
        if transpose {
            self.solve_transpose(x);
        } else {
            self.solve_plain(x);
        }
        Ok(())
    }

    fn solve_plain(&self, x: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            x.swap(k, self.pivots[k]);
            let xk = x[k];
            if xk != 0.0 {
                let rows = self.kl.min(n - 1 - k);
                for r in 0..rows {
                    x[k + 1 + r] -= self.lower[k * self.kl + r] * xk;
                }
            }
        }
        for i in (0..n).rev() {
            let last = (i + self.ku2).min(n - 1);
            let mut s = x[i];
            for j in i + 1..=last {
                s -= self.band[self.at(i, j)] * x[j];
            }
            x[i] = s / self.band[self.at(i, i)];
        }
    }

    fn solve_transpose(&self, x: &mut [f64]) {
        let n = self.n;
        // U^T z = rhs, column-oriented forward substitution.
        for i in 0..n {
            x[i] /= self.band[self.at(i, i)];
            let zi = x[i];
            if zi != 0.0 {
                let last = (i + self.ku2).min(n - 1);
                for j in i + 1..=last {
                    x[j] -= self.band[self.at(i, j)] * zi;
                }
            }
        }
        // Undo the Gauss transforms and interchanges in reverse order.
        for k in (0..n).rev() {
            let rows = self.kl.min(n - 1 - k);
            let mut s = 0.0;
            for r in 0..rows {
                s += self.lower[k * self.kl + r] * x[k + 1 + r];
            }
            x[k] -= s;
            x.swap(k, self.pivots[k]);
        }
    }
}

/// Factor a square sparse matrix as `P A = L U`.
pub fn lu_factor(a: &SparseMatrix) -> Result<LuFactorization> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.n_rows(),
            actual: a.n_cols(),
            context: "LU requires a square matrix",
        });
    }
    let n = a.n_rows();
    let (kl, ku) = a.bandwidth();
    let ku2 = kl + ku;
    let width = kl + ku2 + 1;
    let mut f = LuFactorization {
        n,
        kl,
        ku2,
        width,
        band: vec![0.0; n * width],
        lower: vec![0.0; n * kl],
        pivots: vec![0; n],
    };
    for (i, j, v) in a.triplets() {
        let idx = f.at(i, j);
        f.band[idx] = v;
    }
    let threshold = SINGULAR_PIVOT_RATIO * a.max_abs();

    for k in 0..n {
        let last_row = (k + kl).min(n.saturating_sub(1));
        let mut p = k;
        let mut best = f.band[f.at(k, k)].abs();
        for r in k + 1..=last_row {
            let v = f.band[f.at(r, k)].abs();
            if v > best {
                best = v;
                p = r;
            }
        }
        if best <= threshold || best == 0.0 {
            return Err(Error::SingularMatrix {
                column: k,
                pivot: best,
            });
        }
        f.pivots[k] = p;
        let last_col = (k + ku2).min(n - 1);
        if p != k {
            for j in k..=last_col {
                let (ik, ip) = (f.at(k, j), f.at(p, j));
                f.band.swap(ik, ip);
            }
        }
        let pivot = f.band[f.at(k, k)];
        for r in k + 1..=last_row {
            let ir = f.at(r, k);
            let l = f.band[ir] / pivot;
            f.band[ir] = 0.0;
            f.lower[k * kl + (r - k - 1)] = l;
            if l != 0.0 {
                let (row_k, row_r) = (f.at(k, k), f.at(r, k));
                let span = last_col - k;
                for t in 1..=span {
                    // Both rows index column k + t at the same relative offset.
                    let ukj = f.band[row_k + t];
                    f.band[row_r + t] -= l * ukj;
                }
            }
        }
    }
    FACTORIZATIONS.with(|c| c.set(c.get() + 1));
    Ok(f)
}

/// Convenience wrapper around [`LuFactorization::solve`].
pub fn lu_solve(f: &LuFactorization, rhs: &[f64], transpose: bool) -> Result<Vec<f64>> {
    f.solve(rhs, transpose)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_residual(a: &SparseMatrix, x: &[f64], b: &[f64], transpose: bool) -> f64 {
        let ax = if transpose {
            a.matvec_transpose(x).unwrap()
        } else {
            a.matvec(x).unwrap()
        };
        let num: f64 = ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        num / den
    }

    fn random_sparse(n: usize, density: f64, rng: &mut ChaCha8Rng) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            // Strong diagonal keeps the random matrices well conditioned.
            t.push((i, i, 4.0 + rng.random::<f64>()));
            for j in 0..n {
                if i != j && rng.random::<f64>() < density {
                    t.push((i, j, rng.random_range(-1.0..1.0)));
                }
            }
        }
        SparseMatrix::from_triplets(n, n, t).unwrap()
    }

    #[test]
    fn identity_factor() {
        let f = lu_factor(&SparseMatrix::identity(5)).unwrap();
        let e1 = [1.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(f.solve(&e1, false).unwrap(), e1.to_vec());
        let r = [3.0, -1.0, 2.0, 0.5, 7.0];
        assert_eq!(f.solve(&r, true).unwrap(), r.to_vec());
    }

    #[test]
    fn second_difference_all_ones() {
        let a = SparseMatrix::banded_toeplitz(4, &[(-1, 1.0), (0, -2.0), (1, 1.0)]);
        let x = lu_solve(&lu_factor(&a).unwrap(), &[1.0; 4], false).unwrap();
        for (got, want) in x.iter().zip([-2.0, -3.0, -3.0, -2.0]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_solve() {
        let a = SparseMatrix::from_diagonal(&[2.0, 4.0]);
        assert_eq!(lu_solve(&lu_factor(&a).unwrap(), &[2.0, 4.0], false).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn symmetric_transpose_agrees() {
        let a = SparseMatrix::banded_toeplitz(6, &[(-2, 0.3), (-1, 1.0), (0, -3.0), (1, 1.0), (2, 0.3)]);
        let f = lu_factor(&a).unwrap();
        let b = [1.0, 2.0, -1.0, 0.5, 3.0, -2.0];
        let x = f.solve(&b, false).unwrap();
        let y = f.solve(&b, true).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-13);
        }
    }

    #[test]
    fn random_sparse_recovers_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_sparse(50, 0.08, &mut rng);
        let f = lu_factor(&a).unwrap();
        let x_star: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = a.matvec(&x_star).unwrap();
        let x = f.solve(&b, false).unwrap();
        let err: f64 = x.iter().zip(&x_star).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = x_star.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / norm < 1e-10, "rel err {}", err / norm);
    }

    #[test]
    fn hundred_random_rhs_small_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_sparse(30, 0.15, &mut rng);
        let f = lu_factor(&a).unwrap();
        for trial in 0..100 {
            let b: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
            let transpose = trial % 2 == 1;
            let x = f.solve(&b, transpose).unwrap();
            assert!(rel_residual(&a, &x, &b, transpose) <= 1e-10);
        }
    }

    #[test]
    fn pivoting_is_exercised() {
        // Zero leading diagonal forces an interchange.
        let a = SparseMatrix::from_triplets(
            3,
            3,
            [(0, 1, 1.0), (1, 0, 2.0), (1, 1, 1.0), (1, 2, 1.0), (2, 1, 1.0), (2, 2, 3.0)],
        )
        .unwrap();
        let f = lu_factor(&a).unwrap();
        let b = [1.0, 2.0, 3.0];
        for transpose in [false, true] {
            let x = f.solve(&b, transpose).unwrap();
            assert!(rel_residual(&a, &x, &b, transpose) < 1e-14);
        }
    }

    #[test]
    fn singular_matrix_detected() {
        let a = SparseMatrix::from_triplets(2, 2, [(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 4.0)])
            .unwrap();
        assert!(matches!(lu_factor(&a), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn rhs_length_checked() {
        let f = lu_factor(&SparseMatrix::identity(3)).unwrap();
        assert!(matches!(f.solve(&[1.0], false), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn factorization_counter_increments() {
        let before = factorization_count();
        lu_factor(&SparseMatrix::identity(2)).unwrap();
        assert_eq!(factorization_count(), before + 1);
    }
}
