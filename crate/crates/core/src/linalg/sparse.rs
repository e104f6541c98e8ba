//! Compressed sparse row storage assembled from coordinate triplets.

use crate::error::{Error, Result};

/// A real sparse matrix in compressed row form.
///
/// Built from `(row, col, value)` triplets; duplicate coordinates are summed
/// during assembly so every stored `(row, col)` pair is unique and column
/// indices are sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(row, col, _) in &entries {
            if row >= n_rows || col >= n_cols {
                return Err(Error::IndexOutOfBounds {
                    row,
                    col,
                    n_rows,
                    n_cols,
                });
            }
        }
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (row, col, value) in entries {
            if last == Some((row, col)) {
                *values.last_mut().expect("previous entry") += value;
                continue;
            }
            col_idx.push(col);
            values.push(value);
            row_ptr[row + 1] += 1;
            last = Some((row, col));
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Matrix with `diagonals[k] = (offset, value)` repeated along each offset.
    pub fn banded_toeplitz(n: usize, diagonals: &[(isize, f64)]) -> Self {
        let mut triplets = Vec::with_capacity(n * diagonals.len());
        for i in 0..n {
            for &(offset, value) in diagonals {
                let j = i as isize + offset;
                if j >= 0 && (j as usize) < n {
                    triplets.push((i, j as usize, value));
                }
            }
        }
        Self::from_triplets(n, n, triplets).expect("indices are in bounds by construction")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    /// Lower and upper bandwidth.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut lower = 0;
        let mut upper = 0;
        for (i, j, _) in self.triplets() {
            if j < i {
                lower = lower.max(i - j);
            } else {
                upper = upper.max(j - i);
            }
        }
        (lower, upper)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    /// `y = A x`, overwriting `y`.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.check_len(x.len(), self.n_cols, "matvec input")?;
        self.check_len(y.len(), self.n_rows, "matvec output")?;
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
        Ok(())
    }

    /// `y += alpha * A x`.
    pub fn matvec_acc(&self, alpha: f64, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.check_len(x.len(), self.n_cols, "matvec input")?;
        self.check_len(y.len(), self.n_rows, "matvec output")?;
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let s: f64 = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
            *yi += alpha * s;
        }
        Ok(())
    }

    /// `y += alpha * A^T x`.
    pub fn matvec_transpose_acc(&self, alpha: f64, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.check_len(x.len(), self.n_rows, "transpose matvec input")?;
        self.check_len(y.len(), self.n_cols, "transpose matvec output")?;
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += alpha * v * xi;
            }
        }
        Ok(())
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n_cols];
        self.matvec_transpose_acc(1.0, x, &mut y)?;
        Ok(y)
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.n_cols, self.n_rows, self.triplets().map(|(i, j, v)| (j, i, v)))
            .expect("transposed indices are in bounds")
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `sum_k weights[k] * mats[k]`; all matrices must share a shape.
    pub fn linear_combination(mats: &[&SparseMatrix], weights: &[f64]) -> Result<Self> {
        let first = mats
            .first()
            .ok_or_else(|| Error::InvalidInput("empty linear combination".into()))?;
        if mats.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: mats.len(),
                actual: weights.len(),
                context: "linear combination weights",
            });
        }
        let (n_rows, n_cols) = (first.n_rows, first.n_cols);
        for m in mats {
            if m.n_rows != n_rows || m.n_cols != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_rows,
                    actual: m.n_rows,
                    context: "linear combination shapes",
                });
            }
        }
        let triplets = mats
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w != 0.0)
            .flat_map(|(m, &w)| m.triplets().map(move |(i, j, v)| (i, j, w * v)));
        Self::from_triplets(n_rows, n_cols, triplets)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, j, v) in self.triplets() {
            dense[i][j] = v;
        }
        dense
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && self
                .triplets()
                .all(|(i, j, v)| (v - self.get(j, i)).abs() <= tol * v.abs().max(1.0))
    }

    fn check_len(&self, actual: usize, expected: usize, context: &'static str) -> Result<()> {
        if actual == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected,
                actual,
                context,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let a = SparseMatrix::from_triplets(2, 2, [(0, 0, 1.0), (1, 1, 2.0), (0, 0, 3.0)]).unwrap();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 0), 4.0);
    }

    #[test]
    fn out_of_bounds_rejected() {
        let err = SparseMatrix::from_triplets(2, 2, [(2, 0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfBounds { row: 2, .. }));
    }

    #[test]
    fn products_match_dense() {
        let a = SparseMatrix::from_triplets(
            3,
            4,
            [(0, 0, 1.0), (0, 3, -2.0), (1, 1, 0.5), (2, 2, 3.0), (2, 0, 4.0)],
        )
        .unwrap();
        let dense = a.to_dense();
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = a.matvec(&x).unwrap();
        for i in 0..3 {
            let expect: f64 = (0..4).map(|j| dense[i][j] * x[j]).sum();
            assert_eq!(y[i], expect);
        }
        let z = [1.0, -1.0, 2.0];
        let yt = a.matvec_transpose(&z).unwrap();
        for j in 0..4 {
            let expect: f64 = (0..3).map(|i| dense[i][j] * z[i]).sum();
            assert_eq!(yt[j], expect);
        }
        assert_eq!(a.transpose().to_dense()[3][0], -2.0);
    }

    #[test]
    fn bandwidth_of_tridiagonal() {
        let t = SparseMatrix::banded_toeplitz(5, &[(-1, 1.0), (0, -2.0), (1, 1.0)]);
        assert_eq!(t.bandwidth(), (1, 1));
        assert!(t.is_symmetric(0.0));
    }

    #[test]
    fn matvec_dimension_checked() {
        let a = SparseMatrix::identity(3);
        assert!(matches!(
            a.matvec(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
