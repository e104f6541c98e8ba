use crate::error::{Error, Result};

/// A (generally nonsymmetric) tridiagonal matrix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tridiagonal {
    /// Subdiagonal, `T[i+1][i]`.
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    /// Superdiagonal, `T[i][i+1]`.
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let k = self.dim();
        let mut y = vec![0.0; k];
        for i in 0..k {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < k {
                s += self.upper[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let k = self.dim();
        let mut dense = vec![vec![0.0; k]; k];
        for i in 0..k {
            dense[i][i] = self.diag[i];
            if i + 1 < k {
                dense[i + 1][i] = self.lower[i];
                dense[i][i + 1] = self.upper[i];
            }
        }
        dense
    }
}

/// Solve `(I + gamma T) y = rhs` by Gaussian elimination with partial
/// pivoting specialised to tridiagonal structure (O(k) work).
///
/// A vanishing pivot means the shift hit a Ritz value; the caller should
/// perturb the parameter or grow the Krylov space.
pub fn solve_shifted_tridiagonal(t: &Tridiagonal, gamma: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let k = t.dim();
    if rhs.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: rhs.len(),
            context: "tridiagonal right-hand side",
        });
    }
    if t.lower.len() + 1 != k.max(1) || t.upper.len() + 1 != k.max(1) {
        return Err(Error::InvalidInput("tridiagonal band lengths inconsistent".into()));
    }
    if k == 0 {
        return Ok(Vec::new());
    }

    let mut d: Vec<f64> = t.diag.iter().map(|v| 1.0 + gamma * v).collect();
    let mut dl: Vec<f64> = t.lower.iter().map(|v| gamma * v).collect();
    let mut du: Vec<f64> = t.upper.iter().map(|v| gamma * v).collect();
    let mut b = rhs.to_vec();
    let scale = d
        .iter()
        .chain(&dl)
        .chain(&du)
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tiny = f64::EPSILON * scale;
    let singular = |row: usize| Error::SingularShift { row, gamma };

    // dl[i] is reused to hold the second superdiagonal created by interchanges.
    for i in 0..k - 1 {
        if d[i].abs() >= dl[i].abs() {
            if d[i].abs() <= tiny {
                return Err(singular(i));
            }
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            b[i + 1] -= fact * b[i];
            dl[i] = 0.0;
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i + 2 < k {
                dl[i] = du[i + 1];
                du[i + 1] = -fact * dl[i];
            } else {
                dl[i] = 0.0;
            }
            du[i] = temp;
            let bi = b[i];
            b[i] = b[i + 1];
            b[i + 1] = bi - fact * b[i + 1];
        }
    }
    if d[k - 1].abs() <= tiny {
        return Err(singular(k - 1));
    }

    b[k - 1] /= d[k - 1];
    if k > 1 {
        b[k - 2] = (b[k - 2] - du[k - 2] * b[k - 1]) / d[k - 2];
    }
    for i in (0..k.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - dl[i] * b[i + 2]) / d[i];
    }
    Ok(b)
}
