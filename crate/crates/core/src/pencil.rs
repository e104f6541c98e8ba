//! Chebyshev approximation `P(mu) = sum_l P_l T_l(mu / c)` of `A` along one
//! parameter line and its companion pencil `(K - mu M) u = (0, ..., 0, b)`.
//!
//! With `s = mu / c` and blocks `u_i = T_{i-1}(s) x`, the pencil rows are
//!
//! ```text
//! row 1:        -s u_1 + u_2
//! row i < d:    u_{i-1} - 2 s u_i + u_{i+1}
//! row d:        sum_{l<d-2} P_l u_{l+1} + (P_{d-2} - P_d) u_{d-1} + P_{d-1} u_d + 2 s P_d u_d
//! ```
//!
//! so the last row reads `P(mu) x = b`. For `d = 1` the pencil is
//! `P_0 + s P_1` itself.

use serde::{Deserialize, Serialize};

use crate::cheb::{cheb_fit_scalar, chebyshev_values, ChebScalar};
use crate::error::{Error, Result};
use crate::linalg::{axpy, lu_factor, LuFactorization, SparseMatrix};
use crate::params::{Axis, Interval};
use crate::problems::SplitProblem;

#[derive(Debug, Clone, PartialEq)]
pub struct ChebOperator {
    /// `P_0..P_d`, `d >= 1`.
    pub coeff_mats: Vec<SparseMatrix>,
    pub half_width: f64,
    pub fixed_axis: Axis,
    pub fixed_value: f64,
    /// Interval of the free parameter.
    pub free_interval: Interval,
    /// Per-term scalar fits, zero-padded to the shared degree.
    pub scalars: Vec<ChebScalar>,
    pub problem_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PencilPart {
    K,
    M,
    KMinusMuM,
}

impl ChebOperator {
    pub fn degree(&self) -> usize {
        self.coeff_mats.len() - 1
    }

    pub fn n(&self) -> usize {
        self.coeff_mats[0].n_rows()
    }

    pub fn free_axis(&self) -> Axis {
        self.fixed_axis.other()
    }

    /// `P(mu)` as an explicit sparse matrix.
    pub fn matrix_at(&self, mu: f64) -> Result<SparseMatrix> {
        let t = chebyshev_values(mu / self.half_width, self.coeff_mats.len());
        let mats: Vec<&SparseMatrix> = self.coeff_mats.iter().collect();
        SparseMatrix::linear_combination(&mats, &t)
    }

    /// `P(mu) x` without forming `P(mu)`.
    pub fn apply_at(&self, mu: f64, x: &[f64]) -> Result<Vec<f64>> {
        let t = chebyshev_values(mu / self.half_width, self.coeff_mats.len());
        let mut y = vec![0.0; self.n()];
        for (p, tl) in self.coeff_mats.iter().zip(t) {
            p.matvec_acc(tl, x, &mut y)?;
        }
        Ok(y)
    }

    /// Scalar coefficients multiplying the pencil blocks: entries of
    /// `alpha K + beta M` in rows `1..d-1` are multiples of the identity.
    fn scalar_block(&self, alpha: f64, beta: f64, i: usize, j: usize) -> f64 {
        let c = self.half_width;
        if i == 0 {
            match j {
                0 => beta / c,
                1 => alpha,
                _ => 0.0,
            }
        } else if j + 1 == i || j == i + 1 {
            alpha
        } else if j == i {
            2.0 * beta / c
        } else {
            0.0
        }
    }

    /// Matrix terms of block `(d, j)` of `alpha K + beta M` (0-based `j`).
    fn last_row_terms(&self, alpha: f64, beta: f64, j: usize) -> Vec<(&SparseMatrix, f64)> {
        let d = self.degree();
        let p = &self.coeff_mats;
        let c = self.half_width;
        if d == 1 {
            return vec![(&p[0], alpha), (&p[1], -beta / c)];
        }
        if j + 2 < d {
            vec![(&p[j], alpha)]
        } else if j + 2 == d {
            vec![(&p[d - 2], alpha), (&p[d], -alpha)]
        } else {
            vec![(&p[d - 1], alpha), (&p[d], -2.0 * beta / c)]
        }
    }

    fn check_block_len(&self, u: &[f64]) -> Result<()> {
        let len = self.degree() * self.n();
        if u.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                actual: u.len(),
                context: "pencil block vector",
            });
        }
        Ok(())
    }

    /// `(alpha K + beta M) u`, or its transpose.
    pub fn apply_combination(
        &self,
        alpha: f64,
        beta: f64,
        u: &[f64],
        transpose: bool,
    ) -> Result<Vec<f64>> {
        self.check_block_len(u)?;
        let (d, n) = (self.degree(), self.n());
        let block = |i: usize| i * n..(i + 1) * n;
        let mut out = vec![0.0; d * n];
        // Identity-multiple blocks in rows 0..d-1.
        for i in 0..d - 1 {
            for j in i.saturating_sub(1)..=(i + 1).min(d - 1) {
                let s = self.scalar_block(alpha, beta, i, j);
                if s == 0.0 {
                    continue;
                }
                let (src, dst) = if transpose { (i, j) } else { (j, i) };
                axpy(s, &u[block(src)], &mut out[block(dst)]);
            }
        }
        // Matrix blocks in row d-1.
        let last = d - 1;
        for j in 0..d {
            for (p, coef) in self.last_row_terms(alpha, beta, j) {
                if coef == 0.0 {
                    continue;
                }
                if transpose {
                    p.matvec_transpose_acc(coef, &u[block(last)], &mut out[block(j)])?;
                } else {
                    p.matvec_acc(coef, &u[block(j)], &mut out[block(last)])?;
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, which: PencilPart, mu: f64, u: &[f64]) -> Result<Vec<f64>> {
        let (alpha, beta) = match which {
            PencilPart::K => (1.0, 0.0),
            PencilPart::M => (0.0, 1.0),
            PencilPart::KMinusMuM => (1.0, -mu),
        };
        self.apply_combination(alpha, beta, u, false)
    }

    /// Stacked right-hand side `c = (0, ..., 0, b)`.
    pub fn stacked_rhs(&self, b: &[f64]) -> Vec<f64> {
        let (d, n) = (self.degree(), self.n());
        let mut c = vec![0.0; d * n];
        c[(d - 1) * n..].copy_from_slice(b);
        c
    }

    /// Dense `K - mu M` for small verification problems.
    pub fn dense_pencil(&self, mu: f64) -> Result<Vec<Vec<f64>>> {
        let dn = self.degree() * self.n();
        let mut cols = Vec::with_capacity(dn);
        let mut e = vec![0.0; dn];
        for j in 0..dn {
            e[j] = 1.0;
            cols.push(self.apply(PencilPart::KMinusMuM, mu, &e)?);
            e[j] = 0.0;
        }
        Ok((0..dn).map(|i| cols.iter().map(|c| c[i]).collect()).collect())
    }
}

/// Fit every coefficient function along the free parameter and combine
/// `P_l = sum_i a_{i,l} A_i`.
pub fn build_cheb_operator(
    p: &SplitProblem,
    fixed_axis: Axis,
    fixed_value: f64,
    tol: f64,
    d_max: usize,
) -> Result<ChebOperator> {
    let fixed_interval = p.param_box.axis(fixed_axis);
    if !fixed_interval.contains(fixed_value) {
        return Err(Error::OutOfRange {
            what: "fixed parameter value",
            value: fixed_value,
            lo: fixed_interval.lo,
            hi: fixed_interval.hi,
        });
    }
    let free_axis = fixed_axis.other();
    let free_interval = p.param_box.axis(free_axis);
    let c = free_interval.symmetric_half_width();
    let c = if c > 0.0 { c } else { 1.0 };
    let mut scalars = Vec::with_capacity(p.terms.len());
    for i in 0..p.terms.len() {
        let f = p.restricted_coefficient(i, free_axis, fixed_value);
        scalars.push(cheb_fit_scalar(f, c, tol, d_max)?);
    }
    let d = scalars.iter().map(ChebScalar::degree).max().unwrap_or(0).max(1);
    for s in &mut scalars {
        s.coeffs.resize(d + 1, 0.0);
    }
    let mats: Vec<&SparseMatrix> = p.terms.iter().map(|t| &t.matrix).collect();
    let coeff_mats = (0..=d)
        .map(|l| {
            let weights: Vec<f64> = scalars.iter().map(|s| s.coeffs[l]).collect();
            SparseMatrix::linear_combination(&mats, &weights)
        })
        .collect::<Result<Vec<_>>>()?;
    log::debug!(
        "{}: Chebyshev operator with {:?} fixed at {fixed_value}, degree {d}, c = {c}",
        p.name,
        fixed_axis
    );
    Ok(ChebOperator {
        coeff_mats,
        half_width: c,
        fixed_axis,
        fixed_value,
        free_interval,
        scalars,
        problem_name: p.name.clone(),
    })
}

/// `(K - sigma M)^{-1}` through one factorization of `P(sigma)`.
#[derive(Debug, Clone)]
pub struct PencilSolver {
    pub op: ChebOperator,
    pub sigma: f64,
    lu: LuFactorization,
    /// `alpha_i = T_{i-1}(sigma / c)`, `i = 1..d`.
    alpha: Vec<f64>,
}

impl PencilSolver {
    pub fn new(op: ChebOperator, sigma: f64) -> Result<Self> {
        let lu = lu_factor(&op.matrix_at(sigma)?)?;
        let alpha = chebyshev_values(sigma / op.half_width, op.degree());
        Ok(Self { op, sigma, lu, alpha })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn n(&self) -> usize {
        self.op.n()
    }

    pub fn degree(&self) -> usize {
        self.op.degree()
    }

    pub fn block_len(&self) -> usize {
        self.op.degree() * self.op.n()
    }

    pub fn apply(&self, which: PencilPart, mu: f64, u: &[f64]) -> Result<Vec<f64>> {
        self.op.apply(which, mu, u)
    }

    /// `M u` or `M^T u`.
    pub fn apply_m(&self, u: &[f64], transpose: bool) -> Result<Vec<f64>> {
        self.op.apply_combination(0.0, 1.0, u, transpose)
    }

    /// Solve `(K - sigma M) u = r` (or the transposed system) with a single
    /// solve against the factors of `P(sigma)`.
    pub fn shift_solve(&self, r: &[f64], transpose: bool) -> Result<Vec<f64>> {
        self.op.check_block_len(r)?;
        let (d, n) = (self.degree(), self.n());
        if d == 1 {
            return self.lu.solve(r, transpose);
        }
        let s = self.sigma / self.op.half_width;
        let p = &self.op.coeff_mats;
        let blk = |i: usize| i * n..(i + 1) * n;
        if !transpose {
            // g_0 = 0, g_1 = r_0, g_{i+1} = r_i + 2 s g_i - g_{i-1} (0-based blocks).
            let mut g = vec![0.0; d * n];
            if d >= 2 {
                g[blk(1)].copy_from_slice(&r[blk(0)]);
            }
            for i in 1..d - 1 {
                for k in 0..n {
                    g[(i + 1) * n + k] = r[i * n + k] + 2.0 * s * g[i * n + k] - g[(i - 1) * n + k];
                }
            }
            let mut rhs = r[blk(d - 1)].to_vec();
            for (l, pl) in p.iter().enumerate().take(d) {
                pl.matvec_acc(-1.0, &g[blk(l)], &mut rhs)?;
            }
            let mut tail = vec![0.0; n];
            for k in 0..n {
                tail[k] = 2.0 * s * g[(d - 1) * n + k] - g[(d - 2) * n + k];
            }
            p[d].matvec_acc(-1.0, &tail, &mut rhs)?;
            let u1 = self.lu.solve(&rhs, false)?;
            let mut u = g;
            for i in 0..d {
                axpy(self.alpha[i], &u1, &mut u[blk(i)]);
            }
            Ok(u)
        } else {
            // z = sum_i alpha_i r_i, v = P(sigma)^{-T} z.
            let mut z = vec![0.0; n];
            for i in 0..d {
                axpy(self.alpha[i], &r[blk(i)], &mut z);
            }
            let v = self.lu.solve(&z, true)?;
            // y_j = r_j - L_{d,j}^T v.
            let mut y = r.to_vec();
            for j in 0..d {
                for (pm, coef) in self.op.last_row_terms(1.0, -self.sigma, j) {
                    pm.matvec_transpose_acc(-coef, &v, &mut y[blk(j)])?;
                }
            }
            // Backward recurrence e_j = y_{j+1} + 2 s e_{j+1} - e_{j+2}, e_{d-1} = e_d = 0.
            let mut w = vec![0.0; d * n];
            w[blk(d - 1)].copy_from_slice(&v);
            for j in (0..d - 1).rev() {
                for k in 0..n {
                    let e1 = if j + 1 < d - 1 { w[(j + 1) * n + k] } else { 0.0 };
                    let e2 = if j + 2 < d - 1 { w[(j + 2) * n + k] } else { 0.0 };
                    w[j * n + k] = y[(j + 1) * n + k] + 2.0 * s * e1 - e2;
                }
            }
            Ok(w)
        }
    }

    /// First block of `(K - sigma M)^{-1} z`.
    pub fn solve_first_block(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut u = self.shift_solve(z, false)?;
        u.truncate(self.n());
        Ok(u)
    }
}
