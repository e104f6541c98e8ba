//! Scalar Chebyshev interpolants `f(mu) ~ sum_l a_l T_l(mu / c)` on `[-c, c]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-13;
pub const DEFAULT_D_MAX: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebScalar {
    pub coeffs: Vec<f64>,
    /// Half-width `c` of the symmetric fitting interval.
    pub half_width: f64,
}

impl ChebScalar {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Clenshaw evaluation.
    pub fn eval(&self, mu: f64) -> f64 {
        clenshaw(&self.coeffs, mu / self.half_width)
    }

    /// Term-by-term summation with the three-term recurrence.
    pub fn eval_direct(&self, mu: f64) -> f64 {
        chebyshev_values(mu / self.half_width, self.coeffs.len())
            .iter()
            .zip(&self.coeffs)
            .map(|(t, a)| t * a)
            .sum()
    }
}

pub fn clenshaw(coeffs: &[f64], t: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &a in coeffs.iter().skip(1).rev() {
        let b0 = a + 2.0 * t * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    coeffs.first().copied().unwrap_or(0.0) + t * b1 - b2
}

/// `[T_0(t), ..., T_{count-1}(t)]`.
pub fn chebyshev_values(t: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    for l in 0..count {
        out.push(match l {
            0 => 1.0,
            1 => t,
            _ => 2.0 * t * out[l - 1] - out[l - 2],
        });
    }
    out
}

/// Interpolate at the `N + 1` Chebyshev points of the second kind,
/// `x_j = c cos(j pi / N)`, returning `a_0..a_N`.
fn interpolate(f: &impl Fn(f64) -> f64, c: f64, big_n: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = (0..=big_n)
        .map(|j| f(c * (j as f64 * PI / big_n as f64).cos()))
        .collect();
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "function value {bad} at a Chebyshev point"
        )));
    }
    let nf = big_n as f64;
    let mut coeffs = vec![0.0; big_n + 1];
    for (k, a) in coeffs.iter_mut().enumerate() {
        let mut s = 0.0;
        for (j, v) in values.iter().enumerate() {
            let w = if j == 0 || j == big_n { 0.5 } else { 1.0 };
            // cos(jk pi / N) with the product reduced mod 2N to keep the angle small.
            let m = (j * k) % (2 * big_n);
            s += w * v * (m as f64 * PI / nf).cos();
        }
        *a = 2.0 * s / nf;
    }
    coeffs[0] *= 0.5;
    coeffs[big_n] *= 0.5;
    Ok(coeffs)
}

/// Adaptive Chebyshev fit with degree doubling (8, 16, ... up to `d_max`).
///
/// A trial of degree `N` is accepted when every coefficient in the upper half
/// is below `tol * max |a_l|`. Trailing coefficients are then dropped while
/// their accumulated magnitude stays below `tol * max |a_l|`.
pub fn cheb_fit_scalar(
    f: impl Fn(f64) -> f64,
    half_width: f64,
    tol: f64,
    d_max: usize,
) -> Result<ChebScalar> {
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "half-width must be positive, got {half_width}"
        )));
    }
    if !(tol > 0.0) || d_max < 1 {
        return Err(Error::InvalidInput("tol must be > 0 and d_max >= 1".into()));
    }
    let mut big_n = 8.min(d_max);
    let mut tail;
    loop {
        let coeffs = interpolate(&f, half_width, big_n)?;
        let scale = coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if scale == 0.0 {
            return Ok(ChebScalar { coeffs: vec![0.0], half_width });
        }
        tail = coeffs[big_n / 2 + 1..]
            .iter()
            .fold(0.0f64, |m, a| m.max(a.abs()));
        if tail < tol * scale {
            return Ok(ChebScalar {
                coeffs: truncate(coeffs, tol * scale),
                half_width,
            });
        }
        if big_n >= d_max {
            break;
        }
        big_n = (2 * big_n).min(d_max);
    }
    Err(Error::ChebNoConvergence { d_max, tail })
}

fn truncate(mut coeffs: Vec<f64>, budget: f64) -> Vec<f64> {
    let mut dropped = 0.0;
    while coeffs.len() > 1 {
        let last = coeffs[coeffs.len() - 1].abs();
        if dropped + last > budget {
            break;
        }
        dropped += last;
        coeffs.pop();
    }
    coeffs
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fit(f: impl Fn(f64) -> f64, c: f64) -> ChebScalar {
        cheb_fit_scalar(f, c, DEFAULT_TOL, DEFAULT_D_MAX).unwrap()
    }

    #[test]
    fn constant() {
        let s = fit(|_| 1.0, 3.0);
        assert_eq!(s.coeffs.len(), 1);
        assert!((s.coeffs[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear() {
        let s = fit(|mu| mu, 2.0);
        assert_eq!(s.degree(), 1);
        assert!(s.coeffs[0].abs() < 1e-15);
        assert!((s.coeffs[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn quadratic() {
        let s = fit(|mu| mu * mu, 1.0);
        assert_eq!(s.degree(), 2);
        for (a, e) in s.coeffs.iter().zip([0.5, 0.0, 0.5]) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn entire_function_to_machine_precision() {
        let f = |mu: f64| 2.0 * PI * PI + mu.cos() + mu.powi(4) + 1.5f64.sin() + 1.5;
        let s = fit(f, 2.0);
        let max_err = (0..1000)
            .map(|i| -2.0 + 4.0 * i as f64 / 999.0)
            .map(|mu| (s.eval(mu) - f(mu)).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-12, "max err {max_err}, degree {}", s.degree());
        assert!(s.degree() < 32);
    }

    #[test]
    fn reports_no_convergence() {
        let r = cheb_fit_scalar(|mu: f64| mu.abs(), 1.0, 1e-13, 16);
        assert!(matches!(r, Err(Error::ChebNoConvergence { d_max: 16, .. })));
    }

    #[test]
    fn chebyshev_values_match_cosines() {
        let t: f64 = 0.37;
        let vals = chebyshev_values(t, 12);
        for (l, v) in vals.iter().enumerate() {
            assert!((v - (l as f64 * t.acos()).cos()).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn clenshaw_agrees_with_direct_sum(
            coeffs in prop::collection::vec(-10.0..10.0f64, 1..40),
            t in -1.0..1.0f64,
        ) {
            let s = ChebScalar { coeffs: coeffs.clone(), half_width: 1.0 };
            let scale: f64 = coeffs.iter().map(|a| a.abs()).sum();
            prop_assert!((s.eval(t) - s.eval_direct(t)).abs() <= 1e-13 * scale.max(1.0));
        }
    }
}
