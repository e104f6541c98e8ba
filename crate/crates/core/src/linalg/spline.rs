//! One-dimensional interpolating splines.
//!
//! Four or more knots give a natural cubic spline (zero second derivative
//! at both ends). With fewer knots the interpolating polynomial of matching
//! degree is used instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplineKind {
    NaturalCubic,
    /// Interpolating polynomial of degree `knots - 1` (used for < 4 knots).
    Polynomial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives at the knots (natural cubic only).
    second: Vec<f64>,
    kind: SplineKind,
}

/// Relative slack on the range check that absorbs rounding of grid endpoints.
const RANGE_SLACK: f64 = 1e-12;

impl CubicSpline {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> SplineKind {
        self.kind
    }

    pub fn second_derivatives(&self) -> &[f64] {
        &self.second
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        spline_eval(self, x)
    }
}

pub fn spline_fit(xs: &[f64], ys: &[f64]) -> Result<CubicSpline> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
            context: "spline values",
        });
    }
    if xs.is_empty() {
        return Err(Error::InvalidInput("spline needs at least one knot".into()));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) || xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "spline knots must be finite and strictly increasing".into(),
        ));
    }
    let n = xs.len();
    if n < 4 {
        return Ok(CubicSpline {
            knots: xs.to_vec(),
            values: ys.to_vec(),
            second: Vec::new(),
            kind: SplineKind::Polynomial,
        });
    }

    // Tridiagonal system for interior second derivatives (SPD, no pivoting).
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let m = n - 2;
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        diag[i] = 2.0 * (h[i] + h[i + 1]);
        off[i] = h[i + 1];
        rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
    }
    for i in 1..m {
        let w = off[i - 1] / diag[i - 1];
        diag[i] -= w * off[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    let mut second = vec![0.0; n];
    second[m] = rhs[m - 1] / diag[m - 1];
    for i in (0..m - 1).rev() {
        second[i + 1] = (rhs[i] - off[i] * second[i + 2]) / diag[i];
    }

    Ok(CubicSpline {
        knots: xs.to_vec(),
        values: ys.to_vec(),
        second,
        kind: SplineKind::NaturalCubic,
    })
}

pub fn spline_eval(s: &CubicSpline, x: f64) -> Result<f64> {
    let (lo, hi) = (s.knots[0], s.knots[s.knots.len() - 1]);
    let slack = RANGE_SLACK * (hi - lo).abs().max(x.abs()).max(1.0);
    if !(x >= lo - slack && x <= hi + slack) {
        return Err(Error::OutOfRange {
            what: "spline argument",
            value: x,
            lo,
            hi,
        });
    }
    // Exact reproduction at knots.
    if let Ok(i) = s.knots.binary_search_by(|k| k.total_cmp(&x)) {
        return Ok(s.values[i]);
    }
    match s.kind {
        SplineKind::Polynomial => Ok(lagrange(&s.knots, &s.values, x)),
        SplineKind::NaturalCubic => {
            let n = s.knots.len();
            let i = s.knots.partition_point(|&k| k <= x).clamp(1, n - 1) - 1;
            let h = s.knots[i + 1] - s.knots[i];
            let t = x - s.knots[i];
            let (m0, m1) = (s.second[i], s.second[i + 1]);
            let slope = (s.values[i + 1] - s.values[i]) / h - h * (2.0 * m0 + m1) / 6.0;
            Ok(s.values[i] + t * (slope + t * (0.5 * m0 + t * (m1 - m0) / (6.0 * h))))
        }
    }
}

fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut total = 0.0;
    for (i, (&xi, &yi)) in xs.iter().zip(ys).enumerate() {
        let mut basis = 1.0;
        for (j, &xj) in xs.iter().enumerate() {
            if i != j {
                basis *= (x - xj) / (xi - xj);
            }
        }
        total += yi * basis;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn constant_data() {
        let xs = linspace(0.0, 2.0, 6);
        let s = spline_fit(&xs, &[3.5; 6]).unwrap();
        for x in linspace(0.0, 2.0, 101) {
            assert!((s.eval(x).unwrap() - 3.5).abs() < 1e-14);
        }
    }

    #[test]
    fn reproduces_linear_data() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let s = spline_fit(&xs, &xs).unwrap();
        assert_eq!(s.kind(), SplineKind::NaturalCubic);
        for x in linspace(0.0, 3.0, 97) {
            assert!((s.eval(x).unwrap() - x).abs() < 1e-14);
        }
    }

    /// Natural spline of sin on 7 equidistant knots in [0,1], checked on a
    /// 1000-point dense sample. The frozen bound comes from an independent
    /// natural-spline computation (max error 1.1515e-3, dominated by the
    /// end condition at x = 1 where sin'' != 0).
    #[test]
    fn sin_dense_sampling() {
        let xs = linspace(0.0, 1.0, 7);
        let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let s = spline_fit(&xs, &ys).unwrap();
        let max_err = linspace(0.0, 1.0, 1000)
            .into_iter()
            .map(|x| (s.eval(x).unwrap() - x.sin()).abs())
            .fold(0.0, f64::max);
        assert!((max_err - 1.1515309443e-3).abs() < 1e-8, "max err {max_err}");
        // Away from the ends the boundary mismatch is much weaker.
        let interior = linspace(1.0 / 6.0, 5.0 / 6.0, 500)
            .into_iter()
            .map(|x| (s.eval(x).unwrap() - x.sin()).abs())
            .fold(0.0, f64::max);
        assert!(interior < 3.1e-4, "interior err {interior}");
    }

    #[test]
    fn natural_end_conditions_and_continuity() {
        let xs = [0.0, 0.3, 1.1, 1.5, 2.6];
        let ys = [1.0, -0.5, 2.0, 0.25, 0.0];
        let s = spline_fit(&xs, &ys).unwrap();
        let m = s.second_derivatives();
        assert_eq!(m[0], 0.0);
        assert_eq!(m[4], 0.0);
        // First derivative continuity across interior knots by one-sided differences.
        for &k in &xs[1..4] {
            let e = 1e-6;
            let left = (s.eval(k).unwrap() - s.eval(k - e).unwrap()) / e;
            let right = (s.eval(k + e).unwrap() - s.eval(k).unwrap()) / e;
            assert!((left - right).abs() < 1e-4);
        }
    }

    #[test]
    fn few_knots_fall_back_to_polynomials() {
        let lin = spline_fit(&[1.0, 3.0], &[2.0, 6.0]).unwrap();
        assert_eq!(lin.kind(), SplineKind::Polynomial);
        assert!((lin.eval(2.0).unwrap() - 4.0).abs() < 1e-15);
        let quad = spline_fit(&[0.0, 1.0, 2.0], &[0.0, 1.0, 4.0]).unwrap();
        assert!((quad.eval(1.5).unwrap() - 2.25).abs() < 1e-14);
        let single = spline_fit(&[0.5], &[7.0]).unwrap();
        assert_eq!(single.eval(0.5).unwrap(), 7.0);
    }

    #[test]
    fn out_of_range_rejected() {
        let s = spline_fit(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(s.eval(-0.1), Err(Error::OutOfRange { .. })));
        assert!(matches!(s.eval(3.0001), Err(Error::OutOfRange { .. })));
        assert!(s.eval(3.0 + 1e-15).is_ok());
    }

    #[test]
    fn invalid_knots_rejected() {
        assert!(spline_fit(&[0.0, 0.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(spline_fit(&[0.0, 1.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn knots_reproduced_exactly(ys in prop::collection::vec(-100.0..100.0f64, 2..12)) {
            let xs = linspace(-1.0, 2.0, ys.len());
            let s = spline_fit(&xs, &ys).unwrap();
            for (x, y) in xs.iter().zip(&ys) {
                let v = s.eval(*x).unwrap();
                let ulps = (v.to_bits() as i64 - y.to_bits() as i64).unsigned_abs();
                prop_assert!(ulps <= 4);
            }
        }
    }
}
