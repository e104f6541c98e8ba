//! Online model: spline-interpolated mode functions, evaluation anywhere in
//! the box, and error maps against direct solves.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hopgd::SeparatedModel;
use crate::linalg::{axpy, norm2, spline_fit, CubicSpline};
use crate::params::{Interval, ParamBox};
use crate::problems::SplitProblem;

pub const ACCURATE_BELOW: f64 = 0.015;
pub const RELIABLE_BELOW: f64 = 0.06;

#[derive(Debug, Clone)]
pub struct InterpolatedModel {
    pub phi: Vec<Vec<f64>>,
    pub f1: Vec<CubicSpline>,
    pub f2: Vec<CubicSpline>,
    pub param_box: ParamBox,
    pub n: usize,
}

impl InterpolatedModel {
    pub fn rank(&self) -> usize {
        self.phi.len()
    }

    pub fn eval(&self, mu1: f64, mu2: f64) -> Result<Vec<f64>> {
        rom_eval(self, mu1, mu2)
    }
}

/// One spline per mode and axis, with knots at the sampled values.
pub fn interpolate_model(model: &SeparatedModel) -> Result<InterpolatedModel> {
    if model.rank() == 0 {
        return Err(Error::InvalidInput("model has no modes".into()));
    }
    let nodes = &model.nodes;
    let interval = |v: &[f64]| Interval::new(v[0], v[v.len() - 1]);
    let param_box = ParamBox { mu1: interval(&nodes.mu1)?, mu2: interval(&nodes.mu2)? };
    let f1 = model.f1.iter().map(|f| spline_fit(&nodes.mu1, f)).collect::<Result<_>>()?;
    let f2 = model.f2.iter().map(|f| spline_fit(&nodes.mu2, f)).collect::<Result<_>>()?;
    Ok(InterpolatedModel { phi: model.phi.clone(), f1, f2, param_box, n: model.n })
}

/// `sum_k Phi^k F_1^k(mu1) F_2^k(mu2)`. No solves.
pub fn rom_eval(im: &InterpolatedModel, mu1: f64, mu2: f64) -> Result<Vec<f64>> {
    for (what, v, iv) in [("mu1", mu1, &im.param_box.mu1), ("mu2", mu2, &im.param_box.mu2)] {
        if !iv.contains(v) {
            return Err(Error::OutOfRange { what, value: v, lo: iv.lo, hi: iv.hi });
        }
    }
    let mut x = vec![0.0; im.n];
    for k in 0..im.rank() {
        let s = im.f1[k].eval(mu1)? * im.f2[k].eval(mu2)?;
        axpy(s, &im.phi[k], &mut x);
    }
    Ok(x)
}

pub fn relative_error(x_approx: &[f64], x_ref: &[f64]) -> Result<f64> {
    if x_approx.len() != x_ref.len() {
        return Err(Error::DimensionMismatch {
            expected: x_ref.len(),
            actual: x_approx.len(),
            context: "relative error",
        });
    }
    let den = norm2(x_ref);
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    let diff: Vec<f64> = x_approx.iter().zip(x_ref).map(|(a, b)| a - b).collect();
    Ok(norm2(&diff) / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorClass {
    Accurate,
    Reliable,
    Poor,
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorClass::Accurate => "accurate",
            ErrorClass::Reliable => "reliable",
            ErrorClass::Poor => "poor",
        })
    }
}

pub fn classify(err: f64) -> ErrorClass {
    if err < ACCURATE_BELOW {
        ErrorClass::Accurate
    } else if err < RELIABLE_BELOW {
        ErrorClass::Reliable
    } else {
        ErrorClass::Poor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCell {
    pub mu1: f64,
    pub mu2: f64,
    /// `None` when the direct solve or the model evaluation failed.
    pub rel_err: Option<f64>,
    pub failure: Option<String>,
}

impl ErrorCell {
    pub fn class(&self) -> Option<ErrorClass> {
        self.rel_err.map(classify)
    }
}

/// Relative error of the model against `direct_reference_solve` on a
/// `g1 x g2` equidistant grid of the model box, `mu1` fastest.
pub fn error_grid(im: &InterpolatedModel, p: &SplitProblem, g1: usize, g2: usize) -> Vec<ErrorCell> {
    let mu1 = im.param_box.mu1.linspace(g1);
    let mu2 = im.param_box.mu2.linspace(g2);
    let mut cells = Vec::with_capacity(g1 * g2);
    for &b in &mu2 {
        for &a in &mu1 {
            let result = p
                .direct_reference_solve(a, b)
                .and_then(|x| relative_error(&rom_eval(im, a, b)?, &x));
            cells.push(match result {
                Ok(e) => ErrorCell { mu1: a, mu2: b, rel_err: Some(e), failure: None },
                Err(e) => {
                    log::warn!("error grid cell ({a}, {b}): {e}");
                    ErrorCell { mu1: a, mu2: b, rel_err: None, failure: Some(e.to_string()) }
                }
            });
        }
    }
    cells
}

/// CSV with header `mu1,mu2,rel_err_percent,class`; failed cells get an
/// empty error and class `failed`.
pub fn write_error_csv(cells: &[ErrorCell], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "mu1,mu2,rel_err_percent,class")?;
    for c in cells {
        match c.rel_err {
            Some(e) => writeln!(out, "{},{},{},{}", c.mu1, c.mu2, 100.0 * e, classify(e))?,
            None => writeln!(out, "{},{},,failed", c.mu1, c.mu2)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hopgd::{build_sparse_cross, hopgd_decompose, HopgdSettings, SnapshotTensor};

    fn cross_model(f: impl Fn(f64, f64) -> Vec<f64>) -> (SnapshotTensor, SeparatedModel) {
        let pb = ParamBox::new(1.0, 2.0, 1.0, 2.0).unwrap();
        let nodes = build_sparse_cross(&pb, 7, 7, None).unwrap();
        let t = SnapshotTensor::from_fn(nodes, f).unwrap();
        let m = hopgd_decompose(&t, &HopgdSettings { eps2: 1e-8, ..Default::default() }).unwrap();
        (t, m)
    }

    #[test]
    fn reproduces_nodes() {
        let (t, m) = cross_model(|a, b| vec![a * b, a + b, (a - b).sin(), 1.0]);
        let im = interpolate_model(&m).unwrap();
        for &node in &t.nodes.members {
            let (a, b) = t.nodes.values(node);
            let x = rom_eval(&im, a, b).unwrap();
            let y = m.eval_at_node(node).unwrap();
            assert!(relative_error(&x, &y).unwrap() < 1e-12);
        }
    }

    #[test]
    fn constant_factors_give_constant_model() {
        let (_, m) = cross_model(|_, _| vec![2.0, -1.0]);
        assert_eq!(m.rank(), 1);
        let im = interpolate_model(&m).unwrap();
        for (a, b) in [(1.0, 1.0), (1.3, 1.9), (2.0, 1.21)] {
            let x = rom_eval(&im, a, b).unwrap();
            assert!(relative_error(&x, &[2.0, -1.0]).unwrap() < 1e-12);
        }
    }

    #[test]
    fn outside_box_is_rejected() {
        let (_, m) = cross_model(|a, b| vec![a, b]);
        let im = interpolate_model(&m).unwrap();
        assert!(matches!(rom_eval(&im, 2.5, 1.5), Err(Error::OutOfRange { what: "mu1", .. })));
        assert!(matches!(rom_eval(&im, 1.5, 0.5), Err(Error::OutOfRange { what: "mu2", .. })));
    }

    #[test]
    fn doubling_mode_functions_doubles_result() {
        let (_, mut m) = cross_model(|a, b| vec![a * b, a.exp() + b]);
        let x = rom_eval(&interpolate_model(&m).unwrap(), 1.37, 1.81).unwrap();
        for f in &mut m.f1 {
            f.iter_mut().for_each(|v| *v *= 2.0);
        }
        let y = rom_eval(&interpolate_model(&m).unwrap(), 1.37, 1.81).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((2.0 * a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }
    }

    #[test]
    fn spline_deviation_bounded_by_curvature() {
        // Separable data with smooth factors; between knots the interpolant
        // stays within the second-difference size of the exact factor.
        let (_, m) = cross_model(|a, b| vec![a.sin() * b.cos()]);
        let im = interpolate_model(&m).unwrap();
        let h = 1.0 / 6.0;
        let bound = h * h * 1.0; // |d^2/da^2 sin(a) cos(b)| <= 1
        for i in 0..=60 {
            let a = 1.0 + i as f64 / 60.0;
            let x = rom_eval(&im, a, 1.5).unwrap()[0];
            assert!((x - a.sin() * 1.5f64.cos()).abs() <= bound, "a = {a}");
        }
    }

    #[test]
    fn relative_errors_and_classes() {
        let x = vec![3.0, -4.0];
        assert_eq!(relative_error(&x, &x).unwrap(), 0.0);
        assert_eq!(classify(0.0), ErrorClass::Accurate);
        let e = relative_error(&[3.03, -4.04], &x).unwrap();
        assert!((e - 0.01).abs() < 1e-14);
        assert_eq!(classify(e), ErrorClass::Accurate);
        let e = relative_error(&[3.15, -4.2], &x).unwrap();
        assert!((e - 0.05).abs() < 1e-14);
        assert_eq!(classify(e), ErrorClass::Reliable);
        assert_eq!(classify(0.2), ErrorClass::Poor);
        assert!(matches!(relative_error(&x, &[0.0, 0.0]), Err(Error::ZeroReference)));
    }

    #[test]
    fn csv_layout() {
        let cells = vec![
            ErrorCell { mu1: 0.0, mu2: 0.5, rel_err: Some(0.02), failure: None },
            ErrorCell { mu1: 0.1, mu2: 0.5, rel_err: None, failure: Some("x".into()) },
        ];
        let mut buf = Vec::new();
        write_error_csv(&cells, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "mu1,mu2,rel_err_percent,class");
        assert_eq!(lines[1], "0,0.5,2,reliable");
        assert_eq!(lines[2], "0.1,0.5,,failed");
    }
}
