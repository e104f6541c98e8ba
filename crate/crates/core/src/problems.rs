//! Parameterized discretized PDEs in split form
//! `A(mu1, mu2) = sum_i f_i(mu1, mu2) A_i` with a fixed right-hand side.
//!
//! Discretizations are finite differences on the unit square (five-point
//! Laplacian) or the unit interval, homogeneous Dirichlet boundary values
//! eliminated, so vectors hold interior unknowns only.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::io::{read_matrix_market, read_vector, write_matrix_market, write_vector};
use crate::linalg::{lu_factor, SparseMatrix};
use crate::params::{Axis, ParamBox};

/// Scalar coefficient functions built from a small closed vocabulary so
/// problems can be serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Coefficient {
    Const { value: f64 },
    Sin { axis: Axis },
    Cos { axis: Axis },
    SinSq { axis: Axis },
    CosSq { axis: Axis },
    Power { axis: Axis, exponent: i32 },
    Affine { offset: f64, terms: Vec<ScaledCoefficient> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledCoefficient {
    pub scale: f64,
    pub term: Coefficient,
}

impl Coefficient {
    pub fn one() -> Self {
        Coefficient::Const { value: 1.0 }
    }

    pub fn affine(offset: f64, terms: impl IntoIterator<Item = (f64, Coefficient)>) -> Self {
        Coefficient::Affine {
            offset,
            terms: terms
                .into_iter()
                .map(|(scale, term)| ScaledCoefficient { scale, term })
                .collect(),
        }
    }

    pub fn eval(&self, mu1: f64, mu2: f64) -> f64 {
        let arg = |axis: &Axis| match axis {
            Axis::Mu1 => mu1,
            Axis::Mu2 => mu2,
        };
        match self {
            Coefficient::Const { value } => *value,
            Coefficient::Sin { axis } => arg(axis).sin(),
            Coefficient::Cos { axis } => arg(axis).cos(),
            Coefficient::SinSq { axis } => arg(axis).sin().powi(2),
            Coefficient::CosSq { axis } => arg(axis).cos().powi(2),
            Coefficient::Power { axis, exponent } => arg(axis).powi(*exponent),
            Coefficient::Affine { offset, terms } => {
                offset + terms.iter().map(|t| t.scale * t.term.eval(mu1, mu2)).sum::<f64>()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub matrix: SparseMatrix,
    pub coefficient: Coefficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    /// Spatial dimension.
    pub dim: usize,
    pub points_per_side: usize,
    pub spacing: f64,
    pub domain: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitProblem {
    pub name: String,
    /// `terms[0]` carries `f_0 = 1` for the problems built here.
    pub terms: Vec<Term>,
    pub rhs: Vec<f64>,
    pub param_box: ParamBox,
    pub grid: GridInfo,
}

impl SplitProblem {
    pub fn new(
        name: impl Into<String>,
        terms: Vec<Term>,
        rhs: Vec<f64>,
        param_box: ParamBox,
        grid: GridInfo,
    ) -> Result<Self> {
        let n = rhs.len();
        if terms.is_empty() {
            return Err(Error::InvalidInput("split problem needs at least one term".into()));
        }
        for t in &terms {
            if t.matrix.n_rows() != n || t.matrix.n_cols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: t.matrix.n_rows(),
                    context: "split-form term shape",
                });
            }
        }
        Ok(Self {
            name: name.into(),
            terms,
            rhs,
            param_box,
            grid,
        })
    }

    pub fn n(&self) -> usize {
        self.rhs.len()
    }

    pub fn coefficients(&self, mu1: f64, mu2: f64) -> Vec<f64> {
        self.terms.iter().map(|t| t.coefficient.eval(mu1, mu2)).collect()
    }

    /// `A(mu1, mu2) = sum_i f_i(mu1, mu2) A_i`.
    pub fn assemble(&self, mu1: f64, mu2: f64) -> Result<SparseMatrix> {
        if !self.param_box.contains(mu1, mu2) {
            log::warn!(
                "{}: assembling outside the parameter box at ({mu1}, {mu2})",
                self.name
            );
        }
        let mats: Vec<&SparseMatrix> = self.terms.iter().map(|t| &t.matrix).collect();
        SparseMatrix::linear_combination(&mats, &self.coefficients(mu1, mu2))
    }

    /// Ground-truth solution by sparse LU of the assembled matrix.
    pub fn direct_reference_solve(&self, mu1: f64, mu2: f64) -> Result<Vec<f64>> {
        let a = self.assemble(mu1, mu2)?;
        lu_factor(&a)?.solve(&self.rhs, false)
    }

    /// Coefficient functions restricted to a line: `free` varies, the other
    /// parameter is held at `fixed_value`.
    pub fn restricted_coefficient(
        &self,
        term: usize,
        free: Axis,
        fixed_value: f64,
    ) -> impl Fn(f64) -> f64 + '_ {
        let c = &self.terms[term].coefficient;
        move |mu| {
            let (mu1, mu2) = free.pair(mu, fixed_value);
            c.eval(mu1, mu2)
        }
    }

    /// Write `A_i` as Matrix Market files, `b` as f64le and a JSON manifest.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut terms = Vec::with_capacity(self.terms.len());
        for (i, t) in self.terms.iter().enumerate() {
            let file = format!("A{i}.mtx");
            write_matrix_market(&dir.join(&file), &t.matrix)?;
            terms.push(TermManifest {
                matrix: file,
                coefficient: t.coefficient.clone(),
            });
        }
        write_vector(&dir.join("b.f64le"), &self.rhs)?;
        let manifest = ProblemManifest {
            name: self.name.clone(),
            n: self.n(),
            param_box: self.param_box,
            grid: self.grid.clone(),
            terms,
            rhs: "b.f64le".into(),
        };
        fs::write(dir.join("problem.json"), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let manifest: ProblemManifest =
            serde_json::from_slice(&fs::read(dir.join("problem.json"))?)?;
        let terms = manifest
            .terms
            .iter()
            .map(|t| {
                Ok(Term {
                    matrix: read_matrix_market(&dir.join(&t.matrix))?,
                    coefficient: t.coefficient.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let rhs = read_vector(&dir.join(&manifest.rhs))?;
        if rhs.len() != manifest.n {
            return Err(Error::format(dir, "rhs length disagrees with manifest n"));
        }
        SplitProblem::new(manifest.name, terms, rhs, manifest.param_box, manifest.grid)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TermManifest {
    matrix: String,
    coefficient: Coefficient,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProblemManifest {
    name: String,
    n: usize,
    #[serde(rename = "box")]
    param_box: ParamBox,
    grid: GridInfo,
    terms: Vec<TermManifest>,
    rhs: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HelmholtzVariant {
    Sim1,
    Sim2,
    Sim3,
}

impl std::str::FromStr for HelmholtzVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim1" => Ok(Self::Sim1),
            "sim2" => Ok(Self::Sim2),
            "sim3" => Ok(Self::Sim3),
            other => Err(Error::UnknownVariant(other.to_string())),
        }
    }
}

/// Five-point Laplacian on the `grid_n x grid_n` interior of the unit square.
/// Unknown `(i, j)` sits at `x = ((i+1)h, (j+1)h)` with index `i + grid_n j`.
pub fn laplacian_2d(grid_n: usize) -> SparseMatrix {
    let h = 1.0 / (grid_n + 1) as f64;
    let inv_h2 = 1.0 / (h * h);
    let n = grid_n * grid_n;
    let mut t = Vec::with_capacity(5 * n);
    for j in 0..grid_n {
        for i in 0..grid_n {
            let row = i + grid_n * j;
            t.push((row, row, -4.0 * inv_h2));
            if i > 0 {
                t.push((row, row - 1, inv_h2));
            }
            if i + 1 < grid_n {
                t.push((row, row + 1, inv_h2));
            }
            if j > 0 {
                t.push((row, row - grid_n, inv_h2));
            }
            if j + 1 < grid_n {
                t.push((row, row + grid_n, inv_h2));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, t).expect("stencil indices in bounds")
}

fn grid_2d_values(grid_n: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let h = 1.0 / (grid_n + 1) as f64;
    let mut out = Vec::with_capacity(grid_n * grid_n);
    for j in 0..grid_n {
        for i in 0..grid_n {
            out.push(f((i + 1) as f64 * h, (j + 1) as f64 * h));
        }
    }
    out
}

/// Helmholtz problems `(lap + f_1 + f_2 alpha(x)) u = h` on the unit square.
///
/// * `sim1`: `f = 2 pi^2 + cos mu1 + mu1^4 + sin mu2 + mu2`, `h = sin(pi x1) sin(pi x2)`, box `[1,2]^2`.
/// * `sim2`: `f_1 = cos mu1 + mu1^3`, `f_2 = sin mu2 + mu2^2`, `alpha = x2`, same `h`, box `[1,2]^2`.
/// * `sim3`: `f_1 = sin^2 mu1`, `f_2 = cos^2 mu2`, `alpha = x1`, `h = exp(-x1 x2)`, box `[0,1]^2`.
pub fn helmholtz_2d(variant: HelmholtzVariant, grid_n: usize) -> Result<SplitProblem> {
    if grid_n < 3 {
        return Err(Error::InvalidInput(format!("grid_n must be >= 3, got {grid_n}")));
    }
    let n = grid_n * grid_n;
    let lap = laplacian_2d(grid_n);
    let identity = SparseMatrix::identity(n);
    let sines = |x1: f64, x2: f64| (PI * x1).sin() * (PI * x2).sin();
    let (name, terms, rhs, param_box) = match variant {
        HelmholtzVariant::Sim1 => {
            let f = Coefficient::affine(
                2.0 * PI * PI,
                [
                    (1.0, Coefficient::Cos { axis: Axis::Mu1 }),
                    (1.0, Coefficient::Power { axis: Axis::Mu1, exponent: 4 }),
                    (1.0, Coefficient::Sin { axis: Axis::Mu2 }),
                    (1.0, Coefficient::Power { axis: Axis::Mu2, exponent: 1 }),
                ],
            );
            (
                "helmholtz-sim1",
                vec![
                    Term { matrix: lap, coefficient: Coefficient::one() },
                    Term { matrix: identity, coefficient: f },
                ],
                grid_2d_values(grid_n, sines),
                ParamBox::new(1.0, 2.0, 1.0, 2.0)?,
            )
        }
        HelmholtzVariant::Sim2 => {
            let f1 = Coefficient::affine(
                0.0,
                [
                    (1.0, Coefficient::Cos { axis: Axis::Mu1 }),
                    (1.0, Coefficient::Power { axis: Axis::Mu1, exponent: 3 }),
                ],
            );
            let f2 = Coefficient::affine(
                0.0,
                [
                    (1.0, Coefficient::Sin { axis: Axis::Mu2 }),
                    (1.0, Coefficient::Power { axis: Axis::Mu2, exponent: 2 }),
                ],
            );
            let alpha = SparseMatrix::from_diagonal(&grid_2d_values(grid_n, |_, x2| x2));
            (
                "helmholtz-sim2",
                vec![
                    Term { matrix: lap, coefficient: Coefficient::one() },
                    Term { matrix: identity, coefficient: f1 },
                    Term { matrix: alpha, coefficient: f2 },
                ],
                grid_2d_values(grid_n, sines),
                ParamBox::new(1.0, 2.0, 1.0, 2.0)?,
            )
        }
        HelmholtzVariant::Sim3 => {
            let alpha = SparseMatrix::from_diagonal(&grid_2d_values(grid_n, |x1, _| x1));
            (
                "helmholtz-sim3",
                vec![
                    Term { matrix: lap, coefficient: Coefficient::one() },
                    Term { matrix: identity, coefficient: Coefficient::SinSq { axis: Axis::Mu1 } },
                    Term { matrix: alpha, coefficient: Coefficient::CosSq { axis: Axis::Mu2 } },
                ],
                grid_2d_values(grid_n, |x1, x2| (-x1 * x2).exp()),
                ParamBox::new(0.0, 1.0, 0.0, 1.0)?,
            )
        }
    };
    SplitProblem::new(
        name,
        terms,
        rhs,
        param_box,
        GridInfo {
            dim: 2,
            points_per_side: grid_n,
            spacing: 1.0 / (grid_n + 1) as f64,
            domain: "unit square, homogeneous Dirichlet".into(),
        },
    )
}

/// One implicit Euler step of `u_t = f_1(mu1) u_xx + f_2(mu2) u_x` on
/// `[0, 1]` from `u_0 = sin(pi x)`:
/// `(I - dt f_1 D2 - dt f_2 D1) u = u_0`, with `f_1 = 1 + sin mu1` and
/// `f_2 = 10 + cos mu2 + pi mu2` on the box `[0, 0.5]^2`.
pub fn advection_diffusion_1d(grid_n: usize, dt: f64) -> Result<SplitProblem> {
    let advection = Coefficient::affine(
        10.0,
        [
            (1.0, Coefficient::Cos { axis: Axis::Mu2 }),
            (PI, Coefficient::Power { axis: Axis::Mu2, exponent: 1 }),
        ],
    );
    advection_diffusion_with(grid_n, dt, advection)
}

pub(crate) fn advection_diffusion_with(
    grid_n: usize,
    dt: f64,
    advection: Coefficient,
) -> Result<SplitProblem> {
    if grid_n < 3 {
        return Err(Error::InvalidInput(format!("grid_n must be >= 3, got {grid_n}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let h = 1.0 / (grid_n + 1) as f64;
    let d2 = SparseMatrix::banded_toeplitz(grid_n, &[(-1, 1.0), (0, -2.0), (1, 1.0)])
        .scaled(1.0 / (h * h));
    let d1 = SparseMatrix::banded_toeplitz(grid_n, &[(-1, -1.0), (1, 1.0)]).scaled(0.5 / h);
    let diffusion = Coefficient::affine(1.0, [(1.0, Coefficient::Sin { axis: Axis::Mu1 })]);
    let u0: Vec<f64> = (1..=grid_n).map(|i| (PI * i as f64 * h).sin()).collect();
    SplitProblem::new(
        "advection-diffusion",
        vec![
            Term { matrix: SparseMatrix::identity(grid_n), coefficient: Coefficient::one() },
            Term { matrix: d2.scaled(-dt), coefficient: diffusion },
            Term { matrix: d1.scaled(-dt), coefficient: advection },
        ],
        u0,
        ParamBox::new(0.0, 0.5, 0.0, 0.5)?,
        GridInfo {
            dim: 1,
            points_per_side: grid_n,
            spacing: h,
            domain: format!("unit interval, homogeneous Dirichlet, implicit Euler dt={dt}"),
        },
    )
}

/// Serializable problem selector used by configs and bindings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    /// `helmholtz-sim1`, `helmholtz-sim2`, `helmholtz-sim3` or `advection-diffusion`
    /// (the short forms `sim1`/`sim2`/`sim3`/`advdiff` are accepted too).
    pub name: String,
    pub grid_n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl ProblemSpec {
    pub fn build(&self) -> Result<SplitProblem> {
        let name = self.name.trim_start_matches("helmholtz-");
        match name {
            "advection-diffusion" | "advdiff" => {
                advection_diffusion_1d(self.grid_n, self.dt.unwrap_or(0.01))
            }
            other => helmholtz_2d(other.parse()?, self.grid_n),
        }
    }
}
