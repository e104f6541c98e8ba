//! Recover `(mu1, mu2)` from an observed solution by minimizing
//! `||x_obs - x^m(mu1, mu2)||` over a box, with successive zoomed models.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hopgd::{build_sparse_cross, hopgd_decompose, HopgdSettings, SnapshotTensor};
use crate::krylov::SweepSettings;
use crate::linalg::lu::factorization_count;
use crate::params::{Interval, ParamBox};
use crate::problems::SplitProblem;
use crate::rom::{interpolate_model, rom_eval, InterpolatedModel};

pub const SCAN_POINTS: usize = 41;
pub const NM_MAX_ITER: usize = 500;
pub const NM_DIAMETER: f64 = 1e-10;

/// `x + eps * delta` with standard normal `delta` drawn from ChaCha8 seeded by `seed`.
pub fn add_noise(x: &[f64], eps: f64, seed: u64) -> Vec<f64> {
    if eps == 0.0 {
        return x.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    x.iter()
        .map(|v| {
            let d: f64 = StandardNormal.sample(&mut rng);
            v + eps * d
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mu1: f64,
    pub mu2: f64,
    pub objective: f64,
    /// Best point of the coarse scan.
    pub scan_best: (f64, f64, f64),
    pub iterations: usize,
}

/// `||x_obs - x^m(mu1, mu2)||_2`, infinite outside the model box.
pub fn objective(im: &InterpolatedModel, x_obs: &[f64], mu1: f64, mu2: f64) -> f64 {
    match rom_eval(im, mu1, mu2) {
        Ok(x) => x.iter().zip(x_obs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        Err(_) => f64::INFINITY,
    }
}

fn clamp(b: &ParamBox, p: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(b.mu1.lo, b.mu1.hi), p[1].clamp(b.mu2.lo, b.mu2.hi)]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Nelder-Mead on the box with every trial point clamped into it.
fn nelder_mead(
    f: impl Fn([f64; 2]) -> f64,
    start: [f64; 2],
    step: [f64; 2],
    b: &ParamBox,
    tol: f64,
    max_iter: usize,
) -> ([f64; 2], f64, usize) {
    let vertex = |d: usize| {
        let mut p = start;
        p[d] += step[d];
        if p != clamp(b, p) {
            p[d] = start[d] - step[d];
        }
        clamp(b, p)
    };
    let mut s: Vec<([f64; 2], f64)> = [start, vertex(0), vertex(1)].into_iter().map(|p| (p, f(p))).collect();
    let along = |c: [f64; 2], w: [f64; 2], t: f64| clamp(b, [c[0] + t * (w[0] - c[0]), c[1] + t * (w[1] - c[1])]);
    let mut it = 0;
    while it < max_iter {
        s.sort_by(|x, y| x.1.total_cmp(&y.1));
        let diameter = dist(s[0].0, s[1].0).max(dist(s[0].0, s[2].0)).max(dist(s[1].0, s[2].0));
        if diameter < tol {
            break;
        }
        it += 1;
        let c = [0.5 * (s[0].0[0] + s[1].0[0]), 0.5 * (s[0].0[1] + s[1].0[1])];
        let worst = s[2];
        let xr = along(c, worst.0, -1.0);
        let fr = f(xr);
        if fr < s[0].1 {
            let xe = along(c, worst.0, -2.0);
            let fe = f(xe);
            s[2] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < s[1].1 {
            s[2] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let x = along(c, xr, 0.5);
            (x, f(x))
        } else {
            let x = along(c, worst.0, 0.5);
            (x, f(x))
        };
        if fc < fr.min(worst.1) {
            s[2] = (xc, fc);
            continue;
        }
        let best = s[0].0;
        for v in s.iter_mut().skip(1) {
            let p = along(best, v.0, 0.5);
            *v = (p, f(p));
        }
    }
    s.sort_by(|x, y| x.1.total_cmp(&y.1));
    (s[0].0, s[0].1, it)
}

/// 41 x 41 scan of the model box, then Nelder-Mead from the best scan point.
/// The result is never worse than the best scan point.
pub fn estimate_parameters(im: &InterpolatedModel, x_obs: &[f64]) -> Result<Estimate> {
    if x_obs.len() != im.n {
        return Err(Error::DimensionMismatch { expected: im.n, actual: x_obs.len(), context: "observed vector" });
    }
    let b = im.param_box;
    let g1 = b.mu1.linspace(SCAN_POINTS);
    let g2 = b.mu2.linspace(SCAN_POINTS);
    let mut best = (g1[0], g2[0], f64::INFINITY);
    for &a in &g1 {
        for &c in &g2 {
            let v = objective(im, x_obs, a, c);
            if v < best.2 {
                best = (a, c, v);
            }
        }
    }
    let step = [
        b.mu1.width() / (SCAN_POINTS - 1) as f64,
        b.mu2.width() / (SCAN_POINTS - 1) as f64,
    ];
    let (p, v, iterations) = nelder_mead(
        |q| objective(im, x_obs, q[0], q[1]),
        [best.0, best.1],
        step,
        &b,
        NM_DIAMETER * b.diagonal(),
        NM_MAX_ITER,
    );
    let (mu1, mu2, objective) = if v <= best.2 { (p[0], p[1], v) } else { best };
    Ok(Estimate { mu1, mu2, objective, scan_best: best, iterations })
}

/// Cross size and termination tolerance of one estimation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub n1: usize,
    pub n2: usize,
    pub eps2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineSettings {
    pub runs: usize,
    /// Per-run plans; the last entry repeats when there are more runs.
    pub plan: Vec<RunPlan>,
    /// Half-width factor of each zoomed box relative to the previous one.
    pub shrink: f64,
    pub sweep: SweepSettings,
    pub hopgd: HopgdSettings,
}

impl Default for RefineSettings {
    fn default() -> Self {
        Self {
            runs: 3,
            plan: vec![
                RunPlan { n1: 7, n2: 7, eps2: 1e-3 },
                RunPlan { n1: 7, n2: 7, eps2: 1e-3 },
                RunPlan { n1: 5, n2: 5, eps2: 1e-3 },
            ],
            shrink: 0.5,
            sweep: SweepSettings::default(),
            hopgd: HopgdSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationRun {
    pub run: usize,
    #[serde(rename = "box")]
    pub param_box: ParamBox,
    pub nodes: Vec<(f64, f64)>,
    pub m: usize,
    pub estimate: (f64, f64),
    pub objective: f64,
    /// `|estimate - truth| / |truth|` per parameter, when the truth is known and nonzero.
    pub rel_err_mu1: Option<f64>,
    pub rel_err_mu2: Option<f64>,
    pub converged: bool,
    pub max_node_error: f64,
    pub shrink: f64,
    pub factorizations: u64,
    /// Wall time of sweeps, decomposition and interpolation. Not serialized,
    /// so reports stay identical across reruns.
    #[serde(skip)]
    pub offline_seconds: f64,
    /// Wall time of the parameter search over the online model.
    #[serde(skip)]
    pub online_seconds: f64,
}

fn rel(est: f64, truth: f64) -> Option<f64> {
    (truth != 0.0).then(|| (est - truth).abs() / truth.abs())
}

/// Box of half-widths `shrink * previous` centred at `center`, clipped to `outer`.
pub fn zoom_box(previous: &ParamBox, center: (f64, f64), shrink: f64, outer: &ParamBox) -> Result<ParamBox> {
    let side = |prev: &Interval, c: f64, out: &Interval| -> Result<Interval> {
        let h = shrink * prev.half_width();
        let iv = Interval::new(c - h, c + h)?.intersect(out);
        if iv.width() <= 0.0 {
            return Err(Error::InvalidInput(format!("zoom box around {c} is empty")));
        }
        Ok(iv)
    };
    Ok(ParamBox {
        mu1: side(&previous.mu1, center.0, &outer.mu1)?,
        mu2: side(&previous.mu2, center.1, &outer.mu2)?,
    })
}

/// Successive models on shrinking boxes: each run sweeps a fresh sparse
/// cross (two factorizations), decomposes, interpolates and estimates.
pub fn refine_estimate(
    p: &SplitProblem,
    x_obs: &[f64],
    param_box: &ParamBox,
    settings: &RefineSettings,
    truth: Option<(f64, f64)>,
) -> Result<Vec<EstimationRun>> {
    if settings.runs == 0 || settings.plan.is_empty() {
        return Err(Error::InvalidInput("refine_estimate needs runs >= 1 and a run plan".into()));
    }
    if !(settings.shrink > 0.0 && settings.shrink <= 1.0) {
        return Err(Error::InvalidInput(format!("shrink must be in (0, 1], got {}", settings.shrink)));
    }
    if !param_box.is_subset_of(&p.param_box) {
        return Err(Error::InvalidInput("estimation box leaves the problem box".into()));
    }
    let mut runs: Vec<EstimationRun> = Vec::with_capacity(settings.runs);
    let mut current = *param_box;
    for r in 0..settings.runs {
        let plan = settings.plan[r.min(settings.plan.len() - 1)];
        if let Some(prev) = runs.last() {
            current = zoom_box(&current, prev.estimate, settings.shrink, param_box)?;
        }
        let before = factorization_count();
        let t0 = Instant::now();
        let nodes = build_sparse_cross(&current, plan.n1, plan.n2, None)?;
        let (tensor, _) = SnapshotTensor::sweep(p, nodes, &settings.sweep)?;
        let hopgd = HopgdSettings { eps2: plan.eps2, ..settings.hopgd.clone() };
        let model = hopgd_decompose(&tensor, &hopgd)?;
        if !model.converged {
            log::warn!(
                "run {}: decomposition stopped at m = {} with max node error {:.3e}",
                r + 1,
                model.rank(),
                model.max_node_error()
            );
        }
        let im = interpolate_model(&model)?;
        let offline_seconds = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let est = estimate_parameters(&im, x_obs)?;
        let online_seconds = t1.elapsed().as_secs_f64();
        let run = EstimationRun {
            run: r + 1,
            param_box: current,
            nodes: tensor.nodes.members.iter().map(|&m| tensor.nodes.values(m)).collect(),
            m: model.rank(),
            estimate: (est.mu1, est.mu2),
            objective: est.objective,
            rel_err_mu1: truth.and_then(|t| rel(est.mu1, t.0)),
            rel_err_mu2: truth.and_then(|t| rel(est.mu2, t.1)),
            converged: model.converged,
            max_node_error: model.max_node_error(),
            shrink: settings.shrink,
            factorizations: factorization_count() - before,
            offline_seconds,
            online_seconds,
        };
        log::info!(
            "run {}: m = {}, estimate ({:.6}, {:.6}), objective {:.3e}",
            run.run,
            run.m,
            est.mu1,
            est.mu2,
            est.objective
        );
        runs.push(run);
    }
    Ok(runs)
}
