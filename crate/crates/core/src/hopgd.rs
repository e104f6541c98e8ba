//! Greedy separated decomposition `X(mu1, mu2) ~ sum_k Phi^k F_1^k(mu1) F_2^k(mu2)`
//! of snapshots sampled on a sparse cross or a full grid.
//!
//! Each mode is found by alternating updates of `Phi`, `F_1`, `F_2` until the
//! rank-one term stops changing; modes are added until every node meets the
//! relative error tolerance.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::{default_sigma, snapshot_sweep, SnapshotLine, SweepSettings};
use crate::linalg::io::{read_f64le, write_f64le};
use crate::linalg::{axpy, dot, norm2};
use crate::params::{Axis, Interval, ParamBox};
use crate::problems::SplitProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    SparseCross,
    FullGrid,
}

/// Sampled parameter pairs. Members are `(i, j)` index pairs into `mu1`/`mu2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSet {
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    /// Indices of the anchors `mu1*`, `mu2*`.
    pub anchor: (usize, usize),
    pub kind: NodeKind,
    pub members: Vec<(usize, usize)>,
}

fn locate(values: &[f64], x: f64, width: f64) -> Option<usize> {
    let slack = 1e-12 * width.abs().max(1.0);
    values.iter().position(|v| (v - x).abs() <= slack)
}

/// Sparse cross through the anchors: the line `mu2 = mu2*` with `n1` values
/// and the line `mu1 = mu1*` with `n2` values, sharing the anchor node.
pub fn build_sparse_cross(
    param_box: &ParamBox,
    n1: usize,
    n2: usize,
    anchors: Option<(f64, f64)>,
) -> Result<NodeSet> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidInput("cross needs at least one value per axis".into()));
    }
    let mu1 = param_box.mu1.linspace(n1);
    let mu2 = param_box.mu2.linspace(n2);
    let anchor = match anchors {
        None => {
            if n1 % 2 == 0 || n2 % 2 == 0 {
                return Err(Error::InvalidInput(format!(
                    "midpoint anchors need odd value counts, got {n1} x {n2}"
                )));
            }
            (n1 / 2, n2 / 2)
        }
        Some((a1, a2)) => {
            let i = locate(&mu1, a1, param_box.mu1.width()).ok_or(Error::AnchorOffGrid { value: a1 })?;
            let j = locate(&mu2, a2, param_box.mu2.width()).ok_or(Error::AnchorOffGrid { value: a2 })?;
            (i, j)
        }
    };
    let mut members: Vec<(usize, usize)> = (0..n1).map(|i| (i, anchor.1)).collect();
    members.extend((0..n2).filter(|&j| j != anchor.1).map(|j| (anchor.0, j)));
    Ok(NodeSet { mu1, mu2, anchor, kind: NodeKind::SparseCross, members })
}

/// All `n1 * n2` pairs of equidistant values, ordered with `mu1` fastest.
pub fn build_full_grid(param_box: &ParamBox, n1: usize, n2: usize) -> Result<NodeSet> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidInput("grid needs at least one value per axis".into()));
    }
    let members = (0..n2).flat_map(|j| (0..n1).map(move |i| (i, j))).collect();
    Ok(NodeSet {
        mu1: param_box.mu1.linspace(n1),
        mu2: param_box.mu2.linspace(n2),
        anchor: (n1 / 2, n2 / 2),
        kind: NodeKind::FullGrid,
        members,
    })
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn anchor_values(&self) -> (f64, f64) {
        (self.mu1[self.anchor.0], self.mu2[self.anchor.1])
    }

    pub fn position(&self, node: (usize, usize)) -> Option<usize> {
        self.members.iter().position(|m| *m == node)
    }

    pub fn values(&self, node: (usize, usize)) -> (f64, f64) {
        (self.mu1[node.0], self.mu2[node.1])
    }

    /// Member positions used to update `F_1` at `mu1[i]`. On a sparse cross
    /// this is only the anchor line `mu2 = mu2*`.
    pub fn row(&self, i: usize) -> Vec<usize> {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &(a, b))| a == i && (self.kind == NodeKind::FullGrid || b == self.anchor.1))
            .map(|(p, _)| p)
            .collect()
    }

    /// Member positions used to update `F_2` at `mu2[j]`.
    pub fn col(&self, j: usize) -> Vec<usize> {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &(a, b))| b == j && (self.kind == NodeKind::FullGrid || a == self.anchor.0))
            .map(|(p, _)| p)
            .collect()
    }

    /// Lines a sweep has to cover as `(fixed axis, fixed value, free values)`.
    /// On a cross the anchor belongs to the first line only.
    pub fn sweep_lines(&self) -> Vec<(Axis, f64, Vec<f64>)> {
        match self.kind {
            NodeKind::SparseCross => {
                let (a1, a2) = self.anchor_values();
                let mut free2 = self.mu2.clone();
                free2.remove(self.anchor.1);
                vec![(Axis::Mu2, a2, self.mu1.clone()), (Axis::Mu1, a1, free2)]
            }
            NodeKind::FullGrid => self.mu2.iter().map(|&v| (Axis::Mu2, v, self.mu1.clone())).collect(),
        }
    }
}

/// One snapshot per member node.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotTensor {
    pub nodes: NodeSet,
    /// Aligned with `nodes.members`.
    pub snapshots: Vec<Vec<f64>>,
}

impl SnapshotTensor {
    pub fn new(nodes: NodeSet, snapshots: Vec<Vec<f64>>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput("empty node set".into()));
        }
        if snapshots.len() != nodes.len() {
            return Err(Error::DimensionMismatch {
                expected: nodes.len(),
                actual: snapshots.len(),
                context: "snapshots per node",
            });
        }
        let n = snapshots[0].len();
        if let Some(bad) = snapshots.iter().find(|s| s.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, actual: bad.len(), context: "snapshot length" });
        }
        Ok(Self { nodes, snapshots })
    }

    pub fn from_fn(nodes: NodeSet, f: impl Fn(f64, f64) -> Vec<f64>) -> Result<Self> {
        let snapshots = nodes.members.iter().map(|&m| {
            let (a, b) = nodes.values(m);
            f(a, b)
        });
        let snapshots = snapshots.collect();
        Self::new(nodes, snapshots)
    }

    /// Assemble from sweep lines; every member node must be found on a line.
    pub fn from_lines(nodes: NodeSet, lines: &[SnapshotLine]) -> Result<Self> {
        let w1 = (nodes.mu1.last().unwrap() - nodes.mu1[0]).abs();
        let w2 = (nodes.mu2.last().unwrap() - nodes.mu2[0]).abs();
        let close = |a: f64, b: f64, w: f64| (a - b).abs() <= 1e-12 * w.max(1.0);
        let mut snapshots = Vec::with_capacity(nodes.len());
        for &m in &nodes.members {
            let (a, b) = nodes.values(m);
            let found = lines.iter().find_map(|line| {
                (0..line.free_values.len()).find_map(|k| {
                    let (x, y) = line.node(k);
                    (close(x, a, w1) && close(y, b, w2)).then(|| line.snapshots[k].clone())
                })
            });
            snapshots.push(found.ok_or_else(|| {
                Error::InvalidInput(format!("no snapshot for node ({a}, {b})"))
            })?);
        }
        Self::new(nodes, snapshots)
    }

    /// Run one sweep per line of `nodes` and assemble the tensor. With no
    /// explicit shift each line uses the default shift of the node range
    /// along its free axis.
    pub fn sweep(
        p: &SplitProblem,
        nodes: NodeSet,
        settings: &SweepSettings,
    ) -> Result<(Self, Vec<SnapshotLine>)> {
        let mut lines = Vec::new();
        for (axis, fixed, free) in nodes.sweep_lines() {
            let mut line_settings = settings.clone();
            let values = match axis {
                Axis::Mu2 => &nodes.mu1,
                Axis::Mu1 => &nodes.mu2,
            };
            if settings.sigma.is_none() && values.len() > 1 {
                let range = Interval::new(values[0], values[values.len() - 1])?;
                line_settings.sigma = Some(default_sigma(&range));
            }
            let line = snapshot_sweep(p, axis, fixed, &free, &line_settings)?;
            if !line.all_converged() {
                log::warn!("sweep at {axis:?} = {fixed} left values unconverged");
            }
            lines.push(line);
        }
        let t = Self::from_lines(nodes, &lines)?;
        Ok((t, lines))
    }

    pub fn n(&self) -> usize {
        self.snapshots[0].len()
    }

    pub fn snapshot(&self, node: (usize, usize)) -> Result<&[f64]> {
        self.nodes
            .position(node)
            .map(|p| self.snapshots[p].as_slice())
            .ok_or(Error::NodeNotMember(node.0, node.1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhiUpdate {
    /// `Phi = sum F_1 F_2 r / sum (F_1 F_2)^2`, the least-squares solution.
    #[default]
    NormalEquations,
    /// `Phi = sum r / sum F_1 F_2`.
    AsWritten,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HopgdSettings {
    pub eps1: f64,
    pub eps2: f64,
    pub max_modes: usize,
    pub max_inner: usize,
    pub phi_update: PhiUpdate,
    /// Seed of the perturbed restart after a stagnated mode.
    pub seed: u64,
}

impl Default for HopgdSettings {
    fn default() -> Self {
        Self {
            eps1: 1e-4,
            eps2: 1e-3,
            max_modes: 50,
            max_inner: 200,
            phi_update: PhiUpdate::NormalEquations,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeLog {
    pub mode: usize,
    pub inner_iterations: usize,
    pub fixed_point: bool,
    pub retried: bool,
    /// Largest relative rank-one change in the last inner iteration.
    pub final_delta: f64,
    /// Largest node relative error after accepting the mode.
    pub max_node_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedModel {
    pub nodes: NodeSet,
    pub n: usize,
    /// Unit-norm mode vectors.
    pub phi: Vec<Vec<f64>>,
    /// `f1[k][i] = F_1^k(mu1[i])`; entries off the sampled lines stay unused.
    pub f1: Vec<Vec<f64>>,
    pub f2: Vec<Vec<f64>>,
    pub log: Vec<ModeLog>,
    pub node_errors: Vec<f64>,
    pub converged: bool,
    pub settings: HopgdSettings,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    rank: usize,
    n: usize,
    nodes: NodeSet,
    f1: Vec<Vec<f64>>,
    f2: Vec<Vec<f64>>,
    log: Vec<ModeLog>,
    node_errors: Vec<f64>,
    converged: bool,
    settings: HopgdSettings,
    warnings: Vec<String>,
    interpolation: String,
    phi_file: String,
}

impl SeparatedModel {
    pub fn rank(&self) -> usize {
        self.phi.len()
    }

    pub fn max_node_error(&self) -> f64 {
        self.node_errors.iter().fold(0.0, |m, e| m.max(*e))
    }

    /// `sum_k Phi^k F_1^k F_2^k` at a member node.
    pub fn eval_at_node(&self, node: (usize, usize)) -> Result<Vec<f64>> {
        if self.nodes.position(node).is_none() {
            return Err(Error::NodeNotMember(node.0, node.1));
        }
        let mut x = vec![0.0; self.n];
        for k in 0..self.rank() {
            axpy(self.f1[k][node.0] * self.f2[k][node.1], &self.phi[k], &mut x);
        }
        Ok(x)
    }

    pub fn residual_at_node(&self, tensor: &SnapshotTensor, node: (usize, usize)) -> Result<Vec<f64>> {
        let mut r = tensor.snapshot(node)?.to_vec();
        let x = self.eval_at_node(node)?;
        axpy(-1.0, &x, &mut r);
        Ok(r)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut flat = Vec::with_capacity(self.n * self.rank());
        for p in &self.phi {
            flat.extend_from_slice(p);
        }
        write_f64le(&dir.join("phi.f64le"), &flat)?;
        let file = ModelFile {
            rank: self.rank(),
            n: self.n,
            nodes: self.nodes.clone(),
            f1: self.f1.clone(),
            f2: self.f2.clone(),
            log: self.log.clone(),
            node_errors: self.node_errors.clone(),
            converged: self.converged,
            settings: self.settings.clone(),
            warnings: self.warnings.clone(),
            interpolation: "natural_cubic_spline".into(),
            phi_file: "phi.f64le".into(),
        };
        fs::write(dir.join("model.json"), serde_json::to_vec_pretty(&file)?)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let path = dir.join("model.json");
        let file: ModelFile = serde_json::from_slice(&fs::read(&path)?)?;
        if file.f1.len() != file.rank || file.f2.len() != file.rank {
            return Err(Error::format(&path, "mode function arrays disagree with rank"));
        }
        let flat = read_f64le(&dir.join(&file.phi_file), file.n * file.rank)?;
        let phi = if file.n == 0 { vec![Vec::new(); file.rank] } else { flat.chunks(file.n).map(<[f64]>::to_vec).collect() };
        Ok(Self {
            nodes: file.nodes,
            n: file.n,
            phi,
            f1: file.f1,
            f2: file.f2,
            log: file.log,
            node_errors: file.node_errors,
            converged: file.converged,
            settings: file.settings,
            warnings: file.warnings,
        })
    }
}

pub fn model_eval_at_node(model: &SeparatedModel, node: (usize, usize)) -> Result<Vec<f64>> {
    model.eval_at_node(node)
}

pub fn residual_at_node(model: &SeparatedModel, node: (usize, usize), tensor: &SnapshotTensor) -> Result<Vec<f64>> {
    model.residual_at_node(tensor, node)
}

/// Denominator guard for the alternating updates.
fn stagnated(den: f64, scale: f64) -> bool {
    den.abs() < 1e-300 || den.abs() < 1e-14 * scale
}

/// `F_1` update from `Phi^T r` at each member: for every `i`,
/// `sum_{row(i)} F_2 (Phi^T r) / (Phi^T Phi sum_{row(i)} F_2^2)`.
/// Returns `None` on a vanishing denominator.
pub fn f1_update(nodes: &NodeSet, phi_sq: f64, phi_r: &[f64], f2: &[f64], f1_old: &[f64]) -> Option<Vec<f64>> {
    let mut f1 = f1_old.to_vec();
    for (i, slot) in f1.iter_mut().enumerate() {
        let row = nodes.row(i);
        if row.is_empty() {
            continue;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &p in &row {
            let j = nodes.members[p].1;
            num += f2[j] * phi_r[p];
            den += f2[j] * f2[j];
        }
        den *= phi_sq;
        if stagnated(den, phi_sq) {
            return None;
        }
        *slot = num / den;
    }
    Some(f1)
}

/// Mirror of [`f1_update`] for `F_2` over `col(j)`.
pub fn f2_update(nodes: &NodeSet, phi_sq: f64, phi_r: &[f64], f1: &[f64], f2_old: &[f64]) -> Option<Vec<f64>> {
    let mut f2 = f2_old.to_vec();
    for (j, slot) in f2.iter_mut().enumerate() {
        let col = nodes.col(j);
        if col.is_empty() {
            continue;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &p in &col {
            let i = nodes.members[p].0;
            num += f1[i] * phi_r[p];
            den += f1[i] * f1[i];
        }
        den *= phi_sq;
        if stagnated(den, phi_sq) {
            return None;
        }
        *slot = num / den;
    }
    Some(f2)
}

/// `Phi` update over all member nodes, normalized to unit length.
pub fn phi_update(
    nodes: &NodeSet,
    residuals: &[Vec<f64>],
    f1: &[f64],
    f2: &[f64],
    rule: PhiUpdate,
) -> Option<Vec<f64>> {
    let n = residuals[0].len();
    let mut phi = vec![0.0; n];
    let (mut den, mut scale) = (0.0, 0.0);
    for (p, &(i, j)) in nodes.members.iter().enumerate() {
        let w = f1[i] * f2[j];
        match rule {
            PhiUpdate::NormalEquations => {
                axpy(w, &residuals[p], &mut phi);
                den += w * w;
                scale += w * w;
            }
            PhiUpdate::AsWritten => {
                axpy(1.0, &residuals[p], &mut phi);
                den += w;
                scale += w.abs();
            }
        }
    }
    if stagnated(den, scale) {
        return None;
    }
    let nrm = norm2(&phi) / den.abs();
    if !(nrm > 0.0 && nrm.is_finite()) {
        return None;
    }
    // Unit norm; the sign of den is kept so the update direction is unchanged.
    let s = den.signum() / norm2(&phi);
    phi.iter_mut().for_each(|x| *x *= s);
    Some(phi)
}

struct ModeResult {
    phi: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    iterations: usize,
    fixed_point: bool,
    final_delta: f64,
}

/// Alternating updates for one mode from the given initial factors.
fn fit_mode(
    nodes: &NodeSet,
    residuals: &[Vec<f64>],
    mut f1: Vec<f64>,
    mut f2: Vec<f64>,
    settings: &HopgdSettings,
) -> Option<ModeResult> {
    let mut phi_old: Option<Vec<f64>> = None;
    let mut final_delta = f64::INFINITY;
    for it in 1..=settings.max_inner {
        let phi = phi_update(nodes, residuals, &f1, &f2, settings.phi_update)?;
        let phi_r: Vec<f64> = residuals.iter().map(|r| dot(&phi, r)).collect();
        let f1_new = f1_update(nodes, 1.0, &phi_r, &f2, &f1)?;
        // F_2 uses the fresh Phi^T r and the fresh F_1.
        let f2_new = f2_update(nodes, 1.0, &phi_r, &f1_new, &f2)?;

        if let Some(old) = &phi_old {
            // Unit Phi: ||a Phi_old - b Phi_new||^2 = (a - b)^2 + ab ||Phi_old - Phi_new||^2.
            let dphi_sq: f64 = old.iter().zip(&phi).map(|(x, y)| (x - y) * (x - y)).sum();
            let terms: Vec<(f64, f64)> = nodes
                .members
                .iter()
                .map(|&(i, j)| (f1[i] * f2[j], f1_new[i] * f2_new[j]))
                .collect();
            let scale = terms.iter().fold(0.0f64, |m, t| m.max(t.1.abs()));
            final_delta = terms
                .iter()
                .map(|&(a, b)| {
                    let d2 = ((a - b) * (a - b) + a * b * dphi_sq).max(0.0);
                    d2.sqrt() / b.abs().max(1e-12 * scale).max(f64::MIN_POSITIVE)
                })
                .fold(0.0, f64::max);
        }
        f1 = f1_new;
        f2 = f2_new;
        if final_delta < settings.eps1 || it == settings.max_inner {
            return Some(ModeResult {
                phi,
                f1,
                f2,
                iterations: it,
                fixed_point: final_delta < settings.eps1,
                final_delta,
            });
        }
        phi_old = Some(phi);
    }
    None
}

fn node_errors(residuals: &[Vec<f64>], norms: &[f64]) -> Vec<f64> {
    residuals
        .iter()
        .zip(norms)
        .map(|(r, x)| if *x > 0.0 { norm2(r) / x } else { norm2(r) })
        .collect()
}

/// Greedy rank-one enrichment with alternating fixed-point updates.
pub fn hopgd_decompose(t: &SnapshotTensor, settings: &HopgdSettings) -> Result<SeparatedModel> {
    if !(settings.eps1 > 0.0 && settings.eps2 > 0.0) {
        return Err(Error::InvalidInput("eps1 and eps2 must be positive".into()));
    }
    if settings.max_inner == 0 {
        return Err(Error::InvalidInput("max_inner must be >= 1".into()));
    }
    let nodes = &t.nodes;
    let (n1, n2) = (nodes.mu1.len(), nodes.mu2.len());
    let mut residuals = t.snapshots.clone();
    let norms: Vec<f64> = t.snapshots.iter().map(|x| norm2(x)).collect();
    let mut errors = node_errors(&residuals, &norms);
    let mut model = SeparatedModel {
        nodes: nodes.clone(),
        n: t.n(),
        phi: Vec::new(),
        f1: Vec::new(),
        f2: Vec::new(),
        log: Vec::new(),
        node_errors: errors.clone(),
        converged: false,
        settings: settings.clone(),
        warnings: Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let max_err = |e: &[f64]| e.iter().fold(0.0f64, |m, x| m.max(*x));

    while max_err(&errors) >= settings.eps2 {
        if model.rank() >= settings.max_modes {
            model.warnings.push(format!(
                "max_modes = {} reached with max node error {:.3e}",
                settings.max_modes,
                max_err(&errors)
            ));
            break;
        }
        let mode = model.rank() + 1;
        let mut retried = false;
        let mut result = fit_mode(nodes, &residuals, vec![1.0; n1], vec![1.0; n2], settings);
        if result.is_none() {
            retried = true;
            model.warnings.push(format!("mode {mode}: stagnated update, retrying from a perturbed start"));
            let p1 = (0..n1).map(|_| 1.0 + 0.1 * rng.random_range(-1.0..1.0)).collect();
            let p2 = (0..n2).map(|_| 1.0 + 0.1 * rng.random_range(-1.0..1.0)).collect();
            result = fit_mode(nodes, &residuals, p1, p2, settings);
        }
        let Some(res) = result else {
            model.warnings.push(format!("mode {mode}: stagnated again; stopping"));
            break;
        };
        if !res.fixed_point {
            model.warnings.push(format!(
                "mode {mode}: no fixed point after {} iterations (delta {:.3e}); accepted",
                res.iterations, res.final_delta
            ));
        }
        for (p, &(i, j)) in nodes.members.iter().enumerate() {
            axpy(-res.f1[i] * res.f2[j], &res.phi, &mut residuals[p]);
        }
        let previous = max_err(&errors);
        errors = node_errors(&residuals, &norms);
        let current = max_err(&errors);
        if current > 1.01 * previous {
            model.warnings.push(format!(
                "mode {mode}: max node error rose from {previous:.3e} to {current:.3e}"
            ));
        }
        log::debug!(
            "mode {mode}: {} inner iterations, max node error {current:.3e}",
            res.iterations
        );
        model.log.push(ModeLog {
            mode,
            inner_iterations: res.iterations,
            fixed_point: res.fixed_point,
            retried,
            final_delta: res.final_delta,
            max_node_error: current,
        });
        model.phi.push(res.phi);
        model.f1.push(res.f1);
        model.f2.push(res.f2);
    }
    model.converged = max_err(&errors) < settings.eps2;
    model.node_errors = errors;
    for w in &model.warnings {
        log::warn!("{w}");
    }
    Ok(model)
}
