use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use chebhopgd::config::RunConfig;
use chebhopgd::estimate::{add_noise, refine_estimate, EstimationRun};
use chebhopgd::hopgd::{hopgd_decompose, NodeSet, SeparatedModel, SnapshotTensor};
use chebhopgd::krylov::SnapshotLine;
use chebhopgd::linalg::io::{read_vector, write_vector};
use chebhopgd::rom::{classify, error_grid, interpolate_model, relative_error, rom_eval, write_error_csv, ErrorCell, ErrorClass};
use chebhopgd::{Axis, Error, ParamBox};

use crate::args::ConfigArgs;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

const MANIFEST: &str = "manifest.json";
const MANIFEST_FORMAT: &str = "chebhopgd-snapshots/1";

/// Failure reported as JSON on stderr with a matching exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
    pub details: Value,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, kind: "invalid_input", message: message.into(), details: Value::Null }
    }

    pub fn to_json(&self) -> Value {
        json!({ "error": { "code": self.code, "kind": self.kind, "message": self.message, "details": self.details } })
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::SingularMatrix { .. } => (EXIT_SOLVER, "singular_matrix"),
            Error::SingularShift { .. } => (EXIT_SOLVER, "singular_shift"),
            Error::ChebNoConvergence { .. } => (EXIT_SOLVER, "cheb_no_convergence"),
            Error::Breakdown { .. } => (EXIT_SOLVER, "breakdown"),
            Error::SweepNoConvergence { .. } => (EXIT_SOLVER, "sweep_no_convergence"),
            Error::OutOfRange { .. } => (EXIT_INPUT, "out_of_range"),
            Error::UnknownVariant(_) => (EXIT_INPUT, "unknown_variant"),
            Error::AnchorOffGrid { .. } => (EXIT_INPUT, "anchor_off_grid"),
            Error::NodeNotMember(..) => (EXIT_INPUT, "node_not_member"),
            Error::DimensionMismatch { .. } => (EXIT_INPUT, "dimension_mismatch"),
            Error::ZeroReference => (EXIT_INPUT, "zero_reference"),
            Error::Format { .. } | Error::Json(_) => (EXIT_INPUT, "format"),
            Error::Io(_) => (EXIT_INPUT, "io"),
            _ => (EXIT_INPUT, "invalid_input"),
        };
        let details = match &e {
            Error::SweepNoConvergence { k, unconverged } => json!({ "k": k, "unconverged": unconverged }),
            _ => Value::Null,
        };
        Self { code, kind, message: e.to_string(), details }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e).into()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineEntry {
    pub dir: String,
    pub fixed_axis: Axis,
    pub fixed_value: f64,
    pub count: usize,
    pub all_converged: bool,
}

/// Index of a snapshot directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: RunConfig,
    #[serde(rename = "box")]
    pub param_box: ParamBox,
    pub nodes: NodeSet,
    pub n: usize,
    pub lines: Vec<LineEntry>,
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let bytes = fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format { path: path.into(), message: e.to_string() }.into())
}

/// One sweep per line of the node plan. Lines are written even when some
/// values did not converge; the error then lists them.
pub fn snapshots(cfg: &RunConfig, out: &Path) -> CliResult<Value> {
    let p = cfg.build_problem()?;
    let param_box = cfg.resolve_box(&p)?;
    let nodes = cfg.nodes.build(&param_box)?;
    let t0 = Instant::now();
    let (tensor, lines) = SnapshotTensor::sweep(&p, nodes.clone(), &cfg.sweep_settings())?;
    let sweep_seconds = t0.elapsed().as_secs_f64();

    fs::create_dir_all(out)?;
    let mut entries = Vec::with_capacity(lines.len());
    for (k, line) in lines.iter().enumerate() {
        let dir = format!("line_{k:03}");
        line.write_dir(&out.join(&dir))?;
        entries.push(LineEntry {
            dir,
            fixed_axis: line.fixed_axis,
            fixed_value: line.fixed_value,
            count: line.free_values.len(),
            all_converged: line.all_converged(),
        });
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        config: cfg.clone(),
        param_box,
        nodes,
        n: tensor.n(),
        lines: entries,
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    let timing = json!({
        "offline_sweep_seconds": sweep_seconds,
        "factorizations": lines.iter().map(|l| l.factorizations).sum::<usize>(),
    });
    write_json(&out.join("timing.json"), &timing)?;
    for line in &lines {
        line.check_converged()?;
    }
    Ok(json!({
        "snapshots": out,
        "lines": lines.len(),
        "vectors": lines.iter().map(|l| l.snapshots.len()).sum::<usize>(),
        "n": tensor.n(),
        "krylov_steps": lines.iter().map(|l| l.k).collect::<Vec<_>>(),
        "timing": timing,
    }))
}

pub fn read_snapshots(dir: &Path) -> CliResult<(Manifest, SnapshotTensor)> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(CliError::input(format!("unsupported snapshot format `{}`", manifest.format)));
    }
    let lines = manifest
        .lines
        .iter()
        .map(|e| SnapshotLine::read_dir(&dir.join(&e.dir)))
        .collect::<chebhopgd::Result<Vec<_>>>()?;
    for line in lines.iter().filter(|l| !l.all_converged()) {
        log::warn!("line {:?} = {} has unconverged snapshots", line.fixed_axis, line.fixed_value);
    }
    let tensor = SnapshotTensor::from_lines(manifest.nodes.clone(), &lines)?;
    Ok((manifest, tensor))
}

/// Writes the model even when it did not reach `eps2`; that case exits 3.
pub fn decompose(snapshot_dir: &Path, args: &ConfigArgs, out: Option<PathBuf>) -> CliResult<Value> {
    let (manifest, tensor) = read_snapshots(snapshot_dir)?;
    let cfg = args.resolve(Some(manifest.config))?;
    let out = out.unwrap_or_else(|| cfg.output.join("model"));
    let t0 = Instant::now();
    let model = hopgd_decompose(&tensor, &cfg.hopgd_settings())?;
    let seconds = t0.elapsed().as_secs_f64();
    model.write_dir(&out)?;
    cfg.write(&out.join("config.json"))?;
    let log = json!({
        "converged": model.converged,
        "rank": model.rank(),
        "max_node_error": model.max_node_error(),
        "node_errors": model.node_errors,
        "modes": model.log,
        "warnings": model.warnings,
    });
    write_json(&out.join("log.json"), &log)?;
    write_json(&out.join("timing.json"), &json!({ "offline_decompose_seconds": seconds }))?;
    if !model.converged {
        return Err(CliError {
            code: EXIT_NOT_CONVERGED,
            kind: "not_converged",
            message: format!(
                "decomposition stopped at m = {} with max node error {:.3e} (eps2 {:.1e})",
                model.rank(),
                model.max_node_error(),
                cfg.hopgd.eps2
            ),
            details: log,
        });
    }
    Ok(json!({ "model": out, "rank": model.rank(), "max_node_error": model.max_node_error(),
        "converged": true, "offline_decompose_seconds": seconds }))
}

/// Model directory plus the run config saved next to it, if any.
fn load_model(dir: &Path, args: &ConfigArgs) -> CliResult<(SeparatedModel, RunConfig)> {
    let model = SeparatedModel::read_dir(dir)?;
    let saved = dir.join("config.json");
    let base = if saved.exists() { Some(RunConfig::read(&saved)?) } else { None };
    Ok((model, args.resolve(base)?))
}

pub fn eval(
    model_dir: &Path,
    args: &ConfigArgs,
    mu: (f64, f64),
    reference: bool,
    out: Option<&Path>,
) -> CliResult<Value> {
    let (model, cfg) = load_model(model_dir, args)?;
    let im = interpolate_model(&model)?;
    let t0 = Instant::now();
    let x = rom_eval(&im, mu.0, mu.1)?;
    let online = t0.elapsed().as_secs_f64();
    if let Some(path) = out {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        write_vector(path, &x)?;
    }
    let mut report = json!({
        "mu1": mu.0, "mu2": mu.1, "n": x.len(), "rank": im.rank(),
        "online_seconds": online,
    });
    if reference {
        let p = cfg.build_problem()?;
        let t1 = Instant::now();
        let x_ref = p.direct_reference_solve(mu.0, mu.1)?;
        let direct = t1.elapsed().as_secs_f64();
        let e = relative_error(&x, &x_ref)?;
        report["reference"] = json!({
            "rel_err": e,
            "class": classify(e),
            "direct_seconds": direct,
        });
        if let Some(path) = out {
            write_vector(&path.with_extension("ref.f64le"), &x_ref)?;
        }
    }
    Ok(report)
}

pub fn summarize_cells(cells: &[ErrorCell]) -> Value {
    let count = |c: ErrorClass| cells.iter().filter(|x| x.class() == Some(c)).count();
    let worst = cells.iter().filter_map(|c| c.rel_err).fold(0.0f64, f64::max);
    json!({
        "cells": cells.len(),
        "accurate": count(ErrorClass::Accurate),
        "reliable": count(ErrorClass::Reliable),
        "poor": count(ErrorClass::Poor),
        "failed": cells.iter().filter(|c| c.rel_err.is_none()).count(),
        "worst_rel_err": worst,
    })
}

pub fn errmap(model_dir: &Path, args: &ConfigArgs, grid: (usize, usize), out: Option<PathBuf>) -> CliResult<Value> {
    if grid.0 < 2 || grid.1 < 2 {
        return Err(CliError::input("error grid needs at least 2 points per axis"));
    }
    let (model, cfg) = load_model(model_dir, args)?;
    let out = out.unwrap_or_else(|| cfg.output.join("errmap.csv"));
    let p = cfg.build_problem()?;
    let im = interpolate_model(&model)?;
    let cells = error_grid(&im, &p, grid.0, grid.1);
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    write_error_csv(&cells, BufWriter::new(File::create(&out)?))?;
    let mut summary = summarize_cells(&cells);
    summary["csv"] = json!(out);
    Ok(summary)
}

#[derive(Debug, Clone, Default)]
pub struct EstimateArgs {
    pub observation: Option<PathBuf>,
    pub truth: Option<(f64, f64)>,
    pub noise: Option<f64>,
    pub runs: Option<usize>,
    pub shrink: Option<f64>,
}

pub struct EstimateOutcome {
    pub report: Value,
    pub runs: Vec<EstimationRun>,
}

/// Observation from a file, or synthesized at the truth with optional noise.
pub fn run_estimate(cfg: &RunConfig, extra: &EstimateArgs) -> CliResult<EstimateOutcome> {
    let mut cfg = cfg.clone();
    if extra.truth.is_some() {
        cfg.estimate.truth = extra.truth;
    }
    if let Some(v) = extra.noise {
        cfg.estimate.noise = v;
    }
    if let Some(v) = extra.runs {
        cfg.estimate.runs = v;
    }
    if let Some(v) = extra.shrink {
        cfg.estimate.shrink = v;
    }
    let p = cfg.build_problem()?;
    let param_box = cfg.resolve_box(&p)?;
    let truth = cfg.estimate.truth;
    let (x, source) = match (&extra.observation, truth) {
        (Some(path), _) => (read_vector(path)?, json!(path)),
        (None, Some((a, b))) => (p.direct_reference_solve(a, b)?, json!("synthetic")),
        (None, None) => return Err(CliError::input("estimate needs --observation or a truth to synthesize one")),
    };
    if x.len() != p.n() {
        return Err(Error::DimensionMismatch { expected: p.n(), actual: x.len(), context: "observation" }.into());
    }
    let x_obs = if cfg.estimate.noise > 0.0 { add_noise(&x, cfg.estimate.noise, cfg.seed) } else { x };
    let runs = refine_estimate(&p, &x_obs, &param_box, &cfg.refine_settings(), truth)?;
    let last = runs.last().expect("at least one run");
    let report = json!({
        "config": cfg,
        "observation": source,
        "truth": truth,
        "noise": cfg.estimate.noise,
        "seed": cfg.seed,
        "estimate": last.estimate,
        "rel_err_mu1": last.rel_err_mu1,
        "rel_err_mu2": last.rel_err_mu2,
        "runs": runs,
    });
    Ok(EstimateOutcome { report, runs })
}

pub fn timing_of(runs: &[EstimationRun]) -> Value {
    json!({
        "offline_seconds": runs.iter().map(|r| r.offline_seconds).sum::<f64>(),
        "online_seconds": runs.iter().map(|r| r.online_seconds).sum::<f64>(),
        "runs": runs.iter().map(|r| json!({ "run": r.run, "offline_seconds": r.offline_seconds,
            "online_seconds": r.online_seconds })).collect::<Vec<_>>(),
    })
}

pub fn estimate(cfg: &RunConfig, extra: &EstimateArgs, out: Option<PathBuf>) -> CliResult<Value> {
    let out = out.unwrap_or_else(|| cfg.output.join("estimate.json"));
    let outcome = run_estimate(cfg, extra)?;
    write_json(&out, &outcome.report)?;
    let timing = timing_of(&outcome.runs);
    write_json(&out.with_extension("timing.json"), &timing)?;
    let r = &outcome.report;
    Ok(json!({
        "report": out,
        "estimate": r["estimate"],
        "rel_err_mu1": r["rel_err_mu1"],
        "rel_err_mu2": r["rel_err_mu2"],
        "ranks": outcome.runs.iter().map(|r| r.m).collect::<Vec<_>>(),
        "timing": timing,
    }))
}
