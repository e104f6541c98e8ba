//! Desk-scale end-to-end runs through the same code paths as the
//! subcommands. Oracle-level checks (Chebyshev fit, pencil algebra, the
//! synthetic decomposition) live in the core acceptance tests.

use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};

use chebhopgd::config::{NodePlan, RunConfig};
use chebhopgd::hopgd::NodeKind;
use chebhopgd::problems::ProblemSpec;
use chebhopgd::rom::{interpolate_model, rom_eval};
use chebhopgd::hopgd::SeparatedModel;

use crate::args::ConfigArgs;
use crate::commands::{decompose, errmap, run_estimate, snapshots, timing_of, CliResult, EstimateArgs};

struct Check {
    name: &'static str,
    pass: bool,
    detail: Value,
}

fn config(name: &str, grid_n: usize, nodes: NodePlan, eps2: f64, out: &Path) -> RunConfig {
    let mut c = RunConfig {
        problem: ProblemSpec { name: name.into(), grid_n, dt: None },
        nodes,
        output: out.to_path_buf(),
        ..Default::default()
    };
    c.hopgd.eps2 = eps2;
    c
}

fn cross(n: usize) -> NodePlan {
    NodePlan { kind: NodeKind::SparseCross, n1: n, n2: n, anchors: None }
}

/// snapshots -> decompose -> errmap under `out`.
fn pipeline(cfg: &RunConfig, grid: usize) -> CliResult<(Value, Value)> {
    let snaps = cfg.output.join("snapshots");
    snapshots(cfg, &snaps)?;
    let model = decompose(&snaps, &ConfigArgs::default(), None)?;
    let map = errmap(&cfg.output.join("model"), &ConfigArgs::default(), (grid, grid), None)?;
    Ok((model, map))
}

fn ratio(v: &Value, key: &str) -> f64 {
    v[key].as_u64().unwrap_or(0) as f64 / v["cells"].as_u64().unwrap_or(1) as f64
}

fn end_to_end(out: &Path) -> CliResult<Check> {
    let cfg = config("advdiff", 999, cross(5), 1e-3, &out.join("advdiff"));
    let (model, map) = pipeline(&cfg, 20)?;
    let covered = ratio(&map, "accurate") + ratio(&map, "reliable");
    Ok(Check { name: "advection-diffusion cross, 20x20 errmap", pass: covered >= 0.9, detail: json!({ "model": model, "errmap": map }) })
}

fn full_grid(out: &Path) -> CliResult<Check> {
    let plan = NodePlan { kind: NodeKind::FullGrid, n1: 5, n2: 5, anchors: None };
    let cfg = config("helmholtz-sim2", 30, plan, 1e-3, &out.join("sim2_full"));
    let (model, map) = pipeline(&cfg, 10)?;
    let pass = map["worst_rel_err"].as_f64().is_some_and(|w| w < 0.06);
    Ok(Check { name: "full grid on sim2, 10x10 errmap", pass, detail: json!({ "model": model, "errmap": map }) })
}

fn estimation(out: &Path, name: &'static str, cfg: RunConfig, truth: (f64, f64), noise: f64, tol: (f64, f64)) -> CliResult<Check> {
    let extra = EstimateArgs { truth: Some(truth), noise: Some(noise), ..Default::default() };
    let outcome = run_estimate(&cfg, &extra)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(format!("{}.json", cfg.problem.name)), serde_json::to_vec_pretty(&outcome.report)?)?;
    let last = outcome.runs.last().expect("runs");
    let (e1, e2) = (last.rel_err_mu1.unwrap_or(f64::NAN), last.rel_err_mu2.unwrap_or(f64::NAN));
    let pass = e1 <= tol.0 && e2 <= tol.1;
    let detail = json!({ "estimate": last.estimate, "truth": truth, "rel_err_mu1": e1, "rel_err_mu2": e2,
        "timing": timing_of(&outcome.runs) });
    Ok(Check { name, pass, detail })
}

fn online_split(out: &Path) -> CliResult<Check> {
    let cfg = config("advdiff", 9999, cross(5), 1e-3, &out.join("advdiff_large"));
    let snaps = cfg.output.join("snapshots");
    snapshots(&cfg, &snaps)?;
    decompose(&snaps, &ConfigArgs::default(), None)?;
    let model = SeparatedModel::read_dir(&cfg.output.join("model"))?;
    let im = interpolate_model(&model)?;
    let p = cfg.build_problem()?;
    let points = [(0.05, 0.4), (0.13, 0.07), (0.27, 0.31), (0.38, 0.18), (0.46, 0.49)];
    let (mut online, mut direct) = (Vec::new(), Vec::new());
    for (a, b) in points {
        let t = Instant::now();
        rom_eval(&im, a, b)?;
        online.push(t.elapsed().as_secs_f64());
        let t = Instant::now();
        p.direct_reference_solve(a, b)?;
        direct.push(t.elapsed().as_secs_f64());
    }
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (on, di) = (median(online), median(direct));
    Ok(Check {
        name: "online vs direct at n = 9999",
        pass: di >= 10.0 * on,
        detail: json!({ "online_seconds": on, "direct_seconds": di, "speedup": di / on }),
    })
}

pub fn demo(out: &Path) -> CliResult<Value> {
    let t0 = Instant::now();
    let sim3 = config("helmholtz-sim3", 50, cross(7), 1e-3, out);
    let mut advdiff = config("advdiff", 999, cross(7), 1e-3, out);
    advdiff.seed = 0;
    let checks = vec![
        end_to_end(out)?,
        estimation(&out.join("estimate"), "noiseless estimation on sim3", sim3, (0.7, 0.3), 0.0, (0.01, 0.05))?,
        estimation(&out.join("estimate"), "noisy estimation on advdiff", advdiff, (0.2, 0.35), 1e-2, (0.1, 0.1))?,
        online_split(out)?,
        full_grid(out)?,
    ];
    for c in &checks {
        eprintln!("[{}] {}", if c.pass { "PASS" } else { "FAIL" }, c.name);
    }
    let report = json!({
        "checks": checks.iter().map(|c| json!({ "name": c.name, "pass": c.pass, "detail": c.detail })).collect::<Vec<_>>(),
        "passed": checks.iter().filter(|c| c.pass).count(),
        "total": checks.len(),
        "wall_seconds": t0.elapsed().as_secs_f64(),
    });
    std::fs::write(out.join("demo.json"), serde_json::to_vec_pretty(&report)?)?;
    Ok(report)
}
