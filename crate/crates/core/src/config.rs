//! Run configuration shared by the command line front end and the bindings.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{RefineSettings, RunPlan};
use crate::hopgd::{build_full_grid, build_sparse_cross, HopgdSettings, NodeKind, NodeSet};
use crate::krylov::SweepSettings;
use crate::params::ParamBox;
use crate::problems::{ProblemSpec, SplitProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePlan {
    pub kind: NodeKind,
    pub n1: usize,
    pub n2: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchors: Option<(f64, f64)>,
}

impl Default for NodePlan {
    fn default() -> Self {
        Self { kind: NodeKind::SparseCross, n1: 7, n2: 7, anchors: None }
    }
}

impl NodePlan {
    pub fn build(&self, param_box: &ParamBox) -> Result<NodeSet> {
        match self.kind {
            NodeKind::SparseCross => build_sparse_cross(param_box, self.n1, self.n2, self.anchors),
            NodeKind::FullGrid => build_full_grid(param_box, self.n1, self.n2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateConfig {
    pub runs: usize,
    pub plan: Vec<RunPlan>,
    pub shrink: f64,
    /// Standard deviation factor of the additive observation noise.
    pub noise: f64,
    /// Parameters used to synthesize the observation when no file is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<(f64, f64)>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        let r = RefineSettings::default();
        Self { runs: r.runs, plan: r.plan, shrink: r.shrink, noise: 0.0, truth: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    /// Defaults to the problem's own box.
    #[serde(rename = "box", skip_serializing_if = "Option::is_none")]
    pub param_box: Option<ParamBox>,
    pub nodes: NodePlan,
    pub sweep: SweepSettings,
    pub hopgd: HopgdSettings,
    pub estimate: EstimateConfig,
    /// Overrides the seeds of the sweep, decomposition and noise.
    pub seed: u64,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSpec { name: "helmholtz-sim1".into(), grid_n: 30, dt: None },
            param_box: None,
            nodes: NodePlan::default(),
            sweep: SweepSettings::default(),
            hopgd: HopgdSettings::default(),
            estimate: EstimateConfig::default(),
            seed: 0,
            output: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn build_problem(&self) -> Result<SplitProblem> {
        self.problem.build()
    }

    /// The configured box, checked against the problem box.
    pub fn resolve_box(&self, p: &SplitProblem) -> Result<ParamBox> {
        match self.param_box {
            None => Ok(p.param_box),
            Some(b) if b.is_subset_of(&p.param_box) => Ok(b),
            Some(b) => Err(Error::InvalidInput(format!(
                "box {b:?} is not inside the problem box {:?}",
                p.param_box
            ))),
        }
    }

    pub fn sweep_settings(&self) -> SweepSettings {
        SweepSettings { seed: self.seed, ..self.sweep.clone() }
    }

    pub fn hopgd_settings(&self) -> HopgdSettings {
        HopgdSettings { seed: self.seed, ..self.hopgd.clone() }
    }

    pub fn refine_settings(&self) -> RefineSettings {
        RefineSettings {
            runs: self.estimate.runs,
            plan: self.estimate.plan.clone(),
            shrink: self.estimate.shrink,
            sweep: self.sweep_settings(),
            hopgd: self.hopgd_settings(),
        }
    }
}
