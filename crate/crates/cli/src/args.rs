//! Flags that mirror `RunConfig` fields, applied on top of `--config`.

use std::path::PathBuf;

use clap::{Args, ValueEnum};

use chebhopgd::config::RunConfig;
use chebhopgd::hopgd::{NodeKind, PhiUpdate};
use chebhopgd::{ParamBox, Result};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NodeKindArg {
    Cross,
    Full,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PhiUpdateArg {
    NormalEquations,
    AsWritten,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// helmholtz-sim1 | helmholtz-sim2 | helmholtz-sim3 | advdiff
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub grid_n: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// `a1,b1,a2,b2`
    #[arg(long = "box", value_parser = parse_box)]
    pub param_box: Option<ParamBox>,
    #[arg(long, value_enum)]
    pub nodes: Option<NodeKindArg>,
    #[arg(long)]
    pub n1: Option<usize>,
    #[arg(long)]
    pub n2: Option<usize>,
    /// `mu1,mu2` anchor of a sparse cross
    #[arg(long, value_parser = parse_pair)]
    pub anchors: Option<(f64, f64)>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub eps1: Option<f64>,
    #[arg(long)]
    pub eps2: Option<f64>,
    #[arg(long)]
    pub max_modes: Option<usize>,
    #[arg(long)]
    pub max_inner: Option<usize>,
    #[arg(long, value_enum)]
    pub phi_update: Option<PhiUpdateArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let v = parse_list(s, 2)?;
    Ok((v[0], v[1]))
}

pub fn parse_box(s: &str) -> std::result::Result<ParamBox, String> {
    let v = parse_list(s, 4)?;
    ParamBox::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
}

fn parse_list(s: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got {}", v.len()));
    }
    Ok(v)
}

impl ConfigArgs {
    /// `base` (or the `--config` file when given) with the flags applied.
    pub fn resolve(&self, base: Option<RunConfig>) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::read(path)?,
            None => base.unwrap_or_default(),
        };
        self.apply(&mut c);
        Ok(c)
    }

    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = &self.problem {
            c.problem.name = v.clone();
        }
        if let Some(v) = self.grid_n {
            c.problem.grid_n = v;
        }
        if self.dt.is_some() {
            c.problem.dt = self.dt;
        }
        if self.param_box.is_some() {
            c.param_box = self.param_box;
        }
        if let Some(v) = self.nodes {
            c.nodes.kind = match v {
                NodeKindArg::Cross => NodeKind::SparseCross,
                NodeKindArg::Full => NodeKind::FullGrid,
            };
        }
        if let Some(v) = self.n1 {
            c.nodes.n1 = v;
        }
        if let Some(v) = self.n2 {
            c.nodes.n2 = v;
        }
        if self.anchors.is_some() {
            c.nodes.anchors = self.anchors;
        }
        if self.sigma.is_some() {
            c.sweep.sigma = self.sigma;
        }
        if let Some(v) = self.tol {
            c.sweep.tol = v;
        }
        if let Some(v) = self.k_max {
            c.sweep.k_max = v;
        }
        if let Some(v) = self.eps1 {
            c.hopgd.eps1 = v;
        }
        if let Some(v) = self.eps2 {
            c.hopgd.eps2 = v;
        }
        if let Some(v) = self.max_modes {
            c.hopgd.max_modes = v;
        }
        if let Some(v) = self.max_inner {
            c.hopgd.max_inner = v;
        }
        if let Some(v) = self.phi_update {
            c.hopgd.phi_update = match v {
                PhiUpdateArg::NormalEquations => PhiUpdate::NormalEquations,
                PhiUpdateArg::AsWritten => PhiUpdate::AsWritten,
            };
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.output {
            c.output = v.clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_defaults() {
        let a = ConfigArgs {
            problem: Some("advdiff".into()),
            grid_n: Some(99),
            param_box: Some(parse_box("0,0.5,0,0.4").unwrap()),
            nodes: Some(NodeKindArg::Full),
            eps2: Some(1e-4),
            phi_update: Some(PhiUpdateArg::AsWritten),
            seed: Some(3),
            ..Default::default()
        };
        let c = a.resolve(None).unwrap();
        assert_eq!(c.problem.name, "advdiff");
        assert_eq!(c.problem.grid_n, 99);
        assert_eq!(c.param_box.unwrap().mu2.hi, 0.4);
        assert_eq!(c.nodes.kind, NodeKind::FullGrid);
        assert_eq!(c.hopgd.eps2, 1e-4);
        assert_eq!(c.hopgd.phi_update, PhiUpdate::AsWritten);
        assert_eq!(c.seed, 3);
        assert_eq!(c.nodes.n1, 7);
    }

    #[test]
    fn bad_lists_are_rejected() {
        assert!(parse_pair("1").is_err());
        assert!(parse_pair("1,x").is_err());
        assert!(parse_box("1,0,0,1").is_err());
        assert_eq!(parse_pair(" 0.5, 2").unwrap(), (0.5, 2.0));
    }
}
