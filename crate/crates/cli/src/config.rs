//! Run configuration: one JSON document per invocation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use signshape::grid::FieldDescriptor;
use signshape::stochastic::{ManifestEntry, SamplerConfig};
use signshape::{make_grid, sample_field, DomainMask, GridSpec, OptimizerOptions, ScalarField};

use crate::CliError;

/// Reference printed by `--help`.
pub const CONFIG_HELP: &str = "\
CONFIG (JSON; defaults in brackets):
  grid        {d [2], side [1.0], n}                 n is required
  f           field descriptor                       [{\"kind\":\"constant\",\"c\":1.0}]
  g           field descriptor                       required by obstacle, optimize, radial, stochastic
  vol_bound   volume bound V                         [1.0]
  mask        {kind: full|ball|csv, ...}             [full]; ball: center, radius; csv: path
  mu          density field descriptor               optional; dirichlet uses it instead of mask
  solver      {tol [1e-10], max_iter [50n], omega [1.8]}
  optimizer   {beta_ladder [[1e3,1e4,1e5,1e6]], step [0.5], floor [10*tol*max(|g|_inf,1)], seed [0],
               stage_iters [60], threshold [0.5], polish_rounds [400]}
  rearrange   {bins [64]}
  ensemble    {manifest: [{weight, field_descriptor}]} or {sampler: {f0, sigma, count, seed}}

Field descriptors: constant{c}, indicator_ball{center, radius, inside_value, outside_value},
radial_table{samples, center?}, gaussian{center, sigma, amplitude}, csv{path}.
Relative csv paths are resolved against the config file's directory.";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "two")]
    pub d: usize,
    #[serde(default = "one")]
    pub side: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: Option<usize>,
    pub omega: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: signshape::poisson::DEFAULT_TOL,
            max_iter: None,
            omega: 1.8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub beta_ladder: Vec<f64>,
    pub step: f64,
    /// Positivity floor for obstacle active sets.
    pub floor: Option<f64>,
    /// Recorded for provenance; the optimizer itself is deterministic.
    pub seed: u64,
    pub stage_iters: usize,
    pub threshold: f64,
    pub polish_rounds: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let o = OptimizerOptions::<f64>::default();
        Self {
            beta_ladder: o.beta_ladder,
            step: o.step,
            floor: None,
            seed: 0,
            stage_iters: o.stage_iters,
            threshold: o.threshold,
            polish_rounds: o.polish_rounds,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RearrangeConfig {
    pub bins: usize,
}

impl Default for RearrangeConfig {
    fn default() -> Self {
        Self { bins: 64 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskConfig {
    #[default]
    Full,
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Csv {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EnsembleConfig {
    Manifest(Vec<ManifestEntry<f64>>),
    Sampler(SamplerConfig<f64>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    #[serde(default = "unit_field")]
    pub f: FieldDescriptor<f64>,
    #[serde(default)]
    pub g: Option<FieldDescriptor<f64>>,
    #[serde(default = "one")]
    pub vol_bound: f64,
    #[serde(default)]
    pub mask: MaskConfig,
    #[serde(default)]
    pub mu: Option<FieldDescriptor<f64>>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub rearrange: RearrangeConfig,
    #[serde(default)]
    pub ensemble: Option<EnsembleConfig>,
}

fn two() -> usize {
    2
}

fn one() -> f64 {
    1.0
}

fn unit_field() -> FieldDescriptor<f64> {
    FieldDescriptor::Constant { c: 1.0 }
}

/// Tags a core error as a configuration problem at `key`.
fn at<T>(key: &str, r: signshape::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| match e {
        signshape::Error::NotConverged(_) | signshape::Error::Precondition(_) => CliError::Core(e),
        other => CliError::Config(format!("{key}: {other}")),
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("{path}: {}", e.into_inner()))
        })
    }

    /// Rewrites relative csv paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_desc = |d: &mut FieldDescriptor<f64>| {
            if let FieldDescriptor::Csv { path } = d {
                fix(path);
            }
        };
        fix_desc(&mut self.f);
        for d in [self.g.as_mut(), self.mu.as_mut()].into_iter().flatten() {
            fix_desc(d);
        }
        if let MaskConfig::Csv { path } = &mut self.mask {
            fix(path);
        }
        match &mut self.ensemble {
            Some(EnsembleConfig::Manifest(entries)) => entries.iter_mut().for_each(|e| fix_desc(&mut e.field_descriptor)),
            Some(EnsembleConfig::Sampler(s)) => fix_desc(&mut s.f0),
            None => {}
        }
    }

    pub fn grid(&self) -> Result<GridSpec, CliError> {
        at("grid", make_grid(self.grid.d, self.grid.side, self.grid.n))
    }

    pub fn f(&self, grid: &GridSpec) -> Result<ScalarField, CliError> {
        at("f", sample_field(&self.f, grid))
    }

    pub fn g_descriptor(&self) -> Result<&FieldDescriptor<f64>, CliError> {
        self.g.as_ref().ok_or_else(|| CliError::Config("g: missing field `g`".into()))
    }

    pub fn g(&self, grid: &GridSpec) -> Result<ScalarField, CliError> {
        at("g", sample_field(self.g_descriptor()?, grid))
    }

    pub fn mask(&self, grid: &GridSpec) -> Result<DomainMask, CliError> {
        Ok(match &self.mask {
            MaskConfig::Full => DomainMask::full(*grid),
            MaskConfig::Ball { center, radius } => {
                if center.len() < grid.d() || !(*radius > 0.0) {
                    return Err(CliError::Config(format!(
                        "mask: ball needs {} center coordinates and a positive radius",
                        grid.d()
                    )));
                }
                DomainMask::ball(*grid, [center[0], center.get(1).copied().unwrap_or(0.0)], *radius)
            }
            MaskConfig::Csv { path } => at("mask.path", signshape::io::read_mask(path, grid))?,
        })
    }

    pub fn tol(&self) -> Result<f64, CliError> {
        let tol = self.solver.tol;
        if tol > 0.0 && tol < 1.0 {
            Ok(tol)
        } else {
            Err(CliError::Config(format!("solver.tol: must lie in (0, 1), got {tol}")))
        }
    }

    pub fn optimizer_options(&self) -> Result<OptimizerOptions<f64>, CliError> {
        let o = &self.optimizer;
        if o.beta_ladder.is_empty() || o.beta_ladder.iter().any(|b| !(*b > 0.0)) {
            return Err(CliError::Config("optimizer.beta_ladder: must be non-empty and positive".into()));
        }
        if !(o.step > 0.0) {
            return Err(CliError::Config(format!("optimizer.step: must be positive, got {}", o.step)));
        }
        Ok(OptimizerOptions {
            beta_ladder: o.beta_ladder.clone(),
            step: o.step,
            stage_iters: o.stage_iters,
            tol: self.tol()?,
            threshold: o.threshold,
            polish_rounds: o.polish_rounds,
            ..OptimizerOptions::default()
        })
    }
}
