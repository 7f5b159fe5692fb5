use std::path::{Path, PathBuf};

use gsgd_core::fields::TiePolicy;
use gsgd_core::optimizer::{GsgdConfig, LionTau, Method, NoiseModel, Sampling};
use gsgd_core::problems::{
    make_counterexample, make_l1_regression, make_relu_net, FiniteSumProblem, Loss, Side,
    SyntheticRecipe,
};
use gsgd_core::schedules::StepsizeSchedule;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// One experiment: a problem, a method, a schedule and where to put the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub method: MethodBlock,
    pub schedule: StepsizeSchedule,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub sweep: Option<SweepBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `|2u + v| + |u + 10|`
    Counterexample {
        #[serde(default)]
        side: Side,
    },
    /// Either inline rows `a`, labels `b`, or a synthetic recipe.
    L1Regression {
        #[serde(default)]
        a: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        b: Option<Vec<f64>>,
        #[serde(default)]
        synthetic: Option<SyntheticRecipe>,
        #[serde(default)]
        side: Side,
    },
    /// One-hidden-layer network fitted to a synthetic regression set.
    ReluNet {
        hidden: usize,
        data: SyntheticRecipe,
        #[serde(default)]
        loss: Loss,
        #[serde(default)]
        c_relu: f64,
    },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Box<dyn FiniteSumProblem>, CliError> {
        match self {
            ProblemSpec::Counterexample { side } => Ok(Box::new(make_counterexample(*side))),
            ProblemSpec::L1Regression {
                a,
                b,
                synthetic,
                side,
            } => match (a, b, synthetic) {
                (Some(a), Some(b), None) => Ok(Box::new(make_l1_regression(a, b, *side)?)),
                (None, None, Some(recipe)) => {
                    let data = recipe.generate()?;
                    Ok(Box::new(make_l1_regression(&data.a, &data.b, *side)?))
                }
                _ => Err(CliError::Invalid(
                    "l1_regression needs either both `a` and `b` or a `synthetic` recipe".into(),
                )),
            },
            ProblemSpec::ReluNet {
                hidden,
                data,
                loss,
                c_relu,
            } => {
                let set = data.generate()?;
                let pairs: Vec<(Vec<f64>, f64)> = set.a.into_iter().zip(set.b).collect();
                Ok(Box::new(make_relu_net(
                    [data.dim, *hidden, 1],
                    &pairs,
                    *loss,
                    *c_relu,
                )?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodBlock {
    pub name: Method,
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub clip: Option<f64>,
    #[serde(default)]
    pub lion_tau: LionTau,
    #[serde(default)]
    pub tie: TiePolicy,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub m0: Option<Vec<f64>>,
    #[serde(default)]
    pub lyapunov_tau: Option<f64>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_probe_period() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_probe_period")]
    pub probe_period: usize,
    /// Kink radius of the stationarity probe.
    #[serde(default)]
    pub stationarity_radius: f64,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            dir: default_dir(),
            probe_period: default_probe_period(),
            stationarity_radius: 0.0,
        }
    }
}

/// Cartesian product of method seeds and schedule scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub seeds: Vec<u64>,
    #[serde(default = "unit_scale")]
    pub scales: Vec<f64>,
}

fn unit_scale() -> Vec<f64> {
    vec![1.0]
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    /// Output directory, honouring `GSGD_OUT`.
    pub fn out_dir(&self) -> PathBuf {
        match std::env::var_os("GSGD_OUT") {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output.dir.clone(),
        }
    }

    pub fn gsgd_config(&self) -> GsgdConfig {
        let m = &self.method;
        let mut cfg = GsgdConfig::new(m.name, self.schedule, m.horizon);
        cfg.alpha = m.alpha;
        cfg.clip = m.clip;
        cfg.lion_tau = m.lion_tau;
        cfg.tie = m.tie;
        cfg.noise = m.noise;
        cfg.sampling = m.sampling;
        cfg.seed = m.seed;
        cfg.x0 = m.x0.clone();
        cfg.m0 = m.m0.clone();
        cfg.lyapunov_tau = m.lyapunov_tau;
        cfg.probe_period = self.output.probe_period;
        cfg.stationarity_radius = self.output.stationarity_radius;
        cfg
    }

    /// Same experiment with another method seed and schedule scale.
    pub fn variant(&self, seed: u64, scale: f64) -> Result<Self, CliError> {
        let mut out = self.clone();
        out.method.seed = seed;
        out.schedule = out.schedule.with_scale(scale)?;
        out.sweep = None;
        Ok(out)
    }
}
