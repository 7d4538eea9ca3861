//! Plain-text `key = value` configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Every key has a
//! default (see [`KEYS`]); unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::optim::TrainConfig;
use crate::portfolio::{EvalConfig, ExperimentConfig, MarketParams, NetworkSpec};
use crate::sensitivity::GradientSettings;
use crate::wiener::TimeGrid;

pub struct KeyDoc {
    pub key: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
}

const fn key(key: &'static str, default: &'static str, doc: &'static str) -> KeyDoc {
    KeyDoc { key, default, doc }
}

pub const KEYS: &[KeyDoc] = &[
    key("seed", "0", "base seed for training and evaluation paths"),
    key("init_seed", "1", "network initialization seed"),
    key(
        "scheme",
        "milstein",
        "forward scheme: milstein, euler_maruyama, euler_heun",
    ),
    // market
    key("alpha", "0.05", "proportional transaction cost"),
    key("r", "0.04", "interest rate"),
    key("mu", "0.23", "stock drift"),
    key("sigma", "0.18", "stock volatility"),
    key(
        "nu",
        "0,0.25,0.5,1",
        "comma-separated risk-aversion weights",
    ),
    key(
        "barrier_weight",
        "0.01",
        "solvency log-barrier weight (nu = 0 only)",
    ),
    key(
        "barrier_smoothing",
        "0.01",
        "quadratic continuation point of the barrier; 0 = pure log",
    ),
    key("horizon", "1", "time horizon T"),
    key("n_steps", "200", "time steps on [0, T]"),
    key("s0", "1", "initial stock holding"),
    key("v0", "0", "initial bank holding"),
    // network
    key("hidden_layers", "3", "hidden layers"),
    key("hidden_width", "32", "units per hidden layer"),
    key("hidden_activation", "tanh", "tanh, softplus or identity"),
    key(
        "output_activation",
        "softplus",
        "tanh, softplus or identity",
    ),
    // training
    key("iterations", "100", "training iterations"),
    key("batch_size", "50", "paths per iteration"),
    key("learning_rate", "0.03", "step size"),
    key(
        "lr_decay",
        "0",
        "step size at iteration k is lr / (1 + lr_decay k)",
    ),
    key("optimizer", "adam", "adam or sgd"),
    key("beta1", "0.9", "Adam first-moment decay"),
    key("beta2", "0.999", "Adam second-moment decay"),
    key("epsilon", "1e-8", "Adam denominator offset"),
    key("estimator", "adjoint", "adjoint, forward or fd"),
    key(
        "checkpoint_every",
        "0",
        "write a checkpoint every this many iterations; 0 = final only",
    ),
    key(
        "record_timing",
        "false",
        "fill the wall_ms log column (makes logs non-reproducible)",
    ),
    // evaluation
    key("eval_paths", "50", "evaluation paths for reported means"),
    key(
        "solvency_paths",
        "200",
        "evaluation paths for the solvency crossing fraction",
    ),
    key("traj_files", "5", "trajectory files written per nu"),
    key("grid_s_min", "0", "policy grid lower S"),
    key("grid_s_max", "3", "policy grid upper S"),
    key("grid_v_min", "-2", "policy grid lower V"),
    key("grid_v_max", "1", "policy grid upper V"),
    key("grid_resolution", "31", "policy grid points per axis"),
    // gradient check
    key("check_system", "gbm", "gbm or portfolio"),
    key("check_nu", "0.25", "nu of the portfolio gradient check"),
    key("check_steps", "1024", "time steps of the gradient check"),
    key("check_seeds", "20", "paths checked"),
    key("h_rel", "1e-5", "relative finite-difference step"),
    key("rel_tol", "1e-3", "max coordinate relative error"),
    key("min_cosine", "0.999", "min cosine similarity"),
    key(
        "magnitude_floor",
        "1e-8",
        "coordinates below this are not compared",
    ),
    key(
        "relative_floor",
        "1e-6",
        "coordinates below this fraction of the largest entry are not compared",
    ),
    // convergence
    key("conv_mu", "0.23", "GBM drift of the convergence study"),
    key(
        "conv_sigma",
        "0.18",
        "GBM volatility of the convergence study",
    ),
    key("conv_x0", "1", "GBM initial value"),
    key(
        "conv_min_log2",
        "4",
        "coarsest grid is 2^conv_min_log2 steps",
    ),
    key(
        "conv_max_log2",
        "10",
        "finest grid is 2^conv_max_log2 steps",
    ),
    key("conv_paths", "200", "paths per resolution"),
    key("order_band", "0.15", "allowed deviation of fitted orders"),
    key("rev_seeds", "100", "paths of the reversibility study"),
    key(
        "rev_min_log2",
        "6",
        "coarsest grid of the reversibility study",
    ),
    key(
        "rev_halvings",
        "4",
        "step halvings of the reversibility study",
    ),
    // simulate / policy-grid
    key(
        "checkpoint",
        "",
        "policy checkpoint for simulate and policy-grid",
    ),
    key("sim_paths", "3", "paths written by simulate"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckSystem {
    Gbm,
    Portfolio,
}

impl FromStr for CheckSystem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gbm" => Ok(CheckSystem::Gbm),
            "portfolio" => Ok(CheckSystem::Portfolio),
            other => Err(Error::Config(format!("unknown test system `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckConfig {
    pub system: CheckSystem,
    pub nu: f64,
    pub n_steps: usize,
    pub seeds: usize,
    pub settings: GradientSettings,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceConfig {
    pub mu: f64,
    pub sigma: f64,
    pub x0: f64,
    pub horizon: f64,
    pub min_log2: u32,
    pub max_log2: u32,
    pub paths: u64,
    pub order_band: f64,
    pub rev_seeds: u64,
    pub rev_min_log2: u32,
    pub rev_halvings: u32,
}

impl ConvergenceConfig {
    pub fn step_counts(&self) -> Vec<usize> {
        (self.min_log2..=self.max_log2)
            .map(|k| 1usize << k)
            .collect()
    }

    pub fn reversal_step_counts(&self) -> Vec<usize> {
        (0..=self.rev_halvings)
            .map(|k| 1usize << (self.rev_min_log2 + k))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub checkpoint: Option<PathBuf>,
    pub n_paths: usize,
}

#[derive(Debug, Clone)]
pub struct Config {
    raw: BTreeMap<&'static str, String>,
    pub experiment: ExperimentConfig,
    pub check: CheckConfig,
    pub convergence: ConvergenceConfig,
    pub simulate: SimulateConfig,
}

impl Default for Config {
    fn default() -> Self {
        let raw = KEYS
            .iter()
            .map(|k| (k.key, k.default.to_string()))
            .collect();
        Self::build(raw).expect("defaults parse")
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses `text`; `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            message: format!("line {line}: {message}"),
        };
        let mut raw: BTreeMap<&'static str, String> = KEYS
            .iter()
            .map(|k| (k.key, k.default.to_string()))
            .collect();
        let mut seen = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(i + 1, format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let known = lookup(k).ok_or_else(|| parse_err(i + 1, format!("unknown key `{k}`")))?;
            if seen.contains(&known) {
                return Err(parse_err(i + 1, format!("key `{k}` given twice")));
            }
            seen.push(known);
            raw.insert(known, v.to_string());
        }
        Self::build(raw).map_err(|e| match e {
            Error::Config(m) => Error::Parse {
                path: origin.to_path_buf(),
                message: m,
            },
            other => other,
        })
    }

    /// Overrides one key, re-validating the whole configuration.
    pub fn set(&mut self, k: &str, value: &str) -> Result<()> {
        let known = lookup(k).ok_or_else(|| Error::Config(format!("unknown key `{k}`")))?;
        let mut raw = self.raw.clone();
        raw.insert(known, value.trim().to_string());
        *self = Self::build(raw)?;
        Ok(())
    }

    pub fn get(&self, k: &str) -> Option<&str> {
        self.raw.get(k).map(String::as_str)
    }

    /// Every key with its effective value, in table order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let _ = writeln!(out, "{} = {}", k.key, self.raw[k.key]);
        }
        out
    }

    fn build(raw: BTreeMap<&'static str, String>) -> Result<Self> {
        let get = |k: &str| raw[k].as_str();
        let scheme = val(get, "scheme")?;
        let horizon: f64 = val(get, "horizon")?;
        let settings = GradientSettings {
            scheme,
            h_rel: val(get, "h_rel")?,
            rel_tol: val(get, "rel_tol")?,
            min_cosine: val(get, "min_cosine")?,
            magnitude_floor: val(get, "magnitude_floor")?,
            relative_floor: val(get, "relative_floor")?,
            ..GradientSettings::default()
        };
        let market = MarketParams {
            alpha: val(get, "alpha")?,
            r: val::<f64>(get, "r")?.into(),
            mu: val::<f64>(get, "mu")?.into(),
            sigma: val::<f64>(get, "sigma")?.into(),
            nu: 0.0,
            barrier_weight: val(get, "barrier_weight")?,
            barrier_smoothing: val(get, "barrier_smoothing")?,
            horizon,
            x0: [val(get, "s0")?, val(get, "v0")?],
        };
        market.validate()?;
        let nus = list(get("nu"), "nu")?;
        for &nu in &nus {
            market.with_nu(nu).validate()?;
        }
        let train = TrainConfig {
            grid: TimeGrid::new(0.0, horizon, val(get, "n_steps")?)?,
            batch_size: val(get, "batch_size")?,
            iterations: val(get, "iterations")?,
            base_seed: val(get, "seed")?,
            learning_rate: val(get, "learning_rate")?,
            lr_decay: val(get, "lr_decay")?,
            optimizer: val(get, "optimizer")?,
            beta1: val(get, "beta1")?,
            beta2: val(get, "beta2")?,
            epsilon: val(get, "epsilon")?,
            estimator: val(get, "estimator")?,
            gradient: settings,
            checkpoint_every: val(get, "checkpoint_every")?,
            record_timing: val(get, "record_timing")?,
        };
        train.validate()?;
        let experiment = ExperimentConfig {
            market,
            nus,
            network: NetworkSpec {
                hidden_layers: val(get, "hidden_layers")?,
                hidden_width: val(get, "hidden_width")?,
                hidden_activation: val(get, "hidden_activation")?,
                output_activation: val(get, "output_activation")?,
                init_seed: val(get, "init_seed")?,
            },
            train,
            eval: EvalConfig {
                eval_paths: val(get, "eval_paths")?,
                solvency_paths: val(get, "solvency_paths")?,
                traj_files: val(get, "traj_files")?,
                grid_s: (val(get, "grid_s_min")?, val(get, "grid_s_max")?),
                grid_v: (val(get, "grid_v_min")?, val(get, "grid_v_max")?),
                grid_resolution: val(get, "grid_resolution")?,
            },
        };
        let check = CheckConfig {
            system: val(get, "check_system")?,
            nu: val(get, "check_nu")?,
            n_steps: val(get, "check_steps")?,
            seeds: val(get, "check_seeds")?,
            settings,
        };
        let convergence = ConvergenceConfig {
            mu: val(get, "conv_mu")?,
            sigma: val(get, "conv_sigma")?,
            x0: val(get, "conv_x0")?,
            horizon,
            min_log2: val(get, "conv_min_log2")?,
            max_log2: val(get, "conv_max_log2")?,
            paths: val(get, "conv_paths")?,
            order_band: val(get, "order_band")?,
            rev_seeds: val(get, "rev_seeds")?,
            rev_min_log2: val(get, "rev_min_log2")?,
            rev_halvings: val(get, "rev_halvings")?,
        };
        if convergence.min_log2 >= convergence.max_log2 || convergence.max_log2 > 24 {
            return Err(Error::Config(
                "need conv_min_log2 < conv_max_log2 <= 24".into(),
            ));
        }
        if convergence.rev_min_log2 + convergence.rev_halvings > 24 {
            return Err(Error::Config("reversibility grid too fine".into()));
        }
        let checkpoint = get("checkpoint");
        let simulate = SimulateConfig {
            checkpoint: (!checkpoint.is_empty()).then(|| PathBuf::from(checkpoint)),
            n_paths: val(get, "sim_paths")?,
        };
        Ok(Self {
            raw,
            experiment,
            check,
            convergence,
            simulate,
        })
    }
}

fn lookup(k: &str) -> Option<&'static str> {
    KEYS.iter().find(|d| d.key == k).map(|d| d.key)
}

fn val<'a, T>(get: impl Fn(&str) -> &'a str, k: &str) -> Result<T>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    let s = get(k);
    s.parse()
        .map_err(|e| Error::Config(format!("key `{k}`: cannot parse `{s}`: {e}")))
}

fn list(s: &str, k: &str) -> Result<Vec<f64>> {
    let out = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("key `{k}`: cannot parse `{p}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("key `{k}`: values must be finite")));
    }
    Ok(out)
}
