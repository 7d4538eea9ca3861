use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;

use super::{batch_gradient, OptimizerKind, OptimizerState};
use crate::csvio::{fmt_f64, CsvWriter};
use crate::error::{Error, Result};
use crate::policy::DifferentiablePolicy;
use crate::sdecore::ControlledSystem;
use crate::sensitivity::{CostFunctional, Estimator, GradientSettings};
use crate::wiener::TimeGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub grid: TimeGrid,
    pub batch_size: usize,
    pub iterations: usize,
    pub base_seed: u64,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub estimator: Estimator,
    pub gradient: GradientSettings,
    /// Observer is called every this many iterations (0 = never).
    pub checkpoint_every: usize,
    /// Off by default so logs stay bit-reproducible.
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            grid: TimeGrid::new(0.0, 1.0, 200).expect("valid grid"),
            batch_size: 50,
            iterations: 100,
            base_seed: 0,
            learning_rate: 0.03,
            lr_decay: 0.0,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            estimator: Estimator::Adjoint,
            gradient: GradientSettings::default(),
            checkpoint_every: 0,
            record_timing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.iterations == 0 {
            return Err(Error::Config(
                "batch_size and iterations must be at least 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "invalid learning rate {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn optimizer_state(
        &self,
        direction: crate::sensitivity::Direction,
        n_params: usize,
    ) -> OptimizerState {
        let mut s = OptimizerState::new(self.optimizer, self.learning_rate, direction, n_params);
        s.lr_decay = self.lr_decay;
        s.beta1 = self.beta1;
        s.beta2 = self.beta2;
        s.epsilon = self.epsilon;
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    pub iteration: usize,
    /// Batch mean cost at the parameters before this iteration's update.
    pub mean_cost: f64,
    pub grad_norm: f64,
    pub n_diverged: usize,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    pub fn mean_costs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mean_cost).collect()
    }

    /// Columns: iteration, mean_cost, grad_norm, n_diverged, wall_ms.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvWriter::create(
            path,
            &[
                "iteration",
                "mean_cost",
                "grad_norm",
                "n_diverged",
                "wall_ms",
            ],
        )?;
        for r in &self.records {
            out.row(&[
                r.iteration.to_string(),
                fmt_f64(r.mean_cost),
                fmt_f64(r.grad_norm),
                r.n_diverged.to_string(),
                r.wall_ms.to_string(),
            ])?;
        }
        out.finish()
    }
}

pub fn train<S, P, C>(
    system: &S,
    policy: P,
    cost: &C,
    x0: &DVector<f64>,
    config: &TrainConfig,
) -> Result<(P, TrainLog)>
where
    S: ControlledSystem + ?Sized,
    P: DifferentiablePolicy + Clone,
    C: CostFunctional + ?Sized,
{
    train_with(system, policy, cost, x0, config, |_, _| Ok(()))
}

/// As [`train`], calling `observer(iterations_done, &policy)` every
/// `checkpoint_every` iterations.
pub fn train_with<S, P, C, F>(
    system: &S,
    mut policy: P,
    cost: &C,
    x0: &DVector<f64>,
    config: &TrainConfig,
    mut observer: F,
) -> Result<(P, TrainLog)>
where
    S: ControlledSystem + ?Sized,
    P: DifferentiablePolicy + Clone,
    C: CostFunctional + ?Sized,
    F: FnMut(usize, &P) -> Result<()>,
{
    config.validate()?;
    let mut state = config.optimizer_state(cost.direction(), policy.n_params());
    let mut log = TrainLog::default();
    for it in 0..config.iterations {
        let start = Instant::now();
        let batch = batch_gradient(system, &policy, cost, x0, config, it as u64)?;
        let theta = state.update(&policy.params(), &batch.grad)?;
        policy.set_params(&theta)?;
        log.records.push(TrainRecord {
            iteration: it,
            mean_cost: batch.mean_cost,
            grad_norm: batch.grad.norm(),
            n_diverged: batch.n_diverged,
            wall_ms: if config.record_timing {
                start.elapsed().as_millis() as u64
            } else {
                0
            },
        });
        if config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0 {
            observer(it + 1, &policy)?;
        }
    }
    Ok((policy, log))
}
