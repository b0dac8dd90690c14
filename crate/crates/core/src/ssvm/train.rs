//! One-slack margin-rescaling cutting-plane training.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::inference::{loss_augmented_infer, InferenceConfig, DEFAULT_CAP};
use super::qp::{Constraint, WorkingSetQp};
use super::{label_loss, vocabulary_hash, Mode, SsvmModel, WeightLayout, WeightVector};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::features::MrfInstance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub c: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub mode: Mode,
    pub cap: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epsilon: 1e-3,
            max_iterations: 500,
            mode: Mode::Continuous,
            cap: DEFAULT_CAP,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn inference(&self) -> InferenceConfig {
        InferenceConfig {
            cap: self.cap,
            seed: self.seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::argument(format!("C must be positive, got {}", self.c)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::argument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(Error::argument("max_iterations must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    pub converged: bool,
    /// Violation of the last separation-oracle constraint.
    pub final_violation: f64,
    /// Working-set QP optimum after each solve.
    pub objective_trace: Vec<f64>,
    /// Violation of each newly found constraint.
    pub violations: Vec<f64>,
    pub xi: f64,
    pub wall_seconds: f64,
}

/// Trains weights on `instances` with per-instance true `labels`.
pub fn train_ssvm(
    instances: &[MrfInstance],
    labels: &[Vec<u8>],
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<(SsvmModel, TrainReport)> {
    config.validate()?;
    if instances.is_empty() {
        return Err(Error::argument("empty training set"));
    }
    if instances.len() != labels.len() {
        return Err(Error::argument(format!(
            "{} instances but {} label vectors",
            instances.len(),
            labels.len()
        )));
    }
    let shape = instances[0].shape;
    let layout = WeightLayout::new(config.mode, shape);
    for (inst, y) in instances.iter().zip(labels) {
        layout.check_labels(inst, y)?;
    }
    let started = Instant::now();
    let inf = config.inference();
    let n = instances.len() as f64;
    let mut w = WeightVector::zeros(layout);
    let mut xi = 0.0;
    let mut qp = WorkingSetQp::new(config.c)?;
    let mut report = TrainReport {
        iterations: 0,
        converged: false,
        final_violation: f64::INFINITY,
        objective_trace: Vec::new(),
        violations: Vec::new(),
        xi: 0.0,
        wall_seconds: 0.0,
    };

    for iteration in 1..=config.max_iterations {
        report.iterations = iteration;
        let parts: Vec<(Vec<(usize, f64)>, f64)> = instances
            .par_iter()
            .zip(labels.par_iter())
            .map(|(inst, y)| {
                let y_hat = loss_augmented_infer(inst, y, &w, &inf)?.labels;
                // psi(y) - psi(y_hat) = lifted(y_hat) - lifted(y).
                let mut entries = Vec::new();
                layout.for_each_lifted(inst, &y_hat, |i, x| entries.push((i, x)));
                layout.for_each_lifted(inst, y, |i, x| entries.push((i, -x)));
                Ok((entries, label_loss(y, &y_hat, config.mode)))
            })
            .collect::<Result<_>>()?;
        let mut a = vec![0.0; layout.dim()];
        let mut b = 0.0;
        for (entries, loss) in &parts {
            for &(i, x) in entries {
                a[i] += x;
            }
            b += loss;
        }
        a.iter_mut().for_each(|x| *x /= n);
        b /= n;

        let violation = b - w.dot(&a) - xi;
        report.violations.push(violation);
        report.final_violation = violation;
        if violation <= config.epsilon {
            report.converged = true;
            break;
        }
        qp.add(Constraint { a, b })?;
        let sol = qp.solve().map_err(|e| match e {
            Error::Numeric(m) => Error::Numeric(format!("iteration {iteration}: {m}")),
            other => other,
        })?;
        w.values = sol.w;
        xi = sol.xi;
        report.objective_trace.push(sol.dual_objective);
    }
    report.xi = xi;
    report.wall_seconds = started.elapsed().as_secs_f64();
    Ok((
        SsvmModel {
            weights: w,
            config: *config,
            vocabulary_hash: vocabulary_hash(vocab),
        },
        report,
    ))
}
