//! Optimizers: plain SGD, Nesterov accelerated gradient, RMSprop, each with
//! optional coupled (L2-in-gradient) weight decay.
//!
//! Modulated gradients enter here untouched: modulation happens upstream, so
//! every optimizer sees the same single modulation site. NAG uses the
//! velocity form v <- mu*v + g; W <- W - eta*(g + mu*v). RMSprop keeps an
//! exponential average of squared gradients and divides by sqrt(avg + eps).

use serde::{Deserialize, Serialize};

use crate::credit::GradientSet;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Nag,
    Rmsprop,
}

/// Hyperparameters for one optimizer instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// NAG momentum.
    pub momentum: f64,
    /// RMSprop squared-gradient decay.
    pub decay: f64,
    /// RMSprop denominator floor (inside the square root).
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> OptimizerConfig {
        OptimizerConfig {
            kind,
            learning_rate,
            momentum: 0.9,
            decay: 0.9,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rmsprop decay must be in (0, 1), got {}",
                self.decay
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidArgument("weight decay must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-layer auxiliary buffers: velocity (NAG) or squared-gradient average
/// (RMSprop); empty for plain SGD.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    aux: Vec<Matrix>,
}

impl OptimizerState {
    pub fn new(weights: &[Matrix], config: &OptimizerConfig) -> OptimizerState {
        let aux = match config.kind {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::Nag | OptimizerKind::Rmsprop => weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
        };
        OptimizerState { aux }
    }
}

/// Compute the per-layer update matrices (the amount subtracted from each
/// weight matrix), advancing the optimizer state.
///
/// Split from [`apply_updates`] so callers can transform the update (e.g.
/// quantize it) before application.
pub fn compute_updates(
    weights: &[Matrix],
    grads: &GradientSet,
    config: &OptimizerConfig,
    state: &mut OptimizerState,
) -> Result<Vec<Matrix>> {
    config.validate()?;
    if grads.grads.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} gradient layers for {} weight layers",
            grads.grads.len(),
            weights.len()
        )));
    }
    let eta = config.learning_rate;
    let mut updates = Vec::with_capacity(weights.len());
    for (l, (w, g_raw)) in weights.iter().zip(grads.grads.iter()).enumerate() {
        if g_raw.shape() != w.shape() {
            return Err(Error::ShapeMismatch(format!(
                "gradient {:?} vs weights {:?} at layer {l}",
                g_raw.shape(),
                w.shape()
            )));
        }
        let g = if config.weight_decay > 0.0 {
            g_raw.add(&w.scale(config.weight_decay))?
        } else {
            g_raw.clone()
        };
        let update = match config.kind {
            OptimizerKind::Sgd => g.scale(eta),
            OptimizerKind::Nag => {
                let v = state.aux[l].scale(config.momentum).add(&g)?;
                let update = g.add(&v.scale(config.momentum))?.scale(eta);
                state.aux[l] = v;
                update
            }
            OptimizerKind::Rmsprop => {
                let sq = state.aux[l]
                    .scale(config.decay)
                    .add(&g.hadamard(&g)?.scale(1.0 - config.decay))?;
                let update = div_sqrt(&g, &sq, config.epsilon).scale(eta);
                state.aux[l] = sq;
                update
            }
        };
        updates.push(update);
    }
    Ok(updates)
}

/// g / sqrt(sq + eps), elementwise.
fn div_sqrt(g: &Matrix, sq: &Matrix, eps: f64) -> Matrix {
    let mut out = g.clone();
    for (o, s) in out.data_mut().iter_mut().zip(sq.data().iter()) {
        *o /= (s + eps).sqrt();
    }
    out
}

/// Subtract each update from the matching weight matrix.
pub fn apply_updates(weights: &mut [Matrix], updates: &[Matrix]) -> Result<()> {
    if updates.len() != weights.len() {
        return Err(Error::ShapeMismatch("update/weight layer count".into()));
    }
    for (w, u) in weights.iter_mut().zip(updates.iter()) {
        *w = w.sub(u)?;
    }
    Ok(())
}

/// One optimization step: compute updates and apply them.
pub fn step(
    weights: &mut [Matrix],
    grads: &GradientSet,
    config: &OptimizerConfig,
    state: &mut OptimizerState,
) -> Result<()> {
    let updates = compute_updates(weights, grads, config, state)?;
    apply_updates(weights, &updates)
}
