//! Node importance and error-signal modulation.
//!
//! Each hidden node gets an importance score from the magnitude of its
//! connected weights: the sum of absolute incoming weights (postsynaptic
//! grouping) or of absolute outgoing weights into the next layer
//! (presynaptic grouping, used with DFA where error dimensionality differs).
//! Importance is normalized per layer, scaled to a ceiling, and
//! lower-bounded at 1 to form the modulation vector that amplifies the
//! error signal of high-responsibility nodes.
//!
//! Two application modes: `Local` scales only the layer's own weight-update
//! rows; `Propagating` (the default) folds the modulation into the layer's
//! pre-activation error so it also compounds into every upstream layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::NetworkState;

/// Numerical threshold below which a layer's importance is treated as
/// all-zero and the modulation degenerates to neutral (all ones).
const DEGENERATE_IMPORTANCE: f64 = 1e-12;

/// How modulation enters the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrapesMode {
    /// No modulation; plain credit assignment.
    Off,
    /// Row-wise scaling of each hidden layer's weight-update matrix only.
    Local,
    /// Modulation folded into the pre-activation error before upstream
    /// propagation and the layer's own outer product.
    #[default]
    Propagating,
}

/// Which weights define a node's importance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    /// Sum of absolute incoming weights (rows of the layer's own matrix).
    #[default]
    Postsynaptic,
    /// Sum of absolute outgoing weights (columns of the next layer's matrix).
    Presynaptic,
}

/// Modulation configuration. The modulation vectors are refreshed from the
/// current weights once per mini-batch, after the parameter update.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrapesConfig {
    pub mode: GrapesMode,
    pub grouping: Grouping,
    /// Upper end of the modulation range [1, ceiling].
    pub ceiling: f64,
    /// Diagnostic: pin every modulation vector to 1 while still exercising
    /// the full modulated code path.
    pub force_neutral: bool,
}

impl Default for GrapesConfig {
    fn default() -> Self {
        GrapesConfig {
            mode: GrapesMode::default(),
            grouping: Grouping::default(),
            ceiling: 2.0,
            force_neutral: false,
        }
    }
}

impl GrapesConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ceiling > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "modulation ceiling must exceed 1, got {}",
                self.ceiling
            )));
        }
        Ok(())
    }

    pub fn active(&self) -> bool {
        self.mode != GrapesMode::Off
    }
}

/// Per-hidden-layer importance and modulation vectors, plus the epoch/batch
/// at which they were last refreshed.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationState {
    pub importance: Vec<Vec<f64>>,
    pub modulation: Vec<Vec<f64>>,
    pub epoch: usize,
    pub batch: usize,
}

impl ModulationState {
    /// Modulation vector for hidden layer `l` (0-based).
    pub fn layer(&self, l: usize) -> &[f64] {
        &self.modulation[l]
    }

    pub fn hidden_layers(&self) -> usize {
        self.modulation.len()
    }

    /// Mean over every entry of every hidden layer's modulation vector.
    pub fn global_mean(&self) -> f64 {
        let total: f64 = self.modulation.iter().flatten().sum();
        let count: usize = self.modulation.iter().map(|m| m.len()).sum();
        if count == 0 {
            1.0
        } else {
            total / count as f64
        }
    }
}

/// Importance of each postsynaptic node: sum of absolute incoming weights,
/// one value per row of `w`.
pub fn importance_postsynaptic(w: &Matrix) -> Vec<f64> {
    (0..w.rows())
        .map(|r| w.row(r).iter().map(|v| v.abs()).sum())
        .collect()
}

/// Importance of each presynaptic node of `w_next`: sum of absolute outgoing
/// weights, one value per column.
pub fn importance_presynaptic(w_next: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; w_next.cols()];
    for r in 0..w_next.rows() {
        for (acc, v) in out.iter_mut().zip(w_next.row(r).iter()) {
            *acc += v.abs();
        }
    }
    out
}

/// Normalize importance by its max, scale by `ceiling`, and lower-bound at 1.
///
/// All-zero (or vanishing) importance degenerates to the neutral vector.
pub fn modulation_from_importance(importance: &[f64], ceiling: f64) -> Result<Vec<f64>> {
    if let Some(bad) = importance.iter().find(|v| **v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "importance entries must be finite and non-negative, got {bad}"
        )));
    }
    let max = importance.iter().cloned().fold(0.0f64, f64::max);
    if max <= DEGENERATE_IMPORTANCE {
        return Ok(vec![1.0; importance.len()]);
    }
    // Normalize first: the argmax node's ratio is exactly 1, so its
    // modulation is exactly the ceiling.
    Ok(importance
        .iter()
        .map(|&i| (ceiling * (i / max)).max(1.0))
        .collect())
}

/// Row-wise modulation of a weight-update matrix: row `n` (postsynaptic node
/// `n`) is scaled by `m[n]`, i.e. the Hadamard product with the modulation
/// vector tiled across the presynaptic dimension.
pub fn apply_local(grad: &Matrix, m: &[f64]) -> Result<Matrix> {
    if m.len() != grad.rows() {
        return Err(Error::ShapeMismatch(format!(
            "modulation vector length {} vs {} update rows",
            m.len(),
            grad.rows()
        )));
    }
    grad.scale_rows(m)
}

/// Recompute importance and modulation for every hidden layer from the
/// current weights. The output layer gets no modulation.
pub fn refresh(state: &NetworkState, config: &GrapesConfig) -> Result<ModulationState> {
    config.validate()?;
    let hidden = state.spec.hidden_layers();
    let mut importance = Vec::with_capacity(hidden);
    let mut modulation = Vec::with_capacity(hidden);
    for l in 0..hidden {
        let imp = match config.grouping {
            Grouping::Postsynaptic => importance_postsynaptic(&state.weights[l]),
            Grouping::Presynaptic => importance_presynaptic(&state.weights[l + 1]),
        };
        let m = if config.force_neutral {
            vec![1.0; imp.len()]
        } else {
            modulation_from_importance(&imp, config.ceiling)?
        };
        importance.push(imp);
        modulation.push(m);
    }
    Ok(ModulationState {
        importance,
        modulation,
        epoch: 0,
        batch: 0,
    })
}

/// Summary of one layer's modulation vector for dynamics logging.
#[derive(Debug, Clone, Serialize)]
pub struct ModulationLayerStats {
    pub layer: usize,
    pub mean: f64,
    pub std: f64,
    /// Counts over `HISTOGRAM_BINS` equal bins spanning [1, ceiling].
    pub histogram: Vec<u32>,
}

pub const HISTOGRAM_BINS: usize = 10;

/// Per-layer mean/std/histogram of the modulation factors.
pub fn modulation_stats(state: &ModulationState, ceiling: f64) -> Vec<ModulationLayerStats> {
    state
        .modulation
        .iter()
        .enumerate()
        .map(|(layer, m)| {
            let n = m.len() as f64;
            let mean = m.iter().sum::<f64>() / n;
            let var = m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let mut histogram = vec![0u32; HISTOGRAM_BINS];
            let span = (ceiling - 1.0).max(f64::MIN_POSITIVE);
            for &v in m {
                let bin = (((v - 1.0) / span) * HISTOGRAM_BINS as f64) as usize;
                histogram[bin.min(HISTOGRAM_BINS - 1)] += 1;
            }
            ModulationLayerStats {
                layer,
                mean,
                std: var.sqrt(),
                histogram,
            }
        })
        .collect()
}
