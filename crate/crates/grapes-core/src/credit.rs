//! Credit assignment: per-layer pre-activation errors and weight gradients
//! under backpropagation, feedback alignment, and direct feedback alignment,
//! each with an optional modulation hook.
//!
//! Passing a `ModulationState` folds each hidden layer's modulation vector
//! into that layer's error before it is used — for BP/FA this is the
//! propagating mode (the scaled error also feeds the upstream layers); with
//! DFA each layer's error comes straight from the output, so the scaling
//! stays per-layer by construction. Local-mode callers pass `None` here and
//! scale the finished gradients instead.

use crate::error::{Error, Result};
use crate::grapes::ModulationState;
use crate::matrix::{init_weights, Matrix};
use crate::network::{ForwardTrace, NetworkSpec, NetworkState};
use crate::rng::RandomStream;

/// Feedback flavor: per-layer (FA) or straight-from-output (DFA).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackKind {
    Fa,
    Dfa,
}

/// Fixed random feedback matrices; never updated during training.
///
/// FA: `matrices[l]` mirrors the transpose shape of `weights[l+1]`.
/// DFA: `matrices[l]` maps the output error to hidden layer `l`'s width.
#[derive(Debug, Clone)]
pub struct FeedbackMatrices {
    pub kind: FeedbackKind,
    pub matrices: Vec<Matrix>,
}

impl FeedbackMatrices {
    /// Draw feedback matrices with the spec's init scheme (one per hidden
    /// layer, shallowest first).
    pub fn init(kind: FeedbackKind, spec: &NetworkSpec, rng: &mut RandomStream) -> Result<Self> {
        spec.validate()?;
        let sizes = &spec.layer_sizes;
        let hidden = spec.hidden_layers();
        let output = spec.output_size();
        let mut matrices = Vec::with_capacity(hidden);
        for l in 0..hidden {
            let (rows, cols) = match kind {
                // Replaces W[l+1]^T, which is (sizes[l+1] x sizes[l+2]).
                FeedbackKind::Fa => (sizes[l + 1], sizes[l + 2]),
                FeedbackKind::Dfa => (sizes[l + 1], output),
            };
            matrices.push(init_weights(rows, cols, spec.init_scheme, rng)?);
        }
        Ok(FeedbackMatrices { kind, matrices })
    }
}

/// Pre-activation errors, one per weight layer (shallowest first); the last
/// entry is the output-layer delta.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSet {
    pub deltas: Vec<Matrix>,
}

/// Weight gradients, shape-matched to the network's weight matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub grads: Vec<Matrix>,
}

/// Output-layer error for softmax + cross-entropy: (y - t) / batch_size.
/// The batch mean is folded in here so gradient magnitudes do not scale
/// with the batch size.
pub fn output_delta(y: &Matrix, targets: &Matrix) -> Result<Matrix> {
    let diff = y.sub(targets)?;
    Ok(diff.scale(1.0 / y.cols() as f64))
}

fn check_modulation(state: &NetworkState, modulation: Option<&ModulationState>) -> Result<()> {
    if let Some(m) = modulation {
        if m.hidden_layers() != state.spec.hidden_layers() {
            return Err(Error::ShapeMismatch(format!(
                "modulation covers {} hidden layers, network has {}",
                m.hidden_layers(),
                state.spec.hidden_layers()
            )));
        }
        for (l, v) in m.modulation.iter().enumerate() {
            if v.len() != state.spec.layer_sizes[l + 1] {
                return Err(Error::ShapeMismatch(format!(
                    "modulation vector {} has length {}, layer width is {}",
                    l,
                    v.len(),
                    state.spec.layer_sizes[l + 1]
                )));
            }
        }
    }
    Ok(())
}

/// Multiply each row of `delta` (one hidden node per row) by `m[row]`.
fn modulate_delta(delta: &Matrix, m: &[f64]) -> Result<Matrix> {
    delta.scale_rows(m)
}

/// Gate a hidden delta with the forward pass's dropout mask, if any.
fn apply_dropout_mask(delta: Matrix, trace: &ForwardTrace, layer: usize) -> Result<Matrix> {
    if trace.dropout_masks.is_empty() {
        Ok(delta)
    } else {
        delta.hadamard(&trace.dropout_masks[layer])
    }
}

fn backward_through(
    state: &NetworkState,
    trace: &ForwardTrace,
    out_delta: &Matrix,
    modulation: Option<&ModulationState>,
    feedback_up: impl Fn(usize, &Matrix) -> Result<Matrix>,
) -> Result<DeltaSet> {
    check_modulation(state, modulation)?;
    let layers = state.spec.weight_layers();
    let act = state.spec.hidden_activation;
    let mut deltas = vec![Matrix::zeros(0, 0); layers];
    // The output delta is never modulated.
    deltas[layers - 1] = out_delta.clone();
    for l in (0..layers - 1).rev() {
        let propagated = feedback_up(l, &deltas[l + 1])?;
        let fprime = trace.pre_activations[l].map(|v| act.derivative(v));
        let mut delta = propagated.hadamard(&fprime)?;
        delta = apply_dropout_mask(delta, trace, l)?;
        if let Some(m) = modulation {
            delta = modulate_delta(&delta, m.layer(l))?;
        }
        deltas[l] = delta;
    }
    Ok(DeltaSet { deltas })
}

/// Backpropagation deltas. With a modulation state, each hidden layer's
/// error is scaled before it feeds both its own gradient and the upstream
/// propagation.
pub fn bp_deltas(
    state: &NetworkState,
    trace: &ForwardTrace,
    out_delta: &Matrix,
    modulation: Option<&ModulationState>,
) -> Result<DeltaSet> {
    backward_through(state, trace, out_delta, modulation, |l, upper| {
        state.weights[l + 1].transpose().matmul(upper)
    })
}

/// Feedback-alignment deltas: fixed random B^l replaces W^(l+1)^T.
pub fn fa_deltas(
    state: &NetworkState,
    trace: &ForwardTrace,
    out_delta: &Matrix,
    feedback: &FeedbackMatrices,
    modulation: Option<&ModulationState>,
) -> Result<DeltaSet> {
    if feedback.kind != FeedbackKind::Fa {
        return Err(Error::InvalidArgument(
            "fa_deltas needs FA feedback matrices".into(),
        ));
    }
    backward_through(state, trace, out_delta, modulation, |l, upper| {
        feedback.matrices[l].matmul(upper)
    })
}

/// Direct-feedback-alignment deltas: every hidden layer receives the output
/// error through its own fixed random matrix.
pub fn dfa_deltas(
    state: &NetworkState,
    trace: &ForwardTrace,
    out_delta: &Matrix,
    feedback: &FeedbackMatrices,
    modulation: Option<&ModulationState>,
) -> Result<DeltaSet> {
    if feedback.kind != FeedbackKind::Dfa {
        return Err(Error::InvalidArgument(
            "dfa_deltas needs DFA feedback matrices".into(),
        ));
    }
    check_modulation(state, modulation)?;
    let layers = state.spec.weight_layers();
    let act = state.spec.hidden_activation;
    let mut deltas = vec![Matrix::zeros(0, 0); layers];
    deltas[layers - 1] = out_delta.clone();
    for l in 0..layers - 1 {
        let projected = feedback.matrices[l].matmul(out_delta)?;
        let fprime = trace.pre_activations[l].map(|v| act.derivative(v));
        let mut delta = projected.hadamard(&fprime)?;
        delta = apply_dropout_mask(delta, trace, l)?;
        if let Some(m) = modulation {
            delta = modulate_delta(&delta, m.layer(l))?;
        }
        deltas[l] = delta;
    }
    Ok(DeltaSet { deltas })
}

/// Batch-summed weight gradients: grads[l] = deltas[l] * h^(l-1)^T with
/// h^(-1) the input batch (the batch mean is already in the output delta).
pub fn grads_from_deltas(trace: &ForwardTrace, deltas: &DeltaSet) -> Result<GradientSet> {
    let mut grads = Vec::with_capacity(deltas.deltas.len());
    for (l, delta) in deltas.deltas.iter().enumerate() {
        let below = if l == 0 { &trace.input } else { &trace.post_activations[l - 1] };
        if delta.cols() != below.cols() {
            return Err(Error::ShapeMismatch(format!(
                "delta batch {} vs activation batch {} at layer {l}",
                delta.cols(),
                below.cols()
            )));
        }
        grads.push(delta.matmul(&below.transpose())?);
    }
    Ok(GradientSet { grads })
}
