//! Training library for fully connected networks with weight-distribution
//! dependent error-signal modulation (GRAPES), plus the experiment
//! harnesses built on it.
//!
//! The pieces, bottom to top:
//!
//! - [`matrix`] / [`rng`] — dense f64 kernels and a seeded deterministic
//!   random stream; every result is bit-reproducible per seed.
//! - [`network`] — bias-free fully connected forward pass with softmax
//!   output, cross-entropy, accuracy, inverted dropout.
//! - [`credit`] — error propagation under BP, FA, and DFA, with a
//!   modulation hook.
//! - [`grapes`] — node importance, modulation vectors, and their local or
//!   propagating application.
//! - [`optim`] — SGD, NAG, RMSprop with optional weight decay.
//! - [`data`] — IDX / CIFAR-10 loaders, pixel-permutation tasks,
//!   affine+elastic deformation.
//! - [`harness`] — training loop, plateau-curve fitting, catastrophic
//!   forgetting protocol, scalability sweeps, quantized-update experiments.

pub mod credit;
pub mod data;
pub mod error;
pub mod grapes;
pub mod harness;
pub mod matrix;
pub mod network;
pub mod optim;
pub mod rng;

pub use error::{Error, Result};
pub use matrix::{init_weights, InitScheme, Matrix};
pub use network::{accuracy, cross_entropy, forward, Activation, Mode, NetworkSpec, NetworkState};
pub use rng::RandomStream;
