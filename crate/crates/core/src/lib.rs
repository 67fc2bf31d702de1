#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Differentially private training of feed-forward networks by weight
//! clipping with analytic per-layer gradient sensitivities, alongside the
//! per-sample gradient clipping baseline, a Rényi-DP accountant and a
//! clipping-bias laboratory.

pub mod accountant;
pub mod bias;
pub mod data;
pub mod error;
pub mod experiment;
pub mod layers;
pub mod optim;
pub mod rng;
pub mod sensitivity;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
pub use layers::{LayerSpec, LossSpec, ModelSpec, Params, Target};
pub use rng::RngState;
pub use tensor::Tensor;
