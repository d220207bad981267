//! Differentiable building blocks with hand-written reverse passes.
//!
//! Every layer keeps its parameters in a [`ParamStore`] and addresses them
//! by [`ParamId`]. Forward passes that feed a backward pass return a cache;
//! backward passes add parameter gradients into a [`Gradients`] buffer and
//! return the gradient with respect to their input.

mod activation;
mod attention;
mod conv1d;
mod diffusion;
mod gcn;
mod gradcheck;
mod graph;
mod gru;
mod linear;
mod lstm;
mod norm;
mod params;

pub use activation::Activation;
pub use attention::{self_attention, AttentionCache, SelfAttention};
pub use conv1d::{Conv1d, Conv1dCache};
pub use diffusion::{diffusion_conv, DiffusionCache, DiffusionConv};
pub use gcn::{GraphConv, GraphConvCache};
pub use gradcheck::{grad_check, grad_check_with, GradCheckReport, DEFAULT_REL_FLOOR};
pub use graph::{
    gcn_normalize, gcn_normalize_backward, gumbel_topk_neighbors, row_normalize, row_normalize_backward,
    top_k_excluding, GraphSample,
};
pub use gru::{gru_sequence, Gru, GruCache, GruLayer};
pub use linear::{linear, Linear};
pub use lstm::{Lstm, LstmCache};
pub use norm::{layer_norm, LayerNorm, LayerNormCache, LN_EPS};
pub use params::{Gradients, Init, Param, ParamId, ParamStore, Tensor};

pub(crate) use activation::{sigmoid, tanh};
