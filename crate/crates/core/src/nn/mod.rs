//! Differentiable layers used by the shallow transforms.

pub mod conv;
pub(crate) mod gemm;
pub mod igdn;

pub use conv::{
    conv_forward, conv_transpose_forward, conv_transpose_input_vjp, conv_transpose_vjp, conv_vjp,
    ConvGrads, ConvSpec,
};
pub use igdn::{gdn_forward, gdn_vjp, igdn_forward, igdn_vjp, IgdnGrads, IgdnSpec, BETA_FLOOR};
