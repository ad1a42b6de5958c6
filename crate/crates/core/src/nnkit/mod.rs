//! Minimal differentiable-network engine: the fixed layer set an attention
//! U-Net needs, each with a hand-written backward pass.
//!
//! Layers are free functions over [`Tensor`]s. Forward passes take `&`
//! references and are pure; backward passes accumulate parameter gradients
//! into the tensors' gradient buffers and return the input gradient.

pub mod activation;
pub mod adam;
pub mod attention;
pub mod conv;
pub mod gradcheck;
pub mod init;
pub mod loss;
pub mod pool;
pub mod tconv;
pub mod tensor;

pub use activation::{activation, activation_backward, sigmoid, Activation};
pub use adam::AdamState;
pub use attention::{attention_gate, attention_gate_backward, AttentionParams, GateOutput};
pub use conv::{conv2d, conv2d_backward, LayerKind, LayerParams, Padding};
pub use init::{xavier_init, xavier_limit};
pub use loss::{dice_loss, dice_loss_backward, DEFAULT_SMOOTH};
pub use pool::{max_pool2, max_pool2_backward, PoolIndices};
pub use tconv::{transposed_conv2, transposed_conv2_backward};
pub use tensor::{Real, Tensor};
