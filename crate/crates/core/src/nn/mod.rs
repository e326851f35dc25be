//! Minimal sequential network stack with reverse-mode gradients.

mod checkpoint;
mod gradcheck;
mod layer;
mod network;
mod param;

pub use checkpoint::{from_checkpoint, to_checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{
    half_squared_error, numeric_grad_check, numeric_input_grad_check, rel_err, weighted_sum, GradCheckEntry,
    GradCheckReport, LossFn,
};
pub use layer::{ActivationSpec, AsauMask, Granularity, LayerSpec};
pub use network::{Cache, Network};
pub use param::{scalar_name, Param, ParamId, ParamRole, ParamStore};
