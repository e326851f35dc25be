//! Adaptive smooth activation units (ASAU) and the machinery to study them:
//! stable scalar kernels with analytic partials, convergence sweeps against
//! the exact maximum, a small sequential network stack with exact gradients,
//! Adam training with early stopping, classification and segmentation
//! metrics, and seeded toy datasets.

pub mod activation;
pub mod approx;
pub mod datasets;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod training;

pub use activation::{
    asau_forward, asau_pair, asau_partials, baseline_derivative, baseline_forward, exact_max2, param_mish,
    stable_softplus, AsauGrad, AsauParams, BaselineKind,
};
pub use error::{Error, Result};
pub use rng::SplitMix64;
pub use tensor::Tensor;
