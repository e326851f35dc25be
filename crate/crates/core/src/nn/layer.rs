use serde::{Deserialize, Serialize};

use crate::activation::{AsauParams, BaselineKind};
use crate::error::Result;

/// Whether one `(a, b, alpha, beta)` quadruple serves a whole layer or one is
/// kept per feature channel (axis 1 of the batched tensor).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    #[default]
    PerLayer,
    PerChannel,
}

/// Which of `(a, b, alpha, beta)` receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsauMask {
    pub a: bool,
    pub b: bool,
    pub alpha: bool,
    pub beta: bool,
}

impl Default for AsauMask {
    /// Smoothness adapts, the approximated slopes stay put.
    fn default() -> Self {
        Self {
            a: false,
            b: false,
            alpha: true,
            beta: true,
        }
    }
}

impl AsauMask {
    pub const ALL: AsauMask = AsauMask {
        a: true,
        b: true,
        alpha: true,
        beta: true,
    };
    pub const NONE: AsauMask = AsauMask {
        a: false,
        b: false,
        alpha: false,
        beta: false,
    };

    pub fn as_array(&self) -> [bool; 4] {
        [self.a, self.b, self.alpha, self.beta]
    }

    pub fn from_array(v: [bool; 4]) -> Self {
        Self {
            a: v[0],
            b: v[1],
            alpha: v[2],
            beta: v[3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationSpec {
    Baseline {
        kind: BaselineKind,
        /// Only meaningful for kinds that carry a slope.
        trainable_slope: bool,
    },
    Asau {
        params: AsauParams,
        trainable: AsauMask,
        granularity: Granularity,
    },
}

impl ActivationSpec {
    pub fn relu() -> Self {
        ActivationSpec::Baseline {
            kind: BaselineKind::Relu,
            trainable_slope: false,
        }
    }

    pub fn leaky_relu() -> Self {
        ActivationSpec::Baseline {
            kind: BaselineKind::leaky_relu(),
            trainable_slope: false,
        }
    }

    pub fn prelu(init: f64) -> Self {
        ActivationSpec::Baseline {
            kind: BaselineKind::Prelu { slope: init },
            trainable_slope: true,
        }
    }

    pub fn mish() -> Self {
        ActivationSpec::Baseline {
            kind: BaselineKind::Mish,
            trainable_slope: false,
        }
    }

    pub fn asau(params: AsauParams) -> Self {
        ActivationSpec::Asau {
            params,
            trainable: AsauMask::default(),
            granularity: Granularity::PerLayer,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ActivationSpec::Baseline { kind, .. } => kind.validate(),
            ActivationSpec::Asau { params, .. } => params.validate(),
        }
    }

    /// Short row label used in comparison tables.
    pub fn label(&self) -> &'static str {
        match self {
            ActivationSpec::Baseline { kind, trainable_slope } => match kind {
                BaselineKind::Relu => "ReLU",
                BaselineKind::LeakyRelu { .. } if *trainable_slope => "PReLU",
                BaselineKind::LeakyRelu { .. } => "LReLU",
                BaselineKind::Prelu { .. } if *trainable_slope => "PReLU",
                BaselineKind::Prelu { .. } => "LReLU",
                BaselineKind::Mish => "Mish",
            },
            ActivationSpec::Asau { .. } => "ASAU",
        }
    }
}

/// Blueprint for one layer; [`crate::nn::Network::build`] turns a list of these
/// into a network with registered parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    /// 3x3 kernel, stride 1, zero padding 1.
    Conv2d {
        in_ch: usize,
        out_ch: usize,
    },
    MaxPool2x2,
    Flatten,
    /// Nearest-neighbour.
    Upsample2x,
    Activation(ActivationSpec),
}
