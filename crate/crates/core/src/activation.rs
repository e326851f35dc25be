//! Scalar kernels for the adaptive smooth activation unit (ASAU) and its
//! baselines.
//!
//! ASAU is a smooth stand-in for the two-argument maximum `max(a x, b x)`:
//!
//! ```text
//! asau(x) = a x + (b - a) x tanh(alpha * softplus(beta * (b - a) x))
//! ```
//!
//! As `beta` grows the nonlinear term approaches `max(0, (b - a) x)`, so the
//! unit converges to `max(a x, b x)`; `a = 0, b = 1` gives a smooth ReLU and
//! `a = slope, b = 1` a smooth leaky ReLU. The formula is evaluated exactly as
//! written, so it is not symmetric under swapping `a` and `b` even though the
//! maximum it approximates is.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four shape parameters of an ASAU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsauParams {
    /// Slope of the lower linear piece.
    pub a: f64,
    /// Slope of the upper linear piece.
    pub b: f64,
    /// Gain applied to the softplus inside `tanh`.
    pub alpha: f64,
    /// Sharpness; larger values approach the exact maximum.
    pub beta: f64,
}

impl Default for AsauParams {
    /// The ReLU-approximating regime `(0, 1, 1, 1)`.
    fn default() -> Self {
        Self {
            a: 0.0,
            b: 1.0,
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl AsauParams {
    pub fn new(a: f64, b: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = Self { a, b, alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a", self.a), ("b", self.b), ("alpha", self.alpha), ("beta", self.beta)] {
            if !v.is_finite() {
                return Err(Error::param(format!("ASAU parameter {name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.a, self.b, self.alpha, self.beta]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            a: v[0],
            b: v[1],
            alpha: v[2],
            beta: v[3],
        }
    }
}

/// Partial derivatives of [`asau_forward`] with respect to each argument.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AsauGrad {
    pub d_x: f64,
    pub d_a: f64,
    pub d_b: f64,
    pub d_alpha: f64,
    pub d_beta: f64,
}

impl AsauGrad {
    pub fn as_array(&self) -> [f64; 5] {
        [self.d_x, self.d_a, self.d_b, self.d_alpha, self.d_beta]
    }
}

/// Non-smooth (and Mish) reference activations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineKind {
    Relu,
    LeakyRelu { slope: f64 },
    Prelu { slope: f64 },
    Mish,
}

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

impl BaselineKind {
    pub fn leaky_relu() -> Self {
        BaselineKind::LeakyRelu {
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn slope(&self) -> Option<f64> {
        match *self {
            BaselineKind::LeakyRelu { slope } | BaselineKind::Prelu { slope } => Some(slope),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.slope() {
            Some(s) if !s.is_finite() => Err(Error::param(format!("slope must be finite, got {s}"))),
            _ => Ok(()),
        }
    }
}

/// `ln(1 + e^x)` without overflow: `x + ln(1 + e^-x)` for positive `x`.
#[inline]
pub fn stable_softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function, the derivative of [`stable_softplus`].
#[inline]
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `1 - tanh(y)^2`, computed as `1 / cosh(y)^2` so it keeps full relative
/// precision where `tanh` saturates.
#[inline]
fn sech2(y: f64) -> f64 {
    let c = y.cosh();
    if c.is_infinite() {
        0.0
    } else {
        1.0 / (c * c)
    }
}

/// `(tanh y, 1 - tanh y, sech^2 y)` from one exponential, each to full
/// relative precision: with `e = exp(-2|y|)` and `m = e - 1`,
/// `tanh|y| = -m / (2 + m)` and `sech^2 y = 4e / (1 + e)^2`. Whichever of
/// `e`, `m` is small gets computed directly.
#[inline]
fn tanh_parts(y: f64) -> (f64, f64, f64) {
    let w = -2.0 * y.abs();
    let (e, m) = if w < -std::f64::consts::LN_2 {
        let e = w.exp();
        (e, e - 1.0)
    } else {
        let m = w.exp_m1();
        (1.0 + m, m)
    };
    let t = -m / (2.0 + m);
    let q = 4.0 * e / ((1.0 + e) * (1.0 + e));
    if y >= 0.0 {
        (t, 2.0 * e / (1.0 + e), q)
    } else {
        (-t, 1.0 + t, q)
    }
}

/// `(softplus z, sigmoid z)` sharing one `exp`.
#[inline]
fn softplus_sigmoid(z: f64) -> (f64, f64) {
    let e = (-z.abs()).exp();
    let sp = z.max(0.0) + e.ln_1p();
    let sig = if z >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    (sp, sig)
}

#[inline]
pub fn exact_max2(x1: f64, x2: f64) -> f64 {
    if x1 >= x2 {
        x1
    } else {
        x2
    }
}

/// `x tanh(alpha * softplus(beta x))`; `alpha = beta = 1` is Mish.
#[inline]
pub fn param_mish(x: f64, alpha: f64, beta: f64) -> f64 {
    x * (alpha * stable_softplus(beta * x)).tanh()
}

/// Smooth `max(x1, x2)` built on the rewrite `x1 + max(0, x2 - x1)`.
#[inline]
pub fn asau_pair(x1: f64, x2: f64, alpha: f64, beta: f64) -> f64 {
    x1 + param_mish(x2 - x1, alpha, beta)
}

#[inline]
pub fn asau_forward(x: f64, p: &AsauParams) -> f64 {
    asau_pair(p.a * x, p.b * x, p.alpha, p.beta)
}

/// All five analytic partials of [`asau_forward`].
///
/// With `d = b - a`, `u = d x`, `s = softplus(beta u)`, `t = tanh(alpha s)`,
/// `q = sech^2(alpha s)` and `sig = sigmoid(beta u)`:
///
/// ```text
/// g'(u)    = t + u q alpha beta sig       (derivative of u t)
/// d/dx     = a + d g'(u)
/// d/da     = x (1 - g'(u))
/// d/db     = x g'(u)
/// d/dalpha = u q s
/// d/dbeta  = u^2 q alpha sig
/// ```
pub fn asau_partials(x: f64, p: &AsauParams) -> AsauGrad {
    let d = p.b - p.a;
    let u = d * x;
    let z = p.beta * u;
    let (s, sig) = softplus_sigmoid(z);
    let y = p.alpha * s;
    let (t, omt, q) = tanh_parts(y);
    let qs = q * p.alpha * sig;
    let g_prime = t + u * qs * p.beta;
    AsauGrad {
        d_x: p.a + d * g_prime,
        d_a: x * (omt - u * qs * p.beta),
        d_b: x * g_prime,
        d_alpha: u * q * s,
        d_beta: u * u * qs,
    }
}

pub fn baseline_forward(kind: BaselineKind, x: f64) -> f64 {
    match kind {
        BaselineKind::Relu => exact_max2(0.0, x),
        BaselineKind::LeakyRelu { slope } | BaselineKind::Prelu { slope } => {
            if x >= 0.0 {
                x
            } else {
                slope * x
            }
        }
        BaselineKind::Mish => param_mish(x, 1.0, 1.0),
    }
}

/// Derivative with respect to `x`. At the kink `x = 0` the right-hand
/// derivative (1) is returned.
pub fn baseline_derivative(kind: BaselineKind, x: f64) -> f64 {
    match kind {
        BaselineKind::Relu => {
            if x >= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        BaselineKind::LeakyRelu { slope } | BaselineKind::Prelu { slope } => {
            if x >= 0.0 {
                1.0
            } else {
                slope
            }
        }
        BaselineKind::Mish => {
            let s = stable_softplus(x);
            s.tanh() + x * sech2(s) * stable_sigmoid(x)
        }
    }
}

/// Derivative of a leaky/parametric ReLU with respect to its slope.
pub fn baseline_slope_derivative(x: f64) -> f64 {
    if x >= 0.0 {
        0.0
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(a: f64, b: f64, alpha: f64, beta: f64) -> AsauParams {
        AsauParams::new(a, b, alpha, beta).unwrap()
    }

    fn rel(x: f64, y: f64) -> f64 {
        if x == y {
            0.0
        } else {
            (x - y).abs() / x.abs().max(y.abs())
        }
    }

    #[test]
    fn tanh_parts_match_direct_forms() {
        for y in [
            -40.0, -3.0, -0.4, -1e-9, 0.0, 1e-12, 0.3, 0.34657, 0.35, 2.0, 17.0, 300.0,
        ] {
            let (t, omt, q) = tanh_parts(y);
            assert!(rel(t, f64::tanh(y)) < 4e-16, "tanh {y}");
            assert!(rel(q, sech2(y)) < 1e-15, "sech2 {y}");
            let direct = if y > 0.0 {
                2.0 / ((2.0 * y).exp() + 1.0)
            } else {
                1.0 - y.tanh()
            };
            assert!(rel(omt, direct) < 1e-15, "1 - tanh {y}");
        }
        assert_eq!(tanh_parts(800.0), (1.0, 0.0, 0.0));
    }

    #[test]
    fn softplus_sigmoid_match_separate_kernels() {
        for z in [-800.0, -30.0, -1.0, -1e-10, 0.0, 1e-10, 0.5, 30.0, 800.0] {
            let (sp, sig) = softplus_sigmoid(z);
            assert!(rel(sp, stable_softplus(z)) < 1e-15, "{z}");
            assert!(rel(sig, stable_sigmoid(z)) < 1e-15, "{z}");
        }
    }

    #[test]
    fn rejects_non_finite_params() {
        assert!(AsauParams::new(f64::NAN, 1.0, 1.0, 1.0).is_err());
        assert!(AsauParams::new(0.0, f64::INFINITY, 1.0, 1.0).is_err());
        assert!(AsauParams::new(0.0, 1.0, 1.0, f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn softplus_anchors() {
        assert!((stable_softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((stable_softplus(50.0) - 50.0).abs() < 1e-20);
        let small = stable_softplus(-50.0);
        assert!(((small - (-50.0f64).exp()) / small).abs() < 1e-12);
        assert!(stable_softplus(1e8).is_finite());
        assert!(stable_softplus(-1e8) >= 0.0);
    }

    #[test]
    fn exact_max_examples() {
        assert_eq!(exact_max2(3.0, 5.0), 5.0);
        assert_eq!(exact_max2(-2.0, -7.0), -2.0);
        assert_eq!(exact_max2(4.0, 4.0), 4.0);
    }

    #[test]
    fn param_mish_examples() {
        assert_eq!(param_mish(0.0, 2.5, 7.0), 0.0);
        assert_eq!(param_mish(3.0, 0.0, 7.0), 0.0);
        assert!((param_mish(1.0, 1.0, 1e4) - 1.0).abs() < 1e-6);
        // Standard Mish at x = 1: tanh(ln(1 + e)).
        let mish1 = (1.0f64 + 1.0f64.exp()).ln().tanh();
        assert!((param_mish(1.0, 1.0, 1.0) - mish1).abs() < 1e-15);
    }

    #[test]
    fn asau_pair_examples() {
        assert_eq!(asau_pair(1.7, 1.7, 0.3, 9.0), 1.7);
        assert_eq!(asau_pair(0.0, 2.2, 1.3, 4.0), param_mish(2.2, 1.3, 4.0));
        assert!((asau_pair(1.0, 3.0, 1.0, 1e4) - 3.0).abs() < 1e-5);
    }

    #[test]
    fn asau_forward_examples() {
        assert_eq!(asau_forward(0.0, &p(0.3, -1.2, 2.0, 5.0)), 0.0);
        assert_eq!(asau_forward(-1.5, &p(0.7, 0.7, 2.0, 5.0)), 0.7 * -1.5);
        // 2 tanh(ln(1 + e^2)) evaluated at 40 digits.
        let v = asau_forward(2.0, &p(0.0, 1.0, 1.0, 1.0));
        assert!((v - 1.943_958_959_533_994_5).abs() < 1e-12, "{v}");
    }

    #[test]
    fn origin_slope_is_three_fifths() {
        for beta in [0.1, 1.0, 10.0, 1e3, 1e4] {
            let g = asau_partials(0.0, &p(0.0, 1.0, 1.0, beta));
            assert!((g.d_x - 0.6).abs() < 1e-12, "beta {beta}: {}", g.d_x);
        }
    }

    #[test]
    fn alpha_partial_vanishes_at_origin() {
        for params in [p(0.0, 1.0, 1.0, 1.0), p(-1.0, 2.0, 0.4, 13.0), p(1.5, 1.5, 2.0, 0.1)] {
            assert_eq!(asau_partials(0.0, &params).d_alpha, 0.0);
        }
    }

    #[test]
    fn partials_survive_extreme_arguments() {
        for x in [-1e6, -50.0, 50.0, 1e6] {
            let g = asau_partials(x, &p(-2.0, 2.0, 3.0, 20.0));
            assert!(g.as_array().iter().all(|v| v.is_finite()), "{x}: {g:?}");
        }
    }

    #[test]
    fn baselines() {
        assert_eq!(baseline_forward(BaselineKind::Relu, -3.0), 0.0);
        assert_eq!(baseline_forward(BaselineKind::Relu, 3.0), 3.0);
        assert!((baseline_forward(BaselineKind::leaky_relu(), -2.0) + 0.02).abs() < 1e-15);
        assert_eq!(baseline_forward(BaselineKind::Mish, 0.0), 0.0);
        assert_eq!(baseline_derivative(BaselineKind::Relu, 0.0), 1.0);
        assert_eq!(baseline_derivative(BaselineKind::leaky_relu(), 0.0), 1.0);
        assert_eq!(baseline_derivative(BaselineKind::leaky_relu(), -1.0), 0.01);
    }

    #[test]
    fn mish_derivative_matches_central_difference() {
        for x in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            let h = 1e-6;
            let fd =
                (baseline_forward(BaselineKind::Mish, x + h) - baseline_forward(BaselineKind::Mish, x - h)) / (2.0 * h);
            assert!((fd - baseline_derivative(BaselineKind::Mish, x)).abs() < 1e-8);
        }
    }

    #[test]
    fn asau_is_smooth_at_the_kink() {
        let params = p(0.0, 1.0, 1.0, 10.0);
        let h = 1e-7;
        let right = (asau_forward(h, &params) - asau_forward(0.0, &params)) / h;
        let left = (asau_forward(0.0, &params) - asau_forward(-h, &params)) / h;
        assert!((right - left).abs() < 1e-6, "{left} vs {right}");
        let relu_right = baseline_forward(BaselineKind::Relu, h) / h;
        let relu_left = -baseline_forward(BaselineKind::Relu, -h) / h;
        assert!((relu_right - relu_left - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn softplus_dominates_relu(x in -30.0f64..30.0) {
            let s = stable_softplus(x);
            let r = exact_max2(0.0, x);
            prop_assert!(s > r);
            prop_assert!(s - r <= std::f64::consts::LN_2);
        }

        #[test]
        fn softplus_bounded_everywhere(x in -1e8f64..1e8) {
            let s = stable_softplus(x);
            let r = exact_max2(0.0, x);
            prop_assert!(s.is_finite());
            prop_assert!(s >= r);
            prop_assert!(s - r <= std::f64::consts::LN_2);
        }

        // Dyadic inputs keep x2 - x1 and x1 + (x2 - x1) exact in binary64;
        // for arbitrary reals the rewrite only holds up to rounding.
        #[test]
        fn max_rewrite_is_exact(i1 in -(1i64 << 40)..(1i64 << 40), i2 in -(1i64 << 40)..(1i64 << 40)) {
            let (x1, x2) = (i1 as f64 / 1024.0, i2 as f64 / 1024.0);
            prop_assert_eq!(exact_max2(x1, x2), x1 + exact_max2(0.0, x2 - x1));
        }

        #[test]
        fn max_rewrite_within_rounding(x1 in -1e6f64..1e6, x2 in -1e6f64..1e6) {
            let direct = exact_max2(x1, x2);
            let rewritten = x1 + exact_max2(0.0, x2 - x1);
            prop_assert!((direct - rewritten).abs() <= 2.0 * f64::EPSILON * x1.abs().max(x2.abs()));
        }

        #[test]
        fn composition_identities(
            x in -5.0f64..5.0, a in -2.0f64..2.0, b in -2.0f64..2.0,
            alpha in 0.0f64..3.0, beta in 0.0f64..20.0,
        ) {
            let params = p(a, b, alpha, beta);
            prop_assert_eq!(asau_forward(x, &params), asau_pair(a * x, b * x, alpha, beta));
            prop_assert_eq!(
                asau_pair(a * x, b * x, alpha, beta),
                a * x + param_mish(b * x - a * x, alpha, beta)
            );
        }

        #[test]
        fn linear_collapse(x in -5.0f64..5.0, c in -2.0f64..2.0, other in -2.0f64..2.0,
                           alpha in 0.0f64..3.0, beta in 0.0f64..20.0) {
            prop_assert_eq!(asau_forward(x, &p(c, c, alpha, beta)), c * x);
            prop_assert_eq!(asau_forward(x, &p(c, other, 0.0, beta)), c * x);
        }

        #[test]
        fn origin_is_fixed(a in -2.0f64..2.0, b in -2.0f64..2.0,
                           alpha in -3.0f64..3.0, beta in -20.0f64..20.0) {
            prop_assert_eq!(asau_forward(0.0, &p(a, b, alpha, beta)), 0.0);
        }
    }
}
