//! Finite-difference verification of the analytic ASAU partials.
//!
//! The oracle evaluates the closed form with 256-bit binary floating point
//! and takes central differences with a tiny step, so neither rounding nor
//! truncation error comes close to the 1e-6 relative tolerance even where a
//! partial is small compared to the function value. It never calls the `f64`
//! kernels it checks.

use astro_float::{BigFloat, Consts, RoundingMode};
use serde::Serialize;

use crate::activation::{asau_partials, AsauGrad, AsauParams};
use crate::rng::SplitMix64;

pub const PARTIAL_NAMES: [&str; 5] = ["d_x", "d_a", "d_b", "d_alpha", "d_beta"];

/// Relative tolerance for a partial whose magnitude is at least
/// [`ABS_FLOOR`]; below that the absolute error must stay under the floor.
pub const REL_TOL: f64 = 1e-6;
pub const ABS_FLOOR: f64 = 1e-8;

/// Relative step; the step for argument `v` is `STEP * max(1, |v|)`.
const STEP: f64 = 1e-24;

const PREC: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

/// Evaluates ASAU at 256-bit precision.
pub struct Oracle {
    cc: Consts,
}

impl Default for Oracle {
    fn default() -> Self {
        Self::new()
    }
}

impl Oracle {
    pub fn new() -> Self {
        Self {
            cc: Consts::new().expect("constant cache allocation"),
        }
    }

    fn big(v: f64) -> BigFloat {
        BigFloat::from_f64(v, PREC)
    }

    fn softplus(&mut self, z: &BigFloat) -> BigFloat {
        let one = Self::big(1.0);
        z.exp(PREC, RM, &mut self.cc)
            .add(&one, PREC, RM)
            .ln(PREC, RM, &mut self.cc)
    }

    /// `a x + (b - a) x tanh(alpha softplus(beta (b - a) x))`, arguments
    /// ordered `[x, a, b, alpha, beta]`.
    pub fn asau(&mut self, args: &[BigFloat; 5]) -> BigFloat {
        let [x, a, b, alpha, beta] = args;
        let u = b.sub(a, PREC, RM).mul(x, PREC, RM);
        let s = self.softplus(&beta.mul(&u, PREC, RM));
        let t = alpha.mul(&s, PREC, RM).tanh(PREC, RM, &mut self.cc);
        a.mul(x, PREC, RM).add(&u.mul(&t, PREC, RM), PREC, RM)
    }

    pub fn asau_f64(&mut self, x: f64, p: &AsauParams) -> f64 {
        let v = self.asau(&[x, p.a, p.b, p.alpha, p.beta].map(Self::big));
        to_f64(&v)
    }

    /// Central difference of the high-precision ASAU along argument `which`.
    pub fn central_difference(&mut self, x: f64, p: &AsauParams, which: usize) -> f64 {
        let base = [x, p.a, p.b, p.alpha, p.beta].map(Self::big);
        let h = Self::big(STEP * [x, p.a, p.b, p.alpha, p.beta][which].abs().max(1.0));
        let mut plus = base.clone();
        let mut minus = base;
        plus[which] = plus[which].add(&h, PREC, RM);
        minus[which] = minus[which].sub(&h, PREC, RM);
        let diff = self.asau(&plus).sub(&self.asau(&minus), PREC, RM);
        let two_h = h.add(&h, PREC, RM);
        to_f64(&diff.div(&two_h, PREC, RM))
    }

    pub fn partials(&mut self, x: f64, p: &AsauParams) -> [f64; 5] {
        std::array::from_fn(|j| self.central_difference(x, p, j))
    }
}

/// Rounds to the nearest `f64` through the top mantissa word.
fn to_f64(v: &BigFloat) -> f64 {
    if v.is_zero() {
        return 0.0;
    }
    let Some((words, _, sign, exp, _)) = v.as_raw_parts() else {
        return f64::NAN;
    };
    let top = *words.last().expect("non-zero value has a mantissa");
    let bits = u64::BITS as i32;
    let mag = top as f64 * 2f64.powi(exp - bits);
    if sign.is_negative() {
        -mag
    } else {
        mag
    }
}

/// Central difference along argument `which`, computed at high precision.
pub fn central_difference(x: f64, p: &AsauParams, which: usize) -> f64 {
    Oracle::new().central_difference(x, p, which)
}

pub fn numeric_partials(x: f64, p: &AsauParams) -> [f64; 5] {
    Oracle::new().partials(x, p)
}

/// Error measure used for the verdict: relative error when the reference
/// partial is at least [`ABS_FLOOR`] in magnitude, absolute error otherwise.
pub fn partial_error(analytic: f64, numeric: f64) -> (f64, bool) {
    let abs = (analytic - numeric).abs();
    if numeric.abs() < ABS_FLOOR {
        (abs, abs < ABS_FLOOR)
    } else {
        let rel = abs / numeric.abs();
        (rel, rel < REL_TOL)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PartialMismatch {
    pub partial: &'static str,
    pub x: f64,
    pub params: AsauParams,
    pub analytic: f64,
    pub numeric: f64,
    /// Relative error, or absolute error for near-zero partials.
    pub error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalarSuiteReport {
    pub samples: usize,
    pub seed: u64,
    pub checks: usize,
    pub failures: usize,
    /// Worst sample per partial, in [`PARTIAL_NAMES`] order.
    pub worst: Vec<PartialMismatch>,
    /// Every failing check, worst first (capped at 50).
    pub offenders: Vec<PartialMismatch>,
}

impl ScalarSuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Draws `x` in [-5, 5], `a, b` in [-2, 2], `alpha` in (0, 3], `beta` in (0, 20].
pub fn sample_point(rng: &mut SplitMix64) -> (f64, AsauParams) {
    let x = rng.uniform(-5.0, 5.0);
    let a = rng.uniform(-2.0, 2.0);
    let b = rng.uniform(-2.0, 2.0);
    let alpha = 3.0 * (1.0 - rng.next_f64());
    let beta = 20.0 * (1.0 - rng.next_f64());
    (x, AsauParams { a, b, alpha, beta })
}

/// Checks `partials` (normally [`asau_partials`]) against the oracle on
/// `samples` random points.
pub fn run_scalar_suite<F>(samples: usize, seed: u64, partials: F) -> ScalarSuiteReport
where
    F: Fn(f64, &AsauParams) -> AsauGrad,
{
    let mut rng = SplitMix64::new(seed);
    let mut worst: Vec<Option<PartialMismatch>> = vec![None; 5];
    let mut offenders = Vec::new();
    let mut failures = 0;
    let mut oracle = Oracle::new();
    for _ in 0..samples {
        let (x, p) = sample_point(&mut rng);
        let analytic = partials(x, &p).as_array();
        let numeric = oracle.partials(x, &p);
        for j in 0..5 {
            let (error, passed) = partial_error(analytic[j], numeric[j]);
            let m = PartialMismatch {
                partial: PARTIAL_NAMES[j],
                x,
                params: p,
                analytic: analytic[j],
                numeric: numeric[j],
                error,
                passed,
            };
            if !passed {
                failures += 1;
                offenders.push(m.clone());
            }
            let replace = match &worst[j] {
                None => true,
                // Failures outrank passes; otherwise larger error wins.
                Some(w) => (w.passed && !passed) || (w.passed == passed && error > w.error),
            };
            if replace {
                worst[j] = Some(m);
            }
        }
    }
    offenders.sort_by(|a, b| b.error.total_cmp(&a.error));
    offenders.truncate(50);
    ScalarSuiteReport {
        samples,
        seed,
        checks: samples * 5,
        failures,
        worst: worst.into_iter().flatten().collect(),
        offenders,
    }
}

pub fn run_default_scalar_suite(samples: usize, seed: u64) -> ScalarSuiteReport {
    run_scalar_suite(samples, seed, asau_partials)
}
