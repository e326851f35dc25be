//! Central-difference verification of network gradients.

use crate::error::{Error, Result};
use crate::nn::network::{Cache, Network};
use crate::tensor::Tensor;

/// Scalar loss of a network output plus its gradient with respect to that
/// output.
pub type LossFn<'a> = dyn Fn(&Tensor) -> Result<(f64, Tensor)> + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
    /// A perturbation changed some pooling window's winner, so the central
    /// difference straddles a kink and is not a valid oracle.
    pub pooling_tie: bool,
}

/// Entries sorted by descending relative error.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    /// Largest relative error among entries that count toward the verdict.
    pub fn max_rel_err(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| !e.pooling_tie)
            .map(|e| e.rel_err)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.entries.iter().filter(|e| !e.pooling_tie).all(|e| e.rel_err < tol)
    }

    pub fn ties(&self) -> impl Iterator<Item = &GradCheckEntry> {
        self.entries.iter().filter(|e| e.pooling_tie)
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn pooling_changed(base: &Cache, other: &Cache) -> bool {
    base.pool_argmax().zip(other.pool_argmax()).any(|(a, b)| a != b)
}

fn sorted(mut entries: Vec<GradCheckEntry>) -> GradCheckReport {
    entries.sort_by(|a, b| b.rel_err.total_cmp(&a.rel_err));
    GradCheckReport { entries }
}

/// Compares the backward-pass gradient of every trainable scalar with
/// `(L(p + h) - L(p - h)) / 2h`. Parameter values are restored afterwards.
pub fn numeric_grad_check(
    network: &mut Network,
    input: &Tensor,
    loss_fn: &LossFn<'_>,
    h: f64,
) -> Result<GradCheckReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::param(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let (out, base_cache) = network.forward(input)?;
    let (_, out_grad) = loss_fn(&out)?;
    network.backward(&base_cache, &out_grad)?;
    let analytic: Vec<Vec<f64>> = network.params().iter().map(|p| p.grads.clone()).collect();

    let mut entries = Vec::new();
    for (block, block_grads) in analytic.iter().enumerate() {
        let (name, len, trainable) = {
            let p = network.params().iter().nth(block).unwrap();
            (p.name.clone(), p.values.len(), p.trainable)
        };
        if !trainable {
            continue;
        }
        for (i, &a) in block_grads.iter().enumerate().take(len) {
            let orig = network.params().iter().nth(block).unwrap().values[i];
            let eval = |v: f64, net: &mut Network| -> Result<(f64, Cache)> {
                net.params_mut().iter_mut().nth(block).unwrap().values[i] = v;
                let (o, c) = net.forward(input)?;
                Ok((loss_fn(&o)?.0, c))
            };
            let (lp, cp) = eval(orig + h, network)?;
            let (lm, cm) = eval(orig - h, network)?;
            network.params_mut().iter_mut().nth(block).unwrap().values[i] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            entries.push(GradCheckEntry {
                name: crate::nn::param::scalar_name(&name, i, len),
                analytic: a,
                numeric,
                rel_err: rel_err(a, numeric),
                pooling_tie: pooling_changed(&base_cache, &cp) || pooling_changed(&base_cache, &cm),
            });
        }
    }
    Ok(sorted(entries))
}

/// Same check for the gradient with respect to the network input.
pub fn numeric_input_grad_check(
    network: &mut Network,
    input: &Tensor,
    loss_fn: &LossFn<'_>,
    h: f64,
) -> Result<GradCheckReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::param(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let (out, base_cache) = network.forward(input)?;
    let (_, out_grad) = loss_fn(&out)?;
    let gx = network.backward(&base_cache, &out_grad)?;
    let mut entries = Vec::with_capacity(input.len());
    let mut probe = input.clone();
    for i in 0..input.len() {
        let orig = input.data()[i];
        probe.data_mut()[i] = orig + h;
        let (op, cp) = network.forward(&probe)?;
        probe.data_mut()[i] = orig - h;
        let (om, cm) = network.forward(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (loss_fn(&op)?.0 - loss_fn(&om)?.0) / (2.0 * h);
        let a = gx.data()[i];
        entries.push(GradCheckEntry {
            name: format!("input[{i}]"),
            analytic: a,
            numeric,
            rel_err: rel_err(a, numeric),
            pooling_tie: pooling_changed(&base_cache, &cp) || pooling_changed(&base_cache, &cm),
        });
    }
    Ok(sorted(entries))
}

/// `0.5 * sum((y - target)^2)`, handy for checks.
pub fn half_squared_error(target: Tensor) -> impl Fn(&Tensor) -> Result<(f64, Tensor)> {
    move |y: &Tensor| {
        y.check_same_shape(&target, "squared error")?;
        let mut g = y.clone();
        let mut loss = 0.0;
        for (gv, t) in g.data_mut().iter_mut().zip(target.data()) {
            let d = *gv - t;
            loss += 0.5 * d * d;
            *gv = d;
        }
        Ok((loss, g))
    }
}

/// `sum(w * y)` with fixed pseudo-random weights `w`; every output element
/// gets a distinct, non-degenerate upstream gradient.
pub fn weighted_sum(weights: Tensor) -> impl Fn(&Tensor) -> Result<(f64, Tensor)> {
    move |y: &Tensor| {
        y.check_same_shape(&weights, "weighted sum")?;
        let loss = y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
        Ok((loss, weights.clone()))
    }
}
