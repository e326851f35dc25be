//! Losses, the Adam optimizer and an early-stopping training loop.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::activation::stable_sigmoid;
use crate::approx::fmt17;
use crate::datasets::{Dataset, LabeledSet, MaskSet};
use crate::error::{Error, Result};
use crate::metrics::{dice_binary, mean_over_cases};
use crate::nn::{Network, ParamStore};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Mean negative log-likelihood of `labels` under `softmax(logits)` and its
/// gradient with respect to the logits.
pub fn softmax_ce_loss(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.shape().len() != 2 {
        return Err(Error::Shape(format!("logits must be [N, K], got {:?}", logits.shape())));
    }
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != n {
        return Err(Error::Misaligned(format!("{n} logit rows but {} labels", labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange { label, k });
    }
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (row, &y) in grad.data_mut().chunks_exact_mut(k).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[y];
        for v in row.iter_mut() {
            *v = (*v - lse).exp() / n as f64;
        }
        row[y] -= 1.0 / n as f64;
    }
    Ok((loss / n as f64, grad))
}

pub const PROB_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy. Probabilities are clamped to
/// `[1e-7, 1 - 1e-7]`; the gradient is that of the clamped expression, so it
/// vanishes where the clamp is active.
pub fn bce_loss(probs: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    probs.check_same_shape(targets, "binary cross-entropy")?;
    let n = probs.len() as f64;
    let mut grad = probs.clone();
    let mut loss = 0.0;
    for (g, &t) in grad.data_mut().iter_mut().zip(targets.data()) {
        let raw = *g;
        let p = raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        *g = if raw == p {
            (-t / p + (1.0 - t) / (1.0 - p)) / n
        } else {
            0.0
        };
    }
    Ok((loss / n, grad))
}

/// `1 - (2 Σ p t + smooth) / (Σ p + Σ t + smooth)` over the whole tensor.
pub fn soft_dice_loss(probs: &Tensor, targets: &Tensor, smooth: f64) -> Result<(f64, Tensor)> {
    probs.check_same_shape(targets, "soft dice")?;
    let inter: f64 = probs.data().iter().zip(targets.data()).map(|(p, t)| p * t).sum();
    let den = probs.data().iter().sum::<f64>() + targets.data().iter().sum::<f64>() + smooth;
    let num = 2.0 * inter + smooth;
    let grad = Tensor::from_fn(probs.shape(), |i| -(2.0 * targets.data()[i] * den - num) / (den * den));
    Ok((1.0 - num / den, grad))
}

/// BCE plus soft dice (smooth 1) with unit weights.
pub fn combined_loss(probs: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    let (lb, gb) = bce_loss(probs, targets)?;
    let (ld, gd) = soft_dice_loss(probs, targets, 1.0)?;
    let mut g = gb;
    for (a, b) in g.data_mut().iter_mut().zip(gd.data()) {
        *a += b;
    }
    Ok((lb + ld, g))
}

/// Adam moments for every scalar of a [`ParamStore`], in registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamState {
    pub fn new(store: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|p| vec![0.0; p.values.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }

    fn check_aligned(&self, store: &ParamStore) -> Result<()> {
        let aligned = self.m.len() == store.len()
            && self.v.len() == store.len()
            && store
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(p, (m, v))| m.len() == p.values.len() && v.len() == p.values.len());
        if aligned {
            Ok(())
        } else {
            Err(Error::Misaligned(
                "optimizer state does not match the parameter store".into(),
            ))
        }
    }

    /// Shrinks every trainable value by `lr * weight_decay`, then applies the
    /// bias-corrected Adam update. Frozen parameters are left alone.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        self.check_aligned(store)?;
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if !p.trainable {
                continue;
            }
            for i in 0..p.values.len() {
                let g = p.grads[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                p.values[i] -= self.lr * self.weight_decay * p.values[i];
                p.values[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Classification; network outputs are logits.
    SoftmaxCe,
    /// Segmentation losses take `sigmoid(output)` as probabilities.
    Bce,
    Dice,
    BceDice,
}

/// A dataset the training loop can fit and score.
pub trait Task: Dataset {
    fn inputs(&self) -> &Tensor;

    /// Loss of `output` (network output for samples `idx`) and its gradient.
    fn batch_loss(&self, idx: &[usize], output: &Tensor, loss: Loss) -> Result<(f64, Tensor)>;

    /// Validation score, larger is better.
    fn score(&self, output: &Tensor) -> Result<f64>;
}

impl Task for LabeledSet {
    fn inputs(&self) -> &Tensor {
        self.features()
    }

    fn batch_loss(&self, idx: &[usize], output: &Tensor, loss: Loss) -> Result<(f64, Tensor)> {
        if loss != Loss::SoftmaxCe {
            return Err(Error::param(format!("{loss:?} does not apply to class labels")));
        }
        let labels: Vec<usize> = idx.iter().map(|&i| self.labels()[i]).collect();
        softmax_ce_loss(output, &labels)
    }

    /// Accuracy.
    fn score(&self, output: &Tensor) -> Result<f64> {
        let pred = argmax_rows(output);
        if pred.len() != self.len() {
            return Err(Error::Misaligned("one output row per sample expected".into()));
        }
        let hits = pred.iter().zip(self.labels()).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / self.len() as f64)
    }
}

impl Task for MaskSet {
    fn inputs(&self) -> &Tensor {
        self.images()
    }

    fn batch_loss(&self, idx: &[usize], output: &Tensor, loss: Loss) -> Result<(f64, Tensor)> {
        let targets = self.masks().gather_rows(idx);
        let probs = output.map(stable_sigmoid);
        let (l, dp) = match loss {
            Loss::Bce => bce_loss(&probs, &targets)?,
            Loss::Dice => soft_dice_loss(&probs, &targets, 1.0)?,
            Loss::BceDice => combined_loss(&probs, &targets)?,
            Loss::SoftmaxCe => return Err(Error::param("softmax cross-entropy does not apply to masks")),
        };
        let mut grad = dp;
        for (g, p) in grad.data_mut().iter_mut().zip(probs.data()) {
            *g *= p * (1.0 - p);
        }
        Ok((l, grad))
    }

    /// Mean Dice of the masks thresholded at probability 0.5.
    fn score(&self, output: &Tensor) -> Result<f64> {
        let pred = binarize_logits(output);
        let dice = (0..self.len())
            .map(|i| dice_binary(&row_tensor(&pred, i), &self.mask(i)))
            .collect::<Result<Vec<_>>>()?;
        mean_over_cases(&dice)
    }
}

/// Index of the largest entry in each row; the first one wins ties.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.rows())
        .map(|i| {
            t.row(i)
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, (j, &v)| if v > best.1 { (j, v) } else { best },
                )
                .0
        })
        .collect()
}

/// 1 where `sigmoid(logit) >= 0.5`, i.e. `logit >= 0`.
pub fn binarize_logits(t: &Tensor) -> Tensor {
    t.map(|v| (v >= 0.0) as u8 as f64)
}

pub fn row_tensor(t: &Tensor, i: usize) -> Tensor {
    Tensor::new(t.shape()[1..].to_vec(), t.row(i).to_vec()).expect("row of a valid tensor")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub seed: u64,
    pub split: [f64; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            batch_size: 32,
            lr: 1e-2,
            weight_decay: 1e-4,
            patience: 50,
            seed: 0,
            split: [0.8, 0.1, 0.1],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::param(
                "max_epochs, batch_size and patience must all be at least 1",
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::param(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::param(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        crate::datasets::SplitSpec {
            fractions: self.split,
            seed: self.seed,
        }
        .validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    /// Parameters restored from the best validation epoch.
    pub network: Network,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_metric: f64,
    /// A non-finite training loss stopped the run.
    pub diverged: bool,
}

impl TrainedModel {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_metric\n");
        for r in &self.history {
            let _ = writeln!(out, "{},{},{}", r.epoch, fmt17(r.train_loss), fmt17(r.val_metric));
        }
        out
    }
}

/// Network output for every sample of `set`, computed `batch` rows at a time.
pub fn predict_all<D: Task>(network: &Network, set: &D, batch: usize) -> Result<Tensor> {
    let n = set.len();
    let mut data = Vec::new();
    let mut shape = Vec::new();
    for start in (0..n).step_by(batch.max(1)) {
        let idx: Vec<usize> = (start..(start + batch).min(n)).collect();
        let out = network.predict(&set.inputs().gather_rows(&idx))?;
        shape = out.shape().to_vec();
        data.extend(out.into_data());
    }
    shape[0] = n;
    Tensor::new(shape, data)
}

/// Smallest value ASAU gains are clamped to after each update.
pub const MIN_GAIN: f64 = 1e-3;

const SHUFFLE_STREAM: u64 = 0x5348_5546;

/// Mini-batch Adam with per-epoch seeded shuffling and early stopping on the
/// validation score. Stops after `max_epochs` or once the score has failed
/// to improve for `patience` consecutive epochs, then restores the best
/// parameters.
pub fn train_loop<D: Task>(
    mut network: Network,
    train: &D,
    val: &D,
    config: &TrainConfig,
    loss: Loss,
) -> Result<TrainedModel> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Empty("training and validation sets must be nonempty".into()));
    }
    let mut rng = SplitMix64::new(config.seed).derive(SHUFFLE_STREAM);
    let mut adam = AdamState::new(network.params(), config.lr, config.weight_decay);
    let mut history = Vec::new();
    let mut best = (0, f64::NEG_INFINITY, network.params().snapshot());
    let mut stale = 0;
    let mut diverged = false;
    let n = train.len();
    for epoch in 1..=config.max_epochs {
        let order = rng.permutation(n);
        let mut total = 0.0;
        for idx in order.chunks(config.batch_size) {
            let x = train.inputs().gather_rows(idx);
            let (out, cache) = network.forward(&x)?;
            let (l, g) = train.batch_loss(idx, &out, loss)?;
            if !l.is_finite() {
                diverged = true;
                break;
            }
            total += l * idx.len() as f64;
            network.backward(&cache, &g)?;
            adam.step(network.params_mut())?;
            network.clamp_asau_gains(MIN_GAIN);
        }
        if diverged {
            break;
        }
        let metric = val.score(&predict_all(&network, val, config.batch_size)?)?;
        history.push(EpochRecord {
            epoch,
            train_loss: total / n as f64,
            val_metric: metric,
        });
        if metric > best.1 {
            best = (epoch, metric, network.params().snapshot());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    network.params_mut().restore(&best.2)?;
    Ok(TrainedModel {
        network,
        history,
        best_epoch: best.0,
        best_metric: best.1,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::AsauParams;
    use crate::datasets::{gen_blobs, split_dataset, SplitSpec};
    use crate::nn::{ActivationSpec, LayerSpec};
    use proptest::prelude::*;

    fn fd<F: Fn(&Tensor) -> f64>(f: F, at: &Tensor, h: f64) -> Tensor {
        let mut probe = at.clone();
        Tensor::from_fn(at.shape(), |i| {
            let orig = at.data()[i];
            probe.data_mut()[i] = orig + h;
            let up = f(&probe);
            probe.data_mut()[i] = orig - h;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * h)
        })
    }

    fn max_rel(a: &Tensor, b: &Tensor) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-8))
            .fold(0.0, f64::max)
    }

    fn uniform(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor {
        let mut rng = SplitMix64::new(seed);
        Tensor::from_fn(shape, |_| rng.uniform(lo, hi))
    }

    fn binary(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = SplitMix64::new(seed);
        Tensor::from_fn(shape, |_| (rng.next_f64() < 0.5) as u8 as f64)
    }

    #[test]
    fn softmax_ce_anchors() {
        let (l, _) = softmax_ce_loss(&Tensor::zeros(&[3, 4]), &[0, 1, 3]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for margin in [1.0, 5.0, 10.0, 20.0, 1000.0] {
            let logits = Tensor::new(vec![1, 3], vec![margin, 0.0, 0.0]).unwrap();
            let (l, _) = softmax_ce_loss(&logits, &[0]).unwrap();
            assert!(l <= prev && l >= 0.0);
            prev = l;
        }
        assert_eq!(prev, 0.0);
        assert!(softmax_ce_loss(&Tensor::zeros(&[1, 2]), &[2]).is_err());
    }

    #[test]
    fn softmax_ce_grad_matches_fd() {
        let logits = uniform(&[2, 3], -2.0, 2.0, 1);
        let labels = [2, 0];
        let (_, g) = softmax_ce_loss(&logits, &labels).unwrap();
        let n = fd(|t| softmax_ce_loss(t, &labels).unwrap().0, &logits, 1e-6);
        assert!(max_rel(&g, &n) < 1e-6, "{}", max_rel(&g, &n));
    }

    #[test]
    fn bce_anchors() {
        let t = binary(&[4, 4], 2);
        let (l, _) = bce_loss(&t, &t).unwrap();
        assert!(l < 1e-6);
        let (l, _) = bce_loss(&Tensor::filled(&[4, 4], 0.5), &t).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert!(bce_loss(&t, &Tensor::zeros(&[16])).is_err());
    }

    #[test]
    fn bce_grad_matches_fd() {
        let p = uniform(&[4, 4], 0.05, 0.95, 3);
        let t = binary(&[4, 4], 4);
        let (_, g) = bce_loss(&p, &t).unwrap();
        let n = fd(|x| bce_loss(x, &t).unwrap().0, &p, 1e-7);
        assert!(max_rel(&g, &n) < 1e-6, "{}", max_rel(&g, &n));
    }

    #[test]
    fn dice_anchors() {
        let ones = Tensor::filled(&[10], 1.0);
        let (l, _) = soft_dice_loss(&ones, &ones, 1.0).unwrap();
        assert!(l.abs() < 1e-15);
        // Disjoint: loss = 1 - smooth / (Σp + Σt + smooth).
        for n in [10usize, 1000, 100_000] {
            let p = Tensor::from_fn(&[2 * n], |i| (i < n) as u8 as f64);
            let t = Tensor::from_fn(&[2 * n], |i| (i >= n) as u8 as f64);
            let (l, _) = soft_dice_loss(&p, &t, 1.0).unwrap();
            assert!((l - (1.0 - 1.0 / (2 * n + 1) as f64)).abs() < 1e-15);
        }
        let n = 1_000_000;
        let p = Tensor::filled(&[n], 0.5);
        let t = Tensor::from_fn(&[n], |i| (i % 2) as f64);
        let (l, _) = soft_dice_loss(&p, &t, 1.0).unwrap();
        assert!((l - 0.5).abs() < 1e-5);
    }

    #[test]
    fn dice_grad_matches_fd() {
        let p = uniform(&[4, 4], 0.0, 1.0, 5);
        let t = binary(&[4, 4], 6);
        let (_, g) = soft_dice_loss(&p, &t, 1.0).unwrap();
        let n = fd(|x| soft_dice_loss(x, &t, 1.0).unwrap().0, &p, 1e-6);
        assert!(max_rel(&g, &n) < 1e-6);
    }

    #[test]
    fn combined_anchors_and_grad() {
        let t = binary(&[8, 8], 7);
        let (l, _) = combined_loss(&t, &t).unwrap();
        assert!(l < 1e-6);
        let p = uniform(&[8, 8], 0.05, 0.95, 8);
        let (_, g) = combined_loss(&p, &t).unwrap();
        let (_, gb) = bce_loss(&p, &t).unwrap();
        let (_, gd) = soft_dice_loss(&p, &t, 1.0).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.data()[i], gb.data()[i] + gd.data()[i]);
        }
        let n = fd(|x| combined_loss(x, &t).unwrap().0, &p, 1e-7);
        assert!(max_rel(&g, &n) < 1e-5);
    }

    proptest! {
        #[test]
        fn loss_ranges(seed in any::<u64>(), n in 1usize..40) {
            let p = uniform(&[n], 0.0, 1.0, seed);
            let t = binary(&[n], seed ^ 1);
            let (b, _) = bce_loss(&p, &t).unwrap();
            let (d, _) = soft_dice_loss(&p, &t, 1.0).unwrap();
            let (c, _) = combined_loss(&p, &t).unwrap();
            prop_assert!(b >= 0.0);
            prop_assert!((0.0..1.0).contains(&d));
            prop_assert!(c >= 0.0);
        }
    }

    fn one_param_store(values: Vec<f64>, grads: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.add("w", crate::nn::ParamRole::Weight, true, values).unwrap();
        s.get_mut(id).grads = grads;
        s
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let g = vec![0.3, -2.0, 1e-3];
        let mut s = one_param_store(vec![1.0, 1.0, 1.0], g.clone());
        let mut a = AdamState::new(&s, 0.01, 0.0);
        a.step(&mut s).unwrap();
        for (v, g) in s.iter().next().unwrap().values.iter().zip(&g) {
            let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
            assert!((v - expected).abs() < 1e-15);
        }
        assert_eq!(a.t, 1);
    }

    #[test]
    fn adam_two_steps_match_hand_recurrence() {
        let g = 0.7;
        let lr = 1e-3;
        let mut s = one_param_store(vec![0.5], vec![g]);
        let mut a = AdamState::new(&s, lr, 0.0);
        a.step(&mut s).unwrap();
        a.step(&mut s).unwrap();
        // Written out by hand: m1 = 0.1g, v1 = 0.001g², m2 = 0.19g, v2 = 0.001999g².
        let x1 = 0.5 - lr * (0.1 * g / 0.1) / ((0.001 * g * g / 0.001f64).sqrt() + 1e-8);
        let m2 = 0.9 * 0.1 * g + 0.1 * g;
        let v2 = 0.999 * 0.001 * g * g + 0.001 * g * g;
        let x2 = x1 - lr * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.998001)).sqrt() + 1e-8);
        assert!((s.iter().next().unwrap().values[0] - x2).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_grad_is_identity_and_decay_shrinks() {
        let mut s = one_param_store(vec![1.5, -2.0], vec![0.0, 0.0]);
        let mut a = AdamState::new(&s, 0.1, 0.0);
        for _ in 0..25 {
            a.step(&mut s).unwrap();
        }
        assert_eq!(s.iter().next().unwrap().values, vec![1.5, -2.0]);
        let mut a = AdamState::new(&s, 0.1, 0.5);
        a.step(&mut s).unwrap();
        let after = &s.iter().next().unwrap().values;
        assert!((after[0] - 1.5 * 0.95).abs() < 1e-15 && (after[1] + 2.0 * 0.95).abs() < 1e-15);
        assert!(a.v.iter().flatten().all(|&v| v >= 0.0));
    }

    #[test]
    fn adam_rejects_misaligned_state() {
        let mut s = one_param_store(vec![1.0], vec![0.0]);
        let mut a = AdamState::new(&one_param_store(vec![1.0, 2.0], vec![0.0, 0.0]), 0.1, 0.0);
        assert!(matches!(a.step(&mut s), Err(Error::Misaligned(_))));
    }

    fn mlp(act: ActivationSpec, seed: u64) -> Network {
        Network::build(
            &[2],
            &[
                LayerSpec::Dense { in_dim: 2, out_dim: 8 },
                LayerSpec::Activation(act),
                LayerSpec::Dense { in_dim: 8, out_dim: 2 },
            ],
            &mut SplitMix64::new(seed),
        )
        .unwrap()
    }

    #[test]
    fn patience_one_on_constant_problem_stops_after_two_epochs() {
        // All labels identical and inputs zero: the score is stuck at 1.
        let set = LabeledSet::new(Tensor::zeros(&[20, 2]), vec![0; 20], 2).unwrap();
        let cfg = TrainConfig {
            patience: 1,
            lr: 1e-12,
            ..TrainConfig::default()
        };
        let m = train_loop(mlp(ActivationSpec::relu(), 1), &set, &set, &cfg, Loss::SoftmaxCe).unwrap();
        assert_eq!(m.history.len(), 2);
        assert_eq!(m.best_epoch, 1);
    }

    #[test]
    fn training_is_deterministic_and_restores_best() {
        let set = gen_blobs(200, 2, 1.0, 3).unwrap();
        let (tr, va, _) = split_dataset(&set, &SplitSpec::new(3)).unwrap();
        let cfg = TrainConfig {
            max_epochs: 15,
            patience: 5,
            seed: 11,
            ..TrainConfig::default()
        };
        let act = ActivationSpec::asau(AsauParams::default());
        let a = train_loop(mlp(act, 2), &tr, &va, &cfg, Loss::SoftmaxCe).unwrap();
        let b = train_loop(mlp(act, 2), &tr, &va, &cfg, Loss::SoftmaxCe).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.network.params().scalars(), b.network.params().scalars());
        let best = a.history.iter().map(|r| r.val_metric).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.best_metric, best);
        let again = va.score(&predict_all(&a.network, &va, 7).unwrap()).unwrap();
        assert_eq!(again, best);
        assert!(a.history_csv().starts_with("epoch,train_loss,val_metric\n1,"));
    }

    #[test]
    fn loss_kind_must_fit_the_data() {
        let set = gen_blobs(20, 2, 1.0, 3).unwrap();
        let out = Tensor::zeros(&[2, 2]);
        assert!(set.batch_loss(&[0, 1], &out, Loss::Bce).is_err());
    }

    #[test]
    fn empty_or_invalid_config_rejected() {
        let set = gen_blobs(20, 2, 1.0, 3).unwrap();
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(train_loop(mlp(ActivationSpec::relu(), 1), &set, &set, &bad, Loss::SoftmaxCe).is_err());
        let bad = TrainConfig {
            split: [0.5, 0.1, 0.1],
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
