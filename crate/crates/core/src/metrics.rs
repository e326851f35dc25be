//! Classification and segmentation metrics computed from confusion counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `counts[i][j]` = samples of true class `i` predicted as class `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 {
            return Err(Error::Empty("confusion matrix has no classes".into()));
        }
        if counts.iter().any(|r| r.len() != k) {
            return Err(Error::Shape(format!("confusion matrix must be {k}x{k}")));
        }
        let cm = Self { k, counts };
        if cm.total() == 0 {
            return Err(Error::Empty("confusion matrix has no samples".into()));
        }
        Ok(cm)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.counts[i][i]).sum()
    }

    /// True-class totals.
    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Predicted-class totals.
    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.k).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    /// Per-class `(precision, recall, f1)`, with 0/0 taken as 0.
    pub fn per_class(&self) -> Vec<(f64, f64, f64)> {
        let rows = self.row_sums();
        let cols = self.col_sums();
        (0..self.k)
            .map(|c| {
                let tp = self.counts[c][c] as f64;
                let p = ratio(tp, cols[c] as f64);
                let r = ratio(tp, rows[c] as f64);
                (p, r, f1(p, r))
            })
            .collect()
    }

    /// Relabels classes: new class `perm[i]` takes old class `i`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.k];
        if perm.len() != self.k
            || perm
                .iter()
                .any(|&p| p >= self.k || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::param("not a permutation of the class indices"));
        }
        let mut counts = vec![vec![0; self.k]; self.k];
        for i in 0..self.k {
            for j in 0..self.k {
                counts[perm[i]][perm[j]] = self.counts[i][j];
            }
        }
        Ok(Self { k: self.k, counts })
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn f1(p: f64, r: f64) -> f64 {
    ratio(2.0 * p * r, p + r)
}

pub fn confusion_from_predictions(truth: &[usize], predicted: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Misaligned(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Empty("no labels".into()));
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        for label in [t, p] {
            if label >= k {
                return Err(Error::LabelOutOfRange { label, k });
            }
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { k, counts })
}

pub fn macro_prf(cm: &ConfusionMatrix) -> (f64, f64, f64) {
    let per = cm.per_class();
    let n = per.len() as f64;
    let (p, r, f) = per
        .iter()
        .fold((0.0, 0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1, acc.2 + x.2));
    (p / n, r / n, f / n)
}

/// Pooled counts. Every misclassification is one false positive and one false
/// negative, so all three equal the accuracy.
pub fn micro_prf(cm: &ConfusionMatrix) -> (f64, f64, f64) {
    let tp = cm.trace() as f64;
    let total = cm.total() as f64;
    let fp = total - tp;
    let fneg = total - tp;
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fneg);
    // With p == r, 2pr/(p+r) is p up to rounding; use it directly so the
    // identity holds exactly.
    let f = if p == r { p } else { f1(p, r) };
    (p, r, f)
}

pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    cm.trace() as f64 / cm.total() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mcc {
    pub value: f64,
    /// Ground truth held a single class; the coefficient is undefined and
    /// reported as 0.
    pub single_class_truth: bool,
}

/// Multiclass Matthews correlation in covariance form.
pub fn mcc_multiclass(cm: &ConfusionMatrix) -> Mcc {
    let c = cm.trace() as f64;
    let s = cm.total() as f64;
    let t = cm.row_sums();
    let p = cm.col_sums();
    let single_class_truth = t.iter().filter(|&&v| v > 0).count() < 2;
    let pt: f64 = p.iter().zip(&t).map(|(&a, &b)| a as f64 * b as f64).sum();
    let pp: f64 = p.iter().map(|&a| (a as f64).powi(2)).sum();
    let tt: f64 = t.iter().map(|&a| (a as f64).powi(2)).sum();
    let den = (s * s - pp) * (s * s - tt);
    let value = if den <= 0.0 {
        0.0
    } else {
        ((c * s - pt) / den.sqrt()).clamp(-1.0, 1.0)
    };
    Mcc {
        value,
        single_class_truth,
    }
}

/// Intersection, predicted and true foreground counts of two binary masks.
fn overlap(pred: &Tensor, truth: &Tensor) -> Result<(f64, f64, f64)> {
    pred.check_same_shape(truth, "mask comparison")?;
    let (mut inter, mut np, mut nt) = (0u64, 0u64, 0u64);
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        let (p, t) = (p >= 0.5, t >= 0.5);
        inter += (p && t) as u64;
        np += p as u64;
        nt += t as u64;
    }
    Ok((inter as f64, np as f64, nt as f64))
}

/// `2|P∩G| / (|P| + |G|)`; 1 when both masks are empty. Mask entries are
/// read as foreground when ≥ 0.5.
pub fn dice_binary(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    let (i, p, t) = overlap(pred, truth)?;
    Ok(if p + t == 0.0 { 1.0 } else { 2.0 * i / (p + t) })
}

pub fn iou_binary(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    let (i, p, t) = overlap(pred, truth)?;
    let union = p + t - i;
    Ok(if union == 0.0 { 1.0 } else { i / union })
}

/// `(precision, recall)`. Both are 1 when both masks are empty; otherwise an
/// empty denominator gives 0.
pub fn seg_precision_recall(pred: &Tensor, truth: &Tensor) -> Result<(f64, f64)> {
    let (i, p, t) = overlap(pred, truth)?;
    if p + t == 0.0 {
        return Ok((1.0, 1.0));
    }
    Ok((ratio(i, p), ratio(i, t)))
}

pub fn mean_over_cases(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("no cases to average".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Flat metric report; only the fields relevant to the task are present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision_macro: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_macro: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_macro: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision_micro: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_micro: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_micro: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mdsc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub miou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
}

impl MetricReport {
    pub fn classification(cm: &ConfusionMatrix) -> Self {
        let (pm, rm, fm) = macro_prf(cm);
        let (pu, ru, fu) = micro_prf(cm);
        Self {
            precision_macro: Some(pm),
            recall_macro: Some(rm),
            f1_macro: Some(fm),
            precision_micro: Some(pu),
            recall_micro: Some(ru),
            f1_micro: Some(fu),
            accuracy: Some(accuracy(cm)),
            mcc: Some(mcc_multiclass(cm).value),
            ..Self::default()
        }
    }

    /// Case means over paired predicted/true masks.
    pub fn segmentation(pred: &[Tensor], truth: &[Tensor]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::Misaligned(format!(
                "{} predicted masks but {} true masks",
                pred.len(),
                truth.len()
            )));
        }
        let mut dice = Vec::with_capacity(pred.len());
        let mut iou = Vec::with_capacity(pred.len());
        let mut rec = Vec::with_capacity(pred.len());
        let mut prec = Vec::with_capacity(pred.len());
        for (p, t) in pred.iter().zip(truth) {
            dice.push(dice_binary(p, t)?);
            iou.push(iou_binary(p, t)?);
            let (pr, re) = seg_precision_recall(p, t)?;
            prec.push(pr);
            rec.push(re);
        }
        Ok(Self {
            mdsc: Some(mean_over_cases(&dice)?),
            miou: Some(mean_over_cases(&iou)?),
            recall: Some(mean_over_cases(&rec)?),
            precision: Some(mean_over_cases(&prec)?),
            ..Self::default()
        })
    }

    /// `(key, value)` pairs of the populated fields, in column order.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        [
            ("precision_macro", self.precision_macro),
            ("recall_macro", self.recall_macro),
            ("f1_macro", self.f1_macro),
            ("precision_micro", self.precision_micro),
            ("recall_micro", self.recall_micro),
            ("f1_micro", self.f1_micro),
            ("accuracy", self.accuracy),
            ("mcc", self.mcc),
            ("mdsc", self.mdsc),
            ("miou", self.miou),
            ("recall", self.recall),
            ("precision", self.precision),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(bits: &[u8]) -> Tensor {
        Tensor::new(vec![bits.len()], bits.iter().map(|&b| b as f64).collect()).unwrap()
    }

    fn sample_cm() -> ConfusionMatrix {
        ConfusionMatrix::from_counts(vec![vec![2, 1, 0], vec![0, 2, 0], vec![1, 0, 4]]).unwrap()
    }

    #[test]
    fn confusion_basics() {
        let cm = confusion_from_predictions(&[0, 1], &[0, 1], 2).unwrap();
        assert_eq!(cm.counts(), &[vec![1, 0], vec![0, 1]]);
        let cm = confusion_from_predictions(&[0, 0], &[1, 1], 2).unwrap();
        assert_eq!(cm.counts()[0][1], 2);
        assert!(confusion_from_predictions(&[], &[], 2).is_err());
        assert!(matches!(
            confusion_from_predictions(&[0, 2], &[0, 1], 2),
            Err(Error::LabelOutOfRange { label: 2, k: 2 })
        ));
        assert!(confusion_from_predictions(&[0], &[0, 1], 2).is_err());
    }

    #[test]
    fn perfect_predictor() {
        let cm = ConfusionMatrix::from_counts(vec![vec![3, 0, 0], vec![0, 5, 0], vec![0, 0, 1]]).unwrap();
        assert_eq!(macro_prf(&cm), (1.0, 1.0, 1.0));
        assert_eq!(accuracy(&cm), 1.0);
        assert_eq!(mcc_multiclass(&cm).value, 1.0);
    }

    #[test]
    fn hand_tally_three_classes() {
        // Class 0: TP 2, predicted 3, true 3. Class 1: TP 2, predicted 3, true 2.
        // Class 2: TP 4, predicted 4, true 5.
        let cm = sample_cm();
        let p = [2.0 / 3.0, 2.0 / 3.0, 1.0];
        let r = [2.0 / 3.0, 1.0, 4.0 / 5.0];
        let f: Vec<f64> = (0..3).map(|i| 2.0 * p[i] * r[i] / (p[i] + r[i])).collect();
        let (mp, mr, mf) = macro_prf(&cm);
        assert!((mp - p.iter().sum::<f64>() / 3.0).abs() < 1e-15);
        assert!((mr - r.iter().sum::<f64>() / 3.0).abs() < 1e-15);
        assert!((mf - f.iter().sum::<f64>() / 3.0).abs() < 1e-15);
        assert_eq!(micro_prf(&cm), (0.8, 0.8, 0.8));
        assert_eq!(accuracy(&cm), 0.8);
    }

    /// Covariance form evaluated literally from per-sample one-hot vectors.
    fn brute_mcc(cm: &ConfusionMatrix) -> f64 {
        let k = cm.k();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..k {
            for j in 0..k {
                for _ in 0..cm.counts()[i][j] {
                    xs.push(j);
                    ys.push(i);
                }
            }
        }
        let n = xs.len() as f64;
        let cov = |a: &[usize], b: &[usize]| -> f64 {
            (0..k)
                .map(|c| {
                    let ma = a.iter().filter(|&&v| v == c).count() as f64 / n;
                    let mb = b.iter().filter(|&&v| v == c).count() as f64 / n;
                    a.iter()
                        .zip(b)
                        .map(|(&u, &v)| ((u == c) as u8 as f64 - ma) * ((v == c) as u8 as f64 - mb))
                        .sum::<f64>()
                })
                .sum()
        };
        cov(&xs, &ys) / (cov(&xs, &xs) * cov(&ys, &ys)).sqrt()
    }

    #[test]
    fn mcc_against_brute_force() {
        let cm = sample_cm();
        assert!((mcc_multiclass(&cm).value - brute_mcc(&cm)).abs() < 1e-12);
        let even = ConfusionMatrix::from_counts(vec![vec![5, 5], vec![5, 5]]).unwrap();
        assert_eq!(mcc_multiclass(&even).value, 0.0);
    }

    #[test]
    fn mcc_single_class_truth_is_flagged() {
        let cm = ConfusionMatrix::from_counts(vec![vec![3, 1], vec![0, 0]]).unwrap();
        let m = mcc_multiclass(&cm);
        assert_eq!(m.value, 0.0);
        assert!(m.single_class_truth);
        assert!(!mcc_multiclass(&sample_cm()).single_class_truth);
    }

    #[test]
    fn zero_over_zero_is_zero() {
        // Class 2 is never predicted nor present.
        let cm = ConfusionMatrix::from_counts(vec![vec![1, 1, 0], vec![0, 2, 0], vec![0, 0, 0]]).unwrap();
        assert_eq!(cm.per_class()[2], (0.0, 0.0, 0.0));
    }

    #[test]
    fn mask_metrics() {
        let a = mask(&[1, 1, 0, 0]);
        assert_eq!(dice_binary(&a, &a).unwrap(), 1.0);
        assert_eq!(iou_binary(&a, &a).unwrap(), 1.0);
        let b = mask(&[0, 1, 1, 0]);
        assert_eq!(dice_binary(&a, &b).unwrap(), 0.5);
        assert!((iou_binary(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let c = mask(&[0, 0, 1, 1]);
        assert_eq!(dice_binary(&a, &c).unwrap(), 0.0);
        assert_eq!(iou_binary(&a, &c).unwrap(), 0.0);
        let z = mask(&[0, 0, 0, 0]);
        assert_eq!(dice_binary(&z, &z).unwrap(), 1.0);
        assert_eq!(iou_binary(&z, &z).unwrap(), 1.0);
        assert_eq!(seg_precision_recall(&z, &z).unwrap(), (1.0, 1.0));
        assert_eq!(seg_precision_recall(&z, &a).unwrap(), (0.0, 0.0));
        assert!(dice_binary(&a, &mask(&[1, 0, 1])).is_err());
    }

    #[test]
    fn means() {
        assert_eq!(mean_over_cases(&[1.0]).unwrap(), 1.0);
        assert_eq!(mean_over_cases(&[0.0, 1.0]).unwrap(), 0.5);
        assert!(mean_over_cases(&[]).is_err());
    }

    #[test]
    fn report_keys() {
        let json = serde_json::to_value(MetricReport::classification(&sample_cm())).unwrap();
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        for k in [
            "precision_macro",
            "recall_macro",
            "f1_macro",
            "precision_micro",
            "recall_micro",
            "f1_micro",
            "accuracy",
            "mcc",
        ] {
            assert!(keys.contains(&k));
        }
        assert!(!keys.contains(&"mdsc"));
    }

    fn arb_cm() -> impl Strategy<Value = ConfusionMatrix> {
        (2usize..6)
            .prop_flat_map(|k| proptest::collection::vec(proptest::collection::vec(0u64..20, k), k))
            .prop_filter_map("empty", |c| ConfusionMatrix::from_counts(c).ok())
    }

    fn arb_masks() -> impl Strategy<Value = (Tensor, Tensor)> {
        (1usize..64).prop_flat_map(|n| {
            (
                proptest::collection::vec(0u8..2, n),
                proptest::collection::vec(0u8..2, n),
            )
                .prop_map(|(a, b)| (mask(&a), mask(&b)))
        })
    }

    proptest! {
        #[test]
        fn micro_equals_accuracy(cm in arb_cm()) {
            let (p, r, f) = micro_prf(&cm);
            let acc = accuracy(&cm);
            prop_assert_eq!(p, acc);
            prop_assert_eq!(r, acc);
            prop_assert_eq!(f, acc);
        }

        #[test]
        fn mcc_bounded_and_permutation_invariant(cm in arb_cm(), seed in any::<u64>()) {
            let m = mcc_multiclass(&cm).value;
            prop_assert!((-1.0..=1.0).contains(&m));
            let perm = crate::rng::SplitMix64::new(seed).permutation(cm.k());
            let m2 = mcc_multiclass(&cm.permuted(&perm).unwrap()).value;
            prop_assert!((m - m2).abs() < 1e-12);
        }

        #[test]
        fn macro_f1_between_class_extremes(cm in arb_cm()) {
            let per = cm.per_class();
            let (_, _, f) = macro_prf(&cm);
            let lo = per.iter().map(|x| x.2).fold(f64::INFINITY, f64::min);
            let hi = per.iter().map(|x| x.2).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(f >= lo - 1e-15 && f <= hi + 1e-15);
        }

        #[test]
        fn dice_iou_bijection((p, t) in arb_masks()) {
            let d = dice_binary(&p, &t).unwrap();
            let i = iou_binary(&p, &t).unwrap();
            prop_assert!((d - 2.0 * i / (1.0 + i)).abs() < 1e-12);
        }
    }
}
