//! Model builders and the activation comparison runner.

use asaukit::datasets::{
    gen_blobs, gen_shapes_seg, gen_two_moons, load_idx, split_dataset, Dataset, LabeledSet, SplitSpec, Standardizer,
};
use asaukit::metrics::{confusion_from_predictions, ConfusionMatrix, MetricReport};
use asaukit::nn::{ActivationSpec, LayerSpec, Network};
use asaukit::training::{
    argmax_rows, binarize_logits, predict_all, row_tensor, train_loop, Loss, TrainConfig, TrainedModel,
};
use asaukit::{Result, SplitMix64};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DatasetConfig, ModelConfig, TaskKind};

/// Sub-stream tags; every random choice of a run derives from the run seed.
const DATA_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;
const TRAIN_STREAM: u64 = 4;

pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    SplitMix64::new(seed).derive(stream).next_u64()
}

/// `Dense(d, hidden) -> act -> Dense(hidden, k)`, flattening image inputs.
pub fn mlp_specs(input_shape: &[usize], hidden: usize, k: usize, act: ActivationSpec) -> Vec<LayerSpec> {
    let d: usize = input_shape.iter().product();
    let mut specs = Vec::new();
    if input_shape.len() > 1 {
        specs.push(LayerSpec::Flatten);
    }
    specs.extend([
        LayerSpec::Dense {
            in_dim: d,
            out_dim: hidden,
        },
        LayerSpec::Activation(act),
        LayerSpec::Dense {
            in_dim: hidden,
            out_dim: k,
        },
    ]);
    specs
}

/// Encoder-decoder producing one logit per pixel:
/// conv, act, pool, conv, act, upsample, conv, act, conv.
pub fn seg_specs(channels: usize, act: ActivationSpec) -> Vec<LayerSpec> {
    let c = channels;
    vec![
        LayerSpec::Conv2d { in_ch: 1, out_ch: c },
        LayerSpec::Activation(act),
        LayerSpec::MaxPool2x2,
        LayerSpec::Conv2d {
            in_ch: c,
            out_ch: 2 * c,
        },
        LayerSpec::Activation(act),
        LayerSpec::Upsample2x,
        LayerSpec::Conv2d {
            in_ch: 2 * c,
            out_ch: c,
        },
        LayerSpec::Activation(act),
        LayerSpec::Conv2d { in_ch: c, out_ch: 1 },
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct RowResult {
    pub activation: String,
    pub metrics: MetricReport,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub diverged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    /// Per-case Dice on the test split, segmentation only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case_dice: Option<Vec<f64>>,
    #[serde(skip)]
    pub model: Option<TrainedModel>,
}

pub enum Splits {
    Labeled(LabeledSet, LabeledSet, LabeledSet),
    Masks(
        asaukit::datasets::MaskSet,
        asaukit::datasets::MaskSet,
        asaukit::datasets::MaskSet,
    ),
}

pub fn prepare_data(task: TaskKind, dataset: &DatasetConfig, split: [f64; 3], seed: u64) -> Result<Splits> {
    let data_seed = sub_seed(seed, DATA_STREAM);
    let spec = SplitSpec {
        fractions: split,
        seed: sub_seed(seed, SPLIT_STREAM),
    };
    let mismatch = || asaukit::Error::InvalidParam(format!("dataset {dataset:?} does not fit task {task:?}"));
    match (task, dataset) {
        (TaskKind::Classification, DatasetConfig::TwoMoons { n, noise_sd }) => {
            let (a, b, c) = split_dataset(&gen_two_moons(*n, *noise_sd, data_seed)?, &spec)?;
            Ok(Splits::Labeled(a, b, c))
        }
        (TaskKind::Classification, DatasetConfig::Blobs { n, k, spread }) => {
            let (a, b, c) = split_dataset(&gen_blobs(*n, *k, *spread, data_seed)?, &spec)?;
            Ok(Splits::Labeled(a, b, c))
        }
        (TaskKind::Classification, DatasetConfig::Idx { images, labels }) => {
            let (a, b, c) = split_dataset(&load_idx(images, labels)?, &spec)?;
            Ok(Splits::Labeled(a, b, c))
        }
        (TaskKind::Segmentation, DatasetConfig::Shapes { n, height, width }) => {
            let (a, b, c) = split_dataset(&gen_shapes_seg(*n, *height, *width, data_seed)?, &spec)?;
            Ok(Splits::Masks(a, b, c))
        }
        _ => Err(mismatch()),
    }
}

/// Scales all three classification splits with statistics from the
/// training split alone. Mask sets pass through.
pub fn standardize_splits(splits: Splits) -> Result<Splits> {
    match splits {
        Splits::Labeled(tr, va, te) => {
            let st = Standardizer::fit(&tr);
            Ok(Splits::Labeled(st.apply(&tr)?, st.apply(&va)?, st.apply(&te)?))
        }
        masks => Ok(masks),
    }
}

fn classify(model: TrainedModel, label: &str, test: &LabeledSet, batch: usize) -> Result<RowResult> {
    let out = predict_all(&model.network, test, batch)?;
    let cm = confusion_from_predictions(test.labels(), &argmax_rows(&out), test.k())?;
    Ok(RowResult {
        activation: label.to_string(),
        metrics: MetricReport::classification(&cm),
        best_epoch: model.best_epoch,
        epochs_run: model.history.len(),
        diverged: model.diverged,
        confusion: Some(cm),
        case_dice: None,
        model: Some(model),
    })
}

fn segment(model: TrainedModel, label: &str, test: &asaukit::datasets::MaskSet, batch: usize) -> Result<RowResult> {
    let pred = binarize_logits(&predict_all(&model.network, test, batch)?);
    let preds: Vec<_> = (0..test.len()).map(|i| row_tensor(&pred, i)).collect();
    let truth: Vec<_> = (0..test.len()).map(|i| test.mask(i)).collect();
    let metrics = MetricReport::segmentation(&preds, &truth)?;
    let case_dice = preds
        .iter()
        .zip(&truth)
        .map(|(p, t)| asaukit::metrics::dice_binary(p, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(RowResult {
        activation: label.to_string(),
        metrics,
        best_epoch: model.best_epoch,
        epochs_run: model.history.len(),
        diverged: model.diverged,
        confusion: None,
        case_dice: Some(case_dice),
        model: Some(model),
    })
}

/// Trains one model per roster entry. Every entry sees the same data, split,
/// weight initialization stream and shuffle stream; only the activation
/// differs. Entries run in parallel and come back in roster order.
pub fn run_roster(
    task: TaskKind,
    roster: &[(String, ActivationSpec)],
    dataset: &DatasetConfig,
    model: &ModelConfig,
    train: &TrainConfig,
    standardize: bool,
    seed: u64,
) -> Result<Vec<RowResult>> {
    let mut splits = prepare_data(task, dataset, train.split, seed)?;
    if standardize {
        splits = standardize_splits(splits)?;
    }
    let cfg = TrainConfig {
        seed: sub_seed(seed, TRAIN_STREAM),
        ..*train
    };
    let init_seed = sub_seed(seed, INIT_STREAM);
    roster
        .par_iter()
        .map(|(label, act)| match &splits {
            Splits::Labeled(tr, va, te) => {
                let shape = &tr.features().shape()[1..];
                let specs = mlp_specs(shape, model.hidden, tr.k(), *act);
                let net = Network::build(shape, &specs, &mut SplitMix64::new(init_seed))?;
                let trained = train_loop(net, tr, va, &cfg, Loss::SoftmaxCe)?;
                classify(trained, label, te, cfg.batch_size)
            }
            Splits::Masks(tr, va, te) => {
                let shape = &tr.images().shape()[1..];
                let net = Network::build(shape, &seg_specs(model.channels, *act), &mut SplitMix64::new(init_seed))?;
                let trained = train_loop(net, tr, va, &cfg, model.seg_loss)?;
                segment(trained, label, te, cfg.batch_size)
            }
        })
        .collect()
}
