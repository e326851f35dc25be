//! Plain-text network checkpoints.
//!
//! ```text
//! ASAUKIT-CKPT v1
//! input 1,32,32
//! layer conv2d 1 8
//! layer act asau per_channel 0011
//! layer maxpool2x2
//! ...
//! params 123
//! layer0.weight[0]=-1.2345678901234567e-1
//! ...
//! ```
//!
//! The `layer` lines describe the structure; the `params` block lists every
//! scalar in registration order with 17 significant digits. Loading rebuilds
//! the structure and requires each scalar exactly once.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::activation::{AsauParams, BaselineKind};
use crate::approx::fmt17;
use crate::error::{Error, Result};
use crate::nn::layer::{ActivationSpec, AsauMask, Granularity, LayerSpec};
use crate::nn::network::Network;
use crate::nn::param::scalar_name;
use crate::rng::SplitMix64;

pub const CHECKPOINT_MAGIC: &str = "ASAUKIT-CKPT v1";

const MAX_DIM: usize = 1 << 16;

/// Weight and bias scalars the dense and conv layers of `specs` will register.
fn weight_count(specs: &[LayerSpec]) -> Option<usize> {
    specs.iter().try_fold(0usize, |acc, s| match *s {
        LayerSpec::Dense { in_dim, out_dim } => acc.checked_add(in_dim.checked_mul(out_dim)?.checked_add(out_dim)?),
        LayerSpec::Conv2d { in_ch, out_ch } => {
            acc.checked_add(in_ch.checked_mul(out_ch)?.checked_mul(9)?.checked_add(out_ch)?)
        }
        _ => Some(acc),
    })
}

fn describe(spec: &LayerSpec) -> String {
    match spec {
        LayerSpec::Dense { in_dim, out_dim } => format!("dense {in_dim} {out_dim}"),
        LayerSpec::Conv2d { in_ch, out_ch } => format!("conv2d {in_ch} {out_ch}"),
        LayerSpec::MaxPool2x2 => "maxpool2x2".into(),
        LayerSpec::Flatten => "flatten".into(),
        LayerSpec::Upsample2x => "upsample2x".into(),
        LayerSpec::Activation(ActivationSpec::Baseline { kind, trainable_slope }) => match kind {
            BaselineKind::Relu => "act relu".into(),
            BaselineKind::Mish => "act mish".into(),
            BaselineKind::LeakyRelu { .. } => format!("act leaky_relu {}", *trainable_slope as u8),
            BaselineKind::Prelu { .. } => format!("act prelu {}", *trainable_slope as u8),
        },
        LayerSpec::Activation(ActivationSpec::Asau {
            trainable, granularity, ..
        }) => {
            let g = match granularity {
                Granularity::PerLayer => "per_layer",
                Granularity::PerChannel => "per_channel",
            };
            let mask: String = trainable
                .as_array()
                .iter()
                .map(|b| if *b { '1' } else { '0' })
                .collect();
            format!("act asau {g} {mask}")
        }
    }
}

fn parse_layer(words: &[&str], line: usize) -> Result<LayerSpec> {
    let dim = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .ok()
            .filter(|v| *v > 0 && *v <= MAX_DIM)
            .ok_or_else(|| Error::parse(line, format!("bad dimension {s:?}")))
    };
    let flag = |s: &str| -> Result<bool> {
        match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(Error::parse(line, format!("bad flag {s:?}"))),
        }
    };
    let spec = match words {
        ["dense", i, o] => LayerSpec::Dense {
            in_dim: dim(i)?,
            out_dim: dim(o)?,
        },
        ["conv2d", i, o] => LayerSpec::Conv2d {
            in_ch: dim(i)?,
            out_ch: dim(o)?,
        },
        ["maxpool2x2"] => LayerSpec::MaxPool2x2,
        ["flatten"] => LayerSpec::Flatten,
        ["upsample2x"] => LayerSpec::Upsample2x,
        ["act", "relu"] => LayerSpec::Activation(ActivationSpec::relu()),
        ["act", "mish"] => LayerSpec::Activation(ActivationSpec::mish()),
        ["act", "leaky_relu", t] => LayerSpec::Activation(ActivationSpec::Baseline {
            kind: BaselineKind::leaky_relu(),
            trainable_slope: flag(t)?,
        }),
        ["act", "prelu", t] => LayerSpec::Activation(ActivationSpec::Baseline {
            kind: BaselineKind::Prelu { slope: 0.25 },
            trainable_slope: flag(t)?,
        }),
        ["act", "asau", g, mask] => {
            let granularity = match *g {
                "per_layer" => Granularity::PerLayer,
                "per_channel" => Granularity::PerChannel,
                other => return Err(Error::parse(line, format!("unknown granularity {other:?}"))),
            };
            let bits: Vec<char> = mask.chars().collect();
            if bits.len() != 4 {
                return Err(Error::parse(line, format!("mask must have 4 digits, got {mask:?}")));
            }
            let mut m = [false; 4];
            for (slot, c) in m.iter_mut().zip(&bits) {
                *slot = flag(&c.to_string())?;
            }
            LayerSpec::Activation(ActivationSpec::Asau {
                params: AsauParams::default(),
                trainable: AsauMask::from_array(m),
                granularity,
            })
        }
        _ => return Err(Error::parse(line, format!("unknown layer {:?}", words.join(" ")))),
    };
    Ok(spec)
}

pub fn to_checkpoint(network: &Network) -> String {
    let mut out = String::new();
    out.push_str(CHECKPOINT_MAGIC);
    out.push('\n');
    let dims: Vec<String> = network.input_shape().iter().map(|d| d.to_string()).collect();
    let _ = writeln!(out, "input {}", dims.join(","));
    for spec in network.specs() {
        let _ = writeln!(out, "layer {}", describe(spec));
    }
    let scalars = network.params().scalars();
    let _ = writeln!(out, "params {}", scalars.len());
    for (name, value, _, _) in scalars {
        let _ = writeln!(out, "{name}={}", fmt17(value));
    }
    out
}

pub fn from_checkpoint(text: &str) -> Result<Network> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l == CHECKPOINT_MAGIC => {}
        _ => return Err(Error::parse(1, format!("missing {CHECKPOINT_MAGIC:?} header"))),
    }
    let (ln, input_line) = lines.next().ok_or_else(|| Error::parse(2, "missing input line"))?;
    let dims = input_line
        .strip_prefix("input ")
        .ok_or_else(|| Error::parse(ln, "expected `input <dims>`"))?;
    let input_shape = dims
        .split(',')
        .map(|d| {
            d.parse::<usize>()
                .ok()
                .filter(|v| *v > 0 && *v <= MAX_DIM)
                .ok_or_else(|| Error::parse(ln, format!("bad input dimension {d:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if input_shape.len() > 3 {
        return Err(Error::parse(ln, "input rank above 3"));
    }

    let mut specs = Vec::new();
    let count = loop {
        let (ln, l) = lines.next().ok_or_else(|| Error::parse(0, "missing params block"))?;
        if let Some(rest) = l.strip_prefix("layer ") {
            let words: Vec<&str> = rest.split_whitespace().collect();
            specs.push(parse_layer(&words, ln)?);
        } else if let Some(n) = l.strip_prefix("params ") {
            break n
                .parse::<usize>()
                .map_err(|_| Error::parse(ln, format!("bad parameter count {n:?}")))?;
        } else {
            return Err(Error::parse(ln, format!("unexpected line {l:?}")));
        }
    };

    let mut values: HashMap<&str, f64> = HashMap::new();
    for (ln, l) in lines {
        if l.is_empty() {
            continue;
        }
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| Error::parse(ln, "expected name=value"))?;
        let v: f64 = v
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::parse(ln, format!("bad value {v:?}")))?;
        if values.insert(k, v).is_some() {
            return Err(Error::parse(ln, format!("duplicate parameter {k:?}")));
        }
    }
    if values.len() != count {
        return Err(Error::Format(format!(
            "header promises {count} parameters, found {}",
            values.len()
        )));
    }

    if weight_count(&specs).is_none_or(|w| w > count) {
        return Err(Error::Format(format!(
            "structure needs more than the {count} parameters present"
        )));
    }
    let mut network = Network::build(&input_shape, &specs, &mut SplitMix64::new(0))?;
    let expected = network.params().scalar_count();
    if expected != count {
        return Err(Error::Format(format!(
            "structure needs {expected} parameters, checkpoint has {count}"
        )));
    }
    for p in network.params_mut().iter_mut() {
        let len = p.values.len();
        for (i, slot) in p.values.iter_mut().enumerate() {
            let key = scalar_name(&p.name, i, len);
            *slot = *values
                .get(key.as_str())
                .ok_or_else(|| Error::Format(format!("checkpoint lacks parameter {key:?}")))?;
        }
    }
    Ok(network)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn sample_network() -> Network {
        Network::build(
            &[1, 4, 4],
            &[
                LayerSpec::Conv2d { in_ch: 1, out_ch: 2 },
                LayerSpec::Activation(ActivationSpec::Asau {
                    params: AsauParams::new(0.0, 1.0, 0.7, 3.0).unwrap(),
                    trainable: AsauMask::ALL,
                    granularity: Granularity::PerChannel,
                }),
                LayerSpec::MaxPool2x2,
                LayerSpec::Upsample2x,
                LayerSpec::Activation(ActivationSpec::prelu(0.2)),
                LayerSpec::Flatten,
                LayerSpec::Dense { in_dim: 32, out_dim: 3 },
                LayerSpec::Activation(ActivationSpec::leaky_relu()),
                LayerSpec::Activation(ActivationSpec::mish()),
                LayerSpec::Activation(ActivationSpec::relu()),
            ],
            &mut SplitMix64::new(8),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let net = sample_network();
        let text = to_checkpoint(&net);
        assert!(text.starts_with("ASAUKIT-CKPT v1\n"));
        let back = from_checkpoint(&text).unwrap();
        assert_eq!(back.params().scalars(), net.params().scalars());
        assert_eq!(back.specs().len(), net.specs().len());
        let x = Tensor::from_fn(&[2, 1, 4, 4], |i| (i as f64 * 0.31).sin());
        assert_eq!(back.predict(&x).unwrap(), net.predict(&x).unwrap());
        assert_eq!(to_checkpoint(&back), text);
    }

    #[test]
    fn rejects_damaged_files() {
        let text = to_checkpoint(&sample_network());
        assert!(from_checkpoint("").is_err());
        assert!(from_checkpoint(&text.replace("v1", "v2")).is_err());
        // Drop the last parameter line.
        let truncated: String = text
            .lines()
            .take(text.lines().count() - 1)
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(from_checkpoint(&truncated).is_err());
        assert!(from_checkpoint(&text.replace("layer dense 32 3", "layer dense 31 3")).is_err());
        assert!(from_checkpoint(&text.replace("layer maxpool2x2", "layer pool")).is_err());
        let dup = format!("{text}layer0.bias[0]=1\n");
        assert!(from_checkpoint(&dup).is_err());
    }
}
