//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! 8 bytes   magic "IPCAECK1"
//! u64       header length in bytes
//! header    UTF-8 JSON: run config, task, variant, epoch, class names and
//!           the name and shape of every tensor, in storage order
//! f64 ...   tensor data, row-major, in header order
//! ```

use std::path::Path;

use ipcae_core::concrete::{SelectorParams, Variant};
use ipcae_core::model::{CaeModel, Layer, Mlp};
use ipcae_core::objectives::Task;
use ipcae_core::training::Checkpoint;
use ipcae_core::{Shape, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"IPCAECK1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    run: RunConfig,
    task: Task,
    variant: Variant,
    epoch: usize,
    train_weight: bool,
    class_names: Vec<String>,
    tensors: Vec<TensorEntry>,
}

/// A checkpoint with the config and label order it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedRun {
    pub checkpoint: Checkpoint,
    pub run: RunConfig,
    pub class_names: Vec<String>,
}

fn named_tensors(model: &CaeModel) -> Vec<(String, &Tensor)> {
    let s = &model.selector;
    let mut out = vec![("psi".to_string(), &s.psi)];
    if let Some(w) = &s.weight {
        out.push(("weight".into(), w));
    }
    if let Some(b) = &s.bias {
        out.push(("bias".into(), b));
    }
    for (i, l) in model.decoder.layers.iter().enumerate() {
        out.push((format!("decoder.{i}.weight"), &l.weight));
        out.push((format!("decoder.{i}.bias"), &l.bias));
    }
    out
}

pub fn encode(saved: &SavedRun) -> Result<Vec<u8>> {
    let model = &saved.checkpoint.model;
    let tensors = named_tensors(model);
    let header = Header {
        run: saved.run.clone(),
        task: saved.checkpoint.task,
        variant: model.selector.variant,
        epoch: saved.checkpoint.epoch,
        train_weight: model.train_weight,
        class_names: saved.class_names.clone(),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().dims(),
            })
            .collect(),
    };
    let json =
        serde_json::to_vec(&header).map_err(|e| Error::input(format!("checkpoint header: {e}")))?;
    let mut out = Vec::with_capacity(16 + json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in &tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<SavedRun> {
    let bad = |what: &str| Error::input(format!("not a valid checkpoint: {what}"));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic bytes"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(16..16 + len)
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
    let mut data = &bytes[16 + len..];
    let mut take = |entry: &TensorEntry| -> Result<Tensor> {
        let shape = match entry.shape[..] {
            [n] => Shape::Vector(n),
            [r, c] => Shape::Matrix(r, c),
            _ => return Err(bad("tensor rank")),
        };
        let n = shape.numel();
        let raw = data
            .get(..n * 8)
            .ok_or_else(|| bad("truncated tensor data"))?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        data = &data[n * 8..];
        Ok(Tensor::new(shape, values)?)
    };
    let mut psi = None;
    let mut weight = None;
    let mut bias = None;
    let mut layers: Vec<(Option<Tensor>, Option<Tensor>)> = Vec::new();
    for entry in &header.tensors {
        let t = take(entry)?;
        match entry.name.as_str() {
            "psi" => psi = Some(t),
            "weight" => weight = Some(t),
            "bias" => bias = Some(t),
            name => {
                let rest = name.strip_prefix("decoder.").ok_or_else(|| bad(name))?;
                let (idx, part) = rest.split_once('.').ok_or_else(|| bad(name))?;
                let idx: usize = idx.parse().map_err(|_| bad(name))?;
                if layers.len() <= idx {
                    layers.resize(idx + 1, (None, None));
                }
                match part {
                    "weight" => layers[idx].0 = Some(t),
                    "bias" => layers[idx].1 = Some(t),
                    _ => return Err(bad(name)),
                }
            }
        }
    }
    if !data.is_empty() {
        return Err(bad("trailing bytes"));
    }
    let layers = layers
        .into_iter()
        .map(|l| match l {
            (Some(weight), Some(bias)) => Ok(Layer { weight, bias }),
            _ => Err(bad("incomplete decoder layer")),
        })
        .collect::<Result<Vec<_>>>()?;
    let model = CaeModel {
        selector: SelectorParams {
            variant: header.variant,
            psi: psi.ok_or_else(|| bad("missing psi"))?,
            weight,
            bias,
        },
        decoder: Mlp { layers },
        train_weight: header.train_weight,
    };
    model.validate()?;
    Ok(SavedRun {
        checkpoint: Checkpoint {
            epoch: header.epoch,
            task: header.task,
            model,
        },
        run: header.run,
        class_names: header.class_names,
    })
}

pub fn save(path: &Path, saved: &SavedRun) -> Result<()> {
    std::fs::write(path, encode(saved)?).map_err(|e| Error::write(path, e))
}

pub fn load(path: &Path) -> Result<SavedRun> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::input(format!("cannot read checkpoint {}: {e}", path.display())))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DataConfig;
    use ipcae_core::data::SyntheticSpec;
    use ipcae_core::training::TrainConfig;

    fn saved(variant: Variant, bias: bool) -> SavedRun {
        let train = TrainConfig {
            variant,
            bias,
            hidden: vec![4, 3],
            ..TrainConfig::new(Task::Classification, 2)
        };
        let model = train.init_model(5, 3).unwrap();
        let spec = SyntheticSpec {
            task: Task::Classification,
            n: 10,
            d: 5,
            k_true: 2,
            classes: 3,
            noise: 1.0,
            separation: 3.0,
            seed: 1,
        };
        SavedRun {
            checkpoint: Checkpoint {
                epoch: 7,
                task: Task::Classification,
                model,
            },
            run: RunConfig {
                train,
                data: DataConfig::synthetic(spec),
                seeds: None,
            },
            class_names: vec!["a".into(), "b".into(), "c".into()],
        }
    }

    #[test]
    fn round_trip() {
        for (variant, bias) in [
            (Variant::Direct, false),
            (Variant::ScalarIp, false),
            (Variant::DiagIp, false),
            (Variant::FullIp, true),
        ] {
            let s = saved(variant, bias);
            assert_eq!(decode(&encode(&s).unwrap()).unwrap(), s);
        }
    }

    #[test]
    fn corruption_is_rejected() {
        let bytes = encode(&saved(Variant::FullIp, false)).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"not a checkpoint").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
