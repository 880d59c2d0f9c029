//! Model files: one line of JSON header followed by STF1 tensors.
//!
//! The header records the configuration, architecture, normalization and
//! the name, shape and byte range of every tensor. Tensors appear in layer
//! order, weight (`out × in × k × k`) before bias (`out`).

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::net::{Architecture, Network};
use super::train::BlindSpotModel;
use super::BlindSpotConfig;
use crate::error::{Error, Result};
use crate::tensor;

pub const MODEL_FORMAT: &str = "sinodn-blindspot";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: BlindSpotConfig,
    architecture: Architecture,
    parameter_count: usize,
    norm_mean: f64,
    norm_std: f64,
    tensors: Vec<TensorEntry>,
}

pub fn encode_model(model: &BlindSpotModel) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let mut tensors = Vec::new();
    for layer in &model.network.layers {
        let k = layer.kernel;
        let w = layer
            .weight
            .clone()
            .into_shape_with_order(IxDyn(&[layer.out_ch, layer.in_ch, k, k]))
            .map_err(|e| Error::shape(e.to_string()))?;
        let b = layer.bias.clone().into_dyn();
        for (suffix, t) in [("weight", w), ("bias", b)] {
            let bytes = tensor::encode(&t)?;
            tensors.push(TensorEntry {
                name: format!("{}.{suffix}", layer.name),
                shape: t.shape().to_vec(),
                offset: payload.len(),
                length: bytes.len(),
            });
            payload.extend_from_slice(&bytes);
        }
    }
    let header = Header {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        config: model.config,
        architecture: model.network.arch,
        parameter_count: model.network.param_count(),
        norm_mean: model.norm_mean,
        norm_std: model.norm_std,
        tensors,
    };
    let mut out = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    out.push(b'\n');
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<BlindSpotModel> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("model file has no header line".into()))?;
    let header: Header =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::Format(format!("model header: {e}")))?;
    if header.format != MODEL_FORMAT || header.version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "unsupported model format {} v{}",
            header.format, header.version
        )));
    }
    header.config.validate()?;
    if header.config.architecture() != header.architecture {
        return Err(Error::Format("architecture does not match configuration".into()));
    }
    if !(header.norm_std > 0.0 && header.norm_std.is_finite() && header.norm_mean.is_finite()) {
        return Err(Error::Format("invalid normalization statistics".into()));
    }
    let payload = &bytes[nl + 1..];
    let mut network = Network::<f32>::zeros(header.architecture);
    let expected = 2 * network.layers.len();
    if header.tensors.len() != expected {
        return Err(Error::Format(format!(
            "expected {expected} tensors, found {}",
            header.tensors.len()
        )));
    }
    let read = |entry: &TensorEntry, name: &str| -> Result<ArrayD<f32>> {
        if entry.name != name {
            return Err(Error::Format(format!("expected tensor `{name}`, found `{}`", entry.name)));
        }
        let end = entry
            .offset
            .checked_add(entry.length)
            .filter(|&e| e <= payload.len())
            .ok_or_else(|| Error::Format(format!("tensor `{name}` exceeds the payload")))?;
        let t = tensor::decode(&payload[entry.offset..end])?;
        if t.shape() != entry.shape.as_slice() {
            return Err(Error::Format(format!("tensor `{name}` shape mismatch")));
        }
        Ok(t)
    };
    for (li, layer) in network.layers.iter_mut().enumerate() {
        let w = read(&header.tensors[2 * li], &format!("{}.weight", layer.name))?;
        let b = read(&header.tensors[2 * li + 1], &format!("{}.bias", layer.name))?;
        let k = layer.kernel;
        if w.shape() != [layer.out_ch, layer.in_ch, k, k] || b.shape() != [layer.out_ch] {
            return Err(Error::Format(format!("layer `{}` has wrong tensor shapes", layer.name)));
        }
        layer.weight = Array2::from_shape_vec(layer.weight.dim(), w.iter().copied().collect())
            .map_err(|e| Error::shape(e.to_string()))?;
        layer.bias = Array1::from_iter(b.iter().copied());
    }
    if network.param_count() != header.parameter_count {
        return Err(Error::Format("parameter count mismatch".into()));
    }
    Ok(BlindSpotModel {
        config: BlindSpotConfig {
            exec: Default::default(),
            ..header.config
        },
        norm_mean: header.norm_mean,
        norm_std: header.norm_std,
        network,
    })
}

pub fn save_model(model: &BlindSpotModel, path: &Path) -> Result<()> {
    let bytes = encode_model(model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<BlindSpotModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::blindspot::Variant;

    fn model(variant: Variant) -> BlindSpotModel {
        let cfg = BlindSpotConfig {
            variant,
            base_channels: 4,
            seed: 12,
            ..BlindSpotConfig::default()
        };
        BlindSpotModel::initialized(cfg, 0.7, 0.2)
    }

    #[test]
    fn round_trip_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        for v in [Variant::N2v, Variant::N2v2] {
            let m = model(v);
            let path = dir.path().join(format!("{v}.model"));
            save_model(&m, &path).unwrap();
            assert_eq!(load_model(&path).unwrap(), m);
        }
    }

    #[test]
    fn header_lists_named_tensors_in_order() {
        let bytes = encode_model(&model(Variant::N2v)).unwrap();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let h: serde_json::Value = serde_json::from_slice(&bytes[..nl]).unwrap();
        let names: Vec<&str> = h["tensors"].as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
        assert_eq!(names[0], "enc0.weight");
        assert_eq!(names[1], "enc0.bias");
        assert_eq!(*names.last().unwrap(), "out.bias");
        assert_eq!(&bytes[nl + 1..nl + 5], b"STF1");
        assert_eq!(h["norm_std"], 0.2);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode_model(&model(Variant::N2v)).unwrap();
        assert!(decode_model(&bytes[..bytes.len() - 10]).is_err());
        assert!(decode_model(b"no newline").is_err());
        let mut swapped = String::from_utf8_lossy(&bytes[..bytes.iter().position(|&b| b == b'\n').unwrap()]).to_string();
        swapped = swapped.replace("\"n2v\"", "\"n2v2\"");
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let mut bad = swapped.into_bytes();
        bad.extend_from_slice(&bytes[nl..]);
        assert!(matches!(decode_model(&bad), Err(Error::Format(_))));
    }
}
