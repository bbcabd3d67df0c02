//! Weight persistence: a JSON manifest describing the layer stack plus a
//! little-endian f32 blob (`GNW1`, u32 value count, values in declaration
//! order).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::network::Network;
use super::spec::{LayerSpec, ModelSpec};
use super::train::TrainConfig;
use super::NnError;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"GNW1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub layer: usize,
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightManifest {
    pub format: String,
    pub kind: String,
    pub arch: String,
    pub spec: ModelSpec,
    pub seed: u64,
    pub train_config: Option<TrainConfig>,
    pub tensors: Vec<TensorEntry>,
    pub param_count: usize,
    /// Blob file name, relative to the manifest.
    pub blob: String,
}

fn tensor_shapes(layer: &LayerSpec, input: &[usize]) -> Vec<Vec<usize>> {
    match *layer {
        LayerSpec::Conv2D { filters, kernel, .. } => vec![vec![kernel[0], kernel[1], input[2], filters], vec![filters]],
        LayerSpec::Dense { units, .. } => vec![vec![input[0], units], vec![units]],
        LayerSpec::BatchNorm => {
            let c = input[input.len() - 1];
            vec![vec![c]; 4]
        }
        _ => vec![],
    }
}

fn io_err(path: &Path, e: std::io::Error) -> NnError {
    NnError::Io(format!("{}: {e}", path.display()))
}

pub fn encode_weights(net: &Network) -> Vec<u8> {
    let values: Vec<f32> = net
        .params()
        .iter()
        .flat_map(|p| p.named())
        .flat_map(|(_, v)| v.iter().map(|&x| x as f32))
        .collect();
    let mut out = Vec::with_capacity(8 + 4 * values.len());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Write `<manifest>` and its blob (`<manifest stem>.bin`) side by side.
pub fn save_network(net: &Network, arch: &str, seed: u64, train_config: Option<&TrainConfig>, manifest_path: &Path) -> Result<WeightManifest, NnError> {
    let shapes = net.spec().shapes()?;
    let mut tensors = Vec::new();
    for (i, (layer, params)) in net.spec().layers.iter().zip(net.params()).enumerate() {
        for ((name, _), shape) in params.named().into_iter().zip(tensor_shapes(layer, &shapes[i])) {
            tensors.push(TensorEntry {
                layer: i,
                name: name.to_string(),
                shape,
            });
        }
    }
    let stem = manifest_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    let blob = format!("{stem}.bin");
    let manifest = WeightManifest {
        format: "GNW1".into(),
        kind: "cnn".into(),
        arch: arch.into(),
        spec: net.spec().clone(),
        seed,
        train_config: train_config.cloned(),
        tensors,
        param_count: net.param_count(),
        blob: blob.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| NnError::Format(e.to_string()))?;
    fs::write(manifest_path, json).map_err(|e| io_err(manifest_path, e))?;
    let blob_path = blob_path(manifest_path, &blob);
    fs::write(&blob_path, encode_weights(net)).map_err(|e| io_err(&blob_path, e))?;
    Ok(manifest)
}

fn blob_path(manifest_path: &Path, blob: &str) -> PathBuf {
    manifest_path.parent().unwrap_or_else(|| Path::new(".")).join(blob)
}

pub fn decode_weights(spec: ModelSpec, bytes: &[u8]) -> Result<Network, NnError> {
    if bytes.len() < 8 || &bytes[..4] != WEIGHTS_MAGIC {
        return Err(NnError::Format("weight blob lacks the GNW1 magic".into()));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() != 8 + 4 * count {
        return Err(NnError::Format(format!(
            "weight blob declares {count} values but holds {} bytes of payload",
            bytes.len() - 8
        )));
    }
    let mut net = Network::zeroed(spec)?;
    if net.param_count() != count {
        return Err(NnError::Format(format!("blob holds {count} values, model needs {}", net.param_count())));
    }
    let mut values = bytes[8..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    for params in net.params_mut() {
        for t in params.named_mut() {
            for slot in t.iter_mut() {
                *slot = values.next().expect("count checked");
            }
        }
    }
    Ok(net)
}

pub fn load_network(manifest_path: &Path) -> Result<(Network, WeightManifest), NnError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| io_err(manifest_path, e))?;
    let manifest: WeightManifest = serde_json::from_str(&text).map_err(|e| NnError::Format(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format != "GNW1" {
        return Err(NnError::Format(format!("unknown weight format {}", manifest.format)));
    }
    let path = blob_path(manifest_path, &manifest.blob);
    let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
    let net = decode_weights(manifest.spec.clone(), &bytes)?;
    Ok((net, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::build_mfcc_cnn;

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let net = Network::new(build_mfcc_cnn(), 7).unwrap();
        let path = dir.path().join("model.json");
        let m = save_network(&net, "mfcc-cnn", 7, None, &path).unwrap();
        assert_eq!(m.param_count, 45_514);
        assert_eq!(m.tensors[0].shape, vec![3, 3, 1, 32]);
        let bytes = fs::read(dir.path().join("model.bin")).unwrap();
        assert_eq!(&bytes[..4], b"GNW1");
        assert_eq!(bytes.len(), 8 + 4 * 45_514);
        let (back, _) = load_network(&path).unwrap();
        for (a, b) in net.params().iter().zip(back.params()) {
            for ((_, x), (_, y)) in a.named().iter().zip(b.named()) {
                for (u, v) in x.iter().zip(y.iter()) {
                    assert_eq!(*u as f32 as f64, *v);
                }
            }
        }
    }

    #[test]
    fn bad_blob_rejected() {
        let spec = build_mfcc_cnn();
        assert!(decode_weights(spec.clone(), b"XXXX\0\0\0\0").is_err());
        let mut b = b"GNW1".to_vec();
        b.extend_from_slice(&3u32.to_le_bytes());
        b.extend_from_slice(&[0; 12]);
        assert!(decode_weights(spec, &b).is_err());
    }
}
