//! Weight bundle file: a short text preamble, a JSON manifest, then raw
//! little-endian `f32` data. See `docs/weights.md` for the normative layout.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::ModelConfig;

pub const WEIGHTS_MAGIC: &str = "CIAF-WEIGHTS";
pub const WEIGHTS_VERSION: u32 = 1;

/// Scale applied to the second convolution of every residual branch after
/// fan-in initialisation, so that stacked Resblocks and the recurrence stay
/// close to unit gain.
pub const RESIDUAL_INIT_SCALE: f32 = 0.1;

/// Convolutions with no activation after them.
const LINEAR_OUTPUT: [&str; 3] = ["tail", "out", "mask.2"];

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("not a weight bundle: {0}")]
    BadHeader(String),
    #[error("unsupported weight bundle version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("checksum mismatch: manifest says {expected}, content hashes to {actual}")]
    Checksum { expected: String, actual: String },
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("tensor `{name}` has shape {actual:?}, expected {expected:?}")]
    WrongShape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("unexpected tensor `{0}`")]
    UnexpectedTensor(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Named parameter tensors plus the architecture they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightBundle {
    pub config: ModelConfig,
    tensors: BTreeMap<String, NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    config: ModelConfig,
    checksum: String,
    tensors: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the data section.
    offset: u64,
}

impl WeightBundle {
    pub fn new(config: ModelConfig, tensors: BTreeMap<String, NamedTensor>) -> Result<Self, WeightsError> {
        let b = Self { config, tensors };
        b.validate()?;
        Ok(b)
    }

    pub fn get(&self, name: &str) -> Result<&NamedTensor, WeightsError> {
        self.tensors
            .get(name)
            .ok_or_else(|| WeightsError::MissingTensor(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut NamedTensor> {
        self.tensors.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Every tensor the config requires is present with its exact shape, and
    /// nothing else is.
    pub fn validate(&self) -> Result<(), WeightsError> {
        let required = self.config.required_tensors();
        for (name, shape) in &required {
            let t = self.get(name)?;
            if &t.shape != shape {
                return Err(WeightsError::WrongShape {
                    name: name.clone(),
                    expected: shape.clone(),
                    actual: t.shape.clone(),
                });
            }
            if t.data.len() != t.numel() {
                return Err(WeightsError::Manifest(format!(
                    "tensor `{name}` data length disagrees with shape"
                )));
            }
        }
        if let Some(extra) = self.tensors.keys().find(|k| !required.iter().any(|(n, _)| n == *k)) {
            return Err(WeightsError::UnexpectedTensor(extra.clone()));
        }
        Ok(())
    }
}

fn checksum(tensors: &BTreeMap<String, NamedTensor>, payload: &[u8]) -> String {
    let mut h = Sha256::new();
    for (name, t) in tensors {
        h.update(name.as_bytes());
        h.update([0u8]);
        for d in &t.shape {
            h.update((*d as u64).to_le_bytes());
        }
    }
    h.update(payload);
    format!("sha256:{}", hex::encode(h.finalize()))
}

pub fn save_weights(bundle: &WeightBundle) -> Result<Vec<u8>, WeightsError> {
    bundle.validate()?;
    let mut payload = Vec::new();
    let mut entries = Vec::with_capacity(bundle.tensors.len());
    for (name, t) in &bundle.tensors {
        entries.push(ManifestEntry {
            name: name.clone(),
            shape: t.shape.clone(),
            offset: payload.len() as u64,
        });
        for v in &t.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: WEIGHTS_MAGIC.to_string(),
        version: WEIGHTS_VERSION,
        config: bundle.config,
        checksum: checksum(&bundle.tensors, &payload),
        tensors: entries,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| WeightsError::Manifest(e.to_string()))?;
    let mut out = format!("{WEIGHTS_MAGIC} {WEIGHTS_VERSION} {}\n", json.len()).into_bytes();
    out.extend_from_slice(json.as_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn load_weights(bytes: &[u8]) -> Result<WeightBundle, WeightsError> {
    let nl = bytes
        .iter()
        .take(64)
        .position(|&b| b == b'\n')
        .ok_or_else(|| WeightsError::BadHeader("no preamble line".into()))?;
    let preamble =
        std::str::from_utf8(&bytes[..nl]).map_err(|_| WeightsError::BadHeader("preamble is not UTF-8".into()))?;
    let mut parts = preamble.split(' ');
    if parts.next() != Some(WEIGHTS_MAGIC) {
        return Err(WeightsError::BadHeader(format!("preamble `{preamble}`")));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| WeightsError::BadHeader("missing version".into()))?;
    if version != WEIGHTS_VERSION {
        return Err(WeightsError::UnsupportedVersion(version));
    }
    let json_len: usize = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| WeightsError::BadHeader("missing manifest length".into()))?;
    let json_end = (nl + 1)
        .checked_add(json_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| WeightsError::Manifest("manifest runs past end of file".into()))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes[nl + 1..json_end]).map_err(|e| WeightsError::Manifest(e.to_string()))?;
    if manifest.format != WEIGHTS_MAGIC {
        return Err(WeightsError::BadHeader(format!("format `{}`", manifest.format)));
    }
    if manifest.version != WEIGHTS_VERSION {
        return Err(WeightsError::UnsupportedVersion(manifest.version));
    }

    let payload = &bytes[json_end..];
    let mut tensors = BTreeMap::new();
    let mut expected_offset = 0u64;
    for e in &manifest.tensors {
        let numel: usize = e.shape.iter().product();
        let len = numel as u64 * 4;
        if e.offset != expected_offset || e.offset + len > payload.len() as u64 {
            return Err(WeightsError::Manifest(format!(
                "tensor `{}` has a bad offset or length",
                e.name
            )));
        }
        let start = e.offset as usize;
        let data = payload[start..start + numel * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if tensors
            .insert(
                e.name.clone(),
                NamedTensor {
                    shape: e.shape.clone(),
                    data,
                },
            )
            .is_some()
        {
            return Err(WeightsError::Manifest(format!("duplicate tensor `{}`", e.name)));
        }
        expected_offset += len;
    }
    if expected_offset != payload.len() as u64 {
        return Err(WeightsError::Manifest(format!(
            "data section is {} bytes, manifest covers {expected_offset}",
            payload.len()
        )));
    }
    let actual = checksum(&tensors, payload);
    if actual != manifest.checksum {
        return Err(WeightsError::Checksum {
            expected: manifest.checksum,
            actual,
        });
    }
    WeightBundle::new(manifest.config, tensors)
}

/// Deterministic Kaiming-normal initialisation with zero biases.
///
/// Convolutions followed by the leaky ReLU draw from `N(0, 2 / fan_in)`; the
/// linear ones (tail, output, mask logits) from `N(0, 1 / fan_in)`. The second
/// convolution of every residual branch is further scaled by
/// [`RESIDUAL_INIT_SCALE`].
pub fn init_random_weights(config: &ModelConfig, seed: u64) -> WeightBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = BTreeMap::new();
    for (name, shape) in config.required_tensors() {
        let numel: usize = shape.iter().product();
        let data = if name.ends_with(".bias") {
            vec![0.0; numel]
        } else {
            let fan_in: usize = shape[1..].iter().product();
            let gain = if LINEAR_OUTPUT.contains(&name.trim_end_matches(".weight")) {
                1.0
            } else {
                2.0
            };
            let std = (gain / fan_in as f64).sqrt() as f32;
            let normal = Normal::new(0.0f32, std).expect("finite std");
            let scale = if name.starts_with("body.") && name.contains(".conv2.") {
                RESIDUAL_INIT_SCALE
            } else {
                1.0
            };
            (0..numel).map(|_| normal.sample(&mut rng) * scale).collect()
        };
        tensors.insert(name, NamedTensor { shape, data });
    }
    WeightBundle::new(*config, tensors).expect("generated bundle matches its config")
}
