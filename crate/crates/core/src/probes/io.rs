// SPDX-License-Identifier: MIT OR Apache-2.0

//! Probe directories: `probe_manifest.json` plus one f32 file per tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::probes::{OptimizerConfig, ProbeKind, ProbeMeta, ProbeParameters, ProbeWeights};
use crate::rawfile::{self, DType, TensorEntry};
use crate::scalar::Scalar;

pub const PROBE_MANIFEST_FILE: &str = "probe_manifest.json";
const PROBE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeManifest {
    pub format_version: u32,
    pub kind: ProbeKind,
    pub layer: usize,
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub val_accuracy: f64,
    pub num_classes: usize,
    pub input_dim: usize,
    #[serde(default)]
    pub hidden_dim: Option<usize>,
    #[serde(default)]
    pub has_bias: bool,
    pub config: OptimizerConfig,
    pub tensors: Vec<TensorEntry>,
}

fn shape_of<T: Scalar>(weights: &ProbeWeights<T>, name: &str) -> Vec<usize> {
    let c = weights.num_classes();
    let d = weights.input_dim();
    let h = weights.hidden_dim().unwrap_or(0);
    match name {
        "w_c" => vec![c, d],
        "b_c" | "b_2" => vec![c],
        "w_1" => vec![h, d],
        "w_2" => vec![c, h],
        "b_1" => vec![h],
        _ => unreachable!("unknown tensor {name}"),
    }
}

/// Writes the probe into `dir`, creating it if needed. Tensors are stored as f32.
pub fn save_probe<T: Scalar>(probe: &ProbeParameters<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let w = &probe.weights;
    let mut entries = Vec::new();
    for (name, data) in w.tensors() {
        let file = format!("{name}.f32");
        let values: Vec<f32> = data.iter().map(|v| v.as_f32()).collect();
        rawfile::write_f32(&dir.join(&file), &values)?;
        entries.push(TensorEntry::new(name, file, DType::F32, shape_of(w, name)));
    }
    let has_bias = match w {
        ProbeWeights::Linear { .. } => true,
        ProbeWeights::Mlp { b1, b2, .. } => b1.is_some() || b2.is_some(),
    };
    let manifest = ProbeManifest {
        format_version: PROBE_FORMAT_VERSION,
        kind: w.kind(),
        layer: probe.meta.layer,
        seed: probe.meta.seed,
        epochs_run: probe.meta.epochs_run,
        best_epoch: probe.meta.best_epoch,
        val_accuracy: probe.meta.best_val_accuracy,
        num_classes: w.num_classes(),
        input_dim: w.input_dim(),
        hidden_dim: w.hidden_dim(),
        has_bias,
        config: probe.meta.config.clone(),
        tensors: entries,
    };
    rawfile::write_json(&dir.join(PROBE_MANIFEST_FILE), &manifest)
}

pub fn read_probe_manifest(dir: &Path) -> Result<ProbeManifest> {
    let m: ProbeManifest = rawfile::read_json(&dir.join(PROBE_MANIFEST_FILE))?;
    if m.format_version != PROBE_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: m.format_version,
            supported: PROBE_FORMAT_VERSION,
        });
    }
    Ok(m)
}

/// Loads a probe saved by [`save_probe`], converting to `T`.
pub fn load_probe<T: Scalar>(dir: &Path) -> Result<ProbeParameters<T>> {
    let m = read_probe_manifest(dir)?;
    let load = |name: &str, shape: Vec<usize>| -> Result<Option<Vec<T>>> {
        let Some(entry) = m.tensors.iter().find(|t| t.name == name) else {
            return Ok(None);
        };
        if entry.shape != shape {
            return Err(Error::ShapeMismatch {
                what: name.to_string(),
                expected: shape,
                actual: entry.shape.clone(),
            });
        }
        let raw = rawfile::read_f32(dir, entry)?;
        Ok(Some(raw.into_iter().map(|v| T::lit(v as f64)).collect()))
    };
    let required = |name: &str, shape: Vec<usize>| -> Result<Vec<T>> {
        load(name, shape)?
            .ok_or_else(|| Error::InvalidBundle(format!("probe is missing tensor {name}")))
    };
    let (c, d) = (m.num_classes, m.input_dim);
    let weights = match m.kind {
        ProbeKind::Linear => ProbeWeights::Linear {
            w: Matrix::new(c, d, required("w_c", vec![c, d])?)?,
            b: required("b_c", vec![c])?,
        },
        ProbeKind::Mlp => {
            let h = m
                .hidden_dim
                .ok_or_else(|| Error::InvalidBundle("MLP probe without hidden_dim".into()))?;
            ProbeWeights::Mlp {
                w1: Matrix::new(h, d, required("w_1", vec![h, d])?)?,
                w2: Matrix::new(c, h, required("w_2", vec![c, h])?)?,
                b1: load("b_1", vec![h])?,
                b2: load("b_2", vec![c])?,
            }
        }
    };
    Ok(ProbeParameters {
        weights,
        meta: ProbeMeta {
            layer: m.layer,
            seed: m.seed,
            epochs_run: m.epochs_run,
            best_epoch: m.best_epoch,
            best_val_accuracy: m.val_accuracy,
            config: m.config,
        },
    })
}
