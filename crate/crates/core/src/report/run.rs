// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cell grid execution over a resumable on-disk cache.
//!
//! Cache layout under `output_dir/cache`:
//!
//! ```text
//! experiment.json                                   models, seeds, kinds, failures of the last run
//! cells/{model}/{hash}/{kind}_L{layer}_s{seed}.json one trained cell
//! probes/{model}/{hash}/s{seed}/linear_L{layer}/    linear probe weights used for alignment
//! alignment/{model}/{hash}/s{seed}.json             alignment of one seed
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::alignment::{align_model, label_vocab, ModelAlignment};
use crate::bundle::{read_bundle, split_dataset, ActivationBundle, DatasetSplit};
use crate::error::{Error, Result};
use crate::langid::{Label, RuleTable};
use crate::probes::{
    class_accuracies, evaluate, load_probe, save_probe, train_probe, Dataset, ProbeKind,
};
use crate::rawfile::{read_json, write_json};
use crate::scalar::Scalar;
use crate::stats::CellResult;

use super::emit::emit_tables;
use super::tables::{assemble_rows, group_comparison, group_rows, ModelCells};
use super::{AlignmentSummary, CellFailure, ExperimentConfig, ModelGroup, Precision, ReportBundle};

pub const INDEX_FILE: &str = "experiment.json";
const INDEX_VERSION: u32 = 1;
/// Hex characters of a hash used in cache directory names.
const HASH_PREFIX: usize = 16;

/// One trained cell as stored in the cache.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub model: String,
    pub layer: usize,
    pub seed: u64,
    pub kind: ProbeKind,
    pub config_hash: String,
    /// Fraction of validation samples classified correctly.
    pub val_accuracy: f64,
    /// Per-language recall in the model's language order.
    pub per_language: Vec<Option<f64>>,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    /// File-system safe form of `name`.
    pub key: String,
    pub group: ModelGroup,
    pub bundle: PathBuf,
    /// Layer count including layer 0.
    pub num_layers: usize,
    pub languages: Vec<String>,
    pub cell_hash: String,
    pub align_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentIndex {
    pub format_version: u32,
    pub languages: Vec<String>,
    pub seeds: Vec<u64>,
    pub probe_kinds: Vec<ProbeKind>,
    pub per_seed_ttest: bool,
    pub rule_table_version: String,
    pub models: Vec<ModelInfo>,
    pub failures: Vec<CellFailure>,
}

pub(crate) fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn short(hash: &str) -> &str {
    &hash[..HASH_PREFIX.min(hash.len())]
}

fn sha256_json(value: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

/// Hash of everything that determines a cell's result apart from layer, seed and kind.
pub fn cell_config_hash(bundle: &ActivationBundle, config: &ExperimentConfig) -> String {
    let mut opt = config.optimizer.clone();
    opt.seed = 0;
    sha256_json(&json!({
        "manifest": bundle.manifest,
        "train_per_lang": config.train_per_lang,
        "val_per_lang": config.val_per_lang,
        "split_seed": config.split_seed,
        "optimizer": opt,
        "precision": config.precision,
    }))
}

fn align_config_hash(cell_hash: &str, table: &RuleTable, config: &ExperimentConfig) -> String {
    sha256_json(&json!({
        "cells": cell_hash,
        "rules": table.content_hash(),
        "alignment": config.alignment,
    }))
}

fn cell_path(cache: &Path, m: &ModelInfo, kind: ProbeKind, layer: usize, seed: u64) -> PathBuf {
    cache
        .join("cells")
        .join(&m.key)
        .join(short(&m.cell_hash))
        .join(format!("{kind}_L{layer:03}_s{seed}.json"))
}

fn probe_dir(cache: &Path, m: &ModelInfo, layer: usize, seed: u64) -> PathBuf {
    cache
        .join("probes")
        .join(&m.key)
        .join(short(&m.cell_hash))
        .join(format!("s{seed}"))
        .join(format!("linear_L{layer:03}"))
}

fn alignment_path(cache: &Path, m: &ModelInfo, seed: u64) -> PathBuf {
    cache
        .join("alignment")
        .join(&m.key)
        .join(short(&m.align_hash))
        .join(format!("s{seed}.json"))
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let parent = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let tmp = path.with_extension("json.tmp");
    write_json(&tmp, value)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct LoadedModel {
    info: ModelInfo,
    bundle: ActivationBundle,
    split: DatasetSplit,
}

fn load_model(
    spec: &super::BundleSpec,
    config: &ExperimentConfig,
    table: &RuleTable,
    taken: &[ModelInfo],
) -> Result<LoadedModel> {
    let bundle = read_bundle(&spec.path)?;
    let m = &bundle.manifest;
    if let Some(langs) = &config.languages {
        if langs != &m.languages {
            return Err(Error::InvalidConfig(format!(
                "bundle languages {:?} differ from configured {:?}",
                m.languages, langs
            )));
        }
    }
    if m.num_layers < 2 {
        return Err(Error::InvalidBundle("need at least layers 0 and 1".into()));
    }
    let key = sanitize(&m.model_name);
    if taken.iter().any(|t| t.key == key) {
        return Err(Error::InvalidConfig(format!(
            "duplicate model name {}",
            m.model_name
        )));
    }
    let split = split_dataset(
        &bundle,
        config.train_per_lang,
        config.val_per_lang,
        config.split_seed,
    )?;
    let cell_hash = cell_config_hash(&bundle, config);
    let align_hash = align_config_hash(&cell_hash, table, config);
    let info = ModelInfo {
        name: m.model_name.clone(),
        key,
        group: spec.group,
        bundle: spec.path.clone(),
        num_layers: m.num_layers,
        languages: m.languages.clone(),
        cell_hash,
        align_hash,
    };
    Ok(LoadedModel {
        info,
        bundle,
        split,
    })
}

fn train_cell<T: Scalar>(
    lm: &LoadedModel,
    kind: ProbeKind,
    layer: usize,
    seed: u64,
    config: &ExperimentConfig,
) -> Result<(CellRecord, Option<crate::probes::ProbeParameters<T>>)> {
    let b = &lm.bundle;
    let c = b.num_languages();
    let train = Dataset::<T>::from_layer(&b.layers[layer], &b.labels, &lm.split.train, c)?;
    let val = Dataset::<T>::from_layer(&b.layers[layer], &b.labels, &lm.split.val, c)?;
    let probe = train_probe(
        kind,
        &train,
        &val,
        &config.optimizer.clone().with_seed(seed),
    )?
    .with_layer(layer);
    let record = CellRecord {
        model: lm.info.name.clone(),
        layer,
        seed,
        kind,
        config_hash: lm.info.cell_hash.clone(),
        val_accuracy: evaluate(&probe, &val)?,
        per_language: class_accuracies(&probe, &val)?,
        epochs_run: probe.meta.epochs_run,
        best_epoch: probe.meta.best_epoch,
    };
    Ok((record, (kind == ProbeKind::Linear).then_some(probe)))
}

fn run_cell<T: Scalar>(
    cache: &Path,
    lm: &LoadedModel,
    kind: ProbeKind,
    layer: usize,
    seed: u64,
    config: &ExperimentConfig,
) -> Result<()> {
    let (record, probe) = train_cell::<T>(lm, kind, layer, seed, config)?;
    if let Some(p) = probe {
        let dir = probe_dir(cache, &lm.info, layer, seed);
        let tmp = dir.with_extension("tmp");
        let _ = fs::remove_dir_all(&tmp);
        save_probe(&p, &tmp)?;
        let _ = fs::remove_dir_all(&dir);
        fs::rename(&tmp, &dir).map_err(|e| Error::io(&dir, e))?;
    }
    write_json_atomic(&cell_path(cache, &lm.info, kind, layer, seed), &record)?;
    debug!(
        "{} {kind} layer {layer} seed {seed}: val acc {:.4}",
        lm.info.name, record.val_accuracy
    );
    Ok(())
}

fn align_seed<T: Scalar>(
    cache: &Path,
    lm: &LoadedModel,
    labels: &[Label],
    seed: u64,
    config: &ExperimentConfig,
) -> Result<ModelAlignment> {
    let probes = (0..lm.info.num_layers)
        .map(|l| load_probe::<T>(&probe_dir(cache, &lm.info, l, seed)))
        .collect::<Result<Vec<_>>>()?;
    let emb = lm.bundle.vocab_emb.cast::<T>();
    align_model(
        &probes,
        &emb,
        &lm.bundle.vocab_text,
        labels,
        &lm.info.languages,
        &config.alignment,
    )
}

fn failure(
    model: &str,
    layer: Option<usize>,
    seed: Option<u64>,
    kind: Option<ProbeKind>,
    e: &Error,
) -> CellFailure {
    CellFailure {
        model: model.to_string(),
        layer,
        seed,
        kind,
        error: e.to_string(),
    }
}

/// Trains every missing cell, aligns every seed, writes the cache index and
/// the tables, and returns the report. Cells already in the cache are reused.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ReportBundle> {
    config.validate()?;
    let table = match &config.rule_table {
        Some(p) => RuleTable::from_file(p)?,
        None => RuleTable::builtin().clone(),
    };
    let cache = config.cache_dir();
    fs::create_dir_all(&cache).map_err(|e| Error::io(&cache, e))?;
    let mut failures = Vec::new();
    let mut models: Vec<LoadedModel> = Vec::new();
    for spec in &config.bundles {
        let infos: Vec<ModelInfo> = models.iter().map(|m| m.info.clone()).collect();
        match load_model(spec, config, &table, &infos) {
            Ok(m) => {
                info!(
                    "{}: {} layers, {} train / {} val samples",
                    m.info.name,
                    m.info.num_layers,
                    m.split.train.len(),
                    m.split.val.len()
                );
                models.push(m);
            }
            Err(e) => {
                warn!("skipping bundle {}: {e}", spec.path.display());
                failures.push(failure(
                    &spec.path.display().to_string(),
                    None,
                    None,
                    None,
                    &e,
                ));
            }
        }
    }
    let seeds = config.seed_list();
    let mut jobs = Vec::new();
    let mut cached = 0usize;
    for (mi, m) in models.iter().enumerate() {
        for layer in 0..m.info.num_layers {
            for &seed in &seeds {
                for &kind in &config.probe_kinds {
                    let done = cell_path(&cache, &m.info, kind, layer, seed).is_file()
                        && (kind != ProbeKind::Linear
                            || probe_dir(&cache, &m.info, layer, seed).is_dir());
                    if done {
                        cached += 1;
                    } else {
                        jobs.push((mi, layer, seed, kind));
                    }
                }
            }
        }
    }
    info!("{} cells to train, {cached} cached", jobs.len());
    let cell_failures: Vec<CellFailure> = jobs
        .par_iter()
        .filter_map(|&(mi, layer, seed, kind)| {
            let m = &models[mi];
            let r = match config.precision {
                Precision::F32 => run_cell::<f32>(&cache, m, kind, layer, seed, config),
                Precision::F64 => run_cell::<f64>(&cache, m, kind, layer, seed, config),
            };
            r.err().map(|e| {
                warn!(
                    "{} {kind} layer {layer} seed {seed} failed: {e}",
                    m.info.name
                );
                failure(&m.info.name, Some(layer), Some(seed), Some(kind), &e)
            })
        })
        .collect();
    failures.extend(cell_failures);

    if config.probe_kinds.contains(&ProbeKind::Linear) {
        for m in &models {
            let labels = label_vocab(
                &m.bundle.vocab_text,
                &table,
                m.bundle.manifest.byte_level_bpe,
            );
            let align_failures: Vec<CellFailure> = seeds
                .par_iter()
                .filter_map(|&seed| {
                    let path = alignment_path(&cache, &m.info, seed);
                    if path.is_file() {
                        return None;
                    }
                    let r = match config.precision {
                        Precision::F32 => align_seed::<f32>(&cache, m, &labels, seed, config),
                        Precision::F64 => align_seed::<f64>(&cache, m, &labels, seed, config),
                    }
                    .and_then(|a| write_json_atomic(&path, &a));
                    r.err().map(|e| {
                        warn!("{} alignment seed {seed} failed: {e}", m.info.name);
                        failure(&m.info.name, None, Some(seed), None, &e)
                    })
                })
                .collect();
            failures.extend(align_failures);
        }
    }

    failures.sort();
    let languages = config
        .languages
        .clone()
        .unwrap_or_else(|| union_languages(models.iter().map(|m| &m.info)));
    let index = ExperimentIndex {
        format_version: INDEX_VERSION,
        languages,
        seeds,
        probe_kinds: config.probe_kinds.clone(),
        per_seed_ttest: config.per_seed_ttest,
        rule_table_version: table.version().to_string(),
        models: models.into_iter().map(|m| m.info).collect(),
        failures,
    };
    write_json_atomic(&cache.join(INDEX_FILE), &index)?;
    let report = build_report(&cache)?;
    emit_tables(&report, &config.output_dir)?;
    Ok(report)
}

fn union_languages<'a>(models: impl Iterator<Item = &'a ModelInfo>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for m in models {
        for l in &m.languages {
            if !out.contains(l) {
                out.push(l.clone());
            }
        }
    }
    out
}

fn read_optional<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if path.is_file() {
        read_json(path).map(Some)
    } else {
        Ok(None)
    }
}

/// Assembles the report from a cache written by [`run_experiment`]. Reads only
/// the cache, so two calls over the same cache give identical reports.
pub fn build_report(cache: &Path) -> Result<ReportBundle> {
    let index: ExperimentIndex = read_json(&cache.join(INDEX_FILE))?;
    if index.format_version != INDEX_VERSION {
        return Err(Error::VersionMismatch {
            found: index.format_version,
            supported: INDEX_VERSION,
        });
    }
    let mut failures = index.failures.clone();
    let mut models = Vec::with_capacity(index.models.len());
    for info in &index.models {
        let mut cells = Vec::new();
        for layer in 0..info.num_layers {
            for &seed in &index.seeds {
                for &kind in &index.probe_kinds {
                    match read_optional::<CellRecord>(&cell_path(cache, info, kind, layer, seed))? {
                        Some(c) => cells.push(c),
                        None => {
                            let known = failures.iter().any(|f| {
                                f.model == info.name
                                    && f.layer == Some(layer)
                                    && f.seed == Some(seed)
                                    && f.kind == Some(kind)
                            });
                            if !known {
                                failures.push(CellFailure {
                                    model: info.name.clone(),
                                    layer: Some(layer),
                                    seed: Some(seed),
                                    kind: Some(kind),
                                    error: "missing from cache".into(),
                                });
                            }
                        }
                    }
                }
            }
        }
        let mut alignment = Vec::new();
        for &seed in &index.seeds {
            if let Some(a) = read_optional::<ModelAlignment>(&alignment_path(cache, info, seed))? {
                alignment.push((seed, a));
            }
        }
        models.push(ModelCells {
            info: info.clone(),
            cells,
            alignment,
        });
    }
    failures.sort();

    let rows = assemble_rows(&models, &index.seeds, index.per_seed_ttest);
    let groups = match group_comparison(&group_rows(&rows), &index.languages) {
        Ok(g) => Some(g),
        Err(e) => {
            debug!("no group table: {e}");
            None
        }
    };
    let mut cells = Vec::new();
    for m in &models {
        for c in &m.cells {
            cells.push(CellResult {
                model: c.model.clone(),
                language: None,
                layer: c.layer,
                seed: c.seed,
                kind: c.kind,
                val_accuracy: c.val_accuracy,
            });
            for (lang, acc) in m.info.languages.iter().zip(&c.per_language) {
                if let Some(a) = acc {
                    cells.push(CellResult {
                        model: c.model.clone(),
                        language: Some(lang.clone()),
                        layer: c.layer,
                        seed: c.seed,
                        kind: c.kind,
                        val_accuracy: *a,
                    });
                }
            }
        }
    }
    cells.sort_by(|a, b| {
        (&a.model, a.layer, a.seed, a.kind, &a.language).cmp(&(
            &b.model,
            b.layer,
            b.seed,
            b.kind,
            &b.language,
        ))
    });
    let alignment = models
        .iter()
        .filter(|m| !m.alignment.is_empty())
        .map(|m| AlignmentSummary {
            model: m.info.name.clone(),
            per_seed: m.alignment.clone(),
        })
        .collect();
    Ok(ReportBundle {
        languages: index.languages,
        cells,
        failures,
        rows,
        groups,
        alignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_keys_are_path_safe() {
        assert_eq!(sanitize("Qwen/Qwen2.5-7B"), "Qwen_Qwen2.5-7B");
        assert_eq!(sanitize("a b:c"), "a_b_c");
    }
}
