// SPDX-License-Identifier: MIT OR Apache-2.0

//! Activation bundles: per-layer final-token hidden states, language labels,
//! the LM-head vocabulary embedding matrix and the decoded vocabulary, stored
//! as a JSON manifest next to flat little-endian tensor files.
//!
//! Directory layout:
//!
//! ```text
//! manifest.json      format version, dimensions, languages, tensor table
//! labels.u32         N language indices
//! layer_{i}.f32      N x d hidden states for layer i (layer 0 = embedding output)
//! vocab_emb.f32      V x d vocabulary embeddings
//! vocab_text.jsonl   V lines, one JSON string per token id
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rawfile::{self, DType, TensorEntry};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LABELS_FILE: &str = "labels.u32";
pub const VOCAB_EMB_FILE: &str = "vocab_emb.f32";
pub const VOCAB_TEXT_FILE: &str = "vocab_text.jsonl";

pub fn layer_file(i: usize) -> String {
    format!("layer_{i}.f32")
}

fn layer_tensor_name(i: usize) -> String {
    format!("layer_{i}")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endianness {
    #[default]
    Little,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format_version: u32,
    pub model_name: String,
    pub hidden_dim: usize,
    /// Total layer count including layer 0.
    pub num_layers: usize,
    pub num_samples: usize,
    pub vocab_size: usize,
    pub languages: Vec<String>,
    #[serde(default)]
    pub endianness: Endianness,
    /// Where the extractor captured hidden states (free text).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture_point: Option<String>,
    /// Vocabulary texts use byte-level BPE surface forms.
    #[serde(default)]
    pub byte_level_bpe: bool,
    #[serde(default = "default_vocab_text_file")]
    pub vocab_text_file: String,
    pub tensors: Vec<TensorEntry>,
}

fn default_vocab_text_file() -> String {
    VOCAB_TEXT_FILE.to_string()
}

impl BundleManifest {
    pub fn tensor(&self, name: &str) -> Result<&TensorEntry> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::InvalidBundle(format!("manifest declares no tensor {name:?}")))
    }

    pub fn layer_tensor(&self, layer: usize) -> Result<&TensorEntry> {
        if layer >= self.num_layers {
            return Err(Error::InvalidBundle(format!(
                "layer {layer} out of range for {} layers",
                self.num_layers
            )));
        }
        self.tensor(&layer_tensor_name(layer))
    }

    /// Structural checks that need no tensor data.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: self.format_version,
                supported: FORMAT_VERSION,
            });
        }
        if self.hidden_dim == 0 || self.num_layers == 0 {
            return Err(Error::InvalidBundle(
                "hidden_dim and num_layers must be positive".into(),
            ));
        }
        if self.languages.is_empty() {
            return Err(Error::InvalidBundle("language list is empty".into()));
        }
        let mut seen = HashSet::new();
        for l in &self.languages {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidBundle(format!("duplicate language {l:?}")));
            }
        }
        let mut names = HashSet::new();
        for t in &self.tensors {
            rawfile::check_relative(&t.file)?;
            if !names.insert(t.name.as_str()) {
                return Err(Error::InvalidBundle(format!(
                    "duplicate tensor {:?}",
                    t.name
                )));
            }
            let product = t.shape.iter().product::<usize>() as u64;
            if product != t.elements {
                return Err(Error::ShapeMismatch {
                    what: t.name.clone(),
                    expected: t.shape.clone(),
                    actual: vec![t.elements as usize],
                });
            }
        }
        rawfile::check_relative(&self.vocab_text_file)?;

        let (n, d, v) = (self.num_samples, self.hidden_dim, self.vocab_size);
        expect_entry(self.tensor("labels")?, DType::U32, &[n])?;
        expect_entry(self.tensor("vocab_emb")?, DType::F32, &[v, d])?;
        for i in 0..self.num_layers {
            expect_entry(self.layer_tensor(i)?, DType::F32, &[n, d])?;
        }
        let layer_count = self
            .tensors
            .iter()
            .filter(|t| t.name.starts_with("layer_"))
            .count();
        if layer_count != self.num_layers {
            return Err(Error::InvalidBundle(format!(
                "layer tensors must be exactly layer_0..layer_{}, found {layer_count}",
                self.num_layers - 1
            )));
        }
        Ok(())
    }
}

fn expect_entry(entry: &TensorEntry, dtype: DType, shape: &[usize]) -> Result<()> {
    if entry.dtype != dtype {
        return Err(Error::InvalidBundle(format!(
            "tensor {} has dtype {:?}, expected {dtype:?}",
            entry.name, entry.dtype
        )));
    }
    if entry.shape != shape {
        return Err(Error::ShapeMismatch {
            what: entry.name.clone(),
            expected: shape.to_vec(),
            actual: entry.shape.clone(),
        });
    }
    Ok(())
}

/// One model's activations, labels and vocabulary, fully loaded.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationBundle {
    pub manifest: BundleManifest,
    pub layers: Vec<Matrix<f32>>,
    pub labels: Vec<u32>,
    pub vocab_emb: Matrix<f32>,
    pub vocab_text: Vec<String>,
}

impl ActivationBundle {
    /// Assembles a bundle and derives its manifest; validates every invariant.
    pub fn new(
        model_name: impl Into<String>,
        languages: Vec<String>,
        layers: Vec<Matrix<f32>>,
        labels: Vec<u32>,
        vocab_emb: Matrix<f32>,
        vocab_text: Vec<String>,
    ) -> Result<Self> {
        let num_samples = labels.len();
        let hidden_dim = vocab_emb.cols();
        let vocab_size = vocab_emb.rows();
        let mut tensors = vec![TensorEntry::new(
            "labels",
            LABELS_FILE,
            DType::U32,
            vec![num_samples],
        )];
        for i in 0..layers.len() {
            tensors.push(TensorEntry::new(
                layer_tensor_name(i),
                layer_file(i),
                DType::F32,
                vec![num_samples, hidden_dim],
            ));
        }
        tensors.push(TensorEntry::new(
            "vocab_emb",
            VOCAB_EMB_FILE,
            DType::F32,
            vec![vocab_size, hidden_dim],
        ));
        let manifest = BundleManifest {
            format_version: FORMAT_VERSION,
            model_name: model_name.into(),
            hidden_dim,
            num_layers: layers.len(),
            num_samples,
            vocab_size,
            languages,
            endianness: Endianness::Little,
            capture_point: None,
            byte_level_bpe: false,
            vocab_text_file: VOCAB_TEXT_FILE.into(),
            tensors,
        };
        let bundle = Self {
            manifest,
            layers,
            labels,
            vocab_emb,
            vocab_text,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn num_languages(&self) -> usize {
        self.manifest.languages.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        m.validate()?;
        if self.layers.len() != m.num_layers {
            return Err(Error::InvalidBundle(format!(
                "{} layer matrices for {} declared layers",
                self.layers.len(),
                m.num_layers
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.shape() != (m.num_samples, m.hidden_dim) {
                return Err(Error::ShapeMismatch {
                    what: layer_tensor_name(i),
                    expected: vec![m.num_samples, m.hidden_dim],
                    actual: vec![layer.rows(), layer.cols()],
                });
            }
        }
        if self.vocab_emb.shape() != (m.vocab_size, m.hidden_dim) {
            return Err(Error::ShapeMismatch {
                what: "vocab_emb".into(),
                expected: vec![m.vocab_size, m.hidden_dim],
                actual: vec![self.vocab_emb.rows(), self.vocab_emb.cols()],
            });
        }
        if self.vocab_text.len() != m.vocab_size {
            return Err(Error::ShapeMismatch {
                what: "vocab_text".into(),
                expected: vec![m.vocab_size],
                actual: vec![self.vocab_text.len()],
            });
        }
        validate_labels(&self.labels, &m.languages)
    }
}

/// Every label in range and every language present at least once.
pub fn validate_labels(labels: &[u32], languages: &[String]) -> Result<()> {
    let mut seen = vec![false; languages.len()];
    for (index, &label) in labels.iter().enumerate() {
        match seen.get_mut(label as usize) {
            Some(s) => *s = true,
            None => {
                return Err(Error::LabelOutOfRange {
                    index,
                    label,
                    num_languages: languages.len(),
                })
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::MissingLanguage(languages[missing].clone()));
    }
    Ok(())
}

/// Writes `bundle` into `dir` (created if needed). Invariants are checked first.
pub fn write_bundle(bundle: &ActivationBundle, dir: impl AsRef<Path>) -> Result<()> {
    bundle.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = &bundle.manifest;
    rawfile::write_u32(&dir.join(&m.tensor("labels")?.file), &bundle.labels)?;
    for (i, layer) in bundle.layers.iter().enumerate() {
        rawfile::write_f32(&dir.join(&m.layer_tensor(i)?.file), layer.as_slice())?;
    }
    rawfile::write_f32(
        &dir.join(&m.tensor("vocab_emb")?.file),
        bundle.vocab_emb.as_slice(),
    )?;

    let text_path = dir.join(&m.vocab_text_file);
    let mut text = String::new();
    for entry in &bundle.vocab_text {
        text.push_str(&serde_json::to_string(entry).map_err(|e| Error::json(&text_path, e))?);
        text.push('\n');
    }
    fs::write(&text_path, text).map_err(|e| Error::io(&text_path, e))?;

    rawfile::write_json(&dir.join(MANIFEST_FILE), m)
}

/// Decoded vocabulary table plus the number of invalid UTF-8 sequences replaced.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodedVocab {
    pub entries: Vec<String>,
    pub replacements: usize,
}

/// Lazy, validated access to a bundle directory; tensors load on demand.
#[derive(Clone, Debug)]
pub struct BundleReader {
    dir: PathBuf,
    manifest: BundleManifest,
}

impl BundleReader {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest: BundleManifest = rawfile::read_json(&dir.join(MANIFEST_FILE))?;
        manifest.validate()?;
        for t in &manifest.tensors {
            rawfile::check_size(&dir, t)?;
        }
        let text = dir.join(&manifest.vocab_text_file);
        if !text.is_file() {
            return Err(Error::MissingFile(text));
        }
        Ok(Self { dir, manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &BundleManifest {
        &self.manifest
    }

    pub fn layer(&self, layer: usize) -> Result<Matrix<f32>> {
        let entry = self.manifest.layer_tensor(layer)?;
        let data = rawfile::read_f32(&self.dir, entry)?;
        Matrix::new(self.manifest.num_samples, self.manifest.hidden_dim, data)
    }

    pub fn labels(&self) -> Result<Vec<u32>> {
        let labels = rawfile::read_u32(&self.dir, self.manifest.tensor("labels")?)?;
        validate_labels(&labels, &self.manifest.languages)?;
        Ok(labels)
    }

    pub fn vocab_emb(&self) -> Result<Matrix<f32>> {
        let data = rawfile::read_f32(&self.dir, self.manifest.tensor("vocab_emb")?)?;
        Matrix::new(self.manifest.vocab_size, self.manifest.hidden_dim, data)
    }

    pub fn vocab_text(&self) -> Result<DecodedVocab> {
        let path = self.dir.join(&self.manifest.vocab_text_file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let decoded = decode_vocab_lines(&bytes, &path)?;
        if decoded.entries.len() != self.manifest.vocab_size {
            return Err(Error::ShapeMismatch {
                what: path.display().to_string(),
                expected: vec![self.manifest.vocab_size],
                actual: vec![decoded.entries.len()],
            });
        }
        Ok(decoded)
    }

    pub fn read_all(&self) -> Result<(ActivationBundle, usize)> {
        let layers = (0..self.manifest.num_layers)
            .map(|i| self.layer(i))
            .collect::<Result<Vec<_>>>()?;
        let vocab = self.vocab_text()?;
        let bundle = ActivationBundle {
            manifest: self.manifest.clone(),
            layers,
            labels: self.labels()?,
            vocab_emb: self.vocab_emb()?,
            vocab_text: vocab.entries,
        };
        bundle.validate()?;
        Ok((bundle, vocab.replacements))
    }
}

fn decode_vocab_lines(bytes: &[u8], path: &Path) -> Result<DecodedVocab> {
    let mut entries = Vec::new();
    let mut replacements = 0;
    let mut lines: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
    if lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    for (lineno, raw) in lines.into_iter().enumerate() {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let mut line = String::with_capacity(raw.len());
        for chunk in raw.utf8_chunks() {
            line.push_str(chunk.valid());
            if !chunk.invalid().is_empty() {
                line.push(char::REPLACEMENT_CHARACTER);
                replacements += 1;
            }
        }
        let entry: String = serde_json::from_str(&line).map_err(|e| {
            Error::InvalidBundle(format!("{} line {}: {e}", path.display(), lineno + 1))
        })?;
        entries.push(entry);
    }
    if replacements > 0 {
        log::warn!(
            "{}: replaced {replacements} invalid UTF-8 sequence(s) with U+FFFD",
            path.display()
        );
    }
    Ok(DecodedVocab {
        entries,
        replacements,
    })
}

/// Reads and fully validates a bundle directory.
pub fn read_bundle(dir: impl AsRef<Path>) -> Result<ActivationBundle> {
    Ok(BundleReader::open(dir)?.read_all()?.0)
}

/// Like [`read_bundle`], also returning the U+FFFD replacement count of the decode table.
pub fn read_bundle_reporting(dir: impl AsRef<Path>) -> Result<(ActivationBundle, usize)> {
    BundleReader::open(dir)?.read_all()
}

/// Disjoint train/validation sample indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

pub fn split_dataset(
    bundle: &ActivationBundle,
    train_per_lang: usize,
    val_per_lang: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    split_indices(
        &bundle.labels,
        &bundle.manifest.languages,
        train_per_lang,
        val_per_lang,
        seed,
    )
}

/// Seeded shuffle of each language's sample indices followed by a prefix split.
/// Output is grouped by language in manifest order.
pub fn split_indices(
    labels: &[u32],
    languages: &[String],
    train_per_lang: usize,
    val_per_lang: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    let mut per_lang: Vec<Vec<usize>> = vec![Vec::new(); languages.len()];
    for (i, &l) in labels.iter().enumerate() {
        per_lang
            .get_mut(l as usize)
            .ok_or(Error::LabelOutOfRange {
                index: i,
                label: l,
                num_languages: languages.len(),
            })?
            .push(i);
    }
    let required = train_per_lang + val_per_lang;
    for (idx, lang) in per_lang.iter().zip(languages) {
        if idx.len() < required {
            return Err(Error::InsufficientSamples {
                language: lang.clone(),
                available: idx.len(),
                required,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = DatasetSplit {
        train: Vec::with_capacity(train_per_lang * languages.len()),
        val: Vec::with_capacity(val_per_lang * languages.len()),
    };
    for mut idx in per_lang {
        idx.shuffle(&mut rng);
        split.train.extend_from_slice(&idx[..train_per_lang]);
        split.val.extend_from_slice(&idx[train_per_lang..required]);
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn langs(n: usize) -> Vec<String> {
        ["EN", "ES", "FR", "DE", "ZH"][..n]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn small_bundle() -> ActivationBundle {
        let (n, d, v) = (10, 4, 6);
        let layers = (0..2)
            .map(|l| Matrix::from_fn(n, d, |i, j| (l * 100 + i * d + j) as f32 * 0.25 - 3.0))
            .collect();
        let labels = (0..n as u32).map(|i| i % 5).collect();
        let emb = Matrix::from_fn(v, d, |i, j| (i as f32) - (j as f32) * 0.5);
        let text = ["Ġthe", "▁niño", "中", "schön", "1234", "ç"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        ActivationBundle::new("tiny", langs(5), layers, labels, emb, text).unwrap()
    }

    #[test]
    fn write_produces_manifest_and_four_tensors() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = small_bundle();
        write_bundle(&bundle, dir.path()).unwrap();
        let mut files: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        files.sort();
        assert_eq!(
            files,
            [
                "labels.u32",
                "layer_0.f32",
                "layer_1.f32",
                "manifest.json",
                "vocab_emb.f32",
                "vocab_text.jsonl"
            ]
        );
        let back = read_bundle(dir.path()).unwrap();
        assert_eq!(back, bundle);
        for i in 0..2 {
            let a: Vec<u32> = bundle.layers[i]
                .as_slice()
                .iter()
                .map(|x| x.to_bits())
                .collect();
            let b: Vec<u32> = back.layers[i]
                .as_slice()
                .iter()
                .map(|x| x.to_bits())
                .collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn wrong_layer_width_rejected_before_writing() {
        let mut bundle = small_bundle();
        bundle.layers[1] = Matrix::filled(10, 3, 0.0);
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("out");
        let err = write_bundle(&bundle, &target).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }), "{err}");
        assert!(!target.exists());
    }

    #[test]
    fn truncated_tensor_reports_file() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&small_bundle(), dir.path()).unwrap();
        let path = dir.path().join("layer_1.f32");
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        match read_bundle(dir.path()).unwrap_err() {
            Error::SizeMismatch {
                file,
                expected,
                actual,
            } => {
                assert_eq!(file, path);
                assert_eq!(expected, 160);
                assert_eq!(actual, 159);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn label_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = small_bundle();
        write_bundle(&bundle, dir.path()).unwrap();
        // declare 3 languages; labels contain 3 and 4
        let mut m = bundle.manifest.clone();
        m.languages.truncate(3);
        rawfile::write_json(&dir.path().join(MANIFEST_FILE), &m).unwrap();
        let err = read_bundle(dir.path()).unwrap_err();
        assert!(
            matches!(
                err,
                Error::LabelOutOfRange {
                    label: 3,
                    num_languages: 3,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn missing_language_rejected() {
        let b = small_bundle();
        let labels = vec![0u32; 10];
        let err = ActivationBundle::new("x", langs(5), b.layers, labels, b.vocab_emb, b.vocab_text)
            .unwrap_err();
        assert!(matches!(err, Error::MissingLanguage(ref l) if l == "ES"));
    }

    #[test]
    fn version_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = small_bundle();
        write_bundle(&bundle, dir.path()).unwrap();
        fs::remove_file(dir.path().join("vocab_emb.f32")).unwrap();
        assert!(matches!(
            read_bundle(dir.path()).unwrap_err(),
            Error::MissingFile(_)
        ));

        write_bundle(&bundle, dir.path()).unwrap();
        let mut m = bundle.manifest.clone();
        m.format_version = 2;
        rawfile::write_json(&dir.path().join(MANIFEST_FILE), &m).unwrap();
        assert!(matches!(
            read_bundle(dir.path()).unwrap_err(),
            Error::VersionMismatch {
                found: 2,
                supported: 1
            }
        ));
    }

    #[test]
    fn bpe_markers_preserved_and_invalid_utf8_replaced() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = small_bundle();
        write_bundle(&bundle, dir.path()).unwrap();
        let raw = fs::read_to_string(dir.path().join(VOCAB_TEXT_FILE)).unwrap();
        assert!(raw.starts_with("\"Ġthe\"\n"));
        let (back, replaced) = read_bundle_reporting(dir.path()).unwrap();
        assert_eq!(back.vocab_text[0], "Ġthe");
        assert_eq!(replaced, 0);

        // raw 0xFF byte fragment inside a JSON string, as emitted by some byte-level vocabularies
        let mut bytes = Vec::new();
        for (i, t) in bundle.vocab_text.iter().enumerate() {
            if i == 4 {
                bytes.extend_from_slice(b"\"ab\xFFc\xC3\"");
            } else {
                bytes.extend_from_slice(serde_json::to_string(t).unwrap().as_bytes());
            }
            bytes.push(b'\n');
        }
        fs::write(dir.path().join(VOCAB_TEXT_FILE), bytes).unwrap();
        let (back, replaced) = read_bundle_reporting(dir.path()).unwrap();
        assert_eq!(back.vocab_text[4], "ab\u{FFFD}c\u{FFFD}");
        assert_eq!(replaced, 2);
    }

    #[test]
    fn split_counts_disjoint_and_deterministic() {
        let labels: Vec<u32> = (0..50).map(|i| i % 5).collect();
        let s = split_indices(&labels, &langs(5), 6, 3, 7).unwrap();
        assert_eq!(s.train.len(), 30);
        assert_eq!(s.val.len(), 15);
        for lang in 0..5u32 {
            assert_eq!(s.train.iter().filter(|&&i| labels[i] == lang).count(), 6);
            assert_eq!(s.val.iter().filter(|&&i| labels[i] == lang).count(), 3);
        }
        let all: HashSet<usize> = s.train.iter().chain(&s.val).copied().collect();
        assert_eq!(all.len(), 45);
        assert_eq!(split_indices(&labels, &langs(5), 6, 3, 7).unwrap(), s);
    }

    #[test]
    fn split_frozen_for_seed_pair() {
        let labels: Vec<u32> = (0..20).map(|i| i % 2).collect();
        let a = split_indices(&labels, &langs(2), 3, 2, 7).unwrap();
        let b = split_indices(&labels, &langs(2), 3, 2, 8).unwrap();
        assert_eq!(a.train, vec![0, 14, 10, 3, 5, 17]);
        assert_eq!(a.val, vec![4, 18, 11, 15]);
        assert_eq!(b.train, vec![10, 6, 8, 5, 9, 1]);
        assert_ne!(a, b);
    }

    #[test]
    fn split_paper_sizes_and_insufficient() {
        let labels: Vec<u32> = (0..7500 * 5).map(|i| (i % 5) as u32).collect();
        let s = split_indices(&labels, &langs(5), 5000, 2500, 1).unwrap();
        assert_eq!(s.train.len(), 25_000);
        assert_eq!(s.val.len(), 12_500);

        let labels: Vec<u32> = (0..50).map(|i| i % 5).collect();
        let err = split_indices(&labels, &langs(5), 8, 3, 0).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientSamples {
                available: 10,
                required: 11,
                ..
            }
        ));
    }
}
