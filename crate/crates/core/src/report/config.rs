// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment configuration files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alignment::AlignmentOptions;
use crate::error::{Error, Result};
use crate::probes::{OptimizerConfig, ProbeKind};

/// Pretraining-language grouping of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelGroup {
    EnglishCentric,
    ChineseInclusive,
    Balanced,
}

impl ModelGroup {
    pub const ALL: [ModelGroup; 3] = [Self::EnglishCentric, Self::ChineseInclusive, Self::Balanced];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::EnglishCentric => "english_centric",
            Self::ChineseInclusive => "chinese_inclusive",
            Self::Balanced => "balanced",
        }
    }

    /// Row label in the Markdown group table.
    pub fn title(self) -> &'static str {
        match self {
            Self::EnglishCentric => "English-centric",
            Self::ChineseInclusive => "Chinese-inclusive",
            Self::Balanced => "Balanced",
        }
    }
}

impl fmt::Display for ModelGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown model group tag {s:?} (expected english_centric, chinese_inclusive or balanced)"
                ))
            })
    }
}

impl TryFrom<String> for ModelGroup {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelGroup> for String {
    fn from(g: ModelGroup) -> Self {
        g.as_str().to_string()
    }
}

/// Floating-point type used for probe training and alignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleSpec {
    pub path: PathBuf,
    pub group: ModelGroup,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub bundles: Vec<BundleSpec>,
    /// Expected language list; `None` accepts each bundle's own list.
    pub languages: Option<Vec<String>>,
    pub train_per_lang: usize,
    pub val_per_lang: usize,
    pub split_seed: u64,
    pub optimizer: OptimizerConfig,
    /// Probe seeds are `0..seeds`.
    pub seeds: u64,
    pub probe_kinds: Vec<ProbeKind>,
    pub output_dir: PathBuf,
    /// Rule table file; `None` uses the built-in table.
    pub rule_table: Option<PathBuf>,
    pub precision: Precision,
    pub alignment: AlignmentOptions,
    /// Pair the gap t-test per (layer, seed) instead of per seed-averaged layer.
    pub per_seed_ttest: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            bundles: Vec::new(),
            languages: None,
            train_per_lang: 5000,
            val_per_lang: 2500,
            split_seed: 0,
            optimizer: OptimizerConfig::default(),
            seeds: 5,
            probe_kinds: vec![ProbeKind::Linear, ProbeKind::Mlp],
            output_dir: PathBuf::from("langgeom_out"),
            rule_table: None,
            precision: Precision::F32,
            alignment: AlignmentOptions::default(),
            per_seed_ttest: false,
        }
    }
}

impl ExperimentConfig {
    /// Parses a JSON config; relative paths resolve against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Parses and validates a JSON config without touching paths.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            if e.is_data() {
                Error::InvalidConfig(e.to_string())
            } else {
                Error::json("<config>", e)
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.bundles.iter_mut().for_each(|b| fix(&mut b.path));
        fix(&mut self.output_dir);
        if let Some(r) = self.rule_table.as_mut() {
            fix(r);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.bundles.is_empty() {
            return bad("at least one bundle is required".into());
        }
        if self.train_per_lang == 0 || self.val_per_lang == 0 {
            return bad("split sizes must be positive".into());
        }
        if self.seeds == 0 {
            return bad("at least one seed is required".into());
        }
        if self.probe_kinds.is_empty() {
            return bad("at least one probe kind is required".into());
        }
        let mut kinds = self.probe_kinds.clone();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != self.probe_kinds.len() {
            return bad("duplicate probe kind".into());
        }
        if let Some(langs) = &self.languages {
            if langs.is_empty() {
                return bad("language list is empty".into());
            }
        }
        self.optimizer.validate()
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.output_dir.join("cache")
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"bundles": [{"path": "b", "group": "chinese_inclusive"}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.seeds, 5);
        assert_eq!(cfg.bundles[0].group, ModelGroup::ChineseInclusive);
        assert_eq!(cfg.probe_kinds, vec![ProbeKind::Linear, ProbeKind::Mlp]);
    }

    #[test]
    fn unknown_group_tag_is_rejected() {
        let err =
            ExperimentConfig::from_json(r#"{"bundles": [{"path": "b", "group": "multilingual"}]}"#)
                .unwrap_err();
        assert!(
            matches!(err, Error::InvalidConfig(ref m) if m.contains("multilingual")),
            "{err}"
        );
    }

    #[test]
    fn empty_bundle_list_is_rejected() {
        assert!(matches!(
            ExperimentConfig::from_json("{}"),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(
            &path,
            r#"{"bundles": [{"path": "m1", "group": "balanced"}], "output_dir": "out"}"#,
        )
        .unwrap();
        let cfg = ExperimentConfig::from_file(&path).unwrap();
        assert_eq!(cfg.bundles[0].path, dir.path().join("m1"));
        assert_eq!(cfg.cache_dir(), dir.path().join("out").join("cache"));
    }
}
