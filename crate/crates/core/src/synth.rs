// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic activation bundles with planted language structure.
//!
//! Samples of language `k` sit at `separation * e_k + N(0, I)` on layers >= 1
//! and at `N(0, I)` on layer 0; each layer is then scaled by `1 + 0.5 * layer`,
//! which LayerNorm removes. A share of the vocabulary is planted along each
//! language axis with cosine `alignment_strength` to it, and a fraction of
//! those tokens carry text that the language's rule accepts. Everything else is
//! isotropic with ASCII text.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bundle::ActivationBundle;
use crate::error::{Error, Result};
use crate::langid::{Rule, RuleKind, RuleTable};
use crate::matrix::Matrix;

fn default_languages() -> Vec<String> {
    ["EN", "ES", "ZH", "FR", "DE"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub model_name: String,
    pub languages: Vec<String>,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub samples_per_language: usize,
    /// Distance of the class means from the origin, in noise standard deviations.
    pub separation: f64,
    pub vocab_size: usize,
    /// Fraction of the vocabulary planted along each language axis; the rest is isotropic.
    pub direction_shares: Vec<f64>,
    /// Fraction of each language's planted tokens whose text the language's rule accepts.
    pub planted_fraction: Vec<f64>,
    /// Cosine between a planted token and its language axis.
    pub alignment_strength: f64,
    /// Share of tokens given a leading `▁` marker.
    pub marker_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let languages = default_languages();
        let n = languages.len();
        Self {
            model_name: "synthetic".into(),
            languages,
            hidden_dim: 32,
            num_layers: 4,
            samples_per_language: 300,
            separation: 8.0,
            vocab_size: 1000,
            direction_shares: vec![0.15; n],
            planted_fraction: vec![0.0; n],
            alignment_strength: 0.5,
            marker_rate: 0.3,
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn language_index(&self, lang: &str) -> Result<usize> {
        self.languages
            .iter()
            .position(|l| l == lang)
            .ok_or_else(|| Error::MissingLanguage(lang.to_string()))
    }

    pub fn with_planted_fraction(mut self, lang: &str, fraction: f64) -> Result<Self> {
        let i = self.language_index(lang)?;
        self.planted_fraction[i] = fraction;
        Ok(self)
    }

    pub fn with_direction_share(mut self, lang: &str, share: f64) -> Result<Self> {
        let i = self.language_index(lang)?;
        self.direction_shares[i] = share;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let n = self.languages.len();
        if n < 2 {
            return bad("need at least two languages".into());
        }
        if self.hidden_dim < n {
            return bad(format!(
                "hidden_dim {} is smaller than the {n} language axes",
                self.hidden_dim
            ));
        }
        if self.num_layers < 2 {
            return bad("need at least two layers".into());
        }
        if self.samples_per_language == 0 || self.vocab_size == 0 {
            return bad("samples_per_language and vocab_size must be positive".into());
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return bad(format!(
                "separation {} must be finite and >= 0",
                self.separation
            ));
        }
        if self.direction_shares.len() != n || self.planted_fraction.len() != n {
            return bad(format!(
                "direction_shares and planted_fraction need one entry per language ({n})"
            ));
        }
        let in_unit = |v: &f64| (0.0..=1.0).contains(v);
        if !self.direction_shares.iter().all(in_unit) || !self.planted_fraction.iter().all(in_unit)
        {
            return bad("shares and fractions must lie in [0, 1]".into());
        }
        if self.direction_shares.iter().sum::<f64>() > 1.0 + 1e-12 {
            return bad("direction_shares sum to more than 1".into());
        }
        if !(0.0..=1.0).contains(&self.alignment_strength) || !in_unit(&self.marker_rate) {
            return bad("alignment_strength and marker_rate must lie in [0, 1]".into());
        }
        let mut seen = std::collections::HashSet::new();
        if !self.languages.iter().all(|l| seen.insert(l)) {
            return bad("duplicate language".into());
        }
        Ok(())
    }

    /// Tokens planted along each language axis.
    pub fn planted_counts(&self) -> Vec<usize> {
        self.direction_shares
            .iter()
            .map(|s| (s * self.vocab_size as f64 + 1e-9).floor() as usize)
            .collect()
    }

    /// Planted tokens of each language that carry matching text.
    pub fn text_counts(&self) -> Vec<usize> {
        self.planted_counts()
            .iter()
            .zip(&self.planted_fraction)
            .map(|(&k, f)| (f * k as f64).round() as usize)
            .collect()
    }
}

/// Ground truth recorded next to each generated vocabulary entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedToken {
    /// Language axis the embedding was planted on; `None` for isotropic tokens.
    pub axis: Option<usize>,
    /// Whether the text was generated to satisfy that language's rule.
    pub language_text: bool,
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub bundle: ActivationBundle,
    pub planted: Vec<PlantedToken>,
}

const ASCII: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

fn ascii_word(rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    let len = rng.random_range(min..=max);
    (0..len)
        .map(|_| ASCII[rng.random_range(0..ASCII.len())] as char)
        .collect()
}

fn rule_text(rule: &Rule, rng: &mut ChaCha8Rng) -> String {
    match &rule.kind {
        RuleKind::Block(ranges) => {
            let n = rng.random_range(1..=3);
            (0..n)
                .map(|_| {
                    let r = &ranges[rng.random_range(0..ranges.len())];
                    loop {
                        if let Some(c) = char::from_u32(rng.random_range(r.clone())) {
                            break c;
                        }
                    }
                })
                .collect()
        }
        RuleKind::Charset { include, .. } => {
            let mut word: Vec<char> = ascii_word(rng, 2, 6).chars().collect();
            let c = include[rng.random_range(0..include.len())];
            let at = rng.random_range(0..=word.len());
            word.insert(at, c);
            word.into_iter().collect()
        }
        RuleKind::Ascii { min_len } => ascii_word(rng, (*min_len).max(2), (*min_len).max(2) + 5),
    }
}

/// Generates a text that `table` labels `lang`.
fn language_text(table: &RuleTable, lang: &str, rng: &mut ChaCha8Rng) -> Result<String> {
    let rule = table
        .rules()
        .iter()
        .find(|r| r.label == lang)
        .ok_or_else(|| Error::InvalidConfig(format!("rule table has no rule for {lang}")))?;
    for _ in 0..100 {
        let text = rule_text(rule, rng);
        if table.classify(&text).label.is(lang) {
            return Ok(text);
        }
    }
    Err(Error::InvalidConfig(format!(
        "could not generate text for {lang}: an earlier rule always claims it"
    )))
}

fn gaussian_row(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Generates a bundle using the bundled rule table.
pub fn generate_bundle(spec: &SynthSpec) -> Result<ActivationBundle> {
    Ok(generate_with_rules(spec, RuleTable::builtin())?.bundle)
}

/// Generates a bundle whose planted texts satisfy `table`.
pub fn generate_with_rules(spec: &SynthSpec, table: &RuleTable) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.hidden_dim;
    let n_lang = spec.languages.len();
    let n = spec.samples_per_language * n_lang;

    let labels: Vec<u32> = (0..n_lang as u32)
        .flat_map(|l| std::iter::repeat_n(l, spec.samples_per_language))
        .collect();
    let mut layers = Vec::with_capacity(spec.num_layers);
    for layer in 0..spec.num_layers {
        let scale = 1.0 + 0.5 * layer as f64;
        let mut data = Vec::with_capacity(n * d);
        for &label in &labels {
            let mut row = gaussian_row(&mut rng, d);
            if layer > 0 {
                row[label as usize] += spec.separation;
            }
            data.extend(row.into_iter().map(|v| (v * scale) as f32));
        }
        layers.push(Matrix::new(n, d, data)?);
    }

    let counts = spec.planted_counts();
    let text_counts = spec.text_counts();
    let kappa = spec.alignment_strength;
    let spread = (1.0 - kappa * kappa).sqrt();
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let mut entries: Vec<(Vec<f32>, String, PlantedToken)> = Vec::with_capacity(spec.vocab_size);
    for (axis, (&k, &k_text)) in counts.iter().zip(&text_counts).enumerate() {
        for j in 0..k {
            let g = gaussian_row(&mut rng, d);
            let mut e: Vec<f64> = g.iter().map(|v| v * spread * inv_sqrt_d).collect();
            e[axis] += kappa;
            let with_text = j < k_text;
            let text = if with_text {
                language_text(table, &spec.languages[axis], &mut rng)?
            } else {
                ascii_word(&mut rng, 2, 8)
            };
            entries.push((
                e.into_iter().map(|v| v as f32).collect(),
                text,
                PlantedToken {
                    axis: Some(axis),
                    language_text: with_text,
                },
            ));
        }
    }
    while entries.len() < spec.vocab_size {
        let g = gaussian_row(&mut rng, d);
        entries.push((
            g.into_iter().map(|v| (v * inv_sqrt_d) as f32).collect(),
            ascii_word(&mut rng, 2, 8),
            PlantedToken {
                axis: None,
                language_text: false,
            },
        ));
    }
    entries.shuffle(&mut rng);
    let mut emb = Vec::with_capacity(spec.vocab_size * d);
    let mut texts = Vec::with_capacity(spec.vocab_size);
    let mut planted = Vec::with_capacity(spec.vocab_size);
    for (e, text, p) in entries {
        emb.extend(e);
        let text = if rng.random_bool(spec.marker_rate) {
            format!("\u{2581}{text}")
        } else {
            text
        };
        texts.push(text);
        planted.push(p);
    }

    let mut bundle = ActivationBundle::new(
        spec.model_name.clone(),
        spec.languages.clone(),
        layers,
        labels,
        Matrix::new(spec.vocab_size, d, emb)?,
        texts,
    )?;
    bundle.manifest.capture_point = Some("synthetic".into());
    Ok(SynthOutput { bundle, planted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::langid::Label;

    fn small() -> SynthSpec {
        SynthSpec {
            hidden_dim: 8,
            num_layers: 3,
            samples_per_language: 20,
            vocab_size: 200,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn shapes_follow_the_spec() {
        let b = generate_bundle(&small()).unwrap();
        assert_eq!(b.layers.len(), 3);
        assert_eq!(b.layers[0].shape(), (100, 8));
        assert_eq!(b.vocab_emb.shape(), (200, 8));
        assert_eq!(b.vocab_text.len(), 200);
        assert_eq!(b.labels.iter().filter(|&&l| l == 4).count(), 20);
        assert_eq!(b.manifest.capture_point.as_deref(), Some("synthetic"));
    }

    #[test]
    fn planted_texts_satisfy_their_rule() {
        let spec = SynthSpec {
            planted_fraction: vec![0.5; 5],
            ..small()
        };
        let out = generate_with_rules(&spec, RuleTable::builtin()).unwrap();
        let table = RuleTable::builtin();
        let mut seen = 0;
        for (p, text) in out.planted.iter().zip(&out.bundle.vocab_text) {
            let label = table.classify(text).label;
            match (p.axis, p.language_text) {
                (Some(a), true) => {
                    seen += 1;
                    assert!(label.is(&spec.languages[a]), "{text:?} -> {label}");
                }
                _ => assert_eq!(label, Label::Lang("EN".into()), "{text:?}"),
            }
        }
        // 30 planted per language, half with language text
        assert_eq!(seen, 75);
        assert_eq!(spec.text_counts(), vec![15; 5]);
    }

    #[test]
    fn planted_tokens_have_the_requested_cosine_on_average() {
        let spec = SynthSpec {
            hidden_dim: 128,
            vocab_size: 2000,
            alignment_strength: 0.5,
            ..small()
        };
        let out = generate_with_rules(&spec, RuleTable::builtin()).unwrap();
        let mut sum = 0.0;
        let mut n = 0.0;
        for (i, p) in out.planted.iter().enumerate() {
            if let Some(a) = p.axis {
                let e = out.bundle.vocab_emb.row(i);
                let norm = e.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
                sum += e[a] as f64 / norm;
                n += 1.0;
            }
        }
        assert!((sum / n - 0.5).abs() < 0.02, "{}", sum / n);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = small();
        s.hidden_dim = 3;
        assert!(s.validate().is_err());
        let mut s = small();
        s.direction_shares = vec![0.3; 5];
        assert!(s.validate().is_err());
        let mut s = small();
        s.separation = -1.0;
        assert!(s.validate().is_err());
        let mut s = small();
        s.planted_fraction.pop();
        assert!(s.validate().is_err());
        assert!(small().with_planted_fraction("JA", 0.2).is_err());
    }

    #[test]
    fn unreachable_rule_is_an_error() {
        // ES can never fire: ZH claims everything first
        let table = RuleTable::parse(
            "ZH\tcharset\tabcdefghijklmnopqrstuvwxyz\nES\tcharset\tñ\nEN\tascii\t2\n",
        )
        .unwrap();
        let spec = SynthSpec {
            planted_fraction: vec![0.0, 1.0, 0.0, 0.0, 0.0],
            ..small()
        };
        assert!(generate_with_rules(&spec, &table).is_err());
    }
}
