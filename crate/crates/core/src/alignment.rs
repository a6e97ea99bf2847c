// SPDX-License-Identifier: MIT OR Apache-2.0

//! Token-language alignment: cosine between vocabulary embeddings and the
//! rows of a linear probe, nearest-direction token assignment, and the
//! per-language VocabShare curve with its peak statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::langid::{Label, RuleTable};
use crate::matrix::Matrix;
use crate::probes::{dot, ProbeParameters, ProbeWeights};
use crate::scalar::Scalar;

/// Tokens per parallel work unit in [`assign_tokens`].
pub const TOKEN_BLOCK: usize = 512;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentOptions {
    /// Subtract the mean of the class rows from each direction.
    pub center_directions: bool,
    /// Subtract the mean embedding from every token embedding.
    pub center_embeddings: bool,
    /// Keep the highest-cosine tokens per direction at the peak layer.
    pub debug_top_k: Option<usize>,
}

/// Row `language` of the linear probe's weight matrix.
pub fn language_direction<T: Scalar>(
    probe: &ProbeParameters<T>,
    language: usize,
) -> Result<Vec<T>> {
    match &probe.weights {
        ProbeWeights::Linear { w, .. } => {
            if language >= w.rows() {
                return Err(Error::LanguageOutOfRange {
                    index: language,
                    count: w.rows(),
                });
            }
            Ok(w.row(language).to_vec())
        }
        ProbeWeights::Mlp { .. } => Err(Error::NotLinearProbe),
    }
}

/// All class rows of a linear probe, optionally centered.
pub fn directions<T: Scalar>(probe: &ProbeParameters<T>, center: bool) -> Result<Matrix<T>> {
    match &probe.weights {
        ProbeWeights::Linear { w, .. } => Ok(if center { center_rows(w) } else { w.clone() }),
        ProbeWeights::Mlp { .. } => Err(Error::NotLinearProbe),
    }
}

/// Subtracts the column mean from every row.
pub fn center_rows<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    if m.rows() == 0 {
        return m.clone();
    }
    let n = T::from_usize_lossy(m.rows());
    let means: Vec<T> = (0..m.cols())
        .map(|j| m.row_iter().map(|r| r[j]).sum::<T>() / n)
        .collect();
    Matrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) - means[j])
}

fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn cosine_with_norms<T: Scalar>(a: &[T], b: &[T], na: T, nb: T) -> T {
    if na == T::zero() || nb == T::zero() {
        return T::zero();
    }
    let c = dot(a, b) / (na * nb);
    c.max(-T::one()).min(T::one())
}

/// `a·b / (|a||b|)`, clamped to `[-1, 1]`; 0 when either vector is zero.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    cosine_with_norms(a, b, norm(a), norm(b))
}

/// Nearest direction for every token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub languages: Vec<usize>,
    pub num_languages: usize,
    /// Tokens whose embedding has zero norm (assigned to language 0).
    pub zero_embeddings: usize,
    /// Directions with zero norm.
    pub zero_directions: usize,
}

impl Assignment {
    pub fn len(&self) -> usize {
        self.languages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.languages.is_empty()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_languages];
        self.languages.iter().for_each(|&l| c[l] += 1);
        c
    }
}

/// Assigns each embedding row to the direction of highest cosine similarity;
/// ties go to the lowest language index.
pub fn assign_tokens<T: Scalar>(vocab_emb: &Matrix<T>, dirs: &Matrix<T>) -> Result<Assignment> {
    if vocab_emb.cols() != dirs.cols() {
        return Err(Error::DimensionMismatch {
            expected: dirs.cols(),
            actual: vocab_emb.cols(),
        });
    }
    if dirs.rows() == 0 {
        return Err(Error::InvalidConfig("no language directions".into()));
    }
    let dir_norms: Vec<T> = dirs.row_iter().map(norm).collect();
    let v = vocab_emb.rows();
    let blocks: Vec<(Vec<usize>, usize)> = (0..v)
        .step_by(TOKEN_BLOCK.max(1))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let end = (start + TOKEN_BLOCK).min(v);
            let mut out = Vec::with_capacity(end - start);
            let mut zeros = 0;
            for i in start..end {
                let e = vocab_emb.row(i);
                let ne = norm(e);
                if ne == T::zero() {
                    zeros += 1;
                }
                let mut best = 0;
                let mut best_cos = T::neg_infinity();
                for (l, w) in dirs.row_iter().enumerate() {
                    let c = cosine_with_norms(e, w, ne, dir_norms[l]);
                    if c > best_cos {
                        best = l;
                        best_cos = c;
                    }
                }
                out.push(best);
            }
            (out, zeros)
        })
        .collect();
    let mut languages = Vec::with_capacity(v);
    let mut zero_embeddings = 0;
    for (b, z) in blocks {
        languages.extend(b);
        zero_embeddings += z;
    }
    if zero_embeddings > 0 {
        log::warn!("{zero_embeddings} zero-norm token embeddings assigned to language 0");
    }
    Ok(Assignment {
        languages,
        num_languages: dirs.rows(),
        zero_embeddings,
        zero_directions: dir_norms.iter().filter(|&&n| n == T::zero()).count(),
    })
}

/// Tokens assigned to one language, kept as an exact ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabShare {
    pub count: usize,
    pub total: usize,
}

impl VocabShare {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count as f64 / self.total as f64
        }
    }
}

pub fn vocab_share(assignment: &Assignment, language: usize) -> VocabShare {
    VocabShare {
        count: assignment
            .languages
            .iter()
            .filter(|&&l| l == language)
            .count(),
        total: assignment.len(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakStats {
    pub peak_layer: usize,
    /// `peak_layer / (layers - 1)`.
    pub peak_depth: f64,
    /// Share at the peak, as a fraction.
    pub peak_vocab: f64,
}

/// Argmax of a VocabShare curve; ties go to the lowest layer.
pub fn peak_statistics(curve: &[f64]) -> Result<PeakStats> {
    if curve.len() < 2 {
        return Err(Error::TooFewValues {
            required: 2,
            actual: curve.len(),
        });
    }
    let mut peak = 0;
    for (l, &v) in curve.iter().enumerate().skip(1) {
        if v > curve[peak] {
            peak = l;
        }
    }
    Ok(PeakStats {
        peak_layer: peak,
        peak_depth: peak as f64 / (curve.len() - 1) as f64,
        peak_vocab: curve[peak],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchAtPeak {
    pub assigned: usize,
    pub matched: usize,
    pub percent: f64,
}

/// Percentage of tokens assigned to `language` whose text label is `lang_label`.
/// Zero assigned tokens give 0%.
pub fn match_at_peak(
    assignment: &Assignment,
    token_labels: &[Label],
    language: usize,
    lang_label: &str,
) -> Result<MatchAtPeak> {
    if token_labels.len() != assignment.len() {
        return Err(Error::LengthMismatch {
            left: assignment.len(),
            right: token_labels.len(),
        });
    }
    if language >= assignment.num_languages {
        return Err(Error::LanguageOutOfRange {
            index: language,
            count: assignment.num_languages,
        });
    }
    let mut assigned = 0;
    let mut matched = 0;
    for (&l, lab) in assignment.languages.iter().zip(token_labels) {
        if l == language {
            assigned += 1;
            if lab.is(lang_label) {
                matched += 1;
            }
        }
    }
    if assigned == 0 {
        log::warn!("no tokens assigned to {lang_label} at its peak layer; Match@Peak set to 0");
    }
    let percent = if assigned == 0 {
        0.0
    } else {
        100.0 * matched as f64 / assigned as f64
    };
    Ok(MatchAtPeak {
        assigned,
        matched,
        percent,
    })
}

/// Classifies every vocabulary entry once.
pub fn label_vocab(texts: &[String], table: &RuleTable, byte_level: bool) -> Vec<Label> {
    texts
        .par_iter()
        .map(|t| table.classify_with(t, byte_level).label)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopToken {
    pub token: usize,
    pub text: String,
    pub cosine: f64,
}

/// Highest-cosine tokens for each direction, descending; ties by token index.
pub fn top_tokens<T: Scalar>(
    vocab_emb: &Matrix<T>,
    dirs: &Matrix<T>,
    texts: &[String],
    k: usize,
) -> Vec<Vec<TopToken>> {
    let emb_norms: Vec<T> = vocab_emb.row_iter().map(norm).collect();
    dirs.row_iter()
        .map(|w| {
            let nw = norm(w);
            let mut scored: Vec<(usize, T)> = vocab_emb
                .row_iter()
                .enumerate()
                .map(|(i, e)| (i, cosine_with_norms(e, w, emb_norms[i], nw)))
                .collect();
            scored.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.0.cmp(&b.0))
            });
            scored
                .into_iter()
                .take(k)
                .map(|(i, c)| TopToken {
                    token: i,
                    text: texts.get(i).cloned().unwrap_or_default(),
                    cosine: c.as_f64(),
                })
                .collect()
        })
        .collect()
}

/// Alignment results for one language of one model (one seed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMetrics {
    pub language: String,
    pub vocab_share: Vec<VocabShare>,
    pub peak_layer: usize,
    pub peak_depth: f64,
    /// Percent.
    pub peak_vocab_pct: f64,
    /// Percent of tokens assigned at the peak layer.
    pub match_at_peak_pct: f64,
    pub assigned_at_peak: usize,
    pub matched_at_peak: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_tokens: Option<Vec<TopToken>>,
}

impl AlignmentMetrics {
    pub fn curve(&self) -> Vec<f64> {
        self.vocab_share.iter().map(VocabShare::fraction).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelAlignment {
    pub languages: Vec<AlignmentMetrics>,
    pub zero_embeddings: usize,
    pub zero_directions: usize,
}

/// Runs the full alignment for one model given one linear probe per layer
/// (index = layer). `token_labels` comes from [`label_vocab`].
pub fn align_model<T: Scalar>(
    probes: &[ProbeParameters<T>],
    vocab_emb: &Matrix<T>,
    vocab_texts: &[String],
    token_labels: &[Label],
    languages: &[String],
    options: &AlignmentOptions,
) -> Result<ModelAlignment> {
    if probes.len() < 2 {
        return Err(Error::TooFewValues {
            required: 2,
            actual: probes.len(),
        });
    }
    if token_labels.len() != vocab_emb.rows() {
        return Err(Error::LengthMismatch {
            left: vocab_emb.rows(),
            right: token_labels.len(),
        });
    }
    let emb = if options.center_embeddings {
        center_rows(vocab_emb)
    } else {
        vocab_emb.clone()
    };
    let mut assignments = Vec::with_capacity(probes.len());
    let mut dir_mats = Vec::with_capacity(probes.len());
    for p in probes {
        if p.num_classes() != languages.len() {
            return Err(Error::DimensionMismatch {
                expected: languages.len(),
                actual: p.num_classes(),
            });
        }
        let dirs = directions(p, options.center_directions)?;
        assignments.push(assign_tokens(&emb, &dirs)?);
        dir_mats.push(dirs);
    }
    let mut out = Vec::with_capacity(languages.len());
    for (li, lang) in languages.iter().enumerate() {
        let shares: Vec<VocabShare> = assignments.iter().map(|a| vocab_share(a, li)).collect();
        let curve: Vec<f64> = shares.iter().map(VocabShare::fraction).collect();
        let peak = peak_statistics(&curve)?;
        let m = match_at_peak(&assignments[peak.peak_layer], token_labels, li, lang)?;
        let top_tokens = options.debug_top_k.map(|k| {
            let dirs = &dir_mats[peak.peak_layer];
            let one = Matrix::from_fn(1, dirs.cols(), |_, j| dirs.get(li, j));
            top_tokens(&emb, &one, vocab_texts, k).remove(0)
        });
        out.push(AlignmentMetrics {
            language: lang.clone(),
            vocab_share: shares,
            peak_layer: peak.peak_layer,
            peak_depth: peak.peak_depth,
            peak_vocab_pct: 100.0 * peak.peak_vocab,
            match_at_peak_pct: m.percent,
            assigned_at_peak: m.assigned,
            matched_at_peak: m.matched,
            top_tokens,
        });
    }
    Ok(ModelAlignment {
        languages: out,
        zero_embeddings: assignments[0].zero_embeddings,
        zero_directions: assignments.iter().map(|a| a.zero_directions).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::{OptimizerConfig, ProbeMeta};

    fn linear(w: Matrix<f64>) -> ProbeParameters<f64> {
        let c = w.rows();
        ProbeParameters {
            weights: ProbeWeights::Linear { w, b: vec![0.0; c] },
            meta: ProbeMeta {
                layer: 0,
                seed: 0,
                epochs_run: 0,
                best_epoch: 0,
                best_val_accuracy: 0.0,
                config: OptimizerConfig::default(),
            },
        }
    }

    #[test]
    fn direction_is_the_raw_row() {
        let w = Matrix::from_fn(5, 4, |i, j| if i == j { 1.0 } else { 0.0 });
        let p = linear(w);
        assert_eq!(language_direction(&p, 2).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(
            language_direction(&p, 7),
            Err(Error::LanguageOutOfRange { index: 7, count: 5 })
        ));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0f64, 0.0], &[1.0, 0.0]), 1.0);
        assert_eq!(cosine(&[1.0f64, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine(&[1.0f64, 2.0], &[2.0, 4.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[0.0f64, 0.0], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn axis_tokens_go_to_their_axis() {
        let dirs = Matrix::from_rows(&[vec![1.0f64, 0.0], vec![0.0, 1.0]]).unwrap();
        let emb = Matrix::from_rows(&[
            vec![3.0, 0.0],
            vec![0.0, 0.5],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let a = assign_tokens(&emb, &dirs).unwrap();
        // zero embedding and the exact tie both go to language 0
        assert_eq!(a.languages, vec![0, 1, 0, 0]);
        assert_eq!(a.zero_embeddings, 1);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let dirs = Matrix::filled(2, 3, 1.0f32);
        let emb = Matrix::filled(4, 2, 1.0f32);
        assert!(matches!(
            assign_tokens(&emb, &dirs),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn share_fixture() {
        let a = Assignment {
            languages: vec![2, 0, 2, 1, 4, 2, 3, 0, 1, 0],
            num_languages: 5,
            zero_embeddings: 0,
            zero_directions: 0,
        };
        let zh = vocab_share(&a, 2);
        assert_eq!((zh.count, zh.total), (3, 10));
        assert_eq!(zh.fraction(), 0.3);
        assert_eq!(a.counts().iter().sum::<usize>(), 10);
    }

    #[test]
    fn peak_examples() {
        let p = peak_statistics(&[0.1, 0.5, 0.3]).unwrap();
        assert_eq!((p.peak_layer, p.peak_depth, p.peak_vocab), (1, 0.5, 0.5));
        let p = peak_statistics(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(p.peak_depth, 1.0);
        let p = peak_statistics(&[0.6, 0.2, 0.6]).unwrap();
        assert_eq!((p.peak_layer, p.peak_depth), (0, 0.0));
        assert!(peak_statistics(&[]).is_err());
    }

    #[test]
    fn match_fixture() {
        let zh = Label::Lang("ZH".into());
        let en = Label::Lang("EN".into());
        let a = Assignment {
            languages: vec![2; 10],
            num_languages: 5,
            zero_embeddings: 0,
            zero_directions: 0,
        };
        let labels = vec![
            zh.clone(),
            en.clone(),
            zh.clone(),
            Label::Unknown,
            zh.clone(),
            en.clone(),
            en,
            Label::Unknown,
            zh,
            Label::Unknown,
        ];
        let m = match_at_peak(&a, &labels, 2, "ZH").unwrap();
        assert_eq!((m.assigned, m.matched, m.percent), (10, 4, 40.0));
        let m = match_at_peak(&a, &vec![Label::Unknown; 10], 2, "ZH").unwrap();
        assert_eq!(m.percent, 0.0);
        let m = match_at_peak(&a, &vec![Label::Unknown; 10], 1, "ES").unwrap();
        assert_eq!((m.assigned, m.percent), (0, 0.0));
    }

    #[test]
    fn mlp_has_no_direction() {
        let p = ProbeParameters {
            weights: ProbeWeights::Mlp {
                w1: Matrix::filled(3, 4, 0.0f64),
                w2: Matrix::filled(5, 3, 0.0),
                b1: None,
                b2: None,
            },
            meta: linear(Matrix::filled(1, 1, 0.0)).meta,
        };
        assert!(matches!(
            language_direction(&p, 0),
            Err(Error::NotLinearProbe)
        ));
    }
}
