// SPDX-License-Identifier: MIT OR Apache-2.0

//! Row assembly from cached cells and the model-group comparison.

use std::collections::BTreeMap;

use crate::alignment::ModelAlignment;
use crate::error::{Error, Result};
use crate::probes::ProbeKind;
use crate::scalar::{mean, sample_sd};
use crate::stats::paired_t_test;

use super::run::{CellRecord, ModelInfo};
use super::{GroupColumn, GroupTable, LayerRow, ModelGroup, Ratio, Spread};

/// Everything cached for one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelCells {
    pub info: ModelInfo,
    pub cells: Vec<CellRecord>,
    pub alignment: Vec<(u64, ModelAlignment)>,
}

/// Percent accuracies indexed `[layer][seed]`.
type Grid = Vec<Vec<Option<f64>>>;

fn grid(m: &ModelCells, seeds: &[u64], kind: ProbeKind, language: Option<usize>) -> Grid {
    let mut g = vec![vec![None; seeds.len()]; m.info.num_layers];
    for c in m.cells.iter().filter(|c| c.kind == kind) {
        let (Some(row), Some(si)) = (g.get_mut(c.layer), seeds.iter().position(|&s| s == c.seed))
        else {
            continue;
        };
        row[si] = match language {
            None => Some(c.val_accuracy),
            Some(li) => c.per_language.get(li).copied().flatten(),
        }
        .map(|a| 100.0 * a);
    }
    g
}

/// Element-wise mean over languages; a slot is present only if every language has it.
fn average_grids(grids: &[Grid]) -> Grid {
    let Some(first) = grids.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|l| {
            (0..first[l].len())
                .map(|s| {
                    let vals: Option<Vec<f64>> = grids.iter().map(|g| g[l][s]).collect();
                    vals.and_then(|v| mean(&v))
                })
                .collect()
        })
        .collect()
}

/// Seed-averaged curve; `None` where no seed is present.
fn curve(g: &Grid) -> Vec<Option<f64>> {
    g.iter()
        .map(|seeds| {
            let present: Vec<f64> = seeds.iter().flatten().copied().collect();
            mean(&present)
        })
        .collect()
}

fn spread(values: &[Option<f64>]) -> Option<Spread> {
    let v: Option<Vec<f64>> = values.iter().copied().collect();
    let v = v?;
    Some(Spread {
        mean: mean(&v)?,
        sd: sample_sd(&v),
    })
}

fn gap_p(
    lin: &Grid,
    mlp: &Grid,
    lin_curve: &[Option<f64>],
    mlp_curve: &[Option<f64>],
    per_seed: bool,
) -> Option<f64> {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    if per_seed {
        for l in 1..lin.len() {
            for (a, b) in mlp[l].iter().zip(&lin[l]) {
                if let (Some(a), Some(b)) = (a, b) {
                    xs.push(*a);
                    ys.push(*b);
                }
            }
        }
    } else {
        for (a, b) in mlp_curve.iter().zip(lin_curve).skip(1) {
            if let (Some(a), Some(b)) = (a, b) {
                xs.push(*a);
                ys.push(*b);
            }
        }
    }
    paired_t_test(&xs, &ys).ok().map(|t| t.p)
}

struct AlignCols {
    peak_depth: Option<f64>,
    peak_vocab: Option<f64>,
    match_at_peak: Option<f64>,
}

fn alignment_cols(m: &ModelCells, language: &str) -> AlignCols {
    let per_seed: Vec<_> = m
        .alignment
        .iter()
        .filter_map(|(_, a)| a.languages.iter().find(|x| x.language == language))
        .collect();
    let avg = |f: &dyn Fn(&crate::alignment::AlignmentMetrics) -> f64| {
        mean(&per_seed.iter().map(|x| f(x)).collect::<Vec<_>>())
    };
    AlignCols {
        peak_depth: avg(&|x| x.peak_depth),
        peak_vocab: avg(&|x| x.peak_vocab_pct),
        match_at_peak: avg(&|x| x.match_at_peak_pct),
    }
}

fn row(
    m: &ModelCells,
    language: Option<String>,
    lin: &Grid,
    mlp: &Grid,
    align: AlignCols,
    per_seed_ttest: bool,
) -> LayerRow {
    let lin_curve = curve(lin);
    let mlp_curve = curve(mlp);
    let at = |c: &[Option<f64>], l: usize| c.get(l).copied().flatten();
    let l0 = at(&lin_curve, 0);
    let l1 = at(&lin_curve, 1);
    let upper = |c: &[Option<f64>]| if c.len() > 1 { spread(&c[1..]) } else { None };
    let linear = upper(&lin_curve);
    let mlp_s = upper(&mlp_curve);
    let n_seeds = lin
        .iter()
        .map(|s| s.iter().flatten().count())
        .min()
        .unwrap_or(0);
    LayerRow {
        model: m.info.name.clone(),
        group: m.info.group,
        language,
        n_seeds,
        l0,
        l1,
        jump: l0.zip(l1).map(|(a, b)| b - a),
        linear,
        mlp: mlp_s,
        linear_with_l0: spread(&lin_curve),
        mlp_with_l0: spread(&mlp_curve),
        gap: linear.zip(mlp_s).map(|(a, b)| b.mean - a.mean),
        gap_p: gap_p(lin, mlp, &lin_curve, &mlp_curve, per_seed_ttest),
        last: lin_curve.last().copied().flatten(),
        avg: linear.map(|s| s.mean),
        peak_depth: align.peak_depth,
        peak_vocab: align.peak_vocab,
        match_at_peak: align.match_at_peak,
    }
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.and_then(|v| mean(&v))
}

/// Per-language rows followed by the model's average row, models in input order.
pub fn assemble_rows(models: &[ModelCells], seeds: &[u64], per_seed_ttest: bool) -> Vec<LayerRow> {
    let mut rows = Vec::new();
    for m in models {
        let langs = &m.info.languages;
        let lin: Vec<Grid> = (0..langs.len())
            .map(|li| grid(m, seeds, ProbeKind::Linear, Some(li)))
            .collect();
        let mlp: Vec<Grid> = (0..langs.len())
            .map(|li| grid(m, seeds, ProbeKind::Mlp, Some(li)))
            .collect();
        let start = rows.len();
        for (li, lang) in langs.iter().enumerate() {
            let align = alignment_cols(m, lang);
            rows.push(row(
                m,
                Some(lang.clone()),
                &lin[li],
                &mlp[li],
                align,
                per_seed_ttest,
            ));
        }
        let lang_rows = &rows[start..];
        let align = AlignCols {
            peak_depth: mean_opt(lang_rows.iter().map(|r| r.peak_depth)),
            peak_vocab: mean_opt(lang_rows.iter().map(|r| r.peak_vocab)),
            match_at_peak: mean_opt(lang_rows.iter().map(|r| r.match_at_peak)),
        };
        let avg = row(
            m,
            None,
            &average_grids(&lin),
            &average_grids(&mlp),
            align,
            per_seed_ttest,
        );
        rows.push(avg);
    }
    rows
}

/// One model's Match@Peak for one language.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchRow {
    pub model: String,
    pub group: ModelGroup,
    pub language: String,
    /// Percent.
    pub match_at_peak: f64,
}

/// Match@Peak values of the per-language rows that have one.
pub fn group_rows(rows: &[LayerRow]) -> Vec<MatchRow> {
    rows.iter()
        .filter_map(|r| {
            Some(MatchRow {
                model: r.model.clone(),
                group: r.group,
                language: r.language.clone()?,
                match_at_peak: r.match_at_peak?,
            })
        })
        .collect()
}

/// English-centric versus Chinese-inclusive Match@Peak, per language:
/// unweighted group means, absolute difference and larger/smaller ratio.
pub fn group_comparison(rows: &[MatchRow], languages: &[String]) -> Result<GroupTable> {
    let (a, b) = (ModelGroup::EnglishCentric, ModelGroup::ChineseInclusive);
    let mut columns = Vec::with_capacity(languages.len());
    for lang in languages {
        let mut by_group: BTreeMap<ModelGroup, Vec<f64>> = BTreeMap::new();
        for r in rows.iter().filter(|r| &r.language == lang) {
            by_group.entry(r.group).or_default().push(r.match_at_peak);
        }
        let stats = |g: ModelGroup| -> Result<(f64, usize)> {
            let v = by_group.get(&g).map(Vec::as_slice).unwrap_or(&[]);
            let m = mean(v).ok_or_else(|| Error::EmptyGroup(format!("{g} ({lang})")))?;
            Ok((m, v.len()))
        };
        let (mean_a, n_a) = stats(a)?;
        let (mean_b, n_b) = stats(b)?;
        let (hi, lo) = (mean_a.max(mean_b), mean_a.min(mean_b));
        columns.push(GroupColumn {
            language: lang.clone(),
            mean_a,
            mean_b,
            n_a,
            n_b,
            delta: (mean_a - mean_b).abs(),
            ratio: if lo == 0.0 {
                Ratio::Infinite
            } else {
                Ratio::Finite(hi / lo)
            },
        });
    }
    Ok(GroupTable {
        group_a: a,
        group_b: b,
        columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mr(model: &str, group: ModelGroup, lang: &str, v: f64) -> MatchRow {
        MatchRow {
            model: model.into(),
            group,
            language: lang.into(),
            match_at_peak: v,
        }
    }

    #[test]
    fn english_column_of_the_group_table() {
        use ModelGroup::*;
        let rows = vec![
            mr("llama", EnglishCentric, "EN", 67.9),
            mr("openmath", EnglishCentric, "EN", 70.2),
            mr("qwen", ChineseInclusive, "EN", 52.6),
            mr("qwen-math", ChineseInclusive, "EN", 53.9),
            mr("openr1", ChineseInclusive, "EN", 55.9),
            mr("gpt", Balanced, "EN", 65.0),
        ];
        let t = group_comparison(&rows, &["EN".to_string()]).unwrap();
        let c = &t.columns[0];
        assert!((c.mean_a - 69.05).abs() < 1e-12);
        assert!((c.mean_b - 54.133_333_333_333_33).abs() < 1e-12);
        assert_eq!((c.n_a, c.n_b), (2, 3));
        assert!((c.delta - 14.916_666_666_666_67).abs() < 1e-12);
        assert!((c.ratio.value() - 1.275_554_187_192_118).abs() < 1e-12);
    }

    #[test]
    fn zero_group_mean_gives_infinite_ratio() {
        use ModelGroup::*;
        let rows = vec![
            mr("a", EnglishCentric, "DE", 0.0),
            mr("b", ChineseInclusive, "DE", 0.4),
        ];
        let t = group_comparison(&rows, &["DE".to_string()]).unwrap();
        assert_eq!(t.columns[0].ratio, Ratio::Infinite);
        assert!((t.columns[0].delta - 0.4).abs() < 1e-15);
    }

    #[test]
    fn empty_group_is_an_error() {
        let rows = vec![mr("a", ModelGroup::EnglishCentric, "EN", 10.0)];
        assert!(matches!(
            group_comparison(&rows, &["EN".to_string()]),
            Err(Error::EmptyGroup(_))
        ));
    }
}
