// SPDX-License-Identifier: MIT OR Apache-2.0

//! CSV and Markdown rendering. Output depends only on the report, so equal
//! reports give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats::significance_stars;

use super::run::sanitize;
use super::{AlignmentSummary, GroupTable, LayerRow, Ratio, ReportBundle, Spread};

pub const LAYER_CSV: &str = "layer_table.csv";
pub const LAYER_MD: &str = "layer_table.md";
pub const GROUP_CSV: &str = "group_table.csv";
pub const GROUP_MD: &str = "group_table.md";
pub const CELLS_CSV: &str = "cells.csv";
/// Per-model alignment curves go to `alignment_{model}.csv`.
pub const ALIGNMENT_PREFIX: &str = "alignment_";

const MISSING_MD: &str = "–";

fn no_negative_zero(s: String) -> String {
    match s.strip_prefix('-') {
        Some(rest) if rest.chars().all(|c| c == '0' || c == '.') => rest.to_string(),
        _ => s,
    }
}

/// Accuracy or percentage, one decimal.
pub fn fmt_acc(v: f64) -> String {
    no_negative_zero(format!("{v:.1}"))
}

/// Signed one-decimal difference.
pub fn fmt_gap(v: f64) -> String {
    let s = format!("{v:+.1}");
    match s.strip_prefix('-') {
        Some(rest) if rest.chars().all(|c| c == '0' || c == '.') => format!("+{rest}"),
        _ => s,
    }
}

/// Normalized depth, two decimals.
pub fn fmt_depth(v: f64) -> String {
    no_negative_zero(format!("{v:.2}"))
}

pub fn fmt_ratio(r: Ratio) -> String {
    match r {
        Ratio::Finite(v) => format!("{v:.2}"),
        Ratio::Infinite => "∞".to_string(),
    }
}

fn fmt_p(p: f64) -> String {
    format!("{p:.3e}")
}

fn opt(v: Option<f64>, f: fn(f64) -> String) -> String {
    v.map(f).unwrap_or_default()
}

fn md(v: Option<f64>, f: fn(f64) -> String) -> String {
    v.map(f).unwrap_or_else(|| MISSING_MD.to_string())
}

fn md_spread(s: Option<Spread>) -> String {
    match s {
        Some(Spread { mean, sd: Some(sd) }) => format!("{} ± {}", fmt_acc(mean), fmt_acc(sd)),
        Some(Spread { mean, sd: None }) => fmt_acc(mean),
        None => MISSING_MD.to_string(),
    }
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let err = |e| Error::csv("<memory>", e);
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| Error::csv("<memory>", e.into_error().into()))
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

const LAYER_HEADER: [&str; 23] = [
    "model",
    "group",
    "language",
    "n_seeds",
    "l0",
    "l1",
    "jump",
    "linear_avg",
    "linear_sd",
    "mlp_avg",
    "mlp_sd",
    "gap",
    "gap_p",
    "gap_stars",
    "last",
    "avg",
    "linear_avg_with_l0",
    "linear_sd_with_l0",
    "mlp_avg_with_l0",
    "mlp_sd_with_l0",
    "peak_depth",
    "peak_vocab",
    "match_at_peak",
];

fn spread_cols(s: Option<Spread>) -> [String; 2] {
    [
        opt(s.map(|s| s.mean), fmt_acc),
        opt(s.and_then(|s| s.sd), fmt_acc),
    ]
}

pub fn render_layer_csv(rows: &[LayerRow]) -> Result<Vec<u8>> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![
                r.model.clone(),
                r.group.to_string(),
                r.language_label().to_string(),
                r.n_seeds.to_string(),
                opt(r.l0, fmt_acc),
                opt(r.l1, fmt_acc),
                opt(r.jump, fmt_acc),
            ];
            v.extend(spread_cols(r.linear));
            v.extend(spread_cols(r.mlp));
            v.push(opt(r.gap, fmt_gap));
            v.push(opt(r.gap_p, fmt_p));
            v.push(
                r.gap_p
                    .map(significance_stars)
                    .unwrap_or_default()
                    .to_string(),
            );
            v.push(opt(r.last, fmt_acc));
            v.push(opt(r.avg, fmt_acc));
            v.extend(spread_cols(r.linear_with_l0));
            v.extend(spread_cols(r.mlp_with_l0));
            v.push(opt(r.peak_depth, fmt_depth));
            v.push(opt(r.peak_vocab, fmt_acc));
            v.push(opt(r.match_at_peak, fmt_acc));
            v
        })
        .collect();
    csv_bytes(&strings(&LAYER_HEADER), &body)
}

fn md_row(out: &mut String, cells: &[String]) {
    out.push('|');
    for c in cells {
        let _ = write!(out, " {} |", c.replace('|', "\\|"));
    }
    out.push('\n');
}

fn md_rule(out: &mut String, left: usize, right: usize) {
    out.push('|');
    out.push_str(&"---|".repeat(left));
    out.push_str(&"---:|".repeat(right));
    out.push('\n');
}

pub fn render_layer_markdown(report: &ReportBundle) -> String {
    let rows = &report.rows;
    let mut out = String::new();
    md_row(
        &mut out,
        &strings(&[
            "Model",
            "Lang",
            "L0",
            "L1",
            "Jump",
            "Linear Avg",
            "MLP Avg",
            "Gap",
            "Last",
            "Avg",
            "PeakDepth",
            "PeakVocab",
            "Match@Peak",
        ]),
    );
    md_rule(&mut out, 2, 11);
    let first_of_model = |i: usize| i == 0 || rows[i - 1].model != rows[i].model;
    for (i, r) in rows.iter().enumerate() {
        let gap = match (r.gap, r.gap_p) {
            (Some(g), Some(p)) => format!("{}{}", fmt_gap(g), significance_stars(p)),
            (Some(g), None) => fmt_gap(g),
            _ => MISSING_MD.to_string(),
        };
        md_row(
            &mut out,
            &[
                if first_of_model(i) {
                    r.model.clone()
                } else {
                    String::new()
                },
                r.language_label().to_string(),
                md(r.l0, fmt_acc),
                md(r.l1, fmt_acc),
                md(r.jump, fmt_acc),
                md_spread(r.linear),
                md_spread(r.mlp),
                gap,
                md(r.last, fmt_acc),
                md(r.avg, fmt_acc),
                md(r.peak_depth, fmt_depth),
                md(r.peak_vocab, fmt_acc),
                md(r.match_at_peak, fmt_acc),
            ],
        );
    }
    out.push_str("\nIncluding layer 0:\n\n");
    md_row(
        &mut out,
        &strings(&["Model", "Lang", "Linear Avg", "MLP Avg"]),
    );
    md_rule(&mut out, 2, 2);
    for (i, r) in rows.iter().enumerate() {
        md_row(
            &mut out,
            &[
                if first_of_model(i) {
                    r.model.clone()
                } else {
                    String::new()
                },
                r.language_label().to_string(),
                md_spread(r.linear_with_l0),
                md_spread(r.mlp_with_l0),
            ],
        );
    }
    let n = rows.iter().map(|r| r.n_seeds).min().unwrap_or(0);
    let _ = write!(
        out,
        "\nAccuracies in %, mean over seeds (n = {n} per cell); ± is the standard deviation across layers. \
         Gap significance (paired t-test): * p<0.05, ** p<0.01, *** p<0.001.\n"
    );
    if !report.failures.is_empty() {
        let _ = writeln!(
            out,
            "\nFailed or missing cells: {} (listed in {CELLS_CSV}).",
            report.failures.len()
        );
    }
    out
}

pub fn render_group_csv(groups: Option<&GroupTable>, languages: &[String]) -> Result<Vec<u8>> {
    let mut header = vec!["row".to_string()];
    let Some(g) = groups else {
        header.extend(languages.iter().cloned());
        return csv_bytes(&header, &[]);
    };
    header.extend(g.columns.iter().map(|c| c.language.clone()));
    let line = |name: &str, f: &dyn Fn(&super::GroupColumn) -> String| {
        std::iter::once(name.to_string())
            .chain(g.columns.iter().map(f))
            .collect::<Vec<_>>()
    };
    let rows = vec![
        line(g.group_a.as_str(), &|c| format!("{:.2}", c.mean_a)),
        line(g.group_b.as_str(), &|c| format!("{:.2}", c.mean_b)),
        line("delta", &|c| format!("{:.2}", c.delta)),
        line("ratio", &|c| fmt_ratio(c.ratio)),
    ];
    csv_bytes(&header, &rows)
}

pub fn render_group_markdown(groups: Option<&GroupTable>, languages: &[String]) -> String {
    let mut out = String::new();
    let mut header = vec!["Model Group".to_string()];
    let Some(g) = groups else {
        header.extend(languages.iter().cloned());
        md_row(&mut out, &header);
        md_rule(&mut out, 1, languages.len());
        out.push_str("\nNo comparison: each of english_centric and chinese_inclusive needs at least one model.\n");
        return out;
    };
    header.extend(g.columns.iter().map(|c| c.language.clone()));
    md_row(&mut out, &header);
    md_rule(&mut out, 1, g.columns.len());
    let line = |out: &mut String, name: String, f: &dyn Fn(&super::GroupColumn) -> String| {
        let cells: Vec<String> = std::iter::once(name)
            .chain(g.columns.iter().map(f))
            .collect();
        md_row(out, &cells);
    };
    let n = |c: &super::GroupColumn, a: bool| if a { c.n_a } else { c.n_b };
    let na = g.columns.iter().map(|c| n(c, true)).max().unwrap_or(0);
    let nb = g.columns.iter().map(|c| n(c, false)).max().unwrap_or(0);
    line(&mut out, format!("{} (n={na})", g.group_a.title()), &|c| {
        format!("{:.2}", c.mean_a)
    });
    line(&mut out, format!("{} (n={nb})", g.group_b.title()), &|c| {
        format!("{:.2}", c.mean_b)
    });
    line(&mut out, "Difference (Δ%p)".into(), &|c| {
        format!("{:.2}", c.delta)
    });
    line(&mut out, "Ratio (×)".into(), &|c| fmt_ratio(c.ratio));
    out.push_str("\nMatch@Peak (%) per model group; unweighted means over models.\n");
    out
}

fn render_cells_csv(report: &ReportBundle) -> Result<Vec<u8>> {
    let header = strings(&[
        "model",
        "language",
        "layer",
        "seed",
        "kind",
        "status",
        "val_accuracy",
        "error",
    ]);
    let mut rows: Vec<Vec<String>> = report
        .cells
        .iter()
        .map(|c| {
            vec![
                c.model.clone(),
                c.language.clone().unwrap_or_default(),
                c.layer.to_string(),
                c.seed.to_string(),
                c.kind.to_string(),
                "ok".into(),
                format!("{:.6}", c.val_accuracy),
                String::new(),
            ]
        })
        .collect();
    rows.extend(report.failures.iter().map(|f| {
        vec![
            f.model.clone(),
            String::new(),
            f.layer.map(|l| l.to_string()).unwrap_or_default(),
            f.seed.map(|s| s.to_string()).unwrap_or_default(),
            f.kind.map(|k| k.to_string()).unwrap_or_default(),
            "failed".into(),
            String::new(),
            f.error.clone(),
        ]
    }));
    csv_bytes(&header, &rows)
}

fn render_alignment_csv(a: &AlignmentSummary) -> Result<Vec<u8>> {
    let header = strings(&[
        "seed",
        "language",
        "layer",
        "assigned",
        "total",
        "vocab_share",
        "peak_layer",
        "peak_depth",
        "peak_vocab",
        "match_at_peak",
        "assigned_at_peak",
        "matched_at_peak",
    ]);
    let mut rows = Vec::new();
    for (seed, ma) in &a.per_seed {
        for m in &ma.languages {
            for (layer, s) in m.vocab_share.iter().enumerate() {
                rows.push(vec![
                    seed.to_string(),
                    m.language.clone(),
                    layer.to_string(),
                    s.count.to_string(),
                    s.total.to_string(),
                    format!("{:.2}", 100.0 * s.fraction()),
                    m.peak_layer.to_string(),
                    fmt_depth(m.peak_depth),
                    fmt_acc(m.peak_vocab_pct),
                    fmt_acc(m.match_at_peak_pct),
                    m.assigned_at_peak.to_string(),
                    m.matched_at_peak.to_string(),
                ]);
            }
        }
    }
    let n = a.per_seed.len() as f64;
    if let Some((_, first)) = a.per_seed.first() {
        for (li, m) in first.languages.iter().enumerate() {
            let per: Vec<_> = a
                .per_seed
                .iter()
                .filter_map(|(_, x)| x.languages.get(li))
                .collect();
            let avg = |f: &dyn Fn(&crate::alignment::AlignmentMetrics) -> f64| {
                per.iter().map(|x| f(x)).sum::<f64>() / n
            };
            for layer in 0..m.vocab_share.len() {
                rows.push(vec![
                    "mean".into(),
                    m.language.clone(),
                    layer.to_string(),
                    String::new(),
                    String::new(),
                    format!("{:.2}", avg(&|x| 100.0 * x.vocab_share[layer].fraction())),
                    String::new(),
                    fmt_depth(avg(&|x| x.peak_depth)),
                    fmt_acc(avg(&|x| x.peak_vocab_pct)),
                    fmt_acc(avg(&|x| x.match_at_peak_pct)),
                    String::new(),
                    String::new(),
                ]);
            }
        }
    }
    csv_bytes(&header, &rows)
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes the layer, group, cell and alignment tables into `dir`.
pub fn emit_tables(report: &ReportBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(dir, LAYER_CSV, &render_layer_csv(&report.rows)?)?;
    write(dir, LAYER_MD, render_layer_markdown(report).as_bytes())?;
    let g = report.groups.as_ref();
    write(dir, GROUP_CSV, &render_group_csv(g, &report.languages)?)?;
    write(
        dir,
        GROUP_MD,
        render_group_markdown(g, &report.languages).as_bytes(),
    )?;
    write(dir, CELLS_CSV, &render_cells_csv(report)?)?;
    for a in &report.alignment {
        let name = format!("{ALIGNMENT_PREFIX}{}.csv", sanitize(&a.model));
        write(dir, &name, &render_alignment_csv(a)?)?;
    }
    Ok(())
}
