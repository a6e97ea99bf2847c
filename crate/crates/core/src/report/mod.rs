// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment orchestration and Table-1/Table-2 style reports.

mod config;
mod emit;
mod run;
mod tables;

use serde::{Deserialize, Serialize};

use crate::alignment::ModelAlignment;
use crate::probes::ProbeKind;
use crate::stats::CellResult;

pub use config::{BundleSpec, ExperimentConfig, ModelGroup, Precision};
pub use emit::{
    emit_tables, fmt_acc, fmt_depth, fmt_gap, fmt_ratio, render_group_csv, render_group_markdown,
    render_layer_csv, render_layer_markdown, ALIGNMENT_PREFIX, CELLS_CSV, GROUP_CSV, GROUP_MD,
    LAYER_CSV, LAYER_MD,
};
pub use run::{
    build_report, cell_config_hash, run_experiment, CellRecord, ExperimentIndex, ModelInfo,
    INDEX_FILE,
};
pub use tables::{assemble_rows, group_comparison, group_rows, MatchRow, ModelCells};

/// Mean and across-layer standard deviation, in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub sd: Option<f64>,
}

/// One Table-1 row. Accuracy-like values are percentages; `None` marks a
/// value that depends on a missing cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub model: String,
    pub group: ModelGroup,
    /// `None` for the per-model average row.
    pub language: Option<String>,
    /// Fewest seeds available for any linear cell of the row.
    pub n_seeds: usize,
    pub l0: Option<f64>,
    pub l1: Option<f64>,
    pub jump: Option<f64>,
    /// Layers 1..L.
    pub linear: Option<Spread>,
    pub mlp: Option<Spread>,
    /// Layers 0..L.
    pub linear_with_l0: Option<Spread>,
    pub mlp_with_l0: Option<Spread>,
    /// MLP minus linear average.
    pub gap: Option<f64>,
    pub gap_p: Option<f64>,
    /// Linear accuracy at the highest layer in the bundle.
    pub last: Option<f64>,
    /// Headline average: linear accuracy over layers 1..L.
    pub avg: Option<f64>,
    pub peak_depth: Option<f64>,
    pub peak_vocab: Option<f64>,
    pub match_at_peak: Option<f64>,
}

impl LayerRow {
    pub fn language_label(&self) -> &str {
        self.language.as_deref().unwrap_or("Avg")
    }
}

/// `max/min` of two group means; `Infinite` when the smaller mean is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ratio {
    Finite(f64),
    Infinite,
}

impl Ratio {
    pub fn value(self) -> f64 {
        match self {
            Ratio::Finite(r) => r,
            Ratio::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupColumn {
    pub language: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub n_a: usize,
    pub n_b: usize,
    /// `|mean_a - mean_b|`, percentage points.
    pub delta: f64,
    pub ratio: Ratio,
}

/// Per-language Match@Peak means of two model groups.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupTable {
    pub group_a: ModelGroup,
    pub group_b: ModelGroup,
    pub columns: Vec<GroupColumn>,
}

impl GroupTable {
    pub fn column(&self, language: &str) -> Option<&GroupColumn> {
        self.columns.iter().find(|c| c.language == language)
    }
}

/// A cell, model or alignment that could not be computed.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellFailure {
    pub model: String,
    pub layer: Option<usize>,
    pub seed: Option<u64>,
    pub kind: Option<ProbeKind>,
    pub error: String,
}

/// Alignment results of one model: per seed, in seed order.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentSummary {
    pub model: String,
    pub per_seed: Vec<(u64, ModelAlignment)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportBundle {
    /// Languages in table order.
    pub languages: Vec<String>,
    /// Sorted by (model, layer, seed, kind, language).
    pub cells: Vec<CellResult>,
    pub failures: Vec<CellFailure>,
    pub rows: Vec<LayerRow>,
    /// `None` unless both compared groups have models.
    pub groups: Option<GroupTable>,
    pub alignment: Vec<AlignmentSummary>,
}
