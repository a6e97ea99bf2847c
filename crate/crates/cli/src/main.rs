// SPDX-License-Identifier: MIT OR Apache-2.0

//! `langgeom` command-line interface.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};

use langgeom::alignment::{align_model, label_vocab, AlignmentOptions};
use langgeom::bundle::{read_bundle, write_bundle};
use langgeom::langid::RuleTable;
use langgeom::probes::{load_probe, read_probe_manifest, ProbeKind, PROBE_MANIFEST_FILE};
use langgeom::report::{build_report, emit_tables, run_experiment, ExperimentConfig, ReportBundle};
use langgeom::synth::{generate_with_rules, SynthSpec};

/// Planted-token ground truth written next to a synthetic bundle.
const SYNTH_TRUTH_FILE: &str = "synth_truth.json";

#[derive(Debug, Parser)]
#[command(
    name = "langgeom",
    version,
    about = "Layer-wise language probing and token-language alignment"
)]
struct Cli {
    /// Log filter (error, warn, info, debug, trace).
    #[arg(long, global = true, env = "LANGGEOM_LOG", default_value = "info")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train every probe cell, align, and write the report tables.
    Run {
        #[arg(long, env = "LANGGEOM_CONFIG")]
        config: PathBuf,
        /// Replaces the config's output directory.
        #[arg(long, env = "LANGGEOM_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
        /// Replaces the config's seed count.
        #[arg(long, env = "LANGGEOM_SEEDS")]
        seeds: Option<u64>,
    },
    /// Generate a synthetic activation bundle with planted structure.
    Synth {
        #[arg(long, env = "LANGGEOM_SPEC")]
        spec: PathBuf,
        #[arg(long, env = "LANGGEOM_OUT")]
        out: PathBuf,
        /// Replaces the spec's generator seed.
        #[arg(long, env = "LANGGEOM_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "LANGGEOM_RULE_TABLE")]
        rule_table: Option<PathBuf>,
    },
    /// Token-language alignment of a bundle against saved linear probes.
    Align {
        #[arg(long, env = "LANGGEOM_BUNDLE")]
        bundle: PathBuf,
        /// Directory holding one saved probe per layer, one subdirectory each.
        #[arg(long, env = "LANGGEOM_PROBES")]
        probes: PathBuf,
        #[arg(long, env = "LANGGEOM_RULE_TABLE")]
        rule_table: Option<PathBuf>,
        #[arg(long, env = "LANGGEOM_CENTER_DIRECTIONS")]
        center_directions: bool,
        #[arg(long, env = "LANGGEOM_CENTER_EMBEDDINGS")]
        center_embeddings: bool,
        /// Also list the k highest-cosine tokens per language at its peak layer.
        #[arg(long, env = "LANGGEOM_TOP_K")]
        top_k: Option<usize>,
        /// Write the JSON result here instead of stdout.
        #[arg(long, env = "LANGGEOM_ALIGN_OUT")]
        out: Option<PathBuf>,
    },
    /// Rebuild the report tables from a cell cache.
    Report {
        #[arg(long, env = "LANGGEOM_CACHE")]
        cache: PathBuf,
        #[arg(long, env = "LANGGEOM_OUT")]
        out: PathBuf,
    },
    /// Classify token text with the language-id rule cascade.
    Langid {
        #[arg(long, env = "LANGGEOM_TEXT")]
        text: String,
        #[arg(long, env = "LANGGEOM_RULE_TABLE")]
        rule_table: Option<PathBuf>,
        /// Decode GPT-2 style byte-level surface forms first.
        #[arg(long, env = "LANGGEOM_BYTE_LEVEL")]
        byte_level: bool,
    },
}

fn rule_table(path: Option<&Path>) -> Result<RuleTable> {
    Ok(match path {
        Some(p) => RuleTable::from_file(p)
            .with_context(|| format!("loading rule table {}", p.display()))?,
        None => RuleTable::builtin().clone(),
    })
}

fn summarize(report: &ReportBundle, out: &Path) {
    info!(
        "{} rows, {} cells written to {}",
        report.rows.len(),
        report.cells.len(),
        out.display()
    );
    if !report.failures.is_empty() {
        warn!(
            "{} failed or missing cells, see cells.csv",
            report.failures.len()
        );
    }
}

fn run(config: &Path, output_dir: Option<PathBuf>, seeds: Option<u64>) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(config)
        .with_context(|| format!("reading {}", config.display()))?;
    if let Some(o) = output_dir {
        cfg.output_dir = o;
    }
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    cfg.validate()?;
    let report = run_experiment(&cfg)?;
    summarize(&report, &cfg.output_dir);
    Ok(())
}

fn synth(spec_path: &Path, out: &Path, seed: Option<u64>, rules: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))?;
    let mut spec: SynthSpec =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", spec_path.display()))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let table = rule_table(rules)?;
    let generated = generate_with_rules(&spec, &table)?;
    write_bundle(&generated.bundle, out)?;
    let truth = serde_json::json!({ "spec": spec, "planted": generated.planted });
    let truth_path = out.join(SYNTH_TRUTH_FILE);
    fs::write(&truth_path, serde_json::to_string_pretty(&truth)? + "\n")
        .with_context(|| format!("writing {}", truth_path.display()))?;
    info!(
        "wrote {} ({} layers, {} samples, vocab {})",
        out.display(),
        spec.num_layers,
        generated.bundle.labels.len(),
        spec.vocab_size
    );
    Ok(())
}

/// Linear probes under `dir`, one per layer, ordered by layer.
fn linear_probes(dir: &Path) -> Result<Vec<langgeom::Probe>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if !path.join(PROBE_MANIFEST_FILE).is_file() {
            continue;
        }
        let m = read_probe_manifest(&path)?;
        if m.kind == ProbeKind::Linear {
            found.push((m.layer, path));
        }
    }
    found.sort();
    for (i, (layer, path)) in found.iter().enumerate() {
        if *layer != i {
            bail!(
                "expected a linear probe for layer {i}, found layer {layer} at {}",
                path.display()
            );
        }
    }
    found
        .iter()
        .map(|(_, p)| load_probe(p).with_context(|| format!("loading probe {}", p.display())))
        .collect()
}

fn align(
    bundle_dir: &Path,
    probes_dir: &Path,
    rules: Option<&Path>,
    options: AlignmentOptions,
    out: Option<&Path>,
) -> Result<()> {
    let bundle = read_bundle(bundle_dir)
        .with_context(|| format!("reading bundle {}", bundle_dir.display()))?;
    let probes = linear_probes(probes_dir)?;
    if probes.len() != bundle.manifest.num_layers {
        bail!(
            "bundle has {} layers but {} linear probes were found",
            bundle.manifest.num_layers,
            probes.len()
        );
    }
    let table = rule_table(rules)?;
    let labels = label_vocab(&bundle.vocab_text, &table, bundle.manifest.byte_level_bpe);
    let result = align_model(
        &probes,
        &bundle.vocab_emb,
        &bundle.vocab_text,
        &labels,
        &bundle.manifest.languages,
        &options,
    )?;
    let json = serde_json::to_string_pretty(&result)? + "\n";
    match out {
        Some(p) => fs::write(p, json).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{json}"),
    }
    for m in &result.languages {
        info!(
            "{}: peak layer {} (depth {:.2}), PeakVocab {:.1}%, Match@Peak {:.1}%",
            m.language, m.peak_layer, m.peak_depth, m.peak_vocab_pct, m.match_at_peak_pct
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    match cli.command {
        Command::Run {
            config,
            output_dir,
            seeds,
        } => run(&config, output_dir, seeds),
        Command::Synth {
            spec,
            out,
            seed,
            rule_table,
        } => synth(&spec, &out, seed, rule_table.as_deref()),
        Command::Align {
            bundle,
            probes,
            rule_table,
            center_directions,
            center_embeddings,
            top_k,
            out,
        } => align(
            &bundle,
            &probes,
            rule_table.as_deref(),
            AlignmentOptions {
                center_directions,
                center_embeddings,
                debug_top_k: top_k,
            },
            out.as_deref(),
        ),
        Command::Report { cache, out } => {
            let report = build_report(&cache)
                .with_context(|| format!("reading cache {}", cache.display()))?;
            emit_tables(&report, &out)?;
            summarize(&report, &out);
            Ok(())
        }
        Command::Langid {
            text,
            rule_table: rules,
            byte_level,
        } => {
            let table = rule_table(rules.as_deref())?;
            let g = table.classify_with(&text, byte_level);
            println!("{}\t{}\t{}", g.label, g.rule, g.stripped);
            Ok(())
        }
    }
}
