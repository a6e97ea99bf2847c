// SPDX-License-Identifier: MIT OR Apache-2.0

//! Rule-based language labels for decoded vocabulary tokens.
//!
//! Rules come from a plain-text table (see `rules/default.tsv`) and are tried
//! in order on the lowercased, marker-stripped text; the first match wins.

use std::collections::HashMap;
use std::fmt;
use std::ops::RangeInclusive;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const DEFAULT_TABLE: &str = include_str!("../rules/default.tsv");

/// SentencePiece word boundary, byte-level BPE space and newline.
pub const MARKERS: [char; 3] = ['\u{2581}', '\u{0120}', '\u{010A}'];

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Lang(String),
    Unknown,
}

impl Label {
    pub fn lang(&self) -> Option<&str> {
        match self {
            Label::Lang(s) => Some(s),
            Label::Unknown => None,
        }
    }

    pub fn is(&self, lang: &str) -> bool {
        self.lang() == Some(lang)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Lang(s) => f.write_str(s),
            Label::Unknown => f.write_str("Unknown"),
        }
    }
}

/// Which rule produced the label: a 1-based table row, or the fallback.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleId {
    Rule(usize),
    Fallback,
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleId::Rule(n) => write!(f, "rule {n}"),
            RuleId::Fallback => f.write_str("fallback"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LanguageGuess {
    pub label: Label,
    pub rule: RuleId,
    pub stripped: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RuleKind {
    Block(Vec<RangeInclusive<u32>>),
    Charset {
        include: Vec<char>,
        exclude: Vec<char>,
    },
    Ascii {
        min_len: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub label: String,
    pub kind: RuleKind,
}

impl Rule {
    /// `lower` is the lowercased text, `chars` its original char count.
    fn matches(&self, lower: &str, chars: usize) -> bool {
        match &self.kind {
            RuleKind::Block(ranges) => lower
                .chars()
                .any(|c| ranges.iter().any(|r| r.contains(&(c as u32)))),
            RuleKind::Charset { include, exclude } => {
                lower.chars().any(|c| include.contains(&c))
                    && !lower.chars().any(|c| exclude.contains(&c))
            }
            RuleKind::Ascii { min_len } => {
                let mut alpha = lower.chars().filter(|c| c.is_alphabetic()).peekable();
                chars >= *min_len
                    && alpha.peek().is_some()
                    && alpha.all(|c| c.is_ascii_alphabetic())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleTable {
    version: String,
    rules: Vec<Rule>,
    hash: String,
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::RuleTable {
        line,
        message: message.into(),
    }
}

fn parse_ranges(payload: &str, line: usize) -> Result<Vec<RangeInclusive<u32>>> {
    let hex = |s: &str| {
        u32::from_str_radix(s.trim().trim_start_matches("U+"), 16)
            .map_err(|_| parse_error(line, format!("bad code point {s:?}")))
    };
    payload
        .split(',')
        .map(|part| {
            let (a, b) = match part.split_once('-') {
                Some((a, b)) => (hex(a)?, hex(b)?),
                None => {
                    let a = hex(part)?;
                    (a, a)
                }
            };
            if a > b {
                return Err(parse_error(line, format!("empty range {part:?}")));
            }
            Ok(a..=b)
        })
        .collect()
}

impl RuleTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut version = String::from("unversioned");
        let mut rules = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim_end_matches('\r');
            if trimmed.trim().is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("version:") {
                    version = v.trim().to_string();
                }
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            let [label, kind, payload] = fields[..] else {
                return Err(parse_error(line, "expected LABEL<TAB>kind<TAB>payload"));
            };
            let label = label.trim();
            if label.is_empty() || label.eq_ignore_ascii_case("unknown") {
                return Err(parse_error(line, format!("invalid label {label:?}")));
            }
            let kind = match kind.trim() {
                "block" => RuleKind::Block(parse_ranges(payload, line)?),
                "charset" => {
                    let (inc, exc) = payload.split_once('!').unwrap_or((payload, ""));
                    let include: Vec<char> = inc.chars().flat_map(char::to_lowercase).collect();
                    if include.is_empty() {
                        return Err(parse_error(line, "empty charset"));
                    }
                    RuleKind::Charset {
                        include,
                        exclude: exc.chars().flat_map(char::to_lowercase).collect(),
                    }
                }
                "ascii" => RuleKind::Ascii {
                    min_len: payload.trim().parse().map_err(|_| {
                        parse_error(line, format!("bad minimum length {payload:?}"))
                    })?,
                },
                other => return Err(parse_error(line, format!("unknown rule kind {other:?}"))),
            };
            rules.push(Rule {
                label: label.to_string(),
                kind,
            });
        }
        if rules.is_empty() {
            return Err(parse_error(0, "table has no rules"));
        }
        let hash = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(Self {
            version,
            rules,
            hash,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The bundled table.
    pub fn builtin() -> &'static RuleTable {
        static TABLE: OnceLock<RuleTable> = OnceLock::new();
        TABLE.get_or_init(|| RuleTable::parse(DEFAULT_TABLE).expect("bundled rule table parses"))
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// SHA-256 of the table source text.
    pub fn content_hash(&self) -> &str {
        &self.hash
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Distinct labels in rule order.
    pub fn labels(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rules {
            if !out.contains(&r.label.as_str()) {
                out.push(&r.label);
            }
        }
        out
    }

    /// Classifies text that has already been through [`strip_markers`].
    pub fn classify_stripped(&self, stripped: &str) -> LanguageGuess {
        let lower = stripped.to_lowercase();
        let chars = stripped.chars().count();
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.matches(&lower, chars) {
                return LanguageGuess {
                    label: Label::Lang(rule.label.clone()),
                    rule: RuleId::Rule(i + 1),
                    stripped: stripped.to_string(),
                };
            }
        }
        LanguageGuess {
            label: Label::Unknown,
            rule: RuleId::Fallback,
            stripped: stripped.to_string(),
        }
    }

    pub fn classify(&self, token_text: &str) -> LanguageGuess {
        self.classify_stripped(&strip_markers(token_text))
    }

    pub fn classify_with(&self, token_text: &str, byte_level: bool) -> LanguageGuess {
        self.classify_stripped(&strip_markers_with(token_text, byte_level))
    }
}

/// Removes leading tokenizer markers (`▁`, `Ġ`, `Ċ`).
pub fn strip_markers(token_text: &str) -> String {
    token_text.trim_start_matches(MARKERS).to_string()
}

/// [`strip_markers`], then undoes the byte-to-unicode mapping of byte-level
/// BPE when `byte_level` is set.
pub fn strip_markers_with(token_text: &str, byte_level: bool) -> String {
    let stripped = strip_markers(token_text);
    if byte_level {
        decode_byte_level(&stripped)
    } else {
        stripped
    }
}

fn byte_decoder() -> &'static HashMap<char, u8> {
    static MAP: OnceLock<HashMap<char, u8>> = OnceLock::new();
    MAP.get_or_init(|| {
        let printable = |b: u32| {
            (0x21..=0x7E).contains(&b) || (0xA1..=0xAC).contains(&b) || (0xAE..=0xFF).contains(&b)
        };
        let mut map = HashMap::with_capacity(256);
        let mut shifted = 0u32;
        for b in 0u32..256 {
            let c = if printable(b) {
                b
            } else {
                shifted += 1;
                255 + shifted
            };
            map.insert(char::from_u32(c).expect("valid scalar"), b as u8);
        }
        map
    })
}

/// Maps byte-level BPE surface characters back to bytes and decodes them as
/// UTF-8 (lossily). Text containing characters outside the byte alphabet is
/// returned unchanged.
pub fn decode_byte_level(text: &str) -> String {
    let map = byte_decoder();
    let bytes: Option<Vec<u8>> = text.chars().map(|c| map.get(&c).copied()).collect();
    match bytes {
        Some(b) => String::from_utf8_lossy(&b).into_owned(),
        None => text.to_string(),
    }
}

/// Strips markers and classifies with the bundled table.
pub fn classify_token_text(token_text: &str) -> LanguageGuess {
    RuleTable::builtin().classify(token_text)
}
