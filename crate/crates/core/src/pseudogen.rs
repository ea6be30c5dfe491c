//! Cloze triple generation.
//!
//! A pseudo triple picks one occurrence of a noun or pronoun that appears at
//! least twice in a document, blanks it out of its sentence (the query), and
//! keeps the other sentences as context. Gold zero-pronoun gaps become triples
//! of the same shape with the blank inserted at the gap.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;

use crate::corpus::{AzpInstance, Document, GapPosition, Pos};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng;

pub const DEFAULT_BLANK: &str = "⟨blank⟩";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Pseudo,
    Task,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Pseudo => "PSEUDO",
            Origin::Task => "TASK",
        })
    }
}

impl FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "PSEUDO" => Ok(Origin::Pseudo),
            "TASK" => Ok(Origin::Task),
            _ => Err(format!("unknown origin `{s}`")),
        }
    }
}

/// Where the query came from in the source document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TripleMeta {
    pub sent_index: usize,
    /// Offset of the blank inside the query.
    pub blank_offset: usize,
}

/// A `<D, Q, A>` sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub doc_tokens: Vec<String>,
    pub query_tokens: Vec<String>,
    pub answer: String,
    pub origin: Origin,
    pub doc_id: String,
    pub meta: TripleMeta,
}

impl Triple {
    /// Checks the structural invariants: one blank in the query, a non-empty
    /// answer, and for pseudo triples the answer present in the context.
    pub fn validate(&self, blank: &str) -> Result<()> {
        let blanks = self.query_tokens.iter().filter(|t| *t == blank).count();
        if blanks != 1 {
            return Err(Error::Invalid(format!(
                "query of `{}` has {blanks} blanks",
                self.doc_id
            )));
        }
        if self.answer.is_empty() {
            return Err(Error::Invalid(format!("empty answer in `{}`", self.doc_id)));
        }
        if self.origin == Origin::Pseudo && !self.doc_tokens.contains(&self.answer) {
            return Err(Error::Invalid(format!(
                "answer `{}` missing from the context of `{}`",
                self.answer, self.doc_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationConfig {
    pub triples_per_document: usize,
    pub min_answer_frequency: usize,
    pub rng_seed: u64,
    pub blank_symbol: String,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            triples_per_document: 1,
            min_answer_frequency: 2,
            rng_seed: 0,
            blank_symbol: DEFAULT_BLANK.to_string(),
        }
    }
}

/// An answer form with every position it occurs at, as `(sent_index, offset)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EligibleAnswer {
    pub form: String,
    pub positions: Vec<(usize, usize)>,
}

/// Forms that are a noun or pronoun at every occurrence and occur at least
/// `min_answer_frequency` times, in order of first occurrence.
pub fn eligible_answers(doc: &Document, cfg: &GenerationConfig) -> Vec<EligibleAnswer> {
    struct Acc {
        first: usize,
        nominal: bool,
        positions: Vec<(usize, usize)>,
    }
    let mut by_form: HashMap<&str, Acc> = HashMap::new();
    for sent in &doc.sentences {
        for (offset, tok) in sent.tokens.iter().enumerate() {
            let acc = by_form.entry(tok.form.as_str()).or_insert_with(|| Acc {
                first: tok.doc_index,
                nominal: true,
                positions: Vec::new(),
            });
            acc.nominal &= tok.pos.is_nominal();
            acc.positions.push((sent.sent_index, offset));
        }
    }
    let mut out: Vec<(usize, EligibleAnswer)> = by_form
        .into_iter()
        .filter(|(_, acc)| acc.nominal && acc.positions.len() >= cfg.min_answer_frequency)
        .map(|(form, acc)| {
            (
                acc.first,
                EligibleAnswer {
                    form: form.to_string(),
                    positions: acc.positions,
                },
            )
        })
        .collect();
    out.sort_by_key(|(first, _)| *first);
    out.into_iter().map(|(_, e)| e).collect()
}

fn context_without(doc: &Document, skip: usize) -> Vec<String> {
    doc.sentences
        .iter()
        .filter(|s| s.sent_index != skip)
        .flat_map(|s| s.forms().map(str::to_string))
        .collect()
}

/// Blanks the occurrence of `form` at `position` and removes its sentence
/// from the context.
pub fn make_triple(
    doc: &Document,
    form: &str,
    position: (usize, usize),
    cfg: &GenerationConfig,
) -> Result<Triple> {
    let (sent_index, offset) = position;
    let tok = doc.token(sent_index, offset).ok_or_else(|| {
        Error::Invalid(format!(
            "position {sent_index}:{offset} out of range in `{}`",
            doc.doc_id
        ))
    })?;
    if tok.form != form {
        return Err(Error::PositionMismatch {
            sent: sent_index,
            offset,
            found: tok.form.clone(),
            expected: form.to_string(),
        });
    }
    if !tok.pos.is_nominal() {
        return Err(Error::Invalid(format!(
            "`{form}` at {sent_index}:{offset} is not a noun or pronoun"
        )));
    }
    let query_tokens = doc.sentences[sent_index]
        .tokens
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if i == offset {
                cfg.blank_symbol.clone()
            } else {
                t.form.clone()
            }
        })
        .collect();
    let triple = Triple {
        doc_tokens: context_without(doc, sent_index),
        query_tokens,
        answer: form.to_string(),
        origin: Origin::Pseudo,
        doc_id: doc.doc_id.clone(),
        meta: TripleMeta {
            sent_index,
            blank_offset: offset,
        },
    };
    triple.validate(&cfg.blank_symbol)?;
    Ok(triple)
}

/// All `(form, position)` pairs a pseudo triple can be built from: eligible
/// answers at positions whose form also occurs outside that sentence.
pub fn candidate_pairs(doc: &Document, cfg: &GenerationConfig) -> Vec<(String, (usize, usize))> {
    let mut pairs = Vec::new();
    for answer in eligible_answers(doc, cfg) {
        for &(sent, offset) in &answer.positions {
            if answer.positions.iter().any(|&(s, _)| s != sent) {
                pairs.push((answer.form.clone(), (sent, offset)));
            }
        }
    }
    pairs
}

/// Up to `triples_per_document` triples drawn uniformly without replacement
/// from [`candidate_pairs`]. Deterministic in `(doc, cfg)`.
pub fn sample_triples(doc: &Document, cfg: &GenerationConfig) -> Vec<Triple> {
    let pairs = candidate_pairs(doc, cfg);
    let k = cfg.triples_per_document.min(pairs.len());
    if k == 0 {
        return Vec::new();
    }
    let mut rng = rng::derived(cfg.rng_seed, &doc.doc_id);
    index::sample(&mut rng, pairs.len(), k)
        .into_iter()
        .map(|i| {
            let (form, pos) = &pairs[i];
            make_triple(doc, form, *pos, cfg).expect("candidate pairs are valid positions")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GenerationStats {
    pub documents: usize,
    pub sentences: usize,
    pub queries: usize,
}

/// Samples every document; output is in document order regardless of `exec`.
pub fn generate(
    docs: &[Document],
    cfg: &GenerationConfig,
    exec: Exec,
) -> (Vec<Triple>, GenerationStats) {
    let per_doc = exec.map(docs, |doc| sample_triples(doc, cfg));
    let triples: Vec<Triple> = per_doc.into_iter().flatten().collect();
    let stats = GenerationStats {
        documents: docs.len(),
        sentences: docs.iter().map(|d| d.sentences.len()).sum(),
        queries: triples.len(),
    };
    (triples, stats)
}

/// Context and query for a gap, with the blank inserted at the gap slot.
pub fn gap_query(
    instance: &AzpInstance,
    doc: &Document,
    blank_symbol: &str,
) -> Result<(Vec<String>, Vec<String>)> {
    if instance.doc_id != doc.doc_id {
        return Err(Error::Invalid(format!(
            "instance for `{}` paired with document `{}`",
            instance.doc_id, doc.doc_id
        )));
    }
    let GapPosition {
        sent_index,
        token_slot,
    } = instance.gap;
    let sent = doc
        .sentences
        .get(sent_index)
        .ok_or_else(|| Error::Invalid(format!("gap sentence {sent_index} out of range")))?;
    if token_slot > sent.len() {
        return Err(Error::Invalid(format!(
            "gap slot {token_slot} beyond sentence of length {}",
            sent.len()
        )));
    }
    let mut query: Vec<String> = sent.forms().map(str::to_string).collect();
    query.insert(token_slot, blank_symbol.to_string());
    Ok((context_without(doc, sent_index), query))
}

/// Task triple for a gold-annotated gap. `None` when the instance has no gold
/// antecedent.
pub fn azp_to_triple(
    instance: &AzpInstance,
    doc: &Document,
    cfg: &GenerationConfig,
) -> Result<Option<Triple>> {
    let Some(gold) = instance.gold() else {
        return Ok(None);
    };
    let (doc_tokens, query_tokens) = gap_query(instance, doc, &cfg.blank_symbol)?;
    Ok(Some(Triple {
        doc_tokens,
        query_tokens,
        answer: gold.head_form.clone(),
        origin: Origin::Task,
        doc_id: doc.doc_id.clone(),
        meta: TripleMeta {
            sent_index: instance.gap.sent_index,
            blank_offset: instance.gap.token_slot,
        },
    }))
}

#[derive(Debug, Clone, Default)]
pub struct TaskConversion {
    pub triples: Vec<Triple>,
    /// Instances without a gold antecedent.
    pub skipped: usize,
}

pub fn azp_batch_to_triples(
    instances: &[AzpInstance],
    corpus: &crate::corpus::Corpus,
    cfg: &GenerationConfig,
) -> Result<TaskConversion> {
    let mut out = TaskConversion::default();
    for inst in instances {
        let doc = corpus
            .get(&inst.doc_id)
            .ok_or_else(|| Error::UnknownDocument(inst.doc_id.clone()))?;
        match azp_to_triple(inst, doc, cfg)? {
            Some(t) => out.triples.push(t),
            None => out.skipped += 1,
        }
    }
    Ok(out)
}

/// One line per triple: `origin, doc_id, answer, query, context`, tab
/// separated, tokens space-joined.
pub fn write_triples(triples: &[Triple]) -> String {
    let mut out = String::new();
    for t in triples {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            t.origin,
            t.doc_id,
            t.answer,
            t.query_tokens.join(" "),
            t.doc_tokens.join(" ")
        );
    }
    out
}

fn split_tokens(field: &str) -> Vec<String> {
    field
        .split(' ')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Parses a triple file. `meta.blank_offset` is recovered from the query;
/// `meta.sent_index` is not stored and reads back as 0.
pub fn parse_triples(text: &str, blank_symbol: &str) -> Result<Vec<Triple>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 5 tab-separated columns, found {}", cols.len()),
            });
        }
        let origin = cols[0].parse().map_err(|message| Error::Parse {
            line: i + 1,
            message,
        })?;
        let query_tokens = split_tokens(cols[3]);
        let blank_offset = query_tokens
            .iter()
            .position(|t| t == blank_symbol)
            .unwrap_or(0);
        let triple = Triple {
            origin,
            doc_id: cols[1].to_string(),
            answer: cols[2].to_string(),
            query_tokens,
            doc_tokens: split_tokens(cols[4]),
            meta: TripleMeta {
                sent_index: 0,
                blank_offset,
            },
        };
        triple.validate(blank_symbol).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(triple);
    }
    Ok(out)
}

pub fn load_triples(path: impl AsRef<Path>, blank_symbol: &str) -> Result<Vec<Triple>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_triples(&text, blank_symbol)
}

/// Counts `(form, pos)` answer eligibility the slow way; shared by tests.
#[doc(hidden)]
pub fn nominal_counts(doc: &Document) -> HashMap<String, (usize, bool)> {
    let mut counts: HashMap<String, (usize, bool)> = HashMap::new();
    for tok in doc.tokens() {
        let e = counts.entry(tok.form.clone()).or_insert((0, true));
        e.0 += 1;
        e.1 &= matches!(tok.pos, Pos::Noun | Pos::Pronoun);
    }
    counts
}
