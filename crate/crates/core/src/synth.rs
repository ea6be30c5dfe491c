//! Synthetic entity/attribute corpora for transfer experiments and
//! end-to-end fixtures.
//!
//! Every document binds a few entities (`e00`, `e01`, ...) to attributes
//! (`a00`, ...) at random and mentions some unbound distractor entities once.
//! Pseudo documents state each binding one to three times with varied
//! templates, so cloze generation can blank the entity of any binding stated
//! at least twice. Task documents end in a gap sentence built from
//! `gap_template` whose zero pronoun refers to the entity bound to `A`. The
//! task target is stated once or twice and every other binding one to three
//! times, so the target's mention count in the context is distributed like a
//! pseudo answer's after its query sentence is removed.

use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::corpus::{parse_azp_instances, parse_documents, AzpInstance, Corpus, Document, TagMap};
use crate::error::Result;
use crate::exec::Exec;
use crate::pseudogen::{self, GenerationConfig, Triple};
use crate::rng::{self, ChaCha8Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub entities: usize,
    pub attributes: usize,
    pub pairs_per_doc: usize,
    /// How many of the binding templates are in use (1 to 3).
    pub templates: usize,
    /// Unbound entities mentioned once per document.
    pub distractors: usize,
    /// Filler sentences per document are drawn from `0..=max_fillers`.
    pub max_fillers: usize,
    /// Final sentence of a task document; `A` is the attribute and `_` the
    /// zero pronoun, which is not written out.
    pub gap_template: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            entities: 8,
            attributes: 8,
            pairs_per_doc: 3,
            templates: 1,
            distractors: 1,
            max_fillers: 1,
            gap_template: "yesterday , the A owner _ went home .".to_string(),
        }
    }
}

const FILLERS: [&str; 5] = [
    "it rained all day .",
    "people talked for hours .",
    "the market was busy .",
    "nobody said anything .",
    "the road was long and quiet .",
];

const TEMPLATES: [&str; 3] = ["E has A .", "A belongs to E .", "E owns the A ."];
const DISTRACTOR: &str = "E arrived .";

const DOMAINS: [(&str, u32); 4] = [("nw", 4), ("bc", 3), ("wb", 2), ("tc", 1)];

const ENTITY_TAG: &str = "NN";
const OTHER_TAG: &str = "X";

pub fn entity(i: usize) -> String {
    format!("e{i:02}")
}

pub fn attribute(i: usize) -> String {
    format!("a{i:02}")
}

fn push_sentence(out: &mut String, words: &str) {
    for w in words.split_whitespace() {
        let tag = if is_entity(w) { ENTITY_TAG } else { OTHER_TAG };
        let _ = writeln!(out, "{w}\t{tag}");
    }
    out.push('\n');
}

fn is_entity(w: &str) -> bool {
    w.len() > 1 && w.starts_with('e') && w[1..].chars().all(|c| c.is_ascii_digit())
}

/// Bound pairs and distractor entities, all entities distinct.
fn bindings(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> (Vec<(String, String)>, Vec<String>) {
    let es =
        rand::seq::index::sample(rng, cfg.entities, cfg.pairs_per_doc + cfg.distractors).into_vec();
    let attrs = rand::seq::index::sample(rng, cfg.attributes, cfg.pairs_per_doc);
    let pairs = es
        .iter()
        .zip(attrs.iter())
        .map(|(&e, a)| (entity(e), attribute(a)))
        .collect();
    let distractors = es[cfg.pairs_per_doc..].iter().map(|&e| entity(e)).collect();
    (pairs, distractors)
}

/// Binding `i` stated `repeats[i]` times plus one sentence per distractor,
/// shuffled.
fn statements(
    rng: &mut ChaCha8Rng,
    cfg: &SynthConfig,
    pairs: &[(String, String)],
    distractors: &[String],
    repeats: &[usize],
) -> Vec<String> {
    let fill = |t: &str, e: &str, a: &str| t.replace('E', e).replace('A', a);
    let mut out = Vec::new();
    for ((e, a), &n) in pairs.iter().zip(repeats) {
        let k = cfg.templates.clamp(1, TEMPLATES.len());
        for _ in 0..n {
            out.push(fill(TEMPLATES[rng.random_range(0..k)], e, a));
        }
    }
    out.extend(distractors.iter().map(|e| fill(DISTRACTOR, e, "")));
    out.shuffle(rng);
    out
}

fn fillers(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Vec<&'static str> {
    let n = rng.random_range(0..=cfg.max_fillers);
    (0..n)
        .map(|_| *FILLERS.choose(rng).expect("non-empty"))
        .collect()
}

fn domain(rng: &mut ChaCha8Rng) -> &'static str {
    let total: u32 = DOMAINS.iter().map(|d| d.1).sum();
    let mut x = rng.random_range(0..total);
    for (d, w) in DOMAINS {
        if x < w {
            return d;
        }
        x -= w;
    }
    unreachable!()
}

/// `statements` interleaved with filler sentences at random positions.
fn with_fillers(rng: &mut ChaCha8Rng, cfg: &SynthConfig, statements: Vec<String>) -> Vec<String> {
    let mut out = statements;
    for f in fillers(rng, cfg) {
        let at = rng.random_range(0..=out.len());
        out.insert(at, f.to_string());
    }
    out
}

/// Corpus text of `n` pseudo-style documents named `{prefix}{i:04}`.
pub fn pseudo_corpus(n: usize, cfg: &SynthConfig, seed: u64, prefix: &str) -> String {
    let mut rng = rng::derived(seed, prefix);
    let mut out = String::new();
    for i in 0..n {
        let (pairs, distractors) = bindings(&mut rng, cfg);
        let d = domain(&mut rng);
        let _ = writeln!(out, "#doc {prefix}{i:04} {d}");
        let repeats: Vec<usize> = pairs.iter().map(|_| rng.random_range(1..=3)).collect();
        let stmts = statements(&mut rng, cfg, &pairs, &distractors, &repeats);
        for s in with_fillers(&mut rng, cfg, stmts) {
            push_sentence(&mut out, &s);
        }
    }
    out
}

/// Corpus and zero-pronoun file texts for `n` task-style documents, one gap
/// each, candidates nearest-first.
pub fn task_corpus(n: usize, cfg: &SynthConfig, seed: u64, prefix: &str) -> (String, String) {
    let mut rng = rng::derived(seed, prefix);
    let mut corpus = String::new();
    let mut azp = String::new();
    for i in 0..n {
        let (pairs, distractors) = bindings(&mut rng, cfg);
        let d = domain(&mut rng);
        let doc_id = format!("{prefix}{i:04}");
        let _ = writeln!(corpus, "#doc {doc_id} {d}");
        let target = rng.random_range(0..pairs.len());
        let repeats: Vec<usize> = (0..pairs.len())
            .map(|i| rng.random_range(1..=if i == target { 2 } else { 3 }))
            .collect();
        let stmts = statements(&mut rng, cfg, &pairs, &distractors, &repeats);
        let sentences = with_fillers(&mut rng, cfg, stmts);
        let (target_e, target_a) = pairs[target].clone();

        // Every entity mention, nearest to the final gap sentence first.
        let mut mentions: Vec<(usize, usize, String)> = Vec::new();
        for (s, text) in sentences.iter().enumerate() {
            push_sentence(&mut corpus, text);
            for (o, w) in text.split_whitespace().enumerate() {
                if is_entity(w) {
                    mentions.push((s, o, w.to_string()));
                }
            }
        }
        let words: Vec<&str> = cfg.gap_template.split_whitespace().collect();
        let slot = words
            .iter()
            .position(|&w| w == "_")
            .expect("gap template has a `_`");
        let gap_sentence: Vec<String> = words
            .iter()
            .filter(|&&w| w != "_")
            .map(|&w| {
                if w == "A" {
                    target_a.clone()
                } else {
                    w.to_string()
                }
            })
            .collect();
        push_sentence(&mut corpus, &gap_sentence.join(" "));
        mentions.reverse();
        let gold = mentions
            .iter()
            .position(|(_, _, e)| *e == target_e)
            .expect("target is mentioned");
        let cands: Vec<String> = mentions
            .iter()
            .map(|(s, o, e)| format!("{s}:{o}:{}:{e}", o + 1))
            .collect();
        let _ = writeln!(
            azp,
            "{doc_id}\t{}\t{slot}\t{gold}\t{}",
            sentences.len(),
            cands.join(" ")
        );
    }
    (corpus, azp)
}

pub fn tag_map() -> TagMap {
    TagMap::default()
}

/// Parsed task documents with their zero-pronoun instances.
pub fn task_documents(
    n: usize,
    cfg: &SynthConfig,
    seed: u64,
    prefix: &str,
) -> Result<(Corpus, Vec<AzpInstance>)> {
    let (text, azp) = task_corpus(n, cfg, seed, prefix);
    let corpus = Corpus::new(parse_documents(&text, &tag_map())?)?;
    let load = parse_azp_instances(&azp, &corpus)?;
    Ok((corpus, load.instances))
}

pub fn pseudo_documents(
    n: usize,
    cfg: &SynthConfig,
    seed: u64,
    prefix: &str,
) -> Result<Vec<Document>> {
    parse_documents(&pseudo_corpus(n, cfg, seed, prefix), &tag_map())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferSizes {
    pub pseudo_train_triples: usize,
    pub pseudo_val_triples: usize,
    pub task_train_docs: usize,
    pub task_val_docs: usize,
    pub triples_per_pseudo_doc: usize,
}

impl Default for TransferSizes {
    fn default() -> Self {
        TransferSizes {
            pseudo_train_triples: 2000,
            pseudo_val_triples: 200,
            task_train_docs: 100,
            task_val_docs: 100,
            triples_per_pseudo_doc: 4,
        }
    }
}

/// Pseudo and task triples over one shared vocabulary of forms.
#[derive(Debug, Clone)]
pub struct TransferFixture {
    pub pseudo_train: Vec<Triple>,
    pub pseudo_val: Vec<Triple>,
    pub task_train: Vec<Triple>,
    pub task_val: Vec<Triple>,
    pub task_val_corpus: Corpus,
    pub task_val_instances: Vec<AzpInstance>,
}

impl TransferFixture {
    pub fn build(cfg: &SynthConfig, sizes: &TransferSizes, seed: u64) -> Result<Self> {
        let gen = GenerationConfig {
            triples_per_document: sizes.triples_per_pseudo_doc,
            rng_seed: seed,
            ..GenerationConfig::default()
        };
        // Documents are generated in a single stream, so a longer run extends
        // a shorter one and truncation keeps the result deterministic.
        let pseudo = |n: usize, prefix| -> Result<Vec<Triple>> {
            let per_doc = sizes.triples_per_pseudo_doc.max(1);
            let mut docs_wanted = n.div_ceil(per_doc) + 8;
            loop {
                let docs = pseudo_documents(docs_wanted, cfg, seed, prefix)?;
                let mut triples = pseudogen::generate(&docs, &gen, Exec::Sequential).0;
                if triples.len() >= n {
                    triples.truncate(n);
                    return Ok(triples);
                }
                docs_wanted *= 2;
            }
        };
        let task = |n, prefix| -> Result<(Vec<Triple>, Corpus, Vec<AzpInstance>)> {
            let (corpus, instances) = task_documents(n, cfg, seed, prefix)?;
            let conv = pseudogen::azp_batch_to_triples(&instances, &corpus, &gen)?;
            Ok((conv.triples, corpus, instances))
        };
        let (task_train, _, _) = task(sizes.task_train_docs, "tt")?;
        let (task_val, task_val_corpus, task_val_instances) = task(sizes.task_val_docs, "tv")?;
        Ok(TransferFixture {
            pseudo_train: pseudo(sizes.pseudo_train_triples, "pt")?,
            pseudo_val: pseudo(sizes.pseudo_val_triples, "pv")?,
            task_train,
            task_val,
            task_val_corpus,
            task_val_instances,
        })
    }

    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.pseudo_train
            .iter()
            .chain(&self.pseudo_val)
            .chain(&self.task_train)
            .chain(&self.task_val)
    }
}
