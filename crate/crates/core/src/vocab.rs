//! Frequency shortlist and per-sample numbered unknown words.
//!
//! Id layout: `0` is padding, `1` the blank, `2..2+N` the unknown slots
//! `⟨unk1⟩..⟨unkN⟩`, then the shortlist in descending frequency.
//!
//! Words outside the shortlist are numbered per sample by first occurrence
//! (context first, then query), so `⟨unk1⟩` is whichever unknown word shows up
//! first in that sample. The table travels with the mapped sample and lets a
//! predicted `⟨unkX⟩` be turned back into the real word.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pseudogen::Triple;

pub const PAD: &str = "⟨pad⟩";
pub const PAD_ID: usize = 0;
pub const BLANK_ID: usize = 1;
pub const FIRST_UNK_ID: usize = 2;
pub const DEFAULT_SHORTLIST: usize = 100_000;
pub const DEFAULT_UNK_SLOTS: usize = 20;

pub fn unk_symbol(slot: usize) -> String {
    format!("⟨unk{slot}⟩")
}

/// What an id stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdKind {
    Pad,
    Blank,
    /// 1-based slot number.
    Unk(usize),
    Word,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    forms: Vec<String>,
    counts: Vec<u64>,
    id_of: HashMap<String, usize>,
    num_unk_slots: usize,
}

impl Vocabulary {
    fn with_reserved(blank: &str, num_unk_slots: usize) -> Self {
        let mut forms = vec![PAD.to_string(), blank.to_string()];
        forms.extend((1..=num_unk_slots).map(unk_symbol));
        let counts = vec![0; forms.len()];
        let mut id_of = HashMap::new();
        id_of.insert(blank.to_string(), BLANK_ID);
        Vocabulary {
            forms,
            counts,
            id_of,
            num_unk_slots,
        }
    }

    fn push_word(&mut self, form: String, count: u64) {
        self.id_of.insert(form.clone(), self.forms.len());
        self.forms.push(form);
        self.counts.push(count);
    }

    pub fn blank_symbol(&self) -> &str {
        &self.forms[BLANK_ID]
    }

    pub fn num_unk_slots(&self) -> usize {
        self.num_unk_slots
    }

    pub fn shortlist_size(&self) -> usize {
        self.forms.len() - self.shortlist_start()
    }

    pub fn shortlist_start(&self) -> usize {
        FIRST_UNK_ID + self.num_unk_slots
    }

    /// Number of ids, reserved ones included.
    pub fn total(&self) -> usize {
        self.forms.len()
    }

    /// Id of the 1-based unknown slot.
    pub fn unk_id(&self, slot: usize) -> usize {
        debug_assert!(slot >= 1 && slot <= self.num_unk_slots);
        FIRST_UNK_ID + slot - 1
    }

    /// Id of a shortlisted word or the blank symbol.
    pub fn id(&self, form: &str) -> Option<usize> {
        self.id_of.get(form).copied()
    }

    pub fn form(&self, id: usize) -> Option<&str> {
        self.forms.get(id).map(String::as_str)
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub fn kind(&self, id: usize) -> IdKind {
        match id {
            PAD_ID => IdKind::Pad,
            BLANK_ID => IdKind::Blank,
            i if i < self.shortlist_start() => IdKind::Unk(i - FIRST_UNK_ID + 1),
            _ => IdKind::Word,
        }
    }

    /// Serialized form: `shortlist_size num_unk_slots`, then
    /// `id<TAB>form<TAB>count` for every id.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.shortlist_size(), self.num_unk_slots);
        for (id, (form, count)) in self.forms.iter().zip(&self.counts).enumerate() {
            let _ = writeln!(out, "{id}\t{form}\t{count}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty vocabulary file".to_string(),
        })?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: 1,
                message: format!("bad header `{header}`"),
            })?;
        let [shortlist_size, num_unk_slots] = nums[..] else {
            return Err(Error::Parse {
                line: 1,
                message: "header must be `shortlist_size num_unk_slots`".to_string(),
            });
        };
        let mut entries = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let bad = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            if cols.len() != 3 {
                return Err(bad(format!("expected 3 columns, found {}", cols.len())));
            }
            let id: usize = cols[0]
                .parse()
                .map_err(|_| bad(format!("bad id `{}`", cols[0])))?;
            let count: u64 = cols[2]
                .parse()
                .map_err(|_| bad(format!("bad count `{}`", cols[2])))?;
            if id != entries.len() {
                return Err(bad(format!(
                    "ids must be dense, expected {}",
                    entries.len()
                )));
            }
            entries.push((cols[1].to_string(), count));
        }
        let reserved = FIRST_UNK_ID + num_unk_slots;
        if entries.len() != reserved + shortlist_size {
            return Err(Error::Invalid(format!(
                "vocabulary has {} entries, header implies {}",
                entries.len(),
                reserved + shortlist_size
            )));
        }
        if entries.len() < 2 || entries[PAD_ID].0 != PAD {
            return Err(Error::Invalid(
                "id 0 must be the padding symbol".to_string(),
            ));
        }
        let mut vocab = Vocabulary::with_reserved(&entries[BLANK_ID].0, num_unk_slots);
        for slot in 1..=num_unk_slots {
            if entries[vocab.unk_id(slot)].0 != unk_symbol(slot) {
                return Err(Error::Invalid(format!(
                    "id {} must be {}",
                    vocab.unk_id(slot),
                    unk_symbol(slot)
                )));
            }
        }
        for (form, count) in entries.into_iter().skip(reserved) {
            if vocab.id_of.contains_key(&form) {
                return Err(Error::Invalid(format!("duplicate form `{form}`")));
            }
            vocab.push_word(form, count);
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Hex SHA-256 prefix of the serialized vocabulary.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Keeps the `size` most frequent forms over context, query and answer
/// fields. Ties go to the lexicographically smaller form.
pub fn build_shortlist<'a, I>(
    triples: I,
    size: usize,
    num_unk_slots: usize,
    blank: &str,
) -> Vocabulary
where
    I: IntoIterator<Item = &'a Triple>,
{
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for t in triples {
        let tokens = t
            .doc_tokens
            .iter()
            .chain(&t.query_tokens)
            .chain(std::iter::once(&t.answer));
        for tok in tokens {
            if tok != blank {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut vocab = Vocabulary::with_reserved(blank, num_unk_slots);
    for (form, count) in ranked.into_iter().take(size) {
        vocab.push_word(form.to_string(), count);
    }
    vocab
}

/// A triple as ids, with its private unknown-word table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappedTriple {
    pub doc_ids: Vec<usize>,
    pub query_ids: Vec<usize>,
    /// `None` for unlabeled queries built at resolution time.
    pub answer_id: Option<usize>,
    /// `unk_table[k]` is the surface form of `⟨unk{k+1}⟩` in this sample.
    pub unk_table: Vec<String>,
}

struct UnkTable<'v> {
    vocab: &'v Vocabulary,
    slots: Vec<String>,
    index: HashMap<String, usize>,
}

impl UnkTable<'_> {
    fn id(&mut self, form: &str) -> usize {
        if let Some(id) = self.vocab.id(form) {
            return id;
        }
        let next = self.index.len() + 1;
        let slot = *self.index.entry(form.to_string()).or_insert_with(|| {
            self.slots.push(form.to_string());
            next
        });
        // Overflow is checked by the caller once all slots are counted.
        FIRST_UNK_ID + slot - 1
    }
}

/// Maps context, query and optional answer under one unknown-word table.
pub fn map_tokens(
    doc_tokens: &[String],
    query_tokens: &[String],
    answer: Option<&str>,
    vocab: &Vocabulary,
) -> Result<MappedTriple> {
    let mut table = UnkTable {
        vocab,
        slots: Vec::new(),
        index: HashMap::new(),
    };
    let doc_ids: Vec<usize> = doc_tokens.iter().map(|t| table.id(t)).collect();
    let query_ids: Vec<usize> = query_tokens.iter().map(|t| table.id(t)).collect();
    let answer_id = answer.map(|a| table.id(a));
    let needed = table.slots.len();
    if needed > vocab.num_unk_slots {
        return Err(Error::UnkOverflow {
            needed,
            slots: vocab.num_unk_slots,
            overflow: needed - vocab.num_unk_slots,
        });
    }
    Ok(MappedTriple {
        doc_ids,
        query_ids,
        answer_id,
        unk_table: table.slots,
    })
}

pub fn map_triple(t: &Triple, vocab: &Vocabulary) -> Result<MappedTriple> {
    map_tokens(&t.doc_tokens, &t.query_tokens, Some(&t.answer), vocab)
}

/// Surface form of a predicted id, looking `⟨unkX⟩` up in the sample's table.
pub fn recover_form(id: usize, mapped: &MappedTriple, vocab: &Vocabulary) -> Result<String> {
    if id >= vocab.total() {
        return Err(Error::Unrecoverable(id));
    }
    match vocab.kind(id) {
        IdKind::Pad | IdKind::Blank => Err(Error::Unrecoverable(id)),
        IdKind::Unk(slot) => mapped
            .unk_table
            .get(slot - 1)
            .cloned()
            .ok_or(Error::Unrecoverable(id)),
        IdKind::Word => Ok(vocab.forms[id].clone()),
    }
}
