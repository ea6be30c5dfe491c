//! POS-tagged documents and gold zero-pronoun annotations.
//!
//! Corpus files are one token per line:
//!
//! ```text
//! #doc <doc_id> <domain>
//! FORM<TAB>POSTAG
//! FORM<TAB>POSTAG
//! <blank line ends the sentence>
//! ```
//!
//! Annotation files carry one gap per line:
//!
//! ```text
//! doc_id<TAB>sent_index<TAB>token_slot<TAB>gold_index<TAB>sent:start:end:head sent:start:end:head ...
//! ```
//!
//! with `gold_index = -1` when no antecedent is annotated.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Coarse part of speech. Only the noun/pronoun distinction matters here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pos {
    Noun,
    Pronoun,
    Other,
}

impl Pos {
    pub fn is_nominal(self) -> bool {
        matches!(self, Pos::Noun | Pos::Pronoun)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Noun => "NOUN",
            Pos::Pronoun => "PRONOUN",
            Pos::Other => "OTHER",
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub form: String,
    pub pos: Pos,
    /// Position of the token in the whole document, counting from 0.
    pub doc_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub sent_index: usize,
}

impl Sentence {
    pub fn forms(&self) -> impl Iterator<Item = &str> + '_ {
        self.tokens.iter().map(|t| t.form.as_str())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// `doc_index` of the first token.
    pub fn start(&self) -> usize {
        self.tokens.first().map_or(0, |t| t.doc_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub domain: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> + '_ {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }

    pub fn token(&self, sent_index: usize, offset: usize) -> Option<&Token> {
        self.sentences.get(sent_index)?.tokens.get(offset)
    }
}

/// Maps tagset-specific POS tags onto [`Pos`].
///
/// The defaults cover the Penn Chinese Treebank, Penn English, LTP (863) and
/// Universal Dependencies noun and pronoun tags. Unlisted tags are
/// [`Pos::Other`].
#[derive(Debug, Clone)]
pub struct TagMap {
    map: HashMap<String, Pos>,
}

impl Default for TagMap {
    fn default() -> Self {
        const NOUNS: &[&str] = &[
            "NOUN", "NN", "NNS", "NNP", "NNPS", "NR", "NT", "PROPN", "n", "nh", "ni", "nl", "ns",
            "nt", "nz",
        ];
        const PRONOUNS: &[&str] = &["PRONOUN", "PN", "PRP", "PRON", "r"];
        let mut map = HashMap::new();
        for tag in NOUNS {
            map.insert(tag.to_string(), Pos::Noun);
        }
        for tag in PRONOUNS {
            map.insert(tag.to_string(), Pos::Pronoun);
        }
        map.insert("OTHER".to_string(), Pos::Other);
        TagMap { map }
    }
}

impl TagMap {
    /// A map with no entries: every tag becomes [`Pos::Other`].
    pub fn empty() -> Self {
        TagMap {
            map: HashMap::new(),
        }
    }

    pub fn with(mut self, tag: &str, pos: Pos) -> Self {
        self.map.insert(tag.to_string(), pos);
        self
    }

    pub fn get(&self, tag: &str) -> Pos {
        self.map.get(tag).copied().unwrap_or(Pos::Other)
    }
}

struct DocBuilder {
    doc_id: String,
    domain: String,
    sentences: Vec<Sentence>,
    current: Vec<Token>,
    next_index: usize,
}

impl DocBuilder {
    fn close_sentence(&mut self) {
        if !self.current.is_empty() {
            let sent_index = self.sentences.len();
            self.sentences.push(Sentence {
                tokens: std::mem::take(&mut self.current),
                sent_index,
            });
        }
    }

    fn finish(mut self) -> Result<Document> {
        self.close_sentence();
        if self.sentences.is_empty() {
            return Err(Error::EmptyDocument(self.doc_id));
        }
        Ok(Document {
            doc_id: self.doc_id,
            domain: self.domain,
            sentences: self.sentences,
        })
    }
}

fn is_doc_header(line: &str) -> bool {
    line == "#doc" || line.starts_with("#doc ") || line.starts_with("#doc\t")
}

/// Parses corpus text. Token positions are assigned in reading order.
pub fn parse_documents(text: &str, tags: &TagMap) -> Result<Vec<Document>> {
    let mut docs: Vec<Document> = Vec::new();
    let mut seen: HashMap<String, ()> = HashMap::new();
    let mut current: Option<DocBuilder> = None;

    let mut push = |builder: DocBuilder, docs: &mut Vec<Document>| -> Result<()> {
        let doc = builder.finish()?;
        if seen.insert(doc.doc_id.clone(), ()).is_some() {
            return Err(Error::DuplicateDocument(doc.doc_id));
        }
        docs.push(doc);
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if is_doc_header(line) {
            if let Some(builder) = current.take() {
                push(builder, &mut docs)?;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected `#doc <doc_id> <domain>`, found `{line}`"),
                });
            }
            current = Some(DocBuilder {
                doc_id: parts[1].to_string(),
                domain: parts[2].to_string(),
                sentences: Vec::new(),
                current: Vec::new(),
                next_index: 0,
            });
            continue;
        }
        if line.trim().is_empty() {
            if let Some(builder) = current.as_mut() {
                builder.close_sentence();
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 2 tab-separated columns, found {}", cols.len()),
            });
        }
        let form = cols[0];
        if form.is_empty() || form.chars().any(char::is_whitespace) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("invalid token form `{form}`"),
            });
        }
        let Some(builder) = current.as_mut() else {
            return Err(Error::Parse {
                line: line_no,
                message: "token before the first `#doc` header".to_string(),
            });
        };
        builder.current.push(Token {
            form: form.to_string(),
            pos: tags.get(cols[1].trim()),
            doc_index: builder.next_index,
        });
        builder.next_index += 1;
    }
    if let Some(builder) = current.take() {
        push(builder, &mut docs)?;
    }
    Ok(docs)
}

pub fn load_documents(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    load_documents_with(path, &TagMap::default())
}

pub fn load_documents_with(path: impl AsRef<Path>, tags: &TagMap) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_documents(&text, tags)
}

/// Serializes documents in the corpus format with canonical tags.
pub fn write_documents(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        let _ = writeln!(out, "#doc {} {}", doc.doc_id, doc.domain);
        for sent in &doc.sentences {
            for tok in &sent.tokens {
                let _ = writeln!(out, "{}\t{}", tok.form, tok.pos);
            }
            out.push('\n');
        }
    }
    out
}

/// Documents indexed by id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            if by_id.insert(doc.doc_id.clone(), i).is_some() {
                return Err(Error::DuplicateDocument(doc.doc_id.clone()));
            }
        }
        Ok(Corpus { docs, by_id })
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Where a zero pronoun sits: before token `token_slot` of sentence
/// `sent_index` (`token_slot == len` means sentence-final).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GapPosition {
    pub sent_index: usize,
    pub token_slot: usize,
}

impl fmt::Display for GapPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.sent_index, self.token_slot)
    }
}

impl FromStr for GapPosition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("expected `sent:slot`, found `{s}`"))?;
        Ok(GapPosition {
            sent_index: a.parse().map_err(|_| format!("bad sentence index `{a}`"))?,
            token_slot: b.parse().map_err(|_| format!("bad token slot `{b}`"))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateNp {
    pub sent_index: usize,
    /// Token offsets within the sentence, `start..end`.
    pub start: usize,
    pub end: usize,
    pub head_form: String,
    /// Rank in nearest-first order.
    pub distance_rank: usize,
    /// Tokens between the span and the gap; 0 when the span touches it.
    pub token_distance: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AzpInstance {
    pub doc_id: String,
    pub gap: GapPosition,
    /// Nearest first.
    pub candidates: Vec<CandidateNp>,
    pub gold_candidate_index: Option<usize>,
}

impl AzpInstance {
    pub fn gold(&self) -> Option<&CandidateNp> {
        self.gold_candidate_index.map(|i| &self.candidates[i])
    }
}

/// Token distance between a gap at global position `gap` and the global span
/// `start..end`.
pub fn span_distance(gap: usize, start: usize, end: usize) -> usize {
    if end <= gap {
        gap - end
    } else {
        start.saturating_sub(gap)
    }
}

#[derive(Debug, Clone, Default)]
pub struct AzpLoad {
    pub instances: Vec<AzpInstance>,
    /// Instances whose candidates had to be re-sorted nearest-first.
    pub resorted: usize,
}

fn parse_candidate(field: &str, line: usize) -> Result<(usize, usize, usize, String)> {
    let parts: Vec<&str> = field.splitn(4, ':').collect();
    let bad = || Error::Parse {
        line,
        message: format!("bad candidate `{field}`, expected sent:start:end:head"),
    };
    if parts.len() != 4 || parts[3].is_empty() {
        return Err(bad());
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
    Ok((
        num(parts[0])?,
        num(parts[1])?,
        num(parts[2])?,
        parts[3].to_string(),
    ))
}

fn parse_azp_line(line: &str, line_no: usize, corpus: &Corpus) -> Result<(AzpInstance, bool)> {
    let cols: Vec<&str> = line.splitn(5, '\t').collect();
    if cols.len() < 4 {
        return Err(Error::Parse {
            line: line_no,
            message: format!(
                "expected at least 4 tab-separated columns, found {}",
                cols.len()
            ),
        });
    }
    let parse_num = |s: &str, what: &str| -> Result<i64> {
        s.trim().parse::<i64>().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad {what} `{s}`"),
        })
    };
    let doc_id = cols[0].to_string();
    let doc = corpus
        .get(&doc_id)
        .ok_or_else(|| Error::UnknownDocument(doc_id.clone()))?;
    let sent_index = parse_num(cols[1], "sentence index")?;
    let token_slot = parse_num(cols[2], "token slot")?;
    let gold = parse_num(cols[3], "gold index")?;
    if sent_index < 0 || token_slot < 0 || gold < -1 {
        return Err(Error::Parse {
            line: line_no,
            message: "negative index".to_string(),
        });
    }
    let gap = GapPosition {
        sent_index: sent_index as usize,
        token_slot: token_slot as usize,
    };
    let gap_sentence = doc.sentences.get(gap.sent_index).ok_or_else(|| {
        Error::Invalid(format!(
            "line {line_no}: sentence {} out of range for `{doc_id}`",
            gap.sent_index
        ))
    })?;
    if gap.token_slot > gap_sentence.len() {
        return Err(Error::Invalid(format!(
            "line {line_no}: token slot {} beyond sentence of length {}",
            gap.token_slot,
            gap_sentence.len()
        )));
    }
    let gap_global = gap_sentence.start() + gap.token_slot;

    let mut candidates = Vec::new();
    for field in cols.get(4).copied().unwrap_or("").split_whitespace() {
        let (s, start, end, head) = parse_candidate(field, line_no)?;
        let sent = doc.sentences.get(s).ok_or_else(|| {
            Error::Invalid(format!(
                "line {line_no}: candidate sentence {s} out of range"
            ))
        })?;
        if start >= end || end > sent.len() {
            return Err(Error::Invalid(format!(
                "line {line_no}: candidate span {start}..{end} invalid for sentence of length {}",
                sent.len()
            )));
        }
        if !sent.tokens[start..end].iter().any(|t| t.form == head) {
            return Err(Error::Invalid(format!(
                "line {line_no}: head `{head}` not inside span {s}:{start}:{end}"
            )));
        }
        let base = sent.start();
        candidates.push(CandidateNp {
            sent_index: s,
            start,
            end,
            head_form: head,
            distance_rank: 0,
            token_distance: span_distance(gap_global, base + start, base + end),
        });
    }

    let gold_candidate_index = if gold < 0 {
        None
    } else if (gold as usize) < candidates.len() {
        Some(gold as usize)
    } else {
        return Err(Error::Invalid(format!(
            "line {line_no}: gold index {gold} out of range for {} candidates",
            candidates.len()
        )));
    };

    let sorted = candidates
        .windows(2)
        .all(|w| w[0].token_distance <= w[1].token_distance);
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    if !sorted {
        order.sort_by_key(|&i| candidates[i].token_distance);
    }
    let mut reordered: Vec<CandidateNp> = order.iter().map(|&i| candidates[i].clone()).collect();
    for (rank, c) in reordered.iter_mut().enumerate() {
        c.distance_rank = rank;
    }
    let gold_candidate_index =
        gold_candidate_index.map(|g| order.iter().position(|&i| i == g).expect("permutation"));

    Ok((
        AzpInstance {
            doc_id,
            gap,
            candidates: reordered,
            gold_candidate_index,
        },
        !sorted,
    ))
}

/// Parses annotation text against an already loaded corpus. Candidates given
/// out of order are stably re-sorted by token distance to the gap.
pub fn parse_azp_instances(text: &str, corpus: &Corpus) -> Result<AzpLoad> {
    let mut load = AzpLoad::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (instance, resorted) = parse_azp_line(line, i + 1, corpus)?;
        if resorted {
            log::warn!(
                "{} {}: candidates re-sorted nearest-first",
                instance.doc_id,
                instance.gap
            );
            load.resorted += 1;
        }
        load.instances.push(instance);
    }
    Ok(load)
}

pub fn load_azp_instances(path: impl AsRef<Path>, corpus: &Corpus) -> Result<AzpLoad> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_azp_instances(&text, corpus)
}

pub fn write_azp_instances(instances: &[AzpInstance]) -> String {
    let mut out = String::new();
    for inst in instances {
        let gold = inst.gold_candidate_index.map_or(-1, |g| g as i64);
        let cands: Vec<String> = inst
            .candidates
            .iter()
            .map(|c| format!("{}:{}:{}:{}", c.sent_index, c.start, c.end, c.head_form))
            .collect();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            inst.doc_id,
            inst.gap.sent_index,
            inst.gap.token_slot,
            gold,
            cands.join(" ")
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) const WEATHER_DOC: &str = "#doc weather news\n\
        The\tOTHER\nweather\tNOUN\nof\tOTHER\ntoday\tNOUN\nis\tOTHER\nnot\tOTHER\nas\tOTHER\n\
        pleasant\tOTHER\nas\tOTHER\nthe\tOTHER\nweather\tNOUN\nof\tOTHER\nyesterday\tNOUN\n.\tOTHER\n";

    #[test]
    fn minimal_document() {
        let text = "#doc d1 NW\n今天\tNOUN\n很\tOTHER\n好\tOTHER\n";
        let docs = parse_documents(text, &TagMap::default()).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].sentences.len(), 1);
        assert_eq!(docs[0].token_count(), 3);
        assert_eq!(docs[0].domain, "NW");
    }

    #[test]
    fn weather_sentence() {
        let docs = parse_documents(WEATHER_DOC, &TagMap::default()).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].token_count(), 14);
        let nouns = docs[0].tokens().filter(|t| t.pos == Pos::Noun).count();
        assert_eq!(nouns, 4);
    }

    #[test]
    fn wrong_column_count_names_line() {
        let text = "#doc d1 NW\na\tNOUN\nb\tNOUN\textra\n";
        match parse_documents(text, &TagMap::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_document_rejected() {
        let text = "#doc d1 NW\n\n#doc d2 NW\na\tNOUN\n";
        match parse_documents(text, &TagMap::default()) {
            Err(Error::EmptyDocument(id)) => assert_eq!(id, "d1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_document_rejected() {
        let text = "#doc d1 NW\na\tNOUN\n#doc d1 NW\nb\tNOUN\n";
        assert!(matches!(
            parse_documents(text, &TagMap::default()),
            Err(Error::DuplicateDocument(_))
        ));
    }

    #[test]
    fn repeated_blank_lines_ignored() {
        let text = "#doc d1 NW\na\tNN\n\n\n\nb\tPN\n\n";
        let docs = parse_documents(text, &TagMap::default()).unwrap();
        assert_eq!(docs[0].sentences.len(), 2);
        assert_eq!(docs[0].sentences[1].tokens[0].pos, Pos::Pronoun);
        assert_eq!(docs[0].sentences[1].tokens[0].doc_index, 1);
    }

    #[test]
    fn tag_map_is_configurable() {
        let tags = TagMap::empty().with("XN", Pos::Noun);
        let docs = parse_documents("#doc d x\na\tXN\nb\tNN\n", &tags).unwrap();
        assert_eq!(docs[0].sentences[0].tokens[0].pos, Pos::Noun);
        assert_eq!(docs[0].sentences[0].tokens[1].pos, Pos::Other);
    }

    fn three_sentence_corpus() -> Corpus {
        let text = "#doc d1 NW\n\
            我\tPN\n来\tOTHER\n了\tOTHER\n\n\
            老师\tNN\n说\tOTHER\n学生\tNN\n好\tOTHER\n\n\
            去\tOTHER\n学校\tNN\n\n";
        Corpus::new(parse_documents(text, &TagMap::default()).unwrap()).unwrap()
    }

    #[test]
    fn azp_loaded_intact() {
        let corpus = three_sentence_corpus();
        let line = "d1\t2\t0\t1\t1:2:3:学生 1:0:1:老师 0:0:1:我\n";
        let load = parse_azp_instances(line, &corpus).unwrap();
        assert_eq!(load.resorted, 0);
        let inst = &load.instances[0];
        assert_eq!(inst.candidates.len(), 3);
        assert_eq!(inst.gold_candidate_index, Some(1));
        assert_eq!(inst.gold().unwrap().head_form, "老师");
        let ranks: Vec<usize> = inst.candidates.iter().map(|c| c.distance_rank).collect();
        assert_eq!(ranks, vec![0, 1, 2]);
    }

    #[test]
    fn azp_unknown_doc() {
        let corpus = three_sentence_corpus();
        let err = parse_azp_instances("zz\t0\t0\t-1\t\n", &corpus).unwrap_err();
        assert!(matches!(err, Error::UnknownDocument(_)));
    }

    #[test]
    fn azp_gold_out_of_range() {
        let corpus = three_sentence_corpus();
        let err = parse_azp_instances("d1\t2\t0\t3\t0:0:1:我\n", &corpus).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
    }

    #[test]
    fn azp_head_must_be_in_span() {
        let corpus = three_sentence_corpus();
        let err = parse_azp_instances("d1\t2\t0\t0\t0:0:1:老师\n", &corpus).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
    }

    #[test]
    fn azp_farthest_first_is_resorted() {
        let corpus = three_sentence_corpus();
        // gold points at 学生 (index 2 in file order).
        let line = "d1\t2\t0\t2\t0:0:1:我 1:0:1:老师 1:2:3:学生\n";
        let load = parse_azp_instances(line, &corpus).unwrap();
        assert_eq!(load.resorted, 1);
        let inst = &load.instances[0];
        let heads: Vec<&str> = inst
            .candidates
            .iter()
            .map(|c| c.head_form.as_str())
            .collect();

        // Brute-force oracle: global positions of each candidate vs. gap at 7.
        let gap = 7usize;
        let mut brute = [("我", gap - 1), ("老师", gap - 4), ("学生", gap - 6)];
        brute.sort_by_key(|&(_, d)| d);
        let expected: Vec<&str> = brute.iter().map(|&(h, _)| h).collect();
        assert_eq!(heads, expected);
        assert_eq!(inst.gold().unwrap().head_form, "学生");
    }

    #[test]
    fn azp_round_trip() {
        let corpus = three_sentence_corpus();
        let text = "d1\t2\t0\t1\t1:2:3:学生 1:0:1:老师 0:0:1:我\nd1\t1\t4\t-1\t1:0:1:老师\n";
        let load = parse_azp_instances(text, &corpus).unwrap();
        assert_eq!(write_azp_instances(&load.instances), text);
    }

    fn arb_documents() -> impl Strategy<Value = Vec<Document>> {
        let token = (
            "[a-z]{1,4}",
            prop_oneof![Just(Pos::Noun), Just(Pos::Pronoun), Just(Pos::Other)],
        );
        let sentence = prop::collection::vec(token, 1..6);
        let doc = (prop::collection::vec(sentence, 1..4), "[A-Z]{2}");
        prop::collection::vec(doc, 1..4).prop_map(|docs| {
            docs.into_iter()
                .enumerate()
                .map(|(d, (sents, domain))| {
                    let mut idx = 0;
                    let sentences = sents
                        .into_iter()
                        .enumerate()
                        .map(|(s, toks)| Sentence {
                            sent_index: s,
                            tokens: toks
                                .into_iter()
                                .map(|(form, pos)| {
                                    idx += 1;
                                    Token {
                                        form,
                                        pos,
                                        doc_index: idx - 1,
                                    }
                                })
                                .collect(),
                        })
                        .collect();
                    Document {
                        doc_id: format!("doc{d}"),
                        domain,
                        sentences,
                    }
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(docs in arb_documents()) {
            let text = write_documents(&docs);
            let back = parse_documents(&text, &TagMap::default()).unwrap();
            prop_assert_eq!(back, docs);
        }

        #[test]
        fn doc_index_counts_preceding_tokens(docs in arb_documents()) {
            let back = parse_documents(&write_documents(&docs), &TagMap::default()).unwrap();
            for doc in &back {
                for (i, tok) in doc.tokens().enumerate() {
                    prop_assert_eq!(tok.doc_index, i);
                }
            }
        }
    }
}
