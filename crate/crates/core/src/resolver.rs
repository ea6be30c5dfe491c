//! Turns a one-word reader prediction into an antecedent choice: candidates
//! are scanned nearest-first and the first whose head word equals the
//! prediction wins.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::{AzpInstance, CandidateNp, Corpus, Document, GapPosition};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::pseudogen::{gap_query, DEFAULT_BLANK};
use crate::reader::{self, ReaderParams};
use crate::vocab::{self, Vocabulary};

/// Written in place of a prediction that maps to no surface form.
pub const UNRECOVERABLE: &str = "⟨unrecoverable⟩";

#[derive(Debug, Clone, PartialEq)]
pub struct ResolveConfig {
    pub restrict_to_context: bool,
    pub blank_symbol: String,
}

impl Default for ResolveConfig {
    fn default() -> Self {
        ResolveConfig {
            restrict_to_context: true,
            blank_symbol: DEFAULT_BLANK.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub doc_id: String,
    pub gap: GapPosition,
    /// `None` when the predicted id has no surface form in this sample.
    pub predicted_form: Option<String>,
    pub matched_candidate_index: Option<usize>,
    /// Present when the instance had a gold antecedent.
    pub correct: Option<bool>,
}

/// Index of the first candidate, in list order, whose head is `predicted`.
pub fn match_nearest(predicted: &str, candidates: &[CandidateNp]) -> Option<usize> {
    candidates.iter().position(|c| c.head_form == predicted)
}

pub fn resolve(
    instance: &AzpInstance,
    doc: &Document,
    params: &ReaderParams,
    vocab: &Vocabulary,
    cfg: &ResolveConfig,
) -> Result<Resolution> {
    let (doc_tokens, query_tokens) = gap_query(instance, doc, &cfg.blank_symbol)?;
    let mapped = vocab::map_tokens(&doc_tokens, &query_tokens, None, vocab)?;
    let predicted_form = if cfg.restrict_to_context && mapped.doc_ids.is_empty() {
        None
    } else {
        let (id, _) = reader::predict(params, &mapped, cfg.restrict_to_context)?;
        match vocab::recover_form(id, &mapped, vocab) {
            Ok(form) => Some(form),
            Err(Error::Unrecoverable(_)) => None,
            Err(e) => return Err(e),
        }
    };
    let matched = predicted_form
        .as_deref()
        .and_then(|p| match_nearest(p, &instance.candidates));
    let correct = instance
        .gold_candidate_index
        .map(|gold| matched == Some(gold));
    Ok(Resolution {
        doc_id: instance.doc_id.clone(),
        gap: instance.gap,
        predicted_form,
        matched_candidate_index: matched,
        correct,
    })
}

pub fn resolve_all(
    instances: &[AzpInstance],
    corpus: &Corpus,
    params: &ReaderParams,
    vocab: &Vocabulary,
    cfg: &ResolveConfig,
    exec: Exec,
) -> Result<Vec<Resolution>> {
    exec.try_map(instances, |inst| {
        let doc = corpus
            .get(&inst.doc_id)
            .ok_or_else(|| Error::UnknownDocument(inst.doc_id.clone()))?;
        resolve(inst, doc, params, vocab, cfg)
    })
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or("-".to_string(), |v| v.to_string())
}

/// `doc_id  sent:slot  predicted_form  matched_index  correct`, tab-separated;
/// `-` marks an absent field and `correct` is `1`/`0`.
pub fn write_predictions(resolutions: &[Resolution]) -> String {
    let mut out = String::new();
    for r in resolutions {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.doc_id,
            r.gap,
            r.predicted_form.as_deref().unwrap_or(UNRECOVERABLE),
            opt(r.matched_candidate_index),
            opt(r.correct.map(u8::from)),
        );
    }
    out
}

pub fn parse_predictions(text: &str) -> Result<Vec<Resolution>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(err(format!("expected 5 columns, found {}", cols.len())));
        }
        let gap = cols[1]
            .parse::<GapPosition>()
            .map_err(|_| err(format!("bad gap `{}`", cols[1])))?;
        let predicted_form = (cols[2] != UNRECOVERABLE).then(|| cols[2].to_string());
        let matched_candidate_index = match cols[3] {
            "-" => None,
            s => Some(
                s.parse()
                    .map_err(|_| err(format!("bad matched index `{s}`")))?,
            ),
        };
        let correct = match cols[4] {
            "-" => None,
            "1" => Some(true),
            "0" => Some(false),
            s => return Err(err(format!("bad correctness flag `{s}`"))),
        };
        out.push(Resolution {
            doc_id: cols[0].to_string(),
            gap,
            predicted_form,
            matched_candidate_index,
            correct,
        });
    }
    Ok(out)
}

pub fn save_predictions(path: impl AsRef<Path>, resolutions: &[Resolution]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_predictions(resolutions)).map_err(|e| Error::io(path, e))
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<Resolution>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_documents, TagMap};
    use crate::reader::ReaderConfig;
    use crate::vocab::build_shortlist;

    fn cand(head: &str, rank: usize) -> CandidateNp {
        CandidateNp {
            sent_index: 0,
            start: rank,
            end: rank,
            head_form: head.to_string(),
            distance_rank: rank,
            token_distance: rank + 1,
        }
    }

    #[test]
    fn first_match_wins() {
        let c = [cand("today", 0), cand("weather", 1), cand("weather", 2)];
        assert_eq!(match_nearest("weather", &c), Some(1));
        assert_eq!(match_nearest("rain", &c), None);
        assert_eq!(match_nearest("rain", &[]), None);
    }

    const DOC: &str = "#doc d1 nw\nBob\tNN\nsaw\tVV\nAnn\tNN\n.\tPU\n\nAnn\tNN\nlikes\tVV\nBob\tNN\n\nthen\tAD\nleft\tVV\n.\tPU\n";

    fn setup() -> (Document, Vocabulary, AzpInstance) {
        let doc = parse_documents(DOC, &TagMap::default()).unwrap().remove(0);
        let tokens: Vec<String> = doc.tokens().map(|t| t.form.clone()).collect();
        let t = crate::pseudogen::Triple {
            doc_tokens: tokens,
            query_tokens: vec![],
            answer: "Bob".into(),
            origin: crate::pseudogen::Origin::Task,
            doc_id: "d1".into(),
            meta: Default::default(),
        };
        let vocab = build_shortlist([&t], 100, 4, DEFAULT_BLANK);
        let inst = AzpInstance {
            doc_id: "d1".into(),
            gap: GapPosition {
                sent_index: 2,
                token_slot: 0,
            },
            candidates: vec![
                CandidateNp {
                    sent_index: 1,
                    start: 2,
                    end: 2,
                    head_form: "Bob".into(),
                    distance_rank: 0,
                    token_distance: 1,
                },
                CandidateNp {
                    sent_index: 1,
                    start: 0,
                    end: 0,
                    head_form: "Ann".into(),
                    distance_rank: 1,
                    token_distance: 3,
                },
            ],
            gold_candidate_index: Some(1),
        };
        (doc, vocab, inst)
    }

    /// Ranks `favourite` first, then the rest by descending id.
    fn peaked(vocab: &Vocabulary, favourite: usize) -> ReaderParams {
        let scores: Vec<f64> = (0..vocab.total())
            .map(|i| {
                if i == favourite {
                    1.0
                } else {
                    0.01 * i as f64 / vocab.total() as f64
                }
            })
            .collect();
        reader::preference_params(&ReaderConfig::new(3, 3, vocab.total(), 1), &scores).unwrap()
    }

    #[test]
    fn resolves_to_matching_candidate() {
        let (doc, vocab, inst) = setup();
        let cfg = ResolveConfig::default();
        let r = resolve(
            &inst,
            &doc,
            &peaked(&vocab, vocab.id("Ann").unwrap()),
            &vocab,
            &cfg,
        )
        .unwrap();
        assert_eq!(r.predicted_form.as_deref(), Some("Ann"));
        assert_eq!(r.matched_candidate_index, Some(1));
        assert_eq!(r.correct, Some(true));

        let p = peaked(&vocab, vocab.id("Bob").unwrap());
        let r = resolve(&inst, &doc, &p, &vocab, &cfg).unwrap();
        assert_eq!(
            (r.matched_candidate_index, r.correct),
            (Some(0), Some(false))
        );
        assert_eq!(r, resolve(&inst, &doc, &p, &vocab, &cfg).unwrap());
    }

    #[test]
    fn restriction_skips_words_outside_the_context() {
        let (doc, vocab, inst) = setup();
        // "then" only occurs in the gap sentence, which is not context.
        let p = peaked(&vocab, vocab.id("then").unwrap());
        let restricted = resolve(&inst, &doc, &p, &vocab, &ResolveConfig::default()).unwrap();
        assert_ne!(restricted.predicted_form.as_deref(), Some("then"));
        let open = ResolveConfig {
            restrict_to_context: false,
            ..ResolveConfig::default()
        };
        let r = resolve(&inst, &doc, &p, &vocab, &open).unwrap();
        assert_eq!(r.predicted_form.as_deref(), Some("then"));
        assert_eq!(r.matched_candidate_index, None);
    }

    #[test]
    fn no_match_is_incorrect() {
        let (doc, vocab, mut inst) = setup();
        inst.candidates
            .iter_mut()
            .for_each(|c| c.head_form = "nobody".into());
        let p = peaked(&vocab, vocab.id("Ann").unwrap());
        let r = resolve(&inst, &doc, &p, &vocab, &ResolveConfig::default()).unwrap();
        assert_eq!(r.matched_candidate_index, None);
        assert_eq!(r.correct, Some(false));

        inst.candidates.clear();
        inst.gold_candidate_index = None;
        let r = resolve(&inst, &doc, &p, &vocab, &ResolveConfig::default()).unwrap();
        assert_eq!((r.matched_candidate_index, r.correct), (None, None));
    }

    #[test]
    fn unrestricted_pad_prediction_is_flagged() {
        let (doc, vocab, inst) = setup();
        let cfg = ResolveConfig {
            restrict_to_context: false,
            ..ResolveConfig::default()
        };
        for id in [
            crate::vocab::PAD_ID,
            crate::vocab::BLANK_ID,
            vocab.unk_id(3),
        ] {
            let r = resolve(&inst, &doc, &peaked(&vocab, id), &vocab, &cfg).unwrap();
            assert_eq!(r.predicted_form, None);
            assert_eq!(r.correct, Some(false));
        }
    }

    #[test]
    fn prediction_file_round_trip() {
        let rs = vec![
            Resolution {
                doc_id: "a".into(),
                gap: GapPosition {
                    sent_index: 2,
                    token_slot: 0,
                },
                predicted_form: Some("Bob".into()),
                matched_candidate_index: Some(0),
                correct: Some(true),
            },
            Resolution {
                doc_id: "b".into(),
                gap: GapPosition {
                    sent_index: 0,
                    token_slot: 3,
                },
                predicted_form: None,
                matched_candidate_index: None,
                correct: None,
            },
        ];
        let text = write_predictions(&rs);
        assert_eq!(text.lines().next().unwrap(), "a\t2:0\tBob\t0\t1");
        assert_eq!(parse_predictions(&text).unwrap(), rs);
        assert!(parse_predictions("a\t1:1\tx\t0").is_err());
        assert!(parse_predictions("a\t1:1\tx\t0\tyes").is_err());
    }

    #[test]
    fn resolve_all_matches_per_instance_calls() {
        let (doc, vocab, inst) = setup();
        let corpus = Corpus::new(vec![doc.clone()]).unwrap();
        let p = peaked(&vocab, vocab.id("Bob").unwrap());
        let many = vec![inst.clone(); 5];
        let cfg = ResolveConfig::default();
        let a = resolve_all(&many, &corpus, &p, &vocab, &cfg, Exec::Parallel).unwrap();
        let b = resolve_all(&many, &corpus, &p, &vocab, &cfg, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0], resolve(&inst, &doc, &p, &vocab, &cfg).unwrap());
        let mut orphan = inst;
        orphan.doc_id = "zz".into();
        assert!(resolve_all(&[orphan], &corpus, &p, &vocab, &cfg, Exec::Sequential).is_err());
    }
}
