//! Per-domain and overall F-scores. With gold zero pronouns and one
//! prediction each, precision and recall coincide, so `F = 100 * hits / total`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::resolver::Resolution;

/// Display order for the usual broadcast/newswire genres; other domains
/// follow alphabetically.
pub const DOMAIN_ORDER: [&str; 6] = ["NW", "MZ", "WB", "BN", "BC", "TC"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub hits: usize,
    pub total: usize,
}

impl Score {
    pub fn f(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.hits as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Only domains with at least one instance, in display order.
    pub domains: Vec<(String, Score)>,
    pub overall: Score,
}

fn domain_rank(d: &str) -> (usize, String) {
    let upper = d.to_uppercase();
    let rank = DOMAIN_ORDER
        .iter()
        .position(|&x| x == upper)
        .unwrap_or(DOMAIN_ORDER.len());
    (rank, upper)
}

pub fn score(resolutions: &[Resolution], corpus: &Corpus) -> Result<Metrics> {
    let mut by_domain: BTreeMap<(usize, String), Score> = BTreeMap::new();
    for r in resolutions {
        let correct = r.correct.ok_or_else(|| {
            Error::Invalid(format!(
                "resolution for {} at {} has no gold antecedent",
                r.doc_id, r.gap
            ))
        })?;
        let doc = corpus
            .get(&r.doc_id)
            .ok_or_else(|| Error::UnknownDocument(r.doc_id.clone()))?;
        let s = by_domain
            .entry(domain_rank(&doc.domain))
            .or_insert(Score { hits: 0, total: 0 });
        s.total += 1;
        s.hits += correct as usize;
    }
    let overall = by_domain
        .values()
        .fold(Score { hits: 0, total: 0 }, |a, s| Score {
            hits: a.hits + s.hits,
            total: a.total + s.total,
        });
    Ok(Metrics {
        domains: by_domain.into_iter().map(|((_, d), s)| (d, s)).collect(),
        overall,
    })
}

impl Metrics {
    /// Fixed-width grid: one column per domain plus `Overall`, F to one
    /// decimal, instance counts in brackets.
    pub fn table(&self) -> String {
        let cols: Vec<(&str, &Score)> = self
            .domains
            .iter()
            .map(|(d, s)| (d.as_str(), s))
            .chain(std::iter::once(("Overall", &self.overall)))
            .collect();
        let mut head = String::new();
        let mut row = String::new();
        for (name, s) in cols {
            let cell = format!("{:.1} ({})", s.f(), s.total);
            let w = cell.len().max(name.len()) + 2;
            let _ = write!(head, "{name:>w$}");
            let _ = write!(row, "{cell:>w$}");
        }
        format!("{head}\n{row}\n")
    }

    /// `domain  hits  total  f` with full-precision F.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("domain\thits\ttotal\tf\n");
        for (d, s) in self
            .domains
            .iter()
            .map(|(d, s)| (d.as_str(), s))
            .chain([("Overall", &self.overall)])
        {
            let _ = writeln!(out, "{d}\t{}\t{}\t{}", s.hits, s.total, s.f());
        }
        out
    }
}
