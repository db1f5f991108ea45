//! Inverted index and BM25 scoring.
//!
//! This is the first-stage ranker that every neural model re-ranks, and a
//! source of hard negatives. The idf uses the +1-inside-log form so it is
//! always non-negative:
//!
//! ```text
//! idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1)
//! score(q, d) = sum_t idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avglen))
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::collection::{tokenize, Corpus};
use crate::error::{Error, Result};

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Clone)]
pub struct InvertedIndex {
    /// term -> postings sorted by doc_id.
    postings: BTreeMap<String, Vec<(String, u32)>>,
    doc_lengths: HashMap<String, usize>,
    avg_doc_length: f64,
    n_docs: usize,
    pub k1: f64,
    pub b: f64,
}

impl InvertedIndex {
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<usize> {
        self.doc_lengths.get(doc_id).copied()
    }

    pub fn postings(&self, term: &str) -> Option<&[(String, u32)]> {
        self.postings.get(term).map(|v| v.as_slice())
    }
}

pub fn build_index(corpus: &Corpus, k1: f64, b: f64) -> Result<InvertedIndex> {
    if corpus.is_empty() {
        return Err(Error::Config("cannot index an empty corpus".into()));
    }
    let mut postings: BTreeMap<String, Vec<(String, u32)>> = BTreeMap::new();
    let mut doc_lengths = HashMap::with_capacity(corpus.len());
    let mut total_len = 0usize;
    for doc in corpus.docs() {
        let tokens = tokenize(&doc.text);
        total_len += tokens.len();
        doc_lengths.insert(doc.doc_id.clone(), tokens.len());
        let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
        for t in &tokens {
            *tf.entry(t.as_str()).or_insert(0) += 1;
        }
        for (term, count) in tf {
            postings
                .entry(term.to_string())
                .or_default()
                .push((doc.doc_id.clone(), count));
        }
    }
    for plist in postings.values_mut() {
        plist.sort_by(|a, b| a.0.cmp(&b.0));
    }
    Ok(InvertedIndex {
        postings,
        avg_doc_length: total_len as f64 / corpus.len() as f64,
        doc_lengths,
        n_docs: corpus.len(),
        k1,
        b,
    })
}

fn idf(n_docs: usize, df: usize) -> f64 {
    ((n_docs as f64 - df as f64 + 0.5) / (df as f64 + 0.5) + 1.0).ln()
}

pub fn bm25_score(index: &InvertedIndex, query: &str, doc_id: &str) -> Result<f64> {
    let len = *index
        .doc_lengths
        .get(doc_id)
        .ok_or_else(|| Error::Lookup(format!("unknown doc_id {doc_id}")))? as f64;
    let mut score = 0.0;
    for term in tokenize(query) {
        let Some(plist) = index.postings.get(&term) else {
            continue;
        };
        let Ok(pos) = plist.binary_search_by(|(d, _)| d.as_str().cmp(doc_id)) else {
            continue;
        };
        let tf = plist[pos].1 as f64;
        let norm = tf + index.k1 * (1.0 - index.b + index.b * len / index.avg_doc_length);
        score += idf(index.n_docs, plist.len()) * tf * (index.k1 + 1.0) / norm;
    }
    Ok(score)
}

/// Top-k retrieval; descending score, ties broken by ascending doc_id, only
/// documents with score > 0.
pub fn retrieve_topk(index: &InvertedIndex, query: &str, k: usize) -> Vec<(String, f64)> {
    let mut scores: HashMap<&str, f64> = HashMap::new();
    for term in tokenize(query) {
        let Some(plist) = index.postings.get(&term) else {
            continue;
        };
        let term_idf = idf(index.n_docs, plist.len());
        for (doc_id, tf) in plist {
            let len = index.doc_lengths[doc_id] as f64;
            let tf = *tf as f64;
            let norm = tf + index.k1 * (1.0 - index.b + index.b * len / index.avg_doc_length);
            *scores.entry(doc_id.as_str()).or_insert(0.0) +=
                term_idf * tf * (index.k1 + 1.0) / norm;
        }
    }
    let mut ranked: Vec<(String, f64)> = scores
        .into_iter()
        .filter(|(_, s)| *s > 0.0)
        .map(|(d, s)| (d.to_string(), s))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

/// Single-file text serialization with a versioned header.
pub fn write_index(index: &InvertedIndex) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "RANKDISTILL-INDEX v1");
    let _ = writeln!(out, "k1 {}", index.k1);
    let _ = writeln!(out, "b {}", index.b);
    let _ = writeln!(out, "n_docs {}", index.n_docs);
    let mut lengths: Vec<(&String, &usize)> = index.doc_lengths.iter().collect();
    lengths.sort();
    for (doc_id, len) in lengths {
        let _ = writeln!(out, "D {doc_id} {len}");
    }
    for (term, plist) in &index.postings {
        let _ = write!(out, "T {term}");
        for (doc_id, tf) in plist {
            let _ = write!(out, " {doc_id}:{tf}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_index(text: &str) -> Result<InvertedIndex> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l).unwrap_or("");
    if header != "RANKDISTILL-INDEX v1" {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected index header {header:?}"),
        });
    }
    let mut k1 = DEFAULT_K1;
    let mut b = DEFAULT_B;
    let mut n_docs = 0usize;
    let mut doc_lengths = HashMap::new();
    let mut postings: BTreeMap<String, Vec<(String, u32)>> = BTreeMap::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let mut fields = line.split_whitespace();
        let bad = |m: &str| Error::Parse {
            line: lineno,
            message: m.to_string(),
        };
        match fields.next() {
            Some("k1") => {
                k1 = fields
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("bad k1"))?
            }
            Some("b") => {
                b = fields
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("bad b"))?
            }
            Some("n_docs") => {
                n_docs = fields
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("bad n_docs"))?
            }
            Some("D") => {
                let doc_id = fields.next().ok_or_else(|| bad("missing doc_id"))?;
                let len: usize = fields
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("bad doc length"))?;
                doc_lengths.insert(doc_id.to_string(), len);
            }
            Some("T") => {
                let term = fields.next().ok_or_else(|| bad("missing term"))?;
                let mut plist = Vec::new();
                for entry in fields {
                    let (doc_id, tf) = entry.split_once(':').ok_or_else(|| bad("bad posting"))?;
                    plist.push((
                        doc_id.to_string(),
                        tf.parse().map_err(|_| bad("bad tf"))?,
                    ));
                }
                postings.insert(term.to_string(), plist);
            }
            _ => return Err(bad("unknown record")),
        }
    }
    if n_docs != doc_lengths.len() {
        return Err(Error::Validation("n_docs mismatch in index file".into()));
    }
    let avg = doc_lengths.values().sum::<usize>() as f64 / n_docs as f64;
    Ok(InvertedIndex {
        postings,
        doc_lengths,
        avg_doc_length: avg,
        n_docs,
        k1,
        b,
    })
}
