//! Worst-case contamination: converts a test collection into training
//! groups and injects them into a base training stream at a controlled
//! fraction.
//!
//! Negative pools are drawn in priority order: judged hard negatives, then
//! BM25 candidates, then random corpus documents. A judged-relevant document
//! (grade >= cutoff) never appears as a negative.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::collection::{Corpus, GroupOrigin, TestCollection, TrainingGroup};
use crate::error::{Error, Result};
use crate::index::{retrieve_topk, InvertedIndex};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationSpec {
    pub source_collection: String,
    /// Relevance cutoff r: grade >= r is a positive.
    #[serde(default = "default_cutoff")]
    pub cutoff: u32,
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    #[serde(default = "default_max_fraction")]
    pub max_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    /// BM25 depth for the second negative pool.
    #[serde(default = "default_bm25_depth")]
    pub bm25_depth: usize,
}

fn default_cutoff() -> u32 {
    2
}
fn default_group_size() -> usize {
    4
}
fn default_max_fraction() -> f64 {
    1.0
}
fn default_bm25_depth() -> usize {
    100
}

impl ContaminationSpec {
    pub fn new(source_collection: impl Into<String>) -> Self {
        Self {
            source_collection: source_collection.into(),
            cutoff: 2,
            group_size: 4,
            max_fraction: 1.0,
            seed: 0,
            bm25_depth: 100,
        }
    }

    pub fn validate(&self, grade_max: u32) -> Result<()> {
        if self.cutoff < 1 || self.cutoff > grade_max {
            return Err(Error::Config(format!(
                "cutoff {} outside 1..={grade_max}",
                self.cutoff
            )));
        }
        if self.group_size < 2 {
            return Err(Error::Config("group_size must be >= 2".into()));
        }
        if self.max_fraction <= 0.0 || self.max_fraction > 1.0 {
            return Err(Error::Config(format!(
                "max_fraction {} outside (0, 1]",
                self.max_fraction
            )));
        }
        Ok(())
    }
}

pub type JudgedPair = (String, String);

/// Partition judged pairs into positives (grade >= r) and hard negatives.
pub fn binarize(collection: &TestCollection, cutoff: u32) -> (Vec<JudgedPair>, Vec<JudgedPair>) {
    let mut positives = Vec::new();
    let mut hard_negatives = Vec::new();
    for j in &collection.judgments {
        let pair = (j.query_id.clone(), j.doc_id.clone());
        if j.grade >= cutoff {
            positives.push(pair);
        } else {
            hard_negatives.push(pair);
        }
    }
    (positives, hard_negatives)
}

/// One group per positive pair, negatives never judged-relevant for the
/// query. Output is canonically ordered by (query_id, positive doc_id).
pub fn build_contaminated_groups(
    collection: &TestCollection,
    corpus: &Corpus,
    index: &InvertedIndex,
    spec: &ContaminationSpec,
) -> Result<Vec<TrainingGroup>> {
    spec.validate(collection.grade_max)?;
    if corpus.len() < spec.group_size {
        return Err(Error::Config(format!(
            "corpus of {} documents cannot fill groups of size {}",
            corpus.len(),
            spec.group_size
        )));
    }
    let (positives, hard_negatives) = binarize(collection, spec.cutoff);

    let mut hard_by_query: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (q, d) in &hard_negatives {
        hard_by_query.entry(q.as_str()).or_default().push(d.as_str());
    }
    let mut relevant_by_query: BTreeMap<&str, HashSet<&str>> = BTreeMap::new();
    for (q, d) in &positives {
        relevant_by_query
            .entry(q.as_str())
            .or_default()
            .insert(d.as_str());
    }

    let mut ordered: Vec<&JudgedPair> = positives.iter().collect();
    ordered.sort();

    let all_doc_ids: Vec<&str> = corpus.docs().iter().map(|d| d.doc_id.as_str()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let need = spec.group_size - 1;
    let mut groups = Vec::with_capacity(ordered.len());

    for (qid, pos_doc) in ordered {
        let query = collection
            .query(qid)
            .ok_or_else(|| Error::Data(format!("query {qid} missing from collection")))?;
        let relevant = relevant_by_query.get(qid.as_str());
        let is_excluded = |doc: &str, chosen: &[String]| {
            doc == pos_doc
                || relevant.map_or(false, |r| r.contains(doc))
                || chosen.iter().any(|c| c == doc)
        };

        let mut negatives: Vec<String> = Vec::with_capacity(need);

        // 1. Judged hard negatives, seeded shuffle.
        if let Some(pool) = hard_by_query.get(qid.as_str()) {
            let mut pool = pool.clone();
            pool.shuffle(&mut rng);
            for d in pool {
                if negatives.len() == need {
                    break;
                }
                if !is_excluded(d, &negatives) {
                    negatives.push(d.to_string());
                }
            }
        }

        // 2. BM25 candidates for the query.
        if negatives.len() < need {
            for (d, _) in retrieve_topk(index, &query.text, spec.bm25_depth) {
                if negatives.len() == need {
                    break;
                }
                if !is_excluded(&d, &negatives) {
                    negatives.push(d);
                }
            }
        }

        // 3. Random corpus fill.
        while negatives.len() < need {
            let d = all_doc_ids[rng.gen_range(0..all_doc_ids.len())];
            if !is_excluded(d, &negatives) {
                negatives.push(d.to_string());
            }
        }

        groups.push(TrainingGroup::new(
            query.clone(),
            pos_doc.clone(),
            negatives,
            GroupOrigin::Contaminated,
        )?);
    }
    Ok(groups)
}

/// Interleave contaminated groups uniformly at random into the base stream,
/// truncating the contaminated set so the achieved fraction never exceeds
/// `max_fraction`. Base order is preserved.
pub fn inject(
    base_groups: &[TrainingGroup],
    contaminated_groups: &[TrainingGroup],
    max_fraction: f64,
    seed: u64,
) -> Result<(Vec<TrainingGroup>, f64)> {
    if max_fraction <= 0.0 {
        return Err(Error::Config(format!(
            "max_fraction must be positive, got {max_fraction}"
        )));
    }
    if base_groups.is_empty() {
        return Err(Error::Config("base stream is empty".into()));
    }
    let b = base_groups.len();
    // used / (b + used) <= max_fraction
    let cap = if max_fraction >= 1.0 {
        contaminated_groups.len()
    } else {
        ((max_fraction * b as f64) / (1.0 - max_fraction)).floor() as usize
    };
    let used = contaminated_groups.len().min(cap);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept: Vec<&TrainingGroup> = contaminated_groups.iter().collect();
    kept.shuffle(&mut rng);
    kept.truncate(used);

    let total = b + used;
    let mut slots = rand::seq::index::sample(&mut rng, total, used).into_vec();
    slots.sort_unstable();

    let mut mixed = Vec::with_capacity(total);
    let mut base_iter = base_groups.iter();
    let mut kept_iter = kept.into_iter();
    let mut next_slot = slots.iter().copied().peekable();
    for pos in 0..total {
        if next_slot.peek() == Some(&pos) {
            next_slot.next();
            mixed.push(kept_iter.next().unwrap().clone());
        } else {
            mixed.push(base_iter.next().unwrap().clone());
        }
    }
    let achieved = used as f64 / total as f64;
    Ok((mixed, achieved))
}
