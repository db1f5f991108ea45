//! Evaluation of runs against graded judgments: nDCG@k (exponential gain
//! 2^g - 1, log2(rank+1) discount), MAP over binarized relevance, Recall@k,
//! and a two-sided paired t-test.
//!
//! Unjudged retrieved documents count as non-relevant. Evaluation iterates
//! over collection queries; a query absent from the run scores 0.

use std::collections::{BTreeMap, HashMap, HashSet};

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::collection::{Run, TestCollection};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MetricResult {
    pub name: String,
    pub per_query: BTreeMap<String, f64>,
    pub aggregate: f64,
}

impl MetricResult {
    fn from_per_query(name: impl Into<String>, per_query: BTreeMap<String, f64>) -> Self {
        let aggregate = if per_query.is_empty() {
            0.0
        } else {
            per_query.values().sum::<f64>() / per_query.len() as f64
        };
        Self {
            name: name.into(),
            per_query,
            aggregate,
        }
    }
}

fn check_run_queries(run: &Run, collection: &TestCollection) -> Result<()> {
    let known: HashSet<&str> = collection
        .queries
        .iter()
        .map(|q| q.query_id.as_str())
        .collect();
    let unknown: Vec<&str> = run
        .rankings
        .keys()
        .map(|q| q.as_str())
        .filter(|q| !known.contains(q))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Evaluation(format!(
            "run queries missing from collection: {}",
            unknown.join(", ")
        )));
    }
    Ok(())
}

fn grades_for<'a>(collection: &'a TestCollection, query_id: &str) -> HashMap<&'a str, u32> {
    collection
        .judgments
        .iter()
        .filter(|j| j.query_id == query_id)
        .map(|j| (j.doc_id.as_str(), j.grade))
        .collect()
}

fn gain(grade: u32) -> f64 {
    (1u64 << grade) as f64 - 1.0
}

pub fn ndcg_at(run: &Run, collection: &TestCollection, k: usize) -> Result<MetricResult> {
    check_run_queries(run, collection)?;
    let empty: Vec<(String, f64)> = Vec::new();
    let mut per_query = BTreeMap::new();
    for q in &collection.queries {
        let grades = grades_for(collection, &q.query_id);
        let ranked = run.rankings.get(&q.query_id).unwrap_or(&empty);
        let dcg: f64 = ranked
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, (d, _))| {
                gain(grades.get(d.as_str()).copied().unwrap_or(0)) / ((i + 2) as f64).log2()
            })
            .sum();
        let mut ideal: Vec<u32> = grades.values().copied().collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, g)| gain(*g) / ((i + 2) as f64).log2())
            .sum();
        let value = if idcg > 0.0 { dcg / idcg } else { 0.0 };
        per_query.insert(q.query_id.clone(), value);
    }
    Ok(MetricResult::from_per_query(format!("nDCG@{k}"), per_query))
}

pub fn map_metric(run: &Run, collection: &TestCollection, cutoff: u32) -> Result<MetricResult> {
    check_run_queries(run, collection)?;
    let empty: Vec<(String, f64)> = Vec::new();
    let mut per_query = BTreeMap::new();
    for q in &collection.queries {
        let relevant = collection.relevant_docs(&q.query_id, cutoff);
        let ranked = run.rankings.get(&q.query_id).unwrap_or(&empty);
        let value = if relevant.is_empty() {
            0.0
        } else {
            let mut hits = 0usize;
            let mut sum_prec = 0.0;
            for (i, (d, _)) in ranked.iter().enumerate() {
                if relevant.contains(d.as_str()) {
                    hits += 1;
                    sum_prec += hits as f64 / (i + 1) as f64;
                }
            }
            sum_prec / relevant.len() as f64
        };
        per_query.insert(q.query_id.clone(), value);
    }
    Ok(MetricResult::from_per_query("MAP", per_query))
}

pub fn recall_at(
    run: &Run,
    collection: &TestCollection,
    k: usize,
    cutoff: u32,
) -> Result<MetricResult> {
    check_run_queries(run, collection)?;
    let empty: Vec<(String, f64)> = Vec::new();
    let mut per_query = BTreeMap::new();
    for q in &collection.queries {
        let relevant = collection.relevant_docs(&q.query_id, cutoff);
        let ranked = run.rankings.get(&q.query_id).unwrap_or(&empty);
        let value = if relevant.is_empty() {
            0.0
        } else {
            let retrieved: HashSet<&str> =
                ranked.iter().take(k).map(|(d, _)| d.as_str()).collect();
            relevant.intersection(&retrieved).count() as f64 / relevant.len() as f64
        };
        per_query.insert(q.query_id.clone(), value);
    }
    Ok(MetricResult::from_per_query(format!("R@{k}"), per_query))
}

#[derive(Debug, Clone, Copy)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Two-sided paired t-test over aligned per-query values. All-zero
/// differences are defined as not significant (p = 1); zero variance with a
/// nonzero mean is significant by convention (p = 0).
pub fn paired_ttest(values_a: &[f64], values_b: &[f64]) -> Result<TTestResult> {
    if values_a.len() != values_b.len() {
        return Err(Error::Evaluation(format!(
            "mismatched query sets: {} vs {}",
            values_a.len(),
            values_b.len()
        )));
    }
    let n = values_a.len();
    if n < 2 {
        return Err(Error::Evaluation("need at least 2 paired values".into()));
    }
    let diffs: Vec<f64> = values_a.iter().zip(values_b).map(|(a, b)| a - b).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n as f64 - 1.0);
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTestResult {
                t_statistic: 0.0,
                p_value: 1.0,
                significant: false,
            }
        } else {
            TTestResult {
                t_statistic: if mean > 0.0 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                },
                p_value: 0.0,
                significant: true,
            }
        });
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, n as f64 - 1.0)
        .map_err(|e| Error::Evaluation(format!("t-distribution: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TTestResult {
        t_statistic: t,
        p_value: p,
        significant: p < 0.05,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct MetricSettings {
    pub ndcg_k: usize,
    pub recall_k: usize,
    pub cutoff: u32,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            ndcg_k: 10,
            recall_k: 100,
            cutoff: 2,
        }
    }
}

/// All three metrics with per-query values retained for significance testing.
pub fn evaluate_run(
    run: &Run,
    collection: &TestCollection,
    settings: &MetricSettings,
) -> Result<Vec<MetricResult>> {
    Ok(vec![
        ndcg_at(run, collection, settings.ndcg_k)?,
        map_metric(run, collection, settings.cutoff)?,
        recall_at(run, collection, settings.recall_k, settings.cutoff)?,
    ])
}
