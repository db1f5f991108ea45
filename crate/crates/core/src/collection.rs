//! Data model and I/O for corpora, queries, graded judgments, runs and
//! training groups.
//!
//! File formats:
//! * qrels: `qid iter docid grade` (whitespace separated)
//! * run:   `qid Q0 docid rank score tag`
//! * corpus/queries: TSV `id<TAB>text`
//! * training groups: TSV `qid<TAB>pos_docid<TAB>neg1,...,negk<TAB>origin`

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Lowercase and split on non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

/// A set of documents with unique ids, immutable after construction.
#[derive(Debug, Clone)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if tokenize(&d.text).is_empty() {
                return Err(Error::Validation(format!(
                    "document {} is empty after normalization",
                    d.doc_id
                )));
            }
            if by_id.insert(d.doc_id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate doc_id {}", d.doc_id)));
            }
        }
        Ok(Self { docs, by_id })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.by_id.contains_key(doc_id)
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub query_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradedJudgment {
    pub query_id: String,
    pub doc_id: String,
    pub grade: u32,
}

/// Queries plus graded judgments; the source of both evaluation and
/// contamination.
#[derive(Debug, Clone)]
pub struct TestCollection {
    pub name: String,
    pub queries: Vec<Query>,
    pub judgments: Vec<GradedJudgment>,
    pub grade_max: u32,
}

impl TestCollection {
    pub fn new(
        name: impl Into<String>,
        queries: Vec<Query>,
        judgments: Vec<GradedJudgment>,
        grade_max: u32,
    ) -> Result<Self> {
        let qids: HashSet<&str> = queries.iter().map(|q| q.query_id.as_str()).collect();
        if qids.len() != queries.len() {
            return Err(Error::Validation("duplicate query_id in collection".into()));
        }
        let mut seen = HashSet::new();
        for j in &judgments {
            if !qids.contains(j.query_id.as_str()) {
                return Err(Error::Validation(format!(
                    "judgment references unknown query {}",
                    j.query_id
                )));
            }
            if j.grade > grade_max {
                return Err(Error::Validation(format!(
                    "grade {} above grade_max {}",
                    j.grade, grade_max
                )));
            }
            if !seen.insert((j.query_id.clone(), j.doc_id.clone())) {
                return Err(Error::Validation(format!(
                    "duplicate judgment for ({}, {})",
                    j.query_id, j.doc_id
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            queries,
            judgments,
            grade_max,
        })
    }

    pub fn query(&self, query_id: &str) -> Option<&Query> {
        self.queries.iter().find(|q| q.query_id == query_id)
    }

    /// Judgments grouped per query, in collection order within each query.
    pub fn judgments_by_query(&self) -> BTreeMap<&str, Vec<&GradedJudgment>> {
        let mut map: BTreeMap<&str, Vec<&GradedJudgment>> = BTreeMap::new();
        for j in &self.judgments {
            map.entry(j.query_id.as_str()).or_default().push(j);
        }
        map
    }

    /// Doc ids judged with grade >= cutoff for the given query.
    pub fn relevant_docs(&self, query_id: &str, cutoff: u32) -> HashSet<&str> {
        self.judgments
            .iter()
            .filter(|j| j.query_id == query_id && j.grade >= cutoff)
            .map(|j| j.doc_id.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupOrigin {
    Base,
    Contaminated,
}

impl GroupOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupOrigin::Base => "base",
            GroupOrigin::Contaminated => "contaminated",
        }
    }
}

impl std::str::FromStr for GroupOrigin {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(GroupOrigin::Base),
            "contaminated" => Ok(GroupOrigin::Contaminated),
            other => Err(Error::Validation(format!("unknown origin {other:?}"))),
        }
    }
}

/// One query, one positive document and `group_size - 1` negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingGroup {
    pub query: Query,
    pub positive: String,
    pub negatives: Vec<String>,
    pub origin: GroupOrigin,
}

impl TrainingGroup {
    pub fn new(
        query: Query,
        positive: String,
        negatives: Vec<String>,
        origin: GroupOrigin,
    ) -> Result<Self> {
        if negatives.is_empty() {
            return Err(Error::Validation("group_size must be >= 2".into()));
        }
        if negatives.iter().any(|n| *n == positive) {
            return Err(Error::Validation(format!(
                "positive {positive} appears among negatives"
            )));
        }
        let mut seen = HashSet::new();
        if !negatives.iter().all(|n| seen.insert(n.as_str())) {
            return Err(Error::Validation("duplicate negative in group".into()));
        }
        Ok(Self {
            query,
            positive,
            negatives,
            origin,
        })
    }

    pub fn group_size(&self) -> usize {
        self.negatives.len() + 1
    }
}

/// Per-query ranked document lists with scores, descending by score.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub tag: String,
    pub rankings: BTreeMap<String, Vec<(String, f64)>>,
}

impl Run {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            rankings: BTreeMap::new(),
        }
    }

    pub fn add_ranking(&mut self, query_id: impl Into<String>, ranked: Vec<(String, f64)>) -> Result<()> {
        let mut seen = HashSet::new();
        for w in ranked.windows(2) {
            if w[1].1 > w[0].1 {
                return Err(Error::Validation("run scores must be non-increasing".into()));
            }
        }
        for (d, _) in &ranked {
            if !seen.insert(d.as_str()) {
                return Err(Error::Validation(format!("duplicate doc {d} in ranking")));
            }
        }
        self.rankings.insert(query_id.into(), ranked);
        Ok(())
    }
}

/// Parse TREC-format qrels. The iteration field is ignored; duplicate
/// (query, doc) pairs are an error.
pub fn parse_qrels(text: &str) -> Result<Vec<GradedJudgment>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let grade: i64 = fields[3].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("invalid grade {:?}", fields[3]),
        })?;
        if grade < 0 {
            return Err(Error::Validation(format!(
                "negative grade {grade} at line {lineno}"
            )));
        }
        if !seen.insert((fields[0].to_string(), fields[2].to_string())) {
            return Err(Error::Validation(format!(
                "duplicate judgment for ({}, {}) at line {lineno}",
                fields[0], fields[2]
            )));
        }
        out.push(GradedJudgment {
            query_id: fields[0].to_string(),
            doc_id: fields[2].to_string(),
            grade: grade as u32,
        });
    }
    Ok(out)
}

/// Build a collection directly from qrels text; query texts are unknown and
/// left empty (sufficient for evaluation).
pub fn collection_from_qrels(name: &str, text: &str) -> Result<TestCollection> {
    let judgments = parse_qrels(text)?;
    let mut qids: Vec<&str> = judgments.iter().map(|j| j.query_id.as_str()).collect();
    qids.sort_unstable();
    qids.dedup();
    let queries = qids
        .into_iter()
        .map(|q| Query {
            query_id: q.to_string(),
            text: String::new(),
        })
        .collect();
    let grade_max = judgments.iter().map(|j| j.grade).max().unwrap_or(0);
    TestCollection::new(name, queries, judgments, grade_max)
}

pub fn write_qrels(judgments: &[GradedJudgment]) -> String {
    let mut out = String::new();
    for j in judgments {
        let _ = writeln!(out, "{} 0 {} {}", j.query_id, j.doc_id, j.grade);
    }
    out
}

/// Serialize a run in TREC format. Scores use the shortest representation
/// that round-trips exactly.
pub fn write_run(run: &Run) -> String {
    let mut out = String::new();
    for (qid, ranked) in &run.rankings {
        for (rank, (doc_id, score)) in ranked.iter().enumerate() {
            let _ = writeln!(out, "{} Q0 {} {} {} {}", qid, doc_id, rank + 1, score, run.tag);
        }
    }
    out
}

pub fn parse_run(text: &str) -> Result<Run> {
    let mut tag = String::new();
    let mut rankings: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let rank: usize = fields[3].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("invalid rank {:?}", fields[3]),
        })?;
        let score: f64 = fields[4].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("invalid score {:?}", fields[4]),
        })?;
        if tag.is_empty() {
            tag = fields[5].to_string();
        }
        let entry = rankings.entry(fields[0].to_string()).or_default();
        if rank != entry.len() + 1 {
            return Err(Error::Validation(format!(
                "rank {} out of order for query {} at line {}",
                rank, fields[0], lineno
            )));
        }
        if let Some((_, prev)) = entry.last() {
            if score > *prev {
                return Err(Error::Validation(format!(
                    "score increases at line {lineno}"
                )));
            }
        }
        entry.push((fields[2].to_string(), score));
    }
    let run = Run { tag, rankings };
    for (qid, ranked) in &run.rankings {
        let mut seen = HashSet::new();
        for (d, _) in ranked {
            if !seen.insert(d.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate doc {d} for query {qid}"
                )));
            }
        }
    }
    Ok(run)
}

/// TSV `id<TAB>text`, one record per line.
pub fn write_id_text(records: impl Iterator<Item = (String, String)>) -> String {
    let mut out = String::new();
    for (id, text) in records {
        let _ = writeln!(out, "{id}\t{text}");
    }
    out
}

pub fn parse_id_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, body) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: "expected id<TAB>text".into(),
        })?;
        out.push((id.to_string(), body.to_string()));
    }
    Ok(out)
}

pub fn write_groups(groups: &[TrainingGroup]) -> String {
    let mut out = String::new();
    for g in groups {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            g.query.query_id,
            g.positive,
            g.negatives.join(","),
            g.origin.as_str()
        );
    }
    out
}

/// Parse the training-group TSV; query texts are resolved from `queries`.
pub fn parse_groups(text: &str, queries: &HashMap<String, String>) -> Result<Vec<TrainingGroup>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let qtext = queries.get(fields[0]).ok_or_else(|| Error::Data(format!(
            "unknown query {} at line {lineno}",
            fields[0]
        )))?;
        let negatives = fields[2].split(',').map(|s| s.to_string()).collect();
        out.push(TrainingGroup::new(
            Query {
                query_id: fields[0].to_string(),
                text: qtext.clone(),
            },
            fields[1].to_string(),
            negatives,
            fields[3].parse()?,
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_lowercases_and_splits() {
        assert_eq!(tokenize("Foo, bar-BAZ 12"), vec!["foo", "bar", "baz", "12"]);
        assert!(tokenize("  ... ").is_empty());
    }

    #[test]
    fn qrels_basic_line() {
        let js = parse_qrels("q1 0 d1 2").unwrap();
        assert_eq!(
            js,
            vec![GradedJudgment {
                query_id: "q1".into(),
                doc_id: "d1".into(),
                grade: 2
            }]
        );
    }

    #[test]
    fn qrels_duplicate_pair_rejected() {
        assert!(matches!(
            parse_qrels("q1 0 d1 2\nq1 0 d1 3"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn qrels_negative_grade_rejected() {
        assert!(matches!(
            parse_qrels("q1 0 d1 -1"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn qrels_malformed_line_carries_line_number() {
        match parse_qrels("q1 0 d1 2\nq1 d1 2") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn qrels_grade_max_from_fixture() {
        // Independent line-by-line reference over the fixture.
        let fixture = "q1 0 d1 3\nq1 0 d2 1\nq2 0 d1 0";
        let expected_max = fixture
            .lines()
            .map(|l| l.split_whitespace().nth(3).unwrap().parse::<u32>().unwrap())
            .max()
            .unwrap();
        let coll = collection_from_qrels("t", fixture).unwrap();
        assert_eq!(coll.grade_max, 3);
        assert_eq!(coll.grade_max, expected_max);
        assert_eq!(coll.judgments.len(), 3);
    }

    #[test]
    fn run_format_matches_definition() {
        let mut run = Run::new("tag");
        run.add_ranking("q1", vec![("d2".into(), 1.5), ("d1".into(), 0.5)])
            .unwrap();
        assert_eq!(write_run(&run), "q1 Q0 d2 1 1.5 tag\nq1 Q0 d1 2 0.5 tag\n");
    }

    #[test]
    fn empty_run_empty_stream() {
        assert_eq!(write_run(&Run::new("t")), "");
    }

    #[test]
    fn run_parse_rejects_rank_gap() {
        let bad = "q1 Q0 d2 1 1.5 t\nq1 Q0 d1 3 0.5 t\n";
        assert!(matches!(parse_run(bad), Err(Error::Validation(_))));
    }

    #[test]
    fn duplicate_doc_id_in_corpus_rejected() {
        let docs = vec![
            Document {
                doc_id: "d1".into(),
                text: "a".into(),
            },
            Document {
                doc_id: "d1".into(),
                text: "b".into(),
            },
        ];
        assert!(Corpus::new(docs).is_err());
    }

    #[test]
    fn group_invariants() {
        let q = Query {
            query_id: "q".into(),
            text: "x".into(),
        };
        assert!(TrainingGroup::new(q.clone(), "d1".into(), vec!["d1".into()], GroupOrigin::Base).is_err());
        assert!(TrainingGroup::new(q.clone(), "d1".into(), vec![], GroupOrigin::Base).is_err());
        assert!(TrainingGroup::new(
            q,
            "d1".into(),
            vec!["d2".into(), "d2".into()],
            GroupOrigin::Base
        )
        .is_err());
    }

    #[test]
    fn groups_tsv_round_trip() {
        let q = Query {
            query_id: "q1".into(),
            text: "hello world".into(),
        };
        let groups = vec![TrainingGroup::new(
            q,
            "d1".into(),
            vec!["d2".into(), "d3".into()],
            GroupOrigin::Contaminated,
        )
        .unwrap()];
        let tsv = write_groups(&groups);
        let mut qmap = HashMap::new();
        qmap.insert("q1".to_string(), "hello world".to_string());
        assert_eq!(parse_groups(&tsv, &qmap).unwrap(), groups);
    }
}
