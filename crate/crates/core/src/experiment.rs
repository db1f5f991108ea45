//! End-to-end experiment driver: data generation, contamination, teacher
//! training, distillation, evaluation and the final report grid.
//!
//! Every stage is deterministic in the master seed, so re-running a config
//! into a fresh directory reproduces every artifact byte for byte. Trained
//! cells are cached by a content hash of their inputs; re-running over an
//! existing output directory skips completed cells. A cell failure is
//! recorded and the remaining cells continue.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::collection::{
    write_groups, write_id_text, write_qrels, write_run, Corpus, Query, Run, TrainingGroup,
};
use crate::config::{derive_seed, ExperimentConfig};
use crate::contaminate::{build_contaminated_groups, inject};
use crate::error::{Error, Result};
use crate::index::{build_index, retrieve_topk, write_index, InvertedIndex};
use crate::metrics::{paired_ttest, MetricResult};
use crate::model::{
    featurize, internals, parse_checkpoint, write_checkpoint, Architecture, ScorerParams,
};
use crate::trainer::{
    distill, label_pairs, sample_ranknet_groups, train_teacher, write_train_log, DistillData,
    LossKind, ModelConfig, TrainConfig,
};

#[derive(Debug, Clone)]
pub struct CellFailure {
    pub cell: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ExperimentSummary {
    pub out_dir: PathBuf,
    pub report_path: PathBuf,
    pub models: Vec<String>,
    pub reused_cells: Vec<String>,
    pub failures: Vec<CellFailure>,
}

/// Per-query metric values for one (model, collection) pair.
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub model: String,
    pub collection: String,
    pub metrics: Vec<MetricResult>,
}

pub fn write_eval_csv(record: &EvalRecord) -> String {
    let mut out = String::from("model,collection,metric,query_id,value\n");
    for m in &record.metrics {
        for (qid, v) in &m.per_query {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                record.model, record.collection, m.name, qid, v
            );
        }
    }
    out
}

pub fn parse_eval_csv(text: &str) -> Result<Vec<EvalRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == "model,collection,metric,query_id,value" => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "missing eval CSV header".into(),
            })
        }
    }
    let mut records: Vec<EvalRecord> = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let value: f64 = fields[4].parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("bad value {:?}", fields[4]),
        })?;
        let record = match records
            .iter_mut()
            .find(|r| r.model == fields[0] && r.collection == fields[1])
        {
            Some(r) => r,
            None => {
                records.push(EvalRecord {
                    model: fields[0].to_string(),
                    collection: fields[1].to_string(),
                    metrics: Vec::new(),
                });
                records.last_mut().unwrap()
            }
        };
        let metric = match record.metrics.iter_mut().find(|m| m.name == fields[2]) {
            Some(m) => m,
            None => {
                record.metrics.push(MetricResult {
                    name: fields[2].to_string(),
                    per_query: BTreeMap::new(),
                    aggregate: 0.0,
                });
                record.metrics.last_mut().unwrap()
            }
        };
        metric.per_query.insert(fields[3].to_string(), value);
    }
    for r in &mut records {
        for m in &mut r.metrics {
            m.aggregate = m.per_query.values().sum::<f64>() / m.per_query.len() as f64;
        }
    }
    Ok(records)
}

pub const BASELINE_MODEL: &str = "teacher-clean";
pub const SIG_MARKER: &str = "†";

/// (model family, loss name, contaminated) derived from a cell name.
pub fn parse_model_name(name: &str) -> (String, &'static str, bool) {
    let contaminated = name.contains("-star");
    let parts: Vec<&str> = name.split('-').collect();
    if parts[0] == "teacher" {
        return ("teacher".into(), "lce", contaminated);
    }
    let family = format!("student-{}", parts.get(1).copied().unwrap_or("?"));
    let loss = match parts.get(2).copied() {
        Some("margin_mse") => "margin_mse",
        Some("kl_div") => "kl_div",
        Some("ranknet") => "ranknet",
        _ => "?",
    };
    (family, loss, contaminated)
}

/// Report grid: one row per (collection, model), aggregate metrics, and a
/// dagger on rows whose first metric differs significantly (paired t-test,
/// p < 0.05) from the clean-teacher baseline on the same collection.
pub fn build_report(records: &[EvalRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Evaluation("no evaluation records".into()));
    }
    let metric_names: Vec<&str> = records[0].metrics.iter().map(|m| m.name.as_str()).collect();
    for r in records {
        let names: Vec<&str> = r.metrics.iter().map(|m| m.name.as_str()).collect();
        if names != metric_names {
            return Err(Error::Evaluation(format!(
                "inconsistent metrics for {} on {}",
                r.model, r.collection
            )));
        }
    }
    let mut ordered: Vec<&EvalRecord> = records.iter().collect();
    ordered.sort_by(|a, b| {
        a.collection
            .cmp(&b.collection)
            .then_with(|| model_sort_key(&a.model).cmp(&model_sort_key(&b.model)))
    });
    let mut out = format!("collection,model,loss,contaminated,{},sig_marker\n", {
        metric_names.join(",")
    });
    for r in &ordered {
        let baseline = records
            .iter()
            .find(|b| b.model == BASELINE_MODEL && b.collection == r.collection)
            .ok_or_else(|| {
                Error::Evaluation(format!(
                    "no {BASELINE_MODEL} evaluation for collection {}",
                    r.collection
                ))
            })?;
        let marker = if r.model == BASELINE_MODEL {
            ""
        } else {
            let (a, b) = aligned(&r.metrics[0], &baseline.metrics[0])?;
            if paired_ttest(&a, &b)?.significant {
                SIG_MARKER
            } else {
                ""
            }
        };
        let (family, loss, contaminated) = parse_model_name(&r.model);
        let values: Vec<String> = r.metrics.iter().map(|m| m.aggregate.to_string()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{marker}",
            r.collection,
            family,
            loss,
            contaminated,
            values.join(",")
        );
    }
    Ok(out)
}

/// Sort teachers before students, clean before contaminated, for a stable
/// human-readable row order.
fn model_sort_key(name: &str) -> (u8, String) {
    let family = if name.starts_with("teacher") { 0 } else { 1 };
    (family, name.to_string())
}

fn aligned(a: &MetricResult, b: &MetricResult) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.per_query.len() != b.per_query.len() {
        return Err(Error::Evaluation("per-query metric sets differ".into()));
    }
    let mut xs = Vec::with_capacity(a.per_query.len());
    let mut ys = Vec::with_capacity(b.per_query.len());
    for (qid, x) in &a.per_query {
        let y = b
            .per_query
            .get(qid)
            .ok_or_else(|| Error::Evaluation(format!("query {qid} missing from baseline")))?;
        xs.push(*x);
        ys.push(*y);
    }
    Ok((xs, ys))
}

/// Re-rank the BM25 top `depth` with the scorer; ties break on doc id.
pub fn rerank_run(
    params: &ScorerParams,
    index: &InvertedIndex,
    corpus: &Corpus,
    queries: &[Query],
    depth: usize,
    tag: &str,
) -> Result<Run> {
    let mut run = Run::new(tag);
    for query in queries {
        let candidates = retrieve_topk(index, &query.text, depth);
        if candidates.is_empty() {
            continue;
        }
        let q = featurize(&query.text, params.dim);
        let mut scored: Vec<(String, f64)> = candidates
            .into_iter()
            .map(|(d, _)| {
                let text = &corpus
                    .get(&d)
                    .ok_or_else(|| Error::Data(format!("indexed doc {d} missing from corpus")))?
                    .text;
                let s = internals::forward(params, &q, text).score();
                Ok((d, s))
            })
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        run.add_ranking(query.query_id.clone(), scored)?;
    }
    Ok(run)
}

fn content_hash(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p);
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

struct CellStore {
    checkpoints: PathBuf,
    logs: PathBuf,
}

impl CellStore {
    /// Load the cached cell if its input hash matches, otherwise train.
    fn train_or_load(
        &self,
        name: &str,
        input_hash: &str,
        train: impl FnOnce() -> Result<(ScorerParams, String)>,
    ) -> Result<(ScorerParams, bool)> {
        let ckpt_path = self.checkpoints.join(format!("{name}.ckpt"));
        let meta_path = self.checkpoints.join(format!("{name}.meta"));
        if let (Ok(meta), Ok(bytes)) = (fs::read_to_string(&meta_path), fs::read(&ckpt_path)) {
            if meta.trim() == input_hash {
                if let Ok(params) = parse_checkpoint(&bytes) {
                    return Ok((params, true));
                }
            }
        }
        let (params, log) = train()?;
        fs::write(&ckpt_path, write_checkpoint(&params))?;
        fs::write(&meta_path, format!("{input_hash}\n"))?;
        fs::write(self.logs.join(format!("{name}.train.csv")), log)?;
        Ok((params, false))
    }
}

fn labeled_stream_bytes(labeled: &[crate::trainer::LabeledGroup]) -> Vec<u8> {
    let mut s = String::new();
    for lg in labeled {
        let labels: Vec<String> = lg.labels.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}",
            lg.group.query.query_id,
            lg.group.positive,
            lg.group.negatives.join(","),
            labels.join(",")
        );
    }
    s.into_bytes()
}

fn ranked_stream_bytes(ranked: &[crate::trainer::RankNetGroup]) -> Vec<u8> {
    let mut s = String::new();
    for rg in ranked {
        let scores: Vec<String> = rg.teacher_scores.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(
            s,
            "{}\t{}\t{}",
            rg.query.query_id,
            rg.doc_ids.join(","),
            scores.join(",")
        );
    }
    s.into_bytes()
}

pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentSummary> {
    config.validate()?;
    if config.synthetic.base_group_size != config.train.teacher_group_size {
        return Err(Error::Config(
            "synthetic.base_group_size must equal train.teacher_group_size".into(),
        ));
    }
    for spec in &config.contamination {
        if spec.group_size != config.train.teacher_group_size {
            return Err(Error::Config(format!(
                "contamination group_size {} must equal train.teacher_group_size {}",
                spec.group_size, config.train.teacher_group_size
            )));
        }
    }

    let data_dir = out_dir.join("data");
    let store = CellStore {
        checkpoints: out_dir.join("checkpoints"),
        logs: out_dir.join("logs"),
    };
    let runs_dir = out_dir.join("runs");
    let evals_dir = out_dir.join("evals");
    for d in [&data_dir, &store.checkpoints, &store.logs, &runs_dir, &evals_dir] {
        fs::create_dir_all(d)?;
    }
    fs::write(out_dir.join("config.toml"), config.to_toml())?;

    // Data generation. The master seed drives the generator; the synthetic
    // seed field acts as an offset so variants can share a master seed.
    let mut syn = config.synthetic.clone();
    syn.seed = derive_seed(config.master_seed, "synthetic").wrapping_add(syn.seed);
    let data = crate::synthetic::generate(&syn)?;
    fs::write(
        data_dir.join("corpus.tsv"),
        write_id_text(data.corpus.docs().iter().map(|d| (d.doc_id.clone(), d.text.clone()))),
    )?;
    fs::write(
        data_dir.join("base_queries.tsv"),
        write_id_text(data.base_queries.iter().map(|q| (q.query_id.clone(), q.text.clone()))),
    )?;
    fs::write(data_dir.join("base_groups.tsv"), write_groups(&data.base_groups))?;
    for c in &data.collections {
        let cdir = data_dir.join(&c.name);
        fs::create_dir_all(&cdir)?;
        fs::write(cdir.join("qrels.txt"), write_qrels(&c.judgments))?;
        fs::write(
            cdir.join("queries.tsv"),
            write_id_text(c.queries.iter().map(|q| (q.query_id.clone(), q.text.clone()))),
        )?;
    }

    let index = build_index(&data.corpus, config.index.k1, config.index.b)?;
    fs::write(data_dir.join("index.txt"), write_index(&index))?;

    let model_config = ModelConfig {
        dim: config.model.dim,
        hidden: config.model.hidden,
    };
    let teacher_stream: &[TrainingGroup] = if config.train.teacher_group_count > 0 {
        let n = config.train.teacher_group_count.min(data.base_groups.len());
        &data.base_groups[..n]
    } else {
        &data.base_groups
    };
    let base_stream_bytes = write_groups(teacher_stream).into_bytes();
    let static_key = format!(
        "dim={} hidden={} batch={} lr={} warmup={} wd={}",
        config.model.dim,
        config.model.hidden,
        config.train.batch_queries,
        config.train.base_lr,
        config.train.warmup_fraction,
        config.train.weight_decay,
    );

    let mut failures: Vec<CellFailure> = Vec::new();
    let mut reused: Vec<String> = Vec::new();
    let fail = |failures: &mut Vec<CellFailure>, cell: &str, e: Error| {
        failures.push(CellFailure {
            cell: cell.to_string(),
            message: e.to_string(),
        });
    };

    let train_config = |loss: LossKind, group_size: usize, seed: u64| {
        let mut c = TrainConfig::new(loss, seed);
        c.batch_queries = config.train.batch_queries;
        c.base_lr = config.train.base_lr;
        c.warmup_fraction = config.train.warmup_fraction;
        c.group_size = group_size;
        c.kl_temperature = config.train.kl_temperature;
        c.weight_decay = config.train.weight_decay;
        c
    };

    // Teachers: clean, plus one per contamination source.
    let mut teachers: Vec<(String, ScorerParams)> = Vec::new();
    {
        let name = BASELINE_MODEL;
        // Clean and contaminated teachers share an init seed so their
        // comparison isolates the stream difference.
        let seed = derive_seed(config.master_seed, "teacher");
        let hash = content_hash(&[
            b"teacher",
            static_key.as_bytes(),
            &seed.to_le_bytes(),
            &base_stream_bytes,
        ]);
        let cfg = train_config(LossKind::Lce, config.train.teacher_group_size, seed);
        match store.train_or_load(name, &hash, || {
            let (p, log) = train_teacher(teacher_stream, &data.corpus, &model_config, &cfg)?;
            Ok((p, write_train_log(&log)))
        }) {
            Ok((params, was_cached)) => {
                if was_cached {
                    reused.push(name.to_string());
                }
                teachers.push((name.to_string(), params));
            }
            Err(e) => fail(&mut failures, name, e),
        }
    }

    let mut contamination_csv = String::from(
        "source,base_groups,contaminated_available,contaminated_used,achieved_fraction\n",
    );
    for spec in &config.contamination {
        let name = format!("teacher-star-{}", spec.source_collection);
        let collection = match data.collections.iter().find(|c| c.name == spec.source_collection) {
            Some(c) => c,
            None => {
                fail(
                    &mut failures,
                    &name,
                    Error::Config(format!("unknown source collection {}", spec.source_collection)),
                );
                continue;
            }
        };
        let mut effective = spec.clone();
        effective.seed = derive_seed(config.master_seed, &format!("contaminate-{}", spec.source_collection))
            .wrapping_add(spec.seed);
        let contaminated =
            match build_contaminated_groups(collection, &data.corpus, &index, &effective) {
                Ok(g) => g,
                Err(e) => {
                    fail(&mut failures, &name, e);
                    continue;
                }
            };
        fs::write(
            data_dir.join(format!("{}-contaminated_groups.tsv", spec.source_collection)),
            write_groups(&contaminated),
        )?;
        let inject_seed =
            derive_seed(config.master_seed, &format!("inject-{}", spec.source_collection));
        let (mixed, achieved) =
            match inject(teacher_stream, &contaminated, spec.max_fraction, inject_seed) {
                Ok(v) => v,
                Err(e) => {
                    fail(&mut failures, &name, e);
                    continue;
                }
            };
        let used = mixed.len() - teacher_stream.len();
        let _ = writeln!(
            contamination_csv,
            "{},{},{},{},{}",
            spec.source_collection,
            teacher_stream.len(),
            contaminated.len(),
            used,
            achieved
        );
        fs::write(
            data_dir.join(format!("{}-mixed_groups.tsv", spec.source_collection)),
            write_groups(&mixed),
        )?;

        let seed = derive_seed(config.master_seed, "teacher");
        let mixed_bytes = write_groups(&mixed).into_bytes();
        let hash = content_hash(&[
            b"teacher",
            static_key.as_bytes(),
            &seed.to_le_bytes(),
            &mixed_bytes,
        ]);
        let cfg = train_config(LossKind::Lce, config.train.teacher_group_size, seed);
        match store.train_or_load(&name, &hash, || {
            let (p, log) = train_teacher(&mixed, &data.corpus, &model_config, &cfg)?;
            Ok((p, write_train_log(&log)))
        }) {
            Ok((params, was_cached)) => {
                if was_cached {
                    reused.push(name.clone());
                }
                teachers.push((name.clone(), params));
            }
            Err(e) => fail(&mut failures, &name, e),
        }
    }
    fs::write(out_dir.join("contamination.csv"), contamination_csv)?;

    // Students: per teacher, three losses by two architectures. The
    // score-matching losses learn from teacher labels over the clean base
    // groups; RankNet learns teacher orderings over BM25 candidates.
    let distill_groups: &[TrainingGroup] = if config.train.distill_group_count > 0 {
        let n = config.train.distill_group_count.min(data.base_groups.len());
        &data.base_groups[..n]
    } else {
        &data.base_groups
    };
    let mut models: Vec<(String, ScorerParams)> = teachers.clone();
    for (teacher_name, teacher) in &teachers {
        let origin = teacher_name
            .strip_prefix("teacher-")
            .unwrap_or(teacher_name);
        let labeled = match label_pairs(teacher, &data.corpus, distill_groups, teacher_name) {
            Ok(l) => l,
            Err(e) => {
                fail(&mut failures, &format!("label-{teacher_name}"), e);
                continue;
            }
        };
        let labeled_bytes = labeled_stream_bytes(&labeled);
        // Shared across teachers: paired clean/star students see the same
        // candidate positions, differing only in the teacher's ordering.
        let ranknet_seed = derive_seed(config.master_seed, "ranknet-sample");
        let ranked = match sample_ranknet_groups(
            teacher,
            &index,
            &data.corpus,
            &data.base_queries,
            config.train.ranknet_topk,
            config.train.ranknet_group_size,
            config.train.ranknet_rounds_per_query,
            ranknet_seed,
        ) {
            Ok((g, _skipped)) => g,
            Err(e) => {
                fail(&mut failures, &format!("ranknet-sample-{teacher_name}"), e);
                continue;
            }
        };
        let ranked_bytes = ranked_stream_bytes(&ranked);

        for arch in [Architecture::Joint, Architecture::Dual] {
            for loss in [LossKind::MarginMse, LossKind::KlDiv, LossKind::RankNet] {
                let name = format!("student-{}-{}-{origin}", arch.as_str(), loss.as_str());
                // Init seed shared across origins; see the teacher cells.
                let seed = derive_seed(
                    config.master_seed,
                    &format!("student-{}-{}", arch.as_str(), loss.as_str()),
                );
                let (group_size, stream_bytes, data_ref) = match loss {
                    LossKind::RankNet => (
                        config.train.ranknet_group_size,
                        &ranked_bytes,
                        DistillData::Ranked(&ranked),
                    ),
                    _ => (
                        config.train.teacher_group_size,
                        &labeled_bytes,
                        DistillData::Labeled(&labeled),
                    ),
                    };
                let hash = content_hash(&[
                    b"student",
                    static_key.as_bytes(),
                    loss.as_str().as_bytes(),
                    arch.as_str().as_bytes(),
                    &config.train.kl_temperature.to_le_bytes(),
                    &seed.to_le_bytes(),
                    stream_bytes,
                ]);
                let cfg = train_config(loss, group_size, seed);
                match store.train_or_load(&name, &hash, || {
                    let (p, log) = distill(arch, &data_ref, &data.corpus, &model_config, &cfg)?;
                    Ok((p, write_train_log(&log)))
                }) {
                    Ok((params, was_cached)) => {
                        if was_cached {
                            reused.push(name.clone());
                        }
                        models.push((name, params));
                    }
                    Err(e) => fail(&mut failures, &name, e),
                }
            }
        }
    }

    // Evaluate every model on every target collection.
    let settings = config.metrics.settings();
    let mut records: Vec<EvalRecord> = Vec::new();
    for (name, params) in &models {
        for c in &data.collections {
            let cell = format!("eval-{name}-{}", c.name);
            let run = match rerank_run(
                params,
                &index,
                &data.corpus,
                &c.queries,
                settings.recall_k,
                name,
            ) {
                Ok(r) => r,
                Err(e) => {
                    fail(&mut failures, &cell, e);
                    continue;
                }
            };
            fs::write(runs_dir.join(format!("{name}__{}.run", c.name)), write_run(&run))?;
            let metrics = match crate::metrics::evaluate_run(&run, c, &settings) {
                Ok(m) => m,
                Err(e) => {
                    fail(&mut failures, &cell, e);
                    continue;
                }
            };
            let record = EvalRecord {
                model: name.clone(),
                collection: c.name.clone(),
                metrics,
            };
            fs::write(
                evals_dir.join(format!("{name}__{}.csv", c.name)),
                write_eval_csv(&record),
            )?;
            records.push(record);
        }
    }

    let report_path = out_dir.join("report.csv");
    match build_report(&records) {
        Ok(report) => fs::write(&report_path, report)?,
        Err(e) => fail(&mut failures, "report", e),
    }

    Ok(ExperimentSummary {
        out_dir: out_dir.to_path_buf(),
        report_path,
        models: models.into_iter().map(|(n, _)| n).collect(),
        reused_cells: reused,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::synthetic::SyntheticConfig;

    fn tiny_config() -> ExperimentConfig {
        let mut config = ExperimentConfig::default();
        config.master_seed = 11;
        config.synthetic = SyntheticConfig {
            n_topics: 4,
            docs_per_topic: 24,
            queries_per_topic: 2,
            vocab_per_topic: 10,
            base_queries_per_topic: 3,
            background_vocab: 100,
            topic_terms_per_doc: 5,
            background_terms_per_doc: 5,
            query_terms: 3,
            focused_per_query: 2,
            peripheral_per_query: 4,
            judged_nonrelevant_per_query: 3,
            base_groups: 480,
            ..SyntheticConfig::default()
        };
        config.model.dim = 256;
        config.model.hidden = 8;
        config.train.batch_queries = 16;
        config.train.base_lr = 0.02;
        config.train.ranknet_topk = 10;
        config.train.ranknet_group_size = 4;
        config.train.ranknet_rounds_per_query = 40;
        config
    }

    fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut files = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                    files.push((rel, fs::read(&p).unwrap()));
                }
            }
        }
        files.sort();
        files
    }

    #[test]
    fn same_master_seed_is_byte_identical() {
        let config = tiny_config();
        let t = tempfile::tempdir().unwrap();
        let a = t.path().join("a");
        let b = t.path().join("b");
        let sa = run_experiment(&config, &a).unwrap();
        let sb = run_experiment(&config, &b).unwrap();
        assert!(sa.failures.is_empty(), "{:?}", sa.failures);
        assert!(sb.failures.is_empty());
        assert_eq!(read_tree(&a), read_tree(&b));
    }

    #[test]
    fn rerun_reuses_cells_and_is_stable() {
        let config = tiny_config();
        let t = tempfile::tempdir().unwrap();
        let dir = t.path().join("out");
        let first = run_experiment(&config, &dir).unwrap();
        assert!(first.reused_cells.is_empty());
        let before = read_tree(&dir);
        let second = run_experiment(&config, &dir).unwrap();
        assert_eq!(second.reused_cells.len(), second.models.len());
        assert_eq!(before, read_tree(&dir));
    }

    #[test]
    fn different_master_seed_changes_report() {
        let config = tiny_config();
        let mut other = tiny_config();
        other.master_seed = 12;
        let t = tempfile::tempdir().unwrap();
        let a = run_experiment(&config, &t.path().join("a")).unwrap();
        let b = run_experiment(&other, &t.path().join("b")).unwrap();
        assert_ne!(
            fs::read(&a.report_path).unwrap(),
            fs::read(&b.report_path).unwrap()
        );
    }

    #[test]
    fn unknown_source_is_recorded_not_fatal() {
        let mut config = tiny_config();
        config.contamination[0].source_collection = "nope".into();
        let t = tempfile::tempdir().unwrap();
        let s = run_experiment(&config, &t.path().join("out")).unwrap();
        assert!(s.failures.iter().any(|f| f.cell == "teacher-star-nope"));
        // The clean half of the grid still trains and reports.
        assert!(s.models.iter().any(|m| m == "student-joint-ranknet-clean"));
        assert!(s.report_path.exists());
    }

    #[test]
    fn report_has_expected_grid() {
        let config = tiny_config();
        let t = tempfile::tempdir().unwrap();
        let s = run_experiment(&config, &t.path().join("out")).unwrap();
        assert!(s.failures.is_empty(), "{:?}", s.failures);
        // 2 teachers + 2 * 6 students.
        assert_eq!(s.models.len(), 14);
        let report = fs::read_to_string(&s.report_path).unwrap();
        let mut lines = report.lines();
        assert_eq!(
            lines.next().unwrap(),
            "collection,model,loss,contaminated,nDCG@10,MAP,R@100,sig_marker"
        );
        assert_eq!(lines.count(), 14);
        assert!(report.contains("teacher,lce,false"));
        assert!(report.contains("teacher,lce,true"));
        assert!(report.contains("student-dual,kl_div,true"));
    }

    #[test]
    fn eval_csv_round_trips() {
        let mut per_query = BTreeMap::new();
        per_query.insert("q1".to_string(), 0.25);
        per_query.insert("q2".to_string(), 1.0);
        let record = EvalRecord {
            model: "teacher-clean".into(),
            collection: "synthetic".into(),
            metrics: vec![MetricResult {
                name: "nDCG@10".into(),
                per_query: per_query.clone(),
                aggregate: 0.625,
            }],
        };
        let text = write_eval_csv(&record);
        let back = parse_eval_csv(&text).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].metrics[0].per_query, per_query);
        assert_eq!(back[0].metrics[0].aggregate, 0.625);
    }
}
