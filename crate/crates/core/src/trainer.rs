//! Training loops: LCE teacher training over clean or contaminated streams,
//! teacher labeling, RankNet group sampling from teacher rankings, and
//! student distillation.
//!
//! All loops are single-threaded and bit-deterministic given (data, config,
//! seed). Each stream is consumed once; the learning-rate schedule is sized
//! from the stream length.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::collection::{Corpus, Query, TrainingGroup};
use crate::error::{Error, Result};
use crate::index::{retrieve_topk, InvertedIndex};
use crate::losses::{kl_div_loss, lce_loss, margin_mse_loss, ranknet_loss};
use crate::model::{
    self, adamw_step, featurize, internals, lr_at_with_warmup, Architecture, Grads, OptimizerState,
    ScorerParams, ADAM_WEIGHT_DECAY,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Lce,
    MarginMse,
    KlDiv,
    RankNet,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Lce => "lce",
            LossKind::MarginMse => "margin_mse",
            LossKind::KlDiv => "kl_div",
            LossKind::RankNet => "ranknet",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lce" => Ok(LossKind::Lce),
            "margin_mse" => Ok(LossKind::MarginMse),
            "kl_div" => Ok(LossKind::KlDiv),
            "ranknet" => Ok(LossKind::RankNet),
            other => Err(Error::Usage(format!("unknown loss {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_queries: usize,
    pub base_lr: f64,
    pub warmup_fraction: f64,
    /// Lower bound on schedule length; the actual step count is derived
    /// from the stream and must reach at least 10.
    pub total_steps: u64,
    pub group_size: usize,
    pub loss_kind: LossKind,
    pub seed: u64,
    pub kl_temperature: f64,
    pub weight_decay: f64,
}

impl TrainConfig {
    pub fn new(loss_kind: LossKind, seed: u64) -> Self {
        Self {
            batch_queries: 32,
            base_lr: 1e-5,
            warmup_fraction: 0.10,
            total_steps: 10,
            group_size: 2,
            loss_kind,
            seed,
            kl_temperature: 1.0,
            weight_decay: ADAM_WEIGHT_DECAY,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_queries < 1 {
            return Err(Error::Config("batch_queries must be >= 1".into()));
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return Err(Error::Config(format!(
                "warmup_fraction {} outside (0, 1)",
                self.warmup_fraction
            )));
        }
        if self.total_steps < 10 {
            return Err(Error::Config("total_steps must be >= 10".into()));
        }
        if self.group_size < 2 {
            return Err(Error::Config("group_size must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ModelConfig {
    pub dim: usize,
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: model::DEFAULT_DIM,
            hidden: model::DEFAULT_HIDDEN,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainLogEntry {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

pub fn write_train_log(entries: &[TrainLogEntry]) -> String {
    let mut out = String::from("step,lr,loss\n");
    for e in entries {
        let _ = writeln!(out, "{},{},{}", e.step, e.lr, e.loss);
    }
    out
}

/// One training unit: a query, its documents in group order, and optional
/// teacher labels.
struct GroupExample {
    query_id: String,
    query_text: String,
    doc_texts: Vec<String>,
    labels: Option<Vec<f64>>,
}

fn doc_text(corpus: &Corpus, doc_id: &str) -> Result<String> {
    corpus
        .get(doc_id)
        .map(|d| d.text.clone())
        .ok_or_else(|| Error::Data(format!("missing document text for {doc_id}")))
}

fn lce_examples(groups: &[TrainingGroup], corpus: &Corpus) -> Result<Vec<GroupExample>> {
    groups
        .iter()
        .map(|g| {
            let mut doc_texts = Vec::with_capacity(g.group_size());
            doc_texts.push(doc_text(corpus, &g.positive)?);
            for n in &g.negatives {
                doc_texts.push(doc_text(corpus, n)?);
            }
            Ok(GroupExample {
                query_id: g.query.query_id.clone(),
                query_text: g.query.text.clone(),
                doc_texts,
                labels: None,
            })
        })
        .collect()
}

/// A training group with the teacher's scalar relevance scores attached,
/// aligned as [positive, negatives...].
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGroup {
    pub group: TrainingGroup,
    pub labels: Vec<f64>,
    pub teacher_tag: String,
}

fn labeled_examples(labeled: &[LabeledGroup], corpus: &Corpus) -> Result<Vec<GroupExample>> {
    labeled
        .iter()
        .map(|lg| {
            let g = &lg.group;
            if lg.labels.len() != g.group_size() {
                return Err(Error::Config(format!(
                    "label length {} does not match group size {}",
                    lg.labels.len(),
                    g.group_size()
                )));
            }
            let mut doc_texts = Vec::with_capacity(g.group_size());
            doc_texts.push(doc_text(corpus, &g.positive)?);
            for n in &g.negatives {
                doc_texts.push(doc_text(corpus, n)?);
            }
            Ok(GroupExample {
                query_id: g.query.query_id.clone(),
                query_text: g.query.text.clone(),
                doc_texts,
                labels: Some(lg.labels.clone()),
            })
        })
        .collect()
}

/// Documents sampled from the teacher-re-ranked top-k, stored in descending
/// teacher-score order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankNetGroup {
    pub query: Query,
    pub doc_ids: Vec<String>,
    pub teacher_scores: Vec<f64>,
}

fn ranked_examples(ranked: &[RankNetGroup], corpus: &Corpus) -> Result<Vec<GroupExample>> {
    ranked
        .iter()
        .map(|rg| {
            let doc_texts = rg
                .doc_ids
                .iter()
                .map(|d| doc_text(corpus, d))
                .collect::<Result<Vec<_>>>()?;
            Ok(GroupExample {
                query_id: rg.query.query_id.clone(),
                query_text: rg.query.text.clone(),
                doc_texts,
                labels: None,
            })
        })
        .collect()
}

fn group_loss(
    scores: &[f64],
    example: &GroupExample,
    config: &TrainConfig,
) -> Result<(f64, Vec<f64>)> {
    match config.loss_kind {
        LossKind::Lce => lce_loss(scores),
        LossKind::RankNet => ranknet_loss(scores),
        LossKind::MarginMse => {
            let labels = example.labels.as_ref().ok_or_else(|| {
                Error::Config("margin_mse requires teacher labels".into())
            })?;
            margin_mse_loss(scores, labels)
        }
        LossKind::KlDiv => {
            let labels = example
                .labels
                .as_ref()
                .ok_or_else(|| Error::Config("kl_div requires teacher labels".into()))?;
            kl_div_loss(scores, labels, config.kl_temperature)
        }
    }
}

/// Shared loop: batches of `batch_queries` groups, mean loss over the
/// batch, AdamW with the warmup/decay schedule sized by the stream.
fn run_loop(
    params: &mut ScorerParams,
    examples: &[GroupExample],
    config: &TrainConfig,
) -> Result<Vec<TrainLogEntry>> {
    config.validate()?;
    if examples.is_empty() {
        return Ok(Vec::new());
    }
    let total_steps = (examples.len() as u64).div_ceil(config.batch_queries as u64);
    if total_steps < 10 {
        return Err(Error::Config(format!(
            "stream of {} groups yields only {total_steps} steps (minimum 10)",
            examples.len()
        )));
    }
    let mut opt = OptimizerState::new(params, config.base_lr, config.weight_decay);
    let mut log = Vec::with_capacity(total_steps as usize);
    for (step, batch) in examples.chunks(config.batch_queries).enumerate() {
        let step = step as u64;
        let lr = lr_at_with_warmup(step, total_steps, config.base_lr, config.warmup_fraction)?;
        let mut grads = Grads::zeros(params);
        let inv_batch = 1.0 / batch.len() as f64;
        let mut batch_loss = 0.0;
        for example in batch {
            let q = featurize(&example.query_text, params.dim);
            let forwards: Vec<internals::Forward> = example
                .doc_texts
                .iter()
                .map(|d| internals::forward(params, &q, d))
                .collect();
            let scores: Vec<f64> = forwards.iter().map(|f| f.score()).collect();
            let (loss, dscores) = group_loss(&scores, example, config)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    step,
                    message: format!("non-finite loss on group for query {}", example.query_id),
                });
            }
            batch_loss += loss * inv_batch;
            for (fwd, d) in forwards.iter().zip(&dscores) {
                internals::backward(params, fwd, d * inv_batch, &mut grads);
            }
        }
        adamw_step(params, &grads, &mut opt, lr)?;
        log.push(TrainLogEntry {
            step,
            lr,
            loss: batch_loss,
        });
    }
    Ok(log)
}

/// Train a joint teacher with LCE over the (possibly contaminated) stream.
pub fn train_teacher(
    stream: &[TrainingGroup],
    corpus: &Corpus,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<(ScorerParams, Vec<TrainLogEntry>)> {
    if config.loss_kind != LossKind::Lce {
        return Err(Error::Config("teacher training uses the lce loss".into()));
    }
    for g in stream {
        if g.group_size() != config.group_size {
            return Err(Error::Config(format!(
                "group of size {} in a stream configured for {}",
                g.group_size(),
                config.group_size
            )));
        }
    }
    let mut params = ScorerParams::init(
        Architecture::Joint,
        model_config.dim,
        model_config.hidden,
        config.seed,
    );
    let examples = lce_examples(stream, corpus)?;
    let log = run_loop(&mut params, &examples, config)?;
    Ok((params, log))
}

/// Attach the teacher's scalar score to every (query, doc) of every group.
pub fn label_pairs(
    teacher: &ScorerParams,
    corpus: &Corpus,
    groups: &[TrainingGroup],
    teacher_tag: &str,
) -> Result<Vec<LabeledGroup>> {
    if teacher.arch != Architecture::Joint {
        return Err(Error::Usage("labeling requires a joint teacher".into()));
    }
    groups
        .iter()
        .map(|g| {
            let q = featurize(&g.query.text, teacher.dim);
            let mut labels = Vec::with_capacity(g.group_size());
            labels.push(internals::forward(teacher, &q, &doc_text(corpus, &g.positive)?).score());
            for n in &g.negatives {
                labels.push(internals::forward(teacher, &q, &doc_text(corpus, n)?).score());
            }
            Ok(LabeledGroup {
                group: g.clone(),
                labels,
                teacher_tag: teacher_tag.to_string(),
            })
        })
        .collect()
}

/// Re-rank the BM25 top-k with the teacher, then sample `rounds` groups per
/// query without replacement, ordered by teacher score. Queries with fewer
/// than `group_size` retrievable documents are skipped and counted.
#[allow(clippy::too_many_arguments)]
pub fn sample_ranknet_groups(
    teacher: &ScorerParams,
    index: &InvertedIndex,
    corpus: &Corpus,
    queries: &[Query],
    k: usize,
    group_size: usize,
    rounds: usize,
    seed: u64,
) -> Result<(Vec<RankNetGroup>, usize)> {
    if k < group_size {
        return Err(Error::Config(format!(
            "top-k {k} smaller than group_size {group_size}"
        )));
    }
    if teacher.arch != Architecture::Joint {
        return Err(Error::Usage("ranknet sampling requires a joint teacher".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = Vec::new();
    let mut skipped = 0usize;
    for query in queries {
        let candidates = retrieve_topk(index, &query.text, k);
        if candidates.len() < group_size {
            skipped += 1;
            continue;
        }
        let q = featurize(&query.text, teacher.dim);
        let mut reranked: Vec<(String, f64)> = candidates
            .into_iter()
            .map(|(d, _)| {
                let text = doc_text(corpus, &d)?;
                Ok((d, internals::forward(teacher, &q, &text).score()))
            })
            .collect::<Result<Vec<_>>>()?;
        reranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        for _ in 0..rounds {
            let picks = rand::seq::index::sample(&mut rng, reranked.len(), group_size);
            let mut picks: Vec<usize> = picks.iter().collect();
            picks.sort_unstable();
            groups.push(RankNetGroup {
                query: query.clone(),
                doc_ids: picks.iter().map(|&i| reranked[i].0.clone()).collect(),
                teacher_scores: picks.iter().map(|&i| reranked[i].1).collect(),
            });
        }
    }
    Ok((groups, skipped))
}

/// Distillation data: teacher-labeled groups for the score-matching losses,
/// teacher-ordered groups for RankNet.
#[derive(Debug, Clone)]
pub enum DistillData<'a> {
    Labeled(&'a [LabeledGroup]),
    Ranked(&'a [RankNetGroup]),
}

/// Train a student (joint or dual) against the chosen distillation loss.
pub fn distill(
    student_arch: Architecture,
    data: &DistillData,
    corpus: &Corpus,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<(ScorerParams, Vec<TrainLogEntry>)> {
    let examples = match (config.loss_kind, data) {
        (LossKind::MarginMse | LossKind::KlDiv, DistillData::Labeled(labeled)) => {
            labeled_examples(labeled, corpus)?
        }
        (LossKind::RankNet, DistillData::Ranked(ranked)) => ranked_examples(ranked, corpus)?,
        (LossKind::Lce, _) => {
            return Err(Error::Config("lce is a teacher loss, not a distillation loss".into()))
        }
        (kind, _) => {
            return Err(Error::Config(format!(
                "{} loss does not match the provided stream",
                kind.as_str()
            )))
        }
    };
    let mut params = ScorerParams::init(
        student_arch,
        model_config.dim,
        model_config.hidden,
        config.seed,
    );
    let log = run_loop(&mut params, &examples, config)?;
    Ok((params, log))
}

/// Distill from explicit initial parameters (used for fixed-point checks).
pub fn distill_from(
    init: ScorerParams,
    data: &DistillData,
    corpus: &Corpus,
    config: &TrainConfig,
) -> Result<(ScorerParams, Vec<TrainLogEntry>)> {
    let examples = match (config.loss_kind, data) {
        (LossKind::MarginMse | LossKind::KlDiv, DistillData::Labeled(labeled)) => {
            labeled_examples(labeled, corpus)?
        }
        (LossKind::RankNet, DistillData::Ranked(ranked)) => ranked_examples(ranked, corpus)?,
        _ => return Err(Error::Config("loss does not match the provided stream".into())),
    };
    let mut params = init;
    let log = run_loop(&mut params, &examples, config)?;
    Ok((params, log))
}

/// Mean LCE loss of a scorer over training groups, without updating.
pub fn teacher_mean_loss(
    params: &ScorerParams,
    corpus: &Corpus,
    groups: &[TrainingGroup],
) -> Result<f64> {
    let examples = lce_examples(groups, corpus)?;
    mean_loss(params, &examples, &TrainConfig::new(LossKind::Lce, 0))
}

/// Mean distillation loss over a stream, without updating.
pub fn distill_mean_loss(
    params: &ScorerParams,
    corpus: &Corpus,
    data: &DistillData,
    loss_kind: LossKind,
    kl_temperature: f64,
) -> Result<f64> {
    let examples = match data {
        DistillData::Labeled(labeled) => labeled_examples(labeled, corpus)?,
        DistillData::Ranked(ranked) => ranked_examples(ranked, corpus)?,
    };
    let mut cfg = TrainConfig::new(loss_kind, 0);
    cfg.kl_temperature = kl_temperature;
    mean_loss(params, &examples, &cfg)
}

fn mean_loss(params: &ScorerParams, examples: &[GroupExample], cfg: &TrainConfig) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for example in examples {
        let q = featurize(&example.query_text, params.dim);
        let scores: Vec<f64> = example
            .doc_texts
            .iter()
            .map(|d| internals::forward(params, &q, d).score())
            .collect();
        total += group_loss(&scores, example, cfg)?.0;
    }
    Ok(total / examples.len() as f64)
}
