//! Command-line front end: each subcommand exposes one pipeline stage, and
//! `run` drives the whole experiment grid from a TOML config.
//!
//! Exit codes: 0 on success, 1 on runtime failure (bad data, failed cells),
//! 2 on usage errors.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rankdistill::collection::{
    collection_from_qrels, parse_groups, parse_id_text, parse_run, write_groups, write_id_text,
    write_qrels, write_run, Corpus, Document, Query,
};
use rankdistill::config::{derive_seed, ExperimentConfig};
use rankdistill::contaminate::{build_contaminated_groups, inject, ContaminationSpec};
use rankdistill::error::Error;
use rankdistill::experiment::{
    build_report, parse_eval_csv, rerank_run, run_experiment, write_eval_csv, EvalRecord,
};
use rankdistill::index::{build_index, parse_index, write_index, DEFAULT_B, DEFAULT_K1};
use rankdistill::metrics::{evaluate_run, MetricSettings};
use rankdistill::model::{parse_checkpoint, write_checkpoint, Architecture};
use rankdistill::synthetic::{generate, SyntheticConfig};
use rankdistill::trainer::{
    distill, label_pairs, sample_ranknet_groups, train_teacher, write_train_log, DistillData,
    LossKind, ModelConfig, TrainConfig,
};

#[derive(Parser)]
#[command(name = "rankdistill", version, about = "Contamination-in-distillation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CorpusArg {
    /// Corpus TSV (doc_id<TAB>text).
    #[arg(long)]
    corpus: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 32)]
    batch_queries: usize,
    #[arg(long, default_value_t = 1e-5)]
    lr: f64,
    #[arg(long, default_value_t = 0.10)]
    warmup_fraction: f64,
    #[arg(long, default_value_t = 2)]
    group_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4096)]
    dim: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
}

impl TrainArgs {
    fn config(&self, loss: LossKind) -> TrainConfig {
        let mut c = TrainConfig::new(loss, self.seed);
        c.batch_queries = self.batch_queries;
        c.base_lr = self.lr;
        c.warmup_fraction = self.warmup_fraction;
        c.group_size = self.group_size;
        c
    }

    fn model(&self) -> ModelConfig {
        ModelConfig {
            dim: self.dim,
            hidden: self.hidden,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus, collections and base training groups.
    Generate {
        /// Experiment config TOML; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build a BM25 inverted index from a corpus TSV.
    Index {
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long, default_value_t = DEFAULT_K1)]
        k1: f64,
        #[arg(long, default_value_t = DEFAULT_B)]
        b: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a test collection into training groups; optionally inject them
    /// into a base stream.
    Contaminate {
        #[arg(long)]
        qrels: PathBuf,
        /// Query TSV for the collection in --qrels.
        #[arg(long)]
        queries: PathBuf,
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long)]
        index: PathBuf,
        #[arg(long, default_value_t = 2)]
        cutoff: u32,
        #[arg(long, default_value_t = 2)]
        group_size: usize,
        #[arg(long, default_value_t = 1.0)]
        max_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        bm25_depth: usize,
        /// Base training-group TSV to inject into.
        #[arg(long)]
        base_groups: Option<PathBuf>,
        /// Query TSV resolving base-group query ids.
        #[arg(long)]
        base_queries: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an LCE teacher over a training-group stream.
    TrainTeacher {
        #[arg(long)]
        groups: PathBuf,
        /// Query TSV resolving group query ids.
        #[arg(long)]
        queries: PathBuf,
        #[command(flatten)]
        corpus: CorpusArg,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
        /// Optional training-log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Distill a student from a teacher checkpoint.
    Distill {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        loss: String,
        #[arg(long, default_value = "joint")]
        arch: String,
        /// Training-group TSV (margin_mse / kl_div streams).
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(long)]
        queries: PathBuf,
        #[command(flatten)]
        corpus: CorpusArg,
        /// Index file (ranknet sampling).
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 20)]
        topk: usize,
        #[arg(long, default_value_t = 20)]
        rounds_per_query: usize,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Re-rank BM25 candidates with a checkpoint into a run file.
    Rerank {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 100)]
        depth: usize,
        #[arg(long, default_value = "rankdistill")]
        tag: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a run file against qrels.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, default_value_t = 10)]
        ndcg_k: usize,
        #[arg(long, default_value_t = 100)]
        recall_k: usize,
        #[arg(long, default_value_t = 2)]
        cutoff: u32,
        /// Model name recorded in the CSV; defaults to the run tag.
        #[arg(long)]
        model: Option<String>,
        /// Collection name recorded in the CSV; defaults to the qrels stem.
        #[arg(long)]
        collection: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Combine per-model evaluation CSVs into the report grid.
    Report {
        /// Evaluation CSV files.
        #[arg(long, required = true, num_args = 1..)]
        evals: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full experiment grid from a config.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; defaults to the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_corpus(path: &Path) -> anyhow::Result<Corpus> {
    let text = fs::read_to_string(path)?;
    let docs = parse_id_text(&text)?
        .into_iter()
        .map(|(doc_id, text)| Document { doc_id, text })
        .collect();
    Ok(Corpus::new(docs)?)
}

fn load_queries(path: &Path) -> anyhow::Result<Vec<Query>> {
    let text = fs::read_to_string(path)?;
    Ok(parse_id_text(&text)?
        .into_iter()
        .map(|(query_id, text)| Query { query_id, text })
        .collect())
}

fn query_map(queries: &[Query]) -> HashMap<String, String> {
    queries
        .iter()
        .map(|q| (q.query_id.clone(), q.text.clone()))
        .collect()
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unnamed".into())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Generate { config, out, seed } => {
            let mut config = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(s) = seed {
                config.master_seed = s;
            }
            let mut syn: SyntheticConfig = config.synthetic.clone();
            syn.seed = derive_seed(config.master_seed, "synthetic").wrapping_add(syn.seed);
            let data = generate(&syn)?;
            fs::create_dir_all(&out)?;
            fs::write(
                out.join("corpus.tsv"),
                write_id_text(data.corpus.docs().iter().map(|d| (d.doc_id.clone(), d.text.clone()))),
            )?;
            fs::write(
                out.join("base_queries.tsv"),
                write_id_text(data.base_queries.iter().map(|q| (q.query_id.clone(), q.text.clone()))),
            )?;
            fs::write(out.join("base_groups.tsv"), write_groups(&data.base_groups))?;
            for c in &data.collections {
                let cdir = out.join(&c.name);
                fs::create_dir_all(&cdir)?;
                fs::write(cdir.join("qrels.txt"), write_qrels(&c.judgments))?;
                fs::write(
                    cdir.join("queries.tsv"),
                    write_id_text(c.queries.iter().map(|q| (q.query_id.clone(), q.text.clone()))),
                )?;
            }
            println!(
                "generated {} docs, {} collections, {} base groups -> {}",
                data.corpus.len(),
                data.collections.len(),
                data.base_groups.len(),
                out.display()
            );
        }
        Command::Index { corpus, k1, b, out } => {
            let corpus = load_corpus(&corpus.corpus)?;
            let index = build_index(&corpus, k1, b)?;
            fs::write(&out, write_index(&index))?;
            println!("indexed {} docs -> {}", index.n_docs(), out.display());
        }
        Command::Contaminate {
            qrels,
            queries,
            corpus,
            index,
            cutoff,
            group_size,
            max_fraction,
            seed,
            bm25_depth,
            base_groups,
            base_queries,
            out,
        } => {
            let name = stem(&qrels);
            let qrels_text = fs::read_to_string(&qrels)?;
            let mut collection = collection_from_qrels(&name, &qrels_text)?;
            // qrels carry ids only; attach query text for group construction.
            let texts = query_map(&load_queries(&queries)?);
            for q in &mut collection.queries {
                q.text = texts
                    .get(&q.query_id)
                    .ok_or_else(|| Error::Data(format!("no text for query {}", q.query_id)))?
                    .clone();
            }
            let corpus = load_corpus(&corpus.corpus)?;
            let index = parse_index(&fs::read_to_string(&index)?)?;
            let spec = ContaminationSpec {
                source_collection: name,
                cutoff,
                group_size,
                max_fraction,
                seed,
                bm25_depth,
            };
            let contaminated = build_contaminated_groups(&collection, &corpus, &index, &spec)?;
            match base_groups {
                Some(base_path) => {
                    let base_queries = base_queries.ok_or_else(|| {
                        Error::Usage("--base-groups requires --base-queries".into())
                    })?;
                    let base_texts = query_map(&load_queries(&base_queries)?);
                    let base = parse_groups(&fs::read_to_string(&base_path)?, &base_texts)?;
                    let (mixed, achieved) = inject(&base, &contaminated, max_fraction, seed)?;
                    fs::write(&out, write_groups(&mixed))?;
                    println!(
                        "injected {} of {} contaminated groups into {} base groups (achieved_fraction={achieved}) -> {}",
                        mixed.len() - base.len(),
                        contaminated.len(),
                        base.len(),
                        out.display()
                    );
                }
                None => {
                    fs::write(&out, write_groups(&contaminated))?;
                    println!("{} contaminated groups -> {}", contaminated.len(), out.display());
                }
            }
        }
        Command::TrainTeacher {
            groups,
            queries,
            corpus,
            train,
            out,
            log,
        } => {
            let corpus = load_corpus(&corpus.corpus)?;
            let texts = query_map(&load_queries(&queries)?);
            let stream = parse_groups(&fs::read_to_string(&groups)?, &texts)?;
            let cfg = train.config(LossKind::Lce);
            let (params, entries) = train_teacher(&stream, &corpus, &train.model(), &cfg)?;
            fs::write(&out, write_checkpoint(&params))?;
            if let Some(log) = log {
                fs::write(log, write_train_log(&entries))?;
            }
            println!(
                "trained teacher over {} groups ({} steps) -> {}",
                stream.len(),
                entries.len(),
                out.display()
            );
        }
        Command::Distill {
            teacher,
            loss,
            arch,
            groups,
            queries,
            corpus,
            index,
            temperature,
            topk,
            rounds_per_query,
            train,
            out,
            log,
        } => {
            let loss: LossKind = loss.parse()?;
            let arch: Architecture = arch.parse()?;
            let teacher = parse_checkpoint(&fs::read(&teacher)?)?;
            let corpus = load_corpus(&corpus.corpus)?;
            let queries = load_queries(&queries)?;
            let mut cfg = train.config(loss);
            cfg.kl_temperature = temperature;
            let (params, entries) = match loss {
                LossKind::RankNet => {
                    let index = index.ok_or_else(|| {
                        Error::Usage("ranknet distillation requires --index".into())
                    })?;
                    let index = parse_index(&fs::read_to_string(&index)?)?;
                    let (ranked, skipped) = sample_ranknet_groups(
                        &teacher,
                        &index,
                        &corpus,
                        &queries,
                        topk,
                        cfg.group_size,
                        rounds_per_query,
                        cfg.seed,
                    )?;
                    if skipped > 0 {
                        eprintln!("skipped {skipped} queries with too few candidates");
                    }
                    distill(arch, &DistillData::Ranked(&ranked), &corpus, &train.model(), &cfg)?
                }
                _ => {
                    let groups = groups.ok_or_else(|| {
                        Error::Usage(format!("{} distillation requires --groups", loss.as_str()))
                    })?;
                    let stream = parse_groups(&fs::read_to_string(&groups)?, &query_map(&queries))?;
                    let labeled = label_pairs(&teacher, &corpus, &stream, "teacher")?;
                    distill(arch, &DistillData::Labeled(&labeled), &corpus, &train.model(), &cfg)?
                }
            };
            fs::write(&out, write_checkpoint(&params))?;
            if let Some(log) = log {
                fs::write(log, write_train_log(&entries))?;
            }
            println!(
                "distilled {} student with {} ({} steps) -> {}",
                arch.as_str(),
                loss.as_str(),
                entries.len(),
                out.display()
            );
        }
        Command::Rerank {
            checkpoint,
            index,
            corpus,
            queries,
            depth,
            tag,
            out,
        } => {
            let params = parse_checkpoint(&fs::read(&checkpoint)?)?;
            let index = parse_index(&fs::read_to_string(&index)?)?;
            let corpus = load_corpus(&corpus.corpus)?;
            let queries = load_queries(&queries)?;
            let run = rerank_run(&params, &index, &corpus, &queries, depth, &tag)?;
            fs::write(&out, write_run(&run))?;
            println!("ranked {} queries -> {}", run.rankings.len(), out.display());
        }
        Command::Evaluate {
            run,
            qrels,
            ndcg_k,
            recall_k,
            cutoff,
            model,
            collection,
            out,
        } => {
            let collection_name = collection.unwrap_or_else(|| stem(&qrels));
            let collection =
                collection_from_qrels(&collection_name, &fs::read_to_string(&qrels)?)?;
            let run = parse_run(&fs::read_to_string(&run)?)?;
            let settings = MetricSettings {
                ndcg_k,
                recall_k,
                cutoff,
            };
            let metrics = evaluate_run(&run, &collection, &settings)?;
            for m in &metrics {
                println!("{} {}", m.name, m.aggregate);
            }
            let record = EvalRecord {
                model: model.unwrap_or_else(|| run.tag.clone()),
                collection: collection_name,
                metrics,
            };
            fs::write(&out, write_eval_csv(&record))?;
        }
        Command::Report { evals, out } => {
            let mut records = Vec::new();
            for path in &evals {
                records.extend(parse_eval_csv(&fs::read_to_string(path)?)?);
            }
            let report = build_report(&records)?;
            fs::write(&out, &report)?;
            print!("{report}");
        }
        Command::Run { config, out } => {
            let config = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&config.output_dir));
            let summary = run_experiment(&config, &out_dir)?;
            println!(
                "{} models, {} cells reused, report at {}",
                summary.models.len(),
                summary.reused_cells.len(),
                summary.report_path.display()
            );
            if !summary.failures.is_empty() {
                for f in &summary.failures {
                    eprintln!("cell {} failed: {}", f.cell, f.message);
                }
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = matches!(
                e.downcast_ref::<Error>(),
                Some(Error::Usage(_) | Error::Config(_))
            );
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
