use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use convsim::data::{from_release_json, Dataset};
use convsim::embed::EmbeddingStore;
use convsim::experiment::{self as exp, RunConfig, Workspace};
use convsim::questions::{write_trec_run, QuestionMethod, QuestionRetrievalParams, DEFAULT_RERANK_POOL};
use convsim::selector::write_features_tsv;
use convsim::synth::{PlantedSuite, SuiteConfig};
use convsim::text::{read_corpus, InvertedIndex};

#[derive(Parser, Debug)]
#[command(name = "convsim", version, about = "Simulated clarifying-question conversations")]
struct Cli {
    /// JSON file with run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

macro_rules! overrides {
    ($($field:ident),* $(,)?) => {
        /// Run configuration overrides. Values are JSON literals; lists may
        /// also be written comma separated.
        #[derive(Args, Debug, Default)]
        struct Overrides {
            $(
                #[arg(long, global = true, value_name = "VALUE", help_heading = "Config overrides")]
                $field: Option<String>,
            )*
        }

        impl Overrides {
            fn pairs(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                $(if let Some(v) = &self.$field { out.push((stringify!($field), v.as_str())); })*
                out
            }
        }
    };
}

overrides!(
    dataset,
    corpus,
    qrels,
    index,
    embeddings,
    output,
    models,
    policy,
    alpha,
    tune_alpha,
    mu,
    cutoff,
    sigma_k,
    eta_k,
    hash_dim,
    stopwords,
    fold_mode,
    folds,
    seed,
    turn_lengths,
    train_turn_lengths,
    train_policies,
    learning_rates,
    epochs,
    batch_size,
    hidden_dims,
    optimizer,
    execution,
);

#[derive(Subcommand, Debug)]
enum Command {
    /// Load a dataset (native JSON or the public release layout) and print its counts.
    Ingest {
        input: PathBuf,
        /// Write the normalized dataset here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Index the corpus into a binary index file.
    BuildIndex {
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrieve candidate questions for every topic and report MAP / recall.
    RetrieveQuestions {
        #[arg(long, default_value = "ql")]
        method: QuestionMethod,
        #[arg(long, default_value_t = 100)]
        k: usize,
        /// Rerank the top of each list by cosine to the topic using the embedding store.
        #[arg(long)]
        rerank: bool,
        #[arg(long, default_value_t = DEFAULT_RERANK_POOL)]
        rerank_pool: usize,
        /// TREC run file to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate conversations with the configured policy.
    Simulate,
    /// Cross-validated training of the learned selectors.
    Train,
    /// Paired comparison of two run files.
    Evaluate {
        run_a: PathBuf,
        run_b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Best and worst oracle runs.
    Oracle,
    /// Dump labelled selector features of every test context.
    ExportFeatures {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write hashing embeddings for topics, questions and answers.
    ExportEmbeddingsFallback {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a planted-facet collection seeded by `--seed`.
    GenerateFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        topics: usize,
    },
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// `--foo_bar` is accepted as `--foo-bar`.
fn normalize_flag(arg: String) -> String {
    match arg.strip_prefix("--") {
        Some(rest) => {
            let (name, value) = rest.split_once('=').map_or((rest, None), |(n, v)| (n, Some(v)));
            let name = name.replace('_', "-");
            match value {
                Some(v) => format!("--{name}={v}"),
                None => format!("--{name}"),
            }
        }
        None => arg,
    }
}

fn override_value(raw: &str) -> Value {
    if let Ok(v) = serde_json::from_str(raw) {
        return v;
    }
    if raw.contains(',') {
        return Value::Array(raw.split(',').map(|s| override_value(s.trim())).collect());
    }
    Value::String(raw.to_string())
}

fn resolve_config(path: Option<&Path>, overrides: &Overrides) -> anyhow::Result<RunConfig> {
    let base = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let pairs = overrides.pairs();
    if pairs.is_empty() {
        return Ok(base);
    }
    let Value::Object(mut map) = serde_json::to_value(&base)? else {
        unreachable!("config serializes to an object")
    };
    for (key, raw) in pairs {
        let mut v = override_value(raw);
        // single-element lists
        if map.get(key).is_some_and(Value::is_array) && !v.is_array() {
            v = Value::Array(vec![v]);
        }
        map.insert(key.to_string(), v);
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| UsageError(format!("bad config override: {e}")).into())
}

fn checked_config(path: Option<&Path>, overrides: &Overrides) -> anyhow::Result<RunConfig> {
    let config = resolve_config(path, overrides)?;
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(config)
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = checked_config(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Ingest { input, out } => {
            let text = std::fs::read_to_string(&input).map_err(|e| convsim::Error::io(&input, e))?;
            let dataset = match Dataset::from_json_str(&text) {
                Ok(d) => d,
                Err(native) => from_release_json(&text)
                    .with_context(|| format!("not a dataset file ({native}) nor a release file"))?,
            };
            if let Some(out) = out {
                dataset.save(&out)?;
            }
            print_json(&dataset.counts())
        }
        Command::BuildIndex { out } => {
            let index = InvertedIndex::build(read_corpus(&config.corpus)?, config.tokenizer(), config.execution)?;
            index.save(&out)?;
            let mut stats = Map::new();
            stats.insert("documents".into(), index.doc_count().into());
            stats.insert("terms".into(), index.vocabulary_size().into());
            stats.insert("collection_length".into(), index.collection_length().into());
            print_json(&stats)
        }
        Command::RetrieveQuestions {
            method,
            k,
            rerank,
            rerank_pool,
            out,
        } => {
            let dataset = Dataset::load(&config.dataset)?;
            let store = match (rerank, &config.embeddings) {
                (false, _) => None,
                (true, Some(p)) => Some(EmbeddingStore::load(p)?),
                (true, None) => Some(exp::fallback_embeddings(&dataset, config.hash_dim)?),
            };
            let params = QuestionRetrievalParams {
                mu: config.mu,
                ..QuestionRetrievalParams::default()
            };
            let (runs, report) = exp::question_retrieval_runs(
                &dataset,
                config.tokenizer(),
                method,
                k,
                &params,
                store.as_ref().map(|s| (s, rerank_pool)),
                config.execution,
            )?;
            if let Some(out) = out {
                let tag = if rerank { format!("{method}-rerank") } else { method.to_string() };
                write_trec_run(&runs, &tag, &out)?;
            }
            print_json(&report)
        }
        Command::Simulate => {
            let run = exp::cmd_simulate(&config)?;
            print!("{}", exp::summary_tsv(&run));
            Ok(())
        }
        Command::Train => print_json(&exp::cmd_train(&config)?),
        Command::Evaluate { run_a, run_b, out } => {
            let cmp = exp::cmd_evaluate(&exp::read_run(&run_a)?, &exp::read_run(&run_b)?)?;
            let tsv = exp::comparison_tsv(&cmp);
            if let Some(out) = out {
                std::fs::write(&out, &tsv).map_err(|e| convsim::Error::io(&out, e))?;
            }
            print!("{tsv}");
            Ok(())
        }
        Command::Oracle => {
            let (best, worst) = exp::cmd_oracle(&config)?;
            print!("{}", exp::summary_tsv(&best));
            print!("{}", exp::summary_tsv(&worst));
            Ok(())
        }
        Command::ExportFeatures { out } => {
            let ws = Workspace::load(&config)?;
            let folds = exp::folds_for(&ws, &config)?;
            let models = folds
                .iter()
                .map(|f| exp::untrained_fold(&ws, &config, f))
                .collect::<convsim::Result<Vec<_>>>()?;
            let rows = exp::export_features(&ws, &config, &folds, &models)?;
            write_features_tsv(&rows, &out)?;
            eprintln!("{} rows written to {}", rows.len(), out.display());
            Ok(())
        }
        Command::ExportEmbeddingsFallback { out } => {
            let dataset = Dataset::load(&config.dataset)?;
            let store = exp::fallback_embeddings(&dataset, config.hash_dim)?;
            store.save(&out)?;
            eprintln!("{} vectors of dim {} written to {}", store.len(), store.dim(), out.display());
            Ok(())
        }
        Command::GenerateFixture { out, topics } => {
            let suite = PlantedSuite::generate(&SuiteConfig {
                topics,
                seed: config.seed,
                ..SuiteConfig::default()
            });
            suite.write_to(&out)?;
            print_json(&suite.dataset.counts())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<convsim::Error>() {
            return if e.is_data_error() { 2 } else { 3 };
        }
        if cause.is::<serde_json::Error>() || cause.is::<std::io::Error>() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse_from(std::env::args().map(normalize_flag)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_merge_into_config() {
        let cli = Cli::try_parse_from(
            ["convsim", "--alpha", "0.25", "--turn-lengths", "0,2", "--hidden-dims", "16", "--policy", "neuqs", "simulate"]
                .map(String::from)
                .map(normalize_flag),
        )
        .unwrap();
        let c = resolve_config(None, &cli.overrides).unwrap();
        assert_eq!(c.alpha, 0.25);
        assert_eq!(c.turn_lengths, vec![0, 2]);
        assert_eq!(c.hidden_dims, vec![16]);
        assert_eq!(c.policy, convsim::selector::Policy::Neuqs);
    }

    #[test]
    fn underscore_flags() {
        assert_eq!(normalize_flag("--sigma_k=5".into()), "--sigma-k=5");
        assert_eq!(normalize_flag("--tune_alpha".into()), "--tune-alpha");
        assert_eq!(normalize_flag("some_file".into()), "some_file");
    }

    #[test]
    fn bad_override_is_usage() {
        let cli = Cli::try_parse_from(["convsim", "--folds", "many", "train"]).unwrap();
        let err = resolve_config(None, &cli.overrides).unwrap_err();
        assert_eq!(exit_code(&err), 1);
    }
}
