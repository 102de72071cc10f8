//! Experiment orchestration: cross-validated training, simulated
//! conversations, run files and run comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    expand_contexts, make_folds, read_folds, write_folds, ContextCandidates, Dataset, FacetQrels, FoldMode, FoldSplit,
};
use crate::embed::{Embedder, EmbeddingStore, DEFAULT_HASH_DIM};
use crate::metrics::{bonferroni, paired_ttest, reports_tsv, Metric, MetricReport};
use crate::nn::{OptimizerKind, TrainConfig};
use crate::par::Execution;
use crate::questions::{
    bank_labels, eval_question_retrieval, index_questions, rerank_by_embedding, retrieve_questions,
    QuestionMethod, QuestionRetrievalParams, QuestionRetrievalReport,
};
use crate::retrieval::{retrieve_original, RetrievalParams};
use crate::selector::{
    answered_run, candidate_mrrs, label_context, select, train_neuqs, train_pairwise, Env, LabelledContext,
    NeuqsModel, PairwiseModel, Policy, SelectionInstance, Selector, SelectorParams,
};
use crate::synth::PlantedSuite;
use crate::text::{read_corpus, InvertedIndex, RankedList, Tokenizer, DEFAULT_MU};
use crate::{Error, Result};

/// Every knob of an experiment. Field names double as command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub corpus: PathBuf,
    pub qrels: PathBuf,
    /// Prebuilt index; the corpus is indexed on the fly when absent.
    pub index: Option<PathBuf>,
    /// Precomputed embeddings; feature hashing is used when absent.
    pub embeddings: Option<PathBuf>,
    pub output: PathBuf,
    pub models: PathBuf,
    pub policy: Policy,
    pub alpha: f64,
    /// Pick α per fold on the validation split instead of using `alpha`.
    pub tune_alpha: bool,
    pub mu: f64,
    pub cutoff: usize,
    pub sigma_k: usize,
    pub eta_k: usize,
    pub hash_dim: usize,
    pub stopwords: bool,
    pub fold_mode: FoldMode,
    pub folds: usize,
    pub seed: u64,
    /// Context lengths ℓ at which the next question is selected.
    pub turn_lengths: Vec<usize>,
    pub train_turn_lengths: Vec<usize>,
    pub train_policies: Vec<Policy>,
    pub learning_rates: Vec<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_dims: Vec<usize>,
    pub optimizer: OptimizerKind,
    pub execution: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: "dataset.json".into(),
            corpus: "corpus.jsonl".into(),
            qrels: "qrels.txt".into(),
            index: None,
            embeddings: None,
            output: "runs".into(),
            models: "models".into(),
            policy: Policy::OriginalQuery,
            alpha: 0.5,
            tune_alpha: true,
            mu: DEFAULT_MU,
            cutoff: 100,
            sigma_k: 100,
            eta_k: 10,
            hash_dim: DEFAULT_HASH_DIM,
            stopwords: false,
            fold_mode: FoldMode::ByTopic,
            folds: 5,
            seed: 42,
            turn_lengths: vec![0, 1, 2],
            train_turn_lengths: vec![0, 1, 2],
            train_policies: vec![Policy::Pairwise, Policy::Neuqs],
            learning_rates: vec![0.01, 0.05, 0.1],
            epochs: 20,
            batch_size: 32,
            hidden_dims: vec![64, 32],
            optimizer: OptimizerKind::Sgd,
            execution: Execution::Parallel,
        }
    }
}

pub const ALPHA_GRID: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.retrieval(self.alpha).validate()?;
        if self.folds < 2 {
            return Err(Error::InvalidParam(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.hash_dim < 8 {
            return Err(Error::InvalidParam(format!("hash_dim must be >= 8, got {}", self.hash_dim)));
        }
        if self.sigma_k == 0 || self.eta_k == 0 {
            return Err(Error::InvalidParam("sigma_k and eta_k must be at least 1".into()));
        }
        if self.turn_lengths.is_empty() {
            return Err(Error::InvalidParam("turn_lengths is empty".into()));
        }
        if self.learning_rates.is_empty() {
            return Err(Error::InvalidParam("learning_rates is empty".into()));
        }
        for &lr in &self.learning_rates {
            self.train_config(lr).validate()?;
        }
        if let Some(p) = self.train_policies.iter().find(|p| !p.needs_model()) {
            return Err(Error::InvalidParam(format!("policy `{p}` is not trainable")));
        }
        Ok(())
    }

    pub fn retrieval(&self, alpha: f64) -> RetrievalParams {
        RetrievalParams {
            alpha,
            mu: self.mu,
            cutoff: self.cutoff,
        }
    }

    pub fn selector(&self) -> SelectorParams {
        SelectorParams {
            sigma_k: self.sigma_k,
            eta_k: self.eta_k,
        }
    }

    pub fn tokenizer(&self) -> Tokenizer {
        Tokenizer {
            remove_stopwords: self.stopwords,
        }
    }

    pub fn train_config(&self, learning_rate: f64) -> TrainConfig {
        TrainConfig {
            learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            hidden_dims: self.hidden_dims.clone(),
            optimizer: self.optimizer,
        }
    }
}

/// Loaded inputs of an experiment.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub dataset: Dataset,
    pub qrels: FacetQrels,
    pub index: InvertedIndex,
    pub embedder: Embedder,
}

impl Workspace {
    pub fn load(config: &RunConfig) -> Result<Self> {
        let dataset = Dataset::load(&config.dataset)?;
        let qrels = FacetQrels::load(&config.qrels)?;
        qrels.validate(&dataset)?;
        let index = match &config.index {
            Some(p) => {
                let index = InvertedIndex::load(p)?;
                if index.tokenizer() != config.tokenizer() {
                    log::warn!("index {} was built with a different tokenizer setting", p.display());
                }
                index
            }
            None => InvertedIndex::build(read_corpus(&config.corpus)?, config.tokenizer(), config.execution)?,
        };
        let embedder = match &config.embeddings {
            Some(p) => Embedder::Store(EmbeddingStore::load(p)?),
            None => Embedder::hashing(config.hash_dim)?,
        };
        Ok(Workspace {
            dataset,
            qrels,
            index,
            embedder,
        })
    }

    pub fn from_suite(suite: &PlantedSuite, config: &RunConfig) -> Result<Self> {
        Ok(Workspace {
            dataset: suite.dataset.clone(),
            qrels: suite.qrels.clone(),
            index: InvertedIndex::build(suite.corpus.clone(), config.tokenizer(), config.execution)?,
            embedder: Embedder::hashing(config.hash_dim)?,
        })
    }

    pub fn env<'a>(&'a self, config: &RunConfig, alpha: f64) -> Env<'a> {
        Env {
            dataset: &self.dataset,
            index: &self.index,
            embedder: &self.embedder,
            qrels: &self.qrels,
            retrieval: config.retrieval(alpha),
            selector: config.selector(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Train,
    Validation,
    Test,
}

/// `(topic, facet)` pairs of one part of a fold, in id order.
pub fn fold_pairs(dataset: &Dataset, split: &FoldSplit, part: Part) -> Vec<(String, String)> {
    dataset
        .facets()
        .filter(|f| match part {
            Part::Train => split.in_train(&f.topic_id, &f.id),
            Part::Validation => split.in_validation(&f.topic_id, &f.id),
            Part::Test => split.in_test(&f.topic_id, &f.id),
        })
        .map(|f| (f.topic_id.clone(), f.id.clone()))
        .collect()
}

/// One context to select a question for.
#[derive(Debug, Clone)]
pub struct Slot {
    pub topic_id: String,
    pub facet_id: String,
    pub entry: ContextCandidates,
}

/// All contexts of the given pairs and lengths. Topics too small for a
/// length are skipped with a warning.
pub fn slots(dataset: &Dataset, pairs: &[(String, String)], lengths: &[usize]) -> Result<Vec<Slot>> {
    let mut out = Vec::new();
    for (t, f) in pairs {
        for &len in lengths {
            match expand_contexts(dataset, t, f, len) {
                Ok(entries) => out.extend(entries.into_iter().map(|entry| Slot {
                    topic_id: t.clone(),
                    facet_id: f.clone(),
                    entry,
                })),
                Err(Error::InsufficientQuestions { .. }) => {
                    log::warn!("topic `{t}` has too few questions for turn length {len}; skipped")
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

/// Mean answered-retrieval MRR over every first-turn candidate of `pairs`.
pub fn mean_first_turn_mrr(ws: &Workspace, config: &RunConfig, alpha: f64, pairs: &[(String, String)]) -> Result<f64> {
    let env = ws.env(config, alpha);
    let per_pair = config.execution.try_map(pairs, |(t, f)| -> Result<Option<f64>> {
        let topic = ws.dataset.topic(t)?;
        let mut sum = 0.0;
        let mut n = 0usize;
        for cc in expand_contexts(&ws.dataset, t, f, 0)? {
            for (_, m) in candidate_mrrs(&env, topic, f, &cc.context, &cc.candidates)? {
                sum += m;
                n += 1;
            }
        }
        Ok((n > 0).then(|| sum / n as f64))
    })?;
    let vals: Vec<f64> = per_pair.into_iter().flatten().collect();
    Ok(if vals.is_empty() { 0.0 } else { vals.iter().sum::<f64>() / vals.len() as f64 })
}

/// Grid search of α on `pairs`; ties go to the smaller α.
pub fn tune_alpha(ws: &Workspace, config: &RunConfig, pairs: &[(String, String)]) -> Result<(f64, Vec<(f64, f64)>)> {
    if pairs.is_empty() {
        log::warn!("no validation pairs; keeping alpha {}", config.alpha);
        return Ok((config.alpha, Vec::new()));
    }
    let mut grid = Vec::with_capacity(ALPHA_GRID.len());
    let mut best = (config.alpha, f64::NEG_INFINITY);
    for alpha in ALPHA_GRID {
        let m = mean_first_turn_mrr(ws, config, alpha, pairs)?;
        grid.push((alpha, m));
        if m > best.1 {
            best = (alpha, m);
        }
    }
    Ok((best.0, grid))
}

/// Labelled candidates for every slot.
pub fn label_slots(
    ws: &Workspace,
    config: &RunConfig,
    alpha: f64,
    slots: &[Slot],
    split: &str,
) -> Result<Vec<LabelledContext>> {
    let env = ws.env(config, alpha);
    config.execution.try_map(slots, |s| {
        let topic = ws.dataset.topic(&s.topic_id)?;
        label_context(&env, topic, &s.facet_id, &s.entry.context, &s.entry.candidates, split)
    })
}

/// Mean MRR of the candidate picked by `score` (ties to the lowest id).
fn selection_mrr(contexts: &[LabelledContext], mut score: impl FnMut(&LabelledContext, usize) -> Result<f64>) -> Result<f64> {
    if contexts.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for c in contexts {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..c.instances.len() {
            let s = score(c, i)?;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        total += best.map_or(0.0, |(i, _)| c.instances[i].mrr);
    }
    Ok(total / contexts.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelChoice {
    pub learning_rate: f64,
    pub validation_mrr: f64,
    /// `(learning rate, validation MRR)` for every grid point.
    pub grid: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMeta {
    pub fold_index: usize,
    pub alpha: f64,
    pub alpha_grid: Vec<(f64, f64)>,
    pub train_contexts: usize,
    pub train_instances: usize,
    pub pairwise: Option<ModelChoice>,
    pub neuqs: Option<ModelChoice>,
}

#[derive(Debug, Clone)]
pub struct FoldModels {
    pub meta: FoldMeta,
    pub pairwise: Option<PairwiseModel>,
    pub neuqs: Option<NeuqsModel>,
}

impl FoldModels {
    pub fn selector(&self, policy: Policy, seed: u64) -> Result<Selector> {
        let missing = || Error::Unknown {
            kind: "trained model",
            id: format!("fold {} {policy}", self.meta.fold_index),
        };
        Ok(match policy {
            Policy::Pairwise => Selector::Pairwise(self.pairwise.clone().ok_or_else(missing)?),
            Policy::Neuqs => Selector::Neuqs(self.neuqs.clone().ok_or_else(missing)?),
            p => Selector::untrained(p, seed)?,
        })
    }
}

/// α for the fold: tuned on its validation split or taken from the config.
pub fn fold_alpha(ws: &Workspace, config: &RunConfig, split: &FoldSplit) -> Result<(f64, Vec<(f64, f64)>)> {
    if config.tune_alpha {
        tune_alpha(ws, config, &fold_pairs(&ws.dataset, split, Part::Validation))
    } else {
        Ok((config.alpha, Vec::new()))
    }
}

/// Fold metadata without any trained model.
pub fn untrained_fold(ws: &Workspace, config: &RunConfig, split: &FoldSplit) -> Result<FoldModels> {
    let (alpha, alpha_grid) = fold_alpha(ws, config, split)?;
    Ok(FoldModels {
        meta: FoldMeta {
            fold_index: split.fold_index,
            alpha,
            alpha_grid,
            train_contexts: 0,
            train_instances: 0,
            pairwise: None,
            neuqs: None,
        },
        pairwise: None,
        neuqs: None,
    })
}

/// Tunes α, then trains every configured policy over the learning-rate
/// grid, keeping the rate with the best validation selection MRR.
pub fn train_fold(ws: &Workspace, config: &RunConfig, split: &FoldSplit) -> Result<FoldModels> {
    let mut out = untrained_fold(ws, config, split)?;
    let alpha = out.meta.alpha;
    let train_pairs = fold_pairs(&ws.dataset, split, Part::Train);
    let val_pairs = fold_pairs(&ws.dataset, split, Part::Validation);
    let tag = format!("fold{}", split.fold_index);
    let train = label_slots(ws, config, alpha, &slots(&ws.dataset, &train_pairs, &config.train_turn_lengths)?, &tag)?;
    let val = label_slots(ws, config, alpha, &slots(&ws.dataset, &val_pairs, &config.train_turn_lengths)?, &tag)?;
    if train.is_empty() {
        return Err(Error::Degenerate(format!("fold {} has no training contexts", split.fold_index)));
    }
    out.meta.train_contexts = train.len();
    out.meta.train_instances = train.iter().map(|c| c.instances.len()).sum();
    log::info!(
        "fold {}: alpha {alpha}, {} training contexts, {} instances",
        split.fold_index,
        out.meta.train_contexts,
        out.meta.train_instances
    );

    if config.train_policies.contains(&Policy::Pairwise) {
        let groups: Vec<_> = train
            .iter()
            .map(|c| c.instances.iter().map(|i| (i.features.to_vec(), i.label)).collect())
            .collect();
        let mut best: Option<(PairwiseModel, ModelChoice)> = None;
        let mut grid = Vec::new();
        for &lr in &config.learning_rates {
            let (model, _) = train_pairwise(&groups, &config.train_config(lr))?;
            let v = selection_mrr(&val, |c, i| model.score(&c.instances[i].features.to_vec()))?;
            grid.push((lr, v));
            if best.as_ref().is_none_or(|(_, b)| v > b.validation_mrr) {
                best = Some((model, ModelChoice { learning_rate: lr, validation_mrr: v, grid: Vec::new() }));
            }
        }
        let (model, mut choice) = best.expect("non-empty grid");
        choice.grid = grid;
        out.pairwise = Some(model);
        out.meta.pairwise = Some(choice);
    }

    if config.train_policies.contains(&Policy::Neuqs) {
        let data: Vec<_> = train
            .iter()
            .flat_map(|c| c.neuqs.iter().cloned().zip(c.instances.iter().map(|i| i.label)))
            .collect();
        let mut best: Option<(NeuqsModel, ModelChoice)> = None;
        let mut grid = Vec::new();
        for &lr in &config.learning_rates {
            let (model, _) = train_neuqs(&data, &config.train_config(lr))?;
            let v = selection_mrr(&val, |c, i| crate::selector::neuqs_score(&model, &c.neuqs[i]))?;
            grid.push((lr, v));
            if best.as_ref().is_none_or(|(_, b)| v > b.validation_mrr) {
                best = Some((model, ModelChoice { learning_rate: lr, validation_mrr: v, grid: Vec::new() }));
            }
        }
        let (model, mut choice) = best.expect("non-empty grid");
        choice.grid = grid;
        out.neuqs = Some(model);
        out.meta.neuqs = Some(choice);
    }
    Ok(out)
}

pub fn folds_for(ws: &Workspace, config: &RunConfig) -> Result<Vec<FoldSplit>> {
    make_folds(&ws.dataset, config.fold_mode, config.folds, config.seed)
}

fn model_path(dir: &Path, fold: usize, policy: Policy) -> PathBuf {
    dir.join(format!("fold{fold}.{policy}.mlp"))
}

fn meta_path(dir: &Path, fold: usize) -> PathBuf {
    dir.join(format!("fold{fold}.json"))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_fold_models(models: &FoldModels, dir: &Path) -> Result<()> {
    let i = models.meta.fold_index;
    if let Some(m) = &models.pairwise {
        m.save(&model_path(dir, i, Policy::Pairwise))?;
    }
    if let Some(m) = &models.neuqs {
        m.save(&model_path(dir, i, Policy::Neuqs))?;
    }
    write_json(&models.meta, &meta_path(dir, i))
}

pub fn load_fold_models(dir: &Path, fold: usize) -> Result<FoldModels> {
    let meta: FoldMeta = read_json(&meta_path(dir, fold))?;
    let pairwise = match meta.pairwise {
        Some(_) => Some(PairwiseModel::load(&model_path(dir, fold, Policy::Pairwise))?),
        None => None,
    };
    let neuqs = match meta.neuqs {
        Some(_) => Some(NeuqsModel::load(&model_path(dir, fold, Policy::Neuqs))?),
        None => None,
    };
    Ok(FoldModels { meta, pairwise, neuqs })
}

/// Cross-validated training; writes `folds.json`, per-fold models and
/// metadata, and a config snapshot into `config.models`.
pub fn cmd_train(config: &RunConfig) -> Result<Vec<FoldMeta>> {
    config.validate()?;
    let ws = Workspace::load(config)?;
    train_all(&ws, config, Some(&config.models)).map(|v| v.into_iter().map(|m| m.meta).collect())
}

pub fn train_all(ws: &Workspace, config: &RunConfig, dir: Option<&Path>) -> Result<Vec<FoldModels>> {
    let folds = folds_for(ws, config)?;
    if let Some(d) = dir {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        write_folds(&folds, &d.join("folds.json"))?;
        write_json(config, &d.join("config.json"))?;
    }
    let mut out = Vec::with_capacity(folds.len());
    for split in &folds {
        let models = train_fold(ws, config, split)?;
        if let Some(d) = dir {
            save_fold_models(&models, d)?;
        }
        out.push(models);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub key: String,
    pub fold: usize,
    pub turn_len: usize,
    pub topic_id: String,
    pub facet_id: String,
    /// `None` when the policy asks nothing.
    pub question_id: Option<String>,
    pub metrics: BTreeMap<Metric, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: Policy,
    pub metric: Metric,
    pub turn_len: usize,
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldInfo {
    pub fold_index: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: RunConfig,
    pub policy: Policy,
    pub folds: Vec<FoldInfo>,
    /// Sorted by key.
    pub instances: Vec<InstanceResult>,
    pub summary: Vec<SummaryRow>,
}

/// Mean of every metric per turn length, recomputed from the instances.
pub fn summarize(policy: Policy, instances: &[InstanceResult]) -> Vec<SummaryRow> {
    let mut acc: BTreeMap<(usize, Metric), (f64, usize)> = BTreeMap::new();
    for i in instances {
        for (m, v) in &i.metrics {
            let e = acc.entry((i.turn_len, *m)).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|((turn_len, metric), (sum, count))| SummaryRow {
            policy,
            metric,
            turn_len,
            mean: sum / count as f64,
            count,
        })
        .collect()
}

/// Runs one policy over the test contexts of every fold.
pub fn simulate(
    ws: &Workspace,
    config: &RunConfig,
    policy: Policy,
    folds: &[FoldSplit],
    models: &[FoldModels],
) -> Result<RunResult> {
    if folds.len() != models.len() {
        return Err(Error::Mismatch(format!("{} folds but {} model sets", folds.len(), models.len())));
    }
    let mut instances = Vec::new();
    let mut infos = Vec::new();
    for (split, fm) in folds.iter().zip(models) {
        if fm.meta.fold_index != split.fold_index {
            return Err(Error::Mismatch(format!(
                "models for fold {} paired with fold {}",
                fm.meta.fold_index, split.fold_index
            )));
        }
        let alpha = fm.meta.alpha;
        infos.push(FoldInfo {
            fold_index: split.fold_index,
            alpha,
        });
        let selector = fm.selector(policy, config.seed)?;
        let env = ws.env(config, alpha);
        let work = slots(&ws.dataset, &fold_pairs(&ws.dataset, split, Part::Test), &config.turn_lengths)?;
        let results = config.execution.try_map(&work, |s| -> Result<InstanceResult> {
            let ctx = &s.entry.context;
            let fail = |e: Error| Error::Degenerate(format!("instance `{}`: {e}", ctx.key()));
            let topic = ws.dataset.topic(&s.topic_id)?;
            let pick = select(&selector, &env, topic, &s.facet_id, ctx, &s.entry.candidates).map_err(fail)?;
            let run: RankedList = match &pick {
                Some(q) => answered_run(&env, topic, &s.facet_id, ctx, q).map_err(fail)?,
                None => retrieve_original(&ws.index, topic, &env.retrieval)?,
            };
            let grades = ws.qrels.grades(&s.facet_id);
            Ok(InstanceResult {
                key: ctx.key(),
                fold: split.fold_index,
                turn_len: ctx.len(),
                topic_id: s.topic_id.clone(),
                facet_id: s.facet_id.clone(),
                question_id: pick,
                metrics: Metric::DOCUMENT.iter().map(|m| (*m, m.evaluate(&run, grades))).collect(),
            })
        })?;
        instances.extend(results);
    }
    instances.sort_by(|a, b| a.key.cmp(&b.key));
    if let Some(w) = instances.windows(2).find(|w| w[0].key == w[1].key) {
        return Err(Error::Duplicate {
            kind: "instance",
            id: w[0].key.clone(),
        });
    }
    Ok(RunResult {
        config: config.clone(),
        policy,
        folds: infos,
        summary: summarize(policy, &instances),
        instances,
    })
}

/// Per-fold models for `policy`: loaded from `config.models` when the
/// policy needs training (or when fold metadata exists there, to reuse its
/// α); otherwise α is tuned afresh.
pub fn models_for(ws: &Workspace, config: &RunConfig, policy: Policy, folds: &[FoldSplit]) -> Result<Vec<FoldModels>> {
    folds
        .iter()
        .map(|split| {
            let meta = meta_path(&config.models, split.fold_index);
            if policy.needs_model() || meta.exists() {
                load_fold_models(&config.models, split.fold_index)
            } else {
                untrained_fold(ws, config, split)
            }
        })
        .collect()
}

/// Folds saved by `train` when present, otherwise freshly generated.
fn folds_from(ws: &Workspace, config: &RunConfig) -> Result<Vec<FoldSplit>> {
    let saved = config.models.join("folds.json");
    if saved.exists() {
        let folds = read_folds(&saved)?;
        if folds.len() != config.folds || folds.iter().any(|f| f.mode != config.fold_mode) {
            return Err(Error::Mismatch(format!(
                "{} does not match folds={} fold_mode={:?}",
                saved.display(),
                config.folds,
                config.fold_mode
            )));
        }
        Ok(folds)
    } else {
        folds_for(ws, config)
    }
}

/// Simulates `config.policy` and writes its run files.
pub fn cmd_simulate(config: &RunConfig) -> Result<RunResult> {
    config.validate()?;
    let ws = Workspace::load(config)?;
    let folds = folds_from(&ws, config)?;
    let models = models_for(&ws, config, config.policy, &folds)?;
    let result = simulate(&ws, config, config.policy, &folds, &models)?;
    write_run(&result, &config.output)?;
    Ok(result)
}

/// Best and worst oracle runs, both written to `config.output`.
pub fn cmd_oracle(config: &RunConfig) -> Result<(RunResult, RunResult)> {
    config.validate()?;
    let ws = Workspace::load(config)?;
    let folds = folds_from(&ws, config)?;
    let models = models_for(&ws, config, Policy::OracleBest, &folds)?;
    let best = simulate(&ws, config, Policy::OracleBest, &folds, &models)?;
    let worst = simulate(&ws, config, Policy::OracleWorst, &folds, &models)?;
    write_run(&best, &config.output)?;
    write_run(&worst, &config.output)?;
    Ok((best, worst))
}

pub fn run_paths(dir: &Path, policy: Policy) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{policy}.json")),
        dir.join(format!("{policy}.tsv")),
        dir.join(format!("{policy}.summary.tsv")),
    )
}

/// Per-instance TSV, prefixed by the config snapshot as a comment.
pub fn instances_tsv(result: &RunResult) -> String {
    let reports: Vec<MetricReport> = Metric::DOCUMENT
        .iter()
        .map(|m| {
            MetricReport::new(
                *m,
                result
                    .instances
                    .iter()
                    .filter_map(|i| i.metrics.get(m).map(|v| (i.key.clone(), *v)))
                    .collect(),
            )
        })
        .collect();
    let config = serde_json::to_string(&result.config).unwrap_or_default();
    format!("# policy\t{}\n# config\t{config}\n{}", result.policy, reports_tsv(&reports))
}

pub fn summary_tsv(result: &RunResult) -> String {
    let config = serde_json::to_string(&result.config).unwrap_or_default();
    let mut out = format!("# config\t{config}\npolicy\tmetric\tturn\tcontext_len\tmean\tcount\n");
    for r in &result.summary {
        let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}\t{}", r.policy, r.metric, r.turn_len + 1, r.turn_len, r.mean, r.count);
    }
    out
}

/// Writes `<policy>.json`, `<policy>.tsv` and `<policy>.summary.tsv`.
pub fn write_run(result: &RunResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (json, tsv, summary) = run_paths(dir, result.policy);
    write_json(result, &json)?;
    std::fs::write(&tsv, instances_tsv(result)).map_err(|e| Error::io(&tsv, e))?;
    std::fs::write(&summary, summary_tsv(result)).map_err(|e| Error::io(&summary, e))
}

pub fn read_run(path: &Path) -> Result<RunResult> {
    read_json(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: Metric,
    pub mean_a: f64,
    pub mean_b: f64,
    /// `mean_a − mean_b`.
    pub delta: f64,
    pub t: f64,
    pub p: f64,
    pub p_bonferroni: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub policy_a: Policy,
    pub policy_b: Policy,
    pub instances: usize,
    pub metrics: Vec<MetricComparison>,
}

/// Paired comparison of two runs over identical instance sets, with
/// Bonferroni correction over the compared metrics.
pub fn cmd_evaluate(a: &RunResult, b: &RunResult) -> Result<Comparison> {
    let keys_a: BTreeSet<&str> = a.instances.iter().map(|i| i.key.as_str()).collect();
    let keys_b: BTreeSet<&str> = b.instances.iter().map(|i| i.key.as_str()).collect();
    if keys_a != keys_b {
        let only_a = keys_a.difference(&keys_b).count();
        let only_b = keys_b.difference(&keys_a).count();
        return Err(Error::Mismatch(format!(
            "runs cover different instances ({only_a} only in the first, {only_b} only in the second)"
        )));
    }
    let by_key: BTreeMap<&str, &InstanceResult> = b.instances.iter().map(|i| (i.key.as_str(), i)).collect();
    let metrics: BTreeSet<Metric> = a.instances.iter().flat_map(|i| i.metrics.keys().copied()).collect();
    let mut rows = Vec::new();
    for m in &metrics {
        let mut va = Vec::with_capacity(a.instances.len());
        let mut vb = Vec::with_capacity(a.instances.len());
        for i in &a.instances {
            let other = by_key[i.key.as_str()];
            match (i.metrics.get(m), other.metrics.get(m)) {
                (Some(x), Some(y)) => {
                    va.push(*x);
                    vb.push(*y);
                }
                _ => return Err(Error::Mismatch(format!("metric {m} missing for instance `{}`", i.key))),
            }
        }
        let n = va.len() as f64;
        let (mean_a, mean_b) = (va.iter().sum::<f64>() / n, vb.iter().sum::<f64>() / n);
        let test = paired_ttest(&va, &vb)?;
        rows.push(MetricComparison {
            metric: *m,
            mean_a,
            mean_b,
            delta: mean_a - mean_b,
            t: test.t,
            p: test.p,
            p_bonferroni: 0.0,
        });
    }
    let adjusted = bonferroni(&rows.iter().map(|r| r.p).collect::<Vec<_>>(), rows.len());
    for (r, p) in rows.iter_mut().zip(adjusted) {
        r.p_bonferroni = p;
    }
    Ok(Comparison {
        policy_a: a.policy,
        policy_b: b.policy,
        instances: a.instances.len(),
        metrics: rows,
    })
}

pub fn comparison_tsv(c: &Comparison) -> String {
    let mut out = format!(
        "# {} vs {} over {} instances\nmetric\tmean_a\tmean_b\tdelta\tt\tp\tp_bonferroni\n",
        c.policy_a, c.policy_b, c.instances
    );
    for r in &c.metrics {
        let _ = writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{:+.6}\t{:.4}\t{:.3e}\t{:.3e}",
            r.metric, r.mean_a, r.mean_b, r.delta, r.t, r.p, r.p_bonferroni
        );
    }
    out
}

/// Labelled features of every test context, tagged with its fold.
pub fn export_features(ws: &Workspace, config: &RunConfig, folds: &[FoldSplit], models: &[FoldModels]) -> Result<Vec<SelectionInstance>> {
    let mut out = Vec::new();
    for (split, fm) in folds.iter().zip(models) {
        let work = slots(&ws.dataset, &fold_pairs(&ws.dataset, split, Part::Test), &config.turn_lengths)?;
        let tag = format!("fold{}", split.fold_index);
        for lc in label_slots(ws, config, fm.meta.alpha, &work, &tag)? {
            out.extend(lc.instances);
        }
    }
    out.sort_by(|a, b| (&a.context_key, &a.question_id).cmp(&(&b.context_key, &b.question_id)));
    Ok(out)
}

/// Hashing-fallback vectors for every topic, question and answered pair,
/// keyed as the embedding store expects.
pub fn fallback_embeddings(dataset: &Dataset, dim: usize) -> Result<EmbeddingStore> {
    let embedder = Embedder::hashing(dim)?;
    let mut store = EmbeddingStore::new(dim);
    for t in dataset.topics() {
        store.insert(t.id.clone(), embedder.topic(t)?)?;
    }
    for q in dataset.questions() {
        store.insert(q.id.clone(), embedder.question(q)?)?;
    }
    for a in dataset.answers() {
        let q = dataset.question(&a.question_id)?;
        store.insert(format!("{}|{}", q.id, a.facet_id), embedder.question_answer(q, &a.facet_id, &a.text)?)?;
    }
    Ok(store)
}

/// Question-bank runs for every topic, optionally reranked by embeddings,
/// with their MAP / Recall report.
pub fn question_retrieval_runs(
    dataset: &Dataset,
    tokenizer: Tokenizer,
    method: QuestionMethod,
    k: usize,
    params: &QuestionRetrievalParams,
    rerank: Option<(&EmbeddingStore, usize)>,
    exec: Execution,
) -> Result<(BTreeMap<String, RankedList>, QuestionRetrievalReport)> {
    let index = index_questions(dataset.questions(), tokenizer, exec)?;
    let topics: Vec<_> = dataset.topics().collect();
    let runs = exec.try_map(&topics, |t| -> Result<(String, RankedList)> {
        let mut run = retrieve_questions(&index, t, method, k, params)?;
        if let Some((store, pool)) = rerank {
            let v = store.get(&t.id).ok_or_else(|| Error::Unknown {
                kind: "topic embedding",
                id: t.id.clone(),
            })?;
            run = rerank_by_embedding(&run, v, store, pool)?;
        }
        Ok((t.id.clone(), run))
    })?;
    let runs: BTreeMap<String, RankedList> = runs.into_iter().collect();
    let report = eval_question_retrieval(&runs, &bank_labels(dataset))?;
    Ok((runs, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SuiteConfig;

    fn small() -> (RunConfig, Workspace) {
        let config = RunConfig {
            mu: 100.0,
            hash_dim: 16,
            hidden_dims: vec![8],
            learning_rates: vec![0.05],
            epochs: 5,
            folds: 3,
            turn_lengths: vec![0, 1],
            train_turn_lengths: vec![0, 1],
            execution: Execution::Sequential,
            ..RunConfig::default()
        };
        let suite = PlantedSuite::generate(&SuiteConfig {
            topics: 6,
            ..SuiteConfig::default()
        });
        let ws = Workspace::from_suite(&suite, &config).unwrap();
        (config, ws)
    }

    #[test]
    fn config_round_trip_and_validation() {
        let c = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let partial: RunConfig = serde_json::from_str(r#"{"alpha": 0.2, "policy": "neuqs"}"#).unwrap();
        assert_eq!((partial.alpha, partial.policy), (0.2, Policy::Neuqs));
        assert!(serde_json::from_str::<RunConfig>(r#"{"alpah": 0.2}"#).is_err());
        assert!(RunConfig { alpha: 1.5, ..c.clone() }.validate().is_err());
        assert!(RunConfig { folds: 1, ..c.clone() }.validate().is_err());
        assert!(RunConfig { train_policies: vec![Policy::Sigma], ..c }.validate().is_err());
    }

    #[test]
    fn original_query_equals_alpha_one() {
        let (config, ws) = small();
        let folds = folds_for(&ws, &config).unwrap();
        let cfg = RunConfig { tune_alpha: false, ..config };
        let models: Vec<_> = folds.iter().map(|f| untrained_fold(&ws, &cfg, f).unwrap()).collect();
        let run = simulate(&ws, &cfg, Policy::OriginalQuery, &folds, &models).unwrap();
        assert_eq!(run.instances.len(), 24 * (1 + 6));
        for i in &run.instances {
            let topic = ws.dataset.topic(&i.topic_id).unwrap();
            let base = retrieve_original(&ws.index, topic, &cfg.retrieval(1.0)).unwrap();
            let grades = ws.qrels.grades(&i.facet_id);
            for (m, v) in &i.metrics {
                assert_eq!(*v, m.evaluate(&base, grades));
            }
            assert!(i.question_id.is_none());
        }
    }

    #[test]
    fn summary_recomputes_and_files_round_trip() {
        let (config, ws) = small();
        let folds = folds_for(&ws, &config).unwrap();
        let models: Vec<_> = folds.iter().map(|f| untrained_fold(&ws, &config, f).unwrap()).collect();
        let run = simulate(&ws, &config, Policy::Sigma, &folds, &models).unwrap();
        for row in &run.summary {
            let vals: Vec<f64> = run
                .instances
                .iter()
                .filter(|i| i.turn_len == row.turn_len)
                .map(|i| i.metrics[&row.metric])
                .collect();
            assert_eq!(row.count, vals.len());
            assert!((row.mean - vals.iter().sum::<f64>() / vals.len() as f64).abs() < 1e-12);
        }
        let dir = tempfile::tempdir().unwrap();
        write_run(&run, dir.path()).unwrap();
        let (json, tsv, summary) = run_paths(dir.path(), Policy::Sigma);
        assert_eq!(read_run(&json).unwrap(), run);
        assert!(std::fs::read_to_string(tsv).unwrap().starts_with("# policy\tsigma\n# config\t{"));
        assert!(std::fs::read_to_string(summary).unwrap().contains("sigma\tmrr\t1\t0\t"));
    }

    #[test]
    fn evaluate_self_and_mismatch() {
        let (config, ws) = small();
        let folds = folds_for(&ws, &config).unwrap();
        let models: Vec<_> = folds.iter().map(|f| untrained_fold(&ws, &config, f).unwrap()).collect();
        let best = simulate(&ws, &config, Policy::OracleBest, &folds, &models).unwrap();
        let orig = simulate(&ws, &config, Policy::OriginalQuery, &folds, &models).unwrap();
        let same = cmd_evaluate(&best, &best).unwrap();
        assert!(same.metrics.iter().all(|r| r.delta == 0.0 && r.p == 1.0 && r.p_bonferroni == 1.0));
        let cmp = cmd_evaluate(&best, &orig).unwrap();
        assert!(cmp.metrics.iter().all(|r| r.delta > 0.0), "{}", comparison_tsv(&cmp));
        let mut cut = orig.clone();
        cut.instances.pop();
        assert!(matches!(cmd_evaluate(&best, &cut), Err(Error::Mismatch(_))));
    }

    #[test]
    fn train_persist_reload_simulate() {
        let (config, ws) = small();
        let dir = tempfile::tempdir().unwrap();
        let models = train_all(&ws, &config, Some(dir.path())).unwrap();
        assert_eq!(models.len(), 3);
        let folds = read_folds(&dir.path().join("folds.json")).unwrap();
        for (split, m) in folds.iter().zip(&models) {
            assert!(ALPHA_GRID.contains(&m.meta.alpha));
            assert!(m.meta.train_instances > 0);
            for (t, f) in fold_pairs(&ws.dataset, split, Part::Test) {
                assert!(!split.in_train(&t, &f) && !split.in_validation(&t, &f));
            }
            let loaded = load_fold_models(dir.path(), split.fold_index).unwrap();
            assert_eq!(loaded.meta, m.meta);
            assert!(loaded.neuqs.is_some() && loaded.pairwise.is_some());
        }
        let again = train_all(&ws, &config, None).unwrap();
        for (a, b) in models.iter().zip(&again) {
            assert_eq!(a.neuqs, b.neuqs);
            assert_eq!(a.pairwise, b.pairwise);
        }
        let loaded: Vec<_> = folds.iter().map(|f| load_fold_models(dir.path(), f.fold_index).unwrap()).collect();
        let run = simulate(&ws, &config, Policy::Neuqs, &folds, &loaded).unwrap();
        let test_keys: BTreeSet<_> = run.instances.iter().map(|i| (i.topic_id.clone(), i.facet_id.clone())).collect();
        assert_eq!(test_keys.len(), 24);
        assert!(run.instances.iter().all(|i| i.question_id.is_some()));
    }

    #[test]
    fn fallback_store_covers_all_keys() {
        let (_, ws) = small();
        let store = fallback_embeddings(&ws.dataset, 16).unwrap();
        let c = ws.dataset.counts();
        assert_eq!(store.len(), c.topics + c.questions + c.answer_records);
        let via_store = Embedder::Store(store);
        let hashing = Embedder::hashing(16).unwrap();
        let ctx = {
            let mut c = crate::data::ConversationContext::empty("1", "1-1");
            c.push_answered(&ws.dataset, "1-q0").unwrap();
            c
        };
        assert_eq!(via_store.context(&ws.dataset, &ctx).unwrap(), hashing.context(&ws.dataset, &ctx).unwrap());
    }

    #[test]
    fn question_runs_cover_topics() {
        let (_, ws) = small();
        let (runs, report) = question_retrieval_runs(
            &ws.dataset,
            Tokenizer::default(),
            QuestionMethod::Ql,
            30,
            &QuestionRetrievalParams::default(),
            None,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(runs.len(), 6);
        assert_eq!(report.topics, 6);
        assert!(report.map > 0.5, "{report:?}");
        assert!(report.recall[&10] <= report.recall[&20] && report.recall[&20] <= report.recall[&30]);
    }
}
