//! Acceptance suite. Prints one PASS / FAIL / SKIP line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use convsim::data::{
    combinations, expand_contexts, expansion_counts, from_release_json, make_folds, AnswerEntry, ConversationContext,
    Dataset, DatasetRecords, FacetKind, FacetRecord, FoldMode, Grades, QuestionRecord, TopicKind,
};
use convsim::embed::Embedder;
use convsim::experiment::{simulate, train_all, untrained_fold, folds_for, RunConfig, Workspace};
use convsim::metrics::{paired_ttest, Metric};
use convsim::nn::{grad_check, MlpModel};
use convsim::par::Execution;
use convsim::questions::{bank_labels, eval_question_retrieval, index_questions, retrieve_questions, QuestionMethod, QuestionRetrievalParams};
use convsim::retrieval::{build_conversation_lm, retrieve, retrieve_original, RetrievalParams};
use convsim::selector::{candidate_mrrs, select, Env, Policy, Selector, SelectorParams};
use convsim::synth::{PlantedSuite, SuiteConfig};
use convsim::text::{score_ql_dirichlet, InvertedIndex, RankedList, Tokenizer};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Outcome;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn suite() -> PlantedSuite {
    PlantedSuite::generate(&SuiteConfig::default())
}

fn index_of(suite: &PlantedSuite) -> InvertedIndex {
    InvertedIndex::build(suite.corpus.clone(), Tokenizer::default(), Execution::Parallel).unwrap()
}

// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct MetricCase {
    ranking: Vec<String>,
    grades: Grades,
    metrics: BTreeMap<String, f64>,
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/metric_oracle.json");
    let cases: Vec<MetricCase> = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let mut worst = 0.0f64;
    let mut compared = 0usize;
    for c in &cases {
        let n = c.ranking.len();
        let run = RankedList::from_scores(
            c.ranking.iter().enumerate().map(|(i, d)| (d.clone(), (n - i) as f64)).collect(),
            n,
        );
        for (name, expected) in &c.metrics {
            let m: Metric = name.parse().unwrap();
            worst = worst.max((m.evaluate(&run, &c.grades) - expected).abs());
            compared += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(
        cases.len() == 1000 && worst <= 1e-9 && elapsed < Duration::from_secs(10),
        format!("{} instances, {compared} values, max |err| {worst:.2e}, {elapsed:.2?}", cases.len()),
    )
}

fn alpha_endpoints() -> Outcome {
    let start = Instant::now();
    let suite = suite();
    let ds = &suite.dataset;
    let index = index_of(&suite);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let topics: Vec<_> = ds.topics().collect();
    let mut bad = Vec::new();
    for n in 0..200 {
        let topic = *topics.choose(&mut rng).unwrap();
        let facets = ds.facets_of(&topic.id).unwrap();
        let facet = facets.choose(&mut rng).unwrap();
        let mut qs = ds.questions_of(&topic.id).unwrap().to_vec();
        let len = rng.random_range(0..=2);
        let mut ctx = ConversationContext::empty(&topic.id, facet);
        for _ in 0..len {
            let q = qs.swap_remove(rng.random_range(0..qs.len()));
            ctx.push_answered(ds, &q).unwrap();
        }
        let q = ds.question(qs.choose(&mut rng).unwrap()).unwrap();
        let answer = ds.answer(&topic.id, facet, &q.id).unwrap();
        let params = RetrievalParams {
            alpha: 1.0,
            mu: [10.0, 100.0, 2000.0][n % 3],
            cutoff: 50,
        };
        let at_one = retrieve(&index, ds, topic, &ctx, Some(q), Some(answer), &params).unwrap();
        if at_one != retrieve_original(&index, topic, &params).unwrap() {
            bad.push(format!("alpha=1 {}", ctx.key()));
        }
        let params = params.with_alpha(0.0);
        let at_zero = retrieve(&index, ds, topic, &ctx, Some(q), Some(answer), &params).unwrap();
        let conv = build_conversation_lm(ds, Tokenizer::default(), &ctx, Some(q), Some(answer)).unwrap();
        if at_zero != score_ql_dirichlet(&index, &conv, params.mu, params.cutoff).unwrap() {
            bad.push(format!("alpha=0 {}", ctx.key()));
        }
    }
    let elapsed = start.elapsed();
    ensure(
        bad.is_empty() && elapsed < Duration::from_secs(30),
        format!("200 fixtures, {} mismatches {:?}, {elapsed:.2?}", bad.len(), bad.first()),
    )
}

/// Scores from an independent enumeration over the vocabulary, per (α, μ),
/// for documents d1..d4.
const GRID: &[(f64, f64, [f64; 4])] = &[
    (0.0, 0.5, [-1.955789376374398, -1.596888572949239, -1.8508420059127686, -1.1893170547532557]),
    (0.0, 5.0, [-1.2991949573405768, -1.1909541428123602, -1.296783038592661, -1.031976609080671]),
    (0.0, 50.0, [-1.1287060688119666, -1.113369137623324, -1.1342741100492395, -1.0807337621055908]),
    (0.0, 2000.0, [-1.111524944971717, -1.1111207553988371, -1.111725332428275, -1.1101610401079187]),
    (0.2, 0.5, [-1.8485355028491615, -1.5614148601090339, -1.7645776064798575, -1.7779529094399]),
    (0.2, 5.0, [-1.3522963695910033, -1.26570371796843, -1.350366834592671, -1.3111309344541473]),
    (0.2, 50.0, [-1.2438055706903206, -1.2315360257394063, -1.248260003680139, -1.2305692567229591]),
    (0.2, 2000.0, [-1.2359739021854976, -1.2356505505271937, -1.236134212150744, -1.2355484192036736]),
    (0.5, 0.5, [-1.6876546925613045, -1.5082042908487252, -1.6351810073304898, -2.6609066914698665]),
    (0.5, 5.0, [-1.4319484879666429, -1.3778280807025345, -1.4307425285926851, -1.7298624225143615]),
    (0.5, 50.0, [-1.416454823507851, -1.4087863579135296, -1.4192388441264874, -1.455322498649011]),
    (0.5, 2000.0, [-1.4226473380061684, -1.4224452432197283, -1.4227475317344473, -1.4236294878473061]),
    (0.8, 0.5, [-1.5267738822734487, -1.4549937215884168, -1.5057844081811227, -3.5438604734998327]),
    (0.8, 5.0, [-1.5116006063422824, -1.4899524434366391, -1.5111182225926993, -2.1485939105745757]),
    (0.8, 50.0, [-1.5891040763253816, -1.5860366900876532, -1.5902176845728362, -1.680075740575063]),
    (0.8, 2000.0, [-1.6093207738268391, -1.609239935912263, -1.6093608513181505, -1.6117105564909386]),
    (1.0, 0.5, [-1.4195200087482112, -1.4195200087482112, -1.4195200087482112, -4.132496328186477]),
    (1.0, 5.0, [-1.564702018592709, -1.564702018592709, -1.564702018592709, -2.427748235948052]),
    (1.0, 50.0, [-1.7042035782037352, -1.7042035782037352, -1.7042035782037352, -1.8299112351924312]),
    (1.0, 2000.0, [-1.7337697310406197, -1.7337697310406197, -1.7337697310406197, -1.7370979355866936]),
];

fn interpolated_grid() -> Outcome {
    let ds = Dataset::from_json_str(
        r#"{
      "topic_query": {"t": "jaguar"},
      "topic_kind": {"t": "ambiguous"},
      "facets": {"t-1": {"topic_id": "t", "description": "the car", "kind": "informational"}},
      "questions": {
        "q1": {"topic_id": "t", "text": "do you mean the animal"},
        "q2": {"topic_id": "t", "text": "do you mean the car"}
      },
      "answers": {
        "t|t-1|q1": {"text": "No answer", "no_answer": true},
        "t|t-1|q2": {"text": "yes the car dealer", "no_answer": false}
      }
    }"#,
    )
    .unwrap();
    let index = InvertedIndex::build(
        [
            ("d1", "jaguar animal jungle cat"),
            ("d2", "jaguar car dealer price"),
            ("d3", "jaguar xj6 used car"),
            ("d4", "the cat and the car"),
        ]
        .map(|(a, b)| (a.to_string(), b.to_string())),
        Tokenizer::default(),
        Execution::Sequential,
    )
    .unwrap();
    let topic = ds.topic("t").unwrap();
    let mut ctx = ConversationContext::empty("t", "t-1");
    ctx.push_answered(&ds, "q1").unwrap();
    let q = ds.question("q2").unwrap();
    let answer = ds.answer("t", "t-1", "q2").unwrap();
    let mut worst = 0.0f64;
    for &(alpha, mu, expected) in GRID {
        let run = retrieve(&index, &ds, topic, &ctx, Some(q), Some(answer), &RetrievalParams { alpha, mu, cutoff: 10 }).unwrap();
        let got: BTreeMap<&str, f64> = run.entries().iter().map(|(d, s)| (d.as_str(), *s)).collect();
        for (i, e) in expected.iter().enumerate() {
            worst = worst.max((got[format!("d{}", i + 1).as_str()] - e).abs());
        }
    }
    ensure(worst <= 1e-9, format!("{} (alpha, mu) points x 4 docs, max |err| {worst:.2e}", GRID.len()))
}

fn oracle_sandwich() -> Outcome {
    let suite = suite();
    let index = index_of(&suite);
    let embedder = Embedder::hashing(64).unwrap();
    let env = Env {
        dataset: &suite.dataset,
        index: &index,
        embedder: &embedder,
        qrels: &suite.qrels,
        retrieval: RetrievalParams { alpha: 0.5, mu: 100.0, cutoff: 100 },
        selector: SelectorParams::default(),
    };
    let ds = &suite.dataset;
    let mut contexts = 0usize;
    let mut violations = Vec::new();
    let policies = [Selector::untrained(Policy::Random, 7).unwrap(), Selector::untrained(Policy::Sigma, 0).unwrap()];
    for f in ds.facets() {
        let topic = ds.topic(&f.topic_id).unwrap();
        for len in 0..=2 {
            for cc in expand_contexts(ds, &f.topic_id, &f.id, len).unwrap() {
                contexts += 1;
                let mrrs: BTreeMap<String, f64> = candidate_mrrs(&env, topic, &f.id, &cc.context, &cc.candidates)
                    .unwrap()
                    .into_iter()
                    .collect();
                let best = mrrs.values().copied().fold(f64::NEG_INFINITY, f64::max);
                let worst = mrrs.values().copied().fold(f64::INFINITY, f64::min);
                for p in &policies {
                    let pick = select(p, &env, topic, &f.id, &cc.context, &cc.candidates).unwrap().unwrap();
                    let m = mrrs[&pick];
                    if !(best >= m && m >= worst) {
                        violations.push(format!("{} {}", p.policy(), cc.context.key()));
                    }
                }
                for mode in [Policy::OracleBest, Policy::OracleWorst] {
                    let pick = select(&Selector::untrained(mode, 0).unwrap(), &env, topic, &f.id, &cc.context, &cc.candidates)
                        .unwrap()
                        .unwrap();
                    let want = if mode == Policy::OracleBest { best } else { worst };
                    if mrrs[&pick] != want {
                        violations.push(format!("{mode} {}", cc.context.key()));
                    }
                }
            }
        }
    }
    ensure(
        violations.is_empty() && ds.counts().topics == 20 && ds.counts().facets == 80 && contexts == 80 * (1 + 6 + 15),
        format!("{contexts} contexts at l=0..2, {} violations {:?}", violations.len(), violations.first()),
    )
}

fn experiment_config() -> RunConfig {
    RunConfig {
        mu: 100.0,
        hash_dim: 32,
        hidden_dims: vec![16],
        learning_rates: vec![0.01, 0.05],
        epochs: 15,
        folds: 5,
        turn_lengths: vec![0, 1],
        train_turn_lengths: vec![0, 1],
        train_policies: vec![Policy::Neuqs],
        ..RunConfig::default()
    }
}

fn mean_metric(run: &convsim::experiment::RunResult, turn: usize, metric: Metric) -> f64 {
    let v: Vec<f64> = run.instances.iter().filter(|i| i.turn_len == turn).map(|i| i.metrics[&metric]).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn oracle_improvement() -> Outcome {
    let suite = suite();
    let config = RunConfig {
        turn_lengths: vec![0],
        ..experiment_config()
    };
    let ws = Workspace::from_suite(&suite, &config).unwrap();
    let folds = folds_for(&ws, &config).unwrap();
    let models: Vec<_> = folds.iter().map(|f| untrained_fold(&ws, &config, f).unwrap()).collect();
    let best = simulate(&ws, &config, Policy::OracleBest, &folds, &models).unwrap();
    let orig = simulate(&ws, &config, Policy::OriginalQuery, &folds, &models).unwrap();
    let (b, o) = (mean_metric(&best, 0, Metric::Mrr), mean_metric(&orig, 0, Metric::Mrr));
    let alphas: Vec<f64> = models.iter().map(|m| m.meta.alpha).collect();
    ensure(
        b >= 1.5 * o && best.instances.len() == 80,
        format!("MRR original {o:.4} -> best {b:.4} ({:+.1}%), tuned alpha per fold {alphas:?}", 100.0 * (b / o - 1.0)),
    )
}

fn neuqs_beats_random() -> Outcome {
    let suite = suite();
    let config = experiment_config();
    let ws = Workspace::from_suite(&suite, &config).unwrap();
    let folds = folds_for(&ws, &config).unwrap();
    let models = train_all(&ws, &config, None).unwrap();
    let neuqs = simulate(&ws, &config, Policy::Neuqs, &folds, &models).unwrap();
    let random = simulate(&ws, &config, Policy::Random, &folds, &models).unwrap();
    assert_eq!(
        neuqs.instances.iter().map(|i| &i.key).collect::<Vec<_>>(),
        random.instances.iter().map(|i| &i.key).collect::<Vec<_>>()
    );
    let a: Vec<f64> = neuqs.instances.iter().map(|i| i.metrics[&Metric::Mrr]).collect();
    let b: Vec<f64> = random.instances.iter().map(|i| i.metrics[&Metric::Mrr]).collect();
    let test = paired_ttest(&a, &b).unwrap();
    let (ma, mb) = (a.iter().sum::<f64>() / a.len() as f64, b.iter().sum::<f64>() / b.len() as f64);
    ensure(
        a.len() >= 200 && ma > mb && test.p < 0.05,
        format!("{} contexts, MRR neuqs {ma:.4} vs random {mb:.4}, t {:.2}, p {:.2e}", a.len(), test.t, test.p),
    )
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let input = rng.random_range(1..=12);
        let hidden: Vec<usize> = (0..rng.random_range(0..=2)).map(|_| rng.random_range(1..=10)).collect();
        let model = MlpModel::new(input, &hidden, 2, &mut rng);
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-2.0..2.0)).collect();
        worst = worst.max(grad_check(&model, &x, rng.random_range(0..2), 1e-5));
    }
    ensure(worst < 1e-4, format!("100 draws, max relative error {worst:.2e}"))
}

fn bank(z: usize) -> Dataset {
    let mut r = DatasetRecords::default();
    r.topic_query.insert("t".into(), "query".into());
    r.topic_kind.insert("t".into(), TopicKind::Faceted);
    r.facets.insert(
        "f".into(),
        FacetRecord { topic_id: "t".into(), description: "facet".into(), kind: FacetKind::Informational },
    );
    for i in 0..z {
        let q = format!("q{i}");
        r.questions.insert(q.clone(), QuestionRecord { topic_id: "t".into(), text: format!("question {i}") });
        r.answers.insert(format!("t|f|{q}"), AnswerEntry { text: format!("answer {i}"), no_answer: false });
    }
    Dataset::from_records(r).unwrap()
}

fn binomial(n: u64, k: u64) -> u64 {
    // n! / (k! (n-k)!) with exact factorials for n <= 8
    let fact = |m: u64| (1..=m).product::<u64>();
    fact(n) / (fact(k) * fact(n - k))
}

fn qulac_path() -> Option<PathBuf> {
    std::env::var_os("QULAC_DATASET").map(PathBuf::from).filter(|p| p.exists())
}

fn load_qulac(path: &PathBuf) -> Dataset {
    let text = std::fs::read_to_string(path).unwrap();
    Dataset::from_json_str(&text).or_else(|_| from_release_json(&text)).unwrap()
}

fn expansion() -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    for z in 1..=8usize {
        let ds = bank(z);
        for l in 0..z {
            let got = expand_contexts(&ds, "t", "f", l).unwrap();
            let distinct: BTreeSet<String> = got.iter().map(|c| c.context.key()).collect();
            let want = binomial(z as u64, l as u64);
            let closed = expansion_counts(&ds, &[l]);
            if got.len() as u64 != want
                || distinct.len() != got.len()
                || combinations(z, l).len() as u64 != want
                || closed.contexts != want
                || closed.instances != want * (z - l) as u64
                || got.iter().any(|c| c.candidates.len() != z - l)
            {
                bad.push((z, l));
            }
            checked += 1;
        }
    }
    let mut detail = format!("{checked} (z, l) pairs exhaustive, {} mismatches", bad.len());
    let mut ok = bad.is_empty();
    match qulac_path() {
        Some(p) => {
            let c = expansion_counts(&load_qulac(&p), &[0, 1, 2, 3]);
            detail += &format!("; Qulac l=0..3: {} contexts, {} instances", c.contexts, c.instances);
            ok &= c.contexts == 75_200 && c.instances == 907_366;
        }
        None => detail += "; Qulac part skipped (QULAC_DATASET not set)",
    }
    ensure(ok, detail)
}

fn qulac_question_retrieval() -> Outcome {
    let Some(path) = qulac_path() else {
        return Outcome::Skip("QULAC_DATASET not set".into());
    };
    let start = Instant::now();
    let ds = load_qulac(&path);
    let index = index_questions(ds.questions(), Tokenizer::default(), Execution::Parallel).unwrap();
    let params = QuestionRetrievalParams::default();
    let runs: BTreeMap<String, RankedList> = ds
        .topics()
        .map(|t| (t.id.clone(), retrieve_questions(&index, t, QuestionMethod::Ql, 100, &params).unwrap()))
        .collect();
    let report = eval_question_retrieval(&runs, &bank_labels(&ds)).unwrap();
    let r30 = report.recall[&30];
    let elapsed = start.elapsed();
    ensure(
        (report.map - 0.6714).abs() <= 0.05 && (r30 - 0.7076).abs() <= 0.05 && elapsed < Duration::from_secs(600),
        format!("QL MAP {:.4}, R@30 {r30:.4} over {} topics, {elapsed:.2?}", report.map, report.topics),
    )
}

fn fold_hygiene() -> Outcome {
    let mut datasets = vec![("synthetic", suite().dataset)];
    if let Some(p) = qulac_path() {
        datasets.push(("qulac", load_qulac(&p)));
    }
    let mut detail = Vec::new();
    let mut ok = true;
    for (name, ds) in &datasets {
        for mode in [FoldMode::ByTopic, FoldMode::ByFacet] {
            let folds = make_folds(ds, mode, 5, 42).unwrap();
            let mut tested = BTreeSet::new();
            let mut leaks = 0usize;
            for f in &folds {
                leaks += f.train.intersection(&f.test).count() + f.validation.intersection(&f.test).count();
                tested.extend(f.test.iter().cloned());
                // the unit of a pair never lands in two parts of one fold
                for facet in ds.facets() {
                    let parts = [f.in_train(&facet.topic_id, &facet.id), f.in_validation(&facet.topic_id, &facet.id), f.in_test(&facet.topic_id, &facet.id)];
                    if parts.iter().filter(|&&b| b).count() != 1 {
                        leaks += 1;
                    }
                }
            }
            let units: BTreeSet<String> = match mode {
                FoldMode::ByTopic => ds.topics().map(|t| t.id.clone()).collect(),
                FoldMode::ByFacet => ds.facets().map(|f| f.id.clone()).collect(),
            };
            ok &= leaks == 0 && tested == units;
            detail.push(format!("{name} {mode:?}: {leaks} leaks, test covers {}/{}", tested.len(), units.len()));
        }
    }
    ensure(ok, detail.join("; "))
}

fn main() {
    let checks: &[(&str, Check)] = &[
        ("metric oracle equivalence", metric_oracle),
        ("alpha endpoint reduction", alpha_endpoints),
        ("interpolated Dirichlet grid oracle", interpolated_grid),
        ("oracle sandwich", oracle_sandwich),
        ("oracle improvement over original query", oracle_improvement),
        ("neuqs beats random", neuqs_beats_random),
        ("gradient correctness", gradient_check),
        ("multi-turn expansion counts", expansion),
        ("qulac question retrieval", qulac_question_retrieval),
        ("fold hygiene", fold_hygiene),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass(d) => println!("PASS  {name}: {d} [{secs:.1}s]"),
            Outcome::Skip(d) => println!("SKIP  {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL  {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
