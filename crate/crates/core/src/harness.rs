//! Fault corpus, experiment sweeps over strategies and trials, and the
//! statistics and reports built from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::affs::{ActionSpace, Goal, StrategySpec};
use crate::engine::{run_search_with, EngineConfig, SearchResult};
use crate::minilang::{parse_named, Executor, Kind, Outcome, ParseError, Program};
use crate::testmodel::TestSuite;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{fault}/{file}: {source}")]
    Parse {
        fault: String,
        file: &'static str,
        source: ParseError,
    },
    #[error("{fault}/manifest.json: {message}")]
    Manifest { fault: String, message: String },
    #[error("{0}: fixed and faulty sources are identical")]
    Identical(String),
    #[error("{0}: fixed and faulty versions expose different functions")]
    SignatureMismatch(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("effect size needs two non-empty samples")]
    EmptySample,
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Manifest {
    pub description: String,
    pub category: String,
    /// The faulty version behaves exactly like the fixed one.
    pub behavior_preserving: bool,
}

/// Fixed and faulty versions of one program.
#[derive(Debug, Clone)]
pub struct FaultPair {
    pub id: String,
    pub fixed: Arc<Program>,
    pub faulty: Arc<Program>,
    pub manifest: Manifest,
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn signatures(p: &Program) -> BTreeMap<&str, Vec<Kind>> {
    p.functions.iter().map(|f| (f.name.as_str(), f.param_kinds())).collect()
}

/// Loads and validates one fault directory.
pub fn load_fault(dir: &Path) -> Result<FaultPair, CorpusError> {
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let fixed_src = read(&dir.join("fixed.minij"))?;
    let faulty_src = read(&dir.join("faulty.minij"))?;
    let manifest: Manifest = serde_json::from_str(&read(&dir.join("manifest.json"))?).map_err(|e| {
        CorpusError::Manifest {
            fault: id.clone(),
            message: e.to_string(),
        }
    })?;
    let parse = |src: &str, file: &'static str| {
        parse_named(src, &format!("{id}/{file}")).map_err(|source| CorpusError::Parse {
            fault: id.clone(),
            file,
            source,
        })
    };
    let fixed = parse(&fixed_src, "fixed.minij")?;
    let faulty = parse(&faulty_src, "faulty.minij")?;
    if fixed_src == faulty_src {
        return Err(CorpusError::Identical(id));
    }
    if signatures(&fixed) != signatures(&faulty) {
        return Err(CorpusError::SignatureMismatch(id));
    }
    Ok(FaultPair {
        id,
        fixed: Arc::new(fixed),
        faulty: Arc::new(faulty),
        manifest,
    })
}

/// Every fault directory under `path`, sorted by id.
pub fn load_corpus(path: &Path) -> Result<Vec<FaultPair>, CorpusError> {
    let entries = fs::read_dir(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if entry.path().is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    dirs.iter().map(|d| load_fault(d)).collect()
}

/// Observable behavior of each call of each test: a return value or an
/// exception identity. `None` marks a call the program cannot accept.
fn behavior(program: &Program, suite: &TestSuite) -> Vec<Vec<Option<Outcome>>> {
    let executor = Executor::new(program);
    suite
        .tests
        .iter()
        .map(|t| match t.try_resolved_calls() {
            Ok(calls) => calls.iter().map(|c| executor.execute(c).ok().map(|r| r.outcome)).collect(),
            Err(_) => vec![None],
        })
        .collect()
}

/// True iff some test behaves differently on the faulty version.
pub fn fault_detected(suite: &TestSuite, pair: &FaultPair) -> bool {
    behavior(&pair.fixed, suite) != behavior(&pair.faulty, suite)
}

/// Effect size: the chance a draw from `xs` exceeds one from `ys`, ties
/// counting half.
pub fn vargha_delaney_a<T: PartialOrd>(xs: &[T], ys: &[T]) -> Result<f64, HarnessError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(HarnessError::EmptySample);
    }
    let mut wins = 0.0;
    for x in xs {
        for y in ys {
            if x > y {
                wins += 1.0;
            } else if x == y {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (xs.len() * ys.len()) as f64)
}

/// Conventional label for an effect size.
pub fn effect_label(a: f64) -> &'static str {
    let d = a.max(1.0 - a);
    if d >= 0.80 {
        "large"
    } else if d >= 0.70 {
        "medium"
    } else if d >= 0.60 {
        "small"
    } else {
        "negligible"
    }
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Deterministic per-trial seed.
pub fn trial_seed(master: u64, fault: &str, strategy: &str, trial: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for part in [fault.as_bytes(), strategy.as_bytes()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    h.update((trial as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub goal: Goal,
    pub strategies: Vec<String>,
    pub trials_per_fault: usize,
    pub engine: EngineConfig,
    pub corpus: PathBuf,
    pub master_seed: u64,
    /// Restricts the sweep to these fault ids.
    pub faults: Option<Vec<String>>,
    /// JSON list of function-name arrays replacing the default action space.
    pub action_space_pin: Option<PathBuf>,
    /// Worker threads; absent means one per available core.
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            goal: Goal::Exceptions,
            strategies: vec!["ucb".into(), "sarsa".into(), "static:EX".into()],
            trials_per_fault: 10,
            engine: EngineConfig::default(),
            corpus: PathBuf::from("corpus"),
            master_seed: 0,
            faults: None,
            action_space_pin: None,
            workers: None,
        }
    }
}

impl ExperimentConfig {
    pub fn strategy_specs(&self) -> Result<Vec<StrategySpec>, HarnessError> {
        if self.strategies.is_empty() {
            return Err(HarnessError::Config("strategies is empty".into()));
        }
        self.strategies
            .iter()
            .map(|s| s.parse().map_err(HarnessError::Config))
            .collect()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials_per_fault == 0 {
            return Err(HarnessError::Config("trials_per_fault must be at least 1".into()));
        }
        self.strategy_specs()?;
        self.engine
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    fn action_space(&self) -> Result<ActionSpace, HarnessError> {
        match &self.action_space_pin {
            None => Ok(ActionSpace::default_for(self.goal)),
            Some(p) => ActionSpace::from_pin_file(self.goal, p).map_err(|e| HarnessError::Config(e.to_string())),
        }
    }
}

/// One row of `trials.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub fault_id: String,
    pub strategy: String,
    pub trial: usize,
    pub seed: u64,
    pub goal_metric: Option<f64>,
    pub normalized_goal_metric: Option<f64>,
    pub fault_detected: bool,
    pub generations: u64,
    pub mean_seconds_per_generation: Option<f64>,
    pub unique_exceptions: Option<usize>,
    pub diversity_fitness: Option<f64>,
    pub strong_mutation_score: Option<f64>,
    pub weak_mutation_score: Option<f64>,
    pub suite_size: Option<usize>,
    pub rendered_chars: Option<usize>,
    pub strategy_updates: usize,
    /// Generations whose log entry carries a reward.
    pub logged_updates: usize,
    /// Sum of rewards in the generation log.
    pub logged_reward_sum: f64,
    /// Sum of per-action reward tallies kept by the strategy.
    pub tallied_reward_sum: f64,
    pub tallied_selections: u64,
    /// `id:generations` pairs separated by `;`.
    pub action_histogram: String,
    pub error: Option<String>,
}

impl TrialRecord {
    fn failed(fault: &str, strategy: &str, trial: usize, seed: u64, error: String) -> Self {
        Self {
            fault_id: fault.into(),
            strategy: strategy.into(),
            trial,
            seed,
            goal_metric: None,
            normalized_goal_metric: None,
            fault_detected: false,
            generations: 0,
            mean_seconds_per_generation: None,
            unique_exceptions: None,
            diversity_fitness: None,
            strong_mutation_score: None,
            weak_mutation_score: None,
            suite_size: None,
            rendered_chars: None,
            strategy_updates: 0,
            logged_updates: 0,
            logged_reward_sum: 0.0,
            tallied_reward_sum: 0.0,
            tallied_selections: 0,
            action_histogram: String::new(),
            error: Some(error),
        }
    }

    fn from_result(
        fault: &FaultPair,
        strategy: &str,
        trial: usize,
        seed: u64,
        result: &SearchResult,
    ) -> Self {
        let m = &result.metrics;
        let stats = result.action_stats.as_deref().unwrap_or(&[]);
        Self {
            fault_id: fault.id.clone(),
            strategy: strategy.into(),
            trial,
            seed,
            goal_metric: Some(m.goal_metric(result.goal)),
            normalized_goal_metric: None,
            fault_detected: fault_detected(&result.final_suite.suite(), fault),
            generations: result.generations,
            mean_seconds_per_generation: (result.generations > 0)
                .then(|| result.total_elapsed_secs() / result.generations as f64),
            unique_exceptions: Some(m.unique_exceptions),
            diversity_fitness: Some(m.diversity_fitness),
            strong_mutation_score: m.strong_mutation_score,
            weak_mutation_score: m.weak_mutation_score,
            suite_size: Some(m.suite_size),
            rendered_chars: Some(m.rendered_chars),
            strategy_updates: result.updates.len(),
            logged_updates: result.log.iter().filter(|r| r.reward.is_some()).count(),
            logged_reward_sum: result.log.iter().filter_map(|r| r.reward).sum(),
            tallied_reward_sum: stats.iter().map(|s| s.sum_reward).sum(),
            tallied_selections: stats.iter().map(|s| s.times_selected).sum(),
            action_histogram: result
                .action_histogram()
                .iter()
                .map(|(a, n)| format!("{a}:{n}"))
                .collect::<Vec<_>>()
                .join(";"),
            error: None,
        }
    }

    pub fn histogram(&self) -> BTreeMap<usize, u64> {
        self.action_histogram
            .split(';')
            .filter_map(|kv| {
                let (k, v) = kv.split_once(':')?;
                Some((k.parse().ok()?, v.parse().ok()?))
            })
            .collect()
    }
}

/// Scales each fault's goal metrics by that fault's maximum over all
/// strategies and trials; an all-zero fault normalizes to zero.
pub fn normalize_goal_metric(records: &mut [TrialRecord]) {
    let mut max: BTreeMap<String, f64> = BTreeMap::new();
    for r in records.iter() {
        if let Some(v) = r.goal_metric {
            let e = max.entry(r.fault_id.clone()).or_insert(0.0);
            *e = e.max(v);
        }
    }
    for r in records.iter_mut() {
        r.normalized_goal_metric = r.goal_metric.map(|v| {
            let m = max[&r.fault_id];
            if m > 0.0 {
                v / m
            } else {
                0.0
            }
        });
    }
}

/// Runs one search per (fault, strategy, trial), in that order.
pub fn run_trials(cfg: &ExperimentConfig, corpus: &[FaultPair]) -> Result<Vec<TrialRecord>, HarnessError> {
    cfg.validate()?;
    let specs = cfg.strategy_specs()?;
    let space = cfg.action_space()?;
    let faults: Vec<&FaultPair> = corpus
        .iter()
        .filter(|f| cfg.faults.as_ref().map_or(true, |ids| ids.contains(&f.id)))
        .collect();
    let mut jobs = Vec::new();
    for f in &faults {
        for (spec, label) in specs.iter().zip(&cfg.strategies) {
            for trial in 0..cfg.trials_per_fault {
                jobs.push((*f, *spec, label.as_str(), trial));
            }
        }
    }
    let run = |&(fault, spec, label, trial): &(&FaultPair, StrategySpec, &str, usize)| {
        let seed = trial_seed(cfg.master_seed, &fault.id, label, trial);
        // One random action per fault, shared by all of its trials.
        let spec = match spec {
            StrategySpec::Random(None) => {
                StrategySpec::Random(Some(trial_seed(cfg.master_seed, &fault.id, "random-action", 0)))
            }
            other => other,
        };
        let engine = EngineConfig {
            rng_seed: seed,
            ..cfg.engine.clone()
        };
        match run_search_with(Arc::clone(&fault.fixed), space.clone(), spec, &engine) {
            Ok(result) => TrialRecord::from_result(fault, label, trial, seed, &result),
            Err(e) => TrialRecord::failed(&fault.id, label, trial, seed, e.to_string()),
        }
    };
    let mut records: Vec<TrialRecord> = match cfg.workers {
        Some(1) => jobs.iter().map(run).collect(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .install(|| jobs.par_iter().map(run).collect()),
        None => jobs.par_iter().map(run).collect(),
    };
    normalize_goal_metric(&mut records);
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub trials: usize,
    pub errors: usize,
    pub median_goal_metric: Option<f64>,
    pub median_normalized_goal_metric: Option<f64>,
    pub fault_detection_percent: f64,
    pub median_seconds_per_generation: Option<f64>,
    pub mean_rendered_chars: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryMetadata {
    pub goal_metric: String,
    pub higher_is_better: bool,
    pub normalization: String,
    pub effect_size: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub goal: Goal,
    pub strategies: BTreeMap<String, StrategySummary>,
    /// `a_measure[x][y]` compares normalized goal metrics of `x` against `y`.
    pub a_measure: BTreeMap<String, BTreeMap<String, f64>>,
    pub metadata: SummaryMetadata,
}

fn goal_metric_name(goal: Goal) -> (&'static str, bool) {
    match goal {
        Goal::Exceptions => ("distinct exceptions raised by the final suite", true),
        Goal::Diversity => ("diversity fitness 1/(1+D) of the final suite", false),
        Goal::StrongMutation => ("strong mutation score of the final suite, percent", true),
    }
}

pub fn summarize(goal: Goal, strategies: &[String], records: &[TrialRecord]) -> Summary {
    fn rows<'a>(records: &'a [TrialRecord], s: &'a str) -> impl Iterator<Item = &'a TrialRecord> {
        records.iter().filter(move |r| r.strategy == s)
    }
    let values = |s: &str, f: fn(&TrialRecord) -> Option<f64>| rows(records, s).filter_map(f).collect::<Vec<f64>>();
    let mut table = BTreeMap::new();
    for s in strategies {
        let n = rows(records, s).count();
        let detected = rows(records, s).filter(|r| r.fault_detected).count();
        let chars = values(s, |r| r.rendered_chars.map(|c| c as f64));
        table.insert(
            s.clone(),
            StrategySummary {
                trials: n,
                errors: rows(records, s).filter(|r| r.error.is_some()).count(),
                median_goal_metric: median(&values(s, |r| r.goal_metric)),
                median_normalized_goal_metric: median(&values(s, |r| r.normalized_goal_metric)),
                fault_detection_percent: if n == 0 { 0.0 } else { detected as f64 / n as f64 * 100.0 },
                median_seconds_per_generation: median(&values(s, |r| r.mean_seconds_per_generation)),
                mean_rendered_chars: (!chars.is_empty()).then(|| chars.iter().sum::<f64>() / chars.len() as f64),
            },
        );
    }
    let mut a_measure = BTreeMap::new();
    for x in strategies {
        let mut row = BTreeMap::new();
        for y in strategies {
            if x == y {
                continue;
            }
            let xs = values(x, |r| r.normalized_goal_metric);
            let ys = values(y, |r| r.normalized_goal_metric);
            if let Ok(a) = vargha_delaney_a(&xs, &ys) {
                row.insert(y.clone(), a);
            }
        }
        a_measure.insert(x.clone(), row);
    }
    let (name, higher) = goal_metric_name(goal);
    Summary {
        goal,
        strategies: table,
        a_measure,
        metadata: SummaryMetadata {
            goal_metric: name.into(),
            higher_is_better: higher,
            normalization: "goal metric divided by its maximum over all strategies and trials of the same fault; \
                            all-zero faults normalize to 0; applied to every goal for cross-fault aggregation"
                .into(),
            effect_size: "Vargha-Delaney A over per-trial normalized goal metrics; 0.5 means no effect, \
                          >= 0.70 medium, >= 0.80 large (or the mirror below 0.5)"
                .into(),
        },
    }
}

/// Most-used actions per strategy, by generations active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRow {
    pub strategy: String,
    pub rank: usize,
    pub action_id: usize,
    pub functions: String,
    pub generations: u64,
    pub share: f64,
}

pub fn top_actions(space: &ActionSpace, strategies: &[String], records: &[TrialRecord], top: usize) -> Vec<ActionRow> {
    let mut out = Vec::new();
    for s in strategies {
        let mut hist: BTreeMap<usize, u64> = BTreeMap::new();
        for r in records.iter().filter(|r| &r.strategy == s) {
            for (a, n) in r.histogram() {
                *hist.entry(a).or_default() += n;
            }
        }
        let total: u64 = hist.values().sum();
        let mut ranked: Vec<(usize, u64)> = hist.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        for (rank, (a, n)) in ranked.into_iter().take(top).enumerate() {
            let functions = space
                .actions
                .get(a)
                .map(|x| x.to_string())
                .unwrap_or_else(|| "(outside space)".into());
            out.push(ActionRow {
                strategy: s.clone(),
                rank: rank + 1,
                action_id: a,
                functions,
                generations: n,
                share: if total == 0 { 0.0 } else { n as f64 / total as f64 },
            });
        }
    }
    out
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let err = |e: &dyn std::fmt::Display| HarnessError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| err(&e))?;
    for r in rows {
        w.serialize(r).map_err(|e| err(&e))?;
    }
    w.flush().map_err(|e| err(&e))
}

/// Paths written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub trials: PathBuf,
    pub summary: PathBuf,
    pub actions: PathBuf,
    pub records: Vec<TrialRecord>,
}

/// Runs the sweep and writes `trials.csv`, `summary.json` and `actions.csv`
/// under `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let corpus = load_corpus(&cfg.corpus)?;
    let records = run_trials(cfg, &corpus)?;
    fs::create_dir_all(out).map_err(|e| HarnessError::Output {
        path: out.to_path_buf(),
        message: e.to_string(),
    })?;
    let trials = out.join("trials.csv");
    write_csv(&trials, &records)?;
    let summary_path = out.join("summary.json");
    let summary = summarize(cfg.goal, &cfg.strategies, &records);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&summary_path, json + "\n").map_err(|e| HarnessError::Output {
        path: summary_path.clone(),
        message: e.to_string(),
    })?;
    let actions = out.join("actions.csv");
    write_csv(&actions, &top_actions(&cfg.action_space()?, &cfg.strategies, &records, 10))?;
    Ok(ExperimentOutput {
        trials,
        summary: summary_path,
        actions,
        records,
    })
}

/// Reads trial rows back from `trials.csv`.
pub fn read_trials(path: &Path) -> Result<Vec<TrialRecord>, HarnessError> {
    let err = |e: &dyn std::fmt::Display| HarnessError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| err(&e))?;
    r.deserialize().map(|row| row.map_err(|e| err(&e))).collect()
}

/// Human-readable tables for an experiment directory.
pub fn report(dir: &Path) -> Result<String, HarnessError> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::Output {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let summary: Summary = serde_json::from_str(&text).map_err(|e| HarnessError::Output {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    let mut out = String::new();
    out.push_str(&format!(
        "goal: {} ({}; {} is better)\n\n",
        summary.goal,
        summary.metadata.goal_metric,
        if summary.metadata.higher_is_better { "higher" } else { "lower" }
    ));
    out.push_str(&format!(
        "{:<22} {:>6} {:>6} {:>12} {:>12} {:>10} {:>12}\n",
        "strategy", "trials", "errors", "median", "median norm", "detect %", "s/gen"
    ));
    for (name, s) in &summary.strategies {
        out.push_str(&format!(
            "{:<22} {:>6} {:>6} {:>12} {:>12} {:>10.1} {:>12}\n",
            name,
            s.trials,
            s.errors,
            fmt(s.median_goal_metric),
            fmt(s.median_normalized_goal_metric),
            s.fault_detection_percent,
            fmt(s.median_seconds_per_generation)
        ));
    }
    out.push_str("\nVargha-Delaney A (row vs column)\n");
    let names: Vec<&String> = summary.strategies.keys().collect();
    out.push_str(&format!("{:<22}", ""));
    for n in &names {
        out.push_str(&format!(" {n:>14}"));
    }
    out.push('\n');
    for x in &names {
        out.push_str(&format!("{x:<22}"));
        for y in &names {
            let cell = summary
                .a_measure
                .get(*x)
                .and_then(|row| row.get(*y))
                .map_or_else(|| "-".to_string(), |a| format!("{a:.3} {}", &effect_label(*a)[..1]));
            out.push_str(&format!(" {cell:>14}"));
        }
        out.push('\n');
    }
    let actions = dir.join("actions.csv");
    if let Ok(mut r) = csv::Reader::from_path(&actions) {
        out.push_str("\nTop actions\n");
        for row in r.deserialize::<ActionRow>().flatten() {
            if row.rank <= 3 {
                out.push_str(&format!(
                    "{:<22} #{} {:<40} {:>5.1}%\n",
                    row.strategy,
                    row.rank,
                    row.functions,
                    row.share * 100.0
                ));
            }
        }
    }
    Ok(out)
}

/// Sorted ids of the bundled faults whose fixed program has at most
/// `max_lines` statements.
pub fn small_programs(corpus: &[FaultPair], max_lines: usize) -> BTreeSet<String> {
    corpus
        .iter()
        .filter(|f| f.fixed.line_count() <= max_lines)
        .map(|f| f.id.clone())
        .collect()
}
