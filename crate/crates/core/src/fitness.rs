//! Suite-level fitness functions. Every function is minimized and lies in
//! `[0, 1]`; zero means the criterion is fully satisfied.

use std::cell::{Cell, OnceCell};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::{levenshtein_chars, nu};
use crate::minilang::{
    infer, ExceptionRecord, ExecutionResult, Executor, FunctionCall, Kind, Outcome, Program, Value,
};
use crate::mutation::{classify_calls, generate_mutants, Mutant, MutantOutcome, MutantStatus};
use crate::testmodel::{render_test, GoalId, TestCase, TestError, TestSuite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FitnessFunctionId {
    Ex,
    Branch,
    DirectBranch,
    Line,
    Method,
    Mnec,
    Output,
    WeakMut,
    StrongMut,
    Diversity,
}

impl FitnessFunctionId {
    pub const ALL: [FitnessFunctionId; 10] = [
        FitnessFunctionId::Ex,
        FitnessFunctionId::Branch,
        FitnessFunctionId::DirectBranch,
        FitnessFunctionId::Line,
        FitnessFunctionId::Method,
        FitnessFunctionId::Mnec,
        FitnessFunctionId::Output,
        FitnessFunctionId::WeakMut,
        FitnessFunctionId::StrongMut,
        FitnessFunctionId::Diversity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FitnessFunctionId::Ex => "EX",
            FitnessFunctionId::Branch => "BRANCH",
            FitnessFunctionId::DirectBranch => "DIRECT_BRANCH",
            FitnessFunctionId::Line => "LINE",
            FitnessFunctionId::Method => "METHOD",
            FitnessFunctionId::Mnec => "MNEC",
            FitnessFunctionId::Output => "OUTPUT",
            FitnessFunctionId::WeakMut => "WEAK_MUT",
            FitnessFunctionId::StrongMut => "STRONG_MUT",
            FitnessFunctionId::Diversity => "DIVERSITY",
        }
    }

    /// Position in [`FitnessFunctionId::ALL`].
    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn needs_mutants(self) -> bool {
        matches!(self, FitnessFunctionId::WeakMut | FitnessFunctionId::StrongMut)
    }
}

impl fmt::Display for FitnessFunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FitnessFunctionId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        FitnessFunctionId::ALL
            .into_iter()
            .find(|f| f.name() == norm)
            .ok_or_else(|| format!("unknown fitness function '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FitnessError {
    #[error("mutation fitness is undefined without mutants")]
    NoMutants,
    #[error("composite fitness of an empty action")]
    EmptyAction,
    #[error("invalid test: {0}")]
    InvalidTest(#[from] TestError),
}

/// Return-value class an OUTPUT goal asks some call to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OutputBucket {
    Negative,
    Zero,
    Positive,
    True,
    False,
    Empty,
    NonEmpty,
}

impl OutputBucket {
    fn for_kind(kind: Kind) -> &'static [OutputBucket] {
        match kind {
            Kind::Int => &[OutputBucket::Negative, OutputBucket::Zero, OutputBucket::Positive],
            Kind::Bool => &[OutputBucket::True, OutputBucket::False],
            Kind::Str => &[OutputBucket::Empty, OutputBucket::NonEmpty],
        }
    }

    fn contains(self, v: &Value) -> bool {
        match (self, v) {
            (OutputBucket::Negative, Value::Int(i)) => *i < 0,
            (OutputBucket::Zero, Value::Int(i)) => *i == 0,
            (OutputBucket::Positive, Value::Int(i)) => *i > 0,
            (OutputBucket::True, Value::Bool(b)) => *b,
            (OutputBucket::False, Value::Bool(b)) => !*b,
            (OutputBucket::Empty, Value::Str(s)) => s.is_empty(),
            (OutputBucket::NonEmpty, Value::Str(s)) => !s.is_empty(),
            _ => false,
        }
    }

    /// How far an integer return is from this bucket, for numeric buckets.
    fn int_distance(self, v: i64) -> Option<f64> {
        let v = v as f64;
        match self {
            OutputBucket::Negative => Some((v + 1.0).max(0.0)),
            OutputBucket::Zero => Some(v.abs()),
            OutputBucket::Positive => Some((1.0 - v).max(0.0)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputGoal {
    pub function: String,
    pub bucket: OutputBucket,
}

/// One executed call. Calls share no state, so a call's results hold in
/// every test that contains it.
#[derive(Debug)]
pub struct CallEval {
    pub call: FunctionCall,
    pub result: ExecutionResult,
    mutants: OnceCell<Vec<MutantOutcome>>,
}

/// Everything known about one executed test.
#[derive(Debug)]
pub struct TestEval {
    /// Dense id, stable for the life of the context.
    pub id: u32,
    pub calls: Vec<Rc<CallEval>>,
    pub exceptions: BTreeSet<ExceptionRecord>,
    mutants: OnceCell<Vec<MutantOutcome>>,
    source: OnceCell<Vec<char>>,
    offered: Cell<bool>,
}

impl TestEval {
    pub fn results(&self) -> impl Iterator<Item = &ExecutionResult> {
        self.calls.iter().map(|c| &c.result)
    }

    pub fn called_functions(&self) -> BTreeSet<&str> {
        self.results()
            .flat_map(|r| r.called_functions.iter().map(|(n, _)| n.as_str()))
            .collect()
    }
}

/// Per-run evaluation state: the program, its mutants, cached test
/// executions and the exceptions discovered so far.
pub struct FitnessContext {
    program: Arc<Program>,
    mutants: Arc<Vec<Mutant>>,
    output_goals: Vec<OutputGoal>,
    cache: HashMap<TestCase, Rc<TestEval>>,
    calls: HashMap<FunctionCall, Rc<CallEval>>,
    discovered: BTreeSet<ExceptionRecord>,
    pair_distances: HashMap<(u32, u32), u64>,
    next_id: u32,
    executions: u64,
}

impl FitnessContext {
    pub fn new(program: Arc<Program>) -> Self {
        let mutants = Arc::new(generate_mutants(&program));
        Self::with_mutants(program, mutants)
    }

    pub fn with_mutants(program: Arc<Program>, mutants: Arc<Vec<Mutant>>) -> Self {
        let kinds = infer::return_kinds(&program);
        let output_goals = program
            .functions
            .iter()
            .zip(&kinds)
            .flat_map(|(f, ks)| {
                ks.iter().flat_map(move |k| {
                    OutputBucket::for_kind(*k).iter().map(move |b| OutputGoal {
                        function: f.name.clone(),
                        bucket: *b,
                    })
                })
            })
            .collect();
        Self {
            program,
            mutants,
            output_goals,
            cache: HashMap::new(),
            calls: HashMap::new(),
            discovered: BTreeSet::new(),
            pair_distances: HashMap::new(),
            next_id: 0,
            executions: 0,
        }
    }

    pub fn program(&self) -> &Arc<Program> {
        &self.program
    }

    pub fn mutants(&self) -> &[Mutant] {
        &self.mutants
    }

    pub fn output_goals(&self) -> &[OutputGoal] {
        &self.output_goals
    }

    /// Exceptions raised by any test evaluated in this context.
    pub fn discovered_exceptions(&self) -> &BTreeSet<ExceptionRecord> {
        &self.discovered
    }

    /// Number of distinct calls executed so far.
    pub fn executions(&self) -> u64 {
        self.executions
    }

    pub fn evaluate(&mut self, test: &TestCase) -> Result<Rc<TestEval>, FitnessError> {
        if let Some(e) = self.cache.get(test) {
            return Ok(Rc::clone(e));
        }
        let executor = Executor::new(&self.program);
        let mut calls = Vec::with_capacity(test.len());
        for call in test.try_resolved_calls()? {
            if let Some(c) = self.calls.get(&call) {
                calls.push(Rc::clone(c));
                continue;
            }
            let result = executor.execute(&call).map_err(TestError::from)?;
            self.executions += 1;
            let c = Rc::new(CallEval {
                call: call.clone(),
                result,
                mutants: OnceCell::new(),
            });
            self.calls.insert(call, Rc::clone(&c));
            calls.push(c);
        }
        let exceptions: BTreeSet<ExceptionRecord> = calls
            .iter()
            .filter_map(|c| c.result.outcome.exception().cloned())
            .collect();
        self.discovered.extend(exceptions.iter().cloned());
        let eval = Rc::new(TestEval {
            id: self.next_id,
            calls,
            exceptions,
            mutants: OnceCell::new(),
            source: OnceCell::new(),
            offered: Cell::new(false),
        });
        self.next_id += 1;
        self.cache.insert(test.clone(), Rc::clone(&eval));
        Ok(eval)
    }

    /// True the first time it is called for `test` since it was cached.
    pub fn first_offer(&mut self, test: &TestCase) -> Result<bool, FitnessError> {
        let eval = self.evaluate(test)?;
        Ok(!eval.offered.replace(true))
    }

    /// Outcome of `test` against every mutant, indexed by mutant id.
    pub fn mutant_outcomes<'e>(&self, _test: &TestCase, eval: &'e TestEval) -> &'e [MutantOutcome] {
        eval.mutants.get_or_init(|| {
            let mut merged = vec![MutantOutcome::NOT_REACHED; self.mutants.len()];
            for c in &eval.calls {
                let per_call = c.mutants.get_or_init(|| {
                    self.mutants
                        .iter()
                        .map(|m| {
                            classify_calls(m, std::slice::from_ref(&c.call), std::slice::from_ref(&c.result))
                                .expect("result belongs to its call")
                        })
                        .collect()
                });
                for (slot, o) in merged.iter_mut().zip(per_call) {
                    *slot = slot.merge(*o);
                }
            }
            merged
        })
    }

    fn source<'e>(test: &TestCase, eval: &'e TestEval) -> &'e [char] {
        eval.source.get_or_init(|| render_test(test).chars().collect())
    }

    fn pair_distance(&mut self, a: (&TestCase, &TestEval), b: (&TestCase, &TestEval)) -> u64 {
        let key = (a.1.id.min(b.1.id), a.1.id.max(b.1.id));
        if let Some(d) = self.pair_distances.get(&key) {
            return *d;
        }
        let d = levenshtein_chars(Self::source(a.0, a.1), Self::source(b.0, b.1)) as u64;
        self.pair_distances.insert(key, d);
        d
    }

    /// Sum of pairwise edit distances between the rendered tests of `suite`.
    pub fn diversity(&mut self, suite: &TestSuite) -> Result<u64, FitnessError> {
        let evals = self.evaluate_all(suite)?;
        let mut total = 0u64;
        for i in 0..evals.len() {
            for j in i + 1..evals.len() {
                total += self.pair_distance(
                    (&suite.tests[i], &evals[i]),
                    (&suite.tests[j], &evals[j]),
                );
            }
        }
        Ok(total)
    }

    pub fn evaluate_all(&mut self, suite: &TestSuite) -> Result<Vec<Rc<TestEval>>, FitnessError> {
        suite.tests.iter().map(|t| self.evaluate(t)).collect()
    }

    /// Goals of the given family covered by `test`.
    pub fn coverage(&mut self, test: &TestCase, family: GoalFamily) -> Result<BTreeSet<GoalId>, FitnessError> {
        let eval = self.evaluate(test)?;
        Ok(match family {
            GoalFamily::Exceptions => eval.exceptions.iter().cloned().map(GoalId::Exception).collect(),
            GoalFamily::Methods => eval
                .called_functions()
                .into_iter()
                .map(|n| GoalId::Method(n.to_string()))
                .collect(),
            GoalFamily::Mutants => self
                .mutant_outcomes(test, &eval)
                .iter()
                .zip(self.mutants.iter())
                .filter(|(o, _)| o.status == MutantStatus::Killed)
                .map(|(_, m)| GoalId::Mutant(m.id))
                .collect(),
        })
    }

    /// Best mutant status reached by any test of `suite`, per mutant.
    pub fn best_statuses(&mut self, suite: &TestSuite) -> Result<Vec<MutantStatus>, FitnessError> {
        let evals = self.evaluate_all(suite)?;
        let mut best = vec![MutantStatus::NotReached; self.mutants.len()];
        for (t, e) in suite.tests.iter().zip(&evals) {
            for (slot, o) in best.iter_mut().zip(self.mutant_outcomes(t, e)) {
                *slot = (*slot).max(o.status);
            }
        }
        Ok(best)
    }

    /// Drops cached evaluations of tests outside `live`.
    pub fn retain<'a>(&mut self, live: impl IntoIterator<Item = &'a TestCase>) {
        let keep: BTreeSet<&TestCase> = live.into_iter().collect();
        self.cache.retain(|t, _| keep.contains(t));
        let live_calls: std::collections::HashSet<&FunctionCall> =
            self.cache.values().flat_map(|e| e.calls.iter().map(|c| &c.call)).collect();
        self.calls.retain(|c, _| live_calls.contains(c));
        let ids: BTreeSet<u32> = self.cache.values().map(|e| e.id).collect();
        self.pair_distances
            .retain(|(a, b), _| ids.contains(a) && ids.contains(b));
    }

    /// Score of `f` on `suite`, memoized on the suite.
    pub fn score(&mut self, f: FitnessFunctionId, suite: &mut TestSuite) -> Result<f64, FitnessError> {
        if let Some(v) = suite.cached_fitness.get(&f) {
            return Ok(*v);
        }
        let v = eval_fitness(f, suite, self)?;
        suite.cached_fitness.insert(f, v);
        Ok(v)
    }

    /// Composite score of `suite` under the functions of one action.
    pub fn composite(&mut self, fs: &[FitnessFunctionId], suite: &mut TestSuite) -> Result<f64, FitnessError> {
        let mut scores = BTreeMap::new();
        for &f in fs {
            scores.insert(f, self.score(f, suite)?);
        }
        composite_fitness(&scores)
    }
}

/// Goal families a final suite can be minimized against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalFamily {
    Exceptions,
    Methods,
    Mutants,
}

/// Unweighted sum of the given scores.
pub fn composite_fitness(scores: &BTreeMap<FitnessFunctionId, f64>) -> Result<f64, FitnessError> {
    if scores.is_empty() {
        return Err(FitnessError::EmptyAction);
    }
    Ok(scores.values().sum())
}

/// Pairwise edit-distance diversity of a suite and its fitness `1/(1+D)`.
pub fn suite_diversity(suite: &TestSuite) -> (u64, f64) {
    let sources: Vec<Vec<char>> = suite.tests.iter().map(|t| render_test(t).chars().collect()).collect();
    let mut d = 0u64;
    for i in 0..sources.len() {
        for j in i + 1..sources.len() {
            d += levenshtein_chars(&sources[i], &sources[j]) as u64;
        }
    }
    (d, 1.0 / (1.0 + d as f64))
}

/// Evaluates one fitness function on `suite`.
pub fn eval_fitness(
    f: FitnessFunctionId,
    suite: &TestSuite,
    ctx: &mut FitnessContext,
) -> Result<f64, FitnessError> {
    use FitnessFunctionId::*;
    if f.needs_mutants() && ctx.mutants.is_empty() {
        return Err(FitnessError::NoMutants);
    }
    let evals = ctx.evaluate_all(suite)?;
    let program = Arc::clone(&ctx.program);
    let ratio = |missing: usize, total: usize| {
        if total == 0 {
            0.0
        } else {
            missing as f64 / total as f64
        }
    };
    Ok(match f {
        Ex => {
            let unique: BTreeSet<&ExceptionRecord> = evals.iter().flat_map(|e| &e.exceptions).collect();
            1.0 / (1.0 + unique.len() as f64)
        }
        Branch | DirectBranch => {
            let n = program.branch_count();
            let mut best_true = vec![f64::INFINITY; n];
            let mut best_false = vec![f64::INFINITY; n];
            for b in evals
                .iter()
                .flat_map(|e| e.results())
                .flat_map(|r| &r.branch_evals)
                .filter(|b| f == Branch || b.direct)
            {
                let i = b.branch.index();
                best_true[i] = best_true[i].min(b.distance_true);
                best_false[i] = best_false[i].min(b.distance_false);
            }
            let sum: f64 = best_true.iter().chain(&best_false).map(|d| nu(*d)).sum();
            if n == 0 {
                0.0
            } else {
                sum / (2 * n) as f64
            }
        }
        Line => {
            let hit: BTreeSet<_> = evals.iter().flat_map(|e| e.results()).flat_map(|r| &r.lines_hit).collect();
            ratio(program.line_count() - hit.len(), program.line_count())
        }
        Method => {
            let called: BTreeSet<&str> = evals.iter().flat_map(|e| e.called_functions()).collect();
            let total = program.functions.len();
            ratio(total - called.len(), total)
        }
        Mnec => {
            let clean: BTreeSet<&str> = evals
                .iter()
                .flat_map(|e| e.results())
                .filter(|r| matches!(r.outcome, Outcome::Return(_)))
                .map(|r| r.entry.as_str())
                .collect();
            let total = program.functions.len();
            ratio(total - clean.len(), total)
        }
        Output => {
            let goals = &ctx.output_goals;
            if goals.is_empty() {
                0.0
            } else {
                let returns: Vec<(&str, &Value)> = evals
                    .iter()
                    .flat_map(|e| e.results())
                    .filter_map(|r| match &r.outcome {
                        Outcome::Return(v) => Some((r.entry.as_str(), v)),
                        Outcome::Raised(_) => None,
                    })
                    .collect();
                let sum: f64 = goals
                    .iter()
                    .map(|g| {
                        let mine = returns.iter().filter(|(n, _)| *n == g.function).map(|(_, v)| *v);
                        let mut best = f64::INFINITY;
                        for v in mine {
                            if g.bucket.contains(v) {
                                return 0.0;
                            }
                            if let Value::Int(i) = v {
                                if let Some(d) = g.bucket.int_distance(*i) {
                                    best = best.min(d);
                                }
                            }
                        }
                        nu(best)
                    })
                    .sum();
                sum / goals.len() as f64
            }
        }
        WeakMut => {
            let mut best = vec![f64::INFINITY; ctx.mutants.len()];
            for (t, e) in suite.tests.iter().zip(&evals) {
                for (slot, o) in best.iter_mut().zip(ctx.mutant_outcomes(t, e)) {
                    let d = if o.status >= MutantStatus::Infected {
                        0.0
                    } else {
                        o.infection_distance
                    };
                    *slot = slot.min(d);
                }
            }
            best.iter().map(|d| nu(*d)).sum::<f64>() / best.len() as f64
        }
        StrongMut => {
            let mut best = vec![1.0f64; ctx.mutants.len()];
            for (t, e) in suite.tests.iter().zip(&evals) {
                for (slot, o) in best.iter_mut().zip(ctx.mutant_outcomes(t, e)) {
                    *slot = slot.min(strong_stage(o));
                }
            }
            best.iter().sum::<f64>() / best.len() as f64
        }
        Diversity => 1.0 / (1.0 + ctx.diversity(suite)? as f64),
    })
}

/// Progress of one test toward killing a mutant, from 1 (unreached) to 0.
fn strong_stage(o: &MutantOutcome) -> f64 {
    match o.status {
        MutantStatus::NotReached => 1.0,
        MutantStatus::ReachedNotInfected => 0.5 + 0.5 * nu(o.infection_distance),
        MutantStatus::Infected => 0.25,
        MutantStatus::Killed => 0.0,
    }
}
