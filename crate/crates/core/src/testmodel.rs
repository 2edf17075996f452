//! Test cases, suites, the covering-test archive, and the genetic operators
//! over them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitness::FitnessFunctionId;
use crate::minilang::{
    ExceptionRecord, ExecError, ExecutionResult, Executor, FunctionCall, Kind, Program, Value,
};
use crate::mutation::MutantId;

/// An argument: a literal, or a reference to a test-local alias.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arg {
    Lit(Value),
    Alias(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Call {
    pub function: String,
    pub args: Vec<Arg>,
}

impl Call {
    pub fn new(function: impl Into<String>, args: Vec<Arg>) -> Self {
        Self {
            function: function.into(),
            args,
        }
    }
}

/// A sequence of calls plus the alias bindings they reference.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TestCase {
    pub calls: Vec<Call>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bindings: BTreeMap<String, Arg>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TestError {
    #[error("unresolved alias '{0}'")]
    UnresolvedAlias(String),
    #[error("test has no calls")]
    Empty,
    #[error("test has {0} calls, above the limit of {1}")]
    TooLong(usize, usize),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("cannot cross over an empty suite")]
    EmptyParent,
}

impl TestCase {
    pub fn new(calls: Vec<Call>) -> Self {
        Self {
            calls,
            bindings: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    /// Follows alias chains down to a literal.
    pub fn resolve(&self, arg: &Arg) -> Result<Value, TestError> {
        let mut cur = arg;
        // A chain longer than the binding table must contain a cycle.
        for _ in 0..=self.bindings.len() {
            match cur {
                Arg::Lit(v) => return Ok(v.clone()),
                Arg::Alias(name) => {
                    cur = self
                        .bindings
                        .get(name)
                        .ok_or_else(|| TestError::UnresolvedAlias(name.clone()))?;
                }
            }
        }
        let Arg::Alias(name) = arg else { unreachable!() };
        Err(TestError::UnresolvedAlias(name.clone()))
    }

    pub fn try_resolved_calls(&self) -> Result<Vec<FunctionCall>, TestError> {
        self.calls
            .iter()
            .map(|c| {
                let args = c.args.iter().map(|a| self.resolve(a)).collect::<Result<_, _>>()?;
                Ok(FunctionCall::new(c.function.clone(), args))
            })
            .collect()
    }

    /// Concrete calls with every alias substituted.
    ///
    /// # Panics
    /// If an alias does not resolve; generated tests always resolve.
    pub fn resolved_calls(&self) -> Vec<FunctionCall> {
        self.try_resolved_calls().expect("test aliases resolve")
    }

    /// One line per call, aliases replaced by their literal values.
    pub fn render_lines(&self) -> Vec<String> {
        self.resolved_calls()
            .iter()
            .map(|c| {
                let args: Vec<String> = c.args.iter().map(Value::to_string).collect();
                format!("{}({})", c.function, args.join(", "))
            })
            .collect()
    }

    /// Checks the test against `program`: it has calls, every alias resolves,
    /// and every call matches a function's arity and parameter kinds.
    pub fn validate(&self, program: &Program, max_calls: usize) -> Result<(), TestError> {
        if self.calls.is_empty() {
            return Err(TestError::Empty);
        }
        if self.calls.len() > max_calls {
            return Err(TestError::TooLong(self.calls.len(), max_calls));
        }
        let executor = Executor::new(program);
        for call in self.try_resolved_calls()? {
            executor.check(&call)?;
        }
        Ok(())
    }

    /// Drops bindings no call reaches.
    fn prune_bindings(&mut self) {
        let mut live = BTreeSet::new();
        let mut stack: Vec<&str> = self
            .calls
            .iter()
            .flat_map(|c| &c.args)
            .filter_map(|a| match a {
                Arg::Alias(n) => Some(n.as_str()),
                Arg::Lit(_) => None,
            })
            .collect();
        while let Some(name) = stack.pop() {
            if live.insert(name.to_string()) {
                if let Some(Arg::Alias(next)) = self.bindings.get(name) {
                    stack.push(next);
                }
            }
        }
        self.bindings.retain(|k, _| live.contains(k));
    }
}

/// Source text of a test: one call per line.
pub fn render_test(test: &TestCase) -> String {
    test.render_lines().join("\n")
}

impl fmt::Display for TestCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_test(self))
    }
}

/// Results of executing each call of a test on the unmutated program.
#[derive(Debug, Clone, PartialEq)]
pub struct TestTrace {
    pub calls: Vec<ExecutionResult>,
}

impl TestTrace {
    pub fn of(program: &Program, test: &TestCase) -> Result<TestTrace, TestError> {
        let executor = Executor::new(program);
        let calls = test
            .try_resolved_calls()?
            .iter()
            .map(|c| executor.execute(c))
            .collect::<Result<_, _>>()?;
        Ok(TestTrace { calls })
    }

    /// Distinct exceptions raised by top-level calls.
    pub fn exceptions(&self) -> BTreeSet<ExceptionRecord> {
        self.calls
            .iter()
            .filter_map(|r| r.outcome.exception().cloned())
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TestSuite {
    pub tests: Vec<TestCase>,
    /// Scores already computed for this exact suite.
    #[serde(skip)]
    pub cached_fitness: BTreeMap<FitnessFunctionId, f64>,
}

impl TestSuite {
    pub fn new(tests: Vec<TestCase>) -> Self {
        Self {
            tests,
            cached_fitness: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }

    pub fn total_calls(&self) -> usize {
        self.tests.iter().map(TestCase::len).sum()
    }
}

/// Something a final suite is minimized to keep covered.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalId {
    Exception(ExceptionRecord),
    Method(String),
    Mutant(MutantId),
}

impl fmt::Display for GoalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GoalId::Exception(r) => write!(f, "exception:{r}"),
            GoalId::Method(m) => write!(f, "method:{m}"),
            GoalId::Mutant(id) => write!(f, "mutant:{id}"),
        }
    }
}

/// Shortest test seen so far covering each goal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    entries: BTreeMap<GoalId, TestCase>,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `test` for `goal` if the goal is new or `test` is shorter.
    pub fn offer(&mut self, goal: GoalId, test: &TestCase) -> bool {
        match self.entries.get(&goal) {
            Some(prev) if prev.len() <= test.len() => false,
            _ => {
                self.entries.insert(goal, test.clone());
                true
            }
        }
    }

    pub fn get(&self, goal: &GoalId) -> Option<&TestCase> {
        self.entries.get(goal)
    }

    pub fn goals(&self) -> impl Iterator<Item = &GoalId> {
        self.entries.keys()
    }

    pub fn tests(&self) -> impl Iterator<Item = &TestCase> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Knobs for random generation and mutation of tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub max_calls_per_test: usize,
    pub max_suite_size: usize,
    /// Upper bound on tests in a freshly generated suite.
    pub initial_suite_size: usize,
    pub int_min: i64,
    pub int_max: i64,
    /// Chance an argument is drawn from the constant pool instead of uniformly.
    pub pool_probability: f64,
    /// Chance an argument goes through an alias.
    pub alias_probability: f64,
    pub string_alphabet: String,
    pub max_string_len: usize,
    /// Per-test mutation chance; `None` means one over the suite size.
    pub test_mutation_probability: Option<f64>,
    pub add_test_probability: f64,
    pub remove_test_probability: f64,
    pub delete_call_probability: f64,
    pub change_arg_probability: f64,
    pub insert_call_probability: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            max_calls_per_test: 8,
            max_suite_size: 30,
            initial_suite_size: 10,
            int_min: -100,
            int_max: 100,
            pool_probability: 0.3,
            alias_probability: 0.1,
            string_alphabet: "abc".to_string(),
            max_string_len: 4,
            test_mutation_probability: None,
            add_test_probability: 0.1,
            remove_test_probability: 0.1,
            delete_call_probability: 1.0 / 3.0,
            change_arg_probability: 1.0 / 3.0,
            insert_call_probability: 1.0 / 3.0,
        }
    }
}

impl GenConfig {
    /// A configuration under which mutation never changes a suite.
    pub fn frozen() -> Self {
        Self {
            test_mutation_probability: Some(0.0),
            add_test_probability: 0.0,
            remove_test_probability: 0.0,
            delete_call_probability: 0.0,
            change_arg_probability: 0.0,
            insert_call_probability: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let probs = [
            ("pool_probability", self.pool_probability),
            ("alias_probability", self.alias_probability),
            ("add_test_probability", self.add_test_probability),
            ("remove_test_probability", self.remove_test_probability),
            ("delete_call_probability", self.delete_call_probability),
            ("change_arg_probability", self.change_arg_probability),
            ("insert_call_probability", self.insert_call_probability),
            (
                "test_mutation_probability",
                self.test_mutation_probability.unwrap_or(0.0),
            ),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.max_calls_per_test == 0 || self.max_suite_size == 0 || self.initial_suite_size == 0 {
            return Err("test and suite size limits must be positive".into());
        }
        if self.int_min > self.int_max {
            return Err("int_min exceeds int_max".into());
        }
        if self.string_alphabet.is_empty() {
            return Err("string_alphabet is empty".into());
        }
        Ok(())
    }
}

/// Literal pools and signatures drawn from the program under test.
#[derive(Debug, Clone)]
pub struct InputModel {
    functions: Vec<(String, Vec<Kind>)>,
    ints: Vec<i64>,
    strings: Vec<String>,
    config: GenConfig,
}

impl InputModel {
    pub fn new(program: &Program, config: GenConfig) -> Self {
        let (consts, strs) = program.constants();
        let mut ints: BTreeSet<i64> = [0, 1, -1].into();
        for c in consts {
            ints.insert(c);
            ints.extend(c.checked_add(1));
            ints.extend(c.checked_sub(1));
        }
        let mut strings: BTreeSet<String> = strs.into_iter().collect();
        strings.insert(String::new());
        Self {
            functions: program
                .functions
                .iter()
                .map(|f| (f.name.clone(), f.param_kinds()))
                .collect(),
            ints: ints.into_iter().collect(),
            strings: strings.into_iter().collect(),
            config,
        }
    }

    pub fn config(&self) -> &GenConfig {
        &self.config
    }

    pub fn has_functions(&self) -> bool {
        !self.functions.is_empty()
    }

    fn value<R: Rng + ?Sized>(&self, kind: Kind, rng: &mut R) -> Value {
        let cfg = &self.config;
        let from_pool = rng.gen_bool(cfg.pool_probability);
        match kind {
            Kind::Int if from_pool => Value::Int(*self.ints.choose(rng).expect("pool holds 0")),
            Kind::Int => Value::Int(rng.gen_range(cfg.int_min..=cfg.int_max)),
            Kind::Bool => Value::Bool(rng.gen()),
            Kind::Str if from_pool => {
                Value::Str(self.strings.choose(rng).expect("pool holds \"\"").clone())
            }
            Kind::Str => {
                let alphabet: Vec<char> = cfg.string_alphabet.chars().collect();
                let n = rng.gen_range(0..=cfg.max_string_len);
                Value::Str((0..n).map(|_| *alphabet.choose(rng).expect("non-empty")).collect())
            }
        }
    }

    fn arg<R: Rng + ?Sized>(&self, kind: Kind, test: &mut TestCase, rng: &mut R) -> Arg {
        if !rng.gen_bool(self.config.alias_probability) {
            return Arg::Lit(self.value(kind, rng));
        }
        let same_kind: Vec<String> = test
            .bindings
            .keys()
            .filter(|k| {
                test.resolve(&Arg::Alias((*k).clone()))
                    .ok()
                    .and_then(|v| v.kind())
                    == Some(kind)
            })
            .cloned()
            .collect();
        if let Some(existing) = same_kind.choose(rng) {
            if rng.gen_bool(0.5) {
                return Arg::Alias(existing.clone());
            }
        }
        let name = (0..)
            .map(|i| format!("v{i}"))
            .find(|n| !test.bindings.contains_key(n))
            .expect("unbounded names");
        let origin = match same_kind.choose(rng) {
            Some(existing) if rng.gen_bool(0.5) => Arg::Alias(existing.clone()),
            _ => Arg::Lit(self.value(kind, rng)),
        };
        test.bindings.insert(name.clone(), origin);
        Arg::Alias(name)
    }

    fn call<R: Rng + ?Sized>(&self, test: &mut TestCase, rng: &mut R) -> Call {
        let (name, kinds) = self.functions.choose(rng).expect("program has functions");
        let args = kinds.iter().map(|k| self.arg(*k, test, rng)).collect();
        Call::new(name.clone(), args)
    }

    /// A random test of one to `max_calls_per_test` calls.
    ///
    /// # Panics
    /// If the program has no functions.
    pub fn random_test_case<R: Rng + ?Sized>(&self, rng: &mut R) -> TestCase {
        let n = rng.gen_range(1..=self.config.max_calls_per_test);
        let mut test = TestCase::default();
        for _ in 0..n {
            let call = self.call(&mut test, rng);
            test.calls.push(call);
        }
        test
    }

    /// A random suite of one to `initial_suite_size` tests.
    pub fn random_suite<R: Rng + ?Sized>(&self, rng: &mut R) -> TestSuite {
        let cap = self.config.initial_suite_size.min(self.config.max_suite_size);
        let n = rng.gen_range(1..=cap);
        TestSuite::new((0..n).map(|_| self.random_test_case(rng)).collect())
    }

    fn mutate_test<R: Rng + ?Sized>(&self, test: &TestCase, rng: &mut R) -> TestCase {
        let cfg = &self.config;
        let mut t = test.clone();
        if rng.gen_bool(cfg.delete_call_probability) && t.calls.len() > 1 {
            let n = t.calls.len();
            let p = 1.0 / n as f64;
            let mut i = 0;
            while i < t.calls.len() && t.calls.len() > 1 {
                if rng.gen_bool(p) {
                    t.calls.remove(i);
                } else {
                    i += 1;
                }
            }
        }
        if rng.gen_bool(cfg.change_arg_probability) {
            let n_args: usize = t.calls.iter().map(|c| c.args.len()).sum();
            if n_args > 0 {
                let p = 1.0 / n_args as f64;
                for ci in 0..t.calls.len() {
                    for ai in 0..t.calls[ci].args.len() {
                        if rng.gen_bool(p) {
                            let kind = t
                                .resolve(&t.calls[ci].args[ai])
                                .ok()
                                .and_then(|v| v.kind())
                                .expect("arguments resolve to typed values");
                            let fresh = self.perturb(&t.resolve(&t.calls[ci].args[ai]).expect("resolves"), kind, rng);
                            t.calls[ci].args[ai] = Arg::Lit(fresh);
                        }
                    }
                }
            }
        }
        if rng.gen_bool(cfg.insert_call_probability) {
            // Each further insertion happens with halving probability.
            let mut p = 1.0;
            while t.calls.len() < cfg.max_calls_per_test && rng.gen_bool(p) {
                let call = self.call(&mut t, rng);
                let at = rng.gen_range(0..=t.calls.len());
                t.calls.insert(at, call);
                p *= 0.5;
            }
        }
        t.prune_bindings();
        t
    }

    /// A nearby or fresh value of the same kind.
    fn perturb<R: Rng + ?Sized>(&self, old: &Value, kind: Kind, rng: &mut R) -> Value {
        match old {
            Value::Int(v) if rng.gen_bool(0.5) => {
                let delta = rng.gen_range(1..=10i64);
                let sign = if rng.gen() { 1 } else { -1 };
                Value::Int(v.saturating_add(sign * delta))
            }
            Value::Bool(b) => Value::Bool(!b),
            _ => self.value(kind, rng),
        }
    }

    /// Mutates tests in place with the configured chances, then may drop or
    /// add a whole test. Empty tests are removed and the size cap is kept.
    pub fn mutate_suite<R: Rng + ?Sized>(&self, suite: &TestSuite, rng: &mut R) -> TestSuite {
        let cfg = &self.config;
        let p_test = cfg
            .test_mutation_probability
            .unwrap_or_else(|| 1.0 / suite.len().max(1) as f64);
        let mut tests: Vec<TestCase> = suite
            .tests
            .iter()
            .map(|t| {
                if rng.gen_bool(p_test) {
                    self.mutate_test(t, rng)
                } else {
                    t.clone()
                }
            })
            .filter(|t| !t.is_empty())
            .collect();
        if tests.len() > 1 && rng.gen_bool(cfg.remove_test_probability) {
            let i = rng.gen_range(0..tests.len());
            tests.remove(i);
        }
        if tests.len() < cfg.max_suite_size && rng.gen_bool(cfg.add_test_probability) {
            tests.push(self.random_test_case(rng));
        }
        tests.truncate(cfg.max_suite_size);
        let mut out = TestSuite::new(tests);
        if out.tests == suite.tests {
            out.cached_fitness = suite.cached_fitness.clone();
        }
        out
    }
}

/// One-point crossover at `cut`: children are `a[..cut] ++ b[cut..]` and
/// `b[..cut] ++ a[cut..]`, each truncated to `max_size`.
pub fn crossover_at(a: &TestSuite, b: &TestSuite, cut: usize, max_size: usize) -> (TestSuite, TestSuite) {
    let ca = cut.min(a.len());
    let cb = cut.min(b.len());
    let join = |x: &[TestCase], y: &[TestCase]| {
        let mut v: Vec<TestCase> = x.iter().chain(y).cloned().collect();
        v.truncate(max_size);
        TestSuite::new(v)
    };
    (join(&a.tests[..ca], &b.tests[cb..]), join(&b.tests[..cb], &a.tests[ca..]))
}

/// Crossover at a uniformly random cut within the shorter parent.
pub fn crossover<R: Rng + ?Sized>(
    a: &TestSuite,
    b: &TestSuite,
    max_size: usize,
    rng: &mut R,
) -> Result<(TestSuite, TestSuite), TestError> {
    if a.is_empty() || b.is_empty() {
        return Err(TestError::EmptyParent);
    }
    let cut = rng.gen_range(0..=a.len().min(b.len()));
    Ok(crossover_at(a, b, cut, max_size))
}

/// Removes tests whose goals are covered by the rest, walking from the end.
///
/// Only goals in `goals` count; the covered subset of `goals` is unchanged.
pub fn minimize(
    suite: &TestSuite,
    goals: &BTreeSet<GoalId>,
    mut coverage_of: impl FnMut(&TestCase) -> BTreeSet<GoalId>,
) -> TestSuite {
    let covers: Vec<BTreeSet<GoalId>> = suite
        .tests
        .iter()
        .map(|t| coverage_of(t).intersection(goals).cloned().collect())
        .collect();
    let mut counts: BTreeMap<&GoalId, usize> = BTreeMap::new();
    for c in &covers {
        for g in c {
            *counts.entry(g).or_default() += 1;
        }
    }
    let mut keep = vec![true; suite.len()];
    for i in (0..suite.len()).rev() {
        if covers[i].iter().all(|g| counts[g] > 1) {
            keep[i] = false;
            for g in &covers[i] {
                *counts.get_mut(g).expect("counted") -= 1;
            }
        }
    }
    TestSuite::new(
        suite
            .tests
            .iter()
            .zip(keep)
            .filter_map(|(t, k)| k.then(|| t.clone()))
            .collect(),
    )
}

/// Appends archived tests for goals in `goals` that the suite misses.
pub fn augment_from_archive(
    suite: &TestSuite,
    archive: &Archive,
    goals: &BTreeSet<GoalId>,
    mut coverage_of: impl FnMut(&TestCase) -> BTreeSet<GoalId>,
) -> TestSuite {
    let mut out = suite.tests.clone();
    let mut covered: BTreeSet<GoalId> = out.iter().flat_map(&mut coverage_of).collect();
    for goal in goals {
        if covered.contains(goal) {
            continue;
        }
        if let Some(test) = archive.get(goal) {
            if !out.contains(test) {
                covered.extend(coverage_of(test));
                out.push(test.clone());
            }
        }
    }
    TestSuite::new(out)
}

/// Portable JSON form of a final suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteDocument {
    pub program: String,
    pub tests: Vec<TestDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestDocument {
    pub source: Vec<String>,
    pub test: TestCase,
    pub covers: Vec<String>,
}

impl SuiteDocument {
    pub fn new(
        program: &Program,
        suite: &TestSuite,
        mut coverage_of: impl FnMut(&TestCase) -> BTreeSet<GoalId>,
    ) -> Self {
        Self {
            program: program.source_id.clone(),
            tests: suite
                .tests
                .iter()
                .map(|t| TestDocument {
                    source: t.render_lines(),
                    covers: coverage_of(t).iter().map(GoalId::to_string).collect(),
                    test: t.clone(),
                })
                .collect(),
        }
    }

    pub fn suite(&self) -> TestSuite {
        TestSuite::new(self.tests.iter().map(|d| d.test.clone()).collect())
    }
}
