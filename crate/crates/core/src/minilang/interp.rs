//! Instrumented tree-walking interpreter.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::*;
use crate::distance::levenshtein;

/// Offset added for strict inequalities and `!=`.
pub const K: f64 = 1.0;
pub const DEFAULT_STEP_LIMIT: u64 = 10_000;
/// Nested calls beyond this depth raise `StepLimitExceeded`.
pub const MAX_CALL_DEPTH: usize = 128;
const MAX_STR_LEN: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Str(String),
    Unit,
}

impl Value {
    pub fn kind(&self) -> Option<Kind> {
        match self {
            Value::Int(_) => Some(Kind::Int),
            Value::Bool(_) => Some(Kind::Bool),
            Value::Str(_) => Some(Kind::Str),
            Value::Unit => None,
        }
    }
}

impl fmt::Display for Value {
    /// Literal syntax, as it would appear in a test or MiniJ source.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            Value::Unit => f.write_str("unit"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExceptionKind {
    DivByZero,
    IndexOutOfBounds,
    ExplicitThrow(String),
    StepLimitExceeded,
    TypeError,
}

impl fmt::Display for ExceptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExceptionKind::ExplicitThrow(tag) => write!(f, "Throw({tag})"),
            other => write!(f, "{other:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExceptionRecord {
    pub kind: ExceptionKind,
    pub raising_function: String,
}

impl fmt::Display for ExceptionRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.kind, self.raising_function)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Return(Value),
    Raised(ExceptionRecord),
}

impl Outcome {
    pub fn exception(&self) -> Option<&ExceptionRecord> {
        match self {
            Outcome::Raised(e) => Some(e),
            Outcome::Return(_) => None,
        }
    }
}

/// One evaluated predicate. Both distances are raw (un-normalized).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchEval {
    pub branch: BranchId,
    pub taken: bool,
    pub distance_true: f64,
    pub distance_false: f64,
    /// Evaluated in the frame of the entry function itself.
    pub direct: bool,
}

/// Trace of a single entry call.
///
/// `branch_evals` keeps, per branch site, frame kind (direct or not) and
/// outcome, the evaluation whose distance to the opposite outcome was
/// smallest; tight loops would otherwise produce one record per iteration.
/// The per-branch minimum distances are unaffected by this reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub entry: String,
    pub lines_hit: BTreeSet<LineId>,
    pub branch_evals: Vec<BranchEval>,
    pub called_functions: BTreeSet<(String, bool)>,
    pub outcome: Outcome,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FunctionCall {
    pub function: String,
    pub args: Vec<Value>,
}

impl FunctionCall {
    pub fn new(function: impl Into<String>, args: Vec<Value>) -> Self {
        Self {
            function: function.into(),
            args,
        }
    }
}

/// Host-side call errors, distinct from in-language `TypeError`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("unknown function '{0}'")]
    UnknownFunction(String),
    #[error("function '{function}' takes {expected} arguments, {given} given")]
    Arity {
        function: String,
        expected: usize,
        given: usize,
    },
    #[error("argument {position} of '{function}' must be {expected}")]
    ArgKind {
        function: String,
        position: usize,
        expected: Kind,
    },
}

/// Full state record used to diff two executions step by step.
#[derive(Debug, Clone, PartialEq)]
pub enum Snapshot {
    Stmt {
        line: LineId,
        env: Vec<Option<Value>>,
    },
    Cond {
        line: LineId,
        value: bool,
    },
    Exit {
        function: String,
        value: Value,
        env: Vec<Option<Value>>,
    },
}

/// Mutation probe: the statement at `site` in the executing (mutated)
/// program is compared against `original` from `base` on every visit.
pub(crate) struct Probe<'a> {
    pub base: &'a Program,
    pub site: LineId,
    pub original: &'a Stmt,
    /// Relational node replaced in place, with its original operator.
    pub relational_node: Option<(ExprId, BinOp)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ProbeReport {
    pub reached: bool,
    pub infected: bool,
    /// Smallest distance to infection over non-infecting visits.
    pub distance: f64,
}

impl Default for ProbeReport {
    fn default() -> Self {
        Self {
            reached: false,
            infected: false,
            distance: f64::INFINITY,
        }
    }
}

/// Branch distance of a relational predicate over integers (booleans as 0/1).
///
/// Zero exactly when the predicate holds.
///
/// # Panics
/// If `op` is not relational.
pub fn branch_distance(op: BinOp, lhs: i64, rhs: i64) -> f64 {
    let (l, r) = (lhs as i128, rhs as i128);
    let d = match op {
        BinOp::Eq => (l - r).abs(),
        BinOp::Ne => {
            if l == r {
                return K;
            }
            0
        }
        BinOp::Lt => {
            if l >= r {
                return (l - r) as f64 + K;
            }
            0
        }
        BinOp::Le => (l - r).max(0),
        BinOp::Gt => {
            if r >= l {
                return (r - l) as f64 + K;
            }
            0
        }
        BinOp::Ge => (r - l).max(0),
        other => panic!("branch_distance on non-relational operator {other:?}"),
    };
    d as f64
}

/// Distance from `lhs - rhs` to the nearest difference whose sign flips the
/// truth of `original` relative to `mutated`.
fn relational_infection_distance(original: BinOp, mutated: BinOp, lhs: i64, rhs: i64) -> f64 {
    use std::cmp::Ordering::*;
    let diff = lhs as i128 - rhs as i128;
    [Less, Equal, Greater]
        .into_iter()
        .filter(|&s| original.holds_for_sign(s) != mutated.holds_for_sign(s))
        .map(|s| {
            let d = match s {
                Equal => diff.abs(),
                Less => (diff + 1).max(0),
                Greater => (1 - diff).max(0),
            };
            d as f64
        })
        .fold(f64::INFINITY, f64::min)
}

pub struct Executor<'p> {
    program: &'p Program,
    step_limit: u64,
}

/// Executes one entry call with the default step limit.
pub fn execute(program: &Program, call: &FunctionCall) -> Result<ExecutionResult, ExecError> {
    Executor::new(program).execute(call)
}

impl<'p> Executor<'p> {
    pub fn new(program: &'p Program) -> Self {
        Self {
            program,
            step_limit: DEFAULT_STEP_LIMIT,
        }
    }

    pub fn with_step_limit(mut self, limit: u64) -> Self {
        self.step_limit = limit;
        self
    }

    pub fn execute(&self, call: &FunctionCall) -> Result<ExecutionResult, ExecError> {
        let mut m = Machine::new(self.program, self.step_limit, true);
        self.run(&mut m, call)
    }

    /// Executes and additionally records every intermediate state.
    pub fn execute_with_snapshots(
        &self,
        call: &FunctionCall,
    ) -> Result<(ExecutionResult, Vec<Snapshot>), ExecError> {
        let mut m = Machine::new(self.program, self.step_limit, true);
        m.snapshots = Some(Vec::new());
        let result = self.run(&mut m, call)?;
        Ok((result, m.snapshots.take().unwrap_or_default()))
    }

    /// Runs the observable outcome only: no coverage recording.
    pub(crate) fn outcome_probed(
        &self,
        call: &FunctionCall,
        probe: &Probe<'_>,
    ) -> Result<(Outcome, ProbeReport), ExecError> {
        let mut m = Machine::new(self.program, self.step_limit, false);
        m.probe = Some(probe);
        let fi = self.check(call)?;
        let outcome = match m.call_function(fi, call.args.clone()) {
            Ok(v) => Outcome::Return(v),
            Err(e) => Outcome::Raised(e),
        };
        Ok((outcome, m.report))
    }

    pub fn check(&self, call: &FunctionCall) -> Result<usize, ExecError> {
        let fi = self
            .program
            .function_index(&call.function)
            .ok_or_else(|| ExecError::UnknownFunction(call.function.clone()))?;
        let func = &self.program.functions[fi];
        if func.params.len() != call.args.len() {
            return Err(ExecError::Arity {
                function: func.name.clone(),
                expected: func.params.len(),
                given: call.args.len(),
            });
        }
        for (i, (p, a)) in func.params.iter().zip(&call.args).enumerate() {
            if a.kind() != Some(p.kind) {
                return Err(ExecError::ArgKind {
                    function: func.name.clone(),
                    position: i,
                    expected: p.kind,
                });
            }
        }
        Ok(fi)
    }

    fn run(&self, m: &mut Machine<'_, '_>, call: &FunctionCall) -> Result<ExecutionResult, ExecError> {
        let fi = self.check(call)?;
        let outcome = match m.call_function(fi, call.args.clone()) {
            Ok(v) => Outcome::Return(v),
            Err(e) => Outcome::Raised(e),
        };
        let lines_hit = m
            .lines
            .iter()
            .enumerate()
            .filter(|(_, hit)| **hit)
            .map(|(i, _)| LineId(i as u32))
            .collect();
        let branch_evals = m.branches.iter().flatten().copied().collect();
        let mut called_functions = BTreeSet::new();
        for (i, flags) in m.called.iter().enumerate() {
            let name = &self.program.functions[i].name;
            if flags & 1 != 0 {
                called_functions.insert((name.clone(), true));
            }
            if flags & 2 != 0 {
                called_functions.insert((name.clone(), false));
            }
        }
        Ok(ExecutionResult {
            entry: call.function.clone(),
            lines_hit,
            branch_evals,
            called_functions,
            outcome,
            steps: m.steps,
        })
    }
}

enum Flow {
    Next,
    Return(Value),
}

type Env = Vec<Option<Value>>;
type Exec<T> = Result<T, ExceptionRecord>;

struct Machine<'p, 'q> {
    program: &'p Program,
    limit: u64,
    steps: u64,
    depth: usize,
    record: bool,
    lines: Vec<bool>,
    branches: Vec<Option<BranchEval>>,
    called: Vec<u8>,
    snapshots: Option<Vec<Snapshot>>,
    probe: Option<&'q Probe<'q>>,
    report: ProbeReport,
    node_distance: f64,
}

impl<'p, 'q> Machine<'p, 'q> {
    fn new(program: &'p Program, limit: u64, record: bool) -> Self {
        let (lines, branches, called) = if record {
            (
                vec![false; program.line_count()],
                vec![None; program.branch_count() * 4],
                vec![0; program.functions.len()],
            )
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        Self {
            program,
            limit,
            steps: 0,
            depth: 0,
            record,
            lines,
            branches,
            called,
            snapshots: None,
            probe: None,
            report: ProbeReport::default(),
            node_distance: f64::INFINITY,
        }
    }

    fn raise<T>(&self, kind: ExceptionKind, fi: usize) -> Exec<T> {
        Err(ExceptionRecord {
            kind,
            raising_function: self.program.functions[fi].name.clone(),
        })
    }

    fn tick(&mut self, fi: usize, cost: u64) -> Exec<()> {
        if self.steps + cost > self.limit {
            self.steps = self.limit;
            return self.raise(ExceptionKind::StepLimitExceeded, fi);
        }
        self.steps += cost;
        Ok(())
    }

    fn call_function(&mut self, fi: usize, args: Vec<Value>) -> Exec<Value> {
        if self.depth >= MAX_CALL_DEPTH {
            return self.raise(ExceptionKind::StepLimitExceeded, fi);
        }
        self.tick(fi, 1)?;
        if self.record {
            self.called[fi] |= if self.depth == 0 { 1 } else { 2 };
        }
        let func = &self.program.functions[fi];
        let mut env: Env = vec![None; func.slot_count()];
        for (slot, v) in args.into_iter().enumerate() {
            env[slot] = Some(v);
        }
        self.depth += 1;
        let flow = self.exec_block(&func.body, &mut env, fi);
        self.depth -= 1;
        let value = match flow? {
            Flow::Return(v) => v,
            Flow::Next => Value::Unit,
        };
        if let Some(snaps) = &mut self.snapshots {
            snaps.push(Snapshot::Exit {
                function: func.name.clone(),
                value: value.clone(),
                env,
            });
        }
        Ok(value)
    }

    fn exec_block(&mut self, body: &'p [Stmt], env: &mut Env, fi: usize) -> Exec<Flow> {
        for stmt in body {
            if let Flow::Return(v) = self.exec_stmt(stmt, env, fi)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Next)
    }

    fn is_site(&self, line: LineId) -> bool {
        matches!(self.probe, Some(p) if p.site == line)
    }

    fn snapshot_stmt(&mut self, line: LineId, env: &Env) {
        if let Some(snaps) = &mut self.snapshots {
            snaps.push(Snapshot::Stmt {
                line,
                env: env.clone(),
            });
        }
    }

    fn snapshot_cond(&mut self, line: LineId, value: bool) {
        if let Some(snaps) = &mut self.snapshots {
            snaps.push(Snapshot::Cond { line, value });
        }
    }

    fn exec_stmt(&mut self, stmt: &'p Stmt, env: &mut Env, fi: usize) -> Exec<Flow> {
        if let StmtKind::Deleted(original) = &stmt.kind {
            // Same step cost as the original keeps uninfected runs in lockstep.
            self.tick(fi, 1)?;
            if self.is_site(stmt.line) {
                self.probe_deleted(original, env, fi);
            }
            return Ok(Flow::Next);
        }
        self.tick(fi, 1)?;
        if self.record {
            self.lines[stmt.line.index()] = true;
        }
        match &stmt.kind {
            StmtKind::Let { slot, value, .. } | StmtKind::Assign { slot, value, .. } => {
                let v = self.eval_own(stmt.line, value, env, fi)?;
                env[*slot] = Some(v);
                self.snapshot_stmt(stmt.line, env);
                Ok(Flow::Next)
            }
            StmtKind::If {
                branch,
                cond,
                then_body,
                else_body,
            } => {
                let c = self.eval_condition(stmt.line, *branch, cond, env, fi)?;
                self.snapshot_cond(stmt.line, c);
                if c {
                    self.exec_block(then_body, env, fi)
                } else {
                    self.exec_block(else_body, env, fi)
                }
            }
            StmtKind::While { branch, cond, body } => loop {
                let c = self.eval_condition(stmt.line, *branch, cond, env, fi)?;
                self.snapshot_cond(stmt.line, c);
                if !c {
                    return Ok(Flow::Next);
                }
                if let Flow::Return(v) = self.exec_block(body, env, fi)? {
                    return Ok(Flow::Return(v));
                }
                self.tick(fi, 1)?;
            },
            StmtKind::Return(e) => {
                let v = self.eval_own(stmt.line, e, env, fi)?;
                self.snapshot_stmt(stmt.line, env);
                Ok(Flow::Return(v))
            }
            StmtKind::Throw(tag) => self.raise(ExceptionKind::ExplicitThrow(tag.clone()), fi),
            StmtKind::Deleted(_) => unreachable!(),
        }
    }

    /// Evaluates an expression in the base program without recording.
    fn shadow_eval(&self, base: &Program, e: &Expr, env: &Env, fi: usize) -> Exec<Value> {
        let mut shadow = Machine::new(base, self.limit, false);
        shadow.depth = self.depth;
        shadow.steps = self.steps;
        let mut env = env.clone();
        shadow.eval(e, &mut env, fi)
    }

    fn original_expr(&self) -> Option<(&'q Program, &'q Expr)> {
        let p = self.probe?;
        Some((p.base, p.original.kind.own_expr()?))
    }

    fn settle_probe(&mut self, infected: bool) {
        self.report.reached = true;
        if infected {
            self.report.infected = true;
        } else {
            let d = if self.node_distance.is_finite() && self.node_distance > 0.0 {
                self.node_distance
            } else {
                K
            };
            self.report.distance = self.report.distance.min(d);
        }
        self.node_distance = f64::INFINITY;
    }

    fn eval_own(&mut self, line: LineId, e: &'p Expr, env: &mut Env, fi: usize) -> Exec<Value> {
        if !self.is_site(line) {
            return self.eval(e, env, fi);
        }
        let (base, orig) = self.original_expr().expect("probe site has an expression");
        let expected = self.shadow_eval(base, orig, env, fi);
        self.node_distance = f64::INFINITY;
        let actual = self.eval(e, env, fi);
        self.settle_probe(actual != expected);
        actual
    }

    fn eval_condition(
        &mut self,
        line: LineId,
        branch: BranchId,
        cond: &'p Expr,
        env: &mut Env,
        fi: usize,
    ) -> Exec<bool> {
        let expected = if self.is_site(line) {
            let (base, orig) = self.original_expr().expect("probe site has an expression");
            self.node_distance = f64::INFINITY;
            Some(self.shadow_eval(base, orig, env, fi))
        } else {
            None
        };
        let actual = self.cond(cond, env, fi);
        if let Some(expected) = expected {
            let actual_value = actual.clone().map(|(b, _, _)| Value::Bool(b));
            self.settle_probe(actual_value != expected);
        }
        let (taken, dt, df) = actual?;
        if self.record {
            let direct = self.depth == 1;
            let slot = branch.index() * 4 + usize::from(direct) * 2 + usize::from(taken);
            let opposite = if taken { df } else { dt };
            let keep = match &self.branches[slot] {
                Some(prev) => {
                    let prev_opp = if taken {
                        prev.distance_false
                    } else {
                        prev.distance_true
                    };
                    opposite < prev_opp
                }
                None => true,
            };
            if keep {
                self.branches[slot] = Some(BranchEval {
                    branch,
                    taken,
                    distance_true: dt,
                    distance_false: df,
                    direct,
                });
            }
        }
        Ok(taken)
    }

    fn probe_deleted(&mut self, original: &Stmt, env: &Env, fi: usize) {
        let Some(probe) = self.probe else { return };
        let StmtKind::Assign { slot, value, .. } = &original.kind else {
            return;
        };
        let expected = self.shadow_eval(probe.base, value, env, fi);
        let infected = match (&expected, &env[*slot]) {
            (Ok(v), Some(current)) => v != current,
            _ => true,
        };
        self.node_distance = f64::INFINITY;
        self.settle_probe(infected);
    }

    fn compare(&mut self, id: ExprId, op: BinOp, l: &Value, r: &Value, fi: usize) -> Exec<(bool, f64, f64)> {
        let numeric = |v: &Value| match v {
            Value::Int(i) => Some(*i),
            Value::Bool(b) => Some(i64::from(*b)),
            _ => None,
        };
        match (l, r) {
            (Value::Str(a), Value::Str(b)) => {
                let equal = a == b;
                let lev = || levenshtein(a, b) as f64;
                match op {
                    BinOp::Eq => Ok((equal, if equal { 0.0 } else { lev() }, if equal { K } else { 0.0 })),
                    BinOp::Ne => Ok((!equal, if equal { K } else { 0.0 }, if equal { 0.0 } else { lev() })),
                    _ => self.raise(ExceptionKind::TypeError, fi),
                }
            }
            (Value::Int(_), Value::Int(_)) | (Value::Bool(_), Value::Bool(_)) => {
                let (a, b) = (numeric(l).unwrap(), numeric(r).unwrap());
                if let Some(p) = self.probe {
                    if let Some((node, original)) = p.relational_node {
                        if node == id {
                            let d = relational_infection_distance(original, op, a, b);
                            self.node_distance = self.node_distance.min(d);
                        }
                    }
                }
                let dt = branch_distance(op, a, b);
                let df = branch_distance(op.negated().expect("relational"), a, b);
                Ok((dt == 0.0, dt, df))
            }
            _ => self.raise(ExceptionKind::TypeError, fi),
        }
    }

    /// Evaluates a predicate with its distances to either outcome.
    fn cond(&mut self, e: &'p Expr, env: &mut Env, fi: usize) -> Exec<(bool, f64, f64)> {
        match &e.kind {
            ExprKind::Binary {
                op: BinOp::And,
                lhs,
                rhs,
            } => {
                let (a, at, af) = self.cond(lhs, env, fi)?;
                if !a {
                    return Ok((false, crate::distance::nu(at) + 1.0, 0.0));
                }
                let (b, bt, bf) = self.cond(rhs, env, fi)?;
                Ok((b, crate::distance::nu(bt), af.min(bf)))
            }
            ExprKind::Binary {
                op: BinOp::Or,
                lhs,
                rhs,
            } => {
                let (a, at, af) = self.cond(lhs, env, fi)?;
                if a {
                    return Ok((true, 0.0, crate::distance::nu(af) + 1.0));
                }
                let (b, bt, bf) = self.cond(rhs, env, fi)?;
                Ok((b, at.min(bt), crate::distance::nu(bf)))
            }
            ExprKind::Unary {
                op: UnaryOp::Not,
                operand,
            } => {
                let (a, at, af) = self.cond(operand, env, fi)?;
                Ok((!a, af, at))
            }
            ExprKind::Binary { op, lhs, rhs } if op.is_relational() => {
                let l = self.eval(lhs, env, fi)?;
                let r = self.eval(rhs, env, fi)?;
                self.compare(e.id, *op, &l, &r, fi)
            }
            _ => match self.eval(e, env, fi)? {
                Value::Bool(b) => Ok((b, if b { 0.0 } else { K }, if b { K } else { 0.0 })),
                _ => self.raise(ExceptionKind::TypeError, fi),
            },
        }
    }

    fn eval(&mut self, e: &'p Expr, env: &mut Env, fi: usize) -> Exec<Value> {
        match &e.kind {
            ExprKind::Int(v) => Ok(Value::Int(*v)),
            ExprKind::Bool(b) => Ok(Value::Bool(*b)),
            ExprKind::Str(s) => Ok(Value::Str(s.clone())),
            ExprKind::Var { slot, .. } => match &env[*slot] {
                Some(v) => Ok(v.clone()),
                None => self.raise(ExceptionKind::TypeError, fi),
            },
            ExprKind::Unary { op, operand } => {
                let v = self.eval(operand, env, fi)?;
                match (op, v) {
                    (UnaryOp::Neg, Value::Int(i)) => Ok(Value::Int(i.wrapping_neg())),
                    (UnaryOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                    _ => self.raise(ExceptionKind::TypeError, fi),
                }
            }
            ExprKind::Binary { op, lhs, rhs } => match op {
                BinOp::And | BinOp::Or => {
                    let Value::Bool(a) = self.eval(lhs, env, fi)? else {
                        return self.raise(ExceptionKind::TypeError, fi);
                    };
                    if (*op == BinOp::And && !a) || (*op == BinOp::Or && a) {
                        return Ok(Value::Bool(a));
                    }
                    match self.eval(rhs, env, fi)? {
                        Value::Bool(b) => Ok(Value::Bool(b)),
                        _ => self.raise(ExceptionKind::TypeError, fi),
                    }
                }
                op if op.is_relational() => {
                    let l = self.eval(lhs, env, fi)?;
                    let r = self.eval(rhs, env, fi)?;
                    self.compare(e.id, *op, &l, &r, fi).map(|(b, _, _)| Value::Bool(b))
                }
                op => {
                    let l = self.eval(lhs, env, fi)?;
                    let r = self.eval(rhs, env, fi)?;
                    self.arithmetic(*op, l, r, fi)
                }
            },
            ExprKind::Call { func, args, .. } => {
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    values.push(self.eval(a, env, fi)?);
                }
                let callee = &self.program.functions[*func];
                for (p, v) in callee.params.iter().zip(&values) {
                    if v.kind() != Some(p.kind) {
                        return self.raise(ExceptionKind::TypeError, fi);
                    }
                }
                self.call_function(*func, values)
            }
            ExprKind::Len(inner) => match self.eval(inner, env, fi)? {
                Value::Str(s) => Ok(Value::Int(s.chars().count() as i64)),
                _ => self.raise(ExceptionKind::TypeError, fi),
            },
            ExprKind::Index { target, index } => {
                let t = self.eval(target, env, fi)?;
                let i = self.eval(index, env, fi)?;
                match (t, i) {
                    (Value::Str(s), Value::Int(i)) => {
                        match usize::try_from(i).ok().and_then(|i| s.chars().nth(i)) {
                            Some(c) => Ok(Value::Str(c.to_string())),
                            None => self.raise(ExceptionKind::IndexOutOfBounds, fi),
                        }
                    }
                    _ => self.raise(ExceptionKind::TypeError, fi),
                }
            }
        }
    }

    fn arithmetic(&mut self, op: BinOp, l: Value, r: Value, fi: usize) -> Exec<Value> {
        match (l, r) {
            (Value::Int(a), Value::Int(b)) => {
                let v = match op {
                    BinOp::Add => a.wrapping_add(b),
                    BinOp::Sub => a.wrapping_sub(b),
                    BinOp::Mul => a.wrapping_mul(b),
                    BinOp::Div | BinOp::Mod if b == 0 => {
                        return self.raise(ExceptionKind::DivByZero, fi)
                    }
                    BinOp::Div => a.wrapping_div(b),
                    BinOp::Mod => a.wrapping_rem(b),
                    _ => unreachable!("non-arithmetic operator {op:?}"),
                };
                Ok(Value::Int(v))
            }
            (Value::Str(mut a), Value::Str(b)) if op == BinOp::Add => {
                if a.len() + b.len() > MAX_STR_LEN {
                    return self.raise(ExceptionKind::StepLimitExceeded, fi);
                }
                // long strings cost proportionally more budget
                self.tick(fi, (a.len() + b.len()) as u64 / 64)?;
                a.push_str(&b);
                Ok(Value::Str(a))
            }
            _ => self.raise(ExceptionKind::TypeError, fi),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::parse;
    use proptest::prelude::*;

    fn int_call(name: &str, args: &[i64]) -> FunctionCall {
        FunctionCall::new(name, args.iter().map(|&a| Value::Int(a)).collect())
    }

    #[test]
    fn distances_for_missed_equality() {
        let p = parse("fn f(x:int){ if(x==5){return 1;} return 0; }").unwrap();
        let r = execute(&p, &int_call("f", &[3])).unwrap();
        assert_eq!(r.branch_evals.len(), 1);
        let b = r.branch_evals[0];
        assert!(!b.taken);
        assert_eq!((b.distance_true, b.distance_false), (2.0, 0.0));
        assert_eq!(r.outcome, Outcome::Return(Value::Int(0)));

        let r = execute(&p, &int_call("f", &[5])).unwrap();
        let b = r.branch_evals[0];
        assert!(b.taken);
        assert_eq!(b.distance_true, 0.0);
        assert!(b.direct);
    }

    #[test]
    fn division_by_zero_raises_in_callee() {
        let p = parse("fn g(a:int){ return 1/a; }").unwrap();
        let r = execute(&p, &int_call("g", &[0])).unwrap();
        assert_eq!(
            r.outcome,
            Outcome::Raised(ExceptionRecord {
                kind: ExceptionKind::DivByZero,
                raising_function: "g".into()
            })
        );
    }

    #[test]
    fn branch_distance_rules() {
        assert_eq!(branch_distance(BinOp::Eq, 3, 5), 2.0);
        assert_eq!(branch_distance(BinOp::Eq, 5, 5), 0.0);
        assert_eq!(branch_distance(BinOp::Lt, 10, 10), 1.0);
        assert_eq!(branch_distance(BinOp::Ne, 4, 4), 1.0);
        assert_eq!(branch_distance(BinOp::Le, 7, 5), 2.0);
        assert_eq!(branch_distance(BinOp::Gt, 5, 5), 1.0);
        assert_eq!(branch_distance(BinOp::Ge, 3, 5), 2.0);
        // no precision loss at the extremes
        assert!(branch_distance(BinOp::Eq, i64::MAX, i64::MAX - 1) > 0.0);
    }

    #[test]
    fn strict_less_zero_exactly_when_holds_near_boundary() {
        for l in -20..20i64 {
            for r in -20..20i64 {
                for op in BinOp::RELATIONAL {
                    let holds = op.holds_for_sign(l.cmp(&r));
                    assert_eq!(branch_distance(op, l, r) == 0.0, holds, "{op:?} {l} {r}");
                }
            }
        }
    }

    #[test]
    fn exceptions_and_steps() {
        let p = parse(
            "fn loop_forever(){ while (true) { } return 0; }\n\
             fn idx(s:str, i:int){ return s[i]; }\n\
             fn boom(){ throw \"bad\"; }\n\
             fn mixed(){ return 1 + \"a\"; }\n\
             fn deep(n:int){ return deep(n + 1); }",
        )
        .unwrap();
        let kind = |call: FunctionCall| match execute(&p, &call).unwrap().outcome {
            Outcome::Raised(e) => e.kind,
            other => panic!("{other:?}"),
        };
        assert_eq!(kind(FunctionCall::new("loop_forever", vec![])), ExceptionKind::StepLimitExceeded);
        assert_eq!(
            kind(FunctionCall::new("idx", vec![Value::Str("ab".into()), Value::Int(2)])),
            ExceptionKind::IndexOutOfBounds
        );
        assert_eq!(kind(FunctionCall::new("boom", vec![])), ExceptionKind::ExplicitThrow("bad".into()));
        assert_eq!(kind(FunctionCall::new("mixed", vec![])), ExceptionKind::TypeError);
        assert_eq!(kind(int_call("deep", &[0])), ExceptionKind::StepLimitExceeded);
        let r = execute(&p, &FunctionCall::new("loop_forever", vec![])).unwrap();
        assert_eq!(r.steps, DEFAULT_STEP_LIMIT);
    }

    #[test]
    fn host_errors_are_distinct() {
        let p = parse("fn f(x:int){ return x; }").unwrap();
        assert!(matches!(
            execute(&p, &FunctionCall::new("g", vec![])),
            Err(ExecError::UnknownFunction(_))
        ));
        assert!(matches!(
            execute(&p, &FunctionCall::new("f", vec![])),
            Err(ExecError::Arity { .. })
        ));
        assert!(matches!(
            execute(&p, &FunctionCall::new("f", vec![Value::Bool(true)])),
            Err(ExecError::ArgKind { .. })
        ));
    }

    #[test]
    fn direct_and_indirect_calls() {
        let p = parse(
            "fn inner(x:int){ if (x > 0) { return 1; } return 0; }\n\
             fn outer(x:int){ return inner(x); }",
        )
        .unwrap();
        let r = execute(&p, &int_call("outer", &[1])).unwrap();
        assert!(r.called_functions.contains(&("outer".to_string(), true)));
        assert!(r.called_functions.contains(&("inner".to_string(), false)));
        assert!(r.branch_evals.iter().all(|b| !b.direct));
    }

    #[test]
    fn compound_predicates() {
        let p = parse(
            "fn f(a:int, b:int){ if (a == 1 && b == 2) { return 1; } if (a == 3 || b == 4) { return 2; } return 0; }",
        )
        .unwrap();
        let r = execute(&p, &int_call("f", &[1, 5])).unwrap();
        let first = r.branch_evals.iter().find(|b| b.branch == BranchId(0)).unwrap();
        // nu(0) + nu(3) for the conjunction
        assert!((first.distance_true - 0.75).abs() < 1e-12);
        assert_eq!(first.distance_false, 0.0);
        let second = r.branch_evals.iter().find(|b| b.branch == BranchId(1)).unwrap();
        assert_eq!(second.distance_true, 1.0);
        // string equality uses edit distance
        let p = parse("fn s(x:str){ if (x == \"abc\") { return 1; } return 0; }").unwrap();
        let r = execute(&p, &FunctionCall::new("s", vec![Value::Str("abd".into())])).unwrap();
        assert_eq!(r.branch_evals[0].distance_true, 1.0);
        let p = parse("fn s(x:str){ if (x < \"abc\") { return 1; } return 0; }").unwrap();
        let r = execute(&p, &FunctionCall::new("s", vec![Value::Str("a".into())])).unwrap();
        assert!(matches!(r.outcome, Outcome::Raised(ExceptionRecord { kind: ExceptionKind::TypeError, .. })));
    }

    proptest! {
        #[test]
        fn equality_distance_strictly_monotone(a in -1000i64..1000, b in -1000i64..1000) {
            let d = branch_distance(BinOp::Eq, a, b);
            if a != b {
                let closer = if a < b { a + 1 } else { a - 1 };
                prop_assert!(branch_distance(BinOp::Eq, closer, b) < d);
            }
        }

        #[test]
        fn deterministic_and_sound(x in -50i64..50, y in -50i64..50, s in "[ab]{0,4}") {
            let p = parse(
                "fn f(x:int, y:int, s:str){ let i = 0; while (i < x && i < 20) { i = i + 1; } \
                 if (len(s) > 2 || y == x * 2) { return s[1]; } if (!(x >= y)) { return y / (x - 3); } return i; }",
            ).unwrap();
            let call = FunctionCall::new("f", vec![Value::Int(x), Value::Int(y), Value::Str(s)]);
            let a = execute(&p, &call).unwrap();
            let b = execute(&p, &call).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.steps <= DEFAULT_STEP_LIMIT);
            for ev in &a.branch_evals {
                prop_assert_eq!(ev.distance_true == 0.0, ev.taken);
                prop_assert_eq!(ev.distance_false == 0.0, !ev.taken);
                prop_assert!(ev.distance_true >= 0.0 && ev.distance_false >= 0.0);
            }
        }
    }
}
