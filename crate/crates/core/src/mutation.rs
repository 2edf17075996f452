//! First-order mutant generation and weak/strong classification.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::minilang::{
    infer, BinOp, ExecutionResult, Executor, Expr, ExprId, ExprKind, FunctionCall, Kind, DEFAULT_STEP_LIMIT, LineId,
    Probe, Program, Stmt, StmtKind, UnaryOp,
};
use crate::testmodel::{TestCase, TestSuite, TestTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MutantId(pub u32);

impl fmt::Display for MutantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MutationOperator {
    ArithmeticReplacement { from: BinOp, to: BinOp },
    RelationalReplacement { from: BinOp, to: BinOp },
    ConditionNegation,
    ConstantPerturbation { from: i64, to: i64 },
    AssignmentDeletion,
}

impl MutationOperator {
    pub fn rank(&self) -> u8 {
        match self {
            MutationOperator::ArithmeticReplacement { .. } => 0,
            MutationOperator::RelationalReplacement { .. } => 1,
            MutationOperator::ConditionNegation => 2,
            MutationOperator::ConstantPerturbation { .. } => 3,
            MutationOperator::AssignmentDeletion => 4,
        }
    }
}

impl fmt::Display for MutationOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MutationOperator::ArithmeticReplacement { from, to }
            | MutationOperator::RelationalReplacement { from, to } => {
                write!(f, "{} -> {}", from.symbol(), to.symbol())
            }
            MutationOperator::ConditionNegation => f.write_str("negate condition"),
            MutationOperator::ConstantPerturbation { from, to } => write!(f, "{from} -> {to}"),
            MutationOperator::AssignmentDeletion => f.write_str("delete assignment"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mutant {
    pub id: MutantId,
    pub base: Arc<Program>,
    pub site: LineId,
    pub operator: MutationOperator,
    /// Expression node rewritten in place, when the operator targets one.
    pub target: Option<ExprId>,
    pub program: Program,
}

impl Mutant {
    fn probe(&self) -> Probe<'_> {
        let original = self
            .base
            .stmt(self.site)
            .expect("mutant site exists in base program");
        let relational_node = match (&self.operator, self.target) {
            (MutationOperator::RelationalReplacement { from, .. }, Some(id)) => Some((id, *from)),
            _ => None,
        };
        Probe {
            base: &self.base,
            site: self.site,
            original,
            relational_node,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MutantStatus {
    NotReached,
    ReachedNotInfected,
    Infected,
    Killed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutantOutcome {
    pub status: MutantStatus,
    /// Raw distance to infection: zero once infected, infinite when unreached.
    pub infection_distance: f64,
}

impl MutantOutcome {
    pub const NOT_REACHED: MutantOutcome = MutantOutcome {
        status: MutantStatus::NotReached,
        infection_distance: f64::INFINITY,
    };

    /// Keeps the more advanced of two outcomes, and the smaller distance.
    pub fn merge(self, other: MutantOutcome) -> MutantOutcome {
        MutantOutcome {
            status: self.status.max(other.status),
            infection_distance: self.infection_distance.min(other.infection_distance),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Weak,
    Strong,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MutationError {
    #[error("trace does not match test: {0}")]
    TraceMismatch(String),
    #[error("mutation score is undefined without mutants")]
    NoMutants,
}

/// Every first-order mutant of `program`, ordered by site and operator rank.
pub fn generate_mutants(program: &Program) -> Vec<Mutant> {
    let base = Arc::new(program.clone());
    let returns = infer::return_kinds(program);
    let mut specs: Vec<(LineId, u8, usize, Spec)> = Vec::new();
    let mut fresh_expr = program.expr_count() as u32;

    program.walk_stmts(&mut |fi, stmt| {
        let mut order = 0usize;
        let mut push = |rank: u8, spec: Spec| {
            specs.push((stmt.line, rank, order, spec));
            order += 1;
        };
        if let Some(e) = stmt.kind.own_expr() {
            e.walk(&mut |node| match &node.kind {
                ExprKind::Binary { op, lhs, .. } if op.is_arithmetic() => {
                    let lhs_kind = infer::expr_kind(program, fi, lhs, &returns);
                    if *op == BinOp::Add && lhs_kind == Some(Kind::Str) {
                        return;
                    }
                    for to in BinOp::ARITHMETIC.into_iter().filter(|t| t != op) {
                        push(0, Spec::Replace(node.id, to));
                    }
                }
                ExprKind::Binary { op, lhs, rhs } if op.is_relational() => {
                    let strings = infer::expr_kind(program, fi, lhs, &returns) == Some(Kind::Str)
                        || infer::expr_kind(program, fi, rhs, &returns) == Some(Kind::Str);
                    for to in BinOp::RELATIONAL.into_iter().filter(|t| t != op) {
                        if strings && !matches!(to, BinOp::Eq | BinOp::Ne) {
                            continue;
                        }
                        push(1, Spec::Replace(node.id, to));
                    }
                }
                ExprKind::Int(v) => {
                    for to in [v.checked_add(1), v.checked_sub(1)].into_iter().flatten() {
                        push(3, Spec::Constant(node.id, to));
                    }
                }
                _ => {}
            });
        }
        match &stmt.kind {
            StmtKind::If { .. } | StmtKind::While { .. } => push(2, Spec::Negate),
            StmtKind::Assign { .. } => push(4, Spec::Delete),
            _ => {}
        }
    });
    specs.sort_by_key(|(line, rank, order, _)| (*line, *rank, *order));

    specs
        .into_iter()
        .enumerate()
        .map(|(i, (site, _, _, spec))| {
            let mut mutated = program.clone();
            let stmt = mutated.stmt_mut(site).expect("site exists");
            let (operator, target) = apply(stmt, spec, &mut fresh_expr);
            Mutant {
                id: MutantId(i as u32),
                base: Arc::clone(&base),
                site,
                operator,
                target,
                program: mutated,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
enum Spec {
    Replace(ExprId, BinOp),
    Constant(ExprId, i64),
    Negate,
    Delete,
}

fn apply(stmt: &mut Stmt, spec: Spec, fresh_expr: &mut u32) -> (MutationOperator, Option<ExprId>) {
    match spec {
        Spec::Replace(id, to) => {
            let node = stmt
                .kind
                .own_expr_mut()
                .and_then(|e| e.find_mut(id))
                .expect("target node");
            let ExprKind::Binary { op, .. } = &mut node.kind else {
                unreachable!("replacement targets a binary node")
            };
            let from = std::mem::replace(op, to);
            let operator = if from.is_arithmetic() {
                MutationOperator::ArithmeticReplacement { from, to }
            } else {
                MutationOperator::RelationalReplacement { from, to }
            };
            (operator, Some(id))
        }
        Spec::Constant(id, to) => {
            let node = stmt
                .kind
                .own_expr_mut()
                .and_then(|e| e.find_mut(id))
                .expect("target node");
            let ExprKind::Int(v) = &mut node.kind else {
                unreachable!("perturbation targets a literal")
            };
            let from = std::mem::replace(v, to);
            (MutationOperator::ConstantPerturbation { from, to }, Some(id))
        }
        Spec::Negate => {
            let cond = stmt.kind.own_expr_mut().expect("condition");
            let inner = cond.clone();
            *cond = Expr {
                id: ExprId(*fresh_expr),
                kind: ExprKind::Unary {
                    op: UnaryOp::Not,
                    operand: Box::new(inner),
                },
            };
            *fresh_expr += 1;
            (MutationOperator::ConditionNegation, None)
        }
        Spec::Delete => {
            let original = stmt.clone();
            stmt.kind = StmtKind::Deleted(Box::new(original));
            (MutationOperator::AssignmentDeletion, None)
        }
    }
}

/// Classifies one test against one mutant, given the test's trace on the
/// unmutated program.
pub fn classify_against_mutant(
    mutant: &Mutant,
    test: &TestCase,
    base_trace: &TestTrace,
) -> Result<MutantOutcome, MutationError> {
    classify_calls(mutant, &test.resolved_calls(), &base_trace.calls)
}

/// Step budget for a mutant run whose original took `base_steps`. An
/// uninfected mutant stays in lockstep with the original, so only infected
/// runs can exhaust it; exhausting it raises a step-limit exception and kills
/// the mutant.
pub fn mutant_step_limit(base_steps: u64) -> u64 {
    base_steps
        .saturating_mul(4)
        .saturating_add(100)
        .min(DEFAULT_STEP_LIMIT)
        .max(base_steps)
}

pub(crate) fn classify_calls(
    mutant: &Mutant,
    calls: &[FunctionCall],
    base: &[ExecutionResult],
) -> Result<MutantOutcome, MutationError> {
    if calls.len() != base.len() {
        return Err(MutationError::TraceMismatch(format!(
            "{} calls but {} traced results",
            calls.len(),
            base.len()
        )));
    }
    let mut outcome = MutantOutcome::NOT_REACHED;
    let mut killed = false;
    let probe = mutant.probe();
    for (call, traced) in calls.iter().zip(base) {
        if traced.entry != call.function {
            return Err(MutationError::TraceMismatch(format!(
                "call to '{}' traced as '{}'",
                call.function, traced.entry
            )));
        }
        if !traced.lines_hit.contains(&mutant.site) {
            continue;
        }
        let (mutant_outcome, report) = Executor::new(&mutant.program)
            .with_step_limit(mutant_step_limit(traced.steps))
            .outcome_probed(call, &probe)
            .map_err(|e| MutationError::TraceMismatch(e.to_string()))?;
        let status = if report.infected {
            MutantStatus::Infected
        } else {
            MutantStatus::ReachedNotInfected
        };
        let distance = if report.infected { 0.0 } else { report.distance };
        outcome = outcome.merge(MutantOutcome {
            status,
            infection_distance: distance,
        });
        if mutant_outcome != traced.outcome {
            debug_assert!(report.infected, "outcome changed without infection");
            killed = true;
        }
    }
    if killed {
        outcome = MutantOutcome {
            status: MutantStatus::Killed,
            infection_distance: 0.0,
        };
    }
    Ok(outcome)
}

/// Percentage of mutants detected, from the best status each mutant reached.
pub fn score_from_statuses(
    best: impl IntoIterator<Item = MutantStatus>,
    mode: ScoreMode,
) -> Result<f64, MutationError> {
    let threshold = match mode {
        ScoreMode::Weak => MutantStatus::Infected,
        ScoreMode::Strong => MutantStatus::Killed,
    };
    let (mut total, mut detected) = (0usize, 0usize);
    for status in best {
        total += 1;
        if status >= threshold {
            detected += 1;
        }
    }
    if total == 0 {
        return Err(MutationError::NoMutants);
    }
    Ok(detected as f64 / total as f64 * 100.0)
}

/// Mutation score of `suite` over `mutants`, executing every test.
pub fn mutation_score(
    suite: &TestSuite,
    mutants: &[Mutant],
    mode: ScoreMode,
) -> Result<f64, MutationError> {
    let Some(first) = mutants.first() else {
        return Err(MutationError::NoMutants);
    };
    let executor = Executor::new(&first.base);
    let mut best = vec![MutantStatus::NotReached; mutants.len()];
    for test in &suite.tests {
        let calls = test.resolved_calls();
        let base: Vec<ExecutionResult> = calls
            .iter()
            .map(|c| executor.execute(c))
            .collect::<Result<_, _>>()
            .map_err(|e| MutationError::TraceMismatch(e.to_string()))?;
        for (slot, m) in best.iter_mut().zip(mutants) {
            if *slot == MutantStatus::Killed {
                continue;
            }
            *slot = (*slot).max(classify_calls(m, &calls, &base)?.status);
        }
    }
    score_from_statuses(best, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::{expr_to_string, parse, Value};
    use crate::testmodel::{Arg, Call};

    fn int_test(function: &str, args: &[i64]) -> TestCase {
        TestCase::new(vec![Call::new(
            function,
            args.iter().map(|&v| Arg::Lit(Value::Int(v))).collect(),
        )])
    }

    fn trace(program: &Program, test: &TestCase) -> TestTrace {
        TestTrace::of(program, test).unwrap()
    }

    fn site_expr(m: &Mutant) -> String {
        m.program
            .stmt(m.site)
            .and_then(|s| s.kind.own_expr())
            .map(expr_to_string)
            .unwrap_or_default()
    }

    #[test]
    fn arithmetic_table_for_addition() {
        let p = parse("fn f(a:int, b:int){ return a+b; }").unwrap();
        let exprs: Vec<String> = generate_mutants(&p).iter().map(site_expr).collect();
        for want in ["a - b", "a * b", "a / b"] {
            assert!(exprs.iter().any(|e| e == want), "{want} missing in {exprs:?}");
        }
    }

    #[test]
    fn relational_table_for_less_than() {
        let p = parse("fn f(x:int){ if (x<5) { return 1; } return 0; }").unwrap();
        let exprs: Vec<String> = generate_mutants(&p).iter().map(site_expr).collect();
        for want in ["x <= 5", "x > 5", "x == 5", "x != 5", "x >= 5", "!(x < 5)", "x < 6", "x < 4"] {
            assert!(exprs.iter().any(|e| e == want), "{want} missing in {exprs:?}");
        }
    }

    #[test]
    fn empty_program_has_no_mutants() {
        assert!(generate_mutants(&parse("").unwrap()).is_empty());
    }

    #[test]
    fn ordering_and_reparse() {
        let p = parse(
            "fn f(x:int, s:str){ let y = x * 2; y = y + 1; while (y > 10) { y = y - 3; } \
             if (s == \"k\" && len(s + \"a\") > 1) { return s; } return y; }",
        )
        .unwrap();
        let ms = generate_mutants(&p);
        assert!(!ms.is_empty());
        for pair in ms.windows(2) {
            assert!((pair[0].site, pair[0].operator.rank()) <= (pair[1].site, pair[1].operator.rank()));
        }
        for (i, m) in ms.iter().enumerate() {
            assert_eq!(m.id, MutantId(i as u32));
            assert_ne!(m.program, p);
            let text = m.program.to_string();
            parse(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        }
        // no arithmetic mutants of string concatenation, no ordering on strings
        assert!(!ms.iter().any(|m| site_expr(m).contains("len(s - ")));
        assert!(!ms.iter().any(|m| site_expr(m).contains("s < \"k\"")));
        assert!(ms.iter().any(|m| m.operator == MutationOperator::AssignmentDeletion));
    }

    #[test]
    fn classification_examples() {
        let p = parse("fn f(a:int, b:int){ return a+b; }").unwrap();
        let ms = generate_mutants(&p);
        let minus = ms.iter().find(|m| site_expr(m) == "a - b").unwrap();

        let t = int_test("f", &[1, 0]);
        let o = classify_against_mutant(minus, &t, &trace(&p, &t)).unwrap();
        assert_eq!(o.status, MutantStatus::ReachedNotInfected);
        assert!(o.infection_distance > 0.0);

        let t = int_test("f", &[1, 2]);
        let o = classify_against_mutant(minus, &t, &trace(&p, &t)).unwrap();
        assert_eq!(o.status, MutantStatus::Killed);
        assert_eq!(o.infection_distance, 0.0);
    }

    #[test]
    fn unexecuted_arm_is_not_reached() {
        let p = parse("fn f(x:int){ if (x > 100) { return x * 2; } return 0; }").unwrap();
        let ms = generate_mutants(&p);
        let inner = ms.iter().find(|m| site_expr(m) == "x + 2").unwrap();
        let t = int_test("f", &[3]);
        let o = classify_against_mutant(inner, &t, &trace(&p, &t)).unwrap();
        assert_eq!(o, MutantOutcome::NOT_REACHED);
    }

    #[test]
    fn relational_infection_distance_guides_to_boundary() {
        let p = parse("fn f(x:int){ if (x < 5) { return 1; } return 0; }").unwrap();
        let ms = generate_mutants(&p);
        let le = ms.iter().find(|m| site_expr(m) == "x <= 5").unwrap();
        let d = |x| {
            let t = int_test("f", &[x]);
            classify_against_mutant(le, &t, &trace(&p, &t)).unwrap()
        };
        assert_eq!(d(9).infection_distance, 4.0);
        assert_eq!(d(7).infection_distance, 2.0);
        assert_eq!(d(5).status, MutantStatus::Killed);
    }

    #[test]
    fn infected_but_masked_is_not_killed() {
        let p = parse("fn f(x:int){ let y = x * 1; return 0 * y; }").unwrap();
        let ms = generate_mutants(&p);
        let plus = ms.iter().find(|m| site_expr(m) == "x + 1").unwrap();
        let t = int_test("f", &[3]);
        let o = classify_against_mutant(plus, &t, &trace(&p, &t)).unwrap();
        assert_eq!(o.status, MutantStatus::Infected);
    }

    #[test]
    fn deletion_infects_only_on_change() {
        let p = parse("fn f(x:int){ let y = 0; y = x; return y; }").unwrap();
        let del = generate_mutants(&p)
            .into_iter()
            .find(|m| m.operator == MutationOperator::AssignmentDeletion)
            .unwrap();
        let t = int_test("f", &[0]);
        assert_eq!(
            classify_against_mutant(&del, &t, &trace(&p, &t)).unwrap().status,
            MutantStatus::ReachedNotInfected
        );
        let t = int_test("f", &[4]);
        assert_eq!(
            classify_against_mutant(&del, &t, &trace(&p, &t)).unwrap().status,
            MutantStatus::Killed
        );
    }

    #[test]
    fn trace_mismatch_is_an_error() {
        let p = parse("fn f(x:int){ return x; } fn g(x:int){ return x; }").unwrap();
        let m = &generate_mutants(&parse("fn f(x:int){ return x + 1; } fn g(x:int){ return x; }").unwrap())[0];
        let t = int_test("f", &[1]);
        let other = trace(&p, &int_test("g", &[1]));
        assert!(classify_against_mutant(m, &t, &other).is_err());
        let empty = TestTrace { calls: vec![] };
        assert!(classify_against_mutant(m, &t, &empty).is_err());
    }

    #[test]
    fn scores() {
        use MutantStatus::*;
        let statuses = [Killed, Killed, Killed, Infected, NotReached, NotReached, NotReached, NotReached, ReachedNotInfected, NotReached, NotReached, NotReached];
        assert_eq!(score_from_statuses(statuses, ScoreMode::Strong).unwrap(), 25.0);
        assert!((score_from_statuses(statuses, ScoreMode::Weak).unwrap() - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(score_from_statuses([Killed; 4], ScoreMode::Strong).unwrap(), 100.0);
        assert_eq!(score_from_statuses([], ScoreMode::Weak), Err(MutationError::NoMutants));

        let p = parse("fn f(a:int, b:int){ return a+b; }").unwrap();
        let ms = generate_mutants(&p);
        let empty = TestSuite::default();
        assert_eq!(mutation_score(&empty, &ms, ScoreMode::Weak).unwrap(), 0.0);
        assert_eq!(mutation_score(&empty, &ms, ScoreMode::Strong).unwrap(), 0.0);
        assert_eq!(mutation_score(&empty, &[], ScoreMode::Strong), Err(MutationError::NoMutants));
    }
}
