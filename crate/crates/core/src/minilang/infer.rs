//! Static kind inference: what a function may return, and the kind of an
//! expression when it is statically evident.

use std::collections::BTreeSet;

use super::ast::*;

/// Kinds each function may return, indexed like `program.functions`.
pub fn return_kinds(program: &Program) -> Vec<BTreeSet<Kind>> {
    let mut kinds: Vec<BTreeSet<Kind>> = vec![BTreeSet::new(); program.functions.len()];
    // Calls make this a fixpoint; each round can only add kinds.
    loop {
        let mut changed = false;
        for (fi, func) in program.functions.iter().enumerate() {
            let locals = local_kinds(program, func, &kinds);
            let mut found = BTreeSet::new();
            walk_returns(&func.body, &mut |e| {
                if let Some(k) = expr_kind_with(e, &locals, program, &kinds) {
                    found.insert(k);
                }
            });
            if !found.is_subset(&kinds[fi]) {
                kinds[fi].extend(found);
                changed = true;
            }
        }
        if !changed {
            return kinds;
        }
    }
}

fn walk_returns<'a>(body: &'a [Stmt], f: &mut impl FnMut(&'a Expr)) {
    for stmt in body {
        match &stmt.kind {
            StmtKind::Return(e) => f(e),
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                walk_returns(then_body, f);
                walk_returns(else_body, f);
            }
            StmtKind::While { body, .. } => walk_returns(body, f),
            _ => {}
        }
    }
}

/// Per-slot kind, taken from parameters and the first binding seen.
fn local_kinds(
    program: &Program,
    func: &FunctionDef,
    returns: &[BTreeSet<Kind>],
) -> Vec<Option<Kind>> {
    let mut locals: Vec<Option<Kind>> = vec![None; func.slot_count()];
    for (i, p) in func.params.iter().enumerate() {
        locals[i] = Some(p.kind);
    }
    fn go(
        body: &[Stmt],
        locals: &mut Vec<Option<Kind>>,
        program: &Program,
        returns: &[BTreeSet<Kind>],
    ) {
        for stmt in body {
            match &stmt.kind {
                StmtKind::Let { slot, value, .. } | StmtKind::Assign { slot, value, .. } => {
                    if locals[*slot].is_none() {
                        locals[*slot] = expr_kind_with(value, locals, program, returns);
                    }
                }
                StmtKind::If {
                    then_body,
                    else_body,
                    ..
                } => {
                    go(then_body, locals, program, returns);
                    go(else_body, locals, program, returns);
                }
                StmtKind::While { body, .. } => go(body, locals, program, returns),
                _ => {}
            }
        }
    }
    go(&func.body, &mut locals, program, returns);
    locals
}

fn expr_kind_with(
    e: &Expr,
    locals: &[Option<Kind>],
    program: &Program,
    returns: &[BTreeSet<Kind>],
) -> Option<Kind> {
    match &e.kind {
        ExprKind::Int(_) | ExprKind::Len(_) => Some(Kind::Int),
        ExprKind::Bool(_) => Some(Kind::Bool),
        ExprKind::Str(_) | ExprKind::Index { .. } => Some(Kind::Str),
        ExprKind::Var { slot, .. } => locals.get(*slot).copied().flatten(),
        ExprKind::Unary { op: UnaryOp::Neg, .. } => Some(Kind::Int),
        ExprKind::Unary { op: UnaryOp::Not, .. } => Some(Kind::Bool),
        ExprKind::Binary { op, lhs, rhs } => {
            if op.is_relational() || matches!(op, BinOp::And | BinOp::Or) {
                Some(Kind::Bool)
            } else if *op == BinOp::Add {
                expr_kind_with(lhs, locals, program, returns)
                    .or_else(|| expr_kind_with(rhs, locals, program, returns))
            } else {
                Some(Kind::Int)
            }
        }
        ExprKind::Call { func, .. } => {
            let ks = returns.get(*func)?;
            if ks.len() == 1 {
                ks.iter().next().copied()
            } else {
                None
            }
        }
    }
}

/// Statically evident kind of `e` inside function `fi`.
pub fn expr_kind(program: &Program, fi: usize, e: &Expr, returns: &[BTreeSet<Kind>]) -> Option<Kind> {
    let func = &program.functions[fi];
    let locals = local_kinds(program, func, returns);
    expr_kind_with(e, &locals, program, returns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::parse;

    #[test]
    fn infers_through_calls_and_locals() {
        let p = parse(
            "fn a(x:int){ if (x > 0) { return \"pos\"; } return b(x); }\n\
             fn b(x:int){ let y = x * 2; return y; }\n\
             fn c(){ return a(1) == \"pos\"; }\n\
             fn d(){ let z = 1; }",
        )
        .unwrap();
        let k = return_kinds(&p);
        assert_eq!(k[0], BTreeSet::from([Kind::Int, Kind::Str]));
        assert_eq!(k[1], BTreeSet::from([Kind::Int]));
        assert_eq!(k[2], BTreeSet::from([Kind::Bool]));
        assert!(k[3].is_empty());
    }
}
