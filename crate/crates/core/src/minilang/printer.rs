//! Renders a [`Program`] back to MiniJ source.
//!
//! Binary expressions are fully parenthesized, so the output re-parses to the
//! same tree shape regardless of precedence. Deleted statements are omitted.

use std::fmt::{self, Write};

use super::ast::*;

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, func) in self.functions.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            let params: Vec<String> = func
                .params
                .iter()
                .map(|p| format!("{}:{}", p.name, p.kind))
                .collect();
            writeln!(f, "fn {}({}) {{", func.name, params.join(", "))?;
            write_block(f, &func.body, 1)?;
            f.write_str("}\n")?;
        }
        Ok(())
    }
}

fn indent(f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
    for _ in 0..depth {
        f.write_str("    ")?;
    }
    Ok(())
}

fn write_block(f: &mut fmt::Formatter<'_>, body: &[Stmt], depth: usize) -> fmt::Result {
    for stmt in body {
        write_stmt(f, stmt, depth)?;
    }
    Ok(())
}

fn write_stmt(f: &mut fmt::Formatter<'_>, stmt: &Stmt, depth: usize) -> fmt::Result {
    if let StmtKind::Deleted(_) = stmt.kind {
        return Ok(());
    }
    indent(f, depth)?;
    match &stmt.kind {
        StmtKind::Let { name, value, .. } => writeln!(f, "let {name} = {};", expr_to_string(value)),
        StmtKind::Assign { name, value, .. } => writeln!(f, "{name} = {};", expr_to_string(value)),
        StmtKind::If {
            cond,
            then_body,
            else_body,
            ..
        } => {
            writeln!(f, "if ({}) {{", expr_to_string(cond))?;
            write_block(f, then_body, depth + 1)?;
            indent(f, depth)?;
            if else_body.is_empty() {
                f.write_str("}\n")
            } else {
                f.write_str("} else {\n")?;
                write_block(f, else_body, depth + 1)?;
                indent(f, depth)?;
                f.write_str("}\n")
            }
        }
        StmtKind::While { cond, body, .. } => {
            writeln!(f, "while ({}) {{", expr_to_string(cond))?;
            write_block(f, body, depth + 1)?;
            indent(f, depth)?;
            f.write_str("}\n")
        }
        StmtKind::Return(e) => writeln!(f, "return {};", expr_to_string(e)),
        StmtKind::Throw(tag) => writeln!(f, "throw {};", crate::minilang::Value::Str(tag.clone())),
        StmtKind::Deleted(_) => Ok(()),
    }
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn write_atom(out: &mut String, e: &Expr) {
    let simple = matches!(
        e.kind,
        ExprKind::Int(v) if v >= 0
    ) || matches!(
        e.kind,
        ExprKind::Bool(_)
            | ExprKind::Str(_)
            | ExprKind::Var { .. }
            | ExprKind::Call { .. }
            | ExprKind::Len(_)
            | ExprKind::Index { .. }
    );
    if simple {
        write_expr(out, e);
    } else {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Int(v) if *v == i64::MIN => out.push_str("(-9223372036854775807 - 1)"),
        ExprKind::Int(v) if *v < 0 => {
            let _ = write!(out, "(-{})", v.unsigned_abs());
        }
        ExprKind::Int(v) => {
            let _ = write!(out, "{v}");
        }
        ExprKind::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        ExprKind::Str(s) => {
            let _ = write!(out, "{}", crate::minilang::Value::Str(s.clone()));
        }
        ExprKind::Var { name, .. } => out.push_str(name),
        ExprKind::Unary { op, operand } => {
            out.push(match op {
                UnaryOp::Neg => '-',
                UnaryOp::Not => '!',
            });
            write_atom(out, operand);
        }
        ExprKind::Binary { op, lhs, rhs } => {
            write_atom(out, lhs);
            let _ = write!(out, " {} ", op.symbol());
            write_atom(out, rhs);
        }
        ExprKind::Call { name, args, .. } => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a);
            }
            out.push(')');
        }
        ExprKind::Len(inner) => {
            out.push_str("len(");
            write_expr(out, inner);
            out.push(')');
        }
        ExprKind::Index { target, index } => {
            write_atom(out, target);
            out.push('[');
            write_expr(out, index);
            out.push(']');
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::minilang::parse;

    #[test]
    fn printed_source_reparses_to_same_program() {
        let src = "fn a(x:int, s:str){ let y = -x + 2 * (x - 1); while (y > 0 && !(y == 3)) { y = y - 1; } \
                   if (s == \"q\\\"\") { throw \"t\"; } else if (len(s) > 1) { return s[0]; } return y % 7; }\n\
                   fn b(){ return a(-3, \"\"); }";
        let p = parse(src).unwrap();
        let printed = p.to_string();
        let q = parse(&printed).unwrap();
        assert_eq!(p.functions, q.functions, "{printed}");
    }
}
