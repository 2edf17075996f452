//! Recursive-descent parser for MiniJ.
//!
//! Identifiers for statements, branch sites and expression nodes are handed
//! out in lexical order, so the same source always yields the same ids.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use super::ast::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

const PUNCT: [&str; 24] = [
    "==", "!=", "<=", ">=", "&&", "||", "(", ")", "{", "}", "[", "]", ",", ";", ":", "=", "<",
    ">", "+", "-", "*", "/", "%", "!",
];

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, column, message: String| ParseError {
        line,
        column,
        message,
    };

    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (tl, tc) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: tl,
                column: tc,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            col += i - start;
            let text: String = chars[start..i].iter().collect();
            let value = text
                .parse::<i64>()
                .map_err(|_| err(tl, tc, format!("integer literal out of range: {text}")))?;
            out.push(Token {
                tok: Tok::Int(value),
                line: tl,
                column: tc,
            });
            continue;
        }
        if c == '"' {
            i += 1;
            col += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => {
                        return Err(err(tl, tc, "unterminated string literal".into()));
                    }
                    Some('"') => {
                        i += 1;
                        col += 1;
                        break;
                    }
                    Some('\\') => {
                        let esc = match chars.get(i + 1) {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            _ => return Err(err(line, col, "invalid escape sequence".into())),
                        };
                        s.push(esc);
                        i += 2;
                        col += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                        col += 1;
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                line: tl,
                column: tc,
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCT.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                i += p.len();
                col += p.len();
                out.push(Token {
                    tok: Tok::Punct(p),
                    line: tl,
                    column: tc,
                });
            }
            None => return Err(err(tl, tc, format!("unexpected character '{c}'"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

const KEYWORDS: [&str; 10] = [
    "fn", "let", "if", "else", "while", "return", "throw", "true", "false", "len",
];

/// A call site awaiting resolution once every function header is known.
struct PendingCall {
    expr: ExprId,
    name: String,
    argc: usize,
    line: usize,
    column: usize,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    next_line: u32,
    next_branch: u32,
    next_expr: u32,
    // per-function state
    slots: Vec<String>,
    declared: HashMap<String, usize>,
    bound: HashSet<String>,
    pending_vars: Vec<(String, usize, usize)>,
    calls: Vec<PendingCall>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.column)
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        let (line, column) = self.here();
        Err(ParseError {
            line,
            column,
            message: message.into(),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Int(v) => format!("'{v}'"),
            Tok::Str(s) => format!("{s:?}"),
            Tok::Punct(p) => format!("'{p}'"),
            Tok::Eof => "end of input".to_string(),
        }
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn at_keyword(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == k)
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.at_punct(p) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected '{p}', found {}", self.describe()))
        }
    }

    fn expect_keyword(&mut self, k: &str) -> PResult<()> {
        if self.at_keyword(k) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected '{k}', found {}", self.describe()))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            _ => self.error(format!("expected identifier, found {}", self.describe())),
        }
    }

    fn line_id(&mut self) -> LineId {
        let id = LineId(self.next_line);
        self.next_line += 1;
        id
    }

    fn expr(&mut self, kind: ExprKind) -> Expr {
        let id = ExprId(self.next_expr);
        self.next_expr += 1;
        Expr { id, kind }
    }

    fn function(&mut self) -> PResult<FunctionDef> {
        self.expect_keyword("fn")?;
        let name = self.ident()?;
        self.slots.clear();
        self.declared.clear();
        self.bound.clear();
        self.pending_vars.clear();
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.at_punct(")") {
            loop {
                let pname = self.ident()?;
                if self.declared.contains_key(&pname) {
                    return self.error(format!("duplicate parameter '{pname}'"));
                }
                self.expect_punct(":")?;
                let kind = match self.peek() {
                    Tok::Ident(k) if k == "int" => Kind::Int,
                    Tok::Ident(k) if k == "bool" => Kind::Bool,
                    Tok::Ident(k) if k == "str" => Kind::Str,
                    _ => {
                        return self.error(format!(
                            "expected parameter kind (int, bool, str), found {}",
                            self.describe()
                        ))
                    }
                };
                self.bump();
                self.declared.insert(pname.clone(), self.slots.len());
                self.bound.insert(pname.clone());
                self.slots.push(pname.clone());
                params.push(Param { name: pname, kind });
                if self.at_punct(",") {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        let body = self.block()?;
        for (var, line, column) in std::mem::take(&mut self.pending_vars) {
            if !self.bound.contains(&var) {
                return Err(ParseError {
                    line,
                    column,
                    message: format!("unknown variable '{var}' in function '{name}'"),
                });
            }
        }
        Ok(FunctionDef {
            name,
            params,
            body,
            slots: std::mem::take(&mut self.slots),
        })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_punct("{")?;
        let mut body = Vec::new();
        while !self.at_punct("}") {
            if matches!(self.peek(), Tok::Eof) {
                return self.error("expected '}', found end of input");
            }
            body.push(self.statement()?);
        }
        self.bump();
        Ok(body)
    }

    fn slot_for(&mut self, name: &str) -> usize {
        if let Some(&slot) = self.declared.get(name) {
            return slot;
        }
        let slot = self.slots.len();
        self.slots.push(name.to_string());
        self.declared.insert(name.to_string(), slot);
        slot
    }

    /// Slot for a referenced variable; declarations later in the function
    /// are accepted (function scope), unknown names are reported at the end.
    fn use_slot(&mut self, name: &str) -> usize {
        let (line, column) = self.here();
        if !self.bound.contains(name) {
            self.pending_vars.push((name.to_string(), line, column));
        }
        self.slot_for(name)
    }

    fn statement(&mut self) -> PResult<Stmt> {
        if self.at_keyword("let") {
            self.bump();
            let line = self.line_id();
            let name = self.ident()?;
            self.expect_punct("=")?;
            let value = self.expression()?;
            self.expect_punct(";")?;
            let slot = self.slot_for(&name);
            self.bound.insert(name.clone());
            return Ok(Stmt {
                line,
                kind: StmtKind::Let { slot, name, value },
            });
        }
        if self.at_keyword("if") {
            return self.if_statement();
        }
        if self.at_keyword("while") {
            self.bump();
            let line = self.line_id();
            let branch = BranchId(self.next_branch);
            self.next_branch += 1;
            self.expect_punct("(")?;
            let cond = self.expression()?;
            self.expect_punct(")")?;
            let body = self.block()?;
            return Ok(Stmt {
                line,
                kind: StmtKind::While { branch, cond, body },
            });
        }
        if self.at_keyword("return") {
            self.bump();
            let line = self.line_id();
            let value = self.expression()?;
            self.expect_punct(";")?;
            return Ok(Stmt {
                line,
                kind: StmtKind::Return(value),
            });
        }
        if self.at_keyword("throw") {
            self.bump();
            let line = self.line_id();
            let tag = match self.peek().clone() {
                Tok::Str(s) => {
                    self.bump();
                    s
                }
                _ => return self.error(format!("expected string tag, found {}", self.describe())),
            };
            self.expect_punct(";")?;
            return Ok(Stmt {
                line,
                kind: StmtKind::Throw(tag),
            });
        }
        if let Tok::Ident(_) = self.peek() {
            let line = self.line_id();
            let name = self.ident()?;
            let slot = self.use_slot(&name);
            self.expect_punct("=")?;
            let value = self.expression()?;
            self.expect_punct(";")?;
            return Ok(Stmt {
                line,
                kind: StmtKind::Assign { slot, name, value },
            });
        }
        self.error(format!("expected statement, found {}", self.describe()))
    }

    fn if_statement(&mut self) -> PResult<Stmt> {
        self.expect_keyword("if")?;
        let line = self.line_id();
        let branch = BranchId(self.next_branch);
        self.next_branch += 1;
        self.expect_punct("(")?;
        let cond = self.expression()?;
        self.expect_punct(")")?;
        let then_body = self.block()?;
        let else_body = if self.at_keyword("else") {
            self.bump();
            if self.at_keyword("if") {
                vec![self.if_statement()?]
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        Ok(Stmt {
            line,
            kind: StmtKind::If {
                branch,
                cond,
                then_body,
                else_body,
            },
        })
    }

    fn expression(&mut self) -> PResult<Expr> {
        self.binary_level(0)
    }

    fn binary_level(&mut self, level: usize) -> PResult<Expr> {
        const LEVELS: [&[(&str, BinOp)]; 5] = [
            &[("||", BinOp::Or)],
            &[("&&", BinOp::And)],
            &[
                ("==", BinOp::Eq),
                ("!=", BinOp::Ne),
                ("<=", BinOp::Le),
                (">=", BinOp::Ge),
                ("<", BinOp::Lt),
                (">", BinOp::Gt),
            ],
            &[("+", BinOp::Add), ("-", BinOp::Sub)],
            &[("*", BinOp::Mul), ("/", BinOp::Div), ("%", BinOp::Mod)],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary_level(level + 1)?;
        loop {
            let op = LEVELS[level]
                .iter()
                .find(|(p, _)| self.at_punct(p))
                .map(|(_, op)| *op);
            let Some(op) = op else { break };
            self.bump();
            let rhs = self.binary_level(level + 1)?;
            lhs = self.expr(ExprKind::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            });
            // comparisons do not chain
            if level == 2 {
                break;
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let op = if self.at_punct("-") {
            Some(UnaryOp::Neg)
        } else if self.at_punct("!") {
            Some(UnaryOp::Not)
        } else {
            None
        };
        if let Some(op) = op {
            self.bump();
            let operand = self.unary()?;
            return Ok(self.expr(ExprKind::Unary {
                op,
                operand: Box::new(operand),
            }));
        }
        let mut e = self.primary()?;
        while self.at_punct("[") {
            self.bump();
            let index = self.expression()?;
            self.expect_punct("]")?;
            e = self.expr(ExprKind::Index {
                target: Box::new(e),
                index: Box::new(index),
            });
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let (line, column) = self.here();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(self.expr(ExprKind::Int(v)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(self.expr(ExprKind::Str(s)))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expression()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(self.expr(ExprKind::Bool(s == "true")))
            }
            Tok::Ident(s) if s == "len" => {
                self.bump();
                self.expect_punct("(")?;
                let e = self.expression()?;
                self.expect_punct(")")?;
                Ok(self.expr(ExprKind::Len(Box::new(e))))
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                if self.at_punct("(") {
                    self.bump();
                    let mut args = Vec::new();
                    if !self.at_punct(")") {
                        loop {
                            args.push(self.expression()?);
                            if self.at_punct(",") {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect_punct(")")?;
                    let argc = args.len();
                    let e = self.expr(ExprKind::Call {
                        func: usize::MAX,
                        name: name.clone(),
                        args,
                    });
                    self.calls.push(PendingCall {
                        expr: e.id,
                        name,
                        argc,
                        line,
                        column,
                    });
                    Ok(e)
                } else {
                    let slot = self.use_slot(&name);
                    Ok(self.expr(ExprKind::Var { slot, name }))
                }
            }
            _ => self.error(format!("expected expression, found {}", self.describe())),
        }
    }
}

/// Parses MiniJ source text into a [`Program`].
pub fn parse(source: &str) -> Result<Program, ParseError> {
    parse_named(source, "<input>")
}

/// Like [`parse`], tagging the program with `source_id`.
pub fn parse_named(source: &str, source_id: &str) -> Result<Program, ParseError> {
    let mut p = Parser {
        toks: lex(source)?,
        pos: 0,
        next_line: 0,
        next_branch: 0,
        next_expr: 0,
        slots: Vec::new(),
        declared: HashMap::new(),
        bound: HashSet::new(),
        pending_vars: Vec::new(),
        calls: Vec::new(),
    };
    let mut functions: Vec<FunctionDef> = Vec::new();
    let mut headers: Vec<(usize, usize)> = Vec::new();
    while !matches!(p.peek(), Tok::Eof) {
        let pos = p.here();
        let f = p.function()?;
        if functions.iter().any(|g| g.name == f.name) {
            return Err(ParseError {
                line: pos.0,
                column: pos.1,
                message: format!("duplicate function '{}'", f.name),
            });
        }
        headers.push(pos);
        functions.push(f);
    }

    let index: HashMap<String, (usize, usize)> = functions
        .iter()
        .enumerate()
        .map(|(i, f)| (f.name.clone(), (i, f.params.len())))
        .collect();
    let mut resolved = HashMap::new();
    for call in &p.calls {
        match index.get(&call.name) {
            None => {
                return Err(ParseError {
                    line: call.line,
                    column: call.column,
                    message: format!("unknown function '{}'", call.name),
                })
            }
            Some(&(_, arity)) if arity != call.argc => {
                return Err(ParseError {
                    line: call.line,
                    column: call.column,
                    message: format!(
                        "function '{}' takes {arity} arguments, {} given",
                        call.name, call.argc
                    ),
                })
            }
            Some(&(fi, _)) => {
                resolved.insert(call.expr, fi);
            }
        }
    }
    let mut program = Program {
        source_id: source_id.to_string(),
        functions,
        line_count: p.next_line,
        branch_count: p.next_branch,
        expr_count: p.next_expr,
    };
    for (id, fi) in resolved {
        let mut done = false;
        for func in &mut program.functions {
            if patch_call(&mut func.body, id, fi) {
                done = true;
                break;
            }
        }
        debug_assert!(done, "call site {id} not found");
    }
    Ok(program)
}

fn patch_call(body: &mut [Stmt], id: ExprId, fi: usize) -> bool {
    for stmt in body {
        if let Some(e) = stmt.kind.own_expr_mut() {
            if let Some(node) = e.find_mut(id) {
                if let ExprKind::Call { func, .. } = &mut node.kind {
                    *func = fi;
                }
                return true;
            }
        }
        let nested = match &mut stmt.kind {
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => patch_call(then_body, id, fi) || patch_call(else_body, id, fi),
            StmtKind::While { body, .. } => patch_call(body, id, fi),
            _ => false,
        };
        if nested {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_single_branch_function() {
        let p = parse("fn f(x:int){ if(x==5){return 1;} return 0; }").unwrap();
        assert_eq!(p.functions.len(), 1);
        assert_eq!(p.branch_count(), 1);
        assert_eq!(p.line_count(), 3);
    }

    #[test]
    fn empty_source_is_empty_program() {
        let p = parse("").unwrap();
        assert!(p.functions.is_empty());
        assert_eq!(p.line_count(), 0);
    }

    #[test]
    fn unbalanced_brace_reports_end_of_input() {
        let e = parse("fn f(){").unwrap_err();
        assert!(e.message.contains("end of input"), "{e}");
        assert_eq!((e.line, e.column), (1, 8));
    }

    #[test]
    fn duplicate_function_rejected() {
        let e = parse("fn f(){ return 1; }\nfn f(){ return 2; }").unwrap_err();
        assert!(e.message.contains("duplicate function"));
        assert_eq!(e.line, 2);
    }

    #[test]
    fn unknown_names_rejected() {
        assert!(parse("fn f(){ return g(); }")
            .unwrap_err()
            .message
            .contains("unknown function"));
        assert!(parse("fn f(){ return y; }")
            .unwrap_err()
            .message
            .contains("unknown variable"));
        assert!(parse("fn f(a:int, a:int){ return 1; }")
            .unwrap_err()
            .message
            .contains("duplicate parameter"));
        assert!(parse("fn g(a:int){ return a; } fn f(){ return g(1, 2); }")
            .unwrap_err()
            .message
            .contains("takes 1 arguments"));
    }

    #[test]
    fn ids_are_lexical_and_stable() {
        let src = "fn a(x:int){ let y = x + 1; while (y > 0) { y = y - 1; } return y; }\n\
                   fn b(s:str){ if (len(s) > 2 && s[0] == \"q\") { throw \"q\"; } else if (s == \"\") { return 0; } return a(len(s)); }";
        let p1 = parse(src).unwrap();
        let p2 = parse(src).unwrap();
        assert_eq!(p1, p2);
        let mut lines = Vec::new();
        p1.walk_stmts(&mut |_, s| lines.push(s.line.0));
        assert_eq!(lines, (0..p1.line_count() as u32).collect::<Vec<_>>());
        assert_eq!(p1.branch_count(), 3);
    }

    #[test]
    fn comments_and_precedence() {
        let p = parse("// header\nfn f(a:int,b:int){ return a + b * 2 == 7 || !(a < b); }").unwrap();
        let StmtKind::Return(e) = &p.functions[0].body[0].kind else {
            panic!()
        };
        let ExprKind::Binary { op, .. } = &e.kind else {
            panic!()
        };
        assert_eq!(*op, BinOp::Or);
    }
}
