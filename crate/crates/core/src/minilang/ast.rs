use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(
    /// Statement identifier, assigned in lexical order across the whole program.
    LineId
);
id_type!(
    /// Identifier of an `if`/`while` predicate site.
    BranchId
);
id_type!(
    /// Identifier of an expression node.
    ExprId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Int,
    Bool,
    Str,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Int => "int",
            Kind::Bool => "bool",
            Kind::Str => "str",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub kind: Kind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    /// Local variable slots; parameters occupy the first `params.len()`.
    pub(crate) slots: Vec<String>,
}

impl FunctionDef {
    pub fn param_kinds(&self) -> Vec<Kind> {
        self.params.iter().map(|p| p.kind).collect()
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub line: LineId,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Let {
        slot: usize,
        name: String,
        value: Expr,
    },
    Assign {
        slot: usize,
        name: String,
        value: Expr,
    },
    If {
        branch: BranchId,
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    While {
        branch: BranchId,
        cond: Expr,
        body: Vec<Stmt>,
    },
    Return(Expr),
    Throw(String),
    /// An assignment removed by statement deletion. Never produced by the
    /// parser and never printed; kept so the removed site remains observable.
    Deleted(Box<Stmt>),
}

impl StmtKind {
    /// The expression evaluated by this statement itself, excluding nested bodies.
    pub fn own_expr(&self) -> Option<&Expr> {
        match self {
            StmtKind::Let { value, .. } | StmtKind::Assign { value, .. } => Some(value),
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => Some(cond),
            StmtKind::Return(e) => Some(e),
            StmtKind::Throw(_) | StmtKind::Deleted(_) => None,
        }
    }

    pub(crate) fn own_expr_mut(&mut self) -> Option<&mut Expr> {
        match self {
            StmtKind::Let { value, .. } | StmtKind::Assign { value, .. } => Some(value),
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => Some(cond),
            StmtKind::Return(e) => Some(e),
            StmtKind::Throw(_) | StmtKind::Deleted(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub id: ExprId,
    pub kind: ExprKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Bool(bool),
    Str(String),
    Var {
        slot: usize,
        name: String,
    },
    Unary {
        op: UnaryOp,
        operand: Box<Expr>,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call {
        func: usize,
        name: String,
        args: Vec<Expr>,
    },
    Len(Box<Expr>),
    Index {
        target: Box<Expr>,
        index: Box<Expr>,
    },
}

impl Expr {
    /// Pre-order walk over this expression tree.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Unary { operand, .. } | ExprKind::Len(operand) => operand.walk(f),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            ExprKind::Call { args, .. } => args.iter().for_each(|a| a.walk(f)),
            ExprKind::Index { target, index } => {
                target.walk(f);
                index.walk(f);
            }
            ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Str(_) | ExprKind::Var { .. } => {}
        }
    }

    pub(crate) fn find_mut(&mut self, id: ExprId) -> Option<&mut Expr> {
        if self.id == id {
            return Some(self);
        }
        match &mut self.kind {
            ExprKind::Unary { operand, .. } | ExprKind::Len(operand) => operand.find_mut(id),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.find_mut(id).or_else(move || rhs.find_mut(id))
            }
            ExprKind::Call { args, .. } => args.iter_mut().find_map(|a| a.find_mut(id)),
            ExprKind::Index { target, index } => {
                target.find_mut(id).or_else(move || index.find_mut(id))
            }
            ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Str(_) | ExprKind::Var { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub const ARITHMETIC: [BinOp; 5] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Mod];
    pub const RELATIONAL: [BinOp; 6] = [
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub fn is_arithmetic(self) -> bool {
        Self::ARITHMETIC.contains(&self)
    }

    pub fn is_relational(self) -> bool {
        Self::RELATIONAL.contains(&self)
    }

    /// Logical complement of a relational operator.
    pub fn negated(self) -> Option<BinOp> {
        Some(match self {
            BinOp::Eq => BinOp::Ne,
            BinOp::Ne => BinOp::Eq,
            BinOp::Lt => BinOp::Ge,
            BinOp::Le => BinOp::Gt,
            BinOp::Gt => BinOp::Le,
            BinOp::Ge => BinOp::Lt,
            _ => return None,
        })
    }

    /// Truth of a relational operator given `sign(lhs - rhs)`.
    pub(crate) fn holds_for_sign(self, sign: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            BinOp::Eq => sign == Equal,
            BinOp::Ne => sign != Equal,
            BinOp::Lt => sign == Less,
            BinOp::Le => sign != Greater,
            BinOp::Gt => sign == Greater,
            BinOp::Ge => sign != Less,
            _ => false,
        }
    }
}

/// A parsed MiniJ unit under test.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub source_id: String,
    pub functions: Vec<FunctionDef>,
    pub(crate) line_count: u32,
    pub(crate) branch_count: u32,
    pub(crate) expr_count: u32,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.functions.iter().position(|f| f.name == name)
    }

    pub fn line_count(&self) -> usize {
        self.line_count as usize
    }

    pub fn branch_count(&self) -> usize {
        self.branch_count as usize
    }

    pub fn expr_count(&self) -> usize {
        self.expr_count as usize
    }

    pub fn lines(&self) -> impl Iterator<Item = LineId> {
        (0..self.line_count).map(LineId)
    }

    pub fn branches(&self) -> impl Iterator<Item = BranchId> {
        (0..self.branch_count).map(BranchId)
    }

    /// Pre-order walk over every statement, with the index of its function.
    pub fn walk_stmts<'a>(&'a self, f: &mut impl FnMut(usize, &'a Stmt)) {
        fn go<'a>(fi: usize, body: &'a [Stmt], f: &mut impl FnMut(usize, &'a Stmt)) {
            for stmt in body {
                f(fi, stmt);
                match &stmt.kind {
                    StmtKind::If {
                        then_body,
                        else_body,
                        ..
                    } => {
                        go(fi, then_body, f);
                        go(fi, else_body, f);
                    }
                    StmtKind::While { body, .. } => go(fi, body, f),
                    _ => {}
                }
            }
        }
        for (fi, func) in self.functions.iter().enumerate() {
            go(fi, &func.body, f);
        }
    }

    pub(crate) fn stmt_mut(&mut self, line: LineId) -> Option<&mut Stmt> {
        fn go(body: &mut [Stmt], line: LineId) -> Option<&mut Stmt> {
            for stmt in body {
                if stmt.line == line {
                    return Some(stmt);
                }
                let found = match &mut stmt.kind {
                    StmtKind::If {
                        then_body,
                        else_body,
                        ..
                    } => go(then_body, line).or_else(|| go(else_body, line)),
                    StmtKind::While { body, .. } => go(body, line),
                    _ => None,
                };
                if found.is_some() {
                    return found;
                }
            }
            None
        }
        self.functions
            .iter_mut()
            .find_map(|func| go(&mut func.body, line))
    }

    pub fn stmt(&self, line: LineId) -> Option<&Stmt> {
        let mut found = None;
        self.walk_stmts(&mut |_, s| {
            if s.line == line && found.is_none() {
                found = Some(s);
            }
        });
        found
    }

    /// Integer and string literals appearing in the source, in order of first
    /// appearance. Used to seed test input generation.
    pub fn constants(&self) -> (Vec<i64>, Vec<String>) {
        let mut ints = Vec::new();
        let mut strs = Vec::new();
        self.walk_stmts(&mut |_, stmt| {
            if let StmtKind::Throw(_) = stmt.kind {
                return;
            }
            if let Some(e) = stmt.kind.own_expr() {
                e.walk(&mut |node| match &node.kind {
                    ExprKind::Int(v) if !ints.contains(v) => ints.push(*v),
                    ExprKind::Unary {
                        op: UnaryOp::Neg,
                        operand,
                    } => {
                        if let ExprKind::Int(v) = operand.kind {
                            let neg = v.wrapping_neg();
                            if !ints.contains(&neg) {
                                ints.push(neg);
                            }
                        }
                    }
                    ExprKind::Str(s) if !strs.contains(s) => strs.push(s.clone()),
                    _ => {}
                });
            }
        });
        (ints, strs)
    }
}
