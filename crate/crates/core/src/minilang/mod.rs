//! MiniJ: the bundled target language.
//!
//! ```text
//! program  := fn*
//! fn       := "fn" IDENT "(" [param ("," param)*] ")" block
//! param    := IDENT ":" ("int" | "bool" | "str")
//! block    := "{" stmt* "}"
//! stmt     := "let" IDENT "=" expr ";"
//!           | IDENT "=" expr ";"
//!           | "if" "(" expr ")" block ["else" (block | if-stmt)]
//!           | "while" "(" expr ")" block
//!           | "return" expr ";"
//!           | "throw" STRING ";"
//! expr     := or
//! or       := and ("||" and)*
//! and      := cmp ("&&" cmp)*
//! cmp      := add [("==" | "!=" | "<" | "<=" | ">" | ">=") add]
//! add      := mul (("+" | "-") mul)*
//! mul      := unary (("*" | "/" | "%") unary)*
//! unary    := ("-" | "!") unary | postfix
//! postfix  := primary ("[" expr "]")*
//! primary  := INT | STRING | "true" | "false" | "len" "(" expr ")"
//!           | IDENT "(" [expr ("," expr)*] ")" | IDENT | "(" expr ")"
//! ```
//!
//! `//` starts a line comment. Variables are function-scoped. Falling off the
//! end of a function returns `unit`.

mod ast;
pub mod infer;
mod interp;
mod parser;
mod printer;

pub use ast::*;
pub use interp::{
    branch_distance, execute, BranchEval, ExceptionKind, ExceptionRecord, ExecError,
    ExecutionResult, Executor, FunctionCall, Outcome, Snapshot, Value, DEFAULT_STEP_LIMIT, K,
    MAX_CALL_DEPTH,
};
pub(crate) use interp::Probe;
pub use parser::{parse, parse_named, ParseError};
pub use printer::expr_to_string;
