//! Text expressions for vector fields: parsing, evaluation, forward-mode
//! Jacobians and Lie brackets.

mod ast;
mod dual;
mod eval;
mod field;
mod parser;

pub use ast::{BinaryOp, Expr, UnaryOp};
pub use dual::Dual;
pub use eval::{eval, eval_dual, jacobian};
pub use field::{lie_bracket, LieTerm, VectorField, NESTED_BRACKET_STEP};
pub use parser::{parse_expr, SyntaxError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("domain error in `{op}` (argument {arg})")]
    Domain { op: &'static str, arg: f64 },
    #[error("non-finite value {value}")]
    NonFinite { value: f64 },
    #[error("variable `{var}` out of range (bound {bound})")]
    Index { var: String, bound: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("control variable in a frozen field: `{expr}`")]
    ControlInField { expr: String },
}
