//! Expression language for Lagrangians and fields, JSON system
//! descriptions, and second-order forward-mode differentiation.

mod expr;
mod jet;
mod parser;
mod spec;

pub use expr::{BinOp, Env, Expr, Func, Scalar, Var};
pub use jet::Jet;
pub use parser::{parse_expr, variable_name, Context, ParseError, ParseErrorKind, MAX_DEPTH};
pub use spec::{DomainAxis, NaturalForm, SystemSpec};
