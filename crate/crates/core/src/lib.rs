//! Probabilistic PCF: syntax, tape-driven Krivine machines, power-series
//! semantics, distances and relational (intersection type) points.

pub mod ast;
pub mod machine;
pub mod metrics;
pub mod semantics;
pub mod rat;
pub mod relational;
pub mod transform;

pub use ast::{parse, typecheck, typecheck_closed, Label, Term, TermKind, Ty, TyCtx};
pub use rat::Rat;
