//! A session calculus over bunched implications.
//!
//! The library provides the process calculus (syntax, bunched type checker,
//! reduction engine), a terminating normalization strategy with a measure
//! audit, observational tooling (barbs, readiness, bounded barbed
//! equivalence), a functional frontend with a typed translation, and a
//! finite tag-set denotational evaluator usable as an equivalence prover.

pub mod alphalambda;
pub mod bunch;
pub mod correspond;
pub mod denot;
pub mod names;
pub mod normalize;
pub mod observe;
pub mod parse;
pub mod reduction;
pub mod spawn;
pub mod syntax;
pub mod types;
pub mod typing;

pub use bunch::{bunch_equiv, Bunch, BunchedContext, Canon, JoinKind};
pub use names::{FreshSupply, Name};
pub use parse::{parse_bunch, parse_process, parse_term, parse_type, ParseError};
pub use spawn::{check_binding, BindingDerivation, SpawnBinding};
pub use syntax::{alpha_eq, indexed_renaming, rename_apart, substitute, Process};
pub use types::Type;
