//! Session types: multiplicatives, additives, disjunction, and atoms.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Type {
    /// Multiplicative unit, closes a session over an empty multiplicative context.
    OneM,
    /// Additive unit.
    OneA,
    /// `A * B`: output a fresh channel of type A, continue as B.
    Sep(Box<Type>, Box<Type>),
    /// `A -* B`: input a channel of type A from a separated source, continue as B.
    Wand(Box<Type>, Box<Type>),
    /// `A /\ B`: additive counterpart of `*`.
    Conj(Box<Type>, Box<Type>),
    /// `A -> B`: additive counterpart of `-*`.
    Impl(Box<Type>, Box<Type>),
    /// `A \/ B`: selection (provider side) / branching (user side).
    Disj(Box<Type>, Box<Type>),
    /// Declared atomic type `@name`; only forwarders touch it.
    Atom(String),
    /// Inference placeholder for cut formulas; never appears in final derivations.
    MVar(u32),
}

impl Type {
    pub fn sep(a: Type, b: Type) -> Type {
        Type::Sep(Box::new(a), Box::new(b))
    }
    pub fn wand(a: Type, b: Type) -> Type {
        Type::Wand(Box::new(a), Box::new(b))
    }
    pub fn conj(a: Type, b: Type) -> Type {
        Type::Conj(Box::new(a), Box::new(b))
    }
    pub fn impl_(a: Type, b: Type) -> Type {
        Type::Impl(Box::new(a), Box::new(b))
    }
    pub fn disj(a: Type, b: Type) -> Type {
        Type::Disj(Box::new(a), Box::new(b))
    }
    pub fn atom(s: impl Into<String>) -> Type {
        Type::Atom(s.into())
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Type::OneM | Type::OneA | Type::Atom(_) => true,
            Type::MVar(_) => false,
            Type::Sep(a, b)
            | Type::Wand(a, b)
            | Type::Conj(a, b)
            | Type::Impl(a, b)
            | Type::Disj(a, b) => a.is_ground() && b.is_ground(),
        }
    }

    pub fn is_atom(&self) -> bool {
        matches!(self, Type::Atom(_))
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, Type::OneM | Type::OneA)
    }

    fn prec(&self) -> u8 {
        match self {
            Type::Wand(..) | Type::Impl(..) => 0,
            Type::Sep(..) | Type::Conj(..) | Type::Disj(..) => 1,
            _ => 2,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let p = self.prec();
        if p < min {
            write!(f, "(")?;
        }
        match self {
            Type::OneM => write!(f, "1m")?,
            Type::OneA => write!(f, "1a")?,
            Type::Atom(s) => write!(f, "@{s}")?,
            Type::MVar(k) => write!(f, "?{k}")?,
            // Right associative, lowest precedence.
            Type::Wand(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " -* ")?;
                b.fmt_prec(f, 0)?;
            }
            Type::Impl(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " -> ")?;
                b.fmt_prec(f, 0)?;
            }
            // Left associative.
            Type::Sep(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " * ")?;
                b.fmt_prec(f, 2)?;
            }
            Type::Conj(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " /\\ ")?;
                b.fmt_prec(f, 2)?;
            }
            Type::Disj(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " \\/ ")?;
                b.fmt_prec(f, 2)?;
            }
        }
        if p < min {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl fmt::Debug for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}
