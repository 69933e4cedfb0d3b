//! Channel and variable names.
//!
//! A name is a base identifier plus an optional copy index. Indexed copies
//! arise from spawn reductions and bunch renamings; keeping the index apart
//! from the base lets error messages and traces show where a copy came from.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Name {
    pub base: String,
    pub index: Option<u32>,
}

impl Name {
    pub fn plain(base: impl Into<String>) -> Self {
        Name { base: base.into(), index: None }
    }

    pub fn indexed(base: impl Into<String>, index: u32) -> Self {
        Name { base: base.into(), index: Some(index) }
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            None => write!(f, "{}", self.base),
            Some(i) => write!(f, "{}#{}", self.base, i),
        }
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Monotone fresh-name supply. Operations that invent names thread one of
/// these explicitly so that traces are reproducible run to run.
#[derive(Debug, Clone, Default)]
pub struct FreshSupply {
    counter: u32,
}

impl FreshSupply {
    pub fn new() -> Self {
        FreshSupply { counter: 1 }
    }

    pub fn starting_at(counter: u32) -> Self {
        FreshSupply { counter }
    }

    /// Fresh name with the given base, avoiding everything in `avoid`.
    pub fn fresh(&mut self, base: &str, avoid: &BTreeSet<Name>) -> Name {
        loop {
            let candidate = Name::indexed(base, self.counter);
            self.counter += 1;
            if !avoid.contains(&candidate) {
                return candidate;
            }
        }
    }

    /// Copy of `name` indexed by `i` when that is free, otherwise the next
    /// free index from the counter. Used by indexed renamings, which prefer
    /// the displayed index.
    pub fn fresh_copy(&mut self, name: &Name, i: u32, avoid: &BTreeSet<Name>) -> Name {
        let candidate = Name::indexed(&name.base, i);
        if !avoid.contains(&candidate) {
            return candidate;
        }
        self.fresh(&name.base, avoid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structural_comparison() {
        assert_ne!(Name::plain("x1"), Name::indexed("x", 1));
        assert_eq!(Name::indexed("x", 1), Name::indexed("x", 1));
    }

    #[test]
    fn supply_skips_taken_names() {
        let mut supply = FreshSupply::new();
        let avoid: BTreeSet<Name> = [Name::indexed("z", 1)].into_iter().collect();
        let a = supply.fresh("z", &avoid);
        assert_eq!(a, Name::indexed("z", 2));
    }

    #[test]
    fn fresh_copy_prefers_requested_index() {
        let mut supply = FreshSupply::new();
        let avoid = BTreeSet::new();
        assert_eq!(supply.fresh_copy(&Name::plain("a"), 2, &avoid), Name::indexed("a", 2));
    }
}
