//! Functional frontend: a lambda calculus with two function binders (one
//! multiplicative, one additive), two pair and unit flavors, sums, and a
//! bunched type system. Terms translate into processes by recursion on
//! their typing derivations.

use crate::bunch::{self, join, positions_with_names, replace_at, Canon, JoinKind, Pos};
use crate::names::{FreshSupply, Name};
use crate::spawn::SpawnBinding;
use crate::syntax::{self, Process};
use crate::types::Type;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(Name),
    /// `\x.M` introduces a multiplicative function.
    LamWand(Name, Box<Term>),
    /// `^x.M` introduces an additive function.
    LamImpl(Name, Box<Term>),
    /// `M N`.
    AppWand(Box<Term>, Box<Term>),
    /// `M @ N`.
    AppImpl(Box<Term>, Box<Term>),
    UnitM,
    UnitA,
    LetUnitM(Box<Term>, Box<Term>),
    LetUnitA(Box<Term>, Box<Term>),
    /// `<M,N>`.
    PairSep(Box<Term>, Box<Term>),
    /// `(M,N)`.
    PairConj(Box<Term>, Box<Term>),
    LetPairSep(Name, Name, Box<Term>, Box<Term>),
    /// `pi1 M` / `pi2 M`.
    Proj(u8, Box<Term>),
    /// `inj1 M` / `inj2 M`.
    Inj(u8, Box<Term>),
    Case(Box<Term>, Name, Box<Term>, Name, Box<Term>),
}

impl Term {
    pub fn free_vars(&self) -> BTreeSet<Name> {
        match self {
            Term::Var(x) => [x.clone()].into_iter().collect(),
            Term::LamWand(x, m) | Term::LamImpl(x, m) => {
                let mut out = m.free_vars();
                out.remove(x);
                out
            }
            Term::AppWand(m, n)
            | Term::AppImpl(m, n)
            | Term::LetUnitM(m, n)
            | Term::LetUnitA(m, n)
            | Term::PairSep(m, n)
            | Term::PairConj(m, n) => {
                let mut out = m.free_vars();
                out.extend(n.free_vars());
                out
            }
            Term::UnitM | Term::UnitA => BTreeSet::new(),
            Term::LetPairSep(x, y, m, n) => {
                let mut body = n.free_vars();
                body.remove(x);
                body.remove(y);
                let mut out = m.free_vars();
                out.extend(body);
                out
            }
            Term::Proj(_, m) | Term::Inj(_, m) => m.free_vars(),
            Term::Case(m, x1, n1, x2, n2) => {
                let mut out = m.free_vars();
                let mut b1 = n1.free_vars();
                b1.remove(x1);
                let mut b2 = n2.free_vars();
                b2.remove(x2);
                out.extend(b1);
                out.extend(b2);
                out
            }
        }
    }

    pub fn all_vars(&self) -> BTreeSet<Name> {
        let mut out = self.free_vars();
        fn binders(t: &Term, out: &mut BTreeSet<Name>) {
            match t {
                Term::LamWand(x, m) | Term::LamImpl(x, m) => {
                    out.insert(x.clone());
                    binders(m, out);
                }
                Term::AppWand(m, n)
                | Term::AppImpl(m, n)
                | Term::LetUnitM(m, n)
                | Term::LetUnitA(m, n)
                | Term::PairSep(m, n)
                | Term::PairConj(m, n) => {
                    binders(m, out);
                    binders(n, out);
                }
                Term::LetPairSep(x, y, m, n) => {
                    out.insert(x.clone());
                    out.insert(y.clone());
                    binders(m, out);
                    binders(n, out);
                }
                Term::Proj(_, m) | Term::Inj(_, m) => binders(m, out),
                Term::Case(m, x1, n1, x2, n2) => {
                    out.insert(x1.clone());
                    out.insert(x2.clone());
                    binders(m, out);
                    binders(n1, out);
                    binders(n2, out);
                }
                _ => {}
            }
        }
        binders(self, &mut out);
        out
    }

    pub fn size(&self) -> usize {
        match self {
            Term::Var(_) | Term::UnitM | Term::UnitA => 1,
            Term::LamWand(_, m) | Term::LamImpl(_, m) | Term::Proj(_, m) | Term::Inj(_, m) => {
                1 + m.size()
            }
            Term::AppWand(m, n)
            | Term::AppImpl(m, n)
            | Term::LetUnitM(m, n)
            | Term::LetUnitA(m, n)
            | Term::PairSep(m, n)
            | Term::PairConj(m, n)
            | Term::LetPairSep(_, _, m, n) => 1 + m.size() + n.size(),
            Term::Case(m, _, n1, _, n2) => 1 + m.size() + n1.size() + n2.size(),
        }
    }
}

/// Rename a free variable (terms, not substitution of terms).
pub fn rename_var(t: &Term, from: &Name, to: &Name) -> Term {
    let map: BTreeMap<Name, Term> = [(from.clone(), Term::Var(to.clone()))].into_iter().collect();
    subst_terms(t, &map)
}

/// Capture-avoiding simultaneous substitution of terms for variables.
pub fn subst_terms(t: &Term, map: &BTreeMap<Name, Term>) -> Term {
    if map.is_empty() {
        return t.clone();
    }
    let incoming: BTreeSet<Name> = map.values().flat_map(|n| n.free_vars()).collect();
    fn freshen(x: &Name, avoid: &BTreeSet<Name>) -> Name {
        let mut k = 1;
        loop {
            let cand = Name::indexed(&x.base, k);
            if !avoid.contains(&cand) {
                return cand;
            }
            k += 1;
        }
    }
    fn go(t: &Term, map: &BTreeMap<Name, Term>, incoming: &BTreeSet<Name>) -> Term {
        let rebind = |x: &Name, body: &Term, map: &BTreeMap<Name, Term>| -> (Name, Term) {
            let mut inner: BTreeMap<Name, Term> = map.clone();
            inner.remove(x);
            if incoming.contains(x) {
                let mut avoid = incoming.clone();
                avoid.extend(body.all_vars());
                let fresh = freshen(x, &avoid);
                let renamed = rename_var(body, x, &fresh);
                (fresh, go(&renamed, &inner, incoming))
            } else {
                (x.clone(), go(body, &inner, incoming))
            }
        };
        match t {
            Term::Var(x) => map.get(x).cloned().unwrap_or_else(|| t.clone()),
            Term::LamWand(x, m) => {
                let (x, m) = rebind(x, m, map);
                Term::LamWand(x, Box::new(m))
            }
            Term::LamImpl(x, m) => {
                let (x, m) = rebind(x, m, map);
                Term::LamImpl(x, Box::new(m))
            }
            Term::AppWand(m, n) => Term::AppWand(
                Box::new(go(m, map, incoming)),
                Box::new(go(n, map, incoming)),
            ),
            Term::AppImpl(m, n) => Term::AppImpl(
                Box::new(go(m, map, incoming)),
                Box::new(go(n, map, incoming)),
            ),
            Term::UnitM => Term::UnitM,
            Term::UnitA => Term::UnitA,
            Term::LetUnitM(m, n) => Term::LetUnitM(
                Box::new(go(m, map, incoming)),
                Box::new(go(n, map, incoming)),
            ),
            Term::LetUnitA(m, n) => Term::LetUnitA(
                Box::new(go(m, map, incoming)),
                Box::new(go(n, map, incoming)),
            ),
            Term::PairSep(m, n) => Term::PairSep(
                Box::new(go(m, map, incoming)),
                Box::new(go(n, map, incoming)),
            ),
            Term::PairConj(m, n) => Term::PairConj(
                Box::new(go(m, map, incoming)),
                Box::new(go(n, map, incoming)),
            ),
            Term::LetPairSep(x, y, m, n) => {
                let m2 = go(m, map, incoming);
                // bind x then y in n
                let mut inner = map.clone();
                inner.remove(x);
                inner.remove(y);
                let mut avoid = incoming.clone();
                avoid.extend(n.all_vars());
                let (x2, n1) = if incoming.contains(x) {
                    let fx = freshen(x, &avoid);
                    avoid.insert(fx.clone());
                    (fx.clone(), rename_var(n, x, &fx))
                } else {
                    (x.clone(), (**n).clone())
                };
                let (y2, n2) = if incoming.contains(y) {
                    let fy = freshen(y, &avoid);
                    (fy.clone(), rename_var(&n1, y, &fy))
                } else {
                    (y.clone(), n1)
                };
                Term::LetPairSep(x2, y2, Box::new(m2), Box::new(go(&n2, &inner, incoming)))
            }
            Term::Proj(i, m) => Term::Proj(*i, Box::new(go(m, map, incoming))),
            Term::Inj(i, m) => Term::Inj(*i, Box::new(go(m, map, incoming))),
            Term::Case(m, x1, n1, x2, n2) => {
                let m2 = go(m, map, incoming);
                let mut i1 = map.clone();
                i1.remove(x1);
                let mut i2 = map.clone();
                i2.remove(x2);
                let mut avoid = incoming.clone();
                avoid.extend(n1.all_vars());
                avoid.extend(n2.all_vars());
                let (x1b, n1b) = if incoming.contains(x1) {
                    let fx = freshen(x1, &avoid);
                    avoid.insert(fx.clone());
                    (fx.clone(), rename_var(n1, x1, &fx))
                } else {
                    (x1.clone(), (**n1).clone())
                };
                let (x2b, n2b) = if incoming.contains(x2) {
                    let fx = freshen(x2, &avoid);
                    (fx.clone(), rename_var(n2, x2, &fx))
                } else {
                    (x2.clone(), (**n2).clone())
                };
                Term::Case(
                    Box::new(m2),
                    x1b,
                    Box::new(go(&n1b, &i1, incoming)),
                    x2b,
                    Box::new(go(&n2b, &i2, incoming)),
                )
            }
        }
    }
    go(t, map, &incoming)
}

pub fn subst_term(t: &Term, x: &Name, n: &Term) -> Term {
    subst_terms(t, &[(x.clone(), n.clone())].into_iter().collect())
}

/// Canonical bound-variable renaming; terms compare up to it.
pub fn term_alpha_canon(t: &Term) -> Term {
    fn canon_name(k: u32) -> Name {
        Name { base: "\u{0}".to_string(), index: Some(k) }
    }
    fn go(t: &Term, env: &BTreeMap<Name, Name>, k: &mut u32) -> Term {
        let res = |x: &Name, env: &BTreeMap<Name, Name>| {
            env.get(x).cloned().unwrap_or_else(|| x.clone())
        };
        let bind = |x: &Name, env: &BTreeMap<Name, Name>, k: &mut u32| {
            let c = canon_name(*k);
            *k += 1;
            let mut env2 = env.clone();
            env2.insert(x.clone(), c.clone());
            (c, env2)
        };
        match t {
            Term::Var(x) => Term::Var(res(x, env)),
            Term::LamWand(x, m) => {
                let (c, env2) = bind(x, env, k);
                Term::LamWand(c, Box::new(go(m, &env2, k)))
            }
            Term::LamImpl(x, m) => {
                let (c, env2) = bind(x, env, k);
                Term::LamImpl(c, Box::new(go(m, &env2, k)))
            }
            Term::AppWand(m, n) => {
                Term::AppWand(Box::new(go(m, env, k)), Box::new(go(n, env, k)))
            }
            Term::AppImpl(m, n) => {
                Term::AppImpl(Box::new(go(m, env, k)), Box::new(go(n, env, k)))
            }
            Term::UnitM => Term::UnitM,
            Term::UnitA => Term::UnitA,
            Term::LetUnitM(m, n) => {
                Term::LetUnitM(Box::new(go(m, env, k)), Box::new(go(n, env, k)))
            }
            Term::LetUnitA(m, n) => {
                Term::LetUnitA(Box::new(go(m, env, k)), Box::new(go(n, env, k)))
            }
            Term::PairSep(m, n) => {
                Term::PairSep(Box::new(go(m, env, k)), Box::new(go(n, env, k)))
            }
            Term::PairConj(m, n) => {
                Term::PairConj(Box::new(go(m, env, k)), Box::new(go(n, env, k)))
            }
            Term::LetPairSep(x, y, m, n) => {
                let m2 = go(m, env, k);
                let (cx, env2) = bind(x, env, k);
                let (cy, env3) = bind(y, &env2, k);
                Term::LetPairSep(cx, cy, Box::new(m2), Box::new(go(n, &env3, k)))
            }
            Term::Proj(i, m) => Term::Proj(*i, Box::new(go(m, env, k))),
            Term::Inj(i, m) => Term::Inj(*i, Box::new(go(m, env, k))),
            Term::Case(m, x1, n1, x2, n2) => {
                let m2 = go(m, env, k);
                let (c1, env1) = bind(x1, env, k);
                let b1 = go(n1, &env1, k);
                let (c2, env2) = bind(x2, env, k);
                let b2 = go(n2, &env2, k);
                Term::Case(Box::new(m2), c1, Box::new(b1), c2, Box::new(b2))
            }
        }
    }
    go(t, &BTreeMap::new(), &mut 0)
}

pub fn term_alpha_eq(a: &Term, b: &Term) -> bool {
    term_alpha_canon(a) == term_alpha_canon(b)
}

/// Make bound variables distinct from each other and from free variables.
pub fn rename_term_apart(t: &Term, supply: &mut FreshSupply) -> Term {
    fn go(
        t: &Term,
        env: &BTreeMap<Name, Name>,
        taken: &mut BTreeSet<Name>,
        supply: &mut FreshSupply,
    ) -> Term {
        let res = |x: &Name, env: &BTreeMap<Name, Name>| {
            env.get(x).cloned().unwrap_or_else(|| x.clone())
        };
        let bind = |x: &Name,
                        env: &BTreeMap<Name, Name>,
                        taken: &mut BTreeSet<Name>,
                        supply: &mut FreshSupply| {
            let nx = if taken.contains(x) {
                supply.fresh(&x.base, taken)
            } else {
                x.clone()
            };
            taken.insert(nx.clone());
            let mut env2 = env.clone();
            env2.insert(x.clone(), nx.clone());
            (nx, env2)
        };
        match t {
            Term::Var(x) => Term::Var(res(x, env)),
            Term::LamWand(x, m) => {
                let (nx, env2) = bind(x, env, taken, supply);
                Term::LamWand(nx, Box::new(go(m, &env2, taken, supply)))
            }
            Term::LamImpl(x, m) => {
                let (nx, env2) = bind(x, env, taken, supply);
                Term::LamImpl(nx, Box::new(go(m, &env2, taken, supply)))
            }
            Term::AppWand(m, n) => Term::AppWand(
                Box::new(go(m, env, taken, supply)),
                Box::new(go(n, env, taken, supply)),
            ),
            Term::AppImpl(m, n) => Term::AppImpl(
                Box::new(go(m, env, taken, supply)),
                Box::new(go(n, env, taken, supply)),
            ),
            Term::UnitM => Term::UnitM,
            Term::UnitA => Term::UnitA,
            Term::LetUnitM(m, n) => Term::LetUnitM(
                Box::new(go(m, env, taken, supply)),
                Box::new(go(n, env, taken, supply)),
            ),
            Term::LetUnitA(m, n) => Term::LetUnitA(
                Box::new(go(m, env, taken, supply)),
                Box::new(go(n, env, taken, supply)),
            ),
            Term::PairSep(m, n) => Term::PairSep(
                Box::new(go(m, env, taken, supply)),
                Box::new(go(n, env, taken, supply)),
            ),
            Term::PairConj(m, n) => Term::PairConj(
                Box::new(go(m, env, taken, supply)),
                Box::new(go(n, env, taken, supply)),
            ),
            Term::LetPairSep(x, y, m, n) => {
                let m2 = go(m, env, taken, supply);
                let (nx, env2) = bind(x, env, taken, supply);
                let (ny, env3) = bind(y, &env2, taken, supply);
                Term::LetPairSep(nx, ny, Box::new(m2), Box::new(go(n, &env3, taken, supply)))
            }
            Term::Proj(i, m) => Term::Proj(*i, Box::new(go(m, env, taken, supply))),
            Term::Inj(i, m) => Term::Inj(*i, Box::new(go(m, env, taken, supply))),
            Term::Case(m, x1, n1, x2, n2) => {
                let m2 = go(m, env, taken, supply);
                let (nx1, env1) = bind(x1, env, taken, supply);
                let b1 = go(n1, &env1, taken, supply);
                let (nx2, env2) = bind(x2, env, taken, supply);
                let b2 = go(n2, &env2, taken, supply);
                Term::Case(Box::new(m2), nx1, Box::new(b1), nx2, Box::new(b2))
            }
        }
    }
    let mut taken = t.free_vars();
    go(t, &BTreeMap::new(), &mut taken, supply)
}

// ---------------------------------------------------------------------------
// Reduction. Call by name: the head redex fires, and elimination forms
// reduce their scrutinee.

/// One call-by-name step (head position only).
pub fn cbn_step(t: &Term) -> Vec<Term> {
    if let Some(r) = primitive_step(t) {
        return vec![r];
    }
    let lifted = |m: &Term| cbn_step(m).into_iter().next();
    let out = match t {
        Term::AppWand(m, n) => {
            lifted(m).map(|m2| Term::AppWand(Box::new(m2), n.clone()))
        }
        Term::AppImpl(m, n) => {
            lifted(m).map(|m2| Term::AppImpl(Box::new(m2), n.clone()))
        }
        Term::LetUnitM(m, n) => {
            lifted(m).map(|m2| Term::LetUnitM(Box::new(m2), n.clone()))
        }
        Term::LetUnitA(m, n) => {
            lifted(m).map(|m2| Term::LetUnitA(Box::new(m2), n.clone()))
        }
        Term::LetPairSep(x, y, m, n) => {
            lifted(m).map(|m2| Term::LetPairSep(x.clone(), y.clone(), Box::new(m2), n.clone()))
        }
        Term::Proj(i, m) => lifted(m).map(|m2| Term::Proj(*i, Box::new(m2))),
        Term::Case(m, x1, n1, x2, n2) => lifted(m).map(|m2| {
            Term::Case(Box::new(m2), x1.clone(), n1.clone(), x2.clone(), n2.clone())
        }),
        _ => None,
    };
    out.into_iter().collect()
}

fn primitive_step(t: &Term) -> Option<Term> {
    match t {
        Term::AppWand(m, n) => match &**m {
            Term::LamWand(x, body) => Some(subst_term(body, x, n)),
            _ => None,
        },
        Term::AppImpl(m, n) => match &**m {
            Term::LamImpl(x, body) => Some(subst_term(body, x, n)),
            _ => None,
        },
        Term::Proj(i, m) => match &**m {
            Term::PairConj(m1, m2) => Some(if *i == 1 { (**m1).clone() } else { (**m2).clone() }),
            _ => None,
        },
        Term::LetUnitM(m, n) => match &**m {
            Term::UnitM => Some((**n).clone()),
            _ => None,
        },
        Term::LetUnitA(m, n) => match &**m {
            Term::UnitA => Some((**n).clone()),
            _ => None,
        },
        Term::LetPairSep(x, y, m, n) => match &**m {
            Term::PairSep(m1, m2) => Some(subst_term(&subst_term(n, x, m1), y, m2)),
            _ => None,
        },
        Term::Case(m, x1, n1, x2, n2) => match &**m {
            Term::Inj(1, inner) => Some(subst_term(n1, x1, inner)),
            Term::Inj(2, inner) => Some(subst_term(n2, x2, inner)),
            _ => None,
        },
        _ => None,
    }
}

/// One-step reducts under arbitrary contexts (the extended relation used to
/// reflect process reductions back into terms).
pub fn ext_steps(t: &Term) -> Vec<Term> {
    let mut out = Vec::new();
    if let Some(r) = primitive_step(t) {
        out.push(r);
    }
    let mut push_sub = |rebuild: &dyn Fn(Term) -> Term, sub: &Term| {
        for r in ext_steps(sub) {
            out.push(rebuild(r));
        }
    };
    match t {
        Term::LamWand(x, m) => push_sub(&|m2| Term::LamWand(x.clone(), Box::new(m2)), m),
        Term::LamImpl(x, m) => push_sub(&|m2| Term::LamImpl(x.clone(), Box::new(m2)), m),
        Term::AppWand(m, n) => {
            push_sub(&|m2| Term::AppWand(Box::new(m2), n.clone()), m);
            push_sub(&|n2| Term::AppWand(m.clone(), Box::new(n2)), n);
        }
        Term::AppImpl(m, n) => {
            push_sub(&|m2| Term::AppImpl(Box::new(m2), n.clone()), m);
            push_sub(&|n2| Term::AppImpl(m.clone(), Box::new(n2)), n);
        }
        Term::LetUnitM(m, n) => {
            push_sub(&|m2| Term::LetUnitM(Box::new(m2), n.clone()), m);
            push_sub(&|n2| Term::LetUnitM(m.clone(), Box::new(n2)), n);
        }
        Term::LetUnitA(m, n) => {
            push_sub(&|m2| Term::LetUnitA(Box::new(m2), n.clone()), m);
            push_sub(&|n2| Term::LetUnitA(m.clone(), Box::new(n2)), n);
        }
        Term::PairSep(m, n) => {
            push_sub(&|m2| Term::PairSep(Box::new(m2), n.clone()), m);
            push_sub(&|n2| Term::PairSep(m.clone(), Box::new(n2)), n);
        }
        Term::PairConj(m, n) => {
            push_sub(&|m2| Term::PairConj(Box::new(m2), n.clone()), m);
            push_sub(&|n2| Term::PairConj(m.clone(), Box::new(n2)), n);
        }
        Term::LetPairSep(x, y, m, n) => {
            push_sub(&|m2| Term::LetPairSep(x.clone(), y.clone(), Box::new(m2), n.clone()), m);
            push_sub(&|n2| Term::LetPairSep(x.clone(), y.clone(), m.clone(), Box::new(n2)), n);
        }
        Term::Proj(i, m) => push_sub(&|m2| Term::Proj(*i, Box::new(m2)), m),
        Term::Inj(i, m) => push_sub(&|m2| Term::Inj(*i, Box::new(m2)), m),
        Term::Case(m, x1, n1, x2, n2) => {
            push_sub(
                &|m2| Term::Case(Box::new(m2), x1.clone(), n1.clone(), x2.clone(), n2.clone()),
                m,
            );
            push_sub(
                &|b| Term::Case(m.clone(), x1.clone(), Box::new(b), x2.clone(), n2.clone()),
                n1,
            );
            push_sub(
                &|b| Term::Case(m.clone(), x1.clone(), n1.clone(), x2.clone(), Box::new(b)),
                n2,
            );
        }
        _ => {}
    }
    out
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn atom(t: &Term) -> bool {
            matches!(
                t,
                Term::Var(_) | Term::UnitM | Term::UnitA | Term::PairSep(..) | Term::PairConj(..)
            )
        }
        fn show(t: &Term, f: &mut fmt::Formatter<'_>, arg_pos: bool) -> fmt::Result {
            let parens = arg_pos && !atom(t);
            if parens {
                write!(f, "(")?;
            }
            match t {
                Term::Var(x) => write!(f, "{x}")?,
                Term::LamWand(x, m) => {
                    write!(f, "\\{x}.")?;
                    show(m, f, false)?;
                }
                Term::LamImpl(x, m) => {
                    write!(f, "^{x}.")?;
                    show(m, f, false)?;
                }
                Term::AppWand(m, n) => {
                    show(m, f, true)?;
                    write!(f, " ")?;
                    show(n, f, true)?;
                }
                Term::AppImpl(m, n) => {
                    show(m, f, true)?;
                    write!(f, " @ ")?;
                    show(n, f, true)?;
                }
                Term::UnitM => write!(f, "*m")?,
                Term::UnitA => write!(f, "*a")?,
                Term::LetUnitM(m, n) => {
                    write!(f, "let *m = ")?;
                    show(m, f, false)?;
                    write!(f, " in ")?;
                    show(n, f, false)?;
                }
                Term::LetUnitA(m, n) => {
                    write!(f, "let *a = ")?;
                    show(m, f, false)?;
                    write!(f, " in ")?;
                    show(n, f, false)?;
                }
                Term::PairSep(m, n) => {
                    write!(f, "<")?;
                    show(m, f, false)?;
                    write!(f, ", ")?;
                    show(n, f, false)?;
                    write!(f, ">")?;
                }
                Term::PairConj(m, n) => {
                    write!(f, "(")?;
                    show(m, f, false)?;
                    write!(f, ", ")?;
                    show(n, f, false)?;
                    write!(f, ")")?;
                }
                Term::LetPairSep(x, y, m, n) => {
                    write!(f, "let <{x},{y}> = ")?;
                    show(m, f, false)?;
                    write!(f, " in ")?;
                    show(n, f, false)?;
                }
                Term::Proj(i, m) => {
                    write!(f, "pi{i} ")?;
                    show(m, f, true)?;
                }
                Term::Inj(i, m) => {
                    write!(f, "inj{i} ")?;
                    show(m, f, true)?;
                }
                Term::Case(m, x1, n1, x2, n2) => {
                    write!(f, "case ")?;
                    show(m, f, true)?;
                    write!(f, " {{ {x1} -> ")?;
                    show(n1, f, false)?;
                    write!(f, " ; {x2} -> ")?;
                    show(n2, f, false)?;
                    write!(f, " }}")?;
                }
            }
            if parens {
                write!(f, ")")?;
            }
            Ok(())
        }
        show(self, f, false)
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

// ---------------------------------------------------------------------------
// Typing.

#[derive(Clone, Debug)]
pub struct TermDerivation {
    pub rule: TermRule,
    pub bunch: Canon,
    pub term: Term,
    pub ty: Type,
    pub premises: Vec<TermDerivation>,
}

#[derive(Clone, Debug)]
pub enum TermRule {
    NId,
    /// Drop a comma-attached sub-bunch.
    NW { dropped: Canon },
    /// Duplicate a leaf into two fresh copies.
    NC { name: Name, copy1: Name, copy2: Name },
    WandI,
    ImplI,
    WandE { arg_ty: Type },
    ImplE { arg_ty: Type },
    OneMI,
    OneAI,
    OneMElim,
    OneAElim,
    SepI,
    ConjI,
    SepE { comp_tys: (Type, Type) },
    ConjE { keep: u8, other_ty: Type },
    DisjI { side: u8, other_ty: Type },
    DisjE { scrut_ty: Type },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermTypeError {
    pub msg: String,
}

impl fmt::Display for TermTypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.msg)
    }
}

/// Check `bunch |- term : ty`, producing a derivation. Weakening is applied
/// lazily at leaves and contraction on demand at additive splits, so the
/// search stays syntax directed.
pub fn typecheck_term(
    bunch: &Canon,
    term: &Term,
    ty: &Type,
) -> Result<TermDerivation, TermTypeError> {
    let mut ctx = TermCheck { pool: candidate_pool(bunch, ty) };
    ctx.check(bunch, term, ty).ok_or_else(|| TermTypeError {
        msg: format!("term {term} does not check against {bunch} |- _ : {ty}"),
    })
}

fn subformulas(t: &Type, out: &mut BTreeSet<Type>) {
    out.insert(t.clone());
    match t {
        Type::Sep(a, b)
        | Type::Wand(a, b)
        | Type::Conj(a, b)
        | Type::Impl(a, b)
        | Type::Disj(a, b) => {
            subformulas(a, out);
            subformulas(b, out);
        }
        _ => {}
    }
}

/// Candidate types for elimination positions the syntax does not determine:
/// subformulas of the judgment plus units and one connective layer on top.
fn candidate_pool(bunch: &Canon, goal: &Type) -> Vec<Type> {
    let mut base = BTreeSet::new();
    subformulas(goal, &mut base);
    fn walk(c: &Canon, out: &mut BTreeSet<Type>) {
        match c {
            Canon::Leaf(_, t) => subformulas(t, out),
            Canon::Semi(cs) | Canon::Comma(cs) => {
                for ch in cs {
                    walk(ch, out);
                }
            }
            _ => {}
        }
    }
    walk(bunch, &mut base);
    base.insert(Type::OneM);
    base.insert(Type::OneA);
    let snapshot: Vec<Type> = base.iter().cloned().collect();
    let mut out: BTreeSet<Type> = base;
    for a in &snapshot {
        for b in &snapshot {
            out.insert(Type::wand(a.clone(), b.clone()));
            out.insert(Type::impl_(a.clone(), b.clone()));
            out.insert(Type::sep(a.clone(), b.clone()));
            out.insert(Type::conj(a.clone(), b.clone()));
            out.insert(Type::disj(a.clone(), b.clone()));
        }
    }
    out.into_iter().collect()
}

struct TermCheck {
    pool: Vec<Type>,
}

impl TermCheck {
    fn check(&mut self, bunch: &Canon, term: &Term, ty: &Type) -> Option<TermDerivation> {
        let fv = term.free_vars();
        if !bunch.idents().is_superset(&fv) {
            return None;
        }
        match term {
            Term::Var(x) => {
                let leaf_ty = bunch.leaf_type(x)?.clone();
                if &leaf_ty != ty {
                    return None;
                }
                let target = Canon::leaf(x.clone(), leaf_ty);
                self.weaken_to(bunch, &target, term, ty, |_| TermDerivation {
                    rule: TermRule::NId,
                    bunch: target.clone(),
                    term: term.clone(),
                    ty: ty.clone(),
                    premises: vec![],
                })
            }
            Term::UnitM => {
                if ty != &Type::OneM {
                    return None;
                }
                self.weaken_to(bunch, &Canon::UnitM, term, ty, |_| TermDerivation {
                    rule: TermRule::OneMI,
                    bunch: Canon::UnitM,
                    term: term.clone(),
                    ty: ty.clone(),
                    premises: vec![],
                })
            }
            Term::UnitA => {
                if ty != &Type::OneA {
                    return None;
                }
                self.weaken_to(bunch, &Canon::UnitA, term, ty, |_| TermDerivation {
                    rule: TermRule::OneAI,
                    bunch: Canon::UnitA,
                    term: term.clone(),
                    ty: ty.clone(),
                    premises: vec![],
                })
            }
            Term::LamWand(x, body) => {
                let (a, b) = match ty {
                    Type::Wand(a, b) => (a, b),
                    _ => return None,
                };
                let inner =
                    join(JoinKind::Semi, vec![bunch.clone(), Canon::leaf(x.clone(), (**a).clone())]);
                let premise = self.check(&inner, body, b)?;
                Some(TermDerivation {
                    rule: TermRule::WandI,
                    bunch: bunch.clone(),
                    term: term.clone(),
                    ty: ty.clone(),
                    premises: vec![premise],
                })
            }
            Term::LamImpl(x, body) => {
                let (a, b) = match ty {
                    Type::Impl(a, b) => (a, b),
                    _ => return None,
                };
                let inner = join(
                    JoinKind::Comma,
                    vec![bunch.clone(), Canon::leaf(x.clone(), (**a).clone())],
                );
                let premise = self.check(&inner, body, b)?;
                Some(TermDerivation {
                    rule: TermRule::ImplI,
                    bunch: bunch.clone(),
                    term: term.clone(),
                    ty: ty.clone(),
                    premises: vec![premise],
                })
            }
            Term::AppWand(m, n) => {
                self.check_app(bunch, term, ty, m, n, JoinKind::Semi)
            }
            Term::AppImpl(m, n) => {
                self.check_app(bunch, term, ty, m, n, JoinKind::Comma)
            }
            Term::PairSep(m, n) => {
                let (a, b) = match ty {
                    Type::Sep(a, b) => (a.clone(), b.clone()),
                    _ => return None,
                };
                self.check_pair(bunch, term, ty, m, n, &a, &b, JoinKind::Semi)
            }
            Term::PairConj(m, n) => {
                let (a, b) = match ty {
                    Type::Conj(a, b) => (a.clone(), b.clone()),
                    _ => return None,
                };
                self.check_pair(bunch, term, ty, m, n, &a, &b, JoinKind::Comma)
            }
            Term::Inj(i, m) => {
                let (a, b) = match ty {
                    Type::Disj(a, b) => (a.clone(), b.clone()),
                    _ => return None,
                };
                let (mine, other) = if *i == 1 { (a, b) } else { (b, a) };
                let premise = self.check(bunch, m, &mine)?;
                Some(TermDerivation {
                    rule: TermRule::DisjI { side: *i, other_ty: (*other).clone() },
                    bunch: bunch.clone(),
                    term: term.clone(),
                    ty: ty.clone(),
                    premises: vec![premise],
                })
            }
            Term::LetUnitM(m, n) => self.check_unit_elim(bunch, term, ty, m, n, true),
            Term::LetUnitA(m, n) => self.check_unit_elim(bunch, term, ty, m, n, false),
            Term::LetPairSep(x, y, m, n) => {
                let shared: Vec<Name> =
                    m.free_vars().intersection(&n.free_vars()).cloned().collect();
                if !shared.is_empty() {
                    return self.contract_shared(bunch, term, ty, &shared);
                }
                let scrut_cands = self.scrutinee_candidates(bunch, m, |t| {
                    matches!(t, Type::Sep(..))
                });
                for scrut_ty in scrut_cands {
                    let (a, b) = match &scrut_ty {
                        Type::Sep(a, b) => ((**a).clone(), (**b).clone()),
                        _ => continue,
                    };
                    for (pos, content) in positions_with_names(bunch, &m.free_vars()) {
                        let Some(md) = self.check(&content, m, &scrut_ty) else {
                            continue;
                        };
                        let repl = join(
                            JoinKind::Semi,
                            vec![
                                Canon::leaf(x.clone(), a.clone()),
                                Canon::leaf(y.clone(), b.clone()),
                            ],
                        );
                        let inner = replace_at(bunch, &pos, repl);
                        if let Some(nd) = self.check(&inner, n, ty) {
                            return Some(TermDerivation {
                                rule: TermRule::SepE { comp_tys: (a, b) },
                                bunch: bunch.clone(),
                                term: term.clone(),
                                ty: ty.clone(),
                                premises: vec![md, nd],
                            });
                        }
                    }
                }
                None
            }
            Term::Proj(i, m) => {
                let cands = self.scrutinee_candidates(bunch, m, |t| matches!(t, Type::Conj(..)));
                for scrut_ty in cands {
                    let (a, b) = match &scrut_ty {
                        Type::Conj(a, b) => ((**a).clone(), (**b).clone()),
                        _ => continue,
                    };
                    let (mine, other) = if *i == 1 { (a, b) } else { (b, a) };
                    if &mine != ty {
                        continue;
                    }
                    if let Some(md) = self.check(bunch, m, &scrut_ty) {
                        return Some(TermDerivation {
                            rule: TermRule::ConjE { keep: *i, other_ty: other },
                            bunch: bunch.clone(),
                            term: term.clone(),
                            ty: ty.clone(),
                            premises: vec![md],
                        });
                    }
                }
                None
            }
            Term::Case(m, x1, n1, x2, n2) => {
                let branches_fv: BTreeSet<Name> = {
                    let mut b1 = n1.free_vars();
                    b1.remove(x1);
                    let mut b2 = n2.free_vars();
                    b2.remove(x2);
                    b1.extend(b2);
                    b1
                };
                let shared: Vec<Name> =
                    m.free_vars().intersection(&branches_fv).cloned().collect();
                if !shared.is_empty() {
                    return self.contract_shared(bunch, term, ty, &shared);
                }
                let cands = self.scrutinee_candidates(bunch, m, |t| matches!(t, Type::Disj(..)));
                for scrut_ty in cands {
                    let (a, b) = match &scrut_ty {
                        Type::Disj(a, b) => ((**a).clone(), (**b).clone()),
                        _ => continue,
                    };
                    for (pos, content) in positions_with_names(bunch, &m.free_vars()) {
                        let Some(md) = self.check(&content, m, &scrut_ty) else {
                            continue;
                        };
                        let inner1 =
                            replace_at(bunch, &pos, Canon::leaf(x1.clone(), a.clone()));
                        let inner2 =
                            replace_at(bunch, &pos, Canon::leaf(x2.clone(), b.clone()));
                        if let (Some(d1), Some(d2)) =
                            (self.check(&inner1, n1, ty), self.check(&inner2, n2, ty))
                        {
                            return Some(TermDerivation {
                                rule: TermRule::DisjE { scrut_ty: scrut_ty.clone() },
                                bunch: bunch.clone(),
                                term: term.clone(),
                                ty: ty.clone(),
                                premises: vec![md, d1, d2],
                            });
                        }
                    }
                }
                None
            }
        }
    }

    fn check_app(
        &mut self,
        bunch: &Canon,
        term: &Term,
        ty: &Type,
        m: &Term,
        n: &Term,
        kind: JoinKind,
    ) -> Option<TermDerivation> {
        let shared: Vec<Name> = m.free_vars().intersection(&n.free_vars()).cloned().collect();
        if !shared.is_empty() {
            if kind == JoinKind::Semi {
                return None; // separated parts can never share a source
            }
            return self.contract_shared(bunch, term, ty, &shared);
        }
        let arg_cands = self.arg_candidates(bunch, n);
        for (d1, d2) in self.fv_splits(bunch, kind, &m.free_vars()) {
            for arg_ty in &arg_cands {
                let fun_ty = match kind {
                    JoinKind::Semi => Type::wand(arg_ty.clone(), ty.clone()),
                    JoinKind::Comma => Type::impl_(arg_ty.clone(), ty.clone()),
                };
                let Some(md) = self.check(&d1, m, &fun_ty) else {
                    continue;
                };
                if let Some(nd) = self.check(&d2, n, arg_ty) {
                    let rule = match kind {
                        JoinKind::Semi => TermRule::WandE { arg_ty: arg_ty.clone() },
                        JoinKind::Comma => TermRule::ImplE { arg_ty: arg_ty.clone() },
                    };
                    return Some(TermDerivation {
                        rule,
                        bunch: bunch.clone(),
                        term: term.clone(),
                        ty: ty.clone(),
                        premises: vec![md, nd],
                    });
                }
            }
        }
        None
    }

    #[allow(clippy::too_many_arguments)]
    fn check_pair(
        &mut self,
        bunch: &Canon,
        term: &Term,
        ty: &Type,
        m: &Term,
        n: &Term,
        a: &Type,
        b: &Type,
        kind: JoinKind,
    ) -> Option<TermDerivation> {
        let shared: Vec<Name> = m.free_vars().intersection(&n.free_vars()).cloned().collect();
        if !shared.is_empty() {
            if kind == JoinKind::Semi {
                return None;
            }
            return self.contract_shared(bunch, term, ty, &shared);
        }
        for (d1, d2) in self.fv_splits(bunch, kind, &m.free_vars()) {
            let Some(md) = self.check(&d1, m, a) else {
                continue;
            };
            if let Some(nd) = self.check(&d2, n, b) {
                let rule = match kind {
                    JoinKind::Semi => TermRule::SepI,
                    JoinKind::Comma => TermRule::ConjI,
                };
                return Some(TermDerivation {
                    rule,
                    bunch: bunch.clone(),
                    term: term.clone(),
                    ty: ty.clone(),
                    premises: vec![md, nd],
                });
            }
        }
        None
    }

    fn check_unit_elim(
        &mut self,
        bunch: &Canon,
        term: &Term,
        ty: &Type,
        m: &Term,
        n: &Term,
        mult: bool,
    ) -> Option<TermDerivation> {
        let shared: Vec<Name> = m.free_vars().intersection(&n.free_vars()).cloned().collect();
        if !shared.is_empty() {
            return self.contract_shared(bunch, term, ty, &shared);
        }
        let unit_ty = if mult { Type::OneM } else { Type::OneA };
        let unit_bunch = if mult { Canon::UnitM } else { Canon::UnitA };
        for (pos, content) in positions_with_names(bunch, &m.free_vars()) {
            let Some(md) = self.check(&content, m, &unit_ty) else {
                continue;
            };
            let inner = replace_at(bunch, &pos, unit_bunch.clone());
            if let Some(nd) = self.check(&inner, n, ty) {
                let rule = if mult { TermRule::OneMElim } else { TermRule::OneAElim };
                return Some(TermDerivation {
                    rule,
                    bunch: bunch.clone(),
                    term: term.clone(),
                    ty: ty.clone(),
                    premises: vec![md, nd],
                });
            }
        }
        None
    }

    /// Splits of the bunch by the free variables of the left part; remaining
    /// nameless components may land on either side.
    fn fv_splits(
        &self,
        bunch: &Canon,
        kind: JoinKind,
        left_names: &BTreeSet<Name>,
    ) -> Vec<(Canon, Canon)> {
        let comps = bunch.components(kind);
        let mut must_left = Vec::new();
        let mut must_right = Vec::new();
        let mut floating = Vec::new();
        for comp in comps {
            let ids = comp.idents();
            if ids.is_empty() {
                floating.push(comp);
            } else if left_names.is_superset(&ids) {
                must_left.push(comp);
            } else if ids.intersection(left_names).next().is_some() {
                return vec![]; // mixed component, no split by these names
            } else {
                must_right.push(comp);
            }
        }
        let covered: BTreeSet<Name> = must_left.iter().flat_map(|c| c.idents()).collect();
        if &covered != left_names {
            return vec![];
        }
        let mut out = Vec::new();
        for mask in 0u32..(1 << floating.len()) {
            let mut l = must_left.clone();
            let mut r = must_right.clone();
            for (i, fc) in floating.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    l.push(fc.clone());
                } else {
                    r.push(fc.clone());
                }
            }
            out.push((join(kind, l), join(kind, r)));
        }
        out.sort();
        out.dedup();
        out
    }

    /// Wrap the judgment in contractions for variables used on both sides of
    /// an additive split, then re-check the rewritten term.
    fn contract_shared(
        &mut self,
        bunch: &Canon,
        term: &Term,
        ty: &Type,
        shared: &[Name],
    ) -> Option<TermDerivation> {
        let x = &shared[0];
        let leaf_ty = bunch.leaf_type(x)?.clone();
        let mut taken = bunch.idents();
        taken.extend(term.all_vars());
        let mut supply = FreshSupply::new();
        let c1 = supply.fresh(&x.base, &taken);
        taken.insert(c1.clone());
        let c2 = supply.fresh(&x.base, &taken);
        let inner = replace_at(
            bunch,
            &find_leaf_pos(bunch, x)?,
            join(
                JoinKind::Comma,
                vec![Canon::leaf(c1.clone(), leaf_ty.clone()), Canon::leaf(c2.clone(), leaf_ty)],
            ),
        );
        let rewritten = split_occurrences(term, x, &c1, &c2)?;
        let premise = self.check(&inner, &rewritten, ty)?;
        Some(TermDerivation {
            rule: TermRule::NC { name: x.clone(), copy1: c1, copy2: c2 },
            bunch: bunch.clone(),
            term: term.clone(),
            ty: ty.clone(),
            premises: vec![premise],
        })
    }

    /// Check at `target`, wrapping in weakening steps that drop
    /// comma-attached sub-bunches of `bunch` until it matches.
    fn weaken_to(
        &mut self,
        bunch: &Canon,
        target: &Canon,
        term: &Term,
        ty: &Type,
        make_leaf: impl FnOnce(&Canon) -> TermDerivation,
    ) -> Option<TermDerivation> {
        let drops = weaken_search(bunch, target)?;
        let mut deriv = make_leaf(target);
        for dropped in drops.into_iter().rev() {
            let outer = deriv.bunch.clone();
            let _ = outer;
            deriv = TermDerivation {
                rule: TermRule::NW { dropped: dropped.1 },
                bunch: dropped.0,
                term: term.clone(),
                ty: ty.clone(),
                premises: vec![deriv],
            };
        }
        Some(deriv)
    }

    /// Candidate types for an application argument.
    fn arg_candidates(&mut self, bunch: &Canon, n: &Term) -> Vec<Type> {
        if let Some(t) = synth_term(bunch, n) {
            return vec![t];
        }
        self.pool.clone()
    }

    /// Candidate types for an elimination scrutinee.
    fn scrutinee_candidates(
        &mut self,
        bunch: &Canon,
        m: &Term,
        shape: impl Fn(&Type) -> bool,
    ) -> Vec<Type> {
        if let Some(t) = synth_term(bunch, m) {
            if shape(&t) {
                return vec![t];
            }
        }
        self.pool.iter().filter(|t| shape(t)).cloned().collect()
    }
}

fn find_leaf_pos(bunch: &Canon, x: &Name) -> Option<Pos> {
    let names: BTreeSet<Name> = [x.clone()].into_iter().collect();
    positions_with_names(bunch, &names)
        .into_iter()
        .find(|(_, content)| matches!(content, Canon::Leaf(n, _) if n == x))
        .map(|(pos, _)| pos)
}

/// Replace occurrences of `x` so that the head/left side uses `c1` and the
/// right side(s) use `c2`. Occurrences are split by subterm: in a two-sided
/// node the left subterm takes `c1`, the right takes `c2`; elsewhere the
/// split happens deeper.
fn split_occurrences(term: &Term, x: &Name, c1: &Name, c2: &Name) -> Option<Term> {
    match term {
        Term::AppWand(m, n) | Term::AppImpl(m, n) if both_use(m, n, x) => {
            let m2 = rename_var(m, x, c1);
            let n2 = rename_var(n, x, c2);
            Some(match term {
                Term::AppWand(..) => Term::AppWand(Box::new(m2), Box::new(n2)),
                _ => Term::AppImpl(Box::new(m2), Box::new(n2)),
            })
        }
        Term::PairSep(m, n) | Term::PairConj(m, n) if both_use(m, n, x) => {
            let m2 = rename_var(m, x, c1);
            let n2 = rename_var(n, x, c2);
            Some(match term {
                Term::PairSep(..) => Term::PairSep(Box::new(m2), Box::new(n2)),
                _ => Term::PairConj(Box::new(m2), Box::new(n2)),
            })
        }
        Term::LetUnitM(m, n) | Term::LetUnitA(m, n) if both_use(m, n, x) => {
            let m2 = rename_var(m, x, c1);
            let n2 = rename_var(n, x, c2);
            Some(match term {
                Term::LetUnitM(..) => Term::LetUnitM(Box::new(m2), Box::new(n2)),
                _ => Term::LetUnitA(Box::new(m2), Box::new(n2)),
            })
        }
        Term::LetPairSep(a, b, m, n) if both_use(m, n, x) => Some(Term::LetPairSep(
            a.clone(),
            b.clone(),
            Box::new(rename_var(m, x, c1)),
            Box::new(rename_var(n, x, c2)),
        )),
        Term::Case(m, x1, n1, x2, n2) => {
            let in_scrut = m.free_vars().contains(x);
            let in_branches =
                n1.free_vars().contains(x) || n2.free_vars().contains(x);
            if in_scrut && in_branches {
                Some(Term::Case(
                    Box::new(rename_var(m, x, c1)),
                    x1.clone(),
                    Box::new(rename_var(n1, x, c2)),
                    x2.clone(),
                    Box::new(rename_var(n2, x, c2)),
                ))
            } else {
                None
            }
        }
        _ => None,
    }
}

fn both_use(m: &Term, n: &Term, x: &Name) -> bool {
    m.free_vars().contains(x) && n.free_vars().contains(x)
}

/// Drop comma-attached sub-bunches until `from` equals `to`. Returns the
/// drop steps as (bunch before, dropped sub-bunch) from the outside in.
fn weaken_search(from: &Canon, to: &Canon) -> Option<Vec<(Canon, Canon)>> {
    let mut frontier = vec![(from.clone(), Vec::new())];
    let mut visited: BTreeSet<Canon> = [from.clone()].into_iter().collect();
    while let Some((cur, steps)) = frontier.pop() {
        if &cur == to {
            return Some(steps);
        }
        if steps.len() > 8 {
            continue;
        }
        for (pos, content) in bunch::all_positions(&cur) {
            // N-W drops sub-bunches attached by a comma; in canonical form
            // that means child subsets of comma nodes.
            let node_is_comma = {
                let mut node = &cur;
                for &i in &pos.path {
                    node = &node.children()[i];
                }
                matches!(node, Canon::Comma(_))
            };
            let droppable = match &pos.what {
                bunch::PosContent::Children(_) => node_is_comma,
                bunch::PosContent::WholeNode => {
                    // a whole node is droppable when comma-attached to its
                    // parent, or standalone against the additive unit
                    if pos.path.is_empty() {
                        true
                    } else {
                        let mut node = &cur;
                        for &i in &pos.path[..pos.path.len() - 1] {
                            node = &node.children()[i];
                        }
                        matches!(node, Canon::Comma(_))
                    }
                }
                bunch::PosContent::Pad(_) => false,
            };
            if !droppable || content.idents().is_empty() && content == Canon::UnitA {
                continue;
            }
            let next = replace_at(&cur, &pos, Canon::UnitA);
            if next == cur || !visited.insert(next.clone()) {
                continue;
            }
            let mut steps2 = steps.clone();
            steps2.push((cur.clone(), content.clone()));
            frontier.push((next, steps2));
        }
    }
    None
}

/// Bottom-up type synthesis for terms whose shape determines their type.
fn synth_term(bunch: &Canon, t: &Term) -> Option<Type> {
    match t {
        Term::Var(x) => bunch.leaf_type(x).cloned(),
        Term::UnitM => Some(Type::OneM),
        Term::UnitA => Some(Type::OneA),
        Term::PairSep(m, n) => {
            let fv = m.free_vars();
            let (d1, d2) = bunch::splits_by_names(bunch, JoinKind::Semi, &fv)
                .into_iter()
                .next()?;
            Some(Type::sep(synth_term(&d1, m)?, synth_term(&d2, n)?))
        }
        Term::PairConj(m, n) => {
            Some(Type::conj(synth_term(bunch, m)?, synth_term(bunch, n)?))
        }
        Term::AppWand(m, n) => {
            let _ = n;
            match synth_term(bunch, m)? {
                Type::Wand(_, b) => Some(*b),
                _ => None,
            }
        }
        Term::AppImpl(m, _) => match synth_term(bunch, m)? {
            Type::Impl(_, b) => Some(*b),
            _ => None,
        },
        Term::Proj(i, m) => match synth_term(bunch, m)? {
            Type::Conj(a, b) => Some(if *i == 1 { *a } else { *b }),
            _ => None,
        },
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Translation into processes, by recursion on the typing derivation.

/// Translate a typing derivation into a process providing the term's
/// behavior on channel `z`.
pub fn translate(deriv: &TermDerivation, z: &Name, supply: &mut FreshSupply) -> Process {
    let mut avoid: BTreeSet<Name> = deriv.term.all_vars();
    avoid.extend(deriv.bunch.idents());
    avoid.insert(z.clone());
    let raw = translate_rec(deriv, z, supply, &mut avoid);
    let (renamed, _) = syntax::rename_apart(&raw, supply, &avoid);
    renamed
}

fn translate_rec(
    deriv: &TermDerivation,
    z: &Name,
    supply: &mut FreshSupply,
    avoid: &mut BTreeSet<Name>,
) -> Process {
    let fresh = |base: &str, supply: &mut FreshSupply, avoid: &mut BTreeSet<Name>| {
        let n = supply.fresh(base, avoid);
        avoid.insert(n.clone());
        n
    };
    match &deriv.rule {
        TermRule::NId => {
            let x = match &deriv.term {
                Term::Var(x) => x.clone(),
                _ => unreachable!("NId on non-variable"),
            };
            Process::fwd(z.clone(), x)
        }
        TermRule::NW { dropped } => {
            let body = translate_rec(&deriv.premises[0], z, supply, avoid);
            let binding: SpawnBinding = dropped
                .idents()
                .into_iter()
                .map(|x| (x, BTreeSet::new()))
                .collect();
            Process::spawn(binding, body)
        }
        TermRule::NC { name, copy1, copy2 } => {
            let body = translate_rec(&deriv.premises[0], z, supply, avoid);
            let binding = SpawnBinding::singleton(
                name.clone(),
                [copy1.clone(), copy2.clone()],
            );
            Process::spawn(binding, body)
        }
        TermRule::WandI | TermRule::ImplI => {
            let x = match &deriv.term {
                Term::LamWand(x, _) | Term::LamImpl(x, _) => x.clone(),
                _ => unreachable!("lambda rule on non-lambda"),
            };
            let body = translate_rec(&deriv.premises[0], z, supply, avoid);
            Process::Input { chan: z.clone(), bound: x, body: Box::new(body) }
        }
        TermRule::WandE { .. } | TermRule::ImplE { .. } => {
            let c = fresh("f", supply, avoid);
            let d = fresh("v", supply, avoid);
            let fun = translate_rec(&deriv.premises[0], &c, supply, avoid);
            let arg = translate_rec(&deriv.premises[1], &d, supply, avoid);
            Process::cut(
                c.clone(),
                fun,
                Process::Output {
                    chan: c.clone(),
                    payload: d,
                    body: Box::new(arg),
                    cont: Box::new(Process::fwd(z.clone(), c)),
                },
            )
        }
        TermRule::OneMI | TermRule::OneAI => Process::close(z.clone()),
        TermRule::OneMElim | TermRule::OneAElim => {
            let c = fresh("u", supply, avoid);
            let scrut = translate_rec(&deriv.premises[0], &c, supply, avoid);
            let body = translate_rec(&deriv.premises[1], z, supply, avoid);
            Process::cut(
                c.clone(),
                scrut,
                Process::Wait { chan: c, body: Box::new(body) },
            )
        }
        TermRule::SepI | TermRule::ConjI => {
            let y = fresh("p", supply, avoid);
            let first = translate_rec(&deriv.premises[0], &y, supply, avoid);
            let second = translate_rec(&deriv.premises[1], z, supply, avoid);
            Process::Output {
                chan: z.clone(),
                payload: y,
                body: Box::new(first),
                cont: Box::new(second),
            }
        }
        TermRule::SepE { .. } => {
            let (x, y) = match &deriv.term {
                Term::LetPairSep(x, y, _, _) => (x.clone(), y.clone()),
                _ => unreachable!("SepE on non let-pair"),
            };
            let scrut = translate_rec(&deriv.premises[0], &y, supply, avoid);
            let body = translate_rec(&deriv.premises[1], z, supply, avoid);
            Process::cut(
                y.clone(),
                scrut,
                Process::Input { chan: y, bound: x, body: Box::new(body) },
            )
        }
        TermRule::ConjE { keep, .. } => {
            let x1 = fresh("w", supply, avoid);
            let x2 = fresh("w", supply, avoid);
            let scrut = translate_rec(&deriv.premises[0], &x2, supply, avoid);
            let (kept, weakened) = if *keep == 1 { (&x1, &x2) } else { (&x2, &x1) };
            let inner = Process::spawn(
                SpawnBinding::singleton(weakened.clone(), []),
                Process::fwd(z.clone(), kept.clone()),
            );
            Process::cut(
                x2.clone(),
                scrut,
                Process::Input { chan: x2, bound: x1, body: Box::new(inner) },
            )
        }
        TermRule::DisjI { side, .. } => {
            let body = translate_rec(&deriv.premises[0], z, supply, avoid);
            if *side == 1 {
                Process::SelL { chan: z.clone(), body: Box::new(body) }
            } else {
                Process::SelR { chan: z.clone(), body: Box::new(body) }
            }
        }
        TermRule::DisjE { .. } => {
            let (x1, x2) = match &deriv.term {
                Term::Case(_, x1, _, x2, _) => (x1.clone(), x2.clone()),
                _ => unreachable!("DisjE on non-case"),
            };
            let c = fresh("s", supply, avoid);
            let scrut = translate_rec(&deriv.premises[0], &c, supply, avoid);
            let left = translate_rec(&deriv.premises[1], z, supply, avoid);
            let right = translate_rec(&deriv.premises[2], z, supply, avoid);
            Process::cut(
                c.clone(),
                scrut,
                Process::Branch {
                    chan: c.clone(),
                    left: Box::new(syntax::substitute(&left, &x1, &c)),
                    right: Box::new(syntax::substitute(&right, &x2, &c)),
                },
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_bunch, parse_term, parse_type};

    fn check(bunch: &str, term: &str, ty: &str) -> Result<TermDerivation, TermTypeError> {
        typecheck_term(
            &parse_bunch(bunch).unwrap(),
            &parse_term(term).unwrap(),
            &parse_type(ty).unwrap(),
        )
    }

    #[test]
    fn identity_and_weakening() {
        assert!(check("x:@A", "x", "@A").is_ok());
        assert!(check("0m", "\\x.^y.y", "@A -* (@B -> @B)").is_ok());
        // semicolon-attached resources cannot be dropped
        assert!(check("0m", "\\x.*m", "@A -* 1m").is_err());
    }

    #[test]
    fn unusual_judgment_is_typable() {
        assert!(check("0m", "\\a.^y.(y@a)@a", "@A -* (@A -> @A -> @B) -> @B").is_ok());
    }

    #[test]
    fn contraction_via_additive_pair() {
        assert!(check("0a", "^x.(x,x)", "@A -> (@A /\\ @A)").is_ok());
        // and its multiplicative counterpart fails
        assert!(check("0m", "\\x.<x,x>", "@A -* (@A * @A)").is_err());
    }

    #[test]
    fn cbn_examples() {
        let beta = parse_term("(\\x.x) *m").unwrap();
        let stepped = cbn_step(&beta);
        assert_eq!(stepped, vec![Term::UnitM]);

        let proj = parse_term("pi1 (*a, *m)").unwrap();
        assert_eq!(cbn_step(&proj), vec![Term::UnitA]);

        let case = parse_term("case inj1 *m { x -> x ; y -> y }").unwrap();
        assert_eq!(cbn_step(&case), vec![Term::UnitM]);
    }

    #[test]
    fn translate_identity_is_forwarder() {
        let deriv = check("x:@A", "x", "@A").unwrap();
        let mut supply = FreshSupply::new();
        let p = translate(&deriv, &Name::plain("z"), &mut supply);
        assert_eq!(p, Process::fwd(Name::plain("z"), Name::plain("x")));
    }
}
