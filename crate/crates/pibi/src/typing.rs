//! The typing judgment `bunch |- P :: x : A` and its checker.
//!
//! Checking is syntax directed: the process constructor picks the candidate
//! rules, the goal or context type's top connective picks between the
//! multiplicative and additive variant, and bunch equivalence is absorbed by
//! keeping every bunch canonical. Cut formulas are not written in the
//! syntax, so the checker introduces a placeholder for each cut and lets the
//! provider and user sides refine it by unification; a derivation script can
//! replace the search entirely.

use crate::bunch::{
    app_positions, content_at, join, positions_with_names, replace_at, splits_by_names, Canon,
    JoinKind, Pos,
};
use crate::names::Name;
use crate::spawn::{self, BindingDerivation};
use crate::syntax::{alpha_canon, Process};
use crate::types::Type;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Judgment {
    pub bunch: Canon,
    #[serde(serialize_with = "crate::typing::ser_process")]
    pub process: Process,
    #[serde(serialize_with = "crate::typing::ser_name")]
    pub chan: Name,
    #[serde(serialize_with = "crate::typing::ser_type")]
    pub ty: Type,
}

pub(crate) fn ser_process<S: serde::Serializer>(p: &Process, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(p)
}
pub(crate) fn ser_name<S: serde::Serializer>(n: &Name, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(n)
}
pub(crate) fn ser_type<S: serde::Serializer>(t: &Type, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(t)
}

impl fmt::Display for Judgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} |- {} :: {} : {}", self.bunch, self.process, self.chan, self.ty)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum RuleApp {
    Fwd,
    EmpR,
    EmpL,
    TrueR,
    TrueL,
    SepR { split: (Canon, Canon) },
    SepL,
    ConjR { split: (Canon, Canon) },
    ConjL,
    WandR,
    WandL { pos: Pos, arg_bunch: Canon },
    ImplR,
    ImplL { pos: Pos, arg_bunch: Canon },
    DisjRInl,
    DisjRInr,
    DisjL,
    Cut { pos: Pos, provider_bunch: Canon, #[serde(serialize_with = "ser_type")] provider_ty: Type },
    Struct,
}

impl RuleApp {
    pub fn name(&self) -> &'static str {
        match self {
            RuleApp::Fwd => "Fwd",
            RuleApp::EmpR => "Emp-r",
            RuleApp::EmpL => "Emp-l",
            RuleApp::TrueR => "True-r",
            RuleApp::TrueL => "True-l",
            RuleApp::SepR { .. } => "Sep-r",
            RuleApp::SepL => "Sep-l",
            RuleApp::ConjR { .. } => "Conj-r",
            RuleApp::ConjL => "Conj-l",
            RuleApp::WandR => "Wand-r",
            RuleApp::WandL { .. } => "Wand-l",
            RuleApp::ImplR => "Impl-r",
            RuleApp::ImplL { .. } => "Impl-l",
            RuleApp::DisjRInl => "Disj-r-inl",
            RuleApp::DisjRInr => "Disj-r-inr",
            RuleApp::DisjL => "Disj-l",
            RuleApp::Cut { .. } => "Cut",
            RuleApp::Struct => "Struct",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Derivation {
    pub rule: RuleApp,
    pub judgment: Judgment,
    pub premises: Vec<Derivation>,
    pub binding: Option<BindingDerivation>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypeError {
    #[error("channel {0} already occurs in the bunch")]
    ChannelInBunch(Name),
    #[error("free names {process_names:?} do not match bunch names plus channel {expected:?}")]
    FreeNameMismatch { process_names: Vec<Name>, expected: Vec<Name> },
    #[error("not typable; deepest failure: {0}")]
    NotTypable(String),
    #[error("script replay failed: {0}")]
    Script(String),
}

type Subst = BTreeMap<u32, Type>;

fn resolve(t: &Type, s: &Subst) -> Type {
    match t {
        Type::MVar(k) => match s.get(k) {
            Some(bound) => resolve(bound, s),
            None => t.clone(),
        },
        Type::Sep(a, b) => Type::sep(resolve(a, s), resolve(b, s)),
        Type::Wand(a, b) => Type::wand(resolve(a, s), resolve(b, s)),
        Type::Conj(a, b) => Type::conj(resolve(a, s), resolve(b, s)),
        Type::Impl(a, b) => Type::impl_(resolve(a, s), resolve(b, s)),
        Type::Disj(a, b) => Type::disj(resolve(a, s), resolve(b, s)),
        other => other.clone(),
    }
}

fn occurs(k: u32, t: &Type, s: &Subst) -> bool {
    match resolve(t, s) {
        Type::MVar(j) => j == k,
        Type::Sep(a, b)
        | Type::Wand(a, b)
        | Type::Conj(a, b)
        | Type::Impl(a, b)
        | Type::Disj(a, b) => occurs(k, &a, s) || occurs(k, &b, s),
        _ => false,
    }
}

fn unify(t1: &Type, t2: &Type, s: &Subst) -> Option<Subst> {
    let a = resolve(t1, s);
    let b = resolve(t2, s);
    match (&a, &b) {
        (Type::MVar(k), _) => {
            if occurs(*k, &b, s) && b != Type::MVar(*k) {
                return None;
            }
            let mut s2 = s.clone();
            if b != Type::MVar(*k) {
                s2.insert(*k, b.clone());
            }
            Some(s2)
        }
        (_, Type::MVar(_)) => unify(&b, &a, s),
        (Type::OneM, Type::OneM) | (Type::OneA, Type::OneA) => Some(s.clone()),
        (Type::Atom(x), Type::Atom(y)) if x == y => Some(s.clone()),
        (Type::Sep(a1, b1), Type::Sep(a2, b2))
        | (Type::Wand(a1, b1), Type::Wand(a2, b2))
        | (Type::Conj(a1, b1), Type::Conj(a2, b2))
        | (Type::Impl(a1, b1), Type::Impl(a2, b2))
        | (Type::Disj(a1, b1), Type::Disj(a2, b2)) => {
            let s2 = unify(a1, a2, s)?;
            unify(b1, b2, &s2)
        }
        _ => None,
    }
}

struct Checker {
    next_mvar: u32,
    deepest: (usize, String),
    failed: BTreeSet<(Canon, Process, Name, Type)>,
}

impl Checker {
    fn fresh(&mut self) -> Type {
        let k = self.next_mvar;
        self.next_mvar += 1;
        Type::MVar(k)
    }

    fn fail<T>(&mut self, depth: usize, msg: impl FnOnce() -> String) -> Option<T> {
        if depth >= self.deepest.0 {
            self.deepest = (depth, msg());
        }
        None
    }

    fn resolve_bunch(&self, b: &Canon, s: &Subst) -> Canon {
        b.map_types(&|t| resolve(t, s))
    }

    fn check_rec(
        &mut self,
        bunch: &Canon,
        p: &Process,
        chan: &Name,
        goal: &Type,
        s: &Subst,
        depth: usize,
    ) -> Option<(Derivation, Subst)> {
        let goal_res = resolve(goal, s);
        let bunch_res = self.resolve_bunch(bunch, s);
        let ground = goal_res.is_ground() && bunch_res.is_ground();
        let memo_key = (bunch_res.clone(), alpha_canon(p), chan.clone(), goal_res.clone());
        if ground && self.failed.contains(&memo_key) {
            return None;
        }
        let out = self.dispatch(&bunch_res, p, chan, &goal_res, s, depth);
        if out.is_none() && ground {
            self.failed.insert(memo_key);
        }
        out
    }

    fn dispatch(
        &mut self,
        bunch: &Canon,
        p: &Process,
        chan: &Name,
        goal: &Type,
        s: &Subst,
        depth: usize,
    ) -> Option<(Derivation, Subst)> {
        let mk = |rule: RuleApp, premises: Vec<Derivation>, binding: Option<BindingDerivation>, ty: &Type| {
            Derivation {
                rule,
                judgment: Judgment {
                    bunch: bunch.clone(),
                    process: p.clone(),
                    chan: chan.clone(),
                    ty: ty.clone(),
                },
                premises,
                binding,
            }
        };
        match p {
            Process::Fwd { provided, used } => {
                if provided != chan {
                    return self.fail(depth, || {
                        format!("forwarder provides {provided}, judgment channel is {chan}")
                    });
                }
                match bunch {
                    Canon::Leaf(n, t) if n == used => {
                        let s2 = unify(t, goal, s).or_else(|| {
                            self.fail(depth, || {
                                format!("Fwd: context type {t} does not match goal {goal}")
                            })
                        })?;
                        Some((mk(RuleApp::Fwd, vec![], None, goal), s2))
                    }
                    _ => self.fail(depth, || {
                        format!("Fwd: bunch {bunch} is not exactly {used} : {goal}")
                    }),
                }
            }
            Process::Close { chan: c } => {
                if c != chan {
                    return self.fail(depth, || format!("close on non-provided channel {c}"));
                }
                match bunch {
                    Canon::UnitM => {
                        let s2 = unify(goal, &Type::OneM, s).or_else(|| {
                            self.fail(depth, || format!("Emp-r: goal {goal} is not 1m"))
                        })?;
                        Some((mk(RuleApp::EmpR, vec![], None, &Type::OneM), s2))
                    }
                    Canon::UnitA => {
                        let s2 = unify(goal, &Type::OneA, s).or_else(|| {
                            self.fail(depth, || format!("True-r: goal {goal} is not 1a"))
                        })?;
                        Some((mk(RuleApp::TrueR, vec![], None, &Type::OneA), s2))
                    }
                    _ => self.fail(depth, || {
                        format!("close needs an empty unit bunch, have {bunch}")
                    }),
                }
            }
            Process::Wait { chan: c, body } => {
                if c == chan {
                    return self.fail(depth, || "wait on the provided channel".to_string());
                }
                let Some(t) = bunch.leaf_type(c) else {
                    return self.fail(depth, || format!("waiting channel {c} not in bunch"));
                };
                let t = t.clone();
                for (unit_ty, unit_bunch, rule) in [
                    (Type::OneM, Canon::UnitM, RuleApp::EmpL),
                    (Type::OneA, Canon::UnitA, RuleApp::TrueL),
                ] {
                    if let Some(s2) = unify(&t, &unit_ty, s) {
                        let inner = self.replace_leaf(bunch, c, unit_bunch);
                        if let Some((d, s3)) =
                            self.check_rec(&inner, body, chan, goal, &s2, depth + 1)
                        {
                            return Some((mk(rule, vec![d], None, goal), s3));
                        }
                    }
                }
                self.fail(depth, || format!("wait: {c} : {t} is not a unit usable here"))
            }
            Process::Input { chan: c, bound, body } => {
                if c == chan {
                    // providing an input: Wand-r or Impl-r by goal connective
                    for (mkty, kind, rule) in [
                        (Type::wand as fn(Type, Type) -> Type, JoinKind::Semi, RuleApp::WandR),
                        (Type::impl_, JoinKind::Comma, RuleApp::ImplR),
                    ] {
                        let a = self.fresh();
                        let b = self.fresh();
                        let Some(s2) = unify(goal, &mkty(a.clone(), b.clone()), s) else {
                            continue;
                        };
                        let inner =
                            join(kind, vec![bunch.clone(), Canon::leaf(bound.clone(), a)]);
                        if let Some((d, s3)) =
                            self.check_rec(&inner, body, chan, &b, &s2, depth + 1)
                        {
                            return Some((mk(rule, vec![d], None, goal), s3));
                        }
                    }
                    self.fail(depth, || {
                        format!("input on provided channel: goal {goal} is not an arrow")
                    })
                } else {
                    // using a pair: Sep-l or Conj-l by the context type
                    let Some(t) = bunch.leaf_type(c) else {
                        return self.fail(depth, || format!("input channel {c} not in bunch"));
                    };
                    let t = t.clone();
                    for (mkty, kind, rule) in [
                        (Type::sep as fn(Type, Type) -> Type, JoinKind::Semi, RuleApp::SepL),
                        (Type::conj, JoinKind::Comma, RuleApp::ConjL),
                    ] {
                        let a = self.fresh();
                        let b = self.fresh();
                        let Some(s2) = unify(&t, &mkty(a.clone(), b.clone()), s) else {
                            continue;
                        };
                        let sub = join(
                            kind,
                            vec![Canon::leaf(c.clone(), b), Canon::leaf(bound.clone(), a)],
                        );
                        let inner = self.replace_leaf(bunch, c, sub);
                        if let Some((d, s3)) =
                            self.check_rec(&inner, body, chan, goal, &s2, depth + 1)
                        {
                            return Some((mk(rule, vec![d], None, goal), s3));
                        }
                    }
                    self.fail(depth, || format!("input: {c} : {t} is not a pair type"))
                }
            }
            Process::Output { chan: c, payload, body, cont } => {
                let mut body_names = body.free_names();
                body_names.remove(payload);
                if c == chan {
                    for (mkty, kind, mkrule) in [
                        (
                            Type::sep as fn(Type, Type) -> Type,
                            JoinKind::Semi,
                            (|sp| RuleApp::SepR { split: sp }) as fn((Canon, Canon)) -> RuleApp,
                        ),
                        (Type::conj, JoinKind::Comma, |sp| RuleApp::ConjR { split: sp }),
                    ] {
                        let a = self.fresh();
                        let b = self.fresh();
                        let Some(s2) = unify(goal, &mkty(a.clone(), b.clone()), s) else {
                            continue;
                        };
                        for (d1, d2) in splits_by_names(bunch, kind, &body_names) {
                            let Some((p1, s3)) =
                                self.check_rec(&d1, body, payload, &a, &s2, depth + 1)
                            else {
                                continue;
                            };
                            if let Some((p2, s4)) =
                                self.check_rec(&d2, cont, chan, &b, &s3, depth + 1)
                            {
                                return Some((
                                    mk(mkrule((d1, d2)), vec![p1, p2], None, goal),
                                    s4,
                                ));
                            }
                        }
                    }
                    self.fail(depth, || {
                        format!(
                            "output on provided channel: no split of {bunch} fits goal {goal}"
                        )
                    })
                } else {
                    let Some(t) = bunch.leaf_type(c) else {
                        return self.fail(depth, || format!("output channel {c} not in bunch"));
                    };
                    let t = t.clone();
                    for (mkty, kind, mkrule) in [
                        (
                            Type::wand as fn(Type, Type) -> Type,
                            JoinKind::Semi,
                            (|pos, arg| RuleApp::WandL { pos, arg_bunch: arg })
                                as fn(Pos, Canon) -> RuleApp,
                        ),
                        (Type::impl_, JoinKind::Comma, |pos, arg| RuleApp::ImplL {
                            pos,
                            arg_bunch: arg,
                        }),
                    ] {
                        let a = self.fresh();
                        let b = self.fresh();
                        let Some(s2) = unify(&t, &mkty(a.clone(), b.clone()), s) else {
                            continue;
                        };
                        for (pos, arg) in app_positions(bunch, c, kind, &body_names) {
                            let Some((p1, s3)) =
                                self.check_rec(&arg, body, payload, &a, &s2, depth + 1)
                            else {
                                continue;
                            };
                            let outer =
                                replace_at(bunch, &pos, Canon::leaf(c.clone(), b.clone()));
                            if let Some((p2, s4)) =
                                self.check_rec(&outer, cont, chan, goal, &s3, depth + 1)
                            {
                                return Some((
                                    mk(mkrule(pos, arg), vec![p1, p2], None, goal),
                                    s4,
                                ));
                            }
                        }
                    }
                    self.fail(depth, || {
                        format!("output: {c} : {t} is not usable as a function here")
                    })
                }
            }
            Process::SelL { chan: c, body } | Process::SelR { chan: c, body } => {
                let left = matches!(p, Process::SelL { .. });
                if c != chan {
                    return self.fail(depth, || {
                        format!("selection on non-provided channel {c}")
                    });
                }
                let a = self.fresh();
                let b = self.fresh();
                let s2 = unify(goal, &Type::disj(a.clone(), b.clone()), s).or_else(|| {
                    self.fail(depth, || format!("selection: goal {goal} is not a sum"))
                })?;
                let target = if left { a } else { b };
                let (d, s3) = self.check_rec(bunch, body, chan, &target, &s2, depth + 1)?;
                let rule = if left { RuleApp::DisjRInl } else { RuleApp::DisjRInr };
                Some((mk(rule, vec![d], None, goal), s3))
            }
            Process::Branch { chan: c, left, right } => {
                if c == chan {
                    return self.fail(depth, || "branching on the provided channel".to_string());
                }
                let Some(t) = bunch.leaf_type(c) else {
                    return self.fail(depth, || format!("branch channel {c} not in bunch"));
                };
                let t = t.clone();
                let a = self.fresh();
                let b = self.fresh();
                let s2 = unify(&t, &Type::disj(a.clone(), b.clone()), s).or_else(|| {
                    self.fail(depth, || format!("branch: {c} : {t} is not a sum"))
                })?;
                let bunch_l = self.replace_leaf(bunch, c, Canon::leaf(c.clone(), a));
                let (dl, s3) = self.check_rec(&bunch_l, left, chan, goal, &s2, depth + 1)?;
                let bunch_r = self.replace_leaf(bunch, c, Canon::leaf(c.clone(), resolve(&b, &s3)));
                let (dr, s4) = self.check_rec(&bunch_r, right, chan, goal, &s3, depth + 1)?;
                Some((mk(RuleApp::DisjL, vec![dl, dr], None, goal), s4))
            }
            Process::Cut { chan: x, provider, user } => {
                let mut provider_names = provider.free_names();
                provider_names.remove(x);
                for (pos, sub) in positions_with_names(bunch, &provider_names) {
                    let a = self.fresh();
                    let Some((p1, s2)) =
                        self.check_rec(&sub, provider, x, &a, s, depth + 1)
                    else {
                        continue;
                    };
                    let a_res = resolve(&a, &s2);
                    let outer = replace_at(bunch, &pos, Canon::leaf(x.clone(), a_res.clone()));
                    if let Some((p2, s3)) =
                        self.check_rec(&outer, user, chan, goal, &s2, depth + 1)
                    {
                        let rule = RuleApp::Cut {
                            pos,
                            provider_bunch: sub,
                            provider_ty: resolve(&a_res, &s3),
                        };
                        return Some((mk(rule, vec![p1, p2], None, goal), s3));
                    }
                }
                self.fail(depth, || {
                    format!(
                        "cut on {x}: no provider sub-bunch of {bunch} with names {provider_names:?} admits a type"
                    )
                })
            }
            Process::Spawn { binding, body } => {
                for bind_deriv in spawn::enumerate_targets(binding, bunch, 64) {
                    let inner = bind_deriv.result.clone();
                    if let Some((d, s2)) =
                        self.check_rec(&inner, body, chan, goal, s, depth + 1)
                    {
                        return Some((mk(RuleApp::Struct, vec![d], Some(bind_deriv), goal), s2));
                    }
                }
                self.fail(depth, || {
                    format!("spawn binding [{binding}] admits no typed transformation of {bunch}")
                })
            }
        }
    }

    fn replace_leaf(&self, bunch: &Canon, name: &Name, replacement: Canon) -> Canon {
        fn go(c: &Canon, name: &Name, replacement: &Canon) -> Canon {
            match c {
                Canon::Leaf(n, _) if n == name => replacement.clone(),
                Canon::Semi(cs) => join(
                    JoinKind::Semi,
                    cs.iter().map(|ch| go(ch, name, replacement)).collect(),
                ),
                Canon::Comma(cs) => join(
                    JoinKind::Comma,
                    cs.iter().map(|ch| go(ch, name, replacement)).collect(),
                ),
                other => other.clone(),
            }
        }
        go(bunch, name, &replacement)
    }
}

fn resolve_derivation(d: &Derivation, s: &Subst) -> Derivation {
    let fix = |t: &Type| {
        let r = resolve(t, s);
        default_mvars(&r)
    };
    Derivation {
        rule: match &d.rule {
            RuleApp::SepR { split } => RuleApp::SepR {
                split: (split.0.map_types(&fix), split.1.map_types(&fix)),
            },
            RuleApp::ConjR { split } => RuleApp::ConjR {
                split: (split.0.map_types(&fix), split.1.map_types(&fix)),
            },
            RuleApp::WandL { pos, arg_bunch } => RuleApp::WandL {
                pos: pos.clone(),
                arg_bunch: arg_bunch.map_types(&fix),
            },
            RuleApp::ImplL { pos, arg_bunch } => RuleApp::ImplL {
                pos: pos.clone(),
                arg_bunch: arg_bunch.map_types(&fix),
            },
            RuleApp::Cut { pos, provider_bunch, provider_ty } => RuleApp::Cut {
                pos: pos.clone(),
                provider_bunch: provider_bunch.map_types(&fix),
                provider_ty: fix(provider_ty),
            },
            other => other.clone(),
        },
        judgment: Judgment {
            bunch: d.judgment.bunch.map_types(&fix),
            process: d.judgment.process.clone(),
            chan: d.judgment.chan.clone(),
            ty: fix(&d.judgment.ty),
        },
        premises: d.premises.iter().map(|p| resolve_derivation(p, s)).collect(),
        binding: d.binding.clone(),
    }
}

/// Any placeholder that survived the search is unconstrained; close it with
/// the additive unit.
fn default_mvars(t: &Type) -> Type {
    match t {
        Type::MVar(_) => Type::OneA,
        Type::Sep(a, b) => Type::sep(default_mvars(a), default_mvars(b)),
        Type::Wand(a, b) => Type::wand(default_mvars(a), default_mvars(b)),
        Type::Conj(a, b) => Type::conj(default_mvars(a), default_mvars(b)),
        Type::Impl(a, b) => Type::impl_(default_mvars(a), default_mvars(b)),
        Type::Disj(a, b) => Type::disj(default_mvars(a), default_mvars(b)),
        other => other.clone(),
    }
}

/// Fast-fail name hygiene for a judgment: the channel must be absent from
/// the bunch and the process free names must be exactly the bunch names
/// plus the channel.
pub fn judgment_names_ok(
    bunch: &Canon,
    p: &Process,
    chan: &Name,
) -> Result<(), TypeError> {
    let mut idents = bunch.idents();
    if idents.contains(chan) {
        return Err(TypeError::ChannelInBunch(chan.clone()));
    }
    idents.insert(chan.clone());
    let fns = p.free_names();
    if fns != idents {
        return Err(TypeError::FreeNameMismatch {
            process_names: fns.into_iter().collect(),
            expected: idents.into_iter().collect(),
        });
    }
    Ok(())
}

pub fn check(bunch: &Canon, p: &Process, chan: &Name, ty: &Type) -> Result<Derivation, TypeError> {
    judgment_names_ok(bunch, p, chan)?;
    let mut checker = Checker {
        next_mvar: 0,
        deepest: (0, String::new()),
        failed: BTreeSet::new(),
    };
    match checker.check_rec(bunch, p, chan, ty, &Subst::new(), 0) {
        Some((deriv, subst)) => {
            let resolved = resolve_derivation(&deriv, &subst);
            debug_assert!(validate(&resolved));
            Ok(resolved)
        }
        None => Err(TypeError::NotTypable(checker.deepest.1)),
    }
}

/// Validate that every node of a derivation instantiates its rule exactly.
pub fn validate(d: &Derivation) -> bool {
    validate_node(d) && d.premises.iter().all(validate)
}

fn validate_node(d: &Derivation) -> bool {
    let j = &d.judgment;
    let prem = &d.premises;
    let leaf_is = |c: &Canon, n: &Name, t: &Type| matches!(c, Canon::Leaf(m, u) if m == n && u == t);
    match (&d.rule, &j.process) {
        (RuleApp::Fwd, Process::Fwd { provided, used }) => {
            provided == &j.chan && leaf_is(&j.bunch, used, &j.ty) && prem.is_empty()
        }
        (RuleApp::EmpR, Process::Close { chan }) => {
            chan == &j.chan && j.bunch == Canon::UnitM && j.ty == Type::OneM && prem.is_empty()
        }
        (RuleApp::TrueR, Process::Close { chan }) => {
            chan == &j.chan && j.bunch == Canon::UnitA && j.ty == Type::OneA && prem.is_empty()
        }
        (RuleApp::EmpL, Process::Wait { chan: c, body })
        | (RuleApp::TrueL, Process::Wait { chan: c, body }) => {
            let mult = matches!(d.rule, RuleApp::EmpL);
            let unit_ty = if mult { Type::OneM } else { Type::OneA };
            let unit_bunch = if mult { Canon::UnitM } else { Canon::UnitA };
            let Some(t) = j.bunch.leaf_type(c) else { return false };
            prem.len() == 1
                && *t == unit_ty
                && prem[0].judgment.process == **body
                && prem[0].judgment.chan == j.chan
                && prem[0].judgment.ty == j.ty
                && prem[0].judgment.bunch
                    == replace_leaf_plain(&j.bunch, c, unit_bunch)
        }
        (RuleApp::SepR { split }, Process::Output { chan, payload, body, cont })
        | (RuleApp::ConjR { split }, Process::Output { chan, payload, body, cont }) => {
            let (kind, a, b) = match (&d.rule, &j.ty) {
                (RuleApp::SepR { .. }, Type::Sep(a, b)) => (JoinKind::Semi, a, b),
                (RuleApp::ConjR { .. }, Type::Conj(a, b)) => (JoinKind::Comma, a, b),
                _ => return false,
            };
            chan == &j.chan
                && join(kind, vec![split.0.clone(), split.1.clone()]) == j.bunch
                && prem.len() == 2
                && prem[0].judgment.bunch == split.0
                && prem[0].judgment.process == **body
                && prem[0].judgment.chan == *payload
                && prem[0].judgment.ty == **a
                && prem[1].judgment.bunch == split.1
                && prem[1].judgment.process == **cont
                && prem[1].judgment.chan == j.chan
                && prem[1].judgment.ty == **b
        }
        (RuleApp::WandR, Process::Input { chan, bound, body })
        | (RuleApp::ImplR, Process::Input { chan, bound, body }) => {
            let (kind, a, b) = match (&d.rule, &j.ty) {
                (RuleApp::WandR, Type::Wand(a, b)) => (JoinKind::Semi, a, b),
                (RuleApp::ImplR, Type::Impl(a, b)) => (JoinKind::Comma, a, b),
                _ => return false,
            };
            chan == &j.chan
                && prem.len() == 1
                && prem[0].judgment.bunch
                    == join(kind, vec![j.bunch.clone(), Canon::leaf(bound.clone(), (**a).clone())])
                && prem[0].judgment.process == **body
                && prem[0].judgment.chan == j.chan
                && prem[0].judgment.ty == **b
        }
        (RuleApp::SepL, Process::Input { chan: c, bound, body })
        | (RuleApp::ConjL, Process::Input { chan: c, bound, body }) => {
            let Some(t) = j.bunch.leaf_type(c) else { return false };
            let (kind, a, b) = match (&d.rule, t) {
                (RuleApp::SepL, Type::Sep(a, b)) => (JoinKind::Semi, a.clone(), b.clone()),
                (RuleApp::ConjL, Type::Conj(a, b)) => (JoinKind::Comma, a.clone(), b.clone()),
                _ => return false,
            };
            let sub = join(
                kind,
                vec![Canon::leaf(c.clone(), *b), Canon::leaf(bound.clone(), *a)],
            );
            c != &j.chan
                && prem.len() == 1
                && prem[0].judgment.bunch == replace_leaf_plain(&j.bunch, c, sub)
                && prem[0].judgment.process == **body
                && prem[0].judgment.chan == j.chan
                && prem[0].judgment.ty == j.ty
        }
        (RuleApp::WandL { pos, arg_bunch }, Process::Output { chan: c, payload, body, cont })
        | (RuleApp::ImplL { pos, arg_bunch }, Process::Output { chan: c, payload, body, cont }) => {
            let kind = if matches!(d.rule, RuleApp::WandL { .. }) {
                JoinKind::Semi
            } else {
                JoinKind::Comma
            };
            let Some(t) = j.bunch.leaf_type(c) else { return false };
            let (a, b) = match (kind, t) {
                (JoinKind::Semi, Type::Wand(a, b)) => (a.clone(), b.clone()),
                (JoinKind::Comma, Type::Impl(a, b)) => (a.clone(), b.clone()),
                _ => return false,
            };
            let group = content_at(&j.bunch, pos);
            let expected_group = join(
                kind,
                vec![arg_bunch.clone(), Canon::leaf(c.clone(), t.clone())],
            );
            c != &j.chan
                && group == expected_group
                && prem.len() == 2
                && prem[0].judgment.bunch == *arg_bunch
                && prem[0].judgment.process == **body
                && prem[0].judgment.chan == *payload
                && prem[0].judgment.ty == *a
                && prem[1].judgment.bunch
                    == replace_at(&j.bunch, pos, Canon::leaf(c.clone(), *b))
                && prem[1].judgment.process == **cont
                && prem[1].judgment.chan == j.chan
                && prem[1].judgment.ty == j.ty
        }
        (RuleApp::DisjRInl, Process::SelL { chan, body })
        | (RuleApp::DisjRInr, Process::SelR { chan, body }) => {
            let (a, b) = match &j.ty {
                Type::Disj(a, b) => (a, b),
                _ => return false,
            };
            let target = if matches!(d.rule, RuleApp::DisjRInl) { a } else { b };
            chan == &j.chan
                && prem.len() == 1
                && prem[0].judgment.bunch == j.bunch
                && prem[0].judgment.process == **body
                && prem[0].judgment.chan == j.chan
                && prem[0].judgment.ty == **target
        }
        (RuleApp::DisjL, Process::Branch { chan: c, left, right }) => {
            let Some(Type::Disj(a, b)) = j.bunch.leaf_type(c).cloned() else {
                return false;
            };
            c != &j.chan
                && prem.len() == 2
                && prem[0].judgment.bunch
                    == replace_leaf_plain(&j.bunch, c, Canon::leaf(c.clone(), *a))
                && prem[0].judgment.process == **left
                && prem[1].judgment.bunch
                    == replace_leaf_plain(&j.bunch, c, Canon::leaf(c.clone(), *b))
                && prem[1].judgment.process == **right
                && prem.iter().all(|q| q.judgment.chan == j.chan && q.judgment.ty == j.ty)
        }
        (RuleApp::Cut { pos, provider_bunch, provider_ty }, Process::Cut { chan: x, provider, user }) => {
            content_at(&j.bunch, pos) == *provider_bunch
                && prem.len() == 2
                && prem[0].judgment.bunch == *provider_bunch
                && prem[0].judgment.process == **provider
                && prem[0].judgment.chan == *x
                && prem[0].judgment.ty == *provider_ty
                && prem[1].judgment.bunch
                    == replace_at(&j.bunch, pos, Canon::leaf(x.clone(), provider_ty.clone()))
                && prem[1].judgment.process == **user
                && prem[1].judgment.chan == j.chan
                && prem[1].judgment.ty == j.ty
        }
        (RuleApp::Struct, Process::Spawn { binding, body }) => {
            let Some(bd) = &d.binding else { return false };
            bd.binding == *binding
                && bd.initial == j.bunch
                && bd.validate()
                && prem.len() == 1
                && prem[0].judgment.bunch == bd.result
                && prem[0].judgment.process == **body
                && prem[0].judgment.chan == j.chan
                && prem[0].judgment.ty == j.ty
        }
        _ => false,
    }
}

/// Explore the reduction graph to the given depth and re-check every
/// reachable state at the same judgment.
#[derive(Clone, Debug, Serialize)]
pub struct SubjectReductionReport {
    pub explored: usize,
    pub violations: Vec<String>,
}

pub fn check_subject_reduction(
    bunch: &Canon,
    p: &Process,
    chan: &Name,
    ty: &Type,
    steps: usize,
) -> Result<SubjectReductionReport, TypeError> {
    check(bunch, p, chan, ty)?;
    let mut supply = crate::names::FreshSupply::starting_at(50_000);
    let mut seen = std::collections::BTreeSet::new();
    let mut queue = std::collections::VecDeque::new();
    seen.insert(alpha_canon(p));
    queue.push_back((p.clone(), 0usize));
    let mut report = SubjectReductionReport { explored: 0, violations: Vec::new() };
    while let Some((cur, d)) = queue.pop_front() {
        report.explored += 1;
        if d >= steps {
            continue;
        }
        for next in crate::reduction::successors(&cur, &mut supply) {
            if !seen.insert(alpha_canon(&next)) {
                continue;
            }
            if let Err(e) = check(bunch, &next, chan, ty) {
                report.violations.push(format!("{next} no longer checks: {e}"));
            }
            queue.push_back((next, d + 1));
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Derivation scripts: node records replayed without search, for judgments
// whose cut formulas the search cannot infer.

#[derive(Debug, Clone, serde::Deserialize)]
pub struct ScriptNode {
    pub rule: String,
    pub bunch: String,
    pub process: String,
    pub chan: String,
    #[serde(rename = "type")]
    pub ty: String,
    #[serde(default)]
    pub premises: Vec<usize>,
}

/// Rebuild a derivation from script nodes. Rule payloads (splits, context
/// positions, binding steps) are reconstructed from the recorded premise
/// bunches; the result is validated node by node.
pub fn replay_script(nodes: &[ScriptNode], root: usize) -> Result<Derivation, TypeError> {
    fn build(nodes: &[ScriptNode], idx: usize, depth: usize) -> Result<Derivation, TypeError> {
        if depth > nodes.len() {
            return Err(TypeError::Script("cyclic premise indices".into()));
        }
        let node = nodes
            .get(idx)
            .ok_or_else(|| TypeError::Script(format!("node index {idx} out of range")))?;
        let bunch = crate::parse::parse_bunch(&node.bunch)
            .map_err(|e| TypeError::Script(format!("bunch: {e}")))?;
        let process = crate::parse::parse_process(&node.process)
            .map_err(|e| TypeError::Script(format!("process: {e}")))?;
        let chan = Name::plain(node.chan.clone());
        let ty = crate::parse::parse_type(&node.ty)
            .map_err(|e| TypeError::Script(format!("type: {e}")))?;
        let premises: Vec<Derivation> = node
            .premises
            .iter()
            .map(|&i| build(nodes, i, depth + 1))
            .collect::<Result<_, _>>()?;
        let judgment = Judgment { bunch: bunch.clone(), process: process.clone(), chan, ty };
        let mut binding = None;
        let rule = match node.rule.as_str() {
            "Fwd" => RuleApp::Fwd,
            "Emp-r" => RuleApp::EmpR,
            "True-r" => RuleApp::TrueR,
            "Emp-l" => RuleApp::EmpL,
            "True-l" => RuleApp::TrueL,
            "Wand-r" => RuleApp::WandR,
            "Impl-r" => RuleApp::ImplR,
            "Sep-l" => RuleApp::SepL,
            "Conj-l" => RuleApp::ConjL,
            "Disj-r-inl" => RuleApp::DisjRInl,
            "Disj-r-inr" => RuleApp::DisjRInr,
            "Disj-l" => RuleApp::DisjL,
            "Sep-r" | "Conj-r" => {
                if premises.len() != 2 {
                    return Err(TypeError::Script("pair rule needs two premises".into()));
                }
                let split = (premises[0].judgment.bunch.clone(), premises[1].judgment.bunch.clone());
                if node.rule == "Sep-r" {
                    RuleApp::SepR { split }
                } else {
                    RuleApp::ConjR { split }
                }
            }
            "Wand-l" | "Impl-l" => {
                if premises.len() != 2 {
                    return Err(TypeError::Script("arrow rule needs two premises".into()));
                }
                let kind = if node.rule == "Wand-l" { JoinKind::Semi } else { JoinKind::Comma };
                let c = match &process {
                    Process::Output { chan, .. } => chan.clone(),
                    _ => return Err(TypeError::Script("arrow-left needs an output".into())),
                };
                let arg = premises[0].judgment.bunch.clone();
                let pos = app_positions(&bunch, &c, kind, &arg.idents())
                    .into_iter()
                    .find(|(_, a)| a == &arg)
                    .map(|(pos, _)| pos)
                    .ok_or_else(|| TypeError::Script("argument bunch not found".into()))?;
                if node.rule == "Wand-l" {
                    RuleApp::WandL { pos, arg_bunch: arg }
                } else {
                    RuleApp::ImplL { pos, arg_bunch: arg }
                }
            }
            "Cut" => {
                if premises.len() != 2 {
                    return Err(TypeError::Script("cut needs two premises".into()));
                }
                let sub = premises[0].judgment.bunch.clone();
                let provider_ty = premises[0].judgment.ty.clone();
                let x = premises[0].judgment.chan.clone();
                let pos = positions_with_names(&bunch, &sub.idents())
                    .into_iter()
                    .find(|(pos, content)| {
                        content == &sub
                            && replace_at(&bunch, pos, Canon::leaf(x.clone(), provider_ty.clone()))
                                == premises[1].judgment.bunch
                    })
                    .map(|(pos, _)| pos)
                    .ok_or_else(|| TypeError::Script("provider bunch not found".into()))?;
                RuleApp::Cut { pos, provider_bunch: sub, provider_ty }
            }
            "Struct" => {
                let sigma = match &process {
                    Process::Spawn { binding, .. } => binding.clone(),
                    _ => return Err(TypeError::Script("struct needs a spawn".into())),
                };
                if premises.len() != 1 {
                    return Err(TypeError::Script("struct needs one premise".into()));
                }
                let bd = spawn::check_binding(&sigma, &bunch, &premises[0].judgment.bunch)
                    .map_err(|e| TypeError::Script(format!("binding steps: {e}")))?;
                binding = Some(bd);
                RuleApp::Struct
            }
            other => return Err(TypeError::Script(format!("unknown rule {other}"))),
        };
        Ok(Derivation { rule, judgment, premises, binding })
    }
    let deriv = build(nodes, root, 0)?;
    if !validate(&deriv) {
        return Err(TypeError::Script("derivation does not instantiate its rules".into()));
    }
    Ok(deriv)
}

fn replace_leaf_plain(bunch: &Canon, name: &Name, replacement: Canon) -> Canon {
    match bunch {
        Canon::Leaf(n, _) if n == name => replacement,
        Canon::Semi(cs) => join(
            JoinKind::Semi,
            cs.iter().map(|c| replace_leaf_plain(c, name, replacement.clone())).collect(),
        ),
        Canon::Comma(cs) => join(
            JoinKind::Comma,
            cs.iter().map(|c| replace_leaf_plain(c, name, replacement.clone())).collect(),
        ),
        other => other.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_bunch, parse_process, parse_type};

    fn check_str(bunch: &str, proc: &str, chan: &str, ty: &str) -> Result<Derivation, TypeError> {
        check(
            &parse_bunch(bunch).unwrap(),
            &parse_process(proc).unwrap(),
            &Name::plain(chan),
            &parse_type(ty).unwrap(),
        )
    }

    #[test]
    fn forwarder() {
        let d = check_str("y:@A", "fwd x <- y", "x", "@A").unwrap();
        assert_eq!(d.rule.name(), "Fwd");
    }

    #[test]
    fn unusual_example_accepted() {
        let proc = "z?(a).z?(y).spawn{a -> {a1,a2}}.y![b1].(fwd b1 <- a1 || y![b2].(fwd b2 <- a2 || fwd z <- y))";
        let d = check_str("0m", proc, "z", "@A -* (@A -> @A -> @B) -> @B").unwrap();
        assert!(validate(&d));
    }

    #[test]
    fn dill_conversion_rejected() {
        let proc = "z?(y).x![a].(fwd a <- y || fwd z <- x)";
        let err = check_str("x:@A -* @B", proc, "z", "@A -> @B").unwrap_err();
        assert!(matches!(err, TypeError::NotTypable(_)));
    }

    #[test]
    fn wand_version_accepted() {
        // the same process does check when the goal uses the wand
        let proc = "z?(y).x![a].(fwd a <- y || fwd z <- x)";
        assert!(check_str("x:@A -* @B", proc, "z", "@A -* @B").is_ok());
    }

    #[test]
    fn worked_contraction_weakening_example() {
        // new x.(z?().Q || new y.(y!() || spawn{x -> {x1,x2}; y -> {}}.R))
        let proc = "new x.(z?().x!() || new y.(y!() || spawn{x -> {x1,x2}; y -> {}}.x1?().x2?().v!()))";
        let d = check_str("0a ; z:1m", proc, "v", "1a").unwrap();
        assert!(validate(&d));
    }

    #[test]
    fn verdict_stable_under_alpha_and_bunch_equiv() {
        let p1 = check_str("(x:@A , y:1a) ; 0m", "spawn{x -> {u,w}; y -> {}}.u?(q).q?().w?(r).r?().z!()", "z", "1m");
        let p2 = check_str("0m ; (y:1a , x:@A)", "spawn{x -> {a,b}; y -> {}}.a?(c).c?().b?(d).d?().z!()", "z", "1m");
        match (&p1, &p2) {
            (Ok(_), Ok(_)) | (Err(_), Err(_)) => {}
            _ => panic!("verdicts differ: {p1:?} vs {p2:?}"),
        }
    }

    #[test]
    fn subject_reduction_on_worked_example() {
        let bunch = parse_bunch("0a ; z:1m").unwrap();
        let p = parse_process(
            "new x.(z?().x!() || new y.(y!() || spawn{x -> {x1,x2}; y -> {}}.x1?().x2?().v!()))",
        )
        .unwrap();
        let report =
            check_subject_reduction(&bunch, &p, &Name::plain("v"), &parse_type("1a").unwrap(), 3)
                .unwrap();
        assert!(report.violations.is_empty(), "{:?}", report.violations);
        assert!(report.explored > 1);
    }

    #[test]
    fn script_replay_roundtrip() {
        let nodes = vec![
            ScriptNode {
                rule: "Cut".into(),
                bunch: "y:@A".into(),
                process: "new u.(fwd u <- y || fwd x <- u)".into(),
                chan: "x".into(),
                ty: "@A".into(),
                premises: vec![1, 2],
            },
            ScriptNode {
                rule: "Fwd".into(),
                bunch: "y:@A".into(),
                process: "fwd u <- y".into(),
                chan: "u".into(),
                ty: "@A".into(),
                premises: vec![],
            },
            ScriptNode {
                rule: "Fwd".into(),
                bunch: "u:@A".into(),
                process: "fwd x <- u".into(),
                chan: "x".into(),
                ty: "@A".into(),
                premises: vec![],
            },
        ];
        let deriv = replay_script(&nodes, 0).unwrap();
        assert!(validate(&deriv));
    }

    #[test]
    fn name_preconditions_fail_fast() {
        let bunch = parse_bunch("x:@A").unwrap();
        let p = parse_process("fwd x <- y").unwrap();
        assert!(matches!(
            check(&bunch, &p, &Name::plain("x"), &Type::atom("A")),
            Err(TypeError::ChannelInBunch(_))
        ));
        let p2 = parse_process("z!()").unwrap();
        assert!(matches!(
            check(&bunch, &p2, &Name::plain("z"), &Type::OneM),
            Err(TypeError::FreeNameMismatch { .. })
        ));
    }
}
