//! Finite denotational semantics over a tag universe.
//!
//! Types denote finite sets indexed by a set of tags `D`: atoms denote `D`
//! itself, additive pairs share tags, separated pairs split them, additive
//! functions are tag-preserving tables, and multiplicative functions are
//! tables over all disjoint extensions of `D` inside the universe. A typing
//! derivation denotes a total map from bunch values to values; equality of
//! these maps over every `D` proves observational equivalence.

use crate::bunch::{Canon, JoinKind, Pos, PosContent};
use crate::names::Name;
use crate::spawn::{BindStepKind, BindingDerivation};
use crate::typing::{Derivation, RuleApp};
use crate::types::Type;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TagUniverse {
    pub size: u8,
}

impl TagUniverse {
    pub fn new(size: u8) -> Self {
        assert!(size >= 1 && size <= 16, "tag universe must have 1..=16 tags");
        TagUniverse { size }
    }

    pub fn full(&self) -> TagSet {
        TagSet((1u32 << self.size) - 1)
    }

    pub fn all_subsets(&self) -> Vec<TagSet> {
        (0..(1u32 << self.size)).map(TagSet).collect()
    }
}

impl Default for TagUniverse {
    fn default() -> Self {
        TagUniverse::new(3)
    }
}

/// A set of tags, as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TagSet(pub u32);

impl TagSet {
    pub fn empty() -> TagSet {
        TagSet(0)
    }
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
    pub fn len(self) -> u32 {
        self.0.count_ones()
    }
    pub fn union(self, other: TagSet) -> TagSet {
        TagSet(self.0 | other.0)
    }
    pub fn inter(self, other: TagSet) -> TagSet {
        TagSet(self.0 & other.0)
    }
    pub fn minus(self, other: TagSet) -> TagSet {
        TagSet(self.0 & !other.0)
    }
    pub fn disjoint(self, other: TagSet) -> bool {
        self.0 & other.0 == 0
    }
    pub fn contains(self, tag: u8) -> bool {
        self.0 & (1 << tag) != 0
    }
    pub fn tags(self) -> Vec<u8> {
        (0..32).filter(|t| self.contains(*t)).collect()
    }
    /// All subsets of this set (including empty and full).
    pub fn subsets(self) -> Vec<TagSet> {
        let mut out = vec![TagSet::empty()];
        let mut sub = self.0;
        loop {
            if sub != 0 {
                out.push(TagSet(sub));
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & self.0;
        }
        out.sort();
        out.dedup();
        out
    }
}

impl fmt::Debug for TagSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, t) in self.tags().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "t{t}")?;
        }
        write!(f, "}}")
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum SemValue {
    Unit,
    Tag(u8),
    PairConj(Box<SemValue>, Box<SemValue>),
    /// Separated pair: tag split plus components.
    PairSep(TagSet, Box<SemValue>, TagSet, Box<SemValue>),
    InjL(Box<SemValue>),
    InjR(Box<SemValue>),
    /// Additive function as an extensional table over the domain at `D`.
    FunImpl(BTreeMap<SemValue, SemValue>),
    /// Multiplicative function: keyed on a disjoint tag extension and an
    /// argument over that extension.
    FunWand(BTreeMap<(TagSet, SemValue), SemValue>),
}

impl fmt::Debug for SemValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemValue::Unit => write!(f, "*"),
            SemValue::Tag(t) => write!(f, "t{t}"),
            SemValue::PairConj(a, b) => write!(f, "({a:?}, {b:?})"),
            SemValue::PairSep(d1, a, d2, b) => {
                write!(f, "<{a:?}@{d1:?}, {b:?}@{d2:?}>")
            }
            SemValue::InjL(a) => write!(f, "inl {a:?}"),
            SemValue::InjR(a) => write!(f, "inr {a:?}"),
            SemValue::FunImpl(t) => write!(f, "fun{t:?}"),
            SemValue::FunWand(t) => {
                write!(f, "wfun{{")?;
                for (i, ((d, a), v)) in t.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "({d:?},{a:?}) -> {v:?}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

/// Value of a bunch at an ambient tag set, mirroring the canonical tree.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum BunchValue {
    Unit,
    Leaf(SemValue),
    /// Children with their disjoint tag allotments.
    Semi(Vec<(TagSet, BunchValue)>),
    Comma(Vec<BunchValue>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DenotError {
    #[error("semantic set larger than the cap of {0}")]
    SizeCap(usize),
    #[error("derivation and value shapes diverge: {0}")]
    ShapeMismatch(String),
}

pub const DEFAULT_CAP: usize = 10_000;

#[derive(Clone, Copy, Debug)]
pub struct Evaluator {
    pub universe: TagUniverse,
    pub cap: usize,
}

impl Default for Evaluator {
    fn default() -> Self {
        Evaluator { universe: TagUniverse::default(), cap: DEFAULT_CAP }
    }
}

impl Evaluator {
    pub fn new(tags: u8) -> Self {
        Evaluator { universe: TagUniverse::new(tags), cap: DEFAULT_CAP }
    }

    fn count_type(&self, ty: &Type, d: TagSet) -> Result<u128, DenotError> {
        let cap = self.cap as u128;
        let guard = |n: u128| if n > cap { Err(DenotError::SizeCap(self.cap)) } else { Ok(n) };
        match ty {
            Type::OneM => Ok(if d.is_empty() { 1 } else { 0 }),
            Type::OneA => Ok(1),
            Type::Atom(_) => Ok(d.len() as u128),
            Type::Conj(a, b) => guard(self.count_type(a, d)? * self.count_type(b, d)?),
            Type::Disj(a, b) => guard(self.count_type(a, d)? + self.count_type(b, d)?),
            Type::Sep(a, b) => {
                let mut total: u128 = 0;
                for d1 in d.subsets() {
                    let d2 = d.minus(d1);
                    total += self.count_type(a, d1)? * self.count_type(b, d2)?;
                    guard(total)?;
                }
                Ok(total)
            }
            Type::Impl(a, b) => {
                let na = self.count_type(a, d)?;
                let nb = self.count_type(b, d)?;
                checked_pow(nb, na, cap).ok_or(DenotError::SizeCap(self.cap))
            }
            Type::Wand(a, b) => {
                let mut total: u128 = 1;
                for dp in self.universe.full().minus(d).subsets() {
                    let na = self.count_type(a, dp)?;
                    let nb = self.count_type(b, d.union(dp))?;
                    let t = checked_pow(nb, na, cap).ok_or(DenotError::SizeCap(self.cap))?;
                    total = total.checked_mul(t).ok_or(DenotError::SizeCap(self.cap))?;
                    guard(total)?;
                }
                Ok(total)
            }
            Type::MVar(_) => Err(DenotError::ShapeMismatch("unresolved type placeholder".into())),
        }
    }

    /// The finite semantic set of a type at tag set `d`.
    pub fn sem_type(&self, ty: &Type, d: TagSet) -> Result<Vec<SemValue>, DenotError> {
        self.count_type(ty, d)?;
        let out = match ty {
            Type::OneM => {
                if d.is_empty() {
                    vec![SemValue::Unit]
                } else {
                    vec![]
                }
            }
            Type::OneA => vec![SemValue::Unit],
            Type::Atom(_) => d.tags().into_iter().map(SemValue::Tag).collect(),
            Type::Conj(a, b) => {
                let mut out = Vec::new();
                for va in self.sem_type(a, d)? {
                    for vb in self.sem_type(b, d)? {
                        out.push(SemValue::PairConj(Box::new(va.clone()), Box::new(vb)));
                    }
                }
                out
            }
            Type::Disj(a, b) => {
                let mut out: Vec<SemValue> = self
                    .sem_type(a, d)?
                    .into_iter()
                    .map(|v| SemValue::InjL(Box::new(v)))
                    .collect();
                out.extend(self.sem_type(b, d)?.into_iter().map(|v| SemValue::InjR(Box::new(v))));
                out
            }
            Type::Sep(a, b) => {
                let mut out = Vec::new();
                for d1 in d.subsets() {
                    let d2 = d.minus(d1);
                    for va in self.sem_type(a, d1)? {
                        for vb in self.sem_type(b, d2)? {
                            out.push(SemValue::PairSep(
                                d1,
                                Box::new(va.clone()),
                                d2,
                                Box::new(vb),
                            ));
                        }
                    }
                }
                out
            }
            Type::Impl(a, b) => {
                let dom = self.sem_type(a, d)?;
                let cod = self.sem_type(b, d)?;
                all_tables(&dom, &cod)
                    .into_iter()
                    .map(|t| SemValue::FunImpl(t.into_iter().zip(dom.iter().cloned()).map(|(v, k)| (k, v)).collect()))
                    .collect()
            }
            Type::Wand(a, b) => {
                let mut keys: Vec<(TagSet, SemValue)> = Vec::new();
                let mut cods: Vec<Vec<SemValue>> = Vec::new();
                for dp in self.universe.full().minus(d).subsets() {
                    let cod = self.sem_type(b, d.union(dp))?;
                    for va in self.sem_type(a, dp)? {
                        keys.push((dp, va));
                        cods.push(cod.clone());
                    }
                }
                let mut out: Vec<BTreeMap<(TagSet, SemValue), SemValue>> = vec![BTreeMap::new()];
                for (key, cod) in keys.iter().zip(cods.iter()) {
                    let mut next = Vec::new();
                    for table in &out {
                        for v in cod {
                            let mut t2 = table.clone();
                            t2.insert(key.clone(), v.clone());
                            next.push(t2);
                        }
                        if next.len() > self.cap {
                            return Err(DenotError::SizeCap(self.cap));
                        }
                    }
                    out = next;
                }
                out.into_iter().map(SemValue::FunWand).collect()
            }
            Type::MVar(_) => {
                return Err(DenotError::ShapeMismatch("unresolved type placeholder".into()))
            }
        };
        if out.len() > self.cap {
            return Err(DenotError::SizeCap(self.cap));
        }
        Ok(out)
    }

    /// All values of a bunch at tag set `d`.
    pub fn enumerate_bunch(&self, c: &Canon, d: TagSet) -> Result<Vec<BunchValue>, DenotError> {
        let out = match c {
            Canon::UnitM => {
                if d.is_empty() {
                    vec![BunchValue::Unit]
                } else {
                    vec![]
                }
            }
            Canon::UnitA => vec![BunchValue::Unit],
            Canon::Leaf(_, ty) => {
                self.sem_type(ty, d)?.into_iter().map(BunchValue::Leaf).collect()
            }
            Canon::Semi(cs) => {
                let mut partial: Vec<(TagSet, Vec<(TagSet, BunchValue)>)> =
                    vec![(d, Vec::new())];
                for child in cs {
                    let mut next = Vec::new();
                    for (remaining, prefix) in &partial {
                        for alloc in remaining.subsets() {
                            for v in self.enumerate_bunch(child, alloc)? {
                                let mut p2 = prefix.clone();
                                p2.push((alloc, v));
                                next.push((remaining.minus(alloc), p2));
                            }
                        }
                        if next.len() > self.cap {
                            return Err(DenotError::SizeCap(self.cap));
                        }
                    }
                    partial = next;
                }
                partial
                    .into_iter()
                    .filter(|(rem, _)| rem.is_empty())
                    .map(|(_, children)| BunchValue::Semi(children))
                    .collect()
            }
            Canon::Comma(cs) => {
                let mut out: Vec<Vec<BunchValue>> = vec![Vec::new()];
                for child in cs {
                    let vals = self.enumerate_bunch(child, d)?;
                    let mut next = Vec::new();
                    for prefix in &out {
                        for v in &vals {
                            let mut p2 = prefix.clone();
                            p2.push(v.clone());
                            next.push(p2);
                        }
                        if next.len() > self.cap {
                            return Err(DenotError::SizeCap(self.cap));
                        }
                    }
                    out = next;
                }
                out.into_iter().map(BunchValue::Comma).collect()
            }
        };
        if out.len() > self.cap {
            return Err(DenotError::SizeCap(self.cap));
        }
        Ok(out)
    }

    /// Evaluate a typing derivation at a bunch value.
    pub fn eval(
        &self,
        deriv: &Derivation,
        d: TagSet,
        v: &BunchValue,
    ) -> Result<SemValue, DenotError> {
        let bunch = &deriv.judgment.bunch;
        match &deriv.rule {
            RuleApp::Fwd => match v {
                BunchValue::Leaf(sv) => Ok(sv.clone()),
                _ => Err(shape("forwarder expects a single leaf")),
            },
            RuleApp::EmpR | RuleApp::TrueR => Ok(SemValue::Unit),
            RuleApp::EmpL | RuleApp::TrueL => {
                let c = match &deriv.judgment.process {
                    crate::syntax::Process::Wait { chan, .. } => chan.clone(),
                    _ => return Err(shape("unit-left on non-wait")),
                };
                let unit = if matches!(deriv.rule, RuleApp::EmpL) {
                    Canon::UnitM
                } else {
                    Canon::UnitA
                };
                let (nb, nv) =
                    self.replace_leaf_value(bunch, d, v, &c, unit, BunchValue::Unit)?;
                self.eval_premise(&deriv.premises[0], &nb, d, &nv)
            }
            RuleApp::SepR { split } => {
                let (t1, v1, t2, v2) =
                    self.split_value(bunch, d, v, JoinKind::Semi, &split.0, &split.1)?;
                let a = self.eval_premise(&deriv.premises[0], &split.0, t1, &v1)?;
                let b = self.eval_premise(&deriv.premises[1], &split.1, t2, &v2)?;
                Ok(SemValue::PairSep(t1, Box::new(a), t2, Box::new(b)))
            }
            RuleApp::ConjR { split } => {
                let (_, v1, _, v2) =
                    self.split_value(bunch, d, v, JoinKind::Comma, &split.0, &split.1)?;
                let a = self.eval_premise(&deriv.premises[0], &split.0, d, &v1)?;
                let b = self.eval_premise(&deriv.premises[1], &split.1, d, &v2)?;
                Ok(SemValue::PairConj(Box::new(a), Box::new(b)))
            }
            RuleApp::WandR => {
                let (arg_ty, bound) = match (&deriv.judgment.ty, &deriv.judgment.process) {
                    (Type::Wand(a, _), crate::syntax::Process::Input { bound, .. }) => {
                        (a.clone(), bound.clone())
                    }
                    _ => return Err(shape("wand-right shape")),
                };
                let mut table = BTreeMap::new();
                for dp in self.universe.full().minus(d).subsets() {
                    for a in self.sem_type(&arg_ty, dp)? {
                        let (nb, nv) = self.extend_value(
                            bunch,
                            d,
                            v,
                            JoinKind::Semi,
                            Canon::leaf(bound.clone(), (*arg_ty).clone()),
                            dp,
                            BunchValue::Leaf(a.clone()),
                        )?;
                        let r = self.eval_premise(&deriv.premises[0], &nb, d.union(dp), &nv)?;
                        table.insert((dp, a), r);
                        if table.len() > self.cap {
                            return Err(DenotError::SizeCap(self.cap));
                        }
                    }
                }
                Ok(SemValue::FunWand(table))
            }
            RuleApp::ImplR => {
                let (arg_ty, bound) = match (&deriv.judgment.ty, &deriv.judgment.process) {
                    (Type::Impl(a, _), crate::syntax::Process::Input { bound, .. }) => {
                        (a.clone(), bound.clone())
                    }
                    _ => return Err(shape("impl-right shape")),
                };
                let mut table = BTreeMap::new();
                for a in self.sem_type(&arg_ty, d)? {
                    let (nb, nv) = self.extend_value(
                        bunch,
                        d,
                        v,
                        JoinKind::Comma,
                        Canon::leaf(bound.clone(), (*arg_ty).clone()),
                        d,
                        BunchValue::Leaf(a.clone()),
                    )?;
                    let r = self.eval_premise(&deriv.premises[0], &nb, d, &nv)?;
                    table.insert(a, r);
                }
                Ok(SemValue::FunImpl(table))
            }
            RuleApp::SepL | RuleApp::ConjL => {
                let (c, bound) = match &deriv.judgment.process {
                    crate::syntax::Process::Input { chan, bound, .. } => {
                        (chan.clone(), bound.clone())
                    }
                    _ => return Err(shape("pair-left on non-input")),
                };
                let (leaf_allot, leaf_val) = self.leaf_value(bunch, d, v, &c)?;
                let ty = bunch.leaf_type(&c).cloned().ok_or_else(|| shape("missing leaf"))?;
                match (&deriv.rule, leaf_val, ty) {
                    (RuleApp::SepL, SemValue::PairSep(ta, va, tb, vb), Type::Sep(a_ty, b_ty)) => {
                        let sub = Canon::Semi(
                            {
                                let mut cs = vec![
                                    Canon::leaf(c.clone(), (*b_ty).clone()),
                                    Canon::leaf(bound.clone(), (*a_ty).clone()),
                                ];
                                cs.sort();
                                cs
                            },
                        );
                        // align allotments with the sorted children
                        let children = match &sub {
                            Canon::Semi(cs) => cs.clone(),
                            _ => unreachable!(),
                        };
                        let pairs: Vec<(TagSet, BunchValue)> = children
                            .iter()
                            .map(|ch| match ch {
                                Canon::Leaf(n, _) if n == &c => {
                                    (tb, BunchValue::Leaf((*vb).clone()))
                                }
                                _ => (ta, BunchValue::Leaf((*va).clone())),
                            })
                            .collect();
                        let _ = leaf_allot;
                        let (nb, nv) = self.replace_leaf_value(
                            bunch,
                            d,
                            v,
                            &c,
                            sub,
                            BunchValue::Semi(pairs),
                        )?;
                        self.eval_premise(&deriv.premises[0], &nb, d, &nv)
                    }
                    (RuleApp::ConjL, SemValue::PairConj(va, vb), Type::Conj(a_ty, b_ty)) => {
                        let mut cs = vec![
                            Canon::leaf(c.clone(), (*b_ty).clone()),
                            Canon::leaf(bound.clone(), (*a_ty).clone()),
                        ];
                        cs.sort();
                        let pairs: Vec<BunchValue> = cs
                            .iter()
                            .map(|ch| match ch {
                                Canon::Leaf(n, _) if n == &c => BunchValue::Leaf((*vb).clone()),
                                _ => BunchValue::Leaf((*va).clone()),
                            })
                            .collect();
                        let (nb, nv) = self.replace_leaf_value(
                            bunch,
                            d,
                            v,
                            &c,
                            Canon::Comma(cs),
                            BunchValue::Comma(pairs),
                        )?;
                        self.eval_premise(&deriv.premises[0], &nb, d, &nv)
                    }
                    _ => Err(shape("pair-left value shape")),
                }
            }
            RuleApp::WandL { pos, arg_bunch } | RuleApp::ImplL { pos, arg_bunch } => {
                let mult = matches!(deriv.rule, RuleApp::WandL { .. });
                let kind = if mult { JoinKind::Semi } else { JoinKind::Comma };
                let c = match &deriv.judgment.process {
                    crate::syntax::Process::Output { chan, .. } => chan.clone(),
                    _ => return Err(shape("arrow-left on non-output")),
                };
                let (group_c, group_t, group_v) = self.extract_at(bunch, d, v, pos)?;
                let leaf = Canon::leaf(
                    c.clone(),
                    bunch.leaf_type(&c).cloned().ok_or_else(|| shape("missing leaf"))?,
                );
                let (t_arg, v_arg, t_fun, v_fun) =
                    self.split_value(&group_c, group_t, &group_v, kind, arg_bunch, &leaf)?;
                let a = self.eval_premise(&deriv.premises[0], arg_bunch, t_arg, &v_arg)?;
                let fun = match v_fun {
                    BunchValue::Leaf(sv) => sv,
                    _ => return Err(shape("arrow-left: function side not a leaf")),
                };
                let b = if mult {
                    match fun {
                        SemValue::FunWand(table) => table
                            .get(&(t_arg, a))
                            .cloned()
                            .ok_or_else(|| shape("wand table missing key"))?,
                        _ => return Err(shape("expected wand table")),
                    }
                } else {
                    match fun {
                        SemValue::FunImpl(table) => table
                            .get(&a)
                            .cloned()
                            .ok_or_else(|| shape("impl table missing key"))?,
                        _ => return Err(shape("expected impl table")),
                    }
                };
                let cont_ty = match bunch.leaf_type(&c) {
                    Some(Type::Wand(_, b_ty)) | Some(Type::Impl(_, b_ty)) => (**b_ty).clone(),
                    _ => return Err(shape("arrow-left continuation type")),
                };
                let _ = t_fun;
                let (nb, nv) = self.replace_at_value(
                    bunch,
                    d,
                    v,
                    pos,
                    Canon::leaf(c.clone(), cont_ty),
                    BunchValue::Leaf(b),
                )?;
                self.eval_premise(&deriv.premises[1], &nb, d, &nv)
            }
            RuleApp::DisjRInl => Ok(SemValue::InjL(Box::new(self.eval_premise(
                &deriv.premises[0],
                bunch,
                d,
                v,
            )?))),
            RuleApp::DisjRInr => Ok(SemValue::InjR(Box::new(self.eval_premise(
                &deriv.premises[0],
                bunch,
                d,
                v,
            )?))),
            RuleApp::DisjL => {
                let c = match &deriv.judgment.process {
                    crate::syntax::Process::Branch { chan, .. } => chan.clone(),
                    _ => return Err(shape("disj-left on non-branch")),
                };
                let (_, leaf_val) = self.leaf_value(bunch, d, v, &c)?;
                let (a_ty, b_ty) = match bunch.leaf_type(&c) {
                    Some(Type::Disj(a, b)) => ((**a).clone(), (**b).clone()),
                    _ => return Err(shape("disj-left leaf type")),
                };
                match leaf_val {
                    SemValue::InjL(a) => {
                        let (nb, nv) = self.replace_leaf_value(
                            bunch,
                            d,
                            v,
                            &c,
                            Canon::leaf(c.clone(), a_ty),
                            BunchValue::Leaf(*a),
                        )?;
                        self.eval_premise(&deriv.premises[0], &nb, d, &nv)
                    }
                    SemValue::InjR(b) => {
                        let (nb, nv) = self.replace_leaf_value(
                            bunch,
                            d,
                            v,
                            &c,
                            Canon::leaf(c.clone(), b_ty),
                            BunchValue::Leaf(*b),
                        )?;
                        self.eval_premise(&deriv.premises[1], &nb, d, &nv)
                    }
                    _ => Err(shape("disj-left value")),
                }
            }
            RuleApp::Cut { pos, provider_bunch, provider_ty } => {
                let x = match &deriv.judgment.process {
                    crate::syntax::Process::Cut { chan, .. } => chan.clone(),
                    _ => return Err(shape("cut on non-cut")),
                };
                let (sub_c, sub_t, sub_v) = self.extract_at(bunch, d, v, pos)?;
                if &sub_c != provider_bunch {
                    return Err(shape("cut provider bunch mismatch"));
                }
                let a = self.eval_premise(&deriv.premises[0], provider_bunch, sub_t, &sub_v)?;
                let (nb, nv) = self.replace_at_value(
                    bunch,
                    d,
                    v,
                    pos,
                    Canon::leaf(x, provider_ty.clone()),
                    BunchValue::Leaf(a),
                )?;
                self.eval_premise(&deriv.premises[1], &nb, d, &nv)
            }
            RuleApp::Struct => {
                let bd = deriv.binding.as_ref().ok_or_else(|| shape("struct without binding"))?;
                let (nb, nv) = self.apply_binding(bd, d, v)?;
                self.eval_premise(&deriv.premises[0], &nb, d, &nv)
            }
        }
    }

    fn eval_premise(
        &self,
        premise: &Derivation,
        bunch: &Canon,
        d: TagSet,
        v: &BunchValue,
    ) -> Result<SemValue, DenotError> {
        if &premise.judgment.bunch != bunch {
            return Err(shape(&format!(
                "premise bunch {} vs constructed {}",
                premise.judgment.bunch, bunch
            )));
        }
        self.eval(premise, d, v)
    }

    /// The map denoted by a binding derivation, applied to one value.
    pub fn apply_binding(
        &self,
        bd: &BindingDerivation,
        d: TagSet,
        v: &BunchValue,
    ) -> Result<(Canon, BunchValue), DenotError> {
        let mut cur_b = bd.initial.clone();
        let mut cur_v = v.clone();
        for step in &bd.steps {
            if step.before != cur_b {
                return Err(shape("binding step bunch mismatch"));
            }
            let (sub_c, sub_t, sub_v) = self.extract_at(&cur_b, d, &cur_v, &step.pos)?;
            if sub_c != step.sub {
                return Err(shape("binding step content mismatch"));
            }
            let (new_c, new_v) = match step.kind {
                BindStepKind::Weaken => (Canon::UnitA, BunchValue::Unit),
                BindStepKind::Contract => {
                    // duplicate the sub-bunch value once per renamed copy
                    let mut parts: Vec<(Canon, TagSet, BunchValue)> = Vec::new();
                    for map in &step.copies {
                        let (rc, rv) = rename_value(&sub_c, &sub_v, map);
                        parts.push((rc, sub_t, rv));
                    }
                    join_values(JoinKind::Comma, parts, sub_t)?
                }
            };
            let (nb, nv) =
                self.replace_at_value(&cur_b, d, &cur_v, &step.pos, new_c, new_v)?;
            if nb != step.after {
                return Err(shape(&format!(
                    "binding step result {} expected {}",
                    nb, step.after
                )));
            }
            cur_b = nb;
            cur_v = nv;
        }
        Ok((cur_b, cur_v))
    }

    /// Tabulate the whole map of a derivation at tag set `d`.
    pub fn sem_process(
        &self,
        deriv: &Derivation,
        d: TagSet,
    ) -> Result<BTreeMap<BunchValue, SemValue>, DenotError> {
        let mut out = BTreeMap::new();
        for v in self.enumerate_bunch(&deriv.judgment.bunch, d)? {
            let r = self.eval(deriv, d, &v)?;
            out.insert(v, r);
        }
        Ok(out)
    }

    /// Tabulate the map of a binding derivation at tag set `d`.
    pub fn sem_binding(
        &self,
        bd: &BindingDerivation,
        d: TagSet,
    ) -> Result<Vec<(BunchValue, BunchValue)>, DenotError> {
        let mut out = Vec::new();
        for v in self.enumerate_bunch(&bd.initial, d)? {
            let (_, r) = self.apply_binding(bd, d, &v)?;
            out.push((v, r));
        }
        Ok(out)
    }

    /// Pointwise equality of denotations over every subset of the universe.
    pub fn denot_eq(&self, d1: &Derivation, d2: &Derivation) -> Result<bool, DenotError> {
        if d1.judgment.bunch != d2.judgment.bunch || d1.judgment.ty != d2.judgment.ty {
            return Err(shape("denotation comparison needs a shared judgment"));
        }
        for d in self.universe.all_subsets() {
            if self.sem_process(d1, d)? != self.sem_process(d2, d)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    // -- value-level bunch surgery ------------------------------------------

    fn node_children<'v>(
        &self,
        c: &Canon,
        d: TagSet,
        v: &'v BunchValue,
    ) -> Result<Vec<(Canon, TagSet, BunchValue)>, DenotError> {
        match (c, v) {
            (Canon::Semi(cs), BunchValue::Semi(vs)) if cs.len() == vs.len() => Ok(cs
                .iter()
                .zip(vs.iter())
                .map(|(ch, (t, val))| (ch.clone(), *t, val.clone()))
                .collect()),
            (Canon::Comma(cs), BunchValue::Comma(vs)) if cs.len() == vs.len() => Ok(cs
                .iter()
                .zip(vs.iter())
                .map(|(ch, val)| (ch.clone(), d, val.clone()))
                .collect()),
            _ => Err(shape("bunch value does not mirror the bunch")),
        }
    }

    fn extract_at(
        &self,
        c: &Canon,
        d: TagSet,
        v: &BunchValue,
        pos: &Pos,
    ) -> Result<(Canon, TagSet, BunchValue), DenotError> {
        let (node_c, node_t, node_v) = self.walk(c, d, v, &pos.path)?;
        match &pos.what {
            PosContent::WholeNode => Ok((node_c, node_t, node_v)),
            PosContent::Pad(kind) => Ok(match kind {
                JoinKind::Semi => (Canon::UnitM, TagSet::empty(), BunchValue::Unit),
                JoinKind::Comma => (Canon::UnitA, node_t, BunchValue::Unit),
            }),
            PosContent::Children(idx) => {
                let kind = node_c.node_kind().ok_or_else(|| shape("children at leaf"))?;
                let children = self.node_children(&node_c, node_t, &node_v)?;
                let selected: Vec<(Canon, TagSet, BunchValue)> = idx
                    .iter()
                    .map(|&i| children[i].clone())
                    .collect();
                let ambient = match kind {
                    JoinKind::Semi => selected
                        .iter()
                        .fold(TagSet::empty(), |acc, (_, t, _)| acc.union(*t)),
                    JoinKind::Comma => node_t,
                };
                join_values(kind, selected, ambient).map(|(cc, vv)| (cc, ambient, vv))
            }
        }
    }

    fn walk(
        &self,
        c: &Canon,
        d: TagSet,
        v: &BunchValue,
        path: &[usize],
    ) -> Result<(Canon, TagSet, BunchValue), DenotError> {
        let mut cur = (c.clone(), d, v.clone());
        for &i in path {
            let children = self.node_children(&cur.0, cur.1, &cur.2)?;
            cur = children
                .get(i)
                .cloned()
                .ok_or_else(|| shape("path out of bounds"))?;
        }
        Ok(cur)
    }

    /// Replace the content at `pos` (keeping its tag allotment) by a new
    /// bunch and value, re-canonicalizing on the way out.
    fn replace_at_value(
        &self,
        c: &Canon,
        d: TagSet,
        v: &BunchValue,
        pos: &Pos,
        new_c: Canon,
        new_v: BunchValue,
    ) -> Result<(Canon, BunchValue), DenotError> {
        fn go(
            ev: &Evaluator,
            c: &Canon,
            d: TagSet,
            v: &BunchValue,
            path: &[usize],
            what: &PosContent,
            new_c: Canon,
            new_v: BunchValue,
        ) -> Result<(Canon, TagSet, BunchValue), DenotError> {
            if let Some((&head, tail)) = path.split_first() {
                let kind = c.node_kind().ok_or_else(|| shape("path through leaf"))?;
                let mut children = ev.node_children(c, d, v)?;
                let (cc, ct, cv) = children[head].clone();
                let replaced = go(ev, &cc, ct, &cv, tail, what, new_c, new_v)?;
                children[head] = replaced;
                return join_values(kind, children, d).map(|(a, b)| (a, d, b));
            }
            match what {
                PosContent::WholeNode => {
                    // the new content inherits the node's allotment
                    Ok((new_c, d, new_v))
                }
                PosContent::Pad(kind) => {
                    let parts = vec![
                        (c.clone(), d, v.clone()),
                        (
                            new_c,
                            match kind {
                                JoinKind::Semi => TagSet::empty(),
                                JoinKind::Comma => d,
                            },
                            new_v,
                        ),
                    ];
                    join_values(*kind, parts, d).map(|(a, b)| (a, d, b))
                }
                PosContent::Children(idx) => {
                    let kind = c.node_kind().ok_or_else(|| shape("children at leaf"))?;
                    let children = ev.node_children(c, d, v)?;
                    let mut kept: Vec<(Canon, TagSet, BunchValue)> = children
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| !idx.contains(i))
                        .map(|(_, x)| x.clone())
                        .collect();
                    let removed_allot = match kind {
                        JoinKind::Semi => idx
                            .iter()
                            .fold(TagSet::empty(), |acc, &i| acc.union(children[i].1)),
                        JoinKind::Comma => d,
                    };
                    kept.push((new_c, removed_allot, new_v));
                    join_values(kind, kept, d).map(|(a, b)| (a, d, b))
                }
            }
        }
        go(self, c, d, v, &pos.path, &pos.what, new_c, new_v).map(|(a, _, b)| (a, b))
    }

    fn replace_leaf_value(
        &self,
        c: &Canon,
        d: TagSet,
        v: &BunchValue,
        name: &Name,
        new_c: Canon,
        new_v: BunchValue,
    ) -> Result<(Canon, BunchValue), DenotError> {
        let pos = self
            .find_leaf(c, name, &mut vec![])
            .ok_or_else(|| shape("leaf not found"))?;
        self.replace_at_value(c, d, v, &pos, new_c, new_v)
    }

    fn find_leaf(&self, c: &Canon, name: &Name, path: &mut Vec<usize>) -> Option<Pos> {
        match c {
            Canon::Leaf(n, _) if n == name => {
                Some(Pos { path: path.clone(), what: PosContent::WholeNode })
            }
            Canon::Semi(cs) | Canon::Comma(cs) => {
                for (i, ch) in cs.iter().enumerate() {
                    path.push(i);
                    if let Some(p) = self.find_leaf(ch, name, path) {
                        path.pop();
                        return Some(p);
                    }
                    path.pop();
                }
                None
            }
            _ => None,
        }
    }

    fn leaf_value(
        &self,
        c: &Canon,
        d: TagSet,
        v: &BunchValue,
        name: &Name,
    ) -> Result<(TagSet, SemValue), DenotError> {
        let pos = self
            .find_leaf(c, name, &mut vec![])
            .ok_or_else(|| shape("leaf not found"))?;
        let (_, t, bv) = self.extract_at(c, d, v, &pos)?;
        match bv {
            BunchValue::Leaf(sv) => Ok((t, sv)),
            _ => Err(shape("expected leaf value")),
        }
    }

    /// Split a valued bunch as a join of two given parts.
    fn split_value(
        &self,
        c: &Canon,
        d: TagSet,
        v: &BunchValue,
        kind: JoinKind,
        left: &Canon,
        right: &Canon,
    ) -> Result<(TagSet, BunchValue, TagSet, BunchValue), DenotError> {
        let parts: Vec<(Canon, TagSet, BunchValue)> = match (c.node_kind(), kind) {
            (Some(k), k2) if k == k2 => self.node_children(c, d, v)?,
            _ => {
                // the whole bunch is a single component of the join
                if c == &kind.unit() {
                    vec![]
                } else {
                    vec![(c.clone(), d, v.clone())]
                }
            }
        };
        let mut used = vec![false; parts.len()];
        let take = |target: &Canon, used: &mut Vec<bool>| -> Result<Vec<(Canon, TagSet, BunchValue)>, DenotError> {
            let mut selected = Vec::new();
            for comp in target.components(kind) {
                let mut found = false;
                for (i, part) in parts.iter().enumerate() {
                    if !used[i] && part.0 == comp {
                        used[i] = true;
                        selected.push(part.clone());
                        found = true;
                        break;
                    }
                }
                if !found {
                    return Err(shape(&format!("split component {comp} not found in {c}")));
                }
            }
            Ok(selected)
        };
        let left_parts = take(left, &mut used)?;
        let right_parts = take(right, &mut used)?;
        if used.iter().any(|u| !u) {
            return Err(shape("split leaves unused components"));
        }
        let allot = |sel: &[(Canon, TagSet, BunchValue)]| match kind {
            JoinKind::Semi => sel.iter().fold(TagSet::empty(), |acc, (_, t, _)| acc.union(*t)),
            JoinKind::Comma => d,
        };
        let (t1, t2) = (allot(&left_parts), allot(&right_parts));
        let (lc, lv) = join_values(kind, left_parts, t1)?;
        let (rc, rv) = join_values(kind, right_parts, t2)?;
        if &lc != left || &rc != right {
            return Err(shape("split reassembly mismatch"));
        }
        Ok((t1, lv, t2, rv))
    }

    /// Join an extra component onto a valued bunch.
    #[allow(clippy::too_many_arguments)]
    fn extend_value(
        &self,
        c: &Canon,
        d: TagSet,
        v: &BunchValue,
        kind: JoinKind,
        extra_c: Canon,
        extra_t: TagSet,
        extra_v: BunchValue,
    ) -> Result<(Canon, BunchValue), DenotError> {
        let ambient = match kind {
            JoinKind::Semi => d.union(extra_t),
            JoinKind::Comma => d,
        };
        let mut parts = match (c.node_kind(), kind) {
            (Some(k), k2) if k == k2 => self.node_children(c, d, v)?,
            _ => {
                if c == &kind.unit() {
                    vec![]
                } else {
                    vec![(c.clone(), d, v.clone())]
                }
            }
        };
        parts.push((extra_c, extra_t, extra_v));
        join_values(kind, parts, ambient)
    }
}

fn shape(msg: &str) -> DenotError {
    DenotError::ShapeMismatch(msg.to_string())
}

fn checked_pow(base: u128, exp: u128, cap: u128) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
        if acc > cap * cap {
            return None;
        }
    }
    Some(acc)
}

/// All total tables from `dom` (by position) into `cod`.
fn all_tables(dom: &[SemValue], cod: &[SemValue]) -> Vec<Vec<SemValue>> {
    let mut out: Vec<Vec<SemValue>> = vec![Vec::new()];
    for _ in dom {
        let mut next = Vec::new();
        for prefix in &out {
            for v in cod {
                let mut p2 = prefix.clone();
                p2.push(v.clone());
                next.push(p2);
            }
        }
        out = next;
    }
    out
}

/// Canonicalizing join of valued bunches: flattens same-kind nodes, drops
/// the kind's unit, and sorts children together with their values.
fn join_values(
    kind: JoinKind,
    parts: Vec<(Canon, TagSet, BunchValue)>,
    ambient: TagSet,
) -> Result<(Canon, BunchValue), DenotError> {
    let mut flat: Vec<(Canon, TagSet, BunchValue)> = Vec::new();
    for (c, t, v) in parts {
        match (kind, &c, &v) {
            (JoinKind::Semi, Canon::Semi(cs), BunchValue::Semi(vs)) => {
                for (ch, (ct, cv)) in cs.iter().zip(vs.iter()) {
                    flat.push((ch.clone(), *ct, cv.clone()));
                }
            }
            (JoinKind::Comma, Canon::Comma(cs), BunchValue::Comma(vs)) => {
                for (ch, cv) in cs.iter().zip(vs.iter()) {
                    flat.push((ch.clone(), t, cv.clone()));
                }
            }
            (JoinKind::Semi, Canon::UnitM, _) => {
                if !t.is_empty() {
                    return Err(shape("multiplicative unit with nonempty tags"));
                }
            }
            (JoinKind::Comma, Canon::UnitA, _) => {}
            _ => flat.push((c, t, v)),
        }
    }
    flat.sort_by(|a, b| a.0.cmp(&b.0));
    match flat.len() {
        0 => Ok(match kind {
            JoinKind::Semi => (Canon::UnitM, BunchValue::Unit),
            JoinKind::Comma => (Canon::UnitA, BunchValue::Unit),
        }),
        1 => {
            let (c, _, v) = flat.pop().unwrap();
            Ok((c, v))
        }
        _ => match kind {
            JoinKind::Semi => {
                let canon = Canon::Semi(flat.iter().map(|(c, _, _)| c.clone()).collect());
                let value =
                    BunchValue::Semi(flat.into_iter().map(|(_, t, v)| (t, v)).collect());
                Ok((canon, value))
            }
            JoinKind::Comma => {
                let _ = ambient;
                let canon = Canon::Comma(flat.iter().map(|(c, _, _)| c.clone()).collect());
                let value = BunchValue::Comma(flat.into_iter().map(|(_, _, v)| v).collect());
                Ok((canon, value))
            }
        },
    }
}

/// Rename the leaves of a valued bunch, re-sorting values alongside.
fn rename_value(c: &Canon, v: &BunchValue, map: &BTreeMap<Name, Name>) -> (Canon, BunchValue) {
    match (c, v) {
        (Canon::Leaf(n, t), val) => (
            Canon::Leaf(map.get(n).cloned().unwrap_or_else(|| n.clone()), t.clone()),
            val.clone(),
        ),
        (Canon::Semi(cs), BunchValue::Semi(vs)) => {
            let mut pairs: Vec<(Canon, (TagSet, BunchValue))> = cs
                .iter()
                .zip(vs.iter())
                .map(|(ch, (t, cv))| {
                    let (rc, rv) = rename_value(ch, cv, map);
                    (rc, (*t, rv))
                })
                .collect();
            pairs.sort_by(|a, b| a.0.cmp(&b.0));
            (
                Canon::Semi(pairs.iter().map(|(c, _)| c.clone()).collect()),
                BunchValue::Semi(pairs.into_iter().map(|(_, tv)| tv).collect()),
            )
        }
        (Canon::Comma(cs), BunchValue::Comma(vs)) => {
            let mut pairs: Vec<(Canon, BunchValue)> = cs
                .iter()
                .zip(vs.iter())
                .map(|(ch, cv)| rename_value(ch, cv, map))
                .collect();
            pairs.sort_by(|a, b| a.0.cmp(&b.0));
            (
                Canon::Comma(pairs.iter().map(|(c, _)| c.clone()).collect()),
                BunchValue::Comma(pairs.into_iter().map(|(_, v)| v).collect()),
            )
        }
        _ => (c.clone(), v.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_bunch, parse_process, parse_type};
    use crate::typing::check;

    fn ev(tags: u8) -> Evaluator {
        Evaluator::new(tags)
    }

    fn deriv(bunch: &str, proc: &str, chan: &str, ty: &str) -> Derivation {
        check(
            &parse_bunch(bunch).unwrap(),
            &parse_process(proc).unwrap(),
            &Name::plain(chan),
            &parse_type(ty).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn atom_denotes_its_tags() {
        let e = ev(2);
        let d = TagSet(0b11);
        let vals = e.sem_type(&Type::atom("s"), d).unwrap();
        assert_eq!(vals, vec![SemValue::Tag(0), SemValue::Tag(1)]);
        // multiplicative unit inhabits only the empty tag set
        assert_eq!(e.sem_type(&Type::OneM, d).unwrap().len(), 0);
        assert_eq!(e.sem_type(&Type::OneM, TagSet::empty()).unwrap().len(), 1);
        assert_eq!(e.sem_type(&Type::OneA, d).unwrap().len(), 1);
    }

    #[test]
    fn sep_of_atoms_counts_splits() {
        let e = ev(2);
        let d = TagSet(0b11);
        let vals = e
            .sem_type(&Type::sep(Type::atom("s"), Type::atom("s")), d)
            .unwrap();
        // exactly the two one-one splits
        assert_eq!(vals.len(), 2);
    }

    #[test]
    fn forwarder_is_identity() {
        let e = ev(2);
        let d = deriv("y:@s", "fwd x <- y", "x", "@s");
        for ts in e.universe.all_subsets() {
            for v in e.enumerate_bunch(&d.judgment.bunch, ts).unwrap() {
                let out = e.eval(&d, ts, &v).unwrap();
                assert_eq!(BunchValue::Leaf(out), v);
            }
        }
    }

    #[test]
    fn provenance_conj_duplicates_tag() {
        // spawn{y -> {y1,y2}}.x![a].(fwd a <- y1 || fwd x <- y2) at y:@s |- x:@s /\ @s
        let e = ev(2);
        let d = deriv(
            "y:@s",
            "spawn{y -> {y1,y2}}.x![a].(fwd a <- y1 || fwd x <- y2)",
            "x",
            "@s /\\ @s",
        );
        for ts in e.universe.all_subsets() {
            for v in e.enumerate_bunch(&d.judgment.bunch, ts).unwrap() {
                let BunchValue::Leaf(SemValue::Tag(t)) = &v else { panic!() };
                let out = e.eval(&d, ts, &v).unwrap();
                assert_eq!(
                    out,
                    SemValue::PairConj(
                        Box::new(SemValue::Tag(*t)),
                        Box::new(SemValue::Tag(*t))
                    )
                );
            }
        }
    }

    #[test]
    fn provenance_sep_separates_tags() {
        let e = ev(2);
        let d = deriv(
            "y:@s1 ; w:@s2",
            "x![a].(fwd a <- y || fwd x <- w)",
            "x",
            "@s1 * @s2",
        );
        let mut seen_any = false;
        for ts in e.universe.all_subsets() {
            for v in e.enumerate_bunch(&d.judgment.bunch, ts).unwrap() {
                let out = e.eval(&d, ts, &v).unwrap();
                let SemValue::PairSep(d1, a, d2, b) = out else { panic!() };
                assert!(d1.disjoint(d2));
                if let (SemValue::Tag(t1), SemValue::Tag(t2)) = (*a, *b) {
                    assert_ne!(t1, t2);
                    seen_any = true;
                }
            }
        }
        assert!(seen_any);
    }

    #[test]
    fn reduction_preserves_denotation_basic() {
        let e = ev(2);
        let before = deriv(
            "y:@s",
            "new u.(fwd u <- y || fwd x <- u)",
            "x",
            "@s",
        );
        let after = deriv("y:@s", "fwd x <- y", "x", "@s");
        assert!(e.denot_eq(&before, &after).unwrap());
    }
}
