//! Spawn bindings and their typing against bunch transformations.
//!
//! A spawn binding maps names to pairwise-disjoint name sets: an empty image
//! disposes of a session, an n-element image duplicates it n times. Bindings
//! compose by merge, and a binding is typed by factoring it into elementary
//! contraction and weakening steps that transform one bunch into another.

use crate::bunch::{self, all_positions, join, replace_at, Canon, JoinKind, Pos};
use crate::names::Name;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SpawnBinding {
    map: BTreeMap<Name, BTreeSet<Name>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BindingError {
    #[error("images of {0} and {1} overlap")]
    OverlappingImages(Name, Name),
    #[error("name {0} is both mapped and a restriction")]
    DomainMeetsRestrictions(Name),
}

impl SpawnBinding {
    pub fn empty() -> Self {
        SpawnBinding::default()
    }

    pub fn new(map: BTreeMap<Name, BTreeSet<Name>>) -> Result<Self, BindingError> {
        let keys: Vec<&Name> = map.keys().collect();
        for (i, x) in keys.iter().enumerate() {
            for y in &keys[i + 1..] {
                if map[*x].intersection(&map[*y]).next().is_some() {
                    return Err(BindingError::OverlappingImages((*x).clone(), (*y).clone()));
                }
            }
        }
        for (x, img) in &map {
            for k in map.keys() {
                if img.contains(k) {
                    return Err(BindingError::DomainMeetsRestrictions(k.clone()));
                }
            }
            let _ = x;
        }
        Ok(SpawnBinding { map })
    }

    pub fn singleton(x: Name, image: impl IntoIterator<Item = Name>) -> Self {
        let mut map = BTreeMap::new();
        map.insert(x, image.into_iter().collect());
        SpawnBinding::new(map).expect("singleton binding is valid")
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn domain(&self) -> BTreeSet<Name> {
        self.map.keys().cloned().collect()
    }

    pub fn restrictions(&self) -> BTreeSet<Name> {
        self.map.values().flatten().cloned().collect()
    }

    /// Domain plus restrictions.
    pub fn names(&self) -> BTreeSet<Name> {
        let mut out = self.domain();
        out.extend(self.restrictions());
        out
    }

    pub fn get(&self, x: &Name) -> Option<&BTreeSet<Name>> {
        self.map.get(x)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &BTreeSet<Name>)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn remove(&self, xs: &BTreeSet<Name>) -> SpawnBinding {
        SpawnBinding {
            map: self
                .map
                .iter()
                .filter(|(k, _)| !xs.contains(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Rename domain names (used by substitution on processes).
    pub fn rename_domain(&self, map: &BTreeMap<Name, Name>) -> Result<SpawnBinding, BindingError> {
        SpawnBinding::new(
            self.map
                .iter()
                .map(|(k, v)| (map.get(k).cloned().unwrap_or_else(|| k.clone()), v.clone()))
                .collect(),
        )
    }

    /// Rename restriction names (used when renaming apart).
    pub fn rename_restrictions(
        &self,
        map: &BTreeMap<Name, Name>,
    ) -> Result<SpawnBinding, BindingError> {
        SpawnBinding::new(
            self.map
                .iter()
                .map(|(k, v)| {
                    (
                        k.clone(),
                        v.iter()
                            .map(|n| map.get(n).cloned().unwrap_or_else(|| n.clone()))
                            .collect(),
                    )
                })
                .collect(),
        )
    }

    /// All four disjointness conditions for independence.
    pub fn independent(&self, other: &SpawnBinding) -> bool {
        let (d1, r1) = (self.domain(), self.restrictions());
        let (d2, r2) = (other.domain(), other.restrictions());
        d1.intersection(&d2).next().is_none()
            && d1.intersection(&r2).next().is_none()
            && r1.intersection(&r2).next().is_none()
            && d2.intersection(&r1).next().is_none()
    }

    /// The raw merge formula. `sigma2[X]` collects images of the second
    /// binding over X; names in the first binding's restrictions that the
    /// second binding does not consume survive.
    pub fn raw_merge(&self, other: &SpawnBinding) -> BTreeMap<Name, BTreeSet<Name>> {
        let mut out = BTreeMap::new();
        let r1 = self.restrictions();
        for (x, img) in &self.map {
            let mut new_img = BTreeSet::new();
            for y in img {
                match other.map.get(y) {
                    Some(ys) => new_img.extend(ys.iter().cloned()),
                    None => {
                        new_img.insert(y.clone());
                    }
                }
            }
            out.insert(x.clone(), new_img);
        }
        for (x, img) in &other.map {
            if !self.map.contains_key(x) && !r1.contains(x) {
                out.insert(x.clone(), img.clone());
            }
        }
        out
    }

    /// Merge, checking that the result is again a valid binding.
    pub fn merge(&self, other: &SpawnBinding) -> Result<SpawnBinding, BindingError> {
        SpawnBinding::new(self.raw_merge(other))
    }
}

impl FromIterator<(Name, BTreeSet<Name>)> for SpawnBinding {
    fn from_iter<T: IntoIterator<Item = (Name, BTreeSet<Name>)>>(iter: T) -> Self {
        SpawnBinding::new(iter.into_iter().collect()).expect("valid binding literal")
    }
}

impl fmt::Display for SpawnBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.map.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{k} -> {{")?;
            for (j, n) in v.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{n}")?;
            }
            write!(f, "}}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for SpawnBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{self}]")
    }
}

impl Serialize for SpawnBinding {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.map.len()))?;
        for (k, v) in &self.map {
            let names: Vec<String> = v.iter().map(|n| n.to_string()).collect();
            seq.serialize_element(&(k.to_string(), names))?;
        }
        seq.end()
    }
}

/// One elementary step of a binding derivation, applied to a canonical bunch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BindStep {
    pub kind: BindStepKind,
    /// Position of the affected sub-bunch in `before`.
    pub pos: Pos,
    /// The affected sub-bunch.
    pub sub: Canon,
    /// Per-copy leaf renamings (contractions only; weakenings have none).
    pub copies: Vec<BTreeMap<Name, Name>>,
    pub binding: SpawnBinding,
    pub before: Canon,
    pub after: Canon,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BindStepKind {
    Contract,
    Weaken,
}

/// Factorization of a binding as a sequence of elementary steps transforming
/// one bunch into another.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BindingDerivation {
    pub binding: SpawnBinding,
    pub initial: Canon,
    pub steps: Vec<BindStep>,
    pub result: Canon,
}

impl BindingDerivation {
    /// Replay the steps and verify both the bunch trajectory and that the
    /// merge of the step bindings equals the derived binding.
    pub fn validate(&self) -> bool {
        let mut cur = self.initial.clone();
        let mut acc = SpawnBinding::empty();
        for step in &self.steps {
            if step.before != cur {
                return false;
            }
            let replayed = apply_step_shape(&cur, step);
            if replayed.as_ref() != Some(&step.after) {
                return false;
            }
            cur = step.after.clone();
            acc = match acc.merge(&step.binding) {
                Ok(b) => b,
                Err(_) => return false,
            };
        }
        cur == self.result && acc == self.binding
    }
}

fn apply_step_shape(cur: &Canon, step: &BindStep) -> Option<Canon> {
    if bunch::content_at(cur, &step.pos) != step.sub {
        return None;
    }
    let new_content = match step.kind {
        BindStepKind::Weaken => Canon::UnitA,
        BindStepKind::Contract => join(
            JoinKind::Comma,
            step.copies.iter().map(|m| step.sub.rename_leaves(m)).collect(),
        ),
    };
    Some(replace_at(cur, &step.pos, new_content))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BindCheckError {
    /// Search space exhausted: no factorization exists within the step model.
    NotTypable,
    /// The step bound tripped somewhere; absence of a derivation is not conclusive.
    BoundExhausted,
}

impl fmt::Display for BindCheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BindCheckError::NotTypable => write!(f, "binding is not typable at these bunches"),
            BindCheckError::BoundExhausted => write!(f, "binding search bound exhausted"),
        }
    }
}

fn count_unitm_leaves(c: &Canon) -> usize {
    match c {
        Canon::UnitM => 1,
        Canon::Semi(cs) | Canon::Comma(cs) => cs.iter().map(count_unitm_leaves).sum(),
        _ => 0,
    }
}

struct BindSearch {
    target: Option<Canon>,
    sigma: SpawnBinding,
    unit_budget: usize,
    hit_bound: bool,
    visited: BTreeSet<(Vec<(Name, Vec<Name>)>, Canon, usize)>,
    found: Vec<(Canon, Vec<BindStep>)>,
    max_results: usize,
}

fn binding_key(b: &SpawnBinding) -> Vec<(Name, Vec<Name>)> {
    b.iter()
        .map(|(k, v)| (k.clone(), v.iter().cloned().collect()))
        .collect()
}

impl BindSearch {
    fn run(&mut self, cur: &Canon, rem: &SpawnBinding, unit_left: usize, steps: &mut Vec<BindStep>) {
        if self.found.len() >= self.max_results {
            return;
        }
        if rem.is_empty() {
            match &self.target {
                Some(t) => {
                    if cur == t {
                        self.found.push((cur.clone(), steps.clone()));
                        return;
                    }
                }
                None => {
                    self.found.push((cur.clone(), steps.clone()));
                    // keep exploring unit moves for further targets
                }
            }
        }
        let key = (binding_key(rem), cur.clone(), unit_left);
        if !self.visited.insert(key) {
            return;
        }

        // Contractions first, then weakenings, positions in enumeration order.
        let positions = all_positions(cur);
        for (pos, sub) in &positions {
            let names = sub.idents();
            if names.is_empty() {
                continue;
            }
            let sizes: BTreeSet<usize> = names
                .iter()
                .map(|n| rem.get(n).map(|s| s.len()).unwrap_or(usize::MAX))
                .collect();
            if sizes.len() != 1 {
                continue;
            }
            let n = *sizes.iter().next().unwrap();
            if n == usize::MAX || n == 0 {
                continue; // not all mapped, or a weakening
            }
            // Copies must be fresh with respect to the rest of the bunch.
            let outside: BTreeSet<Name> =
                cur.idents().difference(&names).cloned().collect();
            if names.iter().any(|x| rem.get(x).unwrap().intersection(&outside).next().is_some()) {
                continue;
            }
            for assignment in copy_assignments(&names, rem, n) {
                let step_binding = SpawnBinding::new(
                    names.iter().map(|x| (x.clone(), rem.get(x).unwrap().clone())).collect(),
                )
                .expect("sub-binding of a valid binding");
                let after = {
                    let copies_bunches: Vec<Canon> =
                        assignment.iter().map(|m| sub.rename_leaves(m)).collect();
                    replace_at(cur, pos, join(JoinKind::Comma, copies_bunches))
                };
                let step = BindStep {
                    kind: BindStepKind::Contract,
                    pos: pos.clone(),
                    sub: sub.clone(),
                    copies: assignment,
                    binding: step_binding,
                    before: cur.clone(),
                    after: after.clone(),
                };
                let rest = rem.remove(&names);
                steps.push(step);
                self.run(&after, &rest, unit_left, steps);
                steps.pop();
                if self.found.len() >= self.max_results {
                    return;
                }
            }
        }
        // Named weakenings.
        for (pos, sub) in &positions {
            let names = sub.idents();
            if names.is_empty() {
                continue;
            }
            if !names.iter().all(|x| rem.get(x).map(|s| s.is_empty()).unwrap_or(false)) {
                continue;
            }
            let after = replace_at(cur, pos, Canon::UnitA);
            let step_binding = SpawnBinding::new(
                names.iter().map(|x| (x.clone(), BTreeSet::new())).collect(),
            )
            .unwrap();
            let step = BindStep {
                kind: BindStepKind::Weaken,
                pos: pos.clone(),
                sub: sub.clone(),
                copies: vec![],
                binding: step_binding,
                before: cur.clone(),
                after: after.clone(),
            };
            let rest = rem.remove(&names);
            steps.push(step);
            self.run(&after, &rest, unit_left, steps);
            steps.pop();
            if self.found.len() >= self.max_results {
                return;
            }
        }
        // Unit housekeeping: weaken a nameless sub-bunch away. These steps
        // carry the empty binding and are bounded separately.
        if unit_left == 0 {
            self.hit_bound = true;
            return;
        }
        for (pos, sub) in &positions {
            if !sub.idents().is_empty() {
                continue;
            }
            let after = replace_at(cur, pos, Canon::UnitA);
            if &after == cur {
                continue;
            }
            let step = BindStep {
                kind: BindStepKind::Weaken,
                pos: pos.clone(),
                sub: sub.clone(),
                copies: vec![],
                binding: SpawnBinding::empty(),
                before: cur.clone(),
                after: after.clone(),
            };
            steps.push(step);
            self.run(&after, &SpawnBinding::empty().merge(rem).unwrap(), unit_left - 1, steps);
            steps.pop();
            if self.found.len() >= self.max_results {
                return;
            }
        }
        // Unit contraction: duplicate a nameless sub-bunch containing a 0m.
        for (pos, sub) in &positions {
            if !sub.idents().is_empty() || count_unitm_leaves(sub) == 0 {
                continue;
            }
            let after = replace_at(
                cur,
                pos,
                join(JoinKind::Comma, vec![sub.clone(), sub.clone()]),
            );
            if &after == cur {
                continue;
            }
            let step = BindStep {
                kind: BindStepKind::Contract,
                pos: pos.clone(),
                sub: sub.clone(),
                copies: vec![BTreeMap::new(), BTreeMap::new()],
                binding: SpawnBinding::empty(),
                before: cur.clone(),
                after: after.clone(),
            };
            steps.push(step);
            self.run(&after, rem, unit_left - 1, steps);
            steps.pop();
            if self.found.len() >= self.max_results {
                return;
            }
        }
    }
}

/// Orderings of each name's image; the smallest name keeps sorted order so
/// uniform reindexings are not enumerated twice.
fn copy_assignments(
    names: &BTreeSet<Name>,
    rem: &SpawnBinding,
    n: usize,
) -> Vec<Vec<BTreeMap<Name, Name>>> {
    let names: Vec<&Name> = names.iter().collect();
    let mut per_name_orders: Vec<Vec<Vec<Name>>> = Vec::new();
    for (i, x) in names.iter().enumerate() {
        let img: Vec<Name> = rem.get(x).unwrap().iter().cloned().collect();
        if i == 0 {
            per_name_orders.push(vec![img]);
        } else {
            per_name_orders.push(permutations(&img));
        }
    }
    let mut out = Vec::new();
    let mut choice = vec![0usize; names.len()];
    loop {
        let mut assignment: Vec<BTreeMap<Name, Name>> = vec![BTreeMap::new(); n];
        for (i, x) in names.iter().enumerate() {
            let order = &per_name_orders[i][choice[i]];
            for (copy_idx, copy_name) in order.iter().enumerate() {
                assignment[copy_idx].insert((*x).clone(), copy_name.clone());
            }
        }
        out.push(assignment);
        // advance mixed-radix counter
        let mut k = names.len();
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            choice[k] += 1;
            if choice[k] < per_name_orders[k].len() {
                break;
            }
            choice[k] = 0;
        }
    }
}

fn permutations(items: &[Name]) -> Vec<Vec<Name>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (i, x) in items.iter().enumerate() {
        let mut rest: Vec<Name> = items.to_vec();
        rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, x.clone());
            out.push(tail);
        }
    }
    out
}

fn unit_budget_for(d1: &Canon, d2: Option<&Canon>) -> usize {
    1 + count_unitm_leaves(d1) + d2.map(count_unitm_leaves).unwrap_or(1)
}

/// Derive `sigma : d1 ~> d2`: a factorization into elementary steps whose
/// merge is `sigma` and whose replay transforms `d1` into `d2`.
pub fn check_binding(
    sigma: &SpawnBinding,
    d1: &Canon,
    d2: &Canon,
) -> Result<BindingDerivation, BindCheckError> {
    let mut search = BindSearch {
        target: Some(d2.clone()),
        sigma: sigma.clone(),
        unit_budget: unit_budget_for(d1, Some(d2)),
        hit_bound: false,
        visited: BTreeSet::new(),
        found: Vec::new(),
        max_results: 1,
    };
    let budget = search.unit_budget;
    search.run(d1, sigma, budget, &mut Vec::new());
    if let Some((result, steps)) = search.found.into_iter().next() {
        let deriv = BindingDerivation {
            binding: search.sigma,
            initial: d1.clone(),
            steps,
            result,
        };
        debug_assert!(deriv.validate());
        return Ok(deriv);
    }
    if search.hit_bound {
        Err(BindCheckError::BoundExhausted)
    } else {
        Err(BindCheckError::NotTypable)
    }
}

/// Enumerate result bunches `d2` with derivations `sigma : d1 ~> d2`.
/// Used by the type checker at spawn prefixes, where the premise bunch is
/// not given. Deduplicates on the result bunch.
pub fn enumerate_targets(
    sigma: &SpawnBinding,
    d1: &Canon,
    max_results: usize,
) -> Vec<BindingDerivation> {
    let mut search = BindSearch {
        target: None,
        sigma: sigma.clone(),
        unit_budget: unit_budget_for(d1, None),
        hit_bound: false,
        visited: BTreeSet::new(),
        found: Vec::new(),
        max_results,
    };
    let budget = search.unit_budget;
    search.run(d1, sigma, budget, &mut Vec::new());
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (result, steps) in search.found {
        if seen.insert(result.clone()) {
            let deriv = BindingDerivation {
                binding: sigma.clone(),
                initial: d1.clone(),
                steps,
                result,
            };
            debug_assert!(deriv.validate());
            out.push(deriv);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Type;

    fn n(s: &str) -> Name {
        Name::plain(s)
    }

    fn set(names: &[&str]) -> BTreeSet<Name> {
        names.iter().map(|s| n(s)).collect()
    }

    fn binding(entries: &[(&str, &[&str])]) -> SpawnBinding {
        SpawnBinding::new(
            entries
                .iter()
                .map(|(k, vs)| (n(k), vs.iter().map(|v| n(v)).collect()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn independence() {
        let s1 = binding(&[("x", &["x1", "x2"])]);
        let s2 = binding(&[("y", &["y1"])]);
        assert!(s1.independent(&s2));

        let s3 = binding(&[("x", &["x1"])]);
        let s4 = binding(&[("x1", &["x2"])]);
        assert!(!s3.independent(&s4));

        assert!(s1.independent(&SpawnBinding::empty()));
    }

    #[test]
    fn merge_worked_example() {
        let s1 = binding(&[("x", &[]), ("y", &["y1", "y2", "y3"])]);
        let s2 = binding(&[("y2", &[]), ("y3", &["y4", "y5"]), ("z", &["z1"])]);
        let merged = s1.merge(&s2).unwrap();
        let expected = binding(&[("x", &[]), ("y", &["y1", "y4", "y5"]), ("z", &["z1"])]);
        assert_eq!(merged, expected);
    }

    #[test]
    fn merge_neutral_element() {
        let s = binding(&[("x", &["x1"]), ("y", &[])]);
        assert_eq!(s.merge(&SpawnBinding::empty()).unwrap(), s);
        assert_eq!(SpawnBinding::empty().merge(&s).unwrap(), s);
    }

    #[test]
    fn merge_of_independent_is_union() {
        let s1 = binding(&[("x", &["x1", "x2"])]);
        let s2 = binding(&[("y", &["y1"])]);
        let merged = s1.merge(&s2).unwrap();
        assert_eq!(merged, binding(&[("x", &["x1", "x2"]), ("y", &["y1"])]));
    }

    #[test]
    fn invalid_merge_detected() {
        let s1 = binding(&[("x", &["a"])]);
        let s2 = binding(&[("b", &["x"])]);
        assert!(s1.merge(&s2).is_err());
    }

    fn bunch_of(text: &str) -> Canon {
        crate::parse::parse_bunch(text).unwrap()
    }

    #[test]
    fn psi_binding_derivation() {
        // contract x into x1,x2 then weaken y
        let sigma = binding(&[("x", &["x1", "x2"]), ("y", &[])]);
        let d1 = bunch_of("x:@A , y:1a");
        let d2 = bunch_of("x1:@A , x2:@A");
        let deriv = check_binding(&sigma, &d1, &d2).unwrap();
        assert_eq!(deriv.steps.len(), 2);
        assert_eq!(deriv.steps[0].kind, BindStepKind::Contract);
        assert_eq!(deriv.steps[1].kind, BindStepKind::Weaken);
        assert!(deriv.validate());
    }

    #[test]
    fn trivial_empty_derivation() {
        let d = bunch_of("x:@A ; y:@B");
        let deriv = check_binding(&SpawnBinding::empty(), &d, &d).unwrap();
        assert!(deriv.steps.is_empty());
    }

    #[test]
    fn empty_spawn_weakens_multiplicative_unit() {
        // {} : G(0m) ~> G(0a)
        let d1 = bunch_of("0m");
        let d2 = bunch_of("0a");
        let deriv = check_binding(&SpawnBinding::empty(), &d1, &d2).unwrap();
        assert_eq!(deriv.steps.len(), 1);
        assert_eq!(deriv.steps[0].kind, BindStepKind::Weaken);

        // and not the other way around
        assert_eq!(
            check_binding(&SpawnBinding::empty(), &d2, &d1),
            Err(BindCheckError::NotTypable)
        );
    }

    #[test]
    fn contract_needs_comma_attachment_afterwards() {
        // x:@A ~> x1:@A , x2:@A
        let sigma = binding(&[("x", &["x1", "x2"])]);
        let d1 = Canon::leaf(n("x"), Type::atom("A"));
        let d2 = bunch_of("x1:@A , x2:@A");
        assert!(check_binding(&sigma, &d1, &d2).is_ok());
        // but never into a semicolon join
        let bad = bunch_of("x1:@A ; x2:@A");
        assert!(check_binding(&sigma, &d1, &bad).is_err());
    }

    #[test]
    fn enumerate_targets_finds_weaken_and_contract() {
        let sigma = binding(&[("x", &["x1", "x2"])]);
        let d1 = bunch_of("x:@A , y:@B");
        let targets = enumerate_targets(&sigma, &d1, 16);
        assert!(targets
            .iter()
            .any(|d| d.result == bunch_of("x1:@A , x2:@A , y:@B")));
        let _ = set(&[]);
    }
}
