//! Bunches: typing contexts shaped as trees over two join constructors.
//!
//! `;` joins resources multiplicatively (unit `0m`), `,` additively (unit
//! `0a`). Bunches are compared modulo the commutative monoid laws of both
//! joins; we decide the congruence by reducing to a canonical form that
//! flattens nested joins, drops join-matching units, and sorts children.

use crate::names::{FreshSupply, Name};
use crate::types::Type;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Surface bunch tree, as parsed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Bunch {
    UnitM,
    UnitA,
    Leaf(Name, Type),
    Semi(Box<Bunch>, Box<Bunch>),
    Comma(Box<Bunch>, Box<Bunch>),
}

/// A bunch with hole markers, filled positionally.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BunchedContext {
    Hole(usize),
    UnitM,
    UnitA,
    Leaf(Name, Type),
    Semi(Box<BunchedContext>, Box<BunchedContext>),
    Comma(Box<BunchedContext>, Box<BunchedContext>),
}

impl BunchedContext {
    pub fn hole_count(&self) -> usize {
        match self {
            BunchedContext::Hole(_) => 1,
            BunchedContext::Semi(a, b) | BunchedContext::Comma(a, b) => {
                a.hole_count() + b.hole_count()
            }
            _ => 0,
        }
    }

    /// Fill hole `i` with `fillers[i]`.
    pub fn fill(&self, fillers: &[Bunch]) -> Bunch {
        match self {
            BunchedContext::Hole(i) => fillers[*i].clone(),
            BunchedContext::UnitM => Bunch::UnitM,
            BunchedContext::UnitA => Bunch::UnitA,
            BunchedContext::Leaf(n, t) => Bunch::Leaf(n.clone(), t.clone()),
            BunchedContext::Semi(a, b) => {
                Bunch::Semi(Box::new(a.fill(fillers)), Box::new(b.fill(fillers)))
            }
            BunchedContext::Comma(a, b) => {
                Bunch::Comma(Box::new(a.fill(fillers)), Box::new(b.fill(fillers)))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum JoinKind {
    Semi,
    Comma,
}

impl JoinKind {
    pub fn unit(self) -> Canon {
        match self {
            JoinKind::Semi => Canon::UnitM,
            JoinKind::Comma => Canon::UnitA,
        }
    }
}

/// Canonical bunch. Join nodes are n-ary (len >= 2), never nest a node of
/// the same kind, never contain their own unit, and keep children sorted.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Canon {
    UnitM,
    UnitA,
    Leaf(Name, Type),
    Semi(Vec<Canon>),
    Comma(Vec<Canon>),
}

impl Canon {
    pub fn canon(b: &Bunch) -> Canon {
        match b {
            Bunch::UnitM => Canon::UnitM,
            Bunch::UnitA => Canon::UnitA,
            Bunch::Leaf(n, t) => Canon::Leaf(n.clone(), t.clone()),
            Bunch::Semi(a, b) => join(JoinKind::Semi, vec![Canon::canon(a), Canon::canon(b)]),
            Bunch::Comma(a, b) => join(JoinKind::Comma, vec![Canon::canon(a), Canon::canon(b)]),
        }
    }

    pub fn leaf(n: Name, t: Type) -> Canon {
        Canon::Leaf(n, t)
    }

    pub fn node_kind(&self) -> Option<JoinKind> {
        match self {
            Canon::Semi(_) => Some(JoinKind::Semi),
            Canon::Comma(_) => Some(JoinKind::Comma),
            _ => None,
        }
    }

    pub fn children(&self) -> &[Canon] {
        match self {
            Canon::Semi(cs) | Canon::Comma(cs) => cs,
            _ => &[],
        }
    }

    /// Components of this bunch when viewed as a join of the given kind.
    pub fn components(&self, kind: JoinKind) -> Vec<Canon> {
        match (self, kind) {
            (Canon::Semi(cs), JoinKind::Semi) => cs.clone(),
            (Canon::Comma(cs), JoinKind::Comma) => cs.clone(),
            (Canon::UnitM, JoinKind::Semi) => vec![],
            (Canon::UnitA, JoinKind::Comma) => vec![],
            _ => vec![self.clone()],
        }
    }

    pub fn idents(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_idents(&mut out);
        out
    }

    fn collect_idents(&self, out: &mut BTreeSet<Name>) {
        match self {
            Canon::Leaf(n, _) => {
                out.insert(n.clone());
            }
            Canon::Semi(cs) | Canon::Comma(cs) => {
                for c in cs {
                    c.collect_idents(out);
                }
            }
            _ => {}
        }
    }

    pub fn leaf_type(&self, name: &Name) -> Option<&Type> {
        match self {
            Canon::Leaf(n, t) if n == name => Some(t),
            Canon::Semi(cs) | Canon::Comma(cs) => cs.iter().find_map(|c| c.leaf_type(name)),
            _ => None,
        }
    }

    /// Every leaf is a unit.
    pub fn is_empty_bunch(&self) -> bool {
        self.idents().is_empty()
    }

    /// Every typed leaf carries an atomic type.
    pub fn is_atomic_bunch(&self) -> bool {
        match self {
            Canon::UnitM | Canon::UnitA => true,
            Canon::Leaf(_, t) => t.is_atom(),
            Canon::Semi(cs) | Canon::Comma(cs) => cs.iter().all(|c| c.is_atomic_bunch()),
        }
    }

    /// Apply a leaf-name substitution (types untouched).
    pub fn rename_leaves(&self, map: &BTreeMap<Name, Name>) -> Canon {
        match self {
            Canon::Leaf(n, t) => {
                Canon::Leaf(map.get(n).cloned().unwrap_or_else(|| n.clone()), t.clone())
            }
            Canon::Semi(cs) => join(
                JoinKind::Semi,
                cs.iter().map(|c| c.rename_leaves(map)).collect(),
            ),
            Canon::Comma(cs) => join(
                JoinKind::Comma,
                cs.iter().map(|c| c.rename_leaves(map)).collect(),
            ),
            other => other.clone(),
        }
    }

    /// Apply a type substitution to every leaf.
    pub fn map_types(&self, f: &impl Fn(&Type) -> Type) -> Canon {
        match self {
            Canon::Leaf(n, t) => Canon::Leaf(n.clone(), f(t)),
            Canon::Semi(cs) => join(JoinKind::Semi, cs.iter().map(|c| c.map_types(f)).collect()),
            Canon::Comma(cs) => {
                join(JoinKind::Comma, cs.iter().map(|c| c.map_types(f)).collect())
            }
            other => other.clone(),
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Canon::Leaf(_, t) => t.is_ground(),
            Canon::Semi(cs) | Canon::Comma(cs) => cs.iter().all(|c| c.is_ground()),
            _ => true,
        }
    }
}

impl fmt::Display for Canon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn show(c: &Canon, f: &mut fmt::Formatter<'_>, nested: bool) -> fmt::Result {
            match c {
                Canon::UnitM => write!(f, "0m"),
                Canon::UnitA => write!(f, "0a"),
                Canon::Leaf(n, t) => write!(f, "{n}:{t}"),
                Canon::Semi(cs) | Canon::Comma(cs) => {
                    let sep = if matches!(c, Canon::Semi(_)) { " ; " } else { " , " };
                    if nested {
                        write!(f, "(")?;
                    }
                    for (i, child) in cs.iter().enumerate() {
                        if i > 0 {
                            write!(f, "{sep}")?;
                        }
                        show(child, f, true)?;
                    }
                    if nested {
                        write!(f, ")")?;
                    }
                    Ok(())
                }
            }
        }
        show(self, f, false)
    }
}

impl fmt::Debug for Canon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl Serialize for Canon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Canonicalizing n-ary join: flattens same-kind children, drops the kind's
/// unit, sorts, and collapses empty/singleton results.
pub fn join(kind: JoinKind, parts: Vec<Canon>) -> Canon {
    let mut flat: Vec<Canon> = Vec::new();
    for p in parts {
        match (kind, p) {
            (JoinKind::Semi, Canon::Semi(cs)) => flat.extend(cs),
            (JoinKind::Comma, Canon::Comma(cs)) => flat.extend(cs),
            (JoinKind::Semi, Canon::UnitM) => {}
            (JoinKind::Comma, Canon::UnitA) => {}
            (_, other) => flat.push(other),
        }
    }
    flat.sort();
    match flat.len() {
        0 => kind.unit(),
        1 => flat.pop().unwrap(),
        _ => match kind {
            JoinKind::Semi => Canon::Semi(flat),
            JoinKind::Comma => Canon::Comma(flat),
        },
    }
}

pub fn bunch_equiv(a: &Bunch, b: &Bunch) -> bool {
    Canon::canon(a) == Canon::canon(b)
}

/// All ordered ways to present `c` as a `kind`-join of two bunches, modulo
/// equivalence. Computed as bipartitions of the canonical components, with
/// the kind's unit standing in for the empty side.
pub fn splits(c: &Canon, kind: JoinKind) -> Vec<(Canon, Canon)> {
    let comps = c.components(kind);
    let n = comps.len();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        let mut left = Vec::new();
        let mut right = Vec::new();
        for (i, comp) in comps.iter().enumerate() {
            if mask & (1 << i) != 0 {
                left.push(comp.clone());
            } else {
                right.push(comp.clone());
            }
        }
        let pair = (join(kind, left), join(kind, right));
        if seen.insert(pair.clone()) {
            out.push(pair);
        }
    }
    out
}

/// Like `splits`, but the left part must carry exactly `left_names`.
pub fn splits_by_names(
    c: &Canon,
    kind: JoinKind,
    left_names: &BTreeSet<Name>,
) -> Vec<(Canon, Canon)> {
    splits(c, kind)
        .into_iter()
        .filter(|(l, _)| &l.idents() == left_names)
        .collect()
}

/// A position inside a canonical bunch: a path of child indices followed by
/// a description of the content at the final node.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub path: Vec<usize>,
    pub what: PosContent,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PosContent {
    /// The node at the path itself.
    WholeNode,
    /// A subset of children of the (join) node at the path.
    Children(Vec<usize>),
    /// A virtual unit attached to the node at the path by the given kind;
    /// the content reads as that unit and replacement joins new content in.
    Pad(JoinKind),
}

impl Pos {
    pub fn whole() -> Pos {
        Pos { path: vec![], what: PosContent::WholeNode }
    }
}

fn node_at<'a>(c: &'a Canon, path: &[usize]) -> &'a Canon {
    let mut cur = c;
    for &i in path {
        cur = &cur.children()[i];
    }
    cur
}

/// The sub-bunch a position denotes.
pub fn content_at(c: &Canon, pos: &Pos) -> Canon {
    let node = node_at(c, &pos.path);
    match &pos.what {
        PosContent::WholeNode => node.clone(),
        PosContent::Children(idx) => {
            let kind = node.node_kind().expect("children position at non-join node");
            join(kind, idx.iter().map(|&i| node.children()[i].clone()).collect())
        }
        PosContent::Pad(kind) => kind.unit(),
    }
}

/// Replace the content at `pos` with `new_content`, re-canonicalizing.
pub fn replace_at(c: &Canon, pos: &Pos, new_content: Canon) -> Canon {
    fn go(node: &Canon, path: &[usize], what: &PosContent, new_content: Canon) -> Canon {
        if let Some((&head, tail)) = path.split_first() {
            let kind = node.node_kind().expect("path descends through non-join node");
            let mut parts: Vec<Canon> = node.children().to_vec();
            let inner = go(&parts[head], tail, what, new_content);
            parts[head] = inner;
            return join(kind, parts);
        }
        match what {
            PosContent::WholeNode => new_content,
            PosContent::Children(idx) => {
                let kind = node.node_kind().expect("children position at non-join node");
                let keep: Vec<Canon> = node
                    .children()
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !idx.contains(i))
                    .map(|(_, ch)| ch.clone())
                    .collect();
                let mut parts = keep;
                parts.push(new_content);
                join(kind, parts)
            }
            PosContent::Pad(kind) => join(*kind, vec![node.clone(), new_content]),
        }
    }
    go(c, &pos.path, &pos.what, new_content)
}

/// All positions of sub-bunches whose name set is exactly `names`.
///
/// For a nonempty name set this walks to the minimal covering node and
/// enumerates child subsets there, padded with any subset of its nameless
/// children. For the empty set it enumerates nameless child subsets at every
/// node plus virtual unit paddings of both kinds at every node.
pub fn positions_with_names(c: &Canon, names: &BTreeSet<Name>) -> Vec<(Pos, Canon)> {
    let mut out = Vec::new();
    if names.is_empty() {
        collect_nameless_positions(c, &mut vec![], &mut out);
    } else {
        collect_named_positions(c, names, &mut vec![], &mut out);
    }
    out
}

fn collect_named_positions(
    node: &Canon,
    names: &BTreeSet<Name>,
    path: &mut Vec<usize>,
    out: &mut Vec<(Pos, Canon)>,
) {
    if &node.idents() == names {
        out.push((Pos { path: path.clone(), what: PosContent::WholeNode }, node.clone()));
    }
    let children = node.children();
    if children.is_empty() {
        return;
    }
    // Children owning a wanted name must be taken whole; fail if one of them
    // also carries unwanted names.
    let mut mandatory: Vec<usize> = Vec::new();
    let mut nameless: Vec<usize> = Vec::new();
    let mut covered = BTreeSet::new();
    for (i, ch) in children.iter().enumerate() {
        let ids = ch.idents();
        if ids.is_empty() {
            nameless.push(i);
        } else if names.is_superset(&ids) {
            mandatory.push(i);
            covered.extend(ids);
        } else if ids.intersection(names).next().is_some() {
            // Mixed child: the only hope is that it contains all the names;
            // recurse into it and stop here.
            if ids.is_superset(names) {
                path.push(i);
                collect_named_positions(ch, names, path, out);
                path.pop();
            }
            return;
        }
    }
    if covered != *names {
        // Names spread over children of different nodes; when a single child
        // holds everything, the mixed-child branch above already recursed.
        if let Some(i) = children.iter().position(|ch| ch.idents().is_superset(names)) {
            path.push(i);
            collect_named_positions(&children[i], names, path, out);
            path.pop();
        }
        return;
    }
    // Recurse when a single mandatory child covers everything.
    if mandatory.len() == 1 && children[mandatory[0]].idents() == *names {
        let i = mandatory[0];
        path.push(i);
        collect_named_positions(&children[i], names, path, out);
        path.pop();
    }
    let kind = node.node_kind().unwrap();
    // Subsets at this node: mandatory children plus any subset of nameless ones.
    for mask in 0u32..(1 << nameless.len()) {
        let mut idx = mandatory.clone();
        for (k, &i) in nameless.iter().enumerate() {
            if mask & (1 << k) != 0 {
                idx.push(i);
            }
        }
        if idx.len() == children.len() {
            continue; // identical to the WholeNode position
        }
        idx.sort_unstable();
        let content = join(kind, idx.iter().map(|&i| children[i].clone()).collect());
        out.push((Pos { path: path.clone(), what: PosContent::Children(idx) }, content));
    }
}

fn collect_nameless_positions(node: &Canon, path: &mut Vec<usize>, out: &mut Vec<(Pos, Canon)>) {
    if node.idents().is_empty() {
        out.push((Pos { path: path.clone(), what: PosContent::WholeNode }, node.clone()));
    }
    for kind in [JoinKind::Semi, JoinKind::Comma] {
        out.push((Pos { path: path.clone(), what: PosContent::Pad(kind) }, kind.unit()));
    }
    let children = node.children();
    if children.is_empty() {
        return;
    }
    let kind = node.node_kind().unwrap();
    let nameless: Vec<usize> = children
        .iter()
        .enumerate()
        .filter(|(_, ch)| ch.idents().is_empty())
        .map(|(i, _)| i)
        .collect();
    for mask in 1u32..(1 << nameless.len()) {
        let idx: Vec<usize> = nameless
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .map(|(_, &i)| i)
            .collect();
        if idx.len() == children.len() {
            continue;
        }
        if idx.len() == 1 {
            // Covered by recursion as that child's WholeNode position.
            continue;
        }
        let content = join(kind, idx.iter().map(|&i| children[i].clone()).collect());
        out.push((Pos { path: path.clone(), what: PosContent::Children(idx) }, content));
    }
    for (i, ch) in children.iter().enumerate() {
        path.push(i);
        collect_nameless_positions(ch, path, out);
        path.pop();
    }
}

/// All sub-bunch positions (whole node and child subsets everywhere).
/// Used by the spawn-binding search, filtered by the caller.
pub fn all_positions(c: &Canon) -> Vec<(Pos, Canon)> {
    let mut out = Vec::new();
    fn go(node: &Canon, path: &mut Vec<usize>, out: &mut Vec<(Pos, Canon)>) {
        out.push((Pos { path: path.clone(), what: PosContent::WholeNode }, node.clone()));
        let children = node.children();
        if children.is_empty() {
            return;
        }
        let kind = node.node_kind().unwrap();
        let n = children.len();
        for mask in 1u32..(1 << n) {
            let idx: Vec<usize> =
                (0..n).filter(|i| mask & (1 << i) != 0).collect();
            if idx.len() == n || idx.len() == 1 {
                continue; // whole node / child positions come from recursion
            }
            let content = join(kind, idx.iter().map(|&i| children[i].clone()).collect());
            out.push((Pos { path: path.clone(), what: PosContent::Children(idx) }, content));
        }
        for (i, ch) in children.iter().enumerate() {
            path.push(i);
            go(ch, path, out);
            path.pop();
        }
    }
    go(c, &mut vec![], &mut out);
    out
}

/// Positions for using a leaf `x` through a `kind`-joined argument bunch
/// carrying exactly `arg_names`. Returns the argument bunch and the position
/// of the whole group `(arg ∘ x)`, so the caller can substitute the
/// continuation leaf for it.
pub fn app_positions(
    c: &Canon,
    x: &Name,
    kind: JoinKind,
    arg_names: &BTreeSet<Name>,
) -> Vec<(Pos, Canon)> {
    assert!(!arg_names.contains(x));
    let mut group = arg_names.clone();
    group.insert(x.clone());
    positions_with_names(c, &group)
        .into_iter()
        .filter_map(|(pos, content)| {
            // content must read as (arg `kind` x-leaf)
            let comps = content.components(kind);
            let mut arg_parts = Vec::new();
            let mut found = false;
            for comp in comps {
                match comp {
                    Canon::Leaf(ref n, _) if n == x => found = true,
                    other => arg_parts.push(other),
                }
            }
            if !found {
                // single leaf content with empty arg names reads as (unit ∘ x)
                if let Canon::Leaf(n, _) = &content {
                    if n == x && arg_names.is_empty() {
                        return Some((pos, kind.unit()));
                    }
                }
                return None;
            }
            let arg = join(kind, arg_parts);
            if &arg.idents() == arg_names {
                Some((pos, arg))
            } else {
                None
            }
        })
        .collect()
}

/// Rename every leaf name `a` to a fresh copy indexed by `i`.
pub fn indexed_bunch_renaming(
    c: &Canon,
    i: u32,
    supply: &mut FreshSupply,
    avoid: &BTreeSet<Name>,
) -> (Canon, BTreeMap<Name, Name>) {
    let mut avoid = avoid.clone();
    avoid.extend(c.idents());
    let mut map = BTreeMap::new();
    for name in c.idents() {
        let copy = supply.fresh_copy(&name, i, &avoid);
        avoid.insert(copy.clone());
        map.insert(name, copy);
    }
    (c.rename_leaves(&map), map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Type;

    fn leaf(n: &str, t: Type) -> Bunch {
        Bunch::Leaf(Name::plain(n), t)
    }

    #[test]
    fn monoid_laws() {
        // (d1 ; 0m) , d2  ==  d2 , d1
        let d1 = leaf("x", Type::atom("s"));
        let d2 = leaf("y", Type::OneA);
        let lhs = Bunch::Comma(
            Box::new(Bunch::Semi(Box::new(d1.clone()), Box::new(Bunch::UnitM))),
            Box::new(d2.clone()),
        );
        let rhs = Bunch::Comma(Box::new(d2.clone()), Box::new(d1.clone()));
        assert!(bunch_equiv(&lhs, &rhs));
    }

    #[test]
    fn join_kinds_not_interchangeable() {
        let a = Bunch::Semi(
            Box::new(leaf("x", Type::atom("a"))),
            Box::new(leaf("y", Type::atom("b"))),
        );
        let b = Bunch::Comma(
            Box::new(leaf("x", Type::atom("a"))),
            Box::new(leaf("y", Type::atom("b"))),
        );
        assert!(!bunch_equiv(&a, &b));
    }

    #[test]
    fn unit_law_additive() {
        let a = Bunch::UnitA;
        let b = Bunch::Comma(Box::new(Bunch::UnitA), Box::new(Bunch::UnitA));
        assert!(bunch_equiv(&a, &b));
    }

    #[test]
    fn multiplicative_units_do_not_collapse_under_comma() {
        let a = Bunch::UnitM;
        let b = Bunch::Comma(Box::new(Bunch::UnitM), Box::new(Bunch::UnitM));
        assert!(!bunch_equiv(&a, &b));
    }

    #[test]
    fn empty_and_atomic() {
        let b = Bunch::Comma(
            Box::new(Bunch::UnitM),
            Box::new(Bunch::Semi(Box::new(Bunch::UnitA), Box::new(Bunch::UnitM))),
        );
        assert!(Canon::canon(&b).is_empty_bunch());

        let at = Bunch::Semi(
            Box::new(Bunch::Comma(
                Box::new(leaf("x", Type::atom("s1"))),
                Box::new(leaf("y", Type::atom("s2"))),
            )),
            Box::new(leaf("z", Type::atom("s3"))),
        );
        assert!(Canon::canon(&at).is_atomic_bunch());

        let not = leaf("x", Type::OneM);
        let c = Canon::canon(&not);
        assert!(!c.is_empty_bunch());
        assert!(!c.is_atomic_bunch());
    }

    #[test]
    fn semi_split_of_comma_bunch_needs_unit_padding() {
        let b = Canon::canon(&Bunch::Comma(
            Box::new(leaf("x", Type::atom("a"))),
            Box::new(leaf("y", Type::atom("b"))),
        ));
        let ss = splits(&b, JoinKind::Semi);
        assert_eq!(ss.len(), 2);
        assert!(ss.contains(&(b.clone(), Canon::UnitM)));
        assert!(ss.contains(&(Canon::UnitM, b.clone())));
    }

    #[test]
    fn indexed_renaming_examples() {
        let mut supply = FreshSupply::new();
        let c = Canon::canon(&Bunch::Comma(
            Box::new(leaf("a", Type::atom("A"))),
            Box::new(leaf("y", Type::atom("B"))),
        ));
        let (renamed, map) = indexed_bunch_renaming(&c, 1, &mut supply, &BTreeSet::new());
        assert_eq!(map[&Name::plain("a")], Name::indexed("a", 1));
        assert_eq!(map[&Name::plain("y")], Name::indexed("y", 1));
        assert_eq!(
            renamed.idents(),
            [Name::indexed("a", 1), Name::indexed("y", 1)].into_iter().collect()
        );

        let (u, _) = indexed_bunch_renaming(&Canon::UnitM, 3, &mut supply, &BTreeSet::new());
        assert_eq!(u, Canon::UnitM);

        let single = Canon::leaf(Name::plain("x"), Type::atom("A"));
        let (r, _) = indexed_bunch_renaming(&single, 2, &mut supply, &BTreeSet::new());
        assert_eq!(r, Canon::leaf(Name::indexed("x", 2), Type::atom("A")));
    }

    #[test]
    fn replace_roundtrip() {
        let c = Canon::canon(&Bunch::Semi(
            Box::new(Bunch::Comma(
                Box::new(leaf("x", Type::atom("a"))),
                Box::new(leaf("y", Type::atom("b"))),
            )),
            Box::new(leaf("z", Type::atom("c"))),
        ));
        for (pos, content) in all_positions(&c) {
            let back = replace_at(&c, &pos, content.clone());
            assert_eq!(back, c, "position {pos:?} content {content}");
        }
    }
}
