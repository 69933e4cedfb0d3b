//! The reduction relation: communication, forwarding, selection, and the
//! spawn rules, closed under evaluation contexts and structural congruence.
//!
//! Congruence classes are finite (the three congruence rules only reshuffle
//! cuts and independent spawn prefixes), so they are materialized by search
//! and redexes are matched in every representative.

use crate::names::{FreshSupply, Name};
use crate::spawn::SpawnBinding;
use crate::syntax::{alpha_canon, subst_map, substitute, Process};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum RedRule {
    CommR,
    CommL,
    UnitR,
    UnitL,
    Case,
    FwdR,
    FwdL,
    Spawn,
    SpawnR,
    SpawnL,
    SpawnMerge,
}

impl RedRule {
    pub fn is_communication(self) -> bool {
        matches!(
            self,
            RedRule::CommR
                | RedRule::CommL
                | RedRule::UnitR
                | RedRule::UnitL
                | RedRule::Case
                | RedRule::FwdR
                | RedRule::FwdL
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            RedRule::CommR => "red-comm-r",
            RedRule::CommL => "red-comm-l",
            RedRule::UnitR => "red-unit-r",
            RedRule::UnitL => "red-unit-l",
            RedRule::Case => "red-case",
            RedRule::FwdR => "red-fwd-r",
            RedRule::FwdL => "red-fwd-l",
            RedRule::Spawn => "red-spawn",
            RedRule::SpawnR => "red-spawn-r",
            RedRule::SpawnL => "red-spawn-l",
            RedRule::SpawnMerge => "red-spawn-merge",
        }
    }
}

/// One step into an evaluation context.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum PathStep {
    SpawnBody,
    CutLeft,
    CutRight,
}

pub type Path = Vec<PathStep>;

#[derive(Clone, Debug, Serialize)]
pub struct Redex {
    pub rule: RedRule,
    /// Evaluation-context address inside the witness.
    pub path: Path,
    /// Congruent representative in which the rule fires; equals the source
    /// process when no congruence step was needed.
    #[serde(serialize_with = "crate::typing::ser_process")]
    pub witness: Process,
    /// BFS distance of the witness inside the congruence class.
    pub congruence_steps: usize,
    /// The contractum, renamed apart.
    #[serde(serialize_with = "crate::typing::ser_process")]
    pub result: Process,
}

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error("stale redex: rule {0} no longer matches")]
    StaleRedex(&'static str),
}

const CONGRUENCE_CAP: usize = 20_000;

/// The finite congruence class of `p`, as concrete representatives paired
/// with their BFS distance from `p`.
pub fn congruence_class(p: &Process) -> Vec<(Process, usize)> {
    let mut seen: BTreeSet<Process> = BTreeSet::new();
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    seen.insert(alpha_canon(p));
    queue.push_back((p.clone(), 0usize));
    while let Some((cur, dist)) = queue.pop_front() {
        out.push((cur.clone(), dist));
        if out.len() >= CONGRUENCE_CAP {
            break;
        }
        for next in congruence_rewrites(&cur) {
            let key = alpha_canon(&next);
            if seen.insert(key) {
                queue.push_back((next, dist + 1));
            }
        }
    }
    out
}

pub fn congruent(p: &Process, q: &Process) -> bool {
    let target = alpha_canon(q);
    congruence_class(p).iter().any(|(r, _)| alpha_canon(r) == target)
}

/// All single congruence rewrites anywhere in the term.
fn congruence_rewrites(p: &Process) -> Vec<Process> {
    let mut out = root_congruences(p);
    let mut push_sub = |rebuild: &dyn Fn(Process) -> Process, sub: &Process| {
        for r in congruence_rewrites(sub) {
            out.push(rebuild(r));
        }
    };
    match p {
        Process::Output { chan, payload, body, cont } => {
            push_sub(
                &|b| Process::Output {
                    chan: chan.clone(),
                    payload: payload.clone(),
                    body: Box::new(b),
                    cont: cont.clone(),
                },
                body,
            );
            push_sub(
                &|c| Process::Output {
                    chan: chan.clone(),
                    payload: payload.clone(),
                    body: body.clone(),
                    cont: Box::new(c),
                },
                cont,
            );
        }
        Process::Input { chan, bound, body } => push_sub(
            &|b| Process::Input { chan: chan.clone(), bound: bound.clone(), body: Box::new(b) },
            body,
        ),
        Process::Wait { chan, body } => push_sub(
            &|b| Process::Wait { chan: chan.clone(), body: Box::new(b) },
            body,
        ),
        Process::SelL { chan, body } => push_sub(
            &|b| Process::SelL { chan: chan.clone(), body: Box::new(b) },
            body,
        ),
        Process::SelR { chan, body } => push_sub(
            &|b| Process::SelR { chan: chan.clone(), body: Box::new(b) },
            body,
        ),
        Process::Branch { chan, left, right } => {
            push_sub(
                &|l| Process::Branch { chan: chan.clone(), left: Box::new(l), right: right.clone() },
                left,
            );
            push_sub(
                &|r| Process::Branch { chan: chan.clone(), left: left.clone(), right: Box::new(r) },
                right,
            );
        }
        Process::Cut { chan, provider, user } => {
            push_sub(
                &|pr| Process::Cut { chan: chan.clone(), provider: Box::new(pr), user: user.clone() },
                provider,
            );
            push_sub(
                &|u| Process::Cut { chan: chan.clone(), provider: provider.clone(), user: Box::new(u) },
                user,
            );
        }
        Process::Spawn { binding, body } => push_sub(
            &|b| Process::Spawn { binding: binding.clone(), body: Box::new(b) },
            body,
        ),
        _ => {}
    }
    out
}

fn root_congruences(p: &Process) -> Vec<Process> {
    let mut out = Vec::new();
    match p {
        // new x.(P || new y.(Q || R))
        Process::Cut { chan: x, provider: p1, user } => {
            if let Process::Cut { chan: y, provider: q, user: r } = &**user {
                let fp = p1.free_names();
                let fq = q.free_names();
                let fr = r.free_names();
                // cong-assoc-l: ~ new y.(Q || new x.(P || R))
                if !fq.contains(x) && !fp.contains(y) {
                    out.push(Process::cut(
                        y.clone(),
                        (**q).clone(),
                        Process::cut(x.clone(), (**p1).clone(), (**r).clone()),
                    ));
                }
                // cong-assoc-r: ~ new y.(new x.(P || Q) || R)
                if !fr.contains(x) && !fp.contains(y) {
                    out.push(Process::cut(
                        y.clone(),
                        Process::cut(x.clone(), (**p1).clone(), (**q).clone()),
                        (**r).clone(),
                    ));
                }
            }
            // reverse of cong-assoc-r: new y.(new x.(P || Q) || R) ~ new x.(P || new y.(Q || R))
            if let Process::Cut { chan: x2, provider: p2, user: q2 } = &**p1 {
                let y = x;
                let r = user;
                if !r.free_names().contains(x2) && !p2.free_names().contains(y) {
                    out.push(Process::cut(
                        x2.clone(),
                        (**p2).clone(),
                        Process::cut(y.clone(), (**q2).clone(), (**r).clone()),
                    ));
                }
            }
        }
        // cong-spawn-swap for independent bindings
        Process::Spawn { binding: s1, body } => {
            if let Process::Spawn { binding: s2, body: inner } = &**body {
                if s1.independent(s2) {
                    out.push(Process::spawn(
                        s2.clone(),
                        Process::spawn(s1.clone(), (**inner).clone()),
                    ));
                }
            }
        }
        _ => {}
    }
    out
}

fn focus_at<'a>(p: &'a Process, path: &[PathStep]) -> Option<&'a Process> {
    let mut cur = p;
    for step in path {
        cur = match (step, cur) {
            (PathStep::SpawnBody, Process::Spawn { body, .. }) => body,
            (PathStep::CutLeft, Process::Cut { provider, .. }) => provider,
            (PathStep::CutRight, Process::Cut { user, .. }) => user,
            _ => return None,
        };
    }
    Some(cur)
}

fn rebuild_at(p: &Process, path: &[PathStep], new_focus: Process) -> Process {
    match path.split_first() {
        None => new_focus,
        Some((step, rest)) => match (step, p) {
            (PathStep::SpawnBody, Process::Spawn { binding, body }) => Process::Spawn {
                binding: binding.clone(),
                body: Box::new(rebuild_at(body, rest, new_focus)),
            },
            (PathStep::CutLeft, Process::Cut { chan, provider, user }) => Process::Cut {
                chan: chan.clone(),
                provider: Box::new(rebuild_at(provider, rest, new_focus)),
                user: user.clone(),
            },
            (PathStep::CutRight, Process::Cut { chan, provider, user }) => Process::Cut {
                chan: chan.clone(),
                provider: provider.clone(),
                user: Box::new(rebuild_at(user, rest, new_focus)),
            },
            _ => unreachable!("path mismatch during rebuild"),
        },
    }
}

/// Match the reduction rules at the root of `focus`; returns contracta.
fn root_reductions(
    focus: &Process,
    supply: &mut FreshSupply,
    avoid: &BTreeSet<Name>,
) -> Vec<(RedRule, Process)> {
    let mut out = Vec::new();
    match focus {
        Process::Cut { chan: x, provider, user } => {
            match (&**provider, &**user) {
                // red-comm-r: new x.(x?(y).Q || x![y].(P1 || P2))
                (
                    Process::Input { chan: ic, bound, body: q },
                    Process::Output { chan: oc, payload, body: p1, cont: p2 },
                ) if ic == x && oc == x => {
                    let q2 = substitute(q, bound, payload);
                    out.push((
                        RedRule::CommR,
                        Process::cut(
                            x.clone(),
                            Process::cut(payload.clone(), (**p1).clone(), q2),
                            (**p2).clone(),
                        ),
                    ));
                }
                // red-comm-l: new x.(x![y].(P1 || P2) || x?(y).Q)
                (
                    Process::Output { chan: oc, payload, body: p1, cont: p2 },
                    Process::Input { chan: ic, bound, body: q },
                ) if ic == x && oc == x => {
                    let q2 = substitute(q, bound, payload);
                    out.push((
                        RedRule::CommL,
                        Process::cut(
                            x.clone(),
                            (**p2).clone(),
                            Process::cut(payload.clone(), (**p1).clone(), q2),
                        ),
                    ));
                }
                // red-unit-r: new x.(x?().Q || x!())
                (Process::Wait { chan: wc, body: q }, Process::Close { chan: cc })
                    if wc == x && cc == x =>
                {
                    out.push((RedRule::UnitR, (**q).clone()));
                }
                // red-unit-l
                (Process::Close { chan: cc }, Process::Wait { chan: wc, body: q })
                    if wc == x && cc == x =>
                {
                    out.push((RedRule::UnitL, (**q).clone()));
                }
                // red-case
                (Process::SelL { chan: sc, body: p }, Process::Branch { chan: bc, left, .. })
                    if sc == x && bc == x =>
                {
                    out.push((
                        RedRule::Case,
                        Process::cut(x.clone(), (**p).clone(), (**left).clone()),
                    ));
                }
                (Process::SelR { chan: sc, body: p }, Process::Branch { chan: bc, right, .. })
                    if sc == x && bc == x =>
                {
                    out.push((
                        RedRule::Case,
                        Process::cut(x.clone(), (**p).clone(), (**right).clone()),
                    ));
                }
                _ => {}
            }
            // red-fwd-r: new x.(P || fwd y <- x) -> P{x -> y}
            if let Process::Fwd { provided: y, used } = &**user {
                if used == x && y != x && !provider.free_names().contains(y) {
                    out.push((RedRule::FwdR, substitute(provider, x, y)));
                }
            }
            // red-fwd-l: new x.(fwd x <- y || P) -> P{x -> y}
            if let Process::Fwd { provided, used: y } = &**provider {
                if provided == x && y != x && !user.free_names().contains(y) {
                    out.push((RedRule::FwdL, substitute(user, x, y)));
                }
            }
            // spawn rules on the user side
            if let Process::Spawn { binding, body: q } = &**user {
                if binding.domain().contains(x) {
                    if let Some(r) = spawn_reduction(x, provider, binding, q, supply, avoid) {
                        out.push((RedRule::Spawn, r));
                    }
                } else {
                    out.push((
                        RedRule::SpawnR,
                        Process::spawn(
                            binding.clone(),
                            Process::cut(x.clone(), (**provider).clone(), (**q).clone()),
                        ),
                    ));
                }
            }
            // red-spawn-l on the provider side
            if let Process::Spawn { binding, body: p } = &**provider {
                if !binding.domain().contains(x) {
                    out.push((
                        RedRule::SpawnL,
                        Process::spawn(
                            binding.clone(),
                            Process::cut(x.clone(), (**p).clone(), (**user).clone()),
                        ),
                    ));
                }
            }
        }
        Process::Spawn { binding: s1, body } => {
            if let Process::Spawn { binding: s2, body: inner } = &**body {
                if let Ok(merged) = s1.merge(s2) {
                    out.push((RedRule::SpawnMerge, Process::spawn(merged, (**inner).clone())));
                }
            }
        }
        _ => {}
    }
    out
}

/// red-spawn: replicate the provider once per copy of the cut channel and
/// re-export the provider's other free names through the new binding.
fn spawn_reduction(
    x: &Name,
    provider: &Process,
    binding: &SpawnBinding,
    q: &Process,
    supply: &mut FreshSupply,
    avoid: &BTreeSet<Name>,
) -> Option<Process> {
    let copies: Vec<Name> = binding.get(x).unwrap().iter().cloned().collect();
    let n = copies.len() as u32;
    let mut other_free: Vec<Name> = provider.free_names().into_iter().collect();
    other_free.retain(|z| z != x);

    let mut avoid = avoid.clone();
    let mut new_images: BTreeMap<Name, BTreeSet<Name>> =
        other_free.iter().map(|z| (z.clone(), BTreeSet::new())).collect();
    let mut inner = q.clone();
    for (i, xi) in copies.iter().enumerate().rev() {
        let idx = i as u32 + 1;
        let mut map: BTreeMap<Name, Name> = BTreeMap::new();
        map.insert(x.clone(), xi.clone());
        for z in &other_free {
            let zi = supply.fresh_copy(z, idx, &avoid);
            avoid.insert(zi.clone());
            new_images.get_mut(z).unwrap().insert(zi.clone());
            map.insert(z.clone(), zi);
        }
        let copy = subst_map(provider, &map);
        inner = Process::cut(xi.clone(), copy, inner);
    }
    let _ = n;
    let mut map = binding.remove(&[x.clone()].into_iter().collect());
    let mut entries: BTreeMap<Name, BTreeSet<Name>> =
        map.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    for (z, img) in new_images {
        if entries.insert(z.clone(), img).is_some() {
            // the provider shares a free name with the binding's domain;
            // only possible for ill-typed terms, where this redex is not offered
            return None;
        }
    }
    map = SpawnBinding::new(entries).ok()?;
    Some(Process::spawn(map, inner))
}

/// Enumerate all redexes of `p`: every congruent representative, every
/// evaluation-context position, every matching rule. Results are renamed
/// apart and deduplicated modulo alpha-equivalence of the contractum.
pub fn redexes(p: &Process, supply: &mut FreshSupply) -> Vec<Redex> {
    let avoid = p.all_names();
    let mut out: Vec<Redex> = Vec::new();
    let mut seen_results: BTreeSet<Process> = BTreeSet::new();
    for (witness, dist) in congruence_class(p) {
        let mut stack: Vec<Path> = vec![vec![]];
        while let Some(path) = stack.pop() {
            let focus = focus_at(&witness, &path).unwrap();
            for (rule, contractum) in root_reductions(focus, supply, &avoid) {
                let raw = rebuild_at(&witness, &path, contractum);
                let (result, _) = crate::syntax::rename_apart(&raw, supply, &avoid);
                if seen_results.insert(alpha_canon(&result)) {
                    out.push(Redex {
                        rule,
                        path: path.clone(),
                        witness: witness.clone(),
                        congruence_steps: dist,
                        result,
                    });
                }
            }
            match focus {
                Process::Spawn { .. } => {
                    let mut p2 = path.clone();
                    p2.push(PathStep::SpawnBody);
                    stack.push(p2);
                }
                Process::Cut { .. } => {
                    let mut l = path.clone();
                    l.push(PathStep::CutLeft);
                    stack.push(l);
                    let mut r = path.clone();
                    r.push(PathStep::CutRight);
                    stack.push(r);
                }
                _ => {}
            }
        }
    }
    // deterministic presentation order
    out.sort_by(|a, b| {
        (a.rule, &a.path, a.congruence_steps)
            .cmp(&(b.rule, &b.path, b.congruence_steps))
    });
    out
}

/// Apply a previously enumerated redex, re-validating that it still matches.
pub fn step(p: &Process, r: &Redex, supply: &mut FreshSupply) -> Result<Process, ReduceError> {
    if !congruent(p, &r.witness) {
        return Err(ReduceError::StaleRedex(r.rule.name()));
    }
    let focus = focus_at(&r.witness, &r.path).ok_or(ReduceError::StaleRedex(r.rule.name()))?;
    let avoid = r.witness.all_names();
    let matches = root_reductions(focus, supply, &avoid)
        .into_iter()
        .any(|(rule, _)| rule == r.rule);
    if !matches {
        return Err(ReduceError::StaleRedex(r.rule.name()));
    }
    Ok(r.result.clone())
}

/// All one-step successors modulo alpha, for graph exploration.
pub fn successors(p: &Process, supply: &mut FreshSupply) -> Vec<Process> {
    redexes(p, supply).into_iter().map(|r| r.result).collect()
}

/// Fire a specific rule at a specific path of `p` directly, without searching
/// the congruence class. Used by the normalization strategy to drive a
/// freshly created spawn prefix upward.
pub fn apply_rule_at(
    p: &Process,
    path: &[PathStep],
    rule: RedRule,
    supply: &mut FreshSupply,
) -> Option<Process> {
    let avoid = p.all_names();
    let focus = focus_at(p, path)?;
    let contractum = root_reductions(focus, supply, &avoid)
        .into_iter()
        .find(|(r, _)| *r == rule)
        .map(|(_, c)| c)?;
    let raw = rebuild_at(p, path, contractum);
    let (result, _) = crate::syntax::rename_apart(&raw, supply, &avoid);
    Some(result)
}

/// One reduction-trace entry, as emitted by the runners.
#[derive(Clone, Debug, Serialize)]
pub struct TraceStep {
    pub step: usize,
    pub rule: &'static str,
    pub path: Path,
    pub congruence_witness: Option<String>,
    pub before: String,
    pub after: String,
}

pub fn trace_step(
    index: usize,
    before: &Process,
    redex: &Redex,
) -> TraceStep {
    TraceStep {
        step: index,
        rule: redex.rule.name(),
        path: redex.path.clone(),
        congruence_witness: if redex.congruence_steps > 0 {
            Some(redex.witness.to_string())
        } else {
            None
        },
        before: before.to_string(),
        after: redex.result.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_process;
    use crate::syntax::alpha_eq;

    fn reds(p: &Process) -> Vec<Redex> {
        let mut supply = FreshSupply::starting_at(100);
        redexes(p, &mut supply)
    }

    #[test]
    fn unit_reduction() {
        let p = parse_process("new x.(x!() || x?().q!())").unwrap();
        let rs = reds(&p);
        assert_eq!(rs.len(), 1);
        assert_eq!(rs[0].rule, RedRule::UnitL);
        assert!(alpha_eq(&rs[0].result, &parse_process("q!()").unwrap()));
    }

    #[test]
    fn contraction_example() {
        // R = new x.(z?().x!() || spawn{x -> {x1,x2}}.x1?().x2?().v!())
        let r = parse_process(
            "new x.(z?().x!() || spawn{x -> {x1,x2}}.x1?().x2?().v!())",
        )
        .unwrap();
        let rs = reds(&r);
        assert_eq!(rs.len(), 1);
        assert_eq!(rs[0].rule, RedRule::Spawn);
        let expected = parse_process(
            "spawn{z -> {z1,z2}}.new x1.(z1?().x1!() || new x2.(z2?().x2!() || x1?().x2?().v!()))",
        )
        .unwrap();
        assert!(alpha_eq(&rs[0].result, &expected), "got {}", rs[0].result);
    }

    #[test]
    fn weakening_example() {
        let r = parse_process("new x.(z?().x!() || spawn{x -> {}}.v!())").unwrap();
        let rs = reds(&r);
        assert_eq!(rs.len(), 1);
        assert_eq!(rs[0].rule, RedRule::Spawn);
        let expected = parse_process("spawn{z -> {}}.v!()").unwrap();
        assert!(alpha_eq(&rs[0].result, &expected), "got {}", rs[0].result);
    }

    #[test]
    fn spawn_merge() {
        let p = parse_process("spawn{x -> {x1}}.spawn{y -> {y1}}.x1?().y1?().z!()").unwrap();
        let rs = reds(&p);
        assert!(rs.iter().any(|r| r.rule == RedRule::SpawnMerge));
    }

    #[test]
    fn congruence_exposes_communication() {
        // new z.(z!() || R): the unit synchronization on z needs assoc-r
        let p = parse_process(
            "new z.(z!() || new x.(z?().x!() || spawn{x -> {x1,x2}}.x1?().x2?().v!()))",
        )
        .unwrap();
        let rs = reds(&p);
        let unit = rs.iter().find(|r| r.rule == RedRule::UnitL).expect("unit redex via congruence");
        assert!(unit.congruence_steps > 0);
        let expected = parse_process(
            "new x.(x!() || spawn{x -> {x1,x2}}.x1?().x2?().v!())",
        )
        .unwrap();
        assert!(alpha_eq(&unit.result, &expected), "got {}", unit.result);
    }

    #[test]
    fn congruent_processes_share_contracta() {
        let p = parse_process(
            "new x.(a?().x!() || new y.(b?().y!() || x?().y?().z!()))",
        )
        .unwrap();
        for (w, _) in congruence_class(&p) {
            let rp: BTreeSet<Process> =
                reds(&p).into_iter().map(|r| alpha_canon(&r.result)).collect();
            let rw: BTreeSet<Process> =
                reds(&w).into_iter().map(|r| alpha_canon(&r.result)).collect();
            assert_eq!(rp, rw);
        }
    }

    #[test]
    fn substitute_spawn_domain() {
        let p = parse_process("spawn{x -> {x1}}.x1?().z!()").unwrap();
        let q = substitute(&p, &Name::plain("x"), &Name::plain("w"));
        let expected = parse_process("spawn{w -> {x1}}.x1?().z!()").unwrap();
        assert!(alpha_eq(&q, &expected));
    }
}
