//! Observables: barbs, active names, readiness, the deadlock trichotomy,
//! weak barbs via reachability, and a bounded barbed-equivalence check.
//! The bounded check refutes soundly; affirmative answers are only claims
//! up to the explored depth, with denotational equality as the prover.

use crate::names::{FreshSupply, Name};
use crate::normalize::{normalize, DEFAULT_MAX_STEPS};
use crate::reduction::{redexes, successors};
use crate::syntax::{alpha_canon, alpha_eq, Process};
use crate::typing::{check, Derivation, TypeError};
use crate::types::Type;
use crate::{Canon, SpawnBinding};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Barb {
    #[serde(serialize_with = "crate::typing::ser_name")]
    pub chan: Name,
    pub kind: BarbKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum BarbKind {
    OutSelectL,
    OutSelectR,
    InBranchL,
    InBranchR,
    Out,
    In,
    Wait,
    Close,
}

impl fmt::Display for Barb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.chan;
        match self.kind {
            BarbKind::OutSelectL => write!(f, "{c}.inl"),
            BarbKind::OutSelectR => write!(f, "{c}.inr"),
            BarbKind::InBranchL => write!(f, "{c}&inl"),
            BarbKind::InBranchR => write!(f, "{c}&inr"),
            BarbKind::Out => write!(f, "{c}![]"),
            BarbKind::In => write!(f, "{c}?()"),
            BarbKind::Wait => write!(f, "{c}?[]"),
            BarbKind::Close => write!(f, "{c}!()"),
        }
    }
}

/// Immediate observations on unrestricted channels.
pub fn barbs(p: &Process) -> BTreeSet<Barb> {
    match p {
        Process::SelL { chan, .. } => {
            [Barb { chan: chan.clone(), kind: BarbKind::OutSelectL }].into()
        }
        Process::SelR { chan, .. } => {
            [Barb { chan: chan.clone(), kind: BarbKind::OutSelectR }].into()
        }
        Process::Branch { chan, .. } => [
            Barb { chan: chan.clone(), kind: BarbKind::InBranchL },
            Barb { chan: chan.clone(), kind: BarbKind::InBranchR },
        ]
        .into(),
        Process::Output { chan, .. } => [Barb { chan: chan.clone(), kind: BarbKind::Out }].into(),
        Process::Input { chan, .. } => [Barb { chan: chan.clone(), kind: BarbKind::In }].into(),
        Process::Wait { chan, .. } => [Barb { chan: chan.clone(), kind: BarbKind::Wait }].into(),
        Process::Close { chan } => [Barb { chan: chan.clone(), kind: BarbKind::Close }].into(),
        Process::Fwd { .. } => BTreeSet::new(),
        Process::Cut { chan, provider, user } => {
            let mut out = barbs(provider);
            out.extend(barbs(user));
            out.retain(|b| &b.chan != chan);
            out
        }
        Process::Spawn { binding, body } => {
            let restr = binding.restrictions();
            let mut out = barbs(body);
            out.retain(|b| !restr.contains(&b.chan));
            out
        }
    }
}

/// Free names carrying an unguarded communication capability.
pub fn active_names(p: &Process) -> BTreeSet<Name> {
    match p {
        Process::Close { chan }
        | Process::Wait { chan, .. }
        | Process::Output { chan, .. }
        | Process::Input { chan, .. }
        | Process::SelL { chan, .. }
        | Process::SelR { chan, .. }
        | Process::Branch { chan, .. } => [chan.clone()].into(),
        Process::Fwd { provided, used } => [provided.clone(), used.clone()].into(),
        Process::Cut { chan, provider, user } => {
            let mut out = active_names(provider);
            out.extend(active_names(user));
            out.remove(chan);
            out
        }
        Process::Spawn { binding, body } => {
            let mut out: BTreeSet<Name> = binding.domain();
            let inner = active_names(body);
            let restr = binding.restrictions();
            out.extend(inner.into_iter().filter(|n| !restr.contains(n)));
            out
        }
    }
}

fn ready_syntactic(p: &Process) -> bool {
    match p {
        Process::Spawn { body, .. } => {
            matches!(**body, Process::Spawn { .. }) || ready_syntactic(body)
        }
        Process::Cut { chan, provider, user } => {
            if active_names(provider).contains(chan) && active_names(user).contains(chan) {
                return true;
            }
            if matches!(**provider, Process::Spawn { .. })
                || matches!(**user, Process::Spawn { .. })
            {
                return true;
            }
            if matches!(&**provider, Process::Fwd { provided, .. } if provided == chan) {
                return true;
            }
            if matches!(&**user, Process::Fwd { used, .. } if used == chan) {
                return true;
            }
            ready_syntactic(provider) || ready_syntactic(user)
        }
        _ => false,
    }
}

/// Readiness, decided over the finite congruence class.
pub fn ready(p: &Process) -> bool {
    crate::reduction::congruence_class(p)
        .iter()
        .any(|(w, _)| ready_syntactic(w))
}

#[derive(Clone, Debug, Serialize)]
pub struct ProgressReport {
    pub ready: bool,
    pub has_redex: bool,
    pub violation: bool,
}

/// For a typed judgment, readiness must imply the existence of a redex.
pub fn progress_check(
    bunch: &Canon,
    p: &Process,
    chan: &Name,
    ty: &Type,
) -> Result<ProgressReport, TypeError> {
    let _deriv: Derivation = check(bunch, p, chan, ty)?;
    let is_ready = ready(p);
    let mut supply = FreshSupply::starting_at(7_000);
    let has_redex = !redexes(p, &mut supply).is_empty();
    Ok(ProgressReport { ready: is_ready, has_redex, violation: is_ready && !has_redex })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum DeadlockVerdict {
    /// `P` is the bare close on its channel.
    CloseOnly,
    /// `P` is the close guarded by one empty spawn prefix.
    EmptySpawnClose,
    /// `P` reduces, and its normal form lands in one of the first two shapes.
    Reduces { normal_form: String },
    Violation { stuck: String },
}

/// The trichotomy for closed processes of unit type: either the process is
/// (up to congruence) a close, an empty-spawn-guarded close, or it reduces;
/// normalization must end in one of the first two shapes.
pub fn deadlock_check(p: &Process, z: &Name, supply: &mut FreshSupply) -> DeadlockVerdict {
    let close = Process::close(z.clone());
    let empty_spawn_close = Process::spawn(SpawnBinding::empty(), Process::close(z.clone()));
    let congruent_to = |p: &Process, target: &Process| {
        crate::reduction::congruence_class(p).iter().any(|(w, _)| alpha_eq(w, target))
    };
    if congruent_to(p, &close) {
        return DeadlockVerdict::CloseOnly;
    }
    if congruent_to(p, &empty_spawn_close) {
        return DeadlockVerdict::EmptySpawnClose;
    }
    match normalize(p, DEFAULT_MAX_STEPS, supply) {
        Ok((q, _)) => {
            if congruent_to(&q, &close) || congruent_to(&q, &empty_spawn_close) {
                DeadlockVerdict::Reduces { normal_form: q.to_string() }
            } else {
                DeadlockVerdict::Violation { stuck: q.to_string() }
            }
        }
        Err(e) => DeadlockVerdict::Violation { stuck: format!("normalization failed: {e}") },
    }
}

const REACHABLE_CAP: usize = 4_000;

/// All states reachable by reduction, up to alpha, capped. The boolean says
/// whether the exploration was exhaustive.
pub fn reachable(p: &Process, cap: usize, supply: &mut FreshSupply) -> (Vec<Process>, bool) {
    let mut seen: BTreeSet<Process> = BTreeSet::new();
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    seen.insert(alpha_canon(p));
    queue.push_back(p.clone());
    let mut complete = true;
    while let Some(cur) = queue.pop_front() {
        out.push(cur.clone());
        if out.len() >= cap {
            complete = queue.is_empty();
            break;
        }
        for next in successors(&cur, supply) {
            if seen.insert(alpha_canon(&next)) {
                queue.push_back(next);
            }
        }
    }
    (out, complete)
}

/// Barbs observable now or after reductions: the union over the explored
/// reduction graph, plus the states of a normalization run.
pub fn weak_barbs(p: &Process, supply: &mut FreshSupply) -> BTreeSet<Barb> {
    let (states, _) = reachable(p, REACHABLE_CAP, supply);
    let mut out = BTreeSet::new();
    for s in &states {
        out.extend(barbs(s));
    }
    if let Ok((q, _)) = normalize(p, DEFAULT_MAX_STEPS, supply) {
        out.extend(barbs(&q));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum BarbedVerdict {
    Distinguished { barb: String, state: String },
    IndistinguishableToDepth(usize),
}

/// Bounded approximation of barbed equivalence: barbs must be weakly
/// matched in both directions, and reductions followed to the given depth.
/// A `Distinguished` verdict is conclusive; the other verdict is not.
pub fn barbed_eq_bounded(
    p: &Process,
    q: &Process,
    depth: usize,
    supply: &mut FreshSupply,
) -> BarbedVerdict {
    let mut memo: BTreeMap<(Process, Process, usize), bool> = BTreeMap::new();
    fn weak_has_barb(
        states: &[Process],
        barb: &Barb,
    ) -> bool {
        states.iter().any(|s| barbs(s).contains(barb))
    }
    fn go(
        p: &Process,
        q: &Process,
        depth: usize,
        supply: &mut FreshSupply,
        memo: &mut BTreeMap<(Process, Process, usize), bool>,
    ) -> Result<(), (String, String)> {
        let key = (alpha_canon(p), alpha_canon(q), depth);
        if let Some(ok) = memo.get(&key) {
            return if *ok { Ok(()) } else { Err(("memo".into(), p.to_string())) };
        }
        let (p_reach, p_complete) = reachable(p, REACHABLE_CAP, supply);
        let (q_reach, q_complete) = reachable(q, REACHABLE_CAP, supply);
        for b in barbs(p) {
            if !weak_has_barb(&q_reach, &b) {
                if q_complete {
                    memo.insert(key, false);
                    return Err((b.to_string(), q.to_string()));
                }
                // exploration was truncated: cannot refute soundly
            }
        }
        for b in barbs(q) {
            if !weak_has_barb(&p_reach, &b) && p_complete {
                memo.insert(key, false);
                return Err((b.to_string(), p.to_string()));
            }
        }
        if depth > 0 {
            // reduction closure: each step on one side must be answered by
            // some (possibly empty) weak step on the other
            for p2 in successors(p, supply) {
                let mut matched = false;
                for q2 in &q_reach {
                    if go(&p2, q2, depth - 1, supply, memo).is_ok() {
                        matched = true;
                        break;
                    }
                }
                if !matched {
                    if q_complete {
                        memo.insert(key, false);
                        return Err((format!("no match for step to {p2}"), q.to_string()));
                    }
                }
            }
            for q2 in successors(q, supply) {
                let mut matched = false;
                for p2 in &p_reach {
                    if go(p2, &q2, depth - 1, supply, memo).is_ok() {
                        matched = true;
                        break;
                    }
                }
                if !matched && p_complete {
                    memo.insert(key, false);
                    return Err((format!("no match for step to {q2}"), p.to_string()));
                }
            }
        }
        memo.insert(key, true);
        Ok(())
    }
    match go(p, q, depth, supply, &mut memo) {
        Ok(()) => BarbedVerdict::IndistinguishableToDepth(depth),
        Err((barb, state)) => BarbedVerdict::Distinguished { barb, state },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_process;

    fn n(s: &str) -> Name {
        Name::plain(s)
    }

    #[test]
    fn barb_examples() {
        let close = parse_process("x!()").unwrap();
        assert_eq!(
            barbs(&close),
            [Barb { chan: n("x"), kind: BarbKind::Close }].into()
        );

        // restricted channel yields no barb; the wait on z is guarded
        let cut = parse_process("new x.(x!() || x?().z!())").unwrap();
        assert!(barbs(&cut).is_empty());

        let spawned = parse_process("spawn{x -> {x1}}.y!()").unwrap();
        assert_eq!(
            barbs(&spawned),
            [Barb { chan: n("y"), kind: BarbKind::Close }].into()
        );
    }

    #[test]
    fn active_name_examples() {
        let fwd = parse_process("fwd x <- y").unwrap();
        assert_eq!(active_names(&fwd), [n("x"), n("y")].into());

        let inp = parse_process("x?(y).y?().z!()").unwrap();
        assert_eq!(active_names(&inp), [n("x")].into());

        let spawn = parse_process("spawn{x -> {x1}}.x1?().z!()").unwrap();
        assert_eq!(active_names(&spawn), [n("x")].into());
    }

    #[test]
    fn ready_examples() {
        assert!(ready(&parse_process("new x.(x!() || x?().z!())").unwrap()));
        assert!(!ready(&parse_process("z!()").unwrap()));
        assert!(ready(&parse_process("new x.(fwd x <- y || x?().z!())").unwrap()));
    }

    #[test]
    fn deadlock_trichotomy_shapes() {
        let mut supply = FreshSupply::starting_at(9_000);
        assert_eq!(
            deadlock_check(&parse_process("z!()").unwrap(), &n("z"), &mut supply),
            DeadlockVerdict::CloseOnly
        );
        assert_eq!(
            deadlock_check(&parse_process("spawn{}.z!()").unwrap(), &n("z"), &mut supply),
            DeadlockVerdict::EmptySpawnClose
        );
        assert!(matches!(
            deadlock_check(
                &parse_process("new x.(x!() || x?().z!())").unwrap(),
                &n("z"),
                &mut supply
            ),
            DeadlockVerdict::Reduces { .. }
        ));
    }

    #[test]
    fn barbed_distinction() {
        let mut supply = FreshSupply::starting_at(9_000);
        let p = parse_process("z.inl.z!()").unwrap();
        let q = parse_process("z.inr.z!()").unwrap();
        assert!(matches!(
            barbed_eq_bounded(&p, &q, 0, &mut supply),
            BarbedVerdict::Distinguished { .. }
        ));
        assert!(matches!(
            barbed_eq_bounded(&p, &p, 3, &mut supply),
            BarbedVerdict::IndistinguishableToDepth(3)
        ));
    }
}
