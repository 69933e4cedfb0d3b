//! Weak normalization: a terminating reduction strategy driven by a
//! depth-stratified prefix count.
//!
//! A skeleton maps `i` to the number of communication prefixes at spawn
//! depth `i` and above. The strategy fires communication redexes when it
//! can; otherwise it picks an active spawn prefix at the least depth,
//! reduces it, and drives the freshly created spawn to the top level. Each
//! round strictly decreases the measure, which is audited at run time.

use crate::names::FreshSupply;
use crate::reduction::{
    apply_rule_at, redexes, trace_step, PathStep, RedRule, Redex, TraceStep,
};
use crate::syntax::Process;
use serde::Serialize;
use std::fmt;
use thiserror::Error;

/// Finite map from depth to prefix count at that depth and above; trailing
/// zeros are trimmed, so `depth()` is the greatest nonzero level.
#[derive(Clone, PartialEq, Eq, Default, Serialize)]
pub struct Skeleton(Vec<u64>);

impl Skeleton {
    pub fn zero() -> Skeleton {
        Skeleton(Vec::new())
    }

    pub fn one() -> Skeleton {
        Skeleton(vec![1])
    }

    pub fn get(&self, i: usize) -> u64 {
        self.0.get(i).copied().unwrap_or(0)
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn plus(&self, other: &Skeleton) -> Skeleton {
        let n = self.0.len().max(other.0.len());
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push(self.get(i) + other.get(i));
        }
        Skeleton(out)
    }

    /// Everything moves one level deeper; the cumulative count at level 0
    /// stays the total.
    pub fn shift(&self) -> Skeleton {
        if self.0.is_empty() {
            return Skeleton::zero();
        }
        let mut out = Vec::with_capacity(self.0.len() + 1);
        out.push(self.get(0));
        out.extend_from_slice(&self.0);
        Skeleton(out)
    }

    fn trimmed(mut self) -> Skeleton {
        while self.0.last() == Some(&0) {
            self.0.pop();
        }
        self
    }
}

impl fmt::Debug for Skeleton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{i} -> {v}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Display for Skeleton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

pub fn skel_of(p: &Process) -> Skeleton {
    let s = match p {
        Process::Fwd { .. } | Process::Close { .. } => Skeleton::one(),
        Process::Output { body, cont, .. } => {
            Skeleton::one().plus(&skel_of(body)).plus(&skel_of(cont))
        }
        Process::Branch { left, right, .. } => {
            Skeleton::one().plus(&skel_of(left)).plus(&skel_of(right))
        }
        Process::Input { body, .. }
        | Process::Wait { body, .. }
        | Process::SelL { body, .. }
        | Process::SelR { body, .. } => Skeleton::one().plus(&skel_of(body)),
        Process::Cut { provider, user, .. } => skel_of(provider).plus(&skel_of(user)),
        Process::Spawn { body, .. } => skel_of(body).shift(),
    };
    s.trimmed()
}

/// Strict order: compare counts from the greatest depth downward.
pub fn skel_lt(s1: &Skeleton, s2: &Skeleton) -> bool {
    let n = s1.depth().max(s2.depth());
    for i in (0..n).rev() {
        let (a, b) = (s1.get(i), s2.get(i));
        if a < b {
            return true;
        }
        if a > b {
            return false;
        }
    }
    false
}

/// The termination measure: the skeleton, skipping one top-level spawn.
pub fn measure(p: &Process) -> Skeleton {
    match p {
        Process::Spawn { body, .. } => skel_of(body),
        _ => skel_of(p),
    }
}

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("step limit {0} exceeded")]
    StepLimit(usize),
    #[error("measure did not decrease in round {round}: {before} vs {after}")]
    MeasureViolation { round: usize, before: String, after: String },
}

#[derive(Clone, Debug, Serialize, Default)]
pub struct NormalizeTrace {
    pub rounds: Vec<NormalizeRound>,
    pub total_steps: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormalizeRound {
    pub round: usize,
    pub measure_before: Skeleton,
    pub measure_after: Skeleton,
    pub steps: Vec<TraceStep>,
}

pub const DEFAULT_MAX_STEPS: usize = 100_000;

/// Number of spawn-body crossings in an evaluation path.
fn spawn_depth(path: &[PathStep]) -> usize {
    path.iter().filter(|s| matches!(s, PathStep::SpawnBody)).count()
}

/// The measure lemma wants the chosen spawn to sit under no spawn prefix
/// except possibly one at the very top of the process.
fn lemma_context_ok(path: &[PathStep]) -> bool {
    path.iter()
        .enumerate()
        .all(|(i, s)| !matches!(s, PathStep::SpawnBody) || i == 0)
}

pub fn normalize(
    p: &Process,
    max_steps: usize,
    supply: &mut FreshSupply,
) -> Result<(Process, NormalizeTrace), NormalizeError> {
    let mut cur = p.clone();
    let mut trace = NormalizeTrace::default();
    let mut total = 0usize;
    let mut round_no = 0usize;
    loop {
        let rs = redexes(&cur, supply);
        if rs.is_empty() {
            return Ok((cur, trace));
        }
        round_no += 1;
        let before = measure(&cur);
        let mut steps = Vec::new();

        if let Some(comm) = rs.iter().find(|r| r.rule.is_communication()) {
            total += 1;
            steps.push(trace_step(total, &cur, comm));
            cur = comm.result.clone();
        } else {
            // Least-depth active spawn, ties leftmost (enumeration order),
            // preferring redexes whose context satisfies the measure lemma.
            let mut spawn_rs: Vec<&Redex> = rs.iter().collect();
            spawn_rs.sort_by_key(|r| {
                (!lemma_context_ok(&r.path), spawn_depth(&r.path), r.path.clone())
            });
            let chosen = spawn_rs[0];
            total += 1;
            steps.push(trace_step(total, &cur, chosen));
            cur = chosen.result.clone();
            // Drive the freshly created spawn upward: commute past cuts,
            // reduce at cuts that capture it, merge into a top-level spawn.
            let mut pos = chosen.path.clone();
            'propagate: while !pos.is_empty() {
                let parent = &pos[..pos.len() - 1];
                // The focus at `pos` must still be a spawn prefix; a spawn
                // reduction at the parent keeps the new spawn at the parent
                // position, commuting moves it up one step.
                let focus_is_spawn = matches!(
                    focus_kind(&cur, &pos),
                    Some(FocusKind::Spawn)
                );
                if !focus_is_spawn {
                    break 'propagate;
                }
                let parent_kind = focus_kind(&cur, parent);
                let candidate_rules: &[RedRule] = match parent_kind {
                    Some(FocusKind::Cut) => &[RedRule::SpawnR, RedRule::SpawnL, RedRule::Spawn],
                    Some(FocusKind::Spawn) => &[RedRule::SpawnMerge],
                    _ => break 'propagate,
                };
                let mut fired = false;
                for rule in candidate_rules {
                    if let Some(next) = apply_rule_at(&cur, parent, *rule, supply) {
                        // only accept steps that involve this spawn: for the
                        // cut rules that is automatic since the focus is the
                        // spawned side
                        total += 1;
                        if total > max_steps {
                            return Err(NormalizeError::StepLimit(max_steps));
                        }
                        steps.push(TraceStep {
                            step: total,
                            rule: rule.name(),
                            path: parent.to_vec(),
                            congruence_witness: None,
                            before: cur.to_string(),
                            after: next.to_string(),
                        });
                        cur = next;
                        pos = parent.to_vec();
                        fired = true;
                        break;
                    }
                }
                if !fired {
                    break 'propagate;
                }
            }
        }

        let after = measure(&cur);
        if !skel_lt(&after, &before) {
            return Err(NormalizeError::MeasureViolation {
                round: round_no,
                before: format!("{before}"),
                after: format!("{after}"),
            });
        }
        trace.rounds.push(NormalizeRound {
            round: round_no,
            measure_before: before,
            measure_after: after,
            steps,
        });
        trace.total_steps = total;
        if total > max_steps {
            return Err(NormalizeError::StepLimit(max_steps));
        }
    }
}

enum FocusKind {
    Cut,
    Spawn,
    Other,
}

fn focus_kind(p: &Process, path: &[PathStep]) -> Option<FocusKind> {
    let mut cur = p;
    for step in path {
        cur = match (step, cur) {
            (PathStep::SpawnBody, Process::Spawn { body, .. }) => body,
            (PathStep::CutLeft, Process::Cut { provider, .. }) => provider,
            (PathStep::CutRight, Process::Cut { user, .. }) => user,
            _ => return None,
        };
    }
    Some(match cur {
        Process::Cut { .. } => FocusKind::Cut,
        Process::Spawn { .. } => FocusKind::Spawn,
        _ => FocusKind::Other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_process;
    use crate::syntax::alpha_eq;

    #[test]
    fn skeleton_worked_example() {
        let p = parse_process(
            "new x.(x!() || spawn{s -> {}}.new y.(y!() || spawn{t -> {}}.x?().y?().k!()))",
        )
        .unwrap();
        let s = skel_of(&p);
        assert_eq!(s.get(0), 5);
        assert_eq!(s.get(1), 4);
        assert_eq!(s.get(2), 3);
        assert_eq!(s.get(3), 0);
    }

    #[test]
    fn skeleton_base_and_shift() {
        let close = parse_process("x!()").unwrap();
        assert_eq!(skel_of(&close), Skeleton(vec![1]));

        let spawned = parse_process("spawn{s -> {}}.x!()").unwrap();
        let sk = skel_of(&spawned);
        assert_eq!(sk.get(0), 1);
        assert_eq!(sk.get(1), 1);
        assert_eq!(measure(&spawned), Skeleton(vec![1]));
    }

    #[test]
    fn skel_order() {
        let s1 = Skeleton(vec![3]);
        let s2 = Skeleton(vec![1, 1]);
        assert!(skel_lt(&s1, &s2));
        assert!(!skel_lt(&s2, &s1));
        assert!(!skel_lt(&s1, &s1));
    }

    #[test]
    fn normalize_trivial() {
        let p = parse_process("z!()").unwrap();
        let mut supply = FreshSupply::starting_at(500);
        let (q, trace) = normalize(&p, 1000, &mut supply).unwrap();
        assert!(alpha_eq(&p, &q));
        assert_eq!(trace.total_steps, 0);
    }

    #[test]
    fn normalize_server_clients() {
        let p = parse_process(
            "new z.(z!() || new x.(z?().x!() || spawn{x -> {x1,x2}}.x1?().x2?().v!()))",
        )
        .unwrap();
        let mut supply = FreshSupply::starting_at(500);
        let (q, trace) = normalize(&p, 1000, &mut supply).unwrap();
        // the spawn generated on the way leaves an empty prefix behind
        assert!(alpha_eq(&q, &parse_process("spawn{}.v!()").unwrap()), "got {q}");
        for round in &trace.rounds {
            assert!(skel_lt(&round.measure_after, &round.measure_before));
        }
    }

    #[test]
    fn normalize_untyped_spawns() {
        let p = parse_process(
            "new z.(spawn{w -> {w1,w2}}.z!() || z?().spawn{u -> {}}.v!())",
        )
        .unwrap();
        let mut supply = FreshSupply::starting_at(500);
        let (q, _) = normalize(&p, 1000, &mut supply).unwrap();
        let expected = parse_process("spawn{w -> {w1,w2}; u -> {}}.v!()").unwrap();
        assert!(alpha_eq(&q, &expected), "got {q}");
    }
}
