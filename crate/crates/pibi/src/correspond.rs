//! Operational correspondence between terms and their translated processes.
//!
//! A process is related to a term by substitution lifting when, up to
//! congruence, it is a stack of homogeneous spawn prefixes over a spine of
//! cuts whose providers are translation images, and the term equals the
//! core after performing the recorded substitutions and copy renamings.
//! The completeness harness simulates term steps by process reductions; the
//! soundness harness reflects explored process reductions back into terms.

use crate::alphalambda::{cbn_step, ext_steps, term_alpha_canon, Term};
use crate::names::{FreshSupply, Name};
use crate::reduction::successors;
use crate::spawn::SpawnBinding;
use crate::syntax::{alpha_canon, Process};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

#[derive(Clone, Debug)]
pub struct SubliftState {
    /// Leading spawn prefixes, outermost first; each is homogeneous.
    pub spawns: Vec<SpawnBinding>,
    /// Cut spine, outermost first: channel and provider process.
    pub cuts: Vec<(Name, Process)>,
    /// The innermost process, a translation image of the core term.
    pub core: Process,
}

enum Homogeneous {
    Weaken,
    Contract(BTreeMap<Name, Name>),
}

fn classify_binding(b: &SpawnBinding) -> Option<Homogeneous> {
    if b.iter().all(|(_, img)| img.is_empty()) {
        return Some(Homogeneous::Weaken);
    }
    if b.iter().all(|(_, img)| img.len() == 2) {
        let mut renames = BTreeMap::new();
        for (src, img) in b.iter() {
            for copy in img {
                renames.insert(copy.clone(), src.clone());
            }
        }
        return Some(Homogeneous::Contract(renames));
    }
    None
}

struct Matcher<'a> {
    /// Substitution environment: cut channels, innermost first, with the
    /// provider process for each.
    env: &'a [(Name, Process)],
    /// Copy-to-source renamings from contraction prefixes.
    renames: BTreeMap<Name, Name>,
}

impl<'a> Matcher<'a> {
    fn resolve(&self, mut w: Name, var_map: &BTreeMap<Name, Name>) -> Name {
        let mut guard = 0;
        while let Some(src) = self.renames.get(&w) {
            w = src.clone();
            guard += 1;
            if guard > 64 {
                break;
            }
        }
        var_map.get(&w).cloned().unwrap_or(w)
    }

    fn env_index(&self, w: &Name) -> Option<usize> {
        self.env.iter().position(|(x, _)| x == w)
    }

    /// Match `p`, providing on `chan`, against the target term, under the
    /// substitutions in `env[env_from..]`.
    fn matches(
        &mut self,
        p: &Process,
        chan: &Name,
        target: &Term,
        env_from: usize,
        var_map: &BTreeMap<Name, Name>,
    ) -> bool {
        match p {
            // Contraction and weakening prefixes inside translation images.
            Process::Spawn { binding, body } => match classify_binding(binding) {
                Some(Homogeneous::Weaken) => self.matches(body, chan, target, env_from, var_map),
                Some(Homogeneous::Contract(renames)) => {
                    let saved = self.renames.clone();
                    self.renames.extend(renames);
                    let ok = self.matches(body, chan, target, env_from, var_map);
                    self.renames = saved;
                    ok
                }
                None => false,
            },
            Process::Fwd { provided, used } => {
                if provided != chan {
                    return false;
                }
                if let Some(i) = self.env_index(used) {
                    if i >= env_from {
                        let (x, provider) = (self.env[i].0.clone(), self.env[i].1.clone());
                        return self.matches(&provider, &x, target, i + 1, var_map);
                    }
                }
                matches!(target, Term::Var(v) if self.resolve(used.clone(), var_map) == *v)
            }
            Process::Close { chan: c } if c == chan => {
                matches!(target, Term::UnitM | Term::UnitA)
            }
            Process::Input { chan: c, bound, body } if c == chan => match target {
                Term::LamWand(x, m) | Term::LamImpl(x, m) => {
                    let mut vm = var_map.clone();
                    vm.insert(bound.clone(), x.clone());
                    self.matches(body, chan, m, env_from, &vm)
                }
                _ => false,
            },
            Process::Output { chan: c, payload, body, cont } if c == chan => match target {
                Term::PairSep(m, n) | Term::PairConj(m, n) => {
                    self.matches(body, payload, m, env_from, var_map)
                        && self.matches(cont, chan, n, env_from, var_map)
                }
                _ => false,
            },
            Process::SelL { chan: c, body } if c == chan => {
                matches!(target, Term::Inj(1, m) if self.matches(body, chan, m, env_from, var_map))
            }
            Process::SelR { chan: c, body } if c == chan => {
                matches!(target, Term::Inj(2, m) if self.matches(body, chan, m, env_from, var_map))
            }
            Process::Cut { chan: x, provider, user } => match &**user {
                // application: new x.(T_x(M) || x![y].(T_y(N) || fwd chan <- x))
                Process::Output { chan: oc, payload, body: arg, cont } if oc == x => {
                    let fwd_ok = matches!(
                        &**cont,
                        Process::Fwd { provided, used } if provided == chan && used == x
                    );
                    if !fwd_ok {
                        return false;
                    }
                    match target {
                        Term::AppWand(m, n) | Term::AppImpl(m, n) => {
                            self.matches(provider, x, m, env_from, var_map)
                                && self.matches(arg, payload, n, env_from, var_map)
                        }
                        _ => false,
                    }
                }
                // pair elimination or projection
                Process::Input { chan: ic, bound, body } if ic == x => match target {
                    Term::LetPairSep(a, b, m, n) => {
                        let mut vm = var_map.clone();
                        vm.insert(bound.clone(), a.clone());
                        vm.insert(x.clone(), b.clone());
                        self.matches(provider, x, m, env_from, var_map)
                            && self.matches(body, chan, n, env_from, &vm)
                    }
                    Term::Proj(i, m) => {
                        let Process::Spawn { binding, body: inner } = &**body else {
                            return false;
                        };
                        let weakened: Vec<Name> = binding.domain().into_iter().collect();
                        if !binding.restrictions().is_empty() || weakened.len() != 1 {
                            return false;
                        }
                        let Process::Fwd { provided, used } = &**inner else {
                            return false;
                        };
                        if provided != chan {
                            return false;
                        }
                        let expected_kept = if *i == 1 { bound } else { x };
                        let expected_weak = if *i == 1 { x } else { bound };
                        used == expected_kept
                            && &weakened[0] == expected_weak
                            && self.matches(provider, x, m, env_from, var_map)
                    }
                    _ => false,
                },
                // unit elimination
                Process::Wait { chan: wc, body } if wc == x => match target {
                    Term::LetUnitM(m, n) | Term::LetUnitA(m, n) => {
                        self.matches(provider, x, m, env_from, var_map)
                            && self.matches(body, chan, n, env_from, var_map)
                    }
                    _ => false,
                },
                // case
                Process::Branch { chan: bc, left, right } if bc == x => match target {
                    Term::Case(m, x1, n1, x2, n2) => {
                        let mut vm1 = var_map.clone();
                        vm1.insert(x.clone(), x1.clone());
                        let mut vm2 = var_map.clone();
                        vm2.insert(x.clone(), x2.clone());
                        self.matches(provider, x, m, env_from, var_map)
                            && self.matches(left, chan, n1, env_from, &vm1)
                            && self.matches(right, chan, n2, env_from, &vm2)
                    }
                    _ => false,
                },
                _ => false,
            },
            _ => false,
        }
    }
}

/// Decide whether `p`, providing on `chan`, lifts the substitutions of `m`.
pub fn sublift_check(p: &Process, m: &Term, chan: &Name) -> Option<SubliftState> {
    for (witness, _) in crate::reduction::congruence_class(p) {
        // strip leading spawn prefixes
        let mut spawns = Vec::new();
        let mut renames = BTreeMap::new();
        let mut cur = &witness;
        let mut homogeneous = true;
        while let Process::Spawn { binding, body } = cur {
            match classify_binding(binding) {
                Some(Homogeneous::Weaken) => {}
                Some(Homogeneous::Contract(rs)) => renames.extend(rs),
                None => {
                    homogeneous = false;
                    break;
                }
            }
            spawns.push(binding.clone());
            cur = body;
        }
        if !homogeneous {
            continue;
        }
        // strip the cut spine; every prefix of the spine is a candidate
        // split between substitution cuts and translation-internal cuts
        let mut cuts: Vec<(Name, Process)> = Vec::new();
        let mut spine = Vec::new();
        let mut core = cur.clone();
        loop {
            spine.push((cuts.clone(), core.clone()));
            if let Process::Cut { chan: x, provider, user } = &core.clone() {
                cuts.push((x.clone(), (**provider).clone()));
                core = (**user).clone();
            } else {
                break;
            }
        }
        for (cuts, core) in spine.into_iter().rev() {
            // innermost substitution first
            let env: Vec<(Name, Process)> = cuts.iter().rev().cloned().collect();
            let mut matcher = Matcher { env: &env, renames: renames.clone() };
            if matcher.matches(&core, chan, m, 0, &BTreeMap::new()) {
                return Some(SubliftState { spawns, cuts, core });
            }
        }
    }
    None
}

#[derive(Clone, Debug)]
pub struct Diagram {
    pub term_from: Term,
    pub term_to: Term,
    pub closed: bool,
    pub process_steps: usize,
    pub witness: Option<Process>,
}

#[derive(Clone, Debug, Default)]
pub struct CorrespondenceReport {
    pub diagrams: Vec<Diagram>,
    pub open_diagrams: usize,
    pub budget_exhausted: usize,
    /// Pairs `(Q, N)` with `Q` lifting the substitutions of `N`, for
    /// downstream denotational cross-checks.
    pub sublift_pairs: Vec<(Process, Term)>,
}

impl CorrespondenceReport {
    pub fn all_closed(&self) -> bool {
        self.open_diagrams == 0 && self.budget_exhausted == 0
    }
}

pub const DEFAULT_STEP_BUDGET: usize = 12;

/// Breadth-first reachable set, paired with step distance.
fn explore(
    p: &Process,
    max_steps: usize,
    cap: usize,
    supply: &mut FreshSupply,
) -> Vec<(Process, usize)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    seen.insert(alpha_canon(p));
    queue.push_back((p.clone(), 0usize));
    while let Some((cur, d)) = queue.pop_front() {
        out.push((cur.clone(), d));
        if out.len() >= cap || d >= max_steps {
            continue;
        }
        for next in successors(&cur, supply) {
            if seen.insert(alpha_canon(&next)) {
                queue.push_back((next, d + 1));
            }
        }
    }
    out
}

/// Simulation: follow the call-by-name chain of `m` for `depth` steps,
/// closing each square by a bounded reduction search from the current
/// process.
pub fn completeness_harness(
    start: &Process,
    m: &Term,
    chan: &Name,
    depth: usize,
    budget: usize,
    supply: &mut FreshSupply,
) -> CorrespondenceReport {
    let mut report = CorrespondenceReport::default();
    let mut cur_p = start.clone();
    let mut cur_m = m.clone();
    if sublift_check(&cur_p, &cur_m, chan).is_some() {
        report.sublift_pairs.push((cur_p.clone(), cur_m.clone()));
    }
    for _ in 0..depth {
        let Some(next_m) = cbn_step(&cur_m).into_iter().next() else {
            break;
        };
        let mut closed = None;
        for (q, d) in explore(&cur_p, budget, 8_000, supply) {
            if sublift_check(&q, &next_m, chan).is_some() {
                closed = Some((q, d));
                break;
            }
        }
        match closed {
            Some((q, d)) => {
                report.diagrams.push(Diagram {
                    term_from: cur_m.clone(),
                    term_to: next_m.clone(),
                    closed: true,
                    process_steps: d,
                    witness: Some(q.clone()),
                });
                report.sublift_pairs.push((q.clone(), next_m.clone()));
                cur_p = q;
                cur_m = next_m;
            }
            None => {
                report.diagrams.push(Diagram {
                    term_from: cur_m.clone(),
                    term_to: next_m.clone(),
                    closed: false,
                    process_steps: 0,
                    witness: None,
                });
                report.budget_exhausted += 1;
                report.open_diagrams += 1;
                break;
            }
        }
    }
    report
}

/// Reflection: every explored process reduct must, after finitely many more
/// steps, lift the substitutions of some term reachable under the extended
/// (context-closed) term reduction.
pub fn soundness_harness(
    start: &Process,
    m: &Term,
    chan: &Name,
    depth: usize,
    budget: usize,
    supply: &mut FreshSupply,
) -> CorrespondenceReport {
    let mut report = CorrespondenceReport::default();
    // terms reachable under the extended relation, by distance
    let mut terms: Vec<Term> = vec![m.clone()];
    let mut seen_terms: BTreeSet<Term> = [term_alpha_canon(m)].into_iter().collect();
    let mut frontier = vec![m.clone()];
    for _ in 0..depth + 2 {
        let mut next = Vec::new();
        for t in &frontier {
            for r in ext_steps(t) {
                if seen_terms.insert(term_alpha_canon(&r)) {
                    terms.push(r.clone());
                    next.push(r);
                }
            }
        }
        frontier = next;
        if terms.len() > 2_000 {
            break;
        }
    }

    let mut lift_memo: BTreeMap<Process, Option<usize>> = BTreeMap::new();
    for (q, _) in explore(start, depth, 2_000, supply) {
        let key = alpha_canon(&q);
        if let Some(hit) = lift_memo.get(&key) {
            if hit.is_none() {
                report.open_diagrams += 1;
            }
            continue;
        }
        let mut closed: Option<(usize, Term, Process)> = None;
        'outer: for (r, d) in explore(&q, budget, 2_000, supply) {
            for (ti, t) in terms.iter().enumerate() {
                if sublift_check(&r, t, chan).is_some() {
                    closed = Some((ti, t.clone(), r.clone()));
                    let _ = d;
                    break 'outer;
                }
            }
        }
        match closed {
            Some((ti, t, r)) => {
                lift_memo.insert(key, Some(ti));
                report.diagrams.push(Diagram {
                    term_from: m.clone(),
                    term_to: t.clone(),
                    closed: true,
                    process_steps: 0,
                    witness: Some(r.clone()),
                });
                report.sublift_pairs.push((r, t));
            }
            None => {
                lift_memo.insert(key, None);
                report.open_diagrams += 1;
                report.budget_exhausted += 1;
                report.diagrams.push(Diagram {
                    term_from: m.clone(),
                    term_to: m.clone(),
                    closed: false,
                    process_steps: 0,
                    witness: Some(q.clone()),
                });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphalambda::{translate, typecheck_term};
    use crate::parse::{parse_bunch, parse_term, parse_type};

    fn translated(bunch: &str, term: &str, ty: &str) -> (Process, Term) {
        let t = parse_term(term).unwrap();
        let deriv = typecheck_term(
            &parse_bunch(bunch).unwrap(),
            &t,
            &parse_type(ty).unwrap(),
        )
        .unwrap();
        let mut supply = FreshSupply::starting_at(40);
        (translate(&deriv, &Name::plain("z"), &mut supply), t)
    }

    #[test]
    fn translation_lifts_itself() {
        let (p, t) = translated("0m", "\\x.x", "1m -* 1m");
        assert!(sublift_check(&p, &t, &Name::plain("z")).is_some());
    }

    #[test]
    fn single_cut_lift() {
        // new x.(T_x(*m) || T_z(x))  ~  *m
        let x = Name::plain("x");
        let p = Process::cut(
            x.clone(),
            Process::close(x.clone()),
            Process::fwd(Name::plain("z"), x.clone()),
        );
        let target = parse_term("*m").unwrap();
        let state = sublift_check(&p, &target, &Name::plain("z")).unwrap();
        assert_eq!(state.cuts.len(), 1);
    }

    #[test]
    fn unrelated_shapes_fail() {
        let p = Process::fwd(Name::plain("z"), Name::plain("x"));
        let t = parse_term("\\y.y").unwrap();
        assert!(sublift_check(&p, &t, &Name::plain("z")).is_none());
    }

    #[test]
    fn beta_diagram_closes() {
        let (p, t) = translated("0m", "(\\x.x) *m", "1m");
        let mut supply = FreshSupply::starting_at(600);
        let report =
            completeness_harness(&p, &t, &Name::plain("z"), 4, DEFAULT_STEP_BUDGET, &mut supply);
        assert!(report.all_closed(), "{:?}", report.diagrams);
        assert!(!report.diagrams.is_empty());
    }

    #[test]
    fn proj_diagram_closes() {
        let (p, t) = translated("0m", "pi1 (*a, *m)", "1a");
        let mut supply = FreshSupply::starting_at(600);
        let report =
            completeness_harness(&p, &t, &Name::plain("z"), 6, DEFAULT_STEP_BUDGET, &mut supply);
        assert!(report.all_closed(), "{:?}", report.diagrams);
    }

    #[test]
    fn soundness_on_beta() {
        let (p, t) = translated("0m", "(\\x.x) *m", "1m");
        let mut supply = FreshSupply::starting_at(600);
        let report =
            soundness_harness(&p, &t, &Name::plain("z"), 5, DEFAULT_STEP_BUDGET, &mut supply);
        assert!(report.all_closed(), "open: {}", report.open_diagrams);
    }
}
