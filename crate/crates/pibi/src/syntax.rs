//! Process syntax, binding structure, and alpha-equivalence.
//!
//! Binding discipline: `x![y].(P || Q)` binds `y` in `P` only; `x?(y).P`
//! binds `y` in `P`; `new x.(P || Q)` binds `x` in both sides; a spawn
//! prefix binds its restriction names in the body while its domain names
//! stay free. After parsing all bound names are pairwise distinct and
//! disjoint from free names, and every engine step restores that.

use crate::names::{FreshSupply, Name};
use crate::spawn::SpawnBinding;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Process {
    /// `x![y].(P || Q)`: send fresh `y` over `x`; `P` provides `y`, `Q` continues `x`.
    Output { chan: Name, payload: Name, body: Box<Process>, cont: Box<Process> },
    /// `x?(y).P`: receive `y` over `x`.
    Input { chan: Name, bound: Name, body: Box<Process> },
    /// `x!()`: close.
    Close { chan: Name },
    /// `x?().P`: wait.
    Wait { chan: Name, body: Box<Process> },
    SelL { chan: Name, body: Box<Process> },
    SelR { chan: Name, body: Box<Process> },
    Branch { chan: Name, left: Box<Process>, right: Box<Process> },
    /// `fwd x <- y`: provide `x` as a copycat of `y`.
    Fwd { provided: Name, used: Name },
    /// `new x.(P || Q)`: `P` provides the session at `x`, `Q` uses it.
    Cut { chan: Name, provider: Box<Process>, user: Box<Process> },
    Spawn { binding: SpawnBinding, body: Box<Process> },
}

impl Process {
    pub fn close(c: Name) -> Process {
        Process::Close { chan: c }
    }

    pub fn fwd(provided: Name, used: Name) -> Process {
        Process::Fwd { provided, used }
    }

    pub fn cut(chan: Name, provider: Process, user: Process) -> Process {
        Process::Cut { chan, provider: Box::new(provider), user: Box::new(user) }
    }

    pub fn spawn(binding: SpawnBinding, body: Process) -> Process {
        Process::Spawn { binding, body: Box::new(body) }
    }

    pub fn free_names(&self) -> BTreeSet<Name> {
        match self {
            Process::Output { chan, payload, body, cont } => {
                let mut out = body.free_names();
                out.remove(payload);
                out.extend(cont.free_names());
                out.insert(chan.clone());
                out
            }
            Process::Input { chan, bound, body } => {
                let mut out = body.free_names();
                out.remove(bound);
                out.insert(chan.clone());
                out
            }
            Process::Close { chan } => [chan.clone()].into_iter().collect(),
            Process::Wait { chan, body }
            | Process::SelL { chan, body }
            | Process::SelR { chan, body } => {
                let mut out = body.free_names();
                out.insert(chan.clone());
                out
            }
            Process::Branch { chan, left, right } => {
                let mut out = left.free_names();
                out.extend(right.free_names());
                out.insert(chan.clone());
                out
            }
            Process::Fwd { provided, used } => {
                [provided.clone(), used.clone()].into_iter().collect()
            }
            Process::Cut { chan, provider, user } => {
                let mut out = provider.free_names();
                out.extend(user.free_names());
                out.remove(chan);
                out
            }
            Process::Spawn { binding, body } => {
                let mut out = body.free_names();
                for r in binding.restrictions() {
                    out.remove(&r);
                }
                out.extend(binding.domain());
                out
            }
        }
    }

    pub fn bound_names(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_bound(&mut out);
        out
    }

    fn collect_bound(&self, out: &mut BTreeSet<Name>) {
        match self {
            Process::Output { payload, body, cont, .. } => {
                out.insert(payload.clone());
                body.collect_bound(out);
                cont.collect_bound(out);
            }
            Process::Input { bound, body, .. } => {
                out.insert(bound.clone());
                body.collect_bound(out);
            }
            Process::Close { .. } | Process::Fwd { .. } => {}
            Process::Wait { body, .. } | Process::SelL { body, .. } | Process::SelR { body, .. } => {
                body.collect_bound(out)
            }
            Process::Branch { left, right, .. } => {
                left.collect_bound(out);
                right.collect_bound(out);
            }
            Process::Cut { chan, provider, user } => {
                out.insert(chan.clone());
                provider.collect_bound(out);
                user.collect_bound(out);
            }
            Process::Spawn { binding, body } => {
                out.extend(binding.restrictions());
                body.collect_bound(out);
            }
        }
    }

    pub fn all_names(&self) -> BTreeSet<Name> {
        let mut out = self.free_names();
        out.extend(self.bound_names());
        out
    }

    pub fn size(&self) -> usize {
        match self {
            Process::Close { .. } | Process::Fwd { .. } => 1,
            Process::Input { body, .. }
            | Process::Wait { body, .. }
            | Process::SelL { body, .. }
            | Process::SelR { body, .. }
            | Process::Spawn { body, .. } => 1 + body.size(),
            Process::Output { body, cont, .. } => 1 + body.size() + cont.size(),
            Process::Branch { left, right, .. } => 1 + left.size() + right.size(),
            Process::Cut { provider, user, .. } => 1 + provider.size() + user.size(),
        }
    }
}

/// Simultaneous capture-avoiding renaming of free names. The caller must
/// ensure target names are not bound in `p` (rename apart first).
pub fn subst_map(p: &Process, map: &BTreeMap<Name, Name>) -> Process {
    if map.is_empty() {
        return p.clone();
    }
    let lookup = |n: &Name| map.get(n).cloned().unwrap_or_else(|| n.clone());
    let without = |names: &[&Name]| -> BTreeMap<Name, Name> {
        map.iter()
            .filter(|(k, _)| !names.contains(k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    };
    match p {
        Process::Output { chan, payload, body, cont } => Process::Output {
            chan: lookup(chan),
            payload: payload.clone(),
            body: Box::new(subst_map(body, &without(&[payload]))),
            cont: Box::new(subst_map(cont, map)),
        },
        Process::Input { chan, bound, body } => Process::Input {
            chan: lookup(chan),
            bound: bound.clone(),
            body: Box::new(subst_map(body, &without(&[bound]))),
        },
        Process::Close { chan } => Process::Close { chan: lookup(chan) },
        Process::Wait { chan, body } => {
            Process::Wait { chan: lookup(chan), body: Box::new(subst_map(body, map)) }
        }
        Process::SelL { chan, body } => {
            Process::SelL { chan: lookup(chan), body: Box::new(subst_map(body, map)) }
        }
        Process::SelR { chan, body } => {
            Process::SelR { chan: lookup(chan), body: Box::new(subst_map(body, map)) }
        }
        Process::Branch { chan, left, right } => Process::Branch {
            chan: lookup(chan),
            left: Box::new(subst_map(left, map)),
            right: Box::new(subst_map(right, map)),
        },
        Process::Fwd { provided, used } => {
            Process::Fwd { provided: lookup(provided), used: lookup(used) }
        }
        Process::Cut { chan, provider, user } => {
            let inner = without(&[chan]);
            Process::Cut {
                chan: chan.clone(),
                provider: Box::new(subst_map(provider, &inner)),
                user: Box::new(subst_map(user, &inner)),
            }
        }
        Process::Spawn { binding, body } => {
            let dom_map: BTreeMap<Name, Name> = binding
                .domain()
                .iter()
                .filter_map(|d| map.get(d).map(|v| (d.clone(), v.clone())))
                .collect();
            let binding = binding.rename_domain(&dom_map).expect("renamed binding stays valid");
            let restr = binding.restrictions();
            let inner: BTreeMap<Name, Name> = map
                .iter()
                .filter(|(k, _)| !restr.contains(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            Process::Spawn { binding, body: Box::new(subst_map(body, &inner)) }
        }
    }
}

/// `P{x -> y}`.
pub fn substitute(p: &Process, x: &Name, y: &Name) -> Process {
    subst_map(p, &[(x.clone(), y.clone())].into_iter().collect())
}

/// `P^(i)`: replace every free name `a` by a fresh copy `a_i`.
pub fn indexed_renaming(
    p: &Process,
    i: u32,
    supply: &mut FreshSupply,
    avoid: &BTreeSet<Name>,
) -> (Process, BTreeMap<Name, Name>) {
    let mut avoid = avoid.clone();
    avoid.extend(p.all_names());
    let mut map = BTreeMap::new();
    for name in p.free_names() {
        let copy = supply.fresh_copy(&name, i, &avoid);
        avoid.insert(copy.clone());
        map.insert(name, copy);
    }
    (subst_map(p, &map), map)
}

/// Restore the convention that bound names are pairwise distinct and
/// disjoint from free names and from `avoid`. Returns the renamings made.
pub fn rename_apart(
    p: &Process,
    supply: &mut FreshSupply,
    avoid: &BTreeSet<Name>,
) -> (Process, Vec<(Name, Name)>) {
    let mut used: BTreeSet<Name> = avoid.clone();
    used.extend(p.free_names());
    used.extend(p.all_names());
    let mut taken: BTreeSet<Name> = avoid.clone();
    taken.extend(p.free_names());
    let mut renamed = Vec::new();

    fn fresh_binder(
        name: &Name,
        taken: &mut BTreeSet<Name>,
        used: &BTreeSet<Name>,
        supply: &mut FreshSupply,
        renamed: &mut Vec<(Name, Name)>,
    ) -> Name {
        if taken.contains(name) {
            let mut avoid = used.clone();
            avoid.extend(taken.iter().cloned());
            let new = supply.fresh(&name.base, &avoid);
            taken.insert(new.clone());
            renamed.push((name.clone(), new.clone()));
            new
        } else {
            taken.insert(name.clone());
            name.clone()
        }
    }

    fn go(
        p: &Process,
        env: &BTreeMap<Name, Name>,
        taken: &mut BTreeSet<Name>,
        used: &BTreeSet<Name>,
        supply: &mut FreshSupply,
        renamed: &mut Vec<(Name, Name)>,
    ) -> Process {
        let res = |n: &Name, env: &BTreeMap<Name, Name>| -> Name {
            env.get(n).cloned().unwrap_or_else(|| n.clone())
        };
        match p {
            Process::Output { chan, payload, body, cont } => {
                let new_payload = fresh_binder(payload, taken, used, supply, renamed);
                let mut env_body = env.clone();
                env_body.insert(payload.clone(), new_payload.clone());
                Process::Output {
                    chan: res(chan, env),
                    payload: new_payload,
                    body: Box::new(go(body, &env_body, taken, used, supply, renamed)),
                    cont: Box::new(go(cont, env, taken, used, supply, renamed)),
                }
            }
            Process::Input { chan, bound, body } => {
                let new_bound = fresh_binder(bound, taken, used, supply, renamed);
                let mut env_body = env.clone();
                env_body.insert(bound.clone(), new_bound.clone());
                Process::Input {
                    chan: res(chan, env),
                    bound: new_bound,
                    body: Box::new(go(body, &env_body, taken, used, supply, renamed)),
                }
            }
            Process::Close { chan } => Process::Close { chan: res(chan, env) },
            Process::Wait { chan, body } => Process::Wait {
                chan: res(chan, env),
                body: Box::new(go(body, env, taken, used, supply, renamed)),
            },
            Process::SelL { chan, body } => Process::SelL {
                chan: res(chan, env),
                body: Box::new(go(body, env, taken, used, supply, renamed)),
            },
            Process::SelR { chan, body } => Process::SelR {
                chan: res(chan, env),
                body: Box::new(go(body, env, taken, used, supply, renamed)),
            },
            Process::Branch { chan, left, right } => Process::Branch {
                chan: res(chan, env),
                left: Box::new(go(left, env, taken, used, supply, renamed)),
                right: Box::new(go(right, env, taken, used, supply, renamed)),
            },
            Process::Fwd { provided, used: u } => {
                Process::Fwd { provided: res(provided, env), used: res(u, env) }
            }
            Process::Cut { chan, provider, user } => {
                let new_chan = fresh_binder(chan, taken, used, supply, renamed);
                let mut env2 = env.clone();
                env2.insert(chan.clone(), new_chan.clone());
                Process::Cut {
                    chan: new_chan,
                    provider: Box::new(go(provider, &env2, taken, used, supply, renamed)),
                    user: Box::new(go(user, &env2, taken, used, supply, renamed)),
                }
            }
            Process::Spawn { binding, body } => {
                let mut env2 = env.clone();
                let mut restr_map = BTreeMap::new();
                for r in binding.restrictions() {
                    let new_r = fresh_binder(&r, taken, used, supply, renamed);
                    if new_r != r {
                        restr_map.insert(r.clone(), new_r.clone());
                    }
                    env2.insert(r, new_r);
                }
                let dom_map: BTreeMap<Name, Name> = binding
                    .domain()
                    .iter()
                    .filter_map(|d| env.get(d).map(|v| (d.clone(), v.clone())))
                    .collect();
                let binding = binding
                    .rename_domain(&dom_map)
                    .and_then(|b| b.rename_restrictions(&restr_map))
                    .expect("renaming apart keeps binding valid");
                Process::Spawn {
                    binding,
                    body: Box::new(go(body, &env2, taken, used, supply, renamed)),
                }
            }
        }
    }

    let out = go(p, &BTreeMap::new(), &mut taken, &used, supply, &mut renamed);
    (out, renamed)
}

/// Order of first free occurrence of the target names, respecting shadowing.
fn occurrence_order(p: &Process, targets: &BTreeSet<Name>, shadow: &BTreeSet<Name>, out: &mut Vec<Name>) {
    let hit = |n: &Name, shadow: &BTreeSet<Name>, out: &mut Vec<Name>| {
        if targets.contains(n) && !shadow.contains(n) && !out.contains(n) {
            out.push(n.clone());
        }
    };
    match p {
        Process::Output { chan, payload, body, cont } => {
            hit(chan, shadow, out);
            let mut sh = shadow.clone();
            sh.insert(payload.clone());
            occurrence_order(body, targets, &sh, out);
            occurrence_order(cont, targets, shadow, out);
        }
        Process::Input { chan, bound, body } => {
            hit(chan, shadow, out);
            let mut sh = shadow.clone();
            sh.insert(bound.clone());
            occurrence_order(body, targets, &sh, out);
        }
        Process::Close { chan } => hit(chan, shadow, out),
        Process::Wait { chan, body } | Process::SelL { chan, body } | Process::SelR { chan, body } => {
            hit(chan, shadow, out);
            occurrence_order(body, targets, shadow, out);
        }
        Process::Branch { chan, left, right } => {
            hit(chan, shadow, out);
            occurrence_order(left, targets, shadow, out);
            occurrence_order(right, targets, shadow, out);
        }
        Process::Fwd { provided, used } => {
            hit(provided, shadow, out);
            hit(used, shadow, out);
        }
        Process::Cut { chan, provider, user } => {
            let mut sh = shadow.clone();
            sh.insert(chan.clone());
            occurrence_order(provider, targets, &sh, out);
            occurrence_order(user, targets, &sh, out);
        }
        Process::Spawn { binding, body } => {
            for d in binding.domain() {
                hit(&d, shadow, out);
            }
            let mut sh = shadow.clone();
            sh.extend(binding.restrictions());
            occurrence_order(body, targets, &sh, out);
        }
    }
}

/// Canonical representative of the alpha-equivalence class: bound names are
/// renamed to reserved names in a deterministic traversal order.
pub fn alpha_canon(p: &Process) -> Process {
    fn canon_name(k: u32) -> Name {
        Name { base: "\u{0}".to_string(), index: Some(k) }
    }
    fn go(p: &Process, env: &BTreeMap<Name, Name>, counter: &mut u32) -> Process {
        let res = |n: &Name, env: &BTreeMap<Name, Name>| -> Name {
            env.get(n).cloned().unwrap_or_else(|| n.clone())
        };
        match p {
            Process::Output { chan, payload, body, cont } => {
                let c = canon_name(*counter);
                *counter += 1;
                let mut env_body = env.clone();
                env_body.insert(payload.clone(), c.clone());
                Process::Output {
                    chan: res(chan, env),
                    payload: c,
                    body: Box::new(go(body, &env_body, counter)),
                    cont: Box::new(go(cont, env, counter)),
                }
            }
            Process::Input { chan, bound, body } => {
                let c = canon_name(*counter);
                *counter += 1;
                let mut env_body = env.clone();
                env_body.insert(bound.clone(), c.clone());
                Process::Input {
                    chan: res(chan, env),
                    bound: c,
                    body: Box::new(go(body, &env_body, counter)),
                }
            }
            Process::Close { chan } => Process::Close { chan: res(chan, env) },
            Process::Wait { chan, body } => Process::Wait {
                chan: res(chan, env),
                body: Box::new(go(body, env, counter)),
            },
            Process::SelL { chan, body } => Process::SelL {
                chan: res(chan, env),
                body: Box::new(go(body, env, counter)),
            },
            Process::SelR { chan, body } => Process::SelR {
                chan: res(chan, env),
                body: Box::new(go(body, env, counter)),
            },
            Process::Branch { chan, left, right } => Process::Branch {
                chan: res(chan, env),
                left: Box::new(go(left, env, counter)),
                right: Box::new(go(right, env, counter)),
            },
            Process::Fwd { provided, used } => {
                Process::Fwd { provided: res(provided, env), used: res(used, env) }
            }
            Process::Cut { chan, provider, user } => {
                let c = canon_name(*counter);
                *counter += 1;
                let mut env2 = env.clone();
                env2.insert(chan.clone(), c.clone());
                Process::Cut {
                    chan: c,
                    provider: Box::new(go(provider, &env2, counter)),
                    user: Box::new(go(user, &env2, counter)),
                }
            }
            Process::Spawn { binding, body } => {
                // Restriction names pick canonical indices by first occurrence
                // in the body; unused ones follow in sorted order.
                let restr = binding.restrictions();
                let mut order = Vec::new();
                occurrence_order(body, &restr, &BTreeSet::new(), &mut order);
                for r in &restr {
                    if !order.contains(r) {
                        order.push(r.clone());
                    }
                }
                let mut env2 = env.clone();
                let mut restr_map = BTreeMap::new();
                for r in order {
                    let c = canon_name(*counter);
                    *counter += 1;
                    restr_map.insert(r.clone(), c.clone());
                    env2.insert(r, c);
                }
                let dom_map: BTreeMap<Name, Name> = binding
                    .domain()
                    .iter()
                    .filter_map(|d| env.get(d).map(|v| (d.clone(), v.clone())))
                    .collect();
                let binding = binding
                    .rename_domain(&dom_map)
                    .and_then(|b| b.rename_restrictions(&restr_map))
                    .expect("alpha canon keeps binding valid");
                Process::Spawn { binding, body: Box::new(go(body, &env2, counter)) }
            }
        }
    }
    go(p, &BTreeMap::new(), &mut 0)
}

pub fn alpha_eq(p: &Process, q: &Process) -> bool {
    alpha_canon(p) == alpha_canon(q)
}

// ---------------------------------------------------------------------------
// Printing. Display names are resolved once per term so that distinct names
// never print alike; indexed names fall back to `base_k` spellings.

const KEYWORDS: &[&str] = &["new", "case", "fwd", "spawn", "inl", "inr", "let", "in"];

pub(crate) fn display_names(names: &BTreeSet<Name>) -> BTreeMap<Name, String> {
    let mut taken: BTreeSet<String> = BTreeSet::new();
    let mut out = BTreeMap::new();
    // Plain names claim their own spelling first.
    for n in names {
        if n.index.is_none() && !KEYWORDS.contains(&n.base.as_str()) {
            taken.insert(n.base.clone());
        }
    }
    for n in names {
        let mut candidate = match n.index {
            None => n.base.clone(),
            Some(i) => format!("{}{}", n.base, i),
        };
        if KEYWORDS.contains(&candidate.as_str()) {
            candidate = format!("{candidate}_");
        }
        if out.values().any(|v| v == &candidate)
            || (n.index.is_some() && taken.contains(&candidate))
        {
            let mut k = 1;
            loop {
                let alt = format!("{candidate}_{k}");
                if !taken.contains(&alt) && !out.values().any(|v| v == &alt) {
                    candidate = alt;
                    break;
                }
                k += 1;
            }
        }
        taken.insert(candidate.clone());
        out.insert(n.clone(), candidate);
    }
    out
}

impl Process {
    fn write(&self, f: &mut fmt::Formatter<'_>, names: &BTreeMap<Name, String>) -> fmt::Result {
        let d = |n: &Name| -> String {
            names.get(n).cloned().unwrap_or_else(|| n.to_string())
        };
        match self {
            Process::Output { chan, payload, body, cont } => {
                write!(f, "{}![{}].(", d(chan), d(payload))?;
                body.write(f, names)?;
                write!(f, " || ")?;
                cont.write(f, names)?;
                write!(f, ")")
            }
            Process::Input { chan, bound, body } => {
                write!(f, "{}?({}).", d(chan), d(bound))?;
                body.write(f, names)
            }
            Process::Close { chan } => write!(f, "{}!()", d(chan)),
            Process::Wait { chan, body } => {
                write!(f, "{}?().", d(chan))?;
                body.write(f, names)
            }
            Process::SelL { chan, body } => {
                write!(f, "{}.inl.", d(chan))?;
                body.write(f, names)
            }
            Process::SelR { chan, body } => {
                write!(f, "{}.inr.", d(chan))?;
                body.write(f, names)
            }
            Process::Branch { chan, left, right } => {
                write!(f, "case {} {{inl: ", d(chan))?;
                left.write(f, names)?;
                write!(f, "; inr: ")?;
                right.write(f, names)?;
                write!(f, "}}")
            }
            Process::Fwd { provided, used } => {
                write!(f, "fwd {} <- {}", d(provided), d(used))
            }
            Process::Cut { chan, provider, user } => {
                write!(f, "new {}.(", d(chan))?;
                provider.write(f, names)?;
                write!(f, " || ")?;
                user.write(f, names)?;
                write!(f, ")")
            }
            Process::Spawn { binding, body } => {
                write!(f, "spawn{{")?;
                for (i, (k, v)) in binding.iter().enumerate() {
                    if i > 0 {
                        write!(f, "; ")?;
                    }
                    write!(f, "{} -> {{", d(k))?;
                    for (j, r) in v.iter().enumerate() {
                        if j > 0 {
                            write!(f, ",")?;
                        }
                        write!(f, "{}", d(r))?;
                    }
                    write!(f, "}}")?;
                }
                write!(f, "}}.")?;
                body.write(f, names)
            }
        }
    }
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = display_names(&self.all_names());
        self.write(f, &names)
    }
}

impl fmt::Debug for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}
