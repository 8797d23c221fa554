//! Explicit-state CTLK model checking over systems of strategy components.
//!
//! A [`BundleSystem`] is one or more strategy components over a shared
//! environment. Each component is a serial sub-transition-graph of the
//! environment restricted to the states it can reach from the initial
//! states. Temporal operators are evaluated per component by fixpoint
//! labeling of the reachable subgraph; because components are
//! state-determined, the runs extending a point are exactly the infinite
//! paths from its state inside the component, so the usual CTL fixpoints
//! compute the run-quantified (bundle) semantics. Knowledge cuts across
//! components: `K[i] ψ` holds at a point iff ψ holds at every reachable
//! point of every component whose state looks the same to agent i.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::{AgentId, Environment, ObsId, StateId};
use crate::logic::Formula;

/// One strategy component: a serial successor graph over the environment's
/// states, restricted to what is reachable from its initial states.
#[derive(Debug, Clone)]
pub struct StrategyComponent {
    /// Reachable states in discovery (BFS) order.
    pub states: Vec<StateId>,
    /// Successor lists in local indices, parallel to `states`.
    pub succ: Vec<Vec<u32>>,
    /// Initial states as local indices.
    pub initial: Vec<u32>,
    index: HashMap<StateId, u32>,
}

impl StrategyComponent {
    /// Build the reachable component for `successors`, a map from state to
    /// its (sorted, deduplicated) successor set. Fails if any reachable
    /// state has no successor.
    pub fn explore<F>(env: &Environment, initial: &[StateId], mut successors: F) -> Result<Self>
    where
        F: FnMut(StateId) -> Result<Vec<StateId>>,
    {
        let mut init: Vec<StateId> = initial.to_vec();
        init.sort();
        init.dedup();
        let mut states = Vec::new();
        let mut index: HashMap<StateId, u32> = HashMap::new();
        let mut queue = VecDeque::new();
        for &s in &init {
            let id = states.len() as u32;
            states.push(s);
            index.insert(s, id);
            queue.push_back(s);
        }
        let mut succ_by_state: Vec<Vec<StateId>> = Vec::new();
        while let Some(s) = queue.pop_front() {
            let mut next = successors(s)?;
            next.sort();
            next.dedup();
            if next.is_empty() {
                return Err(Error::usage(format!(
                    "component is not serial: no successor at [{}]",
                    env.state_desc(s)
                )));
            }
            for &t in &next {
                if !index.contains_key(&t) {
                    let id = states.len() as u32;
                    states.push(t);
                    index.insert(t, id);
                    queue.push_back(t);
                }
            }
            succ_by_state.push(next);
        }
        let succ = succ_by_state
            .into_iter()
            .map(|ts| ts.into_iter().map(|t| index[&t]).collect())
            .collect();
        let initial = init.iter().map(|s| index[s]).collect();
        Ok(StrategyComponent {
            states,
            succ,
            initial,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn local(&self, s: StateId) -> Option<u32> {
        self.index.get(&s).copied()
    }

    /// Successor states (global ids) of a reachable state.
    pub fn successors_of(&self, s: StateId) -> Option<Vec<StateId>> {
        self.local(s)
            .map(|i| self.succ[i as usize].iter().map(|&j| self.states[j as usize]).collect())
    }
}

/// A checkable system: strategy components sharing one environment's
/// observation structure.
#[derive(Debug, Clone)]
pub struct BundleSystem {
    pub env: Arc<Environment>,
    pub components: Vec<StrategyComponent>,
}

impl BundleSystem {
    pub fn new(env: Arc<Environment>, components: Vec<StrategyComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::usage("a system needs at least one component"));
        }
        Ok(BundleSystem { env, components })
    }

    /// All reachable points, component-major in discovery order.
    pub fn reachable(&self) -> impl Iterator<Item = (usize, StateId)> + '_ {
        self.components
            .iter()
            .enumerate()
            .flat_map(|(c, comp)| comp.states.iter().map(move |&s| (c, s)))
    }

    pub fn reachable_count(&self) -> usize {
        self.components.iter().map(|c| c.len()).sum()
    }

    /// Distinct environment states reachable in some component, sorted.
    pub fn reachable_states(&self) -> Vec<StateId> {
        let mut out: Vec<StateId> = self.reachable().map(|(_, s)| s).collect();
        out.sort();
        out.dedup();
        out
    }

    /// Group all reachable points by an agent's observation.
    pub fn obs_groups(&self, agent: AgentId) -> BTreeMap<ObsId, Vec<(usize, u32)>> {
        let mut groups: BTreeMap<ObsId, Vec<(usize, u32)>> = BTreeMap::new();
        for (c, comp) in self.components.iter().enumerate() {
            for (i, &s) in comp.states.iter().enumerate() {
                groups
                    .entry(self.env.obs_id(agent, s))
                    .or_default()
                    .push((c, i as u32));
            }
        }
        groups
    }
}

/// Truth values per reachable point of a system, for one formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    values: Vec<Vec<bool>>,
}

impl Labeling {
    pub fn get(&self, component: usize, local: u32) -> bool {
        self.values[component][local as usize]
    }

    /// Truth value at a (component, state) point; `None` if unreachable.
    pub fn at_state(&self, sys: &BundleSystem, component: usize, state: StateId) -> Option<bool> {
        sys.components[component]
            .local(state)
            .map(|i| self.get(component, i))
    }

    pub fn count_true(&self) -> usize {
        self.values
            .iter()
            .map(|v| v.iter().filter(|&&b| b).count())
            .sum()
    }
}

/// Verdict of a knowledge query at an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum KnowledgeVerdict {
    True,
    False,
    /// The observation occurs at no reachable point of the system.
    Vacuous,
}

/// Label every reachable point of `sys` with the truth value of `formula`.
/// The formula must be ground (no template variables).
pub fn check(sys: &BundleSystem, formula: &Formula) -> Result<Labeling> {
    let values = eval(sys, formula)?;
    Ok(Labeling { values })
}

type Vals = Vec<Vec<bool>>;

fn pointwise2(sys: &BundleSystem, a: &Vals, b: &Vals, f: impl Fn(bool, bool) -> bool) -> Vals {
    sys.components
        .iter()
        .enumerate()
        .map(|(c, comp)| (0..comp.len()).map(|i| f(a[c][i], b[c][i])).collect())
        .collect()
}

fn eval(sys: &BundleSystem, formula: &Formula) -> Result<Vals> {
    let fill = |b: bool| -> Vals {
        sys.components.iter().map(|c| vec![b; c.len()]).collect()
    };
    Ok(match formula {
        Formula::True => fill(true),
        Formula::False => fill(false),
        Formula::Atom(atom) => sys
            .components
            .iter()
            .map(|c| c.states.iter().map(|&s| sys.env.eval_atom(s, atom)).collect())
            .collect(),
        Formula::TVar(x) => {
            return Err(Error::usage(format!(
                "formula contains unbound template variable #{}; apply a substitution first",
                x.0
            )))
        }
        Formula::Not(a) => {
            let a = eval(sys, a)?;
            a.into_iter()
                .map(|v| v.into_iter().map(|b| !b).collect())
                .collect()
        }
        Formula::And(a, b) => {
            let (a, b) = (eval(sys, a)?, eval(sys, b)?);
            pointwise2(sys, &a, &b, |x, y| x && y)
        }
        Formula::Or(a, b) => {
            let (a, b) = (eval(sys, a)?, eval(sys, b)?);
            pointwise2(sys, &a, &b, |x, y| x || y)
        }
        Formula::Implies(a, b) => {
            let (a, b) = (eval(sys, a)?, eval(sys, b)?);
            pointwise2(sys, &a, &b, |x, y| !x || y)
        }
        Formula::Iff(a, b) => {
            let (a, b) = (eval(sys, a)?, eval(sys, b)?);
            pointwise2(sys, &a, &b, |x, y| x == y)
        }
        Formula::AX(a) => next_op(sys, &eval(sys, a)?, true),
        Formula::EX(a) => next_op(sys, &eval(sys, a)?, false),
        Formula::AU(a, b) => until_op(sys, &eval(sys, a)?, &eval(sys, b)?, true),
        Formula::EU(a, b) => until_op(sys, &eval(sys, a)?, &eval(sys, b)?, false),
        Formula::AR(a, b) => release_op(sys, &eval(sys, a)?, &eval(sys, b)?, true),
        Formula::ER(a, b) => release_op(sys, &eval(sys, a)?, &eval(sys, b)?, false),
        Formula::K(agent, a) => {
            if agent.0 >= sys.env.agent_count() {
                return Err(Error::usage("unknown agent in knowledge operator"));
            }
            let inner = eval(sys, a)?;
            knowledge_op(sys, *agent, &inner)
        }
    })
}

fn next_op(sys: &BundleSystem, a: &Vals, universal: bool) -> Vals {
    sys.components
        .iter()
        .enumerate()
        .map(|(c, comp)| {
            (0..comp.len())
                .map(|i| {
                    let succ = &comp.succ[i];
                    if universal {
                        succ.iter().all(|&j| a[c][j as usize])
                    } else {
                        succ.iter().any(|&j| a[c][j as usize])
                    }
                })
                .collect()
        })
        .collect()
}

/// Least fixpoint for `A[a U b]` / `E[a U b]`:
/// Z = b ∨ (a ∧ ∀/∃ next Z), iterated from false.
fn until_op(sys: &BundleSystem, a: &Vals, b: &Vals, universal: bool) -> Vals {
    let mut z: Vals = sys.components.iter().map(|c| vec![false; c.len()]).collect();
    loop {
        let mut changed = false;
        for (c, comp) in sys.components.iter().enumerate() {
            for i in 0..comp.len() {
                if z[c][i] {
                    continue;
                }
                let nxt = {
                    let succ = &comp.succ[i];
                    if universal {
                        succ.iter().all(|&j| z[c][j as usize])
                    } else {
                        succ.iter().any(|&j| z[c][j as usize])
                    }
                };
                let v = b[c][i] || (a[c][i] && nxt);
                if v {
                    z[c][i] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            return z;
        }
    }
}

/// Greatest fixpoint for `A[a R b]` / `E[a R b]`:
/// Z = b ∧ (a ∨ ∀/∃ next Z), iterated from true.
fn release_op(sys: &BundleSystem, a: &Vals, b: &Vals, universal: bool) -> Vals {
    let mut z: Vals = sys.components.iter().map(|c| vec![true; c.len()]).collect();
    loop {
        let mut changed = false;
        for (c, comp) in sys.components.iter().enumerate() {
            for i in 0..comp.len() {
                if !z[c][i] {
                    continue;
                }
                let nxt = {
                    let succ = &comp.succ[i];
                    if universal {
                        succ.iter().all(|&j| z[c][j as usize])
                    } else {
                        succ.iter().any(|&j| z[c][j as usize])
                    }
                };
                let v = b[c][i] && (a[c][i] || nxt);
                if !v {
                    z[c][i] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            return z;
        }
    }
}

/// `K[i] ψ` holds at a point iff ψ holds at every reachable point (in any
/// component) whose state yields the same observation for agent i.
fn knowledge_op(sys: &BundleSystem, agent: AgentId, inner: &Vals) -> Vals {
    let groups = sys.obs_groups(agent);
    let mut verdict: BTreeMap<ObsId, bool> = BTreeMap::new();
    for (obs, members) in &groups {
        verdict.insert(
            *obs,
            members.iter().all(|&(c, i)| inner[c][i as usize]),
        );
    }
    sys.components
        .iter()
        .map(|comp| {
            (0..comp.len())
                .map(|i| verdict[&sys.env.obs_id(agent, comp.states[i])])
                .collect()
        })
        .collect()
}

/// Shared truth value of a knowledge formula at all reachable points with
/// the given observation. The formula must be `K[agent] ψ` for the same
/// agent the observation belongs to.
pub fn holds_at_observation(
    sys: &BundleSystem,
    obs_agent: AgentId,
    obs: ObsId,
    formula: &Formula,
) -> Result<KnowledgeVerdict> {
    match formula.as_knowledge() {
        Some((i, _)) if i == obs_agent => {}
        Some(_) => {
            return Err(Error::usage(
                "knowledge formula agent does not match the observation's agent",
            ))
        }
        None => return Err(Error::usage("expected a knowledge formula K[agent] ...")),
    }
    let labels = check(sys, formula)?;
    let mut found: Option<bool> = None;
    for (c, comp) in sys.components.iter().enumerate() {
        for (i, &s) in comp.states.iter().enumerate() {
            if sys.env.obs_id(obs_agent, s) == obs {
                let v = labels.get(c, i as u32);
                debug_assert!(
                    found.map_or(true, |prev| prev == v),
                    "knowledge value not constant on an observation class"
                );
                found = Some(v);
            }
        }
    }
    Ok(match found {
        Some(true) => KnowledgeVerdict::True,
        Some(false) => KnowledgeVerdict::False,
        None => KnowledgeVerdict::Vacuous,
    })
}

/// Whether `formula` holds at every initial point of every component.
pub fn models(sys: &BundleSystem, formula: &Formula) -> Result<bool> {
    let labels = check(sys, formula)?;
    Ok(sys
        .components
        .iter()
        .enumerate()
        .all(|(c, comp)| comp.initial.iter().all(|&i| labels.get(c, i))))
}

/// First initial point where `formula` fails, as a human-readable witness.
pub fn failing_initial(sys: &BundleSystem, formula: &Formula) -> Result<Option<String>> {
    let labels = check(sys, formula)?;
    for (c, comp) in sys.components.iter().enumerate() {
        for &i in &comp.initial {
            if !labels.get(c, i) {
                return Ok(Some(format!(
                    "component {c}, state [{}]",
                    sys.env.state_desc(comp.states[i as usize])
                )));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{EnvironmentBuilder, VarId};
    use crate::logic::{parse_formula, SymbolTable};

    /// Two-agent environment: bit `u` toggled by A's action `t`, bit `v`
    /// toggled by B's action `t`. Each agent sees only its own bit.
    fn two_bit_env() -> Arc<Environment> {
        let mut b = EnvironmentBuilder::new()
            .agent("A")
            .agent("B")
            .var("u", 0, 1)
            .var("v", 0, 1)
            .actions("A", &["t"])
            .actions("B", &["t"])
            .obs("A", &["u"])
            .obs("B", &["v"])
            .initial(&[0, 0]);
        for u in 0..2i64 {
            for v in 0..2i64 {
                b = b
                    .transition(&[u, v], &["t", "skip"], &[1 - u, v])
                    .transition(&[u, v], &["skip", "t"], &[u, 1 - v])
                    .transition(&[u, v], &["t", "t"], &[1 - u, 1 - v]);
            }
        }
        let env = b.build().unwrap();
        assert!(env.validate().is_empty());
        Arc::new(env)
    }

    /// Single component moving through the full environment graph.
    fn full_system(env: &Arc<Environment>) -> BundleSystem {
        let e = env.clone();
        let comp = StrategyComponent::explore(env, env.initial(), move |s| {
            let mut out = Vec::new();
            for ja in e.joint_actions() {
                out.extend_from_slice(e.successors(s, ja));
            }
            Ok(out)
        })
        .unwrap();
        BundleSystem::new(env.clone(), vec![comp]).unwrap()
    }

    fn syms(env: &Environment) -> SymbolTable {
        SymbolTable::new(env, None)
    }

    #[test]
    fn reachability_closure() {
        let env = two_bit_env();
        let sys = full_system(&env);
        assert_eq!(sys.reachable_count(), 4);
        // single self-loop component reaches only its initial state
        let one = StrategyComponent::explore(&env, &[StateId(0)], |s| Ok(vec![s])).unwrap();
        assert_eq!(one.states, vec![StateId(0)]);
    }

    #[test]
    fn temporal_operators_on_full_graph() {
        let env = two_bit_env();
        let sys = full_system(&env);
        let s = syms(&env);
        // from anywhere, some path sets both bits
        assert!(models(&sys, &parse_formula("EF (u = 1 & v = 1)", &s).unwrap()).unwrap());
        // skip loops mean nothing is inevitable
        assert!(!models(&sys, &parse_formula("AF u = 1", &s).unwrap()).unwrap());
        // EG u = 0 holds initially (always skip)
        assert!(models(&sys, &parse_formula("EG u = 0", &s).unwrap()).unwrap());
        assert!(models(&sys, &parse_formula("AG (u = 0 | u = 1)", &s).unwrap()).unwrap());
        assert!(!models(&sys, &parse_formula("AX u = 0", &s).unwrap()).unwrap());
        assert!(models(&sys, &parse_formula("EX (u = 1 & v = 1)", &s).unwrap()).unwrap());
    }

    #[test]
    fn knowledge_follows_observation_classes() {
        let env = two_bit_env();
        let sys = full_system(&env);
        let s = syms(&env);
        // A sees u, so it knows u's value...
        assert!(models(&sys, &parse_formula("u = 0 => K[A] u = 0", &s).unwrap()).unwrap());
        // ...but never v's (both v-values are reachable in every u-class)
        assert!(models(&sys, &parse_formula("!K[A] v = 0", &s).unwrap()).unwrap());
        assert!(models(&sys, &parse_formula("K[A] true", &s).unwrap()).unwrap());
    }

    #[test]
    fn knowledge_idempotent() {
        let env = two_bit_env();
        let sys = full_system(&env);
        let s = syms(&env);
        for src in ["u = 0", "v = 1", "EF v = 1", "u = 1 & v = 0"] {
            let psi = parse_formula(src, &s).unwrap();
            let k = Formula::know(crate::kernel::AgentId(0), psi);
            let kk = Formula::know(crate::kernel::AgentId(0), k.clone());
            assert_eq!(check(&sys, &k).unwrap(), check(&sys, &kk).unwrap());
        }
    }

    #[test]
    fn knowledge_constant_per_observation() {
        let env = two_bit_env();
        let sys = full_system(&env);
        let s = syms(&env);
        let f = parse_formula("K[A] v = 0", &s).unwrap();
        let labels = check(&sys, &f).unwrap();
        let mut per_obs: BTreeMap<ObsId, bool> = BTreeMap::new();
        for (c, comp) in sys.components.iter().enumerate() {
            for (i, &st) in comp.states.iter().enumerate() {
                let o = env.obs_id(crate::kernel::AgentId(0), st);
                let v = labels.get(c, i as u32);
                if let Some(&prev) = per_obs.get(&o) {
                    assert_eq!(prev, v);
                }
                per_obs.insert(o, v);
            }
        }
    }

    #[test]
    fn knowledge_crosses_components() {
        let env = two_bit_env();
        // component 1 stays put, component 2 toggles v and loops
        let c1 = StrategyComponent::explore(&env, env.initial(), |s| Ok(vec![s])).unwrap();
        let e2 = env.clone();
        let c2 = StrategyComponent::explore(&env, env.initial(), move |s| {
            let v = e2.value(s, VarId(1));
            if v == 0 {
                let ja = e2.joint_of(&[crate::kernel::SKIP, crate::kernel::ActionId(1)]);
                Ok(e2.successors(s, ja).to_vec())
            } else {
                Ok(vec![s])
            }
        })
        .unwrap();
        let sys = BundleSystem::new(env.clone(), vec![c1, c2]).unwrap();
        let s = syms(&env);
        // in component 1 alone, A would know v stays 0; the second
        // component makes v=1 reachable at the same observation of A
        let f = parse_formula("K[A] AG v = 0", &s).unwrap();
        let labels = check(&sys, &f).unwrap();
        assert!(!labels.get(0, 0));
    }

    #[test]
    fn holds_at_observation_verdicts() {
        let env = two_bit_env();
        let sys = full_system(&env);
        let s = syms(&env);
        let a = crate::kernel::AgentId(0);
        let f = parse_formula("K[A] u = 1", &s).unwrap();
        // observation u=0 is ObsId(0), u=1 is ObsId(1)
        assert_eq!(
            holds_at_observation(&sys, a, ObsId(0), &f).unwrap(),
            KnowledgeVerdict::False
        );
        assert_eq!(
            holds_at_observation(&sys, a, ObsId(1), &f).unwrap(),
            KnowledgeVerdict::True
        );
        // a system that never leaves u=0 makes u=1 observations vacuous
        let stay = StrategyComponent::explore(&env, env.initial(), |s| Ok(vec![s])).unwrap();
        let small = BundleSystem::new(env.clone(), vec![stay]).unwrap();
        assert_eq!(
            holds_at_observation(&small, a, ObsId(1), &f).unwrap(),
            KnowledgeVerdict::Vacuous
        );
        // K[i] true is true at any reachable observation
        let kt = parse_formula("K[A] true", &s).unwrap();
        assert_eq!(
            holds_at_observation(&small, a, ObsId(0), &kt).unwrap(),
            KnowledgeVerdict::True
        );
    }

    #[test]
    fn rejects_template_variables() {
        let env = two_bit_env();
        let sys = full_system(&env);
        let f = Formula::TVar(crate::kernel::TVarId(0));
        assert!(check(&sys, &f).is_err());
    }
}
