//! Builders for approximation systems: the concrete system of a total
//! substitution, the maximally permissive top system of a partial one,
//! exhaustive enumeration of imperfect-recall strategy classes, and their
//! union systems.
//!
//! A strategy class is selected by an information mode (does the choice see
//! the whole state or only the agent's observation), a recall mode, and
//! whether the choice must be consistent with some truth-value completion of
//! the partial substitution at every reachable state. Only the
//! imperfect-recall classes are enumerable here: their choices factor
//! through the current state or observation, so each strategy is a finite
//! object. The perfect-recall classes quantify over history-dependent
//! strategies — infinite objects — and requesting one is an explicit
//! refusal, not an approximation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::{
    guard_satisfiable, ActionId, AgentId, Environment, JointTemplate, ObsId, StateId,
    Substitution, SKIP,
};
use crate::mck::{BundleSystem, StrategyComponent};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfoMode {
    /// Choices may depend on the full current state.
    Pi,
    /// Choices see only the agent's observation of the current state.
    Ii,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecallMode {
    Pr,
    Ir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsMode {
    /// Substitution consistent: at every reachable state the successor set
    /// equals the template-enabled set under some truth-value completion of
    /// the partial substitution.
    Sc,
    /// No consistency requirement; choices are template-independent.
    Nsc,
}

/// Which system to build for a given (partial) substitution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeId {
    /// `I(E, Pθ)` for a total θ.
    Concrete,
    /// Single component offering, at each state, every action of a clause
    /// whose guard is satisfiable under the partial substitution.
    Top,
    Class {
        info: InfoMode,
        recall: RecallMode,
        cons: ConsMode,
    },
}

impl SchemeId {
    pub fn parse(s: &str) -> Result<SchemeId> {
        match s {
            "concrete" => Ok(SchemeId::Concrete),
            "top" => Ok(SchemeId::Top),
            _ => {
                let parts: Vec<&str> = s.split('-').collect();
                if parts.len() != 3 {
                    return Err(Error::usage(format!(
                        "unknown scheme '{s}' (expected top, concrete or e.g. ii-ir-sc)"
                    )));
                }
                let info = match parts[0] {
                    "pi" => InfoMode::Pi,
                    "ii" => InfoMode::Ii,
                    _ => return Err(Error::usage(format!("unknown information mode '{}'", parts[0]))),
                };
                let recall = match parts[1] {
                    "pr" => RecallMode::Pr,
                    "ir" => RecallMode::Ir,
                    _ => return Err(Error::usage(format!("unknown recall mode '{}'", parts[1]))),
                };
                let cons = match parts[2] {
                    "sc" => ConsMode::Sc,
                    "nsc" => ConsMode::Nsc,
                    _ => return Err(Error::usage(format!("unknown consistency mode '{}'", parts[2]))),
                };
                Ok(SchemeId::Class { info, recall, cons })
            }
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeId::Concrete => write!(f, "concrete"),
            SchemeId::Top => write!(f, "top"),
            SchemeId::Class { info, recall, cons } => write!(
                f,
                "{}-{}-{}",
                match info {
                    InfoMode::Pi => "pi",
                    InfoMode::Ii => "ii",
                },
                match recall {
                    RecallMode::Pr => "pr",
                    RecallMode::Ir => "ir",
                },
                match cons {
                    ConsMode::Sc => "sc",
                    ConsMode::Nsc => "nsc",
                }
            ),
        }
    }
}

/// Enumeration limits. Strategy classes are exponential-size objects;
/// exceeding a limit is a refusal, never a silent truncation.
#[derive(Debug, Clone)]
pub struct Budget {
    /// Cap on states reachable under any strategy (closure under all joint
    /// actions from the initial states).
    pub max_reachable_states: usize,
    pub max_obs_per_agent: usize,
    pub max_actions_per_agent: usize,
    /// Cap on enumerated candidates (strategies, or strict-implementation
    /// tables in the exhaustive finder).
    pub max_candidates: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_reachable_states: 64,
            max_obs_per_agent: 8,
            max_actions_per_agent: 4,
            max_candidates: 1 << 16,
        }
    }
}

/// A memoryless strategy: per-agent choice maps keyed by state (pi) or
/// observation (ii), with the successor map they induce on the states the
/// strategy itself reaches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IRStrategy {
    pub info: InfoMode,
    /// Per agent: key is the raw state id (pi) or observation id (ii).
    pub choices: Vec<BTreeMap<u32, Vec<ActionId>>>,
    /// Induced successor map, restricted to the strategy's reachable states.
    pub succ_map: BTreeMap<StateId, Vec<StateId>>,
    pub initial: Vec<StateId>,
}

impl IRStrategy {
    pub fn component(&self, env: &Environment) -> Result<StrategyComponent> {
        StrategyComponent::explore(env, &self.initial, |s| {
            Ok(self.succ_map.get(&s).cloned().unwrap_or_default())
        })
    }
}

/// The concrete system `I(E, Pθ)` of a total substitution: one component
/// whose moves are exactly the template-enabled joint actions.
pub fn build_concrete(
    env: &Arc<Environment>,
    templates: &JointTemplate,
    subst: &Substitution,
) -> Result<BundleSystem> {
    if !subst.is_total_for(templates) {
        return Err(Error::usage(
            "concrete system requires a total substitution",
        ));
    }
    let e = env.clone();
    let templates = templates.clone();
    let subst = subst.clone();
    let comp = StrategyComponent::explore(env, env.initial(), move |s| {
        let mut out = Vec::new();
        for ja in crate::kernel::joint_enabled(&e, &templates, &subst, s)? {
            out.extend_from_slice(e.successors(s, ja));
        }
        Ok(out)
    })?;
    BundleSystem::new(env.clone(), vec![comp])
}

/// Per-agent actions the top system offers at a state: every action of a
/// clause whose guard is satisfiable under the partial substitution, plus
/// `skip` when the implicit fall-through guard is satisfiable.
pub fn offered_actions(
    env: &Environment,
    templates: &JointTemplate,
    subst: &Substitution,
    agent: AgentId,
    state: StateId,
) -> Vec<ActionId> {
    let tpl = &templates.templates[agent.0];
    let mut out = BTreeSet::new();
    for clause in &tpl.clauses {
        if guard_satisfiable(env, &clause.guard, state, subst) {
            out.insert(clause.action);
        }
    }
    if guard_satisfiable(env, &tpl.implicit_skip_guard(), state, subst) {
        out.insert(SKIP);
    }
    out.into_iter().collect()
}

/// The top approximation: a single component that allows, at each state,
/// every joint action whose components are offered per agent. For a total
/// substitution satisfiability degenerates to evaluation, so the result has
/// the same successor map as the concrete system.
pub fn build_top(
    env: &Arc<Environment>,
    templates: &JointTemplate,
    subst: &Substitution,
) -> Result<BundleSystem> {
    let e = env.clone();
    let templates = templates.clone();
    let subst = subst.clone();
    let mut offered_memo: HashMap<(usize, ObsId), Vec<ActionId>> = HashMap::new();
    let comp = StrategyComponent::explore(env, env.initial(), move |s| {
        let per_agent: Vec<Vec<ActionId>> = e
            .agents()
            .map(|i| {
                offered_memo
                    .entry((i.0, e.obs_id(i, s)))
                    .or_insert_with(|| offered_actions(&e, &templates, &subst, i, s))
                    .clone()
            })
            .collect();
        Ok(joint_successors(&e, s, &per_agent))
    })?;
    BundleSystem::new(env.clone(), vec![comp])
}

/// Successors of `s` under every joint action in the product of the
/// per-agent action sets.
fn joint_successors(env: &Environment, s: StateId, per_agent: &[Vec<ActionId>]) -> Vec<StateId> {
    let mut out = Vec::new();
    if per_agent.iter().any(|v| v.is_empty()) {
        return out;
    }
    let mut idx = vec![0usize; per_agent.len()];
    loop {
        let parts: Vec<ActionId> = idx.iter().zip(per_agent).map(|(&i, v)| v[i]).collect();
        out.extend_from_slice(env.successors(s, env.joint_of(&parts)));
        let mut k = per_agent.len();
        loop {
            if k == 0 {
                out.sort();
                out.dedup();
                return out;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < per_agent[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// States reachable from the initial states under arbitrary joint actions.
/// This bounds the reachable set of every strategy.
pub fn reachable_under_any(env: &Environment) -> Vec<StateId> {
    let mut seen: BTreeSet<StateId> = env.initial().iter().copied().collect();
    let mut queue: Vec<StateId> = env.initial().to_vec();
    while let Some(s) = queue.pop() {
        for ja in env.joint_actions() {
            for &t in env.successors(s, ja) {
                if seen.insert(t) {
                    queue.push(t);
                }
            }
        }
    }
    seen.into_iter().collect()
}

fn check_enumeration_budget(env: &Environment, budget: &Budget) -> Result<Vec<StateId>> {
    let reach = reachable_under_any(env);
    if reach.len() > budget.max_reachable_states {
        return Err(Error::Budget(format!(
            "{} reachable states exceed the limit of {} for strategy enumeration",
            reach.len(),
            budget.max_reachable_states
        )));
    }
    for i in env.agents() {
        let obs: BTreeSet<ObsId> = reach.iter().map(|&s| env.obs_id(i, s)).collect();
        if obs.len() > budget.max_obs_per_agent {
            return Err(Error::Budget(format!(
                "agent {} has {} reachable observations, limit {}",
                env.agent_name(i),
                obs.len(),
                budget.max_obs_per_agent
            )));
        }
        if env.action_count(i) > budget.max_actions_per_agent {
            return Err(Error::Budget(format!(
                "agent {} has {} actions, limit {}",
                env.agent_name(i),
                env.action_count(i),
                budget.max_actions_per_agent
            )));
        }
    }
    Ok(reach)
}

/// All memoryless strategies of the class, deduplicated by the successor map
/// they induce on their own reachable states. Choice maps are extended
/// lazily (branching when a new state/observation is first reached), so keys
/// cover exactly the strategy's reachable set.
pub fn enumerate_ir_strategies(
    env: &Arc<Environment>,
    templates: &JointTemplate,
    subst: &Substitution,
    info: InfoMode,
    cons: ConsMode,
    budget: &Budget,
) -> Result<Vec<IRStrategy>> {
    check_enumeration_budget(env, budget)?;

    let n_agents = env.agent_count();
    // nonempty action subsets per agent, in canonical (bitmask) order
    let subsets: Vec<Vec<Vec<ActionId>>> = (0..n_agents)
        .map(|i| {
            let n = env.action_count(AgentId(i));
            (1u32..(1 << n))
                .map(|mask| {
                    (0..n)
                        .filter(|k| mask & (1 << k) != 0)
                        .map(ActionId)
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut search = StrategySearch {
        env: env.clone(),
        templates: templates.clone(),
        subst: subst.clone(),
        info,
        cons,
        choices: vec![BTreeMap::new(); n_agents],
        subsets,
        out: Vec::new(),
        seen: HashSet::new(),
        completed: 0,
        max_candidates: budget.max_candidates,
    };
    search.run()?;
    Ok(search.out)
}

struct StrategySearch {
    env: Arc<Environment>,
    templates: JointTemplate,
    subst: Substitution,
    info: InfoMode,
    cons: ConsMode,
    choices: Vec<BTreeMap<u32, Vec<ActionId>>>,
    subsets: Vec<Vec<Vec<ActionId>>>,
    out: Vec<IRStrategy>,
    seen: HashSet<Vec<(StateId, Vec<StateId>)>>,
    completed: u64,
    max_candidates: u64,
}

impl StrategySearch {
    fn key(&self, agent: AgentId, s: StateId) -> u32 {
        match self.info {
            InfoMode::Pi => s.0,
            InfoMode::Ii => self.env.obs_id(agent, s).0,
        }
    }

    fn run(&mut self) -> Result<()> {
        self.explore_branches()
    }

    /// Depth-first search over partial choice maps: run the reachability
    /// closure; on the first state whose choice is missing, branch over the
    /// action subsets; when the closure completes, record the strategy.
    fn explore_branches(&mut self) -> Result<()> {
        // BFS with current partial choices
        let mut visited: BTreeSet<StateId> = BTreeSet::new();
        let mut queue: Vec<StateId> = self.env.initial().to_vec();
        let mut succ_map: BTreeMap<StateId, Vec<StateId>> = BTreeMap::new();
        let mut order: Vec<StateId> = Vec::new();
        for s in &queue {
            visited.insert(*s);
        }
        queue.reverse();
        while let Some(s) = queue.pop() {
            order.push(s);
            // branch on the first agent whose choice at this state is unset
            for i in 0..self.env.agent_count() {
                let key = self.key(AgentId(i), s);
                if !self.choices[i].contains_key(&key) {
                    for subset_idx in 0..self.subsets[i].len() {
                        let subset = self.subsets[i][subset_idx].clone();
                        self.choices[i].insert(key, subset);
                        self.explore_branches()?;
                        self.choices[i].remove(&key);
                    }
                    return Ok(());
                }
            }
            let per_agent: Vec<Vec<ActionId>> = (0..self.env.agent_count())
                .map(|i| self.choices[i][&self.key(AgentId(i), s)].clone())
                .collect();
            let succ = joint_successors(&self.env, s, &per_agent);
            // strategy totality: every reachable state needs a successor
            if succ.is_empty() {
                return Ok(());
            }
            if self.cons == ConsMode::Sc && !self.substitution_consistent_at(s, &succ)? {
                return Ok(());
            }
            for &t in &succ {
                if visited.insert(t) {
                    queue.push(t);
                }
            }
            succ_map.insert(s, succ);
        }

        self.completed += 1;
        if self.completed > self.max_candidates {
            return Err(Error::Budget(format!(
                "strategy enumeration exceeded {} candidates",
                self.max_candidates
            )));
        }
        let canon: Vec<(StateId, Vec<StateId>)> =
            succ_map.iter().map(|(k, v)| (*k, v.clone())).collect();
        if self.seen.insert(canon) {
            // restrict choice maps to the keys actually reached
            let mut used: Vec<BTreeSet<u32>> =
                vec![BTreeSet::new(); self.env.agent_count()];
            for &s in succ_map.keys() {
                for i in 0..self.env.agent_count() {
                    used[i].insert(self.key(AgentId(i), s));
                }
            }
            let choices = self
                .choices
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    m.iter()
                        .filter(|(k, _)| used[i].contains(k))
                        .map(|(k, v)| (*k, v.clone()))
                        .collect()
                })
                .collect();
            self.out.push(IRStrategy {
                info: self.info,
                choices,
                succ_map,
                initial: self.env.initial().to_vec(),
            });
        }
        Ok(())
    }

    /// Does some truth-value completion of the unbound template variables
    /// make the template-enabled successor set at `s` equal to `succ`?
    fn substitution_consistent_at(&self, s: StateId, succ: &[StateId]) -> Result<bool> {
        let mut unbound: Vec<crate::kernel::TVarId> = Vec::new();
        for x in self.templates.all_tvars() {
            if self.subst.get(x).is_none() {
                unbound.push(x);
            }
        }
        if unbound.len() > 20 {
            return Err(Error::Budget(format!(
                "{} unbound template variables in consistency check",
                unbound.len()
            )));
        }
        let mut ext = self.subst.clone();
        for mask in 0u64..(1 << unbound.len()) {
            for (k, &x) in unbound.iter().enumerate() {
                ext.bind(
                    x,
                    crate::kernel::BoolExpr::Const(mask & (1 << k) != 0),
                );
            }
            let mut induced = Vec::new();
            for ja in crate::kernel::joint_enabled(&self.env, &self.templates, &ext, s)? {
                induced.extend_from_slice(self.env.successors(s, ja));
            }
            induced.sort();
            induced.dedup();
            if induced == succ {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Union system: one component per strategy, sharing the environment's
/// observation structure.
pub fn build_union_system(env: &Arc<Environment>, strategies: &[IRStrategy]) -> Result<BundleSystem> {
    if strategies.is_empty() {
        return Err(Error::usage("union of zero strategies"));
    }
    let components = strategies
        .iter()
        .map(|s| s.component(env))
        .collect::<Result<Vec<_>>>()?;
    BundleSystem::new(env.clone(), components)
}

/// Build the system an approximation scheme assigns to a partial
/// substitution. Perfect-recall classes are refused.
pub fn build_scheme(
    env: &Arc<Environment>,
    templates: &JointTemplate,
    subst: &Substitution,
    scheme: SchemeId,
    budget: &Budget,
) -> Result<BundleSystem> {
    match scheme {
        SchemeId::Concrete => build_concrete(env, templates, subst),
        SchemeId::Top => build_top(env, templates, subst),
        SchemeId::Class {
            recall: RecallMode::Pr,
            ..
        } => Err(Error::UnsupportedScheme(scheme.to_string())),
        SchemeId::Class { info, cons, .. } => {
            let strategies = enumerate_ir_strategies(env, templates, subst, info, cons, budget)?;
            build_union_system(env, &strategies)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{
        Atom, BoolExpr, Clause, EnvironmentBuilder, ProtocolTemplate, Rel, TVarId, TemplateVar,
        VarId,
    };

    /// Single-agent fork: from s=0 action a goes to 1, action b goes to 2;
    /// 1 and 2 absorb under both actions.
    fn fork_env() -> Arc<Environment> {
        let env = EnvironmentBuilder::new()
            .agent("Ag")
            .var("s", 0, 2)
            .actions("Ag", &["a", "b"])
            .obs("Ag", &["s"])
            .initial(&[0])
            .transition(&[0], &["a"], &[1])
            .transition(&[0], &["b"], &[2])
            .transition(&[1], &["a"], &[1])
            .transition(&[1], &["b"], &[1])
            .transition(&[2], &["a"], &[2])
            .transition(&[2], &["b"], &[2])
            .build()
            .unwrap();
        assert!(env.validate().is_empty());
        Arc::new(env)
    }

    fn fork_templates(env: &Environment) -> JointTemplate {
        let a = env.action_named(AgentId(0), "a").unwrap();
        let b = env.action_named(AgentId(0), "b").unwrap();
        JointTemplate {
            vars: vec![TemplateVar {
                name: "x".into(),
                agent: AgentId(0),
            }],
            templates: vec![ProtocolTemplate {
                agent: AgentId(0),
                clauses: vec![
                    Clause {
                        guard: BoolExpr::TVar(TVarId(0)),
                        action: a,
                    },
                    Clause {
                        guard: BoolExpr::TVar(TVarId(0)).not(),
                        action: b,
                    },
                ],
            }],
        }
    }

    #[test]
    fn top_offers_all_satisfiable_clauses() {
        let env = fork_env();
        let templates = fork_templates(&env);
        let sys = build_top(&env, &templates, &Substitution::empty()).unwrap();
        let comp = &sys.components[0];
        // from 0 both branches are open; skip is never offered since the
        // implicit guard x & !x is unsatisfiable
        assert_eq!(
            comp.successors_of(StateId(0)).unwrap(),
            vec![StateId(1), StateId(2)]
        );
        assert_eq!(sys.reachable_count(), 3);
    }

    #[test]
    fn top_of_total_substitution_matches_concrete() {
        let env = fork_env();
        let templates = fork_templates(&env);
        for bind in [true, false] {
            let mut theta = Substitution::empty();
            theta.bind(TVarId(0), BoolExpr::Const(bind));
            let top = build_top(&env, &templates, &theta).unwrap();
            let conc = build_concrete(&env, &templates, &theta).unwrap();
            for s in conc.reachable_states() {
                assert_eq!(
                    top.components[0].successors_of(s),
                    conc.components[0].successors_of(s)
                );
            }
            assert_eq!(top.reachable_states(), conc.reachable_states());
        }
    }

    #[test]
    fn concrete_requires_total_substitution() {
        let env = fork_env();
        let templates = fork_templates(&env);
        assert!(build_concrete(&env, &templates, &Substitution::empty()).is_err());
    }

    #[test]
    fn all_skip_protocol_self_loops() {
        let env = fork_env();
        let templates = {
            let mut t = fork_templates(&env);
            // guards that never hold: only the implicit skip clause fires
            let never = BoolExpr::Atom(Atom {
                var: VarId(0),
                rel: Rel::Ge,
                bound: 99,
            });
            t.templates[0].clauses[0].guard = never.clone();
            t.templates[0].clauses[1].guard = never;
            t
        };
        let mut theta = Substitution::empty();
        theta.bind(TVarId(0), BoolExpr::Const(true));
        let sys = build_concrete(&env, &templates, &theta).unwrap();
        assert_eq!(
            sys.components[0].successors_of(StateId(0)).unwrap(),
            vec![StateId(0)]
        );
        assert_eq!(sys.reachable_count(), 1);
    }

    #[test]
    fn sc_strategies_pick_one_branch() {
        // the fork is the canonical case where the top strategy is not
        // substitution consistent: every enabled set is {a} or {b}
        let env = fork_env();
        let templates = fork_templates(&env);
        let strategies = enumerate_ir_strategies(
            &env,
            &templates,
            &Substitution::empty(),
            InfoMode::Ii,
            ConsMode::Sc,
            &Budget::default(),
        )
        .unwrap();
        assert_eq!(strategies.len(), 2);
        let mut starts: Vec<Vec<StateId>> = strategies
            .iter()
            .map(|s| s.succ_map[&StateId(0)].clone())
            .collect();
        starts.sort();
        assert_eq!(starts, vec![vec![StateId(1)], vec![StateId(2)]]);
        // no sc strategy branches both ways at once
        assert!(strategies
            .iter()
            .all(|s| s.succ_map[&StateId(0)] != vec![StateId(1), StateId(2)]));
    }

    #[test]
    fn top_strategy_is_among_nsc() {
        let env = fork_env();
        let templates = fork_templates(&env);
        let top = build_top(&env, &templates, &Substitution::empty()).unwrap();
        let strategies = enumerate_ir_strategies(
            &env,
            &templates,
            &Substitution::empty(),
            InfoMode::Ii,
            ConsMode::Nsc,
            &Budget::default(),
        )
        .unwrap();
        let top_map: BTreeMap<StateId, Vec<StateId>> = top.components[0]
            .states
            .iter()
            .map(|&s| (s, top.components[0].successors_of(s).unwrap()))
            .collect();
        assert!(strategies.iter().any(|s| s.succ_map == top_map));
    }

    #[test]
    fn nsc_single_observation_counting() {
        // one non-skip action, two states sharing one observation: the
        // choice map has a single key with three nonempty subsets, and each
        // induces a distinct successor map
        let env = Arc::new(
            EnvironmentBuilder::new()
                .agent("Ag")
                .var("hidden", 0, 1)
                .var("o", 0, 0)
                .actions("Ag", &["a"])
                .obs("Ag", &["o"])
                .initial(&[0, 0])
                .transition(&[0, 0], &["a"], &[1, 0])
                .transition(&[1, 0], &["a"], &[1, 0])
                .build()
                .unwrap(),
        );
        assert!(env.validate().is_empty());
        let templates = JointTemplate {
            vars: vec![TemplateVar {
                name: "x".into(),
                agent: AgentId(0),
            }],
            templates: vec![ProtocolTemplate {
                agent: AgentId(0),
                clauses: vec![Clause {
                    guard: BoolExpr::TVar(TVarId(0)),
                    action: env.action_named(AgentId(0), "a").unwrap(),
                }],
            }],
        };
        let strategies = enumerate_ir_strategies(
            &env,
            &templates,
            &Substitution::empty(),
            InfoMode::Ii,
            ConsMode::Nsc,
            &Budget::default(),
        )
        .unwrap();
        assert_eq!(strategies.len(), 3);
    }

    #[test]
    fn union_and_duplicate_invariance() {
        let env = fork_env();
        let templates = fork_templates(&env);
        let strategies = enumerate_ir_strategies(
            &env,
            &templates,
            &Substitution::empty(),
            InfoMode::Ii,
            ConsMode::Sc,
            &Budget::default(),
        )
        .unwrap();
        let single = build_union_system(&env, &strategies[..1].to_vec()).unwrap();
        assert_eq!(single.components.len(), 1);
        // duplicating a component changes nothing about checking results
        let dup = build_union_system(
            &env,
            &[strategies[0].clone(), strategies[0].clone()],
        )
        .unwrap();
        let syms = crate::logic::SymbolTable::new(&env, None);
        let f = crate::logic::parse_formula("K[Ag] EF s = 1", &syms).unwrap();
        assert_eq!(
            crate::mck::models(&single, &f).unwrap(),
            crate::mck::models(&dup, &f).unwrap()
        );
        assert!(build_union_system(&env, &[]).is_err());
    }

    #[test]
    fn scheme_dispatch_and_pr_refusal() {
        let env = fork_env();
        let templates = fork_templates(&env);
        let budget = Budget::default();
        let top = build_scheme(&env, &templates, &Substitution::empty(), SchemeId::Top, &budget);
        assert!(top.is_ok());
        let pr = build_scheme(
            &env,
            &templates,
            &Substitution::empty(),
            SchemeId::parse("pi-pr-sc").unwrap(),
            &budget,
        );
        match pr {
            Err(Error::UnsupportedScheme(s)) => assert_eq!(s, "pi-pr-sc"),
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn budget_refusals() {
        let env = fork_env();
        let templates = fork_templates(&env);
        let tight = Budget {
            max_reachable_states: 1,
            ..Budget::default()
        };
        assert!(matches!(
            enumerate_ir_strategies(
                &env,
                &templates,
                &Substitution::empty(),
                InfoMode::Ii,
                ConsMode::Nsc,
                &tight
            ),
            Err(Error::Budget(_))
        ));
    }

    #[test]
    fn monotonicity_of_top_in_substitution() {
        let env = fork_env();
        let templates = fork_templates(&env);
        let empty = Substitution::empty();
        let mut bound = Substitution::empty();
        bound.bind(TVarId(0), BoolExpr::Const(true));
        let big = build_top(&env, &templates, &empty).unwrap();
        let small = build_top(&env, &templates, &bound).unwrap();
        for s in small.reachable_states() {
            let small_succ = small.components[0].successors_of(s).unwrap();
            let big_succ = big.components[0].successors_of(s).unwrap();
            assert!(small_succ.iter().all(|t| big_succ.contains(t)));
        }
    }
}
