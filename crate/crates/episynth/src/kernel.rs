//! Core semantic objects: finite-variable environments, observations,
//! guarded-command protocol templates, template-variable substitutions, and
//! guard evaluation.
//!
//! States are total assignments of each declared variable to a value in its
//! finite domain. The full assignment space is interned in mixed-radix order
//! (first declared variable most significant), so a [`StateId`] is both an
//! identity and an encoding; all iteration follows interning order, which
//! makes every algorithm built on top deterministic. Observations are
//! projections of states onto an agent's declared observable variables and
//! are interned the same way per agent.
//!
//! Everything here is immutable after construction and safe to share across
//! threads; all operations are pure reads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Diagnostic, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObsId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TVarId(pub usize);

/// Index into an agent's action list. Index 0 is always `skip`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

pub const SKIP: ActionId = ActionId(0);

/// Index into the joint-action space (mixed radix over per-agent actions,
/// first agent most significant).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JointActionId(pub u32);

/// A variable with an inclusive finite integer domain `lo..=hi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub lo: i64,
    pub hi: i64,
}

impl VarDecl {
    pub fn size(&self) -> u64 {
        (self.hi - self.lo + 1) as u64
    }

    pub fn contains(&self, v: i64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rel {
    Eq,
    Le,
    Ge,
}

impl fmt::Display for Rel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rel::Eq => "=",
            Rel::Le => "<=",
            Rel::Ge => ">=",
        })
    }
}

/// Comparison atom `var ⋈ constant`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Atom {
    pub var: VarId,
    pub rel: Rel,
    pub bound: i64,
}

impl Atom {
    pub fn holds(&self, value: i64) -> bool {
        match self.rel {
            Rel::Eq => value == self.bound,
            Rel::Le => value <= self.bound,
            Rel::Ge => value >= self.bound,
        }
    }
}

/// Quantifier-free boolean formula over comparison atoms and template
/// variables. Guards in protocol templates may mention template variables;
/// formulas bound by a substitution may not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoolExpr {
    Const(bool),
    Atom(Atom),
    TVar(TVarId),
    Not(Box<BoolExpr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
    Implies(Box<BoolExpr>, Box<BoolExpr>),
    Iff(Box<BoolExpr>, Box<BoolExpr>),
}

impl BoolExpr {
    pub fn not(self) -> Self {
        BoolExpr::Not(Box::new(self))
    }

    pub fn and(self, other: Self) -> Self {
        BoolExpr::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Self) -> Self {
        BoolExpr::Or(Box::new(self), Box::new(other))
    }

    /// Conjunction of a list; empty list is `true`.
    pub fn conj(mut parts: Vec<BoolExpr>) -> Self {
        match parts.len() {
            0 => BoolExpr::Const(true),
            1 => parts.pop().unwrap(),
            _ => {
                let mut it = parts.into_iter();
                let first = it.next().unwrap();
                it.fold(first, |acc, e| acc.and(e))
            }
        }
    }

    /// Disjunction of a list; empty list is `false`.
    pub fn disj(mut parts: Vec<BoolExpr>) -> Self {
        match parts.len() {
            0 => BoolExpr::Const(false),
            1 => parts.pop().unwrap(),
            _ => {
                let mut it = parts.into_iter();
                let first = it.next().unwrap();
                it.fold(first, |acc, e| acc.or(e))
            }
        }
    }

    /// Collect the template variables occurring in the expression.
    pub fn tvars(&self, out: &mut BTreeSet<TVarId>) {
        match self {
            BoolExpr::Const(_) | BoolExpr::Atom(_) => {}
            BoolExpr::TVar(x) => {
                out.insert(*x);
            }
            BoolExpr::Not(a) => a.tvars(out),
            BoolExpr::And(a, b)
            | BoolExpr::Or(a, b)
            | BoolExpr::Implies(a, b)
            | BoolExpr::Iff(a, b) => {
                a.tvars(out);
                b.tvars(out);
            }
        }
    }

    /// Collect the environment variables mentioned by atoms.
    pub fn atom_vars(&self, out: &mut BTreeSet<VarId>) {
        match self {
            BoolExpr::Const(_) | BoolExpr::TVar(_) => {}
            BoolExpr::Atom(a) => {
                out.insert(a.var);
            }
            BoolExpr::Not(a) => a.atom_vars(out),
            BoolExpr::And(a, b)
            | BoolExpr::Or(a, b)
            | BoolExpr::Implies(a, b)
            | BoolExpr::Iff(a, b) => {
                a.atom_vars(out);
                b.atom_vars(out);
            }
        }
    }
}

/// Observation of a state by an agent: the restriction of the state's
/// valuation to the agent's observable variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub agent: AgentId,
    /// `(var, value)` pairs, in variable-declaration order.
    pub values: Vec<(VarId, i64)>,
}

/// One guarded clause `guard -> action` of a protocol template.
#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub guard: BoolExpr,
    pub action: ActionId,
}

/// Guarded-command protocol template for one agent. The stored clauses are
/// exactly as written; the fall-through clause that selects `skip` when no
/// guard holds is computed, never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolTemplate {
    pub agent: AgentId,
    pub clauses: Vec<Clause>,
}

impl ProtocolTemplate {
    /// Template variables occurring in this template's guards.
    pub fn tvars(&self) -> BTreeSet<TVarId> {
        let mut out = BTreeSet::new();
        for c in &self.clauses {
            c.guard.tvars(&mut out);
        }
        out
    }

    /// Guard of the implicit skip clause: the conjunction of the negations
    /// of all stored guards.
    pub fn implicit_skip_guard(&self) -> BoolExpr {
        BoolExpr::conj(self.clauses.iter().map(|c| c.guard.clone().not()).collect())
    }
}

/// A template variable together with the agent whose template owns it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateVar {
    pub name: String,
    pub agent: AgentId,
}

/// One protocol template per agent, plus the registry of template variables.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTemplate {
    pub vars: Vec<TemplateVar>,
    /// Indexed by agent.
    pub templates: Vec<ProtocolTemplate>,
}

impl JointTemplate {
    pub fn var_named(&self, name: &str) -> Option<TVarId> {
        self.vars.iter().position(|v| v.name == name).map(TVarId)
    }

    pub fn var_name(&self, x: TVarId) -> &str {
        &self.vars[x.0].name
    }

    pub fn owner(&self, x: TVarId) -> AgentId {
        self.vars[x.0].agent
    }

    pub fn all_tvars(&self) -> Vec<TVarId> {
        (0..self.vars.len()).map(TVarId).collect()
    }

    /// Structural checks: distinct actions per template, guards local to the
    /// owning agent, and template variables used only by their owner.
    pub fn validate(&self, env: &Environment) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        for tpl in &self.templates {
            let agent = tpl.agent;
            let mut seen = BTreeSet::new();
            for clause in &tpl.clauses {
                if !seen.insert(clause.action) {
                    diags.push(Diagnostic::new(
                        "distinct-actions",
                        format!(
                            "template of agent {} repeats action {}",
                            env.agent_name(agent),
                            env.action_name(agent, clause.action)
                        ),
                    ));
                }
                match env.is_local(&clause.guard, agent) {
                    Ok(true) => {}
                    Ok(false) => diags.push(Diagnostic::new(
                        "locality",
                        format!(
                            "guard of agent {} mentions a variable outside its observation",
                            env.agent_name(agent)
                        ),
                    )),
                    Err(e) => diags.push(Diagnostic::new("locality", e.to_string())),
                }
                let mut tv = BTreeSet::new();
                clause.guard.tvars(&mut tv);
                for x in tv {
                    if self.owner(x) != agent {
                        diags.push(Diagnostic::new(
                            "tvar-ownership",
                            format!(
                                "template variable {} belongs to agent {} but occurs in the template of {}",
                                self.var_name(x),
                                env.agent_name(self.owner(x)),
                                env.agent_name(agent)
                            ),
                        ));
                    }
                }
            }
        }
        diags
    }
}

/// Partial map from template variables to local boolean formulas.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Substitution {
    bindings: BTreeMap<TVarId, BoolExpr>,
}

impl Substitution {
    pub fn empty() -> Self {
        Substitution::default()
    }

    pub fn bind(&mut self, x: TVarId, formula: BoolExpr) {
        self.bindings.insert(x, formula);
    }

    pub fn get(&self, x: TVarId) -> Option<&BoolExpr> {
        self.bindings.get(&x)
    }

    pub fn domain(&self) -> impl Iterator<Item = TVarId> + '_ {
        self.bindings.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn is_total_for(&self, joint: &JointTemplate) -> bool {
        joint.all_tvars().iter().all(|x| self.bindings.contains_key(x))
    }

    /// Check that every bound formula is a local formula of the variable's
    /// owner and mentions no template variables.
    pub fn validate(&self, env: &Environment, joint: &JointTemplate) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        for (&x, formula) in &self.bindings {
            if x.0 >= joint.vars.len() {
                diags.push(Diagnostic::new(
                    "substitution-domain",
                    format!("substitution binds unknown template variable #{}", x.0),
                ));
                continue;
            }
            let mut tv = BTreeSet::new();
            formula.tvars(&mut tv);
            if !tv.is_empty() {
                diags.push(Diagnostic::new(
                    "substitution-ground",
                    format!(
                        "binding for {} mentions template variables",
                        joint.var_name(x)
                    ),
                ));
            }
            match env.is_local(formula, joint.owner(x)) {
                Ok(true) => {}
                Ok(false) => diags.push(Diagnostic::new(
                    "locality",
                    format!(
                        "binding for {} is not local to agent {}",
                        joint.var_name(x),
                        env.agent_name(joint.owner(x))
                    ),
                )),
                Err(e) => diags.push(Diagnostic::new("locality", e.to_string())),
            }
        }
        diags
    }
}

/// Finite multi-agent environment: interned state space, per-agent action
/// sets (always containing `skip`), a serial joint-action transition
/// relation, per-agent observable variables, and initial states.
#[derive(Debug, Clone)]
pub struct Environment {
    agents: Vec<String>,
    vars: Vec<VarDecl>,
    strides: Vec<u64>,
    num_states: u32,
    /// Per agent; index 0 is "skip".
    actions: Vec<Vec<String>>,
    joint_strides: Vec<u64>,
    num_joint: u32,
    obs_vars: Vec<Vec<VarId>>,
    obs_strides: Vec<Vec<u64>>,
    num_obs: Vec<u32>,
    initial: Vec<StateId>,
    succ_off: Vec<u32>,
    succ: Vec<StateId>,
}

impl Environment {
    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn agent_name(&self, a: AgentId) -> &str {
        &self.agents[a.0]
    }

    pub fn agent_named(&self, name: &str) -> Result<AgentId> {
        self.agents
            .iter()
            .position(|n| n == name)
            .map(AgentId)
            .ok_or_else(|| Error::usage(format!("unknown agent '{name}'")))
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> {
        (0..self.agents.len()).map(AgentId)
    }

    pub fn vars(&self) -> &[VarDecl] {
        &self.vars
    }

    pub fn var_named(&self, name: &str) -> Result<VarId> {
        self.vars
            .iter()
            .position(|v| v.name == name)
            .map(VarId)
            .ok_or_else(|| Error::usage(format!("unknown variable '{name}'")))
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.vars[v.0].name
    }

    pub fn num_states(&self) -> u32 {
        self.num_states
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.num_states).map(StateId)
    }

    pub fn initial(&self) -> &[StateId] {
        &self.initial
    }

    pub fn action_count(&self, agent: AgentId) -> usize {
        self.actions[agent.0].len()
    }

    pub fn action_name(&self, agent: AgentId, a: ActionId) -> &str {
        &self.actions[agent.0][a.0]
    }

    pub fn action_named(&self, agent: AgentId, name: &str) -> Result<ActionId> {
        self.actions[agent.0]
            .iter()
            .position(|n| n == name)
            .map(ActionId)
            .ok_or_else(|| {
                Error::usage(format!(
                    "agent {} has no action '{name}'",
                    self.agent_name(agent)
                ))
            })
    }

    pub fn num_joint_actions(&self) -> u32 {
        self.num_joint
    }

    pub fn joint_actions(&self) -> impl Iterator<Item = JointActionId> {
        (0..self.num_joint).map(JointActionId)
    }

    /// Compose per-agent action choices into a joint-action index.
    pub fn joint_of(&self, parts: &[ActionId]) -> JointActionId {
        debug_assert_eq!(parts.len(), self.agents.len());
        let mut id = 0u64;
        for (i, a) in parts.iter().enumerate() {
            id += self.joint_strides[i] * a.0 as u64;
        }
        JointActionId(id as u32)
    }

    /// Component of a joint action for one agent.
    pub fn joint_part(&self, ja: JointActionId, agent: AgentId) -> ActionId {
        let n = self.actions[agent.0].len() as u64;
        ActionId(((ja.0 as u64 / self.joint_strides[agent.0]) % n) as usize)
    }

    pub fn skip_all(&self) -> JointActionId {
        JointActionId(0)
    }

    pub fn joint_action_desc(&self, ja: JointActionId) -> String {
        let parts: Vec<&str> = self
            .agents()
            .map(|i| self.action_name(i, self.joint_part(ja, i)))
            .collect();
        format!("({})", parts.join(", "))
    }

    /// Value of `var` in `state`.
    pub fn value(&self, state: StateId, var: VarId) -> i64 {
        let d = &self.vars[var.0];
        ((state.0 as u64 / self.strides[var.0]) % d.size()) as i64 + d.lo
    }

    /// Decode a state into variable-declaration-order values.
    pub fn decode(&self, state: StateId) -> Vec<i64> {
        (0..self.vars.len())
            .map(|v| self.value(state, VarId(v)))
            .collect()
    }

    /// Encode a full valuation (declaration order) into a state id.
    pub fn state_of(&self, values: &[i64]) -> Result<StateId> {
        if values.len() != self.vars.len() {
            return Err(Error::usage("valuation length mismatch"));
        }
        let mut id = 0u64;
        for (i, (&v, d)) in values.iter().zip(&self.vars).enumerate() {
            if !d.contains(v) {
                return Err(Error::usage(format!(
                    "value {v} outside domain of {}",
                    d.name
                )));
            }
            id += self.strides[i] * (v - d.lo) as u64;
        }
        Ok(StateId(id as u32))
    }

    pub fn state_desc(&self, state: StateId) -> String {
        self.vars
            .iter()
            .enumerate()
            .map(|(i, d)| format!("{}={}", d.name, self.value(state, VarId(i))))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn obs_vars(&self, agent: AgentId) -> &[VarId] {
        &self.obs_vars[agent.0]
    }

    pub fn num_observations(&self, agent: AgentId) -> u32 {
        self.num_obs[agent.0]
    }

    /// Observation index of a state for an agent (mixed radix over the
    /// agent's observable variables).
    pub fn obs_id(&self, agent: AgentId, state: StateId) -> ObsId {
        let mut id = 0u64;
        for (k, &v) in self.obs_vars[agent.0].iter().enumerate() {
            let d = &self.vars[v.0];
            id += self.obs_strides[agent.0][k] * (self.value(state, v) - d.lo) as u64;
        }
        ObsId(id as u32)
    }

    /// Value of an observable variable inside an observation index.
    pub fn obs_value(&self, agent: AgentId, obs: ObsId, var: VarId) -> Result<i64> {
        let k = self.obs_vars[agent.0]
            .iter()
            .position(|&v| v == var)
            .ok_or_else(|| {
                Error::usage(format!(
                    "variable {} is not observable by agent {}",
                    self.var_name(var),
                    self.agent_name(agent)
                ))
            })?;
        let d = &self.vars[self.obs_vars[agent.0][k].0];
        Ok(((obs.0 as u64 / self.obs_strides[agent.0][k]) % d.size()) as i64 + d.lo)
    }

    /// The observation an agent makes of a state. Two states yield equal
    /// observations iff they agree on every observable variable.
    pub fn observation(&self, agent: AgentId, state: StateId) -> Observation {
        Observation {
            agent,
            values: self.obs_vars[agent.0]
                .iter()
                .map(|&v| (v, self.value(state, v)))
                .collect(),
        }
    }

    pub fn observation_from_id(&self, agent: AgentId, obs: ObsId) -> Observation {
        Observation {
            agent,
            values: self.obs_vars[agent.0]
                .iter()
                .map(|&v| (v, self.obs_value(agent, obs, v).unwrap()))
                .collect(),
        }
    }

    pub fn obs_desc(&self, agent: AgentId, obs: ObsId) -> String {
        let o = self.observation_from_id(agent, obs);
        o.values
            .iter()
            .map(|(v, x)| format!("{}={}", self.var_name(*v), x))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Successors of `state` under a joint action.
    pub fn successors(&self, state: StateId, ja: JointActionId) -> &[StateId] {
        let idx = state.0 as usize * self.num_joint as usize + ja.0 as usize;
        let lo = self.succ_off[idx] as usize;
        let hi = self.succ_off[idx + 1] as usize;
        &self.succ[lo..hi]
    }

    pub fn eval_atom(&self, state: StateId, atom: &Atom) -> bool {
        atom.holds(self.value(state, atom.var))
    }

    /// Evaluate a boolean expression at a state. Template variables are
    /// resolved through `subst` (whose bindings are ground formulas) or, if
    /// unbound there, through `assign`; a variable bound by neither is an
    /// error.
    pub fn eval_bool(
        &self,
        state: StateId,
        expr: &BoolExpr,
        subst: &Substitution,
        assign: &BTreeMap<TVarId, bool>,
    ) -> Result<bool> {
        Ok(match expr {
            BoolExpr::Const(b) => *b,
            BoolExpr::Atom(a) => self.eval_atom(state, a),
            BoolExpr::TVar(x) => {
                if let Some(&b) = assign.get(x) {
                    b
                } else if let Some(f) = subst.get(*x) {
                    self.eval_bool(state, f, subst, assign)?
                } else {
                    return Err(Error::usage(format!(
                        "template variable #{} is unbound",
                        x.0
                    )));
                }
            }
            BoolExpr::Not(a) => !self.eval_bool(state, a, subst, assign)?,
            BoolExpr::And(a, b) => {
                self.eval_bool(state, a, subst, assign)? && self.eval_bool(state, b, subst, assign)?
            }
            BoolExpr::Or(a, b) => {
                self.eval_bool(state, a, subst, assign)? || self.eval_bool(state, b, subst, assign)?
            }
            BoolExpr::Implies(a, b) => {
                !self.eval_bool(state, a, subst, assign)? || self.eval_bool(state, b, subst, assign)?
            }
            BoolExpr::Iff(a, b) => {
                self.eval_bool(state, a, subst, assign)? == self.eval_bool(state, b, subst, assign)?
            }
        })
    }

    /// Syntactic locality: true iff every atom mentions only variables the
    /// agent observes. Template variables do not affect locality.
    pub fn is_local(&self, expr: &BoolExpr, agent: AgentId) -> Result<bool> {
        let mut vars = BTreeSet::new();
        expr.atom_vars(&mut vars);
        for v in vars {
            if v.0 >= self.vars.len() {
                return Err(Error::usage(format!("atom over undeclared variable #{}", v.0)));
            }
            if !self.obs_vars[agent.0].contains(&v) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Structural validation of the environment invariants. An empty result
    /// means the environment is valid.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        if self.initial.is_empty() {
            diags.push(Diagnostic::new("initial-empty", "no initial states"));
        }
        let skip_all = self.skip_all();
        let mut reported = 0;
        for s in self.states() {
            for ja in self.joint_actions() {
                let succ = self.successors(s, ja);
                if succ.is_empty() {
                    if reported < 20 {
                        diags.push(Diagnostic::new(
                            "seriality",
                            format!(
                                "no successor for state [{}] under joint action {}",
                                self.state_desc(s),
                                self.joint_action_desc(ja)
                            ),
                        ));
                    }
                    reported += 1;
                }
            }
            let skip_succ = self.successors(s, skip_all);
            if skip_succ != [s] {
                diags.push(Diagnostic::new(
                    "skip-identity",
                    format!(
                        "skip-identity violated at [{}]: all-skip successors are {:?}",
                        self.state_desc(s),
                        skip_succ.iter().map(|t| t.0).collect::<Vec<_>>()
                    ),
                ));
            }
        }
        if reported > 20 {
            diags.push(Diagnostic::new(
                "seriality",
                format!("...and {} more seriality violations", reported - 20),
            ));
        }
        diags
    }
}

/// Actions enabled by a template at a state under a total substitution: the
/// actions of clauses whose guard evaluates true, or `{skip}` when no guard
/// holds (the implicit fall-through clause).
pub fn enabled_actions(
    env: &Environment,
    template: &ProtocolTemplate,
    subst: &Substitution,
    state: StateId,
) -> Result<Vec<ActionId>> {
    let empty = BTreeMap::new();
    let mut out = Vec::new();
    for clause in &template.clauses {
        if env.eval_bool(state, &clause.guard, subst, &empty)? {
            out.push(clause.action);
        }
    }
    if out.is_empty() {
        out.push(SKIP);
    }
    Ok(out)
}

/// Joint actions enabled by the joint template at a state: the product of
/// the per-agent enabled sets. Always nonempty.
pub fn joint_enabled(
    env: &Environment,
    joint: &JointTemplate,
    subst: &Substitution,
    state: StateId,
) -> Result<Vec<JointActionId>> {
    let per_agent: Vec<Vec<ActionId>> = joint
        .templates
        .iter()
        .map(|t| enabled_actions(env, t, subst, state))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    let mut idx = vec![0usize; per_agent.len()];
    loop {
        let parts: Vec<ActionId> = idx.iter().zip(&per_agent).map(|(&i, v)| v[i]).collect();
        out.push(env.joint_of(&parts));
        // odometer over the per-agent choice lists
        let mut k = per_agent.len();
        loop {
            if k == 0 {
                out.sort();
                return Ok(out);
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

/// Whether some assignment of truth values to the template variables left
/// unbound by `subst` makes `guard` true at `state`. Guards are fixed-size,
/// so exhaustive assignment enumeration is cheap.
pub fn guard_satisfiable(
    env: &Environment,
    guard: &BoolExpr,
    state: StateId,
    subst: &Substitution,
) -> bool {
    let mut free = BTreeSet::new();
    guard.tvars(&mut free);
    for x in subst.domain() {
        free.remove(&x);
    }
    let free: Vec<TVarId> = free.into_iter().collect();
    let n = free.len();
    debug_assert!(n < 24, "guard with {n} free template variables");
    let mut assign = BTreeMap::new();
    for mask in 0u32..(1 << n) {
        assign.clear();
        for (k, &x) in free.iter().enumerate() {
            assign.insert(x, mask & (1 << k) != 0);
        }
        if env
            .eval_bool(state, guard, subst, &assign)
            .unwrap_or(false)
        {
            return true;
        }
    }
    false
}

/// Builder for explicit environments (used by tests and generators; model
/// files go through the expansion in [`crate::dsl`] instead).
#[derive(Debug, Default)]
pub struct EnvironmentBuilder {
    agents: Vec<String>,
    vars: Vec<VarDecl>,
    actions: Vec<Vec<String>>,
    obs: Vec<Vec<String>>,
    initial: Vec<Vec<i64>>,
    edges: Vec<(Vec<i64>, Vec<String>, Vec<i64>)>,
}

impl EnvironmentBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn agent(mut self, name: &str) -> Self {
        self.agents.push(name.to_string());
        self.actions.push(vec!["skip".to_string()]);
        self.obs.push(Vec::new());
        self
    }

    pub fn var(mut self, name: &str, lo: i64, hi: i64) -> Self {
        self.vars.push(VarDecl {
            name: name.to_string(),
            lo,
            hi,
        });
        self
    }

    pub fn actions(mut self, agent: &str, names: &[&str]) -> Self {
        let i = self.agents.iter().position(|a| a == agent).expect("agent");
        for n in names {
            self.actions[i].push(n.to_string());
        }
        self
    }

    pub fn obs(mut self, agent: &str, vars: &[&str]) -> Self {
        let i = self.agents.iter().position(|a| a == agent).expect("agent");
        self.obs[i] = vars.iter().map(|v| v.to_string()).collect();
        self
    }

    pub fn initial(mut self, values: &[i64]) -> Self {
        self.initial.push(values.to_vec());
        self
    }

    /// Add a transition `src --(a_1,..,a_n)--> dst`, with valuations in
    /// variable-declaration order and one action name per agent.
    pub fn transition(mut self, src: &[i64], actions: &[&str], dst: &[i64]) -> Self {
        self.edges.push((
            src.to_vec(),
            actions.iter().map(|a| a.to_string()).collect(),
            dst.to_vec(),
        ));
        self
    }

    /// Construct the environment. All-skip self-loops are added to every
    /// state automatically unless an explicit all-skip edge was supplied (so
    /// invalid environments can be built for the validator to reject).
    pub fn build(self) -> Result<Environment> {
        if self.agents.is_empty() {
            return Err(Error::usage("at least one agent required"));
        }
        if self.vars.is_empty() {
            return Err(Error::usage("at least one variable required"));
        }
        let mut num_states = 1u64;
        let mut strides = Vec::with_capacity(self.vars.len());
        for d in &self.vars {
            if d.hi < d.lo {
                return Err(Error::usage(format!("empty domain for {}", d.name)));
            }
            strides.push(num_states);
            num_states *= d.size();
        }
        if num_states > u32::MAX as u64 {
            return Err(Error::usage("state space too large"));
        }
        let mut num_joint = 1u64;
        let mut joint_strides = Vec::with_capacity(self.agents.len());
        for acts in &self.actions {
            joint_strides.push(num_joint);
            num_joint *= acts.len() as u64;
        }

        let mut env = Environment {
            agents: self.agents,
            vars: self.vars,
            strides,
            num_states: num_states as u32,
            actions: self.actions,
            joint_strides,
            num_joint: num_joint as u32,
            obs_vars: Vec::new(),
            obs_strides: Vec::new(),
            num_obs: Vec::new(),
            initial: Vec::new(),
            succ_off: Vec::new(),
            succ: Vec::new(),
        };

        for (i, names) in self.obs.iter().enumerate() {
            let mut vars = Vec::new();
            for n in names {
                vars.push(env.var_named(n)?);
            }
            vars.sort();
            vars.dedup();
            let mut stride = 1u64;
            let mut strides = Vec::new();
            for v in &vars {
                strides.push(stride);
                stride *= env.vars[v.0].size();
            }
            if stride > u32::MAX as u64 {
                return Err(Error::usage(format!(
                    "observation space of agent {} too large",
                    env.agents[i]
                )));
            }
            env.obs_vars.push(vars);
            env.obs_strides.push(strides);
            env.num_obs.push(stride as u32);
        }

        let mut initial: Vec<StateId> = self
            .initial
            .iter()
            .map(|v| env.state_of(v))
            .collect::<Result<_>>()?;
        initial.sort();
        initial.dedup();
        env.initial = initial;

        let skip_all = 0u32;
        let mut edges: Vec<(u32, u32, StateId)> = Vec::new();
        let mut explicit_skip_all = false;
        for (src, acts, dst) in &self.edges {
            let s = env.state_of(src)?;
            let t = env.state_of(dst)?;
            if acts.len() != env.agents.len() {
                return Err(Error::usage("joint action arity mismatch"));
            }
            let parts: Vec<ActionId> = acts
                .iter()
                .enumerate()
                .map(|(i, n)| env.action_named(AgentId(i), n))
                .collect::<Result<_>>()?;
            let ja = env.joint_of(&parts);
            if ja.0 == skip_all {
                explicit_skip_all = true;
            }
            edges.push((s.0, ja.0, t));
        }
        if !explicit_skip_all {
            for s in 0..env.num_states {
                edges.push((s, skip_all, StateId(s)));
            }
        }
        edges.sort();
        edges.dedup();

        let slots = env.num_states as usize * env.num_joint as usize;
        let mut off = vec![0u32; slots + 1];
        for &(s, ja, _) in &edges {
            off[s as usize * env.num_joint as usize + ja as usize + 1] += 1;
        }
        for i in 0..slots {
            off[i + 1] += off[i];
        }
        let mut succ = vec![StateId(0); edges.len()];
        let mut cursor = off.clone();
        for &(s, ja, t) in &edges {
            let idx = s as usize * env.num_joint as usize + ja as usize;
            succ[cursor[idx] as usize] = t;
            cursor[idx] += 1;
        }
        env.succ_off = off;
        env.succ = succ;
        Ok(env)
    }
}

/// Internal constructor for the model expander, which computes the CSR
/// transition table directly.
pub(crate) fn environment_from_parts(
    agents: Vec<String>,
    vars: Vec<VarDecl>,
    actions: Vec<Vec<String>>,
    obs_vars: Vec<Vec<VarId>>,
    initial: Vec<StateId>,
    succ_off: Vec<u32>,
    succ: Vec<StateId>,
) -> Environment {
    let mut num_states = 1u64;
    let mut strides = Vec::with_capacity(vars.len());
    for d in &vars {
        strides.push(num_states);
        num_states *= d.size();
    }
    let mut num_joint = 1u64;
    let mut joint_strides = Vec::with_capacity(agents.len());
    for acts in &actions {
        joint_strides.push(num_joint);
        num_joint *= acts.len() as u64;
    }
    let mut obs_strides = Vec::new();
    let mut num_obs = Vec::new();
    for vs in &obs_vars {
        let mut stride = 1u64;
        let mut strides = Vec::new();
        for v in vs {
            strides.push(stride);
            stride *= vars[v.0].size();
        }
        obs_strides.push(strides);
        num_obs.push(stride as u32);
    }
    Environment {
        agents,
        vars,
        strides,
        num_states: num_states as u32,
        actions,
        joint_strides,
        num_joint: num_joint as u32,
        obs_vars,
        obs_strides,
        num_obs,
        initial,
        succ_off,
        succ,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toggle_env() -> Environment {
        // one agent, one bit, action "t" flips it, skip self-loops
        EnvironmentBuilder::new()
            .agent("A")
            .var("x", 0, 1)
            .actions("A", &["t"])
            .obs("A", &["x"])
            .initial(&[0])
            .transition(&[0], &["t"], &[1])
            .transition(&[1], &["t"], &[0])
            .build()
            .unwrap()
    }

    #[test]
    fn encode_decode_roundtrip() {
        let env = EnvironmentBuilder::new()
            .agent("A")
            .var("a", 0, 2)
            .var("b", 1, 4)
            .actions("A", &[])
            .obs("A", &["a"])
            .initial(&[0, 1])
            .build()
            .unwrap();
        for s in env.states() {
            let vals = env.decode(s);
            assert_eq!(env.state_of(&vals).unwrap(), s);
        }
        assert_eq!(env.num_states(), 12);
    }

    #[test]
    fn validates_toggle() {
        let env = toggle_env();
        assert!(env.validate().is_empty());
    }

    #[test]
    fn single_state_skip_env_is_valid() {
        let env = EnvironmentBuilder::new()
            .agent("A")
            .var("x", 0, 0)
            .actions("A", &[])
            .obs("A", &["x"])
            .initial(&[0])
            .build()
            .unwrap();
        assert!(env.validate().is_empty());
    }

    #[test]
    fn detects_skip_identity_violation() {
        // explicit all-skip edge that jumps to the other state
        let env = EnvironmentBuilder::new()
            .agent("A")
            .var("x", 0, 1)
            .actions("A", &[])
            .obs("A", &["x"])
            .initial(&[0])
            .transition(&[0], &["skip"], &[1])
            .transition(&[1], &["skip"], &[1])
            .build()
            .unwrap();
        let diags = env.validate();
        assert!(diags.iter().any(|d| d.code == "skip-identity"));
    }

    #[test]
    fn detects_seriality_violation() {
        // action "t" has a transition from state 0 only
        let env = EnvironmentBuilder::new()
            .agent("A")
            .var("x", 0, 1)
            .actions("A", &["t"])
            .obs("A", &["x"])
            .initial(&[0])
            .transition(&[0], &["t"], &[1])
            .build()
            .unwrap();
        let diags = env.validate();
        assert!(diags.iter().any(|d| d.code == "seriality"));
    }

    #[test]
    fn observation_is_projection() {
        let env = EnvironmentBuilder::new()
            .agent("A")
            .agent("B")
            .var("u", 0, 1)
            .var("v", 0, 2)
            .actions("A", &[])
            .actions("B", &[])
            .obs("A", &["u"])
            .obs("B", &["u", "v"])
            .initial(&[0, 0])
            .build()
            .unwrap();
        let a = AgentId(0);
        let b = AgentId(1);
        let s = env.state_of(&[1, 2]).unwrap();
        assert_eq!(env.observation(a, s).values, vec![(VarId(0), 1)]);
        // full observation equals the state valuation
        assert_eq!(
            env.observation(b, s).values,
            vec![(VarId(0), 1), (VarId(1), 2)]
        );
        // states agree on the observation iff they agree on the obs vars
        for s in env.states() {
            for t in env.states() {
                let same_obs = env.obs_id(a, s) == env.obs_id(a, t);
                assert_eq!(same_obs, env.value(s, VarId(0)) == env.value(t, VarId(0)));
            }
        }
    }

    #[test]
    fn observation_projection_idempotent() {
        let env = toggle_env();
        let a = AgentId(0);
        let s = env.state_of(&[1]).unwrap();
        let o = env.observation(a, s);
        // re-projecting the observed values changes nothing
        let again: Vec<(VarId, i64)> = o
            .values
            .iter()
            .filter(|(v, _)| env.obs_vars(a).contains(v))
            .cloned()
            .collect();
        assert_eq!(o.values, again);
    }

    #[test]
    fn locality_is_syntactic() {
        let env = EnvironmentBuilder::new()
            .agent("A")
            .var("seen", 0, 3)
            .var("hidden", 0, 3)
            .actions("A", &[])
            .obs("A", &["seen"])
            .initial(&[0, 0])
            .build()
            .unwrap();
        let a = AgentId(0);
        let local = BoolExpr::Atom(Atom {
            var: VarId(0),
            rel: Rel::Ge,
            bound: 2,
        });
        let nonlocal = BoolExpr::Atom(Atom {
            var: VarId(1),
            rel: Rel::Ge,
            bound: 2,
        });
        assert!(env.is_local(&local, a).unwrap());
        assert!(!env.is_local(&nonlocal, a).unwrap());
        assert!(env.is_local(&BoolExpr::Const(true), a).unwrap());
        let undecl = BoolExpr::Atom(Atom {
            var: VarId(9),
            rel: Rel::Eq,
            bound: 0,
        });
        assert!(env.is_local(&undecl, a).is_err());
    }

    #[test]
    fn enabled_actions_and_implicit_skip() {
        let env = toggle_env();
        let t = env.action_named(AgentId(0), "t").unwrap();
        let tpl = ProtocolTemplate {
            agent: AgentId(0),
            clauses: vec![Clause {
                guard: BoolExpr::TVar(TVarId(0)),
                action: t,
            }],
        };
        let mut on = Substitution::empty();
        on.bind(TVarId(0), BoolExpr::Const(true));
        let mut off = Substitution::empty();
        off.bind(TVarId(0), BoolExpr::Const(false));
        let s = StateId(0);
        assert_eq!(enabled_actions(&env, &tpl, &on, s).unwrap(), vec![t]);
        // no guard holds: the implicit clause selects skip
        assert_eq!(enabled_actions(&env, &tpl, &off, s).unwrap(), vec![SKIP]);
        // unbound template variable is a usage error
        assert!(enabled_actions(&env, &tpl, &Substitution::empty(), s).is_err());
    }

    #[test]
    fn guard_satisfiable_enumerates_assignments() {
        let env = toggle_env();
        let x = BoolExpr::TVar(TVarId(0));
        let s = StateId(0);
        let none = Substitution::empty();
        assert!(guard_satisfiable(&env, &x, s, &none));
        let contradiction = x.clone().and(x.clone().not());
        assert!(!guard_satisfiable(&env, &contradiction, s, &none));
        // !x & (x >= 1) at a state where x = 0: the atom is false
        let atom = BoolExpr::Atom(Atom {
            var: VarId(0),
            rel: Rel::Ge,
            bound: 1,
        });
        let g = BoolExpr::TVar(TVarId(0)).not().and(atom);
        assert!(!guard_satisfiable(&env, &g, s, &none));
        assert!(guard_satisfiable(&env, &g, StateId(1), &none));
    }

    #[test]
    fn guard_satisfiable_matches_enabled_for_total_subst() {
        let env = toggle_env();
        let t = env.action_named(AgentId(0), "t").unwrap();
        let atom = BoolExpr::Atom(Atom {
            var: VarId(0),
            rel: Rel::Eq,
            bound: 1,
        });
        let guard = BoolExpr::TVar(TVarId(0)).and(atom);
        let tpl = ProtocolTemplate {
            agent: AgentId(0),
            clauses: vec![Clause {
                guard: guard.clone(),
                action: t,
            }],
        };
        for bind in [true, false] {
            let mut theta = Substitution::empty();
            theta.bind(TVarId(0), BoolExpr::Const(bind));
            for s in env.states() {
                let offered = enabled_actions(&env, &tpl, &theta, s).unwrap().contains(&t);
                assert_eq!(offered, guard_satisfiable(&env, &guard, s, &theta));
            }
        }
    }
}
