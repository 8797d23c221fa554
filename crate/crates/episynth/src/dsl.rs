//! Model file front-end (`.eps` files): parsing into an AST and expansion
//! of guarded transition rules into an explicit environment.
//!
//! A model file is line-oriented. Sections, in declaration-before-use order:
//!
//! ```text
//! agents A B
//! var posA : 0..10
//! obs A : sensA haltA
//! actions A : Move Halt
//! stutter A : Move Halt
//! init: posA = 0 & haltA = 0
//! rule [Move, _] when haltA = 0 : posA' in {posA, posA+1}, sensA' in {posA'-1, posA', posA'+1}
//! template A { !x -> Move ; x -> Halt }
//! know x := K[A] (posA >= 2)
//! spec AG (x => K[A] (posA >= 2))
//! order x < y
//! ```
//!
//! Comments run from `#` to end of line. Braces may span lines. Rule
//! semantics during expansion: for a state and joint action, every rule
//! whose action pattern matches and whose guard holds contributes its
//! updates; variables not updated stay unchanged; values outside the
//! variable's domain are dropped (if every choice drops, the rule yields no
//! transition). The all-skip joint action is always the identity. A pair
//! with no matching rule is a seriality error unless every non-skip action
//! in it was declared `stutter`, in which case the pair self-loops — this is
//! how frozen configurations (for example a halted robot) are modelled
//! without hiding genuinely missing rules.
//!
//! Template guards may mention undeclared identifiers: those become the
//! template's boolean holes (template variables), owned by the template's
//! agent, to be filled by synthesis or an explicit substitution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::error::{Diagnostic, Error, Result};
use crate::kernel::{
    environment_from_parts, ActionId, AgentId, BoolExpr, Clause, Environment, JointTemplate,
    ProtocolTemplate, StateId, TVarId, TemplateVar, VarDecl, VarId,
};
use crate::lex::{lex, Cursor, Tok, Token};
use crate::logic::{self, Formula, SymbolTable};

/// One term of an update's value set: `var['][±k]` or a constant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetTerm {
    /// `Some((var, primed))` reads the pre-state (unprimed) or the value
    /// assigned earlier in this step (primed).
    pub base: Option<(VarId, bool)>,
    pub offset: i64,
}

/// A single variable update `v' in {t1, .., tk} [if cond]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub var: VarId,
    pub choices: Vec<SetTerm>,
    pub cond: Option<BoolExpr>,
}

/// A guarded transition rule with a per-agent action pattern (`None` is the
/// wildcard `_`).
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRule {
    pub pattern: Vec<Option<ActionId>>,
    pub guard: BoolExpr,
    pub updates: Vec<Update>,
}

/// Parsed model file with all names resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub agents: Vec<String>,
    pub vars: Vec<VarDecl>,
    /// Per agent, observable variables (sorted).
    pub obs: Vec<Vec<VarId>>,
    /// Per agent, action names; index 0 is "skip".
    pub actions: Vec<Vec<String>>,
    /// Per agent, actions that stutter (self-loop) when no rule matches.
    pub stutter: Vec<BTreeSet<ActionId>>,
    pub init: BoolExpr,
    pub rules: Vec<TransitionRule>,
    pub templates: JointTemplate,
    /// Knowledge bindings `x := K[i] ψ`.
    pub know: BTreeMap<TVarId, Formula>,
    pub specs: Vec<Formula>,
    /// Declared order constraints `(x, y, strict)` meaning x ≤ y, with
    /// `strict` recording `<` rather than `~`.
    pub order: Vec<(TVarId, TVarId, bool)>,
}

impl ModelFile {
    pub fn symbols(&self) -> SymbolTable {
        SymbolTable {
            vars: self.vars.iter().map(|v| v.name.clone()).collect(),
            agents: self.agents.clone(),
            tvars: self.templates.vars.iter().map(|v| v.name.clone()).collect(),
        }
    }

    fn agent(&self, name: &str) -> Option<AgentId> {
        self.agents.iter().position(|a| a == name).map(AgentId)
    }

    fn var(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    fn action(&self, agent: AgentId, name: &str) -> Option<ActionId> {
        self.actions[agent.0]
            .iter()
            .position(|a| a == name)
            .map(ActionId)
    }
}

/// Everything `expand` produces from a model file.
#[derive(Debug, Clone)]
pub struct ExpandedModel {
    pub env: Arc<Environment>,
    pub templates: JointTemplate,
    pub know: BTreeMap<TVarId, Formula>,
    pub specs: Vec<Formula>,
    pub order: Vec<(TVarId, TVarId, bool)>,
}

impl ExpandedModel {
    pub fn symbols(&self) -> SymbolTable {
        SymbolTable::new(&self.env, Some(&self.templates))
    }
}

/// Parse a model file. All name-resolution problems are collected and
/// reported together.
pub fn parse_model(text: &str) -> Result<ModelFile> {
    let toks = lex(text, true)?;
    let mut model = ModelFile {
        agents: Vec::new(),
        vars: Vec::new(),
        obs: Vec::new(),
        actions: Vec::new(),
        stutter: Vec::new(),
        init: BoolExpr::Const(true),
        rules: Vec::new(),
        templates: JointTemplate {
            vars: Vec::new(),
            templates: Vec::new(),
        },
        know: BTreeMap::new(),
        specs: Vec::new(),
        order: Vec::new(),
    };
    let mut diags: Vec<Diagnostic> = Vec::new();
    let mut saw_template = vec![];

    // split the token stream into statements at newline boundaries
    let mut statements: Vec<&[Token]> = Vec::new();
    let mut start = 0;
    for (i, t) in toks.iter().enumerate() {
        if t.tok == Tok::Newline {
            if i > start {
                statements.push(&toks[start..i]);
            }
            start = i + 1;
        }
    }
    if start < toks.len() {
        statements.push(&toks[start..]);
    }

    for stmt in statements {
        let mut cur = Cursor::new(stmt);
        let keyword = cur.ident("statement keyword")?;
        match keyword.as_str() {
            "agents" => {
                while let Some(Tok::Ident(_)) = cur.peek() {
                    let name = cur.ident("agent name")?;
                    if model.agents.contains(&name) {
                        diags.push(Diagnostic::new("name", format!("duplicate agent '{name}'")));
                    }
                    model.agents.push(name);
                    model.obs.push(Vec::new());
                    model.actions.push(vec!["skip".to_string()]);
                    model.stutter.push(BTreeSet::new());
                    model.templates.templates.push(ProtocolTemplate {
                        agent: AgentId(model.agents.len() - 1),
                        clauses: Vec::new(),
                    });
                    saw_template.push(false);
                }
                if model.agents.is_empty() {
                    return Err(cur.error("at least one agent required"));
                }
            }
            "var" => {
                let name = cur.ident("variable name")?;
                cur.expect(&Tok::Colon, "':' after variable name")?;
                let lo = cur.int("domain lower bound")?;
                cur.expect(&Tok::DotDot, "'..'")?;
                let hi = cur.int("domain upper bound")?;
                if hi < lo {
                    diags.push(Diagnostic::new(
                        "domain",
                        format!("empty domain for variable '{name}'"),
                    ));
                }
                if model.var(&name).is_some() {
                    diags.push(Diagnostic::new(
                        "name",
                        format!("duplicate variable '{name}'"),
                    ));
                }
                model.vars.push(VarDecl { name, lo, hi });
            }
            "obs" => {
                let agent_name = cur.ident("agent name")?;
                let agent = match model.agent(&agent_name) {
                    Some(a) => a,
                    None => {
                        diags.push(Diagnostic::new("name", format!("unknown agent '{agent_name}'")));
                        continue;
                    }
                };
                cur.expect(&Tok::Colon, "':'")?;
                while let Some(Tok::Ident(_)) = cur.peek() {
                    let vname = cur.ident("variable name")?;
                    match model.var(&vname) {
                        Some(v) => model.obs[agent.0].push(v),
                        None => diags.push(Diagnostic::new(
                            "name",
                            format!("unknown variable '{vname}' in obs declaration"),
                        )),
                    }
                }
                model.obs[agent.0].sort();
                model.obs[agent.0].dedup();
            }
            "actions" | "stutter" => {
                let agent_name = cur.ident("agent name")?;
                let agent = match model.agent(&agent_name) {
                    Some(a) => a,
                    None => {
                        diags.push(Diagnostic::new("name", format!("unknown agent '{agent_name}'")));
                        continue;
                    }
                };
                cur.expect(&Tok::Colon, "':'")?;
                while let Some(Tok::Ident(_)) = cur.peek() {
                    let aname = cur.ident("action name")?;
                    if keyword == "actions" {
                        if aname == "skip" {
                            diags.push(Diagnostic::new(
                                "name",
                                "'skip' is implicit and cannot be redeclared",
                            ));
                        } else if model.action(agent, &aname).is_some() {
                            diags.push(Diagnostic::new(
                                "name",
                                format!("duplicate action '{aname}'"),
                            ));
                        } else {
                            model.actions[agent.0].push(aname);
                        }
                    } else {
                        match model.action(agent, &aname) {
                            Some(a) if a != crate::kernel::SKIP => {
                                model.stutter[agent.0].insert(a);
                            }
                            Some(_) => diags.push(Diagnostic::new(
                                "name",
                                "skip always stutters; no declaration needed",
                            )),
                            None => diags.push(Diagnostic::new(
                                "name",
                                format!("unknown action '{aname}' in stutter declaration"),
                            )),
                        }
                    }
                }
            }
            "init" => {
                cur.expect(&Tok::Colon, "':' after init")?;
                let syms = model.symbols();
                model.init = logic::bool_expr(&mut cur, &syms)?;
            }
            "rule" => {
                let rule = parse_rule(&mut cur, &model)?;
                model.rules.push(rule);
            }
            "template" => {
                let agent_name = cur.ident("agent name")?;
                let agent = model
                    .agent(&agent_name)
                    .ok_or_else(|| cur.error(format!("unknown agent '{agent_name}'")))?;
                if saw_template[agent.0] {
                    diags.push(Diagnostic::new(
                        "template",
                        format!("agent {agent_name} has more than one template block"),
                    ));
                }
                saw_template[agent.0] = true;
                let clauses = parse_template_block(&mut cur, &mut model, agent)?;
                model.templates.templates[agent.0].clauses = clauses;
            }
            "know" => {
                let var_name = cur.ident("template variable")?;
                let x = match model.templates.var_named(&var_name) {
                    Some(x) => x,
                    None => {
                        diags.push(Diagnostic::new(
                            "name",
                            format!("know-binding for '{var_name}', which occurs in no template"),
                        ));
                        continue;
                    }
                };
                cur.expect(&Tok::Assign, "':='")?;
                let syms = model.symbols();
                let f = logic::formula(&mut cur, &syms)?;
                if !cur.at_end() {
                    return Err(cur.error("trailing input after know-binding"));
                }
                match f.as_knowledge() {
                    Some((agent, _)) if agent == model.templates.owner(x) => {
                        model.know.insert(x, f);
                    }
                    Some((agent, _)) => diags.push(Diagnostic::new(
                        "know",
                        format!(
                            "know-binding for {var_name} uses agent {}, but the variable is owned by {}",
                            model.agents[agent.0],
                            model.agents[model.templates.owner(x).0]
                        ),
                    )),
                    None => diags.push(Diagnostic::new(
                        "know",
                        format!("know-binding for {var_name} must have the form K[agent] ..."),
                    )),
                }
            }
            "spec" => {
                let syms = model.symbols();
                let f = logic::formula(&mut cur, &syms)?;
                if !cur.at_end() {
                    return Err(cur.error("trailing input after spec formula"));
                }
                model.specs.push(f);
            }
            "order" => {
                let mut prev = model_tvar(&mut cur, &model)?;
                loop {
                    match cur.peek() {
                        Some(Tok::Lt) => {
                            cur.next();
                            let next = model_tvar(&mut cur, &model)?;
                            model.order.push((prev, next, true));
                            prev = next;
                        }
                        Some(Tok::Tilde) => {
                            cur.next();
                            let next = model_tvar(&mut cur, &model)?;
                            model.order.push((prev, next, false));
                            prev = next;
                        }
                        None => break,
                        _ => return Err(cur.error("expected '<' or '~' in order declaration")),
                    }
                }
            }
            other => {
                return Err(cur.error(format!("unknown statement '{other}'")));
            }
        }
    }

    if model.agents.is_empty() {
        diags.push(Diagnostic::new("structure", "at least one agent required"));
    }
    if model.vars.is_empty() {
        diags.push(Diagnostic::new("structure", "at least one variable required"));
    }
    if diags.is_empty() {
        Ok(model)
    } else {
        Err(Error::Model(diags))
    }
}

fn model_tvar(cur: &mut Cursor, model: &ModelFile) -> Result<TVarId> {
    let name = cur.ident("template variable")?;
    model
        .templates
        .var_named(&name)
        .ok_or_else(|| cur.error(format!("unknown template variable '{name}'")))
}

fn parse_rule(cur: &mut Cursor, model: &ModelFile) -> Result<TransitionRule> {
    cur.expect(&Tok::LBracket, "'[' to open the action pattern")?;
    let mut pattern = Vec::new();
    for i in 0..model.agents.len() {
        if i > 0 {
            cur.expect(&Tok::Comma, "','")?;
        }
        if cur.eat(&Tok::Underscore) {
            pattern.push(None);
        } else {
            let name = cur.ident("action name or '_'")?;
            if name == "skip" {
                return Err(cur.error("'skip' cannot appear in a rule pattern; it never changes state"));
            }
            let a = model
                .action(AgentId(i), &name)
                .ok_or_else(|| cur.error(format!("agent {} has no action '{name}'", model.agents[i])))?;
            pattern.push(Some(a));
        }
    }
    cur.expect(&Tok::RBracket, "']'")?;
    let syms = model.symbols();
    let guard = if let Some(Tok::Ident(w)) = cur.peek() {
        if w == "when" {
            cur.next();
            parse_guard_until_colon(cur, &syms)?
        } else {
            return Err(cur.error("expected 'when' or ':'"));
        }
    } else {
        BoolExpr::Const(true)
    };
    if guard == BoolExpr::Const(true) && cur.peek() == Some(&Tok::Colon) {
        cur.next();
    }
    let mut updates = Vec::new();
    loop {
        let vname = cur.ident("updated variable")?;
        let var = model
            .var(&vname)
            .ok_or_else(|| cur.error(format!("unknown variable '{vname}'")))?;
        cur.expect(&Tok::Prime, "' (prime) after the updated variable")?;
        let kw = cur.ident("'in'")?;
        if kw != "in" {
            return Err(cur.error("expected 'in'"));
        }
        cur.expect(&Tok::LBrace, "'{'")?;
        let mut choices = Vec::new();
        loop {
            choices.push(parse_set_term(cur, model)?);
            if !cur.eat(&Tok::Comma) {
                break;
            }
        }
        cur.expect(&Tok::RBrace, "'}'")?;
        let cond = if let Some(Tok::Ident(w)) = cur.peek() {
            if w == "if" {
                cur.next();
                Some(parse_cond_until_comma(cur, &syms)?)
            } else {
                None
            }
        } else {
            None
        };
        updates.push(Update { var, choices, cond });
        if !cur.eat(&Tok::Comma) {
            break;
        }
    }
    if !cur.at_end() {
        return Err(cur.error("trailing input after rule updates"));
    }
    Ok(TransitionRule {
        pattern,
        guard,
        updates,
    })
}

/// Parse the guard of a rule: a boolean expression ending at the ':' that
/// introduces the update list.
fn parse_guard_until_colon(cur: &mut Cursor, syms: &SymbolTable) -> Result<BoolExpr> {
    let e = logic::bool_expr(cur, syms)?;
    cur.expect(&Tok::Colon, "':' before rule updates")?;
    Ok(e)
}

/// Parse a per-update condition; it extends to the ',' or end of statement.
fn parse_cond_until_comma(cur: &mut Cursor, syms: &SymbolTable) -> Result<BoolExpr> {
    logic::bool_expr(cur, syms)
}

fn parse_set_term(cur: &mut Cursor, model: &ModelFile) -> Result<SetTerm> {
    match cur.peek() {
        Some(Tok::Ident(name)) => {
            let name = name.clone();
            cur.next();
            let var = model
                .var(&name)
                .ok_or_else(|| cur.error(format!("unknown variable '{name}'")))?;
            let primed = cur.eat(&Tok::Prime);
            let offset = if cur.eat(&Tok::Plus) {
                cur.int("offset")?
            } else if cur.eat(&Tok::Minus) {
                -cur.int("offset")?
            } else {
                0
            };
            Ok(SetTerm {
                base: Some((var, primed)),
                offset,
            })
        }
        Some(Tok::Int(_)) | Some(Tok::Minus) => Ok(SetTerm {
            base: None,
            offset: cur.int("constant")?,
        }),
        _ => Err(cur.error("expected a set term (variable or constant)")),
    }
}

/// Parse `{ guard -> action ; ... }`, registering any undeclared identifier
/// in a guard as a template variable owned by `agent`.
fn parse_template_block(
    cur: &mut Cursor,
    model: &mut ModelFile,
    agent: AgentId,
) -> Result<Vec<Clause>> {
    cur.expect(&Tok::LBrace, "'{'")?;
    // pre-register bare identifiers that are neither variables, agents nor
    // existing template variables, so the shared grammar resolves them
    pre_register_tvars(cur, model, agent)?;
    let mut clauses = Vec::new();
    loop {
        if cur.eat(&Tok::RBrace) {
            break;
        }
        let syms = model.symbols();
        let guard_formula = parse_clause_guard(cur, &syms)?;
        cur.expect(&Tok::Arrow, "'->' between guard and action")?;
        let aname = cur.ident("action name")?;
        let action = model
            .action(agent, &aname)
            .ok_or_else(|| cur.error(format!("agent {} has no action '{aname}'", model.agents[agent.0])))?;
        clauses.push(Clause {
            guard: guard_formula,
            action,
        });
        if !cur.eat(&Tok::Semi) {
            cur.expect(&Tok::RBrace, "';' or '}'")?;
            break;
        }
    }
    if !cur.at_end() {
        return Err(cur.error("trailing input after template block"));
    }
    Ok(clauses)
}

fn parse_clause_guard(cur: &mut Cursor, syms: &SymbolTable) -> Result<BoolExpr> {
    logic::bool_expr(cur, syms)
}

/// Scan ahead in the template block for identifiers that are not yet known
/// and declare them as template variables of `agent`. Variable names,
/// existing template variables, the agent's action names and the boolean
/// constants are left alone.
fn pre_register_tvars(cur: &Cursor, model: &mut ModelFile, agent: AgentId) -> Result<()> {
    for tok in cur.remaining() {
        if let Tok::Ident(name) = &tok.tok {
            if name == "true"
                || name == "false"
                || model.var(name).is_some()
                || model.templates.var_named(name).is_some()
                || model.actions[agent.0].iter().any(|a| a == name)
            {
                continue;
            }
            model.templates.vars.push(TemplateVar {
                name: name.clone(),
                agent,
            });
        }
    }
    Ok(())
}

/// Expand a parsed model into an explicit environment plus the template and
/// specification structures. Fails (with the validator's diagnostics) if
/// the expansion violates the environment invariants.
pub fn expand(model: &ModelFile) -> Result<ExpandedModel> {
    let mut diags = Vec::new();

    // locality and ownership checks on templates
    let mut num_states = 1u64;
    for d in &model.vars {
        num_states = num_states.saturating_mul(d.size());
    }
    if num_states > u32::MAX as u64 {
        return Err(Error::usage("state space too large"));
    }

    let n_agents = model.agents.len();
    let mut num_joint = 1u64;
    let mut joint_strides = Vec::with_capacity(n_agents);
    for acts in &model.actions {
        joint_strides.push(num_joint);
        num_joint *= acts.len() as u64;
    }

    // per joint action, which rules' patterns match it
    let mut rules_by_joint: Vec<Vec<usize>> = vec![Vec::new(); num_joint as usize];
    for (ri, rule) in model.rules.iter().enumerate() {
        for (ja, matching) in rules_by_joint.iter_mut().enumerate() {
            let mut ok = true;
            for i in 0..n_agents {
                let part = (ja as u64 / joint_strides[i]) % model.actions[i].len() as u64;
                match rule.pattern[i] {
                    Some(a) if a.0 as u64 != part => {
                        ok = false;
                        break;
                    }
                    _ => {}
                }
            }
            if ok {
                matching.push(ri);
            }
        }
    }

    // per joint action, whether unmatched pairs may self-loop: every
    // non-skip component must be a declared stutter action
    let mut stutter_ok: Vec<bool> = Vec::with_capacity(num_joint as usize);
    for ja in 0..num_joint {
        let mut ok = true;
        for i in 0..n_agents {
            let part = ((ja / joint_strides[i]) % model.actions[i].len() as u64) as usize;
            if part != 0 && !model.stutter[i].contains(&ActionId(part)) {
                ok = false;
                break;
            }
        }
        stutter_ok.push(ok);
    }

    let sizes: Vec<i64> = model.vars.iter().map(|d| d.size() as i64).collect();
    let mut strides = Vec::with_capacity(model.vars.len());
    {
        let mut acc = 1u64;
        for d in &model.vars {
            strides.push(acc);
            acc *= d.size();
        }
    }

    let empty_subst = crate::kernel::Substitution::empty();
    let empty_assign = BTreeMap::new();

    let mut succ_off: Vec<u32> = Vec::with_capacity(num_states as usize * num_joint as usize + 1);
    succ_off.push(0);
    let mut succ: Vec<StateId> = Vec::new();
    let mut initial: Vec<StateId> = Vec::new();
    let mut seriality_reported = 0usize;

    // scratch: current valuation, updated incrementally in interning order
    let mut vals: Vec<i64> = model.vars.iter().map(|d| d.lo).collect();
    let mut guard_true: Vec<bool> = vec![false; model.rules.len()];
    let mut branch_buf: Vec<Vec<i64>> = Vec::new();
    let mut next_buf: Vec<Vec<i64>> = Vec::new();

    // helper: evaluate a guard over plain values without an Environment
    fn eval_guard(
        e: &BoolExpr,
        vals: &[i64],
        subst: &crate::kernel::Substitution,
        assign: &BTreeMap<TVarId, bool>,
    ) -> Result<bool> {
        Ok(match e {
            BoolExpr::Const(b) => *b,
            BoolExpr::Atom(a) => a.holds(vals[a.var.0]),
            BoolExpr::TVar(x) => {
                if let Some(&b) = assign.get(x) {
                    b
                } else if let Some(f) = subst.get(*x) {
                    eval_guard(f, vals, subst, assign)?
                } else {
                    return Err(Error::usage(format!(
                        "template variable #{} unbound in rule guard",
                        x.0
                    )));
                }
            }
            BoolExpr::Not(a) => !eval_guard(a, vals, subst, assign)?,
            BoolExpr::And(a, b) => {
                eval_guard(a, vals, subst, assign)? && eval_guard(b, vals, subst, assign)?
            }
            BoolExpr::Or(a, b) => {
                eval_guard(a, vals, subst, assign)? || eval_guard(b, vals, subst, assign)?
            }
            BoolExpr::Implies(a, b) => {
                !eval_guard(a, vals, subst, assign)? || eval_guard(b, vals, subst, assign)?
            }
            BoolExpr::Iff(a, b) => {
                eval_guard(a, vals, subst, assign)? == eval_guard(b, vals, subst, assign)?
            }
        })
    }

    for s in 0..num_states {
        if s > 0 {
            // odometer increment of the valuation
            for (k, v) in vals.iter_mut().enumerate() {
                *v += 1;
                if *v - model.vars[k].lo < sizes[k] {
                    break;
                }
                *v = model.vars[k].lo;
            }
        }

        if eval_guard(&model.init, &vals, &empty_subst, &empty_assign)? {
            initial.push(StateId(s as u32));
        }

        for (ri, rule) in model.rules.iter().enumerate() {
            guard_true[ri] = eval_guard(&rule.guard, &vals, &empty_subst, &empty_assign)?;
        }

        for ja in 0..num_joint {
            if ja == 0 {
                // the all-skip joint action is the identity by definition
                succ.push(StateId(s as u32));
                succ_off.push(succ.len() as u32);
                continue;
            }
            let active: Vec<usize> = rules_by_joint[ja as usize]
                .iter()
                .copied()
                .filter(|&ri| guard_true[ri])
                .collect();
            if active.is_empty() {
                if stutter_ok[ja as usize] {
                    succ.push(StateId(s as u32));
                } else if seriality_reported < 20 {
                    let desc: Vec<String> = model
                        .vars
                        .iter()
                        .zip(&vals)
                        .map(|(d, v)| format!("{}={v}", d.name))
                        .collect();
                    let acts: Vec<&str> = (0..n_agents)
                        .map(|i| {
                            let part =
                                ((ja / joint_strides[i]) % model.actions[i].len() as u64) as usize;
                            model.actions[i][part].as_str()
                        })
                        .collect();
                    diags.push(Diagnostic::new(
                        "seriality",
                        format!(
                            "no rule matches state [{}] under joint action ({}); declare the actions `stutter` or add a rule",
                            desc.join(" "),
                            acts.join(", ")
                        ),
                    ));
                    seriality_reported += 1;
                }
                succ_off.push(succ.len() as u32);
                continue;
            }

            // conflicting updates across composed rules are modelling bugs
            let mut updated: BTreeSet<VarId> = BTreeSet::new();
            let mut conflict = false;
            for &ri in &active {
                for u in &model.rules[ri].updates {
                    if !updated.insert(u.var) {
                        conflict = true;
                        diags.push(Diagnostic::new(
                            "update-conflict",
                            format!(
                                "variable {} updated by two rules matching the same state and joint action",
                                model.vars[u.var.0].name
                            ),
                        ));
                    }
                }
            }
            if conflict {
                succ_off.push(succ.len() as u32);
                continue;
            }

            branch_buf.clear();
            branch_buf.push(vals.clone());
            for &ri in &active {
                for u in &model.rules[ri].updates {
                    if let Some(cond) = &u.cond {
                        if !eval_guard(cond, &vals, &empty_subst, &empty_assign)? {
                            continue;
                        }
                    }
                    next_buf.clear();
                    for b in branch_buf.iter() {
                        for term in &u.choices {
                            let raw = match term.base {
                                None => term.offset,
                                Some((v, primed)) => {
                                    let base = if primed { b[v.0] } else { vals[v.0] };
                                    base + term.offset
                                }
                            };
                            if model.vars[u.var.0].contains(raw) {
                                let mut nb = b.clone();
                                nb[u.var.0] = raw;
                                next_buf.push(nb);
                            }
                        }
                    }
                    std::mem::swap(&mut branch_buf, &mut next_buf);
                    if branch_buf.is_empty() {
                        break;
                    }
                }
                if branch_buf.is_empty() {
                    break;
                }
            }

            let before = succ.len();
            for b in branch_buf.iter() {
                let mut id = 0u64;
                for (k, &v) in b.iter().enumerate() {
                    id += strides[k] * (v - model.vars[k].lo) as u64;
                }
                succ.push(StateId(id as u32));
            }
            succ[before..].sort();
            let mut w = before;
            for r in before..succ.len() {
                if w == before || succ[r] != succ[w - 1] {
                    succ[w] = succ[r];
                    w += 1;
                }
            }
            succ.truncate(w);
            if succ.len() == before && seriality_reported < 20 {
                let desc: Vec<String> = model
                    .vars
                    .iter()
                    .zip(&vals)
                    .map(|(d, v)| format!("{}={v}", d.name))
                    .collect();
                diags.push(Diagnostic::new(
                    "seriality",
                    format!(
                        "all update choices fall outside their domains at [{}]",
                        desc.join(" ")
                    ),
                ));
                seriality_reported += 1;
            }
            succ_off.push(succ.len() as u32);
        }
    }

    if initial.is_empty() {
        diags.push(Diagnostic::new("initial-empty", "no state satisfies the init constraint"));
    }
    if seriality_reported > 20 {
        diags.push(Diagnostic::new(
            "seriality",
            format!("...and {} more unmatched pairs", seriality_reported - 20),
        ));
    }
    if !diags.is_empty() {
        return Err(Error::Model(diags));
    }

    let env = environment_from_parts(
        model.agents.clone(),
        model.vars.clone(),
        model.actions.clone(),
        model.obs.clone(),
        initial,
        succ_off,
        succ,
    );

    let mut diags = env.validate();
    diags.extend(model.templates.validate(&env));
    if !diags.is_empty() {
        return Err(Error::Model(diags));
    }

    Ok(ExpandedModel {
        env: Arc::new(env),
        templates: model.templates.clone(),
        know: model.know.clone(),
        specs: model.specs.clone(),
        order: model.order.clone(),
    })
}

impl fmt::Display for ModelFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let syms = self.symbols();
        write!(f, "agents")?;
        for a in &self.agents {
            write!(f, " {a}")?;
        }
        writeln!(f)?;
        for v in &self.vars {
            writeln!(f, "var {} : {}..{}", v.name, v.lo, v.hi)?;
        }
        for (i, obs) in self.obs.iter().enumerate() {
            write!(f, "obs {} :", self.agents[i])?;
            for v in obs {
                write!(f, " {}", self.vars[v.0].name)?;
            }
            writeln!(f)?;
        }
        for (i, acts) in self.actions.iter().enumerate() {
            write!(f, "actions {} :", self.agents[i])?;
            for a in acts.iter().skip(1) {
                write!(f, " {a}")?;
            }
            writeln!(f)?;
        }
        for (i, st) in self.stutter.iter().enumerate() {
            if !st.is_empty() {
                write!(f, "stutter {} :", self.agents[i])?;
                for a in st {
                    write!(f, " {}", self.actions[i][a.0])?;
                }
                writeln!(f)?;
            }
        }
        writeln!(f, "init: {}", logic::bool_expr_text(&self.init, &syms))?;
        for rule in &self.rules {
            write!(f, "rule [")?;
            for (i, p) in rule.pattern.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                match p {
                    None => write!(f, "_")?,
                    Some(a) => write!(f, "{}", self.actions[i][a.0])?,
                }
            }
            write!(f, "] when {} :", logic::bool_expr_text(&rule.guard, &syms))?;
            for (k, u) in rule.updates.iter().enumerate() {
                if k > 0 {
                    write!(f, ",")?;
                }
                write!(f, " {}' in {{", self.vars[u.var.0].name)?;
                for (j, t) in u.choices.iter().enumerate() {
                    if j > 0 {
                        write!(f, ", ")?;
                    }
                    match t.base {
                        None => write!(f, "{}", t.offset)?,
                        Some((v, primed)) => {
                            write!(f, "{}{}", self.vars[v.0].name, if primed { "'" } else { "" })?;
                            if t.offset > 0 {
                                write!(f, "+{}", t.offset)?;
                            } else if t.offset < 0 {
                                write!(f, "{}", t.offset)?;
                            }
                        }
                    }
                }
                write!(f, "}}")?;
                if let Some(c) = &u.cond {
                    write!(f, " if {}", logic::bool_expr_text(c, &syms))?;
                }
            }
            writeln!(f)?;
        }
        for tpl in &self.templates.templates {
            write!(f, "template {} {{ ", self.agents[tpl.agent.0])?;
            for (k, c) in tpl.clauses.iter().enumerate() {
                if k > 0 {
                    write!(f, " ; ")?;
                }
                write!(
                    f,
                    "{} -> {}",
                    logic::bool_expr_text(&c.guard, &syms),
                    self.actions[tpl.agent.0][c.action.0]
                )?;
            }
            writeln!(f, " }}")?;
        }
        for (x, formula) in &self.know {
            writeln!(
                f,
                "know {} := {}",
                self.templates.var_name(*x),
                formula.display(&syms)
            )?;
        }
        for s in &self.specs {
            writeln!(f, "spec {}", s.display(&syms))?;
        }
        if !self.order.is_empty() {
            // re-emit as single chained declarations where possible
            for (a, b, strict) in &self.order {
                writeln!(
                    f,
                    "order {} {} {}",
                    self.templates.var_name(*a),
                    if *strict { "<" } else { "~" },
                    self.templates.var_name(*b)
                )?;
            }
        }
        Ok(())
    }
}

/// The picnic coordination model: two agents each bring wine or cheese at
/// the start; a picnic succeeds when both provisions are present.
pub fn picnic_text() -> String {
    "\
# Two agents provision a shared picnic. Each prefers to bring cheese and
# will do so exactly when it knows wine is already guaranteed; otherwise it
# brings wine. Once the picnic starts they just picnic.
agents A B
var start : 0..1
var w : 0..1
var c : 0..1
obs A : start w c
obs B : start w c
actions A : w c p
actions B : w c p
stutter A : w c p
stutter B : w c p
init: start = 1 & w = 0 & c = 0
rule [w, w] when start = 1 : start' in {0}, w' in {1}
rule [w, c] when start = 1 : start' in {0}, w' in {1}, c' in {1}
rule [c, w] when start = 1 : start' in {0}, w' in {1}, c' in {1}
rule [c, c] when start = 1 : start' in {0}, c' in {1}
template A { start = 1 & x_A -> c ; start = 1 & !x_A -> w ; start = 0 -> p }
template B { start = 1 & x_B -> c ; start = 1 & !x_B -> w ; start = 0 -> p }
know x_A := K[A] AX w = 1
know x_B := K[B] AX w = 1
spec AG (start = 1 => AX (w = 1 & c = 1))
order x_A < x_B
"
    .to_string()
}

pub fn gen_picnic() -> ModelFile {
    parse_model(&picnic_text()).expect("picnic model is well-formed")
}

/// Two robots on a discrete track of positions `0..=length`. A starts at 0
/// facing right, B at `length` facing left; each wants to halt without a
/// collision once it knows it is safe. `error` is the sensor tolerance: a
/// reading is within `error` of the true position.
pub fn robot_text(error: u8, length: i64) -> String {
    assert!(error <= 1, "supported sensor error is 0 or 1");
    assert!(length >= 4, "track length must be at least 4");
    let mut out = String::new();
    out.push_str(
        "# Two robots approach each other on a discrete track. Each sees only\n\
         # its own (noisy) position sensor and its halted flag.\n",
    );
    out.push_str("agents A B\n");
    for (pos, sens, halt) in [("posA", "sensA", "haltA"), ("posB", "sensB", "haltB")] {
        out.push_str(&format!("var {pos} : 0..{length}\n"));
        out.push_str(&format!("var {sens} : 0..{length}\n"));
        out.push_str(&format!("var {halt} : 0..1\n"));
    }
    out.push_str("obs A : sensA haltA\n");
    out.push_str("obs B : sensB haltB\n");
    out.push_str("actions A : Move Halt\n");
    out.push_str("actions B : Move Halt\n");
    out.push_str("stutter A : Move Halt\n");
    out.push_str("stutter B : Move Halt\n");
    out.push_str(&format!(
        "init: posA = 0 & haltA = 0 & sensA <= {error} & posB = {length} & haltB = 0 & sensB >= {}\n",
        length - error as i64
    ));
    let sensor_set = |pos_primed: &str| -> String {
        if error == 0 {
            format!("{{{pos_primed}}}")
        } else {
            format!("{{{pos_primed}-1, {pos_primed}, {pos_primed}+1}}")
        }
    };
    out.push_str(&format!(
        "rule [Move, _] when haltA = 0 : posA' in {{posA, posA+1}}, sensA' in {}\n",
        sensor_set("posA'")
    ));
    out.push_str("rule [Halt, _] when haltA = 0 : haltA' in {1}\n");
    out.push_str(&format!(
        "rule [_, Move] when haltB = 0 : posB' in {{posB, posB-1}}, sensB' in {}\n",
        sensor_set("posB'")
    ));
    out.push_str("rule [_, Halt] when haltB = 0 : haltB' in {1}\n");
    out.push_str("template A { !x -> Move ; x -> Halt }\n");
    out.push_str("template B { y -> Move ; !y -> Halt }\n");
    out.push_str("know x := K[A] (posA >= 2)\n");
    // B may move only while it knows A will always stay strictly more than
    // one step to its left: for the current position p, posA < p - 1.
    let conj: Vec<String> = (0..=length)
        .map(|p| format!("(posB = {p} => AG posA <= {})", p - 2))
        .collect();
    out.push_str(&format!("know y := K[B] ({})\n", conj.join(" & ")));
    if length == 10 {
        // behavioural corollaries of the synthesized protocols on the
        // canonical track, checked after synthesis
        let collision: Vec<String> = (0..=length)
            .map(|p| format!("(posB = {p} => posA <= {})", p - 1))
            .collect();
        out.push_str(&format!("spec AG ({})\n", collision.join(" & ")));
        if error == 1 {
            out.push_str("spec AG posA <= 4\n");
            out.push_str("spec AG (haltA = 1 => posA >= 2)\n");
            out.push_str("spec EF (haltA = 1 & posA = 2)\n");
            out.push_str("spec EF (haltB = 1 & posB = 5)\n");
            out.push_str("spec AG (haltB = 1 => (posB >= 5 & posB <= 7))\n");
        } else {
            out.push_str("spec AG posA <= 2\n");
            out.push_str("spec AG (haltA = 1 => posA = 2)\n");
            out.push_str("spec EF (haltA = 1 & posA = 2)\n");
            out.push_str("spec EF (haltB = 1 & posB = 3)\n");
            out.push_str("spec AG (haltB = 1 => posB = 3)\n");
        }
    }
    out.push_str("order x < y\n");
    out
}

pub fn gen_robot(error: u8, length: i64) -> ModelFile {
    parse_model(&robot_text(error, length)).expect("robot model is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::SKIP;

    #[test]
    fn parses_picnic() {
        let m = gen_picnic();
        assert_eq!(m.agents, vec!["A", "B"]);
        assert_eq!(m.actions[0], vec!["skip", "w", "c", "p"]);
        assert_eq!(m.templates.vars.len(), 2);
        assert_eq!(m.know.len(), 2);
        assert_eq!(m.order, vec![(TVarId(0), TVarId(1), true)]);
    }

    #[test]
    fn empty_agents_is_an_error() {
        let err = parse_model("var x : 0..1\n").unwrap_err();
        match err {
            Error::Model(diags) => {
                assert!(diags.iter().any(|d| d.message.contains("at least one agent")))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn template_guard_locality_is_enforced() {
        // agent A's guard mentions B's private variable
        let text = "\
agents A B
var a : 0..1
var b : 0..1
obs A : a
obs B : b
actions A : go
actions B : go
stutter A : go
stutter B : go
init: a = 0 & b = 0
template A { b = 1 -> go }
template B { true -> go }
";
        let m = parse_model(text).unwrap();
        let err = expand(&m).unwrap_err();
        match err {
            Error::Model(diags) => {
                assert!(diags.iter().any(|d| d.code == "locality"), "{diags:?}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn picnic_expansion_shape() {
        let m = gen_picnic();
        let x = expand(&m).unwrap();
        assert_eq!(x.env.num_states(), 8);
        assert!(x.env.validate().is_empty());
        // start state
        let start = x.env.state_of(&[1, 0, 0]).unwrap();
        assert_eq!(x.env.initial(), &[start]);
        // joint (w, c) from start goes to the wine-and-cheese picnic state
        let a = x.env.agent_named("A").unwrap();
        let b = x.env.agent_named("B").unwrap();
        let ja = x.env.joint_of(&[
            x.env.action_named(a, "w").unwrap(),
            x.env.action_named(b, "c").unwrap(),
        ]);
        let wc = x.env.state_of(&[0, 1, 1]).unwrap();
        assert_eq!(x.env.successors(start, ja), &[wc]);
        // unmatched pairs self-loop: (p, p) at the start state
        let pp = x.env.joint_of(&[
            x.env.action_named(a, "p").unwrap(),
            x.env.action_named(b, "p").unwrap(),
        ]);
        assert_eq!(x.env.successors(start, pp), &[start]);
        // skip-all identity
        assert_eq!(x.env.successors(wc, x.env.skip_all()), &[wc]);
    }

    #[test]
    fn rule_with_false_guard_contributes_nothing() {
        let text = "\
agents A
var x : 0..1
obs A : x
actions A : go
stutter A : go
init: x = 0
rule [go] when x = 1 & x = 0 : x' in {1}
";
        let m = parse_model(text).unwrap();
        let xp = expand(&m).unwrap();
        // guard is unsatisfiable, so `go` stutters everywhere
        let go = xp.env.action_named(AgentId(0), "go").unwrap();
        let ja = xp.env.joint_of(&[go]);
        assert_eq!(xp.env.successors(StateId(0), ja), &[StateId(0)]);
    }

    #[test]
    fn unmatched_without_stutter_fails_seriality() {
        let text = "\
agents A
var x : 0..1
obs A : x
actions A : go
init: x = 0
rule [go] when x = 0 : x' in {1}
";
        let m = parse_model(text).unwrap();
        let err = expand(&m).unwrap_err();
        match err {
            Error::Model(diags) => {
                assert!(diags.iter().any(|d| d.code == "seriality"), "{diags:?}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_domain_choices_are_dropped() {
        let m = gen_robot(1, 4);
        let x = expand(&m).unwrap();
        // at posA = 4 (track end) a move can only stay
        let env = &x.env;
        let a = env.agent_named("A").unwrap();
        let mv = env.action_named(a, "Move").unwrap();
        let state = env.state_of(&[4, 4, 0, 4, 4, 1]).unwrap();
        let ja = env.joint_of(&[mv, SKIP]);
        for &t in env.successors(state, ja) {
            assert_eq!(env.value(t, VarId(0)), 4);
        }
    }

    #[test]
    fn robot_sensor_stays_within_error() {
        // moves keep the sensor within 1 of the new position and halts
        // freeze both, so the bound holds on everything reachable
        let x = expand(&gen_robot(1, 4)).unwrap();
        let env = &x.env;
        let reach = crate::approx::reachable_under_any(env);
        for &s in &reach {
            assert!((env.value(s, VarId(0)) - env.value(s, VarId(1))).abs() <= 1);
            assert!((env.value(s, VarId(3)) - env.value(s, VarId(4))).abs() <= 1);
        }
    }

    #[test]
    fn robot_initials() {
        let x = expand(&gen_robot(1, 10)).unwrap();
        for &s in x.env.initial() {
            assert_eq!(x.env.value(s, VarId(0)), 0); // posA
            assert_eq!(x.env.value(s, VarId(3)), 10); // posB
            assert!(x.env.value(s, VarId(1)) <= 1); // sensA within error
            assert!(x.env.value(s, VarId(4)) >= 9); // sensB within error
        }
        assert!(!x.env.initial().is_empty());
    }

    #[test]
    fn display_reparses_to_equal_ast() {
        for m in [gen_picnic(), gen_robot(1, 4), gen_robot(0, 4)] {
            let printed = m.to_string();
            let again = parse_model(&printed).unwrap_or_else(|e| panic!("{printed}\n{e}"));
            assert_eq!(m, again);
        }
    }

    #[test]
    fn expansion_is_deterministic() {
        let a = expand(&gen_picnic()).unwrap();
        let b = expand(&gen_picnic()).unwrap();
        assert_eq!(a.env.initial(), b.env.initial());
        for s in a.env.states() {
            for ja in a.env.joint_actions() {
                assert_eq!(a.env.successors(s, ja), b.env.successors(s, ja));
            }
        }
    }

    #[test]
    fn robot_envs_validate() {
        for (err, len) in [(0u8, 4i64), (1, 4), (1, 6)] {
            let x = expand(&gen_robot(err, len)).unwrap();
            assert!(x.env.validate().is_empty());
        }
    }
}
