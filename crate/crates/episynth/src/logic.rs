//! CTLK formulas: abstract syntax, concrete text syntax, the positive
//! fragment (CTLK+), and substitution application.
//!
//! The temporal fragment keeps implication and equivalence as surface
//! connectives (they are desugared on the fly where polarity matters) while
//! F/G forms are normalized to until/release at parse time: `AF p` is stored
//! as `A[true U p]` and `AG p` as `A[false R p]`. The printer re-sugars
//! those shapes, so parse/print round-trips on the normal form.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::kernel::{AgentId, Atom, BoolExpr, JointTemplate, Rel, Substitution, TVarId, VarId};
use crate::lex::{lex, Cursor, Tok};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    TVar(TVarId),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    AX(Box<Formula>),
    EX(Box<Formula>),
    /// A[φ U ψ]
    AU(Box<Formula>, Box<Formula>),
    /// E[φ U ψ]
    EU(Box<Formula>, Box<Formula>),
    /// A[φ R ψ]
    AR(Box<Formula>, Box<Formula>),
    /// E[φ R ψ]
    ER(Box<Formula>, Box<Formula>),
    /// K[i] φ — agent i knows φ
    K(AgentId, Box<Formula>),
}

impl Formula {
    pub fn not(self) -> Self {
        Formula::Not(Box::new(self))
    }
    pub fn and(self, other: Self) -> Self {
        Formula::And(Box::new(self), Box::new(other))
    }
    pub fn or(self, other: Self) -> Self {
        Formula::Or(Box::new(self), Box::new(other))
    }
    pub fn implies(self, other: Self) -> Self {
        Formula::Implies(Box::new(self), Box::new(other))
    }
    pub fn iff(self, other: Self) -> Self {
        Formula::Iff(Box::new(self), Box::new(other))
    }
    pub fn ax(self) -> Self {
        Formula::AX(Box::new(self))
    }
    pub fn ex(self) -> Self {
        Formula::EX(Box::new(self))
    }
    /// `AF φ`, stored as `A[true U φ]`.
    pub fn af(self) -> Self {
        Formula::AU(Box::new(Formula::True), Box::new(self))
    }
    /// `EF φ`, stored as `E[true U φ]`.
    pub fn ef(self) -> Self {
        Formula::EU(Box::new(Formula::True), Box::new(self))
    }
    /// `AG φ`, stored as `A[false R φ]`.
    pub fn ag(self) -> Self {
        Formula::AR(Box::new(Formula::False), Box::new(self))
    }
    /// `EG φ`, stored as `E[false R φ]`.
    pub fn eg(self) -> Self {
        Formula::ER(Box::new(Formula::False), Box::new(self))
    }
    pub fn know(agent: AgentId, body: Self) -> Self {
        Formula::K(agent, Box::new(body))
    }

    pub fn atom(var: VarId, rel: Rel, bound: i64) -> Self {
        Formula::Atom(Atom { var, rel, bound })
    }

    /// Collect template variables occurring in the formula.
    pub fn tvars(&self, out: &mut BTreeSet<TVarId>) {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => {}
            Formula::TVar(x) => {
                out.insert(*x);
            }
            Formula::Not(a) | Formula::AX(a) | Formula::EX(a) | Formula::K(_, a) => a.tvars(out),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b)
            | Formula::AU(a, b)
            | Formula::EU(a, b)
            | Formula::AR(a, b)
            | Formula::ER(a, b) => {
                a.tvars(out);
                b.tvars(out);
            }
        }
    }

    /// View as a knowledge formula `K[i] ψ`.
    pub fn as_knowledge(&self) -> Option<(AgentId, &Formula)> {
        match self {
            Formula::K(i, body) => Some((*i, body)),
            _ => None,
        }
    }
}

impl From<&BoolExpr> for Formula {
    fn from(e: &BoolExpr) -> Formula {
        match e {
            BoolExpr::Const(true) => Formula::True,
            BoolExpr::Const(false) => Formula::False,
            BoolExpr::Atom(a) => Formula::Atom(*a),
            BoolExpr::TVar(x) => Formula::TVar(*x),
            BoolExpr::Not(a) => Formula::from(a.as_ref()).not(),
            BoolExpr::And(a, b) => Formula::from(a.as_ref()).and(Formula::from(b.as_ref())),
            BoolExpr::Or(a, b) => Formula::from(a.as_ref()).or(Formula::from(b.as_ref())),
            BoolExpr::Implies(a, b) => Formula::from(a.as_ref()).implies(Formula::from(b.as_ref())),
            BoolExpr::Iff(a, b) => Formula::from(a.as_ref()).iff(Formula::from(b.as_ref())),
        }
    }
}

/// Replace bound template variables by their formulas. Unbound template
/// variables are left in place and reported in the second component.
pub fn apply_substitution(formula: &Formula, subst: &Substitution) -> (Formula, Vec<TVarId>) {
    let mut unbound = BTreeSet::new();
    let out = apply_rec(formula, subst, &mut unbound);
    (out, unbound.into_iter().collect())
}

fn apply_rec(f: &Formula, subst: &Substitution, unbound: &mut BTreeSet<TVarId>) -> Formula {
    macro_rules! go {
        ($x:expr) => {
            Box::new(apply_rec($x, subst, unbound))
        };
    }
    match f {
        Formula::True | Formula::False | Formula::Atom(_) => f.clone(),
        Formula::TVar(x) => match subst.get(*x) {
            Some(e) => Formula::from(e),
            None => {
                unbound.insert(*x);
                f.clone()
            }
        },
        Formula::Not(a) => Formula::Not(go!(a)),
        Formula::And(a, b) => Formula::And(go!(a), go!(b)),
        Formula::Or(a, b) => Formula::Or(go!(a), go!(b)),
        Formula::Implies(a, b) => Formula::Implies(go!(a), go!(b)),
        Formula::Iff(a, b) => Formula::Iff(go!(a), go!(b)),
        Formula::AX(a) => Formula::AX(go!(a)),
        Formula::EX(a) => Formula::EX(go!(a)),
        Formula::AU(a, b) => Formula::AU(go!(a), go!(b)),
        Formula::EU(a, b) => Formula::EU(go!(a), go!(b)),
        Formula::AR(a, b) => Formula::AR(go!(a), go!(b)),
        Formula::ER(a, b) => Formula::ER(go!(a), go!(b)),
        Formula::K(i, a) => Formula::K(*i, go!(a)),
    }
}

/// Membership in the positive fragment: after desugaring `=>`/`<=>` and
/// pushing negations to the atoms, branching and knowledge modalities occur
/// only as AX/AF/AG/AU/AR/K in positive position. Truth of such formulas is
/// preserved when moving to a subsystem.
pub fn is_ctlk_plus(formula: &Formula) -> bool {
    // `positive` is the polarity of the current occurrence
    fn go(f: &Formula, positive: bool) -> bool {
        match f {
            Formula::True | Formula::False | Formula::Atom(_) | Formula::TVar(_) => true,
            Formula::Not(a) => go(a, !positive),
            Formula::And(a, b) | Formula::Or(a, b) => go(a, positive) && go(b, positive),
            Formula::Implies(a, b) => go(a, !positive) && go(b, positive),
            Formula::Iff(a, b) => {
                // (¬a ∨ b) ∧ (¬b ∨ a): both sides occur in both polarities
                go(a, true) && go(a, false) && go(b, true) && go(b, false)
            }
            Formula::AX(a) => positive && go(a, true),
            Formula::AU(a, b) | Formula::AR(a, b) => positive && go(a, true) && go(b, true),
            // an E-modality in negative position is an A-modality after
            // negation pushing; in positive position it is outside the
            // fragment
            Formula::EX(a) => !positive && go(a, false),
            Formula::EU(a, b) | Formula::ER(a, b) => !positive && go(a, false) && go(b, false),
            Formula::K(_, a) => positive && go(a, true),
        }
    }
    go(formula, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecKind {
    /// `AG (x => K[i] ψ)`: the hole is a sufficient condition for knowledge.
    SlpSound,
    /// `AG (x <=> K[i] ψ)`: the hole must be necessary and sufficient.
    Kbp,
    /// anything else
    General,
}

/// A specification formula classified by shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecFormula {
    pub kind: SpecKind,
    /// The template variable for the sound/strict shapes.
    pub var: Option<TVarId>,
    /// The knowledge condition `K[i] ψ` for the sound/strict shapes.
    pub knowledge: Option<Formula>,
    pub body: Formula,
}

/// Detect the `AG (x => K[i] ψ)` and `AG (x <=> K[i] ψ)` shapes, checking
/// that the knowledge agent owns the template variable.
pub fn classify_spec(formula: &Formula, templates: &JointTemplate) -> Result<SpecFormula> {
    if let Formula::AR(l, body) = formula {
        if **l == Formula::False {
            let shape = match body.as_ref() {
                Formula::Implies(a, b) => Some((SpecKind::SlpSound, a.as_ref(), b.as_ref())),
                Formula::Iff(a, b) => Some((SpecKind::Kbp, a.as_ref(), b.as_ref())),
                _ => None,
            };
            if let Some((kind, x, k)) = shape {
                if let (Formula::TVar(x), Formula::K(agent, _)) = (x, k) {
                    if templates.owner(*x) != *agent {
                        return Err(Error::usage(format!(
                            "template variable {} is not owned by the knowledge agent",
                            templates.var_name(*x)
                        )));
                    }
                    return Ok(SpecFormula {
                        kind,
                        var: Some(*x),
                        knowledge: Some(k.clone()),
                        body: formula.clone(),
                    });
                }
            }
        }
    }
    Ok(SpecFormula {
        kind: SpecKind::General,
        var: None,
        knowledge: None,
        body: formula.clone(),
    })
}

/// Name resolution context for the shared formula grammar.
#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    pub vars: Vec<String>,
    pub agents: Vec<String>,
    pub tvars: Vec<String>,
}

impl SymbolTable {
    pub fn new(env: &crate::kernel::Environment, templates: Option<&JointTemplate>) -> Self {
        SymbolTable {
            vars: env.vars().iter().map(|v| v.name.clone()).collect(),
            agents: env.agents().map(|a| env.agent_name(a).to_string()).collect(),
            tvars: templates
                .map(|t| t.vars.iter().map(|v| v.name.clone()).collect())
                .unwrap_or_default(),
        }
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|n| n == name).map(VarId)
    }

    pub fn agent(&self, name: &str) -> Option<AgentId> {
        self.agents.iter().position(|n| n == name).map(AgentId)
    }

    pub fn tvar(&self, name: &str) -> Option<TVarId> {
        self.tvars.iter().position(|n| n == name).map(TVarId)
    }
}

/// Parse a CTLK formula. Grammar: atoms `v = c | v <= c | v >= c`, boolean
/// `! & | => <=>`, temporal `AX AF AG EX EF EG A[φ U ψ] E[φ U ψ] A[φ R ψ]
/// E[φ R ψ]`, knowledge `K[agent] φ`, parentheses. Bare identifiers are
/// template variables.
pub fn parse_formula(text: &str, symbols: &SymbolTable) -> Result<Formula> {
    let toks = lex(text, false)?;
    let mut cur = Cursor::new(&toks);
    let f = formula(&mut cur, symbols)?;
    if !cur.at_end() {
        return Err(cur.error("trailing input after formula"));
    }
    Ok(f)
}

pub(crate) fn formula(cur: &mut Cursor, syms: &SymbolTable) -> Result<Formula> {
    let mut lhs = implies(cur, syms)?;
    while cur.eat(&Tok::IffArrow) {
        let rhs = implies(cur, syms)?;
        lhs = lhs.iff(rhs);
    }
    Ok(lhs)
}

fn implies(cur: &mut Cursor, syms: &SymbolTable) -> Result<Formula> {
    let lhs = disj(cur, syms)?;
    if cur.eat(&Tok::FatArrow) {
        let rhs = implies(cur, syms)?;
        Ok(lhs.implies(rhs))
    } else {
        Ok(lhs)
    }
}

fn disj(cur: &mut Cursor, syms: &SymbolTable) -> Result<Formula> {
    let mut lhs = conj(cur, syms)?;
    while cur.eat(&Tok::Pipe) {
        let rhs = conj(cur, syms)?;
        lhs = lhs.or(rhs);
    }
    Ok(lhs)
}

fn conj(cur: &mut Cursor, syms: &SymbolTable) -> Result<Formula> {
    let mut lhs = unary(cur, syms)?;
    while cur.eat(&Tok::Amp) {
        let rhs = unary(cur, syms)?;
        lhs = lhs.and(rhs);
    }
    Ok(lhs)
}

fn unary(cur: &mut Cursor, syms: &SymbolTable) -> Result<Formula> {
    if cur.eat(&Tok::Bang) {
        return Ok(unary(cur, syms)?.not());
    }
    match cur.peek() {
        Some(Tok::Ident(name)) => {
            let name = name.clone();
            match name.as_str() {
                "AX" | "AF" | "AG" | "EX" | "EF" | "EG" => {
                    cur.next();
                    let body = unary(cur, syms)?;
                    Ok(match name.as_str() {
                        "AX" => body.ax(),
                        "AF" => body.af(),
                        "AG" => body.ag(),
                        "EX" => body.ex(),
                        "EF" => body.ef(),
                        _ => body.eg(),
                    })
                }
                "A" | "E" => {
                    cur.next();
                    cur.expect(&Tok::LBracket, "'[' after path quantifier")?;
                    let left = formula(cur, syms)?;
                    let op = cur.ident("'U' or 'R'")?;
                    let right = formula(cur, syms)?;
                    cur.expect(&Tok::RBracket, "']'")?;
                    match (name.as_str(), op.as_str()) {
                        ("A", "U") => Ok(Formula::AU(Box::new(left), Box::new(right))),
                        ("E", "U") => Ok(Formula::EU(Box::new(left), Box::new(right))),
                        ("A", "R") => Ok(Formula::AR(Box::new(left), Box::new(right))),
                        ("E", "R") => Ok(Formula::ER(Box::new(left), Box::new(right))),
                        _ => Err(cur.error("expected 'U' or 'R'")),
                    }
                }
                "K" => {
                    cur.next();
                    cur.expect(&Tok::LBracket, "'[' after K")?;
                    let agent_name = cur.ident("agent name")?;
                    let agent = syms
                        .agent(&agent_name)
                        .ok_or_else(|| cur.error(format!("unknown agent '{agent_name}'")))?;
                    cur.expect(&Tok::RBracket, "']'")?;
                    let body = unary(cur, syms)?;
                    Ok(Formula::know(agent, body))
                }
                "true" => {
                    cur.next();
                    Ok(Formula::True)
                }
                "false" => {
                    cur.next();
                    Ok(Formula::False)
                }
                _ => {
                    cur.next();
                    atom_or_tvar(cur, syms, &name)
                }
            }
        }
        Some(Tok::LParen) => {
            cur.next();
            let f = formula(cur, syms)?;
            cur.expect(&Tok::RParen, "')'")?;
            Ok(f)
        }
        _ => Err(cur.error("expected formula")),
    }
}

fn atom_or_tvar(cur: &mut Cursor, syms: &SymbolTable, name: &str) -> Result<Formula> {
    let rel = match cur.peek() {
        Some(Tok::Eq) => Some(Rel::Eq),
        Some(Tok::Le) => Some(Rel::Le),
        Some(Tok::Ge) => Some(Rel::Ge),
        _ => None,
    };
    if let Some(rel) = rel {
        let var = syms
            .var(name)
            .ok_or_else(|| cur.error(format!("unknown variable '{name}'")))?;
        cur.next();
        let bound = cur.int("integer bound")?;
        Ok(Formula::Atom(Atom { var, rel, bound }))
    } else if let Some(x) = syms.tvar(name) {
        Ok(Formula::TVar(x))
    } else if syms.var(name).is_some() {
        Err(cur.error(format!(
            "variable '{name}' must be compared to a constant (=, <=, >=)"
        )))
    } else {
        Err(cur.error(format!("unknown identifier '{name}'")))
    }
}

/// Parse a quantifier-free boolean expression (guards, init constraints,
/// substitution bindings). Same grammar minus temporal/knowledge operators.
pub fn parse_bool_expr(text: &str, symbols: &SymbolTable) -> Result<BoolExpr> {
    let toks = lex(text, false)?;
    let mut cur = Cursor::new(&toks);
    let e = bool_expr(&mut cur, symbols)?;
    if !cur.at_end() {
        return Err(cur.error("trailing input after expression"));
    }
    Ok(e)
}

pub(crate) fn bool_expr(cur: &mut Cursor, syms: &SymbolTable) -> Result<BoolExpr> {
    let f = formula(cur, syms)?;
    formula_to_bool(&f).map_err(|msg| cur.error(msg))
}

fn formula_to_bool(f: &Formula) -> std::result::Result<BoolExpr, String> {
    Ok(match f {
        Formula::True => BoolExpr::Const(true),
        Formula::False => BoolExpr::Const(false),
        Formula::Atom(a) => BoolExpr::Atom(*a),
        Formula::TVar(x) => BoolExpr::TVar(*x),
        Formula::Not(a) => formula_to_bool(a)?.not(),
        Formula::And(a, b) => formula_to_bool(a)?.and(formula_to_bool(b)?),
        Formula::Or(a, b) => formula_to_bool(a)?.or(formula_to_bool(b)?),
        Formula::Implies(a, b) => {
            BoolExpr::Implies(Box::new(formula_to_bool(a)?), Box::new(formula_to_bool(b)?))
        }
        Formula::Iff(a, b) => {
            BoolExpr::Iff(Box::new(formula_to_bool(a)?), Box::new(formula_to_bool(b)?))
        }
        _ => return Err("temporal or knowledge operator not allowed here".into()),
    })
}

/// Printer: resolves ids back to names from a symbol table.
pub struct FormulaDisplay<'a> {
    formula: &'a Formula,
    symbols: &'a SymbolTable,
}

impl Formula {
    pub fn display<'a>(&'a self, symbols: &'a SymbolTable) -> FormulaDisplay<'a> {
        FormulaDisplay {
            formula: self,
            symbols,
        }
    }
}

impl fmt::Display for FormulaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_formula(self.formula, self.symbols, 0, f)
    }
}

// precedence levels: iff 1, implies 2, or 3, and 4, unary 5
fn prec(f: &Formula) -> u8 {
    match f {
        Formula::Iff(..) => 1,
        Formula::Implies(..) => 2,
        Formula::Or(..) => 3,
        Formula::And(..) => 4,
        _ => 5,
    }
}

fn fmt_formula(
    f: &Formula,
    syms: &SymbolTable,
    min_prec: u8,
    out: &mut fmt::Formatter<'_>,
) -> fmt::Result {
    let p = prec(f);
    let parens = p < min_prec;
    if parens {
        write!(out, "(")?;
    }
    match f {
        Formula::True => write!(out, "true")?,
        Formula::False => write!(out, "false")?,
        Formula::Atom(a) => write!(
            out,
            "{} {} {}",
            syms.vars.get(a.var.0).map(String::as_str).unwrap_or("?var"),
            a.rel,
            a.bound
        )?,
        Formula::TVar(x) => write!(
            out,
            "{}",
            syms.tvars.get(x.0).map(String::as_str).unwrap_or("?tvar")
        )?,
        Formula::Not(a) => {
            write!(out, "!")?;
            fmt_formula(a, syms, 5, out)?;
        }
        Formula::And(a, b) => {
            fmt_formula(a, syms, 4, out)?;
            write!(out, " & ")?;
            fmt_formula(b, syms, 5, out)?;
        }
        Formula::Or(a, b) => {
            fmt_formula(a, syms, 3, out)?;
            write!(out, " | ")?;
            fmt_formula(b, syms, 4, out)?;
        }
        Formula::Implies(a, b) => {
            fmt_formula(a, syms, 3, out)?;
            write!(out, " => ")?;
            fmt_formula(b, syms, 2, out)?;
        }
        Formula::Iff(a, b) => {
            fmt_formula(a, syms, 2, out)?;
            write!(out, " <=> ")?;
            fmt_formula(b, syms, 2, out)?;
        }
        Formula::AX(a) => {
            write!(out, "AX ")?;
            fmt_formula(a, syms, 5, out)?;
        }
        Formula::EX(a) => {
            write!(out, "EX ")?;
            fmt_formula(a, syms, 5, out)?;
        }
        Formula::AU(a, b) if **a == Formula::True => {
            write!(out, "AF ")?;
            fmt_formula(b, syms, 5, out)?;
        }
        Formula::EU(a, b) if **a == Formula::True => {
            write!(out, "EF ")?;
            fmt_formula(b, syms, 5, out)?;
        }
        Formula::AR(a, b) if **a == Formula::False => {
            write!(out, "AG ")?;
            fmt_formula(b, syms, 5, out)?;
        }
        Formula::ER(a, b) if **a == Formula::False => {
            write!(out, "EG ")?;
            fmt_formula(b, syms, 5, out)?;
        }
        Formula::AU(a, b) | Formula::EU(a, b) | Formula::AR(a, b) | Formula::ER(a, b) => {
            let (q, op) = match f {
                Formula::AU(..) => ("A", "U"),
                Formula::EU(..) => ("E", "U"),
                Formula::AR(..) => ("A", "R"),
                _ => ("E", "R"),
            };
            write!(out, "{q}[")?;
            fmt_formula(a, syms, 1, out)?;
            write!(out, " {op} ")?;
            fmt_formula(b, syms, 1, out)?;
            write!(out, "]")?;
        }
        Formula::K(i, a) => {
            write!(
                out,
                "K[{}] ",
                syms.agents.get(i.0).map(String::as_str).unwrap_or("?agent")
            )?;
            fmt_formula(a, syms, 5, out)?;
        }
    }
    if parens {
        write!(out, ")")?;
    }
    Ok(())
}

/// Render a boolean expression with names from a symbol table.
pub fn bool_expr_text(e: &BoolExpr, syms: &SymbolTable) -> String {
    Formula::from(e).display(syms).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::EnvironmentBuilder;

    fn syms() -> SymbolTable {
        SymbolTable {
            vars: vec!["posA".into(), "w".into()],
            agents: vec!["A".into(), "B".into()],
            tvars: vec!["x".into(), "y".into()],
        }
    }

    #[test]
    fn parses_knowledge_and_temporal() {
        let s = syms();
        let f = parse_formula("AG (x => K[A] (posA >= 2))", &s).unwrap();
        match &f {
            Formula::AR(l, body) => {
                assert_eq!(**l, Formula::False);
                match body.as_ref() {
                    Formula::Implies(a, b) => {
                        assert_eq!(**a, Formula::TVar(TVarId(0)));
                        assert!(matches!(b.as_ref(), Formula::K(AgentId(0), _)));
                    }
                    other => panic!("unexpected body {other:?}"),
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parses_until_and_k_true() {
        let s = syms();
        assert_eq!(
            parse_formula("A[posA = 0 U w = 1]", &s).unwrap(),
            Formula::AU(
                Box::new(Formula::atom(VarId(0), Rel::Eq, 0)),
                Box::new(Formula::atom(VarId(1), Rel::Eq, 1))
            )
        );
        assert_eq!(
            parse_formula("K[B] true", &s).unwrap(),
            Formula::know(AgentId(1), Formula::True)
        );
    }

    #[test]
    fn precedence_and_roundtrip() {
        let s = syms();
        let cases = [
            "x & !y | posA = 0 => w <= 1 <=> K[A] AF posA >= 2",
            "AG (x => K[A] (posA >= 2))",
            "E[x U A[w = 1 R posA <= 3]]",
            "!(x | y) & AX EX EG w = 1",
            "posA <= -1",
        ];
        for src in cases {
            let f = parse_formula(src, &s).unwrap();
            let printed = f.display(&s).to_string();
            let again = parse_formula(&printed, &s).unwrap();
            assert_eq!(f, again, "roundtrip failed for {src} -> {printed}");
        }
    }

    #[test]
    fn fg_normalized_to_until_release() {
        let s = syms();
        assert_eq!(
            parse_formula("AF w = 1", &s).unwrap(),
            parse_formula("A[true U w = 1]", &s).unwrap()
        );
        assert_eq!(
            parse_formula("EG w = 1", &s).unwrap(),
            parse_formula("E[false R w = 1]", &s).unwrap()
        );
    }

    #[test]
    fn positive_fragment_membership() {
        let s = syms();
        let yes = [
            "K[A] posA >= 2",
            "K[B] (w = 1 => AG posA <= 3)", // atom negated by desugaring, not the modality
            "AG (x => K[A] AX w = 1)",
            "!EF w = 1", // negation pushes to AG !w=1
            "A[x U !y]",
        ];
        let no = [
            "!K[A] posA >= 2",
            "EF w = 1",
            "!AG w = 1",
            "K[A] !K[A] w = 1",
            "x <=> K[A] w = 1", // K occurs under both polarities
        ];
        for src in yes {
            assert!(is_ctlk_plus(&parse_formula(src, &s).unwrap()), "{src}");
        }
        for src in no {
            assert!(!is_ctlk_plus(&parse_formula(src, &s).unwrap()), "{src}");
        }
    }

    #[test]
    fn positive_fragment_closed_under_and_or() {
        let s = syms();
        let a = parse_formula("K[A] posA >= 2", &s).unwrap();
        let b = parse_formula("AG w = 1", &s).unwrap();
        assert!(is_ctlk_plus(&a.clone().and(b.clone())));
        assert!(is_ctlk_plus(&a.or(b)));
    }

    #[test]
    fn substitution_application() {
        let s = syms();
        let f = parse_formula("AG (x => K[A] w = 1)", &s).unwrap();
        let mut theta = Substitution::empty();
        theta.bind(
            TVarId(0),
            BoolExpr::Atom(Atom {
                var: VarId(0),
                rel: Rel::Ge,
                bound: 3,
            }),
        );
        let (applied, unbound) = apply_substitution(&f, &theta);
        assert!(unbound.is_empty());
        assert_eq!(
            applied,
            parse_formula("AG (posA >= 3 => K[A] w = 1)", &s).unwrap()
        );

        // empty substitution is the identity, unbound variables reported
        let (same, unbound) = apply_substitution(&f, &Substitution::empty());
        assert_eq!(same, f);
        assert_eq!(unbound, vec![TVarId(0)]);
    }

    #[test]
    fn substitution_composition_disjoint_domains() {
        let s = syms();
        let f = parse_formula("x | !y", &s).unwrap();
        let bx = BoolExpr::Atom(Atom {
            var: VarId(0),
            rel: Rel::Ge,
            bound: 1,
        });
        let by = BoolExpr::Const(false);
        let mut tx = Substitution::empty();
        tx.bind(TVarId(0), bx.clone());
        let mut ty = Substitution::empty();
        ty.bind(TVarId(1), by.clone());
        let mut both = Substitution::empty();
        both.bind(TVarId(0), bx);
        both.bind(TVarId(1), by);
        let (step1, _) = apply_substitution(&f, &tx);
        let (step2, _) = apply_substitution(&step1, &ty);
        let (direct, _) = apply_substitution(&f, &both);
        assert_eq!(step2, direct);
    }

    #[test]
    fn classification_shapes() {
        let env = EnvironmentBuilder::new()
            .agent("A")
            .agent("B")
            .var("posA", 0, 3)
            .var("w", 0, 1)
            .actions("A", &["a"])
            .actions("B", &["b"])
            .obs("A", &["posA"])
            .obs("B", &["w"])
            .initial(&[0, 0])
            .build()
            .unwrap();
        let templates = JointTemplate {
            vars: vec![
                crate::kernel::TemplateVar {
                    name: "x".into(),
                    agent: AgentId(0),
                },
                crate::kernel::TemplateVar {
                    name: "y".into(),
                    agent: AgentId(1),
                },
            ],
            templates: vec![
                crate::kernel::ProtocolTemplate {
                    agent: AgentId(0),
                    clauses: vec![],
                },
                crate::kernel::ProtocolTemplate {
                    agent: AgentId(1),
                    clauses: vec![],
                },
            ],
        };
        let s = SymbolTable::new(&env, Some(&templates));
        let kbp = parse_formula("AG (x <=> K[A] AX w = 1)", &s).unwrap();
        let c = classify_spec(&kbp, &templates).unwrap();
        assert_eq!(c.kind, SpecKind::Kbp);
        assert_eq!(c.var, Some(TVarId(0)));

        let slp = parse_formula("AG (x => K[A] AX w = 1)", &s).unwrap();
        assert_eq!(
            classify_spec(&slp, &templates).unwrap().kind,
            SpecKind::SlpSound
        );

        let gen = parse_formula("AG (posA = 0 => w = 1)", &s).unwrap();
        assert_eq!(
            classify_spec(&gen, &templates).unwrap().kind,
            SpecKind::General
        );

        // agent mismatch: y belongs to B, knowledge agent is A
        let bad = parse_formula("AG (y => K[A] AX w = 1)", &s).unwrap();
        assert!(classify_spec(&bad, &templates).is_err());
    }
}
