//! Node and transition conditions.
//!
//! Three kinds of leaves: the current intent and its slots, grammar
//! expressions over the mapped utterance, and path expressions over the
//! fact base. Bare names are shorthand: an intent class becomes an intent
//! condition, any other class or instance a keyword spot.

pub mod grammar;
pub mod path;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{ClassId, Facts, IndividualId, LexMatch, Lexicon, Ontology, PropertyId, Term, Value};
use crate::sexpr::{Loc, SExpr, SExprKind};

pub use grammar::{match_grammar, parse_grammar, GrammarExpr};
pub use path::{eval_path, parse_path, PathExpr, PathResult, PathStart, PathStep};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConditionError {
    #[error("{loc}: reference to undeclared {expected} '{name}'")]
    Unresolved {
        loc: Loc,
        name: String,
        expected: &'static str,
    },
    #[error("{loc}: {message}")]
    Malformed { loc: Loc, message: String },
    #[error("unknown path start {0}")]
    UnknownStart(String),
    #[error("unbound variable {0}")]
    UnboundVariable(String),
}

impl ConditionError {
    pub fn unresolved(loc: Loc, name: &str, expected: &'static str) -> Self {
        ConditionError::Unresolved {
            loc,
            name: name.to_string(),
            expected,
        }
    }

    pub fn malformed(loc: Loc, message: impl Into<String>) -> Self {
        ConditionError::Malformed {
            loc,
            message: message.into(),
        }
    }

    pub fn loc(&self) -> Option<Loc> {
        match self {
            ConditionError::Unresolved { loc, .. } | ConditionError::Malformed { loc, .. } => Some(*loc),
            _ => None,
        }
    }

    pub fn unresolved_name(&self) -> Option<&str> {
        match self {
            ConditionError::Unresolved { name, .. } => Some(name),
            _ => None,
        }
    }
}

/// One position of the mapped token stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unit {
    pub start: usize,
    pub end: usize,
    /// Empty for unmapped tokens.
    pub terms: BTreeSet<Term>,
}

/// A normalized user utterance with its lexicon hits.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Utterance {
    pub tokens: Vec<String>,
    pub matches: Vec<LexMatch>,
}

impl Utterance {
    pub fn new(text: &str, lexicon: &Lexicon) -> Self {
        Self::from_tokens(crate::ontology::normalize_tokens(text), lexicon)
    }

    pub fn from_tokens(tokens: Vec<String>, lexicon: &Lexicon) -> Self {
        let matches = lexicon.lexicon_map(&tokens);
        Self { tokens, matches }
    }

    /// Mapped spans become single units; every other token is its own unit.
    pub fn units(&self) -> Vec<Unit> {
        let mut out = Vec::with_capacity(self.tokens.len());
        let mut i = 0;
        let mut hits = self.matches.iter().peekable();
        while i < self.tokens.len() {
            match hits.peek() {
                Some(m) if m.start == i => {
                    out.push(Unit {
                        start: m.start,
                        end: m.end,
                        terms: m.terms.clone(),
                    });
                    i = m.end;
                    hits.next();
                }
                _ => {
                    out.push(Unit {
                        start: i,
                        end: i + 1,
                        terms: BTreeSet::new(),
                    });
                    i += 1;
                }
            }
        }
        out
    }

    /// All mapped terms, in utterance order.
    pub fn terms(&self) -> impl Iterator<Item = Term> + '_ {
        self.matches.iter().flat_map(|m| m.terms.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConditionAst {
    Intent {
        intent: ClassId,
        slots: Vec<(PropertyId, ClassId)>,
    },
    Grammar(GrammarExpr),
    Path(PathExpr),
    Keywords(Vec<Term>),
    And(Vec<ConditionAst>),
    Or(Vec<ConditionAst>),
    Not(Box<ConditionAst>),
    True,
}

impl ConditionAst {
    /// Leaves plus combinator nodes.
    pub fn size(&self) -> usize {
        match self {
            ConditionAst::And(items) | ConditionAst::Or(items) => 1 + items.iter().map(ConditionAst::size).sum::<usize>(),
            ConditionAst::Not(c) => 1 + c.size(),
            _ => 1,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            ConditionAst::And(items) | ConditionAst::Or(items) => {
                1 + items.iter().map(ConditionAst::depth).max().unwrap_or(0)
            }
            ConditionAst::Not(c) => 1 + c.depth(),
            _ => 1,
        }
    }
}

/// The slice of dialogue state that conditions can see.
#[derive(Debug, Clone, Copy)]
pub struct IntentView<'a> {
    pub class: ClassId,
    pub slots: &'a BTreeMap<PropertyId, Value>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DialogueView<'a> {
    pub utterance: Option<&'a Utterance>,
    pub intent: Option<IntentView<'a>>,
    pub bindings: Option<&'a BTreeMap<String, IndividualId>>,
}

fn resolve_class(e: &SExpr, onto: &Ontology) -> Result<ClassId, ConditionError> {
    let name = e
        .as_symbol()
        .ok_or_else(|| ConditionError::malformed(e.loc, "expected a class name"))?;
    onto.schema
        .class(name)
        .ok_or_else(|| ConditionError::unresolved(e.loc, name, "class"))
}

fn resolve_term(e: &SExpr, onto: &Ontology) -> Result<Term, ConditionError> {
    let name = e
        .as_symbol()
        .ok_or_else(|| ConditionError::malformed(e.loc, "expected a class or instance name"))?;
    onto.term(name)
        .ok_or_else(|| ConditionError::unresolved(e.loc, name, "class or instance"))
}

pub fn parse_condition(e: &SExpr, onto: &Ontology) -> Result<ConditionAst, ConditionError> {
    match &e.kind {
        SExprKind::Symbol(s) if s == "true" => Ok(ConditionAst::True),
        SExprKind::Symbol(s) => {
            if let Some(c) = onto.schema.class(s) {
                if onto.schema.intent(c).is_some() {
                    return Ok(ConditionAst::Intent {
                        intent: c,
                        slots: Vec::new(),
                    });
                }
                return Ok(ConditionAst::Keywords(vec![Term::Class(c)]));
            }
            if let Some(i) = onto.facts.individual(s) {
                return Ok(ConditionAst::Keywords(vec![Term::Individual(i)]));
            }
            Err(ConditionError::unresolved(e.loc, s, "intent, class or instance"))
        }
        SExprKind::List(items) => {
            let head = items
                .first()
                .and_then(SExpr::as_symbol)
                .ok_or_else(|| ConditionError::malformed(e.loc, "a condition form starts with its operator"))?;
            let args = &items[1..];
            let all = |xs: &[SExpr]| xs.iter().map(|x| parse_condition(x, onto)).collect::<Result<Vec<_>, _>>();
            match head {
                "and" => Ok(ConditionAst::And(all(args)?)),
                "or" => Ok(ConditionAst::Or(all(args)?)),
                "not" => match args {
                    [x] => Ok(ConditionAst::Not(Box::new(parse_condition(x, onto)?))),
                    _ => Err(ConditionError::malformed(e.loc, "(not c) takes exactly one condition")),
                },
                "grammar" => {
                    let resolve = |n: &str| onto.term(n);
                    match args {
                        [] => Err(ConditionError::malformed(e.loc, "(grammar ...) needs an expression")),
                        [one] => Ok(ConditionAst::Grammar(parse_grammar(one, &resolve)?)),
                        many => Ok(ConditionAst::Grammar(GrammarExpr::Seq(
                            many.iter().map(|x| parse_grammar(x, &resolve)).collect::<Result<_, _>>()?,
                        ))),
                    }
                }
                "path" => {
                    let (negated, expr) = match args {
                        [x] => (false, x),
                        [k, x] if k.as_keyword() == Some("not") => (true, x),
                        _ => return Err(ConditionError::malformed(e.loc, "expected (path <expr>) or (path :not <expr>)")),
                    };
                    let mut p = parse_path(expr, onto)?;
                    p.negated = negated;
                    Ok(ConditionAst::Path(p))
                }
                "keywords" => {
                    if args.is_empty() {
                        return Err(ConditionError::malformed(e.loc, "(keywords ...) needs at least one term"));
                    }
                    Ok(ConditionAst::Keywords(
                        args.iter().map(|a| resolve_term(a, onto)).collect::<Result<_, _>>()?,
                    ))
                }
                "intent" => {
                    let (name, slots) = args
                        .split_first()
                        .ok_or_else(|| ConditionError::malformed(e.loc, "(intent Name (slot Class)*)"))?;
                    let intent = resolve_class(name, onto)?;
                    if onto.schema.intent(intent).is_none() {
                        return Err(ConditionError::unresolved(name.loc, onto.schema.class_name(intent), "intent"));
                    }
                    let slots = slots
                        .iter()
                        .map(|s| match s.as_list() {
                            Some([p, c]) => {
                                let pname = p
                                    .as_symbol()
                                    .ok_or_else(|| ConditionError::malformed(p.loc, "expected a slot property"))?;
                                let prop = onto
                                    .schema
                                    .property(pname)
                                    .ok_or_else(|| ConditionError::unresolved(p.loc, pname, "property"))?;
                                Ok((prop, resolve_class(c, onto)?))
                            }
                            _ => Err(ConditionError::malformed(s.loc, "a slot constraint is (property Class)")),
                        })
                        .collect::<Result<_, _>>()?;
                    Ok(ConditionAst::Intent { intent, slots })
                }
                other => Err(ConditionError::malformed(e.loc, format!("unknown condition form '{other}'"))),
            }
        }
        _ => Err(ConditionError::malformed(
            e.loc,
            format!("a condition cannot be a {}", e.kind_name()),
        )),
    }
}

/// Canonical concrete syntax; `parse_condition(print_condition(c)) == c`.
pub fn print_condition(c: &ConditionAst, onto: &Ontology) -> SExpr {
    let sym = SExpr::symbol;
    match c {
        ConditionAst::True => sym("true"),
        ConditionAst::Intent { intent, slots } if slots.is_empty() => sym(onto.schema.class_name(*intent)),
        ConditionAst::Intent { intent, slots } => {
            let mut items = vec![sym("intent"), sym(onto.schema.class_name(*intent))];
            items.extend(slots.iter().map(|(p, k)| {
                SExpr::list(vec![sym(onto.schema.property_name(*p)), sym(onto.schema.class_name(*k))])
            }));
            SExpr::list(items)
        }
        ConditionAst::Keywords(terms) => match terms.as_slice() {
            // A lone intent class would re-parse as an intent condition.
            [Term::Class(k)] if onto.schema.intent(*k).is_none() => sym(onto.schema.class_name(*k)),
            [Term::Individual(i)] => sym(onto.facts.individual_name(*i)),
            _ => {
                let mut items = vec![sym("keywords")];
                items.extend(terms.iter().map(|t| sym(onto.term_name(*t))));
                SExpr::list(items)
            }
        },
        ConditionAst::Grammar(g) => SExpr::list(vec![sym("grammar"), grammar::print_grammar(g, onto)]),
        ConditionAst::Path(p) => {
            let mut items = vec![sym("path")];
            if p.negated {
                items.push(SExpr::keyword("not"));
            }
            items.push(path::print_path(p, onto));
            SExpr::list(items)
        }
        ConditionAst::And(items) | ConditionAst::Or(items) => {
            let op = if matches!(c, ConditionAst::And(_)) { "and" } else { "or" };
            let mut out = vec![sym(op)];
            out.extend(items.iter().map(|i| print_condition(i, onto)));
            SExpr::list(out)
        }
        ConditionAst::Not(inner) => SExpr::list(vec![sym("not"), print_condition(inner, onto)]),
    }
}

/// Evaluate a condition. Missing context (no utterance, no intent, unbound
/// variables) makes the affected leaf false.
pub fn eval_condition(
    c: &ConditionAst,
    onto: &Ontology,
    facts: &(impl Facts + ?Sized),
    view: &DialogueView<'_>,
) -> bool {
    let schema = &onto.schema;
    match c {
        ConditionAst::True => true,
        ConditionAst::Intent { intent, slots } => view.intent.is_some_and(|cur| {
            schema.subsumed(cur.class, *intent)
                && slots.iter().all(|(p, range)| {
                    cur.slots
                        .get(p)
                        .is_some_and(|v| schema.value_fits(v, *range, facts))
                })
        }),
        ConditionAst::Keywords(terms) => view.utterance.is_some_and(|u| {
            u.terms()
                .any(|found| terms.iter().any(|t| schema.term_matches(found, *t, facts)))
        }),
        ConditionAst::Grammar(g) => view
            .utterance
            .is_some_and(|u| match_grammar(g, u, schema, facts).is_some()),
        ConditionAst::Path(p) => {
            let empty = BTreeMap::new();
            let bindings = view.bindings.unwrap_or(&empty);
            eval_path(p, schema, facts, bindings).is_ok_and(|r| r.holds)
        }
        ConditionAst::And(items) => items.iter().all(|i| eval_condition(i, onto, facts, view)),
        ConditionAst::Or(items) => items.iter().any(|i| eval_condition(i, onto, facts, view)),
        ConditionAst::Not(inner) => !eval_condition(inner, onto, facts, view),
    }
}
