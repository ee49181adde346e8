//! Regular expressions over ontology terms.
//!
//! Matching runs over the lexicon-mapped unit stream of an utterance: each
//! lexicon hit is one unit (even when it spans several tokens, e.g.
//! "palo alto"), and each unmapped token is one unit with no terms. A
//! `Term` consumes exactly one unit; unmapped units can only be skipped by
//! `Gap`. The matcher simulates the expression over sets of unit positions,
//! so it terminates on any expression.

use std::collections::BTreeSet;
use std::ops::Range;

use crate::conditions::{ConditionError, Unit, Utterance};
use crate::ontology::{Facts, Ontology, OntologySchema, Term};
use crate::sexpr::{SExpr, SExprKind};

/// Default width of the `_` wildcard.
pub const DEFAULT_GAP: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GrammarExpr {
    Term { term: Term, hyponyms: bool },
    Seq(Vec<GrammarExpr>),
    Alt(Vec<GrammarExpr>),
    Opt(Box<GrammarExpr>),
    Star(Box<GrammarExpr>),
    /// Skips between 0 and `n` units, mapped or not.
    Gap(usize),
}

impl GrammarExpr {
    pub fn term(term: Term) -> Self {
        GrammarExpr::Term { term, hyponyms: true }
    }

    /// Can this expression match the empty unit sequence?
    pub fn nullable(&self) -> bool {
        match self {
            GrammarExpr::Term { .. } => false,
            GrammarExpr::Seq(items) => items.iter().all(GrammarExpr::nullable),
            GrammarExpr::Alt(items) => items.iter().any(GrammarExpr::nullable),
            GrammarExpr::Opt(_) | GrammarExpr::Star(_) | GrammarExpr::Gap(_) => true,
        }
    }

    /// Number of expression nodes.
    pub fn size(&self) -> usize {
        1 + match self {
            GrammarExpr::Seq(items) | GrammarExpr::Alt(items) => items.iter().map(GrammarExpr::size).sum(),
            GrammarExpr::Opt(c) | GrammarExpr::Star(c) => c.size(),
            _ => 0,
        }
    }

    pub fn depth(&self) -> usize {
        1 + match self {
            GrammarExpr::Seq(items) | GrammarExpr::Alt(items) => {
                items.iter().map(GrammarExpr::depth).max().unwrap_or(0)
            }
            GrammarExpr::Opt(c) | GrammarExpr::Star(c) => c.depth(),
            _ => 0,
        }
    }

    pub fn terms(&self, out: &mut Vec<Term>) {
        match self {
            GrammarExpr::Term { term, .. } => out.push(*term),
            GrammarExpr::Seq(items) | GrammarExpr::Alt(items) => items.iter().for_each(|i| i.terms(out)),
            GrammarExpr::Opt(c) | GrammarExpr::Star(c) => c.terms(out),
            GrammarExpr::Gap(_) => {}
        }
    }
}

const RESERVED: [&str; 6] = ["or", "seq", "?", "*", "gap", "term"];

/// Parse a grammar expression. `resolve` maps a name to a class or instance.
///
/// Syntax: a bare name is a term, `_` a gap of [`DEFAULT_GAP`], a plain list
/// a sequence; `(or ...)`, `(seq ...)`, `(? e)`, `(* e)`, `(gap N)` and
/// `(term Name :exact)` are the explicit forms.
pub fn parse_grammar(
    e: &SExpr,
    resolve: &dyn Fn(&str) -> Option<Term>,
) -> Result<GrammarExpr, ConditionError> {
    match &e.kind {
        SExprKind::Symbol(s) if s == "_" => Ok(GrammarExpr::Gap(DEFAULT_GAP)),
        SExprKind::Symbol(s) => resolve(s)
            .map(GrammarExpr::term)
            .ok_or_else(|| ConditionError::unresolved(e.loc, s, "class or instance")),
        SExprKind::List(items) => {
            let head = items.first().and_then(SExpr::as_symbol);
            let args = items.get(1..).unwrap_or_default();
            let parse_all = |xs: &[SExpr]| -> Result<Vec<GrammarExpr>, ConditionError> {
                xs.iter().map(|x| parse_grammar(x, resolve)).collect()
            };
            match head {
                Some("or") => Ok(GrammarExpr::Alt(parse_all(args)?)),
                Some("seq") => Ok(GrammarExpr::Seq(parse_all(args)?)),
                Some("?") => match args {
                    [x] => Ok(GrammarExpr::Opt(Box::new(parse_grammar(x, resolve)?))),
                    _ => Err(ConditionError::malformed(e.loc, "(? e) takes exactly one expression")),
                },
                Some("*") => match args {
                    [x] => {
                        let child = parse_grammar(x, resolve)?;
                        if child.nullable() {
                            return Err(ConditionError::malformed(
                                e.loc,
                                "the body of (* e) must not match the empty sequence",
                            ));
                        }
                        Ok(GrammarExpr::Star(Box::new(child)))
                    }
                    _ => Err(ConditionError::malformed(e.loc, "(* e) takes exactly one expression")),
                },
                Some("gap") => match args {
                    [n] => match n.kind {
                        SExprKind::Number(v) if v >= 0.0 && v.fract() == 0.0 => Ok(GrammarExpr::Gap(v as usize)),
                        _ => Err(ConditionError::malformed(n.loc, "gap width must be a non-negative integer")),
                    },
                    _ => Err(ConditionError::malformed(e.loc, "(gap N) takes exactly one number")),
                },
                Some("term") => {
                    let (name, exact) = match args {
                        [n] => (n, false),
                        [n, k] if k.as_keyword() == Some("exact") => (n, true),
                        _ => return Err(ConditionError::malformed(e.loc, "expected (term Name) or (term Name :exact)")),
                    };
                    let s = name
                        .as_symbol()
                        .ok_or_else(|| ConditionError::malformed(name.loc, "expected a term name"))?;
                    let term = resolve(s).ok_or_else(|| ConditionError::unresolved(name.loc, s, "class or instance"))?;
                    Ok(GrammarExpr::Term { term, hyponyms: !exact })
                }
                _ => Ok(GrammarExpr::Seq(parse_all(items)?)),
            }
        }
        _ => Err(ConditionError::malformed(
            e.loc,
            format!("unexpected {} in grammar expression", e.kind_name()),
        )),
    }
}

pub fn print_grammar(g: &GrammarExpr, onto: &Ontology) -> SExpr {
    let name = |t: &Term| SExpr::symbol(onto.term_name(*t));
    match g {
        GrammarExpr::Term { term, hyponyms: true } => name(term),
        GrammarExpr::Term { term, hyponyms: false } => {
            SExpr::list(vec![SExpr::symbol("term"), name(term), SExpr::keyword("exact")])
        }
        GrammarExpr::Seq(items) => {
            // A plain list whose head is a reserved word would re-parse as that form.
            let needs_head = items.first().is_some_and(|first| {
                matches!(first, GrammarExpr::Term { term, hyponyms: true } if RESERVED.contains(&onto.term_name(*term)))
            });
            let mut out: Vec<SExpr> = items.iter().map(|i| print_grammar(i, onto)).collect();
            if needs_head {
                out.insert(0, SExpr::symbol("seq"));
            }
            SExpr::list(out)
        }
        GrammarExpr::Alt(items) => {
            let mut out = vec![SExpr::symbol("or")];
            out.extend(items.iter().map(|i| print_grammar(i, onto)));
            SExpr::list(out)
        }
        GrammarExpr::Opt(c) => SExpr::list(vec![SExpr::symbol("?"), print_grammar(c, onto)]),
        GrammarExpr::Star(c) => SExpr::list(vec![SExpr::symbol("*"), print_grammar(c, onto)]),
        GrammarExpr::Gap(n) if *n == DEFAULT_GAP => SExpr::symbol("_"),
        GrammarExpr::Gap(n) => SExpr::list(vec![SExpr::symbol("gap"), SExpr::number(*n as f64)]),
    }
}

/// Does one unit satisfy a term? Ambiguous units match if any candidate does.
pub(crate) fn unit_matches(
    unit: &Unit,
    term: Term,
    hyponyms: bool,
    schema: &OntologySchema,
    facts: &(impl Facts + ?Sized),
) -> bool {
    unit.terms.iter().any(|found| {
        if hyponyms {
            schema.term_matches(*found, term, facts)
        } else {
            *found == term
        }
    })
}

struct Matcher<'a, F: Facts + ?Sized> {
    units: &'a [Unit],
    schema: &'a OntologySchema,
    facts: &'a F,
}

impl<F: Facts + ?Sized> Matcher<'_, F> {
    /// All positions reachable by matching `g` starting from any of `from`.
    fn advance(&self, g: &GrammarExpr, from: &BTreeSet<usize>) -> BTreeSet<usize> {
        let n = self.units.len();
        match g {
            GrammarExpr::Term { term, hyponyms } => from
                .iter()
                .filter(|&&p| p < n && unit_matches(&self.units[p], *term, *hyponyms, self.schema, self.facts))
                .map(|p| p + 1)
                .collect(),
            GrammarExpr::Seq(items) => {
                let mut cur = from.clone();
                for item in items {
                    if cur.is_empty() {
                        break;
                    }
                    cur = self.advance(item, &cur);
                }
                cur
            }
            GrammarExpr::Alt(items) => items.iter().flat_map(|i| self.advance(i, from)).collect(),
            GrammarExpr::Opt(c) => {
                let mut out = from.clone();
                out.extend(self.advance(c, from));
                out
            }
            GrammarExpr::Star(c) => {
                let mut reached = from.clone();
                let mut frontier = from.clone();
                while !frontier.is_empty() {
                    let next: BTreeSet<usize> = self
                        .advance(c, &frontier)
                        .into_iter()
                        .filter(|p| !reached.contains(p))
                        .collect();
                    reached.extend(next.iter().copied());
                    frontier = next;
                }
                reached
            }
            GrammarExpr::Gap(k) => from
                .iter()
                .flat_map(|&p| p..=(p + k).min(n))
                .collect(),
        }
    }
}

/// Leftmost-shortest match of `g` anywhere in the utterance, as a span of
/// unit indices.
pub fn match_units(
    g: &GrammarExpr,
    units: &[Unit],
    schema: &OntologySchema,
    facts: &(impl Facts + ?Sized),
) -> Option<Range<usize>> {
    let m = Matcher { units, schema, facts };
    (0..=units.len()).find_map(|start| {
        let ends = m.advance(g, &BTreeSet::from([start]));
        ends.first().map(|&end| start..end)
    })
}

/// Match `g` against an utterance; the result is a span of token indices.
pub fn match_grammar(
    g: &GrammarExpr,
    utterance: &Utterance,
    schema: &OntologySchema,
    facts: &(impl Facts + ?Sized),
) -> Option<Range<usize>> {
    let units = utterance.units();
    let span = match_units(g, &units, schema, facts)?;
    Some(units_to_tokens(&units, span, utterance.tokens.len()))
}

pub fn units_to_tokens(units: &[Unit], span: Range<usize>, token_count: usize) -> Range<usize> {
    let pos = |u: usize| units.get(u).map_or(token_count, |x| x.start);
    if span.is_empty() {
        let p = pos(span.start);
        p..p
    } else {
        units[span.start].start..units[span.end - 1].end
    }
}
