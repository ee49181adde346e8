//! Path expressions over the fact base.
//!
//! `((:ind currentUser) (healthCondition Cough))` starts at an individual and
//! follows `healthCondition`, keeping only values that are instances (or
//! subclasses) of `Cough`. A class start, `(Restaurant (city PaloAlto))` or
//! `((:class Restaurant) ...)`, holds when some instance of the class
//! satisfies the steps. `$name` starts at a select binding.

use std::collections::{BTreeMap, BTreeSet};

use crate::conditions::ConditionError;
use crate::ontology::{ClassId, Facts, IndividualId, Ontology, OntologySchema, PropertyId, Term, Value};
use crate::sexpr::{SExpr, Span};

/// A path expression as written, before name resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSyntax {
    pub start: StartSyntax,
    pub steps: Vec<StepSyntax>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StartSyntax {
    /// `(:ind X)`
    Individual(String, Span),
    /// `(:class C)`
    Class(String, Span),
    /// A bare name, resolved to whichever kind it names.
    Bare(String, Span),
    /// `$x` or `(:ind $x)`
    Var(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepSyntax {
    pub property: String,
    pub filter: Option<String>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathStart {
    Individual(IndividualId),
    Class(ClassId),
    Var(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathStep {
    pub property: PropertyId,
    pub filter: Option<ClassId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathExpr {
    pub start: PathStart,
    pub steps: Vec<PathStep>,
    pub negated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PathResult {
    pub holds: bool,
    pub witnesses: BTreeSet<Value>,
}

fn is_var(name: &str) -> bool {
    name.len() > 1 && name.starts_with('$')
}

/// Structural parse of a path expression; names are not checked.
pub fn parse_path_syntax(e: &SExpr) -> Result<PathSyntax, ConditionError> {
    let items = e
        .as_list()
        .filter(|l| !l.is_empty())
        .ok_or_else(|| ConditionError::malformed(e.loc, "a path expression is a non-empty list"))?;
    let start = parse_start(&items[0])?;
    let steps = items[1..]
        .iter()
        .map(|s| {
            let parts = s.as_list().unwrap_or_default();
            let sym = |x: &SExpr| {
                x.as_symbol()
                    .map(str::to_string)
                    .ok_or_else(|| ConditionError::malformed(x.loc, "expected a name in path step"))
            };
            match parts {
                [p] => Ok(StepSyntax {
                    property: sym(p)?,
                    filter: None,
                    span: s.loc.into(),
                }),
                [p, f] => Ok(StepSyntax {
                    property: sym(p)?,
                    filter: Some(sym(f)?),
                    span: s.loc.into(),
                }),
                _ => Err(ConditionError::malformed(s.loc, "a path step is (property) or (property Class)")),
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(PathSyntax {
        start,
        steps,
        span: e.loc.into(),
    })
}

fn parse_start(e: &SExpr) -> Result<StartSyntax, ConditionError> {
    if let Some(name) = e.as_symbol() {
        return Ok(if is_var(name) {
            StartSyntax::Var(name.to_string())
        } else {
            StartSyntax::Bare(name.to_string(), e.loc.into())
        });
    }
    match e.as_list() {
        Some([k, n]) => {
            let name = n
                .as_symbol()
                .ok_or_else(|| ConditionError::malformed(n.loc, "expected a name after the start keyword"))?;
            match k.as_keyword() {
                Some("ind") if is_var(name) => Ok(StartSyntax::Var(name.to_string())),
                Some("ind") => Ok(StartSyntax::Individual(name.to_string(), n.loc.into())),
                Some("class") => Ok(StartSyntax::Class(name.to_string(), n.loc.into())),
                _ => Err(ConditionError::malformed(k.loc, "path start must be (:ind X), (:class C) or a name")),
            }
        }
        _ => Err(ConditionError::malformed(e.loc, "path start must be (:ind X), (:class C) or a name")),
    }
}

impl PathSyntax {
    /// Print the path as written; `$x` starts print as `(:ind $x)`.
    pub fn to_sexpr(&self) -> SExpr {
        let named = |k: &str, n: &str| SExpr::list(vec![SExpr::keyword(k), SExpr::symbol(n)]);
        let mut items = vec![match &self.start {
            StartSyntax::Individual(n, _) | StartSyntax::Var(n) => named("ind", n),
            StartSyntax::Class(n, _) => named("class", n),
            StartSyntax::Bare(n, _) => SExpr::symbol(n.clone()),
        }];
        for s in &self.steps {
            let mut step = vec![SExpr::symbol(s.property.clone())];
            if let Some(f) = &s.filter {
                step.push(SExpr::symbol(f.clone()));
            }
            items.push(SExpr::list(step));
        }
        SExpr::list(items)
    }

    pub fn resolve(&self, onto: &Ontology) -> Result<PathExpr, ConditionError> {
        let start = match &self.start {
            StartSyntax::Var(v) => PathStart::Var(v.clone()),
            StartSyntax::Individual(n, loc) => PathStart::Individual(
                onto.facts
                    .individual(n)
                    .ok_or_else(|| ConditionError::unresolved(loc.0, n, "instance"))?,
            ),
            StartSyntax::Class(n, loc) => PathStart::Class(
                onto.schema
                    .class(n)
                    .ok_or_else(|| ConditionError::unresolved(loc.0, n, "class"))?,
            ),
            StartSyntax::Bare(n, loc) => match onto.term(n) {
                Some(Term::Class(c)) => PathStart::Class(c),
                Some(Term::Individual(i)) => PathStart::Individual(i),
                None => return Err(ConditionError::unresolved(loc.0, n, "class or instance")),
            },
        };
        let steps = self
            .steps
            .iter()
            .map(|s| {
                let property = onto
                    .schema
                    .property(&s.property)
                    .ok_or_else(|| ConditionError::unresolved(s.span.0, &s.property, "property"))?;
                let filter = s
                    .filter
                    .as_ref()
                    .map(|f| {
                        onto.schema
                            .class(f)
                            .ok_or_else(|| ConditionError::unresolved(s.span.0, f, "class"))
                    })
                    .transpose()?;
                Ok(PathStep { property, filter })
            })
            .collect::<Result<_, ConditionError>>()?;
        Ok(PathExpr {
            start,
            steps,
            negated: false,
        })
    }
}

pub fn parse_path(e: &SExpr, onto: &Ontology) -> Result<PathExpr, ConditionError> {
    parse_path_syntax(e)?.resolve(onto)
}

pub fn print_path(p: &PathExpr, onto: &Ontology) -> SExpr {
    let mut items = vec![match &p.start {
        PathStart::Individual(i) => SExpr::list(vec![SExpr::keyword("ind"), SExpr::symbol(onto.facts.individual_name(*i))]),
        PathStart::Class(c) => SExpr::list(vec![SExpr::keyword("class"), SExpr::symbol(onto.schema.class_name(*c))]),
        PathStart::Var(v) => SExpr::list(vec![SExpr::keyword("ind"), SExpr::symbol(v.clone())]),
    }];
    for s in &p.steps {
        let mut step = vec![SExpr::symbol(onto.schema.property_name(s.property))];
        if let Some(f) = s.filter {
            step.push(SExpr::symbol(onto.schema.class_name(f)));
        }
        items.push(SExpr::list(step));
    }
    SExpr::list(items)
}

fn follow(
    schema: &OntologySchema,
    facts: &(impl Facts + ?Sized),
    from: BTreeSet<Value>,
    steps: &[PathStep],
) -> BTreeSet<Value> {
    let mut cur = from;
    for step in steps {
        if cur.is_empty() {
            break;
        }
        cur = cur
            .iter()
            .filter_map(|v| match v {
                Value::Individual(i) => Some(*i),
                _ => None,
            })
            .flat_map(|i| schema.fillers_unchecked(i, step.property, facts))
            .filter(|v| step.filter.is_none_or(|c| schema.value_fits(v, c, facts)))
            .collect();
    }
    cur
}

/// Evaluate a path. Unknown start ids and unbound variables are errors.
pub fn eval_path(
    p: &PathExpr,
    schema: &OntologySchema,
    facts: &(impl Facts + ?Sized),
    bindings: &BTreeMap<String, IndividualId>,
) -> Result<PathResult, ConditionError> {
    let witnesses = match &p.start {
        PathStart::Individual(i) => {
            if facts.types_of(*i).is_none() {
                return Err(ConditionError::UnknownStart(format!("{i:?}")));
            }
            follow(schema, facts, BTreeSet::from([Value::Individual(*i)]), &p.steps)
        }
        PathStart::Var(v) => {
            let i = bindings
                .get(v)
                .ok_or_else(|| ConditionError::UnboundVariable(v.clone()))?;
            follow(schema, facts, BTreeSet::from([Value::Individual(*i)]), &p.steps)
        }
        PathStart::Class(c) => {
            if schema.class_decl(*c).is_none() {
                return Err(ConditionError::UnknownStart(format!("{c:?}")));
            }
            let mut all = BTreeSet::new();
            for i in facts.instance_ids() {
                if schema.instance_of(i, *c, facts) {
                    all.extend(follow(schema, facts, BTreeSet::from([Value::Individual(i)]), &p.steps));
                }
            }
            all
        }
    };
    let holds = !witnesses.is_empty();
    Ok(if p.negated {
        PathResult {
            holds: !holds,
            witnesses: BTreeSet::new(),
        }
    } else {
        PathResult { holds, witnesses }
    })
}
