//! Minimal ontology store: class and property hierarchies, instances with
//! asserted types, a triple store and a surface-form lexicon.
//!
//! Subsumption closures are computed once at load time, so `is_subsumed_by`
//! is a set lookup. The schema and lexicon never change after loading; only
//! triples are added at runtime, through a [`TripleStore`] overlay that sits
//! on top of the domain [`FactBase`] (see [`Layered`]).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditions::grammar::{self, GrammarExpr};
use crate::conditions::ConditionError;
use crate::sexpr::{parse_sexprs, Loc, SExpr, SExprError, SExprKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PropertyId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndividualId(pub u32);

impl ClassId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl PropertyId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl IndividualId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A lexicon-addressable ontology term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Term {
    Class(ClassId),
    Individual(IndividualId),
}

/// Decimal literal with a total order so it can live in sets.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Number(pub f64);

impl PartialEq for Number {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Number {}

impl PartialOrd for Number {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Number {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Literal {
    Str(String),
    Number(Number),
}

impl std::hash::Hash for Number {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state)
    }
}

/// Object of a triple: another individual, a class (for class-valued slots
/// such as `cuisine ChineseCuisine`), or a literal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Value {
    Individual(IndividualId),
    Class(ClassId),
    Literal(Literal),
}

impl From<Term> for Value {
    fn from(t: Term) -> Self {
        match t {
            Term::Class(c) => Value::Class(c),
            Term::Individual(i) => Value::Individual(i),
        }
    }
}

impl Value {
    pub fn as_term(&self) -> Option<Term> {
        match self {
            Value::Individual(i) => Some(Term::Individual(*i)),
            Value::Class(c) => Some(Term::Class(*c)),
            Value::Literal(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyKind {
    Object,
    Data,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDecl {
    pub name: String,
    pub parents: Vec<ClassId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyDecl {
    pub name: String,
    pub kind: PropertyKind,
    pub domain: Option<ClassId>,
    pub range: Option<ClassId>,
    pub parents: Vec<PropertyId>,
}

/// A user request class with typed slots.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentDecl {
    pub id: ClassId,
    pub required_slots: Vec<(PropertyId, ClassId)>,
    pub optional_slots: Vec<(PropertyId, ClassId)>,
    pub patterns: Vec<GrammarExpr>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OntologyError {
    #[error(transparent)]
    Syntax(#[from] SExprError),
    #[error("{loc}: {message}")]
    Malformed { loc: Loc, message: String },
    #[error("{loc}: duplicate declaration of '{name}'")]
    Duplicate { loc: Loc, name: String },
    #[error("{loc}: '{name}' is already declared as a {existing}")]
    NamespaceClash {
        loc: Loc,
        name: String,
        existing: &'static str,
    },
    #[error("{loc}: reference to undeclared {expected} '{name}'")]
    Dangling {
        loc: Loc,
        name: String,
        expected: &'static str,
    },
    #[error("subclass cycle: {}", cycle.join(" -> "))]
    SubclassCycle { cycle: Vec<String> },
    #[error("sub-property cycle: {}", cycle.join(" -> "))]
    SubpropertyCycle { cycle: Vec<String> },
    #[error("{loc}: intent '{intent}' lists slot '{property}' as both required and optional")]
    SlotOverlap {
        loc: Loc,
        intent: String,
        property: String,
    },
    #[error("unknown class id {0:?}")]
    UnknownClass(ClassId),
    #[error("unknown property id {0:?}")]
    UnknownProperty(PropertyId),
    #[error("unknown individual id {0:?}")]
    UnknownIndividual(IndividualId),
}

impl OntologyError {
    pub fn loc(&self) -> Option<Loc> {
        match self {
            OntologyError::Syntax(e) => Some(e.loc()),
            OntologyError::Malformed { loc, .. }
            | OntologyError::Duplicate { loc, .. }
            | OntologyError::NamespaceClash { loc, .. }
            | OntologyError::Dangling { loc, .. }
            | OntologyError::SlotOverlap { loc, .. } => Some(*loc),
            _ => None,
        }
    }
}

/// Terminological part of the ontology (TBox).
#[derive(Debug, Clone)]
pub struct OntologySchema {
    classes: Vec<ClassDecl>,
    class_index: HashMap<String, ClassId>,
    properties: Vec<PropertyDecl>,
    property_index: HashMap<String, PropertyId>,
    intents: Vec<IntentDecl>,
    /// Reflexive-transitive ancestors of each class.
    class_ancestors: Vec<BTreeSet<ClassId>>,
    property_ancestors: Vec<BTreeSet<PropertyId>>,
}

impl PartialEq for OntologySchema {
    fn eq(&self, other: &Self) -> bool {
        self.classes == other.classes
            && self.properties == other.properties
            && self.intents == other.intents
    }
}

impl OntologySchema {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn property_count(&self) -> usize {
        self.properties.len()
    }

    pub fn classes(&self) -> impl Iterator<Item = (ClassId, &ClassDecl)> {
        self.classes.iter().enumerate().map(|(i, c)| (ClassId(i as u32), c))
    }

    pub fn properties(&self) -> impl Iterator<Item = (PropertyId, &PropertyDecl)> {
        self.properties
            .iter()
            .enumerate()
            .map(|(i, p)| (PropertyId(i as u32), p))
    }

    pub fn class(&self, name: &str) -> Option<ClassId> {
        self.class_index.get(name).copied()
    }

    pub fn property(&self, name: &str) -> Option<PropertyId> {
        self.property_index.get(name).copied()
    }

    pub fn class_decl(&self, id: ClassId) -> Option<&ClassDecl> {
        self.classes.get(id.index())
    }

    pub fn property_decl(&self, id: PropertyId) -> Option<&PropertyDecl> {
        self.properties.get(id.index())
    }

    pub fn class_name(&self, id: ClassId) -> &str {
        self.classes.get(id.index()).map_or("?", |c| c.name.as_str())
    }

    pub fn property_name(&self, id: PropertyId) -> &str {
        self.properties.get(id.index()).map_or("?", |p| p.name.as_str())
    }

    pub fn intents(&self) -> &[IntentDecl] {
        &self.intents
    }

    pub fn intent(&self, class: ClassId) -> Option<&IntentDecl> {
        self.intents.iter().find(|d| d.id == class)
    }

    fn check_class(&self, c: ClassId) -> Result<(), OntologyError> {
        if c.index() < self.classes.len() {
            Ok(())
        } else {
            Err(OntologyError::UnknownClass(c))
        }
    }

    fn check_property(&self, p: PropertyId) -> Result<(), OntologyError> {
        if p.index() < self.properties.len() {
            Ok(())
        } else {
            Err(OntologyError::UnknownProperty(p))
        }
    }

    /// Reflexive-transitive subclass test.
    pub fn is_subsumed_by(&self, a: ClassId, b: ClassId) -> Result<bool, OntologyError> {
        self.check_class(a)?;
        self.check_class(b)?;
        Ok(self.subsumed(a, b))
    }

    /// Unchecked variant; unknown ids are never subsumed.
    pub(crate) fn subsumed(&self, a: ClassId, b: ClassId) -> bool {
        self.class_ancestors
            .get(a.index())
            .is_some_and(|anc| anc.contains(&b))
    }

    pub(crate) fn subproperty(&self, q: PropertyId, p: PropertyId) -> bool {
        self.property_ancestors
            .get(q.index())
            .is_some_and(|anc| anc.contains(&p))
    }

    pub fn is_subproperty_of(&self, q: PropertyId, p: PropertyId) -> Result<bool, OntologyError> {
        self.check_property(q)?;
        self.check_property(p)?;
        Ok(self.subproperty(q, p))
    }

    /// True iff some asserted type of `i` is subsumed by `c`.
    pub fn is_instance_of(
        &self,
        i: IndividualId,
        c: ClassId,
        facts: &(impl Facts + ?Sized),
    ) -> Result<bool, OntologyError> {
        self.check_class(c)?;
        let types = facts
            .types_of(i)
            .ok_or(OntologyError::UnknownIndividual(i))?;
        Ok(types.iter().any(|t| self.subsumed(*t, c)))
    }

    pub(crate) fn instance_of(&self, i: IndividualId, c: ClassId, facts: &(impl Facts + ?Sized)) -> bool {
        facts
            .types_of(i)
            .is_some_and(|types| types.iter().any(|t| self.subsumed(*t, c)))
    }

    /// All objects of triples `(i, q, v)` with `q` a sub-property of `p`.
    pub fn fillers(
        &self,
        i: IndividualId,
        p: PropertyId,
        facts: &(impl Facts + ?Sized),
    ) -> Result<BTreeSet<Value>, OntologyError> {
        self.check_property(p)?;
        if facts.types_of(i).is_none() {
            return Err(OntologyError::UnknownIndividual(i));
        }
        Ok(self.fillers_unchecked(i, p, facts))
    }

    pub(crate) fn fillers_unchecked(
        &self,
        i: IndividualId,
        p: PropertyId,
        facts: &(impl Facts + ?Sized),
    ) -> BTreeSet<Value> {
        facts
            .objects(i)
            .into_iter()
            .filter(|(q, _)| self.subproperty(*q, p))
            .map(|(_, v)| v)
            .collect()
    }

    /// Does `v` satisfy class `c`: an instance of it, or a subclass of it.
    pub fn value_fits(&self, v: &Value, c: ClassId, facts: &(impl Facts + ?Sized)) -> bool {
        match v {
            Value::Individual(i) => self.instance_of(*i, c, facts),
            Value::Class(d) => self.subsumed(*d, c),
            Value::Literal(_) => false,
        }
    }

    /// Hyponym-accepting term match: `found` is `target` or below it.
    pub fn term_matches(&self, found: Term, target: Term, facts: &(impl Facts + ?Sized)) -> bool {
        match (found, target) {
            (_, Term::Individual(t)) => found == Term::Individual(t),
            (Term::Class(d), Term::Class(c)) => self.subsumed(d, c),
            (Term::Individual(i), Term::Class(c)) => self.instance_of(i, c, facts),
        }
    }
}

/// A set of triples keyed by subject.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleStore {
    by_subject: BTreeMap<IndividualId, BTreeSet<(PropertyId, Value)>>,
}

impl TripleStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns true if the triple was not already present.
    pub fn assert(&mut self, s: IndividualId, p: PropertyId, v: Value) -> bool {
        self.by_subject.entry(s).or_default().insert((p, v))
    }

    /// Returns true if the triple was present.
    pub fn retract(&mut self, s: IndividualId, p: PropertyId, v: &Value) -> bool {
        let Some(set) = self.by_subject.get_mut(&s) else {
            return false;
        };
        let removed = set.remove(&(p, v.clone()));
        if set.is_empty() {
            self.by_subject.remove(&s);
        }
        removed
    }

    pub fn contains(&self, s: IndividualId, p: PropertyId, v: &Value) -> bool {
        self.by_subject
            .get(&s)
            .is_some_and(|set| set.contains(&(p, v.clone())))
    }

    pub fn len(&self) -> usize {
        self.by_subject.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_subject.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (IndividualId, PropertyId, &Value)> {
        self.by_subject
            .iter()
            .flat_map(|(s, set)| set.iter().map(move |(p, v)| (*s, *p, v)))
    }

    pub fn objects_of(&self, s: IndividualId) -> impl Iterator<Item = &(PropertyId, Value)> {
        self.by_subject.get(&s).into_iter().flatten()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceDecl {
    pub name: String,
    pub types: BTreeSet<ClassId>,
}

/// Assertional part of the ontology (ABox): instances and triples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactBase {
    instances: Vec<InstanceDecl>,
    instance_index: HashMap<String, IndividualId>,
    triples: TripleStore,
}

impl FactBase {
    pub fn individual(&self, name: &str) -> Option<IndividualId> {
        self.instance_index.get(name).copied()
    }

    pub fn individual_name(&self, id: IndividualId) -> &str {
        self.instances.get(id.index()).map_or("?", |i| i.name.as_str())
    }

    pub fn instance_count(&self) -> usize {
        self.instances.len()
    }

    /// Instances in declaration order.
    pub fn instances(&self) -> impl Iterator<Item = (IndividualId, &InstanceDecl)> {
        self.instances
            .iter()
            .enumerate()
            .map(|(i, d)| (IndividualId(i as u32), d))
    }

    pub fn triples(&self) -> &TripleStore {
        &self.triples
    }

    /// Assert a triple; the subject and any individual object must be declared.
    pub fn assert(&mut self, s: IndividualId, p: PropertyId, v: Value) -> Result<bool, OntologyError> {
        self.check_individual(s)?;
        if let Value::Individual(o) = v {
            self.check_individual(o)?;
        }
        Ok(self.triples.assert(s, p, v))
    }

    pub fn retract(&mut self, s: IndividualId, p: PropertyId, v: &Value) -> bool {
        self.triples.retract(s, p, v)
    }

    fn check_individual(&self, i: IndividualId) -> Result<(), OntologyError> {
        if i.index() < self.instances.len() {
            Ok(())
        } else {
            Err(OntologyError::UnknownIndividual(i))
        }
    }

    pub(crate) fn push_instance(&mut self, name: String, types: BTreeSet<ClassId>) -> IndividualId {
        let id = IndividualId(self.instances.len() as u32);
        self.instance_index.insert(name.clone(), id);
        self.instances.push(InstanceDecl { name, types });
        id
    }
}

/// Read access to instances and triples, implemented by the domain fact
/// base and by the session overlay.
pub trait Facts {
    fn types_of(&self, i: IndividualId) -> Option<&BTreeSet<ClassId>>;
    fn objects(&self, i: IndividualId) -> Vec<(PropertyId, Value)>;
    /// Instances in declaration order.
    fn instance_ids(&self) -> Vec<IndividualId>;
}

impl Facts for FactBase {
    fn types_of(&self, i: IndividualId) -> Option<&BTreeSet<ClassId>> {
        self.instances.get(i.index()).map(|d| &d.types)
    }

    fn objects(&self, i: IndividualId) -> Vec<(PropertyId, Value)> {
        self.triples.objects_of(i).cloned().collect()
    }

    fn instance_ids(&self) -> Vec<IndividualId> {
        (0..self.instances.len() as u32).map(IndividualId).collect()
    }
}

/// Domain facts plus session-asserted triples.
#[derive(Debug, Clone, Copy)]
pub struct Layered<'a> {
    pub base: &'a FactBase,
    pub overlay: &'a TripleStore,
}

impl Facts for Layered<'_> {
    fn types_of(&self, i: IndividualId) -> Option<&BTreeSet<ClassId>> {
        self.base.types_of(i)
    }

    fn objects(&self, i: IndividualId) -> Vec<(PropertyId, Value)> {
        let mut out = self.base.objects(i);
        for pv in self.overlay.objects_of(i) {
            if !out.contains(pv) {
                out.push(pv.clone());
            }
        }
        out
    }

    fn instance_ids(&self) -> Vec<IndividualId> {
        self.base.instance_ids()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LexRelation {
    Synonym,
    Antonym,
}

/// One lexicon hit: a token span and every term its surface form maps to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexMatch {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub terms: BTreeSet<Term>,
}

/// Surface-form to term mapping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<Vec<String>, BTreeSet<Term>>,
    /// Preferred display form per term (first `:lexical` form as written).
    display: BTreeMap<Term, String>,
    relations: BTreeSet<(Term, LexRelation, Term)>,
    max_form_len: usize,
}

/// Lowercase, split on whitespace, strip leading/trailing punctuation,
/// drop tokens that end up empty.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

impl Lexicon {
    pub fn add_form(&mut self, form: &str, term: Term) {
        let key = normalize_tokens(form);
        if key.is_empty() {
            return;
        }
        self.max_form_len = self.max_form_len.max(key.len());
        self.entries.entry(key).or_default().insert(term);
    }

    pub fn set_display(&mut self, term: Term, form: &str) {
        self.display.entry(term).or_insert_with(|| form.to_string());
    }

    pub fn display(&self, term: Term) -> Option<&str> {
        self.display.get(&term).map(String::as_str)
    }

    pub fn add_relation(&mut self, a: Term, rel: LexRelation, b: Term) {
        self.relations.insert((a, rel, b));
    }

    pub fn related(&self, term: Term, rel: LexRelation) -> impl Iterator<Item = Term> + '_ {
        self.relations
            .iter()
            .filter(move |(a, r, _)| *a == term && *r == rel)
            .map(|(_, _, b)| *b)
    }

    pub fn lookup(&self, tokens: &[String]) -> Option<&BTreeSet<Term>> {
        self.entries.get(tokens)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[String], &BTreeSet<Term>)> {
        self.entries.iter().map(|(k, v)| (k.as_slice(), v))
    }

    /// Longest-match-first, left to right, non-overlapping.
    pub fn lexicon_map(&self, tokens: &[String]) -> Vec<LexMatch> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let longest = self.max_form_len.min(tokens.len() - i);
            let hit = (1..=longest)
                .rev()
                .find_map(|len| self.entries.get(&tokens[i..i + len]).map(|t| (len, t)));
            match hit {
                Some((len, terms)) => {
                    out.push(LexMatch {
                        start: i,
                        end: i + len,
                        terms: terms.clone(),
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }
}

/// Schema, domain facts and lexicon, loaded together.
#[derive(Debug, Clone, PartialEq)]
pub struct Ontology {
    pub schema: OntologySchema,
    pub facts: FactBase,
    pub lexicon: Lexicon,
}

impl Ontology {
    pub fn empty() -> Self {
        load_ontology("").expect("empty ontology")
    }

    pub fn term(&self, name: &str) -> Option<Term> {
        self.schema
            .class(name)
            .map(Term::Class)
            .or_else(|| self.facts.individual(name).map(Term::Individual))
    }

    pub fn term_name(&self, t: Term) -> &str {
        match t {
            Term::Class(c) => self.schema.class_name(c),
            Term::Individual(i) => self.facts.individual_name(i),
        }
    }

    /// Text used when a term is spliced into a system message.
    pub fn display_term(&self, t: Term) -> String {
        self.lexicon
            .display(t)
            .map_or_else(|| self.term_name(t).to_string(), str::to_string)
    }

    pub fn display_value(&self, v: &Value) -> String {
        match v {
            Value::Literal(Literal::Str(s)) => s.clone(),
            Value::Literal(Literal::Number(n)) => n.0.to_string(),
            Value::Individual(i) => self.display_term(Term::Individual(*i)),
            Value::Class(c) => self.display_term(Term::Class(*c)),
        }
    }

    pub fn value_name(&self, v: &Value) -> String {
        match v {
            Value::Literal(Literal::Str(s)) => format!("{s:?}"),
            Value::Literal(Literal::Number(n)) => n.0.to_string(),
            Value::Individual(i) => self.facts.individual_name(*i).to_string(),
            Value::Class(c) => self.schema.class_name(*c).to_string(),
        }
    }

    /// Print the ontology back in the `.onto` format.
    pub fn to_source(&self) -> String {
        write_source(self)
    }
}

pub fn load_ontology(source: &str) -> Result<Ontology, OntologyError> {
    let forms = parse_sexprs(source)?;
    Ontology::from_forms(&forms)
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

struct RawClass<'a> {
    name: String,
    loc: Loc,
    parents: Vec<&'a SExpr>,
    lexical: Vec<String>,
    synonyms: Vec<&'a SExpr>,
    antonyms: Vec<&'a SExpr>,
}

struct RawProperty<'a> {
    name: String,
    loc: Loc,
    kind: PropertyKind,
    domain: Option<&'a SExpr>,
    range: Option<&'a SExpr>,
    parents: Vec<&'a SExpr>,
}

struct RawInstance<'a> {
    name: String,
    loc: Loc,
    types: Vec<&'a SExpr>,
    lexical: Vec<String>,
    props: Vec<(&'a SExpr, &'a SExpr)>,
    synonyms: Vec<&'a SExpr>,
    antonyms: Vec<&'a SExpr>,
}

struct RawIntent<'a> {
    name: String,
    loc: Loc,
    required: Vec<(&'a SExpr, &'a SExpr)>,
    optional: Vec<(&'a SExpr, &'a SExpr)>,
    patterns: Vec<&'a SExpr>,
}

fn malformed(loc: Loc, message: impl Into<String>) -> OntologyError {
    OntologyError::Malformed {
        loc,
        message: message.into(),
    }
}

fn expect_symbol<'a>(e: &'a SExpr, what: &str) -> Result<&'a str, OntologyError> {
    e.as_symbol()
        .ok_or_else(|| malformed(e.loc, format!("expected {what}, found {}", e.kind_name())))
}

/// Split `(defX Name clause*)` into the name and its `(:key args...)` clauses.
type Clause<'a> = (&'a str, Loc, &'a [SExpr]);

fn clauses(form: &SExpr) -> Result<(String, Loc, Vec<Clause<'_>>), OntologyError> {
    let items = form.as_list().unwrap_or_default();
    let name_expr = items
        .get(1)
        .ok_or_else(|| malformed(form.loc, "declaration is missing its name"))?;
    let name = expect_symbol(name_expr, "a name")?.to_string();
    let mut out = Vec::new();
    for clause in &items[2..] {
        let parts = clause
            .as_list()
            .filter(|l| !l.is_empty())
            .ok_or_else(|| malformed(clause.loc, "expected a (:keyword ...) clause"))?;
        let key = parts[0]
            .as_keyword()
            .ok_or_else(|| malformed(parts[0].loc, "clause must start with a keyword"))?;
        out.push((key, clause.loc, &parts[1..]));
    }
    Ok((name, name_expr.loc, out))
}

fn strings(args: &[SExpr]) -> Result<Vec<String>, OntologyError> {
    args.iter()
        .map(|a| {
            a.as_str()
                .map(str::to_string)
                .ok_or_else(|| malformed(a.loc, "expected a string"))
        })
        .collect()
}

fn pairs(args: &[SExpr]) -> Result<Vec<(&SExpr, &SExpr)>, OntologyError> {
    args.iter()
        .map(|a| match a.as_list() {
            Some([x, y]) => Ok((x, y)),
            _ => Err(malformed(a.loc, "expected a two-element list")),
        })
        .collect()
}

fn single<'a>(args: &'a [SExpr], loc: Loc, key: &str) -> Result<&'a SExpr, OntologyError> {
    match args {
        [one] => Ok(one),
        _ => Err(malformed(loc, format!(":{key} takes exactly one argument"))),
    }
}

fn unknown_clause(key: &str, loc: Loc, form: &str) -> OntologyError {
    malformed(loc, format!("unknown clause :{key} in {form}"))
}

impl Ontology {
    /// Build an ontology from already-read top-level forms.
    pub fn from_forms(forms: &[SExpr]) -> Result<Ontology, OntologyError> {
        let mut classes: Vec<RawClass> = Vec::new();
        let mut props: Vec<RawProperty> = Vec::new();
        let mut insts: Vec<RawInstance> = Vec::new();
        let mut intents: Vec<RawIntent> = Vec::new();
        // Intents that also appear as defclass only contribute slots/patterns.
        let mut intent_parents: Vec<(String, Loc, Vec<&SExpr>)> = Vec::new();

        for form in forms {
            let head = form
                .head_symbol()
                .ok_or_else(|| malformed(form.loc, "expected a (defclass|defproperty|definstance|defintent ...) form"))?;
            match head {
                "defclass" => {
                    let (name, loc, cls) = clauses(form)?;
                    let mut raw = RawClass {
                        name,
                        loc,
                        parents: vec![],
                        lexical: vec![],
                        synonyms: vec![],
                        antonyms: vec![],
                    };
                    for (key, cloc, args) in cls {
                        match key {
                            "is-a" => raw.parents.extend(args),
                            "lexical" => raw.lexical.extend(strings(args)?),
                            "synonyms" => raw.synonyms.extend(args),
                            "antonyms" => raw.antonyms.extend(args),
                            _ => return Err(unknown_clause(key, cloc, "defclass")),
                        }
                    }
                    classes.push(raw);
                }
                "defproperty" => {
                    let (name, loc, cls) = clauses(form)?;
                    let mut raw = RawProperty {
                        name,
                        loc,
                        kind: PropertyKind::Object,
                        domain: None,
                        range: None,
                        parents: vec![],
                    };
                    for (key, cloc, args) in cls {
                        match key {
                            "kind" => {
                                raw.kind = match single(args, cloc, key)?.as_symbol() {
                                    Some("object") => PropertyKind::Object,
                                    Some("data") => PropertyKind::Data,
                                    _ => return Err(malformed(cloc, ":kind must be object or data")),
                                }
                            }
                            "domain" => raw.domain = Some(single(args, cloc, key)?),
                            "range" => raw.range = Some(single(args, cloc, key)?),
                            "is-a" => raw.parents.extend(args),
                            _ => return Err(unknown_clause(key, cloc, "defproperty")),
                        }
                    }
                    props.push(raw);
                }
                "definstance" => {
                    let (name, loc, cls) = clauses(form)?;
                    let mut raw = RawInstance {
                        name,
                        loc,
                        types: vec![],
                        lexical: vec![],
                        props: vec![],
                        synonyms: vec![],
                        antonyms: vec![],
                    };
                    for (key, cloc, args) in cls {
                        match key {
                            "type" => raw.types.extend(args),
                            "lexical" => raw.lexical.extend(strings(args)?),
                            "props" => raw.props.extend(pairs(args)?),
                            "synonyms" => raw.synonyms.extend(args),
                            "antonyms" => raw.antonyms.extend(args),
                            _ => return Err(unknown_clause(key, cloc, "definstance")),
                        }
                    }
                    if raw.types.is_empty() {
                        return Err(malformed(raw.loc, format!("instance '{}' needs at least one :type", raw.name)));
                    }
                    insts.push(raw);
                }
                "defintent" => {
                    let (name, loc, cls) = clauses(form)?;
                    let mut raw = RawIntent {
                        name,
                        loc,
                        required: vec![],
                        optional: vec![],
                        patterns: vec![],
                    };
                    let mut parents = Vec::new();
                    for (key, cloc, args) in cls {
                        match key {
                            "required" => raw.required.extend(pairs(args)?),
                            "optional" => raw.optional.extend(pairs(args)?),
                            "patterns" => raw.patterns.extend(args),
                            "is-a" => parents.extend(args),
                            _ => return Err(unknown_clause(key, cloc, "defintent")),
                        }
                    }
                    intent_parents.push((raw.name.clone(), raw.loc, parents));
                    intents.push(raw);
                }
                other => return Err(malformed(form.loc, format!("unknown top-level form '{other}'"))),
            }
        }

        // An intent declares its class unless a defclass already does.
        for (name, loc, parents) in intent_parents {
            if let Some(existing) = classes.iter_mut().find(|c| c.name == name) {
                existing.parents.extend(parents);
            } else {
                classes.push(RawClass {
                    name,
                    loc,
                    parents,
                    lexical: vec![],
                    synonyms: vec![],
                    antonyms: vec![],
                });
            }
        }

        // Namespaces.
        let mut class_index = HashMap::new();
        let mut kinds: HashMap<String, &'static str> = HashMap::new();
        let mut claim = |name: &str, loc: Loc, kind: &'static str| -> Result<(), OntologyError> {
            match kinds.get(name) {
                Some(k) if *k == kind => Err(OntologyError::Duplicate {
                    loc,
                    name: name.to_string(),
                }),
                Some(k) => Err(OntologyError::NamespaceClash {
                    loc,
                    name: name.to_string(),
                    existing: k,
                }),
                None => {
                    kinds.insert(name.to_string(), kind);
                    Ok(())
                }
            }
        };
        for (i, c) in classes.iter().enumerate() {
            claim(&c.name, c.loc, "class")?;
            class_index.insert(c.name.clone(), ClassId(i as u32));
        }
        let mut property_index = HashMap::new();
        for (i, p) in props.iter().enumerate() {
            claim(&p.name, p.loc, "property")?;
            property_index.insert(p.name.clone(), PropertyId(i as u32));
        }
        let mut instance_names = HashMap::new();
        for (i, inst) in insts.iter().enumerate() {
            claim(&inst.name, inst.loc, "instance")?;
            instance_names.insert(inst.name.clone(), IndividualId(i as u32));
        }
        let mut seen_intents = BTreeSet::new();
        for it in &intents {
            if !seen_intents.insert(it.name.clone()) {
                return Err(OntologyError::Duplicate {
                    loc: it.loc,
                    name: it.name.clone(),
                });
            }
        }

        let class_ref = |e: &SExpr| -> Result<ClassId, OntologyError> {
            let name = expect_symbol(e, "a class name")?;
            class_index.get(name).copied().ok_or_else(|| OntologyError::Dangling {
                loc: e.loc,
                name: name.to_string(),
                expected: "class",
            })
        };
        let prop_ref = |e: &SExpr| -> Result<PropertyId, OntologyError> {
            let name = expect_symbol(e, "a property name")?;
            property_index
                .get(name)
                .copied()
                .ok_or_else(|| OntologyError::Dangling {
                    loc: e.loc,
                    name: name.to_string(),
                    expected: "property",
                })
        };

        let mut class_decls = Vec::with_capacity(classes.len());
        for c in &classes {
            let parents = c.parents.iter().map(|p| class_ref(p)).collect::<Result<Vec<_>, _>>()?;
            class_decls.push(ClassDecl {
                name: c.name.clone(),
                parents,
            });
        }
        let mut prop_decls = Vec::with_capacity(props.len());
        for p in &props {
            prop_decls.push(PropertyDecl {
                name: p.name.clone(),
                kind: p.kind,
                domain: p.domain.map(class_ref).transpose()?,
                range: p.range.map(class_ref).transpose()?,
                parents: p.parents.iter().map(|q| prop_ref(q)).collect::<Result<_, _>>()?,
            });
        }

        let class_ancestors = closure(
            &class_decls.iter().map(|c| c.parents.iter().map(|p| p.index()).collect()).collect::<Vec<Vec<usize>>>(),
        )
        .map_err(|cycle| OntologyError::SubclassCycle {
            cycle: cycle.into_iter().map(|i| class_decls[i].name.clone()).collect(),
        })?
        .into_iter()
        .map(|s| s.into_iter().map(|i| ClassId(i as u32)).collect())
        .collect();
        let property_ancestors = closure(
            &prop_decls.iter().map(|p| p.parents.iter().map(|q| q.index()).collect()).collect::<Vec<Vec<usize>>>(),
        )
        .map_err(|cycle| OntologyError::SubpropertyCycle {
            cycle: cycle.into_iter().map(|i| prop_decls[i].name.clone()).collect(),
        })?
        .into_iter()
        .map(|s| s.into_iter().map(|i| PropertyId(i as u32)).collect())
        .collect();

        let mut schema = OntologySchema {
            classes: class_decls,
            class_index: class_index.clone(),
            properties: prop_decls,
            property_index: property_index.clone(),
            intents: Vec::new(),
            class_ancestors,
            property_ancestors,
        };

        let mut facts = FactBase::default();
        for inst in &insts {
            let types = inst.types.iter().map(|t| class_ref(t)).collect::<Result<_, _>>()?;
            facts.push_instance(inst.name.clone(), types);
        }
        let term_ref = |e: &SExpr| -> Result<Term, OntologyError> {
            let name = expect_symbol(e, "a class or instance name")?;
            schema
                .class(name)
                .map(Term::Class)
                .or_else(|| instance_names.get(name).copied().map(Term::Individual))
                .ok_or_else(|| OntologyError::Dangling {
                    loc: e.loc,
                    name: name.to_string(),
                    expected: "class or instance",
                })
        };
        for (i, inst) in insts.iter().enumerate() {
            let subject = IndividualId(i as u32);
            for (p, v) in &inst.props {
                let pid = prop_ref(p)?;
                let value = match &v.kind {
                    SExprKind::Str(s) => Value::Literal(Literal::Str(s.clone())),
                    SExprKind::Number(n) => Value::Literal(Literal::Number(Number(*n))),
                    SExprKind::Symbol(_) => Value::from(term_ref(v)?),
                    _ => return Err(malformed(v.loc, "property value must be a name, string or number")),
                };
                let kind = schema.properties[pid.index()].kind;
                match (kind, &value) {
                    (PropertyKind::Data, Value::Literal(_)) | (PropertyKind::Object, Value::Individual(_) | Value::Class(_)) => {}
                    (PropertyKind::Data, _) => {
                        return Err(malformed(v.loc, format!("data property '{}' needs a literal value", schema.property_name(pid))))
                    }
                    (PropertyKind::Object, _) => {
                        return Err(malformed(v.loc, format!("object property '{}' needs a class or instance value", schema.property_name(pid))))
                    }
                }
                facts.triples.assert(subject, pid, value);
            }
        }

        let mut lexicon = Lexicon::default();
        let add_lexical = |lexicon: &mut Lexicon, term: Term, name: &str, forms: &[String]| {
            for f in forms {
                lexicon.add_form(f, term);
                lexicon.set_display(term, f);
            }
            lexicon.add_form(name, term);
        };
        for (i, c) in classes.iter().enumerate() {
            add_lexical(&mut lexicon, Term::Class(ClassId(i as u32)), &c.name, &c.lexical);
        }
        for (i, inst) in insts.iter().enumerate() {
            add_lexical(&mut lexicon, Term::Individual(IndividualId(i as u32)), &inst.name, &inst.lexical);
        }
        let relation_sources = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (Term::Class(ClassId(i as u32)), &c.synonyms, &c.antonyms))
            .chain(
                insts
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (Term::Individual(IndividualId(i as u32)), &c.synonyms, &c.antonyms)),
            );
        for (term, syns, ants) in relation_sources {
            for s in syns {
                lexicon.add_relation(term, LexRelation::Synonym, term_ref(s)?);
            }
            for a in ants {
                lexicon.add_relation(term, LexRelation::Antonym, term_ref(a)?);
            }
        }

        let mut intent_decls = Vec::new();
        for it in &intents {
            let id = schema.class(&it.name).expect("intent class registered");
            let slots = |raw: &[(&SExpr, &SExpr)]| -> Result<Vec<(PropertyId, ClassId)>, OntologyError> {
                raw.iter().map(|(p, r)| Ok((prop_ref(p)?, class_ref(r)?))).collect()
            };
            let required_slots = slots(&it.required)?;
            let optional_slots = slots(&it.optional)?;
            if let Some((p, _)) = required_slots
                .iter()
                .find(|(p, _)| optional_slots.iter().any(|(q, _)| q == p))
            {
                return Err(OntologyError::SlotOverlap {
                    loc: it.loc,
                    intent: it.name.clone(),
                    property: schema.property_name(*p).to_string(),
                });
            }
            let resolve = |name: &str| {
                schema
                    .class(name)
                    .map(Term::Class)
                    .or_else(|| instance_names.get(name).copied().map(Term::Individual))
            };
            let patterns = it
                .patterns
                .iter()
                .map(|p| {
                    grammar::parse_grammar(p, &resolve).map_err(pattern_error)
                })
                .collect::<Result<_, _>>()?;
            intent_decls.push(IntentDecl {
                id,
                required_slots,
                optional_slots,
                patterns,
            });
        }
        schema.intents = intent_decls;

        Ok(Ontology {
            schema,
            facts,
            lexicon,
        })
    }
}

fn pattern_error(e: ConditionError) -> OntologyError {
    match e {
        ConditionError::Unresolved { loc, name, expected } => OntologyError::Dangling { loc, name, expected },
        other => malformed(other.loc().unwrap_or_default(), other.to_string()),
    }
}

/// Reflexive-transitive closure of `parents`; `Err` carries a cycle.
fn closure(parents: &[Vec<usize>]) -> Result<Vec<BTreeSet<usize>>, Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let n = parents.len();
    let mut marks = vec![Mark::New; n];
    let mut result: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut path: Vec<usize> = Vec::new();

    fn visit(
        v: usize,
        parents: &[Vec<usize>],
        marks: &mut [Mark],
        result: &mut [BTreeSet<usize>],
        path: &mut Vec<usize>,
    ) -> Result<(), Vec<usize>> {
        match marks[v] {
            Mark::Done => return Ok(()),
            Mark::Active => {
                let start = path.iter().position(|&x| x == v).unwrap_or(0);
                let mut cycle = path[start..].to_vec();
                cycle.push(v);
                return Err(cycle);
            }
            Mark::New => {}
        }
        marks[v] = Mark::Active;
        path.push(v);
        let mut acc = BTreeSet::from([v]);
        for &p in &parents[v] {
            visit(p, parents, marks, result, path)?;
            acc.extend(result[p].iter().copied());
        }
        path.pop();
        marks[v] = Mark::Done;
        result[v] = acc;
        Ok(())
    }

    for v in 0..n {
        visit(v, parents, &mut marks, &mut result, &mut path)?;
    }
    Ok(result)
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

fn quote(s: &str) -> String {
    SExpr::string(s).to_string()
}

fn write_source(onto: &Ontology) -> String {
    use std::fmt::Write;
    let schema = &onto.schema;
    let mut out = String::new();
    let lexical_forms = |term: Term| -> Vec<String> {
        // Display form first, then remaining non-default forms in key order.
        let default = normalize_tokens(onto.term_name(term));
        let mut forms: Vec<String> = Vec::new();
        if let Some(d) = onto.lexicon.display(term) {
            forms.push(d.to_string());
        }
        for (key, terms) in onto.lexicon.entries() {
            if terms.contains(&term) && key != default.as_slice() {
                let joined = key.join(" ");
                if !forms.iter().any(|f| normalize_tokens(f) == key) {
                    forms.push(joined);
                }
            }
        }
        forms
    };
    let relations = |term: Term| -> String {
        let mut s = String::new();
        for (rel, kw) in [(LexRelation::Synonym, "synonyms"), (LexRelation::Antonym, "antonyms")] {
            let names: Vec<_> = onto.lexicon.related(term, rel).map(|t| onto.term_name(t).to_string()).collect();
            if !names.is_empty() {
                let _ = write!(s, " (:{kw} {})", names.join(" "));
            }
        }
        s
    };
    for (id, c) in schema.classes() {
        if schema.intent(id).is_some() {
            continue;
        }
        let _ = write!(out, "(defclass {}", c.name);
        if !c.parents.is_empty() {
            let names: Vec<_> = c.parents.iter().map(|p| schema.class_name(*p)).collect();
            let _ = write!(out, " (:is-a {})", names.join(" "));
        }
        let forms = lexical_forms(Term::Class(id));
        if !forms.is_empty() {
            let q: Vec<_> = forms.iter().map(|f| quote(f)).collect();
            let _ = write!(out, " (:lexical {})", q.join(" "));
        }
        out.push_str(&relations(Term::Class(id)));
        out.push_str(")\n");
    }
    for (_, p) in schema.properties() {
        let kind = match p.kind {
            PropertyKind::Object => "object",
            PropertyKind::Data => "data",
        };
        let _ = write!(out, "(defproperty {} (:kind {kind})", p.name);
        if let Some(d) = p.domain {
            let _ = write!(out, " (:domain {})", schema.class_name(d));
        }
        if let Some(r) = p.range {
            let _ = write!(out, " (:range {})", schema.class_name(r));
        }
        if !p.parents.is_empty() {
            let names: Vec<_> = p.parents.iter().map(|q| schema.property_name(*q)).collect();
            let _ = write!(out, " (:is-a {})", names.join(" "));
        }
        out.push_str(")\n");
    }
    for (id, inst) in onto.facts.instances() {
        let types: Vec<_> = inst.types.iter().map(|t| schema.class_name(*t)).collect();
        let _ = write!(out, "(definstance {} (:type {})", inst.name, types.join(" "));
        let forms = lexical_forms(Term::Individual(id));
        if !forms.is_empty() {
            let q: Vec<_> = forms.iter().map(|f| quote(f)).collect();
            let _ = write!(out, " (:lexical {})", q.join(" "));
        }
        let props: Vec<_> = onto
            .facts
            .triples()
            .objects_of(id)
            .map(|(p, v)| format!("({} {})", schema.property_name(*p), onto.value_name(v)))
            .collect();
        if !props.is_empty() {
            let _ = write!(out, " (:props {})", props.join(" "));
        }
        out.push_str(&relations(Term::Individual(id)));
        out.push_str(")\n");
    }
    for it in schema.intents() {
        let _ = write!(out, "(defintent {}", schema.class_name(it.id));
        let parents = &schema.classes[it.id.index()].parents;
        if !parents.is_empty() {
            let names: Vec<_> = parents.iter().map(|p| schema.class_name(*p)).collect();
            let _ = write!(out, " (:is-a {})", names.join(" "));
        }
        for (kw, slots) in [("required", &it.required_slots), ("optional", &it.optional_slots)] {
            if !slots.is_empty() {
                let s: Vec<_> = slots
                    .iter()
                    .map(|(p, c)| format!("({} {})", schema.property_name(*p), schema.class_name(*c)))
                    .collect();
                let _ = write!(out, " (:{kw} {})", s.join(" "));
            }
        }
        if !it.patterns.is_empty() {
            let s: Vec<_> = it.patterns.iter().map(|g| grammar::print_grammar(g, onto).to_string()).collect();
            let _ = write!(out, " (:patterns {})", s.join(" "));
        }
        out.push_str(")\n");
    }
    out
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Class(c) => write!(f, "class#{}", c.0),
            Term::Individual(i) => write!(f, "ind#{}", i.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const RESTAURANT: &str = r#"
        (defclass Cuisine)
        (defclass ChineseCuisine (:is-a Cuisine) (:lexical "chinese"))
        (defclass City)
        (defproperty location (:kind object) (:range City))
        (defproperty cuisine (:kind object) (:range Cuisine))
        (defproperty place (:kind object))
        (defproperty city (:kind object) (:is-a place))
        (defproperty name (:kind data))
        (definstance PaloAlto (:type City) (:lexical "Palo Alto"))
        (definstance SuHong (:type Restaurant) (:lexical "Su Hong")
            (:props (city PaloAlto) (name "Su Hong") (cuisine ChineseCuisine)))
        (defclass Restaurant (:lexical "restaurant"))
        (definstance Nobody (:type City))
    "#;

    fn onto() -> Ontology {
        load_ontology(RESTAURANT).unwrap()
    }

    #[test]
    fn subclass_edge_is_loaded() {
        let o = onto();
        let chinese = o.schema.class("ChineseCuisine").unwrap();
        let cuisine = o.schema.class("Cuisine").unwrap();
        assert_eq!(o.schema.class_decl(chinese).unwrap().parents, vec![cuisine]);
        assert!(o.schema.is_subsumed_by(chinese, cuisine).unwrap());
        assert!(o.schema.is_subsumed_by(cuisine, cuisine).unwrap());
        assert!(!o.schema.is_subsumed_by(cuisine, chinese).unwrap());
    }

    #[test]
    fn empty_source_gives_empty_store() {
        let o = load_ontology("").unwrap();
        assert_eq!(o.schema.class_count(), 0);
        assert_eq!(o.facts.instance_count(), 0);
        assert!(o.facts.triples().is_empty());
    }

    #[test]
    fn dangling_parent_is_named() {
        let err = load_ontology("(defclass A (:is-a B))").unwrap_err();
        match err {
            OntologyError::Dangling { name, .. } => assert_eq!(name, "B"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn subclass_cycle_lists_members() {
        let err = load_ontology("(defclass A (:is-a C)) (defclass B (:is-a A)) (defclass C (:is-a B))").unwrap_err();
        let OntologyError::SubclassCycle { cycle } = err else {
            panic!("expected cycle")
        };
        assert_eq!(cycle.first(), cycle.last());
        for n in ["A", "B", "C"] {
            assert!(cycle.iter().any(|c| c == n));
        }
    }

    #[test]
    fn namespaces_are_disjoint() {
        let err = load_ontology("(defclass A) (defproperty A (:kind object))").unwrap_err();
        assert!(matches!(err, OntologyError::NamespaceClash { .. }));
        let err = load_ontology("(defclass A) (defclass A)").unwrap_err();
        assert!(matches!(err, OntologyError::Duplicate { .. }));
    }

    #[test]
    fn parse_errors_carry_locations() {
        let err = load_ontology("(defclass A\n  (:is-a").unwrap_err();
        assert_eq!(err.loc().unwrap().line, 2);
    }

    #[test]
    fn instance_typing() {
        let o = onto();
        let pa = o.facts.individual("PaloAlto").unwrap();
        let city = o.schema.class("City").unwrap();
        let cuisine = o.schema.class("Cuisine").unwrap();
        assert!(o.schema.is_instance_of(pa, city, &o.facts).unwrap());
        assert!(!o.schema.is_instance_of(pa, cuisine, &o.facts).unwrap());
        assert!(o.schema.is_instance_of(IndividualId(99), city, &o.facts).is_err());
    }

    #[test]
    fn fillers_follow_subproperties() {
        let o = onto();
        let su = o.facts.individual("SuHong").unwrap();
        let pa = o.facts.individual("PaloAlto").unwrap();
        let city = o.schema.property("city").unwrap();
        let place = o.schema.property("place").unwrap();
        let direct = o.schema.fillers(su, city, &o.facts).unwrap();
        assert_eq!(direct, BTreeSet::from([Value::Individual(pa)]));
        assert_eq!(o.schema.fillers(su, place, &o.facts).unwrap(), direct);
        let nobody = o.facts.individual("Nobody").unwrap();
        assert!(o.schema.fillers(nobody, place, &o.facts).unwrap().is_empty());
    }

    #[test]
    fn overlay_adds_triples() {
        let o = onto();
        let nobody = o.facts.individual("Nobody").unwrap();
        let place = o.schema.property("place").unwrap();
        let city = o.schema.property("city").unwrap();
        let mut overlay = TripleStore::new();
        let chinese = o.schema.class("ChineseCuisine").unwrap();
        overlay.assert(nobody, city, Value::Class(chinese));
        let layered = Layered {
            base: &o.facts,
            overlay: &overlay,
        };
        assert_eq!(
            o.schema.fillers(nobody, place, &layered).unwrap(),
            BTreeSet::from([Value::Class(chinese)])
        );
    }

    #[test]
    fn retract_then_assert_restores_state() {
        let o = onto();
        let mut facts = o.facts.clone();
        let (s, p, v) = {
            let (s, p, v) = facts.triples().iter().next().unwrap();
            (s, p, v.clone())
        };
        assert!(facts.retract(s, p, &v));
        assert!(facts.assert(s, p, v).unwrap());
        assert_eq!(facts, o.facts);
    }

    #[test]
    fn lexicon_maps_multi_token_forms() {
        let o = onto();
        let toks = normalize_tokens("In Palo Alto.");
        assert_eq!(toks, ["in", "palo", "alto"]);
        let m = o.lexicon.lexicon_map(&toks);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].start, m[0].end), (1, 3));
        let pa = o.facts.individual("PaloAlto").unwrap();
        assert_eq!(m[0].terms, BTreeSet::from([Term::Individual(pa)]));

        let m = o.lexicon.lexicon_map(&normalize_tokens("Chinese please."));
        let chinese = o.schema.class("ChineseCuisine").unwrap();
        assert_eq!((m[0].start, m[0].end), (0, 1));
        assert_eq!(m[0].terms, BTreeSet::from([Term::Class(chinese)]));
        assert!(o.lexicon.lexicon_map(&[]).is_empty());
    }

    #[test]
    fn identifier_is_a_default_surface_form() {
        let o = onto();
        let m = o.lexicon.lexicon_map(&normalize_tokens("PaloAlto"));
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn display_prefers_first_lexical_form() {
        let o = onto();
        let su = o.facts.individual("SuHong").unwrap();
        assert_eq!(o.display_term(Term::Individual(su)), "Su Hong");
        let city = o.schema.class("City").unwrap();
        assert_eq!(o.display_term(Term::Class(city)), "City");
    }

    #[test]
    fn source_round_trip() {
        let o = onto();
        let printed = o.to_source();
        let back = load_ontology(&printed).unwrap();
        // Declaration order changes (intents last) but ids are stable for
        // classes declared via defclass; compare printed forms.
        assert_eq!(back.to_source(), printed);
        assert_eq!(load_ontology(&back.to_source()).unwrap(), back);
    }

    #[test]
    fn data_property_rejects_individual() {
        let err = load_ontology(
            "(defclass C) (defproperty name (:kind data)) (definstance a (:type C)) (definstance b (:type C) (:props (name a)))",
        )
        .unwrap_err();
        assert!(matches!(err, OntologyError::Malformed { .. }));
    }

    // Random DAG: class i may only have parents j < i.
    fn arb_dag(max: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
        (1..=max).prop_flat_map(|n| {
            (0..n)
                .map(|i| {
                    if i == 0 {
                        Just(Vec::new()).boxed()
                    } else {
                        prop::collection::vec(0..i, 0..3).boxed()
                    }
                })
                .collect::<Vec<_>>()
        })
    }

    fn dag_source(parents: &[Vec<usize>]) -> String {
        parents
            .iter()
            .enumerate()
            .map(|(i, ps)| {
                if ps.is_empty() {
                    format!("(defclass C{i})\n")
                } else {
                    let names: Vec<_> = ps.iter().map(|p| format!("C{p}")).collect();
                    format!("(defclass C{i} (:is-a {}))\n", names.join(" "))
                }
            })
            .collect()
    }

    fn reachable(parents: &[Vec<usize>], a: usize, b: usize) -> bool {
        let mut stack = vec![a];
        let mut seen = vec![false; parents.len()];
        while let Some(v) = stack.pop() {
            if v == b {
                return true;
            }
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(parents[v].iter().copied());
        }
        false
    }

    proptest! {
        #[test]
        fn subsumption_equals_dfs_reachability(parents in arb_dag(100)) {
            let o = load_ontology(&dag_source(&parents)).unwrap();
            let n = parents.len();
            for a in 0..n {
                for b in 0..n {
                    let ca = o.schema.class(&format!("C{a}")).unwrap();
                    let cb = o.schema.class(&format!("C{b}")).unwrap();
                    prop_assert_eq!(o.schema.is_subsumed_by(ca, cb).unwrap(), reachable(&parents, a, b));
                }
            }
        }

        #[test]
        fn subsumption_is_antisymmetric(parents in arb_dag(40)) {
            let o = load_ontology(&dag_source(&parents)).unwrap();
            for (a, _) in o.schema.classes() {
                for (b, _) in o.schema.classes() {
                    if a != b {
                        prop_assert!(!(o.schema.subsumed(a, b) && o.schema.subsumed(b, a)));
                    }
                }
            }
        }

        #[test]
        fn instance_of_equals_exhaustive_check(
            parents in arb_dag(30),
            types in prop::collection::vec(prop::collection::vec(0usize..30, 0..3), 1..10),
        ) {
            let n = parents.len();
            let mut src = dag_source(&parents);
            for (k, ts) in types.iter().enumerate() {
                let ts: Vec<_> = ts.iter().map(|t| format!("C{}", t % n)).collect();
                if ts.is_empty() {
                    continue;
                }
                src.push_str(&format!("(definstance i{k} (:type {}))\n", ts.join(" ")));
            }
            let o = load_ontology(&src).unwrap();
            for (k, ts) in types.iter().enumerate() {
                let Some(i) = o.facts.individual(&format!("i{k}")) else { continue };
                for c in 0..n {
                    let cid = o.schema.class(&format!("C{c}")).unwrap();
                    let expected = ts.iter().any(|t| reachable(&parents, t % n, c));
                    prop_assert_eq!(o.schema.is_instance_of(i, cid, &o.facts).unwrap(), expected);
                }
            }
        }

        #[test]
        fn lexicon_spans_are_sorted_and_cover_input(words in prop::collection::vec(
            prop_oneof![Just("palo"), Just("alto"), Just("chinese"), Just("in"), Just("restaurant"), Just("x")], 0..12)) {
            let o = onto();
            let toks: Vec<String> = words.iter().map(|w| w.to_string()).collect();
            let m = o.lexicon.lexicon_map(&toks);
            let mut cursor = 0;
            let mut rebuilt: Vec<String> = Vec::new();
            for hit in &m {
                prop_assert!(hit.start >= cursor && hit.end > hit.start);
                rebuilt.extend_from_slice(&toks[cursor..hit.start]);
                rebuilt.extend_from_slice(&toks[hit.start..hit.end]);
                cursor = hit.end;
            }
            rebuilt.extend_from_slice(&toks[cursor..]);
            prop_assert_eq!(rebuilt, toks.clone());
            // "palo alto" is always taken as one span when adjacent.
            for w in toks.windows(2).enumerate() {
                if w.1[0] == "palo" && w.1[1] == "alto" {
                    let i = w.0;
                    let starts_inside_other = m.iter().any(|h| h.start < i && h.end > i);
                    if !starts_inside_other {
                        prop_assert!(m.iter().any(|h| h.start == i && h.end == i + 2));
                    }
                }
            }
        }

        #[test]
        fn fillers_monotone_under_subproperty(extra in 0usize..3) {
            let o = onto();
            let nobody = o.facts.individual("Nobody").unwrap();
            let place = o.schema.property("place").unwrap();
            let city = o.schema.property("city").unwrap();
            let mut facts = o.facts.clone();
            let before = o.schema.fillers(nobody, place, &facts).unwrap();
            let pa = o.facts.individual("PaloAlto").unwrap();
            let su = o.facts.individual("SuHong").unwrap();
            let vals = [Value::Individual(pa), Value::Individual(su), Value::Individual(nobody)];
            facts.assert(nobody, city, vals[extra].clone()).unwrap();
            let after = o.schema.fillers(nobody, place, &facts).unwrap();
            prop_assert!(before.is_subset(&after));
            prop_assert!(after.contains(&vals[extra]));
        }
    }
}
