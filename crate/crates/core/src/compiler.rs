//! Lowering of a [`DslModel`] to the graph IR the runtime interprets, plus the
//! assertion expansion, size metrics and DOT rendering derived from it.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::conditions::path::{PathExpr, PathStart};
use crate::conditions::{print_condition, ConditionAst};
use crate::dsl::{DslError, DslModel, ModelConfig, NodeFlags, Segment, SelectArg};
use crate::ontology::{ClassId, IndividualId, Literal, Ontology, PropertyId, Term};
use crate::sexpr::{Loc, SExpr};

pub const IR_VERSION: &str = "dwg-ir/1";

pub type NodeIx = usize;

#[derive(Debug, Clone, PartialEq)]
pub enum IrSegment {
    Text(String),
    Hole(PathExpr),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IrTemplate {
    pub segments: Vec<IrSegment>,
    /// Source form, kept for printing.
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IrExtract {
    pub class: ClassId,
    pub subject: IndividualId,
    pub property: PropertyId,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectValue {
    /// Value of this slot in the pending intent; skipped while unfilled.
    Slot(PropertyId),
    Term(Term),
    Literal(Literal),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrSelect {
    pub var: String,
    pub class: ClassId,
    pub constraints: Vec<(PropertyId, SelectValue)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrNode {
    pub id: String,
    pub loc: Loc,
    pub condition: Option<ConditionAst>,
    pub messages: Vec<IrTemplate>,
    /// Indices into [`WorkflowIr::edges`], in source order.
    pub out_edges: Vec<usize>,
    pub trigger: Option<usize>,
    pub extract: Vec<IrExtract>,
    pub select: Option<IrSelect>,
    pub flags: NodeFlags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrEdge {
    pub from: NodeIx,
    pub condition: ConditionAst,
    pub to: NodeIx,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrTrigger {
    pub node: NodeIx,
    pub condition: ConditionAst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowIr {
    pub nodes: Vec<IrNode>,
    pub edges: Vec<IrEdge>,
    /// In node declaration order.
    pub triggers: Vec<IrTrigger>,
    pub initial: NodeIx,
    pub config: ModelConfig,
    index: BTreeMap<String, NodeIx>,
}

impl WorkflowIr {
    pub fn node_index(&self, id: &str) -> Option<NodeIx> {
        self.index.get(id).copied()
    }

    pub fn node(&self, ix: NodeIx) -> &IrNode {
        &self.nodes[ix]
    }

    pub fn out_edges(&self, ix: NodeIx) -> impl Iterator<Item = &IrEdge> {
        self.nodes[ix].out_edges.iter().map(|&e| &self.edges[e])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CompileOptions {
    /// Report immediate cycles as warnings instead of errors.
    pub allow_immediate_cycles: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("{loc}: node '{node}', {clause}: reference to undeclared {expected} '{name}'")]
    Unresolved {
        loc: Loc,
        node: String,
        clause: &'static str,
        name: String,
        expected: &'static str,
    },
    #[error("immediate nodes form a cycle with no modal node: {}", .cycle.join(" -> "))]
    ImmediateCycle { cycle: Vec<String> },
    #[error("model has no nodes, so there is no initial node")]
    MissingInitial,
    #[error("more than one initial node: {}", .nodes.join(", "))]
    MultipleInitial { nodes: Vec<String> },
    #[error("{loc}: node '{node}' is triggerable but has neither a trigger nor a condition")]
    TriggerWithoutCondition { loc: Loc, node: String },
}

impl CompileError {
    pub fn loc(&self) -> Option<Loc> {
        match self {
            CompileError::Unresolved { loc, .. } | CompileError::TriggerWithoutCondition { loc, .. } => Some(*loc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompileWarning {
    Unreachable { node: String, loc: Loc },
    ImmediateCycle { cycle: Vec<String> },
    UnboundHoleVariable { node: String, var: String, loc: Loc },
}

impl CompileWarning {
    pub fn loc(&self) -> Option<Loc> {
        match self {
            CompileWarning::Unreachable { loc, .. } | CompileWarning::UnboundHoleVariable { loc, .. } => Some(*loc),
            CompileWarning::ImmediateCycle { .. } => None,
        }
    }
}

impl fmt::Display for CompileWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompileWarning::Unreachable { node, loc } => {
                write!(f, "{loc}: node '{node}' is unreachable (no incoming edge, no trigger, not initial)")
            }
            CompileWarning::ImmediateCycle { cycle } => {
                write!(f, "immediate nodes form a cycle: {}", cycle.join(" -> "))
            }
            CompileWarning::UnboundHoleVariable { node, var, loc } => {
                write!(f, "{loc}: node '{node}' uses {var} in a message but selects no such variable")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Compiled {
    pub ir: WorkflowIr,
    pub warnings: Vec<CompileWarning>,
}

/// Any failure on the way from source text to IR.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuildError {
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

impl BuildError {
    pub fn loc(&self) -> Option<Loc> {
        match self {
            BuildError::Dsl(e) => Some(e.loc()),
            BuildError::Compile(e) => e.loc(),
        }
    }
}

pub fn compile_source(source: &str, onto: &Ontology, opts: CompileOptions) -> Result<Compiled, BuildError> {
    let model = crate::dsl::load_model(source, onto)?;
    Ok(compile(&model, onto, opts)?)
}

pub fn compile(model: &DslModel, onto: &Ontology, opts: CompileOptions) -> Result<Compiled, CompileError> {
    let index: BTreeMap<String, NodeIx> = model
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.clone(), i))
        .collect();
    let initial = {
        let flagged: Vec<&str> = model
            .nodes
            .iter()
            .filter(|n| n.flags.initial)
            .map(|n| n.id.as_str())
            .collect();
        match flagged.as_slice() {
            [] if model.nodes.is_empty() => return Err(CompileError::MissingInitial),
            [] => 0,
            [one] => index[*one],
            many => {
                return Err(CompileError::MultipleInitial {
                    nodes: many.iter().map(|s| s.to_string()).collect(),
                })
            }
        }
    };

    let mut warnings = Vec::new();
    let mut nodes = Vec::with_capacity(model.nodes.len());
    let mut edges = Vec::new();
    let mut triggers = Vec::new();
    for (ix, spec) in model.nodes.iter().enumerate() {
        let unresolved = |loc: Loc, clause, name: &str, expected| CompileError::Unresolved {
            loc,
            node: spec.id.clone(),
            clause,
            name: name.to_string(),
            expected,
        };
        let mut flags = spec.flags;
        flags.initial = ix == initial;

        let mut out_edges = Vec::new();
        for t in &spec.transitions {
            let to = *index
                .get(&t.target)
                .ok_or_else(|| unresolved(t.span.0, "transition", &t.target, "node"))?;
            out_edges.push(edges.len());
            edges.push(IrEdge {
                from: ix,
                condition: t.condition.clone(),
                to,
            });
        }

        let trigger = if flags.triggerable {
            let condition = spec
                .trigger
                .clone()
                .or_else(|| spec.condition.clone())
                .ok_or_else(|| CompileError::TriggerWithoutCondition {
                    loc: spec.span.0,
                    node: spec.id.clone(),
                })?;
            triggers.push(IrTrigger { node: ix, condition });
            Some(triggers.len() - 1)
        } else {
            None
        };

        let select = spec
            .select
            .as_ref()
            .map(|s| {
                let class = onto
                    .schema
                    .class(&s.class)
                    .ok_or_else(|| unresolved(s.span.0, "select", &s.class, "class"))?;
                let constraints = s
                    .constraints
                    .iter()
                    .map(|c| {
                        let p = onto
                            .schema
                            .property(&c.property)
                            .ok_or_else(|| unresolved(c.span.0, "select", &c.property, "property"))?;
                        let v = match &c.value {
                            SelectArg::Literal(l) => SelectValue::Literal(l.clone()),
                            SelectArg::Name(n) => match (onto.schema.property(n), onto.term(n)) {
                                (Some(slot), _) => SelectValue::Slot(slot),
                                (None, Some(t)) => SelectValue::Term(t),
                                (None, None) => {
                                    return Err(unresolved(c.span.0, "select", n, "slot, class or instance"))
                                }
                            },
                        };
                        Ok((p, v))
                    })
                    .collect::<Result<_, _>>()?;
                Ok(IrSelect {
                    var: s.var.clone(),
                    class,
                    constraints,
                })
            })
            .transpose()?;

        let mut messages = Vec::new();
        for m in &spec.messages {
            let mut segments = Vec::new();
            for seg in &m.segments {
                segments.push(match seg {
                    Segment::Text(t) => IrSegment::Text(t.clone()),
                    Segment::Hole(p) => {
                        let path = p.resolve(onto).map_err(|e| {
                            unresolved(
                                e.loc().unwrap_or(spec.span.0),
                                "message",
                                e.unresolved_name().unwrap_or_default(),
                                match e {
                                    crate::conditions::ConditionError::Unresolved { expected, .. } => expected,
                                    _ => "name",
                                },
                            )
                        })?;
                        if let PathStart::Var(v) = &path.start {
                            if select.as_ref().is_none_or(|s| &s.var != v) {
                                warnings.push(CompileWarning::UnboundHoleVariable {
                                    node: spec.id.clone(),
                                    var: v.clone(),
                                    loc: p.span.0,
                                });
                            }
                        }
                        IrSegment::Hole(path)
                    }
                });
            }
            messages.push(IrTemplate {
                segments,
                source: m.to_string(),
            });
        }

        let extract = spec
            .extract_store
            .iter()
            .map(|x| {
                Ok(IrExtract {
                    class: onto
                        .schema
                        .class(&x.class)
                        .ok_or_else(|| unresolved(x.span.0, "extract-and-store", &x.class, "class"))?,
                    subject: onto
                        .facts
                        .individual(&x.subject)
                        .ok_or_else(|| unresolved(x.span.0, "extract-and-store", &x.subject, "instance"))?,
                    property: onto
                        .schema
                        .property(&x.property)
                        .ok_or_else(|| unresolved(x.span.0, "extract-and-store", &x.property, "property"))?,
                })
            })
            .collect::<Result<_, _>>()?;

        nodes.push(IrNode {
            id: spec.id.clone(),
            loc: spec.span.0,
            condition: spec.condition.clone(),
            messages,
            out_edges,
            trigger,
            extract,
            select,
            flags,
        });
    }

    let ir = WorkflowIr {
        nodes,
        edges,
        triggers,
        initial,
        config: model.config.clone(),
        index,
    };

    if let Some(cycle) = immediate_cycle(&ir) {
        if opts.allow_immediate_cycles {
            warnings.push(CompileWarning::ImmediateCycle { cycle });
        } else {
            return Err(CompileError::ImmediateCycle { cycle });
        }
    }
    let reached = reachable(&ir);
    for (ix, n) in ir.nodes.iter().enumerate() {
        if !reached.contains(&ix) {
            warnings.push(CompileWarning::Unreachable {
                node: n.id.clone(),
                loc: n.loc,
            });
        }
    }
    Ok(Compiled { ir, warnings })
}

fn reachable(ir: &WorkflowIr) -> BTreeSet<NodeIx> {
    let mut seen: BTreeSet<NodeIx> = BTreeSet::new();
    let mut queue: VecDeque<NodeIx> = std::iter::once(ir.initial)
        .chain(ir.triggers.iter().map(|t| t.node))
        .collect();
    while let Some(n) = queue.pop_front() {
        if seen.insert(n) {
            queue.extend(ir.out_edges(n).map(|e| e.to));
        }
    }
    seen
}

/// First cycle among edges that join two immediate nodes, as node ids with
/// the first repeated at the end.
fn immediate_cycle(ir: &WorkflowIr) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    fn visit(ir: &WorkflowIr, n: NodeIx, marks: &mut [Mark], stack: &mut Vec<NodeIx>) -> Option<Vec<String>> {
        marks[n] = Mark::Active;
        stack.push(n);
        for e in ir.out_edges(n) {
            if ir.nodes[e.to].flags.modal {
                continue;
            }
            match marks[e.to] {
                Mark::Active => {
                    let start = stack.iter().position(|&s| s == e.to).unwrap_or(0);
                    let mut cycle: Vec<String> = stack[start..].iter().map(|&s| ir.nodes[s].id.clone()).collect();
                    cycle.push(ir.nodes[e.to].id.clone());
                    return Some(cycle);
                }
                Mark::New => {
                    if let Some(c) = visit(ir, e.to, marks, stack) {
                        return Some(c);
                    }
                }
                Mark::Done => {}
            }
        }
        stack.pop();
        marks[n] = Mark::Done;
        None
    }
    let mut marks = vec![Mark::New; ir.nodes.len()];
    (0..ir.nodes.len())
        .filter(|&n| !ir.nodes[n].flags.modal)
        .find_map(|n| {
            if marks[n] == Mark::New {
                visit(ir, n, &mut marks, &mut Vec::new())
            } else {
                None
            }
        })
}

/// A triple in the graph-level vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IrAssertion {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl fmt::Display for IrAssertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}

struct Expander<'a> {
    onto: &'a Ontology,
    out: Vec<IrAssertion>,
}

impl Expander<'_> {
    fn add(&mut self, s: impl Into<String>, p: &str, o: impl Into<String>) {
        self.out.push(IrAssertion {
            subject: s.into(),
            predicate: p.to_string(),
            object: o.into(),
        });
    }

    fn lit(s: &str) -> String {
        SExpr::string(s).to_string()
    }

    /// One assertion per condition node: combinators link to a fresh id whose
    /// operands hang off it, leaves carry their printed form.
    fn condition(&mut self, owner: &str, pred: &str, id: String, c: &ConditionAst) {
        match c {
            ConditionAst::And(items) | ConditionAst::Or(items) => {
                self.add(owner, pred, id.clone());
                let op = if matches!(c, ConditionAst::And(_)) { "dwg:allOf" } else { "dwg:anyOf" };
                for (k, item) in items.iter().enumerate() {
                    self.condition(&id, op, format!("{id}.{k}"), item);
                }
            }
            ConditionAst::Not(inner) => {
                self.add(owner, pred, id.clone());
                self.condition(&id, "dwg:complementOf", format!("{id}.0"), inner);
            }
            leaf => {
                let printed = print_condition(leaf, self.onto).to_string();
                self.add(owner, pred, Self::lit(&printed));
            }
        }
    }
}

/// Expand the IR into its graph-level assertions. Per node: a type, one per
/// set flag, the condition, two per message and one per hole path step. Per
/// edge: three plus the condition. Per trigger: two plus the condition. Per
/// extraction: three. Per select: two plus one per constraint.
pub fn expand_assertions(ir: &WorkflowIr, onto: &Ontology) -> Vec<IrAssertion> {
    let mut x = Expander { onto, out: Vec::new() };
    for n in &ir.nodes {
        let id = n.id.as_str();
        x.add(id, "rdf:type", "dwg:Node");
        let f = n.flags;
        for (set, pred) in [
            (f.initial, "dwg:isInitial"),
            (!f.modal, "dwg:isImmediate"),
            (f.topic_start, "dwg:isTopicStart"),
            (f.triggerable, "dwg:isTriggerable"),
            (f.allow_relinquish, "dwg:allowsRelinquish"),
            (f.resume, "dwg:resumes"),
        ] {
            if set {
                x.add(id, pred, "true");
            }
        }
        if f.topic_end {
            x.add(id, "dwg:topicEnd", f.end_behavior.as_str());
        }
        if let Some(c) = &n.condition {
            x.condition(id, "dwg:nodeCondition", format!("{id}.cond"), c);
        }
        for (k, m) in n.messages.iter().enumerate() {
            let mid = format!("{id}.msg{k}");
            x.add(id, "dwg:message", mid.clone());
            x.add(mid.clone(), "dwg:text", Expander::lit(&m.source));
            let holes = m.segments.iter().filter_map(|s| match s {
                IrSegment::Hole(p) => Some(p),
                IrSegment::Text(_) => None,
            });
            for (h, p) in holes.enumerate() {
                for (s, step) in p.steps.iter().enumerate() {
                    let mut o = onto.schema.property_name(step.property).to_string();
                    if let Some(c) = step.filter {
                        o = format!("{o}/{}", onto.schema.class_name(c));
                    }
                    x.add(format!("{mid}.hole{h}"), &format!("dwg:step{s}"), o);
                }
            }
        }
        for (k, e) in n.extract.iter().enumerate() {
            let xid = format!("{id}.extract{k}");
            x.add(id, "dwg:extractAndStore", xid.clone());
            x.add(xid.clone(), "dwg:extractClass", onto.schema.class_name(e.class));
            x.add(
                xid,
                "dwg:storeAt",
                format!(
                    "{}/{}",
                    onto.facts.individual_name(e.subject),
                    onto.schema.property_name(e.property)
                ),
            );
        }
        if let Some(s) = &n.select {
            let sid = format!("{id}.select");
            x.add(id, "dwg:select", sid.clone());
            x.add(sid.clone(), "dwg:binds", format!("{} {}", s.var, onto.schema.class_name(s.class)));
            for (p, v) in &s.constraints {
                let o = match v {
                    SelectValue::Slot(slot) => format!("slot:{}", onto.schema.property_name(*slot)),
                    SelectValue::Term(t) => onto.term_name(*t).to_string(),
                    SelectValue::Literal(Literal::Str(s)) => Expander::lit(s),
                    SelectValue::Literal(Literal::Number(n)) => SExpr::number(n.0).to_string(),
                };
                x.add(sid.clone(), onto.schema.property_name(*p), o);
            }
        }
    }
    for (k, e) in ir.edges.iter().enumerate() {
        let eid = format!("edge{k}");
        x.add(eid.clone(), "rdf:type", "dwg:Edge");
        x.add(eid.clone(), "dwg:from", ir.nodes[e.from].id.clone());
        x.add(eid.clone(), "dwg:to", ir.nodes[e.to].id.clone());
        x.condition(&eid, "dwg:edgeCondition", format!("{eid}.cond"), &e.condition);
    }
    for (k, t) in ir.triggers.iter().enumerate() {
        let tid = format!("trigger{k}");
        x.add(tid.clone(), "rdf:type", "dwg:Trigger");
        x.add(tid.clone(), "dwg:activates", ir.nodes[t.node].id.clone());
        x.condition(&tid, "dwg:triggerCondition", format!("{tid}.cond"), &t.condition);
    }
    x.out
}

pub const HOURS_PER_RULE: f64 = 1.5;
pub const HOURS_PER_NODE: f64 = 0.68;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelMetrics {
    pub node_count: usize,
    pub edge_count: usize,
    pub trigger_count: usize,
    pub rules_saved: usize,
    pub assertion_count: usize,
    pub rpn: f64,
    pub apn: f64,
    pub loe_rule_hours: f64,
    pub loe_dsl_hours: f64,
    /// Fraction in `[..1]`, absent when no rules are saved.
    pub reduction: Option<f64>,
}

impl ModelMetrics {
    pub fn from_counts(node_count: usize, edge_count: usize, trigger_count: usize, assertion_count: usize) -> Self {
        let rules_saved = edge_count + trigger_count;
        let per_node = |x: usize| if node_count == 0 { 0.0 } else { x as f64 / node_count as f64 };
        let loe_rule_hours = rules_saved as f64 * HOURS_PER_RULE;
        let loe_dsl_hours = node_count as f64 * HOURS_PER_NODE;
        Self {
            node_count,
            edge_count,
            trigger_count,
            rules_saved,
            assertion_count,
            rpn: per_node(rules_saved),
            apn: per_node(assertion_count),
            loe_rule_hours,
            loe_dsl_hours,
            reduction: (rules_saved > 0).then(|| 1.0 - loe_dsl_hours / loe_rule_hours),
        }
    }

    /// RpN to one decimal.
    pub fn rpn_display(&self) -> String {
        format!("{:.1}", (self.rpn * 10.0).round() / 10.0)
    }

    /// ApN to the nearest integer.
    pub fn apn_display(&self) -> String {
        format!("{}", self.apn.round() as i64)
    }

    /// Reduction as a percentage with one decimal, e.g. `83.0%`.
    pub fn reduction_display(&self) -> String {
        match self.reduction {
            Some(r) => format!("{:.1}%", (r * 1000.0).round() / 10.0),
            None => "n/a".to_string(),
        }
    }
}

impl fmt::Display for ModelMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nodes        {}", self.node_count)?;
        writeln!(f, "edges        {}", self.edge_count)?;
        writeln!(f, "triggers     {}", self.trigger_count)?;
        writeln!(f, "rules saved  {}", self.rules_saved)?;
        writeln!(f, "assertions   {}", self.assertion_count)?;
        writeln!(f, "RpN          {}", self.rpn_display())?;
        writeln!(f, "ApN          {}", self.apn_display())?;
        writeln!(f, "LOE rules    {:.2} h", self.loe_rule_hours)?;
        writeln!(f, "LOE DSL      {:.2} h", self.loe_dsl_hours)?;
        write!(f, "reduction    {}", self.reduction_display())
    }
}

pub fn compute_metrics(ir: &WorkflowIr, onto: &Ontology) -> ModelMetrics {
    ModelMetrics::from_counts(
        ir.nodes.len(),
        ir.edges.len(),
        ir.triggers.len(),
        expand_assertions(ir, onto).len(),
    )
}

pub const TRIGGER_SOURCE: &str = "__trigger__";

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

fn flag_names(f: &NodeFlags) -> Vec<&'static str> {
    [
        (f.initial, "initial"),
        (!f.modal, "immediate"),
        (f.topic_start, "topic-start"),
        (f.topic_end && f.end_behavior == crate::dsl::EndBehavior::Return, "topic-end return"),
        (f.topic_end && f.end_behavior == crate::dsl::EndBehavior::Continue, "topic-end continue"),
        (f.triggerable, "triggerable"),
        (f.allow_relinquish, "allow-relinquish"),
        (f.resume, "resume"),
    ]
    .into_iter()
    .filter_map(|(set, name)| set.then_some(name))
    .collect()
}

/// Render the IR as a DOT digraph: one statement per node, solid edges for
/// transitions and dashed edges from a synthetic source for triggers.
pub fn emit_dot(ir: &WorkflowIr, onto: &Ontology) -> String {
    let mut out = String::from("digraph workflow {\n  rankdir=LR;\n  node [shape=box, style=rounded];\n");
    for n in &ir.nodes {
        let flags = flag_names(&n.flags);
        let label = if flags.is_empty() {
            n.id.clone()
        } else {
            format!("{}\n[{}]", n.id, flags.join(", "))
        };
        let shape = if n.flags.modal { "" } else { ", shape=ellipse" };
        let _ = writeln!(out, "  \"{}\" [label=\"{}\"{shape}];", dot_escape(&n.id), dot_escape(&label));
    }
    if !ir.triggers.is_empty() {
        let _ = writeln!(out, "  \"{TRIGGER_SOURCE}\" [label=\"trigger\", shape=point];");
    }
    for e in &ir.edges {
        let _ = writeln!(
            out,
            "  \"{}\" -> \"{}\" [label=\"{}\"];",
            dot_escape(&ir.nodes[e.from].id),
            dot_escape(&ir.nodes[e.to].id),
            dot_escape(&print_condition(&e.condition, onto).to_string())
        );
    }
    for t in &ir.triggers {
        let _ = writeln!(
            out,
            "  \"{TRIGGER_SOURCE}\" -> \"{}\" [label=\"{}\", style=dashed];",
            dot_escape(&ir.nodes[t.node].id),
            dot_escape(&print_condition(&t.condition, onto).to_string())
        );
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, Serialize)]
struct DocNode {
    id: String,
    flags: NodeFlags,
    #[serde(skip_serializing_if = "Option::is_none")]
    condition: Option<String>,
    messages: Vec<String>,
    transitions: Vec<DocTransition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trigger: Option<String>,
    extract_and_store: Vec<DocExtract>,
    #[serde(skip_serializing_if = "Option::is_none")]
    select: Option<DocSelect>,
}

#[derive(Debug, Clone, Serialize)]
struct DocTransition {
    condition: String,
    target: String,
}

#[derive(Debug, Clone, Serialize)]
struct DocExtract {
    class: String,
    subject: String,
    property: String,
}

#[derive(Debug, Clone, Serialize)]
struct DocSelect {
    var: String,
    class: String,
    constraints: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize)]
struct DocEdge {
    from: String,
    condition: String,
    to: String,
}

#[derive(Debug, Clone, Serialize)]
struct DocTrigger {
    node: String,
    condition: String,
}

#[derive(Debug, Clone, Serialize)]
struct IrDocument<'a> {
    version: &'static str,
    initial: &'a str,
    config: &'a ModelConfig,
    nodes: Vec<DocNode>,
    edges: Vec<DocEdge>,
    triggers: Vec<DocTrigger>,
    metrics: ModelMetrics,
}

/// The IR as a versioned JSON document with names in place of indices.
pub fn ir_to_json(ir: &WorkflowIr, onto: &Ontology) -> serde_json::Value {
    let cond = |c: &ConditionAst| print_condition(c, onto).to_string();
    let id = |ix: NodeIx| ir.nodes[ix].id.clone();
    let nodes = ir
        .nodes
        .iter()
        .map(|n| DocNode {
            id: n.id.clone(),
            flags: n.flags,
            condition: n.condition.as_ref().map(cond),
            messages: n.messages.iter().map(|m| m.source.clone()).collect(),
            transitions: ir
                .out_edges(ir.node_index(&n.id).unwrap_or_default())
                .map(|e| DocTransition {
                    condition: cond(&e.condition),
                    target: id(e.to),
                })
                .collect(),
            trigger: n.trigger.map(|t| cond(&ir.triggers[t].condition)),
            extract_and_store: n
                .extract
                .iter()
                .map(|x| DocExtract {
                    class: onto.schema.class_name(x.class).to_string(),
                    subject: onto.facts.individual_name(x.subject).to_string(),
                    property: onto.schema.property_name(x.property).to_string(),
                })
                .collect(),
            select: n.select.as_ref().map(|s| DocSelect {
                var: s.var.clone(),
                class: onto.schema.class_name(s.class).to_string(),
                constraints: s
                    .constraints
                    .iter()
                    .map(|(p, v)| {
                        let v = match v {
                            SelectValue::Slot(slot) => onto.schema.property_name(*slot).to_string(),
                            SelectValue::Term(t) => onto.term_name(*t).to_string(),
                            SelectValue::Literal(Literal::Str(s)) => SExpr::string(s.clone()).to_string(),
                            SelectValue::Literal(Literal::Number(n)) => SExpr::number(n.0).to_string(),
                        };
                        (onto.schema.property_name(*p).to_string(), v)
                    })
                    .collect(),
            }),
        })
        .collect();
    let doc = IrDocument {
        version: IR_VERSION,
        initial: &ir.nodes[ir.initial].id,
        config: &ir.config,
        nodes,
        edges: ir
            .edges
            .iter()
            .map(|e| DocEdge {
                from: id(e.from),
                condition: cond(&e.condition),
                to: id(e.to),
            })
            .collect(),
        triggers: ir
            .triggers
            .iter()
            .map(|t| DocTrigger {
                node: id(t.node),
                condition: cond(&t.condition),
            })
            .collect(),
        metrics: compute_metrics(ir, onto),
    };
    serde_json::to_value(doc).expect("IR document serializes")
}
