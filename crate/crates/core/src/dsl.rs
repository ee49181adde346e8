//! Workflow DSL: `defnode` and `defconfig` forms parsed into a [`DslModel`].
//!
//! ```text
//! (defnode n1
//!   (:condition A)
//!   (:message "In node n1")
//!   (:transition (R n2)))
//! ```
//!
//! Conditions are parsed against the ontology here. Node targets, extraction
//! referents and select classes stay as names; the compiler resolves them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::conditions::path::{parse_path_syntax, PathSyntax};
use crate::conditions::{parse_condition, print_condition, ConditionAst, ConditionError};
use crate::ontology::{Literal, Number, Ontology};
use crate::sexpr::{parse_sexprs, Loc, SExpr, SExprError, SExprKind, Span};

pub const DEFAULT_FALLBACK: &str = "Sorry, I didn't understand that.";
pub const DEFAULT_MAX_CHAIN: usize = 32;
pub const DEFAULT_PLACEHOLDER: &str = "⟨?⟩";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndBehavior {
    #[default]
    Return,
    Continue,
}

impl EndBehavior {
    pub fn as_str(self) -> &'static str {
        match self {
            EndBehavior::Return => "return",
            EndBehavior::Continue => "continue",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NodeFlags {
    pub topic_start: bool,
    pub topic_end: bool,
    /// Only meaningful when `topic_end` is set.
    pub end_behavior: EndBehavior,
    pub triggerable: bool,
    pub allow_relinquish: bool,
    pub resume: bool,
    pub modal: bool,
    pub initial: bool,
}

impl Default for NodeFlags {
    fn default() -> Self {
        Self {
            topic_start: false,
            topic_end: false,
            end_behavior: EndBehavior::Return,
            triggerable: false,
            allow_relinquish: false,
            resume: false,
            modal: true,
            initial: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub condition: ConditionAst,
    pub target: String,
    pub span: Span,
}

/// `(BodyPart currentUser hemorrhageLocation)`: take a mapped term that fits
/// `class` from the user turn and assert `(subject property term)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractDirective {
    pub class: String,
    pub subject: String,
    pub property: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectArg {
    /// A slot of the pending intent, or a class or instance name.
    Name(String),
    Literal(Literal),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectConstraint {
    pub property: String,
    pub value: SelectArg,
    pub span: Span,
}

/// `($r Restaurant (location location) (cuisine cuisine))` binds `$r` to the
/// first instance of the class whose fillers satisfy every constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectDirective {
    pub var: String,
    pub class: String,
    pub constraints: Vec<SelectConstraint>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Text(String),
    Hole(PathSyntax),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MessageTemplate {
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    pub span: Span,
    pub condition: Option<ConditionAst>,
    pub messages: Vec<MessageTemplate>,
    pub transitions: Vec<Transition>,
    pub trigger: Option<ConditionAst>,
    pub extract_store: Vec<ExtractDirective>,
    pub flags: NodeFlags,
    pub select: Option<SelectDirective>,
}

impl NodeSpec {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            span: Span::default(),
            condition: None,
            messages: Vec::new(),
            transitions: Vec::new(),
            trigger: None,
            extract_store: Vec::new(),
            flags: NodeFlags::default(),
            select: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub fallback_message: String,
    pub max_immediate_chain: usize,
    pub placeholder: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            fallback_message: DEFAULT_FALLBACK.to_string(),
            max_immediate_chain: DEFAULT_MAX_CHAIN,
            placeholder: DEFAULT_PLACEHOLDER.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DslModel {
    pub nodes: Vec<NodeSpec>,
    pub config: ModelConfig,
}

impl DslModel {
    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error(transparent)]
    Syntax(#[from] SExprError),
    #[error("{loc}: expected a defnode or defconfig form")]
    TopLevel { loc: Loc },
    #[error("{loc}: duplicate node id '{id}' (first defined at {first})")]
    DuplicateNode { loc: Loc, id: String, first: Loc },
    #[error("{loc}: unknown clause ':{clause}'")]
    UnknownClause { loc: Loc, clause: String },
    #[error("{loc}: clause ':{clause}' given more than once")]
    DuplicateClause { loc: Loc, clause: String },
    #[error("{loc}: clause ':{clause}' expects {expected}")]
    Arity {
        loc: Loc,
        clause: String,
        expected: &'static str,
    },
    #[error("{loc}: {message}")]
    Malformed { loc: Loc, message: String },
    #[error("{source} (in node '{node}')")]
    Condition {
        node: String,
        node_loc: Loc,
        source: ConditionError,
    },
    #[error("{loc}: bad message template: {source}")]
    Template { loc: Loc, source: TemplateError },
}

impl DslError {
    pub fn loc(&self) -> Loc {
        match self {
            DslError::Syntax(e) => e.loc(),
            DslError::TopLevel { loc }
            | DslError::DuplicateNode { loc, .. }
            | DslError::UnknownClause { loc, .. }
            | DslError::DuplicateClause { loc, .. }
            | DslError::Arity { loc, .. }
            | DslError::Malformed { loc, .. }
            | DslError::Template { loc, .. } => *loc,
            DslError::Condition { node_loc, source, .. } => source.loc().unwrap_or(*node_loc),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TemplateError {
    #[error("unbalanced brace at offset {0}")]
    UnbalancedBrace(usize),
    #[error("hole at offset {offset}: {message}")]
    BadHole { offset: usize, message: String },
}

/// Split a message into literal text and `{path}` holes. `{{` and `}}` stand
/// for literal braces.
pub fn parse_template(text: &str) -> Result<MessageTemplate, TemplateError> {
    let mut segments = Vec::new();
    let mut lit = String::new();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '{' if chars.peek().map(|p| p.1) == Some('{') => {
                chars.next();
                lit.push('{');
            }
            '}' if chars.peek().map(|p| p.1) == Some('}') => {
                chars.next();
                lit.push('}');
            }
            '}' => return Err(TemplateError::UnbalancedBrace(i)),
            '{' => {
                let body_start = i + 1;
                let close = text[body_start..]
                    .find('}')
                    .ok_or(TemplateError::UnbalancedBrace(i))?
                    + body_start;
                let bad = |message: String| TemplateError::BadHole { offset: i, message };
                let forms = parse_sexprs(&text[body_start..close]).map_err(|e| bad(e.to_string()))?;
                let [form] = forms.as_slice() else {
                    return Err(bad("a hole holds exactly one path expression".into()));
                };
                let path = parse_path_syntax(form).map_err(|e| bad(e.to_string()))?;
                if !lit.is_empty() {
                    segments.push(Segment::Text(std::mem::take(&mut lit)));
                }
                segments.push(Segment::Hole(path));
                while chars.peek().is_some_and(|p| p.0 <= close) {
                    chars.next();
                }
            }
            _ => lit.push(c),
        }
    }
    if !lit.is_empty() || segments.is_empty() {
        segments.push(Segment::Text(lit));
    }
    Ok(MessageTemplate { segments })
}

impl fmt::Display for MessageTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => f.write_str(&t.replace('{', "{{").replace('}', "}}"))?,
                Segment::Hole(p) => write!(f, "{{{}}}", p.to_sexpr())?,
            }
        }
        Ok(())
    }
}

impl MessageTemplate {
    pub fn holes(&self) -> impl Iterator<Item = &PathSyntax> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Hole(p) => Some(p),
            Segment::Text(_) => None,
        })
    }
}

pub fn load_model(source: &str, onto: &Ontology) -> Result<DslModel, DslError> {
    parse_model(&parse_sexprs(source)?, onto)
}

pub fn parse_model(forms: &[SExpr], onto: &Ontology) -> Result<DslModel, DslError> {
    let mut model = DslModel::default();
    let mut seen: BTreeMap<String, Loc> = BTreeMap::new();
    let mut config_seen = false;
    for form in forms {
        match form.head_symbol() {
            Some("defnode") => {
                let node = parse_node(form, onto)?;
                if let Some(first) = seen.get(&node.id) {
                    return Err(DslError::DuplicateNode {
                        loc: form.loc,
                        id: node.id,
                        first: *first,
                    });
                }
                seen.insert(node.id.clone(), form.loc);
                model.nodes.push(node);
            }
            Some("defconfig") => {
                if config_seen {
                    return Err(DslError::Malformed {
                        loc: form.loc,
                        message: "defconfig given more than once".into(),
                    });
                }
                config_seen = true;
                model.config = parse_config(form)?;
            }
            _ => return Err(DslError::TopLevel { loc: form.loc }),
        }
    }
    Ok(model)
}

fn clause_parts(c: &SExpr) -> Result<(&str, &[SExpr]), DslError> {
    match (c.head_keyword(), c.as_list()) {
        (Some(k), Some(items)) => Ok((k, &items[1..])),
        _ => Err(DslError::Malformed {
            loc: c.loc,
            message: format!("expected a clause like (:keyword ...), found {}", c.kind_name()),
        }),
    }
}

fn parse_config(form: &SExpr) -> Result<ModelConfig, DslError> {
    let mut cfg = ModelConfig::default();
    let items = form.as_list().unwrap_or_default();
    for c in &items[1..] {
        let (k, args) = clause_parts(c)?;
        let arity = |expected| DslError::Arity {
            loc: c.loc,
            clause: k.to_string(),
            expected,
        };
        match k {
            "fallback-message" | "placeholder" => {
                let [s] = args else { return Err(arity("one string")) };
                let s = s.as_str().ok_or_else(|| arity("one string"))?.to_string();
                if k == "placeholder" {
                    cfg.placeholder = s;
                } else {
                    cfg.fallback_message = s;
                }
            }
            "max-immediate-chain" => {
                let n = match args {
                    [SExpr {
                        kind: SExprKind::Number(n),
                        ..
                    }] if *n >= 1.0 && n.fract() == 0.0 => *n as usize,
                    _ => return Err(arity("one positive integer")),
                };
                cfg.max_immediate_chain = n;
            }
            _ => {
                return Err(DslError::UnknownClause {
                    loc: c.loc,
                    clause: k.to_string(),
                })
            }
        }
    }
    Ok(cfg)
}

fn symbol_arg<'a>(e: &'a SExpr, what: &str) -> Result<&'a str, DslError> {
    e.as_symbol().ok_or_else(|| DslError::Malformed {
        loc: e.loc,
        message: format!("expected {what}, found {}", e.kind_name()),
    })
}

fn parse_node(form: &SExpr, onto: &Ontology) -> Result<NodeSpec, DslError> {
    let items = form.as_list().unwrap_or_default();
    let id = items.get(1).ok_or_else(|| DslError::Malformed {
        loc: form.loc,
        message: "defnode needs a node id".into(),
    })?;
    let mut node = NodeSpec::new(symbol_arg(id, "a node id")?);
    node.span = form.loc.into();
    let cond = |e: &SExpr, node: &NodeSpec| {
        parse_condition(e, onto).map_err(|source| DslError::Condition {
            node: node.id.clone(),
            node_loc: form.loc,
            source,
        })
    };
    let mut once: BTreeSet<&str> = BTreeSet::new();
    for c in &items[2..] {
        let (k, args) = clause_parts(c)?;
        let arity = |expected| DslError::Arity {
            loc: c.loc,
            clause: k.to_string(),
            expected,
        };
        let repeatable = matches!(k, "message" | "transition" | "extract-and-store");
        if !repeatable && !once.insert(k) {
            return Err(DslError::DuplicateClause {
                loc: c.loc,
                clause: k.to_string(),
            });
        }
        let flag = match k {
            "topic-start" => Some(&mut node.flags.topic_start),
            "triggerable" => Some(&mut node.flags.triggerable),
            "allow-relinquish" => Some(&mut node.flags.allow_relinquish),
            "resume" => Some(&mut node.flags.resume),
            "initial" => Some(&mut node.flags.initial),
            _ => None,
        };
        if let Some(flag) = flag {
            if !args.is_empty() {
                return Err(arity("no arguments"));
            }
            *flag = true;
            continue;
        }
        match k {
            "immediate" => {
                if !args.is_empty() {
                    return Err(arity("no arguments"));
                }
                node.flags.modal = false;
            }
            "condition" => {
                let [e] = args else { return Err(arity("one condition")) };
                node.condition = Some(cond(e, &node)?);
            }
            "trigger" => {
                let [e] = args else { return Err(arity("one condition")) };
                node.trigger = Some(cond(e, &node)?);
                node.flags.triggerable = true;
            }
            "topic-end" => {
                node.flags.topic_end = true;
                node.flags.end_behavior = match args {
                    [e] => match e.as_symbol() {
                        Some("return") => EndBehavior::Return,
                        Some("continue") => EndBehavior::Continue,
                        _ => return Err(arity("'return' or 'continue'")),
                    },
                    _ => return Err(arity("'return' or 'continue'")),
                };
            }
            "message" => {
                if args.is_empty() {
                    return Err(arity("at least one string"));
                }
                for a in args {
                    let text = a.as_str().ok_or_else(|| arity("strings"))?;
                    let t = parse_template(text).map_err(|source| DslError::Template { loc: a.loc, source })?;
                    node.messages.push(t);
                }
            }
            "transition" => {
                if args.is_empty() {
                    return Err(arity("at least one (condition target) pair"));
                }
                for a in args {
                    let [c_expr, target] = a.as_list().unwrap_or_default() else {
                        return Err(arity("(condition target) pairs"));
                    };
                    node.transitions.push(Transition {
                        condition: cond(c_expr, &node)?,
                        target: symbol_arg(target, "a target node id")?.to_string(),
                        span: a.loc.into(),
                    });
                }
            }
            "extract-and-store" => {
                if args.is_empty() {
                    return Err(arity("at least one (Class subject property) triple"));
                }
                for a in args {
                    let [class, subject, property] = a.as_list().unwrap_or_default() else {
                        return Err(arity("(Class subject property) triples"));
                    };
                    node.extract_store.push(ExtractDirective {
                        class: symbol_arg(class, "a class name")?.to_string(),
                        subject: symbol_arg(subject, "an instance name")?.to_string(),
                        property: symbol_arg(property, "a property name")?.to_string(),
                        span: a.loc.into(),
                    });
                }
            }
            "select" => {
                let [spec] = args else { return Err(arity("one ($var Class (property value)*) form")) };
                node.select = Some(parse_select(spec)?);
            }
            _ => {
                return Err(DslError::UnknownClause {
                    loc: c.loc,
                    clause: k.to_string(),
                })
            }
        }
    }
    if !node.flags.modal && node.transitions.is_empty() && !node.flags.topic_end {
        return Err(DslError::Malformed {
            loc: form.loc,
            message: format!("immediate node '{}' needs a transition or a topic end", node.id),
        });
    }
    Ok(node)
}

fn parse_select(spec: &SExpr) -> Result<SelectDirective, DslError> {
    let bad = |loc, message: &str| DslError::Malformed {
        loc,
        message: message.to_string(),
    };
    let items = spec
        .as_list()
        .filter(|l| l.len() >= 2)
        .ok_or_else(|| bad(spec.loc, "select is ($var Class (property value)*)"))?;
    let var = symbol_arg(&items[0], "a $variable")?;
    if !var.starts_with('$') || var.len() < 2 {
        return Err(bad(items[0].loc, "select variables start with '$'"));
    }
    let class = symbol_arg(&items[1], "a class name")?;
    let constraints = items[2..]
        .iter()
        .map(|c| {
            let [p, v] = c.as_list().unwrap_or_default() else {
                return Err(bad(c.loc, "a select constraint is (property value)"));
            };
            let value = match &v.kind {
                SExprKind::Symbol(s) => SelectArg::Name(s.clone()),
                SExprKind::Str(s) => SelectArg::Literal(Literal::Str(s.clone())),
                SExprKind::Number(n) => SelectArg::Literal(Literal::Number(Number(*n))),
                _ => return Err(bad(v.loc, "a select value is a name or a literal")),
            };
            Ok(SelectConstraint {
                property: symbol_arg(p, "a property name")?.to_string(),
                value,
                span: c.loc.into(),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(SelectDirective {
        var: var.to_string(),
        class: class.to_string(),
        constraints,
        span: spec.loc.into(),
    })
}

fn string_lit(s: &str) -> String {
    SExpr::string(s).to_string()
}

/// Print a model back as DSL source, one clause per line.
pub fn print_model(model: &DslModel, onto: &Ontology) -> String {
    let mut out = String::new();
    let cfg = &model.config;
    let defaults = ModelConfig::default();
    if *cfg != defaults {
        out.push_str("(defconfig");
        if cfg.fallback_message != defaults.fallback_message {
            let _ = write!(out, "\n  (:fallback-message {})", string_lit(&cfg.fallback_message));
        }
        if cfg.max_immediate_chain != defaults.max_immediate_chain {
            let _ = write!(out, "\n  (:max-immediate-chain {})", cfg.max_immediate_chain);
        }
        if cfg.placeholder != defaults.placeholder {
            let _ = write!(out, "\n  (:placeholder {})", string_lit(&cfg.placeholder));
        }
        out.push_str(")\n\n");
    }
    for (i, n) in model.nodes.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_node(&mut out, n, onto);
    }
    out
}

fn print_node(out: &mut String, n: &NodeSpec, onto: &Ontology) {
    let mut clauses: Vec<String> = Vec::new();
    let f = &n.flags;
    for (set, kw) in [
        (f.initial, "initial"),
        (!f.modal, "immediate"),
        (f.topic_start, "topic-start"),
        (f.triggerable && n.trigger.is_none(), "triggerable"),
        (f.allow_relinquish, "allow-relinquish"),
        (f.resume, "resume"),
    ] {
        if set {
            clauses.push(format!("(:{kw})"));
        }
    }
    if f.topic_end {
        clauses.push(format!("(:topic-end {})", f.end_behavior.as_str()));
    }
    if let Some(c) = &n.condition {
        clauses.push(format!("(:condition {})", print_condition(c, onto)));
    }
    if let Some(c) = &n.trigger {
        clauses.push(format!("(:trigger {})", print_condition(c, onto)));
    }
    for m in &n.messages {
        clauses.push(format!("(:message {})", string_lit(&m.to_string())));
    }
    if !n.transitions.is_empty() {
        let mut s = "(:transition".to_string();
        for t in &n.transitions {
            let _ = write!(s, "\n   ({} {})", print_condition(&t.condition, onto), t.target);
        }
        s.push(')');
        clauses.push(s);
    }
    if !n.extract_store.is_empty() {
        let mut s = "(:extract-and-store".to_string();
        for x in &n.extract_store {
            let _ = write!(s, "\n   ({} {} {})", x.class, x.subject, x.property);
        }
        s.push(')');
        clauses.push(s);
    }
    if let Some(sel) = &n.select {
        let mut s = format!("(:select ({} {}", sel.var, sel.class);
        for c in &sel.constraints {
            let v = match &c.value {
                SelectArg::Name(n) => n.clone(),
                SelectArg::Literal(Literal::Str(t)) => string_lit(t),
                SelectArg::Literal(Literal::Number(x)) => SExpr::number(x.0).to_string(),
            };
            let _ = write!(s, " ({} {v})", c.property);
        }
        s.push_str("))");
        clauses.push(s);
    }
    let _ = write!(out, "(defnode {}", n.id);
    for c in clauses {
        let _ = write!(out, "\n  {c}");
    }
    out.push_str(")\n");
}
