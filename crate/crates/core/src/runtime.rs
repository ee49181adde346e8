//! The dialogue interpreter.
//!
//! A [`DialogueState`] holds the unrolled history: alternating user and system
//! turns, linked to their predecessors and to the user turn they answer. Each
//! utterance runs through recognition, slot filling, extraction, transition
//! selection (local edges, then triggers, then intent re-execution, then the
//! fallback message) and finally node entry, which follows immediate chains.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::compiler::{IrNode, IrSegment, IrTemplate, NodeIx, SelectValue, WorkflowIr};
use crate::conditions::path::print_path;
use crate::conditions::{eval_condition, eval_path, match_grammar, ConditionAst, DialogueView, IntentView, Utterance};
use crate::dsl::EndBehavior;
use crate::ontology::{ClassId, IndividualId, Layered, LexMatch, Ontology, PropertyId, Term, TripleStore, Value};

pub const SESSION_VERSION: &str = "dwg-session/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentStatus {
    Incomplete,
    CompletelySpecified,
    Executed,
}

impl IntentStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            IntentStatus::Incomplete => "incomplete",
            IntentStatus::CompletelySpecified => "completely_specified",
            IntentStatus::Executed => "executed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentInstance {
    pub intent: ClassId,
    #[serde(with = "pairs")]
    pub slots: BTreeMap<PropertyId, Value>,
    pub status: IntentStatus,
    /// Slots changed since the intent was last executed.
    pub changed: bool,
    /// Node entered when the intent was executed; re-entered on change.
    pub owner: Option<NodeIx>,
}

/// Maps with non-string keys travel as lists of pairs.
mod pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<K: Serialize, V: Serialize, S: Serializer>(m: &BTreeMap<K, V>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, K, V, D>(d: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        V: Deserialize<'de>,
        D: Deserializer<'de>,
    {
        Ok(Vec::<(K, V)>::deserialize(d)?.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TurnKind {
    User {
        text: String,
        utterance: Utterance,
        /// Intent recognized in this turn, as filled at the end of the turn.
        intent: Option<IntentInstance>,
    },
    System {
        node: NodeIx,
        messages: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub previous: Option<usize>,
    /// For system turns: the user turn being answered, if any.
    pub response_to: Option<usize>,
    #[serde(flatten)]
    pub kind: TurnKind,
}

impl Turn {
    pub fn is_user(&self) -> bool {
        matches!(self.kind, TurnKind::User { .. })
    }

    pub fn system_node(&self) -> Option<NodeIx> {
        match self.kind {
            TurnKind::System { node, .. } => Some(node),
            TurnKind::User { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub turn: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    pub history: Vec<Turn>,
    pub current_user_step: Option<usize>,
    pub current_system_step: Option<usize>,
    pub current_node: NodeIx,
    pub topic_stack: Vec<NodeIx>,
    pub pending_intent: Option<IntentInstance>,
    pub session_facts: TripleStore,
    pub immediate_chain_depth: usize,
    pub bindings: BTreeMap<String, IndividualId>,
    pub diagnostics: Vec<Diagnostic>,
}

impl DialogueState {
    fn new(initial: NodeIx) -> Self {
        Self {
            history: Vec::new(),
            current_user_step: None,
            current_system_step: None,
            current_node: initial,
            topic_stack: Vec::new(),
            pending_intent: None,
            session_facts: TripleStore::default(),
            immediate_chain_depth: 0,
            bindings: BTreeMap::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn current_utterance(&self) -> Option<&Utterance> {
        match &self.history.get(self.current_user_step?)?.kind {
            TurnKind::User { utterance, .. } => Some(utterance),
            TurnKind::System { .. } => None,
        }
    }

    /// Every message emitted so far, in order.
    pub fn transcript(&self) -> Vec<String> {
        self.history
            .iter()
            .flat_map(|t| match &t.kind {
                TurnKind::System { messages, .. } => messages.clone(),
                TurnKind::User { .. } => Vec::new(),
            })
            .collect()
    }

    /// Structural checks on the history: dense increasing indices, valid
    /// predecessor and response links, and current-step markers on the last
    /// user and system turns.
    pub fn check_history(&self) -> Result<(), String> {
        let mut last_user = None;
        let mut last_system = None;
        for (i, t) in self.history.iter().enumerate() {
            if t.index != i {
                return Err(format!("turn at position {i} has index {}", t.index));
            }
            if t.previous != i.checked_sub(1) {
                return Err(format!("turn {i} links to {:?} as previous", t.previous));
            }
            if t.is_user() {
                if t.response_to.is_some() {
                    return Err(format!("user turn {i} has a response link"));
                }
                last_user = Some(i);
            } else {
                if let Some(r) = t.response_to {
                    if r >= i || !self.history[r].is_user() {
                        return Err(format!("system turn {i} answers {r}, which is not an earlier user turn"));
                    }
                }
                if t.response_to != last_user {
                    return Err(format!("system turn {i} does not answer the latest user turn"));
                }
                last_system = Some(i);
            }
        }
        if self.current_user_step != last_user {
            return Err("current user marker is not on the last user turn".into());
        }
        if self.current_system_step != last_system {
            return Err("current system marker is not on the last system turn".into());
        }
        Ok(())
    }
}

/// What one engine call produced.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct StepOutput {
    pub outputs: Vec<String>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("malformed session document: {0}")]
    Malformed(String),
    #[error("session version '{found}' is not {SESSION_VERSION}")]
    Version { found: String },
    #[error("session refers to {what} {index}, which the model does not have")]
    BadReference { what: &'static str, index: usize },
}

#[derive(Serialize, Deserialize)]
struct SessionDoc {
    version: String,
    state: DialogueState,
}

/// A slot property and its range.
pub type Slot = (PropertyId, ClassId);

/// Compiled model plus ontology; shared by any number of sessions.
#[derive(Debug, Clone)]
pub struct Engine {
    ir: WorkflowIr,
    onto: Ontology,
}

enum Next {
    Stop,
    Goto(NodeIx),
}

impl Engine {
    pub fn new(ir: WorkflowIr, onto: Ontology) -> Self {
        Self { ir, onto }
    }

    pub fn ir(&self) -> &WorkflowIr {
        &self.ir
    }

    pub fn ontology(&self) -> &Ontology {
        &self.onto
    }

    fn facts<'a>(&'a self, state: &'a DialogueState) -> Layered<'a> {
        Layered {
            base: &self.onto.facts,
            overlay: &state.session_facts,
        }
    }

    fn diag(&self, state: &mut DialogueState, out: &mut StepOutput, message: String) {
        state.diagnostics.push(Diagnostic {
            turn: state.current_user_step,
            message: message.clone(),
        });
        out.diagnostics.push(message);
    }

    fn holds(&self, state: &DialogueState, c: &ConditionAst) -> bool {
        let intent = state.pending_intent.as_ref().map(|p| IntentView {
            class: p.intent,
            slots: &p.slots,
        });
        let view = DialogueView {
            utterance: state.current_utterance(),
            intent,
            bindings: Some(&state.bindings),
        };
        eval_condition(c, &self.onto, &self.facts(state), &view)
    }

    fn enabled(&self, state: &DialogueState, node: NodeIx) -> bool {
        self.ir.nodes[node]
            .condition
            .as_ref()
            .is_none_or(|c| self.holds(state, c))
    }

    fn first_edge(&self, state: &DialogueState, node: NodeIx) -> Option<NodeIx> {
        self.ir
            .out_edges(node)
            .find(|e| self.holds(state, &e.condition) && self.enabled(state, e.to))
            .map(|e| e.to)
    }

    pub fn start_session(&self) -> (DialogueState, StepOutput) {
        let mut state = DialogueState::new(self.ir.initial);
        let out = self.enter_node(&mut state, self.ir.initial);
        (state, out)
    }

    pub fn process_utterance(&self, state: &mut DialogueState, text: &str) -> StepOutput {
        let mut out = StepOutput::default();
        state.immediate_chain_depth = 0;
        let utterance = Utterance::new(text, &self.onto.lexicon);
        let index = state.history.len();
        state.history.push(Turn {
            index,
            previous: index.checked_sub(1),
            response_to: None,
            kind: TurnKind::User {
                text: text.to_string(),
                utterance: utterance.clone(),
                intent: None,
            },
        });
        state.current_user_step = Some(index);

        let recognized = self.recognize(state, &utterance);
        if let Some(intent) = recognized {
            state.pending_intent = Some(IntentInstance {
                intent,
                slots: BTreeMap::new(),
                status: IntentStatus::Incomplete,
                changed: true,
                owner: None,
            });
        }
        self.fill_slots(state, &utterance.matches);
        if recognized.is_some() {
            if let TurnKind::User { intent, .. } = &mut state.history[index].kind {
                *intent = state.pending_intent.clone();
            }
        }
        self.extract(state, state.current_node);

        let current = state.current_node;
        let winner = self
            .first_edge(state, current)
            .or_else(|| self.fire_trigger(state))
            .or_else(|| {
                state
                    .pending_intent
                    .as_ref()
                    .filter(|p| p.changed && p.status == IntentStatus::CompletelySpecified)
                    .and_then(|p| p.owner)
            });
        match winner {
            Some(node) => {
                if let Some(p) = &mut state.pending_intent {
                    if p.status == IntentStatus::CompletelySpecified {
                        p.status = IntentStatus::Executed;
                        p.owner = Some(node);
                        p.changed = false;
                    }
                }
                self.run_chain(state, node, &mut out);
            }
            None => {
                let msg = self.ir.config.fallback_message.clone();
                self.push_system(state, current, vec![msg], &mut out);
            }
        }
        out
    }

    fn recognize(&self, state: &DialogueState, utterance: &Utterance) -> Option<ClassId> {
        let facts = self.facts(state);
        self.onto
            .schema
            .intents()
            .iter()
            .find(|d| {
                d.patterns
                    .iter()
                    .any(|g| match_grammar(g, utterance, &self.onto.schema, &facts).is_some())
            })
            .map(|d| d.id)
    }

    /// Required and optional slots of an intent, including those declared on
    /// intent superclasses.
    pub fn intent_slots(&self, intent: ClassId) -> (Vec<Slot>, Vec<Slot>) {
        let mut req = Vec::new();
        let mut opt = Vec::new();
        for d in self.onto.schema.intents() {
            if self.onto.schema.subsumed(intent, d.id) {
                for s in &d.required_slots {
                    if !req.contains(s) {
                        req.push(*s);
                    }
                }
                for s in &d.optional_slots {
                    if !opt.contains(s) {
                        opt.push(*s);
                    }
                }
            }
        }
        opt.retain(|(p, _)| !req.iter().any(|(q, _)| q == p));
        (req, opt)
    }

    /// Fill open slots of the pending intent from mapped terms. A term fills a
    /// slot only when exactly one open slot of the first matching tier
    /// (required, then optional) accepts it; existing fillers are never
    /// replaced. Returns whether any slot was filled.
    pub fn fill_slots(&self, state: &mut DialogueState, matches: &[LexMatch]) -> bool {
        let Some(pending) = &state.pending_intent else {
            return false;
        };
        let (req, opt) = self.intent_slots(pending.intent);
        let mut slots = pending.slots.clone();
        let mut filled = false;
        {
            let facts = self.facts(state);
            for m in matches {
                let open = |tier: &[(PropertyId, ClassId)]| -> Vec<(PropertyId, Value)> {
                    let mut hits: Vec<(PropertyId, Value)> = Vec::new();
                    for &(p, range) in tier {
                        if slots.contains_key(&p) {
                            continue;
                        }
                        if let Some(t) = m
                            .terms
                            .iter()
                            .map(|t| Value::from(*t))
                            .find(|v| self.onto.schema.value_fits(v, range, &facts))
                        {
                            hits.push((p, t));
                        }
                    }
                    hits
                };
                let mut hits = open(&req);
                if hits.is_empty() {
                    hits = open(&opt);
                }
                if let [(p, v)] = hits.as_slice() {
                    slots.insert(*p, v.clone());
                    filled = true;
                }
            }
        }
        let complete = req.iter().all(|(p, _)| slots.contains_key(p));
        let pending = state.pending_intent.as_mut().expect("checked above");
        pending.slots = slots;
        if filled {
            pending.changed = true;
        }
        pending.status = match (complete, pending.status) {
            (false, _) => IntentStatus::Incomplete,
            (true, IntentStatus::Executed) if !filled => IntentStatus::Executed,
            (true, _) => IntentStatus::CompletelySpecified,
        };
        filled
    }

    fn fire_trigger(&self, state: &mut DialogueState) -> Option<NodeIx> {
        let current = state.current_node;
        let cur = &self.ir.nodes[current];
        if !cur.flags.allow_relinquish {
            return None;
        }
        let node = self
            .ir
            .triggers
            .iter()
            .filter(|t| t.node != current)
            .find(|t| self.enabled(state, t.node) && self.holds(state, &t.condition))?
            .node;
        if cur.flags.resume {
            state.topic_stack.push(current);
        }
        Some(node)
    }

    /// Store the first mapped term of the current user turn that fits each
    /// directive's class.
    fn extract(&self, state: &mut DialogueState, node: NodeIx) {
        let Some(utt) = state.current_utterance() else { return };
        let terms: Vec<Term> = utt.terms().collect();
        for x in &self.ir.nodes[node].extract {
            let facts = self.facts(state);
            let found = terms
                .iter()
                .map(|t| Value::from(*t))
                .find(|v| self.onto.schema.value_fits(v, x.class, &facts));
            if let Some(v) = found {
                state.session_facts.assert(x.subject, x.property, v);
            }
        }
    }

    /// Enter `node` and follow any immediate chain from it.
    pub fn enter_node(&self, state: &mut DialogueState, node: NodeIx) -> StepOutput {
        let mut out = StepOutput::default();
        state.immediate_chain_depth = 0;
        self.run_chain(state, node, &mut out);
        out
    }

    fn run_chain(&self, state: &mut DialogueState, mut node: NodeIx, out: &mut StepOutput) {
        while let Next::Goto(next) = self.enter_one(state, node, out) {
            if state.immediate_chain_depth >= self.ir.config.max_immediate_chain {
                let msg = format!(
                    "immediate chain limit of {} reached at node '{}'",
                    self.ir.config.max_immediate_chain, self.ir.nodes[node].id
                );
                self.diag(state, out, msg);
                return;
            }
            state.immediate_chain_depth += 1;
            node = next;
        }
    }

    fn enter_one(&self, state: &mut DialogueState, node: NodeIx, out: &mut StepOutput) -> Next {
        state.current_node = node;
        let n = &self.ir.nodes[node];
        if !n.flags.modal {
            self.extract(state, node);
        }
        if let Some(sel) = &n.select {
            match self.select(state, node) {
                Some(i) => {
                    state.bindings.insert(sel.var.clone(), i);
                }
                None => {
                    state.bindings.remove(&sel.var);
                    let msg = format!(
                        "node '{}': no {} satisfies the select constraints",
                        n.id,
                        self.onto.schema.class_name(sel.class)
                    );
                    self.diag(state, out, msg);
                }
            }
        }
        self.emit_messages(state, node, out);
        if n.flags.topic_end && n.flags.end_behavior == EndBehavior::Return {
            if let Some(resumed) = state.topic_stack.pop() {
                state.current_node = resumed;
                self.emit_messages(state, resumed, out);
                return Next::Stop;
            }
        }
        if n.flags.modal {
            return Next::Stop;
        }
        match self.first_edge(state, node) {
            Some(next) => Next::Goto(next),
            None => {
                let msg = format!("immediate node '{}' has no enabled transition", n.id);
                self.diag(state, out, msg);
                Next::Stop
            }
        }
    }

    fn emit_messages(&self, state: &mut DialogueState, node: NodeIx, out: &mut StepOutput) {
        let n: &IrNode = &self.ir.nodes[node];
        if n.messages.is_empty() {
            return;
        }
        let mut rendered = Vec::with_capacity(n.messages.len());
        for t in &n.messages {
            let (text, diags) = self.render_message(state, t);
            for d in diags {
                self.diag(state, out, format!("node '{}': {d}", n.id));
            }
            rendered.push(text);
        }
        self.push_system(state, node, rendered, out);
    }

    fn push_system(&self, state: &mut DialogueState, node: NodeIx, messages: Vec<String>, out: &mut StepOutput) {
        let index = state.history.len();
        out.outputs.extend(messages.iter().cloned());
        state.history.push(Turn {
            index,
            previous: index.checked_sub(1),
            response_to: state.current_user_step,
            kind: TurnKind::System { node, messages },
        });
        state.current_system_step = Some(index);
    }

    /// First instance of the select class, in declaration order, whose fillers
    /// meet every constraint. Constraints on unfilled slots are skipped.
    fn select(&self, state: &DialogueState, node: NodeIx) -> Option<IndividualId> {
        let sel = self.ir.nodes[node].select.as_ref()?;
        let schema = &self.onto.schema;
        let facts = self.facts(state);
        let targets: Vec<(PropertyId, Value)> = sel
            .constraints
            .iter()
            .filter_map(|(p, v)| {
                let target = match v {
                    SelectValue::Slot(s) => state.pending_intent.as_ref()?.slots.get(s)?.clone(),
                    SelectValue::Term(t) => Value::from(*t),
                    SelectValue::Literal(l) => Value::Literal(l.clone()),
                };
                Some((*p, target))
            })
            .collect();
        self.onto
            .facts
            .instances()
            .map(|(i, _)| i)
            .filter(|&i| schema.instance_of(i, sel.class, &facts))
            .find(|&i| {
                targets.iter().all(|(p, target)| {
                    schema.fillers_unchecked(i, *p, &facts).iter().any(|f| {
                        f == target || matches!(target, Value::Class(c) if schema.value_fits(f, *c, &facts))
                    })
                })
            })
    }

    /// Fill template holes from the session and domain facts. Holes without
    /// a value render as the configured placeholder and yield a diagnostic.
    pub fn render_message(&self, state: &DialogueState, t: &IrTemplate) -> (String, Vec<String>) {
        let mut text = String::new();
        let mut diags = Vec::new();
        for seg in &t.segments {
            match seg {
                IrSegment::Text(s) => text.push_str(s),
                IrSegment::Hole(p) => {
                    let shown = print_path(p, &self.onto);
                    match eval_path(p, &self.onto.schema, &self.facts(state), &state.bindings) {
                        Ok(r) => match r.witnesses.iter().next() {
                            Some(v) => text.push_str(&self.onto.display_value(v)),
                            None => {
                                diags.push(format!("hole {shown} has no value"));
                                text.push_str(&self.ir.config.placeholder);
                            }
                        },
                        Err(e) => {
                            diags.push(format!("hole {shown}: {e}"));
                            text.push_str(&self.ir.config.placeholder);
                        }
                    }
                }
            }
        }
        (text, diags)
    }

    pub fn save_session(&self, state: &DialogueState) -> String {
        let doc = SessionDoc {
            version: SESSION_VERSION.to_string(),
            state: state.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("session serializes")
    }

    pub fn load_session(&self, text: &str) -> Result<DialogueState, SessionError> {
        let raw: Json = serde_json::from_str(text).map_err(|e| SessionError::Malformed(e.to_string()))?;
        let found = raw.get("version").and_then(Json::as_str).unwrap_or_default();
        if found != SESSION_VERSION {
            return Err(SessionError::Version {
                found: found.to_string(),
            });
        }
        let doc: SessionDoc = serde_json::from_value(raw).map_err(|e| SessionError::Malformed(e.to_string()))?;
        self.validate(&doc.state)?;
        Ok(doc.state)
    }

    fn validate(&self, s: &DialogueState) -> Result<(), SessionError> {
        let nodes = self.ir.nodes.len();
        let classes = self.onto.schema.classes().count();
        let props = self.onto.schema.properties().count();
        let insts = self.onto.facts.instances().count();
        let check = |what, index: usize, bound: usize| {
            if index < bound {
                Ok(())
            } else {
                Err(SessionError::BadReference { what, index })
            }
        };
        check("node", s.current_node, nodes)?;
        for &n in &s.topic_stack {
            check("node", n, nodes)?;
            if !self.ir.nodes[n].flags.resume {
                return Err(SessionError::BadReference { what: "resumable node", index: n });
            }
        }
        for t in &s.history {
            if let Some(n) = t.system_node() {
                check("node", n, nodes)?;
            }
        }
        let intents = s.pending_intent.iter().chain(s.history.iter().filter_map(|t| match &t.kind {
            TurnKind::User { intent, .. } => intent.as_ref(),
            TurnKind::System { .. } => None,
        }));
        for i in intents {
            check("class", i.intent.index(), classes)?;
            if let Some(o) = i.owner {
                check("node", o, nodes)?;
            }
            for (p, v) in &i.slots {
                check("property", p.index(), props)?;
                self.check_value(v, classes, insts)?;
            }
        }
        for (subject, p, v) in s.session_facts.iter() {
            check("instance", subject.index(), insts)?;
            check("property", p.index(), props)?;
            self.check_value(v, classes, insts)?;
        }
        for i in s.bindings.values() {
            check("instance", i.index(), insts)?;
        }
        if let Some(u) = s.current_user_step {
            check("turn", u, s.history.len())?;
        }
        if let Some(t) = s.current_system_step {
            check("turn", t, s.history.len())?;
        }
        s.check_history().map_err(SessionError::Malformed)
    }

    fn check_value(&self, v: &Value, classes: usize, insts: usize) -> Result<(), SessionError> {
        match v {
            Value::Individual(i) if i.index() >= insts => Err(SessionError::BadReference {
                what: "instance",
                index: i.index(),
            }),
            Value::Class(c) if c.index() >= classes => Err(SessionError::BadReference {
                what: "class",
                index: c.index(),
            }),
            _ => Ok(()),
        }
    }

    pub fn node_id(&self, ix: NodeIx) -> &str {
        &self.ir.nodes[ix].id
    }

    pub fn intent_view(&self, i: &IntentInstance) -> Json {
        let schema = &self.onto.schema;
        let (req, opt) = self.intent_slots(i.intent);
        let slot = |(p, range): &(PropertyId, ClassId)| {
            json!({
                "slot": schema.property_name(*p),
                "range": schema.class_name(*range),
                "value": i.slots.get(p).map(|v| self.onto.value_name(v)),
            })
        };
        json!({
            "intent": schema.class_name(i.intent),
            "status": i.status.as_str(),
            "changed": i.changed,
            "owner": i.owner.map(|o| self.node_id(o)),
            "required": req.iter().map(slot).collect::<Vec<_>>(),
            "optional": opt.iter().map(slot).collect::<Vec<_>>(),
        })
    }

    /// Current node, topic stack and pending intent, by name.
    pub fn summary_view(&self, s: &DialogueState) -> Json {
        json!({
            "current_node": self.node_id(s.current_node),
            "topic_stack": s.topic_stack.iter().map(|&n| self.node_id(n)).collect::<Vec<_>>(),
            "pending_intent": s.pending_intent.as_ref().map(|i| self.intent_view(i)),
        })
    }

    /// The summary plus history, bindings, session facts and diagnostics.
    pub fn state_view(&self, s: &DialogueState) -> Json {
        let history: Vec<Json> = s
            .history
            .iter()
            .map(|t| match &t.kind {
                TurnKind::User { text, utterance, intent } => json!({
                    "index": t.index,
                    "kind": "user",
                    "text": text,
                    "tokens": utterance.tokens,
                    "terms": utterance.terms().map(|x| self.onto.term_name(x)).collect::<Vec<_>>(),
                    "intent": intent.as_ref().map(|i| self.onto.schema.class_name(i.intent)),
                    "current": s.current_user_step == Some(t.index),
                }),
                TurnKind::System { node, messages } => json!({
                    "index": t.index,
                    "kind": "system",
                    "node": self.node_id(*node),
                    "messages": messages,
                    "response_to": t.response_to,
                    "current": s.current_system_step == Some(t.index),
                }),
            })
            .collect();
        let mut view = self.summary_view(s);
        view["history"] = json!(history);
        view["bindings"] = s
            .bindings
            .iter()
            .map(|(k, v)| (k.clone(), json!(self.onto.facts.individual_name(*v))))
            .collect::<serde_json::Map<_, _>>()
            .into();
        view["session_facts"] = s
            .session_facts
            .iter()
            .map(|(i, p, v)| {
                json!([
                    self.onto.facts.individual_name(i),
                    self.onto.schema.property_name(p),
                    self.onto.value_name(v)
                ])
            })
            .collect::<Vec<_>>()
            .into();
        view["diagnostics"] = s.diagnostics.iter().map(|d| json!(d.message)).collect::<Vec<_>>().into();
        view
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile_source, CompileOptions};
    use crate::ontology::load_ontology;

    const ONTO: &str = r#"
        (defclass Greeting (:lexical "hello" "hi"))
        (defclass Yes (:lexical "yes"))
        (defclass Cuisine)
        (defclass ChineseCuisine (:is-a Cuisine) (:lexical "chinese"))
        (defclass ItalianCuisine (:is-a Cuisine) (:lexical "italian"))
        (defclass City)
        (defclass Restaurant (:lexical "restaurant"))
        (defclass Person)
        (defproperty location (:kind object) (:range City))
        (defproperty cuisine (:kind object) (:range Cuisine))
        (defproperty favourite (:kind object) (:range Cuisine))
        (defproperty name (:kind data))
        (definstance PaloAlto (:type City) (:lexical "palo alto"))
        (definstance Berlin (:type City))
        (definstance Luigis (:type Restaurant) (:props (name "Luigi's") (location Berlin) (cuisine ItalianCuisine)))
        (definstance currentUser (:type Person))
        (defintent FindRestaurantIntent
          (:required (location City))
          (:optional (cuisine Cuisine))
          (:patterns Restaurant))
        (defintent AmbiguousIntent (:optional (cuisine Cuisine) (favourite Cuisine)) (:patterns (Greeting Yes)))
    "#;

    fn engine(src: &str) -> Engine {
        let onto = load_ontology(ONTO).unwrap();
        let c = compile_source(src, &onto, CompileOptions { allow_immediate_cycles: true }).unwrap();
        Engine::new(c.ir, onto)
    }

    #[test]
    fn start_emits_initial_messages() {
        let e = engine(r#"(defnode s (:message "Hello." "Ready."))"#);
        let (st, out) = e.start_session();
        assert_eq!(out.outputs, ["Hello.", "Ready."]);
        assert_eq!(st.history.len(), 1);
        assert_eq!(st.current_system_step, Some(0));
        st.check_history().unwrap();
    }

    #[test]
    fn silent_modal_start() {
        let e = engine("(defnode s)");
        let (st, out) = e.start_session();
        assert!(out.outputs.is_empty() && st.history.is_empty());
    }

    #[test]
    fn fallback_stays_put() {
        let e = engine(r#"(defconfig (:fallback-message "Pardon?")) (defnode s (:transition (Yes t))) (defnode t (:message "ok"))"#);
        let (mut st, _) = e.start_session();
        assert_eq!(e.process_utterance(&mut st, "nope").outputs, ["Pardon?"]);
        assert_eq!(st.current_node, 0);
        assert_eq!(e.process_utterance(&mut st, "yes").outputs, ["ok"]);
        assert_eq!(st.current_node, 1);
        st.check_history().unwrap();
    }

    #[test]
    fn target_node_condition_gates_edges() {
        let e = engine(
            r#"(defnode s (:transition (Yes blocked) (Yes open)))
               (defnode blocked (:condition Greeting) (:message "blocked"))
               (defnode open (:message "open"))"#,
        );
        let (mut st, _) = e.start_session();
        assert_eq!(e.process_utterance(&mut st, "yes").outputs, ["open"]);
    }

    #[test]
    fn slot_filling_never_overwrites() {
        let e = engine("(defnode s)");
        let (mut st, _) = e.start_session();
        e.process_utterance(&mut st, "a restaurant in palo alto");
        let p = st.pending_intent.clone().unwrap();
        let loc = e.ontology().schema.property("location").unwrap();
        let palo = e.ontology().facts.individual("PaloAlto").unwrap();
        assert_eq!(p.slots[&loc], Value::Individual(palo));
        assert_eq!(p.status, IntentStatus::CompletelySpecified);
        let lex = &e.ontology().lexicon;
        let berlin = Utterance::new("berlin", lex);
        assert!(!e.fill_slots(&mut st, &berlin.matches));
        assert_eq!(st.pending_intent.as_ref().unwrap().slots[&loc], Value::Individual(palo));
    }

    #[test]
    fn ambiguous_fill_is_skipped() {
        let e = engine("(defnode s)");
        let (mut st, _) = e.start_session();
        e.process_utterance(&mut st, "hi yes");
        assert!(st.pending_intent.as_ref().unwrap().slots.is_empty());
        let chinese = Utterance::new("chinese", &e.ontology().lexicon);
        assert!(!e.fill_slots(&mut st, &chinese.matches));
        let nothing = Utterance::new("zzz", &e.ontology().lexicon);
        let before = st.clone();
        assert!(!e.fill_slots(&mut st, &nothing.matches));
        assert_eq!(st.pending_intent, before.pending_intent);
    }

    #[test]
    fn select_and_render() {
        let e = engine(
            r#"(defnode s (:select ($r Restaurant (location Berlin)))
                 (:message "Try {((:ind $r) (name))}." "{((:ind $x) (name))}" "{((:ind currentUser) (name))}"))"#,
        );
        let (st, out) = e.start_session();
        assert_eq!(out.outputs, ["Try Luigi's.", "⟨?⟩", "⟨?⟩"]);
        assert_eq!(out.diagnostics.len(), 2);
        assert_eq!(st.diagnostics.len(), 2);
    }

    #[test]
    fn failed_select_unbinds() {
        let e = engine(r#"(defnode s (:select ($r Restaurant (location PaloAlto))) (:message "{((:ind $r) (name))}"))"#);
        let (_, out) = e.start_session();
        assert_eq!(out.outputs, ["⟨?⟩"]);
        assert_eq!(out.diagnostics.len(), 2);
    }

    #[test]
    fn immediate_chain_limit() {
        let e = engine(
            r#"(defconfig (:max-immediate-chain 5))
               (defnode s (:immediate) (:transition (true a)))
               (defnode a (:immediate) (:message "a") (:transition (true b)))
               (defnode b (:immediate) (:transition (true a)))"#,
        );
        let (mut st, out) = e.start_session();
        assert_eq!(st.immediate_chain_depth, 5);
        assert_eq!(out.diagnostics.len(), 1);
        assert!(out.diagnostics[0].contains("limit"));
        // Still usable afterwards.
        let out = e.process_utterance(&mut st, "hello");
        assert_eq!(out.diagnostics.len(), 1);
        assert!(st.immediate_chain_depth <= 5);
    }

    #[test]
    fn session_round_trip_and_corruption() {
        let e = engine(r#"(defnode s (:message "hi") (:transition (Restaurant t))) (defnode t (:message "{(Restaurant (name))}"))"#);
        let (mut st, _) = e.start_session();
        e.process_utterance(&mut st, "restaurant in palo alto");
        let doc = e.save_session(&st);
        let back = e.load_session(&doc).unwrap();
        assert_eq!(back, st);

        let fresh = e.start_session().0;
        assert_eq!(e.load_session(&e.save_session(&fresh)).unwrap(), fresh);

        let mut bad: Json = serde_json::from_str(&doc).unwrap();
        bad["state"]["current_node"] = json!(99);
        assert!(matches!(
            e.load_session(&bad.to_string()),
            Err(SessionError::BadReference { what: "node", index: 99 })
        ));
        let mut old: Json = serde_json::from_str(&doc).unwrap();
        old["version"] = json!("dwg-session/0");
        assert!(matches!(e.load_session(&old.to_string()), Err(SessionError::Version { .. })));
        assert!(matches!(e.load_session("{"), Err(SessionError::Malformed(_))));
    }

    #[test]
    fn views_use_names() {
        let e = engine(r#"(defnode s (:message "hi"))"#);
        let (mut st, _) = e.start_session();
        e.process_utterance(&mut st, "restaurant");
        let v = e.state_view(&st);
        assert_eq!(v["current_node"], "s");
        assert_eq!(v["pending_intent"]["intent"], "FindRestaurantIntent");
        assert_eq!(v["pending_intent"]["required"][0]["slot"], "location");
        assert_eq!(v["history"][1]["terms"][0], "Restaurant");
        assert_eq!(v["history"][2]["response_to"], 1);
    }
}
