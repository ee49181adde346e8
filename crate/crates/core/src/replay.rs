//! Scripted dialogues.
//!
//! ```text
//! # comment
//! E: Hello          the next output contains "Hello"
//! U: I need a table
//! E=: In what city? the next output is exactly "In what city?"
//! ```
//!
//! Expectations consume the outputs of the most recent step (the session
//! start, or the last `U:` line) in order.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::runtime::{DialogueState, Engine};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptLine {
    User(String),
    Expect { text: String, exact: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Script {
    /// 1-based source line and its content.
    pub lines: Vec<(usize, ScriptLine)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

pub fn parse_script(text: &str) -> Result<Script, ScriptError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (tag, rest) = line.split_once(':').ok_or_else(|| ScriptError {
            line: i + 1,
            message: format!("expected 'U:', 'E:' or 'E=:', found '{line}'"),
        })?;
        let rest = rest.strip_prefix(' ').unwrap_or(rest).to_string();
        let parsed = match tag {
            "U" => ScriptLine::User(rest),
            "E" => ScriptLine::Expect { text: rest, exact: false },
            "E=" => ScriptLine::Expect { text: rest, exact: true },
            other => {
                return Err(ScriptError {
                    line: i + 1,
                    message: format!("unknown line tag '{other}'"),
                })
            }
        };
        lines.push((i + 1, parsed));
    }
    Ok(Script { lines })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Entry {
    User(String),
    System(String),
    Diagnostic(String),
}

impl fmt::Display for Entry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entry::User(t) => write!(f, "U: {t}"),
            Entry::System(t) => write!(f, "S: {t}"),
            Entry::Diagnostic(t) => write!(f, "!: {t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub line: usize,
    /// Number of user turns processed so far; 0 means the session start.
    pub turn: usize,
    pub expected: String,
    pub exact: bool,
    /// `None` when no output was left to compare against.
    pub actual: Option<String>,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let how = if self.exact { "exactly" } else { "containing" };
        write!(f, "line {}, turn {}: expected output {how} {:?}, ", self.line, self.turn, self.expected)?;
        match &self.actual {
            Some(a) => write!(f, "got {a:?}"),
            None => write!(f, "got no further output"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub transcript: Vec<Entry>,
    pub failures: Vec<Failure>,
    pub expectations: usize,
    pub state: DialogueState,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn transcript_text(&self) -> String {
        self.transcript.iter().map(|e| format!("{e}\n")).collect()
    }
}

pub fn run_script(engine: &Engine, script: &Script) -> ReplayReport {
    let (mut state, start) = engine.start_session();
    let mut transcript = Vec::new();
    let mut pending: VecDeque<String> = VecDeque::new();
    let record = |out: crate::runtime::StepOutput, transcript: &mut Vec<Entry>, pending: &mut VecDeque<String>| {
        transcript.extend(out.outputs.iter().cloned().map(Entry::System));
        transcript.extend(out.diagnostics.into_iter().map(Entry::Diagnostic));
        *pending = out.outputs.into();
    };
    record(start, &mut transcript, &mut pending);
    let mut failures = Vec::new();
    let mut expectations = 0;
    let mut turn = 0;
    for (line, item) in &script.lines {
        match item {
            ScriptLine::User(text) => {
                turn += 1;
                transcript.push(Entry::User(text.clone()));
                let out = engine.process_utterance(&mut state, text);
                record(out, &mut transcript, &mut pending);
            }
            ScriptLine::Expect { text, exact } => {
                expectations += 1;
                let actual = pending.pop_front();
                let ok = actual
                    .as_deref()
                    .is_some_and(|a| if *exact { a == text } else { a.contains(text.as_str()) });
                if !ok {
                    failures.push(Failure {
                        line: *line,
                        turn,
                        expected: text.clone(),
                        exact: *exact,
                        actual,
                    });
                }
            }
        }
    }
    ReplayReport {
        transcript,
        failures,
        expectations,
        state,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile_source, CompileOptions};
    use crate::ontology::load_ontology;

    fn engine() -> Engine {
        let onto = load_ontology("(defclass Yes (:lexical \"yes\"))").unwrap();
        let src = r#"(defnode s (:message "Hello there." "Say yes.") (:transition (Yes t))) (defnode t (:message "Done."))"#;
        let c = compile_source(src, &onto, CompileOptions::default()).unwrap();
        Engine::new(c.ir, onto)
    }

    #[test]
    fn parse_lines() {
        let s = parse_script("# intro\nE: Hello\n\nU: yes please\nE=: Done.\n").unwrap();
        assert_eq!(
            s.lines,
            vec![
                (2, ScriptLine::Expect { text: "Hello".into(), exact: false }),
                (4, ScriptLine::User("yes please".into())),
                (5, ScriptLine::Expect { text: "Done.".into(), exact: true }),
            ]
        );
        assert_eq!(parse_script("X: what").unwrap_err().line, 1);
        assert_eq!(parse_script("hello").unwrap_err().line, 1);
        assert_eq!(parse_script("").unwrap(), Script::default());
    }

    #[test]
    fn expectations_consume_in_order() {
        let e = engine();
        let r = run_script(&e, &parse_script("E: Hello\nE=: Say yes.\nU: yes\nE=: Done.").unwrap());
        assert!(r.passed(), "{:?}", r.failures);
        assert_eq!(r.expectations, 3);
        assert_eq!(r.transcript_text(), "S: Hello there.\nS: Say yes.\nU: yes\nS: Done.\n");
    }

    #[test]
    fn mismatches_are_reported() {
        let e = engine();
        let r = run_script(&e, &parse_script("U: yes\nE=: Done\nE: more").unwrap());
        assert_eq!(r.failures.len(), 2);
        assert_eq!(r.failures[0].actual.as_deref(), Some("Done."));
        assert_eq!((r.failures[0].line, r.failures[0].turn), (2, 1));
        assert_eq!(r.failures[1].actual, None);
        assert!(r.failures[1].to_string().contains("no further output"));
    }

    #[test]
    fn empty_script_passes() {
        assert!(run_script(&engine(), &Script::default()).passed());
    }
}
