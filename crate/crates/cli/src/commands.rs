//! Subcommand bodies. Each returns a process exit code and writes results to
//! `out`, diagnostics to `err`.

use std::io::{BufRead, IsTerminal, Write};
use std::path::Path;

use dwg_core::compiler::{
    compute_metrics, emit_dot, ir_to_json, CompileOptions, ModelMetrics, HOURS_PER_NODE, HOURS_PER_RULE,
};
use dwg_core::replay::{parse_script, run_script};
use dwg_core::runtime::{DialogueState, Engine, StepOutput, TurnKind};

use crate::load::{compile_files, engine_from_files, located, read_file, warnings, LoadError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_LOAD: i32 = 1;
pub const EXIT_MISMATCH: i32 = 2;

pub struct Inputs<'a> {
    pub model: &'a Path,
    pub ontology: &'a Path,
    pub options: CompileOptions,
}

fn fail(err: &mut dyn Write, e: LoadError) -> i32 {
    let _ = writeln!(err, "{e}");
    EXIT_LOAD
}

fn warn_all(err: &mut dyn Write, warnings: &[String]) {
    for w in warnings {
        let _ = writeln!(err, "{w}");
    }
}

/// Metrics as one table row in the column order #Nodes, #Rules saved,
/// #Assertions, RpN, ApN, followed by the effort estimate.
pub fn metrics_table(m: &ModelMetrics) -> String {
    let header = ["#Nodes", "#Rules saved", "#Assertions", "RpN", "ApN"];
    let row = [
        m.node_count.to_string(),
        m.rules_saved.to_string(),
        m.assertion_count.to_string(),
        m.rpn_display(),
        m.apn_display(),
    ];
    let widths: Vec<usize> = header.iter().zip(&row).map(|(h, r)| h.len().max(r.len())).collect();
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut s = String::new();
    s.push_str(&line(header.to_vec()));
    s.push('\n');
    s.push_str(&line(row.iter().map(String::as_str).collect()));
    s.push('\n');
    s.push_str(&format!(
        "LOE rules: {} x {HOURS_PER_RULE} h = {:.2} h\n",
        m.rules_saved, m.loe_rule_hours
    ));
    s.push_str(&format!(
        "LOE DSL:   {} x {HOURS_PER_NODE} h = {:.2} h\n",
        m.node_count, m.loe_dsl_hours
    ));
    s.push_str(&format!("LOE reduction: {}\n", m.reduction_display()));
    s
}

pub fn compile(inputs: &Inputs, ir_out: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let (c, onto) = match compile_files(inputs.model, inputs.ontology, inputs.options) {
        Ok(x) => x,
        Err(e) => return fail(err, e),
    };
    warn_all(err, &warnings(inputs.model, &c.warnings));
    let doc = serde_json::to_string_pretty(&ir_to_json(&c.ir, &onto)).expect("IR serializes");
    if let Err(e) = std::fs::write(ir_out, doc + "\n") {
        return fail(err, LoadError(format!("{}: {e}", ir_out.display())));
    }
    let _ = write!(out, "{}", metrics_table(&compute_metrics(&c.ir, &onto)));
    EXIT_OK
}

/// Writes DOT to `dot_out`, or to `out` when no path is given.
pub fn viz(inputs: &Inputs, dot_out: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let (c, onto) = match compile_files(inputs.model, inputs.ontology, inputs.options) {
        Ok(x) => x,
        Err(e) => return fail(err, e),
    };
    warn_all(err, &warnings(inputs.model, &c.warnings));
    let dot = emit_dot(&c.ir, &onto);
    match dot_out {
        Some(p) => {
            if let Err(e) = std::fs::write(p, dot) {
                return fail(err, LoadError(format!("{}: {e}", p.display())));
            }
        }
        None => {
            let _ = out.write_all(dot.as_bytes());
        }
    }
    EXIT_OK
}

pub fn validate(inputs: &Inputs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match compile_files(inputs.model, inputs.ontology, inputs.options) {
        Ok((c, _)) => {
            warn_all(err, &warnings(inputs.model, &c.warnings));
            let _ = writeln!(out, "{}: ok ({} nodes)", inputs.model.display(), c.ir.nodes.len());
            EXIT_OK
        }
        Err(e) => fail(err, e),
    }
}

pub fn replay(inputs: &Inputs, script: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let (engine, warnings) = match engine_from_files(inputs.model, inputs.ontology, inputs.options) {
        Ok(x) => x,
        Err(e) => return fail(err, e),
    };
    warn_all(err, &warnings);
    let text = match read_file(script) {
        Ok(t) => t,
        Err(e) => return fail(err, e),
    };
    let parsed = match parse_script(&text) {
        Ok(s) => s,
        Err(e) => return fail(err, LoadError(located(script, None, &e.to_string()))),
    };
    let report = run_script(&engine, &parsed);
    let _ = write!(out, "{}", report.transcript_text());
    for f in &report.failures {
        let _ = writeln!(err, "{}:{f}", script.display());
    }
    let _ = writeln!(
        err,
        "{} expectation(s), {} failure(s)",
        report.expectations,
        report.failures.len()
    );
    if report.passed() {
        EXIT_OK
    } else {
        EXIT_MISMATCH
    }
}

fn print_history(engine: &Engine, state: &DialogueState, out: &mut dyn Write) {
    for t in &state.history {
        match &t.kind {
            TurnKind::User { text, .. } => {
                let _ = writeln!(out, "[{}] U: {text}", t.index);
            }
            TurnKind::System { node, messages } => {
                for m in messages {
                    let _ = writeln!(out, "[{}] S({}): {m}", t.index, engine.node_id(*node));
                }
            }
        }
    }
}

fn show(step: StepOutput, out: &mut dyn Write, err: &mut dyn Write) {
    for o in step.outputs {
        let _ = writeln!(out, "{o}");
    }
    for d in step.diagnostics {
        let _ = writeln!(err, "diagnostic: {d}");
    }
}

/// Read-evaluate loop. Meta-commands: `:state`, `:history`, `:quit`.
pub fn run(inputs: &Inputs, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let (engine, warnings) = match engine_from_files(inputs.model, inputs.ontology, inputs.options) {
        Ok(x) => x,
        Err(e) => return fail(err, e),
    };
    warn_all(err, &warnings);
    let prompt = std::io::stdin().is_terminal();
    let (mut state, start) = engine.start_session();
    show(start, out, err);
    let mut line = String::new();
    loop {
        if prompt {
            let _ = write!(out, "> ");
            let _ = out.flush();
        }
        line.clear();
        match input.read_line(&mut line) {
            Ok(0) => return EXIT_OK,
            Ok(_) => {}
            Err(e) => {
                let _ = writeln!(err, "stdin: {e}");
                return EXIT_LOAD;
            }
        }
        let text = line.trim();
        match text {
            "" => {}
            ":quit" | ":q" => return EXIT_OK,
            ":state" => {
                let view = serde_json::to_string_pretty(&engine.summary_view(&state)).expect("view serializes");
                let _ = writeln!(out, "{view}");
            }
            ":history" => print_history(&engine, &state, out),
            _ if text.starts_with(':') => {
                let _ = writeln!(err, "unknown command {text}; try :state, :history or :quit");
            }
            _ => show(engine.process_utterance(&mut state, text), out, err),
        }
    }
}
