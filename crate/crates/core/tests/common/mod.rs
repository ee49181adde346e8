#![allow(dead_code)]

pub mod dot;
pub mod single_rule;
pub mod grammar;

use std::path::PathBuf;

use dwg_core::compiler::{compile_source, CompileOptions, Compiled};
use dwg_core::ontology::{load_ontology, Ontology};
use dwg_core::replay::{parse_script, run_script, ReplayReport};
use dwg_core::runtime::Engine;

pub fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

pub fn read(rel: &str) -> String {
    let p = models_dir().join(rel);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

pub fn ontology(rel: &str) -> Ontology {
    load_ontology(&read(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn build(onto_rel: &str, dwg_rel: &str, opts: CompileOptions) -> (Compiled, Ontology) {
    let onto = ontology(onto_rel);
    let c = compile_source(&read(dwg_rel), &onto, opts).unwrap_or_else(|e| panic!("{dwg_rel}: {e}"));
    (c, onto)
}

pub fn engine(onto_rel: &str, dwg_rel: &str) -> Engine {
    let (c, onto) = build(onto_rel, dwg_rel, CompileOptions::default());
    Engine::new(c.ir, onto)
}

pub fn replay(engine: &Engine, script_rel: &str) -> ReplayReport {
    let script = parse_script(&read(script_rel)).unwrap_or_else(|e| panic!("{script_rel}: {e}"));
    run_script(engine, &script)
}

pub fn restaurant() -> Engine {
    engine("restaurant/restaurant.onto", "restaurant/restaurant.dwg")
}

pub fn medic() -> Engine {
    engine("medic/medic.onto", "medic/medic.dwg")
}

/// System outputs of one dialogue, flattened.
pub fn run_dialogue(engine: &Engine, utterances: &[&str]) -> Vec<String> {
    let (mut state, start) = engine.start_session();
    let mut out = start.outputs;
    for u in utterances {
        out.extend(engine.process_utterance(&mut state, u).outputs);
    }
    out
}
