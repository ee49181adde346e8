use std::io::ErrorKind;
use std::path::Path;

use dwg_core::compiler::{compile_source, CompileOptions, CompileWarning, Compiled};
use dwg_core::ontology::{load_ontology, Ontology};
use dwg_core::runtime::Engine;
use dwg_core::sexpr::Loc;

/// A fully formatted `file:line:col: message` diagnostic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadError(pub String);

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for LoadError {}

pub fn located(path: &Path, loc: Option<Loc>, message: &str) -> String {
    let path = path.display();
    match loc {
        Some(loc) if message.starts_with(&format!("{loc}:")) => format!("{path}:{message}"),
        Some(loc) => format!("{path}:{loc}: {message}"),
        None => format!("{path}: {message}"),
    }
}

pub fn read_file(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|e| {
        LoadError(match e.kind() {
            ErrorKind::NotFound => format!("{}: no such file", path.display()),
            _ => format!("{}: {e}", path.display()),
        })
    })
}

pub fn ontology_file(path: &Path) -> Result<Ontology, LoadError> {
    let src = read_file(path)?;
    load_ontology(&src).map_err(|e| LoadError(located(path, e.loc(), &e.to_string())))
}

pub fn warnings(model: &Path, ws: &[CompileWarning]) -> Vec<String> {
    ws.iter()
        .map(|w| {
            let text = w.to_string();
            match w.loc() {
                Some(loc) => {
                    let rest = text.strip_prefix(&format!("{loc}: ")).unwrap_or(&text);
                    format!("{}:{loc}: warning: {rest}", model.display())
                }
                None => format!("{}: warning: {text}", model.display()),
            }
        })
        .collect()
}

/// Load the ontology and compile the model against it.
pub fn compile_files(model: &Path, ontology: &Path, opts: CompileOptions) -> Result<(Compiled, Ontology), LoadError> {
    let onto = ontology_file(ontology)?;
    let src = read_file(model)?;
    let compiled = compile_source(&src, &onto, opts).map_err(|e| LoadError(located(model, e.loc(), &e.to_string())))?;
    Ok((compiled, onto))
}

pub fn engine_from_files(model: &Path, ontology: &Path, opts: CompileOptions) -> Result<(Engine, Vec<String>), LoadError> {
    let (c, onto) = compile_files(model, ontology, opts)?;
    let warnings = warnings(model, &c.warnings);
    Ok((Engine::new(c.ir, onto), warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn location_prefixes() {
        let p = Path::new("m.dwg");
        let loc = Some(Loc { line: 3, col: 7 });
        assert_eq!(located(p, loc, "3:7: bad"), "m.dwg:3:7: bad");
        assert_eq!(located(p, loc, "bad"), "m.dwg:3:7: bad");
        assert_eq!(located(p, None, "bad"), "m.dwg: bad");
    }

    #[test]
    fn missing_file() {
        let e = read_file(Path::new("/nonexistent/x.dwg")).unwrap_err();
        assert_eq!(e.0, "/nonexistent/x.dwg: no such file");
    }
}
