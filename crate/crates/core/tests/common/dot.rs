//! Minimal DOT reader: enough to check what the emitter writes.

#[derive(Debug, PartialEq)]
pub enum Tok {
    Id(String),
    Punct(&'static str),
}

fn lex(src: &str) -> Vec<Tok> {
    let mut out = Vec::new();
    let mut it = src.chars().peekable();
    while let Some(c) = it.next() {
        match c {
            c if c.is_whitespace() => {}
            '"' => {
                let mut s = String::new();
                loop {
                    match it.next().expect("unterminated string") {
                        '"' => break,
                        '\\' => s.push(it.next().expect("dangling escape")),
                        ch => s.push(ch),
                    }
                }
                out.push(Tok::Id(s));
            }
            '-' if it.peek() == Some(&'>') => {
                it.next();
                out.push(Tok::Punct("->"));
            }
            '{' => out.push(Tok::Punct("{")),
            '}' => out.push(Tok::Punct("}")),
            '[' => out.push(Tok::Punct("[")),
            ']' => out.push(Tok::Punct("]")),
            '=' => out.push(Tok::Punct("=")),
            ';' => out.push(Tok::Punct(";")),
            ',' => out.push(Tok::Punct(",")),
            c if c.is_alphanumeric() || c == '_' => {
                let mut s = c.to_string();
                while let Some(&n) = it.peek().filter(|n| n.is_alphanumeric() || **n == '_' || **n == '.') {
                    s.push(n);
                    it.next();
                }
                out.push(Tok::Id(s));
            }
            other => panic!("unexpected character {other:?}"),
        }
    }
    out
}

pub type Attrs = Vec<(String, String)>;

#[derive(Debug, Default)]
pub struct Graph {
    pub nodes: Vec<(String, Attrs)>,
    pub edges: Vec<(String, String, Attrs)>,
}

pub fn parse_dot(src: &str) -> Graph {
    let toks = lex(src);
    let mut i = 0;
    let id = |i: &mut usize| match &toks[*i] {
        Tok::Id(s) => {
            *i += 1;
            s.clone()
        }
        t => panic!("expected id, got {t:?}"),
    };
    let expect = |i: &mut usize, p: &str| {
        assert_eq!(toks[*i], Tok::Punct(match p {
            "{" => "{",
            "}" => "}",
            "[" => "[",
            "]" => "]",
            "=" => "=",
            _ => unreachable!(),
        }));
        *i += 1;
    };
    assert_eq!(id(&mut i), "digraph");
    id(&mut i);
    expect(&mut i, "{");
    let attrs = |i: &mut usize| {
        let mut out = Vec::new();
        if toks.get(*i) != Some(&Tok::Punct("[")) {
            return out;
        }
        *i += 1;
        while toks[*i] != Tok::Punct("]") {
            let k = id(i);
            expect(i, "=");
            out.push((k, id(i)));
            if toks[*i] == Tok::Punct(",") {
                *i += 1;
            }
        }
        *i += 1;
        out
    };
    let mut g = Graph::default();
    while toks[i] != Tok::Punct("}") {
        let first = id(&mut i);
        match toks[i] {
            Tok::Punct("=") => {
                i += 1;
                id(&mut i);
            }
            Tok::Punct("->") => {
                i += 1;
                let to = id(&mut i);
                g.edges.push((first, to, attrs(&mut i)));
            }
            _ if first == "node" || first == "edge" || first == "graph" => {
                attrs(&mut i);
            }
            _ => {
                let a = attrs(&mut i);
                g.nodes.push((first, a));
            }
        }
        assert_eq!(toks[i], Tok::Punct(";"));
        i += 1;
    }
    assert_eq!(i + 1, toks.len(), "trailing tokens");
    g
}

