//! Brute-force reference for grammar matching over a fixed toy lexicon.

use dwg_core::conditions::{match_grammar, parse_grammar, GrammarExpr, Utterance};
use dwg_core::ontology::{load_ontology, Ontology, Term};
use dwg_core::sexpr::parse_sexprs;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ONTO: &str = r#"
(defclass A (:lexical "a"))
(defclass B (:lexical "b"))
(defclass C (:lexical "c"))
(defclass D (:is-a A) (:lexical "d"))
"#;

pub const WORDS: [&str; 5] = ["a", "b", "c", "d", "x"];
const NAMES: [&str; 4] = ["A", "B", "C", "D"];

#[derive(Debug, Clone)]
pub enum G {
    T(&'static str),
    Exact(&'static str),
    Seq(Vec<G>),
    Alt(Vec<G>),
    Opt(Box<G>),
    Star(Box<G>),
    Gap(usize),
}

impl G {
    pub fn text(&self) -> String {
        let join = |xs: &[G]| xs.iter().map(G::text).collect::<Vec<_>>().join(" ");
        match self {
            G::T(n) => n.to_string(),
            G::Exact(n) => format!("(term {n} :exact)"),
            G::Seq(xs) => format!("(seq {})", join(xs)),
            G::Alt(xs) => format!("(or {})", join(xs)),
            G::Opt(x) => format!("(? {})", x.text()),
            G::Star(x) => format!("(* {})", x.text()),
            G::Gap(n) => format!("(gap {n})"),
        }
    }
}

fn word_is(word: &str, class: &str, exact: bool) -> bool {
    match (word, class) {
        ("a", "A") | ("b", "B") | ("c", "C") | ("d", "D") => true,
        ("d", "A") => !exact,
        _ => false,
    }
}

/// Does `g` derive exactly `toks`?
pub fn derives(g: &G, toks: &[&str]) -> bool {
    match g {
        G::T(n) => toks.len() == 1 && word_is(toks[0], n, false),
        G::Exact(n) => toks.len() == 1 && word_is(toks[0], n, true),
        G::Gap(k) => toks.len() <= *k,
        G::Opt(x) => toks.is_empty() || derives(x, toks),
        G::Alt(xs) => xs.iter().any(|x| derives(x, toks)),
        G::Seq(xs) => match xs.split_first() {
            None => toks.is_empty(),
            Some((first, rest)) => {
                let rest = G::Seq(rest.to_vec());
                (0..=toks.len()).any(|i| derives(first, &toks[..i]) && derives(&rest, &toks[i..]))
            }
        },
        G::Star(x) => toks.is_empty() || (1..=toks.len()).any(|i| derives(x, &toks[..i]) && derives(g, &toks[i..])),
    }
}

/// Leftmost start, then shortest end.
pub fn oracle(g: &G, toks: &[&str]) -> Option<(usize, usize)> {
    (0..=toks.len()).find_map(|s| (s..=toks.len()).find(|&e| derives(g, &toks[s..e])).map(|e| (s, e)))
}

fn nullable(g: &G) -> bool {
    derives(g, &[])
}

pub fn gen(rng: &mut ChaCha8Rng, depth: u32) -> G {
    let leaf = depth == 0 || rng.gen_bool(0.35);
    if leaf {
        return match rng.gen_range(0..10) {
            0 => G::Gap(rng.gen_range(0..3)),
            1 => G::Exact(NAMES[rng.gen_range(0..NAMES.len())]),
            _ => G::T(NAMES[rng.gen_range(0..NAMES.len())]),
        };
    }
    let kids = |rng: &mut ChaCha8Rng| (0..rng.gen_range(1..=3)).map(|_| gen(rng, depth - 1)).collect::<Vec<_>>();
    match rng.gen_range(0..5) {
        0 | 1 => G::Seq(kids(rng)),
        2 => G::Alt(kids(rng)),
        3 => G::Opt(Box::new(gen(rng, depth - 1))),
        _ => {
            let body = gen(rng, depth - 1);
            if nullable(&body) {
                G::Opt(Box::new(body))
            } else {
                G::Star(Box::new(body))
            }
        }
    }
}

pub fn compile(onto: &Ontology, text: &str) -> GrammarExpr {
    let forms = parse_sexprs(text).unwrap();
    parse_grammar(&forms[0], &|n| onto.schema.class(n).map(Term::Class)).unwrap_or_else(|e| panic!("{text}: {e}"))
}

/// Runs `cases` random comparisons; returns the number of non-empty
/// matches, or the first disagreement.
pub fn compare_random(cases: usize, seed: u64) -> Result<usize, String> {
    let onto = load_ontology(ONTO).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0;
    for case in 0..cases {
        let g = gen(&mut rng, 3);
        let len = rng.gen_range(0..=12);
        let toks: Vec<&str> = (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
        let expr = compile(&onto, &g.text());
        let u = Utterance::new(&toks.join(" "), &onto.lexicon);
        let got = match_grammar(&expr, &u, &onto.schema, &onto.facts).map(|r| (r.start, r.end));
        let want = oracle(&g, &toks);
        if got != want {
            return Err(format!("case {case}: {} on {toks:?}: got {got:?}, want {want:?}", g.text()));
        }
        hits += usize::from(want.is_some_and(|(s, e)| s < e));
    }
    Ok(hits)
}

/// Accepts / rejects for the negated amplified descriptor pattern.
pub fn negated_descriptor() -> [(&'static str, bool); 4] {
    let onto = load_ontology(
        r#"(defclass Neg (:lexical "not"))
           (defclass Ampl (:lexical "very" "so"))
           (defclass PosDesc (:lexical "good" "well"))"#,
    )
    .unwrap();
    let g = compile(&onto, "(Neg Ampl PosDesc)");
    ["not very good", "not so well", "very good", "not good"]
        .map(|s| (s, match_grammar(&g, &Utterance::new(s, &onto.lexicon), &onto.schema, &onto.facts).is_some()))
}
