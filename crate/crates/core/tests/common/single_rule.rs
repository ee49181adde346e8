use dwg_core::conditions::Utterance;
use dwg_core::runtime::{DialogueState, Engine, Turn, TurnKind};

/// Single rule: at node `a`, an utterance naming R moves to `b` and says its
/// message; anything else gets the fallback on `a`.
pub fn single_rule_oracle(engine: &Engine, pre: &DialogueState, text: &str) -> DialogueState {
    let ir = engine.ir();
    let a = ir.node_index("a").unwrap();
    let b = ir.node_index("b").unwrap();
    assert_eq!(pre.current_node, a);
    let lowered = text.to_lowercase();
    let says_r = ["romeo", "palo alto"].iter().any(|w| lowered.contains(w));
    let mut post = pre.clone();
    let u = post.history.len();
    post.history.push(Turn {
        index: u,
        previous: u.checked_sub(1),
        response_to: None,
        kind: TurnKind::User {
            text: text.to_string(),
            utterance: Utterance::new(text, &engine.ontology().lexicon),
            intent: None,
        },
    });
    let (node, message) = if says_r {
        (b, "Transitioned to B!".to_string())
    } else {
        (a, ir.config.fallback_message.clone())
    };
    post.history.push(Turn {
        index: u + 1,
        previous: Some(u),
        response_to: Some(u),
        kind: TurnKind::System { node, messages: vec![message] },
    });
    post.current_user_step = Some(u);
    post.current_system_step = Some(u + 1);
    post.current_node = node;
    post
}

pub fn at_node_a(engine: &Engine) -> DialogueState {
    let (mut s, _) = engine.start_session();
    engine.process_utterance(&mut s, "hi");
    s
}

