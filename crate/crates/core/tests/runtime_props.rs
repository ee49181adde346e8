mod common;

use common::*;
use dwg_core::replay::{parse_script, run_script};
use common::single_rule::{at_node_a, single_rule_oracle};
use dwg_core::runtime::Engine;
use proptest::prelude::*;

fn three_nodes() -> Engine {
    engine("transitions/transitions.onto", "transitions/three_nodes.dwg")
}

#[test]
fn transition_matches_single_rule_oracle() {
    let e = three_nodes();
    for text in ["In Palo Alto!", "romeo", "alpha bravo", "", "palo", "we are in PALO ALTO now"] {
        let pre = at_node_a(&e);
        let want = single_rule_oracle(&e, &pre, text);
        let mut got = pre.clone();
        e.process_utterance(&mut got, text);
        assert_eq!(got, want, "{text:?}");
    }
}

#[test]
fn transition_links_the_answered_turn() {
    let e = three_nodes();
    let mut s = at_node_a(&e);
    e.process_utterance(&mut s, "In Palo Alto!");
    let last = s.history.last().unwrap();
    assert_eq!(last.system_node(), e.ir().node_index("b"));
    assert_eq!(last.response_to, s.current_user_step);
    assert_eq!(s.current_system_step, Some(last.index));
}

const TOPIC_WORDS: [&str; 5] = ["one", "two", "three", "four", "five"];

fn topics() -> Engine {
    engine("topics/topics.onto", "topics/topics.dwg")
}

proptest! {
    #[test]
    fn nested_topics_unwind_in_order(seq in prop::collection::vec(0usize..5, 1..=5)) {
        let e = topics();
        let (mut s, _) = e.start_session();
        let base = s.current_node;
        let mut expected = vec![base];
        let mut entered = Vec::new();
        for &t in &seq {
            let target = e.ir().node_index(&format!("t{}", t + 1)).unwrap();
            e.process_utterance(&mut s, TOPIC_WORDS[t]);
            if target != s.current_node || entered.last() == Some(&target) {
                // a topic cannot trigger itself
                prop_assert_eq!(entered.last(), Some(&target));
                continue;
            }
            expected.push(target);
            entered.push(target);
        }
        prop_assert_eq!(s.topic_stack.len(), entered.len());
        for _ in 0..entered.len() {
            expected.pop();
            e.process_utterance(&mut s, "done");
            prop_assert_eq!(s.current_node, *expected.last().unwrap());
        }
        prop_assert_eq!(s.current_node, base);
        prop_assert!(s.topic_stack.is_empty());
    }

    #[test]
    fn medic_history_stays_well_formed(words in prop::collection::vec(prop::sample::select(vec![
        "yes", "no", "done", "bleeding", "the arm", "his neck", "leg", "cold", "shivering",
        "vitals", "evacuate", "help", "breathing", "airway", "blah",
    ]), 0..25)) {
        let e = medic();
        let (mut s, _) = e.start_session();
        for w in &words {
            e.process_utterance(&mut s, w);
            prop_assert!(s.check_history().is_ok(), "{:?}", s.check_history());
            prop_assert!(s.immediate_chain_depth <= e.ir().config.max_immediate_chain);
        }
        let users = s.history.iter().filter(|t| t.is_user()).count();
        prop_assert_eq!(users, words.len());
        for (i, t) in s.history.iter().enumerate() {
            prop_assert_eq!(t.index, i);
            prop_assert_eq!(t.previous, i.checked_sub(1));
            if let Some(r) = t.response_to {
                prop_assert!(r < i && s.history[r].is_user());
            }
        }
    }

    #[test]
    fn save_and_load_continue_identically(split in 0usize..12) {
        let e = medic();
        let script: Vec<&str> = vec![
            "bleeding", "yes", "the arm", "shivering", "done", "done", "done", "no", "done", "help", "done", "yes",
        ];
        let (mut straight, _) = e.start_session();
        let (mut resumed, _) = e.start_session();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (i, u) in script.iter().enumerate() {
            if i == split {
                let saved = e.save_session(&resumed);
                resumed = e.load_session(&saved).unwrap();
            }
            a.push(e.process_utterance(&mut straight, u));
            b.push(e.process_utterance(&mut resumed, u));
        }
        prop_assert_eq!(a, b);
        prop_assert_eq!(straight, resumed);
    }
}

#[test]
fn scripts_are_deterministic() {
    let cases = [
        ("restaurant/restaurant.onto", "restaurant/restaurant.dwg", "restaurant/restaurant.script"),
        ("medic/medic.onto", "medic/medic.dwg", "medic/medic.script"),
        ("medic/medic.onto", "medic/medic.dwg", "medic/neck.script"),
        ("transitions/transitions.onto", "transitions/two_nodes.dwg", "transitions/two_nodes.script"),
        ("transitions/transitions.onto", "transitions/three_nodes.dwg", "transitions/three_nodes.script"),
        ("topics/topics.onto", "topics/topics.dwg", "topics/topics.script"),
    ];
    for (onto, dwg, script) in cases {
        let runs: Vec<_> = (0..3)
            .map(|_| {
                let e = engine(onto, dwg);
                let r = run_script(&e, &parse_script(&read(script)).unwrap());
                (r.transcript_text(), e.save_session(&r.state))
            })
            .collect();
        assert!(runs.windows(2).all(|w| w[0] == w[1]), "{script}");
    }
}
