//! Session loop behaviour against scripted backends on the fixture databases.

mod common;

use std::sync::Mutex;

use proptest::prelude::*;

use sqlagent::agent::{
    build_prompt, run_session, BackendError, Completion, DecodingConfig, ExemplarSet, FinishReason,
    LlmBackend, Message, PromptBundle, ScriptStep, ScriptedBackend, Step, ToolAction, Toolset,
    ToolsetOptions, INSTRUCTION,
};
use sqlagent::eval::DatasetFormat;
use sqlagent::fixtures;

fn bank() -> (tempfile::TempDir, Toolset) {
    let (dir, root) = common::fixture_root();
    let tools = Toolset::build(&fixtures::db_path(&root, "bank"), "bank", &ToolsetOptions::default(), None).unwrap();
    (dir, tools)
}

fn prompt(tools: &Toolset) -> PromptBundle {
    build_prompt(
        INSTRUCTION,
        ExemplarSet::builtin(DatasetFormat::Bird).demonstrations(false),
        &tools.schema,
        "How many loans are there?",
        None,
    )
    .unwrap()
}

#[test]
fn stops_at_max_turns_without_done() {
    let (_dir, tools) = bank();
    let backend = ScriptedBackend::from_outputs(vec!["Action: ExecuteSQL(\"SELECT COUNT(*) FROM loan\")"; 10]);
    let t = run_session(&backend, &tools, prompt(&tools), &DecodingConfig::default(), 5);
    assert_eq!(t.turns.len(), 5);
    assert_eq!(backend.calls(), 5);
    assert_eq!(t.finish, FinishReason::MaxTurns);
    assert_eq!(t.final_sql.as_deref(), Some("SELECT COUNT(*) FROM loan"));
}

#[test]
fn backend_failure_keeps_earlier_turns() {
    let (_dir, tools) = bank();
    let backend = ScriptedBackend::new(vec![
        ScriptStep::Reply(vec!["Action: SearchColumn(\"loan amount\")".into()]),
        ScriptStep::Fail("HTTP 500".into()),
    ]);
    let t = run_session(&backend, &tools, prompt(&tools), &DecodingConfig::default(), 15);
    assert_eq!(t.turns.len(), 1);
    assert_eq!(t.finish, FinishReason::BackendError);
    assert!(t.backend_error.as_deref().unwrap().contains("HTTP 500"));
    assert_eq!(t.final_sql, None);
}

/// Records the messages of every call, then answers from a script.
struct Recording {
    inner: ScriptedBackend,
    seen: Mutex<Vec<Vec<Message>>>,
}

impl LlmBackend for Recording {
    fn complete(&self, messages: &[Message], cfg: &DecodingConfig) -> Result<Completion, BackendError> {
        self.seen.lock().unwrap().push(messages.to_vec());
        self.inner.complete(messages, cfg)
    }
}

#[test]
fn history_carries_every_prior_turn_verbatim() {
    let (_dir, tools) = bank();
    let backend = Recording {
        inner: ScriptedBackend::from_outputs([
            "Thought: look for the region.\nAction: SearchValue(\"north bohemia\")",
            "garbage without an action",
            "Action: ExecuteSQL(\"SELECT 1\")",
            "Action: Done()",
        ]),
        seen: Mutex::new(Vec::new()),
    };
    let t = run_session(&backend, &tools, prompt(&tools), &DecodingConfig::default(), 15);
    assert_eq!(t.finish, FinishReason::Done);
    assert_eq!(t.final_sql.as_deref(), Some("SELECT 1"));
    assert!(matches!(t.turns[1].step, Step::Malformed(_)));
    assert!(t.turns[1].observation.as_deref().unwrap().starts_with("Error: ParseFailure: "));

    let seen = backend.seen.lock().unwrap();
    assert_eq!(seen.len(), 4);
    for (call, messages) in seen.iter().enumerate() {
        assert_eq!(messages[0].content, INSTRUCTION.trim_end());
        let user = &messages.last().unwrap().content;
        let history: String = t.turns[..call].iter().map(|turn| turn.render() + "\n").collect();
        assert!(user.ends_with(&history), "call {call}");
        assert!(user.contains("Question: How many loans are there?"));
    }
}

#[test]
fn dispatch_examples() {
    let (_dir, tools) = bank();
    let obs = tools.dispatch(&ToolAction::SearchValue {
        value: "north bohemia".into(),
        table: None,
        column: None,
    });
    assert!(obs.text.lines().next().unwrap().ends_with("value: north Bohemia"), "{}", obs.text);

    let obs = tools.dispatch(&ToolAction::FindShortestPath {
        start: "nothing.loan".into(),
        end: "A3.district".into(),
    });
    assert!(obs.text.starts_with("Error: UnknownNode: "), "{}", obs.text);
    assert!(!obs.executed_ok);

    let obs = tools.dispatch(&ToolAction::ExecuteSql { sql: "SELECT 1".into() });
    assert!(obs.executed_ok);
    assert!(obs.text.starts_with("1\n1"), "{}", obs.text);

    let obs = tools.dispatch(&ToolAction::ExecuteSql {
        sql: "DELETE FROM loan".into(),
    });
    assert!(obs.text.starts_with("Error: WriteAttempted"), "{}", obs.text);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn sessions_always_terminate(outputs in prop::collection::vec(".{0,60}", 0..12), max_turns in 1usize..8) {
        let (_dir, tools) = bank();
        let backend = ScriptedBackend::from_outputs(outputs.clone());
        let t = run_session(&backend, &tools, prompt(&tools), &DecodingConfig::default(), max_turns);
        prop_assert!(t.turns.len() <= max_turns);
        prop_assert!(backend.calls() <= max_turns);
        prop_assert_eq!(t.usage.len(), t.turns.len());
    }
}
