//! Deterministic stand-in for a live model, used to record scripted fixtures.
//!
//! It recognises the template from the system message and the task from the
//! query text, then answers from the task fixture.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;

use decomp_core::llm::templates;
use decomp_core::llm::{request_hash, Message, Provider, ProviderError, Role};

use super::tasks::{TaskFixture, TASKS};

pub const MUTATING_QUERY: &str = "overwrite";

pub struct Author;

fn user_text(messages: &[Message]) -> &str {
    messages
        .iter()
        .find(|m| m.role == Role::User)
        .map_or("", |m| m.content.as_str())
}

fn find_task(text: &str) -> Option<&'static TaskFixture> {
    TASKS.iter().find(|t| text.contains(t.query))
}

fn section<'a>(text: &'a str, start: &str, end: &str) -> &'a str {
    let from = text.find(start).map_or(0, |i| i + start.len());
    let rest = &text[from..];
    rest.find(end).map_or(rest, |i| &rest[..i])
}

fn count_lines(text: &str, pred: impl Fn(&str) -> bool) -> usize {
    text.lines().filter(|l| pred(l)).count()
}

impl Author {
    fn answer(&self, messages: &[Message]) -> Result<String, String> {
        let system = messages.first().map_or("", |m| m.content.as_str());
        let template = templates::identify(system).ok_or("unknown system message")?;
        let user = user_text(messages);
        let retry = messages.len() > 2;
        let id = template.id.as_str();

        if id.starts_with("side.") {
            return Ok(side_answer(id, user));
        }
        let task = find_task(user).ok_or("no task query in prompt")?;
        Ok(match id {
            templates::PHASEWISE_COLUMNS => match task.columns_first_attempt {
                Some(bad) if !retry => bad.to_string(),
                _ => task.columns.to_string(),
            },
            templates::PHASEWISE_PLAN => task.plan.to_string(),
            templates::PHASEWISE_CODE => task.code.to_string(),
            templates::STEPWISE_SUBGOAL => {
                let n: usize = section(user, "Propose subgoal ", ".")
                    .trim()
                    .parse()
                    .map_err(|_| "no subgoal number")?;
                match task.subgoals.get(n - 1) {
                    Some(s) => s.assumptions.to_string(),
                    None => "TASK COMPLETE".to_string(),
                }
            }
            templates::STEPWISE_CODE => {
                let history = section(user, "Completed subgoals:\n", "\n\nCurrent subgoal:");
                let done = count_lines(history, |l| l.starts_with("Subgoal ") && l.ends_with(':'));
                task.subgoals.get(done).ok_or("subgoal out of range")?.code.to_string()
            }
            templates::CONVERSATIONAL_ASSUMPTIONS | templates::CONVERSATIONAL_CODE => {
                let convo = section(user, "Conversation so far:\n", "\n\nLatest message:");
                let turn = count_lines(convo, |l| l.starts_with("User: "));
                let t = task.turns.get(turn).unwrap_or(task.turns.last().expect("at least one turn"));
                if id == templates::CONVERSATIONAL_CODE {
                    t.code.to_string()
                } else {
                    t.assumptions.to_string()
                }
            }
            other => return Err(format!("unhandled template {other}")),
        })
    }
}

fn side_answer(id: &str, user: &str) -> String {
    match id {
        templates::SIDE_ASK => {
            "It keeps only the listed columns so later steps work on a smaller frame.".to_string()
        }
        templates::SIDE_GENERATE => {
            let selection = section(user, "Selected code:\n", "\n\nInstruction:");
            format!("```python\n{}\n```", selection.trim().replace("head(", "tail("))
        }
        templates::SIDE_QUERY if user.contains(MUTATING_QUERY) => {
            "```python\nresult = 0\nscratch = 1\nprint(result)\n```".to_string()
        }
        _ => "```python\nprint(result)\n```".to_string(),
    }
}

impl Provider for Author {
    fn complete(&self, messages: &[Message]) -> Result<String, ProviderError> {
        self.answer(messages).map_err(|reason| ProviderError::ProviderUnavailable {
            request_hash: request_hash(messages),
            reason,
        })
    }
}

/// Wraps a provider and keeps every response keyed by request hash.
pub struct Recorder<P> {
    inner: P,
    pub recorded: Mutex<BTreeMap<String, String>>,
}

impl<P: Provider> Recorder<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            recorded: Mutex::new(BTreeMap::new()),
        }
    }

    /// Replaces the contents of `dir` with the recorded fixtures.
    pub fn write_to(&self, dir: &PathBuf) -> std::io::Result<usize> {
        if dir.exists() {
            for entry in std::fs::read_dir(dir)? {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "txt") {
                    std::fs::remove_file(path)?;
                }
            }
        }
        std::fs::create_dir_all(dir)?;
        let recorded = self.recorded.lock().unwrap();
        for (hash, text) in recorded.iter() {
            std::fs::write(dir.join(format!("{hash}.txt")), text)?;
        }
        Ok(recorded.len())
    }
}

impl<P: Provider> Provider for Recorder<P> {
    fn complete(&self, messages: &[Message]) -> Result<String, ProviderError> {
        let text = self.inner.complete(messages)?;
        self.recorded.lock().unwrap().insert(request_hash(messages), text.clone());
        Ok(text)
    }
}
