//! Side threads: anchored exchanges kept out of the main generation context.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::ExecutionResult;
use crate::graph::NodeId;
use crate::llm::ParsedBlock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThreadId(pub u64);

impl fmt::Display for ThreadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Half-open span `[start, end)` in characters of the anchored node's code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Selection {
    pub start: usize,
    pub end: usize,
}

impl Selection {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn validate(&self, code: &str) -> Result<(), SideError> {
        let len = code.chars().count();
        if self.start > self.end || self.end > len {
            return Err(SideError::InvalidSelection {
                start: self.start,
                end: self.end,
                len,
            });
        }
        Ok(())
    }

    pub fn slice<'a>(&self, code: &'a str) -> Result<&'a str, SideError> {
        self.validate(code)?;
        let (a, b) = self.byte_range(code);
        Ok(&code[a..b])
    }

    /// Replaces the selected span with `snippet`.
    pub fn splice(&self, code: &str, snippet: &str) -> Result<String, SideError> {
        self.validate(code)?;
        let (a, b) = self.byte_range(code);
        Ok(format!("{}{snippet}{}", &code[..a], &code[b..]))
    }

    fn byte_range(&self, code: &str) -> (usize, usize) {
        let byte_at = |ch: usize| code.char_indices().nth(ch).map_or(code.len(), |(i, _)| i);
        (byte_at(self.start), byte_at(self.end))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Anchor {
    pub node: NodeId,
    pub selection: Option<Selection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreadKind {
    AskQuestion,
    GenerateCode,
    SideQuery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThreadStatus {
    Open,
    Answered,
    Inserted,
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ThreadResponse {
    Answer { text: String },
    Code { block: ParsedBlock },
    QueryResult {
        block: ParsedBlock,
        result: ExecutionResult,
        /// Names of pre-existing variables the query changed or removed.
        mutation_warning: Option<Vec<String>>,
    },
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideThread {
    pub id: ThreadId,
    pub anchor: Anchor,
    pub kind: ThreadKind,
    pub query: String,
    pub response: Option<ThreadResponse>,
    pub status: ThreadStatus,
    /// Set while the anchor is not on the active branch path.
    pub stale: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", content = "detail")]
pub enum SideError {
    #[error("selection {start}..{end} is outside the code (length {len})")]
    InvalidSelection { start: usize, end: usize, len: usize },
    #[error("a code selection is required")]
    SelectionRequired,
    #[error("node {0} holds no code")]
    NotCodeAnchor(NodeId),
    #[error("thread {0} has no answer to insert")]
    ThreadNotAnswered(ThreadId),
    #[error("thread {0} is not a generate-code thread")]
    NotInsertable(ThreadId),
    #[error("anchor node {0} is no longer on the active branch")]
    AnchorNodeGone(NodeId),
    #[error("unknown thread {0}")]
    UnknownThread(ThreadId),
    #[error("side conversations are not available in this strategy")]
    Unavailable,
}

/// Names whose snapshot changed or vanished between `before` and `after`.
pub fn mutated_variables(
    before: &[crate::exec::VariableSnapshot],
    after: &[crate::exec::VariableSnapshot],
) -> Vec<String> {
    before
        .iter()
        .filter(|b| after.iter().find(|a| a.name == b.name) != Some(*b))
        .map(|b| b.name.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splice_replaces_exactly_the_span() {
        let code = "df[df['c'] == 'US']";
        let sel = Selection::new(3, 18);
        assert_eq!(sel.slice(code).unwrap(), "df['c'] == 'US'");
        assert_eq!(sel.splice(code, "X").unwrap(), "df[X]");
        assert_eq!(Selection::new(0, 0).splice(code, ">").unwrap(), format!(">{code}"));
        let n = code.chars().count();
        assert_eq!(Selection::new(n, n).splice(code, "<").unwrap(), format!("{code}<"));
    }

    #[test]
    fn selection_counts_characters() {
        let code = "s = 'héllo'";
        assert_eq!(Selection::new(5, 10).slice(code).unwrap(), "héllo");
        assert_eq!(Selection::new(5, 10).splice(code, "x").unwrap(), "s = 'x'");
    }

    #[test]
    fn out_of_bounds_selection_is_rejected() {
        assert!(matches!(
            Selection::new(2, 40).validate("abc"),
            Err(SideError::InvalidSelection { len: 3, .. })
        ));
        assert!(Selection::new(2, 1).validate("abc").is_err());
    }
}
