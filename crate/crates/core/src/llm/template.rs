//! Prompt templates with `{name}` placeholders.
//!
//! `{{` and `}}` render as literal braces. The system message of every
//! built-in template is fixed text, so the template behind a rendered request
//! can be identified from its first message alone.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::block::BlockKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template {template}: missing value for placeholder `{name}`")]
    MissingPlaceholder { template: String, name: String },
    #[error("template {template}: unbalanced brace at byte {at}")]
    Malformed { template: String, at: usize },
    #[error("unknown template {0}")]
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub system: String,
    pub user: String,
    pub expected: BlockKind,
}

pub type Vars = BTreeMap<String, String>;

impl PromptTemplate {
    pub fn render(&self, vars: &Vars) -> Result<Vec<Message>, TemplateError> {
        Ok(vec![
            Message::system(fill(&self.id, &self.system, vars)?),
            Message::user(fill(&self.id, &self.user, vars)?),
        ])
    }

    /// Placeholder names used by this template, in order of first use.
    pub fn placeholders(&self) -> Vec<String> {
        let mut out = Vec::new();
        for text in [&self.system, &self.user] {
            for name in scan(text).into_iter().flatten() {
                if !out.contains(&name) {
                    out.push(name);
                }
            }
        }
        out
    }
}

enum Piece {
    Lit(String),
    Var(String),
}

fn pieces(text: &str) -> Result<Vec<Piece>, usize> {
    let mut out = Vec::new();
    let mut lit = String::new();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '{' if chars.peek().map(|p| p.1) == Some('{') => {
                chars.next();
                lit.push('{');
            }
            '}' if chars.peek().map(|p| p.1) == Some('}') => {
                chars.next();
                lit.push('}');
            }
            '{' => {
                let rest = &text[i + 1..];
                let end = rest.find('}').ok_or(i)?;
                let name = &rest[..end];
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(i);
                }
                if !lit.is_empty() {
                    out.push(Piece::Lit(std::mem::take(&mut lit)));
                }
                out.push(Piece::Var(name.to_string()));
                for _ in 0..=end {
                    chars.next();
                }
            }
            '}' => return Err(i),
            c => lit.push(c),
        }
    }
    if !lit.is_empty() {
        out.push(Piece::Lit(lit));
    }
    Ok(out)
}

fn scan(text: &str) -> Option<Vec<String>> {
    let p = pieces(text).ok()?;
    Some(
        p.into_iter()
            .filter_map(|p| match p {
                Piece::Var(n) => Some(n),
                Piece::Lit(_) => None,
            })
            .collect(),
    )
}

fn fill(id: &str, text: &str, vars: &Vars) -> Result<String, TemplateError> {
    let parts = pieces(text).map_err(|at| TemplateError::Malformed {
        template: id.to_string(),
        at,
    })?;
    let mut out = String::with_capacity(text.len());
    for p in parts {
        match p {
            Piece::Lit(s) => out.push_str(&s),
            Piece::Var(name) => match vars.get(&name) {
                Some(v) => out.push_str(v),
                None => {
                    return Err(TemplateError::MissingPlaceholder {
                        template: id.to_string(),
                        name,
                    })
                }
            },
        }
    }
    Ok(out)
}

/// Builds a [`Vars`] map from string pairs.
pub fn vars<const N: usize>(pairs: [(&str, String); N]) -> Vars {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
