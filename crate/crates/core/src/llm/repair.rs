//! Render, complete, parse; on a parse failure ask again with a corrective
//! instruction, up to `max_retries` extra attempts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::block::{parse_block_with, BlockKind, ParseError, ParseOptions, ParseWarning, ParsedBlock};
use super::provider::{request_hash, Provider, ProviderError};
use super::template::{Message, PromptTemplate, TemplateError, Vars};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("no parseable {kind} after {} attempts: {last_error}", attempts.len())]
    UnparseableAfterRetries {
        kind: BlockKind,
        /// Raw text of every attempt, in order.
        attempts: Vec<String>,
        last_error: ParseError,
    },
}

/// Record of one provider round trip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub template: String,
    pub request_hash: String,
    pub attempt: u32,
    pub parse_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub block: ParsedBlock,
    pub attempts: u32,
    pub raw: Vec<String>,
    pub calls: Vec<CallRecord>,
    pub warnings: Vec<ParseWarning>,
    /// Messages of the first attempt, i.e. the context the block was generated from.
    pub prompt: Vec<Message>,
}

pub fn corrective_instruction(err: &ParseError) -> String {
    let at = if err.line_no > 0 {
        format!(" at line {}", err.line_no)
    } else {
        String::new()
    };
    format!(
        "Your previous reply does not follow the required format{at}: {}. {} Reply again using exactly this format.",
        err.reason,
        err.kind.format_rules()
    )
}

pub fn repair_loop(
    provider: &dyn Provider,
    template: &PromptTemplate,
    vars: &Vars,
    max_retries: u32,
    opts: &ParseOptions,
) -> Result<RepairOutcome, LlmError> {
    let prompt = template.render(vars)?;
    let mut messages = prompt.clone();
    let mut raw = Vec::new();
    let mut calls = Vec::new();
    loop {
        let attempt = raw.len() as u32 + 1;
        let hash = request_hash(&messages);
        let text = provider.complete(&messages)?;
        let parsed = parse_block_with(&text, template.expected, opts);
        calls.push(CallRecord {
            template: template.id.clone(),
            request_hash: hash,
            attempt,
            parse_error: parsed.as_ref().err().map(ToString::to_string),
        });
        raw.push(text);
        match parsed {
            Ok(p) => {
                return Ok(RepairOutcome {
                    block: p.block,
                    attempts: attempt,
                    raw,
                    calls,
                    warnings: p.warnings,
                    prompt,
                })
            }
            Err(e) if attempt > max_retries => {
                return Err(LlmError::UnparseableAfterRetries {
                    kind: template.expected,
                    attempts: raw,
                    last_error: e,
                })
            }
            Err(e) => {
                messages = prompt.clone();
                messages.push(Message::assistant(raw.last().cloned().unwrap_or_default()));
                messages.push(Message::user(corrective_instruction(&e)));
            }
        }
    }
}
