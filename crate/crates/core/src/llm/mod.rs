//! Prompt rendering, provider calls and response parsing.

pub mod block;
pub mod provider;
pub mod repair;
pub mod template;
pub mod templates;
pub mod tokens;

pub use block::{
    parse_batch, parse_block, parse_block_with, AssumptionItem, BlockKind, ColumnAssumption, ParseError, ParseOptions,
    ParseWarning, Parsed, ParsedBlock, PlanStep, COMPLETION_SENTINEL,
};
pub use provider::{request_hash, Provider, ProviderConfig, ProviderError, ProviderMode, ScriptedProvider};
pub use repair::{repair_loop, CallRecord, LlmError, RepairOutcome};
pub use template::{vars, Message, PromptTemplate, Role, TemplateError, Vars};
pub use tokens::{tokenize_backticks, Segment, TokenizedText};
