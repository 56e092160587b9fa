//! Typed blocks parsed from model responses, and their canonical text form.
//!
//! The grammar is line oriented:
//!
//! ```text
//! assumption line = <tokenized text> " - " <tokenized text>
//! plan line       = <int> ". " ["[optional] "] <tokenized text>
//! code            = "```" [tag] "\n" <code> "\n" "```"
//! column section  = "### Column: `" <name> "`" followed by assumption lines
//! output section  = "### Output" followed by assumption lines
//! objective       = "Objective: " <tokenized text>   (first line, optional)
//! completion      = "TASK COMPLETE"                   (first non-empty line)
//! ```
//!
//! For every block produced by [`parse_block`], parsing its serialization
//! yields the same block.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tokens::{token_spans, TokenizedText};
use crate::parallel::{self, Mode};

/// First-line sentinel for a finished Stepwise task.
pub const COMPLETION_SENTINEL: &str = "TASK COMPLETE";
/// Reason prefix for column sections naming a column absent from the datasets.
pub const UNKNOWN_COLUMN_REASON: &str = "unknown column";
const SEPARATOR: &str = " - ";
const OBJECTIVE_PREFIX: &str = "Objective:";
const OPTIONAL_MARKER: &str = "[optional]";
const FENCE: &str = "```";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    AssumptionList,
    ColumnAssumptions,
    PlanSteps,
    CodeBlock,
    AnswerText,
    CompletionSignal,
}

impl BlockKind {
    pub const ALL: [BlockKind; 6] = [
        BlockKind::AssumptionList,
        BlockKind::ColumnAssumptions,
        BlockKind::PlanSteps,
        BlockKind::CodeBlock,
        BlockKind::AnswerText,
        BlockKind::CompletionSignal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::AssumptionList => "assumption_list",
            BlockKind::ColumnAssumptions => "column_assumptions",
            BlockKind::PlanSteps => "plan_steps",
            BlockKind::CodeBlock => "code_block",
            BlockKind::AnswerText => "answer_text",
            BlockKind::CompletionSignal => "completion_signal",
        }
    }

    /// One-paragraph description of the expected format, used in templates
    /// and in corrective retry instructions.
    pub fn format_rules(self) -> &'static str {
        match self {
            BlockKind::AssumptionList => {
                "Optionally start with one line `Objective: <short objective>`. Then write one line per item in the form `<assumption> - <action>`, separated by a single space-hyphen-space. Do not start an assumption with `-`, `*` or `#`. Enclose column names, variables and keywords in backticks."
            }
            BlockKind::ColumnAssumptions => {
                "For every relevant column write a header line `### Column: `<column name>`` using the exact column name, followed by lines of the form `<assumption> - <action>`. Then write a header line `### Output` followed by `<assumption> - <action>` lines about the expected output. Enclose column names, variables and keywords in backticks."
            }
            BlockKind::PlanSteps => {
                "Write one step per line as `<number>. <step>`, numbered from 1 without gaps. Prefix optional steps with `[optional] ` after the number. Enclose column names, variables and keywords in backticks."
            }
            BlockKind::CodeBlock => {
                "Reply with exactly one fenced code block that starts with ```python on its own line and ends with ``` on its own line."
            }
            BlockKind::AnswerText => "Reply with plain text.",
            BlockKind::CompletionSignal => "Reply with the single line TASK COMPLETE.",
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssumptionItem {
    pub assumption: TokenizedText,
    pub action: TokenizedText,
}

impl AssumptionItem {
    pub fn new(assumption: &str, action: &str) -> Self {
        Self {
            assumption: TokenizedText::parse(assumption),
            action: TokenizedText::parse(action),
        }
    }

    /// Parses one `<assumption> - <action>` line.
    pub fn parse_line(line: &str) -> Result<Self, String> {
        parse_assumption_line(line)
    }

    /// Checks that the item is expressible in the line grammar.
    pub fn validate(&self) -> Result<(), String> {
        let line = self.to_string();
        match parse_assumption_line(&line) {
            Ok(back) if &back == self => Ok(()),
            Ok(_) => Err(format!("item does not round-trip through {line:?}")),
            Err(e) => Err(e),
        }
    }
}

impl fmt::Display for AssumptionItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{SEPARATOR}{}", self.assumption, self.action)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnAssumption {
    pub column: String,
    pub items: Vec<AssumptionItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlanStep {
    pub index: u32,
    pub text: TokenizedText,
    pub optional: bool,
    /// Only meaningful for optional steps; required steps are always selected.
    pub selected: bool,
}

impl PlanStep {
    pub fn included(&self) -> bool {
        !self.optional || self.selected
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParsedBlock {
    AssumptionList {
        objective: Option<TokenizedText>,
        items: Vec<AssumptionItem>,
    },
    ColumnAssumptions {
        per_column: Vec<ColumnAssumption>,
        output_assumptions: Vec<AssumptionItem>,
    },
    PlanSteps {
        steps: Vec<PlanStep>,
    },
    CodeBlock {
        code: String,
        language_tag: String,
    },
    AnswerText {
        text: String,
    },
    CompletionSignal,
}

impl ParsedBlock {
    pub fn kind(&self) -> BlockKind {
        match self {
            ParsedBlock::AssumptionList { .. } => BlockKind::AssumptionList,
            ParsedBlock::ColumnAssumptions { .. } => BlockKind::ColumnAssumptions,
            ParsedBlock::PlanSteps { .. } => BlockKind::PlanSteps,
            ParsedBlock::CodeBlock { .. } => BlockKind::CodeBlock,
            ParsedBlock::AnswerText { .. } => BlockKind::AnswerText,
            ParsedBlock::CompletionSignal => BlockKind::CompletionSignal,
        }
    }

    pub fn code(code: impl Into<String>) -> Self {
        ParsedBlock::CodeBlock {
            code: code.into(),
            language_tag: "python".into(),
        }
    }

    pub fn code_text(&self) -> Option<&str> {
        match self {
            ParsedBlock::CodeBlock { code, .. } => Some(code),
            _ => None,
        }
    }

    /// Canonical text form; see the module docs for the grammar.
    pub fn serialize(&self) -> String {
        let mut lines: Vec<String> = Vec::new();
        match self {
            ParsedBlock::AssumptionList { objective, items } => {
                if let Some(obj) = objective {
                    lines.push(format!("{OBJECTIVE_PREFIX} {obj}"));
                }
                lines.extend(items.iter().map(ToString::to_string));
            }
            ParsedBlock::ColumnAssumptions {
                per_column,
                output_assumptions,
            } => {
                for col in per_column {
                    lines.push(format!("### Column: `{}`", col.column));
                    lines.extend(col.items.iter().map(ToString::to_string));
                }
                if !output_assumptions.is_empty() {
                    lines.push("### Output".into());
                    lines.extend(output_assumptions.iter().map(ToString::to_string));
                }
            }
            ParsedBlock::PlanSteps { steps } => {
                for s in steps {
                    let marker = if s.optional { "[optional] " } else { "" };
                    lines.push(format!("{}. {marker}{}", s.index, s.text));
                }
            }
            ParsedBlock::CodeBlock { code, language_tag } => {
                return format!("{FENCE}{language_tag}\n{code}\n{FENCE}");
            }
            ParsedBlock::AnswerText { text } => return text.clone(),
            ParsedBlock::CompletionSignal => return COMPLETION_SENTINEL.to_string(),
        }
        lines.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("cannot parse {kind} (line {line_no}): {reason}")]
pub struct ParseError {
    pub kind: BlockKind,
    /// 1-based line in the raw response, 0 when the problem is not tied to a line.
    pub line_no: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseWarning {
    pub line_no: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// When set, column sections must name one of these columns.
    pub known_columns: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub block: ParsedBlock,
    pub warnings: Vec<ParseWarning>,
}

/// Parses `raw` as a block of the `expected` kind with default options.
pub fn parse_block(raw: &str, expected: BlockKind) -> Result<ParsedBlock, ParseError> {
    parse_block_with(raw, expected, &ParseOptions::default()).map(|p| p.block)
}

/// Parses many responses at once. Output order matches input order.
pub fn parse_batch(mode: Mode, items: &[(&str, BlockKind)]) -> Vec<Result<ParsedBlock, ParseError>> {
    parallel::map(mode, items, |(raw, kind)| parse_block(raw, *kind))
}

pub fn parse_block_with(raw: &str, expected: BlockKind, opts: &ParseOptions) -> Result<Parsed, ParseError> {
    let text = raw.replace("\r\n", "\n").replace('\r', "\n");
    let lines: Vec<&str> = text.split('\n').collect();
    let err = |line_no: usize, reason: String| ParseError {
        kind: expected,
        line_no,
        reason,
    };
    let mut warnings = Vec::new();

    let first_non_empty = lines.iter().position(|l| !l.trim().is_empty());
    let is_sentinel = first_non_empty.is_some_and(|i| lines[i].trim() == COMPLETION_SENTINEL);
    if is_sentinel && matches!(expected, BlockKind::AssumptionList | BlockKind::CompletionSignal) {
        return Ok(Parsed {
            block: ParsedBlock::CompletionSignal,
            warnings,
        });
    }

    let block = match expected {
        BlockKind::CompletionSignal => {
            return Err(err(first_non_empty.map_or(0, |i| i + 1), format!("expected {COMPLETION_SENTINEL:?}")));
        }
        BlockKind::AnswerText => {
            let t = text.trim();
            if t.is_empty() {
                return Err(err(0, "empty response".into()));
            }
            ParsedBlock::AnswerText { text: t.to_string() }
        }
        BlockKind::CodeBlock => parse_code(&lines, &mut warnings).map_err(|(n, r)| err(n, r))?,
        BlockKind::PlanSteps => parse_plan(&lines).map_err(|(n, r)| err(n, r))?,
        BlockKind::AssumptionList => parse_assumption_list(&lines).map_err(|(n, r)| err(n, r))?,
        BlockKind::ColumnAssumptions => parse_columns(&lines, opts).map_err(|(n, r)| err(n, r))?,
    };
    Ok(Parsed { block, warnings })
}

type LineResult<T> = Result<T, (usize, String)>;

fn find_separator(s: &str) -> Option<usize> {
    let spans = token_spans(s);
    let mut from = 0;
    while let Some(rel) = s[from..].find(SEPARATOR) {
        let at = from + rel;
        if !spans.iter().any(|&(a, b)| at < b && at + SEPARATOR.len() > a) {
            return Some(at);
        }
        from = at + 1;
    }
    None
}

fn parse_assumption_line(line: &str) -> Result<AssumptionItem, String> {
    let mut s = line.trim();
    if let Some(rest) = s.strip_prefix("- ").or_else(|| s.strip_prefix("* ")) {
        s = rest.trim_start();
    }
    let at = find_separator(s).ok_or_else(|| format!("missing {SEPARATOR:?} separator"))?;
    let assumption = s[..at].trim_matches(' ');
    let action = s[at + SEPARATOR.len()..].trim_matches(' ');
    if assumption.trim().is_empty() {
        return Err("empty assumption".into());
    }
    if action.trim().is_empty() {
        return Err("empty action".into());
    }
    if assumption.starts_with(['-', '*', '#']) {
        return Err("assumption starts with a list or header marker".into());
    }
    if assumption.starts_with(OBJECTIVE_PREFIX) {
        return Err("objective line out of place".into());
    }
    Ok(AssumptionItem::new(assumption, action))
}

fn parse_assumption_list(lines: &[&str]) -> LineResult<ParsedBlock> {
    let mut objective = None;
    let mut items = Vec::new();
    let mut seen_content = false;
    for (i, line) in lines.iter().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if !seen_content {
            seen_content = true;
            if let Some(obj) = t.strip_prefix(OBJECTIVE_PREFIX) {
                let obj = obj.trim();
                if obj.is_empty() {
                    return Err((i + 1, "empty objective".into()));
                }
                objective = Some(TokenizedText::parse(obj));
                continue;
            }
        }
        items.push(parse_assumption_line(line).map_err(|r| (i + 1, r))?);
    }
    if items.is_empty() {
        return Err((0, "no assumption lines".into()));
    }
    Ok(ParsedBlock::AssumptionList { objective, items })
}

enum Section {
    None,
    Column(usize),
    Output,
}

fn parse_columns(lines: &[&str], opts: &ParseOptions) -> LineResult<ParsedBlock> {
    let mut per_column: Vec<ColumnAssumption> = Vec::new();
    let mut output = Vec::new();
    let mut seen_output = false;
    let mut section = Section::None;
    for (i, line) in lines.iter().enumerate() {
        let n = i + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if t.starts_with('#') {
            let header = t.trim_start_matches('#').trim();
            if let Some(name) = strip_prefix_ci(header, "column:") {
                let name = unquote(name.trim());
                if name.trim().is_empty() {
                    return Err((n, "empty column name".into()));
                }
                if per_column.iter().any(|c| c.column == name) {
                    return Err((n, format!("duplicate column section `{name}`")));
                }
                if let Some(known) = &opts.known_columns {
                    if !known.iter().any(|k| k == name) {
                        return Err((n, format!("{UNKNOWN_COLUMN_REASON} `{name}`")));
                    }
                }
                per_column.push(ColumnAssumption {
                    column: name.to_string(),
                    items: Vec::new(),
                });
                section = Section::Column(per_column.len() - 1);
            } else if header.eq_ignore_ascii_case("output") || header.eq_ignore_ascii_case("output assumptions") {
                if seen_output {
                    return Err((n, "duplicate output section".into()));
                }
                seen_output = true;
                section = Section::Output;
            } else {
                return Err((n, format!("unknown section header {t:?}")));
            }
            continue;
        }
        let item = parse_assumption_line(line).map_err(|r| (n, r))?;
        match section {
            Section::None => return Err((n, "assumption before any section header".into())),
            Section::Column(c) => per_column[c].items.push(item),
            Section::Output => output.push(item),
        }
    }
    if per_column.is_empty() {
        return Err((0, "no column sections".into()));
    }
    Ok(ParsedBlock::ColumnAssumptions {
        per_column,
        output_assumptions: output,
    })
}

fn strip_prefix_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    let head = s.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &s[prefix.len()..])
}

fn unquote(s: &str) -> &str {
    if s.len() >= 2 && s.starts_with('`') && s.ends_with('`') {
        &s[1..s.len() - 1]
    } else {
        s
    }
}

fn parse_plan(lines: &[&str]) -> LineResult<ParsedBlock> {
    let mut steps = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let n = i + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let digits = t.bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 || !t[digits..].starts_with(". ") {
            return Err((n, "expected `<number>. <step>`".into()));
        }
        let index: u32 = t[..digits]
            .parse()
            .map_err(|_| (n, "step number out of range".to_string()))?;
        let expected = steps.len() as u32 + 1;
        if index != expected {
            return Err((n, format!("expected step {expected}, found {index}")));
        }
        let rest = t[digits + 2..].trim_start();
        let (optional, text) = match strip_prefix_ci(rest, OPTIONAL_MARKER) {
            Some(after) if after.is_empty() || after.starts_with(char::is_whitespace) => (true, after.trim()),
            _ => (false, rest.trim()),
        };
        if text.is_empty() {
            return Err((n, "empty step".into()));
        }
        steps.push(PlanStep {
            index,
            text: TokenizedText::parse(text),
            optional,
            selected: !optional,
        });
    }
    if steps.is_empty() {
        return Err((0, "no plan steps".into()));
    }
    Ok(ParsedBlock::PlanSteps { steps })
}

fn parse_code(lines: &[&str], warnings: &mut Vec<ParseWarning>) -> LineResult<ParsedBlock> {
    let open = lines
        .iter()
        .position(|l| l.trim_start().starts_with(FENCE))
        .ok_or((0, "no fenced code block".to_string()))?;
    let language_tag = lines[open].trim_start()[FENCE.len()..].trim().to_string();
    let close = lines[open + 1..]
        .iter()
        .position(|l| l.trim() == FENCE)
        .map(|p| open + 1 + p)
        .ok_or((open + 1, "unterminated code fence".to_string()))?;
    let code = lines[open + 1..close].join("\n");
    for (i, l) in lines.iter().enumerate().skip(close + 1) {
        if l.trim_start().starts_with(FENCE) {
            warnings.push(ParseWarning {
                line_no: i + 1,
                message: "additional code fence ignored".into(),
            });
            break;
        }
    }
    Ok(ParsedBlock::CodeBlock { code, language_tag })
}
