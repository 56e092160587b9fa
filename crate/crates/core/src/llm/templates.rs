//! Built-in prompt templates.

use std::sync::OnceLock;

use super::block::BlockKind;
use super::template::{PromptTemplate, TemplateError};

pub const PHASEWISE_COLUMNS: &str = "phasewise.columns";
pub const PHASEWISE_PLAN: &str = "phasewise.plan";
pub const PHASEWISE_CODE: &str = "phasewise.code";
pub const STEPWISE_SUBGOAL: &str = "stepwise.subgoal";
pub const STEPWISE_CODE: &str = "stepwise.code";
pub const CONVERSATIONAL_ASSUMPTIONS: &str = "conversational.assumptions";
pub const CONVERSATIONAL_CODE: &str = "conversational.code";
pub const SIDE_ASK: &str = "side.ask";
pub const SIDE_GENERATE: &str = "side.generate";
pub const SIDE_QUERY: &str = "side.query";

const PREAMBLE: &str = "You help a data analyst answer a question about tabular data with Python and pandas. \
Datasets are already loaded as pandas DataFrames under the variable names given in the dataset summary. \
Prefer small, readable code. Use `print` to show results.";

struct Def {
    id: &'static str,
    role: &'static str,
    expected: BlockKind,
    user: &'static str,
}

const DEFS: &[Def] = &[
    Def {
        id: PHASEWISE_COLUMNS,
        role: "List the assumptions you make about each relevant input column and about the expected output, each paired with the action you will take.",
        expected: BlockKind::ColumnAssumptions,
        user: "Question: {query}\n\n{data_summary}",
    },
    Def {
        id: PHASEWISE_PLAN,
        role: "Write a step by step plan for the analysis. Follow the confirmed column and output assumptions.",
        expected: BlockKind::PlanSteps,
        user: "Question: {query}\n\n{data_summary}\n\nConfirmed assumptions:\n{column_assumptions}",
    },
    Def {
        id: PHASEWISE_CODE,
        role: "Write the Python code that carries out the confirmed plan under the confirmed assumptions. Store the final answer in a variable named `result` and print it.",
        expected: BlockKind::CodeBlock,
        user: "Question: {query}\n\n{data_summary}\n\nConfirmed assumptions:\n{column_assumptions}\n\nConfirmed plan:\n{plan}",
    },
    Def {
        id: STEPWISE_SUBGOAL,
        role: "Work towards the answer one subgoal at a time. Propose only the next subgoal: an objective line followed by the assumptions it relies on, each paired with an action. If the completed subgoals already answer the question, reply with TASK COMPLETE instead.",
        expected: BlockKind::AssumptionList,
        user: "Question: {query}\n\n{data_summary}\n\nCompleted subgoals:\n{history}\n\nPropose subgoal {subgoal_no}.",
    },
    Def {
        id: STEPWISE_CODE,
        role: "Write the Python code for the current subgoal only. Earlier subgoal code has already run in the same session, so its variables are available.",
        expected: BlockKind::CodeBlock,
        user: "Question: {query}\n\n{data_summary}\n\nCompleted subgoals:\n{history}\n\nCurrent subgoal:\n{subgoal}",
    },
    Def {
        id: CONVERSATIONAL_ASSUMPTIONS,
        role: "Before writing code for the latest message, state the assumptions you make about the data and the request, each paired with the action you will take.",
        expected: BlockKind::AssumptionList,
        user: "{data_summary}\n\nConversation so far:\n{conversation}\n\nLatest message: {prompt}",
    },
    Def {
        id: CONVERSATIONAL_CODE,
        role: "Write the Python code that answers the latest message under the stated assumptions. Code from earlier turns has already run in the same session.",
        expected: BlockKind::CodeBlock,
        user: "{data_summary}\n\nConversation so far:\n{conversation}\n\nLatest message: {prompt}\n\nAssumptions:\n{assumptions}",
    },
    Def {
        id: SIDE_ASK,
        role: "Answer a question about a piece of analysis code. Keep the answer short and do not rewrite the code.",
        expected: BlockKind::AnswerText,
        user: "Analysis so far:\n{context}\n\nSelected code:\n{selection}\n\nQuestion: {question}",
    },
    Def {
        id: SIDE_GENERATE,
        role: "Rewrite the selected code according to the instruction. Reply with the replacement for the selected code only.",
        expected: BlockKind::CodeBlock,
        user: "Analysis so far:\n{context}\n\nSelected code:\n{selection}\n\nInstruction: {instruction}",
    },
    Def {
        id: SIDE_QUERY,
        role: "Write Python code that inspects the current variables to answer the question. Do not modify existing variables.",
        expected: BlockKind::CodeBlock,
        user: "Analysis so far:\n{context}\n\nVariables:\n{variables}\n\nQuestion: {question}",
    },
];

fn build(def: &Def) -> PromptTemplate {
    PromptTemplate {
        id: def.id.to_string(),
        system: format!(
            "{PREAMBLE}\n\nTask [{}]: {}\n\nFormat: {}",
            def.id,
            def.role,
            def.expected.format_rules()
        ),
        user: def.user.to_string(),
        expected: def.expected,
    }
}

pub fn all() -> &'static [PromptTemplate] {
    static ALL: OnceLock<Vec<PromptTemplate>> = OnceLock::new();
    ALL.get_or_init(|| DEFS.iter().map(build).collect())
}

pub fn get(id: &str) -> Result<&'static PromptTemplate, TemplateError> {
    all()
        .iter()
        .find(|t| t.id == id)
        .ok_or_else(|| TemplateError::Unknown(id.to_string()))
}

/// Identifies the built-in template whose system message is `system`.
pub fn identify(system: &str) -> Option<&'static PromptTemplate> {
    all().iter().find(|t| t.system == system)
}
