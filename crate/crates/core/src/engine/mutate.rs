//! Structured edits of phase A and plan nodes.

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::llm::{AssumptionItem, ColumnAssumption, ParsedBlock};

/// One change to a column-assumptions block. `column: None` addresses the
/// output assumptions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PhaseAAction {
    AddColumn {
        column: String,
    },
    RemoveColumn {
        column: String,
    },
    AddAssumption {
        column: Option<String>,
        assumption: String,
        action: String,
    },
    EditAssumption {
        column: Option<String>,
        index: usize,
        assumption: String,
        action: String,
    },
    RemoveAssumption {
        column: Option<String>,
        index: usize,
    },
}

fn item(assumption: &str, action: &str) -> Result<AssumptionItem, EngineError> {
    let it = AssumptionItem::new(assumption.trim(), action.trim());
    it.validate().map_err(EngineError::InvalidEdit)?;
    Ok(it)
}

fn items_of<'a>(
    per_column: &'a mut [ColumnAssumption],
    output: &'a mut Vec<AssumptionItem>,
    column: &Option<String>,
) -> Result<&'a mut Vec<AssumptionItem>, EngineError> {
    match column {
        None => Ok(output),
        Some(name) => per_column
            .iter_mut()
            .find(|c| &c.column == name)
            .map(|c| &mut c.items)
            .ok_or_else(|| EngineError::UnknownColumn(name.clone())),
    }
}

/// Applies `action` to a copy of `block`. `known` lists the dataset columns
/// that may be added.
pub fn apply_phase_a(block: &ParsedBlock, action: &PhaseAAction, known: &[String]) -> Result<ParsedBlock, EngineError> {
    let ParsedBlock::ColumnAssumptions {
        per_column,
        output_assumptions,
    } = block
    else {
        return Err(EngineError::InvalidEdit("not a column assumptions block".into()));
    };
    let mut per_column = per_column.clone();
    let mut output = output_assumptions.clone();
    match action {
        PhaseAAction::AddColumn { column } => {
            if !known.contains(column) {
                return Err(EngineError::UnknownColumn(column.clone()));
            }
            if !per_column.iter().any(|c| &c.column == column) {
                per_column.push(ColumnAssumption {
                    column: column.clone(),
                    items: Vec::new(),
                });
            }
        }
        PhaseAAction::RemoveColumn { column } => {
            let before = per_column.len();
            per_column.retain(|c| &c.column != column);
            if per_column.len() == before {
                return Err(EngineError::UnknownColumn(column.clone()));
            }
        }
        PhaseAAction::AddAssumption {
            column,
            assumption,
            action,
        } => {
            let it = item(assumption, action)?;
            items_of(&mut per_column, &mut output, column)?.push(it);
        }
        PhaseAAction::EditAssumption {
            column,
            index,
            assumption,
            action,
        } => {
            let it = item(assumption, action)?;
            let items = items_of(&mut per_column, &mut output, column)?;
            let slot = items.get_mut(*index).ok_or(EngineError::UnknownAssumption(*index))?;
            *slot = it;
        }
        PhaseAAction::RemoveAssumption { column, index } => {
            let items = items_of(&mut per_column, &mut output, column)?;
            if *index >= items.len() {
                return Err(EngineError::UnknownAssumption(*index));
            }
            items.remove(*index);
        }
    }
    Ok(ParsedBlock::ColumnAssumptions {
        per_column,
        output_assumptions: output,
    })
}

/// Sets the `selected` flag of an optional plan step.
pub fn toggle_step(block: &ParsedBlock, step_index: u32, selected: bool) -> Result<ParsedBlock, EngineError> {
    let ParsedBlock::PlanSteps { steps } = block else {
        return Err(EngineError::InvalidEdit("not a plan block".into()));
    };
    let mut steps = steps.clone();
    let step = steps
        .iter_mut()
        .find(|s| s.index == step_index)
        .ok_or(EngineError::UnknownStep(step_index))?;
    if !step.optional {
        return Err(EngineError::NotOptional(step_index));
    }
    step.selected = selected;
    Ok(ParsedBlock::PlanSteps { steps })
}
