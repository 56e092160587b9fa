//! Task description shared by the graph and the strategies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::DatasetId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Conversational,
    Stepwise,
    Phasewise,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Conversational, Strategy::Stepwise, Strategy::Phasewise];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Conversational => "conversational",
            Strategy::Stepwise => "stepwise",
            Strategy::Phasewise => "phasewise",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid strategy {0:?}; expected conversational, stepwise or phasewise")]
pub struct InvalidStrategy(pub String);

impl FromStr for Strategy {
    type Err = InvalidStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| InvalidStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub query: String,
    pub dataset_ids: Vec<DatasetId>,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskSpecError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("no datasets selected")]
    NoDatasets,
}

impl TaskSpec {
    pub fn new(query: impl Into<String>, dataset_ids: Vec<DatasetId>, strategy: Strategy) -> Result<Self, TaskSpecError> {
        let spec = Self {
            query: query.into(),
            dataset_ids,
            strategy,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), TaskSpecError> {
        if self.query.trim().is_empty() {
            return Err(TaskSpecError::EmptyQuery);
        }
        if self.dataset_ids.is_empty() {
            return Err(TaskSpecError::NoDatasets);
        }
        Ok(())
    }
}
