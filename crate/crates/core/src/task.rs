use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::taxonomy::{NUM_EXERCISES, NUM_MUSCLES};
use crate::error::Error;

/// Exercise classification (EC) or muscle-group activation prediction (MGAP).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Ec,
    Mgap,
}

impl Task {
    pub fn num_outputs(self) -> usize {
        match self {
            Task::Ec => NUM_EXERCISES,
            Task::Mgap => NUM_MUSCLES,
        }
    }

    pub fn head(self) -> HeadKind {
        match self {
            Task::Ec => HeadKind::Multiclass,
            Task::Mgap => HeadKind::Multilabel,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Ec => "ec",
            Task::Mgap => "mgap",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "ec" => Ok(Task::Ec),
            "mgap" => Ok(Task::Mgap),
            other => Err(Error::InvalidInput(format!("unknown task `{other}`"))),
        }
    }
}

/// Softmax + cross-entropy, or independent sigmoids + binary cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Multiclass,
    Multilabel,
}
