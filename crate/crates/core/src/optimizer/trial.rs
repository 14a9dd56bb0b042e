use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Params;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialState {
    Complete,
    Failed,
}

impl std::fmt::Display for TrialState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrialState::Complete => "complete",
            TrialState::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialMetadata {
    pub wall_time_s: f64,
    pub seed: u64,
    /// Free-form extras (e.g. power trajectories of evaluation runs).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attrs: BTreeMap<String, serde_json::Value>,
}

/// One evaluated parameter assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub study: String,
    pub trial_id: u64,
    pub params: Params,
    /// `None` for failed trials.
    pub score: Option<f64>,
    pub state: TrialState,
    #[serde(default)]
    pub metadata: TrialMetadata,
}

impl TrialRecord {
    /// Builds a record, demoting non-finite scores to a failed trial.
    pub fn new(study: &str, trial_id: u64, params: Params, score: f64, metadata: TrialMetadata) -> Self {
        let (score, state) = if score.is_finite() {
            (Some(score), TrialState::Complete)
        } else {
            (None, TrialState::Failed)
        };
        Self { study: study.to_owned(), trial_id, params, score, state, metadata }
    }

    pub fn failed(study: &str, trial_id: u64, params: Params, metadata: TrialMetadata) -> Self {
        Self { study: study.to_owned(), trial_id, params, score: None, state: TrialState::Failed, metadata }
    }

    /// Score of a complete trial.
    pub fn complete_score(&self) -> Option<f64> {
        match self.state {
            TrialState::Complete => self.score.filter(|s| s.is_finite()),
            TrialState::Failed => None,
        }
    }
}
