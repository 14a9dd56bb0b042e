use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::nn::{ActorCritic, NetShape, PolicyArch};
use super::RlError;
use crate::num::Scalar;

pub const CHECKPOINT_FORMAT: &str = "ranbench-actor-critic";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Self-describing checkpoint: architecture, tensor manifest, flat weights
/// in manifest order, plus free-form metadata (training settings etc.).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub arch: PolicyArch,
    pub shape: NetShape,
    pub tensors: Vec<TensorInfo>,
    pub params: Vec<f64>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

fn manifest<S: Scalar>(net: &ActorCritic<S>) -> Vec<TensorInfo> {
    net.layers()
        .flat_map(|l| {
            [
                TensorInfo { name: format!("{}.weight", l.name), shape: vec![l.rows, l.cols] },
                TensorInfo { name: format!("{}.bias", l.name), shape: vec![l.cols] },
            ]
        })
        .collect()
}

impl Checkpoint {
    pub fn from_policy<S: Scalar>(net: &ActorCritic<S>, metadata: BTreeMap<String, serde_json::Value>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            arch: net.arch().clone(),
            shape: net.shape(),
            tensors: manifest(net),
            params: net.params().iter().map(|p| p.as_f64()).collect(),
            metadata,
        }
    }

    pub fn to_policy<S: Scalar>(&self) -> Result<ActorCritic<S>, RlError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(RlError::Checkpoint(format!("unknown format '{}'", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(RlError::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let mut net = ActorCritic::<S>::zeros(self.arch.clone(), self.shape)?;
        if manifest(&net) != self.tensors {
            return Err(RlError::Checkpoint("tensor manifest does not match the architecture".into()));
        }
        let n: usize = self.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
        if n != self.params.len() {
            return Err(RlError::Checkpoint(format!("manifest lists {n} values, file holds {}", self.params.len())));
        }
        net.set_params(self.params.iter().map(|&v| S::lit(v)).collect())?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<(), RlError> {
        let text = serde_json::to_string(self).map_err(|e| RlError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| RlError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, RlError> {
        let text = std::fs::read_to_string(path).map_err(|e| RlError::Checkpoint(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| RlError::Checkpoint(format!("{}: {e}", path.display())))
    }
}
