//! Versioned JSON checkpoint of named tensors.
//!
//! ```json
//! {
//!   "format": "recfollow-checkpoint",
//!   "version": 1,
//!   "kind": "han",
//!   "meta": { ... },
//!   "tensors": { "head.w": { "shape": [2, 8], "data": [ ... ] }, ... }
//! }
//! ```
//!
//! Values are stored as `f64` regardless of the model scalar. Keys are
//! sorted, so serializing the same parameters twice yields identical bytes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::param::Parameters;
use super::{NnError, ParamSet, Tensor};
use crate::Scalar;

pub const CHECKPOINT_FORMAT: &str = "recfollow-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    #[serde(default)]
    pub meta: serde_json::Value,
    pub tensors: BTreeMap<String, StoredTensor>,
}

impl Checkpoint {
    pub fn from_params<T: Scalar, P: Parameters<T> + ?Sized>(kind: &str, model: &P, meta: serde_json::Value) -> Self {
        let mut tensors = BTreeMap::new();
        model.visit(&mut |name, p| {
            tensors.insert(
                name.to_string(),
                StoredTensor {
                    shape: p.value.shape().to_vec(),
                    data: p.value.data().iter().map(|v| v.to_f64().expect("finite")).collect(),
                },
            );
        });
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            kind: kind.to_string(),
            meta,
            tensors,
        }
    }

    pub fn param_set<T: Scalar>(&self) -> Result<ParamSet<T>, NnError> {
        let mut set = ParamSet::default();
        for (name, t) in &self.tensors {
            let data = t
                .data
                .iter()
                .map(|&v| T::from_f64(v).ok_or_else(|| NnError::Checkpoint(format!("{name}: unrepresentable value"))))
                .collect::<Result<Vec<T>, _>>()?;
            set.tensors.insert(name.clone(), Tensor::from_vec(&t.shape, data)?);
        }
        Ok(set)
    }

    pub fn restore_into<T: Scalar, P: Parameters<T> + ?Sized>(&self, model: &mut P) -> Result<(), NnError> {
        model.load_param_set(&self.param_set()?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, NnError> {
        let ckpt: Checkpoint = serde_json::from_str(s).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(NnError::Checkpoint(format!("unknown format {:?}", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {}", ckpt.version)));
        }
        Ok(ckpt)
    }
}
