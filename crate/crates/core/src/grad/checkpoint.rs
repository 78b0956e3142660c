use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GradError, ParamStore, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// JSON parameter dump: name -> shape + flat values, plus a free-form header.
///
/// Floats are written in shortest round-trip form, so save/load is exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub header: serde_json::Value,
    pub params: Vec<CheckpointEntry>,
}

const FORMAT: &str = "cigan-checkpoint-v1";

impl Checkpoint {
    pub fn from_store(store: &ParamStore, header: serde_json::Value) -> Self {
        let params = store
            .ids()
            .map(|id| CheckpointEntry {
                name: store.name(id).to_string(),
                shape: store.value(id).shape().to_vec(),
                values: store.value(id).data().to_vec(),
            })
            .collect();
        Self {
            format: FORMAT.to_string(),
            header,
            params,
        }
    }

    /// Copies values into `store` by name. Every parameter of the store must
    /// be present with the same shape.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<(), GradError> {
        if self.format != FORMAT {
            return Err(GradError::Checkpoint(format!("unknown format {}", self.format)));
        }
        for id in store.ids().collect::<Vec<_>>() {
            let name = store.name(id).to_string();
            let entry = self
                .params
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| GradError::Checkpoint(format!("missing parameter {name}")))?;
            if entry.shape != store.value(id).shape() {
                return Err(GradError::Checkpoint(format!(
                    "{name}: shape {:?} != {:?}",
                    entry.shape,
                    store.value(id).shape()
                )));
            }
            store.get_mut(id).value = Tensor::new(entry.shape.clone(), entry.values.clone())?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, GradError> {
        serde_json::from_str(s).map_err(|e| GradError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, GradError> {
        let s = std::fs::read_to_string(path).map_err(|e| GradError::Checkpoint(e.to_string()))?;
        Self::from_json(&s)
    }
}
