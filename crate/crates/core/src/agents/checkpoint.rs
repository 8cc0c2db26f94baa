//! JSON policy checkpoints.
//!
//! The file records the network parameters together with the action set and
//! observation layout it was trained against, so loading fails loudly instead
//! of silently replaying a policy on mismatched inputs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::AgentError;
use crate::simclient::MovementAction;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    /// Row-major per layer: `weights[layer][out][in]`.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub action_set: Vec<MovementAction>,
    pub obs_layout: Vec<String>,
}

impl Checkpoint {
    pub fn from_mlp(mlp: &Mlp, action_set: &[MovementAction], obs_layout: &[String]) -> Checkpoint {
        let weights = mlp
            .weights
            .iter()
            .enumerate()
            .map(|(layer, flat)| {
                let fan_in = mlp.layer_sizes[layer];
                flat.chunks(fan_in).map(<[f64]>::to_vec).collect()
            })
            .collect();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            layer_sizes: mlp.layer_sizes.clone(),
            weights,
            biases: mlp.biases.clone(),
            action_set: action_set.to_vec(),
            obs_layout: obs_layout.to_vec(),
        }
    }

    pub fn into_mlp(self) -> Result<Mlp, AgentError> {
        let err = |msg: String| AgentError::Checkpoint(msg);
        if self.version != CHECKPOINT_VERSION {
            return Err(err(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if self.layer_sizes.len() < 2 {
            return Err(err("layer_sizes must list at least two layers".into()));
        }
        let layers = self.layer_sizes.len() - 1;
        if self.weights.len() != layers || self.biases.len() != layers {
            return Err(err(format!(
                "expected {layers} weight/bias layers, got {}/{}",
                self.weights.len(),
                self.biases.len()
            )));
        }
        let mut flat_weights = Vec::with_capacity(layers);
        for (layer, rows) in self.weights.iter().enumerate() {
            let fan_in = self.layer_sizes[layer];
            let fan_out = self.layer_sizes[layer + 1];
            if rows.len() != fan_out {
                return Err(err(format!(
                    "weights[{layer}] has {} rows, expected {fan_out}",
                    rows.len()
                )));
            }
            let mut flat = Vec::with_capacity(fan_in * fan_out);
            for (r, row) in rows.iter().enumerate() {
                if row.len() != fan_in {
                    return Err(err(format!(
                        "weights[{layer}][{r}] has {} columns, expected {fan_in}",
                        row.len()
                    )));
                }
                if row.iter().any(|w| !w.is_finite()) {
                    return Err(err(format!("weights[{layer}][{r}] contains a non-finite value")));
                }
                flat.extend_from_slice(row);
            }
            if self.biases[layer].len() != fan_out {
                return Err(err(format!(
                    "biases[{layer}] has {} entries, expected {fan_out}",
                    self.biases[layer].len()
                )));
            }
            if self.biases[layer].iter().any(|b| !b.is_finite()) {
                return Err(err(format!("biases[{layer}] contains a non-finite value")));
            }
            flat_weights.push(flat);
        }
        if self.action_set.is_empty() {
            return Err(err("action_set is empty".into()));
        }
        if self.action_set.len() != *self.layer_sizes.last().unwrap() {
            return Err(err(format!(
                "action_set has {} entries but the output layer is {}",
                self.action_set.len(),
                self.layer_sizes.last().unwrap()
            )));
        }
        if self.obs_layout.len() != self.layer_sizes[0] {
            return Err(err(format!(
                "obs_layout has {} entries but the input layer is {}",
                self.obs_layout.len(),
                self.layer_sizes[0]
            )));
        }
        Ok(Mlp {
            layer_sizes: self.layer_sizes,
            weights: flat_weights,
            biases: self.biases,
        })
    }
}

pub fn save_policy(
    mlp: &Mlp,
    action_set: &[MovementAction],
    obs_layout: &[String],
    path: &Path,
) -> Result<(), AgentError> {
    let ckpt = Checkpoint::from_mlp(mlp, action_set, obs_layout);
    let json = serde_json::to_string_pretty(&ckpt)
        .map_err(|e| AgentError::Checkpoint(format!("serialize: {e}")))?;
    fs::write(path, json).map_err(|e| AgentError::Checkpoint(format!("write {}: {e}", path.display())))
}

pub fn load_policy(path: &Path) -> Result<(Mlp, Vec<MovementAction>, Vec<String>), AgentError> {
    let text = fs::read_to_string(path)
        .map_err(|e| AgentError::Checkpoint(format!("read {}: {e}", path.display())))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| AgentError::Checkpoint(format!("parse {}: {e}", path.display())))?;
    let actions = ckpt.action_set.clone();
    let layout = ckpt.obs_layout.clone();
    Ok((ckpt.into_mlp()?, actions, layout))
}
