//! JSON checkpoints: format tag, architecture, training metadata and named weights.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ParamTree, Tensor};
use crate::policy::{Policy, PolicyHyper};
use crate::scalar::Scalar;

pub const FORMAT: &str = "mstsp-checkpoint-v1";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epochs: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NamedWeight {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    hyper: PolicyHyper,
    meta: CheckpointMeta,
    weights: Vec<NamedWeight>,
}

pub fn checkpoint_to_json<S: Scalar>(policy: &Policy<S>, meta: &CheckpointMeta) -> String {
    let mut weights = Vec::new();
    policy.params.visit("", &mut |name, t: &Tensor<S>| {
        weights.push(NamedWeight {
            name,
            shape: t.shape(),
            data: t.data().iter().map(|v| v.as_f64()).collect(),
        });
    });
    let file = CheckpointFile {
        format: FORMAT.to_string(),
        hyper: policy.hyper,
        meta: meta.clone(),
        weights,
    };
    let mut out = serde_json::to_string(&file).expect("checkpoint serialises");
    out.push('\n');
    out
}

pub fn checkpoint_from_json<S: Scalar>(text: &str) -> Result<(Policy<S>, CheckpointMeta)> {
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
    if file.format != FORMAT {
        return Err(Error::Checkpoint(format!("unrecognised format tag {:?}", file.format)));
    }
    let mut policy = Policy::<S>::init(file.hyper, 0).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let names = policy.params.names();
    if names.len() != file.weights.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} weight arrays for this architecture, found {}",
            names.len(),
            file.weights.len()
        )));
    }
    for ((slot, name), w) in policy.params.leaves_mut().into_iter().zip(&names).zip(file.weights) {
        if *name != w.name {
            return Err(Error::Checkpoint(format!("expected weight {name}, found {}", w.name)));
        }
        if w.shape[0] * w.shape[1] != w.data.len() {
            return Err(Error::Checkpoint(format!(
                "{name}: shape {:?} does not hold {} values",
                w.shape,
                w.data.len()
            )));
        }
        if w.shape != slot.shape() {
            return Err(Error::Checkpoint(format!(
                "{name}: shape {:?}, architecture needs {:?}",
                w.shape,
                slot.shape()
            )));
        }
        if w.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint(format!("{name}: non-finite weight")));
        }
        *slot = Tensor::new(w.shape[0], w.shape[1], w.data.into_iter().map(S::lit).collect())?;
    }
    Ok((policy, file.meta))
}

pub fn save_checkpoint<S: Scalar>(path: impl AsRef<Path>, policy: &Policy<S>, meta: &CheckpointMeta) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_to_json(policy, meta)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<S: Scalar>(path: impl AsRef<Path>) -> Result<(Policy<S>, CheckpointMeta)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PolicyHyper {
        PolicyHyper {
            d_model: 8,
            heads: 2,
            ff_hidden: 16,
            encoder_layers: 1,
            decoders: 2,
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let meta = CheckpointMeta { seed: 3, epochs: 2, n: 10 };
        let p = Policy::<f64>::init(small(), 7).unwrap();
        let a = checkpoint_to_json(&p, &meta);
        let (q, m) = checkpoint_from_json::<f64>(&a).unwrap();
        assert_eq!(q, p);
        assert_eq!(m, meta);
        assert_eq!(checkpoint_to_json(&q, &m), a);

        let p32 = Policy::<f32>::init(small(), 7).unwrap();
        let a = checkpoint_to_json(&p32, &meta);
        let (q, m) = checkpoint_from_json::<f32>(&a).unwrap();
        assert_eq!(checkpoint_to_json(&q, &m), a);
    }

    #[test]
    fn rejects_bad_files() {
        let p = Policy::<f64>::init(small(), 7).unwrap();
        let good = checkpoint_to_json(&p, &CheckpointMeta::default());
        assert!(checkpoint_from_json::<f64>(&good.replace(FORMAT, "other-v9")).is_err());
        assert!(checkpoint_from_json::<f64>("{").is_err());
        let mut v: serde_json::Value = serde_json::from_str(&good).unwrap();
        v["weights"][0]["data"].as_array_mut().unwrap().pop();
        assert!(checkpoint_from_json::<f64>(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&good).unwrap();
        v["hyper"]["d_model"] = 16.into();
        assert!(checkpoint_from_json::<f64>(&v.to_string()).is_err());
    }
}
