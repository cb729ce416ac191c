use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::OptimizerState;
use crate::config::{ModelConfig, TrainConfig};
use crate::data::write_atomic;
use crate::error::{ModelError, ModelResult};
use crate::model::Masque;
use crate::scalar::Scalar;
use crate::tensor::{ParamKind, ParamStore};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAYLOAD_FILE: &str = "params.bin";
const FORMAT: &str = "masque-checkpoint-1";
const SECTIONS: [&str; 4] = ["params", "adam_m", "adam_v", "ema"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestParam {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
}

/// Layout of the binary payload plus everything needed to rebuild the model.
///
/// The payload holds little-endian `f64` values: all parameters in manifest
/// order, then the Adam first moments, second moments and shadow values in
/// the same order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub step: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub k: usize,
    pub vocab_size: usize,
    pub sections: Vec<String>,
    pub params: Vec<ManifestParam>,
    /// Free-form run settings stored alongside, such as data limits.
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub manifest: Manifest,
    pub model: Masque,
    pub params: ParamStore<T>,
    pub state: OptimizerState<T>,
}

fn bad(path: &Path, detail: impl Into<String>) -> ModelError {
    ModelError::Checkpoint {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Writes `manifest.json` and `params.bin` into `dir`, each atomically.
pub fn save_checkpoint<T: Scalar>(
    dir: &Path,
    model: &Masque,
    train: &TrainConfig,
    ps: &ParamStore<T>,
    state: &OptimizerState<T>,
    extra: serde_json::Value,
) -> ModelResult<()> {
    fs::create_dir_all(dir).map_err(|source| ModelError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let manifest = Manifest {
        format: FORMAT.into(),
        step: state.step,
        model: model.config.clone(),
        train: train.clone(),
        k: model.k,
        vocab_size: model.vocab_size,
        sections: SECTIONS.iter().map(|s| s.to_string()).collect(),
        params: ps
            .entries()
            .iter()
            .map(|e| ManifestParam {
                name: e.name.clone(),
                kind: e.kind,
                shape: e.tensor.shape().to_vec(),
            })
            .collect(),
        extra,
    };
    let mut payload = Vec::with_capacity(ps.numel() * 8 * SECTIONS.len());
    let mut put = |xs: &[T]| {
        for x in xs {
            payload.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    };
    for e in ps.entries() {
        put(e.tensor.data());
    }
    for section in [&state.m, &state.v, &state.ema] {
        for xs in section {
            put(xs);
        }
    }
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join(PAYLOAD_FILE), &payload)?;
    write_atomic(&dir.join(MANIFEST_FILE), &json)?;
    Ok(())
}

/// Rebuilds the model from a checkpoint directory and restores all values.
pub fn load_checkpoint<T: Scalar>(dir: &Path) -> ModelResult<Checkpoint<T>> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read(&mpath).map_err(|source| ModelError::Io {
        path: mpath.clone(),
        source,
    })?;
    let manifest: Manifest = serde_json::from_slice(&text).map_err(|e| bad(&mpath, e.to_string()))?;
    if manifest.format != FORMAT {
        return Err(bad(&mpath, format!("unsupported format {:?}", manifest.format)));
    }
    let (model, mut ps) = Masque::new::<T>(&manifest.model, manifest.vocab_size, manifest.k, 0)?;
    if ps.len() != manifest.params.len() {
        return Err(bad(&mpath, "parameter count does not match the model layout"));
    }
    for (e, m) in ps.entries().iter().zip(&manifest.params) {
        if e.name != m.name || e.kind != m.kind || e.tensor.shape() != m.shape.as_slice() {
            return Err(bad(&mpath, format!("parameter {} does not match the model layout", m.name)));
        }
    }

    let ppath = dir.join(PAYLOAD_FILE);
    let bytes = fs::read(&ppath).map_err(|source| ModelError::Io {
        path: ppath.clone(),
        source,
    })?;
    let n = ps.numel();
    if bytes.len() != n * 8 * SECTIONS.len() {
        return Err(bad(
            &ppath,
            format!("payload has {} bytes, expected {}", bytes.len(), n * 8 * SECTIONS.len()),
        ));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))));
    let ids: Vec<_> = ps.ids().collect();
    for &id in &ids {
        for x in ps.get_mut(id).data_mut() {
            *x = values.next().expect("length checked");
        }
    }
    let mut state = OptimizerState::new(&ps);
    state.step = manifest.step;
    for section in [&mut state.m, &mut state.v, &mut state.ema] {
        for xs in section.iter_mut() {
            for x in xs.iter_mut() {
                *x = values.next().expect("length checked");
            }
        }
    }
    Ok(Checkpoint {
        manifest,
        model,
        params: ps,
        state,
    })
}
