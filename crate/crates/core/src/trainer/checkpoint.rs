use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Model;
use crate::error::{Error, Result};
use crate::ingest::{load_embeddings, save_embeddings};
use crate::matrix::EmbeddingMatrix;

const MANIFEST: &str = "checkpoint.json";
const TENSORS: [&str; 5] = ["item_embeddings", "w1", "b1", "w2", "b2"];

/// `checkpoint.json`, written next to one `EMB1` file per tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub num_items: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub normalize_candidates: bool,
    pub files: Vec<String>,
}

/// Write the model under `dir` (created if missing). Returns the written paths.
pub fn save_checkpoint(model: &Model, dir: &Path, normalize: bool) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir)?;
    let tensors = [
        model.item_embeddings.clone(),
        model.w1.clone(),
        EmbeddingMatrix::new(1, model.b1.len(), model.b1.clone())?,
        model.w2.clone(),
        EmbeddingMatrix::new(1, model.b2.len(), model.b2.clone())?,
    ];
    let mut written = Vec::new();
    let mut files = Vec::new();
    for (name, t) in TENSORS.iter().zip(&tensors) {
        let file = format!("{name}.emb1");
        let path = dir.join(&file);
        save_embeddings(t, &path)?;
        written.push(path);
        files.push(file);
    }
    let manifest = CheckpointManifest {
        num_items: model.num_items(),
        embed_dim: model.embed_dim(),
        hidden_dim: model.hidden_dim(),
        normalize_candidates: normalize,
        files,
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    written.push(path);
    Ok(written)
}

pub fn load_checkpoint(dir: &Path) -> Result<(Model, CheckpointManifest)> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", dir.join(MANIFEST).display())))?;
    let load = |name: &str| load_embeddings(dir.join(format!("{name}.emb1")));
    let model = Model {
        item_embeddings: load("item_embeddings")?,
        w1: load("w1")?,
        b1: load("b1")?.into_vec(),
        w2: load("w2")?,
        b2: load("b2")?.into_vec(),
    };
    let (n, d, h) = (model.num_items(), model.embed_dim(), model.hidden_dim());
    let consistent = n == manifest.num_items
        && d == manifest.embed_dim
        && h == manifest.hidden_dim
        && model.w1.cols() == d
        && model.w2.rows() == d
        && model.w2.cols() == h
        && model.b1.len() == h
        && model.b2.len() == d;
    if !consistent {
        return Err(Error::Format(format!(
            "checkpoint tensors in {} do not match its manifest",
            dir.display()
        )));
    }
    Ok((model, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{init_model, InitMode, TrainConfig};

    #[test]
    fn round_trip_at_f32_precision() {
        let cfg = TrainConfig {
            embed_dim: 3,
            hidden_dim: 2,
            ..TrainConfig::default()
        };
        let model = init_model(InitMode::Random { num_items: 4 }, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&model, dir.path(), true).unwrap();
        let (back, manifest) = load_checkpoint(dir.path()).unwrap();
        assert!(manifest.normalize_candidates);
        for (a, b) in model.params().iter().zip(back.params()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
    }
}
