//! Parameter checkpoints in the EMB1 container.
//!
//! Every tensor is flattened into one named row. Rows in an EMB1 file share
//! a width, so shorter tensors are zero-padded to the longest one; the JSON
//! manifest at `<path>.json` records the true shapes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::dsp::sidecar_path;
use crate::embedding::{load_embeddings, save_embeddings, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ShapeManifest {
    tensors: Vec<TensorShape>,
}

pub fn save_checkpoint<T: Scalar, P: Parameters<T>>(params: &P, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let shapes = params.shapes();
    let tensors = params.tensors();
    let width = tensors.iter().map(|t| t.len()).max().unwrap_or(1).max(1);
    let mut data = Vec::with_capacity(width * tensors.len());
    for t in &tensors {
        data.extend(t.iter().map(|x| x.as_f64() as f32));
        data.extend(std::iter::repeat_n(0.0f32, width - t.len()));
    }
    let ids = shapes.iter().map(|(n, _)| n.clone()).collect();
    save_embeddings(&EmbeddingMatrix::new(ids, width, data)?, path)?;
    let manifest = ShapeManifest {
        tensors: shapes
            .into_iter()
            .map(|(name, shape)| TensorShape { name, shape })
            .collect(),
    };
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(side, e))
}

/// Loads values into `params`, whose tensor names and shapes must match the
/// checkpoint exactly.
pub fn load_checkpoint<T: Scalar, P: Parameters<T>>(params: &mut P, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let stored = load_embeddings(path)?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let manifest: ShapeManifest = serde_json::from_str(&text)?;

    let expected: Vec<TensorShape> = params
        .shapes()
        .into_iter()
        .map(|(name, shape)| TensorShape { name, shape })
        .collect();
    if manifest.tensors != expected {
        return Err(Error::Shape(format!(
            "checkpoint tensors {:?} do not match model {:?}",
            manifest.tensors, expected
        )));
    }
    for (shape, dst) in expected.iter().zip(params.tensors_mut()) {
        let row = stored
            .get(&shape.name)
            .ok_or_else(|| Error::Lookup {
                id: shape.name.clone(),
                store: "checkpoint",
            })?;
        if row.len() < dst.len() {
            return Err(Error::Truncation(format!("tensor {} row too short", shape.name)));
        }
        for (d, &s) in dst.iter_mut().zip(row) {
            *d = T::of(s as f64);
        }
    }
    Ok(())
}
