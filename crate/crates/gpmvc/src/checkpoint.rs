//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"GPMV"
//! version u32 (currently 1)
//! meta    u32 length + JSON {config, dims, k, fusion_mode}
//! count   u32 tensor count
//! tensor  u16 key length + UTF-8 key, u32 rows, u32 cols, rows*cols f64
//! ```
//!
//! Tensors are keyed by `(component, view, layer)`, e.g. `enc1/l0/w`,
//! `shared/l0/b`, `fusion/proj_w`, `centroids`. Vectors are stored as one
//! row. Decoding is fully bounds-checked and never trusts embedded lengths.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionMode;
use crate::networks::{Mlp, ModelState, NetworkConfig};
use crate::rng::SeededRng;

const MAGIC: &[u8; 4] = b"GPMV";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: NetworkConfig,
    pub dims: Vec<usize>,
    pub k: usize,
    pub fusion_mode: FusionMode,
}

/// A decoded checkpoint: the rebuilt model plus the centroid matrix when the
/// run had reached clustering.
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: ModelState,
    pub centroids: Option<Array2<f64>>,
}

fn push_tensor(out: &mut Vec<u8>, key: &str, rows: usize, cols: usize, data: &[f64]) {
    out.extend_from_slice(&(key.len() as u16).to_le_bytes());
    out.extend_from_slice(key.as_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for &x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn mlp_tensors(prefix: &str, mlp: &Mlp, out: &mut Vec<(String, usize, usize, Vec<f64>)>) {
    for (i, layer) in mlp.layers.iter().enumerate() {
        let w = &layer.lin.w;
        out.push((
            format!("{prefix}/l{i}/w"),
            w.nrows(),
            w.ncols(),
            w.iter().copied().collect(),
        ));
        let b = &layer.lin.b;
        out.push((format!("{prefix}/l{i}/b"), 1, b.len(), b.to_vec()));
    }
}

/// Serialize a model (and optional centroids) into checkpoint bytes.
pub fn encode_checkpoint(
    model: &ModelState,
    k: usize,
    centroids: Option<&Array2<f64>>,
) -> Vec<u8> {
    let meta = CheckpointMeta {
        config: model.config.clone(),
        dims: model.dims.clone(),
        k,
        fusion_mode: model.fusion.mode,
    };
    let meta_json = serde_json::to_vec(&meta).expect("meta serialization");

    let mut tensors: Vec<(String, usize, usize, Vec<f64>)> = Vec::new();
    for (v, enc) in model.encoders.iter().enumerate() {
        mlp_tensors(&format!("enc{v}"), enc, &mut tensors);
    }
    mlp_tensors("shared", &model.shared, &mut tensors);
    for (v, gen) in model.generators.iter().enumerate() {
        mlp_tensors(&format!("gen{v}"), gen, &mut tensors);
    }
    for (v, disc) in model.discriminators.iter().enumerate() {
        mlp_tensors(&format!("disc{v}"), disc, &mut tensors);
    }
    tensors.push((
        "fusion/raw_weights".into(),
        1,
        model.fusion.raw_weights.len(),
        model.fusion.raw_weights.to_vec(),
    ));
    tensors.push((
        "fusion/proj_w".into(),
        model.fusion.proj_w.nrows(),
        model.fusion.proj_w.ncols(),
        model.fusion.proj_w.iter().copied().collect(),
    ));
    tensors.push((
        "fusion/proj_b".into(),
        1,
        model.fusion.proj_b.len(),
        model.fusion.proj_b.to_vec(),
    ));
    if let Some(mu) = centroids {
        tensors.push((
            "centroids".into(),
            mu.nrows(),
            mu.ncols(),
            mu.iter().copied().collect(),
        ));
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_json);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (key, rows, cols, data) in &tensors {
        push_tensor(&mut out, key, *rows, *cols, data);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let slice = &self.bytes[self.at..end];
        self.at = end;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Decode and validate checkpoint bytes.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let meta_len = r.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| Error::Checkpoint(format!("meta: {e}")))?;
    if meta.dims.is_empty() || meta.dims.len() > 1024 {
        return Err(Error::Checkpoint("implausible view count".into()));
    }
    meta.config
        .validate(&meta.dims, meta.k.max(1))
        .map_err(|e| Error::Checkpoint(format!("config: {e}")))?;

    let count = r.u32()? as usize;
    // Upper bound implied by the architecture; rejects absurd counts early.
    let max_tensors = 2 * (meta.dims.len() * (meta.config.encoder_hidden.len() + 4) + 8) + 4;
    if count > max_tensors {
        return Err(Error::Checkpoint(format!("too many tensors: {count}")));
    }

    let mut tensors: Vec<(String, Array2<f64>)> = Vec::with_capacity(count);
    for _ in 0..count {
        let key_len = r.u16()? as usize;
        let key = std::str::from_utf8(r.take(key_len)?)
            .map_err(|_| Error::Checkpoint("non-utf8 key".into()))?
            .to_string();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let elems = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint("tensor size overflow".into()))?;
        let byte_len = elems
            .checked_mul(8)
            .ok_or_else(|| Error::Checkpoint("tensor size overflow".into()))?;
        let raw = r.take(byte_len)?;
        let mut data = Vec::with_capacity(elems);
        for chunk in raw.chunks_exact(8) {
            let x = f64::from_le_bytes(chunk.try_into().unwrap());
            if !x.is_finite() {
                return Err(Error::Checkpoint(format!("non-finite value in {key}")));
            }
            data.push(x);
        }
        let tensor = Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| Error::Checkpoint(format!("{key}: {e}")))?;
        tensors.push((key, tensor));
    }
    if r.at != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }

    // Rebuild the model skeleton and fill it tensor by tensor.
    let mut rng = SeededRng::new(0);
    let mut model = ModelState::init(&meta.config, &meta.dims, meta.fusion_mode, &mut rng);
    let mut centroids = None;

    let fill = |target_w: &mut Array2<f64>, tensor: &Array2<f64>, key: &str| -> Result<()> {
        if target_w.raw_dim() != tensor.raw_dim() {
            return Err(Error::Checkpoint(format!(
                "{key}: expected {:?}, got {:?}",
                target_w.raw_dim(),
                tensor.raw_dim()
            )));
        }
        target_w.assign(tensor);
        Ok(())
    };
    let fill_vec = |target: &mut Array1<f64>, tensor: &Array2<f64>, key: &str| -> Result<()> {
        if tensor.nrows() != 1 || tensor.ncols() != target.len() {
            return Err(Error::Checkpoint(format!(
                "{key}: expected 1x{}, got {:?}",
                target.len(),
                tensor.raw_dim()
            )));
        }
        target.assign(&tensor.row(0));
        Ok(())
    };

    let mut seen = std::collections::BTreeSet::new();
    for (key, tensor) in &tensors {
        if !seen.insert(key.clone()) {
            return Err(Error::Checkpoint(format!("duplicate tensor {key}")));
        }
        let parts: Vec<&str> = key.split('/').collect();
        match parts.as_slice() {
            ["centroids"] => {
                if tensor.ncols() != meta.config.latent_dim || tensor.nrows() != meta.k {
                    return Err(Error::Checkpoint("centroid shape mismatch".into()));
                }
                centroids = Some(tensor.clone());
            }
            ["fusion", "raw_weights"] => fill_vec(&mut model.fusion.raw_weights, tensor, key)?,
            ["fusion", "proj_w"] => fill(&mut model.fusion.proj_w, tensor, key)?,
            ["fusion", "proj_b"] => fill_vec(&mut model.fusion.proj_b, tensor, key)?,
            [component, layer, leaf] => {
                let (mlp, rest): (&mut Mlp, &str) = if let Some(v) = component.strip_prefix("enc")
                {
                    let v: usize = v.parse().map_err(|_| bad_key(key))?;
                    (model.encoders.get_mut(v).ok_or_else(|| bad_key(key))?, *layer)
                } else if let Some(v) = component.strip_prefix("gen") {
                    let v: usize = v.parse().map_err(|_| bad_key(key))?;
                    (model.generators.get_mut(v).ok_or_else(|| bad_key(key))?, *layer)
                } else if let Some(v) = component.strip_prefix("disc") {
                    let v: usize = v.parse().map_err(|_| bad_key(key))?;
                    (
                        model.discriminators.get_mut(v).ok_or_else(|| bad_key(key))?,
                        *layer,
                    )
                } else if *component == "shared" {
                    (&mut model.shared, *layer)
                } else {
                    return Err(bad_key(key));
                };
                let li: usize = rest
                    .strip_prefix('l')
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad_key(key))?;
                let layer = mlp.layers.get_mut(li).ok_or_else(|| bad_key(key))?;
                match *leaf {
                    "w" => fill(&mut layer.lin.w, tensor, key)?,
                    "b" => fill_vec(&mut layer.lin.b, tensor, key)?,
                    _ => return Err(bad_key(key)),
                }
            }
            _ => return Err(bad_key(key)),
        }
    }

    // Every parameter tensor must have been provided.
    let expected = 2
        * (model.encoders.iter().map(|m| m.layers.len()).sum::<usize>()
            + model.shared.layers.len()
            + model.generators.iter().map(|m| m.layers.len()).sum::<usize>()
            + model.discriminators.iter().map(|m| m.layers.len()).sum::<usize>())
        + 3;
    let provided = seen.len() - usize::from(centroids.is_some());
    if provided != expected {
        return Err(Error::Checkpoint(format!(
            "expected {expected} parameter tensors, got {provided}"
        )));
    }

    Ok(Checkpoint {
        meta,
        model,
        centroids,
    })
}

fn bad_key(key: &str) -> Error {
    Error::Checkpoint(format!("unknown tensor key {key}"))
}

pub fn save_checkpoint(
    path: &Path,
    model: &ModelState,
    k: usize,
    centroids: Option<&Array2<f64>>,
) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model, k, centroids)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::NetworkConfig;

    fn sample_model() -> ModelState {
        let config = NetworkConfig {
            latent_dim: 3,
            encoder_hidden: vec![5, 4],
            discriminator_hidden: [4, 3],
            ..NetworkConfig::default()
        };
        let mut rng = SeededRng::new(11);
        ModelState::init(&config, &[6, 4], FusionMode::Projected, &mut rng)
    }

    #[test]
    fn roundtrip_preserves_every_tensor() {
        let model = sample_model();
        let mu = Array2::from_shape_fn((3, 3), |(i, j)| (i * 3 + j) as f64);
        let bytes = encode_checkpoint(&model, 3, Some(&mu));
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.meta.dims, vec![6, 4]);
        assert_eq!(back.centroids.as_ref().unwrap(), &mu);
        assert_eq!(
            back.model.encoders[0].layers[0].lin.w,
            model.encoders[0].layers[0].lin.w
        );
        assert_eq!(back.model.shared.layers[0].lin.b, model.shared.layers[0].lin.b);
        assert_eq!(
            back.model.generators[1].layers[2].lin.w,
            model.generators[1].layers[2].lin.w
        );
        assert_eq!(back.model.fusion.proj_w, model.fusion.proj_w);
        // Bit-identical re-encode.
        assert_eq!(encode_checkpoint(&back.model, 3, back.centroids.as_ref()), bytes);
    }

    #[test]
    fn rejects_malformed_bytes() {
        let model = sample_model();
        let bytes = encode_checkpoint(&model, 3, None);

        assert!(decode_checkpoint(b"").is_err());
        assert!(decode_checkpoint(b"NOPE").is_err());
        assert!(decode_checkpoint(&bytes[..10]).is_err());

        let mut bad_version = bytes.clone();
        bad_version[4] = 9;
        assert!(decode_checkpoint(&bad_version).is_err());

        let mut truncated = bytes.clone();
        truncated.truncate(bytes.len() - 3);
        assert!(decode_checkpoint(&truncated).is_err());

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(decode_checkpoint(&trailing).is_err());

        // Flip a tensor-count byte: either too many tensors or truncation.
        let mut miscounted = bytes.clone();
        let meta_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        miscounted[12 + meta_len] = 0xFF;
        assert!(decode_checkpoint(&miscounted).is_err());
    }

    #[test]
    fn rejects_non_finite_parameters() {
        let mut model = sample_model();
        model.shared.layers[0].lin.w[[0, 0]] = f64::NAN;
        let bytes = encode_checkpoint(&model, 3, None);
        assert!(decode_checkpoint(&bytes).is_err());
    }
}
