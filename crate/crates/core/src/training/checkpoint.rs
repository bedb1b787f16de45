//! Checkpoint serialization.
//!
//! Envelope: magic `FEI3D\0`, u16 version, u32 length-prefixed JSON header
//! (architecture descriptor, training metadata, and the declared block
//! list), then the raw 64-bit little-endian parameter blocks in declared
//! order. Round-trips are bit-exact; version or magic mismatches are
//! rejected outright.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bytes::ByteReader;
use crate::error::{Error, Result};
use crate::nn::{build_classifier_with, HeadKind, MlpConfig, MlpModel};
use crate::numerics::{Matrix, RngState};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"FEI3D\0";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Training metadata carried alongside the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub best_val_loss: Option<f64>,
    pub seed: u64,
}

/// Architecture descriptor: enough to rebuild the model skeleton before
/// the blocks are copied in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ArchDescriptor {
    Mlp {
        input_dim: usize,
        head: HeadKind,
        config: MlpConfig,
    },
    Intermediate {
        dim_2d: usize,
        dim_3d: usize,
        proj_dim: usize,
        head: HeadKind,
        config: MlpConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlockDesc {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    arch: ArchDescriptor,
    meta: CheckpointMeta,
    blocks: Vec<BlockDesc>,
}

/// Serializes an envelope from named blocks. Exposed for model kinds
/// beyond the plain MLP (the intermediate fusion model reuses it).
pub fn write_envelope(
    arch: &ArchDescriptor,
    meta: &CheckpointMeta,
    blocks: &[(String, &Matrix)],
    path: &Path,
) -> Result<()> {
    let header = CheckpointHeader {
        arch: arch.clone(),
        meta: meta.clone(),
        blocks: blocks
            .iter()
            .map(|(name, m)| BlockDesc {
                name: name.clone(),
                rows: m.rows(),
                cols: m.cols(),
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for (_, m) in blocks {
        for &x in m.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Named parameter blocks in their declared checkpoint order.
pub type NamedBlocks = Vec<(String, Matrix)>;

/// Parses an envelope into its descriptor, metadata, and named blocks.
pub fn read_envelope(path: &Path) -> Result<(ArchDescriptor, CheckpointMeta, NamedBlocks)> {
    let bytes = std::fs::read(path)?;
    let mut r = ByteReader::new(&bytes);
    let magic = r.take(6, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad magic (expected FEI3D)".into(),
        });
    }
    let version = r.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            offset: 6,
            message: format!("unsupported version {version} (supported: {CHECKPOINT_VERSION})"),
        });
    }
    let header_len = r.u32("header length")? as usize;
    let header_offset = r.pos();
    let header_bytes = r.take(header_len, "header")?;
    let header: CheckpointHeader = serde_json::from_slice(header_bytes).map_err(|e| Error::Format {
        offset: header_offset,
        message: format!("invalid header json: {e}"),
    })?;
    let mut blocks = Vec::with_capacity(header.blocks.len());
    for desc in &header.blocks {
        let count = desc.rows * desc.cols;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(r.f64(&format!("block {}", desc.name))?);
        }
        blocks.push((desc.name.clone(), Matrix::from_vec(desc.rows, desc.cols, data)?));
    }
    r.expect_end()?;
    Ok((header.arch, header.meta, blocks))
}

/// Copies named blocks into a freshly built model, validating names and
/// shapes one by one.
pub fn apply_blocks(target: Vec<(String, &mut Matrix)>, blocks: &[(String, Matrix)]) -> Result<()> {
    if target.len() != blocks.len() {
        return Err(Error::Format {
            offset: 0,
            message: format!(
                "checkpoint carries {} blocks, model expects {}",
                blocks.len(),
                target.len()
            ),
        });
    }
    for ((tname, tm), (bname, bm)) in target.into_iter().zip(blocks) {
        if &tname != bname {
            return Err(Error::Format {
                offset: 0,
                message: format!("block order mismatch: expected {tname}, found {bname}"),
            });
        }
        if tm.shape() != bm.shape() {
            return Err(Error::Format {
                offset: 0,
                message: format!(
                    "block {tname}: checkpoint {}x{} vs model {}x{}",
                    bm.rows(),
                    bm.cols(),
                    tm.rows(),
                    tm.cols()
                ),
            });
        }
        tm.data_mut().copy_from_slice(bm.data());
    }
    Ok(())
}

/// Saves the model's parameters, batch-norm running statistics, and the
/// training metadata.
pub fn save_checkpoint(model: &MlpModel, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let arch = ArchDescriptor::Mlp {
        input_dim: model.input_dim(),
        head: model.head(),
        config: model.config().clone(),
    };
    write_envelope(&arch, meta, &model.state_blocks(), path)
}

/// Rebuilds the model from a checkpoint; every parameter and running
/// statistic is restored bit-exactly. The dropout stream restarts from
/// the recorded seed.
pub fn load_checkpoint(path: &Path) -> Result<(MlpModel, CheckpointMeta)> {
    let (arch, meta, blocks) = read_envelope(path)?;
    match arch {
        ArchDescriptor::Mlp {
            input_dim,
            head,
            config,
        } => {
            let mut model =
                build_classifier_with(input_dim, head, &config, RngState::seed(meta.seed))?;
            apply_blocks(model.state_blocks_mut(), &blocks)?;
            Ok((model, meta))
        }
        ArchDescriptor::Intermediate { .. } => Err(Error::Format {
            offset: 0,
            message: "checkpoint holds an intermediate fusion model; load it with the fusion loader"
                .into(),
        }),
    }
}
