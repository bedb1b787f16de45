//! Linear morphable-model decoder: mean vertices plus shape- and
//! expression-basis offsets, exported as Wavefront OBJ for qualitative
//! inspection of the parameter space the classifiers consume.
//!
//! Pose-dependent correctives, joint articulation, and skinning are out of
//! scope: the classifiers consume parameters, not geometry, and the linear
//! identity+expression decode suffices for inspection. The asset format
//! reserves a flags byte so richer blocks can be added without breaking
//! existing files.
//!
//! Asset envelope: magic `FEIMM`, u16 version, u32 vertex/shape/expression
//! /triangle counts, u8 reserved flags (0), then little-endian f64 blocks
//! (mean `3V`, shape basis `3V x S` row-major, expression basis `3V x E`)
//! and `3T` u32 triangle indices.

use std::io::Write;
use std::path::Path;

use crate::bytes::ByteReader;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const ASSET_MAGIC: &[u8; 5] = b"FEIMM";
pub const ASSET_VERSION: u16 = 1;

/// Mean geometry plus linear shape/expression bases and the triangle list.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphableAsset {
    /// `(V x 3)` mean vertex positions.
    pub mean: Matrix,
    /// `(3V x S)`: column `k` is the k-th shape component's vertex offsets.
    pub shape_basis: Matrix,
    /// `(3V x E)`: column `k` is the k-th expression blendshape.
    pub expr_basis: Matrix,
    /// Triangle vertex indices, each `< V`.
    pub triangles: Vec<[u32; 3]>,
}

impl MorphableAsset {
    pub fn new(
        mean: Matrix,
        shape_basis: Matrix,
        expr_basis: Matrix,
        triangles: Vec<[u32; 3]>,
    ) -> Result<Self> {
        if mean.cols() != 3 {
            return Err(Error::Shape(format!(
                "mean vertices must be Vx3, got {}x{}",
                mean.rows(),
                mean.cols()
            )));
        }
        let v3 = mean.rows() * 3;
        for (name, basis) in [("shape basis", &shape_basis), ("expression basis", &expr_basis)] {
            if basis.rows() != v3 {
                return Err(Error::Format {
                    offset: 0,
                    message: format!(
                        "{name}: {} rows, expected 3V = {v3}",
                        basis.rows()
                    ),
                });
            }
        }
        let v = mean.rows() as u32;
        for (t, tri) in triangles.iter().enumerate() {
            for &idx in tri {
                if idx >= v {
                    return Err(Error::Format {
                        offset: 0,
                        message: format!("triangle {t} references vertex {idx}, only {v} exist"),
                    });
                }
            }
        }
        Ok(MorphableAsset {
            mean,
            shape_basis,
            expr_basis,
            triangles,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.mean.rows()
    }

    pub fn shape_dims(&self) -> usize {
        self.shape_basis.cols()
    }

    pub fn expr_dims(&self) -> usize {
        self.expr_basis.cols()
    }
}

/// Decoded geometry: vertices plus the asset's triangle list.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshResult {
    /// `(V x 3)` vertex positions.
    pub vertices: Matrix,
    pub triangles: Vec<[u32; 3]>,
}

/// `vertices = mean + Shape * shape_params + Expr * expr_params`.
///
/// Shorter parameter vectors are zero-padded against the basis widths;
/// longer ones are a dimension error. The decode is exactly linear in
/// each parameter block.
pub fn decode_mesh(
    asset: &MorphableAsset,
    shape_params: &[f64],
    expr_params: &[f64],
) -> Result<MeshResult> {
    if shape_params.len() > asset.shape_dims() {
        return Err(Error::Domain(format!(
            "{} shape parameters exceed the basis width {}",
            shape_params.len(),
            asset.shape_dims()
        )));
    }
    if expr_params.len() > asset.expr_dims() {
        return Err(Error::Domain(format!(
            "{} expression parameters exceed the basis width {}",
            expr_params.len(),
            asset.expr_dims()
        )));
    }
    let v = asset.vertex_count();
    let mut flat: Vec<f64> = asset.mean.data().to_vec();
    accumulate(&mut flat, &asset.shape_basis, shape_params);
    accumulate(&mut flat, &asset.expr_basis, expr_params);
    let vertices = Matrix::from_vec(v, 3, flat)?;
    Ok(MeshResult {
        vertices,
        triangles: asset.triangles.clone(),
    })
}

fn accumulate(flat: &mut [f64], basis: &Matrix, params: &[f64]) {
    for (row, acc) in flat.iter_mut().enumerate() {
        let b = basis.row(row);
        for (k, &p) in params.iter().enumerate() {
            *acc += b[k] * p;
        }
    }
}

/// Writes Wavefront OBJ: `v x y z` lines (shortest round-trip float
/// printing) followed by 1-indexed `f a b c` lines.
pub fn export_obj(mesh: &MeshResult, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..mesh.vertices.rows() {
        let r = mesh.vertices.row(i);
        out.push_str(&format!("v {} {} {}\n", r[0], r[1], r[2]));
    }
    for tri in &mesh.triangles {
        out.push_str(&format!("f {} {} {}\n", tri[0] + 1, tri[1] + 1, tri[2] + 1));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Parses the `v`/`f` subset of OBJ written by [`export_obj`].
pub fn parse_obj(path: &Path) -> Result<MeshResult> {
    let text = std::fs::read_to_string(path)?;
    let mut vertices: Vec<f64> = Vec::new();
    let mut triangles = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                for _ in 0..3 {
                    let tok = parts.next().ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: "vertex line needs 3 coordinates".into(),
                    })?;
                    vertices.push(tok.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("invalid coordinate {tok:?}"),
                    })?);
                }
            }
            Some("f") => {
                let mut tri = [0u32; 3];
                for slot in tri.iter_mut() {
                    let tok = parts.next().ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: "face line needs 3 indices".into(),
                    })?;
                    let one_based: u32 = tok.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("invalid face index {tok:?}"),
                    })?;
                    if one_based == 0 {
                        return Err(Error::Parse {
                            line: line_no,
                            message: "face indices are 1-based".into(),
                        });
                    }
                    *slot = one_based - 1;
                }
                triangles.push(tri);
            }
            _ => {}
        }
    }
    let v = vertices.len() / 3;
    Ok(MeshResult {
        vertices: Matrix::from_vec(v, 3, vertices)?,
        triangles,
    })
}

pub fn save_asset(asset: &MorphableAsset, path: &Path) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(ASSET_MAGIC);
    out.extend_from_slice(&ASSET_VERSION.to_le_bytes());
    out.extend_from_slice(&(asset.vertex_count() as u32).to_le_bytes());
    out.extend_from_slice(&(asset.shape_dims() as u32).to_le_bytes());
    out.extend_from_slice(&(asset.expr_dims() as u32).to_le_bytes());
    out.extend_from_slice(&(asset.triangles.len() as u32).to_le_bytes());
    out.push(0); // reserved flags
    for &x in asset.mean.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for &x in asset.shape_basis.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for &x in asset.expr_basis.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for tri in &asset.triangles {
        for &idx in tri {
            out.extend_from_slice(&idx.to_le_bytes());
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_asset(path: &Path) -> Result<MorphableAsset> {
    let bytes = std::fs::read(path)?;
    let mut r = ByteReader::new(&bytes);
    let magic = r.take(5, "magic")?;
    if magic != ASSET_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad magic (expected FEIMM)".into(),
        });
    }
    let version = r.u16("version")?;
    if version != ASSET_VERSION {
        return Err(Error::Format {
            offset: 5,
            message: format!("unsupported version {version} (supported: {ASSET_VERSION})"),
        });
    }
    let v = r.u32("vertex count")? as usize;
    let s = r.u32("shape dims")? as usize;
    let e = r.u32("expression dims")? as usize;
    let t = r.u32("triangle count")? as usize;
    let flags_offset = r.pos();
    let flags = r.u8("flags")?;
    if flags != 0 {
        return Err(Error::Format {
            offset: flags_offset,
            message: format!("reserved flags byte must be 0, got {flags}"),
        });
    }
    let read_block = |rows: usize, cols: usize, what: &str, r: &mut ByteReader| -> Result<Matrix> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(r.f64(what)?);
        }
        Matrix::from_vec(rows, cols, data)
    };
    let mean = read_block(v, 3, "mean vertices", &mut r)?;
    let shape_basis = read_block(3 * v, s, "shape basis", &mut r)?;
    let expr_basis = read_block(3 * v, e, "expression basis", &mut r)?;
    let mut triangles = Vec::with_capacity(t);
    for _ in 0..t {
        let a = r.u32("triangle index")?;
        let b = r.u32("triangle index")?;
        let c = r.u32("triangle index")?;
        triangles.push([a, b, c]);
    }
    r.expect_end()?;
    MorphableAsset::new(mean, shape_basis, expr_basis, triangles)
}
