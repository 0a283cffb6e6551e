//! On-disk formats.
//!
//! Fields use the `.bcw` container: the magic `BCWF`, a little-endian `u64`
//! header length, a JSON header, then little-endian `f64` values in row-major
//! node order (complex values as interleaved re/im pairs).
//!
//! Matrices (DtN kernels and `K`) are a JSON manifest next to a raw
//! little-endian `f64` block whose SHA-256 the manifest records.

use std::fs;
use std::path::{Path, PathBuf};

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bc_ops::ConnectingMatrix;
use crate::dtn::DtnMatrix;
use crate::error::{Error, Result};
use crate::grid::{BoundaryGeometry, ComplexField, Field, GridSpec, ScalarField, SpatialGrid, TimeGrid};
use crate::signal::SignalLayout;
use crate::solver::WaveRecord;

const MAGIC: &[u8; 4] = b"BCWF";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    C128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub dim: usize,
    pub origin: Vec<f64>,
    pub lengths: Vec<f64>,
    pub n_cells: Vec<usize>,
    pub name: String,
    pub dtype: Dtype,
}

impl FieldHeader {
    fn new(grid: &SpatialGrid, name: &str, dtype: Dtype) -> Self {
        let spec = grid.spec();
        FieldHeader { dim: spec.dim, origin: spec.origin, lengths: spec.lengths, n_cells: spec.n_cells, name: name.into(), dtype }
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec { dim: self.dim, origin: self.origin.clone(), lengths: self.lengths.clone(), n_cells: self.n_cells.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    Real(ScalarField),
    Complex(ComplexField),
}

fn encode(header: &FieldHeader, values: impl Iterator<Item = f64>) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("field header serializes");
    let mut out = Vec::with_capacity(12 + json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn encode_field(name: &str, field: &ScalarField) -> Vec<u8> {
    encode(&FieldHeader::new(field.grid(), name, Dtype::F64), field.values().iter().copied())
}

pub fn encode_complex_field(name: &str, field: &ComplexField) -> Vec<u8> {
    encode(&FieldHeader::new(field.grid(), name, Dtype::C128), field.values().iter().flat_map(|z| [z.re, z.im]))
}

fn le_values(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Config(format!("binary block of {} bytes is not a whole number of f64", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

pub fn decode_field(bytes: &[u8]) -> Result<(FieldHeader, FieldData)> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Config("not a .bcw field file".into()));
    }
    let len = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(12..12 + len).ok_or_else(|| Error::Config("truncated .bcw header".into()))?;
    let header: FieldHeader = serde_json::from_slice(body)?;
    let grid = header.grid_spec().build()?;
    let values = le_values(&bytes[12 + len..])?;
    let data = match header.dtype {
        Dtype::F64 => FieldData::Real(Field::new(grid, values)?),
        Dtype::C128 => {
            let z = values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
            FieldData::Complex(Field::new(grid, z)?)
        }
    };
    Ok((header, data))
}

pub fn write_field(path: &Path, name: &str, field: &ScalarField) -> Result<()> {
    fs::write(path, encode_field(name, field))?;
    Ok(())
}

pub fn write_complex_field(path: &Path, name: &str, field: &ComplexField) -> Result<()> {
    fs::write(path, encode_complex_field(name, field))?;
    Ok(())
}

/// Reads a real field; complex files are rejected.
pub fn read_field(path: &Path) -> Result<ScalarField> {
    match decode_field(&fs::read(path)?)?.1 {
        FieldData::Real(f) => Ok(f),
        FieldData::Complex(_) => Err(Error::Config(format!("{} holds a complex field", path.display()))),
    }
}

pub fn read_complex_field(path: &Path) -> Result<ComplexField> {
    match decode_field(&fs::read(path)?)?.1 {
        FieldData::Complex(f) => Ok(f),
        FieldData::Real(f) => Ok(f.to_complex()),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn block_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(f64::to_le_bytes).collect()
}

fn sibling(manifest: &Path, ext: &str) -> PathBuf {
    manifest.with_extension(ext)
}

/// Manifest of a persisted matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixManifest {
    /// `"DtN"` or `"K"`.
    pub tag: String,
    pub grid: GridSpec,
    /// Signal grid of the input layout.
    pub time: TimeGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
    pub fingerprint: String,
    /// Shape of the block, outermost first.
    pub dims: Vec<usize>,
    pub block: String,
    pub block_sha256: String,
}

fn write_matrix(path: &Path, mut manifest: MatrixManifest, bytes: Vec<u8>) -> Result<MatrixManifest> {
    let bin = sibling(path, "bin");
    manifest.block = bin.file_name().and_then(|n| n.to_str()).unwrap_or("block.bin").to_string();
    manifest.block_sha256 = sha256_hex(&bytes);
    fs::write(&bin, bytes)?;
    fs::write(path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

fn read_matrix(path: &Path, tag: &str) -> Result<(MatrixManifest, SpatialGrid, Vec<f64>)> {
    let manifest: MatrixManifest = serde_json::from_slice(&fs::read(path)?)?;
    if manifest.tag != tag {
        return Err(Error::Config(format!("{} holds a {} matrix, expected {tag}", path.display(), manifest.tag)));
    }
    let bin = path.parent().unwrap_or(Path::new(".")).join(&manifest.block);
    let bytes = fs::read(&bin)?;
    if sha256_hex(&bytes) != manifest.block_sha256 {
        return Err(Error::Config(format!("{} does not match its manifest hash", bin.display())));
    }
    let values = le_values(&bytes)?;
    if values.len() != manifest.dims.iter().product::<usize>() {
        return Err(Error::Dimension("block length disagrees with manifest dims".into()));
    }
    let grid = manifest.grid.build()?;
    Ok((manifest, grid, values))
}

/// Writes `path` (manifest) and `path.bin` (kernel block, `[lag][b_out][b_in]`).
pub fn save_dtn(path: &Path, dtn: &DtnMatrix) -> Result<MatrixManifest> {
    let manifest = MatrixManifest {
        tag: "DtN".into(),
        grid: dtn.grid().spec(),
        time: *dtn.time(),
        substeps: Some(dtn.substeps()),
        fingerprint: dtn.fingerprint().to_string(),
        dims: vec![dtn.n_lags(), dtn.n_bnd(), dtn.n_bnd()],
        block: String::new(),
        block_sha256: String::new(),
    };
    write_matrix(path, manifest, block_bytes(dtn.kernel().iter().copied()))
}

pub fn load_dtn(path: &Path) -> Result<DtnMatrix> {
    let (m, grid, values) = read_matrix(path, "DtN")?;
    let substeps = m.substeps.ok_or_else(|| Error::Config("DtN manifest lacks substeps".into()))?;
    let layout = SignalLayout::new(&BoundaryGeometry::new(&grid), m.time);
    DtnMatrix::from_parts(grid, layout, substeps, m.fingerprint, values)
}

/// Writes `K` row-major in the same container, tagged `"K"`.
pub fn save_k(path: &Path, grid: &SpatialGrid, k: &ConnectingMatrix) -> Result<MatrixManifest> {
    let mat = k.matrix();
    let manifest = MatrixManifest {
        tag: "K".into(),
        grid: grid.spec(),
        time: *k.layout().time(),
        substeps: None,
        fingerprint: k.fingerprint().to_string(),
        dims: vec![mat.nrows(), mat.ncols()],
        block: String::new(),
        block_sha256: String::new(),
    };
    let bytes = block_bytes((0..mat.nrows()).flat_map(|i| (0..mat.ncols()).map(move |j| mat[(i, j)])));
    write_matrix(path, manifest, bytes)
}

pub fn load_k(path: &Path) -> Result<ConnectingMatrix> {
    let (m, grid, values) = read_matrix(path, "K")?;
    let (r, c) = (m.dims[0], m.dims[1]);
    let layout = SignalLayout::new(&BoundaryGeometry::new(&grid), m.time);
    ConnectingMatrix::new(layout, Mat::from_fn(r, c, |i, j| values[i * c + j]), m.fingerprint)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub t: f64,
    pub u: String,
    pub ut: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordManifest {
    pub dt: f64,
    pub cfl: f64,
    pub times: Vec<f64>,
    pub snapshots: Vec<SnapshotEntry>,
    /// `[time][trace node]` block of outward normal derivatives.
    pub normal_trace: String,
    pub normal_trace_dims: Vec<usize>,
    pub normal_trace_sha256: String,
}

/// Writes every snapshot as `.bcw` fields plus `record.json` into `dir`.
pub fn export_record(dir: &Path, record: &WaveRecord) -> Result<RecordManifest> {
    fs::create_dir_all(dir)?;
    let mut snapshots = Vec::new();
    for (i, s) in record.snapshots.iter().enumerate() {
        let (u, ut) = (format!("u_{i:04}.bcw"), format!("ut_{i:04}.bcw"));
        write_field(&dir.join(&u), "u", &s.u)?;
        write_field(&dir.join(&ut), "ut", &s.ut)?;
        snapshots.push(SnapshotEntry { t: s.t, u, ut });
    }
    let trace = &record.normal_trace;
    let bytes = block_bytes(trace.values().iter().copied());
    let manifest = RecordManifest {
        dt: record.dt,
        cfl: record.cfl,
        times: record.snapshots.iter().map(|s| s.t).collect(),
        snapshots,
        normal_trace: "normal_trace.bin".into(),
        normal_trace_dims: vec![trace.layout().n_time(), trace.layout().n_bnd()],
        normal_trace_sha256: sha256_hex(&bytes),
    };
    fs::write(dir.join("normal_trace.bin"), bytes)?;
    fs::write(dir.join("record.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtn::{assemble_dtn, TimePlan};

    fn grid() -> SpatialGrid {
        SpatialGrid::new(&[0.0, 1.0], &[1.0, 2.0], &[3, 5]).unwrap()
    }

    #[test]
    fn field_round_trip_is_bitwise() {
        let f = ScalarField::from_fn(&grid(), |x| (x[0] * 3.1).sin() + x[1] / 7.0);
        let bytes = encode_field("c", &f);
        assert_eq!(&bytes[..4], b"BCWF");
        let (h, data) = decode_field(&bytes).unwrap();
        assert_eq!(h.name, "c");
        assert_eq!(h.dtype, Dtype::F64);
        assert_eq!(data, FieldData::Real(f));
    }

    #[test]
    fn complex_field_round_trip() {
        let f = ComplexField::from_fn(&grid(), |x| Complex64::new(x[0], -x[1]));
        let (h, data) = decode_field(&encode_complex_field("phi", &f)).unwrap();
        assert_eq!(h.dtype, Dtype::C128);
        assert_eq!(data, FieldData::Complex(f));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let f = ScalarField::constant(&grid(), 1.0);
        let mut bytes = encode_field("c", &f);
        bytes.pop();
        assert!(decode_field(&bytes).is_err());
        assert!(decode_field(b"NOPE00000000").is_err());
    }

    #[test]
    fn dtn_round_trip_through_disk() {
        let g = SpatialGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[4, 4]).unwrap();
        let c = ScalarField::from_fn(&g, |x| 1.0 + 0.1 * x[0]);
        let d = assemble_dtn(&c, &TimePlan::new(0.5, 4, 2).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dtn.json");
        let m = save_dtn(&path, &d).unwrap();
        assert_eq!(m.fingerprint, d.fingerprint());
        assert_eq!(load_dtn(&path).unwrap(), d);

        std::fs::write(path.with_extension("bin"), vec![0u8; 8 * m.dims.iter().product::<usize>()]).unwrap();
        assert!(load_dtn(&path).is_err());
    }
}
