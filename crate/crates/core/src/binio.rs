//! Flat binary matrix persistence: row-major little-endian f32.
//!
//! Every on-disk matrix in a run directory uses this layout, paired with a
//! JSON sidecar that records the shape (see the stage modules for sidecars).

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn write_matrix_f32<T: Scalar>(path: &Path, m: &Array2<T>) -> Result<()> {
    let mut buf = Vec::with_capacity(m.len() * 4);
    for v in m.iter() {
        buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_matrix_f32<T: Scalar>(path: &Path, rows: usize, cols: usize) -> Result<Array2<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = rows * cols * 4;
    if bytes.len() != expected {
        return Err(Error::ArtifactCorrupt {
            path: path.to_path_buf(),
            msg: format!("expected {expected} bytes for {rows}x{cols} f32, found {}", bytes.len()),
        });
    }
    let mut data = Vec::with_capacity(rows * cols);
    for chunk in bytes.chunks_exact(4) {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        data.push(T::from_f64_c(v as f64));
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::ArtifactCorrupt {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn write_vector_f32<T: Scalar>(path: &Path, v: &Array1<T>) -> Result<()> {
    let mut buf = Vec::with_capacity(v.len() * 4);
    for x in v.iter() {
        buf.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_vector_f32<T: Scalar>(path: &Path, len: usize) -> Result<Array1<T>> {
    let m = read_matrix_f32::<T>(path, 1, len)?;
    Ok(m.row(0).to_owned())
}
