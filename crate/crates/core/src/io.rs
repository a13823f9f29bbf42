//! Columnar binary dumps and JSON-lines diagnostics.
//!
//! Binary layout: five little-endian `u64` header fields
//! `d, d', n_paths, n_steps, seed`, then the payload as little-endian `f64`
//! in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::paths::{BrownianBundle, ForwardEnsemble, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnarHeader {
    pub dim: u64,
    pub noise_dim: u64,
    pub n_paths: u64,
    pub n_steps: u64,
    pub seed: u64,
}

pub fn write_columnar<W: Write>(mut w: W, header: &ColumnarHeader, columns: &[&[f64]]) -> Result<()> {
    for v in [
        header.dim,
        header.noise_dim,
        header.n_paths,
        header.n_steps,
        header.seed,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for col in columns {
        for v in col.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the header and the whole payload.
pub fn read_columnar<R: Read>(mut r: R) -> Result<(ColumnarHeader, Vec<f64>)> {
    let mut buf = [0u8; 8];
    let mut h = [0u64; 5];
    for v in h.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = u64::from_le_bytes(buf);
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidInput(format!(
            "payload length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    let payload = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((
        ColumnarHeader {
            dim: h[0],
            noise_dim: h[1],
            n_paths: h[2],
            n_steps: h[3],
            seed: h[4],
        },
        payload,
    ))
}

fn header_of(e: &ForwardEnsemble) -> ColumnarHeader {
    ColumnarHeader {
        dim: e.dim as u64,
        noise_dim: e.bundle.noise_dim as u64,
        n_paths: e.n_paths() as u64,
        n_steps: e.n_steps() as u64,
        seed: e.bundle.seed,
    }
}

/// Payload: `X`, `n_paths × (n_steps + 1) × d`.
pub fn export_forward(e: &ForwardEnsemble, path: &Path) -> Result<()> {
    write_columnar(BufWriter::new(File::create(path)?), &header_of(e), &[e.states()])
}

/// Payload: `ΔW`, `n_paths × n_steps × d'`; the `d` field is 0.
pub fn export_bundle(b: &BrownianBundle, path: &Path) -> Result<()> {
    let h = ColumnarHeader {
        dim: 0,
        noise_dim: b.noise_dim as u64,
        n_paths: b.n_paths as u64,
        n_steps: b.grid.n_steps as u64,
        seed: b.seed,
    };
    write_columnar(BufWriter::new(File::create(path)?), &h, &[b.increments()])
}

/// Rebuilds a bundle on `[t0, T]` from an [`export_bundle`] file.
pub fn import_bundle(path: &Path, t0: f64, horizon: f64) -> Result<BrownianBundle> {
    let (h, payload) = read_columnar(BufReader::new(File::open(path)?))?;
    let grid = TimeGrid::new(t0, horizon, h.n_steps as usize)?;
    BrownianBundle::from_raw(h.noise_dim as usize, grid, h.n_paths as usize, h.seed, payload)
}

pub(crate) fn ensemble_header(e: &ForwardEnsemble) -> ColumnarHeader {
    header_of(e)
}

/// One JSON object per line.
pub fn write_json_lines<W: Write, T: Serialize>(mut w: W, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::generate_brownian;

    #[test]
    fn columnar_round_trip() {
        let h = ColumnarHeader {
            dim: 2,
            noise_dim: 1,
            n_paths: 3,
            n_steps: 1,
            seed: u64::MAX - 5,
        };
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.1 - 0.3).collect();
        let mut buf = Vec::new();
        write_columnar(&mut buf, &h, &[&data]).unwrap();
        assert_eq!(buf.len(), 40 + 12 * 8);
        assert_eq!(&buf[0..8], &2u64.to_le_bytes());
        let (h2, d2) = read_columnar(&buf[..]).unwrap();
        assert_eq!(h, h2);
        assert_eq!(data, d2);
    }

    #[test]
    fn bundle_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.bin");
        let b = generate_brownian(2, TimeGrid::new(0.0, 1.0, 4).unwrap(), 7, 99).unwrap();
        export_bundle(&b, &p).unwrap();
        let c = import_bundle(&p, 0.0, 1.0).unwrap();
        assert_eq!(b.increments(), c.increments());
        assert_eq!(c.seed, 99);
    }

    #[test]
    fn json_lines_one_record_per_line() {
        #[derive(Serialize)]
        struct R {
            k: usize,
        }
        let mut buf = Vec::new();
        write_json_lines(&mut buf, &[R { k: 1 }, R { k: 2 }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "{\"k\":1}\n{\"k\":2}\n");
    }
}
