//! Parameter checkpoints: `params.bin` holds every named array as
//! little-endian `f64`, `params.csv` lists `name,shape,offset,len,sha256`
//! with offsets and lengths in values and the digest over each array's bytes.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;
use crate::domains::write_rows;
use crate::error::{Error, Result};
use crate::model::IadaParams;

pub const BINARY_FILE: &str = "params.bin";
pub const MANIFEST_FILE: &str = "params.csv";

fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn shape_field(shape: &[usize]) -> String {
    shape
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

fn parse_shape(s: &str) -> Option<Vec<usize>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split('x').map(|d| d.parse().ok()).collect()
}

pub fn save_checkpoint(dir: &Path, params: &IadaParams) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bin = Vec::new();
    let mut rows = Vec::new();
    for (name, _, t) in params.named() {
        let start = bin.len();
        for v in t.data() {
            bin.extend_from_slice(&v.to_le_bytes());
        }
        rows.push(vec![
            name,
            shape_field(t.shape()),
            (start / 8).to_string(),
            t.len().to_string(),
            digest(&bin[start..]),
        ]);
    }
    let bin_path = dir.join(BINARY_FILE);
    fs::write(&bin_path, &bin).map_err(|e| Error::io(&bin_path, e))?;
    let header: Vec<String> = ["name", "shape", "offset", "len", "sha256"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    write_rows(&dir.join(MANIFEST_FILE), &header, rows)
}

pub fn load_checkpoint(dir: &Path) -> Result<IadaParams> {
    let bin_path = dir.join(BINARY_FILE);
    let bin = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let man_path = dir.join(MANIFEST_FILE);
    let mut reader =
        csv::Reader::from_path(&man_path).map_err(|e| Error::format(&man_path, e.to_string()))?;
    let mut tensors = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(&man_path, e.to_string()))?;
        let bad = |msg: &str| Error::format(&man_path, format!("row {}: {msg}", line + 1));
        if rec.len() != 5 {
            return Err(bad("expected 5 fields"));
        }
        let shape = parse_shape(&rec[1]).ok_or_else(|| bad("unreadable shape"))?;
        let offset: usize = rec[2].parse().map_err(|_| bad("unreadable offset"))?;
        let len: usize = rec[3].parse().map_err(|_| bad("unreadable length"))?;
        let bytes = bin
            .get(offset * 8..(offset + len) * 8)
            .ok_or_else(|| bad("array lies outside the binary file"))?;
        if digest(bytes) != rec[4] {
            return Err(bad(&format!("checksum mismatch for {}", &rec[0])));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| bad(&e.to_string()))?;
        tensors.push((rec[0].to_string(), t));
    }
    let dims = |name: &str| {
        tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.shape().to_vec())
            .ok_or_else(|| Error::format(&man_path, format!("missing {name}")))
    };
    let first = dims("backbone.0.w")?;
    let cls = dims("classifier.w")?;
    if first.len() != 2 || cls.len() != 2 {
        return Err(Error::format(&man_path, "layer weights must be matrices"));
    }
    IadaParams::from_named(first[0], first[1], cls[1], &tensors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = IadaParams::init(5, 6, 3, 4).unwrap();
        p.temperature = 1.0 / 3.0;
        p.beta = f64::MIN_POSITIVE;
        save_checkpoint(dir.path(), &p).unwrap();
        let q = load_checkpoint(dir.path()).unwrap();
        for ((na, _, a), (nb, _, b)) in p.named().iter().zip(q.named().iter()) {
            assert_eq!(na, nb);
            assert_eq!(a.shape(), b.shape());
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b), "{na}");
        }
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &IadaParams::init(2, 2, 2, 0).unwrap()).unwrap();
        let path = dir.path().join(BINARY_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes[3] ^= 1;
        fs::write(&path, bytes).unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err().to_string();
        assert!(err.contains("checksum"), "{err}");
    }
}
