//! Versioned binary model files.
//!
//! Layout, little-endian: magic `PLMD`, u32 version, u8 kind (1 chart,
//! 2 in-order), label list, u32 hash bits, u64 seed, u32 epochs, then for
//! in-order models u32 unary limit, u32 beam size and the root label. The
//! weights follow: u32 class count, u32 row count, rows as (u32 index, f32 x
//! classes) in index order, and a u8 flag for the dense layer (u32 dim_in,
//! u32 dim_out, u32 slots, projection, weights). Strings are u32 length
//! plus UTF-8 bytes.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::chart::ChartModel;
use crate::inorder::InOrderModel;
use crate::linear::{DenseLayer, LinearModel};
use crate::repr::Projection;

pub const MODEL_MAGIC: &[u8; 4] = b"PLMD";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("not a model file (bad magic)")]
    Magic,
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("unknown model kind {0}")]
    Kind(u8),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParserModel {
    Chart(ChartModel),
    InOrder(InOrderModel),
}

impl ParserModel {
    pub fn kind(&self) -> &'static str {
        match self {
            ParserModel::Chart(_) => "chart",
            ParserModel::InOrder(_) => "inorder",
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        match self {
            ParserModel::Chart(m) => {
                w.write_all(&[1])?;
                write_strings(&mut w, m.labels())?;
                write_u32(&mut w, m.hasher().bits())?;
                w.write_all(&m.seed.to_le_bytes())?;
                write_u32(&mut w, m.epochs as u32)?;
                write_scorer(&mut w, m.scorer())
            }
            ParserModel::InOrder(m) => {
                w.write_all(&[2])?;
                write_strings(&mut w, &m.labels())?;
                write_u32(&mut w, m.hasher().bits())?;
                w.write_all(&m.seed.to_le_bytes())?;
                write_u32(&mut w, m.epochs as u32)?;
                write_u32(&mut w, m.unary_limit as u32)?;
                write_u32(&mut w, m.beam_size as u32)?;
                write_string(&mut w, &m.root_label)?;
                write_scorer(&mut w, m.scorer())
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, ModelFileError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(ModelFileError::Magic);
        }
        let version = read_u32(&mut r)?;
        if version != MODEL_VERSION {
            return Err(ModelFileError::Version(version));
        }
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        let model = match kind[0] {
            1 => {
                let labels = read_strings(&mut r)?;
                if labels.first().map(String::as_str) != Some("") {
                    return Err(ModelFileError::Corrupt("chart label list must start with the null label".into()));
                }
                let bits = read_bits(&mut r)?;
                let seed = read_u64(&mut r)?;
                let epochs = read_u32(&mut r)? as usize;
                let scorer = read_scorer(&mut r, labels.len())?;
                ParserModel::Chart(ChartModel::from_parts(labels, scorer, bits, seed, epochs))
            }
            2 => {
                let labels = read_strings(&mut r)?;
                let bits = read_bits(&mut r)?;
                let seed = read_u64(&mut r)?;
                let epochs = read_u32(&mut r)? as usize;
                let unary_limit = read_u32(&mut r)? as usize;
                let beam_size = read_u32(&mut r)? as usize;
                if unary_limit == 0 || beam_size == 0 {
                    return Err(ModelFileError::Corrupt("unary limit and beam size must be positive".into()));
                }
                let root = read_string(&mut r)?;
                let scorer = read_scorer(&mut r, labels.len() + 3)?;
                ParserModel::InOrder(InOrderModel::from_parts(
                    &labels,
                    scorer,
                    bits,
                    unary_limit,
                    beam_size,
                    root,
                    seed,
                    epochs,
                ))
            }
            k => return Err(ModelFileError::Kind(k)),
        };
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(ModelFileError::Corrupt("trailing bytes".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, ModelFileError> {
        let bytes = std::fs::read(path)?;
        Self::read_from(bytes.as_slice())
    }
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_string<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn write_strings<W: Write>(w: &mut W, items: &[String]) -> io::Result<()> {
    write_u32(w, items.len() as u32)?;
    items.iter().try_for_each(|s| write_string(w, s))
}

fn write_floats<W: Write>(w: &mut W, v: &[f32]) -> io::Result<()> {
    v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))
}

fn write_scorer<W: Write>(w: &mut W, m: &LinearModel) -> io::Result<()> {
    write_u32(w, m.classes() as u32)?;
    let rows = m.sorted_rows();
    write_u32(w, rows.len() as u32)?;
    for (idx, row) in rows {
        write_u32(w, idx)?;
        write_floats(w, row)?;
    }
    match m.dense() {
        None => w.write_all(&[0]),
        Some(d) => {
            w.write_all(&[1])?;
            let p = d.projection();
            write_u32(w, p.dim_in() as u32)?;
            write_u32(w, p.dim_out() as u32)?;
            write_u32(w, d.slots() as u32)?;
            write_floats(w, p.weights())?;
            write_floats(w, &d.weights)
        }
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_bits<R: Read>(r: &mut R) -> Result<u32, ModelFileError> {
    match read_u32(r)? {
        b @ 1..=32 => Ok(b),
        b => Err(ModelFileError::Corrupt(format!("hash bits {b} out of range"))),
    }
}

const MAX_LEN: usize = 1 << 28;

fn read_len<R: Read>(r: &mut R, what: &str) -> Result<usize, ModelFileError> {
    let n = read_u32(r)? as usize;
    if n > MAX_LEN {
        return Err(ModelFileError::Corrupt(format!("{what} length {n} is implausible")));
    }
    Ok(n)
}

fn read_string<R: Read>(r: &mut R) -> Result<String, ModelFileError> {
    let n = read_len(r, "string")?;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| ModelFileError::Corrupt("label is not UTF-8".into()))
}

fn read_strings<R: Read>(r: &mut R) -> Result<Vec<String>, ModelFileError> {
    let n = read_len(r, "label list")?;
    (0..n).map(|_| read_string(r)).collect()
}

fn read_floats<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>, ModelFileError> {
    if n > MAX_LEN {
        return Err(ModelFileError::Corrupt(format!("weight block of {n} values is implausible")));
    }
    let mut b = vec![0u8; n * 4];
    r.read_exact(&mut b)?;
    Ok(b.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

fn read_scorer<R: Read>(r: &mut R, expected_classes: usize) -> Result<LinearModel, ModelFileError> {
    let classes = read_u32(r)? as usize;
    if classes != expected_classes {
        return Err(ModelFileError::Corrupt(format!("{classes} weight columns for {expected_classes} classes")));
    }
    let nrows = read_len(r, "row table")?;
    let mut rows = HashMap::with_capacity(nrows);
    let mut prev = None;
    for _ in 0..nrows {
        let idx = read_u32(r)?;
        if prev.is_some_and(|p| p >= idx) {
            return Err(ModelFileError::Corrupt("feature rows out of order".into()));
        }
        prev = Some(idx);
        rows.insert(idx, read_floats(r, classes)?);
    }
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let dense = match flag[0] {
        0 => None,
        1 => {
            let dim_in = read_len(r, "projection input")?;
            let dim_out = read_len(r, "projection output")?;
            let slots = read_len(r, "slot count")?;
            let p = read_floats(r, dim_in * dim_out)?;
            let projection = Projection::new(dim_in, dim_out, p).map_err(|e| ModelFileError::Corrupt(e.to_string()))?;
            let weights = read_floats(r, classes * slots * dim_out)?;
            Some(DenseLayer { projection, slots, weights })
        }
        f => return Err(ModelFileError::Corrupt(format!("bad dense-layer flag {f}"))),
    };
    let mut m = LinearModel::new(classes);
    m.rows = rows;
    m.dense = dense;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn chart_round_trip() {
        let labels = vec!["NP".to_string(), "S".to_string()];
        let mut m = ChartModel::untrained(&labels, 12);
        m.scorer.rows.insert(7, vec![0.5, -1.0, 2.0]);
        m.scorer.rows.insert(3, vec![0.25, 0.0, -0.125]);
        let p = ParserModel::Chart(m);
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..4], b"PLMD");
        assert_eq!(ParserModel::read_from(bytes.as_slice()).unwrap(), p);
    }

    #[test]
    fn inorder_round_trip_with_dense() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let labels = vec!["NP".to_string(), "VP".to_string()];
        let scorer = LinearModel::with_dense(5, Projection::random(4, 2, &mut rng), 1);
        let mut m = InOrderModel::from_parts(&labels, scorer, 16, 3, 7, "ROOT".into(), 42, 5);
        m.scorer.rows.insert(1, vec![1.0; 5]);
        let p = ParserModel::InOrder(m);
        let back = ParserModel::read_from(p.to_bytes().as_slice()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn corrupt_files_rejected() {
        let p = ParserModel::Chart(ChartModel::untrained(&["S".to_string()], 8));
        let bytes = p.to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(ParserModel::read_from(bad.as_slice()), Err(ModelFileError::Magic)));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(ParserModel::read_from(bad.as_slice()), Err(ModelFileError::Version(9))));
        let mut bad = bytes.clone();
        bad.push(0);
        assert!(matches!(ParserModel::read_from(bad.as_slice()), Err(ModelFileError::Corrupt(_))));
        assert!(ParserModel::read_from(&bytes[..bytes.len() - 1]).is_err());
    }
}
