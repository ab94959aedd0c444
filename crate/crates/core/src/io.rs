//! Binary tensor and checkpoint files, split files and training history.
//!
//! `HGB1` tensor layout: the 4-byte magic, little-endian `u64` rows and
//! cols, then `rows * cols` little-endian `f32` values in row-major order.
//!
//! `HGC1` checkpoint layout: the 4-byte magic, a length-prefixed config
//! fingerprint, `u64` epoch, `f64` loss, `u64` seed, a length-prefixed JSON
//! encoder description, a `u32` tensor count, then each tensor in `HGB1`
//! layout (weights and biases interleaved per layer).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::diff::Tensor;
use crate::encoder::{EncoderParams, EncoderSpec};
use crate::eval::{EdgeSplit, NodeSplit};
use crate::trainer::{Checkpoint, TrainHistory};
use crate::{Error, Result};

pub const HGB_MAGIC: &[u8; 4] = b"HGB1";
pub const HGC_MAGIC: &[u8; 4] = b"HGC1";

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact::<8>(r)?))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact::<4>(r)?))
}

fn read_blob(r: &mut impl Read) -> Result<Vec<u8>> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn write_blob(w: &mut impl Write, bytes: &[u8]) -> Result<()> {
    let len = u32::try_from(bytes.len()).map_err(|_| Error::Format("blob too large".into()))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

pub fn write_tensor(w: &mut impl Write, t: &Tensor<f32>) -> Result<()> {
    w.write_all(HGB_MAGIC)?;
    w.write_all(&(t.rows() as u64).to_le_bytes())?;
    w.write_all(&(t.cols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(t.len() * 4);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor(r: &mut impl Read) -> Result<Tensor<f32>> {
    let magic = read_exact::<4>(r)?;
    if &magic != HGB_MAGIC {
        return Err(Error::Format(format!("expected HGB1 magic, found {magic:?}")));
    }
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    let count = rows
        .checked_mul(cols)
        .filter(|c| *c <= (1 << 34))
        .ok_or_else(|| Error::Format(format!("implausible tensor size {rows}x{cols}")))?;
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated tensor data: {e}")))?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::from_vec(rows, cols, data)
}

pub fn save_tensor(path: &Path, t: &Tensor<f32>) -> Result<()> {
    let mut buf = Vec::new();
    write_tensor(&mut buf, t)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_tensor(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path)?;
    let mut slice = bytes.as_slice();
    let t = read_tensor(&mut slice)?;
    if !slice.is_empty() {
        return Err(Error::Format(format!("{}: trailing bytes", path.display())));
    }
    Ok(t)
}

pub fn write_checkpoint(w: &mut impl Write, ckpt: &Checkpoint) -> Result<()> {
    w.write_all(HGC_MAGIC)?;
    write_blob(w, ckpt.fingerprint.as_bytes())?;
    w.write_all(&(ckpt.epoch as u64).to_le_bytes())?;
    w.write_all(&ckpt.loss.to_le_bytes())?;
    w.write_all(&ckpt.seed.to_le_bytes())?;
    write_blob(w, &serde_json::to_vec(&ckpt.params.spec)?)?;
    let tensors = ckpt.params.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        write_tensor(w, t)?;
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint> {
    let magic = read_exact::<4>(r)?;
    if &magic != HGC_MAGIC {
        return Err(Error::Format(format!("expected HGC1 magic, found {magic:?}")));
    }
    let fingerprint = String::from_utf8(read_blob(r)?)
        .map_err(|_| Error::Format("fingerprint is not UTF-8".into()))?;
    let epoch = read_u64(r)? as usize;
    let loss = f64::from_le_bytes(read_exact::<8>(r)?);
    let seed = read_u64(r)?;
    let spec: EncoderSpec = serde_json::from_slice(&read_blob(r)?)?;
    let count = read_u32(r)? as usize;
    let tensors = (0..count).map(|_| read_tensor(r)).collect::<Result<Vec<_>>>()?;
    let params = EncoderParams::from_tensors(spec, tensors)?;
    Ok(Checkpoint {
        params,
        epoch,
        loss,
        fingerprint,
        seed,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, ckpt)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    read_checkpoint(&mut bytes.as_slice())
}

/// Training history as JSON lines, one object per epoch.
pub fn write_history(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut out = String::new();
    for rec in &history.records {
        out.push_str(&serde_json::to_string(rec)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_history(path: &Path) -> Result<TrainHistory> {
    let text = fs::read_to_string(path)?;
    let records = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(TrainHistory {
        records,
        wall_clock_ms: Vec::new(),
    })
}

/// A `#name` header and its numbered body lines.
type Section = (String, Vec<(usize, String)>);

fn sections(text: &str, path: &Path) -> Result<Vec<Section>> {
    let mut out: Vec<Section> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('#') {
            out.push((name.trim().to_string(), Vec::new()));
        } else {
            match out.last_mut() {
                Some((_, body)) => body.push((lineno + 1, line.to_string())),
                None => return Err(Error::parse(path, lineno + 1, "entry before any #section header")),
            }
        }
    }
    Ok(out)
}

pub fn write_node_split(path: &Path, split: &NodeSplit) -> Result<()> {
    let mut s = String::new();
    for (name, idx) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        s.push_str(&format!("#{name}\n"));
        for i in idx {
            s.push_str(&format!("{i}\n"));
        }
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_node_split(path: &Path) -> Result<NodeSplit> {
    let text = fs::read_to_string(path)?;
    let mut split = NodeSplit::default();
    for (name, body) in sections(&text, path)? {
        let target = match name.as_str() {
            "train" => &mut split.train,
            "val" => &mut split.val,
            "test" => &mut split.test,
            other => return Err(Error::Format(format!("unknown split section #{other}"))),
        };
        for (lineno, line) in body {
            target.push(
                line.parse()
                    .map_err(|_| Error::parse(path, lineno, format!("`{line}` is not a node index")))?,
            );
        }
    }
    Ok(split)
}

const EDGE_SECTIONS: [&str; 6] = ["train", "val", "test", "train_neg", "val_neg", "test_neg"];

pub fn write_edge_split(path: &Path, split: &EdgeSplit) -> Result<()> {
    let mut s = String::new();
    for (name, edges) in EDGE_SECTIONS.iter().zip(split.partitions()) {
        s.push_str(&format!("#{name}\n"));
        for (u, v) in edges {
            s.push_str(&format!("{u}\t{v}\n"));
        }
    }
    fs::write(path, s)?;
    Ok(())
}

/// Edge partitions in the order train, val, test, train_neg, val_neg, test_neg.
pub fn read_edge_partitions(path: &Path) -> Result<[Vec<(usize, usize)>; 6]> {
    let text = fs::read_to_string(path)?;
    let mut parts: [Vec<(usize, usize)>; 6] = Default::default();
    for (name, body) in sections(&text, path)? {
        let slot = EDGE_SECTIONS
            .iter()
            .position(|s| *s == name)
            .ok_or_else(|| Error::Format(format!("unknown split section #{name}")))?;
        for (lineno, line) in body {
            let mut toks = line.split_whitespace().map(str::parse::<usize>);
            match (toks.next(), toks.next(), toks.next()) {
                (Some(Ok(u)), Some(Ok(v)), None) => parts[slot].push((u, v)),
                _ => return Err(Error::parse(path, lineno, format!("`{line}` is not an edge"))),
            }
        }
    }
    Ok(parts)
}
