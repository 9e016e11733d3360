//! Binary containers: video embedding files and decoder checkpoints.
//!
//! Embedding files start with magic `VCWE`. Version 1 holds `N` uniform
//! `G x G x d` frames of little-endian f32, row-major, frame-major. Version 2
//! is the ragged variant produced by grouped pooling: a per-frame side table
//! follows the header and the payload concatenates `side_i^2 * d` values per
//! frame. Checkpoints (`VCWC`) store the model geometry followed by the flat
//! f64 parameter vector.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{CliError, CliResult};
use vcw_core::decoder::{DecoderWeights, ModelConfig};
use vcw_core::pooling::{FrameGrid, PooledSequence, VideoEmbedding};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"VCWE";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VCWC";
/// Element type code: 32-bit IEEE-754 little-endian.
pub const ELEM_F32: u8 = 0;
/// Rotation pairing layout: adjacent component pairs (2i, 2i+1).
pub const LAYOUT_ADJACENT_PAIRS: u8 = 0;

fn format_err(msg: impl Into<String>) -> CliError {
    CliError::Format(msg.into())
}

pub fn write_embedding(path: &Path, video: &VideoEmbedding) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_u32::<LittleEndian>(1)?;
    w.write_u32::<LittleEndian>(video.num_frames() as u32)?;
    w.write_u32::<LittleEndian>(video.grid_size as u32)?;
    w.write_u32::<LittleEndian>(video.channels as u32)?;
    w.write_u8(ELEM_F32)?;
    w.write_u8(LAYOUT_ADJACENT_PAIRS)?;
    for frame in &video.frames {
        for &v in &frame.data {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    Ok(())
}

/// Writes a pooled sequence: version 1 when every frame shares one side,
/// version 2 (ragged, with a side table) otherwise.
pub fn write_pooled(path: &Path, pooled: &PooledSequence) -> CliResult<()> {
    let uniform_side = pooled
        .frames
        .first()
        .map(|f| f.grid.side)
        .filter(|&s| pooled.frames.iter().all(|f| f.grid.side == s));
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(EMBEDDING_MAGIC)?;
    match uniform_side {
        Some(side) => {
            w.write_u32::<LittleEndian>(1)?;
            w.write_u32::<LittleEndian>(pooled.frames.len() as u32)?;
            w.write_u32::<LittleEndian>(side as u32)?;
        }
        None => {
            w.write_u32::<LittleEndian>(2)?;
            w.write_u32::<LittleEndian>(pooled.frames.len() as u32)?;
            w.write_u32::<LittleEndian>(0)?;
        }
    }
    w.write_u32::<LittleEndian>(pooled.channels as u32)?;
    w.write_u8(ELEM_F32)?;
    w.write_u8(LAYOUT_ADJACENT_PAIRS)?;
    if uniform_side.is_none() {
        for f in &pooled.frames {
            w.write_u32::<LittleEndian>(f.grid.side as u32)?;
        }
    }
    for f in &pooled.frames {
        for &v in &f.grid.data {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    Ok(())
}

/// Reads a version-1 uniform embedding file.
pub fn read_embedding(path: &Path) -> CliResult<VideoEmbedding> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| format_err("truncated header"))?;
    if &magic != EMBEDDING_MAGIC {
        return Err(format_err(format!("bad magic {magic:?}, expected VCWE")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != 1 {
        return Err(format_err(format!(
            "unsupported embedding version {version} for dense input (expected 1)"
        )));
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    let g = r.read_u32::<LittleEndian>()? as usize;
    let d = r.read_u32::<LittleEndian>()? as usize;
    let elem = r.read_u8()?;
    let layout = r.read_u8()?;
    if elem != ELEM_F32 {
        return Err(format_err(format!("unknown element type code {elem}")));
    }
    if layout != LAYOUT_ADJACENT_PAIRS {
        return Err(format_err(format!("unknown pairing layout code {layout}")));
    }
    if n == 0 || g == 0 || d == 0 {
        return Err(format_err("empty embedding file"));
    }
    let mut frames = Vec::with_capacity(n);
    let mut buf = vec![0u8; g * g * d * 4];
    for _ in 0..n {
        r.read_exact(&mut buf)
            .map_err(|_| format_err("payload shorter than declared size"))?;
        let data: Vec<f64> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        frames.push(FrameGrid::new(g, d, data).map_err(|e| format_err(e.to_string()))?);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(format_err("payload longer than declared size"));
    }
    VideoEmbedding::new(frames).map_err(|e| format_err(e.to_string()))
}

pub fn write_checkpoint(path: &Path, weights: &DecoderWeights) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_u32::<LittleEndian>(1)?;
    let c = &weights.config;
    for v in [
        c.vocab_size,
        c.d_model,
        c.n_layers,
        c.n_heads,
        c.mlp_ratio,
        c.train_context,
    ] {
        w.write_u32::<LittleEndian>(v as u32)?;
    }
    w.write_u64::<LittleEndian>(weights.params.len() as u64)?;
    for &p in &weights.params {
        w.write_f64::<LittleEndian>(p)?;
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> CliResult<DecoderWeights> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| format_err("truncated header"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(format_err(format!("bad magic {magic:?}, expected VCWC")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != 1 {
        return Err(format_err(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mut fields = [0usize; 6];
    for f in &mut fields {
        *f = r.read_u32::<LittleEndian>()? as usize;
    }
    let config = ModelConfig {
        vocab_size: fields[0],
        d_model: fields[1],
        n_layers: fields[2],
        n_heads: fields[3],
        mlp_ratio: fields[4],
        train_context: fields[5],
    };
    config
        .validate()
        .map_err(|e| format_err(format!("checkpoint geometry invalid: {e}")))?;
    let count = r.read_u64::<LittleEndian>()? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        params.push(
            r.read_f64::<LittleEndian>()
                .map_err(|_| format_err("parameter payload shorter than declared"))?,
        );
    }
    let expected = DecoderWeights::init(config, 0)
        .map_err(|e| format_err(e.to_string()))?
        .num_params();
    if count != expected {
        return Err(format_err(format!(
            "parameter count {count} does not match geometry (expected {expected})"
        )));
    }
    Ok(DecoderWeights { config, params })
}
