//! Mask files: an 8-byte little-endian header length, a JSON header, then
//! every mask as row-major little-endian `f64` radians.

use super::{Geometry, MplcError, MplcResult, PlaneStack};
use image::{GrayImage, Luma};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const MASK_FORMAT: &str = "hdmbqc-masks";
pub const MASK_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskHeader {
    pub format: String,
    pub version: u32,
    pub planes: usize,
    pub dtype: String,
    pub geometry: Geometry,
}

pub fn write_masks(path: &Path, stack: &PlaneStack) -> MplcResult<()> {
    let header = MaskHeader {
        format: MASK_FORMAT.into(),
        version: MASK_VERSION,
        planes: stack.len(),
        dtype: "f64le".into(),
        geometry: stack.geometry.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for m in &stack.masks {
        for v in m.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_masks(path: &Path) -> MplcResult<PlaneStack> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |m: &str| MplcError::Format(m.to_string());
    let len = u64::from_le_bytes(bytes.get(..8).ok_or_else(|| bad("truncated header length"))?.try_into().expect("8 bytes")) as usize;
    let body = bytes.get(8..8 + len).ok_or_else(|| bad("truncated header"))?;
    let header: MaskHeader = serde_json::from_slice(body)?;
    if header.format != MASK_FORMAT || header.dtype != "f64le" {
        return Err(bad("unknown format"));
    }
    if header.version != MASK_VERSION {
        return Err(MplcError::Format(format!("unsupported version {}", header.version)));
    }
    let (h, w) = (header.geometry.rows, header.geometry.cols);
    let data = &bytes[8 + len..];
    if data.len() != header.planes * h * w * 8 {
        return Err(bad("payload size does not match header"));
    }
    let vals: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let masks = vals
        .chunks_exact(h * w)
        .map(|c| Array2::from_shape_vec((h, w), c.to_vec()).expect("plane size"))
        .collect();
    PlaneStack::new(masks, header.geometry)
}

/// 8-bit preview: phase `[0, 2π)` mapped to grey levels, planes stacked
/// vertically with a white separator.
pub fn write_mask_preview(path: &Path, stack: &PlaneStack) -> MplcResult<()> {
    let (h, w) = (stack.geometry.rows, stack.geometry.cols);
    let gap = 2;
    let n = stack.len().max(1);
    let mut img = GrayImage::from_pixel(w as u32, (n * (h + gap) - gap) as u32, Luma([255]));
    for (k, m) in stack.masks.iter().enumerate() {
        for ((r, c), &p) in m.indexed_iter() {
            let v = (p.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU * 255.0).round() as u8;
            img.put_pixel(c as u32, (k * (h + gap) + r) as u32, Luma([v]));
        }
    }
    img.save(path)?;
    Ok(())
}
