//! `.dppsf` binary container for PSF grids.
//!
//! Layout: magic `DPPSF\x01`, little-endian u32 ks, u32 record count; per
//! record f32 u, f32 v, f32 depth_m, i32 anchor_i, i32 anchor_j, u32 missed,
//! then 2*ks*ks f32 (left row-major, then right). Off-sensor anchors store
//! i32::MIN. Skipped (fully vignetted) grid points are not serialized.

use super::grid::{PsfGrid, PsfRecord};
use super::{DpPsf, Normalization};
use crate::error::{Error, Result};
use crate::sensor::PixelIndex;
use std::io::{Read, Write};

const MAGIC: &[u8; 6] = b"DPPSF\x01";
const NO_ANCHOR: i32 = i32::MIN;

pub fn write_dppsf<W: Write>(out: &mut W, grid: &PsfGrid) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(grid.ks as u32).to_le_bytes())?;
    let records: Vec<&PsfRecord> = grid.records.iter().filter(|r| r.psf.is_some()).collect();
    out.write_all(&(records.len() as u32).to_le_bytes())?;
    for rec in records {
        let psf = rec.psf.as_ref().unwrap();
        out.write_all(&(rec.u as f32).to_le_bytes())?;
        out.write_all(&(rec.v as f32).to_le_bytes())?;
        out.write_all(&(rec.depth as f32).to_le_bytes())?;
        let (ai, aj) = psf.anchor.map(|a| (a.i, a.j)).unwrap_or((NO_ANCHOR, NO_ANCHOR));
        out.write_all(&ai.to_le_bytes())?;
        out.write_all(&aj.to_le_bytes())?;
        out.write_all(&psf.missed_count.to_le_bytes())?;
        for v in psf.left.iter().chain(&psf.right) {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_i32<R: Read>(r: &mut R) -> Result<i32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(i32::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

pub fn read_dppsf<R: Read>(input: &mut R) -> Result<PsfGrid> {
    let mut magic = [0u8; 6];
    input
        .read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated .dppsf header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad .dppsf magic".into()));
    }
    let ks = read_u32(input)? as usize;
    if ks == 0 || ks % 2 == 0 {
        return Err(Error::Format(format!("invalid kernel size {ks}")));
    }
    let count = read_u32(input)? as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let u = read_f32(input)? as f64;
        let v = read_f32(input)? as f64;
        let depth = read_f32(input)? as f64;
        let ai = read_i32(input)?;
        let aj = read_i32(input)?;
        let missed = read_u32(input)?;
        let mut kernels = vec![0.0f64; 2 * ks * ks];
        for k in kernels.iter_mut() {
            *k = read_f32(input)? as f64;
        }
        let right = kernels.split_off(ks * ks);
        let anchor = if ai == NO_ANCHOR {
            None
        } else {
            Some(PixelIndex { i: ai, j: aj })
        };
        records.push(PsfRecord {
            u,
            v,
            depth,
            psf: Some(DpPsf {
                ks,
                left: kernels,
                right,
                anchor,
                missed_count: missed,
                out_of_window: 0,
                normalization: Normalization::RawCounts,
            }),
        });
    }
    Ok(PsfGrid {
        ks,
        seed: 0,
        records,
    })
}
