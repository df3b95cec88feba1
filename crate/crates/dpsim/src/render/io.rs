//! PFM (float) and binary PPM image io.

use super::Image;
use crate::error::{Error, Result};
use std::io::{BufRead, Write};

/// Writes PF (3-channel) or Pf (1-channel) with little-endian samples
/// (negative scale) and bottom-to-top row order.
pub fn write_pfm<W: Write>(out: &mut W, img: &Image) -> Result<()> {
    let tag = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => {
            return Err(Error::Format(format!(
                "PFM supports 1 or 3 channels, not {c}"
            )))
        }
    };
    write!(out, "{tag}\n{} {}\n-1.0\n", img.cols, img.rows)?;
    for row in (0..img.rows).rev() {
        for col in 0..img.cols {
            for ch in 0..img.channels {
                out.write_all(&img.at(row, col, ch).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn pfm_token<R: BufRead>(input: &mut R) -> Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if input.read(&mut byte)? == 0 {
            if tok.is_empty() {
                return Err(Error::Format("truncated PFM header".into()));
            }
            break;
        }
        if byte[0].is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(byte[0]);
    }
    String::from_utf8(tok).map_err(|_| Error::Format("non-ASCII PFM header".into()))
}

pub fn read_pfm<R: BufRead>(input: &mut R) -> Result<Image> {
    let tag = pfm_token(input)?;
    let channels = match tag.as_str() {
        "PF" => 3,
        "Pf" => 1,
        _ => return Err(Error::Format(format!("bad PFM magic {tag:?}"))),
    };
    let cols: usize = pfm_token(input)?
        .parse()
        .map_err(|_| Error::Format("bad PFM width".into()))?;
    let rows: usize = pfm_token(input)?
        .parse()
        .map_err(|_| Error::Format("bad PFM height".into()))?;
    let scale: f32 = pfm_token(input)?
        .parse()
        .map_err(|_| Error::Format("bad PFM scale".into()))?;
    if cols == 0 || rows == 0 {
        return Err(Error::Format("empty PFM".into()));
    }
    let little_endian = scale < 0.0;
    let mut raw = vec![0u8; rows * cols * channels * 4];
    input.read_exact(&mut raw)?;
    let mut img = Image::new(rows, cols, channels)?;
    let mut at = 0;
    for row in (0..rows).rev() {
        for col in 0..cols {
            for ch in 0..channels {
                let b: [u8; 4] = raw[at..at + 4].try_into().unwrap();
                at += 4;
                *img.at_mut(row, col, ch) = if little_endian {
                    f32::from_le_bytes(b)
                } else {
                    f32::from_be_bytes(b)
                };
            }
        }
    }
    Ok(img)
}

/// 8-bit binary PPM; values are clamped to [0, 1] and rounded half up.
pub fn write_ppm<W: Write>(out: &mut W, img: &Image) -> Result<()> {
    if img.channels != 3 {
        return Err(Error::Format("PPM requires 3 channels".into()));
    }
    write!(out, "P6\n{} {}\n255\n", img.cols, img.rows)?;
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) as f64 * 255.0 + 0.5).floor() as u8)
        .collect();
    out.write_all(&bytes)?;
    Ok(())
}

pub fn read_ppm<R: BufRead>(input: &mut R) -> Result<Image> {
    if pfm_token(input)? != "P6" {
        return Err(Error::Format("bad PPM magic".into()));
    }
    let cols: usize = pfm_token(input)?
        .parse()
        .map_err(|_| Error::Format("bad PPM width".into()))?;
    let rows: usize = pfm_token(input)?
        .parse()
        .map_err(|_| Error::Format("bad PPM height".into()))?;
    let maxval: u32 = pfm_token(input)?
        .parse()
        .map_err(|_| Error::Format("bad PPM maxval".into()))?;
    if maxval != 255 {
        return Err(Error::Format("only 8-bit PPM supported".into()));
    }
    let mut raw = vec![0u8; rows * cols * 3];
    input.read_exact(&mut raw)?;
    Image::from_data(
        rows,
        cols,
        3,
        raw.iter().map(|&b| b as f32 / 255.0).collect(),
    )
}
