//! Dual-pixel cost volume: stacks left/right feature maps at both original
//! and reverse horizontal displacements, since defocus disparity changes
//! sign across the focus distance.

use crate::error::{Error, Result};
use std::io::{Read, Write};

/// Row-major (batch, channels, rows, cols) float features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(b: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        if b == 0 || c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidArgument("empty feature map".into()));
        }
        Ok(FeatureMap {
            b,
            c,
            h,
            w,
            data: vec![0.0; b * c * h * w],
        })
    }

    pub fn from_data(b: usize, c: usize, h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != b * c * h * w {
            return Err(Error::ShapeMismatch(format!(
                "feature map {b}x{c}x{h}x{w} needs {} values, got {}",
                b * c * h * w,
                data.len()
            )));
        }
        Self::new(b, c, h, w).map(|mut f| {
            f.data = data;
            f
        })
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[((b * self.c + c) * self.h + y) * self.w + x]
    }
}

/// 5-D cost volume, row-major (batch, 2*channels, d_max, rows, cols).
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    pub b: usize,
    pub c2: usize,
    pub d_max: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl CostVolume {
    #[inline]
    pub fn at(&self, b: usize, c: usize, i: usize, y: usize, x: usize) -> f32 {
        self.data[(((b * self.c2 + c) * self.d_max + i) * self.h + y) * self.w + x]
    }

    #[inline]
    fn at_mut(&mut self, b: usize, c: usize, i: usize, y: usize, x: usize) -> &mut f32 {
        &mut self.data[(((b * self.c2 + c) * self.d_max + i) * self.h + y) * self.w + x]
    }
}

/// Disparity plane i holds displacement d = i - d_max/2. Left features keep
/// their position; right features are shifted by d; columns with no valid
/// pair stay zero.
pub fn dp_cost_volume(left: &FeatureMap, right: &FeatureMap, d_max: usize) -> Result<CostVolume> {
    if left.b != right.b || left.c != right.c || left.h != right.h || left.w != right.w {
        return Err(Error::ShapeMismatch("feature map sizes differ".into()));
    }
    if d_max == 0 {
        return Err(Error::InvalidArgument("d_max must be positive".into()));
    }
    let (b, c, h, w) = (left.b, left.c, left.h, left.w);
    let mut cost = CostVolume {
        b,
        c2: 2 * c,
        d_max,
        h,
        w,
        data: vec![0.0; b * 2 * c * d_max * h * w],
    };
    for i in 0..d_max {
        let d = i as i64 - (d_max / 2) as i64;
        // Valid output columns: [d, w) for d >= 0, [0, w+d) for d < 0;
        // shifts of |d| >= w leave the plane entirely zero.
        let (x_lo, x_hi) = if d >= 0 {
            ((d as usize).min(w), w)
        } else {
            (0usize, (w as i64 + d).max(0) as usize)
        };
        for bi in 0..b {
            for ci in 0..c {
                for y in 0..h {
                    for x in x_lo..x_hi {
                        let xr = (x as i64 - d) as usize;
                        *cost.at_mut(bi, ci, i, y, x) = left.at(bi, ci, y, x);
                        *cost.at_mut(bi, c + ci, i, y, x) = right.at(bi, ci, y, xr);
                    }
                }
            }
        }
    }
    Ok(cost)
}

/// Raw little-endian blob: five u32 dims then f32 samples.
pub fn write_cost_volume<W: Write>(out: &mut W, cv: &CostVolume) -> Result<()> {
    for d in [cv.b, cv.c2, cv.d_max, cv.h, cv.w] {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for v in &cv.data {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_cost_volume<R: Read>(input: &mut R) -> Result<CostVolume> {
    let mut b4 = [0u8; 4];
    let mut dims = [0usize; 5];
    for d in dims.iter_mut() {
        input
            .read_exact(&mut b4)
            .map_err(|_| Error::Format("truncated cost volume header".into()))?;
        *d = u32::from_le_bytes(b4) as usize;
    }
    let [b, c2, d_max, h, w] = dims;
    if dims.iter().any(|&d| d == 0) || c2 % 2 != 0 {
        return Err(Error::Format("bad cost volume dims".into()));
    }
    let mut data = vec![0.0f32; b * c2 * d_max * h * w];
    for v in data.iter_mut() {
        input.read_exact(&mut b4)?;
        *v = f32::from_le_bytes(b4);
    }
    Ok(CostVolume {
        b,
        c2,
        d_max,
        h,
        w,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_map(b: usize, c: usize, h: usize, w: usize, offset: f32) -> FeatureMap {
        let data = (0..b * c * h * w).map(|i| i as f32 + offset).collect();
        FeatureMap::from_data(b, c, h, w, data).unwrap()
    }

    #[test]
    fn hand_traced_width_three() {
        // x = [1 2 3], y = [10 20 30], d_max = 3 -> d in {-1, 0, 1}.
        let x = FeatureMap::from_data(1, 1, 1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let y = FeatureMap::from_data(1, 1, 1, 3, vec![10.0, 20.0, 30.0]).unwrap();
        let cv = dp_cost_volume(&x, &y, 3).unwrap();

        // d = -1: left keeps cols 0..2, right reads cols 1..3, col 2 zero.
        assert_eq!(
            (0..3).map(|i| cv.at(0, 0, 0, 0, i)).collect::<Vec<_>>(),
            vec![1.0, 2.0, 0.0]
        );
        assert_eq!(
            (0..3).map(|i| cv.at(0, 1, 0, 0, i)).collect::<Vec<_>>(),
            vec![20.0, 30.0, 0.0]
        );
        // d = 0: both aligned.
        assert_eq!(
            (0..3).map(|i| cv.at(0, 1, 1, 0, i)).collect::<Vec<_>>(),
            vec![10.0, 20.0, 30.0]
        );
        // d = 1: col 0 zero, right reads cols 0..2.
        assert_eq!(
            (0..3).map(|i| cv.at(0, 0, 2, 0, i)).collect::<Vec<_>>(),
            vec![0.0, 2.0, 3.0]
        );
        assert_eq!(
            (0..3).map(|i| cv.at(0, 1, 2, 0, i)).collect::<Vec<_>>(),
            vec![0.0, 10.0, 20.0]
        );
    }

    #[test]
    fn matches_naive_quintuple_loop() {
        let (b, c, h, w, d_max) = (2, 3, 4, 7, 5);
        let x = seq_map(b, c, h, w, 0.0);
        let y = seq_map(b, c, h, w, 1000.0);
        let cv = dp_cost_volume(&x, &y, d_max).unwrap();
        for bi in 0..b {
            for ci in 0..c {
                for i in 0..d_max {
                    let d = i as i64 - (d_max / 2) as i64;
                    for yy in 0..h {
                        for xx in 0..w {
                            let xr = xx as i64 - d;
                            let valid = xr >= 0 && xr < w as i64;
                            let (el, er) = if valid {
                                (x.at(bi, ci, yy, xx), y.at(bi, ci, yy, xr as usize))
                            } else {
                                (0.0, 0.0)
                            };
                            assert_eq!(cv.at(bi, ci, i, yy, xx), el);
                            assert_eq!(cv.at(bi, c + ci, i, yy, xx), er);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn blob_round_trip() {
        let x = seq_map(1, 2, 3, 4, 0.0);
        let y = seq_map(1, 2, 3, 4, 55.0);
        let cv = dp_cost_volume(&x, &y, 4).unwrap();
        let mut buf = Vec::new();
        write_cost_volume(&mut buf, &cv).unwrap();
        let back = read_cost_volume(&mut buf.as_slice()).unwrap();
        assert_eq!(cv, back);
        buf.truncate(9);
        assert!(read_cost_volume(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn shape_guards() {
        let x = seq_map(1, 1, 2, 2, 0.0);
        let y = seq_map(1, 1, 2, 3, 0.0);
        assert!(dp_cost_volume(&x, &y, 3).is_err());
        assert!(dp_cost_volume(&x, &x, 0).is_err());
    }
}
