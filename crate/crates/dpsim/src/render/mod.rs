//! RGBD -> dual-pixel rendering via spatially varying local convolution.

mod io;
mod quality;

pub use io::{read_pfm, read_ppm, write_pfm, write_ppm};
pub use quality::{psnr, ssim};

use crate::error::{Error, Result};
use crate::mlp::{predict, Mlp, Scalar};
use crate::psf::{coc_dp_psf, normalize, trace_dp_psf, CameraRig, DpPsf, Normalization, ObjectPoint};
use rayon::prelude::*;

/// Planar-interleaved float image, row-major (rows, cols, channels).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(rows: usize, cols: usize, channels: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || channels == 0 {
            return Err(Error::InvalidArgument("empty image".into()));
        }
        Ok(Image {
            rows,
            cols,
            channels,
            data: vec![0.0; rows * cols * channels],
        })
    }

    pub fn from_data(rows: usize, cols: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols * channels {
            return Err(Error::ShapeMismatch(format!(
                "{}x{}x{} image needs {} values, got {}",
                rows,
                cols,
                channels,
                rows * cols * channels,
                data.len()
            )));
        }
        if rows == 0 || cols == 0 || channels == 0 {
            return Err(Error::InvalidArgument("empty image".into()));
        }
        Ok(Image {
            rows,
            cols,
            channels,
            data,
        })
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.cols + col) * self.channels + ch]
    }

    #[inline]
    pub fn at_mut(&mut self, row: usize, col: usize, ch: usize) -> &mut f32 {
        &mut self.data[(row * self.cols + col) * self.channels + ch]
    }
}

/// RGB image plus a per-pixel depth map in meters, depths clamped to the
/// rig's valid range.
#[derive(Debug, Clone)]
pub struct RgbdFrame {
    pub rgb: Image,
    pub depth: Image,
    /// Pixels whose depth was clamped into the valid range.
    pub clamped: usize,
}

impl RgbdFrame {
    pub fn new(rig: &CameraRig, rgb: Image, mut depth: Image) -> Result<Self> {
        if depth.channels != 1 {
            return Err(Error::ShapeMismatch("depth map must be single-channel".into()));
        }
        if rgb.rows != depth.rows || rgb.cols != depth.cols {
            return Err(Error::ShapeMismatch("RGB and depth sizes differ".into()));
        }
        let (d_min, d_max) = rig.depth_range;
        let mut clamped = 0;
        for d in depth.data.iter_mut() {
            let v = (*d as f64).clamp(d_min, d_max);
            if v != *d as f64 {
                clamped += 1;
            }
            *d = v as f32;
        }
        Ok(RgbdFrame { rgb, depth, clamped })
    }
}

#[derive(Debug, Clone)]
pub struct DpImagePair {
    pub left: Image,
    pub right: Image,
}

/// Anything that can produce a sum-normalized DP PSF pair for an object
/// point seen at normalized field coordinates (u, v) and a depth in meters.
pub trait KernelSource: Sync {
    fn kernel(&self, u: f64, v: f64, depth: f64) -> Result<DpPsf>;
    fn ks(&self) -> usize;
}

/// Ray-traced kernels (exact but slow).
pub struct TracedKernels<'a> {
    pub rig: &'a CameraRig,
}

impl KernelSource for TracedKernels<'_> {
    fn kernel(&self, u: f64, v: f64, depth: f64) -> Result<DpPsf> {
        let psf = trace_dp_psf(self.rig, &ObjectPoint::Normalized { u, v, depth })?;
        normalize(&psf, Normalization::SumNormalized)
    }

    fn ks(&self) -> usize {
        self.rig.ks
    }
}

/// Kernels predicted by the MLP surrogate.
pub struct MlpKernels<'a, T: Scalar> {
    pub rig: &'a CameraRig,
    pub mlp: &'a Mlp<T>,
}

impl<T: Scalar> KernelSource for MlpKernels<'_, T> {
    fn kernel(&self, u: f64, v: f64, depth: f64) -> Result<DpPsf> {
        predict(self.mlp, self.rig, &ObjectPoint::Normalized { u, v, depth })
    }

    fn ks(&self) -> usize {
        self.mlp.ks
    }
}

/// Analytic split-disc circle-of-confusion kernels (field-independent).
pub struct CocKernels<'a> {
    pub rig: &'a CameraRig,
}

impl KernelSource for CocKernels<'_> {
    fn kernel(&self, u: f64, v: f64, depth: f64) -> Result<DpPsf> {
        coc_dp_psf(self.rig, &ObjectPoint::Normalized { u, v, depth })
    }

    fn ks(&self) -> usize {
        self.rig.ks
    }
}

/// Normalized field coordinate of a pixel center.
#[inline]
pub fn pixel_uv(rows: usize, cols: usize, row: usize, col: usize) -> (f64, f64) {
    (
        2.0 * (col as f64 + 0.5) / cols as f64 - 1.0,
        2.0 * (row as f64 + 0.5) / rows as f64 - 1.0,
    )
}

/// Per-pixel kernel map for an image-sized grid.
#[derive(Debug, Clone)]
pub struct PsfMap {
    pub rows: usize,
    pub cols: usize,
    pub ks: usize,
    /// Row-major, one kernel pair per pixel.
    pub kernels: Vec<DpPsf>,
}

/// Evaluates the kernel source at every pixel of the depth map.
pub fn build_psf_map(depth: &Image, source: &dyn KernelSource) -> Result<PsfMap> {
    if depth.channels != 1 {
        return Err(Error::ShapeMismatch("depth map must be single-channel".into()));
    }
    let (rows, cols) = (depth.rows, depth.cols);
    let kernels: Vec<DpPsf> = (0..rows * cols)
        .into_par_iter()
        .map(|at| {
            let (row, col) = (at / cols, at % cols);
            let (u, v) = pixel_uv(rows, cols, row, col);
            source.kernel(u, v, depth.at(row, col, 0) as f64)
        })
        .collect::<Result<_>>()?;
    Ok(PsfMap {
        rows,
        cols,
        ks: source.ks(),
        kernels,
    })
}

/// Renders the DP image pair: each output pixel gathers replicate-padded
/// neighbors weighted by the neighbor's own 180-degree-flipped kernel, which
/// matches scattering every scene point through its own PSF. Accumulation is
/// in f64 per output sample.
pub fn render_dp(frame: &RgbdFrame, map: &PsfMap) -> Result<DpImagePair> {
    let (rows, cols, ch) = (frame.rgb.rows, frame.rgb.cols, frame.rgb.channels);
    if map.rows != rows || map.cols != cols {
        return Err(Error::ShapeMismatch("PSF map size differs from image".into()));
    }
    let ks = map.ks;
    let half = (ks / 2) as i64;

    let render_side = |left: bool| -> Image {
        let mut out = Image::new(rows, cols, ch).unwrap();
        out.data
            .par_chunks_mut(cols * ch)
            .enumerate()
            .for_each(|(row, out_row)| {
                for col in 0..cols {
                    let mut acc = vec![0.0f64; ch];
                    for dj in 0..ks {
                        let src_row = (row as i64 + dj as i64 - half).clamp(0, rows as i64 - 1)
                            as usize;
                        for di in 0..ks {
                            let src_col =
                                (col as i64 + di as i64 - half).clamp(0, cols as i64 - 1) as usize;
                            let k = &map.kernels[src_row * cols + src_col];
                            let side = if left { &k.left } else { &k.right };
                            let wgt = side[(ks - 1 - dj) * ks + (ks - 1 - di)];
                            if wgt != 0.0 {
                                for (c, a) in acc.iter_mut().enumerate() {
                                    *a += frame.rgb.at(src_row, src_col, c) as f64 * wgt;
                                }
                            }
                        }
                    }
                    for (c, a) in acc.iter().enumerate() {
                        out_row[col * ch + c] = *a as f32;
                    }
                }
            });
        out
    };

    Ok(DpImagePair {
        left: render_side(true),
        right: render_side(false),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psf::test_rig::reference_rig;
    use crate::sensor::PixelIndex;
    use approx::assert_relative_eq;

    fn impulse_kernel(ks: usize, di: i64, dj: i64, left_w: f64) -> DpPsf {
        let half = (ks / 2) as i64;
        let mut left = vec![0.0; ks * ks];
        let mut right = vec![0.0; ks * ks];
        let at = ((half + dj) * ks as i64 + half + di) as usize;
        left[at] = left_w;
        right[at] = 1.0 - left_w;
        DpPsf {
            ks,
            left,
            right,
            anchor: Some(PixelIndex { i: 0, j: 0 }),
            missed_count: 0,
            out_of_window: 0,
            normalization: Normalization::SumNormalized,
        }
    }

    fn uniform_map(rows: usize, cols: usize, k: DpPsf) -> PsfMap {
        PsfMap {
            rows,
            cols,
            ks: k.ks,
            kernels: vec![k; rows * cols],
        }
    }

    fn gradient_frame(rows: usize, cols: usize) -> RgbdFrame {
        let rig = reference_rig();
        let mut rgb = Image::new(rows, cols, 1).unwrap();
        for r in 0..rows {
            for c in 0..cols {
                *rgb.at_mut(r, c, 0) = (r * cols + c) as f32;
            }
        }
        let depth = Image::from_data(rows, cols, 1, vec![1.0; rows * cols]).unwrap();
        RgbdFrame::new(&rig, rgb, depth).unwrap()
    }

    #[test]
    fn center_impulse_is_identity() {
        let frame = gradient_frame(5, 6);
        let map = uniform_map(5, 6, impulse_kernel(3, 0, 0, 0.25));
        let out = render_dp(&frame, &map).unwrap();
        for (i, &v) in frame.rgb.data.iter().enumerate() {
            assert_relative_eq!(out.left.data[i], 0.25 * v);
            assert_relative_eq!(out.right.data[i], 0.75 * v);
        }
    }

    #[test]
    fn offset_impulse_translates_with_flip() {
        // A kernel with mass at +1 column scatters each source pixel one
        // column to the right; the gather must read from the left neighbor.
        let frame = gradient_frame(4, 5);
        let map = uniform_map(4, 5, impulse_kernel(3, 1, 0, 1.0));
        let out = render_dp(&frame, &map).unwrap();
        for r in 0..4 {
            for c in 0..5 {
                let src_c = if c == 0 { 0 } else { c - 1 }; // replicate pad
                assert_relative_eq!(out.left.at(r, c, 0), frame.rgb.at(r, src_c, 0));
            }
        }
    }

    #[test]
    fn matches_naive_quadruple_loop() {
        let (rows, cols) = (6, 7);
        let frame = gradient_frame(rows, cols);
        let rig = reference_rig();
        // Spatially varying depths -> varying CoC kernels.
        let mut depth = Image::new(rows, cols, 1).unwrap();
        for r in 0..rows {
            for c in 0..cols {
                *depth.at_mut(r, c, 0) = 0.6 + 0.2 * ((r + c) % 3) as f32;
            }
        }
        let frame = RgbdFrame::new(&rig, frame.rgb, depth).unwrap();
        let map = build_psf_map(&frame.depth, &CocKernels { rig: &rig }).unwrap();
        let out = render_dp(&frame, &map).unwrap();

        let ks = map.ks;
        let half = ks as i64 / 2;
        for r in 0..rows {
            for c in 0..cols {
                let mut acc = 0.0f64;
                for dj in 0..ks {
                    for di in 0..ks {
                        let sr = (r as i64 + dj as i64 - half).clamp(0, rows as i64 - 1) as usize;
                        let sc = (c as i64 + di as i64 - half).clamp(0, cols as i64 - 1) as usize;
                        let k = &map.kernels[sr * cols + sc];
                        acc += frame.rgb.at(sr, sc, 0) as f64
                            * k.left[(ks - 1 - dj) * ks + ks - 1 - di];
                    }
                }
                assert_relative_eq!(out.left.at(r, c, 0) as f64, acc, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn depth_clamping_counts() {
        let rig = reference_rig();
        let rgb = Image::new(2, 2, 3).unwrap();
        let depth = Image::from_data(2, 2, 1, vec![0.1, 1.0, 25.0, 3.0]).unwrap();
        let frame = RgbdFrame::new(&rig, rgb, depth).unwrap();
        assert_eq!(frame.clamped, 2);
        assert_relative_eq!(frame.depth.at(0, 0, 0), 0.5);
        assert_relative_eq!(frame.depth.at(1, 0, 0), 20.0);
    }

    #[test]
    fn shape_mismatches_rejected() {
        let rig = reference_rig();
        let rgb = Image::new(2, 3, 3).unwrap();
        let depth = Image::new(3, 2, 1).unwrap();
        assert!(RgbdFrame::new(&rig, rgb, depth).is_err());

        let frame = gradient_frame(4, 4);
        let map = uniform_map(3, 3, impulse_kernel(3, 0, 0, 0.5));
        assert!(render_dp(&frame, &map).is_err());
    }
}
