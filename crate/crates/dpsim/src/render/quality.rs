//! Image comparison metrics on unit-range float images.

use super::Image;
use crate::error::{Error, Result};

fn check_same_shape(a: &Image, b: &Image) -> Result<()> {
    if a.rows != b.rows || a.cols != b.cols || a.channels != b.channels {
        return Err(Error::ShapeMismatch("image sizes differ".into()));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB with unit peak, capped at 99 dB.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    check_same_shape(a, b)?;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.data.len() as f64;
    if mse < 1e-10 {
        return Ok(99.0);
    }
    Ok(-10.0 * mse.log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-(i as f64 - c).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Mean structural similarity with the standard 11x11 Gaussian window
/// (sigma 1.5), valid-mode windows only, averaged over channels. Inputs are
/// assumed to span [0, 1].
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_same_shape(a, b)?;
    if a.rows < SSIM_WINDOW || a.cols < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM"
        )));
    }
    let w = gaussian_window();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..a.channels {
        for top in 0..=(a.rows - SSIM_WINDOW) {
            for left in 0..=(a.cols - SSIM_WINDOW) {
                let (mut ma, mut mb) = (0.0f64, 0.0f64);
                let (mut va, mut vb, mut cov) = (0.0f64, 0.0f64, 0.0f64);
                for dj in 0..SSIM_WINDOW {
                    for di in 0..SSIM_WINDOW {
                        let wt = w[dj] * w[di];
                        let xa = a.at(top + dj, left + di, ch) as f64;
                        let xb = b.at(top + dj, left + di, ch) as f64;
                        ma += wt * xa;
                        mb += wt * xb;
                        va += wt * xa * xa;
                        vb += wt * xb * xb;
                        cov += wt * xa * xb;
                    }
                }
                va -= ma * ma;
                vb -= mb * mb;
                cov -= ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}
