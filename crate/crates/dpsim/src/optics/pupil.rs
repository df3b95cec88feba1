use crate::error::{Error, Result};

/// Deterministic equal-area polar grid over the pupil disc.
///
/// `n` must factor as n_r * n_phi with n_phi a multiple of 4; the largest
/// such n_r not exceeding sqrt(n) is used (64 x 64 for the default 4096).
/// One quadrant is sampled and mirrored, so the point set is exactly closed
/// under x- and y-mirror reflection.
pub fn sample_pupil(diameter: f64, n: usize) -> Result<Vec<[f64; 2]>> {
    let (n_r, n_phi) = factor_grid(n).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "ray count {n} does not factor as n_r * n_phi with n_phi a multiple of 4"
        ))
    })?;
    let radius = diameter / 2.0;
    let quarter = n_phi / 4;
    let mut points = Vec::with_capacity(n);
    for i in 0..n_r {
        let r = radius * (((i as f64) + 0.5) / n_r as f64).sqrt();
        for j in 0..quarter {
            let phi = ((j as f64) + 0.5) * std::f64::consts::TAU / n_phi as f64;
            let x = r * phi.cos();
            let y = r * phi.sin();
            points.push([x, y]);
            points.push([-x, y]);
            points.push([-x, -y]);
            points.push([x, -y]);
        }
    }
    Ok(points)
}

fn factor_grid(n: usize) -> Option<(usize, usize)> {
    if n == 0 {
        return None;
    }
    let mut best = None;
    let mut n_r = 1;
    while n_r * n_r <= n {
        if n % n_r == 0 && (n / n_r) % 4 == 0 {
            best = Some((n_r, n / n_r));
        }
        n_r += 1;
    }
    best
}
