use super::DpPsf;
use crate::error::{Error, Result};

fn joint_stats(a: &DpPsf, b: &DpPsf) -> Result<(f64, f64, f64, f64)> {
    if a.ks != b.ks {
        return Err(Error::ShapeMismatch(format!(
            "kernel sizes differ: {} vs {}",
            a.ks, b.ks
        )));
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    let mut sqdiff = 0.0;
    let pairs = a
        .left
        .iter()
        .chain(&a.right)
        .zip(b.left.iter().chain(&b.right));
    for (&x, &y) in pairs {
        dot += x * y;
        na += x * x;
        nb += y * y;
        sqdiff += (x - y) * (x - y);
    }
    if na <= 0.0 || nb <= 0.0 {
        return Err(Error::InvalidArgument("zero-norm PSF".into()));
    }
    Ok((dot, na, nb, sqdiff))
}

/// Normalized cross-correlation over the concatenated left+right pair.
pub fn ncc(a: &DpPsf, b: &DpPsf) -> Result<f64> {
    let (dot, na, nb, _) = joint_stats(a, b)?;
    Ok(dot / (na * nb).sqrt())
}

/// Normalized squared difference over the concatenated left+right pair.
pub fn nsd(a: &DpPsf, b: &DpPsf) -> Result<f64> {
    let (_, na, nb, sqdiff) = joint_stats(a, b)?;
    Ok(sqdiff / (na * nb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psf::Normalization;
    use approx::assert_relative_eq;

    fn psf(cells: &[(usize, f64)]) -> DpPsf {
        let mut left = vec![0.0; 9];
        for &(i, v) in cells {
            left[i] = v;
        }
        DpPsf {
            ks: 3,
            left,
            right: vec![0.0; 9],
            anchor: None,
            missed_count: 0,
            out_of_window: 0,
            normalization: Normalization::RawCounts,
        }
    }

    #[test]
    fn identity_and_scale_invariance() {
        let p = psf(&[(0, 1.0), (4, 2.0)]);
        assert_relative_eq!(ncc(&p, &p).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(nsd(&p, &p).unwrap(), 0.0, epsilon = 1e-12);
        let mut scaled = p.clone();
        for v in scaled.left.iter_mut() {
            *v *= 3.5;
        }
        assert_relative_eq!(ncc(&p, &scaled).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn disjoint_support_is_orthogonal() {
        let a = psf(&[(0, 1.0)]);
        let b = psf(&[(8, 1.0)]);
        assert_eq!(ncc(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn nsd_ncc_identity() {
        // NSD = (na + nb)/sqrt(na*nb) - 2*NCC.
        let a = psf(&[(0, 0.3), (1, 0.7)]);
        let b = psf(&[(1, 0.4), (2, 0.6)]);
        let na: f64 = a.left.iter().map(|v| v * v).sum();
        let nb: f64 = b.left.iter().map(|v| v * v).sum();
        let lhs = nsd(&a, &b).unwrap();
        let rhs = (na + nb) / (na * nb).sqrt() - 2.0 * ncc(&a, &b).unwrap();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn zero_norm_rejected() {
        let z = psf(&[]);
        let p = psf(&[(0, 1.0)]);
        assert!(ncc(&z, &p).is_err());
    }
}
