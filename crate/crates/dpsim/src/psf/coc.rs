use super::{as_world, CameraRig, DpPsf, Normalization, ObjectPoint};
use crate::error::Result;
use crate::sensor::pixel_of;

/// Thin-lens circle-of-confusion baseline: a uniform disc split into half
/// discs along the vertical diameter, sum-normalized. The half ordering
/// follows the defocus sign so near/far points mirror each other.
pub fn coc_dp_psf(rig: &CameraRig, point: &ObjectPoint) -> Result<DpPsf> {
    let (x, y, depth) = as_world(rig, point)?;
    let d_f = rig.focus_distance;
    let efl = rig.efl();
    let aperture = rig.entrance_pupil().diameter;
    let d_f_mm = d_f * 1000.0;
    // CoC diameter in mm, then in pixels.
    let c_mm = aperture * (depth - d_f).abs() / depth * efl / (d_f_mm - efl);
    let ps = rig.sensor.ps();
    let c_px = c_mm / ps;

    let ks = rig.ks;
    let half = (ks / 2) as f64;
    let mut left = vec![0.0f64; ks * ks];
    let mut right = vec![0.0f64; ks * ks];

    if c_px < 1.0 {
        let center = (ks / 2) * ks + ks / 2;
        left[center] = 0.5;
        right[center] = 0.5;
    } else {
        let radius = c_px / 2.0;
        // Near points image the left PSF on the -x side.
        let left_takes_negative_x = depth < d_f;
        for j in 0..ks {
            for i in 0..ks {
                let dx = i as f64 - half;
                let dy = j as f64 - half;
                if dx * dx + dy * dy > radius * radius {
                    continue;
                }
                let at = j * ks + i;
                if dx == 0.0 {
                    left[at] = 0.5;
                    right[at] = 0.5;
                } else if (dx < 0.0) == left_takes_negative_x {
                    left[at] = 1.0;
                } else {
                    right[at] = 1.0;
                }
            }
        }
    }
    let sum: f64 = left.iter().chain(&right).sum();
    for v in left.iter_mut().chain(&mut right) {
        *v /= sum;
    }

    // Pinhole anchor: project through the thin-lens image distance at focus.
    let gap = efl * d_f_mm / (d_f_mm - efl);
    let scale = -gap / (depth * 1000.0);
    let anchor = pixel_of(&rig.sensor, [x * scale, y * scale]).map(|(idx, _)| idx);

    Ok(DpPsf {
        ks,
        left,
        right,
        anchor,
        missed_count: 0,
        out_of_window: 0,
        normalization: Normalization::SumNormalized,
    })
}

/// Expected CoC diameter in pixels for a given depth.
#[cfg(test)]
pub(crate) fn coc_diameter_px(rig: &CameraRig, depth: f64) -> f64 {
    let d_f = rig.focus_distance;
    let efl = rig.efl();
    let aperture = rig.entrance_pupil().diameter;
    let c_mm = aperture * (depth - d_f).abs() / depth * efl / (d_f * 1000.0 - efl);
    c_mm / rig.sensor.ps()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psf::test_rig::reference_rig;
    use approx::assert_relative_eq;

    fn support_width(kernel: &[f64], other: &[f64], ks: usize) -> usize {
        // Occupied column span of the joint pair.
        let mut min = ks;
        let mut max = 0;
        for j in 0..ks {
            for i in 0..ks {
                if kernel[j * ks + i] > 0.0 || other[j * ks + i] > 0.0 {
                    min = min.min(i);
                    max = max.max(i);
                }
            }
        }
        max + 1 - min
    }

    #[test]
    fn focused_point_is_a_split_impulse() {
        let rig = reference_rig();
        let p = ObjectPoint::Normalized { u: 0.0, v: 0.0, depth: 1.0 };
        let psf = coc_dp_psf(&rig, &p).unwrap();
        let center = (rig.ks / 2) * rig.ks + rig.ks / 2;
        assert_eq!(psf.left[center], 0.5);
        assert_eq!(psf.right[center], 0.5);
    }

    #[test]
    fn disc_diameter_matches_thin_lens_formula() {
        let rig = reference_rig();
        // Spot check the formula itself at 0.5 m: ~14 px at this pitch.
        assert_relative_eq!(coc_diameter_px(&rig, 0.5), 14.0, epsilon = 0.6);
        for depth in [0.5, 2.0] {
            let p = ObjectPoint::Normalized { u: 0.0, v: 0.0, depth };
            let psf = coc_dp_psf(&rig, &p).unwrap();
            let width = support_width(&psf.left, &psf.right, rig.ks) as f64;
            assert!(
                (width - coc_diameter_px(&rig, depth)).abs() <= 1.0,
                "depth {depth}: raster width {width} vs formula {}",
                coc_diameter_px(&rig, depth)
            );
        }
    }

    #[test]
    fn half_disc_orientation_flips_across_focus() {
        let rig = reference_rig();
        let near = coc_dp_psf(&rig, &ObjectPoint::Normalized { u: 0.0, v: 0.0, depth: 0.5 })
            .unwrap();
        let far = coc_dp_psf(&rig, &ObjectPoint::Normalized { u: 0.0, v: 0.0, depth: 2.0 })
            .unwrap();
        assert!(near.centroid_disparity_x() < 0.0);
        assert!(far.centroid_disparity_x() > 0.0);
        // Near left is the x-mirror of far left up to disc size.
        let ks = rig.ks;
        let near_left_mass_neg: f64 = (0..ks)
            .flat_map(|j| (0..ks / 2).map(move |i| (i, j)))
            .map(|(i, j)| near.left[j * ks + i])
            .sum();
        assert!(near_left_mass_neg > 0.4);
    }
}
