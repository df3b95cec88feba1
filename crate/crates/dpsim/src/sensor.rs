//! DP pixel model: microlens containment, left/right sub-pixel assignment
//! via the boundary-line construction, and kernel accumulation.
//!
//! The sub-pixel split is one-dimensional in x; sub-pixels span the full
//! pixel height. Ties at the middle boundary assign Right.

use crate::error::{Error, Result};
use crate::optics::Vec3;
use serde::Deserialize;

/// Microlens / sub-pixel geometry, all lengths in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpPixelGeometry {
    /// Pixel pitch.
    pub ps: f64,
    /// Microlens radius.
    pub r: f64,
    /// Microlens focal length.
    pub f: f64,
    /// Microlens-to-sub-pixel gap.
    pub h: f64,
    /// Sub-pixel width.
    pub w: f64,
}

/// Ratios of the pixel pitch, as stored in JSON configs.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct DpPixelRatios {
    #[serde(default = "default_r")]
    pub r_over_ps: f64,
    #[serde(default = "default_f")]
    pub f_over_ps: f64,
    #[serde(default = "default_h")]
    pub h_over_ps: f64,
    #[serde(default = "default_w")]
    pub w_over_ps: f64,
}

// Grid-search optimum for the reference sensor.
fn default_r() -> f64 {
    0.50
}
fn default_f() -> f64 {
    1.44
}
fn default_h() -> f64 {
    0.78
}
fn default_w() -> f64 {
    0.30
}

impl Default for DpPixelRatios {
    fn default() -> Self {
        Self {
            r_over_ps: default_r(),
            f_over_ps: default_f(),
            h_over_ps: default_h(),
            w_over_ps: default_w(),
        }
    }
}

impl DpPixelGeometry {
    pub fn from_ratios(ps: f64, ratios: &DpPixelRatios) -> Result<Self> {
        let g = Self {
            ps,
            r: ratios.r_over_ps * ps,
            f: ratios.f_over_ps * ps,
            h: ratios.h_over_ps * ps,
            w: ratios.w_over_ps * ps,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f > self.h && self.h > 0.0) {
            return Err(Error::InvalidArgument(
                "DP pixel geometry requires f > h > 0".into(),
            ));
        }
        if !(self.w > 0.0 && self.w <= self.ps / 2.0) {
            return Err(Error::InvalidArgument(
                "sub-pixel width must satisfy 0 < w <= ps/2".into(),
            ));
        }
        if !(self.r > 0.0 && self.r <= self.ps / 2.0) {
            return Err(Error::InvalidArgument(
                "microlens radius must satisfy 0 < r <= ps/2".into(),
            ));
        }
        Ok(())
    }
}

/// Physical sensor extent and pixel grid. Pixels are square; the grid is
/// centered on the optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorGeometry {
    pub width: f64,
    pub height: f64,
    pub cols: usize,
    pub rows: usize,
}

impl SensorGeometry {
    pub fn new(width: f64, height: f64, cols: usize, rows: usize) -> Result<Self> {
        let s = Self {
            width,
            height,
            cols,
            rows,
        };
        if cols == 0 || rows == 0 || width <= 0.0 || height <= 0.0 {
            return Err(Error::InvalidArgument("empty sensor".into()));
        }
        if (width / cols as f64 - height / rows as f64).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "pixels are not square: {}x{} over {}x{} mm",
                cols, rows, width, height
            )));
        }
        Ok(s)
    }

    /// Pixel pitch in mm.
    pub fn ps(&self) -> f64 {
        self.width / self.cols as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelIndex {
    pub i: i32,
    pub j: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubPixelAssignment {
    Left,
    Right,
    Missed,
}

/// Bins a sensor-plane point into the pixel grid. Returns the index and the
/// pixel center in mm, or `None` when the point is off-sensor.
pub fn pixel_of(sensor: &SensorGeometry, point: [f64; 2]) -> Option<(PixelIndex, [f64; 2])> {
    let ps = sensor.ps();
    let half_w = sensor.width / 2.0;
    let half_h = sensor.height / 2.0;
    let i = ((point[0] + half_w) / ps).floor();
    let j = ((point[1] + half_h) / ps).floor();
    if i < 0.0 || j < 0.0 || i >= sensor.cols as f64 || j >= sensor.rows as f64 {
        return None;
    }
    let (i, j) = (i as i32, j as i32);
    let center = [
        (i as f64 + 0.5) * ps - half_w,
        (j as f64 + 0.5) * ps - half_h,
    ];
    Some((PixelIndex { i, j }, center))
}

/// Assignment for a ray refracted by the microlens (landing within radius r
/// of the pixel center). `tan_theta` is the landing slope x'/z'.
pub fn assign_refracted(
    geom: &DpPixelGeometry,
    x_i: f64,
    x_k: f64,
    tan_theta: f64,
) -> SubPixelAssignment {
    let (f, h, w) = (geom.f, geom.h, geom.w);
    let shift = h / (f - h);
    let x_l1 = x_i + w - (f * tan_theta - w) * shift;
    let x_m1 = x_i - (f * tan_theta) * shift;
    let x_r1 = x_i - w - (f * tan_theta + w) * shift;
    classify(x_k, x_l1, x_m1, x_r1)
}

/// Assignment for a ray that missed the microlens and propagates straight
/// down to the sub-pixel plane.
pub fn assign_direct(
    geom: &DpPixelGeometry,
    x_i: f64,
    x_k: f64,
    tan_theta: f64,
) -> SubPixelAssignment {
    let (h, w) = (geom.h, geom.w);
    let x_l2 = x_i + w - h * tan_theta;
    let x_m2 = x_i - h * tan_theta;
    let x_r2 = x_i - w - h * tan_theta;
    classify(x_k, x_l2, x_m2, x_r2)
}

fn classify(x_k: f64, x_l: f64, x_m: f64, x_r: f64) -> SubPixelAssignment {
    if x_r <= x_k && x_k <= x_m {
        SubPixelAssignment::Right
    } else if x_m < x_k && x_k <= x_l {
        SubPixelAssignment::Left
    } else {
        SubPixelAssignment::Missed
    }
}

/// Full per-ray assignment: pixel binning, 2D circular microlens containment
/// about the pixel center, then the refracted or direct boundary test.
pub fn assign_subpixel(
    geom: &DpPixelGeometry,
    sensor: &SensorGeometry,
    landing: [f64; 2],
    dir: Vec3,
) -> (Option<PixelIndex>, SubPixelAssignment) {
    let Some((idx, center)) = pixel_of(sensor, landing) else {
        return (None, SubPixelAssignment::Missed);
    };
    let dx = landing[0] - center[0];
    let dy = landing[1] - center[1];
    let tan_theta = dir.x / dir.z;
    let assignment = if dx * dx + dy * dy <= geom.r * geom.r {
        assign_refracted(geom, center[0], landing[0], tan_theta)
    } else {
        assign_direct(geom, center[0], landing[0], tan_theta)
    };
    (Some(idx), assignment)
}

/// Paired integer-count kernels accumulated around an anchor pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfCounts {
    pub ks: usize,
    /// Row-major ks*ks left-sub-pixel hit counts.
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    /// Rays not accumulated: missed assignments plus in-assignment rays
    /// falling outside the window.
    pub missed_count: u32,
    /// Subset of `missed_count`: rays assigned Left/Right but outside the
    /// ks x ks window.
    pub out_of_window: u32,
}

/// Accumulates per-ray assignments into a ks x ks window centered at
/// `anchor`. Each assigned ray adds exactly one count to one cell.
pub fn accumulate_psf(
    assignments: &[(Option<PixelIndex>, SubPixelAssignment)],
    anchor: PixelIndex,
    ks: usize,
) -> Result<PsfCounts> {
    if ks % 2 == 0 {
        return Err(Error::InvalidArgument("kernel size must be odd".into()));
    }
    let half = (ks / 2) as i32;
    let mut counts = PsfCounts {
        ks,
        left: vec![0; ks * ks],
        right: vec![0; ks * ks],
        missed_count: 0,
        out_of_window: 0,
    };
    for (idx, assignment) in assignments {
        let side = match assignment {
            SubPixelAssignment::Left => &mut counts.left,
            SubPixelAssignment::Right => &mut counts.right,
            SubPixelAssignment::Missed => {
                counts.missed_count += 1;
                continue;
            }
        };
        let Some(idx) = idx else {
            counts.missed_count += 1;
            continue;
        };
        let di = idx.i - anchor.i + half;
        let dj = idx.j - anchor.j + half;
        if di < 0 || dj < 0 || di >= ks as i32 || dj >= ks as i32 {
            counts.missed_count += 1;
            counts.out_of_window += 1;
            continue;
        }
        side[dj as usize * ks + di as usize] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_geom() -> DpPixelGeometry {
        // Unit pixel pitch with the grid-search optimum ratios.
        DpPixelGeometry {
            ps: 1.0,
            r: 0.50,
            f: 1.44,
            h: 0.78,
            w: 0.30,
        }
    }

    fn grid3() -> SensorGeometry {
        SensorGeometry::new(3.0, 3.0, 3, 3).unwrap()
    }

    #[test]
    fn pixel_of_center_and_offsets() {
        let s = grid3();
        let (idx, center) = pixel_of(&s, [0.0, 0.0]).unwrap();
        assert_eq!(idx, PixelIndex { i: 1, j: 1 });
        assert_eq!(center, [0.0, 0.0]);
        let (idx, _) = pixel_of(&s, [1.3, 0.0]).unwrap();
        assert_eq!(idx, PixelIndex { i: 2, j: 1 });
        assert!(pixel_of(&s, [10.0, 0.0]).is_none());
    }

    #[test]
    fn refracted_boundaries_at_normal_incidence() {
        let g = unit_geom();
        // Symmetric boundaries: x_M1 = 0, x_L1 = -x_R1 = w*f/(f-h).
        let edge = g.w * g.f / (g.f - g.h);
        assert_relative_eq!(edge, 0.6545, epsilon = 1e-4);
        assert_eq!(
            assign_refracted(&g, 0.0, 0.2, 0.0),
            SubPixelAssignment::Left
        );
        assert_eq!(
            assign_refracted(&g, 0.0, -0.2, 0.0),
            SubPixelAssignment::Right
        );
        assert_eq!(
            assign_refracted(&g, 0.0, 0.66, 0.0),
            SubPixelAssignment::Missed
        );
    }

    #[test]
    fn refracted_tilted_example() {
        let g = unit_geom();
        // tan = 0.1: x_M1 ~ -0.1702, x_R1 ~ -0.8247.
        assert_eq!(
            assign_refracted(&g, 0.0, -0.5, 0.1),
            SubPixelAssignment::Right
        );
    }

    #[test]
    fn direct_boundary_examples() {
        let g = unit_geom();
        // tan = 0: boundaries at +w, 0, -w.
        assert_eq!(assign_direct(&g, 0.0, 0.1, 0.0), SubPixelAssignment::Left);
        assert_eq!(assign_direct(&g, 0.0, -0.1, 0.0), SubPixelAssignment::Right);
        // tan = 0.1: left interval (-0.078, 0.222].
        assert_eq!(assign_direct(&g, 0.0, 0.0, 0.1), SubPixelAssignment::Left);
        assert_eq!(assign_direct(&g, 0.0, 0.3, 0.1), SubPixelAssignment::Missed);
    }

    #[test]
    fn middle_boundary_tie_breaks_right() {
        let g = unit_geom();
        assert_eq!(assign_direct(&g, 0.0, 0.0, 0.0), SubPixelAssignment::Right);
        assert_eq!(
            assign_refracted(&g, 0.0, 0.0, 0.0),
            SubPixelAssignment::Right
        );
    }

    #[test]
    fn containment_dispatch() {
        let g = unit_geom();
        let s = grid3();
        // At a pixel center: distance 0 <= r, refracted path.
        let (idx, a) = assign_subpixel(&g, &s, [0.0, 0.0], Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(idx, Some(PixelIndex { i: 1, j: 1 }));
        assert_eq!(a, SubPixelAssignment::Right); // tie at the middle boundary

        // Near a pixel corner with r = 0.5 ps: distance ~0.707 ps > r, direct.
        let corner = [0.49, 0.49];
        let (_, a) = assign_subpixel(&g, &s, corner, Vec3::new(0.0, 0.0, 1.0));
        // Direct with x_k = 0.49 > w = 0.3 relative to center 0: missed strip.
        assert_eq!(a, SubPixelAssignment::Missed);

        let (idx, a) = assign_subpixel(&g, &s, [10.0, 0.0], Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(idx, None);
        assert_eq!(a, SubPixelAssignment::Missed);
    }

    #[test]
    fn accumulate_unit_impulse() {
        let anchor = PixelIndex { i: 5, j: 5 };
        let one = vec![(Some(anchor), SubPixelAssignment::Left)];
        let psf = accumulate_psf(&one, anchor, 21).unwrap();
        assert_eq!(psf.left[10 * 21 + 10], 1);
        assert_eq!(psf.right.iter().sum::<u32>(), 0);
        assert_eq!(psf.missed_count, 0);
    }

    #[test]
    fn accumulate_outside_window() {
        let anchor = PixelIndex { i: 5, j: 5 };
        let far = vec![(
            Some(PixelIndex { i: 16, j: 5 }),
            SubPixelAssignment::Left,
        )];
        let psf = accumulate_psf(&far, anchor, 21).unwrap();
        assert_eq!(psf.missed_count, 1);
        assert_eq!(psf.out_of_window, 1);
        assert!(psf.left.iter().all(|&c| c == 0));
        assert!(accumulate_psf(&far, anchor, 20).is_err());
    }

    /// Thin-microlens geometric oracle: deflect so the ray crosses the focal
    /// plane where the parallel chief ray does, propagate down h, and test
    /// the sub-pixel strips.
    fn oracle_refracted(g: &DpPixelGeometry, x_i: f64, x_k: f64, t: f64) -> SubPixelAssignment {
        let x_h = x_k + (x_i + g.f * t - x_k) * g.h / g.f;
        strip_test(g, x_i, x_h)
    }

    fn oracle_direct(g: &DpPixelGeometry, x_i: f64, x_k: f64, t: f64) -> SubPixelAssignment {
        strip_test(g, x_i, x_k + g.h * t)
    }

    fn strip_test(g: &DpPixelGeometry, x_i: f64, x_h: f64) -> SubPixelAssignment {
        if x_h >= x_i - g.w && x_h <= x_i {
            SubPixelAssignment::Right
        } else if x_h > x_i && x_h <= x_i + g.w {
            SubPixelAssignment::Left
        } else {
            SubPixelAssignment::Missed
        }
    }

    fn near_boundary(g: &DpPixelGeometry, x_i: f64, x_h: f64) -> bool {
        [x_i - g.w, x_i, x_i + g.w]
            .iter()
            .any(|b| (x_h - b).abs() < 1e-9)
    }

    proptest! {
        #[test]
        fn oracle_equivalence_refracted(
            x_i in -5.0..5.0f64,
            dx in -0.5..0.5f64,
            t in -0.5..0.5f64,
        ) {
            let g = unit_geom();
            let x_k = x_i + dx;
            let x_h = x_k + (x_i + g.f * t - x_k) * g.h / g.f;
            prop_assume!(!near_boundary(&g, x_i, x_h));
            prop_assert_eq!(assign_refracted(&g, x_i, x_k, t), oracle_refracted(&g, x_i, x_k, t));
        }

        #[test]
        fn oracle_equivalence_direct(
            x_i in -5.0..5.0f64,
            dx in -0.5..0.5f64,
            t in -0.5..0.5f64,
        ) {
            let g = unit_geom();
            let x_k = x_i + dx;
            prop_assume!(!near_boundary(&g, x_i, x_k + g.h * t));
            prop_assert_eq!(assign_direct(&g, x_i, x_k, t), oracle_direct(&g, x_i, x_k, t));
        }

        #[test]
        fn mirror_antisymmetry(
            x_i in -5.0..5.0f64,
            dx in -0.5..0.5f64,
            t in -0.5..0.5f64,
        ) {
            let g = unit_geom();
            let x_k = x_i + dx;
            for (a, b) in [
                (assign_refracted(&g, x_i, x_k, t), assign_refracted(&g, -x_i, -x_k, -t)),
                (assign_direct(&g, x_i, x_k, t), assign_direct(&g, -x_i, -x_k, -t)),
            ] {
                let mirrored = match a {
                    SubPixelAssignment::Left => SubPixelAssignment::Right,
                    SubPixelAssignment::Right => SubPixelAssignment::Left,
                    SubPixelAssignment::Missed => SubPixelAssignment::Missed,
                };
                // Boundary ties flip sides under mirroring; skip exact hits.
                let x_m = x_i - g.f * t * g.h / (g.f - g.h);
                let x_m2 = x_i - g.h * t;
                if (x_k - x_m).abs() > 1e-12 && (x_k - x_m2).abs() > 1e-12 {
                    prop_assert_eq!(b, mirrored);
                }
            }
        }
    }
}
