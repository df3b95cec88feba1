//! End-to-end DP PSF computation over the valid imaging frustum.

mod calibrate;
mod coc;
mod format;
mod grid;
mod metrics;

pub use calibrate::{
    grid_search_dp_params, DpParamRanges, ReferencePsf, ScoreRow, SCORE_CSV_HEADER,
};
pub use coc::coc_dp_psf;
pub use format::{read_dppsf, write_dppsf};
pub use grid::{generate_grid, PsfGrid, PsfRecord, SamplingSpec};
pub use metrics::{ncc, nsd};

use crate::error::{Error, Result};
use crate::optics::{
    locate_entrance_pupil, paraxial_efl, sample_pupil, trace_ray, EntrancePupil, LensPrescription,
    Ray, TraceOutcome, Vec3,
};
use crate::sensor::{
    accumulate_psf, assign_direct, assign_refracted, pixel_of, DpPixelGeometry, PixelIndex,
    SensorGeometry, SubPixelAssignment,
};
use rayon::prelude::*;

/// A configured camera: refocused lens with the working aperture applied,
/// sensor grid, DP pixel geometry and the valid imaging range.
#[derive(Debug, Clone)]
pub struct CameraRig {
    pub lens: LensPrescription,
    pub sensor: SensorGeometry,
    pub dp: DpPixelGeometry,
    /// Focus distance in meters.
    pub focus_distance: f64,
    pub f_number: f64,
    /// (d_min, d_max) in meters.
    pub depth_range: (f64, f64),
    pub n_rays: usize,
    pub ks: usize,
    efl: f64,
    pupil: EntrancePupil,
}

impl CameraRig {
    /// Builds a rig from a native prescription: stops down to `f_number`,
    /// refocuses to `focus_distance` meters and caches the paraxial data.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        native_lens: &LensPrescription,
        sensor: SensorGeometry,
        dp: DpPixelGeometry,
        focus_distance: f64,
        f_number: f64,
        depth_range: (f64, f64),
        n_rays: usize,
        ks: usize,
    ) -> Result<CameraRig> {
        if ks % 2 == 0 || ks == 0 {
            return Err(Error::InvalidArgument("ks must be odd".into()));
        }
        if !(depth_range.0 > 0.0 && depth_range.0 < depth_range.1) {
            return Err(Error::InvalidArgument("invalid depth range".into()));
        }
        dp.validate()?;
        let lens = native_lens
            .with_f_number(f_number)?
            .refocused(focus_distance)?;
        let efl = paraxial_efl(&lens)?;
        let pupil = locate_entrance_pupil(&lens)?;
        Ok(CameraRig {
            lens,
            sensor,
            dp,
            focus_distance,
            f_number,
            depth_range,
            n_rays,
            ks,
            efl,
            pupil,
        })
    }

    pub fn efl(&self) -> f64 {
        self.efl
    }

    pub fn entrance_pupil(&self) -> EntrancePupil {
        self.pupil
    }

    /// Lateral field extent at `depth` meters (pinhole similar triangles).
    pub fn field_extent(&self, depth: f64) -> (f64, f64) {
        let d_mm = depth * 1000.0;
        (
            self.sensor.width / 2.0 * d_mm / self.efl,
            self.sensor.height / 2.0 * d_mm / self.efl,
        )
    }

    /// Normalized inverse-depth coordinate in [0, 1].
    pub fn z_norm(&self, depth: f64) -> f64 {
        let (d_min, d_max) = self.depth_range;
        (1.0 / depth - 1.0 / d_max) / (1.0 / d_min - 1.0 / d_max)
    }

    pub fn contains_depth(&self, depth: f64) -> bool {
        depth >= self.depth_range.0 && depth <= self.depth_range.1
    }
}

/// An object point, either in world millimeters or normalized frustum
/// coordinates (u, v in [-1, 1]); depth is always meters.
#[derive(Debug, Clone, Copy)]
pub enum ObjectPoint {
    World { x: f64, y: f64, depth: f64 },
    Normalized { u: f64, v: f64, depth: f64 },
}

impl ObjectPoint {
    pub fn depth(&self) -> f64 {
        match *self {
            ObjectPoint::World { depth, .. } | ObjectPoint::Normalized { depth, .. } => depth,
        }
    }
}

/// Maps normalized frustum coordinates to a world-space point.
pub fn frustum_to_world(rig: &CameraRig, u: f64, v: f64, depth: f64) -> Result<ObjectPoint> {
    if !(u.abs() <= 1.0 && v.abs() <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "normalized coordinates ({u}, {v}) outside [-1, 1]"
        )));
    }
    if !rig.contains_depth(depth) {
        return Err(Error::InvalidArgument(format!(
            "depth {depth} m outside the valid imaging range"
        )));
    }
    let (x_max, y_max) = rig.field_extent(depth);
    Ok(ObjectPoint::World {
        x: u * x_max,
        y: v * y_max,
        depth,
    })
}

/// Inverse of [`frustum_to_world`].
pub fn world_to_frustum(rig: &CameraRig, x: f64, y: f64, depth: f64) -> Result<ObjectPoint> {
    if !rig.contains_depth(depth) {
        return Err(Error::InvalidArgument(format!(
            "depth {depth} m outside the valid imaging range"
        )));
    }
    let (x_max, y_max) = rig.field_extent(depth);
    let (u, v) = (x / x_max, y / y_max);
    if !(u.abs() <= 1.0 + 1e-9 && v.abs() <= 1.0 + 1e-9) {
        return Err(Error::InvalidArgument(
            "point outside the valid imaging frustum".into(),
        ));
    }
    Ok(ObjectPoint::Normalized { u, v, depth })
}

pub fn as_world(rig: &CameraRig, point: &ObjectPoint) -> Result<(f64, f64, f64)> {
    match *point {
        ObjectPoint::World { x, y, depth } => Ok((x, y, depth)),
        ObjectPoint::Normalized { u, v, depth } => match frustum_to_world(rig, u, v, depth)? {
            ObjectPoint::World { x, y, depth } => Ok((x, y, depth)),
            _ => unreachable!(),
        },
    }
}

pub fn as_normalized(rig: &CameraRig, point: &ObjectPoint) -> Result<(f64, f64, f64)> {
    match *point {
        ObjectPoint::Normalized { u, v, depth } => Ok((u, v, depth)),
        ObjectPoint::World { x, y, depth } => match world_to_frustum(rig, x, y, depth)? {
            ObjectPoint::Normalized { u, v, depth } => Ok((u, v, depth)),
            _ => unreachable!(),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    RawCounts,
    MaxNormalized,
    SumNormalized,
}

/// Paired left/right ks x ks kernels anchored to a sensor pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DpPsf {
    pub ks: usize,
    /// Row-major ks*ks rasters.
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    /// Physical pixel containing the window anchor, if on-sensor.
    pub anchor: Option<PixelIndex>,
    /// Rays not accumulated (vignetted, unassigned, or out of window).
    pub missed_count: u32,
    /// Subset of missed: assigned rays landing outside the window.
    pub out_of_window: u32,
    pub normalization: Normalization,
}

impl DpPsf {
    pub fn left_total(&self) -> f64 {
        self.left.iter().sum()
    }

    pub fn right_total(&self) -> f64 {
        self.right.iter().sum()
    }

    /// Joint centroid shift: centroid_x(left) - centroid_x(right), pixels.
    pub fn centroid_disparity_x(&self) -> f64 {
        let cx = |k: &[f64]| {
            let mut sum = 0.0;
            let mut wsum = 0.0;
            for j in 0..self.ks {
                for i in 0..self.ks {
                    let v = k[j * self.ks + i];
                    sum += v * i as f64;
                    wsum += v;
                }
            }
            sum / wsum
        };
        cx(&self.left) - cx(&self.right)
    }
}

/// Joint (left+right) max or sum normalization; the left/right energy ratio
/// is preserved.
pub fn normalize(psf: &DpPsf, mode: Normalization) -> Result<DpPsf> {
    let scale = match mode {
        Normalization::MaxNormalized => psf
            .left
            .iter()
            .chain(&psf.right)
            .cloned()
            .fold(0.0f64, f64::max),
        Normalization::SumNormalized => psf.left_total() + psf.right_total(),
        Normalization::RawCounts => {
            return Err(Error::InvalidArgument(
                "cannot renormalize to raw counts".into(),
            ))
        }
    };
    if scale <= 0.0 {
        return Err(Error::InvalidArgument("all-zero PSF".into()));
    }
    Ok(DpPsf {
        ks: psf.ks,
        left: psf.left.iter().map(|v| v / scale).collect(),
        right: psf.right.iter().map(|v| v / scale).collect(),
        anchor: psf.anchor,
        missed_count: psf.missed_count,
        out_of_window: psf.out_of_window,
        normalization: mode,
    })
}

/// Traces the full ray bundle for one object point and accumulates the raw
/// DP PSF pair.
///
/// The ks x ks window is centered on the chief-ray landing point (pupil
/// center ray); when the chief ray is vignetted the centroid of landed rays
/// anchors the window instead. Window cells are pitch-sized bins aligned to
/// the anchor point, and the microlens containment and boundary tests use the
/// same anchor-aligned cell centers. This canonical alignment (blur centered
/// on a cell) makes the kernel independent of the sub-pixel phase of the
/// landing point and keeps on-axis PSF pairs exactly mirror-symmetric.
pub fn trace_dp_psf(rig: &CameraRig, point: &ObjectPoint) -> Result<DpPsf> {
    let (x, y, depth) = as_world(rig, point)?;
    if !rig.contains_depth(depth) {
        return Err(Error::InvalidArgument(format!(
            "depth {depth} m outside the valid imaging range"
        )));
    }
    // Depth is measured from the sensor plane (the photographic convention).
    let origin = Vec3::new(x, y, rig.lens.sensor_z() - depth * 1000.0);
    let aims = sample_pupil(rig.pupil.diameter, rig.n_rays)?;
    let pupil_z = rig.pupil.z;

    let launch = |ax: f64, ay: f64| {
        let dir = (Vec3::new(ax, ay, pupil_z) - origin).normalized();
        trace_ray(&rig.lens, &Ray::new(origin, dir))
    };

    let outcomes: Vec<TraceOutcome> = aims.par_iter().map(|&[ax, ay]| launch(ax, ay)).collect();

    // Window anchor: chief-ray landing, else centroid of landed rays.
    let anchor_point = match launch(0.0, 0.0) {
        TraceOutcome::Landed { landing, .. } => landing,
        TraceOutcome::Missed(_) => {
            let mut n = 0usize;
            let mut acc = [0.0, 0.0];
            for o in &outcomes {
                if let TraceOutcome::Landed { landing, .. } = o {
                    acc[0] += landing[0];
                    acc[1] += landing[1];
                    n += 1;
                }
            }
            if n == 0 {
                return Err(Error::FullyVignetted);
            }
            [acc[0] / n as f64, acc[1] / n as f64]
        }
    };

    let ps = rig.sensor.ps();
    let assignments: Vec<(Option<PixelIndex>, SubPixelAssignment)> = outcomes
        .iter()
        .map(|o| match o {
            TraceOutcome::Missed(_) => (None, SubPixelAssignment::Missed),
            TraceOutcome::Landed { landing, direction } => {
                if pixel_of(&rig.sensor, *landing).is_none() {
                    return (None, SubPixelAssignment::Missed);
                }
                // Bin into the anchor-aligned window grid; round-to-nearest
                // keeps the on-axis mirror symmetry exact.
                let wi = ((landing[0] - anchor_point[0]) / ps + 0.5).floor();
                let wj = ((landing[1] - anchor_point[1]) / ps + 0.5).floor();
                let cx = anchor_point[0] + wi * ps;
                let cy = anchor_point[1] + wj * ps;
                let (dx, dy) = (landing[0] - cx, landing[1] - cy);
                let tan_theta = direction.x / direction.z;
                let assignment = if dx * dx + dy * dy <= rig.dp.r * rig.dp.r {
                    assign_refracted(&rig.dp, cx, landing[0], tan_theta)
                } else {
                    assign_direct(&rig.dp, cx, landing[0], tan_theta)
                };
                (
                    Some(PixelIndex { i: wi as i32, j: wj as i32 }),
                    assignment,
                )
            }
        })
        .collect();

    let counts = accumulate_psf(&assignments, PixelIndex { i: 0, j: 0 }, rig.ks)?;
    if counts.left.iter().sum::<u32>() + counts.right.iter().sum::<u32>() == 0 {
        return Err(Error::FullyVignetted);
    }
    Ok(DpPsf {
        ks: rig.ks,
        left: counts.left.iter().map(|&c| c as f64).collect(),
        right: counts.right.iter().map(|&c| c as f64).collect(),
        anchor: pixel_of(&rig.sensor, anchor_point).map(|(idx, _)| idx),
        missed_count: counts.missed_count,
        out_of_window: counts.out_of_window,
        normalization: Normalization::RawCounts,
    })
}

#[cfg(test)]
pub(crate) mod test_rig {
    use super::*;
    use crate::optics::parse_lens_prescription;
    use crate::sensor::DpPixelRatios;

    /// The reference rig: RF50 at F/4, 1 m focus, 0.5-20 m, 4096 rays, ks 21.
    pub fn reference_rig() -> CameraRig {
        let lens = parse_lens_prescription(include_str!("../../data/rf50.lens")).unwrap();
        let sensor = SensorGeometry::new(36.0, 24.0, 768, 512).unwrap();
        let dp = DpPixelGeometry::from_ratios(sensor.ps(), &DpPixelRatios::default()).unwrap();
        CameraRig::new(&lens, sensor, dp, 1.0, 4.0, (0.5, 20.0), 4096, 21).unwrap()
    }
}
