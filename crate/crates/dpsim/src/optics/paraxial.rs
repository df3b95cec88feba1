//! Paraxial (2x2 ray-transfer) utilities: focal length, entrance pupil
//! location, and image-distance focus solves.
//!
//! State vector is (y, w) with w = n * u the reduced angle, so refraction at
//! a surface of power phi is w' = w - phi*y and translation by t in a medium
//! of index n is y' = y + (t/n) * w.

use super::lens::{LensPrescription, SurfaceKind};
use crate::error::{Error, Result};

/// Row-major 2x2 matrix acting on (y, w).
#[derive(Debug, Clone, Copy)]
struct Mat2 {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

const IDENTITY: Mat2 = Mat2 {
    a: 1.0,
    b: 0.0,
    c: 0.0,
    d: 1.0,
};

impl Mat2 {
    fn compose(self, rhs: Mat2) -> Mat2 {
        // self applied after rhs
        Mat2 {
            a: self.a * rhs.a + self.b * rhs.c,
            b: self.a * rhs.b + self.b * rhs.d,
            c: self.c * rhs.a + self.d * rhs.c,
            d: self.c * rhs.b + self.d * rhs.d,
        }
    }
}

fn refraction(power: f64) -> Mat2 {
    Mat2 {
        a: 1.0,
        b: 0.0,
        c: -power,
        d: 1.0,
    }
}

fn translation(t: f64, n: f64) -> Mat2 {
    Mat2 {
        a: 1.0,
        b: t / n,
        c: 0.0,
        d: 1.0,
    }
}

/// System matrix from the first surface vertex to the exit of surface
/// `last` (inclusive), without the trailing gap.
fn system_matrix(lens: &LensPrescription, last: usize) -> Mat2 {
    let mut m = IDENTITY;
    let mut n_cur = 1.0;
    for (i, s) in lens.surfaces[..=last].iter().enumerate() {
        let n_next = match s.kind {
            SurfaceKind::Sphere | SurfaceKind::EvenAsphere => {
                s.material.map(|mat| mat.n).unwrap_or(1.0)
            }
            _ => n_cur,
        };
        let power = (n_next - n_cur) * s.curvature();
        m = refraction(power).compose(m);
        if i < last {
            m = translation(s.thickness, n_next).compose(m);
        }
        n_cur = n_next;
    }
    m
}

fn last_optical_index(lens: &LensPrescription) -> usize {
    lens.surfaces.len() - 2
}

/// Effective focal length in mm.
pub fn paraxial_efl(lens: &LensPrescription) -> Result<f64> {
    let m = system_matrix(lens, last_optical_index(lens));
    if m.c.abs() < 1e-12 {
        return Err(Error::Paraxial("afocal system (zero power)".into()));
    }
    Ok(-1.0 / m.c)
}

/// Entrance pupil: the paraxial image of the stop through the surfaces
/// preceding it, seen from object space.
#[derive(Debug, Clone, Copy)]
pub struct EntrancePupil {
    /// Axial position in mm relative to the first surface vertex.
    pub z: f64,
    /// Diameter in mm.
    pub diameter: f64,
}

pub fn locate_entrance_pupil(lens: &LensPrescription) -> Result<EntrancePupil> {
    let stop = &lens.surfaces[lens.stop_index];
    // Matrix from the first vertex plane to the stop plane.
    let mut m = IDENTITY;
    let mut n_cur = 1.0;
    for s in &lens.surfaces[..lens.stop_index] {
        let n_next = s.material.map(|mat| mat.n).unwrap_or(1.0);
        let power = (n_next - n_cur) * s.curvature();
        m = refraction(power).compose(m);
        m = translation(s.thickness, n_next).compose(m);
        n_cur = n_next;
    }
    // A point at height h on a plane z_e in object space images onto the stop
    // plane at height A*h when B - A*z_e = 0; the stop-to-pupil magnification
    // is therefore 1/A.
    if m.a.abs() < 1e-12 {
        return Err(Error::Paraxial(
            "entrance pupil at infinity (object-space telecentric)".into(),
        ));
    }
    Ok(EntrancePupil {
        z: m.b / m.a,
        diameter: stop.semi_diameter * 2.0 / m.a.abs(),
    })
}

/// Paraxial image distance (mm past the last optical surface) for an on-axis
/// object `object_distance_mm` in front of the first vertex. Pass infinity
/// for the infinite-conjugate solve.
pub fn image_distance(lens: &LensPrescription, object_distance_mm: f64) -> Result<f64> {
    let efl = paraxial_efl(lens)?;
    if object_distance_mm.is_finite() && object_distance_mm <= efl {
        return Err(Error::Paraxial(format!(
            "object distance {object_distance_mm} mm is inside the focal distance"
        )));
    }
    let m = system_matrix(lens, last_optical_index(lens));
    let (y, w) = if object_distance_mm.is_finite() {
        (object_distance_mm, 1.0)
    } else {
        (1.0, 0.0)
    };
    let y_out = m.a * y + m.b * w;
    let w_out = m.c * y + m.d * w;
    if w_out >= 0.0 {
        return Err(Error::Paraxial("image is virtual or at infinity".into()));
    }
    Ok(-y_out / w_out)
}

/// Sensor-plane height of a paraxial ray entering the first vertex plane at
/// height `y` with object-space slope `u`. Oracle for real-trace consistency.
pub fn paraxial_landing_height(lens: &LensPrescription, y: f64, u: f64) -> f64 {
    let last = last_optical_index(lens);
    let m = system_matrix(lens, last);
    let gap = translation(lens.surfaces[last].thickness, 1.0);
    let m = gap.compose(m);
    m.a * y + m.b * u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::lens::{parse_lens_prescription, Material, SurfaceSpec};
    use approx::assert_relative_eq;

    fn rf50() -> LensPrescription {
        parse_lens_prescription(include_str!("../../data/rf50.lens")).unwrap()
    }

    fn rf35() -> LensPrescription {
        parse_lens_prescription(include_str!("../../data/rf35.lens")).unwrap()
    }

    #[test]
    fn rf50_efl_matches_designation() {
        assert_relative_eq!(paraxial_efl(&rf50()).unwrap(), 50.0, max_relative = 0.02);
    }

    #[test]
    fn rf35_efl_matches_designation() {
        // The published surface data put the true EFL at 36.01 mm; lens
        // designations are nominal, so allow 3%.
        assert_relative_eq!(paraxial_efl(&rf35()).unwrap(), 35.0, max_relative = 0.03);
    }

    #[test]
    fn thin_biconvex_lensmaker() {
        // R1 = -R2 = 100 mm, n = 1.5, zero thickness -> f = 100 mm.
        let mk = |kind, radius, thickness, material| SurfaceSpec {
            kind,
            radius,
            thickness,
            material,
            semi_diameter: 10.0,
            conic: 0.0,
            asphere_coeffs: [0.0; 5],
        };
        let lens = LensPrescription {
            surfaces: vec![
                mk(
                    SurfaceKind::Stop,
                    0.0,
                    0.0,
                    None,
                ),
                mk(
                    SurfaceKind::Sphere,
                    100.0,
                    0.0,
                    Some(Material { n: 1.5, v: 50.0 }),
                ),
                mk(SurfaceKind::Sphere, -100.0, 100.0, None),
                mk(SurfaceKind::Sensor, 0.0, 0.0, None),
            ],
            stop_index: 0,
            native_f_number: 5.0,
        };
        assert_relative_eq!(paraxial_efl(&lens).unwrap(), 100.0, epsilon = 1e-9);
        // Stop first: pupil coincides with the stop, magnification 1.
        let pupil = locate_entrance_pupil(&lens).unwrap();
        assert_eq!(pupil.z, 0.0);
        assert_eq!(pupil.diameter, 20.0);
    }

    #[test]
    fn rf50_pupil_diameter_matches_f_number() {
        let lens = rf50();
        let efl = paraxial_efl(&lens).unwrap();
        let pupil = locate_entrance_pupil(&lens).unwrap();
        assert_relative_eq!(pupil.diameter, efl / 1.8, max_relative = 0.05);
        assert!(pupil.z.is_finite());
        // Stopped down to F/4 the pupil scales accordingly.
        let at4 = lens.with_f_number(4.0).unwrap();
        let p4 = locate_entrance_pupil(&at4).unwrap();
        assert_relative_eq!(p4.diameter, efl / 4.0, max_relative = 0.05);
    }

    #[test]
    fn refocus_moves_sensor_by_thin_lens_amount() {
        let lens = rf50();
        let inf = lens.refocused(f64::INFINITY).unwrap();
        let near = lens.refocused(1.0).unwrap();
        let last = lens.surfaces.len() - 2;
        let delta = near.surfaces[last].thickness - inf.surfaces[last].thickness;
        // Thin-lens Newton bound: f^2/(d-f) = 2500/950, thick-lens deviation allowed.
        assert_relative_eq!(delta, 2500.0 / 950.0, max_relative = 0.15);
        assert!(lens.refocused(0.04).is_err());
    }
}
