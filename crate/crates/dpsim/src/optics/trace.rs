use super::lens::{LensPrescription, SurfaceKind, SurfaceSpec};
use super::vec3::Vec3;
use crate::error::{Error, Result};

/// Newton tolerance for asphere intersections, in mm.
const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITERS: usize = 50;
/// Minimum propagation distance between surfaces.
const T_EPS: f64 = 1e-9;

/// A ray propagating toward the sensor (+z).
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    /// Position in mm.
    pub origin: Vec3,
    /// Unit direction, z-component positive while propagating.
    pub direction: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Self { origin, direction }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissReason {
    ApertureClip,
    TotalInternalReflection,
    NoIntersection,
    Diverged,
}

/// Result of tracing one ray through the prescription.
#[derive(Debug, Clone, Copy)]
pub enum TraceOutcome {
    Landed {
        /// Sensor-plane landing point (x, y) in mm.
        landing: [f64; 2],
        /// Unit direction at the sensor.
        direction: Vec3,
    },
    Missed(MissReason),
}

impl TraceOutcome {
    pub fn is_landed(&self) -> bool {
        matches!(self, TraceOutcome::Landed { .. })
    }
}

/// Axial sag of a surface at radial height `h` (mm). Planar surfaces and the
/// stop return 0.
pub fn surface_sag(surface: &SurfaceSpec, h: f64) -> Result<f64> {
    if surface.is_planar() {
        return Ok(0.0);
    }
    let c = surface.curvature();
    let h2 = h * h;
    let arg = 1.0 - (1.0 + surface.conic) * c * c * h2;
    if arg < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "sag undefined at h = {h} mm"
        )));
    }
    let mut sag = c * h2 / (1.0 + arg.sqrt());
    let [a4, a6, a8, a10, a12] = surface.asphere_coeffs;
    let h4 = h2 * h2;
    sag += a4 * h4 + a6 * h4 * h2 + a8 * h4 * h4 + a10 * h4 * h4 * h2 + a12 * h4 * h4 * h4;
    Ok(sag)
}

/// d(sag)/dh, used for Newton steps and surface normals.
fn sag_derivative(surface: &SurfaceSpec, h: f64) -> Result<f64> {
    if surface.is_planar() {
        return Ok(0.0);
    }
    let c = surface.curvature();
    let h2 = h * h;
    let arg = 1.0 - (1.0 + surface.conic) * c * c * h2;
    if arg <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "sag slope undefined at h = {h} mm"
        )));
    }
    let mut d = c * h / arg.sqrt();
    let [a4, a6, a8, a10, a12] = surface.asphere_coeffs;
    let h3 = h2 * h;
    d += 4.0 * a4 * h3
        + 6.0 * a6 * h3 * h2
        + 8.0 * a8 * h3 * h2 * h2
        + 10.0 * a10 * h3 * h3 * h3
        + 12.0 * a12 * h3 * h3 * h3 * h2;
    Ok(d)
}

/// Vector-form Snell refraction. `normal` may face either side of the
/// surface; `None` signals total internal reflection.
pub fn refract(dir: Vec3, normal: Vec3, n1: f64, n2: f64) -> Option<Vec3> {
    let mut n = normal;
    let mut cos_i = -dir.dot(n);
    if cos_i < 0.0 {
        n = -n;
        cos_i = -cos_i;
    }
    let eta = n1 / n2;
    let sin2_t = eta * eta * (1.0 - cos_i * cos_i);
    if sin2_t > 1.0 {
        return None;
    }
    let cos_t = (1.0 - sin2_t).sqrt();
    Some((dir * eta + n * (eta * cos_i - cos_t)).normalized())
}

/// Intersection point and outward surface normal, or `None` if the ray
/// misses the surface geometrically.
fn intersect_surface(surface: &SurfaceSpec, vertex_z: f64, ray: &Ray) -> Option<(Vec3, Vec3)> {
    if surface.is_planar() {
        if ray.direction.z.abs() < 1e-15 {
            return None;
        }
        let t = (vertex_z - ray.origin.z) / ray.direction.z;
        if t < T_EPS {
            return None;
        }
        return Some((ray.at(t), Vec3::new(0.0, 0.0, 1.0)));
    }
    if surface.kind == SurfaceKind::EvenAsphere || surface.conic != 0.0 {
        return intersect_newton(surface, vertex_z, ray);
    }
    // Closed-form sphere: pick the cap on the vertex side.
    let r = surface.radius;
    let center = Vec3::new(0.0, 0.0, vertex_z + r);
    let oc = ray.origin - center;
    let b = oc.dot(ray.direction);
    let c = oc.dot(oc) - r * r;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    for t in [-b - sq, -b + sq] {
        if t < T_EPS {
            continue;
        }
        let p = ray.at(t);
        // The near cap satisfies sign(dz) == sign(r) and |dz| <= |r|; allow
        // roundoff slack so vertex hits (dz ~ +/-1 ulp) are kept.
        let dz = (p.z - vertex_z) * r.signum();
        if dz >= -1e-9 && dz <= r.abs() + 1e-9 {
            let normal = if r > 0.0 {
                (center - p).normalized()
            } else {
                (p - center).normalized()
            };
            return Some((p, normal));
        }
    }
    None
}

/// Damped Newton iteration on f(t) = z(t) - vertex_z - sag(h(t)).
fn intersect_newton(surface: &SurfaceSpec, vertex_z: f64, ray: &Ray) -> Option<(Vec3, Vec3)> {
    if ray.direction.z.abs() < 1e-15 {
        return None;
    }
    let mut t = (vertex_z - ray.origin.z) / ray.direction.z;
    if t < 0.0 {
        return None;
    }
    for _ in 0..NEWTON_MAX_ITERS {
        let p = ray.at(t);
        let h = (p.x * p.x + p.y * p.y).sqrt();
        let sag = surface_sag(surface, h).ok()?;
        let f = p.z - vertex_z - sag;
        if f.abs() < NEWTON_TOL {
            let dsag = sag_derivative(surface, h).ok()?;
            let (nx, ny) = if h > 0.0 {
                (-dsag * p.x / h, -dsag * p.y / h)
            } else {
                (0.0, 0.0)
            };
            let normal = Vec3::new(nx, ny, 1.0).normalized();
            return Some((p, normal));
        }
        let dsag = sag_derivative(surface, h).ok()?;
        let dh_dt = if h > 0.0 {
            (p.x * ray.direction.x + p.y * ray.direction.y) / h
        } else {
            0.0
        };
        let df = ray.direction.z - dsag * dh_dt;
        if df.abs() < 1e-15 {
            return None;
        }
        let mut step = -f / df;
        // Damp oversized steps to stay on the local branch.
        let max_step = surface.semi_diameter.max(1.0);
        if step.abs() > max_step {
            step = max_step * step.signum();
        }
        t += step;
        if !t.is_finite() {
            return None;
        }
    }
    None
}

/// Traces a ray from object space to the sensor plane, clipping against
/// every clear semi-diameter (including the stop) and refracting by the
/// listed material indices.
pub fn trace_ray(lens: &LensPrescription, ray: &Ray) -> TraceOutcome {
    let vertices = lens.vertex_positions();
    let mut cur = *ray;
    let mut n_cur = 1.0;
    for (i, surface) in lens.surfaces.iter().enumerate() {
        let (point, normal) = match intersect_surface(surface, vertices[i], &cur) {
            Some(hit) => hit,
            None => return TraceOutcome::Missed(MissReason::NoIntersection),
        };
        if surface.kind == SurfaceKind::Sensor {
            return TraceOutcome::Landed {
                landing: [point.x, point.y],
                direction: cur.direction,
            };
        }
        let r2 = point.x * point.x + point.y * point.y;
        if r2 > surface.semi_diameter * surface.semi_diameter {
            return TraceOutcome::Missed(MissReason::ApertureClip);
        }
        let n_next = match surface.kind {
            SurfaceKind::Sphere | SurfaceKind::EvenAsphere => {
                surface.material.map(|m| m.n).unwrap_or(1.0)
            }
            _ => n_cur,
        };
        if n_next != n_cur {
            match refract(cur.direction, normal, n_cur, n_next) {
                Some(d) => cur = Ray::new(point, d),
                None => return TraceOutcome::Missed(MissReason::TotalInternalReflection),
            }
        } else {
            cur = Ray::new(point, cur.direction);
        }
        if cur.direction.z <= 0.0 {
            return TraceOutcome::Missed(MissReason::Diverged);
        }
        n_cur = n_next;
    }
    unreachable!("prescription always ends with a sensor surface")
}
