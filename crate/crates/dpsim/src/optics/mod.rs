//! Lens prescription representation, sequential surface ray tracing,
//! paraxial utilities and entrance-pupil sampling.

mod lens;
mod paraxial;
mod pupil;
mod trace;
mod vec3;

pub use lens::{parse_lens_prescription, LensPrescription, Material, SurfaceKind, SurfaceSpec};
pub use paraxial::{locate_entrance_pupil, paraxial_efl, paraxial_landing_height, EntrancePupil};
pub use pupil::sample_pupil;
pub use trace::{refract, surface_sag, trace_ray, MissReason, Ray, TraceOutcome};
pub use vec3::Vec3;
