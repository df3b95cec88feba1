use crate::error::{Error, Result};

/// Refractive medium following a surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    /// Refractive index at the working wavelength.
    pub n: f64,
    /// Abbe number.
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceKind {
    Sphere,
    EvenAsphere,
    Stop,
    Sensor,
}

/// One row of a lens prescription table.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSpec {
    pub kind: SurfaceKind,
    /// Signed radius of curvature in mm; 0 means planar.
    pub radius: f64,
    /// Axial gap to the next surface in mm.
    pub thickness: f64,
    /// Medium following the surface; `None` for air.
    pub material: Option<Material>,
    /// Clear semi-diameter in mm.
    pub semi_diameter: f64,
    pub conic: f64,
    /// Even-asphere coefficients a4, a6, a8, a10, a12 (mm^-3 .. mm^-11).
    pub asphere_coeffs: [f64; 5],
}

impl SurfaceSpec {
    pub fn is_planar(&self) -> bool {
        self.radius == 0.0
    }

    /// Curvature 1/R, 0 for planar surfaces.
    pub fn curvature(&self) -> f64 {
        if self.is_planar() {
            0.0
        } else {
            1.0 / self.radius
        }
    }
}

/// Ordered surface list ending with the sensor plane.
#[derive(Debug, Clone, PartialEq)]
pub struct LensPrescription {
    pub surfaces: Vec<SurfaceSpec>,
    pub stop_index: usize,
    pub native_f_number: f64,
}

impl LensPrescription {
    /// Axial vertex position of each surface, first vertex at z = 0.
    pub fn vertex_positions(&self) -> Vec<f64> {
        let mut z = 0.0;
        let mut out = Vec::with_capacity(self.surfaces.len());
        for s in &self.surfaces {
            out.push(z);
            z += s.thickness;
        }
        out
    }

    pub fn sensor_z(&self) -> f64 {
        *self.vertex_positions().last().unwrap()
    }

    /// Stops down the aperture to F-number `n`, scaling the physical stop
    /// diameter from the native aperture.
    pub fn with_f_number(&self, n: f64) -> Result<LensPrescription> {
        if n < self.native_f_number {
            return Err(Error::InvalidArgument(format!(
                "F/{} is wider than the native F/{:.3}",
                n, self.native_f_number
            )));
        }
        let mut lens = self.clone();
        lens.surfaces[lens.stop_index].semi_diameter *= self.native_f_number / n;
        Ok(lens)
    }

    /// Refocuses by replacing the lens-to-sensor gap with the paraxial image
    /// distance for an on-axis object at `focus_distance_m` (meters, measured
    /// from the sensor plane, the photographic convention). `f64::INFINITY`
    /// focuses at infinity.
    pub fn refocused(&self, focus_distance_m: f64) -> Result<LensPrescription> {
        let mut lens = self.clone();
        let last_optical = lens.surfaces.len() - 2;
        if focus_distance_m.is_finite() {
            // The object distance from the front vertex depends on the gap
            // being solved (the sensor moves), so iterate the paraxial solve;
            // the fixed point converges geometrically at rate ~(gap/object)^2.
            let track_front: f64 = lens.surfaces[..last_optical]
                .iter()
                .map(|s| s.thickness)
                .sum();
            let mut gap = lens.surfaces[last_optical].thickness;
            for _ in 0..32 {
                let object = focus_distance_m * 1000.0 - track_front - gap;
                let next = super::paraxial::image_distance(self, object)?;
                let done = (next - gap).abs() < 1e-12;
                gap = next;
                if done {
                    break;
                }
            }
            lens.surfaces[last_optical].thickness = gap;
        } else {
            lens.surfaces[last_optical].thickness =
                super::paraxial::image_distance(self, f64::INFINITY)?;
        }
        Ok(lens)
    }

    fn validate(&self) -> Result<()> {
        let stops = self
            .surfaces
            .iter()
            .filter(|s| s.kind == SurfaceKind::Stop)
            .count();
        if stops != 1 {
            return Err(Error::InvalidPrescription(format!(
                "expected exactly one stop surface, found {stops}"
            )));
        }
        let sensors = self
            .surfaces
            .iter()
            .filter(|s| s.kind == SurfaceKind::Sensor)
            .count();
        if sensors != 1 || self.surfaces.last().unwrap().kind != SurfaceKind::Sensor {
            return Err(Error::InvalidPrescription(
                "prescription must end with exactly one sensor surface".into(),
            ));
        }
        for (i, s) in self.surfaces.iter().enumerate() {
            if s.thickness < 0.0 {
                return Err(Error::InvalidPrescription(format!(
                    "surface {}: negative thickness",
                    i + 1
                )));
            }
            if s.semi_diameter <= 0.0 {
                return Err(Error::InvalidPrescription(format!(
                    "surface {}: semi-diameter must be positive",
                    i + 1
                )));
            }
            if let Some(m) = s.material {
                if m.n <= 1.0 || m.v <= 0.0 {
                    return Err(Error::InvalidPrescription(format!(
                        "surface {}: material must have n > 1 and V > 0",
                        i + 1
                    )));
                }
            }
            if s.kind != SurfaceKind::EvenAsphere && s.asphere_coeffs.iter().any(|&a| a != 0.0) {
                return Err(Error::InvalidPrescription(format!(
                    "surface {}: asphere coefficients on a non-asphere surface",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Serializes back to the lens file format. `parse(serialize(parse(x)))`
    /// is a fixed point.
    pub fn to_file_string(&self) -> String {
        let mut out = String::from(
            "# index kind radius_mm thickness_mm n/V diameter_mm conic a4 a6 a8 a10 a12\n",
        );
        for (i, s) in self.surfaces.iter().enumerate() {
            let kind = match s.kind {
                SurfaceKind::Sphere => "S",
                SurfaceKind::EvenAsphere => "A",
                SurfaceKind::Stop => "STOP",
                SurfaceKind::Sensor => "SENSOR",
            };
            let mat = match s.material {
                Some(m) => format!("{:?}/{:?}", m.n, m.v),
                None => "-".into(),
            };
            out.push_str(&format!(
                "{} {} {:?} {:?} {} {:?} {:?} {:?} {:?} {:?} {:?} {:?}\n",
                i + 1,
                kind,
                s.radius,
                s.thickness,
                mat,
                s.semi_diameter * 2.0,
                s.conic,
                s.asphere_coeffs[0],
                s.asphere_coeffs[1],
                s.asphere_coeffs[2],
                s.asphere_coeffs[3],
                s.asphere_coeffs[4],
            ));
        }
        out
    }
}

fn parse_num(field: &str, line: usize, what: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::LensParse {
        line,
        msg: format!("non-numeric {what} field {field:?}"),
    })
}

/// Parses the whitespace-separated lens table format.
///
/// Columns: `index kind radius_mm thickness_mm n/V diameter_mm conic a4 a6 a8
/// a10 a12`, kind one of S, A, STOP, SENSOR; `n/V` is `-` for air; `#` starts
/// a comment. The native F-number is derived from the as-listed stop size.
pub fn parse_lens_prescription(text: &str) -> Result<LensPrescription> {
    let mut surfaces = Vec::new();
    let mut stop_index = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 12 {
            return Err(Error::LensParse {
                line,
                msg: format!("expected 12 columns, found {}", fields.len()),
            });
        }
        let kind = match fields[1] {
            "S" => SurfaceKind::Sphere,
            "A" => SurfaceKind::EvenAsphere,
            "STOP" => SurfaceKind::Stop,
            "SENSOR" => SurfaceKind::Sensor,
            other => {
                return Err(Error::LensParse {
                    line,
                    msg: format!("unknown surface kind {other:?}"),
                })
            }
        };
        let radius = parse_num(fields[2], line, "radius")?;
        let thickness = parse_num(fields[3], line, "thickness")?;
        if thickness < 0.0 {
            return Err(Error::LensParse {
                line,
                msg: "negative thickness".into(),
            });
        }
        let material = if fields[4] == "-" {
            None
        } else {
            let (n, v) = fields[4].split_once('/').ok_or_else(|| Error::LensParse {
                line,
                msg: format!("material must be n/V, got {:?}", fields[4]),
            })?;
            Some(Material {
                n: parse_num(n, line, "index")?,
                v: parse_num(v, line, "Abbe")?,
            })
        };
        let diameter = parse_num(fields[5], line, "diameter")?;
        let conic = parse_num(fields[6], line, "conic")?;
        let mut asphere_coeffs = [0.0; 5];
        for (k, f) in fields[7..12].iter().enumerate() {
            asphere_coeffs[k] = parse_num(f, line, "asphere coefficient")?;
        }
        if kind == SurfaceKind::Stop {
            if stop_index.is_some() {
                return Err(Error::LensParse {
                    line,
                    msg: "duplicate stop surface".into(),
                });
            }
            stop_index = Some(surfaces.len());
        }
        surfaces.push(SurfaceSpec {
            kind,
            radius,
            thickness,
            material,
            semi_diameter: diameter / 2.0,
            conic,
            asphere_coeffs,
        });
    }
    if surfaces.is_empty() {
        return Err(Error::LensParse {
            line: 0,
            msg: "no surfaces".into(),
        });
    }
    let stop_index = stop_index.ok_or(Error::LensParse {
        line: 0,
        msg: "missing stop surface".into(),
    })?;
    if surfaces.last().unwrap().kind != SurfaceKind::Sensor {
        return Err(Error::LensParse {
            line: 0,
            msg: "missing sensor surface (must be last)".into(),
        });
    }
    let mut lens = LensPrescription {
        surfaces,
        stop_index,
        native_f_number: f64::NAN,
    };
    lens.validate()?;
    // The listed stop size is the wide-open aperture.
    let efl = super::paraxial::paraxial_efl(&lens)?;
    let pupil = super::paraxial::locate_entrance_pupil(&lens)?;
    lens.native_f_number = efl / pupil.diameter;
    Ok(lens)
}
