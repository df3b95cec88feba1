//! JSON camera configuration and rig construction.

use crate::error::{Error, Result};
use crate::optics::parse_lens_prescription;
use crate::psf::CameraRig;
use crate::sensor::{DpPixelGeometry, DpPixelRatios, SensorGeometry};
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub width_mm: f64,
    pub height_mm: f64,
    pub cols: usize,
    pub rows: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigConfig {
    /// Lens prescription path, relative to the config file's directory.
    pub lens_file: String,
    pub sensor: SensorConfig,
    #[serde(default)]
    pub dp_pixel: DpPixelRatios,
    pub focus_m: f64,
    pub f_number: f64,
    pub depth_min_m: f64,
    pub depth_max_m: f64,
    #[serde(default = "default_n_rays")]
    pub n_rays: usize,
    #[serde(default = "default_ks")]
    pub ks: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_rays() -> usize {
    4096
}

fn default_ks() -> usize {
    21
}

impl RigConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Builds the rig, resolving `lens_file` against `base_dir`.
    pub fn build_rig(&self, base_dir: &Path) -> Result<CameraRig> {
        let lens_path = base_dir.join(&self.lens_file);
        let lens_text = std::fs::read_to_string(&lens_path).map_err(|e| {
            Error::Config(format!("cannot read lens file {}: {e}", lens_path.display()))
        })?;
        let lens = parse_lens_prescription(&lens_text)?;
        let sensor = SensorGeometry::new(
            self.sensor.width_mm,
            self.sensor.height_mm,
            self.sensor.cols,
            self.sensor.rows,
        )?;
        let dp = DpPixelGeometry::from_ratios(sensor.ps(), &self.dp_pixel)?;
        CameraRig::new(
            &lens,
            sensor,
            dp,
            self.focus_m,
            self.f_number,
            (self.depth_min_m, self.depth_max_m),
            self.n_rays,
            self.ks,
        )
    }

    /// Loads the config and builds the rig relative to the config location.
    pub fn rig_from_file(path: &Path) -> Result<CameraRig> {
        let cfg = Self::load(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.build_rig(base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    const RIG_JSON: &str = r#"{
        "lens_file": "rf50.lens",
        "sensor": { "width_mm": 36.0, "height_mm": 24.0, "cols": 768, "rows": 512 },
        "focus_m": 1.0,
        "f_number": 4.0,
        "depth_min_m": 0.5,
        "depth_max_m": 20.0
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = RigConfig::from_json(RIG_JSON).unwrap();
        assert_eq!(cfg.n_rays, 4096);
        assert_eq!(cfg.ks, 21);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.dp_pixel.f_over_ps, 1.44);
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = RIG_JSON.replacen("\"focus_m\"", "\"focus_mm\"", 1);
        assert!(RigConfig::from_json(&bad).is_err());
    }

    #[test]
    fn builds_rig_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("rf50.lens"),
            include_str!("../data/rf50.lens"),
        )
        .unwrap();
        let cfg_path = dir.path().join("rig.json");
        let mut f = std::fs::File::create(&cfg_path).unwrap();
        f.write_all(RIG_JSON.as_bytes()).unwrap();
        drop(f);
        let rig = RigConfig::rig_from_file(&cfg_path).unwrap();
        assert!((rig.efl() - 50.0).abs() < 1.0);
        assert_eq!(rig.sensor.cols, 768);
    }

    #[test]
    fn missing_lens_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RigConfig::from_json(RIG_JSON).unwrap();
        assert!(matches!(
            cfg.build_rig(dir.path()),
            Err(Error::Config(_))
        ));
    }
}
