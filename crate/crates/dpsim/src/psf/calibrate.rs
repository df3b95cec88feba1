//! Grid search over dual-pixel geometry ratios against reference PSFs.

use super::metrics::{ncc, nsd};
use super::{normalize, trace_dp_psf, CameraRig, DpPsf, Normalization, ObjectPoint};
use crate::error::{Error, Result};
use crate::sensor::{DpPixelGeometry, DpPixelRatios};
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct DpParamRanges {
    pub h: Vec<f64>,
    pub f: Vec<f64>,
    pub w: Vec<f64>,
    pub r: Vec<f64>,
}

fn steps(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|k| lo + k as f64 * step).collect()
}

impl Default for DpParamRanges {
    fn default() -> Self {
        DpParamRanges {
            h: steps(0.50, 1.20, 0.02),
            f: steps(1.00, 2.00, 0.02),
            w: steps(0.10, 0.50, 0.02),
            r: vec![0.40, 0.45, 0.50],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScoreRow {
    pub ratios: DpPixelRatios,
    pub mean_ncc: f64,
    pub mean_nsd: f64,
    /// True when f <= h made the candidate geometrically invalid.
    pub invalid: bool,
}

impl ScoreRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.ratios.h_over_ps,
            self.ratios.f_over_ps,
            self.ratios.w_over_ps,
            self.ratios.r_over_ps,
            self.mean_ncc,
            self.mean_nsd
        )
    }
}

pub const SCORE_CSV_HEADER: &str = "h,f,w,r,ncc,nsd";

/// Reference measurement: a PSF observed at a known object point.
#[derive(Debug, Clone)]
pub struct ReferencePsf {
    pub point: ObjectPoint,
    pub psf: DpPsf,
}

fn score_candidate(
    rig: &CameraRig,
    ratios: DpPixelRatios,
    refs: &[ReferencePsf],
) -> Result<(f64, f64)> {
    let mut rig = rig.clone();
    rig.dp = DpPixelGeometry::from_ratios(rig.sensor.ps(), &ratios)?;
    let mut sum_ncc = 0.0;
    let mut sum_nsd = 0.0;
    for r in refs {
        let psf = normalize(&trace_dp_psf(&rig, &r.point)?, Normalization::SumNormalized)?;
        sum_ncc += ncc(&psf, &r.psf)?;
        sum_nsd += nsd(&psf, &r.psf)?;
    }
    let n = refs.len() as f64;
    Ok((sum_ncc / n, sum_nsd / n))
}

/// Exhaustive search over the Cartesian product of the ranges. Returns the
/// winner and every scored row (in iteration order h, f, w, r). Candidates
/// with f <= h are flagged invalid and excluded from the winner selection.
pub fn grid_search_dp_params(
    rig: &CameraRig,
    ranges: &DpParamRanges,
    refs: &[ReferencePsf],
) -> Result<(ScoreRow, Vec<ScoreRow>)> {
    if refs.is_empty() {
        return Err(Error::InvalidArgument("no reference PSFs".into()));
    }
    let mut candidates = Vec::new();
    for &h in &ranges.h {
        for &f in &ranges.f {
            for &w in &ranges.w {
                for &r in &ranges.r {
                    candidates.push(DpPixelRatios {
                        h_over_ps: h,
                        f_over_ps: f,
                        w_over_ps: w,
                        r_over_ps: r,
                    });
                }
            }
        }
    }
    let rows: Vec<ScoreRow> = candidates
        .par_iter()
        .map(|&ratios| {
            if ratios.f_over_ps <= ratios.h_over_ps {
                return Ok(ScoreRow {
                    ratios,
                    mean_ncc: f64::NEG_INFINITY,
                    mean_nsd: f64::INFINITY,
                    invalid: true,
                });
            }
            let (mean_ncc, mean_nsd) = score_candidate(rig, ratios, refs)?;
            Ok(ScoreRow {
                ratios,
                mean_ncc,
                mean_nsd,
                invalid: false,
            })
        })
        .collect::<Result<_>>()?;

    let mut best: Option<ScoreRow> = None;
    for row in rows.iter().filter(|r| !r.invalid) {
        let better = match &best {
            None => true,
            Some(b) => {
                row.mean_ncc > b.mean_ncc
                    || (row.mean_ncc == b.mean_ncc && row.mean_nsd < b.mean_nsd)
            }
        };
        if better {
            best = Some(*row);
        }
    }
    let best = best.ok_or_else(|| Error::InvalidArgument("all candidates invalid".into()))?;
    Ok((best, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psf::test_rig::reference_rig;

    fn references(rig: &CameraRig, points: &[(f64, f64, f64)]) -> Vec<ReferencePsf> {
        points
            .iter()
            .map(|&(u, v, depth)| {
                let point = ObjectPoint::Normalized { u, v, depth };
                let psf =
                    normalize(&trace_dp_psf(rig, &point).unwrap(), Normalization::SumNormalized)
                        .unwrap();
                ReferencePsf { point, psf }
            })
            .collect()
    }

    #[test]
    fn recovers_true_parameters_from_small_lattice() {
        let rig = reference_rig();
        let refs = references(&rig, &[(0.0, 0.0, 0.6), (0.3, -0.2, 1.8)]);
        let ranges = DpParamRanges {
            h: vec![0.70, 0.78],
            f: vec![1.44, 1.58],
            w: vec![0.22, 0.30],
            r: vec![0.50],
        };
        let (best, rows) = grid_search_dp_params(&rig, &ranges, &refs).unwrap();
        assert_eq!(rows.len(), 8);
        assert_eq!(
            (
                best.ratios.h_over_ps,
                best.ratios.f_over_ps,
                best.ratios.w_over_ps,
                best.ratios.r_over_ps
            ),
            (0.78, 1.44, 0.30, 0.50)
        );
        assert!((best.mean_ncc - 1.0).abs() < 1e-12);
        assert!(best.mean_nsd.abs() < 1e-9);
    }

    #[test]
    fn flags_f_not_greater_than_h() {
        let rig = reference_rig();
        let refs = references(&rig, &[(0.0, 0.0, 0.7)]);
        let ranges = DpParamRanges {
            h: vec![1.50],
            f: vec![1.44],
            w: vec![0.30],
            r: vec![0.50],
        };
        let err = grid_search_dp_params(&rig, &ranges, &refs);
        assert!(err.is_err());
    }

    #[test]
    fn default_ranges_contain_optimum() {
        let d = DpParamRanges::default();
        assert!(d.h.iter().any(|&x| (x - 0.78).abs() < 1e-12));
        assert!(d.f.iter().any(|&x| (x - 1.44).abs() < 1e-12));
        assert!(d.w.iter().any(|&x| (x - 0.30).abs() < 1e-12));
        assert!(d.r.contains(&0.50));
    }

    #[test]
    fn csv_row_format() {
        let row = ScoreRow {
            ratios: DpPixelRatios {
                r_over_ps: 0.5,
                f_over_ps: 1.44,
                h_over_ps: 0.78,
                w_over_ps: 0.3,
            },
            mean_ncc: 0.875,
            mean_nsd: 0.25,
            invalid: false,
        };
        assert_eq!(row.csv_line(), "0.78,1.44,0.3,0.5,0.875,0.25");
    }
}
