//! Command-line front end for the dual-pixel camera simulator.

use clap::{Args, Parser, Subcommand};
use dpsim::config::RigConfig;
use dpsim::cost_volume::{dp_cost_volume, write_cost_volume, FeatureMap};
use dpsim::mlp::{dataset_from_grid, load_mlp, save_mlp, Mlp, TrainConfig};
use dpsim::psf::{
    generate_grid, grid_search_dp_params, ncc, normalize, nsd, read_dppsf, trace_dp_psf,
    write_dppsf, CameraRig, DpParamRanges, DpPsf, Normalization, ObjectPoint, PsfGrid, PsfRecord,
    ReferencePsf, SamplingSpec, SCORE_CSV_HEADER,
};
use dpsim::render::{
    build_psf_map, psnr, read_pfm, read_ppm, render_dp, ssim, write_pfm, CocKernels, Image,
    KernelSource, MlpKernels, RgbdFrame, TracedKernels,
};
use dpsim::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "dpsim", version, about = "Dual-pixel camera simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Camera rig JSON config.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Ray-trace the DP PSF of a single object point.
    TracePsf {
        #[command(flatten)]
        config: ConfigArg,
        /// Normalized horizontal field coordinate in [-1, 1].
        #[arg(long, allow_hyphen_values = true)]
        u: f64,
        /// Normalized vertical field coordinate in [-1, 1].
        #[arg(long, allow_hyphen_values = true)]
        v: f64,
        /// Object depth in meters.
        #[arg(long)]
        depth: f64,
        /// Optional single-record PSF container to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ray-trace a grid of DP PSFs into a .dppsf container.
    GenGrid {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
        /// Lattice sampling as NUxNVxND (e.g. 9x9x12).
        #[arg(long, conflicts_with = "random")]
        lattice: Option<String>,
        /// Random sampling with this many points.
        #[arg(long)]
        random: Option<usize>,
        /// RNG seed for random sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the MLP PSF predictor on a traced grid.
    TrainPredictor {
        #[command(flatten)]
        config: ConfigArg,
        /// Training grid (.dppsf).
        #[arg(long)]
        grid: PathBuf,
        /// Output weights file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20_000)]
        iters: usize,
        #[arg(long, default_value_t = 128)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render a DP image pair from an RGB image and a depth map.
    Render {
        #[command(flatten)]
        config: ConfigArg,
        /// RGB input (.pfm or .ppm).
        #[arg(long)]
        rgb: PathBuf,
        /// Depth map in meters (.pfm, single channel).
        #[arg(long)]
        depth: PathBuf,
        /// Trained predictor weights; omit to select another kernel source.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Use the analytic circle-of-confusion kernels.
        #[arg(long, conflicts_with = "weights")]
        coc: bool,
        /// Ray-trace every kernel (slow).
        #[arg(long, conflicts_with_all = ["weights", "coc"])]
        traced: bool,
        #[arg(long)]
        out_left: PathBuf,
        #[arg(long)]
        out_right: PathBuf,
    },
    /// Compare two PSF containers record by record (NCC and NSD).
    ComparePsf {
        a: PathBuf,
        b: PathBuf,
    },
    /// Compare two images (PSNR and SSIM).
    CompareImg {
        a: PathBuf,
        b: PathBuf,
    },
    /// Grid-search DP pixel ratios against reference PSFs.
    CalibrateDp {
        #[command(flatten)]
        config: ConfigArg,
        /// Reference PSFs (.dppsf) with their object points.
        #[arg(long)]
        refs: PathBuf,
        /// CSV of every scored candidate.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Range as LO:HI:STEP, e.g. 0.5:1.2:0.02.
        #[arg(long)]
        h_range: Option<String>,
        #[arg(long)]
        f_range: Option<String>,
        #[arg(long)]
        w_range: Option<String>,
        /// Comma-separated candidate list, e.g. 0.4,0.45,0.5.
        #[arg(long)]
        r_list: Option<String>,
    },
    /// Build a DP cost volume from two raw feature blobs.
    CostVolume {
        /// Left features: raw blob of four u32 dims (B,C,H,W) then f32 data.
        left: PathBuf,
        right: PathBuf,
        #[arg(long, default_value_t = 20)]
        d_max: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::FullyVignetted
        | Error::Io(_)
        | Error::Format(_)
        | Error::ShapeMismatch(_)
        | Error::LensParse { .. } => 2,
        Error::Paraxial(_) | Error::DegeneratePrediction => 3,
        _ => 1,
    }
}

fn main() {
    init_thread_pool();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

/// DPSIM_THREADS caps the rayon pool; results are identical at any setting.
fn init_thread_pool() {
    if let Ok(v) = std::env::var("DPSIM_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn load_rig(cfg: &ConfigArg) -> Result<CameraRig> {
    RigConfig::rig_from_file(&cfg.config)
}

fn write_output<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut out = BufWriter::new(File::create(path)?);
    write(&mut out)?;
    out.flush()?;
    Ok(())
}

fn psf_summary_json(u: f64, v: f64, depth: f64, rig: &CameraRig, psf: &DpPsf) -> String {
    let total = psf.left_total() + psf.right_total() + psf.missed_count as f64;
    serde_json::json!({
        "u": u,
        "v": v,
        "depth_m": depth,
        "ks": psf.ks,
        "anchor": psf.anchor.map(|a| [a.i, a.j]),
        "rays": rig.n_rays,
        "missed_fraction": psf.missed_count as f64 / total,
        "out_of_window": psf.out_of_window,
        "left_energy": psf.left_total(),
        "right_energy": psf.right_total(),
        "centroid_disparity_px": psf.centroid_disparity_x(),
    })
    .to_string()
}

fn parse_lattice(text: &str) -> Result<SamplingSpec> {
    let parts: Vec<&str> = text.split('x').collect();
    let bad = || Error::InvalidArgument(format!("bad lattice spec {text:?}, want NUxNVxND"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut dims = [0usize; 3];
    for (d, p) in dims.iter_mut().zip(&parts) {
        *d = p.parse().map_err(|_| bad())?;
    }
    Ok(SamplingSpec::Lattice {
        nu: dims[0],
        nv: dims[1],
        nd: dims[2],
    })
}

fn parse_range(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidArgument(format!("bad range {text:?}, want LO:HI:STEP"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let vals: Vec<f64> = parts
        .iter()
        .map(|p| p.parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (lo, hi, step) = (vals[0], vals[1], vals[2]);
    if step <= 0.0 || hi < lo {
        return Err(bad());
    }
    let n = ((hi - lo) / step).round() as usize;
    Ok((0..=n).map(|k| lo + k as f64 * step).collect())
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad list entry {p:?}")))
        })
        .collect()
}

fn read_grid_file(path: &Path) -> Result<PsfGrid> {
    read_dppsf(&mut BufReader::new(File::open(path)?))
}

fn read_image(path: &Path) -> Result<Image> {
    let mut reader = BufReader::new(File::open(path)?);
    match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => read_ppm(&mut reader),
        _ => read_pfm(&mut reader),
    }
}

fn read_feature_blob(path: &Path) -> Result<FeatureMap> {
    use std::io::Read as _;
    let mut reader = BufReader::new(File::open(path)?);
    let mut b4 = [0u8; 4];
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        reader
            .read_exact(&mut b4)
            .map_err(|_| Error::Format("truncated feature blob".into()))?;
        *d = u32::from_le_bytes(b4) as usize;
    }
    let [b, c, h, w] = dims;
    let mut data = vec![0.0f32; b * c * h * w];
    for v in data.iter_mut() {
        reader.read_exact(&mut b4)?;
        *v = f32::from_le_bytes(b4);
    }
    FeatureMap::from_data(b, c, h, w, data)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TracePsf {
            config,
            u,
            v,
            depth,
            out,
        } => {
            let rig = load_rig(&config)?;
            let raw = trace_dp_psf(&rig, &ObjectPoint::Normalized { u, v, depth })?;
            let psf = normalize(&raw, Normalization::SumNormalized)?;
            if let Some(path) = &out {
                let grid = PsfGrid {
                    ks: rig.ks,
                    seed: 0,
                    records: vec![PsfRecord {
                        u,
                        v,
                        depth,
                        psf: Some(psf.clone()),
                    }],
                };
                write_output(path, |w| write_dppsf(w, &grid))?;
            }
            println!("{}", psf_summary_json(u, v, depth, &rig, &raw));
        }
        Command::GenGrid {
            config,
            out,
            lattice,
            random,
            seed,
        } => {
            let rig = load_rig(&config)?;
            let spec = match (lattice, random) {
                (Some(l), None) => parse_lattice(&l)?,
                (None, Some(count)) => SamplingSpec::Random { count, seed },
                (None, None) => SamplingSpec::Lattice { nu: 9, nv: 9, nd: 12 },
                _ => unreachable!("clap conflicts_with"),
            };
            let grid = generate_grid(&rig, spec)?;
            let traced = grid.records.iter().filter(|r| r.psf.is_some()).count();
            write_output(&out, |w| write_dppsf(w, &grid))?;
            println!(
                "{}",
                serde_json::json!({
                    "points": grid.records.len(),
                    "traced": traced,
                    "skipped": grid.records.len() - traced,
                    "ks": grid.ks,
                })
            );
        }
        Command::TrainPredictor {
            config,
            grid,
            out,
            iters,
            batch,
            seed,
        } => {
            let rig = load_rig(&config)?;
            let grid = read_grid_file(&grid)?;
            if grid.ks != rig.ks {
                return Err(Error::ShapeMismatch(format!(
                    "grid ks {} != rig ks {}",
                    grid.ks, rig.ks
                )));
            }
            let data = dataset_from_grid(&rig, &grid)?;
            let mut mlp = Mlp::<f32>::init(rig.ks, seed)?;
            let cfg = TrainConfig {
                iters,
                batch,
                seed,
                ..TrainConfig::default()
            };
            let losses = dpsim::mlp::train(&mut mlp, &data, &cfg)?;
            write_output(&out, |w| save_mlp(w, &mlp))?;
            println!(
                "{}",
                serde_json::json!({
                    "samples": data.n,
                    "iters": iters,
                    "first_loss": losses.first(),
                    "last_loss": losses.last(),
                })
            );
        }
        Command::Render {
            config,
            rgb,
            depth,
            weights,
            coc,
            traced,
            out_left,
            out_right,
        } => {
            let rig = load_rig(&config)?;
            let rgb = read_image(&rgb)?;
            let depth = read_image(&depth)?;
            let frame = RgbdFrame::new(&rig, rgb, depth)?;
            let mlp = match &weights {
                Some(path) => Some(load_mlp::<f32, _>(&mut BufReader::new(File::open(path)?))?),
                None => None,
            };
            let source: Box<dyn KernelSource> = match (&mlp, coc, traced) {
                (Some(m), _, _) => Box::new(MlpKernels { rig: &rig, mlp: m }),
                (None, true, _) => Box::new(CocKernels { rig: &rig }),
                (None, false, true) => Box::new(TracedKernels { rig: &rig }),
                (None, false, false) => {
                    return Err(Error::InvalidArgument(
                        "pick a kernel source: --weights, --coc or --traced".into(),
                    ))
                }
            };
            let map = build_psf_map(&frame.depth, source.as_ref())?;
            let pair = render_dp(&frame, &map)?;
            write_output(&out_left, |w| write_pfm(w, &pair.left))?;
            write_output(&out_right, |w| write_pfm(w, &pair.right))?;
            println!(
                "{}",
                serde_json::json!({
                    "rows": pair.left.rows,
                    "cols": pair.left.cols,
                    "clamped_depths": frame.clamped,
                    "ks": map.ks,
                })
            );
        }
        Command::ComparePsf { a, b } => {
            let ga = read_grid_file(&a)?;
            let gb = read_grid_file(&b)?;
            if ga.records.len() != gb.records.len() {
                return Err(Error::ShapeMismatch(format!(
                    "record counts differ: {} vs {}",
                    ga.records.len(),
                    gb.records.len()
                )));
            }
            let mut sum_ncc = 0.0;
            let mut sum_nsd = 0.0;
            let mut n = 0usize;
            for (ra, rb) in ga.records.iter().zip(&gb.records) {
                let (Some(pa), Some(pb)) = (&ra.psf, &rb.psf) else {
                    continue;
                };
                sum_ncc += ncc(pa, pb)?;
                sum_nsd += nsd(pa, pb)?;
                n += 1;
            }
            if n == 0 {
                return Err(Error::InvalidArgument("no comparable records".into()));
            }
            println!(
                "{}",
                serde_json::json!({
                    "records": n,
                    "mean_ncc": sum_ncc / n as f64,
                    "mean_nsd": sum_nsd / n as f64,
                })
            );
        }
        Command::CompareImg { a, b } => {
            let ia = read_image(&a)?;
            let ib = read_image(&b)?;
            println!(
                "{}",
                serde_json::json!({
                    "psnr_db": psnr(&ia, &ib)?,
                    "ssim": ssim(&ia, &ib)?,
                })
            );
        }
        Command::CalibrateDp {
            config,
            refs,
            scores,
            h_range,
            f_range,
            w_range,
            r_list,
        } => {
            let rig = load_rig(&config)?;
            let grid = read_grid_file(&refs)?;
            let references: Vec<ReferencePsf> = grid
                .records
                .iter()
                .filter_map(|r| {
                    r.psf.as_ref().map(|p| ReferencePsf {
                        point: ObjectPoint::Normalized {
                            u: r.u,
                            v: r.v,
                            depth: r.depth,
                        },
                        psf: p.clone(),
                    })
                })
                .collect();
            let mut ranges = DpParamRanges::default();
            if let Some(t) = &h_range {
                ranges.h = parse_range(t)?;
            }
            if let Some(t) = &f_range {
                ranges.f = parse_range(t)?;
            }
            if let Some(t) = &w_range {
                ranges.w = parse_range(t)?;
            }
            if let Some(t) = &r_list {
                ranges.r = parse_list(t)?;
            }
            let (best, rows) = grid_search_dp_params(&rig, &ranges, &references)?;
            if let Some(path) = &scores {
                write_output(path, |w| {
                    writeln!(w, "{SCORE_CSV_HEADER}")?;
                    for row in &rows {
                        writeln!(w, "{}", row.csv_line())?;
                    }
                    Ok(())
                })?;
            }
            println!(
                "{}",
                serde_json::json!({
                    "h": best.ratios.h_over_ps,
                    "f": best.ratios.f_over_ps,
                    "w": best.ratios.w_over_ps,
                    "r": best.ratios.r_over_ps,
                    "mean_ncc": best.mean_ncc,
                    "mean_nsd": best.mean_nsd,
                    "candidates": rows.len(),
                })
            );
        }
        Command::CostVolume {
            left,
            right,
            d_max,
            out,
        } => {
            let l = read_feature_blob(&left)?;
            let r = read_feature_blob(&right)?;
            let cv = dp_cost_volume(&l, &r, d_max)?;
            write_output(&out, |w| write_cost_volume(w, &cv))?;
            println!(
                "{}",
                serde_json::json!({
                    "b": cv.b,
                    "channels": cv.c2,
                    "d_max": cv.d_max,
                    "rows": cv.h,
                    "cols": cv.w,
                })
            );
        }
    }
    Ok(())
}
