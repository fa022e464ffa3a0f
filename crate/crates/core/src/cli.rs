//! Command-line front end.
//!
//! Every subcommand reads an optional `--config` file; `--set key=value`
//! and the dedicated flags override it. Outputs are written atomically and
//! depend only on the inputs, the configuration and the seed.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{self, ablation_run, zero_filled, ABLATION_MODES};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{benchmark_report, report_csv, MetricReport};
use crate::model::{Grid3, Phantom, SystemMatrix};
use crate::physics::simulate_system_matrix;
use crate::recon::reconstruction_pipeline;
use crate::sampling::{crop, prepare_pairs, split_pairs, VALIDATION_FRACTION};
use crate::sr::{baseline_interpolate, recover, train, Interpolation, SRModel};
use crate::symmetry::{expected_parity, fundamental_domain, measurement_count, mirror_complete, symmetry_residual};

#[derive(Debug, Parser)]
#[command(name = "smcal", version, about = "MPI system-matrix simulation, super-resolution and reconstruction")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration with `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Random seed (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Ppg,
    Nearest,
    Linear,
    Cubic,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Part {
    Abs,
    Re,
    Im,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a ground-truth system matrix.
    Simulate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Pad, decimate and split a system matrix into LR/HR training pairs.
    Pairs {
        #[arg(long)]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ratio: Option<usize>,
    },
    /// Per-row reflection residuals as CSV.
    Symcheck {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild full rows from one symmetric sector.
    Mirror {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a super-resolution model on a pair directory.
    Train {
        #[arg(long)]
        pairs: PathBuf,
        /// Model checkpoint.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss CSV.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Recover an HR matrix from an LR matrix.
    Recover {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Checkpoint for `--method ppg`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        ratio: Option<usize>,
    },
    /// Simulate a signal with the true matrix and reconstruct it with another.
    Reconstruct {
        /// Matrix used for the solve; padded grids are cropped to the truth.
        #[arg(long)]
        sm: PathBuf,
        /// Matrix used to simulate the signal.
        #[arg(long)]
        truth: PathBuf,
        /// Phantom file; defaults to the configured synthetic phantom.
        #[arg(long)]
        phantom: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-sweep residual CSV.
        #[arg(long)]
        residuals: Option<PathBuf>,
        /// Metric CSV.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Compare two matrices or two phantoms and write a metric CSV.
    Eval {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "estimate")]
        label: String,
    },
    /// Train M1, M2, M3 and PPG for every configured ratio and seed.
    Ablate {
        /// Unpadded ground-truth matrix.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a greyscale slice of a matrix row or phantom.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Row of a matrix file.
        #[arg(long, default_value_t = 0)]
        row: usize,
        /// Axis normal to the slice: 0, 1 or 2.
        #[arg(long, default_value_t = 2)]
        axis: usize,
        /// Slice index; defaults to the centre.
        #[arg(long)]
        index: Option<usize>,
        #[arg(long, value_enum, default_value_t = Part::Abs)]
        part: Part,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::new(),
    };
    for o in &common.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(s) = common.seed {
        cfg.set("seed", &s.to_string())?;
    }
    Ok(cfg)
}

/// Parses `argv`, runs the subcommand and returns the process exit code:
/// 0 on success, 2 for usage and configuration errors, 1 otherwise.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Cli::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let cfg = match load_config(&args.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match execute(&args.command, cfg) {
        Ok(msg) => {
            if !msg.is_empty() {
                println!("{msg}");
            }
            0
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn is_phb(path: &Path) -> Result<bool> {
    let bytes = std::fs::read(path)?;
    Ok(bytes.starts_with(io::PHB_MAGIC))
}

/// Crops a padded matrix down to `grid` when the shapes differ by the
/// standard padding.
fn match_grid(sm: SystemMatrix, grid: &Grid3) -> Result<SystemMatrix> {
    if sm.grid().dims() == grid.dims() {
        return Ok(sm);
    }
    let (pre, post) = bench::PADDING;
    let padded = grid.dims().map(|n| if n > 1 { n + pre + post } else { n });
    if sm.grid().dims() != padded {
        return Err(crate::error::domain(format!("grid {:?} cannot be matched to {:?}", sm.grid().dims(), grid.dims())));
    }
    crop(&sm, pre, post)
}

fn synthetic_phantom(cfg: &RunConfig, grid: &Grid3) -> Result<Phantom> {
    match cfg.raw("phantom").unwrap_or("dots") {
        "dots" => Ok(bench::three_dots(grid)?.0),
        "shape" => bench::shape_phantom_2d(grid),
        other => Err(Error::Config(format!("phantom: unknown phantom {other:?}"))),
    }
}

fn method_from_config(cfg: &RunConfig) -> Result<Method> {
    match cfg.raw("method").unwrap_or("ppg") {
        "ppg" => Ok(Method::Ppg),
        "nearest" => Ok(Method::Nearest),
        "linear" | "trilinear" => Ok(Method::Linear),
        "cubic" | "tricubic" => Ok(Method::Cubic),
        "zero" => Ok(Method::Zero),
        other => Err(Error::Config(format!("method: unknown method {other:?}"))),
    }
}

fn execute(cmd: &Command, mut cfg: RunConfig) -> Result<String> {
    match cmd {
        Command::Simulate { out } => {
            let (seq, grid, pm) = (cfg.sequence()?, cfg.grid()?, cfg.particle()?);
            let (lo, hi) = cfg.k_range()?;
            let ks: Vec<u32> = (lo..=hi).collect();
            let mut sm = simulate_system_matrix(&seq, &pm, &grid, &cfg.channels()?, &ks)?;
            let rows: usize = cfg.get_or("rows", 0)?;
            if rows > 0 {
                sm = bench::strongest_rows(&sm, rows, cfg.get_or("noise", bench::RELATIVE_NOISE)?)?;
            }
            io::write_smb(out, &sm)?;
            Ok(format!("{} rows on grid {:?}", sm.n_rows(), grid.dims()))
        }
        Command::Pairs { input, out, ratio } => {
            if let Some(r) = ratio {
                cfg.set("ratio", &r.to_string())?;
            }
            let sm = io::read_smb(input)?;
            let set = prepare_pairs(&sm, cfg.ratio()?)?;
            let fraction = cfg.get_or("validation_fraction", VALIDATION_FRACTION)?;
            let set = split_pairs(&set, fraction, cfg.seed()?)?;
            std::fs::create_dir_all(out)?;
            let m = io::write_pairs(out, &set, sm.grid().dims(), cfg.seed()?)?;
            Ok(format!("{} pairs ({} train, {} validation): HR {:?}, LR {:?}", m.n_pairs, m.n_train, m.n_validation, m.hr_dims, m.lr_dims))
        }
        Command::Symcheck { input, out } => {
            let sm = io::read_smb(input)?;
            let grid = sm.grid();
            let mut csv = String::from("channel,freq_index,axis,rule,residual\n");
            let mut worst: f64 = 0.0;
            for row in sm.rows() {
                let desc = expected_parity(row.channel(), row.freq_index(), grid.dimensionality())?;
                if !desc.has_rules() {
                    continue;
                }
                for r in symmetry_residual(row, grid, &desc)? {
                    worst = worst.max(r.residual);
                    csv.push_str(&format!("{},{},{},{},{:.10e}\n", row.channel(), row.freq_index(), r.axis, r.rule.name(), r.residual));
                }
            }
            io::write_atomic(out, csv.as_bytes())?;
            Ok(format!("max residual {worst:.3e}"))
        }
        Command::Mirror { input, out } => {
            let sm = io::read_smb(input)?;
            let grid = *sm.grid();
            let mut measured = 0;
            let completed = sm.map_rows(grid, sm.provenance(), |row| {
                let desc = expected_parity(row.channel(), row.freq_index(), grid.dimensionality())?;
                if !desc.has_rules() {
                    measured += grid.len();
                    return Ok(row.clone());
                }
                measured += measurement_count(&grid, &desc);
                let known = fundamental_domain(&grid, &desc);
                let masked = row.with_values(
                    row.re().iter().zip(&known).map(|(&v, &k)| if k { v } else { 0.0 }).collect(),
                    row.im().iter().zip(&known).map(|(&v, &k)| if k { v } else { 0.0 }).collect(),
                )?;
                Ok(mirror_complete(&masked, &grid, &known, &desc)?.row)
            })?;
            io::write_smb(out, &completed)?;
            let total = grid.len() * sm.n_rows();
            Ok(format!("measured {measured} of {total} entries"))
        }
        Command::Train { pairs, out, history } => {
            let (set, _) = io::read_pairs(pairs)?;
            let mcfg = cfg.model_config(set.ratio, set.lr_grid.dims())?;
            let tcfg = cfg.train_config()?;
            let model = SRModel::new(mcfg, tcfg.seed)?;
            let (best, hist) = train(&model, &set, &tcfg)?;
            io::write_checkpoint(out, &best)?;
            if let Some(h) = history {
                io::write_atomic(h, io::history_csv(&hist).as_bytes())?;
            }
            let best_val = hist.best_val_nrmse().unwrap_or(f64::NAN);
            Ok(format!("{} parameters, best validation NRMSE {best_val:.4}", best.n_params()))
        }
        Command::Recover { input, out, method, model, ratio } => {
            let lr = io::read_smb(input)?;
            let method = match method {
                Some(m) => *m,
                None => method_from_config(&cfg)?,
            };
            let ratio = match ratio {
                Some(r) => *r,
                None => cfg.ratio()?,
            };
            let hr = match method {
                Method::Ppg => {
                    let path = model.as_ref().ok_or_else(|| Error::Config("--model is required for ppg".into()))?;
                    recover(&io::read_checkpoint(path)?, &lr, ratio)?
                }
                Method::Nearest => baseline_interpolate(&lr, ratio, Interpolation::Nearest)?,
                Method::Linear => baseline_interpolate(&lr, ratio, Interpolation::Linear)?,
                Method::Cubic => baseline_interpolate(&lr, ratio, Interpolation::Cubic)?,
                Method::Zero => zero_filled(&lr, ratio)?,
            };
            io::write_smb(out, &hr)?;
            Ok(format!("{} rows on grid {:?}", hr.n_rows(), hr.grid().dims()))
        }
        Command::Reconstruct { sm, truth, phantom, out, residuals, metrics } => {
            let truth = io::read_smb(truth)?;
            let grid = *truth.grid();
            let recovered = match_grid(io::read_smb(sm)?, &grid)?;
            let ph = match phantom {
                Some(p) => io::read_phb(p)?,
                None => synthetic_phantom(&cfg, &grid)?,
            };
            let rec = reconstruction_pipeline(&recovered, &truth, &ph, &cfg.kaczmarz_config()?, "reconstruction", 1)?;
            io::write_phb(out, &rec.phantom)?;
            if let Some(p) = residuals {
                io::write_atomic(p, io::sweep_csv(&rec.residuals).as_bytes())?;
            }
            if let Some(p) = metrics {
                io::write_atomic(p, report_csv(std::slice::from_ref(&rec.report)).as_bytes())?;
            }
            Ok(format!("NRMSE {:.4}, PSNR {:.2} dB, SSIM {:.4}", rec.report.mean_nrmse, rec.report.psnr_db, rec.report.ssim))
        }
        Command::Eval { estimate, truth, out, label } => {
            let report = if is_phb(truth)? {
                MetricReport::for_phantom(label.as_str(), 1, cfg.seed()?, &io::read_phb(estimate)?, &io::read_phb(truth)?)?
            } else {
                let t = io::read_smb(truth)?;
                let e = match_grid(io::read_smb(estimate)?, t.grid())?;
                MetricReport::for_matrix(label.as_str(), cfg.get_or("ratio", 1)?, cfg.seed()?, &e, &t)?
            };
            io::write_atomic(out, report_csv(std::slice::from_ref(&report)).as_bytes())?;
            Ok(format!("mean NRMSE {:.6}", report.mean_nrmse))
        }
        Command::Ablate { input, out } => {
            let sm = io::read_smb(input)?;
            let ratios = cfg.list::<usize>("ratios")?.unwrap_or(vec![2, 4]);
            let seeds = cfg.list::<u64>("seeds")?.unwrap_or(vec![cfg.seed()?]);
            let tcfg = cfg.train_config()?;
            let fraction = cfg.get_or("validation_fraction", VALIDATION_FRACTION)?;
            let mut reports = Vec::new();
            for &ratio in &ratios {
                let set = split_pairs(&prepare_pairs(&sm, ratio)?, fraction, cfg.seed()?)?;
                let base = cfg.model_config(ratio, set.lr_grid.dims())?;
                for mode in &ABLATION_MODES {
                    for &seed in &seeds {
                        reports.push(ablation_run(&set, mode, &base, &tcfg, seed)?.2);
                    }
                }
            }
            let table = benchmark_report(&reports)?;
            io::write_atomic(out, report_csv(&table).as_bytes())?;
            Ok(format!("{} runs", table.len()))
        }
        Command::Render { input, out, row, axis, index, part } => {
            let (values, dims) = if is_phb(input)? {
                let ph = io::read_phb(input)?;
                (ph.values().to_vec(), ph.grid().dims())
            } else {
                let sm = io::read_smb(input)?;
                let r = sm.rows().get(*row).ok_or_else(|| Error::Invalid(format!("row {row} of {}", sm.n_rows())))?;
                let v = match part {
                    Part::Abs => r.to_complex().iter().map(|c| c.norm()).collect(),
                    Part::Re => r.re().to_vec(),
                    Part::Im => r.im().to_vec(),
                };
                (v, sm.grid().dims())
            };
            if *axis > 2 {
                return Err(Error::Invalid(format!("axis {axis} is not 0, 1 or 2")));
            }
            let idx = index.unwrap_or(dims[*axis] / 2);
            let (slice, w, h) = io::extract_slice(&values, dims, *axis, idx)?;
            io::write_atomic(out, &io::encode_pgm(&slice, w, h)?)?;
            Ok(format!("{w}x{h} slice"))
        }
    }
}
