//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use smcal::bench::{self, ablation_run, score_padded, zero_filled, ABLATION_MODES};
use smcal::io::read_pairs;
use smcal::metrics::nrmse;
use smcal::physics::{simulate_row_numeric, simulate_sm_1d_closed_form, simulate_system_matrix};
use smcal::recon::{kaczmarz, reconstruction_pipeline, KaczmarzConfig, RowOrder};
use smcal::sampling::{crop, prepare_pairs, split_pairs, PairSet, VALIDATION_FRACTION};
use smcal::sr::{baseline_interpolate, batch_loss, loss_and_gradients, recover, train, Interpolation, ModelConfig, PositionEncoding, SRModel, Sample, TrainConfig};
use smcal::symmetry::{expected_parity_for_sequence, fundamental_domain, measurement_count, mirror_complete, symmetry_residual};
use smcal::{Channel, Grid3, Provenance, SMRow, ScanSequence, SignalVector, SystemMatrix};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

/// Desk-scale network used for the ablation and the SR comparison.
fn sr_config(ratio: usize, lr_dims: [usize; 3]) -> ModelConfig {
    ModelConfig::new(PositionEncoding::Symmetric, Interpolation::Linear, ratio, lr_dims).with_size(2, 3, 8)
}

fn sr_training() -> TrainConfig {
    TrainConfig { learning_rate: 1e-3, batch_size: 8, max_epochs: 40, patience: 40, seed: 0, augment: true }
}

const ABLATION_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn benchmark_rows() -> usize {
    200
}

fn train_pairs(sm: &SystemMatrix, ratio: usize) -> Result<PairSet, smcal::Error> {
    split_pairs(&prepare_pairs(sm, ratio)?, VALIDATION_FRACTION, 0)
}

fn symmetry_suite() -> Outcome {
    let pm = bench::train_particle();
    let seq1 = ScanSequence::one_dimensional(bench::GRADIENT, bench::AMPLITUDE, 16, bench::BASE_PERIOD)?;
    let grid1 = Grid3::new([33, 1, 1], [bench::FOV, 1e-3, 1e-3])?;
    let mut worst1: f64 = 0.0;
    for k in 2..=10 {
        let row = simulate_row_numeric(&seq1, &pm, &grid1, Channel::X, k)?;
        let desc = expected_parity_for_sequence(&seq1, Channel::X, k)?;
        for r in symmetry_residual(&row, &grid1, &desc)? {
            worst1 = worst1.max(r.residual);
        }
    }
    let seq2 = bench::sequence_2d();
    let grid2 = bench::grid_2d(17);
    let ks: Vec<u32> = (1..=100).collect();
    let sm = simulate_system_matrix(&seq2, &pm, &grid2, &[Channel::X, Channel::Y], &ks)?;
    let mut worst2: f64 = 0.0;
    let mut checked = 0;
    for row in sm.rows() {
        let desc = expected_parity_for_sequence(&seq2, row.channel(), row.freq_index())?;
        if desc.has_rules() {
            checked += 1;
            for r in symmetry_residual(row, &grid2, &desc)? {
                worst2 = worst2.max(r.residual);
            }
        }
    }
    let ok = worst1 < 1e-6 && worst2 < 1e-4 && checked == sm.n_rows();
    Ok((ok, format!("1D max residual {worst1:.2e} (< 1e-6), 2D max residual {worst2:.2e} (< 1e-4) over {checked} rows")))
}

fn oracle_equivalence() -> Outcome {
    let pm = bench::train_particle();
    let seq = ScanSequence::one_dimensional(bench::GRADIENT, bench::AMPLITUDE, 16, bench::BASE_PERIOD)?;
    let grid = Grid3::new([33, 1, 1], [bench::FOV, 1e-3, 1e-3])?;
    let mut worst: f64 = 0.0;
    for k in 2..=10 {
        let num = simulate_row_numeric(&seq, &pm, &grid, Channel::X, k)?;
        let cf = simulate_sm_1d_closed_form(&seq, &pm, &grid, k)?.to_complex();
        let n = num.to_complex();
        let num_dot: Complex64 = cf.iter().zip(&n).map(|(c, v)| c.conj() * v).sum();
        let den: f64 = cf.iter().map(|c| c.norm_sqr()).sum();
        let aligned: Vec<Complex64> = cf.iter().map(|c| c * (num_dot / den)).collect();
        let est = SMRow::from_complex(Channel::X, k, &aligned)?;
        worst = worst.max(nrmse(&est, &num)?);
    }
    Ok((worst < 0.01, format!("max NRMSE after scale alignment {:.3}% (< 1%)", 100.0 * worst)))
}

fn mirror_exactness() -> Outcome {
    let seq = bench::sequence_2d();
    let grid = bench::grid_2d(17);
    let ks: Vec<u32> = (1..=100).collect();
    let sm = simulate_system_matrix(&seq, &bench::train_particle(), &grid, &[Channel::X, Channel::Y], &ks)?;
    let mut worst: f64 = 0.0;
    let mut measured = 0;
    for row in sm.rows() {
        let desc = expected_parity_for_sequence(&seq, row.channel(), row.freq_index())?;
        let known = fundamental_domain(&grid, &desc);
        measured = measurement_count(&grid, &desc);
        let mask = |v: &[f64]| v.iter().zip(&known).map(|(&x, &k)| if k { x } else { 0.0 }).collect::<Vec<_>>();
        let masked = row.with_values(mask(row.re()), mask(row.im()))?;
        let rec = mirror_complete(&masked, &grid, &known, &desc)?.row;
        let err: f64 = rec.to_complex().iter().zip(row.to_complex()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(err / row.norm_sqr().sqrt());
    }
    Ok((worst < 1e-9, format!("max relative error {worst:.2e} (< 1e-9) measuring {measured} of {} voxels per row", grid.len())))
}

fn gradient_check() -> Outcome {
    let cfg = ModelConfig::new(PositionEncoding::Symmetric, Interpolation::Linear, 2, [5, 5, 1]).with_size(2, 2, 8);
    let model = SRModel::new(cfg, 17)?;
    let n = model.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut random_row = |len: usize| {
        let re = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let im = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        SMRow::new(Channel::X, 1, re, im)
    };
    let batch = [Sample::from_rows(&random_row(25)?, &random_row(100)?, &cfg), Sample::from_rows(&random_row(25)?, &random_row(100)?, &cfg)];
    let (_, grad) = loss_and_gradients(&model, &batch);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut a = model.clone();
        a.params_mut()[i] += h;
        let mut b = model.clone();
        b.params_mut()[i] -= h;
        let fd = (batch_loss(&a, &batch) - batch_loss(&b, &batch)) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6));
    }
    Ok((worst < 1e-4 && n <= 5000, format!("{n} parameters, max relative error {worst:.2e} (< 1e-4)")))
}

struct Benchmark {
    train_sm: SystemMatrix,
    test_sm: SystemMatrix,
    ppg_2x: Option<SRModel>,
}

fn ablation(bm: &mut Benchmark) -> Outcome {
    let pairs = train_pairs(&bm.train_sm, 2)?;
    let base = sr_config(2, pairs.lr_grid.dims());
    let mut means = BTreeMap::new();
    for mode in &ABLATION_MODES {
        let mut sum = 0.0;
        for &seed in &ABLATION_SEEDS {
            let (model, _, report) = ablation_run(&pairs, mode, &base, &sr_training(), seed)?;
            sum += report.mean_nrmse;
            if mode.name == "PPG" && seed == 0 {
                bm.ppg_2x = Some(model);
            }
        }
        means.insert(mode.name, sum / ABLATION_SEEDS.len() as f64);
    }
    let (m1, m2, m3, ppg) = (means["M1"], means["M2"], means["M3"], means["PPG"]);
    let ok = m1 > m3 && m3 > ppg && m2 >= m3;
    Ok((ok, format!("mean validation NRMSE M1 {m1:.4}, M2 {m2:.4}, M3 {m3:.4}, PPG {ppg:.4}")))
}

fn sr_beats_interpolation(bm: &mut Benchmark) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for ratio in [2, 4] {
        let model = match (&bm.ppg_2x, ratio) {
            (Some(m), 2) => m.clone(),
            _ => {
                let pairs = train_pairs(&bm.train_sm, ratio)?;
                let init = SRModel::new(sr_config(ratio, pairs.lr_grid.dims()), 0)?;
                let (m, _) = train(&init, &pairs, &sr_training())?;
                if ratio == 2 {
                    bm.ppg_2x = Some(m.clone());
                }
                m
            }
        };
        let test = prepare_pairs(&bm.test_sm, ratio)?;
        let (lr, hr) = (test.lr_matrix()?, test.hr_matrix()?);
        let score = |name: &str, est: &SystemMatrix| score_padded(name, ratio, 0, est, &hr, test.padding).map(|r| r.mean_nrmse);
        let sr = score("ppg", &recover(&model, &lr, ratio)?)?;
        let nn = score("nearest", &baseline_interpolate(&lr, ratio, Interpolation::Nearest)?)?;
        let lin = score("linear", &baseline_interpolate(&lr, ratio, Interpolation::Linear)?)?;
        ok &= sr <= 0.95 * nn.min(lin);
        parts.push(format!("{ratio}x: PPG {sr:.3} vs nearest {nn:.3}, linear {lin:.3}"));
    }
    Ok((ok, format!("{} (margin >= 5%)", parts.join("; "))))
}

fn random_system(seed: u64) -> Result<(SystemMatrix, SignalVector), smcal::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 16;
    let x: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let mut rows = Vec::new();
    let mut u = Vec::new();
    for i in 0..n {
        let r: Vec<Complex64> = (0..n)
            .map(|j| Complex64::new(if i == j { 4.0 } else { 0.0 } + rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)))
            .collect();
        u.push((Channel::X, i as u32, r.iter().zip(&x).map(|(a, b)| a * b).sum()));
        rows.push(SMRow::from_complex(Channel::X, i as u32, &r)?);
    }
    let grid = Grid3::with_spacing([n, 1, 1], 1.0)?;
    Ok((SystemMatrix::new(grid, rows, Provenance::Loaded)?, SignalVector::new(u)))
}

/// Voxel with the largest value within `radius` voxels (Chebyshev distance)
/// of `centre`.
fn local_argmax(values: &[f64], grid: &Grid3, centre: [usize; 3], radius: usize) -> [usize; 3] {
    let dims = grid.dims();
    let range = |a: usize| centre[a].saturating_sub(radius)..=(centre[a] + radius).min(dims[a] - 1);
    let mut best = (centre, f64::NEG_INFINITY);
    for z in range(2) {
        for y in range(1) {
            for x in range(0) {
                let v = values[grid.linear_index(x, y, z)];
                if v > best.1 {
                    best = ([x, y, z], v);
                }
            }
        }
    }
    best.0
}

fn kaczmarz_consistency() -> Outcome {
    let grid = bench::grid_3d(17);
    let sm = bench::benchmark_3d(&bench::sharp_particle(), 17, 2000, 600)?;
    let (phantom, dots) = bench::three_dots(&grid)?;
    let rec = reconstruction_pipeline(&sm, &sm, &phantom, &KaczmarzConfig::default(), "truth", 1)?;
    let found: Vec<[usize; 3]> = dots.iter().map(|&d| local_argmax(rec.phantom.values(), &grid, d, 2)).collect();
    let located = found == dots;
    let cfg = KaczmarzConfig { lambda: 0.0, sweeps: 200, enforce_real_nonneg: false, row_order: RowOrder::Sequential };
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let (s, u) = random_system(seed)?;
        worst = worst.max(*kaczmarz(&s, &u, &cfg)?.residuals.last().unwrap_or(&f64::INFINITY));
    }
    let ok = located && worst < 1e-6 && sm.n_rows() >= 150;
    Ok((ok, format!("{} rows, argmax near each dot at {found:?} (want {dots:?}), random-system residual {worst:.2e} (< 1e-6)", sm.n_rows())))
}

fn end_to_end(bm: &mut Benchmark) -> Outcome {
    let model = match &bm.ppg_2x {
        Some(m) => m.clone(),
        None => {
            let pairs = train_pairs(&bm.train_sm, 2)?;
            train(&SRModel::new(sr_config(2, pairs.lr_grid.dims()), 0)?, &pairs, &sr_training())?.0
        }
    };
    let test = prepare_pairs(&bm.test_sm, 2)?;
    let lr = test.lr_matrix()?;
    let (pre, post) = test.padding;
    let grid = *bm.test_sm.grid();
    let phantom = bench::shape_phantom_2d(&grid)?;
    let cfg = KaczmarzConfig::default();
    let mut results = Vec::new();
    for (name, hr) in [
        ("PPG", recover(&model, &lr, 2)?),
        ("nearest", baseline_interpolate(&lr, 2, Interpolation::Nearest)?),
        ("zero-order", zero_filled(&lr, 2)?),
    ] {
        let r = reconstruction_pipeline(&crop(&hr, pre, post)?, &bm.test_sm, &phantom, &cfg, name, 2)?;
        results.push((name, r.report.mean_nrmse, r.report.psnr_db));
    }
    let ok = results[0].1 < results[1].1 && results[1].1 < results[2].1 && results[0].2 > results[1].2 && results[1].2 > results[2].2;
    let detail = results.iter().map(|(n, e, p)| format!("{n} NRMSE {e:.3} PSNR {p:.2} dB")).collect::<Vec<_>>().join(", ");
    Ok((ok, detail))
}

fn smcal(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_smcal")).args(args).current_dir(dir).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("smcal {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn protocol_fidelity() -> Outcome {
    let dir = tempfile::tempdir()?;
    std::fs::write(dir.path().join("run.cfg"), "dimensionality = 3\ndims = 37,37,37\nk_max = 40\nrows = 20\nseed = 3\n")?;
    smcal(&["simulate", "--config", "run.cfg", "--out", "truth.smb"], dir.path())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (ratio, lr_edge) in [(2, 20), (4, 10)] {
        let out = format!("pairs{ratio}");
        smcal(&["pairs", "--config", "run.cfg", "--input", "truth.smb", "--out", &out, "--ratio", &ratio.to_string()], dir.path())?;
        let (set, m) = read_pairs(&dir.path().join(&out))?;
        ok &= m.source_dims == [37; 3] && m.hr_dims == [40; 3] && m.lr_dims == [lr_edge; 3];
        ok &= set.hr_grid.dims() == [40; 3] && set.lr_grid.dims() == [lr_edge; 3];
        ok &= (m.padding_pre, m.padding_post) == (1, 2);
        ok &= m.n_pairs == 20 && m.n_validation == 2 && m.n_train == 18;
        parts.push(format!("{:?} -> {:?} -> {:?}, {}/{} split", m.source_dims, m.hr_dims, m.lr_dims, m.n_train, m.n_validation));
    }
    Ok((ok, parts.join("; ")))
}

fn hash_dir(dir: &Path) -> Result<BTreeMap<String, String>, std::io::Error> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).expect("inside dir").to_string_lossy().into_owned();
                out.insert(rel, hex::encode(Sha256::digest(std::fs::read(&p)?)));
            }
        }
    }
    Ok(out)
}

const CLI_CONFIG: &str = "\
k_max = 120
rows = 40
features = 4
blocks = 1
dense_stages = 2
epochs = 2
seed = 11
ratios = 2
phantom = shape
row_order = shuffled
";

fn cli_pipeline(dir: &Path) -> Result<(), String> {
    std::fs::write(dir.join("run.cfg"), CLI_CONFIG).map_err(|e| e.to_string())?;
    let steps: &[&[&str]] = &[
        &["simulate", "--out", "truth.smb"],
        &["pairs", "--input", "truth.smb", "--out", "pairs"],
        &["symcheck", "--input", "truth.smb", "--out", "sym.csv"],
        &["mirror", "--input", "truth.smb", "--out", "mirror.smb"],
        &["train", "--pairs", "pairs", "--out", "model.ppgm", "--history", "history.csv"],
        &["recover", "--input", "pairs/lr.smb", "--method", "ppg", "--model", "model.ppgm", "--out", "ppg.smb"],
        &["recover", "--input", "pairs/lr.smb", "--method", "nearest", "--out", "nn.smb"],
        &["reconstruct", "--sm", "ppg.smb", "--truth", "truth.smb", "--out", "rec.phb", "--residuals", "sweeps.csv", "--metrics", "rec.csv"],
        &["eval", "--estimate", "ppg.smb", "--truth", "truth.smb", "--out", "eval.csv"],
        &["ablate", "--input", "truth.smb", "--out", "ablate.csv"],
        &["render", "--input", "rec.phb", "--out", "rec.pgm"],
        &["render", "--input", "truth.smb", "--row", "2", "--out", "row.pgm"],
    ];
    for step in steps {
        let mut args: Vec<&str> = step.to_vec();
        args.extend(["--config", "run.cfg"]);
        smcal(&args, dir)?;
    }
    Ok(())
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir()?, tempfile::tempdir()?);
    cli_pipeline(a.path())?;
    cli_pipeline(b.path())?;
    let (ha, hb) = (hash_dir(a.path())?, hash_dir(b.path())?);
    let differing: Vec<&String> = ha.keys().filter(|k| ha.get(*k) != hb.get(*k)).collect();
    Ok((ha == hb, format!("{} files from 10 subcommands, {} differ", ha.len(), differing.len())))
}

type Criterion = (u32, &'static str, fn(&mut Benchmark) -> Outcome);

const CRITERIA: [Criterion; 10] = [
    (1, "symmetry theorems", |_| symmetry_suite()),
    (2, "closed-form oracle", |_| oracle_equivalence()),
    (3, "mirror completion", |_| mirror_exactness()),
    (4, "gradient check", |_| gradient_check()),
    (5, "ablation ordering", ablation),
    (6, "SR beats interpolation", sr_beats_interpolation),
    (7, "Kaczmarz self-consistency", |_| kaczmarz_consistency()),
    (8, "end-to-end ordering", end_to_end),
    (9, "protocol fidelity", |_| protocol_fidelity()),
    (10, "CLI determinism", |_| determinism()),
];

/// `SMCAL_ACCEPTANCE_ONLY=2,5` restricts the run to the listed criteria.
fn selected() -> Vec<u32> {
    match std::env::var("SMCAL_ACCEPTANCE_ONLY") {
        Ok(v) => v.split(',').filter_map(|s| s.trim().parse().ok()).collect(),
        Err(_) => CRITERIA.iter().map(|c| c.0).collect(),
    }
}

fn main() {
    let t0 = Instant::now();
    let mut bm = Benchmark {
        train_sm: bench::benchmark_2d(&bench::train_particle(), bench::RAW_EDGE, 400, benchmark_rows()).expect("training benchmark"),
        test_sm: bench::benchmark_2d(&bench::test_particle(), bench::RAW_EDGE, 400, benchmark_rows()).expect("test benchmark"),
        ppg_2x: None,
    };
    let only = selected();
    let mut failures = 0;
    let mut ran = 0;
    for (id, name, check) in CRITERIA.iter().filter(|c| only.contains(&c.0)) {
        let start = Instant::now();
        let (ok, detail) = check(&mut bm).unwrap_or_else(|e| (false, format!("error: {e}")));
        ran += 1;
        if !ok {
            failures += 1;
        }
        println!("[{}] {id:>2} {name}: {detail} ({:.1} s)", if ok { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    }
    println!("{} of {ran} criteria passed in {:.0} s", ran - failures, t0.elapsed().as_secs_f64());
    if failures > 0 {
        std::process::exit(1);
    }
}
