//! Simulated benchmark presets shared by the CLI and the test suites.

use crate::error::{domain, Result};
use crate::metrics::MetricReport;
use crate::model::{Channel, Grid3, ParticleModel, Phantom, Provenance, ScanSequence, SystemMatrix};
use crate::physics::simulate_system_matrix;
use crate::sampling::{crop, PairSet, Split, PAD_POST, PAD_PRE};
use crate::sr::{recover, train, History, Interpolation, ModelConfig, PositionEncoding, SRModel, TrainConfig};

pub const GRADIENT: f64 = 2.0;
pub const AMPLITUDE: f64 = 0.012;
pub const BASE_PERIOD: f64 = 4e-7;
/// Slightly inside the drive-covered extent `2A/G`.
pub const FOV: f64 = 0.0111;
pub const TIME_SAMPLES: usize = 1024;
/// The 3D drive has three times more cycles per period, so it needs a finer
/// time grid to reach the same harmonic order.
pub const TIME_SAMPLES_3D: usize = 4096;
pub const DIVIDERS_2D: [u32; 2] = [16, 17];
pub const DIVIDERS_3D: [u32; 3] = [8, 9, 7];
/// Raw grid edge before padding; `37 + 1 + 2 = 40`.
pub const RAW_EDGE: usize = 37;
/// Noise level relative to the RMS of the strongest row.
pub const RELATIVE_NOISE: f64 = 1e-3;

/// Particle used to generate training data.
pub fn train_particle() -> ParticleModel {
    ParticleModel::new(1.0, 600.0).expect("valid particle")
}

/// A second particle with a softer magnetisation curve, used for testing.
pub fn test_particle() -> ParticleModel {
    ParticleModel::new(0.8, 450.0).expect("valid particle")
}

/// Steeper magnetisation curve for the 3D reconstruction benchmark.
pub fn sharp_particle() -> ParticleModel {
    ParticleModel::new(1.0, 2000.0).expect("valid particle")
}

pub fn sequence_2d() -> ScanSequence {
    ScanSequence::lissajous_2d([GRADIENT; 2], [AMPLITUDE; 2], DIVIDERS_2D, BASE_PERIOD)
        .and_then(|s| s.with_time_samples(TIME_SAMPLES))
        .expect("valid 2D preset")
}

pub fn sequence_3d() -> ScanSequence {
    ScanSequence::lissajous_3d([GRADIENT; 3], [AMPLITUDE; 3], DIVIDERS_3D, BASE_PERIOD)
        .and_then(|s| s.with_time_samples(TIME_SAMPLES_3D))
        .and_then(|s| s.with_k_max((TIME_SAMPLES_3D / 2) as u32))
        .expect("valid 3D preset")
}

pub fn grid_2d(edge: usize) -> Grid3 {
    Grid3::new([edge, edge, 1], [FOV, FOV, FOV / edge as f64]).expect("valid grid")
}

pub fn grid_3d(edge: usize) -> Grid3 {
    Grid3::new([edge; 3], [FOV; 3]).expect("valid grid")
}

/// Keeps the `count` rows with the highest SNR under noise of
/// `relative_noise` times the RMS of the strongest row, in original order.
/// Rows at or below the SNR threshold are never kept.
pub fn strongest_rows(sm: &SystemMatrix, count: usize, relative_noise: f64) -> Result<SystemMatrix> {
    let n = sm.grid().len() as f64;
    let peak = sm.rows().iter().map(|r| r.norm_sqr()).fold(0.0, f64::max);
    let sigma = relative_noise * (peak / n).sqrt();
    let snr: Vec<f64> = sm.rows().iter().map(|r| crate::sampling::estimate_snr(r, sigma)).collect();
    let mut idx: Vec<usize> = (0..sm.n_rows()).filter(|&i| snr[i] > crate::sampling::SNR_THRESHOLD).collect();
    if idx.len() < count {
        return Err(domain(format!("only {} rows pass the SNR filter, {count} requested", idx.len())));
    }
    idx.sort_by(|&a, &b| snr[b].total_cmp(&snr[a]).then(a.cmp(&b)));
    idx.truncate(count);
    idx.sort_unstable();
    let rows = idx.into_iter().map(|i| sm.rows()[i].clone()).collect();
    SystemMatrix::new(*sm.grid(), rows, sm.provenance())
}

/// X and Y receive rows `k = 1..=k_max` on the raw 2D grid, reduced to the
/// `count` strongest.
pub fn benchmark_2d(pm: &ParticleModel, edge: usize, k_max: u32, count: usize) -> Result<SystemMatrix> {
    let ks: Vec<u32> = (1..=k_max).collect();
    let sm = simulate_system_matrix(&sequence_2d(), pm, &grid_2d(edge), &[Channel::X, Channel::Y], &ks)?;
    strongest_rows(&sm, count, RELATIVE_NOISE)
}

/// X, Y and Z receive rows on a cubic grid, reduced to the `count` strongest.
pub fn benchmark_3d(pm: &ParticleModel, edge: usize, k_max: u32, count: usize) -> Result<SystemMatrix> {
    let ks: Vec<u32> = (1..=k_max).collect();
    let sm = simulate_system_matrix(&sequence_3d(), pm, &grid_3d(edge), &Channel::ALL, &ks)?;
    strongest_rows(&sm, count, RELATIVE_NOISE)
}

/// Unit, 0.8 and 0.6 concentrations at three well separated voxels.
pub fn three_dots(grid: &Grid3) -> Result<(Phantom, [[usize; 3]; 3])> {
    let d = grid.dims();
    let at = |f: [f64; 3]| [0, 1, 2].map(|a| ((f[a] * d[a] as f64) as usize).min(d[a] - 1));
    let dots = [at([0.3, 0.3, 0.5]), at([0.7, 0.4, 0.3]), at([0.45, 0.72, 0.7])];
    let mut c = vec![0.0; grid.len()];
    for (p, v) in dots.iter().zip([1.0, 0.8, 0.6]) {
        c[grid.linear_index(p[0], p[1], p[2])] = v;
    }
    Ok((Phantom::new(*grid, c)?, dots))
}

/// Ring plus an offset bar with soft edges, on the `z = 0` plane.
pub fn shape_phantom_2d(grid: &Grid3) -> Result<Phantom> {
    let [nx, ny, _] = grid.dims();
    let mut c = vec![0.0; grid.len()];
    for y in 0..ny {
        for x in 0..nx {
            let u = 2.0 * (x as f64 + 0.5) / nx as f64 - 1.0;
            let v = 2.0 * (y as f64 + 0.5) / ny as f64 - 1.0;
            let r = (u * u + v * v).sqrt();
            let ring = (-((r - 0.5) / 0.09).powi(2)).exp();
            let bar = if (u - 0.05).abs() < 0.12 && (v + 0.05).abs() < 0.3 { 0.7 } else { 0.0 };
            c[grid.linear_index(x, y, 0)] = ring.max(bar);
        }
    }
    Phantom::new(*grid, c)
}

/// LR samples on their HR lattice positions, zeros elsewhere.
pub fn zero_filled(lr: &SystemMatrix, ratio: usize) -> Result<SystemMatrix> {
    let grid = crate::sr::upsampled_grid(lr.grid(), ratio)?;
    let [hx, hy, _] = grid.dims();
    let step = lr.grid().dims().map(|n| if n > 1 { ratio } else { 1 });
    lr.map_rows(grid, Provenance::Recovered, |row| {
        let mut re = vec![0.0; grid.len()];
        let mut im = vec![0.0; grid.len()];
        for i in 0..row.len() {
            let [x, y, z] = lr.grid().unravel(i);
            let j = ((z * step[2]) * hy + y * step[1]) * hx + x * step[0];
            re[j] = row.re()[i];
            im[j] = row.im()[i];
        }
        row.with_values(re, im)
    })
}

/// Padding applied before decimation.
pub const PADDING: (usize, usize) = (PAD_PRE, PAD_POST);

/// One row of the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationMode {
    pub name: &'static str,
    pub encoding: PositionEncoding,
    pub upsample: Interpolation,
}

pub const ABLATION_MODES: [AblationMode; 4] = [
    AblationMode { name: "M1", encoding: PositionEncoding::None, upsample: Interpolation::Nearest },
    AblationMode { name: "M2", encoding: PositionEncoding::Normalized, upsample: Interpolation::Nearest },
    AblationMode { name: "M3", encoding: PositionEncoding::Symmetric, upsample: Interpolation::Nearest },
    AblationMode { name: "PPG", encoding: PositionEncoding::Symmetric, upsample: Interpolation::Linear },
];

/// Scores recovered HR rows against the truth after removing the padding.
pub fn score_padded(method: &str, ratio: usize, seed: u64, estimate: &SystemMatrix, truth: &SystemMatrix, padding: (usize, usize)) -> Result<MetricReport> {
    let (e, t) = (crop(estimate, padding.0, padding.1)?, crop(truth, padding.0, padding.1)?);
    MetricReport::for_matrix(method, ratio, seed, &e, &t)
}

/// Rows of one split as LR and HR matrices.
pub fn split_matrices(pairs: &PairSet, split: Split) -> Result<(SystemMatrix, SystemMatrix)> {
    let (lr, hr): (Vec<_>, Vec<_>) = pairs.iter_split(split).map(|p| (p.lr.clone(), p.hr.clone())).unzip();
    Ok((SystemMatrix::new(pairs.lr_grid, lr, Provenance::Loaded)?, SystemMatrix::new(pairs.hr_grid, hr, Provenance::Loaded)?))
}

/// Trains `mode` from seed `seed` and scores the selected model on the
/// validation rows.
pub fn ablation_run(pairs: &PairSet, mode: &AblationMode, base: &ModelConfig, cfg: &TrainConfig, seed: u64) -> Result<(SRModel, History, MetricReport)> {
    let mcfg = ModelConfig { encoding: mode.encoding, upsample: mode.upsample, ..*base };
    let model = SRModel::new(mcfg, seed)?;
    let (best, history) = train(&model, pairs, &TrainConfig { seed, ..*cfg })?;
    let (lr, hr) = split_matrices(pairs, Split::Validation)?;
    let report = score_padded(mode.name, pairs.ratio, seed, &recover(&best, &lr, pairs.ratio)?, &hr, pairs.padding)?;
    Ok((best, history, report))
}
