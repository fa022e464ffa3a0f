//! Regularised Kaczmarz reconstruction of `u = S c`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};
use crate::metrics::MetricReport;
use crate::model::{Phantom, SignalVector, SystemMatrix};
use crate::physics::forward_signal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowOrder {
    Sequential,
    Shuffled { seed: u64 },
}

impl fmt::Display for RowOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowOrder::Sequential => f.write_str("sequential"),
            RowOrder::Shuffled { .. } => f.write_str("shuffled"),
        }
    }
}

impl FromStr for RowOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(RowOrder::Sequential),
            "shuffled" | "shuffle" => Ok(RowOrder::Shuffled { seed: 0 }),
            other => Err(domain(format!("unknown row order '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KaczmarzConfig {
    /// Regularisation weight, scaled internally by the mean row energy.
    pub lambda: f64,
    pub sweeps: usize,
    /// Project onto real, non-negative concentrations after every sweep.
    pub enforce_real_nonneg: bool,
    pub row_order: RowOrder,
}

impl Default for KaczmarzConfig {
    fn default() -> Self {
        KaczmarzConfig { lambda: 0.75, sweeps: 3, enforce_real_nonneg: true, row_order: RowOrder::Sequential }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KaczmarzResult {
    /// Final complex iterate.
    pub solution: Vec<Complex64>,
    /// `‖S c − u‖ / ‖u‖` after each sweep.
    pub residuals: Vec<f64>,
    /// Rows skipped because their norm is zero.
    pub skipped_rows: usize,
}

fn relative_residual(sm: &SystemMatrix, u: &[Complex64], c: &[Complex64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (row, &ui) in sm.rows().iter().zip(u) {
        let (re, im) = (row.re(), row.im());
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..c.len() {
            acc += Complex64::new(re[j], im[j]) * c[j];
        }
        num += (acc - ui).norm_sqr();
        den += ui.norm_sqr();
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// Kaczmarz sweeps with the auxiliary residual variable `v`:
/// `α = (u_i − ⟨s_i, c⟩ − √λ v_i) / (‖s_i‖² + λ)`, `c += α s_i*`, `v_i += α √λ`,
/// where `λ = lambda · ‖S‖_F² / N_f`.
pub fn kaczmarz(sm: &SystemMatrix, u: &SignalVector, cfg: &KaczmarzConfig) -> Result<KaczmarzResult> {
    if !(cfg.lambda.is_finite() && cfg.lambda >= 0.0) {
        return Err(domain("lambda must be >= 0"));
    }
    if sm.is_empty() {
        return Err(domain("system matrix has no rows"));
    }
    u.check_aligned(sm)?;
    let energy = sm.frobenius_sqr();
    if energy == 0.0 {
        return Err(domain("system matrix is all zeros"));
    }
    let lambda = cfg.lambda * energy / sm.n_rows() as f64;
    let sqrt_l = lambda.sqrt();
    let norms: Vec<f64> = sm.rows().iter().map(|r| r.norm_sqr()).collect();
    let skipped_rows = norms.iter().filter(|&&n| n == 0.0).count();
    let uv: Vec<Complex64> = u.values().collect();
    let n = sm.grid().len();
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    let mut v = vec![Complex64::new(0.0, 0.0); sm.n_rows()];
    let mut order: Vec<usize> = (0..sm.n_rows()).collect();
    let mut rng = match cfg.row_order {
        RowOrder::Shuffled { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        RowOrder::Sequential => None,
    };
    let mut residuals = Vec::with_capacity(cfg.sweeps);
    for _ in 0..cfg.sweeps {
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        for &i in &order {
            if norms[i] == 0.0 {
                continue;
            }
            let row = &sm.rows()[i];
            let (re, im) = (row.re(), row.im());
            let mut dot = Complex64::new(0.0, 0.0);
            for j in 0..n {
                dot += Complex64::new(re[j], im[j]) * c[j];
            }
            let alpha = (uv[i] - dot - v[i] * sqrt_l) / (norms[i] + lambda);
            for j in 0..n {
                c[j] += alpha * Complex64::new(re[j], -im[j]);
            }
            v[i] += alpha * sqrt_l;
        }
        if cfg.enforce_real_nonneg {
            for cj in c.iter_mut() {
                *cj = Complex64::new(cj.re.max(0.0), 0.0);
            }
        }
        residuals.push(relative_residual(sm, &uv, &c));
    }
    Ok(KaczmarzResult { solution: c, residuals, skipped_rows })
}

/// Concentration estimate: the real part of the Kaczmarz iterate, with
/// negative values set to zero when the solver ran without the clamp.
pub fn kaczmarz_solve(sm: &SystemMatrix, u: &SignalVector, cfg: &KaczmarzConfig) -> Result<Phantom> {
    let res = kaczmarz(sm, u, cfg)?;
    Phantom::new(*sm.grid(), res.solution.iter().map(|c| c.re.max(0.0)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub phantom: Phantom,
    pub report: MetricReport,
    pub residuals: Vec<f64>,
}

/// Simulates `u` with the true matrix, solves with the recovered one and
/// scores the result against the phantom. The solve runs on `S ΔV` so the
/// estimate is in concentration units.
pub fn reconstruction_pipeline(
    sm_recovered: &SystemMatrix,
    sm_truth: &SystemMatrix,
    phantom: &Phantom,
    cfg: &KaczmarzConfig,
    method: &str,
    ratio: usize,
) -> Result<Reconstruction> {
    if sm_recovered.grid().dims() != sm_truth.grid().dims() || sm_truth.grid() != phantom.grid() {
        return Err(domain("recovered matrix, true matrix and phantom grids differ"));
    }
    let u = forward_signal(sm_truth, phantom)?;
    let dv = sm_truth.grid().voxel_volume();
    let res = kaczmarz(sm_recovered, &u, cfg)?;
    let est = Phantom::new(*phantom.grid(), res.solution.iter().map(|c| (c.re / dv).max(0.0)).collect())?;
    let report = MetricReport::for_phantom(method, ratio, 0, &est, phantom)?;
    Ok(Reconstruction { phantom: est, report, residuals: res.residuals })
}
