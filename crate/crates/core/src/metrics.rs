//! NRMSE, PSNR and SSIM plus benchmark table assembly.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::error::{domain, Error, Result};
use crate::model::{Phantom, SMRow, SystemMatrix};

/// Reported PSNR for an exact match.
pub const PSNR_EXACT_DB: f64 = 99.0;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_WINDOW: usize = 7;

/// Real or complex voxel data that metrics can compare.
pub trait Field {
    fn re(&self) -> &[f64];
    fn im(&self) -> Option<&[f64]>;
}

impl Field for SMRow {
    fn re(&self) -> &[f64] {
        SMRow::re(self)
    }
    fn im(&self) -> Option<&[f64]> {
        Some(SMRow::im(self))
    }
}

impl Field for Phantom {
    fn re(&self) -> &[f64] {
        self.values()
    }
    fn im(&self) -> Option<&[f64]> {
        None
    }
}

/// `‖est − truth‖_F / (max|truth| − min|truth|)` on split complex planes.
pub fn nrmse_values(est_re: &[f64], est_im: &[f64], truth_re: &[f64], truth_im: &[f64]) -> Result<f64> {
    let n = truth_re.len();
    if est_re.len() != n || est_im.len() != n || truth_im.len() != n {
        return Err(domain("nrmse operands differ in length"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut err = 0.0;
    for i in 0..n {
        let m = truth_re[i].hypot(truth_im[i]);
        lo = lo.min(m);
        hi = hi.max(m);
        let (dr, di) = (est_re[i] - truth_re[i], est_im[i] - truth_im[i]);
        err += dr * dr + di * di;
    }
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(Error::DegenerateRange);
    }
    Ok(err.sqrt() / range)
}

pub fn nrmse<T: Field>(estimate: &T, truth: &T) -> Result<f64> {
    let zeros = vec![0.0; truth.re().len()];
    let ei = estimate.im().unwrap_or(&zeros);
    let ti = truth.im().unwrap_or(&zeros);
    nrmse_values(estimate.re(), ei, truth.re(), ti)
}

/// Per-row NRMSE of two matrices with identical row order, and its mean.
pub fn matrix_nrmse(estimate: &SystemMatrix, truth: &SystemMatrix) -> Result<(Vec<f64>, f64)> {
    if estimate.grid().dims() != truth.grid().dims() || estimate.n_rows() != truth.n_rows() {
        return Err(domain("matrices differ in shape"));
    }
    let mut per_row = Vec::with_capacity(truth.n_rows());
    for (e, t) in estimate.rows().iter().zip(truth.rows()) {
        if (e.channel(), e.freq_index()) != (t.channel(), t.freq_index()) {
            return Err(domain(format!("row order differs at {} k={}", t.channel(), t.freq_index())));
        }
        per_row.push(nrmse(e, t)?);
    }
    if per_row.is_empty() {
        return Err(domain("no rows to compare"));
    }
    let mean = per_row.iter().sum::<f64>() / per_row.len() as f64;
    Ok((per_row, mean))
}

/// `10 log10(max(truth)² / MSE)`, or [`PSNR_EXACT_DB`] when the MSE is zero.
pub fn psnr(estimate: &Phantom, truth: &Phantom) -> Result<f64> {
    psnr_values(estimate.values(), truth.values())
}

pub fn psnr_values(e: &[f64], t: &[f64]) -> Result<f64> {
    if e.len() != t.len() {
        return Err(domain("psnr operands differ in length"));
    }
    let mse = e.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / t.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_EXACT_DB);
    }
    let peak = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(10.0 * (peak * peak / mse).log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimOptions {
    pub window: usize,
    /// Dynamic range from both images instead of the truth alone; makes the
    /// index symmetric in its arguments.
    pub shared_range: bool,
}

impl Default for SsimOptions {
    fn default() -> Self {
        SsimOptions { window: SSIM_WINDOW, shared_range: false }
    }
}

/// Mean luminance, contrast and structure terms over all windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimComponents {
    pub ssim: f64,
    pub luminance: f64,
    pub contrast: f64,
    pub structure: f64,
}

fn range_of(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Uniform-window SSIM over every fully contained window; flat axes get a
/// window of one voxel.
pub fn ssim_components(estimate: &Phantom, truth: &Phantom, opts: SsimOptions) -> Result<SsimComponents> {
    if estimate.grid().dims() != truth.grid().dims() {
        return Err(domain("ssim operands differ in shape"));
    }
    ssim_values(estimate.values(), truth.values(), truth.grid().dims(), opts)
}

/// [`ssim_components`] on raw planes laid out over `dims`.
pub fn ssim_values(x: &[f64], y: &[f64], dims: [usize; 3], opts: SsimOptions) -> Result<SsimComponents> {
    if x.len() != y.len() || y.len() != dims.iter().product::<usize>() {
        return Err(domain("ssim operands differ in shape"));
    }
    let win = dims.map(|n| if n > 1 { opts.window } else { 1 });
    if (0..3).any(|a| dims[a] < win[a]) || opts.window == 0 {
        return Err(domain(format!("grid {dims:?} is smaller than the {}-voxel SSIM window", opts.window)));
    }
    let (mut lo, mut hi) = range_of(y);
    if opts.shared_range {
        let (l2, h2) = range_of(x);
        lo = lo.min(l2);
        hi = hi.max(h2);
    }
    let l = if hi > lo { hi - lo } else { 1.0 };
    let c1 = (SSIM_K1 * l).powi(2);
    let c2 = (SSIM_K2 * l).powi(2);
    let c3 = c2 / 2.0;
    let n = (win[0] * win[1] * win[2]) as f64;
    let mut acc = SsimComponents { ssim: 0.0, luminance: 0.0, contrast: 0.0, structure: 0.0 };
    let mut count = 0.0;
    for z0 in 0..=dims[2] - win[2] {
        for y0 in 0..=dims[1] - win[1] {
            for x0 in 0..=dims[0] - win[0] {
                let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for z in z0..z0 + win[2] {
                    for yy in y0..y0 + win[1] {
                        let base = (z * dims[1] + yy) * dims[0];
                        for i in base + x0..base + x0 + win[0] {
                            let (a, b) = (x[i], y[i]);
                            sx += a;
                            sy += b;
                            sxx += a * a;
                            syy += b * b;
                            sxy += a * b;
                        }
                    }
                }
                let (mx, my) = (sx / n, sy / n);
                let vx = (sxx / n - mx * mx).max(0.0);
                let vy = (syy / n - my * my).max(0.0);
                let cov = sxy / n - mx * my;
                acc.ssim += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                let (dx, dy) = (vx.sqrt(), vy.sqrt());
                acc.luminance += (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
                acc.contrast += (2.0 * dx * dy + c2) / (vx + vy + c2);
                acc.structure += (cov + c3) / (dx * dy + c3);
                count += 1.0;
            }
        }
    }
    Ok(SsimComponents {
        ssim: acc.ssim / count,
        luminance: acc.luminance / count,
        contrast: acc.contrast / count,
        structure: acc.structure / count,
    })
}

pub fn ssim(estimate: &Phantom, truth: &Phantom) -> Result<f64> {
    Ok(ssim_components(estimate, truth, SsimOptions::default())?.ssim)
}

/// Order-sensitive fingerprint of the truth a report was computed against.
pub fn fingerprint(values: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    values.len().hash(&mut h);
    for v in values {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub method: String,
    pub ratio: usize,
    pub seed: u64,
    pub per_row_nrmse: Vec<f64>,
    pub mean_nrmse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub truth: u64,
}

impl MetricReport {
    /// Mean NRMSE is derived from the per-row list.
    pub fn new(method: impl Into<String>, ratio: usize, seed: u64, per_row_nrmse: Vec<f64>, psnr_db: f64, ssim: f64, truth: u64) -> Self {
        let mean_nrmse = if per_row_nrmse.is_empty() { f64::NAN } else { per_row_nrmse.iter().sum::<f64>() / per_row_nrmse.len() as f64 };
        MetricReport { method: method.into(), ratio, seed, per_row_nrmse, mean_nrmse, psnr_db, ssim, truth }
    }

    /// Report for a reconstructed phantom: a single NRMSE value plus PSNR and SSIM.
    pub fn for_phantom(method: impl Into<String>, ratio: usize, seed: u64, estimate: &Phantom, truth: &Phantom) -> Result<Self> {
        Ok(Self::new(method, ratio, seed, vec![nrmse(estimate, truth)?], psnr(estimate, truth)?, ssim(estimate, truth)?, fingerprint(truth.values())))
    }

    /// Report for a recovered matrix: per-row NRMSE, with PSNR over all
    /// moduli and SSIM averaged over the row modulus images.
    pub fn for_matrix(method: impl Into<String>, ratio: usize, seed: u64, estimate: &SystemMatrix, truth: &SystemMatrix) -> Result<Self> {
        let (per_row, _) = matrix_nrmse(estimate, truth)?;
        let modulus = |sm: &SystemMatrix| -> Vec<f64> { sm.rows().iter().flat_map(|r| r.to_complex()).map(|v| v.norm()).collect() };
        let (em, tm) = (modulus(estimate), modulus(truth));
        let dims = truth.grid().dims();
        let n = truth.grid().len();
        let mut ssim_sum = 0.0;
        for i in 0..truth.n_rows() {
            let range = i * n..(i + 1) * n;
            ssim_sum += ssim_values(&em[range.clone()], &tm[range], dims, SsimOptions::default())?.ssim;
        }
        let mut bits: Vec<f64> = truth.rows().iter().flat_map(|r| r.re().iter().chain(r.im())).copied().collect();
        bits.extend(dims.map(|d| d as f64));
        Ok(Self::new(method, ratio, seed, per_row, psnr_values(&em, &tm)?, ssim_sum / truth.n_rows() as f64, fingerprint(&bits)))
    }
}

pub const REPORT_HEADER: &str = "method,ratio,seed,mean_nrmse,psnr_db,ssim";

/// Sorts by (ratio, method, seed) after checking every entry shares one truth.
pub fn benchmark_report(results: &[MetricReport]) -> Result<Vec<MetricReport>> {
    if let Some(first) = results.first() {
        if results.iter().any(|r| r.truth != first.truth) {
            return Err(domain("benchmark entries were evaluated against different truths"));
        }
    }
    let mut out = results.to_vec();
    out.sort_by(|a, b| (a.ratio, &a.method, a.seed).cmp(&(b.ratio, &b.method, b.seed)));
    Ok(out)
}

pub fn report_csv(rows: &[MetricReport]) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{},{},{:.10e},{:.10e},{:.10e}\n", r.method, r.ratio, r.seed, r.mean_nrmse, r.psnr_db, r.ssim));
    }
    s
}
