//! Forward model: drive fields, Langevin particle response, numeric and
//! closed-form (Chebyshev) system-matrix rows, and the discrete signal `u = S c`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{domain, Error, Result};
use crate::model::{Channel, Grid3, ParticleModel, Phantom, Provenance, ScanSequence, SMRow, SignalVector, SystemMatrix, MU0};

/// Applied field `H(r, t)` in tesla.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub h: [f64; 3],
}

impl FieldSample {
    pub fn norm(&self) -> f64 {
        (self.h[0] * self.h[0] + self.h[1] * self.h[1] + self.h[2] * self.h[2]).sqrt()
    }
}

/// Mean-moment vectors over one period, sampled at `t_j = offset + j T / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentWaveform {
    pub samples: Vec<[f64; 3]>,
}

impl MomentWaveform {
    pub fn component(&self, axis: usize) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(move |m| m[axis])
    }
}

/// Field at position `r` and time `t` (normalized into `[0, T)`).
pub fn drive_field(seq: &ScanSequence, r: [f64; 3], t: f64) -> Result<FieldSample> {
    let period = seq.period();
    let t = t.rem_euclid(period);
    let mut h = [0.0; 3];
    for (a, ax) in seq.axes().iter().enumerate() {
        if ax.is_active() && r[a].abs() > seq.coverage(a) * (1.0 + 1e-12) {
            return Err(domain(format!("position {} m on axis {a} lies outside the drive coverage", r[a])));
        }
        let drive = if ax.is_active() {
            ax.amplitude * (2.0 * PI * seq.cycles(a) as f64 * t / period + ax.phase).cos()
        } else {
            0.0
        };
        h[a] = ax.gradient * r[a] - drive;
    }
    Ok(FieldSample { h })
}

/// Langevin function `L(ξ) = coth ξ - 1/ξ`.
pub fn langevin(xi: f64) -> f64 {
    if xi.abs() < 1e-2 {
        xi * langevin_over_arg(xi)
    } else {
        1.0 / xi.tanh() - 1.0 / xi
    }
}

/// `L(ξ)/ξ`, finite at the origin where it tends to 1/3.
pub fn langevin_over_arg(xi: f64) -> f64 {
    if xi.abs() < 1e-2 {
        let x2 = xi * xi;
        1.0 / 3.0 - x2 / 45.0 + 2.0 * x2 * x2 / 945.0
    } else {
        (1.0 / xi.tanh() - 1.0 / xi) / xi
    }
}

/// `L'(ξ) = 1/ξ² - 1/sinh² ξ`.
pub fn langevin_derivative(xi: f64) -> f64 {
    if xi.abs() < 1e-2 {
        let x2 = xi * xi;
        1.0 / 3.0 - x2 / 15.0 + 2.0 * x2 * x2 / 189.0
    } else {
        let s = xi.sinh();
        1.0 / (xi * xi) - 1.0 / (s * s)
    }
}

/// Mean moment `m̄ = m_sat L(β‖H‖) H/‖H‖`.
pub fn mean_moment(pm: &ParticleModel, field: &FieldSample) -> [f64; 3] {
    let beta = pm.langevin_scale;
    let scale = pm.saturation_moment * beta * langevin_over_arg(beta * field.norm());
    field.h.map(|h| scale * h)
}

/// Derivative of the scalar magnetization curve `M(h) = m_sat L(β h)` with respect to `h`.
pub fn magnetization_derivative(pm: &ParticleModel, h: f64) -> f64 {
    pm.saturation_moment * pm.langevin_scale * langevin_derivative(pm.langevin_scale * h)
}

/// Per-axis drive values over one period. Phases are reduced modulo `N`
/// first so that samples related by a half-period shift or a time reversal
/// hit identical table entries.
fn drive_table(seq: &ScanSequence, time_offset: f64) -> [Vec<f64>; 3] {
    let n = seq.n_time_samples();
    let period = seq.period();
    std::array::from_fn(|a| {
        let ax = seq.axes()[a];
        if !ax.is_active() {
            return vec![0.0; n];
        }
        let cycles = seq.cycles(a);
        (0..n)
            .map(|j| {
                let m = (cycles * j as u64) % n as u64;
                let base = 2.0 * PI * m as f64 / n as f64;
                let shift = 2.0 * PI * cycles as f64 * time_offset / period;
                ax.amplitude * (base + shift + ax.phase).cos()
            })
            .collect()
    })
}

fn waveform_with_table(seq: &ScanSequence, pm: &ParticleModel, r: [f64; 3], table: &[Vec<f64>; 3]) -> MomentWaveform {
    let sel = [0, 1, 2].map(|a| seq.axes()[a].gradient * r[a]);
    let samples = (0..seq.n_time_samples())
        .map(|j| {
            let field = FieldSample { h: [sel[0] - table[0][j], sel[1] - table[1][j], sel[2] - table[2][j]] };
            mean_moment(pm, &field)
        })
        .collect();
    MomentWaveform { samples }
}

/// Mean-moment waveform at position `r`, sampled from `time_offset` on.
pub fn moment_waveform(seq: &ScanSequence, pm: &ParticleModel, r: [f64; 3], time_offset: f64) -> MomentWaveform {
    waveform_with_table(seq, pm, r, &drive_table(seq, time_offset))
}

struct SpectrumEngine {
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
    n: usize,
    period: f64,
}

impl SpectrumEngine {
    fn new(seq: &ScanSequence) -> Self {
        let n = seq.n_time_samples();
        let fft = FftPlanner::new().plan_fft_forward(n);
        let scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        Self { fft, buf: vec![Complex64::new(0.0, 0.0); n], scratch, n, period: seq.period() }
    }

    /// Fills `out[i]` with `m̃_k` for `ks[i]`: the DFT of the moment component
    /// multiplied by the spectral derivative `2πik/T` and by `-μ0/T`.
    fn coefficients(&mut self, wave: &MomentWaveform, axis: usize, ks: &[u32], out: &mut [Complex64]) {
        for (b, m) in self.buf.iter_mut().zip(wave.component(axis)) {
            *b = Complex64::new(m, 0.0);
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        // (μ0/T)·(2πik/T)·(T/N)·X_k
        let scale = -MU0 * 2.0 * PI / (self.n as f64 * self.period);
        for (o, &k) in out.iter_mut().zip(ks) {
            *o = self.buf[k as usize] * Complex64::new(0.0, scale * k as f64);
        }
    }
}

/// Full signal spectrum `m̃_{l,k}(r)` for `k = 0..=N/2` at one position.
pub fn signal_spectrum(seq: &ScanSequence, pm: &ParticleModel, r: [f64; 3], channel: Channel, time_offset: f64) -> Vec<Complex64> {
    let wave = moment_waveform(seq, pm, r, time_offset);
    let ks: Vec<u32> = (0..=(seq.n_time_samples() / 2) as u32).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); ks.len()];
    SpectrumEngine::new(seq).coefficients(&wave, channel.axis(), &ks, &mut out);
    out
}

fn check_k(seq: &ScanSequence, k: u32) -> Result<()> {
    let nyquist = (seq.n_time_samples() / 2) as u32;
    if k > nyquist {
        return Err(Error::Alias { k, nyquist });
    }
    if k > seq.k_max() {
        return Err(Error::Alias { k, nyquist: seq.k_max() });
    }
    Ok(())
}

/// One numerically simulated row `m̃_{l,k}` (receive-chain transfer taken as 1).
pub fn simulate_row_numeric(seq: &ScanSequence, pm: &ParticleModel, grid: &Grid3, channel: Channel, k: u32) -> Result<SMRow> {
    let sm = simulate_system_matrix(seq, pm, grid, &[channel], &[k])?;
    Ok(sm.into_rows().pop().expect("one row requested"))
}

/// Simulates one row per `(channel, k)` in channel-major order.
pub fn simulate_system_matrix(
    seq: &ScanSequence,
    pm: &ParticleModel,
    grid: &Grid3,
    channels: &[Channel],
    ks: &[u32],
) -> Result<SystemMatrix> {
    for &k in ks {
        check_k(seq, k)?;
    }
    seq.check_grid(grid)?;
    let n_vox = grid.len();
    let mut planes: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); n_vox]; channels.len() * ks.len()];
    if !ks.is_empty() && !channels.is_empty() {
        let table = drive_table(seq, 0.0);
        let mut engine = SpectrumEngine::new(seq);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); ks.len()];
        for v in 0..n_vox {
            let r = grid.coordinate_of(v);
            let wave = waveform_with_table(seq, pm, r, &table);
            for (ci, ch) in channels.iter().enumerate() {
                engine.coefficients(&wave, ch.axis(), ks, &mut coeffs);
                for (ki, c) in coeffs.iter().enumerate() {
                    planes[ci * ks.len() + ki][v] = *c;
                }
            }
        }
    }
    let mut rows = Vec::with_capacity(planes.len());
    for (ci, ch) in channels.iter().enumerate() {
        for (ki, &k) in ks.iter().enumerate() {
            rows.push(SMRow::from_complex(*ch, k, &planes[ci * ks.len() + ki])?);
        }
    }
    SystemMatrix::new(*grid, rows, Provenance::SimulatedNumeric)
}

/// Chebyshev polynomial of the second kind `U_n(x)` by three-term recurrence;
/// `U_{-1} = 0`.
pub fn chebyshev_u(n: i64, x: f64) -> f64 {
    if n < 0 {
        return 0.0;
    }
    let (mut prev, mut cur) = (1.0, 2.0 * x);
    if n == 0 {
        return prev;
    }
    for _ in 1..n {
        let next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Windowed kernel `F(u) = U_{k-1}(u) √(1-u²)`, zero outside `|u| ≤ 1`.
pub fn chebyshev_window(k: u32, u: f64) -> f64 {
    if u.abs() > 1.0 {
        return 0.0;
    }
    chebyshev_u(k as i64 - 1, u) * (1.0 - u * u).sqrt()
}

/// Quadrature nodes used by [`simulate_sm_1d_closed_form`].
pub const CLOSED_FORM_NODES: usize = 4096;

/// `∫ M'(x - h) F(h/A) dh` over `|h| ≤ A`, by the midpoint rule in `h = A cos θ`.
///
/// In `θ` the integrand extends to a smooth periodic function, so the rule
/// converges spectrally despite the square-root edges of the window.
pub fn chebyshev_convolution<M: Fn(f64) -> f64>(mprime: M, x: f64, amplitude: f64, k: u32, nodes: usize) -> f64 {
    let dtheta = PI / nodes as f64;
    let mut acc = 0.0;
    for j in 0..nodes {
        let theta = (j as f64 + 0.5) * dtheta;
        let u = theta.cos();
        acc += mprime(x - amplitude * u) * chebyshev_window(k, u) * theta.sin();
    }
    amplitude * dtheta * acc
}

/// Closed-form 1D row: `(2iμ0/T) · (M' ∗ F)(G r_x)` with `F` built from `U_{k-1}`.
///
/// The prefactor is derived for the drive `H = G x - A cos(2πt/T)`; it differs
/// from the numeric route only by discretization error.
pub fn simulate_sm_1d_closed_form(seq: &ScanSequence, pm: &ParticleModel, grid: &Grid3, k: u32) -> Result<SMRow> {
    let axes = seq.axes();
    if seq.drive_dimensionality() != 1 || !axes[0].is_active() {
        return Err(domain("closed form needs a sequence driven only along x"));
    }
    if axes[0].phase != 0.0 || seq.cycles(0) != 1 {
        return Err(domain("closed form needs a zero-phase single-cycle cosine drive"));
    }
    if grid.dims()[1] != 1 || grid.dims()[2] != 1 {
        return Err(domain("closed form needs a grid with a single voxel along y and z"));
    }
    if axes[0].gradient <= 0.0 {
        return Err(domain("closed form needs a positive gradient"));
    }
    check_k(seq, k)?;
    seq.check_grid(grid)?;
    let g = axes[0].gradient;
    let a = axes[0].amplitude;
    let prefactor = 2.0 * MU0 / seq.period();
    let values: Vec<Complex64> = (0..grid.dims()[0])
        .map(|p| {
            let x = g * grid.axis_coordinate(0, p);
            let conv = chebyshev_convolution(|h| magnetization_derivative(pm, h), x, a, k, CLOSED_FORM_NODES);
            Complex64::new(0.0, prefactor * conv)
        })
        .collect();
    SMRow::from_complex(Channel::X, k, &values)
}

/// `u_i = Σ_v S_{i,v} c_v ΔV`.
pub fn forward_signal(sm: &SystemMatrix, phantom: &Phantom) -> Result<SignalVector> {
    if sm.grid() != phantom.grid() {
        return Err(domain("system matrix and phantom grids differ"));
    }
    let dv = sm.grid().voxel_volume();
    let c = phantom.values();
    let entries = sm
        .rows()
        .iter()
        .map(|row| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (v, &cv) in c.iter().enumerate() {
                if cv != 0.0 {
                    acc += row.value(v) * cv;
                }
            }
            (row.channel(), row.freq_index(), acc * dv)
        })
        .collect();
    Ok(SignalVector::new(entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq1d() -> ScanSequence {
        ScanSequence::one_dimensional(2.0, 0.012, 100, 4e-7).unwrap()
    }

    #[test]
    fn drive_field_examples() {
        let seq = ScanSequence::new(
            [
                crate::model::AxisDrive::inactive(1.0),
                crate::model::AxisDrive { gradient: 1.0, amplitude: 0.01, divider: 1, phase: 0.0 },
                crate::model::AxisDrive::inactive(1.0),
            ],
            4e-5,
            64,
            32,
        )
        .unwrap();
        let h = drive_field(&seq, [0.01, 0.0, 0.0], 1.234e-5).unwrap();
        assert_eq!(h.h[0], 0.01);

        let seq = ScanSequence::one_dimensional(0.0, 0.012, 100, 4e-7).unwrap();
        assert!((seq.drive_frequency(0) - 25e3).abs() < 1e-6);
        let h = drive_field(&seq, [0.0; 3], 0.0).unwrap();
        assert_eq!(h.h[0], -0.012);

        let seq = ScanSequence::one_dimensional(1.0, 0.01, 100, 4e-7).unwrap();
        let h = drive_field(&seq, [0.0; 3], seq.period() / 4.0).unwrap();
        assert!(h.norm() < 1e-15);
    }

    #[test]
    fn drive_field_normalizes_time_and_checks_coverage() {
        let seq = seq1d();
        let a = drive_field(&seq, [0.001, 0.0, 0.0], 0.3 * seq.period()).unwrap();
        let b = drive_field(&seq, [0.001, 0.0, 0.0], 2.3 * seq.period()).unwrap();
        assert!((a.h[0] - b.h[0]).abs() < 1e-15);
        assert!(drive_field(&seq, [0.007, 0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn langevin_values() {
        assert!((langevin(1.0) - (1.0 / 1f64.tanh() - 1.0)).abs() < 1e-15);
        assert!((langevin(1.0) - 0.313035).abs() < 1e-6);
        assert!((langevin(1e-5) - (1e-5 / 3.0 - 1e-15 / 45.0)).abs() < 1e-20);
        assert!((langevin(1e3) - (1.0 - 1e-3)).abs() < 1e-12);
        // continuity across the series switch
        let (a, b) = (0.01 - 1e-12, 0.01 + 1e-12);
        let jump = langevin(b) - langevin(a) - langevin_derivative(0.01) * (b - a);
        assert!(jump.abs() < 5e-14);
        assert!((langevin_derivative(a) - langevin_derivative(b)).abs() < 1e-10);
    }

    #[test]
    fn langevin_derivative_matches_finite_difference() {
        for &xi in &[-7.0, -0.5, 0.003, 0.2, 1.0, 4.0, 30.0] {
            let h = 1e-5;
            let fd = (langevin(xi + h) - langevin(xi - h)) / (2.0 * h);
            assert!((fd - langevin_derivative(xi)).abs() < 1e-8, "xi={xi}");
        }
    }

    #[test]
    fn mean_moment_limits() {
        let pm = ParticleModel::new(2.0, 1000.0).unwrap();
        assert_eq!(mean_moment(&pm, &FieldSample { h: [0.0; 3] }), [0.0; 3]);
        let m = mean_moment(&pm, &FieldSample { h: [0.0, 1.0, 0.0] });
        assert!((m[1] - 2.0).abs() / 2.0 < 1e-3);
        let m = mean_moment(&pm, &FieldSample { h: [1e-3, 0.0, 0.0] });
        assert!((m[0] - 2.0 * langevin(1.0)).abs() < 1e-14);
    }

    #[test]
    fn zero_moment_and_dc_rows_vanish() {
        let grid = Grid3::new([9, 1, 1], [0.01, 1.0, 1.0]).unwrap();
        let seq = seq1d().with_time_samples(256).unwrap();
        let none = ParticleModel::new(0.0, 900.0).unwrap();
        let row = simulate_row_numeric(&seq, &none, &grid, Channel::X, 3).unwrap();
        assert!(row.norm_sqr() == 0.0);
        let pm = ParticleModel::new(1.0, 900.0).unwrap();
        let row = simulate_row_numeric(&seq, &pm, &grid, Channel::X, 0).unwrap();
        assert!(row.norm_sqr() == 0.0);
    }

    #[test]
    fn alias_error_beyond_nyquist() {
        let grid = Grid3::new([5, 1, 1], [0.01, 1.0, 1.0]).unwrap();
        let seq = seq1d().with_time_samples(64).unwrap();
        let pm = ParticleModel::new(1.0, 900.0).unwrap();
        assert!(matches!(simulate_row_numeric(&seq, &pm, &grid, Channel::X, 33), Err(Error::Alias { .. })));
    }

    #[test]
    fn batch_cardinality_determinism_and_empty() {
        let grid = Grid3::new([7, 1, 1], [0.01, 1.0, 1.0]).unwrap();
        let seq = seq1d().with_time_samples(256).unwrap();
        let pm = ParticleModel::new(1.0, 900.0).unwrap();
        let a = simulate_system_matrix(&seq, &pm, &grid, &[Channel::X], &[2, 3]).unwrap();
        assert_eq!(a.n_rows(), 2);
        let b = simulate_system_matrix(&seq, &pm, &grid, &[Channel::X], &[2, 3]).unwrap();
        assert_eq!(a, b);
        let e = simulate_system_matrix(&seq, &pm, &grid, &[Channel::X], &[]).unwrap();
        assert!(e.is_empty());
    }

    #[test]
    fn chebyshev_recurrence_matches_trig_identity() {
        for k in 1..12u32 {
            for &theta in &[0.1, 0.7, 1.3, 2.9] {
                let f = chebyshev_window(k, f64::cos(theta));
                assert!((f - (k as f64 * theta).sin()).abs() < 1e-12);
            }
        }
        assert_eq!(chebyshev_window(1, 0.6), 0.8);
        assert_eq!(chebyshev_window(4, 1.2), 0.0);
    }

    #[test]
    fn closed_form_rejects_multidimensional_sequences() {
        let seq = ScanSequence::lissajous_2d([2.0, 2.0], [0.012, 0.012], [16, 17], 2.5e-6).unwrap();
        let grid = Grid3::new([5, 1, 1], [0.01, 1.0, 1.0]).unwrap();
        let pm = ParticleModel::new(1.0, 900.0).unwrap();
        assert!(matches!(simulate_sm_1d_closed_form(&seq, &pm, &grid, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn forward_signal_delta_and_zero() {
        let grid = Grid3::new([5, 1, 1], [0.01, 1.0, 1.0]).unwrap();
        let seq = seq1d().with_time_samples(256).unwrap();
        let pm = ParticleModel::new(1.0, 900.0).unwrap();
        let sm = simulate_system_matrix(&seq, &pm, &grid, &[Channel::X], &[1, 2, 3]).unwrap();
        let u = forward_signal(&sm, &Phantom::zeros(grid)).unwrap();
        assert!(u.values().all(|v| v == Complex64::new(0.0, 0.0)));
        let u = forward_signal(&sm, &Phantom::delta(grid, [3, 0, 0]).unwrap()).unwrap();
        for (row, v) in sm.rows().iter().zip(u.values()) {
            assert_eq!(v, row.value(3) * grid.voxel_volume());
        }
        let other = Grid3::new([5, 1, 1], [0.02, 1.0, 1.0]).unwrap();
        assert!(forward_signal(&sm, &Phantom::zeros(other)).is_err());
    }
}
