//! Shared data model: grids, system-matrix rows, phantoms, signals and the
//! scan/particle parameters that determine a simulated system matrix.
//!
//! Voxel data is laid out row-major with x fastest, then y, then z:
//! `index = (pz * ny + py) * nx + px`.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{domain, Error, Result};

/// Vacuum permeability in T·m/A.
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;

/// Cell-centered, origin-symmetric discretization of the field of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3 {
    nx: usize,
    ny: usize,
    nz: usize,
    fov: [f64; 3],
}

impl Grid3 {
    pub fn new(dims: [usize; 3], fov: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Invalid(format!("voxel counts must be >= 1, got {dims:?}")));
        }
        if fov.iter().any(|&f| !(f.is_finite() && f > 0.0)) {
            return Err(Error::Invalid(format!("fov extents must be > 0, got {fov:?}")));
        }
        Ok(Self { nx: dims[0], ny: dims[1], nz: dims[2], fov })
    }

    /// Grid with the same voxel spacing on every axis.
    pub fn with_spacing(dims: [usize; 3], spacing: f64) -> Result<Self> {
        Self::new(dims, dims.map(|n| n as f64 * spacing))
    }

    /// Voxel counts in (x, y, z) order.
    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn fov(&self) -> [f64; 3] {
        self.fov
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> [f64; 3] {
        [
            self.fov[0] / self.nx as f64,
            self.fov[1] / self.ny as f64,
            self.fov[2] / self.nz as f64,
        ]
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    /// Number of axes with more than one voxel.
    pub fn dimensionality(&self) -> usize {
        self.dims().iter().filter(|&&n| n > 1).count()
    }

    #[inline]
    pub fn linear_index(&self, px: usize, py: usize, pz: usize) -> usize {
        (pz * self.ny + py) * self.nx + px
    }

    #[inline]
    pub fn unravel(&self, index: usize) -> [usize; 3] {
        let px = index % self.nx;
        let py = (index / self.nx) % self.ny;
        let pz = index / (self.nx * self.ny);
        [px, py, pz]
    }

    /// Cell-centered coordinate of voxel `p` on one axis.
    ///
    /// Computed from the integer `2p + 1 - n` so that `coord(p) == -coord(n-1-p)`
    /// holds bit-exactly.
    pub fn axis_coordinate(&self, axis: usize, p: usize) -> f64 {
        let n = self.dims()[axis];
        let numer = 2 * p as i64 + 1 - n as i64;
        numer as f64 * (self.fov[axis] / (2 * n) as f64)
    }

    pub fn voxel_coordinate(&self, index: [usize; 3]) -> Result<[f64; 3]> {
        let dims = self.dims();
        if index.iter().zip(dims.iter()).any(|(&p, &n)| p >= n) {
            return Err(Error::Index { index, dims });
        }
        Ok([
            self.axis_coordinate(0, index[0]),
            self.axis_coordinate(1, index[1]),
            self.axis_coordinate(2, index[2]),
        ])
    }

    pub(crate) fn coordinate_of(&self, linear: usize) -> [f64; 3] {
        let [px, py, pz] = self.unravel(linear);
        [
            self.axis_coordinate(0, px),
            self.axis_coordinate(1, py),
            self.axis_coordinate(2, pz),
        ]
    }
}

/// Receive channel `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    X,
    Y,
    Z,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::X, Channel::Y, Channel::Z];

    pub fn axis(self) -> usize {
        self as usize
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Channel::X),
            1 => Ok(Channel::Y),
            2 => Ok(Channel::Z),
            other => Err(Error::Format(format!("unknown channel code {other}"))),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(Channel::X),
            "y" => Ok(Channel::Y),
            "z" => Ok(Channel::Z),
            other => Err(Error::Invalid(format!("unknown channel {other:?}"))),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Channel::X => "X",
            Channel::Y => "Y",
            Channel::Z => "Z",
        };
        f.write_str(s)
    }
}

/// One system-matrix row: the spatial map of receive channel `l` at
/// frequency index `k`, held as separate real and imaginary planes.
#[derive(Debug, Clone, PartialEq)]
pub struct SMRow {
    channel: Channel,
    freq_index: u32,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl SMRow {
    pub fn new(channel: Channel, freq_index: u32, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::Invalid(format!(
                "real plane has {} entries but imaginary plane has {}",
                re.len(),
                im.len()
            )));
        }
        if re.iter().chain(im.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "row ({channel}, {freq_index}) contains non-finite values"
            )));
        }
        Ok(Self { channel, freq_index, re, im })
    }

    pub fn from_complex(channel: Channel, freq_index: u32, values: &[Complex64]) -> Result<Self> {
        let re = values.iter().map(|v| v.re).collect();
        let im = values.iter().map(|v| v.im).collect();
        Self::new(channel, freq_index, re, im)
    }

    pub fn zeros(channel: Channel, freq_index: u32, len: usize) -> Self {
        Self { channel, freq_index, re: vec![0.0; len], im: vec![0.0; len] }
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn freq_index(&self) -> u32 {
        self.freq_index
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    #[inline]
    pub fn value(&self, i: usize) -> Complex64 {
        Complex64::new(self.re[i], self.im[i])
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.re.iter().zip(&self.im).map(|(&r, &i)| Complex64::new(r, i)).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re.iter().zip(&self.im).map(|(r, i)| r * r + i * i).sum()
    }

    pub fn max_modulus(&self) -> f64 {
        self.re.iter().zip(&self.im).map(|(r, i)| r.hypot(*i)).fold(0.0, f64::max)
    }

    /// Same row metadata with new values.
    pub fn with_values(&self, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        Self::new(self.channel, self.freq_index, re, im)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            channel: self.channel,
            freq_index: self.freq_index,
            re: self.re.iter().map(|v| v * s).collect(),
            im: self.im.iter().map(|v| v * s).collect(),
        }
    }
}

/// How a system matrix came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    SimulatedClosedForm,
    SimulatedNumeric,
    Recovered,
    Loaded,
}

impl Provenance {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Provenance::SimulatedClosedForm),
            1 => Ok(Provenance::SimulatedNumeric),
            2 => Ok(Provenance::Recovered),
            3 => Ok(Provenance::Loaded),
            other => Err(Error::Format(format!("unknown provenance code {other}"))),
        }
    }
}

/// Ordered set of rows over a common grid; `(channel, freq_index)` pairs are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrix {
    grid: Grid3,
    rows: Vec<SMRow>,
    provenance: Provenance,
    lookup: HashMap<(Channel, u32), usize>,
}

impl SystemMatrix {
    pub fn new(grid: Grid3, rows: Vec<SMRow>, provenance: Provenance) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != grid.len() {
                return Err(Error::Invalid(format!(
                    "row ({}, {}) has {} values, grid has {} voxels",
                    row.channel,
                    row.freq_index,
                    row.len(),
                    grid.len()
                )));
            }
            if lookup.insert((row.channel, row.freq_index), i).is_some() {
                return Err(Error::DuplicateRow { channel: row.channel, freq_index: row.freq_index });
            }
        }
        Ok(Self { grid, rows, provenance, lookup })
    }

    pub fn empty(grid: Grid3, provenance: Provenance) -> Self {
        Self { grid, rows: Vec::new(), provenance, lookup: HashMap::new() }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn rows(&self) -> &[SMRow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<SMRow> {
        self.rows
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Number of rows `N_f`.
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row_lookup(&self, channel: Channel, freq_index: u32) -> Result<&SMRow> {
        self.lookup
            .get(&(channel, freq_index))
            .map(|&i| &self.rows[i])
            .ok_or(Error::NotFound { channel, freq_index })
    }

    /// Squared Frobenius norm of the whole matrix.
    pub fn frobenius_sqr(&self) -> f64 {
        self.rows.iter().map(SMRow::norm_sqr).sum()
    }

    /// Same grid and provenance with a row-wise transformation applied.
    pub fn map_rows<F>(&self, grid: Grid3, provenance: Provenance, f: F) -> Result<Self>
    where
        F: FnMut(&SMRow) -> Result<SMRow>,
    {
        let rows = self.rows.iter().map(f).collect::<Result<Vec<_>>>()?;
        Self::new(grid, rows, provenance)
    }
}

/// Non-negative concentration field `c(r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    grid: Grid3,
    concentration: Vec<f64>,
}

impl Phantom {
    pub fn new(grid: Grid3, concentration: Vec<f64>) -> Result<Self> {
        if concentration.len() != grid.len() {
            return Err(Error::Invalid(format!(
                "phantom has {} values, grid has {} voxels",
                concentration.len(),
                grid.len()
            )));
        }
        if concentration.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::Invalid("phantom concentrations must be finite and >= 0".into()));
        }
        Ok(Self { grid, concentration })
    }

    pub fn zeros(grid: Grid3) -> Self {
        Self { grid, concentration: vec![0.0; grid.len()] }
    }

    /// Unit concentration at a single voxel.
    pub fn delta(grid: Grid3, index: [usize; 3]) -> Result<Self> {
        grid.voxel_coordinate(index)?;
        let mut c = vec![0.0; grid.len()];
        c[grid.linear_index(index[0], index[1], index[2])] = 1.0;
        Ok(Self { grid, concentration: c })
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.concentration
    }

    pub fn into_values(self) -> Vec<f64> {
        self.concentration
    }
}

/// Measured Fourier coefficients `u`, aligned with a system matrix's row order.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalVector {
    entries: Vec<(Channel, u32, Complex64)>,
}

impl SignalVector {
    pub fn new(entries: Vec<(Channel, u32, Complex64)>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[(Channel, u32, Complex64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.entries.iter().map(|e| e.2)
    }

    /// Checks row-by-row alignment with `sm`.
    pub fn check_aligned(&self, sm: &SystemMatrix) -> Result<()> {
        if self.len() != sm.n_rows() {
            return Err(domain(format!(
                "signal has {} entries, system matrix has {} rows",
                self.len(),
                sm.n_rows()
            )));
        }
        for (e, row) in self.entries.iter().zip(sm.rows()) {
            if e.0 != row.channel() || e.1 != row.freq_index() {
                return Err(domain(format!(
                    "signal entry ({}, {}) does not match row ({}, {})",
                    e.0,
                    e.1,
                    row.channel(),
                    row.freq_index()
                )));
            }
        }
        Ok(())
    }
}

/// Drive/selection parameters of one spatial axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisDrive {
    /// Selection-field gradient in T/m.
    pub gradient: f64,
    /// Drive amplitude in T; zero marks an inactive axis.
    pub amplitude: f64,
    /// Clock divider: the drive frequency is `1 / (divider * base_period)`.
    pub divider: u32,
    /// Phase offset of the drive cosine in radians.
    pub phase: f64,
}

impl AxisDrive {
    pub fn inactive(gradient: f64) -> Self {
        Self { gradient, amplitude: 0.0, divider: 0, phase: 0.0 }
    }

    pub fn is_active(&self) -> bool {
        self.amplitude > 0.0
    }
}

/// Excitation sequence: `H_a(r, t) = G_a r_a - A_a cos(2π n_a t / T + φ_a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSequence {
    axes: [AxisDrive; 3],
    base_period: f64,
    n_time_samples: usize,
    k_max: u32,
}

pub const DEFAULT_TIME_SAMPLES: usize = 4096;
pub const DEFAULT_K_MAX: u32 = 512;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl ScanSequence {
    pub fn new(axes: [AxisDrive; 3], base_period: f64, n_time_samples: usize, k_max: u32) -> Result<Self> {
        for (a, ax) in axes.iter().enumerate() {
            if !(ax.gradient.is_finite() && ax.gradient >= 0.0) {
                return Err(Error::Invalid(format!("axis {a}: gradient must be >= 0")));
            }
            if !(ax.amplitude.is_finite() && ax.amplitude >= 0.0) {
                return Err(Error::Invalid(format!("axis {a}: amplitude must be >= 0")));
            }
            if ax.is_active() && ax.divider == 0 {
                return Err(Error::Invalid(format!("axis {a}: active drive needs a divider >= 1")));
            }
            if !ax.phase.is_finite() {
                return Err(Error::Invalid(format!("axis {a}: phase must be finite")));
            }
        }
        if !axes.iter().any(AxisDrive::is_active) {
            return Err(Error::Invalid("at least one drive axis must be active".into()));
        }
        if !(base_period.is_finite() && base_period > 0.0) {
            return Err(Error::Invalid("base period must be > 0".into()));
        }
        if !n_time_samples.is_power_of_two() || n_time_samples < 4 {
            return Err(Error::Invalid(format!(
                "n_time_samples must be a power of two >= 4, got {n_time_samples}"
            )));
        }
        let nyquist = (n_time_samples / 2) as u32;
        if k_max > nyquist {
            return Err(Error::Alias { k: k_max, nyquist });
        }
        let active: Vec<u64> = axes.iter().filter(|a| a.is_active()).map(|a| a.divider as u64).collect();
        if active.len() == 2 && gcd(active[0], active[1]) != 1 {
            return Err(Error::Invalid(format!("2D dividers {active:?} must be coprime")));
        }
        Ok(Self { axes, base_period, n_time_samples, k_max })
    }

    /// Single drive axis along x; y and z carry only their selection gradient.
    pub fn one_dimensional(gradient: f64, amplitude: f64, divider: u32, base_period: f64) -> Result<Self> {
        let x = AxisDrive { gradient, amplitude, divider, phase: 0.0 };
        Self::new(
            [x, AxisDrive::inactive(gradient), AxisDrive::inactive(gradient)],
            base_period,
            DEFAULT_TIME_SAMPLES,
            DEFAULT_K_MAX,
        )
    }

    /// Lissajous excitation in the xy-plane with sine drives (`φ = -π/2`).
    ///
    /// With an even x divider and an odd y divider this is the configuration
    /// under which the 2D reflection rules hold.
    pub fn lissajous_2d(gradient: [f64; 2], amplitude: [f64; 2], dividers: [u32; 2], base_period: f64) -> Result<Self> {
        let phase = -std::f64::consts::FRAC_PI_2;
        let x = AxisDrive { gradient: gradient[0], amplitude: amplitude[0], divider: dividers[0], phase };
        let y = AxisDrive { gradient: gradient[1], amplitude: amplitude[1], divider: dividers[1], phase };
        Self::new([x, y, AxisDrive::inactive(gradient[0])], base_period, DEFAULT_TIME_SAMPLES, DEFAULT_K_MAX)
    }

    pub fn lissajous_3d(gradient: [f64; 3], amplitude: [f64; 3], dividers: [u32; 3], base_period: f64) -> Result<Self> {
        let phase = -std::f64::consts::FRAC_PI_2;
        let axes = [0, 1, 2].map(|a| AxisDrive {
            gradient: gradient[a],
            amplitude: amplitude[a],
            divider: dividers[a],
            phase,
        });
        Self::new(axes, base_period, DEFAULT_TIME_SAMPLES, DEFAULT_K_MAX)
    }

    pub fn with_time_samples(self, n_time_samples: usize) -> Result<Self> {
        let k_max = self.k_max.min((n_time_samples / 2) as u32);
        Self::new(self.axes, self.base_period, n_time_samples, k_max)
    }

    pub fn with_k_max(self, k_max: u32) -> Result<Self> {
        Self::new(self.axes, self.base_period, self.n_time_samples, k_max)
    }

    pub fn axes(&self) -> &[AxisDrive; 3] {
        &self.axes
    }

    pub fn base_period(&self) -> f64 {
        self.base_period
    }

    pub fn n_time_samples(&self) -> usize {
        self.n_time_samples
    }

    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    /// Number of actively driven axes.
    pub fn drive_dimensionality(&self) -> usize {
        self.axes.iter().filter(|a| a.is_active()).count()
    }

    /// Least common multiple of the active dividers.
    pub fn divider_lcm(&self) -> u64 {
        self.axes
            .iter()
            .filter(|a| a.is_active())
            .fold(1u64, |l, a| l / gcd(l, a.divider as u64) * a.divider as u64)
    }

    /// Repetition period `T` in seconds.
    pub fn period(&self) -> f64 {
        self.divider_lcm() as f64 * self.base_period
    }

    /// Drive cycles of axis `a` per period `T` (0 for inactive axes).
    pub fn cycles(&self, axis: usize) -> u64 {
        let ax = &self.axes[axis];
        if ax.is_active() {
            self.divider_lcm() / ax.divider as u64
        } else {
            0
        }
    }

    /// Drive frequency of axis `a` in Hz (0 for inactive axes).
    pub fn drive_frequency(&self, axis: usize) -> f64 {
        self.cycles(axis) as f64 / self.period()
    }

    /// Half-extent `A/G` of the drive-covered region on an active axis.
    pub fn coverage(&self, axis: usize) -> f64 {
        let ax = &self.axes[axis];
        if !ax.is_active() || ax.gradient == 0.0 {
            f64::INFINITY
        } else {
            ax.amplitude / ax.gradient
        }
    }

    /// Checks that the grid's field of view fits inside the drive coverage.
    pub fn check_grid(&self, grid: &Grid3) -> Result<()> {
        for a in 0..3 {
            let ax = &self.axes[a];
            if ax.is_active() {
                let cover = 2.0 * self.coverage(a);
                if grid.fov()[a] > cover * (1.0 + 1e-12) {
                    return Err(domain(format!(
                        "axis {a}: grid fov {} m exceeds drive coverage {} m",
                        grid.fov()[a],
                        cover
                    )));
                }
            } else if grid.dims()[a] > 1 && ax.gradient == 0.0 {
                return Err(domain(format!("axis {a} has voxels but neither drive nor gradient")));
            }
        }
        Ok(())
    }
}

/// Ideal superparamagnetic particle with instantaneous, isotropic response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleModel {
    /// Saturation moment `m_sat`.
    pub saturation_moment: f64,
    /// Langevin argument scale `β` in 1/T: `ξ = β‖H‖`.
    pub langevin_scale: f64,
}

impl ParticleModel {
    pub fn new(saturation_moment: f64, langevin_scale: f64) -> Result<Self> {
        if !(saturation_moment.is_finite() && saturation_moment >= 0.0) {
            return Err(Error::Invalid("saturation moment must be >= 0".into()));
        }
        if !(langevin_scale.is_finite() && langevin_scale > 0.0) {
            return Err(Error::Invalid("langevin scale must be > 0".into()));
        }
        Ok(Self { saturation_moment, langevin_scale })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn voxel_coordinate_examples() {
        let g = Grid3::new([2, 1, 1], [0.02, 1.0, 1.0]).unwrap();
        assert_eq!(g.voxel_coordinate([0, 0, 0]).unwrap()[0], -0.005);
        assert_eq!(g.voxel_coordinate([1, 0, 0]).unwrap()[0], 0.005);
        let g = Grid3::new([5, 1, 1], [0.01, 1.0, 1.0]).unwrap();
        assert_eq!(g.voxel_coordinate([2, 0, 0]).unwrap()[0], 0.0);
    }

    #[test]
    fn voxel_coordinate_out_of_range() {
        let g = Grid3::new([3, 3, 1], [0.01; 3]).unwrap();
        assert!(matches!(g.voxel_coordinate([0, 3, 0]), Err(Error::Index { .. })));
    }

    #[test]
    fn coordinates_are_antisymmetric() {
        for n in 1..40 {
            let g = Grid3::new([n, 1, 1], [0.0123, 1.0, 1.0]).unwrap();
            for p in 0..n {
                assert_eq!(g.axis_coordinate(0, p) + g.axis_coordinate(0, n - 1 - p), 0.0);
            }
        }
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(Grid3::new([0, 1, 1], [1.0; 3]).is_err());
        assert!(Grid3::new([1, 1, 1], [1.0, 0.0, 1.0]).is_err());
    }

    fn row(ch: Channel, k: u32) -> SMRow {
        SMRow::new(ch, k, vec![k as f64; 4], vec![0.0; 4]).unwrap()
    }

    #[test]
    fn row_lookup_finds_and_rejects() {
        let g = Grid3::new([4, 1, 1], [0.01; 3]).unwrap();
        let sm = SystemMatrix::new(g, vec![row(Channel::X, 2), row(Channel::X, 3)], Provenance::Loaded).unwrap();
        assert_eq!(sm.row_lookup(Channel::X, 3).unwrap(), &sm.rows()[1]);
        assert!(matches!(sm.row_lookup(Channel::Y, 3), Err(Error::NotFound { .. })));
        let dup = SystemMatrix::new(g, vec![row(Channel::X, 2), row(Channel::X, 2)], Provenance::Loaded);
        assert!(matches!(dup, Err(Error::DuplicateRow { .. })));
    }

    #[test]
    fn rows_must_match_grid_and_be_finite() {
        let g = Grid3::new([5, 1, 1], [0.01; 3]).unwrap();
        assert!(SystemMatrix::new(g, vec![row(Channel::X, 1)], Provenance::Loaded).is_err());
        assert!(SMRow::new(Channel::X, 1, vec![f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn phantom_rejects_negative() {
        let g = Grid3::new([2, 1, 1], [0.01; 3]).unwrap();
        assert!(Phantom::new(g, vec![1.0, -0.5]).is_err());
        assert!(Phantom::new(g, vec![1.0, 0.5]).is_ok());
    }

    #[test]
    fn sequence_period_and_cycles() {
        let seq = ScanSequence::lissajous_2d([2.0, 2.0], [0.012, 0.012], [16, 17], 2.5e-6).unwrap();
        assert_eq!(seq.divider_lcm(), 272);
        assert_eq!(seq.cycles(0), 17);
        assert_eq!(seq.cycles(1), 16);
        assert!((seq.period() - 272.0 * 2.5e-6).abs() < 1e-18);
        assert!(ScanSequence::lissajous_2d([2.0, 2.0], [0.012, 0.012], [16, 18], 2.5e-6).is_err());
    }

    #[test]
    fn sequence_rejects_k_max_beyond_nyquist() {
        let seq = ScanSequence::one_dimensional(2.0, 0.012, 100, 4e-7).unwrap();
        assert!(matches!(seq.clone().with_k_max(3000), Err(Error::Alias { .. })));
        assert!(seq.with_time_samples(1000).is_err());
    }
}
