//! LR/HR pair generation: zero padding, stride decimation, SNR filtering,
//! train/validation splitting and rotation/flip augmentation.
//!
//! Padding and decimation only touch axes with more than one voxel, so a
//! flattened 2D matrix (`nz = 1`) stays flat.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{domain, Result};
use crate::model::{Grid3, Phantom, Provenance, SMRow, SystemMatrix};

/// Rows with an SNR at or below this value are dropped.
pub const SNR_THRESHOLD: f64 = 3.0;
/// Voxels added before the data on each spatial axis.
pub const PAD_PRE: usize = 1;
/// Voxels added after the data on each spatial axis.
pub const PAD_POST: usize = 2;
pub const VALIDATION_FRACTION: f64 = 0.10;

fn padded_grid(grid: &Grid3, pre: usize, post: usize) -> Result<Grid3> {
    let dims = grid.dims();
    let spacing = grid.spacing();
    let new_dims = dims.map(|n| if n > 1 { n + pre + post } else { n });
    let fov = [0, 1, 2].map(|a| if dims[a] > 1 { new_dims[a] as f64 * spacing[a] } else { grid.fov()[a] });
    Grid3::new(new_dims, fov)
}

/// Embeds a plane into a larger zero plane at offset `pre` on each active axis.
pub fn pad_plane(data: &[f64], grid: &Grid3, pre: usize, post: usize) -> (Vec<f64>, Grid3) {
    let out_grid = padded_grid(grid, pre, post).expect("padding keeps the grid valid");
    let [nx, ny, nz] = grid.dims();
    let off = grid.dims().map(|n| if n > 1 { pre } else { 0 });
    let mut out = vec![0.0; out_grid.len()];
    for z in 0..nz {
        for y in 0..ny {
            let src = grid.linear_index(0, y, z);
            let dst = out_grid.linear_index(off[0], y + off[1], z + off[2]);
            out[dst..dst + nx].copy_from_slice(&data[src..src + nx]);
        }
    }
    (out, out_grid)
}

/// Inverse of [`pad_plane`].
pub fn crop_plane(data: &[f64], grid: &Grid3, pre: usize, post: usize) -> Result<(Vec<f64>, Grid3)> {
    let dims = grid.dims();
    if dims.iter().any(|&n| n > 1 && n <= pre + post) {
        return Err(domain(format!("cannot crop {pre}+{post} voxels from grid {dims:?}")));
    }
    let spacing = grid.spacing();
    let new_dims = dims.map(|n| if n > 1 { n - pre - post } else { n });
    let fov = [0, 1, 2].map(|a| if dims[a] > 1 { new_dims[a] as f64 * spacing[a] } else { grid.fov()[a] });
    let out_grid = Grid3::new(new_dims, fov)?;
    let off = dims.map(|n| if n > 1 { pre } else { 0 });
    let mut out = vec![0.0; out_grid.len()];
    for z in 0..new_dims[2] {
        for y in 0..new_dims[1] {
            let src = grid.linear_index(off[0], y + off[1], z + off[2]);
            let dst = out_grid.linear_index(0, y, z);
            out[dst..dst + new_dims[0]].copy_from_slice(&data[src..src + new_dims[0]]);
        }
    }
    Ok((out, out_grid))
}

/// Keeps voxels at indices `0, r, 2r, …` on every active axis.
pub fn decimate_plane(data: &[f64], grid: &Grid3, ratio: usize) -> Result<(Vec<f64>, Grid3)> {
    if ratio == 0 {
        return Err(domain("ratio must be >= 1"));
    }
    let dims = grid.dims();
    if dims.iter().any(|&n| n > 1 && n % ratio != 0) {
        return Err(domain(format!("grid {dims:?} is not divisible by ratio {ratio}")));
    }
    let step = dims.map(|n| if n > 1 { ratio } else { 1 });
    let out_grid = Grid3::new([0, 1, 2].map(|a| dims[a] / step[a]), grid.fov())?;
    let [ox, oy, oz] = out_grid.dims();
    let mut out = Vec::with_capacity(out_grid.len());
    for z in 0..oz {
        for y in 0..oy {
            for x in 0..ox {
                out.push(data[grid.linear_index(x * step[0], y * step[1], z * step[2])]);
            }
        }
    }
    Ok((out, out_grid))
}

fn map_planes<F>(sm: &SystemMatrix, f: F) -> Result<SystemMatrix>
where
    F: Fn(&[f64]) -> Result<(Vec<f64>, Grid3)>,
{
    let mut out_grid = None;
    let mut rows = Vec::with_capacity(sm.n_rows());
    for row in sm.rows() {
        let (re, g) = f(row.re())?;
        let (im, _) = f(row.im())?;
        out_grid = Some(g);
        rows.push(row.with_values(re, im)?);
    }
    let grid = match out_grid {
        Some(g) => g,
        None => f(&vec![0.0; sm.grid().len()])?.1,
    };
    SystemMatrix::new(grid, rows, sm.provenance())
}

pub fn zero_pad(sm: &SystemMatrix, pre: usize, post: usize) -> Result<SystemMatrix> {
    let grid = *sm.grid();
    map_planes(sm, |p| Ok(pad_plane(p, &grid, pre, post)))
}

pub fn crop(sm: &SystemMatrix, pre: usize, post: usize) -> Result<SystemMatrix> {
    let grid = *sm.grid();
    map_planes(sm, |p| crop_plane(p, &grid, pre, post))
}

pub fn crop_phantom(ph: &Phantom, pre: usize, post: usize) -> Result<Phantom> {
    let (c, g) = crop_plane(ph.values(), ph.grid(), pre, post)?;
    Phantom::new(g, c)
}

pub fn downsample_equidistant(sm: &SystemMatrix, ratio: usize) -> Result<SystemMatrix> {
    let grid = *sm.grid();
    map_planes(sm, |p| decimate_plane(p, &grid, ratio))
}

/// `‖row‖² / (σ² N)`: row energy over the expected energy of complex noise
/// with `E|n|² = σ²` per voxel.
pub fn estimate_snr(row: &SMRow, sigma: f64) -> f64 {
    let noise = sigma * sigma * row.len() as f64;
    if noise == 0.0 {
        f64::INFINITY
    } else {
        row.norm_sqr() / noise
    }
}

/// Adds circular complex Gaussian noise with `E|n|² = σ²` to every entry.
pub fn add_noise(sm: &SystemMatrix, sigma: f64, seed: u64) -> Result<SystemMatrix> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(domain("noise level must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma / std::f64::consts::SQRT_2).expect("valid std");
    sm.map_rows(*sm.grid(), sm.provenance(), |row| {
        let re = row.re().iter().map(|v| v + normal.sample(&mut rng)).collect();
        let im = row.im().iter().map(|v| v + normal.sample(&mut rng)).collect();
        row.with_values(re, im)
    })
}

/// Keeps rows with `snr > 3` and `freq_index ≥ f_min_index`, in order.
pub fn snr_filter(sm: &SystemMatrix, row_snr: &[f64], f_min_index: u32) -> Result<SystemMatrix> {
    if row_snr.len() != sm.n_rows() {
        return Err(domain(format!("{} SNR values for {} rows", row_snr.len(), sm.n_rows())));
    }
    let rows = sm
        .rows()
        .iter()
        .zip(row_snr)
        .filter(|(row, &snr)| snr > SNR_THRESHOLD && row.freq_index() >= f_min_index)
        .map(|(row, _)| row.clone())
        .collect();
    SystemMatrix::new(*sm.grid(), rows, sm.provenance())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub lr: SMRow,
    pub hr: SMRow,
    pub split: Split,
}

/// LR/HR row pairs. `padding` records the zero padding applied to the HR
/// grid so evaluation can be restricted to the original voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub lr_grid: Grid3,
    pub hr_grid: Grid3,
    pub ratio: usize,
    pub padding: (usize, usize),
    pub pairs: Vec<Pair>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn count(&self, split: Split) -> usize {
        self.pairs.iter().filter(|p| p.split == split).count()
    }

    pub fn iter_split(&self, split: Split) -> impl Iterator<Item = &Pair> + '_ {
        self.pairs.iter().filter(move |p| p.split == split)
    }

    pub fn lr_matrix(&self) -> Result<SystemMatrix> {
        SystemMatrix::new(self.lr_grid, self.pairs.iter().map(|p| p.lr.clone()).collect(), Provenance::Loaded)
    }

    pub fn hr_matrix(&self) -> Result<SystemMatrix> {
        SystemMatrix::new(self.hr_grid, self.pairs.iter().map(|p| p.hr.clone()).collect(), Provenance::Loaded)
    }
}

/// Pairs every (already padded) HR row with its decimated LR counterpart.
pub fn build_pairs(hr: &SystemMatrix, ratio: usize, padding: (usize, usize)) -> Result<PairSet> {
    if ![1, 2, 4].contains(&ratio) {
        return Err(domain(format!("unsupported ratio {ratio}")));
    }
    let lr = downsample_equidistant(hr, ratio)?;
    Ok(PairSet {
        lr_grid: *lr.grid(),
        hr_grid: *hr.grid(),
        ratio,
        padding,
        pairs: lr
            .into_rows()
            .into_iter()
            .zip(hr.rows().iter().cloned())
            .map(|(lr, hr)| Pair { lr, hr, split: Split::Train })
            .collect(),
    })
}

/// Filter-then-pad-then-decimate: the full pair-generation protocol.
pub fn prepare_pairs(sm: &SystemMatrix, ratio: usize) -> Result<PairSet> {
    let padded = zero_pad(sm, PAD_PRE, PAD_POST)?;
    build_pairs(&padded, ratio, (PAD_PRE, PAD_POST))
}

/// Seeded shuffle; the first `round(fraction · n)` shuffled pairs become validation.
pub fn split_pairs(set: &PairSet, validation_fraction: f64, seed: u64) -> Result<PairSet> {
    if set.len() < 10 {
        return Err(domain(format!("need at least 10 pairs to split, got {}", set.len())));
    }
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(domain("validation fraction must lie in [0, 1)"));
    }
    let n_val = (validation_fraction * set.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = set.clone();
    for p in out.pairs.iter_mut() {
        p.split = Split::Train;
    }
    for &i in &order[..n_val] {
        out.pairs[i].split = Split::Validation;
    }
    Ok(out)
}

/// Element of the axis-aligned rotation/flip group: output axis `a` reads
/// input axis `perm[a]`, mirrored when `flip[a]` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSymmetry {
    pub perm: [usize; 3],
    pub flip: [bool; 3],
}

impl GridSymmetry {
    pub const IDENTITY: GridSymmetry = GridSymmetry { perm: [0, 1, 2], flip: [false; 3] };

    pub fn flip_axis(axis: usize) -> Self {
        let mut g = Self::IDENTITY;
        g.flip[axis] = true;
        g
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &GridSymmetry) -> GridSymmetry {
        GridSymmetry {
            perm: self.perm.map(|p| first.perm[p]),
            flip: [0, 1, 2].map(|a| self.flip[a] ^ first.flip[self.perm[a]]),
        }
    }

    pub fn output_dims(&self, dims: [usize; 3]) -> [usize; 3] {
        self.perm.map(|p| dims[p])
    }

    /// Transforms one plane laid out over `dims`.
    pub fn apply_plane<T: Copy + Default>(&self, data: &[T], dims: [usize; 3]) -> Vec<T> {
        let od = self.output_dims(dims);
        let mut out = vec![T::default(); data.len()];
        let mut idx = 0;
        for z in 0..od[2] {
            for y in 0..od[1] {
                for x in 0..od[0] {
                    let q = [x, y, z];
                    let mut p = [0usize; 3];
                    for a in 0..3 {
                        let v = if self.flip[a] { od[a] - 1 - q[a] } else { q[a] };
                        p[self.perm[a]] = v;
                    }
                    out[idx] = data[(p[2] * dims[1] + p[1]) * dims[0] + p[0]];
                    idx += 1;
                }
            }
        }
        out
    }

    pub fn apply_row(&self, row: &SMRow, dims: [usize; 3]) -> SMRow {
        row.with_values(self.apply_plane(row.re(), dims), self.apply_plane(row.im(), dims))
            .expect("permutation keeps values finite")
    }

    pub fn apply_complex(&self, data: &[Complex64], dims: [usize; 3]) -> Vec<Complex64> {
        self.apply_plane(data, dims)
    }
}

/// Shape-preserving group elements for a grid: axes may only be exchanged
/// with axes of equal extent, and only axes with more than one voxel flip.
pub fn symmetry_group(dims: [usize; 3]) -> Vec<GridSymmetry> {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::new();
    for perm in PERMS {
        if (0..3).any(|a| dims[perm[a]] != dims[a]) {
            continue;
        }
        for mask in 0..8u8 {
            let flip = [0, 1, 2].map(|a| mask & (1 << a) != 0);
            if (0..3).any(|a| flip[a] && dims[a] < 2) {
                continue;
            }
            out.push(GridSymmetry { perm, flip });
        }
    }
    out
}

pub fn augment_with(pair: &Pair, g: &GridSymmetry, lr_dims: [usize; 3], hr_dims: [usize; 3]) -> Pair {
    Pair { lr: g.apply_row(&pair.lr, lr_dims), hr: g.apply_row(&pair.hr, hr_dims), split: pair.split }
}

/// Applies one seeded random group element jointly to the LR and HR rows.
pub fn augment(pair: &Pair, lr_grid: &Grid3, hr_grid: &Grid3, seed: u64) -> (Pair, GridSymmetry) {
    let g = random_symmetry(lr_grid.dims(), &mut ChaCha8Rng::seed_from_u64(seed));
    (augment_with(pair, &g, lr_grid.dims(), hr_grid.dims()), g)
}

/// Transforms the unpadded HR data and derives the LR row again by padding
/// and decimation, so the LR samples stay on the HR decimation lattice.
/// Transforming LR and HR independently (as [`augment_with`] does) shifts
/// the lattice by `r − 1` voxels under a flip.
pub fn augment_resampled(pair: &Pair, g: &GridSymmetry, set: &PairSet) -> Result<Pair> {
    let (pre, post) = set.padding;
    let hr_grid = set.hr_grid;
    let crop = |p: &[f64]| crop_plane(p, &hr_grid, pre, post);
    let (re, data_grid) = crop(pair.hr.re())?;
    let (im, _) = crop(pair.hr.im())?;
    let dims = data_grid.dims();
    if g.output_dims(dims) != dims {
        return Err(domain("augmentation must preserve the data shape"));
    }
    let (re, _) = pad_plane(&g.apply_plane(&re, dims), &data_grid, pre, post);
    let (im, _) = pad_plane(&g.apply_plane(&im, dims), &data_grid, pre, post);
    let (lre, _) = decimate_plane(&re, &hr_grid, set.ratio)?;
    let (lim, _) = decimate_plane(&im, &hr_grid, set.ratio)?;
    Ok(Pair { lr: pair.lr.with_values(lre, lim)?, hr: pair.hr.with_values(re, im)?, split: pair.split })
}

/// Shape of the unpadded HR data of a pair set.
pub fn data_dims(set: &PairSet) -> [usize; 3] {
    let (pre, post) = set.padding;
    set.hr_grid.dims().map(|n| if n > 1 { n - pre - post } else { n })
}

pub fn random_symmetry<R: Rng>(dims: [usize; 3], rng: &mut R) -> GridSymmetry {
    let group = symmetry_group(dims);
    group[rng.random_range(0..group.len())]
}
