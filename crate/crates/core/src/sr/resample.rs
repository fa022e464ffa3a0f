//! Separable upsampling on the decimation lattice: LR sample `p` sits at HR
//! index `r·p`. Positions past the last LR sample use linear extrapolation.

use std::fmt;
use std::str::FromStr;

use super::tensor::Tensor;
use crate::error::{domain, Error, Result};
use crate::model::{Grid3, Provenance, SystemMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Interpolation {
    Nearest,
    Linear,
    Cubic,
}

impl Interpolation {
    pub fn name(self) -> &'static str {
        match self {
            Interpolation::Nearest => "nearest",
            Interpolation::Linear => "trilinear",
            Interpolation::Cubic => "tricubic",
        }
    }
}

impl fmt::Display for Interpolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nearest" => Ok(Interpolation::Nearest),
            "linear" | "trilinear" | "bilinear" => Ok(Interpolation::Linear),
            "cubic" | "tricubic" | "bicubic" => Ok(Interpolation::Cubic),
            other => Err(domain(format!("unknown interpolation method '{other}'"))),
        }
    }
}

type Taps = Vec<Vec<(usize, f64)>>;

/// Sample `i` of the LR signal, linearly extended beyond both ends.
fn extended(i: isize, n: usize) -> Vec<(usize, f64)> {
    if n == 1 {
        return vec![(0, 1.0)];
    }
    let last = n as isize - 1;
    if i < 0 {
        let t = i as f64;
        vec![(0, 1.0 - t), (1, t)]
    } else if i > last {
        let m = (i - last) as f64;
        vec![(n - 1, 1.0 + m), (n - 2, -m)]
    } else {
        vec![(i as usize, 1.0)]
    }
}

fn keys_cubic(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Per-HR-index interpolation taps for one axis. Flat axes (`n == 1`) stay flat.
pub fn axis_taps(n_lr: usize, ratio: usize, method: Interpolation) -> Taps {
    if n_lr == 1 {
        return vec![vec![(0, 1.0)]];
    }
    (0..n_lr * ratio)
        .map(|q| {
            let i0 = (q / ratio) as isize;
            let t = (q % ratio) as f64 / ratio as f64;
            let mut virt: Vec<(isize, f64)> = match method {
                Interpolation::Nearest => vec![(i0, 1.0)],
                Interpolation::Linear => vec![(i0, 1.0 - t), (i0 + 1, t)],
                Interpolation::Cubic => (-1..=2).map(|d| (i0 + d, keys_cubic(t - d as f64))).collect(),
            };
            virt.retain(|&(_, w)| w != 0.0);
            let mut taps: Vec<(usize, f64)> = Vec::new();
            for (i, w) in virt {
                for (j, v) in extended(i, n_lr) {
                    match taps.iter_mut().find(|(k, _)| *k == j) {
                        Some(e) => e.1 += w * v,
                        None => taps.push((j, w * v)),
                    }
                }
            }
            taps
        })
        .collect()
}

fn strides(dims: [usize; 3]) -> [usize; 3] {
    [1, dims[0], dims[0] * dims[1]]
}

fn apply_axis(data: &[f64], dims: [usize; 3], axis: usize, taps: &Taps) -> (Vec<f64>, [usize; 3]) {
    let mut od = dims;
    od[axis] = taps.len();
    let (is, os) = (strides(dims), strides(od));
    let mut out = vec![0.0; od.iter().product()];
    for z in 0..od[2] {
        for y in 0..od[1] {
            for x in 0..od[0] {
                let q = [x, y, z];
                let base: usize = (0..3).filter(|&a| a != axis).map(|a| q[a] * is[a]).sum();
                let acc: f64 = taps[q[axis]].iter().map(|&(j, w)| w * data[base + j * is[axis]]).sum();
                out[x * os[0] + y * os[1] + z * os[2]] = acc;
            }
        }
    }
    (out, od)
}

fn adjoint_axis(data: &[f64], dims: [usize; 3], axis: usize, taps: &Taps, n_lr: usize) -> (Vec<f64>, [usize; 3]) {
    let mut od = dims;
    od[axis] = n_lr;
    let (is, os) = (strides(dims), strides(od));
    let mut out = vec![0.0; od.iter().product()];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let q = [x, y, z];
                let v = data[x * is[0] + y * is[1] + z * is[2]];
                let base: usize = (0..3).filter(|&a| a != axis).map(|a| q[a] * os[a]).sum();
                for &(j, w) in &taps[q[axis]] {
                    out[base + j * os[axis]] += w * v;
                }
            }
        }
    }
    (out, od)
}

#[derive(Debug, Clone)]
pub struct Resampler {
    lr_dims: [usize; 3],
    hr_dims: [usize; 3],
    taps: [Taps; 3],
}

impl Resampler {
    pub fn new(lr_dims: [usize; 3], ratio: usize, method: Interpolation) -> Self {
        let taps = lr_dims.map(|n| axis_taps(n, ratio, method));
        let hr_dims = [taps[0].len(), taps[1].len(), taps[2].len()];
        Resampler { lr_dims, hr_dims, taps }
    }

    pub fn lr_dims(&self) -> [usize; 3] {
        self.lr_dims
    }

    pub fn hr_dims(&self) -> [usize; 3] {
        self.hr_dims
    }

    pub fn apply_plane(&self, data: &[f64]) -> Vec<f64> {
        let mut cur = data.to_vec();
        let mut dims = self.lr_dims;
        for a in 0..3 {
            if self.lr_dims[a] > 1 {
                (cur, dims) = apply_axis(&cur, dims, a, &self.taps[a]);
            }
        }
        cur
    }

    pub fn adjoint_plane(&self, data: &[f64]) -> Vec<f64> {
        let mut cur = data.to_vec();
        let mut dims = self.hr_dims;
        for a in (0..3).rev() {
            if self.lr_dims[a] > 1 {
                (cur, dims) = adjoint_axis(&cur, dims, a, &self.taps[a], self.lr_dims[a]);
            }
        }
        cur
    }

    pub fn apply(&self, t: &Tensor) -> Tensor {
        let mut data = Vec::with_capacity(t.channels() * self.hr_dims.iter().product::<usize>());
        for c in 0..t.channels() {
            data.extend(self.apply_plane(t.channel(c)));
        }
        Tensor::from_vec(t.channels(), self.hr_dims, data)
    }

    pub fn adjoint(&self, t: &Tensor) -> Tensor {
        let mut data = Vec::with_capacity(t.channels() * self.lr_dims.iter().product::<usize>());
        for c in 0..t.channels() {
            data.extend(self.adjoint_plane(t.channel(c)));
        }
        Tensor::from_vec(t.channels(), self.lr_dims, data)
    }
}

/// HR grid for an LR grid: `r` times the voxels on each active axis, same field of view.
pub fn upsampled_grid(lr: &Grid3, ratio: usize) -> Result<Grid3> {
    Grid3::new(lr.dims().map(|n| if n > 1 { n * ratio } else { n }), lr.fov())
}

/// Channel-wise interpolation of the real and imaginary planes of every row.
pub fn baseline_interpolate(lr_sm: &SystemMatrix, ratio: usize, method: Interpolation) -> Result<SystemMatrix> {
    if ratio == 0 {
        return Err(domain("ratio must be >= 1"));
    }
    let grid = upsampled_grid(lr_sm.grid(), ratio)?;
    let rs = Resampler::new(lr_sm.grid().dims(), ratio, method);
    lr_sm.map_rows(grid, Provenance::Recovered, |row| row.with_values(rs.apply_plane(row.re()), rs.apply_plane(row.im())))
}
