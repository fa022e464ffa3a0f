use std::fmt;
use std::str::FromStr;

use super::tensor::Tensor;
use crate::error::{domain, Error, Result};
use crate::model::SMRow;

/// Coordinate channels appended to the LR row before the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PositionEncoding {
    /// No coordinates; two input channels.
    None,
    /// Ramps scaled to `[0, 1]`.
    Normalized,
    /// Ramps scaled to `[-1, 1]`, centred on the field of view.
    Symmetric,
}

impl PositionEncoding {
    pub fn input_channels(self) -> usize {
        match self {
            PositionEncoding::None => 2,
            _ => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PositionEncoding::None => "none",
            PositionEncoding::Normalized => "normalized",
            PositionEncoding::Symmetric => "symmetric",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            PositionEncoding::None => 0,
            PositionEncoding::Normalized => 1,
            PositionEncoding::Symmetric => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(PositionEncoding::None),
            1 => Ok(PositionEncoding::Normalized),
            2 => Ok(PositionEncoding::Symmetric),
            _ => Err(Error::Format(format!("unknown encoding code {code}"))),
        }
    }

    /// Coordinate of index `p` on an axis of `n` voxels.
    pub fn coordinate(self, p: usize, n: usize) -> f64 {
        if n < 2 {
            return 0.0;
        }
        let u = p as f64 / (n - 1) as f64;
        match self {
            PositionEncoding::None => 0.0,
            PositionEncoding::Normalized => u,
            PositionEncoding::Symmetric => 2.0 * u - 1.0,
        }
    }
}

impl fmt::Display for PositionEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PositionEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(PositionEncoding::None),
            "normalized" | "norm" => Ok(PositionEncoding::Normalized),
            "symmetric" | "sym" => Ok(PositionEncoding::Symmetric),
            other => Err(domain(format!("unknown position encoding '{other}'"))),
        }
    }
}

/// Appends coordinate planes to a 2-channel `[re, im]` tensor.
pub fn embed_tensor(values: &Tensor, mode: PositionEncoding) -> Tensor {
    assert_eq!(values.channels(), 2, "embedding expects real and imaginary channels");
    if mode == PositionEncoding::None {
        return values.clone();
    }
    let dims = values.dims();
    let mut out = Tensor::zeros(5, dims);
    out.channel_mut(0).copy_from_slice(values.channel(0));
    out.channel_mut(1).copy_from_slice(values.channel(1));
    for axis in 0..3 {
        let plane = out.channel_mut(2 + axis);
        let mut i = 0;
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    plane[i] = mode.coordinate([x, y, z][axis], dims[axis]);
                    i += 1;
                }
            }
        }
    }
    out
}

/// Channel order `[re, im, i, j, k]`, or `[re, im]` for `None`.
pub fn pos_embedding(lr: &SMRow, dims: [usize; 3], mode: PositionEncoding) -> Tensor {
    embed_tensor(&Tensor::from_planes(dims, &[lr.re(), lr.im()]), mode)
}
