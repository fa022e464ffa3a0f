/// Dense feature map laid out as `[channel][z][y][x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, dims: [usize; 3]) -> Self {
        Tensor { channels, dims, data: vec![0.0; channels * dims[0] * dims[1] * dims[2]] }
    }

    pub fn from_vec(channels: usize, dims: [usize; 3], data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * dims[0] * dims[1] * dims[2], "tensor size mismatch");
        Tensor { channels, dims, data }
    }

    /// Stacks equally sized planes as channels.
    pub fn from_planes(dims: [usize; 3], planes: &[&[f64]]) -> Self {
        let mut data = Vec::with_capacity(planes.len() * dims.iter().product::<usize>());
        for p in planes {
            data.extend_from_slice(p);
        }
        Self::from_vec(planes.len(), dims, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn plane_len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Channel-wise concatenation.
    pub fn concat(parts: &[&Tensor]) -> Tensor {
        let dims = parts[0].dims;
        let mut data = Vec::with_capacity(parts.iter().map(|t| t.data.len()).sum());
        let mut channels = 0;
        for t in parts {
            assert_eq!(t.dims, dims, "concat dims mismatch");
            data.extend_from_slice(&t.data);
            channels += t.channels;
        }
        Tensor { channels, dims, data }
    }

    /// Channels `start..start + count` as a new tensor.
    pub fn slice_channels(&self, start: usize, count: usize) -> Tensor {
        let n = self.plane_len();
        Tensor { channels: count, dims: self.dims, data: self.data[start * n..(start + count) * n].to_vec() }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &Tensor) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn leaky_relu(t: &Tensor, slope: f64) -> Tensor {
    Tensor { channels: t.channels, dims: t.dims, data: t.data.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect() }
}

/// Gradient through a leaky rectifier given its pre-activation.
pub fn leaky_relu_backward(pre: &Tensor, grad: &mut Tensor, slope: f64) {
    for (g, &p) in grad.data.iter_mut().zip(&pre.data) {
        if p <= 0.0 {
            *g *= slope;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_and_slice() {
        let a = Tensor::from_vec(1, [2, 1, 1], vec![1.0, 2.0]);
        let b = Tensor::from_vec(2, [2, 1, 1], vec![3.0, 4.0, 5.0, 6.0]);
        let c = Tensor::concat(&[&a, &b]);
        assert_eq!(c.channels(), 3);
        assert_eq!(c.channel(2), &[5.0, 6.0]);
        assert_eq!(c.slice_channels(1, 2), b);
    }

    #[test]
    fn leaky_values() {
        let t = Tensor::from_vec(1, [3, 1, 1], vec![-2.0, 0.0, 3.0]);
        assert_eq!(leaky_relu(&t, 0.2).data(), &[-0.4, 0.0, 3.0]);
        let mut g = Tensor::from_vec(1, [3, 1, 1], vec![1.0; 3]);
        leaky_relu_backward(&t, &mut g, 0.2);
        assert_eq!(g.data(), &[0.2, 0.2, 1.0]);
    }
}
