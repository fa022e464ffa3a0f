//! Zero-padded "same" cross-correlation with odd kernels, reading its
//! weights from a slice of the model's flat parameter vector.

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub cin: usize,
    pub cout: usize,
    /// Kernel extent per axis `[kx, ky, kz]`, each odd.
    pub kernel: [usize; 3],
    /// Position of the first weight in the parameter vector.
    pub offset: usize,
}

fn valid_range(n: usize, shift: isize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = (n as isize - shift).clamp(0, n as isize) as usize;
    (lo.min(hi), hi)
}

impl ConvSpec {
    pub fn new(cin: usize, cout: usize, kernel: [usize; 3], offset: usize) -> Self {
        assert!(kernel.iter().all(|k| k % 2 == 1), "kernel extents must be odd");
        ConvSpec { cin, cout, kernel, offset }
    }

    pub fn taps(&self) -> usize {
        self.kernel.iter().product()
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.taps()
    }

    pub fn n_params(&self) -> usize {
        self.weight_len() + self.cout
    }

    pub fn weight_index(&self, co: usize, ci: usize, tap: [usize; 3]) -> usize {
        let [kx, ky, _] = self.kernel;
        self.offset + (co * self.cin + ci) * self.taps() + (tap[2] * ky + tap[1]) * kx + tap[0]
    }

    pub fn bias_index(&self, co: usize) -> usize {
        self.offset + self.weight_len() + co
    }

    /// Calls `f(tap_index, shift, x_range, y_range, z_range)` for every kernel tap.
    fn for_each_tap(&self, dims: [usize; 3], mut f: impl FnMut(usize, [isize; 3], (usize, usize), (usize, usize), (usize, usize))) {
        let [kx, ky, kz] = self.kernel;
        let c = self.kernel.map(|k| (k / 2) as isize);
        let mut t = 0;
        for dz in 0..kz {
            for dy in 0..ky {
                for dx in 0..kx {
                    let s = [dx as isize - c[0], dy as isize - c[1], dz as isize - c[2]];
                    f(t, s, valid_range(dims[0], s[0]), valid_range(dims[1], s[1]), valid_range(dims[2], s[2]));
                    t += 1;
                }
            }
        }
    }

    pub fn forward(&self, params: &[f64], input: &Tensor) -> Tensor {
        assert_eq!(input.channels(), self.cin, "conv input channels");
        let dims = input.dims();
        let [nx, ny, _] = dims;
        let mut out = Tensor::zeros(self.cout, dims);
        let taps = self.taps();
        for co in 0..self.cout {
            let bias = params[self.bias_index(co)];
            let o = out.channel_mut(co);
            o.fill(bias);
            for ci in 0..self.cin {
                let inp = input.channel(ci);
                let wbase = self.offset + (co * self.cin + ci) * taps;
                self.for_each_tap(dims, |t, s, xr, yr, zr| {
                    let w = params[wbase + t];
                    if w == 0.0 {
                        return;
                    }
                    for z in zr.0..zr.1 {
                        for y in yr.0..yr.1 {
                            let ob = (z * ny + y) * nx;
                            let ib = ((z as isize + s[2]) as usize * ny + (y as isize + s[1]) as usize) * nx;
                            let src = &inp[(ib as isize + xr.0 as isize + s[0]) as usize..][..xr.1 - xr.0];
                            for (a, b) in o[ob + xr.0..ob + xr.1].iter_mut().zip(src) {
                                *a += w * b;
                            }
                        }
                    }
                });
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    pub fn backward(&self, params: &[f64], input: &Tensor, grad_out: &Tensor, grad: &mut [f64], need_input_grad: bool) -> Option<Tensor> {
        let dims = input.dims();
        let [nx, ny, _] = dims;
        let taps = self.taps();
        let mut gin = need_input_grad.then(|| Tensor::zeros(self.cin, dims));
        for co in 0..self.cout {
            let go = grad_out.channel(co);
            grad[self.bias_index(co)] += go.iter().sum::<f64>();
            for ci in 0..self.cin {
                let inp = input.channel(ci);
                let wbase = self.offset + (co * self.cin + ci) * taps;
                let mut gi = gin.as_mut().map(|g| g.channel_mut(ci));
                self.for_each_tap(dims, |t, s, xr, yr, zr| {
                    let w = params[wbase + t];
                    let mut acc = 0.0;
                    for z in zr.0..zr.1 {
                        for y in yr.0..yr.1 {
                            let ob = (z * ny + y) * nx;
                            let ib = ((z as isize + s[2]) as usize * ny + (y as isize + s[1]) as usize) * nx;
                            let is = (ib as isize + xr.0 as isize + s[0]) as usize;
                            let len = xr.1 - xr.0;
                            let g = &go[ob + xr.0..ob + xr.1];
                            let src = &inp[is..is + len];
                            for (a, b) in g.iter().zip(src) {
                                acc += a * b;
                            }
                            if let Some(gi) = gi.as_deref_mut() {
                                if w != 0.0 {
                                    for (d, a) in gi[is..is + len].iter_mut().zip(g) {
                                        *d += w * a;
                                    }
                                }
                            }
                        }
                    }
                    grad[wbase + t] += acc;
                });
            }
        }
        gin
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(spec: &ConvSpec, params: &[f64], input: &Tensor) -> Tensor {
        let dims = input.dims();
        let mut out = Tensor::zeros(spec.cout, dims);
        let c = spec.kernel.map(|k| (k / 2) as isize);
        for co in 0..spec.cout {
            for z in 0..dims[2] {
                for y in 0..dims[1] {
                    for x in 0..dims[0] {
                        let mut acc = params[spec.bias_index(co)];
                        for ci in 0..spec.cin {
                            for dz in 0..spec.kernel[2] {
                                for dy in 0..spec.kernel[1] {
                                    for dx in 0..spec.kernel[0] {
                                        let p = [x as isize + dx as isize - c[0], y as isize + dy as isize - c[1], z as isize + dz as isize - c[2]];
                                        if (0..3).all(|a| p[a] >= 0 && p[a] < dims[a] as isize) {
                                            let v = input.channel(ci)[((p[2] as usize * dims[1]) + p[1] as usize) * dims[0] + p[0] as usize];
                                            acc += params[spec.weight_index(co, ci, [dx, dy, dz])] * v;
                                        }
                                    }
                                }
                            }
                        }
                        out.channel_mut(co)[(z * dims[1] + y) * dims[0] + x] = acc;
                    }
                }
            }
        }
        out
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn matches_naive_correlation() {
        for kernel in [[3, 3, 1], [3, 3, 3], [1, 1, 1]] {
            let spec = ConvSpec::new(2, 3, kernel, 5);
            let params = pseudo(5 + spec.n_params(), 1);
            let input = Tensor::from_vec(2, [4, 3, 2], pseudo(48, 2));
            let a = spec.forward(&params, &input);
            let b = naive(&spec, &params, &input);
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_is_adjoint() {
        // <conv(x) - b, g> = <x, conv^T(g)> and dL/dw via linearity
        let spec = ConvSpec::new(2, 2, [3, 3, 3], 0);
        let params = pseudo(spec.n_params(), 3);
        let input = Tensor::from_vec(2, [3, 4, 3], pseudo(72, 4));
        let g = Tensor::from_vec(2, [3, 4, 3], pseudo(72, 5));
        let mut nobias = params.clone();
        for co in 0..2 {
            nobias[spec.bias_index(co)] = 0.0;
        }
        let y = spec.forward(&nobias, &input);
        let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let mut grad = vec![0.0; spec.n_params()];
        let gin = spec.backward(&nobias, &input, &g, &mut grad, true).unwrap();
        let rhs: f64 = input.data().iter().zip(gin.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        let wdot: f64 = grad[..spec.weight_len()].iter().zip(&nobias[..spec.weight_len()]).map(|(a, b)| a * b).sum();
        assert!((wdot - lhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }
}
