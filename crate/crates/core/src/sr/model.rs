//! Position-prior-guided super-resolution network with hand-written
//! reverse-mode gradients.
//!
//! Layout: head conv, `B` residual-dense blocks, trunk conv with an outer
//! residual, fixed upsampling, readout conv. All parameters live in one flat
//! vector so the optimizer and the finite-difference checks can treat the
//! model as a plain function of `ℝ^P`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::ConvSpec;
use super::encoding::{pos_embedding, PositionEncoding};
use super::resample::{Interpolation, Resampler};
use super::tensor::{leaky_relu, leaky_relu_backward, Tensor};
use crate::error::{domain, Result};
use crate::model::SMRow;

pub const RESIDUAL_SCALE: f64 = 0.2;
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub encoding: PositionEncoding,
    pub upsample: Interpolation,
    pub blocks: usize,
    pub dense_stages: usize,
    pub channels: usize,
    pub ratio: usize,
    pub lr_dims: [usize; 3],
    pub residual_scale: f64,
    pub leaky_slope: f64,
}

impl ModelConfig {
    /// Desk-scale defaults: two blocks of three dense stages, 16 feature channels.
    pub fn new(encoding: PositionEncoding, upsample: Interpolation, ratio: usize, lr_dims: [usize; 3]) -> Self {
        ModelConfig {
            encoding,
            upsample,
            blocks: 2,
            dense_stages: 3,
            channels: 16,
            ratio,
            lr_dims,
            residual_scale: RESIDUAL_SCALE,
            leaky_slope: LEAKY_SLOPE,
        }
    }

    pub fn with_size(mut self, blocks: usize, dense_stages: usize, channels: usize) -> Self {
        self.blocks = blocks;
        self.dense_stages = dense_stages;
        self.channels = channels;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if ![1, 2, 4].contains(&self.ratio) {
            return Err(domain(format!("unsupported ratio {}", self.ratio)));
        }
        if self.channels < 2 {
            return Err(domain("feature channels must be >= 2"));
        }
        if self.blocks > 0 && self.dense_stages == 0 {
            return Err(domain("dense blocks need at least one stage"));
        }
        if self.lr_dims.contains(&0) {
            return Err(domain("LR dims must be >= 1"));
        }
        if !(self.residual_scale.is_finite() && self.leaky_slope.is_finite()) {
            return Err(domain("non-finite model constants"));
        }
        Ok(())
    }

    pub fn kernel(&self) -> [usize; 3] {
        self.lr_dims.map(|n| if n > 1 { 3 } else { 1 })
    }

    pub fn hr_dims(&self) -> [usize; 3] {
        self.lr_dims.map(|n| if n > 1 { n * self.ratio } else { n })
    }
}

#[derive(Debug, Clone)]
struct Block {
    stages: Vec<ConvSpec>,
    fusion: ConvSpec,
}

#[derive(Debug, Clone)]
struct Layout {
    head: ConvSpec,
    blocks: Vec<Block>,
    trunk: Option<ConvSpec>,
    readout: ConvSpec,
    n_params: usize,
}

impl Layout {
    fn new(cfg: &ModelConfig) -> Self {
        let k = cfg.kernel();
        let c = cfg.channels;
        let mut offset = 0;
        let mut take = |cin, cout, kernel| {
            let s = ConvSpec::new(cin, cout, kernel, offset);
            offset += s.n_params();
            s
        };
        let head = take(cfg.encoding.input_channels(), c, k);
        let blocks = (0..cfg.blocks)
            .map(|_| {
                let stages = (0..cfg.dense_stages).map(|s| take(c * (s + 1), c, k)).collect();
                let fusion = take(c * (cfg.dense_stages + 1), c, [1, 1, 1]);
                Block { stages, fusion }
            })
            .collect();
        let trunk = (cfg.blocks > 0).then(|| take(c, c, k));
        let readout = take(c, 2, k);
        Layout { head, blocks, trunk, readout, n_params: offset }
    }

    fn convs(&self) -> Vec<ConvSpec> {
        let mut v = vec![self.head];
        for b in &self.blocks {
            v.extend(b.stages.iter().copied());
            v.push(b.fusion);
        }
        v.extend(self.trunk);
        v.push(self.readout);
        v
    }
}

struct BlockCache {
    input: Tensor,
    pre: Vec<Tensor>,
    feats: Vec<Tensor>,
}

struct Cache {
    x: Tensor,
    blocks: Vec<BlockCache>,
    body: Tensor,
    up: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SRModel {
    config: ModelConfig,
    params: Vec<f64>,
}

impl SRModel {
    /// All parameters zero: the network maps everything to zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let n = Layout::new(&config).n_params;
        Ok(SRModel { config, params: vec![0.0; n] })
    }

    /// Head and readout pass the real and imaginary channels through; every
    /// other parameter is zero.
    pub fn identity(config: ModelConfig) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        m.add_identity();
        Ok(m)
    }

    /// Uniform fan-in initialisation plus the identity path, with the trunk
    /// and readout damped so training starts near the upsampled input.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        let layout = m.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for conv in layout.convs() {
            let bound = 1.0 / ((conv.cin * conv.taps()) as f64).sqrt();
            let damp = if Some(conv) == layout.trunk || conv == layout.readout { 0.1 } else { 1.0 };
            for co in 0..conv.cout {
                for ci in 0..conv.cin {
                    for t in 0..conv.taps() {
                        let w = damp * bound * rng.random_range(-1.0..1.0);
                        // the head's first two outputs stay a clean copy of the input
                        if conv == layout.head && co < 2 {
                            continue;
                        }
                        m.params[conv.offset + (co * conv.cin + ci) * conv.taps() + t] = w;
                    }
                }
            }
        }
        m.add_identity();
        Ok(m)
    }

    fn add_identity(&mut self) {
        let layout = self.layout();
        let centre = self.config.kernel().map(|k| k / 2);
        for c in 0..2 {
            self.params[layout.head.weight_index(c, c, centre)] += 1.0;
            self.params[layout.readout.weight_index(c, c, centre)] += 1.0;
        }
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let n = Layout::new(&config).n_params;
        if params.len() != n {
            return Err(domain(format!("expected {n} parameters, got {}", params.len())));
        }
        Ok(SRModel { config, params })
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn resampler(&self, dims: [usize; 3]) -> Resampler {
        Resampler::new(dims, self.config.ratio, self.config.upsample)
    }

    fn check_input(&self, x: &Tensor, ratio: usize) -> Result<()> {
        if ratio != self.config.ratio {
            return Err(domain(format!("model trained for ratio {}, asked for {ratio}", self.config.ratio)));
        }
        if x.channels() != self.config.encoding.input_channels() {
            return Err(domain(format!("model expects {} input channels, got {}", self.config.encoding.input_channels(), x.channels())));
        }
        Ok(())
    }

    fn run(&self, layout: &Layout, x: &Tensor, keep: bool) -> (Tensor, Option<Cache>) {
        let p = &self.params;
        let slope = self.config.leaky_slope;
        let h = layout.head.forward(p, x);
        let mut cur = h.clone();
        let mut caches = Vec::new();
        for block in &layout.blocks {
            let mut feats: Vec<Tensor> = Vec::with_capacity(block.stages.len());
            let mut pres = Vec::with_capacity(block.stages.len());
            for stage in &block.stages {
                let parts: Vec<&Tensor> = std::iter::once(&cur).chain(feats.iter()).collect();
                let pre = stage.forward(p, &Tensor::concat(&parts));
                feats.push(leaky_relu(&pre, slope));
                if keep {
                    pres.push(pre);
                }
            }
            let parts: Vec<&Tensor> = std::iter::once(&cur).chain(feats.iter()).collect();
            let fused = block.fusion.forward(p, &Tensor::concat(&parts));
            let mut next = cur.clone();
            next.axpy(self.config.residual_scale, &fused);
            let input = std::mem::replace(&mut cur, next);
            if keep {
                caches.push(BlockCache { input, pre: pres, feats });
            }
        }
        let body = match &layout.trunk {
            Some(trunk) => {
                let mut z = trunk.forward(p, &cur);
                z.add_assign(&h);
                z
            }
            None => cur.clone(),
        };
        let up = self.resampler(body.dims()).apply(&body);
        let y = layout.readout.forward(p, &up);
        let cache = keep.then(|| Cache { x: x.clone(), blocks: caches, body: cur, up });
        (y, cache)
    }

    pub fn forward(&self, x: &Tensor, ratio: usize) -> Result<Tensor> {
        self.check_input(x, ratio)?;
        Ok(self.run(&self.layout(), x, false).0)
    }

    /// Squared-error loss summed over the output, scaled by `weight`; the
    /// parameter gradient is accumulated into `grad`.
    fn accumulate(&self, layout: &Layout, x: &Tensor, target: &Tensor, weight: f64, grad: &mut [f64]) -> f64 {
        let p = &self.params;
        let slope = self.config.leaky_slope;
        let (y, cache) = self.run(layout, x, true);
        let cache = cache.expect("cache requested");
        assert_eq!(y.dims(), target.dims(), "target dims mismatch");
        let mut gy = y.clone();
        let mut loss = 0.0;
        for (g, t) in gy.data_mut().iter_mut().zip(target.data()) {
            let r = *g - t;
            loss += r * r;
            *g = 2.0 * weight * r;
        }
        let gu = layout.readout.backward(p, &cache.up, &gy, grad, true).expect("input grad");
        let gz = self.resampler(cache.body.dims()).adjoint(&gu);
        let mut gh = gz.clone();
        if let Some(trunk) = &layout.trunk {
            let mut gcur = trunk.backward(p, &cache.body, &gz, grad, true).expect("input grad");
            for (block, bc) in layout.blocks.iter().zip(&cache.blocks).rev() {
                let c = self.config.channels;
                let d = block.stages.len();
                let mut gfused = gcur.clone();
                gfused.scale(self.config.residual_scale);
                let parts: Vec<&Tensor> = std::iter::once(&bc.input).chain(bc.feats.iter()).collect();
                let gcat = block.fusion.backward(p, &Tensor::concat(&parts), &gfused, grad, true).expect("input grad");
                let mut ginput = gcur;
                ginput.add_assign(&gcat.slice_channels(0, c));
                let mut gfeats: Vec<Tensor> = (0..d).map(|s| gcat.slice_channels(c * (s + 1), c)).collect();
                for s in (0..d).rev() {
                    let mut gpre = gfeats[s].clone();
                    leaky_relu_backward(&bc.pre[s], &mut gpre, slope);
                    let parts: Vec<&Tensor> = std::iter::once(&bc.input).chain(bc.feats[..s].iter()).collect();
                    let gin = block.stages[s].backward(p, &Tensor::concat(&parts), &gpre, grad, true).expect("input grad");
                    ginput.add_assign(&gin.slice_channels(0, c));
                    for (j, gf) in gfeats.iter_mut().enumerate().take(s) {
                        gf.add_assign(&gin.slice_channels(c * (j + 1), c));
                    }
                }
                gcur = ginput;
            }
            gh.add_assign(&gcur);
        }
        layout.head.backward(p, &cache.x, &gh, grad, false);
        loss * weight
    }

    /// Maps an LR row to an HR row. Values are scaled by the row's peak
    /// modulus on the way in and restored on the way out.
    pub fn predict_row(&self, lr: &SMRow) -> Result<SMRow> {
        let dims = self.config.lr_dims;
        if lr.len() != dims.iter().product::<usize>() {
            return Err(domain(format!("row length {} does not match LR dims {dims:?}", lr.len())));
        }
        let scale = row_scale(lr);
        let x = pos_embedding(&lr.scaled(1.0 / scale), dims, self.config.encoding);
        let y = self.forward(&x, self.config.ratio)?;
        let n = y.plane_len();
        let data = y.into_data();
        let re = data[..n].iter().map(|v| v * scale).collect();
        let im = data[n..].iter().map(|v| v * scale).collect();
        SMRow::new(lr.channel(), lr.freq_index(), re, im)
    }
}

/// Peak modulus of a row, or 1 for an all-zero row.
pub fn row_scale(row: &SMRow) -> f64 {
    let m = row.max_modulus();
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// One training example: embedded input and 2-channel HR target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Tensor,
    pub target: Tensor,
}

impl Sample {
    /// Builds a normalised sample from an LR/HR row pair.
    pub fn from_rows(lr: &SMRow, hr: &SMRow, cfg: &ModelConfig) -> Sample {
        let s = 1.0 / row_scale(lr);
        let input = pos_embedding(&lr.scaled(s), cfg.lr_dims, cfg.encoding);
        let hr = hr.scaled(s);
        let target = Tensor::from_planes(cfg.hr_dims(), &[hr.re(), hr.im()]);
        Sample { input, target }
    }
}

/// Mean squared error over all HR voxels, both channels and the batch,
/// with its exact gradient.
pub fn loss_and_gradients(model: &SRModel, batch: &[Sample]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; model.n_params()];
    if batch.is_empty() {
        return (0.0, grad);
    }
    let layout = model.layout();
    let mut loss = 0.0;
    for s in batch {
        let weight = 1.0 / (s.target.data().len() * batch.len()) as f64;
        loss += model.accumulate(&layout, &s.input, &s.target, weight, &mut grad);
    }
    (loss, grad)
}

/// Loss only, for finite-difference checks.
pub fn batch_loss(model: &SRModel, batch: &[Sample]) -> f64 {
    let layout = model.layout();
    batch
        .iter()
        .map(|s| {
            let y = model.run(&layout, &s.input, false).0;
            let n = (s.target.data().len() * batch.len()) as f64;
            y.data().iter().zip(s.target.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn small(encoding: PositionEncoding, upsample: Interpolation, dims: [usize; 3]) -> ModelConfig {
        ModelConfig::new(encoding, upsample, 2, dims).with_size(1, 2, 3)
    }

    fn sample(cfg: &ModelConfig, seed: u64) -> Sample {
        let n: usize = cfg.lr_dims.iter().product();
        let lr = SMRow::new(crate::model::Channel::X, 1, pseudo(n, seed), pseudo(n, seed + 1)).unwrap();
        let m: usize = cfg.hr_dims().iter().product();
        let hr = SMRow::new(crate::model::Channel::X, 1, pseudo(m, seed + 2), pseudo(m, seed + 3)).unwrap();
        Sample::from_rows(&lr, &hr, cfg)
    }

    #[test]
    fn zero_model_outputs_zero() {
        let cfg = small(PositionEncoding::Symmetric, Interpolation::Linear, [4, 3, 1]);
        let m = SRModel::zeros(cfg).unwrap();
        let s = sample(&cfg, 1);
        let y = m.forward(&s.input, 2).unwrap();
        assert_eq!(y.dims(), [8, 6, 1]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_without_blocks_is_nearest_upsampling() {
        let cfg = small(PositionEncoding::None, Interpolation::Nearest, [3, 4, 1]).with_size(0, 0, 4);
        let m = SRModel::identity(cfg).unwrap();
        let s = sample(&cfg, 2);
        let y = m.forward(&s.input, 2).unwrap();
        let want = Resampler::new([3, 4, 1], 2, Interpolation::Nearest).apply(&s.input);
        assert_eq!(y, want);
    }

    #[test]
    fn ratio_mismatch_is_domain_error() {
        let cfg = small(PositionEncoding::None, Interpolation::Nearest, [3, 4, 1]);
        let m = SRModel::new(cfg, 1).unwrap();
        assert!(m.forward(&sample(&cfg, 3).input, 4).is_err());
        let mut bad = cfg;
        bad.ratio = 3;
        assert!(SRModel::zeros(bad).is_err());
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let cfg = small(PositionEncoding::Symmetric, Interpolation::Linear, [4, 4, 1]);
        let a = SRModel::new(cfg, 5).unwrap();
        assert_eq!(a, SRModel::new(cfg, 5).unwrap());
        assert_ne!(a, SRModel::new(cfg, 6).unwrap());
        let s = sample(&cfg, 4);
        assert_eq!(a.forward(&s.input, 2).unwrap(), a.forward(&s.input, 2).unwrap());
    }

    #[test]
    fn perfect_target_has_zero_loss_and_gradient() {
        let cfg = small(PositionEncoding::Symmetric, Interpolation::Linear, [4, 3, 1]);
        let m = SRModel::new(cfg, 3).unwrap();
        let mut s = sample(&cfg, 5);
        s.target = m.forward(&s.input, 2).unwrap();
        let (loss, grad) = loss_and_gradients(&m, &[s]);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_weight_gradient_closed_form() {
        // B = 0, one channel pair, weight w on the readout centre tap of
        // channel 0: y0 = w·up(h0), so dL/dw = 2·mean(residual·up(h0)).
        let cfg = small(PositionEncoding::None, Interpolation::Nearest, [3, 3, 1]).with_size(0, 0, 2);
        let m = SRModel::identity(cfg).unwrap();
        let s = sample(&cfg, 6);
        let y = m.forward(&s.input, 2).unwrap();
        let up = Resampler::new([3, 3, 1], 2, Interpolation::Nearest).apply(&s.input);
        let n = s.target.data().len() as f64;
        let want: f64 = (0..36).map(|i| 2.0 * (y.channel(0)[i] - s.target.channel(0)[i]) * up.channel(0)[i]).sum::<f64>() / n;
        let (_, grad) = loss_and_gradients(&m, &[s]);
        let layout = m.layout();
        let idx = layout.readout.weight_index(0, 0, [1, 1, 0]);
        assert!((grad[idx] - want).abs() < 1e-12 * want.abs().max(1.0));
    }

    fn check_gradients(cfg: ModelConfig) {
        let m = SRModel::new(cfg, 11).unwrap();
        let batch = [sample(&cfg, 20), sample(&cfg, 30)];
        let (loss, grad) = loss_and_gradients(&m, &batch);
        assert!((loss - batch_loss(&m, &batch)).abs() < 1e-12);
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for i in 0..m.n_params() {
            let mut a = m.clone();
            a.params_mut()[i] += h;
            let mut b = m.clone();
            b.params_mut()[i] -= h;
            let fd = (batch_loss(&a, &batch) - batch_loss(&b, &batch)) / (2.0 * h);
            let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }

    #[test]
    fn gradients_match_finite_differences_2d() {
        check_gradients(small(PositionEncoding::Symmetric, Interpolation::Linear, [4, 3, 1]));
    }

    #[test]
    fn gradients_match_finite_differences_3d() {
        check_gradients(small(PositionEncoding::Normalized, Interpolation::Nearest, [3, 2, 2]).with_size(1, 1, 2));
    }
}
