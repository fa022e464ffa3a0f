use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{loss_and_gradients, SRModel, Sample};
use super::resample::upsampled_grid;
use crate::error::{domain, Error, Result};
use crate::metrics::nrmse_values;
use crate::model::{Grid3, Provenance, SMRow, SystemMatrix};
use crate::sampling::{augment_resampled, crop_plane, data_dims, random_symmetry, PairSet, Split};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a new best validation NRMSE.
    pub patience: usize,
    pub seed: u64,
    /// Random rotations and flips of each training pair.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 1e-3, batch_size: 8, max_epochs: 100, patience: 20, seed: 0, augment: true }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(domain("learning rate must be > 0"));
        }
        if self.batch_size == 0 || self.patience == 0 {
            return Err(domain("batch size and patience must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_nrmse: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl History {
    pub fn best_val_nrmse(&self) -> Option<f64> {
        let e = self.best_epoch?;
        self.records.iter().find(|r| r.epoch == e).map(|r| r.val_nrmse)
    }
}

fn check_compatible(model: &SRModel, pairs: &PairSet) -> Result<()> {
    let cfg = model.config();
    if cfg.ratio != pairs.ratio {
        return Err(domain(format!("model ratio {} does not match pair ratio {}", cfg.ratio, pairs.ratio)));
    }
    if cfg.lr_dims != pairs.lr_grid.dims() || cfg.hr_dims() != pairs.hr_grid.dims() {
        return Err(domain(format!("model dims {:?} do not match pairs {:?}", cfg.lr_dims, pairs.lr_grid.dims())));
    }
    Ok(())
}


/// Mean NRMSE of predicted against true HR rows over the unpadded region.
pub fn mean_cropped_nrmse(model: &SRModel, rows: &[(&SMRow, &SMRow)], hr_grid: &Grid3, padding: (usize, usize)) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for (lr, hr) in rows {
        let pred = model.predict_row(lr)?;
        let crop = |plane: &[f64]| crop_plane(plane, hr_grid, padding.0, padding.1).map(|c| c.0);
        let (pr, pi, tr, ti) = (crop(pred.re())?, crop(pred.im())?, crop(hr.re())?, crop(hr.im())?);
        match nrmse_values(&pr, &pi, &tr, &ti) {
            Ok(v) => {
                total += v;
                count += 1;
            }
            Err(Error::DegenerateRange) => {}
            Err(e) => return Err(e),
        }
    }
    if count == 0 {
        return Err(Error::DegenerateRange);
    }
    Ok(total / count as f64)
}

/// Adam on the mean-squared error; returns the parameters with the lowest
/// validation NRMSE seen across epochs.
pub fn train(model: &SRModel, pairs: &PairSet, cfg: &TrainConfig) -> Result<(SRModel, History)> {
    cfg.validate()?;
    check_compatible(model, pairs)?;
    let train_idx: Vec<usize> = (0..pairs.len()).filter(|&i| pairs.pairs[i].split == Split::Train).collect();
    let val: Vec<(&SMRow, &SMRow)> = pairs.iter_split(Split::Validation).map(|p| (&p.lr, &p.hr)).collect();
    if train_idx.is_empty() || val.is_empty() {
        return Err(domain("training needs non-empty train and validation splits"));
    }
    let mut history = History::default();
    if cfg.max_epochs == 0 {
        return Ok((model.clone(), history));
    }
    let mcfg = *model.config();
    let plain: Vec<Sample> = pairs.pairs.iter().map(|p| Sample::from_rows(&p.lr, &p.hr, &mcfg)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = model.clone();
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut adam = Adam::new(model.n_params(), cfg.learning_rate);
    let mut order = train_idx.clone();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Sample> = chunk
                .iter()
                .map(|&i| {
                    if cfg.augment {
                        let g = random_symmetry(data_dims(pairs), &mut rng);
                        let p = augment_resampled(&pairs.pairs[i], &g, pairs)?;
                        Ok(Sample::from_rows(&p.lr, &p.hr, &mcfg))
                    } else {
                        Ok(plain[i].clone())
                    }
                })
                .collect::<Result<_>>()?;
            let (loss, grad) = loss_and_gradients(&current, &batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
            loss_sum += loss * chunk.len() as f64;
            adam.step(current.params_mut(), &grad);
        }
        if current.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        let val_nrmse = mean_cropped_nrmse(&current, &val, &pairs.hr_grid, pairs.padding)?;
        if !val_nrmse.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.records.push(EpochRecord { epoch, train_loss: loss_sum / order.len() as f64, val_nrmse });
        if val_nrmse < best_val {
            best_val = val_nrmse;
            best = current.clone();
            history.best_epoch = Some(epoch);
        } else if epoch - history.best_epoch.unwrap_or(0) >= cfg.patience {
            break;
        }
    }
    Ok((best, history))
}

/// Applies the model row by row; row order is preserved.
pub fn recover(model: &SRModel, lr_sm: &SystemMatrix, ratio: usize) -> Result<SystemMatrix> {
    let cfg = model.config();
    if ratio != cfg.ratio {
        return Err(domain(format!("model trained for ratio {}, asked for {ratio}", cfg.ratio)));
    }
    if lr_sm.grid().dims() != cfg.lr_dims {
        return Err(domain(format!("LR grid {:?} does not match model dims {:?}", lr_sm.grid().dims(), cfg.lr_dims)));
    }
    let grid = upsampled_grid(lr_sm.grid(), ratio)?;
    let rows = lr_sm.rows().iter().map(|r| model.predict_row(r)).collect::<Result<Vec<_>>>()?;
    SystemMatrix::new(grid, rows, Provenance::Recovered)
}
