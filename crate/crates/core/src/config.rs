//! Line-based `key = value` run configuration.
//!
//! Blank lines and text after `#` are ignored. Keys must appear in [`KEYS`];
//! a key may be given only once per file. Values set later through
//! [`RunConfig::set`] (command-line overrides) replace file values.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::bench;
use crate::error::{Error, Result};
use crate::model::{Channel, Grid3, ParticleModel, ScanSequence};
use crate::recon::{KaczmarzConfig, RowOrder};
use crate::sr::{Interpolation, ModelConfig, PositionEncoding, TrainConfig};

/// Every accepted key with a short description.
pub const KEYS: &[(&str, &str)] = &[
    ("dimensionality", "number of driven axes: 1, 2 or 3"),
    ("gradient", "selection-field gradient in T/m, one value or one per axis"),
    ("amplitude", "drive amplitude in T, one value or one per axis"),
    ("dividers", "Lissajous frequency dividers, one per driven axis"),
    ("base_period", "base clock period in s"),
    ("time_samples", "samples per drive period"),
    ("channels", "receive channels, e.g. x,y"),
    ("k_min", "lowest frequency index to simulate"),
    ("k_max", "highest frequency index to simulate"),
    ("saturation_moment", "particle saturation moment"),
    ("langevin_scale", "Langevin argument scale in 1/T"),
    ("dims", "grid dimensions nx,ny,nz"),
    ("fov", "field of view per axis in m"),
    ("rows", "keep this many strongest rows (0 keeps all)"),
    ("noise", "noise level relative to the RMS of the strongest row"),
    ("ratio", "downsampling ratio: 1, 2 or 4"),
    ("validation_fraction", "fraction of pairs held out for validation"),
    ("encoding", "position encoding: none, normalized or symmetric"),
    ("upsample", "fixed upsampling: nearest, linear or cubic"),
    ("blocks", "residual dense blocks"),
    ("dense_stages", "dense stages per block"),
    ("features", "feature channels"),
    ("learning_rate", "Adam step size"),
    ("batch_size", "pairs per step"),
    ("epochs", "maximum training epochs"),
    ("patience", "early-stopping patience in epochs"),
    ("augment", "random rotations and flips during training"),
    ("lambda", "Kaczmarz regularisation weight"),
    ("sweeps", "Kaczmarz sweeps"),
    ("clamp", "project onto real non-negative values after each sweep"),
    ("row_order", "Kaczmarz row order: sequential or shuffled"),
    ("phantom", "test phantom: dots or shape"),
    ("method", "recovery method: ppg, nearest, linear, cubic or zero"),
    ("seed", "random seed"),
    ("seeds", "seeds for the ablation runs"),
    ("ratios", "ratios for the ablation runs"),
];

fn is_known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: Display,
{
    raw.trim().parse().map_err(|e| config_err(format!("{key}: cannot parse {raw:?}: {e}")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(config_err(format!("{key}: expected a boolean, got {raw:?}"))),
    }
}

impl RunConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| config_err(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if cfg.values.contains_key(key) {
                return Err(config_err(format!("line {}: duplicate key {key:?}", n + 1)));
            }
            cfg.set(key, value.trim()).map_err(|e| config_err(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !is_known(key) {
            return Err(config_err(format!("unknown key {key:?}")));
        }
        if value.is_empty() {
            return Err(config_err(format!("empty value for {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| config_err(format!("expected key=value, got {assignment:?}")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.raw(key).map(|v| parse_value(key, v)).transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.get(key)?.ok_or_else(|| config_err(format!("missing required key {key:?}")))
    }

    pub fn flag(&self, key: &str, default: bool) -> Result<bool> {
        self.raw(key).map_or(Ok(default), |v| parse_bool(key, v))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        self.raw(key).map(|v| v.split(',').map(|item| parse_value(key, item)).collect()).transpose()
    }

    pub fn seed(&self) -> Result<u64> {
        self.get_or("seed", 0)
    }

    pub fn dimensionality(&self) -> Result<usize> {
        let d = self.get_or("dimensionality", 2)?;
        if !(1..=3).contains(&d) {
            return Err(config_err(format!("dimensionality must be 1, 2 or 3, got {d}")));
        }
        Ok(d)
    }

    fn per_axis(&self, key: &str, default: f64, n: usize) -> Result<Vec<f64>> {
        match self.list::<f64>(key)? {
            None => Ok(vec![default; n]),
            Some(v) if v.len() == 1 => Ok(vec![v[0]; n]),
            Some(v) if v.len() == n => Ok(v),
            Some(v) => Err(config_err(format!("{key}: expected 1 or {n} values, got {}", v.len()))),
        }
    }

    /// Lissajous sequence; defaults follow the 2D/3D benchmark presets.
    pub fn sequence(&self) -> Result<ScanSequence> {
        let d = self.dimensionality()?;
        let g = self.per_axis("gradient", bench::GRADIENT, d)?;
        let a = self.per_axis("amplitude", bench::AMPLITUDE, d)?;
        let default_div: Vec<u32> = match d {
            1 => vec![bench::DIVIDERS_2D[0]],
            2 => bench::DIVIDERS_2D.to_vec(),
            _ => bench::DIVIDERS_3D.to_vec(),
        };
        let div = self.list::<u32>("dividers")?.unwrap_or(default_div);
        if div.len() != d {
            return Err(config_err(format!("dividers: expected {d} values, got {}", div.len())));
        }
        let t = self.get_or("base_period", bench::BASE_PERIOD)?;
        let seq = match d {
            1 => ScanSequence::one_dimensional(g[0], a[0], div[0], t)?,
            2 => ScanSequence::lissajous_2d([g[0], g[1]], [a[0], a[1]], [div[0], div[1]], t)?,
            _ => ScanSequence::lissajous_3d([g[0], g[1], g[2]], [a[0], a[1], a[2]], [div[0], div[1], div[2]], t)?,
        };
        let default_samples = if d == 3 { bench::TIME_SAMPLES_3D } else { bench::TIME_SAMPLES };
        let n = self.get_or("time_samples", default_samples)?;
        let seq = seq.with_time_samples(n)?;
        // Rows up to Nyquist are allowed; the simulator rejects larger k.
        seq.with_k_max((n / 2) as u32)
    }

    pub fn k_range(&self) -> Result<(u32, u32)> {
        let lo = self.get_or("k_min", 1)?;
        let hi = self.get_or("k_max", 400)?;
        if lo > hi {
            return Err(config_err(format!("k_min {lo} exceeds k_max {hi}")));
        }
        Ok((lo, hi))
    }

    pub fn channels(&self) -> Result<Vec<Channel>> {
        match self.raw("channels") {
            Some(v) => v.split(',').map(Channel::parse).collect(),
            None => Ok(Channel::ALL[..self.dimensionality()?].to_vec()),
        }
    }

    pub fn particle(&self) -> Result<ParticleModel> {
        let p = bench::train_particle();
        ParticleModel::new(
            self.get_or("saturation_moment", p.saturation_moment)?,
            self.get_or("langevin_scale", p.langevin_scale)?,
        )
    }

    /// Defaults to a `37`-voxel edge on every driven axis.
    pub fn grid(&self) -> Result<Grid3> {
        let d = self.dimensionality()?;
        let dims = match self.list::<usize>("dims")? {
            Some(v) if v.len() == 3 => [v[0], v[1], v[2]],
            Some(v) => return Err(config_err(format!("dims: expected 3 values, got {}", v.len()))),
            None => [0, 1, 2].map(|a| if a < d { bench::RAW_EDGE } else { 1 }),
        };
        let fov = match self.list::<f64>("fov")? {
            Some(v) if v.len() == 3 => [v[0], v[1], v[2]],
            Some(v) if v.len() == 1 => [v[0]; 3],
            Some(v) => return Err(config_err(format!("fov: expected 1 or 3 values, got {}", v.len()))),
            None => {
                let edge = dims[..d].iter().copied().max().unwrap_or(1) as f64;
                [0, 1, 2].map(|a| if a < d { bench::FOV } else { bench::FOV / edge })
            }
        };
        Grid3::new(dims, fov)
    }

    pub fn ratio(&self) -> Result<usize> {
        self.get_or("ratio", 2)
    }

    pub fn model_config(&self, ratio: usize, lr_dims: [usize; 3]) -> Result<ModelConfig> {
        let encoding: PositionEncoding = self.get_or("encoding", PositionEncoding::Symmetric)?;
        let upsample: Interpolation = self.get_or("upsample", Interpolation::Linear)?;
        let base = ModelConfig::new(encoding, upsample, ratio, lr_dims);
        let cfg = base.with_size(
            self.get_or("blocks", base.blocks)?,
            self.get_or("dense_stages", base.dense_stages)?,
            self.get_or("features", base.channels)?,
        );
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            learning_rate: self.get_or("learning_rate", d.learning_rate)?,
            batch_size: self.get_or("batch_size", d.batch_size)?,
            max_epochs: self.get_or("epochs", d.max_epochs)?,
            patience: self.get_or("patience", d.patience)?,
            seed: self.seed()?,
            augment: self.flag("augment", d.augment)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn kaczmarz_config(&self) -> Result<KaczmarzConfig> {
        let d = KaczmarzConfig::default();
        let row_order = match self.get_or("row_order", RowOrder::Sequential)? {
            RowOrder::Shuffled { .. } => RowOrder::Shuffled { seed: self.seed()? },
            o => o,
        };
        let lambda = self.get_or("lambda", d.lambda)?;
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(config_err("lambda must be >= 0"));
        }
        Ok(KaczmarzConfig {
            lambda,
            sweeps: self.get_or("sweeps", d.sweeps)?,
            enforce_real_nonneg: self.flag("clamp", d.enforce_real_nonneg)?,
            row_order,
        })
    }
}
