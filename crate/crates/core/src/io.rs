//! Binary containers, CSV tables and greyscale slice export.
//!
//! All multi-byte values are little-endian. Files are written to a sibling
//! temporary path and renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Channel, Grid3, Phantom, Provenance, SMRow, SystemMatrix};
use crate::sampling::{Pair, PairSet, Split};
use crate::sr::{History, Interpolation, ModelConfig, PositionEncoding, SRModel};

pub const SMB_MAGIC: &[u8; 4] = b"SMB1";
pub const PHB_MAGIC: &[u8; 4] = b"PHB1";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PPGM";
pub const FORMAT_VERSION: u16 = 1;

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path.file_name().ok_or_else(|| Error::Invalid(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!("unexpected end of data at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != want {
            return Err(Error::Format(format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(got), String::from_utf8_lossy(want))));
        }
        let version = self.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn grid(&mut self) -> Result<Grid3> {
        let dims = [self.u32()? as usize, self.u32()? as usize, self.u32()? as usize];
        let fov = [self.f64()?, self.f64()?, self.f64()?];
        Grid3::new(dims, fov)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn put_grid(out: &mut Vec<u8>, grid: &Grid3) {
    for d in grid.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for f in grid.fov() {
        out.extend_from_slice(&f.to_le_bytes());
    }
}

fn header(magic: &[u8; 4]) -> Vec<u8> {
    let mut out = magic.to_vec();
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out
}

/// Header, then per row: channel u8, frequency index u32, interleaved
/// `re, im` f64 pairs.
pub fn encode_smb(sm: &SystemMatrix) -> Vec<u8> {
    let mut out = header(SMB_MAGIC);
    put_grid(&mut out, sm.grid());
    out.push(sm.provenance().code());
    out.extend_from_slice(&(sm.n_rows() as u32).to_le_bytes());
    for row in sm.rows() {
        out.push(row.channel().code());
        out.extend_from_slice(&row.freq_index().to_le_bytes());
        for (r, i) in row.re().iter().zip(row.im()) {
            out.extend_from_slice(&r.to_le_bytes());
            out.extend_from_slice(&i.to_le_bytes());
        }
    }
    out
}

pub fn decode_smb(bytes: &[u8]) -> Result<SystemMatrix> {
    let mut r = Reader::new(bytes);
    r.magic(SMB_MAGIC)?;
    let grid = r.grid()?;
    let provenance = Provenance::from_code(r.u8()?)?;
    let n_rows = r.u32()? as usize;
    let n = grid.len();
    let mut rows = Vec::with_capacity(n_rows.min(1 << 16));
    for _ in 0..n_rows {
        let channel = Channel::from_code(r.u8()?)?;
        let k = r.u32()?;
        let mut re = Vec::with_capacity(n);
        let mut im = Vec::with_capacity(n);
        for _ in 0..n {
            re.push(r.f64()?);
            im.push(r.f64()?);
        }
        rows.push(SMRow::new(channel, k, re, im)?);
    }
    r.finish()?;
    SystemMatrix::new(grid, rows, provenance)
}

pub fn encode_phb(ph: &Phantom) -> Vec<u8> {
    let mut out = header(PHB_MAGIC);
    put_grid(&mut out, ph.grid());
    for v in ph.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_phb(bytes: &[u8]) -> Result<Phantom> {
    let mut r = Reader::new(bytes);
    r.magic(PHB_MAGIC)?;
    let grid = r.grid()?;
    let values = (0..grid.len()).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Phantom::new(grid, values)
}

fn interpolation_code(m: Interpolation) -> u8 {
    match m {
        Interpolation::Nearest => 0,
        Interpolation::Linear => 1,
        Interpolation::Cubic => 2,
    }
}

fn interpolation_from_code(c: u8) -> Result<Interpolation> {
    match c {
        0 => Ok(Interpolation::Nearest),
        1 => Ok(Interpolation::Linear),
        2 => Ok(Interpolation::Cubic),
        _ => Err(Error::Format(format!("unknown upsample code {c}"))),
    }
}

/// Header (encoding, upsampling, B, D, C′, r, LR dims, constants) followed
/// by the flat parameter vector.
pub fn encode_checkpoint(model: &SRModel) -> Vec<u8> {
    let c = model.config();
    let mut out = header(CHECKPOINT_MAGIC);
    out.push(c.encoding.code());
    out.push(interpolation_code(c.upsample));
    for v in [c.blocks, c.dense_stages, c.channels, c.ratio, c.lr_dims[0], c.lr_dims[1], c.lr_dims[2]] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&c.residual_scale.to_le_bytes());
    out.extend_from_slice(&c.leaky_slope.to_le_bytes());
    out.extend_from_slice(&(model.n_params() as u64).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<SRModel> {
    let mut r = Reader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    let encoding = PositionEncoding::from_code(r.u8()?)?;
    let upsample = interpolation_from_code(r.u8()?)?;
    let mut v = [0usize; 7];
    for x in v.iter_mut() {
        *x = r.u32()? as usize;
    }
    let mut cfg = ModelConfig::new(encoding, upsample, v[3], [v[4], v[5], v[6]]).with_size(v[0], v[1], v[2]);
    cfg.residual_scale = r.f64()?;
    cfg.leaky_slope = r.f64()?;
    let n = r.u64()? as usize;
    let params = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    SRModel::from_params(cfg, params).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_smb(path: &Path) -> Result<SystemMatrix> {
    decode_smb(&fs::read(path)?)
}

pub fn write_smb(path: &Path, sm: &SystemMatrix) -> Result<()> {
    write_atomic(path, &encode_smb(sm))
}

pub fn read_phb(path: &Path) -> Result<Phantom> {
    decode_phb(&fs::read(path)?)
}

pub fn write_phb(path: &Path, ph: &Phantom) -> Result<()> {
    write_atomic(path, &encode_phb(ph))
}

pub fn read_checkpoint(path: &Path) -> Result<SRModel> {
    decode_checkpoint(&fs::read(path)?)
}

pub fn write_checkpoint(path: &Path, model: &SRModel) -> Result<()> {
    write_atomic(path, &encode_checkpoint(model))
}

pub fn history_csv(h: &History) -> String {
    let mut s = String::from("epoch,train_loss,val_nrmse\n");
    for r in &h.records {
        s.push_str(&format!("{},{:.10e},{:.10e}\n", r.epoch, r.train_loss, r.val_nrmse));
    }
    s
}

pub fn sweep_csv(residuals: &[f64]) -> String {
    let mut s = String::from("sweep,relative_residual\n");
    for (i, r) in residuals.iter().enumerate() {
        s.push_str(&format!("{},{:.10e}\n", i + 1, r));
    }
    s
}

/// Manifest stored next to the LR and HR containers of a pair set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairsManifest {
    pub ratio: usize,
    pub padding_pre: usize,
    pub padding_post: usize,
    pub source_dims: [usize; 3],
    pub hr_dims: [usize; 3],
    pub lr_dims: [usize; 3],
    pub n_pairs: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub split_seed: u64,
    pub lr_file: String,
    pub hr_file: String,
    /// One entry per pair, `true` for validation.
    pub validation: Vec<bool>,
}

impl PairsManifest {
    pub fn new(set: &PairSet, source_dims: [usize; 3], split_seed: u64, lr_file: &str, hr_file: &str) -> Self {
        PairsManifest {
            ratio: set.ratio,
            padding_pre: set.padding.0,
            padding_post: set.padding.1,
            source_dims,
            hr_dims: set.hr_grid.dims(),
            lr_dims: set.lr_grid.dims(),
            n_pairs: set.len(),
            n_train: set.count(Split::Train),
            n_validation: set.count(Split::Validation),
            split_seed,
            lr_file: lr_file.into(),
            hr_file: hr_file.into(),
            validation: set.pairs.iter().map(|p| p.split == Split::Validation).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises") + "\n"
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(format!("pairs manifest: {e}")))
    }
}

/// Writes `lr.smb`, `hr.smb` and `manifest.json` into `dir`.
pub fn write_pairs(dir: &Path, set: &PairSet, source_dims: [usize; 3], split_seed: u64) -> Result<PairsManifest> {
    let manifest = PairsManifest::new(set, source_dims, split_seed, "lr.smb", "hr.smb");
    write_smb(&dir.join("lr.smb"), &set.lr_matrix()?)?;
    write_smb(&dir.join("hr.smb"), &set.hr_matrix()?)?;
    write_atomic(&dir.join("manifest.json"), manifest.to_json().as_bytes())?;
    Ok(manifest)
}

pub fn read_pairs(dir: &Path) -> Result<(PairSet, PairsManifest)> {
    let manifest = PairsManifest::from_json(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let lr = read_smb(&dir.join(&manifest.lr_file))?;
    let hr = read_smb(&dir.join(&manifest.hr_file))?;
    if lr.n_rows() != manifest.n_pairs || hr.n_rows() != manifest.n_pairs || manifest.validation.len() != manifest.n_pairs {
        return Err(Error::Format("pair containers disagree with the manifest".into()));
    }
    let pairs = lr
        .rows()
        .iter()
        .zip(hr.rows())
        .zip(&manifest.validation)
        .map(|((l, h), &v)| Pair { lr: l.clone(), hr: h.clone(), split: if v { Split::Validation } else { Split::Train } })
        .collect();
    let set = PairSet {
        lr_grid: *lr.grid(),
        hr_grid: *hr.grid(),
        ratio: manifest.ratio,
        padding: (manifest.padding_pre, manifest.padding_post),
        pairs,
    };
    Ok((set, manifest))
}

/// Binary greyscale image of a 2D slice, min-max scaled to 0..=255.
/// A constant slice maps to black.
pub fn encode_pgm(values: &[f64], width: usize, height: usize) -> Result<Vec<u8>> {
    if values.len() != width * height || width == 0 || height == 0 {
        return Err(Error::Invalid(format!("{} values for a {width}x{height} image", values.len())));
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    let span = hi - lo;
    for &v in values {
        let g = if span > 0.0 { ((v - lo) / span * 255.0).round() } else { 0.0 };
        out.push(g.clamp(0.0, 255.0) as u8);
    }
    Ok(out)
}

/// Slice through `values` perpendicular to `axis` at `index`. Returns the
/// plane (row-major, first remaining axis fastest) and its width and height.
pub fn extract_slice(values: &[f64], dims: [usize; 3], axis: usize, index: usize) -> Result<(Vec<f64>, usize, usize)> {
    if axis > 2 || index >= dims[axis] {
        return Err(Error::Invalid(format!("slice {index} on axis {axis} outside {dims:?}")));
    }
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut out = Vec::with_capacity(dims[a] * dims[b]);
    for j in 0..dims[b] {
        for i in 0..dims[a] {
            let mut p = [0usize; 3];
            p[axis] = index;
            p[a] = i;
            p[b] = j;
            out.push(values[(p[2] * dims[1] + p[1]) * dims[0] + p[0]]);
        }
    }
    Ok((out, dims[a], dims[b]))
}
