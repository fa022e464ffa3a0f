//! Python bindings for the `smcal` toolkit.
//!
//! Complex row data crosses the boundary as lists of Python `complex`;
//! phantoms as lists of `float` in x-fastest order.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use smcal::bench;
use smcal::metrics::{self, MetricReport};
use smcal::recon::{self, KaczmarzConfig};
use smcal::sampling::{self, Split};
use smcal::sr::{self, Interpolation, ModelConfig, PositionEncoding, TrainConfig};
use smcal::symmetry;
use smcal::{Channel, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::TrainingDiverged { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for smcal::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn channels(names: &[String]) -> PyResult<Vec<Channel>> {
    names.iter().map(|n| Channel::parse(n)).collect::<smcal::Result<_>>().py()
}

/// Regular voxel grid over a box-shaped field of view.
#[pyclass(name = "Grid3", module = "smcal", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyGrid3(smcal::Grid3);

#[pymethods]
impl PyGrid3 {
    #[new]
    fn new(dims: [usize; 3], fov: [f64; 3]) -> PyResult<Self> {
        smcal::Grid3::new(dims, fov).py().map(PyGrid3)
    }

    #[getter]
    fn dims(&self) -> [usize; 3] {
        self.0.dims()
    }

    #[getter]
    fn fov(&self) -> [f64; 3] {
        self.0.fov()
    }

    #[getter]
    fn spacing(&self) -> [f64; 3] {
        self.0.spacing()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Grid3(dims={:?}, fov={:?})", self.0.dims(), self.0.fov())
    }
}

#[pyclass(name = "ParticleModel", module = "smcal", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyParticleModel(smcal::ParticleModel);

#[pymethods]
impl PyParticleModel {
    #[new]
    fn new(saturation_moment: f64, langevin_scale: f64) -> PyResult<Self> {
        smcal::ParticleModel::new(saturation_moment, langevin_scale).py().map(PyParticleModel)
    }

    #[getter]
    fn saturation_moment(&self) -> f64 {
        self.0.saturation_moment
    }

    #[getter]
    fn langevin_scale(&self) -> f64 {
        self.0.langevin_scale
    }
}

/// Lissajous drive sequence.
#[pyclass(name = "ScanSequence", module = "smcal", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyScanSequence(smcal::ScanSequence);

#[pymethods]
impl PyScanSequence {
    #[staticmethod]
    fn one_dimensional(gradient: f64, amplitude: f64, divider: u32, base_period: f64) -> PyResult<Self> {
        smcal::ScanSequence::one_dimensional(gradient, amplitude, divider, base_period).py().map(PyScanSequence)
    }

    #[staticmethod]
    fn lissajous_2d(gradient: [f64; 2], amplitude: [f64; 2], dividers: [u32; 2], base_period: f64) -> PyResult<Self> {
        smcal::ScanSequence::lissajous_2d(gradient, amplitude, dividers, base_period).py().map(PyScanSequence)
    }

    #[staticmethod]
    fn lissajous_3d(gradient: [f64; 3], amplitude: [f64; 3], dividers: [u32; 3], base_period: f64) -> PyResult<Self> {
        smcal::ScanSequence::lissajous_3d(gradient, amplitude, dividers, base_period).py().map(PyScanSequence)
    }

    /// The 2D benchmark preset.
    #[staticmethod]
    fn benchmark_2d() -> Self {
        PyScanSequence(bench::sequence_2d())
    }

    fn with_time_samples(&self, n: usize) -> PyResult<Self> {
        self.0.clone().with_time_samples(n).py().map(PyScanSequence)
    }

    #[getter]
    fn time_samples(&self) -> usize {
        self.0.n_time_samples()
    }

    #[getter]
    fn k_max(&self) -> u32 {
        self.0.k_max()
    }
}

/// Complex system matrix: one row per (channel, frequency index).
#[pyclass(name = "SystemMatrix", module = "smcal", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PySystemMatrix(smcal::SystemMatrix);

#[pymethods]
impl PySystemMatrix {
    /// Builds a matrix from `(channel, k, values)` rows.
    #[new]
    fn new(grid: PyRef<'_, PyGrid3>, rows: Vec<(String, u32, Vec<Complex64>)>) -> PyResult<Self> {
        let rows = rows
            .iter()
            .map(|(c, k, v)| smcal::SMRow::from_complex(Channel::parse(c)?, *k, v))
            .collect::<smcal::Result<Vec<_>>>()
            .py()?;
        smcal::SystemMatrix::new(grid.0, rows, smcal::Provenance::Loaded).py().map(PySystemMatrix)
    }

    #[getter]
    fn grid(&self) -> PyGrid3 {
        PyGrid3(*self.0.grid())
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.0.n_rows()
    }

    fn __len__(&self) -> usize {
        self.0.n_rows()
    }

    /// `(channel, k)` for every row.
    fn keys(&self) -> Vec<(String, u32)> {
        self.0.rows().iter().map(|r| (r.channel().to_string(), r.freq_index())).collect()
    }

    fn row(&self, index: usize) -> PyResult<Vec<Complex64>> {
        let r = self.0.rows().get(index).ok_or_else(|| PyValueError::new_err(format!("row {index} of {}", self.0.n_rows())))?;
        Ok(r.to_complex())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        smcal::io::write_smb(&path, &self.0).py()
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        smcal::io::read_smb(&path).py().map(PySystemMatrix)
    }

    /// Removes `pre` voxels before and `post` after the data on each axis.
    fn crop(&self, pre: usize, post: usize) -> PyResult<Self> {
        sampling::crop(&self.0, pre, post).py().map(PySystemMatrix)
    }

    fn __repr__(&self) -> String {
        format!("SystemMatrix(rows={}, dims={:?})", self.0.n_rows(), self.0.grid().dims())
    }
}

#[pyclass(name = "Phantom", module = "smcal", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyPhantom(smcal::Phantom);

#[pymethods]
impl PyPhantom {
    #[new]
    fn new(grid: PyRef<'_, PyGrid3>, values: Vec<f64>) -> PyResult<Self> {
        smcal::Phantom::new(grid.0, values).py().map(PyPhantom)
    }

    #[getter]
    fn grid(&self) -> PyGrid3 {
        PyGrid3(*self.0.grid())
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }
}

/// LR/HR training pairs with a train/validation split.
#[pyclass(name = "PairSet", module = "smcal", frozen)]
pub struct PyPairSet(sampling::PairSet);

#[pymethods]
impl PyPairSet {
    #[getter]
    fn ratio(&self) -> usize {
        self.0.ratio
    }

    #[getter]
    fn lr_dims(&self) -> [usize; 3] {
        self.0.lr_grid.dims()
    }

    #[getter]
    fn hr_dims(&self) -> [usize; 3] {
        self.0.hr_grid.dims()
    }

    #[getter]
    fn padding(&self) -> (usize, usize) {
        self.0.padding
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn count(&self, split: &str) -> PyResult<usize> {
        match split {
            "train" => Ok(self.0.count(Split::Train)),
            "validation" => Ok(self.0.count(Split::Validation)),
            other => Err(PyValueError::new_err(format!("unknown split {other:?}"))),
        }
    }

    fn lr_matrix(&self) -> PyResult<PySystemMatrix> {
        self.0.lr_matrix().py().map(PySystemMatrix)
    }

    fn hr_matrix(&self) -> PyResult<PySystemMatrix> {
        self.0.hr_matrix().py().map(PySystemMatrix)
    }
}

/// Position-prior-guided super-resolution network.
#[pyclass(name = "SRModel", module = "smcal", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PySRModel(sr::SRModel);

#[pymethods]
impl PySRModel {
    #[new]
    #[pyo3(signature = (ratio, lr_dims, encoding = "symmetric", upsample = "linear", blocks = 2, dense_stages = 3, features = 16, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn new(ratio: usize, lr_dims: [usize; 3], encoding: &str, upsample: &str, blocks: usize, dense_stages: usize, features: usize, seed: u64) -> PyResult<Self> {
        let enc: PositionEncoding = encoding.parse().py()?;
        let up: Interpolation = upsample.parse().py()?;
        let cfg = ModelConfig::new(enc, up, ratio, lr_dims).with_size(blocks, dense_stages, features);
        sr::SRModel::new(cfg, seed).py().map(PySRModel)
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.0.n_params()
    }

    #[getter]
    fn ratio(&self) -> usize {
        self.0.config().ratio
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        smcal::io::write_checkpoint(&path, &self.0).py()
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        smcal::io::read_checkpoint(&path).py().map(PySRModel)
    }

    /// HR rows for every LR row of `lr`, in order.
    fn recover(&self, lr: PyRef<'_, PySystemMatrix>) -> PyResult<PySystemMatrix> {
        sr::recover(&self.0, &lr.0, self.0.config().ratio).py().map(PySystemMatrix)
    }
}

/// Simulates rows `ks` of every channel in `channels`.
#[pyfunction]
fn simulate_system_matrix(
    sequence: PyRef<'_, PyScanSequence>,
    particle: PyRef<'_, PyParticleModel>,
    grid: PyRef<'_, PyGrid3>,
    channels: Vec<String>,
    ks: Vec<u32>,
) -> PyResult<PySystemMatrix> {
    let ch = self::channels(&channels)?;
    smcal::physics::simulate_system_matrix(&sequence.0, &particle.0, &grid.0, &ch, &ks).py().map(PySystemMatrix)
}

/// The simulated 2D benchmark matrix reduced to its `count` strongest rows.
#[pyfunction]
#[pyo3(signature = (edge = 37, k_max = 400, count = 200, test_particle = false))]
fn benchmark_2d(edge: usize, k_max: u32, count: usize, test_particle: bool) -> PyResult<PySystemMatrix> {
    let pm = if test_particle { bench::test_particle() } else { bench::train_particle() };
    bench::benchmark_2d(&pm, edge, k_max, count).py().map(PySystemMatrix)
}

/// Pads, decimates and splits `sm` into training pairs.
#[pyfunction]
#[pyo3(signature = (sm, ratio, validation_fraction = 0.1, seed = 0))]
fn prepare_pairs(sm: PyRef<'_, PySystemMatrix>, ratio: usize, validation_fraction: f64, seed: u64) -> PyResult<PyPairSet> {
    let set = sampling::prepare_pairs(&sm.0, ratio).py()?;
    sampling::split_pairs(&set, validation_fraction, seed).py().map(PyPairSet)
}

/// Nearest, linear or cubic upsampling of every row.
#[pyfunction]
fn interpolate(lr: PyRef<'_, PySystemMatrix>, ratio: usize, method: &str) -> PyResult<PySystemMatrix> {
    let m: Interpolation = method.parse().py()?;
    sr::baseline_interpolate(&lr.0, ratio, m).py().map(PySystemMatrix)
}

type EpochRow = (usize, f64, f64);

/// Trains `model` and returns the best model with the per-epoch
/// `(epoch, train_loss, val_nrmse)` history.
#[pyfunction]
#[pyo3(signature = (model, pairs, epochs = 100, learning_rate = 1e-3, batch_size = 8, patience = 20, augment = true, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    model: PyRef<'_, PySRModel>,
    pairs: PyRef<'_, PyPairSet>,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    patience: usize,
    augment: bool,
    seed: u64,
) -> PyResult<(PySRModel, Vec<EpochRow>)> {
    let cfg = TrainConfig { learning_rate, batch_size, max_epochs: epochs, patience, seed, augment };
    let (m, p) = (model.0.clone(), &pairs.0);
    let (best, hist) = py.detach(|| sr::train(&m, p, &cfg)).py()?;
    Ok((PySRModel(best), hist.records.iter().map(|r| (r.epoch, r.train_loss, r.val_nrmse)).collect()))
}

/// Per-row NRMSE and its mean.
#[pyfunction]
fn matrix_nrmse(estimate: PyRef<'_, PySystemMatrix>, truth: PyRef<'_, PySystemMatrix>) -> PyResult<(Vec<f64>, f64)> {
    metrics::matrix_nrmse(&estimate.0, &truth.0).py()
}

/// `(mean NRMSE, PSNR dB, SSIM)` of a phantom estimate.
#[pyfunction]
fn phantom_metrics(estimate: PyRef<'_, PyPhantom>, truth: PyRef<'_, PyPhantom>) -> PyResult<(f64, f64, f64)> {
    let r = MetricReport::for_phantom("estimate", 1, 0, &estimate.0, &truth.0).py()?;
    Ok((r.mean_nrmse, r.psnr_db, r.ssim))
}

/// `(channel, k, axis, residual)` for every row with a known reflection rule.
#[pyfunction]
fn symmetry_residuals(sm: PyRef<'_, PySystemMatrix>) -> PyResult<Vec<(String, u32, usize, f64)>> {
    let grid = sm.0.grid();
    let mut out = Vec::new();
    for row in sm.0.rows() {
        let desc = symmetry::expected_parity(row.channel(), row.freq_index(), grid.dimensionality()).py()?;
        if desc.has_rules() {
            for r in symmetry::symmetry_residual(row, grid, &desc).py()? {
                out.push((row.channel().to_string(), row.freq_index(), r.axis, r.residual));
            }
        }
    }
    Ok(out)
}

/// Keeps one symmetric sector of every row and rebuilds the rest.
#[pyfunction]
fn mirror_complete(sm: PyRef<'_, PySystemMatrix>) -> PyResult<PySystemMatrix> {
    let grid = *sm.0.grid();
    sm.0.map_rows(grid, sm.0.provenance(), |row| {
        let desc = symmetry::expected_parity(row.channel(), row.freq_index(), grid.dimensionality())?;
        if !desc.has_rules() {
            return Ok(row.clone());
        }
        let known = symmetry::fundamental_domain(&grid, &desc);
        let keep = |v: &[f64]| v.iter().zip(&known).map(|(&x, &k)| if k { x } else { 0.0 }).collect();
        let masked = row.with_values(keep(row.re()), keep(row.im()))?;
        Ok(symmetry::mirror_complete(&masked, &grid, &known, &desc)?.row)
    })
    .py()
    .map(PySystemMatrix)
}

/// Simulates the signal of `phantom` with `truth` and reconstructs it with
/// `recovered`; returns the estimate and `(NRMSE, PSNR dB, SSIM)`.
#[pyfunction]
#[pyo3(signature = (recovered, truth, phantom, lam = 0.75, sweeps = 3, clamp = true))]
fn reconstruct(
    recovered: PyRef<'_, PySystemMatrix>,
    truth: PyRef<'_, PySystemMatrix>,
    phantom: PyRef<'_, PyPhantom>,
    lam: f64,
    sweeps: usize,
    clamp: bool,
) -> PyResult<(PyPhantom, (f64, f64, f64))> {
    let cfg = KaczmarzConfig { lambda: lam, sweeps, enforce_real_nonneg: clamp, ..KaczmarzConfig::default() };
    let r = recon::reconstruction_pipeline(&recovered.0, &truth.0, &phantom.0, &cfg, "recovered", 1).py()?;
    Ok((PyPhantom(r.phantom), (r.report.mean_nrmse, r.report.psnr_db, r.report.ssim)))
}

/// Ring-and-bar test phantom on the `z = 0` plane of `grid`.
#[pyfunction]
fn shape_phantom(grid: PyRef<'_, PyGrid3>) -> PyResult<PyPhantom> {
    bench::shape_phantom_2d(&grid.0).py().map(PyPhantom)
}

#[pymodule]
#[pyo3(name = "smcal")]
fn smcal_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid3>()?;
    m.add_class::<PyParticleModel>()?;
    m.add_class::<PyScanSequence>()?;
    m.add_class::<PySystemMatrix>()?;
    m.add_class::<PyPhantom>()?;
    m.add_class::<PyPairSet>()?;
    m.add_class::<PySRModel>()?;
    m.add_function(wrap_pyfunction!(simulate_system_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark_2d, m)?)?;
    m.add_function(wrap_pyfunction!(prepare_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(interpolate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_nrmse, m)?)?;
    m.add_function(wrap_pyfunction!(phantom_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(symmetry_residuals, m)?)?;
    m.add_function(wrap_pyfunction!(mirror_complete, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(shape_phantom, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
