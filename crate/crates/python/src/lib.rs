//! Python bindings for the `fairgan` crate.
//!
//! Feature matrices cross the boundary as lists of rows. Validation errors
//! raise `ValueError`, everything else `RuntimeError`.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fairgan::data::io::{load_pair, save_pair};
use fairgan::data::{class_counts, DatasetPair, FeatureSet};
use fairgan::gan::{GanState, Stage};
use fairgan::harness::experiment::stream_seed;
use fairgan::harness::{
    build_pair, cell_seed, read_checkpoint, run_grid, save_checkpoint, EvalContext,
    ExperimentConfig, GridMethod,
};
use fairgan::metrics::{Evaluate, GaussStats};
use fairgan::numerics::{Matrix, Rng};
use fairgan::pipeline::{adapt_fairtl, adapt_fairtlpp, pretrain, Method, TrainHooks};

fn py_err(e: fairgan::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for fairgan::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<Matrix> {
    let dim = rows.first().map_or(0, Vec::len);
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    Matrix::from_rows(&refs, dim).py()
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.to_vec()).collect()
}

/// Run configuration. `Config()` gives the defaults; `Config(toml)` parses
/// a TOML document where omitted keys keep their defaults.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (toml=None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(t) => ExperimentConfig::from_toml(t).py()?,
            None => ExperimentConfig::default(),
        };
        Ok(PyConfig { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyConfig {
            inner: ExperimentConfig::load(&path).py()?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.resolved_toml()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.seed = v;
    }

    #[getter]
    fn perc(&self) -> f64 {
        self.inner.data.perc
    }

    #[setter]
    fn set_perc(&mut self, v: f64) -> PyResult<()> {
        self.update(|c| c.data.perc = v)
    }

    #[getter]
    fn bias(&self) -> Vec<f64> {
        self.inner.data.bias.clone()
    }

    #[setter]
    fn set_bias(&mut self, v: Vec<f64>) -> PyResult<()> {
        self.update(|c| c.data.bias = v)
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.train.lambda
    }

    #[setter]
    fn set_lambda_(&mut self, v: f64) -> PyResult<()> {
        self.update(|c| c.train.lambda = v)
    }

    #[getter]
    fn pretrain_epochs(&self) -> usize {
        self.inner.train.pretrain_epochs
    }

    #[setter]
    fn set_pretrain_epochs(&mut self, v: usize) -> PyResult<()> {
        self.update(|c| c.train.pretrain_epochs = v)
    }

    #[getter]
    fn adapt_epochs(&self) -> usize {
        self.inner.train.adapt_epochs
    }

    #[setter]
    fn set_adapt_epochs(&mut self, v: usize) -> PyResult<()> {
        self.update(|c| c.train.adapt_epochs = v)
    }

    #[getter]
    fn adapt_min_steps(&self) -> usize {
        self.inner.train.adapt_min_steps
    }

    #[setter]
    fn set_adapt_min_steps(&mut self, v: usize) -> PyResult<()> {
        self.update(|c| c.train.adapt_min_steps = v)
    }

    fn __repr__(&self) -> String {
        format!("Config(hash={:.12})", self.inner.hash())
    }
}

impl PyConfig {
    fn update(&mut self, f: impl FnOnce(&mut ExperimentConfig)) -> PyResult<()> {
        let mut next = self.inner.clone();
        f(&mut next);
        next.validate().py()?;
        self.inner = next;
        Ok(())
    }
}

/// `D_bias`, `D_ref` and the evaluation holdout.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    inner: DatasetPair,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (config, seed=0))]
    fn build(config: &PyConfig, seed: u64) -> PyResult<Self> {
        let cfg = &config.inner;
        let pair = build_pair(
            cfg,
            &cfg.data.bias,
            cfg.data.perc,
            cell_seed(cfg.seed, 0, 0, seed),
        )
        .py()?;
        Ok(PyDataset { inner: pair })
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(PyDataset {
            inner: load_pair(&dir).py()?,
        })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        save_pair(&self.inner, &dir).py()
    }

    /// Sizes of `(d_bias, d_ref, eval_holdout)`.
    fn sizes(&self) -> (usize, usize, usize) {
        let p = &self.inner;
        (p.d_bias.len(), p.d_ref.len(), p.eval_holdout.len())
    }

    /// Per-class counts of one split: `"bias"`, `"ref"` or `"holdout"`.
    fn class_counts(&self, split: &str) -> PyResult<Vec<usize>> {
        let p = &self.inner;
        let samples = match split {
            "bias" => &p.d_bias,
            "ref" => &p.d_ref,
            "holdout" => &p.eval_holdout,
            other => return Err(PyValueError::new_err(format!("unknown split '{other}'"))),
        };
        Ok(class_counts(samples, p.joint_cardinality()))
    }

    /// Unlabelled reference rows.
    fn reference(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.ref_features().matrix())
    }
}

/// Generator and discriminator weights plus the training stage.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: GanState,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    #[pyo3(signature = (config, dataset, seed=0))]
    fn pretrain(
        py: Python<'_>,
        config: &PyConfig,
        dataset: &PyDataset,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = &config.inner;
        let union = dataset.inner.union_features();
        let stage = cfg.pretrain_stage(stream_seed(
            cell_seed(cfg.seed, 0, 0, seed),
            GridMethod::Pretrained,
        ));
        let arch = cfg.arch(union.dim());
        let record = py
            .detach(|| pretrain(&union, &arch, &stage, TrainHooks::default()))
            .py()?;
        Ok(PyModel {
            inner: record.state,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: read_checkpoint(&path).py()?.into_state().py()?,
        })
    }

    #[pyo3(signature = (path, seed=0, config_hash=""))]
    fn save(&self, path: PathBuf, seed: u64, config_hash: &str) -> PyResult<()> {
        save_checkpoint(&self.inner, &path, seed, config_hash).py()
    }

    #[getter]
    fn stage(&self) -> &'static str {
        self.inner.stage().name()
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    #[getter]
    fn data_dim(&self) -> usize {
        self.inner.data_dim()
    }

    #[pyo3(signature = (n, seed=0))]
    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let m = self.inner.sample(n, &mut Rng::new(seed)).py()?;
        Ok(to_rows(&m))
    }

    /// Adapts a pretrained model on unlabelled reference rows with
    /// `"fairtl"` or `"fairtlpp"`.
    #[pyo3(signature = (config, reference, method="fairtlpp", seed=0))]
    fn adapt(
        &self,
        py: Python<'_>,
        config: &PyConfig,
        reference: Vec<Vec<f64>>,
        method: &str,
        seed: u64,
    ) -> PyResult<Self> {
        if self.inner.stage() != Stage::Pretrained {
            return Err(PyValueError::new_err(format!(
                "adaptation starts from a pretrained model, not {}",
                self.inner.stage()
            )));
        }
        let cfg = &config.inner;
        let reference = FeatureSet::new(to_matrix(&reference)?);
        let method: Method = method.parse().py()?;
        let cell = cell_seed(cfg.seed, 0, 0, seed);
        let source = &self.inner;
        let record = py
            .detach(|| match method {
                Method::FairTl => {
                    let mut stage =
                        cfg.fairtl_stage(reference.len(), stream_seed(cell, GridMethod::FairTl));
                    stage.eval_every = 0;
                    adapt_fairtl(source, &reference, &stage, TrainHooks::default())
                }
                Method::FairTlPp => {
                    let mut stage = cfg
                        .fairtlpp_stage(reference.len(), stream_seed(cell, GridMethod::FairTlPp))?;
                    stage.eval_every = 0;
                    adapt_fairtlpp(source, &reference, &stage, TrainHooks::default())
                }
            })
            .py()?;
        Ok(PyModel {
            inner: record.state,
        })
    }

    /// FD and squared Fréchet distance against the dataset's holdout.
    #[pyo3(signature = (config, dataset, seed=0))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        config: &PyConfig,
        dataset: &PyDataset,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = &config.inner;
        let ctx = EvalContext::new(cfg, &dataset.inner, cell_seed(cfg.seed, 0, 0, seed)).py()?;
        let report = ctx
            .evaluator(cfg, &cfg.hash())
            .evaluate(&self.inner, 0)
            .py()?;
        let d = PyDict::new(py);
        d.set_item("fd", report.fd)?;
        d.set_item("frechet_sq", report.frechet_sq)?;
        d.set_item("n_samples", report.n_samples)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(stage={}, latent_dim={}, data_dim={})",
            self.inner.stage(),
            self.inner.latent_dim(),
            self.inner.data_dim()
        )
    }
}

/// Distance between the uniform vector and the label frequencies.
#[pyfunction]
fn fairness_discrepancy(labels: Vec<usize>, num_classes: usize) -> PyResult<f64> {
    fairgan::metrics::fairness_discrepancy(&labels, num_classes).py()
}

/// Squared Fréchet distance between two Gaussians.
#[pyfunction]
fn frechet_sq(
    mean_a: Vec<f64>,
    cov_a: Vec<Vec<f64>>,
    mean_b: Vec<f64>,
    cov_b: Vec<Vec<f64>>,
) -> PyResult<f64> {
    let a = GaussStats::new(mean_a, to_matrix(&cov_a)?, 2).py()?;
    let b = GaussStats::new(mean_b, to_matrix(&cov_b)?, 2).py()?;
    fairgan::metrics::frechet_sq(&a, &b).py()
}

/// Runs the configured grid and returns the report CSV.
#[pyfunction]
#[pyo3(signature = (config, parallelism=1, out_dir=None))]
fn grid(
    py: Python<'_>,
    config: &PyConfig,
    parallelism: usize,
    out_dir: Option<PathBuf>,
) -> PyResult<String> {
    let cfg = &config.inner;
    let outcome = py
        .detach(|| run_grid(cfg, parallelism, out_dir.as_deref()))
        .py()?;
    if let Some(f) = outcome.failures.first() {
        return Err(PyRuntimeError::new_err(format!(
            "{} grid cells failed, first {}: {}",
            outcome.failures.len(),
            f.cell.dir_name(),
            f.error
        )));
    }
    Ok(outcome.csv)
}

#[pymodule]
#[pyo3(name = "fairgan")]
fn fairgan_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(fairness_discrepancy, m)?)?;
    m.add_function(wrap_pyfunction!(frechet_sq, m)?)?;
    m.add_function(wrap_pyfunction!(grid, m)?)?;
    Ok(())
}
