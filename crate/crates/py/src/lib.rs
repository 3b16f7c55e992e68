//! Python bindings: scenarios, rasterization, ground-truth labelling, the
//! losses, checkpointed models and closed-loop evaluation. Arrays cross the
//! boundary as numpy arrays in (channel,) row, column order.

use std::path::PathBuf;

use numpy::ndarray::{Array2, Array3};
use numpy::{IntoPyArray, PyArray2, PyArray3, PyReadonlyArray2, PyReadonlyArray3};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use heatplan::config::RunConfig;
use heatplan::heatmap::{self, argmax_goal, GtConfig, Heatmap, PatchRegion};
use heatplan::nnet::{load_checkpoint, Checkpoint};
use heatplan::raster::{BevRaster, RasterConfig};
use heatplan::scenario::{self, Scenario, ScenarioCategory};
use heatplan::sim::{self, ExpertReplay, FullStop, OraclePlanner, Planner, SimConfig};
use heatplan::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::File { .. } => PyOSError::new_err(e.to_string()),
        Error::Config(_)
        | Error::Parse { .. }
        | Error::Dimension(_)
        | Error::Version { .. }
        | Error::Index(_)
        | Error::Label(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn raster_config(size: usize) -> PyResult<RasterConfig> {
    let cfg = RasterConfig::with_size(size);
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

fn heatmap_array<'py>(py: Python<'py>, h: Heatmap) -> Bound<'py, PyArray2<f64>> {
    Array2::from_shape_vec((h.height, h.width), h.data)
        .expect("heatmap shape")
        .into_pyarray(py)
}

fn heatmap_from(a: &PyReadonlyArray2<f64>) -> Heatmap {
    let v = a.as_array();
    Heatmap {
        height: v.nrows(),
        width: v.ncols(),
        data: v.iter().copied().collect(),
    }
}

fn check_frame(s: &Scenario, frame: usize, cfg: &RasterConfig) -> PyResult<()> {
    let last = s.n_frames.saturating_sub(scenario::HORIZON_FRAMES + 1);
    if frame < cfg.n_history || frame > last {
        return Err(PyValueError::new_err(format!(
            "frame {frame} outside {}..={last}",
            cfg.n_history
        )));
    }
    Ok(())
}

/// A generated or loaded driving scenario.
#[pyclass(name = "Scenario", module = "heatplan", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    /// Procedurally generates a scenario of `category` (for example
    /// "LaneFollowing" or "lane-following").
    #[staticmethod]
    fn generate(category: &str, seed: u64) -> PyResult<Self> {
        let c: ScenarioCategory = category.parse().map_err(py_err)?;
        let inner = scenario::generate_scenario(c, seed, &Default::default()).map_err(py_err)?;
        Ok(PyScenario { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyScenario {
            inner: scenario::load_scenario(path).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyScenario {
            inner: scenario::scenario_from_str(text).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        scenario::save_scenario(&self.inner, path).map_err(py_err)
    }

    fn to_json(&self) -> String {
        scenario::scenario_to_string(&self.inner)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    #[getter]
    fn category(&self) -> &'static str {
        self.inner.category.name()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn n_frames(&self) -> usize {
        self.inner.n_frames
    }

    /// Logged ego pose `(x, y, yaw)` at `frame`.
    fn ego_pose(&self, frame: usize) -> PyResult<(f64, f64, f64)> {
        if frame >= self.inner.n_frames {
            return Err(PyValueError::new_err(format!("frame {frame} out of range")));
        }
        let p = self.inner.ego_pose(frame);
        Ok((p.x, p.y, p.yaw))
    }

    fn __repr__(&self) -> String {
        format!("Scenario('{}', frames={})", self.inner.name(), self.inner.n_frames)
    }
}

/// Ego-centred bird's-eye-view raster of `frame`, shape `(C, size, size)`.
#[pyfunction]
#[pyo3(signature = (scenario, frame, size = 128))]
fn rasterize<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    frame: usize,
    size: usize,
) -> PyResult<Bound<'py, PyArray3<f32>>> {
    let cfg = raster_config(size)?;
    check_frame(&scenario.inner, frame, &cfg)?;
    let r = heatplan::raster::rasterize(&scenario.inner, frame, &cfg, 0.0).map_err(py_err)?;
    Ok(Array3::from_shape_vec((r.channels, r.height, r.width), r.data)
        .expect("raster shape")
        .into_pyarray(py))
}

/// Ground-truth goal heatmap of `frame`: a dict with `heatmap`, `weights`,
/// `goal` (row, col) and `sigma`.
#[pyfunction]
#[pyo3(signature = (scenario, frame, size = 128))]
fn label<'py>(py: Python<'py>, scenario: &PyScenario, frame: usize, size: usize) -> PyResult<Bound<'py, PyDict>> {
    let cfg = raster_config(size)?;
    check_frame(&scenario.inner, frame, &cfg)?;
    let gt = heatmap::label_frame(&scenario.inner, frame, &cfg, &GtConfig::default(), 0.0).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("goal", (gt.goal.pixel.row, gt.goal.pixel.col))?;
    d.set_item("sigma", gt.goal.sigma_used)?;
    d.set_item("heatmap", heatmap_array(py, gt.heatmap))?;
    d.set_item("weights", heatmap_array(py, gt.weights))?;
    Ok(d)
}

/// Truncated, unnormalized Gaussian centred at continuous `(row, col)`.
#[pyfunction]
fn gaussian_kernel<'py>(
    py: Python<'py>,
    center: (f64, f64),
    sigma: f64,
    height: usize,
    width: usize,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    if !(sigma > 0.0) {
        return Err(PyValueError::new_err("sigma must be positive"));
    }
    Ok(heatmap_array(py, heatmap::gaussian_kernel(center, sigma, height, width)))
}

fn loss_inputs(
    pred: &PyReadonlyArray2<f64>,
    gt: &PyReadonlyArray2<f64>,
    patch_fraction: f64,
) -> PyResult<(Heatmap, Heatmap, PatchRegion)> {
    if !(patch_fraction > 0.0 && patch_fraction <= 1.0) {
        return Err(PyValueError::new_err("patch_fraction must lie in (0, 1]"));
    }
    let (p, g) = (heatmap_from(pred), heatmap_from(gt));
    let patch = PatchRegion::centered(g.height, g.width, patch_fraction);
    Ok((p, g, patch))
}

/// Weighted squared error over the centre patch.
#[pyfunction]
#[pyo3(signature = (pred, gt, weights, patch_fraction = 0.5))]
fn hourglass_loss(
    pred: PyReadonlyArray2<f64>,
    gt: PyReadonlyArray2<f64>,
    weights: PyReadonlyArray2<f64>,
    patch_fraction: f64,
) -> PyResult<f64> {
    let (p, g, patch) = loss_inputs(&pred, &gt, patch_fraction)?;
    let w = heatmap_from(&weights);
    Ok(heatplan::loss::hourglass_loss(&p, &g, &w, &patch).map_err(py_err)?.value)
}

/// Unweighted squared error over the centre patch.
#[pyfunction]
#[pyo3(signature = (pred, gt, patch_fraction = 0.5))]
fn mse_loss(pred: PyReadonlyArray2<f64>, gt: PyReadonlyArray2<f64>, patch_fraction: f64) -> PyResult<f64> {
    let (p, g, patch) = loss_inputs(&pred, &gt, patch_fraction)?;
    Ok(heatplan::loss::mse_loss(&p, &g, &patch).map_err(py_err)?.value)
}

/// A planner network with its optimizer state, as stored in a checkpoint.
#[pyclass(name = "Model", module = "heatplan", frozen)]
pub struct PyModel {
    ck: Checkpoint,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            ck: load_checkpoint(path).map_err(py_err)?,
        })
    }

    /// Freshly initialized network for `size`x`size` rasters.
    #[staticmethod]
    #[pyo3(signature = (size = 64, seed = 0))]
    fn new(size: usize, seed: u64) -> PyResult<Self> {
        let mut cfg = RunConfig::default();
        cfg.raster = raster_config(size)?;
        cfg.net.init_seed = seed;
        cfg.validate().map_err(py_err)?;
        Ok(PyModel {
            ck: heatplan::pipeline::new_checkpoint(&cfg).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        heatplan::nnet::save_checkpoint(&self.ck, path).map_err(py_err)
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.ck.model.n_params()
    }

    #[getter]
    fn step(&self) -> u64 {
        self.ck.adam.step
    }

    #[getter]
    fn raster_size(&self) -> (usize, usize) {
        (self.ck.raster.height, self.ck.raster.width)
    }

    /// Predicted heatmap for a `(C, H, W)` raster and its argmax goal pixel.
    fn predict<'py>(
        &self,
        py: Python<'py>,
        raster: PyReadonlyArray3<f32>,
    ) -> PyResult<(Bound<'py, PyArray2<f64>>, (usize, usize))> {
        let v = raster.as_array();
        let (c, h, w) = v.dim();
        let r = BevRaster {
            channels: c,
            height: h,
            width: w,
            data: v.iter().copied().collect(),
        };
        let (heat, _) = self.ck.model.fcn_forward(&r).map_err(py_err)?;
        let px = argmax_goal(&heat, &GtConfig::default().patch(h, w));
        Ok((heatmap_array(py, heat), (px.row, px.col)))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model({} parameters, {}x{} raster, step {})",
            self.ck.model.n_params(),
            self.ck.raster.height,
            self.ck.raster.width,
            self.ck.adam.step
        )
    }
}

/// Closed-loop evaluation. `planner` is "oracle", "expert", "full-stop" or
/// "learned" (which needs `model`). Returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (scenarios, planner = "oracle", model = None, ood = false, use_kinematic = false, seed = 0))]
fn evaluate<'py>(
    py: Python<'py>,
    scenarios: Vec<PyRef<'py, PyScenario>>,
    planner: &str,
    model: Option<PyRef<'py, PyModel>>,
    ood: bool,
    use_kinematic: bool,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = RunConfig::default();
    cfg.ood.seed = seed;
    let p: Box<dyn Planner> = match planner {
        "oracle" => Box::new(OraclePlanner::default()),
        "expert" => Box::new(ExpertReplay),
        "full-stop" => Box::new(FullStop),
        "learned" => {
            let m = model.ok_or_else(|| PyValueError::new_err("planner 'learned' needs a model"))?;
            cfg.raster = m.ck.raster.clone();
            Box::new(heatplan::cli::learned_planner(m.ck.clone(), &cfg, !use_kinematic).map_err(py_err)?)
        }
        other => return Err(PyValueError::new_err(format!("unknown planner '{other}'"))),
    };
    let mut suite: Vec<Scenario> = scenarios.iter().map(|s| s.inner.clone()).collect();
    if ood {
        suite = sim::make_ood_suite(&suite, &cfg.ood).map_err(py_err)?;
    }
    let report = sim::evaluate_suite(&suite, p.as_ref(), &SimConfig::default()).map_err(py_err)?;
    let text = serde_json::to_string(&report).expect("report serializes");
    py.import("json")?.call_method1("loads", (text,))
}

/// Runs the command line with `args` (without the program name) and returns
/// its exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    heatplan::cli::run(std::iter::once("heatplan".to_string()).chain(args))
}

#[pymodule]
#[pyo3(name = "heatplan")]
fn heatplan_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(rasterize, m)?)?;
    m.add_function(wrap_pyfunction!(label, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(hourglass_loss, m)?)?;
    m.add_function(wrap_pyfunction!(mse_loss, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("CATEGORIES", ScenarioCategory::ALL.map(|c| c.name()).to_vec())?;
    Ok(())
}
