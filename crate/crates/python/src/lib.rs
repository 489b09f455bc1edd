//! Python bindings for the near-field localization core.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nfsync_core::estimate::{localize_far_field_known_bias, localize_near_field};
use nfsync_core::fim::{self, PilotSpectrum};
use nfsync_core::{scenario, synth, EstimatorConfig, ModelKind, ObservationGrid, Scatterer};

fn err(e: nfsync_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn model(name: &str) -> PyResult<ModelKind> {
    name.parse().map_err(err)
}

/// Uplink scenario: UE position and clock bias, OFDM numerology and array.
#[pyclass(name = "Scenario", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: nfsync_core::Scenario,
}

#[pymethods]
impl PyScenario {
    /// Nominal 28 GHz setup with the UE at `(x, y)` meters.
    #[new]
    #[pyo3(signature = (x = 1.0, y = 8.0))]
    fn new(x: f64, y: f64) -> Self {
        Self {
            inner: nfsync_core::Scenario::nominal(x, y),
        }
    }

    #[staticmethod]
    fn polar(d: f64, theta: f64) -> Self {
        Self {
            inner: nfsync_core::Scenario::nominal_polar(d, theta),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: nfsync_core::Scenario::from_toml_str(text).map_err(err)?,
        })
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    fn add_scatterer(&mut self, x: f64, y: f64, rcs: f64) {
        self.inner.scatterers.push(Scatterer::new(x, y, rcs));
    }

    fn set_spacing_over_lambda(&mut self, ratio: f64) {
        self.inner = self.inner.clone().with_spacing_over_lambda(ratio);
    }

    #[getter]
    fn position(&self) -> (f64, f64) {
        (self.inner.ue_position.x, self.inner.ue_position.y)
    }

    #[setter]
    fn set_position(&mut self, p: (f64, f64)) {
        self.inner.ue_position = nfsync_core::Point2::new(p.0, p.1);
    }

    #[getter]
    fn clock_bias(&self) -> f64 {
        self.inner.clock_bias
    }

    #[setter]
    fn set_clock_bias(&mut self, b: f64) {
        self.inner.clock_bias = b;
    }

    #[getter]
    fn bandwidth_hz(&self) -> f64 {
        self.inner.bandwidth_hz
    }

    #[setter]
    fn set_bandwidth_hz(&mut self, w: f64) {
        self.inner.bandwidth_hz = w;
    }

    #[getter]
    fn tx_power_mw(&self) -> f64 {
        self.inner.tx_power_mw
    }

    #[setter]
    fn set_tx_power_mw(&mut self, p: f64) {
        self.inner.tx_power_mw = p;
    }

    #[getter]
    fn noise_psd(&self) -> f64 {
        self.inner.noise_psd
    }

    #[setter]
    fn set_noise_psd(&mut self, n0: f64) {
        self.inner.noise_psd = n0;
    }

    #[getter]
    fn num_antennas(&self) -> usize {
        self.inner.num_antennas
    }

    #[getter]
    fn num_subcarriers(&self) -> usize {
        self.inner.num_subcarriers
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.inner.spacing
    }

    #[getter]
    fn wavelength(&self) -> f64 {
        self.inner.wavelength()
    }

    #[getter]
    fn distance(&self) -> f64 {
        self.inner.distance()
    }

    #[getter]
    fn bearing(&self) -> f64 {
        self.inner.bearing()
    }

    #[getter]
    fn aperture(&self) -> f64 {
        self.inner.aperture()
    }

    #[getter]
    fn far_field_distance(&self) -> f64 {
        self.inner.far_field_distance()
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "Scenario(x={}, y={}, bias={}, fc={}, W={}, K+1={}, N+1={})",
            s.ue_position.x,
            s.ue_position.y,
            s.clock_bias,
            s.carrier_hz,
            s.bandwidth_hz,
            s.num_subcarriers,
            s.num_antennas
        )
    }
}

/// Noisy received samples with their pilots.
#[pyclass(name = "Observation", from_py_object)]
#[derive(Clone)]
struct PyObservation {
    inner: ObservationGrid,
}

#[pymethods]
impl PyObservation {
    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.samples.dim()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn pilots(&self) -> Vec<Complex64> {
        self.inner.pilots.clone()
    }

    /// Samples as a list of rows, one per antenna.
    #[getter]
    fn samples(&self) -> Vec<Vec<Complex64>> {
        self.inner
            .samples
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect()
    }
}

/// Phase of antenna `n`, subcarrier `k` in radians.
#[pyfunction]
fn phase(model_name: &str, n: i64, k: i64, s: &PyScenario) -> PyResult<f64> {
    scenario::phase_rad(model(model_name)?, n, k, &s.inner).map_err(err)
}

/// Path difference ξ in meters.
#[pyfunction]
fn phase_m(model_name: &str, n: i64, k: i64, s: &PyScenario) -> PyResult<f64> {
    scenario::phase(model(model_name)?, n, k, &s.inner).map_err(err)
}

#[pyfunction]
fn channel_gain(n: i64, s: &PyScenario) -> PyResult<Complex64> {
    scenario::channel_gain(n, &s.inner).map_err(err)
}

#[pyfunction]
fn regime<'py>(py: Python<'py>, s: &PyScenario) -> PyResult<Bound<'py, PyDict>> {
    let r = scenario::classify_regime(&s.inner);
    let d = PyDict::new(py);
    d.set_item("field_zone", format!("{:?}", r.field_zone))?;
    d.set_item("bandwidth_class", format!("{:?}", r.bandwidth_class))?;
    d.set_item("beam_squint", r.beam_squint)?;
    d.set_item("far_field_distance_m", r.far_field_distance_m)?;
    d.set_item("reactive_distance_m", r.reactive_distance_m)?;
    d.set_item("wideband_threshold_hz", r.wideband_threshold_hz)?;
    Ok(d)
}

/// 4×4 FIM over (ψ, d, θ, B) with a flat pilot spectrum; `position=True`
/// maps it to (ψ, x, y, B).
#[pyfunction]
#[pyo3(signature = (model_name, s, position = false))]
fn fim_matrix(model_name: &str, s: &PyScenario, position: bool) -> PyResult<Vec<Vec<f64>>> {
    let j = fim::fim(
        model(model_name)?,
        &s.inner,
        &PilotSpectrum::uniform(&s.inner),
    )
    .map_err(err)?;
    let m = if position {
        fim::to_position_domain(&j, &s.inner).map_err(err)?.0
    } else {
        j.0
    };
    Ok((0..4)
        .map(|r| (0..4).map(|c| m[(r, c)]).collect())
        .collect())
}

/// Position error bound in meters; infinite when not identifiable.
#[pyfunction]
#[pyo3(signature = (model_name, s, bias_known = false))]
fn peb(model_name: &str, s: &PyScenario, bias_known: bool) -> PyResult<f64> {
    fim::peb_for(model(model_name)?, &s.inner, bias_known).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (s, model_name = "general", seed = 0))]
fn synthesize(s: &PyScenario, model_name: &str, seed: u64) -> PyResult<PyObservation> {
    Ok(PyObservation {
        inner: synth::synthesize(&s.inner, model(model_name)?, seed).map_err(err)?,
    })
}

fn estimator(d_bar_m: f64, pad_spatial: usize, pad_freq: usize) -> EstimatorConfig {
    EstimatorConfig {
        d_bar_m,
        pad_spatial,
        pad_freq,
        ..EstimatorConfig::default()
    }
}

/// Sub-array joint localization and synchronization.
#[pyfunction]
#[pyo3(signature = (obs, s, d_bar_m = 2.0, pad_spatial = 10, pad_freq = 1))]
fn localize<'py>(
    py: Python<'py>,
    obs: &PyObservation,
    s: &PyScenario,
    d_bar_m: f64,
    pad_spatial: usize,
    pad_freq: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = estimator(d_bar_m, pad_spatial, pad_freq);
    let r = localize_near_field(&obs.inner, &s.inner, &cfg).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("position", (r.position_hat.x, r.position_hat.y))?;
    d.set_item("bias", r.bias_hat)?;
    d.set_item("identifiable", r.identifiable)?;
    d.set_item("converged", r.converged)?;
    d.set_item("subarray_size", r.subarray_size)?;
    d.set_item("num_subarrays", r.measurements.len())?;
    Ok(d)
}

/// Full-array far-field position estimate given the clock bias.
#[pyfunction]
#[pyo3(signature = (obs, s, bias, pad_spatial = 10, pad_freq = 1))]
fn localize_far_field(
    obs: &PyObservation,
    s: &PyScenario,
    bias: f64,
    pad_spatial: usize,
    pad_freq: usize,
) -> PyResult<(f64, f64)> {
    let cfg = estimator(2.0, pad_spatial, pad_freq);
    let p = localize_far_field_known_bias(&obs.inner, &s.inner, bias, &cfg).map_err(err)?;
    Ok((p.x, p.y))
}

#[pymodule]
fn nfsync(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyObservation>()?;
    m.add_function(wrap_pyfunction!(phase, m)?)?;
    m.add_function(wrap_pyfunction!(phase_m, m)?)?;
    m.add_function(wrap_pyfunction!(channel_gain, m)?)?;
    m.add_function(wrap_pyfunction!(regime, m)?)?;
    m.add_function(wrap_pyfunction!(fim_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(peb, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(localize, m)?)?;
    m.add_function(wrap_pyfunction!(localize_far_field, m)?)?;
    Ok(())
}
