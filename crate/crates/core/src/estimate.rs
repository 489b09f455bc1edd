//! Angle/delay estimation with a zero-padded 2D FFT, and sub-array joint
//! localization and synchronization.
//!
//! The estimator only reads the array and OFDM configuration from the
//! [`Scenario`] (wavelength, spacing, subcarrier spacing, element count and
//! noise level); the UE position and clock bias are never consulted.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use ndarray::{s, Array2, ArrayView2};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::scenario::{Point2, Scenario, SPEED_OF_LIGHT};
use crate::synth::ObservationGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightsMode {
    #[default]
    Uniform,
    /// Variances from the per-sub-array plane-wave Fisher information.
    Crb,
}

/// Coarse search box for the bearing-intersection solver.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(default)]
pub struct GridBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridBounds {
    fn default() -> Self {
        Self {
            x_min: -20.0,
            x_max: 20.0,
            y_max: 20.0,
            nx: 200,
            ny: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Spatial FFT length is `pad_spatial · N` (N+1 elements in the full array).
    pub pad_spatial: usize,
    /// Frequency FFT length is `pad_freq · (K+1)`.
    pub pad_freq: usize,
    /// Expected UE distance used to size the sub-arrays.
    pub d_bar_m: f64,
    pub weights_mode: WeightsMode,
    pub grid: GridBounds,
    pub max_iterations: usize,
    pub step_tolerance_m: f64,
    /// 3-point parabolic refinement of the spectrum peak on both axes.
    pub interpolate: bool,
    /// Forces the sub-array size instead of deriving it from `d_bar_m`.
    pub subarray_size: Option<usize>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            pad_spatial: 10,
            pad_freq: 1,
            d_bar_m: 2.0,
            weights_mode: WeightsMode::Uniform,
            grid: GridBounds::default(),
            max_iterations: 50,
            step_tolerance_m: 1e-9,
            interpolate: false,
            subarray_size: None,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pad_spatial < 1 || self.pad_freq < 1 {
            return Err(Error::InvalidInput("pad factors must be >= 1".into()));
        }
        let g = &self.grid;
        if g.nx < 1 || g.ny < 1 || !(g.x_max > g.x_min) || !(g.y_max > 0.0) {
            return Err(Error::InvalidInput("degenerate search grid".into()));
        }
        Ok(())
    }

    /// FFT sizes `(spatial, frequency)` for a block of `rows` antennas.
    pub fn fft_points(&self, rows: usize, s: &Scenario) -> (usize, usize) {
        let full_n = s.num_antennas.saturating_sub(1).max(1);
        let spatial = (self.pad_spatial * full_n).max(rows);
        (spatial, self.pad_freq * s.num_subcarriers)
    }
}

/// Column `k` divided by its pilot, i.e. `Y Sᴴ(SSᴴ)⁻¹`.
pub fn remove_pilots(obs: &ObservationGrid) -> Result<Array2<Complex64>> {
    if obs.pilots.len() != obs.samples.ncols() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} pilots", obs.samples.ncols()),
            got: obs.pilots.len().to_string(),
        });
    }
    if obs.pilots.iter().any(|p| p.norm_sqr() == 0.0) {
        return Err(Error::InvalidInput("zero pilot symbol".into()));
    }
    let mut out = obs.samples.clone();
    for (mut col, p) in out.columns_mut().into_iter().zip(&obs.pilots) {
        col.mapv_inplace(|v| v / p);
    }
    Ok(out)
}

/// Unitary 2D DFT of `yc` zero-padded to `spatial × freq` points.
pub fn fft2_spectrum(
    yc: ArrayView2<'_, Complex64>,
    spatial: usize,
    freq: usize,
) -> Result<Array2<Complex64>> {
    let (rows, cols) = yc.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput("empty observation block".into()));
    }
    if spatial < rows || freq < cols {
        return Err(Error::InvalidInput(format!(
            "FFT size {spatial}x{freq} smaller than the {rows}x{cols} input"
        )));
    }
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(freq);
    let col_fft = planner.plan_fft_forward(spatial);

    let mut z = Array2::<Complex64>::zeros((spatial, freq));
    z.slice_mut(s![..rows, ..cols]).assign(&yc);
    // rows beyond `rows` stay zero through the frequency pass
    let mut buf = vec![Complex64::new(0.0, 0.0); freq.max(spatial)];
    for r in 0..rows {
        let line = &mut buf[..freq];
        for (dst, src) in line.iter_mut().zip(z.row(r).iter()) {
            *dst = *src;
        }
        row_fft.process(line);
        for (dst, src) in z.row_mut(r).iter_mut().zip(line.iter()) {
            *dst = *src;
        }
    }
    let norm = 1.0 / ((spatial * freq) as f64).sqrt();
    for c in 0..freq {
        let line = &mut buf[..spatial];
        for (dst, src) in line.iter_mut().zip(z.column(c).iter()) {
            *dst = *src;
        }
        col_fft.process(line);
        for (dst, src) in z.column_mut(c).iter_mut().zip(line.iter()) {
            *dst = *src * norm;
        }
    }
    Ok(z)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumPeak {
    pub spatial_bin: usize,
    pub frequency_bin: usize,
    pub cos_theta: f64,
    /// δ̂ = d − B in meters.
    pub delta: f64,
    pub magnitude: f64,
}

fn wrap_cycles(bin: f64, len: usize) -> f64 {
    let f = bin / len as f64;
    if f >= 0.5 {
        f - 1.0
    } else {
        f
    }
}

fn parabolic_offset(prev: f64, center: f64, next: f64) -> f64 {
    let denom = prev - 2.0 * center + next;
    if denom.abs() < f64::MIN_POSITIVE || denom >= 0.0 {
        0.0
    } else {
        (0.5 * (prev - next) / denom).clamp(-0.5, 0.5)
    }
}

/// Global |Z| maximum mapped to `(cos θ̂, δ̂)`. Ties go to the lowest
/// row-major index.
pub fn peak_to_params(
    z: &Array2<Complex64>,
    s: &Scenario,
    interpolate: bool,
) -> Result<SpectrumPeak> {
    let (a, b) = z.dim();
    if a == 0 || b == 0 {
        return Err(Error::InvalidInput("empty spectrum".into()));
    }
    let mut best = (0usize, 0usize, -1.0f64);
    for ((r, c), v) in z.indexed_iter() {
        let m = v.norm_sqr();
        if m > best.2 {
            best = (r, c, m);
        }
    }
    let (r, c, m) = best;
    let (mut fr, mut fc) = (r as f64, c as f64);
    if interpolate {
        let mag = |rr: usize, cc: usize| z[(rr, cc)].norm();
        if a >= 3 {
            fr += parabolic_offset(mag((r + a - 1) % a, c), mag(r, c), mag((r + 1) % a, c));
        }
        if b >= 3 {
            fc += parabolic_offset(mag(r, (c + b - 1) % b), mag(r, c), mag(r, (c + 1) % b));
        }
    }
    let nu = wrap_cycles(fr, a);
    let cos_theta = (nu * s.wavelength() / s.spacing).clamp(-1.0, 1.0);
    let delta = -wrap_cycles(fc, b) * SPEED_OF_LIGHT / s.subcarrier_spacing();
    Ok(SpectrumPeak {
        spatial_bin: r,
        frequency_bin: c,
        cos_theta,
        delta,
        magnitude: m.sqrt(),
    })
}

/// Largest sub-array that is in its own far field at distance `d_bar`,
/// `2(ÑΔ)²/λ ≤ d̄`, and narrowband with a 10× margin, `Ñ ≤ c/(10WΔ)`.
pub fn choose_subarray_size(d_bar: f64, s: &Scenario) -> usize {
    let eps = 1e-9;
    let full = s.num_antennas.max(1);
    let far = if d_bar > 0.0 {
        ((d_bar * s.wavelength() / 2.0).sqrt() / s.spacing + eps).floor()
    } else {
        0.0
    };
    let mut n = (far as usize).clamp(1, full);
    let cap = (SPEED_OF_LIGHT / (10.0 * s.bandwidth_hz * s.spacing) + eps).floor();
    if cap >= 1.0 {
        n = n.min(cap as usize);
    }
    n
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubarrayMeasurement {
    pub center: Point2,
    pub theta_hat: f64,
    pub delta_hat: f64,
    pub var_theta: f64,
    pub var_delta: f64,
    pub peak: SpectrumPeak,
}

/// Splits the pilot-free grid into ⌊(N+1)/Ñ⌋ consecutive row blocks and
/// estimates a bearing and pseudo-range per block. Leftover rows are dropped.
pub fn subarray_measurements(
    obs: &ObservationGrid,
    subarray: usize,
    s: &Scenario,
    cfg: &EstimatorConfig,
) -> Result<Vec<SubarrayMeasurement>> {
    cfg.validate()?;
    let rows = obs.num_antennas();
    if rows != s.num_antennas || obs.num_subcarriers() != s.num_subcarriers {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", s.num_antennas, s.num_subcarriers),
            got: format!("{}x{}", rows, obs.num_subcarriers()),
        });
    }
    if subarray < 1 || subarray > rows {
        return Err(Error::InvalidInput(format!(
            "sub-array size {subarray} outside [1, {rows}]"
        )));
    }
    let yc = remove_pilots(obs)?;
    let (spatial, freq) = cfg.fft_points(subarray, s);
    let half = s.half_antennas();
    let mut out = Vec::with_capacity(rows / subarray);
    for block in 0..rows / subarray {
        let r0 = block * subarray;
        let view = yc.slice(s![r0..r0 + subarray, ..]);
        let z = fft2_spectrum(view, spatial, freq)?;
        let peak = peak_to_params(&z, s, cfg.interpolate)?;
        let center_n = (r0 as f64 + (subarray as f64 - 1.0) / 2.0) - half as f64;
        let center = Point2::new(center_n * s.spacing, 0.0);
        let theta_hat = peak.cos_theta.acos().clamp(1e-9, PI - 1e-9);
        let (var_theta, var_delta) = match cfg.weights_mode {
            WeightsMode::Uniform => (1.0, 1.0),
            WeightsMode::Crb => crb_variances(&peak, subarray, spatial, freq, obs, s),
        };
        out.push(SubarrayMeasurement {
            center,
            theta_hat,
            delta_hat: peak.delta,
            var_theta,
            var_delta,
            peak,
        });
    }
    Ok(out)
}

/// Plane-wave bounds for one sub-array with the gain estimated from the
/// peak height: the peak of a unitary FFT is |α|·Ñ(K+1)/√(AB).
fn crb_variances(
    peak: &SpectrumPeak,
    subarray: usize,
    spatial: usize,
    freq: usize,
    obs: &ObservationGrid,
    s: &Scenario,
) -> (f64, f64) {
    let k1 = obs.num_subcarriers();
    let alpha2 =
        (peak.magnitude * ((spatial * freq) as f64).sqrt() / (subarray as f64 * k1 as f64)).powi(2);
    let hk = (k1 as f64 - 1.0) / 2.0;
    let mut ek0 = 0.0;
    let mut ek2 = 0.0;
    for (i, p) in obs.pilots.iter().enumerate() {
        let k = i as f64 - hk;
        ek0 += p.norm_sqr();
        ek2 += k * k * p.norm_sqr();
    }
    let hn = (subarray as f64 - 1.0) / 2.0;
    let en2: f64 = (0..subarray).map(|i| (i as f64 - hn).powi(2)).sum();
    let g = alpha2 * (2.0 * PI / s.wavelength()).powi(2) / s.noise_psd.max(f64::MIN_POSITIVE);
    let sin2 = (1.0 - peak.cos_theta * peak.cos_theta).max(1e-12);
    let j_theta = g * ek0 * en2 * s.spacing.powi(2) * sin2;
    let j_delta = g * ek2 * s.freq_ratio().powi(2) * subarray as f64;
    let finite = |j: f64| {
        if j > 0.0 && j.is_finite() {
            1.0 / j
        } else {
            1.0
        }
    };
    (finite(j_theta), finite(j_delta))
}

fn bearing_from(center: &Point2, p: &Point2) -> f64 {
    let v = p - center;
    (v.x / v.norm()).clamp(-1.0, 1.0).acos()
}

/// Σ (θ̂ − bearing(x))² / (2σ²).
pub fn bearing_objective(meas: &[SubarrayMeasurement], p: &Point2) -> f64 {
    meas.iter()
        .map(|m| (m.theta_hat - bearing_from(&m.center, p)).powi(2) / (2.0 * m.var_theta))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PositionSolution {
    pub position: Point2,
    pub converged: bool,
    pub objective: f64,
    pub iterations: usize,
}

fn distinct_centers(meas: &[SubarrayMeasurement]) -> usize {
    let mut xs: Vec<f64> = meas.iter().map(|m| m.center.x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    xs.len()
}

/// Weighted bearing-line intersection: coarse grid search followed by
/// Gauss–Newton with step halving. On non-convergence, including iterates
/// that leave the search box, the grid minimizer is returned with
/// `converged = false`.
pub fn solve_position(
    meas: &[SubarrayMeasurement],
    cfg: &EstimatorConfig,
) -> Result<PositionSolution> {
    if distinct_centers(meas) < 2 {
        return Err(Error::NotIdentifiable(
            "bearing intersection needs two distinct sub-array centers".into(),
        ));
    }
    let g = &cfg.grid;
    let mut best = (Point2::new(f64::NAN, f64::NAN), f64::INFINITY);
    for i in 0..g.nx {
        let x = if g.nx == 1 {
            0.5 * (g.x_min + g.x_max)
        } else {
            g.x_min + (g.x_max - g.x_min) * i as f64 / (g.nx - 1) as f64
        };
        for j in 0..g.ny {
            let y = g.y_max * (j + 1) as f64 / g.ny as f64;
            let p = Point2::new(x, y);
            let f = bearing_objective(meas, &p);
            if f < best.1 {
                best = (p, f);
            }
        }
    }
    let (grid_p, grid_f) = best;

    let mut p = grid_p;
    let mut f = grid_f;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..cfg.max_iterations {
        iterations = it + 1;
        let mut h = Matrix2::zeros();
        let mut rhs = Vector2::zeros();
        for m in meas {
            let v = p - m.center;
            let r2 = v.norm_squared();
            let grad = Vector2::new(-v.y / r2, v.x / r2);
            let w = 1.0 / m.var_theta;
            let res = m.theta_hat - bearing_from(&m.center, &p);
            h += w * grad * grad.transpose();
            rhs += w * res * grad;
        }
        let Some(hinv) = h.try_inverse() else { break };
        let step = hinv * rhs;
        if step.norm() < cfg.step_tolerance_m {
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = p + t * step;
            if cand.y > 0.0 {
                let fc = bearing_objective(meas, &cand);
                if fc <= f {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, fc)) => {
                let moved = (cand - p).norm();
                p = cand;
                f = fc;
                if moved < cfg.step_tolerance_m {
                    converged = true;
                    break;
                }
            }
            None => break,
        }
    }
    // a run that escapes the search box is diverging, not converging
    let inside = p.x >= g.x_min && p.x <= g.x_max && p.y > 0.0 && p.y <= g.y_max;
    if converged && inside {
        Ok(PositionSolution {
            position: p,
            converged,
            objective: f,
            iterations,
        })
    } else {
        Ok(PositionSolution {
            position: grid_p,
            converged: false,
            objective: grid_f,
            iterations,
        })
    }
}

/// Weighted mean of `‖x̂ − x̃‖ − δ̂` with weights 1/σ²_δ.
pub fn solve_bias(position: &Point2, meas: &[SubarrayMeasurement]) -> Result<f64> {
    if meas.is_empty() {
        return Err(Error::InvalidInput("no sub-array measurements".into()));
    }
    let (num, den) = meas.iter().fold((0.0, 0.0), |(num, den), m| {
        let w = 1.0 / m.var_delta;
        (
            num + w * ((position - m.center).norm() - m.delta_hat),
            den + w,
        )
    });
    Ok(num / den)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationResult {
    pub position_hat: Point2,
    pub bias_hat: f64,
    /// False when fewer than two distinct sub-arrays with at least two
    /// elements contributed; position and bias are then NaN.
    pub identifiable: bool,
    pub converged: bool,
    pub subarray_size: usize,
    pub measurements: Vec<SubarrayMeasurement>,
}

/// Sub-array localization and synchronization.
pub fn localize_near_field(
    obs: &ObservationGrid,
    s: &Scenario,
    cfg: &EstimatorConfig,
) -> Result<LocalizationResult> {
    let subarray = cfg
        .subarray_size
        .unwrap_or_else(|| choose_subarray_size(cfg.d_bar_m, s));
    let measurements = subarray_measurements(obs, subarray, s, cfg)?;
    let identifiable = subarray >= 2 && distinct_centers(&measurements) >= 2;
    if !identifiable {
        return Ok(LocalizationResult {
            position_hat: Point2::new(f64::NAN, f64::NAN),
            bias_hat: f64::NAN,
            identifiable,
            converged: false,
            subarray_size: subarray,
            measurements,
        });
    }
    let sol = solve_position(&measurements, cfg)?;
    let bias_hat = solve_bias(&sol.position, &measurements)?;
    Ok(LocalizationResult {
        position_hat: sol.position,
        bias_hat,
        identifiable,
        converged: sol.converged,
        subarray_size: subarray,
        measurements,
    })
}

/// Full-array peak, `d̂ = δ̂ + B`, `x̂ = d̂·[cos θ̂, sin θ̂]`.
pub fn localize_far_field_known_bias(
    obs: &ObservationGrid,
    s: &Scenario,
    bias: f64,
    cfg: &EstimatorConfig,
) -> Result<Point2> {
    let meas = subarray_measurements(obs, s.num_antennas, s, cfg)?;
    let m = &meas[0];
    let d_hat = m.delta_hat + bias;
    let cos = m.peak.cos_theta;
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    Ok(Point2::new(d_hat * cos, d_hat * sin))
}
