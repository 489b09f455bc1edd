//! Fisher information for the UE parameters `[ψ, d, θ, B]`, its position-domain
//! form `[ψ, x, y, B]`, and the position error bound.
//!
//! Every model is evaluated two ways: a direct sum over antennas and
//! subcarriers of `Re{∇ᴴμ ∇μ}` (`fim_numeric`), and a closed form built from
//! the subcarrier moments `E_{K,i}`, the array moments `E_{N,i}` and the
//! distance-weighted array sums `A_i^{(j)}`. The closed forms assume a
//! symmetric pilot spectrum so that odd subcarrier moments vanish.
//!
//! Antenna `n` carries amplitude weight `(d/d_n)²` relative to the center
//! element in every model except the plane-wave narrowband one, where all
//! elements share `α₀`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix3, Matrix4, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scenario::{ModelKind, Scenario};

/// Parameter positions inside the 4×4 matrices.
pub const PSI: usize = 0;
pub const D: usize = 1;
pub const THETA: usize = 2;
pub const BIAS: usize = 3;
/// Position-domain ordering shares slots 0 and 3; x and y sit at 1 and 2.
pub const X: usize = 1;
pub const Y: usize = 2;

/// Condition number (after unit-diagonal scaling) above which a FIM is
/// treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Per-subcarrier pilot energies |s[k]|², indexed k = −K/2 … K/2.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotSpectrum {
    energies: Vec<f64>,
}

impl PilotSpectrum {
    pub fn new(energies: Vec<f64>) -> Result<Self> {
        if energies.is_empty() || energies.len().is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "pilot spectrum needs an odd, nonzero length, got {}",
                energies.len()
            )));
        }
        if energies.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::InvalidInput(
                "pilot energies must be finite and strictly positive".into(),
            ));
        }
        Ok(Self { energies })
    }

    /// Flat spectrum at P_t/W on every subcarrier.
    pub fn uniform(s: &Scenario) -> Self {
        Self {
            energies: vec![s.pilot_energy(); s.num_subcarriers],
        }
    }

    pub fn from_pilots(pilots: &[Complex64]) -> Result<Self> {
        Self::new(pilots.iter().map(|p| p.norm_sqr()).collect())
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn half(&self) -> i64 {
        (self.energies.len() as i64 - 1) / 2
    }

    pub fn energy(&self, k: i64) -> f64 {
        self.energies[(k + self.half()) as usize]
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            energies: self.energies.iter().map(|e| e * factor).collect(),
        }
    }

    /// E_{K,i} = Σ_k k^i |s[k]|².
    pub fn moment(&self, i: i32) -> f64 {
        let h = self.half();
        (-h..=h).map(|k| (k as f64).powi(i) * self.energy(k)).sum()
    }

    pub fn is_symmetric(&self) -> bool {
        let h = self.half();
        (1..=h).all(|k| {
            let (a, b) = (self.energy(k), self.energy(-k));
            (a - b).abs() <= 1e-12 * a.max(b)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FimPolar(pub Matrix4<f64>);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FimPosition(pub Matrix4<f64>);

impl FimPolar {
    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }
}

impl FimPosition {
    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }
}

/// ‖a − b‖_F / ‖b‖_F.
pub fn relative_frobenius(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Symmetric to 1e-12 relative and PSD with eigenvalues ≥ −1e-10·λ_max.
pub fn is_valid_fim(m: &Matrix4<f64>) -> bool {
    let scale = m.norm();
    if (m - m.transpose()).norm() > 1e-12 * scale {
        return false;
    }
    let eig = SymmetricEigen::new(0.5 * (m + m.transpose())).eigenvalues;
    let max = eig.max();
    eig.iter().all(|&v| v >= -1e-10 * max.abs())
}

/// γ = |α₀|²(2π/λ)²/N₀.
pub fn gamma(s: &Scenario) -> Result<f64> {
    if !(s.noise_psd > 0.0) {
        return Err(Error::InvalidInput(
            "Fisher information needs N₀ > 0".into(),
        ));
    }
    let lambda = s.wavelength();
    let rho0 = lambda / (2.0 * PI * s.distance());
    Ok(rho0 * rho0 * (2.0 * PI / lambda).powi(2) / s.noise_psd)
}

/// E_{N,i} = Σ_n n^i over the array.
pub fn array_moment(i: i32, s: &Scenario) -> f64 {
    s.antenna_indices().map(|n| (n as f64).powi(i)).sum()
}

/// A_i^{(j)} = Σ_n n^i (d/d_n)^{j+2}.
pub fn a_sum(i: i32, j: i32, s: &Scenario) -> f64 {
    let d = s.distance();
    s.antenna_indices()
        .map(|n| (n as f64).powi(i) * (d / s.antenna_distance(n)).powi(j + 2))
        .sum()
}

/// Analytic derivatives `[∂ξ/∂d, ∂ξ/∂θ, ∂ξ/∂B]` of the phase model.
pub fn phase_gradient(model: ModelKind, n: i64, k: i64, s: &Scenario) -> [f64; 3] {
    let d = s.distance();
    let theta = s.bearing();
    let off = n as f64 * s.spacing;
    let krf = k as f64 * s.freq_ratio();
    let dn = s.antenna_distance(n);
    let radial = (d - off * theta.cos()) / dn;
    let tangential = d * off * theta.sin() / dn;
    match model {
        ModelKind::General => [radial - 1.0 + krf * radial, (1.0 + krf) * tangential, -krf],
        ModelKind::StandardFarField => [krf, off * theta.sin(), -krf],
        ModelKind::NarrowbandNearField => [radial - 1.0 + krf, tangential, -krf],
        ModelKind::WidebandFarField => [krf * radial, off * theta.sin() + krf * tangential, -krf],
    }
}

fn amplitude_weight(model: ModelKind, n: i64, s: &Scenario) -> f64 {
    if model.per_antenna_gain() {
        (s.distance() / s.antenna_distance(n)).powi(2)
    } else {
        1.0
    }
}

fn check_inputs(s: &Scenario, pilots: &PilotSpectrum) -> Result<()> {
    s.check_geometry()?;
    if pilots.len() != s.num_subcarriers {
        return Err(Error::DimensionMismatch {
            expected: format!("{} pilot energies", s.num_subcarriers),
            got: pilots.len().to_string(),
        });
    }
    Ok(())
}

/// Brute-force FIM: sums the per-antenna, per-subcarrier information with
/// the model's exact derivatives. Odd subcarrier moments are not assumed
/// to vanish.
pub fn fim_numeric(model: ModelKind, s: &Scenario, pilots: &PilotSpectrum) -> Result<FimPolar> {
    check_inputs(s, pilots)?;
    let g = gamma(s)?;
    let psi_coef = s.wavelength() / (2.0 * PI);
    let mut j = Matrix4::zeros();
    for n in s.antenna_indices() {
        let w = amplitude_weight(model, n, s);
        let mut acc = Matrix4::zeros();
        for k in s.subcarrier_indices() {
            let [dd, dt, db] = phase_gradient(model, n, k, s);
            let c = nalgebra::Vector4::new(psi_coef, -dd, -dt, -db);
            acc += pilots.energy(k) * c * c.transpose();
        }
        j += w * acc;
    }
    Ok(FimPolar(g * j))
}

fn closed_form_prelude(s: &Scenario, pilots: &PilotSpectrum) -> Result<f64> {
    check_inputs(s, pilots)?;
    if !pilots.is_symmetric() {
        return Err(Error::InvalidInput(
            "closed-form FIM requires a symmetric pilot spectrum".into(),
        ));
    }
    gamma(s)
}

/// γ(J₁ + J₂ + J₃): phase, radial delay and plane-wave angle information.
pub fn fim_standard_closed(s: &Scenario, pilots: &PilotSpectrum) -> Result<FimPolar> {
    let g = closed_form_prelude(s, pilots)?;
    let (ek0, ek2) = (pilots.moment(0), pilots.moment(2));
    let (en0, en2) = (array_moment(0, s), array_moment(2, s));
    let rf = s.freq_ratio();
    let lc = s.wavelength() / (2.0 * PI);
    let sin = s.bearing().sin();

    let mut j = Matrix4::zeros();
    j[(PSI, PSI)] = lc * lc * ek0 * en0;
    // delay information lies along v = [0, 1, 0, −1]
    let radial = ek2 * en0 * rf * rf;
    j[(D, D)] = radial;
    j[(BIAS, BIAS)] = radial;
    j[(D, BIAS)] = -radial;
    j[(BIAS, D)] = -radial;
    j[(THETA, THETA)] = ek0 * en2 * (s.spacing * sin).powi(2);
    Ok(FimPolar(g * j))
}

/// Narrowband near-field closed form: the standard terms rescaled by the
/// distance-weighted sums plus the curvature terms coupling ψ, d and θ.
pub fn fim_nearfield_closed(s: &Scenario, pilots: &PilotSpectrum) -> Result<FimPolar> {
    let g = closed_form_prelude(s, pilots)?;
    let (ek0, ek2) = (pilots.moment(0), pilots.moment(2));
    let rf = s.freq_ratio();
    let lc = s.wavelength() / (2.0 * PI);
    let d = s.distance();
    let delta = s.spacing;
    let (sin, cos) = s.bearing().sin_cos();
    let a = |i, j| a_sum(i, j, s);
    let r = delta * cos / d;

    let mut m = Matrix4::zeros();
    m[(PSI, PSI)] = lc * lc * ek0 * a(0, 0);
    let radial = ek2 * rf * rf * a(0, 0);
    m[(D, D)] = radial;
    m[(BIAS, BIAS)] = radial;
    m[(D, BIAS)] = -radial;
    m[(BIAS, D)] = -radial;
    m[(THETA, THETA)] = ek0 * (delta * sin).powi(2) * a(2, 2);

    // ψ couples to distance and bearing through the wavefront curvature
    let j_d = -r * a(1, 1) + a(0, 1) - a(0, 0);
    let j_t = delta * sin * a(1, 1);
    m[(PSI, D)] = -lc * ek0 * j_d;
    m[(D, PSI)] = m[(PSI, D)];
    m[(PSI, THETA)] = -lc * ek0 * j_t;
    m[(THETA, PSI)] = m[(PSI, THETA)];

    let c11 = a(0, 0) + a(0, 2) - 2.0 * (r * a(1, 2) + a(0, 1) - r * a(1, 1)) + r * r * a(2, 2);
    let c12 = delta * sin * (a(1, 2) - r * a(2, 2) - a(1, 1));
    m[(D, D)] += ek0 * c11;
    m[(D, THETA)] += ek0 * c12;
    m[(THETA, D)] += ek0 * c12;
    Ok(FimPolar(g * m))
}

/// Spatial-wideband far-field closed form: per-antenna delays make the
/// radial information depend on the bearing.
pub fn fim_wideband_closed(s: &Scenario, pilots: &PilotSpectrum) -> Result<FimPolar> {
    let g = closed_form_prelude(s, pilots)?;
    let (ek0, ek2) = (pilots.moment(0), pilots.moment(2));
    let rf = s.freq_ratio();
    let lc = s.wavelength() / (2.0 * PI);
    let d = s.distance();
    let delta = s.spacing;
    let (sin, cos) = s.bearing().sin_cos();
    let a = |i, j| a_sum(i, j, s);
    let r = delta * cos / d;
    let delay = ek2 * rf * rf;

    let mut m = Matrix4::zeros();
    m[(PSI, PSI)] = lc * lc * ek0 * a(0, 0);
    m[(PSI, THETA)] = -lc * ek0 * delta * sin * a(1, 0);
    m[(THETA, PSI)] = m[(PSI, THETA)];
    // the per-antenna delay also depends on θ, adding E_{K,2} terms to the
    // bearing row
    m[(THETA, THETA)] = (delta * sin).powi(2) * (ek0 * a(2, 0) + delay * a(2, 2));
    m[(D, THETA)] = delay * delta * sin * (a(1, 2) - r * a(2, 2));
    m[(THETA, D)] = m[(D, THETA)];
    m[(THETA, BIAS)] = -delay * delta * sin * a(1, 1);
    m[(BIAS, THETA)] = m[(THETA, BIAS)];
    m[(D, D)] = delay * (a(0, 2) + r * (r * a(2, 2) - 2.0 * a(1, 2)));
    m[(D, BIAS)] = delay * (-a(0, 1) + r * a(1, 1));
    m[(BIAS, D)] = m[(D, BIAS)];
    m[(BIAS, BIAS)] = delay * a(0, 0);
    Ok(FimPolar(g * m))
}

/// Closed form where one exists, brute force for the general model.
pub fn fim(model: ModelKind, s: &Scenario, pilots: &PilotSpectrum) -> Result<FimPolar> {
    match model {
        ModelKind::General => fim_numeric(model, s, pilots),
        ModelKind::StandardFarField => fim_standard_closed(s, pilots),
        ModelKind::NarrowbandNearField => fim_nearfield_closed(s, pilots),
        ModelKind::WidebandFarField => fim_wideband_closed(s, pilots),
    }
}

/// Jacobian ∂[ψ, d, θ, B]/∂[ψ, x, y, B].
pub fn position_jacobian(s: &Scenario) -> Result<Matrix4<f64>> {
    let d = s.distance();
    if !(d > 0.0) {
        return Err(Error::SingularGeometry(
            "Jacobian undefined at d = 0".into(),
        ));
    }
    let (x, y) = (s.ue_position.x, s.ue_position.y);
    #[rustfmt::skip]
    let t = Matrix4::new(
        1.0, 0.0,            0.0,           0.0,
        0.0, x / d,          y / d,         0.0,
        0.0, -y / (d * d),   x / (d * d),   0.0,
        0.0, 0.0,            0.0,           1.0,
    );
    Ok(t)
}

/// TᵀJT.
pub fn to_position_domain(j: &FimPolar, s: &Scenario) -> Result<FimPosition> {
    let t = position_jacobian(s)?;
    Ok(FimPosition(t.transpose() * j.0 * t))
}

fn select(m: &Matrix4<f64>, idx: &[usize]) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

/// Condition number of `m` after scaling it to a unit diagonal; infinite
/// when a diagonal entry or eigenvalue is not positive.
pub fn scaled_condition(m: &nalgebra::DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    if diag.iter().any(|v| !(*v > 0.0)) {
        return f64::INFINITY;
    }
    let scaled = nalgebra::DMatrix::from_fn(n, n, |r, c| m[(r, c)] / (diag[r] * diag[c]).sqrt());
    let eig = SymmetricEigen::new(scaled).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Position error bound in meters.
///
/// With unknown bias the full `[ψ, x, y, B]` matrix is inverted; with known
/// bias the B row and column are removed first. Returns `+∞` when the matrix
/// to invert is singular (scaled condition number above 1e12).
pub fn peb(j: &FimPosition, bias_known: bool) -> Result<f64> {
    if j.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("FIM has non-finite entries".into()));
    }
    let idx: &[usize] = if bias_known {
        &[PSI, X, Y]
    } else {
        &[PSI, X, Y, BIAS]
    };
    let m = select(&j.0, idx);
    if scaled_condition(&m) > SINGULAR_CONDITION {
        return Ok(f64::INFINITY);
    }
    let Some(inv) = m.try_inverse() else {
        return Ok(f64::INFINITY);
    };
    let tr = inv[(1, 1)] + inv[(2, 2)];
    Ok(if tr > 0.0 { tr.sqrt() } else { f64::INFINITY })
}

/// PEB for a model at the scenario's geometry with a flat pilot spectrum.
pub fn peb_for(model: ModelKind, s: &Scenario, bias_known: bool) -> Result<f64> {
    let pilots = PilotSpectrum::uniform(s);
    let j = fim(model, s, &pilots)?;
    peb(&to_position_domain(&j, s)?, bias_known)
}

/// The (x, y, B) block of a position-domain FIM.
pub fn position_block(j: &FimPosition) -> Matrix3<f64> {
    j.0.fixed_view::<3, 3>(1, 1).into_owned()
}

/// Equivalent FIM of (x, y, B) with the phase nuisance ψ eliminated
/// (Schur complement). Returns the raw block when `J[ψ,ψ]` vanishes.
pub fn equivalent_position_fim(j: &FimPosition) -> Matrix3<f64> {
    let block = position_block(j);
    let jpp = j.0[(PSI, PSI)];
    if jpp <= 0.0 {
        return block;
    }
    let c = j.0.fixed_view::<3, 1>(1, 0).into_owned();
    block - c * c.transpose() / jpp
}

/// One line of a PEB sweep table.
#[derive(Clone, Debug, PartialEq)]
pub struct PebRow {
    pub model: ModelKind,
    pub d_m: f64,
    pub theta_rad: f64,
    pub delta_over_lambda: f64,
    pub bias_known: bool,
    pub peb_m: f64,
}

impl PebRow {
    pub fn evaluate(model: ModelKind, s: &Scenario, bias_known: bool) -> Result<Self> {
        Ok(Self {
            model,
            d_m: s.distance(),
            theta_rad: s.bearing(),
            delta_over_lambda: s.spacing / s.wavelength(),
            bias_known,
            peb_m: peb_for(model, s, bias_known)?,
        })
    }
}

/// Writes `model,d_m,theta_rad,delta_over_lambda,bias_known,peb_m`.
/// Non-identifiable bounds are written as `inf`.
pub fn write_peb_table<W: Write>(rows: &[PebRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "model",
        "d_m",
        "theta_rad",
        "delta_over_lambda",
        "bias_known",
        "peb_m",
    ])?;
    for r in rows {
        w.write_record([
            r.model.name().to_string(),
            format!("{}", r.d_m),
            format!("{}", r.theta_rad),
            format!("{}", r.delta_over_lambda),
            r.bias_known.to_string(),
            fmt_metric(r.peb_m),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn fmt_metric(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::phase;
    use approx::assert_relative_eq;

    fn nominal() -> Scenario {
        Scenario::nominal_polar(2.0, PI / 4.0)
    }

    /// Central-difference derivative of ξ with respect to (d, θ, B).
    fn fd_gradient(model: ModelKind, n: i64, k: i64, s: &Scenario) -> [f64; 3] {
        let (d, t) = (s.distance(), s.bearing());
        let eval = |dd: f64, tt: f64, bb: f64| {
            let mut p = s.clone().with_polar_position(dd, tt);
            p.clock_bias = bb;
            phase(model, n, k, &p).unwrap()
        };
        let h = 1e-6;
        [
            (eval(d + h, t, s.clock_bias) - eval(d - h, t, s.clock_bias)) / (2.0 * h),
            (eval(d, t + h, s.clock_bias) - eval(d, t - h, s.clock_bias)) / (2.0 * h),
            (eval(d, t, s.clock_bias + h) - eval(d, t, s.clock_bias - h)) / (2.0 * h),
        ]
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let s = Scenario::nominal_polar(1.3, 1.1);
        for m in ModelKind::ALL {
            for &(n, k) in &[(0, 0), (17, -40), (-64, 128), (64, -128), (-5, 3)] {
                let a = phase_gradient(m, n, k, &s);
                let f = fd_gradient(m, n, k, &s);
                for i in 0..3 {
                    assert!(
                        (a[i] - f[i]).abs() < 1e-7 * (1.0 + a[i].abs()),
                        "{m} n={n} k={k} i={i}: {} vs {}",
                        a[i],
                        f[i]
                    );
                }
            }
        }
    }

    #[test]
    fn single_antenna_single_subcarrier() {
        let mut s = nominal();
        s.num_antennas = 1;
        s.num_subcarriers = 1;
        let pilots = PilotSpectrum::uniform(&s);
        for m in ModelKind::ALL {
            let j = fim_numeric(m, &s, &pilots).unwrap().0;
            let lc = s.wavelength() / (2.0 * PI);
            let expect = gamma(&s).unwrap() * lc * lc * pilots.moment(0);
            assert_relative_eq!(j[(PSI, PSI)], expect, max_relative = 1e-12);
            for (r, c) in (0..4).flat_map(|r| (0..4).map(move |c| (r, c))) {
                if (r, c) != (PSI, PSI) {
                    assert_eq!(j[(r, c)], 0.0);
                }
            }
        }
    }

    #[test]
    fn standard_closed_matches_numeric_nominal() {
        let s = nominal();
        let p = PilotSpectrum::uniform(&s);
        let a = fim_standard_closed(&s, &p).unwrap().0;
        let b = fim_numeric(ModelKind::StandardFarField, &s, &p).unwrap().0;
        assert!(relative_frobenius(&a, &b) < 1e-8);
    }

    #[test]
    fn broadside_angle_information() {
        let s = Scenario::nominal_polar(3.0, PI / 2.0);
        assert_eq!(array_moment(0, &s), 129.0);
        assert_eq!(array_moment(2, &s), 178880.0);
        let p = PilotSpectrum::uniform(&s);
        let j = fim_standard_closed(&s, &p).unwrap().0;
        let expect = gamma(&s).unwrap() * p.moment(0) * 178880.0 * s.spacing.powi(2);
        assert_relative_eq!(j[(THETA, THETA)], expect, max_relative = 1e-12);
    }

    #[test]
    fn standard_polar_subblock_is_rank_two() {
        let s = Scenario::nominal_polar(7.0, 1.2);
        let j = fim_standard_closed(&s, &PilotSpectrum::uniform(&s))
            .unwrap()
            .0;
        let sub = j.fixed_view::<3, 3>(1, 1).into_owned();
        let eig = SymmetricEigen::new(sub).eigenvalues;
        let mut v: Vec<f64> = eig.iter().map(|e| e.abs()).collect();
        v.sort_by(f64::total_cmp);
        assert!(v[0] / v[2] < 1e-12);
        assert!(v[1] / v[2] > 1e-12);
    }

    #[test]
    fn standard_equivalent_position_fim_is_rank_two() {
        let s = Scenario::nominal(1.0, 8.0);
        let p = PilotSpectrum::uniform(&s);
        let std = to_position_domain(&fim_standard_closed(&s, &p).unwrap(), &s).unwrap();
        let mut v: Vec<f64> = SymmetricEigen::new(equivalent_position_fim(&std))
            .eigenvalues
            .iter()
            .map(|e| e.abs())
            .collect();
        v.sort_by(f64::total_cmp);
        assert!(v[0] / v[2] < 1e-12);
        let gen =
            to_position_domain(&fim_numeric(ModelKind::General, &s, &p).unwrap(), &s).unwrap();
        let e = SymmetricEigen::new(equivalent_position_fim(&gen)).eigenvalues;
        assert!(e.min() / e.max() > 1e-9);
    }

    #[test]
    fn a_sum_limits_and_symmetry() {
        let far = Scenario::nominal_polar(1e7, 1.0);
        assert_relative_eq!(a_sum(0, 0, &far), 129.0, max_relative = 1e-6);
        assert_relative_eq!(a_sum(2, 2, &far), 178880.0, max_relative = 1e-6);
        let broadside = Scenario::nominal(0.0, 1.5);
        for j in 0..3 {
            assert!(a_sum(1, j, &broadside).abs() < 1e-9);
        }
    }

    #[test]
    fn wideband_bearing_coupling_vanishes_at_broadside() {
        let s = Scenario::nominal(0.0, 2.5);
        let p = PilotSpectrum::uniform(&s);
        let w = fim_wideband_closed(&s, &p).unwrap().0;
        let g = gamma(&s).unwrap();
        let delay = g * p.moment(2) * s.freq_ratio().powi(2);
        assert_relative_eq!(w[(D, D)], delay * a_sum(0, 2, &s), max_relative = 1e-12);
        assert_relative_eq!(w[(D, BIAS)], -delay * a_sum(0, 1, &s), max_relative = 1e-12);
    }

    #[test]
    fn fim_is_linear_in_power() {
        let s = nominal();
        let p = PilotSpectrum::uniform(&s);
        for m in ModelKind::ALL {
            let a = fim_numeric(m, &s, &p).unwrap().0;
            let b = fim_numeric(m, &s, &p.scaled(4.0)).unwrap().0;
            assert!(relative_frobenius(&b, &(4.0 * a)) < 1e-14);
        }
    }

    #[test]
    fn closed_forms_reject_asymmetric_spectrum() {
        let s = nominal();
        let mut e = vec![1.0; s.num_subcarriers];
        e[0] = 2.0;
        let p = PilotSpectrum::new(e).unwrap();
        assert!(fim_standard_closed(&s, &p).is_err());
        assert!(fim_numeric(ModelKind::StandardFarField, &s, &p).is_ok());
    }

    #[test]
    fn pilot_spectrum_validation() {
        assert!(PilotSpectrum::new(vec![]).is_err());
        assert!(PilotSpectrum::new(vec![1.0, 1.0]).is_err());
        assert!(PilotSpectrum::new(vec![1.0, 0.0, 1.0]).is_err());
        let p = PilotSpectrum::new(vec![2.0, 1.0, 2.0]).unwrap();
        assert_eq!(p.moment(0), 5.0);
        assert_eq!(p.moment(1), 0.0);
        assert_eq!(p.moment(2), 4.0);
    }

    #[test]
    fn singular_geometry_is_rejected() {
        let mut s = nominal();
        s.ue_position = nalgebra::Vector2::new(0.0, 0.0);
        let p = PilotSpectrum::uniform(&s);
        assert!(matches!(
            fim_numeric(ModelKind::General, &s, &p),
            Err(Error::SingularGeometry(_))
        ));
        assert!(position_jacobian(&s).is_err());
    }

    #[test]
    fn position_domain_matches_radial_tangential_form() {
        let s = Scenario::nominal(1.0, 8.0);
        let p = PilotSpectrum::uniform(&s);
        let jp = to_position_domain(&fim_standard_closed(&s, &p).unwrap(), &s).unwrap();
        let (x, y, d) = (s.ue_position.x, s.ue_position.y, s.distance());
        let g = gamma(&s).unwrap();
        // delay informs d − B, so the bias component carries the opposite sign
        let ex = nalgebra::Vector3::new(x / d, y / d, -1.0);
        let ep = nalgebra::Vector3::new(-y / d, x / d, 0.0);
        assert_eq!(ex.dot(&ep), 0.0);
        let radial = g * p.moment(2) * array_moment(0, &s) * s.freq_ratio().powi(2);
        let tang = g * p.moment(0) * array_moment(2, &s) * s.spacing.powi(2) * y * y / d.powi(4);
        let expect = radial * ex * ex.transpose() + tang * ep * ep.transpose();
        let got = position_block(&jp);
        assert!((got - expect).norm() < 1e-10 * expect.norm());
    }

    #[test]
    fn standard_unknown_bias_not_identifiable() {
        for d in [0.5, 2.0, 30.0] {
            let s = Scenario::nominal_polar(d, 1.0);
            assert_eq!(
                peb_for(ModelKind::StandardFarField, &s, false).unwrap(),
                f64::INFINITY
            );
            assert!(peb_for(ModelKind::StandardFarField, &s, true)
                .unwrap()
                .is_finite());
        }
    }

    #[test]
    fn peb_rejects_non_finite() {
        let mut m = Matrix4::identity();
        m[(1, 2)] = f64::NAN;
        assert!(peb(&FimPosition(m), true).is_err());
    }

    #[test]
    fn peb_of_identity() {
        let m = FimPosition(Matrix4::identity());
        assert_relative_eq!(peb(&m, false).unwrap(), 2f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(peb(&m, true).unwrap(), 2f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn peb_table_format() {
        let s = Scenario::nominal(1.0, 8.0);
        let rows = vec![
            PebRow::evaluate(ModelKind::StandardFarField, &s, false).unwrap(),
            PebRow::evaluate(ModelKind::General, &s, true).unwrap(),
        ];
        let mut buf = Vec::new();
        write_peb_table(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "model,d_m,theta_rad,delta_over_lambda,bias_known,peb_m"
        );
        assert!(lines.next().unwrap().starts_with("standard,"));
        assert!(text.contains(",false,inf"));
    }
}
