//! Physical scenario, phase models, channel gains and regime classification.
//!
//! All lengths are meters and all frequencies Hz. The array lies on the x axis
//! with element `n` at `[n·Δ, 0]`, `n ∈ {−N/2, …, N/2}`, and the UE sits strictly
//! above it (`y > 0`), so the bearing `θ = arccos(x/d)` lies in `(0, π)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point2 = Vector2<f64>;

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// A point scatterer producing one NLOS path.
#[derive(Clone, Debug, PartialEq)]
pub struct Scatterer {
    pub position: Point2,
    /// Radar cross section in m².
    pub rcs: f64,
}

impl Scatterer {
    pub fn new(x: f64, y: f64, rcs: f64) -> Self {
        Self {
            position: Point2::new(x, y),
            rcs,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub ue_position: Point2,
    /// Clock bias expressed in meters.
    pub clock_bias: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    /// K+1, odd.
    pub num_subcarriers: usize,
    /// N+1, odd.
    pub num_antennas: usize,
    /// Element spacing Δ in meters.
    pub spacing: f64,
    pub tx_power_mw: f64,
    /// Noise spectral level N₀ in mW/GHz.
    pub noise_psd: f64,
    pub scatterers: Vec<Scatterer>,
}

impl Scenario {
    /// The nominal numerical setup: 28 GHz carrier, 100 MHz bandwidth over
    /// 257 subcarriers, 129 half-wavelength elements, 1 mW, N₀ = 4.0049e-9
    /// mW/GHz and a 20 m clock bias.
    pub fn nominal(ue_x: f64, ue_y: f64) -> Self {
        let carrier_hz = 28.0e9;
        let wavelength = SPEED_OF_LIGHT / carrier_hz;
        Self {
            ue_position: Point2::new(ue_x, ue_y),
            clock_bias: 20.0,
            carrier_hz,
            bandwidth_hz: 100.0e6,
            num_subcarriers: 257,
            num_antennas: 129,
            spacing: wavelength / 2.0,
            tx_power_mw: 1.0,
            noise_psd: 4.0049e-9,
            scatterers: Vec::new(),
        }
    }

    /// Nominal setup with the UE placed at distance `d` and bearing `theta`.
    pub fn nominal_polar(d: f64, theta: f64) -> Self {
        Self::nominal(d * theta.cos(), d * theta.sin())
    }

    pub fn with_polar_position(mut self, d: f64, theta: f64) -> Self {
        self.ue_position = Point2::new(d * theta.cos(), d * theta.sin());
        self
    }

    pub fn with_spacing_over_lambda(mut self, ratio: f64) -> Self {
        self.spacing = ratio * self.wavelength();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if !self.ue_position.iter().all(|v| v.is_finite()) || self.ue_position.y <= 0.0 {
            return bad(format!(
                "UE must be strictly above the array (y > 0), got {:?}",
                self.ue_position.as_slice()
            ));
        }
        if self.num_antennas == 0 || self.num_antennas.is_multiple_of(2) {
            return bad(format!(
                "num_antennas must be odd, got {}",
                self.num_antennas
            ));
        }
        if self.num_subcarriers == 0 || self.num_subcarriers.is_multiple_of(2) {
            return bad(format!(
                "num_subcarriers must be odd, got {}",
                self.num_subcarriers
            ));
        }
        if !(self.carrier_hz > 0.0) || !(self.bandwidth_hz > 0.0) {
            return bad("carrier and bandwidth must be positive".into());
        }
        if self.bandwidth_hz > self.carrier_hz / 10.0 {
            return bad(format!(
                "bandwidth {} Hz exceeds f_c/10: beam squint is not modeled",
                self.bandwidth_hz
            ));
        }
        if !(self.spacing > 0.0) {
            return bad("element spacing must be positive".into());
        }
        if !(self.tx_power_mw >= 0.0) || !(self.noise_psd >= 0.0) {
            return bad("power and noise level must be non-negative".into());
        }
        if !self.clock_bias.is_finite() {
            return bad("clock bias must be finite".into());
        }
        for (l, sc) in self.scatterers.iter().enumerate() {
            if !(sc.rcs > 0.0) {
                return bad(format!("scatterer {l} has non-positive RCS"));
            }
            if (sc.position - self.ue_position).norm() < 1e-9 {
                return bad(format!("scatterer {l} coincides with the UE"));
            }
            for n in self.antenna_indices() {
                if (sc.position - self.antenna_position(n)).norm() < 1e-9 {
                    return bad(format!("scatterer {l} coincides with antenna {n}"));
                }
            }
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Δ_f = W/(K+1).
    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth_hz / self.num_subcarriers as f64
    }

    /// r_f = Δ_f/f_c.
    pub fn freq_ratio(&self) -> f64 {
        self.subcarrier_spacing() / self.carrier_hz
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    /// Per-subcarrier pilot energy P_t/W in mW/GHz.
    pub fn pilot_energy(&self) -> f64 {
        self.tx_power_mw / (self.bandwidth_hz * 1e-9)
    }

    pub fn distance(&self) -> f64 {
        self.ue_position.norm()
    }

    pub fn bearing(&self) -> f64 {
        (self.ue_position.x / self.distance())
            .clamp(-1.0, 1.0)
            .acos()
    }

    /// N/2.
    pub fn half_antennas(&self) -> i64 {
        (self.num_antennas as i64 - 1) / 2
    }

    /// K/2.
    pub fn half_subcarriers(&self) -> i64 {
        (self.num_subcarriers as i64 - 1) / 2
    }

    pub fn antenna_indices(&self) -> std::ops::RangeInclusive<i64> {
        let h = self.half_antennas();
        -h..=h
    }

    pub fn subcarrier_indices(&self) -> std::ops::RangeInclusive<i64> {
        let h = self.half_subcarriers();
        -h..=h
    }

    pub fn antenna_position(&self, n: i64) -> Point2 {
        Point2::new(n as f64 * self.spacing, 0.0)
    }

    /// d_n, written in polar form so it agrees bit-for-bit with the
    /// derivatives used by the Fisher information code.
    pub fn antenna_distance(&self, n: i64) -> f64 {
        let d = self.distance();
        let off = n as f64 * self.spacing;
        (d * d - 2.0 * d * off * self.bearing().cos() + off * off).sqrt()
    }

    /// Total aperture (N+1)·Δ.
    pub fn aperture(&self) -> f64 {
        self.num_antennas as f64 * self.spacing
    }

    /// 2·aperture²/λ.
    pub fn far_field_distance(&self) -> f64 {
        2.0 * self.aperture().powi(2) / self.wavelength()
    }

    /// Lower edge of the radiative near-field, 0.62·√(aperture³/λ).
    pub fn reactive_distance(&self) -> f64 {
        0.62 * (self.aperture().powi(3) / self.wavelength()).sqrt()
    }

    pub(crate) fn check_antenna(&self, n: i64) -> Result<()> {
        let h = self.half_antennas();
        if n < -h || n > h {
            return Err(Error::IndexOutOfRange {
                what: "antenna",
                index: n,
                lo: -h,
                hi: h,
            });
        }
        Ok(())
    }

    pub(crate) fn check_subcarrier(&self, k: i64) -> Result<()> {
        let h = self.half_subcarriers();
        if k < -h || k > h {
            return Err(Error::IndexOutOfRange {
                what: "subcarrier",
                index: k,
                lo: -h,
                hi: h,
            });
        }
        Ok(())
    }

    pub(crate) fn check_geometry(&self) -> Result<()> {
        let d = self.distance();
        if !(d > 0.0) {
            return Err(Error::SingularGeometry("UE at the array center".into()));
        }
        for n in self.antenna_indices() {
            if !(self.antenna_distance(n) > 0.0) {
                return Err(Error::SingularGeometry(format!("UE on antenna {n}")));
            }
        }
        Ok(())
    }
}

/// Which phase model ξ_n[k] is in force.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Exact spherical wavefront with per-antenna delay.
    General,
    /// Plane wave, common delay.
    StandardFarField,
    /// Spherical wavefront, common delay.
    NarrowbandNearField,
    /// Plane wave, per-antenna delay.
    WidebandFarField,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::General,
        ModelKind::StandardFarField,
        ModelKind::NarrowbandNearField,
        ModelKind::WidebandFarField,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::General => "general",
            ModelKind::StandardFarField => "standard",
            ModelKind::NarrowbandNearField => "nearfield",
            ModelKind::WidebandFarField => "wideband",
        }
    }

    /// Whether the model keeps the per-antenna amplitude ρ_n, as opposed to
    /// the common gain α₀ of the plane-wave narrowband model.
    pub fn per_antenna_gain(self) -> bool {
        !matches!(self, ModelKind::StandardFarField)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "general" => Ok(ModelKind::General),
            "standard" | "standard_far_field" | "far" => Ok(ModelKind::StandardFarField),
            "nearfield" | "near" | "narrowband_near_field" => Ok(ModelKind::NarrowbandNearField),
            "wideband" | "wide" | "wideband_far_field" => Ok(ModelKind::WidebandFarField),
            other => Err(Error::InvalidInput(format!("unknown model '{other}'"))),
        }
    }
}

/// Phase ξ_n[k] in meters. The radian phase applied to the signal is
/// `−2π·ξ/λ`; `ξ_0[0] = 0` for every model.
pub fn phase(model: ModelKind, n: i64, k: i64, s: &Scenario) -> Result<f64> {
    s.check_antenna(n)?;
    s.check_subcarrier(k)?;
    let d = s.distance();
    let rf = s.freq_ratio();
    let kf = k as f64;
    let b = s.clock_bias;
    let xi = match model {
        ModelKind::General => {
            let dn = s.antenna_distance(n);
            (dn - d) + kf * (dn - b) * rf
        }
        ModelKind::StandardFarField => {
            -(n as f64) * s.spacing * s.bearing().cos() + kf * (d - b) * rf
        }
        ModelKind::NarrowbandNearField => {
            let dn = s.antenna_distance(n);
            dn + (kf * rf - 1.0) * d - kf * rf * b
        }
        ModelKind::WidebandFarField => {
            let dn = s.antenna_distance(n);
            -(n as f64) * s.spacing * s.bearing().cos() + kf * (dn - b) * rf
        }
    };
    Ok(xi)
}

/// Radian phase −2πξ/λ.
pub fn phase_rad(model: ModelKind, n: i64, k: i64, s: &Scenario) -> Result<f64> {
    Ok(-2.0 * PI * phase(model, n, k, s)? / s.wavelength())
}

/// α_n = ρ_n·e^{jψ} with ρ_n = λ/(2π d_n) and ψ = −2π d₀/λ.
pub fn channel_gain(n: i64, s: &Scenario) -> Result<Complex64> {
    s.check_antenna(n)?;
    let lambda = s.wavelength();
    let rho = lambda / (2.0 * PI * s.antenna_distance(n));
    let psi = -2.0 * PI * s.distance() / lambda;
    Ok(Complex64::from_polar(rho, psi))
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FieldZone {
    FarField,
    RadiativeNearField,
    Reactive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BandwidthClass {
    Narrowband,
    SpatialWideband,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegimeReport {
    pub field_zone: FieldZone,
    pub bandwidth_class: BandwidthClass,
    pub beam_squint: bool,
    pub far_field_distance_m: f64,
    pub reactive_distance_m: f64,
    /// c/aperture, the bandwidth above which delays resolve across the array.
    pub wideband_threshold_hz: f64,
}

pub fn classify_regime(s: &Scenario) -> RegimeReport {
    let d = s.distance();
    let ff = s.far_field_distance();
    let reactive = s.reactive_distance();
    let field_zone = if d > ff {
        FieldZone::FarField
    } else if d > reactive {
        FieldZone::RadiativeNearField
    } else {
        FieldZone::Reactive
    };
    let wideband_threshold_hz = SPEED_OF_LIGHT / s.aperture();
    let bandwidth_class = if s.bandwidth_hz > wideband_threshold_hz {
        BandwidthClass::SpatialWideband
    } else {
        BandwidthClass::Narrowband
    };
    RegimeReport {
        field_zone,
        bandwidth_class,
        beam_squint: s.bandwidth_hz > s.carrier_hz / 10.0,
        far_field_distance_m: ff,
        reactive_distance_m: reactive,
        wideband_threshold_hz,
    }
}
