//! Experiment driver: phase plots, PEB sweeps and Monte Carlo RMSE runs,
//! all emitted as rows of one CSV layout.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimate::{localize_far_field_known_bias, localize_near_field, EstimatorConfig};
use crate::fim::{fmt_metric, PebRow};
use crate::scenario::{phase_rad, ModelKind, Point2, Scatterer, Scenario};
use crate::synth::synthesize;

pub const CSV_HEADER: [&str; 8] = [
    "experiment",
    "sweep_value",
    "model",
    "bias_known",
    "metric",
    "value",
    "trials",
    "seed",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    PhasePlot,
    PebVsDistance,
    PebVsSpacing,
    MonteCarloRmse,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::PhasePlot => "phase_plot",
            ExperimentKind::PebVsDistance => "peb_vs_distance",
            ExperimentKind::PebVsSpacing => "peb_vs_spacing",
            ExperimentKind::MonteCarloRmse => "monte_carlo_rmse",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    PebM,
    RmsePosM,
    RmseBiasM,
    MedaePosM,
    MedaeBiasM,
    NonIdentifiableTrials,
    PhaseRad,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::PebM => "peb_m",
            Metric::RmsePosM => "rmse_pos_m",
            Metric::RmseBiasM => "rmse_bias_m",
            Metric::MedaePosM => "medae_pos_m",
            Metric::MedaeBiasM => "medae_bias_m",
            Metric::NonIdentifiableTrials => "nonidentifiable_trials",
            Metric::PhaseRad => "phase_rad",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Metric::PebM,
            Metric::RmsePosM,
            Metric::RmseBiasM,
            Metric::MedaePosM,
            Metric::MedaeBiasM,
            Metric::NonIdentifiableTrials,
            Metric::PhaseRad,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| Error::InvalidInput(format!("unknown metric '{s}'")))
    }
}

/// One CSV line. Infinite values mark non-identifiable bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub sweep_value: f64,
    pub model: String,
    pub bias_known: bool,
    pub metric: Metric,
    pub value: f64,
    pub trials: usize,
    pub seed: u64,
}

pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            format!("{}", r.sweep_value),
            r.model.clone(),
            r.bias_known.to_string(),
            r.metric.name().to_string(),
            // adding zero folds -0 into 0
            fmt_metric(r.value + 0.0),
            r.trials.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Logarithmic grid of `count` points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Bearing of the UE at `[1, 8]` m, used for distance sweeps by default.
pub fn default_bearing() -> f64 {
    8.0f64.atan2(1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub scenario: Scenario,
    pub values: Vec<f64>,
    pub models: Vec<ModelKind>,
    pub bias_known: Vec<bool>,
    pub trials: usize,
    pub seed: u64,
    /// Bearing for distance sweeps and phase plots.
    pub theta_rad: f64,
    pub estimator: EstimatorConfig,
    /// Sub-array sizing distance for Monte Carlo runs; `None` uses each
    /// point's own distance.
    pub d_bar_m: Option<f64>,
    /// Also run the LOS + scatterer variant in Monte Carlo runs.
    pub nlos: bool,
    /// Antenna indices for the phase-vs-subcarrier slice.
    pub phase_antennas: Vec<i64>,
    /// Distance of the phase-vs-subcarrier slice.
    pub phase_slice_distance_m: f64,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        let mut scenario = Scenario::nominal(1.0, 8.0);
        let (values, models, theta) = match kind {
            ExperimentKind::PhasePlot => {
                scenario.bandwidth_hz = 1.4e9;
                (
                    vec![0.1, 0.5, 2.0, 10.0, 100.0],
                    vec![ModelKind::General],
                    PI / 2.0,
                )
            }
            ExperimentKind::PebVsDistance => (
                log_grid(0.5, 100.0, 40),
                ModelKind::ALL.to_vec(),
                default_bearing(),
            ),
            ExperimentKind::PebVsSpacing => (
                (0..=14).map(|i| 0.25 + 0.125 * i as f64).collect(),
                ModelKind::ALL.to_vec(),
                default_bearing(),
            ),
            ExperimentKind::MonteCarloRmse => (
                vec![0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0, 15.0],
                vec![ModelKind::General],
                default_bearing(),
            ),
        };
        Self {
            kind,
            scenario,
            values,
            models,
            bias_known: vec![true, false],
            trials: if kind == ExperimentKind::MonteCarloRmse {
                100
            } else {
                1
            },
            seed: 0,
            theta_rad: theta,
            estimator: EstimatorConfig::default(),
            d_bar_m: None,
            nlos: true,
            phase_antennas: vec![-64, 0, 64],
            phase_slice_distance_m: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidInput("trials must be >= 1".into()));
        }
        if self.values.is_empty() {
            return Err(Error::InvalidInput("empty sweep".into()));
        }
        if self.values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(
                "sweep values must be strictly increasing".into(),
            ));
        }
        if self.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput("sweep values must be positive".into()));
        }
        if self.models.is_empty() || self.bias_known.is_empty() {
            return Err(Error::InvalidInput(
                "no models or bias flags selected".into(),
            ));
        }
        self.estimator.validate()
    }
}

/// Radian phase along the array (k = 0) for each distance, and along the
/// subcarriers for selected antennas at the slice distance.
pub fn run_phase_plot(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let row = |experiment: String, x: f64, model: ModelKind, value: f64| ResultRow {
        experiment,
        sweep_value: x,
        model: model.name().to_string(),
        bias_known: true,
        metric: Metric::PhaseRad,
        value,
        trials: 1,
        seed: cfg.seed,
    };
    for &d in &cfg.values {
        let s = cfg.scenario.clone().with_polar_position(d, cfg.theta_rad);
        for &m in &cfg.models {
            for n in s.antenna_indices() {
                let v = phase_rad(m, n, 0, &s)?;
                rows.push(row(format!("phase_vs_antenna:d={d}"), n as f64, m, v));
            }
        }
    }
    let d = cfg.phase_slice_distance_m;
    let s = cfg.scenario.clone().with_polar_position(d, cfg.theta_rad);
    for &m in &cfg.models {
        for &n in &cfg.phase_antennas {
            for k in s.subcarrier_indices() {
                let v = phase_rad(m, n, k, &s)?;
                rows.push(row(
                    format!("phase_vs_subcarrier:d={d},n={n}"),
                    k as f64,
                    m,
                    v,
                ));
            }
        }
    }
    Ok(rows)
}

fn sweep_scenario(cfg: &ExperimentConfig, value: f64) -> Scenario {
    match cfg.kind {
        ExperimentKind::PebVsSpacing => cfg.scenario.clone().with_spacing_over_lambda(value),
        _ => cfg
            .scenario
            .clone()
            .with_polar_position(value, cfg.theta_rad),
    }
}

/// PEB table ordered by sweep value, then model, then bias flag.
pub fn peb_table(cfg: &ExperimentConfig) -> Result<Vec<PebRow>> {
    cfg.validate()?;
    let per_value: Vec<Result<Vec<PebRow>>> = cfg
        .values
        .par_iter()
        .map(|&v| {
            let s = sweep_scenario(cfg, v);
            let mut out = Vec::new();
            for &m in &cfg.models {
                for &known in &cfg.bias_known {
                    out.push(PebRow::evaluate(m, &s, known)?);
                }
            }
            Ok(out)
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_value {
        rows.extend(r?);
    }
    Ok(rows)
}

pub fn run_peb_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let table = peb_table(cfg)?;
    let per_value = cfg.models.len() * cfg.bias_known.len();
    Ok(table
        .iter()
        .enumerate()
        .map(|(i, r)| ResultRow {
            experiment: cfg.kind.name().to_string(),
            sweep_value: cfg.values[i / per_value],
            model: r.model.name().to_string(),
            bias_known: r.bias_known,
            metric: Metric::PebM,
            value: r.peb_m,
            trials: 1,
            seed: cfg.seed,
        })
        .collect())
}

/// Errors of one Monte Carlo trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialOutcome {
    /// `None` when the sub-array method was not identifiable.
    pub subarray_pos_err: Option<f64>,
    pub subarray_bias_err: Option<f64>,
    pub farfield_pos_err: f64,
}

/// Aggregated errors for one (distance, method, propagation) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct RmseCell {
    pub distance: f64,
    pub method: &'static str,
    pub with_nlos: bool,
    pub rmse_pos: f64,
    pub medae_pos: f64,
    pub rmse_bias: Option<f64>,
    pub medae_bias: Option<f64>,
    pub non_identifiable: usize,
    pub trials: usize,
}

impl RmseCell {
    pub fn label(&self) -> String {
        format!(
            "{}_{}",
            self.method,
            if self.with_nlos { "nlos" } else { "los" }
        )
    }
}

fn rmse(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    (v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt()
}

fn median_abs(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut a: Vec<f64> = v.iter().map(|e| e.abs()).collect();
    a.sort_by(f64::total_cmp);
    let m = a.len() / 2;
    if a.len() % 2 == 1 {
        a[m]
    } else {
        0.5 * (a[m - 1] + a[m])
    }
}

/// Scatterer drawn uniformly over x ∈ [−10, 10] m, y ∈ [0.5, 20] m, at
/// least 0.5 m from the UE.
pub fn draw_scatterer<R: Rng>(ue: &Point2, rng: &mut R) -> Scatterer {
    loop {
        let p = Point2::new(rng.random_range(-10.0..=10.0), rng.random_range(0.5..=20.0));
        if (p - ue).norm() >= 0.5 {
            return Scatterer::new(p.x, p.y, 10.0);
        }
    }
}

fn run_trial(
    cfg: &ExperimentConfig,
    distance: f64,
    seed: u64,
    with_nlos: bool,
) -> Result<TrialOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = rng.random_range(PI / 4.0..3.0 * PI / 4.0);
    let mut s = cfg.scenario.clone().with_polar_position(distance, theta);
    s.scatterers.clear();
    let scatterer = draw_scatterer(&s.ue_position, &mut rng);
    if with_nlos {
        s.scatterers.push(scatterer);
    }
    let obs = synthesize(&s, ModelKind::General, seed)?;
    let mut est = cfg.estimator.clone();
    est.d_bar_m = cfg.d_bar_m.unwrap_or(distance);
    let near = localize_near_field(&obs, &s, &est)?;
    let far = localize_far_field_known_bias(&obs, &s, s.clock_bias, &est)?;
    let (pos, bias) = if near.identifiable {
        (
            Some((near.position_hat - s.ue_position).norm()),
            Some(near.bias_hat - s.clock_bias),
        )
    } else {
        (None, None)
    };
    Ok(TrialOutcome {
        subarray_pos_err: pos,
        subarray_bias_err: bias,
        farfield_pos_err: (far - s.ue_position).norm(),
    })
}

/// Per-trial outcomes for one distance; trial `t` of point `i` uses seed
/// `seed + i·trials + t` for both propagation variants.
pub fn monte_carlo_point(
    cfg: &ExperimentConfig,
    point_index: usize,
    with_nlos: bool,
) -> Result<Vec<TrialOutcome>> {
    let d = cfg.values[point_index];
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = cfg.seed + (point_index * cfg.trials + t) as u64;
            run_trial(cfg, d, seed, with_nlos)
        })
        .collect()
}

pub fn monte_carlo_cells(cfg: &ExperimentConfig) -> Result<Vec<RmseCell>> {
    cfg.validate()?;
    let variants: &[bool] = if cfg.nlos { &[false, true] } else { &[false] };
    let mut cells = Vec::new();
    for (i, &d) in cfg.values.iter().enumerate() {
        for &with_nlos in variants {
            let outcomes = monte_carlo_point(cfg, i, with_nlos)?;
            let pos: Vec<f64> = outcomes.iter().filter_map(|o| o.subarray_pos_err).collect();
            let bias: Vec<f64> = outcomes
                .iter()
                .filter_map(|o| o.subarray_bias_err)
                .collect();
            let far: Vec<f64> = outcomes.iter().map(|o| o.farfield_pos_err).collect();
            cells.push(RmseCell {
                distance: d,
                method: "subarray",
                with_nlos,
                rmse_pos: rmse(&pos),
                medae_pos: median_abs(&pos),
                rmse_bias: Some(rmse(&bias)),
                medae_bias: Some(median_abs(&bias)),
                non_identifiable: outcomes.len() - pos.len(),
                trials: outcomes.len(),
            });
            cells.push(RmseCell {
                distance: d,
                method: "farfield_known_bias",
                with_nlos,
                rmse_pos: rmse(&far),
                medae_pos: median_abs(&far),
                rmse_bias: None,
                medae_bias: None,
                non_identifiable: 0,
                trials: outcomes.len(),
            });
        }
    }
    Ok(cells)
}

pub fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let cells = monte_carlo_cells(cfg)?;
    let mut rows = Vec::new();
    for c in &cells {
        let mut push = |metric: Metric, value: f64| {
            rows.push(ResultRow {
                experiment: cfg.kind.name().to_string(),
                sweep_value: c.distance,
                model: c.label(),
                bias_known: c.method != "subarray",
                metric,
                value,
                trials: c.trials,
                seed: cfg.seed,
            })
        };
        push(Metric::RmsePosM, c.rmse_pos);
        push(Metric::MedaePosM, c.medae_pos);
        if let (Some(r), Some(m)) = (c.rmse_bias, c.medae_bias) {
            push(Metric::RmseBiasM, r);
            push(Metric::MedaeBiasM, m);
        }
        push(Metric::NonIdentifiableTrials, c.non_identifiable as f64);
    }
    Ok(rows)
}

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    match cfg.kind {
        ExperimentKind::PhasePlot => run_phase_plot(cfg),
        ExperimentKind::PebVsDistance | ExperimentKind::PebVsSpacing => run_peb_sweep(cfg),
        ExperimentKind::MonteCarloRmse => run_monte_carlo(cfg),
    }
}
