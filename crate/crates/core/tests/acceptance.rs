//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Exits 0 after printing the report. Set `NFSYNC_ACCEPTANCE_STRICT=1` to
//! exit nonzero when any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{Matrix3, Matrix4};
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nfsync_core::estimate::{choose_subarray_size, localize_near_field};
use nfsync_core::experiment::{
    default_bearing, monte_carlo_cells, ExperimentConfig, ExperimentKind, RmseCell,
};
use nfsync_core::fim::{
    equivalent_position_fim, fim, fim_numeric, peb_for, relative_frobenius, to_position_domain,
    PilotSpectrum,
};
use nfsync_core::synth::{add_noise, synthesize};
use nfsync_core::{EstimatorConfig, ModelKind, Scenario};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn sorted_eigenvalues(m: &Matrix4<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| b.total_cmp(a));
    e
}

fn sorted_eigenvalues3(m: &Matrix3<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| b.total_cmp(a));
    e
}

fn closed_form_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(0.5..=50.0);
        let theta = rng.random_range(PI / 8.0..7.0 * PI / 8.0);
        let ratio = [0.25, 0.5, 1.0][rng.random_range(0..3)];
        let mut s = Scenario::nominal_polar(d, theta).with_spacing_over_lambda(ratio);
        s.clock_bias = rng.random_range(-50.0..=50.0);
        let p = PilotSpectrum::uniform(&s);
        for m in [
            ModelKind::StandardFarField,
            ModelKind::NarrowbandNearField,
            ModelKind::WidebandFarField,
        ] {
            let closed = fim(m, &s, &p).unwrap();
            let numeric = fim_numeric(m, &s, &p).unwrap();
            worst = worst.max(relative_frobenius(&closed.0, &numeric.0));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-8 && secs < 5.0,
        format!("max relative Frobenius error {worst:.2e} over 300 FIMs in {secs:.2} s"),
    )
}

fn identifiability() -> Outcome {
    let s = Scenario::nominal(1.0, 8.0);
    let p = PilotSpectrum::uniform(&s);
    let std = to_position_domain(&fim(ModelKind::StandardFarField, &s, &p).unwrap(), &s).unwrap();
    let e = sorted_eigenvalues3(&equivalent_position_fim(&std));
    let rank_ratio = e[2] / e[0];
    let s2 = Scenario::nominal_polar(2.0, default_bearing());
    let gen = fim(ModelKind::General, &s2, &PilotSpectrum::uniform(&s2)).unwrap();
    let g = sorted_eigenvalues(&gen.0);
    let full_ratio = g[3] / g[0];
    outcome(
        rank_ratio.abs() < 1e-12 && full_ratio > 1e-9,
        format!("standard (x, y, B) λ3/λ1 = {rank_ratio:.2e}, general at 2 m λmin/λmax = {full_ratio:.2e}"),
    )
}

fn asymptotics() -> Outcome {
    let base = Scenario::nominal(1.0, 8.0);
    let ff = base.far_field_distance();
    let s = Scenario::nominal_polar(100.0 * ff, PI / 3.0);
    let p = PilotSpectrum::uniform(&s);
    let std = fim(ModelKind::StandardFarField, &s, &p).unwrap();
    let nf = relative_frobenius(
        &fim(ModelKind::NarrowbandNearField, &s, &p).unwrap().0,
        &std.0,
    );
    let wb = relative_frobenius(&fim(ModelKind::WidebandFarField, &s, &p).unwrap().0, &std.0);
    let aperture_cm = 100.0 * base.aperture();
    let aperture_ok = format!("{aperture_cm:.2}") == "69.11";
    let ff_ok =
        ff.round() == 89.0 && (ff - 2.0 * base.aperture().powi(2) / base.wavelength()).abs() < 1e-9;
    outcome(
        nf < 1e-2 && wb < 1e-2 && aperture_ok && ff_ok,
        format!(
            "at {:.0} m near-field {nf:.2e}, wideband {wb:.2e}; aperture {aperture_cm:.4} cm, far-field distance {ff:.4} m",
            100.0 * ff
        ),
    )
}

fn known_peb(m: ModelKind, d: f64) -> f64 {
    peb_for(m, &Scenario::nominal_polar(d, default_bearing()), true).unwrap()
}

fn fig3_distance() -> Outcome {
    let start = Instant::now();
    let theta = default_bearing();
    let ratio = |d: f64| {
        let s = Scenario::nominal_polar(d, theta);
        peb_for(ModelKind::General, &s, false).unwrap()
            / peb_for(ModelKind::General, &s, true).unwrap()
    };
    let (r1, r50) = (ratio(1.0), ratio(50.0));
    let rel = |d: f64| {
        let nf = known_peb(ModelKind::NarrowbandNearField, d);
        let st = known_peb(ModelKind::StandardFarField, d);
        (nf - st).abs() / st
    };
    let grid = ExperimentConfig::new(ExperimentKind::PebVsDistance).values;
    let far_agree = grid
        .iter()
        .filter(|&&d| d > 20.0)
        .map(|&d| rel(d))
        .fold(0.0, f64::max);
    let near_diff = rel(1.0);
    // largest grid distance where the models still differ by more than 5 %
    let crossover = grid
        .iter()
        .copied()
        .filter(|&d| rel(d) > 0.05)
        .fold(f64::NAN, f64::max);
    let crossover_ok = (4.0..=16.0).contains(&crossover);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        r1 < 1.5 && r50 > 10.0 && far_agree < 0.05 && near_diff > 0.25 && crossover_ok && secs < 10.0,
        format!(
            "ratio {r1:.3} at 1 m, {r50:.1} at 50 m; near/standard gap {:.1}% max beyond 20 m, {:.0}% at 1 m; crossover {crossover:.2} m; {secs:.2} s",
            100.0 * far_agree,
            100.0 * near_diff
        ),
    )
}

fn fig4_spacing() -> Outcome {
    let s = |ratio: f64| Scenario::nominal(1.0, 8.0).with_spacing_over_lambda(ratio);
    let ratios: Vec<f64> = (0..=14).map(|i| 0.25 + 0.125 * i as f64).collect();
    let std: Vec<f64> = ratios
        .iter()
        .map(|&r| peb_for(ModelKind::StandardFarField, &s(r), true).unwrap())
        .collect();
    let lo = std.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = std.iter().copied().fold(0.0, f64::max);
    let spread = (hi - lo) / lo;
    let g_quarter = peb_for(ModelKind::General, &s(0.25), true).unwrap();
    let g_two = peb_for(ModelKind::General, &s(2.0), true).unwrap();
    outcome(
        spread < 0.01 && g_two < g_quarter,
        format!(
            "standard spread {:.2}%; general {g_quarter:.3e} m at λ/4, {g_two:.3e} m at 2λ",
            100.0 * spread
        ),
    )
}

fn round_trip() -> Outcome {
    let mut s = Scenario::nominal_polar(2.0, default_bearing());
    s.noise_psd = 0.0;
    let cfg = EstimatorConfig {
        pad_spatial: 10,
        pad_freq: 4,
        subarray_size: Some(19),
        ..EstimatorConfig::default()
    };
    let obs = synthesize(&s, ModelKind::General, 1).unwrap();
    let a = localize_near_field(&obs, &s, &cfg).unwrap();
    let b = localize_near_field(&obs, &s, &cfg).unwrap();
    let pos = (a.position_hat - s.ue_position).norm();
    let bias = (a.bias_hat - s.clock_bias).abs();
    let bin = 3e8 / (s.subcarrier_spacing() * (cfg.pad_freq * s.num_subcarriers) as f64);
    let same = a.position_hat == b.position_hat && a.bias_hat == b.bias_hat;
    outcome(
        choose_subarray_size(2.0, &s) == 19 && pos < 0.02 && bias < bin && same,
        format!("position error {:.2} mm, bias error {bias:.3} m (bin {bin:.2} m), rerun identical: {same}", 1e3 * pos),
    )
}

fn cell<'a>(cells: &'a [RmseCell], d: f64, method: &str, nlos: bool) -> &'a RmseCell {
    cells
        .iter()
        .find(|c| c.distance == d && c.method == method && c.with_nlos == nlos)
        .unwrap()
}

fn monte_carlo() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::new(ExperimentKind::MonteCarloRmse);
    let cells = monte_carlo_cells(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let sub = |d: f64, nlos: bool| cell(&cells, d, "subarray", nlos);
    let a_val = sub(2.0, false).rmse_pos;
    let a = a_val < 0.5;
    let b_fail: Vec<f64> = cfg
        .values
        .iter()
        .copied()
        .filter(|&d| !(sub(d, true).rmse_pos >= sub(d, false).rmse_pos))
        .collect();
    let near: Vec<f64> = cfg.values.iter().copied().filter(|&d| d <= 3.0).collect();
    let c_ratios: Vec<(f64, f64)> = near
        .iter()
        .map(|&d| {
            let c = sub(d, false);
            (d, c.rmse_bias.unwrap() / c.rmse_pos)
        })
        .collect();
    let c_fail: Vec<String> = c_ratios
        .iter()
        .filter(|(_, r)| !(*r >= 10.0))
        .map(|(d, r)| format!("{d} m ({r:.1}x)"))
        .collect();
    let d_fail: Vec<f64> = near
        .iter()
        .copied()
        .filter(|&d| {
            !(cell(&cells, d, "farfield_known_bias", false).rmse_pos > sub(d, false).rmse_pos)
        })
        .collect();
    let pass = a && b_fail.is_empty() && c_fail.is_empty() && d_fail.is_empty() && secs < 600.0;
    outcome(
        pass,
        format!(
            "(a) {a_val:.4} m at 2 m; (b) NLOS below LOS at {b_fail:?}; (c) bias/position under 10x at [{}]; (d) far-field not worse at {d_fail:?}; {} trials/point in {secs:.0} s",
            c_fail.join(", "),
            cfg.trials
        ),
    )
}

fn statistics() -> Outcome {
    let n0 = 4.0;
    let mut y = Array2::<Complex64>::zeros((100, 1000));
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    add_noise(&mut y, n0, &mut rng).unwrap();
    let count = y.len() as f64;
    let var_re = y.iter().map(|v| v.re * v.re).sum::<f64>() / count;
    let var_im = y.iter().map(|v| v.im * v.im).sum::<f64>() / count;
    let err = ((var_re - n0 / 2.0).abs()).max((var_im - n0 / 2.0).abs()) / (n0 / 2.0);
    let s = Scenario::nominal(1.0, 8.0);
    let mut worst: f64 = 0.0;
    for scale in [0.1, 3.0, 1000.0] {
        let mut t = s.clone();
        t.tx_power_mw *= scale;
        for m in ModelKind::ALL {
            let a = peb_for(m, &s, true).unwrap();
            let b = peb_for(m, &t, true).unwrap();
            worst = worst.max((b * scale.sqrt() / a - 1.0).abs());
        }
    }
    outcome(
        err < 0.02 && worst < 1e-10,
        format!(
            "noise variance error {:.2}% per dimension; power scaling error {worst:.1e}",
            100.0 * err
        ),
    )
}

fn main() -> ExitCode {
    type Check = (&'static str, fn() -> Outcome);
    let criteria: [Check; 8] = [
        (
            "closed-form FIMs match the numeric oracle",
            closed_form_equivalence,
        ),
        ("identifiability of bias and position", identifiability),
        ("far-field asymptotics and boundary", asymptotics),
        ("PEB versus distance", fig3_distance),
        ("PEB versus antenna spacing", fig4_spacing),
        ("noiseless estimator round trip", round_trip),
        ("Monte Carlo RMSE orderings", monte_carlo),
        ("noise and power scaling", statistics),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failures += 1;
        }
        println!(
            "criterion {}: {} - {name}: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    let strict = std::env::var("NFSYNC_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failures > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
