//! Conditioned concentration sweep: across an ascending threshold
//! ladder, estimate how often the remainder of the field stays
//! comparable to its dominant part, and how often the dominant amplitude
//! stays at its unconditional scale.
//!
//! Configured `u_grid` entries are multiples of the observable's natural
//! scale — its mean when meaningfully positive, otherwise its root mean
//! square — so the same ladder works across observables.

use crate::artifacts::{fmt_csv, RunDir};
use crate::config::Config;
use crate::experiments::{build_inputs, dense_basis, nonincreasing, threshold_unit, ThresholdUnit};
use crate::outcome::{CliError, Verdict};
use condfield::concentration::{concentration_curve, ConcentrationConfig, CurvePoint};
use serde::Serialize;

#[derive(Debug, Serialize)]
struct Report {
    experiment: &'static str,
    threshold_unit: ThresholdUnit,
    u_grid: Vec<f64>,
    epsilon: f64,
    amplitude_factor: f64,
    samples_per_threshold: usize,
    seed: u64,
    points: Vec<CurvePoint>,
    trend_ok: bool,
    verdicts: Vec<Verdict>,
}

/// Writes a sweep as `curve.csv` in the run directory; shared with the
/// application experiments that embed a conditioned sweep.
pub(crate) fn write_curve_csv(
    dir: &mut RunDir,
    name: &str,
    unit: &ThresholdUnit,
    points: &[CurvePoint],
) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                fmt_csv(p.threshold),
                fmt_csv(p.threshold / unit.value),
                fmt_csv(p.epsilon),
                fmt_csv(p.amplitude_factor),
                fmt_csv(p.p_deviation),
                fmt_csv(p.ci_low),
                fmt_csv(p.ci_high),
                fmt_csv(p.p_amplitude_typical),
                fmt_csv(p.mean_ratio),
                fmt_csv(p.mean_cos_top),
                fmt_csv(p.n_eff),
                p.method.clone(),
                p.seed.to_string(),
            ]
        })
        .collect();
    dir.write_csv(
        name,
        &[
            "threshold",
            "u_normalized",
            "epsilon",
            "amplitude_factor",
            "p_deviation",
            "ci_low",
            "ci_high",
            "p_amplitude_typical",
            "mean_ratio",
            "mean_cos_top",
            "n_eff",
            "method",
            "seed",
        ],
        &rows,
    )
}

pub fn run(config: &Config, dir: &mut RunDir) -> Result<Vec<Verdict>, CliError> {
    let (grid, kernel, observable) = build_inputs(config)?;
    let sampling = config.sampling.as_ref().expect("validated");

    let (basis, _spectrum) = dense_basis(&grid, &kernel, &observable, sampling.field_kind())?;
    let unit = threshold_unit(&basis.tail_model()?)?;
    let thresholds: Vec<f64> = sampling.u_grid.iter().map(|u| u * unit.value).collect();

    let sweep = ConcentrationConfig {
        thresholds,
        epsilon: sampling.epsilon(),
        amplitude_factor: sampling.amplitude(),
        split: sampling.split_mode(),
        samples: sampling.n_samples,
        seed: sampling.seed,
        method: sampling.method(),
    };
    let curve = concentration_curve(&basis, &sweep)?;

    write_curve_csv(dir, "curve.csv", &unit, &curve.points)?;

    let amplitude_ok = nonincreasing(curve.points.iter().map(|p| p.p_amplitude_typical));
    let verdicts = vec![
        Verdict::plain(
            "deviation_trend",
            curve.trend_ok,
            format!(
                "P(remainder comparable) from {:.3e} to {:.3e} over {} thresholds",
                curve.points.first().map_or(f64::NAN, |p| p.p_deviation),
                curve.points.last().map_or(f64::NAN, |p| p.p_deviation),
                curve.points.len()
            ),
        ),
        Verdict::plain(
            "amplitude_nonincreasing",
            amplitude_ok,
            format!(
                "P(amplitude typical) from {:.3e} to {:.3e}",
                curve.points.first().map_or(f64::NAN, |p| p.p_amplitude_typical),
                curve.points.last().map_or(f64::NAN, |p| p.p_amplitude_typical)
            ),
        ),
    ];

    let report = Report {
        experiment: "concentration",
        threshold_unit: unit,
        u_grid: sampling.u_grid.clone(),
        epsilon: sampling.epsilon(),
        amplitude_factor: sampling.amplitude(),
        samples_per_threshold: sampling.n_samples,
        seed: sampling.seed,
        points: curve.points,
        trend_ok: curve.trend_ok,
        verdicts: verdicts.clone(),
    };
    dir.write_json("report.json", &report)?;
    Ok(verdicts)
}
