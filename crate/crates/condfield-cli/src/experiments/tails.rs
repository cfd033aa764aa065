//! Tail probabilities of the quadratic observable, by three independent
//! routes: characteristic-function inversion, closed-form top-group
//! asymptotics, and direct Monte Carlo.
//!
//! Thresholds in `u_grid` are taken verbatim (no unit scaling), so they
//! can probe any part of the distribution.

use crate::artifacts::{fmt_csv, RunDir};
use crate::config::Config;
use crate::experiments::build_inputs;
use crate::outcome::{CliError, Verdict};
use condfield::sampling::stream_rng;
use condfield::sampling::tails::{tail_asymptotic, tail_prob_cf, tail_prob_mc, TailModel};
use condfield::spectral::product_spectrum_lowrank;
use condfield::spectral::DEGENERACY_REL_TOL;
use serde::Serialize;

/// The inversion quadrature reports its own error estimate; a run is
/// only trusted when every estimate stays below this bound.
const CF_ERROR_BOUND: f64 = 1e-8;

/// Monte Carlo agreement bound in standard errors.
const MC_Z_BOUND: f64 = 3.0;

#[derive(Debug, Serialize)]
struct Row {
    u: f64,
    p_cf: f64,
    cf_error: f64,
    p_asymptotic: f64,
    asym_cf_ratio: f64,
    p_mc: f64,
    mc_std_error: f64,
    mc_z: f64,
}

#[derive(Debug, Serialize)]
struct Report {
    experiment: &'static str,
    field: &'static str,
    eigenvalues: Vec<f64>,
    mean: f64,
    variance: f64,
    samples_per_threshold: usize,
    seed: u64,
    max_cf_error: f64,
    max_mc_abs_z: f64,
    rows: Vec<Row>,
    verdicts: Vec<Verdict>,
}

pub fn run(config: &Config, dir: &mut RunDir) -> Result<Vec<Verdict>, CliError> {
    let (grid, kernel, observable) = build_inputs(config)?;
    let sampling = config.sampling.as_ref().expect("validated");

    let lowrank = product_spectrum_lowrank(&grid, &kernel, &observable, DEGENERACY_REL_TOL)?;
    let kind = sampling.field_kind();
    let model = TailModel::from_eigenvalues(kind, &lowrank.eigenvalues)?;

    let mut rows = Vec::with_capacity(sampling.u_grid.len());
    for (j, &u) in sampling.u_grid.iter().enumerate() {
        let cf = tail_prob_cf(&model, u)?;
        let asym = tail_asymptotic(&model, u)?;
        let mut rng = stream_rng(sampling.seed, j as u64);
        let mc = tail_prob_mc(&model, u, sampling.n_samples, &mut rng)?;
        let mc_z = if mc.std_error > 0.0 {
            (mc.probability - cf.probability) / mc.std_error
        } else {
            0.0
        };
        let asym_cf_ratio = if cf.probability > 0.0 { asym / cf.probability } else { f64::NAN };
        rows.push(Row {
            u,
            p_cf: cf.probability,
            cf_error: cf.error_estimate,
            p_asymptotic: asym,
            asym_cf_ratio,
            p_mc: mc.probability,
            mc_std_error: mc.std_error,
            mc_z,
        });
    }

    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_csv(r.u),
                fmt_csv(r.p_cf),
                fmt_csv(r.cf_error),
                fmt_csv(r.p_asymptotic),
                fmt_csv(r.asym_cf_ratio),
                fmt_csv(r.p_mc),
                fmt_csv(r.mc_std_error),
                fmt_csv(r.mc_z),
            ]
        })
        .collect();
    dir.write_csv(
        "tails.csv",
        &[
            "u",
            "p_cf",
            "cf_error",
            "p_asymptotic",
            "asym_cf_ratio",
            "p_mc",
            "mc_std_error",
            "mc_z",
        ],
        &csv_rows,
    )?;

    let max_cf_error = rows.iter().map(|r| r.cf_error).fold(0.0, f64::max);
    let max_mc_abs_z = rows.iter().map(|r| r.mc_z.abs()).fold(0.0, f64::max);
    let verdicts = vec![
        Verdict::with_tol(
            "cf_error_bound",
            max_cf_error <= CF_ERROR_BOUND,
            CF_ERROR_BOUND,
            format!("worst inversion error estimate {max_cf_error:.3e}"),
        ),
        Verdict::with_tol(
            "monte_carlo_consistency",
            max_mc_abs_z <= MC_Z_BOUND,
            MC_Z_BOUND,
            format!("worst |z| of Monte Carlo vs inversion {max_mc_abs_z:.3}"),
        ),
    ];

    let report = Report {
        experiment: "tails",
        field: match kind {
            condfield::sampling::FieldKind::Complex => "complex",
            condfield::sampling::FieldKind::Real => "real",
        },
        eigenvalues: lowrank.eigenvalues.clone(),
        mean: model.mean(),
        variance: model.variance(),
        samples_per_threshold: sampling.n_samples,
        seed: sampling.seed,
        max_cf_error,
        max_mc_abs_z,
        rows,
        verdicts: verdicts.clone(),
    };
    dir.write_json("report.json", &report)?;
    Ok(verdicts)
}
