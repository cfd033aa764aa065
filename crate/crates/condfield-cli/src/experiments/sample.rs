//! Field sampling: draws unconditional realizations, or realizations
//! conditioned on the quadratic observable exceeding one threshold, and
//! writes per-sample statistics plus a per-node field summary.
//!
//! With an empty `u_grid` the draws are unconditional; with one entry
//! the threshold is that entry times the observable's natural scale.
//! This experiment produces artifacts only — it asserts nothing, so a
//! successful run always exits zero.

use crate::artifacts::{fmt_csv, RunDir};
use crate::config::Config;
use crate::experiments::{build_inputs, dense_basis, threshold_unit, ThresholdUnit};
use crate::outcome::{CliError, Verdict};
use condfield::sampling::{
    conditional_tail_estimate, sample_unconditional, stream_rng, ConditionalMethod,
    ConditionalSampler, FieldSample, ImportanceTailEstimate, KlBasis,
    REJECTION_MIN_ACCEPTANCE,
};
use serde::Serialize;

#[derive(Debug, Serialize)]
struct Report {
    experiment: &'static str,
    conditioned: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold_unit: Option<ThresholdUnit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    predicted_acceptance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tilt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tail_estimate: Option<ImportanceTailEstimate>,
    n_samples: usize,
    seed: u64,
    q_min: f64,
    q_max: f64,
    q_weighted_mean: f64,
    verdicts: Vec<Verdict>,
}

pub fn run(config: &Config, dir: &mut RunDir) -> Result<Vec<Verdict>, CliError> {
    let (grid, kernel, observable) = build_inputs(config)?;
    let sampling = config.sampling.as_ref().expect("validated");
    let (basis, _spectrum) = dense_basis(&grid, &kernel, &observable, sampling.field_kind())?;

    let mut rng = stream_rng(sampling.seed, 0);
    let mut samples: Vec<FieldSample> = Vec::with_capacity(sampling.n_samples);
    let mut report_threshold = None;
    let mut report_unit = None;
    let mut method_name = None;
    let mut predicted_acceptance = None;
    let mut tilt = None;
    let mut tail_estimate = None;

    if let Some(&u_unit) = sampling.u_grid.first() {
        let unit = threshold_unit(&basis.tail_model()?)?;
        let u = u_unit * unit.value;
        let method = match sampling.method() {
            Some(m) => m,
            None => {
                let model = basis.tail_model()?;
                let p = condfield::sampling::tails::tail_prob_cf(&model, u)?.probability;
                if p >= REJECTION_MIN_ACCEPTANCE {
                    ConditionalMethod::Rejection
                } else {
                    ConditionalMethod::Tilted { tilt: None }
                }
            }
        };
        let sampler = ConditionalSampler::new(&basis, u, method)?;
        method_name = Some(match method {
            ConditionalMethod::Rejection => "rejection",
            ConditionalMethod::Tilted { .. } => "tilted",
        });
        predicted_acceptance = sampler.predicted_acceptance();
        tilt = sampler.tilt();
        for _ in 0..sampling.n_samples {
            samples.push(sampler.draw(&mut rng)?);
        }
        if matches!(method, ConditionalMethod::Tilted { .. }) {
            tail_estimate = Some(conditional_tail_estimate(
                &sampler,
                sampling.n_samples,
                &mut stream_rng(sampling.seed, 1),
            )?);
        }
        report_threshold = Some(u);
        report_unit = Some(unit);
    } else {
        for _ in 0..sampling.n_samples {
            samples.push(sample_unconditional(&basis, &mut rng));
        }
    }

    write_sample_csv(dir, &basis, &samples)?;
    write_field_stats_csv(dir, &grid, &basis, &samples)?;

    let sum_w: f64 = samples.iter().map(FieldSample::weight).sum();
    let q_weighted_mean =
        samples.iter().map(|s| s.weight() * s.q).sum::<f64>() / sum_w.max(f64::MIN_POSITIVE);
    let report = Report {
        experiment: "sample",
        conditioned: report_threshold.is_some(),
        threshold: report_threshold,
        threshold_unit: report_unit,
        method: method_name,
        predicted_acceptance,
        tilt,
        tail_estimate,
        n_samples: sampling.n_samples,
        seed: sampling.seed,
        q_min: samples.iter().map(|s| s.q).fold(f64::INFINITY, f64::min),
        q_max: samples.iter().map(|s| s.q).fold(f64::NEG_INFINITY, f64::max),
        q_weighted_mean,
        verdicts: Vec::new(),
    };
    dir.write_json("report.json", &report)?;
    Ok(Vec::new())
}

/// One row per draw: the observable value, the importance weight, and
/// the squared field norm.
fn write_sample_csv(
    dir: &mut RunDir,
    basis: &KlBasis,
    samples: &[FieldSample],
) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let field = basis.realize(s);
            vec![
                i.to_string(),
                fmt_csv(s.q),
                fmt_csv(s.log_weight),
                fmt_csv(s.weight()),
                fmt_csv(field.norm_squared()),
            ]
        })
        .collect();
    dir.write_csv(
        "samples.csv",
        &["index", "q", "log_weight", "weight", "field_norm2"],
        &rows,
    )
}

/// Per-node weighted field statistics in physical units: the mean stays
/// near zero (sign symmetry survives conditioning on a quadratic), while
/// the mean square shows where the conditioned field concentrates. For
/// complex fields the mean covers the real part and the mean square the
/// total squared modulus.
fn write_field_stats_csv(
    dir: &mut RunDir,
    grid: &condfield::grid::Grid,
    basis: &KlBasis,
    samples: &[FieldSample],
) -> Result<(), CliError> {
    let n_dof = basis.dim();
    let mut mean = vec![0.0; n_dof];
    let mut mean_square = vec![0.0; n_dof];
    let mut sum_w = 0.0;
    for s in samples {
        let w = s.weight();
        sum_w += w;
        let field = basis.realize(s);
        for i in 0..n_dof {
            mean[i] += w * field.re[i];
            mean_square[i] += w * field.re[i] * field.re[i];
        }
        if let Some(im) = &field.im {
            for i in 0..n_dof {
                mean_square[i] += w * im[i] * im[i];
            }
        }
    }
    let scale = 1.0 / sum_w.max(f64::MIN_POSITIVE);
    // Stored values carry the root quadrature weight; divide it back out
    // so the file shows physical field values.
    let sw = grid.sqrt_weight();
    let mut rows = Vec::with_capacity(n_dof);
    for comp in 0..grid.components() {
        for node in 0..grid.n_nodes() {
            let i = grid.flat_index(comp, node);
            let pos = grid.node_position(node);
            rows.push(vec![
                comp.to_string(),
                node.to_string(),
                fmt_csv(pos[0]),
                fmt_csv(pos[1]),
                fmt_csv(pos[2]),
                fmt_csv(mean[i] * scale / sw),
                fmt_csv(mean_square[i] * scale / (sw * sw)),
            ]);
        }
    }
    dir.write_csv(
        "field_stats.csv",
        &["component", "node", "x", "y", "z", "mean", "mean_square"],
        &rows,
    )
}
