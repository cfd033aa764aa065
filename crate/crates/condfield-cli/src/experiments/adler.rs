//! Scalar peak application: conditioning on a large squared field value
//! at the origin. Checks that the squared-value observable has exactly
//! one effective mode, that the mode is the correlation profile, and —
//! when a sampling block is present — that conditioned fields align with
//! that profile more and more tightly as the threshold grows.

use crate::artifacts::{fmt_csv, RunDir};
use crate::config::Config;
use crate::experiments::concentration::write_curve_csv;
use crate::experiments::ThresholdUnit;
use crate::outcome::{CliError, Verdict};
use condfield::applications::local_max::{
    peak_alignment_curve, peak_mode_report, peak_profile, PeakAlignmentConfig, PeakModeReport,
};
use condfield::concentration::CurvePoint;
use serde::Serialize;

const EXACTNESS_TOL: f64 = 1e-10;

#[derive(Debug, Serialize)]
struct Report {
    experiment: &'static str,
    mode: PeakModeReport,
    max_profile_gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold_unit: Option<ThresholdUnit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<Vec<CurvePoint>>,
    verdicts: Vec<Verdict>,
}

pub fn run(config: &Config, dir: &mut RunDir) -> Result<Vec<Verdict>, CliError> {
    let grid = config.grid.as_ref().expect("validated").build()?;
    let kernel = config.kernel.as_ref().expect("validated").build()?;

    let report = peak_mode_report(&grid, &kernel)?;
    let profile = peak_profile(&grid, &kernel)?;

    let rows: Vec<Vec<String>> = profile
        .iter()
        .map(|p| {
            vec![
                fmt_csv(p.position),
                fmt_csv(p.discrete),
                fmt_csv(p.analytic),
                fmt_csv(p.discrete - p.analytic),
            ]
        })
        .collect();
    dir.write_csv("profile.csv", &["position", "discrete", "analytic", "gap"], &rows)?;
    let max_profile_gap = profile
        .iter()
        .map(|p| (p.discrete - p.analytic).abs())
        .fold(0.0, f64::max);

    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    let mut verdicts = vec![
        Verdict::with_tol(
            "top_is_variance",
            rel(report.top_eigenvalue, report.expected_variance) <= EXACTNESS_TOL,
            EXACTNESS_TOL,
            format!(
                "dense top {:.12e} vs variance {:.12e}",
                report.top_eigenvalue, report.expected_variance
            ),
        ),
        Verdict::with_tol(
            "routes_agree",
            rel(report.lowrank_top, report.top_eigenvalue) <= EXACTNESS_TOL,
            EXACTNESS_TOL,
            format!("low-rank top {:.12e}", report.lowrank_top),
        ),
        Verdict::with_tol(
            "single_mode",
            report.spurious_rel_max <= EXACTNESS_TOL,
            EXACTNESS_TOL,
            format!("largest spurious eigenvalue ratio {:.3e}", report.spurious_rel_max),
        ),
        Verdict::with_tol(
            "mode_is_correlation_profile",
            report.alignment_cosine >= 1.0 - EXACTNESS_TOL,
            EXACTNESS_TOL,
            format!(
                "cosine to the kernel column {:.12}, worst profile gap {:.3e}",
                report.alignment_cosine, max_profile_gap
            ),
        ),
    ];

    let mut threshold_unit = None;
    let mut sweep = None;
    if let Some(sampling) = &config.sampling {
        // The observable mean is exactly the top eigenvalue here (a
        // single effective mode with unit mean square coordinate), so it
        // serves as the threshold unit directly.
        let unit = ThresholdUnit { value: report.top_eigenvalue, basis: "mean" };
        let thresholds: Vec<f64> = sampling.u_grid.iter().map(|u| u * unit.value).collect();
        let curve = peak_alignment_curve(
            &grid,
            &kernel,
            &PeakAlignmentConfig {
                thresholds,
                samples: sampling.n_samples,
                seed: sampling.seed,
                kind: sampling.field_kind(),
                epsilon: sampling.epsilon(),
            },
        )?;
        write_curve_csv(dir, "curve.csv", &unit, &curve.points)?;
        let first = curve.points.first().expect("validated nonempty");
        let last = curve.points.last().expect("validated nonempty");
        verdicts.push(Verdict::plain(
            "alignment_increases",
            last.mean_cos_top > first.mean_cos_top,
            format!(
                "mean cosine {:.4} at u = {:.3e} rising to {:.4} at u = {:.3e}",
                first.mean_cos_top, first.threshold, last.mean_cos_top, last.threshold
            ),
        ));
        verdicts.push(Verdict::plain(
            "deviation_trend",
            curve.trend_ok,
            format!(
                "P(remainder comparable) from {:.3e} to {:.3e}",
                first.p_deviation, last.p_deviation
            ),
        ));
        threshold_unit = Some(unit);
        sweep = Some(curve.points);
    }

    let out = Report {
        experiment: "adler",
        mode: report,
        max_profile_gap,
        threshold_unit,
        sweep,
        verdicts: verdicts.clone(),
    };
    dir.write_json("report.json", &out)?;
    Ok(verdicts)
}
