//! Randomized spectral-equivalence instances: for random covariance and
//! observable pairs, the nonzero spectrum of the symmetric whitened
//! operator must match the nonzero spectrum of the covariance-observable
//! product, eigenvalue by eigenvalue.

use crate::artifacts::{fmt_csv, RunDir};
use crate::config::{Config, Prop3Block};
use crate::outcome::{CliError, Verdict};
use condfield::operators::{sqrt_psd, whitened_observable_dense, OperatorMatrix, PSD_CLIP_REL_TOL};
use condfield::sampling::stream_rng;
use condfield::spectral::{
    check_spectral_equivalence, eig_symmetric, filter_negligible, product_spectrum_dense,
    DEGENERACY_REL_TOL, NEGLIGIBLE_EIG_REL_TOL, NONSYM_EIG_CAP,
};
use ndarray::Array2;
use rand::Rng;
use serde::Serialize;

/// The four instance shapes the experiment cycles through.
const CASES: [&str; 4] = [
    "full-cov/dense-obs",
    "full-cov/rank3-obs",
    "lowrank-cov/dense-obs",
    "lowrank-cov/rank3-obs",
];

#[derive(Debug, Serialize)]
struct InstanceSummary {
    instance: usize,
    case: String,
    whitened_count: usize,
    product_count: usize,
    max_rel_diff: f64,
    matched: bool,
}

#[derive(Debug, Serialize)]
struct Report {
    experiment: &'static str,
    instances: usize,
    dimension: usize,
    tolerance: f64,
    seed: u64,
    worst_rel_diff: f64,
    instances_matched: usize,
    summaries: Vec<InstanceSummary>,
    verdicts: Vec<Verdict>,
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || 2.0 * rng.random::<f64>() - 1.0)
}

/// Random PSD covariance of the requested rank: `A^T A / rank` for a
/// `rank x dim` matrix with uniform entries.
fn random_covariance(dim: usize, rank: usize, rng: &mut impl Rng) -> Result<OperatorMatrix, CliError> {
    let a = uniform_matrix(rank, dim, rng);
    let c = a.t().dot(&a) / rank as f64;
    Ok(OperatorMatrix::symmetrized(c)?)
}

/// Random symmetric observable: either fully dense or a rank-3 signed
/// outer-product sum.
fn random_observable(dim: usize, dense: bool, rng: &mut impl Rng) -> Result<OperatorMatrix, CliError> {
    let m = if dense {
        uniform_matrix(dim, dim, rng)
    } else {
        let g = uniform_matrix(dim, 3, rng);
        let mut signed = g.clone();
        for (j, sign) in [1.0, -1.0, 1.0].iter().enumerate() {
            signed.column_mut(j).mapv_inplace(|v| v * sign);
        }
        g.dot(&signed.t())
    };
    Ok(OperatorMatrix::symmetrized(m)?)
}

pub fn run(config: &Config, dir: &mut RunDir) -> Result<Vec<Verdict>, CliError> {
    let defaults = Prop3Block { instances: None, dimension: None, tolerance: None, seed: None };
    let block = config.prop3.as_ref().unwrap_or(&defaults);
    let instances = block.instances();
    let dimension = block.dimension();
    let tolerance = block.tolerance();
    let seed = block.seed();

    let mut summaries = Vec::with_capacity(instances);
    let mut worst = 0.0_f64;
    for i in 0..instances {
        let mut rng = stream_rng(seed, i as u64);
        let case = CASES[i % CASES.len()];
        let cov_rank = if i % 4 < 2 { dimension } else { dimension / 2 };
        let obs_dense = i % 2 == 0;
        let cov = random_covariance(dimension, cov_rank, &mut rng)?;
        let obs = random_observable(dimension, obs_dense, &mut rng)?;

        let root = sqrt_psd(&cov, PSD_CLIP_REL_TOL)?;
        let whitened = whitened_observable_dense(&root, &obs)?;
        let spectrum = eig_symmetric(&whitened, DEGENERACY_REL_TOL)?;
        let whitened_nonzero = spectrum.nonzero_eigenvalues(NEGLIGIBLE_EIG_REL_TOL);

        let product_all = product_spectrum_dense(&cov, &obs, NONSYM_EIG_CAP)?;
        let product_nonzero = filter_negligible(&product_all, NEGLIGIBLE_EIG_REL_TOL);

        let report = check_spectral_equivalence(&whitened_nonzero, &product_nonzero, tolerance);
        worst = worst.max(report.max_rel_diff);
        summaries.push(InstanceSummary {
            instance: i,
            case: case.to_string(),
            whitened_count: report.whitened_count,
            product_count: report.product_count,
            max_rel_diff: report.max_rel_diff,
            matched: report.verdict,
        });
    }

    let matched = summaries.iter().filter(|s| s.matched).count();
    let verdicts = vec![Verdict::with_tol(
        "spectral_equivalence",
        matched == instances,
        tolerance,
        format!(
            "{matched}/{instances} instances matched; worst relative eigenvalue gap {worst:.3e}"
        ),
    )];

    let rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|s| {
            vec![
                s.instance.to_string(),
                s.case.clone(),
                s.whitened_count.to_string(),
                s.product_count.to_string(),
                fmt_csv(s.max_rel_diff),
                s.matched.to_string(),
            ]
        })
        .collect();
    dir.write_csv(
        "instances.csv",
        &["instance", "case", "whitened_count", "product_count", "max_rel_diff", "matched"],
        &rows,
    )?;

    let report = Report {
        experiment: "prop3",
        instances,
        dimension,
        tolerance,
        seed,
        worst_rel_diff: worst,
        instances_matched: matched,
        summaries,
        verdicts: verdicts.clone(),
    };
    dir.write_json("report.json", &report)?;
    Ok(verdicts)
}
