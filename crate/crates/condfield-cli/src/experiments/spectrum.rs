//! Dense-versus-low-rank spectrum cross-validation: the whitened
//! symmetric route and the functional-Gram product route must agree on
//! every nonzero eigenvalue of the configured observable.

use crate::artifacts::{fmt_csv, RunDir};
use crate::config::Config;
use crate::outcome::{CliError, Verdict};
use crate::experiments::build_inputs;
use condfield::operators::{
    assemble_covariance, sqrt_psd, whitened_observable_dense, DEFAULT_DENSE_CAP, PSD_CLIP_REL_TOL,
};
use condfield::spectral::{
    check_spectral_equivalence, eig_symmetric, product_spectrum_lowrank, DegenerateGroup,
    DEGENERACY_REL_TOL, NEGLIGIBLE_EIG_REL_TOL,
};
use serde::Serialize;

const EQUIVALENCE_REL_TOL: f64 = 1e-8;

#[derive(Debug, Serialize)]
struct Report {
    experiment: &'static str,
    n_dof: usize,
    whitened_count: usize,
    product_count: usize,
    max_rel_diff: f64,
    tolerance: f64,
    top_value: Option<f64>,
    top_multiplicity: Option<usize>,
    groups: Vec<DegenerateGroup>,
    verdicts: Vec<Verdict>,
}

pub fn run(config: &Config, dir: &mut RunDir) -> Result<Vec<Verdict>, CliError> {
    let (grid, kernel, observable) = build_inputs(config)?;

    let cov = assemble_covariance(&grid, &kernel, DEFAULT_DENSE_CAP)?;
    let root = sqrt_psd(&cov, PSD_CLIP_REL_TOL)?;
    let dense = observable.to_dense(grid.n_dof())?;
    let whitened = whitened_observable_dense(&root, &dense)?;
    let spectrum = eig_symmetric(&whitened, DEGENERACY_REL_TOL)?;
    let whitened_nonzero = spectrum.nonzero_eigenvalues(NEGLIGIBLE_EIG_REL_TOL);

    let lowrank = product_spectrum_lowrank(&grid, &kernel, &observable, DEGENERACY_REL_TOL)?;
    let equivalence =
        check_spectral_equivalence(&whitened_nonzero, &lowrank.eigenvalues, EQUIVALENCE_REL_TOL);

    let rows: Vec<Vec<String>> = equivalence
        .pairs
        .iter()
        .enumerate()
        .map(|(k, p)| {
            vec![k.to_string(), fmt_csv(p.whitened), fmt_csv(p.product), fmt_csv(p.rel_diff)]
        })
        .collect();
    dir.write_csv(
        "eigenvalues.csv",
        &["index", "whitened", "product", "rel_diff"],
        &rows,
    )?;

    let top = spectrum.top_positive_group();
    let verdicts = vec![Verdict::with_tol(
        "routes_agree",
        equivalence.verdict,
        EQUIVALENCE_REL_TOL,
        format!(
            "{} vs {} nonzero eigenvalues, worst relative gap {:.3e}",
            equivalence.whitened_count, equivalence.product_count, equivalence.max_rel_diff
        ),
    )];

    let nonzero_groups: Vec<DegenerateGroup> = spectrum
        .groups()
        .iter()
        .filter(|g| g.value.abs() > NEGLIGIBLE_EIG_REL_TOL * spectrum.scale())
        .cloned()
        .collect();
    let report = Report {
        experiment: "spectrum",
        n_dof: grid.n_dof(),
        whitened_count: equivalence.whitened_count,
        product_count: equivalence.product_count,
        max_rel_diff: equivalence.max_rel_diff,
        tolerance: EQUIVALENCE_REL_TOL,
        top_value: top.map(|g| g.value),
        top_multiplicity: top.map(|g| g.len),
        groups: nonzero_groups,
        verdicts: verdicts.clone(),
    };
    dir.write_json("report.json", &report)?;
    Ok(verdicts)
}
