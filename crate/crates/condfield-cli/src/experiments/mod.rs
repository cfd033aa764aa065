//! Experiment runners: each builds its inputs from the validated config,
//! writes CSV/JSON artifacts into the run directory, and returns the
//! verdicts that decide the process exit code.

use crate::artifacts::RunDir;
use crate::config::{Config, Experiment};
use crate::outcome::{CliError, Verdict};
use condfield::grid::Grid;
use condfield::kernels::Kernel;
use condfield::operators::{
    assemble_covariance, sqrt_psd, whitened_observable_dense, LowRankForm, DEFAULT_DENSE_CAP,
    PSD_CLIP_REL_TOL,
};
use condfield::sampling::tails::TailModel;
use condfield::sampling::{kl_basis, FieldKind, KlBasis};
use condfield::spectral::{eig_symmetric, Spectrum, DEGENERACY_REL_TOL};
use serde::Serialize;

mod adler;
mod concentration;
mod helicity;
mod prop3;
mod sample;
mod spectrum;
mod tails;

/// Runs the configured experiment, writing artifacts into `dir`.
pub fn run(config: &Config, dir: &mut RunDir) -> Result<Vec<Verdict>, CliError> {
    match config.experiment {
        Experiment::Prop3 => prop3::run(config, dir),
        Experiment::Spectrum => spectrum::run(config, dir),
        Experiment::Tails => tails::run(config, dir),
        Experiment::Concentration => concentration::run(config, dir),
        Experiment::Adler => adler::run(config, dir),
        Experiment::Helicity => helicity::run(config, dir),
        Experiment::Sample => sample::run(config, dir),
    }
}

/// Grid, kernel, and observable built from their config blocks; the
/// blocks are guaranteed present by validation when this is called.
pub(crate) fn build_inputs(config: &Config) -> Result<(Grid, Kernel, LowRankForm), CliError> {
    let grid = config.grid.as_ref().expect("validated").build()?;
    let kernel = config.kernel.as_ref().expect("validated").build()?;
    let observable = config.observable.as_ref().expect("validated").build(&grid)?;
    Ok((grid, kernel, observable))
}

/// Dense conditioning pipeline shared by the sampling experiments:
/// covariance, its square root, the whitened-observable spectrum, and the
/// aligned sampling basis. Fails with a resource-cap error when the grid
/// is too large for dense assembly.
pub(crate) fn dense_basis(
    grid: &Grid,
    kernel: &Kernel,
    observable: &LowRankForm,
    kind: FieldKind,
) -> Result<(KlBasis, Spectrum), CliError> {
    let cov = assemble_covariance(grid, kernel, DEFAULT_DENSE_CAP)?;
    let root = sqrt_psd(&cov, PSD_CLIP_REL_TOL)?;
    let dense = observable.to_dense(grid.n_dof())?;
    let whitened = whitened_observable_dense(&root, &dense)?;
    let spectrum = eig_symmetric(&whitened, DEGENERACY_REL_TOL)?;
    let basis = kl_basis(&root, &spectrum, kind)?;
    Ok((basis, spectrum))
}

/// The unit conditioning thresholds are expressed in: the observable's
/// mean when it is meaningfully positive, otherwise its root mean square
/// (as for sign-symmetric observables such as the helicity, whose mean
/// vanishes).
#[derive(Debug, Clone, Serialize)]
pub(crate) struct ThresholdUnit {
    /// Multiplier applied to configured `u_grid` entries.
    pub value: f64,
    /// `"mean"` or `"rms"`.
    pub basis: &'static str,
}

pub(crate) fn threshold_unit(model: &TailModel) -> Result<ThresholdUnit, CliError> {
    let mean = model.mean();
    let rms = (model.variance() + mean * mean).sqrt();
    if !(rms.is_finite() && rms > 0.0) {
        return Err(CliError::Internal(format!(
            "observable has no scale to normalize thresholds against (rms {rms})"
        )));
    }
    if mean > 0.01 * rms {
        Ok(ThresholdUnit { value: mean, basis: "mean" })
    } else {
        Ok(ThresholdUnit { value: rms, basis: "rms" })
    }
}

/// True when the sequence never increases (ties allowed).
pub(crate) fn nonincreasing(values: impl IntoIterator<Item = f64>) -> bool {
    let mut prev = f64::INFINITY;
    for v in values {
        if v > prev {
            return false;
        }
        prev = v;
    }
    true
}
