//! High local maximum of a scalar Gaussian field.
//!
//! Conditioning a scalar field on a large squared value at the origin,
//! `Q = |phi(0)|^2 > u`, is the simplest instance of the conditioning
//! machinery: the observable has rank one, its single nonzero eigenvalue
//! is the field variance `C(0, 0)`, and the conditioned field collapses
//! onto one deterministic profile — the correlation function itself,
//! `phi(x) -> A C(x, 0) / C(0, 0)`. This module verifies that picture on
//! the grid: the discrete top eigenvalue, the purity of the rank-one
//! spectrum, the alignment of the discrete top mode with the kernel
//! column, and the growth of that alignment in conditioned samples as the
//! threshold rises.

use crate::concentration::{
    concentration_curve, ConcentrationConfig, ConcentrationCurve, SplitMode,
};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernels::Kernel;
use crate::operators::{
    assemble_covariance, covariance_image, observable_point_intensity, sqrt_psd,
    whitened_observable_dense, OperatorMatrix, DEFAULT_DENSE_CAP, PSD_CLIP_REL_TOL,
};
use crate::sampling::{kl_basis, FieldKind, KlBasis};
use crate::spectral::{
    eig_symmetric, product_spectrum_lowrank, transported_modes, Spectrum, DEGENERACY_REL_TOL,
};
use serde::Serialize;

/// Spectral summary of the squared-value-at-origin observable.
#[derive(Debug, Clone, Serialize)]
pub struct PeakModeReport {
    /// Top eigenvalue from the dense whitened route.
    pub top_eigenvalue: f64,
    /// Top eigenvalue from the low-rank product route.
    pub lowrank_top: f64,
    /// Field variance `C(0, 0)`, the analytic value of both.
    pub expected_variance: f64,
    /// Largest remaining eigenvalue magnitude relative to the top; a
    /// rank-one observable should leave only numerical dust here.
    pub spurious_rel_max: f64,
    /// Cosine between the dense-route top mode and the kernel column at
    /// the origin.
    pub alignment_cosine: f64,
}

/// One node of the conditioned-peak profile comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ProfilePoint {
    /// Position along the first axis.
    pub position: f64,
    /// Discrete top mode, normalized to 1 at the origin.
    pub discrete: f64,
    /// Analytic profile `C(x, 0) / C(0, 0)`.
    pub analytic: f64,
}

/// Builds the dense whitened machinery shared by the checks below.
fn scalar_setup(grid: &Grid, kernel: &Kernel) -> Result<(OperatorMatrix, Spectrum)> {
    if grid.components() != 1 {
        return Err(Error::Mismatch(format!(
            "peak analysis needs a scalar field, grid has {} components",
            grid.components()
        )));
    }
    let cov = assemble_covariance(grid, kernel, DEFAULT_DENSE_CAP)?;
    let root = sqrt_psd(&cov, PSD_CLIP_REL_TOL)?;
    let observable = observable_point_intensity(grid)?.to_dense(grid.n_dof())?;
    let whitened = whitened_observable_dense(&root, &observable)?;
    let spectrum = eig_symmetric(&whitened, DEGENERACY_REL_TOL)?;
    Ok((root, spectrum))
}

/// Computes the spectral summary: top eigenvalue against the variance,
/// residual spectrum mass, low-rank cross-check, and mode alignment.
pub fn peak_mode_report(grid: &Grid, kernel: &Kernel) -> Result<PeakModeReport> {
    let (root, spectrum) = scalar_setup(grid, kernel)?;
    let top = spectrum.eigenvalues()[0];
    if !(top > 0.0) {
        return Err(Error::Spectrum(format!(
            "top eigenvalue {top} of the squared-value observable is not positive"
        )));
    }
    let spurious_rel_max = spectrum
        .eigenvalues()
        .iter()
        .skip(1)
        .fold(0.0_f64, |m, &v| m.max(v.abs()))
        / top;
    let form = observable_point_intensity(grid)?;
    let lowrank = product_spectrum_lowrank(grid, kernel, &form, DEGENERACY_REL_TOL)?;
    let lowrank_top = lowrank
        .eigenvalues
        .first()
        .copied()
        .ok_or_else(|| Error::Spectrum("low-rank route found no nonzero eigenvalue".into()))?;
    // The dense-route top mode, against the kernel column at the origin.
    let mode = transported_modes(&root, &spectrum, 0, 1)?;
    let column = covariance_image(grid, kernel, &grid.value_functional(0, grid.center_node())?)?;
    let dot = mode.column(0).dot(&column);
    let alignment_cosine =
        dot.abs() / (mode.column(0).dot(&mode.column(0)).sqrt() * column.dot(&column).sqrt());
    let expected_variance = kernel.entry(&[0.0; 3], &[0.0; 3], 0, 0);
    Ok(PeakModeReport {
        top_eigenvalue: top,
        lowrank_top,
        expected_variance,
        spurious_rel_max,
        alignment_cosine,
    })
}

/// Tabulates the discrete top mode along the first axis against the
/// analytic correlation profile.
pub fn peak_profile(grid: &Grid, kernel: &Kernel) -> Result<Vec<ProfilePoint>> {
    let (root, spectrum) = scalar_setup(grid, kernel)?;
    let mode = transported_modes(&root, &spectrum, 0, 1)?;
    let center = grid.center_node();
    let center_value = mode[[center, 0]];
    if center_value.abs() <= 0.0 {
        return Err(Error::Spectrum("top mode vanishes at the origin".into()));
    }
    let variance = kernel.entry(&[0.0; 3], &[0.0; 3], 0, 0);
    let mut points = Vec::new();
    let center_multi = grid.multi_index(center);
    for node in 0..grid.n_nodes() {
        let multi = grid.multi_index(node);
        // Keep the line through the center along axis 0.
        if multi[1..] != center_multi[1..] {
            continue;
        }
        let position = grid.node_position(node)[0];
        // Stored values carry the quadrature weight root, which is the
        // same at every node, so the ratio to the center value removes it.
        let discrete = mode[[node, 0]] / center_value;
        let analytic = kernel.entry(&grid.node_position(node), &[0.0; 3], 0, 0) / variance;
        points.push(ProfilePoint { position, discrete, analytic });
    }
    Ok(points)
}

/// Settings for the conditioned-peak alignment sweep.
#[derive(Debug, Clone)]
pub struct PeakAlignmentConfig {
    /// Conditioning thresholds for `|phi(0)|^2`.
    pub thresholds: Vec<f64>,
    /// Draws per threshold.
    pub samples: usize,
    /// Base seed.
    pub seed: u64,
    /// Field kind for the sampler.
    pub kind: FieldKind,
    /// Remainder comparison factor for the companion statistics.
    pub epsilon: f64,
}

/// Runs a concentration sweep for the squared-value observable and
/// returns the curve; its `mean_cos_top` column tracks how the
/// conditioned field aligns with the correlation profile.
pub fn peak_alignment_curve(
    grid: &Grid,
    kernel: &Kernel,
    config: &PeakAlignmentConfig,
) -> Result<ConcentrationCurve> {
    let (root, spectrum) = scalar_setup(grid, kernel)?;
    let basis: KlBasis = kl_basis(&root, &spectrum, config.kind)?;
    let sweep = ConcentrationConfig {
        thresholds: config.thresholds.clone(),
        epsilon: config.epsilon,
        amplitude_factor: 1.0,
        split: SplitMode::Upper,
        samples: config.samples,
        seed: config.seed,
        method: None,
    };
    concentration_curve(&basis, &sweep)
}
