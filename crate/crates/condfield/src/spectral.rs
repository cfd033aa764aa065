//! Spectra of whitened observables and covariance-observable products.
//!
//! The distribution of a quadratic observable `Q = <phi, O phi>` of a
//! Gaussian field with covariance `C` is controlled by the eigenvalues of
//! the symmetric matrix `M = C^{1/2} O C^{1/2}`. The *product* `C O` is not
//! symmetric, but it is similar to `M`, so its nonzero spectrum is the
//! same — and when `O` has low rank, the nonzero eigenvalues can be read
//! off a tiny Gram problem without ever forming a dense matrix. This module
//! provides:
//!
//! * [`eig_symmetric`] — full spectrum of a symmetric operator, ordered
//!   descending, with deterministic eigenvector signs and degeneracy
//!   grouping;
//! * [`product_spectrum_dense`] — eigenvalues of `C O` by a general dense
//!   eigensolver (small problems only; used as an independent cross-check);
//! * [`product_spectrum_lowrank`] — nonzero eigenvalues of `C O` for a
//!   low-rank observable from the functional Gram matrix, plus the
//!   combination weights needed to realize the field eigenmodes;
//! * [`check_spectral_equivalence`] — compares the two routes and renders
//!   a serializable verdict;
//! * [`principal_angles`] — angles between subspaces, for comparing
//!   eigenspaces that are only defined up to rotation within a degenerate
//!   group.

use crate::error::{Error, Result};
use crate::grid::{Functional, Grid};
use crate::kernels::Kernel;
use crate::operators::{
    covariance_image, functional_gram, sqrt_psd, LowRankForm, OperatorMatrix, PSD_CLIP_REL_TOL,
};
use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{Eig, Eigh, QR, SVD, UPLO};
use serde::Serialize;

/// Default relative tolerance for treating neighbouring eigenvalues as one
/// degenerate group.
pub const DEGENERACY_REL_TOL: f64 = 1e-6;

/// Relative threshold below which an eigenvalue counts as zero when
/// comparing nonzero spectra.
pub const NEGLIGIBLE_EIG_REL_TOL: f64 = 1e-10;

/// Default cap on the side length for the dense non-symmetric eigensolver;
/// it exists only for cross-checks, so it is kept small.
pub const NONSYM_EIG_CAP: usize = 512;

/// A maximal run of (numerically) equal eigenvalues in a descending
/// spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegenerateGroup {
    /// Index of the first member in the descending ordering.
    pub start: usize,
    /// Number of members.
    pub len: usize,
    /// Representative value (mean of the members).
    pub value: f64,
}

/// Full spectrum of a symmetric operator: eigenvalues descending,
/// eigenvector columns aligned, degeneracy groups annotated.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Array1<f64>,
    vectors: Array2<f64>,
    groups: Vec<DegenerateGroup>,
}

impl Spectrum {
    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors, one column per eigenvalue, signs fixed so
    /// the largest-magnitude component of each column is positive.
    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    /// Degeneracy groups covering the whole spectrum in order.
    pub fn groups(&self) -> &[DegenerateGroup] {
        &self.groups
    }

    /// Number of modes.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    /// True when the spectrum is empty.
    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Largest eigenvalue magnitude (0 for an empty spectrum).
    pub fn scale(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    /// The leading group, provided its value is meaningfully positive
    /// (above `NEGLIGIBLE_EIG_REL_TOL` times the spectral scale).
    pub fn top_positive_group(&self) -> Option<&DegenerateGroup> {
        let floor = NEGLIGIBLE_EIG_REL_TOL * self.scale();
        self.groups.first().filter(|g| g.value > floor)
    }

    /// The trailing group, provided its value is meaningfully negative.
    pub fn bottom_negative_group(&self) -> Option<&DegenerateGroup> {
        let floor = NEGLIGIBLE_EIG_REL_TOL * self.scale();
        self.groups.last().filter(|g| g.value < -floor)
    }

    /// Eigenvalues with magnitude above `rel_tol` times the spectral
    /// scale, still in descending order.
    pub fn nonzero_eigenvalues(&self, rel_tol: f64) -> Vec<f64> {
        filter_negligible(self.eigenvalues.as_slice().unwrap(), rel_tol)
    }
}

/// Drops entries with magnitude at most `rel_tol` times the largest
/// magnitude and returns the rest sorted descending.
pub fn filter_negligible(values: &[f64], rel_tol: f64) -> Vec<f64> {
    let scale = values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    let mut kept: Vec<f64> = values.iter().copied().filter(|v| v.abs() > rel_tol * scale).collect();
    kept.sort_by(|a, b| b.partial_cmp(a).unwrap());
    kept
}

/// Splits a descending value sequence into maximal runs whose neighbours
/// differ by at most `rel_tol` times the overall scale.
pub fn degeneracy_groups(values_desc: &[f64], rel_tol: f64) -> Vec<DegenerateGroup> {
    let scale = values_desc.iter().fold(0.0_f64, |m, &v| m.max(v.abs())).max(1e-300);
    let gap = rel_tol * scale;
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=values_desc.len() {
        let boundary = i == values_desc.len() || (values_desc[i - 1] - values_desc[i]).abs() > gap;
        if boundary && i > start {
            let members = &values_desc[start..i];
            let value = members.iter().sum::<f64>() / members.len() as f64;
            groups.push(DegenerateGroup { start, len: i - start, value });
            start = i;
        }
    }
    groups
}

/// Symmetric eigendecomposition with canonical ordering.
///
/// Eigenvalues descend; each eigenvector's sign is fixed by making its
/// largest-magnitude component positive, so repeated runs (and different
/// construction routes of the same operator) produce identical output up
/// to round-off. Within a degenerate group only the *span* is canonical.
pub fn eig_symmetric(op: &OperatorMatrix, group_rel_tol: f64) -> Result<Spectrum> {
    let (vals, vecs) = op
        .as_array()
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Eigensolver(format!("symmetric eigendecomposition failed: {e}")))?;
    let n = vals.len();
    // LAPACK returns ascending order; flip to descending.
    let eigenvalues = Array1::from_iter(vals.iter().rev().copied());
    let mut vectors = Array2::zeros((n, n));
    for (dst, src) in (0..n).zip((0..n).rev()) {
        vectors.column_mut(dst).assign(&vecs.column(src));
    }
    for mut col in vectors.axis_iter_mut(Axis(1)) {
        let mut best = 0;
        let mut best_abs = -1.0_f64;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
    let groups = degeneracy_groups(eigenvalues.as_slice().unwrap(), group_rel_tol);
    Ok(Spectrum { eigenvalues, vectors, groups })
}

/// Eigenvalues of the (non-symmetric) product `C O` by a dense general
/// eigensolver, sorted descending.
///
/// The product is similar to a symmetric matrix, so its spectrum is real;
/// if the solver reports imaginary parts above round-off scale the input
/// was not a valid covariance/observable pair and an error is raised.
/// Intended for cross-checks only; refuses matrices larger than `cap`.
pub fn product_spectrum_dense(
    cov: &OperatorMatrix,
    observable: &OperatorMatrix,
    cap: usize,
) -> Result<Vec<f64>> {
    if cov.dim() != observable.dim() {
        return Err(Error::Mismatch(format!(
            "covariance is {0}x{0} but observable is {1}x{1}",
            cov.dim(),
            observable.dim()
        )));
    }
    if cov.dim() > cap {
        return Err(Error::SizeCap {
            actual: cov.dim(),
            cap,
            context: "dense non-symmetric eigensolve of the covariance-observable product".into(),
        });
    }
    let product = cov.as_array().dot(observable.as_array());
    let (vals, _) = product
        .eig()
        .map_err(|e| Error::Eigensolver(format!("general eigendecomposition failed: {e}")))?;
    let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.norm())).max(1e-300);
    let mut out = Vec::with_capacity(vals.len());
    for v in vals.iter() {
        if v.im.abs() > 1e-8 * scale {
            return Err(Error::Eigensolver(format!(
                "product spectrum has an unexpectedly complex eigenvalue {v}; \
                 inputs are not a PSD covariance with a symmetric observable"
            )));
        }
        out.push(v.re);
    }
    out.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(out)
}

/// Nonzero spectrum of `C O` for a low-rank observable, computed from the
/// functional Gram matrix alone.
#[derive(Debug, Clone)]
pub struct LowRankProductSpectrum {
    /// Nonzero eigenvalues of `C O`, descending.
    pub eigenvalues: Vec<f64>,
    /// Gram matrix `G = F^T C F` of the observable's functionals.
    pub gram: Array2<f64>,
    /// Combination weights, one column per kept eigenvalue: the field
    /// eigenmode for eigenvalue `k` is `C F w_k` (see
    /// [`lowrank_field_mode`]).
    pub combinations: Array2<f64>,
    /// Full spectrum of the small core `G^{1/2} S G^{1/2}` (including its
    /// negligible eigenvalues), for diagnostics.
    pub core_spectrum: Spectrum,
}

/// Computes the nonzero eigenvalues of `C O` when `O = F S F^T` has low
/// rank, without assembling any dense grid operator.
///
/// The nonzero spectrum of `C F S F^T` equals that of the small symmetric
/// matrix `G^{1/2} S G^{1/2}` with `G = F^T C F`, which costs only kernel
/// evaluations at the functional supports. For each kept eigenpair
/// `(mu, z)` the vector `w = S G^{1/2} z` satisfies
/// `(C O)(C F w) = mu (C F w)`, so `C F w` is the corresponding field
/// eigenmode; the `w` columns are returned for later realization.
pub fn product_spectrum_lowrank(
    grid: &Grid,
    kernel: &Kernel,
    form: &LowRankForm,
    group_rel_tol: f64,
) -> Result<LowRankProductSpectrum> {
    let gram = functional_gram(grid, kernel, form.functionals())?;
    let gram_op = OperatorMatrix::from_symmetric(gram.clone())?;
    // G inherits positive semidefiniteness from the covariance; a
    // substantially negative eigenvalue means the kernel is not PSD.
    let gram_root = sqrt_psd(&gram_op, PSD_CLIP_REL_TOL)?;
    let core =
        gram_root.as_array().dot(form.core()).dot(gram_root.as_array());
    let core_spectrum = eig_symmetric(&OperatorMatrix::symmetrized(core)?, group_rel_tol)?;
    let scale = core_spectrum.scale();
    let keep: Vec<usize> = (0..core_spectrum.len())
        .filter(|&k| core_spectrum.eigenvalues()[k].abs() > NEGLIGIBLE_EIG_REL_TOL * scale)
        .collect();
    let eigenvalues: Vec<f64> = keep.iter().map(|&k| core_spectrum.eigenvalues()[k]).collect();
    let mut combinations = Array2::zeros((form.rank_bound(), keep.len()));
    for (dst, &k) in keep.iter().enumerate() {
        let z = core_spectrum.vectors().column(k);
        let w = form.core().dot(&gram_root.as_array().dot(&z));
        combinations.column_mut(dst).assign(&w);
    }
    Ok(LowRankProductSpectrum { eigenvalues, gram, combinations, core_spectrum })
}

/// Realizes the `k`-th field eigenmode of a low-rank product spectrum on
/// the grid, normalized to unit length, by applying the covariance to the
/// combined functional (cost `n_dof * nnz`, no dense matrix).
pub fn lowrank_field_mode(
    grid: &Grid,
    kernel: &Kernel,
    form: &LowRankForm,
    spectrum: &LowRankProductSpectrum,
    k: usize,
) -> Result<Array1<f64>> {
    if k >= spectrum.eigenvalues.len() {
        return Err(Error::Spectrum(format!(
            "mode index {k} out of range ({} nonzero modes)",
            spectrum.eigenvalues.len()
        )));
    }
    let w = spectrum.combinations.column(k);
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for (functional, &weight) in form.functionals().iter().zip(w.iter()) {
        entries.extend(functional.entries().iter().map(|&(i, c)| (i, weight * c)));
    }
    let combined = Functional::from_entries(entries);
    let mode = covariance_image(grid, kernel, &combined)?;
    let norm = mode.dot(&mode).sqrt();
    if norm <= 0.0 {
        return Err(Error::Spectrum(format!("field mode {k} vanished on the grid")));
    }
    Ok(mode / norm)
}

/// Stacks [`lowrank_field_mode`] columns for a contiguous run of modes.
pub fn lowrank_field_modes(
    grid: &Grid,
    kernel: &Kernel,
    form: &LowRankForm,
    spectrum: &LowRankProductSpectrum,
    start: usize,
    len: usize,
) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((grid.n_dof(), len));
    for j in 0..len {
        let col = lowrank_field_mode(grid, kernel, form, spectrum, start + j)?;
        out.column_mut(j).assign(&col);
    }
    Ok(out)
}

/// Columns `C^{1/2} v_i` for eigenvectors `start .. start+len` of a
/// whitened-observable spectrum: the field-space directions carried by
/// those modes (unnormalized; their squared lengths are the variances the
/// modes contribute to the field).
pub fn transported_modes(
    cov_sqrt: &OperatorMatrix,
    spectrum: &Spectrum,
    start: usize,
    len: usize,
) -> Result<Array2<f64>> {
    if start + len > spectrum.len() {
        return Err(Error::Spectrum(format!(
            "mode range {start}..{} out of bounds for spectrum of size {}",
            start + len,
            spectrum.len()
        )));
    }
    if cov_sqrt.dim() != spectrum.vectors().nrows() {
        return Err(Error::Mismatch(format!(
            "covariance root dimension {} does not match eigenvector length {}",
            cov_sqrt.dim(),
            spectrum.vectors().nrows()
        )));
    }
    let block = spectrum.vectors().slice(ndarray::s![.., start..start + len]);
    Ok(cov_sqrt.as_array().dot(&block))
}

/// One matched eigenvalue pair in an equivalence report.
#[derive(Debug, Clone, Serialize)]
pub struct EigenPair {
    /// Eigenvalue from the whitened-observable route.
    pub whitened: f64,
    /// Eigenvalue from the product route.
    pub product: f64,
    /// `|whitened - product|` relative to the joint spectral scale (the
    /// largest eigenvalue magnitude across both spectra). Eigenvalues
    /// near zero are only determined up to round-off at that scale, so
    /// a per-pair denominator would report pure noise for them.
    pub rel_diff: f64,
}

/// Outcome of comparing the nonzero spectra of `C^{1/2} O C^{1/2}` and
/// `C O` computed by independent routes.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    /// Number of nonzero eigenvalues from the whitened route.
    pub whitened_count: usize,
    /// Number of nonzero eigenvalues from the product route.
    pub product_count: usize,
    /// Pairwise comparison over the common length.
    pub pairs: Vec<EigenPair>,
    /// Largest relative difference over the pairs (0 when empty).
    pub max_rel_diff: f64,
    /// Tolerance the verdict was rendered against.
    pub rel_tol: f64,
    /// Whether the nonzero counts agree.
    pub counts_match: bool,
    /// `counts_match` and all pairs within tolerance.
    pub verdict: bool,
}

/// Compares two descending nonzero spectra (whitened route vs product
/// route) and renders a verdict at `rel_tol`, with differences measured
/// relative to the joint spectral scale.
pub fn check_spectral_equivalence(
    whitened_nonzero: &[f64],
    product_nonzero: &[f64],
    rel_tol: f64,
) -> EquivalenceReport {
    let mut a = whitened_nonzero.to_vec();
    let mut b = product_nonzero.to_vec();
    a.sort_by(|x, y| y.partial_cmp(x).unwrap());
    b.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let scale = a
        .iter()
        .chain(&b)
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    let common = a.len().min(b.len());
    let mut pairs = Vec::with_capacity(common);
    let mut max_rel_diff = 0.0_f64;
    for k in 0..common {
        let rel_diff = (a[k] - b[k]).abs() / scale;
        max_rel_diff = max_rel_diff.max(rel_diff);
        pairs.push(EigenPair { whitened: a[k], product: b[k], rel_diff });
    }
    let counts_match = a.len() == b.len();
    EquivalenceReport {
        whitened_count: a.len(),
        product_count: b.len(),
        pairs,
        max_rel_diff,
        rel_tol,
        counts_match,
        verdict: counts_match && max_rel_diff <= rel_tol,
    }
}

/// Principal angles (radians, ascending) between the column spans of two
/// matrices with the same number of rows. Columns must be linearly
/// independent within each matrix.
pub fn principal_angles(a: &Array2<f64>, b: &Array2<f64>) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Mismatch(format!(
            "subspaces live in different spaces: {} vs {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    let orthonormalize = |m: &Array2<f64>| -> Result<Array2<f64>> {
        let (q, r) = m
            .qr()
            .map_err(|e| Error::Eigensolver(format!("QR factorization failed: {e}")))?;
        let scale = r.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(1e-300);
        for k in 0..r.nrows().min(r.ncols()) {
            if r[[k, k]].abs() < 1e-10 * scale {
                return Err(Error::Mismatch(
                    "subspace basis is rank-deficient; principal angles undefined".into(),
                ));
            }
        }
        Ok(q)
    };
    let qa = orthonormalize(a)?;
    let qb = orthonormalize(b)?;
    let overlap = qa.t().dot(&qb);
    let (_, sigma, _) = overlap
        .svd(false, false)
        .map_err(|e| Error::Eigensolver(format!("SVD failed: {e}")))?;
    let mut angles: Vec<f64> =
        sigma.iter().map(|&s| s.clamp(-1.0, 1.0).acos()).collect();
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(angles)
}
