//! Dense and low-rank operators on discretized fields.
//!
//! Everything here acts on field vectors in the weight-normalized
//! coordinates defined in [`crate::grid`]. The main players:
//!
//! * [`OperatorMatrix`] — a dense symmetric operator (covariance,
//!   observable, or derived products);
//! * [`LowRankForm`] — an observable `O = F S F^T` given by a handful of
//!   sparse functionals `F` and a small symmetric core `S`; quadratic
//!   observables built from point values and stencils have this shape,
//!   and large-grid spectral work never needs them densified;
//! * [`sqrt_psd`] — symmetric square root of a positive semidefinite
//!   operator, used to whiten fields;
//! * [`whitened_observable_dense`] / [`whitened_observable_lowrank`] —
//!   `M = C^{1/2} O C^{1/2}`, the observable as seen by white noise. Its
//!   spectrum drives everything downstream: sampling, tails, conditioning.

use crate::error::{Error, Result};
use crate::grid::{Functional, Grid};
use crate::kernels::Kernel;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use ndarray_linalg::{Eigh, UPLO};

/// Default cap on dense matrix side length; assembling a dense operator
/// larger than this is refused unless the caller raises the cap.
/// 4096 x 4096 doubles = 128 MiB, a safe ceiling for commodity machines.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Relative tolerance for clipping round-off-negative eigenvalues when
/// taking PSD square roots: eigenvalues in `[-tol * max, 0)` are treated
/// as zero, anything more negative is an error.
pub const PSD_CLIP_REL_TOL: f64 = 1e-10;

/// A dense symmetric operator in weight-normalized field coordinates.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    matrix: Array2<f64>,
}

impl OperatorMatrix {
    /// Wraps a matrix that must already be symmetric to round-off
    /// (relative defect below `1e-12`); use [`OperatorMatrix::symmetrized`]
    /// for matrices that are only symmetric up to larger noise.
    pub fn from_symmetric(matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Mismatch(format!(
                "operator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = matrix.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
        let mut defect = 0.0_f64;
        for i in 0..matrix.nrows() {
            for j in (i + 1)..matrix.ncols() {
                defect = defect.max((matrix[[i, j]] - matrix[[j, i]]).abs());
            }
        }
        if defect > 1e-12 * scale {
            return Err(Error::Mismatch(format!(
                "matrix is not symmetric: defect {defect:e} vs scale {scale:e}"
            )));
        }
        Ok(Self { matrix })
    }

    /// Symmetric part `(A + A^T) / 2` of an arbitrary square matrix.
    ///
    /// Quadratic forms are invariant under this replacement, so observables
    /// supplied as non-symmetric matrices lose nothing.
    pub fn symmetrized(matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Mismatch(format!(
                "operator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let sym = 0.5 * (&matrix + &matrix.t());
        Ok(Self { matrix: sym })
    }

    /// Side length.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Borrow the underlying matrix.
    pub fn as_array(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// Consume into the underlying matrix.
    pub fn into_array(self) -> Array2<f64> {
        self.matrix
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &ArrayView1<'_, f64>) -> Array1<f64> {
        self.matrix.dot(v)
    }

    /// Real quadratic form `v^T A v`.
    pub fn quadratic_form(&self, v: &ArrayView1<'_, f64>) -> f64 {
        v.dot(&self.matrix.dot(v))
    }

    /// Quadratic form of a complex vector `re + i im` under a real
    /// symmetric operator; the result is real and equals
    /// `re^T A re + im^T A im`.
    pub fn quadratic_form_complex(
        &self,
        re: &ArrayView1<'_, f64>,
        im: &ArrayView1<'_, f64>,
    ) -> f64 {
        self.quadratic_form(re) + self.quadratic_form(im)
    }
}

/// Assembles the dense covariance matrix of `kernel` on `grid`, in
/// weight-normalized coordinates:
/// `C[(ci,a),(cj,b)] = sqrt(w) K_{ci,cj}(x_a, x_b) sqrt(w)`.
///
/// Refused (with [`Error::SizeCap`]) when `grid.n_dof() > dense_cap`;
/// large-grid workflows should stay on the low-rank route instead.
pub fn assemble_covariance(grid: &Grid, kernel: &Kernel, dense_cap: usize) -> Result<OperatorMatrix> {
    if kernel.components() != grid.components() {
        return Err(Error::Mismatch(format!(
            "kernel has {} components but grid has {}",
            kernel.components(),
            grid.components()
        )));
    }
    let n_dof = grid.n_dof();
    if n_dof > dense_cap {
        return Err(Error::SizeCap {
            actual: n_dof,
            cap: dense_cap,
            context: "dense covariance assembly".into(),
        });
    }
    let n_nodes = grid.n_nodes();
    let comps = grid.components();
    let w = grid.weight();
    let positions: Vec<[f64; 3]> = (0..n_nodes).map(|a| grid.node_position(a)).collect();
    let mut c = Array2::zeros((n_dof, n_dof));
    for a in 0..n_nodes {
        for b in a..n_nodes {
            let block = kernel.block(&positions[a], &positions[b]);
            for ci in 0..comps {
                for cj in 0..comps {
                    let v = w * block[ci * comps + cj];
                    c[[ci * n_nodes + a, cj * n_nodes + b]] = v;
                    c[[cj * n_nodes + b, ci * n_nodes + a]] = v;
                }
            }
        }
    }
    OperatorMatrix::from_symmetric(c)
}

/// Applies the covariance to a sparse functional without materializing the
/// dense matrix: returns the field vector `C f` (the representer of the
/// functional under the kernel), costing `n_dof * nnz(f)` kernel entries.
pub fn covariance_image(grid: &Grid, kernel: &Kernel, functional: &Functional) -> Result<Array1<f64>> {
    if kernel.components() != grid.components() {
        return Err(Error::Mismatch(format!(
            "kernel has {} components but grid has {}",
            kernel.components(),
            grid.components()
        )));
    }
    if let Some(max) = functional.max_index() {
        if max >= grid.n_dof() {
            return Err(Error::Mismatch(format!(
                "functional index {max} exceeds grid dof {}",
                grid.n_dof()
            )));
        }
    }
    let n_nodes = grid.n_nodes();
    let comps = grid.components();
    let w = grid.weight();
    // Pre-resolve the support once.
    let support: Vec<(usize, [f64; 3], f64)> = functional
        .entries()
        .iter()
        .map(|&(flat, coeff)| {
            let (ce, node) = grid.split_index(flat);
            (ce, grid.node_position(node), coeff)
        })
        .collect();
    let mut out = Array1::zeros(grid.n_dof());
    for node in 0..n_nodes {
        let x = grid.node_position(node);
        for ci in 0..comps {
            let mut acc = 0.0;
            for &(ce, ref y, coeff) in &support {
                acc += coeff * kernel.entry(&x, y, ci, ce);
            }
            out[ci * n_nodes + node] = w * acc;
        }
    }
    Ok(out)
}

/// Stacks [`covariance_image`] columns for several functionals.
pub fn covariance_images(
    grid: &Grid,
    kernel: &Kernel,
    functionals: &[Functional],
) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((grid.n_dof(), functionals.len()));
    for (k, f) in functionals.iter().enumerate() {
        let col = covariance_image(grid, kernel, f)?;
        out.column_mut(k).assign(&col);
    }
    Ok(out)
}

/// Gram matrix `G = F^T C F` of sparse functionals under the covariance,
/// computed from kernel evaluations at the functional supports only
/// (no dense covariance, cost independent of the grid size).
pub fn functional_gram(
    grid: &Grid,
    kernel: &Kernel,
    functionals: &[Functional],
) -> Result<Array2<f64>> {
    if kernel.components() != grid.components() {
        return Err(Error::Mismatch(format!(
            "kernel has {} components but grid has {}",
            kernel.components(),
            grid.components()
        )));
    }
    let w = grid.weight();
    let resolve = |f: &Functional| -> Result<Vec<(usize, [f64; 3], f64)>> {
        f.entries()
            .iter()
            .map(|&(flat, coeff)| {
                if flat >= grid.n_dof() {
                    return Err(Error::Mismatch(format!(
                        "functional index {flat} exceeds grid dof {}",
                        grid.n_dof()
                    )));
                }
                let (ce, node) = grid.split_index(flat);
                Ok((ce, grid.node_position(node), coeff))
            })
            .collect()
    };
    let supports: Vec<_> = functionals.iter().map(resolve).collect::<Result<_>>()?;
    let r = functionals.len();
    let mut g = Array2::zeros((r, r));
    for a in 0..r {
        for b in a..r {
            let mut acc = 0.0;
            for &(ci, ref x, cx) in &supports[a] {
                for &(cj, ref y, cy) in &supports[b] {
                    acc += cx * cy * kernel.entry(x, y, ci, cj);
                }
            }
            let v = w * acc;
            g[[a, b]] = v;
            g[[b, a]] = v;
        }
    }
    Ok(g)
}

/// A quadratic observable `Q(phi) = y^T S y` with `y_k = F_k(phi)`:
/// a small symmetric core `S` contracted against a few sparse functionals.
/// Equivalent to the dense symmetric operator `F S F^T`, but kept factored.
#[derive(Debug, Clone)]
pub struct LowRankForm {
    functionals: Vec<Functional>,
    core: Array2<f64>,
}

impl LowRankForm {
    /// Builds a low-rank form; `core` must be square of side
    /// `functionals.len()` and symmetric.
    pub fn new(functionals: Vec<Functional>, core: Array2<f64>) -> Result<Self> {
        let r = functionals.len();
        if core.nrows() != r || core.ncols() != r {
            return Err(Error::Mismatch(format!(
                "core must be {r}x{r}, got {}x{}",
                core.nrows(),
                core.ncols()
            )));
        }
        let scale = core.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
        for i in 0..r {
            for j in (i + 1)..r {
                if (core[[i, j]] - core[[j, i]]).abs() > 1e-12 * scale {
                    return Err(Error::Mismatch("core matrix must be symmetric".into()));
                }
            }
        }
        Ok(Self { functionals, core })
    }

    /// Number of functionals (the rank of the form is at most this).
    pub fn rank_bound(&self) -> usize {
        self.functionals.len()
    }

    /// The sparse functionals `F`.
    pub fn functionals(&self) -> &[Functional] {
        &self.functionals
    }

    /// The symmetric core `S`.
    pub fn core(&self) -> &Array2<f64> {
        &self.core
    }

    /// Dense factor matrix `F` with one functional per column.
    pub fn factor_dense(&self, n_dof: usize) -> Array2<f64> {
        let mut f = Array2::zeros((n_dof, self.functionals.len()));
        for (k, functional) in self.functionals.iter().enumerate() {
            for &(i, c) in functional.entries() {
                f[[i, k]] = c;
            }
        }
        f
    }

    /// Densifies to `F S F^T`.
    pub fn to_dense(&self, n_dof: usize) -> Result<OperatorMatrix> {
        if let Some(max) = self.functionals.iter().filter_map(Functional::max_index).max() {
            if max >= n_dof {
                return Err(Error::Mismatch(format!(
                    "functional index {max} exceeds requested dimension {n_dof}"
                )));
            }
        }
        let f = self.factor_dense(n_dof);
        let m = f.dot(&self.core).dot(&f.t());
        OperatorMatrix::symmetrized(m)
    }

    /// Evaluates all functionals on a field vector.
    pub fn evaluate(&self, field: &ArrayView1<'_, f64>) -> Array1<f64> {
        Array1::from_iter(self.functionals.iter().map(|f| f.apply(field)))
    }

    /// Real quadratic form `Q(phi) = y^T S y`, `y = F(phi)`.
    pub fn quadratic_form(&self, field: &ArrayView1<'_, f64>) -> f64 {
        let y = self.evaluate(field);
        y.dot(&self.core.dot(&y))
    }

    /// Quadratic form for a complex field `re + i im`; real because the
    /// core is real symmetric.
    pub fn quadratic_form_complex(
        &self,
        re: &ArrayView1<'_, f64>,
        im: &ArrayView1<'_, f64>,
    ) -> f64 {
        self.quadratic_form(re) + self.quadratic_form(im)
    }
}

/// Squared point value of a scalar field at the grid center:
/// `Q(phi) = phi(0)^2` as a rank-one [`LowRankForm`].
pub fn observable_point_intensity(grid: &Grid) -> Result<LowRankForm> {
    if grid.components() != 1 {
        return Err(Error::Mismatch(format!(
            "point intensity expects a scalar field, grid has {} components",
            grid.components()
        )));
    }
    let f = grid.value_functional(0, grid.center_node())?;
    LowRankForm::new(vec![f], Array2::from_elem((1, 1), 1.0))
}

/// Helicity density of a three-component field at the grid center:
/// `Q(v) = v(0) . (curl v)(0)`, with the curl discretized by central
/// differences. Six functionals (three values, three curl components) and
/// the symmetric coupling core `[[0, I/2], [I/2, 0]]`.
pub fn observable_helicity(grid: &Grid) -> Result<LowRankForm> {
    if grid.dim() != 3 || grid.components() != 3 {
        return Err(Error::Mismatch(format!(
            "helicity expects a 3-component field on a 3-d grid, got dim {} with {} components",
            grid.dim(),
            grid.components()
        )));
    }
    let center = grid.center_node();
    let mut functionals = Vec::with_capacity(6);
    for comp in 0..3 {
        functionals.push(grid.value_functional(comp, center)?);
    }
    for i in 0..3 {
        // (curl v)_i = d_{i+1} v_{i+2} - d_{i+2} v_{i+1} (cyclic, 0-based).
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        let plus = grid.derivative_functional(k, center, j)?;
        let minus = grid.derivative_functional(j, center, k)?;
        let mut entries: Vec<(usize, f64)> = plus.entries().to_vec();
        entries.extend(minus.entries().iter().map(|&(idx, c)| (idx, -c)));
        functionals.push(Functional::from_entries(entries));
    }
    let mut core = Array2::zeros((6, 6));
    for i in 0..3 {
        core[[i, 3 + i]] = 0.5;
        core[[3 + i, i]] = 0.5;
    }
    LowRankForm::new(functionals, core)
}

/// Symmetric PSD square root via eigendecomposition.
///
/// Eigenvalues in `[-rel_tol * max, 0)` are clipped to zero (round-off
/// from assembly); anything more negative raises [`Error::NotPsd`].
pub fn sqrt_psd(op: &OperatorMatrix, rel_tol: f64) -> Result<OperatorMatrix> {
    let (vals, vecs) = op
        .as_array()
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Eigensolver(format!("symmetric eigendecomposition failed: {e}")))?;
    let max = vals.iter().fold(0.0_f64, |m, &v| m.max(v));
    if max <= 0.0 {
        let min = vals.iter().fold(0.0_f64, |m, &v| m.min(v));
        if min >= -1e-300 {
            // Identically zero operator: its square root is zero.
            return OperatorMatrix::from_symmetric(Array2::zeros((op.dim(), op.dim())));
        }
        return Err(Error::NotPsd { min_eig: min, scale: max.max(1e-300) });
    }
    let floor = -rel_tol * max;
    let mut scaled = vecs.clone();
    for (mut col, &val) in scaled.axis_iter_mut(Axis(1)).zip(vals.iter()) {
        if val < floor {
            return Err(Error::NotPsd { min_eig: val, scale: max });
        }
        let s = val.max(0.0).sqrt();
        col.mapv_inplace(|x| x * s);
    }
    let root = scaled.dot(&vecs.t());
    OperatorMatrix::symmetrized(root)
}

/// `M = C^{1/2} O C^{1/2}` for a dense observable: the observable in the
/// coordinates where the field is white noise. Its eigenvalues are the ones
/// that control the distribution of `Q`.
pub fn whitened_observable_dense(
    cov_sqrt: &OperatorMatrix,
    observable: &OperatorMatrix,
) -> Result<OperatorMatrix> {
    if cov_sqrt.dim() != observable.dim() {
        return Err(Error::Mismatch(format!(
            "covariance root is {}x{0} but observable is {1}x{1}",
            cov_sqrt.dim(),
            observable.dim()
        )));
    }
    let m = cov_sqrt.as_array().dot(observable.as_array()).dot(cov_sqrt.as_array());
    OperatorMatrix::symmetrized(m)
}

/// `M = C^{1/2} O C^{1/2}` for a low-rank observable, assembled as
/// `(C^{1/2} F) S (C^{1/2} F)^T`, which preserves the factored structure's
/// exact rank and symmetry.
pub fn whitened_observable_lowrank(
    cov_sqrt: &OperatorMatrix,
    observable: &LowRankForm,
) -> Result<OperatorMatrix> {
    let n = cov_sqrt.dim();
    if let Some(max) = observable.functionals().iter().filter_map(Functional::max_index).max() {
        if max >= n {
            return Err(Error::Mismatch(format!(
                "functional index {max} exceeds operator dimension {n}"
            )));
        }
    }
    let b = cov_sqrt.as_array().dot(&observable.factor_dense(n));
    let m = b.dot(observable.core()).dot(&b.t());
    OperatorMatrix::symmetrized(m)
}
