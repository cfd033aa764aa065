//! Uniform tensor-product grids and discrete linear functionals.
//!
//! A [`Grid`] discretizes the box `[-L, L]^d` (`d` = 1, 2, or 3) with the
//! same odd number of points `n` along every axis, so the origin is always a
//! node. Fields may carry several components (a scalar field has one, a
//! velocity field three).
//!
//! # Field vector convention
//!
//! All dense vectors and matrices in this crate live in *weight-normalized*
//! coordinates: the entry for component `c` at node `a` stores
//! `sqrt(w) * field_c(x_a)`, where `w = h^d` is the quadrature weight of the
//! uniform rule (`h` is the grid spacing). With this convention the Euclidean
//! inner product of two vectors equals the quadrature approximation of the
//! `L^2` inner product of the fields, covariance matrices stay symmetric, and
//! no separate mass matrix is needed.
//!
//! Linear functionals of the field (point values, central-difference
//! derivatives) are represented sparsely by [`Functional`]; their coefficient
//! vectors are expressed in the same weight-normalized coordinates, so
//! `functional.apply(&field_vector)` evaluates the functional exactly.
//!
//! Flat indexing is component-major: `flat = component * n_nodes + node`,
//! with nodes enumerated row-major (axis 0 slowest).

use crate::error::{Error, Result};
use ndarray::{Array1, ArrayView1};

/// Maximum spatial dimension supported.
pub const MAX_DIM: usize = 3;

/// A uniform grid on `[-L, L]^d` with an odd number of points per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    points_per_axis: usize,
    half_extent: f64,
    components: usize,
    spacing: f64,
    n_nodes: usize,
}

impl Grid {
    /// Builds a grid.
    ///
    /// * `dim` — spatial dimension, 1 to 3;
    /// * `points_per_axis` — odd, at least 3, so the origin is a node and
    ///   central differences exist at interior nodes;
    /// * `half_extent` — the box is `[-half_extent, half_extent]` per axis;
    /// * `components` — number of field components (at least 1).
    pub fn new(
        dim: usize,
        points_per_axis: usize,
        half_extent: f64,
        components: usize,
    ) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Grid(format!("dimension must be 1..={MAX_DIM}, got {dim}")));
        }
        if points_per_axis < 3 || points_per_axis % 2 == 0 {
            return Err(Error::Grid(format!(
                "points per axis must be odd and >= 3, got {points_per_axis}"
            )));
        }
        if !(half_extent > 0.0) || !half_extent.is_finite() {
            return Err(Error::Grid(format!("half extent must be positive, got {half_extent}")));
        }
        if components == 0 {
            return Err(Error::Grid("components must be >= 1".into()));
        }
        let spacing = 2.0 * half_extent / (points_per_axis - 1) as f64;
        let n_nodes = points_per_axis.pow(dim as u32);
        Ok(Self { dim, points_per_axis, half_extent, components, spacing, n_nodes })
    }

    /// Builds a single-component grid.
    pub fn scalar(dim: usize, points_per_axis: usize, half_extent: f64) -> Result<Self> {
        Self::new(dim, points_per_axis, half_extent, 1)
    }

    /// Spatial dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points along each axis.
    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// Half extent `L` of the box `[-L, L]^d`.
    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    /// Number of field components.
    pub fn components(&self) -> usize {
        self.components
    }

    /// Grid spacing `h = 2L / (n - 1)`.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Quadrature weight of every node, `h^d` (the rule is uniform).
    pub fn weight(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Square root of the node weight; the factor that converts raw field
    /// values to weight-normalized coordinates.
    pub fn sqrt_weight(&self) -> f64 {
        self.weight().sqrt()
    }

    /// Number of spatial nodes, `n^d`.
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Total degrees of freedom, `components * n^d`. This is the length of
    /// every field vector on this grid.
    pub fn n_dof(&self) -> usize {
        self.components * self.n_nodes
    }

    /// Flat node index of a multi-index (axis 0 slowest). Entries beyond
    /// `dim` are ignored.
    pub fn node_index(&self, multi: [usize; MAX_DIM]) -> usize {
        let n = self.points_per_axis;
        let mut node = 0;
        for &i in multi.iter().take(self.dim) {
            debug_assert!(i < n);
            node = node * n + i;
        }
        node
    }

    /// Multi-index of a flat node index; entries beyond `dim` are zero.
    pub fn multi_index(&self, node: usize) -> [usize; MAX_DIM] {
        debug_assert!(node < self.n_nodes);
        let n = self.points_per_axis;
        let mut multi = [0usize; MAX_DIM];
        let mut rest = node;
        for k in (0..self.dim).rev() {
            multi[k] = rest % n;
            rest /= n;
        }
        multi
    }

    /// Position of a node; coordinates beyond `dim` are zero.
    pub fn node_position(&self, node: usize) -> [f64; MAX_DIM] {
        let multi = self.multi_index(node);
        let mut pos = [0.0; MAX_DIM];
        for k in 0..self.dim {
            pos[k] = -self.half_extent + multi[k] as f64 * self.spacing;
        }
        pos
    }

    /// Flat degree-of-freedom index of `(component, node)`; component-major.
    pub fn flat_index(&self, component: usize, node: usize) -> usize {
        debug_assert!(component < self.components && node < self.n_nodes);
        component * self.n_nodes + node
    }

    /// Inverse of [`flat_index`](Self::flat_index): `(component, node)`.
    pub fn split_index(&self, flat: usize) -> (usize, usize) {
        debug_assert!(flat < self.n_dof());
        (flat / self.n_nodes, flat % self.n_nodes)
    }

    /// Node at the origin (center of the box). Exists because `n` is odd.
    pub fn center_node(&self) -> usize {
        let mid = (self.points_per_axis - 1) / 2;
        self.node_index([mid; MAX_DIM])
    }

    /// Whether a node has both axis neighbours along every axis.
    pub fn is_interior(&self, node: usize) -> bool {
        let multi = self.multi_index(node);
        (0..self.dim).all(|k| multi[k] >= 1 && multi[k] + 1 < self.points_per_axis)
    }

    /// Neighbour of `node` shifted by `offset` steps along `axis`, or `None`
    /// if that leaves the grid.
    pub fn neighbor(&self, node: usize, axis: usize, offset: isize) -> Option<usize> {
        debug_assert!(axis < self.dim);
        let mut multi = self.multi_index(node);
        let shifted = multi[axis] as isize + offset;
        if shifted < 0 || shifted >= self.points_per_axis as isize {
            return None;
        }
        multi[axis] = shifted as usize;
        Some(self.node_index(multi))
    }

    /// Functional returning the value of `component` at `node`:
    /// a single coefficient `1/sqrt(w)` in weight-normalized coordinates.
    pub fn value_functional(&self, component: usize, node: usize) -> Result<Functional> {
        self.check_site(component, node)?;
        let coeff = 1.0 / self.sqrt_weight();
        Ok(Functional { entries: vec![(self.flat_index(component, node), coeff)] })
    }

    /// Functional returning the central-difference partial derivative of
    /// `component` along `axis` at `node`:
    /// `(field(x + h e_axis) - field(x - h e_axis)) / (2h)`.
    ///
    /// Errors if `node` touches the boundary along `axis` (the stencil would
    /// leave the grid).
    pub fn derivative_functional(
        &self,
        component: usize,
        node: usize,
        axis: usize,
    ) -> Result<Functional> {
        self.check_site(component, node)?;
        if axis >= self.dim {
            return Err(Error::Grid(format!("axis {axis} out of range for dimension {}", self.dim)));
        }
        let fwd = self.neighbor(node, axis, 1);
        let bwd = self.neighbor(node, axis, -1);
        let (fwd, bwd) = match (fwd, bwd) {
            (Some(f), Some(b)) => (f, b),
            _ => {
                return Err(Error::Grid(format!(
                    "central difference along axis {axis} needs both neighbours; node {node} is on the boundary"
                )))
            }
        };
        let coeff = 1.0 / (2.0 * self.spacing * self.sqrt_weight());
        let mut entries =
            vec![(self.flat_index(component, fwd), coeff), (self.flat_index(component, bwd), -coeff)];
        entries.sort_unstable_by_key(|&(i, _)| i);
        Ok(Functional { entries })
    }

    fn check_site(&self, component: usize, node: usize) -> Result<()> {
        if component >= self.components {
            return Err(Error::Grid(format!(
                "component {component} out of range (grid has {})",
                self.components
            )));
        }
        if node >= self.n_nodes {
            return Err(Error::Grid(format!(
                "node {node} out of range (grid has {})",
                self.n_nodes
            )));
        }
        Ok(())
    }
}

/// A sparse linear functional of the field, with coefficients in the
/// weight-normalized field coordinates (see the module docs).
///
/// `apply(&v)` is the plain dot product of the coefficients with the field
/// vector, which equals the continuum functional applied to the sampled
/// field (exactly for point values, to stencil accuracy for derivatives).
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    /// `(flat index, coefficient)` pairs, sorted by index, indices unique.
    entries: Vec<(usize, f64)>,
}

impl Functional {
    /// Builds a functional from raw `(flat index, coefficient)` pairs.
    /// Duplicate indices are summed; zero coefficients are kept.
    pub fn from_entries(mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_unstable_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, c) in entries {
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += c,
                _ => merged.push((i, c)),
            }
        }
        Self { entries: merged }
    }

    /// The sorted `(flat index, coefficient)` pairs.
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    /// Evaluates the functional on a field vector.
    pub fn apply(&self, field: &ArrayView1<'_, f64>) -> f64 {
        self.entries.iter().map(|&(i, c)| c * field[i]).sum()
    }

    /// Dense coefficient vector of length `len`.
    pub fn to_dense(&self, len: usize) -> Array1<f64> {
        let mut out = Array1::zeros(len);
        for &(i, c) in &self.entries {
            out[i] = c;
        }
        out
    }

    /// Largest flat index with a coefficient, or `None` if empty.
    pub fn max_index(&self) -> Option<usize> {
        self.entries.last().map(|&(i, _)| i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;

    #[test]
    fn five_point_line_has_unit_spacing_and_weight() {
        let grid = Grid::scalar(1, 5, 2.0).unwrap();
        assert_eq!(grid.spacing(), 1.0);
        assert_eq!(grid.weight(), 1.0);
        assert_eq!(grid.n_nodes(), 5);
        assert_eq!(grid.n_dof(), 5);
        let coords: Vec<f64> = (0..5).map(|a| grid.node_position(a)[0]).collect();
        assert_eq!(coords, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(grid.center_node(), 2);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(Grid::scalar(0, 5, 1.0).is_err());
        assert!(Grid::scalar(4, 5, 1.0).is_err());
        assert!(Grid::scalar(2, 4, 1.0).is_err());
        assert!(Grid::scalar(2, 1, 1.0).is_err());
        assert!(Grid::scalar(2, 5, 0.0).is_err());
        assert!(Grid::scalar(2, 5, -1.0).is_err());
        assert!(Grid::new(2, 5, 1.0, 0).is_err());
    }

    #[test]
    fn index_maps_are_mutually_inverse() {
        for dim in 1..=3 {
            for n in [3usize, 5] {
                let grid = Grid::new(dim, n, 1.0, 2).unwrap();
                for node in 0..grid.n_nodes() {
                    assert_eq!(grid.node_index(grid.multi_index(node)), node);
                }
                let mut seen = vec![false; grid.n_dof()];
                for c in 0..2 {
                    for node in 0..grid.n_nodes() {
                        let flat = grid.flat_index(c, node);
                        assert!(!seen[flat], "flat index collision");
                        seen[flat] = true;
                        assert_eq!(grid.split_index(flat), (c, node));
                    }
                }
                assert!(seen.iter().all(|&s| s));
            }
        }
    }

    #[test]
    fn center_node_sits_at_origin() {
        for dim in 1..=3 {
            let grid = Grid::scalar(dim, 7, 1.5).unwrap();
            let pos = grid.node_position(grid.center_node());
            for k in 0..dim {
                assert_abs_diff_eq!(pos[k], 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn value_functional_reads_the_node_value() {
        // 1D, n = 5, L = 2: weight 1, so the single coefficient is exactly 1.
        let grid = Grid::scalar(1, 5, 2.0).unwrap();
        let f = grid.value_functional(0, grid.center_node()).unwrap();
        assert_eq!(f.entries(), &[(2, 1.0)]);

        // With non-unit weight the coefficient must undo the normalization:
        // raw value 3.5 at the node must come back exactly.
        let grid = Grid::scalar(2, 5, 1.0).unwrap();
        let node = grid.center_node();
        let mut field = Array1::zeros(grid.n_dof());
        field[grid.flat_index(0, node)] = grid.sqrt_weight() * 3.5;
        let f = grid.value_functional(0, node).unwrap();
        assert_abs_diff_eq!(f.apply(&field.view()), 3.5, epsilon = 1e-14);
    }

    #[test]
    fn derivative_functional_is_exact_on_linear_fields() {
        // Central differences are exact on affine functions; the recovered
        // slope must match to round-off.
        let grid = Grid::scalar(3, 5, 1.0).unwrap();
        let slope = [1.25, -0.5, 2.0];
        let sw = grid.sqrt_weight();
        let field = Array1::from_shape_fn(grid.n_dof(), |flat| {
            let (_, node) = grid.split_index(flat);
            let x = grid.node_position(node);
            sw * (slope[0] * x[0] + slope[1] * x[1] + slope[2] * x[2] + 0.7)
        });
        let node = grid.center_node();
        for axis in 0..3 {
            let d = grid.derivative_functional(0, node, axis).unwrap();
            assert_abs_diff_eq!(d.apply(&field.view()), slope[axis], epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_functional_coefficients_on_unit_grid() {
        // 1D, n = 5, L = 2: h = 1, w = 1, so the stencil is (+1/2, -1/2) on
        // the two neighbours of the center node.
        let grid = Grid::scalar(1, 5, 2.0).unwrap();
        let d = grid.derivative_functional(0, 2, 0).unwrap();
        assert_eq!(d.entries(), &[(1, -0.5), (3, 0.5)]);
    }

    #[test]
    fn derivative_on_boundary_is_rejected() {
        let grid = Grid::scalar(1, 5, 2.0).unwrap();
        assert!(grid.derivative_functional(0, 0, 0).is_err());
        assert!(grid.derivative_functional(0, 4, 0).is_err());
        assert!(grid.derivative_functional(0, 2, 1).is_err(), "axis out of range");
    }

    #[test]
    fn functional_merges_duplicate_entries() {
        let f = Functional::from_entries(vec![(3, 1.0), (1, 2.0), (3, 0.5)]);
        assert_eq!(f.entries(), &[(1, 2.0), (3, 1.5)]);
        let dense = f.to_dense(5);
        assert_eq!(dense.as_slice().unwrap(), &[0.0, 2.0, 0.0, 1.5, 0.0]);
    }

    #[test]
    fn interior_test_matches_multi_index() {
        let grid = Grid::scalar(2, 5, 1.0).unwrap();
        for node in 0..grid.n_nodes() {
            let m = grid.multi_index(node);
            let expected = (0..2).all(|k| m[k] >= 1 && m[k] <= 3);
            assert_eq!(grid.is_interior(node), expected);
        }
    }
}
