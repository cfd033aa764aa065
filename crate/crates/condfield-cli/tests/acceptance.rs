//! Workspace acceptance sweep. Each test bundles the clauses of one
//! acceptance criterion, prints a single machine-greppable line
//!
//! ```text
//! ACCEPTANCE <index> <name>: PASS|FAIL - [ok|FAIL] clause; ...
//! ```
//!
//! with the measured numbers inline, and then fails if any clause
//! failed. The test harness only shows the lines of failing tests by
//! default; run `cargo test --test acceptance -- --nocapture` to see
//! every line.

use std::time::{Duration, Instant};

use condfield::applications::helicity::{
    helicity_spectrum_check, mode_subspace_angles, sample_mode_on_grid, curl_field,
    divergence_field, HelicityMode, HelicityParams,
};
use condfield::applications::local_max::peak_mode_report;
use condfield::concentration::{
    concentration_curve, ConcentrationConfig, CurvePoint, SplitMode, Z_95,
};
use condfield::grid::Grid;
use condfield::kernels::{Kernel, TurbulenceKernel};
use condfield::operators::{
    assemble_covariance, observable_helicity, observable_point_intensity, sqrt_psd,
    whitened_observable_dense, OperatorMatrix, DEFAULT_DENSE_CAP, PSD_CLIP_REL_TOL,
};
use condfield::sampling::tails::{tail_asymptotic, tail_prob_cf, tail_prob_mc, TailModel};
use condfield::sampling::{
    kl_basis, sample_unconditional, stream_rng, ConditionalMethod, ConditionalSampler, FieldKind,
    KlBasis,
};
use condfield::spectral::{
    check_spectral_equivalence, eig_symmetric, filter_negligible, product_spectrum_dense,
    DEGENERACY_REL_TOL, NEGLIGIBLE_EIG_REL_TOL, NONSYM_EIG_CAP,
};
use ndarray::{Array1, Array2};
use rand::Rng;

/// Collects clause verdicts for one criterion and renders the summary
/// line, appending a runtime clause against the budget.
struct Criterion {
    index: usize,
    name: &'static str,
    started: Instant,
    clauses: Vec<(bool, String)>,
}

impl Criterion {
    fn new(index: usize, name: &'static str) -> Self {
        Self { index, name, started: Instant::now(), clauses: Vec::new() }
    }

    fn clause(&mut self, ok: bool, detail: String) {
        self.clauses.push((ok, detail));
    }

    fn finish(mut self, budget: Duration) {
        let elapsed = self.started.elapsed();
        self.clause(
            elapsed <= budget,
            format!("runtime {:.1}s within {:.0}s", elapsed.as_secs_f64(), budget.as_secs_f64()),
        );
        let ok = self.clauses.iter().all(|(ok, _)| *ok);
        let body = self
            .clauses
            .iter()
            .map(|(ok, d)| format!("[{}] {d}", if *ok { "ok" } else { "FAIL" }))
            .collect::<Vec<_>>()
            .join("; ");
        let line = format!(
            "ACCEPTANCE {} {}: {} - {body}",
            self.index,
            self.name,
            if ok { "PASS" } else { "FAIL" }
        );
        println!("{line}");
        assert!(ok, "{line}");
    }
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || 2.0 * rng.random::<f64>() - 1.0)
}

#[test]
fn criterion_1_whitened_and_product_spectra_agree_on_random_instances() {
    let mut c = Criterion::new(1, "spectral-equivalence");
    const DIM: usize = 64;
    const INSTANCES: usize = 20;
    const TOL: f64 = 1e-8;
    let mut worst = 0.0_f64;
    let mut matched = 0;
    for i in 0..INSTANCES {
        let mut rng = stream_rng(106, i as u64);
        // Cycle full-rank / half-rank covariances against dense / rank-3
        // observables so every combination appears five times.
        let cov_rank = if i % 4 < 2 { DIM } else { DIM / 2 };
        let a = uniform_matrix(cov_rank, DIM, &mut rng);
        let cov = OperatorMatrix::symmetrized(a.t().dot(&a) / cov_rank as f64).unwrap();
        let obs_raw = if i % 2 == 0 {
            uniform_matrix(DIM, DIM, &mut rng)
        } else {
            let g = uniform_matrix(DIM, 3, &mut rng);
            let mut signed = g.clone();
            signed.column_mut(1).mapv_inplace(|v| -v);
            g.dot(&signed.t())
        };
        let obs = OperatorMatrix::symmetrized(obs_raw).unwrap();

        let root = sqrt_psd(&cov, PSD_CLIP_REL_TOL).unwrap();
        let whitened = whitened_observable_dense(&root, &obs).unwrap();
        let spectrum = eig_symmetric(&whitened, DEGENERACY_REL_TOL).unwrap();
        let whitened_nonzero = spectrum.nonzero_eigenvalues(NEGLIGIBLE_EIG_REL_TOL);
        let product_all = product_spectrum_dense(&cov, &obs, NONSYM_EIG_CAP).unwrap();
        let product_nonzero = filter_negligible(&product_all, NEGLIGIBLE_EIG_REL_TOL);
        let report = check_spectral_equivalence(&whitened_nonzero, &product_nonzero, TOL);
        worst = worst.max(report.max_rel_diff);
        if report.verdict {
            matched += 1;
        }
    }
    c.clause(
        matched == INSTANCES,
        format!("{matched}/{INSTANCES} instances matched at {TOL:.0e}; worst eigenvalue gap {worst:.3e}"),
    );
    c.finish(Duration::from_secs(10));
}

#[test]
fn criterion_2_point_intensity_eigenstructure_on_a_fine_line() {
    let mut c = Criterion::new(2, "point-intensity-eigenstructure");
    const TOL: f64 = 1e-10;
    let grid = Grid::scalar(1, 201, 5.0).unwrap();
    let kernel = Kernel::squared_exponential(1.0, 1.0).unwrap();
    let report = peak_mode_report(&grid, &kernel).unwrap();
    c.clause(
        (report.top_eigenvalue - 1.0).abs() <= TOL,
        format!("whitened-route top eigenvalue {:.12} vs field variance 1", report.top_eigenvalue),
    );
    c.clause(
        (report.lowrank_top - 1.0).abs() <= TOL,
        format!("product-route top eigenvalue {:.12}", report.lowrank_top),
    );
    c.clause(
        report.alignment_cosine >= 1.0 - TOL,
        format!("mode vs kernel-column cosine defect {:.3e}", 1.0 - report.alignment_cosine),
    );
    c.clause(
        report.spurious_rel_max <= TOL,
        format!("largest residual eigenvalue {:.3e} of the top", report.spurious_rel_max),
    );
    c.finish(Duration::from_secs(30));
}

/// Scalar squared-exponential line with the squared-value-at-origin
/// observable, whitened and packaged for sampling.
fn scalar_point_basis(kind: FieldKind) -> (OperatorMatrix, KlBasis) {
    let grid = Grid::scalar(1, 201, 5.0).unwrap();
    let kernel = Kernel::squared_exponential(1.0, 1.0).unwrap();
    let cov = assemble_covariance(&grid, &kernel, DEFAULT_DENSE_CAP).unwrap();
    let root = sqrt_psd(&cov, PSD_CLIP_REL_TOL).unwrap();
    let observable = observable_point_intensity(&grid).unwrap().to_dense(grid.n_dof()).unwrap();
    let whitened = whitened_observable_dense(&root, &observable).unwrap();
    let spectrum = eig_symmetric(&whitened, DEGENERACY_REL_TOL).unwrap();
    let basis = kl_basis(&root, &spectrum, kind).unwrap();
    (cov, basis)
}

/// Wilson 95% interval at effective sample size `n`, with the degenerate
/// endpoints pinned exactly like the library's proportion estimator.
fn wilson(p: f64, n: f64) -> (f64, f64) {
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let low = if p == 0.0 { 0.0 } else { (center - half).max(0.0) };
    let high = if p == 1.0 { 1.0 } else { (center + half).min(1.0) };
    (low, high)
}

/// Monotone-decrease verdict for a probability curve at 95% confidence:
/// no consecutive pair may rise with disjoint intervals, and the
/// endpoints must show a strict, statistically resolved drop.
fn resolved_decrease(ps: &[f64], cis: &[(f64, f64)]) -> (bool, bool) {
    let no_rise = (1..ps.len()).all(|k| !(ps[k] > ps[k - 1] && cis[k].0 > cis[k - 1].1));
    let first = 0;
    let last = ps.len() - 1;
    let endpoint_drop = ps[last] < ps[first] && cis[last].1 < cis[first].0;
    (no_rise, endpoint_drop)
}

fn fmt_curve(values: &[f64]) -> String {
    let body = values.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(", ");
    format!("[{body}]")
}

/// Shared concentration clause block: tilted draws at each threshold,
/// at least 10^4 effective samples per point, resolved decrease of the
/// deviation probability ending at or below 0.05, and resolved decrease
/// of the small-amplitude probability.
fn concentration_clauses(
    c: &mut Criterion,
    basis: &KlBasis,
    thresholds: Vec<f64>,
    samples: usize,
    seed: u64,
) -> Vec<CurvePoint> {
    let config = ConcentrationConfig {
        thresholds,
        epsilon: 0.5,
        amplitude_factor: 6.0,
        split: SplitMode::Upper,
        samples,
        seed,
        method: Some(ConditionalMethod::Tilted { tilt: None }),
    };
    let curve = concentration_curve(basis, &config).unwrap();
    let points = curve.points;

    let min_eff = points.iter().map(|p| p.n_eff).fold(f64::INFINITY, f64::min);
    c.clause(
        min_eff >= 1.0e4,
        format!("effective tilted samples per threshold >= 1e4 (min {min_eff:.0})"),
    );

    let p_dev: Vec<f64> = points.iter().map(|p| p.p_deviation).collect();
    let ci_dev: Vec<(f64, f64)> = points.iter().map(|p| (p.ci_low, p.ci_high)).collect();
    let (no_rise, drop) = resolved_decrease(&p_dev, &ci_dev);
    c.clause(
        no_rise && drop,
        format!("deviation probability decreases beyond 95% CI overlap: {}", fmt_curve(&p_dev)),
    );
    let last_dev = *p_dev.last().unwrap();
    c.clause(last_dev <= 0.05, format!("deviation probability {last_dev:.2e} <= 0.05 at the largest threshold"));

    let p_amp: Vec<f64> = points.iter().map(|p| p.p_amplitude_typical).collect();
    let ci_amp: Vec<(f64, f64)> =
        points.iter().zip(&p_amp).map(|(pt, &p)| wilson(p, pt.n_eff)).collect();
    let (amp_no_rise, amp_drop) = resolved_decrease(&p_amp, &ci_amp);
    c.clause(
        amp_no_rise && amp_drop,
        format!("small-amplitude probability decreases likewise: {}", fmt_curve(&p_amp)),
    );
    points
}

#[test]
fn criterion_3_complex_scalar_concentration_under_peak_conditioning() {
    let mut c = Criterion::new(3, "adler-concentration-complex");
    let (_, basis) = scalar_point_basis(FieldKind::Complex);
    let mean_q = basis.tail_model().unwrap().mean();
    let thresholds = [4.0, 8.0, 16.0, 32.0].iter().map(|m| m * mean_q).collect();
    concentration_clauses(&mut c, &basis, thresholds, 30_000, 31);
    c.finish(Duration::from_secs(300));
}

#[test]
fn criterion_4_real_scalar_concentration_under_peak_conditioning() {
    let mut c = Criterion::new(4, "adler-concentration-real");
    let (_, basis) = scalar_point_basis(FieldKind::Real);
    let mean_q = basis.tail_model().unwrap().mean();
    let thresholds = [4.0, 8.0, 16.0, 32.0].iter().map(|m| m * mean_q).collect();
    concentration_clauses(&mut c, &basis, thresholds, 30_000, 41);
    c.finish(Duration::from_secs(300));
}

/// Threshold at which the inversion-route tail probability crosses
/// `target`, found by bisection on a decreasing tail.
fn threshold_at_probability(model: &TailModel, target: f64) -> f64 {
    let mut lo = 1e-6;
    let mut hi = 1e3;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail_prob_cf(model, mid).unwrap().probability > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn criterion_5_tail_laws_against_closed_forms_and_monte_carlo() {
    let mut c = Criterion::new(5, "tail-laws");
    let complex_rank1 = TailModel::from_eigenvalues(FieldKind::Complex, &[1.0]).unwrap();
    let real_rank1 = TailModel::from_eigenvalues(FieldKind::Real, &[1.0]).unwrap();
    let mut worst_complex = 0.0_f64;
    let mut worst_real = 0.0_f64;
    for k in 0..=80 {
        let u = 0.25 * k as f64;
        let pc = tail_prob_cf(&complex_rank1, u).unwrap().probability;
        worst_complex = worst_complex.max((pc - (-u).exp()).abs());
        let pr = tail_prob_cf(&real_rank1, u).unwrap().probability;
        let exact = statrs::function::erf::erfc((0.5 * u).sqrt());
        worst_real = worst_real.max((pr - exact).abs());
    }
    c.clause(
        worst_complex <= 1e-6,
        format!("rank-1 complex inversion vs exp(-u) on [0,20]: worst gap {worst_complex:.2e}"),
    );
    c.clause(
        worst_real <= 1e-6,
        format!("rank-1 real inversion vs erfc(sqrt(u/2)) on [0,20]: worst gap {worst_real:.2e}"),
    );

    let mixed_complex =
        TailModel::from_eigenvalues(FieldKind::Complex, &[1.0, 0.4, -0.3]).unwrap();
    let mixed_real = TailModel::from_eigenvalues(FieldKind::Real, &[1.0, 0.4, -0.3]).unwrap();
    for (model, label) in [(&mixed_complex, "complex"), (&mixed_real, "real")] {
        let u = threshold_at_probability(model, 1e-4);
        let cf = tail_prob_cf(model, u).unwrap().probability;
        let asym = tail_asymptotic(model, u).unwrap();
        let ratio = asym / cf;
        c.clause(
            (0.9..=1.1).contains(&ratio),
            format!("mixed {label}: asymptotic/inversion {ratio:.4} at u {u:.3} where P {cf:.2e}"),
        );
    }
    for (stream, (model, label)) in
        [(&mixed_complex, "complex"), (&mixed_real, "real")].into_iter().enumerate()
    {
        let u = threshold_at_probability(model, 3e-3);
        let cf = tail_prob_cf(model, u).unwrap().probability;
        let mc = tail_prob_mc(model, u, 1_000_000, &mut stream_rng(505, stream as u64)).unwrap();
        let z = (mc.probability - cf) / mc.std_error;
        c.clause(
            z.abs() <= 3.0,
            format!(
                "mixed {label}: direct MC {:.3e} vs inversion {cf:.3e} at u {u:.3}: {z:+.2} standard errors",
                mc.probability
            ),
        );
    }
    c.finish(Duration::from_secs(120));
}

#[test]
fn criterion_6_helicity_spectrum_against_the_continuum_eigenvalue() {
    let mut c = Criterion::new(6, "helicity-spectrum");
    let continuum = 5.0_f64.sqrt() / 3.0;
    let report = helicity_spectrum_check(1.0, 1.0, &[(17, 4.0), (33, 4.0)]).unwrap();
    let base = &report.grids[0];
    let fine = &report.grids[1];
    c.clause(
        base.positive_multiplicity == 3
            && base.negative_multiplicity == 3
            && fine.positive_multiplicity == 3
            && fine.negative_multiplicity == 3,
        format!(
            "six nonzero eigenvalues cluster 3+3 on both grids ({}+{} and {}+{})",
            base.positive_multiplicity,
            base.negative_multiplicity,
            fine.positive_multiplicity,
            fine.negative_multiplicity
        ),
    );
    c.clause(
        base.symmetry_defect <= 1e-10 && fine.symmetry_defect <= 1e-10,
        format!(
            "positive and negative branches mirror within {:.1e} and {:.1e}",
            base.symmetry_defect, fine.symmetry_defect
        ),
    );
    c.clause(
        base.continuum_rel_error <= 0.03,
        format!(
            "n=17 eigenvalue magnitude {:.9} within 3% of the continuum {continuum:.9} (actual deviation {:.2}%)",
            base.normalized_top,
            100.0 * base.continuum_rel_error
        ),
    );
    let ratio = report.refinement_ratios[0];
    c.clause(
        (2.8..=5.2).contains(&ratio),
        format!("halving the spacing contracts the error {ratio:.3}x (expected 4x +-30%)"),
    );
    c.finish(Duration::from_secs(10));
}

/// Analytic helical profile along the z axis with unit conditioning
/// level.
fn unit_mode(negative_branch: bool) -> HelicityMode {
    HelicityMode::new(&HelicityParams {
        taylor_scale: 1.0,
        target: 1.0,
        orientation: [0.0, 0.0, 1.0],
        negative_branch,
    })
    .unwrap()
}

#[test]
fn criterion_7_helicity_mode_structure_against_the_analytic_profile() {
    let mut c = Criterion::new(7, "helicity-mode-structure");
    let spectrum_grid = Grid::new(3, 17, 4.0, 3).unwrap();
    let angles = mode_subspace_angles(&spectrum_grid, 1.0, 1.0).unwrap();
    let worst_deg = angles.last().unwrap().to_degrees();
    c.clause(
        worst_deg <= 5.0,
        format!("principal angles to the analytic span <= 5 deg (worst {worst_deg:.3} deg)"),
    );

    // Pointwise residual audit on twenty interior nodes shared by a
    // coarse grid and its half-spacing refinement.
    let coarse = Grid::new(3, 9, 1.0, 3).unwrap();
    let fine = Grid::new(3, 17, 1.0, 3).unwrap();
    let probes: Vec<[usize; 3]> = (0..coarse.n_nodes())
        .filter(|&node| coarse.is_interior(node))
        .take(20)
        .map(|node| coarse.multi_index(node))
        .collect();
    assert_eq!(probes.len(), 20);
    let mode = unit_mode(false);
    let audit = |grid: &Grid, scale: usize| -> (f64, f64) {
        let field = sample_mode_on_grid(grid, &mode).unwrap();
        let curl = curl_field(grid, &field.view()).unwrap();
        let div = divergence_field(grid, &field.view()).unwrap();
        let sw = grid.sqrt_weight();
        let mut worst_curl = 0.0_f64;
        let mut worst_div = 0.0_f64;
        for multi in &probes {
            let node = grid.node_index([multi[0] * scale, multi[1] * scale, multi[2] * scale]);
            let exact = mode.curl(&grid.node_position(node));
            for comp in 0..3 {
                let got = curl[grid.flat_index(comp, node)] / sw;
                worst_curl = worst_curl.max((got - exact[comp]).abs());
            }
            worst_div = worst_div.max((div[node] / sw).abs());
        }
        (worst_curl, worst_div)
    };
    let (curl_coarse, div_coarse) = audit(&coarse, 1);
    let (curl_fine, div_fine) = audit(&fine, 2);
    let curl_ratio = curl_coarse / curl_fine;
    let div_ratio = div_coarse / div_fine;
    c.clause(
        curl_coarse < 0.5 && (3.0..=5.5).contains(&curl_ratio),
        format!(
            "curl residual at 20 interior nodes contracts quadratically: {curl_coarse:.2e} -> {curl_fine:.2e} ({curl_ratio:.2}x)"
        ),
    );
    c.clause(
        div_coarse < 0.1 && (3.0..=5.5).contains(&div_ratio),
        format!(
            "divergence residual at 20 interior nodes contracts quadratically: {div_coarse:.2e} -> {div_fine:.2e} ({div_ratio:.2}x)"
        ),
    );

    // Curl relation at the origin for both handedness branches: the
    // closed form satisfies it exactly; the grid curl approaches it at
    // second order.
    for negative in [false, true] {
        let branch = unit_mode(negative);
        let v0 = branch.velocity(&[0.0; 3]);
        let w0 = branch.curl_at_origin();
        let rate = branch.sign() * 5.0_f64.sqrt() / branch.taylor_scale();
        let identity = (0..3).map(|i| (w0[i] - rate * v0[i]).abs()).fold(0.0, f64::max);
        let origin_err = |grid: &Grid| -> f64 {
            let field = sample_mode_on_grid(grid, &branch).unwrap();
            let curl = curl_field(grid, &field.view()).unwrap();
            let node = grid.center_node();
            let sw = grid.sqrt_weight();
            (0..3)
                .map(|comp| (curl[grid.flat_index(comp, node)] / sw - w0[comp]).abs())
                .fold(0.0, f64::max)
        };
        let coarse_err = origin_err(&coarse);
        let fine_err = origin_err(&fine);
        let ratio = coarse_err / fine_err;
        c.clause(
            identity <= 1e-14 && (3.0..=5.5).contains(&ratio),
            format!(
                "curl at origin is {:+.3} times the velocity ({} branch): closed-form defect {identity:.1e}, grid defect {coarse_err:.2e} -> {fine_err:.2e} ({ratio:.2}x)",
                rate,
                if negative { "left" } else { "right" }
            ),
        );
    }

    // Near-origin series against the full profile within a tenth of the
    // correlation length.
    let s3 = 3.0_f64.sqrt();
    let dirs =
        [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [1.0 / s3, 1.0 / s3, 1.0 / s3], [0.6, -0.8, 0.0]];
    let gap = |radius: f64| -> f64 {
        let mut worst = 0.0_f64;
        for d in dirs {
            let x = [radius * d[0], radius * d[1], radius * d[2]];
            let full = mode.velocity(&x);
            let series = mode.velocity_small_x(&x);
            for comp in 0..3 {
                worst = worst.max((full[comp] - series[comp]).abs());
            }
        }
        worst
    };
    let outer = gap(0.1);
    let inner = gap(0.05);
    let cubic = outer / inner;
    c.clause(
        outer <= 1e-3 && (6.5..=9.5).contains(&cubic),
        format!(
            "series vs full profile within a tenth of the correlation length: gap {outer:.2e}, cubic contraction {cubic:.2}x"
        ),
    );
    c.finish(Duration::from_secs(60));
}

/// Modified Gram-Schmidt orthonormalization of a few long columns.
fn orthonormalize(columns: Vec<Array1<f64>>) -> Vec<Array1<f64>> {
    let mut out: Vec<Array1<f64>> = Vec::with_capacity(columns.len());
    for mut v in columns {
        for q in &out {
            let overlap = q.dot(&v);
            v.scaled_add(-overlap, q);
        }
        let norm = v.dot(&v).sqrt();
        assert!(norm > 1e-12, "degenerate analytic span");
        out.push(v / norm);
    }
    out
}

#[test]
fn criterion_8_conditioned_helicity_aligns_with_the_analytic_modes() {
    let mut c = Criterion::new(8, "helicity-conditioned-structure");
    let grid = Grid::new(3, 9, 4.0, 3).unwrap();
    let kernel = Kernel::turbulence(1.0, 1.0).unwrap();
    let cov = assemble_covariance(&grid, &kernel, DEFAULT_DENSE_CAP).unwrap();
    let root = sqrt_psd(&cov, PSD_CLIP_REL_TOL).unwrap();
    let observable = observable_helicity(&grid).unwrap().to_dense(grid.n_dof()).unwrap();
    let whitened = whitened_observable_dense(&root, &observable).unwrap();
    let spectrum = eig_symmetric(&whitened, DEGENERACY_REL_TOL).unwrap();
    let basis = kl_basis(&root, &spectrum, FieldKind::Real).unwrap();
    let model = basis.tail_model().unwrap();
    let rms = (model.variance() + model.mean().powi(2)).sqrt();
    let thresholds = vec![3.0 * rms, 6.0 * rms];

    // Weighted mean cosine between conditioned fields and the analytic
    // profile span (all three orientations of the right-handed branch).
    let axes = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let span = orthonormalize(
        axes.iter()
            .map(|axis| {
                let mode = HelicityMode::new(&HelicityParams {
                    taylor_scale: 1.0,
                    target: 1.0,
                    orientation: *axis,
                    negative_branch: false,
                })
                .unwrap();
                sample_mode_on_grid(&grid, &mode).unwrap()
            })
            .collect(),
    );
    let mut mean_cos = Vec::with_capacity(thresholds.len());
    for (k, &u) in thresholds.iter().enumerate() {
        let sampler =
            ConditionalSampler::new(&basis, u, ConditionalMethod::Tilted { tilt: None }).unwrap();
        let mut rng = stream_rng(83, k as u64);
        let mut wsum = 0.0;
        let mut wcos = 0.0;
        for _ in 0..6000 {
            let sample = sampler.draw(&mut rng).unwrap();
            let field = basis.realize(&sample).re;
            let norm = field.dot(&field).sqrt();
            let proj: f64 = span.iter().map(|q| q.dot(&field).powi(2)).sum::<f64>().sqrt();
            wsum += sample.weight();
            wcos += sample.weight() * proj / norm;
        }
        mean_cos.push(wcos / wsum);
    }
    c.clause(
        mean_cos[1] > mean_cos[0],
        format!(
            "mean cosine to the analytic span increases with the threshold: {:.4} -> {:.4}",
            mean_cos[0], mean_cos[1]
        ),
    );

    concentration_clauses(&mut c, &basis, thresholds, 20_000, 82);
    c.finish(Duration::from_secs(600));
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Artifact names and checksums recorded by a run's manifest.
fn run_artifact_hashes(out_dir: &std::path::Path) -> Vec<(String, String)> {
    let run = std::fs::read_dir(out_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.is_dir())
        .expect("run directory");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| {
            let name = a["name"].as_str().unwrap().to_string();
            let recorded = a["sha256"].as_str().unwrap().to_string();
            let actual = sha256_hex(&std::fs::read(run.join(&name)).unwrap());
            assert_eq!(recorded, actual, "manifest checksum of {name}");
            (name, recorded)
        })
        .collect()
}

#[test]
fn criterion_9_infrastructure_reconstruction_sampling_and_determinism() {
    let mut c = Criterion::new(9, "infrastructure");

    // Covariance reconstruction from the transported mode basis.
    let (cov, basis) = scalar_point_basis(FieldKind::Real);
    let transports = basis.transports();
    let recon = transports.dot(&transports.t());
    let scale = cov.as_array().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let recon_err = recon
        .iter()
        .zip(cov.as_array().iter())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
        / scale;
    c.clause(
        recon_err <= 1e-8,
        format!("mode-basis covariance reconstruction within {recon_err:.2e} relative"),
    );

    // Empirical covariance of unconditional draws, entrywise against the
    // assembled covariance at five standard errors.
    let grid = Grid::scalar(1, 21, 4.0).unwrap();
    let kernel = Kernel::squared_exponential(1.0, 1.0).unwrap();
    let small_cov = assemble_covariance(&grid, &kernel, DEFAULT_DENSE_CAP).unwrap();
    let small_root = sqrt_psd(&small_cov, PSD_CLIP_REL_TOL).unwrap();
    let small_obs = observable_point_intensity(&grid).unwrap().to_dense(grid.n_dof()).unwrap();
    let small_whitened = whitened_observable_dense(&small_root, &small_obs).unwrap();
    let small_spectrum = eig_symmetric(&small_whitened, DEGENERACY_REL_TOL).unwrap();
    let small_basis = kl_basis(&small_root, &small_spectrum, FieldKind::Real).unwrap();
    const DRAWS: usize = 100_000;
    let dim = small_basis.dim();
    let mut acc = Array2::<f64>::zeros((dim, dim));
    let mut rng = stream_rng(909, 0);
    for _ in 0..DRAWS {
        let field = small_basis.realize(&sample_unconditional(&small_basis, &mut rng)).re;
        for i in 0..dim {
            for j in 0..dim {
                acc[[i, j]] += field[i] * field[j];
            }
        }
    }
    let n = DRAWS as f64;
    let mut worst_z = 0.0_f64;
    for i in 0..dim {
        for j in 0..dim {
            let exact = small_cov.as_array()[[i, j]];
            let var = small_cov.as_array()[[i, i]] * small_cov.as_array()[[j, j]] + exact * exact;
            let z = (acc[[i, j]] / n - exact) / (var / n).sqrt();
            worst_z = worst_z.max(z.abs());
        }
    }
    c.clause(
        worst_z <= 5.0,
        format!("empirical covariance of {DRAWS} draws within 5 standard errors (worst {worst_z:.2})"),
    );

    // Discrete divergence of a solenoidal kernel column vanishes at
    // second order in the spacing.
    let turb = TurbulenceKernel::new(1.0, 1.0).unwrap();
    let center = [0.3, -0.2, 0.1];
    let defect = |n: usize| -> f64 {
        let vgrid = Grid::new(3, n, 2.0, 3).unwrap();
        let sw = vgrid.sqrt_weight();
        let mut field = Array1::zeros(vgrid.n_dof());
        for node in 0..vgrid.n_nodes() {
            let x = vgrid.node_position(node);
            let r = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
            for comp in 0..3 {
                field[vgrid.flat_index(comp, node)] = sw * turb.tensor_entry(&r, comp, 0);
            }
        }
        let div = divergence_field(&vgrid, &field.view()).unwrap();
        (0..vgrid.n_nodes())
            .filter(|&node| vgrid.is_interior(node))
            .map(|node| (div[node] / sw).abs())
            .fold(0.0, f64::max)
    };
    let coarse = defect(9);
    let fine = defect(17);
    let ratio = coarse / fine;
    c.clause(
        (3.0..=5.5).contains(&ratio),
        format!("kernel-column divergence defect contracts quadratically: {coarse:.2e} -> {fine:.2e} ({ratio:.2}x)"),
    );

    // Identical config and seed through the command-line runner twice
    // produce identical artifact checksums.
    let tmp = tempfile::tempdir().unwrap();
    let config_path = tmp.path().join("run.toml");
    std::fs::write(
        &config_path,
        "experiment = \"concentration\"\n\n[grid]\nd = 1\nL = 4.0\nn = 21\n\n[kernel]\nfamily = \"squared-exponential\"\nvariance = 1.0\nlength = 1.0\n\n[observable]\nname = \"point-intensity\"\n\n[sampling]\nu_grid = [2.0, 4.0]\nn_samples = 1500\nseed = 5\n",
    )
    .unwrap();
    let mut hashes = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = tmp.path().join(sub);
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_condfield"))
            .arg("run")
            .arg(&config_path)
            .arg("--out")
            .arg(&out_dir)
            .status()
            .unwrap();
        assert!(status.success(), "runner exited with {status}");
        hashes.push(run_artifact_hashes(&out_dir));
    }
    c.clause(
        hashes[0] == hashes[1] && !hashes[0].is_empty(),
        format!("identical config+seed reruns reproduce {} artifact checksums", hashes[0].len()),
    );
    c.finish(Duration::from_secs(300));
}
