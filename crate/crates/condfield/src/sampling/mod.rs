//! Sampling Gaussian fields, unconditionally and conditioned on a large
//! quadratic observable.
//!
//! Fields are expanded in the eigenbasis of the whitened observable
//! `M = C^{1/2} O C^{1/2}`: with `M v_i = lambda_i v_i` the field is
//! `phi = sum_i t_i C^{1/2} v_i` where the coordinates `t_i` are
//! independent standard Gaussians (real kind) or complex Gaussians with
//! unit mean square (complex kind). In these coordinates the covariance
//! is exactly `C` and the observable is diagonal,
//! `Q = sum_i lambda_i |t_i|^2`, which makes conditioning on `{Q > u}`
//! tractable:
//!
//! * [`ConditionalMethod::Rejection`] draws coordinates until `Q > u`;
//!   exact but only viable when `P(Q > u)` is not too small.
//! * [`ConditionalMethod::Tilted`] exponentially tilts the coordinates
//!   outside the top eigenvalue group and draws the top-group magnitude
//!   from an explicitly conditioned Gamma tail, attaching an importance
//!   weight to each sample. Weighted averages are unbiased under the
//!   original conditional law at any threshold, including thresholds far
//!   beyond the reach of rejection.

pub mod tails;

use crate::error::{Error, Result};
use crate::operators::OperatorMatrix;
use crate::spectral::{Spectrum, NEGLIGIBLE_EIG_REL_TOL};
use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Gamma, StandardNormal};
use serde::Serialize;
use statrs::function::gamma::{gamma_ur, ln_gamma};
use tails::{tail_prob_cf, TailModel};

/// Smallest predicted acceptance probability for which the rejection
/// method is considered usable.
pub const REJECTION_MIN_ACCEPTANCE: f64 = 1e-4;

/// Hard cap on rejection attempts per accepted sample.
pub const REJECTION_MAX_ATTEMPTS: usize = 10_000_000;

/// Whether field values (and hence KL coordinates) are real or complex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// Real Gaussian coordinates with unit variance.
    Real,
    /// Complex Gaussian coordinates with unit mean square modulus.
    Complex,
}

/// A deterministic generator for a `(seed, stream)` pair. Distinct
/// streams from one seed are independent, which lets parallel workers
/// share a seed without sharing randomness.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Karhunen-Loeve basis aligned with the whitened observable: the
/// spectrum of `M = C^{1/2} O C^{1/2}` plus the transported directions
/// `C^{1/2} v_i` that map coordinates to field values.
#[derive(Debug, Clone)]
pub struct KlBasis {
    kind: FieldKind,
    spectrum: Spectrum,
    transports: Array2<f64>,
}

/// Builds the KL basis from the covariance square root and the spectrum
/// of the whitened observable.
pub fn kl_basis(
    cov_sqrt: &OperatorMatrix,
    whitened: &Spectrum,
    kind: FieldKind,
) -> Result<KlBasis> {
    if cov_sqrt.dim() != whitened.vectors().nrows() {
        return Err(Error::Mismatch(format!(
            "covariance root is {}x{} but the whitened spectrum lives in dimension {}",
            cov_sqrt.dim(),
            cov_sqrt.dim(),
            whitened.vectors().nrows()
        )));
    }
    if whitened.is_empty() {
        return Err(Error::Spectrum("whitened spectrum is empty".into()));
    }
    let transports = cov_sqrt.as_array().dot(whitened.vectors());
    Ok(KlBasis { kind, spectrum: whitened.clone(), transports })
}

impl KlBasis {
    /// Field kind.
    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    /// Number of modes (equals the field dimension).
    pub fn n_modes(&self) -> usize {
        self.transports.ncols()
    }

    /// Dimension of realized field vectors.
    pub fn dim(&self) -> usize {
        self.transports.nrows()
    }

    /// The whitened-observable spectrum backing the basis.
    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// Observable eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &[f64] {
        self.spectrum.eigenvalues().as_slice().unwrap()
    }

    /// Transported directions `C^{1/2} v_i`, one column per mode.
    pub fn transports(&self) -> ArrayView2<'_, f64> {
        self.transports.view()
    }

    /// Tail model of the observable under this basis.
    pub fn tail_model(&self) -> Result<TailModel> {
        TailModel::from_eigenvalues(self.kind, self.eigenvalues())
    }

    /// Maps coordinate vectors to a field vector (one gemv per part).
    pub fn realize(&self, sample: &FieldSample) -> FieldRealization {
        FieldRealization {
            re: self.transports.dot(&sample.coords_re),
            im: sample.coords_im.as_ref().map(|im| self.transports.dot(im)),
        }
    }

    /// Maps a block of coordinate columns to field columns in one gemm;
    /// the workhorse for batched statistics.
    pub fn realize_block(&self, coords: &ArrayView2<'_, f64>) -> Array2<f64> {
        self.transports.dot(coords)
    }

    /// Value of the observable for given coordinates,
    /// `sum_i lambda_i |t_i|^2`.
    pub fn observable_from_coords(
        &self,
        re: &Array1<f64>,
        im: Option<&Array1<f64>>,
    ) -> f64 {
        let eigs = self.spectrum.eigenvalues();
        let mut q = 0.0;
        for i in 0..eigs.len() {
            let mut p = re[i] * re[i];
            if let Some(im) = im {
                p += im[i] * im[i];
            }
            q += eigs[i] * p;
        }
        q
    }
}

/// One draw of the field in KL coordinates.
#[derive(Debug, Clone)]
pub struct FieldSample {
    /// Real parts of the coordinates.
    pub coords_re: Array1<f64>,
    /// Imaginary parts (present only for complex fields).
    pub coords_im: Option<Array1<f64>>,
    /// Value of the quadratic observable for this draw.
    pub q: f64,
    /// Natural log of the importance weight (0 for unweighted draws).
    pub log_weight: f64,
}

impl FieldSample {
    /// Importance weight.
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }

    /// Squared modulus of coordinate `i`.
    pub fn mode_power(&self, i: usize) -> f64 {
        let mut p = self.coords_re[i] * self.coords_re[i];
        if let Some(im) = &self.coords_im {
            p += im[i] * im[i];
        }
        p
    }
}

/// A realized field vector (real and, for complex fields, imaginary
/// parts), in the weight-normalized node convention of the grid module.
#[derive(Debug, Clone)]
pub struct FieldRealization {
    /// Real part.
    pub re: Array1<f64>,
    /// Imaginary part for complex fields.
    pub im: Option<Array1<f64>>,
}

impl FieldRealization {
    /// Squared norm, pooling real and imaginary parts.
    pub fn norm_squared(&self) -> f64 {
        let mut s: f64 = self.re.iter().map(|v| v * v).sum();
        if let Some(im) = &self.im {
            s += im.iter().map(|v| v * v).sum::<f64>();
        }
        s
    }
}

/// Draws an unconditional field sample.
pub fn sample_unconditional(basis: &KlBasis, rng: &mut impl Rng) -> FieldSample {
    let m = basis.n_modes();
    let mut re = Array1::zeros(m);
    let mut im = match basis.kind {
        FieldKind::Real => None,
        FieldKind::Complex => Some(Array1::zeros(m)),
    };
    let comp_sd = component_sd(basis.kind);
    for i in 0..m {
        re[i] = comp_sd * rng.sample::<f64, _>(StandardNormal);
        if let Some(im) = im.as_mut() {
            im[i] = comp_sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let q = basis.observable_from_coords(&re, im.as_ref());
    FieldSample { coords_re: re, coords_im: im, q, log_weight: 0.0 }
}

/// Standard deviation of each real component of a coordinate.
fn component_sd(kind: FieldKind) -> f64 {
    match kind {
        FieldKind::Real => 1.0,
        FieldKind::Complex => std::f64::consts::FRAC_1_SQRT_2,
    }
}

/// How to draw samples conditioned on `{Q > u}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConditionalMethod {
    /// Resample until the condition holds; unweighted samples.
    Rejection,
    /// Exponential tilting plus an explicit top-group tail draw; weighted
    /// samples. `tilt` overrides the automatic tilt rate.
    Tilted { tilt: Option<f64> },
}

#[derive(Debug)]
enum Plan {
    Rejection {
        /// `(mode index, eigenvalue)` of every non-negligible mode.
        active: Vec<(usize, f64)>,
        predicted_acceptance: f64,
    },
    Tilted {
        tilt: f64,
        top_len: usize,
        lambda1: f64,
        /// `(mode index, eigenvalue, per-component sd)` outside the top
        /// group, restricted to non-negligible modes.
        nontop: Vec<(usize, f64, f64)>,
        /// `ln K`, the tilt normalizer over the non-top modes.
        ln_normalizer: f64,
        /// Gamma shape of the top-group magnitude.
        shape: f64,
    },
}

/// Sampler for the conditional law of the field given `{Q > u}`.
#[derive(Debug)]
pub struct ConditionalSampler<'a> {
    basis: &'a KlBasis,
    threshold: f64,
    plan: Plan,
}

impl<'a> ConditionalSampler<'a> {
    /// Prepares a sampler; validates feasibility of the chosen method.
    pub fn new(basis: &'a KlBasis, threshold: f64, method: ConditionalMethod) -> Result<Self> {
        let eigs = basis.eigenvalues();
        let scale = eigs.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
        if scale == 0.0 {
            return Err(Error::Spectrum(
                "observable is identically zero; conditioning is vacuous".into(),
            ));
        }
        let floor = NEGLIGIBLE_EIG_REL_TOL * scale;
        let plan = match method {
            ConditionalMethod::Rejection => {
                let model = basis.tail_model()?;
                let predicted = tail_prob_cf(&model, threshold)?.probability;
                if predicted < REJECTION_MIN_ACCEPTANCE {
                    return Err(Error::Sampling(format!(
                        "predicted acceptance {predicted:.3e} is below {REJECTION_MIN_ACCEPTANCE:.0e}; \
                         use the tilted method for this threshold"
                    )));
                }
                let active = eigs
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| l.abs() > floor)
                    .map(|(i, &l)| (i, l))
                    .collect();
                Plan::Rejection { active, predicted_acceptance: predicted }
            }
            ConditionalMethod::Tilted { tilt } => {
                let top = basis.spectrum().top_positive_group().ok_or_else(|| {
                    Error::Sampling(
                        "tilted conditioning needs a positive top eigenvalue group".into(),
                    )
                })?;
                let (top_len, lambda1) = (top.len, top.value);
                let lambda_next = eigs.get(top_len).copied().filter(|&l| l > floor);
                // The tilt must keep every non-top mode integrable:
                // c < 1/lambda_next for complex fields, 1/(2 lambda_next)
                // for real fields. The default sits halfway between the
                // top and next rates.
                let (rate_top, rate_next) = match basis.kind {
                    FieldKind::Complex => (1.0 / lambda1, lambda_next.map(|l| 1.0 / l)),
                    FieldKind::Real => {
                        (0.5 / lambda1, lambda_next.map(|l| 0.5 / l))
                    }
                };
                let tilt = match tilt {
                    Some(c) => c,
                    None => match rate_next {
                        Some(r) => 0.5 * (rate_top + r),
                        None => 1.5 * rate_top,
                    },
                };
                let bound = rate_next.unwrap_or(f64::INFINITY);
                if !(tilt >= 0.0) || tilt >= bound {
                    return Err(Error::Sampling(format!(
                        "tilt rate {tilt} is outside the admissible range [0, {bound})"
                    )));
                }
                let mut ln_normalizer = 0.0;
                let mut nontop = Vec::new();
                for (i, &l) in eigs.iter().enumerate().skip(top_len) {
                    if l.abs() <= floor {
                        continue;
                    }
                    let (factor, sd) = match basis.kind {
                        FieldKind::Complex => {
                            let f = 1.0 - tilt * l;
                            (f, (0.5 / f).sqrt())
                        }
                        FieldKind::Real => {
                            let f = 1.0 - 2.0 * tilt * l;
                            (f, (1.0 / f).sqrt())
                        }
                    };
                    debug_assert!(factor > 0.0);
                    ln_normalizer -= match basis.kind {
                        FieldKind::Complex => factor.ln(),
                        FieldKind::Real => 0.5 * factor.ln(),
                    };
                    nontop.push((i, l, sd));
                }
                let shape = match basis.kind {
                    FieldKind::Complex => top_len as f64,
                    FieldKind::Real => top_len as f64 / 2.0,
                };
                Plan::Tilted { tilt, top_len, lambda1, nontop, ln_normalizer, shape }
            }
        };
        Ok(Self { basis, threshold, plan })
    }

    /// Conditioning threshold.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Predicted acceptance probability (rejection method only).
    pub fn predicted_acceptance(&self) -> Option<f64> {
        match &self.plan {
            Plan::Rejection { predicted_acceptance, .. } => Some(*predicted_acceptance),
            Plan::Tilted { .. } => None,
        }
    }

    /// Tilt rate in use (tilted method only).
    pub fn tilt(&self) -> Option<f64> {
        match &self.plan {
            Plan::Tilted { tilt, .. } => Some(*tilt),
            Plan::Rejection { .. } => None,
        }
    }

    /// Draws one conditional sample.
    pub fn draw(&self, rng: &mut impl Rng) -> Result<FieldSample> {
        match &self.plan {
            Plan::Rejection { active, .. } => self.draw_rejection(active, rng),
            Plan::Tilted { tilt, top_len, lambda1, nontop, ln_normalizer, shape } => self
                .draw_tilted(*tilt, *top_len, *lambda1, nontop, *ln_normalizer, *shape, rng),
        }
    }

    fn draw_rejection(
        &self,
        active: &[(usize, f64)],
        rng: &mut impl Rng,
    ) -> Result<FieldSample> {
        let comp_sd = component_sd(self.basis.kind);
        let complex = self.basis.kind == FieldKind::Complex;
        let mut re_a = vec![0.0; active.len()];
        let mut im_a = vec![0.0; active.len()];
        for _ in 0..REJECTION_MAX_ATTEMPTS {
            let mut q = 0.0;
            for (slot, &(_, l)) in active.iter().enumerate() {
                let r = comp_sd * rng.sample::<f64, _>(StandardNormal);
                re_a[slot] = r;
                let mut p = r * r;
                if complex {
                    let i = comp_sd * rng.sample::<f64, _>(StandardNormal);
                    im_a[slot] = i;
                    p += i * i;
                }
                q += l * p;
            }
            if q > self.threshold {
                let m = self.basis.n_modes();
                let mut re = Array1::zeros(m);
                let mut im = if complex { Some(Array1::zeros(m)) } else { None };
                let mut in_active = vec![false; m];
                for (slot, &(i, _)) in active.iter().enumerate() {
                    in_active[i] = true;
                    re[i] = re_a[slot];
                    if let Some(im) = im.as_mut() {
                        im[i] = im_a[slot];
                    }
                }
                for i in 0..m {
                    if !in_active[i] {
                        re[i] = comp_sd * rng.sample::<f64, _>(StandardNormal);
                        if let Some(im) = im.as_mut() {
                            im[i] = comp_sd * rng.sample::<f64, _>(StandardNormal);
                        }
                    }
                }
                let q = self.basis.observable_from_coords(&re, im.as_ref());
                return Ok(FieldSample { coords_re: re, coords_im: im, q, log_weight: 0.0 });
            }
        }
        Err(Error::BudgetExhausted(format!(
            "no acceptance within {REJECTION_MAX_ATTEMPTS} rejection attempts at threshold {}",
            self.threshold
        )))
    }

    #[allow(clippy::too_many_arguments)]
    fn draw_tilted(
        &self,
        tilt: f64,
        top_len: usize,
        lambda1: f64,
        nontop: &[(usize, f64, f64)],
        ln_normalizer: f64,
        shape: f64,
        rng: &mut impl Rng,
    ) -> Result<FieldSample> {
        let m = self.basis.n_modes();
        let complex = self.basis.kind == FieldKind::Complex;
        let comp_sd = component_sd(self.basis.kind);
        let mut re = Array1::zeros(m);
        let mut im = if complex { Some(Array1::zeros(m)) } else { None };
        // Non-top modes: tilted Gaussians for the active ones, plain
        // Gaussians for negligible ones.
        let mut tilted_sd = vec![f64::NAN; m];
        for &(i, _, sd) in nontop {
            tilted_sd[i] = sd;
        }
        let mut partial = 0.0;
        for i in top_len..m {
            let sd = if tilted_sd[i].is_nan() { comp_sd } else { tilted_sd[i] };
            let r = sd * rng.sample::<f64, _>(StandardNormal);
            re[i] = r;
            if let Some(im) = im.as_mut() {
                im[i] = sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
        for &(i, l, _) in nontop {
            let mut p = re[i] * re[i];
            if let Some(im) = im.as_ref() {
                p += im[i] * im[i];
            }
            partial += l * p;
        }
        // Top group: magnitude from the conditioned Gamma tail, direction
        // uniform on the sphere.
        let tau = ((self.threshold - partial) / lambda1).max(0.0);
        let tau_gamma = if complex { tau } else { 0.5 * tau };
        let ln_survival = ln_gamma_survival(shape, tau_gamma);
        let magnitude = gamma_tail_draw(shape, tau_gamma, rng)?;
        let top_power = if complex { magnitude } else { 2.0 * magnitude };
        let n_components = if complex { 2 * top_len } else { top_len };
        let mut direction = vec![0.0; n_components];
        let mut norm2 = 0.0;
        for _ in 0..64 {
            norm2 = 0.0;
            for d in direction.iter_mut() {
                *d = rng.sample::<f64, _>(StandardNormal);
                norm2 += *d * *d;
            }
            if norm2 > 0.0 {
                break;
            }
        }
        if norm2 == 0.0 {
            return Err(Error::Sampling("degenerate direction draw".into()));
        }
        let scale = (top_power / norm2).sqrt();
        for i in 0..top_len {
            if complex {
                re[i] = scale * direction[2 * i];
                if let Some(im) = im.as_mut() {
                    im[i] = scale * direction[2 * i + 1];
                }
            } else {
                re[i] = scale * direction[i];
            }
        }
        let q = self.basis.observable_from_coords(&re, im.as_ref());
        let log_weight = ln_normalizer - tilt * partial + ln_survival;
        Ok(FieldSample { coords_re: re, coords_im: im, q, log_weight })
    }
}

/// Natural log of the upper Gamma survival `P(G > tau)` for shape `a`,
/// with an asymptotic fallback when the survival underflows.
fn ln_gamma_survival(a: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let q = gamma_ur(a, tau);
    if q > 1e-290 {
        q.ln()
    } else {
        (a - 1.0) * tau.ln() - tau - ln_gamma(a) + ((a - 1.0) / tau).ln_1p()
    }
}

/// Draws from a unit-scale Gamma distribution with shape `a`, conditioned
/// on exceeding `threshold`.
///
/// Uses plain resampling while the event is common; deep in the tail it
/// switches to a shifted-exponential envelope whose rate is tuned so the
/// acceptance ratio stays bounded away from zero for every shape and
/// threshold.
pub fn gamma_tail_draw(a: f64, threshold: f64, rng: &mut impl Rng) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Sampling(format!("gamma shape must be positive, got {a}")));
    }
    let gamma = Gamma::new(a, 1.0)
        .map_err(|e| Error::Sampling(format!("gamma distribution setup failed: {e}")))?;
    if threshold <= 0.0 {
        return Ok(rng.sample(gamma));
    }
    if gamma_ur(a, threshold) >= 0.1 {
        for _ in 0..1000 {
            let x: f64 = rng.sample(gamma);
            if x > threshold {
                return Ok(x);
            }
        }
        return Err(Error::BudgetExhausted(
            "gamma tail resampling failed despite a common event".into(),
        ));
    }
    // Envelope: x = threshold + Exp(beta). The acceptance ratio is
    // x^{a-1} e^{-(1-beta)x} normalized by its maximum over
    // [threshold, inf), attained at x* = max(threshold, (a-1)/(1-beta)).
    let beta = if a <= 1.0 { 1.0 } else { (1.0 - (a - 1.0) / threshold).max(0.5) };
    let exp = Exp::new(beta)
        .map_err(|e| Error::Sampling(format!("exponential envelope setup failed: {e}")))?;
    let x_star = if a > 1.0 && beta < 1.0 {
        threshold.max((a - 1.0) / (1.0 - beta))
    } else {
        threshold
    };
    for _ in 0..10_000 {
        let x = threshold + rng.sample::<f64, _>(exp);
        let ln_accept = (a - 1.0) * (x / x_star).ln() - (1.0 - beta) * (x - x_star);
        debug_assert!(ln_accept <= 1e-12, "envelope must dominate: {ln_accept}");
        if rng.random::<f64>().ln() < ln_accept {
            return Ok(x);
        }
    }
    Err(Error::BudgetExhausted("gamma tail envelope rejection failed to accept".into()))
}

/// Importance-sampling estimate of `P(Q > u)` with its effective sample
/// size.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ImportanceTailEstimate {
    /// Weighted tail probability estimate.
    pub probability: f64,
    /// Standard error of the estimate.
    pub std_error: f64,
    /// Effective sample size `(sum w)^2 / sum w^2`.
    pub effective_samples: f64,
    /// Number of draws.
    pub samples: usize,
}

/// Estimates `P(Q > u)` from tilted conditional draws: the mean of
/// `w * 1{q > u}` is unbiased for the tail probability.
pub fn conditional_tail_estimate(
    sampler: &ConditionalSampler<'_>,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<ImportanceTailEstimate> {
    if sampler.tilt().is_none() {
        return Err(Error::Sampling(
            "tail estimation needs the tilted method; rejection draws carry no weight".into(),
        ));
    }
    if samples < 2 {
        return Err(Error::Sampling("need at least two draws for a standard error".into()));
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let s = sampler.draw(rng)?;
        let x = if s.q > sampler.threshold() { s.weight() } else { 0.0 };
        sum += x;
        sum_sq += x * x;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    let ess = if sum_sq > 0.0 { sum * sum / sum_sq } else { 0.0 };
    Ok(ImportanceTailEstimate {
        probability: mean,
        std_error: (var / n).sqrt(),
        effective_samples: ess,
        samples,
    })
}
