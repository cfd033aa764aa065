//! Concentration diagnostics for conditioned fields.
//!
//! Conditioned on a large quadratic observable `{Q > u}`, the field is
//! predicted to collapse onto the top eigenvalue group of the whitened
//! observable: writing `phi = phibar + delta` with `phibar` the
//! projection onto the top group (optionally plus the bottom negative
//! group), the probability that the remainder is comparable to the
//! dominant part, `P(|delta|^2 > eps |phibar|^2 | Q > u)`, should fall
//! toward zero as the threshold grows.
//!
//! [`concentration_curve`] estimates that probability across a ladder of
//! thresholds, choosing rejection or tilted sampling per threshold,
//! together with companion statistics: the Wilson confidence interval at
//! the effective sample size, the probability that the dominant amplitude
//! stays below its unconditional mean square, the mean remainder ratio,
//! and the mean cosine between the field and the top subspace.

use crate::error::{Error, Result};
use crate::sampling::{
    ConditionalMethod, ConditionalSampler, FieldSample, KlBasis, stream_rng,
    REJECTION_MIN_ACCEPTANCE,
};
use crate::spectral::Spectrum;
use ndarray::{Array2, ArrayView2};
use ndarray_linalg::QR;
use serde::Serialize;

/// Two-sided 95% normal quantile used for all reported intervals.
pub const Z_95: f64 = 1.959963984540054;

/// Target number of matrix elements per realization chunk; keeps the
/// batched gemm working set bounded regardless of field dimension.
const CHUNK_TARGET_ELEMENTS: usize = 8_000_000;

/// Which eigenvalue groups count as the dominant part of the field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Top positive group only (one-sided conditioning).
    Upper,
    /// Top positive group plus the bottom negative group, for
    /// observables whose large values can ride on either sign.
    TwoSided,
}

/// Mode indices belonging to the dominant part under the given split.
pub fn split_indices(spectrum: &Spectrum, mode: SplitMode) -> Result<Vec<usize>> {
    let top = spectrum.top_positive_group().ok_or_else(|| {
        Error::Spectrum("splitting needs a positive top eigenvalue group".into())
    })?;
    let mut indices: Vec<usize> = (top.start..top.start + top.len).collect();
    if mode == SplitMode::TwoSided {
        if let Some(bottom) = spectrum.bottom_negative_group() {
            indices.extend(bottom.start..bottom.start + bottom.len);
        }
    }
    Ok(indices)
}

/// A weighted proportion with its Wilson interval at the effective
/// sample size.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WeightedProportion {
    /// Weighted fraction of hits.
    pub p_hat: f64,
    /// Lower Wilson bound.
    pub ci_low: f64,
    /// Upper Wilson bound.
    pub ci_high: f64,
    /// Effective sample size `(sum w)^2 / sum w^2`.
    pub n_eff: f64,
}

/// Weighted proportion of `hit` over `(hit, weight)` pairs. The interval
/// is the Wilson score interval evaluated at the effective sample size,
/// which reduces to the classical interval for equal weights.
pub fn weighted_proportion(pairs: impl IntoIterator<Item = (bool, f64)>) -> Result<WeightedProportion> {
    let mut sum_w = 0.0;
    let mut sum_w2 = 0.0;
    let mut sum_hit = 0.0;
    for (hit, w) in pairs {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::Sampling(format!("invalid weight {w}")));
        }
        sum_w += w;
        sum_w2 += w * w;
        if hit {
            sum_hit += w;
        }
    }
    if sum_w <= 0.0 || sum_w2 <= 0.0 {
        return Err(Error::Sampling("weighted proportion needs positive total weight".into()));
    }
    let p_hat = sum_hit / sum_w;
    let n_eff = sum_w * sum_w / sum_w2;
    let (ci_low, ci_high) = wilson_interval(p_hat, n_eff);
    Ok(WeightedProportion { p_hat, ci_low, ci_high, n_eff })
}

/// Wilson score interval for a proportion at sample size `n`. For the
/// degenerate proportions 0 and 1 the touching end is exact by
/// construction; pin it to avoid rounding residue.
fn wilson_interval(p: f64, n: f64) -> (f64, f64) {
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let low = if p == 0.0 { 0.0 } else { (center - half).max(0.0) };
    let high = if p == 1.0 { 1.0 } else { (center + half).min(1.0) };
    (low, high)
}

/// Settings for a concentration sweep.
#[derive(Debug, Clone)]
pub struct ConcentrationConfig {
    /// Conditioning thresholds, ascending.
    pub thresholds: Vec<f64>,
    /// Remainder-versus-dominant comparison factor `eps`.
    pub epsilon: f64,
    /// Amplitude comparison factor `a` for the companion event
    /// `|phibar|^2 <= a * E0` with `E0` the unconditional mean square.
    pub amplitude_factor: f64,
    /// Which groups form the dominant part.
    pub split: SplitMode,
    /// Draws per threshold.
    pub samples: usize,
    /// Base seed; threshold index selects the stream.
    pub seed: u64,
    /// Fixed method, or `None` to choose per threshold (rejection while
    /// the predicted acceptance allows it, tilted beyond).
    pub method: Option<ConditionalMethod>,
}

/// One threshold of a concentration sweep.
#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    /// Conditioning threshold.
    pub threshold: f64,
    /// Remainder comparison factor.
    pub epsilon: f64,
    /// Amplitude comparison factor.
    pub amplitude_factor: f64,
    /// `P(|delta|^2 > eps |phibar|^2 | Q > u)`.
    pub p_deviation: f64,
    /// Lower Wilson bound for `p_deviation`.
    pub ci_low: f64,
    /// Upper Wilson bound for `p_deviation`.
    pub ci_high: f64,
    /// `P(|phibar|^2 <= a * E0 | Q > u)`.
    pub p_amplitude_typical: f64,
    /// Weighted mean of `|delta|^2 / |phibar|^2`.
    pub mean_ratio: f64,
    /// Weighted mean cosine between the field and the dominant subspace.
    pub mean_cos_top: f64,
    /// Effective sample size behind the interval.
    pub n_eff: f64,
    /// Sampling method actually used ("rejection" or "tilted").
    pub method: String,
    /// Base seed of the sweep.
    pub seed: u64,
}

/// A full concentration sweep with its trend verdict.
#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationCurve {
    /// One entry per threshold, in the configured order.
    pub points: Vec<CurvePoint>,
    /// False only when some step shows a statistically significant
    /// increase: the estimate rises and the Wilson intervals are
    /// disjoint.
    pub trend_ok: bool,
}

/// Per-sample statistics extracted from a realization chunk.
struct SampleStat {
    weight: f64,
    delta2: f64,
    bar2: f64,
    cos: f64,
}

/// Runs the sweep: for each threshold, draw conditioned samples, realize
/// them in chunks, split into dominant part and remainder, and aggregate
/// the weighted statistics.
pub fn concentration_curve(
    basis: &KlBasis,
    config: &ConcentrationConfig,
) -> Result<ConcentrationCurve> {
    run_curve(basis, config, None)
}

/// Sweep driver with an explicit chunk size, used to exercise the
/// chunked realization path independently of the field dimension.
fn run_curve(
    basis: &KlBasis,
    config: &ConcentrationConfig,
    chunk_override: Option<usize>,
) -> Result<ConcentrationCurve> {
    if config.thresholds.is_empty() {
        return Err(Error::Sampling("concentration sweep needs at least one threshold".into()));
    }
    if config.samples < 2 {
        return Err(Error::Sampling("concentration sweep needs at least two samples".into()));
    }
    if !(config.epsilon > 0.0) || !(config.amplitude_factor > 0.0) {
        return Err(Error::Sampling(
            "comparison factors must be positive".into(),
        ));
    }
    let dominant = split_indices(basis.spectrum(), config.split)?;
    let transports = basis.transports();
    let dominant_block = gather_columns(&transports, &dominant);
    // Unconditional mean square of the dominant amplitude: the squared
    // Frobenius norm of its transport block, because each coordinate has
    // unit mean square modulus.
    let e0: f64 = dominant_block.iter().map(|v| v * v).sum();
    // Orthonormal basis of the dominant subspace for cosine statistics.
    let (q_dom, _) = dominant_block
        .qr()
        .map_err(|e| Error::Eigensolver(format!("QR of the dominant block failed: {e}")))?;
    let mut points = Vec::with_capacity(config.thresholds.len());
    for (ti, &u) in config.thresholds.iter().enumerate() {
        let (sampler, method_name) = select_sampler(basis, u, config.method)?;
        let mut rng = stream_rng(config.seed, ti as u64);
        let chunk = chunk_override
            .unwrap_or(CHUNK_TARGET_ELEMENTS / basis.dim().max(1))
            .clamp(1, config.samples);
        let mut stats: Vec<SampleStat> = Vec::with_capacity(config.samples);
        let mut drawn = 0;
        while drawn < config.samples {
            let batch = chunk.min(config.samples - drawn);
            let mut samples = Vec::with_capacity(batch);
            for _ in 0..batch {
                samples.push(sampler.draw(&mut rng)?);
            }
            accumulate_chunk(basis, &dominant, &dominant_block, &q_dom, u, &samples, &mut stats);
            drawn += batch;
        }
        let proportion = weighted_proportion(
            stats
                .iter()
                .map(|s| (s.delta2 > config.epsilon * s.bar2, s.weight)),
        )?;
        let amplitude = weighted_proportion(
            stats
                .iter()
                .map(|s| (s.bar2 <= config.amplitude_factor * e0, s.weight)),
        )?;
        let sum_w: f64 = stats.iter().map(|s| s.weight).sum();
        let mean_ratio = stats
            .iter()
            .map(|s| s.weight * if s.bar2 > 0.0 { s.delta2 / s.bar2 } else { f64::INFINITY })
            .sum::<f64>()
            / sum_w;
        let mean_cos_top =
            stats.iter().map(|s| s.weight * s.cos).sum::<f64>() / sum_w;
        points.push(CurvePoint {
            threshold: u,
            epsilon: config.epsilon,
            amplitude_factor: config.amplitude_factor,
            p_deviation: proportion.p_hat,
            ci_low: proportion.ci_low,
            ci_high: proportion.ci_high,
            p_amplitude_typical: amplitude.p_hat,
            mean_ratio,
            mean_cos_top,
            n_eff: proportion.n_eff,
            method: method_name,
            seed: config.seed,
        });
    }
    let trend_ok = trend_is_nonincreasing(&points);
    Ok(ConcentrationCurve { points, trend_ok })
}

/// True unless a consecutive pair shows a significant increase (estimate
/// rises and the intervals do not overlap).
fn trend_is_nonincreasing(points: &[CurvePoint]) -> bool {
    points.windows(2).all(|w| {
        let (a, b) = (&w[0], &w[1]);
        !(b.p_deviation > a.p_deviation && b.ci_low > a.ci_high)
    })
}

/// Picks the sampler for one threshold: the configured method if fixed,
/// otherwise rejection while its predicted acceptance stays above the
/// floor, tilted beyond that.
fn select_sampler<'a>(
    basis: &'a KlBasis,
    u: f64,
    method: Option<ConditionalMethod>,
) -> Result<(ConditionalSampler<'a>, String)> {
    let chosen = match method {
        Some(m) => m,
        None => {
            let model = basis.tail_model()?;
            let predicted = crate::sampling::tails::tail_prob_cf(&model, u)?.probability;
            if predicted >= REJECTION_MIN_ACCEPTANCE {
                ConditionalMethod::Rejection
            } else {
                ConditionalMethod::Tilted { tilt: None }
            }
        }
    };
    let name = match chosen {
        ConditionalMethod::Rejection => "rejection",
        ConditionalMethod::Tilted { .. } => "tilted",
    };
    Ok((ConditionalSampler::new(basis, u, chosen)?, name.to_string()))
}

/// Copies the given transport columns into a dense `n x k` block.
fn gather_columns(transports: &ArrayView2<'_, f64>, indices: &[usize]) -> Array2<f64> {
    let mut block = Array2::zeros((transports.nrows(), indices.len()));
    for (slot, &i) in indices.iter().enumerate() {
        block.column_mut(slot).assign(&transports.column(i));
    }
    block
}

/// Realizes a chunk of samples and appends their split statistics.
///
/// The full field comes from one gemm per part, the dominant component
/// from a second, much thinner gemm over the dominant coordinates, and
/// the remainder from their explicit difference — the transported
/// directions are not orthogonal in field space, so the remainder norm
/// cannot be read off the full and dominant norms alone.
fn accumulate_chunk(
    basis: &KlBasis,
    dominant: &[usize],
    dominant_block: &Array2<f64>,
    q_dom: &Array2<f64>,
    threshold: f64,
    samples: &[FieldSample],
    stats: &mut Vec<SampleStat>,
) {
    let m = basis.n_modes();
    let b = samples.len();
    let complex = samples.first().map(|s| s.coords_im.is_some()).unwrap_or(false);
    let parts = if complex { 2 } else { 1 };
    // Per-sample norms pooled over real and imaginary parts.
    let mut delta2 = vec![0.0; b];
    let mut bar2 = vec![0.0; b];
    let mut full2 = vec![0.0; b];
    let mut proj2 = vec![0.0; b];
    for part in 0..parts {
        let mut coords = Array2::zeros((m, b));
        let mut dom_coords = Array2::zeros((dominant.len(), b));
        for (j, s) in samples.iter().enumerate() {
            let src = if part == 0 {
                &s.coords_re
            } else {
                s.coords_im.as_ref().expect("complex samples carry imaginary parts")
            };
            coords.column_mut(j).assign(src);
            for (slot, &i) in dominant.iter().enumerate() {
                dom_coords[[slot, j]] = src[i];
            }
        }
        let fields = basis.realize_block(&coords.view());
        let bars = dominant_block.dot(&dom_coords);
        let projections = q_dom.t().dot(&fields);
        for j in 0..b {
            let f = fields.column(j);
            let bar = bars.column(j);
            let mut d2 = 0.0;
            for i in 0..f.len() {
                let d = f[i] - bar[i];
                d2 += d * d;
            }
            delta2[j] += d2;
            full2[j] += f.iter().map(|v| v * v).sum::<f64>();
            bar2[j] += bar.iter().map(|v| v * v).sum::<f64>();
            proj2[j] += projections.column(j).iter().map(|v| v * v).sum::<f64>();
        }
    }
    for (j, s) in samples.iter().enumerate() {
        let weight = if s.q > threshold { s.weight() } else { 0.0 };
        let cos = if full2[j] > 0.0 { (proj2[j] / full2[j]).sqrt().min(1.0) } else { 0.0 };
        stats.push(SampleStat { weight, delta2: delta2[j], bar2: bar2[j], cos });
    }
}
