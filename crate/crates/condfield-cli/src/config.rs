//! Experiment configuration: one TOML file per run.
//!
//! The schema is strict — unknown keys anywhere are rejected, and each
//! experiment declares which blocks it uses; supplying a block an
//! experiment ignores is an error, so stale configs fail loudly instead
//! of silently dropping parameters. The full schema is documented in the
//! repository guide, with a ready-to-run example per experiment under
//! `configs/`.

use crate::outcome::{as_config_error, CliError};
use condfield::concentration::SplitMode;
use condfield::grid::Grid;
use condfield::kernels::Kernel;
use condfield::operators::{observable_helicity, LowRankForm};
use condfield::sampling::{ConditionalMethod, FieldKind};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// The experiments the runner knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// Randomized instances checking that the whitened-observable and
    /// covariance-product routes agree on every nonzero eigenvalue.
    Prop3,
    /// Dense-versus-low-rank spectrum cross-validation on a configured
    /// grid, kernel, and observable.
    Spectrum,
    /// Tail probabilities of the quadratic observable: characteristic
    /// function inversion, closed-form asymptotics, direct Monte Carlo.
    Tails,
    /// Conditioned concentration sweep over a threshold grid.
    Concentration,
    /// High local maximum of a scalar field: eigenstructure, profile,
    /// and optional conditioned alignment sweep.
    Adler,
    /// Local helicity of a turbulence flow: spectrum convergence, mode
    /// alignment, and optional conditioned sweep.
    Helicity,
    /// Draw (conditioned) field samples and write per-sample statistics.
    Sample,
}

impl Experiment {
    /// Config token for this experiment.
    pub fn token(self) -> &'static str {
        match self {
            Experiment::Prop3 => "prop3",
            Experiment::Spectrum => "spectrum",
            Experiment::Tails => "tails",
            Experiment::Concentration => "concentration",
            Experiment::Adler => "adler",
            Experiment::Helicity => "helicity",
            Experiment::Sample => "sample",
        }
    }

    /// Every experiment with a one-line description, for `list-experiments`.
    pub fn catalog() -> [(Experiment, &'static str); 7] {
        [
            (Experiment::Prop3, "randomized spectral-equivalence instances (whitened vs product routes)"),
            (Experiment::Spectrum, "dense vs low-rank spectrum cross-validation for a configured observable"),
            (Experiment::Tails, "tail probabilities: CF inversion, asymptotics, Monte Carlo cross-check"),
            (Experiment::Concentration, "conditioned concentration sweep over a threshold grid"),
            (Experiment::Adler, "scalar peak application: eigenstructure, profile, alignment sweep"),
            (Experiment::Helicity, "turbulence helicity application: spectrum convergence, mode angles, conditioned sweep"),
            (Experiment::Sample, "draw conditioned or unconditional samples with per-sample statistics"),
        ]
    }
}

/// Top-level config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Which experiment to run.
    pub experiment: Experiment,
    /// Grid geometry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridBlock>,
    /// Covariance kernel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelBlock>,
    /// Conditioning observable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<ObservableBlock>,
    /// Monte Carlo settings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingBlock>,
    /// Output location.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputBlock>,
    /// Extra knobs for the `prop3` experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prop3: Option<Prop3Block>,
    /// Extra knobs for the `helicity` experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub helicity: Option<HelicityBlock>,
}

/// Grid block: `d` spatial dimensions, half-extent `L`, `n` nodes per
/// axis (odd), `N` field components.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    /// Spatial dimension (1 to 3).
    pub d: usize,
    /// Box half-extent; nodes span `[-L, L]` per axis.
    #[serde(rename = "L")]
    pub half_extent: f64,
    /// Nodes per axis; must be odd so the origin is a node.
    pub n: usize,
    /// Field components per node.
    #[serde(rename = "N", default = "default_components")]
    pub components: usize,
}

fn default_components() -> usize {
    1
}

impl GridBlock {
    /// Builds the grid, mapping invalid geometry to a config error.
    pub fn build(&self) -> Result<Grid, CliError> {
        Grid::new(self.d, self.n, self.half_extent, self.components).map_err(as_config_error)
    }
}

/// Kernel families the config can name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    /// Stationary scalar kernel `variance * exp(-r^2 / 2 length^2)`.
    SquaredExponential,
    /// Stationary scalar kernel `variance * exp(-r / length)`.
    Exponential,
    /// Incompressible isotropic turbulence tensor with Gaussian
    /// longitudinal correlation, set by `energy` and `taylor_scale`.
    Turbulence,
}

/// Kernel block: a family name plus the parameters that family needs.
/// Parameters not used by the family must be omitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelBlock {
    /// Which covariance family to build.
    pub family: KernelFamily,
    /// Pointwise variance (scalar families).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    /// Correlation length (scalar families).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    /// Energy per component (turbulence family).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    /// Taylor microscale (turbulence family).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taylor_scale: Option<f64>,
}

impl KernelBlock {
    fn require(name: &str, value: Option<f64>, family: &str) -> Result<f64, CliError> {
        value.ok_or_else(|| {
            CliError::Config(format!("kernel family \"{family}\" requires `{name}`"))
        })
    }

    fn forbid(name: &str, value: Option<f64>, family: &str) -> Result<(), CliError> {
        if value.is_some() {
            return Err(CliError::Config(format!(
                "kernel family \"{family}\" does not use `{name}`"
            )));
        }
        Ok(())
    }

    /// Builds the kernel, enforcing that exactly the family's parameters
    /// are present.
    pub fn build(&self) -> Result<Kernel, CliError> {
        match self.family {
            KernelFamily::SquaredExponential | KernelFamily::Exponential => {
                let family = if self.family == KernelFamily::SquaredExponential {
                    "squared-exponential"
                } else {
                    "exponential"
                };
                let variance = Self::require("variance", self.variance, family)?;
                let length = Self::require("length", self.length, family)?;
                Self::forbid("energy", self.energy, family)?;
                Self::forbid("taylor_scale", self.taylor_scale, family)?;
                let kernel = if self.family == KernelFamily::SquaredExponential {
                    Kernel::squared_exponential(variance, length)
                } else {
                    Kernel::exponential(variance, length)
                };
                kernel.map_err(as_config_error)
            }
            KernelFamily::Turbulence => {
                let energy = Self::require("energy", self.energy, "turbulence")?;
                let taylor_scale = Self::require("taylor_scale", self.taylor_scale, "turbulence")?;
                Self::forbid("variance", self.variance, "turbulence")?;
                Self::forbid("length", self.length, "turbulence")?;
                Kernel::turbulence(energy, taylor_scale).map_err(as_config_error)
            }
        }
    }
}

/// Observables the config can name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservableName {
    /// Squared field value at a point (default: the origin).
    PointIntensity,
    /// Helicity density of a three-component field at the origin.
    Helicity,
}

/// Observable block: a name and, for the point intensity, an optional
/// point (snapped to the nearest grid node).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableBlock {
    /// Which observable to condition on.
    pub name: ObservableName,
    /// Evaluation point for the point intensity; defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<[f64; 3]>,
}

impl ObservableBlock {
    /// Builds the observable for a grid.
    pub fn build(&self, grid: &Grid) -> Result<LowRankForm, CliError> {
        match self.name {
            ObservableName::PointIntensity => {
                if grid.components() != 1 {
                    return Err(CliError::Config(format!(
                        "point-intensity needs a scalar field, grid has {} components",
                        grid.components()
                    )));
                }
                let node = match self.point {
                    None => grid.center_node(),
                    Some(p) => nearest_node(grid, &p)?,
                };
                let f = grid.value_functional(0, node).map_err(as_config_error)?;
                LowRankForm::new(vec![f], Array2::from_elem((1, 1), 1.0))
                    .map_err(as_config_error)
            }
            ObservableName::Helicity => {
                if self.point.is_some() {
                    return Err(CliError::Config(
                        "the helicity observable is evaluated at the origin; remove `point`".into(),
                    ));
                }
                observable_helicity(grid).map_err(as_config_error)
            }
        }
    }
}

/// Snaps a physical point to the nearest grid node, rejecting points
/// outside the box.
fn nearest_node(grid: &Grid, point: &[f64; 3]) -> Result<usize, CliError> {
    let mut multi = [0usize; 3];
    for axis in 0..3 {
        let coord = point[axis];
        if axis >= grid.dim() {
            if coord != 0.0 {
                return Err(CliError::Config(format!(
                    "point coordinate {coord} on axis {axis} exceeds grid dimension {}",
                    grid.dim()
                )));
            }
            continue;
        }
        if coord.abs() > grid.half_extent() + 1e-12 {
            return Err(CliError::Config(format!(
                "point coordinate {coord} lies outside the box of half-extent {}",
                grid.half_extent()
            )));
        }
        let idx = ((coord + grid.half_extent()) / grid.spacing()).round();
        multi[axis] = (idx.max(0.0) as usize).min(grid.points_per_axis() - 1);
    }
    Ok(grid.node_index(multi))
}

/// Sampling method tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodToken {
    /// Rejection while the predicted acceptance allows it, tilted beyond.
    Auto,
    /// Always rejection sampling.
    Rejection,
    /// Always the tilted importance sampler.
    Tilted,
}

/// Field kind tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldToken {
    /// Complex Gaussian coordinates (unit mean squared modulus).
    Complex,
    /// Real Gaussian coordinates (unit variance).
    Real,
}

/// Dominant-group split tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitToken {
    /// Dominant part is the top positive eigenvalue group.
    Upper,
    /// Dominant part also includes the bottom negative group.
    TwoSided,
}

/// Sampling block: thresholds, budgets, and sampler selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingBlock {
    /// Sampler selection; defaults to `auto`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodToken>,
    /// Conditioning thresholds, ascending, in the experiment's threshold
    /// unit (see each experiment's documentation).
    pub u_grid: Vec<f64>,
    /// Remainder comparison factor; defaults to 0.5.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Amplitude comparison factor; defaults to 1.0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// Draws per threshold (or Monte Carlo sample count for `tails`).
    pub n_samples: usize,
    /// Base RNG seed.
    pub seed: u64,
    /// Field kind; defaults to `complex`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldToken>,
    /// Dominant-group split; defaults to `upper`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitToken>,
    /// Fixed tilt rate for the tilted sampler; defaults to automatic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt: Option<f64>,
}

impl SamplingBlock {
    /// Remainder comparison factor with its default.
    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(0.5)
    }

    /// Amplitude comparison factor with its default.
    pub fn amplitude(&self) -> f64 {
        self.amplitude.unwrap_or(1.0)
    }

    /// Field kind with its default.
    pub fn field_kind(&self) -> FieldKind {
        match self.field.unwrap_or(FieldToken::Complex) {
            FieldToken::Complex => FieldKind::Complex,
            FieldToken::Real => FieldKind::Real,
        }
    }

    /// Split mode with its default.
    pub fn split_mode(&self) -> SplitMode {
        match self.split.unwrap_or(SplitToken::Upper) {
            SplitToken::Upper => SplitMode::Upper,
            SplitToken::TwoSided => SplitMode::TwoSided,
        }
    }

    /// Fixed method, or `None` for automatic selection per threshold.
    pub fn method(&self) -> Option<ConditionalMethod> {
        match self.method.unwrap_or(MethodToken::Auto) {
            MethodToken::Auto => None,
            MethodToken::Rejection => Some(ConditionalMethod::Rejection),
            MethodToken::Tilted => Some(ConditionalMethod::Tilted { tilt: self.tilt }),
        }
    }

    fn validate(&self, experiment: Experiment) -> Result<(), CliError> {
        if self.n_samples < 2 {
            return Err(CliError::Config(format!(
                "n_samples must be at least 2, got {}",
                self.n_samples
            )));
        }
        if let Some(eps) = self.epsilon {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(CliError::Config(format!("epsilon must be positive, got {eps}")));
            }
        }
        if let Some(a) = self.amplitude {
            if !(a.is_finite() && a > 0.0) {
                return Err(CliError::Config(format!("amplitude must be positive, got {a}")));
            }
        }
        if self.tilt.is_some() && self.method.unwrap_or(MethodToken::Auto) != MethodToken::Tilted {
            return Err(CliError::Config(
                "`tilt` only applies when method = \"tilted\"".into(),
            ));
        }
        match experiment {
            Experiment::Sample => {
                if self.u_grid.len() > 1 {
                    return Err(CliError::Config(format!(
                        "the sample experiment uses at most one threshold, got {}",
                        self.u_grid.len()
                    )));
                }
            }
            _ => {
                if self.u_grid.is_empty() {
                    return Err(CliError::Config("u_grid must not be empty".into()));
                }
            }
        }
        for pair in self.u_grid.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(CliError::Config(format!(
                    "u_grid must be strictly ascending, got {:?} before {:?}",
                    pair[0], pair[1]
                )));
            }
        }
        for &u in &self.u_grid {
            if !(u.is_finite() && u > 0.0) {
                return Err(CliError::Config(format!(
                    "u_grid entries must be positive and finite, got {u}"
                )));
            }
        }
        Ok(())
    }
}

/// Output block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    /// Directory that receives the per-run result directory.
    pub dir: String,
}

/// Knobs for the randomized equivalence experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prop3Block {
    /// Number of randomized instances; defaults to 20.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<usize>,
    /// Matrix dimension per instance; defaults to 64.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    /// Relative tolerance on matched eigenvalues; defaults to 1e-8.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// RNG seed; defaults to 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Prop3Block {
    /// Instance count with its default.
    pub fn instances(&self) -> usize {
        self.instances.unwrap_or(20)
    }

    /// Dimension with its default.
    pub fn dimension(&self) -> usize {
        self.dimension.unwrap_or(64)
    }

    /// Tolerance with its default.
    pub fn tolerance(&self) -> f64 {
        self.tolerance.unwrap_or(1e-8)
    }

    /// Seed with its default.
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.instances() == 0 {
            return Err(CliError::Config("prop3 needs at least one instance".into()));
        }
        if self.dimension() < 6 {
            return Err(CliError::Config(format!(
                "prop3 dimension must be at least 6, got {}",
                self.dimension()
            )));
        }
        let tol = self.tolerance();
        if !(tol.is_finite() && tol > 0.0) {
            return Err(CliError::Config(format!("prop3 tolerance must be positive, got {tol}")));
        }
        Ok(())
    }
}

/// Knobs for the helicity experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HelicityBlock {
    /// Spacing divisors for the convergence study: each divisor `k` runs
    /// the grid with `(n - 1) * k + 1` nodes per axis at the same
    /// half-extent. Defaults to `[1, 2]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinements: Option<Vec<usize>>,
}

impl HelicityBlock {
    /// Refinement divisors with their default.
    pub fn refinements(&self) -> Vec<usize> {
        self.refinements.clone().unwrap_or_else(|| vec![1, 2])
    }

    fn validate(&self) -> Result<(), CliError> {
        let r = self.refinements();
        if r.len() < 2 {
            return Err(CliError::Config(
                "helicity needs at least two refinements to measure convergence".into(),
            ));
        }
        for pair in r.windows(2) {
            if pair[1] <= pair[0] {
                return Err(CliError::Config(format!(
                    "helicity refinements must be strictly increasing, got {:?}",
                    r
                )));
            }
        }
        if r[0] == 0 {
            return Err(CliError::Config("helicity refinements must be positive".into()));
        }
        Ok(())
    }
}

impl Config {
    /// Parses a TOML config string, rejecting unknown keys.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Overrides the RNG seed of every block that has one.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(sampling) = &mut self.sampling {
            sampling.seed = seed;
        }
        if let Some(prop3) = &mut self.prop3 {
            prop3.seed = Some(seed);
        } else if self.experiment == Experiment::Prop3 {
            self.prop3 = Some(Prop3Block {
                instances: None,
                dimension: None,
                tolerance: None,
                seed: Some(seed),
            });
        }
    }

    /// The effective seed recorded in the manifest, if the experiment
    /// uses one.
    pub fn effective_seed(&self) -> Option<u64> {
        match self.experiment {
            Experiment::Prop3 => {
                Some(self.prop3.as_ref().map_or(0, |p| p.seed()))
            }
            _ => self.sampling.as_ref().map(|s| s.seed),
        }
    }

    /// Validates block presence and contents for the chosen experiment.
    /// Dry-builds the grid, kernel, and observable so geometry errors are
    /// reported before any output directory is created.
    pub fn validate(&self) -> Result<(), CliError> {
        let e = self.experiment;
        let need = |present: bool, block: &str| -> Result<(), CliError> {
            if present {
                Ok(())
            } else {
                Err(CliError::Config(format!(
                    "experiment \"{}\" requires a [{block}] block",
                    e.token()
                )))
            }
        };
        let refuse = |absent: bool, block: &str| -> Result<(), CliError> {
            if absent {
                Ok(())
            } else {
                Err(CliError::Config(format!(
                    "experiment \"{}\" does not use a [{block}] block; remove it",
                    e.token()
                )))
            }
        };
        match e {
            Experiment::Prop3 => {
                refuse(self.grid.is_none(), "grid")?;
                refuse(self.kernel.is_none(), "kernel")?;
                refuse(self.observable.is_none(), "observable")?;
                refuse(self.sampling.is_none(), "sampling")?;
                refuse(self.helicity.is_none(), "helicity")?;
            }
            Experiment::Spectrum => {
                need(self.grid.is_some(), "grid")?;
                need(self.kernel.is_some(), "kernel")?;
                need(self.observable.is_some(), "observable")?;
                refuse(self.sampling.is_none(), "sampling")?;
                refuse(self.prop3.is_none(), "prop3")?;
                refuse(self.helicity.is_none(), "helicity")?;
            }
            Experiment::Tails | Experiment::Concentration | Experiment::Sample => {
                need(self.grid.is_some(), "grid")?;
                need(self.kernel.is_some(), "kernel")?;
                need(self.observable.is_some(), "observable")?;
                need(self.sampling.is_some(), "sampling")?;
                refuse(self.prop3.is_none(), "prop3")?;
                refuse(self.helicity.is_none(), "helicity")?;
            }
            Experiment::Adler => {
                need(self.grid.is_some(), "grid")?;
                need(self.kernel.is_some(), "kernel")?;
                refuse(self.observable.is_none(), "observable")?;
                refuse(self.prop3.is_none(), "prop3")?;
                refuse(self.helicity.is_none(), "helicity")?;
            }
            Experiment::Helicity => {
                need(self.grid.is_some(), "grid")?;
                need(self.kernel.is_some(), "kernel")?;
                refuse(self.observable.is_none(), "observable")?;
                refuse(self.prop3.is_none(), "prop3")?;
            }
        }
        if let Some(block) = &self.prop3 {
            block.validate()?;
        }
        if let Some(block) = &self.helicity {
            block.validate()?;
        }
        if let Some(sampling) = &self.sampling {
            sampling.validate(e)?;
        }
        let grid = match &self.grid {
            Some(block) => Some(block.build()?),
            None => None,
        };
        let kernel = match &self.kernel {
            Some(block) => Some(block.build()?),
            None => None,
        };
        if let (Some(observable), Some(grid)) = (&self.observable, &grid) {
            observable.build(grid)?;
        }
        match e {
            Experiment::Adler => {
                let grid = grid.as_ref().expect("checked above");
                if grid.components() != 1 {
                    return Err(CliError::Config(
                        "the adler experiment needs a scalar field (N = 1)".into(),
                    ));
                }
            }
            Experiment::Helicity => {
                let grid = grid.as_ref().expect("checked above");
                let kernel = self.kernel.as_ref().expect("checked above");
                if grid.dim() != 3 || grid.components() != 3 {
                    return Err(CliError::Config(
                        "the helicity experiment needs d = 3 and N = 3".into(),
                    ));
                }
                if kernel.family != KernelFamily::Turbulence {
                    return Err(CliError::Config(
                        "the helicity experiment needs the turbulence kernel family".into(),
                    ));
                }
                if let Some(sampling) = &self.sampling {
                    if sampling.field_kind() != FieldKind::Real {
                        return Err(CliError::Config(
                            "helicity conditioning runs on real fields; set field = \"real\"".into(),
                        ));
                    }
                }
            }
            _ => {}
        }
        let _ = kernel;
        Ok(())
    }

    /// Canonical hash of the effective config (after seed overrides).
    /// Identical configs hash identically; the hash names the run
    /// directory and is recorded in the manifest.
    pub fn hash(&self) -> Result<String, CliError> {
        let canonical = toml::to_string(self)
            .map_err(|e| CliError::Internal(format!("config re-serialization failed: {e}")))?;
        let digest = Sha256::digest(canonical.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Output root directory from the config, if set.
    pub fn output_dir(&self) -> Option<&str> {
        self.output.as_ref().map(|o| o.dir.as_str())
    }
}
