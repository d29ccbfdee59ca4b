//! The incremental Gaussian mixture network.
//!
//! A [`MixtureModel`] sees each data point exactly once through
//! [`MixtureModel::learn_one`]. A point that falls inside the chi-squared
//! novelty radius of some component updates every component in proportion to
//! its posterior; otherwise it seeds a new component. Components that stay
//! weak after `v_min` updates are pruned.
//!
//! Two interchangeable backends produce the same model:
//! [`Backend::Reference`] keeps covariance matrices and refactorizes them on
//! every step, [`Backend::Fast`] keeps precision matrices and a log
//! determinant current with rank-one updates only.

mod component;
pub mod fast;
mod io;
pub mod reference;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, DEGENERATE_EPS};
use crate::par;
use crate::stats::{chi2_quantile, RunningStats, StatsError, DEFAULT_STD_FLOOR};

pub use component::{GaussianComponent, Shape};
pub(crate) use component::LN_2PI;
pub use io::{ComponentRecord, ModelFile, MODEL_FORMAT, MODEL_VERSION};

#[derive(Debug, Error)]
pub enum IgmnError {
    #[error("dimension mismatch: model has {expected} dimensions, input has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("input element {index} is not finite")]
    NonFinite { index: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model has no components")]
    EmptyModel,
    #[error("degenerate covariance downdate in component {component} (factor {factor:e})")]
    Degenerate { component: usize, factor: f64 },
    #[error("numerical failure in component {component}: {source}")]
    Numerical { component: usize, source: LinalgError },
    #[error("operation requires the {0:?} backend")]
    WrongBackend(Backend),
    #[error("invalid slice plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u64),
    #[error("malformed model file: {0}")]
    MalformedFile(String),
}

pub type Result<T> = std::result::Result<T, IgmnError>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Fast,
    Reference,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Fast => "fast",
            Backend::Reference => "reference",
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// What to do when the covariance subtraction would leave the matrix
/// (numerically) indefinite.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegeneratePolicy {
    /// Abort the learning step.
    Error,
    /// Shrink the subtracted term so its determinant factor equals
    /// [`CLAMP_FLOOR`], and count the event on the component.
    #[default]
    Clamp,
}

/// Smallest determinant factor a rank-one subtraction may have under
/// [`DegeneratePolicy::Clamp`]. Keeps the condition number of a clamped
/// matrix near `1e6`, where `det(Lambda) |C| = 1` still holds to about
/// `1e-10`.
pub const CLAMP_FLOOR: f64 = 1e-6;

pub(crate) struct Guard {
    pub factor: f64,
    /// Multiplier on the subtracted outer product.
    pub scale: f64,
    pub clamped: bool,
}

/// Decides how a rank-one subtraction with determinant factor
/// `factor = 1 - q` proceeds.
pub(crate) fn downdate_guard(factor: f64, q: f64, policy: DegeneratePolicy) -> std::result::Result<Guard, LinalgError> {
    let floor = match policy {
        DegeneratePolicy::Error => DEGENERATE_EPS,
        DegeneratePolicy::Clamp => CLAMP_FLOOR,
    };
    if factor >= floor {
        return Ok(Guard {
            factor,
            scale: 1.0,
            clamped: false,
        });
    }
    match policy {
        DegeneratePolicy::Error => Err(LinalgError::DegenerateUpdate { factor }),
        DegeneratePolicy::Clamp if q.is_finite() && q > 0.0 => Ok(Guard {
            factor: CLAMP_FLOOR,
            scale: (1.0 - CLAMP_FLOOR) / q,
            clamped: true,
        }),
        DegeneratePolicy::Clamp => Err(LinalgError::DegenerateUpdate { factor }),
    }
}

/// Hyper-parameters of the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IgmnConfig {
    /// Scale of the initial component width relative to the data's standard
    /// deviation.
    pub delta: f64,
    /// Novelty level: a point is novel when its squared Mahalanobis distance
    /// to every component exceeds the `1 - beta` chi-squared quantile.
    pub beta: f64,
    pub v_min: f64,
    pub sp_min: f64,
    pub std_floor: f64,
    pub backend: Backend,
    pub degenerate_policy: DegeneratePolicy,
}

impl Default for IgmnConfig {
    fn default() -> Self {
        Self {
            delta: 0.01,
            beta: 0.1,
            v_min: 5.0,
            sp_min: 3.0,
            std_floor: DEFAULT_STD_FLOOR,
            backend: Backend::Fast,
            degenerate_policy: DegeneratePolicy::Clamp,
        }
    }
}

impl IgmnConfig {
    pub fn new(delta: f64, beta: f64) -> Self {
        Self {
            delta,
            beta,
            ..Self::default()
        }
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_policy(mut self, policy: DegeneratePolicy) -> Self {
        self.degenerate_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(IgmnError::InvalidConfig(m.to_owned()));
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta must be positive");
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad("beta must lie in [0, 1]");
        }
        if !(self.v_min > 0.0) {
            return bad("v_min must be positive");
        }
        if !(self.sp_min > 0.0) {
            return bad("sp_min must be positive");
        }
        if !(self.std_floor > 0.0) {
            return bad("std_floor must be positive");
        }
        Ok(())
    }
}

/// Which branch of the learning rule a point took.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepAction {
    Updated,
    Created,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepReport {
    pub action: StepAction,
    /// Indices (in pre-pruning order) of components removed after the step.
    pub removed: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct MixtureModel {
    config: IgmnConfig,
    dim: usize,
    components: Vec<GaussianComponent>,
    /// Initial per-dimension width `delta * std`.
    sigma_ini: Vec<f64>,
    /// Present in stream mode: moments of everything seen so far, used to
    /// size each new component.
    stream_stats: Option<RunningStats>,
    points_seen: u64,
    threshold: f64,
}

impl MixtureModel {
    /// Model whose components start with width `delta * max(std, floor)`.
    pub fn new(config: IgmnConfig, data_std: &[f64]) -> Result<Self> {
        config.validate()?;
        if data_std.is_empty() {
            return Err(IgmnError::InvalidConfig("dimension must be positive".into()));
        }
        let sigma_ini = data_std
            .iter()
            .map(|s| config.delta * s.max(config.std_floor))
            .collect();
        Self::assemble(config, data_std.len(), sigma_ini, None)
    }

    /// Model sized from the standard deviation of `rows`.
    pub fn from_data<R: AsRef<[f64]>>(config: IgmnConfig, rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let stats = RunningStats::from_rows(dim, rows.iter().map(AsRef::as_ref))?;
        Self::new(config.clone(), &stats.std_vector(config.std_floor))
    }

    /// Model that estimates the data spread on the fly; each component is
    /// sized from the running standard deviation at its creation.
    pub fn streaming(config: IgmnConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        if dim == 0 {
            return Err(IgmnError::InvalidConfig("dimension must be positive".into()));
        }
        let sigma_ini = vec![config.delta * config.std_floor; dim];
        Self::assemble(config, dim, sigma_ini, Some(RunningStats::new(dim)))
    }

    fn assemble(config: IgmnConfig, dim: usize, sigma_ini: Vec<f64>, stream_stats: Option<RunningStats>) -> Result<Self> {
        let threshold = novelty_threshold(dim, config.beta)?;
        Ok(Self {
            config,
            dim,
            components: Vec::new(),
            sigma_ini,
            stream_stats,
            points_seen: 0,
            threshold,
        })
    }

    pub fn config(&self) -> &IgmnConfig {
        &self.config
    }

    pub fn backend(&self) -> Backend {
        self.config.backend
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn sigma_ini(&self) -> &[f64] {
        &self.sigma_ini
    }

    pub fn points_seen(&self) -> u64 {
        self.points_seen
    }

    pub fn is_streaming(&self) -> bool {
        self.stream_stats.is_some()
    }

    /// Squared-distance threshold `chi2_{D, 1 - beta}`.
    pub fn novelty_threshold(&self) -> f64 {
        self.threshold
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(IgmnError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        match x.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(IgmnError::NonFinite { index }),
            None => Ok(()),
        }
    }

    fn sp_total(&self) -> f64 {
        self.components.iter().map(|c| c.sp).sum()
    }

    /// Prior `p(j) = sp_j / sum sp`.
    pub fn prior(&self, j: usize) -> f64 {
        self.components[j].sp / self.sp_total()
    }

    pub fn priors(&self) -> Vec<f64> {
        let total = self.sp_total();
        self.components.iter().map(|c| c.sp / total).collect()
    }

    fn work_per_component(&self) -> usize {
        match self.config.backend {
            Backend::Fast => self.dim * self.dim,
            Backend::Reference => self.dim * self.dim * self.dim,
        }
    }

    /// Squared Mahalanobis distance of `x` to every component.
    pub fn mahalanobis_all(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(par::map(&self.components, self.dim * self.dim, |c| c.mahalanobis_sq(x)))
    }

    /// Posterior `p(j | x)` for every component.
    pub fn posteriors(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(IgmnError::EmptyModel);
        }
        let d2 = self.mahalanobis_all(x)?;
        Ok(self.posteriors_from_d2(&d2))
    }

    fn posteriors_from_d2(&self, d2: &[f64]) -> Vec<f64> {
        let log_w: Vec<f64> = self
            .components
            .iter()
            .zip(d2)
            .map(|(c, &d)| c.log_density_from_d2(d) + c.sp.ln())
            .collect();
        normalize_log_weights(&log_w).unwrap_or_else(|| self.priors())
    }

    /// Whether `x` lies inside the novelty radius of some component.
    pub fn accepts(&self, x: &[f64]) -> Result<bool> {
        if self.is_empty() {
            return Ok(false);
        }
        let d2 = self.mahalanobis_all(x)?;
        Ok(self.accepts_d2(&d2))
    }

    fn accepts_d2(&self, d2: &[f64]) -> bool {
        d2.iter().any(|&d| d < self.threshold)
    }

    /// Updates every component with `x`, weighted by its posterior.
    pub fn update_all(&mut self, x: &[f64]) -> Result<()> {
        if self.is_empty() {
            return Err(IgmnError::EmptyModel);
        }
        let d2 = self.mahalanobis_all(x)?;
        self.update_with_d2(x, &d2)
    }

    fn update_with_d2(&mut self, x: &[f64], d2: &[f64]) -> Result<()> {
        let post = self.posteriors_from_d2(d2);
        let policy = self.config.degenerate_policy;
        let work = self.work_per_component();
        par::try_for_each_mut(&mut self.components, &post, work, |j, c, &p| {
            c.update(x, p, policy).map_err(|e| match e {
                LinalgError::DegenerateUpdate { factor } => IgmnError::Degenerate { component: j, factor },
                source => IgmnError::Numerical { component: j, source },
            })
        })
    }

    /// Appends a component centred on `x`.
    pub fn create_component(&mut self, x: &[f64]) -> Result<()> {
        self.check_point(x)?;
        if let Some(stats) = &self.stream_stats {
            let std = stats.std_vector(self.config.std_floor);
            self.sigma_ini = std.iter().map(|s| self.config.delta * s).collect();
        }
        let comp = match self.config.backend {
            Backend::Fast => GaussianComponent::new_precision(x, &self.sigma_ini),
            Backend::Reference => GaussianComponent::new_covariance(x, &self.sigma_ini)?,
        };
        self.components.push(comp);
        Ok(())
    }

    /// Removes components older than `v_min` whose accumulator is below
    /// `sp_min`. The strongest component always survives.
    pub fn prune(&mut self) -> Vec<usize> {
        let (v_min, sp_min) = (self.config.v_min, self.config.sp_min);
        let mut removed: Vec<usize> = self
            .components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.age > v_min && c.sp < sp_min)
            .map(|(j, _)| j)
            .collect();
        if removed.is_empty() {
            return removed;
        }
        if removed.len() == self.components.len() {
            let keep = self
                .components
                .iter()
                .enumerate()
                .fold(0, |best, (j, c)| if c.sp > self.components[best].sp { j } else { best });
            removed.retain(|&j| j != keep);
        }
        let mut idx = 0;
        self.components.retain(|_| {
            let keep = removed.binary_search(&idx).is_err();
            idx += 1;
            keep
        });
        removed
    }

    /// Learns from a single point; the point is not retained.
    pub fn learn_one(&mut self, x: &[f64]) -> Result<StepReport> {
        self.check_point(x)?;
        if let Some(stats) = &mut self.stream_stats {
            stats.push(x)?;
        }
        let action = if self.is_empty() {
            self.create_component(x)?;
            StepAction::Created
        } else {
            let d2 = self.mahalanobis_all(x)?;
            if self.accepts_d2(&d2) {
                self.update_with_d2(x, &d2)?;
                StepAction::Updated
            } else {
                self.create_component(x)?;
                StepAction::Created
            }
        };
        let removed = self.prune();
        self.points_seen += 1;
        Ok(StepReport { action, removed })
    }

    /// Learns from every point of `stream` in order.
    pub fn learn<'a>(&mut self, stream: impl IntoIterator<Item = &'a [f64]>) -> Result<()> {
        for x in stream {
            self.learn_one(x)?;
        }
        Ok(())
    }
}

fn novelty_threshold(dim: usize, beta: f64) -> Result<f64> {
    let dof = u32::try_from(dim).map_err(|_| IgmnError::InvalidConfig("dimension too large".into()))?;
    Ok(chi2_quantile(dof, 1.0 - beta)?)
}

/// Normalizes log-weights with the max-shift trick. `None` when no weight is
/// finite.
pub(crate) fn normalize_log_weights(log_w: &[f64]) -> Option<Vec<f64>> {
    let max = log_w
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let w: Vec<f64> = log_w
        .iter()
        .map(|&v| if v.is_nan() { 0.0 } else { (v - max).exp() })
        .collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    Some(w.into_iter().map(|v| v / total).collect())
}
