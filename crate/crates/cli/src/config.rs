//! Experiment configuration: a TOML file with `[model]`, `[run]` and
//! `[output]` tables. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use conegibbs::configuration::Configuration;
use conegibbs::estimates::{default_epsilon, HOLDER_DELTA};
use conegibbs::geometry::{CubeIndex, PartitionSpec, Region};
use conegibbs::interaction::EnergyOptions;
use conegibbs::mark_measure::{MarkMeasure, DEFAULT_EPS_TRUNC};
use conegibbs::potential::{PairPotential, PotentialKind};
use conegibbs::reference_measure::PoissonSpec;
use conegibbs::rng::StreamSeed;
use conegibbs::specification::mcmc::McmcOptions;
use conegibbs::specification::{Event, GibbsKernel};
use conegibbs::test_function::TestFunction;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub delta: f64,
    /// Interaction range `R`.
    pub range: f64,
    pub potential: PotentialKind,
    pub alpha_mark: f64,
    pub beta_mark: f64,
    #[serde(default = "default_eps_trunc")]
    pub eps_trunc: f64,
    /// Fixed mark direction (positive-mark regime); isotropic when absent.
    #[serde(default)]
    pub mark_direction: Option<Vec<f64>>,
    #[serde(default)]
    pub exclude_diagonal: bool,
    /// Random pairs used to check the potential's assumptions.
    #[serde(default = "default_fuzz_trials")]
    pub fuzz_trials: usize,
}

fn default_eps_trunc() -> f64 {
    DEFAULT_EPS_TRUNC
}
fn default_fuzz_trials() -> usize {
    20_000
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Laplace,
    Moments,
    Hamiltonian,
    Partition,
    Consistency,
    Dlr,
    Lyapunov,
    Tempered,
    All,
}

impl Suite {
    pub const EACH: [Suite; 8] = [
        Suite::Laplace,
        Suite::Moments,
        Suite::Hamiltonian,
        Suite::Partition,
        Suite::Consistency,
        Suite::Dlr,
        Suite::Lyapunov,
        Suite::Tempered,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Laplace => "laplace",
            Suite::Moments => "moments",
            Suite::Hamiltonian => "hamiltonian",
            Suite::Partition => "partition",
            Suite::Consistency => "consistency",
            Suite::Dlr => "dlr",
            Suite::Lyapunov => "lyapunov",
            Suite::Tempered => "tempered",
            Suite::All => "all",
        }
    }

    /// The suites to execute, in report order.
    pub fn expand(self) -> Vec<Suite> {
        if self == Suite::All {
            Suite::EACH.to_vec()
        } else {
            vec![self]
        }
    }

    /// Fixed stream id, so a suite's output does not depend on which other
    /// suites run alongside it.
    pub fn stream(self) -> u64 {
        Suite::EACH.iter().position(|s| *s == self).unwrap_or(99) as u64 + 1
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Suite::EACH
            .iter()
            .chain([Suite::All].iter())
            .find(|x| x.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown suite `{s}`; expected one of laplace, moments, hamiltonian, partition, consistency, dlr, lyapunov, tempered, all"))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum XiSource {
    Empty,
    /// A configuration in the text format.
    File { path: PathBuf },
    /// A draw from the reference measure outside `Lambda`.
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Rejection,
    Mcmc,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplaceFixture {
    pub h: Vec<f64>,
    pub psi: TestFunction,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub suite: Suite,
    /// Cube indices of `Lambda`.
    pub lambda: Vec<Vec<i64>>,
    #[serde(default = "default_xi")]
    pub xi: XiSource,
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sampler")]
    pub sampler: Sampler,
    #[serde(default)]
    pub mcmc: McmcOptions,
    /// Rejection trials per draw before giving up.
    #[serde(default = "default_budget")]
    pub trial_budget: u64,
    /// Young parameter of the exponential bounds; defaults to saturating
    /// `eps ||phi|| < A / 2`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_alpha_temp")]
    pub alpha_temp: f64,
    /// Halo rings for the DLR residual and the growing-volume checks.
    #[serde(default = "default_rings")]
    pub rings: Vec<usize>,
    /// Event for the consistency and DLR suites.
    #[serde(default)]
    pub event: Option<Event>,
    /// Inner volume for the consistency suite; the middle cube of `Lambda`
    /// when absent.
    #[serde(default)]
    pub inner: Option<Vec<Vec<i64>>>,
    #[serde(default)]
    pub laplace: Option<Vec<LaplaceFixture>>,
    #[serde(default = "default_moment_order")]
    pub moment_order: u32,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_decay_level")]
    pub decay_level: f64,
}

fn default_xi() -> XiSource {
    XiSource::Empty
}
fn default_sampler() -> Sampler {
    Sampler::Rejection
}
fn default_budget() -> u64 {
    conegibbs::specification::DEFAULT_TRIAL_BUDGET
}
fn default_alpha_temp() -> f64 {
    0.1
}
fn default_rings() -> Vec<usize> {
    vec![1, 2, 3]
}
fn default_moment_order() -> u32 {
    2
}
fn default_thresholds() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}
fn default_decay_level() -> f64 {
    0.01
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    /// Any of `json`, `csv`.
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}
fn default_formats() -> Vec<String> {
    vec!["json".into(), "csv".into()]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("{field}: {source}")]
    Model {
        field: &'static str,
        source: conegibbs::Error,
    },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

fn model(field: &'static str) -> impl FnOnce(conegibbs::Error) -> ConfigError {
    move |source| ConfigError::Model { field, source }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Check every reachable precondition and build the model objects.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let m = &self.model;
        let r = &self.run;
        let spec = PartitionSpec::new(m.d, m.delta, m.range).map_err(model("model"))?;
        let mut mm = MarkMeasure::new(m.d, m.alpha_mark, m.beta_mark, m.eps_trunc).map_err(model("model.alpha_mark/beta_mark/eps_trunc"))?;
        if let Some(dir) = &m.mark_direction {
            mm = mm.with_direction(dir).map_err(model("model.mark_direction"))?;
        }
        let potential = PairPotential::from_kind(&m.potential, &spec).map_err(model("model.potential"))?;
        if m.fuzz_trials == 0 {
            return Err(invalid("model.fuzz_trials", "must be positive"));
        }
        potential
            .check_assumptions(m.d, m.fuzz_trials, StreamSeed::new(r.seed).child(0))
            .map_err(model("model.potential"))?;

        if r.lambda.is_empty() {
            return Err(invalid("run.lambda", "must list at least one cube"));
        }
        let lambda = region_from(&r.lambda, m.d, "run.lambda")?;
        if r.trial_budget == 0 {
            return Err(invalid("run.trial_budget", "must be positive"));
        }
        r.mcmc.validate().map_err(model("run.mcmc"))?;
        if r.rings.is_empty() || r.rings.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("run.rings", "must be a non-empty increasing list"));
        }
        if r.thresholds.is_empty() || r.thresholds.windows(2).any(|w| w[1] < w[0]) || r.thresholds.iter().any(|t| !(*t >= 0.0)) {
            return Err(invalid("run.thresholds", "must be a non-empty non-decreasing list of nonnegative numbers"));
        }
        if !(r.decay_level > 0.0 && r.decay_level <= 1.0) {
            return Err(invalid("run.decay_level", "must lie in (0, 1]"));
        }
        let epsilon = r.epsilon.unwrap_or_else(|| default_epsilon(&potential));
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid("run.epsilon", format!("must be positive, got {epsilon}")));
        }
        let suites = r.suite.expand();
        if suites.contains(&Suite::Tempered) && !potential.is_zero() {
            if epsilon * potential.sup_norm() >= HOLDER_DELTA * potential.repulsion() {
                return Err(invalid(
                    "run.epsilon",
                    format!("eps ||phi|| = {} must be below A/2 = {}", epsilon * potential.sup_norm(), HOLDER_DELTA * potential.repulsion()),
                ));
            }
            let theta = spec.range() / spec.edge() + (spec.dim() as f64).sqrt();
            if !(r.alpha_temp > 0.0) || HOLDER_DELTA * (r.alpha_temp * theta).exp() >= 1.0 {
                return Err(invalid(
                    "run.alpha_temp",
                    format!("need 0 < alpha_temp and e^(alpha_temp theta) < 2 with theta = {theta}"),
                ));
            }
        }
        let inner = match &r.inner {
            Some(c) => {
                let inner = region_from(c, m.d, "run.inner")?;
                if !inner.is_subset(&lambda) {
                    return Err(invalid("run.inner", "must be a subset of run.lambda"));
                }
                inner
            }
            None => {
                let cubes: Vec<&CubeIndex> = lambda.iter().collect();
                Region::single(cubes[cubes.len() / 2].clone())
            }
        };
        let laplace = match &r.laplace {
            Some(f) => f.clone(),
            None => default_laplace(&spec, &lambda),
        };
        for f in &laplace {
            if f.h.len() != m.d {
                return Err(invalid("run.laplace", format!("h has length {}, expected {}", f.h.len(), m.d)));
            }
            if f.psi.support(&spec).missing_from(&lambda) > 0 {
                return Err(invalid("run.laplace", "psi must be supported inside run.lambda"));
            }
        }
        for fmt in &self.output.formats {
            if fmt != "json" && fmt != "csv" {
                return Err(invalid("output.formats", format!("unknown format `{fmt}`")));
            }
        }

        let max_ring = *r.rings.last().expect("non-empty");
        let window = spec.grow(&lambda, max_ring + 1);
        let poisson = PoissonSpec::new(mm, lambda.clone(), spec).map_err(model("model"))?;
        let xi = match &r.xi {
            XiSource::Empty => Configuration::empty(spec, window),
            XiSource::Sampled => {
                let ps = poisson.with_region(window.difference(&lambda)).map_err(model("run.xi"))?;
                let outer = ps.sample(&mut StreamSeed::new(r.seed).child(1).rng());
                Configuration::empty(spec, lambda.clone()).glue(&outer)
            }
            XiSource::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
                let xi = Configuration::from_text(&text).map_err(model("run.xi"))?;
                if xi.spec() != &spec {
                    return Err(invalid("run.xi", "boundary file was written for a different partition"));
                }
                xi
            }
        };
        let options = EnergyOptions {
            exclude_diagonal: m.exclude_diagonal,
        };
        let kernel = GibbsKernel::new(poisson, potential, &xi, options)
            .map_err(model("run.xi"))?
            .with_budget(r.trial_budget);
        let event = r.event.clone().unwrap_or(Event::TvMassAtMost {
            region: inner.clone(),
            t: 1.0,
        });
        Ok(Resolved {
            config: self.clone(),
            spec,
            lambda,
            inner,
            xi,
            kernel,
            event,
            epsilon,
            laplace,
            suites,
        })
    }
}

fn region_from(cubes: &[Vec<i64>], d: usize, field: &'static str) -> Result<Region, ConfigError> {
    let mut out = Vec::with_capacity(cubes.len());
    for c in cubes {
        if c.len() != d {
            return Err(invalid(field, format!("cube {c:?} has {} coordinates, expected {d}", c.len())));
        }
        out.push(CubeIndex::new(c));
    }
    let region: Region = out.into_iter().collect();
    if region.len() != cubes.len() {
        return Err(invalid(field, "cubes must be distinct"));
    }
    Ok(region)
}

/// Indicator of `Lambda` with `h = e_1 / 2`, and a tent at the centre of
/// the first cube that fits.
fn default_laplace(spec: &PartitionSpec, lambda: &Region) -> Vec<LaplaceFixture> {
    let d = spec.dim();
    let mut h = vec![0.0; d];
    h[0] = 0.5;
    let mut out = vec![LaplaceFixture {
        h: h.clone(),
        psi: TestFunction::indicator(lambda, 1.0),
    }];
    for k in lambda.iter() {
        if let Ok(t) = TestFunction::tent(spec.cube_center(k), 0.45 * spec.edge(), 1.0) {
            if t.support(spec).is_subset(lambda) {
                out.push(LaplaceFixture { h: h.iter().map(|x| -2.0 * x).collect(), psi: t });
                break;
            }
        }
    }
    out
}

/// A validated configuration with its model objects.
pub struct Resolved {
    pub config: ExperimentConfig,
    pub spec: PartitionSpec,
    pub lambda: Region,
    pub inner: Region,
    /// Boundary condition, with a window covering every grown volume.
    pub xi: Configuration,
    pub kernel: GibbsKernel,
    pub event: Event,
    pub epsilon: f64,
    pub laplace: Vec<LaplaceFixture>,
    pub suites: Vec<Suite>,
}

impl Resolved {
    pub fn seed(&self) -> StreamSeed {
        StreamSeed::new(self.config.run.seed)
    }

    /// Suites need enough draws for a standard error; dumps accept zero.
    pub fn check_runnable(&self) -> Result<(), ConfigError> {
        if self.config.run.n_samples < 100 {
            return Err(invalid("run.n_samples", format!("suites need at least 100 samples, got {}", self.config.run.n_samples)));
        }
        Ok(())
    }
}
