//! Nonnegative, symmetric, bounded pair potentials with finite range and a
//! repulsion constant, together with a randomized checker for those claims.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Assumption, Error, Result};
use crate::geometry::PartitionSpec;
use crate::rng::StreamSeed;

/// Serializable choice of a built-in potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    /// `phi = 0`: the free gas.
    Zero,
    /// `c * 1{|x - y| <= R}`.
    HardRange { c: f64 },
    /// `c * max(0, 1 - (|x - y| / width)^2)^2`; `width` defaults to `R`.
    Bump { c: f64, width: Option<f64> },
}

type Evaluator = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Profile {
    Zero,
    HardRange { c: f64, range2: f64 },
    Bump { c: f64, width2: f64 },
    Custom(Evaluator),
}

/// A pair potential with its certified constants: sup norm, range `R` and
/// repulsion constant `A_delta` at the partition's `delta`.
#[derive(Clone)]
pub struct PairPotential {
    profile: Profile,
    sup_norm: f64,
    range: f64,
    repulsion: f64,
    delta: f64,
}

impl fmt::Debug for PairPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.profile {
            Profile::Zero => "zero".to_string(),
            Profile::HardRange { c, .. } => format!("hard_range(c={c})"),
            Profile::Bump { c, width2 } => format!("bump(c={c}, width={})", width2.sqrt()),
            Profile::Custom(_) => "custom".to_string(),
        };
        f.debug_struct("PairPotential")
            .field("kind", &kind)
            .field("sup_norm", &self.sup_norm)
            .field("range", &self.range)
            .field("repulsion", &self.repulsion)
            .finish()
    }
}

fn positive(name: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be positive and finite, got {x}")))
    }
}

impl PairPotential {
    pub fn zero(spec: &PartitionSpec) -> Self {
        PairPotential {
            profile: Profile::Zero,
            sup_norm: 0.0,
            range: spec.range(),
            repulsion: 0.0,
            delta: spec.delta(),
        }
    }

    /// `c * 1{|x - y| <= R}`. Repulsion needs `delta <= R`.
    pub fn hard_range(c: f64, spec: &PartitionSpec) -> Result<Self> {
        positive("c", c)?;
        let (r, delta) = (spec.range(), spec.delta());
        if delta > r {
            return Err(Error::AssumptionViolated {
                assumption: Assumption::Repulsion,
                detail: format!("hard-range potential vanishes on ({r}, {delta}] but delta = {delta} > R = {r}"),
            });
        }
        Ok(PairPotential {
            profile: Profile::HardRange { c, range2: r * r },
            sup_norm: c,
            range: r,
            repulsion: c,
            delta,
        })
    }

    /// `c * max(0, 1 - (|x - y| / width)^2)^2`, declared with range `R` of
    /// the partition. A width beyond `R` is accepted here and caught by
    /// [`check_assumptions`](Self::check_assumptions).
    pub fn bump(c: f64, width: f64, spec: &PartitionSpec) -> Result<Self> {
        positive("c", c)?;
        positive("width", width)?;
        let delta = spec.delta();
        if delta >= width {
            return Err(Error::AssumptionViolated {
                assumption: Assumption::Repulsion,
                detail: format!("bump of width {width} vanishes at distance delta = {delta}"),
            });
        }
        let a = c * (1.0 - (delta / width).powi(2)).powi(2);
        Ok(PairPotential {
            profile: Profile::Bump { c, width2: width * width },
            sup_norm: c,
            range: spec.range(),
            repulsion: a,
            delta,
        })
    }

    /// A user-supplied potential with claimed constants; see
    /// [`check_assumptions`](Self::check_assumptions).
    pub fn custom(
        f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        sup_norm: f64,
        repulsion: f64,
        spec: &PartitionSpec,
    ) -> Result<Self> {
        positive("sup_norm", sup_norm)?;
        positive("repulsion", repulsion)?;
        Ok(PairPotential {
            profile: Profile::Custom(Arc::new(f)),
            sup_norm,
            range: spec.range(),
            repulsion,
            delta: spec.delta(),
        })
    }

    pub fn from_kind(kind: &PotentialKind, spec: &PartitionSpec) -> Result<Self> {
        match *kind {
            PotentialKind::Zero => Ok(PairPotential::zero(spec)),
            PotentialKind::HardRange { c } => PairPotential::hard_range(c, spec),
            PotentialKind::Bump { c, width } => PairPotential::bump(c, width.unwrap_or(spec.range()), spec),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.profile, Profile::Zero)
    }
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }
    pub fn range(&self) -> f64 {
        self.range
    }
    /// `A_delta`.
    pub fn repulsion(&self) -> f64 {
        self.repulsion
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.profile {
            Profile::Zero => 0.0,
            Profile::HardRange { c, range2 } => {
                if dist2(x, y) <= *range2 {
                    *c
                } else {
                    0.0
                }
            }
            Profile::Bump { c, width2 } => {
                let t = 1.0 - dist2(x, y) / width2;
                if t > 0.0 {
                    c * t * t
                } else {
                    0.0
                }
            }
            Profile::Custom(f) => f(x, y),
        }
    }

    /// Randomized check of boundedness, symmetry, finite range and
    /// repulsion: `trials` random pairs at distances spread over
    /// `[0, 3R]` plus deterministic probes just beyond `R`.
    pub fn check_assumptions(&self, d: usize, trials: usize, seed: StreamSeed) -> Result<()> {
        let mut rng = seed.rng();
        let r = self.range;
        let mut probes: Vec<f64> = (1..=40).map(|k| r * (1.0 + 2f64.powi(-k))).collect();
        probes.extend((1..=24).map(|j| r * (1.0 + j as f64 / 8.0)));
        probes.extend([0.0, self.delta * 0.5, self.delta]);
        let n_random = trials;
        for t in 0..probes.len() + n_random {
            let dist = if t < probes.len() {
                probes[t]
            } else {
                match t % 3 {
                    0 => rng.random::<f64>() * self.delta,
                    1 => self.delta + rng.random::<f64>() * (r - self.delta).max(0.0),
                    _ => r + rng.random::<f64>() * 2.0 * r,
                }
            };
            let x: Vec<f64> = (0..d).map(|_| (rng.random::<f64>() - 0.5) * 6.0 * r).collect();
            let u = unit_vector(d, &mut rng);
            let y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + dist * b).collect();
            self.check_pair(&x, &y)?;
        }
        Ok(())
    }

    fn check_pair(&self, x: &[f64], y: &[f64]) -> Result<()> {
        let fxy = self.eval(x, y);
        let fyx = self.eval(y, x);
        let dist = dist2(x, y).sqrt();
        let tol = 1e-12 * self.sup_norm.max(f64::MIN_POSITIVE);
        if !(fxy.is_finite() && fxy >= 0.0 && fxy <= self.sup_norm + tol) {
            return Err(Error::AssumptionViolated {
                assumption: Assumption::Bounded,
                detail: format!("phi = {fxy} at distance {dist}, sup_norm = {}", self.sup_norm),
            });
        }
        if (fxy - fyx).abs() > tol {
            return Err(Error::AssumptionViolated {
                assumption: Assumption::Symmetric,
                detail: format!("phi(x,y) = {fxy} but phi(y,x) = {fyx} at x = {x:?}, y = {y:?}"),
            });
        }
        if dist > self.range && fxy > 0.0 {
            return Err(Error::AssumptionViolated {
                assumption: Assumption::FiniteRange,
                detail: format!("phi = {fxy} > 0 at distance {dist} > R = {}", self.range),
            });
        }
        if !self.is_zero() && dist <= self.delta && fxy < self.repulsion * (1.0 - 1e-12) {
            return Err(Error::AssumptionViolated {
                assumption: Assumption::Repulsion,
                detail: format!("phi = {fxy} < A = {} at distance {dist} <= delta = {}", self.repulsion, self.delta),
            });
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub(crate) fn unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = z.iter().map(|a: &f64| a * a).sum::<f64>().sqrt();
        if n > 1e-300 {
            return z.into_iter().map(|a| a / n).collect();
        }
    }
}
