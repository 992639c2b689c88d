//! Monte Carlo summaries and the goodness-of-fit tests used by the checks.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

/// Running mean/variance (Welford), mergeable in any grouping.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        *self = Accumulator { n, mean, m2 };
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (0 for fewer than two values).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            value: self.mean(),
            stderr: self.stderr(),
            n: self.n,
        }
    }
}

impl FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Accumulator::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Self {
        values.iter().copied().collect::<Accumulator>().estimate()
    }

    /// `|self - other| <= sigmas * sqrt(se1^2 + se2^2)` for independent estimates.
    pub fn agrees_with(&self, other: &Estimate, sigmas: f64) -> bool {
        (self.value - other.value).abs() <= sigmas * self.stderr.hypot(other.stderr)
    }
}

/// Neumaier compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Asymptotic Kolmogorov critical value `c(level)` with
/// `P(sqrt(n) D_n > c) = level`.
pub fn kolmogorov_critical(level: f64) -> f64 {
    (-(level / 2.0).ln() / 2.0).sqrt()
}

/// One-sample KS statistic of `samples` against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub critical: f64,
    pub pass: bool,
}

pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F, level: f64) -> TestOutcome {
    let statistic = ks_statistic(samples, cdf);
    let critical = kolmogorov_critical(level) / (samples.len() as f64).sqrt();
    TestOutcome {
        statistic,
        critical,
        pass: statistic <= critical,
    }
}

/// Two-sample KS statistic; ties (discrete data) are handled by evaluating
/// both empirical CDFs after each distinct value.
pub fn ks_two_sample_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

pub fn ks_two_sample(a: &[f64], b: &[f64], level: f64) -> TestOutcome {
    let statistic = ks_two_sample_statistic(a, b);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let critical = kolmogorov_critical(level) * ((n + m) / (n * m)).sqrt();
    TestOutcome {
        statistic,
        critical,
        pass: statistic <= critical,
    }
}

/// Chi-square goodness of fit of integer counts against Poisson(`mean`).
/// Cells are merged from both tails until every expected count is at least 5.
pub fn chi_square_poisson(counts: &[u64], mean: f64, level: f64) -> TestOutcome {
    let n = counts.len() as f64;
    let max = counts.iter().copied().max().unwrap_or(0);
    let law = Poisson::new(mean.max(f64::MIN_POSITIVE)).expect("positive Poisson mean");
    let mut observed = vec![0u64; max as usize + 1];
    for &c in counts {
        observed[c as usize] += 1;
    }
    // Cells 0..=max, with the last cell absorbing the upper tail.
    let mut cells: Vec<(f64, f64)> = (0..=max)
        .map(|k| (observed[k as usize] as f64, n * law.pmf(k)))
        .collect();
    let tail: f64 = 1.0 - (0..=max).map(|k| law.pmf(k)).sum::<f64>();
    if let Some(last) = cells.last_mut() {
        last.1 += n * tail.max(0.0);
    }
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for cell in cells {
        acc.0 += cell.0;
        acc.1 += cell.1;
        if acc.1 >= 5.0 {
            merged.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        match merged.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => merged.push(acc),
        }
    }
    let statistic: f64 = merged
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e).powi(2) / e } else { 0.0 })
        .sum();
    let dof = merged.len().saturating_sub(1).max(1) as f64;
    let critical = ChiSquared::new(dof)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - level);
    TestOutcome {
        statistic,
        critical,
        pass: statistic <= critical,
    }
}

/// Pearson sample correlation (0 when either sample is constant).
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Weighted least-squares slope of `y` against `x` with its standard error.
pub fn weighted_slope(x: &[f64], y: &[f64], se: &[f64]) -> (f64, f64) {
    let w: Vec<f64> = se
        .iter()
        .map(|s| if *s > 0.0 { 1.0 / (s * s) } else { 1e12 })
        .collect();
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(&w).map(|(a, w)| a * w).sum::<f64>() / sw;
    let my = y.iter().zip(&w).map(|(a, w)| a * w).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(a, w)| w * (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, 0.0);
    }
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(&w)
        .map(|((a, b), w)| w * (a - mx) * (b - my))
        .sum();
    (sxy / sxx, (1.0 / sxx).sqrt())
}
