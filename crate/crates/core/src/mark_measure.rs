//! The velocity-mark measure `lambda(dv) = |v|^{-alpha} e^{-|v|^beta} dv` on
//! `R^d \ {0}`.
//!
//! The measure has infinite total mass, so only its restriction to
//! `{|v| > eps_trunc}` is sampled. Every radial quantity reduces to
//! `S_{d-1} int r^{p-1} e^{-r^beta} K(r) dr` for some kernel `K`; these
//! integrals are evaluated in three pieces: a power series on `[0, r0]`,
//! log-scale Gauss–Kronrod on `[r0, 1]` and a mapped semi-infinite rule on
//! `[1, inf)`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::unit_ball_volume;
use crate::quadrature::{integrate_log_scale, integrate_to_infinity, Tolerance};

/// Number of knots in the inverse-CDF table for the mark radius.
pub const TABLE_KNOTS: usize = 2048;

pub const DEFAULT_EPS_TRUNC: f64 = 1e-3;

const INNER_TOL: f64 = 1e-11;

/// Surface area `S_{d-1}` of the unit sphere in R^d.
pub fn sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}

/// Direction law of the sampled marks.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkDirection {
    /// Uniform on the unit sphere: the measure `lambda` itself.
    Isotropic,
    /// Every mark is a positive multiple of this unit vector (the
    /// positive-mark regime). Radial law unchanged.
    Fixed(Vec<f64>),
}

#[derive(Debug)]
struct RadialTable {
    log_r: Vec<f64>,
    cdf: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MarkMeasure {
    d: usize,
    alpha: f64,
    beta: f64,
    eps_trunc: f64,
    direction: MarkDirection,
    truncated_mass: f64,
    table: Arc<RadialTable>,
}

impl MarkMeasure {
    /// Isotropic mark measure with exponents `alpha in [d, d+1)`, `beta > 0`.
    pub fn new(d: usize, alpha: f64, beta: f64, eps_trunc: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::param("d", "dimension must be at least 1"));
        }
        let df = d as f64;
        if !(alpha >= df && alpha < df + 1.0) {
            return Err(Error::param("alpha_mark", format!("must lie in [d, d+1) = [{df}, {}), got {alpha}", df + 1.0)));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::param("beta_mark", format!("must be positive, got {beta}")));
        }
        if !(eps_trunc.is_finite() && eps_trunc > 0.0) {
            return Err(Error::param("eps_trunc", format!("must be positive, got {eps_trunc}")));
        }
        let mut mm = MarkMeasure {
            d,
            alpha,
            beta,
            eps_trunc,
            direction: MarkDirection::Isotropic,
            truncated_mass: 0.0,
            table: Arc::new(RadialTable {
                log_r: Vec::new(),
                cdf: Vec::new(),
            }),
        };
        mm.truncated_mass = mm.tail_mass(eps_trunc)?;
        mm.table = Arc::new(mm.build_table()?);
        Ok(mm)
    }

    /// Switch to the positive-mark regime along `direction` (normalised).
    pub fn with_direction(mut self, direction: &[f64]) -> Result<Self> {
        if direction.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: direction.len(),
            });
        }
        let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::param("mark_direction", "must be a finite nonzero vector"));
        }
        self.direction = MarkDirection::Fixed(direction.iter().map(|x| x / norm).collect());
        Ok(self)
    }

    pub fn isotropic(mut self) -> Self {
        self.direction = MarkDirection::Isotropic;
        self
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn eps_trunc(&self) -> f64 {
        self.eps_trunc
    }
    pub fn direction(&self) -> &MarkDirection {
        &self.direction
    }
    pub fn is_positive_regime(&self) -> bool {
        matches!(self.direction, MarkDirection::Fixed(_))
    }

    /// `lambda({|v| > eps_trunc})`, the intensity of sampled marks per unit volume.
    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    /// `lambda({|v| > eps})`.
    pub fn tail_mass(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(Error::param("eps", format!("tail mass is infinite for eps <= 0 (got {eps})")));
        }
        Ok(sphere_area(self.d) * self.radial(self.d as f64 - self.alpha, eps, f64::INFINITY)?)
    }

    /// `int |v|^n lambda(dv)`.
    pub fn moment(&self, n: u32) -> Result<f64> {
        let p = n as f64 + self.d as f64 - self.alpha;
        if p <= 0.0 {
            return Err(Error::Divergent(format!(
                "moment of order {n} diverges at the origin (n + d - alpha = {p})"
            )));
        }
        Ok(sphere_area(self.d) * self.radial(p, 0.0, f64::INFINITY)?)
    }

    /// `int_{|v| <= eps} |v|^n lambda(dv)`: the part discarded by truncation.
    pub fn moment_below(&self, n: u32, eps: f64) -> Result<f64> {
        let p = n as f64 + self.d as f64 - self.alpha;
        if p <= 0.0 {
            return Err(Error::Divergent(format!("moment of order {n} diverges at the origin")));
        }
        Ok(sphere_area(self.d) * self.radial(p, 0.0, eps)?)
    }

    /// `int_{|v| > eps_trunc} |v|^n lambda(dv)`: moments of the sampled part.
    pub fn moment_above(&self, n: u32) -> Result<f64> {
        let p = n as f64 + self.d as f64 - self.alpha;
        Ok(sphere_area(self.d) * self.radial(p, self.eps_trunc, f64::INFINITY)?)
    }

    /// CDF of the radius `|v|` under the normalised truncated measure,
    /// computed by quadrature (independent of the sampling table).
    pub fn radial_cdf(&self, r: f64) -> f64 {
        if r <= self.eps_trunc {
            return 0.0;
        }
        let inner = self
            .radial(self.d as f64 - self.alpha, self.eps_trunc, r)
            .unwrap_or(f64::NAN);
        (inner * sphere_area(self.d) / self.truncated_mass).min(1.0)
    }

    /// Draw one mark from the normalised restriction of `lambda` to
    /// `{|v| > eps_trunc}` (or its positive-regime image).
    pub fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let r = self.sample_radius(rng);
        match &self.direction {
            MarkDirection::Fixed(e) => e.iter().map(|c| c * r).collect(),
            MarkDirection::Isotropic => {
                if self.d == 1 {
                    return vec![if rng.random::<bool>() { r } else { -r }];
                }
                loop {
                    let z: Vec<f64> = (0..self.d).map(|_| StandardNormal.sample(rng)).collect();
                    let n = z.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
                    if n > 1e-300 {
                        return z.into_iter().map(|x| x / n * r).collect();
                    }
                }
            }
        }
    }

    pub fn sample_radius<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let t = &self.table;
        loop {
            let u: f64 = rng.random();
            let i = t.cdf.partition_point(|&c| c <= u);
            let r = if i == 0 {
                t.log_r[0].exp()
            } else if i >= t.cdf.len() {
                t.log_r[t.log_r.len() - 1].exp()
            } else {
                let (c0, c1) = (t.cdf[i - 1], t.cdf[i]);
                let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
                (t.log_r[i - 1] + w * (t.log_r[i] - t.log_r[i - 1])).exp()
            };
            if r > self.eps_trunc {
                return r;
            }
        }
    }

    fn build_table(&self) -> Result<RadialTable> {
        let eps = self.eps_trunc;
        let r_max = (eps.powf(self.beta) + 50.0).powf(1.0 / self.beta);
        let (lo, hi) = (eps.ln(), r_max.ln());
        let step = (hi - lo) / (TABLE_KNOTS - 1) as f64;
        let log_r: Vec<f64> = (0..TABLE_KNOTS).map(|i| lo + step * i as f64).collect();
        let p = self.d as f64 - self.alpha;
        let beta = self.beta;
        let density = move |r: f64| r.powf(p - 1.0) * (-r.powf(beta)).exp();
        let norm = self.truncated_mass / sphere_area(self.d);
        let mut cdf = Vec::with_capacity(TABLE_KNOTS);
        cdf.push(0.0);
        let mut acc = 0.0;
        for w in log_r.windows(2) {
            let seg = integrate_log_scale(density, w[0].exp(), w[1].exp(), Tolerance::relative(INNER_TOL).with_abs(1e-18 * norm))?;
            acc += seg.value;
            cdf.push((acc / norm).min(1.0));
        }
        Ok(RadialTable { log_r, cdf })
    }

    /// `int_a^b r^{p-1} e^{-r^beta} dr` for `0 <= a < b <= inf`.
    fn radial(&self, p: f64, a: f64, b: f64) -> Result<f64> {
        if !(b > a) {
            return Ok(0.0);
        }
        let beta = self.beta;
        let f = move |r: f64| {
            if r == 0.0 {
                return 0.0;
            }
            ((p - 1.0) * r.ln() - r.powf(beta)).exp()
        };
        let tol = Tolerance::relative(INNER_TOL);
        let mut total = 0.0;
        if a < 1.0 {
            let top = b.min(1.0);
            if a == 0.0 {
                if p <= 0.0 {
                    return Err(Error::Divergent(format!("r^{} is not integrable at 0", p - 1.0)));
                }
                total += lower_incomplete_series(p, beta, top);
            } else {
                total += integrate_log_scale(f, a, top, tol)?.value;
            }
        }
        if b > 1.0 {
            let start = a.max(1.0);
            total += if b.is_infinite() {
                integrate_to_infinity(f, start, tol)?.value
            } else {
                crate::quadrature::integrate(f, start, b, tol)?.value
            };
        }
        Ok(total)
    }

    /// `log Psi^h(r) = int (e^{<h,v> r} - 1) lambda(dv)` over the full
    /// (untruncated) measure, or its positive-regime image.
    pub fn log_psi(&self, h: &[f64], r: f64) -> Result<f64> {
        self.log_psi_tol(h, r, INNER_TOL)
    }

    /// `Psi^h(r)`.
    pub fn psi(&self, h: &[f64], r: f64) -> Result<f64> {
        Ok(self.log_psi(h, r)?.exp())
    }

    pub fn log_psi_tol(&self, h: &[f64], r: f64, rel_tol: f64) -> Result<f64> {
        if h.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: h.len(),
            });
        }
        let kernel = match &self.direction {
            MarkDirection::Isotropic => {
                let s = h.iter().map(|x| x * x).sum::<f64>().sqrt() * r.abs();
                Kernel::SphereMean {
                    s,
                    b: self.d as f64 / 2.0,
                }
            }
            MarkDirection::Fixed(e) => Kernel::Linear {
                s: h.iter().zip(e).map(|(a, b)| a * b).sum::<f64>() * r,
            },
        };
        self.kernel_integral(kernel, rel_tol)
    }

    /// `int (e^{c |v|^2} - 1) lambda(dv)`: the Laplace exponent with a
    /// quadratic exponent in the mark.
    pub fn log_psi_quadratic(&self, c: f64) -> Result<f64> {
        self.kernel_integral(Kernel::Quadratic { c }, INNER_TOL)
    }

    fn kernel_integral(&self, kernel: Kernel, rel_tol: f64) -> Result<f64> {
        if kernel.is_zero() {
            return Ok(0.0);
        }
        kernel.check_integrable(self.beta)?;
        let p0 = self.d as f64 - self.alpha;
        let beta = self.beta;
        let r0 = (1.0 / kernel.scale()).min(1.0);
        let mut total = 0.0;

        // [0, r0]: term-by-term series of K(r) - 1
        let mut k = 1usize;
        let mut coef_log = 0.0;
        let mut piece = 0.0;
        loop {
            let (c, e) = kernel.series_term(k, &mut coef_log);
            let term = c * lower_incomplete_series(p0 + e, beta, r0);
            piece += term;
            if k > 4 && term.abs() <= 1e-18 * piece.abs().max(1e-300) {
                break;
            }
            if k > 400 {
                break;
            }
            k += 1;
        }
        total += piece;

        let integrand = |r: f64| kernel.weighted(r, p0, beta);
        let tol = Tolerance::relative(rel_tol).with_abs(1e-300);
        if r0 < 1.0 {
            total += integrate_log_scale(integrand, r0, 1.0, tol)?.value;
        }
        total += integrate_to_infinity(integrand, 1.0, tol)?.value;
        Ok(sphere_area(self.d) * total)
    }
}

#[derive(Clone, Copy, Debug)]
enum Kernel {
    /// `e^{s r} - 1` (positive-mark regime).
    Linear { s: f64 },
    /// sphere average of `e^{s r u_1}` minus one: `0F1(; b; s^2 r^2 / 4) - 1`.
    SphereMean { s: f64, b: f64 },
    /// `e^{c r^2} - 1`.
    Quadratic { c: f64 },
}

impl Kernel {
    fn is_zero(&self) -> bool {
        match *self {
            Kernel::Linear { s } | Kernel::SphereMean { s, .. } => s == 0.0,
            Kernel::Quadratic { c } => c == 0.0,
        }
    }

    fn scale(&self) -> f64 {
        match *self {
            Kernel::Linear { s } | Kernel::SphereMean { s, .. } => s.abs(),
            Kernel::Quadratic { c } => c.abs().sqrt(),
        }
    }

    fn check_integrable(&self, beta: f64) -> Result<()> {
        match *self {
            Kernel::Linear { s } | Kernel::SphereMean { s, .. } => {
                let grows = s > 0.0 || matches!(self, Kernel::SphereMean { .. });
                if grows && (beta < 1.0 || (beta == 1.0 && s.abs() >= 1.0)) {
                    return Err(Error::DivergentLaplaceExponent(format!(
                        "exponent grows like e^({} |v|) against e^(-|v|^{beta})",
                        s.abs()
                    )));
                }
            }
            Kernel::Quadratic { c } => {
                if c > 0.0 && (beta < 2.0 || (beta == 2.0 && c >= 1.0)) {
                    return Err(Error::DivergentLaplaceExponent(format!(
                        "exponent e^({c} |v|^2) is not dominated by e^(-|v|^{beta}); need c < 1 when beta = 2"
                    )));
                }
            }
        }
        Ok(())
    }

    /// k-th term (k >= 1) of `K(r) - 1 = sum_k coef_k r^{e_k}`, returned as
    /// `(coef_k * r0-independent, e_k)`. `log_state` carries the running
    /// log-coefficient.
    fn series_term(&self, k: usize, log_state: &mut f64) -> (f64, f64) {
        let kf = k as f64;
        match *self {
            Kernel::Linear { s } => {
                *log_state += s.abs().ln() - kf.ln();
                let sign = if s < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
                (sign * log_state.exp(), kf)
            }
            Kernel::SphereMean { s, b } => {
                *log_state += 2.0 * (s.abs() / 2.0).ln() - (b + kf - 1.0).ln() - kf.ln();
                (log_state.exp(), 2.0 * kf)
            }
            Kernel::Quadratic { c } => {
                *log_state += c.abs().ln() - kf.ln();
                let sign = if c < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
                (sign * log_state.exp(), 2.0 * kf)
            }
        }
    }

    /// `r^{p0-1} e^{-r^beta} (K(r) - 1)`, evaluated without overflow.
    fn weighted(&self, r: f64, p0: f64, beta: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        let base = (p0 - 1.0) * r.ln() - r.powf(beta);
        match *self {
            Kernel::Linear { s } => exp_minus_one_weighted(s * r, base),
            Kernel::Quadratic { c } => exp_minus_one_weighted(c * r * r, base),
            Kernel::SphereMean { s, b } => (base + log_hyp0f1_minus_one(b, s.abs() * r)).exp(),
        }
    }
}

/// `e^{base} (e^x - 1)`.
fn exp_minus_one_weighted(x: f64, base: f64) -> f64 {
    if x < 30.0 {
        base.exp() * x.exp_m1()
    } else {
        (base + x).exp() - base.exp()
    }
}

/// `ln(0F1(; b; z^2/4) - 1)` for `z > 0`, by log-sum-exp over the series.
fn log_hyp0f1_minus_one(b: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let q = 2.0 * (z / 2.0).ln();
    let mut lt = q - b.ln();
    let mut terms = vec![lt];
    let mut max = lt;
    let mut k = 1.0;
    loop {
        lt += q - (b + k).ln() - (k + 1.0).ln();
        terms.push(lt);
        if lt > max {
            max = lt;
        }
        if lt < max - 45.0 && q < (b + k).ln() + (k + 1.0).ln() {
            break;
        }
        k += 1.0;
        if k > 1e6 {
            break;
        }
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `int_0^x r^{q-1} e^{-r^beta} dr` for `q > 0`, `0 < x <= 1`, by the
/// alternating series `sum_k (-1)^k x^{q+k beta} / (k! (q + k beta))`.
fn lower_incomplete_series(q: f64, beta: f64, x: f64) -> f64 {
    let lx = x.ln();
    let mut sum = 0.0;
    let mut log_fact = 0.0;
    for k in 0..500 {
        let kf = k as f64;
        if k > 0 {
            log_fact += kf.ln();
        }
        let e = q + kf * beta;
        let mag = (e * lx - log_fact).exp() / e;
        let term = if k % 2 == 0 { mag } else { -mag };
        sum += term;
        if k > 2 && mag <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}
