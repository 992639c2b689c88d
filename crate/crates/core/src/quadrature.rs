//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];

// Gauss 7-point weights for nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Tolerance {
            abs: 0.0,
            rel,
            max_intervals: 4000,
        }
    }

    pub fn with_abs(mut self, abs: f64) -> Self {
        self.abs = abs;
        self
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> QuadResult {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    QuadResult {
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

struct Segment {
    a: f64,
    b: f64,
    res: QuadResult,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.res.error == other.res.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.res.error.total_cmp(&other.res.error)
    }
}

/// Integrate `f` over `[a, b]`, bisecting the segment with the largest error
/// until the summed error meets `max(abs, rel * |value|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
        });
    }
    let first = gk15(&f, a, b);
    if !first.value.is_finite() {
        return Err(Error::Quadrature {
            value: first.value,
            error: first.error,
        });
    }
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, res: first });
    let mut total = first;
    loop {
        let target = tol.abs.max(tol.rel * total.value.abs());
        if total.error <= target {
            return Ok(total);
        }
        if heap.len() >= tol.max_intervals {
            // Accept if the remaining error is dominated by roundoff.
            if total.error <= 1e3 * f64::EPSILON * total.value.abs().max(tol.abs) {
                return Ok(total);
            }
            return Err(Error::Quadrature {
                value: total.value,
                error: total.error,
            });
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        let left = gk15(&f, worst.a, mid);
        let right = gk15(&f, mid, worst.b);
        if !(left.value.is_finite() && right.value.is_finite()) {
            return Err(Error::Quadrature {
                value: f64::NAN,
                error: f64::INFINITY,
            });
        }
        total.value += left.value + right.value - worst.res.value;
        total.error += left.error + right.error - worst.res.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            res: left,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            res: right,
        });
        if total.error < 0.0 {
            total.error = heap.iter().map(|s| s.res.error).sum();
            total.value = heap.iter().map(|s| s.res.value).sum();
        }
    }
}

/// Integrate `f` over `[a, inf)` via `x = a + (1 - t) / t`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, tol: Tolerance) -> Result<QuadResult> {
    let g = |t: f64| {
        let x = a + (1.0 - t) / t;
        let v = f(x);
        if v == 0.0 {
            0.0
        } else {
            v / (t * t)
        }
    };
    integrate(g, 0.0, 1.0, tol)
}

/// Integrate `f` over `[a, b]` with `0 < a < b` on a logarithmic scale,
/// `x = e^s`. Suited to integrands with power-law behaviour near `a`.
pub fn integrate_log_scale<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<QuadResult> {
    let g = |s: f64| {
        let x = s.exp();
        f(x) * x
    };
    integrate(g, a.ln(), b.ln(), tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        // Kronrod-15 integrates degree 22 exactly.
        let r = integrate(|x| x.powi(20), 0.0, 1.0, Tolerance::relative(1e-14)).unwrap();
        assert!((r.value - 1.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn exponential_over_interval() {
        let r = integrate(f64::exp, 0.0, 3.0, Tolerance::relative(1e-12)).unwrap();
        assert!((r.value - (3f64.exp() - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn gaussian_tail() {
        // int_0^inf e^{-x^2} dx = sqrt(pi)/2
        let r = integrate_to_infinity(|x| (-x * x).exp(), 0.0, Tolerance::relative(1e-12)).unwrap();
        assert!((r.value - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn log_scale_handles_singular_power() {
        // int_{1e-8}^1 x^{-1/2} dx = 2 (1 - 1e-4)
        let r = integrate_log_scale(|x| x.powf(-0.5), 1e-8, 1.0, Tolerance::relative(1e-12)).unwrap();
        assert!((r.value - 2.0 * (1.0 - 1e-4)).abs() < 1e-11);
    }

    #[test]
    fn empty_interval() {
        let r = integrate(|x| x, 2.0, 2.0, Tolerance::relative(1e-8)).unwrap();
        assert_eq!(r.value, 0.0);
    }
}
