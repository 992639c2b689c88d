//! The marked Poisson reference measure on a bounded volume: atoms at
//! Poisson(`lambda({|v| > eps}) * vol`) uniform positions, i.i.d. marks from
//! the normalised truncated mark measure.

use std::cell::RefCell;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::configuration::{norm, Configuration};
use crate::error::{Error, Result};
use crate::geometry::{CubeIndex, PartitionSpec, Region};
use crate::mark_measure::{MarkDirection, MarkMeasure};
use crate::quadrature::{integrate, Tolerance};
use crate::rng::{replicate, StreamSeed};
use crate::stats::{Accumulator, Estimate};
use crate::test_function::TestFunction;

#[derive(Clone, Debug)]
pub struct PoissonSpec {
    mm: MarkMeasure,
    region: Region,
    spec: PartitionSpec,
    cubes: Vec<CubeIndex>,
}

impl PoissonSpec {
    pub fn new(mm: MarkMeasure, region: Region, spec: PartitionSpec) -> Result<Self> {
        if mm.dim() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                got: mm.dim(),
            });
        }
        if region.iter().any(|k| k.dim() != spec.dim()) {
            return Err(Error::param("region", "cube index of the wrong dimension"));
        }
        let cubes = region.iter().cloned().collect();
        Ok(PoissonSpec { mm, region, spec, cubes })
    }

    /// Same measure on another volume.
    pub fn with_region(&self, region: Region) -> Result<Self> {
        PoissonSpec::new(self.mm.clone(), region, self.spec)
    }

    pub fn mark_measure(&self) -> &MarkMeasure {
        &self.mm
    }
    pub fn region(&self) -> &Region {
        &self.region
    }
    pub fn spec(&self) -> &PartitionSpec {
        &self.spec
    }
    pub fn volume(&self) -> f64 {
        self.spec.volume(&self.region)
    }

    /// Expected number of sampled atoms, `lambda({|v| > eps}) vol(Lambda)`.
    pub fn intensity(&self) -> f64 {
        self.mm.truncated_mass() * self.volume()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let mut cfg = Configuration::empty(self.spec, self.region.clone());
        if self.cubes.is_empty() {
            return cfg;
        }
        let n = Poisson::new(self.intensity()).map(|p| p.sample(rng) as usize).unwrap_or(0);
        for _ in 0..n {
            let (x, k) = self.uniform_position(rng);
            let v = self.mm.sample_mark(rng);
            cfg.push_unchecked(&x, &v, k);
        }
        // Coincident positions have probability zero; regenerate if rounding produced one.
        while let Some(i) = cfg.first_duplicate() {
            let (x, k) = self.uniform_position(rng);
            let v = cfg.mark(i).to_vec();
            cfg.set_atom(i, &x, &v, k);
        }
        cfg
    }

    /// Uniform point of `Lambda` and its cube.
    pub fn uniform_position<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, CubeIndex) {
        let g = self.spec.edge();
        loop {
            let k = &self.cubes[rng.random_range(0..self.cubes.len())];
            let x: Vec<f64> = k.iter().map(|&ki| g * (ki as f64 - 0.5 + rng.random::<f64>())).collect();
            // rounding can push a point onto the upper face
            if self.spec.cube_contains(k, &x) {
                return (x, k.clone());
            }
        }
    }

    pub fn sample_many(&self, n: usize, seed: StreamSeed) -> Vec<Configuration> {
        replicate(n, seed, |rng, _| Ok(self.sample(rng))).expect("Poisson sampling is infallible")
    }

    fn check_h(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.dim(),
                got: h.len(),
            });
        }
        Ok(())
    }

    fn check_support(&self, psi: &TestFunction) -> Result<()> {
        let missing = psi.support(&self.spec).missing_from(&self.region);
        if missing > 0 {
            return Err(Error::param("psi", format!("support leaves the volume ({missing} cube(s) outside)")));
        }
        Ok(())
    }

    /// `int_Lambda log Psi^h(psi(x)) dx` over the full mark measure. Exact
    /// cube-wise factorisation for piecewise-constant `psi`; radial
    /// quadrature for a tent.
    pub fn laplace_exponent(&self, h: &[f64], psi: &TestFunction) -> Result<f64> {
        self.check_h(h)?;
        self.check_support(psi)?;
        if psi.is_zero() || h.iter().all(|&c| c == 0.0) {
            return Ok(0.0);
        }
        match psi {
            TestFunction::Zero => Ok(0.0),
            TestFunction::PerCube { values } => {
                let vol = self.spec.cube_volume();
                let mut s = 0.0;
                for (_, r) in values {
                    s += vol * self.mm.log_psi(h, *r)?;
                }
                Ok(s)
            }
            TestFunction::Tent { radius, height, .. } => {
                // S_{d-1} int_0^radius log Psi(height (1 - s/radius)) s^{d-1} ds
                let d = self.spec.dim() as i32;
                let err = RefCell::new(None);
                let f = |s: f64| match self.mm.log_psi(h, height * (1.0 - s / radius)) {
                    Ok(l) => l * s.powi(d - 1),
                    Err(e) => {
                        err.borrow_mut().get_or_insert(e);
                        0.0
                    }
                };
                let r = integrate(f, 0.0, *radius, Tolerance::relative(1e-10))?;
                if let Some(e) = err.into_inner() {
                    return Err(e);
                }
                Ok(crate::mark_measure::sphere_area(self.spec.dim()) * r.value)
            }
        }
    }

    /// `int_Lambda log Psi^h(psi(x)) dx` by the midpoint rule on `sub^d`
    /// subcells of every support cube. Valid for any `psi`.
    pub fn laplace_exponent_midpoint(&self, h: &[f64], psi: &TestFunction, sub: usize) -> Result<f64> {
        self.check_h(h)?;
        self.check_support(psi)?;
        let d = self.spec.dim();
        let g = self.spec.edge();
        let cell_vol = (g / sub as f64).powi(d as i32);
        let mut total = 0.0;
        for k in psi.support(&self.spec).iter() {
            let (lo, _) = self.spec.cube_bounds(k);
            for flat in 0..sub.pow(d as u32) {
                let mut rem = flat;
                let x: Vec<f64> = (0..d)
                    .map(|i| {
                        let j = rem % sub;
                        rem /= sub;
                        lo[i] + g * (j as f64 + 0.5) / sub as f64
                    })
                    .collect();
                let r = psi.value(&x, k);
                if r != 0.0 {
                    total += cell_vol * self.mm.log_psi(h, r)?;
                }
            }
        }
        Ok(total)
    }

    /// `E exp(<h (x) psi, eta>)` under the full (untruncated) measure.
    pub fn laplace_closed_form(&self, h: &[f64], psi: &TestFunction) -> Result<f64> {
        Ok(self.laplace_exponent(h, psi)?.exp())
    }

    /// Bound on `|log L_full - log L_truncated|` from the discarded marks
    /// `|v| <= eps`: `|h| ||psi|| M_1(<= eps) vol(supp psi) e^{|h| ||psi|| eps}`.
    pub fn truncation_exponent_bound(&self, h: &[f64], psi: &TestFunction) -> Result<f64> {
        let hn = norm(h);
        let sup = psi.sup_norm();
        if hn == 0.0 || sup == 0.0 {
            return Ok(0.0);
        }
        let eps = self.mm.eps_trunc();
        let vol = self.spec.volume(&psi.support(&self.spec));
        Ok(hn * sup * self.mm.moment_below(1, eps)? * vol * (hn * sup * eps).exp())
    }

    /// `|L_full - L_truncated| <= L_full (e^B - 1)`.
    pub fn truncation_certificate(&self, h: &[f64], psi: &TestFunction) -> Result<f64> {
        let b = self.truncation_exponent_bound(h, psi)?;
        Ok(self.laplace_closed_form(h, psi)? * b.exp_m1())
    }

    /// `||Psi^h(psi(.))||_inf`, at least 1 since `psi` vanishes off its support.
    pub fn psi_sup(&self, h: &[f64], psi: &TestFunction) -> Result<f64> {
        let s = psi.sup_norm();
        let mut best: f64 = 1.0;
        let candidates: Vec<f64> = match psi {
            TestFunction::PerCube { values } => values.iter().map(|(_, r)| *r).collect(),
            _ => vec![s, -s],
        };
        for r in candidates {
            best = best.max(self.mm.psi(h, r)?);
        }
        Ok(best)
    }

    /// `n! ||Psi||^n max(1, vol(Lambda))^n`.
    pub fn moment_bound_rhs(&self, h: &[f64], psi: &TestFunction, n: u32) -> Result<f64> {
        let fact: f64 = (1..=n).map(f64::from).product();
        Ok(fact * self.psi_sup(h, psi)?.powi(n as i32) * self.volume().max(1.0).powi(n as i32))
    }

    pub fn is_positive_regime(&self) -> bool {
        matches!(self.mm.direction(), MarkDirection::Fixed(_))
    }
}

/// Mean and standard error of `exp(<h (x) psi, eta>)` over `samples`.
pub fn empirical_laplace(samples: &[Configuration], h: &[f64], psi: &TestFunction) -> Result<Estimate> {
    let mut acc = Accumulator::new();
    for eta in samples {
        acc.push(eta.pairing(h, psi)?.exp());
    }
    Ok(acc.estimate())
}

#[derive(Clone, Debug, Serialize)]
pub struct LaplaceReport {
    pub h: Vec<f64>,
    pub psi: TestFunction,
    pub closed_form: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub n: u64,
    pub trunc_bound: f64,
    pub pass: bool,
}

/// Compare the empirical Laplace functional of `samples` with the closed
/// form: pass iff `|diff| <= 3 stderr + truncation certificate`.
pub fn laplace_check(ps: &PoissonSpec, samples: &[Configuration], h: &[f64], psi: &TestFunction) -> Result<LaplaceReport> {
    let closed_form = ps.laplace_closed_form(h, psi)?;
    let trunc_bound = ps.truncation_certificate(h, psi)?;
    let est = empirical_laplace(samples, h, psi)?;
    let pass = (est.value - closed_form).abs() <= 3.0 * est.stderr + trunc_bound;
    Ok(LaplaceReport {
        h: h.to_vec(),
        psi: psi.clone(),
        closed_form,
        estimate: est.value,
        stderr: est.stderr,
        n: est.n,
        trunc_bound,
        pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentBoundReport {
    pub n: u32,
    /// Empirical `E |<h (x) psi, eta>|^n`.
    pub empirical: Estimate,
    pub rhs: f64,
    /// Set when the empirical moment exceeds the bound by more than 3 standard errors.
    pub violation: bool,
}

pub fn moment_bound_check(ps: &PoissonSpec, h: &[f64], psi: &TestFunction, n: u32, samples: &[Configuration]) -> Result<MomentBoundReport> {
    let rhs = ps.moment_bound_rhs(h, psi, n)?;
    let mut acc = Accumulator::new();
    for eta in samples {
        acc.push(eta.pairing(h, psi)?.abs().powi(n as i32));
    }
    let empirical = acc.estimate();
    Ok(MomentBoundReport {
        n,
        violation: empirical.value - 3.0 * empirical.stderr > rhs,
        empirical,
        rhs,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FactorizationReport {
    /// `E prod_i L_i`.
    pub mean_of_product: f64,
    /// `prod_i E L_i`.
    pub product_of_means: f64,
    pub diff: f64,
    /// Delta-method standard error of `diff`.
    pub stderr: f64,
    pub pass: bool,
}

/// Independent increments: compare `E prod_i f(eta(Lambda_i))` with
/// `prod_i E f(eta(Lambda_i))` for disjoint regions, with
/// `f(eta(Lambda)) = exp(-V_Lambda(eta))` (bounded).
pub fn factorization_check(samples: &[Configuration], regions: &[Region]) -> Result<FactorizationReport> {
    for (i, a) in regions.iter().enumerate() {
        for b in &regions[i + 1..] {
            if !a.is_disjoint(b) {
                return Err(Error::param("regions", "must be pairwise disjoint"));
            }
        }
    }
    let n = samples.len();
    if n < 2 {
        return Err(Error::param("samples", "need at least two samples"));
    }
    let vals: Vec<Vec<f64>> = samples
        .iter()
        .map(|eta| regions.iter().map(|r| eta.tv_mass(r).map(|m| (-m).exp())).collect())
        .collect::<Result<_>>()?;
    let m = regions.len();
    let means: Vec<f64> = (0..m).map(|i| vals.iter().map(|v| v[i]).sum::<f64>() / n as f64).collect();
    let prod_means: f64 = means.iter().product();
    let mean_prod = vals.iter().map(|v| v.iter().product::<f64>()).sum::<f64>() / n as f64;
    // influence of one sample on mean(prod) - prod(means)
    let infl: Accumulator = vals
        .iter()
        .map(|v| {
            let p: f64 = v.iter().product();
            let lin: f64 = (0..m)
                .map(|i| {
                    let others: f64 = (0..m).filter(|&j| j != i).map(|j| means[j]).product();
                    others * v[i]
                })
                .sum();
            p - lin
        })
        .collect();
    let diff = mean_prod - prod_means;
    let stderr = infl.stderr();
    Ok(FactorizationReport {
        mean_of_product: mean_prod,
        product_of_means: prod_means,
        diff,
        stderr,
        pass: diff.abs() <= 3.0 * stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mark_measure::DEFAULT_EPS_TRUNC;

    fn ps1(lo: i64, hi: i64) -> PoissonSpec {
        let spec = PartitionSpec::new(1, 0.5, 0.5).unwrap();
        let mm = MarkMeasure::new(1, 1.0, 2.0, DEFAULT_EPS_TRUNC).unwrap();
        PoissonSpec::new(mm, Region::interval(lo, hi), spec).unwrap()
    }

    #[test]
    fn trivial_laplace() {
        let ps = ps1(0, 2);
        let psi = TestFunction::indicator(&Region::interval(0, 1), 0.7);
        assert_eq!(ps.laplace_closed_form(&[0.0], &psi).unwrap(), 1.0);
        assert_eq!(ps.laplace_closed_form(&[1.0], &TestFunction::Zero).unwrap(), 1.0);
    }

    #[test]
    fn single_cube_factorises() {
        let ps = ps1(0, 2);
        let psi = TestFunction::indicator(&Region::interval(1, 1), 0.8);
        let got = ps.laplace_closed_form(&[1.3], &psi).unwrap();
        let oracle = (0.5 * ps.mark_measure().log_psi(&[1.3], 0.8).unwrap()).exp();
        assert!((got - oracle).abs() < 1e-14 * oracle);
    }

    #[test]
    fn tent_matches_midpoint_refinement() {
        let ps = ps1(-3, 3);
        let psi = TestFunction::tent(vec![0.1], 1.0, 0.9).unwrap();
        let exact = ps.laplace_exponent(&[1.0], &psi).unwrap();
        let coarse = ps.laplace_exponent_midpoint(&[1.0], &psi, 40).unwrap();
        let fine = ps.laplace_exponent_midpoint(&[1.0], &psi, 400).unwrap();
        assert!((fine - exact).abs() < 1e-5 * exact.abs(), "{fine} vs {exact}");
        assert!((coarse - exact).abs() > (fine - exact).abs());
    }

    #[test]
    fn support_must_lie_in_volume() {
        let ps = ps1(0, 0);
        let psi = TestFunction::indicator(&Region::interval(0, 1), 1.0);
        assert!(ps.laplace_closed_form(&[1.0], &psi).is_err());
    }

    #[test]
    fn samples_live_in_window() {
        let ps = ps1(-1, 1);
        let mut rng = StreamSeed::new(3).rng();
        for _ in 0..200 {
            let eta = ps.sample(&mut rng);
            assert!(eta.first_duplicate().is_none());
            for a in eta.atoms() {
                assert!(ps.region().contains(a.cube));
                assert!(ps.spec().cube_contains(a.cube, a.position));
                assert!(norm(a.mark) > DEFAULT_EPS_TRUNC);
            }
        }
    }

    #[test]
    fn count_mean_matches_intensity() {
        let ps = ps1(0, 1);
        let samples = ps.sample_many(10_000, StreamSeed::new(4));
        let acc: Accumulator = samples.iter().map(|s| s.len() as f64).collect();
        // intensity = E_1(1e-6) * vol, with vol = 2 * 0.5
        assert!((acc.mean() - ps.intensity()).abs() <= 3.0 * acc.stderr(), "{} vs {}", acc.mean(), ps.intensity());
    }

    #[test]
    fn tiny_volume_is_almost_always_empty() {
        let spec = PartitionSpec::new(1, 1e-6, 1e-6).unwrap();
        let mm = MarkMeasure::new(1, 1.0, 2.0, DEFAULT_EPS_TRUNC).unwrap();
        let ps = PoissonSpec::new(mm, Region::interval(0, 0), spec).unwrap();
        let samples = ps.sample_many(10_000, StreamSeed::new(5));
        let empty = samples.iter().filter(|s| s.is_empty()).count();
        assert!(empty as f64 >= 0.999 * 10_000.0);
    }

    #[test]
    fn zero_psi_moment_is_trivial() {
        let ps = ps1(0, 1);
        let samples = ps.sample_many(100, StreamSeed::new(6));
        let r = moment_bound_check(&ps, &[1.0], &TestFunction::Zero, 1, &samples).unwrap();
        assert_eq!(r.empirical.value, 0.0);
        assert!(!r.violation);
        let e = empirical_laplace(&samples, &[1.0], &TestFunction::Zero).unwrap();
        assert_eq!((e.value, e.stderr), (1.0, 0.0));
    }
}
