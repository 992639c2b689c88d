//! Birth, death, move and mark-resample Metropolis-Hastings for
//! `gamma_Lambda(. | xi)`.
//!
//! Births propose a uniform position in `Lambda` and a mark from the
//! normalized truncated mark measure, so with `kappa = lambda({|v| > eps}) vol(Lambda)`
//! the birth ratio is `e^{-dH} kappa / (n + 1) * p_death / p_birth` and the
//! death ratio its reciprocal form. Moves are Gaussian, reflected into the
//! bounding box of `Lambda` and rejected if they land outside `Lambda`, which
//! keeps the proposal symmetric. Mark resampling is an independence proposal
//! from the reference mark law, so its ratio is `e^{-dH}`.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{GibbsKernel, GibbsSample};
use crate::configuration::Configuration;
use crate::error::{Error, Result};
use crate::geometry::CubeIndex;
use crate::rng::{par_jobs, StreamSeed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcOptions {
    /// Proposal weights: birth, death, move, mark-resample.
    pub weights: [f64; 4],
    pub burn_in: u64,
    pub thinning: u64,
    /// Gaussian move scale; `None` means half the cube edge.
    pub move_scale: Option<f64>,
    /// Independent chains; the requested samples are split between them.
    pub chains: usize,
}

impl Default for McmcOptions {
    fn default() -> Self {
        McmcOptions {
            weights: [0.3, 0.3, 0.3, 0.1],
            burn_in: 10_000,
            thinning: 10,
            move_scale: None,
            chains: 8,
        }
    }
}

impl McmcOptions {
    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || self.weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::param("weights", "must be nonnegative with a positive sum"));
        }
        if (self.weights[0] > 0.0) != (self.weights[1] > 0.0) {
            return Err(Error::param("weights", "birth and death must both be enabled or both disabled"));
        }
        if self.thinning == 0 {
            return Err(Error::param("thinning", "must be at least 1"));
        }
        if self.chains == 0 {
            return Err(Error::param("chains", "must be at least 1"));
        }
        if let Some(s) = self.move_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::param("move_scale", format!("must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ChainStats {
    pub proposed: [u64; 4],
    pub accepted: [u64; 4],
}

impl ChainStats {
    pub fn acceptance_rate(&self) -> f64 {
        let p: u64 = self.proposed.iter().sum();
        if p == 0 {
            0.0
        } else {
            self.accepted.iter().sum::<u64>() as f64 / p as f64
        }
    }

    fn merge(&mut self, other: &ChainStats) {
        for i in 0..4 {
            self.proposed[i] += other.proposed[i];
            self.accepted[i] += other.accepted[i];
        }
    }
}

/// A single chain. Atoms live in flat arrays; `cells` maps each cube to the
/// indices of its atoms for local energy updates.
#[derive(Clone, Debug)]
pub struct Chain<'k> {
    kernel: &'k GibbsKernel,
    d: usize,
    positions: Vec<f64>,
    marks: Vec<f64>,
    cubes: Vec<CubeIndex>,
    cells: HashMap<CubeIndex, Vec<usize>>,
    /// Cumulative proposal weights.
    cumulative: [f64; 4],
    move_scale: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
    steps: u64,
    pub stats: ChainStats,
}

impl<'k> Chain<'k> {
    /// A chain started from `init`, whose atoms must lie in `Lambda`.
    pub fn new(kernel: &'k GibbsKernel, init: &Configuration, options: &McmcOptions) -> Result<Self> {
        options.validate()?;
        let spec = kernel.poisson().spec();
        let d = spec.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for k in kernel.region().iter() {
            let (a, b) = spec.cube_bounds(k);
            for i in 0..d {
                lo[i] = lo[i].min(a[i]);
                hi[i] = hi[i].max(b[i]);
            }
        }
        let total: f64 = options.weights.iter().sum();
        let mut cumulative = [0.0; 4];
        let mut acc = 0.0;
        for (c, w) in cumulative.iter_mut().zip(options.weights) {
            acc += w / total;
            *c = acc;
        }
        let mut chain = Chain {
            kernel,
            d,
            positions: Vec::new(),
            marks: Vec::new(),
            cubes: Vec::new(),
            cells: HashMap::new(),
            cumulative,
            move_scale: options.move_scale.unwrap_or(0.5 * spec.edge()),
            lo,
            hi,
            steps: 0,
            stats: ChainStats::default(),
        };
        for a in init.atoms() {
            if !kernel.region().contains(a.cube) {
                return Err(Error::AtomOutsideWindow { position: a.position.to_vec() });
            }
            chain.insert(a.position, a.mark, a.cube.clone());
        }
        Ok(chain)
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }
    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn pos(&self, i: usize) -> &[f64] {
        &self.positions[i * self.d..(i + 1) * self.d]
    }
    fn mark(&self, i: usize) -> &[f64] {
        &self.marks[i * self.d..(i + 1) * self.d]
    }

    fn insert(&mut self, x: &[f64], v: &[f64], k: CubeIndex) {
        let i = self.cubes.len();
        self.positions.extend_from_slice(x);
        self.marks.extend_from_slice(v);
        self.cells.entry(k.clone()).or_default().push(i);
        self.cubes.push(k);
    }

    fn remove(&mut self, i: usize) {
        let last = self.cubes.len() - 1;
        let k = self.cubes[i].clone();
        let cell = self.cells.get_mut(&k).expect("atom is indexed");
        cell.retain(|&j| j != i);
        if cell.is_empty() {
            self.cells.remove(&k);
        }
        if i != last {
            let lk = self.cubes[last].clone();
            for j in self.cells.get_mut(&lk).expect("atom is indexed").iter_mut() {
                if *j == last {
                    *j = i;
                }
            }
            let d = self.d;
            self.positions.copy_within(last * d..(last + 1) * d, i * d);
            self.marks.copy_within(last * d..(last + 1) * d, i * d);
        }
        self.cubes.swap_remove(i);
        self.positions.truncate(last * self.d);
        self.marks.truncate(last * self.d);
    }

    /// Energy of an atom `(x, v)` in cube `k` against the current state
    /// (skipping atom `skip`) and the boundary: `H(eta + atom) - H(eta)`.
    fn local_energy(&self, x: &[f64], v: &[f64], k: &CubeIndex, skip: Option<usize>) -> f64 {
        let inter = self.kernel.interaction();
        if inter.potential().is_zero() {
            return 0.0;
        }
        let mut s = 0.0;
        let mut visit = |cube: &CubeIndex| {
            if let Some(cell) = self.cells.get(cube) {
                for &j in cell {
                    if Some(j) != skip {
                        s += inter.pair_term(x, v, self.pos(j), self.mark(j));
                    }
                }
            }
        };
        visit(k);
        for o in inter.offsets() {
            visit(&k.offset(o));
        }
        inter.self_term(x, v) + 2.0 * (s + inter.boundary_field(x, v, k))
    }

    /// Acceptance ratio of adding `(x, v)` in cube `k` to the current state.
    pub fn birth_ratio(&self, x: &[f64], v: &[f64], k: &CubeIndex) -> f64 {
        let dh = self.local_energy(x, v, k, None);
        let kappa = self.kernel.poisson().intensity();
        let w = self.weights();
        (-dh).exp() * kappa / (self.len() + 1) as f64 * w[1] / w[0]
    }

    /// Acceptance ratio of removing atom `i`.
    pub fn death_ratio(&self, i: usize) -> f64 {
        let dh = -self.local_energy(self.pos(i), self.mark(i), &self.cubes[i], Some(i));
        let kappa = self.kernel.poisson().intensity();
        let w = self.weights();
        (-dh).exp() * self.len() as f64 / kappa * w[0] / w[1]
    }

    fn weights(&self) -> [f64; 4] {
        let c = self.cumulative;
        [c[0], c[1] - c[0], c[2] - c[1], c[3] - c[2]]
    }

    fn reflect(&self, mut y: f64, axis: usize) -> f64 {
        let (a, b) = (self.lo[axis], self.hi[axis]);
        let w = b - a;
        y = (y - a).rem_euclid(2.0 * w);
        a + if y > w { 2.0 * w - y } else { y }
    }

    /// One Metropolis-Hastings step.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.steps += 1;
        let u: f64 = rng.random();
        let kind = self.cumulative.iter().position(|&c| u < c).unwrap_or(3);
        self.stats.proposed[kind] += 1;
        let accepted = match kind {
            0 => {
                let (x, k) = self.kernel.poisson().uniform_position(rng);
                let v = self.kernel.poisson().mark_measure().sample_mark(rng);
                let ratio = self.birth_ratio(&x, &v, &k);
                let ok = rng.random::<f64>() < ratio;
                if ok {
                    self.insert(&x, &v, k);
                }
                ok
            }
            1 => {
                if self.is_empty() {
                    false
                } else {
                    let i = rng.random_range(0..self.len());
                    let ok = rng.random::<f64>() < self.death_ratio(i);
                    if ok {
                        self.remove(i);
                    }
                    ok
                }
            }
            2 => {
                if self.is_empty() {
                    false
                } else {
                    let i = rng.random_range(0..self.len());
                    let y: Vec<f64> = (0..self.d)
                        .map(|a| {
                            let z: f64 = StandardNormal.sample(rng);
                            self.reflect(self.pos(i)[a] + self.move_scale * z, a)
                        })
                        .collect();
                    match self.kernel.poisson().spec().cube_index(&y) {
                        Ok(k) if self.kernel.region().contains(&k) => {
                            let v = self.mark(i).to_vec();
                            let dh = self.local_energy(&y, &v, &k, Some(i)) - self.local_energy(self.pos(i), &v, &self.cubes[i], Some(i));
                            let ok = rng.random::<f64>() < (-dh).exp();
                            if ok {
                                self.remove(i);
                                self.insert(&y, &v, k);
                            }
                            ok
                        }
                        _ => false,
                    }
                }
            }
            _ => {
                if self.is_empty() {
                    false
                } else {
                    let i = rng.random_range(0..self.len());
                    let w = self.kernel.poisson().mark_measure().sample_mark(rng);
                    let (x, k) = (self.pos(i).to_vec(), self.cubes[i].clone());
                    let dh = self.local_energy(&x, &w, &k, Some(i)) - self.local_energy(&x, self.mark(i), &k, Some(i));
                    let ok = rng.random::<f64>() < (-dh).exp();
                    if ok {
                        self.marks[i * self.d..(i + 1) * self.d].copy_from_slice(&w);
                    }
                    ok
                }
            }
        };
        if accepted {
            self.stats.accepted[kind] += 1;
        }
    }

    /// The current state as a configuration on `Lambda`.
    pub fn state(&self) -> Configuration {
        let mut cfg = Configuration::empty(*self.kernel.poisson().spec(), self.kernel.region().clone());
        for i in 0..self.len() {
            cfg.push_unchecked(self.pos(i), self.mark(i), self.cubes[i].clone());
        }
        cfg
    }
}

/// Draws from `n / chains` thinned steps of each of `options.chains`
/// independent chains after burn-in, started from reference-measure draws.
pub fn mcmc_samples(kernel: &GibbsKernel, n: usize, options: &McmcOptions, seed: StreamSeed) -> Result<(Vec<GibbsSample>, ChainStats)> {
    options.validate()?;
    let chains = options.chains.min(n.max(1));
    let per = |c: usize| n / chains + usize::from(c < n % chains);
    let runs = par_jobs(chains, seed, |s, c| {
        let mut rng = s.rng();
        let init = kernel.poisson().sample(&mut rng);
        let mut chain = Chain::new(kernel, &init, options)?;
        for _ in 0..options.burn_in {
            chain.step(&mut rng);
        }
        let mut out = Vec::with_capacity(per(c));
        for _ in 0..per(c) {
            for _ in 0..options.thinning {
                chain.step(&mut rng);
            }
            out.push(GibbsSample {
                config: chain.state(),
                boundary: kernel.boundary().clone(),
                accepted_after: chain.steps(),
            });
        }
        Ok((out, chain.stats))
    })?;
    let mut samples = Vec::with_capacity(n);
    let mut stats = ChainStats::default();
    for (s, st) in runs {
        samples.extend(s);
        stats.merge(&st);
    }
    Ok((samples, stats))
}

/// One draw after `steps` chain steps from a reference-measure start.
pub fn sample_gibbs_mcmc<R: Rng + ?Sized>(kernel: &GibbsKernel, steps: u64, options: &McmcOptions, rng: &mut R) -> Result<GibbsSample> {
    if steps < options.burn_in {
        return Err(Error::param("steps", format!("{steps} is below the burn-in {}", options.burn_in)));
    }
    let init = kernel.poisson().sample(rng);
    let mut chain = Chain::new(kernel, &init, options)?;
    for _ in 0..steps {
        chain.step(rng);
    }
    Ok(GibbsSample {
        config: chain.state(),
        boundary: kernel.boundary().clone(),
        accepted_after: steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PartitionSpec, Region};
    use crate::interaction::EnergyOptions;
    use crate::mark_measure::MarkMeasure;
    use crate::potential::PairPotential;
    use crate::reference_measure::PoissonSpec;
    use crate::stats::chi_square_poisson;

    fn kernel(c: f64, cubes: i64) -> GibbsKernel {
        let spec = PartitionSpec::new(1, 0.5, 0.5).unwrap();
        let mm = MarkMeasure::new(1, 1.0, 2.0, 0.05).unwrap().with_direction(&[1.0]).unwrap();
        let lam = Region::interval(0, cubes - 1);
        let ps = PoissonSpec::new(mm, lam.clone(), spec).unwrap();
        let pot = if c == 0.0 { PairPotential::zero(&spec) } else { PairPotential::hard_range(c, &spec).unwrap() };
        let xi = Configuration::new(spec, spec.halo(&lam), [(vec![-0.3], vec![0.8])]).unwrap();
        GibbsKernel::new(ps, pot, &xi, EnergyOptions::default()).unwrap()
    }

    #[test]
    fn birth_ratio_matches_hand_computation() {
        let k = kernel(0.7, 1);
        let spec = *k.poisson().spec();
        let init = Configuration::new(spec, k.region().clone(), [(vec![0.0], vec![0.4]), (vec![0.2], vec![1.1])]).unwrap();
        let chain = Chain::new(&k, &init, &McmcOptions::default()).unwrap();
        let (x, v) = ([0.1], [0.5]);
        // every pair here is within R = 0.5, boundary atom at -0.3 too
        let dh: f64 = 0.7 * 0.25 + 2.0 * 0.7 * (0.5 * 0.4 + 0.5 * 1.1) + 2.0 * 0.7 * 0.5 * 0.8;
        let kappa = k.poisson().intensity();
        let hand = (-dh).exp() * kappa / 3.0;
        let got = chain.birth_ratio(&x, &v, &CubeIndex::new(&[0]));
        assert!((got - hand).abs() <= 1e-12 * hand, "{got} vs {hand}");
        // the birth energy is the Hamiltonian difference
        let mut bigger = init.clone();
        bigger.push_unchecked(&x, &v, CubeIndex::new(&[0]));
        let direct = k.energy(&bigger) - k.energy(&init);
        assert!((dh - direct).abs() < 1e-12);
    }

    #[test]
    fn death_undoes_birth() {
        let k = kernel(0.7, 2);
        let spec = *k.poisson().spec();
        let init = Configuration::new(spec, k.region().clone(), [(vec![0.0], vec![0.4]), (vec![0.4], vec![1.1])]).unwrap();
        let mut chain = Chain::new(&k, &init, &McmcOptions::default()).unwrap();
        let (x, v, c) = ([0.6], [0.3], CubeIndex::new(&[1]));
        let b = chain.birth_ratio(&x, &v, &c);
        chain.insert(&x, &v, c);
        let d = chain.death_ratio(2);
        assert!((b * d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_gas_count_is_poisson() {
        let k = kernel(0.0, 1);
        let opts = McmcOptions { burn_in: 2_000, thinning: 25, ..Default::default() };
        let (s, stats) = mcmc_samples(&k, 4_000, &opts, StreamSeed::new(11)).unwrap();
        assert_eq!(s.len(), 4_000);
        assert!(stats.acceptance_rate() > 0.0);
        let counts: Vec<u64> = s.iter().map(|g| g.config.len() as u64).collect();
        let out = chi_square_poisson(&counts, k.poisson().intensity(), 0.01);
        assert!(out.pass, "{out:?}");
    }

    #[test]
    fn removal_keeps_index_consistent() {
        let k = kernel(0.5, 3);
        let opts = McmcOptions { burn_in: 0, ..Default::default() };
        let init = k.poisson().sample(&mut StreamSeed::new(3).rng());
        let mut chain = Chain::new(&k, &init, &opts).unwrap();
        let mut rng = StreamSeed::new(4).rng();
        for _ in 0..5_000 {
            chain.step(&mut rng);
        }
        let indexed: usize = chain.cells.values().map(Vec::len).sum();
        assert_eq!(indexed, chain.len());
        for (c, idx) in &chain.cells {
            for &i in idx {
                assert_eq!(&chain.cubes[i], c);
                assert!(k.poisson().spec().cube_contains(c, chain.pos(i)));
            }
        }
    }
}
