#![allow(dead_code)]

use conegibbs::configuration::Configuration;
use conegibbs::geometry::{PartitionSpec, Region};
use rand::Rng;

/// `n` atoms placed uniformly in random cubes of `window`. Marks are
/// Gaussian-ish vectors, or positive multiples of `e_1` when `positive`.
pub fn random_configuration<R: Rng>(spec: &PartitionSpec, window: &Region, n: usize, positive: bool, rng: &mut R) -> Configuration {
    let cubes: Vec<_> = window.iter().cloned().collect();
    let g = spec.edge();
    let d = spec.dim();
    let mut atoms = Vec::with_capacity(n);
    while atoms.len() < n {
        let k = &cubes[rng.random_range(0..cubes.len())];
        let x: Vec<f64> = k.iter().map(|&ki| g * (ki as f64 - 0.5 + rng.random::<f64>())).collect();
        if !spec.cube_contains(k, &x) {
            continue;
        }
        let v: Vec<f64> = if positive {
            let mut v = vec![0.0; d];
            v[0] = 0.01 + 2.0 * rng.random::<f64>();
            v
        } else {
            (0..d).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect()
        };
        atoms.push((x, v));
    }
    Configuration::new(*spec, window.clone(), atoms).expect("continuous positions are distinct")
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `int_a^b s^p e^{-s^2} ds` on a log grid, for the `d = 1`, `alpha = 1`,
/// `beta = 2` mark measure used throughout the tests.
pub fn radial_power(p: f64, a: f64, b: f64) -> f64 {
    simpson(|u| (u * (p + 1.0)).exp() * (-(2.0 * u).exp()).exp(), a.ln(), b.ln(), 20_000)
}
