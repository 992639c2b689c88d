//! The relative energy
//!
//! ```text
//! H_Lambda(eta | xi) = sum_{x, x' in Lambda} phi(x, x') <v_x, v_x'>
//!                    + 2 sum_{x in Lambda, y in Lambda^c} phi(x, y) <v_x, v_y>
//! ```
//!
//! evaluated with cell lists over the partition cubes. The double sum runs
//! over ordered pairs and includes the diagonal `x = x'`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::configuration::{dot, Configuration, MassMode};
use crate::error::{Error, Result};
use crate::geometry::{CubeIndex, PartitionSpec, Region};
use crate::potential::PairPotential;
use crate::stats::CompensatedSum;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyOptions {
    /// Drop the `x = x'` terms `phi(x, x) |v_x|^2`.
    #[serde(default)]
    pub exclude_diagonal: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    /// The `Lambda x Lambda` double sum.
    pub bulk: f64,
    /// Twice the `Lambda x Lambda^c` cross sum.
    pub boundary: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn new(bulk: f64, boundary: f64) -> Self {
        EnergyBreakdown {
            bulk,
            boundary,
            total: bulk + boundary,
        }
    }
}

/// Atoms of one cube, stored flat with stride `d`.
#[derive(Clone, Debug, Default)]
struct Cell {
    positions: Vec<f64>,
    marks: Vec<f64>,
}

impl Cell {
    fn push(&mut self, x: &[f64], v: &[f64]) {
        self.positions.extend_from_slice(x);
        self.marks.extend_from_slice(v);
    }
}

/// Precomputed interaction of a fixed volume `Lambda` with a fixed boundary
/// condition: the boundary atoms in `halo(Lambda)` are bucketed by cube once.
#[derive(Clone, Debug)]
pub struct Interaction {
    spec: PartitionSpec,
    potential: PairPotential,
    region: Region,
    offsets: Vec<CubeIndex>,
    /// Offsets that are lexicographically positive: each unordered pair of
    /// distinct cubes is visited once.
    forward: Vec<CubeIndex>,
    boundary: HashMap<CubeIndex, Cell>,
    options: EnergyOptions,
}

impl Interaction {
    /// Requires `xi.window() ⊇ halo(region)`. Atoms of `xi` inside `region`
    /// are ignored.
    pub fn new(spec: PartitionSpec, potential: PairPotential, region: Region, xi: &Configuration, options: EnergyOptions) -> Result<Self> {
        let halo = spec.halo(&region);
        let missing = halo.missing_from(xi.window());
        if missing > 0 {
            return Err(Error::NotInWindow { missing });
        }
        let mut boundary: HashMap<CubeIndex, Cell> = HashMap::new();
        for a in xi.atoms().filter(|a| halo.contains(a.cube)) {
            boundary.entry(a.cube.clone()).or_default().push(a.position, a.mark);
        }
        let offsets = spec.neighbor_offsets();
        let zero = CubeIndex::origin(spec.dim());
        let forward = offsets.iter().filter(|o| **o > zero).cloned().collect();
        Ok(Interaction {
            spec,
            potential,
            region,
            offsets,
            forward,
            boundary,
            options,
        })
    }

    pub fn spec(&self) -> &PartitionSpec {
        &self.spec
    }
    pub fn potential(&self) -> &PairPotential {
        &self.potential
    }
    pub fn region(&self) -> &Region {
        &self.region
    }
    pub fn offsets(&self) -> &[CubeIndex] {
        &self.offsets
    }
    pub fn options(&self) -> EnergyOptions {
        self.options
    }

    #[inline]
    pub fn pair_term(&self, x: &[f64], v: &[f64], y: &[f64], w: &[f64]) -> f64 {
        let p = self.potential.eval(x, y);
        if p == 0.0 {
            0.0
        } else {
            p * dot(v, w)
        }
    }

    /// `phi(x, x) |v|^2`, or zero when the diagonal is excluded.
    #[inline]
    pub fn self_term(&self, x: &[f64], v: &[f64]) -> f64 {
        if self.options.exclude_diagonal {
            0.0
        } else {
            self.potential.eval(x, x) * dot(v, v)
        }
    }

    /// `sum_y phi(x, y) <v, v_y>` over the boundary atoms (no factor 2).
    pub fn boundary_field(&self, x: &[f64], v: &[f64], cube: &CubeIndex) -> f64 {
        if self.potential.is_zero() {
            return 0.0;
        }
        let d = self.spec.dim();
        let mut s = 0.0;
        for o in &self.offsets {
            if let Some(cell) = self.boundary.get(&cube.offset(o)) {
                for (y, w) in cell.positions.chunks_exact(d).zip(cell.marks.chunks_exact(d)) {
                    s += self.pair_term(x, v, y, w);
                }
            }
        }
        s
    }

    /// `H_Lambda(eta | xi)`. Requires `eta.window() ⊇ Lambda`; atoms of
    /// `eta` outside `Lambda` are ignored.
    pub fn energy(&self, eta: &Configuration) -> Result<EnergyBreakdown> {
        let missing = self.region.missing_from(eta.window());
        if missing > 0 {
            return Err(Error::NotInWindow { missing });
        }
        if self.potential.is_zero() {
            return Ok(EnergyBreakdown::default());
        }
        let d = self.spec.dim();
        let mut cells: BTreeMap<CubeIndex, Cell> = BTreeMap::new();
        for a in eta.atoms().filter(|a| self.region.contains(a.cube)) {
            cells.entry(a.cube.clone()).or_default().push(a.position, a.mark);
        }
        let mut bulk = CompensatedSum::default();
        let mut boundary = CompensatedSum::default();
        for (k, cell) in &cells {
            let n = cell.positions.len() / d;
            let pos = |i: usize| &cell.positions[i * d..(i + 1) * d];
            let mk = |i: usize| &cell.marks[i * d..(i + 1) * d];
            for i in 0..n {
                bulk.add(self.self_term(pos(i), mk(i)));
                for j in i + 1..n {
                    bulk.add(2.0 * self.pair_term(pos(i), mk(i), pos(j), mk(j)));
                }
            }
            for o in &self.forward {
                if let Some(other) = cells.get(&k.offset(o)) {
                    for (y, w) in other.positions.chunks_exact(d).zip(other.marks.chunks_exact(d)) {
                        for i in 0..n {
                            bulk.add(2.0 * self.pair_term(pos(i), mk(i), y, w));
                        }
                    }
                }
            }
            for o in &self.offsets {
                if let Some(other) = self.boundary.get(&k.offset(o)) {
                    for (y, w) in other.positions.chunks_exact(d).zip(other.marks.chunks_exact(d)) {
                        for i in 0..n {
                            boundary.add(2.0 * self.pair_term(pos(i), mk(i), y, w));
                        }
                    }
                }
            }
        }
        Ok(EnergyBreakdown::new(bulk.value(), boundary.value()))
    }
}

/// `H_Lambda(eta | xi)` via cell lists.
pub fn hamiltonian(
    eta: &Configuration,
    xi: &Configuration,
    region: &Region,
    potential: &PairPotential,
    options: EnergyOptions,
) -> Result<EnergyBreakdown> {
    Interaction::new(*eta.spec(), potential.clone(), region.clone(), xi, options)?.energy(eta)
}

/// `H_Lambda(eta | xi)` by the all-pairs double sum. Every atom of `xi`
/// outside `Lambda` is visited, so this also serves as a check that the
/// halo is sufficient.
pub fn hamiltonian_brute_force(
    eta: &Configuration,
    xi: &Configuration,
    region: &Region,
    potential: &PairPotential,
    options: EnergyOptions,
) -> Result<EnergyBreakdown> {
    let missing = region.missing_from(eta.window());
    if missing > 0 {
        return Err(Error::NotInWindow { missing });
    }
    let inside: Vec<_> = eta.atoms().filter(|a| region.contains(a.cube)).collect();
    let outside: Vec<_> = xi.atoms().filter(|a| !region.contains(a.cube)).collect();
    let term = |x: &[f64], v: &[f64], y: &[f64], w: &[f64]| {
        let p = potential.eval(x, y);
        if p == 0.0 {
            0.0
        } else {
            p * dot(v, w)
        }
    };
    let mut bulk = CompensatedSum::default();
    for (i, a) in inside.iter().enumerate() {
        if !options.exclude_diagonal {
            bulk.add(potential.eval(a.position, a.position) * dot(a.mark, a.mark));
        }
        for b in &inside[i + 1..] {
            bulk.add(2.0 * term(a.position, a.mark, b.position, b.mark));
        }
    }
    let mut boundary = CompensatedSum::default();
    for a in &inside {
        for b in &outside {
            boundary.add(2.0 * term(a.position, a.mark, b.position, b.mark));
        }
    }
    Ok(EnergyBreakdown::new(bulk.value(), boundary.value()))
}

/// `A sum_{j in K_Lambda} eta_Lambda(Q_j)^2`.
pub fn lower_bound_rhs(eta: &Configuration, region: &Region, repulsion: f64, mode: MassMode) -> f64 {
    repulsion * eta.squared_cube_mass_sum(region, mode)
}

/// `||phi|| (V_Lambda(eta)^2 + 2 V_Lambda(eta) V_{halo}(xi))`, an upper bound
/// on `|H_Lambda(eta | xi)|`.
pub fn finiteness_bound(eta: &Configuration, xi: &Configuration, region: &Region, potential: &PairPotential) -> Result<f64> {
    let halo = eta.spec().halo(region);
    let v_in = eta.tv_mass(region)?;
    let v_out = xi.tv_mass(&halo)?;
    Ok(potential.sup_norm() * (v_in * v_in + 2.0 * v_in * v_out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec1() -> PartitionSpec {
        PartitionSpec::new(1, 1.0, 1.0).unwrap()
    }

    #[test]
    fn empty_eta_has_zero_energy() {
        let s = spec1();
        let lam = Region::interval(0, 0);
        let eta = Configuration::empty(s, lam.clone());
        let xi = Configuration::new(s, s.halo(&lam), [(vec![1.2], vec![3.0])]).unwrap();
        let p = PairPotential::hard_range(0.7, &s).unwrap();
        let e = hamiltonian(&eta, &xi, &lam, &p, EnergyOptions::default()).unwrap();
        assert_eq!(e.total, 0.0);
    }

    #[test]
    fn single_atom_diagonal() {
        let s = spec1();
        let lam = Region::interval(0, 0);
        let eta = Configuration::new(s, lam.clone(), [(vec![0.1], vec![-3.0])]).unwrap();
        let xi = Configuration::empty(s, s.halo(&lam));
        let p = PairPotential::hard_range(0.7, &s).unwrap();
        let e = hamiltonian(&eta, &xi, &lam, &p, EnergyOptions::default()).unwrap();
        assert!((e.total - 0.7 * 9.0).abs() < 1e-15);
        let e = hamiltonian(&eta, &xi, &lam, &p, EnergyOptions { exclude_diagonal: true }).unwrap();
        assert_eq!(e.total, 0.0);
    }

    #[test]
    fn two_atoms_one_cube() {
        let s = spec1();
        let lam = Region::interval(0, 0);
        let eta = Configuration::new(s, lam.clone(), [(vec![0.1], vec![1.0]), (vec![-0.2], vec![1.0])]).unwrap();
        let xi = Configuration::empty(s, s.halo(&lam));
        let c = 0.3;
        let p = PairPotential::hard_range(c, &s).unwrap();
        let e = hamiltonian(&eta, &xi, &lam, &p, EnergyOptions::default()).unwrap();
        assert!((e.total - 4.0 * c).abs() < 1e-15);
        assert_eq!(e.boundary, 0.0);
    }

    #[test]
    fn boundary_term_and_locality() {
        let s = spec1();
        let lam = Region::interval(0, 0);
        let win = Region::interval(-5, 5);
        let eta = Configuration::new(s, lam.clone(), [(vec![0.4], vec![2.0])]).unwrap();
        // 1.3 is within range of 0.4; 4.0 is far beyond the halo
        let xi = Configuration::new(s, win, [(vec![1.3], vec![-1.0]), (vec![4.0], vec![7.0])]).unwrap();
        let p = PairPotential::hard_range(0.5, &s).unwrap();
        let e = hamiltonian(&eta, &xi, &lam, &p, EnergyOptions::default()).unwrap();
        assert!((e.bulk - 0.5 * 4.0).abs() < 1e-15);
        assert!((e.boundary - 2.0 * 0.5 * -2.0).abs() < 1e-15);
        let brute = hamiltonian_brute_force(&eta, &xi, &lam, &p, EnergyOptions::default()).unwrap();
        assert_eq!(e, brute);
        let near = xi.project(&s.halo(&lam)).unwrap();
        assert_eq!(hamiltonian(&eta, &near, &lam, &p, EnergyOptions::default()).unwrap(), e);
    }

    #[test]
    fn boundary_window_is_required() {
        let s = spec1();
        let lam = Region::interval(0, 0);
        let eta = Configuration::empty(s, lam.clone());
        let xi = Configuration::empty(s, Region::interval(1, 1));
        let p = PairPotential::hard_range(0.5, &s).unwrap();
        assert!(matches!(hamiltonian(&eta, &xi, &lam, &p, EnergyOptions::default()), Err(Error::NotInWindow { .. })));
    }

    #[test]
    fn bound_helpers() {
        let s = spec1();
        let lam = Region::interval(0, 0);
        let eta = Configuration::new(s, lam.clone(), [(vec![0.1], vec![2.0])]).unwrap();
        assert_eq!(lower_bound_rhs(&eta, &lam, 0.5, MassMode::Tv), 2.0);
        let empty = Configuration::empty(s, lam.clone());
        assert_eq!(lower_bound_rhs(&empty, &lam, 0.5, MassMode::Tv), 0.0);
        let xi = Configuration::empty(s, s.halo(&lam));
        let p = PairPotential::hard_range(0.5, &s).unwrap();
        assert_eq!(finiteness_bound(&empty, &xi, &lam, &p).unwrap(), 0.0);
    }
}
