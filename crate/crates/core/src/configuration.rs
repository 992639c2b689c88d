//! Finite windows of the cone: `eta = sum_x v_x delta_x` restricted to a
//! bounded union of partition cubes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CubeIndex, PartitionSpec, Region};
use crate::test_function::TestFunction;

/// How a vector cube mass `eta(Q_k)` is turned into a scalar.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassMode {
    /// `sum |v_x|`.
    #[default]
    Tv,
    /// `|sum v_x|`.
    VectorNorm,
}

/// A borrowed view of one atom.
#[derive(Clone, Copy, Debug)]
pub struct Atom<'a> {
    pub position: &'a [f64],
    pub mark: &'a [f64],
    pub cube: &'a CubeIndex,
}

/// Atoms are stored flat (`positions[i*d..(i+1)*d]`) in insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    spec: PartitionSpec,
    window: Region,
    positions: Vec<f64>,
    marks: Vec<f64>,
    cubes: Vec<CubeIndex>,
}

impl Configuration {
    pub fn empty(spec: PartitionSpec, window: Region) -> Self {
        Configuration {
            spec,
            window,
            positions: Vec::new(),
            marks: Vec::new(),
            cubes: Vec::new(),
        }
    }

    /// Build and validate: distinct positions, nonzero finite marks, every
    /// atom inside `window`.
    pub fn new(spec: PartitionSpec, window: Region, atoms: impl IntoIterator<Item = (Vec<f64>, Vec<f64>)>) -> Result<Self> {
        let mut cfg = Configuration::empty(spec, window);
        for (x, v) in atoms {
            cfg.push_checked(&x, &v)?;
        }
        cfg.check_distinct()?;
        Ok(cfg)
    }

    fn push_checked(&mut self, x: &[f64], v: &[f64]) -> Result<()> {
        self.spec.check_point(x)?;
        self.spec.check_point(v)?;
        if v.iter().all(|&c| c == 0.0) {
            return Err(Error::ZeroMark { position: x.to_vec() });
        }
        let k = self.spec.cube_index_unchecked(x);
        if !self.window.contains(&k) {
            return Err(Error::AtomOutsideWindow { position: x.to_vec() });
        }
        self.positions.extend_from_slice(x);
        self.marks.extend_from_slice(v);
        self.cubes.push(k);
        Ok(())
    }

    /// Append an atom known to be valid (sampler output). Distinctness is
    /// the caller's responsibility.
    pub(crate) fn push_unchecked(&mut self, x: &[f64], v: &[f64], k: CubeIndex) {
        debug_assert!(self.window.contains(&k));
        self.positions.extend_from_slice(x);
        self.marks.extend_from_slice(v);
        self.cubes.push(k);
    }

    /// Index of the first atom whose position repeats an earlier one.
    pub(crate) fn first_duplicate(&self) -> Option<usize> {
        let d = self.spec.dim();
        let n = self.len();
        if n < 2 {
            return None;
        }
        let mut idx: Vec<usize> = (0..n).collect();
        let pos = |i: usize| &self.positions[i * d..(i + 1) * d];
        idx.sort_by(|&a, &b| {
            pos(a)
                .iter()
                .zip(pos(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        idx.windows(2).filter(|w| pos(w[0]) == pos(w[1])).map(|w| w[1]).min()
    }

    fn check_distinct(&self) -> Result<()> {
        match self.first_duplicate() {
            Some(i) => Err(Error::DuplicatePosition(self.position(i).to_vec())),
            None => Ok(()),
        }
    }

    pub(crate) fn set_atom(&mut self, i: usize, x: &[f64], v: &[f64], k: CubeIndex) {
        let d = self.spec.dim();
        self.positions[i * d..(i + 1) * d].copy_from_slice(x);
        self.marks[i * d..(i + 1) * d].copy_from_slice(v);
        self.cubes[i] = k;
    }

    pub fn spec(&self) -> &PartitionSpec {
        &self.spec
    }
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }
    pub fn window(&self) -> &Region {
        &self.window
    }
    pub fn len(&self) -> usize {
        self.cubes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        let d = self.spec.dim();
        &self.positions[i * d..(i + 1) * d]
    }
    pub fn mark(&self, i: usize) -> &[f64] {
        let d = self.spec.dim();
        &self.marks[i * d..(i + 1) * d]
    }
    pub fn cube(&self, i: usize) -> &CubeIndex {
        &self.cubes[i]
    }

    pub fn atom(&self, i: usize) -> Atom<'_> {
        Atom {
            position: self.position(i),
            mark: self.mark(i),
            cube: &self.cubes[i],
        }
    }

    pub fn atoms(&self) -> impl Iterator<Item = Atom<'_>> + '_ {
        (0..self.len()).map(move |i| self.atom(i))
    }

    fn require_in_window(&self, region: &Region) -> Result<()> {
        let missing = region.missing_from(&self.window);
        if missing > 0 {
            return Err(Error::NotInWindow { missing });
        }
        Ok(())
    }

    /// `eta_Lambda`: the atoms in `region`, with `region` as the new window.
    pub fn project(&self, region: &Region) -> Result<Configuration> {
        self.require_in_window(region)?;
        Ok(self.restrict(region))
    }

    /// Like [`project`](Self::project) but without the window check; the
    /// new window is `region` regardless.
    pub fn restrict(&self, region: &Region) -> Configuration {
        let mut out = Configuration::empty(self.spec, region.clone());
        for a in self.atoms().filter(|a| region.contains(a.cube)) {
            out.push_unchecked(a.position, a.mark, a.cube.clone());
        }
        out
    }

    /// The atoms outside `region`, with window `self.window \ region`.
    pub fn outside(&self, region: &Region) -> Configuration {
        let window = self.window.difference(region);
        let mut out = Configuration::empty(self.spec, window);
        for a in self.atoms().filter(|a| !region.contains(a.cube)) {
            out.push_unchecked(a.position, a.mark, a.cube.clone());
        }
        out
    }

    /// `eta_Lambda + xi_{Lambda^c}` where `Lambda = inner.window()`: the
    /// boundary `self` with its atoms inside `inner`'s window replaced.
    pub fn glue(&self, inner: &Configuration) -> Configuration {
        let lambda = inner.window();
        let mut out = Configuration::empty(self.spec, self.window.union(lambda));
        for a in inner.atoms() {
            out.push_unchecked(a.position, a.mark, a.cube.clone());
        }
        for a in self.atoms().filter(|a| !lambda.contains(a.cube)) {
            out.push_unchecked(a.position, a.mark, a.cube.clone());
        }
        out
    }

    /// Every mark multiplied by `factor` (nonzero).
    pub fn scale_marks(&self, factor: f64) -> Result<Configuration> {
        if !(factor != 0.0 && factor.is_finite()) {
            return Err(Error::param("factor", "must be finite and nonzero"));
        }
        let mut out = self.clone();
        out.marks.iter_mut().for_each(|v| *v *= factor);
        Ok(out)
    }

    /// `sum_{x in Lambda} v_x`.
    pub fn vector_mass(&self, region: &Region) -> Result<Vec<f64>> {
        self.require_in_window(region)?;
        let mut s = vec![0.0; self.dim()];
        for a in self.atoms().filter(|a| region.contains(a.cube)) {
            s.iter_mut().zip(a.mark).for_each(|(acc, v)| *acc += v);
        }
        Ok(s)
    }

    /// `V_Lambda(eta) = sum_{x in Lambda} |v_x|`.
    pub fn tv_mass(&self, region: &Region) -> Result<f64> {
        self.require_in_window(region)?;
        Ok(self.atoms().filter(|a| region.contains(a.cube)).map(|a| norm(a.mark)).sum())
    }

    /// Scalar mass of `region` under `mode`.
    pub fn mass(&self, region: &Region, mode: MassMode) -> Result<f64> {
        match mode {
            MassMode::Tv => self.tv_mass(region),
            MassMode::VectorNorm => Ok(norm(&self.vector_mass(region)?)),
        }
    }

    pub fn count_in(&self, region: &Region) -> usize {
        self.cubes.iter().filter(|k| region.contains(k)).count()
    }

    /// Scalar mass of every occupied cube (cubes without atoms are absent).
    pub fn cube_masses(&self, mode: MassMode) -> BTreeMap<CubeIndex, f64> {
        match mode {
            MassMode::Tv => {
                let mut out = BTreeMap::new();
                for a in self.atoms() {
                    *out.entry(a.cube.clone()).or_insert(0.0) += norm(a.mark);
                }
                out
            }
            MassMode::VectorNorm => {
                let mut vec: BTreeMap<CubeIndex, Vec<f64>> = BTreeMap::new();
                for a in self.atoms() {
                    let e = vec.entry(a.cube.clone()).or_insert_with(|| vec![0.0; a.mark.len()]);
                    e.iter_mut().zip(a.mark).for_each(|(s, v)| *s += v);
                }
                vec.into_iter().map(|(k, v)| (k, norm(&v))).collect()
            }
        }
    }

    /// `sum_{j in region} mass(Q_j)^2`.
    pub fn squared_cube_mass_sum(&self, region: &Region, mode: MassMode) -> f64 {
        self.cube_masses(mode)
            .into_iter()
            .filter(|(k, _)| region.contains(k))
            .map(|(_, m)| m * m)
            .sum()
    }

    /// `<h (x) psi, eta> = sum_x psi(x) <h, v_x>`.
    pub fn pairing(&self, h: &[f64], psi: &TestFunction) -> Result<f64> {
        if h.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: h.len(),
            });
        }
        self.require_in_window(&psi.support(&self.spec))?;
        Ok(self
            .atoms()
            .map(|a| {
                let p = psi.value(a.position, a.cube);
                if p == 0.0 {
                    0.0
                } else {
                    p * dot(h, a.mark)
                }
            })
            .sum())
    }

    /// `M_alpha(eta)` over the cubes of the window, `|k|` Euclidean.
    pub fn temperedness(&self, alpha_temp: f64, mode: MassMode) -> Result<TemperednessReport> {
        if !(alpha_temp > 0.0 && alpha_temp.is_finite()) {
            return Err(Error::param("alpha_temp", format!("must be positive, got {alpha_temp}")));
        }
        let masses = self.cube_masses(mode);
        let value = masses
            .iter()
            .map(|(k, m)| m * m * (-alpha_temp * k.norm()).exp())
            .sum::<f64>()
            .sqrt();
        Ok(TemperednessReport {
            alpha_temp,
            mode,
            value,
            per_cube: masses.into_iter().collect(),
        })
    }

    /// Line-oriented text form:
    ///
    /// ```text
    /// d 1
    /// delta 0.5
    /// range 1
    /// window 2
    /// 0
    /// 1
    /// atoms 1
    /// 0.1 -0.7
    /// ```
    ///
    /// Atom lines are `x_1 .. x_d v_1 .. v_d`; floats use the shortest
    /// representation that round-trips.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "d {}", self.dim());
        let _ = writeln!(s, "delta {}", self.spec.delta());
        let _ = writeln!(s, "range {}", self.spec.range());
        let _ = writeln!(s, "window {}", self.window.len());
        for k in self.window.iter() {
            let parts: Vec<String> = k.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "{}", parts.join(" "));
        }
        let _ = writeln!(s, "atoms {}", self.len());
        for a in self.atoms() {
            let parts: Vec<String> = a.position.iter().chain(a.mark).map(|c| format!("{c}")).collect();
            let _ = writeln!(s, "{}", parts.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Configuration> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut header = |key: &str| -> Result<(usize, String)> {
            let (n, line) = lines.next().ok_or(Error::Parse {
                line: 0,
                reason: format!("missing `{key}` line"),
            })?;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(Error::Parse {
                    line: n,
                    reason: format!("expected `{key}`"),
                });
            }
            let v = it.next().ok_or(Error::Parse {
                line: n,
                reason: format!("`{key}` needs a value"),
            })?;
            Ok((n, v.to_string()))
        };
        let parse_err = |line: usize, reason: String| Error::Parse { line, reason };
        let (n, d) = header("d")?;
        let d: usize = d.parse().map_err(|e| parse_err(n, format!("{e}")))?;
        let (n, delta) = header("delta")?;
        let delta: f64 = delta.parse().map_err(|e| parse_err(n, format!("{e}")))?;
        let (n, range) = header("range")?;
        let range: f64 = range.parse().map_err(|e| parse_err(n, format!("{e}")))?;
        let spec = PartitionSpec::new(d, delta, range)?;
        let (n, w) = header("window")?;
        let w: usize = w.parse().map_err(|e| parse_err(n, format!("{e}")))?;
        let mut cubes = Vec::with_capacity(w);
        for _ in 0..w {
            let (n, line) = lines.next().ok_or(parse_err(0, "window list truncated".into()))?;
            let k: Vec<i64> = line
                .split_whitespace()
                .map(|t| t.parse::<i64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(n, format!("{e}")))?;
            if k.len() != d {
                return Err(parse_err(n, format!("cube index needs {d} integers")));
            }
            cubes.push(CubeIndex::new(&k));
        }
        let window: Region = cubes.into_iter().collect();
        if window.len() != w {
            return Err(parse_err(0, "window lists a cube twice".into()));
        }
        let (n, line) = lines.next().ok_or(parse_err(0, "missing `atoms` line".into()))?;
        let count: usize = line
            .strip_prefix("atoms")
            .map(str::trim)
            .ok_or(parse_err(n, "expected `atoms`".into()))?
            .parse()
            .map_err(|e| parse_err(n, format!("{e}")))?;
        let mut atoms = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, line) = lines.next().ok_or(parse_err(0, "atom list truncated".into()))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(n, format!("{e}")))?;
            if vals.len() != 2 * d {
                return Err(parse_err(n, format!("atom line needs {} numbers", 2 * d)));
            }
            atoms.push((vals[..d].to_vec(), vals[d..].to_vec()));
        }
        if let Some((n, _)) = lines.next() {
            return Err(parse_err(n, "trailing content after atom list".into()));
        }
        Configuration::new(spec, window, atoms)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TemperednessReport {
    pub alpha_temp: f64,
    pub mode: MassMode,
    /// `M_alpha(eta)`.
    pub value: f64,
    /// Mass of each occupied cube.
    pub per_cube: Vec<(CubeIndex, f64)>,
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
