//! Bounded, compactly supported test functions `psi` for pairings
//! `<h (x) psi, eta> = sum_x psi(x) <h, v_x>`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CubeIndex, PartitionSpec, Region};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Zero,
    /// Constant on each listed cube, zero elsewhere. Sorted by cube.
    PerCube { values: Vec<(CubeIndex, f64)> },
    /// `height * max(0, 1 - |x - center| / radius)`.
    Tent {
        center: Vec<f64>,
        radius: f64,
        height: f64,
    },
}

impl TestFunction {
    pub fn per_cube(values: impl IntoIterator<Item = (CubeIndex, f64)>) -> Result<Self> {
        let mut values: Vec<(CubeIndex, f64)> = values.into_iter().filter(|(_, v)| *v != 0.0).collect();
        if values.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::param("psi", "values must be finite"));
        }
        values.sort_by(|a, b| a.0.cmp(&b.0));
        if values.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::param("psi", "a cube is listed twice"));
        }
        Ok(TestFunction::PerCube { values })
    }

    /// `value` times the indicator of `region`.
    pub fn indicator(region: &Region, value: f64) -> Self {
        TestFunction::per_cube(region.iter().map(|k| (k.clone(), value))).expect("finite indicator")
    }

    pub fn tent(center: Vec<f64>, radius: f64, height: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || !height.is_finite() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("psi", "tent needs finite center and height and a positive radius"));
        }
        Ok(TestFunction::Tent { center, radius, height })
    }

    /// Value at `x`, which lies in cube `k`.
    pub fn value(&self, x: &[f64], k: &CubeIndex) -> f64 {
        match self {
            TestFunction::Zero => 0.0,
            TestFunction::PerCube { values } => match values.binary_search_by(|(c, _)| c.cmp(k)) {
                Ok(i) => values[i].1,
                Err(_) => 0.0,
            },
            TestFunction::Tent { center, radius, height } => {
                let r = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                height * (1.0 - r / radius).max(0.0)
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            TestFunction::Zero => 0.0,
            TestFunction::PerCube { values } => values.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max),
            TestFunction::Tent { height, .. } => height.abs(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sup_norm() == 0.0
    }

    /// Whether `psi` is constant on every cube (so cube-wise factorisation is exact).
    pub fn is_piecewise_constant(&self) -> bool {
        !matches!(self, TestFunction::Tent { .. }) || self.is_zero()
    }

    /// The cubes on which `psi` may be nonzero.
    pub fn support(&self, spec: &PartitionSpec) -> Region {
        match self {
            TestFunction::Zero => Region::empty(),
            TestFunction::PerCube { values } => values.iter().map(|(k, _)| k.clone()).collect(),
            TestFunction::Tent { center, radius, height } => {
                if *height == 0.0 {
                    return Region::empty();
                }
                let lo: Vec<f64> = center.iter().map(|c| c - radius).collect();
                let hi: Vec<f64> = center.iter().map(|c| c + radius).collect();
                let klo = spec.cube_index_unchecked(&lo);
                let khi = spec.cube_index_unchecked(&hi);
                let lo: Vec<i64> = klo.iter().copied().collect();
                let hi: Vec<i64> = khi.iter().copied().collect();
                Region::block(&lo, &hi)
                    .iter()
                    .filter(|k| {
                        // keep cubes whose closed hull meets the ball
                        let (a, b) = spec.cube_bounds(k);
                        let gap2: f64 = center
                            .iter()
                            .zip(a.iter().zip(&b))
                            .map(|(c, (l, u))| (l - c).max(0.0).max(c - u).powi(2))
                            .sum();
                        gap2 < radius * radius
                    })
                    .cloned()
                    .collect()
            }
        }
    }
}
