use serde::Serialize;

use super::{GridSpec, Region, ValueSurface};
use crate::error::{Error, Result};
use crate::model::{logistic, y_k_curve, ModelParams};

/// Stopping boundaries read off a solved surface.
///
/// `c1`, `c2` are indexed by the z grid and `b1`, `b2` by the y grid; the
/// lateral rows carry `None` for `b1`, `b2`.
#[derive(Debug, Clone, Serialize)]
pub struct FreeBoundaries {
    #[serde(skip)]
    pub params: ModelParams,
    #[serde(skip)]
    pub grid: GridSpec,
    pub zs: Vec<f64>,
    pub ys: Vec<f64>,
    pub c1: Vec<Option<f64>>,
    pub c2: Vec<Option<f64>>,
    pub yk: Vec<f64>,
    pub b1: Vec<Option<f64>>,
    pub b2: Vec<Option<f64>>,
    pub z_k: Option<f64>,
    pub b2_at_k: Option<f64>,
}

/// Position between the last continuation node `a` and the adjacent stopped
/// node where the obstacle gap vanishes. Near a smooth-fit boundary the gap
/// is quadratic in the distance, so its square root is extrapolated linearly
/// from `a` and the next continuation node `b`.
fn crossing(stop: f64, a: f64, gap_a: f64, next: Option<(f64, f64)>) -> f64 {
    let cell = stop - a;
    let frac = match next {
        Some((b, gap_b)) if gap_a > 0.0 && gap_b > gap_a => {
            let (sa, sb) = (gap_a.sqrt(), gap_b.sqrt());
            sa / (sb - sa) * ((a - b) / cell).abs()
        }
        _ => 0.5,
    };
    a + frac.clamp(0.0, 1.0) * cell
}

pub fn extract_boundaries(s: &ValueSurface) -> Result<FreeBoundaries> {
    let g = s.grid;
    let p = s.params;
    let (nz, ny) = (g.n_z, g.n_y);
    if s.count(Region::S1) == 0 {
        return Err(Error::EmptyRegion { region: "S1" });
    }
    let xi = |j: usize| g.xi(j);
    let interior = 1..ny - 1;

    let mut c1 = vec![None; nz];
    let mut c2 = vec![None; nz];
    let mut z_k_index = None;
    for i in 0..nz {
        let gap1 = |j: usize| s.gap_lower(i, j);
        let gap2 = |j: usize| s.gap_upper(i, j);
        if let Some(j1) = (1..ny).rev().find(|&j| s.region_at(i, j) == Region::S1) {
            let a = j1 + 1;
            let val = if a < ny && s.region_at(i, a) == Region::C {
                let next = (a + 1 < ny).then(|| (xi(a + 1), gap1(a + 1)));
                crossing(xi(j1), xi(a), gap1(a), next)
            } else {
                xi(j1)
            };
            c1[i] = Some(logistic(val));
        }
        if let Some(j2) = interior.clone().find(|&j| s.region_at(i, j) == Region::S2) {
            z_k_index = Some(i);
            let val = if j2 >= 2 && s.region_at(i, j2 - 1) == Region::C {
                let a = j2 - 1;
                crossing(xi(j2), xi(a), gap2(a), Some((xi(a - 1), gap2(a - 1))))
            } else {
                xi(j2)
            };
            c2[i] = Some(logistic(val));
        }
    }

    let mut b1 = vec![None; ny];
    let mut b2 = vec![None; ny];
    for j in interior {
        b1[j] = s.rows[j].b1;
        b2[j] = s.rows[j].b2;
    }

    let zs = g.zs();
    let yk = zs.iter().map(|&z| y_k_curve(&p, z)).collect();
    let z_k = z_k_index.map(|i| g.z(i));
    Ok(FreeBoundaries {
        params: p,
        grid: g,
        zs,
        ys: g.ys(),
        c1,
        c2,
        yk,
        b1,
        b2,
        z_k,
        b2_at_k: z_k.map(|z| y_k_curve(&p, z)),
    })
}

impl FreeBoundaries {
    pub fn s2_empty(&self) -> bool {
        self.z_k.is_none()
    }

    fn locate(&self, z: f64) -> Result<(usize, f64)> {
        let (lo, hi) = (self.grid.z_min, self.grid.z_max);
        if !(z >= lo && z <= hi) {
            return Err(Error::OutOfDomain {
                what: "z",
                value: z,
                lo,
                hi,
            });
        }
        let t = (z - lo) / self.grid.dz();
        let i = (t.floor() as usize).min(self.grid.n_z - 2);
        Ok((i, t - i as f64))
    }

    fn interpolate(&self, curve: &[Option<f64>], z: f64) -> Result<Option<f64>> {
        let (i, w) = self.locate(z)?;
        Ok(match (curve[i], curve[i + 1]) {
            (Some(a), Some(b)) => Some(a + w * (b - a)),
            (Some(a), None) if w == 0.0 => Some(a),
            (None, Some(b)) if w == 1.0 => Some(b),
            _ => None,
        })
    }

    /// Buyer's boundary at `z`; `None` when the exercise region does not
    /// reach the grid rows there.
    pub fn c1_at(&self, z: f64) -> Result<Option<f64>> {
        self.interpolate(&self.c1, z)
    }

    /// Lower edge of the seller's region at `z`; `None` beyond `z_K`.
    pub fn c2_at(&self, z: f64) -> Result<Option<f64>> {
        self.interpolate(&self.c2, z)
    }

    pub fn yk_at(&self, z: f64) -> f64 {
        y_k_curve(&self.params, z)
    }

    /// The corner `(z_K, y_K(z_K))` where regularity is not claimed when `k > 0`.
    pub fn exceptional_point(&self) -> Option<(f64, f64)> {
        if self.params.k() > 0.0 {
            self.z_k.zip(self.b2_at_k)
        } else {
            None
        }
    }

    /// Rows where `b1` was found, as `(y, b1, b2)`.
    pub fn asset_rows(&self) -> Vec<(f64, Option<f64>, Option<f64>)> {
        (0..self.ys.len())
            .filter(|&j| self.b1[j].is_some() || self.b2[j].is_some())
            .map(|j| (self.ys[j], self.b1[j], self.b2[j]))
            .collect()
    }
}
