use serde::Serialize;

use super::{solve_with, ValueSurface};
use crate::closed_form::{edge_value, EdgeSide};
use crate::error::{Error, Result};

/// Sup-norm distance between the rows next to the lateral edges and the
/// edge values, over the asset range every row covers.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EdgeAgreement {
    pub bottom: f64,
    pub top: f64,
    /// Asset levels where the two distances are attained.
    pub bottom_at: f64,
    pub top_at: f64,
    pub nodes: usize,
}

impl EdgeAgreement {
    pub fn worst(&self) -> f64 {
        self.bottom.max(self.top)
    }
}

pub fn edge_agreement(s: &ValueSurface) -> Result<EdgeAgreement> {
    let g = s.grid;
    let p = s.params;
    let v0 = edge_value(EdgeSide::Y0, &p)?;
    let v1 = edge_value(EdgeSide::Y1, &p)?;
    let (f_lo, f_hi) = g.common_asset_range(&p);
    let (jb, jt) = (1, g.n_y - 2);
    let mut out = EdgeAgreement {
        bottom: 0.0,
        top: 0.0,
        bottom_at: f64::NAN,
        top_at: f64::NAN,
        nodes: 0,
    };
    for i in 0..g.n_z {
        let (xb, xt) = (s.asset(i, jb), s.asset(i, jt));
        if (f_lo..=f_hi).contains(&xb) {
            let d = (s.value(i, jb) - v0.value(xb)).abs();
            if d > out.bottom {
                out.bottom = d;
                out.bottom_at = xb;
            }
            out.nodes += 1;
        }
        if (f_lo..=f_hi).contains(&xt) {
            let d = (s.value(i, jt) - v1.value(xt)).abs();
            if d > out.top {
                out.top = d;
                out.top_at = xt;
            }
            out.nodes += 1;
        }
    }
    Ok(out)
}

/// Multiple of the relaxation tolerance allowed when ordering two solves.
pub const LADDER_SLACK: f64 = 100.0;

#[derive(Debug, Clone, Serialize)]
pub struct LadderRung {
    pub cap: f64,
    /// Largest amount by which this rung exceeds the next one, or the
    /// untruncated value on the last rung.
    pub excess_over_next: f64,
    /// Largest `v - v_cap` over nodes with asset level at most `cap / 2`.
    pub gap: f64,
    /// The same over asset levels at most `cap / 4`.
    pub gap_quarter: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderReport {
    pub rungs: Vec<LadderRung>,
    /// Ordering slack: the relaxation stops on an update below its
    /// tolerance, which leaves the iterate within a small multiple of it.
    pub slack: f64,
}

impl LadderReport {
    pub fn max_excess(&self) -> f64 {
        self.rungs.iter().map(|r| r.excess_over_next).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn final_gap(&self) -> f64 {
        self.rungs.last().map_or(f64::NAN, |r| r.gap)
    }
}

/// Solves the capped games for increasing caps with the settings of `full`
/// and compares them with each other and with `full`.
pub fn truncation_ladder(full: &ValueSurface, caps: &[f64]) -> Result<LadderReport> {
    let (p, g) = (&full.params, &full.grid);
    if caps.windows(2).any(|w| !(w[0] < w[1])) || caps.first().is_some_and(|&n| !(n > p.strike())) {
        return Err(Error::grid(format!("payoff caps {caps:?} must increase from above the strike")));
    }
    let mut surfaces = Vec::with_capacity(caps.len());
    for &n in caps {
        surfaces.push(solve_with(p, g, &full.settings, Some(n))?);
    }
    let mut rungs = Vec::with_capacity(caps.len());
    for (k, s) in surfaces.iter().enumerate() {
        let next = surfaces.get(k + 1).unwrap_or(full);
        let mut excess: f64 = f64::NEG_INFINITY;
        let mut gap: f64 = 0.0;
        let mut gap_quarter: f64 = 0.0;
        for i in 0..g.n_z {
            for j in 0..g.n_y {
                let v = s.value(i, j);
                excess = excess.max(v - next.value(i, j));
                let (x, d) = (s.asset(i, j), full.value(i, j) - v);
                if x <= 0.5 * caps[k] {
                    gap = gap.max(d);
                }
                if x <= 0.25 * caps[k] {
                    gap_quarter = gap_quarter.max(d);
                }
            }
        }
        rungs.push(LadderRung {
            cap: caps[k],
            excess_over_next: excess,
            gap,
            gap_quarter,
        });
    }
    Ok(LadderReport {
        rungs,
        slack: LADDER_SLACK * full.settings.tolerance * p.strike(),
    })
}
