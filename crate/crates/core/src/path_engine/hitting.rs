use serde::{Deserialize, Serialize};

use super::PathBatch;
use crate::error::{Error, Result};
use crate::vi_solver::FreeBoundaries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopTarget {
    /// Buyer's exercise set `{y <= c1(z)}`.
    S1,
    /// Seller's cancellation set `{c2(z) <= y <= y_K(z)}`.
    S2,
}

/// Membership in a stopping set whose boundary curve is moved by `shift` in `y`.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryRule<'a> {
    pub fb: &'a FreeBoundaries,
    pub target: StopTarget,
    pub shift: f64,
}

impl<'a> BoundaryRule<'a> {
    pub fn new(fb: &'a FreeBoundaries, target: StopTarget, shift: f64) -> Self {
        BoundaryRule { fb, target, shift }
    }

    pub fn contains(&self, z: f64, y: f64) -> Result<bool> {
        Ok(match self.target {
            StopTarget::S1 => self.fb.c1_at(z)?.is_some_and(|c| y <= c + self.shift),
            StopTarget::S2 => self
                .fb
                .c2_at(z)?
                .is_some_and(|c| y >= c + self.shift && y <= self.fb.yk_at(z)),
        })
    }

    /// Strict interior: `y < c1(z)` or `c2(z) < y < y_K(z)`.
    pub fn contains_strictly(&self, z: f64, y: f64) -> Result<bool> {
        Ok(match self.target {
            StopTarget::S1 => self.fb.c1_at(z)?.is_some_and(|c| y < c + self.shift),
            StopTarget::S2 => self
                .fb
                .c2_at(z)?
                .is_some_and(|c| y > c + self.shift && y < self.fb.yk_at(z)),
        })
    }
}

/// First grid time at which path `path` lies in `target`, or `+inf` if it
/// never does before the horizon.
pub fn hitting_time(batch: &PathBatch, path: usize, fb: &FreeBoundaries, target: StopTarget) -> Result<f64> {
    let zs = batch
        .z_values
        .as_ref()
        .ok_or(Error::SingularTransform { y: batch.start.y })?;
    let rule = BoundaryRule::new(fb, target, 0.0);
    for (i, (&z, &y)) in zs.iter().zip(&batch.y_paths[path]).enumerate() {
        if rule.contains(z, y)? {
            return Ok(batch.times[i]);
        }
    }
    Ok(f64::INFINITY)
}
