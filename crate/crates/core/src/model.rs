//! Market constants, the two payoffs and the change of variables
//!
//! ```text
//! z = ln x + ratio * ln(y / (1 - y)),      ratio = sigma^2 / delta0
//! x = F(z, y) = e^z * ((1 - y) / y)^ratio
//! ```
//!
//! Along the filtered dynamics z moves deterministically at speed `k`, which
//! is what lets the solver march in z.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEGENERATE_K: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    r: f64,
    delta0: f64,
    sigma: f64,
    strike: f64,
    penalty: f64,
    k: f64,
    ratio: f64,
    assumption_ratio_ok: bool,
    assumption_ratio_strict: bool,
    strong_r: bool,
}

/// The five configurable constants; everything else is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    pub r: f64,
    pub delta0: f64,
    pub sigma: f64,
    pub strike: f64,
    pub penalty: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        validate_params(raw.r, raw.delta0, raw.sigma, raw.strike, raw.penalty)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams {
            r: p.r,
            delta0: p.delta0,
            sigma: p.sigma,
            strike: p.strike,
            penalty: p.penalty,
        }
    }
}

pub fn drift_k(r: f64, delta0: f64, sigma: f64) -> f64 {
    r - 0.5 * sigma * sigma - 0.5 * delta0
}

pub fn validate_params(r: f64, delta0: f64, sigma: f64, strike: f64, penalty: f64) -> Result<ModelParams> {
    for (name, value) in [
        ("r", r),
        ("delta0", delta0),
        ("sigma", sigma),
        ("strike", strike),
        ("penalty", penalty),
    ] {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::NonPositiveParameter { name, value });
        }
    }
    let k = drift_k(r, delta0, sigma);
    if k.abs() < DEGENERATE_K {
        return Err(Error::DegenerateK { k });
    }
    let s2 = sigma * sigma;
    let ratio = s2 / delta0;
    let strong_r = (delta0 / s2) * (delta0 + s2) / 2.0 < r && r < (delta0 + s2) / 2.0;
    Ok(ModelParams {
        r,
        delta0,
        sigma,
        strike,
        penalty,
        k,
        ratio,
        assumption_ratio_ok: ratio >= 1.0,
        assumption_ratio_strict: ratio > 1.0,
        strong_r,
    })
}

impl ModelParams {
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn delta0(&self) -> f64 {
        self.delta0
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn strike(&self) -> f64 {
        self.strike
    }
    pub fn penalty(&self) -> f64 {
        self.penalty
    }
    /// Speed of the transformed coordinate, `z_t = z + k t`.
    pub fn k(&self) -> f64 {
        self.k
    }
    /// `sigma^2 / delta0`.
    pub fn ratio(&self) -> f64 {
        self.ratio
    }
    pub fn assumption_ratio_ok(&self) -> bool {
        self.assumption_ratio_ok
    }
    pub fn assumption_ratio_strict(&self) -> bool {
        self.assumption_ratio_strict
    }
    pub fn strong_r(&self) -> bool {
        self.strong_r
    }

    /// Volatility of the posterior, `delta0 / sigma`.
    pub fn signal(&self) -> f64 {
        self.delta0 / self.sigma
    }

    pub fn raw(&self) -> RawParams {
        (*self).into()
    }

    pub fn with_penalty(&self, penalty: f64) -> Result<ModelParams> {
        validate_params(self.r, self.delta0, self.sigma, self.strike, penalty)
    }

    pub fn with_delta0(&self, delta0: f64) -> Result<ModelParams> {
        validate_params(self.r, delta0, self.sigma, self.strike, self.penalty)
    }

    pub fn g1(&self, x: f64) -> f64 {
        payoff_g1(self, x)
    }

    pub fn g2(&self, x: f64) -> f64 {
        payoff_g2(self, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatePoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformedPoint {
    pub z: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Obstacle {
    Lower,
    Upper,
}

/// Buyer's exercise payoff `(x - K)^+`.
pub fn payoff_g1(p: &ModelParams, x: f64) -> f64 {
    (x - p.strike).max(0.0)
}

/// Seller's cancellation payment, exercise value plus penalty.
pub fn payoff_g2(p: &ModelParams, x: f64) -> f64 {
    payoff_g1(p, x) + p.penalty
}

pub fn logit(y: f64) -> f64 {
    (y / (1.0 - y)).ln()
}

pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `F(z, y)` without the singularity check; callers guarantee `0 < y < 1`.
#[inline]
pub fn asset_level(p: &ModelParams, z: f64, y: f64) -> f64 {
    asset_level_logit(p, z, logit(y))
}

/// `F` written in the logit of `y`.
#[inline]
pub fn asset_level_logit(p: &ModelParams, z: f64, xi: f64) -> f64 {
    (z - p.ratio * xi).exp()
}

fn check_open(y: f64) -> Result<()> {
    if y > 0.0 && y < 1.0 {
        Ok(())
    } else {
        Err(Error::SingularTransform { y })
    }
}

pub fn to_z(p: &ModelParams, s: StatePoint) -> Result<TransformedPoint> {
    check_open(s.y)?;
    if !(s.x > 0.0) {
        return Err(Error::NonPositiveParameter { name: "x", value: s.x });
    }
    Ok(TransformedPoint {
        z: s.x.ln() + p.ratio * logit(s.y),
        y: s.y,
    })
}

pub fn from_z(p: &ModelParams, q: TransformedPoint) -> Result<StatePoint> {
    check_open(q.y)?;
    Ok(StatePoint {
        x: asset_level(p, q.z, q.y),
        y: q.y,
    })
}

/// Posterior level at which `F(z, y) = K`.
pub fn y_k_curve(p: &ModelParams, z: f64) -> f64 {
    logistic((z - p.strike.ln()) / p.ratio)
}

/// `H_i(z, y) = G_i(F(z, y))`.
pub fn obstacle(p: &ModelParams, which: Obstacle, q: TransformedPoint) -> Result<f64> {
    check_open(q.y)?;
    let x = asset_level(p, q.z, q.y);
    Ok(match which {
        Obstacle::Lower => payoff_g1(p, x),
        Obstacle::Upper => payoff_g2(p, x),
    })
}

/// Clamp used only by diagnostics that must evaluate the transform at the edges.
pub fn clamp_diagnostic(y: f64) -> f64 {
    y.clamp(1e-12, 1.0 - 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn desk() -> ModelParams {
        validate_params(0.08, 0.05, 0.3, 1.0, 0.1).unwrap()
    }

    #[test]
    fn desk_derived_fields() {
        let p = desk();
        assert!((p.k() - 0.01).abs() < 1e-15);
        assert!((p.ratio() - 1.8).abs() < 1e-12);
        assert!(p.assumption_ratio_strict());
        assert!(p.assumption_ratio_ok());
    }

    #[test]
    fn negative_k_with_strong_r() {
        let p = validate_params(0.05, 0.05, 0.3, 1.0, 0.1).unwrap();
        assert!((p.k() + 0.02).abs() < 1e-15);
        assert!(p.strong_r());
        assert!(!desk().strong_r());
    }

    #[test]
    fn zero_k_rejected() {
        // r = sigma^2/2 + delta0/2 exactly
        let e = validate_params(0.09, 0.09, 0.3, 1.0, 0.1).unwrap_err();
        assert!(matches!(e, Error::DegenerateK { .. }));
    }

    #[test]
    fn nonpositive_rejected_by_name() {
        let e = validate_params(0.08, 0.05, -0.3, 1.0, 0.1).unwrap_err();
        assert_eq!(e, Error::NonPositiveParameter { name: "sigma", value: -0.3 });
        assert!(validate_params(0.08, 0.05, 0.3, 1.0, f64::NAN).is_err());
        assert!(validate_params(0.0, 0.05, 0.3, 1.0, 0.1).is_err());
    }

    #[test]
    fn payoffs() {
        let p = desk();
        assert_eq!(p.g1(1.0), 0.0);
        assert_eq!(p.g1(2.0), 1.0);
        assert_eq!(p.g2(0.0), 0.1);
    }

    #[test]
    fn transform_examples() {
        let p = desk();
        let s = from_z(&p, TransformedPoint { z: 0.0, y: 0.5 }).unwrap();
        assert!((s.x - 1.0).abs() < 1e-15);
        let q = to_z(&p, StatePoint { x: 1.0, y: 0.5 }).unwrap();
        assert!(q.z.abs() < 1e-15);
        let back = to_z(&p, from_z(&p, TransformedPoint { z: 1.3, y: 0.2 }).unwrap()).unwrap();
        assert!((back.z - 1.3).abs() < 1e-12);
    }

    #[test]
    fn singular_edges() {
        let p = desk();
        assert!(matches!(
            to_z(&p, StatePoint { x: 1.0, y: 0.0 }),
            Err(Error::SingularTransform { .. })
        ));
        assert!(from_z(&p, TransformedPoint { z: 0.0, y: 1.0 }).is_err());
        assert!(obstacle(&p, Obstacle::Lower, TransformedPoint { z: 0.0, y: 1.0 }).is_err());
    }

    #[test]
    fn strike_curve() {
        let p = desk();
        for z in [-2.0, 0.0, 3.0] {
            let y = y_k_curve(&p, z);
            assert!((asset_level(&p, z, y) - p.strike()).abs() < 1e-10);
            let q = TransformedPoint { z, y };
            assert!(obstacle(&p, Obstacle::Lower, q).unwrap().abs() < 1e-10);
            assert!((obstacle(&p, Obstacle::Upper, q).unwrap() - 0.1).abs() < 1e-10);
        }
        assert!(y_k_curve(&p, -50.0) < 1e-6);
        assert!(y_k_curve(&p, 50.0) > 1.0 - 1e-6);
        assert_eq!(y_k_curve(&p, 0.0), 0.5);
        let other = validate_params(0.08, 0.05, 0.3, 2.0, 0.1).unwrap();
        assert!((asset_level(&other, 1.0, y_k_curve(&other, 1.0)) - 2.0).abs() < 1e-10);
    }

    #[test]
    fn serde_reads_only_five_keys() {
        let p: ModelParams =
            serde_json::from_str(r#"{"r":0.08,"delta0":0.05,"sigma":0.3,"strike":1.0,"penalty":0.1}"#).unwrap();
        assert_eq!(p, desk());
        let err = serde_json::from_str::<ModelParams>(
            r#"{"r":0.08,"delta0":0.05,"sigma":0.3,"strike":1.0,"penalty":0.1,"k":5.0}"#,
        );
        assert!(err.is_err());
        let text = serde_json::to_string(&p).unwrap();
        assert!(!text.contains("ratio"));
    }

    #[test]
    fn f_monotone_on_grid() {
        let p = desk();
        for i in 0..40 {
            let z = -3.0 + 0.15 * i as f64;
            for j in 1..40 {
                let y = j as f64 / 40.0;
                let f = asset_level(&p, z, y);
                assert!(asset_level(&p, z + 1e-3, y) > f);
                if j < 39 {
                    let y2 = (j + 1) as f64 / 40.0;
                    assert!(asset_level(&p, z, y2) < f);
                    // y F(z, y) is nonincreasing in y when ratio >= 1
                    assert!(y2 * asset_level(&p, z, y2) <= y * f * (1.0 + 1e-12));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip(x in 1e-6f64..10.0, y in 0.01f64..0.99) {
            let p = desk();
            let q = to_z(&p, StatePoint { x, y }).unwrap();
            let s = from_z(&p, q).unwrap();
            prop_assert!((s.x - x).abs() <= 1e-12 * x.max(1.0) * (1.0 + q.z.abs()));
            let q2 = to_z(&p, s).unwrap();
            prop_assert!((q2.z - q.z).abs() <= 1e-12 * (1.0 + q.z.abs()));
        }

        #[test]
        fn payoffs_lipschitz(a in 0.0f64..5.0, b in 0.0f64..5.0) {
            let p = desk();
            prop_assert!((p.g2(a) - p.g1(a) - 0.1).abs() < 1e-15);
            prop_assert!((p.g1(a) - p.g1(b)).abs() <= (a - b).abs() + 1e-15);
            prop_assert!((p.g2(a) - p.g2(b)).abs() <= (a - b).abs() + 1e-15);
        }

        #[test]
        fn strike_curve_increasing(z in -20.0f64..20.0, dz in 1e-3f64..1.0) {
            let p = desk();
            prop_assert!(y_k_curve(&p, z + dz) > y_k_curve(&p, z));
        }
    }
}
