//! The game with a known dividend indicator.
//!
//! With the indicator known, the asset is a geometric Brownian motion with
//! dividend yield `delta`. Every value function below is built from the two
//! fundamental solutions `x^lambda1` and `x^lambda2` of
//!
//! ```text
//! (sigma^2 / 2) l^2 + (r - delta - sigma^2 / 2) l - r = 0,   lambda2 < 0 < 1 <= lambda1
//! ```
//!
//! These supply the lateral boundary data of the PDE solver at `y = 0` and
//! `y = 1`, and the oracles for its top row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::roots::{bisect, bisect_from_above, safeguarded_newton};

const PRICE_BRACKET: f64 = 1e6;
const DIVIDEND_LO: f64 = 1e-6;
const DIVIDEND_XTOL: f64 = 1e-13;
const CASE_TIE: f64 = 1e-10;
const SYSTEM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPair {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl LambdaPair {
    pub fn spread(&self) -> f64 {
        self.lambda1 - self.lambda2
    }
}

pub fn lambda_roots(p: &ModelParams, delta: f64) -> LambdaPair {
    let s2 = p.sigma() * p.sigma();
    if delta == 0.0 {
        return LambdaPair {
            lambda1: 1.0,
            lambda2: -2.0 * p.r() / s2,
        };
    }
    let a = 0.5 * s2;
    let b = p.r() - delta - 0.5 * s2;
    let c = -p.r();
    let disc = (b * b - 4.0 * a * c).sqrt();
    let q = -0.5 * (b + b.signum() * disc);
    let (u, v) = (q / a, c / q);
    LambdaPair {
        lambda1: u.max(v),
        lambda2: u.min(v),
    }
}

pub fn quadratic_residual(p: &ModelParams, delta: f64, l: f64) -> f64 {
    let s2 = p.sigma() * p.sigma();
    0.5 * s2 * l * l + (p.r() - delta - 0.5 * s2) * l - p.r()
}

/// Buyer's perpetual call when the seller never cancels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerpetualCall {
    pub threshold: f64,
    pub lambda1: f64,
    pub strike: f64,
}

impl PerpetualCall {
    pub fn value(&self, x: f64) -> f64 {
        if x >= self.threshold {
            x - self.strike
        } else {
            (self.threshold - self.strike) * (x / self.threshold).powf(self.lambda1)
        }
    }

    pub fn slope(&self, x: f64) -> f64 {
        if x >= self.threshold {
            1.0
        } else {
            self.lambda1 * (self.threshold - self.strike) / self.threshold
                * (x / self.threshold).powf(self.lambda1 - 1.0)
        }
    }
}

pub fn perpetual_call(p: &ModelParams) -> PerpetualCall {
    perpetual_at(p, p.delta0())
}

pub fn perpetual_at(p: &ModelParams, delta: f64) -> PerpetualCall {
    let l1 = lambda_roots(p, delta).lambda1;
    PerpetualCall {
        threshold: l1 * p.strike() / (l1 - 1.0),
        lambda1: l1,
        strike: p.strike(),
    }
}

/// Buyer's problem above the strike when the seller cancels at the first
/// visit to `K`. On `(K, threshold)` the value is
/// `a (x/K)^lambda1 + b (x/K)^lambda2` with `a + b = eps0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CancelAtStrike {
    pub threshold: f64,
    pub a: f64,
    pub b: f64,
    pub lambdas: LambdaPair,
    pub strike: f64,
    pub penalty: f64,
}

impl CancelAtStrike {
    /// Matches the value `eps0` at `K` and `th - K` at `th`. Only the
    /// decaying solution is evaluated at `th`, where it is small, so nothing
    /// is divided by it.
    fn through(th: f64, l: LambdaPair, strike: f64, penalty: f64) -> Self {
        let t = th / strike;
        let (g1, g2) = (t.powf(l.lambda1), t.powf(l.lambda2));
        let a = (th - strike - penalty * g2) / (g1 - g2);
        CancelAtStrike {
            threshold: th,
            a,
            b: penalty - a,
            lambdas: l,
            strike,
            penalty,
        }
    }

    /// `x f'(x) - x` at the threshold; zero under smooth fit.
    fn fit_gap(&self) -> f64 {
        let t = self.threshold / self.strike;
        let l = self.lambdas;
        let g2 = t.powf(l.lambda2);
        // `a t^lambda1` without forming `t^lambda1`, which overflows for large `t`
        let grow = (self.threshold - self.strike - self.penalty * g2) / (1.0 - t.powf(l.lambda2 - l.lambda1));
        l.lambda1 * grow + l.lambda2 * self.b * g2 - self.threshold
    }

    pub fn value(&self, x: f64) -> f64 {
        if x >= self.threshold {
            x - self.strike
        } else if x <= self.strike {
            self.penalty
        } else {
            let t = x / self.strike;
            self.a * t.powf(self.lambdas.lambda1) + self.b * t.powf(self.lambdas.lambda2)
        }
    }

    /// Right derivative at the strike.
    pub fn slope_at_strike(&self) -> f64 {
        let l = self.lambdas;
        (self.a * l.lambda1 + self.b * l.lambda2) / self.strike
    }
}

pub fn cancel_at_strike(p: &ModelParams, delta: f64) -> Result<CancelAtStrike> {
    let l = lambda_roots(p, delta);
    let (k, e) = (p.strike(), p.penalty());
    let gap = |th: f64| CancelAtStrike::through(th, l, k, e).fit_gap();
    let th = bisect(gap, k * (1.0 + 1e-12), PRICE_BRACKET * k, 1e-15 * k, "cancel-at-strike threshold")
        .map_err(|_| Error::NoRoot {
            what: "cancel-at-strike threshold",
        })?;
    Ok(CancelAtStrike::through(th, l, k, e))
}

pub fn value_vk(p: &ModelParams, x: f64) -> Result<f64> {
    Ok(cancel_at_strike(p, p.delta0())?.value(x))
}

/// Doubles `hi` from `10 r` until `f(hi) < 0`; both critical conditions turn
/// negative once the dividend is large enough to pull the threshold to `K`.
fn dividend_ceiling(p: &ModelParams, f: impl Fn(f64) -> f64, what: &'static str) -> Result<f64> {
    let mut hi = 10.0 * p.r();
    for _ in 0..40 {
        if f(hi) < 0.0 {
            return Ok(hi);
        }
        hi *= 2.0;
    }
    Err(Error::NoBracket {
        what,
        lo: DIVIDEND_LO,
        hi,
    })
}

/// `(delta1, delta2)`, or `None` when the penalty is at least the strike.
pub fn critical_dividends(p: &ModelParams) -> Result<Option<(f64, f64)>> {
    if p.penalty() >= p.strike() {
        return Ok(None);
    }
    let k = p.strike();
    let e = p.penalty();
    let perpetual_gap = |d: f64| perpetual_at(p, d).value(k) - e;
    let slope_gap = |d: f64| match cancel_at_strike(p, d) {
        Ok(c) => c.slope_at_strike() - 1.0,
        Err(_) => f64::NAN,
    };
    let hi = dividend_ceiling(p, perpetual_gap, "delta2")?;
    let delta2 = bisect_from_above(perpetual_gap, DIVIDEND_LO, hi, DIVIDEND_XTOL, "delta2")?;
    let hi = dividend_ceiling(p, slope_gap, "delta1")?;
    let delta1 = bisect_from_above(slope_gap, DIVIDEND_LO, hi, DIVIDEND_XTOL, "delta1")?;
    Ok(Some((delta1, delta2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseId {
    Case1,
    Case2,
    Case3,
    Case4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompleteInfoSolution {
    pub case_id: CaseId,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub alpha0: Option<f64>,
    pub alpha1: Option<f64>,
    pub beta1: Option<f64>,
    pub buyer_threshold_nodiv: f64,
}

impl CompleteInfoSolution {
    /// Left end of the buyer's stopping set at `y = 1`.
    pub fn buyer_boundary_y1(&self) -> f64 {
        match self.case_id {
            CaseId::Case1 | CaseId::Case2 => self.buyer_threshold_nodiv,
            CaseId::Case3 => self.alpha0.expect("case 3 carries alpha0"),
            CaseId::Case4 => self.alpha1.expect("case 4 carries alpha1"),
        }
    }
}

pub fn classify_case(p: &ModelParams) -> Result<CompleteInfoSolution> {
    let mut out = CompleteInfoSolution {
        case_id: CaseId::Case1,
        delta1: None,
        delta2: None,
        alpha0: None,
        alpha1: None,
        beta1: None,
        buyer_threshold_nodiv: perpetual_call(p).threshold,
    };
    let Some((d1, d2)) = critical_dividends(p)? else {
        return Ok(out);
    };
    out.delta1 = Some(d1);
    out.delta2 = Some(d2);
    let d0 = p.delta0();
    if d0 <= d1 + CASE_TIE {
        out.case_id = CaseId::Case4;
        let (a1, b1) = solve_alpha1_beta1(p)?;
        out.alpha1 = Some(a1);
        out.beta1 = Some(b1);
    } else if d0 <= d2 + CASE_TIE {
        out.case_id = CaseId::Case3;
        out.alpha0 = Some(solve_alpha0(p)?);
    } else {
        out.case_id = CaseId::Case2;
    }
    Ok(out)
}

/// Relative residual of the smooth-fit condition at `a` (value `ga`, slope 1)
/// combined with value `gc` at `c`, after division by `a^(lambda1-lambda2)`.
/// The scale is the sum of the magnitudes of the four summands.
fn fit_residual(l: LambdaPair, a: f64, ga: f64, c: f64, gc: f64) -> f64 {
    let d = l.spread();
    let s = c / a;
    let t1 = ga / a * l.lambda1 - 1.0;
    let t2 = -(ga / a * l.lambda2 - 1.0) * s.powf(d);
    let t3 = -(gc / c) * d * s.powf(1.0 - l.lambda2);
    let scale = (ga / a * l.lambda1).abs() + 1.0 + t2.abs() + t3.abs();
    (t1 + t2 + t3) / scale
}

pub fn alpha0_residual(p: &ModelParams, a: f64) -> f64 {
    let l = lambda_roots(p, p.delta0());
    let k = p.strike();
    fit_residual(l, a, a - k, k, p.penalty())
}

pub fn solve_alpha0(p: &ModelParams) -> Result<f64> {
    let k = p.strike();
    safeguarded_newton(|a| alpha0_residual(p, a), k, PRICE_BRACKET * k, "alpha0")
}

pub fn alpha1_beta1_residuals(p: &ModelParams, alpha1: f64, beta1: f64) -> [f64; 2] {
    let l = lambda_roots(p, p.delta0());
    let (k, e) = (p.strike(), p.penalty());
    [
        fit_residual(l, alpha1, alpha1 - k, beta1, beta1 - k + e),
        fit_residual(l, beta1, beta1 - k + e, alpha1, alpha1 - k),
    ]
}

/// First sign change of `f` on a log-spaced scan of `[lo, hi]`, as a bracket.
fn first_crossing(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Option<(f64, f64)> {
    let step = (hi / lo).ln() / n as f64;
    let mut prev = (lo, f(lo));
    for i in 1..=n {
        let x = lo * (step * i as f64).exp();
        let fx = f(x);
        if fx.signum() != prev.1.signum() && fx.is_finite() && prev.1.is_finite() {
            return Some((prev.0, x));
        }
        prev = (x, fx);
    }
    None
}

pub fn solve_alpha1_beta1(p: &ModelParams) -> Result<(f64, f64)> {
    let k = p.strike();
    let top = perpetual_call(p).threshold;
    let a_hi = (50.0 * top).min(PRICE_BRACKET * k);
    let b_hi = (2.0 * top).min(a_hi);
    let admissible = |u: [f64; 2]| {
        let (a, b) = (u[0].exp(), u[1].exp());
        b > k && a > b && a < PRICE_BRACKET * k
    };

    // Both residuals also fade as a and b grow together, so the pair is
    // bracketed one condition at a time: the buyer's fit fixes a for each b,
    // and b is the first crossing of the seller's fit above the strike.
    let a_of = |b: f64| -> Option<f64> {
        let f = |a: f64| alpha1_beta1_residuals(p, a, b)[0];
        let (lo, hi) = first_crossing(f, b * (1.0 + 1e-6), a_hi, 400)?;
        bisect(f, lo, hi, 1e-15 * hi, "alpha1").ok()
    };
    let g = |b: f64| a_of(b).map_or(f64::NAN, |a| alpha1_beta1_residuals(p, a, b)[1]);
    let (lo, hi) = first_crossing(g, k * (1.0 + 1e-9), b_hi, 200).ok_or(Error::NoBracket {
        what: "beta1",
        lo: k,
        hi: b_hi,
    })?;
    let b = bisect(g, lo, hi, 1e-15 * hi, "beta1")?;
    let a = a_of(b).ok_or(Error::NoRoot { what: "alpha1" })?;

    let resid = |u: [f64; 2]| alpha1_beta1_residuals(p, u[0].exp(), u[1].exp());
    let mut u = [a.ln(), b.ln()];
    let mut f = resid(u);
    let mut fnorm = f[0].abs().max(f[1].abs());
    let mut iterations = 0;
    while fnorm > 1e-14 && iterations < 200 {
        iterations += 1;
        let h = 1e-7;
        let mut jac = [[0.0; 2]; 2];
        for col in 0..2 {
            let mut up = u;
            let mut dn = u;
            up[col] += h;
            dn[col] -= h;
            let (fu, fd) = (resid(up), resid(dn));
            for row in 0..2 {
                jac[row][col] = (fu[row] - fd[row]) / (2.0 * h);
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let step = [
            -(jac[1][1] * f[0] - jac[0][1] * f[1]) / det,
            -(-jac[1][0] * f[0] + jac[0][0] * f[1]) / det,
        ];
        let mut damp = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = [u[0] + damp * step[0], u[1] + damp * step[1]];
            if admissible(trial) {
                let ft = resid(trial);
                let tn = ft[0].abs().max(ft[1].abs());
                if tn < fnorm {
                    u = trial;
                    f = ft;
                    fnorm = tn;
                    accepted = true;
                    break;
                }
            }
            damp *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let (a, b) = (u[0].exp(), u[1].exp());
    if fnorm >= SYSTEM_TOL || !(k < b && b < a) {
        return Err(Error::NoConvergence {
            what: "alpha1/beta1 system",
            iterations,
            residual: fnorm,
        });
    }
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeSide {
    /// `y = 0`: no dividend.
    Y0,
    /// `y = 1`: dividend paid at rate `delta0`.
    Y1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PieceRule {
    Exercise,
    Cancel,
    Linear { slope: f64 },
    /// `a (x/x_ref)^lambda1 + b (x/x_ref)^lambda2`
    Fundamental { x_ref: f64, a: f64, b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub rule: PieceRule,
}

/// Piecewise analytic value along one edge of the posterior range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeValueFn {
    pub side: EdgeSide,
    pub lambdas: LambdaPair,
    pub strike: f64,
    pub penalty: f64,
    pub pieces: Vec<Piece>,
}

impl EdgeValueFn {
    fn piece(&self, x: f64) -> &Piece {
        self.pieces
            .iter()
            .find(|pc| x < pc.hi)
            .unwrap_or_else(|| self.pieces.last().expect("edge function has pieces"))
    }

    pub fn value(&self, x: f64) -> f64 {
        match self.piece(x).rule {
            PieceRule::Exercise => (x - self.strike).max(0.0),
            PieceRule::Cancel => (x - self.strike).max(0.0) + self.penalty,
            PieceRule::Linear { slope } => slope * x,
            PieceRule::Fundamental { x_ref, a, b } => {
                let t = x / x_ref;
                a * t.powf(self.lambdas.lambda1) + b * t.powf(self.lambdas.lambda2)
            }
        }
    }

    /// `value(x) - (x - K)`, exact on the exercise and cancellation pieces.
    pub fn excess(&self, x: f64) -> f64 {
        let below = (self.strike - x).max(0.0);
        match self.piece(x).rule {
            PieceRule::Exercise => below,
            PieceRule::Cancel => below + self.penalty,
            PieceRule::Linear { slope } => (slope - 1.0) * x + self.strike,
            PieceRule::Fundamental { .. } => self.value(x) - x + self.strike,
        }
    }

    pub fn slope(&self, x: f64) -> f64 {
        match self.piece(x).rule {
            PieceRule::Exercise | PieceRule::Cancel => {
                if x > self.strike {
                    1.0
                } else {
                    0.0
                }
            }
            PieceRule::Linear { slope } => slope,
            PieceRule::Fundamental { x_ref, a, b } => {
                let t = x / x_ref;
                let l = self.lambdas;
                (a * l.lambda1 * t.powf(l.lambda1) + b * l.lambda2 * t.powf(l.lambda2)) / x
            }
        }
    }

    /// Interior breakpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces[..self.pieces.len() - 1].iter().map(|pc| pc.hi).collect()
    }
}

/// Combination through `(lo, g_lo)` and `(hi, g_hi)`.
fn two_point(lo: f64, g_lo: f64, hi: f64, g_hi: f64, l: LambdaPair) -> PieceRule {
    let t = lo / hi;
    let (q1, q2) = (t.powf(l.lambda1), t.powf(l.lambda2));
    // both directly: `g_hi - a` would cancel when `q2` is large
    let a = (g_lo - g_hi * q2) / (q1 - q2);
    let b = (g_hi * q1 - g_lo) / (q1 - q2);
    PieceRule::Fundamental { x_ref: hi, a, b }
}

pub fn edge_value(side: EdgeSide, p: &ModelParams) -> Result<EdgeValueFn> {
    let (k, e) = (p.strike(), p.penalty());
    let inf = f64::INFINITY;
    let case = classify_case(p)?;
    let (lambdas, pieces) = match side {
        EdgeSide::Y0 => {
            let l = lambda_roots(p, 0.0);
            let pieces = if case.case_id == CaseId::Case1 {
                vec![Piece { lo: 0.0, hi: inf, rule: PieceRule::Linear { slope: 1.0 } }]
            } else {
                vec![
                    Piece { lo: 0.0, hi: k, rule: PieceRule::Linear { slope: e / k } },
                    Piece { lo: k, hi: inf, rule: PieceRule::Cancel },
                ]
            };
            (l, pieces)
        }
        EdgeSide::Y1 => {
            let l = lambda_roots(p, p.delta0());
            let below_strike = PieceRule::Fundamental { x_ref: k, a: e, b: 0.0 };
            let pieces = match case.case_id {
                CaseId::Case1 | CaseId::Case2 => {
                    let pc = perpetual_call(p);
                    vec![
                        Piece {
                            lo: 0.0,
                            hi: pc.threshold,
                            rule: PieceRule::Fundamental { x_ref: pc.threshold, a: pc.threshold - k, b: 0.0 },
                        },
                        Piece { lo: pc.threshold, hi: inf, rule: PieceRule::Exercise },
                    ]
                }
                CaseId::Case3 => {
                    let a0 = case.alpha0.expect("case 3 carries alpha0");
                    vec![
                        Piece { lo: 0.0, hi: k, rule: below_strike },
                        Piece { lo: k, hi: a0, rule: two_point(k, e, a0, a0 - k, l) },
                        Piece { lo: a0, hi: inf, rule: PieceRule::Exercise },
                    ]
                }
                CaseId::Case4 => {
                    let a1 = case.alpha1.expect("case 4 carries alpha1");
                    let b1 = case.beta1.expect("case 4 carries beta1");
                    vec![
                        Piece { lo: 0.0, hi: k, rule: below_strike },
                        Piece { lo: k, hi: b1, rule: PieceRule::Cancel },
                        Piece { lo: b1, hi: a1, rule: two_point(b1, b1 - k + e, a1, a1 - k, l) },
                        Piece { lo: a1, hi: inf, rule: PieceRule::Exercise },
                    ]
                }
            };
            (l, pieces)
        }
    };
    Ok(EdgeValueFn {
        side,
        lambdas,
        strike: k,
        penalty: e,
        pieces,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YFundamental {
    pub psi: f64,
    pub phi: f64,
    pub beta: f64,
}

/// Increasing and decreasing solutions of the posterior's own generator.
pub fn y_fundamental(p: &ModelParams, y: f64) -> YFundamental {
    let beta = p.ratio() + 1.0;
    YFundamental {
        psi: y.powf(beta) * (1.0 - y).powf(1.0 - beta),
        phi: y.powf(1.0 - beta) * (1.0 - y).powf(beta),
        beta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_params;
    use proptest::prelude::*;

    fn desk() -> ModelParams {
        validate_params(0.08, 0.05, 0.3, 1.0, 0.1).unwrap()
    }

    fn case4() -> ModelParams {
        validate_params(0.08, 0.03, 0.3, 1.0, 0.1).unwrap()
    }

    #[test]
    fn lambda_without_dividend() {
        let p = validate_params(0.05, 0.05, 0.3, 1.0, 0.1).unwrap();
        let l = lambda_roots(&p, 0.0);
        assert_eq!(l.lambda1, 1.0);
        assert!((l.lambda2 + 10.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn lambda_quadratic_formula_oracle() {
        let p = desk();
        let l = lambda_roots(&p, 0.1);
        let (a, b, c): (f64, f64, f64) = (0.045, -0.065, -0.08);
        let d = (b * b - 4.0 * a * c).sqrt();
        assert!((l.lambda1 - (-b + d) / (2.0 * a)).abs() < 1e-12);
        assert!((l.lambda2 - (-b - d) / (2.0 * a)).abs() < 1e-12);
        assert!((l.lambda1 * l.lambda2 + 2.0 * 0.08 / 0.09).abs() < 1e-10);
        for delta in [0.0, 0.01, 0.05, 0.3, 2.0] {
            let l = lambda_roots(&p, delta);
            assert!(quadratic_residual(&p, delta, l.lambda1).abs() < 1e-10);
            assert!(quadratic_residual(&p, delta, l.lambda2).abs() < 1e-10);
            assert!(l.lambda1 >= 1.0 && l.lambda2 < 0.0);
        }
    }

    #[test]
    fn perpetual_smooth_fit() {
        let pc = perpetual_call(&desk());
        let x = pc.threshold;
        assert!((pc.value(x) - (x - 1.0)).abs() < 1e-14);
        let h = 1e-6;
        let left = (pc.value(x) - pc.value(x - h)) / h;
        let right = (pc.value(x + h) - pc.value(x)) / h;
        assert!((left - 1.0).abs() < 1e-5 && (right - 1.0).abs() < 1e-5);
        assert!(pc.value(1e-12) < 1e-12);
    }

    #[test]
    fn perpetual_threshold_maximizes_payoff_ratio() {
        // golden-section search over thresholds h of (h - K)(x/h)^lambda1
        let p = desk();
        let l1 = lambda_roots(&p, 0.05).lambda1;
        let obj = |h: f64| (h - 1.0) * (0.5 / h).powf(l1);
        let (mut a, mut b) = (1.0, 50.0);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if obj(c) > obj(d) {
                b = d;
            } else {
                a = c;
            }
        }
        assert!((0.5 * (a + b) - perpetual_call(&p).threshold).abs() < 1e-6);
        assert!((perpetual_call(&p).threshold - 2.959338662).abs() < 1e-6);
    }

    #[test]
    fn vk_boundary_and_dominance() {
        let p = desk();
        assert!((value_vk(&p, 1.0).unwrap() - 0.1).abs() < 1e-12);
        for i in 0..200 {
            let x = 1.0 + 0.03 * i as f64;
            assert!(value_vk(&p, x).unwrap() >= x - 1.0 - 1e-12);
        }
        let c = cancel_at_strike(&p, 0.05).unwrap();
        assert!((c.threshold - 2.38914703670934).abs() < 1e-8);
    }

    /// Projected over-relaxation on a log grid for the buyer's problem with
    /// the seller cancelling at K: min((r - L) f, f - (x - K)) = 0 on (K, X),
    /// f(K) = eps.
    fn vk_oracle(p: &ModelParams, xs: &[f64]) -> Vec<f64> {
        let n = 801;
        let (s0, s1) = (p.strike().ln(), (20.0 * p.strike()).ln());
        let h = (s1 - s0) / (n - 1) as f64;
        let s2 = p.sigma() * p.sigma();
        let mu = p.r() - p.delta0() - 0.5 * s2;
        let lo = 0.5 * s2 / (h * h) - mu / (2.0 * h);
        let up = 0.5 * s2 / (h * h) + mu / (2.0 * h);
        let dg = s2 / (h * h) + p.r();
        let g: Vec<f64> = (0..n).map(|i| (s0 + i as f64 * h).exp() - p.strike()).collect();
        let mut f = g.clone();
        f[0] = p.penalty();
        let omega = 2.0 / (1.0 + (std::f64::consts::PI / n as f64).sin());
        for _ in 0..2_000_000 {
            let mut change: f64 = 0.0;
            for i in 1..n - 1 {
                let gs = (lo * f[i - 1] + up * f[i + 1]) / dg;
                let next = (f[i] + omega * (gs - f[i])).max(g[i]);
                change = change.max((next - f[i]).abs());
                f[i] = next;
            }
            if change < 1e-14 {
                break;
            }
        }
        xs.iter()
            .map(|&x| {
                let t = (x.ln() - s0) / h;
                let i = t.floor() as usize;
                let w = t - i as f64;
                f[i] * (1.0 - w) + f[i + 1] * w
            })
            .collect()
    }

    #[test]
    fn vk_matches_obstacle_oracle() {
        let p = desk();
        let xs = [1.1, 1.5, 2.0, 2.3, 3.0];
        let oracle = vk_oracle(&p, &xs);
        for (x, o) in xs.iter().zip(oracle) {
            let v = value_vk(&p, *x).unwrap();
            assert!((v - o).abs() / o < 1e-4, "x={x} closed={v} oracle={o}");
        }
    }

    #[test]
    fn critical_dividends_desk() {
        let p = desk();
        let (d1, d2) = critical_dividends(&p).unwrap().unwrap();
        assert!(d1 < d2);
        assert!((d1 - 0.04648282494537905).abs() < 1e-8);
        assert!((d2 - 0.2044634171602893).abs() < 1e-8);
        assert!((perpetual_at(&p, d2).value(1.0) - 0.1).abs() < 1e-8);
        assert!(critical_dividends(&p.with_penalty(1.5).unwrap()).unwrap().is_none());
    }

    #[test]
    fn delta1_slope_by_independent_differentiation() {
        let p = desk();
        let (d1, _) = critical_dividends(&p).unwrap().unwrap();
        let c = cancel_at_strike(&p, d1).unwrap();
        // unnormalised coefficients of A x^l1 + B x^l2 and their derivative at K
        let l = lambda_roots(&p, d1);
        let th = c.threshold;
        let big_a = (th - l.lambda2 * (th - 1.0)) / (l.spread() * th.powf(l.lambda1));
        let big_b = (l.lambda1 * (th - 1.0) - th) / (l.spread() * th.powf(l.lambda2));
        let slope = big_a * l.lambda1 + big_b * l.lambda2;
        assert!((slope - 1.0).abs() < 1e-6);
        let fd = (c.value(1.0 + 1e-7) - c.value(1.0)) / 1e-7;
        assert!((fd - 1.0).abs() < 1e-5);
    }

    #[test]
    fn classification_examples() {
        let p = desk();
        let sol = classify_case(&p).unwrap();
        assert_eq!(sol.case_id, CaseId::Case3);
        let c1 = classify_case(&p.with_penalty(2.0).unwrap()).unwrap();
        assert_eq!(c1.case_id, CaseId::Case1);
        assert!(c1.delta1.is_none());
        let d2 = sol.delta2.unwrap();
        let c2 = classify_case(&p.with_delta0(d2 + 0.01).unwrap()).unwrap();
        assert_eq!(c2.case_id, CaseId::Case2);
        let c4 = classify_case(&case4()).unwrap();
        assert_eq!(c4.case_id, CaseId::Case4);
        let (a1, b1) = (c4.alpha1.unwrap(), c4.beta1.unwrap());
        assert!(1.0 < b1 && b1 < a1);
    }

    #[test]
    fn ties_go_to_higher_case() {
        let p = desk();
        let (d1, d2) = critical_dividends(&p).unwrap().unwrap();
        let at_d2 = classify_case(&p.with_delta0(d2).unwrap()).unwrap();
        assert_eq!(at_d2.case_id, CaseId::Case3);
        let below_d1 = classify_case(&p.with_delta0(d1 - 1e-4).unwrap()).unwrap();
        assert_eq!(below_d1.case_id, CaseId::Case4);
    }

    #[test]
    fn alpha0_root() {
        let p = desk();
        let a0 = solve_alpha0(&p).unwrap();
        assert!(alpha0_residual(&p, a0).abs() < 1e-10);
        assert!(a0 > 1.0);
        // the buyer's threshold at y = 1 is the cancel-at-strike threshold
        assert!((a0 - cancel_at_strike(&p, 0.05).unwrap().threshold).abs() < 1e-9);
    }

    #[test]
    fn alpha0_meets_perpetual_threshold_at_case_boundary() {
        let p = desk();
        let (_, d2) = critical_dividends(&p).unwrap().unwrap();
        let q = p.with_delta0(d2 - 1e-9).unwrap();
        let a0 = solve_alpha0(&q).unwrap();
        let xs = perpetual_call(&q).threshold;
        assert!((a0 - xs).abs() / xs < 1e-4, "{a0} vs {xs}");
    }

    #[test]
    fn alpha1_beta1_system() {
        let p = case4();
        let (a1, b1) = solve_alpha1_beta1(&p).unwrap();
        let r = alpha1_beta1_residuals(&p, a1, b1);
        assert!(r[0].abs() < 1e-8 && r[1].abs() < 1e-8);
        assert!((a1 - 3.8804995393460464).abs() < 1e-7);
        assert!((b1 - 1.5099454870907127).abs() < 1e-7);
    }

    #[test]
    fn alpha1_beta1_found_when_the_seller_threshold_is_close_to_strike() {
        let p = validate_params(0.11614125628026131, 0.0305241219407007, 0.25, 1.0, 0.401829076134038).unwrap();
        let (a1, b1) = solve_alpha1_beta1(&p).unwrap();
        let r = alpha1_beta1_residuals(&p, a1, b1);
        assert!(r[0].abs() < 1e-8 && r[1].abs() < 1e-8, "{r:?}");
        assert!(b1 > 1.03 && b1 < 1.1 && a1 > 5.0 && a1 < 5.1, "{a1} {b1}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn alpha1_beta1_solves_across_case4(
            r in 0.04..0.15f64,
            frac in 0.05..0.999f64,
            sigma in 0.15..0.45f64,
            penalty in 0.02..0.8f64,
        ) {
            let base = validate_params(r, 0.05, sigma, 1.0, penalty).unwrap();
            let Some((d1, _)) = critical_dividends(&base).unwrap() else { return Ok(()); };
            let Ok(p) = base.with_delta0(frac * d1) else { return Ok(()); };
            prop_assume!(p.k().abs() > 1e-3);
            let (a1, b1) = solve_alpha1_beta1(&p).unwrap();
            let res = alpha1_beta1_residuals(&p, a1, b1);
            prop_assert!(res[0].abs() < 1e-8 && res[1].abs() < 1e-8);
            prop_assert!(1.0 < b1 && b1 < a1);
        }
    }

    #[test]
    fn beta1_tends_to_strike_near_delta1() {
        let p = desk();
        let (d1, _) = critical_dividends(&p).unwrap().unwrap();
        let q = p.with_delta0(d1 - 1e-6).unwrap();
        let (a1, b1) = solve_alpha1_beta1(&q).unwrap();
        assert!((b1 - 1.0).abs() < 1e-3, "beta1 = {b1}");
        let a0 = cancel_at_strike(&q, q.delta0()).unwrap().threshold;
        assert!((a1 - a0).abs() / a0 < 1e-3);
    }

    #[test]
    fn thresholds_nondecreasing_in_penalty() {
        let base = desk();
        let mut last = 0.0;
        let mut seen = 0;
        for i in 0..12 {
            let p = base.with_penalty(0.1 + 0.02 * i as f64).unwrap();
            let sol = classify_case(&p).unwrap();
            if let Some(a0) = sol.alpha0 {
                assert!(a0 >= last - 1e-9);
                last = a0;
                seen += 1;
            }
        }
        assert!(seen >= 4);
        let base4 = case4();
        let mut last = 0.0;
        for i in 0..6 {
            let p = base4.with_penalty(0.08 + 0.01 * i as f64).unwrap();
            let sol = classify_case(&p).unwrap();
            if sol.case_id == CaseId::Case4 {
                let a1 = sol.alpha1.unwrap();
                assert!(a1 >= last - 1e-9);
                last = a1;
            }
        }
    }

    #[test]
    fn lower_edge_examples() {
        let p = desk();
        let v0 = edge_value(EdgeSide::Y0, &p).unwrap();
        assert!((v0.value(1.0) - 0.1).abs() < 1e-15);
        // E[exp(-r T_K)] = x / K for a driftless-after-discount motion
        let psi = |x: f64| x;
        assert!((v0.value(0.5) - 0.1 * psi(0.5) / psi(1.0)).abs() < 1e-15);
        let v0c1 = edge_value(EdgeSide::Y0, &p.with_penalty(2.0).unwrap()).unwrap();
        assert_eq!(v0c1.value(3.0), 3.0);
    }

    #[test]
    fn upper_edge_case4() {
        let p = case4();
        let v1 = edge_value(EdgeSide::Y1, &p).unwrap();
        let sol = classify_case(&p).unwrap();
        let (a1, b1) = (sol.alpha1.unwrap(), sol.beta1.unwrap());
        assert!((v1.value(b1) - (b1 - 1.0 + 0.1)).abs() < 1e-12);
        let h = 1e-5;
        let left = (v1.value(a1 - h) - v1.value(a1 - 2.0 * h)) / h;
        let right = (v1.value(a1 + 2.0 * h) - v1.value(a1 + h)) / h;
        assert!((left - right).abs() < 1e-4);
        assert!((v1.slope(a1 * (1.0 - 1e-12)) - 1.0).abs() < 1e-6);
        assert!((v1.slope(b1 * (1.0 + 1e-12)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn edges_continuous_at_breakpoints() {
        for p in [desk(), case4(), desk().with_delta0(0.3).unwrap(), desk().with_penalty(2.0).unwrap()] {
            for side in [EdgeSide::Y0, EdgeSide::Y1] {
                let f = edge_value(side, &p).unwrap();
                for bp in f.breakpoints() {
                    let jump = (f.value(bp * (1.0 + 1e-12)) - f.value(bp * (1.0 - 1e-12))).abs();
                    assert!(jump < 1e-9, "{side:?} jump {jump} at {bp}");
                }
            }
        }
    }

    #[test]
    fn y_fundamental_identities() {
        let p = desk();
        let f = y_fundamental(&p, 0.5);
        assert!((f.psi - 0.5).abs() < 1e-15 && (f.phi - 0.5).abs() < 1e-15);
        let r = p.ratio();
        assert!((f.beta * (f.beta - 1.0) - r * (r + 1.0)).abs() < 1e-10);
        let a = y_fundamental(&p, 0.3).phi;
        for y in [0.35, 0.5, 0.9] {
            let q = y_fundamental(&p, y).phi / a;
            assert!(q > 0.0 && q < 1.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn edges_sandwiched(x in 1e-3f64..20.0, which in 0usize..4) {
            let p = [desk(), case4(), desk().with_delta0(0.3).unwrap(), desk().with_penalty(2.0).unwrap()][which];
            for side in [EdgeSide::Y0, EdgeSide::Y1] {
                let f = edge_value(side, &p).unwrap();
                let v = f.value(x);
                prop_assert!(v >= p.g1(x) - 1e-12);
                prop_assert!(v <= p.g2(x) + 1e-12);
                prop_assert!((f.excess(x) - (v - x + p.strike())).abs() < 1e-12);
            }
        }
    }
}
