//! The counterparty's side of the contract: choosing the safety loading η
//! that maximizes its expected terminal wealth E^{P_C}[Y_T^η].
//!
//! In general the objective is scanned and refined numerically — it is not
//! provably concave with several candidate models, so the scan is always
//! reported and multimodality is flagged rather than hidden. With a single
//! model the optimum has a closed form through the principal branch of the
//! Lambert W function, which doubles as an independent oracle for the
//! numerical route.

use crate::compensators::{GammaCompensator, ModelEnsemble};
use crate::controls::MarketParams;
use crate::error::{Error, Result};
use crate::moments::mean_y;
use rayon::prelude::*;
use serde::Serialize;

/// Number of points in the diagnostic η scan.
pub const SCAN_POINTS: usize = 64;

/// Abscissa tolerance of the golden-section refinement.
pub const ETA_TOLERANCE: f64 = 1e-8;

/// Default upper bracket for the safety loading (a 100% loading).
pub const DEFAULT_ETA_MAX: f64 = 1.0;

/// Principal branch of the Lambert W function: the w ≥ −1 with w·e^w = x,
/// defined for x ≥ −1/e. Halley iteration from a series (near the branch
/// point), logarithmic (mid-range), or asymptotic (large x) initial guess;
/// the result satisfies |w e^w − x| ≤ 1e-14·max(1, |x|).
pub fn lambert_w0(x: f64) -> Result<f64> {
    let neg_inv_e = -(-1.0_f64).exp(); // −1/e, computed to f64 rounding
    if !x.is_finite() {
        return Err(Error::Domain(format!("lambert_w0 needs a finite argument, got {x}")));
    }
    if x < neg_inv_e {
        if neg_inv_e - x < 1e-15 {
            return Ok(-1.0);
        }
        return Err(Error::Domain(format!(
            "lambert_w0 defined on [−1/e, ∞): got {x} < {neg_inv_e}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }

    let mut w = if x < -0.25 {
        // Branch-point series in p = sqrt(2(ex + 1)).
        let p = (2.0 * (std::f64::consts::E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 * p.powi(3) / 72.0
    } else if x < 3.0 {
        x.ln_1p()
    } else {
        let l = x.ln();
        l - l.ln()
    };
    // So close to the branch point that Halley's denominator degenerates:
    // the series value is already accurate to O(p⁴).
    if x - neg_inv_e < 1e-12 {
        return Ok(w);
    }

    let target = 1e-14 * x.abs().max(1.0);
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        if f.abs() <= target {
            return Ok(w);
        }
        let denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0);
        w -= f / denom;
    }
    let achieved = (w * w.exp() - x).abs();
    if achieved <= 1e-12 * x.abs().max(1.0) {
        // Limit-cycle of one ulp around the root; accept.
        return Ok(w);
    }
    Err(Error::Numerical {
        context: format!("lambert_w0({x}) did not converge"),
        achieved,
        requested: target,
    })
}

/// Closed-form optimal safety loading when insurer and counterparty share one
/// model: η* = sqrt(W(μ²θ²λT/2) / (2λT)) with λ the claim rate and μ = m·φ
/// the mean severity. Equivalent to the first-order condition
/// η e^{η²λT} = μθ/2.
pub fn eta_star_one_model(model: &GammaCompensator, market: &MarketParams) -> Result<f64> {
    let lam = model.rate();
    let mu = model.mean_severity();
    let theta = market.theta();
    let horizon = market.horizon();
    let arg = mu * mu * theta * theta * lam * horizon / 2.0;
    Ok((lambert_w0(arg)? / (2.0 * lam * horizon)).sqrt())
}

/// How a [`PricingResult`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PricingMethod {
    #[serde(rename = "golden-section")]
    GoldenSection,
    #[serde(rename = "closed-form-lambert-w")]
    ClosedFormLambertW,
}

/// One point of the diagnostic objective scan.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScanPoint {
    pub eta: f64,
    pub value: f64,
}

/// Optimal safety loading and diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct PricingResult {
    pub eta_star: f64,
    pub expected_wealth: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
    pub method: PricingMethod,
    pub scan: Vec<ScanPoint>,
    pub multimodal: bool,
    pub warnings: Vec<String>,
}

fn golden_section_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, usize) {
    const INV_GOLD: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_GOLD * (b - a);
    let mut d = a + INV_GOLD * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iterations = 0;
    while b - a > tol && iterations < 200 {
        iterations += 1;
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_GOLD * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_GOLD * (b - a);
            fd = f(d);
        }
    }
    (0.5 * (a + b), iterations)
}

/// Maximizes E^{P_C}[Y_T^η] over η ∈ [0, eta_max]: a 64-point scan (always
/// returned for inspection), a multimodality check, and golden-section
/// refinement of the best scan bracket to abscissa tolerance 1e-8. If the
/// objective overflows at large η the bracket is shrunk to the last finite
/// scan point with a warning.
pub fn optimize_eta(
    ensemble: &ModelEnsemble,
    market: &MarketParams,
    eta_max: f64,
) -> Result<PricingResult> {
    if !eta_max.is_finite() || eta_max <= 0.0 {
        return Err(Error::Domain(format!(
            "eta_max must be positive and finite, got {eta_max}"
        )));
    }
    let horizon = market.horizon();
    let objective = |eta: f64| -> f64 {
        mean_y(horizon, eta, ensemble, market).unwrap_or(f64::NAN)
    };

    let mut warnings = Vec::new();
    let mut hi = eta_max;
    let scan = loop {
        let step = hi / (SCAN_POINTS - 1) as f64;
        let etas: Vec<f64> = (0..SCAN_POINTS).map(|i| step * i as f64).collect();
        let values: Vec<f64> = etas.par_iter().map(|&eta| objective(eta)).collect();
        match values.iter().position(|v| !v.is_finite()) {
            None => {
                break etas
                    .into_iter()
                    .zip(values)
                    .map(|(eta, value)| ScanPoint { eta, value })
                    .collect::<Vec<_>>();
            }
            Some(0) => {
                return Err(Error::Numerical {
                    context: "pricing objective is non-finite at η = 0".into(),
                    achieved: f64::INFINITY,
                    requested: 0.0,
                })
            }
            Some(k) => {
                let new_hi = step * (k - 1) as f64;
                warnings.push(format!(
                    "objective overflows beyond eta = {new_hi:.6}; bracket shrunk from {hi:.6}"
                ));
                if !(new_hi > 0.0) {
                    // Only η = 0 is representable: the optimum saturates there.
                    let value = objective(0.0);
                    return Ok(PricingResult {
                        eta_star: 0.0,
                        expected_wealth: value,
                        bracket: (0.0, 0.0),
                        iterations: 0,
                        method: PricingMethod::GoldenSection,
                        scan: vec![ScanPoint { eta: 0.0, value }],
                        multimodal: false,
                        warnings,
                    });
                }
                hi = new_hi;
            }
        }
    };

    // Strict local maxima on the scan, endpoints included.
    let n = scan.len();
    let mut local_maxima = Vec::new();
    for i in 0..n {
        let left_ok = i == 0 || scan[i].value > scan[i - 1].value;
        let right_ok = i == n - 1 || scan[i].value > scan[i + 1].value;
        if left_ok && right_ok {
            local_maxima.push(i);
        }
    }
    let multimodal = local_maxima.len() > 1;
    if multimodal {
        warnings.push(format!(
            "objective scan shows {} local maxima; refining the best one",
            local_maxima.len()
        ));
    }
    let best = (0..n)
        .max_by(|&a, &b| scan[a].value.partial_cmp(&scan[b].value).unwrap())
        .unwrap();
    let lo_idx = best.saturating_sub(1);
    let hi_idx = (best + 1).min(n - 1);
    let bracket = (scan[lo_idx].eta, scan[hi_idx].eta);
    let (eta_star, iterations) =
        golden_section_max(&objective, bracket.0, bracket.1, ETA_TOLERANCE);
    let expected_wealth = mean_y(horizon, eta_star, ensemble, market)?;
    Ok(PricingResult {
        eta_star,
        expected_wealth,
        bracket,
        iterations,
        method: PricingMethod::GoldenSection,
        scan,
        multimodal,
        warnings,
    })
}

/// Packages the closed-form one-model optimum as a [`PricingResult`]
/// (independent of [`optimize_eta`]'s numeric route).
pub fn price_one_model(model: &GammaCompensator, market: &MarketParams) -> Result<PricingResult> {
    let eta_star = eta_star_one_model(model, market)?;
    let ensemble = ModelEnsemble::single(model.clone());
    let expected_wealth = mean_y(market.horizon(), eta_star, &ensemble, market)?;
    Ok(PricingResult {
        eta_star,
        expected_wealth,
        bracket: (eta_star, eta_star),
        iterations: 0,
        method: PricingMethod::ClosedFormLambertW,
        scan: Vec::new(),
        multimodal: false,
        warnings: Vec::new(),
    })
}

/// One row of a θ sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ThetaPoint {
    pub theta: f64,
    pub eta_star: f64,
    pub expected_wealth: f64,
}

/// Optimal loading as a function of the insurer's risk-aversion θ, holding
/// everything else fixed.
pub fn theta_sweep(
    ensemble: &ModelEnsemble,
    market: &MarketParams,
    thetas: &[f64],
    eta_max: f64,
) -> Result<Vec<ThetaPoint>> {
    thetas
        .par_iter()
        .map(|&theta| -> Result<ThetaPoint> {
            let mkt = market.with_theta(theta)?;
            let res = optimize_eta(ensemble, &mkt, eta_max)?;
            Ok(ThetaPoint {
                theta,
                eta_star: res.eta_star,
                expected_wealth: res.expected_wealth,
            })
        })
        .collect()
}
