//! Optimal controls and the value function.
//!
//! With ensemble weights π, ambiguity state z, and safety loading η, the
//! optimal per-claim retention and the optimal premium density are
//!
//!   α*(t, ξ, z) = ξ − (1/θ) Σ_k π_k z_k ℓ_k(T−t) [ (1+η) v_C(ξ)/v_k(ξ) − 1 ],
//!   β*(ξ)       = (1+η) v_C(ξ),
//!
//! where ℓ_k(t) = exp(g_k t) and the growth exponent is
//! g_k = λ_k − 2(1+η)λ_C + (1+η)² I₂(C,k). The candidate value function is
//! affine in wealth:
//!
//!   J(t, x, z) = x + (1/2θ) Σ_k π_k z_k ℓ_k(T−t) − 1/2θ − [(1+η)∫ξν_C − c](T−t).

use crate::compensators::{GammaCompensator, ModelEnsemble};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Market and preference parameters shared by every operation.
///
/// JSON schema keys: `c`, `eta`, `theta`, `x0`, `y0`, `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMarket", into = "RawMarket")]
pub struct MarketParams {
    c: f64,
    eta: f64,
    theta: f64,
    x0: f64,
    y0: f64,
    horizon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawMarket {
    c: f64,
    eta: f64,
    theta: f64,
    x0: f64,
    y0: f64,
    #[serde(rename = "T")]
    t: f64,
}

impl TryFrom<RawMarket> for MarketParams {
    type Error = Error;
    fn try_from(r: RawMarket) -> Result<Self> {
        MarketParams::new(r.c, r.eta, r.theta, r.x0, r.y0, r.t)
    }
}

impl From<MarketParams> for RawMarket {
    fn from(m: MarketParams) -> Self {
        RawMarket {
            c: m.c,
            eta: m.eta,
            theta: m.theta,
            x0: m.x0,
            y0: m.y0,
            t: m.horizon,
        }
    }
}

impl MarketParams {
    pub fn new(c: f64, eta: f64, theta: f64, x0: f64, y0: f64, horizon: f64) -> Result<Self> {
        if !c.is_finite() || !x0.is_finite() || !y0.is_finite() {
            return Err(Error::Domain(
                "premium rate and initial wealth levels must be finite".into(),
            ));
        }
        if !eta.is_finite() || eta < 0.0 {
            return Err(Error::Domain(format!(
                "safety loading eta must be finite and >= 0, got {eta}"
            )));
        }
        if !theta.is_finite() || theta <= 0.0 {
            return Err(Error::Domain(format!(
                "ambiguity aversion theta must be finite and > 0, got {theta}"
            )));
        }
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::Domain(format!(
                "horizon T must be finite and > 0, got {horizon}"
            )));
        }
        Ok(MarketParams {
            c,
            eta,
            theta,
            x0,
            y0,
            horizon,
        })
    }

    /// Insurer premium income rate c.
    pub fn c(&self) -> f64 {
        self.c
    }

    /// Counterparty safety loading η.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Monotone mean–variance ambiguity-aversion θ.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    /// Terminal time T.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        MarketParams::new(self.c, self.eta, theta, self.x0, self.y0, self.horizon)
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        MarketParams::new(self.c, eta, self.theta, self.x0, self.y0, self.horizon)
    }

    /// Premium viability against a concrete loss model: the insurer's income
    /// must not cover the loaded reinsurance premium, c < (1+η)·∫ξν_C.
    /// This couples market and ensemble, so it is checked here (and at CLI
    /// config load) rather than at construction.
    pub fn validate_viability(&self, ensemble: &ModelEnsemble) -> Result<()> {
        let loaded = (1.0 + self.eta) * ensemble.counterparty().mean_loss_rate();
        if self.c >= loaded {
            return Err(Error::Domain(format!(
                "premium viability fails: c = {} must be < (1+eta)·E[loss rate] = {loaded}",
                self.c
            )));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Schema {
            line: Some(e.line() as u64),
            message: format!("market JSON: {e}"),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("market serialization cannot fail")
    }
}

/// Growth exponent g_k = λ_k − 2(1+η)λ_C + (1+η)² I₂(C,k).
///
/// Equals ∫ [1 − (1+η) v_C/v_k]² ν_k(dξ) ≥ 0, so it is nonnegative for every
/// feasible pair; for k = C it collapses to λ_C η².
pub fn growth_exponent(
    k: &GammaCompensator,
    counterparty: &GammaCompensator,
    eta: f64,
) -> Result<f64> {
    if !eta.is_finite() || eta < 0.0 {
        return Err(Error::Domain(format!(
            "safety loading eta must be finite and >= 0, got {eta}"
        )));
    }
    let i2 = crate::compensators::cross_integral_2(counterparty, k)?;
    let load = 1.0 + eta;
    Ok(k.rate() - 2.0 * load * counterparty.rate() + load * load * i2)
}

/// Exponent magnitude beyond which exp(g·t) is a floating-point infinity.
const EXP_OVERFLOW_GUARD: f64 = 700.0;

/// Per-entry growth exponents g_k and horizon factors ℓ_k(t) = exp(g_k t)
/// for a whole ensemble (counterparty last, matching entry order).
#[derive(Debug, Clone)]
pub struct GrowthFactors {
    exponents: Vec<f64>,
}

impl GrowthFactors {
    pub fn compute(ensemble: &ModelEnsemble, eta: f64) -> Result<Self> {
        let exponents = (0..ensemble.n_entries())
            .map(|i| {
                let i2 = ensemble.cross_integral_2_entry(i)?;
                let load = 1.0 + eta;
                Ok(ensemble.entry(i).rate() - 2.0 * load * ensemble.counterparty().rate()
                    + load * load * i2)
            })
            .collect::<Result<Vec<f64>>>()?;
        if !eta.is_finite() || eta < 0.0 {
            return Err(Error::Domain(format!(
                "safety loading eta must be finite and >= 0, got {eta}"
            )));
        }
        Ok(GrowthFactors { exponents })
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn g(&self, entry: usize) -> f64 {
        self.exponents[entry]
    }

    /// ℓ_k(t) = exp(g_k t). Warns (does not error) when the exponent exceeds
    /// the double-precision range; the caller sees ±inf/0 arithmetic.
    pub fn ell(&self, entry: usize, t: f64) -> f64 {
        let e = self.exponents[entry] * t;
        if e.abs() > EXP_OVERFLOW_GUARD {
            log::warn!(
                "horizon factor exp({e:.3}) for entry {entry} overflows double precision"
            );
        }
        e.exp()
    }
}

/// Precomputed per-entry constants reused by controls, moments, simulation,
/// and verification. Everything downstream of the cross integrals lives here
/// so feasibility and viability are validated exactly once per call tree.
pub(crate) struct Ctx<'a> {
    pub ens: &'a ModelEnsemble,
    pub eta: f64,
    pub theta: f64,
    pub c: f64,
    pub x0: f64,
    pub y0: f64,
    pub horizon: f64,
    /// Growth exponents g_i per entry.
    pub g: Vec<f64>,
    /// I₂(C, entry i).
    pub i2: Vec<f64>,
    /// Drift of ln Z between jumps: d_i = λ_i − (1+η) λ_C.
    pub d: Vec<f64>,
    /// ∫ [(1+η) v_C/v_i − 1] ν_C(dξ) = (1+η) I₂(C,i) − λ_C.
    pub q: Vec<f64>,
    /// Expected loss rate under the counterparty model, ∫ ξ ν_C(dξ).
    pub lc: f64,
}

impl<'a> Ctx<'a> {
    pub fn new(ens: &'a ModelEnsemble, mkt: &'a MarketParams) -> Result<Self> {
        Self::with_eta(ens, mkt, mkt.eta())
    }

    /// Same precomputation with an explicit safety loading (the pricing scan
    /// varies η while holding the rest of the market fixed).
    pub fn with_eta(ens: &'a ModelEnsemble, mkt: &'a MarketParams, eta: f64) -> Result<Self> {
        if !eta.is_finite() || eta < 0.0 {
            return Err(Error::Domain(format!(
                "safety loading eta must be finite and >= 0, got {eta}"
            )));
        }
        let load = 1.0 + eta;
        let lam_c = ens.counterparty().rate();
        let n = ens.n_entries();
        let mut g = Vec::with_capacity(n);
        let mut i2 = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        for i in 0..n {
            let v2 = ens.cross_integral_2_entry(i)?;
            i2.push(v2);
            g.push(ens.entry(i).rate() - 2.0 * load * lam_c + load * load * v2);
            d.push(ens.entry(i).rate() - load * lam_c);
            q.push(load * v2 - lam_c);
        }
        Ok(Ctx {
            ens,
            eta,
            theta: mkt.theta(),
            c: mkt.c(),
            x0: mkt.x0(),
            y0: mkt.y0(),
            horizon: mkt.horizon(),
            g,
            i2,
            d,
            q,
            lc: ens.counterparty().mean_loss_rate(),
        })
    }

    pub fn ell(&self, entry: usize, t: f64) -> f64 {
        let e = self.g[entry] * t;
        if e.abs() > EXP_OVERFLOW_GUARD {
            log::warn!(
                "horizon factor exp({e:.3}) for entry {entry} overflows double precision"
            );
        }
        e.exp()
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() || t < 0.0 || t > self.horizon {
            return Err(Error::Domain(format!(
                "time t = {t} outside [0, T] with T = {}",
                self.horizon
            )));
        }
        Ok(())
    }

    pub fn check_state(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.ens.n_entries() {
            return Err(Error::Domain(format!(
                "state vector has {} entries, ensemble has {} (candidates plus counterparty)",
                z.len(),
                self.ens.n_entries()
            )));
        }
        if z.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Domain(
                "ambiguity state z must be strictly positive and finite".into(),
            ));
        }
        Ok(())
    }

    /// α* with a precomputed context; `xi` must be a valid loss size.
    pub fn alpha_star(&self, t: f64, xi: f64, z: &[f64]) -> Result<f64> {
        let ln_vc = self.ens.counterparty().density_log(xi)?;
        let load = 1.0 + self.eta;
        let mut shared = 0.0;
        for i in 0..self.ens.n_entries() {
            let w = self.ens.entry_weight(i);
            if w == 0.0 {
                continue;
            }
            let ratio = (ln_vc - self.ens.entry(i).density_log(xi)?).exp();
            shared += w * z[i] * self.ell(i, self.horizon - t) * (load * ratio - 1.0);
        }
        Ok(xi - shared / self.theta)
    }
}

/// Optimal retained loss α*(t, ξ, z) for the full ensemble.
pub fn alpha_star(
    t: f64,
    xi: f64,
    z: &[f64],
    ensemble: &ModelEnsemble,
    market: &MarketParams,
) -> Result<f64> {
    market.validate_viability(ensemble)?;
    let ctx = Ctx::new(ensemble, market)?;
    ctx.check_time(t)?;
    ctx.check_state(z)?;
    ctx.alpha_star(t, xi, z)
}

/// Optimal premium density β*(ξ) = (1+η) v_C(ξ); independent of t, z, θ.
pub fn beta_star(xi: f64, counterparty: &GammaCompensator, eta: f64) -> Result<f64> {
    if !eta.is_finite() || eta < 0.0 {
        return Err(Error::Domain(format!(
            "safety loading eta must be finite and >= 0, got {eta}"
        )));
    }
    Ok((1.0 + eta) * counterparty.density(xi)?)
}

/// Candidate value function J(t, x, z).
pub fn value_function(
    t: f64,
    x: f64,
    z: &[f64],
    ensemble: &ModelEnsemble,
    market: &MarketParams,
) -> Result<f64> {
    market.validate_viability(ensemble)?;
    let ctx = Ctx::new(ensemble, market)?;
    ctx.check_time(t)?;
    ctx.check_state(z)?;
    if !x.is_finite() {
        return Err(Error::Domain(format!("wealth x must be finite, got {x}")));
    }
    let remain = ctx.horizon - t;
    let mut mix = 0.0;
    for i in 0..ensemble.n_entries() {
        mix += ensemble.entry_weight(i) * z[i] * ctx.ell(i, remain);
    }
    Ok(x + mix / (2.0 * ctx.theta)
        - 1.0 / (2.0 * ctx.theta)
        - ((1.0 + ctx.eta) * ctx.lc - ctx.c) * remain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compensators::GammaCompensator;
    use crate::quadrature::{integrate_semi_infinite, Tolerance};
    use approx::assert_relative_eq;

    fn counterparty() -> GammaCompensator {
        GammaCompensator::new(0.52, 0.58, 654.98).unwrap()
    }

    fn three_model_ensemble() -> ModelEnsemble {
        ModelEnsemble::new(
            vec![
                GammaCompensator::new(0.51, 0.56, 697.68).unwrap(),
                GammaCompensator::new(0.54, 0.57, 678.55).unwrap(),
                GammaCompensator::new(0.50, 0.60, 640.0).unwrap(),
            ],
            counterparty(),
            vec![0.4, 0.3, 0.3],
            0.0,
        )
        .unwrap()
    }

    fn market() -> MarketParams {
        MarketParams::new(210.0, 0.12, 0.01, 5000.0, 5000.0, 5.0).unwrap()
    }

    #[test]
    fn growth_exponent_matches_reference_values() {
        // 40-digit reference: g = λ_k − 2(1+η)λ_C + (1+η)² I₂(C,k) at η = 0.12.
        let c = counterparty();
        let a = GammaCompensator::new(0.51, 0.56, 697.68).unwrap();
        let b = GammaCompensator::new(0.54, 0.57, 678.55).unwrap();
        assert_relative_eq!(
            growth_exponent(&a, &c, 0.12).unwrap(),
            0.01111937334812362983,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            growth_exponent(&b, &c, 0.12).unwrap(),
            0.0035740932420025104988,
            max_relative = 1e-12
        );
    }

    #[test]
    fn growth_exponent_of_counterparty_is_rate_times_eta_squared() {
        let c = counterparty();
        for eta in [0.0, 0.05, 0.12, 0.5] {
            assert_relative_eq!(
                growth_exponent(&c, &c, eta).unwrap(),
                c.rate() * eta * eta,
                max_relative = 1e-12,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn growth_exponent_agrees_with_quadrature_of_squared_distortion() {
        // Independent route: g_k = ∫ [1 − (1+η) v_C/v_k]² ν_k(dξ).
        let c = counterparty();
        let k = GammaCompensator::new(0.54, 0.57, 678.55).unwrap();
        let eta = 0.12;
        let quad = integrate_semi_infinite(
            |x| {
                let vk = k.density(x).unwrap();
                let ratio = (c.density_log(x).unwrap() - k.density_log(x).unwrap()).exp();
                let dist = 1.0 - (1.0 + eta) * ratio;
                dist * dist * vk
            },
            Tolerance::default(),
        )
        .unwrap();
        assert_relative_eq!(
            growth_exponent(&k, &c, eta).unwrap(),
            quad.value,
            max_relative = 1e-8
        );
    }

    #[test]
    fn growth_factors_order_entries_with_counterparty_last() {
        let ens = three_model_ensemble();
        let gf = GrowthFactors::compute(&ens, 0.12).unwrap();
        assert_eq!(gf.exponents().len(), 4);
        assert_relative_eq!(gf.g(3), 0.52 * 0.12 * 0.12, max_relative = 1e-12);
        assert_relative_eq!(gf.ell(0, 0.0), 1.0, epsilon = 1e-15);
        // ℓ(t)·ℓ(−t) = 1.
        assert_relative_eq!(gf.ell(0, 2.5) * gf.ell(0, -2.5), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn alpha_star_one_model_closed_form() {
        // One model: α* = ξ − (η z/θ) e^{λη²(T−t)}.
        let ens = ModelEnsemble::single(counterparty());
        let mkt = market();
        let (t, xi) = (1.25, 840.0);
        for z in [0.6, 1.0, 1.9] {
            let got = alpha_star(t, xi, &[z, 1.0], &ens, &mkt).unwrap();
            let g = 0.52 * 0.12 * 0.12;
            let want = xi - 0.12 * z / 0.01 * (g * (5.0 - t)).exp();
            assert_relative_eq!(got, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn alpha_star_with_zero_loading_retains_everything_in_one_model() {
        let ens = ModelEnsemble::single(counterparty());
        let mkt = MarketParams::new(150.0, 0.0, 0.01, 5000.0, 5000.0, 5.0).unwrap();
        let got = alpha_star(2.0, 512.0, &[1.3, 1.0], &ens, &mkt).unwrap();
        assert_relative_eq!(got, 512.0, max_relative = 1e-12);
    }

    #[test]
    fn alpha_star_is_affine_in_the_state() {
        // ∂α*/∂z_k = −(π_k/θ) ℓ_k(T−t) [(1+η)v_C/v_k(ξ) − 1]; finite
        // differences of an affine map are exact.
        let ens = three_model_ensemble();
        let mkt = market();
        let (t, xi) = (2.0, 900.0);
        let z0 = [1.0, 1.0, 1.0, 1.0];
        let base = alpha_star(t, xi, &z0, &ens, &mkt).unwrap();
        for k in 0..4 {
            let mut z1 = z0;
            z1[k] += 0.5;
            let bumped = alpha_star(t, xi, &z1, &ens, &mkt).unwrap();
            let slope = (bumped - base) / 0.5;

            let ctx = Ctx::new(&ens, &mkt).unwrap();
            let ratio = (ens.counterparty().density_log(xi).unwrap()
                - ens.entry(k).density_log(xi).unwrap())
            .exp();
            let want = -ens.entry_weight(k) / 0.01
                * ctx.ell(k, 5.0 - t)
                * (1.12 * ratio - 1.0);
            assert_relative_eq!(slope, want, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn beta_star_is_loaded_counterparty_density() {
        let c = counterparty();
        let xi = 333.0;
        assert_relative_eq!(
            beta_star(xi, &c, 0.12).unwrap(),
            1.12 * c.density(xi).unwrap(),
            max_relative = 1e-14
        );
        assert!(beta_star(xi, &c, -0.2).is_err());
    }

    #[test]
    fn value_function_terminal_slice() {
        // At t = T: J = x + (1/2θ)(Σ π_k z_k − 1); with z ≡ 1 that is x.
        let ens = three_model_ensemble();
        let mkt = market();
        let x = 4321.0;
        assert_relative_eq!(
            value_function(5.0, x, &[1.0; 4], &ens, &mkt).unwrap(),
            x,
            max_relative = 1e-12
        );
        let z = [1.5, 0.7, 1.2, 1.0];
        let mix: f64 = [0.4, 0.3, 0.3, 0.0]
            .iter()
            .zip(z.iter())
            .map(|(p, zz)| p * zz)
            .sum();
        assert_relative_eq!(
            value_function(5.0, x, &z, &ens, &mkt).unwrap(),
            x + (mix - 1.0) / 0.02,
            max_relative = 1e-12
        );
    }

    #[test]
    fn value_function_one_model_closed_form() {
        // Φ(t,x,z) = x + (1/2θ)[e^{λη²(T−t)} z − 1] − (T−t)[(1+η)λµ − c].
        let ens = ModelEnsemble::single(counterparty());
        let mkt = market();
        let (t, x, z) = (1.75, 6000.0, 1.23);
        let g: f64 = 0.52 * 0.0144;
        let lam_mu = 0.52 * 0.58 * 654.98;
        let want = x + ((g * (5.0 - t)).exp() * z - 1.0) / 0.02
            - (5.0 - t) * (1.12 * lam_mu - 210.0);
        assert_relative_eq!(
            value_function(t, x, &[z, 1.0], &ens, &mkt).unwrap(),
            want,
            max_relative = 1e-12
        );
    }

    #[test]
    fn time_and_state_domains_are_enforced() {
        let ens = three_model_ensemble();
        let mkt = market();
        assert!(matches!(
            value_function(5.5, 0.0, &[1.0; 4], &ens, &mkt),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            value_function(-0.1, 0.0, &[1.0; 4], &ens, &mkt),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            alpha_star(1.0, 100.0, &[1.0; 3], &ens, &mkt),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            alpha_star(1.0, 100.0, &[1.0, -1.0, 1.0, 1.0], &ens, &mkt),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            alpha_star(1.0, -5.0, &[1.0; 4], &ens, &mkt),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn premium_viability_is_enforced_against_the_ensemble() {
        let ens = three_model_ensemble();
        // (1+η)·λ_C·m·φ ≈ 221.2; c above it breaks viability.
        let mkt = MarketParams::new(230.0, 0.12, 0.01, 5000.0, 5000.0, 5.0).unwrap();
        assert!(matches!(
            alpha_star(1.0, 100.0, &[1.0; 4], &ens, &mkt),
            Err(Error::Domain(_))
        ));
        assert!(market().validate_viability(&ens).is_ok());
    }

    #[test]
    fn market_json_round_trip_uses_capital_t() {
        let mkt = market();
        let json = mkt.to_json();
        assert!(json.contains("\"T\""));
        let back = MarketParams::from_json(&json).unwrap();
        assert_eq!(back, mkt);
        assert!(MarketParams::from_json("{\"c\": 1}").is_err());
    }

    #[test]
    fn market_construction_rejects_bad_parameters() {
        assert!(MarketParams::new(1.0, -0.1, 0.01, 0.0, 0.0, 5.0).is_err());
        assert!(MarketParams::new(1.0, 0.1, 0.0, 0.0, 0.0, 5.0).is_err());
        assert!(MarketParams::new(1.0, 0.1, 0.01, 0.0, 0.0, -5.0).is_err());
        assert!(MarketParams::new(f64::NAN, 0.1, 0.01, 0.0, 0.0, 5.0).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_gamma() -> impl Strategy<Value = GammaCompensator> {
            (0.05f64..20.0, 0.3f64..3.0, 50.0f64..1500.0)
                .prop_map(|(r, m, p)| GammaCompensator::new(r, m, p).unwrap())
        }

        proptest! {
            #[test]
            fn growth_exponent_is_nonnegative(c in arb_gamma(), k in arb_gamma(), eta in 0.0f64..1.0) {
                prop_assume!(2.0 * c.shape() > k.shape() && 2.0 * k.scale() > c.scale());
                let g = growth_exponent(&k, &c, eta).unwrap();
                // g = ∫ [1 − (1+η)v_C/v_k]² ν_k ≥ 0 up to rounding.
                prop_assert!(g >= -1e-10 * (1.0 + g.abs()));
            }

            #[test]
            fn horizon_factors_invert(c in arb_gamma(), eta in 0.0f64..1.0, t in 0.0f64..10.0) {
                let ens = ModelEnsemble::single(c);
                let gf = GrowthFactors::compute(&ens, eta).unwrap();
                prop_assert!((gf.ell(0, t) * gf.ell(0, -t) - 1.0).abs() < 1e-12);
            }
        }
    }
}
