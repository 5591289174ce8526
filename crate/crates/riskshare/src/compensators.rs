//! Loss-arrival models: Gamma-severity Poisson compensators and the
//! multi-model ensemble.
//!
//! Each model k is a Poisson random measure with compensator
//! ν_k(dξ) = λ_k f_k(ξ) dξ, where f_k is a Gamma(shape m_k, scale φ_k)
//! density. The insurer holds an ensemble: n candidate models plus the
//! counterparty's reference model C, with mixture weights π.
//!
//! Cross integrals of the counterparty density against candidate models,
//!   I₂(C,k) = ∫ v_C²/v_k dξ   and   I₃(C,j,k) = ∫ v_C³/(v_j v_k) dξ,
//! drive every closed form downstream. Both reduce to Gamma-function
//! expressions that are evaluated in log space; their integrability
//! conditions are surfaced as explicit "assumption" checks.

use crate::error::{Error, Result};
use crate::special::ln_gamma;
use serde::{Deserialize, Serialize};

/// Identifies an ensemble entry: a candidate model (0-based) or the
/// counterparty reference model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelId {
    Model(usize),
    Counterparty,
}

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            // 1-based in all user-facing text, matching the logZ_1..logZ_n CSV headers.
            ModelId::Model(i) => write!(f, "{}", i + 1),
            ModelId::Counterparty => write!(f, "C"),
        }
    }
}

/// Compensator of a compound Poisson loss process with Gamma severities:
/// claims arrive at rate `rate` per unit time and claim sizes are
/// Gamma(`shape`, `scale`) distributed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGamma", into = "RawGamma")]
pub struct GammaCompensator {
    rate: f64,
    shape: f64,
    scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawGamma {
    rate: f64,
    shape: f64,
    scale: f64,
}

impl TryFrom<RawGamma> for GammaCompensator {
    type Error = Error;
    fn try_from(r: RawGamma) -> Result<Self> {
        GammaCompensator::new(r.rate, r.shape, r.scale)
    }
}

impl From<GammaCompensator> for RawGamma {
    fn from(g: GammaCompensator) -> Self {
        RawGamma {
            rate: g.rate,
            shape: g.shape,
            scale: g.scale,
        }
    }
}

impl GammaCompensator {
    pub fn new(rate: f64, shape: f64, scale: f64) -> Result<Self> {
        for (name, v) in [("rate", rate), ("shape", shape), ("scale", scale)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Domain(format!(
                    "Gamma compensator {name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(GammaCompensator { rate, shape, scale })
    }

    /// Claim arrival intensity λ = ν(ℝ₊).
    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Severity shape m.
    pub fn shape(&self) -> f64 {
        self.shape
    }

    /// Severity scale φ.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Mean claim size m·φ.
    pub fn mean_severity(&self) -> f64 {
        self.shape * self.scale
    }

    /// Expected loss per unit time ∫ ξ ν(dξ) = λ·m·φ.
    pub fn mean_loss_rate(&self) -> f64 {
        self.rate * self.shape * self.scale
    }

    /// Second moment rate ∫ ξ² ν(dξ) = λ·m(m+1)·φ².
    pub fn second_moment_rate(&self) -> f64 {
        self.rate * self.shape * (self.shape + 1.0) * self.scale * self.scale
    }

    /// ln v(ξ) = ln λ + (m−1) ln ξ − ξ/φ − lnΓ(m) − m ln φ, for ξ > 0.
    ///
    /// Evaluated in log space so density ratios of far-apart models stay
    /// finite; `density` exponentiates and may round to 0 in deep tails.
    pub fn density_log(&self, xi: f64) -> Result<f64> {
        if !(xi > 0.0) || !xi.is_finite() {
            return Err(Error::Domain(format!(
                "compensator density requires loss size ξ > 0, got {xi}"
            )));
        }
        Ok(self.rate.ln() + (self.shape - 1.0) * xi.ln() - xi / self.scale
            - ln_gamma(self.shape)
            - self.shape * self.scale.ln())
    }

    /// v(ξ) = exp(density_log(ξ)).
    pub fn density(&self, xi: f64) -> Result<f64> {
        Ok(self.density_log(xi)?.exp())
    }
}

/// Integrability conditions for I₂(C,k): 2·m_C > m_k and 2·φ_k > φ_C
/// (both strict). Returns a human-readable reason on failure.
fn pair_infeasibility(c: &GammaCompensator, k: &GammaCompensator) -> Option<String> {
    if 2.0 * c.shape <= k.shape {
        return Some(format!(
            "shape condition 2·m_C > m_k fails: 2·{} = {} <= {}",
            c.shape,
            2.0 * c.shape,
            k.shape
        ));
    }
    if 2.0 * k.scale <= c.scale {
        return Some(format!(
            "scale condition 2·φ_k > φ_C fails: 2·{} = {} <= {}",
            k.scale,
            2.0 * k.scale,
            c.scale
        ));
    }
    None
}

/// Integrability conditions for I₃(C,j,k): 3·m_C > m_j + m_k and
/// 3·φ_j·φ_k > φ_C·(φ_j + φ_k) (both strict; symmetric in j, k).
fn triple_infeasibility(
    c: &GammaCompensator,
    j: &GammaCompensator,
    k: &GammaCompensator,
) -> Option<String> {
    if 3.0 * c.shape <= j.shape + k.shape {
        return Some(format!(
            "shape condition 3·m_C > m_j + m_k fails: {} <= {} + {}",
            3.0 * c.shape,
            j.shape,
            k.shape
        ));
    }
    if 3.0 * j.scale * k.scale <= c.scale * (j.scale + k.scale) {
        return Some(format!(
            "scale condition 3·φ_j·φ_k > φ_C·(φ_j + φ_k) fails: {} <= {}",
            3.0 * j.scale * k.scale,
            c.scale * (j.scale + k.scale)
        ));
    }
    None
}

/// I₂(C,k) = ∫ v_C(ξ)²/v_k(ξ) dξ.
///
/// Closed form (evaluated in log space):
/// (λ_C²/λ_k) · Γ(2m_C−m_k) Γ(m_k) φ_k^{m_k} /
/// (Γ(m_C)² φ_C^{2m_C} (2/φ_C − 1/φ_k)^{2m_C−m_k}).
pub fn cross_integral_2(c: &GammaCompensator, k: &GammaCompensator) -> Result<f64> {
    if let Some(reason) = pair_infeasibility(c, k) {
        return Err(Error::InfeasiblePair(reason));
    }
    let a = 2.0 * c.shape - k.shape;
    let b = 2.0 / c.scale - 1.0 / k.scale;
    let ln = 2.0 * c.rate.ln() - k.rate.ln() + ln_gamma(a) + ln_gamma(k.shape)
        + k.shape * k.scale.ln()
        - 2.0 * ln_gamma(c.shape)
        - 2.0 * c.shape * c.scale.ln()
        - a * b.ln();
    Ok(ln.exp())
}

/// I₃(C,j,k) = ∫ v_C(ξ)³/(v_j(ξ) v_k(ξ)) dξ; symmetric in (j, k).
pub fn cross_integral_3(
    c: &GammaCompensator,
    j: &GammaCompensator,
    k: &GammaCompensator,
) -> Result<f64> {
    if let Some(reason) = triple_infeasibility(c, j, k) {
        return Err(Error::InfeasibleTriple(reason));
    }
    let a = 3.0 * c.shape - j.shape - k.shape;
    let b = 3.0 / c.scale - 1.0 / j.scale - 1.0 / k.scale;
    let ln = 3.0 * c.rate.ln() - j.rate.ln() - k.rate.ln() + ln_gamma(a)
        + ln_gamma(j.shape)
        + j.shape * j.scale.ln()
        + ln_gamma(k.shape)
        + k.shape * k.scale.ln()
        - 3.0 * ln_gamma(c.shape)
        - 3.0 * c.shape * c.scale.ln()
        - a * b.ln();
    Ok(ln.exp())
}

/// Weight mismatch accepted at construction before renormalizing.
const WEIGHT_SUM_SLACK: f64 = 1e-9;

/// The insurer's model ensemble: candidate models, the counterparty's
/// reference model, and mixture weights (candidates first, counterparty
/// last everywhere an "entry" ordering appears).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawEnsemble", into = "RawEnsemble")]
pub struct ModelEnsemble {
    models: Vec<GammaCompensator>,
    counterparty: GammaCompensator,
    weights: Vec<f64>,
    weight_counterparty: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawEnsemble {
    models: Vec<GammaCompensator>,
    counterparty: GammaCompensator,
    weights: Vec<f64>,
    weight_counterparty: f64,
}

impl TryFrom<RawEnsemble> for ModelEnsemble {
    type Error = Error;
    fn try_from(r: RawEnsemble) -> Result<Self> {
        ModelEnsemble::new(r.models, r.counterparty, r.weights, r.weight_counterparty)
    }
}

impl From<ModelEnsemble> for RawEnsemble {
    fn from(e: ModelEnsemble) -> Self {
        RawEnsemble {
            models: e.models,
            counterparty: e.counterparty,
            weights: e.weights,
            weight_counterparty: e.weight_counterparty,
        }
    }
}

impl ModelEnsemble {
    /// Builds an ensemble, renormalizing weights whose sum is within 1e-9 of
    /// one; a larger mismatch is rejected rather than silently rescaled.
    pub fn new(
        models: Vec<GammaCompensator>,
        counterparty: GammaCompensator,
        weights: Vec<f64>,
        weight_counterparty: f64,
    ) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Domain("ensemble needs at least one candidate model".into()));
        }
        if weights.len() != models.len() {
            return Err(Error::Domain(format!(
                "{} weights supplied for {} models",
                weights.len(),
                models.len()
            )));
        }
        for (i, &w) in weights.iter().chain(std::iter::once(&weight_counterparty)).enumerate() {
            if !w.is_finite() || !(0.0..=1.0 + WEIGHT_SUM_SLACK).contains(&w) {
                return Err(Error::Domain(format!(
                    "weight #{i} must lie in [0, 1], got {w}"
                )));
            }
        }
        let sum: f64 = weights.iter().sum::<f64>() + weight_counterparty;
        if (sum - 1.0).abs() > WEIGHT_SUM_SLACK {
            return Err(Error::Domain(format!(
                "ensemble weights must sum to 1 within {WEIGHT_SUM_SLACK:.0e}, got {sum}"
            )));
        }
        let mut weights = weights;
        for w in weights.iter_mut() {
            *w /= sum;
        }
        Ok(ModelEnsemble {
            models,
            counterparty,
            weights,
            weight_counterparty: weight_counterparty / sum,
        })
    }

    /// One-model ensemble where insurer and counterparty share `model`
    /// (the single candidate carries full weight).
    pub fn single(model: GammaCompensator) -> Self {
        ModelEnsemble {
            models: vec![model.clone()],
            counterparty: model,
            weights: vec![1.0],
            weight_counterparty: 0.0,
        }
    }

    /// True when the ensemble is a `single`-style ensemble: one candidate,
    /// identical to the counterparty model.
    pub fn is_one_model(&self) -> bool {
        self.models.len() == 1 && self.models[0] == self.counterparty
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    /// Number of entries including the counterparty.
    pub fn n_entries(&self) -> usize {
        self.models.len() + 1
    }

    pub fn models(&self) -> &[GammaCompensator] {
        &self.models
    }

    pub fn counterparty(&self) -> &GammaCompensator {
        &self.counterparty
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_counterparty(&self) -> f64 {
        self.weight_counterparty
    }

    /// Entry by flat index: candidates 0..n-1, counterparty at n.
    pub fn entry(&self, i: usize) -> &GammaCompensator {
        if i == self.models.len() {
            &self.counterparty
        } else {
            &self.models[i]
        }
    }

    pub fn entry_weight(&self, i: usize) -> f64 {
        if i == self.models.len() {
            self.weight_counterparty
        } else {
            self.weights[i]
        }
    }

    pub fn entry_id(&self, i: usize) -> ModelId {
        if i == self.models.len() {
            ModelId::Counterparty
        } else {
            ModelId::Model(i)
        }
    }

    /// I₂(C, entry i), with the entry named in the error on infeasibility.
    pub fn cross_integral_2_entry(&self, i: usize) -> Result<f64> {
        cross_integral_2(&self.counterparty, self.entry(i)).map_err(|e| match e {
            Error::InfeasiblePair(r) => Error::InfeasiblePair(format!(
                "counterparty vs model {}: {r}",
                self.entry_id(i)
            )),
            other => other,
        })
    }

    /// I₃(C, entry i, entry j), with entries named in the error.
    pub fn cross_integral_3_entries(&self, i: usize, j: usize) -> Result<f64> {
        cross_integral_3(&self.counterparty, self.entry(i), self.entry(j)).map_err(|e| match e {
            Error::InfeasibleTriple(r) => Error::InfeasibleTriple(format!(
                "counterparty vs models ({}, {}): {r}",
                self.entry_id(i),
                self.entry_id(j)
            )),
            other => other,
        })
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Schema {
            line: Some(e.line() as u64),
            message: format!("ensemble JSON: {e}"),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ensemble serialization cannot fail")
    }
}

/// One side of an inequality check, reported with both operand values so a
/// failing condition can be read off directly.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionCheck {
    pub description: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Passes when lhs > rhs (strict).
    pub ok: bool,
}

fn strict_gt(description: String, lhs: f64, rhs: f64) -> ConditionCheck {
    ConditionCheck {
        description,
        lhs,
        rhs,
        ok: lhs > rhs,
    }
}

/// Per-entry result of the pairwise integrability check.
#[derive(Debug, Clone, Serialize)]
pub struct PairFeasibility {
    pub model: String,
    pub shape_condition: ConditionCheck,
    pub scale_condition: ConditionCheck,
    pub ok: bool,
}

/// Report for the I₂ integrability conditions over every (C, k) pair.
#[derive(Debug, Clone, Serialize)]
pub struct Assumption1Report {
    pub entries: Vec<PairFeasibility>,
    pub all_ok: bool,
}

/// Checks 2·m_C > m_k and 2·φ_k > φ_C for every ensemble entry k
/// (including k = C, where both hold trivially).
pub fn check_assumption_1(ensemble: &ModelEnsemble) -> Assumption1Report {
    let c = ensemble.counterparty();
    let entries: Vec<PairFeasibility> = (0..ensemble.n_entries())
        .map(|i| {
            let k = ensemble.entry(i);
            let shape = strict_gt(
                format!("2·m_C > m_{}", ensemble.entry_id(i)),
                2.0 * c.shape(),
                k.shape(),
            );
            let scale = strict_gt(
                format!("2·φ_{} > φ_C", ensemble.entry_id(i)),
                2.0 * k.scale(),
                c.scale(),
            );
            let ok = shape.ok && scale.ok;
            PairFeasibility {
                model: ensemble.entry_id(i).to_string(),
                shape_condition: shape,
                scale_condition: scale,
                ok,
            }
        })
        .collect();
    let all_ok = entries.iter().all(|e| e.ok);
    Assumption1Report { entries, all_ok }
}

/// Per-pair result of the triple integrability check.
#[derive(Debug, Clone, Serialize)]
pub struct TripleFeasibility {
    pub model_j: String,
    pub model_k: String,
    pub shape_condition: ConditionCheck,
    pub scale_condition: ConditionCheck,
    pub ok: bool,
}

/// Report for the I₃ integrability conditions over unordered entry pairs.
#[derive(Debug, Clone, Serialize)]
pub struct Assumption2Report {
    pub pairs: Vec<TripleFeasibility>,
    pub all_ok: bool,
}

/// Checks 3·m_C > m_j + m_k and 3·φ_j·φ_k > φ_C·(φ_j + φ_k) for every
/// unordered pair of entries (j ≤ k, counterparty included). The conditions
/// are symmetric, so unordered pairs cover the ordered set.
pub fn check_assumption_2(ensemble: &ModelEnsemble) -> Assumption2Report {
    let c = ensemble.counterparty();
    let mut pairs = Vec::new();
    for i in 0..ensemble.n_entries() {
        for j in i..ensemble.n_entries() {
            let (vj, vk) = (ensemble.entry(i), ensemble.entry(j));
            let shape = strict_gt(
                format!(
                    "3·m_C > m_{} + m_{}",
                    ensemble.entry_id(i),
                    ensemble.entry_id(j)
                ),
                3.0 * c.shape(),
                vj.shape() + vk.shape(),
            );
            let scale = strict_gt(
                format!(
                    "3·φ_{}·φ_{} > φ_C·(φ_{0} + φ_{1})",
                    ensemble.entry_id(i),
                    ensemble.entry_id(j)
                ),
                3.0 * vj.scale() * vk.scale(),
                c.scale() * (vj.scale() + vk.scale()),
            );
            let ok = shape.ok && scale.ok;
            pairs.push(TripleFeasibility {
                model_j: ensemble.entry_id(i).to_string(),
                model_k: ensemble.entry_id(j).to_string(),
                shape_condition: shape,
                scale_condition: scale,
                ok,
            });
        }
    }
    let all_ok = pairs.iter().all(|p| p.ok);
    Assumption2Report { pairs, all_ok }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_semi_infinite, Tolerance};
    use approx::assert_relative_eq;

    pub(crate) fn counterparty() -> GammaCompensator {
        GammaCompensator::new(0.52, 0.58, 654.98).unwrap()
    }

    pub(crate) fn model_a() -> GammaCompensator {
        GammaCompensator::new(0.51, 0.56, 697.68).unwrap()
    }

    pub(crate) fn model_b() -> GammaCompensator {
        GammaCompensator::new(0.54, 0.57, 678.55).unwrap()
    }

    #[test]
    fn density_log_unit_exponential() {
        // λ=1, m=1, φ=1 is Exp(1): ln v(ξ) = −ξ.
        let v = GammaCompensator::new(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(v.density_log(1.0).unwrap(), -1.0, epsilon = 1e-14);
        // Doubling the rate shifts the log density by ln 2.
        let v2 = GammaCompensator::new(2.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(
            v2.density_log(1.0).unwrap(),
            2.0f64.ln() - 1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn density_log_matches_high_precision_reference() {
        // Reference values from a 40-digit evaluation of
        // ln λ + (m−1) ln ξ − ξ/φ − lnΓ(m) − m ln φ.
        let v = counterparty();
        assert_relative_eq!(
            v.density_log(1.5).unwrap(),
            -5.0173697781886084833,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            v.density_log(100.0).unwrap(),
            -6.9316321822347071771,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            v.density_log(2500.0).unwrap(),
            -11.947794051092249596,
            max_relative = 1e-14
        );
    }

    #[test]
    fn density_log_rejects_nonpositive_losses() {
        let v = counterparty();
        assert!(matches!(v.density_log(0.0), Err(Error::Domain(_))));
        assert!(matches!(v.density_log(-3.0), Err(Error::Domain(_))));
        assert!(matches!(v.density_log(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn density_integrates_to_rate() {
        let v = counterparty();
        let q = integrate_semi_infinite(|x| v.density(x).unwrap(), Tolerance::default()).unwrap();
        assert_relative_eq!(q.value, v.rate(), max_relative = 1e-9);
    }

    #[test]
    fn construction_rejects_bad_parameters() {
        assert!(GammaCompensator::new(0.0, 1.0, 1.0).is_err());
        assert!(GammaCompensator::new(1.0, -0.5, 1.0).is_err());
        assert!(GammaCompensator::new(1.0, 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn cross_integral_2_identical_models_is_rate() {
        let c = counterparty();
        assert_relative_eq!(
            cross_integral_2(&c, &c).unwrap(),
            c.rate(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn cross_integral_2_matches_reference_and_quadrature() {
        let c = counterparty();
        let k = model_a();
        let closed = cross_integral_2(&c, &k).unwrap();
        // 40-digit reference.
        assert_relative_eq!(closed, 0.53086684737573631205, max_relative = 1e-13);
        // Independent route: adaptive quadrature of v_C²/v_k.
        let quad = integrate_semi_infinite(
            |x| (2.0 * c.density_log(x).unwrap() - k.density_log(x).unwrap()).exp(),
            Tolerance::default(),
        )
        .unwrap();
        assert_relative_eq!(closed, quad.value, max_relative = 1e-9);
    }

    #[test]
    fn cross_integral_2_infeasible_shape_errors() {
        let c = counterparty();
        // 2·0.58 = 1.16 < 1.2: the squared-counterparty tail at zero is too fat.
        let k = GammaCompensator::new(0.5, 1.2, 700.0).unwrap();
        assert!(matches!(
            cross_integral_2(&c, &k),
            Err(Error::InfeasiblePair(_))
        ));
        // 2·300 = 600 < 654.98: candidate tail decays too fast at infinity.
        let k = GammaCompensator::new(0.5, 0.5, 300.0).unwrap();
        assert!(matches!(
            cross_integral_2(&c, &k),
            Err(Error::InfeasiblePair(_))
        ));
    }

    #[test]
    fn cross_integral_3_identical_models_is_rate() {
        let c = counterparty();
        assert_relative_eq!(
            cross_integral_3(&c, &c, &c).unwrap(),
            c.rate(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn cross_integral_3_matches_reference_quadrature_and_symmetry() {
        let c = counterparty();
        let (j, k) = (model_a(), model_b());
        let closed = cross_integral_3(&c, &j, &k).unwrap();
        assert_relative_eq!(closed, 0.51173322902977937387, max_relative = 1e-13);
        assert_relative_eq!(
            closed,
            cross_integral_3(&c, &k, &j).unwrap(),
            max_relative = 1e-14
        );
        let quad = integrate_semi_infinite(
            |x| {
                (3.0 * c.density_log(x).unwrap()
                    - j.density_log(x).unwrap()
                    - k.density_log(x).unwrap())
                .exp()
            },
            Tolerance::default(),
        )
        .unwrap();
        assert_relative_eq!(closed, quad.value, max_relative = 1e-9);
    }

    #[test]
    fn cross_integral_3_reduces_to_cross_integral_2_when_one_index_is_c() {
        let c = counterparty();
        let k = model_b();
        assert_relative_eq!(
            cross_integral_3(&c, &c, &k).unwrap(),
            cross_integral_2(&c, &k).unwrap(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn cross_integral_3_infeasible_triple_errors() {
        let c = counterparty();
        // 3·0.58 = 1.74 < 1.0 + 1.0.
        let j = GammaCompensator::new(0.5, 1.0, 700.0).unwrap();
        assert!(matches!(
            cross_integral_3(&c, &j, &j),
            Err(Error::InfeasibleTriple(_))
        ));
    }

    fn three_model_ensemble() -> ModelEnsemble {
        ModelEnsemble::new(
            vec![
                model_a(),
                model_b(),
                GammaCompensator::new(0.50, 0.60, 640.0).unwrap(),
            ],
            counterparty(),
            vec![0.4, 0.3, 0.3],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn assumption_checks_pass_on_nearby_models() {
        let ens = three_model_ensemble();
        assert!(check_assumption_1(&ens).all_ok);
        assert!(check_assumption_2(&ens).all_ok);
    }

    #[test]
    fn assumption_1_flags_the_failing_inequality() {
        let ens = ModelEnsemble::new(
            vec![GammaCompensator::new(0.5, 0.55, 300.0).unwrap()],
            counterparty(),
            vec![1.0],
            0.0,
        )
        .unwrap();
        let report = check_assumption_1(&ens);
        assert!(!report.all_ok);
        let bad = &report.entries[0];
        assert!(bad.shape_condition.ok);
        assert!(!bad.scale_condition.ok);
        assert_eq!(bad.model, "1");
    }

    #[test]
    fn assumption_2_can_fail_while_assumption_1_holds() {
        // m_k = 1.0 < 2·0.58 passes pairwise, but m_j + m_k = 2.0 > 1.74.
        let k = GammaCompensator::new(0.5, 1.0, 700.0).unwrap();
        let ens = ModelEnsemble::new(vec![k.clone(), k], counterparty(), vec![0.5, 0.5], 0.0)
            .unwrap();
        assert!(check_assumption_1(&ens).all_ok);
        let report = check_assumption_2(&ens);
        assert!(!report.all_ok);
        let bad = report.pairs.iter().find(|p| !p.ok).unwrap();
        assert!(!bad.shape_condition.ok);
    }

    #[test]
    fn ensemble_weights_renormalize_within_slack_only() {
        let ens = ModelEnsemble::new(
            vec![model_a(), model_b()],
            counterparty(),
            vec![0.5 + 3e-10, 0.5],
            0.0,
        )
        .unwrap();
        let total: f64 = ens.weights().iter().sum::<f64>() + ens.weight_counterparty();
        assert!((total - 1.0).abs() <= 1e-12);

        assert!(ModelEnsemble::new(
            vec![model_a(), model_b()],
            counterparty(),
            vec![0.6, 0.5],
            0.0,
        )
        .is_err());
        assert!(ModelEnsemble::new(
            vec![model_a()],
            counterparty(),
            vec![-0.2],
            1.2,
        )
        .is_err());
    }

    #[test]
    fn ensemble_json_round_trip_matches_schema() {
        let ens = three_model_ensemble();
        let json = ens.to_json();
        // The external schema keys, verbatim.
        for key in ["models", "counterparty", "weights", "weight_counterparty", "rate", "shape", "scale"] {
            assert!(json.contains(key), "missing key {key} in {json}");
        }
        let back = ModelEnsemble::from_json(&json).unwrap();
        assert_eq!(back.n_models(), 3);
        assert_relative_eq!(back.models()[0].scale(), 697.68, epsilon = 1e-12);
    }

    #[test]
    fn ensemble_json_schema_errors_carry_line_numbers() {
        let bad = "{\n \"models\": [],\n";
        match ModelEnsemble::from_json(bad) {
            Err(Error::Schema { line, .. }) => assert!(line.is_some()),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn one_model_ensemble_detection() {
        let single = ModelEnsemble::single(counterparty());
        assert!(single.is_one_model());
        assert_eq!(single.entry_weight(0), 1.0);
        assert_eq!(single.weight_counterparty(), 0.0);
        assert!(!three_model_ensemble().is_one_model());
    }

    #[test]
    fn entry_indexing_puts_counterparty_last() {
        let ens = three_model_ensemble();
        assert_eq!(ens.n_entries(), 4);
        assert_eq!(ens.entry_id(3).to_string(), "C");
        assert_eq!(ens.entry_id(0).to_string(), "1");
        assert_relative_eq!(ens.entry(3).scale(), 654.98, epsilon = 1e-12);
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
            fn cross_integral_2_agrees_with_quadrature(c in arb_gamma(), k in arb_gamma()) {
                // Only exercise comfortably feasible pairs; boundary cases get
                // arbitrarily slow to integrate and are covered by the margin
                // checks in the dedicated acceptance suite.
                prop_assume!(2.0 * c.shape() - k.shape() > 0.2);
                prop_assume!(2.0 / c.scale() - 1.0 / k.scale() > 0.1 / c.scale());
                let closed = cross_integral_2(&c, &k).unwrap();
                let quad = integrate_semi_infinite(
                    |x| (2.0 * c.density_log(x).unwrap() - k.density_log(x).unwrap()).exp(),
                    Tolerance::new(1e-10, 1e-10),
                ).unwrap();
                prop_assert!((closed - quad.value).abs() <= 1e-8 * closed.abs().max(1.0));
            }

            #[test]
            fn assumption_2_report_is_symmetric(c in arb_gamma(), j in arb_gamma(), k in arb_gamma()) {
                let e1 = ModelEnsemble::new(vec![j.clone(), k.clone()], c.clone(), vec![0.5, 0.5], 0.0).unwrap();
                let e2 = ModelEnsemble::new(vec![k, j], c, vec![0.5, 0.5], 0.0).unwrap();
                let r1 = check_assumption_2(&e1);
                let r2 = check_assumption_2(&e2);
                prop_assert_eq!(r1.all_ok, r2.all_ok);
            }

            #[test]
            fn density_log_is_finite_on_positive_losses(v in arb_gamma(), xi in 1e-6f64..1e5) {
                prop_assert!(v.density_log(xi).unwrap().is_finite());
            }
        }
    }
}
