//! Closed-form moments of the optimal wealth X*, the model-weight processes
//! Z*_k, and the counterparty wealth Y under the physical measures P_k, the
//! counterparty measure P_C, and the optimal pricing measure Q*.
//!
//! Only moments with a closed form are exposed; combinations the model does
//! not determine analytically (e.g. E^{P_j}[Z*_k] for j ∉ {k, C}) are usage
//! errors pointing at Monte Carlo, never invented formulas.

use crate::compensators::{GammaCompensator, ModelEnsemble};
use crate::controls::{Ctx, MarketParams};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Probability measure tag for moment queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    /// Physical candidate model P_k (0-based entry index; the counterparty
    /// entry index selects P_C itself).
    #[serde(rename = "pk")]
    Model(usize),
    /// Counterparty reference measure P_C.
    #[serde(rename = "pc")]
    Counterparty,
    /// Optimal (worst-case) pricing measure Q*.
    #[serde(rename = "qstar")]
    Optimal,
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Measure::Model(i) => write!(f, "pk:{}", i + 1),
            Measure::Counterparty => write!(f, "pc"),
            Measure::Optimal => write!(f, "qstar"),
        }
    }
}

impl std::str::FromStr for Measure {
    type Err = Error;

    /// Accepts `qstar`/`q*`, `pc`/`p_c`, and `pk:IDX` with 1-based IDX.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "qstar" | "q*" | "q" => Ok(Measure::Optimal),
            "pc" | "p_c" => Ok(Measure::Counterparty),
            other => {
                if let Some(idx) = other.strip_prefix("pk:").or_else(|| other.strip_prefix("p")) {
                    let i: usize = idx.parse().map_err(|_| {
                        Error::Config(format!("cannot parse measure '{s}' (expected qstar, pc, or pk:IDX)"))
                    })?;
                    if i == 0 {
                        return Err(Error::Config("model indices are 1-based".into()));
                    }
                    Ok(Measure::Model(i - 1))
                } else {
                    Err(Error::Config(format!(
                        "cannot parse measure '{s}' (expected qstar, pc, or pk:IDX)"
                    )))
                }
            }
        }
    }
}

fn validate_entry(ensemble: &ModelEnsemble, k: usize) -> Result<()> {
    if k >= ensemble.n_entries() {
        return Err(Error::Domain(format!(
            "entry index {k} out of range for ensemble with {} entries",
            ensemble.n_entries()
        )));
    }
    Ok(())
}

fn validate_measure(ensemble: &ModelEnsemble, measure: Measure) -> Result<()> {
    if let Measure::Model(j) = measure {
        validate_entry(ensemble, j)?;
    }
    Ok(())
}

/// E[Z*_{k,t}] under the given measure for ensemble entry k.
///
/// P_k (own model): exactly 1 (martingale). Q*: ℓ_k(t) = exp(g_k t).
/// P_C: exp(t·[λ_k − (2+η)λ_C + (1+η)·I₂(C,k)]). Cross-model expectations
/// E^{P_j}[Z*_k] with j ≠ k have no closed form here and are usage errors.
pub fn mean_z(
    measure: Measure,
    k: usize,
    t: f64,
    ensemble: &ModelEnsemble,
    market: &MarketParams,
) -> Result<f64> {
    validate_entry(ensemble, k)?;
    validate_measure(ensemble, measure)?;
    let ctx = Ctx::new(ensemble, market)?;
    ctx.check_time(t)?;
    match measure {
        Measure::Model(j) if j == k => Ok(1.0),
        Measure::Model(_) => Err(Error::Usage(
            "E[Z_k] under a different candidate model P_j has no closed form; use Monte Carlo"
                .into(),
        )),
        Measure::Optimal => Ok(ctx.ell(k, t)),
        Measure::Counterparty => {
            let lam_c = ensemble.counterparty().rate();
            let expo = ensemble.entry(k).rate() - (2.0 + ctx.eta) * lam_c
                + (1.0 + ctx.eta) * ctx.i2[k];
            Ok((t * expo).exp())
        }
    }
}

/// E[X*_t] under Q* or P_C (P_k means are not provided in closed form).
pub fn mean_x(
    measure: Measure,
    t: f64,
    ensemble: &ModelEnsemble,
    market: &MarketParams,
) -> Result<f64> {
    market.validate_viability(ensemble)?;
    let ctx = Ctx::new(ensemble, market)?;
    ctx.check_time(t)?;
    let drift = ctx.c - (1.0 + ctx.eta) * ctx.lc;
    match measure {
        Measure::Optimal => Ok(ctx.x0 + drift * t),
        Measure::Counterparty => {
            let lam_c = ensemble.counterparty().rate();
            let mut corr = 0.0;
            for i in 0..ensemble.n_entries() {
                let w = ensemble.entry_weight(i);
                if w == 0.0 {
                    continue;
                }
                let expo = ctx.eta * (lam_c - (1.0 + ctx.eta) * ctx.i2[i]);
                corr += w * ctx.ell(i, ctx.horizon) * (1.0 - (t * expo).exp());
            }
            Ok(ctx.x0 + drift * t + corr / ctx.theta)
        }
        Measure::Model(_) => Err(Error::Usage(
            "E[X*] under candidate models has no closed form here; use Monte Carlo".into(),
        )),
    }
}

/// Cov^{Q*}(Z*_{j,t}, Z*_{k,t})
///   = exp(t·[λ_j + λ_k − 3(1+η)λ_C + (1+η)³ I₃(C,j,k)]) − ℓ_j(t) ℓ_k(t).
pub fn cov_z_qstar(
    j: usize,
    k: usize,
    t: f64,
    ensemble: &ModelEnsemble,
    market: &MarketParams,
) -> Result<f64> {
    validate_entry(ensemble, j)?;
    validate_entry(ensemble, k)?;
    let ctx = Ctx::new(ensemble, market)?;
    ctx.check_time(t)?;
    let i3 = ensemble.cross_integral_3_entries(j, k)?;
    let load = 1.0 + ctx.eta;
    let lam_c = ensemble.counterparty().rate();
    let expo = ensemble.entry(j).rate() + ensemble.entry(k).rate() - 3.0 * load * lam_c
        + load * load * load * i3;
    Ok((t * expo).exp() - ctx.ell(j, t) * ctx.ell(k, t))
}

/// Full Q* covariance matrix of (Z*_{1,t}, …, Z*_{n,t}, Z*_{C,t}).
pub fn cov_z_matrix_qstar(
    t: f64,
    ensemble: &ModelEnsemble,
    market: &MarketParams,
) -> Result<Vec<Vec<f64>>> {
    let n = ensemble.n_entries();
    let mut m = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in j..n {
            let v = cov_z_qstar(j, k, t, ensemble, market)?;
            m[j][k] = v;
            m[k][j] = v;
        }
    }
    Ok(m)
}

/// Eigenvalue floor for the covariance PSD invariant, relative to the trace.
const PSD_TOLERANCE: f64 = 1e-8;

/// Validates symmetry and positive semidefiniteness of a covariance matrix
/// (smallest eigenvalue ≥ −1e-8 · trace).
pub fn check_covariance_psd(matrix: &[Vec<f64>]) -> Result<()> {
    let n = matrix.len();
    let flat: Vec<f64> = matrix.iter().flat_map(|r| r.iter().copied()).collect();
    if matrix.iter().any(|r| r.len() != n) {
        return Err(Error::Domain("covariance matrix must be square".into()));
    }
    let m = nalgebra::DMatrix::from_row_slice(n, n, &flat);
    let trace = m.trace();
    let eig = m.symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE * trace.abs().max(1e-300) {
        return Err(Error::Numerical {
            context: format!("covariance matrix not PSD (min eigenvalue {min:.3e})"),
            achieved: -min,
            requested: PSD_TOLERANCE * trace.abs(),
        });
    }
    Ok(())
}

/// Var^{Q*}(X*_t) = (1/θ²) pᵀ Σ p with p_k = π_k ℓ_k(T−t) and Σ the Q*
/// covariance matrix of the Z entries at time t.
pub fn var_x_qstar(t: f64, ensemble: &ModelEnsemble, market: &MarketParams) -> Result<f64> {
    market.validate_viability(ensemble)?;
    let ctx = Ctx::new(ensemble, market)?;
    ctx.check_time(t)?;
    let n = ensemble.n_entries();
    let cov = cov_z_matrix_qstar(t, ensemble, market)?;
    let p: Vec<f64> = (0..n)
        .map(|i| ensemble.entry_weight(i) * ctx.ell(i, ctx.horizon - t))
        .collect();
    let pv = nalgebra::DVector::from_vec(p);
    let flat: Vec<f64> = cov.iter().flat_map(|r| r.iter().copied()).collect();
    let sigma = nalgebra::DMatrix::from_row_slice(n, n, &flat);
    let quad = (pv.transpose() * &sigma * &pv)[(0, 0)];
    Ok(quad / (ctx.theta * ctx.theta))
}

/// E^{P_C}[Y_t] of the counterparty's wealth at the stated safety loading.
///
/// `eta` is explicit (overriding the market's loading) because the pricing
/// scan evaluates this expectation across candidate loadings; every η-
/// dependent quantity (growth exponents, cross integrals) is recomputed at
/// the given value. The premium income rate c does not enter.
pub fn mean_y(
    t: f64,
    eta: f64,
    ensemble: &ModelEnsemble,
    market: &MarketParams,
) -> Result<f64> {
    let ctx = Ctx::with_eta(ensemble, market, eta)?;
    ctx.check_time(t)?;
    let lam_c = ensemble.counterparty().rate();
    let mut corr = 0.0;
    for i in 0..ensemble.n_entries() {
        let w = ensemble.entry_weight(i);
        if w == 0.0 {
            continue;
        }
        let expo = eta * (lam_c - (1.0 + eta) * ctx.i2[i]);
        corr += w * ctx.ell(i, ctx.horizon) * (1.0 - (t * expo).exp());
    }
    Ok(ctx.y0 + t * eta * ctx.lc - corr / ctx.theta)
}

/// Mean of the no-risk-sharing (classical) wealth X^CL_t = x + ct − Σξ under
/// the given measure: losses accrue at the measure's own compensator, and
/// under Q* the counterparty compensator is inflated by (1+η).
pub fn mean_x_cl(
    measure: Measure,
    t: f64,
    ensemble: &ModelEnsemble,
    market: &MarketParams,
) -> Result<f64> {
    validate_measure(ensemble, measure)?;
    if !t.is_finite() || t < 0.0 || t > market.horizon() {
        return Err(Error::Domain(format!("time t = {t} outside [0, T]")));
    }
    let loss_rate = match measure {
        Measure::Model(j) => ensemble.entry(j).mean_loss_rate(),
        Measure::Counterparty => ensemble.counterparty().mean_loss_rate(),
        Measure::Optimal => (1.0 + market.eta()) * ensemble.counterparty().mean_loss_rate(),
    };
    Ok(market.x0() + market.c() * t - loss_rate * t)
}

/// Variance of X^CL_t under the given measure: t · ∫ ξ² ν(dξ) for the
/// measure's compensator ((1+η)-inflated under Q*).
pub fn var_x_cl(
    measure: Measure,
    t: f64,
    ensemble: &ModelEnsemble,
    market: &MarketParams,
) -> Result<f64> {
    validate_measure(ensemble, measure)?;
    if !t.is_finite() || t < 0.0 || t > market.horizon() {
        return Err(Error::Domain(format!("time t = {t} outside [0, T]")));
    }
    let second = match measure {
        Measure::Model(j) => ensemble.entry(j).second_moment_rate(),
        Measure::Counterparty => ensemble.counterparty().second_moment_rate(),
        Measure::Optimal => (1.0 + market.eta()) * ensemble.counterparty().second_moment_rate(),
    };
    Ok(second * t)
}

/// The complete one-model moment table (insurer and counterparty share the
/// same Gamma model): means, variances, covariances, and correlations of
/// (X*_t, Z*_t) under both the physical measure P and the optimal measure Q*.
#[derive(Debug, Clone, Serialize)]
pub struct OneModelMoments {
    pub t: f64,
    pub mean_z_p: f64,
    pub mean_z_q: f64,
    pub mean_x_p: f64,
    pub mean_x_q: f64,
    pub var_z_p: f64,
    pub var_z_q: f64,
    pub var_x_p: f64,
    pub var_x_q: f64,
    pub cov_xz_p: f64,
    pub cov_xz_q: f64,
    /// Correlations are exactly −1 (X* is affine in Z* with negative slope);
    /// undefined (None) at t = 0 where both variances vanish.
    pub corr_xz_p: Option<f64>,
    pub corr_xz_q: Option<f64>,
}

/// Closed-form one-model moments at time t.
pub fn one_model_moments(
    t: f64,
    model: &GammaCompensator,
    market: &MarketParams,
) -> Result<OneModelMoments> {
    let ens = ModelEnsemble::single(model.clone());
    market.validate_viability(&ens)?;
    if !t.is_finite() || t < 0.0 || t > market.horizon() {
        return Err(Error::Domain(format!("time t = {t} outside [0, T]")));
    }
    let (lam, eta, theta, horizon) = (model.rate(), market.eta(), market.theta(), market.horizon());
    let g = lam * eta * eta;
    // Var^{Q*}(Z) carries the (1+η)-inflated jump activity.
    let gq = lam * eta * eta * (1.0 + eta);
    let drift = market.c() - (1.0 + eta) * model.mean_loss_rate();
    let x0 = market.x0();

    let mean_z_p = 1.0;
    let mean_z_q = (g * t).exp();
    let mean_x_q = x0 + drift * t;
    let mean_x_p = mean_x_q + (g * horizon).exp() * (1.0 - (-g * t).exp()) / theta;
    let var_z_p = (g * t).exp() - 1.0;
    let var_z_q = (2.0 * g * t).exp() * ((gq * t).exp() - 1.0);
    let var_x_p = (2.0 * g * (horizon - t)).exp() * ((g * t).exp() - 1.0) / (theta * theta);
    let var_x_q = (2.0 * g * horizon).exp() * ((gq * t).exp() - 1.0) / (theta * theta);
    let cov_xz_p = -(g * (horizon - t)).exp() * ((g * t).exp() - 1.0) / theta;
    let cov_xz_q = -(g * (horizon + t)).exp() * ((gq * t).exp() - 1.0) / theta;
    // X* is affine in Z* with a strictly negative slope under either measure,
    // so the correlation is identically −1 wherever it is defined; returning
    // the exact value (rather than cov/√(v·v), which rounds) keeps the
    // closed form's strongest statement intact.
    let corr = |_cov: f64, vx: f64, vz: f64| {
        if t > 0.0 && vx > 0.0 && vz > 0.0 {
            Some(-1.0)
        } else {
            None
        }
    };
    Ok(OneModelMoments {
        t,
        mean_z_p,
        mean_z_q,
        mean_x_p,
        mean_x_q,
        var_z_p,
        var_z_q,
        var_x_p,
        var_x_q,
        cov_xz_p,
        cov_xz_q,
        corr_xz_p: corr(cov_xz_p, var_x_p, var_z_p),
        corr_xz_q: corr(cov_xz_q, var_x_q, var_z_q),
    })
}

/// Measure-tagged moment report for one evaluation time. Entries that have no
/// closed form under the tagged measure are `None`.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub measure: Measure,
    pub t: f64,
    /// Per ensemble entry (counterparty last); `None` where undefined.
    pub mean_z: Vec<Option<f64>>,
    pub mean_x: Option<f64>,
    /// Q* covariance matrix of the Z entries (requires the triple
    /// integrability conditions).
    pub cov_z: Option<Vec<Vec<f64>>>,
    pub var_x: Option<f64>,
    pub mean_y: Option<f64>,
}

impl MomentReport {
    /// Computes every closed-form moment available under `measure`.
    pub fn compute(
        measure: Measure,
        t: f64,
        ensemble: &ModelEnsemble,
        market: &MarketParams,
    ) -> Result<Self> {
        validate_measure(ensemble, measure)?;
        let n = ensemble.n_entries();
        let mean_z_vec: Vec<Option<f64>> = (0..n)
            .map(|k| match mean_z(measure, k, t, ensemble, market) {
                Ok(v) => Ok(Some(v)),
                Err(Error::Usage(_)) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<_>>()?;
        let mean_x_val = match measure {
            Measure::Optimal | Measure::Counterparty => Some(mean_x(measure, t, ensemble, market)?),
            Measure::Model(_) => None,
        };
        let (cov, var) = if measure == Measure::Optimal {
            let cov = cov_z_matrix_qstar(t, ensemble, market)?;
            check_covariance_psd(&cov)?;
            let var = var_x_qstar(t, ensemble, market)?;
            (Some(cov), Some(var))
        } else {
            (None, None)
        };
        let mean_y_val = match measure {
            // Y is a Q*-martingale: E^{Q*}[Y_t] = y0 for all t.
            Measure::Optimal => Some(market.y0()),
            Measure::Counterparty => Some(mean_y(t, market.eta(), ensemble, market)?),
            Measure::Model(_) => None,
        };
        Ok(MomentReport {
            measure,
            t,
            mean_z: mean_z_vec,
            mean_x: mean_x_val,
            cov_z: cov,
            var_x: var,
            mean_y: mean_y_val,
        })
    }
}
