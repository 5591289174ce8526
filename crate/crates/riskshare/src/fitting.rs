//! Claims-data ingestion and maximum-likelihood estimation of the
//! compound-Poisson/Gamma loss models, plus the cross-validation workflow
//! that turns one portfolio into a model ensemble.
//!
//! Severity is fit to the per-policy *average* claim with claim-count
//! weights — the portfolio schema carries no individual claim amounts — and
//! the arrival rate to claim counts per policy-year of exposure.

use crate::compensators::{GammaCompensator, ModelEnsemble};
use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma, trigamma};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma as GammaDist, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One policy-level record: exposure in policy-years, the number of claims,
/// and the average claim amount (0 when there were no claims).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub policy_id: String,
    pub exposure: f64,
    pub n_claims: u64,
    pub avg_claim: f64,
}

impl PolicyRecord {
    pub fn validate(&self) -> Result<()> {
        if !self.exposure.is_finite() || self.exposure <= 0.0 {
            return Err(Error::Domain(format!(
                "policy {}: exposure must be positive, got {}",
                self.policy_id, self.exposure
            )));
        }
        if !self.avg_claim.is_finite() || self.avg_claim < 0.0 {
            return Err(Error::Domain(format!(
                "policy {}: avg_claim must be nonnegative, got {}",
                self.policy_id, self.avg_claim
            )));
        }
        if self.n_claims == 0 && self.avg_claim != 0.0 {
            return Err(Error::Domain(format!(
                "policy {}: avg_claim must be 0 when n_claims is 0, got {}",
                self.policy_id, self.avg_claim
            )));
        }
        Ok(())
    }
}

/// Poisson arrival-rate estimate λ̂ = Σ n_claims / Σ exposure.
#[derive(Debug, Clone, Serialize)]
pub struct PoissonFit {
    pub rate: f64,
    /// Asymptotic standard error sqrt(λ̂ / Σ exposure).
    pub std_error: f64,
    pub n_claims_total: u64,
    pub total_exposure: f64,
    /// True when no claims were observed: the rate is 0 and cannot seed a
    /// compensator (which requires a strictly positive rate).
    pub degenerate: bool,
}

pub fn fit_poisson_rate(records: &[PolicyRecord]) -> Result<PoissonFit> {
    for r in records {
        r.validate()?;
    }
    let total_exposure: f64 = records.iter().map(|r| r.exposure).sum();
    if !(total_exposure > 0.0) {
        return Err(Error::Domain(
            "total exposure must be positive to estimate an arrival rate".into(),
        ));
    }
    let n_claims_total: u64 = records.iter().map(|r| r.n_claims).sum();
    let rate = n_claims_total as f64 / total_exposure;
    Ok(PoissonFit {
        rate,
        std_error: (rate / total_exposure).sqrt(),
        n_claims_total,
        total_exposure,
        degenerate: n_claims_total == 0,
    })
}

/// Weighted Gamma severity fit.
#[derive(Debug, Clone, Serialize)]
pub struct GammaFit {
    pub shape: f64,
    pub scale: f64,
    pub shape_std_error: f64,
    pub scale_std_error: f64,
    /// Weighted log-likelihood at the optimum.
    pub loglik: f64,
    /// |ln m − ψ(m) − Δ| ≤ 1e-8 at the returned shape (per unit weight).
    pub converged: bool,
    pub n_records_used: usize,
    /// Records with claims but a zero average (data artifacts outside the
    /// Gamma support), dropped with a warning.
    pub n_dropped: usize,
}

/// Convergence threshold on the profile score per unit weight.
const GAMMA_SCORE_TOL: f64 = 1e-8;
const GAMMA_MAX_ITER: usize = 200;

/// Weighted maximum-likelihood Gamma fit to per-policy average claims, with
/// weights w_i = n_claims_i: maximizes Σ w_i ln f_{m,φ}(x_i). The shape
/// solves ln m − ψ(m) = ln x̄_w − (ln x)̄_w by Newton iteration inside a
/// maintained bracket (the left side is strictly decreasing), and the scale
/// follows as φ = x̄_w / m.
pub fn fit_gamma_severity(records: &[PolicyRecord]) -> Result<GammaFit> {
    for r in records {
        r.validate()?;
    }
    let mut values = Vec::new();
    let mut weights = Vec::new();
    let mut n_dropped = 0usize;
    for r in records {
        if r.n_claims == 0 {
            continue;
        }
        if r.avg_claim == 0.0 {
            n_dropped += 1;
            log::warn!(
                "policy {}: positive claim count with zero average claim; dropped from severity fit",
                r.policy_id
            );
            continue;
        }
        values.push(r.avg_claim);
        weights.push(r.n_claims as f64);
    }
    if values.len() < 2 {
        return Err(Error::DegenerateSample(format!(
            "severity fit needs at least 2 usable records with claims, got {}",
            values.len()
        )));
    }
    let w_sum: f64 = weights.iter().sum();
    let mean: f64 = values.iter().zip(&weights).map(|(x, w)| w * x).sum::<f64>() / w_sum;
    let log_mean: f64 = values
        .iter()
        .zip(&weights)
        .map(|(x, w)| w * x.ln())
        .sum::<f64>()
        / w_sum;
    let delta = mean.ln() - log_mean;
    // Δ > 0 strictly unless all values coincide (weighted AM–GM).
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::DegenerateSample(
            "severity observations are all equal; the Gamma shape is unidentifiable".into(),
        ));
    }

    // Minka's closed-form initializer, then safeguarded Newton on
    // h(m) = ln m − ψ(m) − Δ, which is strictly decreasing in m.
    let mut m = (3.0 - delta + ((delta - 3.0).powi(2) + 24.0 * delta).sqrt()) / (12.0 * delta);
    let h = |m: f64| m.ln() - digamma(m) - delta;
    let mut lo = m;
    let mut hi = m;
    while h(lo) <= 0.0 {
        lo *= 0.5;
    }
    while h(hi) >= 0.0 {
        hi *= 2.0;
    }
    m = m.clamp(lo, hi);
    // Newton converges quadratically here, so once |h| clears the 1e-8
    // contract it takes one more step to reach machine precision; iterate to
    // the floor so the estimate itself (not just the score) is fully resolved.
    for _ in 0..GAMMA_MAX_ITER {
        let hm = h(m);
        if hm.abs() <= 1e-14 {
            break;
        }
        if hm > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
        let slope = 1.0 / m - trigamma(m);
        let newton = m - hm / slope;
        let next = if newton.is_finite() && lo < newton && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - m).abs() <= f64::EPSILON * m {
            m = next;
            break;
        }
        m = next;
    }
    let converged = h(m).abs() <= GAMMA_SCORE_TOL;
    if !converged {
        return Err(Error::Numerical {
            context: "Gamma shape solver did not converge".into(),
            achieved: h(m).abs(),
            requested: GAMMA_SCORE_TOL,
        });
    }
    let scale = mean / m;

    // Asymptotic covariance from the weighted Fisher information with the
    // effective sample size n_eff = (Σw)²/Σw².
    let w_sq: f64 = weights.iter().map(|w| w * w).sum();
    let n_eff = w_sum * w_sum / w_sq;
    let tri = trigamma(m);
    let denom = n_eff * (m * tri - 1.0);
    let shape_std_error = (m / denom).sqrt();
    let scale_std_error = (tri * scale * scale / denom).sqrt();

    let loglik: f64 = values
        .iter()
        .zip(&weights)
        .map(|(x, w)| {
            w * ((m - 1.0) * x.ln() - x / scale - ln_gamma(m) - m * scale.ln())
        })
        .sum();
    Ok(GammaFit {
        shape: m,
        scale,
        shape_std_error,
        scale_std_error,
        loglik,
        converged,
        n_records_used: values.len(),
        n_dropped,
    })
}

/// Complete fit of one compound-Poisson/Gamma loss model.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub model: GammaCompensator,
    pub loglik_severity: f64,
    pub n_policies: usize,
    pub n_claims_total: u64,
    pub converged: bool,
    pub rate_std_error: f64,
    pub shape_std_error: f64,
    pub scale_std_error: f64,
}

pub fn fit_model(records: &[PolicyRecord]) -> Result<FitResult> {
    let poisson = fit_poisson_rate(records)?;
    if poisson.degenerate {
        return Err(Error::DegenerateSample(
            "no claims observed; the arrival rate is 0 and cannot define a compensator".into(),
        ));
    }
    let gamma = fit_gamma_severity(records)?;
    let model = GammaCompensator::new(poisson.rate, gamma.shape, gamma.scale)?;
    Ok(FitResult {
        model,
        loglik_severity: gamma.loglik,
        n_policies: records.len(),
        n_claims_total: poisson.n_claims_total,
        converged: gamma.converged,
        rate_std_error: poisson.std_error,
        shape_std_error: gamma.shape_std_error,
        scale_std_error: gamma.scale_std_error,
    })
}

fn with_context(err: Error, context: &str) -> Error {
    match err {
        Error::Domain(m) => Error::Domain(format!("{context}: {m}")),
        Error::DegenerateSample(m) => Error::DegenerateSample(format!("{context}: {m}")),
        Error::Numerical {
            context: c,
            achieved,
            requested,
        } => Error::Numerical {
            context: format!("{context}: {c}"),
            achieved,
            requested,
        },
        other => other,
    }
}

/// Cross-validation ensemble: the counterparty model is fit on the full
/// portfolio; each of the `n_models` candidates is fit on a fresh uniform
/// subsample of ⌊fraction·N⌋ records drawn without replacement. Weights are
/// uniform over the candidates with π_C = 0.
pub fn cv_ensemble(
    records: &[PolicyRecord],
    n_models: usize,
    fraction: f64,
    seed: u64,
) -> Result<ModelEnsemble> {
    if records.is_empty() {
        return Err(Error::Domain("no records to fit".into()));
    }
    if n_models == 0 {
        return Err(Error::Domain("n_models must be at least 1".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Domain(format!(
            "subsample fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let subsample_size = ((fraction * records.len() as f64).floor() as usize).max(1);
    let counterparty = fit_model(records)
        .map_err(|e| with_context(e, "full-data (counterparty) fit"))?
        .model;

    let models: Vec<GammaCompensator> = (1..=n_models)
        .into_par_iter()
        .map(|k| -> Result<GammaCompensator> {
            // Partial Fisher–Yates over the index array; one RNG stream per
            // candidate so the draw is independent of evaluation order.
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut indices: Vec<usize> = (0..records.len()).collect();
            for i in 0..subsample_size {
                let j = rand::Rng::gen_range(&mut rng, i..records.len());
                indices.swap(i, j);
            }
            let subsample: Vec<PolicyRecord> = indices[..subsample_size]
                .iter()
                .map(|&i| records[i].clone())
                .collect();
            fit_model(&subsample)
                .map(|f| f.model)
                .map_err(|e| with_context(e, &format!("subsample fit k={k} (seed {seed})")))
        })
        .collect::<Result<_>>()?;

    let weights = vec![1.0 / n_models as f64; n_models];
    ModelEnsemble::new(models, counterparty, weights, 0.0)
}

/// Synthetic portfolio at known parameters, for estimator validation: every
/// policy has unit exposure, a Poisson(λ) claim count, and — when claims
/// occurred — an average claim drawn once from Gamma(m, φ).
///
/// The average is a single Gamma draw rather than a mean of n_claims
/// severities: the severity fit consumes per-policy averages as Gamma
/// observations, and feeding it physically-averaged values (whose dispersion
/// shrinks with the claim count) would bias the recovered shape upward by
/// construction rather than test the estimator.
pub fn synthetic_portfolio(
    n_policies: usize,
    rate: f64,
    shape: f64,
    scale: f64,
    seed: u64,
) -> Result<Vec<PolicyRecord>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::Domain(format!("rate must be positive, got {rate}")));
    }
    let severity = GammaDist::new(shape, scale)
        .map_err(|e| Error::Domain(format!("invalid Gamma severity parameters: {e}")))?;
    let counts = Poisson::new(rate)
        .map_err(|e| Error::Domain(format!("invalid Poisson rate: {e}")))?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_policies);
    for i in 0..n_policies {
        let n_claims = counts.sample(&mut rng) as u64;
        let avg_claim = if n_claims > 0 {
            severity.sample(&mut rng)
        } else {
            0.0
        };
        records.push(PolicyRecord {
            policy_id: format!("P{i:06}"),
            exposure: 1.0,
            n_claims,
            avg_claim,
        });
    }
    Ok(records)
}

const CSV_HEADER: [&str; 4] = ["policy_id", "exposure", "n_claims", "avg_claim"];

/// Reads a policy CSV (`policy_id,exposure,n_claims,avg_claim`, header
/// required). Malformed rows surface as schema errors carrying the line
/// number.
pub fn read_policy_csv(path: impl AsRef<Path>) -> Result<Vec<PolicyRecord>> {
    let mut reader = csv::Reader::from_path(path.as_ref()).map_err(|e| Error::Schema {
        line: None,
        message: format!("cannot open {}: {e}", path.as_ref().display()),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema {
            line: Some(1),
            message: e.to_string(),
        })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Schema {
            line: Some(1),
            message: format!(
                "expected header {:?}, got {:?}",
                CSV_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut records = Vec::new();
    for result in reader.deserialize::<PolicyRecord>() {
        let record = result.map_err(|e| {
            let line = e.position().map(|p| p.line());
            Error::Schema {
                line,
                message: e.to_string(),
            }
        })?;
        record.validate().map_err(|e| Error::Schema {
            // Data rows start on line 2; deserialize has already advanced
            // past the record, so recount from the collected output.
            line: Some(records.len() as u64 + 2),
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Writes a policy CSV in the schema `read_policy_csv` expects.
pub fn write_policy_csv(path: impl AsRef<Path>, records: &[PolicyRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref()).map_err(|e| Error::Schema {
        line: None,
        message: format!("cannot create {}: {e}", path.as_ref().display()),
    })?;
    for r in records {
        writer.serialize(r).map_err(|e| Error::Schema {
            line: None,
            message: e.to_string(),
        })?;
    }
    writer.flush()?;
    Ok(())
}
