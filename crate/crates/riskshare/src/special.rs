//! Thin shims over special functions.
//!
//! lnΓ and ψ come from statrs; trigamma ψ′ (needed only for severity standard
//! errors) is not exposed there, so it is computed by the usual upward
//! recurrence into the asymptotic regime.

/// Natural log of the Gamma function.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Digamma ψ(x) = d/dx lnΓ(x).
pub(crate) fn digamma(x: f64) -> f64 {
    statrs::function::gamma::digamma(x)
}

/// Trigamma ψ′(x) for x > 0.
///
/// Recurrence ψ′(x) = ψ′(x+1) + 1/x² until x ≥ 10, then the asymptotic series
/// 1/x + 1/(2x²) + Σ B_{2n}/x^{2n+1}; accurate to ~1e-13 relative on (0, ∞).
pub(crate) fn trigamma(x: f64) -> f64 {
    assert!(x > 0.0, "trigamma requires x > 0, got {x}");
    let mut acc = 0.0;
    let mut z = x;
    while z < 10.0 {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // Bernoulli coefficients B_2/2!·2 ... for ψ′: 1/z + 1/2z² + 1/6z³ − 1/30z⁵ + 1/42z⁷ − 1/30z⁹.
    let series = inv
        + 0.5 * inv2
        + inv2 * inv * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)));
    acc + series
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn trigamma_at_one_is_pi_squared_over_six() {
        assert_relative_eq!(
            trigamma(1.0),
            std::f64::consts::PI * std::f64::consts::PI / 6.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn trigamma_recurrence_holds() {
        for &x in &[0.3, 0.58, 1.7, 5.5, 23.0] {
            assert_relative_eq!(
                trigamma(x),
                trigamma(x + 1.0) + 1.0 / (x * x),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn trigamma_at_half_is_pi_squared_over_two() {
        assert_relative_eq!(
            trigamma(0.5),
            std::f64::consts::PI * std::f64::consts::PI / 2.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn ln_gamma_and_digamma_spot_values() {
        assert_relative_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-14);
        assert_relative_eq!(ln_gamma(0.5), 0.5 * std::f64::consts::PI.ln(), max_relative = 1e-13);
        // ψ(1) = −γ.
        assert_relative_eq!(digamma(1.0), -0.5772156649015329, max_relative = 1e-12);
    }
}
