//! Closed-form bounds evaluated with every hidden constant set to one.

use serde::{Deserialize, Serialize};

/// Loss level below which every example is certified: `log 2`.
pub const KAPPA: f64 = std::f64::consts::LN_2;

/// Past this value of `2 L(0)` the envelope prefactor overflows `f64` and
/// values are reported in log space only.
const LOG_SPACE_THRESHOLD: f64 = 700.0;

/// Loss envelope `exp(2 L0) L0 exp(-lambda0 t / 2)` on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub log_values: Vec<f64>,
    /// `None` when the prefactor overflows.
    pub values: Option<Vec<f64>>,
    pub log_space: bool,
}

pub fn loss_envelope(l0: f64, lambda0: f64, times: &[f64]) -> Envelope {
    let log_values: Vec<f64> = times
        .iter()
        .map(|&t| 2.0 * l0 + l0.ln() - lambda0 * t / 2.0)
        .collect();
    let log_space = 2.0 * l0 > LOG_SPACE_THRESHOLD;
    let values = (!log_space).then(|| log_values.iter().map(|v| v.exp()).collect());
    Envelope {
        log_values,
        values,
        log_space,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    /// Rate used in place of `lambda0 / 2`.
    pub rate: f64,
    pub passed: bool,
    /// First logged index where the loss exceeded the envelope.
    pub first_violation: Option<usize>,
    /// Largest `log L(t) - log envelope(t)`.
    pub worst_log_gap: f64,
}

/// Checks `L(t) <= exp(2 L0) L0 exp(-rate t)` at every logged point.
/// Comparison is done in log space so huge prefactors are harmless.
pub fn check_envelope(l0: f64, rate: f64, times: &[f64], losses: &[f64]) -> EnvelopeCheck {
    let mut first_violation = None;
    let mut worst = f64::NEG_INFINITY;
    for (k, (&t, &l)) in times.iter().zip(losses).enumerate() {
        let bound = 2.0 * l0 + l0.ln() - rate * t;
        // tiny relative slack for the t = 0 point where L = L0 exactly
        let gap = l.ln() - bound;
        worst = worst.max(gap);
        if gap > 1e-12 && first_violation.is_none() {
            first_violation = Some(k);
        }
    }
    EnvelopeCheck {
        rate,
        passed: first_violation.is_none(),
        first_violation,
        worst_log_gap: worst,
    }
}

/// Time after which the envelope sits below `kappa`:
/// `(2 / lambda0) (2 L0 + log(L0 / kappa))`.
pub fn certification_time(l0: f64, lambda0: f64) -> f64 {
    if l0 <= KAPPA {
        return 0.0;
    }
    2.0 / lambda0 * (2.0 * l0 + (l0 / KAPPA).ln())
}

/// `n t / sqrt(m)`: per-neuron weight movement allowed by the gradient
/// magnitude bound at time `t`.
pub fn drift_bound(n: usize, m: usize, t: f64) -> f64 {
    n as f64 * t / (m as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub n: usize,
    pub d: usize,
    pub xi: f64,
    pub epsilon: f64,
    pub lambda0: f64,
    pub delta: f64,
    /// `sqrt(2 pi) xi / 384`.
    pub c: f64,
    /// `c delta lambda0 / (d^1.5 n^2)`.
    pub r: f64,
    /// `12 (1 + eps) sqrt(d) R / (sqrt(2 pi) xi)`.
    pub r_tilde: f64,
    /// `delta^2 lambda0^2 / (d^2.5 n^3)`.
    pub epsilon_gram: f64,
    /// `sqrt(2 d) R / log(sqrt(2 pi d / R) xi)`.
    pub epsilon_indicator: f64,
    pub epsilon_threshold: f64,
    /// `(d^1.5 n^4 delta lambda0 / (delta^2 lambda0^2 - eps d^2.5 n^4))^2`;
    /// `None` when the denominator is not positive.
    pub width_requirement: Option<f64>,
    /// `(n^2 / lambda0^2) log(n / delta)` for the initialization concentration.
    pub width_init: f64,
    pub guaranteed: bool,
    pub note: String,
}

pub fn theorem_thresholds(
    n: usize,
    d: usize,
    xi: f64,
    epsilon: f64,
    lambda0: f64,
    delta: f64,
) -> ThresholdReport {
    let (nf, df) = (n as f64, d as f64);
    let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
    let c = sqrt_2pi * xi / 384.0;
    let r = c * delta * lambda0 / (df.powf(1.5) * nf * nf);
    let r_tilde = 12.0 * (1.0 + epsilon) * df.sqrt() * r / (sqrt_2pi * xi);
    let epsilon_gram = delta * delta * lambda0 * lambda0 / (df.powf(2.5) * nf.powi(3));
    let log_arg = (2.0 * std::f64::consts::PI * df / r).sqrt() * xi;
    let epsilon_indicator = if log_arg > 1.0 {
        (2.0 * df).sqrt() * r / log_arg.ln()
    } else {
        f64::NAN
    };
    let epsilon_threshold = epsilon_gram.min(epsilon_indicator);
    let denom = delta * delta * lambda0 * lambda0 - epsilon * df.powf(2.5) * nf.powi(4);
    let width_requirement =
        (denom > 0.0).then(|| (df.powf(1.5) * nf.powi(4) * delta * lambda0 / denom).powi(2));
    let width_init = nf * nf / (lambda0 * lambda0) * (nf / delta).ln();
    let within = epsilon <= epsilon_threshold;
    let guaranteed = lambda0 > 0.0 && within && width_requirement.is_some();
    let note = if lambda0 <= 0.0 {
        "lambda0 is not positive: no convergence guarantee".to_string()
    } else if width_requirement.is_none() {
        "width requirement undefined (eps too large for this lambda0): no convergence guarantee"
            .to_string()
    } else if !within {
        "epsilon exceeds the threshold: no convergence guarantee".to_string()
    } else {
        "epsilon below threshold; guarantee holds for sufficiently wide networks".to_string()
    };
    ThresholdReport {
        n,
        d,
        xi,
        epsilon,
        lambda0,
        delta,
        c,
        r,
        r_tilde,
        epsilon_gram,
        epsilon_indicator,
        epsilon_threshold,
        width_requirement,
        width_init,
        guaranteed,
        note,
    }
}

/// Bound on the fraction of flipped activation patterns for drift `r`:
/// `12 (1 + eps) sqrt(d) r / (sqrt(2 pi) xi)`.
pub fn flip_fraction_bound(r: f64, epsilon: f64, d: usize, xi: f64) -> f64 {
    12.0 * (1.0 + epsilon) * (d as f64).sqrt() * r / ((2.0 * std::f64::consts::PI).sqrt() * xi)
}

/// Bound on `||H(t) - H(0)||_2` for drift `r`:
/// `12 (1 + eps)(1 + eps)^2 d^1.5 n^2 r / (sqrt(2 pi) xi delta)`.
pub fn gram_shift_bound(r: f64, epsilon: f64, n: usize, d: usize, xi: f64, delta: f64) -> f64 {
    let onep = 1.0 + epsilon;
    12.0 * onep * onep * onep * (d as f64).powf(1.5) * (n * n) as f64 * r
        / ((2.0 * std::f64::consts::PI).sqrt() * xi * delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_passes_at_time_zero_and_decays() {
        let env = loss_envelope(2.0, 0.5, &[0.0, 4.0]);
        assert!((env.values.as_ref().unwrap()[0] - 2.0 * 4f64.exp()).abs() < 1e-9);
        assert!((env.log_values[0] - env.log_values[1] - 1.0).abs() < 1e-15);
        let ok = check_envelope(2.0, 0.25, &[0.0, 1.0], &[2.0, 1.9]);
        assert!(ok.passed);
    }

    #[test]
    fn envelope_switches_to_log_space() {
        let env = loss_envelope(400.0, 1.0, &[0.0, 10.0]);
        assert!(env.log_space);
        assert!(env.values.is_none());
        assert!(env.log_values.iter().all(|v| v.is_finite()));
        let chk = check_envelope(400.0, 0.5, &[0.0, 10.0], &[400.0, 300.0]);
        assert!(chk.passed);
    }

    #[test]
    fn envelope_detects_violation() {
        // with L0 = 0.1 the prefactor is ~1.22; a loss that grows past it fails
        let chk = check_envelope(0.1, 1.0, &[0.0, 1.0, 2.0], &[0.1, 0.2, 0.01]);
        assert!(!chk.passed);
        assert_eq!(chk.first_violation, Some(1));
    }

    #[test]
    fn threshold_hand_values() {
        let rep = theorem_thresholds(2, 1, 1.0, 0.0, 1.0, 1.0);
        let c = (2.0 * std::f64::consts::PI).sqrt() / 384.0;
        assert!((rep.c - c).abs() < 1e-15);
        assert!((rep.r - c / 4.0).abs() < 1e-15);
        assert!((rep.epsilon_gram - 1.0 / 8.0).abs() < 1e-15);
        // eps = 0: width = (16 / 1)^2
        assert!((rep.width_requirement.unwrap() - 256.0).abs() < 1e-9);
        assert!(rep.guaranteed);
        assert!((rep.width_init - 4.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn width_undefined_when_denominator_nonpositive() {
        let rep = theorem_thresholds(4, 2, 0.5, 0.1, 0.01, 0.1);
        assert!(rep.width_requirement.is_none());
        assert!(!rep.guaranteed);
        assert!(rep.note.contains("no convergence guarantee"));
    }

    #[test]
    fn certification_time_reaches_kappa() {
        let (l0, lam) = (3.0, 0.2);
        let t = certification_time(l0, lam);
        let env = loss_envelope(l0, lam, &[t]);
        assert!((env.values.unwrap()[0] - KAPPA).abs() < 1e-12);
        assert_eq!(certification_time(0.5, lam), 0.0);
    }

    #[test]
    fn drift_and_flip_bounds() {
        assert_eq!(drift_bound(16, 64, 2.0), 4.0);
        let b = flip_fraction_bound(0.1, 0.0, 4, 1.0);
        assert!((b - 2.4 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
        let g = gram_shift_bound(0.1, 0.0, 1, 1, 1.0, 1.0);
        assert!((g - 1.2 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
    }
}
