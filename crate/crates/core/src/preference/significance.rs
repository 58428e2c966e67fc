use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::factorial::ln_binomial;

use super::PreferenceError;

// relative slack when comparing outcome probabilities, so outcomes equally
// likely as the observed one are not lost to rounding
const PMF_SLACK: f64 = 1e-7;

/// Exact two-sided binomial test against p = 0.5. Ties are expected to be
/// removed by the caller.
pub fn binomial_test(wins: u64, losses: u64) -> Result<f64, PreferenceError> {
    let n = wins + losses;
    if n == 0 {
        return Err(PreferenceError::NoTrials);
    }
    let ln_half_n = n as f64 * std::f64::consts::LN_2;
    let ln_pmf = |k: u64| ln_binomial(n, k) - ln_half_n;
    let threshold = ln_pmf(wins) + PMF_SLACK.ln_1p();
    let p: f64 = (0..=n)
        .map(ln_pmf)
        .filter(|&l| l <= threshold)
        .map(f64::exp)
        .sum();
    Ok(p.min(1.0))
}

/// McNemar's test on the discordant counts with continuity correction.
pub fn mcnemar_test(wins: u64, losses: u64) -> Result<f64, PreferenceError> {
    let n = wins + losses;
    if n == 0 {
        return Err(PreferenceError::NoTrials);
    }
    let stat = mcnemar_statistic(wins, losses);
    let chi = ChiSquared::new(1.0).expect("one degree of freedom is valid");
    Ok(chi.sf(stat).clamp(f64::MIN_POSITIVE, 1.0))
}

pub fn mcnemar_statistic(wins: u64, losses: u64) -> f64 {
    let gap = (wins.abs_diff(losses) as f64 - 1.0).max(0.0);
    gap * gap / (wins + losses) as f64
}
