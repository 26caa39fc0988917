//! Closed-form error-rate arithmetic: familywise error rate, per-family
//! error rate, expected false discoveries under an FDR level, and the
//! alpha-percentage diagnostic.
//!
//! Everything is computed in full precision; rounding happens only at
//! presentation time.

use crate::error::{Error, Result};

fn check_alpha_m(alpha: f64, m: u64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must be in (0,1), got {alpha}")));
    }
    if m < 1 {
        return Err(Error::invalid("m must be at least 1"));
    }
    Ok(())
}

/// Familywise error rate `1 - (1 - alpha)^m`: the probability of at least
/// one false positive among `m` independent tests when every null is true.
pub fn fwer(alpha: f64, m: u64) -> Result<f64> {
    check_alpha_m(alpha, m)?;
    Ok(1.0 - (1.0 - alpha).powi(m as i32))
}

/// Per-test threshold `alpha / m`; guarantees `fwer(alpha/m, m) <= alpha`.
pub fn bonferroni_threshold(alpha: f64, m: u64) -> Result<f64> {
    check_alpha_m(alpha, m)?;
    Ok(alpha / m as f64)
}

/// Per-family error rate `alpha * m`: the expected count of false positives
/// when all nulls are true.
pub fn pfer(alpha: f64, m: u64) -> Result<f64> {
    check_alpha_m(alpha, m)?;
    Ok(alpha * m as f64)
}

/// Expected number of false discoveries among `n_significant` results
/// declared at the given FDR level.
pub fn expected_false_discoveries(fdr_level: f64, n_significant: u64) -> Result<f64> {
    if !(fdr_level > 0.0 && fdr_level < 1.0) {
        return Err(Error::invalid(format!(
            "fdr_level must be in (0,1), got {fdr_level}"
        )));
    }
    Ok(fdr_level * n_significant as f64)
}

/// Alpha percentage: expected false positives divided by observed
/// significant results, times 100.
///
/// Values above 100% are reported verbatim; they indicate the observed
/// count of significant results fell below the all-null expectation.
pub fn alpha_percentage(alpha: f64, m: u64, n_observed_significant: u64) -> Result<f64> {
    check_alpha_m(alpha, m)?;
    if n_observed_significant == 0 {
        return Err(Error::Undefined(
            "alpha percentage is undefined with zero significant results; \
             report \"no significant results\" instead"
                .into(),
        ));
    }
    Ok(alpha * m as f64 / n_observed_significant as f64 * 100.0)
}

/// One alpha-percentage row per alpha level.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaPercentageRow {
    pub alpha: f64,
    pub n_significant: u64,
    pub alpha_percentage: f64,
}

/// Alpha percentage across several alpha levels, all counted from the same
/// p-value vector. Counts must be nondecreasing in alpha (larger thresholds
/// can only admit more p-values), otherwise the input is inconsistent.
pub fn alpha_percentage_profile(
    m: u64,
    n_significant_at: &[(f64, u64)],
) -> Result<Vec<AlphaPercentageRow>> {
    if n_significant_at.is_empty() {
        return Err(Error::invalid("profile needs at least one alpha level"));
    }
    let mut levels = n_significant_at.to_vec();
    levels.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in levels.windows(2) {
        if w[1].1 < w[0].1 {
            return Err(Error::invalid(format!(
                "significant counts must be nondecreasing in alpha: \
                 {} at alpha={} but {} at alpha={}",
                w[0].1, w[0].0, w[1].1, w[1].0
            )));
        }
    }
    levels
        .iter()
        .map(|&(alpha, n)| {
            Ok(AlphaPercentageRow {
                alpha,
                n_significant: n,
                alpha_percentage: alpha_percentage(alpha, m, n)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fwer_paper_example() {
        // 15 tests at alpha = 0.05: a 54% chance of at least one false positive
        let v = fwer(0.05, 15).unwrap();
        assert!((v - 0.536_708_769_840_247).abs() < 1e-15);
        assert_eq!((v * 100.0).round(), 54.0);
        assert!((fwer(0.05, 1).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn fwer_matches_exhaustive_complement_for_small_m() {
        // P(at least one of m rejects) = 1 - prod(1 - alpha)
        for m in 1..=5u64 {
            for &alpha in &[0.01, 0.05, 0.2, 0.77] {
                let mut keep = 1.0;
                for _ in 0..m {
                    keep *= 1.0 - alpha;
                }
                assert!((fwer(alpha, m).unwrap() - (1.0 - keep)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn fwer_monotone_in_m_and_alpha() {
        let mut prev = 0.0;
        for m in 1..=200 {
            let v = fwer(0.03, m).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(fwer(0.04, 10).unwrap() < fwer(0.05, 10).unwrap());
    }

    #[test]
    fn bonferroni_paper_example() {
        let thr = bonferroni_threshold(0.05, 15).unwrap();
        assert!((thr - 0.05 / 15.0).abs() < 1e-18);
        // resulting FWER: 1 - (1 - 0.05/15)^15 = 0.0488... (truncates to 0.0488)
        let v = fwer(thr, 15).unwrap();
        assert!((v - 0.048_850_017_895_632_37).abs() < 1e-15);
        assert!(v <= 0.05);
        assert_eq!((v * 1e4).trunc() / 1e4, 0.0488);
    }

    #[test]
    fn fwer_bounded_by_pfer() {
        for &(alpha, m) in &[(0.05, 1u64), (0.05, 2), (0.01, 100), (0.3, 7)] {
            let f = fwer(alpha, m).unwrap();
            let p = pfer(alpha, m).unwrap();
            assert!(f <= p + 1e-15);
            if m >= 2 {
                assert!(f < p);
            }
        }
    }

    #[test]
    fn pfer_paper_example() {
        assert_eq!(pfer(0.05, 2000).unwrap(), 100.0);
        assert!((pfer(0.05, 1).unwrap() - 0.05).abs() < 1e-18);
    }

    #[test]
    fn expected_false_discoveries_paper_example() {
        // 200 significant at FDR 0.05: 10 false, 190 true
        let fd = expected_false_discoveries(0.05, 200).unwrap();
        assert_eq!(fd, 10.0);
        assert_eq!(200.0 - fd, 190.0);
        assert_eq!(expected_false_discoveries(0.05, 0).unwrap(), 0.0);
        assert!((expected_false_discoveries(0.10, 50).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_percentage_paper_example() {
        // expected 50 of 1000 at alpha = 0.05, 68 observed: ~74%
        let v = alpha_percentage(0.05, 1000, 68).unwrap();
        assert!((v - 73.529_411_764_705_88).abs() < 1e-9);
        assert!((v - 73.5).abs() < 0.1);
        assert_eq!(alpha_percentage(0.05, 1000, 50).unwrap(), 100.0);
        assert!((alpha_percentage(0.05, 1000, 1000).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_percentage_zero_observed_is_undefined() {
        let err = alpha_percentage(0.05, 100, 0).unwrap_err();
        assert!(matches!(err, Error::Undefined(_)));
        assert!(err.to_string().contains("no significant results"));
    }

    #[test]
    fn alpha_percentage_decreases_in_observed() {
        let mut prev = f64::INFINITY;
        for n in [10u64, 20, 50, 200, 1000] {
            let v = alpha_percentage(0.05, 1000, n).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn profile_single_alpha_matches_scalar() {
        let rows = alpha_percentage_profile(1000, &[(0.05, 68)]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(
            rows[0].alpha_percentage,
            alpha_percentage(0.05, 1000, 68).unwrap()
        );
    }

    #[test]
    fn profile_rejects_non_monotone_counts() {
        let err = alpha_percentage_profile(1000, &[(0.01, 30), (0.05, 20)]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn domain_violations_error() {
        assert!(fwer(0.0, 5).is_err());
        assert!(fwer(1.0, 5).is_err());
        assert!(fwer(0.05, 0).is_err());
        assert!(pfer(-0.1, 5).is_err());
        assert!(expected_false_discoveries(1.5, 5).is_err());
    }
}
