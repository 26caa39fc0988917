//! Two-sample t-tests and one-way ANOVA over raw group data.
//!
//! Degenerate inputs (zero within-group variance) produce flagged results
//! instead of errors so that long simulation runs never abort mid-stream:
//! equal means give p = 1, unequal means give p = 0.

use crate::error::{Error, Result};
use crate::special::{f_upper_p, t_two_sided_p};

/// One group of raw measurements.
#[derive(Debug, Clone)]
pub struct GroupSample {
    values: Vec<f64>,
    label: String,
}

impl GroupSample {
    /// At least 2 finite values per group.
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if values.len() < 2 {
            return Err(Error::invalid(format!(
                "group '{label}' needs at least 2 values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "group '{label}' contains a non-finite value: {v}"
            )));
        }
        Ok(GroupSample { values, label })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.n() as f64
    }

    /// Unbiased sample variance (n - 1 denominator).
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (self.n() as f64 - 1.0)
    }
}

/// Degrees of freedom of a test statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DegreesOfFreedom {
    Single(f64),
    Pair(f64, f64),
}

/// Outcome of a single hypothesis test.
#[derive(Debug, Clone)]
pub struct TestStatisticResult {
    pub statistic: f64,
    pub df: DegreesOfFreedom,
    pub p_value: f64,
    /// Set when a zero-variance input forced the p = 0 / p = 1 convention.
    pub degenerate: bool,
}

// ---------------------------------------------------------------------------
// Two-sample t-test
// ---------------------------------------------------------------------------

/// Two-sided two-sample t-test. `pooled = true` is the classical
/// equal-variance test (matching one-way ANOVA); `false` is Welch.
///
/// The statistic's sign equals the sign of `mean(a) - mean(b)`.
pub fn t_test_two_sample(a: &GroupSample, b: &GroupSample, pooled: bool) -> TestStatisticResult {
    let (na, nb) = (a.n() as f64, b.n() as f64);
    let delta = a.mean() - b.mean();
    let (se2, df) = if pooled {
        let sp2 = ((na - 1.0) * a.variance() + (nb - 1.0) * b.variance()) / (na + nb - 2.0);
        (sp2 * (1.0 / na + 1.0 / nb), na + nb - 2.0)
    } else {
        let (va, vb) = (a.variance() / na, b.variance() / nb);
        let df = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
        (va + vb, df)
    };

    if se2 <= 0.0 || !df.is_finite() {
        return degenerate_result(delta, DegreesOfFreedom::Single(if df.is_finite() {
            df
        } else {
            na + nb - 2.0
        }));
    }

    let t = delta / se2.sqrt();
    TestStatisticResult {
        statistic: t,
        df: DegreesOfFreedom::Single(df),
        p_value: t_two_sided_p(t, df),
        degenerate: false,
    }
}

/// Mean difference `mean(a) - mean(b)` and its pooled-variance standard
/// error, the summary-statistic entry point for shrinkage.
pub fn mean_difference(a: &GroupSample, b: &GroupSample) -> (f64, f64) {
    let (na, nb) = (a.n() as f64, b.n() as f64);
    let sp2 = ((na - 1.0) * a.variance() + (nb - 1.0) * b.variance()) / (na + nb - 2.0);
    (a.mean() - b.mean(), (sp2 * (1.0 / na + 1.0 / nb)).sqrt())
}

fn degenerate_result(delta: f64, df: DegreesOfFreedom) -> TestStatisticResult {
    if delta == 0.0 {
        TestStatisticResult {
            statistic: 0.0,
            df,
            p_value: 1.0,
            degenerate: true,
        }
    } else {
        TestStatisticResult {
            statistic: delta.signum() * f64::INFINITY,
            df,
            p_value: 0.0,
            degenerate: true,
        }
    }
}

// ---------------------------------------------------------------------------
// One-way ANOVA
// ---------------------------------------------------------------------------

/// Full one-way ANOVA decomposition; post-hoc procedures reuse the shared
/// mean-square error and its degrees of freedom.
#[derive(Debug, Clone)]
pub struct AnovaDecomposition {
    pub group_means: Vec<f64>,
    pub group_ns: Vec<usize>,
    /// Within-group mean square (pooled variance estimate).
    pub mse: f64,
    pub df_between: f64,
    pub df_within: f64,
    pub f_statistic: f64,
    pub p_value: f64,
    pub degenerate: bool,
}

/// One-way ANOVA over two or more groups.
pub fn anova_decompose(groups: &[GroupSample]) -> Result<AnovaDecomposition> {
    if groups.len() < 2 {
        return Err(Error::invalid(format!(
            "ANOVA needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    let k = groups.len() as f64;
    let n_total: usize = groups.iter().map(|g| g.n()).sum();
    let n_total_f = n_total as f64;
    let grand_mean =
        groups.iter().map(|g| g.mean() * g.n() as f64).sum::<f64>() / n_total_f;

    let ss_between: f64 = groups
        .iter()
        .map(|g| g.n() as f64 * (g.mean() - grand_mean).powi(2))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .map(|g| (g.n() as f64 - 1.0) * g.variance())
        .sum();

    let df_between = k - 1.0;
    let df_within = n_total_f - k;
    let ms_between = ss_between / df_between;
    let mse = ss_within / df_within;

    let group_means = groups.iter().map(|g| g.mean()).collect();
    let group_ns = groups.iter().map(|g| g.n()).collect();

    if mse <= 0.0 {
        // Zero within-group variance: equal means -> p = 1, else p = 0.
        let (f_statistic, p_value) = if ss_between <= 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        };
        return Ok(AnovaDecomposition {
            group_means,
            group_ns,
            mse,
            df_between,
            df_within,
            f_statistic,
            p_value,
            degenerate: true,
        });
    }

    let f_statistic = ms_between / mse;
    Ok(AnovaDecomposition {
        group_means,
        group_ns,
        mse,
        df_between,
        df_within,
        f_statistic,
        p_value: f_upper_p(f_statistic, df_between, df_within),
        degenerate: false,
    })
}

/// One-way ANOVA F-test; with k = 2 the F statistic equals the squared
/// pooled t statistic and the p-values agree.
pub fn anova_oneway(groups: &[GroupSample]) -> Result<TestStatisticResult> {
    let d = anova_decompose(groups)?;
    Ok(TestStatisticResult {
        statistic: d.f_statistic,
        df: DegreesOfFreedom::Pair(d.df_between, d.df_within),
        p_value: d.p_value,
        degenerate: d.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(label: &str, v: &[f64]) -> GroupSample {
        GroupSample::new(label, v.to_vec()).unwrap()
    }

    #[test]
    fn group_sample_validation() {
        assert!(GroupSample::new("a", vec![1.0]).is_err());
        assert!(GroupSample::new("a", vec![1.0, f64::NAN]).is_err());
        assert!(GroupSample::new("a", vec![1.0, f64::INFINITY]).is_err());
        assert!(GroupSample::new("a", vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn identical_samples_give_p_one() {
        let a = g("a", &[1.0, 2.0, 3.0]);
        let r = t_test_two_sample(&a, &a.clone(), true);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.degenerate);
    }

    #[test]
    fn shifted_samples_give_tiny_p() {
        // Exact pooled-t p-value for {1,2,3} vs {11,12,13}: t = -12.247, df = 4.
        let a = g("a", &[1.0, 2.0, 3.0]);
        let b = g("b", &[11.0, 12.0, 13.0]);
        let r = t_test_two_sample(&a, &b, true);
        assert!(!r.degenerate);
        assert!((r.statistic - (-12.247_448_713_915_89)).abs() < 1e-10);
        assert!((r.p_value - 2.552_167_494_419e-4).abs() < 1e-12);
        assert!(r.p_value < 1e-3);
    }

    #[test]
    fn zero_variance_unequal_means_gives_p_zero() {
        let a = g("a", &[1.0, 1.0, 1.0]);
        let b = g("b", &[2.0, 2.0, 2.0]);
        let r = t_test_two_sample(&a, &b, true);
        assert_eq!(r.p_value, 0.0);
        assert!(r.degenerate);
        assert!(r.statistic.is_infinite() && r.statistic < 0.0);
    }

    #[test]
    fn statistic_sign_follows_mean_order() {
        let a = g("a", &[5.0, 6.0, 7.0]);
        let b = g("b", &[1.0, 2.0, 3.0]);
        assert!(t_test_two_sample(&a, &b, true).statistic > 0.0);
        assert!(t_test_two_sample(&b, &a, true).statistic < 0.0);
    }

    #[test]
    fn welch_equals_pooled_for_balanced_equal_variance() {
        let a = g("a", &[1.0, 2.0, 3.0, 4.0]);
        let b = g("b", &[2.0, 3.0, 4.0, 5.0]);
        let p = t_test_two_sample(&a, &b, true);
        let w = t_test_two_sample(&a, &b, false);
        assert!((p.statistic - w.statistic).abs() < 1e-12);
    }

    #[test]
    fn anova_two_groups_is_t_squared() {
        let a = g("a", &[1.0, 2.0, 3.0, 6.0]);
        let b = g("b", &[2.0, 4.0, 4.5, 5.0, 7.0]);
        let t = t_test_two_sample(&a, &b, true);
        let f = anova_oneway(&[a, b]).unwrap();
        assert!((f.statistic - t.statistic * t.statistic).abs() < 1e-10);
        assert!((f.p_value - t.p_value).abs() < 1e-10);
    }

    #[test]
    fn anova_needs_two_groups() {
        let a = g("a", &[1.0, 2.0]);
        assert!(anova_oneway(&[a]).is_err());
    }

    #[test]
    fn anova_zero_variance_conventions() {
        let a = g("a", &[1.0, 1.0]);
        let b = g("b", &[1.0, 1.0]);
        let c = g("c", &[2.0, 2.0]);
        let same = anova_oneway(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(same.p_value, 1.0);
        assert!(same.degenerate);
        let diff = anova_oneway(&[a, c]).unwrap();
        assert_eq!(diff.p_value, 0.0);
        assert!(diff.degenerate);
    }
}
