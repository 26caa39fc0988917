//! Multiple-comparison procedures.
//!
//! The p-adjusting methods (Bonferroni, Sidak, Holm, BH, BY) return adjusted
//! p-values and are rank-preserving by construction. The rejection-set-only
//! procedures (fixed-sequence, omnibus-gated LSD, Student-Newman-Keuls)
//! carry no adjusted p-values; fabricating them would misrepresent what the
//! procedures control.

use crate::error::{Error, Result};
use crate::srange::SrangeTable;
use crate::testing::{anova_decompose, GroupSample};
use crate::special::t_two_sided_p;

/// A family of p-values corrected together.
#[derive(Debug, Clone)]
pub struct PValueFamily {
    p: Vec<f64>,
    labels: Option<Vec<String>>,
    family_id: String,
}

impl PValueFamily {
    pub fn new(family_id: impl Into<String>, p: Vec<f64>) -> Result<Self> {
        Self::with_labels(family_id, p, None)
    }

    pub fn with_labels(
        family_id: impl Into<String>,
        p: Vec<f64>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let family_id = family_id.into();
        if p.is_empty() {
            return Err(Error::invalid(format!("family '{family_id}' is empty")));
        }
        if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!(
                "family '{family_id}' has a p-value outside [0,1]: {bad}"
            )));
        }
        if let Some(ref l) = labels {
            if l.len() != p.len() {
                return Err(Error::invalid(format!(
                    "family '{family_id}': {} labels for {} p-values",
                    l.len(),
                    p.len()
                )));
            }
            let mut seen = std::collections::HashSet::new();
            if let Some(dup) = l.iter().find(|s| !seen.insert(s.as_str())) {
                return Err(Error::invalid(format!(
                    "family '{family_id}' has a duplicate label: {dup}"
                )));
            }
        }
        Ok(PValueFamily {
            p,
            labels,
            family_id,
        })
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn family_id(&self) -> &str {
        &self.family_id
    }
}

/// Procedure tags carried by adjustment outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Bonferroni,
    Sidak,
    Holm,
    Bh,
    By,
    FixedSequence,
    LsdGate,
    Snk,
    None,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Bonferroni => "bonferroni",
            Method::Sidak => "sidak",
            Method::Holm => "holm",
            Method::Bh => "bh",
            Method::By => "by",
            Method::FixedSequence => "fixed_sequence",
            Method::LsdGate => "lsd_gate",
            Method::Snk => "snk",
            Method::None => "none",
        }
    }
}

/// Result of applying a procedure to a family at a stated level.
#[derive(Debug, Clone)]
pub struct AdjustmentOutcome {
    pub method: Method,
    /// Present for p-adjusting methods, absent for rejection-set-only ones.
    pub adjusted_p: Option<Vec<f64>>,
    pub rejected: Vec<bool>,
    pub level: f64,
    /// Set when degenerate (zero-variance) inputs forced a convention.
    pub degenerate: bool,
}

impl AdjustmentOutcome {
    fn from_adjusted(method: Method, adjusted: Vec<f64>, level: f64) -> Self {
        let rejected = adjusted.iter().map(|&q| q <= level).collect();
        AdjustmentOutcome {
            method,
            adjusted_p: Some(adjusted),
            rejected,
            level,
            degenerate: false,
        }
    }

    pub fn n_rejected(&self) -> usize {
        self.rejected.iter().filter(|&&r| r).count()
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("level must be in (0,1), got {level}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// p-adjusting methods
// ---------------------------------------------------------------------------

/// No correction: adjusted p-values equal the raw ones.
pub fn adjust_none(f: &PValueFamily, level: f64) -> Result<AdjustmentOutcome> {
    check_level(level)?;
    Ok(AdjustmentOutcome::from_adjusted(
        Method::None,
        f.p().to_vec(),
        level,
    ))
}

/// Bonferroni: `min(1, m * p)`.
pub fn adjust_bonferroni(f: &PValueFamily, level: f64) -> Result<AdjustmentOutcome> {
    check_level(level)?;
    let m = f.len() as f64;
    let adjusted = f.p().iter().map(|&p| (m * p).min(1.0)).collect();
    Ok(AdjustmentOutcome::from_adjusted(
        Method::Bonferroni,
        adjusted,
        level,
    ))
}

/// Sidak: `1 - (1 - p)^m`, computed as `-expm1(m ln1p(-p))` for precision.
pub fn adjust_sidak(f: &PValueFamily, level: f64) -> Result<AdjustmentOutcome> {
    check_level(level)?;
    let m = f.len() as f64;
    let adjusted = f
        .p()
        .iter()
        .map(|&p| if p >= 1.0 { 1.0 } else { -(m * (-p).ln_1p()).exp_m1() })
        .collect();
    Ok(AdjustmentOutcome::from_adjusted(Method::Sidak, adjusted, level))
}

// Ascending order of the family's p-values (indices).
fn order_ascending(p: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&i, &j| p[i].total_cmp(&p[j]));
    idx
}

/// Holm step-down: sort ascending, take the running maximum of
/// `min(1, (m - j) * p_(j))` (j zero-based), then undo the sort.
pub fn adjust_holm(f: &PValueFamily, level: f64) -> Result<AdjustmentOutcome> {
    check_level(level)?;
    let p = f.p();
    let m = p.len();
    let order = order_ascending(p);
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (j, &i) in order.iter().enumerate() {
        let candidate = ((m - j) as f64 * p[i]).min(1.0);
        running = running.max(candidate);
        adjusted[i] = running;
    }
    Ok(AdjustmentOutcome::from_adjusted(Method::Holm, adjusted, level))
}

/// Benjamini-Hochberg step-up: sort ascending, take the running minimum of
/// `min(1, m * p_(j) / (j + 1))` from the largest p down, then undo the sort.
pub fn adjust_bh(f: &PValueFamily, level: f64) -> Result<AdjustmentOutcome> {
    check_level(level)?;
    Ok(AdjustmentOutcome::from_adjusted(
        Method::Bh,
        step_up_adjust(f.p(), 1.0),
        level,
    ))
}

/// Benjamini-Yekutieli: BH with the harmonic-number penalty `m * H_m`.
pub fn adjust_by(f: &PValueFamily, level: f64) -> Result<AdjustmentOutcome> {
    check_level(level)?;
    let h_m: f64 = (1..=f.len()).map(|i| 1.0 / i as f64).sum();
    Ok(AdjustmentOutcome::from_adjusted(
        Method::By,
        step_up_adjust(f.p(), h_m),
        level,
    ))
}

fn step_up_adjust(p: &[f64], penalty: f64) -> Vec<f64> {
    let m = p.len();
    let order = order_ascending(p);
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (j, &i) in order.iter().enumerate().rev() {
        let candidate = (penalty * m as f64 * p[i] / (j + 1) as f64).min(1.0);
        running = running.min(candidate);
        adjusted[i] = running;
    }
    adjusted
}

// ---------------------------------------------------------------------------
// Fixed-sequence testing
// ---------------------------------------------------------------------------

/// Fixed-sequence procedure: walk the hypotheses in the given order, testing
/// each at the full level; stop at the first non-significant one. Hypotheses
/// after the stop are never tested.
pub fn fixed_sequence(f: &PValueFamily, order: &[usize], level: f64) -> Result<AdjustmentOutcome> {
    check_level(level)?;
    let m = f.len();
    if order.len() != m {
        return Err(Error::invalid(format!(
            "order has {} entries for a family of {m}",
            order.len()
        )));
    }
    let mut seen = vec![false; m];
    for &i in order {
        if i >= m || seen[i] {
            return Err(Error::invalid(
                "order must be a permutation of the family indices",
            ));
        }
        seen[i] = true;
    }
    let mut rejected = vec![false; m];
    for &i in order {
        if f.p()[i] <= level {
            rejected[i] = true;
        } else {
            break;
        }
    }
    Ok(AdjustmentOutcome {
        method: Method::FixedSequence,
        adjusted_p: None,
        rejected,
        level,
        degenerate: false,
    })
}

// ---------------------------------------------------------------------------
// Pairwise machinery shared by the k-group procedures
// ---------------------------------------------------------------------------

/// All pairs (i, j) with i < j in lexicographic order; the canonical order
/// of pairwise comparisons everywhere in this crate.
pub fn pair_order(k: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Pairwise two-sided p-values using the ANOVA's shared mean-square error
/// and within-group degrees of freedom.
pub fn pairwise_p_shared_mse(groups: &[GroupSample]) -> Result<(Vec<f64>, bool)> {
    let d = anova_decompose(groups)?;
    let pairs = pair_order(groups.len());
    if d.degenerate {
        // zero pooled variance: equal means -> p = 1, unequal -> p = 0
        let p = pairs
            .iter()
            .map(|&(i, j)| {
                if d.group_means[i] == d.group_means[j] {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        return Ok((p, true));
    }
    let p = pairs
        .iter()
        .map(|&(i, j)| {
            let se = (d.mse * (1.0 / d.group_ns[i] as f64 + 1.0 / d.group_ns[j] as f64)).sqrt();
            let t = (d.group_means[i] - d.group_means[j]) / se;
            t_two_sided_p(t, d.df_within)
        })
        .collect();
    Ok((p, false))
}

// ---------------------------------------------------------------------------
// Omnibus-gated LSD
// ---------------------------------------------------------------------------

/// Fisher's protected LSD: run all pairwise comparisons at the unadjusted
/// level, but only if the omnibus ANOVA F-test is significant. Pairwise
/// tests share the ANOVA's mean-square error and degrees of freedom.
///
/// The rejection mask covers pairs in [`pair_order`].
pub fn lsd_gate(groups: &[GroupSample], level: f64) -> Result<AdjustmentOutcome> {
    check_level(level)?;
    if groups.len() < 3 {
        return Err(Error::invalid(format!(
            "gated LSD needs at least 3 groups, got {}",
            groups.len()
        )));
    }
    let d = anova_decompose(groups)?;
    let n_pairs = groups.len() * (groups.len() - 1) / 2;
    let gate_open = d.p_value <= level;
    let (rejected, degenerate) = if !gate_open {
        (vec![false; n_pairs], d.degenerate)
    } else {
        let (p, degenerate) = pairwise_p_shared_mse(groups)?;
        (p.iter().map(|&pv| pv <= level).collect(), degenerate)
    };
    Ok(AdjustmentOutcome {
        method: Method::LsdGate,
        adjusted_p: None,
        rejected,
        level,
        degenerate,
    })
}

// ---------------------------------------------------------------------------
// Student-Newman-Keuls
// ---------------------------------------------------------------------------

/// Student-Newman-Keuls step-down range procedure (balanced designs only).
///
/// Group means are sorted; the range of a stretch of `r` ordered means is
/// compared against the studentized-range critical value `q(level, r, df)`,
/// and sub-stretches are tested only when the enclosing stretch rejects.
/// The rejection mask covers pairs in [`pair_order`] of the original group
/// indices.
pub fn snk(groups: &[GroupSample], level: f64, table: &SrangeTable) -> Result<AdjustmentOutcome> {
    check_level(level)?;
    let k = groups.len();
    if k < 3 {
        return Err(Error::invalid(format!(
            "Student-Newman-Keuls here needs at least 3 groups, got {k}"
        )));
    }
    let n = groups[0].n();
    if groups.iter().any(|g| g.n() != n) {
        return Err(Error::invalid(
            "Student-Newman-Keuls requires a balanced design (equal group sizes)",
        ));
    }
    let d = anova_decompose(groups)?;
    let pairs = pair_order(k);
    if d.degenerate {
        let rejected = pairs
            .iter()
            .map(|&(i, j)| d.group_means[i] != d.group_means[j])
            .collect();
        return Ok(AdjustmentOutcome {
            method: Method::Snk,
            adjusted_p: None,
            rejected,
            level,
            degenerate: true,
        });
    }

    // sort group indices by mean
    let mut by_mean: Vec<usize> = (0..k).collect();
    by_mean.sort_by(|&a, &b| d.group_means[a].total_cmp(&d.group_means[b]));
    let se_range = (d.mse / n as f64).sqrt();

    // step-down recursion over stretches of sorted means
    let mut reject_sorted = vec![vec![false; k]; k];
    let mut stack = vec![(0usize, k - 1)];
    let mut visited = vec![vec![false; k]; k];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo || visited[lo][hi] {
            continue;
        }
        visited[lo][hi] = true;
        let r = hi - lo + 1;
        let range = d.group_means[by_mean[hi]] - d.group_means[by_mean[lo]];
        let q_stat = range / se_range;
        if q_stat > table.quantile(level, r, d.df_within) {
            reject_sorted[lo][hi] = true;
            if hi - lo >= 1 {
                stack.push((lo, hi - 1));
                stack.push((lo + 1, hi));
            }
        }
    }

    // map sorted-position rejections back to original pair order
    let mut pos_of = vec![0usize; k];
    for (pos, &orig) in by_mean.iter().enumerate() {
        pos_of[orig] = pos;
    }
    let rejected = pairs
        .iter()
        .map(|&(i, j)| {
            let (lo, hi) = if pos_of[i] < pos_of[j] {
                (pos_of[i], pos_of[j])
            } else {
                (pos_of[j], pos_of[i])
            };
            reject_sorted[lo][hi]
        })
        .collect();
    Ok(AdjustmentOutcome {
        method: Method::Snk,
        adjusted_p: None,
        rejected,
        level,
        degenerate: false,
    })
}
