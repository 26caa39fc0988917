//! Monte Carlo engine: generate experiments from scenario specifications,
//! apply a testing or shrinkage procedure, and measure the achieved error
//! rates and power against the known truth.
//!
//! Every run is a pure function of `(scenario, procedure, master_seed)`:
//! replicate `r` draws from `rng_stream(master_seed, r)` and aggregation is
//! sequential over the ordered replicate outcomes, so results are identical
//! regardless of worker count.

use rayon::prelude::*;

use crate::adjust::{
    adjust_bh, adjust_bonferroni, adjust_by, adjust_holm, adjust_none, adjust_sidak,
    fixed_sequence, lsd_gate, pair_order, pairwise_p_shared_mse, snk, Method, PValueFamily,
};
use crate::error::{Error, Result};
use crate::rng::rng_stream;
use crate::shrinkage::{
    fit_eb_normal, fit_spike_slab, posterior_excludes_zero, shrink_fixed_normal,
    summarize_mean_differences, EffectSummary,
};
use crate::srange::SrangeTable;
use crate::testing::{t_test_two_sample, GroupSample};

// ---------------------------------------------------------------------------
// Scenario specification
// ---------------------------------------------------------------------------

/// Generative description of a simulated experiment.
///
/// With `groups == 2`, each of the `m` tests is an independent two-group
/// comparison whose true mean difference is `effect_vector[i]` (in
/// outcome-SD units). With `groups == k > 2`, one k-group experiment is
/// generated per replicate and the family is the `k(k-1)/2` pairwise
/// comparisons in [`pair_order`]; `effect_vector` then holds the true
/// pairwise differences, which must be additively consistent.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    /// Tests per family.
    pub m: usize,
    pub groups: usize,
    pub n_per_group: usize,
    /// True effect per test, in outcome-SD units; zero marks a true null.
    pub effect_vector: Vec<f64>,
    pub sd: f64,
    /// Number of interim analyses (1 = single final analysis).
    pub looks: usize,
    /// Fractions of n analysed at each look; strictly increasing, last = 1.
    pub look_schedule: Vec<f64>,
    pub analyst_variants: usize,
    /// Sub-family sizes summing to m.
    pub family_partition: Vec<usize>,
    pub replicates: usize,
    pub master_seed: u64,
}

impl ScenarioSpec {
    /// Two-group scenario with sensible defaults for the remaining knobs.
    pub fn two_group(m: usize, n_per_group: usize, effect_vector: Vec<f64>) -> Self {
        ScenarioSpec {
            m,
            groups: 2,
            n_per_group,
            effect_vector,
            sd: 1.0,
            looks: 1,
            look_schedule: vec![1.0],
            analyst_variants: 1,
            family_partition: vec![m],
            replicates: 10_000,
            master_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::invalid("m: must be at least 1"));
        }
        if self.groups < 2 {
            return Err(Error::invalid("groups: must be at least 2"));
        }
        if self.n_per_group < 2 {
            return Err(Error::invalid("n_per_group: must be at least 2"));
        }
        if self.effect_vector.len() != self.m {
            return Err(Error::invalid(format!(
                "effect_vector: has {} entries but m = {}",
                self.effect_vector.len(),
                self.m
            )));
        }
        if self.effect_vector.iter().any(|e| !e.is_finite()) {
            return Err(Error::invalid("effect_vector: entries must be finite"));
        }
        if !(self.sd > 0.0 && self.sd.is_finite()) {
            return Err(Error::invalid(format!("sd: must be positive, got {}", self.sd)));
        }
        if self.looks < 1 {
            return Err(Error::invalid("looks: must be at least 1"));
        }
        if self.look_schedule.len() != self.looks {
            return Err(Error::invalid(format!(
                "look_schedule: has {} entries but looks = {}",
                self.look_schedule.len(),
                self.looks
            )));
        }
        for w in self.look_schedule.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid("look_schedule: must be strictly increasing"));
            }
        }
        if self.look_schedule.first().copied().unwrap_or(1.0) <= 0.0
            || self.look_schedule.last().copied() != Some(1.0)
        {
            return Err(Error::invalid(
                "look_schedule: fractions must be in (0,1] with the last equal to 1",
            ));
        }
        if self.analyst_variants < 1 {
            return Err(Error::invalid("analyst_variants: must be at least 1"));
        }
        if self.family_partition.is_empty()
            || self.family_partition.iter().any(|&s| s == 0)
            || self.family_partition.iter().sum::<usize>() != self.m
        {
            return Err(Error::invalid(format!(
                "family_partition: parts must be positive and sum to m = {}",
                self.m
            )));
        }
        if self.replicates < 1 {
            return Err(Error::invalid("replicates: must be at least 1"));
        }
        if self.groups > 2 {
            let n_pairs = self.groups * (self.groups - 1) / 2;
            if self.m != n_pairs {
                return Err(Error::invalid(format!(
                    "m: with {} groups the family is the {} pairwise comparisons, but m = {}",
                    self.groups, n_pairs, self.m
                )));
            }
            self.group_means()?;
        }
        Ok(())
    }

    /// True per-group means (SD units) recovered from the pairwise effect
    /// vector, anchored at `mean_1 = 0`. Errors unless the pairwise
    /// differences are additively consistent.
    pub fn group_means(&self) -> Result<Vec<f64>> {
        let k = self.groups;
        let pairs = pair_order(k);
        let mut means = vec![0.0; k];
        for (idx, &(i, j)) in pairs.iter().enumerate() {
            if i == 0 {
                means[j] = -self.effect_vector[idx];
            }
        }
        for (idx, &(i, j)) in pairs.iter().enumerate() {
            let implied = means[i] - means[j];
            if (self.effect_vector[idx] - implied).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "effect_vector: pairwise differences are inconsistent at pair ({},{}): \
                     {} vs implied {}",
                    i + 1,
                    j + 1,
                    self.effect_vector[idx],
                    implied
                )));
            }
        }
        Ok(means)
    }

    /// True when every effect is exactly zero.
    pub fn all_null(&self) -> bool {
        self.effect_vector.iter().all(|&e| e == 0.0)
    }

    fn null_mask(&self) -> Vec<bool> {
        self.effect_vector.iter().map(|&e| e == 0.0).collect()
    }
}

// ---------------------------------------------------------------------------
// Flat key-value serialization
// ---------------------------------------------------------------------------

/// Parse the flat `key = value` scenario format. Returns the spec plus a
/// flag saying whether `master_seed` was present in the text (callers may
/// substitute a seed of their own when it was not).
///
/// List values are comma-separated; a token `v*count` repeats `v`.
pub fn parse_scenario(text: &str) -> Result<(ScenarioSpec, bool)> {
    let mut m = None;
    let mut groups = None;
    let mut n_per_group = None;
    let mut effect_vector: Option<Vec<f64>> = None;
    let mut sd = None;
    let mut looks = None;
    let mut look_schedule: Option<Vec<f64>> = None;
    let mut analyst_variants = None;
    let mut family_partition: Option<Vec<usize>> = None;
    let mut replicates = None;
    let mut master_seed = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::invalid(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        let dup = |k: &str| Error::invalid(format!("{k}: specified twice"));
        match key {
            "m" => {
                if m.replace(parse_usize(key, value)?).is_some() {
                    return Err(dup(key));
                }
            }
            "groups" => {
                if groups.replace(parse_usize(key, value)?).is_some() {
                    return Err(dup(key));
                }
            }
            "n_per_group" => {
                if n_per_group.replace(parse_usize(key, value)?).is_some() {
                    return Err(dup(key));
                }
            }
            "effect_vector" => {
                if effect_vector.replace(parse_float_list(key, value)?).is_some() {
                    return Err(dup(key));
                }
            }
            "sd" => {
                if sd.replace(parse_float(key, value)?).is_some() {
                    return Err(dup(key));
                }
            }
            "looks" => {
                if looks.replace(parse_usize(key, value)?).is_some() {
                    return Err(dup(key));
                }
            }
            "look_schedule" => {
                if look_schedule.replace(parse_float_list(key, value)?).is_some() {
                    return Err(dup(key));
                }
            }
            "analyst_variants" => {
                if analyst_variants.replace(parse_usize(key, value)?).is_some() {
                    return Err(dup(key));
                }
            }
            "family_partition" => {
                let parsed = parse_float_list(key, value)?
                    .into_iter()
                    .map(|v| {
                        if v.fract() == 0.0 && v >= 0.0 {
                            Ok(v as usize)
                        } else {
                            Err(Error::invalid(format!(
                                "family_partition: parts must be positive integers, got {v}"
                            )))
                        }
                    })
                    .collect::<Result<Vec<usize>>>()?;
                if family_partition.replace(parsed).is_some() {
                    return Err(dup(key));
                }
            }
            "replicates" => {
                if replicates.replace(parse_usize(key, value)?).is_some() {
                    return Err(dup(key));
                }
            }
            "master_seed" => {
                let seed: u64 = value.parse().map_err(|_| {
                    Error::invalid(format!("master_seed: not a valid integer: '{value}'"))
                })?;
                if master_seed.replace(seed).is_some() {
                    return Err(dup(key));
                }
            }
            other => {
                return Err(Error::invalid(format!("unknown scenario key '{other}'")));
            }
        }
    }

    let m = m.ok_or_else(|| Error::invalid("m: missing required key"))?;
    let spec = ScenarioSpec {
        m,
        groups: groups.ok_or_else(|| Error::invalid("groups: missing required key"))?,
        n_per_group: n_per_group
            .ok_or_else(|| Error::invalid("n_per_group: missing required key"))?,
        effect_vector: effect_vector
            .ok_or_else(|| Error::invalid("effect_vector: missing required key"))?,
        sd: sd.unwrap_or(1.0),
        looks: looks.unwrap_or(1),
        look_schedule: look_schedule.unwrap_or_else(|| vec![1.0]),
        analyst_variants: analyst_variants.unwrap_or(1),
        family_partition: family_partition.unwrap_or_else(|| vec![m]),
        replicates: replicates.unwrap_or(10_000),
        master_seed: master_seed.unwrap_or(0),
    };
    spec.validate()?;
    Ok((spec, master_seed.is_some()))
}

/// Serialize a scenario back to the flat key-value format; runs of equal
/// list values are written as `v*count`.
pub fn scenario_to_text(spec: &ScenarioSpec) -> String {
    let mut out = String::new();
    out.push_str(&format!("m = {}\n", spec.m));
    out.push_str(&format!("groups = {}\n", spec.groups));
    out.push_str(&format!("n_per_group = {}\n", spec.n_per_group));
    out.push_str(&format!("effect_vector = {}\n", encode_float_list(&spec.effect_vector)));
    out.push_str(&format!("sd = {}\n", spec.sd));
    out.push_str(&format!("looks = {}\n", spec.looks));
    out.push_str(&format!("look_schedule = {}\n", encode_float_list(&spec.look_schedule)));
    out.push_str(&format!("analyst_variants = {}\n", spec.analyst_variants));
    let parts: Vec<f64> = spec.family_partition.iter().map(|&v| v as f64).collect();
    out.push_str(&format!("family_partition = {}\n", encode_float_list(&parts)));
    out.push_str(&format!("replicates = {}\n", spec.replicates));
    out.push_str(&format!("master_seed = {}\n", spec.master_seed));
    out
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("{key}: not a valid nonnegative integer: '{value}'")))
}

fn parse_float(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("{key}: not a valid number: '{value}'")))
}

fn parse_float_list(key: &str, value: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for token in value.split(',') {
        let token = token.trim();
        if token.is_empty() {
            return Err(Error::invalid(format!("{key}: empty list entry")));
        }
        if let Some((v, count)) = token.split_once('*') {
            let v: f64 = parse_float(key, v.trim())?;
            let count: usize = v_count(key, count.trim())?;
            out.extend(std::iter::repeat(v).take(count));
        } else {
            out.push(parse_float(key, token)?);
        }
    }
    Ok(out)
}

fn v_count(key: &str, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::invalid(format!("{key}: not a valid repeat count: '{s}'")))
}

fn encode_float_list(values: &[f64]) -> String {
    let mut parts: Vec<String> = Vec::new();
    let mut i = 0;
    while i < values.len() {
        let mut j = i + 1;
        while j < values.len() && values[j] == values[i] {
            j += 1;
        }
        let run = j - i;
        if run >= 3 {
            parts.push(format!("{}*{}", values[i], run));
        } else {
            for _ in 0..run {
                parts.push(format!("{}", values[i]));
            }
        }
        i = j;
    }
    parts.join(",")
}

// ---------------------------------------------------------------------------
// Procedures
// ---------------------------------------------------------------------------

/// A procedure the simulation lab can apply to each replicate.
#[derive(Debug, Clone, PartialEq)]
pub enum Procedure {
    /// Per-comparison testing at the stated level, no correction.
    Unadjusted,
    Bonferroni,
    Sidak,
    Holm,
    Bh,
    By,
    /// Fixed-sequence testing in natural order (test 1 first).
    FixedSequence,
    LsdGate,
    Snk,
    /// Fixed-prior shrinkage; rejection = posterior interval excludes zero.
    ShrinkFixed { sigma: f64 },
    /// Empirical-Bayes normal prior fitted per replicate.
    ShrinkEb,
    /// Two-step pipeline with a spike-and-slab prior fitted per replicate.
    TwoStepSpikeSlab,
}

impl Procedure {
    pub fn name(&self) -> String {
        match self {
            Procedure::Unadjusted => "unadjusted".into(),
            Procedure::Bonferroni => "bonferroni".into(),
            Procedure::Sidak => "sidak".into(),
            Procedure::Holm => "holm".into(),
            Procedure::Bh => "bh".into(),
            Procedure::By => "by".into(),
            Procedure::FixedSequence => "fixed-sequence".into(),
            Procedure::LsdGate => "lsd".into(),
            Procedure::Snk => "snk".into(),
            Procedure::ShrinkFixed { sigma } => format!("shrink-fixed={sigma}"),
            Procedure::ShrinkEb => "shrink-eb".into(),
            Procedure::TwoStepSpikeSlab => "two-step".into(),
        }
    }

    /// Parse a procedure name as used by the CLI.
    pub fn parse(s: &str) -> Result<Procedure> {
        let s = s.trim();
        if let Some(sigma) = s.strip_prefix("shrink-fixed=") {
            let sigma: f64 = sigma
                .parse()
                .map_err(|_| Error::invalid(format!("bad sigma in procedure '{s}'")))?;
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::invalid(format!("sigma must be nonnegative in '{s}'")));
            }
            return Ok(Procedure::ShrinkFixed { sigma });
        }
        match s {
            "unadjusted" | "none" => Ok(Procedure::Unadjusted),
            "bonferroni" => Ok(Procedure::Bonferroni),
            "sidak" => Ok(Procedure::Sidak),
            "holm" => Ok(Procedure::Holm),
            "bh" => Ok(Procedure::Bh),
            "by" => Ok(Procedure::By),
            "fixed-sequence" => Ok(Procedure::FixedSequence),
            "lsd" => Ok(Procedure::LsdGate),
            "snk" => Ok(Procedure::Snk),
            "shrink-eb" => Ok(Procedure::ShrinkEb),
            "two-step" => Ok(Procedure::TwoStepSpikeSlab),
            other => Err(Error::invalid(format!(
                "unknown procedure '{other}'; valid: unadjusted, bonferroni, sidak, holm, \
                 bh, by, fixed-sequence, lsd, snk, shrink-fixed=<sigma>, shrink-eb, two-step"
            ))),
        }
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("level must be in (0,1), got {level}")));
    }
    Ok(())
}

fn validate_procedure(spec: &ScenarioSpec, procedure: &Procedure) -> Result<()> {
    match procedure {
        Procedure::LsdGate | Procedure::Snk => {
            if spec.groups < 3 {
                return Err(Error::invalid(format!(
                    "procedure '{}' needs at least 3 groups, scenario has {}",
                    procedure.name(),
                    spec.groups
                )));
            }
        }
        Procedure::ShrinkFixed { .. } | Procedure::ShrinkEb | Procedure::TwoStepSpikeSlab => {
            if spec.groups != 2 {
                return Err(Error::invalid(format!(
                    "procedure '{}' expects two-group outcomes, scenario has {} groups",
                    procedure.name(),
                    spec.groups
                )));
            }
            if matches!(procedure, Procedure::ShrinkEb) && spec.m < 3 {
                return Err(Error::invalid("shrink-eb needs at least 3 tests per family"));
            }
            if matches!(procedure, Procedure::TwoStepSpikeSlab) && spec.m < 10 {
                return Err(Error::invalid("two-step needs at least 10 tests per family"));
            }
        }
        _ => {}
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Data generation
// ---------------------------------------------------------------------------

/// One replicate's raw data.
pub enum ReplicateData {
    /// One (treated, control) pair per test.
    TwoGroup(Vec<(GroupSample, GroupSample)>),
    /// One k-group experiment; the family is the pairwise comparisons.
    KGroup(Vec<GroupSample>),
}

/// Generate replicate `replicate` of a scenario from its own RNG stream.
pub fn generate_replicate(spec: &ScenarioSpec, replicate: u64) -> Result<ReplicateData> {
    let mut rng = rng_stream(spec.master_seed, replicate);
    if spec.groups == 2 {
        let pairs = (0..spec.m)
            .map(|i| {
                let a = GroupSample::new(
                    format!("t{i}"),
                    rng.normal_vec(spec.effect_vector[i] * spec.sd, spec.sd, spec.n_per_group),
                )?;
                let b = GroupSample::new(
                    format!("c{i}"),
                    rng.normal_vec(0.0, spec.sd, spec.n_per_group),
                )?;
                Ok((a, b))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ReplicateData::TwoGroup(pairs))
    } else {
        let means = spec.group_means()?;
        let groups = means
            .iter()
            .enumerate()
            .map(|(g, &mu)| {
                GroupSample::new(
                    format!("g{}", g + 1),
                    rng.normal_vec(mu * spec.sd, spec.sd, spec.n_per_group),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ReplicateData::KGroup(groups))
    }
}

// Raw per-test p-values for a replicate (pooled t per test, or pairwise
// shared-MSE t for a k-group experiment).
fn raw_p_values(data: &ReplicateData) -> Result<Vec<f64>> {
    match data {
        ReplicateData::TwoGroup(pairs) => Ok(pairs
            .iter()
            .map(|(a, b)| t_test_two_sample(a, b, true).p_value)
            .collect()),
        ReplicateData::KGroup(groups) => Ok(pairwise_p_shared_mse(groups)?.0),
    }
}

fn rejected_indices(mask: &[bool]) -> Vec<u32> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, &r)| if r { Some(i as u32) } else { None })
        .collect()
}

fn apply_procedure(
    procedure: &Procedure,
    level: f64,
    data: &ReplicateData,
    table: &SrangeTable,
) -> Result<Vec<u32>> {
    match procedure {
        Procedure::LsdGate => match data {
            ReplicateData::KGroup(groups) => {
                Ok(rejected_indices(&lsd_gate(groups, level)?.rejected))
            }
            _ => Err(Error::invalid("lsd needs a k-group scenario")),
        },
        Procedure::Snk => match data {
            ReplicateData::KGroup(groups) => {
                Ok(rejected_indices(&snk(groups, level, table)?.rejected))
            }
            _ => Err(Error::invalid("snk needs a k-group scenario")),
        },
        Procedure::ShrinkFixed { sigma } => {
            let summaries = two_group_summaries(data)?;
            Ok(shrinkage_rejections(&summaries, level, |e| {
                let s = shrink_fixed_normal(e, *sigma);
                (s.posterior_mean, s.posterior_sd)
            }))
        }
        Procedure::ShrinkEb => {
            let summaries = two_group_summaries(data)?;
            let prior = fit_eb_normal(&summaries)?;
            Ok(shrinkage_rejections(&summaries, level, |e| {
                let s = shrink_fixed_normal(e, prior.sigma);
                (s.posterior_mean, s.posterior_sd)
            }))
        }
        Procedure::TwoStepSpikeSlab => {
            let summaries = two_group_summaries(data)?;
            let prior = fit_spike_slab(&summaries)?;
            let rejected: Vec<u32> = summaries
                .iter()
                .enumerate()
                .filter_map(|(i, e)| {
                    if posterior_excludes_zero(e, &prior, 1.0 - level) {
                        Some(i as u32)
                    } else {
                        None
                    }
                })
                .collect();
            Ok(rejected)
        }
        p_based => {
            let p = raw_p_values(data)?;
            let family = PValueFamily::new("sim", p)?;
            let outcome = match p_based {
                Procedure::Unadjusted => adjust_none(&family, level)?,
                Procedure::Bonferroni => adjust_bonferroni(&family, level)?,
                Procedure::Sidak => adjust_sidak(&family, level)?,
                Procedure::Holm => adjust_holm(&family, level)?,
                Procedure::Bh => adjust_bh(&family, level)?,
                Procedure::By => adjust_by(&family, level)?,
                Procedure::FixedSequence => {
                    let order: Vec<usize> = (0..family.len()).collect();
                    fixed_sequence(&family, &order, level)?
                }
                _ => unreachable!("handled above"),
            };
            Ok(rejected_indices(&outcome.rejected))
        }
    }
}

fn two_group_summaries(data: &ReplicateData) -> Result<Vec<EffectSummary>> {
    match data {
        ReplicateData::TwoGroup(pairs) => summarize_mean_differences(pairs),
        _ => Err(Error::invalid("shrinkage procedures need two-group outcomes")),
    }
}

// Rejection by "central (1 - level) posterior interval excludes zero" for
// normal posteriors described by (mean, sd).
fn shrinkage_rejections(
    summaries: &[EffectSummary],
    level: f64,
    posterior: impl Fn(&EffectSummary) -> (f64, f64),
) -> Vec<u32> {
    let z = crate::special::normal_quantile(1.0 - level / 2.0);
    summaries
        .iter()
        .enumerate()
        .filter_map(|(i, e)| {
            let (pm, psd) = posterior(e);
            if pm.abs() > z * psd {
                Some(i as u32)
            } else {
                None
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// A Monte Carlo rate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub value: f64,
    pub mc_se: f64,
}

/// Achieved error rates and power for one procedure on one scenario.
#[derive(Debug, Clone)]
pub struct SimReport {
    pub procedure: String,
    pub seed: u64,
    pub n_replicates: usize,
    pub m: usize,
    pub level: f64,
    /// Fraction of true-null tests rejected.
    pub per_comparison_fpr: RateEstimate,
    /// Fraction of replicates with at least one false positive.
    pub fwer: RateEstimate,
    /// Mean false-discovery proportion (0/0 counted as 0).
    pub fdr: RateEstimate,
    /// Mean count of false positives per replicate.
    pub pfer_observed: RateEstimate,
    /// Rejection rate per true effect, as (test index, rate).
    pub power_per_effect: Vec<(usize, f64)>,
    /// Mean rejection rate over true effects, when any exist.
    pub mean_power: Option<RateEstimate>,
}

impl SimReport {
    /// Delimited text: metadata comments, then `rate<TAB>value<TAB>mc_se`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# procedure = {}\n", self.procedure));
        out.push_str(&format!("# seed = {}\n", self.seed));
        out.push_str(&format!("# replicates = {}\n", self.n_replicates));
        out.push_str(&format!("# m = {}\n", self.m));
        out.push_str(&format!("# level = {}\n", self.level));
        out.push_str("rate\tvalue\tmc_se\n");
        out.push_str(&format!(
            "per_comparison_fpr\t{}\t{}\n",
            self.per_comparison_fpr.value, self.per_comparison_fpr.mc_se
        ));
        out.push_str(&format!("fwer\t{}\t{}\n", self.fwer.value, self.fwer.mc_se));
        out.push_str(&format!("fdr\t{}\t{}\n", self.fdr.value, self.fdr.mc_se));
        out.push_str(&format!(
            "pfer_observed\t{}\t{}\n",
            self.pfer_observed.value, self.pfer_observed.mc_se
        ));
        if let Some(mp) = self.mean_power {
            out.push_str(&format!("mean_power\t{}\t{}\n", mp.value, mp.mc_se));
        }
        for &(idx, rate) in &self.power_per_effect {
            let se = rate_se(rate, self.n_replicates);
            out.push_str(&format!("power[{idx}]\t{rate}\t{se}\n"));
        }
        out
    }
}

fn rate_se(r: f64, n: usize) -> f64 {
    (r * (1.0 - r) / n as f64).sqrt()
}

fn aggregate(
    spec: &ScenarioSpec,
    procedure: String,
    level: f64,
    outcomes: &[Vec<u32>],
) -> SimReport {
    let null = spec.null_mask();
    let m_null = null.iter().filter(|&&n| n).count();
    let m_true = spec.m - m_null;
    let reps = outcomes.len();
    let reps_f = reps as f64;

    let mut counts = vec![0u64; spec.m];
    let mut fwer_hits = 0u64;
    let mut sum_v = 0u64;
    let mut sum_v2 = 0u64;
    let mut fdp_sum = 0.0f64;
    let mut fdp_sq_sum = 0.0f64;
    let mut true_frac_sum = 0.0f64;
    let mut true_frac_sq_sum = 0.0f64;

    for rejected in outcomes {
        let mut v = 0u64;
        let mut s = 0u64;
        for &idx in rejected {
            counts[idx as usize] += 1;
            if null[idx as usize] {
                v += 1;
            } else {
                s += 1;
            }
        }
        let r = v + s;
        debug_assert_eq!(r as usize, rejected.len());
        if v > 0 {
            fwer_hits += 1;
        }
        sum_v += v;
        sum_v2 += v * v;
        let fdp = if r == 0 { 0.0 } else { v as f64 / r as f64 };
        fdp_sum += fdp;
        fdp_sq_sum += fdp * fdp;
        if m_true > 0 {
            let frac = s as f64 / m_true as f64;
            true_frac_sum += frac;
            true_frac_sq_sum += frac * frac;
        }
    }

    let pcer = if m_null == 0 {
        0.0
    } else {
        sum_v as f64 / (reps_f * m_null as f64)
    };
    let fwer = fwer_hits as f64 / reps_f;
    let fdr = fdp_sum / reps_f;
    let fdr_se = sample_mean_se(fdp_sum, fdp_sq_sum, reps_f);
    let pfer = sum_v as f64 / reps_f;
    let pfer_se = sample_mean_se(sum_v as f64, sum_v2 as f64, reps_f);

    let power_per_effect: Vec<(usize, f64)> = (0..spec.m)
        .filter(|&i| !null[i])
        .map(|i| (i, counts[i] as f64 / reps_f))
        .collect();
    let mean_power = if m_true > 0 {
        Some(RateEstimate {
            value: true_frac_sum / reps_f,
            mc_se: sample_mean_se(true_frac_sum, true_frac_sq_sum, reps_f),
        })
    } else {
        None
    };

    SimReport {
        procedure,
        seed: spec.master_seed,
        n_replicates: reps,
        m: spec.m,
        level,
        per_comparison_fpr: RateEstimate {
            value: pcer,
            mc_se: rate_se(pcer, reps * m_null.max(1)),
        },
        fwer: RateEstimate {
            value: fwer,
            mc_se: rate_se(fwer, reps),
        },
        fdr: RateEstimate {
            value: fdr,
            mc_se: fdr_se,
        },
        pfer_observed: RateEstimate {
            value: pfer,
            mc_se: pfer_se,
        },
        power_per_effect,
        mean_power,
    }
}

// Standard error of a sample mean given sum and sum of squares.
fn sample_mean_se(sum: f64, sq_sum: f64, n: f64) -> f64 {
    if n < 2.0 {
        return 0.0;
    }
    let mean = sum / n;
    let var = ((sq_sum - n * mean * mean) / (n - 1.0)).max(0.0);
    (var / n).sqrt()
}

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

/// Run a scenario under one procedure and measure achieved rates.
pub fn run_scenario(
    spec: &ScenarioSpec,
    procedure: &Procedure,
    level: f64,
    table: &SrangeTable,
) -> Result<SimReport> {
    spec.validate()?;
    check_level(level)?;
    validate_procedure(spec, procedure)?;
    let outcomes: Result<Vec<Vec<u32>>> = (0..spec.replicates)
        .into_par_iter()
        .map(|rep| {
            let data = generate_replicate(spec, rep as u64)?;
            apply_procedure(procedure, level, &data, table)
        })
        .collect();
    Ok(aggregate(spec, procedure.name(), level, &outcomes?))
}

/// Optional stopping: the test is re-run at each scheduled look on the
/// accumulating (nested) data and the experiment "succeeds" if any look is
/// significant; the reported rates count a test as rejected when any of its
/// looks rejected.
pub fn run_optional_stopping(spec: &ScenarioSpec, level: f64) -> Result<SimReport> {
    spec.validate()?;
    check_level(level)?;
    if spec.groups != 2 {
        return Err(Error::invalid("optional stopping is defined for two-group tests"));
    }
    let look_ns: Vec<usize> = spec
        .look_schedule
        .iter()
        .map(|f| ((f * spec.n_per_group as f64).ceil() as usize).min(spec.n_per_group))
        .collect();
    if look_ns.first().copied().unwrap_or(0) < 2 {
        return Err(Error::invalid(format!(
            "look_schedule: first look analyses {} samples per group; at least 2 required",
            look_ns.first().copied().unwrap_or(0)
        )));
    }
    let outcomes: Result<Vec<Vec<u32>>> = (0..spec.replicates)
        .into_par_iter()
        .map(|rep| {
            let data = generate_replicate(spec, rep as u64)?;
            let pairs = match data {
                ReplicateData::TwoGroup(pairs) => pairs,
                _ => unreachable!("two-group validated"),
            };
            let mut rejected = Vec::new();
            for (i, (a, b)) in pairs.iter().enumerate() {
                for &nl in &look_ns {
                    let a_look = GroupSample::new(a.label(), a.values()[..nl].to_vec())?;
                    let b_look = GroupSample::new(b.label(), b.values()[..nl].to_vec())?;
                    if t_test_two_sample(&a_look, &b_look, true).p_value <= level {
                        rejected.push(i as u32);
                        break; // terminated early: the desired result was found
                    }
                }
            }
            Ok(rejected)
        })
        .collect();
    let name = format!("unadjusted+looks={}", spec.looks);
    Ok(aggregate(spec, name, level, &outcomes?))
}

/// The analysis variants available to a forking-paths analyst.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalysisVariant {
    Raw,
    /// log(1 + x - min) after shifting the pooled minimum to zero.
    Log1pShifted,
    /// Pooled midranks replace the raw values.
    Rank,
    /// 10% of each group trimmed from both ends.
    Trimmed10,
    /// A random covariate is regressed out of the pooled data first.
    CovariateAdjusted,
}

/// The fixed variant cycle used when a count alone is given.
pub const DEFAULT_VARIANTS: [AnalysisVariant; 5] = [
    AnalysisVariant::Raw,
    AnalysisVariant::Log1pShifted,
    AnalysisVariant::Rank,
    AnalysisVariant::Trimmed10,
    AnalysisVariant::CovariateAdjusted,
];

/// Forking paths with the default variant cycle of length
/// `spec.analyst_variants`.
pub fn run_forking_paths(spec: &ScenarioSpec, level: f64) -> Result<SimReport> {
    let variants: Vec<AnalysisVariant> = DEFAULT_VARIANTS
        .iter()
        .cycle()
        .take(spec.analyst_variants)
        .copied()
        .collect();
    run_forking_paths_with(spec, level, &variants)
}

/// Forking paths: every variant analyses the same data and the test
/// "succeeds" if any variant is significant.
pub fn run_forking_paths_with(
    spec: &ScenarioSpec,
    level: f64,
    variants: &[AnalysisVariant],
) -> Result<SimReport> {
    spec.validate()?;
    check_level(level)?;
    if spec.groups != 2 {
        return Err(Error::invalid("forking paths is defined for two-group tests"));
    }
    if variants.is_empty() {
        return Err(Error::invalid("at least one analysis variant required"));
    }
    let outcomes: Result<Vec<Vec<u32>>> = (0..spec.replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_stream(spec.master_seed, rep as u64);
            let mut rejected = Vec::new();
            for i in 0..spec.m {
                let a = rng.normal_vec(spec.effect_vector[i] * spec.sd, spec.sd, spec.n_per_group);
                let b = rng.normal_vec(0.0, spec.sd, spec.n_per_group);
                // covariates are always drawn so the stream layout does not
                // depend on the variant list
                let cov_a = rng.normal_vec(0.0, 1.0, spec.n_per_group);
                let cov_b = rng.normal_vec(0.0, 1.0, spec.n_per_group);
                let success = variants.iter().any(|v| {
                    let (ta, tb) = apply_variant(*v, &a, &b, &cov_a, &cov_b);
                    match (GroupSample::new("a", ta), GroupSample::new("b", tb)) {
                        (Ok(ga), Ok(gb)) => t_test_two_sample(&ga, &gb, true).p_value <= level,
                        _ => false,
                    }
                });
                if success {
                    rejected.push(i as u32);
                }
            }
            Ok(rejected)
        })
        .collect();
    let name = format!("unadjusted+variants={}", variants.len());
    Ok(aggregate(spec, name, level, &outcomes?))
}

fn apply_variant(
    variant: AnalysisVariant,
    a: &[f64],
    b: &[f64],
    cov_a: &[f64],
    cov_b: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    match variant {
        AnalysisVariant::Raw => (a.to_vec(), b.to_vec()),
        AnalysisVariant::Log1pShifted => {
            let min = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
            let tf = |x: &f64| (x - min).ln_1p();
            (a.iter().map(tf).collect(), b.iter().map(tf).collect())
        }
        AnalysisVariant::Rank => pooled_midranks(a, b),
        AnalysisVariant::Trimmed10 => (trim_tails(a, 0.10), trim_tails(b, 0.10)),
        AnalysisVariant::CovariateAdjusted => {
            let slope = pooled_slope(a, b, cov_a, cov_b);
            (
                a.iter().zip(cov_a).map(|(y, c)| y - slope * c).collect(),
                b.iter().zip(cov_b).map(|(y, c)| y - slope * c).collect(),
            )
        }
    }
}

fn pooled_midranks(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = a.len() + b.len();
    let mut indexed: Vec<(f64, usize)> = a
        .iter()
        .chain(b)
        .copied()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    indexed.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && indexed[j].0 == indexed[i].0 {
            j += 1;
        }
        let midrank = (i + j + 1) as f64 / 2.0; // average of ranks i+1 ..= j
        for item in &indexed[i..j] {
            ranks[item.1] = midrank;
        }
        i = j;
    }
    (ranks[..a.len()].to_vec(), ranks[a.len()..].to_vec())
}

fn trim_tails(values: &[f64], frac: f64) -> Vec<f64> {
    let drop = (values.len() as f64 * frac).floor() as usize;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.len() > 2 * drop + 1 {
        sorted[drop..sorted.len() - drop].to_vec()
    } else {
        sorted
    }
}

fn pooled_slope(a: &[f64], b: &[f64], cov_a: &[f64], cov_b: &[f64]) -> f64 {
    let n = (a.len() + b.len()) as f64;
    let y_mean = (a.iter().sum::<f64>() + b.iter().sum::<f64>()) / n;
    let c_mean = (cov_a.iter().sum::<f64>() + cov_b.iter().sum::<f64>()) / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (y, c) in a.iter().zip(cov_a).chain(b.iter().zip(cov_b)) {
        num += (y - y_mean) * (c - c_mean);
        den += (c - c_mean) * (c - c_mean);
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Side-by-side reports for whole-family vs per-subfamily correction.
#[derive(Debug, Clone)]
pub struct PartitionComparison {
    pub whole_family: SimReport,
    pub per_subfamily: SimReport,
}

/// Apply an FWER procedure once to the whole family and independently
/// within each sub-family of the partition; both global FWERs are reported.
pub fn run_family_partition(
    spec: &ScenarioSpec,
    method: Method,
    level: f64,
) -> Result<PartitionComparison> {
    spec.validate()?;
    check_level(level)?;
    if spec.groups != 2 {
        return Err(Error::invalid("family partitioning is defined for two-group tests"));
    }
    let adjust_fn = match method {
        Method::Bonferroni => adjust_bonferroni,
        Method::Sidak => adjust_sidak,
        Method::Holm => adjust_holm,
        other => {
            return Err(Error::invalid(format!(
                "partition comparison expects an FWER p-adjusting method, got '{}'",
                other.name()
            )))
        }
    };
    let per_rep: Result<Vec<(Vec<u32>, Vec<u32>)>> = (0..spec.replicates)
        .into_par_iter()
        .map(|rep| {
            let data = generate_replicate(spec, rep as u64)?;
            let p = raw_p_values(&data)?;
            let whole_family = PValueFamily::new("whole", p.clone())?;
            let whole = rejected_indices(&adjust_fn(&whole_family, level)?.rejected);
            let mut part_mask = vec![false; spec.m];
            let mut offset = 0;
            for (pi, &size) in spec.family_partition.iter().enumerate() {
                let sub = PValueFamily::new(
                    format!("part{pi}"),
                    p[offset..offset + size].to_vec(),
                )?;
                let out = adjust_fn(&sub, level)?;
                for (local, &rej) in out.rejected.iter().enumerate() {
                    if rej {
                        part_mask[offset + local] = true;
                    }
                }
                offset += size;
            }
            Ok((whole, rejected_indices(&part_mask)))
        })
        .collect();
    let per_rep = per_rep?;
    let whole: Vec<Vec<u32>> = per_rep.iter().map(|(w, _)| w.clone()).collect();
    let parts: Vec<Vec<u32>> = per_rep.into_iter().map(|(_, p)| p).collect();
    Ok(PartitionComparison {
        whole_family: aggregate(spec, format!("{}(whole)", method.name()), level, &whole),
        per_subfamily: aggregate(
            spec,
            format!(
                "{}(per-subfamily:{})",
                method.name(),
                spec.family_partition.len()
            ),
            level,
            &parts,
        ),
    })
}

/// Paired difference between two procedures' rates under common random
/// numbers.
#[derive(Debug, Clone)]
pub struct PairedDiff {
    pub a: String,
    pub b: String,
    /// Mean of the per-replicate FWER indicator difference (a - b).
    pub fwer_diff: RateEstimate,
    /// Mean of the per-replicate false-positive fraction difference.
    pub fpr_diff: RateEstimate,
    /// Mean of the per-replicate power difference, scenarios with effects.
    pub power_diff: Option<RateEstimate>,
}

/// Reports for several procedures on identical replicate data, plus paired
/// differences for every procedure pair.
#[derive(Debug, Clone)]
pub struct ProcedureComparison {
    pub reports: Vec<SimReport>,
    pub paired: Vec<PairedDiff>,
}

impl ProcedureComparison {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.reports {
            out.push_str(&r.to_text());
            out.push('\n');
        }
        out.push_str("pair\tmetric\tdiff\tmc_se\n");
        for d in &self.paired {
            let pair = format!("{} - {}", d.a, d.b);
            out.push_str(&format!(
                "{pair}\tfwer\t{}\t{}\n",
                d.fwer_diff.value, d.fwer_diff.mc_se
            ));
            out.push_str(&format!(
                "{pair}\tper_comparison_fpr\t{}\t{}\n",
                d.fpr_diff.value, d.fpr_diff.mc_se
            ));
            if let Some(pd) = d.power_diff {
                out.push_str(&format!("{pair}\tmean_power\t{}\t{}\n", pd.value, pd.mc_se));
            }
        }
        out
    }
}

/// Run several procedures on identical replicate data (common random
/// numbers) so their differences are paired.
pub fn compare_procedures(
    spec: &ScenarioSpec,
    procedures: &[Procedure],
    level: f64,
    table: &SrangeTable,
) -> Result<ProcedureComparison> {
    spec.validate()?;
    check_level(level)?;
    if procedures.len() < 2 {
        return Err(Error::invalid("comparison needs at least 2 procedures"));
    }
    for p in procedures {
        validate_procedure(spec, p)?;
    }
    let per_rep: Result<Vec<Vec<Vec<u32>>>> = (0..spec.replicates)
        .into_par_iter()
        .map(|rep| {
            let data = generate_replicate(spec, rep as u64)?;
            procedures
                .iter()
                .map(|p| apply_procedure(p, level, &data, table))
                .collect()
        })
        .collect();
    let per_rep = per_rep?;

    let null = spec.null_mask();
    let m_null = null.iter().filter(|&&n| n).count();
    let m_true = spec.m - m_null;
    let reps = spec.replicates;

    let mut reports = Vec::with_capacity(procedures.len());
    for (pi, proc) in procedures.iter().enumerate() {
        let masks: Vec<Vec<u32>> = per_rep.iter().map(|row| row[pi].clone()).collect();
        reports.push(aggregate(spec, proc.name(), level, &masks));
    }

    // per-replicate summaries for paired differences
    let summarize = |rejected: &Vec<u32>| -> (f64, f64, f64) {
        let mut v = 0usize;
        let mut s = 0usize;
        for &idx in rejected {
            if null[idx as usize] {
                v += 1;
            } else {
                s += 1;
            }
        }
        let fwer_ind = if v > 0 { 1.0 } else { 0.0 };
        let fpr = if m_null > 0 { v as f64 / m_null as f64 } else { 0.0 };
        let pow = if m_true > 0 { s as f64 / m_true as f64 } else { 0.0 };
        (fwer_ind, fpr, pow)
    };

    let mut paired = Vec::new();
    for i in 0..procedures.len() {
        for j in (i + 1)..procedures.len() {
            let mut sums = [0.0f64; 3];
            let mut sq_sums = [0.0f64; 3];
            for row in &per_rep {
                let a = summarize(&row[i]);
                let b = summarize(&row[j]);
                for (k, d) in [a.0 - b.0, a.1 - b.1, a.2 - b.2].into_iter().enumerate() {
                    sums[k] += d;
                    sq_sums[k] += d * d;
                }
            }
            let reps_f = reps as f64;
            let est = |k: usize| RateEstimate {
                value: sums[k] / reps_f,
                mc_se: sample_mean_se(sums[k], sq_sums[k], reps_f),
            };
            paired.push(PairedDiff {
                a: procedures[i].name(),
                b: procedures[j].name(),
                fwer_diff: est(0),
                fpr_diff: est(1),
                power_diff: if m_true > 0 { Some(est(2)) } else { None },
            });
        }
    }
    Ok(ProcedureComparison { reports, paired })
}
