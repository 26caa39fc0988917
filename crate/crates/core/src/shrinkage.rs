//! Effect-size shrinkage in the exchangeable normal-means model.
//!
//! Observed effects `theta_hat_i ~ N(theta_i, se_i^2)` are pulled toward
//! zero by one of three priors:
//!
//! 1. a fixed `Normal(0, sigma)` prior, with `sigma` chosen up front or
//!    calibrated by all-null simulation ([`calibrate_sigma`]);
//! 2. an empirical-Bayes `Normal(0, sigma)` prior with `sigma` fitted by
//!    marginal maximum likelihood ([`fit_eb_normal`]);
//! 3. a spike-and-slab mixture `pi0 * delta_0 + (1 - pi0) * Normal(0,
//!    sigma)` fitted by EM on the marginals ([`fit_spike_slab`]).
//!
//! The two-step pipeline ([`two_step`]) goes from raw group data through
//! pooled-t summary statistics to spike-and-slab shrunken estimates.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::rng_stream;
use crate::simlab::ScenarioSpec;
use crate::special::{ln_normal_pdf, normal_cdf, normal_quantile};
use crate::testing::{mean_difference, GroupSample};

/// One estimated effect and its standard error.
#[derive(Debug, Clone)]
pub struct EffectSummary {
    pub theta_hat: f64,
    pub se: f64,
    pub label: String,
}

impl EffectSummary {
    pub fn new(label: impl Into<String>, theta_hat: f64, se: f64) -> Result<Self> {
        let label = label.into();
        if !theta_hat.is_finite() {
            return Err(Error::invalid(format!(
                "effect '{label}': estimate must be finite, got {theta_hat}"
            )));
        }
        if !(se > 0.0 && se.is_finite()) {
            return Err(Error::invalid(format!(
                "effect '{label}': standard error must be positive and finite, got {se}"
            )));
        }
        Ok(EffectSummary { theta_hat, se, label })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    FixedNormal,
    EbNormal,
    SpikeSlab,
}

/// Diagnostics recorded while fitting a prior.
#[derive(Debug, Clone)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub log_marginal: f64,
    pub converged: bool,
    /// Log-marginal after each EM iteration; nondecreasing by construction.
    pub trajectory: Vec<f64>,
}

/// A zero-centered shrinkage prior, possibly fitted from the data.
#[derive(Debug, Clone)]
pub struct ShrinkagePrior {
    pub kind: PriorKind,
    /// Prior (slab) standard deviation; zero is the degenerate point mass.
    pub sigma: f64,
    /// Spike mass; present iff `kind == SpikeSlab`.
    pub pi0: Option<f64>,
    pub fitted: Option<FitDiagnostics>,
}

impl ShrinkagePrior {
    /// Fixed `Normal(0, sigma)` prior.
    pub fn fixed_normal(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "prior sigma must be nonnegative and finite, got {sigma}"
            )));
        }
        Ok(ShrinkagePrior {
            kind: PriorKind::FixedNormal,
            sigma,
            pi0: None,
            fitted: None,
        })
    }
}

/// A posterior summary for one effect.
#[derive(Debug, Clone)]
pub struct ShrunkenEffect {
    pub posterior_mean: f64,
    pub posterior_sd: f64,
    /// Posterior spike weight; present only under a spike-and-slab prior.
    pub prob_null: Option<f64>,
    pub interval_95: (f64, f64),
    /// Set when a degenerate (sigma = 0) prior collapsed the posterior.
    pub degenerate: bool,
}

// ---------------------------------------------------------------------------
// Conjugate shrinkage
// ---------------------------------------------------------------------------

/// Shrink one effect under a fixed `Normal(0, sigma)` prior.
///
/// Posterior mean is `theta_hat * sigma^2 / (sigma^2 + se^2)`; a small
/// `sigma` provides more shrinkage. `sigma = 0` returns the exact-zero
/// degenerate posterior, flagged.
pub fn shrink_fixed_normal(e: &EffectSummary, sigma: f64) -> ShrunkenEffect {
    conjugate_normal(e, sigma)
}

fn conjugate_normal(e: &EffectSummary, sigma: f64) -> ShrunkenEffect {
    assert!(sigma >= 0.0, "prior sd must be nonnegative");
    if sigma == 0.0 {
        return ShrunkenEffect {
            posterior_mean: 0.0,
            posterior_sd: 0.0,
            prob_null: None,
            interval_95: (0.0, 0.0),
            degenerate: true,
        };
    }
    let s2 = sigma * sigma;
    let v = e.se * e.se;
    let w = s2 / (s2 + v);
    let pm = w * e.theta_hat;
    let psd = (w * v).sqrt();
    let z = normal_quantile(0.975);
    ShrunkenEffect {
        posterior_mean: pm,
        posterior_sd: psd,
        prob_null: None,
        interval_95: (pm - z * psd, pm + z * psd),
        degenerate: false,
    }
}

/// Shrink one effect under any fitted or fixed prior.
pub fn shrink_with_prior(e: &EffectSummary, prior: &ShrinkagePrior) -> ShrunkenEffect {
    match prior.kind {
        PriorKind::FixedNormal | PriorKind::EbNormal => conjugate_normal(e, prior.sigma),
        PriorKind::SpikeSlab => {
            let pi0 = prior.pi0.expect("spike-slab prior carries pi0");
            spike_slab_posterior(e, pi0, prior.sigma)
        }
    }
}

fn spike_slab_posterior(e: &EffectSummary, pi0: f64, sigma: f64) -> ShrunkenEffect {
    if sigma == 0.0 || pi0 >= 1.0 {
        // slab indistinguishable from (or dominated by) the spike
        let prob_null = if pi0 >= 1.0 { 1.0 } else { pi0 };
        return ShrunkenEffect {
            posterior_mean: 0.0,
            posterior_sd: 0.0,
            prob_null: Some(prob_null),
            interval_95: (0.0, 0.0),
            degenerate: sigma == 0.0,
        };
    }
    let v = e.se * e.se;
    let s2 = sigma * sigma;
    let prob_null = if pi0 <= 0.0 {
        0.0
    } else {
        // pi0 N(th; 0, v) vs (1 - pi0) N(th; 0, v + s2), combined stably in logs
        let a = pi0.ln() + ln_normal_pdf(e.theta_hat, v);
        let b = (1.0 - pi0).ln() + ln_normal_pdf(e.theta_hat, v + s2);
        let m = a.max(b);
        ((a - m).exp() / ((a - m).exp() + (b - m).exp())).clamp(0.0, 1.0)
    };

    // slab-conditional conjugate posterior
    let w = s2 / (s2 + v);
    let mu1 = w * e.theta_hat;
    let tau1 = (w * v).sqrt();

    let pm = (1.0 - prob_null) * mu1;
    let second_moment = (1.0 - prob_null) * (tau1 * tau1 + mu1 * mu1);
    let psd = (second_moment - pm * pm).max(0.0).sqrt();

    let lo = mixture_quantile(0.025, prob_null, mu1, tau1);
    let hi = mixture_quantile(0.975, prob_null, mu1, tau1);
    ShrunkenEffect {
        posterior_mean: pm,
        posterior_sd: psd,
        prob_null: Some(prob_null),
        interval_95: (lo, hi),
        degenerate: false,
    }
}

// Quantile of pn * delta_0 + (1 - pn) * N(mu1, tau1^2); the point mass shows
// up as a plateau of the quantile function at zero.
fn mixture_quantile(u: f64, pn: f64, mu1: f64, tau1: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    if pn >= 1.0 {
        return 0.0;
    }
    let slab_cdf_at_zero = normal_cdf(-mu1 / tau1);
    let below_zero = (1.0 - pn) * slab_cdf_at_zero;
    if u < below_zero {
        mu1 + tau1 * safe_quantile(u / (1.0 - pn))
    } else if u <= below_zero + pn {
        0.0
    } else {
        mu1 + tau1 * safe_quantile((u - pn) / (1.0 - pn))
    }
}

fn safe_quantile(p: f64) -> f64 {
    normal_quantile(p.clamp(1e-300, 1.0 - 1e-16))
}

/// Whether the central posterior interval with the given coverage excludes
/// zero under this prior — the significance rule used by the simulation lab
/// and by sigma calibration.
pub fn posterior_excludes_zero(
    e: &EffectSummary,
    prior: &ShrinkagePrior,
    coverage: f64,
) -> bool {
    debug_assert!(coverage > 0.0 && coverage < 1.0);
    let tail = (1.0 - coverage) / 2.0;
    match prior.kind {
        PriorKind::FixedNormal | PriorKind::EbNormal => {
            if prior.sigma == 0.0 {
                return false;
            }
            let s = conjugate_normal(e, prior.sigma);
            let z = normal_quantile(1.0 - tail);
            s.posterior_mean.abs() > z * s.posterior_sd
        }
        PriorKind::SpikeSlab => {
            let pi0 = prior.pi0.expect("spike-slab prior carries pi0");
            if prior.sigma == 0.0 || pi0 >= 1.0 {
                return false;
            }
            let s = spike_slab_posterior(e, pi0, prior.sigma);
            let pn = s.prob_null.unwrap_or(0.0);
            let v = e.se * e.se;
            let s2 = prior.sigma * prior.sigma;
            let w = s2 / (s2 + v);
            let mu1 = w * e.theta_hat;
            let tau1 = (w * v).sqrt();
            let lo = mixture_quantile(tail, pn, mu1, tau1);
            let hi = mixture_quantile(1.0 - tail, pn, mu1, tau1);
            lo > 0.0 || hi < 0.0
        }
    }
}

// ---------------------------------------------------------------------------
// Empirical Bayes: Normal(0, sigma) with sigma from marginal likelihood
// ---------------------------------------------------------------------------

fn eb_log_marginal(effects: &[EffectSummary], sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    effects
        .iter()
        .map(|e| ln_normal_pdf(e.theta_hat, s2 + e.se * e.se))
        .sum()
}

// Derivative-free 1-D maximization (golden section).
fn golden_max(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    let x = 0.5 * (lo + hi);
    let fx = f(x);
    if fc > fx && fc >= fd {
        (c, fc)
    } else if fd > fx {
        (d, fd)
    } else {
        (x, fx)
    }
}

// Coarse log-spaced grid scan followed by golden-section refinement;
// robust to the flat ridges this marginal can develop.
fn maximize_over_sigma(f: impl Fn(f64) -> f64, sigma_max: f64) -> (f64, f64) {
    let at_zero = f(0.0);
    let lo = (sigma_max * 1e-8).max(1e-300);
    let n_grid = 80;
    let ratio = (sigma_max / lo).ln() / (n_grid - 1) as f64;
    let mut best = (0.0, at_zero);
    let mut best_idx = None;
    for i in 0..n_grid {
        let s = lo * ((i as f64) * ratio).exp();
        let v = f(s);
        if v > best.1 {
            best = (s, v);
            best_idx = Some(i);
        }
    }
    let (refined, refined_val) = match best_idx {
        None => (0.0, at_zero),
        Some(i) => {
            let bracket_lo = if i == 0 { 0.0 } else { lo * (((i - 1) as f64) * ratio).exp() };
            let bracket_hi = if i + 1 == n_grid {
                sigma_max
            } else {
                lo * (((i + 1) as f64) * ratio).exp()
            };
            golden_max(&f, bracket_lo, bracket_hi, 90)
        }
    };
    if at_zero >= refined_val {
        (0.0, at_zero)
    } else {
        (refined, refined_val)
    }
}

fn sigma_search_ceiling(effects: &[EffectSummary]) -> f64 {
    let max_abs = effects.iter().map(|e| e.theta_hat.abs()).fold(0.0, f64::max);
    let max_se = effects.iter().map(|e| e.se).fold(0.0, f64::max);
    10.0 * max_abs.max(max_se).max(1e-12)
}

/// Fit the empirical-Bayes `Normal(0, sigma)` prior: `sigma` maximizes the
/// marginal likelihood `prod_i N(theta_hat_i; 0, sigma^2 + se_i^2)`.
///
/// Refuses families of fewer than 3 effects; with so few comparisons
/// `sigma` is hard to estimate and a fixed prior should be used instead.
pub fn fit_eb_normal(effects: &[EffectSummary]) -> Result<ShrinkagePrior> {
    if effects.len() < 3 {
        return Err(Error::invalid(format!(
            "empirical-Bayes fitting needs at least 3 effects (got {}); \
             use a fixed-sigma normal prior instead",
            effects.len()
        )));
    }
    let (sigma, log_marginal) = maximize_over_sigma(
        |s| eb_log_marginal(effects, s),
        sigma_search_ceiling(effects),
    );
    Ok(ShrinkagePrior {
        kind: PriorKind::EbNormal,
        sigma,
        pi0: None,
        fitted: Some(FitDiagnostics {
            iterations: 1,
            log_marginal,
            converged: true,
            trajectory: vec![log_marginal],
        }),
    })
}

// ---------------------------------------------------------------------------
// Spike-and-slab: EM on the marginal mixture
// ---------------------------------------------------------------------------

const EM_TOL: f64 = 1e-8;
const EM_MAX_ITER: usize = 500;
const PI0_CLAMP: f64 = 1e-10;

fn mixture_log_marginal(effects: &[EffectSummary], pi0: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let (ln_pi0, ln_pi1) = (pi0.ln(), (1.0 - pi0).ln());
    effects
        .iter()
        .map(|e| {
            let v = e.se * e.se;
            let a = ln_pi0 + ln_normal_pdf(e.theta_hat, v);
            let b = ln_pi1 + ln_normal_pdf(e.theta_hat, v + s2);
            let m = a.max(b);
            m + ((a - m).exp() + (b - m).exp()).ln()
        })
        .sum()
}

struct MixtureFit {
    pi0: f64,
    sigma: f64,
    diagnostics: FitDiagnostics,
}

fn fit_mixture_em(
    effects: &[EffectSummary],
    fixed_pi0: Option<f64>,
    start: (f64, Option<f64>),
) -> MixtureFit {
    let mean_se2 =
        effects.iter().map(|e| e.se * e.se).sum::<f64>() / effects.len() as f64;
    let mean_th2 =
        effects.iter().map(|e| e.theta_hat * e.theta_hat).sum::<f64>() / effects.len() as f64;
    let sigma_max = sigma_search_ceiling(effects);

    let mut pi0 = fixed_pi0.unwrap_or(start.0).clamp(PI0_CLAMP, 1.0 - PI0_CLAMP);
    let mut sigma = start
        .1
        .unwrap_or_else(|| (mean_th2 - mean_se2).max(0.25 * mean_se2).sqrt());
    let mut trajectory = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=EM_MAX_ITER {
        iterations = iter;
        // E-step: slab responsibilities
        let s2 = sigma * sigma;
        let (ln_pi0, ln_pi1) = (pi0.ln(), (1.0 - pi0).ln());
        let resp: Vec<f64> = effects
            .iter()
            .map(|e| {
                let v = e.se * e.se;
                let a = ln_pi0 + ln_normal_pdf(e.theta_hat, v);
                let b = ln_pi1 + ln_normal_pdf(e.theta_hat, v + s2);
                let m = a.max(b);
                (b - m).exp() / ((a - m).exp() + (b - m).exp())
            })
            .collect();

        // M-step: mixture weight (closed form) and slab sd (1-D search with
        // a no-decrease guard, keeping EM ascent exact)
        if fixed_pi0.is_none() {
            let mean_resp = resp.iter().sum::<f64>() / resp.len() as f64;
            pi0 = (1.0 - mean_resp).clamp(PI0_CLAMP, 1.0 - PI0_CLAMP);
        }
        let slab_objective = |s: f64| {
            let s2 = s * s;
            effects
                .iter()
                .zip(&resp)
                .map(|(e, &r)| r * ln_normal_pdf(e.theta_hat, s2 + e.se * e.se))
                .sum::<f64>()
        };
        let (sigma_new, q_new) = maximize_over_sigma(&slab_objective, sigma_max);
        if q_new >= slab_objective(sigma) {
            sigma = sigma_new;
        }

        let lm = mixture_log_marginal(effects, pi0, sigma);
        let improved = trajectory
            .last()
            .map(|&prev: &f64| lm - prev)
            .unwrap_or(f64::INFINITY);
        trajectory.push(lm);
        if improved.abs() < EM_TOL {
            converged = true;
            break;
        }
    }

    let log_marginal = *trajectory.last().unwrap();
    MixtureFit {
        pi0,
        sigma,
        diagnostics: FitDiagnostics {
            iterations,
            log_marginal,
            converged,
            trajectory,
        },
    }
}

/// Fit the spike-and-slab prior `pi0 * delta_0 + (1 - pi0) * Normal(0,
/// sigma)` by EM on the marginals, comparing the EM fit against the two
/// boundary stationary points (pure spike, pure slab) and returning the
/// best log-marginal.
///
/// Non-convergence within 500 iterations is flagged in the diagnostics and
/// the best iterate is returned.
pub fn fit_spike_slab(effects: &[EffectSummary]) -> Result<ShrinkagePrior> {
    if effects.len() < 10 {
        return Err(Error::invalid(format!(
            "spike-and-slab fitting needs at least 10 effects, got {}",
            effects.len()
        )));
    }
    // The marginal surface has local optima and a flat ridge (sigma -> 0 and
    // pi0 -> 1 describe the same all-null marginal), so EM runs from several
    // starts and the boundary stationary points enter as candidates; ties go
    // to the pure spike.
    let max_abs = effects.iter().map(|e| e.theta_hat.abs()).fold(1e-12, f64::max);
    let starts = [(0.5, None), (0.9, Some(max_abs)), (0.99, Some(max_abs))];
    let mut em = fit_mixture_em(effects, None, starts[0]);
    for &start in &starts[1..] {
        let candidate = fit_mixture_em(effects, None, start);
        if candidate.diagnostics.log_marginal > em.diagnostics.log_marginal {
            em = candidate;
        }
    }
    let mut best_pi0 = em.pi0;
    let mut best_sigma = em.sigma;
    let mut best_lm = em.diagnostics.log_marginal;
    let mut diagnostics = em.diagnostics;

    // boundary candidate: everything null
    let spike_lm: f64 = effects
        .iter()
        .map(|e| ln_normal_pdf(e.theta_hat, e.se * e.se))
        .sum();
    if spike_lm >= best_lm {
        best_pi0 = 1.0;
        best_sigma = 0.0;
        best_lm = spike_lm;
    }
    // boundary candidate: no spike at all (plain empirical Bayes)
    let (eb_sigma, eb_lm) =
        maximize_over_sigma(|s| eb_log_marginal(effects, s), sigma_search_ceiling(effects));
    if eb_lm > best_lm {
        best_pi0 = 0.0;
        best_sigma = eb_sigma;
        best_lm = eb_lm;
    }

    if best_lm > diagnostics.log_marginal {
        diagnostics.trajectory.push(best_lm);
        diagnostics.log_marginal = best_lm;
        diagnostics.converged = true;
    }
    Ok(ShrinkagePrior {
        kind: PriorKind::SpikeSlab,
        sigma: best_sigma,
        pi0: Some(best_pi0),
        fitted: Some(diagnostics),
    })
}

/// Spike-and-slab fit with the spike mass pinned; `pi0 = 0` reduces to the
/// empirical-Bayes normal fit.
pub fn fit_spike_slab_fixed_pi0(effects: &[EffectSummary], pi0: f64) -> Result<ShrinkagePrior> {
    if effects.len() < 10 {
        return Err(Error::invalid(format!(
            "spike-and-slab fitting needs at least 10 effects, got {}",
            effects.len()
        )));
    }
    if !(0.0..=1.0).contains(&pi0) {
        return Err(Error::invalid(format!("pi0 must be in [0,1], got {pi0}")));
    }
    if pi0 >= 1.0 {
        let lm: f64 = effects
            .iter()
            .map(|e| ln_normal_pdf(e.theta_hat, e.se * e.se))
            .sum();
        return Ok(ShrinkagePrior {
            kind: PriorKind::SpikeSlab,
            sigma: 0.0,
            pi0: Some(1.0),
            fitted: Some(FitDiagnostics {
                iterations: 0,
                log_marginal: lm,
                converged: true,
                trajectory: vec![lm],
            }),
        });
    }
    let em = fit_mixture_em(effects, Some(pi0), (0.5, None));
    Ok(ShrinkagePrior {
        kind: PriorKind::SpikeSlab,
        sigma: em.sigma,
        pi0: Some(em.pi0),
        fitted: Some(em.diagnostics),
    })
}

// ---------------------------------------------------------------------------
// Two-step pipeline: raw groups -> summaries -> shrunken effects
// ---------------------------------------------------------------------------

/// Pooled-t summary statistics (mean difference and standard error) for a
/// list of two-group outcomes.
pub fn summarize_mean_differences(
    groups_per_outcome: &[(GroupSample, GroupSample)],
) -> Result<Vec<EffectSummary>> {
    groups_per_outcome
        .iter()
        .map(|(a, b)| {
            let (theta_hat, se) = mean_difference(a, b);
            EffectSummary::new(a.label(), theta_hat, se)
        })
        .collect()
}

/// Two-step shrinkage: compute summary statistics per outcome, fit the
/// spike-and-slab prior across outcomes, and shrink every effect with it.
pub fn two_step(groups_per_outcome: &[(GroupSample, GroupSample)]) -> Result<Vec<ShrunkenEffect>> {
    if groups_per_outcome.len() < 10 {
        return Err(Error::invalid(format!(
            "two-step shrinkage needs at least 10 outcomes, got {}",
            groups_per_outcome.len()
        )));
    }
    let summaries = summarize_mean_differences(groups_per_outcome)?;
    let prior = fit_spike_slab(&summaries)?;
    Ok(summaries
        .iter()
        .map(|e| shrink_with_prior(e, &prior))
        .collect())
}

// ---------------------------------------------------------------------------
// Simulation-based calibration of sigma
// ---------------------------------------------------------------------------

/// Result of calibrating the fixed-prior `sigma` against a target
/// false-positive rate.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub sigma: f64,
    /// Monte Carlo FPR at the returned sigma on the calibration seeds.
    pub achieved_fpr: f64,
    /// Bisection trace: (sigma, FPR) per evaluation.
    pub evaluations: Vec<(f64, f64)>,
}

// Smallest prior sd at which this effect's interval excludes zero, or +inf
// if no prior sd can make it significant. Rejection happens iff
// |theta| * sigma > z * se * sqrt(sigma^2 + se^2), so the cutoff is closed
// form and FPR(sigma) is exactly monotone for a fixed replicate set.
fn critical_sigma(theta_hat: f64, se: f64, z: f64) -> f64 {
    let t2 = theta_hat * theta_hat;
    let z2se2 = z * z * se * se;
    if t2 <= z2se2 {
        f64::INFINITY
    } else {
        z * se * se / (t2 - z2se2).sqrt()
    }
}

fn calibration_critical_sigmas(
    design: &ScenarioSpec,
    interval_level: f64,
) -> Result<Vec<f64>> {
    design.validate()?;
    if design.groups != 2 {
        return Err(Error::invalid(
            "sigma calibration expects a two-group design per outcome",
        ));
    }
    if !design.all_null() {
        return Err(Error::invalid(
            "sigma calibration requires an all-null design (every true effect zero)",
        ));
    }
    if !(interval_level > 0.0 && interval_level < 1.0) {
        return Err(Error::invalid(format!(
            "interval level must be in (0,1), got {interval_level}"
        )));
    }
    let z = normal_quantile(1.0 - (1.0 - interval_level) / 2.0);
    let n = design.n_per_group;
    let sd = design.sd;
    let m = design.m;
    let per_replicate: Vec<Vec<f64>> = (0..design.replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_stream(design.master_seed, rep as u64);
            (0..m)
                .map(|_| {
                    let a = GroupSample::new("a", rng.normal_vec(0.0, sd, n))
                        .expect("n >= 2 validated");
                    let b = GroupSample::new("b", rng.normal_vec(0.0, sd, n))
                        .expect("n >= 2 validated");
                    let (theta_hat, se) = mean_difference(&a, &b);
                    critical_sigma(theta_hat, se, z)
                })
                .collect()
        })
        .collect();
    Ok(per_replicate.into_iter().flatten().collect())
}

/// Monte Carlo false-positive rate of fixed-prior shrinkage at a given
/// `sigma` on an all-null design: the fraction of effects whose central
/// posterior interval (at `interval_level`) excludes zero.
pub fn calibration_fpr(
    design: &ScenarioSpec,
    sigma: f64,
    interval_level: f64,
) -> Result<f64> {
    let crit = calibration_critical_sigmas(design, interval_level)?;
    Ok(crit.iter().filter(|&&c| sigma > c).count() as f64 / crit.len() as f64)
}

/// Calibrate the fixed-prior `sigma` so the all-null Monte Carlo FPR hits
/// `target_fpr`, by bisection on log sigma with common random numbers.
///
/// The significance rule is "the central posterior interval at
/// `interval_level` excludes zero". Errors when the target is unreachable
/// within `sigma in [1e-6, 1e3] * sd`.
pub fn calibrate_sigma(
    design: &ScenarioSpec,
    target_fpr: f64,
    interval_level: f64,
) -> Result<CalibrationResult> {
    if !(target_fpr > 0.0 && target_fpr < 1.0) {
        return Err(Error::invalid(format!(
            "target FPR must be in (0,1), got {target_fpr}"
        )));
    }
    let crit = calibration_critical_sigmas(design, interval_level)?;
    let total = crit.len() as f64;
    let fpr_at = |sigma: f64| crit.iter().filter(|&&c| sigma > c).count() as f64 / total;

    let mut lo = 1e-6 * design.sd;
    let mut hi = 1e3 * design.sd;
    let f_lo = fpr_at(lo);
    let f_hi = fpr_at(hi);
    let mut evaluations = vec![(lo, f_lo), (hi, f_hi)];
    if f_hi < target_fpr || f_lo > target_fpr {
        return Err(Error::Numerical(format!(
            "target FPR {target_fpr} is unreachable: FPR ranges from {f_lo} at sigma={lo:e} \
             to {f_hi} at sigma={hi:e} for this design"
        )));
    }
    // bisection on log sigma; FPR is a monotone step function of sigma here,
    // so this converges to the smallest sigma with FPR >= target
    for _ in 0..120 {
        if hi / lo - 1.0 < 1e-12 {
            break;
        }
        let mid = (lo.ln() + 0.5 * (hi.ln() - lo.ln())).exp();
        let f_mid = fpr_at(mid);
        evaluations.push((mid, f_mid));
        if f_mid < target_fpr {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CalibrationResult {
        sigma: hi,
        achieved_fpr: fpr_at(hi),
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eff(theta: f64, se: f64) -> EffectSummary {
        EffectSummary::new("e", theta, se).unwrap()
    }

    #[test]
    fn effect_summary_validation() {
        assert!(EffectSummary::new("x", 1.0, 0.0).is_err());
        assert!(EffectSummary::new("x", 1.0, -1.0).is_err());
        assert!(EffectSummary::new("x", f64::NAN, 1.0).is_err());
        assert!(EffectSummary::new("x", 1.0, 1.0).is_ok());
    }

    #[test]
    fn tiny_se_keeps_the_estimate() {
        let s = shrink_fixed_normal(&eff(2.0, 1e-9), 1.0);
        assert!((s.posterior_mean - 2.0).abs() < 1e-12);
    }

    #[test]
    fn equal_information_halves_the_estimate() {
        let s = shrink_fixed_normal(&eff(2.0, 1.0), 1.0);
        assert!((s.posterior_mean - 1.0).abs() < 1e-12);
        assert!(s.posterior_sd < 1.0);
    }

    #[test]
    fn sigma_zero_is_degenerate_zero() {
        let s = shrink_fixed_normal(&eff(3.0, 0.5), 0.0);
        assert_eq!(s.posterior_mean, 0.0);
        assert_eq!(s.posterior_sd, 0.0);
        assert_eq!(s.interval_95, (0.0, 0.0));
        assert!(s.degenerate);
    }

    #[test]
    fn shrinkage_never_overshoots_zero() {
        for &(th, se, sg) in &[(2.0, 1.0, 0.5), (-4.0, 0.1, 2.0), (0.3, 3.0, 0.2)] {
            let s = shrink_fixed_normal(&eff(th, se), sg);
            assert!(s.posterior_mean.abs() <= th.abs());
            assert!(s.posterior_mean * th >= 0.0);
            assert!(s.posterior_sd <= se);
        }
    }

    #[test]
    fn eb_refuses_small_families() {
        let effects = vec![eff(1.0, 1.0), eff(2.0, 1.0)];
        let err = fit_eb_normal(&effects).unwrap_err();
        assert!(err.to_string().contains("fixed"));
    }

    #[test]
    fn eb_all_zero_estimates_give_sigma_zero() {
        let effects: Vec<_> = (0..20).map(|_| eff(0.0, 1.0)).collect();
        let prior = fit_eb_normal(&effects).unwrap();
        assert_eq!(prior.sigma, 0.0);
    }

    #[test]
    fn eb_equal_se_matches_closed_form() {
        // sigma^2 = max(0, mean(theta^2) - s^2) when all se = s
        let thetas = [0.3, -1.2, 2.5, 0.9, -0.4, 1.8, -2.2, 0.05, 1.1, -0.7];
        let s = 0.8;
        let effects: Vec<_> = thetas.iter().map(|&t| eff(t, s)).collect();
        let mean_t2 = thetas.iter().map(|t| t * t).sum::<f64>() / thetas.len() as f64;
        let closed = (mean_t2 - s * s).max(0.0).sqrt();
        let prior = fit_eb_normal(&effects).unwrap();
        assert!((prior.sigma - closed).abs() < 1e-6, "{} vs {closed}", prior.sigma);
    }

    #[test]
    fn spike_slab_pi0_zero_matches_eb() {
        let thetas = [0.3, -1.2, 2.5, 0.9, -0.4, 1.8, -2.2, 0.05, 1.1, -0.7, 3.0, -0.2];
        let effects: Vec<_> = thetas.iter().map(|&t| eff(t, 0.5)).collect();
        let eb = fit_eb_normal(&effects).unwrap();
        let pinned = fit_spike_slab_fixed_pi0(&effects, 0.0).unwrap();
        assert!((eb.sigma - pinned.sigma).abs() < 1e-4);
    }

    #[test]
    fn spike_slab_posterior_boundaries() {
        let prior = ShrinkagePrior {
            kind: PriorKind::SpikeSlab,
            sigma: 0.0,
            pi0: Some(1.0),
            fitted: None,
        };
        let s = shrink_with_prior(&eff(5.0, 1.0), &prior);
        assert_eq!(s.posterior_mean, 0.0);
        assert_eq!(s.prob_null, Some(1.0));
        assert_eq!(s.interval_95, (0.0, 0.0));
    }

    #[test]
    fn big_signal_gets_tiny_prob_null() {
        // |theta|/se = 10 with pi0 = 0.9, sigma = 1
        let prior = ShrinkagePrior {
            kind: PriorKind::SpikeSlab,
            sigma: 1.0,
            pi0: Some(0.9),
            fitted: None,
        };
        let s = shrink_with_prior(&eff(1.0, 0.1), &prior);
        assert!(s.prob_null.unwrap() < 0.01, "prob_null={:?}", s.prob_null);
    }

    #[test]
    fn high_prob_null_interval_collapses_to_zero() {
        let prior = ShrinkagePrior {
            kind: PriorKind::SpikeSlab,
            sigma: 1.0,
            pi0: Some(0.99),
            fitted: None,
        };
        let s = shrink_with_prior(&eff(0.05, 1.0), &prior);
        assert!(s.prob_null.unwrap() > 0.975);
        assert_eq!(s.interval_95, (0.0, 0.0));
    }

    #[test]
    fn two_step_needs_ten_outcomes() {
        let a = GroupSample::new("a", vec![1.0, 2.0]).unwrap();
        let b = GroupSample::new("b", vec![1.5, 2.5]).unwrap();
        assert!(two_step(&[(a, b)]).is_err());
    }

    #[test]
    fn two_step_is_permutation_invariant_on_duplicates() {
        let a = GroupSample::new("a", vec![1.0, 2.0, 3.0, 2.5]).unwrap();
        let b = GroupSample::new("b", vec![1.2, 2.2, 2.8, 2.4]).unwrap();
        let pairs: Vec<_> = (0..20).map(|_| (a.clone(), b.clone())).collect();
        let out = two_step(&pairs).unwrap();
        for s in &out {
            assert_eq!(s.posterior_mean, out[0].posterior_mean);
            assert_eq!(s.posterior_sd, out[0].posterior_sd);
        }
    }

    #[test]
    fn mixture_quantile_plateaus_at_zero() {
        // pn = 0.5, slab N(2, 1): the median sits on the point mass
        let q = mixture_quantile(0.5, 0.5, 2.0, 1.0);
        assert_eq!(q, 0.0);
        // far tails come from the slab
        assert!(mixture_quantile(0.999, 0.5, 2.0, 1.0) > 2.0);
    }
}
