//! The studentized-range table against an independent Monte Carlo oracle.

use mtlab_core::rng::rng_stream;
use mtlab_core::special::normal_quantile;
use mtlab_core::srange::{studentized_range_quantile, SrangeTable};

// Independent oracle: fresh draws from a different seed, same definition.
fn mc_oracle(level: f64, k: usize, df: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = rng_stream(seed, 0);
    let mut sample = Vec::with_capacity(draws);
    for _ in 0..draws {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for _ in 0..k {
            let z = rng.standard_normal();
            lo = lo.min(z);
            hi = hi.max(z);
        }
        let s = (rng.chi_square(df) / df).sqrt();
        sample.push((hi - lo) / s);
    }
    sample.sort_unstable_by(f64::total_cmp);
    sample[((draws as f64) * (1.0 - level)) as usize]
}

#[test]
fn k3_df10_matches_independent_oracle() {
    let table = SrangeTable::in_memory();
    let q = table.quantile(0.05, 3, 10.0);
    let oracle = mc_oracle(0.05, 3, 10.0, 1_000_000, 555_000_111);
    assert!((q - oracle).abs() < 0.02, "table {q} vs oracle {oracle}");
}

#[test]
fn k2_reduction_to_normal() {
    let q = studentized_range_quantile(0.05, 2, 1e6);
    let expected = std::f64::consts::SQRT_2 * normal_quantile(0.975);
    assert!((q - expected).abs() < 0.01, "{q} vs {expected}");
}

#[test]
fn snk_k2_critical_matches_pairwise_t() {
    // q(alpha, 2, df) / sqrt(2) should match the two-sided t critical value,
    // so an SNK comparison of 2 means coincides with the pooled t decision
    let df = 30.0;
    let q = studentized_range_quantile(0.05, 2, df);
    // two-sided t critical at 0.05 for df = 30 by bisection on the library CDF
    let mut lo = 0.0;
    let mut hi = 10.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let p = 2.0 * (1.0 - mtlab_core::special::student_t_cdf(mid, df));
        if p > 0.05 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_crit = 0.5 * (lo + hi);
    assert!(
        (q / std::f64::consts::SQRT_2 - t_crit).abs() < 0.02,
        "q/sqrt2 = {} vs t crit {t_crit}",
        q / std::f64::consts::SQRT_2
    );
}
