//! Simulation-lab contracts: cross-module calibration, uncontrolled
//! multiplicity scenarios, paired procedure comparison, determinism.

use mtlab_core::adjust::Method;
use mtlab_core::error_rates;
use mtlab_core::simlab::{
    compare_procedures, run_family_partition, run_forking_paths, run_forking_paths_with,
    run_optional_stopping, run_scenario, AnalysisVariant, Procedure, ScenarioSpec,
};
use mtlab_core::srange::SrangeTable;

fn null_spec(m: usize, replicates: usize, seed: u64) -> ScenarioSpec {
    let mut s = ScenarioSpec::two_group(m, 10, vec![0.0; m]);
    s.replicates = replicates;
    s.master_seed = seed;
    s
}

#[test]
fn unadjusted_all_null_matches_closed_form_rates() {
    // cross-module oracle: per-comparison FPR = alpha and FWER = fwer(alpha, m)
    for &alpha in &[0.01, 0.05] {
        let spec = null_spec(15, 10_000, 51_000 + (alpha * 1000.0) as u64);
        let report =
            run_scenario(&spec, &Procedure::Unadjusted, alpha, &SrangeTable::in_memory()).unwrap();
        assert!(
            (report.per_comparison_fpr.value - alpha).abs()
                <= 3.0 * report.per_comparison_fpr.mc_se,
            "alpha={alpha}: pcer {} +/- {}",
            report.per_comparison_fpr.value,
            report.per_comparison_fpr.mc_se
        );
        let expected = error_rates::fwer(alpha, 15).unwrap();
        assert!(
            (report.fwer.value - expected).abs() <= 3.0 * report.fwer.mc_se,
            "alpha={alpha}: fwer {} vs {expected}",
            report.fwer.value
        );
    }
}

#[test]
fn optional_stopping_single_look_equals_plain_run() {
    let mut spec = null_spec(3, 2_000, 52_000);
    spec.n_per_group = 20;
    let plain = run_scenario(&spec, &Procedure::Unadjusted, 0.05, &SrangeTable::in_memory())
        .unwrap();
    let looks = run_optional_stopping(&spec, 0.05).unwrap();
    // identical data, identical decisions
    assert_eq!(plain.fwer.value, looks.fwer.value);
    assert_eq!(plain.per_comparison_fpr.value, looks.per_comparison_fpr.value);
}

#[test]
fn optional_stopping_inflates_and_grows_with_looks() {
    let schedules: [(usize, Vec<f64>); 4] = [
        (1, vec![1.0]),
        (2, vec![0.5, 1.0]),
        (5, vec![0.2, 0.4, 0.6, 0.8, 1.0]),
        (10, (1..=10).map(|i| i as f64 / 10.0).collect()),
    ];
    let mut rates = Vec::new();
    for (looks, schedule) in schedules {
        let mut spec = null_spec(1, 10_000, 52_500);
        spec.n_per_group = 50;
        spec.looks = looks;
        spec.look_schedule = schedule;
        let report = run_optional_stopping(&spec, 0.05).unwrap();
        rates.push((report.fwer.value, report.fwer.mc_se));
    }
    // looks = 5 exceeds the nominal level by more than 3 MC-SE
    assert!(
        rates[2].0 > 0.05 + 3.0 * rates[2].1,
        "5-look FPR {} not inflated",
        rates[2].0
    );
    // nondecreasing within MC error
    for w in rates.windows(2) {
        let slack = 3.0 * (w[0].1 * w[0].1 + w[1].1 * w[1].1).sqrt();
        assert!(w[1].0 >= w[0].0 - slack, "FPR fell from {} to {}", w[0].0, w[1].0);
    }
}

#[test]
fn optional_stopping_rejects_undersized_first_look() {
    let mut spec = null_spec(1, 100, 52_900);
    spec.n_per_group = 10;
    spec.looks = 2;
    spec.look_schedule = vec![0.05, 1.0]; // first look would analyse 1 sample
    let err = run_optional_stopping(&spec, 0.05).unwrap_err();
    assert!(err.to_string().contains("look"));
}

#[test]
fn forking_paths_single_variant_is_calibrated() {
    let mut spec = null_spec(1, 10_000, 53_000);
    spec.n_per_group = 20;
    let report = run_forking_paths(&spec, 0.05).unwrap();
    assert!(
        (report.fwer.value - 0.05).abs() <= 3.0 * report.fwer.mc_se,
        "FPR = {}",
        report.fwer.value
    );
}

#[test]
fn forking_paths_five_variants_inflate() {
    let mut spec = null_spec(1, 10_000, 53_100);
    spec.n_per_group = 20;
    spec.analyst_variants = 5;
    let report = run_forking_paths(&spec, 0.05).unwrap();
    assert!(
        report.fwer.value > 0.05 + 3.0 * report.fwer.mc_se,
        "5-variant FPR {} not inflated",
        report.fwer.value
    );
}

#[test]
fn forking_paths_correlated_copies_do_not_inflate() {
    let mut spec = null_spec(1, 10_000, 53_200);
    spec.n_per_group = 20;
    spec.analyst_variants = 5;
    let copies = [AnalysisVariant::Raw; 5];
    let report = run_forking_paths_with(&spec, 0.05, &copies).unwrap();
    assert!(
        (report.fwer.value - 0.05).abs() <= 3.0 * report.fwer.mc_se,
        "FPR = {}",
        report.fwer.value
    );
}

#[test]
fn partition_inflates_but_whole_family_stays_controlled() {
    let mut spec = null_spec(100, 4_000, 54_000);
    spec.family_partition = vec![10; 10];
    let cmp = run_family_partition(&spec, Method::Bonferroni, 0.05).unwrap();
    let whole = cmp.whole_family.fwer;
    let parts = cmp.per_subfamily.fwer;
    assert!(
        parts.value - whole.value > 3.0 * (whole.mc_se * whole.mc_se + parts.mc_se * parts.mc_se).sqrt(),
        "per-subfamily {} vs whole {}",
        parts.value,
        whole.value
    );
    assert!(whole.value <= 0.05 + 3.0 * whole.mc_se);
}

#[test]
fn comparison_uses_common_random_numbers() {
    // Bonferroni vs Holm: identical null FWER replicate by replicate, and
    // Holm's power dominates on mixed scenarios
    let spec = null_spec(10, 4_000, 55_000);
    let table = SrangeTable::in_memory();
    let cmp = compare_procedures(
        &spec,
        &[Procedure::Bonferroni, Procedure::Holm],
        0.05,
        &table,
    )
    .unwrap();
    let d = &cmp.paired[0];
    assert_eq!(d.fwer_diff.value, 0.0, "null FWER should pair exactly");

    let mut mixed = null_spec(10, 4_000, 55_001);
    mixed.effect_vector[0] = 1.5;
    mixed.effect_vector[1] = 2.0;
    let cmp = compare_procedures(
        &mixed,
        &[Procedure::Holm, Procedure::Bonferroni],
        0.05,
        &table,
    )
    .unwrap();
    let d = &cmp.paired[0];
    assert!(
        d.power_diff.unwrap().value >= 0.0,
        "holm power below bonferroni: {:?}",
        d.power_diff
    );
    assert!(cmp.reports[0].mean_power.unwrap().value >= cmp.reports[1].mean_power.unwrap().value);
}

#[test]
fn comparison_is_byte_identical_across_runs() {
    let spec = null_spec(5, 500, 55_100);
    let table = SrangeTable::in_memory();
    let a = compare_procedures(&spec, &[Procedure::Bonferroni, Procedure::Bh], 0.05, &table)
        .unwrap()
        .to_text();
    let b = compare_procedures(&spec, &[Procedure::Bonferroni, Procedure::Bh], 0.05, &table)
        .unwrap()
        .to_text();
    assert_eq!(a, b);
}

#[test]
fn calibrated_shrinkage_vs_bonferroni_paired_comparison() {
    // calibrate sigma on the all-null version of the design, then compare
    // the calibrated fixed prior against Bonferroni on the planted version;
    // both control the per-comparison FPR, power difference is reported
    use mtlab_core::shrinkage::calibrate_sigma;

    let mut null_design = ScenarioSpec::two_group(100, 10, vec![0.0; 100]);
    null_design.replicates = 2_000;
    null_design.master_seed = 57_000;
    let sigma = calibrate_sigma(&null_design, 0.05, 0.95).unwrap().sigma;

    let mut effects = vec![2.0; 5];
    effects.extend(vec![0.0; 95]);
    let mut planted = ScenarioSpec::two_group(100, 10, effects);
    planted.replicates = 2_000;
    planted.master_seed = 57_001;
    let cmp = compare_procedures(
        &planted,
        &[Procedure::ShrinkFixed { sigma }, Procedure::Bonferroni],
        0.05,
        &SrangeTable::in_memory(),
    )
    .unwrap();
    for report in &cmp.reports {
        assert!(
            report.per_comparison_fpr.value
                <= 0.05 + 3.0 * report.per_comparison_fpr.mc_se,
            "{}: per-comparison FPR {} +/- {}",
            report.procedure,
            report.per_comparison_fpr.value,
            report.per_comparison_fpr.mc_se
        );
    }
    let d = &cmp.paired[0];
    println!(
        "power difference (calibrated shrinkage - bonferroni): {} +/- {}",
        d.power_diff.unwrap().value,
        d.power_diff.unwrap().mc_se
    );
}

#[test]
fn shrinkage_procedure_rejects_mismatched_scenarios() {
    let mut spec = null_spec(3, 100, 56_000);
    spec.groups = 3;
    spec.family_partition = vec![3];
    // pairwise family of a 3-group experiment: not a two-group design
    let err = run_scenario(
        &spec,
        &Procedure::TwoStepSpikeSlab,
        0.05,
        &SrangeTable::in_memory(),
    )
    .unwrap_err();
    assert!(err.to_string().contains("two-group"));
}
