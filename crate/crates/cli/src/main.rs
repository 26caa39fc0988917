//! Command-line front end: adjust p-value tables, shrink effect tables,
//! run Monte Carlo scenarios, calibrate the shrinkage prior, and render
//! effect plots.
//!
//! Exit codes: 0 success, 2 input error (bad arguments, malformed tables,
//! domain violations), 3 numerical failure (unreachable calibration
//! bracket, non-convergence).

mod specs;
mod svg;
mod table;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use mtlab_core::adjust::{
    adjust_bh, adjust_bonferroni, adjust_by, adjust_holm, adjust_none, adjust_sidak, Method,
    PValueFamily,
};
use mtlab_core::error_rates::alpha_percentage;
use mtlab_core::shrinkage::{
    calibrate_sigma, fit_eb_normal, fit_spike_slab, shrink_with_prior, summarize_mean_differences,
    EffectSummary, PriorKind, ShrinkagePrior,
};
use mtlab_core::simlab::{
    generate_replicate, parse_scenario, run_family_partition, run_forking_paths,
    run_optional_stopping, run_scenario, Procedure, ReplicateData, ScenarioSpec,
};
use mtlab_core::srange::SrangeTable;
use mtlab_core::Error as CoreError;

use table::{fmt_f64, Table};

const EXIT_INPUT: i32 = 2;
const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser)]
#[command(
    name = "mtlab",
    version,
    about = "Multiple-testing error rates, p-value adjustments, effect shrinkage, \
             and achieved-error-rate simulation",
    after_help = "Exit codes: 0 success, 2 input error, 3 numerical failure.\n\
                  Bundled scenarios (usable wherever a spec path is expected): \
                  paper-fwer15, paper-pfer2000, fig2, fig2-null, lsd-k3, lsd-k6, \
                  snk-k5, looks-5, forking-5, partition-10x10, calib-null-20."
)]
struct Cli {
    /// Master seed for randomized commands; drawn from system entropy and
    /// printed when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the scenario's replicate count.
    #[arg(long, global = true)]
    replicates: Option<usize>,

    /// Verbose diagnostics (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Adjust the `p` column of a table for multiple comparisons.
    Adjust {
        /// Input table (comma or tab delimited, header row, `p` column).
        input: PathBuf,
        /// One of: none, bonferroni, sidak, holm, bh, by.
        #[arg(long)]
        method: String,
        /// Significance level for the rejection column and the summary.
        #[arg(long, default_value_t = 0.05)]
        level: f64,
        /// Family size when the table is only part of the family (pads the
        /// family with untested hypotheses).
        #[arg(long)]
        m_override: Option<u64>,
        /// Output table path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Shrink an effect table (`estimate`, `se` columns) toward zero.
    Shrink {
        input: PathBuf,
        /// Prior: fixed (requires --sigma), eb, or spike-slab.
        #[arg(long)]
        prior: String,
        /// Prior standard deviation for --prior fixed.
        #[arg(long)]
        sigma: Option<f64>,
        /// Output table path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sidecar path for fitted hyperparameters; defaults to
        /// `<out>.summary.txt`, or stderr when writing to stdout.
        #[arg(long)]
        summary: Option<PathBuf>,
    },

    /// Run a scenario under a procedure and report achieved error rates.
    Simulate {
        /// Scenario file path or bundled scenario name.
        spec: String,
        /// unadjusted, bonferroni, sidak, holm, bh, by, fixed-sequence,
        /// lsd, snk, shrink-fixed=<sigma>, shrink-eb, two-step.
        #[arg(long)]
        procedure: String,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
        /// Report file path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write replicate 0's effect summaries (label, estimate, se)
        /// as a table, ready for `shrink` and `plot-fig2`.
        #[arg(long)]
        emit_effects: Option<PathBuf>,
        /// Studentized-range cache file (used by snk).
        #[arg(long, default_value = "srange-cache.tsv")]
        srange_cache: PathBuf,
    },

    /// Calibrate the fixed-prior sigma to a target false-positive rate on
    /// an all-null design.
    Calibrate {
        /// Scenario file path or bundled scenario name (all-null design).
        spec: String,
        #[arg(long, default_value_t = 0.05)]
        target_fpr: f64,
        /// Coverage of the posterior interval used as the decision rule.
        #[arg(long, default_value_t = 0.95)]
        interval_level: f64,
        /// Result file; defaults to mtlab-sigma.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Render raw and shrunken effect tables as side-by-side SVG panels.
    #[command(name = "plot-fig2")]
    PlotFig2 {
        /// Table with `estimate` and `se` columns.
        raw: PathBuf,
        /// Table with `posterior_mean`, `lo95`, `hi95` columns.
        shrunk: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

// ---------------------------------------------------------------------------
// Error-to-exit-code mapping
// ---------------------------------------------------------------------------

struct CliFailure {
    error: anyhow::Error,
    code: i32,
}

impl CliFailure {
    fn input(error: anyhow::Error) -> Self {
        CliFailure {
            error,
            code: EXIT_INPUT,
        }
    }
}

impl From<anyhow::Error> for CliFailure {
    fn from(error: anyhow::Error) -> Self {
        // core numerical failures keep their own exit code through anyhow
        let code = match error.downcast_ref::<CoreError>() {
            Some(CoreError::Numerical(_)) => EXIT_NUMERICAL,
            _ => EXIT_INPUT,
        };
        CliFailure { error, code }
    }
}

impl From<CoreError> for CliFailure {
    fn from(error: CoreError) -> Self {
        let code = match error {
            CoreError::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_INPUT,
        };
        CliFailure {
            error: anyhow::Error::new(error),
            code,
        }
    }
}

type CliResult<T> = Result<T, CliFailure>;

fn main() {
    let cli = Cli::parse();
    if let Err(failure) = run(cli) {
        eprintln!("error: {:#}", failure.error);
        std::process::exit(failure.code);
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Adjust {
            ref input,
            ref method,
            level,
            m_override,
            ref out,
        } => cmd_adjust(input, method, level, m_override, out.as_deref()),
        Command::Shrink {
            ref input,
            ref prior,
            sigma,
            ref out,
            ref summary,
        } => cmd_shrink(input, prior, sigma, out.as_deref(), summary.as_deref()),
        Command::Simulate {
            ref spec,
            ref procedure,
            level,
            ref out,
            ref emit_effects,
            ref srange_cache,
        } => cmd_simulate(
            spec,
            procedure,
            level,
            out.as_deref(),
            emit_effects.as_deref(),
            srange_cache,
            cli.seed,
            cli.replicates,
            cli.verbose,
        ),
        Command::Calibrate {
            ref spec,
            target_fpr,
            interval_level,
            ref out,
        } => cmd_calibrate(
            spec,
            target_fpr,
            interval_level,
            out.as_deref(),
            cli.seed,
            cli.replicates,
            cli.verbose,
        ),
        Command::PlotFig2 {
            ref raw,
            ref shrunk,
            ref out,
        } => cmd_plot_fig2(raw, shrunk, out),
    }
}

// ---------------------------------------------------------------------------
// adjust
// ---------------------------------------------------------------------------

fn cmd_adjust(
    input: &Path,
    method: &str,
    level: f64,
    m_override: Option<u64>,
    out: Option<&Path>,
) -> CliResult<()> {
    let mut t = Table::read(input).map_err(CliFailure::input)?;
    let p = t.numeric_column("p").map_err(CliFailure::input)?;
    for (i, &v) in p.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(CliFailure::input(anyhow!(
                "row {}, column 'p': p-value {v} outside [0,1]",
                i + 2
            )));
        }
    }
    let n_rows = p.len() as u64;
    let m = m_override.unwrap_or(n_rows);
    if m < n_rows {
        return Err(CliFailure::input(anyhow!(
            "--m-override {m} is smaller than the table's {n_rows} rows"
        )));
    }

    // pad the family to m with untested (p = 1) hypotheses
    let mut family_p = p.clone();
    family_p.extend(std::iter::repeat(1.0).take((m - n_rows) as usize));
    let family = PValueFamily::new("cli", family_p)?;
    let outcome = match method {
        "none" => adjust_none(&family, level)?,
        "bonferroni" => adjust_bonferroni(&family, level)?,
        "sidak" => adjust_sidak(&family, level)?,
        "holm" => adjust_holm(&family, level)?,
        "bh" => adjust_bh(&family, level)?,
        "by" => adjust_by(&family, level)?,
        other => {
            return Err(CliFailure::input(anyhow!(
                "unknown method '{other}'; valid: none, bonferroni, sidak, holm, bh, by"
            )))
        }
    };
    let adjusted = &outcome.adjusted_p.as_ref().expect("p-adjusting method")[..p.len()];
    let rejected = &outcome.rejected[..p.len()];

    t.push_column("adjusted_p", adjusted.iter().map(|&v| fmt_f64(v)).collect());
    t.push_column(
        "rejected",
        rejected.iter().map(|&r| r.to_string()).collect(),
    );

    let n_rejected = rejected.iter().filter(|&&r| r).count();
    let n_sig_raw = p.iter().filter(|&&v| v <= level).count() as u64;
    let mut summary = format!(
        "m = {m}, method = {method}, level = {level}, rejected = {n_rejected}, \
         raw significant = {n_sig_raw}"
    );
    match alpha_percentage(level, m, n_sig_raw) {
        Ok(pct) => {
            let _ = write!(summary, ", alpha percentage = {pct:.1}%");
            if pct > 100.0 {
                summary.push_str(" (above 100%: fewer significant results than the all-null expectation)");
            }
        }
        Err(_) => summary.push_str(", alpha percentage undefined (no significant results)"),
    }

    write_table_output(&t, out, &summary).map_err(CliFailure::input)
}

// ---------------------------------------------------------------------------
// shrink
// ---------------------------------------------------------------------------

fn cmd_shrink(
    input: &Path,
    prior_name: &str,
    sigma: Option<f64>,
    out: Option<&Path>,
    summary_path: Option<&Path>,
) -> CliResult<()> {
    let mut t = Table::read(input).map_err(CliFailure::input)?;
    let estimates = t.numeric_column("estimate").map_err(CliFailure::input)?;
    let ses = t.numeric_column("se").map_err(CliFailure::input)?;
    let labels = t.labels_or_default("label");
    let effects: Vec<EffectSummary> = estimates
        .iter()
        .zip(&ses)
        .zip(&labels)
        .map(|((&th, &se), label)| EffectSummary::new(label.clone(), th, se))
        .collect::<mtlab_core::Result<_>>()?;

    let prior = match prior_name {
        "fixed" => {
            let sigma = sigma.ok_or_else(|| {
                CliFailure::input(anyhow!("--prior fixed requires --sigma <sd>"))
            })?;
            ShrinkagePrior::fixed_normal(sigma)?
        }
        "eb" => fit_eb_normal(&effects)?,
        "spike-slab" => fit_spike_slab(&effects)?,
        other => {
            return Err(CliFailure::input(anyhow!(
                "unknown prior '{other}'; valid: fixed, eb, spike-slab"
            )))
        }
    };

    let shrunk: Vec<_> = effects.iter().map(|e| shrink_with_prior(e, &prior)).collect();
    t.push_column(
        "posterior_mean",
        shrunk.iter().map(|s| fmt_f64(s.posterior_mean)).collect(),
    );
    t.push_column(
        "posterior_sd",
        shrunk.iter().map(|s| fmt_f64(s.posterior_sd)).collect(),
    );
    t.push_column(
        "prob_null",
        shrunk
            .iter()
            .map(|s| s.prob_null.map(fmt_f64).unwrap_or_default())
            .collect(),
    );
    t.push_column("lo95", shrunk.iter().map(|s| fmt_f64(s.interval_95.0)).collect());
    t.push_column("hi95", shrunk.iter().map(|s| fmt_f64(s.interval_95.1)).collect());

    let sidecar = prior_summary(&prior);
    let default_sidecar = out.map(|o| {
        let mut p = o.as_os_str().to_owned();
        p.push(".summary.txt");
        PathBuf::from(p)
    });
    let sidecar_path = summary_path.map(Path::to_path_buf).or(default_sidecar);
    match &sidecar_path {
        Some(path) => {
            fs::write(path, &sidecar)
                .with_context(|| format!("cannot write '{}'", path.display()))
                .map_err(CliFailure::input)?;
        }
        None => eprint!("{sidecar}"),
    }

    let summary_line = format!(
        "n = {}, prior = {prior_name}, sigma = {}",
        effects.len(),
        fmt_f64(prior.sigma)
    );
    write_table_output(&t, out, &summary_line).map_err(CliFailure::input)
}

fn prior_summary(prior: &ShrinkagePrior) -> String {
    let kind = match prior.kind {
        PriorKind::FixedNormal => "fixed_normal",
        PriorKind::EbNormal => "eb_normal",
        PriorKind::SpikeSlab => "spike_slab",
    };
    let mut s = String::new();
    let _ = writeln!(s, "prior = {kind}");
    let _ = writeln!(s, "sigma = {}", fmt_f64(prior.sigma));
    if let Some(pi0) = prior.pi0 {
        let _ = writeln!(s, "pi0 = {}", fmt_f64(pi0));
    }
    if let Some(fit) = &prior.fitted {
        let _ = writeln!(s, "log_marginal = {}", fmt_f64(fit.log_marginal));
        let _ = writeln!(s, "iterations = {}", fit.iterations);
        let _ = writeln!(s, "converged = {}", fit.converged);
    }
    s
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    spec_arg: &str,
    procedure: &str,
    level: f64,
    out: Option<&Path>,
    emit_effects: Option<&Path>,
    srange_cache: &Path,
    seed: Option<u64>,
    replicates: Option<usize>,
    verbose: u8,
) -> CliResult<()> {
    let spec = resolve_spec(spec_arg, seed, replicates)?;
    let procedure = Procedure::parse(procedure)?;

    if let Some(path) = emit_effects {
        emit_effect_table(&spec, path)?;
    }

    let special = [
        spec.looks > 1,
        spec.analyst_variants > 1,
        spec.family_partition.len() > 1,
    ];
    if special.iter().filter(|&&b| b).count() > 1 {
        return Err(CliFailure::input(anyhow!(
            "scenario combines interim looks, analyst variants, and/or a family \
             partition; run one multiplicity mechanism at a time"
        )));
    }

    let report_text = if spec.looks > 1 {
        require_unadjusted(&procedure, "interim looks")?;
        run_optional_stopping(&spec, level)?.to_text()
    } else if spec.analyst_variants > 1 {
        require_unadjusted(&procedure, "analyst variants")?;
        run_forking_paths(&spec, level)?.to_text()
    } else if spec.family_partition.len() > 1 {
        let method = match procedure {
            Procedure::Bonferroni => Method::Bonferroni,
            Procedure::Sidak => Method::Sidak,
            Procedure::Holm => Method::Holm,
            other => {
                return Err(CliFailure::input(anyhow!(
                    "partitioned scenarios need an FWER p-adjusting procedure \
                     (bonferroni, sidak, holm), got '{}'",
                    other.name()
                )))
            }
        };
        let cmp = run_family_partition(&spec, method, level)?;
        format!("{}\n{}", cmp.whole_family.to_text(), cmp.per_subfamily.to_text())
    } else {
        let table = if matches!(procedure, Procedure::Snk) {
            SrangeTable::with_cache_file(srange_cache)?
        } else {
            SrangeTable::in_memory()
        };
        run_scenario(&spec, &procedure, level, &table)?.to_text()
    };

    if verbose > 0 {
        eprintln!(
            "scenario: m={} groups={} n={} replicates={} seed={}",
            spec.m, spec.groups, spec.n_per_group, spec.replicates, spec.master_seed
        );
    }
    match out {
        Some(path) => {
            fs::write(path, &report_text)
                .with_context(|| format!("cannot write '{}'", path.display()))
                .map_err(CliFailure::input)?;
            // short human summary on stdout when the report goes to a file
            for line in report_text.lines() {
                if line.starts_with("fwer") || line.starts_with("# seed") {
                    println!("{line}");
                }
            }
        }
        None => print!("{report_text}"),
    }
    Ok(())
}

fn require_unadjusted(procedure: &Procedure, what: &str) -> CliResult<()> {
    if !matches!(procedure, Procedure::Unadjusted) {
        return Err(CliFailure::input(anyhow!(
            "scenarios with {what} model repeated unadjusted testing; \
             use --procedure unadjusted"
        )));
    }
    Ok(())
}

fn emit_effect_table(spec: &ScenarioSpec, path: &Path) -> CliResult<()> {
    if spec.groups != 2 {
        return Err(CliFailure::input(anyhow!(
            "--emit-effects needs a two-group scenario"
        )));
    }
    let data = match generate_replicate(spec, 0)? {
        ReplicateData::TwoGroup(pairs) => pairs,
        _ => unreachable!("two-group scenario"),
    };
    let effects = summarize_mean_differences(&data)?;
    let mut text = String::from("label,estimate,se\n");
    for e in &effects {
        let _ = writeln!(text, "{},{},{}", e.label, fmt_f64(e.theta_hat), fmt_f64(e.se));
    }
    fs::write(path, text)
        .with_context(|| format!("cannot write '{}'", path.display()))
        .map_err(CliFailure::input)
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

fn cmd_calibrate(
    spec_arg: &str,
    target_fpr: f64,
    interval_level: f64,
    out: Option<&Path>,
    seed: Option<u64>,
    replicates: Option<usize>,
    verbose: u8,
) -> CliResult<()> {
    let spec = resolve_spec(spec_arg, seed, replicates)?;
    let result = calibrate_sigma(&spec, target_fpr, interval_level)?;
    if verbose > 0 {
        eprintln!("bisection trace (sigma, fpr):");
        for (s, f) in &result.evaluations {
            eprintln!("  {s:.6e}  {f:.6}");
        }
    }
    let mut text = String::new();
    let _ = writeln!(text, "sigma = {}", fmt_f64(result.sigma));
    let _ = writeln!(text, "achieved_fpr = {}", fmt_f64(result.achieved_fpr));
    let _ = writeln!(text, "target_fpr = {}", fmt_f64(target_fpr));
    let _ = writeln!(text, "interval_level = {}", fmt_f64(interval_level));
    let _ = writeln!(text, "replicates = {}", spec.replicates);
    let _ = writeln!(text, "seed = {}", spec.master_seed);
    let path = out.unwrap_or_else(|| Path::new("mtlab-sigma.txt"));
    fs::write(path, &text)
        .with_context(|| format!("cannot write '{}'", path.display()))
        .map_err(CliFailure::input)?;
    println!(
        "sigma = {} (achieved FPR {} at target {target_fpr}); written to {}",
        fmt_f64(result.sigma),
        fmt_f64(result.achieved_fpr),
        path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// plot-fig2
// ---------------------------------------------------------------------------

fn cmd_plot_fig2(raw: &Path, shrunk: &Path, out: &Path) -> CliResult<()> {
    let raw_t = Table::read(raw).map_err(CliFailure::input)?;
    let shrunk_t = Table::read(shrunk).map_err(CliFailure::input)?;
    if raw_t.n_rows() != shrunk_t.n_rows() {
        return Err(CliFailure::input(anyhow!(
            "row mismatch: '{}' has {} rows, '{}' has {}",
            raw.display(),
            raw_t.n_rows(),
            shrunk.display(),
            shrunk_t.n_rows()
        )));
    }
    let est = raw_t.numeric_column("estimate").map_err(CliFailure::input)?;
    let se = raw_t.numeric_column("se").map_err(CliFailure::input)?;
    let pm = shrunk_t
        .numeric_column("posterior_mean")
        .map_err(CliFailure::input)?;
    let lo = shrunk_t.numeric_column("lo95").map_err(CliFailure::input)?;
    let hi = shrunk_t.numeric_column("hi95").map_err(CliFailure::input)?;

    let panels = [
        svg::Panel {
            title: "A: estimates \u{00b1} SE".into(),
            points: est
                .iter()
                .zip(&se)
                .map(|(&e, &s)| (e, e - s, e + s))
                .collect(),
        },
        svg::Panel {
            title: "B: shrunken estimates (95% interval)".into(),
            points: pm
                .iter()
                .zip(lo.iter().zip(&hi))
                .map(|(&m, (&l, &h))| (m, l, h))
                .collect(),
        },
    ];
    fs::write(out, svg::render(&panels))
        .with_context(|| format!("cannot write '{}'", out.display()))
        .map_err(CliFailure::input)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// shared plumbing
// ---------------------------------------------------------------------------

fn resolve_spec(
    spec_arg: &str,
    seed_flag: Option<u64>,
    replicates_flag: Option<usize>,
) -> CliResult<ScenarioSpec> {
    let text = if Path::new(spec_arg).exists() {
        fs::read_to_string(spec_arg)
            .with_context(|| format!("cannot read scenario '{spec_arg}'"))
            .map_err(CliFailure::input)?
    } else if let Some(bundled) = specs::bundled(spec_arg) {
        bundled.to_string()
    } else {
        return Err(CliFailure::input(anyhow!(
            "'{spec_arg}' is neither a file nor a bundled scenario; bundled: {}",
            specs::bundled_names().join(", ")
        )));
    };
    let (mut spec, seed_in_file) = parse_scenario(&text)?;
    match seed_flag {
        Some(s) => spec.master_seed = s,
        None if !seed_in_file => {
            let s: u64 = rand::random();
            eprintln!("seed = {s} (drawn from system entropy; pass --seed to reproduce)");
            spec.master_seed = s;
        }
        None => {}
    }
    if let Some(r) = replicates_flag {
        spec.replicates = r;
    }
    spec.validate()?;
    Ok(spec)
}

fn write_table_output(t: &Table, out: Option<&Path>, summary: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            fs::write(path, t.to_text())
                .with_context(|| format!("cannot write '{}'", path.display()))?;
            println!("{summary}");
        }
        None => {
            print!("{}", t.to_text());
            eprintln!("{summary}");
        }
    }
    Ok(())
}
