//! Command-line driver: `associate`, `checks`, `report` and `demo`.
//!
//! Exit codes: 0 success, 1 scientific failure (unconverged run or failed
//! check), 2 usage or configuration error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::association::{
    AssociationReport, Experiment, ExperimentConfig, Generator, ScheduleSpec, TransportSpec,
};
use crate::error::{Error, Result};
use crate::fields::{embed_negligibility_order, pullback_commutation_check, TensorField};
use crate::fit::{richardson, OrderFitReport};
use crate::kernels::{
    check_test_object_with, delta_product_demo, make_polynomial_profile, unit_bump_1d,
    AdmissibilityReport, TestObjectOptions,
};
use crate::linalg::AffineMap;
use crate::quadrature::DiscQuadrature;
use crate::region::Region;
use crate::transport::check_admissible_with;

pub const ASSOCIATE_SCHEMA: &str = "conelab-associate";
pub const CHECKS_SCHEMA: &str = "conelab-checks";
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "CONELAB_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Gauss–Bonnet closure tolerance for clamp-free ε.
pub const GB_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(
    name = "conelab",
    version,
    about = "Regularized curvature of conical metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a convergence study of the association integral.
    Associate(AssociateArgs),
    /// Run the diagnostic check suite.
    Checks(ChecksArgs),
    /// Consolidate a directory of associate results.
    Report {
        dir: PathBuf,
        /// Also write the summary table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stand-alone demonstrations.
    Demo {
        #[arg(value_enum)]
        which: DemoKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DemoKind {
    DeltaProduct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TransportKind {
    Identity,
    Perturbed,
}

#[derive(Debug, Args)]
struct ExperimentFlags {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Moment order q of the kernel profile.
    #[arg(long)]
    q: Option<usize>,
    /// Kernel center shift as `x,y`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    shift: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    transport: Option<TransportKind>,
    /// Perturbation order k of the transport.
    #[arg(long)]
    order: Option<u32>,
    /// Explicit ε schedule, comma separated.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    id: Option<String>,
}

#[derive(Debug, Args)]
struct AssociateArgs {
    #[command(flatten)]
    experiment: ExperimentFlags,
    /// Output directory for CSV and JSON artifacts.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ChecksArgs {
    #[command(flatten)]
    experiment: ExperimentFlags,
    /// Order the kernel's moment condition is certified at.
    #[arg(long)]
    certify_order: Option<usize>,
    /// Run only a demonstration instead of the suite.
    #[arg(long, value_enum)]
    demo: Option<DemoKind>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Check-suite configuration file: the experiment in an `[experiment]`
/// table plus suite settings at top level.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    #[serde(default = "default_checks_experiment")]
    pub experiment: ExperimentConfig,
    /// Determinant-bound margin; defaults to `min(0.3, α²/2)`.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub certify_order: Option<usize>,
    #[serde(default = "all_checks")]
    pub checks: Vec<CheckKind>,
}

fn default_checks_experiment() -> ExperimentConfig {
    ExperimentConfig::new(0.8)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Kernel,
    Transport,
    Negligibility,
    Pullback,
    DetBounds,
    Taylor,
    AnnulusDecay,
    DeltaProduct,
}

fn all_checks() -> Vec<CheckKind> {
    use CheckKind::*;
    vec![
        Kernel,
        Transport,
        Negligibility,
        Pullback,
        DetBounds,
        Taylor,
        AnnulusDecay,
        DeltaProduct,
    ]
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            experiment: default_checks_experiment(),
            kappa: None,
            certify_order: None,
            checks: all_checks(),
        }
    }
}

/// A failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = write!(out, "{e}");
            return code;
        }
    };
    configure_threads();
    let result = match cli.command {
        Command::Associate(a) => cmd_associate(&a, out),
        Command::Checks(c) => cmd_checks(&c, out),
        Command::Report { dir, out: file } => cmd_report(&dir, file.as_deref(), out),
        Command::Demo {
            which: DemoKind::DeltaProduct,
            out: file,
        } => demo_delta_product(file.as_deref(), out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(out, "error: {}", f.message);
            f.code
        }
    }
}

fn configure_threads() {
    #[cfg(feature = "parallel")]
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        // the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

/// Line of the first assignment or table header for `key`.
fn locate_key(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|line| {
            let t = line.trim_start();
            let t = t.trim_start_matches('[').trim_start();
            t.strip_prefix(key)
                .map(|rest| {
                    let rest = rest.trim_start();
                    rest.starts_with('=') || rest.starts_with(']') || rest.starts_with('.')
                })
                .unwrap_or(false)
        })
        .map(|i| i + 1)
}

/// Keywords in validation messages and the configuration key they refer to.
const MESSAGE_KEYS: [(&str, &str); 14] = [
    ("schedule", "schedule"),
    ("max eps", "schedule"),
    ("alpha", "alpha"),
    ("support balls", "mu"),
    ("lambda", "lambda"),
    ("annulus", "annulus"),
    ("outer quadrature", "outer"),
    ("floor", "floor"),
    ("tolerance", "tolerance"),
    ("omega", "omega"),
    ("quadrature", "quadrature"),
    ("transport", "transport"),
    ("moment order", "kernel"),
    ("kappa", "kappa"),
];

fn with_location(err: Error, source: Option<(&Path, &str)>) -> Failure {
    let message = err.to_string();
    let Some((path, text)) = source else {
        return usage(message);
    };
    let located = MESSAGE_KEYS
        .iter()
        .find(|(needle, _)| message.contains(needle))
        .and_then(|(_, key)| locate_key(text, key));
    match located {
        Some(line) => usage(format!("{}:{line}: {message}", path.display())),
        None => usage(format!("{}: {message}", path.display())),
    }
}

fn read_config<T: for<'de> Deserialize<'de> + Default>(
    path: Option<&Path>,
) -> Result<(T, Option<String>), Failure> {
    let Some(path) = path else {
        return Ok((T::default(), None));
    };
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let parsed = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok((parsed, Some(text)))
}

fn apply_flags(cfg: &mut ExperimentConfig, f: &ExperimentFlags) -> Result<(), Failure> {
    if let Some(a) = f.alpha {
        cfg.alpha = a;
    }
    if let Some(q) = f.q {
        cfg.kernel.moment_order = q;
    }
    if let Some(s) = &f.shift {
        let [x, y] = s[..] else {
            return Err(usage(format!(
                "--shift takes two comma-separated values, got {}",
                s.len()
            )));
        };
        cfg.kernel.shift = [x, y];
    }
    match (f.transport, f.order) {
        (Some(TransportKind::Identity), Some(_)) => {
            return Err(usage("--order only applies to --transport perturbed"));
        }
        (Some(TransportKind::Identity), None) => cfg.transport = TransportSpec::Identity,
        (Some(TransportKind::Perturbed), order) => {
            cfg.transport = TransportSpec::Perturbed {
                order: order.unwrap_or(3),
                generator: Generator::Rotation,
            }
        }
        (None, Some(k)) => match &mut cfg.transport {
            TransportSpec::Perturbed { order, .. } => *order = k,
            TransportSpec::Identity => {
                return Err(usage("--order needs a perturbed transport"));
            }
        },
        (None, None) => {}
    }
    if let Some(e) = &f.eps {
        cfg.schedule = ScheduleSpec::List(e.clone());
    }
    if let Some(id) = &f.id {
        cfg.experiment_id = id.clone();
    }
    Ok(())
}

fn build_experiment(
    cfg: &ExperimentConfig,
    source: Option<(&Path, &str)>,
) -> Result<Experiment, Failure> {
    Experiment::new(cfg).map_err(|e| with_location(e, source))
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    usage(format!("{}: {e}", path.display()))
}

/// Writes the per-ε CSV of an associate run.
pub fn write_associate_csv(report: &AssociationReport, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["schema", ASSOCIATE_SCHEMA, &SCHEMA_VERSION.to_string()])
        .map_err(csv_err)?;
    w.write_record([
        "experiment_id",
        "alpha",
        "kernel_id",
        "transport_id",
        "eps",
        "I",
        "I1",
        "gb_residual",
        "det_min",
        "det_max",
        "clamp_active",
    ])
    .map_err(csv_err)?;
    for r in &report.records {
        w.write_record([
            report.experiment_id.clone(),
            report.alpha.to_string(),
            report.kernel_id.clone(),
            report.transport_id.clone(),
            r.eps.to_string(),
            r.integral.to_string(),
            r.i1_direct.to_string(),
            r.gb_residual.to_string(),
            r.det_min.to_string(),
            r.det_max.to_string(),
            r.clamp_active.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct AssociateSummary<'a> {
    schema: &'static str,
    version: u32,
    report: &'a AssociationReport,
    checks: Vec<(&'static str, bool)>,
}

fn associate_checks(report: &AssociationReport) -> Vec<(&'static str, bool)> {
    let gb = report
        .records
        .iter()
        .filter(|r| !r.clamp_active)
        .all(|r| r.gb_residual < GB_TOLERANCE);
    vec![
        ("converged", report.converged),
        ("gauss-bonnet-closure", gb),
        ("i2-inner-vanishes", report.i2_inner_fit.pass),
        ("i2-outer-vanishes", report.i2_outer_fit.pass),
    ]
}

fn cmd_associate(args: &AssociateArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let path = args.experiment.config.as_deref();
    let (mut cfg, text): (ExperimentConfig, _) = read_config(path)?;
    apply_flags(&mut cfg, &args.experiment)?;
    let source = path.zip(text.as_deref());
    let experiment = build_experiment(&cfg, source)?;
    let report = experiment.convergence_study()?;
    fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;
    let stem = args.out.join(&report.experiment_id);
    let csv_path = stem.with_extension("csv");
    write_associate_csv(&report, &csv_path)?;
    let checks = associate_checks(&report);
    let summary = AssociateSummary {
        schema: ASSOCIATE_SCHEMA,
        version: SCHEMA_VERSION,
        report: &report,
        checks: checks.clone(),
    };
    let json_path = stem.with_extension("json");
    let json = serde_json::to_string_pretty(&summary).map_err(|e| io_failure(&json_path, e))?;
    fs::write(&json_path, json).map_err(|e| io_failure(&json_path, e))?;
    let _ = writeln!(
        out,
        "{} alpha={} kernel={} transport={} limit={} target={} rel_error={:e} converged={}",
        report.experiment_id,
        report.alpha,
        report.kernel_id,
        report.transport_id,
        report.limit,
        report.target,
        report.relative_error,
        report.converged
    );
    for (name, ok) in &checks {
        let _ = writeln!(out, "  {name}: {}", if *ok { "pass" } else { "FAIL" });
    }
    let _ = writeln!(
        out,
        "wrote {} and {}",
        csv_path.display(),
        json_path.display()
    );
    Ok(if checks.iter().all(|c| c.1) {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

/// One row of the check-suite CSV.
#[derive(Clone, Debug, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub quantity: String,
    pub eps: f64,
    pub value: f64,
    pub fitted_slope: f64,
    pub pass: bool,
}

/// Outcome of a named check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub check: String,
    pub quantity: String,
    pub detail: String,
    pub pass: bool,
    pub rows: Vec<CheckRow>,
}

fn from_admissibility(check: &str, r: &AdmissibilityReport) -> CheckOutcome {
    let id = r.condition_id();
    CheckOutcome {
        check: check.into(),
        quantity: id.clone(),
        detail: format!("slope {:.4}", r.fitted_slope),
        pass: r.pass,
        rows: r
            .measured
            .iter()
            .map(|(e, v)| CheckRow {
                check: check.into(),
                quantity: id.clone(),
                eps: *e,
                value: *v,
                fitted_slope: r.fitted_slope,
                pass: r.pass,
            })
            .collect(),
    }
}

fn from_fit(check: &str, r: &OrderFitReport) -> CheckOutcome {
    CheckOutcome {
        check: check.into(),
        quantity: r.quantity_id.clone(),
        detail: format!(
            "slope {:.4} (claimed {:?} {} ± {})",
            r.slope, r.claim, r.claimed_order, r.tolerance
        ),
        pass: r.pass,
        rows: r
            .samples
            .iter()
            .map(|(e, v)| CheckRow {
                check: check.into(),
                quantity: r.quantity_id.clone(),
                eps: *e,
                value: *v,
                fitted_slope: r.slope,
                pass: r.pass,
            })
            .collect(),
    }
}

fn simple(
    check: &str,
    quantity: &str,
    detail: String,
    pass: bool,
    rows: Vec<(f64, f64)>,
) -> CheckOutcome {
    CheckOutcome {
        check: check.into(),
        quantity: quantity.into(),
        detail,
        pass,
        rows: rows
            .into_iter()
            .map(|(eps, value)| CheckRow {
                check: check.into(),
                quantity: quantity.into(),
                eps,
                value,
                fitted_slope: f64::NAN,
                pass,
            })
            .collect(),
    }
}

/// Effective order at which the kernel reproduces smooth fields.
fn effective_order(cfg: &ExperimentConfig) -> usize {
    if cfg.kernel.shift == [0.0, 0.0] {
        cfg.kernel.moment_order
    } else {
        1
    }
}

/// Runs the selected checks of a suite.
pub fn run_checks(cfg: &ChecksConfig) -> Result<Vec<CheckOutcome>> {
    let exp_cfg = &cfg.experiment;
    let experiment = Experiment::new(exp_cfg)?;
    let schedule = experiment.schedule().to_vec();
    let annulus = Region::annulus(exp_cfg.annulus.r_in, exp_cfg.annulus.r_out);
    let kernel = experiment.kernel().clone();
    let transport = exp_cfg.transport.build(schedule[0])?;
    let quad = DiscQuadrature::new(exp_cfg.quadrature)?;
    let q = effective_order(exp_cfg);
    let mut outcomes = Vec::new();
    for kind in &cfg.checks {
        match kind {
            CheckKind::Kernel => {
                let opts = TestObjectOptions {
                    certify_order: cfg.certify_order,
                    quadrature: exp_cfg.quadrature,
                    ..Default::default()
                };
                for r in check_test_object_with(&kernel, &annulus, &schedule, &opts)? {
                    outcomes.push(from_admissibility("kernel", &r));
                }
            }
            CheckKind::Transport => {
                let orders: Vec<u32> = match &exp_cfg.transport {
                    TransportSpec::Identity => vec![1, 2, 3, 4],
                    TransportSpec::Perturbed { order, .. } => (1..=*order).collect(),
                };
                let opts = crate::transport::AdmissibleOptions {
                    support_constant: kernel.support_constant(),
                    ..Default::default()
                };
                for r in
                    check_admissible_with(transport.base(), &annulus, &schedule, &orders, &opts)?
                {
                    outcomes.push(from_admissibility("transport", &r));
                }
            }
            CheckKind::Negligibility => {
                let points = annulus.samples(2, 6);
                let tol = if q >= 4 { 0.4 } else { 0.3 };
                let r = embed_negligibility_order(
                    &TensorField::SmoothTest,
                    &kernel,
                    &transport,
                    &quad,
                    &points,
                    &schedule,
                    q as f64,
                    tol,
                )?;
                outcomes.push(from_fit("negligibility", &r));
            }
            CheckKind::Pullback => {
                let eps = schedule[schedule.len() / 2];
                let points = Region::Disc { radius: 0.3 }.samples(2, 5);
                let field = crate::fields::conical_metric(exp_cfg.alpha)?;
                let maps = [
                    (
                        "rotation-pi/4",
                        AffineMap::rotation(std::f64::consts::FRAC_PI_4),
                    ),
                    ("rotation-2", AffineMap::rotation(2.0)),
                    ("scaling-2", AffineMap::scaling(2.0)?),
                    ("scaling-0.5", AffineMap::scaling(0.5)?),
                ];
                for (name, map) in maps {
                    let gap = pullback_commutation_check(
                        &map,
                        &field,
                        &kernel,
                        transport.base(),
                        &quad,
                        &points,
                        eps,
                    )?;
                    outcomes.push(simple(
                        "pullback",
                        name,
                        format!("max discrepancy {gap:e}"),
                        gap < 1e-8,
                        vec![(eps, gap)],
                    ));
                }
            }
            CheckKind::DetBounds => {
                let kappa = cfg
                    .kappa
                    .unwrap_or((0.5 * exp_cfg.alpha * exp_cfg.alpha).min(0.3));
                let r = experiment.det_bounds_check(
                    kappa,
                    &Region::Disc {
                        radius: exp_cfg.lambda,
                    },
                )?;
                outcomes.push(CheckOutcome {
                    check: "det-bounds".into(),
                    quantity: format!("kappa-{kappa}"),
                    detail: format!("bounds [{}, {}], eps0 = {:?}", r.lower, r.upper, r.eps0),
                    pass: r.pass,
                    rows: r
                        .rows
                        .iter()
                        .flat_map(|row| {
                            [("det-min", row.det_min), ("det-max", row.det_max)].map(|(n, v)| {
                                CheckRow {
                                    check: "det-bounds".into(),
                                    quantity: n.into(),
                                    eps: row.eps,
                                    value: v,
                                    fitted_slope: f64::NAN,
                                    pass: row.pass,
                                }
                            })
                        })
                        .collect(),
                });
            }
            CheckKind::Taylor => {
                for idx in [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1]] {
                    if idx[0] + idx[1] >= q {
                        continue;
                    }
                    let r = experiment.taylor_estimate_check(idx, q)?;
                    let name = format!("taylor-ratio-{}{}", idx[0], idx[1]);
                    outcomes.push(simple(
                        "taylor",
                        &name,
                        format!("max ratio {:.4}, growth {:.4}", r.max_ratio, r.spread),
                        r.stable,
                        r.per_eps_max.clone(),
                    ));
                    outcomes.push(from_fit("taylor", &r.pointwise));
                }
            }
            CheckKind::AnnulusDecay => {
                let r = experiment.annulus_decay_check(q)?;
                outcomes.push(from_fit("annulus-decay", &r.eps_slope));
                outcomes.push(from_fit("annulus-decay", &r.radial_slope));
                outcomes.push(from_fit("annulus-decay", &r.origin_moderateness));
            }
            CheckKind::DeltaProduct => outcomes.extend(delta_outcomes(&schedule)?),
        }
    }
    Ok(outcomes)
}

fn delta_outcomes(schedule: &[f64]) -> Result<Vec<CheckOutcome>> {
    let profile = make_polynomial_profile(1, 2)?;
    let r = delta_product_demo(&profile, schedule, unit_bump_1d)?;
    Ok(vec![
        simple(
            "delta-product",
            "cross",
            "pointwise product of the shifted nets".into(),
            r.cross_identically_zero,
            r.rows.iter().map(|row| (row.eps, row.cross)).collect(),
        ),
        from_fit("delta-product", &r.self_slope),
    ])
}

fn write_checks_csv(outcomes: &[CheckOutcome], path: &Path) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(["schema", CHECKS_SCHEMA, &SCHEMA_VERSION.to_string()])
        .map_err(csv_err)?;
    w.write_record(["check", "quantity", "eps", "value", "fitted_slope", "pass"])
        .map_err(csv_err)?;
    for o in outcomes {
        for r in &o.rows {
            w.write_record([
                r.check.clone(),
                r.quantity.clone(),
                r.eps.to_string(),
                r.value.to_string(),
                r.fitted_slope.to_string(),
                r.pass.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn print_outcomes(outcomes: &[CheckOutcome], out: &mut dyn Write) {
    for o in outcomes {
        let _ = writeln!(
            out,
            "[{}] {}/{}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.check,
            o.quantity,
            o.detail
        );
    }
}

fn cmd_checks(args: &ChecksArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    if args.demo == Some(DemoKind::DeltaProduct) {
        return demo_delta_product(args.out.as_deref(), out);
    }
    let path = args.experiment.config.as_deref();
    let (mut cfg, text): (ChecksConfig, _) = read_config(path)?;
    apply_flags(&mut cfg.experiment, &args.experiment)?;
    if args.certify_order.is_some() {
        cfg.certify_order = args.certify_order;
    }
    let source = path.zip(text.as_deref());
    build_experiment(&cfg.experiment, source)?;
    let outcomes = run_checks(&cfg).map_err(|e| with_location(e, source))?;
    print_outcomes(&outcomes, out);
    if let Some(p) = &args.out {
        write_checks_csv(&outcomes, p)?;
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    let _ = writeln!(out, "{} checks, {failed} failed", outcomes.len());
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILED })
}

fn demo_delta_product(file: Option<&Path>, out: &mut dyn Write) -> Result<i32, Failure> {
    let schedule = crate::fit::geometric_schedule(0.08, 0.7, 10);
    let profile = make_polynomial_profile(1, 2)?;
    let r = delta_product_demo(&profile, &schedule, unit_bump_1d)?;
    let _ = writeln!(out, "eps,cross,self_product,self_product_unit");
    for row in &r.rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.eps, row.cross, row.self_product, row.self_product_unit
        );
    }
    let _ = writeln!(
        out,
        "cross identically zero: {}; self-product slope {:.4} (expected -1 ± {})",
        r.cross_identically_zero, r.self_slope.slope, r.self_slope.tolerance
    );
    if let Some(p) = file {
        let outcomes = delta_outcomes(&schedule)?;
        write_checks_csv(&outcomes, p)?;
    }
    Ok(if r.cross_identically_zero && r.self_slope.pass {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

/// One line of the consolidated report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub experiment_id: String,
    pub alpha: f64,
    pub kernel_id: String,
    pub transport_id: String,
    pub limit: f64,
    pub target: f64,
    pub relative_error: f64,
    /// Fitted order of the successive differences of `I(ε)`, if usable.
    pub order: Option<f64>,
    pub max_gb_residual: f64,
}

fn schema_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Schema {
        file: path.display().to_string(),
        message: message.into(),
    }
}

fn read_associate_csv(path: &Path) -> Result<Option<SummaryRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| schema_error(path, e.to_string()))?;
    let mut records = rdr.records();
    let head = records
        .next()
        .ok_or_else(|| schema_error(path, "empty file"))?
        .map_err(|e| schema_error(path, e.to_string()))?;
    if head.get(0) != Some("schema") || head.len() != 3 {
        return Err(schema_error(path, "missing schema header row"));
    }
    let (name, version) = (head.get(1).unwrap_or(""), head.get(2).unwrap_or(""));
    if version != SCHEMA_VERSION.to_string() {
        return Err(schema_error(
            path,
            format!("schema {name} version {version}, expected {SCHEMA_VERSION}"),
        ));
    }
    match name {
        ASSOCIATE_SCHEMA => {}
        CHECKS_SCHEMA => return Ok(None),
        other => return Err(schema_error(path, format!("unknown schema {other}"))),
    }
    let header = records
        .next()
        .ok_or_else(|| schema_error(path, "missing column header"))?
        .map_err(|e| schema_error(path, e.to_string()))?;
    let expected = [
        "experiment_id",
        "alpha",
        "kernel_id",
        "transport_id",
        "eps",
        "I",
        "I1",
        "gb_residual",
        "det_min",
        "det_max",
        "clamp_active",
    ];
    if header.iter().ne(expected.iter().copied()) {
        return Err(schema_error(path, "unexpected columns"));
    }
    let mut eps = Vec::new();
    let mut values = Vec::new();
    let mut gb: f64 = 0.0;
    let mut meta = None;
    for (line, rec) in records.enumerate() {
        let rec = rec.map_err(|e| schema_error(path, e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| {
                    schema_error(
                        path,
                        format!("row {}: bad number in column {}", line + 3, expected[i]),
                    )
                })
        };
        eps.push(num(4)?);
        values.push(num(5)?);
        gb = gb.max(num(7)?);
        if meta.is_none() {
            meta = Some((
                rec[0].to_string(),
                num(1)?,
                rec[2].to_string(),
                rec[3].to_string(),
            ));
        }
    }
    let Some((experiment_id, alpha, kernel_id, transport_id)) = meta else {
        return Err(schema_error(path, "no data rows"));
    };
    let ex = richardson(&eps, &values);
    let omega0 = read_omega_at_origin(&path.with_extension("json")).unwrap_or(1.0);
    let target = 4.0 * std::f64::consts::PI * (1.0 - alpha) * omega0;
    let relative_error = if target != 0.0 {
        (ex.limit - target).abs() / target.abs()
    } else {
        ex.limit.abs()
    };
    Ok(Some(SummaryRow {
        experiment_id,
        alpha,
        kernel_id,
        transport_id,
        limit: ex.limit,
        target,
        relative_error,
        order: ex.order,
        max_gb_residual: gb,
    }))
}

fn read_omega_at_origin(path: &Path) -> Option<f64> {
    let text = fs::read_to_string(path).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    v.get("report")?.get("omega_at_origin")?.as_f64()
}

/// Consolidates every associate CSV in `dir`, in file-name order.
pub fn consolidate(dir: &Path) -> Result<Vec<SummaryRow>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut rows = Vec::new();
    for f in &files {
        if let Some(row) = read_associate_csv(f)? {
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(Error::Config(format!(
            "no associate results in {}",
            dir.display()
        )));
    }
    Ok(rows)
}

fn cmd_report(dir: &Path, file: Option<&Path>, out: &mut dyn Write) -> Result<i32, Failure> {
    let rows = consolidate(dir)?;
    let _ = writeln!(out, "experiment_id,alpha,kernel_id,transport_id,limit,target,relative_error,order,max_gb_residual");
    let line = |r: &SummaryRow| {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            r.experiment_id,
            r.alpha,
            r.kernel_id,
            r.transport_id,
            r.limit,
            r.target,
            r.relative_error,
            r.order.map(|o| o.to_string()).unwrap_or_default(),
            r.max_gb_residual
        )
    };
    for r in &rows {
        let _ = writeln!(out, "{}", line(r));
    }
    if let Some(p) = file {
        let mut text = String::from("experiment_id,alpha,kernel_id,transport_id,limit,target,relative_error,order,max_gb_residual\n");
        for r in &rows {
            text.push_str(&line(r));
            text.push('\n');
        }
        fs::write(p, text).map_err(|e| io_failure(p, e))?;
    }
    Ok(EXIT_OK)
}
