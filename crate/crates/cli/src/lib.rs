//! Subcommands of the `cip` binary.
//!
//! Every command renders its full output as a string so the binary, the tests
//! and the reproducibility checks all go through the same code.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cip::calibrate::{self, AuditOptions, DEFAULT_AUDIT_CAP};
use cip::gp::{self, Partition};
use cip::kernel::{build_covariance, CovarianceMatrix, KernelSpec};
use cip::mechanism::{self, MechanismSpec};
use cip::privacy::{self, LossReport, PrivacyBudget};
use cip::trace_io::{self, Format, Trace};
use cip::verify::{self, McConfig, OddsDirection};
use cip::CipError;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CipError> for CliError {
    fn from(e: CipError) -> Self {
        CliError {
            code: if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_USAGE },
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "cip", version, about = "Conditional inferential privacy for location traces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Smallest noise variance meeting the budget.
    Calibrate(CalibrateArgs),
    /// Worst-case loss over (l, sigma_z2) grids, with the independent-points baseline (CSV).
    LossCurve(LossCurveArgs),
    /// Worst-case discriminative pair for one prior and noise level (JSON).
    WorstPair(WorstPairArgs),
    /// Release a trace through the Gaussian mechanism.
    Sanitize(SanitizeArgs),
    /// Worst-case loss over every subsequence containing one point (JSON).
    Audit(AuditArgs),
    /// Monte Carlo check of a closed-form loss (JSON).
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TraceArgs {
    /// Trace file with columns t,x (CSV or JSON).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Trace file format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FileFormat>,
    /// Number of points of a synthetic, evenly spaced trace.
    #[arg(long)]
    pub d: Option<usize>,
    /// Time step of the synthetic trace.
    #[arg(long, default_value_t = 1.0)]
    pub spacing: f64,
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    /// Prior variance of every point.
    #[arg(long = "sigma-x2", default_value_t = 1.0)]
    pub sigma_x2: f64,
    /// Largest RBF length scale in the prior class.
    #[arg(long = "l-max")]
    pub l_max: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct BudgetArgs {
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Per-point privacy radius.
    #[arg(long)]
    pub r: Option<f64>,
    /// Rényi order (> 1).
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FileFormat {
    Csv,
    Json,
}

impl From<FileFormat> for Format {
    fn from(f: FileFormat) -> Self {
        match f {
            FileFormat::Csv => Format::Csv,
            FileFormat::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CalibrationTarget {
    /// The subsequence given by --partition.
    Designated,
    /// Every subsequence containing --point.
    Audit,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub trace: TraceArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// `every-other`, `first-half`, or a comma-separated index list.
    #[arg(long)]
    pub partition: Option<String>,
    #[arg(long, value_enum, default_value_t = CalibrationTarget::Designated)]
    pub target: CalibrationTarget,
    /// Point whose subsequences are audited (with --target audit).
    #[arg(long)]
    pub point: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_AUDIT_CAP)]
    pub cap: usize,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LossCurveArgs {
    #[command(flatten)]
    pub trace: TraceArgs,
    #[arg(long = "sigma-x2", default_value_t = 1.0)]
    pub sigma_x2: f64,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// `every-other`, `first-half`, or a comma-separated index list.
    #[arg(long)]
    pub partition: Option<String>,
    /// Comma-separated length scales.
    #[arg(long = "l-grid")]
    pub l_grid: Option<String>,
    /// Comma-separated noise variances.
    #[arg(long = "sigma-z2-grid")]
    pub sigma_z2_grid: Option<String>,
    /// `lo,hi,n`: n log-spaced noise variances from lo to hi.
    #[arg(long = "sigma-z2-logspace")]
    pub sigma_z2_logspace: Option<String>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WorstPairArgs {
    #[command(flatten)]
    pub trace: TraceArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Length scale to evaluate; defaults to --l-max.
    #[arg(long)]
    pub l: Option<f64>,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// `every-other`, `first-half`, or a comma-separated index list.
    #[arg(long)]
    pub partition: Option<String>,
    /// Noise variance of the mechanism.
    #[arg(long = "sigma-z2")]
    pub sigma_z2: Option<f64>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SanitizeArgs {
    #[command(flatten)]
    pub trace: TraceArgs,
    /// Noise variance; when omitted it is calibrated from the budget flags.
    #[arg(long = "sigma-z2")]
    pub sigma_z2: Option<f64>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// `every-other`, `first-half`, or a comma-separated index list.
    #[arg(long)]
    pub partition: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Output format; inferred from the output extension when omitted, JSON on stdout.
    #[arg(long = "out-format", value_enum)]
    pub out_format: Option<FileFormat>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub trace: TraceArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long)]
    pub point: Option<usize>,
    /// Noise variance of the mechanism.
    #[arg(long = "sigma-z2")]
    pub sigma_z2: Option<f64>,
    /// Largest trace length that will be enumerated (2^(d-1) subsequences).
    #[arg(long, default_value_t = DEFAULT_AUDIT_CAP)]
    pub cap: usize,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifyMode {
    /// Sample the release distribution in closed form.
    Renyi,
    /// Simulate U | S and the mechanism, then estimate the divergence.
    ReleaseDivergence,
    /// Expected posterior-minus-prior log-odds against its bound.
    OddsGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    UnderSj,
    UnderSi,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = VerifyMode::ReleaseDivergence)]
    pub mode: VerifyMode,
    #[command(flatten)]
    pub trace: TraceArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// `every-other`, `first-half`, or a comma-separated index list.
    #[arg(long)]
    pub partition: Option<String>,
    /// Noise variance of the mechanism.
    #[arg(long = "sigma-z2")]
    pub sigma_z2: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Radius of the default hypothesis pair (`s_i = r v*`, `s_j = 0`).
    #[arg(long)]
    pub r: Option<f64>,
    /// Hypothesis s_i, comma-separated, one value per secret point.
    #[arg(long = "s-i")]
    pub s_i: Option<String>,
    #[arg(long = "s-j")]
    pub s_j: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "n-samples", default_value_t = 1_000_000)]
    pub n_samples: usize,
    /// Cap on importance weights (biases the estimate downward).
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long, value_enum, default_value_t = Direction::UnderSj)]
    pub direction: Direction,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

/// Rendered command output, written to `--output` or stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub body: String,
    pub output: Option<PathBuf>,
}

fn require<T: Copy>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::usage(format!("missing required flag {flag}")))
}

fn require_str<'a>(value: &'a Option<String>, flag: &str) -> CliResult<&'a str> {
    value
        .as_deref()
        .ok_or_else(|| CliError::usage(format!("missing required flag {flag}")))
}

fn parse_list(text: &str, flag: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| CliError::usage(format!("{flag}: cannot parse `{s}`: {e}")))
        })
        .collect()
}

fn logspace(text: &str, flag: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::usage(format!("{flag} expects lo,hi,n")));
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| CliError::usage(format!("{flag}: bad lo")))?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| CliError::usage(format!("{flag}: bad hi")))?;
    let n: usize = parts[2].trim().parse().map_err(|_| CliError::usage(format!("{flag}: bad n")))?;
    if !(lo > 0.0 && hi >= lo && n >= 1) {
        return Err(CliError::usage(format!("{flag} needs 0 < lo <= hi and n >= 1")));
    }
    Ok(log_grid(lo, hi, n))
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| match k {
            0 => lo,
            k if k == n - 1 => hi,
            k => (a + (b - a) * k as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

impl TraceArgs {
    pub fn load(&self) -> CliResult<Trace> {
        match (&self.trace, self.d) {
            (Some(_), Some(_)) => Err(CliError::usage("give either --trace or --d, not both")),
            (None, None) => Err(CliError::usage("missing required flag --trace (or --d for a synthetic trace)")),
            (Some(path), None) => {
                let format = self.format.map(Format::from).unwrap_or_else(|| Format::from_path(path));
                Ok(trace_io::read_trace(path, format)?)
            }
            (None, Some(d)) => Ok(Trace::synthetic(d, self.spacing)?),
        }
    }
}

impl KernelArgs {
    fn l_max(&self) -> CliResult<f64> {
        require(self.l_max, "--l-max")
    }

    fn spec(&self) -> CliResult<KernelSpec> {
        Ok(KernelSpec::rbf_at_max(self.sigma_x2, self.l_max()?)?)
    }
}

impl BudgetArgs {
    fn budget(&self) -> CliResult<PrivacyBudget> {
        let epsilon = require(self.epsilon, "--epsilon")?;
        let r = require(self.r, "--r")?;
        let lambda = require(self.lambda, "--lambda")?;
        Ok(PrivacyBudget::new(epsilon, r, lambda)?)
    }
}

pub fn parse_partition(text: &str, d: usize) -> CliResult<Partition> {
    let part = match text.trim() {
        "every-other" => Partition::every_other(d)?,
        "first-half" => Partition::first_half(d)?,
        list => {
            let idx = list
                .split(',')
                .map(|s| {
                    s.trim().parse::<usize>().map_err(|e| {
                        CliError::usage(format!("--partition: cannot parse index `{s}`: {e}"))
                    })
                })
                .collect::<CliResult<Vec<_>>>()?;
            Partition::new(d, idx)?
        }
    };
    Ok(part)
}

fn partition(arg: &Option<String>, d: usize) -> CliResult<Partition> {
    parse_partition(require_str(arg, "--partition")?, d)
}

fn json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::usage(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> CliResult<Rendered> {
    let budget = args.budget.budget()?;
    let spec = args.kernel.spec()?;
    let trace = args.trace.load()?;
    let t = trace.timestamps();
    let builder = calibrate::class_builder(&t, &spec);
    let result = match args.target {
        CalibrationTarget::Designated => {
            let part = partition(&args.partition, trace.len())?;
            calibrate::calibrate_sigma(builder, &part, &budget, spec.l_max())?
        }
        CalibrationTarget::Audit => {
            let point = require(args.point, "--point")?;
            let opts = AuditOptions {
                cap: args.cap,
                parallel: true,
            };
            calibrate::calibrate_sigma_for_point(builder, point, &budget, spec.l_max(), &opts)?
        }
    };
    Ok(Rendered {
        body: json(&result)?,
        output: args.output.clone(),
    })
}

/// One row of the loss-curve table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub l: f64,
    pub sigma_z2: f64,
    pub l_star: f64,
    pub l_star_gi: f64,
    pub ratio: f64,
}

pub const LOSS_CURVE_HEADER: &str = "l,sigma_z2,L_star,L_star_GI,ratio";

/// Rows in `l` order, then `sigma_z2` order, as given.
pub fn loss_curve_rows(
    trace: &Trace,
    part: &Partition,
    sigma_x2: f64,
    r: f64,
    lambda: f64,
    l_grid: &[f64],
    sigma_grid: &[f64],
) -> CliResult<Vec<CurveRow>> {
    // epsilon does not enter the loss; any valid value will do
    let budget = PrivacyBudget::new(1.0, r, lambda)?;
    let t = trace.timestamps();
    let mut rows = Vec::with_capacity(l_grid.len() * sigma_grid.len());
    for &l in l_grid {
        let cov = build_covariance(&t, &KernelSpec::rbf_at_max(sigma_x2, l)?)?;
        for &s in sigma_grid {
            let rbf = privacy::worst_case_loss(&cov, part, s, &budget)?;
            let gi = privacy::gi_baseline_loss(trace.len(), part, s, &budget)?;
            rows.push(CurveRow {
                l,
                sigma_z2: s,
                l_star: rbf.loss_total,
                l_star_gi: gi.loss_total,
                ratio: rbf.loss_total / gi.loss_total,
            });
        }
    }
    Ok(rows)
}

pub fn render_curve(rows: &[CurveRow]) -> String {
    let mut s = String::from(LOSS_CURVE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{:?},{:?},{:?},{:?},{:?}\n",
            r.l, r.sigma_z2, r.l_star, r.l_star_gi, r.ratio
        ));
    }
    s
}

pub fn cmd_loss_curve(args: &LossCurveArgs) -> CliResult<Rendered> {
    let r = require(args.r, "--r")?;
    let lambda = require(args.lambda, "--lambda")?;
    let l_grid = parse_list(require_str(&args.l_grid, "--l-grid")?, "--l-grid")?;
    let sigma_grid = match (&args.sigma_z2_grid, &args.sigma_z2_logspace) {
        (Some(list), None) => parse_list(list, "--sigma-z2-grid")?,
        (None, Some(spec)) => logspace(spec, "--sigma-z2-logspace")?,
        (Some(_), Some(_)) => {
            return Err(CliError::usage("give either --sigma-z2-grid or --sigma-z2-logspace, not both"))
        }
        (None, None) => {
            return Err(CliError::usage(
                "missing required flag --sigma-z2-grid (or --sigma-z2-logspace)",
            ))
        }
    };
    let trace = args.trace.load()?;
    let part = partition(&args.partition, trace.len())?;
    let rows = loss_curve_rows(&trace, &part, args.sigma_x2, r, lambda, &l_grid, &sigma_grid)?;
    Ok(Rendered {
        body: render_curve(&rows),
        output: args.output.clone(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WorstPairOutput {
    pub secret_indices: Vec<usize>,
    pub secret_timestamps: Vec<f64>,
    #[serde(flatten)]
    pub report: LossReport,
    pub notes: Vec<String>,
}

pub fn worst_pair(
    trace: &Trace,
    spec: &KernelSpec,
    part: &Partition,
    sigma_z2: f64,
    budget: &PrivacyBudget,
) -> CliResult<WorstPairOutput> {
    let t = trace.timestamps();
    let cov = build_covariance(&t, spec)?;
    let report = privacy::worst_case_loss(&cov, part, sigma_z2, budget)?;
    let mut notes = Vec::new();
    if report.maximizer_degenerate == Some(true) {
        notes.push(
            "top eigenvalue of Sigma_eff is repeated: delta_s_star is one of many maximizers".into(),
        );
    }
    if report.linf_feasible == Some(false) {
        notes.push("delta_s_star leaves the per-point L-infinity ball; the loss is an upper bound".into());
    }
    Ok(WorstPairOutput {
        secret_indices: part.secret().to_vec(),
        secret_timestamps: part.secret().iter().map(|&i| t[i]).collect(),
        report,
        notes,
    })
}

pub fn cmd_worst_pair(args: &WorstPairArgs) -> CliResult<Rendered> {
    let l_max = args.kernel.l_max()?;
    let sigma_z2 = require(args.sigma_z2, "--sigma-z2")?;
    let budget = args.budget.budget()?;
    let spec = KernelSpec::rbf(args.kernel.sigma_x2, args.l.unwrap_or(l_max), l_max)?;
    let trace = args.trace.load()?;
    let part = partition(&args.partition, trace.len())?;
    let out = worst_pair(&trace, &spec, &part, sigma_z2, &budget)?;
    Ok(Rendered {
        body: json(&out)?,
        output: args.output.clone(),
    })
}

pub fn cmd_sanitize(args: &SanitizeArgs) -> CliResult<Rendered> {
    let seed = require(args.seed, "--seed")?;
    if args.trace.trace.is_none() {
        return Err(CliError::usage("missing required flag --trace"));
    }
    let spec = match args.sigma_z2 {
        Some(s) => MechanismSpec::new(s, seed)?,
        None => {
            let budget = args.budget.budget().map_err(|e| {
                CliError::usage(format!("{e} (needed to calibrate when --sigma-z2 is absent)"))
            })?;
            let kspec = args.kernel.spec()?;
            let trace = args.trace.load()?;
            let part = partition(&args.partition, trace.len())?;
            let t = trace.timestamps();
            let cal = calibrate::calibrate_sigma(
                calibrate::class_builder(&t, &kspec),
                &part,
                &budget,
                kspec.l_max(),
            )?;
            MechanismSpec::new(cal.sigma_z2, seed)?.with_budget(budget)
        }
    };
    let trace = args.trace.load()?;
    let released = mechanism::sanitize(&trace, &spec)?;
    let format = args
        .out_format
        .map(Format::from)
        .or_else(|| args.output.as_deref().map(Format::from_path))
        .unwrap_or(Format::Json);
    Ok(Rendered {
        body: trace_io::render_sanitized(&released, format)?,
        output: args.output.clone(),
    })
}

pub fn cmd_audit(args: &AuditArgs) -> CliResult<Rendered> {
    let point = require(args.point, "--point")?;
    let sigma_z2 = require(args.sigma_z2, "--sigma-z2")?;
    let budget = args.budget.budget()?;
    let spec = args.kernel.spec()?;
    let trace = args.trace.load()?;
    if trace.len() > args.cap {
        return Err(CipError::AuditCapExceeded {
            d: trace.len(),
            cap: args.cap,
        }
        .into());
    }
    let cov = build_covariance(&trace.timestamps(), &spec)?;
    let opts = AuditOptions {
        cap: args.cap,
        parallel: true,
    };
    let result = calibrate::audit_point(&cov, point, sigma_z2, &budget, &opts)?;
    Ok(Rendered {
        body: json(&result)?,
        output: args.output.clone(),
    })
}

fn hypotheses(
    args: &VerifyArgs,
    cov: &CovarianceMatrix,
    part: &Partition,
    sigma_z2: f64,
) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let k = part.secret_len();
    let s_j = match &args.s_j {
        Some(list) => parse_list(list, "--s-j")?,
        None => vec![0.0; k],
    };
    let s_i = match &args.s_i {
        Some(list) => parse_list(list, "--s-i")?,
        None => {
            let r = args
                .r
                .ok_or_else(|| CliError::usage("missing required flag --s-i (or --r for the default pair)"))?;
            let eff = gp::effective_covariance(cov, part, sigma_z2)?;
            s_j.iter().zip(eff.v_star.iter()).map(|(s, v)| s + r * v).collect()
        }
    };
    for (flag, s) in [("--s-i", &s_i), ("--s-j", &s_j)] {
        if s.len() != k {
            return Err(CliError::usage(format!(
                "{flag} has {} values but the partition has {k} secret points",
                s.len()
            )));
        }
    }
    Ok((s_i, s_j))
}

pub fn cmd_verify(args: &VerifyArgs) -> CliResult<Rendered> {
    let seed = require(args.seed, "--seed")?;
    let sigma_z2 = require(args.sigma_z2, "--sigma-z2")?;
    let lambda = require(args.lambda, "--lambda")?;
    let spec = args.kernel.spec()?;
    let trace = args.trace.load()?;
    let part = partition(&args.partition, trace.len())?;
    let cov = build_covariance(&trace.timestamps(), &spec)?;
    let (s_i, s_j) = hypotheses(args, &cov, &part, sigma_z2)?;
    let mut config = McConfig::new(args.n_samples, seed, lambda)?;
    if let Some(c) = args.clip {
        config = config.with_clip(c);
    }
    let report = match args.mode {
        VerifyMode::Renyi => {
            let (m_i, cov_z) = verify::release_gaussian(&cov, &part, sigma_z2, &s_i)?;
            let (m_j, _) = verify::release_gaussian(&cov, &part, sigma_z2, &s_j)?;
            verify::mc_renyi_divergence(&m_i, &m_j, &cov_z, &config)?
        }
        VerifyMode::ReleaseDivergence => {
            verify::mc_release_divergence(&cov, &part, sigma_z2, &s_i, &s_j, &config)?
        }
        VerifyMode::OddsGap => {
            let direction = match args.direction {
                Direction::UnderSj => OddsDirection::UnderSj,
                Direction::UnderSi => OddsDirection::UnderSi,
            };
            verify::mc_odds_gap(&cov, &part, sigma_z2, &s_i, &s_j, &config, direction)?
        }
    };
    #[derive(Serialize)]
    struct Out<'a> {
        #[serde(flatten)]
        report: &'a verify::VerificationReport,
        s_i: &'a [f64],
        s_j: &'a [f64],
    }
    Ok(Rendered {
        body: json(&Out {
            report: &report,
            s_i: &s_i,
            s_j: &s_j,
        })?,
        output: args.output.clone(),
    })
}

pub fn run(cli: &Cli) -> CliResult<Rendered> {
    match &cli.command {
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::LossCurve(a) => cmd_loss_curve(a),
        Command::WorstPair(a) => cmd_worst_pair(a),
        Command::Sanitize(a) => cmd_sanitize(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

/// Writes to the output path or stdout.
pub fn emit(rendered: &Rendered) -> CliResult<()> {
    match &rendered.output {
        Some(path) => write_file(path, &rendered.body),
        None => {
            print!("{}", rendered.body);
            Ok(())
        }
    }
}

fn write_file(path: &Path, body: &str) -> CliResult<()> {
    std::fs::write(path, body).map_err(|e| {
        CliError::from(CipError::Io {
            path: path.display().to_string(),
            source: e,
        })
    })
}
