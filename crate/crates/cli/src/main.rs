use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use causal_audit::atlas::{generate_atlas, read_atlas, write_atlas};
use causal_audit::eval::{benchmark_config, calibrate_entries, evaluate_fixtures, run_benchmark_entries, BenchmarkOptions};
use causal_audit::{
    audit, compute_risk_profile, decide, load_series, AuditConfig, AuditError, Result, RiskModels, RiskProfile,
    SeriesFormat,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

pub const AUDIT_EVIDENCE: &str = "audit_evidence.json";
pub const RISK_PROFILE: &str = "risk_profile.json";
pub const RECOMMENDATION_POLICY: &str = "recommendation_policy.json";

#[derive(Parser)]
#[command(name = "causal-audit", version, about = "Audit time series before running causal discovery")]
struct Cli {
    /// Print progress to stderr (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Diagnose one series and write evidence, risk profile and recommendation.
    Audit(AuditArgs),
    /// Generate the synthetic benchmark atlas.
    GenerateAtlas(AtlasArgs),
    /// Fit risk models on the calibration split of an atlas.
    Calibrate(CalibrateArgs),
    /// Score calibration and decisions on the holdout split of an atlas.
    Evaluate(EvaluateArgs),
    /// Decide from a risk profile, or run the literal decision fixtures.
    Decide(DecideArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Overrides applied on top of the YAML config.
#[derive(Args)]
struct ConfigArgs {
    /// YAML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bootstrap seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bootstrap_iterations: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Seasonal period in timestamp units.
    #[arg(long)]
    period_hint: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self, base: AuditConfig) -> Result<AuditConfig> {
        let mut cfg = match &self.config {
            Some(p) => AuditConfig::load(p)?,
            None => base,
        };
        if let Some(s) = self.seed {
            cfg.bootstrap_seed = s;
        }
        if let Some(b) = self.bootstrap_iterations {
            cfg.bootstrap_iterations = b;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(p) = self.period_hint {
            cfg.period_hint = Some(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct AuditArgs {
    /// Series file: CSV with a leading time column, or the JSON matrix format.
    series: PathBuf,
    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Calibration YAML from `calibrate`; uncalibrated default models otherwise.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct AtlasArgs {
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    per_family: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long, default_value_t = 7)]
    split_seed: u64,
    #[arg(long, default_value_t = 0.2)]
    holdout_fraction: f64,
    /// Worker threads for Stage I; all available cores when omitted.
    #[arg(long)]
    threads: Option<usize>,
}

impl SplitArgs {
    fn options(&self) -> BenchmarkOptions {
        BenchmarkOptions {
            split_seed: self.split_seed,
            holdout_fraction: self.holdout_fraction,
            threads: self.threads,
            ..BenchmarkOptions::default()
        }
    }
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    atlas: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    atlas: PathBuf,
    /// Score the holdout with these models instead of refitting on the calibration split.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Reliability-diagram bins as CSV.
    #[arg(long)]
    bins_csv: Option<PathBuf>,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct DecideArgs {
    /// Full `risk_profile.json`, or `{"nonstat", "irreg", "persist", "confound", "t_eff_ratio"}` point risks.
    #[arg(long, required_unless_present = "fixtures")]
    risk_profile: Option<PathBuf>,
    /// Run the built-in decision fixtures instead.
    #[arg(long, conflicts_with = "risk_profile")]
    fixtures: bool,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PointProfile {
    nonstat: f64,
    irreg: f64,
    persist: f64,
    confound: f64,
    #[serde(default = "one")]
    t_eff_ratio: f64,
}

fn one() -> f64 {
    1.0
}

fn parse_profile(text: &str) -> Result<RiskProfile> {
    if let Ok(p) = serde_json::from_str::<PointProfile>(text) {
        let profile = RiskProfile::from_points([p.nonstat, p.irreg, p.persist, p.confound], p.t_eff_ratio);
        profile.validate()?;
        return Ok(profile);
    }
    RiskProfile::from_json_str(text)
}

fn tmp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
    path.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}

/// Write every file to a temporary sibling first, then rename into place.
fn write_all_atomic(files: &[(PathBuf, String)]) -> Result<()> {
    let mut written = Vec::new();
    for (path, text) in files {
        let tmp = tmp_path(path);
        if let Err(e) = fs::write(&tmp, text) {
            for t in &written {
                let _ = fs::remove_file(t);
            }
            return Err(e.into());
        }
        written.push(tmp);
    }
    for ((path, _), tmp) in files.iter().zip(&written) {
        fs::rename(tmp, path)?;
    }
    Ok(())
}

fn log(verbose: u8, level: u8, msg: impl FnOnce() -> String) {
    if verbose >= level {
        eprintln!("{}", msg());
    }
}

fn run_audit(args: &AuditArgs, verbose: u8) -> Result<()> {
    let config = args.config.resolve(AuditConfig::default())?;
    let models = match &args.calibration {
        Some(p) => RiskModels::load(p)?,
        None => RiskModels::default(),
    };
    let format = match args.format {
        Some(Format::Csv) => SeriesFormat::CsvWithTimeColumn,
        Some(Format::Json) => SeriesFormat::JsonMatrix,
        None => SeriesFormat::from_path(&args.series),
    };
    let series = load_series(&args.series, format)?;
    log(verbose, 1, || format!("loaded {} rows x {} columns", series.n_rows(), series.n_cols()));
    let report = audit(&series, &config)?;
    let profile = compute_risk_profile(&report, &models, &config)?;
    let decision = decide(&profile, &config.catalog, &config)?;
    log(verbose, 1, || match &decision.method {
        Some(m) => format!("recommend {m}"),
        None => "abstain".into(),
    });
    fs::create_dir_all(&args.out)?;
    write_all_atomic(&[
        (args.out.join(AUDIT_EVIDENCE), report.to_json_string()?),
        (args.out.join(RISK_PROFILE), profile.to_json_string()?),
        (args.out.join(RECOMMENDATION_POLICY), decision.to_json_string()?),
    ])
}

fn run_generate(args: &AtlasArgs, verbose: u8) -> Result<()> {
    let entries = generate_atlas(args.seed, args.per_family)?;
    log(verbose, 1, || format!("generated {} datasets", entries.len()));
    let out = &args.out;
    if out.exists() && !out.join(causal_audit::atlas::MANIFEST_FILE).exists() && fs::read_dir(out)?.next().is_some() {
        return Err(AuditError::InvalidInput(format!(
            "{} exists and is not an atlas directory",
            out.display()
        )));
    }
    let tmp = tmp_path(out);
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    if let Err(e) = write_atlas(&tmp, &entries, Some(args.seed)) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if out.exists() {
        fs::remove_dir_all(out)?;
    }
    fs::rename(&tmp, out)?;
    Ok(())
}

fn run_calibrate(args: &CalibrateArgs, verbose: u8) -> Result<()> {
    let config = args.config.resolve(benchmark_config())?;
    let entries = read_atlas(&args.atlas)?;
    log(verbose, 1, || format!("auditing {} datasets", entries.len()));
    let models = calibrate_entries(&entries, &config, &args.split.options())?;
    write_all_atomic(&[(args.out.clone(), models.to_yaml_string()?)])
}

fn run_evaluate(args: &EvaluateArgs, verbose: u8) -> Result<()> {
    let config = args.config.resolve(benchmark_config())?;
    let mut options = args.split.options();
    if let Some(p) = &args.calibration {
        options.models = Some(RiskModels::load(p)?);
    }
    let entries = read_atlas(&args.atlas)?;
    log(verbose, 1, || format!("auditing {} datasets", entries.len()));
    let report = run_benchmark_entries(&entries, &config, &options)?;
    log(verbose, 1, || {
        let s = &report.selective;
        format!(
            "coverage {:.2}, selective FPR {:?} vs always-run {:?}",
            s.default.coverage, s.default.selective_fpr, s.always_run.selective_fpr
        )
    });
    let mut files = vec![(args.out.clone(), report.to_json_string()?)];
    if let Some(p) = &args.bins_csv {
        files.push((p.clone(), report.bins_csv()?));
    }
    write_all_atomic(&files)
}

fn run_decide(args: &DecideArgs) -> Result<()> {
    let config = args.config.resolve(AuditConfig::default())?;
    let text = if args.fixtures {
        serde_json::to_string_pretty(&evaluate_fixtures(&config)?)?
    } else {
        let path = args.risk_profile.as_ref().expect("clap enforces --risk-profile");
        let profile = parse_profile(&fs::read_to_string(path)?)?;
        decide(&profile, &config.catalog, &config)?.to_json_string()?
    };
    match &args.out {
        Some(p) => write_all_atomic(&[(p.clone(), text)]),
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Audit(a) => run_audit(a, cli.verbose),
        Command::GenerateAtlas(a) => run_generate(a, cli.verbose),
        Command::Calibrate(a) => run_calibrate(a, cli.verbose),
        Command::Evaluate(a) => run_evaluate(a, cli.verbose),
        Command::Decide(a) => run_decide(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
