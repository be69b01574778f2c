mod spec;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use usrd_core::report::{compare_samplers_with, sampler_bounds, sweep, write_csv, ComparisonReport, PointStatus, SamplerSpec};
use usrd_core::sim::{simulate_fs_ml, simulate_irs_phase1, simulate_mrs_signaling, SimError, SimReport};
use usrd_core::{ModelError, Setting, SourceModel, TOL_GAP};

use spec::{parse_lengths, GridSpec, SamplerArg};

const EXIT_MODEL: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_SIM: u8 = 4;
const EXIT_VIOLATION: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "usrd", version, about = "Sampling rate-distortion solvers for ambiguous multiple sources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print (Δ_min, Δ_max) per sampler and setting.
    Bounds(BoundsArgs),
    /// Sweep one sampler over a distortion grid.
    Curve(CurveArgs),
    /// Monte Carlo error of the parameter-estimation phase.
    Simulate(SimulateArgs),
    /// Compare best fixed-set, independent and memoryless sampling.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SettingArg {
    Bayes,
    Nonbayes,
}

impl From<SettingArg> for Setting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::Bayes => Setting::Bayes,
            SettingArg::Nonbayes => Setting::NonBayes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    model: PathBuf,
    /// Number of components sampled per instant; defaults to 1.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[command(flatten)]
    common: Common,
    /// Limit to one sampler; all fixed sets plus irs and mrs otherwise.
    #[arg(long)]
    sampler: Option<SamplerArg>,
    /// Limit to one setting; both otherwise.
    #[arg(long, value_enum)]
    setting: Option<SettingArg>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Args)]
struct CurveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    sampler: SamplerArg,
    #[arg(long, value_enum, default_value = "bayes")]
    setting: SettingArg,
    /// min:max:count, a comma list, or auto.
    #[arg(long, default_value = "auto")]
    delta: GridSpec,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    sampler: SamplerArg,
    /// Label of the true parameter; the first one by default.
    #[arg(long)]
    tau: Option<String>,
    /// Comma-separated blocklengths.
    #[arg(long, default_value = "20,200,2000")]
    n: String,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    setting: Option<SettingArg>,
    #[arg(long, default_value = "auto")]
    delta: GridSpec,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Negative ordering tolerance; forces violations. For testing the exit path.
    #[arg(long, hide = true)]
    corrupt_tolerance: bool,
}

/// Error carrying a specific exit code.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn exit_with(code: u8, msg: impl Into<String>) -> anyhow::Error {
    Exit(code, msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::Bounds(a) => cmd_bounds(a),
        Command::Curve(a) => cmd_curve(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.downcast_ref::<Exit>().map_or(1, |x| x.0))
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("USRD_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().with_context(|| format!("USRD_THREADS={v:?} is not a count"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn load(path: &Path) -> Result<SourceModel> {
    // The error's message already leads with its variant name.
    SourceModel::from_path(path).map_err(|e: ModelError| exit_with(EXIT_MODEL, e.to_string()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn k_for(common: &Common, spec: Option<&SamplerSpec>, model: &SourceModel) -> Result<usize> {
    let k = match (spec, common.k) {
        (Some(SamplerSpec::Fixed(a)), Some(k)) if k != a.len() => {
            return Err(anyhow!("--k {k} disagrees with the {}-element set {a}", a.len()));
        }
        (Some(SamplerSpec::Fixed(a)), _) => a.len(),
        (_, Some(k)) => k,
        (_, None) => 1,
    };
    if k == 0 || k > model.m() {
        return Err(anyhow!("k must lie in 1..={}", model.m()));
    }
    Ok(k)
}

fn settings(arg: Option<SettingArg>) -> Vec<Setting> {
    arg.map_or(vec![Setting::Bayes, Setting::NonBayes], |s| vec![s.into()])
}

struct BoundsRow {
    sampler: String,
    setting: Setting,
    k: usize,
    delta_min: f64,
    delta_max: f64,
}

fn cmd_bounds(args: BoundsArgs) -> Result<()> {
    let model = load(&args.common.model)?;
    let chosen = args.sampler.as_ref().map(|s| s.resolve(&model)).transpose()?;
    let k = k_for(&args.common, chosen.as_ref(), &model)?;
    let specs = match chosen {
        Some(s) => vec![s],
        None => model.k_subsets(k).into_iter().map(SamplerSpec::Fixed).chain([SamplerSpec::Independent, SamplerSpec::Memoryless]).collect(),
    };
    let mut rows = Vec::new();
    for spec in &specs {
        for s in settings(args.setting) {
            let (lo, hi) = sampler_bounds(&model, spec, k, s)?;
            rows.push(BoundsRow { sampler: spec.to_string(), setting: s, k, delta_min: lo, delta_max: hi });
        }
    }
    let mut out = output(args.common.out.as_deref())?;
    match args.format {
        Format::Json => {
            let doc: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "sampler": r.sampler,
                        "setting": r.setting.to_string(),
                        "k": r.k,
                        "delta_min": r.delta_min,
                        "delta_max": r.delta_max,
                    })
                })
                .collect();
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?
        }
        Format::Csv => {
            writeln!(out, "sampler,setting,k,delta_min,delta_max")?;
            for r in &rows {
                writeln!(out, "\"{}\",{},{},{:.12},{:.12}", r.sampler, r.setting, r.k, r.delta_min, r.delta_max)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_curve(args: CurveArgs) -> Result<()> {
    let model = load(&args.common.model)?;
    let spec = args.sampler.resolve(&model)?;
    let k = k_for(&args.common, Some(&spec), &model)?;
    let setting: Setting = args.setting.into();
    let bounds = sampler_bounds(&model, &spec, k, setting)?;
    let curve = sweep(&model, &spec, k, setting, &args.delta.points(bounds))?;
    let mut out = output(args.common.out.as_deref())?;
    match args.format {
        Format::Csv => write_csv(&mut out, [&curve])?,
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&curve)?)?,
    }
    out.flush()?;
    if curve.is_all_infeasible() {
        return Err(exit_with(EXIT_INFEASIBLE, format!("every grid point lies below Δ_min = {:.6} for {spec} ({setting})", bounds.0)));
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let model = load(&args.common.model)?;
    let spec = args.sampler.resolve(&model)?;
    let k = k_for(&args.common, Some(&spec), &model)?;
    let tau = match &args.tau {
        None => 0,
        Some(label) => model
            .theta_labels()
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| exit_with(EXIT_SIM, format!("no parameter labelled {label:?}")))?,
    };
    let ns = parse_lengths(&args.n)?;
    let result = match &spec {
        SamplerSpec::Fixed(a) => simulate_fs_ml(&model, a, tau, &ns, args.trials, args.seed),
        SamplerSpec::Independent => simulate_irs_phase1(&model, k, tau, &ns, args.trials, args.seed),
        SamplerSpec::Memoryless => simulate_mrs_signaling(&model, k, tau, &ns, args.trials, args.seed),
        SamplerSpec::BestFixed => unreachable!("not selectable from the command line"),
    };
    let report: SimReport = result.map_err(|e: SimError| exit_with(EXIT_SIM, e.to_string()))?;
    let mut out = output(args.common.out.as_deref())?;
    match args.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
        Format::Csv => {
            writeln!(out, "n,effective_n,errors,trials,error_rate")?;
            for i in 0..report.blocklengths.len() {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    report.blocklengths[i], report.effective_lengths[i], report.error_counts[i], report.trials, report.error_rates[i]
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let model = load(&args.common.model)?;
    let k = k_for(&args.common, None, &model)?;
    let chosen = args.setting.map(Setting::from);
    let grid = match args.delta {
        GridSpec::Auto => {
            // Span every class's range so each curve shows its boundaries.
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for s in settings(args.setting) {
                for spec in [SamplerSpec::BestFixed, SamplerSpec::Independent, SamplerSpec::Memoryless] {
                    let (l, h) = sampler_bounds(&model, &spec, k, s)?;
                    lo = lo.min(l);
                    hi = hi.max(h);
                }
            }
            args.delta.points((lo, hi))
        }
        ref g => g.points((0.0, 0.0)),
    };
    let tol = if args.corrupt_tolerance { -1.0 } else { TOL_GAP };
    let report: ComparisonReport = compare_samplers_with(&model, k, chosen, &grid, tol)?;
    let mut out = output(args.common.out.as_deref())?;
    match args.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
        Format::Csv => write_csv(&mut out, &report.curves)?,
    }
    out.flush()?;
    if report.curves.iter().all(|c| c.points.iter().all(|p| p.status == PointStatus::Infeasible)) {
        return Err(exit_with(EXIT_INFEASIBLE, "every grid point is infeasible for every sampler"));
    }
    if !report.violations.is_empty() {
        let worst = report.violations.iter().map(|v| v.magnitude).fold(0.0, f64::max);
        return Err(exit_with(EXIT_VIOLATION, format!("{} property violations (largest {worst:.3e} bits)", report.violations.len())));
    }
    Ok(())
}
