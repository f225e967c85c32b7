//! `pgc`: simulate heavy-tailed data with Gaussian dependence, fit the model
//! back, and run tail diagnostics.
//!
//! Exit codes: 0 success, 2 usage/config, 3 data, 4 numerical.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pgc::diagnostics::{exp_qq, hill_series, mc_joint_tail, rho_series, SeriesWithBands};
use pgc::estimation::{fit_pgc_at_level, KPolicy};
use pgc::io::{self, CsvOptions, Dataset};
use pgc::qp::{joint_tail_asymptotic, solve_qp};
use pgc::{CorrelationMatrix, MarginalSpec, PgcModel, RandomStream};

#[derive(Parser)]
#[command(
    name = "pgc",
    version,
    about = "Heavy-tailed margins with Gaussian dependence: simulate, fit, diagnose"
)]
struct Cli {
    /// Base random seed (default 0; config file key `seed`)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for sampling and Monte Carlo (default: all cores;
    /// config file key `threads`)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Emit a single JSON document on stdout instead of CSV where applicable
    #[arg(long, global = true)]
    json: bool,

    /// Suppress notes on stderr
    #[arg(long, global = true)]
    quiet: bool,

    /// Optional key=value defaults file; explicit flags win
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a sample from a model and write it as CSV (plus the model JSON)
    Simulate(SimulateArgs),
    /// Fit marginal tail indices and the correlation matrix from CSV data
    Fit(FitArgs),
    /// Hill index stability series for one column
    Hill(HillArgs),
    /// Correlation estimate series over k for a column pair
    RhoSeries(RhoSeriesArgs),
    /// Exponential QQ data with bootstrap confidence bands
    Qq(QqArgs),
    /// Solve the tail quadratic program for a correlation matrix and indices
    Qp(QpArgs),
    /// Closed-form joint tail asymptotic, optionally next to a Monte Carlo
    /// estimate
    Tailprob(TailprobArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Marginal spec `family:p1[,p2[,p3]]`, repeat once per margin
    #[arg(long = "marginal", required = true)]
    marginals: Vec<String>,
    /// Correlation for the bivariate case
    #[arg(long, conflicts_with = "sigma")]
    rho: Option<f64>,
    /// Path to a JSON correlation matrix `[[...], ...]`
    #[arg(long)]
    sigma: Option<PathBuf>,
    /// Rows to draw
    #[arg(long)]
    n: usize,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    /// Model JSON path (default: output path with `.model.json`)
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV path
    #[arg(long)]
    data: PathBuf,
    /// The file has no header row; columns are named c1..cd
    #[arg(long)]
    no_header: bool,
    /// Field delimiter
    #[arg(long, default_value = ",")]
    delimiter: char,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset, CliError> {
        Dataset::load_csv(
            &self.data,
            &CsvOptions {
                has_header: !self.no_header,
                delimiter: self.delimiter as u8,
            },
        )
        .map_err(run_error)
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Top order statistics: a count (`1000`) or a percentage (`5%`);
    /// default 5% of the usable observations per column
    #[arg(long)]
    k: Option<String>,
    /// Confidence level for all intervals
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Columns to fit (names or 0-based indices, comma separated; default all)
    #[arg(long)]
    cols: Option<String>,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HillArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Column name or 0-based index
    #[arg(long)]
    col: String,
    /// k range `min:max`
    #[arg(long)]
    k_range: String,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Write CSV here (metadata sidecar goes to `<out>.meta.json`)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RhoSeriesArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Two columns `j,l` (names or 0-based indices)
    #[arg(long)]
    cols: String,
    /// k range `min:max`
    #[arg(long)]
    k_range: String,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QqArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    col: String,
    /// Fraction of the sample forming the tail (at most 0.2)
    #[arg(long, default_value_t = 0.01)]
    top: f64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QpArgs {
    /// Correlation matrix: inline JSON `[[...], ...]` or a file path
    #[arg(long)]
    sigma: String,
    /// Tail indices, comma separated; the program is solved with c = sqrt(alpha)
    #[arg(long)]
    alpha: String,
}

#[derive(Args)]
struct TailprobArgs {
    /// Model JSON path (as written by `simulate`)
    #[arg(long)]
    model: PathBuf,
    /// Threshold scale
    #[arg(long)]
    t: f64,
    /// Per-margin multipliers, comma separated
    #[arg(long)]
    x: String,
    /// Also run a Monte Carlo estimate with this many draws
    #[arg(long)]
    mc: Option<usize>,
}

struct CliError {
    code: u8,
    kind: &'static str,
    message: String,
}

fn config_error(e: impl std::fmt::Display) -> CliError {
    CliError {
        code: 2,
        kind: "config",
        message: e.to_string(),
    }
}

fn run_error(e: pgc::Error) -> CliError {
    use pgc::Error::*;
    let (code, kind) = match &e {
        Io(_) | Parse { .. } | EmptyData | InsufficientData(_) => (3, "data"),
        Domain(_) | DimensionMismatch(_) => (2, "config"),
        _ => (4, "numeric"),
    };
    CliError {
        code,
        kind,
        message: e.to_string(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pgc: error[{}]: {}", e.kind, e.message);
            ExitCode::from(e.code)
        }
    }
}

/// key=value defaults, overridden by explicit flags.
struct Defaults {
    seed: u64,
    threads: Option<usize>,
}

fn read_config(path: &Path) -> Result<Defaults, CliError> {
    let mut d = Defaults {
        seed: 0,
        threads: None,
    };
    let text = std::fs::read_to_string(path).map_err(config_error)?;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(config_error(format!(
                "{}:{}: expected key=value",
                path.display(),
                i + 1
            )));
        };
        match key.trim() {
            "seed" => d.seed = value.trim().parse().map_err(config_error)?,
            "threads" => d.threads = Some(value.trim().parse().map_err(config_error)?),
            other => {
                return Err(config_error(format!("unknown config key '{other}'")));
            }
        }
    }
    Ok(d)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let defaults = match &cli.config {
        Some(path) => read_config(path)?,
        None => Defaults {
            seed: 0,
            threads: None,
        },
    };
    let seed = cli.seed.unwrap_or(defaults.seed);
    if let Some(threads) = cli.threads.or(defaults.threads) {
        if threads > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(config_error)?;
        }
    }
    match &cli.cmd {
        Cmd::Simulate(args) => simulate(&cli, args, seed),
        Cmd::Fit(args) => fit(&cli, args),
        Cmd::Hill(args) => hill(&cli, args),
        Cmd::RhoSeries(args) => rho_series_cmd(&cli, args),
        Cmd::Qq(args) => qq(&cli, args, seed),
        Cmd::Qp(args) => qp(args),
        Cmd::Tailprob(args) => tailprob(args, seed),
    }
}

fn parse_sigma_rows(rows: Vec<Vec<f64>>) -> Result<CorrelationMatrix, CliError> {
    CorrelationMatrix::from_rows(&rows).map_err(config_error)
}

fn simulate(cli: &Cli, args: &SimulateArgs, seed: u64) -> Result<(), CliError> {
    let marginals: Vec<MarginalSpec> = args
        .marginals
        .iter()
        .map(|m| MarginalSpec::parse(m))
        .collect::<Result<_, _>>()
        .map_err(config_error)?;
    let d = marginals.len();
    let sigma = match (&args.rho, &args.sigma) {
        (Some(rho), None) => {
            if d != 2 {
                return Err(config_error(format!(
                    "--rho builds a 2x2 matrix but {d} marginals were given; use --sigma"
                )));
            }
            CorrelationMatrix::from_rho(*rho).map_err(config_error)?
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(config_error)?;
            let rows: Vec<Vec<f64>> = serde_json::from_str(&text).map_err(config_error)?;
            parse_sigma_rows(rows)?
        }
        (None, None) if d == 1 => CorrelationMatrix::identity(1).map_err(config_error)?,
        _ => {
            return Err(config_error(
                "give exactly one of --rho (two margins) or --sigma",
            ));
        }
    };
    if args.n == 0 {
        return Err(config_error("--n must be at least 1"));
    }
    let model = PgcModel::new(marginals, sigma).map_err(config_error)?;
    let sample = model
        .sample(args.n, &RandomStream::new(seed, 0))
        .map_err(run_error)?;
    let names: Vec<String> = (1..=d).map(|j| format!("c{j}")).collect();
    io::write_sample_csv(&args.out, &sample, &names).map_err(run_error)?;
    let model_path = args
        .model_out
        .clone()
        .unwrap_or_else(|| args.out.with_extension("model.json"));
    std::fs::write(&model_path, model.to_json()).map_err(|e| run_error(e.into()))?;
    if !cli.quiet {
        eprintln!(
            "pgc: wrote {} rows to {} (model: {}, fingerprint {})",
            args.n,
            args.out.display(),
            model_path.display(),
            &model.fingerprint()[..12],
        );
    }
    Ok(())
}

fn parse_selectors(ds: &Dataset, spec: &str) -> Result<Vec<usize>, CliError> {
    spec.split(',')
        .map(|tok| ds.column_index(tok.trim()).map_err(config_error))
        .collect()
}

fn fit(cli: &Cli, args: &FitArgs) -> Result<(), CliError> {
    let policy = match &args.k {
        Some(text) => KPolicy::parse(text).map_err(config_error)?,
        None => KPolicy::default(),
    };
    let ds = args.data.load()?;
    let cols: Vec<Vec<f64>> = match &args.cols {
        Some(spec) => parse_selectors(&ds, spec)?
            .into_iter()
            .map(|i| ds.column(i).to_vec())
            .collect(),
        None => ds.columns_data().to_vec(),
    };
    let report = fit_pgc_at_level(&cols, &policy, args.level).map_err(run_error)?;
    let doc = io::canonical_json(&report).map_err(run_error)?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, &doc).map_err(|e| run_error(e.into()))?;
            if !cli.quiet {
                eprintln!("pgc: report written to {}", path.display());
            }
        }
        None => println!("{doc}"),
    }
    Ok(())
}

fn parse_k_range(text: &str) -> Result<(usize, usize), CliError> {
    let (a, b) = text
        .split_once(':')
        .ok_or_else(|| config_error(format!("expected k range 'min:max', got '{text}'")))?;
    let lo = a.trim().parse().map_err(config_error)?;
    let hi = b.trim().parse().map_err(config_error)?;
    Ok((lo, hi))
}

/// Emit a series: CSV to stdout or `--out` (sidecar JSON next to it), or one
/// JSON document on stdout under `--json`.
fn emit_series(
    cli: &Cli,
    out: &Option<PathBuf>,
    series: &SeriesWithBands,
    extra_meta: serde_json::Value,
) -> Result<(), CliError> {
    let sidecar = serde_json::json!({
        "meta": series.meta,
        "flags": series.flags,
        "extra": extra_meta,
    });
    if cli.json && out.is_none() {
        let doc = serde_json::json!({
            "meta": series.meta,
            "x": series.x,
            "y": series.y,
            "lo": series.lo,
            "hi": series.hi,
            "flags": series.flags,
            "extra": extra_meta,
        });
        println!("{}", io::canonical_json(&doc).map_err(run_error)?);
        return Ok(());
    }
    match out {
        Some(path) => {
            io::write_series_csv(path, series).map_err(run_error)?;
            let meta_path = PathBuf::from(format!("{}.meta.json", path.display()));
            std::fs::write(&meta_path, io::canonical_json(&sidecar).map_err(run_error)?)
                .map_err(|e| run_error(e.into()))?;
            if !cli.quiet {
                eprintln!(
                    "pgc: series written to {} (metadata {})",
                    path.display(),
                    meta_path.display()
                );
            }
        }
        None => print!("{}", io::series_to_csv_string(series)),
    }
    Ok(())
}

fn hill(cli: &Cli, args: &HillArgs) -> Result<(), CliError> {
    let ds = args.data.load()?;
    let col = ds.column_index(&args.col).map_err(config_error)?;
    let (k_min, k_max) = parse_k_range(&args.k_range)?;
    let series = hill_series(ds.column(col), k_min, k_max, args.level).map_err(run_error)?;
    emit_series(
        cli,
        &args.out,
        &series,
        serde_json::json!({"source": ds.source(), "column": ds.names()[col]}),
    )
}

fn rho_series_cmd(cli: &Cli, args: &RhoSeriesArgs) -> Result<(), CliError> {
    let ds = args.data.load()?;
    let idx = parse_selectors(&ds, &args.cols)?;
    if idx.len() != 2 {
        return Err(config_error("--cols needs exactly two columns"));
    }
    let (k_min, k_max) = parse_k_range(&args.k_range)?;
    let sample =
        pgc::SampleMatrix::from_columns(ds.columns_data()).map_err(run_error)?;
    let series =
        rho_series(&sample, idx[0], idx[1], k_min, k_max, args.level).map_err(run_error)?;
    emit_series(
        cli,
        &args.out,
        &series,
        serde_json::json!({
            "source": ds.source(),
            "columns": [ds.names()[idx[0]], ds.names()[idx[1]]],
        }),
    )
}

fn qq(cli: &Cli, args: &QqArgs, seed: u64) -> Result<(), CliError> {
    let ds = args.data.load()?;
    let col = ds.column_index(&args.col).map_err(config_error)?;
    let qq = exp_qq(
        ds.column(col),
        args.top,
        args.level,
        &RandomStream::new(seed, 0),
    )
    .map_err(run_error)?;
    emit_series(
        cli,
        &args.out,
        &qq.series,
        serde_json::json!({
            "source": ds.source(),
            "column": ds.names()[col],
            "slope": qq.slope,
            "intercept": qq.intercept,
            "m": qq.m,
        }),
    )
}

fn qp(args: &QpArgs) -> Result<(), CliError> {
    let text = if args.sigma.trim_start().starts_with('[') {
        args.sigma.clone()
    } else {
        std::fs::read_to_string(&args.sigma).map_err(config_error)?
    };
    let rows: Vec<Vec<f64>> = serde_json::from_str(&text).map_err(config_error)?;
    let sigma = parse_sigma_rows(rows)?;
    let alphas: Vec<f64> = args
        .alpha
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(config_error))
        .collect::<Result<_, _>>()?;
    if alphas.iter().any(|&a| !(a > 0.0)) {
        return Err(config_error("tail indices must be positive"));
    }
    let c: Vec<f64> = alphas.iter().map(|a| a.sqrt()).collect();
    let solution = solve_qp(&sigma, &c).map_err(run_error)?;
    println!("{}", io::canonical_json(&solution).map_err(run_error)?);
    Ok(())
}

fn tailprob(args: &TailprobArgs, seed: u64) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.model).map_err(config_error)?;
    let model = PgcModel::from_json(&text).map_err(config_error)?;
    let x: Vec<f64> = args
        .x
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(config_error))
        .collect::<Result<_, _>>()?;
    let subset: Vec<usize> = (0..model.dim()).collect();
    let asym = joint_tail_asymptotic(&model, &subset).map_err(run_error)?;
    let value = asym.eval(args.t, &x).map_err(run_error)?;
    let mc = match args.mc {
        Some(n) => {
            let (est, se) =
                mc_joint_tail(&model, args.t, &x, n, &RandomStream::new(seed, 0))
                    .map_err(run_error)?;
            serde_json::json!({"estimate": est, "se": se, "draws": n})
        }
        None => serde_json::Value::Null,
    };
    let doc = serde_json::json!({
        "t": args.t,
        "x": x,
        "asymptotic": value,
        "gamma": asym.gamma,
        "log_power": asym.log_power,
        "psi": asym.psi,
        "active": asym.active,
        "exponents": asym.exponents,
        "mc": mc,
    });
    println!("{}", io::canonical_json(&doc).map_err(run_error)?);
    Ok(())
}
