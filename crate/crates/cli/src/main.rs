//! `dynpanel` command-line front end.
//!
//! Exit codes: 0 success, 1 estimation or diagnostic failure, 2 usage or I/O
//! error. Every run writes `<command>.manifest.json` to the output directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dynpanel_core::estimator::{fitted_and_levels, FeMethod, GmmOptions};
use dynpanel_core::instruments::InstrumentSpec;
use dynpanel_core::manifest::Manifest;
use dynpanel_core::panel_data::{describe, ingest_long_csv, ingest_wide_csv, ParseOptions};
use dynpanel_core::pipeline::{estimate, replicate, EstimationConfig, Estimation};
use dynpanel_core::ratings::{grade_to_numeric, numeric_to_grade, scale_csv};
use dynpanel_core::report::{render_csv, render_table, to_json};
use dynpanel_core::simulate::{run_experiment, DgpSpec, EstimatorConfig, DEPENDENT};
use dynpanel_core::{Error, LaggedVar, ModelSpec, PanelDataset, SpecKind, Weighting};

#[derive(Parser, Debug)]
#[command(name = "dynpanel", version, about = "Dynamic panel data estimation")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Directory for manifests and output files.
    #[arg(long, global = true, env = "DYNPANEL_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one specification.
    Estimate(EstimateArgs),
    /// Fit the five-column pooled/FE/RE/OD/FD comparison.
    Replicate(ReplicateArgs),
    /// Monte Carlo experiment on a synthetic dynamic panel.
    Simulate(SimulateArgs),
    /// Descriptive statistics of panel variables.
    Describe(DescribeArgs),
    /// Convert between letter grades and the numeric scale.
    Ratings(RatingsArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, Default, PartialEq)]
#[serde(rename_all = "snake_case")]
enum OutFormat {
    #[default]
    Table,
    Csv,
    Json,
}

#[derive(Args, Debug, Serialize)]
struct DataArgs {
    /// Long CSV: entity,period,<var>,...
    #[arg(long)]
    data: Option<PathBuf>,

    /// Wide CSV for one variable, `VAR=PATH` (repeatable).
    #[arg(long = "wide", value_name = "VAR=PATH")]
    wide: Vec<String>,

    /// Keep only these entities (comma separated).
    #[arg(long, value_delimiter = ',')]
    entities: Vec<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "snake_case")]
enum FeMethodArg {
    Within,
    Lsdv,
}

#[derive(Args, Debug, Serialize)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Dependent variable.
    #[arg(long)]
    dep: String,

    /// Number of dependent-variable lags.
    #[arg(long, default_value_t = 1)]
    ar: usize,

    /// Regressors, `var` or `var(-k)`, comma separated.
    #[arg(long = "x", value_delimiter = ',')]
    exogenous: Vec<String>,

    /// pooled, fe, re, fd or od.
    #[arg(long, default_value = "pooled", value_parser = parse_spec)]
    #[serde(serialize_with = "display")]
    spec: SpecKind,

    /// Instruments, e.g. `dyn(pp,2),static(bv,0..1)`; GMM when given.
    #[arg(long)]
    instruments: Option<String>,

    /// Deepest lag for dynamic instrument blocks that set no bound.
    #[arg(long)]
    max_lag: Option<usize>,

    /// one_step, two_step or n_step.
    #[arg(long, default_value = "n_step", value_parser = parse_weighting)]
    #[serde(serialize_with = "display")]
    weighting: Weighting,

    /// Maximum iterations of the n-step weighting.
    #[arg(long, default_value_t = Weighting::DEFAULT_MAX_ITER)]
    max_iter: usize,

    /// Convergence tolerance of the n-step weighting.
    #[arg(long, default_value_t = Weighting::DEFAULT_TOL)]
    tol: f64,

    /// Windmeijer correction of the two-step covariance.
    #[arg(long)]
    windmeijer: bool,

    /// Drop the intercept.
    #[arg(long)]
    no_intercept: bool,

    #[arg(long, value_enum, default_value_t = FeMethodArg::Within)]
    fe_method: FeMethodArg,

    /// Orders of the serial-correlation test after FD/OD fits.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2])]
    ar_tests: Vec<usize>,

    /// Skip the Hausman comparison after a random-effects fit.
    #[arg(long)]
    no_hausman: bool,

    #[arg(long, value_enum, default_value_t = OutFormat::Table)]
    out: OutFormat,

    /// File name (in the output directory) for fitted values.
    #[arg(long, default_value = "fitted.csv")]
    fitted: String,
}

#[derive(Args, Debug, Serialize)]
struct ReplicateArgs {
    #[command(flatten)]
    data: DataArgs,

    #[arg(long, default_value = "pp")]
    dep: String,

    /// Brand value series.
    #[arg(long, default_value = "bv")]
    bv: String,

    /// Brand trust series.
    #[arg(long, default_value = "bt")]
    bt: String,

    #[arg(long, value_enum, default_value_t = OutFormat::Table)]
    out: OutFormat,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long, default_value_t = 100)]
    reps: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 100)]
    entities: usize,

    #[arg(long, default_value_t = 10)]
    periods: usize,

    #[arg(long, default_value_t = 0.5)]
    rho: f64,

    /// Exogenous coefficients, comma separated ("" for a pure AR(1)).
    #[arg(long, default_value = "1.0", value_parser = parse_betas)]
    betas: Betas,

    #[arg(long, default_value_t = 1.0)]
    sigma_effect: f64,

    #[arg(long, default_value_t = 1.0)]
    sigma_noise: f64,

    /// Correlation of the regressors with the entity effect.
    #[arg(long, default_value_t = 0.0)]
    effect_loading: f64,

    #[arg(long, default_value_t = 50)]
    burn_in: usize,

    /// Probability of deleting a cell.
    #[arg(long, default_value_t = 0.0)]
    missingness: f64,

    /// Estimators to compare, from pooled, fe, re, fd, od (GMM kinds use
    /// lag-2 blocks of every series).
    #[arg(long, value_delimiter = ',', default_values_t = ["fe".to_string(), "fd".to_string(), "od".to_string()])]
    estimators: Vec<String>,

    #[arg(long, default_value = "two_step", value_parser = parse_weighting)]
    #[serde(serialize_with = "display")]
    weighting: Weighting,

    #[arg(long, value_enum, default_value_t = OutFormat::Table)]
    out: OutFormat,
}

#[derive(Args, Debug, Serialize)]
struct DescribeArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Variables to summarize (all when omitted).
    #[arg(long, value_delimiter = ',')]
    vars: Vec<String>,

    #[arg(long, value_enum, default_value_t = OutFormat::Table)]
    out: OutFormat,
}

#[derive(Args, Debug, Serialize)]
#[group(required = true, multiple = false)]
struct RatingsArgs {
    /// Letter grade to convert.
    #[arg(long)]
    grade: Option<String>,

    /// Numeric value to convert.
    #[arg(long, allow_negative_numbers = true)]
    value: Option<f64>,

    /// Print the whole scale as CSV.
    #[arg(long)]
    scale: bool,
}

#[derive(Clone, Debug, Serialize)]
#[serde(transparent)]
struct Betas(Vec<f64>);

fn parse_betas(s: &str) -> Result<Betas, String> {
    s.split(',')
        .map(str::trim)
        .filter(|b| !b.is_empty())
        .map(|b| b.parse::<f64>().map_err(|e| format!("'{b}': {e}")))
        .collect::<Result<Vec<_>, _>>()
        .map(Betas)
}

fn parse_spec(s: &str) -> Result<SpecKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_weighting(s: &str) -> Result<Weighting, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

/// A failed run with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. }
            | Error::Csv(_)
            | Error::Format(_)
            | Error::DuplicateRow { .. }
            | Error::ParseValue { .. }
            | Error::UnknownVariable(_)
            | Error::UnknownGrade { .. }
            | Error::OutOfRange { .. }
            | Error::Parameter(_)
            | Error::Specification(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CmdResult<T> = std::result::Result<T, Failure>;

/// Files written by a run, in the order written.
struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> CmdResult<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| usage(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> CmdResult<()> {
        let p = self.dir.join(name);
        fs::write(&p, contents).map_err(|e| usage(format!("cannot write {}: {e}", p.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn manifest(mut self, command: &str, config: &impl Serialize, seed: Option<u64>, inputs: &[PathBuf]) -> CmdResult<()> {
        let mut m = Manifest::new(command, config, seed)?;
        for p in inputs {
            m.add_input(p)?;
        }
        m.outputs = self.written.clone();
        let name = format!("{command}.manifest.json");
        let json = m.to_json()? + "\n";
        self.write(&name, json.as_bytes())
    }
}

fn load(args: &DataArgs) -> CmdResult<(PanelDataset, Vec<PathBuf>)> {
    let opts = ParseOptions::default();
    let mut inputs = Vec::new();
    let mut data: Option<PanelDataset> = None;
    if let Some(p) = &args.data {
        data = Some(ingest_long_csv(p, &opts)?);
        inputs.push(p.clone());
    }
    for w in &args.wide {
        let (var, path) = w
            .split_once('=')
            .ok_or_else(|| usage(format!("--wide expects VAR=PATH, got '{w}'")))?;
        let d = ingest_wide_csv(path, var.trim(), &opts)?;
        inputs.push(PathBuf::from(path));
        data = Some(match data {
            None => d,
            Some(prev) => prev.merge(&d)?,
        });
    }
    let mut data = data.ok_or_else(|| usage("no input: pass --data and/or --wide VAR=PATH"))?;
    if !args.entities.is_empty() {
        let labels: Vec<&str> = args.entities.iter().map(String::as_str).collect();
        data = data.select_entities(&labels)?;
    }
    Ok((data, inputs))
}

fn render(estimations: &[Estimation], out: OutFormat) -> CmdResult<String> {
    Ok(match out {
        OutFormat::Table => render_table(estimations),
        OutFormat::Csv => render_csv(estimations)?,
        OutFormat::Json => to_json(estimations)? + "\n",
    })
}

fn instrument_spec(args: &EstimateArgs) -> CmdResult<Option<InstrumentSpec>> {
    let Some(text) = &args.instruments else {
        return Ok(None);
    };
    let mut spec: InstrumentSpec = text.parse()?;
    if let Some(k) = args.max_lag {
        for d in spec.dynamic.iter_mut().filter(|d| d.bound.is_none()) {
            d.bound = Some(k);
        }
    }
    Ok(Some(spec))
}

fn cmd_estimate(args: &EstimateArgs, out_dir: &Path) -> CmdResult<String> {
    let (data, inputs) = load(&args.data)?;
    let exogenous = args
        .exogenous
        .iter()
        .map(|s| s.parse::<LaggedVar>())
        .collect::<Result<Vec<_>, _>>()?;
    let mut spec = ModelSpec::new(&args.dep, args.ar, exogenous, args.spec);
    if args.no_intercept {
        spec.intercept = false;
    }
    spec.fe_method = match args.fe_method {
        FeMethodArg::Within => FeMethod::Within,
        FeMethodArg::Lsdv => FeMethod::Lsdv,
    };
    let weighting = match args.weighting {
        Weighting::NStep { .. } => Weighting::NStep {
            max_iter: args.max_iter,
            tol: args.tol,
        },
        w => w,
    };
    let mut config = EstimationConfig::new(spec);
    config.instruments = instrument_spec(args)?;
    config.gmm = GmmOptions {
        weighting,
        windmeijer: args.windmeijer,
    };
    config.ar_orders = args.ar_tests.clone();
    config.hausman = !args.no_hausman;

    let fit = estimate(&data, &config)?;
    let mut outputs = Outputs::new(out_dir)?;
    match fitted_and_levels(&fit.result) {
        Ok(table) => {
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            outputs.write(&args.fitted, &buf)?;
        }
        Err(e) => log::warn!("no fitted values written: {e}"),
    }
    let text = render(std::slice::from_ref(&fit), args.out)?;
    outputs.manifest("estimate", &(args, &config), None, &inputs)?;
    Ok(text)
}

fn cmd_replicate(args: &ReplicateArgs, out_dir: &Path) -> CmdResult<String> {
    let (data, inputs) = load(&args.data)?;
    let fits = replicate(&data, &args.dep, &args.bv, &args.bt)?;
    let text = render(&fits, args.out)?;
    let outputs = Outputs::new(out_dir)?;
    outputs.manifest("replicate", args, None, &inputs)?;
    Ok(text)
}

fn simulation_estimator(label: &str, dgp: &DgpSpec, weighting: Weighting) -> CmdResult<EstimatorConfig> {
    let kind: SpecKind = label.parse()?;
    if !kind.is_differenced() {
        return Ok(EstimatorConfig::ols(label, kind));
    }
    let mut blocks = vec![format!("dyn({DEPENDENT},2)")];
    blocks.extend((0..dgp.exogenous_betas.len()).map(|j| format!("dyn({},2)", dynpanel_core::simulate::exog_name(j))));
    let instruments: InstrumentSpec = blocks.join(",").parse()?;
    Ok(EstimatorConfig::gmm(label, kind, instruments, weighting))
}

fn cmd_simulate(args: &SimulateArgs, out_dir: &Path) -> CmdResult<String> {
    let dgp = DgpSpec {
        n_entities: args.entities,
        n_periods: args.periods,
        rho: args.rho,
        exogenous_betas: args.betas.0.clone(),
        sigma_effect: args.sigma_effect,
        sigma_noise: args.sigma_noise,
        effect_loading: args.effect_loading,
        burn_in: args.burn_in,
        missingness: args.missingness,
        seed: args.seed,
        ..DgpSpec::default()
    };
    let estimators = args
        .estimators
        .iter()
        .map(|l| simulation_estimator(l.trim(), &dgp, args.weighting))
        .collect::<CmdResult<Vec<_>>>()?;
    let mc = run_experiment(&dgp, &estimators, args.reps)?;

    let mut csv = Vec::new();
    mc.write_csv(&mut csv)?;
    let json = mc.to_json()? + "\n";
    let ledger = mc.seed_ledger_text();
    let mut outputs = Outputs::new(out_dir)?;
    outputs.write("simulation.csv", &csv)?;
    outputs.write("simulation.json", json.as_bytes())?;
    outputs.write("seeds.txt", ledger.as_bytes())?;
    outputs.manifest("simulate", &(args, &dgp, &estimators), Some(args.seed), &[])?;

    Ok(match args.out {
        OutFormat::Csv => String::from_utf8_lossy(&csv).into_owned(),
        OutFormat::Json => json,
        OutFormat::Table => {
            let mut s = format!(
                "{} replications, N = {}, T = {}, rho = {}, seed = {}\n",
                args.reps, dgp.n_entities, dgp.n_periods, dgp.rho, dgp.seed
            );
            s.push_str(&format!(
                "{:<10} {:<8} {:>8} {:>10} {:>10} {:>10} {:>9} {:>8} {:>8} {:>8}\n",
                "estimator", "coef", "truth", "mean", "bias", "rmse", "se/sd", "rej5%", "J rej", "AR2 rej"
            ));
            let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
            for e in &mc.estimators {
                for c in &e.coefficients {
                    s.push_str(&format!(
                        "{:<10} {:<8} {:>8.4} {:>10.4} {:>10.4} {:>10.4} {:>9.3} {:>8.3} {:>8} {:>8}\n",
                        e.label, c.name, c.truth, c.mean, c.bias, c.rmse, c.se_sd_ratio, c.rejection,
                        opt(e.j_rejection), opt(e.ar2_rejection)
                    ));
                }
                if e.failures > 0 {
                    s.push_str(&format!("{:<10} {} failed replications\n", e.label, e.failures));
                }
            }
            s.push_str("\nseed ledger (rep seed):\n");
            s.push_str(&ledger);
            s
        }
    })
}

fn cmd_describe(args: &DescribeArgs, out_dir: &Path) -> CmdResult<String> {
    let (data, inputs) = load(&args.data)?;
    let vars: Vec<String> = if args.vars.is_empty() {
        data.variables().map(str::to_string).collect()
    } else {
        args.vars.clone()
    };
    let mut stats = Vec::new();
    for v in &vars {
        stats.push((v.clone(), describe(&data, v)?));
    }
    let text = match args.out {
        OutFormat::Json => {
            let map: serde_json::Map<String, serde_json::Value> = stats
                .iter()
                .map(|(v, s)| (v.clone(), serde_json::to_value(s).expect("plain struct")))
                .collect();
            serde_json::to_string_pretty(&map).map_err(|e| Error::Format(e.to_string()))? + "\n"
        }
        OutFormat::Csv => {
            let mut s = String::from("variable,mean,median,max,min,sd,skewness,kurtosis,n\n");
            for (v, d) in &stats {
                s.push_str(&format!(
                    "{v},{},{},{},{},{},{},{},{}\n",
                    d.mean, d.median, d.max, d.min, d.standard_deviation, d.skewness, d.kurtosis, d.observations
                ));
            }
            s
        }
        OutFormat::Table => {
            let mut s = format!(
                "{:<12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>9} {:>9} {:>6}\n",
                "variable", "mean", "median", "max", "min", "sd", "skew", "kurt", "n"
            );
            for (v, d) in &stats {
                s.push_str(&format!(
                    "{v:<12} {:>12.4} {:>12.4} {:>12.4} {:>12.4} {:>12.4} {:>9.4} {:>9.4} {:>6}\n",
                    d.mean, d.median, d.max, d.min, d.standard_deviation, d.skewness, d.kurtosis, d.observations
                ));
            }
            s
        }
    };
    let outputs = Outputs::new(out_dir)?;
    outputs.manifest("describe", args, None, &inputs)?;
    Ok(text)
}

fn cmd_ratings(args: &RatingsArgs, out_dir: &Path) -> CmdResult<String> {
    let text = if let Some(g) = &args.grade {
        format!("{:.2}\n", grade_to_numeric(g)?)
    } else if let Some(v) = args.value {
        format!("{}\n", numeric_to_grade(v)?)
    } else {
        scale_csv()
    };
    let outputs = Outputs::new(out_dir)?;
    outputs.manifest("ratings", args, None, &[])?;
    Ok(text)
}

fn run(cli: &Cli) -> CmdResult<String> {
    match &cli.command {
        Command::Estimate(a) => cmd_estimate(a, &cli.out_dir),
        Command::Replicate(a) => cmd_replicate(a, &cli.out_dir),
        Command::Simulate(a) => cmd_simulate(a, &cli.out_dir),
        Command::Describe(a) => cmd_describe(a, &cli.out_dir),
        Command::Ratings(a) => cmd_ratings(a, &cli.out_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(text) => {
            let mut out = std::io::stdout().lock();
            if out.write_all(text.as_bytes()).and_then(|_| out.flush()).is_err() {
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
