//! Command-line pipeline: simulate spike processes, estimate transition
//! probabilities, and certify Gram-matrix properties.
//!
//! Exit codes: 0 success, 2 configuration error, 3 model validation
//! failure, 4 convergence failure, 5 acceptance-check failure.

use clap::{Args, Parser, Subcommand};
use kalikow_cli::{config, experiment};
use kalikow::concentration::{matrix_test, scalar_test, FuncSelect, Verdict};
use kalikow::decomp::{validate, Neuron, ValidationOptions};
use kalikow::dict::Dictionary;
use kalikow::gram::{inv_check, re_check, ReMode};
use kalikow::io::{self, GramJson, ModelFile, SolutionJson};
use kalikow::lasso::{self, LassoConfig, NormRef};
use kalikow::sim::{sample_window, SimOptions};
use kalikow::{Error, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_CONVERGENCE: u8 = 4;
const EXIT_CHECK_FAILED: u8 = 5;

#[derive(Parser)]
#[command(
    name = "kalikow",
    about = "Perfect simulation and Lasso estimation for sparse space-time spike processes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Perfect-sample a window of the stationary chain.
    Simulate(SimulateArgs),
    /// Fit l1-penalized least squares on a sample.
    Estimate(EstimateArgs),
    /// Check Inv / RE properties of a serialized Gram system.
    GramCheck(GramCheckArgs),
    /// Monte Carlo verification of the concentration bounds.
    Concentration(ConcentrationArgs),
    /// Evaluate the oracle-inequality bound at a candidate vector.
    OracleEval(OracleEvalArgs),
    /// Run the configured pipeline over a range of seeds.
    Replicate(ReplicateArgs),
    /// Check the standing assumptions of a model file.
    ValidateModel(ValidateModelArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated neuron ids.
    #[arg(long, value_delimiter = ',')]
    neurons: Vec<i64>,
    #[arg(long)]
    m: usize,
    #[arg(long = "T", visible_alias = "t")]
    t: i64,
    #[arg(long)]
    seed: u64,
    /// Output path; `--format both` appends `.csv` / `.bin`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "csv", value_parser = ["csv", "bin", "both"])]
    format: String,
    #[arg(long, default_value_t = 1_000_000)]
    genealogy_cap: usize,
}

#[derive(Args)]
struct EstimateArgs {
    /// Sample CSV produced by `simulate`.
    #[arg(long)]
    sample: PathBuf,
    /// short_memory | cumulative | cumulative_spont | hawkes | hawkes_spont
    #[arg(long)]
    dict: String,
    /// Dictionary depth; defaults to the sample past depth.
    #[arg(long)]
    dict_m: Option<usize>,
    /// Bin width for the cumulative families.
    #[arg(long)]
    eta: Option<usize>,
    #[arg(long)]
    target: i64,
    #[arg(long)]
    gamma: f64,
    #[arg(long, conflicts_with = "d")]
    delta: Option<f64>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the assembled Gram system.
    #[arg(long)]
    gram_out: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Args)]
struct GramCheckArgs {
    /// Gram JSON produced by `estimate --gram-out` or `replicate`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Inv targets, comma separated.
    #[arg(long, value_delimiter = ',')]
    kappa: Vec<f64>,
    /// Restricted-eigenvalue request `c=<float>,s=<int>`.
    #[arg(long)]
    re: Option<String>,
    #[arg(long, default_value = "exact", value_parser = ["exact", "certified"])]
    mode: String,
    /// Randomness band, certified mode only.
    #[arg(long)]
    mu: Option<f64>,
    /// Reference Gram JSON, certified mode only.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct ConcentrationArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_parser = ["scalar", "matrix"])]
    mode: String,
    #[arg(long)]
    dict: String,
    #[arg(long)]
    eta: Option<usize>,
    /// Observed neurons; default: all neurons of an explicit model.
    #[arg(long, value_delimiter = ',')]
    neurons: Vec<i64>,
    #[arg(long)]
    m: usize,
    #[arg(long = "T", visible_alias = "t")]
    t: i64,
    #[arg(long)]
    x: f64,
    #[arg(long)]
    replicas: u64,
    #[arg(long)]
    theta: f64,
    /// Scalar mode: restrict to one function index (default: whole family).
    #[arg(long)]
    func: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleEvalArgs {
    #[arg(long)]
    sample: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dict: String,
    #[arg(long)]
    dict_m: Option<usize>,
    #[arg(long)]
    eta: Option<usize>,
    #[arg(long)]
    target: i64,
    /// Solution JSON; its coefficients are the candidate unless
    /// `--candidate` is given.
    #[arg(long)]
    solution: PathBuf,
    /// Optional JSON array of candidate coefficients.
    #[arg(long)]
    candidate: Option<PathBuf>,
    #[arg(long)]
    kappa: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit 5 when the measured distance exceeds the bound.
    #[arg(long, default_value_t = false)]
    gate: bool,
}

#[derive(Args)]
struct ReplicateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short = 'n', long, default_value_t = 1)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    /// Output directory; defaults to the config's `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the annotated configuration template and exit.
    #[arg(long, default_value_t = false)]
    explain_config: bool,
}

#[derive(Args)]
struct ValidateModelArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    theta: f64,
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(classify(&e))
        }
    }
}

fn classify(e: &Error) -> u8 {
    match e {
        Error::RunawayGenealogy { .. } => EXIT_CONVERGENCE,
        _ => EXIT_CONFIG,
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Simulate(args) => simulate(args),
        Command::Estimate(args) => estimate(args),
        Command::GramCheck(args) => gram_check(args),
        Command::Concentration(args) => concentration(args),
        Command::OracleEval(args) => oracle_eval(args),
        Command::Replicate(args) => replicate_cmd(args),
        Command::ValidateModel(args) => validate_model(args),
    }
}

fn load_model(path: &Path) -> Result<(ModelFile, kalikow::KalikowModel)> {
    let file = ModelFile::load(path)?;
    let model = file.build(path.parent())?;
    Ok((file, model))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

fn build_dict(kind: &str, f: &[Neuron], m: usize, eta: Option<usize>) -> Result<Dictionary> {
    kalikow::dict::from_name(kind, f, m, eta)
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let (_, model) = load_model(&args.model)?;
    let f: Vec<Neuron> = args.neurons.iter().map(|&n| Neuron(n)).collect();
    if f.is_empty() {
        return Err(Error::Contract("--neurons must be non-empty".into()));
    }
    let opts = SimOptions {
        genealogy_cap: args.genealogy_cap,
    };
    let sample = sample_window(&model, &f, args.m, args.t, args.seed, &opts)?;
    let write_csv = |path: &Path| -> Result<()> {
        let mut buf = Vec::new();
        io::write_sample_csv(&sample, &mut buf)?;
        write_file(path, buf)?;
        Ok(())
    };
    let write_bin = |path: &Path| -> Result<()> {
        let mut buf = Vec::new();
        io::write_sample_binary(&sample, &mut buf)?;
        write_file(path, buf)?;
        Ok(())
    };
    match args.format.as_str() {
        "csv" => write_csv(&args.out)?,
        "bin" => write_bin(&args.out)?,
        _ => {
            write_csv(&args.out.with_extension("csv"))?;
            write_bin(&args.out.with_extension("bin"))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn estimate(args: EstimateArgs) -> Result<ExitCode> {
    let sample = io::read_sample_csv(std::fs::File::open(&args.sample)?)?;
    let m = args.dict_m.unwrap_or_else(|| sample.past_depth());
    let dict = build_dict(&args.dict, sample.neurons(), m, args.eta)?;
    let gram_sys = kalikow::gram::assemble(&dict, &sample, Neuron(args.target))?;
    let d = match (args.delta, args.d) {
        (Some(delta), None) => lasso::d_delta(dict.sup_norm(), dict.len(), delta, sample.horizon()),
        (None, Some(d)) => d,
        _ => {
            return Err(Error::Contract(
                "estimate needs exactly one of --delta or --d".into(),
            ))
        }
    };
    let mut config = LassoConfig::new(args.gamma, d);
    config.max_iter = args.max_iter;
    config.tol = args.tol;
    if args.gamma < 2.0 {
        eprintln!("warning: gamma = {} < 2; the oracle guarantee assumes gamma >= 2", args.gamma);
    }
    let solution = lasso::solve(&gram_sys, &config)?;
    if let Some(gram_out) = &args.gram_out {
        write_file(
            gram_out,
            io::to_json_string(&GramJson::from_system(&gram_sys))?,
        )?;
    }
    write_file(
        &args.out,
        io::to_json_string(&SolutionJson::new(&gram_sys.dict_fingerprint, args.gamma, d, &solution))?,
    )?;
    if !solution.converged {
        eprintln!(
            "warning: coordinate descent hit the iteration cap (kkt residual {:.3e})",
            solution.kkt_residual
        );
        return Ok(ExitCode::from(EXIT_CONVERGENCE));
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct GramCheckOutput {
    lambda_min: f64,
    kappa_checks: Vec<experiment::KappaCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    re: Option<experiment::ReSummary>,
    passed: bool,
}

fn gram_check(args: GramCheckArgs) -> Result<ExitCode> {
    let gram: GramJson = serde_json::from_str(&std::fs::read_to_string(&args.input)?)
        .map_err(|e| Error::Parse(format!("gram JSON: {e}")))?;
    let system = gram.into_system()?;
    let inv = inv_check(&system.g);
    let kappa_checks: Vec<experiment::KappaCheck> = args
        .kappa
        .iter()
        .map(|&k| experiment::KappaCheck {
            kappa: k,
            satisfied: inv.satisfies(k),
        })
        .collect();
    let mut passed = kappa_checks.iter().all(|c| c.satisfied);

    let re = match &args.re {
        None => None,
        Some(spec) => {
            let (c, s) = parse_re_spec(spec)?;
            let reference_system;
            let mode = match args.mode.as_str() {
                "certified" => {
                    let mu = args.mu.ok_or_else(|| {
                        Error::Contract("certified mode needs --mu".into())
                    })?;
                    let path = args.reference.as_ref().ok_or_else(|| {
                        Error::Contract("certified mode needs --reference".into())
                    })?;
                    let reference: GramJson =
                        serde_json::from_str(&std::fs::read_to_string(path)?)
                            .map_err(|e| Error::Parse(format!("reference JSON: {e}")))?;
                    reference_system = reference.into_system()?;
                    ReMode::Certified {
                        mu,
                        reference: &reference_system.g,
                    }
                }
                _ => ReMode::Exact,
            };
            let check = re_check(&system.g, c, s, mode)?;
            passed &= check.lower > 0.0;
            Some(experiment::ReSummary {
                c,
                s,
                mode: args.mode.clone(),
                lower: check.lower,
                upper: check.upper,
                positive: check.lower > 0.0,
            })
        }
    };

    let output = GramCheckOutput {
        lambda_min: inv.lambda_min,
        kappa_checks,
        re,
        passed,
    };
    print!("{}", io::to_json_string(&output)?);
    Ok(if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    })
}

fn parse_re_spec(spec: &str) -> Result<(f64, usize)> {
    let mut c = None;
    let mut s = None;
    for part in spec.split(',') {
        match part.trim().split_once('=') {
            Some(("c", v)) => c = v.trim().parse().ok(),
            Some(("s", v)) => s = v.trim().parse().ok(),
            _ => return Err(Error::Contract(format!("bad --re component `{part}`"))),
        }
    }
    match (c, s) {
        (Some(c), Some(s)) => Ok((c, s)),
        _ => Err(Error::Contract("--re needs the form c=<float>,s=<int>".into())),
    }
}

fn concentration(args: ConcentrationArgs) -> Result<ExitCode> {
    let (_, model) = load_model(&args.model)?;
    let f: Vec<Neuron> = if args.neurons.is_empty() {
        model.neurons().ok_or_else(|| {
            Error::Contract("--neurons is required for homogeneous models".into())
        })?
    } else {
        args.neurons.iter().map(|&n| Neuron(n)).collect()
    };
    let dict = build_dict(&args.dict, &f, args.m, args.eta)?;
    let opts = SimOptions::default();
    let report = match args.mode.as_str() {
        "scalar" => scalar_test(
            &model,
            &dict,
            args.func.map_or(FuncSelect::All, FuncSelect::Single),
            args.t,
            args.replicas,
            args.x,
            args.theta,
            args.seed,
            &opts,
        )?,
        _ => matrix_test(
            &model,
            &dict,
            args.t,
            args.replicas,
            args.x,
            args.theta,
            args.seed,
            &opts,
        )?,
    };
    write_file(&args.out, io::to_json_string(&report)?)?;
    Ok(match report.verdict {
        Verdict::Pass => ExitCode::SUCCESS,
        Verdict::Inconclusive => {
            eprintln!("warning: pilot too noisy, verdict inconclusive");
            ExitCode::SUCCESS
        }
        Verdict::Fail => ExitCode::from(EXIT_CHECK_FAILED),
    })
}

#[derive(Serialize)]
struct OracleEvalOutput {
    norm_sq_vs_model: f64,
    oracle_bound_at_candidate: f64,
    holds: bool,
    kappa: f64,
    gamma: f64,
    d: f64,
}

fn oracle_eval(args: OracleEvalArgs) -> Result<ExitCode> {
    let sample = io::read_sample_csv(std::fs::File::open(&args.sample)?)?;
    let file = ModelFile::load(&args.model)?;
    let model = file
        .transition_model(args.model.parent())?
        .ok_or_else(|| Error::Unsupported("model has no closed-form transition".into()))?;
    let m = args.dict_m.unwrap_or_else(|| sample.past_depth());
    let dict = build_dict(&args.dict, sample.neurons(), m, args.eta)?;
    let solution: SolutionJson = serde_json::from_str(&std::fs::read_to_string(&args.solution)?)
        .map_err(|e| Error::Parse(format!("solution JSON: {e}")))?;
    if solution.dict != dict.fingerprint() {
        return Err(Error::Contract(format!(
            "solution was fit on dictionary `{}`, not `{}`",
            solution.dict,
            dict.fingerprint()
        )));
    }
    let candidate: Vec<f64> = match &args.candidate {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Parse(format!("candidate JSON: {e}")))?,
        None => solution.coefficients.clone(),
    };
    let target = Neuron(args.target);
    let norm = lasso::empirical_norm_sq(
        &dict,
        &sample,
        &solution.coefficients,
        NormRef::Model(&model),
        target,
    )?;
    let bound = lasso::oracle_bound(
        &dict,
        &sample,
        &model,
        target,
        &candidate,
        args.kappa,
        solution.gamma,
        solution.d,
    )?;
    let output = OracleEvalOutput {
        norm_sq_vs_model: norm,
        oracle_bound_at_candidate: bound,
        holds: norm <= bound,
        kappa: args.kappa,
        gamma: solution.gamma,
        d: solution.d,
    };
    let text = io::to_json_string(&output)?;
    match &args.out {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    Ok(if args.gate && !output.holds {
        ExitCode::from(EXIT_CHECK_FAILED)
    } else {
        ExitCode::SUCCESS
    })
}

fn replicate_cmd(args: ReplicateArgs) -> Result<ExitCode> {
    if args.explain_config {
        print!("{}", config::CONFIG_TEMPLATE);
        return Ok(ExitCode::SUCCESS);
    }
    let config_path = args
        .config
        .ok_or_else(|| Error::Contract("--config is required".into()))?;
    let resolved = config::ExperimentConfig::load(&config_path)?;
    let out_dir = args.out.unwrap_or_else(|| resolved.out_dir.clone());
    let report = experiment::replicate(&resolved, args.n, args.base_seed, &out_dir)?;
    if report.aggregate.errored > 0 {
        eprintln!(
            "warning: {} of {} replicas errored (recorded per seed)",
            report.aggregate.errored, report.n
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn validate_model(args: ValidateModelArgs) -> Result<ExitCode> {
    let (_, model) = load_model(&args.model)?;
    let report = validate(&model, args.theta, args.mu, &ValidationOptions::default())?;
    let text = io::to_json_string(&report)?;
    match &args.out {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    Ok(if report.all_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VALIDATION)
    })
}
