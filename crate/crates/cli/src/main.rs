use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use tonewood::dataset::{generate, DatasetConfig, SampleSet};
use tonewood::experiments::{self, StudyContext, StudyName};
use tonewood::geometry::{Families, FamilySigma, PlateParams, ReferencePlate, PARAM_DIM};
use tonewood::optimizer::{self, LossSpec, NelderMeadOptions, OptimizationRun};
use tonewood::oracle::{OracleConfig, DEFAULT_RESOLUTION};
use tonewood::surrogate::{SurrogateModel, TrainConfig, R2_THRESHOLD};
use tonewood_service::{AppState, ServiceConfig};

#[derive(Parser)]
#[command(name = "tonewood", version, about = "Surrogate-assisted inverse design of violin-like plates")]
struct Cli {
    /// Worker threads for parallel maps; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label perturbed designs with the eigen-oracle.
    GenDataset(GenDataset),
    /// Fit the surrogate network to a dataset.
    Train(Train),
    /// Predict the ten eigenfrequencies of a design.
    Predict(Predict),
    /// Optimize a design against a target with the surrogate.
    Optimize(Optimize),
    /// Check an optimized design against the oracle.
    CrossValidate(CrossValidate),
    /// Run one of the design studies.
    Study(Study),
    /// Start the HTTP design service.
    Serve(Serve),
}

#[derive(Args)]
struct Output {
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct GenDataset {
    #[arg(long)]
    out: PathBuf,
    /// JSON file with defaults for any flag below; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Standard deviation for every family.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    sigma_outline: Option<f64>,
    #[arg(long)]
    sigma_thickness: Option<f64>,
    #[arg(long)]
    sigma_material: Option<f64>,
    /// Perturbed families, e.g. `outline+thickness`.
    #[arg(long)]
    families: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Oracle grid nodes per metre.
    #[arg(long)]
    resolution: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Input families, e.g. `geometry`.
    #[arg(long)]
    inputs: Option<String>,
    /// Keep a model that fails the R² gate.
    #[arg(long)]
    allow_ungated: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct Predict {
    #[arg(long)]
    model: PathBuf,
    /// Design parameters as JSON; defaults to the reference plate.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum LossKind {
    /// (α − f5/f2)²
    Ratio,
    /// (β − f_mode)²
    Mode,
    /// Mean relative deviation from a reference spectrum.
    MeanAbs,
    /// Relative shift of the mean frequency.
    MeanShift,
}

#[derive(Args)]
struct Optimize {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    loss: LossKind,
    #[arg(long)]
    alpha: Option<f64>,
    /// 1-based mode number.
    #[arg(long)]
    mode: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    /// Ten comma-separated frequencies; defaults to the prediction at the
    /// reference plate.
    #[arg(long)]
    reference_spectrum: Option<String>,
    /// Free variables: families such as `outline+thickness` or indices
    /// such as `0,1,2`.
    #[arg(long, default_value = "outline")]
    free: String,
    /// Start design; defaults to the reference plate.
    #[arg(long)]
    start: Option<PathBuf>,
    /// Recorded in the run file.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    allow_ungated: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CrossValidate {
    /// Run file written by `optimize`.
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: f64,
}

#[derive(Args)]
struct Study {
    /// ratio, single-modes, equivalence, material or grid.
    name: String,
    #[arg(long)]
    model: PathBuf,
    /// Results directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = experiments::REPLICATES)]
    replicates: usize,
    /// Comma-separated targets for the ratio study.
    #[arg(long)]
    alphas: Option<String>,
    /// Comma-separated σ values for the equivalence study.
    #[arg(long)]
    sigmas: Option<String>,
    /// Material σ for the material study.
    #[arg(long, default_value_t = experiments::MATERIAL_SIGMA)]
    sigma: f64,
    /// Relative target shift for the single-mode study.
    #[arg(long, default_value_t = experiments::MODE_SHIFT)]
    shift: f64,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct Serve {
    #[arg(long, env = "TONEWOOD_MODEL")]
    model: Option<PathBuf>,
    #[arg(long, env = "TONEWOOD_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Concurrent optimization jobs.
    #[arg(long, default_value_t = tonewood_service::DEFAULT_WORKERS)]
    jobs: usize,
}

#[derive(Debug)]
struct CliError {
    kind: String,
    message: String,
}

impl CliError {
    fn new(kind: &str, message: impl Into<String>) -> Self {
        Self { kind: kind.into(), message: message.into() }
    }
}

impl From<tonewood::Error> for CliError {
    fn from(e: tonewood::Error) -> Self {
        Self::new(e.kind(), e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn context(path: &Path) -> impl FnOnce(tonewood::Error) -> CliError + '_ {
    move |e| CliError::new(e.kind(), format!("{}: {e}", path.display()))
}

fn require_input(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::new("MissingInput", format!("{} does not exist", path.display())))
    }
}

fn require_output(path: &Path, force: bool) -> CliResult<()> {
    if path.exists() && !force {
        return Err(CliError::new("OutputExists", format!("{} exists; pass --force to overwrite", path.display())));
    }
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => {
            Err(CliError::new("MissingDirectory", format!("{} does not exist", p.display())))
        }
        _ => Ok(()),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    require_input(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::new("Io", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::new("Json", format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::new("Json", e.to_string()))?;
    std::fs::write(path, text).map_err(|e| CliError::new("Io", format!("{}: {e}", path.display())))
}

fn print_json(value: &Value) {
    println!("{value}");
}

/// Flag values backed by an optional JSON config file.
struct Layered(Map<String, Value>);

impl Layered {
    fn load(path: Option<&PathBuf>) -> CliResult<Self> {
        match path {
            Some(p) => Ok(Self(read_json(p)?)),
            None => Ok(Self(Map::new())),
        }
    }

    fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.0.get(key) {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| CliError::new("InvalidConfig", format!("config key {key:?}: {e}"))),
            None => Ok(default),
        }
    }
}

fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| CliError::new("UsageError", format!("bad number {v:?}: {e}"))))
        .collect()
}

fn parse_free(s: &str) -> CliResult<Vec<usize>> {
    if s.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        let v: Vec<usize> = s
            .split(',')
            .map(|v| v.trim().parse().map_err(|e| CliError::new("UsageError", format!("bad index {v:?}: {e}"))))
            .collect::<CliResult<_>>()?;
        if v.iter().any(|&i| i >= PARAM_DIM) {
            return Err(CliError::new("UsageError", format!("indices must be below {PARAM_DIM}")));
        }
        Ok(v)
    } else {
        Ok(Families::parse(s)?.indices())
    }
}

fn load_model(path: &Path) -> CliResult<SurrogateModel> {
    require_input(path)?;
    SurrogateModel::load(path).map_err(context(path))
}

fn gen_dataset(cmd: GenDataset, workers: usize) -> CliResult<()> {
    require_output(&cmd.out, cmd.output.force)?;
    let cfg = Layered::load(cmd.config.as_ref())?;
    let defaults = DatasetConfig::default();
    let sigma: Option<f64> = cfg.pick(cmd.sigma.map(Some), "sigma", None)?;
    let base = sigma.map(FamilySigma::uniform).unwrap_or(defaults.sigma);
    let families: String = cfg.pick(cmd.families, "families", "all".to_string())?;
    let config = DatasetConfig {
        n: cfg.pick(cmd.n, "n", defaults.n)?,
        sigma: FamilySigma {
            outline: cfg.pick(cmd.sigma_outline, "sigma_outline", base.outline)?,
            thickness: cfg.pick(cmd.sigma_thickness, "sigma_thickness", base.thickness)?,
            material: cfg.pick(cmd.sigma_material, "sigma_material", base.material)?,
        },
        families: Families::parse(&families)?,
        seed: cfg.pick(cmd.seed, "seed", defaults.seed)?,
        oracle: OracleConfig {
            resolution: cfg.pick(cmd.resolution, "resolution", defaults.oracle.resolution)?,
            ..defaults.oracle
        },
        workers,
    };
    let set = generate(&ReferencePlate::violin(), &config)?;
    set.save(&cmd.out).map_err(context(&cmd.out))?;
    print_json(&json!({
        "path": cmd.out,
        "samples": set.len(),
        "seed": config.seed,
        "fingerprint": set.fingerprint(),
        "geometry_rejections": set.meta.geometry_rejections,
        "oracle_failures": set.meta.oracle_failures,
    }));
    Ok(())
}

fn train(cmd: Train) -> CliResult<()> {
    require_input(&cmd.dataset)?;
    require_output(&cmd.out, cmd.output.force)?;
    let cfg = Layered::load(cmd.config.as_ref())?;
    let defaults = TrainConfig::default();
    let inputs: String = cfg.pick(cmd.inputs, "inputs", "all".to_string())?;
    let config = TrainConfig {
        hidden: cfg.pick(cmd.hidden, "hidden", defaults.hidden)?,
        max_epochs: cfg.pick(cmd.epochs, "epochs", defaults.max_epochs)?,
        seed: cfg.pick(cmd.seed, "seed", defaults.seed)?,
        inputs: Families::parse(&inputs)?,
        ..defaults
    };
    let set = SampleSet::load(&cmd.dataset).map_err(context(&cmd.dataset))?;
    let model = SurrogateModel::train(&set, &config)?;
    let gate = model.gate(R2_THRESHOLD);
    if gate.is_ok() || cmd.allow_ungated {
        model.save(&cmd.out).map_err(context(&cmd.out))?;
    }
    gate?;
    print_json(&json!({
        "path": cmd.out,
        "seed": config.seed,
        "hidden": config.hidden,
        "r2_test": model.fit_report.r2_test_aggregate,
        "r2_train": model.fit_report.r2_train_aggregate,
        "epochs": model.fit_report.epochs,
        "stop_reason": model.fit_report.stop_reason,
    }));
    Ok(())
}

fn predict(cmd: Predict) -> CliResult<()> {
    let model = load_model(&cmd.model)?;
    let params: PlateParams = match &cmd.params {
        Some(p) => read_json(p)?,
        None => ReferencePlate::violin().params(),
    };
    params.validate()?;
    let f = model.predict(&params);
    print_json(&json!({ "freqs_hz": f, "f52": f[4] / f[1], "in_training_box": model.in_training_box(&params) }));
    Ok(())
}

/// File written by `optimize` and read by `cross-validate`.
#[derive(Serialize, Deserialize)]
struct RunRecord {
    seed: u64,
    model: PathBuf,
    dataset_fingerprint: String,
    run: OptimizationRun,
}

fn loss_spec(cmd: &Optimize, model: &SurrogateModel, reference: &ReferencePlate) -> CliResult<LossSpec> {
    let missing = |flag: &str| CliError::new("UsageError", format!("--loss {:?} needs --{flag}", cmd.loss));
    let spectrum = || -> CliResult<Vec<f64>> {
        match &cmd.reference_spectrum {
            Some(s) => parse_list(s),
            None => Ok(model.predict(&reference.params())),
        }
    };
    let spec = match cmd.loss {
        LossKind::Ratio => LossSpec::RatioTarget { alpha: cmd.alpha.ok_or_else(|| missing("alpha"))? },
        LossKind::Mode => LossSpec::ModeTarget {
            mode: cmd.mode.ok_or_else(|| missing("mode"))?,
            beta: cmd.beta.ok_or_else(|| missing("beta"))?,
        },
        LossKind::MeanAbs => LossSpec::SpectrumMeanAbs { reference: spectrum()? },
        LossKind::MeanShift => LossSpec::MeanShift { reference: spectrum()? },
    };
    spec.validate()?;
    Ok(spec)
}

fn optimize(cmd: Optimize) -> CliResult<()> {
    require_output(&cmd.out, cmd.output.force)?;
    let model = load_model(&cmd.model)?;
    let reference = ReferencePlate::violin();
    let spec = loss_spec(&cmd, &model, &reference)?;
    let free = parse_free(&cmd.free)?;
    let start: PlateParams = match &cmd.start {
        Some(p) => read_json(p)?,
        None => reference.params(),
    };
    let options = NelderMeadOptions::default();
    let run = if cmd.allow_ungated {
        optimizer::optimize_unchecked(&model, &spec, &start, &free, &options, &mut |_| {})?
    } else {
        optimizer::optimize_design(&model, &spec, &start, &free, &options, &mut |_| {})?
    };
    let summary = json!({
        "path": cmd.out,
        "seed": cmd.seed,
        "start_loss": run.start_loss,
        "best_loss": run.best_loss,
        "evaluations": run.evaluations,
        "status": run.status,
        "predicted_hz": run.predicted_hz,
    });
    let record = RunRecord {
        seed: cmd.seed,
        model: cmd.model.clone(),
        dataset_fingerprint: model.dataset_fingerprint.clone(),
        run,
    };
    write_json(&cmd.out, &record)?;
    print_json(&summary);
    Ok(())
}

fn cross_validate(cmd: CrossValidate) -> CliResult<()> {
    let record: RunRecord = read_json(&cmd.run)?;
    let oracle = OracleConfig { resolution: cmd.resolution, ..Default::default() };
    let cv = optimizer::cross_validate(&record.run, &ReferencePlate::violin(), &oracle)?;
    print_json(&serde_json::to_value(&cv).map_err(|e| CliError::new("Json", e.to_string()))?);
    Ok(())
}

fn study(cmd: Study, workers: usize) -> CliResult<()> {
    let name = StudyName::parse(&cmd.name)?;
    let report_path = cmd.out.join("report.json");
    if report_path.exists() && !cmd.output.force {
        return Err(CliError::new(
            "OutputExists",
            format!("{} exists; pass --force to overwrite", report_path.display()),
        ));
    }
    let model = load_model(&cmd.model)?;
    let reference = ReferencePlate::violin();
    let options = NelderMeadOptions::default();
    let oracle = OracleConfig { resolution: cmd.resolution, ..Default::default() };
    let ctx = StudyContext {
        reference: &reference,
        model: &model,
        options: &options,
        oracle: &oracle,
        workers,
        seed: cmd.seed,
    };
    let paths = match name {
        StudyName::Ratio => {
            let alphas = cmd.alphas.as_deref().map(parse_list).transpose()?.unwrap_or_else(experiments::default_alphas);
            experiments::write_report(&experiments::study_ratio(&ctx, &alphas)?, &reference, &cmd.out)?
        }
        StudyName::SingleModes => {
            experiments::write_report(&experiments::study_single_modes(&ctx, cmd.shift)?, &reference, &cmd.out)?
        }
        StudyName::Equivalence => {
            let sigmas =
                cmd.sigmas.as_deref().map(parse_list).transpose()?.unwrap_or(experiments::EQUIVALENCE_SIGMAS.to_vec());
            let report = experiments::study_equivalence(&ctx, &sigmas, cmd.replicates)?;
            experiments::write_report(&report, &reference, &cmd.out)?
        }
        StudyName::Material => {
            let report = experiments::study_material(&ctx, cmd.sigma, cmd.replicates)?;
            experiments::write_report(&report, &reference, &cmd.out)?
        }
        StudyName::Grid => {
            let report = experiments::study_density_modulus_grid(&ctx, &experiments::grid_scales())?;
            experiments::write_report(&report, &reference, &cmd.out)?
        }
    };
    print_json(&json!({ "study": cmd.name, "seed": cmd.seed, "artifacts": paths }));
    Ok(())
}

fn serve(cmd: Serve) -> CliResult<()> {
    let model = cmd.model.as_deref().map(load_model).transpose()?;
    let addr: SocketAddr = format!("{}:{}", cmd.host, cmd.port)
        .parse()
        .map_err(|e| CliError::new("UsageError", format!("bad address: {e}")))?;
    let state =
        AppState::new(model, ReferencePlate::violin(), ServiceConfig { workers: cmd.jobs, ..Default::default() });
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::new("Io", e.to_string()))?;
    eprintln!("listening on http://{addr}");
    runtime.block_on(tonewood_service::serve(state, addr)).map_err(|e| CliError::new("Io", e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenDataset(c) => gen_dataset(c, cli.workers),
        Command::Train(c) => train(c),
        Command::Predict(c) => predict(c),
        Command::Optimize(c) => optimize(c),
        Command::CrossValidate(c) => cross_validate(c),
        Command::Study(c) => study(c, cli.workers),
        Command::Serve(c) => serve(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: UsageError: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind, e.message.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
