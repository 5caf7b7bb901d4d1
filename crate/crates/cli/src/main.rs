//! `seqshap` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 model or transport failure,
//! 3 data error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use seqshap::orchestrator::VarianceStudy;
use seqshap::{
    build_background, connect_protocol_model, explain_corpus, global_aggregate, load_dataset, prune_scan,
    variance_study, BackgroundMatrix, CellConfig, Endpoint, Execution, ExplainConfig, ExplainMode, EventSchema,
    GruModel, ProtocolConfig, PruneConfig, SamplerConfig, SequenceExplanation, SequenceMatrix, SequenceScorer,
    SplitImportance, DEFAULT_ETA, DEFAULT_N_SAMPLES, DEFAULT_THETA,
};

#[derive(Parser)]
#[command(name = "seqshap", version, about = "Shapley explanations for sequence models")]
struct Cli {
    /// Worker threads for cross-sequence and coalition parallelism (1 runs sequentially).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Background instance construction.
    #[command(subcommand)]
    Background(BackgroundCommand),
    /// Explain every sequence in a dataset.
    Explain(ExplainArgs),
    /// Pruning diagnostics.
    #[command(subcommand)]
    Prune(PruneCommand),
    /// Corpus-level reports.
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Subcommand)]
enum BackgroundCommand {
    /// Per-feature mean (numeric) or mode (categorical) over all events.
    Build(BackgroundArgs),
}

#[derive(Subcommand)]
enum PruneCommand {
    /// Importance of the old and recent blocks at every split.
    Scan(ScanArgs),
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Pruned-length statistics and per-position attributions.
    Global(GlobalArgs),
    /// Relative standard deviation over repeated sampled runs.
    Rsd(RsdArgs),
}

#[derive(Args)]
struct BackgroundArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    background: Option<PathBuf>,
    /// gru:<weights.json>, proc:<command> or tcp:<host:port>
    #[arg(long)]
    model: String,
}

#[derive(Args)]
struct Sampling {
    #[arg(long, default_value_t = DEFAULT_N_SAMPLES)]
    nsamples: usize,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Event,
    Feature,
    Cell,
    All,
}

impl From<Mode> for ExplainMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Event => ExplainMode::Event,
            Mode::Feature => ExplainMode::Feature,
            Mode::Cell => ExplainMode::Cell,
            Mode::All => ExplainMode::All,
        }
    }
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long, value_enum, default_value = "all")]
    mode: Mode,
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    sampling: Sampling,
    #[arg(long, default_value_t = DEFAULT_THETA)]
    theta: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GlobalArgs {
    /// Directory of explanation files written by `explain`.
    #[arg(long)]
    explanations: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_N_SAMPLES)]
    nsamples: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum RsdMode {
    Event,
    Feature,
}

#[derive(Args)]
struct RsdArgs {
    #[arg(long)]
    repeats: usize,
    #[arg(long, value_enum, default_value = "event")]
    mode: RsdMode,
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    sampling: Sampling,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Model(String),
    Data(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Model(_) => 2,
            Failure::Data(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Model(m) | Failure::Data(m) => m,
        }
    }
}

impl From<seqshap::Error> for Failure {
    fn from(e: seqshap::Error) -> Self {
        if e.is_model_failure() {
            Failure::Model(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Failure::Data(format!("missing required flag --{flag}")))
}

enum ModelSpec {
    Gru(PathBuf),
    Remote(Endpoint),
}

fn parse_model(descriptor: &str) -> CliResult<ModelSpec> {
    let (kind, rest) = descriptor
        .split_once(':')
        .ok_or_else(|| Failure::Usage(format!("--model '{descriptor}' must start with gru:, proc: or tcp:")))?;
    if rest.is_empty() {
        return Err(Failure::Usage(format!("--model '{descriptor}' has nothing after '{kind}:'")));
    }
    match kind {
        "gru" => Ok(ModelSpec::Gru(rest.into())),
        "proc" => Ok(ModelSpec::Remote(Endpoint::Process(rest.to_string()))),
        "tcp" => Ok(ModelSpec::Remote(Endpoint::Tcp(rest.to_string()))),
        other => Err(Failure::Usage(format!("unknown model kind '{other}' in --model"))),
    }
}

fn load_model(spec: &ModelSpec) -> CliResult<Box<dyn SequenceScorer>> {
    match spec {
        ModelSpec::Gru(path) => {
            let model = GruModel::from_json_file(path)
                .map_err(|e| Failure::Model(format!("loading GRU weights from {}: {e}", path.display())))?;
            Ok(Box::new(model))
        }
        ModelSpec::Remote(endpoint) => Ok(Box::new(connect_protocol_model(endpoint, ProtocolConfig::default())?)),
    }
}

struct Loaded {
    data: Vec<SequenceMatrix>,
    background: BackgroundMatrix,
    scorer: Box<dyn SequenceScorer>,
}

fn load_inputs(inputs: &Inputs) -> CliResult<Loaded> {
    let model = parse_model(&inputs.model)?;
    let input = required(&inputs.input, "input")?;
    let schema_path = required(&inputs.schema, "schema")?;
    let background_path = required(&inputs.background, "background")?;
    let schema = EventSchema::from_json_file(schema_path)?;
    let data = load_dataset(input, &schema)?;
    if data.is_empty() {
        return Err(Failure::Data(format!("{} holds no sequences", input.display())));
    }
    let background = BackgroundMatrix::from_json_file(background_path)?;
    if background.feature_names != schema.feature_names {
        return Err(Failure::Data(format!(
            "background features {:?} do not match schema features {:?}",
            background.feature_names, schema.feature_names
        )));
    }
    let scorer = load_model(&model)?;
    Ok(Loaded {
        data,
        background,
        scorer,
    })
}

fn sampler(s: &Sampling) -> CliResult<SamplerConfig> {
    SamplerConfig::new(s.nsamples, s.seed).map_err(|e| Failure::Usage(format!("--nsamples: {e}")))
}

fn prune_config(s: &Sampling) -> CliResult<PruneConfig> {
    PruneConfig::new(s.eta).map_err(|e| Failure::Usage(format!("--eta: {e}")))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Data(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::Data(format!("writing {}: {e}", path.display())))
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

#[derive(Serialize, Default)]
struct ManifestConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    repeats: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    jobs: Option<usize>,
}

#[derive(Serialize)]
struct SequenceCount {
    entity: String,
    evaluations: usize,
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: ManifestConfig,
    inputs: BTreeMap<String, String>,
    output: String,
    evaluations: Vec<SequenceCount>,
    wall_time_seconds: f64,
}

struct Run {
    command: &'static str,
    started: Instant,
    jobs: Option<usize>,
}

impl Run {
    fn finish(
        &self,
        out: &Path,
        config: ManifestConfig,
        inputs: &[(&str, Option<&Path>)],
        evaluations: Vec<SequenceCount>,
    ) -> CliResult<()> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config: ManifestConfig {
                jobs: self.jobs,
                ..config
            },
            inputs: inputs
                .iter()
                .filter_map(|(k, p)| p.map(|p| (k.to_string(), p.display().to_string())))
                .collect(),
            output: out.display().to_string(),
            evaluations,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
        };
        write_json(&manifest_path(out), &manifest)
    }
}

fn background_build(run: &Run, args: &BackgroundArgs) -> CliResult<()> {
    let data_path = required(&args.data, "data")?;
    let schema_path = required(&args.schema, "schema")?;
    let schema = EventSchema::from_json_file(schema_path)?;
    let data = load_dataset(data_path, &schema)?;
    let background = build_background(&data, &schema)?;
    background.write_json_file(&args.out)?;
    run.finish(
        &args.out,
        ManifestConfig::default(),
        &[("data", Some(data_path)), ("schema", Some(schema_path))],
        Vec::new(),
    )
}

fn input_list(inputs: &Inputs) -> [(&'static str, Option<&Path>); 3] {
    [
        ("input", inputs.input.as_deref()),
        ("schema", inputs.schema.as_deref()),
        ("background", inputs.background.as_deref()),
    ]
}

fn explain(run: &Run, args: &ExplainArgs, exec: Execution) -> CliResult<()> {
    let config = ExplainConfig {
        mode: args.mode.into(),
        sampler: sampler(&args.sampling)?,
        prune: prune_config(&args.sampling)?,
        cell: CellConfig::new(args.theta).map_err(|e| Failure::Usage(format!("--theta: {e}")))?,
    };
    let loaded = load_inputs(&args.inputs)?;
    let runs = explain_corpus(&*loaded.scorer, &loaded.data, &loaded.background, &config, exec)?;
    let explanations: Vec<&SequenceExplanation> = runs.iter().map(|r| &r.explanation).collect();
    write_json(&args.out, &explanations)?;
    run.finish(
        &args.out,
        ManifestConfig {
            mode: Some(serde_json::to_value(args.mode).expect("plain enum")),
            seed: Some(args.sampling.seed),
            n_samples: Some(args.sampling.nsamples),
            eta: Some(args.sampling.eta),
            theta: Some(args.theta),
            model: Some(args.inputs.model.clone()),
            ..ManifestConfig::default()
        },
        &input_list(&args.inputs),
        runs.iter()
            .map(|r| SequenceCount {
                entity: r.explanation.entity.clone(),
                evaluations: r.evaluations,
            })
            .collect(),
    )
}

#[derive(Serialize)]
struct ScanOutput {
    entity: String,
    n_events: usize,
    rows: Vec<SplitImportance>,
}

fn scan(run: &Run, args: &ScanArgs, exec: Execution) -> CliResult<()> {
    let loaded = load_inputs(&args.inputs)?;
    let mut out = Vec::with_capacity(loaded.data.len());
    let mut counts = Vec::with_capacity(loaded.data.len());
    for x in &loaded.data {
        let rows = prune_scan(&*loaded.scorer, x, &loaded.background, exec)?;
        counts.push(SequenceCount {
            entity: x.entity_id().to_string(),
            evaluations: 2 * rows.len() + 2,
        });
        out.push(ScanOutput {
            entity: x.entity_id().to_string(),
            n_events: x.n_events(),
            rows,
        });
    }
    write_json(&args.out, &out)?;
    run.finish(
        &args.out,
        ManifestConfig {
            model: Some(args.inputs.model.clone()),
            ..ManifestConfig::default()
        },
        &input_list(&args.inputs),
        counts,
    )
}

fn read_explanations(dir: &Path) -> CliResult<Vec<SequenceExplanation>> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::Data(format!("reading {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            p.is_file() && name.ends_with(".json") && !name.ends_with(".manifest.json")
        })
        .collect();
    files.sort();
    let mut all = Vec::new();
    for path in files {
        let text = fs::read_to_string(&path).map_err(|e| Failure::Data(format!("reading {}: {e}", path.display())))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        let items = match value {
            Value::Array(items) => items,
            single => vec![single],
        };
        for item in items {
            let exp: SequenceExplanation = serde_json::from_value(item)
                .map_err(|e| Failure::Data(format!("{} is not an explanation file: {e}", path.display())))?;
            all.push(exp);
        }
    }
    if all.is_empty() {
        return Err(Failure::Data(format!("no explanations found in {}", dir.display())));
    }
    Ok(all)
}

fn report_global(run: &Run, args: &GlobalArgs) -> CliResult<()> {
    let dir = required(&args.explanations, "explanations")?;
    if args.nsamples < 2 {
        return Err(Failure::Usage("--nsamples must be at least 2".into()));
    }
    let explanations = read_explanations(dir)?;
    let report = global_aggregate(&explanations, args.nsamples)?;
    write_json(&args.out, &report)?;
    run.finish(
        &args.out,
        ManifestConfig {
            n_samples: Some(args.nsamples),
            ..ManifestConfig::default()
        },
        &[("explanations", Some(dir))],
        Vec::new(),
    )
}

#[derive(Serialize)]
struct RsdOutput {
    mode: RsdMode,
    repeats: usize,
    mean_rsd: f64,
    studies: Vec<VarianceStudy>,
}

fn report_rsd(run: &Run, args: &RsdArgs, exec: Execution) -> CliResult<()> {
    if args.repeats < 2 {
        return Err(Failure::Usage("--repeats must be at least 2".into()));
    }
    let config = ExplainConfig {
        mode: match args.mode {
            RsdMode::Event => ExplainMode::Event,
            RsdMode::Feature => ExplainMode::Feature,
        },
        sampler: sampler(&args.sampling)?,
        prune: prune_config(&args.sampling)?,
        cell: CellConfig::default(),
    };
    let loaded = load_inputs(&args.inputs)?;
    let studies = loaded
        .data
        .iter()
        .map(|x| variance_study(&*loaded.scorer, x, &loaded.background, &config, args.repeats, exec))
        .collect::<Result<Vec<_>, _>>()?;
    let mean_rsd = studies.iter().map(|s| s.rsd).sum::<f64>() / studies.len() as f64;
    write_json(
        &args.out,
        &RsdOutput {
            mode: args.mode,
            repeats: args.repeats,
            mean_rsd,
            studies,
        },
    )?;
    run.finish(
        &args.out,
        ManifestConfig {
            mode: Some(serde_json::to_value(args.mode).expect("plain enum")),
            seed: Some(args.sampling.seed),
            n_samples: Some(args.sampling.nsamples),
            eta: Some(args.sampling.eta),
            repeats: Some(args.repeats),
            model: Some(args.inputs.model.clone()),
            ..ManifestConfig::default()
        },
        &input_list(&args.inputs),
        Vec::new(),
    )
}

fn execution(jobs: Option<usize>) -> CliResult<Execution> {
    match jobs {
        None => Ok(Execution::Parallel),
        Some(0) => Err(Failure::Usage("--jobs must be at least 1".into())),
        Some(1) => Ok(Execution::Sequential),
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::Usage(format!("--jobs: {e}")))?;
            Ok(Execution::Parallel)
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let exec = execution(cli.jobs)?;
    let command = match &cli.command {
        Command::Background(_) => "background build",
        Command::Explain(_) => "explain",
        Command::Prune(_) => "prune scan",
        Command::Report(ReportCommand::Global(_)) => "report global",
        Command::Report(ReportCommand::Rsd(_)) => "report rsd",
    };
    let run = Run {
        command,
        started: Instant::now(),
        jobs: cli.jobs,
    };
    match &cli.command {
        Command::Background(BackgroundCommand::Build(a)) => background_build(&run, a),
        Command::Explain(a) => explain(&run, a, exec),
        Command::Prune(PruneCommand::Scan(a)) => scan(&run, a, exec),
        Command::Report(ReportCommand::Global(a)) => report_global(&run, a),
        Command::Report(ReportCommand::Rsd(a)) => report_rsd(&run, a, exec),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
