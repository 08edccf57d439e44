//! `hacood`: build, score and evaluate hypercone contour models from the shell.
//!
//! Exit codes: 0 success, 2 usage or input error, 1 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use hacood::contour::{build_model_with_report, AxisMode, BuildConfig, KMode, LambdaMode};
use hacood::io::{self, Format};
use hacood::{adaptive_k, metrics, scoring, sweep, synth, EmbeddingSet};

#[derive(Parser)]
#[command(name = "hacood", version, about = "Hypercone contour OOD detection")]
struct Cli {
    /// Worker threads; 0 uses every core. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a model from labeled embeddings and write it to --model.
    Build(BuildCmd),
    /// Score embeddings with a saved model and write `index,score,decision` rows.
    Score(ScoreCmd),
    /// FPR at the target TPR and AUROC for ID vs OOD embeddings.
    Eval(EvalCmd),
    /// Per-class adaptive k diagnostics.
    AdaptiveK(AdaptiveKCmd),
    /// Write synthetic embeddings.
    Synth(SynthCmd),
    /// FPR/AUROC for a list of fixed k values, optionally plus adaptive k.
    Sweep(SweepCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Npy,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum LambdaModeArg {
    PerObservation,
    Pooled,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisModeArg {
    Data,
    Random,
}

fn parse_k(s: &str) -> Result<KMode, String> {
    if s.eq_ignore_ascii_case("adaptive") {
        return Ok(KMode::Adaptive);
    }
    match s.parse::<usize>() {
        Ok(0) => Err("k must be a positive integer or 'adaptive', got 0".into()),
        Ok(k) => Ok(KMode::Fixed(k)),
        Err(_) => Err(format!("expected a positive integer or 'adaptive', got {s:?}")),
    }
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be positive".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Args)]
struct InputArgs {
    /// Training embeddings (.npy or CSV).
    #[arg(long)]
    train: PathBuf,
    /// Training labels (.npy or single-column CSV).
    #[arg(long)]
    train_labels: PathBuf,
    /// Held-out ID embeddings added to the calibration set.
    #[arg(long, requires = "test_labels")]
    test: Option<PathBuf>,
    #[arg(long, requires = "test")]
    test_labels: Option<PathBuf>,
    /// Embedding format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Neighbour count: a positive integer or `adaptive`.
    #[arg(long, default_value = "adaptive", value_parser = parse_k)]
    k: KMode,
    #[arg(long, default_value_t = 0.95)]
    tpr: f64,
    /// Radial boundary is mean + sigma * std of member distances.
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    #[arg(long, value_enum, default_value = "per-observation")]
    lambda_mode: LambdaModeArg,
    /// Snap each class centroid to its nearest training observation.
    #[arg(long)]
    centroid_snap: bool,
    #[arg(long, value_enum, default_value = "data")]
    axis_mode: AxisModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ConfigArgs {
    fn to_config(&self) -> BuildConfig {
        BuildConfig {
            k_mode: self.k,
            sigma_multiplier: self.sigma,
            tpr_target: self.tpr,
            centroid_snap: self.centroid_snap,
            lambda_mode: match self.lambda_mode {
                LambdaModeArg::PerObservation => LambdaMode::PerObservation,
                LambdaModeArg::Pooled => LambdaMode::Pooled,
            },
            axis_mode: match self.axis_mode {
                AxisModeArg::Data => AxisMode::Data,
                AxisModeArg::Random => AxisMode::Random,
            },
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct BuildCmd {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output model file.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct ScoreCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Score CSV to write.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalCmd {
    #[arg(long)]
    model: PathBuf,
    /// ID evaluation embeddings.
    #[arg(long)]
    id: PathBuf,
    /// OOD evaluation embeddings.
    #[arg(long)]
    ood: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Target TPR; defaults to the model's.
    #[arg(long)]
    tpr: Option<f64>,
    /// Raw score dump for the ID set.
    #[arg(long)]
    id_scores: Option<PathBuf>,
    /// Raw score dump for the OOD set.
    #[arg(long)]
    ood_scores: Option<PathBuf>,
    /// One-row metrics CSV.
    #[arg(long)]
    report_csv: Option<PathBuf>,
}

#[derive(Args)]
struct AdaptiveKCmd {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    train_labels: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    centroid_snap: bool,
    /// Per-class CSV.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    /// One class of five close Gaussian lobes.
    FigA2,
    /// `--classes` five-lobe classes with centers 8 apart on the x axis.
    MultiLobe,
    /// Uniform entries on [--lo, --hi].
    Uniform,
    /// Uniform directions, radii uniform on [--inner, --outer].
    Shell,
    /// Gaussian with per-axis std halving from 4.
    Anisotropic,
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long, value_enum)]
    scenario: Scenario,
    #[arg(long, value_parser = parse_positive)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 2, value_parser = parse_positive)]
    classes: usize,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    lo: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    hi: f64,
    #[arg(long, default_value_t = 3.0)]
    inner: f64,
    #[arg(long, default_value_t = 5.0)]
    outer: f64,
    /// Embedding output (.npy or CSV).
    #[arg(long)]
    output: PathBuf,
    /// Label output (.npy or CSV); labeled scenarios only.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct SweepCmd {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// ID evaluation embeddings.
    #[arg(long)]
    id: PathBuf,
    /// OOD evaluation embeddings.
    #[arg(long)]
    ood: PathBuf,
    /// Comma-separated k values; powers of two up to n/4 of the smallest class when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_positive)]
    k_list: Option<Vec<usize>>,
    /// Append an adaptive-k row.
    #[arg(long)]
    adaptive: bool,
    /// Sweep CSV.
    #[arg(long)]
    output: PathBuf,
}

/// Exit code plus message.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    /// Bad input data or flags.
    fn input(e: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            error: e.into(),
        }
    }

    fn internal(e: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 1,
            error: e.into(),
        }
    }
}

type Outcome = Result<(), Failure>;

trait InputContext<T> {
    fn input(self) -> Result<T, Failure>;
    fn internal(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> InputContext<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(Failure::input)
    }

    fn internal(self) -> Result<T, Failure> {
        self.map_err(Failure::internal)
    }
}

fn format_for(path: &Path, flag: Option<FormatArg>) -> Format {
    match flag {
        Some(FormatArg::Npy) => Format::Npy,
        Some(FormatArg::Csv) => Format::Csv,
        None => Format::from_path(path),
    }
}

fn read(path: &Path, labels: Option<&Path>, flag: Option<FormatArg>) -> Result<EmbeddingSet, Failure> {
    io::read_embeddings(path, labels, format_for(path, flag))
        .with_context(|| format!("reading {}", path.display()))
        .input()
}

fn read_inputs(a: &InputArgs) -> Result<(EmbeddingSet, Option<EmbeddingSet>), Failure> {
    let train = read(&a.train, Some(&a.train_labels), a.format)?;
    let test = match (&a.test, &a.test_labels) {
        (Some(t), Some(l)) => Some(read(t, Some(l), a.format)?),
        _ => None,
    };
    Ok((train, test))
}

fn build(cmd: &BuildCmd) -> Outcome {
    let (train, test) = read_inputs(&cmd.input)?;
    let config = cmd.config.to_config();
    let (model, report) = build_model_with_report(&train, test.as_ref(), &config).input()?;
    io::save_model(&cmd.model, &model).internal()?;
    println!("classes={}", report.classes.len());
    println!("dim={}", model.dim());
    println!("lambda={}", report.lambda);
    println!("calibration_count={}", report.calibration_count);
    println!("calibration_tpr={}", report.calibration_tpr);
    for c in &report.classes {
        println!(
            "class.{}=train:{} test:{} k:{} cones:{} apex_rows:{}",
            c.label, c.train_count, c.test_count, c.k, c.cone_count, c.apex_rows
        );
    }
    println!("model={}", cmd.model.display());
    Ok(())
}

fn score(cmd: &ScoreCmd) -> Outcome {
    let model = io::load_model(&cmd.model).input()?;
    let set = read(&cmd.input, None, cmd.format)?;
    let results = scoring::score_batch(&model, &set).input()?;
    io::write_scores(&cmd.output, &results).internal()?;
    let id = results.iter().filter(|r| r.is_id).count();
    println!("count={}", results.len());
    println!("id_count={id}");
    println!("ood_count={}", results.len() - id);
    println!("sentinels={}", results.iter().filter(|r| r.score.is_infinite()).count());
    println!("lambda={}", model.lambda());
    println!("output={}", cmd.output.display());
    Ok(())
}

fn eval(cmd: &EvalCmd) -> Outcome {
    let model = io::load_model(&cmd.model).input()?;
    let id = read(&cmd.id, None, cmd.format)?;
    let ood = read(&cmd.ood, None, cmd.format)?;
    let id_results = scoring::score_batch(&model, &id).input()?;
    let ood_results = scoring::score_batch(&model, &ood).input()?;
    let tpr = cmd.tpr.unwrap_or(model.config().tpr_target);
    let id_scores: Vec<f64> = id_results.iter().map(|r| r.score).collect();
    let ood_scores: Vec<f64> = ood_results.iter().map(|r| r.score).collect();
    let report = metrics::evaluate(&id_scores, &ood_scores, tpr).input()?;
    if let Some(p) = &cmd.id_scores {
        io::write_scores(p, &id_results).internal()?;
    }
    if let Some(p) = &cmd.ood_scores {
        io::write_scores(p, &ood_results).internal()?;
    }
    if let Some(p) = &cmd.report_csv {
        let text = format!("{}\n{}\n", metrics::EvalReport::CSV_HEADER, report.to_csv_row());
        io::write_atomic(p, text.as_bytes()).internal()?;
    }
    print!("{}", report.to_key_values());
    println!("lambda={}", model.lambda());
    println!("id_accepted_at_lambda={}", id_results.iter().filter(|r| r.is_id).count());
    println!("ood_accepted_at_lambda={}", ood_results.iter().filter(|r| r.is_id).count());
    Ok(())
}

fn adaptive_k_cmd(cmd: &AdaptiveKCmd) -> Outcome {
    let train = read(&cmd.train, Some(&cmd.train_labels), cmd.format)?;
    let report = adaptive_k::report(&train, cmd.seed, cmd.centroid_snap).input()?;
    if let Some(p) = &cmd.output {
        io::write_atomic(p, report.to_csv().as_bytes()).internal()?;
    }
    println!("seed={}", report.seed);
    for r in &report.classes {
        println!(
            "class.{}=n:{} d:{} k_upper:{} zeta:{} density_ratio:{} k:{}",
            r.label, r.n, r.d, r.k_upper, r.zeta, r.density_ratio, r.k_final
        );
    }
    Ok(())
}

fn synth_cmd(cmd: &SynthCmd) -> Outcome {
    let set = match cmd.scenario {
        Scenario::FigA2 => synth::fig_a2_mixture(cmd.n, cmd.seed),
        Scenario::MultiLobe => {
            let centers: Vec<[f64; 2]> = (0..cmd.classes).map(|i| [8.0 * i as f64, 0.0]).collect();
            synth::multi_lobe_classes(&centers, cmd.n, cmd.seed)
        }
        Scenario::Uniform => synth::uniform_box(cmd.n, cmd.dim, cmd.lo, cmd.hi, cmd.seed),
        Scenario::Shell => synth::shell_ood(cmd.n, cmd.dim, &vec![0.0; cmd.dim], cmd.inner, cmd.outer, cmd.seed),
        Scenario::Anisotropic => {
            let scales: Vec<f64> = (0..cmd.dim).map(|i| 4.0 * 0.5f64.powi(i as i32)).collect();
            synth::anisotropic_gaussian(cmd.n, &vec![0.0; cmd.dim], &scales, cmd.seed, 0)
        }
    }
    .input()?;
    let labels = match &cmd.labels {
        Some(p) => Some((
            p,
            set.labels()
                .context("this scenario produces unlabeled data; drop --labels")
                .input()?,
        )),
        None => None,
    };
    io::write_embeddings(&cmd.output, &set, Format::from_path(&cmd.output)).internal()?;
    if let Some((p, labels)) = labels {
        io::write_labels(p, labels).internal()?;
    }
    println!("rows={}", set.len());
    println!("dim={}", set.dim());
    println!("output={}", cmd.output.display());
    Ok(())
}

fn sweep_cmd(cmd: &SweepCmd) -> Outcome {
    let (train, test) = read_inputs(&cmd.input)?;
    let id = read(&cmd.id, None, cmd.input.format)?;
    let ood = read(&cmd.ood, None, cmd.input.format)?;
    let ks = match &cmd.k_list {
        Some(ks) => ks.clone(),
        None => {
            let groups = train.class_indices().input()?;
            let smallest = groups.values().map(Vec::len).min().unwrap_or(0);
            sweep::power_of_two_grid(smallest)
        }
    };
    let mut modes: Vec<KMode> = ks.into_iter().map(KMode::Fixed).collect();
    if cmd.adaptive {
        modes.push(KMode::Adaptive);
    }
    if modes.is_empty() {
        return Err(Failure::input(anyhow::anyhow!("--k-list is empty and --adaptive is not set")));
    }
    let rows = sweep::sweep(&train, test.as_ref(), &id, &ood, &cmd.config.to_config(), &modes).input()?;
    let mut text = String::from(sweep::SweepRow::CSV_HEADER);
    text.push('\n');
    for r in &rows {
        text.push_str(&r.to_csv_row());
        text.push('\n');
    }
    io::write_atomic(&cmd.output, text.as_bytes()).internal()?;
    let best = rows
        .iter()
        .filter(|r| matches!(r.k_mode, KMode::Fixed(_)))
        .min_by(|a, b| a.report.fpr_at_tpr.total_cmp(&b.report.fpr_at_tpr));
    println!("rows={}", rows.len());
    if let Some(b) = best {
        if let KMode::Fixed(k) = b.k_mode {
            println!("best_k={k}");
        }
        println!("best_fpr_at_tpr={}", b.report.fpr_at_tpr);
    }
    if let Some(a) = rows.iter().find(|r| r.k_mode == KMode::Adaptive) {
        println!("adaptive_fpr_at_tpr={}", a.report.fpr_at_tpr);
    }
    println!("output={}", cmd.output.display());
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Build(c) => build(c),
        Command::Score(c) => score(c),
        Command::Eval(c) => eval(c),
        Command::AdaptiveK(c) => adaptive_k_cmd(c),
        Command::Synth(c) => synth_cmd(c),
        Command::Sweep(c) => sweep_cmd(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| pool.install(|| run(&cli)))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(1),
    }
}
