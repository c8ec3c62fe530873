//! Command-line front end: synthesize data, train, evaluate, run ablations,
//! check gradients and render saved reports.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

mod config;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dcdp::data::{
    load_csv, load_dataset, normalize_splits, save_dataset, sliding_windows, stratified_split, synth_generate,
    WindowedDataset,
};
use dcdp::model::{checkpoint, ChannelPartition};
use dcdp::train::{
    check_total_loss, evaluate, leave_one_out_grid, miniature_problem, run_ablation, table_grid, AblationReport,
    Evaluation, JsonLinesLog, Trainer,
};
use dcdp::{Error, Result};
use serde::{Deserialize, Serialize};

use config::{FileConfig, TrainOverrides};

#[derive(Parser)]
#[command(name = "dcdp", version, about = "Dual-path contrastive activity recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-modality dataset and write it as a cache file.
    Synth(SynthArgs),
    /// Train a model and report test metrics.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset.
    Eval(EvalArgs),
    /// Train every configuration of an ablation grid over consecutive seeds.
    Ablate(AblateArgs),
    /// Finite-difference check of the full training objective on a miniature network.
    Gradcheck(GradcheckArgs),
    /// Print the human-readable table of a saved metrics or ablation report.
    Report(ReportArgs),
}

#[derive(clap::Args)]
struct SynthArgs {
    /// Output dataset cache.
    #[arg(long)]
    out: PathBuf,
    /// TOML config; its `[synth]` table provides defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    first_channels: Option<usize>,
    #[arg(long)]
    second_channels: Option<usize>,
    #[arg(long)]
    window_len: Option<usize>,
    #[arg(long)]
    samples_per_class: Option<usize>,
    #[arg(long)]
    dominance: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(clap::Args)]
struct DataArgs {
    /// Training data: a dataset cache or a CSV recording.
    #[arg(long)]
    data: PathBuf,
    /// Held-out data in the same format. Without it a stratified split of
    /// `--data` is used.
    #[arg(long)]
    test_data: Option<PathBuf>,
    /// Share of windows held out when splitting.
    #[arg(long)]
    test_fraction: Option<f64>,
    /// TOML config file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    overrides: TrainOverrides,
    /// Where to write the trained checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Per-batch training log (JSON lines).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Directory for metrics.json, confusion.csv and the normalized test split.
    #[arg(long)]
    report_dir: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset cache to evaluate on.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long)]
    report_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    /// Full model and each single-component removal.
    LeaveOneOut,
    /// The nine component combinations of the published ablation table.
    Table,
}

#[derive(clap::Args)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// First of the consecutive seeds.
    #[arg(long)]
    seed: u64,
    /// Number of seeds per configuration.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    #[arg(long, value_enum, default_value_t = Grid::LeaveOneOut)]
    grid: Grid,
    #[command(flatten)]
    overrides: TrainOverrides,
    /// Machine-readable report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for one training log per run.
    #[arg(long)]
    log_dir: Option<PathBuf>,
}

#[derive(clap::Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    perturbation: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(clap::Args)]
struct ReportArgs {
    /// metrics.json written by `train`/`eval`, or an ablation report from `ablate`.
    input: PathBuf,
}

/// Structured metrics file written by `train` and `eval`.
#[derive(Serialize, Deserialize)]
struct MetricsFile {
    class_names: Vec<String>,
    evaluation: Evaluation,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::NonFiniteLoss { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn synth(a: SynthArgs) -> Result<ExitCode> {
    let mut cfg = FileConfig::load(a.config.as_deref())?.synth;
    if let Some(v) = a.classes {
        cfg.classes = v;
    }
    if let Some(v) = a.first_channels {
        cfg.channels[0] = v;
    }
    if let Some(v) = a.second_channels {
        cfg.channels[1] = v;
    }
    if let Some(v) = a.window_len {
        cfg.window_len = v;
    }
    if let Some(v) = a.samples_per_class {
        cfg.samples_per_class = v;
    }
    if let Some(v) = a.dominance {
        cfg.dominance = v;
    }
    if let Some(v) = a.noise_std {
        cfg.noise_std = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    let ds = synth_generate(&cfg)?;
    save_dataset(&ds, &a.out)?;
    println!("wrote {} windows of shape {:?} to {}", ds.len(), &ds.windows.shape()[1..], a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn read_data(path: &Path, file: &FileConfig) -> Result<WindowedDataset> {
    if !is_csv(path) {
        return load_dataset(path);
    }
    let d = &file.data;
    let rec = load_csv(path, &d.schema()?)?;
    let partition = match &d.first_channels {
        Some(first) => {
            let second = (0..rec.channels()).filter(|c| !first.contains(c)).collect();
            ChannelPartition::new(first.clone(), second, rec.channels())?
        }
        None => ChannelPartition::from_channel_names(&rec.channel_names)?,
    };
    let ds = sliding_windows(&rec, d.window_len, d.stride, &partition)?;
    if ds.is_empty() {
        return Err(Error::Contract(format!(
            "{} yields no windows of length {}",
            path.display(),
            d.window_len
        )));
    }
    Ok(ds)
}

/// Loads training and test data and normalizes both with training statistics.
fn prepare(args: &DataArgs, file: &FileConfig, split_seed: u64) -> Result<(WindowedDataset, WindowedDataset)> {
    let data = read_data(&args.data, file)?;
    let (mut train, mut test) = match &args.test_data {
        Some(p) => (data, read_data(p, file)?),
        None => {
            let fraction = args.test_fraction.unwrap_or(file.data.test_fraction);
            stratified_split(&data, fraction, split_seed)?
        }
    };
    if train.normalization.is_none() && test.normalization.is_none() {
        normalize_splits(&mut train, &mut test)?;
    }
    log::info!("{} training and {} test windows", train.len(), test.len());
    Ok((train, test))
}

fn write_reports(dir: &Path, class_names: &[String], evaluation: &Evaluation) -> Result<()> {
    fs::create_dir_all(dir)?;
    let metrics = MetricsFile {
        class_names: class_names.to_vec(),
        evaluation: evaluation.clone(),
    };
    let json = serde_json::to_string_pretty(&metrics).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join("metrics.json"), json)?;
    fs::write(dir.join("confusion.csv"), evaluation.confusion.to_csv(class_names))?;
    Ok(())
}

fn print_evaluation(class_names: &[String], e: &Evaluation) {
    print!("{}", e.report.summary(class_names));
    match e.dense_accuracy {
        Some(d) => println!("branch accuracy: residual {:.4}, dense {:.4}", e.res_accuracy, d),
        None => println!("branch accuracy: residual {:.4}", e.res_accuracy),
    }
}

fn train(a: TrainArgs) -> Result<ExitCode> {
    let file = FileConfig::load(a.data.config.as_deref())?;
    let mut cfg = file.train.clone();
    a.overrides.apply(&mut cfg)?;
    cfg.seed = a.seed;
    cfg.validate()?;
    let (train, test) = prepare(&a.data, &file, a.seed)?;
    let mut trainer = Trainer::new(cfg, train.partition.clone(), train.classes())?;
    let epochs = trainer.config().epochs;
    let mut sink: Box<dyn dcdp::train::BatchSink> = match &a.log {
        Some(p) => Box::new(JsonLinesLog::new(BufWriter::new(File::create(p)?))),
        None => Box::new(dcdp::train::NullSink),
    };
    for _ in 0..epochs {
        let log = trainer.train_epoch(&train, sink.as_mut())?;
        log::info!(
            "epoch {} loss {:.4} batch accuracy {:.4}",
            log.epoch + 1,
            log.mean_total_loss,
            log.batch_accuracy
        );
    }
    drop(sink);
    let evaluation = trainer.evaluate(&test)?;
    checkpoint::save(trainer.network(), &a.out)?;
    print_evaluation(&test.class_names, &evaluation);
    if let Some(dir) = &a.report_dir {
        write_reports(dir, &test.class_names, &evaluation)?;
        save_dataset(&test, dir.join("test.dset"))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn eval(a: EvalArgs) -> Result<ExitCode> {
    let mut net = checkpoint::load(&a.model)?;
    let data = load_dataset(&a.data)?;
    if data.partition != net.config().partition {
        return Err(Error::Contract("dataset partition does not match the model".into()));
    }
    let evaluation = evaluate(&mut net, &data, a.batch_size)?;
    print_evaluation(&data.class_names, &evaluation);
    if let Some(dir) = &a.report_dir {
        write_reports(dir, &data.class_names, &evaluation)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn ablate(a: AblateArgs) -> Result<ExitCode> {
    let file = FileConfig::load(a.data.config.as_deref())?;
    let mut cfg = file.train.clone();
    a.overrides.apply(&mut cfg)?;
    cfg.validate()?;
    let (train, test) = prepare(&a.data, &file, a.seed)?;
    let grid = match a.grid {
        Grid::LeaveOneOut => leave_one_out_grid(),
        Grid::Table => table_grid(),
    };
    let seeds: Vec<u64> = (a.seed..a.seed + a.seeds).collect();
    if let Some(dir) = &a.log_dir {
        fs::create_dir_all(dir)?;
    }
    let report = run_ablation(&cfg, &grid, &seeds, &train, &test, a.log_dir.as_deref())?;
    print!("{}", report.table());
    if let Some(out) = &a.out {
        let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(out, json)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    let (mut net, x, labels) = miniature_problem(a.seed)?;
    let report = check_total_loss(&mut net, &x, &labels, 0.5, 0.7, a.perturbation, a.tolerance)?;
    for p in &report.params {
        println!(
            "{:<28} {:>6} max rel {:.3e}{}",
            p.name,
            net.params.value(p.id).len(),
            p.max_rel_error,
            if p.flagged { "  FLAGGED" } else { "" }
        );
    }
    println!(
        "{} parameters, {} elements, max relative error {:.3e} (tolerance {:.0e})",
        report.params.len(),
        report.checked_elements(&net.params),
        report.max_rel_error(),
        a.tolerance
    );
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn report(a: ReportArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&a.input)?;
    if let Ok(m) = serde_json::from_str::<MetricsFile>(&text) {
        print_evaluation(&m.class_names, &m.evaluation);
        return Ok(ExitCode::SUCCESS);
    }
    let report: AblationReport = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{} is neither a metrics nor an ablation report: {e}", a.input.display())))?;
    print!("{}", report.table());
    Ok(ExitCode::SUCCESS)
}
