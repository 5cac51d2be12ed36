use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use healthguard_core::classifiers::{train, Algorithm, Hyperparams};
use healthguard_core::domain::ConditionLabel;
use healthguard_core::eval::{
    render_table, run_detection_with_split, run_device_ablation, run_simultaneous_attacks, Experiment, SplitMode,
    DEFAULT_STAGGER_MINUTES,
};
use healthguard_core::pipeline::LabeledDataset;
use healthguard_core::simulator::build_dataset;

use crate::alert::alert_for;
use crate::config::{self, RunConfig};
use crate::error::CliError;
use crate::{dataset, model_io, report};

#[derive(Debug, Parser)]
#[command(name = "healthguard", version, about = "Synthetic smart-healthcare telemetry and attack detection")]
pub struct Cli {
    /// Seed for generation, splitting and training; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run configuration (key = value lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate patients and attacks and write a labeled dataset.
    Generate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one detector on a dataset file.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// KNN, DT, RF or ANN.
        #[arg(long)]
        algo: String,
        #[arg(long)]
        out: PathBuf,
        /// Hyperparameter override, repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run a model over a dataset file and write one alert per malicious minute.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment and write `<experiment>.txt` and `<experiment>.csv`.
    Evaluate {
        /// detection, ablation or simultaneous.
        #[arg(long)]
        experiment: String,
        /// Dataset for the detection experiment; generated from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        algos: Vec<String>,
        /// Device counts for the ablation.
        #[arg(long, value_delimiter = ',')]
        devices: Vec<usize>,
        /// Concurrent attack kinds for the simultaneous experiment (0 = control).
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<usize>,
        /// Seeds to average over; defaults to five consecutive seeds from --seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Minutes between the onsets of concurrent attacks.
        #[arg(long)]
        stagger: Option<u32>,
        /// stratified or literal.
        #[arg(long, default_value = "stratified")]
        split: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

struct Ctx {
    config: RunConfig,
    seed: u64,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn hyperparams(&self, overrides: &[String]) -> Result<Hyperparams, CliError> {
        let mut hp = self.config.hyperparams.clone();
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{o}'")))?;
            hp.set(k, v)?;
        }
        hp.validate()?;
        Ok(hp)
    }
}

fn algorithms(names: &[String]) -> Result<Vec<Algorithm>, CliError> {
    if names.is_empty() {
        return Ok(Algorithm::ALL.to_vec());
    }
    Ok(names.iter().map(|n| n.parse()).collect::<Result<_, _>>()?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn generate(ctx: &Ctx, out: &Path) -> Result<(), CliError> {
    let ds = build_dataset(&ctx.config.dataset.clone().with_seed(ctx.seed))?;
    dataset::save(out, &ds.instances)?;
    let counts = ds.class_counts();
    ctx.say(format!("wrote {} instances to {}", ds.len(), out.display()));
    for &c in ConditionLabel::ALL {
        ctx.say(format!("  {:<20}{:>7}", c.name(), counts[c.index()]));
    }
    Ok(())
}

fn train_cmd(ctx: &Ctx, data: &Path, algo: &str, out: &Path, set: &[String]) -> Result<(), CliError> {
    let algorithm: Algorithm = algo.parse()?;
    let hp = ctx.hyperparams(set)?;
    let ds = dataset::load(data)?;
    let started = Instant::now();
    let model = train(algorithm, &ds, &hp, ctx.seed)?;
    let elapsed = started.elapsed();
    let vectors: Vec<_> = ds.instances.iter().map(|i| i.vector).collect();
    let correct = model.predict_batch(&vectors).iter().zip(&ds.instances).filter(|(p, i)| p.label == i.label).count();
    model_io::save(out, &model)?;
    ctx.say(format!(
        "trained {algorithm} on {} instances in {:.2}s; training accuracy {:.4}",
        ds.len(),
        elapsed.as_secs_f64(),
        correct as f64 / ds.len() as f64
    ));
    Ok(())
}

fn detect(ctx: &Ctx, model_path: &Path, data: &Path, out: &Path) -> Result<(), CliError> {
    let model = model_io::load(model_path)?;
    let instances = dataset::load_instances(data)?;
    let vectors: Vec<_> = instances.iter().map(|i| i.vector).collect();
    let preds = model.predict_batch(&vectors);
    let mut text = Vec::new();
    let mut by_kind = [0usize; 3];
    for (v, p) in vectors.iter().zip(&preds) {
        if let Some(a) = alert_for(&model, v, p) {
            by_kind[ConditionLabel::ATTACKS.iter().position(|&k| k == a.kind).unwrap()] += 1;
            writeln!(text, "{a}").unwrap();
        }
    }
    write_file(out, &text)?;
    let total: usize = by_kind.iter().sum();
    let breakdown: Vec<String> =
        ConditionLabel::ATTACKS.iter().zip(by_kind).map(|(k, n)| format!("{k} {n}")).collect();
    ctx.say(format!("{} instances, {total} alerts ({})", instances.len(), breakdown.join(", ")));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    ctx: &Ctx,
    experiment: &str,
    data: Option<&Path>,
    out: &Path,
    algos: &[String],
    devices: &[usize],
    kinds: &[usize],
    seeds: &[u64],
    stagger: Option<u32>,
    split: &str,
    set: &[String],
) -> Result<(), CliError> {
    let experiment: Experiment = experiment.parse()?;
    let algorithms = algorithms(algos)?;
    let hp = ctx.hyperparams(set)?;
    let mode: SplitMode = split.parse()?;
    let seeds: Vec<u64> =
        if seeds.is_empty() { (0..5).map(|i| ctx.seed.wrapping_add(i)).collect() } else { seeds.to_vec() };
    let base = &ctx.config.dataset;
    let result = match experiment {
        Experiment::Detection => {
            let ds: LabeledDataset = match data {
                Some(p) => dataset::load(p)?,
                None => build_dataset(&base.clone().with_seed(ctx.seed))?,
            };
            run_detection_with_split(&ds, &algorithms, &hp, ctx.seed, mode)?
        }
        Experiment::Ablation => {
            let counts = if devices.is_empty() { vec![4, 5, 6, 7, 8] } else { devices.to_vec() };
            run_device_ablation(base, &counts, &algorithms, &hp, &seeds)?
        }
        Experiment::Simultaneous => {
            let kinds = if kinds.is_empty() { vec![0, 1, 2, 3] } else { kinds.to_vec() };
            run_simultaneous_attacks(base, &kinds, &algorithms, &hp, &seeds, stagger.unwrap_or(DEFAULT_STAGGER_MINUTES))?
        }
    };
    let (table, csv) = report::write(&result, out)?;
    ctx.say(render_table(&result));
    ctx.say(format!("wrote {} and {}", table.display(), csv.display()));
    Ok(())
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("HG_THREADS") else { return Ok(()) };
    let n: usize =
        raw.trim().parse().map_err(|_| CliError::Usage(format!("HG_THREADS must be a non-negative integer, got '{raw}'")))?;
    if n > 0 {
        // Fails only if a pool already exists, which leaves the earlier setting in force.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let config = match &cli.config {
        Some(p) => config::load(p)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.unwrap_or(config.dataset.scenario.seed);
    let ctx = Ctx { config, seed, quiet: cli.quiet };
    match &cli.command {
        Command::Generate { out } => generate(&ctx, out),
        Command::Train { data, algo, out, set } => train_cmd(&ctx, data, algo, out, set),
        Command::Detect { model, data, out } => detect(&ctx, model, data, out),
        Command::Evaluate { experiment, data, out, algos, devices, kinds, seeds, stagger, split, set } => evaluate(
            &ctx,
            experiment,
            data.as_deref(),
            out,
            algos,
            devices,
            kinds,
            seeds,
            *stagger,
            split,
            set,
        ),
    }
}

/// Parses `args` and runs the command; returns the process exit code (0, 2 or 3).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
