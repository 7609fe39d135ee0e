use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vcil::commands::{
    self, format_split_stats, ReportArgs, RunArgs, RunOutcome, SplitArgs, TrainingOverrides, ROW_HEADER,
};
use vcil::dataset::SyntheticConfig;
use vcil::store::STORE_ENV;

/// Class-incremental learning benchmark for video classification.
#[derive(Parser)]
#[command(name = "vcil", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cut a manifest into class-disjoint tasks and print split statistics.
    Split {
        /// JSONL dataset manifest.
        #[arg(long)]
        manifest: PathBuf,
        /// Number of tasks.
        #[arg(long, default_value_t = 10)]
        tasks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Turn each labeled segment of an untrimmed manifest into its own video.
        #[arg(long)]
        trim: bool,
        /// Task-sequence file to write; statistics go next to it.
        #[arg(long, default_value = "split.json")]
        out: PathBuf,
    },
    /// Write a synthetic moving-blob dataset manifest.
    Synth(SynthArgs),
    /// Train one method over a task sequence and store the results.
    Run(RunCli),
    /// Compare stored runs: table, accuracy curves and per-class bars.
    Report {
        /// Run folders or run ids in the store.
        #[arg(required = true)]
        runs: Vec<String>,
        #[arg(long, env = STORE_ENV)]
        store: Option<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
        /// Only write tables and CSV files.
        #[arg(long)]
        no_plots: bool,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 57)]
    videos_per_class: usize,
    #[arg(long, default_value_t = 16)]
    frames: usize,
    #[arg(long, default_value_t = 16)]
    height: usize,
    #[arg(long, default_value_t = 16)]
    width: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Blob displacement in pixels per frame.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Background noise amplitude as a fraction of the 8-bit range.
    #[arg(long, default_value_t = 0.25)]
    noise: f64,
    #[arg(long, default_value = "data/manifest.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct RunCli {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Task-sequence file; overrides the config's split.file.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Experiment store root.
    #[arg(long, env = STORE_ENV)]
    store: Option<PathBuf>,
    /// Replace an existing run folder.
    #[arg(long)]
    force: bool,
    /// Continue an existing run from its latest checkpoint.
    #[arg(long, conflicts_with = "force")]
    resume: bool,
    /// Validate and print the task schedule without training.
    #[arg(long)]
    dry_run: bool,
    /// No per-task progress lines.
    #[arg(long)]
    quiet: bool,
    /// Epochs per task for memory methods [config default: 50].
    #[arg(long)]
    epochs_memory: Option<usize>,
    /// Epochs per task for regularization methods [config default: 20].
    #[arg(long)]
    epochs_reg: Option<usize>,
    /// Adam learning rate [config default: 1e-3].
    #[arg(long)]
    lr: Option<f64>,
    /// Segments sampled per video [config default: 8].
    #[arg(long)]
    segments: Option<usize>,
    /// Consistency-loss weight [config default: 0.5].
    #[arg(long)]
    lambda_tc: Option<f64>,
    /// Training seed [config default: 0].
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> vcil::Result<()> {
    match cli.command {
        Command::Split {
            manifest,
            tasks,
            seed,
            trim,
            out,
        } => {
            let outcome = commands::cmd_split(&SplitArgs {
                manifest: manifest.clone(),
                num_tasks: tasks,
                seed,
                trim,
                out,
            })?;
            let name = manifest.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            print!("{}", format_split_stats(&name, &outcome.stats));
            if let Some(d) = &outcome.discard {
                println!(
                    "discarded {} of {} multi-label videos ({:.2}%)",
                    d.discarded,
                    d.total,
                    d.fraction() * 100.0
                );
            }
            println!("{} records -> {}", outcome.records, outcome.split_path.display());
            if let Some(p) = &outcome.manifest_path {
                println!("labeled manifest -> {}", p.display());
            }
        }
        Command::Synth(a) => {
            let mut cfg = SyntheticConfig::new(a.classes, a.videos_per_class, a.frames, (a.height, a.width), a.seed);
            cfg.speed = a.speed;
            cfg.noise = a.noise;
            let m = commands::cmd_synth(&cfg, &a.out)?;
            println!("{} videos, {} classes -> {}", m.records.len(), m.class_names.len(), a.out.display());
        }
        Command::Run(a) => {
            let args = RunArgs {
                config: a.config,
                split: a.split,
                store: a.store,
                force: a.force,
                resume: a.resume,
                dry_run: a.dry_run,
                verbose: !a.quiet,
                overrides: TrainingOverrides {
                    epochs_memory: a.epochs_memory,
                    epochs_reg: a.epochs_reg,
                    learning_rate: a.lr,
                    segments: a.segments,
                    lambda_tc: a.lambda_tc,
                    seed: a.seed,
                },
            };
            match commands::cmd_run(&args)? {
                RunOutcome::Planned { run_id, schedule } => {
                    println!("run {run_id} (dry run)");
                    print!("{schedule}");
                }
                RunOutcome::Completed { run_dir, row, .. } => {
                    println!("{ROW_HEADER}");
                    println!("{row}");
                    eprintln!("artifacts in {}", run_dir.display());
                }
            }
        }
        Command::Report {
            runs,
            store,
            out,
            no_plots,
        } => {
            let outcome = commands::cmd_report(&ReportArgs {
                runs,
                store,
                out,
                plots: !no_plots,
            })?;
            print!("{}", outcome.table);
            for f in &outcome.files {
                eprintln!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}
