use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jumpsel::codebook::{derive_codebook, HadamardCodebook};
use jumpsel::config::{ExperimentConfig, NoiseConfig};
use jumpsel::data::{gen_blobs, inject_noise, load_csv, save_csv, NoiseKind, Split};
use jumpsel::experiment::{collect_summaries, compare, run_experiment, write_comparison, ComparisonRow};
use jumpsel::Error;

#[derive(Parser, Debug)]
#[command(name = "jumpsel", version, about = "Noisy-label sample selection lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a Hadamard codebook as CSV, one ±1 row per class.
    Codebook {
        #[arg(long)]
        classes: usize,
        /// Code length; defaults to the smallest power of two ≥ max(16, 2·classes).
        #[arg(long)]
        bits: Option<usize>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate Gaussian blobs as clean train.csv and test.csv.
    GenData {
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 250)]
        n_per_class: usize,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Corrupt the labels of a dataset CSV.
    Inject {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        classes: usize,
        /// symmetric, asymmetric, pairflip or instance.
        #[arg(long)]
        kind: NoiseKind,
        #[arg(long)]
        epsilon: f64,
        /// Asymmetric noise: comma-separated target class for each class.
        #[arg(long, value_delimiter = ',')]
        class_map: Option<Vec<usize>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every cell of an experiment config and write its reports.
    Train(RunArgs),
    /// Like `train`, then print the strategy comparison table; needs at
    /// least two strategy or effect-rate combinations.
    Compare(RunArgs),
    /// Rebuild the comparison tables from finished run directories.
    Report {
        /// Directory holding one subdirectory per run.
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides both the config and the JUMPSEL_OUT_DIR variable.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Cells trained concurrently; defaults to the available cores.
    #[arg(long)]
    jobs: Option<usize>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Capacity { .. }
        | Error::Label(_)
        | Error::Encoding(_)
        | Error::Parse { .. } => 2,
        Error::Numeric(_) | Error::Shape(_) => 3,
        Error::Io(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let detail = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {detail}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> jumpsel::Result<()> {
    match command {
        Command::Codebook { classes, bits, out } => {
            let bits = bits.unwrap_or_else(|| HadamardCodebook::default_bits(classes));
            let cb = derive_codebook(bits, classes)?;
            match out {
                Some(path) => cb.save_csv(&path)?,
                None => cb.write_csv(std::io::stdout().lock())?,
            }
        }
        Command::GenData {
            classes,
            dim,
            n_per_class,
            spread,
            seed,
            out_dir,
        } => {
            let data = gen_blobs(classes, dim, n_per_class, spread, seed)?;
            std::fs::create_dir_all(&out_dir)?;
            save_csv(&data.train, &out_dir.join("train.csv"))?;
            save_csv(&data.test, &out_dir.join("test.csv"))?;
            println!(
                "wrote {} training and {} test samples to {}",
                data.train.len(),
                data.test.len(),
                out_dir.display()
            );
        }
        Command::Inject {
            input,
            classes,
            kind,
            epsilon,
            class_map,
            seed,
            out,
        } => {
            let clean = load_csv(&input, classes, Split::Train)?;
            let noise = NoiseConfig {
                kind,
                epsilon,
                class_map,
            };
            let noisy = inject_noise(&clean, &noise.spec(clean.dim(), classes, seed), seed)?;
            save_csv(&noisy, &out)?;
            println!(
                "flipped {} of {} labels ({:.4}), wrote {}",
                noisy.clean_mask.iter().filter(|c| !**c).count(),
                noisy.len(),
                noisy.noise_rate(),
                out.display()
            );
        }
        Command::Train(args) => {
            let (cfg, out_dir) = load_run(&args)?;
            let records = run_experiment(&cfg, &out_dir, jobs(&args))?;
            for r in &records {
                let s = r.summary()?;
                println!(
                    "{} r={} seed={}: last10_acc={:.4} final_acc={:.4} sel_f1={:.4}",
                    s.strategy, s.effect_rate, s.seed, s.last10_mean_acc, s.final_acc, s.mean_sel_f1
                );
            }
            println!("reports in {}", out_dir.display());
        }
        Command::Compare(args) => {
            let (cfg, out_dir) = load_run(&args)?;
            let combos = cfg.schedule.strategies.len() * cfg.schedule.effect_rates.len();
            if combos < 2 {
                return Err(Error::Config(
                    "schedule: compare needs at least two strategies or effect rates".into(),
                ));
            }
            let records = run_experiment(&cfg, &out_dir, jobs(&args))?;
            let summaries = records.iter().map(|r| r.summary()).collect::<jumpsel::Result<Vec<_>>>()?;
            print_table(&compare(&summaries))?;
        }
        Command::Report { dir } => {
            let summaries = collect_summaries(&dir)?;
            if summaries.is_empty() {
                return Err(Error::Config(format!(
                    "no run directories with a summary.json below {}",
                    dir.display()
                )));
            }
            let rows = compare(&summaries);
            write_comparison(&rows, &dir)?;
            print_table(&rows)?;
        }
    }
    Ok(())
}

fn load_run(args: &RunArgs) -> jumpsel::Result<(ExperimentConfig, PathBuf)> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let out_dir = args.out_dir.clone().unwrap_or_else(|| cfg.resolved_out_dir());
    Ok((cfg, out_dir))
}

fn jobs(args: &RunArgs) -> usize {
    args.jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn print_table(rows: &[ComparisonRow]) -> jumpsel::Result<()> {
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "{:<13} {:>6} {:>5} {:>16} {:>8} {:>9} {:>9} {:>10}",
        "strategy", "r", "seeds", "last10_acc", "sel_f1", "temp_iou", "cross_iou", "epoch_ms"
    )?;
    for r in rows {
        writeln!(
            out,
            "{:<13} {:>6} {:>5} {:>8.4} ± {:<6.4} {:>8.4} {:>9} {:>9} {:>10.1}",
            r.strategy.as_str(),
            r.effect_rate,
            r.seeds,
            r.mean_last10_acc,
            r.std_last10_acc,
            r.mean_sel_f1,
            opt(r.mean_temporal_iou),
            opt(r.mean_cross_iou),
            r.mean_epoch_ms
        )?;
    }
    Ok(())
}
