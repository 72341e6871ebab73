use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hirf::data::ArrivalSchedule;
use hirf::harness::{self, DataSource, ExperimentSpec, ScheduleSource, SweepSpec, SyntheticSpec};
use hirf::{ForestConfig, GainMode, SplitSearch, TreeConfig, VoteMode};

#[derive(Parser)]
#[command(
    name = "hirf",
    version,
    about = "Incremental nearest-class-mean random forests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one class-arrival schedule and write results.csv, rounds.jsonl
    /// and forest_final.json.
    Run(RunArgs),
    /// Repeat runs over several initial class counts and write sweep.csv.
    Sweep(SweepArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// CSV file, features then an integer label per row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Gaussian blobs: classes,per_class,dim,std.
    #[arg(long, value_name = "C,N,K,STD")]
    synthetic: Option<SyntheticSpec>,
}

#[derive(Args)]
struct ForestArgs {
    #[arg(long, default_value_t = 25)]
    trees: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    max_depth: usize,
    /// Random assignments scored per node.
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Score every assignment instead of random ones.
    #[arg(long)]
    exhaustive: bool,
    #[arg(long, default_value_t = 32)]
    class_cap: usize,
    #[arg(long, default_value_t = 2)]
    min_samples: usize,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Majority vote over predicted labels instead of averaging.
    #[arg(long)]
    hard_vote: bool,
    /// Score splits as E_n - (E_l + E_r), without size weights.
    #[arg(long)]
    paper_literal_gain: bool,
    /// Disable out-of-bag boosting (alpha = 0).
    #[arg(long)]
    no_boost: bool,
}

impl ForestArgs {
    fn config(&self) -> ForestConfig {
        let threads = std::env::var("HIRF_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0);
        let search = if self.exhaustive {
            SplitSearch::Exhaustive
        } else {
            SplitSearch::Random {
                trials: self.trials,
                max_retries: 50,
            }
        };
        ForestConfig {
            n_trees: self.trees,
            tree: TreeConfig {
                max_depth: self.max_depth,
                search,
                class_cap: self.class_cap,
                min_samples: self.min_samples,
                gain: if self.paper_literal_gain {
                    GainMode::Unweighted
                } else {
                    GainMode::SizeWeighted
                },
            },
            vote: if self.hard_vote {
                VoteMode::Hard
            } else {
                VoteMode::Soft
            },
            alpha: if self.no_boost { 0.0 } else { self.alpha },
            threads,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// JSON file {"initial": [...], "batches": [[...], ...]}.
    #[arg(long, conflicts_with_all = ["initial", "step"])]
    schedule: Option<PathBuf>,
    /// Classes (lowest labels first) in the initial set.
    #[arg(long)]
    initial: Option<usize>,
    /// Classes per later batch.
    #[arg(long)]
    step: Option<usize>,
    #[command(flatten)]
    forest: ForestArgs,
    /// Skip the offline baseline retrained each round.
    #[arg(long)]
    no_baseline: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_delimiter = ',', required = true)]
    initial_counts: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[command(flatten)]
    forest: ForestArgs,
    #[arg(long)]
    out: PathBuf,
}

fn data_source(src: &Source, seed: u64) -> DataSource {
    match (&src.data, &src.synthetic) {
        (Some(p), _) => DataSource::Csv(p.clone()),
        (None, Some(s)) => DataSource::Synthetic(s.clone().with_seed(seed)),
        (None, None) => unreachable!("clap requires one source"),
    }
}

fn run(args: RunArgs) -> hirf::Result<()> {
    let schedule = match args.schedule {
        Some(p) => ScheduleSource::Explicit(ArrivalSchedule::load(&p)?),
        None => ScheduleSource::Stepped {
            initial: args.initial,
            step: args.step,
        },
    };
    let spec = ExperimentSpec {
        data: data_source(&args.source, args.forest.seed),
        schedule,
        forest: args.forest.config(),
        seed: args.forest.seed,
        test_fraction: args.forest.test_fraction,
        baseline: !args.no_baseline,
        out_dir: args.out,
    };
    let outcome = harness::run_experiment(&spec)?;
    print!("{}", harness::summary_table(&outcome.records));
    println!("wrote {}", spec.out_dir.display());
    Ok(())
}

fn sweep(args: SweepArgs) -> hirf::Result<()> {
    let spec = SweepSpec {
        data: data_source(&args.source, args.forest.seed),
        initial_counts: args.initial_counts,
        forest: args.forest.config(),
        seed: args.forest.seed,
        repeats: args.repeats,
        test_fraction: args.forest.test_fraction,
        out_dir: args.out,
    };
    let rows = harness::run_sweep(&spec)?;
    println!(
        "{:>7} {:>8} {:>8} {:>7} {:>10} {:>10} {:>6} {:>5} {:>5}",
        "initial", "acc_hirf", "acc_off", "gap", "t_hirf", "t_off", "ratio", "n1", "n2"
    );
    for r in &rows {
        println!(
            "{:>7} {:>8.4} {:>8.4} {:>7.4} {:>10.1} {:>10.1} {:>6.3} {:>5.1} {:>5.1}",
            r.initial_classes,
            r.acc_hirf,
            r.acc_offline,
            r.acc_gap,
            r.t_hirf,
            r.t_offline,
            r.time_ratio,
            r.n_retrained,
            r.n_updated
        );
    }
    println!("wrote {}", spec.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
