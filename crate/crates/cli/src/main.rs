//! `scenecast` — forecast next-year local cultural dimensions of urban areas
//! from review mobility graphs, reviewer group profiles, and area features.
//!
//! Configuration comes from built-in defaults, overlaid by an optional
//! `key = value` config file (`--config`), overlaid by command-line flags;
//! flags win. On success each stage prints one machine-readable JSON summary
//! line to stdout and exits 0. Stage failures print the underlying error to
//! stderr and exit 1; usage errors exit 2.

mod artifacts;
mod config;
mod stages;

use clap::{Parser, Subcommand};
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "scenecast",
    version,
    about = "Forecast next-year scene dimensions of urban areas",
    after_help = "Set SCENECAST_WORKERS to bound the evaluation work pool."
)]
struct Cli {
    /// Key=value config file; flags given here override its entries.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory for artifacts (default `out`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,

    /// Base seed; all randomness derives from it via named streams.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// City name recorded in datasets and reports.
    #[arg(long, global = true)]
    city: Option<String>,

    /// Graph-feature scenario label, e.g. "Area info" (repeatable).
    #[arg(long = "scenario", global = true, value_name = "NAME")]
    scenario: Vec<String>,

    /// Reference model label: naive, lasso, forest, boosted (repeatable).
    #[arg(long = "model", global = true, value_name = "NAME")]
    model: Vec<String>,

    /// Test year to evaluate (repeatable; default 2016 2017 2018).
    #[arg(long = "test-year", global = true, value_name = "YEAR")]
    test_year: Vec<i32>,

    /// Repetitions per experiment cell.
    #[arg(long, global = true)]
    reps: Option<usize>,

    /// Training epochs for the graph model.
    #[arg(long, global = true)]
    epochs: Option<usize>,

    /// Hidden width of the graph model.
    #[arg(long, global = true)]
    hidden: Option<usize>,

    /// Dropout probability during training.
    #[arg(long, global = true)]
    dropout: Option<f64>,

    /// Learning rate.
    #[arg(long, global = true)]
    lr: Option<f64>,

    /// Cross-validation folds for the reference-model grid search.
    #[arg(long = "cv-folds", global = true)]
    cv_folds: Option<usize>,

    /// Venues JSONL file (ingest).
    #[arg(long, global = true, value_name = "FILE")]
    venues: Option<String>,

    /// Reviews JSONL file (ingest).
    #[arg(long, global = true, value_name = "FILE")]
    reviews: Option<String>,

    /// Users JSONL file (ingest).
    #[arg(long, global = true, value_name = "FILE")]
    users: Option<String>,

    /// Census CSV file (graph).
    #[arg(long, global = true, value_name = "FILE")]
    census: Option<String>,

    /// Category-dimension codebook CSV (scenes).
    #[arg(long, global = true, value_name = "FILE")]
    codebook: Option<String>,

    /// Optional FSA bounding-box CSV for venues without postal codes.
    #[arg(long, global = true, value_name = "FILE")]
    boundary: Option<String>,

    /// City artifacts JSON from the graph stage (repeatable for
    /// multi-city evaluation; default `<out>/artifacts.json`).
    #[arg(long = "artifacts", global = true, value_name = "FILE")]
    artifacts: Vec<String>,

    /// Per-run results CSV for `report` (default `<out>/results.csv`).
    #[arg(long, global = true, value_name = "FILE")]
    results: Option<String>,

    /// First year of the study window.
    #[arg(long = "year-start", global = true, value_name = "YEAR")]
    year_start: Option<i32>,

    /// Last year of the study window.
    #[arg(long = "year-end", global = true, value_name = "YEAR")]
    year_end: Option<i32>,

    /// Minimum venues an area needs to be retained at ingest.
    #[arg(long = "min-venues", global = true)]
    min_venues: Option<usize>,

    /// Topic-count search range for reviewer profiling, as LO:HI.
    #[arg(long = "topics-range", global = true, value_name = "LO:HI")]
    topics_range: Option<String>,

    /// Group-count search range for reviewer clustering, as LO:HI.
    #[arg(long = "k-range", global = true, value_name = "LO:HI")]
    k_range: Option<String>,

    /// Gibbs sampling iterations per topic model.
    #[arg(long = "gibbs-iters", global = true)]
    gibbs_iters: Option<usize>,

    /// Top words per topic used for coherence scoring.
    #[arg(long = "top-n", global = true)]
    top_n: Option<usize>,

    /// Synthetic dependence mode: area_driven, flow_driven, or none.
    #[arg(long, global = true)]
    mode: Option<String>,

    /// Synthetic city size: number of areas.
    #[arg(long = "n-fsas", global = true)]
    n_fsas: Option<usize>,

    /// Synthetic city size: number of reviewers.
    #[arg(long = "n-users", global = true)]
    n_users: Option<usize>,

    /// Synthetic city size: number of reviewer groups.
    #[arg(long = "n-groups", global = true)]
    n_groups: Option<usize>,

    /// Synthetic observation noise (standard deviation).
    #[arg(long, global = true)]
    noise: Option<f64>,

    /// Synthetic area-driven drift per year.
    #[arg(long, global = true)]
    drift: Option<f64>,

    /// Synthetic venues per (area, year).
    #[arg(long = "venues-per-fsa-year", global = true)]
    venues_per_fsa_year: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load venues/reviews/users, apply the study window and area filter.
    Ingest,
    /// Topic-model reviewer tastes and cluster reviewers into groups.
    Profile,
    /// Score yearly scene dimensions per area from the category codebook.
    Scenes,
    /// Assemble yearly mobility graphs and model-ready feature tables.
    Graph,
    /// Train one graph model and write its checkpoint and loss trace.
    Train,
    /// Run the evaluation protocol and write per-run result CSVs.
    Evaluate,
    /// Recompute the summary from results.csv and render bar charts.
    Report,
    /// Generate a synthetic city with known next-year dynamics.
    Synth,
}

fn effective_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::defaults();
    if let Some(path) = &cli.config {
        cfg.load_file(path)?;
    }

    macro_rules! override_with {
        ($key:literal, $field:expr) => {
            if let Some(v) = &$field {
                cfg.set($key, &v.to_string())?;
            }
        };
    }
    override_with!("out", cli.out);
    override_with!("seed", cli.seed);
    override_with!("city", cli.city);
    override_with!("reps", cli.reps);
    override_with!("epochs", cli.epochs);
    override_with!("hidden", cli.hidden);
    override_with!("dropout", cli.dropout);
    override_with!("lr", cli.lr);
    override_with!("cv_folds", cli.cv_folds);
    override_with!("venues", cli.venues);
    override_with!("reviews", cli.reviews);
    override_with!("users", cli.users);
    override_with!("census", cli.census);
    override_with!("codebook", cli.codebook);
    override_with!("boundary", cli.boundary);
    override_with!("results", cli.results);
    override_with!("year_start", cli.year_start);
    override_with!("year_end", cli.year_end);
    override_with!("min_venues", cli.min_venues);
    override_with!("topics_range", cli.topics_range);
    override_with!("k_range", cli.k_range);
    override_with!("gibbs_iters", cli.gibbs_iters);
    override_with!("top_n", cli.top_n);
    override_with!("mode", cli.mode);
    override_with!("n_fsas", cli.n_fsas);
    override_with!("n_users", cli.n_users);
    override_with!("n_groups", cli.n_groups);
    override_with!("noise", cli.noise);
    override_with!("drift", cli.drift);
    override_with!("venues_per_fsa_year", cli.venues_per_fsa_year);

    // --scenario / --model jointly override the model list.
    let mut labels: Vec<String> = cli.scenario.clone();
    labels.extend(cli.model.iter().cloned());
    if !labels.is_empty() {
        cfg.set("models", &labels.join(","))?;
    }
    if !cli.test_year.is_empty() {
        let years: Vec<String> = cli.test_year.iter().map(|y| y.to_string()).collect();
        cfg.set("test_years", &years.join(","))?;
    }
    if !cli.artifacts.is_empty() {
        cfg.set("artifacts", &cli.artifacts.join(","))?;
    }
    Ok(cfg)
}

/// Bound the evaluation work pool when SCENECAST_WORKERS is set.
fn configure_workers() -> Result<(), String> {
    let Ok(raw) = std::env::var("SCENECAST_WORKERS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .map_err(|_| format!("SCENECAST_WORKERS: `{raw}` is not a worker count"))?;
    if n == 0 {
        return Err("SCENECAST_WORKERS must be at least 1".to_string());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("cannot size the work pool: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_workers()
        .and_then(|()| effective_config(&cli))
        .and_then(|cfg| match cli.command {
            Command::Ingest => stages::ingest(&cfg),
            Command::Profile => stages::profile(&cfg),
            Command::Scenes => stages::scenes(&cfg),
            Command::Graph => stages::graph(&cfg),
            Command::Train => stages::train(&cfg),
            Command::Evaluate => stages::evaluate(&cfg),
            Command::Report => stages::report(&cfg),
            Command::Synth => stages::synth(&cfg),
        });
    match outcome {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
