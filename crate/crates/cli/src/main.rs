mod config;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use config::Config;
use stages::{Artifact, PredictMode};

/// Forecasts knockout football tournaments from ratings, bookmaker odds and
/// player plus-minus, and scores the forecasts.
#[derive(Parser)]
#[command(name = "cupcast", version)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Master seed; each stochastic stage derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate input files and print record counts.
    IngestCheck(InputArgs),
    /// Fit time-weighted Poisson team ratings.
    RankPoisson {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long)]
        as_of: Option<NaiveDate>,
        #[arg(long)]
        half_period: Option<f64>,
        /// `bivariate` or `independent`.
        #[arg(long)]
        model: Option<String>,
    },
    /// Remove bookmaker margins and invert the tournament simulation.
    Consensus {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long)]
        runs: Option<u64>,
    },
    /// Fit plus-minus player ratings and squad aggregates.
    Pm {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long)]
        as_of: Option<NaiveDate>,
        #[arg(long)]
        ridge: Option<f64>,
        #[arg(long)]
        half_period: Option<f64>,
    },
    /// Build paired difference features.
    Features {
        #[command(flatten)]
        inputs: InputArgs,
        /// Edition the rating artifacts belong to.
        #[arg(long)]
        edition: Option<i32>,
        /// `ability` (exp of the rating) or `strength`.
        #[arg(long)]
        hist_scale: Option<String>,
    },
    /// Fit the lasso Poisson model with cross-validated penalty.
    Fit {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        lasso: LassoArgs,
    },
    /// Intensities for every pair of a spec's teams, or for every match of a features file.
    Predict {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long)]
        edition: Option<i32>,
    },
    /// Monte Carlo simulation of a tournament.
    Simulate {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long)]
        runs: Option<u64>,
        /// `overall` or `head-to-head`.
        #[arg(long)]
        tiebreak: Option<String>,
    },
    /// Leave-one-tournament-out evaluation.
    Evaluate {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        lasso: LassoArgs,
    },
    /// Run every stage in order.
    Pipeline {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long)]
        runs: Option<u64>,
    },
}

#[derive(Args, Default)]
struct InputArgs {
    #[arg(long)]
    matches: Option<PathBuf>,
    #[arg(long)]
    segments: Option<PathBuf>,
    #[arg(long)]
    odds: Option<PathBuf>,
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    covariates: Option<PathBuf>,
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long)]
    squads: Option<PathBuf>,
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    threeway: Option<PathBuf>,
    #[arg(long)]
    external: Option<PathBuf>,
    #[arg(long)]
    ratings: Option<PathBuf>,
    #[arg(long = "consensus")]
    consensus_file: Option<PathBuf>,
    #[arg(long)]
    pm_squads: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    intensities: Option<PathBuf>,
    #[arg(long)]
    log_abilities: Option<PathBuf>,
}

#[derive(Args)]
struct LassoArgs {
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    n_lambda: Option<usize>,
    /// `1se` (default) or `min`.
    #[arg(long)]
    rule: Option<String>,
}

fn set<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

impl InputArgs {
    fn apply(self, cfg: &mut Config) {
        let i = &mut cfg.inputs;
        set(&mut i.matches, self.matches);
        set(&mut i.segments, self.segments);
        set(&mut i.odds, self.odds);
        set(&mut i.spec, self.spec);
        set(&mut i.covariates, self.covariates);
        set(&mut i.results, self.results);
        set(&mut i.squads, self.squads);
        set(&mut i.pool, self.pool);
        set(&mut i.threeway, self.threeway);
        set(&mut i.external, self.external);
        set(&mut i.ratings, self.ratings);
        set(&mut i.consensus, self.consensus_file);
        set(&mut i.pm_squads, self.pm_squads);
        set(&mut i.features, self.features);
        set(&mut i.model, self.model);
        set(&mut i.intensities, self.intensities);
        set(&mut i.log_abilities, self.log_abilities);
    }
}

impl LassoArgs {
    fn apply(self, cfg: &mut Config) {
        set(&mut cfg.fit.folds, self.folds);
        set(&mut cfg.fit.n_lambda, self.n_lambda);
        set(&mut cfg.fit.rule, self.rule);
    }
}

/// Writes artifacts with provenance headers, then refreshes the manifest.
fn write_artifacts(cfg: &Config, stage: &str, artifacts: &[Artifact]) -> Result<()> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let digest = cfg.digest();
    for a in artifacts {
        let path = dir.join(a.name);
        let text = format!("# stage={stage}\n# config_digest={digest}\n{}", a.body);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    write_manifest(dir)
}

const MANIFEST: &str = "manifest.sha256";

/// `sha256  file` for every other file in the directory, sorted by name.
fn write_manifest(dir: &Path) -> Result<()> {
    let mut names: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_ok_and(|t| t.is_file()))
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != MANIFEST)
        .collect();
    names.sort();
    let mut out = String::new();
    for n in names {
        let bytes = std::fs::read(dir.join(&n))?;
        out.push_str(&format!("{}  {n}\n", hex::encode(Sha256::digest(&bytes))));
    }
    std::fs::write(dir.join(MANIFEST), out)?;
    Ok(())
}

/// Runs a stage, tagging any failure with the stage name.
fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| anyhow!("stage `{name}` failed: {e:#}"))
}

fn run_and_write(cfg: &Config, name: &str, f: impl FnOnce(&Config) -> Result<Vec<Artifact>>) -> Result<()> {
    stage(name, || {
        let arts = f(cfg)?;
        write_artifacts(cfg, name, &arts)
    })
}

fn pipeline(mut cfg: Config) -> Result<()> {
    let dir = cfg.out_dir().to_path_buf();
    let spec_edition = stage("pipeline", || {
        let spec = config::need(&cfg.inputs.spec, "spec")?;
        Ok(cupcast_core::ingest::parse_tournament_spec(spec)?.edition)
    })?;
    cfg.features.edition.get_or_insert(spec_edition);
    // digest of the user's resolved config, not of the intermediate paths
    let digest_cfg = cfg.clone();
    let write = |name: &str, arts: &[Artifact]| write_artifacts(&digest_cfg, name, arts);

    stage("rank-poisson", || write("rank-poisson", &stages::rank(&cfg)?))?;
    cfg.inputs.ratings = Some(dir.join("ratings.csv"));
    stage("consensus", || write("consensus", &stages::consensus(&cfg)?))?;
    cfg.inputs.consensus = Some(dir.join("consensus.csv"));
    stage("pm", || write("pm", &stages::pm(&cfg)?))?;
    if cfg.inputs.squads.is_some() {
        cfg.inputs.pm_squads = Some(dir.join("pm_squads.csv"));
    }
    stage("features", || write("features", &stages::features(&cfg)?))?;
    cfg.inputs.features = Some(dir.join("features.csv"));
    stage("fit", || write("fit", &stages::fit(&cfg)?))?;
    cfg.inputs.model = Some(dir.join("model.csv"));
    stage("predict", || write("predict", &stages::predict(&cfg, PredictMode::Pairwise)?))?;
    cfg.inputs.intensities = Some(dir.join("intensities.csv"));
    cfg.inputs.log_abilities = None;
    stage("simulate", || {
        let (arts, probs) = stages::simulate(&cfg)?;
        write("simulate", &arts)?;
        write("report", &[Artifact { name: "report.txt", body: stages::report(&probs) }])
    })?;
    let editions = stage("evaluate", || {
        let results = cupcast_core::ingest::parse_results(config::need(&cfg.inputs.results, "results")?)?;
        Ok(results.iter().map(|m| m.edition).collect::<std::collections::BTreeSet<_>>().len())
    })?;
    if editions >= 2 {
        stage("evaluate", || write("evaluate", &stages::evaluate(&cfg)?))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => stage("config", || Config::load(p))?,
        None => Config::default(),
    };
    set(&mut cfg.out_dir, cli.out_dir);
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.threads, cli.threads);
    if let Some(n) = cfg.threads {
        // a second initialization only happens in tests; ignore it
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::IngestCheck(inputs) => {
            inputs.apply(&mut cfg);
            let report = stage("ingest-check", || stages::ingest_check(&cfg))?;
            print!("{report}");
            Ok(())
        }
        Command::RankPoisson { inputs, as_of, half_period, model } => {
            inputs.apply(&mut cfg);
            set(&mut cfg.rank.as_of, as_of);
            set(&mut cfg.rank.half_period_days, half_period);
            set(&mut cfg.rank.model, model);
            cfg.fill_defaults();
            run_and_write(&cfg, "rank-poisson", stages::rank)
        }
        Command::Consensus { inputs, runs } => {
            inputs.apply(&mut cfg);
            set(&mut cfg.consensus.runs, runs);
            cfg.fill_defaults();
            run_and_write(&cfg, "consensus", stages::consensus)
        }
        Command::Pm { inputs, as_of, ridge, half_period } => {
            inputs.apply(&mut cfg);
            set(&mut cfg.pm.as_of, as_of);
            set(&mut cfg.pm.ridge, ridge);
            set(&mut cfg.pm.half_period_days, half_period);
            cfg.fill_defaults();
            run_and_write(&cfg, "pm", stages::pm)
        }
        Command::Features { inputs, edition, hist_scale } => {
            inputs.apply(&mut cfg);
            set(&mut cfg.features.edition, edition);
            set(&mut cfg.features.hist_scale, hist_scale);
            cfg.fill_defaults();
            run_and_write(&cfg, "features", stages::features)
        }
        Command::Fit { inputs, lasso } => {
            inputs.apply(&mut cfg);
            lasso.apply(&mut cfg);
            cfg.fill_defaults();
            run_and_write(&cfg, "fit", stages::fit)
        }
        Command::Predict { inputs, edition } => {
            inputs.apply(&mut cfg);
            set(&mut cfg.features.edition, edition);
            cfg.fill_defaults();
            let mode = if cfg.inputs.spec.is_some() { PredictMode::Pairwise } else { PredictMode::Matches };
            run_and_write(&cfg, "predict", |c| stages::predict(c, mode))
        }
        Command::Simulate { inputs, runs, tiebreak } => {
            inputs.apply(&mut cfg);
            set(&mut cfg.simulate.runs, runs);
            set(&mut cfg.simulate.tiebreak, tiebreak);
            cfg.fill_defaults();
            run_and_write(&cfg, "simulate", |c| stages::simulate(c).map(|(a, _)| a))
        }
        Command::Evaluate { inputs, lasso } => {
            inputs.apply(&mut cfg);
            lasso.apply(&mut cfg);
            cfg.fill_defaults();
            run_and_write(&cfg, "evaluate", stages::evaluate)
        }
        Command::Pipeline { inputs, runs } => {
            inputs.apply(&mut cfg);
            set(&mut cfg.simulate.runs, runs);
            cfg.fill_defaults();
            pipeline(cfg)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
