//! One function per pipeline stage. Each reads its declared inputs from the
//! config, and returns the files it produces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use cupcast_core::consensus::{self, BtKernel, InferOptions};
use cupcast_core::ingest::{self, TournamentMatch, TournamentSpec};
use cupcast_core::metrics::{self, EditionData, Forecast, Method};
use cupcast_core::plus_minus::{self, FitPmOptions, PmOptions};
use cupcast_core::poisson_rank::{self, DecayConfig, FitOptions, ModelKind, RatingSet};
use cupcast_core::predictor::{self, FeatureSet, HistScale, HybridLevels, LassoModel, LassoOptions, SelectionRule};
use cupcast_core::rng::derive_seed;
use cupcast_core::simulator::{self, PairwiseIntensities, RunOptions, SimConfig, TiebreakOrder};
use cupcast_core::TeamId;

use crate::config::{need, Config};

pub struct Artifact {
    pub name: &'static str,
    pub body: String,
}

fn art(name: &'static str, body: String) -> Artifact {
    Artifact { name, body }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn spec_of(cfg: &Config) -> Result<TournamentSpec> {
    Ok(ingest::parse_tournament_spec(need(&cfg.inputs.spec, "spec")?)?)
}

/// Day before the tournament starts, when the spec says when that is.
fn default_as_of(cfg: &Config) -> Result<Option<NaiveDate>> {
    match &cfg.inputs.spec {
        Some(p) => Ok(ingest::parse_tournament_spec(p)?.start_date.and_then(|d| d.pred_opt())),
        None => Ok(None),
    }
}

pub fn ingest_check(cfg: &Config) -> Result<String> {
    let i = &cfg.inputs;
    let mut report = String::new();
    let mut any = false;
    macro_rules! check {
        ($field:ident, $parse:expr, $what:literal) => {
            if let Some(p) = &i.$field {
                any = true;
                let n = $parse(p.as_path()).with_context(|| format!("checking {}", p.display()))?;
                let _ = writeln!(report, "{}: {} {}", p.display(), n, $what);
            }
        };
    }
    check!(matches, |p| ingest::parse_matches(p).map(|v| v.len()), "matches");
    check!(segments, |p| ingest::parse_segments(p).map(|v| v.len()), "segments");
    check!(odds, |p| ingest::parse_odds(p).map(|t| t.bookmakers.len()), "bookmakers");
    check!(spec, |p| ingest::parse_tournament_spec(p).map(|s| s.teams().len()), "teams");
    check!(covariates, |p| ingest::parse_covariates(p).map(|v| v.len()), "covariate records");
    check!(results, |p| ingest::parse_results(p).map(|v| v.len()), "results");
    check!(squads, |p| ingest::parse_squads(p).map(|v| v.len()), "squads");
    check!(pool, |p| ingest::parse_pool(p).map(|v| v.len()), "pool entries");
    check!(threeway, |p| ingest::parse_threeway(p).map(|v| v.len()), "three-way odds");
    if !any {
        bail!("no input files given");
    }
    Ok(report)
}

pub fn rank(cfg: &Config) -> Result<Vec<Artifact>> {
    let matches = ingest::parse_matches(need(&cfg.inputs.matches, "matches")?)?;
    let as_of = match cfg.rank.as_of.or(default_as_of(cfg)?) {
        Some(d) => d,
        None => matches.iter().map(|m| m.date).max().context("no matches")?,
    };
    let kind_name = cfg.rank.model.as_deref().unwrap_or("bivariate");
    let kind = ModelKind::parse(kind_name).with_context(|| format!("unknown model `{kind_name}`"))?;
    let decay = DecayConfig { half_period_days: cfg.rank.half_period_days.unwrap_or(1095.0), as_of };
    let ratings = poisson_rank::fit_ratings_with(&matches, &decay, kind, &FitOptions::default())?;
    Ok(vec![art("ratings.csv", ratings.to_csv())])
}

pub fn consensus(cfg: &Config) -> Result<Vec<Artifact>> {
    let table = ingest::parse_odds(need(&cfg.inputs.odds, "odds")?)?;
    let spec = spec_of(cfg)?;
    let mut opts = InferOptions::new(cfg.consensus.runs.unwrap_or(20_000), derive_seed(cfg.seed()?, "consensus"));
    opts.tolerance = cfg.consensus.tolerance.unwrap_or(opts.tolerance);
    opts.max_iter = cfg.consensus.max_iter.unwrap_or(opts.max_iter);
    opts.threads = cfg.threads;
    let result = consensus::run_consensus(&table, &spec, &opts)?;
    let mut out = vec![art("consensus.csv", result.consensus_csv()), art("overrounds.csv", result.overrounds_csv())];
    if !result.inference.converged {
        out.push(art(
            "consensus_warnings.txt",
            format!("inversion stopped with max-norm residual {:.6}\n", result.inference.residual),
        ));
    }
    Ok(out)
}

pub fn pm(cfg: &Config) -> Result<Vec<Artifact>> {
    let segments = ingest::parse_segments(need(&cfg.inputs.segments, "segments")?)?;
    let as_of = match cfg.pm.as_of.or(default_as_of(cfg)?) {
        Some(d) => d,
        None => segments.iter().map(|s| s.match_date).max().context("no segments")?,
    };
    let defaults = PmOptions::default();
    let opts = PmOptions {
        recency_half_period_days: cfg.pm.half_period_days.unwrap_or(defaults.recency_half_period_days),
        closeness_floor: cfg.pm.closeness_floor.unwrap_or(defaults.closeness_floor),
        max_red_cards: cfg.pm.max_red_cards.unwrap_or(defaults.max_red_cards),
        age_slope: cfg.pm.age_slope.unwrap_or(defaults.age_slope),
        ..defaults
    };
    let design = plus_minus::build_design(&segments, as_of, &opts)?;
    let mut fit_opts = FitPmOptions::new(cfg.pm.ridge.unwrap_or(5.0));
    fit_opts.prior_passes = cfg.pm.prior_passes.unwrap_or(fit_opts.prior_passes);
    fit_opts.top_teammates = cfg.pm.top_teammates.unwrap_or(fit_opts.top_teammates);
    let ratings = plus_minus::fit_pm(&design, &fit_opts)?;
    let mut out = vec![art("pm_players.csv", ratings.players_csv())];
    if let Some(sq) = &cfg.inputs.squads {
        let squads = ingest::parse_squads(sq)?;
        let pool = ingest::parse_pool(need(&cfg.inputs.pool, "pool")?)?;
        let teams: Vec<TeamId> = match &cfg.inputs.spec {
            Some(_) => spec_of(cfg)?.teams(),
            None => squads.keys().cloned().collect(),
        };
        let mut features = BTreeMap::new();
        for t in teams {
            let squad = squads.get(&t).with_context(|| format!("no squad listed for {t}"))?;
            let national = plus_minus::recent_pool(&pool, &t, as_of);
            let f = plus_minus::squad_features(&ratings, squad, &national).with_context(|| format!("squad of {t}"))?;
            features.insert(t, f);
        }
        out.push(art("pm_squads.csv", plus_minus::squads_csv(&features)));
    }
    Ok(out)
}

/// Rating features of one edition from the earlier stages' artifacts.
fn hybrid_levels(cfg: &Config) -> Result<BTreeMap<i32, HybridLevels>> {
    let i = &cfg.inputs;
    if i.ratings.is_none() && i.consensus.is_none() && i.pm_squads.is_none() {
        return Ok(BTreeMap::new());
    }
    let edition = match cfg.features.edition {
        Some(e) => e,
        None => spec_of(cfg).context("the rating artifacts need an edition (--edition or a spec)")?.edition,
    };
    let scale_name = cfg.features.hist_scale.as_deref().unwrap_or("ability");
    let scale = HistScale::parse(scale_name).with_context(|| format!("unknown hist scale `{scale_name}`"))?;
    let ratings = match &i.ratings {
        Some(p) => Some(RatingSet::from_csv(&p.display().to_string(), &read_text(p)?)?),
        None => None,
    };
    let logs = match &i.consensus {
        Some(p) => Some(consensus::parse_log_abilities(&p.display().to_string(), &read_text(p)?)?),
        None => None,
    };
    let squads = match &i.pm_squads {
        Some(p) => Some(plus_minus::parse_squads_features(&p.display().to_string(), &read_text(p)?)?),
        None => None,
    };
    Ok(BTreeMap::from([(edition, HybridLevels::from_sources(ratings.as_ref(), scale, logs.as_ref(), squads.as_ref()))]))
}

pub fn features(cfg: &Config) -> Result<Vec<Artifact>> {
    let covariates = ingest::parse_covariates(need(&cfg.inputs.covariates, "covariates")?)?;
    let results = ingest::parse_results(need(&cfg.inputs.results, "results")?)?;
    let set = predictor::assemble_features(&covariates, &hybrid_levels(cfg)?, &results)?;
    Ok(vec![art("features.csv", set.to_csv())])
}

fn lasso_options(cfg: &Config, label: &str) -> Result<LassoOptions> {
    let d = LassoOptions::default();
    let rule = match cfg.fit.rule.as_deref().unwrap_or("1se") {
        "1se" => SelectionRule::OneStandardError,
        "min" => SelectionRule::MinDeviance,
        other => bail!("unknown selection rule `{other}` (expected 1se or min)"),
    };
    Ok(LassoOptions {
        folds: cfg.fit.folds.unwrap_or(d.folds),
        seed: derive_seed(cfg.seed()?, label),
        n_lambda: cfg.fit.n_lambda.unwrap_or(d.n_lambda),
        lambda_min_ratio: cfg.fit.lambda_min_ratio.unwrap_or(d.lambda_min_ratio),
        rule,
        ..d
    })
}

pub fn fit(cfg: &Config) -> Result<Vec<Artifact>> {
    let set = FeatureSet::parse(need(&cfg.inputs.features, "features")?)?;
    let fit = predictor::fit_lasso_poisson(&set, &lasso_options(cfg, "fit")?)?;
    let mut out = vec![art("model.csv", fit.model.to_csv()), art("cvcurve.csv", fit.cv_csv())];
    if !fit.warnings.is_empty() {
        out.push(art("fit_warnings.txt", fit.warnings.join("\n") + "\n"));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictMode {
    /// Every ordered pair of the spec's teams.
    Pairwise,
    /// Every match in a features file.
    Matches,
}

pub fn predict(cfg: &Config, mode: PredictMode) -> Result<Vec<Artifact>> {
    let model = LassoModel::parse(need(&cfg.inputs.model, "model")?)?;
    if model.names != predictor::feature_names() && mode == PredictMode::Pairwise {
        bail!("model features do not match the covariate layout");
    }
    match mode {
        PredictMode::Matches => {
            let set = FeatureSet::parse(need(&cfg.inputs.features, "features")?)?;
            if set.names != model.names {
                bail!("features file columns differ from the model's features");
            }
            let mut pairs: BTreeMap<(i32, &str), Vec<f64>> = BTreeMap::new();
            let mut order = Vec::new();
            for r in &set.rows {
                let key = (r.edition, r.match_id.as_str());
                let e = pairs.entry(key).or_default();
                if e.is_empty() {
                    order.push(key);
                }
                e.push(predictor::predict_intensity(&model, r));
            }
            let mut s = String::from("match_id,lambda_home,lambda_away\n");
            for key in order {
                let v = &pairs[&key];
                if v.len() != 2 {
                    bail!("match {} has {} feature rows, expected 2", key.1, v.len());
                }
                let _ = writeln!(s, "{},{:.6},{:.6}", key.1, v[0], v[1]);
            }
            Ok(vec![art("match_intensities.csv", s)])
        }
        PredictMode::Pairwise => {
            let spec = spec_of(cfg)?;
            let covariates = ingest::parse_covariates(need(&cfg.inputs.covariates, "covariates")?)?;
            let mut scoped = cfg.clone();
            scoped.features.edition.get_or_insert(spec.edition);
            let hybrid = hybrid_levels(&scoped)?;
            let mut levels = BTreeMap::new();
            for t in spec.teams() {
                let l = predictor::team_levels(&covariates, &hybrid, spec.edition, &t)?;
                levels.insert(t, l);
            }
            Ok(vec![art("intensities.csv", predictor::pairwise_intensities(&model, &levels).to_csv())])
        }
    }
}

fn tiebreak(cfg: &Config) -> Result<TiebreakOrder> {
    match cfg.simulate.tiebreak.as_deref().unwrap_or("overall") {
        "overall" => Ok(TiebreakOrder::OverallFirst),
        "head-to-head" => Ok(TiebreakOrder::HeadToHeadFirst),
        other => bail!("unknown tiebreak `{other}` (expected overall or head-to-head)"),
    }
}

pub fn simulate(cfg: &Config) -> Result<(Vec<Artifact>, simulator::StageProbabilities)> {
    let spec = spec_of(cfg)?;
    let seed = derive_seed(cfg.seed()?, "simulate");
    let runs = cfg.simulate.runs.unwrap_or(simulator::DEFAULT_RUNS);
    let probs = match (&cfg.inputs.intensities, &cfg.inputs.log_abilities) {
        (Some(p), None) => {
            let table = PairwiseIntensities::parse_str(&p.display().to_string(), &read_text(p)?)?;
            let sim = SimConfig {
                n_runs: runs,
                seed,
                extra_time_factor: cfg.simulate.extra_time_factor.unwrap_or(simulator::DEFAULT_EXTRA_TIME_FACTOR),
                tiebreak: tiebreak(cfg)?,
                threads: cfg.threads,
            };
            simulator::run_tournament(&sim, &spec, &table)?
        }
        (None, Some(p)) => {
            let logs = consensus::parse_log_abilities(&p.display().to_string(), &read_text(p)?)?;
            let abilities = spec
                .teams()
                .iter()
                .map(|t| logs.get(t).map(|l| l.exp()).with_context(|| format!("no log-ability for {t}")))
                .collect::<Result<Vec<_>>>()?;
            let kernel = BtKernel::new(abilities)?;
            simulator::run_with_kernel(&spec, &kernel, &RunOptions { n_runs: runs, seed, threads: cfg.threads })?
        }
        (Some(_), Some(_)) => bail!("give either intensities or log-abilities, not both"),
        (None, None) => bail!("missing input `intensities` (or `log_abilities` for the win/loss kernel)"),
    };
    Ok((vec![art("stage_probs.csv", probs.to_csv())], probs))
}

fn editions_of(results: &[TournamentMatch]) -> Vec<EditionData> {
    let mut by: BTreeMap<i32, Vec<TournamentMatch>> = BTreeMap::new();
    for m in results {
        by.entry(m.edition).or_default().push(m.clone());
    }
    by.into_iter()
        .map(|(edition, matches)| EditionData {
            edition,
            start_date: matches.iter().map(|m| m.date).min().expect("nonempty"),
            matches,
            artifacts: Vec::new(),
        })
        .collect()
}

pub fn evaluate(cfg: &Config) -> Result<Vec<Artifact>> {
    let results = ingest::parse_results(need(&cfg.inputs.results, "results")?)?;
    let set = FeatureSet::parse(need(&cfg.inputs.features, "features")?)?;
    let editions = editions_of(&results);
    let opts = lasso_options(cfg, "evaluate")?;
    let lasso = |train: &[&EditionData], test: &EditionData| -> cupcast_core::Result<BTreeMap<String, Forecast>> {
        let keep: Vec<i32> = train.iter().map(|e| e.edition).collect();
        let sub = FeatureSet {
            names: set.names.clone(),
            rows: set.rows.iter().filter(|r| keep.contains(&r.edition)).cloned().collect(),
        };
        let fit = predictor::fit_lasso_poisson(&sub, &opts)?;
        predictor::match_forecasts(&fit.model, &set, &test.matches)
    };
    let mut methods = vec![Method::Fit { name: "lasso".into(), fitter: &lasso }];
    if let Some(p) = &cfg.inputs.threeway {
        let mut forecasts = BTreeMap::new();
        for o in ingest::parse_threeway(p)? {
            let probs = metrics::threeway_from_odds(o.odds)?;
            forecasts.insert(o.match_id, Forecast { probs, goals: None });
        }
        methods.push(Method::Fixed { name: "odds".into(), forecasts });
    }
    if let Some(p) = &cfg.inputs.external {
        for (name, preds) in predictor::load_external_predictions(p, &results)? {
            let forecasts = preds.into_iter().map(|(id, (a, b))| (id, Forecast::from_intensities(a, b))).collect();
            methods.push(Method::Fixed { name, forecasts });
        }
    }
    let report = metrics::loto_evaluate(&editions, &methods)?;
    Ok(vec![art("evaluation.csv", report.to_csv())])
}

/// Champion and final percentages, strongest first.
pub fn report(probs: &simulator::StageProbabilities) -> String {
    let mut rows: Vec<(f64, Option<f64>, &TeamId)> = probs
        .teams
        .iter()
        .enumerate()
        .map(|(k, t)| (probs.prob(k, 4).unwrap_or(0.0), probs.prob(k, 3), t))
        .collect();
    rows.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(b.2)));
    let mut s = format!("Simulated tournament ({} runs)\n\nteam   champion%  final%\n", probs.n_runs);
    for (c, f, t) in rows {
        let _ = writeln!(s, "{:<6} {:>9.1}  {:>6.1}", t.as_str(), 100.0 * c, 100.0 * f.unwrap_or(0.0));
    }
    s
}
