//! Run configuration: a TOML file, overridden by command-line flags, with
//! defaults filled in before the digest is taken.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    /// Not part of the digest: results do not depend on it.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    pub inputs: Inputs,
    pub rank: RankSection,
    pub consensus: ConsensusSection,
    pub pm: PmSection,
    pub features: FeaturesSection,
    pub fit: FitSection,
    pub simulate: SimulateSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub matches: Option<PathBuf>,
    pub segments: Option<PathBuf>,
    pub odds: Option<PathBuf>,
    pub spec: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub results: Option<PathBuf>,
    pub squads: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub threeway: Option<PathBuf>,
    pub external: Option<PathBuf>,
    // artifacts of earlier stages
    pub ratings: Option<PathBuf>,
    pub consensus: Option<PathBuf>,
    pub pm_squads: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub intensities: Option<PathBuf>,
    pub log_abilities: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSection {
    pub as_of: Option<NaiveDate>,
    pub half_period_days: Option<f64>,
    pub model: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusSection {
    pub runs: Option<u64>,
    pub tolerance: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmSection {
    pub as_of: Option<NaiveDate>,
    pub ridge: Option<f64>,
    pub half_period_days: Option<f64>,
    pub closeness_floor: Option<f64>,
    pub max_red_cards: Option<u32>,
    pub prior_passes: Option<usize>,
    pub top_teammates: Option<usize>,
    pub age_slope: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    /// Edition the rating artifacts belong to.
    pub edition: Option<i32>,
    pub hist_scale: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub folds: Option<usize>,
    pub n_lambda: Option<usize>,
    pub lambda_min_ratio: Option<f64>,
    pub rule: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub runs: Option<u64>,
    pub extra_time_factor: Option<f64>,
    pub tiebreak: Option<String>,
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl Config {
    /// Reads a config file; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Config = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let i = &mut cfg.inputs;
        for p in [
            &mut i.matches,
            &mut i.segments,
            &mut i.odds,
            &mut i.spec,
            &mut i.covariates,
            &mut i.results,
            &mut i.squads,
            &mut i.pool,
            &mut i.threeway,
            &mut i.external,
            &mut i.ratings,
            &mut i.consensus,
            &mut i.pm_squads,
            &mut i.features,
            &mut i.model,
            &mut i.intensities,
            &mut i.log_abilities,
        ] {
            rebase(base, p);
        }
        rebase(base, &mut cfg.out_dir);
        Ok(cfg)
    }

    /// Replaces every unset tuning value with its default.
    pub fn fill_defaults(&mut self) {
        use cupcast_core::{plus_minus, predictor, simulator};
        let pm = plus_minus::PmOptions::default();
        let fit_pm = plus_minus::FitPmOptions::new(1.0);
        let lasso = predictor::LassoOptions::default();
        self.out_dir.get_or_insert_with(|| PathBuf::from("out"));
        self.rank.half_period_days.get_or_insert(cupcast_core::poisson_rank::DEFAULT_HALF_PERIOD_DAYS);
        self.rank.model.get_or_insert_with(|| "bivariate".into());
        self.consensus.runs.get_or_insert(20_000);
        self.consensus.tolerance.get_or_insert(2e-3);
        self.consensus.max_iter.get_or_insert(200);
        self.pm.ridge.get_or_insert(5.0);
        self.pm.half_period_days.get_or_insert(pm.recency_half_period_days);
        self.pm.closeness_floor.get_or_insert(pm.closeness_floor);
        self.pm.max_red_cards.get_or_insert(pm.max_red_cards);
        self.pm.prior_passes.get_or_insert(fit_pm.prior_passes);
        self.pm.top_teammates.get_or_insert(fit_pm.top_teammates);
        self.pm.age_slope.get_or_insert(pm.age_slope);
        self.features.hist_scale.get_or_insert_with(|| "ability".into());
        self.fit.folds.get_or_insert(lasso.folds);
        self.fit.n_lambda.get_or_insert(lasso.n_lambda);
        self.fit.lambda_min_ratio.get_or_insert(lasso.lambda_min_ratio);
        self.fit.rule.get_or_insert_with(|| "1se".into());
        self.simulate.runs.get_or_insert(simulator::DEFAULT_RUNS);
        self.simulate.extra_time_factor.get_or_insert(simulator::DEFAULT_EXTRA_TIME_FACTOR);
        self.simulate.tiebreak.get_or_insert_with(|| "overall".into());
    }

    /// SHA-256 of the resolved configuration.
    pub fn digest(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.context("a seed is required for this stage (--seed or `seed` in the config)")
    }

    pub fn out_dir(&self) -> &Path {
        self.out_dir.as_deref().unwrap_or(Path::new("out"))
    }
}

/// `path` or an error naming the missing input.
pub fn need<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref()
        .with_context(|| format!("missing input `{what}` (flag --{} or [inputs] {what})", what.replace('_', "-")))
}
