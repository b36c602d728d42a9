//! Difference features and the lasso Poisson goal model.
//!
//! Every match yields two rows, one per team, holding the team's goals and
//! the differences between its covariates and the opponent's. A log-linear
//! Poisson model with an L1 penalty maps the differences to goal intensities;
//! the penalty is tuned by cross-validated deviance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ids::TeamId;
use crate::ingest::{CovariateRecord, Stage, TournamentMatch, BASE_COVARIATES, HYBRID_FEATURES};
use crate::metrics::Forecast;
use crate::plus_minus::SquadFeatures;
use crate::poisson_rank::RatingSet;
use crate::simulator::PairwiseIntensities;

/// Model features in column order: base covariates, then rating features.
pub fn feature_names() -> Vec<String> {
    BASE_COVARIATES.iter().chain(HYBRID_FEATURES.iter()).map(|s| s.to_string()).collect()
}

/// How the historical rating enters the features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HistScale {
    /// `exp(r_i)`.
    #[default]
    Ability,
    /// Raw `r_i`.
    Strength,
}

impl HistScale {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ability" => Some(HistScale::Ability),
            "strength" => Some(HistScale::Strength),
            _ => None,
        }
    }
}

/// Rating features of the teams of one edition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HybridLevels {
    pub hist_ability: BTreeMap<TeamId, f64>,
    pub bookmaker_log_ability: BTreeMap<TeamId, f64>,
    pub avg_pm: BTreeMap<TeamId, f64>,
    pub missing_pm_players: BTreeMap<TeamId, f64>,
}

impl HybridLevels {
    pub fn from_sources(
        ratings: Option<&RatingSet>,
        hist: HistScale,
        log_abilities: Option<&BTreeMap<TeamId, f64>>,
        squads: Option<&BTreeMap<TeamId, SquadFeatures>>,
    ) -> Self {
        let mut out = HybridLevels::default();
        if let Some(r) = ratings {
            for (t, s) in &r.strengths {
                let v = match hist {
                    HistScale::Ability => s.exp(),
                    HistScale::Strength => *s,
                };
                out.hist_ability.insert(t.clone(), v);
            }
        }
        if let Some(l) = log_abilities {
            out.bookmaker_log_ability = l.clone();
        }
        if let Some(sq) = squads {
            for (t, f) in sq {
                out.avg_pm.insert(t.clone(), f.mean_pm);
                out.missing_pm_players.insert(t.clone(), f64::from(f.missing_players));
            }
        }
        out
    }

    fn get(&self, name: &str, team: &TeamId) -> Option<f64> {
        let map = match name {
            "hist_ability" => &self.hist_ability,
            "bookmaker_log_ability" => &self.bookmaker_log_ability,
            "avg_pm" => &self.avg_pm,
            "missing_pm_players" => &self.missing_pm_players,
            _ => return None,
        };
        map.get(team).copied()
    }
}

/// Feature levels of `team` at `edition`, in [`feature_names`] order.
///
/// Rating features come from `hybrid` when present there, otherwise from the
/// covariate record's own columns.
pub fn team_levels(
    covariates: &[CovariateRecord],
    hybrid: &BTreeMap<i32, HybridLevels>,
    edition: i32,
    team: &TeamId,
) -> Result<Vec<f64>> {
    let record = covariates
        .iter()
        .find(|r| r.tournament_year == edition && &r.team == team)
        .ok_or_else(|| Error::Invalid(format!("no covariates for {team} at {edition}")))?;
    let mut out = Vec::with_capacity(BASE_COVARIATES.len() + HYBRID_FEATURES.len());
    for name in BASE_COVARIATES {
        out.push(
            record
                .get(name)
                .ok_or_else(|| Error::Invalid(format!("covariate `{name}` missing for {team} at {edition}")))?,
        );
    }
    for name in HYBRID_FEATURES {
        let v = hybrid
            .get(&edition)
            .and_then(|h| h.get(name, team))
            .or_else(|| record.get(name))
            .ok_or_else(|| Error::Invalid(format!("feature `{name}` missing for {team} at {edition}")))?;
        out.push(v);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub edition: i32,
    pub match_id: String,
    pub team: TeamId,
    pub opponent: TeamId,
    pub goals: u32,
    pub groupstage: bool,
    pub differences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureSet {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("edition,match_id,team,opponent,goals,groupstage");
        for n in &self.names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(
                s,
                "{},{},{},{},{},{}",
                r.edition,
                crate::ingest::csv_field(&r.match_id),
                r.team,
                r.opponent,
                r.goals,
                u8::from(r.groupstage)
            );
            for d in &r.differences {
                let _ = write!(s, ",{d}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_str(file: &str, text: &str) -> Result<FeatureSet> {
        let (header, table) = crate::ingest::read_dynamic_table(file, text)?;
        const FIXED: [&str; 6] = ["edition", "match_id", "team", "opponent", "goals", "groupstage"];
        if header.len() < FIXED.len() + 1 || header[..FIXED.len()].iter().zip(FIXED).any(|(a, b)| a != b) {
            return Err(Error::Schema {
                file: file.into(),
                expected: format!("{},<features>", FIXED.join(",")),
                found: header.join(","),
            });
        }
        let names = header[FIXED.len()..].to_vec();
        let mut rows = Vec::with_capacity(table.rows.len());
        for (line, f) in table.rows {
            if f.len() != header.len() {
                return Err(Error::row(file, line, format!("expected {} fields, found {}", header.len(), f.len())));
            }
            let edition = f[0].parse().map_err(|_| Error::row(file, line, format!("unparsable edition `{}`", f[0])))?;
            let differences = names
                .iter()
                .zip(&f[FIXED.len()..])
                .map(|(n, v)| crate::ingest::parse_real(file, line, n, v))
                .collect::<Result<Vec<_>>>()?;
            rows.push(FeatureRow {
                edition,
                match_id: f[1].clone(),
                team: TeamId::new(&f[2]),
                opponent: TeamId::new(&f[3]),
                goals: crate::ingest::parse_count(file, line, "goals", &f[4])?,
                groupstage: crate::ingest::parse_bool(file, line, &f[5])?,
                differences,
            });
        }
        Ok(FeatureSet { names, rows })
    }

    pub fn parse(path: impl AsRef<Path>) -> Result<FeatureSet> {
        let path = path.as_ref();
        Self::parse_str(&crate::ingest::file_label(path), &crate::ingest::read_to_string(path)?)
    }
}

/// Two rows per match, home team first.
pub fn assemble_features(
    covariates: &[CovariateRecord],
    hybrid: &BTreeMap<i32, HybridLevels>,
    matches: &[TournamentMatch],
) -> Result<FeatureSet> {
    let mut rows = Vec::with_capacity(2 * matches.len());
    for m in matches {
        let lh = team_levels(covariates, hybrid, m.edition, &m.home)?;
        let la = team_levels(covariates, hybrid, m.edition, &m.away)?;
        let diff: Vec<f64> = lh.iter().zip(&la).map(|(a, b)| a - b).collect();
        let groupstage = m.stage == Stage::Group;
        rows.push(FeatureRow {
            edition: m.edition,
            match_id: m.match_id.clone(),
            team: m.home.clone(),
            opponent: m.away.clone(),
            goals: m.home_goals,
            groupstage,
            differences: diff.clone(),
        });
        rows.push(FeatureRow {
            edition: m.edition,
            match_id: m.match_id.clone(),
            team: m.away.clone(),
            opponent: m.home.clone(),
            goals: m.away_goals,
            groupstage,
            differences: diff.iter().map(|d| -d).collect(),
        });
    }
    Ok(FeatureSet { names: feature_names(), rows })
}

/// Intercept and coefficients on the original feature scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoModel {
    pub names: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
}

impl LassoModel {
    pub fn linear_predictor(&self, differences: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(differences).map(|(b, x)| b * x).sum::<f64>()
    }

    /// `feature,coefficient`, intercept first.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# lambda={}\nfeature,coefficient\n(intercept),{}\n", self.lambda, self.intercept);
        for (n, b) in self.names.iter().zip(&self.coefficients) {
            let _ = writeln!(s, "{n},{b}");
        }
        s
    }

    pub fn parse_str(file: &str, text: &str) -> Result<LassoModel> {
        let lambda = text
            .lines()
            .filter_map(|l| l.strip_prefix("# lambda="))
            .next()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(f64::NAN);
        let (_, table) = crate::ingest::read_table(file, text, &[&["feature", "coefficient"]])?;
        let mut intercept = None;
        let mut names = Vec::new();
        let mut coefficients = Vec::new();
        for (line, f) in table.rows {
            let v = crate::ingest::parse_real(file, line, "coefficient", &f[1])?;
            if f[0] == "(intercept)" {
                intercept = Some(v);
            } else {
                names.push(f[0].clone());
                coefficients.push(v);
            }
        }
        let intercept = intercept.ok_or_else(|| Error::row(file, 0, "missing (intercept) row"))?;
        Ok(LassoModel { names, intercept, coefficients, lambda })
    }

    pub fn parse(path: impl AsRef<Path>) -> Result<LassoModel> {
        let path = path.as_ref();
        Self::parse_str(&crate::ingest::file_label(path), &crate::ingest::read_to_string(path)?)
    }
}

/// `exp(β0 + dᵀβ)`, floored at the smallest positive normal float.
pub fn predict_intensity(model: &LassoModel, row: &FeatureRow) -> f64 {
    model.linear_predictor(&row.differences).exp().max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionRule {
    /// Grid point with the smallest cross-validated deviance.
    MinDeviance,
    /// Largest λ whose deviance is within one standard error of the minimum.
    #[default]
    OneStandardError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoOptions {
    pub folds: usize,
    pub seed: u64,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    /// Overrides the data-driven grid.
    pub lambda_grid: Option<Vec<f64>>,
    pub rule: SelectionRule,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            folds: 10,
            seed: 0,
            n_lambda: 50,
            lambda_min_ratio: 1e-4,
            lambda_grid: None,
            rule: SelectionRule::OneStandardError,
            tolerance: 1e-10,
            max_sweeps: 20_000,
        }
    }
}

/// Fit at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub lambda: f64,
    pub model: LassoModel,
    pub converged: bool,
    /// Penalized objective (per observation, standardized scale) after each sweep.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub model: LassoModel,
    pub grid: Vec<f64>,
    pub cv_mean: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub n_nonzero: Vec<usize>,
    pub chosen: usize,
    pub rule: SelectionRule,
    /// Grid points where some fit hit the sweep limit.
    pub warnings: Vec<String>,
}

impl LassoFit {
    /// `lambda,mean_deviance,se_deviance,n_nonzero,chosen`.
    pub fn cv_csv(&self) -> String {
        let mut s = String::from("lambda,mean_deviance,se_deviance,n_nonzero,chosen\n");
        for k in 0..self.grid.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                self.grid[k],
                self.cv_mean[k],
                self.cv_se[k],
                self.n_nonzero[k],
                u8::from(k == self.chosen)
            );
        }
        s
    }
}

/// Standardized design, column-major.
struct Standardized {
    cols: Vec<Vec<f64>>,
    mean: Vec<f64>,
    sd: Vec<f64>,
}

fn standardize(x: &[&[f64]], p: usize) -> Standardized {
    let n = x.len() as f64;
    let mut cols = vec![Vec::with_capacity(x.len()); p];
    let mut mean = vec![0.0; p];
    let mut sd = vec![0.0; p];
    for v in 0..p {
        mean[v] = x.iter().map(|r| r[v]).sum::<f64>() / n;
        sd[v] = (x.iter().map(|r| (r[v] - mean[v]).powi(2)).sum::<f64>() / n).sqrt();
        let s = if sd[v] > 0.0 { sd[v] } else { 1.0 };
        cols[v] = x.iter().map(|r| (r[v] - mean[v]) / s).collect();
    }
    Standardized { cols, mean, sd }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Largest useful penalty: the smallest λ at which every coefficient is zero.
pub fn lambda_max(x: &[&[f64]], y: &[f64]) -> f64 {
    let p = x.first().map_or(0, |r| r.len());
    let z = standardize(x, p);
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    (0..p)
        .filter(|&v| z.sd[v] > 0.0)
        .map(|v| (z.cols[v].iter().zip(y).map(|(a, b)| a * (b - ybar)).sum::<f64>() / n).abs())
        .fold(0.0, f64::max)
}

/// `n_lambda` log-spaced values from `λ_max` down to `λ_max·ratio`.
pub fn lambda_grid(lmax: f64, n_lambda: usize, ratio: f64) -> Vec<f64> {
    if n_lambda == 1 {
        return vec![lmax];
    }
    (0..n_lambda)
        .map(|k| lmax * ratio.powf(k as f64 / (n_lambda - 1) as f64))
        .collect()
}

/// Coordinate-descent path over a decreasing grid with warm starts.
///
/// Each coordinate takes a proximal Newton step on the Poisson loss and
/// backtracks until the penalized objective does not increase, so every sweep
/// is monotone. The intercept is updated in closed form.
pub fn lasso_path(x: &[&[f64]], y: &[f64], names: &[String], grid: &[f64], opts: &LassoOptions) -> Result<Vec<PathPoint>> {
    let n = y.len();
    if n == 0 {
        return Err(Error::Invalid("no observations".into()));
    }
    if y.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
        return Err(Error::Invalid("responses must be nonnegative integers".into()));
    }
    let ysum: f64 = y.iter().sum();
    if ysum <= 0.0 {
        return Err(Error::Invalid("all responses are zero".into()));
    }
    let p = names.len();
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::Invalid("feature rows do not match the feature names".into()));
    }
    let nf = n as f64;
    let z = standardize(x, p);
    let active: Vec<usize> = (0..p).filter(|&v| z.sd[v] > 0.0).collect();

    let mut b0 = (ysum / nf).ln();
    let mut b = vec![0.0; p];
    let mut eta = vec![b0; n];
    let mut mu: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
    let mut trial = vec![0.0; n];
    let loss = |eta: &[f64], mu: &[f64]| -> f64 {
        mu.iter().zip(eta).zip(y).map(|((m, e), y)| m - y * e).sum::<f64>() / nf
    };

    let mut out = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let objective = |eta: &[f64], mu: &[f64], b: &[f64]| loss(eta, mu) + lambda * b.iter().map(|v| v.abs()).sum::<f64>();
        let mut trace = vec![objective(&eta, &mu, &b)];
        let mut converged = false;
        for _ in 0..opts.max_sweeps {
            let mut max_change = 0.0f64;
            // intercept
            let s: f64 = mu.iter().sum();
            let shift = (ysum / s).ln();
            if shift != 0.0 {
                b0 += shift;
                let f = shift.exp();
                eta.iter_mut().for_each(|e| *e += shift);
                mu.iter_mut().for_each(|m| *m *= f);
                max_change = max_change.max(shift.abs());
            }
            for &v in &active {
                let col = &z.cols[v];
                let (mut g, mut h) = (0.0, 0.0);
                for i in 0..n {
                    g += col[i] * (mu[i] - y[i]);
                    h += col[i] * col[i] * mu[i];
                }
                g /= nf;
                h /= nf;
                if !(h > 0.0) {
                    continue;
                }
                let prop = soft_threshold(b[v] - g / h, lambda / h);
                let delta = prop - b[v];
                if delta == 0.0 {
                    continue;
                }
                let base = mu.iter().sum::<f64>() / nf + lambda * b[v].abs();
                let mut t = 1.0;
                let mut accepted = false;
                for _ in 0..50 {
                    let mut acc = 0.0;
                    for i in 0..n {
                        let d = t * delta * col[i];
                        trial[i] = mu[i] * d.exp();
                        acc += trial[i] - y[i] * d;
                    }
                    if acc / nf + lambda * (b[v] + t * delta).abs() < base {
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
                if !accepted {
                    continue;
                }
                let step = t * delta;
                b[v] += step;
                for i in 0..n {
                    eta[i] += step * col[i];
                }
                std::mem::swap(&mut mu, &mut trial);
                max_change = max_change.max(step.abs() * h.sqrt());
            }
            for i in 0..n {
                mu[i] = eta[i].exp();
            }
            trace.push(objective(&eta, &mu, &b));
            if max_change < opts.tolerance {
                converged = true;
                break;
            }
        }
        // back to the original scale
        let mut coefficients = vec![0.0; p];
        let mut intercept = b0;
        for &v in &active {
            coefficients[v] = b[v] / z.sd[v];
            intercept -= coefficients[v] * z.mean[v];
        }
        out.push(PathPoint {
            lambda,
            model: LassoModel { names: names.to_vec(), intercept, coefficients, lambda },
            converged,
            objective_trace: trace,
        });
    }
    Ok(out)
}

fn poisson_deviance(y: f64, mu: f64) -> f64 {
    let a = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
    2.0 * (a - (y - mu))
}

/// Fold per row: matches stay whole, and each edition's matches are spread
/// over the folds in a seeded shuffle.
pub fn assign_folds(rows: &[FeatureRow], folds: usize, seed: u64) -> Result<Vec<usize>> {
    let mut units: BTreeMap<i32, Vec<&str>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for r in rows {
        if seen.insert((r.edition, r.match_id.as_str())) {
            units.entry(r.edition).or_default().push(&r.match_id);
        }
    }
    if folds < 2 || seen.len() < folds {
        return Err(Error::Invalid(format!("need at least 2 folds and one match per fold ({} matches, {folds} folds)", seen.len())));
    }
    let mut rng = crate::rng::replicate_rng(seed, 0);
    let mut fold_of: BTreeMap<(i32, &str), usize> = BTreeMap::new();
    let mut offset = 0;
    for (edition, mut list) in units {
        list.shuffle(&mut rng);
        let len = list.len();
        for (k, id) in list.into_iter().enumerate() {
            fold_of.insert((edition, id), (offset + k) % folds);
        }
        offset += len;
    }
    Ok(rows.iter().map(|r| fold_of[&(r.edition, r.match_id.as_str())]).collect())
}

/// Lasso Poisson fit with the penalty chosen by K-fold cross-validation.
pub fn fit_lasso_poisson(set: &FeatureSet, opts: &LassoOptions) -> Result<LassoFit> {
    let x: Vec<&[f64]> = set.rows.iter().map(|r| r.differences.as_slice()).collect();
    let y: Vec<f64> = set.rows.iter().map(|r| f64::from(r.goals)).collect();
    let grid = match &opts.lambda_grid {
        Some(g) => {
            if g.is_empty() || g.iter().any(|l| !(*l >= 0.0)) {
                return Err(Error::Invalid("lambda grid must be nonempty and nonnegative".into()));
            }
            let mut g = g.clone();
            g.sort_by(|a, b| b.total_cmp(a));
            g
        }
        None => {
            let lmax = lambda_max(&x, &y);
            if !(lmax > 0.0) {
                return Err(Error::Invalid("features carry no signal (lambda_max = 0)".into()));
            }
            lambda_grid(lmax, opts.n_lambda, opts.lambda_min_ratio)
        }
    };
    let fold = assign_folds(&set.rows, opts.folds, opts.seed)?;

    let per_fold: Vec<Result<(Vec<f64>, Vec<bool>)>> = (0..opts.folds)
        .into_par_iter()
        .map(|k| {
            let train: Vec<usize> = (0..y.len()).filter(|&i| fold[i] != k).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&i| fold[i] == k).collect();
            let xt: Vec<&[f64]> = train.iter().map(|&i| x[i]).collect();
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let path = lasso_path(&xt, &yt, &set.names, &grid, opts)?;
            let dev = path
                .iter()
                .map(|pt| {
                    test.iter()
                        .map(|&i| poisson_deviance(y[i], pt.model.linear_predictor(x[i]).exp()))
                        .sum::<f64>()
                        / test.len() as f64
                })
                .collect();
            Ok((dev, path.iter().map(|pt| pt.converged).collect()))
        })
        .collect();
    let per_fold = per_fold.into_iter().collect::<Result<Vec<_>>>()?;

    let kf = opts.folds as f64;
    let cv_mean: Vec<f64> = (0..grid.len()).map(|j| per_fold.iter().map(|f| f.0[j]).sum::<f64>() / kf).collect();
    let cv_se: Vec<f64> = (0..grid.len())
        .map(|j| {
            let var = per_fold.iter().map(|f| (f.0[j] - cv_mean[j]).powi(2)).sum::<f64>() / (kf - 1.0);
            (var / kf).sqrt()
        })
        .collect();
    let best = (0..grid.len()).fold(0, |b, j| if cv_mean[j] < cv_mean[b] { j } else { b });
    let chosen = match opts.rule {
        SelectionRule::MinDeviance => best,
        SelectionRule::OneStandardError => (0..grid.len())
            .find(|&j| cv_mean[j] <= cv_mean[best] + cv_se[best])
            .unwrap_or(best),
    };

    let path = lasso_path(&x, &y, &set.names, &grid, opts)?;
    if !path[chosen].converged {
        return Err(Error::LassoNonConvergence { lambda: grid[chosen] });
    }
    let mut warnings = Vec::new();
    for (j, pt) in path.iter().enumerate() {
        let folds_ok = per_fold.iter().all(|f| f.1[j]);
        if !pt.converged || !folds_ok {
            warnings.push(format!("coordinate descent hit the sweep limit at lambda = {:e}", grid[j]));
        }
    }
    let n_nonzero = path.iter().map(|pt| pt.model.coefficients.iter().filter(|b| **b != 0.0).count()).collect();
    Ok(LassoFit {
        model: path[chosen].model.clone(),
        grid,
        cv_mean,
        cv_se,
        n_nonzero,
        chosen,
        rule: opts.rule,
        warnings,
    })
}

/// Forecasts for every match with both rows present, keyed by match id.
pub fn match_forecasts(model: &LassoModel, set: &FeatureSet, matches: &[TournamentMatch]) -> Result<BTreeMap<String, Forecast>> {
    let index: BTreeMap<(i32, &str, &TeamId), &FeatureRow> =
        set.rows.iter().map(|r| ((r.edition, r.match_id.as_str(), &r.team), r)).collect();
    let mut out = BTreeMap::new();
    for m in matches {
        let get = |t: &TeamId| {
            index
                .get(&(m.edition, m.match_id.as_str(), t))
                .copied()
                .ok_or_else(|| Error::Invalid(format!("no feature row for {t} in match {}", m.match_id)))
        };
        let l1 = predict_intensity(model, get(&m.home)?);
        let l2 = predict_intensity(model, get(&m.away)?);
        out.insert(m.match_id.clone(), Forecast::from_intensities(l1, l2));
    }
    Ok(out)
}

/// Intensities for every ordered pair of `teams`, identical for both stages.
pub fn pairwise_intensities(model: &LassoModel, levels: &BTreeMap<TeamId, Vec<f64>>) -> PairwiseIntensities {
    let mut table = BTreeMap::new();
    for (a, la) in levels {
        for (b, lb) in levels {
            if a >= b {
                continue;
            }
            let d: Vec<f64> = la.iter().zip(lb).map(|(x, y)| x - y).collect();
            let neg: Vec<f64> = d.iter().map(|v| -v).collect();
            let lam = |x: &[f64]| model.linear_predictor(x).exp().max(f64::MIN_POSITIVE);
            let pair = (lam(&d), lam(&neg));
            for stage in [Stage::Group, Stage::Knockout] {
                table.insert((a.clone(), b.clone(), stage), pair);
            }
        }
    }
    PairwiseIntensities { table }
}

/// Per-model `(λ_home, λ_away)` keyed by match id.
pub type ExternalPredictions = BTreeMap<String, BTreeMap<String, (f64, f64)>>;

pub fn parse_external_predictions(file: &str, text: &str, matches: &[TournamentMatch]) -> Result<ExternalPredictions> {
    let known: BTreeSet<&str> = matches.iter().map(|m| m.match_id.as_str()).collect();
    let (_, table) = crate::ingest::read_table(file, text, &[&["model", "match_id", "lambda_home", "lambda_away"]])?;
    let mut out: ExternalPredictions = BTreeMap::new();
    for (line, f) in table.rows {
        if !known.contains(f[1].as_str()) {
            return Err(Error::row(file, line, format!("unknown match `{}`", f[1])));
        }
        let l1 = crate::ingest::parse_real(file, line, "lambda_home", &f[2])?;
        let l2 = crate::ingest::parse_real(file, line, "lambda_away", &f[3])?;
        if !(l1 > 0.0 && l2 > 0.0) {
            return Err(Error::row(file, line, "intensities must be positive"));
        }
        if out.entry(f[0].clone()).or_default().insert(f[1].clone(), (l1, l2)).is_some() {
            return Err(Error::row(file, line, format!("duplicate prediction for {} by {}", f[1], f[0])));
        }
    }
    Ok(out)
}

pub fn load_external_predictions(path: impl AsRef<Path>, matches: &[TournamentMatch]) -> Result<ExternalPredictions> {
    let path = path.as_ref();
    parse_external_predictions(&crate::ingest::file_label(path), &crate::ingest::read_to_string(path)?, matches)
}

/// `model,match_id,lambda_home,lambda_away`.
pub fn write_external_predictions(preds: &ExternalPredictions) -> String {
    let mut s = String::from("model,match_id,lambda_home,lambda_away\n");
    for (model, rows) in preds {
        for (id, (a, b)) in rows {
            let _ = writeln!(s, "{},{},{a},{b}", crate::ingest::csv_field(model), crate::ingest::csv_field(id));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use chrono::NaiveDate;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Poisson};

    fn record(year: i32, team: &str, fifa: f64) -> CovariateRecord {
        let mut values: BTreeMap<String, f64> = BASE_COVARIATES.iter().map(|n| (n.to_string(), 0.0)).collect();
        values.insert("fifa_rank".into(), fifa);
        CovariateRecord { tournament_year: year, team: TeamId::new(team), values }
    }

    fn tm(edition: i32, id: &str, h: &str, a: &str, g: (u32, u32), stage: Stage) -> TournamentMatch {
        TournamentMatch {
            edition,
            match_id: id.into(),
            date: NaiveDate::from_ymd_opt(edition, 6, 12).unwrap(),
            home: TeamId::new(h),
            away: TeamId::new(a),
            home_goals: g.0,
            away_goals: g.1,
            stage,
        }
    }

    fn hybrid_2004() -> BTreeMap<i32, HybridLevels> {
        let mut h = HybridLevels::default();
        for (t, pm) in [("POR", 0.133), ("GRE", 0.057)] {
            h.hist_ability.insert(TeamId::new(t), 1.0);
            h.bookmaker_log_ability.insert(TeamId::new(t), 0.0);
            h.avg_pm.insert(TeamId::new(t), pm);
            h.missing_pm_players.insert(TeamId::new(t), 0.0);
        }
        BTreeMap::from([(2004, h)])
    }

    #[test]
    fn portugal_greece_rows() {
        let covs = [record(2004, "POR", 22.0), record(2004, "GRE", 36.0)];
        let set = assemble_features(&covs, &hybrid_2004(), &[tm(2004, "1", "POR", "GRE", (1, 2), Stage::Group)]).unwrap();
        let fifa = set.names.iter().position(|n| n == "fifa_rank").unwrap();
        let pm = set.names.iter().position(|n| n == "avg_pm").unwrap();
        assert_eq!(set.rows.len(), 2);
        assert_eq!(set.rows[0].differences[fifa], -14.0);
        assert_eq!(set.rows[1].differences[fifa], 14.0);
        assert!(set.rows[0].groupstage && set.rows[1].groupstage);
        assert_relative_eq!(set.rows[0].differences[pm], 0.076, epsilon = 1e-12);
        assert_eq!((set.rows[0].goals, set.rows[1].goals), (1, 2));
    }

    #[test]
    fn missing_feature_is_an_error() {
        let covs = [record(2004, "POR", 22.0), record(2004, "GRE", 36.0)];
        let m = [tm(2004, "1", "POR", "GRE", (1, 2), Stage::Group)];
        assert!(assemble_features(&covs, &BTreeMap::new(), &m).is_err());
        assert!(assemble_features(&covs[..1], &hybrid_2004(), &m).is_err());
    }

    proptest! {
        #[test]
        fn paired_rows_are_antisymmetric(a in prop::collection::vec(-50.0f64..50.0, 20), b in prop::collection::vec(-50.0f64..50.0, 20)) {
            let mk = |t: &str, v: &[f64]| CovariateRecord {
                tournament_year: 2020,
                team: TeamId::new(t),
                values: feature_names().into_iter().zip(v.iter().copied()).collect(),
            };
            let covs = [mk("AAA", &a), mk("BBB", &b)];
            let set = assemble_features(&covs, &BTreeMap::new(), &[tm(2020, "x", "AAA", "BBB", (0, 0), Stage::Knockout)]).unwrap();
            for (p, q) in set.rows[0].differences.iter().zip(&set.rows[1].differences) {
                prop_assert_eq!(*p, -*q);
            }
            prop_assert_eq!(set.rows[0].groupstage, set.rows[1].groupstage);
            let twins = [mk("AAA", &a), mk("BBB", &a)];
            let set = assemble_features(&twins, &BTreeMap::new(), &[tm(2020, "x", "AAA", "BBB", (0, 0), Stage::Group)]).unwrap();
            prop_assert!(set.rows.iter().all(|r| r.differences.iter().all(|d| *d == 0.0)));
        }
    }

    /// Paired Poisson data: `rows` matches, features with the given true coefficients.
    fn synthetic(n_matches: usize, beta: &[f64], b0: f64, seed: u64) -> FeatureSet {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p = beta.len();
        let mut rows = Vec::new();
        for m in 0..n_matches {
            let d: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            for sign in [1.0, -1.0] {
                let x: Vec<f64> = d.iter().map(|v| sign * v).collect();
                let eta = b0 + beta.iter().zip(&x).map(|(b, v)| b * v).sum::<f64>();
                let goals = Poisson::new(eta.exp()).unwrap().sample(&mut rng) as u32;
                rows.push(FeatureRow {
                    edition: 2000 + (m % 5) as i32,
                    match_id: format!("m{m}"),
                    team: TeamId::new(if sign > 0.0 { "A" } else { "B" }),
                    opponent: TeamId::new(if sign > 0.0 { "B" } else { "A" }),
                    goals,
                    groupstage: true,
                    differences: x,
                });
            }
        }
        FeatureSet { names: (0..p).map(|k| format!("f{k}")).collect(), rows }
    }

    fn xy(set: &FeatureSet) -> (Vec<&[f64]>, Vec<f64>) {
        (
            set.rows.iter().map(|r| r.differences.as_slice()).collect(),
            set.rows.iter().map(|r| f64::from(r.goals)).collect(),
        )
    }

    #[test]
    fn huge_lambda_gives_intercept_only() {
        let set = synthetic(100, &[0.3, -0.2, 0.0], 0.2, 1);
        let (x, y) = xy(&set);
        let path = lasso_path(&x, &y, &set.names, &[1e6], &LassoOptions::default()).unwrap();
        let m = &path[0].model;
        assert!(m.coefficients.iter().all(|b| *b == 0.0));
        assert_relative_eq!(m.intercept.exp(), y.iter().sum::<f64>() / y.len() as f64, epsilon = 1e-12);
        let lmax = lambda_max(&x, &y);
        let at_max = lasso_path(&x, &y, &set.names, &[lmax * (1.0 + 1e-9)], &LassoOptions::default()).unwrap();
        assert!(at_max[0].model.coefficients.iter().all(|b| *b == 0.0));
        let below = lasso_path(&x, &y, &set.names, &[lmax * 0.9], &LassoOptions::default()).unwrap();
        assert!(below[0].model.coefficients.iter().any(|b| *b != 0.0));
    }

    /// Unpenalized Poisson MLE by Newton's method on the raw design.
    fn newton_oracle(x: &[&[f64]], y: &[f64]) -> Vec<f64> {
        let n = y.len();
        let p = x[0].len() + 1;
        let design = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
        let yv = DVector::from_column_slice(y);
        let mut beta = DVector::zeros(p);
        for _ in 0..100 {
            let mu = (&design * &beta).map(f64::exp);
            let grad = design.transpose() * (&yv - &mu);
            let w = DMatrix::from_diagonal(&mu);
            let info = design.transpose() * w * &design;
            let step = info.cholesky().unwrap().solve(&grad);
            beta += &step;
            if step.amax() < 1e-13 {
                break;
            }
        }
        beta.iter().copied().collect()
    }

    #[test]
    fn zero_lambda_matches_unpenalized_newton() {
        let set = synthetic(400, &[0.4, -0.3, 0.1, 0.0], 0.1, 2);
        let (x, y) = xy(&set);
        let path = lasso_path(&x, &y, &set.names, &[0.0], &LassoOptions::default()).unwrap();
        assert!(path[0].converged);
        let oracle = newton_oracle(&x, &y);
        assert!((path[0].model.intercept - oracle[0]).abs() < 1e-4);
        for (a, b) in path[0].model.coefficients.iter().zip(&oracle[1..]) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn sweeps_never_increase_the_objective() {
        let set = synthetic(200, &[0.5, -0.5, 0.2, 0.0, 0.0], 0.0, 3);
        let (x, y) = xy(&set);
        let lmax = lambda_max(&x, &y);
        let grid = lambda_grid(lmax, 10, 1e-3);
        for pt in lasso_path(&x, &y, &set.names, &grid, &LassoOptions::default()).unwrap() {
            for w in pt.objective_trace.windows(2) {
                // evaluation of the objective itself carries rounding error
                assert!(w[1] <= w[0] + 1e-13 * w[0].abs(), "{} > {}", w[1], w[0]);
            }
        }
    }

    #[test]
    fn one_feature_solution_is_a_soft_threshold_fixed_point() {
        let set = synthetic(150, &[0.4], 0.3, 4);
        let (x, y) = xy(&set);
        let lmax = lambda_max(&x, &y);
        let lambda = 0.3 * lmax;
        let pt = &lasso_path(&x, &y, &set.names, &[lambda], &LassoOptions::default()).unwrap()[0];
        // standardized coefficient and its quadratic approximation at convergence
        let n = y.len() as f64;
        let mean = x.iter().map(|r| r[0]).sum::<f64>() / n;
        let sd = (x.iter().map(|r| (r[0] - mean).powi(2)).sum::<f64>() / n).sqrt();
        let bs = pt.model.coefficients[0] * sd;
        let (mut g, mut h) = (0.0, 0.0);
        for (r, yi) in x.iter().zip(&y) {
            let mu = pt.model.linear_predictor(r).exp();
            let z = (r[0] - mean) / sd;
            g += z * (mu - yi) / n;
            h += z * z * mu / n;
        }
        let closed = soft_threshold(bs - g / h, lambda / h);
        assert!((closed - bs).abs() < 1e-8);
        assert!(bs != 0.0);
    }

    #[test]
    fn cv_picks_the_minimum_and_respects_the_one_se_flag() {
        let set = synthetic(300, &[0.4, 0.0, -0.3, 0.0, 0.0, 0.0], 0.1, 5);
        let min = LassoOptions { seed: 9, rule: SelectionRule::MinDeviance, ..LassoOptions::default() };
        let fit = fit_lasso_poisson(&set, &min).unwrap();
        assert!(fit.cv_mean.iter().all(|d| fit.cv_mean[fit.chosen] <= *d));
        assert_eq!(fit.model.lambda, fit.grid[fit.chosen]);
        let again = fit_lasso_poisson(&set, &min).unwrap();
        assert_eq!(fit, again);
        let se = fit_lasso_poisson(&set, &LassoOptions { seed: 9, rule: SelectionRule::OneStandardError, ..LassoOptions::default() }).unwrap();
        assert!(se.model.lambda >= fit.model.lambda);
        assert!(se.cv_mean[se.chosen] <= fit.cv_mean[fit.chosen] + fit.cv_se[fit.chosen]);
    }

    #[test]
    fn cross_validated_support_recovery() {
        let mut beta = vec![0.0; 17];
        beta[2] = 0.5;
        beta[7] = -0.4;
        beta[11] = 0.3;
        for seed in 0..3 {
            let set = synthetic(500, &beta, 0.2, 100 + seed);
            let fit = fit_lasso_poisson(&set, &LassoOptions { seed, ..LassoOptions::default() }).unwrap();
            let support: Vec<usize> = (0..17).filter(|&v| fit.model.coefficients[v] != 0.0).collect();
            assert!([2, 7, 11].iter().all(|v| support.contains(v)), "seed {seed}: {support:?}");
            assert!(support.len() - 3 <= 3, "seed {seed}: {support:?}");
        }
    }

    #[test]
    fn folds_keep_matches_whole_and_are_seeded() {
        let set = synthetic(60, &[0.1], 0.0, 6);
        let f = assign_folds(&set.rows, 10, 1).unwrap();
        for pair in f.chunks(2) {
            assert_eq!(pair[0], pair[1]);
        }
        assert_eq!(f, assign_folds(&set.rows, 10, 1).unwrap());
        let counts = (0..10).map(|k| f.iter().filter(|&&x| x == k).count()).collect::<Vec<_>>();
        assert!(counts.iter().all(|&c| c == 12));
        assert!(assign_folds(&set.rows, 1, 1).is_err());
    }

    #[test]
    fn prediction_is_log_linear() {
        let model = LassoModel { names: vec!["a".into(), "b".into()], intercept: 0.2, coefficients: vec![0.5, -1.0], lambda: 0.1 };
        let row = |d: Vec<f64>| FeatureRow {
            edition: 1,
            match_id: "m".into(),
            team: TeamId::new("A"),
            opponent: TeamId::new("B"),
            goals: 0,
            groupstage: false,
            differences: d,
        };
        assert_relative_eq!(predict_intensity(&model, &row(vec![0.0, 0.0])), 0.2f64.exp());
        let up = predict_intensity(&model, &row(vec![1.0, 0.3])).ln();
        let down = predict_intensity(&model, &row(vec![-1.0, -0.3])).ln();
        assert_relative_eq!(up - 0.2, 0.2 - down, epsilon = 1e-12);
        assert!(predict_intensity(&model, &row(vec![-1e3, 1e3])) > 0.0);
        assert_eq!(LassoModel::parse_str("m", &model.to_csv()).unwrap(), model);
    }

    #[test]
    fn feature_csv_round_trip() {
        let set = synthetic(5, &[0.1, 0.2], 0.0, 7);
        assert_eq!(FeatureSet::parse_str("f", &set.to_csv()).unwrap(), set);
    }

    #[test]
    fn external_predictions() {
        let matches: Vec<TournamentMatch> =
            (0..36).map(|k| tm(2020, &format!("g{k}"), "AAA", "BBB", (1, 0), Stage::Group)).collect();
        let mut text = String::from("model,match_id,lambda_home,lambda_away\n");
        for model in ["forest", "boost"] {
            for m in &matches {
                let _ = writeln!(text, "{model},{},1.3,0.9", m.match_id);
            }
        }
        let p = parse_external_predictions("p", &text, &matches).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p.values().all(|s| s.len() == 36));
        assert_eq!(parse_external_predictions("p", &write_external_predictions(&p), &matches).unwrap(), p);
        let bad = "model,match_id,lambda_home,lambda_away\nx,g0,0,1\n";
        assert!(parse_external_predictions("p", bad, &matches).is_err());
        let unknown = "model,match_id,lambda_home,lambda_away\nx,zz,1,1\n";
        assert!(parse_external_predictions("p", unknown, &matches).is_err());
    }

    #[test]
    fn pairwise_table_is_consistent_with_rows() {
        let model = LassoModel { names: vec!["a".into()], intercept: 0.1, coefficients: vec![0.4], lambda: 0.0 };
        let levels = BTreeMap::from([(TeamId::new("AAA"), vec![1.0]), (TeamId::new("BBB"), vec![-0.5])]);
        let t = pairwise_intensities(&model, &levels);
        let (a, b) = t.table[&(TeamId::new("AAA"), TeamId::new("BBB"), Stage::Knockout)];
        assert_relative_eq!(a, (0.1f64 + 0.6).exp());
        assert_relative_eq!(b, (0.1f64 - 0.6).exp());
    }
}
