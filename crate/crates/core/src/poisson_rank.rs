//! Time-decayed team strengths under independent or bivariate Poisson scores.
//!
//! Goals of team i against team j follow `log λ = β0 + r_i − r_j + h·[i at home]`,
//! with an optional shared component λC for positive score dependence. The
//! strengths are identified by `Σ r_i = 0`: the last team's strength is the
//! negative sum of the others, so the optimizer works unconstrained.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ids::TeamId;
use crate::ingest::MatchRecord;
use crate::scalar::{ln_factorial, Scalar};

pub const DEFAULT_HALF_PERIOD_DAYS: f64 = 1095.0;

/// `(1/2)^(days_back / half_period)`.
pub fn time_weight(days_back: f64, half_period: f64) -> Result<f64> {
    if !(days_back >= 0.0) {
        return Err(Error::Invalid(format!("negative days_back {days_back}")));
    }
    if !(half_period > 0.0) {
        return Err(Error::Invalid(format!("half period must be positive, got {half_period}")));
    }
    Ok(0.5f64.powf(days_back / half_period))
}

/// Log of the bivariate Poisson pmf and the conditional mean of the shared count.
fn log_pmf_parts<T: Scalar>(z: u32, y: u32, l1: T, l2: T, lc: T) -> (T, T) {
    let kmax = if lc > T::zero() { z.min(y) } else { 0 };
    let (ln1, ln2) = (l1.ln(), l2.ln());
    let lnc = if lc > T::zero() { lc.ln() } else { T::zero() };
    let term = |k: u32| {
        T::from_count(z - k) * ln1 + T::from_count(y - k) * ln2 + T::from_count(k) * lnc
            - ln_factorial::<T>(z - k)
            - ln_factorial::<T>(y - k)
            - ln_factorial::<T>(k)
    };
    if kmax == 0 {
        return (term(0) - (l1 + l2 + lc), T::zero());
    }
    let max = (0..=kmax).map(term).fold(T::neg_infinity(), T::max);
    let (mut sum, mut ksum) = (T::zero(), T::zero());
    for k in 0..=kmax {
        let e = (term(k) - max).exp();
        sum = sum + e;
        ksum = ksum + T::from_count(k) * e;
    }
    (max + sum.ln() - (l1 + l2 + lc), ksum / sum)
}

/// `ln P(Z = z, Y = y)` under the bivariate Poisson model.
pub fn log_bivariate_pmf<T: Scalar>(z: u32, y: u32, l1: T, l2: T, lc: T) -> T {
    log_pmf_parts(z, y, l1, l2, lc).0
}

/// Bivariate Poisson probability of the score `z`–`y`. With `lc = 0` this is
/// the product of two independent Poisson pmfs.
pub fn bivariate_pmf<T: Scalar>(z: u32, y: u32, l1: T, l2: T, lc: T) -> T {
    log_bivariate_pmf(z, y, l1, l2, lc).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Independent,
    Bivariate,
}

impl ModelKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "independent" => Some(ModelKind::Independent),
            "bivariate" => Some(ModelKind::Bivariate),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Independent => "independent",
            ModelKind::Bivariate => "bivariate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayConfig {
    pub half_period_days: f64,
    pub as_of: NaiveDate,
}

impl DecayConfig {
    pub fn new(as_of: NaiveDate) -> Self {
        DecayConfig { half_period_days: DEFAULT_HALF_PERIOD_DAYS, as_of }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub standard_errors: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iter: 500, grad_tol: 1e-6, standard_errors: true }
    }
}

/// Standard errors from the observed information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingErrors {
    pub intercept: f64,
    pub home_effect: f64,
    /// Delta-method error of λC; zero for the independent model.
    pub covariance: f64,
    pub strengths: BTreeMap<TeamId, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingSet {
    pub intercept: f64,
    pub home_effect: f64,
    pub covariance: f64,
    pub strengths: BTreeMap<TeamId, f64>,
    pub model_kind: ModelKind,
    pub fitted_as_of: NaiveDate,
    pub half_period_days: f64,
    pub log_likelihood: f64,
    /// Weighted log-likelihood after each accepted optimizer step.
    pub trace: Vec<f64>,
    pub std_errors: Option<RatingErrors>,
    /// Identifiability notes (e.g. disconnected opponent graphs).
    pub warnings: Vec<String>,
}

impl RatingSet {
    pub fn strength(&self, team: &TeamId) -> Result<f64> {
        self.strengths
            .get(team)
            .copied()
            .ok_or_else(|| Error::UnknownTeam(team.to_string()))
    }

    /// `exp(r_i)`, the multiplicative scale of a team's strength.
    pub fn ability(&self, team: &TeamId) -> Result<f64> {
        self.strength(team).map(f64::exp)
    }

    /// Expected goals of `team_i` against `team_j`.
    pub fn intensity(&self, team_i: &TeamId, team_j: &TeamId, i_at_home: bool) -> Result<f64> {
        let home = if i_at_home { self.home_effect } else { 0.0 };
        Ok((self.intercept + self.strength(team_i)? - self.strength(team_j)? + home).exp())
    }

    /// `(λ1, λ2, λC)` for a match played in `venue` (None = neutral ground).
    pub fn predict_match(
        &self,
        team_i: &TeamId,
        team_j: &TeamId,
        venue: Option<&TeamId>,
    ) -> Result<(f64, f64, f64)> {
        let l1 = self.intensity(team_i, team_j, venue == Some(team_i))?;
        let l2 = self.intensity(team_j, team_i, venue == Some(team_j))?;
        Ok((l1, l2, self.covariance))
    }

    /// Ratings file: `# key=value` metadata, then `team,strength,ability[,se]`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# model={}", self.model_kind.as_str());
        let _ = writeln!(s, "# as_of={}", self.fitted_as_of.format("%Y-%m-%d"));
        let _ = writeln!(s, "# half_period_days={}", self.half_period_days);
        let _ = writeln!(s, "# intercept={:.12}", self.intercept);
        let _ = writeln!(s, "# home_effect={:.12}", self.home_effect);
        let _ = writeln!(s, "# covariance={:.12}", self.covariance);
        let _ = writeln!(s, "# log_likelihood={:.9}", self.log_likelihood);
        let _ = writeln!(s, "team,strength,ability,se");
        for (team, r) in &self.strengths {
            let se = self
                .std_errors
                .as_ref()
                .and_then(|e| e.strengths.get(team))
                .map(|v| format!("{v:.12}"))
                .unwrap_or_default();
            let _ = writeln!(s, "{team},{r:.12},{:.12},{se}", r.exp());
        }
        s
    }

    /// Reads what [`RatingSet::to_csv`] wrote. Optimizer trace and errors are not kept.
    pub fn from_csv(file: &str, text: &str) -> Result<RatingSet> {
        let mut meta = BTreeMap::new();
        let mut body = String::new();
        for line in text.lines() {
            match line.trim().strip_prefix('#') {
                Some(kv) => {
                    if let Some((k, v)) = kv.split_once('=') {
                        meta.insert(k.trim().to_string(), v.trim().to_string());
                    }
                }
                None => {
                    body.push_str(line);
                    body.push('\n');
                }
            }
        }
        let get = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| Error::Invalid(format!("{file}: missing `# {k}=` line")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Invalid(format!("{file}: bad value for `{k}`")))
        };
        let model_kind = ModelKind::parse(&get("model")?)
            .ok_or_else(|| Error::Invalid(format!("{file}: unknown model kind")))?;
        let fitted_as_of = NaiveDate::parse_from_str(&get("as_of")?, "%Y-%m-%d")
            .map_err(|_| Error::Invalid(format!("{file}: bad as_of date")))?;
        let (_, table) = crate::ingest::read_table(
            file,
            &body,
            &[&["team", "strength", "ability", "se"]],
        )?;
        let mut strengths = BTreeMap::new();
        for (row, fields) in table.rows {
            let r = crate::ingest::parse_real(file, row, "strength", &fields[1])?;
            strengths.insert(TeamId::new(&fields[0]), r);
        }
        Ok(RatingSet {
            intercept: num("intercept")?,
            home_effect: num("home_effect")?,
            covariance: num("covariance")?,
            strengths,
            model_kind,
            fitted_as_of,
            half_period_days: num("half_period_days")?,
            log_likelihood: num("log_likelihood")?,
            trace: Vec::new(),
            std_errors: None,
            warnings: Vec::new(),
        })
    }
}

/// One match prepared for the likelihood: team indices, home flags, goals, weight.
#[derive(Debug, Clone, Copy)]
struct Obs {
    i: usize,
    j: usize,
    hi: f64,
    hj: f64,
    z: u32,
    y: u32,
    w: f64,
}

/// Weighted log-likelihood over the unconstrained parameter vector
/// `[β0, h, r_0 .. r_{n-2}, (ln λC)]`.
struct Objective {
    obs: Vec<Obs>,
    n_teams: usize,
    kind: ModelKind,
}

impl Objective {
    fn n_params(&self) -> usize {
        2 + (self.n_teams - 1) + usize::from(self.kind == ModelKind::Bivariate)
    }

    fn strengths(&self, x: &[f64]) -> Vec<f64> {
        let free = &x[2..2 + self.n_teams - 1];
        let mut r = free.to_vec();
        r.push(-free.iter().sum::<f64>());
        r
    }

    fn covariance(&self, x: &[f64]) -> f64 {
        match self.kind {
            ModelKind::Independent => 0.0,
            ModelKind::Bivariate => x[x.len() - 1].exp(),
        }
    }

    /// Log-likelihood and its gradient.
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let n = self.n_teams;
        let r = self.strengths(x);
        let (b0, h) = (x[0], x[1]);
        let lc = self.covariance(x);
        let mut ll = 0.0;
        let mut g_b0 = 0.0;
        let mut g_h = 0.0;
        let mut g_c = 0.0;
        let mut g_r = vec![0.0; n];
        for o in &self.obs {
            let l1 = (b0 + r[o.i] - r[o.j] + h * o.hi).exp();
            let l2 = (b0 + r[o.j] - r[o.i] + h * o.hj).exp();
            let (lp, ek) = log_pmf_parts(o.z, o.y, l1, l2, lc);
            ll += o.w * lp;
            // derivatives with respect to log λ1, log λ2, log λC
            let d1 = o.w * (f64::from(o.z) - ek - l1);
            let d2 = o.w * (f64::from(o.y) - ek - l2);
            g_b0 += d1 + d2;
            g_h += d1 * o.hi + d2 * o.hj;
            g_r[o.i] += d1 - d2;
            g_r[o.j] += d2 - d1;
            g_c += o.w * (ek - lc);
        }
        let mut g = Vec::with_capacity(self.n_params());
        g.push(g_b0);
        g.push(g_h);
        g.extend((0..n - 1).map(|k| g_r[k] - g_r[n - 1]));
        if self.kind == ModelKind::Bivariate {
            g.push(g_c);
        }
        (ll, g)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS ascent with Armijo backtracking. Returns the final point, its
/// log-likelihood and the per-iteration log-likelihood trace.
fn bfgs_maximize(
    obj: &Objective,
    x0: Vec<f64>,
    opts: &FitOptions,
) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    let p = x0.len();
    let mut x = x0;
    let (mut f, mut g) = obj.eval(&x);
    let mut trace = vec![f];
    // inverse Hessian approximation of −LL
    let mut hinv = DMatrix::<f64>::identity(p, p) / max_abs(&g).max(1.0);
    let mut scaled = false;
    let mut refreshed = false;
    for iter in 0..opts.max_iter {
        if max_abs(&g) < opts.grad_tol {
            return Ok((x, f, trace));
        }
        // The curvature along ln λC fades near the boundary and leaves the
        // secant approximation stale; rebuild it from the exact curvature.
        if iter % 25 == 24 {
            refresh_inverse_hessian(obj, &x, &mut hinv);
        }
        let gv = DVector::from_column_slice(&g);
        let mut dir: Vec<f64> = (&hinv * &gv).iter().copied().collect();
        let mut slope = dot(&dir, &g);
        if !(slope > 0.0) {
            hinv = DMatrix::identity(p, p) / max_abs(&g).max(1.0);
            dir = g.iter().map(|v| v / max_abs(&g).max(1.0)).collect();
            slope = dot(&dir, &g);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            if xn == x {
                break;
            }
            let (fnew, gnew) = obj.eval(&xn);
            if fnew.is_finite() && fnew >= f + 1e-4 * t * slope {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            t *= 0.5;
        }
        let accepted = match accepted {
            Some(a) => Some(a),
            // Near the optimum the remaining ascent falls below the rounding
            // of f and Armijo cannot see it; a Newton step on the exact
            // curvature is kept if it shrinks the gradient without losing f.
            None if refreshed => {
                let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + d).collect();
                let (fnew, gnew) = obj.eval(&xn);
                let noise = 1e-12 * f.abs().max(1.0);
                (fnew.is_finite() && fnew >= f - noise && max_abs(&gnew) < max_abs(&g)).then_some((xn, fnew, gnew))
            }
            None => None,
        };
        let Some((xn, fnew, gnew)) = accepted else {
            if refreshed {
                break;
            }
            refresh_inverse_hessian(obj, &x, &mut hinv);
            refreshed = true;
            continue;
        };
        refreshed = false;
        // BFGS update for minimizing −LL: s = Δx, y = −Δg
        let s = DVector::from_iterator(p, xn.iter().zip(&x).map(|(a, b)| a - b));
        let yv = DVector::from_iterator(p, g.iter().zip(&gnew).map(|(a, b)| a - b));
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            if !scaled {
                hinv = DMatrix::identity(p, p) * (sy / yv.dot(&yv));
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &yv;
            let yhy = yv.dot(&hy);
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        x = xn;
        f = fnew;
        g = gnew;
        trace.push(f);
    }
    if max_abs(&g) < opts.grad_tol {
        return Ok((x, f, trace));
    }
    Err(Error::NonConvergence { iterations: trace.len() - 1, grad_norm: max_abs(&g) })
}

fn refresh_inverse_hessian(obj: &Objective, x: &[f64], hinv: &mut DMatrix<f64>) {
    if let Some(ch) = (-numeric_hessian(obj, x)).cholesky() {
        *hinv = ch.inverse();
    }
}

/// Hessian of the log-likelihood by central differences of the analytic gradient.
fn numeric_hessian(obj: &Objective, x: &[f64]) -> DMatrix<f64> {
    let p = x.len();
    let mut hm = DMatrix::zeros(p, p);
    for k in 0..p {
        let step = 1e-5 * x[k].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += step;
        xm[k] -= step;
        let gp = obj.eval(&xp).1;
        let gm = obj.eval(&xm).1;
        for l in 0..p {
            hm[(l, k)] = (gp[l] - gm[l]) / (2.0 * step);
        }
    }
    (&hm + hm.transpose()) * 0.5
}

/// Flags opponent graphs with more than one connected component.
fn connectivity_warnings(teams: &[TeamId], obs: &[Obs]) -> Vec<String> {
    let mut parent: Vec<usize> = (0..teams.len()).collect();
    fn find(p: &mut [usize], mut a: usize) -> usize {
        while p[a] != a {
            p[a] = p[p[a]];
            a = p[a];
        }
        a
    }
    for o in obs {
        let (a, b) = (find(&mut parent, o.i), find(&mut parent, o.j));
        parent[a] = b;
    }
    let mut comps: BTreeMap<usize, Vec<&TeamId>> = BTreeMap::new();
    for (k, t) in teams.iter().enumerate() {
        let root = find(&mut parent, k);
        comps.entry(root).or_default().push(t);
    }
    if comps.len() <= 1 {
        return Vec::new();
    }
    comps
        .values()
        .map(|c| {
            let names: Vec<&str> = c.iter().map(|t| t.as_str()).collect();
            format!(
                "disconnected component of {} teams ({}); strengths are only comparable within it",
                c.len(),
                names.join(" ")
            )
        })
        .collect()
}

/// Observations of `matches` over `teams`, plus their total goals.
fn observations(teams: &[TeamId], matches: &[MatchRecord], config: &DecayConfig) -> Result<(Vec<Obs>, f64)> {
    let index: BTreeMap<&TeamId, usize> = teams.iter().enumerate().map(|(k, t)| (t, k)).collect();
    let mut seen = vec![false; teams.len()];
    let mut obs = Vec::with_capacity(matches.len());
    let mut goals = 0.0;
    for m in matches {
        m.validate().map_err(Error::Invalid)?;
        if m.date > config.as_of {
            return Err(Error::Invalid(format!(
                "match {} v {} on {} is after the as-of date {}",
                m.home_team, m.away_team, m.date, config.as_of
            )));
        }
        let lookup = |t: &TeamId| index.get(t).copied().ok_or_else(|| Error::UnknownTeam(t.to_string()));
        let (i, j) = (lookup(&m.home_team)?, lookup(&m.away_team)?);
        seen[i] = true;
        seen[j] = true;
        let (hi, hj) = m.at_home();
        let days = (config.as_of - m.date).num_days() as f64;
        obs.push(Obs {
            i,
            j,
            hi: f64::from(u8::from(hi)),
            hj: f64::from(u8::from(hj)),
            z: m.home_goals,
            y: m.away_goals,
            w: time_weight(days, config.half_period_days)?,
        });
        goals += f64::from(m.home_goals + m.away_goals);
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::Invalid(format!(
            "team `{}` has no matches; its strength is unidentifiable",
            teams[k]
        )));
    }
    Ok((obs, goals))
}

/// Weighted log-likelihood and gradient at the unconstrained parameter vector
/// `[β0, h, r_0 .. r_{n-2}, (ln λC)]`, with `r_{n-1} = −Σ r_k`.
pub fn log_likelihood_gradient(
    teams: &[TeamId],
    matches: &[MatchRecord],
    config: &DecayConfig,
    kind: ModelKind,
    x: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if !(config.half_period_days > 0.0) || teams.len() < 2 {
        return Err(Error::Invalid("need a positive half period and at least two teams".into()));
    }
    let (obs, _) = observations(teams, matches, config)?;
    let obj = Objective { obs, n_teams: teams.len(), kind };
    if x.len() != obj.n_params() {
        return Err(Error::Invalid(format!("expected {} parameters, got {}", obj.n_params(), x.len())));
    }
    Ok(obj.eval(x))
}

/// Fits strengths by maximizing the time-weighted log-likelihood.
pub fn fit_ratings(
    matches: &[MatchRecord],
    config: &DecayConfig,
    kind: ModelKind,
) -> Result<RatingSet> {
    fit_ratings_with(matches, config, kind, &FitOptions::default())
}

pub fn fit_ratings_with(
    matches: &[MatchRecord],
    config: &DecayConfig,
    kind: ModelKind,
    opts: &FitOptions,
) -> Result<RatingSet> {
    let teams: Vec<TeamId> = matches
        .iter()
        .flat_map(|m| [m.home_team.clone(), m.away_team.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    fit_ratings_for(&teams, matches, config, kind, opts)
}

/// Like [`fit_ratings_with`] but over an explicit team list; a listed team
/// without matches is an error.
pub fn fit_ratings_for(
    teams: &[TeamId],
    matches: &[MatchRecord],
    config: &DecayConfig,
    kind: ModelKind,
    opts: &FitOptions,
) -> Result<RatingSet> {
    if !(config.half_period_days > 0.0) {
        return Err(Error::Invalid("half period must be positive".into()));
    }
    if teams.len() < 2 {
        return Err(Error::Invalid("need at least two teams to fit strengths".into()));
    }
    let (obs, goals) = observations(teams, matches, config)?;
    let warnings = connectivity_warnings(teams, &obs);
    let mean_goals = (goals / (2.0 * obs.len() as f64)).max(1e-3);

    let obj = Objective { obs, n_teams: teams.len(), kind };
    let mut x0 = vec![0.0; obj.n_params()];
    x0[0] = mean_goals.ln();
    if kind == ModelKind::Bivariate {
        let last = x0.len() - 1;
        x0[last] = 0.01f64.ln();
    }
    let (x, ll, trace) = bfgs_maximize(&obj, x0, opts)?;

    let r = obj.strengths(&x);
    let std_errors = if opts.standard_errors {
        standard_errors(&obj, &x, teams)
    } else {
        None
    };
    Ok(RatingSet {
        intercept: x[0],
        home_effect: x[1],
        covariance: obj.covariance(&x),
        strengths: teams.iter().cloned().zip(r).collect(),
        model_kind: kind,
        fitted_as_of: config.as_of,
        half_period_days: config.half_period_days,
        log_likelihood: ll,
        trace,
        std_errors,
        warnings,
    })
}

fn standard_errors(obj: &Objective, x: &[f64], teams: &[TeamId]) -> Option<RatingErrors> {
    let info = -numeric_hessian(obj, x);
    let cov = info.cholesky()?.inverse();
    let n = teams.len();
    let se = |k: usize| cov[(k, k)].max(0.0).sqrt();
    let mut strengths = BTreeMap::new();
    for k in 0..n - 1 {
        strengths.insert(teams[k].clone(), se(2 + k));
    }
    // r_n = −Σ free strengths, so its variance is the sum of the free block
    let block = cov.view((2, 2), (n - 1, n - 1)).sum();
    strengths.insert(teams[n - 1].clone(), block.max(0.0).sqrt());
    let covariance = match obj.kind {
        ModelKind::Independent => 0.0,
        ModelKind::Bivariate => obj.covariance(x) * se(x.len() - 1),
    };
    Some(RatingErrors { intercept: se(0), home_effect: se(1), covariance, strengths })
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Poisson};

    pub fn team(k: usize) -> TeamId {
        TeamId::new(&format!("T{k:02}"))
    }

    /// Matches simulated from a bivariate Poisson model, all dated `date`.
    pub fn simulate_matches(
        rng: &mut impl Rng,
        r: &[f64],
        b0: f64,
        h: f64,
        lc: f64,
        n_matches: usize,
        date: NaiveDate,
    ) -> Vec<MatchRecord> {
        let n = r.len();
        (0..n_matches)
            .map(|m| {
                let i = m % n;
                let j = (i + 1 + rng.random_range(0..n - 1)) % n;
                let neutral = rng.random_bool(0.3);
                let home = if neutral { 0.0 } else { h };
                let l1 = (b0 + r[i] - r[j] + home).exp();
                let l2 = (b0 + r[j] - r[i]).exp();
                let draw = |l: f64, rng: &mut dyn rand::RngCore| -> u32 {
                    if l <= 0.0 {
                        0
                    } else {
                        Poisson::new(l).unwrap().sample(rng) as u32
                    }
                };
                let shared = draw(lc, rng);
                MatchRecord {
                    date,
                    home_team: team(i),
                    away_team: team(j),
                    home_goals: draw(l1, rng) + shared,
                    away_goals: draw(l2, rng) + shared,
                    venue_country: if neutral { TeamId::new("NEUTRAL") } else { team(i) },
                    neutral,
                }
            })
            .collect()
    }
}
