//! Adjusted plus-minus player ratings.
//!
//! Each segment (a stretch of play with fixed line-ups) is one regression row:
//! the response is the goal difference during the segment, home players enter
//! with `+w` and away players with `−w`, where `w` shrinks for a side playing
//! short-handed. Rows are weighted by recency, duration and closeness of the
//! score, and a ridge penalty pulls each player towards the weighted mean of
//! his most frequent teammates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ids::{PlayerId, TeamId};
use crate::ingest::{PoolEntry, SegmentRecord};
use crate::poisson_rank::time_weight;

#[derive(Debug, Clone, PartialEq)]
pub struct PmOptions {
    pub recency_half_period_days: f64,
    /// Lower bound of the closeness weight `1/(1 + |goal difference|)`.
    pub closeness_floor: f64,
    /// Presence multiplier per missing player on a short-handed side.
    pub red_card_factor: f64,
    /// Number of red-card indicator columns (`k`-th column: at least `k` reds).
    pub max_red_cards: u32,
    /// Age adjustment `1 + slope·(age − peak)/peak`; zero switches it off.
    pub age_slope: f64,
    pub age_peak: f64,
    pub ages: BTreeMap<PlayerId, f64>,
    /// Per-player league multiplier; absent players use 1.
    pub league_multipliers: BTreeMap<PlayerId, f64>,
}

impl Default for PmOptions {
    fn default() -> Self {
        PmOptions {
            recency_half_period_days: 730.0,
            closeness_floor: 0.25,
            red_card_factor: 10.0 / 11.0,
            max_red_cards: 2,
            age_slope: 0.0,
            age_peak: 27.0,
            ages: BTreeMap::new(),
            league_multipliers: BTreeMap::new(),
        }
    }
}

/// One segment as a sparse regression row.
#[derive(Debug, Clone, PartialEq)]
pub struct PmRow {
    /// `(player column, signed presence entry)`.
    pub players: Vec<(usize, f64)>,
    /// `(country column, ±1)` when the home side plays at home.
    pub home: Option<(usize, f64)>,
    pub red: Vec<f64>,
    pub y: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PMDesign {
    pub players: Vec<PlayerId>,
    pub countries: Vec<TeamId>,
    pub n_red: usize,
    pub rows: Vec<PmRow>,
    /// Shared minutes between players on the same side.
    pub shared_minutes: BTreeMap<(usize, usize), f64>,
    pub as_of: NaiveDate,
}

impl PMDesign {
    pub fn n_cols(&self) -> usize {
        self.players.len() + self.countries.len() + self.n_red
    }

    /// The design of the same data with home and away swapped everywhere.
    pub fn mirrored(&self) -> PMDesign {
        let mut m = self.clone();
        for r in &mut m.rows {
            r.players.iter_mut().for_each(|e| e.1 = -e.1);
            if let Some(h) = &mut r.home {
                h.1 = -h.1;
            }
            r.red.iter_mut().for_each(|v| *v = -*v);
            r.y = -r.y;
        }
        m
    }

    /// Row `i` as a dense vector over all columns.
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n_cols()];
        let r = &self.rows[i];
        for &(c, v) in &r.players {
            x[c] = v;
        }
        let p = self.players.len();
        if let Some((c, v)) = r.home {
            x[p + c] = v;
        }
        for (k, v) in r.red.iter().enumerate() {
            x[p + self.countries.len() + k] = *v;
        }
        x
    }
}

fn presence_multiplier(opts: &PmOptions, p: &PlayerId) -> f64 {
    let age = match opts.ages.get(p) {
        Some(a) if opts.age_slope != 0.0 => 1.0 + opts.age_slope * (a - opts.age_peak) / opts.age_peak,
        _ => 1.0,
    };
    age * opts.league_multipliers.get(p).copied().unwrap_or(1.0)
}

/// Builds the weighted regression design from segments.
pub fn build_design(segments: &[SegmentRecord], as_of: NaiveDate, opts: &PmOptions) -> Result<PMDesign> {
    if !(opts.recency_half_period_days > 0.0) || !(opts.red_card_factor > 0.0) || !(opts.closeness_floor > 0.0) {
        return Err(Error::Invalid("plus-minus weights must be positive".into()));
    }
    let players: Vec<PlayerId> = segments
        .iter()
        .flat_map(|s| s.home_players.iter().chain(&s.away_players).cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let pidx: BTreeMap<&PlayerId, usize> = players.iter().enumerate().map(|(k, p)| (p, k)).collect();
    let countries: Vec<TeamId> = segments
        .iter()
        .filter(|s| !s.neutral)
        .map(|s| s.venue_country.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n_red = opts.max_red_cards as usize;

    // score at the start of each segment, per match
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&segments[a], &segments[b]);
        (x.match_id.as_str(), x.start_minute).cmp(&(y.match_id.as_str(), y.start_minute))
    });
    let mut gd_at_start = vec![0i64; segments.len()];
    let mut running: BTreeMap<&str, i64> = BTreeMap::new();
    for &i in &order {
        let s = &segments[i];
        let gd = running.entry(s.match_id.as_str()).or_insert(0);
        gd_at_start[i] = *gd;
        *gd += s.goal_difference();
    }

    let mut rows = Vec::with_capacity(segments.len());
    let mut shared: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, s) in segments.iter().enumerate() {
        if s.match_date > as_of {
            return Err(Error::Invalid(format!(
                "segment {}/{} dated {} is after the as-of date {as_of}",
                s.match_id, s.segment_id, s.match_date
            )));
        }
        if let Some(p) = s.home_players.iter().find(|p| s.away_players.contains(p)) {
            return Err(Error::Invalid(format!(
                "player `{p}` appears for both sides in segment {}/{}",
                s.match_id, s.segment_id
            )));
        }
        let side_weight = |reds: u32| opts.red_card_factor.powi(reds as i32);
        let (wh, wa) = (side_weight(s.home_red_at_start), side_weight(s.away_red_at_start));
        let mut entries = Vec::with_capacity(s.home_players.len() + s.away_players.len());
        for p in &s.home_players {
            entries.push((pidx[p], wh * presence_multiplier(opts, p)));
        }
        for p in &s.away_players {
            entries.push((pidx[p], -wa * presence_multiplier(opts, p)));
        }
        let home = if s.neutral {
            None
        } else {
            let c = countries.iter().position(|c| *c == s.venue_country).expect("collected");
            Some((c, 1.0))
        };
        let red = (1..=opts.max_red_cards)
            .map(|k| f64::from(u8::from(s.home_red_at_start >= k)) - f64::from(u8::from(s.away_red_at_start >= k)))
            .collect();
        let days = (as_of - s.match_date).num_days() as f64;
        let recency = time_weight(days, opts.recency_half_period_days)?;
        let duration = f64::from(s.minutes()) / 90.0;
        let closeness = (1.0 / (1.0 + gd_at_start[i].abs() as f64)).max(opts.closeness_floor);
        rows.push(PmRow { players: entries, home, red, y: s.goal_difference() as f64, weight: recency * duration * closeness });

        for side in [&s.home_players, &s.away_players] {
            for a in side {
                for b in side {
                    if a < b {
                        *shared.entry((pidx[a], pidx[b])).or_insert(0.0) += f64::from(s.minutes());
                    }
                }
            }
        }
    }
    Ok(PMDesign { players, countries, n_red, rows, shared_minutes: shared, as_of })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PmSolver {
    /// Dense Cholesky up to [`DENSE_LIMIT`] columns, conjugate gradients above.
    #[default]
    Auto,
    Dense,
    ConjugateGradient,
}

/// Column count above which the dense normal matrix (8·p² bytes) is avoided.
pub const DENSE_LIMIT: usize = 4000;

#[derive(Debug, Clone, PartialEq)]
pub struct FitPmOptions {
    pub ridge: f64,
    /// Refits after the first pass, each with updated teammate priors.
    pub prior_passes: usize,
    /// Teammates (by shared minutes) that define a player's prior.
    pub top_teammates: usize,
    pub solver: PmSolver,
}

impl FitPmOptions {
    pub fn new(ridge: f64) -> Self {
        FitPmOptions { ridge, prior_passes: 2, top_teammates: 5, solver: PmSolver::Auto }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PMRatings {
    pub players: BTreeMap<PlayerId, f64>,
    pub home: BTreeMap<TeamId, f64>,
    pub red: Vec<f64>,
    /// Teammate prior used in the last pass.
    pub priors: BTreeMap<PlayerId, f64>,
    pub ridge: f64,
    pub as_of: NaiveDate,
}

impl PMRatings {
    /// `player,rating`.
    pub fn players_csv(&self) -> String {
        let mut s = String::from("player,rating\n");
        for (p, r) in &self.players {
            let _ = writeln!(s, "{p},{r:.6}");
        }
        s
    }
}

/// Solves `(XᵀWX + λI) β = XᵀWy + λ m`.
fn solve_ridge(design: &PMDesign, ridge: f64, prior: &[f64], solver: PmSolver) -> Result<Vec<f64>> {
    let p = design.n_cols();
    let np = design.players.len();
    let nc = design.countries.len();
    let sparse_row = |r: &PmRow| -> Vec<(usize, f64)> {
        let mut v = r.players.clone();
        if let Some((c, x)) = r.home {
            v.push((np + c, x));
        }
        v.extend(r.red.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(k, x)| (np + nc + k, *x)));
        v
    };
    let rows: Vec<(Vec<(usize, f64)>, f64, f64)> = design.rows.iter().map(|r| (sparse_row(r), r.y, r.weight)).collect();
    let mut rhs = vec![0.0; p];
    for (x, y, w) in &rows {
        for &(c, v) in x {
            rhs[c] += w * v * y;
        }
    }
    for (k, m) in prior.iter().enumerate() {
        rhs[k] += ridge * m;
    }
    let dense = match solver {
        PmSolver::Dense => true,
        PmSolver::ConjugateGradient => false,
        PmSolver::Auto => p <= DENSE_LIMIT,
    };
    if dense {
        let mut a = DMatrix::<f64>::zeros(p, p);
        for (x, _, w) in &rows {
            for &(i, vi) in x {
                for &(j, vj) in x {
                    a[(i, j)] += w * vi * vj;
                }
            }
        }
        for k in 0..p {
            a[(k, k)] += ridge;
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::Invalid("ridge normal equations are not positive definite".into()))?;
        return Ok(chol.solve(&DVector::from_vec(rhs)).iter().copied().collect());
    }
    // matrix-free conjugate gradients
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out: Vec<f64> = v.iter().map(|x| ridge * x).collect();
        for (x, _, w) in &rows {
            let dot: f64 = x.iter().map(|&(c, e)| e * v[c]).sum();
            for &(c, e) in x {
                out[c] += w * e * dot;
            }
        }
        out
    };
    let mut beta = vec![0.0; p];
    let mut r = rhs.clone();
    let mut d = r.clone();
    let mut rr: f64 = r.iter().map(|x| x * x).sum();
    let target = 1e-28 * rr.max(1e-300);
    for _ in 0..10 * p.max(10) {
        if rr <= target {
            break;
        }
        let ad = apply(&d);
        let alpha = rr / d.iter().zip(&ad).map(|(a, b)| a * b).sum::<f64>();
        for k in 0..p {
            beta[k] += alpha * d[k];
            r[k] -= alpha * ad[k];
        }
        let rr_new: f64 = r.iter().map(|x| x * x).sum();
        let beta_cg = rr_new / rr;
        for k in 0..p {
            d[k] = r[k] + beta_cg * d[k];
        }
        rr = rr_new;
    }
    Ok(beta)
}

/// Teammate prior for each player: shared-minutes-weighted mean rating of
/// the `top` most frequent teammates.
fn teammate_priors(design: &PMDesign, ratings: &[f64], top: usize) -> Vec<f64> {
    let np = design.players.len();
    let mut mates: Vec<Vec<(f64, usize)>> = vec![Vec::new(); np];
    for (&(a, b), &m) in &design.shared_minutes {
        mates[a].push((m, b));
        mates[b].push((m, a));
    }
    mates
        .into_iter()
        .map(|mut list| {
            list.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
            list.truncate(top);
            let total: f64 = list.iter().map(|x| x.0).sum();
            if total > 0.0 {
                list.iter().map(|&(m, k)| m * ratings[k]).sum::<f64>() / total
            } else {
                0.0
            }
        })
        .collect()
}

/// Weighted ridge fit with iterated teammate-prior recentering.
pub fn fit_pm(design: &PMDesign, opts: &FitPmOptions) -> Result<PMRatings> {
    if !(opts.ridge > 0.0) {
        return Err(Error::Invalid(format!("ridge strength must be positive, got {}", opts.ridge)));
    }
    let np = design.players.len();
    let mut prior = vec![0.0; np];
    let mut beta = solve_ridge(design, opts.ridge, &prior, opts.solver)?;
    for _ in 0..opts.prior_passes {
        prior = teammate_priors(design, &beta[..np], opts.top_teammates);
        beta = solve_ridge(design, opts.ridge, &prior, opts.solver)?;
    }
    let nc = design.countries.len();
    Ok(PMRatings {
        players: design.players.iter().cloned().zip(beta[..np].iter().copied()).collect(),
        home: design.countries.iter().cloned().zip(beta[np..np + nc].iter().copied()).collect(),
        red: beta[np + nc..].to_vec(),
        priors: design.players.iter().cloned().zip(prior).collect(),
        ridge: opts.ridge,
        as_of: design.as_of,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquadFeatures {
    pub mean_pm: f64,
    pub median_pm: f64,
    pub top11_pm: f64,
    pub missing_players: u32,
    /// Squad players without segments; rated with the mean of rated squad mates.
    pub unrated: Vec<PlayerId>,
}

/// Players of `team` with a national-team appearance in the two years up to `as_of`.
pub fn recent_pool(entries: &[PoolEntry], team: &TeamId, as_of: NaiveDate) -> Vec<PlayerId> {
    let cutoff = as_of.checked_sub_months(chrono::Months::new(24)).unwrap_or(NaiveDate::MIN);
    entries
        .iter()
        .filter(|e| &e.team == team && e.last_appearance >= cutoff && e.last_appearance <= as_of)
        .map(|e| e.player.clone())
        .collect()
}

/// Squad aggregates: mean, median and top-11 mean rating, plus the number of
/// pool players left out of the squad who rate above its 11th-best player.
pub fn squad_features(
    ratings: &PMRatings,
    squad: &BTreeSet<PlayerId>,
    national_pool: &[PlayerId],
) -> Result<SquadFeatures> {
    if squad.len() < 11 {
        return Err(Error::Invalid(format!("squad has {} players; need at least 11", squad.len())));
    }
    let rated: Vec<f64> = squad.iter().filter_map(|p| ratings.players.get(p).copied()).collect();
    let fallback = if rated.is_empty() { 0.0 } else { rated.iter().sum::<f64>() / rated.len() as f64 };
    let unrated: Vec<PlayerId> = squad.iter().filter(|p| !ratings.players.contains_key(*p)).cloned().collect();
    let mut values: Vec<f64> = squad.iter().map(|p| ratings.players.get(p).copied().unwrap_or(fallback)).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let n = values.len();
    let mean_pm = values.iter().sum::<f64>() / n as f64;
    let median_pm = if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) };
    let top11_pm = values[..11].iter().sum::<f64>() / 11.0;
    let eleventh = values[10];
    let missing_players = national_pool
        .iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|p| !squad.contains(*p))
        .filter(|p| ratings.players.get(*p).is_some_and(|r| *r > eleventh))
        .count() as u32;
    Ok(SquadFeatures { mean_pm, median_pm, top11_pm, missing_players, unrated })
}

/// `team,mean_pm,median_pm,top11_pm,missing_players,unrated`.
pub fn squads_csv(features: &BTreeMap<TeamId, SquadFeatures>) -> String {
    let mut s = String::from("team,mean_pm,median_pm,top11_pm,missing_players,unrated\n");
    for (t, f) in features {
        let unrated: Vec<&str> = f.unrated.iter().map(PlayerId::as_str).collect();
        let _ = writeln!(
            s,
            "{t},{:.6},{:.6},{:.6},{},{}",
            f.mean_pm,
            f.median_pm,
            f.top11_pm,
            f.missing_players,
            unrated.join(";")
        );
    }
    s
}

/// Reads [`squads_csv`] output back.
pub fn parse_squads_features(file: &str, text: &str) -> Result<BTreeMap<TeamId, SquadFeatures>> {
    let (_, table) = crate::ingest::read_table(
        file,
        text,
        &[&["team", "mean_pm", "median_pm", "top11_pm", "missing_players", "unrated"]],
    )?;
    let mut out = BTreeMap::new();
    for (row, f) in table.rows {
        let real = |k: usize, what: &str| crate::ingest::parse_real(file, row, what, &f[k]);
        out.insert(
            TeamId::new(&f[0]),
            SquadFeatures {
                mean_pm: real(1, "mean_pm")?,
                median_pm: real(2, "median_pm")?,
                top11_pm: real(3, "top11_pm")?,
                missing_players: crate::ingest::parse_count(file, row, "missing_players", &f[4])?,
                unrated: f[5].split(';').filter(|s| !s.trim().is_empty()).map(PlayerId::new).collect(),
            },
        );
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    pub fn pid(team: usize, k: usize) -> PlayerId {
        PlayerId::new(&format!("P{team:02}_{k:02}"))
    }

    /// A league where each segment's goal difference is the rounded sum of
    /// home strengths minus away strengths plus Gaussian noise.
    pub fn synthetic_league(
        rng: &mut impl Rng,
        strengths: &[Vec<f64>],
        n_matches: usize,
        noise: f64,
        date: NaiveDate,
    ) -> Vec<SegmentRecord> {
        let n_teams = strengths.len();
        let normal = Normal::new(0.0, noise).unwrap();
        let mut out = Vec::new();
        for m in 0..n_matches {
            let h = m % n_teams;
            let a = (h + 1 + rng.random_range(0..n_teams - 1)) % n_teams;
            let pick = |rng: &mut dyn rand::RngCore, t: usize| -> Vec<usize> {
                let mut idx: Vec<usize> = (0..strengths[t].len()).collect();
                rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), rng);
                idx.truncate(11);
                idx.sort();
                idx
            };
            let mut start = 0;
            for seg in 0..2u32 {
                let (hp, ap) = (pick(rng, h), pick(rng, a));
                let mean: f64 = hp.iter().map(|&k| strengths[h][k]).sum::<f64>()
                    - ap.iter().map(|&k| strengths[a][k]).sum::<f64>();
                let d = (mean + normal.sample(rng)).round() as i64;
                let end = start + 45;
                out.push(SegmentRecord {
                    match_id: format!("M{m:05}"),
                    segment_id: seg + 1,
                    start_minute: start,
                    end_minute: end,
                    home_players: hp.iter().map(|&k| pid(h, k)).collect(),
                    away_players: ap.iter().map(|&k| pid(a, k)).collect(),
                    home_red_at_start: 0,
                    away_red_at_start: 0,
                    home_goals_during: d.max(0) as u32,
                    away_goals_during: (-d).max(0) as u32,
                    match_date: date,
                    neutral: true,
                    venue_country: TeamId::new("NEUTRAL"),
                });
                start = end;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn ids(prefix: &str, n: usize) -> Vec<PlayerId> {
        (0..n).map(|k| PlayerId::new(&format!("{prefix}{k}"))).collect()
    }

    fn seg(id: &str, k: u32, start: u32, end: u32, reds: (u32, u32), goals: (u32, u32)) -> SegmentRecord {
        SegmentRecord {
            match_id: id.into(),
            segment_id: k,
            start_minute: start,
            end_minute: end,
            home_players: ids("H", 11),
            away_players: ids("A", 11),
            home_red_at_start: reds.0,
            away_red_at_start: reds.1,
            home_goals_during: goals.0,
            away_goals_during: goals.1,
            match_date: d("2020-06-01"),
            neutral: true,
            venue_country: TeamId::new("XXX"),
        }
    }

    #[test]
    fn identity_multipliers_on_a_plain_segment() {
        let design = build_design(&[seg("1", 1, 0, 90, (0, 0), (1, 0))], d("2020-06-01"), &PmOptions::default()).unwrap();
        let row = &design.rows[0];
        assert!(row.players.iter().all(|&(_, v)| v == 1.0 || v == -1.0));
        assert_eq!(row.players.iter().filter(|e| e.1 > 0.0).count(), 11);
        assert_eq!(row.weight, 1.0);
        assert!(row.home.is_none());
        assert_eq!(row.red, vec![0.0, 0.0]);
        assert_eq!(row.y, 1.0);
    }

    #[test]
    fn red_card_scales_short_side_and_sets_covariate() {
        let segs = [seg("87611", 1, 0, 60, (0, 0), (0, 0)), seg("87611", 2, 60, 90, (0, 1), (1, 0))];
        let design = build_design(&segs, d("2020-06-01"), &PmOptions::default()).unwrap();
        let row = &design.rows[1];
        for &(c, v) in &row.players {
            if design.players[c].as_str().starts_with('A') {
                assert_relative_eq!(v, -10.0 / 11.0, epsilon = 1e-15);
            } else {
                assert_eq!(v, 1.0);
            }
        }
        assert_eq!(row.red, vec![-1.0, 0.0]);
    }

    #[test]
    fn weights_combine_recency_duration_closeness() {
        let segs = [seg("1", 1, 0, 45, (0, 0), (2, 0)), seg("1", 2, 45, 90, (0, 0), (0, 0))];
        let design = build_design(&segs, d("2022-06-01"), &PmOptions::default()).unwrap();
        let recency = time_weight(730.0, 730.0).unwrap();
        assert_relative_eq!(design.rows[0].weight, recency * 0.5, epsilon = 1e-15);
        assert_relative_eq!(design.rows[1].weight, recency * 0.5 / 3.0, epsilon = 1e-15);
        let blowout = [seg("1", 1, 0, 45, (0, 0), (6, 0)), seg("1", 2, 45, 90, (0, 0), (0, 0))];
        let design = build_design(&blowout, d("2022-06-01"), &PmOptions::default()).unwrap();
        assert_relative_eq!(design.rows[1].weight, recency * 0.5 * 0.25, epsilon = 1e-15);
    }

    #[test]
    fn home_column_and_future_segment() {
        let mut s = seg("1", 1, 0, 90, (0, 0), (1, 0));
        s.neutral = false;
        s.venue_country = TeamId::new("POR");
        let design = build_design(std::slice::from_ref(&s), d("2020-06-01"), &PmOptions::default()).unwrap();
        assert_eq!(design.countries, vec![TeamId::new("POR")]);
        assert_eq!(design.rows[0].home, Some((0, 1.0)));
        assert!(build_design(&[s], d("2020-05-01"), &PmOptions::default()).is_err());
        let mut both = seg("1", 1, 0, 90, (0, 0), (1, 0));
        both.away_players[0] = both.home_players[0].clone();
        assert!(build_design(&[both], d("2020-06-01"), &PmOptions::default()).is_err());
    }

    #[test]
    fn mirrored_design_negates_entries() {
        let segs = [seg("1", 1, 0, 60, (0, 0), (1, 0)), seg("1", 2, 60, 90, (1, 0), (0, 1))];
        let design = build_design(&segs, d("2020-06-01"), &PmOptions::default()).unwrap();
        let m = design.mirrored();
        for i in 0..design.rows.len() {
            let (a, b) = (design.dense_row(i), m.dense_row(i));
            assert!(a.iter().zip(&b).all(|(x, y)| *x == -*y));
            assert_eq!(design.rows[i].weight, m.rows[i].weight);
        }
    }

    fn league(seed: u64) -> (Vec<Vec<f64>>, Vec<SegmentRecord>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let strengths: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..15).map(|_| rand::Rng::random_range(&mut rng, -0.3..0.3)).collect())
            .collect();
        let segs = synthetic_league(&mut rng, &strengths, 600, 0.5, d("2020-01-01"));
        (strengths, segs)
    }

    #[test]
    fn mirror_invariance_is_exact() {
        let (_, segs) = league(1);
        let design = build_design(&segs, d("2020-06-01"), &PmOptions::default()).unwrap();
        let a = fit_pm(&design, &FitPmOptions::new(5.0)).unwrap();
        let b = fit_pm(&design.mirrored(), &FitPmOptions::new(5.0)).unwrap();
        assert_eq!(a.players, b.players);

        // the same on data: swap sides and scores of neutral segments
        let swapped: Vec<SegmentRecord> = segs
            .iter()
            .map(|s| SegmentRecord {
                home_players: s.away_players.clone(),
                away_players: s.home_players.clone(),
                home_goals_during: s.away_goals_during,
                away_goals_during: s.home_goals_during,
                home_red_at_start: s.away_red_at_start,
                away_red_at_start: s.home_red_at_start,
                ..s.clone()
            })
            .collect();
        let c = fit_pm(&build_design(&swapped, d("2020-06-01"), &PmOptions::default()).unwrap(), &FitPmOptions::new(5.0)).unwrap();
        assert_eq!(a.players, c.players);
    }

    #[test]
    fn huge_ridge_shrinks_to_zero() {
        let design = build_design(&[seg("1", 1, 0, 90, (0, 0), (1, 0))], d("2020-06-01"), &PmOptions::default()).unwrap();
        let mut prev = f64::INFINITY;
        for ridge in [1.0, 1e2, 1e4, 1e8] {
            let r = fit_pm(&design, &FitPmOptions::new(ridge)).unwrap();
            let m = r.players.values().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(m < prev);
            prev = m;
        }
        assert!(prev < 1e-7);
    }

    #[test]
    fn duplicated_half_weight_rows_leave_solution_unchanged() {
        let (_, segs) = league(2);
        let design = build_design(&segs[..200], d("2020-06-01"), &PmOptions::default()).unwrap();
        let mut dup = design.clone();
        dup.rows = design
            .rows
            .iter()
            .flat_map(|r| {
                let half = PmRow { weight: r.weight / 2.0, ..r.clone() };
                [half.clone(), half]
            })
            .collect();
        let opts = FitPmOptions { prior_passes: 0, ..FitPmOptions::new(2.0) };
        let a = fit_pm(&design, &opts).unwrap();
        let b = fit_pm(&dup, &opts).unwrap();
        for (x, y) in a.players.values().zip(b.players.values()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn conjugate_gradient_matches_dense() {
        let (_, segs) = league(3);
        let design = build_design(&segs[..300], d("2020-06-01"), &PmOptions::default()).unwrap();
        let dense = fit_pm(&design, &FitPmOptions { solver: PmSolver::Dense, ..FitPmOptions::new(1.0) }).unwrap();
        let cg = fit_pm(&design, &FitPmOptions { solver: PmSolver::ConjugateGradient, ..FitPmOptions::new(1.0) }).unwrap();
        for (x, y) in dense.players.values().zip(cg.players.values()) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }

    fn ratings_from(values: &[(&str, f64)]) -> PMRatings {
        PMRatings {
            players: values.iter().map(|(p, r)| (PlayerId::new(p), *r)).collect(),
            home: BTreeMap::new(),
            red: vec![],
            priors: BTreeMap::new(),
            ridge: 1.0,
            as_of: d("2020-01-01"),
        }
    }

    #[test]
    fn squad_feature_definitions() {
        let names: Vec<String> = (0..14).map(|k| format!("S{k}")).collect();
        let flat: Vec<(&str, f64)> = names.iter().map(|n| (n.as_str(), 0.2)).collect();
        let squad: BTreeSet<PlayerId> = names.iter().map(|n| PlayerId::new(n)).collect();
        let f = squad_features(&ratings_from(&flat), &squad, &[]).unwrap();
        for v in [f.mean_pm, f.median_pm, f.top11_pm] {
            assert_relative_eq!(v, 0.2, epsilon = 1e-12);
        }
        assert_eq!(f.missing_players, 0);

        let mut graded: Vec<(&str, f64)> = names.iter().enumerate().map(|(k, n)| (n.as_str(), k as f64 / 10.0)).collect();
        graded.push(("OUT1", 0.35));
        graded.push(("OUT2", 0.25));
        let r = ratings_from(&graded);
        let f = squad_features(&r, &squad, &[]).unwrap();
        assert!(f.top11_pm > f.mean_pm);
        // 11th best of 0.0..1.3 is 0.3
        let f = squad_features(&r, &squad, &[PlayerId::new("OUT1"), PlayerId::new("OUT2"), PlayerId::new("S0")]).unwrap();
        assert_eq!(f.missing_players, 1);
        assert_relative_eq!(f.median_pm, 0.65, epsilon = 1e-12);

        let small: BTreeSet<PlayerId> = names[..10].iter().map(|n| PlayerId::new(n)).collect();
        assert!(squad_features(&r, &small, &[]).is_err());
    }

    #[test]
    fn unrated_players_get_squad_mean_and_are_flagged() {
        let names: Vec<String> = (0..12).map(|k| format!("S{k}")).collect();
        let rated: Vec<(&str, f64)> = names[..11].iter().map(|n| (n.as_str(), 0.1)).collect();
        let squad: BTreeSet<PlayerId> = names.iter().map(|n| PlayerId::new(n)).collect();
        let f = squad_features(&ratings_from(&rated), &squad, &[]).unwrap();
        assert_eq!(f.unrated, vec![PlayerId::new("S11")]);
        assert_relative_eq!(f.mean_pm, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn recent_pool_uses_two_year_window() {
        let e = |p: &str, date: &str| PoolEntry { team: TeamId::new("POR"), player: PlayerId::new(p), last_appearance: d(date) };
        let pool = [e("A", "2019-01-01"), e("B", "2017-06-01"), e("C", "2020-07-01")];
        assert_eq!(recent_pool(&pool, &TeamId::new("POR"), d("2020-06-01")), vec![PlayerId::new("A")]);
    }

    #[test]
    fn squads_csv_round_trip() {
        let mut m = BTreeMap::new();
        m.insert(
            TeamId::new("POR"),
            SquadFeatures { mean_pm: 0.133, median_pm: 0.1, top11_pm: 0.2, missing_players: 2, unrated: vec![PlayerId::new("X")] },
        );
        assert_eq!(parse_squads_features("s", &squads_csv(&m)).unwrap(), m);
    }
}
