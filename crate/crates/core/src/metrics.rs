//! Outcome probabilities from goal intensities, scoring rules and the
//! leave-one-tournament-out evaluation harness.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use num_traits::Num;

use crate::error::{Error, Result};
use crate::ingest::TournamentMatch;
use crate::scalar::Scalar;

/// Goal-difference truncation for outcome tail sums.
pub const MAX_GOAL_DIFF: i32 = 40;

/// Ordinal match outcome from the first team's perspective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    Win = 1,
    Draw = 2,
    Loss = 3,
}

impl Outcome {
    pub fn from_goals(g1: u32, g2: u32) -> Self {
        match g1.cmp(&g2) {
            std::cmp::Ordering::Greater => Outcome::Win,
            std::cmp::Ordering::Equal => Outcome::Draw,
            std::cmp::Ordering::Less => Outcome::Loss,
        }
    }

    /// Zero-based position in `[win, draw, loss]`.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_index(i: usize) -> Option<Self> {
        [Outcome::Win, Outcome::Draw, Outcome::Loss].get(i).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeProbs<T> {
    pub p_win: T,
    pub p_draw: T,
    pub p_loss: T,
}

impl<T: Copy> OutcomeProbs<T> {
    pub fn new(p_win: T, p_draw: T, p_loss: T) -> Self {
        OutcomeProbs { p_win, p_draw, p_loss }
    }

    pub fn as_array(&self) -> [T; 3] {
        [self.p_win, self.p_draw, self.p_loss]
    }

    pub fn get(&self, outcome: Outcome) -> T {
        self.as_array()[outcome.index()]
    }

    /// The same match seen from the other side.
    pub fn mirrored(&self) -> Self {
        OutcomeProbs::new(self.p_loss, self.p_draw, self.p_win)
    }
}

/// Skellam pmf `P(X1 − X2 = k)` for independent Poisson `X1 ~ λ1`, `X2 ~ λ2`.
///
/// The Bessel series is summed in log space; a zero intensity gives the
/// one-sided Poisson limit.
pub fn skellam_pmf<T: Scalar>(k: i32, l1: T, l2: T) -> T {
    let zero = T::zero();
    if l1 <= zero || l2 <= zero {
        // at most one side can score
        let (l, n) = if l1 > zero {
            (l1, k)
        } else if l2 > zero {
            (l2, -k)
        } else {
            return if k == 0 { T::one() } else { zero };
        };
        if n < 0 {
            return zero;
        }
        let n = n as u32;
        let log = T::from_count(n) * l.ln() - l - crate::scalar::ln_factorial::<T>(n);
        return log.exp();
    }
    // orient so the series runs over the larger count's shift
    let (a, b, n) = if k >= 0 { (l1, l2, k as u32) } else { (l2, l1, k.unsigned_abs()) };
    let (la, lb) = (a.ln(), b.ln());
    // term_m = a^(m+n) b^m / (m! (m+n)!)
    let mut log_term = T::from_count(n) * la - crate::scalar::ln_factorial::<T>(n);
    let mut max = log_term;
    let mut logs = vec![log_term];
    let peak = (a * b).sqrt().to_f64().unwrap_or(0.0);
    let cutoff = T::lit(45.0);
    let mut m = 0u32;
    loop {
        m += 1;
        log_term = log_term + la + lb - T::from_count(m).ln() - T::from_count(m + n).ln();
        logs.push(log_term);
        if log_term > max {
            max = log_term;
        }
        if f64::from(m) > peak && log_term < max - cutoff {
            break;
        }
        if m > 10_000 {
            break;
        }
    }
    (crate::scalar::log_sum_exp(&logs) - (l1 + l2)).exp()
}

/// `(P(K>0), P(K=0), P(K<0))` for the goal difference `K`, tails truncated at
/// `|k| ≤ MAX_GOAL_DIFF`.
pub fn outcome_probs<T: Scalar>(l1: T, l2: T) -> OutcomeProbs<T> {
    let mut win = T::zero();
    let mut loss = T::zero();
    for k in 1..=MAX_GOAL_DIFF {
        win = win + skellam_pmf(k, l1, l2);
        loss = loss + skellam_pmf(-k, l1, l2);
    }
    OutcomeProbs::new(win, skellam_pmf(0, l1, l2), loss)
}

/// Ranked probability score `½ Σ_{r=1}^{2} (Σ_{l≤r} (π_l − δ_{l,y}))²`.
///
/// Works over any numeric field, including exact rationals.
pub fn rps<T: Num + Copy>(probs: &OutcomeProbs<T>, outcome: Outcome) -> T {
    let p = probs.as_array();
    let two = T::one() + T::one();
    let mut cum = T::zero();
    let mut total = T::zero();
    for (r, &pr) in p.iter().enumerate().take(2) {
        let delta = if r == outcome.index() { T::one() } else { T::zero() };
        cum = cum + pr - delta;
        total = total + cum * cum;
    }
    total / two
}

/// Probability assigned to the realized outcome.
pub fn multinomial_likelihood<T: Copy>(probs: &OutcomeProbs<T>, outcome: Outcome) -> T {
    probs.get(outcome)
}

/// Most probable outcome; ties go to the lower index (win, then draw, then loss).
pub fn predicted_outcome<T: PartialOrd + Copy>(probs: &OutcomeProbs<T>) -> Outcome {
    let p = probs.as_array();
    let mut best = 0;
    for r in 1..3 {
        if p[r] > p[best] {
            best = r;
        }
    }
    Outcome::from_index(best).expect("index below three")
}

pub fn is_correct<T: PartialOrd + Copy>(probs: &OutcomeProbs<T>, outcome: Outcome) -> bool {
    predicted_outcome(probs) == outcome
}

/// Margin-adjusted probabilities from three-way decimal odds, `π_r ∝ 1/odds_r`.
pub fn threeway_from_odds<T: Scalar>(odds: [T; 3]) -> Result<OutcomeProbs<T>> {
    if odds.iter().any(|o| !(*o > T::one())) {
        return Err(Error::Invalid(format!("three-way odds must exceed 1, got {odds:?}")));
    }
    let inv = odds.map(|o| T::one() / o);
    let c = inv[0] + inv[1] + inv[2];
    Ok(OutcomeProbs::new(inv[0] / c, inv[1] / c, inv[2] / c))
}

/// Mean of `|y − ŷ|` over all team-goal observations.
pub fn mae_goals(pred: &[f64], actual: &[u32]) -> Result<f64> {
    if pred.len() != actual.len() || pred.is_empty() {
        return Err(Error::Invalid(format!(
            "need matching nonempty slices, got {} predictions and {} results",
            pred.len(),
            actual.len()
        )));
    }
    Ok(pred.iter().zip(actual).map(|(p, &a)| (f64::from(a) - p).abs()).sum::<f64>() / pred.len() as f64)
}

/// Mean of `|(y1 − y2) − (ŷ1 − ŷ2)|` over matches.
pub fn mae_goal_diff(pred: &[(f64, f64)], actual: &[(u32, u32)]) -> Result<f64> {
    if pred.len() != actual.len() || pred.is_empty() {
        return Err(Error::Invalid(format!(
            "need matching nonempty slices, got {} predictions and {} results",
            pred.len(),
            actual.len()
        )));
    }
    let total: f64 = pred
        .iter()
        .zip(actual)
        .map(|(&(p1, p2), &(a1, a2))| ((f64::from(a1) - f64::from(a2)) - (p1 - p2)).abs())
        .sum();
    Ok(total / pred.len() as f64)
}

/// One tournament edition for the leave-one-out protocol.
#[derive(Debug, Clone)]
pub struct EditionData {
    pub edition: i32,
    pub start_date: NaiveDate,
    /// Regular-time results of every match in the edition.
    pub matches: Vec<TournamentMatch>,
    /// Dates of the inputs behind this edition's features (rating as-of date,
    /// odds snapshot, segment window end), labelled for error messages.
    pub artifacts: Vec<(String, NaiveDate)>,
}

/// Per-match forecast: outcome probabilities and, where available, expected goals.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub probs: OutcomeProbs<f64>,
    pub goals: Option<(f64, f64)>,
}

impl Forecast {
    pub fn from_intensities(l1: f64, l2: f64) -> Self {
        Forecast { probs: outcome_probs(l1, l2), goals: Some((l1, l2)) }
    }
}

/// Trains on the given editions and forecasts every match of the held-out one.
pub type Fitter<'a> =
    dyn Fn(&[&EditionData], &EditionData) -> Result<BTreeMap<String, Forecast>> + Sync + 'a;

/// A method scored by the harness. Fixed forecast sets are scored exactly like
/// fitted models.
pub enum Method<'a> {
    Fit { name: String, fitter: &'a Fitter<'a> },
    Fixed { name: String, forecasts: BTreeMap<String, Forecast> },
}

impl Method<'_> {
    pub fn name(&self) -> &str {
        match self {
            Method::Fit { name, .. } | Method::Fixed { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub n_matches: usize,
    pub likelihood: f64,
    pub classification_rate: f64,
    pub rps: f64,
    /// Absent when the method gives probabilities only.
    pub mae_goals: Option<f64>,
    pub mae_goal_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    pub name: String,
    pub overall: Scores,
    pub folds: Vec<(i32, Scores)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub methods: Vec<MethodReport>,
}

impl EvaluationReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }

    /// `method,fold,n_matches,likelihood,classification_rate,rps,mae_goals,mae_goal_diff`;
    /// the pooled row has fold `all`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "method,fold,n_matches,likelihood,classification_rate,rps,mae_goals,mae_goal_diff\n",
        );
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut row = |name: &str, fold: &str, sc: &Scores| {
            s.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{},{}\n",
                crate::ingest::csv_field(name),
                fold,
                sc.n_matches,
                sc.likelihood,
                sc.classification_rate,
                sc.rps,
                opt(sc.mae_goals),
                opt(sc.mae_goal_diff)
            ));
        };
        for m in &self.methods {
            row(&m.name, "all", &m.overall);
            for (ed, sc) in &m.folds {
                row(&m.name, &ed.to_string(), sc);
            }
        }
        s
    }
}

/// Scores forecasts against realized results.
pub fn score(pairs: &[(&TournamentMatch, &Forecast)]) -> Result<Scores> {
    if pairs.is_empty() {
        return Err(Error::Invalid("no matches to score".into()));
    }
    let n = pairs.len() as f64;
    let (mut lik, mut hits, mut r) = (0.0, 0.0, 0.0);
    let mut goal_pred = Vec::new();
    let mut goal_act = Vec::new();
    let mut diff_pred = Vec::new();
    let mut diff_act = Vec::new();
    let mut all_goals = true;
    for (m, f) in pairs {
        let y = Outcome::from_goals(m.home_goals, m.away_goals);
        lik += multinomial_likelihood(&f.probs, y);
        hits += f64::from(u8::from(is_correct(&f.probs, y)));
        r += rps(&f.probs, y);
        match f.goals {
            Some((g1, g2)) => {
                goal_pred.extend([g1, g2]);
                goal_act.extend([m.home_goals, m.away_goals]);
                diff_pred.push((g1, g2));
                diff_act.push((m.home_goals, m.away_goals));
            }
            None => all_goals = false,
        }
    }
    let (mae_goals, mae_goal_diff) = if all_goals {
        (Some(mae_goals(&goal_pred, &goal_act)?), Some(mae_goal_diff(&diff_pred, &diff_act)?))
    } else {
        (None, None)
    };
    Ok(Scores {
        n_matches: pairs.len(),
        likelihood: lik / n,
        classification_rate: hits / n,
        rps: r / n,
        mae_goals,
        mae_goal_diff,
    })
}

/// Checks that every input behind `edition`'s features predates its start.
pub fn check_leakage(edition: &EditionData) -> Result<()> {
    for (label, date) in &edition.artifacts {
        if *date > edition.start_date {
            return Err(Error::Leakage(format!(
                "{label} for edition {} is dated {date}, after the tournament start {}",
                edition.edition, edition.start_date
            )));
        }
    }
    Ok(())
}

/// Leave-one-tournament-out evaluation: each edition is held out once, the
/// fitters see only the others, and every match is scored exactly once per
/// method.
pub fn loto_evaluate(editions: &[EditionData], methods: &[Method<'_>]) -> Result<EvaluationReport> {
    if editions.len() < 2 {
        return Err(Error::Invalid(format!("need at least two editions, got {}", editions.len())));
    }
    let years: BTreeSet<i32> = editions.iter().map(|e| e.edition).collect();
    if years.len() != editions.len() {
        return Err(Error::Invalid("duplicate edition".into()));
    }
    let mut ids = BTreeSet::new();
    for e in editions {
        check_leakage(e)?;
        for m in &e.matches {
            if !ids.insert(m.match_id.clone()) {
                return Err(Error::Invalid(format!("match id `{}` appears twice", m.match_id)));
            }
        }
    }

    let mut reports = Vec::new();
    for method in methods {
        let mut all_pairs: Vec<(TournamentMatch, Forecast)> = Vec::new();
        let mut folds = Vec::new();
        for (k, test) in editions.iter().enumerate() {
            let train: Vec<&EditionData> =
                editions.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, e)| e).collect();
            let fitted;
            let forecasts = match method {
                Method::Fit { fitter, .. } => {
                    fitted = fitter(&train, test)?;
                    &fitted
                }
                Method::Fixed { forecasts, .. } => forecasts,
            };
            let mut pairs = Vec::with_capacity(test.matches.len());
            for m in &test.matches {
                let f = forecasts.get(&m.match_id).ok_or_else(|| {
                    Error::Invalid(format!("method `{}` has no forecast for match `{}`", method.name(), m.match_id))
                })?;
                pairs.push((m, f));
            }
            folds.push((test.edition, score(&pairs)?));
            all_pairs.extend(pairs.into_iter().map(|(m, f)| (m.clone(), f.clone())));
        }
        let refs: Vec<(&TournamentMatch, &Forecast)> = all_pairs.iter().map(|(m, f)| (m, f)).collect();
        reports.push(MethodReport { name: method.name().to_string(), overall: score(&refs)?, folds });
    }
    Ok(EvaluationReport { methods: reports })
}
