//! Bookmaker consensus probabilities and Bradley–Terry log-abilities.
//!
//! Each bookmaker's quoted odds are modelled as `quoted = odds·δ + 1` with a
//! single payout share δ; after solving for δ, implied winning probabilities
//! are averaged on the logit scale across bookmakers. Abilities are then found
//! by adjusting Bradley–Terry strengths until simulated championship
//! frequencies reproduce those probabilities.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::ids::TeamId;
use crate::ingest::{OddsTable, TournamentSpec};
use crate::rng::SimRng;
use crate::scalar::Scalar;
use crate::simulator::{run_with_kernel, MatchKernel, RunOptions, Standing};

/// Implied-probability sum minus one at payout share `delta`.
fn delta_objective(quotes: &[f64], delta: f64) -> f64 {
    quotes.iter().map(|q| 1.0 / ((q - 1.0) / delta + 1.0)).sum::<f64>() - 1.0
}

/// Payout share δ ∈ (0, 1] of one bookmaker, by bisection.
pub fn solve_delta(quotes: &[f64]) -> Result<f64> {
    solve_delta_for("", quotes)
}

fn solve_delta_for(bookmaker: &str, quotes: &[f64]) -> Result<f64> {
    if quotes.len() < 2 {
        return Err(Error::Invalid(format!("bookmaker `{bookmaker}` quotes fewer than two teams")));
    }
    if let Some(q) = quotes.iter().find(|q| !(**q > 1.0) || !q.is_finite()) {
        return Err(Error::Invalid(format!("bookmaker `{bookmaker}` quotes odds {q}; need > 1")));
    }
    let at_one = delta_objective(quotes, 1.0);
    if at_one.abs() < 1e-12 {
        return Ok(1.0);
    }
    if at_one < 0.0 {
        return Err(Error::FairBook { bookmaker: bookmaker.to_string(), sum_at_one: at_one + 1.0 });
    }
    let (mut lo, mut hi) = (1e-9, 1.0);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let f = delta_objective(quotes, mid);
        if f.abs() < 1e-12 || hi - lo < 1e-16 {
            break;
        }
        if f > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(mid)
}

/// Winning probabilities `1/(odds + 1)` with `odds = (quoted − 1)/δ`.
pub fn implied_probs(quotes: &[f64], delta: f64) -> Vec<f64> {
    quotes.iter().map(|q| 1.0 / ((q - 1.0) / delta + 1.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BookmakerMargin {
    pub bookmaker: String,
    pub delta: f64,
    pub overround: f64,
}

/// Payout share and overround of every bookmaker in the table.
pub fn margins(table: &OddsTable) -> Result<Vec<BookmakerMargin>> {
    table
        .bookmakers
        .iter()
        .map(|(name, quotes)| {
            let delta = solve_delta_for(name, quotes)?;
            Ok(BookmakerMargin { bookmaker: name.clone(), delta, overround: 1.0 - delta })
        })
        .collect()
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn inv_logit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Consensus winning probability per team (in `table.teams` order): mean logit
/// over bookmakers, back-transformed and renormalized to sum to one.
pub fn consensus_probs(table: &OddsTable) -> Result<Vec<f64>> {
    if table.bookmakers.is_empty() {
        return Err(Error::Invalid("odds table has no bookmakers".into()));
    }
    let n = table.teams.len();
    let mut mean_logit = vec![0.0; n];
    for (name, quotes) in &table.bookmakers {
        if quotes.len() != n {
            return Err(Error::Invalid(format!("bookmaker `{name}` quotes {} of {n} teams", quotes.len())));
        }
        let delta = solve_delta_for(name, quotes)?;
        for (m, p) in mean_logit.iter_mut().zip(implied_probs(quotes, delta)) {
            *m += logit(p);
        }
    }
    let b = table.bookmakers.len() as f64;
    let raw: Vec<f64> = mean_logit.iter().map(|m| inv_logit(m / b)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|p| p / total).collect())
}

/// Probability that a team of ability `a` beats one of ability `b`.
///
/// The favourite's side is computed as one minus the underdog's, which makes
/// `bt_win_prob(a, b) + bt_win_prob(b, a)` exactly one in floating point.
pub fn bt_win_prob<T: Scalar>(a: T, b: T) -> T {
    if a <= b {
        a / (a + b)
    } else {
        T::one() - b / (a + b)
    }
}

/// Win/lose-only kernel: every match is a Bradley–Terry draw, group tables
/// count wins, and ties go to extra fictitious matches among the tied teams.
pub struct BtKernel {
    abilities: Vec<f64>,
}

impl BtKernel {
    pub fn new(abilities: Vec<f64>) -> Result<Self> {
        if let Some(a) = abilities.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::Invalid(format!("abilities must be positive, got {a}")));
        }
        Ok(BtKernel { abilities })
    }

    fn beats(&self, a: usize, b: usize, rng: &mut SimRng) -> bool {
        rng.random::<f64>() < bt_win_prob(self.abilities[a], self.abilities[b])
    }

    /// Orders `block` (teams level on wins) by repeated fictitious round robins.
    fn break_ties(&self, block: &mut [usize], rng: &mut SimRng) {
        if block.len() < 2 {
            return;
        }
        let mut wins: BTreeMap<usize, u32> = block.iter().map(|&t| (t, 0)).collect();
        for i in 0..block.len() {
            for j in i + 1..block.len() {
                let w = if self.beats(block[i], block[j], rng) { block[i] } else { block[j] };
                *wins.get_mut(&w).expect("block member") += 1;
            }
        }
        self.order_by_wins(block, &wins, rng);
    }

    fn order_by_wins(&self, block: &mut [usize], wins: &BTreeMap<usize, u32>, rng: &mut SimRng) {
        block.sort_by(|a, b| wins[b].cmp(&wins[a]));
        let mut s = 0;
        while s < block.len() {
            let mut e = s + 1;
            while e < block.len() && wins[&block[e]] == wins[&block[s]] {
                e += 1;
            }
            if e - s > 1 {
                self.break_ties(&mut block[s..e], rng);
            }
            s = e;
        }
    }
}

impl MatchKernel for BtKernel {
    fn play_group(&self, members: &[usize], fixtures: &[(usize, usize)], rng: &mut SimRng) -> Vec<(usize, Standing)> {
        let mut wins: BTreeMap<usize, u32> = members.iter().map(|&t| (t, 0)).collect();
        for &(a, b) in fixtures {
            let w = if self.beats(a, b, rng) { a } else { b };
            *wins.get_mut(&w).expect("group member") += 1;
        }
        let mut order = members.to_vec();
        self.order_by_wins(&mut order, &wins, rng);
        order
            .into_iter()
            .map(|t| (t, Standing { points: i64::from(wins[&t]), ..Standing::default() }))
            .collect()
    }

    fn rank_thirds(&self, thirds: &[(usize, Standing)], rng: &mut SimRng) -> Vec<usize> {
        // rank positions, using team indices for the fictitious matches
        let wins: BTreeMap<usize, u32> = thirds.iter().map(|(t, s)| (*t, s.points as u32)).collect();
        let mut teams: Vec<usize> = thirds.iter().map(|(t, _)| *t).collect();
        self.order_by_wins(&mut teams, &wins, rng);
        teams
            .iter()
            .map(|t| thirds.iter().position(|(x, _)| x == t).expect("third"))
            .collect()
    }

    fn knockout(&self, a: usize, b: usize, rng: &mut SimRng) -> bool {
        self.beats(a, b, rng)
    }
}

/// Championship counts under Bradley–Terry abilities (in `spec.teams()` order).
pub fn simulate_tournament_bt_counts(
    abilities: &[f64],
    spec: &TournamentSpec,
    n_runs: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<Vec<u64>> {
    let teams = spec.teams();
    if abilities.len() != teams.len() {
        return Err(Error::Invalid(format!("{} abilities for {} teams", abilities.len(), teams.len())));
    }
    let kernel = BtKernel::new(abilities.to_vec())?;
    let sp = run_with_kernel(spec, &kernel, &RunOptions { n_runs, seed, threads })?;
    Ok(sp.counts.iter().map(|row| row[4].expect("champion column")).collect())
}

/// Championship frequencies under Bradley–Terry abilities.
pub fn simulate_tournament_bt(abilities: &[f64], spec: &TournamentSpec, n_runs: u64, seed: u64) -> Result<Vec<f64>> {
    let counts = simulate_tournament_bt_counts(abilities, spec, n_runs, seed, None)?;
    Ok(counts.iter().map(|&c| c as f64 / n_runs as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferOptions {
    /// Runs per simulation at the final precision level.
    pub n_runs: u64,
    /// Target max-norm gap between simulated and target probabilities.
    pub tolerance: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Initial step on the log scale.
    pub eta: f64,
    pub threads: Option<usize>,
}

impl InferOptions {
    pub fn new(n_runs: u64, seed: u64) -> Self {
        InferOptions { n_runs, tolerance: 2e-3, max_iter: 200, seed, eta: 0.5, threads: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferStep {
    pub iteration: usize,
    pub n_runs: u64,
    pub residual: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferResult {
    /// Mean-zero log-abilities in `spec.teams()` order.
    pub log_abilities: Vec<f64>,
    /// Simulated championship probabilities at `log_abilities`.
    pub simulated: Vec<f64>,
    pub residual: f64,
    pub converged: bool,
    pub trace: Vec<InferStep>,
}

fn centered(mut s: Vec<f64>) -> Vec<f64> {
    let m = s.iter().sum::<f64>() / s.len() as f64;
    s.iter_mut().for_each(|x| *x -= m);
    s
}

/// Finds log-abilities whose simulated championship probabilities match `target`.
///
/// Iterates `s ← s + η (log p_target − log p_sim)` with common random numbers
/// within a precision level. Runs start at a sixteenth of `n_runs` and grow
/// fourfold once the residual reaches the Monte Carlo noise of the level; η
/// halves whenever the residual grows. Without convergence the best final-level
/// iterate is returned with `converged = false`.
pub fn infer_abilities(target: &[f64], spec: &TournamentSpec, opts: &InferOptions) -> Result<InferResult> {
    let n = spec.teams().len();
    if target.len() != n {
        return Err(Error::Invalid(format!("{} targets for {n} teams", target.len())));
    }
    if target.iter().any(|p| !(*p > 0.0)) || (target.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(Error::Invalid("targets must be positive and sum to one".into()));
    }
    if opts.n_runs == 0 || !(opts.tolerance > 0.0) || !(opts.eta > 0.0) {
        return Err(Error::Invalid("need positive runs, tolerance and step".into()));
    }
    let mut levels = vec![opts.n_runs];
    while levels.len() < 3 && levels[levels.len() - 1] / 4 >= 2000 {
        levels.push(levels[levels.len() - 1] / 4);
    }
    levels.reverse();

    let log_t: Vec<f64> = target.iter().map(|p| p.ln()).collect();
    let mut s = centered(log_t.clone());
    let mut trace = Vec::new();
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut level = 0;
    let mut at_level = 0;
    let mut eta = opts.eta;
    let mut prev = f64::INFINITY;
    for iteration in 0..opts.max_iter {
        let runs = levels[level];
        let abilities: Vec<f64> = s.iter().map(|x| x.exp()).collect();
        let counts = simulate_tournament_bt_counts(&abilities, spec, runs, opts.seed, opts.threads)?;
        let p: Vec<f64> = counts.iter().map(|&c| c as f64 / runs as f64).collect();
        let residual = p.iter().zip(target).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        trace.push(InferStep { iteration, n_runs: runs, residual, eta });
        let final_level = level + 1 == levels.len();
        if final_level {
            if best.as_ref().is_none_or(|b| residual < b.0) {
                best = Some((residual, s.clone(), p.clone()));
            }
            if residual < opts.tolerance {
                return Ok(InferResult { log_abilities: s, simulated: p, residual, converged: true, trace });
            }
        } else {
            let noise = target
                .iter()
                .fold(0.0f64, |m, q| m.max((q * (1.0 - q) / runs as f64).sqrt()));
            at_level += 1;
            if residual < opts.tolerance.max(2.0 * noise) || at_level >= 12 {
                level += 1;
                at_level = 0;
                prev = f64::INFINITY;
                continue;
            }
        }
        if residual > prev {
            eta = (eta * 0.5).max(0.05);
        }
        prev = residual;
        let floor = 0.5 / runs as f64;
        let step: Vec<f64> = s
            .iter()
            .zip(&log_t)
            .zip(&p)
            .map(|((si, lt), pi)| si + eta * (lt - pi.max(floor).ln()))
            .collect();
        s = centered(step);
    }
    let (residual, s, p) = match best {
        Some(b) => b,
        None => {
            let abilities: Vec<f64> = s.iter().map(|x| x.exp()).collect();
            let p = simulate_tournament_bt(&abilities, spec, opts.n_runs, opts.seed)?;
            let r = p.iter().zip(target).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            (r, s, p)
        }
    };
    Ok(InferResult { log_abilities: s, simulated: p, residual, converged: false, trace })
}

/// Everything the consensus stage produces for one tournament.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusResult {
    pub teams: Vec<TeamId>,
    pub margins: Vec<BookmakerMargin>,
    pub probs: Vec<f64>,
    pub inference: InferResult,
}

impl ConsensusResult {
    /// `team,consensus_prob,log_ability`.
    pub fn consensus_csv(&self) -> String {
        let mut s = String::from("team,consensus_prob,log_ability\n");
        for ((t, p), a) in self.teams.iter().zip(&self.probs).zip(&self.inference.log_abilities) {
            let _ = writeln!(s, "{t},{p:.6},{a:.6}");
        }
        s
    }

    /// `bookmaker,delta,overround`.
    pub fn overrounds_csv(&self) -> String {
        let mut s = String::from("bookmaker,delta,overround\n");
        for m in &self.margins {
            let _ = writeln!(s, "{},{:.6},{:.6}", crate::ingest::csv_field(&m.bookmaker), m.delta, m.overround);
        }
        s
    }

    pub fn log_ability(&self, team: &TeamId) -> Option<f64> {
        let k = self.teams.iter().position(|t| t == team)?;
        Some(self.inference.log_abilities[k])
    }
}

/// Consensus probabilities and log-abilities for the teams of `spec`.
pub fn run_consensus(table: &OddsTable, spec: &TournamentSpec, opts: &InferOptions) -> Result<ConsensusResult> {
    let teams = spec.teams();
    let probs_by_table = consensus_probs(table)?;
    let mut probs = Vec::with_capacity(teams.len());
    for t in &teams {
        let k = table
            .teams
            .iter()
            .position(|x| x == t)
            .ok_or_else(|| Error::Invalid(format!("odds table does not quote `{t}`")))?;
        probs.push(probs_by_table[k]);
    }
    if table.teams.len() != teams.len() {
        return Err(Error::Invalid(format!(
            "odds table quotes {} teams, tournament has {}",
            table.teams.len(),
            teams.len()
        )));
    }
    let inference = infer_abilities(&probs, spec, opts)?;
    Ok(ConsensusResult { teams, margins: margins(table)?, probs, inference })
}

/// Reads `team,consensus_prob,log_ability` back into per-team log-abilities.
pub fn parse_log_abilities(file: &str, text: &str) -> Result<BTreeMap<TeamId, f64>> {
    let (_, table) = crate::ingest::read_table(file, text, &[&["team", "consensus_prob", "log_ability"]])?;
    let mut out = BTreeMap::new();
    for (row, f) in table.rows {
        out.insert(TeamId::new(&f[0]), crate::ingest::parse_real(file, row, "log_ability", &f[2])?);
    }
    Ok(out)
}
