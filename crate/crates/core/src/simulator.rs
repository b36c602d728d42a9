//! Monte Carlo tournament simulation.
//!
//! A [`MatchKernel`] decides single matches and orders group tables; the
//! bracket engine is shared, so the Poisson score model and the win/lose
//! Bradley–Terry model run through identical qualification and knockout code.
//! Replicate `r` always draws from stream `r` of the seed, and per-replicate
//! counts are summed as integers, so results do not depend on thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ids::TeamId;
use crate::ingest::{Slot, Stage, TournamentSpec};
use crate::rng::{replicate_rng, SimRng};

pub const DEFAULT_RUNS: u64 = 100_000;
pub const DEFAULT_EXTRA_TIME_FACTOR: f64 = 1.0 / 3.0;

/// Stage columns in output order; index `k` holds teams still alive when
/// `16 >> k` remain.
pub const STAGE_COLUMNS: [&str; 5] = ["r16", "qf", "sf", "final", "champion"];

/// Poisson draw: inversion below λ = 10, the library sampler above.
pub fn poisson_draw(lambda: f64, rng: &mut SimRng) -> u32 {
    if !(lambda > 0.0) {
        return 0;
    }
    if lambda < 10.0 {
        let u: f64 = rng.random();
        let mut p = (-lambda).exp();
        let mut cdf = p;
        let mut k = 0u32;
        while u > cdf && k < 1000 {
            k += 1;
            p *= lambda / f64::from(k);
            cdf += p;
        }
        k
    } else {
        Poisson::new(lambda).expect("positive finite intensity").sample(rng) as u32
    }
}

/// Independent Poisson scores for one match.
pub fn simulate_match(l1: f64, l2: f64, rng: &mut SimRng) -> (u32, u32) {
    (poisson_draw(l1, rng), poisson_draw(l2, rng))
}

/// Knockout decision: regular time, then extra time at `factor` of the
/// intensities, then a fair coin. Returns true when the first team advances.
pub fn simulate_knockout_match(l1: f64, l2: f64, factor: f64, rng: &mut SimRng) -> bool {
    let (a, b) = simulate_match(l1, l2, rng);
    if a != b {
        return a > b;
    }
    let (a, b) = simulate_match(l1 * factor, l2 * factor, rng);
    if a != b {
        return a > b;
    }
    rng.random_bool(0.5)
}

/// Group-table criteria for one team.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Standing {
    pub points: i64,
    pub goal_diff: i64,
    pub goals_for: i64,
}

impl Standing {
    fn key(&self) -> (i64, i64, i64) {
        (self.points, self.goal_diff, self.goals_for)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiebreakOrder {
    /// Points, goal difference, goals scored; then a head-to-head table over
    /// the teams still level; then lot.
    #[default]
    OverallFirst,
    /// Points; then head-to-head points, goal difference and goals; then
    /// overall goal difference and goals; then lot.
    HeadToHeadFirst,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupResult {
    pub home: TeamId,
    pub away: TeamId,
    pub home_goals: u32,
    pub away_goals: u32,
}

/// Score line among group members, by local index.
type Score = (usize, usize, u32, u32);

fn tally(members: &[usize], results: &[Score]) -> BTreeMap<usize, Standing> {
    let mut st: BTreeMap<usize, Standing> = members.iter().map(|&t| (t, Standing::default())).collect();
    for &(a, b, ga, gb) in results {
        if !(st.contains_key(&a) && st.contains_key(&b)) {
            continue;
        }
        let (ga, gb) = (i64::from(ga), i64::from(gb));
        let (pa, pb) = match ga.cmp(&gb) {
            std::cmp::Ordering::Greater => (3, 0),
            std::cmp::Ordering::Equal => (1, 1),
            std::cmp::Ordering::Less => (0, 3),
        };
        for (t, p, f, against) in [(a, pa, ga, gb), (b, pb, gb, ga)] {
            let s = st.get_mut(&t).expect("member");
            s.points += p;
            s.goal_diff += f - against;
            s.goals_for += f;
        }
    }
    st
}

/// Sorts `block` by descending key (stable), then splits it into runs of equal keys.
fn sort_split<K: Ord + Copy>(block: &mut [usize], key: impl Fn(usize) -> K) -> Vec<(usize, usize)> {
    block.sort_by_key(|&a| std::cmp::Reverse(key(a)));
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=block.len() {
        if i == block.len() || key(block[i]) != key(block[start]) {
            runs.push((start, i));
            start = i;
        }
    }
    runs
}

/// Orders a complete group. `members` are local indices; every pair must
/// appear exactly once in `results`.
fn rank_scores(members: &[usize], results: &[Score], order: TiebreakOrder, rng: &mut SimRng) -> Vec<(usize, Standing)> {
    let overall = tally(members, results);
    let mut ranked = members.to_vec();
    match order {
        TiebreakOrder::OverallFirst => {
            for (s, e) in sort_split(&mut ranked, |t| overall[&t].key()) {
                if e - s < 2 {
                    continue;
                }
                let block = &mut ranked[s..e];
                let h2h = tally(block, results);
                for (s2, e2) in sort_split(block, |t| h2h[&t].key()) {
                    block[s2..e2].shuffle(rng);
                }
            }
        }
        TiebreakOrder::HeadToHeadFirst => {
            for (s, e) in sort_split(&mut ranked, |t| overall[&t].points) {
                if e - s < 2 {
                    continue;
                }
                let block = &mut ranked[s..e];
                let h2h = tally(block, results);
                let key = |t: usize| {
                    let (h, o) = (h2h[&t], overall[&t]);
                    (h.points, h.goal_diff, h.goals_for, o.goal_diff, o.goals_for)
                };
                for (s2, e2) in sort_split(block, key) {
                    block[s2..e2].shuffle(rng);
                }
            }
        }
    }
    ranked.into_iter().map(|t| (t, overall[&t])).collect()
}

/// Final group table, best first, with each team's overall record.
pub fn group_table(
    teams: &[TeamId],
    results: &[GroupResult],
    order: TiebreakOrder,
    rng: &mut SimRng,
) -> Result<Vec<(TeamId, Standing)>> {
    let idx = |t: &TeamId| {
        teams
            .iter()
            .position(|x| x == t)
            .ok_or_else(|| Error::Invalid(format!("team `{t}` is not in this group")))
    };
    let mut seen = BTreeMap::new();
    let mut scores = Vec::with_capacity(results.len());
    for r in results {
        let (a, b) = (idx(&r.home)?, idx(&r.away)?);
        if a == b {
            return Err(Error::Invalid(format!("team `{}` plays itself", r.home)));
        }
        if seen.insert((a.min(b), a.max(b)), ()).is_some() {
            return Err(Error::Invalid(format!("{} v {} recorded twice", r.home, r.away)));
        }
        scores.push((a, b, r.home_goals, r.away_goals));
    }
    let n = teams.len();
    if seen.len() != n * (n - 1) / 2 {
        return Err(Error::Invalid(format!(
            "incomplete group results: {} of {} matches",
            seen.len(),
            n * (n - 1) / 2
        )));
    }
    let members: Vec<usize> = (0..n).collect();
    Ok(rank_scores(&members, &scores, order, rng)
        .into_iter()
        .map(|(t, s)| (teams[t].clone(), s))
        .collect())
}

/// Match model plugged into the bracket engine. Team arguments are indices
/// into [`TournamentSpec::teams`].
pub trait MatchKernel: Sync {
    /// Plays `fixtures` among `members` and returns the table, best first.
    fn play_group(&self, members: &[usize], fixtures: &[(usize, usize)], rng: &mut SimRng) -> Vec<(usize, Standing)>;

    /// Orders third-placed teams across groups; returns positions into `thirds`, best first.
    fn rank_thirds(&self, thirds: &[(usize, Standing)], rng: &mut SimRng) -> Vec<usize>;

    /// True when `a` beats `b` in a knockout tie.
    fn knockout(&self, a: usize, b: usize, rng: &mut SimRng) -> bool;
}

/// Ranks thirds by points, goal difference, goals scored, then lot.
fn rank_thirds_by_record(thirds: &[(usize, Standing)], rng: &mut SimRng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..thirds.len()).collect();
    for (s, e) in sort_split(&mut order, |k| thirds[k].1.key()) {
        order[s..e].shuffle(rng);
    }
    order
}

/// Goal intensities for a team facing an opponent at a given stage.
pub trait IntensitySource {
    fn intensities(&self, team: &TeamId, opponent: &TeamId, stage: Stage) -> Result<(f64, f64)>;
}

impl<F> IntensitySource for F
where
    F: Fn(&TeamId, &TeamId, Stage) -> Result<(f64, f64)>,
{
    fn intensities(&self, team: &TeamId, opponent: &TeamId, stage: Stage) -> Result<(f64, f64)> {
        self(team, opponent, stage)
    }
}

/// Tabulated intensities, as written by the `predict` step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairwiseIntensities {
    pub table: BTreeMap<(TeamId, TeamId, Stage), (f64, f64)>,
}

impl PairwiseIntensities {
    pub const HEADER: [&'static str; 5] = ["team", "opponent", "stage", "lambda_team", "lambda_opponent"];

    pub fn parse_str(file: &str, text: &str) -> Result<Self> {
        let (_, table) = crate::ingest::read_table(file, text, &[&Self::HEADER])?;
        let mut out = BTreeMap::new();
        for (row, f) in table.rows {
            let stage = Stage::parse(&f[2]).ok_or_else(|| Error::row(file, row, format!("unknown stage `{}`", f[2])))?;
            let l1 = crate::ingest::parse_real(file, row, "lambda_team", &f[3])?;
            let l2 = crate::ingest::parse_real(file, row, "lambda_opponent", &f[4])?;
            if !(l1 > 0.0 && l2 > 0.0) {
                return Err(Error::row(file, row, "intensities must be positive"));
            }
            if out.insert((TeamId::new(&f[0]), TeamId::new(&f[1]), stage), (l1, l2)).is_some() {
                return Err(Error::row(file, row, "duplicate team/opponent/stage row"));
            }
        }
        Ok(PairwiseIntensities { table: out })
    }

    pub fn to_csv(&self) -> String {
        let mut s = Self::HEADER.join(",");
        s.push('\n');
        for ((t, o, st), (l1, l2)) in &self.table {
            let _ = writeln!(s, "{t},{o},{st},{l1:.6},{l2:.6}");
        }
        s
    }
}

impl IntensitySource for PairwiseIntensities {
    fn intensities(&self, team: &TeamId, opponent: &TeamId, stage: Stage) -> Result<(f64, f64)> {
        if let Some(&v) = self.table.get(&(team.clone(), opponent.clone(), stage)) {
            return Ok(v);
        }
        if let Some(&(a, b)) = self.table.get(&(opponent.clone(), team.clone(), stage)) {
            return Ok((b, a));
        }
        Err(Error::Invalid(format!("no {stage} intensities for {team} v {opponent}")))
    }
}

/// Poisson-score kernel with intensities tabulated up front.
pub struct PoissonKernel {
    n: usize,
    group: Vec<Option<(f64, f64)>>,
    knockout: Vec<Option<(f64, f64)>>,
    extra_time_factor: f64,
    tiebreak: TiebreakOrder,
}

impl PoissonKernel {
    /// Queries `source` for every group fixture (home side first) and for
    /// every knockout pairing (lower team index first, mirrored for the other order).
    pub fn new(
        spec: &TournamentSpec,
        source: &dyn IntensitySource,
        extra_time_factor: f64,
        tiebreak: TiebreakOrder,
    ) -> Result<Self> {
        if !(extra_time_factor > 0.0 && extra_time_factor <= 1.0) {
            return Err(Error::Invalid(format!("extra-time factor must lie in (0, 1], got {extra_time_factor}")));
        }
        let teams = spec.teams();
        let n = teams.len();
        let check = |v: (f64, f64), a: &TeamId, b: &TeamId| {
            if v.0 > 0.0 && v.1 > 0.0 && v.0.is_finite() && v.1.is_finite() {
                Ok(v)
            } else {
                Err(Error::Invalid(format!("nonpositive intensity {v:?} for {a} v {b}")))
            }
        };
        let mut group = vec![None; n * n];
        for g in &spec.groups {
            for f in &g.fixtures {
                let (i, j) = (index_of(&teams, &f.home)?, index_of(&teams, &f.away)?);
                let v = check(source.intensities(&f.home, &f.away, Stage::Group)?, &f.home, &f.away)?;
                group[i * n + j] = Some(v);
            }
        }
        let mut knockout = vec![None; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = check(source.intensities(&teams[i], &teams[j], Stage::Knockout)?, &teams[i], &teams[j])?;
                knockout[i * n + j] = Some(v);
                knockout[j * n + i] = Some((v.1, v.0));
            }
        }
        Ok(PoissonKernel { n, group, knockout, extra_time_factor, tiebreak })
    }
}

impl MatchKernel for PoissonKernel {
    fn play_group(&self, members: &[usize], fixtures: &[(usize, usize)], rng: &mut SimRng) -> Vec<(usize, Standing)> {
        let scores: Vec<Score> = fixtures
            .iter()
            .map(|&(a, b)| {
                let (l1, l2) = self.group[a * self.n + b].expect("tabulated fixture");
                let (ga, gb) = simulate_match(l1, l2, rng);
                (a, b, ga, gb)
            })
            .collect();
        rank_scores(members, &scores, self.tiebreak, rng)
    }

    fn rank_thirds(&self, thirds: &[(usize, Standing)], rng: &mut SimRng) -> Vec<usize> {
        rank_thirds_by_record(thirds, rng)
    }

    fn knockout(&self, a: usize, b: usize, rng: &mut SimRng) -> bool {
        let (l1, l2) = self.knockout[a * self.n + b].expect("tabulated pairing");
        simulate_knockout_match(l1, l2, self.extra_time_factor, rng)
    }
}

fn index_of(teams: &[TeamId], t: &TeamId) -> Result<usize> {
    teams.iter().position(|x| x == t).ok_or_else(|| Error::UnknownTeam(t.to_string()))
}

#[derive(Debug, Clone, Copy)]
enum SlotRef {
    Position { group: usize, rank: usize },
    Third(usize),
    Team(usize),
}

/// Tournament structure resolved to team and group indices.
struct Plan {
    n_teams: usize,
    groups: Vec<(Vec<usize>, Vec<(usize, usize)>)>,
    group_names: Vec<String>,
    first_round: Vec<(SlotRef, SlotRef)>,
    best_thirds: usize,
    third_table: BTreeMap<String, Vec<usize>>,
}

impl Plan {
    fn new(spec: &TournamentSpec) -> Result<Self> {
        spec.validate()?;
        if spec.knockout.len() > 8 {
            return Err(Error::Spec(format!(
                "first knockout round has {} ties; at most a round of 16 is supported",
                spec.knockout.len()
            )));
        }
        let teams = spec.teams();
        let group_names: Vec<String> = spec.groups.iter().map(|g| g.name.clone()).collect();
        let gidx = |name: &str| {
            group_names
                .iter()
                .position(|g| g == name)
                .ok_or_else(|| Error::Spec(format!("unknown group `{name}`")))
        };
        let mut groups = Vec::new();
        for g in &spec.groups {
            let members = g.teams.iter().map(|t| index_of(&teams, t)).collect::<Result<Vec<_>>>()?;
            let fixtures = g
                .fixtures
                .iter()
                .map(|f| Ok((index_of(&teams, &f.home)?, index_of(&teams, &f.away)?)))
                .collect::<Result<Vec<_>>>()?;
            groups.push((members, fixtures));
        }
        let slot = |s: &Slot| -> Result<SlotRef> {
            Ok(match s {
                Slot::Position { group, rank } => SlotRef::Position { group: gidx(group)?, rank: *rank },
                Slot::Third(k) => SlotRef::Third(*k),
                Slot::Seed(t) => SlotRef::Team(index_of(&teams, t)?),
            })
        };
        let first_round = spec
            .knockout
            .iter()
            .map(|(a, b)| Ok((slot(a)?, slot(b)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut third_table = BTreeMap::new();
        for (k, row) in &spec.third_table {
            third_table.insert(k.clone(), row.iter().map(|g| gidx(g)).collect::<Result<Vec<_>>>()?);
        }
        Ok(Plan {
            n_teams: teams.len(),
            groups,
            group_names,
            first_round,
            best_thirds: spec.best_thirds,
            third_table,
        })
    }

    /// First-round pairings from group tables and the best-third ordering.
    fn seed(&self, tables: &[Vec<(usize, Standing)>], thirds_order: &[usize], thirds: &[(usize, Standing)], third_groups: &[usize]) -> Vec<(usize, usize)> {
        let mut third_slots = Vec::new();
        if self.best_thirds > 0 {
            let mut qualified: Vec<usize> = thirds_order[..self.best_thirds].iter().map(|&k| third_groups[k]).collect();
            qualified.sort_by(|&a, &b| self.group_names[a].cmp(&self.group_names[b]));
            let key: String = qualified.iter().map(|&g| self.group_names[g].as_str()).collect();
            let row = &self.third_table[&key];
            third_slots = row
                .iter()
                .map(|&g| {
                    let k = third_groups.iter().position(|&x| x == g).expect("group has a third");
                    thirds[k].0
                })
                .collect();
        }
        let resolve = |s: SlotRef| match s {
            SlotRef::Position { group, rank } => tables[group][rank - 1].0,
            SlotRef::Third(k) => third_slots[k - 1],
            SlotRef::Team(t) => t,
        };
        self.first_round.iter().map(|&(a, b)| (resolve(a), resolve(b))).collect()
    }

    /// Plays one replicate; returns the number of stages each team reached
    /// (0 = out before the knockout round, 1 = first knockout round, ...).
    fn replicate<K: MatchKernel + ?Sized>(&self, kernel: &K, rng: &mut SimRng) -> Vec<u8> {
        let tables: Vec<Vec<(usize, Standing)>> = self
            .groups
            .iter()
            .map(|(members, fixtures)| kernel.play_group(members, fixtures, rng))
            .collect();
        let (thirds, third_groups, order) = if self.best_thirds > 0 {
            let thirds: Vec<(usize, Standing)> = tables.iter().map(|t| t[2]).collect();
            let groups: Vec<usize> = (0..tables.len()).collect();
            let order = kernel.rank_thirds(&thirds, rng);
            (thirds, groups, order)
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        let mut round: Vec<usize> = self
            .seed(&tables, &order, &thirds, &third_groups)
            .into_iter()
            .flat_map(|(a, b)| [a, b])
            .collect();
        let mut reached = vec![0u8; self.n_teams];
        let mut stage = 1u8;
        loop {
            for &t in &round {
                reached[t] = stage;
            }
            if round.len() == 1 {
                return reached;
            }
            round = round
                .chunks(2)
                .map(|p| if kernel.knockout(p[0], p[1], rng) { p[0] } else { p[1] })
                .collect();
            stage += 1;
        }
    }

    /// Column of [`STAGE_COLUMNS`] for stage number `s` (1-based).
    fn column(&self, s: usize) -> usize {
        let first = 2 * self.first_round.len();
        // first-round size 16 → column 0, 8 → 1, ...
        (4 - first.trailing_zeros() as usize) + (s - 1)
    }
}

/// Per-team stage probabilities with Monte Carlo standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct StageProbabilities {
    pub teams: Vec<TeamId>,
    pub n_runs: u64,
    /// Per team, reach counts for each column of [`STAGE_COLUMNS`]; `None`
    /// for stages the format does not have.
    pub counts: Vec<[Option<u64>; 5]>,
}

impl StageProbabilities {
    pub fn prob(&self, team: usize, column: usize) -> Option<f64> {
        self.counts[team][column].map(|c| c as f64 / self.n_runs as f64)
    }

    pub fn se(&self, team: usize, column: usize) -> Option<f64> {
        self.prob(team, column).map(|p| (p * (1.0 - p) / self.n_runs as f64).sqrt())
    }

    pub fn champion(&self, team: &TeamId) -> Option<f64> {
        let k = self.teams.iter().position(|t| t == team)?;
        self.prob(k, 4)
    }

    /// `team,r16,qf,sf,final,champion,se_champion`; missing stages are blank.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("team,r16,qf,sf,final,champion,se_champion\n");
        for (k, t) in self.teams.iter().enumerate() {
            s.push_str(t.as_str());
            for c in 0..5 {
                s.push(',');
                if let Some(p) = self.prob(k, c) {
                    let _ = write!(s, "{p:.6}");
                }
            }
            let _ = writeln!(s, ",{:.6}", self.se(k, 4).unwrap_or(0.0));
        }
        s
    }
}

/// Replicate count, seed and worker count for the engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub n_runs: u64,
    pub seed: u64,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

const CHUNK: u64 = 512;

/// Runs the bracket engine with any kernel.
pub fn run_with_kernel<K: MatchKernel + ?Sized>(
    spec: &TournamentSpec,
    kernel: &K,
    opts: &RunOptions,
) -> Result<StageProbabilities> {
    if opts.n_runs == 0 {
        return Err(Error::Invalid("need at least one run".into()));
    }
    let plan = Plan::new(spec)?;
    let n = plan.n_teams;
    let rounds = spec.knockout_rounds() + 1;
    let work = || -> Vec<u64> {
        let chunks = opts.n_runs.div_ceil(CHUNK);
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut counts = vec![0u64; n * rounds];
                for r in c * CHUNK..((c + 1) * CHUNK).min(opts.n_runs) {
                    let mut rng = replicate_rng(opts.seed, r);
                    for (t, &s) in plan.replicate(kernel, &mut rng).iter().enumerate() {
                        for k in 0..usize::from(s) {
                            counts[t * rounds + k] += 1;
                        }
                    }
                }
                counts
            })
            .reduce(
                || vec![0u64; n * rounds],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            )
    };
    let flat = match opts.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let counts = (0..n)
        .map(|t| {
            let mut row = [None; 5];
            for s in 1..=rounds {
                row[plan.column(s)] = Some(flat[t * rounds + s - 1]);
            }
            row
        })
        .collect();
    Ok(StageProbabilities { teams: spec.teams(), n_runs: opts.n_runs, counts })
}

/// Stage reached by every team in replicate `replicate`, for structural checks.
pub fn replicate_stages<K: MatchKernel + ?Sized>(
    spec: &TournamentSpec,
    kernel: &K,
    seed: u64,
    replicate: u64,
) -> Result<Vec<u8>> {
    let plan = Plan::new(spec)?;
    Ok(plan.replicate(kernel, &mut replicate_rng(seed, replicate)))
}

/// First-round pairings from complete group tables (spec group order),
/// ranking thirds by points, goal difference, goals scored and lot.
pub fn qualify_and_seed(
    spec: &TournamentSpec,
    tables: &[Vec<(TeamId, Standing)>],
    rng: &mut SimRng,
) -> Result<Vec<(TeamId, TeamId)>> {
    let plan = Plan::new(spec)?;
    let teams = spec.teams();
    if tables.len() != plan.groups.len() {
        return Err(Error::Invalid(format!("{} group tables for {} groups", tables.len(), plan.groups.len())));
    }
    let idx_tables = tables
        .iter()
        .map(|t| t.iter().map(|(team, s)| Ok((index_of(&teams, team)?, *s))).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let (thirds, groups, order) = if plan.best_thirds > 0 {
        let thirds: Vec<(usize, Standing)> = idx_tables.iter().map(|t| t[2]).collect();
        let order = rank_thirds_by_record(&thirds, rng);
        (thirds, (0..idx_tables.len()).collect(), order)
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    Ok(plan
        .seed(&idx_tables, &order, &thirds, &groups)
        .into_iter()
        .map(|(a, b)| (teams[a].clone(), teams[b].clone()))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_runs: u64,
    pub seed: u64,
    pub extra_time_factor: f64,
    pub tiebreak: TiebreakOrder,
    pub threads: Option<usize>,
}

impl SimConfig {
    pub fn new(seed: u64) -> Self {
        SimConfig {
            n_runs: DEFAULT_RUNS,
            seed,
            extra_time_factor: DEFAULT_EXTRA_TIME_FACTOR,
            tiebreak: TiebreakOrder::default(),
            threads: None,
        }
    }
}

/// Simulates the tournament `n_runs` times with Poisson scores.
pub fn run_tournament(
    config: &SimConfig,
    spec: &TournamentSpec,
    source: &dyn IntensitySource,
) -> Result<StageProbabilities> {
    let kernel = PoissonKernel::new(spec, source, config.extra_time_factor, config.tiebreak)?;
    run_with_kernel(
        spec,
        &kernel,
        &RunOptions { n_runs: config.n_runs, seed: config.seed, threads: config.threads },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_tournament_spec_str;

    fn t(s: &str) -> TeamId {
        TeamId::new(s)
    }

    fn res(h: &str, a: &str, hg: u32, ag: u32) -> GroupResult {
        GroupResult { home: t(h), away: t(a), home_goals: hg, away_goals: ag }
    }

    #[test]
    fn poisson_draws_are_deterministic_and_unbiased() {
        let mut a = replicate_rng(1, 0);
        let mut b = replicate_rng(1, 0);
        let xs: Vec<(u32, u32)> = (0..50).map(|_| simulate_match(1.3, 0.7, &mut a)).collect();
        let ys: Vec<(u32, u32)> = (0..50).map(|_| simulate_match(1.3, 0.7, &mut b)).collect();
        assert_eq!(xs, ys);
        assert_eq!(poisson_draw(0.0, &mut a), 0);
        let n = 200_000;
        let mean = (0..n).map(|_| f64::from(poisson_draw(1.5, &mut a))).sum::<f64>() / n as f64;
        assert!((mean - 1.5).abs() < 3.0 * (1.5f64 / n as f64).sqrt());
        let big = (0..20_000).map(|_| f64::from(poisson_draw(12.0, &mut a))).sum::<f64>() / 20_000.0;
        assert!((big - 12.0).abs() < 4.0 * (12.0f64 / 20_000.0).sqrt());
    }

    #[test]
    fn table_points_dominate_and_goals_scored_break_ties() {
        let teams = [t("A"), t("B"), t("C"), t("D")];
        let results = [
            res("A", "B", 1, 0),
            res("A", "C", 1, 0),
            res("A", "D", 1, 0),
            res("B", "C", 3, 3),
            res("B", "D", 1, 0),
            res("C", "D", 1, 0),
        ];
        let mut rng = replicate_rng(0, 0);
        let table = group_table(&teams, &results, TiebreakOrder::OverallFirst, &mut rng).unwrap();
        let order: Vec<&str> = table.iter().map(|(t, _)| t.as_str()).collect();
        // B and C: 4 points, GD 0; B scored 4, C scored 4 - so h2h (3-3) then lot
        assert_eq!(order[0], "A");
        assert_eq!(order[3], "D");

        let results = [
            res("A", "B", 1, 0),
            res("A", "C", 1, 0),
            res("A", "D", 1, 0),
            res("B", "C", 0, 0),
            res("B", "D", 3, 2),
            res("C", "D", 1, 0),
        ];
        let table = group_table(&teams, &results, TiebreakOrder::OverallFirst, &mut rng).unwrap();
        let order: Vec<&str> = table.iter().map(|(t, _)| t.as_str()).collect();
        // B and C both 4 points and GD 0; B scored 3, C scored 1
        assert_eq!(order, ["A", "B", "C", "D"]);
        assert_eq!(table[1].1, Standing { points: 4, goal_diff: 0, goals_for: 3 });
    }

    #[test]
    fn head_to_head_breaks_full_ties() {
        // A, B, C level on points, GD and goals; A beat B and B beat C and C beat A
        // with identical margins, so only the lot orders them; D loses everything.
        let teams = [t("A"), t("B"), t("C"), t("D")];
        let results = [
            res("A", "B", 2, 1),
            res("B", "C", 2, 1),
            res("C", "A", 2, 1),
            res("A", "D", 1, 0),
            res("B", "D", 1, 0),
            res("C", "D", 1, 0),
        ];
        let mut firsts = BTreeMap::new();
        for s in 0..3000 {
            let mut rng = replicate_rng(9, s);
            let table = group_table(&teams, &results, TiebreakOrder::OverallFirst, &mut rng).unwrap();
            assert_eq!(table[3].0.as_str(), "D");
            *firsts.entry(table[0].0.clone()).or_insert(0) += 1;
        }
        assert_eq!(firsts.len(), 3);

        // two teams level overall; the head-to-head winner goes first
        let results = [
            res("A", "B", 1, 0),
            res("A", "C", 0, 1),
            res("A", "D", 2, 0),
            res("B", "C", 2, 0),
            res("B", "D", 1, 0),
            res("C", "D", 0, 3),
        ];
        let mut rng = replicate_rng(0, 0);
        let table = group_table(&teams, &results, TiebreakOrder::OverallFirst, &mut rng).unwrap();
        let order: Vec<&str> = table.iter().map(|(t, _)| t.as_str()).collect();
        // A: 6 pts GD +2 GS 3; B: 6 pts GD +2 GS 3; A beat B
        assert_eq!(&order[..2], ["A", "B"]);
    }

    #[test]
    fn rule_orders_can_disagree() {
        // A beats B but B has the better overall goal difference
        let teams = [t("A"), t("B"), t("C"), t("D")];
        let results = [
            res("A", "B", 1, 0),
            res("A", "C", 0, 1),
            res("A", "D", 1, 0),
            res("B", "C", 5, 0),
            res("B", "D", 1, 0),
            res("C", "D", 0, 1),
        ];
        let mut rng = replicate_rng(0, 0);
        let overall = group_table(&teams, &results, TiebreakOrder::OverallFirst, &mut rng).unwrap();
        let h2h = group_table(&teams, &results, TiebreakOrder::HeadToHeadFirst, &mut rng).unwrap();
        assert_eq!(overall[0].0.as_str(), "B");
        assert_eq!(h2h[0].0.as_str(), "A");
    }

    #[test]
    fn goalless_group_is_decided_by_lot_uniformly() {
        let teams = [t("A"), t("B"), t("C"), t("D")];
        let mut results = Vec::new();
        for i in 0..4 {
            for j in i + 1..4 {
                results.push(GroupResult { home: teams[i].clone(), away: teams[j].clone(), home_goals: 0, away_goals: 0 });
            }
        }
        let n = 40_000u64;
        let mut firsts = [0u64; 4];
        for s in 0..n {
            let table = group_table(&teams, &results, TiebreakOrder::OverallFirst, &mut replicate_rng(4, s)).unwrap();
            firsts[teams.iter().position(|x| *x == table[0].0).unwrap()] += 1;
        }
        let se = (0.25 * 0.75 / n as f64).sqrt();
        for f in firsts {
            assert!((f as f64 / n as f64 - 0.25).abs() < 4.0 * se, "{firsts:?}");
        }
    }

    #[test]
    fn incomplete_group_is_rejected() {
        let teams = [t("A"), t("B"), t("C")];
        let mut rng = replicate_rng(0, 0);
        assert!(group_table(&teams, &[res("A", "B", 1, 0)], TiebreakOrder::OverallFirst, &mut rng).is_err());
    }

    #[test]
    fn knockout_extra_time_and_coin() {
        let mut rng = replicate_rng(3, 0);
        let n = 100_000;
        let wins = (0..n).filter(|_| simulate_knockout_match(5.0, 0.1, 1.0 / 3.0, &mut rng)).count();
        assert!(wins as f64 / n as f64 >= 0.97);
        let even = (0..n).filter(|_| simulate_knockout_match(1.2, 1.2, 1.0 / 3.0, &mut rng)).count();
        let se = (0.25 / n as f64).sqrt();
        assert!((even as f64 / n as f64 - 0.5).abs() < 3.0 * se);
        assert!((1.8f64 * DEFAULT_EXTRA_TIME_FACTOR - 0.6).abs() < 1e-15);
    }

    const SIXTEEN: &str = "edition = 2004\nbest_thirds = 0\n\
        [group A]\nteams = POR, GRE, ESP, RUS\n\
        fixture = POR, GRE\nfixture = ESP, RUS\nfixture = GRE, ESP\nfixture = RUS, POR\nfixture = RUS, GRE\nfixture = ESP, POR\n\
        [group B]\nteams = FRA, ENG, CRO, SUI\n\
        fixture = SUI, CRO\nfixture = FRA, ENG\nfixture = ENG, SUI\nfixture = CRO, FRA\nfixture = CRO, ENG\nfixture = SUI, FRA\n\
        [group C]\nteams = SWE, BUL, DEN, ITA\n\
        fixture = DEN, ITA\nfixture = SWE, BUL\nfixture = BUL, DEN\nfixture = ITA, SWE\nfixture = ITA, BUL\nfixture = DEN, SWE\n\
        [group D]\nteams = CZE, LVA, GER, NED\n\
        fixture = CZE, LVA\nfixture = GER, NED\nfixture = LVA, GER\nfixture = NED, CZE\nfixture = NED, LVA\nfixture = GER, CZE\n\
        [knockout]\ntie = 1A, 2B\ntie = 1C, 2D\ntie = 1B, 2A\ntie = 1D, 2C\n";

    #[test]
    fn sixteen_team_format_stage_sums() {
        let spec = parse_tournament_spec_str("s", SIXTEEN).unwrap();
        let flat = |_: &TeamId, _: &TeamId, _: Stage| Ok((1.3, 1.3));
        let cfg = SimConfig { n_runs: 4000, ..SimConfig::new(5) };
        let sp = run_tournament(&cfg, &spec, &flat).unwrap();
        let sum = |c: usize| sp.counts.iter().map(|r| r[c].unwrap()).sum::<u64>();
        assert!(sp.counts.iter().all(|r| r[0].is_none()));
        assert_eq!(sum(1), 8 * 4000);
        assert_eq!(sum(2), 4 * 4000);
        assert_eq!(sum(3), 2 * 4000);
        assert_eq!(sum(4), 4000);
        let csv = sp.to_csv();
        assert!(csv.lines().nth(1).unwrap().starts_with("POR,,"));
    }

    #[test]
    fn seeding_follows_group_positions() {
        let spec = parse_tournament_spec_str("s", SIXTEEN).unwrap();
        let tables: Vec<Vec<(TeamId, Standing)>> = spec
            .groups
            .iter()
            .map(|g| g.teams.iter().map(|x| (x.clone(), Standing::default())).collect())
            .collect();
        let pairs = qualify_and_seed(&spec, &tables, &mut replicate_rng(0, 0)).unwrap();
        let names: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        assert_eq!(names, [("POR", "ENG"), ("SWE", "LVA"), ("FRA", "GRE"), ("CZE", "BUL")]);
    }

    #[test]
    fn pairwise_csv_round_trip_and_mirror_lookup() {
        let mut p = PairwiseIntensities::default();
        p.table.insert((t("A"), t("B"), Stage::Group), (1.5, 0.5));
        let back = PairwiseIntensities::parse_str("p", &p.to_csv()).unwrap();
        assert_eq!(back, p);
        assert_eq!(p.intensities(&t("B"), &t("A"), Stage::Group).unwrap(), (0.5, 1.5));
        assert!(p.intensities(&t("A"), &t("B"), Stage::Knockout).is_err());
        let bad = "team,opponent,stage,lambda_team,lambda_opponent\nA,B,group,0,1\n";
        assert!(PairwiseIntensities::parse_str("p", bad).is_err());
    }
}
