//! Regenerates the synthetic inputs of `fixtures/euro2020`.
//!
//! Team strengths follow the bookmaker consensus of the 2020 odds, so the toy
//! match history, segments and past tournaments tell the same story as the
//! real odds. Run from the workspace root:
//!
//! ```text
//! cargo run -p cupcast-core --example make_fixtures
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use cupcast_core::ingest::{
    self, write_covariates, write_matches, write_results, write_segments, CovariateRecord, MatchRecord,
    SegmentRecord, Stage, TournamentMatch, BASE_COVARIATES,
};
use cupcast_core::{consensus, PlayerId, TeamId};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

const PLAYERS: usize = 24;

fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u32 {
    Poisson::new(mean).unwrap().sample(rng) as u32
}

fn player(team: &TeamId, k: usize) -> PlayerId {
    PlayerId::new(&format!("{team}_{k:02}"))
}

fn main() {
    let dir = Path::new("fixtures/euro2020");
    let odds = ingest::parse_odds(dir.join("odds.csv")).expect("odds fixture");
    let probs = consensus::consensus_probs(&odds).unwrap();
    let teams = odds.teams.clone();
    let mean_log = probs.iter().map(|p| p.ln()).sum::<f64>() / probs.len() as f64;
    let strength: BTreeMap<TeamId, f64> =
        teams.iter().zip(&probs).map(|(t, p)| (t.clone(), 0.2 * (p.ln() - mean_log))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(20210611);
    let noise = Normal::new(0.0, 1.0).unwrap();

    // international match history
    let mut matches = Vec::new();
    let start = date("2017-06-01");
    for k in 0..720 {
        let d = start + Duration::days(k * 1460 / 720);
        let (h, a) = loop {
            let h = rng.random_range(0..teams.len());
            let a = rng.random_range(0..teams.len());
            if h != a {
                break (h, a);
            }
        };
        let neutral = rng.random_bool(0.2);
        let home_adv = if neutral { 0.0 } else { 0.25 };
        let (sh, sa) = (strength[&teams[h]], strength[&teams[a]]);
        let common = poisson(&mut rng, 0.05);
        matches.push(MatchRecord {
            date: d,
            home_team: teams[h].clone(),
            away_team: teams[a].clone(),
            home_goals: poisson(&mut rng, (0.15 + sh - sa + home_adv).exp()) + common,
            away_goals: poisson(&mut rng, (0.15 + sa - sh).exp()) + common,
            venue_country: teams[h].clone(),
            neutral,
        });
    }
    std::fs::write(dir.join("matches.csv"), write_matches(&matches)).unwrap();

    // players: strength share of the team plus individual spread
    let mut rating: BTreeMap<PlayerId, f64> = BTreeMap::new();
    for t in &teams {
        for k in 1..=PLAYERS {
            let depth = if k <= 14 { 0.0 } else { -0.02 };
            rating.insert(player(t, k), strength[t] / 11.0 + depth + 0.02 * noise.sample(&mut rng));
        }
    }
    let mut segments = Vec::new();
    let seg_start = date("2019-03-01");
    for m in 0..420 {
        let d = seg_start + Duration::days(m * 800 / 420);
        let h = rng.random_range(0..teams.len());
        let a = (h + 1 + rng.random_range(0..teams.len() - 1)) % teams.len();
        let neutral = rng.random_bool(0.2);
        let lineup = |rng: &mut ChaCha8Rng, t: &TeamId| -> Vec<PlayerId> {
            let mut idx: Vec<usize> = (1..=20).collect();
            idx.shuffle(rng);
            let mut v: Vec<usize> = idx[..11].to_vec();
            v.sort();
            v.into_iter().map(|k| player(t, k)).collect()
        };
        let mut hp = lineup(&mut rng, &teams[h]);
        let mut ap = lineup(&mut rng, &teams[a]);
        let red_side = if rng.random_bool(0.05) { Some(rng.random_bool(0.5)) } else { None };
        for (s, (from, to)) in [(0u32, 60u32), (60, 75), (75, 90)].into_iter().enumerate() {
            if s > 0 {
                // one substitution per side
                for (side, t) in [(&mut hp, &teams[h]), (&mut ap, &teams[a])] {
                    let out = rng.random_range(0..side.len());
                    let sub = loop {
                        let p = player(t, rng.random_range(1..=22));
                        if !side.contains(&p) {
                            break p;
                        }
                    };
                    side[out] = sub;
                    side.sort();
                }
            }
            let (mut hr, mut ar) = (0, 0);
            if s == 2 {
                match red_side {
                    Some(true) => {
                        hp.pop();
                        hr = 1;
                    }
                    Some(false) => {
                        ap.pop();
                        ar = 1;
                    }
                    None => {}
                }
            }
            let sum = |ps: &[PlayerId]| ps.iter().map(|p| rating[p]).sum::<f64>();
            let diff = sum(&hp) - sum(&ap);
            let mins = f64::from(to - from) / 90.0;
            let adv = if neutral { 0.0 } else { 0.2 };
            segments.push(SegmentRecord {
                match_id: format!("S{m:04}"),
                segment_id: s as u32 + 1,
                start_minute: from,
                end_minute: to,
                home_players: hp.clone(),
                away_players: ap.clone(),
                home_red_at_start: hr,
                away_red_at_start: ar,
                home_goals_during: poisson(&mut rng, mins * (0.1 + diff / 2.0 + adv).exp()),
                away_goals_during: poisson(&mut rng, mins * (0.1 - diff / 2.0).exp()),
                match_date: d,
                neutral,
                venue_country: teams[h].clone(),
            });
        }
    }
    std::fs::write(dir.join("segments.csv"), write_segments(&segments)).unwrap();

    // squads of 23 from a pool of 24; one regular starter is left out
    let mut squads = String::from("team,player\n");
    let mut pool = String::from("team,player,last_appearance\n");
    for t in &teams {
        let dropped = rng.random_range(1..=20);
        for k in 1..=PLAYERS {
            let p = player(t, k);
            if k != dropped {
                let _ = writeln!(squads, "{t},{p}");
            }
            let last = if k == PLAYERS { "2018-05-01" } else { "2021-03-30" };
            let _ = writeln!(pool, "{t},{p},{last}");
        }
    }
    std::fs::write(dir.join("squads.csv"), squads).unwrap();
    std::fs::write(dir.join("pool.csv"), pool).unwrap();

    // covariates for past editions and 2020; past editions carry rating columns
    let editions = [(2008, 16usize, "2008-06-07"), (2012, 16, "2012-06-08"), (2016, 24, "2016-06-10"), (2020, 24, "2021-06-11")];
    let mut covariates = Vec::new();
    let mut results = Vec::new();
    let mut threeway = String::from("match_id,odds_home,odds_draw,odds_away\n");
    for (year, size, start) in editions {
        let mut field = teams.clone();
        field.shuffle(&mut rng);
        field.truncate(size);
        let host = field[0].clone();
        for t in &field {
            let s = strength[t] + 0.05 * noise.sample(&mut rng);
            let mut values: BTreeMap<String, f64> = BTreeMap::new();
            for name in BASE_COVARIATES {
                let v = match name {
                    "host" => f64::from(u8::from(*t == host)),
                    "neighbor" => f64::from(u8::from(rng.random_bool(0.15))),
                    "coach_nationality" => f64::from(u8::from(rng.random_bool(0.8))),
                    "fifa_rank" => (25.0 - 40.0 * s + 5.0 * noise.sample(&mut rng)).max(1.0).round(),
                    "log_market_value" => 19.5 + 2.0 * s + 0.3 * noise.sample(&mut rng),
                    "uefa_points" => (32000.0 + 15000.0 * s + 2000.0 * noise.sample(&mut rng)).round(),
                    "uefa_places" => (2.0 + 5.0 * s + noise.sample(&mut rng)).clamp(0.0, 8.0).round(),
                    "cl_players" => (6.0 + 12.0 * s + 2.0 * noise.sample(&mut rng)).clamp(0.0, 23.0).round(),
                    "el_players" => (4.0 + 2.0 * noise.sample(&mut rng)).clamp(0.0, 23.0).round(),
                    "legionnaires" => (14.0 + 3.0 * noise.sample(&mut rng)).clamp(0.0, 23.0).round(),
                    "max_teammates" => (4.0 + 1.5 * noise.sample(&mut rng)).clamp(1.0, 23.0).round(),
                    "second_max_teammates" => (3.0 + noise.sample(&mut rng)).clamp(1.0, 23.0).round(),
                    "gdp_ratio" => (40.0 + 15.0 * noise.sample(&mut rng)).max(5.0),
                    "population_ratio" => (0.3 + 0.2 * noise.sample(&mut rng)).max(0.01),
                    "age_distance" => (0.5 * noise.sample(&mut rng)).abs(),
                    "coach_age_distance" => (5.0 * noise.sample(&mut rng)).abs(),
                    _ => unreachable!(),
                };
                values.insert(name.to_string(), v);
            }
            values.insert("hist_ability".into(), (s + 0.05 * noise.sample(&mut rng)).exp());
            values.insert("bookmaker_log_ability".into(), 4.0 * s + 0.1 * noise.sample(&mut rng));
            values.insert("avg_pm".into(), s / 11.0 + 0.005 * noise.sample(&mut rng));
            values.insert("missing_pm_players".into(), f64::from(rng.random_range(0..3u8)));
            covariates.push(CovariateRecord { tournament_year: year, team: t.clone(), values });
        }
        if year == 2020 {
            continue;
        }
        // groups of four, then a knockout among random pairs
        let start = date(start);
        let mut k = 0;
        let mut play = |a: &TeamId, b: &TeamId, day: i64, stage: Stage, rng: &mut ChaCha8Rng| {
            k += 1;
            let (sa, sb) = (strength[a], strength[b]);
            let bonus = |t: &TeamId| if *t == host { 0.25 } else { 0.0 };
            let (la, lb) = ((0.1 + sa - sb + bonus(a)).exp(), (0.1 + sb - sa + bonus(b)).exp());
            let id = format!("E{year}-{k:02}");
            let p = cupcast_core::metrics::outcome_probs(la, lb);
            let _ = writeln!(
                threeway,
                "{id},{:.2},{:.2},{:.2}",
                1.0 / (p.p_win * 1.06),
                1.0 / (p.p_draw * 1.06),
                1.0 / (p.p_loss * 1.06)
            );
            results.push(TournamentMatch {
                edition: year,
                match_id: id,
                date: start + Duration::days(day),
                home: a.clone(),
                away: b.clone(),
                home_goals: poisson(rng, la),
                away_goals: poisson(rng, lb),
                stage,
            });
        };
        for (g, group) in field.chunks(4).enumerate() {
            for (m, (i, j)) in [(0, 1), (2, 3), (0, 2), (1, 3), (3, 0), (1, 2)].into_iter().enumerate() {
                play(&group[i], &group[j], (m / 2 * 4 + g % 2) as i64, Stage::Group, &mut rng);
            }
        }
        let mut alive = field.clone();
        alive.shuffle(&mut rng);
        alive.truncate(if size == 24 { 16 } else { 8 });
        let mut day = 14;
        while alive.len() > 1 {
            let mut next = Vec::new();
            for pair in alive.chunks(2) {
                play(&pair[0], &pair[1], day, Stage::Knockout, &mut rng);
                next.push(pair[rng.random_range(0..2)].clone());
            }
            alive = next;
            day += 4;
        }
    }
    std::fs::write(dir.join("covariates.csv"), write_covariates(&covariates)).unwrap();
    std::fs::write(dir.join("results.csv"), write_results(&results)).unwrap();
    std::fs::write(dir.join("threeway.csv"), threeway).unwrap();
    println!(
        "wrote {} matches, {} segments, {} covariate records, {} results",
        matches.len(),
        segments.len(),
        covariates.len(),
        results.len()
    );
}
