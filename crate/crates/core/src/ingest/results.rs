//! Tournament results, squads, national player pools and three-way odds.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{csv_field, file_label, parse_count, parse_date, parse_real, read_table, read_to_string};
use crate::error::{Error, Result};
use crate::ids::{PlayerId, TeamId};

const RESULTS: &[&str] = &[
    "edition",
    "match_id",
    "date",
    "home",
    "away",
    "home_goals",
    "away_goals",
    "stage",
];
const SQUADS: &[&str] = &["team", "player"];
const POOL: &[&str] = &["team", "player", "last_appearance"];
const THREEWAY: &[&str] = &["match_id", "odds_home", "odds_draw", "odds_away"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Group,
    Knockout,
}

impl Stage {
    pub fn is_group(self) -> bool {
        self == Stage::Group
    }

    pub fn parse(s: &str) -> Option<Stage> {
        match s.to_ascii_lowercase().as_str() {
            "group" => Some(Stage::Group),
            "knockout" => Some(Stage::Knockout),
            _ => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Group => "group",
            Stage::Knockout => "knockout",
        })
    }
}

/// A tournament match with its regular-time (90 minute) score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TournamentMatch {
    pub edition: i32,
    pub match_id: String,
    pub date: NaiveDate,
    pub home: TeamId,
    pub away: TeamId,
    pub home_goals: u32,
    pub away_goals: u32,
    pub stage: Stage,
}

pub fn parse_results(path: impl AsRef<Path>) -> Result<Vec<TournamentMatch>> {
    let path = path.as_ref();
    parse_results_str(&file_label(path), &read_to_string(path)?)
}

pub fn parse_results_str(file: &str, text: &str) -> Result<Vec<TournamentMatch>> {
    let (_, table) = read_table(file, text, &[RESULTS])?;
    let mut ids = HashSet::new();
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, f) in table.rows {
        let edition = f[0]
            .parse()
            .map_err(|_| Error::row(file, line, format!("unparsable edition `{}`", f[0])))?;
        let m = TournamentMatch {
            edition,
            match_id: f[1].clone(),
            date: parse_date(file, line, &f[2])?,
            home: TeamId::new(&f[3]),
            away: TeamId::new(&f[4]),
            home_goals: parse_count(file, line, "home goals", &f[5])?,
            away_goals: parse_count(file, line, "away goals", &f[6])?,
            stage: Stage::parse(&f[7])
                .ok_or_else(|| Error::row(file, line, format!("stage must be group or knockout, found `{}`", f[7])))?,
        };
        if m.home == m.away {
            return Err(Error::row(file, line, "team plays itself"));
        }
        if !ids.insert(m.match_id.clone()) {
            return Err(Error::row(file, line, format!("duplicate match id `{}`", m.match_id)));
        }
        out.push(m);
    }
    Ok(out)
}

pub fn write_results(matches: &[TournamentMatch]) -> String {
    let mut out = RESULTS.join(",");
    out.push('\n');
    for m in matches {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            m.edition,
            csv_field(&m.match_id),
            m.date.format("%Y-%m-%d"),
            csv_field(m.home.as_str()),
            csv_field(m.away.as_str()),
            m.home_goals,
            m.away_goals,
            m.stage
        ));
    }
    out
}

/// Nominated squads, keyed by team.
pub type Squads = BTreeMap<TeamId, BTreeSet<PlayerId>>;

pub fn parse_squads(path: impl AsRef<Path>) -> Result<Squads> {
    let path = path.as_ref();
    parse_squads_str(&file_label(path), &read_to_string(path)?)
}

pub fn parse_squads_str(file: &str, text: &str) -> Result<Squads> {
    let (_, table) = read_table(file, text, &[SQUADS])?;
    let mut out = Squads::new();
    for (line, f) in table.rows {
        if !out.entry(TeamId::new(&f[0])).or_default().insert(PlayerId::new(&f[1])) {
            return Err(Error::row(file, line, format!("player `{}` listed twice", f[1])));
        }
    }
    Ok(out)
}

/// A national-team player with the date of the latest international appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolEntry {
    pub team: TeamId,
    pub player: PlayerId,
    pub last_appearance: NaiveDate,
}

pub fn parse_pool(path: impl AsRef<Path>) -> Result<Vec<PoolEntry>> {
    let path = path.as_ref();
    parse_pool_str(&file_label(path), &read_to_string(path)?)
}

pub fn parse_pool_str(file: &str, text: &str) -> Result<Vec<PoolEntry>> {
    let (_, table) = read_table(file, text, &[POOL])?;
    table
        .rows
        .into_iter()
        .map(|(line, f)| {
            Ok(PoolEntry {
                team: TeamId::new(&f[0]),
                player: PlayerId::new(&f[1]),
                last_appearance: parse_date(file, line, &f[2])?,
            })
        })
        .collect()
}

/// Decimal three-way odds (home win, draw, away win) for one match.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeWayOdds {
    pub match_id: String,
    pub odds: [f64; 3],
}

pub fn parse_threeway(path: impl AsRef<Path>) -> Result<Vec<ThreeWayOdds>> {
    let path = path.as_ref();
    parse_threeway_str(&file_label(path), &read_to_string(path)?)
}

pub fn parse_threeway_str(file: &str, text: &str) -> Result<Vec<ThreeWayOdds>> {
    let (_, table) = read_table(file, text, &[THREEWAY])?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, f) in table.rows {
        let mut odds = [0.0; 3];
        for (o, raw) in odds.iter_mut().zip(&f[1..]) {
            *o = parse_real(file, line, "odds", raw)?;
            if *o <= 1.0 {
                return Err(Error::row(file, line, format!("odds {o} must exceed 1")));
            }
        }
        out.push(ThreeWayOdds {
            match_id: f[0].clone(),
            odds,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_parse_and_reject_bad_stage() {
        let ok = "edition,match_id,date,home,away,home_goals,away_goals,stage\n\
                  2004,1,2004-06-12,POR,GRE,1,2,group\n";
        let m = parse_results_str("t", ok).unwrap();
        assert_eq!(m[0].stage, Stage::Group);
        let bad = ok.replace("group", "final");
        assert!(parse_results_str("t", &bad).is_err());
    }

    #[test]
    fn squads_group_players() {
        let s = parse_squads_str("t", "team,player\nFRA,a\nFRA,b\nENG,c\n").unwrap();
        assert_eq!(s[&TeamId::new("fra")].len(), 2);
        assert!(parse_squads_str("t", "team,player\nFRA,a\nFRA,A\n").is_err());
    }

    #[test]
    fn threeway_odds_must_exceed_one() {
        assert!(parse_threeway_str("t", "match_id,odds_home,odds_draw,odds_away\n1,2,3,6\n").is_ok());
        assert!(parse_threeway_str("t", "match_id,odds_home,odds_draw,odds_away\n1,2,1,6\n").is_err());
    }
}
