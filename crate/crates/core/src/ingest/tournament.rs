//! Tournament format description.
//!
//! Key–value text with sections:
//!
//! ```text
//! edition = 2020
//! start_date = 2021-06-11
//! best_thirds = 4
//!
//! [group A]
//! teams = TUR, ITA, WAL, SUI
//! fixture = TUR, ITA @ ITA
//! ...
//!
//! [knockout]
//! tie = 1B, 3rd:1
//! tie = 1A, 2C
//! ...
//!
//! [thirds]
//! ABCD = A, D, B, C
//! ...
//! ```
//!
//! Knockout ties are listed in bracket order: winners of ties 1 and 2 meet,
//! then winners of 3 and 4, and so on. A slot is `1X`/`2X` (winner/runner-up
//! of group X), `3rd:k` (k-th best-third slot, filled through the `[thirds]`
//! table) or `team:NAME` for knockout-only formats. Each `[thirds]` row maps
//! a set of qualifying third-placed groups to the groups feeding slots
//! `3rd:1..3rd:k` in order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;

use super::{file_label, read_to_string};
use crate::error::{Error, Result};
use crate::ids::TeamId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixture {
    pub home: TeamId,
    pub away: TeamId,
    pub venue: Option<TeamId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub name: String,
    pub teams: Vec<TeamId>,
    pub fixtures: Vec<Fixture>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Slot {
    /// Group finishing position (1 = winner).
    Position { group: String, rank: usize },
    /// Best-third slot, 1-based.
    Third(usize),
    /// Direct entry (knockout-only formats).
    Seed(TeamId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TournamentSpec {
    pub edition: i32,
    pub start_date: Option<NaiveDate>,
    pub groups: Vec<Group>,
    pub best_thirds: usize,
    /// First knockout round in bracket order.
    pub knockout: Vec<(Slot, Slot)>,
    /// Sorted qualifying group names → source group for each third slot.
    pub third_table: BTreeMap<String, Vec<String>>,
    seeds: Vec<TeamId>,
}

impl TournamentSpec {
    /// Group-stage format; validates before returning.
    pub fn with_groups(
        edition: i32,
        groups: Vec<Group>,
        best_thirds: usize,
        knockout: Vec<(Slot, Slot)>,
        third_table: BTreeMap<String, Vec<String>>,
    ) -> Result<Self> {
        let spec = TournamentSpec {
            edition,
            start_date: None,
            groups,
            best_thirds,
            knockout,
            third_table,
            seeds: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Knockout-only format: `teams` listed in bracket order, paired 1v2, 3v4, ...
    pub fn knockout_only(edition: i32, teams: &[TeamId]) -> Result<Self> {
        let knockout = teams
            .chunks(2)
            .map(|c| {
                (
                    Slot::Seed(c[0].clone()),
                    Slot::Seed(c.get(1).cloned().unwrap_or_else(|| c[0].clone())),
                )
            })
            .collect();
        let spec = TournamentSpec {
            edition,
            start_date: None,
            groups: Vec::new(),
            best_thirds: 0,
            knockout,
            third_table: BTreeMap::new(),
            seeds: teams.to_vec(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// All teams: group order for group formats, bracket order otherwise.
    pub fn teams(&self) -> Vec<TeamId> {
        if self.groups.is_empty() {
            self.seeds.clone()
        } else {
            self.groups.iter().flat_map(|g| g.teams.iter().cloned()).collect()
        }
    }

    pub fn team_index(&self, team: &TeamId) -> Option<usize> {
        self.teams().iter().position(|t| t == team)
    }

    /// Number of knockout rounds including the final.
    pub fn knockout_rounds(&self) -> usize {
        (2 * self.knockout.len()).trailing_zeros() as usize
    }

    /// Round-robin fixtures for `teams`, first-listed team at home, no venue.
    pub fn round_robin(teams: &[TeamId]) -> Vec<Fixture> {
        let mut out = Vec::new();
        for i in 0..teams.len() {
            for j in i + 1..teams.len() {
                out.push(Fixture {
                    home: teams[i].clone(),
                    away: teams[j].clone(),
                    venue: None,
                });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Spec(m));
        let ties = self.knockout.len();
        if ties == 0 || !ties.is_power_of_two() {
            return err(format!("first knockout round has {ties} ties; need a power of two"));
        }
        let mut used: Vec<&Slot> = self.knockout.iter().flat_map(|(a, b)| [a, b]).collect();
        used.sort();
        if used.windows(2).any(|w| w[0] == w[1]) {
            return err("a knockout slot is used twice".into());
        }

        if self.groups.is_empty() {
            if self.best_thirds != 0 {
                return err("best thirds require groups".into());
            }
            let mut seeds = BTreeSet::new();
            for s in &used {
                match s {
                    Slot::Seed(t) => {
                        if !seeds.insert(t) {
                            return err(format!("team `{t}` seeded twice"));
                        }
                    }
                    _ => return err("group slots in a knockout-only format".into()),
                }
            }
            if seeds.len() != self.seeds.len() || self.seeds.iter().any(|t| !seeds.contains(t)) {
                return err("knockout seeds disagree with team list".into());
            }
            return Ok(());
        }

        let mut all = BTreeSet::new();
        for g in &self.groups {
            if g.teams.len() < 2 {
                return err(format!("group {} has fewer than two teams", g.name));
            }
            for t in &g.teams {
                if !all.insert(t.clone()) {
                    return err(format!("team `{t}` appears in more than one group"));
                }
            }
            let mut pairs = BTreeSet::new();
            for f in &g.fixtures {
                if !g.teams.contains(&f.home) || !g.teams.contains(&f.away) || f.home == f.away {
                    return err(format!("fixture {} v {} is not a group {} pairing", f.home, f.away, g.name));
                }
                let key = if f.home < f.away { (&f.home, &f.away) } else { (&f.away, &f.home) };
                if !pairs.insert(key) {
                    return err(format!("fixture {} v {} scheduled twice in group {}", f.home, f.away, g.name));
                }
            }
            let n = g.teams.len();
            if pairs.len() != n * (n - 1) / 2 {
                return err(format!(
                    "group {} schedules {} of {} pairings",
                    g.name,
                    pairs.len(),
                    n * (n - 1) / 2
                ));
            }
        }
        let names: BTreeSet<&str> = self.groups.iter().map(|g| g.name.as_str()).collect();
        if names.len() != self.groups.len() {
            return err("duplicate group name".into());
        }
        if self.best_thirds > self.groups.len() {
            return err("more best thirds than groups".into());
        }
        if self.best_thirds > 0 && self.groups.iter().any(|g| g.name.chars().count() != 1 || g.teams.len() < 3) {
            return err("best-third formats need single-letter groups of at least three teams".into());
        }

        let mut expected: Vec<Slot> = Vec::new();
        for g in &self.groups {
            for rank in 1..=2 {
                expected.push(Slot::Position { group: g.name.clone(), rank });
            }
        }
        expected.extend((1..=self.best_thirds).map(Slot::Third));
        expected.sort();
        let used: Vec<Slot> = used.into_iter().cloned().collect();
        if used != expected {
            return err(format!(
                "bracket consumes {} slots but {} teams qualify (top two per group plus {} thirds)",
                used.len(),
                expected.len(),
                self.best_thirds
            ));
        }

        if self.best_thirds > 0 {
            let groups: Vec<String> = self.groups.iter().map(|g| g.name.clone()).collect();
            let combos = combinations(&groups, self.best_thirds);
            if self.third_table.len() != combos.len() {
                return err(format!(
                    "third-place table has {} rows; {} combinations exist",
                    self.third_table.len(),
                    combos.len()
                ));
            }
            for combo in combos {
                let key = combo.concat();
                let Some(row) = self.third_table.get(&key) else {
                    return err(format!("third-place table lacks combination {key}"));
                };
                let mut sorted = row.clone();
                sorted.sort();
                if sorted != combo {
                    return err(format!("third-place row {key} is not a permutation of its groups"));
                }
            }
        } else if !self.third_table.is_empty() {
            return err("third-place table without best thirds".into());
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "edition = {}", self.edition);
        if let Some(d) = self.start_date {
            let _ = writeln!(s, "start_date = {}", d.format("%Y-%m-%d"));
        }
        let _ = writeln!(s, "best_thirds = {}", self.best_thirds);
        for g in &self.groups {
            let _ = writeln!(s, "\n[group {}]", g.name);
            let _ = writeln!(s, "teams = {}", join(&g.teams));
            for f in &g.fixtures {
                match &f.venue {
                    Some(v) => {
                        let _ = writeln!(s, "fixture = {}, {} @ {}", f.home, f.away, v);
                    }
                    None => {
                        let _ = writeln!(s, "fixture = {}, {}", f.home, f.away);
                    }
                }
            }
        }
        let _ = writeln!(s, "\n[knockout]");
        for (a, b) in &self.knockout {
            let _ = writeln!(s, "tie = {}, {}", slot_text(a), slot_text(b));
        }
        if !self.third_table.is_empty() {
            let _ = writeln!(s, "\n[thirds]");
            for (k, v) in &self.third_table {
                let _ = writeln!(s, "{k} = {}", v.join(", "));
            }
        }
        s
    }
}

fn join(teams: &[TeamId]) -> String {
    teams.iter().map(TeamId::as_str).collect::<Vec<_>>().join(", ")
}

fn slot_text(s: &Slot) -> String {
    match s {
        Slot::Position { group, rank } => format!("{rank}{group}"),
        Slot::Third(k) => format!("3rd:{k}"),
        Slot::Seed(t) => format!("team:{t}"),
    }
}

fn combinations(items: &[String], k: usize) -> Vec<Vec<String>> {
    fn go(items: &[String], k: usize, start: usize, cur: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i].clone());
            go(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut sorted = items.to_vec();
    sorted.sort();
    let mut out = Vec::new();
    go(&sorted, k, 0, &mut Vec::new(), &mut out);
    out
}

pub fn parse_tournament_spec(path: impl AsRef<Path>) -> Result<TournamentSpec> {
    let path = path.as_ref();
    parse_tournament_spec_str(&file_label(path), &read_to_string(path)?)
}

enum Section {
    Top,
    Group(usize),
    Knockout,
    Thirds,
}

pub fn parse_tournament_spec_str(file: &str, text: &str) -> Result<TournamentSpec> {
    let mut edition = None;
    let mut start_date = None;
    let mut best_thirds = 0usize;
    let mut groups: Vec<Group> = Vec::new();
    let mut knockout = Vec::new();
    let mut third_table = BTreeMap::new();
    let mut section = Section::Top;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |m: String| Error::row(file, line_no, m);
        if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let header = header.trim();
            section = if let Some(name) = header.strip_prefix("group ") {
                let name = name.trim().to_uppercase();
                groups.push(Group { name, teams: Vec::new(), fixtures: Vec::new() });
                Section::Group(groups.len() - 1)
            } else if header == "knockout" {
                Section::Knockout
            } else if header == "thirds" {
                Section::Thirds
            } else {
                return Err(bad(format!("unknown section [{header}]")));
            };
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| bad(format!("expected `key = value`, found `{line}`")))?;
        match section {
            Section::Top => match key {
                "edition" => {
                    edition = Some(value.parse().map_err(|_| bad(format!("bad edition `{value}`")))?)
                }
                "start_date" => {
                    start_date = Some(
                        NaiveDate::parse_from_str(value, "%Y-%m-%d")
                            .map_err(|_| bad(format!("unparsable date `{value}`")))?,
                    )
                }
                "best_thirds" => {
                    best_thirds = value.parse().map_err(|_| bad(format!("bad best_thirds `{value}`")))?
                }
                "teams" => {
                    // knockout-only: seeds listed here in bracket order
                    groups.clear();
                    knockout = list(value)
                        .chunks(2)
                        .map(|c| (Slot::Seed(TeamId::new(&c[0])), Slot::Seed(TeamId::new(c.get(1).unwrap_or(&c[0])))))
                        .collect();
                }
                _ => return Err(bad(format!("unknown key `{key}`"))),
            },
            Section::Group(g) => match key {
                "teams" => groups[g].teams = list(value).iter().map(|t| TeamId::new(t)).collect(),
                "fixture" => {
                    let (pair, venue) = match value.split_once('@') {
                        Some((p, v)) => (p, Some(TeamId::new(v))),
                        None => (value, None),
                    };
                    let teams = list(pair);
                    if teams.len() != 2 {
                        return Err(bad(format!("fixture needs two teams, found `{pair}`")));
                    }
                    groups[g].fixtures.push(Fixture {
                        home: TeamId::new(&teams[0]),
                        away: TeamId::new(&teams[1]),
                        venue,
                    });
                }
                _ => return Err(bad(format!("unknown group key `{key}`"))),
            },
            Section::Knockout => {
                if key != "tie" {
                    return Err(bad(format!("unknown knockout key `{key}`")));
                }
                let slots = list(value);
                if slots.len() != 2 {
                    return Err(bad(format!("tie needs two slots, found `{value}`")));
                }
                knockout.push((parse_slot(&slots[0]).map_err(&bad)?, parse_slot(&slots[1]).map_err(&bad)?));
            }
            Section::Thirds => {
                let mut k: Vec<char> = key.to_uppercase().chars().collect();
                k.sort();
                let row: Vec<String> = list(value).iter().map(|s| s.to_uppercase()).collect();
                if third_table.insert(k.into_iter().collect::<String>(), row).is_some() {
                    return Err(bad(format!("duplicate third-place row `{key}`")));
                }
            }
        }
    }

    let edition = edition.ok_or_else(|| Error::Spec(format!("{file}: missing `edition`")))?;
    let seeds: Vec<TeamId> = if groups.is_empty() {
        knockout
            .iter()
            .flat_map(|(a, b)| [a, b])
            .filter_map(|s| match s {
                Slot::Seed(t) => Some(t.clone()),
                _ => None,
            })
            .collect()
    } else {
        Vec::new()
    };
    let spec = TournamentSpec {
        edition,
        start_date,
        groups,
        best_thirds,
        knockout,
        third_table,
        seeds,
    };
    spec.validate().map_err(|e| match e {
        Error::Spec(m) => Error::Spec(format!("{file}: {m}")),
        other => other,
    })?;
    Ok(spec)
}

fn list(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

fn parse_slot(s: &str) -> Result<Slot, String> {
    if let Some(k) = s.strip_prefix("3rd:") {
        return k
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&k| k >= 1)
            .map(Slot::Third)
            .ok_or_else(|| format!("bad third slot `{s}`"));
    }
    if let Some(t) = s.strip_prefix("team:") {
        return Ok(Slot::Seed(TeamId::new(t)));
    }
    let mut chars = s.chars();
    match (chars.next(), chars.as_str()) {
        (Some(r @ ('1' | '2')), g) if !g.is_empty() => Ok(Slot::Position {
            group: g.to_uppercase(),
            rank: (r as u8 - b'0') as usize,
        }),
        _ => Err(format!("bad slot `{s}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sixteen_team() -> String {
        let mut s = String::from("edition = 2004\nbest_thirds = 0\n");
        let groups = [("A", ["POR", "GRE", "ESP", "RUS"]), ("B", ["FRA", "ENG", "CRO", "SUI"]),
                      ("C", ["SWE", "BUL", "DEN", "ITA"]), ("D", ["CZE", "LVA", "GER", "NED"])];
        for (name, teams) in groups {
            s.push_str(&format!("[group {name}]\nteams = {}\n", teams.join(", ")));
            for i in 0..4 {
                for j in i + 1..4 {
                    s.push_str(&format!("fixture = {}, {}\n", teams[i], teams[j]));
                }
            }
        }
        s.push_str("[knockout]\ntie = 1A, 2B\ntie = 1C, 2D\ntie = 1B, 2A\ntie = 1D, 2C\n");
        s
    }

    #[test]
    fn sixteen_team_format_parses() {
        let spec = parse_tournament_spec_str("t", &sixteen_team()).unwrap();
        assert_eq!(spec.teams().len(), 16);
        assert_eq!(spec.knockout_rounds(), 3);
        assert_eq!(parse_tournament_spec_str("t", &spec.to_text()).unwrap(), spec);
    }

    #[test]
    fn team_in_two_groups_is_rejected() {
        let text = sixteen_team().replace("SWE, BUL", "POR, BUL").replace("fixture = SWE", "fixture = POR");
        let err = parse_tournament_spec_str("t", &text).unwrap_err().to_string();
        assert!(err.contains("more than one group"), "{err}");
    }

    #[test]
    fn missing_fixture_is_rejected() {
        let text = sixteen_team().replacen("fixture = POR, GRE\n", "", 1);
        assert!(parse_tournament_spec_str("t", &text).is_err());
    }

    #[test]
    fn bracket_must_consume_qualifiers() {
        let text = sixteen_team().replace("tie = 1D, 2C", "tie = 1D, 1A");
        assert!(parse_tournament_spec_str("t", &text).is_err());
    }

    #[test]
    fn knockout_only_format() {
        let spec = parse_tournament_spec_str("t", "edition = 1\nteams = A, B, C, D\n").unwrap();
        assert_eq!(spec.knockout_rounds(), 2);
        assert_eq!(spec.teams().len(), 4);
        let round_trip = parse_tournament_spec_str("t", &spec.to_text()).unwrap();
        assert_eq!(round_trip, spec);
    }
}
