use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{csv_field, file_label, parse_real, read_table, read_to_string};
use crate::error::{Error, Result};
use crate::ids::TeamId;

const SCHEMA: &[&str] = &["bookmaker", "team", "quoted_odds"];

/// One outright quote: European decimal odds, stake included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsQuote {
    pub bookmaker: String,
    pub team: TeamId,
    pub quoted_odds: f64,
}

/// Quotes grouped by bookmaker; every bookmaker covers every team.
#[derive(Debug, Clone, PartialEq)]
pub struct OddsTable {
    /// Teams in first-seen order.
    pub teams: Vec<TeamId>,
    /// `(bookmaker, quoted odds aligned with `teams`)` in first-seen order.
    pub bookmakers: Vec<(String, Vec<f64>)>,
}

impl OddsTable {
    /// Groups quotes, enforcing odds > 1, no duplicates and complete coverage.
    pub fn from_quotes(quotes: &[OddsQuote]) -> Result<Self> {
        let mut teams: Vec<TeamId> = Vec::new();
        let mut books: Vec<String> = Vec::new();
        let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for q in quotes {
            if !(q.quoted_odds > 1.0) || !q.quoted_odds.is_finite() {
                return Err(Error::Invalid(format!(
                    "bookmaker `{}` quotes {} for `{}`; odds must exceed 1",
                    q.bookmaker, q.quoted_odds, q.team
                )));
            }
            let t = index_of(&mut teams, &q.team);
            let b = index_of(&mut books, &q.bookmaker);
            if cells.insert((b, t), q.quoted_odds).is_some() {
                return Err(Error::Invalid(format!(
                    "bookmaker `{}` quotes `{}` twice",
                    q.bookmaker, q.team
                )));
            }
        }
        let mut bookmakers = Vec::with_capacity(books.len());
        for (b, name) in books.into_iter().enumerate() {
            let mut row = Vec::with_capacity(teams.len());
            for (t, team) in teams.iter().enumerate() {
                match cells.get(&(b, t)) {
                    Some(&v) => row.push(v),
                    None => {
                        return Err(Error::Invalid(format!(
                            "bookmaker `{name}` does not quote `{team}` ({} of {} teams covered)",
                            cells.range((b, 0)..(b + 1, 0)).count(),
                            teams.len()
                        )))
                    }
                }
            }
            bookmakers.push((name, row));
        }
        Ok(OddsTable { teams, bookmakers })
    }

    pub fn quotes(&self) -> Vec<OddsQuote> {
        self.bookmakers
            .iter()
            .flat_map(|(b, row)| {
                self.teams.iter().zip(row).map(move |(t, &q)| OddsQuote {
                    bookmaker: b.clone(),
                    team: t.clone(),
                    quoted_odds: q,
                })
            })
            .collect()
    }

    /// Sub-table for one bookmaker.
    pub fn bookmaker(&self, name: &str) -> Option<&[f64]> {
        self.bookmakers
            .iter()
            .find(|(b, _)| b == name)
            .map(|(_, row)| row.as_slice())
    }
}

fn index_of<T: PartialEq + Clone>(list: &mut Vec<T>, item: &T) -> usize {
    match list.iter().position(|x| x == item) {
        Some(i) => i,
        None => {
            list.push(item.clone());
            list.len() - 1
        }
    }
}

pub fn parse_odds(path: impl AsRef<Path>) -> Result<OddsTable> {
    let path = path.as_ref();
    parse_odds_str(&file_label(path), &read_to_string(path)?)
}

pub fn parse_odds_str(file: &str, text: &str) -> Result<OddsTable> {
    let (_, table) = read_table(file, text, &[SCHEMA])?;
    let mut quotes = Vec::with_capacity(table.rows.len());
    let mut seen = HashSet::new();
    for (line, f) in table.rows {
        let quoted_odds = parse_real(file, line, "quoted odds", &f[2])?;
        if quoted_odds <= 1.0 {
            return Err(Error::row(file, line, format!("quoted odds {quoted_odds} must exceed 1")));
        }
        let q = OddsQuote {
            bookmaker: f[0].clone(),
            team: TeamId::new(&f[1]),
            quoted_odds,
        };
        if !seen.insert((q.bookmaker.clone(), q.team.clone())) {
            return Err(Error::row(file, line, "duplicate bookmaker/team quote"));
        }
        quotes.push(q);
    }
    OddsTable::from_quotes(&quotes).map_err(|e| match e {
        Error::Invalid(m) => Error::Invalid(format!("{file}: {m}")),
        other => other,
    })
}

pub fn write_odds(table: &OddsTable) -> String {
    let mut out = SCHEMA.join(",");
    out.push('\n');
    for q in table.quotes() {
        out.push_str(&format!(
            "{},{},{}\n",
            csv_field(&q.bookmaker),
            csv_field(q.team.as_str()),
            q.quoted_odds
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text(rows: &[(&str, &str, f64)]) -> String {
        let mut s = String::from("bookmaker,team,quoted_odds\n");
        for (b, t, q) in rows {
            s.push_str(&format!("{b},{t},{q}\n"));
        }
        s
    }

    #[test]
    fn groups_by_bookmaker() {
        let t = parse_odds_str(
            "t",
            &text(&[("bwin", "FRA", 5.5), ("bwin", "ENG", 6.0), ("Oddset", "FRA", 3.25), ("Oddset", "ENG", 7.0)]),
        )
        .unwrap();
        assert_eq!(t.teams.len(), 2);
        assert_eq!(t.bookmaker("bwin").unwrap()[0], 5.5);
        assert_eq!(t.bookmaker("Oddset").unwrap()[0], 3.25);
    }

    #[test]
    fn incomplete_coverage_is_rejected() {
        let err = parse_odds_str(
            "t",
            &text(&[("a", "FRA", 5.5), ("a", "ENG", 6.0), ("b", "FRA", 5.0)]),
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("does not quote `ENG`"), "{err}");
        assert!(err.contains("1 of 2"), "{err}");
    }

    #[test]
    fn odds_at_or_below_one_are_rejected() {
        assert!(parse_odds_str("t", &text(&[("a", "FRA", 1.0)])).is_err());
        assert!(parse_odds_str("t", &text(&[("a", "FRA", 0.5)])).is_err());
    }
}
