use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{csv_field, file_label, parse_bool, parse_count, parse_date, read_table, read_to_string, yes_no};
use crate::error::{Error, Result};
use crate::ids::TeamId;

const SCHEMA: &[&str] = &[
    "date",
    "home_team",
    "away_team",
    "home_goals",
    "away_goals",
    "venue_country",
    "neutral",
];
/// Textual score variant, `z-y` in a single column.
const SCORE_SCHEMA: &[&str] = &["date", "home_team", "away_team", "score", "venue_country", "neutral"];

/// One historic international match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub date: NaiveDate,
    pub home_team: TeamId,
    pub away_team: TeamId,
    pub home_goals: u32,
    pub away_goals: u32,
    pub venue_country: TeamId,
    pub neutral: bool,
}

impl MatchRecord {
    /// Checks the record invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.home_team == self.away_team {
            return Err(format!("team `{}` plays itself", self.home_team));
        }
        if !self.neutral
            && self.venue_country != self.home_team
            && self.venue_country != self.away_team
        {
            return Err(format!(
                "non-neutral venue `{}` matches neither team",
                self.venue_country
            ));
        }
        Ok(())
    }

    /// `(home side at home, away side at home)` for the intensity indicator.
    pub fn at_home(&self) -> (bool, bool) {
        if self.neutral {
            (false, false)
        } else {
            (
                self.venue_country == self.home_team,
                self.venue_country == self.away_team,
            )
        }
    }
}

pub fn parse_matches(path: impl AsRef<Path>) -> Result<Vec<MatchRecord>> {
    let path = path.as_ref();
    parse_matches_str(&file_label(path), &read_to_string(path)?)
}

/// Parses match rows; the result is sorted by date (stable for equal dates).
pub fn parse_matches_str(file: &str, text: &str) -> Result<Vec<MatchRecord>> {
    let (schema, table) = read_table(file, text, &[SCHEMA, SCORE_SCHEMA])?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, f) in table.rows {
        let (home_goals, away_goals, rest) = if schema == 0 {
            (
                parse_count(file, line, "home goals", &f[3])?,
                parse_count(file, line, "away goals", &f[4])?,
                &f[5..],
            )
        } else {
            let (h, a) = parse_score(file, line, &f[3])?;
            (h, a, &f[4..])
        };
        let record = MatchRecord {
            date: parse_date(file, line, &f[0])?,
            home_team: TeamId::new(&f[1]),
            away_team: TeamId::new(&f[2]),
            home_goals,
            away_goals,
            venue_country: TeamId::new(&rest[0]),
            neutral: parse_bool(file, line, &rest[1])?,
        };
        record.validate().map_err(|m| Error::row(file, line, m))?;
        out.push(record);
    }
    out.sort_by_key(|m| m.date);
    Ok(out)
}

fn parse_score(file: &str, line: usize, s: &str) -> Result<(u32, u32)> {
    let (h, a) = s
        .split_once('-')
        .ok_or_else(|| Error::row(file, line, format!("malformed score `{s}`")))?;
    if h.trim().is_empty() || a.trim().is_empty() {
        return Err(Error::row(file, line, format!("malformed score `{s}`")));
    }
    Ok((
        parse_count(file, line, "home goals", h.trim())?,
        parse_count(file, line, "away goals", a.trim())?,
    ))
}

pub fn write_matches(records: &[MatchRecord]) -> String {
    let mut out = SCHEMA.join(",");
    out.push('\n');
    for m in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            m.date.format("%Y-%m-%d"),
            csv_field(m.home_team.as_str()),
            csv_field(m.away_team.as_str()),
            m.home_goals,
            m.away_goals,
            csv_field(m.venue_country.as_str()),
            yes_no(m.neutral)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textual_score_row_from_historic_table() {
        let text = "date,home_team,away_team,score,venue_country,neutral\n\
                    2004-06-06, Czech Republic, Estonia, 2-0, Czech Republic, no\n";
        let m = parse_matches_str("t", text).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].home_goals, m[0].away_goals), (2, 0));
        assert!(!m[0].neutral);
        assert_eq!(m[0].at_home(), (true, false));
    }

    #[test]
    fn empty_file_with_header_is_empty() {
        let m = parse_matches_str("t", &format!("{}\n", SCHEMA.join(","))).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn truncated_score_names_the_row() {
        let text = "date,home_team,away_team,score,venue_country,neutral\n\
                    2004-06-06,France,Ukraine,1-0,France,no\n\
                    2004-06-06,Latvia,Azerbaijan,2-,Latvia,no\n";
        let err = parse_matches_str("t", text).unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");
        assert!(err.contains("malformed score"), "{err}");
    }

    #[test]
    fn negative_goals_and_bad_dates_are_rejected() {
        let head = SCHEMA.join(",");
        let neg = format!("{head}\n2004-06-06,A,B,-1,0,A,no\n");
        assert!(parse_matches_str("t", &neg).unwrap_err().to_string().contains("negative"));
        let date = format!("{head}\n2004-13-06,A,B,1,0,A,no\n");
        assert!(parse_matches_str("t", &date).unwrap_err().to_string().contains("unparsable date"));
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let err = parse_matches_str("t", "date,home,away\n").unwrap_err();
        assert!(matches!(err, Error::Schema { .. }));
    }

    #[test]
    fn venue_must_match_a_team_unless_neutral() {
        let head = SCHEMA.join(",");
        let bad = format!("{head}\n2004-06-06,A,B,1,0,C,no\n");
        assert!(parse_matches_str("t", &bad).is_err());
        let ok = format!("{head}\n2004-06-06,A,B,1,0,C,yes\n");
        assert_eq!(parse_matches_str("t", &ok).unwrap()[0].at_home(), (false, false));
        let away_host = format!("{head}\n2004-06-06,A,B,1,0,B,no\n");
        assert_eq!(parse_matches_str("t", &away_host).unwrap()[0].at_home(), (false, true));
    }

    #[test]
    fn sorted_by_date() {
        let head = SCHEMA.join(",");
        let text = format!("{head}\n2005-01-01,A,B,1,0,A,no\n2004-01-01,C,D,0,0,C,no\n");
        let m = parse_matches_str("t", &text).unwrap();
        assert_eq!(m[0].home_team.as_str(), "C");
    }
}
