use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{csv_field, file_label, parse_bool, parse_count, parse_date, read_table, read_to_string, yes_no};
use crate::error::{Error, Result};
use crate::ids::{PlayerId, TeamId};

const SCHEMA: &[&str] = &[
    "match_id",
    "segment_id",
    "start_min",
    "end_min",
    "home_players",
    "away_players",
    "home_red",
    "away_red",
    "home_goals",
    "away_goals",
    "match_date",
    "neutral",
    "venue_country",
];

/// A maximal match interval with a constant set of players on the pitch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub match_id: String,
    pub segment_id: u32,
    pub start_minute: u32,
    pub end_minute: u32,
    pub home_players: Vec<PlayerId>,
    pub away_players: Vec<PlayerId>,
    /// Red cards already shown when the segment starts.
    pub home_red_at_start: u32,
    pub away_red_at_start: u32,
    /// Goals scored during the segment.
    pub home_goals_during: u32,
    pub away_goals_during: u32,
    pub match_date: NaiveDate,
    pub neutral: bool,
    pub venue_country: TeamId,
}

impl SegmentRecord {
    pub fn minutes(&self) -> u32 {
        self.end_minute - self.start_minute
    }

    pub fn goal_difference(&self) -> i64 {
        i64::from(self.home_goals_during) - i64::from(self.away_goals_during)
    }

    fn validate(&self) -> Result<(), String> {
        if self.end_minute <= self.start_minute {
            return Err(format!(
                "segment ends at {} but starts at {}",
                self.end_minute, self.start_minute
            ));
        }
        let home: HashSet<&PlayerId> = self.home_players.iter().collect();
        if home.len() != self.home_players.len() {
            return Err("duplicate home player".into());
        }
        let mut away = HashSet::new();
        for p in &self.away_players {
            if home.contains(p) {
                return Err(format!("player `{p}` appears for both sides"));
            }
            if !away.insert(p) {
                return Err("duplicate away player".into());
            }
        }
        Ok(())
    }
}

pub fn parse_segments(path: impl AsRef<Path>) -> Result<Vec<SegmentRecord>> {
    let path = path.as_ref();
    parse_segments_str(&file_label(path), &read_to_string(path)?)
}

/// Parses segments, returning them ordered by match then segment ordinal.
pub fn parse_segments_str(file: &str, text: &str) -> Result<Vec<SegmentRecord>> {
    let (_, table) = read_table(file, text, &[SCHEMA])?;
    let mut out: Vec<(usize, SegmentRecord)> = Vec::with_capacity(table.rows.len());
    for (line, f) in table.rows {
        let seg = SegmentRecord {
            match_id: f[0].clone(),
            segment_id: parse_count(file, line, "segment id", &f[1])?,
            start_minute: parse_count(file, line, "start minute", &f[2])?,
            end_minute: parse_count(file, line, "end minute", &f[3])?,
            home_players: players(&f[4]),
            away_players: players(&f[5]),
            home_red_at_start: parse_count(file, line, "home red cards", &f[6])?,
            away_red_at_start: parse_count(file, line, "away red cards", &f[7])?,
            home_goals_during: parse_count(file, line, "home goals", &f[8])?,
            away_goals_during: parse_count(file, line, "away goals", &f[9])?,
            match_date: parse_date(file, line, &f[10])?,
            neutral: parse_bool(file, line, &f[11])?,
            venue_country: TeamId::new(&f[12]),
        };
        seg.validate().map_err(|m| Error::row(file, line, m))?;
        out.push((line, seg));
    }
    check_match_structure(file, &out)?;
    let mut segs: Vec<SegmentRecord> = out.into_iter().map(|(_, s)| s).collect();
    segs.sort_by(|a, b| (a.match_date, &a.match_id, a.segment_id).cmp(&(b.match_date, &b.match_id, b.segment_id)));
    Ok(segs)
}

fn players(s: &str) -> Vec<PlayerId> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(PlayerId::new)
        .collect()
}

/// Segments of one match must share match-level fields and tile time without gaps.
fn check_match_structure(file: &str, rows: &[(usize, SegmentRecord)]) -> Result<()> {
    let mut by_match: BTreeMap<&str, Vec<&(usize, SegmentRecord)>> = BTreeMap::new();
    for r in rows {
        by_match.entry(r.1.match_id.as_str()).or_default().push(r);
    }
    for segs in by_match.values_mut() {
        segs.sort_by_key(|(_, s)| s.segment_id);
        for pair in segs.windows(2) {
            let (_, a) = pair[0];
            let (line, b) = pair[1];
            if a.segment_id == b.segment_id {
                return Err(Error::row(file, *line, format!("duplicate segment {}/{}", b.match_id, b.segment_id)));
            }
            if b.start_minute != a.end_minute {
                return Err(Error::row(
                    file,
                    *line,
                    format!(
                        "segment {}/{} starts at {} but the previous one ends at {}",
                        b.match_id, b.segment_id, b.start_minute, a.end_minute
                    ),
                ));
            }
            if (a.match_date, a.neutral, &a.venue_country) != (b.match_date, b.neutral, &b.venue_country) {
                return Err(Error::row(
                    file,
                    *line,
                    format!("segment {}/{} disagrees on match date/venue", b.match_id, b.segment_id),
                ));
            }
        }
    }
    Ok(())
}

pub fn write_segments(segments: &[SegmentRecord]) -> String {
    let mut out = SCHEMA.join(",");
    out.push('\n');
    for s in segments {
        let join = |ps: &[PlayerId]| ps.iter().map(PlayerId::as_str).collect::<Vec<_>>().join(";");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            csv_field(&s.match_id),
            s.segment_id,
            s.start_minute,
            s.end_minute,
            csv_field(&join(&s.home_players)),
            csv_field(&join(&s.away_players)),
            s.home_red_at_start,
            s.away_red_at_start,
            s.home_goals_during,
            s.away_goals_during,
            s.match_date.format("%Y-%m-%d"),
            yes_no(s.neutral),
            csv_field(s.venue_country.as_str()),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str = "match_id,segment_id,start_min,end_min,home_players,away_players,home_red,away_red,home_goals,away_goals,match_date,neutral,venue_country\n";

    #[test]
    fn segment_from_lineup_table() {
        let text = format!(
            "{HEAD}58218,1,0,68,Lehmann;Tarnat,Seaman;Cole,0,0,1,1,2003-08-31,no,England\n\
             58218,2,68,76,Lehmann;Tarnat,Seaman;Cole,0,0,0,1,2003-08-31,no,England\n"
        );
        let s = parse_segments_str("t", &text).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].start_minute, s[0].end_minute), (0, 68));
        assert_eq!((s[0].home_goals_during, s[0].away_goals_during), (1, 1));
        assert_eq!(s[0].home_players[0].as_str(), "LEHMANN");
        assert_eq!(s[1].goal_difference(), -1);
    }

    #[test]
    fn gaps_between_segments_are_rejected() {
        let text = format!(
            "{HEAD}1,1,0,13,A,B,0,0,0,0,2003-09-10,no,X\n1,2,14,20,A,B,0,1,1,0,2003-09-10,no,X\n"
        );
        let err = parse_segments_str("t", &text).unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");
    }

    #[test]
    fn player_on_both_sides_is_rejected() {
        let text = format!("{HEAD}1,1,0,13,A;C,B;C,0,0,0,0,2003-09-10,no,X\n");
        assert!(parse_segments_str("t", &text).is_err());
    }

    #[test]
    fn empty_segment_is_rejected() {
        let text = format!("{HEAD}1,1,13,13,A,B,0,0,0,0,2003-09-10,no,X\n");
        assert!(parse_segments_str("t", &text).is_err());
    }
}
