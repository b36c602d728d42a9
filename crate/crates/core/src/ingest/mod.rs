//! Parsing and validation of every input file.
//!
//! All tabular inputs are comma-separated UTF-8 with a mandatory header line.
//! Lines starting with `#` are comments (output files use them for metadata).
//! A file either parses completely or yields an error naming the offending row.

mod covariates;
mod matches;
mod odds;
mod results;
mod segments;
mod tournament;

use std::fs;
use std::path::Path;

use chrono::NaiveDate;

pub use covariates::{
    parse_covariates, parse_covariates_str, write_covariates, CovariateRecord, BASE_COVARIATES,
    COUNT_COVARIATES, DUMMY_COVARIATES, HYBRID_FEATURES, REFERENCE_SQUAD_SIZE,
};
pub use matches::{parse_matches, parse_matches_str, write_matches, MatchRecord};
pub use odds::{parse_odds, parse_odds_str, write_odds, OddsQuote, OddsTable};
pub use results::{
    parse_pool, parse_pool_str, parse_results, parse_results_str, parse_squads, parse_squads_str,
    parse_threeway, parse_threeway_str, write_results, PoolEntry, Squads, Stage, ThreeWayOdds,
    TournamentMatch,
};
pub use segments::{parse_segments, parse_segments_str, write_segments, SegmentRecord};
pub use tournament::{
    parse_tournament_spec, parse_tournament_spec_str, Fixture, Group, Slot, TournamentSpec,
};

use crate::error::{Error, Result};

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn file_label(path: &Path) -> String {
    path.display().to_string()
}

/// Parsed CSV body: `(line number, fields)` per data row.
pub(crate) struct Table {
    pub rows: Vec<(usize, Vec<String>)>,
}

/// Reads CSV text, checking the header against one of the accepted schemas.
/// Returns the index of the matched schema alongside the rows.
pub(crate) fn read_table(file: &str, text: &str, schemas: &[&[&str]]) -> Result<(usize, Table)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::row(file, 1, e.to_string()))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let schema = schemas
        .iter()
        .position(|s| s.len() == header.len() && s.iter().zip(&header).all(|(a, b)| a == b))
        .ok_or_else(|| Error::Schema {
            file: file.to_string(),
            expected: schemas
                .iter()
                .map(|s| s.join(","))
                .collect::<Vec<_>>()
                .join("] or ["),
            found: header.join(","),
        })?;
    let width = schemas[schema].len();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::row(file, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(Error::row(
                file,
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok((schema, Table { rows }))
}

/// Header for a table whose columns depend on data (e.g. covariates).
pub(crate) fn read_dynamic_table(file: &str, text: &str) -> Result<(Vec<String>, Table)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::row(file, 1, e.to_string()))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::row(file, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok((header, Table { rows }))
}

pub(crate) fn parse_date(file: &str, line: usize, s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| Error::row(file, line, format!("unparsable date `{s}`")))
}

pub(crate) fn parse_bool(file: &str, line: usize, s: &str) -> Result<bool> {
    match s.to_ascii_lowercase().as_str() {
        "yes" | "true" | "1" | "y" => Ok(true),
        "no" | "false" | "0" | "n" => Ok(false),
        _ => Err(Error::row(file, line, format!("expected yes/no, found `{s}`"))),
    }
}

pub(crate) fn parse_count(file: &str, line: usize, what: &str, s: &str) -> Result<u32> {
    match s.parse::<i64>() {
        Ok(v) if v < 0 => Err(Error::row(file, line, format!("negative {what} `{s}`"))),
        Ok(v) => u32::try_from(v).map_err(|_| Error::row(file, line, format!("{what} too large"))),
        Err(_) => Err(Error::row(file, line, format!("unparsable {what} `{s}`"))),
    }
}

pub(crate) fn parse_real(file: &str, line: usize, what: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::row(file, line, format!("unparsable {what} `{s}`")))?;
    if !v.is_finite() {
        return Err(Error::row(file, line, format!("non-finite {what} `{s}`")));
    }
    Ok(v)
}

pub(crate) fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Quotes a CSV field when needed.
pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
