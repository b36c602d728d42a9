use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{csv_field, file_label, parse_real, read_dynamic_table, read_to_string};
use crate::error::{Error, Result};
use crate::ids::TeamId;

/// Per-team covariates, in file column order.
pub const BASE_COVARIATES: [&str; 16] = [
    "gdp_ratio",
    "population_ratio",
    "host",
    "neighbor",
    "log_market_value",
    "fifa_rank",
    "uefa_points",
    "uefa_places",
    "max_teammates",
    "second_max_teammates",
    "age_distance",
    "cl_players",
    "el_players",
    "legionnaires",
    "coach_age_distance",
    "coach_nationality",
];

pub const DUMMY_COVARIATES: [&str; 3] = ["host", "neighbor", "coach_nationality"];

/// Covariates counted over the squad; rescaled to a 23-player squad on ingestion.
pub const COUNT_COVARIATES: [&str; 5] = [
    "max_teammates",
    "second_max_teammates",
    "cl_players",
    "el_players",
    "legionnaires",
];

/// Rating features filled from the ranking modules.
pub const HYBRID_FEATURES: [&str; 4] = [
    "hist_ability",
    "bookmaker_log_ability",
    "avg_pm",
    "missing_pm_players",
];

pub const REFERENCE_SQUAD_SIZE: f64 = 23.0;

const SQUAD_SIZE: &str = "squad_size";

/// Covariates of one team at one tournament edition.
///
/// Squad-count covariates are stored on the 23-player scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateRecord {
    pub tournament_year: i32,
    pub team: TeamId,
    pub values: BTreeMap<String, f64>,
}

impl CovariateRecord {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

pub fn parse_covariates(path: impl AsRef<Path>) -> Result<Vec<CovariateRecord>> {
    let path = path.as_ref();
    parse_covariates_str(&file_label(path), &read_to_string(path)?)
}

pub fn parse_covariates_str(file: &str, text: &str) -> Result<Vec<CovariateRecord>> {
    let (header, table) = read_dynamic_table(file, text)?;
    let mut expected: Vec<&str> = vec!["year", "team"];
    expected.extend(BASE_COVARIATES);
    expected.push(SQUAD_SIZE);
    let fixed = expected.len();
    let extra_ok = header.len() >= fixed
        && header[..fixed].iter().zip(&expected).all(|(a, b)| a == b)
        && header[fixed..].iter().all(|h| HYBRID_FEATURES.contains(&h.as_str()))
        && {
            let mut e = header[fixed..].to_vec();
            e.sort();
            e.dedup();
            e.len() == header.len() - fixed
        };
    if !extra_ok {
        return Err(Error::Schema {
            file: file.to_string(),
            expected: format!("{}[,{}]", expected.join(","), HYBRID_FEATURES.join("|")),
            found: header.join(","),
        });
    }
    let mut out = Vec::with_capacity(table.rows.len());
    let mut seen = std::collections::HashSet::new();
    for (line, f) in table.rows {
        if f.len() != header.len() {
            return Err(Error::row(file, line, format!("expected {} fields, found {}", header.len(), f.len())));
        }
        let year: i32 = f[0]
            .parse()
            .map_err(|_| Error::row(file, line, format!("unparsable year `{}`", f[0])))?;
        let team = TeamId::new(&f[1]);
        if !seen.insert((year, team.clone())) {
            return Err(Error::row(file, line, format!("duplicate covariates for {team} {year}")));
        }
        let squad = parse_real(file, line, SQUAD_SIZE, &f[fixed - 1])?;
        if squad <= 0.0 {
            return Err(Error::row(file, line, "squad size must be positive"));
        }
        let scale = REFERENCE_SQUAD_SIZE / squad;
        let mut values = BTreeMap::new();
        for (name, raw) in BASE_COVARIATES.iter().zip(&f[2..fixed - 1]) {
            let mut v = parse_real(file, line, name, raw)?;
            if DUMMY_COVARIATES.contains(name) && v != 0.0 && v != 1.0 {
                return Err(Error::row(file, line, format!("dummy `{name}` must be 0 or 1, found {v}")));
            }
            if COUNT_COVARIATES.contains(name) {
                v *= scale;
            }
            values.insert(name.to_string(), v);
        }
        for (name, raw) in header[fixed..].iter().zip(&f[fixed..]) {
            values.insert(name.clone(), parse_real(file, line, name, raw)?);
        }
        out.push(CovariateRecord {
            tournament_year: year,
            team,
            values,
        });
    }
    Ok(out)
}

/// Writes records on the 23-player scale (`squad_size` = 23), with the
/// hybrid columns present in every record.
pub fn write_covariates(records: &[CovariateRecord]) -> String {
    let hybrid: Vec<&str> = HYBRID_FEATURES
        .iter()
        .copied()
        .filter(|h| !records.is_empty() && records.iter().all(|r| r.values.contains_key(*h)))
        .collect();
    let mut header: Vec<&str> = vec!["year", "team"];
    header.extend(BASE_COVARIATES);
    header.push(SQUAD_SIZE);
    header.extend(&hybrid);
    let mut out = header.join(",");
    out.push('\n');
    for r in records {
        let mut fields = vec![r.tournament_year.to_string(), csv_field(r.team.as_str())];
        for name in BASE_COVARIATES {
            fields.push(r.values.get(name).copied().unwrap_or(0.0).to_string());
        }
        fields.push(REFERENCE_SQUAD_SIZE.to_string());
        for name in &hybrid {
            fields.push(r.values[*name].to_string());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(extra: &str) -> String {
        format!("year,team,{},squad_size{extra}\n", BASE_COVARIATES.join(","))
    }

    fn row(year: i32, team: &str, squad: u32, host: f64) -> String {
        // max_teammates = 13, cl_players = 26, everything else 1 except host
        let vals: Vec<String> = BASE_COVARIATES
            .iter()
            .map(|n| match *n {
                "host" => host.to_string(),
                "max_teammates" => "13".into(),
                "cl_players" => "26".into(),
                _ => "1".into(),
            })
            .collect();
        format!("{year},{team},{},{squad}", vals.join(","))
    }

    #[test]
    fn squad_counts_rescaled_to_reference_size() {
        let text = format!("{}{}\n{}\n", header(""), row(2020, "FRA", 26, 0.0), row(2016, "FRA", 23, 1.0));
        let recs = parse_covariates_str("t", &text).unwrap();
        assert!((recs[0].get("max_teammates").unwrap() - 13.0 * 23.0 / 26.0).abs() < 1e-12);
        assert!((recs[0].get("cl_players").unwrap() - 23.0).abs() < 1e-12);
        assert_eq!(recs[0].get("gdp_ratio"), Some(1.0));
        assert_eq!(recs[1].get("max_teammates"), Some(13.0));
    }

    #[test]
    fn dummies_must_be_binary() {
        let text = format!("{}{}\n", header(""), row(2020, "FRA", 23, 0.5));
        assert!(parse_covariates_str("t", &text).is_err());
    }

    #[test]
    fn hybrid_columns_are_optional() {
        let text = format!("{}{},0.4,-0.2\n", header(",hist_ability,avg_pm"), row(2020, "FRA", 23, 0.0));
        let recs = parse_covariates_str("t", &text).unwrap();
        assert_eq!(recs[0].get("hist_ability"), Some(0.4));
        assert_eq!(recs[0].get("avg_pm"), Some(-0.2));
        assert_eq!(recs[0].get("bookmaker_log_ability"), None);
        let bad = format!("{}{},0.4\n", header(",fifa_points"), row(2020, "FRA", 23, 0.0));
        assert!(parse_covariates_str("t", &bad).is_err());
    }
}
