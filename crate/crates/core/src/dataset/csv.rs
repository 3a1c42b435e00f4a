//! Minimal CSV reader/writer for the two event tables.
//!
//! Fields are plain comma-separated tokens. Quoting is not supported, so a
//! field can never contain a comma; a `"` anywhere is rejected.

use std::collections::HashSet;

use chrono::NaiveDate;
use thiserror::Error;

use super::{
    Arm, Covariate, CovariateKind, CovariateSchema, DependentEvent, GeoPoint, InterventionEvent,
};
use crate::canonical::format_float;

const INTERVENTION_HEADER: [&str; 5] = ["id", "date", "lon", "lat", "arm"];
const DEPENDENT_HEADER: [&str; 4] = ["id", "date", "lon", "lat"];
/// Names taken by derived matching variables.
const RESERVED_NAMES: [&str; 2] = ["n_pre", "trend"];

/// `row` is the 1-based data row (the header is row 0).
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("input is not valid UTF-8")]
    NotUtf8,
    #[error("MalformedHeader: {0}")]
    MalformedHeader(String),
    #[error("row {row}: expected {expected} fields, found {found}")]
    FieldCount {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: quoted fields are not supported")]
    Quoted { row: usize },
    #[error("row {row}: empty id")]
    EmptyId { row: usize },
    #[error("BadDate: row {row}")]
    BadDate { row: usize },
    #[error("row {row}: `{field}` is not a valid coordinate")]
    BadCoordinate { row: usize, field: &'static str },
    #[error("BadArm: row {row}")]
    BadArm { row: usize },
    #[error("NonNumericCovariate: row {row}, column `{column}`")]
    NonNumericCovariate { row: usize, column: String },
    #[error("DuplicateId: `{0}`")]
    DuplicateId(String),
}

impl ParseError {
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::NotUtf8 => "NotUtf8",
            ParseError::MalformedHeader(_) => "MalformedHeader",
            ParseError::FieldCount { .. } => "FieldCount",
            ParseError::Quoted { .. } => "Quoted",
            ParseError::EmptyId { .. } => "EmptyId",
            ParseError::BadDate { .. } => "BadDate",
            ParseError::BadCoordinate { .. } => "BadCoordinate",
            ParseError::BadArm { .. } => "BadArm",
            ParseError::NonNumericCovariate { .. } => "NonNumericCovariate",
            ParseError::DuplicateId(_) => "DuplicateId",
        }
    }
}

struct Table<'a> {
    header: Vec<&'a str>,
    rows: Vec<(usize, Vec<&'a str>)>,
}

fn split_table(bytes: &[u8]) -> Result<Table<'_>, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ParseError::NotUtf8)?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .enumerate();
    let header_line = match lines.next() {
        Some((_, l)) if !l.trim().is_empty() => l,
        _ => return Err(ParseError::MalformedHeader("missing header".into())),
    };
    if header_line.contains('"') {
        return Err(ParseError::MalformedHeader("quoted header".into()));
    }
    let header: Vec<&str> = header_line.split(',').map(str::trim).collect();
    let mut rows = Vec::new();
    for (row, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if line.contains('"') {
            return Err(ParseError::Quoted { row });
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != header.len() {
            return Err(ParseError::FieldCount {
                row,
                expected: header.len(),
                found: fields.len(),
            });
        }
        rows.push((row, fields));
    }
    Ok(Table { header, rows })
}

fn check_prefix(header: &[&str], expected: &[&str]) -> Result<(), ParseError> {
    if header.len() < expected.len() || header[..expected.len()] != *expected {
        return Err(ParseError::MalformedHeader(format!(
            "expected header to start with `{}`, found `{}`",
            expected.join(","),
            header.join(",")
        )));
    }
    Ok(())
}

fn parse_date(s: &str, row: usize) -> Result<NaiveDate, ParseError> {
    // chrono accepts unpadded fields; the format is fixed-width.
    if s.len() != 10 {
        return Err(ParseError::BadDate { row });
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| ParseError::BadDate { row })
}

fn parse_point(lon: &str, lat: &str, row: usize) -> Result<GeoPoint, ParseError> {
    let lon_v: f64 = lon
        .parse()
        .map_err(|_| ParseError::BadCoordinate { row, field: "lon" })?;
    let lat_v: f64 = lat
        .parse()
        .map_err(|_| ParseError::BadCoordinate { row, field: "lat" })?;
    if !lon_v.is_finite() || !(-180.0..=180.0).contains(&lon_v) {
        return Err(ParseError::BadCoordinate { row, field: "lon" });
    }
    if !lat_v.is_finite() || !(-90.0..=90.0).contains(&lat_v) {
        return Err(ParseError::BadCoordinate { row, field: "lat" });
    }
    Ok(GeoPoint {
        lon: lon_v,
        lat: lat_v,
    })
}

fn parse_id<'a>(s: &'a str, row: usize, seen: &mut HashSet<&'a str>) -> Result<String, ParseError> {
    if s.is_empty() {
        return Err(ParseError::EmptyId { row });
    }
    if !seen.insert(s) {
        return Err(ParseError::DuplicateId(s.to_string()));
    }
    Ok(s.to_string())
}

/// Parses `id,date,lon,lat,arm,<covariate...>`. Covariate kinds are inferred:
/// a column whose values all lie in {0, 1} is binary.
pub fn parse_interventions(
    bytes: &[u8],
) -> Result<(Vec<InterventionEvent>, CovariateSchema), ParseError> {
    let table = split_table(bytes)?;
    check_prefix(&table.header, &INTERVENTION_HEADER)?;
    let cov_names = &table.header[INTERVENTION_HEADER.len()..];
    let mut unique = HashSet::new();
    for name in cov_names {
        if name.is_empty() {
            return Err(ParseError::MalformedHeader("empty covariate name".into()));
        }
        if INTERVENTION_HEADER.contains(name) || RESERVED_NAMES.contains(name) {
            return Err(ParseError::MalformedHeader(format!(
                "covariate name `{name}` is reserved"
            )));
        }
        if !unique.insert(*name) {
            return Err(ParseError::MalformedHeader(format!(
                "duplicate covariate `{name}`"
            )));
        }
    }

    let mut seen = HashSet::new();
    let mut events = Vec::with_capacity(table.rows.len());
    for (row, f) in &table.rows {
        let row = *row;
        let id = parse_id(f[0], row, &mut seen)?;
        let date = parse_date(f[1], row)?;
        let loc = parse_point(f[2], f[3], row)?;
        let arm = match f[4].to_ascii_lowercase().as_str() {
            "treatment" => Arm::Treatment,
            "control" => Arm::Control,
            _ => return Err(ParseError::BadArm { row }),
        };
        let covariates = cov_names
            .iter()
            .zip(&f[INTERVENTION_HEADER.len()..])
            .map(|(name, v)| match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(ParseError::NonNumericCovariate {
                    row,
                    column: name.to_string(),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        events.push(InterventionEvent {
            id,
            date,
            loc,
            arm,
            covariates,
            truncated: false,
        });
    }

    let columns = cov_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let binary = events
                .iter()
                .all(|e| e.covariates[j] == 0.0 || e.covariates[j] == 1.0);
            Covariate {
                name: name.to_string(),
                kind: if binary {
                    CovariateKind::Binary
                } else {
                    CovariateKind::Continuous
                },
            }
        })
        .collect();
    Ok((events, CovariateSchema { columns }))
}

/// Parses `id,date,lon,lat`.
pub fn parse_dependent(bytes: &[u8]) -> Result<Vec<DependentEvent>, ParseError> {
    let table = split_table(bytes)?;
    if table.header != DEPENDENT_HEADER {
        return Err(ParseError::MalformedHeader(format!(
            "expected `{}`, found `{}`",
            DEPENDENT_HEADER.join(","),
            table.header.join(",")
        )));
    }
    let mut seen = HashSet::new();
    table
        .rows
        .iter()
        .map(|(row, f)| {
            Ok(DependentEvent {
                id: parse_id(f[0], *row, &mut seen)?,
                date: parse_date(f[1], *row)?,
                loc: parse_point(f[2], f[3], *row)?,
            })
        })
        .collect()
}

pub fn write_interventions_csv(events: &[InterventionEvent], schema: &CovariateSchema) -> String {
    let mut out = INTERVENTION_HEADER.join(",");
    for name in schema.names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for e in events {
        out.push_str(&format!(
            "{},{},{},{},{}",
            e.id,
            e.date.format("%Y-%m-%d"),
            format_float(e.loc.lon),
            format_float(e.loc.lat),
            e.arm.as_str()
        ));
        for v in &e.covariates {
            out.push(',');
            out.push_str(&format_float(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_dependent_csv(events: &[DependentEvent]) -> String {
    let mut out = DEPENDENT_HEADER.join(",");
    out.push('\n');
    for e in events {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.id,
            e.date.format("%Y-%m-%d"),
            format_float(e.loc.lon),
            format_float(e.loc.lat)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_treatment_row() {
        let (ev, schema) =
            parse_interventions(b"id,date,lon,lat,arm\nI1,2010-01-05,65.0,33.0,treatment").unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].arm, Arm::Treatment);
        assert_eq!(ev[0].date, NaiveDate::from_ymd_opt(2010, 1, 5).unwrap());
        assert!(schema.is_empty());
    }

    #[test]
    fn binary_covariates_inferred() {
        let csv = "id,date,lon,lat,arm,road_nearby,pashtun_region,hazara_region,is_urban\n\
                   I1,2010-01-05,65.0,33.0,treatment,1,0,0,1\n\
                   I2,2010-02-05,66.0,34.0,CONTROL,0,1,0,0\n";
        let (ev, schema) = parse_interventions(csv.as_bytes()).unwrap();
        assert_eq!(ev[1].arm, Arm::Control);
        let names: Vec<_> = schema.names().collect();
        assert_eq!(
            names,
            ["road_nearby", "pashtun_region", "hazara_region", "is_urban"]
        );
        assert!(schema
            .columns
            .iter()
            .all(|c| c.kind == CovariateKind::Binary));
    }

    #[test]
    fn continuous_inferred_when_outside_01() {
        let csv = "id,date,lon,lat,arm,pop\nI1,2010-01-05,65,33,treatment,0\nI2,2010-01-05,65,33,control,0.5\n";
        let (_, schema) = parse_interventions(csv.as_bytes()).unwrap();
        assert_eq!(schema.columns[0].kind, CovariateKind::Continuous);
    }

    #[test]
    fn rejected_tokens() {
        let bad_arm = parse_interventions(b"id,date,lon,lat,arm\nI1,2010-01-05,65,33,treated");
        assert_eq!(bad_arm.unwrap_err(), ParseError::BadArm { row: 1 });

        let bad_date = parse_interventions(b"id,date,lon,lat,arm\nI1,2010-13-05,65,33,control");
        assert_eq!(bad_date.unwrap_err(), ParseError::BadDate { row: 1 });

        let short_date = parse_interventions(b"id,date,lon,lat,arm\nI1,2010-1-5,65,33,control");
        assert_eq!(short_date.unwrap_err(), ParseError::BadDate { row: 1 });

        let dup = parse_interventions(
            b"id,date,lon,lat,arm\nI1,2010-01-05,65,33,control\nI1,2010-01-06,65,33,control",
        );
        assert_eq!(dup.unwrap_err(), ParseError::DuplicateId("I1".into()));

        let nn = parse_interventions(b"id,date,lon,lat,arm,x\nI1,2010-01-05,65,33,control,abc");
        assert_eq!(
            nn.unwrap_err(),
            ParseError::NonNumericCovariate {
                row: 1,
                column: "x".into()
            }
        );
        let inf = parse_interventions(b"id,date,lon,lat,arm,x\nI1,2010-01-05,65,33,control,inf");
        assert_eq!(inf.unwrap_err().code(), "NonNumericCovariate");
    }

    #[test]
    fn header_errors() {
        assert_eq!(
            parse_interventions(b"id,date,lat,lon,arm\n")
                .unwrap_err()
                .code(),
            "MalformedHeader"
        );
        assert_eq!(
            parse_interventions(b"id,date,lon,lat,arm,trend\n")
                .unwrap_err()
                .code(),
            "MalformedHeader"
        );
        assert_eq!(
            parse_interventions(b"id,date,lon,lat,arm,a,a\n")
                .unwrap_err()
                .code(),
            "MalformedHeader"
        );
        assert_eq!(parse_dependent(b"").unwrap_err().code(), "MalformedHeader");
        assert_eq!(
            parse_dependent(b"id,date,lon,lat,extra\n")
                .unwrap_err()
                .code(),
            "MalformedHeader"
        );
    }

    #[test]
    fn embedded_comma_and_quotes_rejected() {
        let r = parse_dependent(b"id,date,lon,lat\nD1,2010-01-01,65,33,\n");
        assert_eq!(r.unwrap_err().code(), "FieldCount");
        let r = parse_dependent(b"id,date,lon,lat\n\"D,1\",2010-01-01,65,33\n");
        assert_eq!(r.unwrap_err(), ParseError::Quoted { row: 1 });
    }

    #[test]
    fn dependent_basics() {
        assert!(parse_dependent(b"id,date,lon,lat\n").unwrap().is_empty());
        assert!(parse_dependent(b"id,date,lon,lat").unwrap().is_empty());

        let r = parse_dependent(b"id,date,lon,lat\nD1,2010-01-01,65,91.0\n");
        assert_eq!(
            r.unwrap_err(),
            ParseError::BadCoordinate {
                row: 1,
                field: "lat"
            }
        );

        let ev = parse_dependent(
            b"id,date,lon,lat\r\nD3,2010-01-01,65,33\r\nD1,2010-01-02,-65.5,-33\r\nD2,2010-01-03,0,0\r\n",
        )
        .unwrap();
        let ids: Vec<_> = ev.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["D3", "D1", "D2"]);
        assert_eq!(
            ev[1].loc,
            GeoPoint {
                lon: -65.5,
                lat: -33.0
            }
        );
    }

    fn valid_rows() -> Vec<[String; 7]> {
        (0..6)
            .map(|i| {
                [
                    format!("I{i}"),
                    format!("2010-03-{:02}", i + 1),
                    format!("{}", 60.0 + i as f64 * 0.5),
                    format!("{}", 30.0 + i as f64 * 0.25),
                    if i % 2 == 0 { "treatment" } else { "control" }.to_string(),
                    format!("{}", i % 2),
                    format!("{}", i as f64 * 1.5),
                ]
            })
            .collect()
    }

    fn render(rows: &[[String; 7]]) -> String {
        let mut s = String::from("id,date,lon,lat,arm,flag,level\n");
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    proptest! {
        #[test]
        fn schema_inference_is_order_independent(perm in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle()) {
            let rows = valid_rows();
            let shuffled: Vec<_> = perm.iter().map(|&i| rows[i].clone()).collect();
            let (_, a) = parse_interventions(render(&rows).as_bytes()).unwrap();
            let (_, b) = parse_interventions(render(&shuffled).as_bytes()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn corrupting_one_field_yields_its_named_error(row in 0usize..6, field in 0usize..7) {
            let mut rows = valid_rows();
            let (bad, code) = match field {
                0 => (rows[(row + 1) % 6][0].clone(), "DuplicateId"),
                1 => ("2010-02-30".to_string(), "BadDate"),
                2 => ("181".to_string(), "BadCoordinate"),
                3 => ("-90.5".to_string(), "BadCoordinate"),
                4 => ("treated".to_string(), "BadArm"),
                _ => ("n/a".to_string(), "NonNumericCovariate"),
            };
            rows[row][field] = bad;
            let err = parse_interventions(render(&rows).as_bytes()).unwrap_err();
            prop_assert_eq!(err.code(), code);
        }

        #[test]
        fn write_then_parse_round_trips(
            lons in proptest::collection::vec(-180.0f64..180.0, 1..20),
            cont in proptest::collection::vec(-1e3f64..1e3, 20),
        ) {
            let csv = {
                let mut s = String::from("id,date,lon,lat,arm,flag,level\n");
                for (i, lon) in lons.iter().enumerate() {
                    s.push_str(&format!(
                        "E{i},2011-07-{:02},{},{},{},{},{}\n",
                        i % 28 + 1,
                        format_float(*lon),
                        format_float(lon / 2.0),
                        if i % 3 == 0 { "treatment" } else { "control" },
                        i % 2,
                        format_float(cont[i]),
                    ));
                }
                s
            };
            let (ev, schema) = parse_interventions(csv.as_bytes()).unwrap();
            let written = write_interventions_csv(&ev, &schema);
            let (ev2, schema2) = parse_interventions(written.as_bytes()).unwrap();
            prop_assert_eq!(&ev, &ev2);
            prop_assert_eq!(schema, schema2);
            prop_assert_eq!(written, csv);
        }
    }
}
