//! CSV and JSON artifacts, with loaders for each format written here.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::Trajectory;
use crate::hopf::{Along, BoundaryPoint, ScanPoint};
use crate::lincheck::Classification;
use crate::network::REPORT_SCHEMA_VERSION;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unexpected CSV header {found:?}, expected {expected}")]
    Header {
        found: Vec<String>,
        expected: String,
    },
    #[error("line {line}: {msg}")]
    Row { line: usize, msg: String },
    #[error("schema version {found} is not supported (expected {expected})")]
    Schema { found: u32, expected: u32 },
}

/// Every JSON artifact is wrapped with its schema version and kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    pub data: T,
}

impl<T> Envelope<T> {
    pub fn new(kind: &str, seed: Option<u64>, data: T) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            kind: kind.to_string(),
            seed,
            data,
        }
    }
}

pub fn to_json<T: Serialize>(
    kind: &str,
    seed: Option<u64>,
    data: &T,
) -> Result<String, ExportError> {
    let mut s = serde_json::to_string_pretty(&Envelope::new(kind, seed, data))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<Envelope<T>, ExportError> {
    let env: Envelope<T> = serde_json::from_str(text)?;
    if env.schema_version != REPORT_SCHEMA_VERSION {
        return Err(ExportError::Schema {
            found: env.schema_version,
            expected: REPORT_SCHEMA_VERSION,
        });
    }
    Ok(env)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, ExportError> {
    let bytes = w
        .into_inner()
        .map_err(|e| ExportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn parse_f64(s: &str, line: usize) -> Result<f64, ExportError> {
    s.trim().parse().map_err(|_| ExportError::Row {
        line,
        msg: format!("not a number: {s:?}"),
    })
}

fn parse_opt(s: &str, line: usize) -> Result<Option<f64>, ExportError> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(s, line).map(Some)
    }
}

/// `t,<species...>` with one row per accepted step.
pub fn trajectory_csv(tr: &Trajectory) -> Result<String, ExportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend(tr.species.iter().cloned());
    w.write_record(&header)?;
    for (t, x) in tr.times.iter().zip(&tr.states) {
        let mut row = vec![fmt(*t)];
        row.extend(x.iter().map(|v| fmt(*v)));
        w.write_record(&row)?;
    }
    finish(w)
}

/// Reads a trajectory CSV back; dense output is not stored and comes back empty.
pub fn read_trajectory_csv(text: &str) -> Result<Trajectory, ExportError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header.first().map(String::as_str) != Some("t") || header.len() < 2 {
        return Err(ExportError::Header {
            found: header,
            expected: "t,<species...>".into(),
        });
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        times.push(parse_f64(&rec[0], line)?);
        states.push(
            rec.iter()
                .skip(1)
                .map(|s| parse_f64(s, line))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    Ok(Trajectory {
        species: header[1..].to_vec(),
        times,
        states,
        dense: Vec::new(),
    })
}

pub const SCAN_HEADER: [&str; 5] = ["p1", "p2", "class", "hval", "L1"];
pub const BOUNDARY_HEADER: [&str; 5] = ["along", "p1", "p2", "hval", "L1"];

fn check_header(r: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<(), ExportError> {
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != expected {
        return Err(ExportError::Header {
            found: header,
            expected: expected.join(","),
        });
    }
    Ok(())
}

pub fn scan_csv(points: &[ScanPoint]) -> Result<String, ExportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SCAN_HEADER)?;
    for p in points {
        let class = p.class.map_or("undefined", |c| c.as_str());
        w.write_record([
            fmt(p.p1),
            fmt(p.p2),
            class.to_string(),
            fmt(p.hval),
            fmt_opt(p.l1),
        ])?;
    }
    finish(w)
}

fn parse_class(s: &str, line: usize) -> Result<Option<Classification>, ExportError> {
    Ok(Some(match s {
        "stable" => Classification::Stable,
        "hopf" => Classification::HopfBoundary,
        "unstable" => Classification::Unstable,
        "degenerate" => Classification::Degenerate,
        "undefined" => return Ok(None),
        other => {
            return Err(ExportError::Row {
                line,
                msg: format!("unknown class {other:?}"),
            })
        }
    }))
}

pub fn read_scan_csv(text: &str) -> Result<Vec<ScanPoint>, ExportError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    check_header(&mut r, &SCAN_HEADER)?;
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let line = i + 2;
            Ok(ScanPoint {
                p1: parse_f64(&rec[0], line)?,
                p2: parse_f64(&rec[1], line)?,
                class: parse_class(&rec[2], line)?,
                hval: parse_f64(&rec[3], line)?,
                l1: parse_opt(&rec[4], line)?,
            })
        })
        .collect()
}

pub fn boundary_csv(points: &[BoundaryPoint]) -> Result<String, ExportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BOUNDARY_HEADER)?;
    for p in points {
        let along = match p.along {
            Along::P1 => "p1",
            Along::P2 => "p2",
        };
        w.write_record([
            along.to_string(),
            fmt(p.p1),
            fmt(p.p2),
            fmt(p.hval),
            fmt_opt(p.l1),
        ])?;
    }
    finish(w)
}

pub fn read_boundary_csv(text: &str) -> Result<Vec<BoundaryPoint>, ExportError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    check_header(&mut r, &BOUNDARY_HEADER)?;
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let line = i + 2;
            let along = match &rec[0] {
                "p1" => Along::P1,
                "p2" => Along::P2,
                other => {
                    return Err(ExportError::Row {
                        line,
                        msg: format!("unknown axis {other:?}"),
                    })
                }
            };
            Ok(BoundaryPoint {
                along,
                p1: parse_f64(&rec[1], line)?,
                p2: parse_f64(&rec[2], line)?,
                hval: parse_f64(&rec[3], line)?,
                l1: parse_opt(&rec[4], line)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_round_trip() {
        let pts = vec![
            ScanPoint {
                p1: 0.1,
                p2: 1.0 / 3.0,
                class: Some(Classification::Stable),
                hval: 2.5e-3,
                l1: None,
            },
            ScanPoint {
                p1: 0.2,
                p2: 0.5,
                class: None,
                hval: f64::NAN,
                l1: None,
            },
            ScanPoint {
                p1: 0.3,
                p2: 0.7,
                class: Some(Classification::HopfBoundary),
                hval: 0.0,
                l1: Some(-0.25),
            },
        ];
        let back = read_scan_csv(&scan_csv(&pts).unwrap()).unwrap();
        assert_eq!(back[0], pts[0]);
        assert!(back[1].hval.is_nan() && back[1].class.is_none());
        assert_eq!(back[2], pts[2]);
        assert!(read_boundary_csv("x,y\n1,2\n").is_err());
    }

    #[test]
    fn envelope_version_checked() {
        let s = to_json("demo", Some(7), &vec![1, 2]).unwrap();
        let env: Envelope<Vec<i32>> = from_json(&s).unwrap();
        assert_eq!(
            (env.kind.as_str(), env.seed, env.data),
            ("demo", Some(7), vec![1, 2])
        );
        let bad = s.replace("\"schema_version\": 1", "\"schema_version\": 99");
        assert!(matches!(
            from_json::<Vec<i32>>(&bad),
            Err(ExportError::Schema { .. })
        ));
    }
}
