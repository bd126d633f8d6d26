//! Writers for the CSV and JSON outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CSV_HEADER: [&str; 10] = [
    "L_total_km",
    "L_a_km",
    "L_b_km",
    "protocol",
    "regime",
    "rate",
    "key_length",
    "e1ph",
    "s1z",
    "s0z",
];

/// Shortest decimal that parses back to the same `f64`; exponent notation
/// outside `[1e-4, 1e15)`.
pub fn fmt_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// One CSV row. Columns that do not apply to the regime are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    #[serde(rename = "L_total_km")]
    pub l_total_km: f64,
    #[serde(rename = "L_a_km")]
    pub l_a_km: f64,
    #[serde(rename = "L_b_km")]
    pub l_b_km: f64,
    pub protocol: String,
    pub regime: String,
    pub rate: f64,
    pub key_length: Option<f64>,
    pub e1ph: f64,
    pub s1z: Option<f64>,
    pub s0z: Option<f64>,
}

impl ScanRow {
    fn record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        vec![
            fmt_float(self.l_total_km),
            fmt_float(self.l_a_km),
            fmt_float(self.l_b_km),
            self.protocol.clone(),
            self.regime.clone(),
            fmt_float(self.rate),
            opt(self.key_length),
            fmt_float(self.e1ph),
            opt(self.s1z),
            opt(self.s0z),
        ]
    }
}

pub fn csv_string(rows: &[ScanRow]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record(r.record()).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

pub fn read_csv(text: &str) -> Result<Vec<ScanRow>, CliError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| CliError::Io(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(CliError::Io(format!("unexpected CSV header {header:?}")));
    }
    r.deserialize()
        .collect::<Result<Vec<ScanRow>, _>>()
        .map_err(|e| CliError::Io(e.to_string()))
}

pub fn json_string<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// `<dir>/<stem>.counts.json` next to `report`.
pub fn counts_path(report: &Path) -> PathBuf {
    let stem = report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    report.with_file_name(format!("{stem}.counts.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.0, 1.0, 150.0, 2.5e-7, 1.234_567_890_123_456_7e-12, 0.1 + 0.2, 3e20, -4.2e-9] {
            let s = fmt_float(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt_float(100.0), "100");
        assert_eq!(fmt_float(1e-10), "1e-10");
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            ScanRow {
                l_total_km: 100.0,
                l_a_km: 25.0,
                l_b_km: 75.0,
                protocol: "asymmetric".into(),
                regime: "finite".into(),
                rate: 1.234e-9,
                key_length: Some(123_400.000_000_1),
                e1ph: 0.031,
                s1z: Some(5.5e6),
                s0z: Some(2.0),
            },
            ScanRow {
                protocol: "symmetric".into(),
                regime: "asymptotic".into(),
                key_length: None,
                s1z: None,
                s0z: None,
                ..rows_first()
            },
        ];
        let text = csv_string(&rows).unwrap();
        assert!(text.starts_with("L_total_km,L_a_km,L_b_km,protocol,regime,rate,key_length,e1ph,s1z,s0z\n"));
        assert_eq!(read_csv(&text).unwrap(), rows);
    }

    fn rows_first() -> ScanRow {
        ScanRow {
            l_total_km: 0.0,
            l_a_km: 0.0,
            l_b_km: 0.0,
            protocol: String::new(),
            regime: String::new(),
            rate: 0.0,
            key_length: None,
            e1ph: 0.5,
            s1z: None,
            s0z: None,
        }
    }

    #[test]
    fn empty_csv_is_header_only() {
        let text = csv_string(&[]).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(read_csv(&text).unwrap().is_empty());
    }

    #[test]
    fn counts_file_sits_next_to_report() {
        assert_eq!(counts_path(Path::new("out/run.json")), PathBuf::from("out/run.counts.json"));
    }
}
