//! Supply-chain indicator records and the indicator CSV schema.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Header of the indicator CSV, in column order.
pub const INDICATOR_HEADER: [&str; 14] = [
    "stage",
    "quality_p1",
    "material_p2",
    "logistic_p3",
    "purchase_p4",
    "order_plan_l1",
    "order_speed_l2",
    "delivery_c1",
    "volume_c2",
    "node_satisfaction_c4",
    "outbound_error_s1",
    "damage_s2",
    "turnover_s3",
    "zero_inventory",
];

/// Nine-stage indicator table over a 30-day window, shipped with the crate.
pub const REFERENCE_INDICATORS_CSV: &str = include_str!("../data/indicators_30d.csv");

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("input is empty")]
    Empty,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}, column {column} (`{name}`): cannot parse `{value}` as a number")]
    NonNumeric {
        line: u64,
        column: usize,
        name: String,
        value: String,
    },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One stage's (or one simulated day's) indicator vector.
///
/// Percentages may be negative (material change); `order_speed_l2` is in days;
/// `node_satisfaction_c4` is a score; `turnover_s3` and `zero_inventory` are counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRecord {
    pub stage: u32,
    pub quality_p1: f64,
    pub material_p2: f64,
    pub logistic_p3: f64,
    pub purchase_p4: f64,
    pub order_plan_l1: f64,
    pub order_speed_l2: f64,
    pub delivery_c1: f64,
    pub volume_c2: f64,
    pub node_satisfaction_c4: f64,
    pub outbound_error_s1: f64,
    pub damage_s2: f64,
    pub turnover_s3: f64,
    pub zero_inventory: f64,
    /// Not part of the input schema; filled by the simulator.
    #[serde(default)]
    pub delivery_error_c3: Option<f64>,
}

impl IndicatorRecord {
    /// Indicator values in header order, excluding `stage` and the optional delivery error.
    pub fn values(&self) -> [f64; 13] {
        [
            self.quality_p1,
            self.material_p2,
            self.logistic_p3,
            self.purchase_p4,
            self.order_plan_l1,
            self.order_speed_l2,
            self.delivery_c1,
            self.volume_c2,
            self.node_satisfaction_c4,
            self.outbound_error_s1,
            self.damage_s2,
            self.turnover_s3,
            self.zero_inventory,
        ]
    }

    fn from_values(stage: u32, v: &[f64]) -> Self {
        Self {
            stage,
            quality_p1: v[0],
            material_p2: v[1],
            logistic_p3: v[2],
            purchase_p4: v[3],
            order_plan_l1: v[4],
            order_speed_l2: v[5],
            delivery_c1: v[6],
            volume_c2: v[7],
            node_satisfaction_c4: v[8],
            outbound_error_s1: v[9],
            damage_s2: v[10],
            turnover_s3: v[11],
            zero_inventory: v[12],
            delivery_error_c3: None,
        }
    }
}

/// Column-addressable numeric table read from a headed CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl NumericTable {
    pub fn column_index(&self, name: &str) -> Result<usize, DatasetError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, DatasetError> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Projects rows onto the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Vec<Vec<f64>>, DatasetError> {
        let idx = names
            .iter()
            .map(|n| self.column_index(n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self
            .rows
            .iter()
            .map(|r| idx.iter().map(|&i| r[i]).collect())
            .collect())
    }
}

/// Reads a headed CSV whose every cell is a decimal number.
/// Errors name the 1-based line and column of the offending cell.
pub fn read_numeric_csv<R: Read>(reader: R) -> Result<NumericTable, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(DatasetError::Empty);
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line_guess = i as u64 + 2;
        let record = record.map_err(|e| csv_error(e, line_guess))?;
        let line = record.position().map_or(line_guess, |p| p.line());
        if record.len() != header.len() {
            return Err(DatasetError::Malformed {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DatasetError::NonNumeric {
                        line,
                        column: c + 1,
                        name: header[c].clone(),
                        value: cell.to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(NumericTable { header, rows })
}

fn csv_error(e: csv::Error, line: u64) -> DatasetError {
    let line = e.position().map_or(line, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DatasetError::Io(io),
        other => DatasetError::Malformed {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Parses the indicator CSV schema: one record per stage row.
pub fn load_dataset<R: Read>(reader: R) -> Result<Vec<IndicatorRecord>, DatasetError> {
    let table = read_numeric_csv(reader)?;
    let idx = INDICATOR_HEADER
        .iter()
        .map(|name| table.column_index(name))
        .collect::<Result<Vec<_>, _>>()?;
    if table.rows.is_empty() {
        return Err(DatasetError::Empty);
    }
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let stage = row[idx[0]];
            if stage < 0.0 || stage.fract() != 0.0 {
                return Err(DatasetError::Malformed {
                    line: i as u64 + 2,
                    message: format!("stage `{stage}` is not a non-negative integer"),
                });
            }
            let values: Vec<f64> = idx[1..].iter().map(|&c| row[c]).collect();
            Ok(IndicatorRecord::from_values(stage as u32, &values))
        })
        .collect()
}

pub fn reference_indicators() -> Vec<IndicatorRecord> {
    load_dataset(REFERENCE_INDICATORS_CSV.as_bytes()).expect("shipped indicator table parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_columns() {
        let records = reference_indicators();
        assert_eq!(records.len(), 9);
        let first = &records[0];
        assert_eq!(
            (first.quality_p1, first.material_p2, first.logistic_p3),
            (96.82, -9.63, 10.89)
        );
        let ninth = &records[8];
        assert_eq!((ninth.quality_p1, ninth.order_speed_l2), (100.0, 3.44));
    }

    #[test]
    fn empty_input_errors() {
        assert!(matches!(
            load_dataset("".as_bytes()),
            Err(DatasetError::Empty)
        ));
        let header_only = INDICATOR_HEADER.join(",") + "\n";
        assert!(matches!(
            load_dataset(header_only.as_bytes()),
            Err(DatasetError::Empty)
        ));
    }

    #[test]
    fn missing_column_is_named() {
        let csv = "stage,quality_p1\n1,90\n";
        match load_dataset(csv.as_bytes()) {
            Err(DatasetError::MissingColumn(c)) => assert_eq!(c, "material_p2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_names_line_and_column() {
        let mut csv = INDICATOR_HEADER.join(",") + "\n";
        csv += "1,96.82,-9.63,10.89,97.3,90.69,3.21,95.46,92.63,3.4,4.69,0.01,1.20,0.51\n";
        csv += "2,100,x,11.59,100,96.41,3.43,100,98.8,3.62,5.28,0.01,1.24,0.53\n";
        match load_dataset(csv.as_bytes()) {
            Err(DatasetError::NonNumeric { line, column, .. }) => {
                assert_eq!((line, column), (3, 3))
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
