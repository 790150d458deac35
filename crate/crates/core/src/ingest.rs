//! Loading and validating cycle-by-cycle discharge data.
//!
//! The canonical on-disk form is a CSV with header
//! `cycle,time_s,voltage_v,current_a,temperature_c`, one row per sample.
//! Rows of different cycles may be interleaved; within a cycle the file
//! order must already be chronological.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variable names in the fixed order used by every downstream matrix.
pub const VARIABLE_NAMES: [&str; 3] = ["voltage_v", "current_a", "temperature_c"];

/// Rated capacity of the NASA 18650 cells, used when the source does not say.
pub const DEFAULT_RATED_CAPACITY_AH: f64 = 2.0;

/// One discharge cycle: `J` aligned traces sampled at `time_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    /// 1-based cycle number.
    pub cycle_index: usize,
    pub time_s: Vec<f64>,
    /// One trace per variable, in [`VARIABLE_NAMES`] order.
    pub variables: Vec<Vec<f64>>,
}

impl CycleRecord {
    /// Sample count `K_c`.
    pub fn len(&self) -> usize {
        self.time_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_s.is_empty()
    }

    /// Samples as a `K_c × J` matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.variables.len(), |k, j| self.variables[j][k])
    }

    fn validate(&self, n_vars: usize) -> Result<()> {
        let idx = self.cycle_index;
        if self.variables.len() != n_vars {
            return Err(Error::Integrity(format!(
                "cycle {idx} has {} variables, expected {n_vars}",
                self.variables.len()
            )));
        }
        if self.len() < 2 {
            return Err(Error::Integrity(format!("cycle {idx} has {} samples, need at least 2", self.len())));
        }
        if let Some(v) = self.variables.iter().find(|v| v.len() != self.len()) {
            return Err(Error::Integrity(format!(
                "cycle {idx}: variable trace of length {} does not match {} time stamps",
                v.len(),
                self.len()
            )));
        }
        if self.time_s.iter().chain(self.variables.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::Integrity(format!("cycle {idx} contains a missing or non-finite value")));
        }
        if let Some(k) = self.time_s.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Integrity(format!(
                "cycle {idx}: time is not strictly increasing at sample {} ({} then {})",
                k + 2,
                self.time_s[k],
                self.time_s[k + 1]
            )));
        }
        Ok(())
    }
}

/// All discharge cycles of one cell, contiguous from cycle 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryDataset {
    pub name: String,
    pub rated_capacity_ah: f64,
    pub variable_names: Vec<String>,
    pub cycles: Vec<CycleRecord>,
}

impl BatteryDataset {
    /// Builds a dataset and checks every invariant.
    pub fn new(name: impl Into<String>, variable_names: Vec<String>, cycles: Vec<CycleRecord>) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            rated_capacity_ah: DEFAULT_RATED_CAPACITY_AH,
            variable_names,
            cycles,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_rated_capacity(mut self, ah: f64) -> Result<Self> {
        if !(ah > 0.0 && ah.is_finite()) {
            return Err(Error::Usage(format!("rated capacity must be positive, got {ah}")));
        }
        self.rated_capacity_ah = ah;
        Ok(self)
    }

    /// Number of cycles `N`.
    pub fn n_cycles(&self) -> usize {
        self.cycles.len()
    }

    /// Number of variables `J`.
    pub fn n_variables(&self) -> usize {
        self.variable_names.len()
    }

    /// Cycle by 1-based index.
    pub fn cycle(&self, index: usize) -> Option<&CycleRecord> {
        index.checked_sub(1).and_then(|i| self.cycles.get(i))
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycles.is_empty() {
            return Err(Error::Integrity(format!("dataset '{}' has no cycles", self.name)));
        }
        if self.variable_names.is_empty() {
            return Err(Error::Schema("dataset has no variables".into()));
        }
        for (i, c) in self.cycles.iter().enumerate() {
            if c.cycle_index != i + 1 {
                return Err(Error::Integrity(format!(
                    "cycle indices must run contiguously from 1; found {} at position {}",
                    c.cycle_index,
                    i + 1
                )));
            }
            c.validate(self.variable_names.len())?;
        }
        Ok(())
    }

    /// Writes the canonical CSV form.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        if self.variable_names.len() != VARIABLE_NAMES.len() {
            return Err(Error::Schema(format!(
                "canonical CSV needs exactly {} variables, dataset has {}",
                VARIABLE_NAMES.len(),
                self.variable_names.len()
            )));
        }
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["cycle", "time_s"];
        header.extend(VARIABLE_NAMES);
        w.write_record(&header)?;
        for c in &self.cycles {
            for k in 0..c.len() {
                let mut row = vec![c.cycle_index.to_string(), c.time_s[k].to_string()];
                row.extend(c.variables.iter().map(|v| v[k].to_string()));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Maps logical columns onto CSV header names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub cycle: String,
    pub time_s: String,
    pub voltage: String,
    pub current: String,
    pub temperature: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            cycle: "cycle".into(),
            time_s: "time_s".into(),
            voltage: VARIABLE_NAMES[0].into(),
            current: VARIABLE_NAMES[1].into(),
            temperature: VARIABLE_NAMES[2].into(),
        }
    }
}

/// Loads a dataset from a CSV file; the dataset is named after the file stem.
pub fn load_dataset(path: impl AsRef<Path>, schema: &ColumnMapping) -> Result<BatteryDataset> {
    let path = path.as_ref();
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
    read_dataset(std::fs::File::open(path)?, name, schema)
}

/// Parses a dataset from any CSV source.
pub fn read_dataset<R: Read>(reader: R, name: impl Into<String>, schema: &ColumnMapping) -> Result<BatteryDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Schema(format!("unreadable header: {e}")))?.clone();
    let find = |col: &str| {
        headers
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| Error::Schema(format!("missing column '{col}'")))
    };
    let cycle_col = find(&schema.cycle)?;
    let time_col = find(&schema.time_s)?;
    let var_cols = [find(&schema.voltage)?, find(&schema.current)?, find(&schema.temperature)?];

    let mut grouped: BTreeMap<usize, CycleRecord> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        let field = |col: usize| -> Result<&str> {
            match rec.get(col) {
                Some(s) if !s.is_empty() => Ok(s),
                _ => Err(Error::Integrity(format!("row {row}: missing value in column {}", &headers[col]))),
            }
        };
        let number = |col: usize| -> Result<f64> {
            let s = field(col)?;
            let v: f64 = s
                .parse()
                .map_err(|_| Error::Schema(format!("row {row}: '{s}' in column {} is not a number", &headers[col])))?;
            if !v.is_finite() {
                return Err(Error::Integrity(format!("row {row}: non-finite value in column {}", &headers[col])));
            }
            Ok(v)
        };
        let cycle_txt = field(cycle_col)?;
        let cycle: usize = cycle_txt
            .parse()
            .map_err(|_| Error::Schema(format!("row {row}: cycle '{cycle_txt}' is not a positive integer")))?;
        if cycle == 0 {
            return Err(Error::Integrity(format!("row {row}: cycle indices are 1-based")));
        }
        let entry = grouped.entry(cycle).or_insert_with(|| CycleRecord {
            cycle_index: cycle,
            time_s: Vec::new(),
            variables: vec![Vec::new(); var_cols.len()],
        });
        entry.time_s.push(number(time_col)?);
        for (trace, &col) in entry.variables.iter_mut().zip(&var_cols) {
            trace.push(number(col)?);
        }
    }
    let variable_names = VARIABLE_NAMES.iter().map(|s| s.to_string()).collect();
    BatteryDataset::new(name, variable_names, grouped.into_values().collect())
}

/// Keeps the first `M` rows of every matrix, `M` being the shortest length.
pub fn truncate_to_min_length(cycles: &[DMatrix<f64>]) -> Result<(Vec<DMatrix<f64>>, usize)> {
    let m = cycles
        .iter()
        .map(|c| c.nrows())
        .min()
        .ok_or_else(|| Error::Usage("cannot synchronize an empty cycle sequence".into()))?;
    if m == 0 {
        return Err(Error::Dimension("a cycle matrix has no rows".into()));
    }
    Ok((cycles.iter().map(|c| c.rows(0, m).into_owned()).collect(), m))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "cycle,time_s,voltage_v,current_a,temperature_c\n";

    fn parse(body: &str) -> Result<BatteryDataset> {
        read_dataset(format!("{HEADER}{body}").as_bytes(), "t", &ColumnMapping::default())
    }

    #[test]
    fn single_cycle_of_five_rows() {
        let body: String = (0..5).map(|k| format!("1,{},{},-2,24\n", k * 10, 4.2 - 0.1 * k as f64)).collect();
        let ds = parse(&body).unwrap();
        assert_eq!(ds.n_cycles(), 1);
        assert_eq!(ds.cycles[0].len(), 5);
        assert_eq!(ds.n_variables(), 3);
        assert_eq!(ds.cycles[0].variables[0][4], 4.2 - 0.4);
    }

    #[test]
    fn non_monotone_time_is_rejected() {
        let body = "1,0,4,-2,24\n1,10,4,-2,24\n2,0,4,-2,24\n2,5,4,-2,24\n\
                    3,0,4,-2,24\n3,10,4,-2,24\n3,5,4,-2,24\n";
        let err = parse(body).unwrap_err();
        assert!(matches!(err, Error::Integrity(ref m) if m.contains("cycle 3")), "{err}");
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let err = read_dataset("cycle,time_s,voltage_v\n1,0,4\n".as_bytes(), "t", &ColumnMapping::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        let err = read_dataset("".as_bytes(), "t", &ColumnMapping::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn short_cycle_and_missing_values() {
        assert!(matches!(parse("1,0,4,-2,24\n"), Err(Error::Integrity(_))));
        assert!(matches!(parse("1,0,4,,24\n1,1,4,-2,24\n"), Err(Error::Integrity(_))));
        assert!(matches!(parse("1,0,4,-2,NaN\n1,1,4,-2,24\n"), Err(Error::Integrity(_))));
        assert!(matches!(parse(""), Err(Error::Integrity(_))));
    }

    #[test]
    fn cycles_must_be_contiguous() {
        let body = "1,0,4,-2,24\n1,1,4,-2,24\n3,0,4,-2,24\n3,1,4,-2,24\n";
        assert!(matches!(parse(body), Err(Error::Integrity(_))));
    }

    #[test]
    fn interleaved_rows_are_grouped() {
        let body = "2,0,3.9,-2,25\n1,0,4.1,-2,24\n2,1,3.8,-2,25\n1,1,4.0,-2,24\n";
        let ds = parse(body).unwrap();
        assert_eq!(ds.cycles[0].variables[0], vec![4.1, 4.0]);
        assert_eq!(ds.cycles[1].variables[0], vec![3.9, 3.8]);
    }

    #[test]
    fn custom_column_mapping() {
        let csv = "Cyc,T,V,I,Temp\n1,0,4,-2,24\n1,1,4,-2,24\n";
        let map = ColumnMapping {
            cycle: "Cyc".into(),
            time_s: "T".into(),
            voltage: "V".into(),
            current: "I".into(),
            temperature: "Temp".into(),
        };
        assert_eq!(read_dataset(csv.as_bytes(), "x", &map).unwrap().n_cycles(), 1);
    }

    #[test]
    fn truncation_rules() {
        let mats: Vec<_> = [7, 5, 9].iter().map(|&r| DMatrix::from_element(r, 2, 1.0)).collect();
        let (out, m) = truncate_to_min_length(&mats).unwrap();
        assert_eq!(m, 5);
        assert!(out.iter().all(|x| x.nrows() == 5 && x.ncols() == 2));
        let same: Vec<_> = (0..3).map(|_| DMatrix::from_element(5, 1, 2.0)).collect();
        let (out, m) = truncate_to_min_length(&same).unwrap();
        assert_eq!((m, &out), (5, &same));
        assert!(matches!(truncate_to_min_length(&[]), Err(Error::Usage(_))));
    }
}
