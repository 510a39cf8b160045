use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = [
    "source",
    "attack",
    "target",
    "success_rate",
    "n_eval",
    "queries_mean",
    "seed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub source: String,
    pub attack: String,
    pub target: String,
    pub success_rate: f64,
    pub n_eval: usize,
    pub queries_mean: f64,
    pub seed: u64,
}

impl ResultRow {
    fn csv_fields(&self) -> [String; 7] {
        [
            self.source.clone(),
            self.attack.clone(),
            self.target.clone(),
            format!("{:.4}", self.success_rate),
            self.n_eval.to_string(),
            self.queries_mean.to_string(),
            self.seed.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn find(&self, source: &str, attack: &str, target: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.source == source && r.attack == attack && r.target == target)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r.csv_fields()).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rows serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("results: {e}")))
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultFormat {
    Csv,
    Json,
}

impl ResultFormat {
    /// `.json` selects JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => ResultFormat::Json,
            _ => ResultFormat::Csv,
        }
    }
}

impl FromStr for ResultFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ResultFormat::Csv),
            "json" => Ok(ResultFormat::Json),
            other => Err(Error::invalid(format!("unknown result format {other:?}"))),
        }
    }
}

pub fn write_results(
    table: &ResultTable,
    path: impl AsRef<Path>,
    format: ResultFormat,
) -> Result<()> {
    let bytes = match format {
        ResultFormat::Csv => table.to_csv()?,
        ResultFormat::Json => table.to_json().into_bytes(),
    };
    File::create(path)?.write_all(&bytes)?;
    Ok(())
}

/// Value of the swept parameter and the table produced with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub value: f64,
    pub table: ResultTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub param: String,
    pub entries: Vec<SweepEntry>,
}

impl SweepTable {
    /// Result rows prefixed with `param,value` columns.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["param", "value"];
        header.extend(CSV_HEADER);
        w.write_record(&header).map_err(csv_err)?;
        for e in &self.entries {
            for r in &e.table.rows {
                let mut rec = vec![self.param.clone(), e.value.to_string()];
                rec.extend(r.csv_fields());
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn write(&self, path: impl AsRef<Path>, format: ResultFormat) -> Result<()> {
        let bytes = match format {
            ResultFormat::Csv => self.to_csv()?,
            ResultFormat::Json => serde_json::to_string_pretty(self)
                .expect("sweep serializes")
                .into_bytes(),
        };
        File::create(path)?.write_all(&bytes)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(rate: f64) -> ResultRow {
        ResultRow {
            source: "cnn".into(),
            attack: "vmifgsm".into(),
            target: "mlp".into(),
            success_rate: rate,
            n_eval: 4,
            queries_mean: 210.0,
            seed: 7,
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let csv = String::from_utf8(ResultTable::default().to_csv().unwrap()).unwrap();
        assert_eq!(
            csv,
            "source,attack,target,success_rate,n_eval,queries_mean,seed\n"
        );
    }

    #[test]
    fn success_rate_has_four_decimals() {
        let t = ResultTable {
            rows: vec![row(0.5)],
        };
        let csv = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(
            csv.lines().nth(1).unwrap(),
            "cnn,vmifgsm,mlp,0.5000,4,210,7"
        );
    }

    #[test]
    fn json_round_trip() {
        let t = ResultTable {
            rows: vec![row(0.25), row(1.0 / 3.0)],
        };
        assert_eq!(ResultTable::from_json(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let t = ResultTable::default();
        let err = write_results(&t, "/nonexistent-dir/x.csv", ResultFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
