//! Evaluation report rows and their CSV / JSON-lines serialization.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::StoreError;

/// Whether the projection saw the unlabelled test sentences at fit time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Inductive,
    Transductive,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Inductive => "inductive",
            Setting::Transductive => "transductive",
        })
    }
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "inductive" => Ok(Setting::Inductive),
            "transductive" => Ok(Setting::Transductive),
            other => Err(format!("unknown setting {other:?}")),
        }
    }
}

pub const CSV_HEADER: [&str; 9] = [
    "task",
    "method",
    "dim",
    "setting",
    "seed",
    "metric",
    "value",
    "fit_seconds",
    "transform_seconds",
];

/// One evaluated cell. A failed cell keeps its coordinates, carries the
/// failure text in `metric` as `error: ...` and a NaN value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub task: String,
    pub method: String,
    pub dim: usize,
    /// `None` for the untransformed baseline, written as `none`.
    #[serde(with = "setting_field")]
    pub setting: Option<Setting>,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    pub fit_seconds: f64,
    pub transform_seconds: f64,
}

mod setting_field {
    use super::Setting;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Setting>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.collect_str(x),
            None => s.serialize_str("none"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Setting>, D::Error> {
        let s = String::deserialize(d)?;
        if s == "none" {
            return Ok(None);
        }
        s.parse().map(Some).map_err(serde::de::Error::custom)
    }
}

impl EvalRow {
    pub fn is_error(&self) -> bool {
        self.metric.starts_with("error")
    }

    pub fn failed(
        task: &str,
        method: &str,
        dim: usize,
        setting: Option<Setting>,
        seed: u64,
        message: &str,
    ) -> Self {
        Self {
            task: task.into(),
            method: method.into(),
            dim,
            setting,
            seed,
            metric: format!("error: {message}"),
            value: f64::NAN,
            fit_seconds: 0.0,
            transform_seconds: 0.0,
        }
    }

    /// Range check for the known metrics.
    pub fn in_range(&self) -> bool {
        match self.metric.as_str() {
            "spearman" => (-1.0..=1.0).contains(&self.value),
            "accuracy" => (0.0..=1.0).contains(&self.value),
            _ => true,
        }
    }

    fn sort_key(&self) -> (bool, &str, &str, usize, Option<Setting>, u64) {
        (
            self.setting.is_some(),
            &self.task,
            &self.method,
            self.dim,
            self.setting,
            self.seed,
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn new(rows: Vec<EvalRow>) -> Self {
        Self { rows }
    }

    /// Baseline rows first, then by task, method, dim, setting and seed.
    pub fn sort_canonical(&mut self) {
        self.rows
            .sort_by(|a, b| a.sort_key().partial_cmp(&b.sort_key()).unwrap());
    }

    pub fn baseline(&self) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.setting.is_none())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), StoreError> {
        let mut out = csv::Writer::from_writer(w);
        let res: Result<(), csv::Error> = (|| {
            if self.rows.is_empty() {
                out.write_record(CSV_HEADER)?;
            }
            for r in &self.rows {
                out.serialize(r)?;
            }
            out.flush()?;
            Ok(())
        })();
        res.map_err(|e| StoreError::Dataset(format!("writing report CSV: {e}")))
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), StoreError> {
        for r in &self.rows {
            let line = serde_json::to_string(r)
                .map_err(|e| StoreError::Dataset(format!("encoding report row: {e}")))?;
            writeln!(w, "{line}").map_err(|e| StoreError::Dataset(e.to_string()))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, StoreError> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr
            .headers()
            .map_err(|e| StoreError::Dataset(format!("reading report header: {e}")))?;
        if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(StoreError::Dataset(format!(
                "unexpected report header {headers:?}"
            )));
        }
        let rows = rdr
            .deserialize()
            .collect::<Result<Vec<EvalRow>, _>>()
            .map_err(|e| StoreError::Dataset(format!("reading report row: {e}")))?;
        Ok(Self { rows })
    }
}
