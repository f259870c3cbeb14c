//! Experiment orchestration: matrix I/O, generators, run reports.

mod mtx;
mod run;
mod suite;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use mtx::{format_matrix_market, parse_matrix_market, read_matrix_market, read_vector, write_matrix_market};
pub use run::{planted_regression, run_task, CsvTrace, Outcome, RunConfig};
pub use suite::{BenchSuite, Instance};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Embed,
    Levscore,
    Basis,
    Regress,
    Selftest,
    Bench,
}

impl Task {
    pub const ALL: [Task; 6] = [Task::Embed, Task::Levscore, Task::Basis, Task::Regress, Task::Selftest, Task::Bench];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Embed => "embed",
            Task::Levscore => "levscore",
            Task::Basis => "basis",
            Task::Regress => "regress",
            Task::Selftest => "selftest",
            Task::Bench => "bench",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown task {s:?}")))
    }
}

/// A float that serializes non-finite values as the strings `"inf"`, `"-inf"`
/// and `"nan"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric(pub f64);

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Metric(v)),
            Raw::Text(t) => match t.as_str() {
                "inf" => Ok(Metric(f64::INFINITY)),
                "-inf" => Ok(Metric(f64::NEG_INFINITY)),
                "nan" => Ok(Metric(f64::NAN)),
                other => Err(serde::de::Error::custom(format!("bad metric {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Constant overrides given on the command line.
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema: u32,
    pub task: Task,
    pub seed: u64,
    pub params: Params,
    pub rows_in: usize,
    pub cols_in: usize,
    pub rows_out: usize,
    pub metrics: BTreeMap<String, Metric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<f64>,
    pub pass: bool,
    pub flags: Vec<String>,
}

impl RunReport {
    pub fn new(task: Task, seed: u64, params: Params) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            task,
            seed,
            params,
            rows_in: 0,
            cols_in: 0,
            rows_out: 0,
            metrics: BTreeMap::new(),
            runtime_ms: None,
            pass: false,
            flags: Vec::new(),
        }
    }

    pub fn metric(&mut self, name: &str, v: f64) {
        self.metrics.insert(name.to_string(), Metric(v));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).map(|m| m.0)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: RunReport = serde_json::from_str(text)?;
        if r.schema != SCHEMA_VERSION {
            return Err(Error::InvalidParameter(format!("unsupported report schema {}", r.schema)));
        }
        Ok(r)
    }

    /// Process exit code: 0 on pass, 1 on fail.
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }
}
