//! Feature schema construction and port-level reorganization of raw PM rows.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Unavailable seconds. One of the two label-source counters.
pub const UAS: &str = "UAS";
/// High correction count seconds. The other label-source counter.
pub const HCCS: &str = "HCCS";

/// A calendar day, counted from 1970-01-01.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Day(pub i32);

impl Day {
    pub fn offset(self, days: i32) -> Day {
        Day(self.0 + days)
    }

    pub fn days_since(self, earlier: Day) -> i32 {
        self.0 - earlier.0
    }
}

impl fmt::Display for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "day{}", self.0)
    }
}

/// One telemetry observation as it appears on the wire.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmRecord {
    pub network_id: String,
    pub port_id: String,
    pub facility_type: String,
    pub day: Day,
    pub pm_name: String,
    pub pm_value: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("no records to build a schema from")]
    EmptyStream,
    #[error("duplicate column name `{0}` in schema")]
    DuplicateName(String),
    #[error("protocol indicator `{0}` is not a numeric feature")]
    IndicatorNotNumeric(String),
    #[error("schema is missing label source `{0}`")]
    MissingLabelSource(&'static str),
    #[error("pm `{0}` is not in the schema")]
    UnknownPm(String),
    #[error("facility `{0}` is not in the schema")]
    UnknownFacility(String),
    #[error("non-finite value for pm `{pm}` on port {port}")]
    NonFinite { pm: String, port: String },
}

/// Column layout shared by every series and window built from one dataset.
///
/// Numeric columns come first, followed by the facility one-hot columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    numeric: Vec<String>,
    facilities: Vec<String>,
    protocol_indicators: Vec<String>,
}

impl FeatureSchema {
    pub fn new(
        numeric: Vec<String>,
        facilities: Vec<String>,
        protocol_indicators: Vec<String>,
    ) -> Result<Self, IngestError> {
        let mut seen = BTreeSet::new();
        for name in numeric.iter().chain(facilities.iter()) {
            if !seen.insert(name.as_str()) {
                return Err(IngestError::DuplicateName(name.clone()));
            }
        }
        for label in [UAS, HCCS] {
            if !numeric.iter().any(|n| n == label) {
                return Err(IngestError::MissingLabelSource(label));
            }
        }
        let mut uniq = BTreeSet::new();
        for ind in &protocol_indicators {
            if !numeric.contains(ind) {
                return Err(IngestError::IndicatorNotNumeric(ind.clone()));
            }
            if !uniq.insert(ind.as_str()) {
                return Err(IngestError::DuplicateName(ind.clone()));
            }
        }
        Ok(Self { numeric, facilities, protocol_indicators })
    }

    pub fn numeric(&self) -> &[String] {
        &self.numeric
    }

    pub fn facilities(&self) -> &[String] {
        &self.facilities
    }

    pub fn protocol_indicators(&self) -> &[String] {
        &self.protocol_indicators
    }

    pub fn n_numeric(&self) -> usize {
        self.numeric.len()
    }

    pub fn n_facilities(&self) -> usize {
        self.facilities.len()
    }

    /// Width of a window row: numeric columns plus one-hot columns.
    pub fn n_columns(&self) -> usize {
        self.numeric.len() + self.facilities.len()
    }

    pub fn numeric_index(&self, name: &str) -> Option<usize> {
        self.numeric.iter().position(|n| n == name)
    }

    pub fn facility_index(&self, name: &str) -> Option<usize> {
        self.facilities.iter().position(|n| n == name)
    }

    /// Column index of a facility's one-hot column within a window row.
    pub fn facility_column(&self, name: &str) -> Option<usize> {
        self.facility_index(name).map(|i| self.numeric.len() + i)
    }

    pub fn uas_index(&self) -> usize {
        self.numeric_index(UAS).expect("validated at construction")
    }

    pub fn hccs_index(&self) -> usize {
        self.numeric_index(HCCS).expect("validated at construction")
    }

    pub fn indicator_indices(&self) -> Vec<usize> {
        self.protocol_indicators
            .iter()
            .map(|n| self.numeric_index(n).expect("validated at construction"))
            .collect()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.numeric.iter().chain(self.facilities.iter()).cloned().collect()
    }

    pub fn is_one_hot_column(&self, col: usize) -> bool {
        col >= self.numeric.len()
    }

    /// Union of several schemas, with the same sorted layout rules as
    /// [`build_schema`].
    pub fn union<'a>(schemas: impl IntoIterator<Item = &'a FeatureSchema>) -> Result<Self, IngestError> {
        let mut numeric = BTreeSet::new();
        let mut facilities = BTreeSet::new();
        let mut indicators = BTreeSet::new();
        for s in schemas {
            numeric.extend(s.numeric.iter().cloned());
            facilities.extend(s.facilities.iter().cloned());
            indicators.extend(s.protocol_indicators.iter().cloned());
        }
        if numeric.is_empty() {
            return Err(IngestError::EmptyStream);
        }
        FeatureSchema::new(
            numeric.into_iter().collect(),
            facilities.into_iter().collect(),
            indicators.into_iter().collect(),
        )
    }
}

/// Builds the schema as the sorted union of every PM name and facility seen.
///
/// UAS, HCCS and the configured protocol indicators are always included,
/// observed or not.
pub fn build_schema<'a, I>(records: I, protocol_indicators: &[String]) -> Result<FeatureSchema, IngestError>
where
    I: IntoIterator<Item = &'a PmRecord>,
{
    let mut numeric = BTreeSet::new();
    let mut facilities = BTreeSet::new();
    let mut any = false;
    for r in records {
        any = true;
        numeric.insert(r.pm_name.clone());
        facilities.insert(r.facility_type.clone());
    }
    if !any {
        return Err(IngestError::EmptyStream);
    }
    numeric.insert(UAS.to_string());
    numeric.insert(HCCS.to_string());
    numeric.extend(protocol_indicators.iter().cloned());
    let indicators: BTreeSet<String> = protocol_indicators.iter().cloned().collect();
    FeatureSchema::new(
        numeric.into_iter().collect(),
        facilities.into_iter().collect(),
        indicators.into_iter().collect(),
    )
}

/// Gap-free daily rows of one port.
///
/// Numeric cells carry an explicit presence flag; absent cells hold `0.0`.
/// The facility one-hot vector is constant along the series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortSeries {
    pub network_id: String,
    pub port_id: String,
    pub start_day: Day,
    n_numeric: usize,
    values: Vec<f64>,
    present: Vec<bool>,
    facilities: Vec<bool>,
}

impl PortSeries {
    /// Assembles a series from raw row-major buffers.
    ///
    /// Panics when the buffer lengths disagree with `n_numeric`.
    pub fn from_parts(
        network_id: String,
        port_id: String,
        start_day: Day,
        n_numeric: usize,
        values: Vec<f64>,
        present: Vec<bool>,
        facilities: Vec<bool>,
    ) -> Self {
        assert_eq!(values.len(), present.len());
        assert!(n_numeric > 0 && values.len().is_multiple_of(n_numeric));
        let mut values = values;
        for (v, &p) in values.iter_mut().zip(&present) {
            if !p {
                *v = 0.0;
            }
        }
        Self { network_id, port_id, start_day, n_numeric, values, present, facilities }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.n_numeric
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_numeric(&self) -> usize {
        self.n_numeric
    }

    pub fn day(&self, row: usize) -> Day {
        self.start_day.offset(row as i32)
    }

    pub fn end_day(&self) -> Day {
        self.day(self.len() - 1)
    }

    pub fn row_values(&self, row: usize) -> &[f64] {
        &self.values[row * self.n_numeric..(row + 1) * self.n_numeric]
    }

    pub fn row_present(&self, row: usize) -> &[bool] {
        &self.present[row * self.n_numeric..(row + 1) * self.n_numeric]
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.n_numeric + col;
        self.present[i].then_some(self.values[i])
    }

    pub fn one_hot(&self) -> &[bool] {
        &self.facilities
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn present(&self) -> &[bool] {
        &self.present
    }

    /// Re-expands the series into wire records: each present cell is
    /// emitted once per facility flagged on the port.
    pub fn to_records(&self, schema: &FeatureSchema) -> Vec<PmRecord> {
        let facilities: Vec<&String> = schema
            .facilities()
            .iter()
            .zip(&self.facilities)
            .filter_map(|(f, &on)| on.then_some(f))
            .collect();
        let mut out = Vec::new();
        for row in 0..self.len() {
            for col in 0..self.n_numeric {
                if let Some(v) = self.get(row, col) {
                    for f in &facilities {
                        out.push(PmRecord {
                            network_id: self.network_id.clone(),
                            port_id: self.port_id.clone(),
                            facility_type: (*f).clone(),
                            day: self.day(row),
                            pm_name: schema.numeric()[col].clone(),
                            pm_value: v,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Default)]
struct PortAccum {
    facilities: BTreeSet<usize>,
    // day -> (column -> max)
    days: BTreeMap<Day, BTreeMap<usize, f64>>,
}

/// Max-merges facility-level records into one gap-free series per
/// `(network, port)`, ordered by network then port.
pub fn merge_to_port_level<'a, I>(records: I, schema: &FeatureSchema) -> Result<Vec<PortSeries>, IngestError>
where
    I: IntoIterator<Item = &'a PmRecord>,
{
    let mut ports: BTreeMap<(String, String), PortAccum> = BTreeMap::new();
    for r in records {
        let col = schema
            .numeric_index(&r.pm_name)
            .ok_or_else(|| IngestError::UnknownPm(r.pm_name.clone()))?;
        let fac = schema
            .facility_index(&r.facility_type)
            .ok_or_else(|| IngestError::UnknownFacility(r.facility_type.clone()))?;
        if !r.pm_value.is_finite() {
            return Err(IngestError::NonFinite { pm: r.pm_name.clone(), port: r.port_id.clone() });
        }
        let acc = ports.entry((r.network_id.clone(), r.port_id.clone())).or_default();
        acc.facilities.insert(fac);
        let cell = acc.days.entry(r.day).or_default().entry(col).or_insert(r.pm_value);
        if r.pm_value > *cell {
            *cell = r.pm_value;
        }
    }

    let n = schema.n_numeric();
    let mut out = Vec::with_capacity(ports.len());
    for ((network_id, port_id), acc) in ports {
        let (Some((&first, _)), Some((&last, _))) = (acc.days.first_key_value(), acc.days.last_key_value())
        else {
            continue;
        };
        let len = (last.days_since(first) + 1) as usize;
        let mut values = vec![0.0; len * n];
        let mut present = vec![false; len * n];
        for (day, cells) in &acc.days {
            let row = day.days_since(first) as usize;
            for (&col, &v) in cells {
                values[row * n + col] = v;
                present[row * n + col] = true;
            }
        }
        let mut facilities = vec![false; schema.n_facilities()];
        for f in acc.facilities {
            facilities[f] = true;
        }
        out.push(PortSeries { network_id, port_id, start_day: first, n_numeric: n, values, present, facilities });
    }
    Ok(out)
}
