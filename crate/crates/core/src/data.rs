//! Records, observations and CSV ingestion.
//!
//! Standard CSV layout: a header row with
//! `station_id,valid_time,lead_time,obs,member_001..member_K,<aux names>`.
//! `valid_time` is ISO-8601 in UTC; an empty `obs` cell marks a
//! forecast-only row. A [`Schema`] maps nonstandard headers.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub station_id: String,
    pub valid_time: DateTime<Utc>,
    /// Hours between issue and validity.
    pub lead_time: f64,
    /// Ensemble members in mm/6h, in file order.
    pub members: Vec<f64>,
    pub aux: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub station_id: String,
    pub valid_time: DateTime<Utc>,
    pub amount: f64,
}

/// Forecast records joined with their (optional) verifying observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<ForecastRecord>,
    pub observations: Vec<Option<f64>>,
    /// Auxiliary column names, in file order.
    pub aux_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        records: Vec<ForecastRecord>,
        observations: Vec<Option<f64>>,
        aux_names: Vec<String>,
    ) -> Result<Self> {
        if records.len() != observations.len() {
            return Err(Error::Schema(format!(
                "{} records but {} observations",
                records.len(),
                observations.len()
            )));
        }
        let k = records.first().map(|r| r.members.len()).unwrap_or(0);
        for (i, r) in records.iter().enumerate() {
            let line = i + 2;
            if r.members.len() != k {
                return Err(Error::MemberCount {
                    line,
                    expected: k,
                    found: r.members.len(),
                });
            }
            if k < 2 {
                return Err(Error::MalformedRow {
                    line,
                    msg: format!("ensemble needs at least 2 members, found {k}"),
                });
            }
            if let Some((j, &v)) = r.members.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
                return Err(Error::NegativeRainfall {
                    line,
                    column: format!("member_{:03}", j + 1),
                    value: v,
                });
            }
            if !(r.lead_time > 0.0) {
                return Err(Error::MalformedRow {
                    line,
                    msg: format!("lead_time must be > 0 (got {})", r.lead_time),
                });
            }
        }
        if let Some((i, v)) = observations
            .iter()
            .enumerate()
            .find_map(|(i, o)| o.filter(|v| !(*v >= 0.0)).map(|v| (i, v)))
        {
            return Err(Error::NegativeRainfall {
                line: i + 2,
                column: "obs".into(),
                value: v,
            });
        }
        Ok(Self {
            records,
            observations,
            aux_names,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_members(&self) -> usize {
        self.records.first().map(|r| r.members.len()).unwrap_or(0)
    }

    pub fn observation(&self, i: usize) -> Option<f64> {
        self.observations[i]
    }

    /// Sorted distinct station ids.
    pub fn station_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.records.iter().map(|r| r.station_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn stations(&self) -> Vec<Station> {
        self.station_ids()
            .into_iter()
            .map(|id| Station {
                id,
                latitude: None,
                longitude: None,
            })
            .collect()
    }

    /// Record indices of one station, ordered by valid time.
    pub fn station_indices(&self, station_id: &str) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.records[i].station_id == station_id)
            .collect();
        idx.sort_by_key(|&i| (self.records[i].valid_time, i));
        idx
    }

    pub fn observation_records(&self) -> Vec<ObservationRecord> {
        self.records
            .iter()
            .zip(&self.observations)
            .filter_map(|(r, o)| {
                o.map(|amount| ObservationRecord {
                    station_id: r.station_id.clone(),
                    valid_time: r.valid_time,
                    amount,
                })
            })
            .collect()
    }
}

/// Column mapping for CSV input. Loaded from a small TOML file when the
/// input does not use the standard headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub station_id: String,
    pub valid_time: String,
    pub lead_time: String,
    pub obs: String,
    /// Member columns are those whose header starts with this prefix.
    pub member_prefix: String,
    /// Auxiliary columns; `None` takes every remaining column.
    pub aux: Option<Vec<String>>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            station_id: "station_id".into(),
            valid_time: "valid_time".into(),
            lead_time: "lead_time".into(),
            obs: "obs".into(),
            member_prefix: "member_".into(),
            aux: None,
        }
    }
}

impl Schema {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

pub fn parse_time(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    None
}

pub fn format_time(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

pub fn load_dataset(path: &Path, schema: &Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(file, schema)
}

pub fn read_dataset<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let c_station = find(&schema.station_id)?;
    let c_time = find(&schema.valid_time)?;
    let c_lead = find(&schema.lead_time)?;
    let c_obs = find(&schema.obs)?;
    let member_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with(&schema.member_prefix))
        .map(|(i, _)| i)
        .collect();
    if member_cols.len() < 2 {
        return Err(Error::Schema(format!(
            "need at least 2 member columns with prefix `{}`",
            schema.member_prefix
        )));
    }
    let fixed = [c_station, c_time, c_lead, c_obs];
    let aux_cols: Vec<(usize, String)> = match &schema.aux {
        Some(names) => names
            .iter()
            .map(|n| find(n).map(|i| (i, n.clone())))
            .collect::<Result<_>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| !fixed.contains(i) && !member_cols.contains(i))
            .map(|(i, h)| (i, h.to_string()))
            .collect(),
    };

    let mut records = Vec::new();
    let mut observations = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(row + 2);
        let cell = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize, what: &str| -> Result<f64> {
            cell(i).parse::<f64>().map_err(|_| Error::MalformedRow {
                line,
                msg: format!("cannot parse {what} `{}`", cell(i)),
            })
        };
        let station_id = cell(c_station).to_string();
        if station_id.is_empty() {
            return Err(Error::MalformedRow {
                line,
                msg: "empty station_id".into(),
            });
        }
        let valid_time = parse_time(cell(c_time)).ok_or_else(|| Error::MalformedRow {
            line,
            msg: format!("cannot parse valid_time `{}`", cell(c_time)),
        })?;
        let lead_time = num(c_lead, "lead_time")?;
        let obs = if cell(c_obs).is_empty() {
            None
        } else {
            let v = num(c_obs, "obs")?;
            if v < 0.0 {
                return Err(Error::NegativeRainfall {
                    line,
                    column: schema.obs.clone(),
                    value: v,
                });
            }
            Some(v)
        };
        let mut members = Vec::with_capacity(member_cols.len());
        for &c in &member_cols {
            if cell(c).is_empty() {
                continue;
            }
            let v = num(c, "member")?;
            if v < 0.0 {
                return Err(Error::NegativeRainfall {
                    line,
                    column: headers[c].to_string(),
                    value: v,
                });
            }
            members.push(v);
        }
        if members.len() != member_cols.len() {
            return Err(Error::MemberCount {
                line,
                expected: member_cols.len(),
                found: members.len(),
            });
        }
        let mut aux = BTreeMap::new();
        for (c, name) in &aux_cols {
            if !cell(*c).is_empty() {
                aux.insert(name.clone(), num(*c, name)?);
            }
        }
        if !(lead_time > 0.0) {
            return Err(Error::MalformedRow {
                line,
                msg: format!("lead_time must be > 0 (got {lead_time})"),
            });
        }
        records.push(ForecastRecord {
            station_id,
            valid_time,
            lead_time,
            members,
            aux,
        });
        observations.push(obs);
    }
    Dataset::new(records, observations, aux_cols.into_iter().map(|(_, n)| n).collect())
}

/// Writes the standard CSV layout. Floats use the shortest round-trip form.
pub fn write_dataset<W: Write>(writer: W, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let k = ds.n_members();
    let mut header = vec![
        "station_id".to_string(),
        "valid_time".into(),
        "lead_time".into(),
        "obs".into(),
    ];
    header.extend((1..=k).map(|j| format!("member_{j:03}")));
    header.extend(ds.aux_names.iter().cloned());
    w.write_record(&header)?;
    for (r, o) in ds.records.iter().zip(&ds.observations) {
        let mut row = vec![
            r.station_id.clone(),
            format_time(&r.valid_time),
            r.lead_time.to_string(),
            o.map(|v| v.to_string()).unwrap_or_default(),
        ];
        row.extend(r.members.iter().map(|v| v.to_string()));
        row.extend(
            ds.aux_names
                .iter()
                .map(|n| r.aux.get(n).map(|v| v.to_string()).unwrap_or_default()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
