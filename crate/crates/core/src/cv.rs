//! Train/validation split plans.
//!
//! Dates are UTC calendar dates of `valid_time`.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvScheme {
    /// One fold per calendar month.
    MonthlyBlockCv,
    /// One fold per date; trains on every other date.
    LeaveOneDayOut,
    /// Two folds split at the median date: earlier half validated with the
    /// later half as training, and vice versa.
    Holdout,
}

impl std::str::FromStr for CvScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "monthly_block_cv" => Ok(Self::MonthlyBlockCv),
            "leave_one_day_out" => Ok(Self::LeaveOneDayOut),
            "holdout" => Ok(Self::Holdout),
            _ => Err(Error::Config(format!("unknown cv scheme `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub scheme: CvScheme,
    pub folds: Vec<Fold>,
}

fn group_plan(scheme: CvScheme, n: usize, groups: BTreeMap<impl Ord, Vec<usize>>) -> SplitPlan {
    let folds = groups
        .into_values()
        .map(|validation| {
            let mut in_val = vec![false; n];
            for &i in &validation {
                in_val[i] = true;
            }
            Fold {
                train: (0..n).filter(|&i| !in_val[i]).collect(),
                validation,
            }
        })
        .collect();
    SplitPlan { scheme, folds }
}

pub fn make_cv_plan(ds: &Dataset, scheme: CvScheme) -> Result<SplitPlan> {
    if ds.is_empty() {
        return Err(Error::InsufficientData("empty dataset".into()));
    }
    let n = ds.len();
    let date = |i: usize| ds.records[i].valid_time.date_naive();
    match scheme {
        CvScheme::MonthlyBlockCv => {
            let mut g: BTreeMap<(i32, u32), Vec<usize>> = BTreeMap::new();
            for i in 0..n {
                let d = date(i);
                g.entry((d.year(), d.month())).or_default().push(i);
            }
            if g.len() < 2 {
                return Err(Error::InsufficientData(
                    "monthly_block_cv needs at least 2 calendar months".into(),
                ));
            }
            Ok(group_plan(scheme, n, g))
        }
        CvScheme::LeaveOneDayOut => {
            let mut g: BTreeMap<NaiveDate, Vec<usize>> = BTreeMap::new();
            for i in 0..n {
                g.entry(date(i)).or_default().push(i);
            }
            Ok(group_plan(scheme, n, g))
        }
        CvScheme::Holdout => {
            let mut dates: Vec<NaiveDate> = (0..n).map(date).collect();
            dates.sort();
            dates.dedup();
            if dates.len() < 2 {
                return Err(Error::InsufficientData("holdout needs at least 2 dates".into()));
            }
            let cut = dates[dates.len() / 2];
            let mut g: BTreeMap<bool, Vec<usize>> = BTreeMap::new();
            for i in 0..n {
                g.entry(date(i) >= cut).or_default().push(i);
            }
            Ok(group_plan(scheme, n, g))
        }
    }
}
