//! Record filtering, stratified splitting, imputation and min-max scaling.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::Serialize;

use super::table::{FeatureTable, Record, Split, TableError};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FilterReport {
    pub input: usize,
    pub kept: usize,
    pub dropped_ungradable: usize,
    pub dropped_comorbidity: usize,
    /// dropped image ids with the reason that removed them
    pub dropped: Vec<(String, &'static str)>,
}

/// Drops ungradable records and records flagged with a comorbidity.
/// A record failing both checks is reported as ungradable.
pub fn filter_gradable(table: &FeatureTable) -> (FeatureTable, FilterReport) {
    let mut report = FilterReport {
        input: table.len(),
        kept: 0,
        dropped_ungradable: 0,
        dropped_comorbidity: 0,
        dropped: Vec::new(),
    };
    for r in &table.records {
        if !r.gradable {
            report.dropped_ungradable += 1;
            report.dropped.push((r.image_id.clone(), "ungradable"));
        } else if r.comorbidity {
            report.dropped_comorbidity += 1;
            report.dropped.push((r.image_id.clone(), "comorbidity"));
        }
    }
    let kept = table.filtered(Record::eligible);
    report.kept = kept.len();
    (kept, report)
}

/// Draws up to `n` grade-0 controls from `pool`, considering only gradable
/// records without comorbidity flags.
pub fn draw_controls(pool: &FeatureTable, n: usize, seed: u64) -> Vec<Record> {
    let mut candidates: Vec<&Record> = pool.records.iter().filter(|r| r.grade == 0 && r.eligible()).collect();
    candidates.shuffle(&mut rng::stream(seed, 0));
    candidates.into_iter().take(n).cloned().collect()
}

/// Assigns every record to train or test, per class: `round(n_c * f)`
/// records (at least one, at most `n_c - 1`) go to test.
pub fn stratified_split(table: &FeatureTable, test_fraction: f64, seed: u64) -> Result<FeatureTable, TableError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(TableError::BadFraction(test_fraction));
    }
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, r) in table.records.iter().enumerate() {
        by_class.entry(r.grade).or_default().push(i);
    }
    let small: Vec<u8> = by_class.iter().filter(|(_, v)| v.len() < 2).map(|(g, _)| *g).collect();
    if !small.is_empty() {
        return Err(TableError::ClassTooSmall(small));
    }
    let mut out = table.clone();
    for (grade, mut idx) in by_class {
        idx.shuffle(&mut rng::stream(seed, grade as u64));
        let n = idx.len();
        let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
        for (k, &i) in idx.iter().enumerate() {
            out.records[i].split = if k < n_test { Split::Test } else { Split::Train };
        }
    }
    Ok(out)
}

/// Per-feature median of the training rows; used to fill missing values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MedianImputer {
    pub medians: Vec<f64>,
}

impl MedianImputer {
    /// A column with no observed value is filled with 0.
    pub fn fit(rows: &[Vec<Option<f64>>]) -> Result<Self, TableError> {
        let p = rows.first().ok_or(TableError::EmptyFit)?.len();
        let medians = (0..p)
            .map(|j| {
                let mut col: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
                if col.is_empty() {
                    return 0.0;
                }
                col.sort_by(f64::total_cmp);
                let m = col.len() / 2;
                if col.len() % 2 == 1 {
                    col[m]
                } else {
                    0.5 * (col[m - 1] + col[m])
                }
            })
            .collect();
        Ok(Self { medians })
    }

    pub fn transform(&self, rows: &[Vec<Option<f64>>]) -> Result<Vec<Vec<f64>>, TableError> {
        rows.iter()
            .map(|r| {
                if r.len() != self.medians.len() {
                    return Err(TableError::ColumnCount { expected: self.medians.len(), got: r.len() });
                }
                Ok(r.iter().zip(&self.medians).map(|(v, m)| v.unwrap_or(*m)).collect())
            })
            .collect()
    }
}

/// Per-feature `(x - min) / (max - min)` fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, TableError> {
        let p = rows.first().ok_or(TableError::EmptyFit)?.len();
        let mut min = vec![f64::INFINITY; p];
        let mut max = vec![f64::NEG_INFINITY; p];
        for r in rows {
            if r.len() != p {
                return Err(TableError::ColumnCount { expected: p, got: r.len() });
            }
            for j in 0..p {
                min[j] = min[j].min(r[j]);
                max[j] = max[j].max(r[j]);
            }
        }
        Ok(Self { min, max })
    }

    /// Constant columns map to 0; values outside the fitted range are not
    /// clipped.
    pub fn transform(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, TableError> {
        rows.iter()
            .map(|r| {
                if r.len() != self.min.len() {
                    return Err(TableError::ColumnCount { expected: self.min.len(), got: r.len() });
                }
                Ok(r.iter()
                    .enumerate()
                    .map(|(j, &x)| {
                        let span = self.max[j] - self.min[j];
                        if span > 0.0 {
                            (x - self.min[j]) / span
                        } else {
                            0.0
                        }
                    })
                    .collect())
            })
            .collect()
    }
}
