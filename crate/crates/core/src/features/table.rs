//! Grade schemas, records and feature tables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::names::FeatureName;
use crate::params::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Disease {
    #[serde(rename = "DR")]
    Dr,
    #[serde(rename = "ME")]
    Me,
    #[serde(rename = "HTR")]
    Htr,
}

impl fmt::Display for Disease {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Disease::Dr => "DR",
            Disease::Me => "ME",
            Disease::Htr => "HTR",
        })
    }
}

impl FromStr for Disease {
    type Err = TableError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DR" => Ok(Disease::Dr),
            "ME" | "DME" => Ok(Disease::Me),
            "HTR" | "HR" => Ok(Disease::Htr),
            _ => Err(TableError::UnknownDisease(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GradeSchema {
    pub disease: Disease,
    pub grades: Vec<(u8, String)>,
}

impl GradeSchema {
    pub fn new(disease: Disease) -> Self {
        let text: &[&str] = match disease {
            Disease::Dr => &[
                "Grade 0: Absence of DR",
                "Grade 1: Mild DR",
                "Grade 2: Moderate DR",
                "Grade 3: Severe DR",
                "Grade 4: Signs of proliferative DR",
            ],
            Disease::Me => &[
                "Grade 0: No visible exudates",
                "Grade 1: Shortest distance between macula and exudates > one optic disc diameter",
                "Grade 2: Shortest distance between macula and exudates <= one optic disc diameter",
            ],
            Disease::Htr => &[
                "Grade 0: No visible abnormalities",
                "Grade 1: Diffuse arteriolar narrowing",
                "Grade 2: Grade 1 with focal arteriolar constriction",
                "Grade 3: Grade 2 with retinal hemorrhage",
                "Grade 4: Grade 3 with hard exudates, retinal edema, and optic disc swelling",
            ],
        };
        let grades = text.iter().enumerate().map(|(i, t)| (i as u8, t.to_string())).collect();
        Self { disease, grades }
    }

    pub fn n_grades(&self) -> usize {
        self.grades.len()
    }

    pub fn is_valid(&self, grade: u8) -> bool {
        self.grades.iter().any(|(g, _)| *g == grade)
    }

    pub fn description(&self, grade: u8) -> Option<&str> {
        self.grades.iter().find(|(g, _)| *g == grade).map(|(_, d)| d.as_str())
    }

    /// Disease present (1) or absent (0).
    pub fn binary_view(grade: u8) -> u8 {
        (grade > 0) as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl FromStr for Split {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "" | "unassigned" => Ok(Split::Unassigned),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub image_id: String,
    /// aligned with the owning table's `feature_names`; `None` = missing
    pub features: Vec<Option<f64>>,
    pub grade: u8,
    pub gradable: bool,
    pub comorbidity: bool,
    pub split: Split,
}

impl Record {
    pub fn new(image_id: impl Into<String>, grade: u8, features: Vec<Option<f64>>) -> Self {
        Self {
            image_id: image_id.into(),
            features,
            grade,
            gradable: true,
            comorbidity: false,
            split: Split::Unassigned,
        }
    }

    /// Usable for modeling: gradable and free of comorbidities.
    pub fn eligible(&self) -> bool {
        self.gradable && !self.comorbidity
    }
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("unknown disease {0:?} (expected DR, ME or HTR)")]
    UnknownDisease(String),
    #[error("row {row}: grade {grade} is not valid for {disease}")]
    InvalidGrade { row: usize, grade: u8, disease: Disease },
    #[error("row {row}: expected {expected} feature values, got {got}")]
    WidthMismatch { row: usize, expected: usize, got: usize },
    #[error("row {row}: duplicate image_id {id:?}")]
    DuplicateId { row: usize, id: String },
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("duplicate column {0:?}")]
    DuplicateColumn(String),
    #[error("row {row}, column {column:?}: cannot parse {value:?}")]
    Parse { row: usize, column: String, value: String },
    #[error("no grade schema: pass a disease or add a '# schema: <DR|ME|HTR>' line")]
    MissingSchema,
    #[error("schema in file ({file}) differs from requested ({requested})")]
    SchemaMismatch { file: Disease, requested: Disease },
    #[error("classes with fewer than 2 records: {0:?}")]
    ClassTooSmall(Vec<u8>),
    #[error("test fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("cannot fit on empty data")]
    EmptyFit,
    #[error("expected {expected} columns, got {got}")]
    ColumnCount { expected: usize, got: usize },
    #[error("image ids present in both train and test: {0:?}")]
    Leakage(Vec<String>),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureTable {
    pub schema: GradeSchema,
    pub feature_names: Vec<FeatureName>,
    pub records: Vec<Record>,
}

impl FeatureTable {
    pub fn new(schema: GradeSchema, feature_names: Vec<FeatureName>) -> Self {
        Self { schema, feature_names, records: Vec::new() }
    }

    /// Appends a record after checking its width, grade and id.
    pub fn push(&mut self, record: Record) -> Result<(), TableError> {
        let row = self.records.len() + 1;
        if record.features.len() != self.feature_names.len() {
            return Err(TableError::WidthMismatch {
                row,
                expected: self.feature_names.len(),
                got: record.features.len(),
            });
        }
        if !self.schema.is_valid(record.grade) {
            return Err(TableError::InvalidGrade { row, grade: record.grade, disease: self.schema.disease });
        }
        if self.records.iter().any(|r| r.image_id == record.image_id) {
            return Err(TableError::DuplicateId { row, id: record.image_id });
        }
        self.records.push(record);
        Ok(())
    }

    /// Record built from a feature vector; names absent from it are missing.
    pub fn record_from_vector(&self, image_id: &str, grade: u8, fv: &FeatureVector) -> Record {
        Record::new(image_id, grade, self.feature_names.iter().map(|&n| fv.get(n)).collect())
    }

    pub fn feature_vector(&self, index: usize) -> FeatureVector {
        let mut fv = FeatureVector::new();
        for (n, v) in self.feature_names.iter().zip(&self.records[index].features) {
            fv.set(*n, *v);
        }
        fv
    }

    pub fn column(&self, name: FeatureName) -> Option<usize> {
        self.feature_names.iter().position(|&n| n == name)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records per grade, optionally restricted to one split.
    pub fn class_counts(&self, split: Option<Split>) -> Vec<usize> {
        let mut counts = vec![0; self.schema.n_grades()];
        for r in self.records.iter().filter(|r| split.is_none_or(|s| r.split == s)) {
            counts[r.grade as usize] += 1;
        }
        counts
    }

    /// Table restricted to the records of one split.
    pub fn subset(&self, split: Split) -> FeatureTable {
        self.filtered(|r| r.split == split)
    }

    pub fn filtered(&self, keep: impl Fn(&Record) -> bool) -> FeatureTable {
        FeatureTable {
            schema: self.schema.clone(),
            feature_names: self.feature_names.clone(),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    /// Table restricted to the given feature columns (in the given order).
    pub fn select_columns(&self, names: &[FeatureName]) -> Result<FeatureTable, TableError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.column(*n).ok_or_else(|| TableError::UnknownColumn(n.to_string())))
            .collect::<Result<_, _>>()?;
        Ok(FeatureTable {
            schema: self.schema.clone(),
            feature_names: names.to_vec(),
            records: self
                .records
                .iter()
                .map(|r| Record { features: idx.iter().map(|&i| r.features[i]).collect(), ..r.clone() })
                .collect(),
        })
    }

    /// Raw feature rows and grade labels.
    pub fn rows(&self) -> (Vec<Vec<Option<f64>>>, Vec<usize>) {
        (
            self.records.iter().map(|r| r.features.clone()).collect(),
            self.records.iter().map(|r| r.grade as usize).collect(),
        )
    }

    /// Fails when an image id appears in both the train and the test split.
    pub fn check_disjoint_splits(&self) -> Result<(), TableError> {
        let train: std::collections::BTreeSet<&str> =
            self.records.iter().filter(|r| r.split == Split::Train).map(|r| r.image_id.as_str()).collect();
        let both: Vec<String> = self
            .records
            .iter()
            .filter(|r| r.split == Split::Test && train.contains(r.image_id.as_str()))
            .map(|r| r.image_id.clone())
            .collect();
        if both.is_empty() {
            Ok(())
        } else {
            Err(TableError::Leakage(both))
        }
    }
}
