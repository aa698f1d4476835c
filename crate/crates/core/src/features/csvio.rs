//! Feature-table CSV format.
//!
//! Leading lines starting with `#` are comments of the form `# key: value`;
//! `schema` names the grade schema and `provenance` carries a JSON object.
//! The header is `image_id,grade,gradable,comorbidity,split` followed by
//! canonical feature names. Missing values are empty cells; numbers are
//! written in shortest round-trip form (`{:?}`).

use std::path::Path;

use super::names::FeatureName;
use super::table::{Disease, FeatureTable, GradeSchema, Record, Split, TableError};

pub const META_COLUMNS: [&str; 5] = ["image_id", "grade", "gradable", "comorbidity", "split"];

/// Comment lines (`# key: value`) preceding the header.
pub fn comments(text: &str) -> Vec<(String, String)> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| {
            let body = l.trim_start_matches('#').trim();
            body.split_once(':').map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

pub fn to_csv_string(table: &FeatureTable, extra_comments: &[(String, String)]) -> Result<String, TableError> {
    let mut out = String::new();
    out.push_str(&format!("# schema: {}\n", table.schema.disease));
    for (k, v) in extra_comments {
        out.push_str(&format!("# {k}: {v}\n"));
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let header: Vec<String> = META_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(table.feature_names.iter().map(ToString::to_string))
        .collect();
    w.write_record(&header)?;
    for r in &table.records {
        let mut row = vec![
            r.image_id.clone(),
            r.grade.to_string(),
            r.gradable.to_string(),
            r.comorbidity.to_string(),
            r.split.as_str().to_string(),
        ];
        row.extend(r.features.iter().map(|v| v.map(|x| format!("{x:?}")).unwrap_or_default()));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| TableError::Io(e.into_error()))?;
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(out)
}

pub fn write_csv(table: &FeatureTable, path: &Path, extra_comments: &[(String, String)]) -> Result<(), TableError> {
    std::fs::write(path, to_csv_string(table, extra_comments)?)?;
    Ok(())
}

pub fn read_csv(path: &Path, disease: Option<Disease>) -> Result<FeatureTable, TableError> {
    parse_csv(&std::fs::read_to_string(path)?, disease)
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

/// Parses table text. `disease` selects the schema when the text carries
/// none, and must agree with it otherwise.
pub fn parse_csv(text: &str, disease: Option<Disease>) -> Result<FeatureTable, TableError> {
    let from_file = comments(text)
        .into_iter()
        .find(|(k, _)| k == "schema")
        .map(|(_, v)| v.parse::<Disease>())
        .transpose()?;
    let disease = match (from_file, disease) {
        (Some(f), Some(r)) if f != r => return Err(TableError::SchemaMismatch { file: f, requested: r }),
        (Some(d), _) | (None, Some(d)) => d,
        (None, None) => return Err(TableError::MissingSchema),
    };

    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut pos = [usize::MAX; 5];
    let mut features: Vec<(usize, FeatureName)> = Vec::new();
    for (i, h) in header.iter().enumerate() {
        if let Some(m) = META_COLUMNS.iter().position(|m| m == h) {
            if pos[m] != usize::MAX {
                return Err(TableError::DuplicateColumn(h.clone()));
            }
            pos[m] = i;
        } else {
            let name: FeatureName = h.parse().map_err(|_| TableError::UnknownColumn(h.clone()))?;
            if features.iter().any(|(_, n)| *n == name) {
                return Err(TableError::DuplicateColumn(h.clone()));
            }
            features.push((i, name));
        }
    }
    for (m, p) in META_COLUMNS.iter().zip(pos) {
        if p == usize::MAX {
            return Err(TableError::MissingColumn(m.to_string()));
        }
    }

    let mut table = FeatureTable::new(GradeSchema::new(disease), features.iter().map(|(_, n)| *n).collect());
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        let cell = |i: usize| rec.get(i).unwrap_or("").trim();
        let bad = |col: &str, v: &str| TableError::Parse { row, column: col.to_string(), value: v.to_string() };
        let grade: u8 = cell(pos[1]).parse().map_err(|_| bad("grade", cell(pos[1])))?;
        let gradable = parse_bool(cell(pos[2])).ok_or_else(|| bad("gradable", cell(pos[2])))?;
        let comorbidity = parse_bool(cell(pos[3])).ok_or_else(|| bad("comorbidity", cell(pos[3])))?;
        let split: Split = cell(pos[4]).parse().map_err(|_| bad("split", cell(pos[4])))?;
        let mut values = Vec::with_capacity(features.len());
        for (i, name) in &features {
            let s = cell(*i);
            values.push(if s.is_empty() {
                None
            } else {
                let v: f64 = s.parse().map_err(|_| bad(&name.to_string(), s))?;
                if !v.is_finite() {
                    return Err(bad(&name.to_string(), s));
                }
                Some(v)
            });
        }
        let id = cell(pos[0]).to_string();
        let mut r = Record::new(id, grade, values);
        r.gradable = gradable;
        r.comorbidity = comorbidity;
        r.split = split;
        table.push(r).map_err(|e| match e {
            TableError::InvalidGrade { grade, disease, .. } => TableError::InvalidGrade { row, grade, disease },
            other => other,
        })?;
    }
    Ok(table)
}
