use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::types::{Dataset, Example, Instance, Label};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvLabelKind {
    Class,
    Real,
}

/// Which column holds the label and how to read it. Every other column is
/// a numeric feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub label_column: String,
    pub label_kind: CsvLabelKind,
}

/// Per-feature min-max constants. A constant column has `scale == 0` and
/// normalises to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub columns: Vec<String>,
    pub min: Vec<f64>,
    pub scale: Vec<f64>,
    /// Original class names in index order (class labels only).
    pub classes: Vec<String>,
}

impl Normalization {
    pub fn denormalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.scale))
            .map(|(v, (m, s))| m + v * s)
            .collect()
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<(Dataset, Normalization)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AuditError::Io(format!("{}: {e}", path.display())))?;
    parse_csv(&text, schema, &path.display().to_string())
}

/// Parses CSV text: header row, then one example per row. Line numbers in
/// errors are 1-based and count the header.
pub fn parse_csv(text: &str, schema: &CsvSchema, provenance: &str) -> Result<(Dataset, Normalization)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| AuditError::Parse { line: 1, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    let label_at = header
        .iter()
        .position(|h| *h == schema.label_column)
        .ok_or_else(|| AuditError::SchemaMismatch(format!("no column named {:?}", schema.label_column)))?;
    let columns: Vec<String> = header.iter().enumerate().filter(|(i, _)| *i != label_at).map(|(_, h)| h.clone()).collect();
    if columns.is_empty() {
        return Err(AuditError::SchemaMismatch("no feature columns".into()));
    }

    let mut raw: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut classes: Vec<String> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| AuditError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(AuditError::SchemaMismatch(format!(
                "line {line}: {} fields, header has {}",
                rec.len(),
                header.len()
            )));
        }
        let mut x = Vec::with_capacity(columns.len());
        for (i, field) in rec.iter().enumerate() {
            if i == label_at {
                continue;
            }
            let v: f64 = field
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| AuditError::NonNumericFeature { line, column: header[i].clone() })?;
            x.push(v);
        }
        let field = &rec[label_at];
        labels.push(match schema.label_kind {
            CsvLabelKind::Class => {
                let id = match classes.iter().position(|c| c == field) {
                    Some(id) => id,
                    None => {
                        classes.push(field.to_string());
                        classes.len() - 1
                    }
                };
                Label::Class(id)
            }
            CsvLabelKind::Real => Label::Real(field.parse().map_err(|_| AuditError::Parse {
                line,
                message: format!("label {field:?} is not a number"),
            })?),
        });
        raw.push(x);
    }
    if raw.is_empty() {
        return Err(AuditError::EmptyDataset);
    }

    let d = columns.len();
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for x in &raw {
        for j in 0..d {
            min[j] = min[j].min(x[j]);
            max[j] = max[j].max(x[j]);
        }
    }
    let scale: Vec<f64> = min.iter().zip(&max).map(|(a, b)| b - a).collect();
    let examples = raw
        .into_iter()
        .zip(labels)
        .map(|(x, y)| {
            let z = (0..d).map(|j| if scale[j] > 0.0 { (x[j] - min[j]) / scale[j] } else { 0.0 }).collect();
            Example::new(Instance::Dense(z), y)
        })
        .collect();
    let mut ds = Dataset::new(examples, provenance)?;
    if schema.label_kind == CsvLabelKind::Class {
        ds = ds.with_num_classes(classes.len())?;
    }
    Ok((ds, Normalization { columns, min, scale, classes }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class_schema() -> CsvSchema {
        CsvSchema { label_column: "species".into(), label_kind: CsvLabelKind::Class }
    }

    #[test]
    fn small_file_keeps_row_order() {
        let text = "a,b,species\n1,5,x\n3,5,y\n2,5,x\n";
        let (ds, norm) = parse_csv(text, &class_schema(), "t").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.examples()[1].instance, Instance::Dense(vec![1.0, 0.0]));
        assert_eq!(ds.examples()[2].instance, Instance::Dense(vec![0.5, 0.0]));
        assert_eq!(ds.examples()[2].label, Label::Class(0));
        assert_eq!(norm.classes, vec!["x", "y"]);
        assert_eq!(norm.denormalize(&[0.5, 0.0]), vec![2.0, 5.0]);
    }

    #[test]
    fn errors_carry_location() {
        let err = parse_csv("a,species\n1,x\nfoo,y\n", &class_schema(), "t").unwrap_err();
        assert_eq!(err, AuditError::NonNumericFeature { line: 3, column: "a".into() });
        assert!(matches!(parse_csv("a,b\n1,2\n", &class_schema(), "t"), Err(AuditError::SchemaMismatch(_))));
        let real = CsvSchema { label_column: "y".into(), label_kind: CsvLabelKind::Real };
        assert!(matches!(parse_csv("a,y\n1,2\n1,q\n", &real, "t"), Err(AuditError::Parse { line: 3, .. })));
    }

    #[test]
    fn iris_shaped_file_has_balanced_classes() {
        let mut text = String::from("sl,sw,pl,pw,class\n");
        for i in 0..150 {
            let c = ["setosa", "versicolor", "virginica"][i / 50];
            text.push_str(&format!("{},{},{},{},{c}\n", 4.0 + i as f64 * 0.02, 3.0, 1.0 + (i % 7) as f64, 0.2));
        }
        let schema = CsvSchema { label_column: "class".into(), label_kind: CsvLabelKind::Class };
        let (ds, _) = parse_csv(&text, &schema, "iris").unwrap();
        let mut counts = [0; 3];
        for e in ds.examples() {
            if let Label::Class(c) = e.label {
                counts[c] += 1;
            }
        }
        assert_eq!(counts, [50, 50, 50]);
        assert_eq!(ds.dim(), 4);
    }
}
