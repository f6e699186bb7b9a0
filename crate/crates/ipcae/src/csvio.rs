//! Dataset CSV files: header row, comma-separated, `.` decimal point, empty
//! cell = missing value. One optional column holds class labels.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ipcae_core::data::Dataset;
use ipcae_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label column, by header name or 0-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CsvOptions {
    pub label: Option<LabelColumn>,
    /// Columns dropped before parsing (identifiers, free text).
    pub exclude: Vec<String>,
}

pub fn read_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let file = File::open(path)
        .map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
    parse_csv(file, opts).map_err(|e| match e {
        Error::Input(msg) => Error::input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses a dataset. Labels become dense class indices in order of first
/// appearance.
pub fn parse_csv(input: impl Read, opts: &CsvOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(Error::input("empty file")),
        Some(r) => r.map_err(|e| Error::input(format!("line 1: {e}")))?,
    };
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    for ex in &opts.exclude {
        if !names.contains(ex) {
            return Err(Error::input(format!(
                "excluded column '{ex}' not in header"
            )));
        }
    }
    let label_col = match &opts.label {
        None => None,
        Some(LabelColumn::Index(i)) if *i < names.len() => Some(*i),
        Some(LabelColumn::Index(i)) => {
            return Err(Error::input(format!(
                "label column {i} out of range ({} columns)",
                names.len()
            )))
        }
        Some(LabelColumn::Name(n)) => Some(
            names
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| Error::input(format!("label column '{n}' not in header")))?,
        ),
    };
    let feature_cols: Vec<usize> = (0..names.len())
        .filter(|&j| Some(j) != label_col && !opts.exclude.contains(&names[j]))
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::input("no feature columns"));
    }

    let mut values = Vec::new();
    let mut missing = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    for (r, record) in records.enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| Error::input(format!("line {line}: {e}")))?;
        if record.len() != names.len() {
            return Err(Error::input(format!(
                "line {line}: {} fields, expected {}",
                record.len(),
                names.len()
            )));
        }
        for &j in &feature_cols {
            let cell = &record[j];
            if cell.is_empty() {
                values.push(f64::NAN);
                missing.push(true);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::input(format!(
                        "line {line}, column {} ('{}'): not a number: '{cell}'",
                        j + 1,
                        names[j]
                    ))
                })?;
                values.push(v);
                missing.push(false);
            }
        }
        if let Some(j) = label_col {
            let cell = &record[j];
            if cell.is_empty() {
                return Err(Error::input(format!("line {line}: empty label")));
            }
            let class = match class_names.iter().position(|c| c == cell) {
                Some(c) => c,
                None => {
                    class_names.push(cell.to_string());
                    class_names.len() - 1
                }
            };
            labels.push(class);
        }
    }
    let n = missing.len() / feature_cols.len();
    if n == 0 {
        return Err(Error::input("no data rows"));
    }
    let x = Tensor::matrix(n, feature_cols.len(), values)?;
    let mut ds = Dataset::new(x, label_col.map(|_| labels))?;
    ds.missing = missing;
    ds.class_names = class_names;
    ds.feature_names = feature_cols.iter().map(|&j| names[j].clone()).collect();
    Ok(ds)
}

/// Writes features (shortest round-trip formatting) and, when present, the
/// labels as a final `label` column holding the class names.
pub fn write_csv(path: &Path, ds: &Dataset) -> Result<()> {
    let mut buf = Vec::new();
    to_writer(&mut buf, ds)?;
    std::fs::write(path, buf).map_err(|e| Error::write(path, e))
}

pub fn to_writer(out: impl Write, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::input(format!("csv write failed: {e}"));
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    if ds.labels.is_some() {
        header.push("label");
    }
    w.write_record(&header).map_err(io)?;
    for i in 0..ds.n() {
        let mut row: Vec<String> = (0..ds.d())
            .map(|j| {
                if ds.is_missing(i, j) {
                    String::new()
                } else {
                    format!("{}", ds.x.get(i, j))
                }
            })
            .collect();
        if let Some(y) = &ds.labels {
            row.push(
                ds.class_names
                    .get(y[i])
                    .cloned()
                    .unwrap_or_else(|| y[i].to_string()),
            );
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::input(format!("csv write failed: {e}")))?;
    Ok(())
}

/// Renumbers classes to follow `names`, so that a file whose labels appear
/// in a different order lines up with an earlier run.
pub fn relabel(ds: &Dataset, names: &[String]) -> Result<Dataset> {
    let Some(y) = &ds.labels else {
        return Ok(ds.clone());
    };
    let map: Vec<usize> = ds
        .class_names
        .iter()
        .map(|c| {
            names
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| Error::input(format!("class '{c}' was not seen in training")))
        })
        .collect::<Result<_>>()?;
    let mut out = ds.clone();
    out.labels = Some(y.iter().map(|&c| map[c]).collect());
    out.class_names = names.to_vec();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str, label: Option<LabelColumn>) -> Result<Dataset> {
        parse_csv(
            s.as_bytes(),
            &CsvOptions {
                label,
                exclude: Vec::new(),
            },
        )
    }

    #[test]
    fn numeric_file() {
        let ds = parse("a,b\n1,2\n3,4\n5,6\n", None).unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 2));
        assert_eq!(ds.x.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(ds.feature_names, ["a", "b"]);
    }

    #[test]
    fn empty_cell_is_missing() {
        let ds = parse("a,b\n1,\n3,4\n", None).unwrap();
        assert!(ds.is_missing(0, 1) && !ds.is_missing(1, 1));
        assert!(ds.x.get(0, 1).is_nan());
    }

    #[test]
    fn labels_by_first_appearance() {
        let ds = parse("x,y\n1,a\n2,b\n3,a\n", Some(LabelColumn::Name("y".into()))).unwrap();
        assert_eq!(ds.labels, Some(vec![0, 1, 0]));
        assert_eq!(ds.class_names, ["a", "b"]);
        let by_index = parse("x,y\n1,a\n2,b\n3,a\n", Some(LabelColumn::Index(1))).unwrap();
        assert_eq!(by_index, ds);
    }

    #[test]
    fn errors_name_location() {
        let ragged = parse("a,b\n1,2\n3\n", None).unwrap_err().to_string();
        assert!(ragged.contains("line 3"), "{ragged}");
        let text = parse("a,b\n1,2\n3,x\n", None).unwrap_err().to_string();
        assert!(
            text.contains("line 3") && text.contains("column 2"),
            "{text}"
        );
        assert!(parse("", None).unwrap_err().to_string().contains("empty"));
        assert!(parse("a,b\n", None).is_err());
        assert!(parse("a\n1\n", Some(LabelColumn::Name("z".into()))).is_err());
    }

    #[test]
    fn excluded_columns_are_dropped() {
        let opts = CsvOptions {
            label: Some(LabelColumn::Name("class".into())),
            exclude: vec!["id".into()],
        };
        let ds = parse_csv("id,v,class\nm1,0.5,c\nm2,0.7,d\n".as_bytes(), &opts).unwrap();
        assert_eq!(ds.feature_names, ["v"]);
        assert_eq!(ds.x.data(), &[0.5, 0.7]);
    }

    #[test]
    fn relabel_follows_reference_order() {
        let ds = parse("x,y\n1,b\n2,a\n", Some(LabelColumn::Index(1))).unwrap();
        let re = relabel(&ds, &["a".into(), "b".into()]).unwrap();
        assert_eq!(re.labels, Some(vec![1, 0]));
        assert!(relabel(&ds, &["a".into()]).is_err());
    }
}
