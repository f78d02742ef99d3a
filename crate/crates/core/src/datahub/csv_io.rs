//! CSV dataset files: header `x0,...,x{d-1},y1,y2`, empty cell = missing label.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{Sample, TaskKind};
use crate::error::{Error, Result};

pub fn load_csv(path: impl AsRef<Path>, task: TaskKind) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("{}: unreadable header: {e}", path.display())))?
        .clone();
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Schema(format!("{}: missing column `{name}`", path.display())))
    };
    let y1_col = find("y1")?;
    let y2_col = find("y2")?;
    let d = cols.iter().filter(|c| c.starts_with('x')).count();
    if d == 0 {
        return Err(Error::Schema(format!("{}: no feature columns", path.display())));
    }
    let x_cols = (0..d)
        .map(|j| find(&format!("x{j}")))
        .collect::<Result<Vec<_>>>()?;

    let mut samples = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let cell = |c: usize| rec.get(c).unwrap_or("").trim();
        let mut x = Vec::with_capacity(d);
        for (j, &c) in x_cols.iter().enumerate() {
            let v: f64 = cell(c).parse().map_err(|_| Error::Parse {
                row,
                column: format!("x{j}"),
                message: format!("`{}` is not a number", cell(c)),
            })?;
            x.push(v);
        }
        let label = |c: usize, name: &str| -> Result<Option<f64>> {
            let raw = cell(c);
            if raw.is_empty() {
                return Ok(None);
            }
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                message: format!("`{raw}` is not a number"),
            })?;
            if task.is_classification() && v != 0.0 && v != 1.0 {
                return Err(Error::Parse {
                    row,
                    column: name.to_string(),
                    message: format!("classification label must be 0 or 1, got {raw}"),
                });
            }
            Ok(Some(v))
        };
        let y1 = label(y1_col, "y1")?;
        let y2 = label(y2_col, "y2")?;
        samples.push(Sample::new(x, y1, y2));
    }
    Ok(samples)
}

/// Writes samples with every float at 17 significant digits, LF line endings.
pub fn write_csv(path: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    let path = path.as_ref();
    let d = samples.first().map_or(0, |s| s.x.len());
    let mut out = String::new();
    for j in 0..d {
        out.push_str(&format!("x{j},"));
    }
    out.push_str("y1,y2\n");
    let fmt = |v: f64| format!("{v:.16e}");
    for s in samples {
        for v in &s.x {
            out.push_str(&fmt(*v));
            out.push(',');
        }
        if let Some(v) = s.y1 {
            out.push_str(&fmt(v));
        }
        out.push(',');
        if let Some(v) = s.y2 {
            out.push_str(&fmt(v));
        }
        out.push('\n');
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(body: &str, task: TaskKind) -> Result<Vec<Sample>> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, body).unwrap();
        load_csv(&p, task)
    }

    #[test]
    fn empty_label_cell_is_missing() {
        let s = load_str("x0,x1,y1,y2\n0.5,1.0,,1\n", TaskKind::BinaryClassification).unwrap();
        assert_eq!(s, vec![Sample::new(vec![0.5, 1.0], None, Some(1.0))]);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(load_str("x0,x1,y1,y2\n", TaskKind::Regression).unwrap().is_empty());
    }

    #[test]
    fn bad_feature_names_the_row() {
        let err = load_str("x0,x1,y1,y2\n1,2,3,4\n0.5,abc,1,1\n", TaskKind::Regression).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "x1");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_label_column_is_a_schema_error() {
        let err = load_str("x0,x1,y1\n1,2,3\n", TaskKind::Regression).unwrap_err();
        assert!(matches!(err, Error::Schema(ref m) if m.contains("y2")));
    }

    #[test]
    fn non_binary_classification_label_is_rejected() {
        assert!(load_str("x0,y1,y2\n1,2,1\n", TaskKind::BinaryClassification).is_err());
    }
}
