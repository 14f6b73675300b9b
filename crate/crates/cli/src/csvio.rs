//! Dataset CSV ingestion and the output-file conventions shared by all
//! commands: UTF-8, comma separators, one header row, and a leading
//! `# config:` comment carrying the resolved configuration.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use pairmem_core::{DataError, VectorDataset};

#[derive(Debug)]
pub enum CsvError {
    Io(io::Error),
    Empty,
    TooFewColumns { line: usize },
    Ragged { line: usize, expected: usize, got: usize },
    BadNumber { line: usize, field: String },
    BadLabel { line: usize, field: String },
    Data(DataError),
}

impl fmt::Display for CsvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CsvError::Io(e) => write!(f, "{e}"),
            CsvError::Empty => write!(f, "no data rows"),
            CsvError::TooFewColumns { line } => {
                write!(f, "line {line}: need at least one feature and a label")
            }
            CsvError::Ragged { line, expected, got } => {
                write!(f, "line {line}: row has {got} fields, expected {expected}")
            }
            CsvError::BadNumber { line, field } => {
                write!(f, "line {line}: `{field}` is not a finite number")
            }
            CsvError::BadLabel { line, field } => {
                write!(f, "line {line}: `{field}` is not a non-negative integer label")
            }
            CsvError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CsvError {}

impl From<io::Error> for CsvError {
    fn from(e: io::Error) -> Self {
        CsvError::Io(e)
    }
}

impl From<DataError> for CsvError {
    fn from(e: DataError) -> Self {
        CsvError::Data(e)
    }
}

/// Shortest decimal that parses back to the same f64; `{}` on f64 already
/// guarantees the round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Loads rows of `d_in` reals plus a trailing integer label. A header row
/// is detected by a non-numeric first token; blank and `#` lines are
/// skipped. Errors carry 1-based line numbers of the source file.
pub fn load_csv(path: &Path) -> Result<VectorDataset, CsvError> {
    let text = fs::read_to_string(path)?;
    let mut samples: Vec<(Vec<f64>, u32)> = Vec::new();
    let mut width: Option<usize> = None;
    let mut saw_row = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = content.split(',').map(str::trim).collect();
        let first_is_numeric = fields[0].parse::<f64>().is_ok();
        if !saw_row && !first_is_numeric {
            // Header row.
            saw_row = true;
            continue;
        }
        saw_row = true;
        if fields.len() < 2 {
            return Err(CsvError::TooFewColumns { line });
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(CsvError::Ragged {
                    line,
                    expected: w,
                    got: fields.len(),
                })
            }
            Some(_) => {}
        }
        let (label_field, feature_fields) = fields.split_last().expect("len >= 2");
        let mut features = Vec::with_capacity(feature_fields.len());
        for field in feature_fields {
            let v: f64 = field.parse().map_err(|_| CsvError::BadNumber {
                line,
                field: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(CsvError::BadNumber {
                    line,
                    field: field.to_string(),
                });
            }
            features.push(v);
        }
        let label: u32 = label_field.parse().map_err(|_| CsvError::BadLabel {
            line,
            field: label_field.to_string(),
        })?;
        samples.push((features, label));
    }
    if samples.is_empty() {
        return Err(CsvError::Empty);
    }
    Ok(VectorDataset::new(samples)?)
}

/// Writes a complete output file: config comment, header, rows, one `\n`
/// line terminator each.
pub fn write_csv(
    path: &Path,
    resolved_config: &str,
    header: &str,
    rows: &[String],
) -> io::Result<()> {
    let mut out = String::with_capacity(rows.len() * 32 + 128);
    out.push_str("# config: ");
    out.push_str(resolved_config);
    out.push('\n');
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let file = tempfile::NamedTempFile::new().unwrap();
        fs::write(file.path(), content).unwrap();
        file
    }

    #[test]
    fn loads_plain_rows() {
        let file = write_tmp("1.0,2.0,0\n1.1,2.1,0\n5.0,5.0,1\n5.1,5.2,1\n");
        let ds = load_csv(file.path()).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.input_dim(), 2);
        assert_eq!(ds.classes(), vec![0, 1]);
    }

    #[test]
    fn detects_and_skips_a_header() {
        let file = write_tmp("x1,x2,label\n1.0,2.0,0\n1.1,2.1,0\n");
        let ds = load_csv(file.path()).unwrap();
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn ragged_row_names_the_line() {
        let file = write_tmp("1.0,2.0,0\n1.0,0\n");
        match load_csv(file.path()).unwrap_err() {
            CsvError::Ragged { line: 2, expected: 3, got: 2 } => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_feature_names_the_line() {
        let file = write_tmp("1.0,2.0,0\n1.0,oops,0\n");
        match load_csv(file.path()).unwrap_err() {
            CsvError::BadNumber { line: 2, field } => assert_eq!(field, "oops"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fractional_label_is_rejected() {
        let file = write_tmp("1.0,2.0,0.5\n");
        match load_csv(file.path()).unwrap_err() {
            CsvError::BadLabel { line: 1, field } => assert_eq!(field, "0.5"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        let file = write_tmp("");
        assert!(matches!(load_csv(file.path()).unwrap_err(), CsvError::Empty));
        let header_only = write_tmp("x,y,label\n");
        assert!(matches!(
            load_csv(header_only.path()).unwrap_err(),
            CsvError::Empty
        ));
    }

    #[test]
    fn singleton_class_is_rejected_by_the_dataset() {
        let file = write_tmp("1.0,2.0,0\n1.1,2.1,0\n5.0,5.0,1\n");
        assert!(matches!(
            load_csv(file.path()).unwrap_err(),
            CsvError::Data(DataError::SingletonClass { label: 1 })
        ));
    }

    #[test]
    fn float_formatting_round_trips() {
        for v in [0.1, 1e-9, 2.0 / 3.0, -0.52, 123456.789, 5e-324] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(0.5), "0.5");
    }

    #[test]
    fn write_csv_layout_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_csv(&path, "k=v", "a,b", &["1,2".into(), "3,4".into()]).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            "# config: k=v\na,b\n1,2\n3,4\n"
        );
    }
}
