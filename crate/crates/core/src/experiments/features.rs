use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// Numeric feature rows read from a comma-separated file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    rows: Vec<Vec<f64>>,
    ncols: usize,
    source: String,
}

impl FeatureTable {
    pub fn new(rows: Vec<Vec<f64>>, source: String) -> Result<Self> {
        let ncols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || ncols == 0 {
            return Err(Error::Ingestion(format!("{source}: no feature rows")));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(Error::Ingestion(format!(
                    "{source}: row {} has {} columns, expected {ncols}",
                    i + 1,
                    r.len()
                )));
            }
        }
        Ok(Self { rows, ncols, source })
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

/// Parses comma-separated features. A first record with any non-numeric field is taken as a header.
pub fn parse_features<R: Read>(reader: R, source: &str) -> Result<FeatureTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::Ingestion(format!("{source}: row {line}: {e}")))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) => {
                if let Some(c) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Ingestion(format!(
                        "{source}: row {line}, column {}: non-finite value",
                        c + 1
                    )));
                }
                rows.push(values);
            }
            Err(_) if line == 1 => continue,
            Err(_) => {
                let c = record.iter().position(|f| f.parse::<f64>().is_err()).unwrap_or(0);
                return Err(Error::Ingestion(format!(
                    "{source}: row {line}, column {}: cannot parse {:?} as a number",
                    c + 1,
                    record.get(c).unwrap_or("")
                )));
            }
        }
    }
    FeatureTable::new(rows, source.to_string())
}

pub fn load_feature_file(path: &Path) -> Result<FeatureTable> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    parse_features(file, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_detected() {
        let t = parse_features("a,b\n1,2\n3,4\n".as_bytes(), "t").unwrap();
        assert_eq!((t.nrows(), t.ncols()), (2, 2));
        let t = parse_features("1,2\n3,4\n".as_bytes(), "t").unwrap();
        assert_eq!(t.nrows(), 2);
        assert_eq!(t.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn malformed_rows_name_the_row() {
        let err = parse_features("1,2\n3,x\n".as_bytes(), "t").unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
        let err = parse_features("1,2\n3\n".as_bytes(), "t").unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
        assert!(parse_features("".as_bytes(), "t").is_err());
        assert!(load_feature_file(Path::new("/nonexistent/features.csv")).is_err());
    }
}
