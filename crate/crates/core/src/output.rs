//! CSV output conventions: a header row preceded by `#` metadata lines that
//! carry the seed and config hash, with fixed-precision floats so repeated
//! runs are byte-identical.

use std::fmt::Write as _;

use crate::error::Error;

/// Builder for the crate's CSV files.
pub struct CsvDoc {
    buf: String,
}

impl CsvDoc {
    pub fn new(tool: &str) -> CsvDoc {
        let mut buf = String::new();
        let _ = writeln!(buf, "# atomtip {tool}");
        CsvDoc { buf }
    }

    pub fn meta(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.buf, "# {key}: {value}");
        self
    }

    pub fn header(&mut self, columns: &[&str]) -> &mut Self {
        let _ = writeln!(self.buf, "{}", columns.join(","));
        self
    }

    pub fn row(&mut self, values: &[f64]) -> &mut Self {
        let mut first = true;
        for v in values {
            if !first {
                self.buf.push(',');
            }
            let _ = write!(self.buf, "{v:.6e}");
            first = false;
        }
        self.buf.push('\n');
        self
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

/// Parsed columns of a data CSV, plus any `key: value` metadata found in
/// `#` comment lines.
pub struct CsvData {
    pub columns: Vec<Vec<f64>>,
    pub metadata: Vec<(String, String)>,
}

/// Read a numeric CSV with optional `#` metadata lines and a header row.
pub fn read_csv(text: &str) -> Result<CsvData, Error> {
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut metadata = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once(':') {
                metadata.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                if columns.is_empty() {
                    columns = vec![Vec::new(); values.len()];
                } else if values.len() != columns.len() {
                    return Err(Error::InvalidInput(format!(
                        "ragged CSV row: expected {} fields, got {}",
                        columns.len(),
                        values.len()
                    )));
                }
                for (c, v) in columns.iter_mut().zip(values) {
                    c.push(v);
                }
            }
            Err(_) => {
                // Header row; only accepted before any data.
                if !columns.is_empty() && !columns[0].is_empty() {
                    return Err(Error::InvalidInput(format!("non-numeric row: {line}")));
                }
            }
        }
    }
    if columns.is_empty() || columns[0].is_empty() {
        return Err(Error::InvalidInput("CSV contains no data rows".into()));
    }
    Ok(CsvData { columns, metadata })
}
