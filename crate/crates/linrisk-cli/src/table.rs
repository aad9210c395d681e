//! Result tables: schema-versioned numeric columns plus run metadata,
//! emitted as CSV or JSON.

use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub experiment: String,
    pub code_version: String,
    pub seed: u64,
    pub wall_time_s: f64,
    /// Full configuration echo for reproducibility.
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultTable {
    pub schema_version: u32,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub metadata: Metadata,
}

impl ResultTable {
    pub fn new(experiment: &str, columns: &[&str], seed: u64, config: serde_json::Value) -> Self {
        ResultTable {
            schema_version: SCHEMA_VERSION,
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            metadata: Metadata {
                experiment: experiment.to_string(),
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                wall_time_s: 0.0,
                config,
            },
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    /// CSV: '.' decimal separator, '\n' line ends, header row,
    /// 17-significant-digit floats.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// JSON: columns as arrays plus a metadata object.
    pub fn to_json(&self) -> serde_json::Value {
        let mut cols = serde_json::Map::new();
        for (j, name) in self.columns.iter().enumerate() {
            let vals: Vec<serde_json::Value> = self
                .rows
                .iter()
                .map(|r| {
                    serde_json::Number::from_f64(r[j])
                        .map(serde_json::Value::Number)
                        .unwrap_or(serde_json::Value::Null)
                })
                .collect();
            cols.insert(name.clone(), serde_json::Value::Array(vals));
        }
        serde_json::json!({
            "schema_version": self.schema_version,
            "columns": self.columns,
            "data": cols,
            "metadata": self.metadata,
        })
    }

    pub fn emit(&self, format: crate::config::OutputFormat) -> String {
        match format {
            crate::config::OutputFormat::Csv => self.to_csv(),
            crate::config::OutputFormat::Json => {
                serde_json::to_string_pretty(&self.to_json()).expect("json serialization")
            }
        }
    }
}

/// 17 significant digits in scientific notation.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let t = ResultTable::new("x", &["a", "b"], 0, serde_json::json!({}));
        assert_eq!(t.to_csv(), "a,b\n");
    }

    #[test]
    fn csv_round_trips_exactly() {
        let mut t = ResultTable::new("x", &["a", "b"], 0, serde_json::json!({}));
        let vals = [1.0 / 3.0, -2.5e-17];
        t.push(vals.to_vec());
        let csv = t.to_csv();
        let line = csv.lines().nth(1).unwrap();
        for (cell, want) in line.split(',').zip(vals) {
            let parsed: f64 = cell.parse().unwrap();
            assert_eq!(parsed, want, "17 significant digits round-trip f64 exactly");
        }
    }

    #[test]
    fn json_has_config_echo() {
        let t = ResultTable::new("x", &["a"], 7, serde_json::json!({"k": 3}));
        let j = t.to_json();
        assert_eq!(j["metadata"]["config"]["k"], 3);
        assert_eq!(j["metadata"]["seed"], 7);
    }
}
