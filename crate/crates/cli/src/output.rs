//! CSV emission: every file starts with a `#` comment carrying the full
//! parameter manifest and tool version, then a header row, then data rows
//! with floats at 17 significant digits (round-trip safe for f64).

use std::path::Path;

use anyhow::{Context, Result};

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Table {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

pub fn render_csv(manifest: &serde_json::Value, table: &Table) -> String {
    let mut out = String::new();
    out.push_str("# ");
    out.push_str(&manifest.to_string());
    out.push('\n');
    out.push_str(&table.header.join(","));
    out.push('\n');
    for row in &table.rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, manifest: &serde_json::Value, table: &Table) -> Result<()> {
    std::fs::write(path, render_csv(manifest, table))
        .with_context(|| format!("writing {}", path.display()))
}

pub fn manifest(command: &str, params: serde_json::Value) -> serde_json::Value {
    serde_json::json!({
        "tool": "qlimit",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "params": params,
    })
}
