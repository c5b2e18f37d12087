//! Output plumbing: aligned text tables, TSV, and the versioned JSON
//! envelope every command emits.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

/// How results are rendered on stdout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    /// Aligned human-readable tables.
    Text,
    /// Tab-separated rows.
    Tsv,
    /// The JSON envelope.
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<OutputFormat, String> {
        match s {
            "text" => Ok(OutputFormat::Text),
            "tsv" => Ok(OutputFormat::Tsv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format '{other}' (text, tsv, json)")),
        }
    }
}

/// Machine-readable result wrapper; byte-stable for a fixed seed and input.
#[derive(Debug, Serialize)]
pub struct Envelope {
    pub tool_version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub params: serde_json::Value,
    pub metrics: serde_json::Value,
}

impl Envelope {
    pub fn new(
        command: &str,
        seed: Option<u64>,
        params: serde_json::Value,
        metrics: serde_json::Value,
    ) -> Envelope {
        Envelope {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            params,
            metrics,
        }
    }

    pub fn to_pretty_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("envelope serializes");
        text.push('\n');
        text
    }
}

/// One titled results table.
#[derive(Debug, Clone)]
pub struct Table {
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: impl Into<String>, headers: &[&str]) -> Table {
        Table {
            title: title.into(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.headers.len(), "ragged table row");
        self.rows.push(cells);
    }

    fn render_text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(String::len).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        out.push_str(&format!("## {}\n", self.title));
        let line = |cells: &[String], widths: &[usize]| -> String {
            cells
                .iter()
                .zip(widths)
                .map(|(cell, w)| format!("{cell:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        out.push_str(&line(&self.headers, &widths));
        out.push('\n');
        out.push_str(
            &widths
                .iter()
                .map(|w| "-".repeat(*w))
                .collect::<Vec<_>>()
                .join("  "),
        );
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row, &widths));
            out.push('\n');
        }
        out
    }

    fn render_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# {}\n", self.title));
        out.push_str(&self.headers.join("\t"));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }
}

/// Prints the result in the chosen format and, when an output directory is
/// given, writes the JSON envelope to `<dir>/<command>.json`.
pub fn emit(
    envelope: &Envelope,
    tables: &[Table],
    format: OutputFormat,
    out_dir: Option<&Path>,
) -> anyhow::Result<()> {
    let stdout = std::io::stdout();
    let mut handle = stdout.lock();
    match format {
        OutputFormat::Json => {
            handle.write_all(envelope.to_pretty_json().as_bytes())?;
        }
        OutputFormat::Text => {
            if let Some(seed) = envelope.seed {
                writeln!(handle, "seed: {seed}")?;
            }
            for table in tables {
                writeln!(handle, "{}", table.render_text())?;
            }
        }
        OutputFormat::Tsv => {
            if let Some(seed) = envelope.seed {
                writeln!(handle, "# seed: {seed}")?;
            }
            for table in tables {
                write!(handle, "{}", table.render_tsv())?;
            }
        }
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        let path = dir.join(format!("{}.json", envelope.command));
        std::fs::write(&path, envelope.to_pretty_json())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Fixed-precision cell formats keep every rendering deterministic.
pub fn num(x: f64) -> String {
    format!("{x:.6}")
}

pub fn num4(x: f64) -> String {
    format!("{x:.4}")
}
