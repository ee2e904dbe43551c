//! Files written into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub struct OutputDir {
    dir: PathBuf,
}

/// One axis of a plot: a CSV column plus how to draw it.
#[derive(Debug, Clone, Serialize)]
pub struct Axis {
    pub column: &'static str,
    pub label: &'static str,
    /// `linear` or `log`.
    pub scale: &'static str,
}

impl Axis {
    pub fn linear(column: &'static str, label: &'static str) -> Self {
        Self { column, label, scale: "linear" }
    }

    pub fn log(column: &'static str, label: &'static str) -> Self {
        Self { column, label, scale: "log" }
    }
}

/// Sidecar describing how to plot a CSV file.
#[derive(Debug, Clone, Serialize)]
pub struct PlotSpec {
    pub title: String,
    pub data: String,
    pub x: Axis,
    pub y: Vec<Axis>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn write(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text)?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(format!("json: {e}")))?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Writes `stem.csv` and its sidecar `stem.plot.json`.
    pub fn plot(&self, stem: &str, csv: &str, title: &str, x: Axis, y: Vec<Axis>) -> Result<(), CliError> {
        let data = format!("{stem}.csv");
        self.write(&data, csv)?;
        let spec = PlotSpec { title: title.to_string(), data, x, y };
        self.json(&format!("{stem}.plot.json"), &spec)?;
        Ok(())
    }
}
