use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sdrsma::{Error, Result};
use serde::Serialize;

use crate::experiment::ExperimentResult;

pub const CSV_HEADER: [&str; 7] = [
    "scheme",
    "pt_dbm",
    "csi_mode",
    "mean_sr_bpcu",
    "ci_halfwidth",
    "trials",
    "subset_winner_mode",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotPoint {
    pub pt_dbm: f64,
    pub mean_sr_bpcu: f64,
    pub ci_halfwidth: f64,
    pub trials: usize,
}

/// Plot data: `series[scheme][csi_mode]` lists points in sweep order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotData {
    pub x: &'static str,
    pub y: &'static str,
    pub confidence: f64,
    pub series: BTreeMap<String, BTreeMap<String, Vec<PlotPoint>>>,
}

impl PlotData {
    pub fn from_result(result: &ExperimentResult, confidence: f64) -> Self {
        let mut series: BTreeMap<String, BTreeMap<String, Vec<PlotPoint>>> = BTreeMap::new();
        for c in &result.cells {
            series
                .entry(c.scheme.name().to_string())
                .or_default()
                .entry(c.csi_mode.name().to_string())
                .or_default()
                .push(PlotPoint {
                    pt_dbm: c.pt_dbm,
                    mean_sr_bpcu: c.mean,
                    ci_halfwidth: c.ci_halfwidth,
                    trials: c.trials(),
                });
        }
        Self {
            x: "pt_dbm",
            y: "mean_sr_bpcu",
            confidence,
            series,
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One row per cell, in the order of `result.cells`.
pub fn csv_text(result: &ExperimentResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for c in &result.cells {
        w.write_record([
            c.scheme.name().to_string(),
            c.pt_dbm.to_string(),
            c.csi_mode.name().to_string(),
            format!("{:.6}", c.mean),
            format!("{:.6}", c.ci_halfwidth),
            c.trials().to_string(),
            c.winner_mode(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn emit_outputs(result: &ExperimentResult, confidence: f64, csv_path: &Path, plot_path: &Path) -> Result<()> {
    for path in [csv_path, plot_path] {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_error(dir))?;
        }
    }
    fs::write(csv_path, csv_text(result)?).map_err(io_error(csv_path))?;
    let plot = serde_json::to_string_pretty(&PlotData::from_result(result, confidence))?;
    fs::write(plot_path, plot + "\n").map_err(io_error(plot_path))
}
