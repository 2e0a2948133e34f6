use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::BifurcationReport;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("cannot write {path}")]
    IoFailure { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

/// Column names of every CSV table, in file order.
pub const TABLES: [(&str, &[&str]); 7] = [
    ("dispersion.csv", &["tau", "sigma"]),
    ("bloch.csv", &["t", "fraction", "tau", "j", "mu"]),
    ("curvature.csv", &["t", "mu0", "mu2", "c_tau", "c_fd", "band"]),
    ("morse.csv", &["t", "M", "n0", "n", "n0_raw", "n_raw", "n0_tally", "n_tally", "band"]),
    ("tau_roots.csv", &["t", "j", "fraction", "tau"]),
    ("subharmonic.csv", &["M", "t_M", "crossing_number", "n_star", "morse_before", "morse_after", "kernel_value", "band"]),
    ("monitors.csv", &["t", "max_slope", "min_r_minus_xi", "min_bottom_velocity", "lambda_t", "period_bound_ok"]),
];

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::IoFailure { path: path.to_path_buf(), source }
}

fn rows(report: &BifurcationReport, table: &str) -> Vec<Vec<String>> {
    let s = |v: f64| v.to_string();
    match table {
        "dispersion.csv" => {
            let t = &report.dispersion.table;
            t.tau.iter().zip(&t.sigma).map(|(a, b)| vec![s(*a), s(*b)]).collect()
        }
        "bloch.csv" => report
            .bloch
            .iter()
            .flat_map(|b| {
                b.curves.iter().enumerate().flat_map(move |(j, c)| {
                    c.iter().enumerate().map(move |(k, mu)| {
                        vec![s(b.t_label), s(b.fractions[k]), s(b.taus[k]), j.to_string(), s(*mu)]
                    })
                })
            })
            .collect(),
        "curvature.csv" => report
            .curvature
            .iter()
            .map(|r| {
                let c = &r.curvature;
                vec![s(r.t), s(c.mu0), s(c.mu2), s(c.c_tau), s(c.c_fd), s(c.band)]
            })
            .collect(),
        "morse.csv" => report
            .morse
            .iter()
            .map(|r| {
                let c = &r.counts;
                let mut v = vec![s(r.t)];
                v.extend([c.m, c.n0, c.n, c.n0_raw, c.n_raw, c.n0_tally, c.n_tally].map(|x| x.to_string()));
                v.push(s(c.band));
                v
            })
            .collect(),
        "tau_roots.csv" => report
            .tau_curves
            .iter()
            .flat_map(|c| c.samples.iter().map(move |&(t, f, tau)| vec![s(t), c.j.to_string(), s(f), s(tau)]))
            .collect(),
        "subharmonic.csv" => report
            .subharmonic
            .iter()
            .map(|p| {
                vec![
                    p.m.to_string(),
                    s(p.t_m),
                    p.crossing_number.to_string(),
                    p.n_star.to_string(),
                    p.morse_before.to_string(),
                    p.morse_after.to_string(),
                    s(p.kernel_value),
                    s(p.band),
                ]
            })
            .collect(),
        "monitors.csv" => report
            .monitors
            .iter()
            .map(|m| {
                vec![
                    s(m.t),
                    s(m.max_slope),
                    s(m.min_r_minus_xi),
                    s(m.min_bottom_velocity),
                    s(m.lambda_t),
                    m.period_bound_ok.to_string(),
                ]
            })
            .collect(),
        _ => Vec::new(),
    }
}

pub fn export_csv(report: &BifurcationReport, dir: &Path) -> Result<Vec<PathBuf>, ExportError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    for (name, header) in TABLES {
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows(report, name) {
            w.write_record(&r)?;
        }
        w.flush().map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}

pub fn export_json(report: &BifurcationReport, dir: &Path) -> Result<PathBuf, ExportError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let path = dir.join("report.json");
    let text = serde_json::to_string_pretty(report)?;
    fs::write(&path, text).map_err(io(&path))?;
    Ok(path)
}

pub fn export(report: &BifurcationReport, dir: &Path, format: Format) -> Result<Vec<PathBuf>, ExportError> {
    match format {
        Format::Csv => export_csv(report, dir),
        Format::Json => Ok(vec![export_json(report, dir)?]),
    }
}
