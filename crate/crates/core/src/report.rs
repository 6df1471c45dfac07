//! Report generation from finished run directories.
//!
//! Output layout under the report directory:
//!
//! ```text
//! summary.csv / summary.json   one row per cell
//! best.csv / best.json         best non-joint cell per architecture
//! curves/<cell>.csv            AA, AF1 and average BWT after each task
//! curves/<cell>.svg            the same curves as a line chart
//! ```
//!
//! Numbers are copied from `metrics.json` and the R matrices; the only
//! arithmetic here is the per-task curve aggregation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::Curves;
use crate::models::Architecture;
use crate::trainer::{RunDir, RunRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Svg];
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "svg" => Ok(ReportFormat::Svg),
            _ => Err(Error::Config(format!(
                "unknown report format {s:?}; valid: csv, json, svg"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub cell_id: String,
    pub architecture: Architecture,
    /// `joint`, `naive` or the strategy names joined by `+`.
    pub strategies: String,
    pub seed: u64,
    pub tasks: usize,
    pub aa: f64,
    pub af1: f64,
    pub bwt_acc: Option<f64>,
    pub bwt_f1: Option<f64>,
    pub avg_bwt_acc: Option<f64>,
    pub avg_bwt_f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BestRow {
    pub architecture: Architecture,
    pub cell_id: String,
    pub strategies: String,
    pub aa: f64,
    pub af1: f64,
    pub avg_bwt_acc: Option<f64>,
    pub avg_bwt_f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellCurves {
    pub cell_id: String,
    pub aa: Vec<f64>,
    pub af1: Vec<f64>,
    pub avg_bwt_acc: Vec<Option<f64>>,
    pub avg_bwt_f1: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportBundle {
    pub rows: Vec<SummaryRow>,
    pub best: Vec<BestRow>,
    pub curves: Vec<CellCurves>,
    /// Run directories left out because they were incomplete.
    pub skipped: Vec<PathBuf>,
}

/// Loads every run directory directly under `runs`, in name order.
/// Directories without a complete record are returned separately.
pub fn collect_runs(runs: &Path) -> Result<(Vec<RunRecord>, Vec<PathBuf>)> {
    let entries = std::fs::read_dir(runs).map_err(|e| Error::io(runs, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("config.json").is_file())
        .collect();
    dirs.sort();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for d in dirs {
        match RunDir::new(&d).load() {
            Ok(r) => records.push(r),
            Err(Error::IncompleteRun(p)) => {
                log::warn!("skipping incomplete run {}", p.display());
                skipped.push(p);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((records, skipped))
}

fn strategy_label(r: &RunRecord) -> String {
    if r.config.joint {
        "joint".into()
    } else {
        r.config.strategies.to_string()
    }
}

/// Rows sorted by cell id so the output does not depend on load order.
pub fn build_report(records: &[RunRecord], skipped: Vec<PathBuf>) -> ReportBundle {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.config.cell_id());
    let rows: Vec<SummaryRow> = sorted
        .iter()
        .map(|r| SummaryRow {
            cell_id: r.config.cell_id(),
            architecture: r.config.architecture,
            strategies: strategy_label(r),
            seed: r.config.seed,
            tasks: r.matrix.tasks(),
            aa: r.metrics.aa,
            af1: r.metrics.af1,
            bwt_acc: r.metrics.bwt_acc,
            bwt_f1: r.metrics.bwt_f1,
            avg_bwt_acc: r.metrics.avg_bwt_acc,
            avg_bwt_f1: r.metrics.avg_bwt_f1,
        })
        .collect();
    let curves = sorted
        .iter()
        .map(|r| {
            let Curves {
                aa,
                af1,
                avg_bwt_acc,
                avg_bwt_f1,
            } = r.matrix.curves();
            CellCurves {
                cell_id: r.config.cell_id(),
                aa,
                af1,
                avg_bwt_acc,
                avg_bwt_f1,
            }
        })
        .collect();
    ReportBundle {
        best: best_per_architecture(&rows),
        rows,
        curves,
        skipped,
    }
}

/// Highest AA per architecture among non-joint cells; ties go to the higher
/// AF1, then to the smaller cell id.
pub fn best_per_architecture(rows: &[SummaryRow]) -> Vec<BestRow> {
    let mut out = Vec::new();
    for arch in Architecture::ALL {
        let best = rows
            .iter()
            .filter(|r| r.architecture == arch && r.strategies != "joint")
            .reduce(|a, b| {
                let better = b.aa > a.aa
                    || (b.aa == a.aa
                        && (b.af1 > a.af1 || (b.af1 == a.af1 && b.cell_id < a.cell_id)));
                if better {
                    b
                } else {
                    a
                }
            });
        if let Some(r) = best {
            out.push(BestRow {
                architecture: arch,
                cell_id: r.cell_id.clone(),
                strategies: r.strategies.clone(),
                aa: r.aa,
                af1: r.af1,
                avg_bwt_acc: r.avg_bwt_acc,
                avg_bwt_f1: r.avg_bwt_f1,
            });
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ReportBundle {
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("cell_id,architecture,strategies,seed,tasks,aa,af1,bwt_acc,bwt_f1,avg_bwt_acc,avg_bwt_f1\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.cell_id,
                r.architecture,
                r.strategies,
                r.seed,
                r.tasks,
                r.aa,
                r.af1,
                opt(r.bwt_acc),
                opt(r.bwt_f1),
                opt(r.avg_bwt_acc),
                opt(r.avg_bwt_f1)
            );
        }
        s
    }

    pub fn best_csv(&self) -> String {
        let mut s =
            String::from("architecture,best_strategies,cell_id,aa,af1,avg_bwt_acc,avg_bwt_f1\n");
        for b in &self.best {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                b.architecture,
                b.strategies,
                b.cell_id,
                b.aa,
                b.af1,
                opt(b.avg_bwt_acc),
                opt(b.avg_bwt_f1)
            );
        }
        s
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("rows serialize") + "\n"
    }

    pub fn best_json(&self) -> String {
        serde_json::to_string_pretty(&self.best).expect("rows serialize") + "\n"
    }

    /// Writes the requested formats (all of them when `formats` is empty)
    /// and returns the files written.
    pub fn write(&self, out: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
        let formats = if formats.is_empty() {
            &ReportFormat::ALL[..]
        } else {
            formats
        };
        let curves_dir = out.join("curves");
        std::fs::create_dir_all(&curves_dir).map_err(|e| Error::io(&curves_dir, e))?;
        let mut files: Vec<(PathBuf, String)> = Vec::new();
        for f in formats {
            match f {
                ReportFormat::Csv => {
                    files.push((out.join("summary.csv"), self.summary_csv()));
                    files.push((out.join("best.csv"), self.best_csv()));
                    for c in &self.curves {
                        files.push((curves_dir.join(format!("{}.csv", c.cell_id)), c.to_csv()));
                    }
                }
                ReportFormat::Json => {
                    files.push((out.join("summary.json"), self.summary_json()));
                    files.push((out.join("best.json"), self.best_json()));
                }
                ReportFormat::Svg => {
                    for c in &self.curves {
                        files.push((curves_dir.join(format!("{}.svg", c.cell_id)), c.to_svg()));
                    }
                }
            }
        }
        let mut written = Vec::with_capacity(files.len());
        for (path, text) in files {
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Reads every run under `runs` and writes the report into `out`.
pub fn generate_report(runs: &Path, out: &Path, formats: &[ReportFormat]) -> Result<ReportBundle> {
    let (records, skipped) = collect_runs(runs)?;
    let bundle = build_report(&records, skipped);
    bundle.write(out, formats)?;
    Ok(bundle)
}

const SERIES: [(&str, &str); 4] = [
    ("AA", "#1f77b4"),
    ("AF1", "#ff7f0e"),
    ("avg BWT acc", "#2ca02c"),
    ("avg BWT F1", "#d62728"),
];

impl CellCurves {
    fn series(&self) -> [Vec<Option<f64>>; 4] {
        [
            self.aa.iter().map(|&v| Some(v)).collect(),
            self.af1.iter().map(|&v| Some(v)).collect(),
            self.avg_bwt_acc.clone(),
            self.avg_bwt_f1.clone(),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("task,aa,af1,avg_bwt_acc,avg_bwt_f1\n");
        for i in 0..self.aa.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                i + 1,
                self.aa[i],
                self.af1[i],
                opt(self.avg_bwt_acc[i]),
                opt(self.avg_bwt_f1[i])
            );
        }
        s
    }

    /// Line chart over task index with a fixed y range of [-1, 1].
    pub fn to_svg(&self) -> String {
        let (w, h) = (560.0, 340.0);
        let (left, right, top, bottom) = (50.0, 130.0, 30.0, 40.0);
        let pw = w - left - right;
        let ph = h - top - bottom;
        let n = self.aa.len().max(1);
        let x = |i: usize| {
            if n == 1 {
                left + pw / 2.0
            } else {
                left + pw * i as f64 / (n - 1) as f64
            }
        };
        let y = |v: f64| top + ph * (1.0 - v.clamp(-1.0, 1.0)) / 2.0;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{left}" y="18" font-size="13">{}</text>"#,
            self.cell_id
        );
        for tick in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            let ty = y(tick);
            let _ = writeln!(
                s,
                r##"<line x1="{left}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{tick:.1}</text>"##,
                left + pw,
                left - 6.0,
                ty + 4.0
            );
        }
        for i in 0..n {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                x(i),
                top + ph + 16.0,
                i + 1
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">task</text>"#,
            left + pw / 2.0,
            h - 6.0
        );
        for (k, (vals, (name, color))) in self.series().iter().zip(SERIES).enumerate() {
            let pts: Vec<String> = vals
                .iter()
                .enumerate()
                .filter_map(|(i, v)| v.map(|v| format!("{:.2},{:.2}", x(i), y(v))))
                .collect();
            if !pts.is_empty() {
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                    pts.join(" ")
                );
                for p in &pts {
                    let (px, py) = p.split_once(',').unwrap();
                    let _ = writeln!(s, r#"<circle cx="{px}" cy="{py}" r="2.5" fill="{color}"/>"#);
                }
            }
            let ly = top + 14.0 * k as f64 + 6.0;
            let lx = left + pw + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{name}</text>"#,
                lx + 16.0,
                lx + 20.0,
                ly + 4.0
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
