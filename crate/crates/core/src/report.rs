//! Run artifacts: trajectory CSV files, summary JSON, and convergence plots.
//!
//! Every float column is written with 17 significant digits, so reading a
//! trajectory back reproduces the run bit for bit, and rewriting it yields a
//! byte-identical file. Summaries keep wall-clock time out of the serialized
//! form so repeated runs of the same seed produce identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ScheduleConfig;
use crate::engine::{RunRecord, RunRow};
use crate::vecmath;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("trajectory file is malformed: {0}")]
    Malformed(String),
    #[error("no run records given")]
    EmptyRecords,
    #[error("records disagree: {0}")]
    MismatchedRecords(String),
    #[error("records carry no equilibrium distances; rerun with a reference point")]
    MissingReference,
    #[error("reference has {got} components but the runs have {expected}")]
    ReferenceDimension { expected: usize, got: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// 17 significant digits: enough for exact float round trips.
fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn trajectory_header(cluster_sizes: &[usize]) -> Vec<String> {
    let mut header = vec![
        "iteration".to_string(),
        "alpha".to_string(),
        "sigma".to_string(),
        "err_to_ne".to_string(),
    ];
    for i in 1..=cluster_sizes.len() {
        header.push(format!("consensus_c{i}"));
    }
    for (i, &n) in cluster_sizes.iter().enumerate() {
        for j in 1..=n {
            header.push(format!("x_{}_{j}", i + 1));
        }
    }
    header
}

/// Write one run's recorded rows as CSV.
///
/// Columns: iteration, step size, query radius, distance to the reference
/// point (empty when none was given), one consensus column per cluster, then
/// one column per state component labeled `x_<cluster>_<agent>` (1-based).
pub fn write_trajectory_csv(record: &RunRecord, path: &Path) -> Result<(), ReportError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(ReportError::Csv)?;
    w.write_record(trajectory_header(&record.cluster_sizes))?;
    let total_dim: usize = record.cluster_sizes.iter().sum();
    for row in &record.rows {
        if row.consensus.len() != record.cluster_sizes.len() || row.joint.len() != total_dim {
            return Err(ReportError::MismatchedRecords(format!(
                "row at iteration {} does not match the cluster layout",
                row.iteration
            )));
        }
        let mut fields = vec![
            row.iteration.to_string(),
            fmt_float(row.alpha),
            fmt_float(row.sigma),
            row.err_to_ne.map(fmt_float).unwrap_or_default(),
        ];
        fields.extend(row.consensus.iter().copied().map(fmt_float));
        fields.extend(row.joint.iter().copied().map(fmt_float));
        w.write_record(&fields)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Read a trajectory CSV back into rows plus the cluster layout encoded in
/// its header. Values round-trip exactly.
pub fn read_trajectory_csv(path: &Path) -> Result<(Vec<RunRow>, Vec<usize>), ReportError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(ReportError::Csv)?;

    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let cluster_sizes = cluster_sizes_from_header(&header)?;
    if header != trajectory_header(&cluster_sizes) {
        return Err(ReportError::Malformed(
            "header columns are not in the expected order".to_string(),
        ));
    }
    let clusters = cluster_sizes.len();
    let total_dim: usize = cluster_sizes.iter().sum();

    let parse = |field: &str, label: &str| -> Result<f64, ReportError> {
        field.parse::<f64>().map_err(|_| {
            ReportError::Malformed(format!("cannot parse {label} value {field:?}"))
        })
    };

    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        if record.len() != header.len() {
            return Err(ReportError::Malformed(format!(
                "row has {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        let iteration = record[0].parse::<u64>().map_err(|_| {
            ReportError::Malformed(format!("cannot parse iteration {:?}", &record[0]))
        })?;
        let err_to_ne = if record[3].is_empty() {
            None
        } else {
            Some(parse(&record[3], "err_to_ne")?)
        };
        let consensus = (4..4 + clusters)
            .map(|k| parse(&record[k], "consensus"))
            .collect::<Result<Vec<_>, _>>()?;
        let joint = (4 + clusters..4 + clusters + total_dim)
            .map(|k| parse(&record[k], "state"))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(RunRow {
            iteration,
            alpha: parse(&record[1], "alpha")?,
            sigma: parse(&record[2], "sigma")?,
            err_to_ne,
            consensus,
            joint,
        });
    }
    Ok((rows, cluster_sizes))
}

fn cluster_sizes_from_header(header: &[String]) -> Result<Vec<usize>, ReportError> {
    let mut sizes: Vec<usize> = Vec::new();
    for label in header {
        if let Some(rest) = label.strip_prefix("x_") {
            let mut parts = rest.splitn(2, '_');
            let bad = || ReportError::Malformed(format!("unrecognized state column {label:?}"));
            let i: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let j: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if i == 0 || j == 0 {
                return Err(bad());
            }
            if i > sizes.len() + 1 {
                return Err(ReportError::Malformed(format!(
                    "state column {label:?} skips a cluster"
                )));
            }
            if i == sizes.len() + 1 {
                sizes.push(0);
            }
            sizes[i - 1] = sizes[i - 1].max(j);
        }
    }
    if sizes.is_empty() {
        return Err(ReportError::Malformed(
            "header has no state columns".to_string(),
        ));
    }
    Ok(sizes)
}

/// One seeded run distilled to its end state. Wall-clock time is kept for
/// console display but never serialized, so identical runs serialize to
/// identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub policy: String,
    pub scenario_hash: String,
    pub iterations: u64,
    pub queries_validated: u64,
    pub final_error: Option<f64>,
    pub final_consensus: Vec<f64>,
    pub schedule: ScheduleConfig,
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

pub fn summarize_run(
    record: &RunRecord,
    schedule: &ScheduleConfig,
    wall_clock_seconds: f64,
) -> RunSummary {
    let last = record.final_row();
    RunSummary {
        seed: record.seed,
        policy: record.policy.clone(),
        scenario_hash: record.scenario_hash.clone(),
        iterations: last.iteration,
        queries_validated: record.queries_validated,
        final_error: last.err_to_ne,
        final_consensus: last.consensus.clone(),
        schedule: schedule.clone(),
        wall_clock_seconds,
    }
}

pub fn summary_json_string(summary: &RunSummary) -> Result<String, ReportError> {
    Ok(serde_json::to_string_pretty(summary)? + "\n")
}

pub fn write_summary_json(summary: &RunSummary, path: &Path) -> Result<(), ReportError> {
    std::fs::write(path, summary_json_string(summary)?).map_err(io_err(path))
}

/// Final-error statistics across the seeds of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub scenario_hash: String,
    pub seeds: Vec<u64>,
    pub final_errors: Vec<f64>,
    pub median_final_error: f64,
    pub min_final_error: f64,
    pub max_final_error: f64,
}

pub fn summarize_sweep(records: &[RunRecord]) -> Result<SweepSummary, ReportError> {
    let first = records.first().ok_or(ReportError::EmptyRecords)?;
    if let Some(other) = records
        .iter()
        .find(|r| r.scenario_hash != first.scenario_hash)
    {
        return Err(ReportError::MismatchedRecords(format!(
            "seed {} ran a different scenario than seed {}",
            other.seed, first.seed
        )));
    }
    let final_errors: Vec<f64> = records
        .iter()
        .map(|r| r.final_error().ok_or(ReportError::MissingReference))
        .collect::<Result<_, _>>()?;
    let mut sorted = final_errors.clone();
    Ok(SweepSummary {
        scenario_hash: first.scenario_hash.clone(),
        seeds: records.iter().map(|r| r.seed).collect(),
        median_final_error: vecmath::median(&mut sorted),
        min_final_error: final_errors.iter().copied().fold(f64::INFINITY, f64::min),
        max_final_error: final_errors
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
        final_errors,
    })
}

pub fn sweep_json_string(summary: &SweepSummary) -> Result<String, ReportError> {
    Ok(serde_json::to_string_pretty(summary)? + "\n")
}

pub fn write_sweep_json(summary: &SweepSummary, path: &Path) -> Result<(), ReportError> {
    std::fs::write(path, sweep_json_string(summary)?).map_err(io_err(path))
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

const SVG_W: f64 = 960.0;
const SVG_H: f64 = 720.0;
/// Longest polyline emitted; longer runs are downsampled.
const MAX_POINTS: usize = 512;

/// An axis-aligned data-to-pixel map for one panel.
struct Frame {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    tmax: f64,
    vmin: f64,
    vmax: f64,
}

impl Frame {
    fn map(&self, t: f64, v: f64) -> (f64, f64) {
        let fx = t / self.tmax.max(1e-12);
        let fy = (v - self.vmin) / (self.vmax - self.vmin).max(1e-12);
        (
            self.x0 + fx * (self.x1 - self.x0),
            self.y1 - fy * (self.y1 - self.y0),
        )
    }
}

fn cluster_of_component(k: usize, cluster_sizes: &[usize]) -> usize {
    let mut offset = 0;
    for (i, &n) in cluster_sizes.iter().enumerate() {
        offset += n;
        if k < offset {
            return i;
        }
    }
    unreachable!("component index out of range")
}

fn downsample_indices(len: usize) -> Vec<usize> {
    if len <= MAX_POINTS {
        return (0..len).collect();
    }
    let stride = len.div_ceil(MAX_POINTS - 1);
    let mut indices: Vec<usize> = (0..len).step_by(stride).collect();
    if *indices.last().unwrap() != len - 1 {
        indices.push(len - 1);
    }
    indices
}

fn polyline(out: &mut String, points: &[(f64, f64)], color: &str, opacity: f64, width: f64) {
    let mut attr = String::new();
    for (x, y) in points {
        let _ = write!(attr, "{x:.2},{y:.2} ");
    }
    let _ = writeln!(
        out,
        "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" \
         stroke-opacity=\"{opacity}\" points=\"{}\"/>",
        attr.trim_end()
    );
}

fn panel_box(out: &mut String, f: &Frame, x_label: &str, y_lo: &str, y_hi: &str) {
    let _ = writeln!(
        out,
        "  <rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" \
         fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>",
        f.x0,
        f.y0,
        f.x1 - f.x0,
        f.y1 - f.y0
    );
    let _ = writeln!(
        out,
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" \
         fill=\"#333\">{x_label}</text>",
        0.5 * (f.x0 + f.x1),
        f.y1 + 32.0
    );
    let _ = writeln!(
        out,
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\" \
         fill=\"#333\">0</text>",
        f.x0,
        f.y1 + 16.0
    );
    let _ = writeln!(
        out,
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\" \
         fill=\"#333\">{:.0}</text>",
        f.x1,
        f.y1 + 16.0,
        f.tmax
    );
    let _ = writeln!(
        out,
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\" \
         fill=\"#333\">{y_lo}</text>",
        f.x0 - 6.0,
        f.y1 + 4.0
    );
    let _ = writeln!(
        out,
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\" \
         fill=\"#333\">{y_hi}</text>",
        f.x0 - 6.0,
        f.y0 + 4.0
    );
}

/// Render all records into a two-panel SVG: state trajectories on top
/// (dashed horizontal lines mark the reference point when one is given),
/// distance to the reference on a log scale below.
pub fn emit_convergence_plot(
    records: &[RunRecord],
    reference: Option<&[f64]>,
    path: &Path,
) -> Result<(), ReportError> {
    let first = records.first().ok_or(ReportError::EmptyRecords)?;
    for r in records {
        if r.cluster_sizes != first.cluster_sizes {
            return Err(ReportError::MismatchedRecords(
                "records have different cluster layouts".to_string(),
            ));
        }
        if r.scenario_hash != first.scenario_hash {
            return Err(ReportError::MismatchedRecords(format!(
                "seed {} ran a different scenario than seed {}",
                r.seed, first.seed
            )));
        }
        if r.rows.is_empty() {
            return Err(ReportError::MismatchedRecords(format!(
                "seed {} has no recorded rows",
                r.seed
            )));
        }
    }
    let sizes = &first.cluster_sizes;
    let total_dim: usize = sizes.iter().sum();
    if let Some(ne) = reference {
        if ne.len() != total_dim {
            return Err(ReportError::ReferenceDimension {
                expected: total_dim,
                got: ne.len(),
            });
        }
    }

    let tmax = records
        .iter()
        .map(|r| r.rows.last().unwrap().iteration as f64)
        .fold(1.0, f64::max);
    let mut vmin = f64::INFINITY;
    let mut vmax = f64::NEG_INFINITY;
    for r in records {
        for row in &r.rows {
            for &v in &row.joint {
                vmin = vmin.min(v);
                vmax = vmax.max(v);
            }
        }
    }
    if let Some(ne) = reference {
        for &v in ne {
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
    }
    let pad = 0.05 * (vmax - vmin).max(1.0);
    let top = Frame {
        x0: 70.0,
        y0: 48.0,
        x1: 930.0,
        y1: 356.0,
        tmax,
        vmin: vmin - pad,
        vmax: vmax + pad,
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W:.0}\" height=\"{SVG_H:.0}\" \
         viewBox=\"0 0 {SVG_W:.0} {SVG_H:.0}\" font-family=\"monospace\">"
    );
    let _ = writeln!(
        svg,
        "  <rect x=\"0\" y=\"0\" width=\"{SVG_W:.0}\" height=\"{SVG_H:.0}\" fill=\"#ffffff\"/>"
    );
    let title = if first.scenario_hash.is_empty() {
        "agent trajectories".to_string()
    } else {
        let short = first
            .scenario_hash
            .get(..12)
            .unwrap_or(&first.scenario_hash);
        format!("agent trajectories — scenario {short}")
    };
    let _ = writeln!(
        svg,
        "  <text x=\"{:.1}\" y=\"26\" font-size=\"15\" text-anchor=\"middle\" \
         fill=\"#111\">{title}</text>",
        0.5 * SVG_W
    );

    panel_box(
        &mut svg,
        &top,
        "iteration",
        &format!("{:.2}", top.vmin),
        &format!("{:.2}", top.vmax),
    );

    if let Some(ne) = reference {
        for (k, &v) in ne.iter().enumerate() {
            let color = PALETTE[cluster_of_component(k, sizes) % PALETTE.len()];
            let (_, y) = top.map(0.0, v);
            let _ = writeln!(
                svg,
                "  <line x1=\"{:.1}\" y1=\"{y:.2}\" x2=\"{:.1}\" y2=\"{y:.2}\" \
                 stroke=\"{color}\" stroke-width=\"1.2\" stroke-opacity=\"0.9\" \
                 stroke-dasharray=\"6 4\"/>",
                top.x0, top.x1
            );
        }
    }

    for r in records {
        let indices = downsample_indices(r.rows.len());
        for k in 0..total_dim {
            let color = PALETTE[cluster_of_component(k, sizes) % PALETTE.len()];
            let points: Vec<(f64, f64)> = indices
                .iter()
                .map(|&idx| {
                    let row = &r.rows[idx];
                    top.map(row.iteration as f64, row.joint[k])
                })
                .collect();
            polyline(&mut svg, &points, color, 0.7, 1.2);
        }
    }

    // Legends: cluster colors on the left, seed list on the right.
    for i in 0..sizes.len() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"{color}\">cluster {}</text>",
            top.x0 + 8.0,
            top.y0 + 16.0 * (i + 1) as f64,
            i + 1
        );
    }
    for (ri, r) in records.iter().enumerate() {
        let _ = writeln!(
            svg,
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"end\" \
             fill=\"#555\">seed {}</text>",
            top.x1 - 8.0,
            top.y0 + 16.0 * (ri + 1) as f64,
            r.seed
        );
    }

    // Bottom panel: log-scale distance to the reference point.
    let mut curves: Vec<(u64, Vec<(f64, f64)>)> = Vec::new();
    let mut emin = f64::INFINITY;
    let mut emax = f64::NEG_INFINITY;
    for r in records {
        let indices = downsample_indices(r.rows.len());
        let pts: Vec<(f64, f64)> = indices
            .iter()
            .filter_map(|&idx| {
                let row = &r.rows[idx];
                let e = row.err_to_ne?;
                (e.is_finite() && e > 0.0).then(|| (row.iteration as f64, e.log10()))
            })
            .collect();
        for &(_, le) in &pts {
            emin = emin.min(le);
            emax = emax.max(le);
        }
        if !pts.is_empty() {
            curves.push((r.seed, pts));
        }
    }

    if curves.is_empty() {
        let _ = writeln!(
            svg,
            "  <text x=\"{:.1}\" y=\"540\" font-size=\"13\" text-anchor=\"middle\" \
             fill=\"#777\">no equilibrium reference recorded</text>",
            0.5 * SVG_W
        );
    } else {
        let lo = emin.floor();
        let hi = emax.ceil().max(lo + 1.0);
        let bottom = Frame {
            x0: 70.0,
            y0: 430.0,
            x1: 930.0,
            y1: 664.0,
            tmax,
            vmin: lo,
            vmax: hi,
        };
        let _ = writeln!(
            svg,
            "  <text x=\"{:.1}\" y=\"418\" font-size=\"13\" text-anchor=\"middle\" \
             fill=\"#111\">distance to equilibrium (log scale)</text>",
            0.5 * SVG_W
        );
        panel_box(
            &mut svg,
            &bottom,
            "iteration",
            &format!("1e{:.0}", bottom.vmin),
            &format!("1e{:.0}", bottom.vmax),
        );
        for (ci, (_, pts)) in curves.iter().enumerate() {
            let color = PALETTE[ci % PALETTE.len()];
            let mapped: Vec<(f64, f64)> =
                pts.iter().map(|&(t, le)| bottom.map(t, le)).collect();
            polyline(&mut svg, &mapped, color, 0.9, 1.5);
        }
    }

    let _ = writeln!(svg, "</svg>");
    std::fs::write(path, svg).map_err(io_err(path))
}
