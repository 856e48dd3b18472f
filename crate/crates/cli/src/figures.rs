//! Plot-ready tables derived from a finished experiment directory.
//!
//! Every table has the leading columns `curve,x,y,stderr`; some append extra
//! columns. `stderr` is the standard error across seeds.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use aerolink_core::channel::bessel_j0;

use crate::config::SweepPoint;
use crate::error::{Error, Result};
use crate::experiment::{read_records, stderr, MetricsRecord, Outcome, RunSummary, Summary, METRICS_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    /// Episode return against episode.
    RewardCurve,
    /// Final mean V2U rate against the number of V2V links.
    RateVsK,
    /// Final mean V2U rate against CSI delay, with the aging correlation.
    RateVsDelay,
    /// Moving-average energy against slot, last training episode.
    EnergyVsSlot,
    /// Final rate and final queue against the Lyapunov weight.
    TradeoffVsV,
    /// Per-slot inference time against the number of V2V links.
    RuntimeTable,
}

impl FigureKind {
    pub const ALL: [FigureKind; 6] = [
        FigureKind::RewardCurve,
        FigureKind::RateVsK,
        FigureKind::RateVsDelay,
        FigureKind::EnergyVsSlot,
        FigureKind::TradeoffVsV,
        FigureKind::RuntimeTable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FigureKind::RewardCurve => "reward_curve",
            FigureKind::RateVsK => "rate_vs_K",
            FigureKind::RateVsDelay => "rate_vs_delay",
            FigureKind::EnergyVsSlot => "energy_vs_slot",
            FigureKind::TradeoffVsV => "tradeoff_vs_V",
            FigureKind::RuntimeTable => "runtime_table",
        }
    }

    fn x_dimension(self) -> Option<&'static str> {
        match self {
            FigureKind::RateVsK => Some("k_links"),
            FigureKind::RateVsDelay => Some("t_delay"),
            FigureKind::TradeoffVsV => Some("v_weight"),
            _ => None,
        }
    }
}

impl fmt::Display for FigureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FigureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureKind::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s)).ok_or_else(|| {
            let names: Vec<_> = FigureKind::ALL.iter().map(|k| k.name()).collect();
            Error::Figure(format!("unknown figure `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

/// One output row: curve label, x, mean, stderr, extra columns.
pub type Row = (String, f64, f64, f64, Vec<f64>);

fn curve_label(run: &RunSummary, summary: &Summary, skip: Option<&str>) -> String {
    let mut label = run.agent.to_string();
    for dim in &summary.swept_dimensions {
        if Some(dim.as_str()) == skip {
            continue;
        }
        let v = run.point.value(dim).unwrap_or(f64::NAN);
        label.push_str(&format!(" {dim}={v}"));
    }
    label
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// Groups runs by curve label and x value, preserving first-appearance order
/// of curves and sorting x ascending.
fn collect_xy(summary: &Summary, x_of: impl Fn(&SweepPoint) -> f64, skip: Option<&str>, y: impl Fn(&Outcome) -> f64) -> Vec<Row> {
    let mut curves: Vec<(String, BTreeMap<u64, (f64, Vec<f64>)>)> = Vec::new();
    for run in &summary.runs {
        let label = curve_label(run, summary, skip);
        let idx = match curves.iter().position(|(l, _)| *l == label) {
            Some(i) => i,
            None => {
                curves.push((label, BTreeMap::new()));
                curves.len() - 1
            }
        };
        let x = x_of(&run.point);
        // Key by the bit pattern of a non-negative float, which orders like the float itself.
        curves[idx].1.entry(x.to_bits()).or_insert((x, Vec::new())).1.push(y(&run.outcome));
    }
    let mut rows = Vec::new();
    for (label, points) in curves {
        for (_, (x, ys)) in points {
            rows.push((label.clone(), x, mean(&ys), stderr(&ys), Vec::new()));
        }
    }
    rows
}

fn require_dimension(summary: &Summary, kind: FigureKind, dim: &str) -> Result<()> {
    if summary.swept_dimensions.iter().any(|d| d == dim) {
        return Ok(());
    }
    let available = if summary.swept_dimensions.is_empty() { "none".to_owned() } else { summary.swept_dimensions.join(", ") };
    Err(Error::Figure(format!("figure {kind} needs a sweep over `{dim}`; swept dimensions available: {available}")))
}

fn rows_by_run(records: Vec<MetricsRecord>) -> BTreeMap<String, Vec<MetricsRecord>> {
    let mut out: BTreeMap<String, Vec<MetricsRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.run_id.clone()).or_default().push(r);
    }
    out
}

/// Across-seed mean and stderr per index for a set of equally indexed series.
fn pointwise(label: &str, series: &[Vec<(f64, f64, f64)>]) -> Vec<Row> {
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let ys: Vec<f64> = series.iter().map(|s| s[i].1).collect();
            let extra: Vec<f64> = series.iter().map(|s| s[i].2).collect();
            (label.to_owned(), series[0][i].0, mean(&ys), stderr(&ys), vec![mean(&extra)])
        })
        .collect()
}

/// Runs grouped by curve label in first-appearance order.
fn runs_by_curve<'a>(summary: &'a Summary) -> Vec<(String, Vec<&'a RunSummary>)> {
    let mut out: Vec<(String, Vec<&RunSummary>)> = Vec::new();
    for run in &summary.runs {
        let label = curve_label(run, summary, None);
        match out.iter_mut().find(|(l, _)| *l == label) {
            Some((_, v)) => v.push(run),
            None => out.push((label, vec![run])),
        }
    }
    out
}

/// Builds the table for `kind` without writing it. Returns the header and rows.
pub fn figure_table(dir: &Path, kind: FigureKind) -> Result<(Vec<&'static str>, Vec<Row>)> {
    let summary = Summary::read(dir)?;
    let base = vec!["curve", "x", "y", "stderr"];
    if let Some(dim) = kind.x_dimension() {
        require_dimension(&summary, kind, dim)?;
    }
    Ok(match kind {
        FigureKind::RewardCurve => {
            let rows = rows_by_run(read_records(&dir.join(METRICS_FILE))?);
            let mut out = Vec::new();
            for (label, runs) in runs_by_curve(&summary) {
                let series: Vec<Vec<(f64, f64, f64)>> = runs
                    .iter()
                    .map(|r| {
                        let recs = rows.get(&r.run_id).map(Vec::as_slice).unwrap_or(&[]);
                        crate::experiment::episode_returns(recs).into_iter().enumerate().map(|(e, y)| (e as f64, y, 0.0)).collect()
                    })
                    .collect();
                out.extend(pointwise(&label, &series).into_iter().map(|(l, x, y, s, _)| (l, x, y, s, Vec::new())));
            }
            (base, out)
        }
        FigureKind::EnergyVsSlot => {
            let rows = rows_by_run(read_records(&dir.join(METRICS_FILE))?);
            let mut out = Vec::new();
            for (label, runs) in runs_by_curve(&summary) {
                let series: Vec<Vec<(f64, f64, f64)>> = runs
                    .iter()
                    .map(|r| {
                        let recs = rows.get(&r.run_id).map(Vec::as_slice).unwrap_or(&[]);
                        let last = recs.last().map_or(0, |x| x.episode);
                        recs.iter()
                            .filter(|x| x.episode == last)
                            .map(|x| ((x.slot + 1) as f64, x.moving_avg_energy_j, x.energy_j))
                            .collect()
                    })
                    .collect();
                out.extend(pointwise(&label, &series));
            }
            let mut header = base;
            header.push("energy_j");
            (header, out)
        }
        FigureKind::RateVsK => (base, collect_xy(&summary, |p| p.k_links as f64, Some("k_links"), |o| o.final_mean_v2u_rate_bps)),
        FigureKind::RateVsDelay => {
            let mut rows = collect_xy(&summary, |p| p.t_delay * 1e3, Some("t_delay"), |o| o.final_mean_v2u_rate_bps);
            for row in &mut rows {
                let arg = 2.0 * std::f64::consts::PI * summary.carrier_frequency * summary.s_rel_floor * (row.1 * 1e-3) / summary.light_speed;
                row.4.push(bessel_j0(arg));
            }
            let mut header = base;
            header.push("j0");
            (header, rows)
        }
        FigureKind::TradeoffVsV => {
            let mut rate = collect_xy(&summary, |p| p.v_weight, Some("v_weight"), |o| o.final_mean_v2u_rate_bps);
            for r in &mut rate {
                r.0.push_str(" rate_bps");
            }
            let mut queue = collect_xy(&summary, |p| p.v_weight, Some("v_weight"), |o| o.final_queue);
            for r in &mut queue {
                r.0.push_str(" queue_j");
            }
            rate.extend(queue);
            (base, rate)
        }
        FigureKind::RuntimeTable => {
            if summary.runs.iter().all(|r| r.outcome.mean_inference_ms == 0.0) {
                return Err(Error::Figure("runtime_table needs an experiment run with record_timing = true".into()));
            }
            (base, collect_xy(&summary, |p| p.k_links as f64, Some("k_links"), |o| o.mean_inference_ms))
        }
    })
}

/// Writes `<dir>/<kind>.csv` and returns its path.
pub fn emit_figure_data(dir: &Path, kind: FigureKind) -> Result<PathBuf> {
    let (header, rows) = figure_table(dir, kind)?;
    let path = dir.join(format!("{kind}.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(&header)?;
    for (label, x, y, se, extra) in rows {
        let mut record = vec![label, x.to_string(), y.to_string(), se.to_string()];
        record.extend(extra.iter().map(f64::to_string));
        w.write_record(&record)?;
    }
    w.flush().map_err(crate::error::io(&path))?;
    Ok(path)
}
