//! Summary tables, JSON metadata and static SVG plots.
//!
//! Everything is rendered in memory before the first file is written, so a
//! failed report leaves no partial output behind. Numbers are printed with
//! fixed formats and every collection is iterated in a fixed order, which
//! makes the output byte-identical for identical inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bench::{mean_std, BenchTable};
use crate::error::{Error, Result};
use crate::profile::{dolan_more, ErrorTable, ProfileCurves};
use crate::sim::RunRecord;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub round: usize,
    pub labeled: usize,
    pub accuracy_mean: f64,
    /// Sample standard deviation over seeds; 0 with a single seed.
    pub accuracy_std: f64,
    pub seeds: usize,
}

fn strategies_in_order(records: &[RunRecord]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in records {
        if !out.contains(&r.strategy) {
            out.push(r.strategy.clone());
        }
    }
    out
}

/// Per-strategy, per-round accuracy mean and std over seeds.
pub fn summarize(records: &[RunRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("run records".into()));
    }
    let mut rows = Vec::new();
    for strategy in strategies_in_order(records) {
        let runs: Vec<&RunRecord> = records.iter().filter(|r| r.strategy == strategy).collect();
        let depth = runs.iter().map(|r| r.rounds.len()).max().unwrap_or(0);
        for round in 0..depth {
            let entries: Vec<_> = runs.iter().filter_map(|r| r.rounds.get(round)).collect();
            let accs: Vec<f64> = entries.iter().map(|e| e.test_accuracy).collect();
            let (accuracy_mean, accuracy_std) = mean_std(&accs);
            rows.push(SummaryRow {
                strategy: strategy.clone(),
                round,
                labeled: entries[0].labeled_count,
                accuracy_mean,
                accuracy_std,
                seeds: entries.len(),
            });
        }
    }
    Ok(rows)
}

/// `round,labeled,accuracy_mean,accuracy_std`, optionally led by a strategy column.
pub fn summary_csv(rows: &[SummaryRow], with_strategy: bool) -> String {
    let mut out = String::new();
    if with_strategy {
        out.push_str("strategy,");
    }
    out.push_str("round,labeled,accuracy_mean,accuracy_std\n");
    for r in rows {
        if with_strategy {
            let _ = write!(out, "{},", r.strategy);
        }
        let _ = writeln!(out, "{},{},{},{}", r.round, r.labeled, r.accuracy_mean, r.accuracy_std);
    }
    out
}

pub fn runtime_csv(tables: &[BenchTable]) -> String {
    let mut out = String::from("n,k,c,strategy,batch_size,mean_s,std_s,reps\n");
    for t in tables {
        for r in &t.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                t.env.n, t.env.k, t.env.c, r.strategy, r.batch_size, r.mean_s, r.std_s, t.env.reps
            );
        }
    }
    out
}

pub fn profile_csv(curves: &ProfileCurves) -> String {
    let mut out = String::from("solver,tau,rho\n");
    for (s, name) in curves.solvers.iter().enumerate() {
        for (t, tau) in curves.taus.iter().enumerate() {
            let _ = writeln!(out, "{name},{tau},{}", curves.rho[s][t]);
        }
    }
    out
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

/// Linear map from a data interval onto the plot area.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let widen = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        let (x0, x1) = widen(x0, x1);
        let (y0, y1) = widen(y0, y1);
        Self { x0, x1, y0, y1 }
    }

    fn x(&self, v: f64) -> f64 {
        LEFT + (v - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn svg_open(title: &str, xlabel: &str, ylabel: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">{}</text>"#, (W - RIGHT + LEFT) / 2.0, escape(title));
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (W - RIGHT + LEFT) / 2.0, H - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (H - BOTTOM + TOP) / 2.0,
        (H - BOTTOM + TOP) / 2.0,
        escape(ylabel)
    );
    s
}

fn axes(s: &mut String, f: &Frame, xfmt: impl Fn(f64) -> String, yfmt: impl Fn(f64) -> String) {
    let (bx, by) = (LEFT, H - BOTTOM);
    let _ = writeln!(s, r##"<path d="M{bx:.1},{TOP:.1}V{by:.1}H{:.1}" fill="none" stroke="#000"/>"##, W - RIGHT);
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = f.x0 + t * (f.x1 - f.x0);
        let yv = f.y0 + t * (f.y1 - f.y0);
        let (px, py) = (f.x(xv), f.y(yv));
        let _ = writeln!(s, r##"<path d="M{px:.1},{by:.1}v5M{bx:.1},{py:.1}h-5" stroke="#000"/>"##);
        let _ = writeln!(s, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, by + 18.0, xfmt(xv));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, bx - 8.0, py + 4.0, yfmt(yv));
    }
}

fn legend(s: &mut String, names: &[String]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = W - RIGHT + 15.0;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{color}"/>"#, y - 10.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{y:.1}">{}</text>"#, x + 18.0, escape(name));
    }
}

/// Mean accuracy against labeled count with a ±std band per strategy.
pub fn accuracy_svg(rows: &[SummaryRow]) -> String {
    let names = {
        let mut v: Vec<String> = Vec::new();
        for r in rows {
            if !v.contains(&r.strategy) {
                v.push(r.strategy.clone());
            }
        }
        v
    };
    let xs = rows.iter().map(|r| r.labeled as f64);
    let (xmin, xmax) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let lo = rows.iter().map(|r| r.accuracy_mean - r.accuracy_std).fold(f64::INFINITY, f64::min).max(0.0);
    let hi = rows.iter().map(|r| r.accuracy_mean + r.accuracy_std).fold(f64::NEG_INFINITY, f64::max).min(1.0);
    let f = Frame::new(xmin, xmax, lo, hi);
    let mut s = svg_open("Test accuracy", "labeled examples", "accuracy");
    axes(&mut s, &f, |v| format!("{v:.0}"), |v| format!("{v:.3}"));
    for (i, name) in names.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let series: Vec<&SummaryRow> = rows.iter().filter(|r| &r.strategy == name).collect();
        let mut band = String::new();
        for r in &series {
            let _ = write!(band, "{:.2},{:.2} ", f.x(r.labeled as f64), f.y((r.accuracy_mean + r.accuracy_std).min(1.0)));
        }
        for r in series.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", f.x(r.labeled as f64), f.y((r.accuracy_mean - r.accuracy_std).max(0.0)));
        }
        let _ = writeln!(s, r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.trim_end());
        let line: Vec<String> = series
            .iter()
            .map(|r| format!("{:.2},{:.2}", f.x(r.labeled as f64), f.y(r.accuracy_mean)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
    }
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    s
}

/// Step curves of ρ(τ) per solver.
pub fn profile_svg(curves: &ProfileCurves) -> String {
    let tmax = curves.taus.last().copied().unwrap_or(1.0);
    let right = if tmax > 1.0 { 1.0 + (tmax - 1.0) * 1.05 } else { 2.0 };
    let f = Frame::new(1.0, right, 0.0, 1.0);
    let mut s = svg_open("Performance profile", "tau", "rho");
    axes(&mut s, &f, |v| format!("{v:.3}"), |v| format!("{v:.2}"));
    for (i, _) in curves.solvers.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut d = format!("M{:.2},{:.2}", f.x(1.0), f.y(curves.rho[i][0]));
        for t in 1..curves.taus.len() {
            let _ = write!(d, "H{:.2}V{:.2}", f.x(curves.taus[t]), f.y(curves.rho[i][t]));
        }
        let _ = write!(d, "H{:.2}", f.x(right));
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="2"/>"#);
    }
    legend(&mut s, &curves.solvers);
    s.push_str("</svg>\n");
    s
}

/// Mean selection time per (batch size, strategy) with std whiskers.
pub fn runtime_svg(tables: &[BenchTable]) -> String {
    let rows: Vec<_> = tables.iter().flat_map(|t| &t.rows).collect();
    let mut names: Vec<String> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    for r in &rows {
        if !names.contains(&r.strategy) {
            names.push(r.strategy.clone());
        }
        if !sizes.contains(&r.batch_size) {
            sizes.push(r.batch_size);
        }
    }
    let top = rows.iter().map(|r| r.mean_s + r.std_s).fold(0.0, f64::max);
    let f = Frame::new(0.0, sizes.len() as f64, 0.0, if top > 0.0 { top * 1.1 } else { 1.0 });
    let mut s = svg_open("Selection time", "batch size", "seconds");
    let (bx, by) = (LEFT, H - BOTTOM);
    let _ = writeln!(s, r##"<path d="M{bx:.1},{TOP:.1}V{by:.1}H{:.1}" fill="none" stroke="#000"/>"##, W - RIGHT);
    for i in 0..=4 {
        let v = f.y0 + i as f64 / 4.0 * (f.y1 - f.y0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, bx - 8.0, f.y(v) + 4.0);
    }
    let slot = (f.x(1.0) - f.x(0.0)) * 0.8 / names.len().max(1) as f64;
    for (g, &b) in sizes.iter().enumerate() {
        let gx = f.x(g as f64) + (f.x(1.0) - f.x(0.0)) * 0.1;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{b}</text>"#, f.x(g as f64 + 0.5), by + 18.0);
        for (i, name) in names.iter().enumerate() {
            let Some(r) = rows.iter().find(|r| &r.strategy == name && r.batch_size == b) else {
                continue;
            };
            let x = gx + slot * i as f64;
            let color = PALETTE[i % PALETTE.len()];
            let yt = f.y(r.mean_s);
            let _ = writeln!(s, r#"<rect x="{x:.2}" y="{yt:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#, slot * 0.9, by - yt);
            let cx = x + slot * 0.45;
            let _ = writeln!(
                s,
                r##"<path d="M{cx:.2},{:.2}V{:.2}" stroke="#000"/>"##,
                f.y(r.mean_s + r.std_s),
                f.y((r.mean_s - r.std_s).max(0.0))
            );
        }
    }
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    s
}

pub struct ReportInputs<'a> {
    pub records: &'a [RunRecord],
    pub bench: &'a [BenchTable],
    /// When absent, a profile over final-round error rates of `records` is attempted.
    pub profile: Option<&'a ProfileCurves>,
}

#[derive(Serialize)]
struct Metadata<'a> {
    strategies: Vec<String>,
    seeds: Vec<u64>,
    final_accuracy: Vec<FinalAccuracy>,
    warnings: Vec<String>,
    profile_note: Option<String>,
    files: &'a [String],
}

#[derive(Serialize)]
struct FinalAccuracy {
    strategy: String,
    labeled: usize,
    mean: f64,
    std: f64,
}

/// Renders every report artifact into `out_dir`.
///
/// Returns the written paths in a fixed order.
pub fn emit_report(inputs: &ReportInputs<'_>, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let rows = summarize(inputs.records)?;
    let mut files: Vec<(String, String)> = vec![
        ("accuracy_summary.csv".into(), summary_csv(&rows, true)),
        ("accuracy.svg".into(), accuracy_svg(&rows)),
    ];

    let derived;
    let mut profile_note = None;
    let profile = match inputs.profile {
        Some(p) => Some(p),
        None => match ErrorTable::from_records(inputs.records).and_then(|t| dolan_more(&t)) {
            Ok(p) => {
                derived = p;
                Some(&derived)
            }
            Err(e) => {
                profile_note = Some(format!("profile skipped: {e}"));
                None
            }
        },
    };
    if let Some(p) = profile {
        files.push(("profile.csv".into(), profile_csv(p)));
        files.push(("profile.svg".into(), profile_svg(p)));
    }
    if !inputs.bench.is_empty() {
        files.push(("runtime.csv".into(), runtime_csv(inputs.bench)));
        files.push(("runtime.svg".into(), runtime_svg(inputs.bench)));
    }

    let mut names: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
    names.push("report.json".into());
    let mut seeds: Vec<u64> = inputs.records.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut warnings: Vec<String> = Vec::new();
    for r in inputs.records {
        for w in &r.warnings {
            let tagged = format!("{} seed {}: {w}", r.strategy, r.seed);
            if !warnings.contains(&tagged) {
                warnings.push(tagged);
            }
        }
    }
    let final_accuracy = strategies_in_order(inputs.records)
        .into_iter()
        .filter_map(|s| {
            let last = rows.iter().filter(|r| r.strategy == s).last()?;
            Some(FinalAccuracy {
                strategy: s,
                labeled: last.labeled,
                mean: last.accuracy_mean,
                std: last.accuracy_std,
            })
        })
        .collect();
    let meta = Metadata {
        strategies: strategies_in_order(inputs.records),
        seeds,
        final_accuracy,
        warnings,
        profile_note,
        files: &names,
    };
    files.push(("report.json".into(), serde_json::to_string_pretty(&meta)? + "\n"));

    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::RoundEntry;

    fn record(strategy: &str, seed: u64, accs: &[f64]) -> RunRecord {
        RunRecord {
            strategy: strategy.into(),
            seed,
            rounds: accs
                .iter()
                .enumerate()
                .map(|(round, &a)| RoundEntry {
                    round,
                    labeled_count: 10 + 10 * round,
                    test_accuracy: a,
                    acquisition_wall_time_s: 0.0,
                    train_wall_time_s: 0.0,
                    acquired_indices: Vec::new(),
                })
                .collect(),
            warnings: Vec::new(),
        }
    }

    fn records() -> Vec<RunRecord> {
        let mut out = Vec::new();
        for s in 0..5u64 {
            let d = s as f64 * 0.01;
            out.push(record("bald", s, &[0.5 + d, 0.6 + d, 0.7 + d]));
            out.push(record("lbb", s, &[0.5 + d, 0.65 + d, 0.8 - d]));
        }
        out
    }

    #[test]
    fn summary_shape() {
        let rows = summarize(&records()).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].seeds, 5);
        assert!((rows[0].accuracy_mean - 0.52).abs() < 1e-12);
        let csv = summary_csv(&rows, true);
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.starts_with("strategy,round,labeled,accuracy_mean,accuracy_std\n"));
    }

    #[test]
    fn two_strategies_give_two_bands() {
        let svg = accuracy_svg(&summarize(&records()).unwrap());
        assert_eq!(svg.matches(r#"class="band""#).count(), 2);
    }

    #[test]
    fn empty_records_leave_no_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("report");
        let err = emit_report(&ReportInputs { records: &[], bench: &[], profile: None }, &out);
        assert!(err.is_err());
        assert!(!out.exists());
    }

    #[test]
    fn report_is_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let recs = records();
        let inputs = ReportInputs { records: &recs, bench: &[], profile: None };
        let a = emit_report(&inputs, dir.path().join("a")).unwrap();
        let b = emit_report(&inputs, dir.path().join("b")).unwrap();
        assert_eq!(a.len(), b.len());
        assert!(a.iter().any(|p| p.ends_with("profile.svg")));
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap());
        }
    }
}
