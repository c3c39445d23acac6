//! Figure tables computed from per-run files only, so aggregation can be
//! repeated on an existing output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::evaluation::quantile;

use super::{io_err, output, HarnessError};

pub const CELL_COLUMNS: [&str; 8] =
    ["cell_index", "strategy", "winner_rule", "threshold_level", "tau_minutes", "xi", "fleet_size", "forecasting"];

/// (soc, distance, mass, winner_soh)
pub type GridRow = (f64, f64, f64, Option<f64>);

type Table = fn(&[RunRow]) -> String;

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub dir: PathBuf,
    /// Summary entries in file order.
    pub entries: Vec<(String, String)>,
    /// (week, uav_id, accuracy)
    pub accuracy: Vec<(u32, u32, f64)>,
    pub grid: Option<Vec<GridRow>>,
}

impl RunRow {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn num(&self, key: &str) -> f64 {
        self.get(key).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN)
    }

    fn index(&self, key: &str) -> u64 {
        self.get(key).and_then(|v| v.parse().ok()).unwrap_or(u64::MAX)
    }

    fn cell_values(&self) -> Vec<String> {
        CELL_COLUMNS.iter().map(|c| self.get(c).unwrap_or("").to_string()).collect()
    }
}

fn malformed(path: &Path, message: impl Into<String>) -> HarnessError {
    HarnessError::Malformed { path: path.to_path_buf(), message: message.into() }
}

fn parse_rows<T>(path: &Path, header: &str, f: impl Fn(&[&str]) -> Option<T>) -> Result<Vec<T>, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(malformed(path, "unexpected header"));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let fields: Vec<&str> = l.split(',').collect();
            f(&fields).ok_or_else(|| malformed(path, format!("bad row `{l}`")))
        })
        .collect()
}

/// Reads every complete run (those with a summary) under `out/runs`, sorted
/// by cell and seed index.
pub fn read_runs(out: &Path) -> Result<Vec<RunRow>, HarnessError> {
    let runs = out.join("runs");
    let mut rows = Vec::new();
    if !runs.exists() {
        return Ok(rows);
    }
    for entry in fs::read_dir(&runs).map_err(io_err(&runs))? {
        let dir = entry.map_err(io_err(&runs))?.path();
        let summary = dir.join("summary.txt");
        if !summary.exists() {
            continue;
        }
        let text = fs::read_to_string(&summary).map_err(io_err(&summary))?;
        let entries =
            text.lines().filter_map(|l| l.split_once(" = ")).map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let accuracy = parse_rows(&dir.join("accuracy.csv"), output::ACCURACY_HEADER, |f| {
            Some((f.first()?.parse().ok()?, f.get(1)?.parse().ok()?, f.get(2)?.parse().ok()?))
        })?;
        let grid_path = dir.join("grid.csv");
        let grid = if grid_path.exists() {
            Some(parse_rows(&grid_path, output::GRID_HEADER, |f| {
                let soh = match *f.get(3)? {
                    "" => None,
                    v => Some(v.parse().ok()?),
                };
                Some((f.first()?.parse().ok()?, f.get(1)?.parse().ok()?, f.get(2)?.parse().ok()?, soh))
            })?)
        } else {
            None
        };
        rows.push(RunRow { dir, entries, accuracy, grid });
    }
    rows.sort_by_key(|r| (r.index("cell_index"), r.index("seed_index")));
    Ok(rows)
}

fn finite(xs: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = xs.into_iter().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Half-width of a normal 95% interval for the mean.
fn ci95(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    1.96 * (var / xs.len() as f64).sqrt()
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

/// Rows grouped by cell, in cell order.
fn by_cell(rows: &[RunRow]) -> Vec<Vec<&RunRow>> {
    let mut groups: BTreeMap<u64, Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.index("cell_index")).or_default().push(r);
    }
    groups.into_values().collect()
}

fn table(extra: &[&str]) -> String {
    let mut s = CELL_COLUMNS.join(",");
    for c in extra {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    s
}

fn row(s: &mut String, cell: &RunRow, values: &[String]) {
    let mut fields = cell.cell_values();
    fields.extend(values.iter().cloned());
    let _ = writeln!(s, "{}", fields.join(","));
}

pub fn runs_table(rows: &[RunRow]) -> String {
    let mut columns: Vec<String> = Vec::new();
    for r in rows {
        for (k, _) in &r.entries {
            if !columns.contains(k) {
                columns.push(k.clone());
            }
        }
    }
    let mut s = format!("run_dir,{}\n", columns.join(","));
    for r in rows {
        let name = r.dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let values: Vec<&str> = columns.iter().map(|c| r.get(c).unwrap_or("")).collect();
        let _ = writeln!(s, "{name},{}", values.join(","));
    }
    s
}

pub fn fig3a(rows: &[RunRow]) -> String {
    let mut s = table(&[
        "runs",
        "delivered_mean",
        "delivered_median",
        "delivered_p25",
        "delivered_p75",
        "delivery_time_median_min_mean",
        "delivery_time_median_min_median",
        "delivery_time_mean_min_mean",
    ]);
    for g in by_cell(rows) {
        let delivered = finite(g.iter().map(|r| r.num("delivered_count")));
        let med = finite(g.iter().map(|r| r.num("delivery_time_median_s") / 60.0));
        let avg = finite(g.iter().map(|r| r.num("delivery_time_mean_s") / 60.0));
        row(
            &mut s,
            g[0],
            &[
                g.len().to_string(),
                fmt(mean(&delivered)),
                fmt(quantile(&delivered, 0.5)),
                fmt(quantile(&delivered, 0.25)),
                fmt(quantile(&delivered, 0.75)),
                fmt(mean(&med)),
                fmt(quantile(&med, 0.5)),
                fmt(mean(&avg)),
            ],
        );
    }
    s
}

pub fn fig3b(rows: &[RunRow]) -> String {
    let mut s = table(&[
        "runs",
        "aborted_percent_mean",
        "aborted_percent_median",
        "aborted_percent_p25",
        "aborted_percent_p75",
    ]);
    for g in by_cell(rows) {
        let a = finite(g.iter().map(|r| r.num("aborted_percent")));
        row(
            &mut s,
            g[0],
            &[
                g.len().to_string(),
                fmt(mean(&a)),
                fmt(quantile(&a, 0.5)),
                fmt(quantile(&a, 0.25)),
                fmt(quantile(&a, 0.75)),
            ],
        );
    }
    s
}

fn backlog_weeks(r: &RunRow) -> Vec<f64> {
    (1..)
        .map_while(|w| r.get(&format!("backlog_age_week_{w}_s")).map(|_| r.num(&format!("backlog_age_week_{w}_s"))))
        .collect()
}

pub fn fig3c(rows: &[RunRow]) -> String {
    let mut s = table(&["arrival_week", "runs", "backlog_age_days_mean"]);
    for g in by_cell(rows) {
        let weeks = g.iter().map(|r| backlog_weeks(r).len()).max().unwrap_or(0);
        for w in 0..weeks {
            let xs = finite(g.iter().map(|r| backlog_weeks(r).get(w).copied().unwrap_or(f64::NAN) / 86_400.0));
            row(&mut s, g[0], &[(w + 1).to_string(), xs.len().to_string(), fmt(mean(&xs))]);
        }
    }
    s
}

/// Fleet-mean accuracy per run, then mean and interval across runs.
pub fn fig4a(rows: &[RunRow]) -> String {
    let mut s = table(&["week", "runs", "accuracy_mean", "accuracy_ci95"]);
    for g in by_cell(rows) {
        let mut per_week: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for r in &g {
            let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
            for &(week, _, acc) in &r.accuracy {
                let e = sums.entry(week).or_insert((0.0, 0));
                e.0 += acc;
                e.1 += 1;
            }
            for (week, (sum, n)) in sums {
                per_week.entry(week).or_default().push(sum / n as f64);
            }
        }
        for (week, xs) in per_week {
            row(&mut s, g[0], &[week.to_string(), xs.len().to_string(), fmt(mean(&xs)), fmt(ci95(&xs))]);
        }
    }
    s
}

/// Mean winner SoH per grid cell over the runs that saw a bid there.
pub fn fig4b(rows: &[RunRow]) -> String {
    let mut s = table(&["soc", "distance", "mass", "mean_soh", "runs_with_bids", "runs"]);
    for g in by_cell(rows) {
        let grids: Vec<_> = g.iter().filter_map(|r| r.grid.as_ref()).collect();
        let Some(first) = grids.first() else { continue };
        for (i, &(soc, d, m, _)) in first.iter().enumerate() {
            let sohs: Vec<f64> = grids.iter().filter_map(|gr| gr.get(i).and_then(|c| c.3)).collect();
            row(
                &mut s,
                g[0],
                &[
                    soc.to_string(),
                    d.to_string(),
                    m.to_string(),
                    fmt(mean(&sohs)),
                    sohs.len().to_string(),
                    grids.len().to_string(),
                ],
            );
        }
    }
    s
}

pub fn fig5(rows: &[RunRow]) -> String {
    let mut s = table(&[
        "runs",
        "delivered_median",
        "delivery_time_median_min",
        "aborted_percent_median",
        "backlog_total_days_mean",
        "backlog_weeks_1_4_days_mean",
    ]);
    for g in by_cell(rows) {
        let delivered = finite(g.iter().map(|r| r.num("delivered_count")));
        let dt = finite(g.iter().map(|r| r.num("delivery_time_median_s") / 60.0));
        let ab = finite(g.iter().map(|r| r.num("aborted_percent")));
        let total = finite(g.iter().map(|r| r.num("backlog_age_total_s") / 86_400.0));
        let early = finite(g.iter().map(|r| backlog_weeks(r).iter().take(4).sum::<f64>() / 86_400.0));
        row(
            &mut s,
            g[0],
            &[
                g.len().to_string(),
                fmt(quantile(&delivered, 0.5)),
                fmt(quantile(&dt, 0.5)),
                fmt(quantile(&ab, 0.5)),
                fmt(mean(&total)),
                fmt(mean(&early)),
            ],
        );
    }
    s
}

/// Rewrites every aggregate table in `out` from the run files.
pub fn aggregate_dir(out: &Path) -> Result<Vec<RunRow>, HarnessError> {
    let rows = read_runs(out)?;
    let tables: [(&str, Table); 7] = [
        ("runs.csv", runs_table),
        ("fig3a.csv", fig3a),
        ("fig3b.csv", fig3b),
        ("fig3c.csv", fig3c),
        ("fig4a.csv", fig4a),
        ("fig4b.csv", fig4b),
        ("fig5.csv", fig5),
    ];
    for (name, f) in tables {
        let path = out.join(name);
        fs::write(&path, f(&rows)).map_err(io_err(&path))?;
    }
    Ok(rows)
}
