//! Per-run files. Floats are written in shortest round-trip form, so a file
//! parses back to the exact values that were simulated.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::evaluation::{GridCell, MetricsSummary};
use crate::fulfilment::{Order, OrderStatus};
use crate::sim::RunResult;

use super::Cell;

pub const ORDERS_HEADER: &str = "order_id,arrival_time,mass,distance,delivered_time,attempt_count,final_status";
pub const ATTEMPTS_HEADER: &str = "time,uav_id,task_id,soc_takeoff,outcome,dest_arrival_time,fc_return_time";
pub const MODELS_HEADER: &str = "week,uav_id,w_distance,w_mass,w_soc,b,steps";
pub const FLEET_HEADER: &str = "uav_id,soh";
pub const ACCURACY_HEADER: &str = "week,uav_id,accuracy";
pub const GRID_HEADER: &str = "soc,distance,mass,winner_soh";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn orders_csv(orders: &[Order]) -> String {
    let mut s = String::from(ORDERS_HEADER);
    s.push('\n');
    for o in orders {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            o.id,
            o.arrival_time,
            o.mass,
            o.distance,
            opt(o.delivered_time),
            o.attempt_count,
            o.status.as_str()
        );
    }
    s
}

pub fn attempts_csv(run: &RunResult) -> String {
    let mut s = String::from(ATTEMPTS_HEADER);
    s.push('\n');
    for a in &run.attempts {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            a.time,
            a.uav_id,
            a.task_id,
            a.soc_takeoff,
            a.outcome.as_str(),
            opt(a.dest_arrival_time),
            opt(a.fc_return_time)
        );
    }
    s
}

pub fn models_csv(run: &RunResult) -> String {
    let mut s = String::from(MODELS_HEADER);
    s.push('\n');
    for m in &run.snapshots {
        let [wd, wm, ws] = m.model.w;
        let _ = writeln!(s, "{},{},{wd},{wm},{ws},{},{}", m.week, m.uav_id, m.model.b, m.model.steps);
    }
    s
}

pub fn fleet_csv(run: &RunResult) -> String {
    let mut s = String::from(FLEET_HEADER);
    s.push('\n');
    for u in &run.fleet {
        let _ = writeln!(s, "{},{}", u.uav_id, u.soh);
    }
    s
}

pub fn accuracy_csv(summary: &MetricsSummary) -> String {
    let mut s = String::from(ACCURACY_HEADER);
    s.push('\n');
    for a in &summary.accuracy {
        let _ = writeln!(s, "{},{},{}", a.week, a.uav_id, a.accuracy);
    }
    s
}

pub fn grid_csv(cells: &[GridCell]) -> String {
    let mut s = String::from(GRID_HEADER);
    s.push('\n');
    for c in cells {
        let _ = writeln!(s, "{},{},{},{}", c.soc, c.distance, c.mass, opt(c.winner_soh));
    }
    s
}

/// Key/value summary document, one `key = value` per line.
pub fn summary_txt(cell: &Cell, seed_index: u32, run: &RunResult, m: &MetricsSummary) -> String {
    let mut kv: Vec<(String, String)> = cell.descriptor();
    let mut put = |k: &str, v: String| kv.push((k.to_string(), v));
    put("weeks", (run.config.horizon / crate::sim::WEEK).to_string());
    put("seed_index", seed_index.to_string());
    put("seed", run.config.seed.to_string());
    put("generated_orders", m.generated_orders.to_string());
    put("delivered_count", m.delivered_count.to_string());
    put("pending_count", m.pending_count.to_string());
    put("in_flight_count", m.in_flight_count.to_string());
    let q = &m.delivery_time;
    put("delivery_time_mean_s", q.mean.to_string());
    put("delivery_time_p05_s", q.p05.to_string());
    put("delivery_time_p25_s", q.p25.to_string());
    put("delivery_time_median_s", q.median.to_string());
    put("delivery_time_p75_s", q.p75.to_string());
    put("delivery_time_p95_s", q.p95.to_string());
    put("successes", m.successes.to_string());
    put("aborts", m.aborts.to_string());
    put("aborted_percent", m.aborted_percent.to_string());
    put("backlog_age_total_s", m.backlog_age_total.to_string());
    for (i, b) in m.backlog_age_by_week.iter().enumerate() {
        put(&format!("backlog_age_week_{}_s", i + 1), b.to_string());
    }
    put("lost_uav_count", m.lost_uav_count.to_string());
    put("events", run.stats.events.to_string());
    put("advertisements", run.stats.advertisements.to_string());
    put("allocations", run.stats.allocations.to_string());
    put("reservations", run.stats.reservations.to_string());
    let mut s = String::new();
    for (k, v) in kv {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

pub fn parse_summary(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Writes every file of one run into `dir`.
pub fn write_run(
    dir: &Path,
    cell: &Cell,
    seed_index: u32,
    run: &RunResult,
    summary: &MetricsSummary,
    grid: Option<&[GridCell]>,
) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("orders.csv"), orders_csv(&run.orders))?;
    fs::write(dir.join("attempts.csv"), attempts_csv(run))?;
    fs::write(dir.join("models.csv"), models_csv(run))?;
    fs::write(dir.join("fleet.csv"), fleet_csv(run))?;
    fs::write(dir.join("accuracy.csv"), accuracy_csv(summary))?;
    if let Some(cells) = grid {
        fs::write(dir.join("grid.csv"), grid_csv(cells))?;
    }
    // last, so its presence marks a complete run
    fs::write(dir.join("summary.txt"), summary_txt(cell, seed_index, run, summary))
}

/// Parses an orders file back into records.
pub fn read_orders_csv(text: &str) -> Result<Vec<Order>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(ORDERS_HEADER) {
        return Err("unexpected orders header".into());
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(format!("malformed order row `{line}`"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("{e} in `{line}`"));
            let status = match f[6] {
                "unallocated" => OrderStatus::Unallocated,
                "allocated" => OrderStatus::Allocated,
                "reserved" => OrderStatus::Reserved,
                "delivered" => OrderStatus::Delivered,
                other => return Err(format!("unknown status `{other}`")),
            };
            Ok(Order {
                id: f[0].parse().map_err(|e| format!("{e} in `{line}`"))?,
                arrival_time: num(f[1])?,
                mass: num(f[2])?,
                distance: num(f[3])?,
                delivered_time: if f[4].is_empty() { None } else { Some(num(f[4])?) },
                attempt_count: f[5].parse().map_err(|e| format!("{e} in `{line}`"))?,
                status,
            })
        })
        .collect()
}
