//! CSV persistence for trajectory records and reach tubes.
//!
//! Numbers are written in scientific notation with ten significant digits.

use std::fmt::Write as _;
use std::path::Path;

use crate::asif::FilterStatus;
use crate::error::{Error, Result};
use crate::harness::simulate::{TrajectoryRecord, TrajectoryRow};
use crate::reachability::ReachTube;

fn num(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.9e}");
}

pub fn csv_header(vehicles: usize, edges: usize, inputs: usize, disturbances: usize) -> String {
    let mut cols = vec!["time".to_string()];
    cols.extend((1..=vehicles).map(|i| format!("x{i}")));
    cols.extend((1..=edges).map(|i| format!("z{i}")));
    cols.extend((1..=inputs).map(|i| format!("u{i}")));
    cols.extend((1..=inputs).map(|i| format!("ud{i}")));
    cols.extend((1..=disturbances).map(|i| format!("w{i}")));
    cols.extend(["psi", "h", "status"].map(String::from));
    cols.join(",")
}

pub fn record_to_csv(record: &TrajectoryRecord) -> Result<String> {
    let first = record
        .rows
        .first()
        .ok_or(Error::Empty("trajectory record"))?;
    let mut out = csv_header(
        record.vehicles,
        record.edges,
        first.u_applied.len(),
        first.w.len(),
    );
    out.push('\n');
    for row in &record.rows {
        num(&mut out, row.time);
        for v in row
            .state
            .iter()
            .chain(&row.u_applied)
            .chain(&row.u_desired)
            .chain(&row.w)
        {
            out.push(',');
            num(&mut out, *v);
        }
        for v in [row.psi, row.h] {
            out.push(',');
            num(&mut out, v);
        }
        out.push(',');
        out.push_str(row.status.as_str());
        out.push('\n');
    }
    Ok(out)
}

pub fn export_csv(record: &TrajectoryRecord, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, record_to_csv(record)?)?;
    Ok(())
}

/// Rows parsed back from [`record_to_csv`] output.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTrajectory {
    pub vehicles: usize,
    pub edges: usize,
    pub rows: Vec<TrajectoryRow>,
}

fn count_prefixed(cols: &[&str], prefix: &str) -> usize {
    cols.iter()
        .filter(|c| {
            c.strip_prefix(prefix)
                .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
        })
        .count()
}

pub fn parse_csv(text: &str) -> Result<CsvTrajectory> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Empty("csv text"))?;
    let cols: Vec<&str> = header.split(',').collect();
    let (nv, ne, nu, nw) = (
        count_prefixed(&cols, "x"),
        count_prefixed(&cols, "z"),
        count_prefixed(&cols, "u"),
        count_prefixed(&cols, "w"),
    );
    if header != csv_header(nv, ne, nu, nw) {
        return Err(Error::Config(format!("unexpected csv header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Config(format!(
                "row {}: expected {} fields, found {}",
                i + 1,
                cols.len(),
                fields.len()
            )));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Config(format!("row {}: {s:?}: {e}", i + 1)))
        };
        let nums = fields[..fields.len() - 1]
            .iter()
            .map(|s| parse(s))
            .collect::<Result<Vec<f64>>>()?;
        let status_token = fields[fields.len() - 1];
        let status = FilterStatus::parse(status_token).ok_or_else(|| {
            Error::Config(format!("row {}: unknown status {status_token:?}", i + 1))
        })?;
        let mut at = 1;
        let mut take = |n: usize| {
            let s = nums[at..at + n].to_vec();
            at += n;
            s
        };
        let state = take(nv + ne);
        let u_applied = take(nu);
        let u_desired = take(nu);
        let w = take(nw);
        let tail = take(2);
        rows.push(TrajectoryRow {
            time: nums[0],
            state,
            u_applied,
            u_desired,
            w,
            psi: tail[0],
            h: tail[1],
            status,
        });
    }
    Ok(CsvTrajectory {
        vehicles: nv,
        edges: ne,
        rows,
    })
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<CsvTrajectory> {
    parse_csv(&std::fs::read_to_string(path)?)
}

/// One line per tube step: `time,valid,lo1..lon,hi1..hin`. Invalid steps
/// carry NaN bounds.
pub fn tube_to_csv(tube: &ReachTube) -> String {
    let n = tube.states.first().map_or(0, |s| s.dim());
    let mut cols = vec!["time".to_string(), "valid".to_string()];
    cols.extend((1..=n).map(|i| format!("lo{i}")));
    cols.extend((1..=n).map(|i| format!("hi{i}")));
    let mut out = cols.join(",");
    out.push('\n');
    for k in 0..tube.len() {
        num(&mut out, tube.times[k]);
        let _ = write!(out, ",{}", u8::from(tube.valid[k]));
        let bounds: Vec<f64> = match tube.rect(k) {
            Some(r) => r.lower().iter().chain(r.upper().iter()).copied().collect(),
            None => vec![f64::NAN; 2 * n],
        };
        for v in bounds {
            out.push(',');
            num(&mut out, v);
        }
        out.push('\n');
    }
    out
}
