//! Two-panel SVG rendering of a trajectory record: displacements on top,
//! applied and desired inputs below.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::simulate::TrajectoryRecord;

const WIDTH: f64 = 800.0;
const PANEL_HEIGHT: f64 = 260.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const PANEL_GAP: f64 = 50.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

struct Panel {
    top: f64,
    t_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Panel {
    fn x(&self, t: f64) -> f64 {
        let span = if self.t_max > 0.0 { self.t_max } else { 1.0 };
        MARGIN_LEFT + (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) * t / span
    }

    fn y(&self, v: f64) -> f64 {
        self.top + PANEL_HEIGHT * (self.y_max - v) / (self.y_max - self.y_min)
    }

    fn frame(&self, out: &mut String, title: &str, y_label: &str) {
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##,
            MARGIN_LEFT,
            self.top,
            WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
            PANEL_HEIGHT
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="13">{title}</text>"#,
            MARGIN_LEFT,
            self.top - 8.0
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.2}" font-size="11" transform="rotate(-90 14 {:.2})">{y_label}</text>"#,
            self.top + PANEL_HEIGHT / 2.0,
            self.top + PANEL_HEIGHT / 2.0
        );
        for v in [self.y_min, 0.5 * (self.y_min + self.y_max), self.y_max] {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{v:.2}</text>"#,
                MARGIN_LEFT - 4.0,
                self.y(v) + 3.0
            );
        }
        let bottom = self.top + PANEL_HEIGHT;
        for t in [0.0, 0.5 * self.t_max, self.t_max] {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{t:.2}</text>"#,
                self.x(t),
                bottom + 14.0
            );
        }
    }

    fn hline(&self, out: &mut String, v: f64, class: &str, style: &str) {
        let _ = writeln!(
            out,
            r#"<line class="{class}" data-value="{v}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" {style}/>"#,
            self.x(0.0),
            self.y(v),
            self.x(self.t_max),
            self.y(v)
        );
    }

    fn trace(
        &self,
        out: &mut String,
        times: &[f64],
        values: &[f64],
        label: &str,
        color: &str,
        dashed: bool,
    ) {
        let mut points = String::new();
        for (t, v) in times.iter().zip(values) {
            let _ = write!(points, "{:.2},{:.2} ", self.x(*t), self.y(*v));
        }
        let dash = if dashed {
            r#" stroke-dasharray="6 4""#
        } else {
            ""
        };
        let _ = writeln!(
            out,
            r#"<polyline class="trace" data-label="{label}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            points.trim_end()
        );
    }
}

fn range(values: impl Iterator<Item = f64>, pad_to: f64) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((-pad_to, pad_to), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let pad = 0.05 * (hi - lo).max(1e-9);
    (lo - pad, hi + pad)
}

pub fn record_to_svg(record: &TrajectoryRecord) -> Result<String> {
    if record.is_empty() {
        return Err(Error::Empty("trajectory record"));
    }
    let times: Vec<f64> = record.rows.iter().map(|r| r.time).collect();
    let t_max = *times.last().unwrap_or(&0.0);
    let height = MARGIN_TOP + 2.0 * PANEL_HEIGHT + PANEL_GAP + 40.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"#
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    let (z_lo, z_hi) = range(
        (0..record.len()).flat_map(|k| record.displacements(k).to_vec()),
        record.z_limit,
    );
    let top = Panel {
        top: MARGIN_TOP,
        t_max,
        y_min: z_lo,
        y_max: z_hi,
    };
    top.frame(&mut out, "displacements", "z");
    let extent = record.backup_extents.iter().copied().fold(0.0, f64::max);
    let _ = writeln!(
        out,
        r##"<rect class="backup-set" data-extent="{extent}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#2ca02c" fill-opacity="0.12"/>"##,
        top.x(0.0),
        top.y(extent),
        top.x(t_max) - top.x(0.0),
        top.y(-extent) - top.y(extent)
    );
    for limit in [record.z_limit, -record.z_limit] {
        top.hline(
            &mut out,
            limit,
            "limit",
            r##"stroke="#000" stroke-dasharray="3 3""##,
        );
    }
    for e in 0..record.edges {
        let values: Vec<f64> = (0..record.len())
            .map(|k| record.displacements(k)[e])
            .collect();
        top.trace(
            &mut out,
            &times,
            &values,
            &format!("z{}", e + 1),
            COLORS[e % COLORS.len()],
            false,
        );
    }

    let inputs = record.rows[0].u_applied.len();
    let (u_lo, u_hi) = range(
        record
            .rows
            .iter()
            .flat_map(|r| r.u_applied.iter().chain(&r.u_desired).copied()),
        0.0,
    );
    let bottom = Panel {
        top: MARGIN_TOP + PANEL_HEIGHT + PANEL_GAP,
        t_max,
        y_min: u_lo,
        y_max: u_hi,
    };
    bottom.frame(&mut out, "inputs (solid: applied, dashed: desired)", "u");
    for i in 0..inputs {
        let color = COLORS[i % COLORS.len()];
        let applied: Vec<f64> = record.rows.iter().map(|r| r.u_applied[i]).collect();
        let desired: Vec<f64> = record.rows.iter().map(|r| r.u_desired[i]).collect();
        bottom.trace(
            &mut out,
            &times,
            &applied,
            &format!("u{}", i + 1),
            color,
            false,
        );
        bottom.trace(
            &mut out,
            &times,
            &desired,
            &format!("ud{}", i + 1),
            color,
            true,
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn export_plot(record: &TrajectoryRecord, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, record_to_svg(record)?)?;
    Ok(())
}
