//! Schedule rendering: one horizontal lane per slice, a rectangle per task
//! spanning its instance's lanes, and colored markers for instance
//! creation/destruction.

use crate::sched::{ReconfigKind, Schedule};

const LANE_H: f64 = 26.0;
const LANE_GAP: f64 = 4.0;
const MARGIN_LEFT: f64 = 52.0;
const MARGIN_TOP: f64 = 34.0;
const CREATE_FILL: &str = "#39c2c9";
const DESTROY_FILL: &str = "#e04848";
const TASK_FILL: &str = "#4a78b5";

fn nice_tick(span: f64) -> f64 {
    if span <= 0.0 {
        return 1.0;
    }
    let raw = span / 10.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    step * mag
}

/// Self-contained SVG; `px_per_sec` scales the time axis.
///
/// Rectangles are used only for tasks and reconfiguration events, so the
/// drawing contains exactly `tasks + reconfigs` of them.
pub fn render_svg(schedule: &Schedule, px_per_sec: f64) -> String {
    let slices = schedule.model.num_slices as usize;
    let end_time = schedule
        .reconfigs
        .iter()
        .map(|e| e.end())
        .fold(schedule.makespan, f64::max)
        .max(1.0);
    let width = MARGIN_LEFT + end_time * px_per_sec + 24.0;
    let height = MARGIN_TOP + slices as f64 * (LANE_H + LANE_GAP) + 16.0;
    let x = |t: f64| MARGIN_LEFT + t * px_per_sec;
    let y = |slice: u32| MARGIN_TOP + f64::from(slice) * (LANE_H + LANE_GAP);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n"
    ));

    // Axis and lane guides.
    let tick = nice_tick(end_time);
    let mut t = 0.0;
    while t <= end_time + 1e-9 {
        svg.push_str(&format!(
            "<line x1=\"{0:.1}\" y1=\"{1:.1}\" x2=\"{0:.1}\" y2=\"{2:.1}\" \
             stroke=\"#ccc\" stroke-width=\"1\"/>\n",
            x(t),
            MARGIN_TOP - 4.0,
            height - 12.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"#444\">{t:.0}s</text>\n",
            x(t),
            MARGIN_TOP - 10.0
        ));
        t += tick;
    }
    for s in 0..slices as u32 {
        svg.push_str(&format!(
            "<text x=\"6\" y=\"{:.1}\" fill=\"#444\">S{s}</text>\n",
            y(s) + LANE_H * 0.7
        ));
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" \
             stroke=\"#eee\" stroke-width=\"1\"/>\n",
            MARGIN_LEFT,
            y(s) + LANE_H + LANE_GAP / 2.0,
            width - 12.0,
            y(s) + LANE_H + LANE_GAP / 2.0
        ));
    }

    for e in &schedule.reconfigs {
        let fill = match e.kind {
            ReconfigKind::Create => CREATE_FILL,
            ReconfigKind::Destroy => DESTROY_FILL,
        };
        let h = f64::from(e.instance.size) * (LANE_H + LANE_GAP) - LANE_GAP;
        let w = (e.duration * px_per_sec).max(2.0);
        svg.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
             fill=\"{fill}\" opacity=\"0.9\"/>\n",
            x(e.start),
            y(e.instance.start_slice),
            w,
            h
        ));
    }

    for task in &schedule.tasks {
        let h = f64::from(task.node.size) * (LANE_H + LANE_GAP) - LANE_GAP;
        svg.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
             fill=\"{TASK_FILL}\" stroke=\"#2c4a73\" stroke-width=\"1\" opacity=\"0.85\"/>\n",
            x(task.start),
            y(task.node.start_slice),
            (task.duration * px_per_sec).max(1.0),
            h
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"#fff\">{}</text>\n",
            x(task.start) + 3.0,
            y(task.node.start_slice) + LANE_H * 0.7,
            task.task_id
        ));
    }

    svg.push_str("</svg>\n");
    svg
}

/// Fixed-width rendering for terminals: one row per slice, `#` for task
/// time, `+` for creation and `x` for destruction.
pub fn render_text(schedule: &Schedule, columns: usize) -> String {
    let slices = schedule.model.num_slices as usize;
    let end_time = schedule
        .reconfigs
        .iter()
        .map(|e| e.end())
        .fold(schedule.makespan, f64::max);
    let columns = columns.max(10);
    let mut rows = vec![vec![' '; columns]; slices];
    if end_time > 0.0 {
        let col = |t: f64| {
            (((t / end_time) * columns as f64) as usize).min(columns.saturating_sub(1))
        };
        for e in &schedule.reconfigs {
            let mark = match e.kind {
                ReconfigKind::Create => '+',
                ReconfigKind::Destroy => 'x',
            };
            for s in e.instance.slices() {
                let a = col(e.start);
                let b = col(e.end());
                for c in a..=b {
                    rows[s as usize][c] = mark;
                }
            }
        }
        for t in &schedule.tasks {
            for s in t.node.slices() {
                let a = col(t.start);
                let b = col(t.end() - 1e-12);
                for c in a..=b {
                    rows[s as usize][c] = '#';
                }
            }
        }
    }
    let mut out = String::new();
    out.push_str(&format!(
        "makespan {:.3}s, {} tasks, {} reconfigurations\n",
        schedule.makespan,
        schedule.tasks.len(),
        schedule.reconfigs.len()
    ));
    for (s, row) in rows.iter().enumerate() {
        out.push_str(&format!("S{s} |"));
        out.extend(row.iter());
        out.push_str("|\n");
    }
    out
}
