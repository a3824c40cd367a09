//! Static SVG emission: training curves, bar charts with confidence
//! whiskers, and trajectory overlays on the scenario grid.

use hecta_core::learning::{MetricsRow, TraceRow};
use hecta_core::scenario::{ScenarioSpec, TaskType};
use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;

fn svg_open(out: &mut String) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    );
}

fn axes(out: &mut String, x_label: &str, y_label: &str) {
    let x0 = MARGIN;
    let y0 = H - MARGIN;
    let x1 = W - MARGIN / 2.0;
    let y1 = MARGIN / 2.0;
    let _ = write!(
        out,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{y_label}</text>\n",
        (x0 + x1) / 2.0,
        H - 14.0,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
    );
}

fn polyline(out: &mut String, points: &[(f64, f64)], color: &str) {
    if points.is_empty() {
        return;
    }
    let path: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = write!(
        out,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
        path.join(" ")
    );
}

/// Episode-indexed training curve: task completion rate and loss, each on
/// its own normalized vertical scale.
pub fn training_curve(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    svg_open(&mut out);
    axes(&mut out, "episode", "tcr / scaled loss");
    if !rows.is_empty() {
        let x0 = MARGIN;
        let y0 = H - MARGIN;
        let span_x = W - MARGIN * 1.5;
        let span_y = H - MARGIN * 1.5;
        let max_ep = rows.last().map(|r| r.episode as f64).unwrap_or(1.0).max(1.0);
        let max_loss = rows.iter().map(|r| r.loss).fold(0.0, f64::max).max(1e-12);
        let to_xy = |ep: f64, v: f64| (x0 + span_x * ep / max_ep, y0 - span_y * v.clamp(0.0, 1.0));
        let tcr: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| to_xy(r.episode as f64, r.tcr))
            .collect();
        let loss: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| to_xy(r.episode as f64, r.loss / max_loss))
            .collect();
        polyline(&mut out, &tcr, "#1f77b4");
        polyline(&mut out, &loss, "#d62728");
        let _ = write!(
            out,
            "<text x=\"{}\" y=\"{}\" fill=\"#1f77b4\">tcr</text>\n\
             <text x=\"{}\" y=\"{}\" fill=\"#d62728\">loss / {max_loss:.3}</text>\n",
            W - MARGIN * 2.0,
            MARGIN,
            W - MARGIN * 2.0,
            MARGIN + 16.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Column chart with 95% confidence whiskers.
pub fn bar_chart(rows: &[(String, f64, f64)]) -> String {
    let mut out = String::new();
    svg_open(&mut out);
    axes(&mut out, "", "tcr");
    let n = rows.len().max(1) as f64;
    let x0 = MARGIN;
    let y0 = H - MARGIN;
    let span_x = W - MARGIN * 1.5;
    let span_y = H - MARGIN * 1.5;
    let slot = span_x / n;
    let bar_w = slot * 0.6;
    for (i, (label, mean, ci)) in rows.iter().enumerate() {
        let cx = x0 + slot * (i as f64 + 0.5);
        let height = span_y * mean.clamp(0.0, 1.0);
        let top = y0 - height;
        let _ = write!(
            out,
            "<rect x=\"{:.2}\" y=\"{top:.2}\" width=\"{bar_w:.2}\" height=\"{height:.2}\" \
             fill=\"#1f77b4\"/>\n",
            cx - bar_w / 2.0
        );
        // Whiskers.
        let lo = (y0 - span_y * (mean - ci).clamp(0.0, 1.0)).min(y0);
        let hi = y0 - span_y * (mean + ci).clamp(0.0, 1.0);
        let _ = write!(
            out,
            "<line x1=\"{cx:.2}\" y1=\"{lo:.2}\" x2=\"{cx:.2}\" y2=\"{hi:.2}\" stroke=\"black\"/>\n\
             <line x1=\"{:.2}\" y1=\"{hi:.2}\" x2=\"{:.2}\" y2=\"{hi:.2}\" stroke=\"black\"/>\n\
             <line x1=\"{:.2}\" y1=\"{lo:.2}\" x2=\"{:.2}\" y2=\"{lo:.2}\" stroke=\"black\"/>\n\
             <text x=\"{cx:.2}\" y=\"{}\" text-anchor=\"middle\">{label}</text>\n\
             <text x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"10\">{:.3}</text>\n",
            cx - 6.0,
            cx + 6.0,
            cx - 6.0,
            cx + 6.0,
            y0 + 16.0,
            top - 6.0,
            mean
        );
    }
    out.push_str("</svg>\n");
    out
}

fn class_color(class: &str) -> &'static str {
    match class {
        "worker" => "#2ca02c",
        "uav" => "#d62728",
        "ugv" => "#1f77b4",
        _ => "#7f7f7f",
    }
}

fn task_color(ty: TaskType) -> &'static str {
    match ty {
        TaskType::Aerial => "#ff9896",
        TaskType::Ground => "#aec7e8",
        TaskType::Detailed => "#98df8a",
    }
}

/// Movement trajectories over the scenario grid: obstacle cells, task
/// glyphs by type, and one polyline per entity from its start.
pub fn trajectory_overlay(spec: &ScenarioSpec, trace: &[TraceRow]) -> String {
    let mut out = String::new();
    let cell = ((W - 2.0 * MARGIN) / spec.grid.width as f64)
        .min((H - 2.0 * MARGIN) / spec.grid.height as f64);
    let x0 = MARGIN;
    let y0 = MARGIN;
    svg_open(&mut out);
    for r in 0..=spec.grid.height {
        let y = y0 + cell * r as f64;
        let _ = write!(
            out,
            "<line x1=\"{x0}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/>\n",
            x0 + cell * spec.grid.width as f64
        );
    }
    for c in 0..=spec.grid.width {
        let x = x0 + cell * c as f64;
        let _ = write!(
            out,
            "<line x1=\"{x:.2}\" y1=\"{y0}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#dddddd\"/>\n",
            y0 + cell * spec.grid.height as f64
        );
    }
    let center = |row: usize, col: usize| {
        (
            x0 + cell * (col as f64 + 0.5),
            y0 + cell * (row as f64 + 0.5),
        )
    };
    for obstacle in &spec.obstacles {
        let _ = write!(
            out,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" fill=\"#444444\"/>\n",
            x0 + cell * obstacle.col as f64,
            y0 + cell * obstacle.row as f64
        );
    }
    for task in &spec.tasks {
        let (cx, cy) = center(task.location.row, task.location.col);
        let _ = write!(
            out,
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{:.2}\" fill=\"{}\" stroke=\"#555555\"/>\n",
            cell * 0.3,
            task_color(task.task_type)
        );
    }
    for (k, e) in spec.entities.iter().enumerate() {
        let mut points = vec![center(e.start.row, e.start.col)];
        points.extend(
            trace
                .iter()
                .filter(|r| r.entity_id == k)
                .map(|r| center(r.row, r.col)),
        );
        polyline(&mut out, &points, class_color(e.class.name()));
        let (sx, sy) = points[0];
        let _ = write!(
            out,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"6\" height=\"6\" fill=\"{}\"/>\n",
            sx - 3.0,
            sy - 3.0,
            class_color(e.class.name())
        );
    }
    out.push_str("</svg>\n");
    out
}
