//! Renders a sweep report as an SVG line chart: metric against target
//! dimension, one line per (method, setting), the baseline dashed.

use std::collections::BTreeMap;
use std::fmt::Write;

use sentcomp::store::{EvalReport, Setting};

use crate::error::CliError;

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Series of (dim, mean value over seeds), keyed by `method/setting`.
type Series = BTreeMap<String, Vec<(usize, f64)>>;

fn collect(report: &EvalReport, task: &str) -> (Series, Option<f64>, String) {
    let mut acc: BTreeMap<String, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    let mut baseline = None;
    let mut metric = String::new();
    for row in report
        .rows
        .iter()
        .filter(|r| r.task == task && !r.is_error())
    {
        metric.clone_from(&row.metric);
        match row.setting {
            None => baseline = Some(row.value),
            Some(setting) => {
                let key = format!("{}/{}", row.method, setting_label(setting));
                let slot = acc
                    .entry(key)
                    .or_default()
                    .entry(row.dim)
                    .or_insert((0.0, 0));
                slot.0 += row.value;
                slot.1 += 1;
            }
        }
    }
    let series = acc
        .into_iter()
        .map(|(k, pts)| {
            (
                k,
                pts.into_iter()
                    .map(|(d, (s, c))| (d, s / c as f64))
                    .collect(),
            )
        })
        .collect();
    (series, baseline, metric)
}

fn setting_label(s: Setting) -> &'static str {
    match s {
        Setting::Inductive => "ind",
        Setting::Transductive => "trans",
    }
}

/// Renders `task` (default: the first task in the report).
pub fn render_svg(
    report: &EvalReport,
    task: Option<&str>,
    title: Option<&str>,
) -> Result<String, CliError> {
    let task = match task {
        Some(t) => t.to_string(),
        None => report
            .rows
            .first()
            .map(|r| r.task.clone())
            .ok_or_else(|| CliError::usage("report has no rows"))?,
    };
    let (series, baseline, metric) = collect(report, &task);
    if series.is_empty() && baseline.is_none() {
        return Err(CliError::usage(format!(
            "no plottable rows for task {task:?}"
        )));
    }
    let dims: Vec<usize> = series.values().flatten().map(|p| p.0).collect();
    let (dmin, dmax) = match (dims.iter().min(), dims.iter().max()) {
        (Some(&a), Some(&b)) => (a as f64, b as f64),
        _ => (1.0, 2.0),
    };
    let log_x = dmin > 0.0 && dmax / dmin >= 8.0;
    let xf = |d: f64| if log_x { d.log2() } else { d };
    let (x0, x1) = if dmax > dmin {
        (xf(dmin), xf(dmax))
    } else {
        (xf(dmin) - 1.0, xf(dmin) + 1.0)
    };
    let values = series.values().flatten().map(|p| p.1).chain(baseline);
    let (mut y0, mut y1) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let pad = ((y1 - y0) * 0.05).max(1e-3);
    y0 -= pad;
    y1 += pad;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |d: f64| LEFT + (xf(d) - x0) / (x1 - x0) * plot_w;
    let py = |v: f64| TOP + (1.0 - (v - y0) / (y1 - y0)) * plot_h;

    let mut svg = String::new();
    let w = &mut svg;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let heading = title
        .map(str::to_string)
        .unwrap_or_else(|| format!("{task}: {metric} by dimension"));
    let _ = writeln!(
        w,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(&heading)
    );
    let _ = writeln!(
        w,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let v = y0 + (y1 - y0) * i as f64 / 5.0;
        let y = py(v);
        let _ = writeln!(
            w,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            w,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let mut ticks: Vec<usize> = dims.clone();
    ticks.sort_unstable();
    ticks.dedup();
    for d in ticks {
        let x = px(d as f64);
        let _ = writeln!(
            w,
            r#"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="black"/>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0
        );
        let _ = writeln!(
            w,
            r#"<text x="{x:.1}" y="{}" text-anchor="middle">{d}</text>"#,
            TOP + plot_h + 18.0
        );
    }
    let _ = writeln!(
        w,
        r#"<text x="{}" y="{}" text-anchor="middle">target dimension{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 18.0,
        if log_x { " (log scale)" } else { "" }
    );
    let _ = writeln!(
        w,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(&metric)
    );

    let legend_x = LEFT + plot_w + 15.0;
    let mut legend_y = TOP + 10.0;
    if let Some(b) = baseline {
        let y = py(b);
        let _ = writeln!(
            w,
            r#"<line x1="{LEFT}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="black" stroke-dasharray="6 4"/>"#,
            LEFT + plot_w
        );
        let _ = writeln!(
            w,
            r#"<line x1="{legend_x}" y1="{legend_y}" x2="{}" y2="{legend_y}" stroke="black" stroke-dasharray="6 4"/>"#,
            legend_x + 24.0
        );
        let _ = writeln!(
            w,
            r#"<text x="{}" y="{}">baseline</text>"#,
            legend_x + 30.0,
            legend_y + 4.0
        );
        legend_y += 20.0;
    }
    for (i, (name, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = points
            .iter()
            .map(|&(d, v)| format!("{:.1},{:.1}", px(d as f64), py(v)))
            .collect();
        let _ = writeln!(
            w,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for &(d, v) in points {
            let _ = writeln!(
                w,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                px(d as f64),
                py(v)
            );
        }
        let _ = writeln!(
            w,
            r#"<line x1="{legend_x}" y1="{legend_y}" x2="{}" y2="{legend_y}" stroke="{color}" stroke-width="2"/>"#,
            legend_x + 24.0
        );
        let _ = writeln!(
            w,
            r#"<text x="{}" y="{}">{}</text>"#,
            legend_x + 30.0,
            legend_y + 4.0,
            escape(name)
        );
        legend_y += 20.0;
    }
    let _ = writeln!(w, "</svg>");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sentcomp::store::EvalRow;

    fn row(method: &str, dim: usize, setting: Option<Setting>, value: f64) -> EvalRow {
        EvalRow {
            task: "sts".into(),
            method: method.into(),
            dim,
            setting,
            seed: 0,
            metric: "spearman".into(),
            value,
            fit_seconds: 0.0,
            transform_seconds: 0.0,
        }
    }

    #[test]
    fn renders_series_and_baseline() {
        let report = EvalReport::new(vec![
            row("identity", 64, None, 0.8),
            row("pca", 16, Some(Setting::Inductive), 0.6),
            row("pca", 64, Some(Setting::Inductive), 0.79),
            row("grp", 16, Some(Setting::Inductive), 0.5),
            EvalRow::failed("sts", "kpca", 16, Some(Setting::Inductive), 0, "boom"),
        ]);
        let svg = render_svg(&report, None, None).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("baseline"));
        assert!(svg.contains("pca/ind"));
        assert!(!svg.contains("kpca"));
    }

    #[test]
    fn unknown_task_is_usage_error() {
        let report = EvalReport::new(vec![row("pca", 4, Some(Setting::Inductive), 0.1)]);
        assert!(matches!(
            render_svg(&report, Some("nli"), None),
            Err(CliError::Usage(_))
        ));
    }
}
