// Copyright 2026 qsens Contributors
// SPDX-License-Identifier: Apache-2.0

//! Self-contained SVG charts with a linear x axis and a log10 y axis.

use std::fmt::Write as _;

use crate::error::{CliError, CliResult};
use crate::io::CsvData;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Markers,
    Line,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Horizontal reference lines.
    pub levels: Vec<(String, f64)>,
    pub note: String,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

impl Chart {
    fn x_range(&self) -> (f64, f64) {
        let xs = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.0))
            .filter(|x| x.is_finite());
        let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
            (a.min(x), b.max(x))
        });
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if lo == hi {
            (lo - 1.0, hi + 1.0)
        } else {
            (lo, hi)
        }
    }

    /// Decade exponents spanning every positive value.
    fn y_decades(&self) -> (i32, i32) {
        let ys = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .chain(self.levels.iter().map(|l| l.1))
            .filter(|y| y.is_finite() && *y > 0.0);
        let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| {
            (a.min(y), b.max(y))
        });
        if !lo.is_finite() {
            return (-6, 0);
        }
        let (a, b) = (lo.log10().floor() as i32, hi.log10().ceil() as i32);
        if a == b {
            (a, a + 1)
        } else {
            (a, b)
        }
    }

    pub fn render(&self) -> String {
        let (x0, x1) = self.x_range();
        let (d0, d1) = self.y_decades();
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let py = |y: f64| TOP + ph - (y.log10() - d0 as f64) / (d1 - d0) as f64 * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, "<title>{}</title>", escape(&self.title));
        if !self.note.is_empty() {
            let _ = writeln!(s, "<desc>{}</desc>", escape(&self.note));
        }
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );

        // grid and ticks
        let _ = writeln!(s, r##"<g class="y-axis" stroke="#dddddd">"##);
        let every = ((d1 - d0) as f64 / 10.0).ceil().max(1.0) as i32;
        for d in (d0..=d1).step_by(every as usize) {
            let y = py(10f64.powi(d));
            let _ = writeln!(
                s,
                r#"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}"/>"#,
                LEFT + pw
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end" stroke="none" fill="black">1e{d}</text>"#,
                LEFT - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(s, r##"<g class="x-axis" stroke="#dddddd">"##);
        let step = nice_step(x1 - x0);
        let mut t = (x0 / step).ceil() * step;
        while t <= x1 + 1e-9 * step {
            let x = px(t);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}"/>"#,
                TOP + ph
            );
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" stroke="none" fill="black">{}</text>"#,
                TOP + ph + 18.0,
                format_tick(t, step)
            );
            t += step;
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        let mut legend = Vec::new();
        for (i, (label, level)) in self.levels.iter().enumerate() {
            if !(level.is_finite() && *level > 0.0) {
                continue;
            }
            let y = py(*level);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#000000" stroke-dasharray="6 4"/>"##,
                LEFT + pw
            );
            legend.push((
                format!("{label} = {level}"),
                "#000000".to_string(),
                None::<Style>,
                i,
            ));
        }
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<(f64, f64)> = series
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite() && p.1 > 0.0)
                .map(|&(x, y)| (px(x), py(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<g class="series" data-label="{}">"#,
                escape(&series.label)
            );
            match series.style {
                Style::Markers => {
                    for (x, y) in &pts {
                        let _ = writeln!(
                            s,
                            r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#
                        );
                    }
                }
                Style::Line if !pts.is_empty() => {
                    let path: Vec<String> =
                        pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                        path.join(" ")
                    );
                }
                Style::Line => {}
            }
            let _ = writeln!(s, "</g>");
            legend.push((
                series.label.clone(),
                color.to_string(),
                Some(series.style),
                i,
            ));
        }
        for (row, (label, color, style, _)) in legend.iter().enumerate() {
            let x = LEFT + pw + 14.0;
            let y = TOP + 12.0 + row as f64 * 18.0;
            match style {
                Some(Style::Markers) => {
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                        x + 8.0,
                        y - 4.0
                    );
                }
                Some(Style::Line) => {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{x:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="1.5"/>"#,
                        y - 4.0,
                        x + 16.0,
                        y - 4.0
                    );
                }
                None => {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{x:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="6 4"/>"#,
                        y - 4.0,
                        x + 16.0,
                        y - 4.0
                    );
                }
            }
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{y:.2}">{}</text>"#,
                x + 22.0,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn format_tick(t: f64, step: f64) -> String {
    if step >= 1.0 {
        format!("{}", t.round())
    } else {
        let digits = (-step.log10().floor()) as usize;
        format!("{t:.digits$}")
    }
}

fn points(xs: &[Option<f64>], ys: &[Option<f64>], transform: fn(f64) -> f64) -> Vec<(f64, f64)> {
    xs.iter()
        .zip(ys)
        .filter_map(|(x, y)| Some((x.as_ref().copied()?, transform(y.as_ref().copied()?))))
        .collect()
}

fn first_value(v: &[Option<f64>]) -> Option<f64> {
    v.iter().flatten().next().copied()
}

fn require_labels(data: &CsvData, prefix: &str) -> CliResult<Vec<String>> {
    let labels = data.labels_with_prefix(prefix);
    if labels.is_empty() {
        return Err(CliError::data(
            &data.path,
            format!("missing columns {prefix}<structure>"),
        ));
    }
    Ok(labels)
}

/// |ζ_μ| per controller with the B2 and B3 bounds.
pub fn sensitivity_chart(sens: &CsvData, bounds: &CsvData) -> CliResult<Chart> {
    let labels = require_labels(sens, "zeta_")?;
    let x = sens.numbers("controller")?;
    let bx = bounds.numbers("controller")?;
    let mut series: Vec<Series> = labels
        .iter()
        .map(|l| {
            Ok(Series {
                label: format!("|ζ| {l}"),
                points: points(&x, &sens.numbers(&format!("zeta_{l}"))?, f64::abs),
                style: Style::Markers,
            })
        })
        .collect::<CliResult<_>>()?;
    for b in ["b2", "b3"] {
        series.push(Series {
            label: b.to_uppercase(),
            points: points(&bx, &bounds.numbers(b)?, |y| y),
            style: Style::Line,
        });
    }
    Ok(Chart {
        title: "Error sensitivity and worst-case bounds".into(),
        x_label: "controller index".into(),
        y_label: "sensitivity".into(),
        series,
        levels: vec![],
        note: format!("{} controllers", x.len()),
    })
}

fn certificate_columns(certs: &CsvData) -> CliResult<(Vec<Option<f64>>, Option<f64>)> {
    certs.column("status")?;
    let x = certs.numbers("controller")?;
    let eps = first_value(&certs.numbers("epsilon")?);
    Ok((x, eps))
}

/// Nominal error and the perturbed error at the analytic margin.
pub fn analytic_chart(certs: &CsvData) -> CliResult<Chart> {
    let labels = require_labels(certs, "analytic_error_")?;
    let (x, eps) = certificate_columns(certs)?;
    let mut series = vec![Series {
        label: "e(0)".into(),
        points: points(&x, &certs.numbers("nominal_error")?, |y| y),
        style: Style::Markers,
    }];
    for l in &labels {
        series.push(Series {
            label: format!("ẽ {l} at analytic δ̄"),
            points: points(&x, &certs.numbers(&format!("analytic_error_{l}"))?, |y| y),
            style: Style::Markers,
        });
    }
    Ok(Chart {
        title: "Perturbed error at the analytic margin".into(),
        x_label: "controller index".into(),
        y_label: "gate error".into(),
        series,
        levels: eps.map(|e| vec![("ε".to_string(), e)]).unwrap_or_default(),
        note: String::new(),
    })
}

/// Perturbed errors along each structure at the iterative margin.
pub fn iterative_chart(certs: &CsvData) -> CliResult<Chart> {
    let labels = require_labels(certs, "iter_error_")?;
    let (x, eps) = certificate_columns(certs)?;
    let mut series = vec![Series {
        label: "e(0)".into(),
        points: points(&x, &certs.numbers("nominal_error")?, |y| y),
        style: Style::Markers,
    }];
    for l in &labels {
        series.push(Series {
            label: format!("ẽ {l} at iterative δ̄"),
            points: points(&x, &certs.numbers(&format!("iter_error_{l}"))?, |y| y),
            style: Style::Markers,
        });
    }
    Ok(Chart {
        title: "Perturbed error at the iterative worst-case margin".into(),
        x_label: "controller index".into(),
        y_label: "gate error".into(),
        series,
        levels: eps.map(|e| vec![("ε".to_string(), e)]).unwrap_or_default(),
        note: String::new(),
    })
}

/// Analytic margins per structure against the iterative margin.
pub fn margin_chart(certs: &CsvData) -> CliResult<Chart> {
    let labels = require_labels(certs, "analytic_delta_")?;
    let (x, _) = certificate_columns(certs)?;
    let mut series = vec![Series {
        label: "iterative δ̄".into(),
        points: points(&x, &certs.numbers("iter_delta")?, |y| y),
        style: Style::Markers,
    }];
    for l in &labels {
        series.push(Series {
            label: format!("analytic δ̄ {l}"),
            points: points(&x, &certs.numbers(&format!("analytic_delta_{l}"))?, |y| y),
            style: Style::Markers,
        });
    }
    Ok(Chart {
        title: "Certified perturbation margins".into(),
        x_label: "controller index".into(),
        y_label: "δ̄".into(),
        series,
        levels: vec![],
        note: String::new(),
    })
}
