//! Hand-written SVG of mean relative regret against T.
//!
//! Structure (stable, parsed by tests):
//! - each panel is a `<g class="panel" data-metric=.. data-ymin=.. data-ymax=..
//!   data-top=.. data-bottom=..>`; a value `y` maps to pixel
//!   `bottom - (y - ymin) / (ymax - ymin) * (bottom - top)`
//! - per arm, a `<polygon class="band">` for mean +/- one standard deviation
//!   and a `<polyline class="regret">` (or `class="infeasibility"`) through
//!   the means, both tagged `data-arm`
//! - a `<g class="legend">` with one `<text class="legend-entry">` per arm
//! - axis titles are `<text class="axis-label">`

use std::collections::BTreeMap;
use std::fmt::Write;

use online_spo::simulate::Summary;

use crate::output::ResultRow;

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 320.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 560.0;
const TOP_PAD: f64 = 40.0;
const BOTTOM_PAD: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, Copy)]
enum Metric {
    Regret,
    Infeasibility,
}

impl Metric {
    fn class(self) -> &'static str {
        match self {
            Metric::Regret => "regret",
            Metric::Infeasibility => "infeasibility",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::Regret => "relative regret",
            Metric::Infeasibility => "infeasibility",
        }
    }

    fn value(self, r: &ResultRow) -> Option<f64> {
        match self {
            Metric::Regret => r.rel_regret,
            Metric::Infeasibility => r.infeasibility,
        }
    }
}

/// `(T, summary)` points of one arm, sorted by T.
type Series = Vec<(usize, Summary)>;

fn series(rows: &[&ResultRow], arms: &[String], metric: Metric) -> Vec<Series> {
    arms.iter()
        .map(|arm| {
            let mut by_t: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for r in rows.iter().filter(|r| &r.arm == arm) {
                if let Some(v) = metric.value(r) {
                    by_t.entry(r.horizon).or_default().push(v);
                }
            }
            by_t.into_iter().filter_map(|(t, v)| Summary::of(&v).map(|s| (t, s))).collect()
        })
        .collect()
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    let lo = lo.min(0.0);
    if hi - lo < 1e-12 {
        return (lo, lo + 1.0);
    }
    (lo, hi + 0.1 * (hi - lo))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn panel(svg: &mut String, data: &[Series], arms: &[String], metric: Metric, t_range: (f64, f64), top: f64) {
    let bottom = top + PANEL_HEIGHT - TOP_PAD - BOTTOM_PAD;
    let (lo, hi) = data
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, s)| {
            (lo.min(s.mean - s.std), hi.max(s.mean + s.std))
        });
    let (ymin, ymax) = if lo.is_finite() { nice_range(lo, hi) } else { (0.0, 1.0) };
    let (tmin, tmax) = t_range;
    let x = |t: usize| {
        if tmax > tmin {
            LEFT + (t as f64 - tmin) / (tmax - tmin) * (RIGHT - LEFT)
        } else {
            (LEFT + RIGHT) / 2.0
        }
    };
    let y = |v: f64| bottom - (v - ymin) / (ymax - ymin) * (bottom - top);

    let _ = writeln!(
        svg,
        r#"<g class="panel" data-metric="{}" data-ymin="{ymin}" data-ymax="{ymax}" data-top="{top}" data-bottom="{bottom}">"#,
        metric.class()
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT}" y="{top}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
        RIGHT - LEFT,
        bottom - top
    );
    for i in 0..=4 {
        let v = ymin + (ymax - ymin) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text class="tick" x="{}" y="{:.2}" text-anchor="end" font-size="11">{v:.3}</text>"#,
            LEFT - 6.0,
            y(v) + 4.0
        );
    }
    let mut ts: Vec<usize> = data.iter().flatten().map(|(t, _)| *t).collect();
    ts.sort_unstable();
    ts.dedup();
    for t in ts {
        let _ = writeln!(
            svg,
            r#"<text class="tick" x="{:.2}" y="{}" text-anchor="middle" font-size="11">{t}</text>"#,
            x(t),
            bottom + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text class="axis-label" x="{}" y="{}" text-anchor="middle" font-size="13">T</text>"#,
        (LEFT + RIGHT) / 2.0,
        bottom + 38.0
    );
    let _ = writeln!(
        svg,
        r#"<text class="axis-label" x="20" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 20 {})">{}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        metric.label()
    );
    for (i, (s, arm)) in data.iter().zip(arms).enumerate() {
        if s.is_empty() {
            continue;
        }
        let color = COLORS[i % COLORS.len()];
        let upper = s.iter().map(|(t, m)| format!("{:.2},{:.2}", x(*t), y(m.mean + m.std)));
        let lower = s.iter().rev().map(|(t, m)| format!("{:.2},{:.2}", x(*t), y(m.mean - m.std)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(
            svg,
            r#"<polygon class="band" data-arm="{}" points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            esc(arm),
            band.join(" ")
        );
        let line: Vec<String> = s.iter().map(|(t, m)| format!("{:.2},{:.2}", x(*t), y(m.mean))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="{}" data-arm="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            metric.class(),
            esc(arm),
            line.join(" ")
        );
    }
    svg.push_str("</g>\n");
}

/// Renders one instance's rows. Returns `None` when no row carries a
/// relative regret or infeasibility value.
pub fn render_svg(instance: &str, rows: &[&ResultRow]) -> Option<String> {
    let mut arms: Vec<String> = Vec::new();
    for r in rows {
        if !arms.contains(&r.arm) {
            arms.push(r.arm.clone());
        }
    }
    let regret = series(rows, &arms, Metric::Regret);
    let infeas = series(rows, &arms, Metric::Infeasibility);
    let has_regret = regret.iter().any(|s| !s.is_empty());
    let has_infeas = infeas.iter().any(|s| !s.is_empty());
    if !has_regret && !has_infeas {
        return None;
    }
    let tmin = rows.iter().map(|r| r.horizon).min()? as f64;
    let tmax = rows.iter().map(|r| r.horizon).max()? as f64;
    let panels = 1 + usize::from(has_infeas);
    let height = PANEL_HEIGHT * panels as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text class="title" x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (LEFT + RIGHT) / 2.0,
        esc(instance)
    );
    panel(&mut svg, &regret, &arms, Metric::Regret, (tmin, tmax), TOP_PAD);
    if has_infeas {
        panel(&mut svg, &infeas, &arms, Metric::Infeasibility, (tmin, tmax), PANEL_HEIGHT + TOP_PAD);
    }
    svg.push_str("<g class=\"legend\">\n");
    for (i, arm) in arms.iter().enumerate() {
        let yy = TOP_PAD + 10.0 + 20.0 * i as f64;
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{yy}" x2="{}" y2="{yy}" stroke="{color}" stroke-width="2"/>"#,
            RIGHT + 15.0,
            RIGHT + 35.0
        );
        let _ = writeln!(
            svg,
            r#"<text class="legend-entry" x="{}" y="{}" font-size="12">{}</text>"#,
            RIGHT + 40.0,
            yy + 4.0,
            esc(arm)
        );
    }
    svg.push_str("</g>\n</svg>\n");
    Some(svg)
}

/// Groups rows by instance, in order of first appearance.
pub fn by_instance(rows: &[ResultRow]) -> Vec<(String, Vec<&ResultRow>)> {
    let mut groups: Vec<(String, Vec<&ResultRow>)> = Vec::new();
    for r in rows {
        match groups.iter_mut().find(|(name, _)| name == &r.instance) {
            Some((_, g)) => g.push(r),
            None => groups.push((r.instance.clone(), vec![r])),
        }
    }
    groups
}
