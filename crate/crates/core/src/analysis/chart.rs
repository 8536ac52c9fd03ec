//! Static log-scale bar charts grouped by security level.

use std::fmt::Write as _;

use serde::Serialize;

use super::levels::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartMetric {
    Energy,
    Time,
}

impl ChartMetric {
    fn axis_label(self) -> &'static str {
        match self {
            ChartMetric::Energy => "Joules / 1,000 key generations (log scale)",
            ChartMetric::Time => "Seconds / 1,000 key generations (log scale)",
        }
    }

    fn title(self) -> &'static str {
        match self {
            ChartMetric::Energy => "Energy rate by NIST security level",
            ChartMetric::Time => "Time to generate 1,000 keys by NIST security level",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartBar {
    pub nist_level: u8,
    pub protocol: String,
    #[serde(serialize_with = "serialize_category")]
    pub category: Category,
    pub value: f64,
    /// `None` for non-positive values, which have no log.
    pub log10_value: Option<f64>,
    pub color: String,
}

fn serialize_category<S: serde::Serializer>(c: &Category, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(c.display_name())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartData {
    pub metric: ChartMetric,
    pub bars: Vec<ChartBar>,
}

const BAR_WIDTH: f64 = 34.0;
const BAR_GAP: f64 = 6.0;
const LEVEL_GAP: f64 = 34.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 200.0;
const BOTTOM: f64 = 60.0;
const PLOT_HEIGHT: f64 = 360.0;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn short_name(protocol: &str) -> &str {
    protocol.split(" (").next().unwrap_or(protocol)
}

fn format_value(v: f64) -> String {
    if v >= 1000.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

/// Decade range covering all positive values.
fn decades(bars: &[ChartBar]) -> (i32, i32) {
    let logs: Vec<f64> = bars.iter().filter_map(|b| b.log10_value).collect();
    if logs.is_empty() {
        return (0, 1);
    }
    let lo = logs.iter().cloned().fold(f64::INFINITY, f64::min).floor() as i32;
    let hi = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil() as i32;
    (lo, if hi > lo { hi } else { lo + 1 })
}

pub fn render_svg(data: &ChartData) -> String {
    let (lo, hi) = decades(&data.bars);
    let y_of = |log: f64| TOP + PLOT_HEIGHT * (1.0 - (log - lo as f64) / (hi - lo) as f64);

    // x positions, with wider gaps between levels
    let mut xs = Vec::with_capacity(data.bars.len());
    let mut x = LEFT + LEVEL_GAP / 2.0;
    let mut groups: Vec<(u8, f64, f64)> = Vec::new();
    for (i, bar) in data.bars.iter().enumerate() {
        if i > 0 {
            x += if data.bars[i - 1].nist_level == bar.nist_level {
                BAR_GAP
            } else {
                LEVEL_GAP
            };
        }
        xs.push(x);
        match groups.last_mut() {
            Some((level, _, end)) if *level == bar.nist_level => *end = x + BAR_WIDTH,
            _ => groups.push((bar.nist_level, x, x + BAR_WIDTH)),
        }
        x += BAR_WIDTH;
    }
    let plot_right = (x + LEVEL_GAP / 2.0).max(LEFT + 200.0);
    let width = plot_right + RIGHT;
    let height = TOP + PLOT_HEIGHT + BOTTOM;
    let base_y = TOP + PLOT_HEIGHT;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" font-size="16" text-anchor="middle">{}</text>"#,
        width / 2.0,
        escape(data.metric.title())
    );

    for decade in lo..=hi {
        let y = y_of(decade as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{plot_right:.1}" y2="{y:.1}" stroke="#dddddd"/>"##
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            escape(&format_value(10f64.powi(decade)))
        );
    }
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{base_y}" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{base_y}" x2="{plot_right:.1}" y2="{base_y}" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(20 {:.1}) rotate(-90)" font-size="12" text-anchor="middle">{}</text>"#,
        TOP + PLOT_HEIGHT / 2.0,
        escape(data.metric.axis_label())
    );

    for (bar, x) in data.bars.iter().zip(&xs) {
        let top = bar.log10_value.map_or(base_y, |l| y_of(l).min(base_y));
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.1}" y="{top:.1}" width="{BAR_WIDTH}" height="{:.1}" fill="{}"><title>{}: {}</title></rect>"#,
            base_y - top,
            escape(&bar.color),
            escape(&bar.protocol),
            escape(&format_value(bar.value))
        );
        let cx = x + BAR_WIDTH / 2.0;
        let ly = top - 6.0;
        let _ = writeln!(
            svg,
            r#"<text transform="translate({:.1} {ly:.1}) rotate(-90)" font-size="11">{} {}</text>"#,
            cx + 4.0,
            escape(short_name(&bar.protocol)),
            escape(&format_value(bar.value))
        );
    }

    for (level, start, end) in &groups {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">Level {level}</text>"#,
            (start + end) / 2.0,
            base_y + 22.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">NIST security level</text>"#,
        (LEFT + plot_right) / 2.0,
        base_y + 46.0
    );

    let legend = [Category::PostQuantum, Category::EllipticCurve, Category::Classic];
    for (i, cat) in legend.iter().enumerate() {
        let y = 40.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{LEFT}" y="{y:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{:.1}" font-size="12">{}</text>"#,
            cat.color(),
            LEFT + 18.0,
            y + 10.0,
            escape(cat.display_name())
        );
    }
    svg.push_str("</svg>\n");
    svg
}
