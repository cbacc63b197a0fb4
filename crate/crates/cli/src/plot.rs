//! Static SVG line charts of logged columns against time.

use std::fmt::Write as _;

use paracont::log::TrajectoryLog;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug)]
pub enum PlotError {
    Empty,
    MissingColumn(String),
    NoFiniteData,
}

impl std::fmt::Display for PlotError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlotError::Empty => write!(f, "the trajectory has no rows"),
            PlotError::MissingColumn(c) => write!(f, "column {c:?} not found"),
            PlotError::NoFiniteData => write!(f, "the selected columns hold no finite values"),
        }
    }
}

/// Round step close to `span / 5`.
fn tick_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = tick_step(hi - lo);
    let mut v = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while v <= hi + 1e-9 * step {
        out.push(if v.abs() < 1e-12 * step { 0.0 } else { v });
        v += step;
    }
    out
}

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

/// Renders `columns` against `x_column` (usually `t`).
pub fn render(log: &TrajectoryLog, x_column: &str, columns: &[String], title: &str) -> Result<String, PlotError> {
    if log.is_empty() {
        return Err(PlotError::Empty);
    }
    let xs = log.column(x_column).ok_or_else(|| PlotError::MissingColumn(x_column.into()))?;
    let series: Vec<(String, Vec<f64>)> = columns
        .iter()
        .map(|c| log.column(c).map(|v| (c.clone(), v)).ok_or_else(|| PlotError::MissingColumn(c.clone())))
        .collect::<Result<_, _>>()?;

    let finite = |v: &&f64| v.is_finite();
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, ys) in &series {
        for y in ys.iter().filter(finite) {
            y_lo = y_lo.min(*y);
            y_hi = y_hi.max(*y);
        }
    }
    let (x_lo, x_hi) = xs
        .iter()
        .filter(finite)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if !y_lo.is_finite() || !x_lo.is_finite() {
        return Err(PlotError::NoFiniteData);
    }
    let (y_lo, y_hi) = padded(y_lo, y_hi);
    let (x_lo, x_hi) = if x_hi > x_lo { (x_lo, x_hi) } else { padded(x_lo, x_hi) };

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * pw;
    let sy = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for x in ticks(x_lo, x_hi) {
        let px = sx(x);
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{}" stroke="#dddddd"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 16.0,
            label(x)
        );
    }
    for y in ticks(y_lo, y_hi) {
        let py = sy(y);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#dddddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            py + 4.0,
            label(y)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0,
        escape(x_column)
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">value</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    for (i, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        // break the line at non-finite samples
        let mut path = String::new();
        let mut pen_down = false;
        for (x, y) in xs.iter().zip(ys) {
            if x.is_finite() && y.is_finite() {
                let _ = write!(path, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, sx(*x), sy(*y));
                pen_down = true;
            } else {
                pen_down = false;
            }
        }
        let _ = writeln!(
            svg,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.trim_end()
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log() -> TrajectoryLog {
        let mut l = TrajectoryLog::new(["t", "lambda", "y1"]).unwrap();
        for k in 0..=10 {
            let t = k as f64 * 0.1;
            l.push(vec![t, t.min(0.5) * 2.0, 1.0 - t]).unwrap();
        }
        l
    }

    #[test]
    fn one_path_per_series() {
        let svg = render(&log(), "t", &["lambda".into(), "y1".into()], "run").unwrap();
        assert_eq!(svg.matches("<path").count(), 2);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(">lambda<") && svg.contains(">y1<") && svg.contains(">t<"));
    }

    #[test]
    fn missing_column_is_named() {
        match render(&log(), "t", &["theta1".into()], "run") {
            Err(PlotError::MissingColumn(c)) => assert_eq!(c, "theta1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_log_rejected() {
        let l = TrajectoryLog::new(["t", "lambda"]).unwrap();
        assert!(matches!(render(&l, "t", &["lambda".into()], "run"), Err(PlotError::Empty)));
    }

    #[test]
    fn tick_steps_are_round() {
        assert_eq!(tick_step(10.0), 2.0);
        assert_eq!(tick_step(1.0), 0.2);
        assert_eq!(ticks(0.0, 1.0).len(), 6);
    }
}
