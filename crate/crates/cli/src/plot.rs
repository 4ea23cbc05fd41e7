//! Standalone SVG line plots of CSV tables written by this tool.

use std::fmt::Write as _;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub x: String,
    pub y: Vec<String>,
    pub log_x: bool,
    pub log_y: bool,
    pub title: Option<String>,
}

const W: f64 = 720.0;
const H: f64 = 450.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Data {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(text: &str) -> Result<Data, CliError> {
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut rdr = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(CliError::Plot("CSV has no header".into()));
    }
    let rows = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()?;
    if rows.is_empty() {
        return Err(CliError::Plot("CSV has no data rows".into()));
    }
    Ok(Data { header, rows })
}

fn column(d: &Data, name: &str) -> Result<usize, CliError> {
    d.header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Plot(format!("missing column {name:?} (have {})", d.header.join(", "))))
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Option<Axis> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return None;
        }
        if hi - lo < 1e-12 {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            lo -= pad;
            hi += pad;
        }
        Some(Axis { lo, hi, log })
    }

    fn map(&self, v: f64, from: f64, to: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        from + (v - self.lo) / (self.hi - self.lo) * (to - from)
    }

    /// Tick positions in data units and their labels.
    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo.floor() as i32, self.hi.ceil() as i32);
            let step = ((b - a) as f64 / 8.0).ceil().max(1.0) as i32;
            (a..=b)
                .step_by(step as usize)
                .map(|e| 10f64.powi(e))
                .filter(|v| (v.log10() >= self.lo - 1e-9) && (v.log10() <= self.hi + 1e-9))
                .map(|v| (v, format!("1e{}", v.log10().round() as i32)))
                .collect()
        } else {
            let raw = (self.hi - self.lo) / 5.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0]
                .iter()
                .map(|m| m * mag)
                .find(|s| *s >= raw)
                .unwrap_or(10.0 * mag);
            let mut v = (self.lo / step).ceil() * step;
            let mut out = Vec::new();
            while v <= self.hi + step * 1e-9 {
                out.push((v, format!("{}", (v / step).round() * step)));
                v += step;
            }
            out
        }
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the SVG document for `csv_text`.
pub fn render_svg(csv_text: &str, spec: &PlotSpec) -> Result<String, CliError> {
    if spec.y.is_empty() {
        return Err(CliError::Plot("no y columns requested".into()));
    }
    let d = read_table(csv_text)?;
    let xi = column(&d, &spec.x)?;
    let yis = spec.y.iter().map(|y| column(&d, y)).collect::<Result<Vec<_>, _>>()?;
    let keep = |v: f64, log: bool| v.is_finite() && (!log || v > 0.0);
    let mut series: Vec<Vec<(f64, f64)>> = Vec::new();
    for &yi in &yis {
        let mut pts: Vec<(f64, f64)> = d
            .rows
            .iter()
            .filter_map(|r| Some((r.get(xi)?.parse::<f64>().ok()?, r.get(yi)?.parse::<f64>().ok()?)))
            .filter(|(x, y)| keep(*x, spec.log_x) && keep(*y, spec.log_y))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        series.push(pts);
    }
    let xa = Axis::fit(series.iter().flatten().map(|p| p.0), spec.log_x)
        .ok_or_else(|| CliError::Plot("no plottable points".into()))?;
    let ya = Axis::fit(series.iter().flatten().map(|p| p.1), spec.log_y)
        .ok_or_else(|| CliError::Plot("no plottable points".into()))?;
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    if let Some(t) = &spec.title {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            (x0 + x1) / 2.0,
            esc(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for (v, label) in xa.ticks() {
        let px = xa.map(v, x0, x1);
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{y1}" stroke="#e0e0e0"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"##,
            y0 + 18.0,
            esc(&label)
        );
    }
    for (v, label) in ya.ticks() {
        let py = ya.map(v, y0, y1);
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{py:.2}" x2="{x1}" y2="{py:.2}" stroke="#e0e0e0"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            x0 - 6.0,
            py + 4.0,
            esc(&label)
        );
    }
    let xl = if spec.log_x { format!("{} (log)", spec.x) } else { spec.x.clone() };
    let yl = if spec.log_y { format!("{} (log)", spec.y.join(", ")) } else { spec.y.join(", ") };
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 15.0,
        esc(&xl)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(20 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (y0 + y1) / 2.0,
        esc(&yl)
    );
    for (k, (pts, name)) in series.iter().zip(&spec.y).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", xa.map(*x, x0, x1), ya.map(*y, y0, y1)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
            path.join(" ")
        );
        let ly = y1 + 18.0 * (k as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            x1 + 10.0,
            x1 + 30.0,
            x1 + 35.0,
            ly + 4.0,
            esc(name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Reads `csv_path` and writes the plot to `out`. Nothing is written on error.
pub fn emit_plot(csv_path: &Path, spec: &PlotSpec, out: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(csv_path)?;
    let svg = render_svg(&text, spec)?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, svg)?;
    Ok(())
}
