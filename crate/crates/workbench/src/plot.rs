//! SVG line charts and heatmaps rendered from CSV tables already on disk.
//! Plots only read files; nothing computed here flows back into results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, Context, Result};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { header, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("column `{name}` not in table"))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x.abs() >= 1e4 || x.abs() < 1e-2 {
        format!("{x:.1e}")
    } else {
        let s = format!("{x:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        let pad = 0.5 * (1.0 + lo.abs());
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn frame(out: &mut String, title: &str, xlabel: &str, ylabel: &str, xr: (f64, f64), yr: (f64, f64)) {
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    let _ = write!(out, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let f = f64::from(i) / 4.0;
        let x = LEFT + f * pw;
        let y = TOP + ph - f * ph;
        let xv = xr.0 + f * (xr.1 - xr.0);
        let yv = yr.0 + f * (yr.1 - yr.0);
        let _ = write!(
            out,
            r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="black"/><text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            fmt_tick(xv)
        );
        let _ = write!(
            out,
            r#"<line x1="{}" y1="{y}" x2="{LEFT}" y2="{y}" stroke="black"/><text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0,
            fmt_tick(yv)
        );
    }
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 12.0,
        escape(xlabel)
    );
    let _ = write!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(ylabel)
    );
}

/// One polyline per distinct value of `group` (or a single line), `y` against
/// `x`. Non-finite points are skipped.
pub fn line_chart(csv_path: &Path, svg_path: &Path, title: &str, x: &str, ys: &[&str], group: Option<&str>) -> Result<()> {
    let t = Table::read(csv_path)?;
    let xi = t.col(x)?;
    let gi = group.map(|g| t.col(g)).transpose()?;
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for y in ys {
        let yi = t.col(y)?;
        for row in &t.rows {
            let name = match gi {
                Some(g) if ys.len() > 1 => format!("{} {y}", row[g]),
                Some(g) => row[g].clone(),
                None => (*y).to_string(),
            };
            let px: f64 = row[xi].parse().unwrap_or(f64::NAN);
            let py: f64 = row[yi].parse().unwrap_or(f64::NAN);
            if !series.contains_key(&name) {
                order.push(name.clone());
            }
            let s = series.entry(name).or_default();
            if px.is_finite() && py.is_finite() {
                s.push((px, py));
            }
        }
    }
    let xr = span(series.values().flatten().map(|p| p.0));
    let yr = span(series.values().flatten().map(|p| p.1));
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let mut out = String::new();
    frame(&mut out, title, x, &ys.join(", "), xr, yr);
    for (i, name) in order.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = series[name]
            .iter()
            .map(|&(a, b)| {
                let px = LEFT + (a - xr.0) / (xr.1 - xr.0) * pw;
                let py = TOP + ph - (b - yr.0) / (yr.1 - yr.0) * ph;
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = write!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        for p in &pts {
            let (px, py) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = write!(out, r#"<circle cx="{px}" cy="{py}" r="2" fill="{color}"/>"#);
        }
        let ly = TOP + 12.0 + 16.0 * i as f64;
        let _ = write!(
            out,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            W - RIGHT + 10.0,
            W - RIGHT + 30.0,
            W - RIGHT + 35.0,
            ly + 4.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    std::fs::write(svg_path, out).with_context(|| format!("writing {}", svg_path.display()))
}

/// Cells of `value` on the grid of distinct `x` and `y` values.
pub fn heatmap(csv_path: &Path, svg_path: &Path, title: &str, x: &str, y: &str, value: &str) -> Result<()> {
    let t = Table::read(csv_path)?;
    let (xi, yi, vi) = (t.col(x)?, t.col(y)?, t.col(value)?);
    let parse = |s: &str| s.parse::<f64>().unwrap_or(f64::NAN);
    let mut cells: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for row in &t.rows {
        let (a, b, v) = (parse(&row[xi]), parse(&row[yi]), parse(&row[vi]));
        if !(a.is_finite() && b.is_finite()) {
            continue;
        }
        *cells.entry((a.to_bits(), b.to_bits())).or_default() += v;
        xs.push(a);
        ys.push(b);
    }
    let uniq = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v.dedup();
    };
    uniq(&mut xs);
    uniq(&mut ys);
    if xs.is_empty() || ys.is_empty() {
        return Err(anyhow!("no cells to plot in {}", csv_path.display()));
    }
    let vmax = cells.values().copied().filter(|v| v.is_finite()).fold(0.0f64, f64::max);
    let half = |v: &[f64]| if v.len() > 1 { 0.5 * (v[1] - v[0]) } else { 0.5 };
    let xr = (xs[0] - half(&xs), xs[xs.len() - 1] + half(&xs));
    let yr = (ys[0] - half(&ys), ys[ys.len() - 1] + half(&ys));
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let cw = pw / xs.len() as f64;
    let ch = ph / ys.len() as f64;
    let mut out = String::new();
    frame(&mut out, title, x, y, xr, yr);
    for (i, a) in xs.iter().enumerate() {
        for (j, b) in ys.iter().enumerate() {
            let v = cells.get(&(a.to_bits(), b.to_bits())).copied().unwrap_or(0.0);
            let f = if vmax > 0.0 { (v / vmax).clamp(0.0, 1.0) } else { 0.0 };
            let shade = (255.0 * (1.0 - f)).round() as u8;
            let _ = write!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({shade},{shade},255)"/>"#,
                LEFT + i as f64 * cw,
                TOP + ph - (j + 1) as f64 * ch,
                cw,
                ch
            );
        }
    }
    let _ = write!(
        out,
        r#"<text x="{}" y="{}">max {}</text>"#,
        W - RIGHT + 10.0,
        TOP + 12.0,
        fmt_tick(vmax)
    );
    out.push_str("</svg>\n");
    std::fs::write(svg_path, out).with_context(|| format!("writing {}", svg_path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_render_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("d.csv");
        std::fs::write(&csv, "g,x,y\na,0,1\na,1,2\nb,0,0.5\nb,1,inf\n").unwrap();
        let svg = dir.path().join("d.svg");
        line_chart(&csv, &svg, "t", "x", &["y"], Some("g")).unwrap();
        let text = std::fs::read_to_string(&svg).unwrap();
        assert_eq!(text.matches("<polyline").count(), 2);
        heatmap(&csv, &svg, "h", "x", "y", "x").unwrap();
        assert!(std::fs::read_to_string(&svg).unwrap().contains("<rect"));
        assert!(line_chart(&csv, &svg, "t", "x", &["missing"], None).is_err());
    }
}
