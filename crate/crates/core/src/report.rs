//! Static HTML summary with inline SVG plots.

use std::fmt::Write as _;
use std::path::Path;

use crate::breath_analysis::CorrelationMatrix;
use crate::domain::Channel;
use crate::error::{Error, Result};
use crate::pipeline::{ActivityStats, Analysis, EvalDocument, Preview};

const W: f64 = 640.0;
const H: f64 = 200.0;
const PAD: f64 = 36.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let m = 0.05 * (hi - lo);
        (lo - m, hi + m)
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    top: f64,
    height: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        PAD + (v - self.x0) / (self.x1 - self.x0).max(1e-12) * (W - 2.0 * PAD)
    }

    fn y(&self, v: f64) -> f64 {
        self.top + self.height - (v - self.y0) / (self.y1 - self.y0) * self.height
    }

    fn axes(&self, svg: &mut String, title: &str) {
        let bottom = self.top + self.height;
        let _ = write!(
            svg,
            r##"<text x="{PAD}" y="{:.1}" font-size="12">{}</text><line x1="{PAD}" y1="{bottom:.1}" x2="{:.1}" y2="{bottom:.1}" stroke="#888"/><line x1="{PAD}" y1="{:.1}" x2="{PAD}" y2="{bottom:.1}" stroke="#888"/><text x="2" y="{:.1}" font-size="9">{:.2}</text><text x="2" y="{bottom:.1}" font-size="9">{:.2}</text>"##,
            self.top - 4.0,
            esc(title),
            W - PAD,
            self.top,
            self.top + 8.0,
            self.y1,
            self.y0
        );
    }
}

fn polyline(svg: &mut String, f: &Frame, xs: &[f64], ys: &[f64], colour: &str) {
    let pts: Vec<String> = xs.iter().zip(ys).map(|(&x, &y)| format!("{:.1},{:.1}", f.x(x), f.y(y))).collect();
    let _ = write!(svg, r#"<polyline fill="none" stroke="{colour}" stroke-width="1" points="{}"/>"#, pts.join(" "));
}

fn svg_open(height: f64) -> String {
    format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}" font-family="sans-serif">"#)
}

/// Box plots of pooled per-activity statistics, one panel per channel.
pub fn box_plot_svg(stats: &[ActivityStats]) -> String {
    let mut svg = svg_open(2.0 * (H + PAD));
    for (panel, ch) in Channel::BOTH.iter().enumerate() {
        let rows: Vec<&ActivityStats> = stats.iter().filter(|s| s.channel == *ch).collect();
        let (y0, y1) = extent(rows.iter().flat_map(|r| [r.stats.min, r.stats.max]));
        let f = Frame { x0: 0.0, x1: rows.len().max(1) as f64, y0, y1, top: PAD + panel as f64 * (H + PAD), height: H - PAD };
        f.axes(&mut svg, &format!("{ch} by activity"));
        for (i, r) in rows.iter().enumerate() {
            let s = &r.stats;
            let cx = f.x(i as f64 + 0.5);
            let half = 0.25 * (W - 2.0 * PAD) / rows.len() as f64;
            let lo = s.lower_fence.max(s.min);
            let hi = s.upper_fence.min(s.max);
            let _ = write!(
                svg,
                r##"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="#333"/><rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#9cc3e6" stroke="#333"/><line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#c00" stroke-width="2"/><text x="{cx:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"##,
                f.y(hi),
                f.y(lo),
                cx - half,
                f.y(s.q3),
                2.0 * half,
                (f.y(s.q1) - f.y(s.q3)).max(0.5),
                cx - half,
                f.y(s.median),
                cx + half,
                f.y(s.median),
                f.top + f.height + 12.0,
                r.activity
            );
        }
    }
    svg.push_str("</svg>");
    svg
}

/// Observed series, trend, seasonal and residual panels.
pub fn decomposition_svg(p: &Preview) -> String {
    let panels: [(&str, &[f64]); 4] =
        [("observed", &p.observed), ("trend", &p.trend), ("seasonal", &p.seasonal), ("residual", &p.residual)];
    let mut svg = svg_open(4.0 * H);
    let (x0, x1) = (p.timestamps.first().copied().unwrap_or(0.0), p.timestamps.last().copied().unwrap_or(1.0));
    for (k, (name, ys)) in panels.iter().enumerate() {
        let (y0, y1) = extent(ys.iter().copied());
        let f = Frame { x0, x1, y0, y1, top: PAD + k as f64 * H, height: H - PAD };
        f.axes(&mut svg, &format!("{} {} {name}", p.device_id, p.channel));
        polyline(&mut svg, &f, &p.timestamps, ys, "#1f5fa8");
    }
    svg.push_str("</svg>");
    svg
}

/// Overlaid line plot of several equal-length series.
pub fn line_plot_svg(title: &str, ts: &[f64], lines: &[(&str, &[f64], &str)]) -> String {
    let mut svg = svg_open(H + PAD);
    let (x0, x1) = (ts.first().copied().unwrap_or(0.0), ts.last().copied().unwrap_or(1.0));
    let (y0, y1) = extent(lines.iter().flat_map(|(_, ys, _)| ys.iter().copied()));
    let f = Frame { x0, x1, y0, y1, top: PAD, height: H - PAD };
    f.axes(&mut svg, title);
    for (k, (name, ys, colour)) in lines.iter().enumerate() {
        polyline(&mut svg, &f, ts, ys, colour);
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" fill="{colour}">{}</text>"#,
            W - PAD - 90.0,
            PAD + 12.0 * k as f64,
            esc(name)
        );
    }
    svg.push_str("</svg>");
    svg
}

/// Chain response with detected peaks marked.
pub fn peaks_svg(p: &Preview) -> String {
    let mut svg = svg_open(H + PAD);
    let (x0, x1) = (p.timestamps.first().copied().unwrap_or(0.0), p.timestamps.last().copied().unwrap_or(1.0));
    let (y0, y1) = extent(p.response.iter().copied());
    let f = Frame { x0, x1, y0, y1, top: PAD, height: H - PAD };
    f.axes(&mut svg, &format!("{} breath peaks ({} shown)", p.device_id, p.peaks.len()));
    polyline(&mut svg, &f, &p.timestamps, &p.response, "#444");
    for &i in &p.peaks {
        let _ = write!(
            svg,
            r##"<circle cx="{:.1}" cy="{:.1}" r="3" fill="#c00"/>"##,
            f.x(p.timestamps[i]),
            f.y(p.response[i])
        );
    }
    svg.push_str("</svg>");
    svg
}

fn heat_colour(r: f64) -> String {
    let t = r.clamp(-1.0, 1.0);
    let (red, blue) = if t >= 0.0 { (255.0, 255.0 * (1.0 - t)) } else { (255.0 * (1.0 + t), 255.0) };
    let green = 255.0 * (1.0 - t.abs());
    format!("rgb({:.0},{:.0},{:.0})", red, green, blue)
}

/// Correlation heatmap with values printed in each cell.
pub fn correlation_svg(m: &CorrelationMatrix) -> String {
    let n = m.labels.len();
    let cell = 48.0;
    let size = PAD + cell * n as f64 + 8.0;
    let mut svg = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}" font-family="sans-serif">"#);
    for (i, name) in m.labels.iter().enumerate() {
        let c = PAD + cell * (i as f64 + 0.5);
        let _ = write!(
            svg,
            r#"<text x="{c:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text><text x="2" y="{:.1}" font-size="10">{}</text>"#,
            PAD - 6.0,
            esc(name),
            c + 3.0,
            esc(name)
        );
        for j in 0..n {
            let v = m.values[i][j];
            let (x, y) = (PAD + cell * j as f64, PAD + cell * i as f64);
            let _ = write!(
                svg,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="{}" stroke="white"/><text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{v:.2}</text>"#,
                heat_colour(v),
                x + cell / 2.0,
                y + cell / 2.0 + 3.0
            );
        }
    }
    svg.push_str("</svg>");
    svg
}

fn eval_html(doc: &EvalDocument) -> String {
    let r = &doc.report;
    let mut h = format!(
        "<h2>Classification</h2><p>{} &middot; {} windows &middot; model <code>{}</code></p><p>Accuracy <b>{:.4}</b></p>",
        esc(&doc.description),
        doc.windows,
        esc(&serde_json::to_string(&doc.model).unwrap_or_default()),
        r.accuracy
    );
    if let Some(folds) = &doc.fold_accuracy {
        let cells: Vec<String> = folds.iter().map(|a| format!("{a:.4}")).collect();
        let _ = write!(h, "<p>Fold accuracy: {}</p>", cells.join(", "));
    }
    h.push_str("<table><tr><th>class</th><th>precision</th><th>recall</th><th>F1</th><th>support</th></tr>");
    for c in &r.per_class {
        let _ = write!(
            h,
            "<tr><td>{}</td><td>{:.2}</td><td>{:.2}</td><td>{:.2}</td><td>{}</td></tr>",
            c.label, c.precision, c.recall, c.f1, c.support
        );
    }
    for (name, a) in [("macro avg", &r.macro_avg), ("weighted avg", &r.weighted_avg)] {
        let _ = write!(
            h,
            "<tr><td>{name}</td><td>{:.2}</td><td>{:.2}</td><td>{:.2}</td><td>{}</td></tr>",
            a.precision, a.recall, a.f1, r.total
        );
    }
    h.push_str("</table><h3>Confusion matrix</h3><table><tr><th>actual \\ predicted</th>");
    for l in &r.confusion.labels {
        let _ = write!(h, "<th>{l}</th>");
    }
    h.push_str("</tr>");
    for (l, row) in r.confusion.labels.iter().zip(&r.confusion.counts) {
        let _ = write!(h, "<tr><th>{l}</th>");
        for c in row {
            let _ = write!(h, "<td>{c}</td>");
        }
        h.push_str("</tr>");
    }
    h.push_str("</table>");
    h
}

fn read_opt<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<Option<T>> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Renders `report.html` and `plots/*.svg` from `analysis.json` and
/// `eval_report.json` in `artifacts`.
pub fn render_report(artifacts: &Path) -> Result<()> {
    let analysis: Option<Analysis> = read_opt(&artifacts.join("analysis.json"))?;
    let eval: Option<EvalDocument> = read_opt(&artifacts.join("eval_report.json"))?;
    if analysis.is_none() && eval.is_none() {
        return Err(Error::InsufficientData(format!(
            "{} holds neither analysis.json nor eval_report.json",
            artifacts.display()
        )));
    }
    let mut plots: Vec<(&str, String)> = Vec::new();
    if let Some(a) = &analysis {
        if !a.activities.is_empty() {
            plots.push(("boxplots", box_plot_svg(&a.activities)));
        }
        if let Some(p) = &a.preview {
            plots.push(("decomposition", decomposition_svg(p)));
            plots.push(("peaks", peaks_svg(p)));
        }
        if let Some(m) = &a.correlation {
            plots.push(("correlation", correlation_svg(m)));
        }
    }
    let mut html = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Breath activity report</title>\
         <style>body{font-family:sans-serif;max-width:960px;margin:auto}table{border-collapse:collapse}\
         td,th{border:1px solid #ccc;padding:2px 8px;text-align:right}</style></head><body>\n<h1>Breath activity report</h1>\n",
    );
    if let Some(doc) = &eval {
        html.push_str(&eval_html(doc));
        html.push('\n');
    }
    if let Some(a) = &analysis {
        html.push_str("<h2>Sessions</h2><table><tr><th>device</th><th>activity</th><th>channel</th><th>mean</th><th>std</th><th>min</th><th>max</th><th>peaks</th><th>rate (Hz)</th></tr>");
        for s in &a.series {
            let _ = write!(
                html,
                "<tr><td>{}</td><td>{}</td><td>{}</td><td>{:.2}</td><td>{:.2}</td><td>{:.2}</td><td>{:.2}</td><td>{}</td><td>{:.3}</td></tr>",
                esc(&s.device_id),
                s.activity,
                s.channel,
                s.stats.mean,
                s.stats.std,
                s.stats.min,
                s.stats.max,
                s.peak_count,
                s.breath_rate_hz
            );
        }
        html.push_str("</table>\n");
    }
    for (name, svg) in &plots {
        write(&artifacts.join("plots").join(format!("{name}.svg")), svg)?;
        let _ = write!(html, "<h2>{name}</h2>\n{svg}\n");
    }
    html.push_str("</body></html>\n");
    write(&artifacts.join("report.html"), &html)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_colour_ends() {
        assert_eq!(heat_colour(1.0), "rgb(255,0,0)");
        assert_eq!(heat_colour(-1.0), "rgb(0,0,255)");
        assert_eq!(heat_colour(0.0), "rgb(255,255,255)");
    }

    #[test]
    fn escapes_markup() {
        assert_eq!(esc("<a&b>"), "&lt;a&amp;b&gt;");
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(render_report(dir.path()).is_err());
    }

    #[test]
    fn correlation_svg_has_every_cell() {
        let m = CorrelationMatrix { labels: vec!["a".into(), "b".into()], values: vec![vec![1.0, 0.5], vec![0.5, 1.0]] };
        let svg = correlation_svg(&m);
        assert_eq!(svg.matches("<rect").count(), 4);
        assert!(svg.contains("0.50"));
    }
}
