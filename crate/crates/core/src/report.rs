//! Static SVG plots: airway profiles, group box plots and Bland–Altman charts.
//!
//! Output depends only on the data, so identical inputs give identical files.

use std::fmt::Write as _;

use crate::stats::BlandAltmanResult;
use crate::taper::{AirwayProfile, TaperResult};

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

const FLAGGED: &str = "#1f5fbf";
const TUBULAR: &str = "#c0392b";

/// Tick positions with a 1/2/5 step covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 7.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Padded data range; a degenerate range is widened around its value.
fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1e-3) };
    (lo - pad, hi + pad)
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    out: String,
}

impl Frame {
    fn new(title: &str, xlabel: &str, ylabel: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            escape(title)
        );
        let mut f = Frame { x, y, out };
        f.axes(xlabel, ylabel);
        f
    }

    fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn axes(&mut self, xlabel: &str, ylabel: &str) {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
        let _ = writeln!(
            self.out,
            r#"<rect x="{x0}" y="{y1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        );
        for t in ticks(self.x.0, self.x.1) {
            let p = self.px(t);
            let _ = writeln!(
                self.out,
                r#"<line x1="{p:.2}" y1="{y0}" x2="{p:.2}" y2="{:.1}" stroke="black"/><text x="{p:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
                y0 + 5.0,
                y0 + 19.0,
                fmt_tick(t)
            );
        }
        for t in ticks(self.y.0, self.y.1) {
            let p = self.py(t);
            let _ = writeln!(
                self.out,
                r#"<line x1="{:.1}" y1="{p:.2}" x2="{x0}" y2="{p:.2}" stroke="black"/><text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 5.0,
                x0 - 8.0,
                p + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            self.out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            H - 12.0,
            escape(xlabel)
        );
        let _ = writeln!(
            self.out,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(ylabel)
        );
    }

    fn dot(&mut self, x: f64, y: f64, colour: &str) {
        let _ = writeln!(
            self.out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{colour}"/>"#,
            self.px(x),
            self.py(y)
        );
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), colour: &str, dash: bool) {
        let _ = writeln!(
            self.out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{colour}" stroke-width="1.5"{}/>"#,
            self.px(a.0),
            self.py(a.1),
            self.px(b.0),
            self.py(b.1),
            if dash { r#" stroke-dasharray="6 4""# } else { "" }
        );
    }

    fn label(&mut self, x: f64, y: f64, text: &str) {
        let _ = writeln!(
            self.out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            self.px(x),
            self.py(y),
            escape(text)
        );
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// ln(area) against arc length with bifurcation sections in blue, tubular
/// sections in red, and the fitted line.
pub fn profile_svg(airway_id: &str, profile: &AirwayProfile, fit: Option<&TaperResult>) -> String {
    let pts: Vec<(f64, f64, bool)> = profile
        .entries
        .iter()
        .filter_map(|e| e.area.map(|a| (e.arc_length, a.ln(), e.bifurcation)))
        .collect();
    let xr = range(profile.entries.iter().map(|e| e.arc_length));
    let mut yr = range(pts.iter().map(|p| p.1));
    if let Some(f) = fit {
        let ends = [f.intercept + f.slope * xr.0, f.intercept + f.slope * xr.1];
        yr = range(pts.iter().map(|p| p.1).chain(ends));
    }
    let mut fr = Frame::new(
        &format!("Airway {airway_id}"),
        "arc length from carina (mm)",
        "ln(area / mm²)",
        xr,
        yr,
    );
    for &(x, y, flagged) in &pts {
        fr.dot(x, y, if flagged { FLAGGED } else { TUBULAR });
    }
    if let Some(f) = fit {
        fr.line(
            (xr.0, f.intercept + f.slope * xr.0),
            (xr.1, f.intercept + f.slope * xr.1),
            "black",
            false,
        );
        let ly = yr.1 - 0.06 * (yr.1 - yr.0);
        fr.label(xr.0 + 0.02 * (xr.1 - xr.0), ly, &format!("slope {:.5} /mm, see {:.4}", f.slope, f.see));
    }
    fr.finish()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let i = h.floor() as usize;
    let f = h - i as f64;
    if i + 1 < n {
        sorted[i] + f * (sorted[i + 1] - sorted[i])
    } else {
        sorted[n - 1]
    }
}

/// Five-number summary (min, q1, median, q3, max), linear interpolation.
pub fn five_numbers(values: &[f64]) -> Option<[f64; 5]> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some([v[0], quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75), v[v.len() - 1]])
}

/// Side-by-side box plots with the individual values overlaid.
pub fn box_plot_svg(title: &str, ylabel: &str, groups: &[(&str, &[f64])]) -> String {
    let yr = range(groups.iter().flat_map(|(_, v)| v.iter().copied()));
    let n = groups.len().max(1) as f64;
    let mut fr = Frame::new(title, "", ylabel, (0.0, n), yr);
    for (k, (name, values)) in groups.iter().enumerate() {
        let c = k as f64 + 0.5;
        let Some([lo, q1, med, q3, hi]) = five_numbers(values) else {
            continue;
        };
        let (l, r) = (c - 0.2, c + 0.2);
        let _ = writeln!(
            fr.out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#dde6f3" stroke="black"/>"##,
            fr.px(l),
            fr.py(q3),
            fr.px(r) - fr.px(l),
            (fr.py(q1) - fr.py(q3)).max(0.5)
        );
        fr.line((l, med), (r, med), "black", false);
        fr.line((c, q3), (c, hi), "black", false);
        fr.line((c, q1), (c, lo), "black", false);
        fr.line((c - 0.1, hi), (c + 0.1, hi), "black", false);
        fr.line((c - 0.1, lo), (c + 0.1, lo), "black", false);
        for &v in values.iter() {
            fr.dot(c, v, TUBULAR);
        }
        let _ = writeln!(
            fr.out,
            r#"<text x="{:.2}" y="{:.1}" text-anchor="middle">{} (n={})</text>"#,
            fr.px(c),
            H - BOTTOM + 19.0,
            escape(name),
            values.len()
        );
    }
    fr.finish()
}

/// Differences against means with the mean line and 95% limits of agreement.
pub fn bland_altman_svg(title: &str, x: &[f64], y: &[f64], ba: &BlandAltmanResult) -> String {
    let means: Vec<f64> = x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect();
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let xr = range(means.iter().copied());
    let yr = range(diffs.iter().copied().chain([ba.lower, ba.upper, ba.mean_diff]));
    let mut fr = Frame::new(title, "mean of pair", "difference (first − second)", xr, yr);
    for (&m, &d) in means.iter().zip(&diffs) {
        fr.dot(m, d, "black");
    }
    fr.line((xr.0, ba.mean_diff), (xr.1, ba.mean_diff), "black", false);
    fr.line((xr.0, ba.upper), (xr.1, ba.upper), FLAGGED, true);
    fr.line((xr.0, ba.lower), (xr.1, ba.lower), FLAGGED, true);
    let lx = xr.0 + 0.02 * (xr.1 - xr.0);
    fr.label(lx, ba.mean_diff, &format!("m = {:.5}", ba.mean_diff));
    fr.label(lx, ba.upper, &format!("m + 1.96SD = {:.5}", ba.upper));
    fr.label(lx, ba.lower, &format!("m − 1.96SD = {:.5}", ba.lower));
    fr.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taper::ProfileEntry;

    #[test]
    fn tick_steps() {
        assert_eq!(ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let t = ticks(-0.031, -0.004);
        assert!(t.len() >= 3 && t.len() <= 8);
        assert_eq!(fmt_tick(-0.0), "0");
        assert_eq!(fmt_tick(2.5), "2.5");
    }

    #[test]
    fn five_number_summary() {
        assert_eq!(five_numbers(&[3.0, 1.0, 2.0, 4.0, 5.0]), Some([1.0, 2.0, 3.0, 4.0, 5.0]));
        assert_eq!(five_numbers(&[]), None);
    }

    #[test]
    fn plots_are_well_formed_and_stable() {
        let profile = AirwayProfile {
            entries: (0..10)
                .map(|i| ProfileEntry {
                    index: i,
                    arc_length: i as f64,
                    area: if i == 4 { None } else { Some((3.0 - 0.02 * i as f64).exp()) },
                    diameter: None,
                    bifurcation: i < 2,
                })
                .collect(),
        };
        let a = profile_svg("7", &profile, None);
        assert_eq!(a, profile_svg("7", &profile, None));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert_eq!(a.matches("<circle").count(), 9);
        assert_eq!(a.matches(FLAGGED).count(), 2);

        let b = box_plot_svg("slopes", "taper", &[("a", &[1.0, 2.0, 3.0]), ("b<", &[2.0])]);
        assert!(b.contains("b&lt; (n=1)"));
        let ba = crate::stats::bland_altman(&[1.0, 2.0, 3.0], &[1.1, 1.9, 3.2]).unwrap();
        let c = bland_altman_svg("ba", &[1.0, 2.0, 3.0], &[1.1, 1.9, 3.2], &ba);
        assert_eq!(c.matches("stroke-dasharray").count(), 2);
    }
}
