use std::fmt::Write as _;

use super::table::{ComparisonTable, Metric};
use crate::model::fmt_sig;

const W: f64 = 640.0;
const H: f64 = 360.0;
const LEFT: f64 = 70.0;
const BOTTOM: f64 = 60.0;
const TOP: f64 = 40.0;
const COLORS: [&str; 2] = ["#4c78a8", "#f58518"];

fn px(x: f64) -> String {
    fmt_sig(x, 6)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Canvas {
    out: String,
    scale: f64,
    slot: f64,
}

impl Canvas {
    fn new(title: &str, y_label: &str, bars: usize, y_max: f64) -> Self {
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
             <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
             <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>\n",
            px(W / 2.0),
            escape(title)
        );
        let plot_h = H - TOP - BOTTOM;
        let y_max = if y_max > 0.0 { y_max } else { 1.0 };
        let _ = writeln!(
            out,
            "<line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{}\" stroke=\"black\"/>",
            px(H - BOTTOM)
        );
        let _ = writeln!(
            out,
            "<line x1=\"{LEFT}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>",
            px(H - BOTTOM),
            px(W - 20.0)
        );
        for k in 0..=4 {
            let v = y_max * k as f64 / 4.0;
            let y = H - BOTTOM - plot_h * k as f64 / 4.0;
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
                px(LEFT - 6.0),
                px(y + 4.0),
                fmt_sig(v, 3)
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"16\" y=\"{0}\" transform=\"rotate(-90 16 {0})\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{1}</text>",
            px(TOP + plot_h / 2.0),
            escape(y_label)
        );
        Canvas {
            out,
            scale: plot_h / y_max,
            slot: (W - 20.0 - LEFT) / bars.max(1) as f64,
        }
    }

    fn bar(&mut self, i: usize, from: f64, to: f64, color: &str) {
        let x = LEFT + self.slot * (i as f64 + 0.2);
        let y0 = H - BOTTOM - from * self.scale;
        let y1 = H - BOTTOM - to * self.scale;
        let _ = writeln!(
            self.out,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\"/>",
            px(x),
            px(y1),
            px(self.slot * 0.6),
            px((y0 - y1).max(0.0))
        );
    }

    fn whisker(&mut self, i: usize, lo: f64, hi: f64) {
        let x = LEFT + self.slot * (i as f64 + 0.5);
        let _ = writeln!(
            self.out,
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>",
            px(x),
            px(H - BOTTOM - lo * self.scale),
            px(H - BOTTOM - hi * self.scale)
        );
    }

    fn label(&mut self, i: usize, text: &str) {
        let x = LEFT + self.slot * (i as f64 + 0.5);
        let _ = writeln!(
            self.out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            px(x),
            px(H - BOTTOM + 18.0),
            escape(text)
        );
    }

    fn legend(&mut self, entries: &[(&str, &str)]) {
        for (k, (name, color)) in entries.iter().enumerate() {
            let y = H - 18.0;
            let x = LEFT + 140.0 * k as f64;
            let _ = writeln!(
                self.out,
                "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n\
                 <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
                px(x),
                px(y - 9.0),
                px(x + 14.0),
                px(y),
                escape(name)
            );
        }
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Mean WR per variant with a min–max whisker.
pub fn wr_chart(t: &ComparisonTable, workload: &str) -> String {
    let stats: Vec<_> = t
        .variants
        .iter()
        .map(|v| t.get(v, workload, Metric::Wr))
        .collect();
    let y_max = stats.iter().flatten().map(|s| s.max).fold(0.0, f64::max) * 1.1;
    let mut c = Canvas::new(
        &format!("Energy per request, {workload}"),
        "WR [J/req]",
        t.variants.len(),
        y_max,
    );
    for (i, (v, s)) in t.variants.iter().zip(&stats).enumerate() {
        if let Some(s) = s {
            c.bar(i, 0.0, s.mean, COLORS[0]);
            if s.max > s.min {
                c.whisker(i, s.min, s.max);
            }
        }
        c.label(i, v);
    }
    c.finish()
}

/// Mean SUT and overhead energy per variant, stacked.
pub fn energy_chart(t: &ComparisonTable, workload: &str) -> String {
    let mean = |v: &str, m: Metric| t.get(v, workload, m).map_or(0.0, |s| s.mean);
    let y_max = t
        .variants
        .iter()
        .map(|v| mean(v, Metric::SutEnergy) + mean(v, Metric::OverheadEnergy))
        .fold(0.0, f64::max)
        * 1.1;
    let mut c = Canvas::new(
        &format!("Energy split, {workload}"),
        "Energy [J]",
        t.variants.len(),
        y_max,
    );
    for (i, v) in t.variants.iter().enumerate() {
        let sut = mean(v, Metric::SutEnergy);
        let ovh = mean(v, Metric::OverheadEnergy);
        c.bar(i, 0.0, sut, COLORS[0]);
        c.bar(i, sut, sut + ovh, COLORS[1]);
        c.label(i, v);
    }
    c.legend(&[("system under test", COLORS[0]), ("overhead", COLORS[1])]);
    c.finish()
}
