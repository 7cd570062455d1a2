//! Static SVG bar charts on a logarithmic value axis.

use std::fmt::Write;

const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"];

pub struct GroupedBars {
    pub title: String,
    pub y_label: String,
    pub groups: Vec<String>,
    pub series: Vec<String>,
    /// `values[series][group]`, non-positive or missing values are skipped.
    pub values: Vec<Vec<Option<f64>>>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl GroupedBars {
    pub fn to_svg(&self) -> String {
        let (w, h) = (960.0, 480.0);
        let (left, right, top, bottom) = (80.0, 200.0, 40.0, 60.0);
        let plot_w = w - left - right;
        let plot_h = h - top - bottom;

        let positive: Vec<f64> = self.values.iter().flatten().flatten().copied().filter(|v| *v > 0.0 && v.is_finite()).collect();
        let (lo, hi) = if positive.is_empty() {
            (-1.0, 0.0)
        } else {
            let lo = positive.iter().copied().fold(f64::INFINITY, f64::min).log10().floor();
            let hi = positive.iter().copied().fold(f64::NEG_INFINITY, f64::max).log10().ceil();
            (lo, if hi > lo { hi } else { lo + 1.0 })
        };
        let y_of = |v: f64| top + plot_h * (1.0 - (v.log10() - lo) / (hi - lo));

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, left + plot_w / 2.0, escape(&self.title));
        for e in lo as i32..=hi as i32 {
            let y = y_of(10f64.powi(e));
            let _ = writeln!(s, r##"<line x1="{left}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/>"##, left + plot_w);
            let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">1e{e}</text>"#, left - 6.0, y + 4.0);
        }
        let _ = writeln!(
            s,
            r#"<text transform="translate(20,{}) rotate(-90)" text-anchor="middle">{}</text>"#,
            top + plot_h / 2.0,
            escape(&self.y_label)
        );

        let group_w = plot_w / self.groups.len().max(1) as f64;
        let bar_w = group_w * 0.8 / self.series.len().max(1) as f64;
        for (g, label) in self.groups.iter().enumerate() {
            let x0 = left + g as f64 * group_w + group_w * 0.1;
            for (si, vals) in self.values.iter().enumerate() {
                if let Some(v) = vals.get(g).copied().flatten().filter(|v| *v > 0.0 && v.is_finite()) {
                    let y = y_of(v);
                    let _ = writeln!(
                        s,
                        r#"<rect x="{:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="{}"><title>{}: {v:.3e}</title></rect>"#,
                        x0 + si as f64 * bar_w,
                        bar_w * 0.95,
                        (top + plot_h - y).max(0.0),
                        PALETTE[si % PALETTE.len()],
                        escape(&self.series[si])
                    );
                }
            }
            let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, x0 + group_w * 0.4, top + plot_h + 20.0, escape(label));
        }
        let _ = writeln!(s, r##"<line x1="{left}" x2="{left}" y1="{top}" y2="{}" stroke="#333"/>"##, top + plot_h);
        let _ = writeln!(s, r##"<line x1="{left}" x2="{}" y1="{}" y2="{}" stroke="#333"/>"##, left + plot_w, top + plot_h, top + plot_h);
        for (si, name) in self.series.iter().enumerate() {
            let y = top + 10.0 + si as f64 * 20.0;
            let x = left + plot_w + 20.0;
            let _ = writeln!(s, r#"<rect x="{x}" y="{}" width="12" height="12" fill="{}"/>"#, y - 10.0, PALETTE[si % PALETTE.len()]);
            let _ = writeln!(s, r#"<text x="{}" y="{y}">{}</text>"#, x + 18.0, escape(name));
        }
        s.push_str("</svg>\n");
        s
    }
}
