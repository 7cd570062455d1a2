//! NMSE table: one row per benchmark, one column per method, cell = mean NMSE.

use std::collections::BTreeMap;

use transkrig::experiment::{ExperimentRecord, GradMode};
use transkrig::trend::TrendKind;

/// Scientific notation with three significant digits and a two-digit
/// exponent, e.g. `9.41E-04`.
pub fn sci3(v: f64) -> String {
    if !v.is_finite() {
        return "NA".into();
    }
    let s = format!("{v:.2e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}E{sign}{:02}", exp.abs())
}

pub struct NmseTable {
    pub benchmarks: Vec<u8>,
    pub methods: Vec<TrendKind>,
    cells: BTreeMap<(u8, TrendKind), f64>,
}

impl NmseTable {
    /// Mean NMSE per cell over the records of one gradient mode; rows 1–9.
    pub fn from_records(records: &[ExperimentRecord], grad_mode: GradMode) -> NmseTable {
        let mut acc: BTreeMap<(u8, TrendKind), Vec<f64>> = BTreeMap::new();
        for r in records.iter().filter(|r| r.grad_mode == grad_mode) {
            acc.entry((r.benchmark, r.method)).or_default().push(r.nmse);
        }
        let cells = acc
            .into_iter()
            .map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64))
            .collect();
        NmseTable {
            benchmarks: (1..=9).collect(),
            methods: TrendKind::ALL.to_vec(),
            cells,
        }
    }

    pub fn get(&self, benchmark: u8, method: TrendKind) -> Option<f64> {
        self.cells.get(&(benchmark, method)).copied()
    }

    pub fn render_text(&self) -> String {
        let width = 24;
        let mut out = format!("{:<4}", "#");
        for m in &self.methods {
            out.push_str(&format!("{:>width$}", m.label()));
        }
        out.push('\n');
        for &b in &self.benchmarks {
            out.push_str(&format!("{b:<4}"));
            for &m in &self.methods {
                let cell = self.get(b, m).map(sci3).unwrap_or_else(|| "-".into());
                out.push_str(&format!("{cell:>width$}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn render_markdown(&self) -> String {
        let mut out = String::from("| # |");
        for m in &self.methods {
            out.push_str(&format!(" {} |", m.label()));
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(self.methods.len()));
        out.push('\n');
        for &b in &self.benchmarks {
            out.push_str(&format!("| {b} |"));
            for &m in &self.methods {
                let cell = self.get(b, m).map(sci3).unwrap_or_else(|| "-".into());
                out.push_str(&format!(" {cell} |"));
            }
            out.push('\n');
        }
        out
    }
}
