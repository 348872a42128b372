//! Text and key-value rendering of correlation results.

use std::fmt::Write;

use crate::estimator::{CorrelationResult, GammaEstimate, Order};

/// One row of a correlation table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub result: CorrelationResult,
    /// Ideal-detector value of the source, when the source is known.
    pub theory: Option<f64>,
    /// Exact expectation of the click estimator, when computable.
    pub expected: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub title: String,
    /// Leading `key=value` lines, e.g. run metadata and diagnostics.
    pub meta: Vec<(String, String)>,
    pub rows: Vec<ReportRow>,
    pub gamma: Option<GammaEstimate>,
    pub heralded: Option<ReportRow>,
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(v) if v.abs() >= 1e5 => format!("{v:.3e}"),
        Some(v) => format!("{v:.4}"),
        None => "---".into(),
    }
}

/// `g2`, `g1_2`: key fragment for an order.
pub fn order_key(order: Order) -> String {
    match order {
        Order::Single(n) => format!("g{n}"),
        Order::Cross(n, m) => format!("g{n}_{m}"),
    }
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |v| format!("{v:e}"))
}

impl Report {
    /// False for pure oracle reports, whose rows carry no estimates.
    fn measured(&self) -> bool {
        self.rows.iter().any(|r| r.result.subset_count > 0)
    }

    /// Three-row table (theory, estimate, std) with one column per order,
    /// then the pairwise `g(2)` matrix if `g(2)` was estimated.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.title.is_empty() {
            writeln!(out, "{}", self.title).unwrap();
        }
        for (k, v) in &self.meta {
            writeln!(out, "{k}: {v}").unwrap();
        }
        if !self.rows.is_empty() {
            out.push('\n');
            let header: Vec<String> = self.rows.iter().map(|r| r.result.order.to_string()).collect();
            let width = header.iter().map(String::len).max().unwrap_or(0).max(10);
            let mut line = |label: &str, cells: Vec<String>| {
                write!(out, "{label:<10}").unwrap();
                for c in cells {
                    write!(out, " {c:>width$}").unwrap();
                }
                out.push('\n');
            };
            line("", header);
            if self.rows.iter().any(|r| r.theory.is_some()) {
                line("theory", self.rows.iter().map(|r| cell(r.theory)).collect());
            }
            if self.rows.iter().any(|r| r.expected.is_some()) {
                line("expected", self.rows.iter().map(|r| cell(r.expected)).collect());
            }
            if self.measured() {
                line("estimate", self.rows.iter().map(|r| cell(Some(r.result.mean_g))).collect());
                line("std", self.rows.iter().map(|r| cell(r.result.std_g)).collect());
                line("stderr", self.rows.iter().map(|r| cell(r.result.stderr)).collect());
            }
        }
        if let Some(g) = &self.gamma {
            writeln!(out, "\ngamma = {:.4} +/- {:.4}", g.value, g.uncertainty).unwrap();
        }
        if let Some(h) = &self.heralded {
            writeln!(
                out,
                "\nheralded g(2) = {} (std {}, stderr {}, expected {})",
                cell(Some(h.result.mean_g)),
                cell(h.result.std_g),
                cell(h.result.stderr),
                cell(h.expected)
            )
            .unwrap();
        }
        let pairs = self.rows.iter().find(|r| r.result.order == Order::Single(2) && !r.result.per_subset.is_empty());
        if let Some(row) = pairs {
            out.push('\n');
            out.push_str(&pair_matrix(&row.result));
        }
        out
    }

    /// `key=value` lines with full-precision numbers.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            writeln!(out, "{k}={v}").unwrap();
        }
        let measured = self.measured();
        let mut row_kv = |key: &str, row: &ReportRow| {
            let r = &row.result;
            if measured {
                writeln!(out, "{key}.estimate={}", num(Some(r.mean_g))).unwrap();
                writeln!(out, "{key}.std={}", num(r.std_g)).unwrap();
                writeln!(out, "{key}.stderr={}", num(r.stderr)).unwrap();
            }
            writeln!(out, "{key}.theory={}", num(row.theory)).unwrap();
            writeln!(out, "{key}.expected={}", num(row.expected)).unwrap();
            if measured {
                writeln!(out, "{key}.subsets={}", r.subset_count).unwrap();
                writeln!(out, "{key}.undefined={}", r.undefined).unwrap();
            }
        };
        for row in &self.rows {
            row_kv(&order_key(row.result.order), row);
        }
        if let Some(h) = &self.heralded {
            row_kv("heralded_g2", h);
        }
        if let Some(g) = &self.gamma {
            writeln!(out, "gamma.value={}", num(Some(g.value))).unwrap();
            writeln!(out, "gamma.uncertainty={}", num(Some(g.uncertainty))).unwrap();
        }
        if let Some(row) = self.rows.iter().find(|r| r.result.order == Order::Single(2)) {
            for s in &row.result.per_subset {
                writeln!(out, "g2.pair.{}_{}={}", s.bins_a[0], s.bins_a[1], num(s.g)).unwrap();
            }
        }
        out
    }
}

/// Upper-triangular matrix of pairwise `g(2)` values, rows `i`, columns
/// `j > i`.
pub fn pair_matrix(result: &CorrelationResult) -> String {
    let modes = result
        .per_subset
        .iter()
        .flat_map(|s| s.bins_a.iter().copied())
        .max()
        .map_or(0, |m| m + 1);
    let mut grid = vec![vec![None; modes]; modes];
    for s in &result.per_subset {
        if let [i, j] = s.bins_a[..] {
            grid[i][j] = Some(s.g);
        }
    }
    let mut out = String::new();
    write!(out, "{:>4}", "").unwrap();
    for j in 1..modes {
        write!(out, " {j:>7}").unwrap();
    }
    out.push('\n');
    for (i, row) in grid.iter().enumerate().take(modes.saturating_sub(1)) {
        write!(out, "{i:>4}").unwrap();
        for entry in row.iter().skip(1) {
            match entry {
                Some(g) => write!(out, " {:>7}", cell(*g)).unwrap(),
                None => write!(out, " {:>7}", "").unwrap(),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::SubsetEstimate;

    fn result(order: Order, pairs: &[(usize, usize, f64)]) -> CorrelationResult {
        CorrelationResult {
            order,
            mean_g: 1.0,
            std_g: Some(0.01),
            stderr: None,
            subset_count: pairs.len(),
            undefined: 0,
            per_subset: pairs
                .iter()
                .map(|&(i, j, g)| SubsetEstimate {
                    bins_a: vec![i, j],
                    bins_b: vec![],
                    coincidences: 1,
                    singles: vec![1, 1],
                    pulses: 1,
                    g: Some(g),
                    stderr: None,
                })
                .collect(),
        }
    }

    #[test]
    fn triangular_matrix() {
        let r = result(Order::Single(2), &[(0, 1, 1.01), (0, 2, 0.99), (1, 2, 1.0)]);
        let text = pair_matrix(&r);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].contains("1.0100") && lines[1].contains("0.9900"));
        assert!(lines[2].trim_start().starts_with('1') && lines[2].contains("1.0000"));
    }

    #[test]
    fn missing_values_render_as_dashes() {
        let mut r = result(Order::Single(8), &[]);
        r.std_g = None;
        r.subset_count = 1;
        let report = Report {
            rows: vec![ReportRow { result: r, theory: Some(1.0), expected: None }],
            ..Default::default()
        };
        let text = report.to_text();
        assert!(text.lines().any(|l| l.starts_with("std") && l.contains("---")));
        assert!(report.to_kv().contains("g8.std=none"));
        assert!(report.to_kv().contains("g8.theory=1e0"));
    }
}
