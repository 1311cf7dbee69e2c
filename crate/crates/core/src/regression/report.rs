//! Regression summaries: JSON records, a plain-text table and an SVG scatter.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{OlsFit, RegressionResult};
use crate::error::Result;
use crate::io::{write_atomic, write_json};

/// JSON record of one regression. Non-finite statistics serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub indicator: String,
    pub aspect: String,
    pub lead: u32,
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub se_beta: f64,
    pub t_beta: Option<f64>,
    pub p_beta: f64,
    pub r_squared: f64,
}

impl From<&RegressionResult> for ReportRecord {
    fn from(r: &RegressionResult) -> Self {
        ReportRecord {
            indicator: r.indicator.clone(),
            aspect: r.aspect.to_string(),
            lead: r.lead,
            n: r.fit.n,
            alpha: r.fit.alpha,
            beta: r.fit.beta,
            se_beta: r.fit.se_beta,
            t_beta: r.fit.t_beta.is_finite().then_some(r.fit.t_beta),
            p_beta: r.fit.p_beta,
            r_squared: r.fit.r_squared,
        }
    }
}

const HEADER: &str = "indicator        aspect        lead    n       alpha        beta    se_alpha     se_beta      t_beta      p_beta        R^2";

fn stars(p: f64) -> &'static str {
    match p {
        p if p < 0.001 => "***",
        p if p < 0.01 => "**",
        p if p < 0.05 => "*",
        _ => "",
    }
}

/// Fixed-width summary table, one row per result.
pub fn format_table(results: &[RegressionResult]) -> String {
    let mut out = String::new();
    out.push_str("OLS regression results (y = alpha + beta * sentiment)\n");
    out.push_str(HEADER);
    out.push('\n');
    out.push_str(&"-".repeat(HEADER.len()));
    out.push('\n');
    for r in results {
        let f: &OlsFit<f64> = &r.fit;
        let _ = writeln!(
            out,
            "{:<16} {:<12} {:>5} {:>4} {:>11.5} {:>11.5} {:>11.5} {:>11.5} {:>11.4} {:>11.3e} {:>10.4}{}",
            r.indicator,
            r.aspect.as_str(),
            r.lead,
            f.n,
            f.alpha,
            f.beta,
            f.se_alpha,
            f.se_beta,
            f.t_beta,
            f.p_beta,
            f.r_squared,
            if stars(f.p_beta).is_empty() { String::new() } else { format!(" {}", stars(f.p_beta)) },
        );
    }
    out.push_str("significance: *** p<0.001, ** p<0.01, * p<0.05\n");
    out
}

/// Writes `<stem>.json` and `<stem>.txt` into `dir`.
pub fn write_report(dir: &Path, stem: &str, results: &[RegressionResult]) -> Result<()> {
    let records: Vec<ReportRecord> = results.iter().map(ReportRecord::from).collect();
    write_json(&dir.join(format!("{stem}.json")), &records)?;
    let table = format_table(results);
    write_atomic(&dir.join(format!("{stem}.txt")), |w| w.write_all(table.as_bytes()))
}

/// Scatter plot of the aligned pairs with the fitted line.
pub fn plot_svg(result: &RegressionResult, pairs: &[(f64, f64)]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const M: f64 = 40.0;
    let bounds = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) }
    };
    let (x0, x1) = bounds(&mut pairs.iter().map(|p| p.0));
    let (y0, y1) = bounds(&mut pairs.iter().map(|p| p.1));
    let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{M}" y="20" font-family="sans-serif" font-size="12">{} vs {} sentiment (lead {}), R^2 = {:.3}</text>"#,
        result.indicator, result.aspect, result.lead, result.fit.r_squared
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * M,
        H - 2.0 * M
    );
    for &(x, y) in pairs {
        let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#, sx(x), sy(y));
    }
    let line = |x: f64| result.fit.alpha + result.fit.beta * x;
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="firebrick" stroke-width="2"/>"#,
        sx(x0),
        sy(line(x0)),
        sx(x1),
        sy(line(x1))
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aspect::AspectLabel;
    use crate::regression::ols_fit;

    fn result() -> RegressionResult {
        RegressionResult {
            indicator: "gdp_growth".into(),
            aspect: AspectLabel::new("growth"),
            lead: 0,
            fit: ols_fit(&[(1.0, 1.0), (2.0, 2.0), (3.0, 4.0)]).unwrap(),
        }
    }

    #[test]
    fn one_row_per_result() {
        let t = format_table(&[result()]);
        assert_eq!(t.lines().filter(|l| l.starts_with("gdp_growth")).count(), 1);
    }

    #[test]
    fn empty_report_has_header() {
        let t = format_table(&[]);
        assert!(t.contains("indicator"));
        assert_eq!(t.lines().count(), 4);
    }

    #[test]
    fn json_schema_keys() {
        let v = serde_json::to_value(ReportRecord::from(&result())).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(
            keys,
            ["alpha", "aspect", "beta", "indicator", "lead", "n", "p_beta", "r_squared", "se_beta", "t_beta"]
        );
    }

    #[test]
    fn svg_has_points() {
        let svg = plot_svg(&result(), &[(1.0, 1.0), (2.0, 2.0), (3.0, 4.0)]);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
