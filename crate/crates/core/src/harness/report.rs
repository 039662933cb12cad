use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use super::bench::{run_benchmark, BenchmarkResults, CellSummary, FittedPrior, ZERO_FILLED};
use super::plan::ExperimentPlan;
use crate::error::{Error, Result};
use crate::metrics::Summary;
use crate::schedule::NoiseSchedule;

/// `"mean ± std"` with `decimals` digits on both.
pub fn format_mean_std(s: &Summary, decimals: usize) -> String {
    format!("{:.*} ± {:.*}", decimals, s.mean, decimals, s.std)
}

/// Markdown table with one row per (method, S) and a PSNR/SSIM column pair
/// per acceleration. PSNR has 2 decimals, SSIM 3.
pub fn export_report(results: &BenchmarkResults) -> Result<String> {
    if results.rows.is_empty() {
        return Err(Error::InvalidArgument("no benchmark results to report".into()));
    }
    let cells = results.aggregate()?;
    let mut accels: Vec<usize> = cells.iter().map(|c| c.accel).collect();
    accels.sort_unstable();
    accels.dedup();
    let mut by_row: BTreeMap<(bool, String, usize), BTreeMap<usize, &CellSummary>> = BTreeMap::new();
    for c in &cells {
        by_row.entry((c.method == ZERO_FILLED, c.method.clone(), c.nfe)).or_default().insert(c.accel, c);
    }

    let mut out = String::new();
    out.push_str("| Method | S |");
    for r in &accels {
        write!(out, " {r}x PSNR (dB) | {r}x SSIM |").unwrap();
    }
    out.push_str("\n|---|---|");
    for _ in &accels {
        out.push_str("---|---|");
    }
    out.push('\n');
    for ((_, method, nfe), row) in &by_row {
        let s = if method == ZERO_FILLED { "-".to_string() } else { nfe.to_string() };
        write!(out, "| {method} | {s} |").unwrap();
        for r in &accels {
            match row.get(r) {
                Some(c) => write!(out, " {} | {} |", format_mean_std(&c.psnr, 2), format_mean_std(&c.ssim, 3)),
                None => write!(out, " n/a | n/a |"),
            }
            .unwrap();
        }
        out.push('\n');
    }
    let failed = results.rows.iter().filter(|r| r.failed()).count();
    if failed > 0 {
        writeln!(out, "\n{failed} of {} runs failed.", results.rows.len()).unwrap();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMetric {
    Psnr,
    Ssim,
}

impl SweepMetric {
    fn label(self) -> &'static str {
        match self {
            SweepMetric::Psnr => "PSNR (dB)",
            SweepMetric::Ssim => "SSIM",
        }
    }

    fn of(self, c: &CellSummary) -> Summary {
        match self {
            SweepMetric::Psnr => c.psnr,
            SweepMetric::Ssim => c.ssim,
        }
    }
}

/// Metric-versus-NFE curves at one acceleration.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub accel: usize,
    pub results: BenchmarkResults,
    /// Per (method, S), zero-filled rows excluded; sorted by method then S.
    pub cells: Vec<CellSummary>,
}

/// Runs `plan` and collects curves over its NFE values. The plan needs at
/// least two NFE values and exactly one acceleration.
pub fn sweep_nfe(plan: &ExperimentPlan, prior: &FittedPrior, schedule: &NoiseSchedule) -> Result<Sweep> {
    let mut nfes = plan.nfes.clone();
    nfes.sort_unstable();
    nfes.dedup();
    if nfes.len() < 2 {
        return Err(Error::Config("an NFE sweep needs at least two NFE values".into()));
    }
    if plan.accelerations.len() != 1 {
        return Err(Error::Config("an NFE sweep takes exactly one acceleration".into()));
    }
    let results = run_benchmark(plan, prior, schedule)?;
    let cells = results.aggregate()?.into_iter().filter(|c| c.method != ZERO_FILLED).collect();
    Ok(Sweep { accel: plan.accelerations[0], results, cells })
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

impl Sweep {
    /// Writes `method,S,psnr_mean,psnr_std,ssim_mean,ssim_std,seconds_mean,n`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "S", "psnr_mean", "psnr_std", "ssim_mean", "ssim_std", "seconds_mean", "n"])?;
        for c in &self.cells {
            w.write_record([
                c.method.clone(),
                c.nfe.to_string(),
                format!("{:.6}", c.psnr.mean),
                format!("{:.6}", c.psnr.std),
                format!("{:.6}", c.ssim.mean),
                format!("{:.6}", c.ssim.std),
                format!("{:.6}", c.seconds.mean),
                c.psnr.count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    fn curves(&self) -> BTreeMap<&str, Vec<&CellSummary>> {
        let mut m: BTreeMap<&str, Vec<&CellSummary>> = BTreeMap::new();
        for c in &self.cells {
            m.entry(c.method.as_str()).or_default().push(c);
        }
        m
    }

    /// Line plot of the metric's mean per method with a shaded +-1 std band.
    pub fn svg(&self, metric: SweepMetric) -> String {
        let (w, h) = (640.0, 420.0);
        let (left, right, top, bottom) = (70.0, 120.0, 40.0, 50.0);
        let (pw, ph) = (w - left - right, h - top - bottom);

        let finite: Vec<&CellSummary> = self.cells.iter().filter(|c| metric.of(c).mean.is_finite()).collect();
        let xs = finite.iter().map(|c| c.nfe as f64);
        let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        let spread = |c: &&CellSummary| {
            let s = metric.of(c);
            let sd = if s.std.is_finite() { s.std } else { 0.0 };
            (s.mean - sd, s.mean + sd)
        };
        let (mut y_lo, mut y_hi) =
            finite.iter().map(spread).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (l, u)| (a.min(l), b.max(u)));
        if !y_lo.is_finite() {
            (y_lo, y_hi) = (0.0, 1.0);
        }
        let pad = ((y_hi - y_lo) * 0.05).max(1e-6);
        let (y_lo, y_hi) = (y_lo - pad, y_hi + pad);
        let x_span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };
        let px = |x: f64| left + (x - x_lo) / x_span * pw;
        let py = |y: f64| top + (y_hi - y) / (y_hi - y_lo) * ph;

        let mut s = String::new();
        writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#)
            .unwrap();
        writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{} vs NFE ({}x)</text>"#,
            left + pw / 2.0,
            metric.label(),
            self.accel
        )
        .unwrap();
        writeln!(
            s,
            r#"<g stroke="black" fill="none"><line x1="{left}" y1="{}" x2="{}" y2="{}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{}"/></g>"#,
            top + ph,
            left + pw,
            top + ph,
            top + ph
        )
        .unwrap();

        let mut ticks: Vec<usize> = finite.iter().map(|c| c.nfe).collect();
        ticks.sort_unstable();
        ticks.dedup();
        for t in ticks {
            writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="11">{t}</text>"#,
                px(t as f64),
                top + ph + 16.0
            )
            .unwrap();
        }
        for i in 0..=4 {
            let v = y_lo + (y_hi - y_lo) * i as f64 / 4.0;
            writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{v:.3}</text>"#,
                left - 6.0,
                py(v) + 4.0
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12">NFE (S)</text>"#,
            left + pw / 2.0,
            h - 12.0
        )
        .unwrap();

        for (i, (method, pts)) in self.curves().into_iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<&CellSummary> = pts.into_iter().filter(|c| metric.of(c).mean.is_finite()).collect();
            let upper = pts.iter().map(|c| (px(c.nfe as f64), py(spread(c).1)));
            let lower = pts.iter().rev().map(|c| (px(c.nfe as f64), py(spread(c).0)));
            let band: Vec<String> = upper.chain(lower).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "))
                .unwrap();
            let line: Vec<String> =
                pts.iter().map(|c| format!("{:.2},{:.2}", px(c.nfe as f64), py(metric.of(c).mean))).collect();
            writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"><title>{method}</title></polyline>"#,
                line.join(" ")
            )
            .unwrap();
            let ly = top + 16.0 + 18.0 * i as f64;
            writeln!(
                s,
                r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{method}</text>"#,
                left + pw + 12.0,
                left + pw + 32.0,
                left + pw + 38.0,
                ly + 4.0
            )
            .unwrap();
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::bench::BenchmarkRow;

    fn row(method: &str, accel: usize, nfe: usize, trial: usize, psnr: f64, ssim: f64) -> BenchmarkRow {
        BenchmarkRow { method: method.into(), accel, nfe, trial, psnr, ssim, seconds: 0.5, residual: 0.0, error: None }
    }

    #[test]
    fn report_formats_mean_and_std() {
        let res =
            BenchmarkResults { rows: vec![row("ppn", 4, 50, 0, 30.0, 0.9636), row("ppn", 4, 50, 1, 32.0, 0.9636)] };
        let md = export_report(&res).unwrap();
        assert!(md.contains("| ppn | 50 | 31.00 ± 1.41 | 0.964 ± 0.000 |"), "{md}");
        assert_eq!(md, export_report(&res).unwrap());
    }

    #[test]
    fn report_rejects_empty_input() {
        assert!(export_report(&BenchmarkResults::default()).is_err());
    }

    #[test]
    fn report_fills_missing_cells_and_puts_zero_filled_last() {
        let res = BenchmarkResults {
            rows: vec![row("zf", 4, 0, 0, 20.0, 0.5), row("zf", 8, 0, 0, 18.0, 0.4), row("ppn", 4, 50, 0, 30.0, 0.9)],
        };
        let md = export_report(&res).unwrap();
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines[0], "| Method | S | 4x PSNR (dB) | 4x SSIM | 8x PSNR (dB) | 8x SSIM |");
        assert!(lines[2].starts_with("| ppn | 50 |") && lines[2].ends_with("n/a | n/a |"));
        assert!(lines[3].starts_with("| zf | - |"));
    }

    #[test]
    fn svg_has_one_polyline_per_method() {
        let rows = vec![
            row("ppn", 4, 10, 0, 28.0, 0.90),
            row("ppn", 4, 50, 0, 30.0, 0.95),
            row("ddnm", 4, 10, 0, 25.0, 0.80),
            row("ddnm", 4, 50, 0, 27.0, 0.85),
        ];
        let results = BenchmarkResults { rows };
        let cells = results.aggregate().unwrap();
        let sweep = Sweep { accel: 4, results, cells };
        for metric in [SweepMetric::Psnr, SweepMetric::Ssim] {
            let svg = sweep.svg(metric);
            let doc = roxmltree::Document::parse(&svg).unwrap();
            assert_eq!(doc.root_element().tag_name().name(), "svg");
            let n = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
            assert_eq!(n, 2);
        }
        let mut buf = Vec::new();
        sweep.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }
}
