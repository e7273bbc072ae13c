//! Absolute growth-rate errors of forecast-based predictions against fits on
//! the actual frames, with quantiles and a histogram.

use std::fmt::Write as _;

use thiserror::Error;

pub const BIN_WIDTH: f64 = 0.06;
pub const HISTOGRAM_MAX: f64 = 1.2;
/// Reference lines drawn on the histogram for P50, P75 and P90.
pub const REFERENCE_LINES: [(f64, &str); 3] = [(0.12, "P50"), (0.24, "P75"), (0.48, "P90")];

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no fires to evaluate")]
    Empty,
    #[error("fire {0} has a prediction but no baseline")]
    MissingBaseline(String),
    #[error("fire {0}: non-finite value")]
    NonFinite(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `(fire_id, |k_hat - k_fit|)` in prediction order.
    pub errors: Vec<(String, f64)>,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    pub bin_width: f64,
    /// Counts per bin over `[0, HISTOGRAM_MAX)`; larger errors land in the last bin.
    pub bins: Vec<usize>,
}

/// Quantile of sorted data by linear interpolation between order
/// statistics at position `(n - 1) q`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn histogram(values: &[f64], bin_width: f64, max: f64) -> Vec<usize> {
    let n_bins = (max / bin_width).round().max(1.0) as usize;
    let mut bins = vec![0; n_bins];
    for &v in values {
        let b = ((v / bin_width).floor().max(0.0) as usize).min(n_bins - 1);
        bins[b] += 1;
    }
    bins
}

/// Joins predictions with baselines by fire id.
pub fn eval_k_errors(predicted: &[(String, f64)], baseline: &[(String, f64)]) -> Result<EvalReport, EvalError> {
    if predicted.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut errors = Vec::with_capacity(predicted.len());
    for (id, k_hat) in predicted {
        let (_, k_fit) = baseline.iter().find(|(b, _)| b == id).ok_or_else(|| EvalError::MissingBaseline(id.clone()))?;
        let e = (k_hat - k_fit).abs();
        if !e.is_finite() {
            return Err(EvalError::NonFinite(id.clone()));
        }
        errors.push((id.clone(), e));
    }
    let mut sorted: Vec<f64> = errors.iter().map(|e| e.1).collect();
    sorted.sort_by(f64::total_cmp);
    Ok(EvalReport {
        p50: quantile(&sorted, 0.5),
        p75: quantile(&sorted, 0.75),
        p90: quantile(&sorted, 0.9),
        bin_width: BIN_WIDTH,
        bins: histogram(&sorted, BIN_WIDTH, HISTOGRAM_MAX),
        errors,
    })
}

impl EvalReport {
    pub fn errors_csv(&self) -> String {
        let mut out = String::from("fire_id,abs_k_error\n");
        for (id, e) in &self.errors {
            let _ = writeln!(out, "{id},{e:.6}");
        }
        out
    }

    /// `statistic,value` rows: `n`, the three quantiles, then one
    /// `bin_<lo>_<hi>` row per histogram bin.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("statistic,value\n");
        let _ = writeln!(out, "n,{}", self.errors.len());
        for (name, v) in [("p50", self.p50), ("p75", self.p75), ("p90", self.p90)] {
            let _ = writeln!(out, "{name},{v:.6}");
        }
        for (i, c) in self.bins.iter().enumerate() {
            let lo = i as f64 * self.bin_width;
            let _ = writeln!(out, "bin_{lo:.2}_{:.2},{c}", lo + self.bin_width);
        }
        out
    }

    /// Histogram of the errors with dashed reference lines.
    pub fn histogram_svg(&self) -> String {
        let (w, h, left, bottom, top) = (640.0, 360.0, 50.0, 40.0, 20.0);
        let plot_w = w - left - 20.0;
        let plot_h = h - bottom - top;
        let max_count = self.bins.iter().copied().max().unwrap_or(0).max(1) as f64;
        let span = self.bin_width * self.bins.len() as f64;
        let x_of = |v: f64| left + plot_w * (v / span).min(1.0);
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        for (i, &c) in self.bins.iter().enumerate() {
            let bh = plot_h * c as f64 / max_count;
            let x = x_of(i as f64 * self.bin_width);
            let _ = writeln!(
                s,
                r##"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{bh:.1}" fill="#4a7ab5" stroke="white"/>"##,
                top + plot_h - bh,
                plot_w / self.bins.len() as f64
            );
        }
        for (v, label) in REFERENCE_LINES {
            let x = x_of(v);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.1}" y1="{top}" x2="{x:.1}" y2="{:.1}" stroke="#c0392b" stroke-dasharray="4 3"/><text x="{:.1}" y="{:.1}" fill="#c0392b">{label} {v}</text>"##,
                top + plot_h,
                x + 3.0,
                top + 12.0
            );
        }
        let _ = writeln!(s, r#"<line x1="{left}" y1="{0:.1}" x2="{1:.1}" y2="{0:.1}" stroke="black"/>"#, top + plot_h, left + plot_w);
        let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.1}" stroke="black"/>"#, top + plot_h);
        for i in 0..=4 {
            let v = span * i as f64 / 4.0;
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.2}</text>"#, x_of(v), top + plot_h + 15.0);
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">absolute k error</text>"#, left + plot_w / 2.0, h - 5.0);
        let _ = writeln!(s, r#"<text x="12" y="{:.1}" transform="rotate(-90 12 {0:.1})" text-anchor="middle">fires</text>"#, top + plot_h / 2.0);
        let _ = writeln!(s, r#"<text x="{left}" y="{:.1}">max {}</text>"#, top - 5.0, max_count);
        s.push_str("</svg>\n");
        s
    }
}
