//! Box-plot summaries and real-vs-synthetic population comparison.
//!
//! Quartiles interpolate linearly between order statistics (position
//! `(n - 1) q` in the sorted sample). Whiskers reach the most extreme data
//! point within 1.5 IQR of the quartiles, clamped so they never fall inside
//! the box; everything beyond them is an outlier.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::morphology::MorphologyReport;
use crate::{Error, Result};

/// Linear-interpolation quantile of an ascending, nonempty slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxPlotStats {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

impl BoxPlotStats {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

pub fn box_plot(values: &[f64]) -> Result<BoxPlotStats> {
    if values.is_empty() {
        return Err(Error::invalid("box plot of an empty sample"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("box plot input contains non-finite values"));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&s, 0.25);
    let median = quantile_sorted(&s, 0.5);
    let q3 = quantile_sorted(&s, 0.75);
    let iqr = q3 - q1;
    let (fence_lo, fence_hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let whisker_low = s
        .iter()
        .copied()
        .find(|&v| v >= fence_lo)
        .map_or(q1, |v| v.min(q1));
    let whisker_high = s
        .iter()
        .rev()
        .copied()
        .find(|&v| v <= fence_hi)
        .map_or(q3, |v| v.max(q3));
    let outliers = s
        .iter()
        .copied()
        .filter(|&v| v < whisker_low || v > whisker_high)
        .collect();
    Ok(BoxPlotStats {
        count: s.len(),
        min: s[0],
        q1,
        median,
        mean: values.iter().sum::<f64>() / values.len() as f64,
        q3,
        max: s[s.len() - 1],
        whisker_low,
        whisker_high,
        outliers,
    })
}

/// Metrics compared between populations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Porosity,
    Volume,
    Surface,
    Breadth,
    Euler,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Porosity,
        Metric::Volume,
        Metric::Surface,
        Metric::Breadth,
        Metric::Euler,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Porosity => "porosity",
            Metric::Volume => "volume",
            Metric::Surface => "surface",
            Metric::Breadth => "breadth",
            Metric::Euler => "euler",
        }
    }

    pub fn of(self, r: &MorphologyReport) -> f64 {
        let f = &r.functionals;
        match self {
            Metric::Porosity => r.porosity,
            Metric::Volume => f.volume as f64,
            Metric::Surface => f.surface as f64,
            Metric::Breadth => f.breadth,
            Metric::Euler => f.euler as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: Metric,
    pub real: BoxPlotStats,
    pub synthetic: BoxPlotStats,
    pub relative_median_difference: f64,
    pub iqr_overlap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub metrics: Vec<MetricComparison>,
}

impl ComparisonReport {
    pub fn get(&self, metric: Metric) -> Option<&MetricComparison> {
        self.metrics.iter().find(|m| m.metric == metric)
    }

    /// One row per metric and population with the box-plot summary.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "metric,population,count,min,whisker_low,q1,median,mean,q3,whisker_high,max,outliers,relative_median_difference,iqr_overlap\n",
        );
        for m in &self.metrics {
            for (pop, s) in [("real", &m.real), ("synthetic", &m.synthetic)] {
                let _ = writeln!(
                    out,
                    "{},{pop},{},{},{},{},{},{},{},{},{},{},{},{}",
                    m.metric.name(),
                    s.count,
                    s.min,
                    s.whisker_low,
                    s.q1,
                    s.median,
                    s.mean,
                    s.q3,
                    s.whisker_high,
                    s.max,
                    s.outliers.len(),
                    m.relative_median_difference,
                    m.iqr_overlap
                );
            }
        }
        out
    }
}

/// `|a - b| / |a|`, or 0 when both are 0.
pub fn relative_difference(reference: f64, other: f64) -> f64 {
    if reference == 0.0 && other == 0.0 {
        0.0
    } else {
        (reference - other).abs() / reference.abs()
    }
}

/// Length of the intersection of two intervals over the shorter length. A
/// degenerate interval scores 1 if it lies in the other, 0 otherwise.
pub fn interval_overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if hi < lo {
        return 0.0;
    }
    let shorter = (a.1 - a.0).min(b.1 - b.0);
    if shorter <= 0.0 {
        1.0
    } else {
        ((hi - lo) / shorter).min(1.0)
    }
}

pub fn compare_values(metric: Metric, real: &[f64], synth: &[f64]) -> Result<MetricComparison> {
    let real = box_plot(real)?;
    let synthetic = box_plot(synth)?;
    Ok(MetricComparison {
        metric,
        relative_median_difference: relative_difference(real.median, synthetic.median),
        iqr_overlap: interval_overlap((real.q1, real.q3), (synthetic.q1, synthetic.q3)),
        real,
        synthetic,
    })
}

pub fn compare_populations(
    real: &[MorphologyReport],
    synth: &[MorphologyReport],
) -> Result<ComparisonReport> {
    if real.is_empty() || synth.is_empty() {
        return Err(Error::invalid(
            "population comparison needs nonempty populations",
        ));
    }
    let metrics = Metric::ALL
        .iter()
        .map(|&m| {
            let a: Vec<f64> = real.iter().map(|r| m.of(r)).collect();
            let b: Vec<f64> = synth.iter().map(|r| m.of(r)).collect();
            compare_values(m, &a, &b)
        })
        .collect::<Result<_>>()?;
    Ok(ComparisonReport { metrics })
}

/// Long-format CSV (`population,value`) of one metric, for box-plot tools.
pub fn boxplot_csv(real: &[f64], synth: &[f64]) -> String {
    let mut out = String::from("population,value\n");
    for v in real {
        let _ = writeln!(out, "real,{v}");
    }
    for v in synth {
        let _ = writeln!(out, "synthetic,{v}");
    }
    out
}
