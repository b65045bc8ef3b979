//! Mean ± std across seeds on a common data-pass grid.

use crate::experiment::Trace;

/// Linear interpolation of `points` (sorted by x) at `x`; `None` outside
/// the covered range. With repeated x values the last one wins.
pub fn interpolate(points: &[(f64, f64)], x: f64) -> Option<f64> {
    let (first, last) = (points.first()?, points.last()?);
    if x < first.0 || x > last.0 {
        return None;
    }
    let hi = points.partition_point(|p| p.0 <= x);
    if hi == 0 {
        return Some(first.1);
    }
    let (x0, y0) = points[hi - 1];
    if x0 == x || hi == points.len() {
        return Some(y0);
    }
    let (x1, y1) = points[hi];
    Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}

/// Multiples of `spacing` lying inside every series' range.
pub fn common_grid(series: &[Vec<(f64, f64)>], spacing: f64) -> Vec<f64> {
    let lo = series
        .iter()
        .filter_map(|s| s.first().map(|p| p.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = series
        .iter()
        .filter_map(|s| s.last().map(|p| p.0))
        .fold(f64::INFINITY, f64::min);
    if series.is_empty()
        || lo.partial_cmp(&hi).is_none_or(|o| o.is_gt())
        || spacing.is_nan()
        || spacing <= 0.0
    {
        return Vec::new();
    }
    // Tolerate round-off so that a recorded 0.3000000004 still covers 0.3.
    let eps = 1e-9 * spacing;
    let start = ((lo - eps) / spacing).ceil() as i64;
    let end = ((hi + eps) / spacing).floor() as i64;
    (start..=end)
        .map(|k| k as f64 * spacing)
        .map(|x| x.clamp(lo, hi))
        .collect()
}

/// Sample mean and standard deviation (`n - 1`; zero for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub data_passes: f64,
    /// `(mean, std)` per metric, in trace column order.
    pub stats: Vec<(f64, f64)>,
}

/// Aggregates traces of one algorithm. Grid spacing is `spacing` passes.
pub fn summarize(traces: &[&Trace], spacing: f64) -> Vec<SummaryRow> {
    let Some(first) = traces.first() else {
        return Vec::new();
    };
    let columns: Vec<Vec<Vec<(f64, f64)>>> = first
        .metric_names
        .iter()
        .map(|m| {
            traces
                .iter()
                .map(|t| t.series(m).unwrap_or_default())
                .collect()
        })
        .collect();
    let grid = common_grid(&columns[0], spacing);
    grid.into_iter()
        .map(|x| SummaryRow {
            data_passes: x,
            stats: columns
                .iter()
                .map(|per_seed| {
                    let vals: Vec<f64> =
                        per_seed.iter().filter_map(|s| interpolate(s, x)).collect();
                    mean_std(&vals)
                })
                .collect(),
        })
        .collect()
}
