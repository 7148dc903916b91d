//! Sliding-window two-sample Kolmogorov–Smirnov testing over a trace-score
//! series, drift-point extraction and segmentation.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d: f64,
    pub p: f64,
}

/// Two-sample KS statistic and asymptotic p-value (with the Stephens
/// small-sample correction of the Kolmogorov argument).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument("sample contains NaN".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let d = ks_statistic_sorted(&a, &b);
    Ok(KsResult {
        d,
        p: ks_p_value(d, a.len(), b.len()),
    })
}

/// Sup-distance between the ECDFs of two sorted samples. The running
/// difference is kept as the exact integer `|i·m − j·n|` and divided once.
pub fn ks_statistic_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut best: u128 = 0;
    while i < n && j < m {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        let diff = (i as i128 * m as i128 - j as i128 * n as i128).unsigned_abs();
        best = best.max(diff);
    }
    best as f64 / (n as f64 * m as f64)
}

pub fn ks_p_value(d: f64, n: usize, m: usize) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let sqrt_ne = ne.sqrt();
    let lambda = (sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d;
    kolmogorov_q(lambda)
}

/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`, clamped to [0, 1].
///
/// Terms are summed until one drops below 1e-10 in magnitude. When 100
/// terms are not enough (λ close to zero) the series has not converged and
/// the limit value 1 is returned.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    let a2 = -2.0 * lambda * lambda;
    let mut sign = 1.0;
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * sign * (a2 * kf * kf).exp();
        sum += term;
        if term.abs() < 1e-10 {
            return sum.clamp(0.0, 1.0);
        }
        sign = -sign;
    }
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValuePoint {
    pub center_index: usize,
    pub d_stat: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueSeries {
    pub window_size: usize,
    pub step: usize,
    pub points: Vec<PValuePoint>,
}

/// KS test of the first half of each window against its second half, for
/// windows starting at `0, step, 2·step, …, N − w`. Points are recorded at
/// the window centre.
pub fn sliding_window_pvalues(scores: &[f64], window: usize, step: usize) -> Result<PValueSeries> {
    if window < 2 || !window.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "window size must be even and at least 2, got {window}"
        )));
    }
    if step == 0 {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    if scores.len() < window {
        return Err(Error::InvalidArgument(format!(
            "{} traces is fewer than the window size {window}",
            scores.len()
        )));
    }
    let half = window / 2;
    let starts: Vec<usize> = (0..=scores.len() - window).step_by(step).collect();
    let points = starts
        .par_iter()
        .map(|&i| {
            let r = ks_two_sample(&scores[i..i + half], &scores[i + half..i + window])?;
            Ok(PValuePoint {
                center_index: i + half,
                d_stat: r.d,
                p_value: r.p,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PValueSeries {
        window_size: window,
        step,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftPoint {
    pub trace_index: usize,
    pub p_at_min: f64,
    pub window_size: usize,
}

/// One drift point per maximal run of points below `threshold`, placed at
/// the run's minimum (earliest on ties). Drift points closer than
/// `min_separation` are merged, keeping the smaller p-value.
pub fn detect_drift_points(series: &PValueSeries, threshold: f64, min_separation: usize) -> Result<Vec<DriftPoint>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} outside (0, 1)"
        )));
    }
    let mut runs: Vec<DriftPoint> = Vec::new();
    let mut current: Option<DriftPoint> = None;
    for pt in &series.points {
        if pt.p_value < threshold {
            match &mut current {
                Some(best) if pt.p_value < best.p_at_min => {
                    best.trace_index = pt.center_index;
                    best.p_at_min = pt.p_value;
                }
                Some(_) => {}
                None => {
                    current = Some(DriftPoint {
                        trace_index: pt.center_index,
                        p_at_min: pt.p_value,
                        window_size: series.window_size,
                    })
                }
            }
        } else if let Some(dp) = current.take() {
            runs.push(dp);
        }
    }
    runs.extend(current);

    let mut merged: Vec<DriftPoint> = Vec::new();
    for dp in runs {
        match merged.last_mut() {
            Some(last) if dp.trace_index - last.trace_index < min_separation => {
                if dp.p_at_min < last.p_at_min {
                    *last = dp;
                }
            }
            _ => merged.push(dp),
        }
    }
    Ok(merged)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub id: usize,
    pub start_trace: usize,
    pub end_trace: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end_trace - self.start_trace
    }

    pub fn is_empty(&self) -> bool {
        self.end_trace == self.start_trace
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start_trace..self.end_trace
    }
}

/// Cuts `[0, n)` at the given trace indices. A cut at 0 is dropped.
pub fn segment_at(n: usize, cuts: &[usize]) -> Result<Vec<Segment>> {
    if cuts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("drift indices must be strictly increasing".into()));
    }
    if let Some(&last) = cuts.last() {
        if last >= n {
            return Err(Error::InvalidArgument(format!(
                "drift index {last} outside [0, {n})"
            )));
        }
    }
    let mut bounds: Vec<usize> = vec![0];
    bounds.extend(cuts.iter().copied().filter(|&c| c > 0));
    bounds.push(n);
    Ok(bounds
        .windows(2)
        .enumerate()
        .map(|(id, w)| Segment {
            id,
            start_trace: w[0],
            end_trace: w[1],
            label: None,
        })
        .collect())
}

pub fn segment_log(n: usize, drifts: &[DriftPoint]) -> Result<Vec<Segment>> {
    let cuts: Vec<usize> = drifts.iter().map(|d| d.trace_index).collect();
    segment_at(n, &cuts)
}

/// Segments from explicit `[start, end)` ranges.
pub fn segments_from_ranges(n: usize, ranges: &[(usize, usize)]) -> Result<Vec<Segment>> {
    ranges
        .iter()
        .enumerate()
        .map(|(id, &(s, e))| {
            if s >= e || e > n {
                Err(Error::InvalidArgument(format!("segment [{s}, {e}) invalid for {n} traces")))
            } else {
                Ok(Segment {
                    id,
                    start_trace: s,
                    end_trace: e,
                    label: None,
                })
            }
        })
        .collect()
}

pub fn write_pvalues_csv<W: Write>(series: &PValueSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["center_index", "d", "p"])?;
    for p in &series.points {
        w.write_record([p.center_index.to_string(), p.d_stat.to_string(), p.p_value.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<p-value output>", e))?;
    Ok(())
}
