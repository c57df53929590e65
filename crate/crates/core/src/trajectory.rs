//! Trajectory ingestion and preprocessing.
//!
//! A trajectory is an ordered list of time-stamped `(t, r, x)` samples:
//! reference and measured state, both of dimension `m`. From it we form the
//! tracking error `e = r - x`, estimate its derivative numerically, and
//! stack `xi = [e; edot]` into the series the learner consumes.
//!
//! Two text formats are supported: CSV with header
//! `t,r_0,...,r_{m-1},x_0,...,x_{m-1}`, and JSONL with one
//! `{"t": .., "r": [..], "x": [..]}` object per line. Lines starting with
//! `#` are comments in both. A NaN or infinity anywhere in a row is a hard
//! parse error rather than a skipped row; silently dropping data would
//! corrupt the certificate downstream.

use serde::Deserialize;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("malformed header: expected `{expected}`, found `{found}`")]
    MalformedHeader { expected: String, found: String },
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: row has {found} values, expected {expected}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: timestamps must be strictly increasing")]
    NonMonotoneTime { line: usize },
    #[error("trajectory has {found} samples, at least {min} required")]
    TooFewSamples { found: usize, min: usize },
    #[error("smoothing window {window} exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("smoothing window must be odd, got {window}")]
    EvenWindow { window: usize },
    #[error("error and derivative series disagree in length or timestamps")]
    TimestampMismatch,
}

/// One time-stamped sample of reference `r` and measured state `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub r: Vec<f64>,
    pub x: Vec<f64>,
}

/// Validated, strictly time-ordered sample list with a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<TrajectorySample>,
    m: usize,
}

/// Differentiation and a forward difference both need neighbours.
pub const MIN_SAMPLES: usize = 3;

impl Trajectory {
    /// Validates sample dimensions, time ordering, finiteness, and the
    /// minimum length.
    pub fn new(samples: Vec<TrajectorySample>) -> Result<Self, TrajectoryError> {
        if samples.len() < MIN_SAMPLES {
            return Err(TrajectoryError::TooFewSamples {
                found: samples.len(),
                min: MIN_SAMPLES,
            });
        }
        let m = samples[0].r.len();
        for (i, s) in samples.iter().enumerate() {
            let line = i + 1;
            if s.r.len() != m || s.x.len() != m {
                return Err(TrajectoryError::DimensionMismatch {
                    line,
                    expected: 2 * m,
                    found: s.r.len() + s.x.len(),
                });
            }
            if m == 0 {
                return Err(TrajectoryError::MalformedRecord {
                    line,
                    reason: "state dimension is zero".into(),
                });
            }
            if !s.t.is_finite()
                || s.r.iter().any(|v| !v.is_finite())
                || s.x.iter().any(|v| !v.is_finite())
            {
                return Err(TrajectoryError::MalformedRecord {
                    line,
                    reason: "non-finite value".into(),
                });
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(TrajectoryError::NonMonotoneTime { line });
            }
        }
        Ok(Self { samples, m })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }
}

/// Input text format for [`parse_trajectory`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

fn expected_header(m: usize) -> String {
    let mut h = String::from("t");
    for i in 0..m {
        let _ = write!(h, ",r_{i}");
    }
    for i in 0..m {
        let _ = write!(h, ",x_{i}");
    }
    h
}

fn parse_value(tok: &str, line: usize) -> Result<f64, TrajectoryError> {
    let v: f64 = tok.trim().parse().map_err(|_| TrajectoryError::MalformedRecord {
        line,
        reason: format!("`{}` is not a number", tok.trim()),
    })?;
    if !v.is_finite() {
        return Err(TrajectoryError::MalformedRecord {
            line,
            reason: format!("non-finite value `{}`", tok.trim()),
        });
    }
    Ok(v)
}

fn parse_csv(text: &str) -> Result<Trajectory, TrajectoryError> {
    let mut samples = Vec::new();
    let mut m: Option<usize> = None;
    let mut width = 0usize;
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some(m) = m else {
            // First content line is the header; the column count fixes m.
            let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if cols.len() < 3 || cols.len() % 2 == 0 {
                return Err(TrajectoryError::MalformedHeader {
                    expected: expected_header(1),
                    found: trimmed.to_string(),
                });
            }
            let inferred = (cols.len() - 1) / 2;
            let expected = expected_header(inferred);
            if trimmed.split(',').map(str::trim).collect::<Vec<_>>().join(",") != expected {
                return Err(TrajectoryError::MalformedHeader {
                    expected,
                    found: trimmed.to_string(),
                });
            }
            m = Some(inferred);
            width = cols.len();
            continue;
        };
        let values: Vec<&str> = trimmed.split(',').collect();
        if values.len() != width {
            return Err(TrajectoryError::DimensionMismatch {
                line,
                expected: width,
                found: values.len(),
            });
        }
        let t = parse_value(values[0], line)?;
        let r = values[1..1 + m]
            .iter()
            .map(|v| parse_value(v, line))
            .collect::<Result<Vec<_>, _>>()?;
        let x = values[1 + m..]
            .iter()
            .map(|v| parse_value(v, line))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(prev) = samples.last() {
            let prev: &TrajectorySample = prev;
            if t <= prev.t {
                return Err(TrajectoryError::NonMonotoneTime { line });
            }
        }
        samples.push(TrajectorySample { t, r, x });
    }
    if m.is_none() {
        return Err(TrajectoryError::MalformedHeader {
            expected: expected_header(1),
            found: String::new(),
        });
    }
    Trajectory::new(samples)
}

#[derive(Deserialize)]
struct JsonlRow {
    t: f64,
    r: Vec<f64>,
    x: Vec<f64>,
}

fn parse_jsonl(text: &str) -> Result<Trajectory, TrajectoryError> {
    let mut samples = Vec::new();
    let mut m: Option<usize> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row: JsonlRow =
            serde_json::from_str(trimmed).map_err(|e| TrajectoryError::MalformedRecord {
                line,
                reason: e.to_string(),
            })?;
        let m = *m.get_or_insert(row.r.len());
        if row.r.len() != m || row.x.len() != m {
            return Err(TrajectoryError::DimensionMismatch {
                line,
                expected: 2 * m,
                found: row.r.len() + row.x.len(),
            });
        }
        if !row.t.is_finite()
            || row.r.iter().any(|v| !v.is_finite())
            || row.x.iter().any(|v| !v.is_finite())
        {
            return Err(TrajectoryError::MalformedRecord {
                line,
                reason: "non-finite value".into(),
            });
        }
        if let Some(prev) = samples.last() {
            let prev: &TrajectorySample = prev;
            if row.t <= prev.t {
                return Err(TrajectoryError::NonMonotoneTime { line });
            }
        }
        samples.push(TrajectorySample { t: row.t, r: row.r, x: row.x });
    }
    Trajectory::new(samples)
}

/// Parses trajectory text in the given format, inferring the dimension.
pub fn parse_trajectory(text: &str, format: Format) -> Result<Trajectory, TrajectoryError> {
    match format {
        Format::Csv => parse_csv(text),
        Format::Jsonl => parse_jsonl(text),
    }
}

/// Serializes a trajectory to the CSV format [`parse_trajectory`] reads.
/// Floats use the shortest representation that round-trips exactly, so
/// parse(write(t)) == t bit for bit.
pub fn write_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    out.push_str(&expected_header(traj.m));
    out.push('\n');
    for s in traj.samples() {
        let _ = write!(out, "{}", s.t);
        for v in s.r.iter().chain(s.x.iter()) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// A time-stamped vector series; the common element type of the
/// preprocessing steps.
pub type TimedSeries = Vec<(f64, Vec<f64>)>;

/// Tracking error `e(t_k) = r(t_k) - x(t_k)`, order preserved.
pub fn compute_error(traj: &Trajectory) -> TimedSeries {
    traj.samples()
        .iter()
        .map(|s| {
            let e = s.r.iter().zip(&s.x).map(|(r, x)| r - x).collect();
            (s.t, e)
        })
        .collect()
}

/// Centered moving average of width `window` (odd), shrinking symmetrically
/// at the boundaries so output length equals input length.
pub fn moving_average(series: &[(f64, Vec<f64>)], window: usize) -> Result<TimedSeries, TrajectoryError> {
    check_window(series.len(), window)?;
    if window == 1 {
        return Ok(series.to_vec());
    }
    let n = series.len();
    let half = window / 2;
    let dim = series[0].1.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let h = half.min(k).min(n - 1 - k);
        let mut acc = vec![0.0; dim];
        for (_, v) in &series[k - h..=k + h] {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
        }
        let count = (2 * h + 1) as f64;
        acc.iter_mut().for_each(|a| *a /= count);
        out.push((series[k].0, acc));
    }
    Ok(out)
}

fn check_window(len: usize, window: usize) -> Result<(), TrajectoryError> {
    if window % 2 == 0 {
        return Err(TrajectoryError::EvenWindow { window });
    }
    if window > len {
        return Err(TrajectoryError::WindowTooLarge { window, len });
    }
    Ok(())
}

/// Numerical time derivative of a vector series.
///
/// Interior points use central differences over the actual timestamp gaps,
/// endpoints one-sided first-order differences. With `smoothing_window > 1`
/// a centered moving average is applied to the values first. Output length
/// equals input length.
pub fn differentiate(
    series: &[(f64, Vec<f64>)],
    smoothing_window: usize,
) -> Result<TimedSeries, TrajectoryError> {
    check_window(series.len(), smoothing_window)?;
    if series.len() < 2 {
        return Err(TrajectoryError::TooFewSamples { found: series.len(), min: 2 });
    }
    let smoothed = moving_average(series, smoothing_window)?;
    let n = smoothed.len();
    let dim = smoothed[0].1.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let (lo, hi) = if k == 0 {
            (0, 1)
        } else if k == n - 1 {
            (n - 2, n - 1)
        } else {
            (k - 1, k + 1)
        };
        let dt = smoothed[hi].0 - smoothed[lo].0;
        let mut d = Vec::with_capacity(dim);
        for i in 0..dim {
            d.push((smoothed[hi].1[i] - smoothed[lo].1[i]) / dt);
        }
        out.push((smoothed[k].0, d));
    }
    Ok(out)
}

/// Stacked error state series: `xi = [e; edot]`, dimension `n = 2m`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSeries {
    entries: Vec<(f64, Vec<f64>)>,
    n: usize,
}

impl StateSeries {
    /// Validates stacking dimension and strict time ordering.
    pub fn new(entries: Vec<(f64, Vec<f64>)>, n: usize) -> Result<Self, TrajectoryError> {
        if entries.len() < 2 {
            return Err(TrajectoryError::TooFewSamples { found: entries.len(), min: 2 });
        }
        for (i, (t, xi)) in entries.iter().enumerate() {
            if xi.len() != n {
                return Err(TrajectoryError::DimensionMismatch {
                    line: i + 1,
                    expected: n,
                    found: xi.len(),
                });
            }
            if i > 0 && *t <= entries[i - 1].0 {
                return Err(TrajectoryError::NonMonotoneTime { line: i + 1 });
            }
        }
        Ok(Self { entries, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(f64, Vec<f64>)] {
        &self.entries
    }

    /// First `count` samples, for train/evaluate splits.
    pub fn head(&self, count: usize) -> Result<StateSeries, TrajectoryError> {
        StateSeries::new(self.entries[..count.min(self.entries.len())].to_vec(), self.n)
    }
}

/// Stacks error and error-derivative series into `xi_k = [e_k; edot_k]`.
/// Both series must share length and timestamps.
pub fn build_states(
    err: &[(f64, Vec<f64>)],
    errdot: &[(f64, Vec<f64>)],
) -> Result<StateSeries, TrajectoryError> {
    if err.len() != errdot.len() {
        return Err(TrajectoryError::TimestampMismatch);
    }
    let mut entries = Vec::with_capacity(err.len());
    for ((te, e), (td, d)) in err.iter().zip(errdot) {
        if te != td || e.len() != d.len() {
            return Err(TrajectoryError::TimestampMismatch);
        }
        let mut xi = Vec::with_capacity(e.len() * 2);
        xi.extend_from_slice(e);
        xi.extend_from_slice(d);
        entries.push((*te, xi));
    }
    let n = entries.first().map_or(0, |(_, xi)| xi.len());
    StateSeries::new(entries, n)
}

/// Full preprocessing pipeline: error, optional smoothing, derivative,
/// stacking. The moving average is applied to the error signal once and
/// both blocks of `xi` are built from the smoothed signal, so the error and
/// its derivative stay mutually consistent.
pub fn state_series(
    traj: &Trajectory,
    smoothing_window: usize,
) -> Result<StateSeries, TrajectoryError> {
    let err = compute_error(traj);
    let smoothed = moving_average(&err, smoothing_window)?;
    let errdot = differentiate(&smoothed, 1)?;
    build_states(&smoothed, &errdot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CSV_M1: &str = "t,r_0,x_0\n0.0,1.0,0.5\n0.1,1.0,0.6\n0.2,1.0,0.7\n";

    #[test]
    fn parse_minimal_csv() {
        let traj = parse_trajectory(CSV_M1, Format::Csv).unwrap();
        assert_eq!(traj.dim(), 1);
        assert_eq!(traj.len(), 3);
        assert_eq!(traj.samples()[2].x, vec![0.7]);
    }

    #[test]
    fn parse_skips_comments_and_blank_lines() {
        let text = "# produced by a logger\n\nt,r_0,x_0\n0,1,0\n# mid comment\n1,1,0\n2,1,0\n";
        let traj = parse_trajectory(text, Format::Csv).unwrap();
        assert_eq!(traj.len(), 3);
    }

    #[test]
    fn parse_rejects_duplicate_timestamp() {
        let text = "t,r_0,x_0\n0.0,1.0,0.5\n0.1,1.0,0.6\n0.1,1.0,0.7\n";
        let err = parse_trajectory(text, Format::Csv).unwrap_err();
        assert_eq!(err, TrajectoryError::NonMonotoneTime { line: 4 });
    }

    #[test]
    fn parse_rejects_ragged_row() {
        // Header says m = 2 (width 5); row has 2 r-columns but 1 x-column.
        let text = "t,r_0,r_1,x_0,x_1\n0.0,1.0,2.0,0.5\n0.1,1,2,3,4\n0.2,1,2,3,4\n";
        let err = parse_trajectory(text, Format::Csv).unwrap_err();
        assert!(matches!(err, TrajectoryError::DimensionMismatch { line: 2, .. }));
    }

    #[test]
    fn parse_rejects_wrong_header() {
        let text = "time,ref,state\n0,1,0\n1,1,0\n2,1,0\n";
        assert!(matches!(
            parse_trajectory(text, Format::Csv),
            Err(TrajectoryError::MalformedHeader { .. })
        ));
    }

    #[test]
    fn parse_rejects_nan_as_hard_error() {
        let text = "t,r_0,x_0\n0.0,1.0,0.5\n0.1,NaN,0.6\n0.2,1.0,0.7\n";
        assert!(matches!(
            parse_trajectory(text, Format::Csv),
            Err(TrajectoryError::MalformedRecord { line: 3, .. })
        ));
    }

    #[test]
    fn parse_rejects_too_few_samples() {
        let text = "t,r_0,x_0\n0.0,1.0,0.5\n0.1,1.0,0.6\n";
        assert_eq!(
            parse_trajectory(text, Format::Csv).unwrap_err(),
            TrajectoryError::TooFewSamples { found: 2, min: 3 }
        );
    }

    #[test]
    fn parse_jsonl() {
        let text = r#"{"t": 0.0, "r": [1.0, 2.0], "x": [0.5, 1.0]}
{"t": 0.1, "r": [1.0, 2.0], "x": [0.6, 1.1]}
{"t": 0.2, "r": [1.0, 2.0], "x": [0.7, 1.2]}"#;
        let traj = parse_trajectory(text, Format::Jsonl).unwrap();
        assert_eq!(traj.dim(), 2);
        assert_eq!(traj.len(), 3);
    }

    #[test]
    fn parse_jsonl_rejects_dimension_change() {
        let text = r#"{"t": 0.0, "r": [1.0], "x": [0.5]}
{"t": 0.1, "r": [1.0, 2.0], "x": [0.6, 1.1]}
{"t": 0.2, "r": [1.0], "x": [0.7]}"#;
        assert!(matches!(
            parse_trajectory(text, Format::Jsonl),
            Err(TrajectoryError::DimensionMismatch { line: 2, .. })
        ));
    }

    #[test]
    fn error_is_reference_minus_state() {
        let traj = Trajectory::new(vec![
            TrajectorySample { t: 0.0, r: vec![1.0, 2.0], x: vec![0.5, 1.0] },
            TrajectorySample { t: 0.1, r: vec![1.0, 2.0], x: vec![1.0, 2.0] },
            TrajectorySample { t: 0.2, r: vec![0.0, 0.0], x: vec![2.0, 2.0] },
        ])
        .unwrap();
        let err = compute_error(&traj);
        assert_eq!(err[0].1, vec![0.5, 1.0]);
        assert_eq!(err[1].1, vec![0.0, 0.0]);
        assert_eq!(err[2].1, vec![-2.0, -2.0]);
    }

    fn scalar_series(ts: &[f64], vs: &[f64]) -> TimedSeries {
        ts.iter().zip(vs).map(|(&t, &v)| (t, vec![v])).collect()
    }

    #[test]
    fn differentiate_constant_is_zero() {
        let ts: Vec<f64> = (0..10).map(|k| k as f64 * 0.1).collect();
        let vs = vec![3.0; 10];
        let d = differentiate(&scalar_series(&ts, &vs), 1).unwrap();
        assert!(d.iter().all(|(_, v)| v[0] == 0.0));
    }

    #[test]
    fn differentiate_linear_is_exact_everywhere() {
        let ts: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let vs: Vec<f64> = ts.iter().map(|t| 2.0 * t).collect();
        let d = differentiate(&scalar_series(&ts, &vs), 1).unwrap();
        for (t, v) in &d {
            assert!((v[0] - 2.0).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn differentiate_linear_nonuniform_grid_exact() {
        let ts = [0.0, 0.05, 0.3, 0.35, 0.8, 1.0];
        let vs: Vec<f64> = ts.iter().map(|t| -1.5 * t + 0.4).collect();
        let d = differentiate(&scalar_series(&ts, &vs), 1).unwrap();
        for (_, v) in &d {
            assert!((v[0] + 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn differentiate_sin_matches_cos_on_interior() {
        // Central difference error is O(dt^2); at dt = 0.01 the bound 1e-4
        // has an order of magnitude of slack.
        let dt = 0.01;
        let n = 700;
        let ts: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let vs: Vec<f64> = ts.iter().map(|t| t.sin()).collect();
        let d = differentiate(&scalar_series(&ts, &vs), 1).unwrap();
        let max_err = d[1..n - 1]
            .iter()
            .map(|(t, v)| (v[0] - t.cos()).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err <= 1e-4, "max interior error {max_err:.3e}");
    }

    #[test]
    fn differentiate_rejects_even_window() {
        let ts: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let s = scalar_series(&ts, &ts);
        assert_eq!(
            differentiate(&s, 4).unwrap_err(),
            TrajectoryError::EvenWindow { window: 4 }
        );
    }

    #[test]
    fn differentiate_rejects_oversized_window() {
        let ts: Vec<f64> = (0..5).map(|k| k as f64).collect();
        let s = scalar_series(&ts, &ts);
        assert_eq!(
            differentiate(&s, 7).unwrap_err(),
            TrajectoryError::WindowTooLarge { window: 7, len: 5 }
        );
    }

    #[test]
    fn smoothing_preserves_affine_signals() {
        // Symmetric windows (and the symmetric boundary shrink) average an
        // affine signal to itself on a uniform grid.
        let ts: Vec<f64> = (0..30).map(|k| k as f64 * 0.05).collect();
        let vs: Vec<f64> = ts.iter().map(|t| 3.0 * t - 1.0).collect();
        let sm = moving_average(&scalar_series(&ts, &vs), 7).unwrap();
        for ((_, s), v) in sm.iter().zip(&vs) {
            assert!((s[0] - v).abs() < 1e-12);
        }
        let d = differentiate(&scalar_series(&ts, &vs), 7).unwrap();
        for (_, v) in &d {
            assert!((v[0] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_reduces_noise_on_constant() {
        let ts: Vec<f64> = (0..101).map(|k| k as f64 * 0.01).collect();
        // Deterministic zig-zag around 1.0.
        let vs: Vec<f64> = (0..101).map(|k| 1.0 + if k % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let rough = differentiate(&scalar_series(&ts, &vs), 1).unwrap();
        let smooth = differentiate(&scalar_series(&ts, &vs), 5).unwrap();
        let amp = |d: &TimedSeries| d.iter().map(|(_, v)| v[0].abs()).fold(0.0f64, f64::max);
        assert!(amp(&smooth) < amp(&rough) / 2.0);
    }

    #[test]
    fn build_states_stacks_error_over_derivative() {
        let err = vec![(0.0, vec![1.0]), (0.1, vec![0.5])];
        let errdot = vec![(0.0, vec![-1.0]), (0.1, vec![-0.5])];
        let states = build_states(&err, &errdot).unwrap();
        assert_eq!(states.dim(), 2);
        assert_eq!(states.entries()[0].1, vec![1.0, -1.0]);
    }

    #[test]
    fn build_states_block_order_not_interleaved() {
        let err = vec![(0.0, vec![1.0, 2.0]), (0.1, vec![1.0, 2.0])];
        let errdot = vec![(0.0, vec![3.0, 4.0]), (0.1, vec![3.0, 4.0])];
        let states = build_states(&err, &errdot).unwrap();
        assert_eq!(states.entries()[0].1, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn build_states_rejects_length_mismatch() {
        let err: TimedSeries = (0..5).map(|k| (k as f64, vec![0.0])).collect();
        let errdot: TimedSeries = (0..4).map(|k| (k as f64, vec![0.0])).collect();
        assert_eq!(build_states(&err, &errdot).unwrap_err(), TrajectoryError::TimestampMismatch);
    }

    #[test]
    fn build_states_rejects_timestamp_mismatch() {
        let err = vec![(0.0, vec![1.0]), (0.1, vec![0.5])];
        let errdot = vec![(0.0, vec![-1.0]), (0.2, vec![-0.5])];
        assert_eq!(build_states(&err, &errdot).unwrap_err(), TrajectoryError::TimestampMismatch);
    }

    #[test]
    fn state_series_projects_back_to_error() {
        let traj = parse_trajectory(CSV_M1, Format::Csv).unwrap();
        let states = state_series(&traj, 1).unwrap();
        let err = compute_error(&traj);
        assert_eq!(states.dim(), 2);
        for ((_, xi), (_, e)) in states.entries().iter().zip(&err) {
            assert_eq!(&xi[..1], e.as_slice());
        }
    }

    proptest! {
        #[test]
        fn csv_roundtrip_is_identity(
            m in 1usize..4,
            gaps in proptest::collection::vec(1e-6f64..10.0, 2..30),
            cells in proptest::collection::vec(-1e6f64..1e6, 240),
        ) {
            let mut t = 0.0;
            let mut samples = Vec::new();
            let mut it = cells.into_iter().cycle();
            for gap in &gaps {
                samples.push(TrajectorySample {
                    t,
                    r: (0..m).map(|_| it.next().unwrap()).collect(),
                    x: (0..m).map(|_| it.next().unwrap()).collect(),
                });
                t += gap;
            }
            samples.push(TrajectorySample {
                t,
                r: (0..m).map(|_| it.next().unwrap()).collect(),
                x: (0..m).map(|_| it.next().unwrap()).collect(),
            });
            let traj = Trajectory::new(samples).unwrap();
            let back = parse_trajectory(&write_csv(&traj), Format::Csv).unwrap();
            prop_assert_eq!(traj, back);
        }

        #[test]
        fn compute_error_is_linear(
            vals in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3), 3..20),
        ) {
            let mk = |pick: &dyn Fn(&(f64, f64, f64, f64)) -> (f64, f64)| {
                Trajectory::new(
                    vals.iter()
                        .enumerate()
                        .map(|(k, v)| {
                            let (r, x) = pick(v);
                            TrajectorySample { t: k as f64, r: vec![r], x: vec![x] }
                        })
                        .collect(),
                )
                .unwrap()
            };
            let a = mk(&|v| (v.0, v.1));
            let b = mk(&|v| (v.2, v.3));
            let sum = mk(&|v| (v.0 + v.2, v.1 + v.3));
            let ea = compute_error(&a);
            let eb = compute_error(&b);
            let es = compute_error(&sum);
            for k in 0..vals.len() {
                prop_assert!((es[k].1[0] - (ea[k].1[0] + eb[k].1[0])).abs() < 1e-9);
            }
        }
    }
}
