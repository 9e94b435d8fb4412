//! The node-by-time demand tensor, chronological splits and sliding windows.

use std::io::{BufRead, BufReader, Read, Write};

use chrono::{DateTime, Duration, Utc};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// N x T matrix of nonnegative trip counts. Column `t` covers the half-open
/// interval `[t0 + t * interval, t0 + (t+1) * interval)`. The node order is
/// fixed and shared with the attribute table and adjacency matrices.
#[derive(Debug, Clone)]
pub struct DemandTensor {
    node_ids: Vec<String>,
    t0: DateTime<Utc>,
    interval: Duration,
    /// Row-major N x T values.
    values: Vec<f64>,
    t_len: usize,
}

impl DemandTensor {
    pub fn new(
        node_ids: Vec<String>,
        t0: DateTime<Utc>,
        interval: Duration,
        t_len: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != node_ids.len() * t_len {
            return Err(Error::Validation(format!(
                "demand values length {} does not match {} nodes x {} intervals",
                values.len(),
                node_ids.len(),
                t_len
            )));
        }
        if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Validation(
                "demand values must be finite and nonnegative".into(),
            ));
        }
        Ok(DemandTensor {
            node_ids,
            t0,
            interval,
            values,
            t_len,
        })
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn t0(&self) -> DateTime<Utc> {
        self.t0
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    pub fn value(&self, node: usize, t: usize) -> f64 {
        self.values[node * self.t_len + t]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Total trips over all cells.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Timestamp of the start of column `t`.
    pub fn column_time(&self, t: usize) -> DateTime<Utc> {
        self.t0 + self.interval * t as i32
    }

    /// Per-node series as a slice-backed vector.
    pub fn node_series(&self, node: usize) -> &[f64] {
        &self.values[node * self.t_len..(node + 1) * self.t_len]
    }

    /// Per-node mean over all columns.
    pub fn node_means(&self) -> Vec<f64> {
        (0..self.n_nodes())
            .map(|i| self.node_series(i).iter().sum::<f64>() / self.t_len as f64)
            .collect()
    }

    /// Sub-tensor covering columns `[from, to)`.
    pub fn slice_cols(&self, from: usize, to: usize) -> DemandTensor {
        debug_assert!(from <= to && to <= self.t_len);
        let width = to - from;
        let mut values = Vec::with_capacity(self.n_nodes() * width);
        for i in 0..self.n_nodes() {
            values.extend_from_slice(&self.values[i * self.t_len + from..i * self.t_len + to]);
        }
        DemandTensor {
            node_ids: self.node_ids.clone(),
            t0: self.column_time(from),
            interval: self.interval,
            values,
            t_len: width,
        }
    }

    /// Keep only the given node rows (by index), preserving order.
    pub fn select_nodes(&self, keep: &[usize]) -> DemandTensor {
        let mut node_ids = Vec::with_capacity(keep.len());
        let mut values = Vec::with_capacity(keep.len() * self.t_len);
        for &i in keep {
            node_ids.push(self.node_ids[i].clone());
            values.extend_from_slice(self.node_series(i));
        }
        DemandTensor {
            node_ids,
            t0: self.t0,
            interval: self.interval,
            values,
            t_len: self.t_len,
        }
    }

    /// Write the documented column-major CSV: `#`-prefixed metadata lines, a
    /// header row of zone ids, then one row per interval.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# fairdemand demand tensor v1")?;
        writeln!(w, "# t0={}", self.t0.to_rfc3339())?;
        writeln!(w, "# interval_secs={}", self.interval.num_seconds())?;
        writeln!(w, "timestamp,{}", self.node_ids.join(","))?;
        for t in 0..self.t_len {
            let mut row = String::new();
            row.push_str(&self.column_time(t).to_rfc3339());
            for i in 0..self.n_nodes() {
                row.push(',');
                row.push_str(&format!("{}", self.value(i, t)));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    /// Read back a tensor written by [`DemandTensor::write_csv`].
    pub fn read_csv<R: Read>(reader: R, path_label: &str) -> Result<Self> {
        let buf = BufReader::new(reader);
        let mut t0: Option<DateTime<Utc>> = None;
        let mut interval_secs: Option<i64> = None;
        let mut node_ids: Vec<String> = Vec::new();
        let mut columns: Vec<Vec<f64>> = Vec::new();
        for (idx, line) in buf.lines().enumerate() {
            let line = line?;
            let lineno = idx as u64 + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(meta) = trimmed.strip_prefix('#') {
                let meta = meta.trim();
                if let Some(v) = meta.strip_prefix("t0=") {
                    t0 = Some(DateTime::parse_from_rfc3339(v).map_err(|e| Error::Schema {
                        path: path_label.into(),
                        line: lineno,
                        detail: format!("bad t0: {e}"),
                    })?
                    .with_timezone(&Utc));
                } else if let Some(v) = meta.strip_prefix("interval_secs=") {
                    interval_secs = Some(v.parse().map_err(|e| Error::Schema {
                        path: path_label.into(),
                        line: lineno,
                        detail: format!("bad interval_secs: {e}"),
                    })?);
                }
                continue;
            }
            if node_ids.is_empty() {
                let mut parts = trimmed.split(',');
                if parts.next() != Some("timestamp") {
                    return Err(Error::Schema {
                        path: path_label.into(),
                        line: lineno,
                        detail: "expected header starting with 'timestamp'".into(),
                    });
                }
                node_ids = parts.map(|s| s.to_string()).collect();
                continue;
            }
            let mut parts = trimmed.split(',');
            let _ts = parts.next();
            let row: Vec<f64> = parts
                .map(|s| {
                    s.parse::<f64>().map_err(|e| Error::Schema {
                        path: path_label.into(),
                        line: lineno,
                        detail: format!("bad value '{s}': {e}"),
                    })
                })
                .collect::<Result<_>>()?;
            if row.len() != node_ids.len() {
                return Err(Error::Schema {
                    path: path_label.into(),
                    line: lineno,
                    detail: format!("expected {} values, got {}", node_ids.len(), row.len()),
                });
            }
            columns.push(row);
        }
        let (t0, interval_secs) = match (t0, interval_secs) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::Schema {
                    path: path_label.into(),
                    line: 0,
                    detail: "missing t0/interval_secs metadata".into(),
                })
            }
        };
        let t_len = columns.len();
        let n = node_ids.len();
        let mut values = vec![0.0; n * t_len];
        for (t, row) in columns.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                values[i * t_len + t] = v;
            }
        }
        DemandTensor::new(node_ids, t0, Duration::seconds(interval_secs), t_len, values)
    }
}

/// Chronological split fractions; defaults to 0.70 / 0.10 / 0.20.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.70,
            val: 0.10,
            test: 0.20,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(0.0 < v && v < 1.0) {
                return Err(Error::Validation(format!(
                    "split fraction {name}={v} must lie in (0, 1)"
                )));
            }
        }
        if ((self.train + self.val + self.test) - 1.0).abs() > 1e-9 {
            return Err(Error::Validation("split fractions must sum to 1".into()));
        }
        Ok(())
    }
}

/// Contiguous, ordered, non-overlapping time split. Train gets
/// `floor(train * T)` columns, validation `floor(val * T)`, test the rest.
pub fn chronological_split(
    tensor: &DemandTensor,
    spec: &SplitSpec,
) -> Result<(DemandTensor, DemandTensor, DemandTensor)> {
    spec.validate()?;
    let t = tensor.t_len();
    if t < 10 {
        return Err(Error::Validation(format!(
            "need at least 10 intervals to split, have {t}"
        )));
    }
    let n_train = (spec.train * t as f64).floor() as usize;
    let n_val = (spec.val * t as f64).floor() as usize;
    let n_test = t - n_train - n_val;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Validation(format!(
            "degenerate split {n_train}/{n_val}/{n_test} for T={t}"
        )));
    }
    Ok((
        tensor.slice_cols(0, n_train),
        tensor.slice_cols(n_train, n_train + n_val),
        tensor.slice_cols(n_train + n_val, t),
    ))
}

/// One training sample: `x` holds the K intervals strictly before the
/// forecast start, `y` the next M intervals. Values are raw (denormalized).
#[derive(Debug, Clone)]
pub struct WindowSample {
    pub x: Tensor,
    pub y: Tensor,
    pub start: DateTime<Utc>,
}

/// All (X, Y) windows of a tensor. Windows never cross a split boundary
/// because they are built per split.
#[derive(Debug, Clone)]
pub struct WindowedSamples {
    pub k: usize,
    pub m: usize,
    pub samples: Vec<WindowSample>,
}

/// Slide a (K, M) window over the tensor: one sample per valid forecast
/// start, `T - K - M + 1` in total.
pub fn make_windows(tensor: &DemandTensor, k: usize, m: usize) -> Result<WindowedSamples> {
    if k == 0 || m == 0 {
        return Err(Error::Validation("window lengths must be at least 1".into()));
    }
    let t = tensor.t_len();
    if t < k + m {
        return Err(Error::Validation(format!(
            "T={t} is too short for K={k}, M={m} windows"
        )));
    }
    let n = tensor.n_nodes();
    let count = t - k - m + 1;
    let mut samples = Vec::with_capacity(count);
    for s in 0..count {
        let mut x = Tensor::zeros(&[n, k]);
        let mut y = Tensor::zeros(&[n, m]);
        for i in 0..n {
            for j in 0..k {
                x.set2(i, j, tensor.value(i, s + j));
            }
            for j in 0..m {
                y.set2(i, j, tensor.value(i, s + k + j));
            }
        }
        samples.push(WindowSample {
            x,
            y,
            start: tensor.column_time(s + k),
        });
    }
    Ok(WindowedSamples { k, m, samples })
}
