use std::io::Write;

use super::{MetricsError, Result};

/// Shannon entropy in bits of a histogram given as raw counts.
pub fn entropy(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(MetricsError::EmptyHistogram);
    }
    let total = total as f64;
    let h = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

/// Joint histogram of `(x, y)` pairs. `counts[i][j]` holds the pairs with `x`
/// in bin `i` and `y` in bin `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram2D {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    pub counts: Vec<Vec<u64>>,
    pub total: u64,
}

fn equal_width_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    edges[bins] = hi;
    edges
}

fn bin_of(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if v >= hi {
        return bins - 1;
    }
    let i = ((v - lo) / (hi - lo) * bins as f64).floor() as usize;
    i.min(bins - 1)
}

impl Histogram2D {
    /// Bins both series on the same `bins` equal-width edges over their
    /// combined range. A zero-width range is widened to one unit.
    pub fn from_pairs(xs: &[f64], ys: &[f64], bins: usize) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
        }
        if bins == 0 {
            return Err(MetricsError::InvalidBins);
        }
        if xs.is_empty() {
            return Err(MetricsError::EmptyHistogram);
        }
        if xs.iter().chain(ys).any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
        let lo = xs.iter().chain(ys).copied().fold(f64::INFINITY, f64::min);
        let mut hi = xs.iter().chain(ys).copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            hi = lo + 1.0;
        }
        let mut counts = vec![vec![0u64; bins]; bins];
        for (&x, &y) in xs.iter().zip(ys) {
            counts[bin_of(x, lo, hi, bins)][bin_of(y, lo, hi, bins)] += 1;
        }
        let edges = equal_width_edges(lo, hi, bins);
        Ok(Self {
            x_edges: edges.clone(),
            y_edges: edges,
            counts,
            total: xs.len() as u64,
        })
    }

    /// Wraps a raw count grid with unit-spaced edges.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let rows = counts.len();
        let cols = counts.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 || counts.iter().any(|r| r.len() != cols) {
            return Err(MetricsError::Shape(format!("{rows} rows, ragged or empty columns")));
        }
        let total = counts.iter().flatten().sum();
        Ok(Self {
            x_edges: (0..=rows).map(|i| i as f64).collect(),
            y_edges: (0..=cols).map(|j| j as f64).collect(),
            counts,
            total,
        })
    }

    pub fn x_marginal(&self) -> Vec<u64> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn y_marginal(&self) -> Vec<u64> {
        let cols = self.counts.first().map_or(0, Vec::len);
        (0..cols).map(|j| self.counts.iter().map(|row| row[j]).sum()).collect()
    }
}

/// `H(X|Y)` in bits.
pub fn conditional_entropy(joint: &Histogram2D) -> Result<f64> {
    if joint.total == 0 {
        return Err(MetricsError::EmptyHistogram);
    }
    let total = joint.total as f64;
    let py = joint.y_marginal();
    let mut h = 0.0;
    for row in &joint.counts {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let pxy = c as f64 / total;
                let px_given_y = c as f64 / py[j] as f64;
                h -= pxy * px_given_y.log2();
            }
        }
    }
    Ok(h.max(0.0))
}

/// `H(X|Y) / H(X)` clamped to `[0, 1]`.
pub fn nce_from_joint(joint: &Histogram2D) -> Result<f64> {
    let hx = entropy(&joint.x_marginal())?;
    if hx <= 0.0 {
        return Err(MetricsError::UndefinedMetric);
    }
    Ok((conditional_entropy(joint)? / hx).clamp(0.0, 1.0))
}

/// Normalized conditional entropy of `original` given `perturbed`.
pub fn nce(original: &[f64], perturbed: &[f64], bins: usize) -> Result<f64> {
    nce_from_joint(&Histogram2D::from_pairs(original, perturbed, bins)?)
}

/// `sigma_scale,nce`
pub fn write_nce_csv<W: Write>(rows: &[(String, f64)], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sigma_scale", "nce"])?;
    for (scale, v) in rows {
        w.write_record([scale.clone(), format!("{v:.6}")])?;
    }
    w.flush()?;
    Ok(())
}
