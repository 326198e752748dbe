//! Confidence intervals for binary outcome probabilities and shared-bin
//! empirical densities.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("{successes} successes out of {n} samples")]
    SuccessesExceedN { successes: u64, n: u64 },
    #[error("sample count must be at least 1")]
    EmptySample,
    #[error("{values} values but {labels} labels")]
    LengthMismatch { values: usize, labels: usize },
    #[error("invalid bin specification: {0}")]
    Bins(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfLevel {
    CL95,
    CL99,
}

impl ConfLevel {
    /// Normal quantile as used in the estimator (two decimals, not re-derived).
    pub fn z(self) -> f64 {
        match self {
            ConfLevel::CL95 => 1.96,
            ConfLevel::CL99 => 2.58,
        }
    }

    /// Upper bound × n of the interval when no event was observed.
    pub fn zero_event_factor(self) -> f64 {
        match self {
            ConfLevel::CL95 => 3.0,
            ConfLevel::CL99 => 4.605,
        }
    }

    pub fn percent(self) -> u32 {
        match self {
            ConfLevel::CL95 => 95,
            ConfLevel::CL99 => 99,
        }
    }
}

impl fmt::Display for ConfLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}%", self.percent())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    Clt,
    ZeroEvent,
    /// No samples were drawn; the interval is the whole of [0, 1].
    Degenerate,
}

/// Below this many samples the interval approximations are unreliable and
/// reports flag the estimate.
pub const SMALL_SAMPLE: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: ConfLevel,
    pub kind: IntervalKind,
    /// `z·σ̂` for CLT intervals; the width of the one-sided bound for
    /// zero-event intervals.
    pub half_width: f64,
    pub n: u64,
}

impl ConfInterval {
    /// Uninformative interval for an estimate backed by no samples.
    pub fn degenerate(level: ConfLevel) -> Self {
        ConfInterval { lower: 0.0, upper: 1.0, level, kind: IntervalKind::Degenerate, half_width: 1.0, n: 0 }
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }

    pub fn small_sample(&self) -> bool {
        self.n < SMALL_SAMPLE
    }

    pub fn overlaps(&self, other: &ConfInterval) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }
}

/// Point estimate of an event probability from `successes` hits in `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryEstimate {
    pub successes: u64,
    pub n: u64,
    pub p_hat: f64,
    /// `√(p̂(1−p̂)/n)`.
    pub sigma_hat: f64,
}

impl BinaryEstimate {
    pub fn new(successes: u64, n: u64) -> Result<Self, StatsError> {
        if n == 0 {
            return Err(StatsError::EmptySample);
        }
        if successes > n {
            return Err(StatsError::SuccessesExceedN { successes, n });
        }
        let p_hat = successes as f64 / n as f64;
        let sigma_hat = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
        Ok(BinaryEstimate { successes, n, p_hat, sigma_hat })
    }

    pub fn ci(&self, level: ConfLevel) -> ConfInterval {
        let n = self.n as f64;
        let zero_event = |lower: f64, upper: f64| ConfInterval {
            lower: lower.max(0.0),
            upper: upper.min(1.0),
            level,
            kind: IntervalKind::ZeroEvent,
            half_width: level.zero_event_factor() / n,
            n: self.n,
        };
        if self.successes == 0 {
            zero_event(0.0, level.zero_event_factor() / n)
        } else if self.successes == self.n {
            zero_event(1.0 - level.zero_event_factor() / n, 1.0)
        } else {
            let h = level.z() * self.sigma_hat;
            ConfInterval {
                lower: (self.p_hat - h).max(0.0),
                upper: (self.p_hat + h).min(1.0),
                level,
                kind: IntervalKind::Clt,
                half_width: h,
                n: self.n,
            }
        }
    }
}

pub fn ci_binary(successes: u64, n: u64, level: ConfLevel) -> Result<ConfInterval, StatsError> {
    Ok(BinaryEstimate::new(successes, n)?.ci(level))
}

/// `(lower, p̂, upper)` with the interval clamped to [0, 1].
pub fn ci_boundary_triplet(successes: u64, n: u64, level: ConfLevel) -> Result<(f64, f64, f64), StatsError> {
    let est = BinaryEstimate::new(successes, n)?;
    let ci = est.ci(level);
    Ok((ci.lower, est.p_hat, ci.upper))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bins {
    /// Width `2·IQR/n^(1/3)`; falls back to Sturges' rule when the IQR is 0.
    FreedmanDiaconis,
    Count(usize),
    Width(f64),
}

/// Refuse to allocate absurd bin counts from heavy-tailed data.
const MAX_BINS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassDensity<L> {
    pub label: L,
    pub count: usize,
    pub counts: Vec<usize>,
    /// Per-bin density, normalised by the total sample count so a class
    /// integrates to its sample fraction.
    pub density: Vec<f64>,
}

/// Densities of several classes over one set of bin edges.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram<L> {
    pub edges: Vec<f64>,
    pub total: Vec<f64>,
    pub classes: Vec<ClassDensity<L>>,
    /// Finite values binned.
    pub n: usize,
}

impl<L> Histogram<L> {
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bin_count(&self) -> usize {
        self.total.len()
    }

    pub fn width(&self, bin: usize) -> f64 {
        self.edges[bin + 1] - self.edges[bin]
    }

    /// `Σ width × density` of the combined density (1 for non-empty input).
    pub fn integral(&self) -> f64 {
        self.total.iter().enumerate().map(|(k, d)| d * self.width(k)).sum()
    }

    pub fn class(&self, label: &L) -> Option<&ClassDensity<L>>
    where
        L: PartialEq,
    {
        self.classes.iter().find(|c| &c.label == label)
    }
}

impl<L: fmt::Display> Histogram<L> {
    /// One row per bin: edges, per-class counts, combined density, then
    /// per-class densities.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        write!(w, "bin_left,bin_right")?;
        for c in &self.classes {
            write!(w, ",count_{}", c.label)?;
        }
        write!(w, ",density_total")?;
        for c in &self.classes {
            write!(w, ",density_{}", c.label)?;
        }
        writeln!(w)?;
        for k in 0..self.bin_count() {
            write!(w, "{},{}", self.edges[k], self.edges[k + 1])?;
            for c in &self.classes {
                write!(w, ",{}", c.counts[k])?;
            }
            write!(w, ",{}", self.total[k])?;
            for c in &self.classes {
                write!(w, ",{}", c.density[k])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn edges_for(sorted: &[f64], bins: Bins) -> Result<Vec<f64>, StatsError> {
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo == hi {
        return Ok(vec![lo - 0.5, lo + 0.5]);
    }
    let range = hi - lo;
    let count = match bins {
        Bins::Count(0) => return Err(StatsError::Bins("bin count must be positive".into())),
        Bins::Count(k) => k,
        Bins::Width(w) if !(w > 0.0) || !w.is_finite() => {
            return Err(StatsError::Bins(format!("bin width must be positive, got {w}")))
        }
        Bins::Width(w) => (range / w).ceil() as usize,
        Bins::FreedmanDiaconis => {
            let iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
            let w = 2.0 * iqr / (sorted.len() as f64).cbrt();
            if w > 0.0 {
                (range / w).ceil() as usize
            } else {
                (sorted.len() as f64).log2().ceil() as usize + 1
            }
        }
    };
    let count = count.clamp(1, MAX_BINS);
    let width = range / count as f64;
    let mut edges: Vec<f64> = (0..count).map(|k| lo + width * k as f64).collect();
    edges.push(hi);
    Ok(edges)
}

/// Empirical densities of `values` split by `labels` over shared bins.
/// Non-finite values are ignored. Classes appear in first-seen order.
pub fn histogram<L: Clone + PartialEq>(values: &[f64], labels: &[L], bins: Option<Bins>) -> Result<Histogram<L>, StatsError> {
    if values.len() != labels.len() {
        return Err(StatsError::LengthMismatch { values: values.len(), labels: labels.len() });
    }
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return Ok(Histogram { edges: Vec::new(), total: Vec::new(), classes: Vec::new(), n: 0 });
    }
    sorted.sort_by(f64::total_cmp);
    let edges = edges_for(&sorted, bins.unwrap_or(Bins::FreedmanDiaconis))?;
    let nbins = edges.len() - 1;
    let lo = edges[0];
    let width = (edges[nbins] - lo) / nbins as f64;
    let n = sorted.len();

    let mut counts: Vec<(L, usize, Vec<usize>)> = Vec::new();
    for (v, label) in values.iter().zip(labels) {
        if !v.is_finite() {
            continue;
        }
        let bin = (((v - lo) / width) as usize).min(nbins - 1);
        let slot = match counts.iter().position(|c| &c.0 == label) {
            Some(i) => i,
            None => {
                counts.push((label.clone(), 0, vec![0; nbins]));
                counts.len() - 1
            }
        };
        counts[slot].1 += 1;
        counts[slot].2[bin] += 1;
    }
    let widths: Vec<f64> = edges.windows(2).map(|e| e[1] - e[0]).collect();
    let classes: Vec<ClassDensity<L>> = counts
        .into_iter()
        .map(|(label, count, bins)| ClassDensity {
            label,
            count,
            density: bins.iter().zip(&widths).map(|(c, w)| *c as f64 / (n as f64 * w)).collect(),
            counts: bins,
        })
        .collect();
    let total = (0..nbins).map(|k| classes.iter().map(|c| c.density[k]).sum()).collect();
    Ok(Histogram { edges, total, classes, n })
}
