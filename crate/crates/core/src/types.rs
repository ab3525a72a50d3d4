//! Datasets, the evaluation grid and prediction intervals.

use crate::error::{invalid, Result};

fn check_rows(features: &[f64], d: usize) -> Result<()> {
    if d == 0 {
        return invalid("feature dimension must be at least 1");
    }
    if !features.len().is_multiple_of(d) {
        return invalid(format!("feature buffer of length {} is not a multiple of d = {d}", features.len()));
    }
    if let Some(v) = features.iter().find(|v| !v.is_finite()) {
        return invalid(format!("non-finite feature value {v}"));
    }
    Ok(())
}

/// Feature vectors stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledDataset {
    d: usize,
    features: Vec<f64>,
}

impl UnlabeledDataset {
    pub fn new(d: usize, features: Vec<f64>) -> Result<Self> {
        check_rows(&features, d)?;
        if features.is_empty() {
            return invalid("unlabeled dataset must be non-empty");
        }
        Ok(Self { d, features })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return invalid("rows have differing dimensions");
        }
        Self::new(d, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.d)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.features
    }
}

/// A supervised sample `(x_i, y_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    d: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl LabeledDataset {
    pub fn new(d: usize, features: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        check_rows(&features, d)?;
        if features.len() / d != labels.len() {
            return invalid(format!("{} feature rows but {} labels", features.len() / d, labels.len()));
        }
        if let Some(v) = labels.iter().find(|v| !v.is_finite()) {
            return invalid(format!("non-finite label {v}"));
        }
        Ok(Self { d, features, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(1, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return invalid("rows have differing dimensions");
        }
        Self::new(d, rows.concat(), labels)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.d)
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.features
    }

    /// Drops the labels.
    pub fn to_unlabeled(&self) -> Result<UnlabeledDataset> {
        UnlabeledDataset::new(self.d, self.features.clone())
    }

    pub fn min_label(&self) -> f64 {
        self.labels.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_label(&self) -> f64 {
        self.labels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Left endpoints `y_k = -s + (k - 1) * 2s / M` of a regular partition of `[-s, s]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    s: f64,
    points: Vec<f64>,
}

impl Grid {
    pub fn new(s: f64, m: usize) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return invalid(format!("grid half-width must be positive and finite, got {s}"));
        }
        if m < 2 {
            return invalid(format!("grid needs at least 2 cells, got {m}"));
        }
        let width = 2.0 * s / m as f64;
        let points = (0..m).map(|k| -s + k as f64 * width).collect();
        Ok(Self { s, points })
    }

    pub fn half_width(&self) -> f64 {
        self.s
    }

    pub fn cells(&self) -> usize {
        self.points.len()
    }

    pub fn cell_width(&self) -> f64 {
        2.0 * self.s / self.points.len() as f64
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

pub fn make_grid(s: f64, m: usize) -> Result<Grid> {
    Grid::new(s, m)
}

/// A closed interval of the real line, possibly empty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PredictionInterval {
    Empty,
    Closed { lower: f64, upper: f64 },
}

impl PredictionInterval {
    /// `[lower, upper]`; empty when `lower > upper`.
    pub fn new(lower: f64, upper: f64) -> Self {
        if lower <= upper {
            PredictionInterval::Closed { lower, upper }
        } else {
            PredictionInterval::Empty
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, PredictionInterval::Empty)
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            PredictionInterval::Empty => None,
            PredictionInterval::Closed { lower, upper } => Some((lower, upper)),
        }
    }

    pub fn length(&self) -> f64 {
        self.bounds().map_or(0.0, |(lo, hi)| (hi - lo).max(0.0))
    }

    pub fn contains(&self, y: f64) -> bool {
        self.bounds().is_some_and(|(lo, hi)| lo <= y && y <= hi)
    }

    pub fn intersect(&self, other: &PredictionInterval) -> PredictionInterval {
        match (self.bounds(), other.bounds()) {
            (Some((a, b)), Some((c, d))) => PredictionInterval::new(a.max(c), b.min(d)),
            _ => PredictionInterval::Empty,
        }
    }

    /// Intersection with `[-s, s]`.
    pub fn clip(&self, s: f64) -> PredictionInterval {
        self.intersect(&PredictionInterval::new(-s, s))
    }
}

pub fn interval_length(iv: &PredictionInterval) -> f64 {
    iv.length()
}
