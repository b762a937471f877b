//! Weighted discrete probability measures and their on-disk formats.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{check_dim, Error, Result};

/// Tolerance under which an incoming weight vector is treated as already
/// normalized and stored untouched.
const SIMPLEX_TOL: f64 = 1e-10;

const RAW_MAGIC: &[u8; 4] = b"SWCV";
const RAW_HEADER_LEN: usize = 12;

/// A weighted point set `sum_i w_i * delta(x_i)` in `R^d`.
///
/// Supports are stored row-major, one point per row. Weights always lie on the
/// probability simplex. Duplicate support points are kept as separate atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    supports: Vec<f64>,
    weights: Vec<f64>,
    dim: usize,
}

impl DiscreteMeasure {
    /// Builds a measure from a list of points and optional weights.
    ///
    /// Missing weights default to uniform `1/n`; supplied weights are
    /// normalized to sum to one.
    pub fn from_points<P: AsRef<[f64]>>(points: &[P], weights: Option<&[f64]>) -> Result<Self> {
        let first = points.first().ok_or(Error::Empty("point set"))?;
        let dim = first.as_ref().len();
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
            }
            flat.extend_from_slice(p);
        }
        Self::from_flat(flat, dim, weights.map(|w| w.to_vec()))
    }

    /// Builds a measure from a row-major `n x dim` buffer.
    pub fn from_flat(supports: Vec<f64>, dim: usize, weights: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty("dimension"));
        }
        if supports.is_empty() {
            return Err(Error::Empty("point set"));
        }
        if !supports.len().is_multiple_of(dim) {
            return Err(Error::Format(format!(
                "{} coordinates do not split into rows of length {dim}",
                supports.len()
            )));
        }
        if supports.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let n = supports.len() / dim;
        let weights = match weights {
            None => vec![1.0 / n as f64; n],
            Some(w) => normalize(w, n)?,
        };
        Ok(Self { supports, weights, dim })
    }

    /// Uniform measure over the rows of `supports`.
    pub fn uniform(supports: Vec<f64>, dim: usize) -> Result<Self> {
        Self::from_flat(supports, dim, None)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn supports(&self) -> &[f64] {
        &self.supports
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.supports[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.supports.chunks_exact(self.dim)
    }

    /// Weighted mean `sum_i w_i x_i`.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for (x, &w) in self.points().zip(&self.weights) {
            for (m, &xk) in mean.iter_mut().zip(x) {
                *m += w * xk;
            }
        }
        mean
    }

    /// Weighted spread `sum_i w_i |x_i - center|^2`.
    pub fn spread_about(&self, center: &[f64]) -> f64 {
        self.points()
            .zip(&self.weights)
            .map(|(x, &w)| w * squared_distance(x, center))
            .sum()
    }

    /// Rescales every axis to zero mean and unit (weighted) variance.
    /// Axes with zero variance are only centered.
    pub fn standardized(&self) -> Self {
        let mean = self.mean();
        let mut var = vec![0.0; self.dim];
        for (x, &w) in self.points().zip(&self.weights) {
            for k in 0..self.dim {
                let c = x[k] - mean[k];
                var[k] += w * c * c;
            }
        }
        let scale: Vec<f64> = var.iter().map(|&v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        let supports = self
            .supports
            .iter()
            .enumerate()
            .map(|(idx, &v)| {
                let k = idx % self.dim;
                (v - mean[k]) / scale[k]
            })
            .collect();
        Self { supports, weights: self.weights.clone(), dim: self.dim }
    }

    /// Applies the same per-axis affine map to `self` and `other`, chosen so
    /// that the equal-mass mixture of the two has zero mean and unit variance
    /// on every axis. Unlike standardizing each measure on its own, this keeps
    /// the distance between them meaningful.
    pub fn standardized_with(&self, other: &Self) -> Result<(Self, Self)> {
        check_dim(self.dim, other.dim)?;
        let d = self.dim;
        let (ma, mb) = (self.mean(), other.mean());
        let center: Vec<f64> = ma.iter().zip(&mb).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut var = vec![0.0; d];
        for m in [self, other] {
            for (x, &w) in m.points().zip(&m.weights) {
                for k in 0..d {
                    let c = x[k] - center[k];
                    var[k] += 0.5 * w * c * c;
                }
            }
        }
        let scale: Vec<f64> = var.iter().map(|&v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        let map = |m: &Self| Self {
            supports: m.supports.iter().enumerate().map(|(i, &v)| (v - center[i % d]) / scale[i % d]).collect(),
            weights: m.weights.clone(),
            dim: d,
        };
        Ok((map(self), map(other)))
    }

    /// Same supports, uniform weights.
    pub fn with_uniform_weights(&self) -> Self {
        let n = self.len();
        Self { supports: self.supports.clone(), weights: vec![1.0 / n as f64; n], dim: self.dim }
    }
}

fn normalize(mut w: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    if w.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: w.len() });
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if let Some(i) = w.iter().position(|&v| v < 0.0) {
        return Err(Error::NegativeWeight(i));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroTotalMass);
    }
    if (total - 1.0).abs() > SIMPLEX_TOL {
        for v in &mut w {
            *v /= total;
        }
    }
    Ok(w)
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// On-disk layout of a point set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    /// One point per line, comma-separated reals, no header.
    Csv,
    /// `"SWCV"`, little-endian `u32 n`, `u32 d`, then `n*d` little-endian
    /// doubles in row-major order.
    RawF64,
}

impl DataFormat {
    /// Guesses the format from a file extension; anything but
    /// `.bin`/`.raw`/`.rawf64`/`.swcv` is treated as CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("bin" | "raw" | "rawf64" | "swcv") => DataFormat::RawF64,
            _ => DataFormat::Csv,
        }
    }
}

impl std::str::FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DataFormat::Csv),
            "rawf64" | "raw" => Ok(DataFormat::RawF64),
            other => Err(format!("unknown data format `{other}` (expected csv or rawf64)")),
        }
    }
}

/// A dataset file together with its declared layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetHandle {
    pub path: PathBuf,
    pub format: DataFormat,
    pub dim: usize,
}

impl DatasetHandle {
    pub fn new(path: impl Into<PathBuf>, format: DataFormat, dim: usize) -> Self {
        Self { path: path.into(), format, dim }
    }

    /// Reads the dimension from the file itself (first CSV row or the raw
    /// header) instead of declaring it.
    pub fn detect(path: impl Into<PathBuf>, format: DataFormat) -> Result<Self> {
        let path = path.into();
        let bytes = read_bytes(&path)?;
        let dim = match format {
            DataFormat::Csv => {
                let text = std::str::from_utf8(&bytes).map_err(|e| Error::Format(e.to_string()))?;
                let row = text
                    .lines()
                    .find(|l| !l.trim().is_empty())
                    .ok_or_else(|| Error::EmptyFile(path.clone()))?;
                row.split(',').count()
            }
            DataFormat::RawF64 => {
                if bytes.is_empty() {
                    return Err(Error::EmptyFile(path));
                }
                raw_header(&bytes)?.1
            }
        };
        Ok(Self { path, format, dim })
    }
}

/// Loads a dataset as a uniform measure, preserving row order.
pub fn load(handle: &DatasetHandle) -> Result<DiscreteMeasure> {
    let bytes = read_bytes(&handle.path)?;
    if bytes.is_empty() {
        return Err(Error::EmptyFile(handle.path.clone()));
    }
    let supports = match handle.format {
        DataFormat::Csv => parse_csv(&bytes, handle.dim)?,
        DataFormat::RawF64 => parse_raw(&bytes, handle.dim)?,
    };
    if supports.is_empty() {
        return Err(Error::EmptyFile(handle.path.clone()));
    }
    DiscreteMeasure::uniform(supports, handle.dim)
}

/// Writes the supports of `measure` (weights are not stored).
pub fn save(measure: &DiscreteMeasure, path: &Path, format: DataFormat) -> Result<()> {
    let bytes = match format {
        DataFormat::Csv => {
            let mut out = String::new();
            for x in measure.points() {
                let row: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
            out.into_bytes()
        }
        DataFormat::RawF64 => {
            let n = u32::try_from(measure.len()).map_err(|_| Error::Format("too many points".into()))?;
            let d = u32::try_from(measure.dim()).map_err(|_| Error::Format("dimension too large".into()))?;
            let mut out = Vec::with_capacity(RAW_HEADER_LEN + 8 * measure.supports().len());
            out.extend_from_slice(RAW_MAGIC);
            out.extend_from_slice(&n.to_le_bytes());
            out.extend_from_slice(&d.to_le_bytes());
            for v in measure.supports() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out
        }
    };
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&bytes).map_err(io)?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn parse_csv(bytes: &[u8], dim: usize) -> Result<Vec<f64>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = out.len();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Format(format!("line {}: cannot parse `{}` as a number", lineno + 1, field.trim()))
            })?;
            out.push(v);
        }
        let found = out.len() - before;
        if found != dim {
            return Err(Error::Format(format!(
                "line {}: expected {dim} fields, found {found}",
                lineno + 1
            )));
        }
    }
    Ok(out)
}

fn raw_header(bytes: &[u8]) -> Result<(usize, usize)> {
    if bytes.len() < RAW_HEADER_LEN || &bytes[..4] != RAW_MAGIC {
        return Err(Error::Format("missing SWCV header".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    Ok((n, d))
}

fn parse_raw(bytes: &[u8], dim: usize) -> Result<Vec<f64>> {
    let (n, d) = raw_header(bytes)?;
    if d != dim {
        return Err(Error::Format(format!("header declares d = {d}, expected {dim}")));
    }
    let body = &bytes[RAW_HEADER_LEN..];
    if body.len() != n * d * 8 {
        return Err(Error::Format(format!(
            "payload has {} bytes, header implies {}",
            body.len(),
            n * d * 8
        )));
    }
    Ok(body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}
