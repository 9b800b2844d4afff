//! Boundary data on the curve.

use std::path::Path;

use crate::curve::PolylineCurve;
use crate::geom::Point3;
use crate::modulus::Modulus;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("boundary table needs at least 2 rows with increasing arc parameter")]
    BadTable,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A function on the curve, evaluated by arc-length parameter.
#[derive(Clone, Debug)]
pub enum BoundaryData {
    /// `f ≡ c`.
    Constant(f64),
    /// `f(M) = f₀*(M.x)`, the primitive of the modulus applied to the first coordinate.
    PrimitiveTrace(Modulus),
    /// Trace of the harmonic polynomial `x² − z²`.
    HarmonicTrace,
    /// Trace of the affine function `a·M + b`.
    Affine { a: Point3, b: f64 },
    /// Samples `(s, f)` interpolated linearly in `s`.
    Samples { s: Vec<f64>, f: Vec<f64> },
}

impl BoundaryData {
    pub fn samples(s: Vec<f64>, f: Vec<f64>) -> Result<Self, DataError> {
        if s.len() < 2 || s.len() != f.len() || s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DataError::BadTable);
        }
        Ok(BoundaryData::Samples { s, f })
    }

    /// Two-column text `(arc parameter, value)`.
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)?;
        let (mut s, mut f) = (Vec::new(), Vec::new());
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 2 {
                return Err(DataError::Parse { line: i + 1, message: "expected 2 columns".into() });
            }
            let p = |c: &str| c.parse::<f64>().map_err(|e| DataError::Parse { line: i + 1, message: e.to_string() });
            s.push(p(cols[0])?);
            f.push(p(cols[1])?);
        }
        Self::samples(s, f)
    }

    /// Value at the point of `curve` with arc parameter `s`.
    pub fn at_arc(&self, curve: &PolylineCurve, s: f64) -> f64 {
        match self {
            BoundaryData::Samples { s: ss, f } => {
                let n = ss.len();
                if s <= ss[0] {
                    return f[0];
                }
                if s >= ss[n - 1] {
                    return f[n - 1];
                }
                let i = ss.partition_point(|&v| v <= s) - 1;
                let t = (s - ss[i]) / (ss[i + 1] - ss[i]);
                f[i] + t * (f[i + 1] - f[i])
            }
            _ => self.at_point(curve.point_at(s)),
        }
    }

    /// Value of the defining ambient function; sample tables have none and return NaN.
    pub fn at_point(&self, m: Point3) -> f64 {
        match self {
            BoundaryData::Constant(c) => *c,
            BoundaryData::PrimitiveTrace(w) => w.primitive(m.x),
            BoundaryData::HarmonicTrace => m.x * m.x - m.z * m.z,
            BoundaryData::Affine { a, b } => a.dot(m) + b,
            BoundaryData::Samples { .. } => f64::NAN,
        }
    }
}
