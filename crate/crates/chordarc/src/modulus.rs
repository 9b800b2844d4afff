//! Moduli of continuity, the two integral regularity conditions, and the primitive `f₀*`.
//!
//! The conditions checked are
//! `∫₀ˣ ω(t)/t dt ≤ C′ω(x)` and `x∫ₓ^∞ ω(t)/t² dt ≤ C″ω(x)`.
//! Beyond the domain cap `T` the modulus is extended by the constant `ω(T)`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum ModulusError {
    #[error("alpha must lie in (0,1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("domain cap must be positive and finite, got {0}")]
    InvalidDomain(f64),
    #[error("modulus table must have at least 2 rows")]
    TableTooShort,
    #[error("modulus table is not increasing in t or nondecreasing in omega at row {0}")]
    TableNotMonotone(usize),
    #[error("first integral condition diverges at x = {x} (ratio {ratio})")]
    DiniDivergence { x: f64, ratio: f64 },
    #[error("verification grid must have >= 32 points in (0,T] spanning >= 6 decades")]
    BadGrid,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Functional form of ω on `[0, T]`.
#[derive(Clone)]
pub enum Family {
    /// `t^α`.
    Power { alpha: f64 },
    /// `t^α (1 + ln(T/t))^β` with `0 ≤ β ≤ α`.
    PowerLog { alpha: f64, beta: f64 },
    /// Monotone samples, interpolated linearly in `(ln t, ln ω)`.
    Table { t: Vec<f64>, w: Vec<f64> },
    /// Arbitrary evaluator, used as given on `[0, ∞)`.
    Custom { name: String, f: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Power { alpha } => write!(f, "power(alpha={alpha})"),
            Family::PowerLog { alpha, beta } => write!(f, "power_log(alpha={alpha}, beta={beta})"),
            Family::Table { t, .. } => write!(f, "table({} rows)", t.len()),
            Family::Custom { name, .. } => write!(f, "custom({name})"),
        }
    }
}

/// Constants measured by [`Modulus::verify_dini`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiniReport {
    /// Max over the grid of `(∫₀ˣ ω/t)/ω(x)`.
    pub c_prime: f64,
    /// Max over the grid of `(x∫ₓ^∞ ω/t²)/ω(x)` with the constant tail beyond `T`.
    pub c_double_prime: f64,
    /// Same ratio without the cap, using the family formula beyond `T`; `None` if it diverges.
    pub c_double_prime_uncapped: Option<f64>,
}

/// A modulus of continuity on `[0, T]`.
#[derive(Clone, Debug)]
pub struct Modulus {
    family: Family,
    t_max: f64,
    /// `C′` of the first condition.
    pub dini_constant: f64,
    /// `C″` of the second condition.
    pub decay_constant: f64,
}

/// Upper bound on `C′` beyond which the first condition is reported as divergent.
pub const DINI_BOUND: f64 = 1e6;

/// Universal lower constant in `f₀*(x) ≥ Ĉ′ω(x)`: `ω(x/2)ln2 ≥ (ln2/2)ω(x)` by subadditivity.
pub const PRIMITIVE_LOWER_CONSTANT: f64 = std::f64::consts::LN_2 / 2.0;

const REL_TOL: f64 = 1e-10;

impl Modulus {
    /// `ω(t) = t^α` with the analytic constants `C′ = 1/α`, `C″ = 1/(1−α)`.
    pub fn power(alpha: f64, t_max: f64) -> Result<Self, ModulusError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ModulusError::AlphaOutOfRange(alpha));
        }
        check_domain(t_max)?;
        Ok(Modulus {
            family: Family::Power { alpha },
            t_max,
            dini_constant: 1.0 / alpha,
            decay_constant: 1.0 / (1.0 - alpha),
        })
    }

    /// `ω(t) = t^α (1 + ln(T/t))^β`; constants are filled in by verification.
    pub fn power_log(alpha: f64, beta: f64, t_max: f64) -> Result<Self, ModulusError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ModulusError::AlphaOutOfRange(alpha));
        }
        check_domain(t_max)?;
        let mut m = Modulus { family: Family::PowerLog { alpha, beta: beta.clamp(0.0, alpha) }, t_max, dini_constant: 0.0, decay_constant: 0.0 };
        m.fill_constants()?;
        Ok(m)
    }

    /// Table modulus; rows must have increasing `t > 0` and nondecreasing positive `ω`.
    pub fn table(t: Vec<f64>, w: Vec<f64>) -> Result<Self, ModulusError> {
        if t.len() < 2 || t.len() != w.len() {
            return Err(ModulusError::TableTooShort);
        }
        for i in 0..t.len() {
            let bad = !(t[i] > 0.0 && w[i] > 0.0 && t[i].is_finite() && w[i].is_finite())
                || (i > 0 && (t[i] <= t[i - 1] || w[i] < w[i - 1]));
            if bad {
                return Err(ModulusError::TableNotMonotone(i));
            }
        }
        let t_max = *t.last().unwrap();
        let mut m = Modulus { family: Family::Table { t, w }, t_max, dini_constant: 0.0, decay_constant: 0.0 };
        m.fill_constants()?;
        Ok(m)
    }

    /// Two-column text table `(t, ω(t))`, `#` comments allowed.
    pub fn load_table(path: &Path) -> Result<Self, ModulusError> {
        let text = std::fs::read_to_string(path)?;
        let (mut t, mut w) = (Vec::new(), Vec::new());
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: Vec<&str> = line.split_whitespace().collect();
            let parse = |s: &str| s.parse::<f64>().map_err(|e| ModulusError::Parse { line: i + 1, message: e.to_string() });
            if v.len() != 2 {
                return Err(ModulusError::Parse { line: i + 1, message: "expected 2 columns".into() });
            }
            t.push(parse(v[0])?);
            w.push(parse(v[1])?);
        }
        Self::table(t, w)
    }

    /// Arbitrary evaluator without verified constants; call [`Modulus::verify_dini`] to measure them.
    pub fn custom(name: &str, t_max: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self, ModulusError> {
        check_domain(t_max)?;
        Ok(Modulus {
            family: Family::Custom { name: name.to_string(), f: Arc::new(f) },
            t_max,
            dini_constant: f64::NAN,
            decay_constant: f64::NAN,
        })
    }

    fn fill_constants(&mut self) -> Result<(), ModulusError> {
        let rep = self.verify_dini(&geometric_grid(self.t_max, 8.0, 64))?;
        self.dini_constant = rep.c_prime;
        self.decay_constant = rep.c_double_prime;
        Ok(())
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Domain cap `T`.
    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// `ω(t)` for `t ∈ [0, T]`, `ω(T)` beyond.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.eval_raw(t.min(self.t_max))
    }

    // Family formula, also used past T for the uncapped tail.
    fn eval_raw(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match &self.family {
            Family::Power { alpha } => t.powf(*alpha),
            Family::PowerLog { alpha, beta } => t.powf(*alpha) * (1.0 + (self.t_max / t).ln().max(0.0)).powf(*beta),
            Family::Table { t: ts, w } => table_interp(ts, w, t),
            Family::Custom { f, .. } => f(t),
        }
    }

    /// `f₀*(x) = ∫₀^|x| ω(t)/t dt`; closed form for the power family.
    pub fn primitive(&self, x: f64) -> f64 {
        let x = x.abs();
        if let Family::Power { alpha } = self.family {
            if x <= self.t_max {
                return x.powf(alpha) / alpha;
            }
            return self.t_max.powf(alpha) / alpha + self.eval(self.t_max) * (x / self.t_max).ln();
        }
        self.primitive_quadrature(x)
    }

    /// `f₀*` by adaptive quadrature regardless of family.
    pub fn primitive_quadrature(&self, x: f64) -> f64 {
        let x = x.abs();
        if x == 0.0 {
            return 0.0;
        }
        let inner = x.min(self.t_max);
        let head = lower_integral(|t| self.eval(t), inner).unwrap_or(f64::INFINITY);
        head + if x > self.t_max { self.eval(self.t_max) * (x / self.t_max).ln() } else { 0.0 }
    }

    /// Measures `C′`, `C″` over `grid` (points in `(0, T]`).
    pub fn verify_dini(&self, grid: &[f64]) -> Result<DiniReport, ModulusError> {
        if grid.len() < 32 || grid.iter().any(|&x| !(x > 0.0 && x <= self.t_max * (1.0 + 1e-12))) {
            return Err(ModulusError::BadGrid);
        }
        let lo = grid.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = grid.iter().cloned().fold(0.0, f64::max);
        if (hi / lo).log10() < 6.0 - 1e-9 {
            return Err(ModulusError::BadGrid);
        }
        let mut rep = DiniReport { c_prime: 0.0, c_double_prime: 0.0, c_double_prime_uncapped: Some(0.0) };
        for &x in grid {
            let w = self.eval(x);
            let first = lower_integral(|t| self.eval(t), x);
            let ratio = first.map_or(f64::INFINITY, |v| v / w);
            if !(ratio <= DINI_BOUND) {
                return Err(ModulusError::DiniDivergence { x, ratio });
            }
            rep.c_prime = rep.c_prime.max(ratio);
            rep.c_double_prime = rep.c_double_prime.max(self.decay_capped(x) / w);
            rep.c_double_prime_uncapped = match (rep.c_double_prime_uncapped, upper_integral(|t| self.eval_raw(t), x)) {
                (Some(c), Some(v)) => Some(c.max(v / w)),
                _ => None,
            };
        }
        Ok(rep)
    }

    /// `x∫ₓ^T ω/t² dt + x·ω(T)/T`.
    fn decay_capped(&self, x: f64) -> f64 {
        let u_max = (self.t_max / x).ln();
        // t = x·e^u turns x∫ω/t² dt into ∫ω(x e^u) e^{-u} du.
        let body = blocked_integral(|u| self.eval(x * u.exp()) * (-u).exp(), 0.0, u_max);
        body + x * self.eval(self.t_max) / self.t_max
    }
}

fn check_domain(t_max: f64) -> Result<(), ModulusError> {
    if t_max > 0.0 && t_max.is_finite() {
        Ok(())
    } else {
        Err(ModulusError::InvalidDomain(t_max))
    }
}

fn table_interp(ts: &[f64], w: &[f64], t: f64) -> f64 {
    let n = ts.len();
    let i = match ts.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
        Ok(i) => return w[i],
        Err(0) => 0,
        Err(i) if i >= n => n - 2,
        Err(i) => i - 1,
    };
    let (t0, t1, w0, w1) = (ts[i].ln(), ts[i + 1].ln(), w[i].ln(), w[i + 1].ln());
    (w0 + (w1 - w0) * (t.ln() - t0) / (t1 - t0)).exp()
}

/// `∫_a^b f` by double-exponential quadrature on unit blocks.
fn blocked_integral(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    let mut lo = a;
    while lo < b {
        let hi = (lo + 1.0).min(b);
        let scale = f(lo).abs().max(f(hi).abs()).max(f64::MIN_POSITIVE);
        total += quadrature::integrate(&f, lo, hi, REL_TOL * scale).integral;
        lo = hi;
    }
    total
}

/// `∫₀ˣ ω(t)/t dt` as `∫₀^∞ ω(x e^{-u}) du`, summed over doubling blocks; `None` if the tail does not settle.
fn lower_integral(omega: impl Fn(f64) -> f64, x: f64) -> Option<f64> {
    doubling_tail(|u| omega(x * (-u).exp()), (x / f64::MIN_POSITIVE).ln())
}

/// `x∫ₓ^∞ ω(t)/t² dt` as `∫₀^∞ ω(x e^u) e^{-u} du`; `None` if it diverges.
fn upper_integral(omega: impl Fn(f64) -> f64, x: f64) -> Option<f64> {
    doubling_tail(|u| omega(x * u.exp()) * (-u).exp(), (f64::MAX / x).ln().min(700.0))
}

fn doubling_tail(g: impl Fn(f64) -> f64, u_limit: f64) -> Option<f64> {
    let mut total = blocked_integral(&g, 0.0, 1.0);
    let mut lo = 1.0;
    loop {
        let hi = 2.0 * lo;
        if hi > u_limit {
            return None;
        }
        let block = blocked_integral(&g, lo, hi);
        total += block;
        if block.abs() <= 1e-12 * total.abs() {
            return Some(total);
        }
        lo = hi;
    }
}

/// `count` points spaced geometrically over `decades` decades ending at `t_max`.
pub fn geometric_grid(t_max: f64, decades: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| t_max * 10f64.powf(-decades * (1.0 - i as f64 / (count - 1) as f64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_examples() {
        let m = Modulus::power(0.5, 4.0).unwrap();
        assert_eq!(m.eval(0.25), 0.5);
        assert_eq!(m.dini_constant, 2.0);
        assert!((Modulus::power(0.9, 4.0).unwrap().decay_constant - 10.0).abs() < 1e-12);
        assert!(matches!(Modulus::power(1.0, 4.0), Err(ModulusError::AlphaOutOfRange(_))));
        assert!(matches!(Modulus::power(0.0, 4.0), Err(ModulusError::AlphaOutOfRange(_))));
    }

    #[test]
    fn sqrt_constants_within_one_percent() {
        let m = Modulus::power(0.5, 4.0).unwrap();
        let rep = m.verify_dini(&geometric_grid(4.0, 8.0, 64)).unwrap();
        assert!((rep.c_prime - 2.0).abs() < 0.02, "{rep:?}");
        assert!((rep.c_double_prime - 2.0).abs() < 0.02, "{rep:?}");
        let m3 = Modulus::power(0.3, 1.0).unwrap();
        let rep = m3.verify_dini(&geometric_grid(1.0, 7.0, 40)).unwrap();
        assert!((rep.c_prime - 10.0 / 3.0).abs() < 1e-6, "{rep:?}");
    }

    #[test]
    fn linear_modulus_tail_diverges_without_cap() {
        let m = Modulus::custom("t", 1.0, |t| t).unwrap();
        let rep = m.verify_dini(&geometric_grid(1.0, 6.0, 32)).unwrap();
        assert!((rep.c_prime - 1.0).abs() < 1e-8);
        // With the cap the ratio is 1 + ln(T/x), largest at x = 1e-6.
        assert!((rep.c_double_prime - (1.0 + 1e6f64.ln())).abs() < 1e-6, "{rep:?}");
        assert!(rep.c_double_prime_uncapped.is_none());
    }

    #[test]
    fn log_modulus_fails_first_condition() {
        let m = Modulus::custom("1/log(1/t)", 0.5, |t| 1.0 / (1.0 / t).ln()).unwrap();
        let err = m.verify_dini(&geometric_grid(0.5, 6.0, 32)).unwrap_err();
        assert!(matches!(err, ModulusError::DiniDivergence { .. }));
    }

    #[test]
    fn primitive_examples() {
        let m = Modulus::power(0.5, 4.0).unwrap();
        assert_eq!(m.primitive(0.25), 1.0);
        assert_eq!(m.primitive(0.0), 0.0);
        assert_eq!(m.primitive(-0.25), 1.0);
        for &x in &[1e-6, 1e-3, 0.25, 1.0, 3.9] {
            let q = m.primitive_quadrature(x);
            assert!((q - 2.0 * f64::sqrt(x)).abs() <= 1e-6 * q, "{x} {q}");
        }
    }

    #[test]
    fn table_modulus_matches_power() {
        let ts: Vec<f64> = geometric_grid(4.0, 10.0, 200);
        let ws: Vec<f64> = ts.iter().map(|t| t.sqrt()).collect();
        let m = Modulus::table(ts, ws).unwrap();
        assert!((m.eval(0.3) - 0.3f64.sqrt()).abs() < 1e-12);
        assert!((m.dini_constant - 2.0).abs() < 0.01);
        assert!(matches!(Modulus::table(vec![1.0, 0.5], vec![1.0, 2.0]), Err(ModulusError::TableNotMonotone(1))));
    }

    #[test]
    fn power_log_is_admissible() {
        let m = Modulus::power_log(0.5, 0.5, 1.0).unwrap();
        assert!(m.dini_constant.is_finite() && m.dini_constant > 2.0);
        assert!(m.eval(1e-3) > m.eval(1e-4));
    }
}
