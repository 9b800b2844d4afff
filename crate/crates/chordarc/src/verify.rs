//! Certification harness.
//!
//! Scaling reports for the approximants (curve error, shell gradient), mean-value
//! harmonicity probes, extension and reconstruction certificates, and the table of second
//! differences behind the non-approximability example.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::approximant::HarmonicApproximant;
use crate::curve::PolylineCurve;
use crate::extension::{distance::slab_d0, BoundaryData, ExtensionError, ExtensionField, Stage};
use crate::geom::Point3;
use crate::modulus::{Modulus, PRIMITIVE_LOWER_CONSTANT};
use crate::potential::{ChargeCloud, EvalMode, PotentialError};
use crate::quad::SphereRule;

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("shell rejection sampling accepted {acceptance:e} of the draws")]
    ShellSamplingFailure { acceptance: f64 },
    #[error("invalid sequence: {0}")]
    SequenceInvalid(String),
    #[error(transparent)]
    Extension(#[from] ExtensionError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// Smallest acceptance rate tolerated by the rejection samplers.
pub const MIN_ACCEPTANCE: f64 = 1e-3;

/// Relative slack of the sampled maximum-principle comparison.
pub const MAX_PRINCIPLE_SLACK: f64 = 1e-2;

/// Normalization floor for mean-value residuals, relative to the data range.
pub const OSCILLATION_FLOOR: f64 = 1e-12;

/// Sample counts, spread bound and evaluation mode shared by the certificates.
#[derive(Clone, Copy, Debug)]
pub struct CertifySettings {
    pub curve_samples: usize,
    pub shell_samples: usize,
    pub harmonic_trials: usize,
    pub spread_bound: f64,
    pub mode: EvalMode,
    pub seed: u64,
}

impl Default for CertifySettings {
    fn default() -> Self {
        CertifySettings {
            curve_samples: 1024,
            shell_samples: 8192,
            harmonic_trials: 200,
            spread_bound: 3.0,
            mode: EvalMode::Direct,
            seed: 1,
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One row of a scaling table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelRow {
    pub n: usize,
    pub delta: f64,
    pub raw: f64,
    pub normalized: f64,
}

/// Per-level values of one quantity and the spread of their normalized ratios.
#[derive(Clone, Debug)]
pub struct ScalingReport {
    pub quantity: String,
    pub rows: Vec<LevelRow>,
    /// Largest normalized ratio, the fitted constant.
    pub constant: f64,
    /// `max/min` of the normalized ratios (1 when all vanish).
    pub spread: f64,
    pub bound: f64,
    pub pass: bool,
}

impl ScalingReport {
    pub fn new(quantity: &str, rows: Vec<LevelRow>, bound: f64) -> Self {
        let finite = rows.iter().all(|r| r.normalized.is_finite() && r.raw.is_finite());
        let max = rows.iter().map(|r| r.normalized).fold(0.0, f64::max);
        let min = rows.iter().map(|r| r.normalized).fold(f64::INFINITY, f64::min);
        let spread = if rows.is_empty() || max <= 1e-12 { 1.0 } else { max / min };
        ScalingReport { quantity: quantity.into(), pass: finite && spread <= bound, rows, constant: max, spread, bound }
    }

    /// CSV with a header comment naming the quantity and columns.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# {}: columns n, delta, raw, normalized\nn,delta,raw,normalized\n", self.quantity);
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.12e},{:.12e},{:.12e}", r.n, r.delta, r.raw, r.normalized);
        }
        s
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} {}: spread {:.3} (bound {}), constant {:.4e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.quantity,
            self.spread,
            self.bound,
            self.constant
        )
    }
}

/// `count ≥ 2` points at equal arc spacing, endpoints included.
pub fn curve_samples(curve: &PolylineCurve, count: usize) -> Vec<(f64, Point3)> {
    let len = curve.total_length();
    (0..count)
        .map(|i| {
            let s = len * i as f64 / (count - 1) as f64;
            (s, curve.point_at(s))
        })
        .collect()
}

/// Range of the data over `count` curve samples.
pub fn data_range(curve: &PolylineCurve, data: &BoundaryData, count: usize) -> f64 {
    let v: Vec<f64> = curve_samples(curve, count).iter().map(|&(s, _)| data.at_arc(curve, s)).collect();
    v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Point3 {
    loop {
        let p = Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let r2 = p.norm2();
        if r2 > 1e-6 && r2 <= 1.0 {
            return p / r2.sqrt();
        }
    }
}

/// Points with `inner ≤ d(M) < outer`, drawn uniformly in balls of radius `outer` around
/// arc points and kept when they land in the shell. Sample `i` takes its arc point from the
/// `i`-th of `count` equal strata.
pub fn tube_samples(
    curve: &PolylineCurve,
    inner: f64,
    outer: f64,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Point3>, VerifyError> {
    let len = curve.total_length();
    let mut out = Vec::with_capacity(count);
    let mut draws = 0usize;
    while out.len() < count {
        draws += 1;
        let stratum = out.len() as f64;
        let p = curve.point_at(len * (stratum + rng.gen::<f64>()) / count as f64);
        let m = p + unit_vector(rng) * (outer * rng.gen::<f64>().cbrt());
        let d = curve.distance(m);
        if d >= inner && d < outer {
            out.push(m);
        }
        if draws >= 1000 && (out.len() as f64) < MIN_ACCEPTANCE * draws as f64 {
            return Err(VerifyError::ShellSamplingFailure { acceptance: out.len() as f64 / draws as f64 });
        }
    }
    Ok(out)
}

/// `E(n) = max |v(M) − f(M)|` over curve samples, normalized by `ω(2⁻ⁿ)`.
pub fn certify_direct(
    approximants: &[HarmonicApproximant],
    curve: &PolylineCurve,
    data: &BoundaryData,
    omega: &Modulus,
    settings: &CertifySettings,
) -> ScalingReport {
    let samples = curve_samples(curve, settings.curve_samples.max(256));
    let rows = approximants
        .iter()
        .map(|v| {
            let raw = samples
                .par_iter()
                .map(|&(s, m)| (v.value(m, settings.mode) - data.at_arc(curve, s)).abs())
                .reduce(|| 0.0, f64::max);
            let delta = 2f64.powi(-(v.n as i32));
            LevelRow { n: v.n, delta, raw, normalized: raw / omega.eval(delta) }
        })
        .collect();
    ScalingReport::new("direct", rows, settings.spread_bound)
}

/// Shell gradient report and the sampled maximum-principle comparison.
#[derive(Clone, Debug)]
pub struct GradientReport {
    pub scaling: ScalingReport,
    /// Largest `|∇v|` over samples of `Ω_{δ/2}` per level.
    pub interior_max: Vec<f64>,
    pub max_principle: bool,
}

/// `G(n) = max |∇v|` over the shell `Ω_δ \ Ω_{δ/2}`, `δ = 2⁻ⁿ`, normalized by `ω(δ)/δ`.
pub fn certify_gradient(
    approximants: &[HarmonicApproximant],
    curve: &PolylineCurve,
    omega: &Modulus,
    settings: &CertifySettings,
) -> Result<GradientReport, VerifyError> {
    let count = settings.shell_samples.max(512);
    let mut rows = Vec::new();
    let mut interior_max = Vec::new();
    let mut max_principle = true;
    for v in approximants {
        let delta = 2f64.powi(-(v.n as i32));
        let mut rng = rng_for(settings.seed, 0x6700 + v.n as u64);
        let shell = tube_samples(curve, delta / 2.0, delta, count, &mut rng)?;
        let inner = tube_samples(curve, 0.0, delta / 2.0, count, &mut rng)?;
        let max_grad = |pts: &[Point3]| pts.par_iter().map(|m| v.gradient(*m, settings.mode).norm()).reduce(|| 0.0, f64::max);
        let g = max_grad(&shell);
        let gi = max_grad(&inner);
        max_principle &= gi <= (1.0 + MAX_PRINCIPLE_SLACK) * g;
        interior_max.push(gi);
        rows.push(LevelRow { n: v.n, delta, raw: g, normalized: g * delta / omega.eval(delta) });
    }
    Ok(GradientReport { scaling: ScalingReport::new("gradient", rows, settings.spread_bound), interior_max, max_principle })
}

/// `|avg_{∂B_r(c)} f − f(c)| / max(oscillation on the sphere, floor)`.
pub fn mean_value_residual(f: impl Fn(Point3) -> f64, center: Point3, r: f64, rule: &SphereRule, floor: f64) -> f64 {
    let vals: Vec<f64> = rule.dirs.iter().map(|u| f(center + *u * r)).collect();
    let avg: f64 = vals.iter().zip(&rule.weights).map(|(v, w)| v * w).sum();
    let osc = vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min);
    (avg - f(center)).abs() / osc.max(floor)
}

/// Largest mean-value residual of `v` over `trials` balls `B_r(M)` with `B_{2r}(M)` inside the
/// harmonicity tube. Evaluation is direct so that no treecode switching enters the averages.
pub fn certify_harmonicity(v: &HarmonicApproximant, curve: &PolylineCurve, trials: usize, range: f64, seed: u64) -> f64 {
    let rule = SphereRule::mean_value_default();
    let radius = v.harmonic_radius;
    let mut rng = rng_for(seed, 0x4800 + v.n as u64);
    let balls: Vec<(Point3, f64)> = (0..trials.max(1))
        .map(|_| {
            let p = curve.point_at(rng.gen_range(0.0..=curve.total_length()));
            let m = p + unit_vector(&mut rng) * (0.5 * radius * rng.gen::<f64>());
            (m, 0.45 * (radius - curve.distance(m)))
        })
        .collect();
    let floor = OSCILLATION_FLOOR * range;
    balls
        .par_iter()
        .map(|&(m, r)| mean_value_residual(|p| v.value(p, EvalMode::Direct), m, r, &rule, floor))
        .reduce(|| 0.0, f64::max)
}

/// Mean-value residual on a ball overlapping the charge: centered on the main-cloud cell
/// with the largest density, radius twice its half width.
pub fn harmonicity_negative_control(v: &HarmonicApproximant, range: f64) -> f64 {
    let rule = SphereRule::mean_value_default();
    let Some(cell) = v.main.cells().iter().max_by(|a, b| a.density.abs().total_cmp(&b.density.abs())) else {
        return 0.0;
    };
    mean_value_residual(|p| v.value(p, EvalMode::Direct), cell.center, 2.0 * cell.half_width, &rule, OSCILLATION_FLOOR * range)
}

/// Converse check on curve pairs: `|f(M₂) − f(M₁)| ≤ 2E(n) + G(n)‖M₁M₂‖` for `‖M₁M₂‖ ≤ 2^{−n−1}`.
#[derive(Clone, Copy, Debug)]
pub struct ConverseReport {
    pub pairs: usize,
    /// Smallest `(2E + G‖M₁M₂‖) − |f(M₂) − f(M₁)|` over the pairs.
    pub min_margin: f64,
    pub pass: bool,
}

/// Draws pairs from the curve sample grid used by [`certify_direct`].
pub fn converse_check(
    n: usize,
    e: f64,
    g: f64,
    curve: &PolylineCurve,
    data: &BoundaryData,
    pairs: usize,
    settings: &CertifySettings,
) -> ConverseReport {
    let samples = curve_samples(curve, settings.curve_samples.max(256));
    let step = 2f64.powi(-(n as i32) - 1);
    let mut rng = rng_for(settings.seed, 0x3300 + n as u64);
    let mut min_margin = f64::INFINITY;
    let mut done = 0;
    let mut draws = 0;
    while done < pairs && draws < 100 * pairs {
        draws += 1;
        let i = rng.gen_range(0..samples.len());
        let j = rng.gen_range(0..samples.len().min(i + 64)).max(i.saturating_sub(64));
        let (s1, m1) = samples[i];
        let (s2, m2) = samples[j];
        let chord = m1.dist(m2);
        if chord > step {
            continue;
        }
        let lhs = (data.at_arc(curve, s2) - data.at_arc(curve, s1)).abs();
        min_margin = min_margin.min(2.0 * e + g * chord - lhs);
        done += 1;
    }
    ConverseReport { pairs: done, min_margin, pass: done == pairs && min_margin >= 0.0 }
}

/// Deviation of the volume potential of `Δf₀` from `f₀`, for a sequence of refinements.
#[derive(Clone, Debug)]
pub struct ReconstructionReport {
    /// Largest `|reconstruct − extend|` per refinement, relative to the data range.
    pub relative: Vec<f64>,
    pub monotone: bool,
    pub pass: bool,
}

/// Tolerance of the reconstruction certificate, relative to the data range.
pub const RECONSTRUCTION_TOLERANCE: f64 = 0.05;

/// `count` probes spread along the curve at distances `[0.1, 0.5]·Λ`.
pub fn reconstruction_probes(curve: &PolylineCurve, count: usize, seed: u64) -> Vec<Point3> {
    let lambda = curve.total_length();
    let mut rng = rng_for(seed, 0x5200);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = curve.point_at(rng.gen_range(0.0..=lambda));
        let m = p + unit_vector(&mut rng) * (lambda * rng.gen_range(0.1..0.5));
        if curve.distance(m) >= 0.1 * lambda {
            out.push(m);
        }
    }
    out
}

/// Compares `reconstruct_f0` on each cloud with `extend_f0`; passes when the finest cloud is
/// within tolerance and the error decreases with every refinement.
pub fn certify_reconstruction(
    field: &ExtensionField,
    clouds: &[ChargeCloud],
    probes: &[Point3],
    range: f64,
    mode: EvalMode,
) -> Result<ReconstructionReport, VerifyError> {
    let mut relative = Vec::new();
    for cloud in clouds {
        let errs = probes
            .par_iter()
            .map(|m| Ok((crate::potential::reconstruct_f0(field, cloud, *m, mode)? - field.extend_f0(*m)).abs()))
            .collect::<Result<Vec<f64>, PotentialError>>()?;
        relative.push(errs.iter().cloned().fold(0.0, f64::max) / range);
    }
    let monotone = relative.windows(2).all(|w| w[1] < w[0]);
    let pass = monotone && relative.last().is_some_and(|&e| e <= RECONSTRUCTION_TOLERANCE);
    Ok(ReconstructionReport { relative, monotone, pass })
}

/// Fitted constants of the extension estimates at one finite-difference factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtensionConstants {
    pub kappa: f64,
    /// `max |g₀ − g| / ω(d)`.
    pub value: f64,
    /// `max |∇g₀|·d / ω(d)`.
    pub gradient: f64,
    /// `max |Δg₀|·d² / ω(d)`.
    pub laplacian: f64,
}

#[derive(Clone, Debug)]
pub struct ExtensionReport {
    pub probes: usize,
    pub coarse: ExtensionConstants,
    pub fine: ExtensionConstants,
    /// `min d₀/d` and `max d₀/d` over the probes.
    pub band: (f64, f64),
    pub stable: bool,
    pub band_ok: bool,
}

impl ExtensionReport {
    pub fn pass(&self) -> bool {
        self.stable && self.band_ok
    }
}

/// Probes at distances log-uniform in `[Λ_{n_max}, Λ/2]`.
pub fn extension_probes(field: &ExtensionField, count: usize, seed: u64) -> Vec<Point3> {
    let curve = field.curve();
    let (lo, hi) = (field.frozen_floor().ln(), (0.5 * field.lambda()).ln());
    let mut rng = rng_for(seed, 0x4500);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = curve.point_at(rng.gen_range(0.0..=curve.total_length()));
        let m = p + unit_vector(&mut rng) * rng.gen_range(lo..hi).exp();
        if curve.distance(m) >= field.frozen_floor() {
            out.push(m);
        }
    }
    out
}

/// Constants of the three extension estimates at `kappa` and `kappa/2`, and the `d₀` band.
pub fn certify_extension(
    field: &ExtensionField,
    omega: &Modulus,
    probes: &[Point3],
    kappa: f64,
) -> Result<ExtensionReport, VerifyError> {
    let constants = |kappa: f64| -> Result<ExtensionConstants, VerifyError> {
        let per_probe = probes
            .par_iter()
            .map(|m| {
                let d = field.curve().distance(*m);
                let w = omega.eval(d);
                let value = (field.stage_value(Stage::G0, *m) - field.seed_g(*m)?).abs() / w;
                let gradient = field.gradient_with_kappa(*m, kappa)?.norm() * d / w;
                let laplacian = field.laplacian_with_kappa(*m, kappa)?.abs() * d * d / w;
                Ok([value, gradient, laplacian])
            })
            .collect::<Result<Vec<[f64; 3]>, ExtensionError>>()?;
        let max = |i: usize| per_probe.iter().map(|c| c[i]).fold(0.0, f64::max);
        Ok(ExtensionConstants { kappa, value: max(0), gradient: max(1), laplacian: max(2) })
    };
    let coarse = constants(kappa)?;
    let fine = constants(kappa / 2.0)?;
    let within = |a: f64, b: f64| a.is_finite() && b.is_finite() && a <= 2.0 * b && b <= 2.0 * a;
    let stable = within(coarse.value, fine.value)
        && within(coarse.gradient, fine.gradient)
        && within(coarse.laplacian, fine.laplacian);
    let mut band = (f64::INFINITY, 0.0f64);
    for m in probes {
        let d = field.curve().distance(*m);
        let r = slab_d0(d) / d;
        band = (band.0.min(r), band.1.max(r));
    }
    let band_ok = band.0 >= 0.3 && band.1 <= 1.5;
    Ok(ExtensionReport { probes: probes.len(), coarse, fine, band, stable, band_ok })
}

/// One row of the second-difference table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CounterexampleRow {
    pub ell: usize,
    pub delta: f64,
    pub lambda: f64,
    /// `A = √(λ/2)`.
    pub a: f64,
    /// `x = Aδ`.
    pub x: f64,
    /// `S = f₀*(x) + f₀*(−x) − 2f₀*(0) = 2f₀*(x)`.
    pub s: f64,
    /// `S / ω(δ)`.
    pub ratio: f64,
    /// `2Ĉ′ω(Aδ)` with `Ĉ′ = ln2/2`.
    pub lower_bound: f64,
}

#[derive(Clone, Debug)]
pub struct CounterexampleReport {
    pub modulus: String,
    pub rows: Vec<CounterexampleRow>,
}

impl CounterexampleReport {
    pub fn strictly_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].ratio > w[0].ratio)
    }

    /// First row index `ℓ` with ratio above `c`.
    pub fn first_exceeding(&self, c: f64) -> Option<usize> {
        self.rows.iter().find(|r| r.ratio > c).map(|r| r.ell)
    }

    pub fn max_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# second differences for {}: columns ell, A, x, S, ratio\nell,A,x,S,ratio\n", self.modulus);
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.12e},{:.12e},{:.12e},{:.12e}", r.ell, r.a, r.x, r.s, r.ratio);
        }
        s
    }
}

/// Second differences of `f₀*` at `x_ℓ = A_ℓδ_ℓ`, `A_ℓ = √(λ_ℓ/2)`, for the rows `ℓ = 1, 2, ...`.
///
/// `δ` must decrease strictly inside `(0, 1)` and every `λ` must exceed 4.
pub fn counterexample_table(omega: &Modulus, deltas: &[f64], lambdas: &[f64]) -> Result<CounterexampleReport, VerifyError> {
    if deltas.is_empty() || deltas.len() != lambdas.len() {
        return Err(VerifyError::SequenceInvalid("sequences must be nonempty and of equal length".into()));
    }
    if deltas.iter().any(|&d| !(d > 0.0 && d < 1.0)) || deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(VerifyError::SequenceInvalid("delta must decrease strictly inside (0, 1)".into()));
    }
    if let Some(l) = lambdas.iter().find(|&&l| !(l > 4.0 && l.is_finite())) {
        return Err(VerifyError::SequenceInvalid(format!("lambda {l} must exceed 4")));
    }
    let rows = deltas
        .iter()
        .zip(lambdas)
        .enumerate()
        .map(|(i, (&delta, &lambda))| {
            let a = (lambda / 2.0).sqrt();
            let x = a * delta;
            let s = 2.0 * omega.primitive(x);
            CounterexampleRow {
                ell: i + 1,
                delta,
                lambda,
                a,
                x,
                s,
                ratio: s / omega.eval(delta),
                lower_bound: 2.0 * PRIMITIVE_LOWER_CONSTANT * omega.eval(x),
            }
        })
        .collect();
    Ok(CounterexampleReport { modulus: format!("{:?}", omega.family()), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::ChargeCell;

    fn segment() -> PolylineCurve {
        PolylineCurve::segment(Point3::new(-1.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)).unwrap()
    }

    #[test]
    fn report_spread_and_csv() {
        let rows = vec![
            LevelRow { n: 3, delta: 0.125, raw: 1.0, normalized: 2.0 },
            LevelRow { n: 4, delta: 0.0625, raw: 1.0, normalized: 5.0 },
        ];
        let r = ScalingReport::new("direct", rows, 3.0);
        assert_eq!(r.spread, 2.5);
        assert!(r.pass);
        let csv = r.to_csv();
        assert!(csv.starts_with("# direct"));
        assert_eq!(csv.lines().nth(1), Some("n,delta,raw,normalized"));
        assert_eq!(csv.lines().count(), 4);
        let empty = ScalingReport::new("gradient", Vec::new(), 3.0);
        assert_eq!(empty.to_csv().lines().count(), 2);
        let zero = ScalingReport::new("direct", vec![LevelRow { n: 3, delta: 0.125, raw: 0.0, normalized: 0.0 }], 3.0);
        assert!(zero.pass);
    }

    #[test]
    fn shell_samples_land_in_shell() {
        let c = segment();
        let mut rng = rng_for(3, 0);
        let pts = tube_samples(&c, 0.05, 0.1, 600, &mut rng).unwrap();
        assert!(pts.iter().all(|p| (0.05..0.1).contains(&c.distance(*p))));
        assert!(matches!(
            tube_samples(&c, 0.1, 0.1 + 1e-9, 10, &mut rng),
            Err(VerifyError::ShellSamplingFailure { .. })
        ));
    }

    #[test]
    fn point_charge_passes_mean_value_test() {
        let cloud = ChargeCloud::new(vec![ChargeCell::new(Point3::new(3.0, 0.0, 0.0), 0.01, 1.0)]);
        let rule = SphereRule::mean_value_default();
        let r = mean_value_residual(|p| cloud.potential_direct(p), Point3::ORIGIN, 0.5, &rule, 1e-12);
        assert!(r < 1e-6, "{r}");
        let zero = mean_value_residual(|_| 0.0, Point3::ORIGIN, 0.5, &rule, 1e-12);
        assert_eq!(zero, 0.0);
        // Inside a uniform ball the potential is quadratic and the residual is large.
        let ball = ChargeCloud::new(vec![ChargeCell::new(Point3::ORIGIN, 1.0, 1.0)]);
        let off = Point3::new(0.2, 0.0, 0.0);
        assert!(mean_value_residual(|p| ball.potential_direct(p), off, 0.5, &rule, 1e-12) > 1e-2);
    }

    #[test]
    fn counterexample_closed_form() {
        let w = Modulus::power(0.5, 4.0).unwrap();
        let ks: Vec<i32> = (3..=22).collect();
        let deltas: Vec<f64> = ks.iter().map(|&k| 4f64.powi(-k)).collect();
        let lambdas: Vec<f64> = ks.iter().map(|&k| 2f64.powi(k)).collect();
        let rep = counterexample_table(&w, &deltas, &lambdas).unwrap();
        for (r, &k) in rep.rows.iter().zip(&ks) {
            // f₀* = 2√x, so S/ω(δ) = 4√A with A = 2^{(k−1)/2}.
            let expected = 4.0 * 2f64.powf((k as f64 - 1.0) / 4.0);
            assert!((r.ratio - expected).abs() < 1e-9 * expected);
            assert!(r.s >= r.lower_bound);
        }
        assert!(rep.strictly_increasing());
        // 4·2^{(k−1)/4} > 100 first at k = 20, the 18th row.
        assert_eq!(rep.first_exceeding(100.0), Some(18));
        let flat = counterexample_table(&w, &deltas, &vec![8.0; deltas.len()]).unwrap();
        assert!((flat.max_ratio() - 4.0 * 2f64.sqrt()).abs() < 1e-9);
        assert!(matches!(counterexample_table(&w, &[0.5], &[4.0]), Err(VerifyError::SequenceInvalid(_))));
        assert!(matches!(counterexample_table(&w, &[0.5, 0.6], &[8.0, 8.0]), Err(VerifyError::SequenceInvalid(_))));
        assert!(matches!(counterexample_table(&w, &[], &[]), Err(VerifyError::SequenceInvalid(_))));
    }

    #[test]
    fn counterexample_power_growth() {
        let w = Modulus::power(0.3, 4.0).unwrap();
        let rep = counterexample_table(&w, &[1e-2, 1e-3], &[50.0, 50.0]).unwrap();
        // f₀* = x^α/α: S/ω(δ) = 2A^α/α for every row.
        let expected = 2.0 * 5f64.powf(0.3) / 0.3;
        for r in &rep.rows {
            assert!((r.ratio - expected).abs() < 1e-9 * expected);
        }
    }
}
