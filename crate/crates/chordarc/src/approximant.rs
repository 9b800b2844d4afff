//! Harmonic approximants `v_{2⁻ⁿ}`.
//!
//! `v` is the potential of `Δf₀` with the charge inside `Ω*_{n−2}` removed and replaced by
//! constant-density correction charges placed outside it. Each removed piece `β_kn` (the
//! level-`(n−2)` ball of radius `2Λ_{n−2}` at `M_{k,n−2}` minus earlier balls) is balanced by a
//! charge `φ_kn` of density `γ_kn·Λ_n⁻²·ω(Λ_n)` on `B(M_{k,n−2}, C₁Λ_n) \ Ω*_{n−2}` with the
//! opposite total. Both clouds avoid the tube `Ω_{2^{−n+1}}(L)`, where `v` is harmonic.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curve::DyadicRegions;
use crate::extension::ExtensionField;
use crate::geom::Point3;
use crate::modulus::Modulus;
use crate::potential::{adaptive_octants, laplacian_cloud, ChargeCell, ChargeCloud, EvalMode, Octant, PotentialError};

#[derive(Debug, thiserror::Error)]
pub enum ApproximantError {
    #[error("level {n} outside [2, {max}]")]
    LevelOutOfRange { n: usize, max: usize },
    #[error("no C1 on the ladder reaches volume fraction 1/2 at level {n} (best {fraction:.3})")]
    C1Unreachable { n: usize, fraction: f64 },
    #[error("correction support {k} at level {n} is empty")]
    EmptySupport { k: usize, n: usize },
    #[error("charge at {center:?} reaches distance {distance:e} < {radius:e} from the curve")]
    SupportViolation { center: Point3, distance: f64, radius: f64 },
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Candidate values of `C₁`, tried in order.
pub const C1_LADDER: [f64; 13] = [1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0];

/// Monte Carlo samples per ball in [`select_c1`] and in the volume cross-check.
pub const VOLUME_SAMPLES: usize = 10_000;

/// Result of [`select_c1`].
#[derive(Clone, Debug)]
pub struct C1Choice {
    pub c1: f64,
    /// Smallest volume fraction outside `Ω*_{n−2}` over the correction balls.
    pub min_fraction: f64,
    /// `(C₁, smallest fraction)` for every rung tried.
    pub ladder: Vec<(f64, f64)>,
}

fn check_level(regions: &DyadicRegions, n: usize) -> Result<(), ApproximantError> {
    let max = regions.n_max().saturating_sub(1);
    if n < 2 || n > max {
        return Err(ApproximantError::LevelOutOfRange { n, max });
    }
    Ok(())
}

fn stream(seed: u64, n: usize, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 32) | k as u64);
    rng
}

fn unit_ball_samples(rng: &mut ChaCha8Rng, count: usize) -> Vec<Point3> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if p.norm2() <= 1.0 {
            out.push(p);
        }
    }
    out
}

/// Monte Carlo fraction of `B(center, radius)` outside `Ω*_{n−2}`.
fn outside_fraction(regions: &DyadicRegions, n: usize, center: Point3, radius: f64, unit: &[Point3]) -> f64 {
    let out = unit.iter().filter(|u| !regions.in_omega_star(n - 2, center + **u * radius)).count();
    out as f64 / unit.len() as f64
}

/// Smallest `C₁` on the ladder with at least half of every `B(M_{k,n−2}, C₁Λ_n)` outside `Ω*_{n−2}`.
pub fn select_c1(regions: &DyadicRegions, n: usize, seed: u64) -> Result<C1Choice, ApproximantError> {
    check_level(regions, n)?;
    let lambda_n = regions.cover(n).lambda_n;
    let centers = &regions.cover(n - 2).points;
    let samples: Vec<Vec<Point3>> =
        (0..centers.len()).map(|k| unit_ball_samples(&mut stream(seed, n, k), VOLUME_SAMPLES)).collect();
    let mut ladder = Vec::new();
    for &c1 in &C1_LADDER {
        let min_fraction = centers
            .iter()
            .zip(&samples)
            .map(|(c, s)| outside_fraction(regions, n, *c, c1 * lambda_n, s))
            .fold(f64::INFINITY, f64::min);
        ladder.push((c1, min_fraction));
        if min_fraction >= 0.5 {
            return Ok(C1Choice { c1, min_fraction, ladder });
        }
    }
    let fraction = ladder.iter().map(|l| l.1).fold(0.0, f64::max);
    Err(ApproximantError::C1Unreachable { n, fraction })
}

/// One correction charge `φ_kn`.
#[derive(Clone, Debug)]
pub struct CorrectionCharge {
    pub k: usize,
    pub n: usize,
    /// Ball center `M_{k,n−2}`.
    pub center: Point3,
    pub gamma: f64,
    /// `∫_{β_kn} Δf₀`.
    pub moment_beta: f64,
    /// Support volume of the discretized charge.
    pub volume: f64,
    /// Monte Carlo estimate of the same support volume.
    pub volume_mc: f64,
    /// `∫ φ_kn` summed over the correction cells.
    pub integral: f64,
}

impl CorrectionCharge {
    /// `|moment + ∫φ| / (Λ_{n−2} ω(Λ_{n−2}))`.
    pub fn balance_residual(&self, lambda_n2: f64, omega: &Modulus) -> f64 {
        (self.moment_beta + self.integral).abs() / (lambda_n2 * omega.eval(lambda_n2))
    }
}

/// Fractions of the 9 cell probes outside `Ω*_{n−2}` and in each `β_kn`.
fn beta_fractions(regions: &DyadicRegions, n: usize, cell: &ChargeCell, betas: &mut Vec<(usize, f64)>) -> f64 {
    betas.clear();
    let probes = Octant { center: cell.center, half_width: cell.half_width, depth: 0 }.probes();
    let mut out = 0.0;
    for p in probes {
        match regions.beta_index(n, p) {
            None => out += 1.0 / 9.0,
            Some(k) => match betas.iter_mut().find(|b| b.0 == k) {
                Some(b) => b.1 += 1.0 / 9.0,
                None => betas.push((k, 1.0 / 9.0)),
            },
        }
    }
    out
}

/// `∫_{β_kn} Δf₀` for every `k`, from a cloud built by [`laplacian_cloud`].
pub fn beta_moments(regions: &DyadicRegions, cloud: &ChargeCloud, n: usize) -> Vec<f64> {
    let mut moments = vec![0.0; regions.cover(n - 2).points.len()];
    let mut betas = Vec::new();
    for c in cloud.cells() {
        beta_fractions(regions, n, c, &mut betas);
        for &(k, f) in &betas {
            moments[k] += c.weight * f;
        }
    }
    moments
}

/// Harmonic approximant at one level.
pub struct HarmonicApproximant {
    pub n: usize,
    pub c1: f64,
    /// Radius of the tube `Ω_{2^{−n+1}}(L)`.
    pub harmonic_radius: f64,
    /// Constant added back to the potential (the data centering offset).
    pub offset: f64,
    pub lambda_n: f64,
    pub main: ChargeCloud,
    pub corrections: ChargeCloud,
    pub charges: Vec<CorrectionCharge>,
    /// Smallest Monte Carlo volume fraction seen by [`select_c1`].
    pub min_fraction: f64,
}

impl HarmonicApproximant {
    /// `v(M)` plus the centering offset.
    pub fn value(&self, m: Point3, mode: EvalMode) -> f64 {
        self.offset + self.main.potential(m, mode) - self.corrections.potential(m, mode)
    }

    pub fn gradient(&self, m: Point3, mode: EvalMode) -> Point3 {
        self.main.gradient(m, mode) - self.corrections.gradient(m, mode)
    }

    pub fn value_gradient(&self, m: Point3, mode: EvalMode) -> (f64, Point3) {
        (self.value(m, mode), self.gradient(m, mode))
    }

    pub fn max_abs_gamma(&self) -> f64 {
        self.charges.iter().map(|c| c.gamma.abs()).fold(0.0, f64::max)
    }

    /// Plain-text manifest: level, `C₁`, tube radius, region interpretation and the `γ` table.
    pub fn manifest(&self) -> String {
        let mut s = String::from("# harmonic approximant manifest\n");
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "c1 = {}", self.c1);
        let _ = writeln!(s, "lambda_n = {:e}", self.lambda_n);
        let _ = writeln!(s, "harmonic_radius = {:e}", self.harmonic_radius);
        let _ = writeln!(s, "offset = {:e}", self.offset);
        let _ = writeln!(s, "main_cells = {}", self.main.len());
        let _ = writeln!(s, "correction_cells = {}", self.corrections.len());
        let _ = writeln!(
            s,
            "interpretation = beta_k is the ball of radius 2*lambda_(n-2) at M_(k,n-2) minus earlier balls; \
             phi_k lives on B(M_(k,n-2), c1*lambda_n) minus Omega*_(n-2)"
        );
        let _ = writeln!(s, "# k gamma moment_beta volume volume_mc integral");
        for c in &self.charges {
            let _ = writeln!(
                s,
                "{} {:e} {:e} {:e} {:e} {:e}",
                c.k, c.gamma, c.moment_beta, c.volume, c.volume_mc, c.integral
            );
        }
        s
    }

    /// Writes `main.cloud`, `corrections.cloud` and `manifest.txt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), ApproximantError> {
        std::fs::create_dir_all(dir)?;
        self.main.save(&dir.join("main.cloud"))?;
        self.corrections.save(&dir.join("corrections.cloud"))?;
        std::fs::write(dir.join("manifest.txt"), self.manifest())?;
        Ok(())
    }
}

/// Builds approximants at several levels from one `Δf₀` cloud.
pub struct ApproximantBuilder<'a> {
    field: &'a ExtensionField,
    omega: &'a Modulus,
    cloud: ChargeCloud,
    seed: u64,
}

impl<'a> ApproximantBuilder<'a> {
    /// Discretizes `Δf₀` once at octree resolution `theta_ref`.
    pub fn new(field: &'a ExtensionField, omega: &'a Modulus, theta_ref: f64, seed: u64) -> Result<Self, ApproximantError> {
        let cloud = laplacian_cloud(field, theta_ref)?;
        Ok(ApproximantBuilder { field, omega, cloud, seed })
    }

    /// The whole-support `Δf₀` cloud.
    pub fn cloud(&self) -> &ChargeCloud {
        &self.cloud
    }

    pub fn field(&self) -> &ExtensionField {
        self.field
    }

    pub fn build(&self, n: usize) -> Result<HarmonicApproximant, ApproximantError> {
        let regions = self.field.regions();
        check_level(regions, n)?;
        let choice = select_c1(regions, n, self.seed)?;
        let c1 = choice.c1;
        let lambda_n = regions.cover(n).lambda_n;
        let centers = regions.cover(n - 2).points.clone();

        let mut main_cells = Vec::new();
        let mut moments = vec![0.0; centers.len()];
        let mut betas = Vec::new();
        for c in self.cloud.cells() {
            let out = beta_fractions(regions, n, c, &mut betas);
            for &(k, f) in &betas {
                moments[k] += c.weight * f;
            }
            if out > 0.0 {
                main_cells.push(ChargeCell::new(c.center, c.half_width, c.weight * out).with_dipole(c.dipole * out));
            }
        }

        let (cells, shares) = correction_cells(regions, n, c1 * lambda_n);
        let mut volume = vec![0.0; centers.len()];
        for (cell, share) in cells.iter().zip(&shares) {
            for &(k, f) in share {
                volume[k] += cell.volume() * f;
            }
        }
        if let Some(k) = volume.iter().position(|&v| v <= 0.0) {
            return Err(ApproximantError::EmptySupport { k, n });
        }
        let unit_density = self.omega.eval(lambda_n) / (lambda_n * lambda_n);
        let gamma: Vec<f64> = moments.iter().zip(&volume).map(|(m, v)| -m / (unit_density * v)).collect();

        let mut integral = vec![0.0; centers.len()];
        let mut corr_cells = Vec::new();
        for (cell, share) in cells.iter().zip(&shares) {
            let mut w = 0.0;
            for &(k, f) in share {
                let part = gamma[k] * unit_density * cell.volume() * f;
                integral[k] += part;
                w += part;
            }
            if w != 0.0 {
                corr_cells.push(ChargeCell::new(cell.center, cell.half_width, w));
            }
        }

        let charges = (0..centers.len())
            .map(|k| {
                let unit = unit_ball_samples(&mut stream(self.seed ^ 0x5eed, n, k), VOLUME_SAMPLES);
                let r = c1 * lambda_n;
                let fraction = outside_fraction(regions, n, centers[k], r, &unit);
                CorrectionCharge {
                    k,
                    n,
                    center: centers[k],
                    gamma: gamma[k],
                    moment_beta: moments[k],
                    volume: volume[k],
                    volume_mc: fraction * 4.0 / 3.0 * std::f64::consts::PI * r * r * r,
                    integral: integral[k],
                }
            })
            .collect();

        let harmonic_radius = 2f64.powi(1 - n as i32);
        let curve = self.field.curve();
        for c in main_cells.iter().chain(&corr_cells) {
            let distance = curve.distance(c.center) - c.smear_radius();
            if distance < harmonic_radius {
                return Err(ApproximantError::SupportViolation { center: c.center, distance, radius: harmonic_radius });
            }
        }
        Ok(HarmonicApproximant {
            n,
            c1,
            harmonic_radius,
            offset: self.field.offset(),
            lambda_n,
            main: ChargeCloud::new(main_cells),
            corrections: ChargeCloud::new(corr_cells),
            charges,
            min_fraction: choice.min_fraction,
        })
    }
}

/// Octree cells of side `2Λ_n` over the correction supports, each with the probe
/// fractions it contributes to every `φ_kn`.
fn correction_cells(regions: &DyadicRegions, n: usize, radius: f64) -> (Vec<Octant>, Vec<Vec<(usize, f64)>>) {
    let centers = &regions.cover(n - 2).points;
    let lambda_n = regions.cover(n).lambda_n;
    let (mut lo, mut hi) = (centers[0], centers[0]);
    for p in centers {
        lo = lo.component_min(*p);
        hi = hi.component_max(*p);
    }
    // Root half width Λ_n·2^m so that leaves have half width exactly Λ_n.
    let need = (hi - lo).max_abs() * 0.5 + radius;
    let depth = (need / lambda_n).log2().ceil().max(0.0) as u32;
    let root = Octant { center: (lo + hi) * 0.5, half_width: lambda_n * 2f64.powi(depth as i32), depth: 0 };
    let near = |o: &Octant| {
        let reach = radius + 3f64.sqrt() * o.half_width;
        centers.iter().any(|c| c.dist2(o.center) <= reach * reach)
    };
    let leaves = adaptive_octants(root, depth, near);
    let mut cells = Vec::new();
    let mut shares = Vec::new();
    for o in leaves {
        if !near(&o) {
            continue;
        }
        let mut share: Vec<(usize, f64)> = Vec::new();
        for p in o.probes() {
            if regions.in_omega_star(n - 2, p) {
                continue;
            }
            regions.for_each_ball_near(n - 2, p, radius, |k| {
                if centers[k].dist(p) <= radius {
                    match share.iter_mut().find(|s| s.0 == k) {
                        Some(s) => s.1 += 1.0 / 9.0,
                        None => share.push((k, 1.0 / 9.0)),
                    }
                }
            });
        }
        if !share.is_empty() {
            share.sort_by_key(|s| s.0);
            cells.push(o);
            shares.push(share);
        }
    }
    (cells, shares)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::PolylineCurve;

    fn segment_regions() -> DyadicRegions {
        let c = PolylineCurve::segment(Point3::new(-1.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)).unwrap();
        DyadicRegions::new(&c, 8).unwrap()
    }

    #[test]
    fn c1_on_segment() {
        let r = segment_regions();
        let choice = select_c1(&r, 4, 1).unwrap();
        assert!(choice.min_fraction >= 0.5);
        // Fractions grow with the ball.
        for w in choice.ladder.windows(2) {
            assert!(w[1].1 >= w[0].1 - 0.01, "{:?}", choice.ladder);
        }
        // Oracle: deep inside the segment, Ω*_{n−2} holds the tube of radius
        // ρ = √(4 − 1/4)·Λ_{n−2} = 7.75Λ_n; a ball of radius R ≫ ρ on the axis is mostly
        // outside once 1.5ρ²/R² ≤ 1/2, i.e. R ≥ 13.4Λ_n.
        assert_eq!(choice.c1, 16.0);
    }

    #[test]
    fn level_preconditions() {
        let r = segment_regions();
        assert!(matches!(select_c1(&r, 1, 1), Err(ApproximantError::LevelOutOfRange { .. })));
        assert!(matches!(select_c1(&r, 8, 1), Err(ApproximantError::LevelOutOfRange { .. })));
    }

    #[test]
    fn correction_shares_cover_the_support() {
        let r = segment_regions();
        let radius = 16.0 * r.cover(3).lambda_n;
        let (cells, shares) = correction_cells(&r, 3, radius);
        let mut volume = vec![0.0; 3];
        for (c, s) in cells.iter().zip(&shares) {
            for &(k, f) in s {
                volume[k] += c.volume() * f;
            }
        }
        // Cross-check the discrete volumes against Monte Carlo.
        for (k, v) in volume.iter().enumerate() {
            let unit = unit_ball_samples(&mut stream(3, 3, k), 40_000);
            let mc = outside_fraction(&r, 3, r.cover(1).points[k], radius, &unit) * 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3);
            assert!((v - mc).abs() < 0.03 * mc, "{k}: {v} vs {mc}");
        }
    }
}
