//! Smooth extension `f₀` of curve data into space.
//!
//! The seed `g` is piecewise constant on the Whitney-type cells `ω_kn`. It is smoothed three
//! times by ball averages with radius proportional to the distance to the curve:
//! `g₁` averages `g` over `B(M, d/8)`, `g₂` averages `g₁` over `B(M, d₀/8)` and `f₀` averages
//! `g₂` over `B(M, d₀/8)`, where `d₀` is the smoothed distance.
//!
//! Numerically `g₁` is exact (ray integration against the ball boundaries). The later stages
//! are sampled on a family of lattices, one per dyadic scale `Λ_ℓ`, with trilinear
//! interpolation between stages and a cubic B-spline for the final stage. Levels are blended
//! with a C² weight in `log₂(Λ/d)`, so `f₀` is C² away from the curve. Cells below level
//! `n_max` are frozen: the averaging radii use `max(d, Λ_{n_max})`.

mod data;
pub mod distance;
mod lattice;

use std::f64::consts::SQRT_2;

pub use data::{BoundaryData, DataError};

use crate::curve::{CurveError, DyadicRegions, PolylineCurve};
use crate::geom::Point3;
use crate::quad::{BallRule, QuadError, SphereRule};
use lattice::Lattice;

#[derive(Debug, thiserror::Error)]
pub enum ExtensionError {
    #[error("point lies on the curve")]
    OnCurve,
    #[error("finite-difference step {0:e} underflows")]
    StepUnderflow(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

#[derive(Clone, Debug)]
pub struct ExtensionConfig {
    /// Finest dyadic level resolved; finer cells reuse level `n_max`.
    pub n_max: usize,
    /// Finite-difference step as a fraction of the distance to the curve.
    pub fd_kappa: f64,
    /// Ball rule node count for the lattice stages.
    pub quad_nodes: usize,
    /// Sphere rule for the exact first stage: `(n_theta, n_phi)`.
    pub rays: (usize, usize),
    /// Lattice nodes per dyadic scale `Λ_ℓ`.
    pub nodes_per_scale: f64,
    /// Subtract `f(A)` from the data before extending.
    pub center: bool,
}

impl Default for ExtensionConfig {
    fn default() -> Self {
        ExtensionConfig {
            n_max: 8,
            fd_kappa: 1.0 / 64.0,
            quad_nodes: 48,
            rays: (8, 16),
            nodes_per_scale: 6.0,
            center: false,
        }
    }
}

/// Stages of the smoothing pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    G1 = 0,
    G2 = 1,
    G0 = 2,
}

const FD_MIN_STEP: f64 = 1e-9;

/// Distances below this fraction of `Λ` count as on the curve.
const ON_CURVE_TOLERANCE: f64 = 1e-13;

/// Blending between adjacent levels happens on this sub-interval of each octave of `log₂(Λ/d)`.
const BLEND_START: f64 = 0.35;
const BLEND_WIDTH: f64 = 0.3;

/// Growth factor bound for the averaging radius: `d₀(d)/8 ≤ (5/32)·d`.
const RADIUS_BOUND: f64 = 5.0 / 32.0;

struct LevelSet {
    stages: [Lattice; 3],
    // Distances beyond which the G1, G2 and G0 nodes of this level vanish.
    zero_beyond: [f64; 3],
}

/// The extension `f₀` of one data set on one curve.
pub struct ExtensionField {
    curve: PolylineCurve,
    regions: DyadicRegions,
    data: BoundaryData,
    offset: f64,
    values: Vec<Vec<f64>>,
    config: ExtensionConfig,
    lambda: f64,
    floor: f64,
    support: f64,
    ball: BallRule,
    rays: SphereRule,
    levels: Vec<LevelSet>,
}

struct Crosser {
    level: usize,
    k: usize,
    center: Point3,
    radius: f64,
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (x * (6.0 * x - 15.0) + 10.0)
}

fn smoothstep_slope(x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    30.0 * x * x * (x - 1.0) * (x - 1.0)
}

impl ExtensionField {
    pub fn new(curve: PolylineCurve, data: BoundaryData, config: ExtensionConfig) -> Result<Self, ExtensionError> {
        if !(config.fd_kappa > 0.0 && config.fd_kappa <= 0.25) {
            return Err(ExtensionError::InvalidConfig(format!("fd_kappa {} outside (0, 1/4]", config.fd_kappa)));
        }
        if !(config.nodes_per_scale >= 2.0) {
            return Err(ExtensionError::InvalidConfig("nodes_per_scale must be at least 2".into()));
        }
        if config.rays.0 < 2 || config.rays.1 < 3 {
            return Err(ExtensionError::InvalidConfig("ray rule too small".into()));
        }
        let regions = DyadicRegions::new(&curve, config.n_max)?;
        let ball = BallRule::with_nodes(config.quad_nodes)?;
        let rays = SphereRule::product(config.rays.0, config.rays.1);
        let offset = if config.center { data.at_arc(&curve, 0.0) } else { 0.0 };
        let values = (0..=regions.top_level())
            .map(|n| regions.cover(n).params.iter().map(|&s| data.at_arc(&curve, s) - offset).collect())
            .collect();
        let lambda = curve.total_length();
        let floor = lambda * 2f64.powi(-(config.n_max as i32));
        let g1_zero = 2.0 * lambda / (1.0 - 1.0 / 8.0);
        let levels: Vec<LevelSet> = (0..=config.n_max)
            .map(|l| {
                let h = lambda * 2f64.powi(-(l as i32)) / config.nodes_per_scale;
                let origin = Point3::new(0.5, 0.5, 0.5) * h;
                let reach = 3f64.sqrt() * h;
                let z2 = (g1_zero + reach) / (1.0 - RADIUS_BOUND);
                let z0 = (z2 + reach) / (1.0 - RADIUS_BOUND);
                LevelSet {
                    stages: [Lattice::new(h, origin), Lattice::new(h, origin), Lattice::new(h, origin)],
                    zero_beyond: [g1_zero, z2, z0],
                }
            })
            .collect();
        let support = levels[0].zero_beyond[2] + 2.0 * 3f64.sqrt() * levels[0].stages[2].h;
        Ok(ExtensionField {
            curve,
            regions,
            data,
            offset,
            values,
            config,
            lambda,
            floor,
            support,
            ball,
            rays,
            levels,
        })
    }

    pub fn curve(&self) -> &PolylineCurve {
        &self.curve
    }

    pub fn regions(&self) -> &DyadicRegions {
        &self.regions
    }

    pub fn data(&self) -> &BoundaryData {
        &self.data
    }

    pub fn config(&self) -> &ExtensionConfig {
        &self.config
    }

    /// Constant subtracted from the data (`f(A)` when centering, else 0).
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Curve length `Λ`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Distance `Λ_{n_max}` below which the construction is frozen.
    pub fn frozen_floor(&self) -> f64 {
        self.floor
    }

    /// Distance to the curve beyond which `f₀` vanishes identically.
    pub fn support_radius(&self) -> f64 {
        self.support
    }

    /// Centered data at arc parameter `s`.
    pub fn data_at_arc(&self, s: f64) -> f64 {
        self.data.at_arc(&self.curve, s) - self.offset
    }

    /// Centered data value `f(M_kn) − offset`.
    pub fn node_value(&self, n: usize, k: usize) -> f64 {
        self.values[n][k]
    }

    /// Nodes computed so far per stage, summed over levels.
    pub fn computed_nodes(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for l in &self.levels {
            for (s, lat) in l.stages.iter().enumerate() {
                c[s] += lat.computed();
            }
        }
        c
    }

    /// Seed `g(M)`: data at the first ball of the deepest level (capped at `n_max`) holding `M`,
    /// zero outside `Ω*_0`.
    pub fn seed_g(&self, m: Point3) -> Result<f64, ExtensionError> {
        if self.on_curve(self.curve.distance(m)) {
            return Err(ExtensionError::OnCurve);
        }
        Ok(self.seed_raw(m))
    }

    fn seed_raw(&self, m: Point3) -> f64 {
        let mut value = 0.0;
        for n in 0..=self.config.n_max {
            match self.regions.first_ball(n, m) {
                Some(k) => value = self.values[n][k],
                None => break,
            }
        }
        value
    }

    /// Smoothed distance `d₀(M)`.
    pub fn smoothed_distance(&self, m: Point3) -> Result<f64, ExtensionError> {
        let d = self.curve.distance(m);
        if self.on_curve(d) {
            return Err(ExtensionError::OnCurve);
        }
        Ok(distance::slab_d0(d))
    }

    fn on_curve(&self, d: f64) -> bool {
        d <= ON_CURVE_TOLERANCE * self.lambda
    }

    fn radius_g1(&self, d: f64) -> f64 {
        d.max(self.floor) / 8.0
    }

    fn radius_smooth(&self, d: f64) -> f64 {
        distance::slab_d0(d.max(self.floor)) / 8.0
    }

    /// `g₁(M)`, the exact average of the seed over `B(M, max(d, Λ_{n_max})/8)`.
    pub fn g1(&self, m: Point3) -> f64 {
        let d = self.curve.distance(m);
        self.seed_ball_average(m, self.radius_g1(d))
    }

    /// Average of the seed over `B(p, r)`, integrated exactly along each direction of the ray rule.
    pub fn seed_ball_average(&self, p: Point3, r: f64) -> f64 {
        let n_max = self.config.n_max;
        let mut full: Vec<Option<usize>> = vec![None; n_max + 1];
        let mut crossers: Vec<Crosser> = Vec::new();
        for n in 0..=n_max {
            let cover = self.regions.cover(n);
            let big_r = cover.ball_radius();
            let mut any = false;
            self.regions.for_each_ball_near(n, p, big_r + r, |k| {
                let dist = cover.points[k].dist(p);
                if dist - r >= big_r {
                    return;
                }
                any = true;
                if dist + r <= big_r {
                    if full[n].map_or(true, |f| k < f) {
                        full[n] = Some(k);
                    }
                } else {
                    crossers.push(Crosser { level: n, k, center: cover.points[k], radius: big_r });
                }
            });
            if !any {
                break;
            }
        }
        let base = full.iter().rposition(|f| f.is_some());
        crossers.retain(|c| match base {
            Some(b) if c.level == b => c.k < full[b].unwrap(),
            Some(b) => c.level > b,
            None => true,
        });
        let base_value = base.map_or(0.0, |b| self.values[b][full[b].unwrap()]);
        if crossers.is_empty() {
            return base_value;
        }

        let mut spans = vec![(0.0, 0.0); crossers.len()];
        let mut cuts: Vec<f64> = Vec::with_capacity(2 * crossers.len() + 2);
        let mut total = 0.0;
        for (u, w) in self.rays.dirs.iter().zip(&self.rays.weights) {
            cuts.clear();
            cuts.push(0.0);
            cuts.push(r);
            for (c, span) in crossers.iter().zip(spans.iter_mut()) {
                let q = p - c.center;
                let b = u.dot(q);
                let disc = b * b - (q.norm2() - c.radius * c.radius);
                *span = if disc > 0.0 {
                    let s = disc.sqrt();
                    let (t1, t2) = ((-b - s).max(0.0), (-b + s).min(r));
                    if t1 < t2 {
                        if t1 > 0.0 {
                            cuts.push(t1);
                        }
                        if t2 < r {
                            cuts.push(t2);
                        }
                        (t1, t2)
                    } else {
                        (1.0, 0.0)
                    }
                } else {
                    (1.0, 0.0)
                };
            }
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut ray = 0.0;
            for pair in cuts.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                if b <= a {
                    continue;
                }
                let t = 0.5 * (a + b);
                let mut best: Option<(usize, usize)> = None;
                for (c, span) in crossers.iter().zip(&spans) {
                    if t >= span.0 && t <= span.1 {
                        best = match best {
                            Some((l, k)) if l > c.level || (l == c.level && k < c.k) => Some((l, k)),
                            _ => Some((c.level, c.k)),
                        };
                    }
                }
                let v = match (best, base) {
                    (Some((l, k)), _) => {
                        if Some(l) == base && full[l].unwrap() < k {
                            base_value
                        } else {
                            self.values[l][k]
                        }
                    }
                    (None, _) => base_value,
                };
                ray += v * (b * b * b - a * a * a);
            }
            total += w * ray;
        }
        total / (r * r * r)
    }

    fn level_weights(&self, d: f64) -> [(usize, f64); 2] {
        let [(l0, w0, _), (l1, w1, _)] = self.level_weights_with_slope(d);
        [(l0, w0), (l1, w1)]
    }

    // Blend weights and their derivatives with respect to d.
    fn level_weights_with_slope(&self, d: f64) -> [(usize, f64, f64); 2] {
        let n_max = self.config.n_max;
        let tau = if d > 0.0 { (self.lambda / d).log2() } else { f64::INFINITY };
        if !(tau > 0.0 && tau < n_max as f64) {
            let l = if tau <= 0.0 { 0 } else { n_max };
            return [(l, 1.0, 0.0), (l, 0.0, 0.0)];
        }
        let l0 = tau.floor() as usize;
        let u = (tau - l0 as f64 - BLEND_START) / BLEND_WIDTH;
        let s = smoothstep(u);
        let ds = smoothstep_slope(u) / BLEND_WIDTH * (-1.0 / (d * std::f64::consts::LN_2));
        [(l0, 1.0 - s, -ds), (l0 + 1, s, ds)]
    }

    fn stage_node(&self, stage: Stage, level: usize, p: Point3) -> f64 {
        let d = self.curve.distance(p);
        let set = &self.levels[level];
        if d > set.zero_beyond[stage as usize] {
            return 0.0;
        }
        match stage {
            Stage::G1 => self.seed_ball_average(p, self.radius_g1(d)),
            Stage::G2 | Stage::G0 => {
                let prev = if stage == Stage::G2 { Stage::G1 } else { Stage::G2 };
                let lat = &set.stages[prev as usize];
                let eval = |q: Point3| self.stage_node(prev, level, q);
                self.ball.average(p, self.radius_smooth(d), |q| lat.trilinear(q, &eval))
            }
        }
    }

    fn level_value(&self, stage: Stage, level: usize, m: Point3) -> f64 {
        let lat = &self.levels[level].stages[stage as usize];
        let eval = |q: Point3| self.stage_node(stage, level, q);
        match stage {
            Stage::G0 => lat.bspline(m, &eval),
            _ => lat.trilinear(m, &eval),
        }
    }

    /// Blended lattice interpolant of one stage at `m`.
    pub fn stage_value(&self, stage: Stage, m: Point3) -> f64 {
        let d = self.curve.distance(m);
        if d > self.support {
            return 0.0;
        }
        self.level_weights(d)
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|&(l, w)| w * self.level_value(stage, l, m))
            .sum()
    }

    /// `f₀(M)` and its gradient from the spline derivatives and the blend-weight slopes.
    /// On the curve the gradient is that of the frozen interpolant.
    pub fn value_gradient(&self, m: Point3) -> (f64, Point3) {
        let near = self.curve.nearest(m);
        let d = near.distance;
        if d > self.support {
            return (0.0, Point3::ORIGIN);
        }
        let grad_d = if d > 0.0 { (m - near.point) / d } else { Point3::ORIGIN };
        let (mut f, mut g) = (0.0, Point3::ORIGIN);
        for (l, w, dw) in self.level_weights_with_slope(d) {
            if w == 0.0 && dw == 0.0 {
                continue;
            }
            let lat = &self.levels[l].stages[Stage::G0 as usize];
            let eval = |q: Point3| self.stage_node(Stage::G0, l, q);
            let (v, gv) = lat.bspline_gradient(m, &eval);
            f += w * v;
            g += gv * w + grad_d * (dw * v);
        }
        (f, g)
    }

    /// `f₀(M)`; on the curve this returns the (centered) data.
    pub fn extend_f0(&self, m: Point3) -> f64 {
        let near = self.curve.nearest(m);
        if self.on_curve(near.distance) {
            return self.data_at_arc(near.arc);
        }
        if near.distance > self.support {
            return 0.0;
        }
        self.stage_value(Stage::G0, m)
    }

    fn laplacian_step(&self, m: Point3, h: f64) -> f64 {
        let center = self.stage_value(Stage::G0, m);
        let lap = |h: f64| {
            let mut s = -6.0 * center;
            for axis in 0..3 {
                let mut e = [0.0; 3];
                e[axis] = h;
                let e = Point3::from_array(e);
                s += self.stage_value(Stage::G0, m + e) + self.stage_value(Stage::G0, m - e);
            }
            s / (h * h)
        };
        (4.0 * lap(h / 2.0) - lap(h)) / 3.0
    }

    /// `Δf₀(M)` by central differences with step `κ·d(M)` and one Richardson step.
    pub fn laplacian_f0(&self, m: Point3) -> Result<f64, ExtensionError> {
        self.laplacian_with_kappa(m, self.config.fd_kappa)
    }

    pub fn laplacian_with_kappa(&self, m: Point3, kappa: f64) -> Result<f64, ExtensionError> {
        let d = self.curve.distance(m);
        if self.on_curve(d) {
            return Err(ExtensionError::OnCurve);
        }
        let h = kappa * d;
        if h < FD_MIN_STEP * self.lambda {
            return Err(ExtensionError::StepUnderflow(h));
        }
        if d > self.support + h {
            return Ok(0.0);
        }
        Ok(self.laplacian_step(m, h))
    }

    /// `Δf₀` with the step floored at `κ·Λ_{n_max}`; used for charge densities.
    pub fn laplacian_density(&self, m: Point3) -> f64 {
        let d = self.curve.distance(m);
        let h = self.config.fd_kappa * d.max(self.floor);
        if d > self.support + h {
            return 0.0;
        }
        self.laplacian_step(m, h)
    }

    /// `∇f₀(M)` by central differences with step `κ·d(M)` and one Richardson step.
    pub fn gradient_f0(&self, m: Point3) -> Result<Point3, ExtensionError> {
        self.gradient_with_kappa(m, self.config.fd_kappa)
    }

    pub fn gradient_with_kappa(&self, m: Point3, kappa: f64) -> Result<Point3, ExtensionError> {
        let d = self.curve.distance(m);
        if self.on_curve(d) {
            return Err(ExtensionError::OnCurve);
        }
        let h = kappa * d;
        if h < FD_MIN_STEP * self.lambda {
            return Err(ExtensionError::StepUnderflow(h));
        }
        let diff = |axis: usize, h: f64| {
            let mut e = [0.0; 3];
            e[axis] = h;
            let e = Point3::from_array(e);
            (self.stage_value(Stage::G0, m + e) - self.stage_value(Stage::G0, m - e)) / (2.0 * h)
        };
        let g = |axis: usize| (4.0 * diff(axis, h / 2.0) - diff(axis, h)) / 3.0;
        Ok(Point3::new(g(0), g(1), g(2)))
    }

    /// Distance bracket index `n` with `2ⁿ⁻¹√2 < d ≤ 2ⁿ√2`.
    pub fn bracket(d: f64) -> i32 {
        (d / SQRT_2).log2().ceil() as i32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modulus::Modulus;

    fn segment() -> PolylineCurve {
        PolylineCurve::segment(Point3::new(-1.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)).unwrap()
    }

    fn small_config() -> ExtensionConfig {
        ExtensionConfig { n_max: 4, ..Default::default() }
    }

    #[test]
    fn seed_follows_first_ball_rule() {
        let f = ExtensionField::new(segment(), BoundaryData::HarmonicTrace, small_config()).unwrap();
        // (0,0,1.5): deepest level 1, first ball M_{0,1} = (−1,0,0).
        let m = Point3::new(0.0, 0.0, 1.5);
        assert_eq!(f.seed_g(m).unwrap(), 1.0);
        assert_eq!(f.seed_g(Point3::new(0.0, 0.0, 10.0)).unwrap(), 0.0);
        assert!(matches!(f.seed_g(Point3::new(0.2, 0.0, 0.0)), Err(ExtensionError::OnCurve)));
    }

    // Oracle: Monte Carlo average of the seed over the same ball.
    #[test]
    fn ray_average_matches_monte_carlo() {
        use rand::{Rng, SeedableRng};
        let w = Modulus::power(0.5, 4.0).unwrap();
        let fine = ExtensionConfig { rays: (48, 96), ..small_config() };
        let f = ExtensionField::new(segment(), BoundaryData::PrimitiveTrace(w), fine).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for p in [Point3::new(0.1, 0.3, 0.2), Point3::new(0.9, 1.0, 0.0), Point3::new(-0.7, 0.0, 0.05)] {
            let r = 0.4;
            let exact = f.seed_ball_average(p, r);
            let mut s = 0.0;
            let mut n = 0;
            while n < 200_000 {
                let q = Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                if q.norm2() <= 1.0 {
                    s += f.seed_raw(p + q * r);
                    n += 1;
                }
            }
            let mc = s / n as f64;
            eprintln!("{p:?}: {exact} vs {mc}");
            assert!((exact - mc).abs() < 0.004, "{p:?}: {exact} vs {mc}");
        }
    }

    #[test]
    fn constant_data_is_reproduced() {
        let f = ExtensionField::new(segment(), BoundaryData::Constant(3.0), small_config()).unwrap();
        for p in [Point3::new(0.0, 0.5, 0.0), Point3::new(0.3, 0.01, -0.02), Point3::new(1.5, 1.0, 0.0)] {
            assert!((f.extend_f0(p) - 3.0).abs() < 1e-12, "{p:?} {}", f.extend_f0(p));
            assert!(f.laplacian_f0(p).unwrap().abs() < 1e-6);
        }
        assert_eq!(f.extend_f0(Point3::new(0.0, 0.0, 20.0)), 0.0);
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        let w = Modulus::power(0.5, 4.0).unwrap();
        let f = ExtensionField::new(segment(), BoundaryData::PrimitiveTrace(w), small_config()).unwrap();
        for p in [Point3::new(0.2, 0.3, 0.1), Point3::new(-0.6, 0.05, 0.02), Point3::new(1.3, 1.1, 0.4)] {
            let (v, g) = f.value_gradient(p);
            assert_eq!(v, f.stage_value(Stage::G0, p));
            let h = 1e-6;
            for axis in 0..3 {
                let mut e = [0.0; 3];
                e[axis] = h;
                let e = Point3::from_array(e);
                let fd = (f.stage_value(Stage::G0, p + e) - f.stage_value(Stage::G0, p - e)) / (2.0 * h);
                assert!((fd - g.axis(axis)).abs() < 1e-5 * (1.0 + g.norm()), "{p:?} {axis} {fd} {}", g.axis(axis));
            }
        }
    }

    #[test]
    fn level_weights_partition_unity() {
        let f = ExtensionField::new(segment(), BoundaryData::Constant(1.0), small_config()).unwrap();
        let mut d = 1e-4;
        while d < 50.0 {
            let w = f.level_weights(d);
            assert!((w[0].1 + w[1].1 - 1.0).abs() < 1e-15);
            d *= 1.1;
        }
    }
}
