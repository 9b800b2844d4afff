//! Smoothed distance `d₀`.
//!
//! `d₁` quantizes `d` dyadically, `d₂` and `d₀` are ball averages of radius `2ⁿ⁻¹/8` with `n`
//! taken from the bracket `2ⁿ⁻¹√2 < d ≤ 2ⁿ√2`. Near a level set of `d` the averages are
//! evaluated in the slab model: the level sets are treated as parallel planes, so a ball
//! average of a function of `d` becomes a 1-D average against the ball's marginal density
//! `¾(1 − z²)` on `[−1, 1]`.

use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

/// `d₁(x) = 2ⁿ⁻¹` for `2ⁿ⁻¹ < x ≤ 2ⁿ`.
pub fn quantized_distance(x: f64) -> f64 {
    2f64.powi(x.log2().ceil() as i32 - 1)
}

/// Averaging radius `2ⁿ⁻¹/8` for the bracket of `x`.
pub fn bracket_radius(x: f64) -> f64 {
    let n = (x / std::f64::consts::SQRT_2).log2().ceil() as i32;
    2f64.powi(n - 1) / 8.0
}

/// Marginal CDF of a uniform point in the unit ball along one axis.
fn marginal_cdf(u: f64) -> f64 {
    let u = u.clamp(-1.0, 1.0);
    (2.0 + 3.0 * u - u * u * u) / 4.0
}

fn marginal_density(z: f64) -> f64 {
    0.75 * (1.0 - z * z)
}

// Jumps of d₁ within `reach` of x: thresholds J = 2^m with their jump heights 2^{m-1}.
fn jumps_near(x: f64, reach: f64, mut f: impl FnMut(f64)) {
    let lo = (x - reach).max(f64::MIN_POSITIVE);
    let mut j = 2f64.powi(lo.log2().floor() as i32);
    while j <= x + reach {
        if j > x - reach {
            f(j);
        }
        j *= 2.0;
    }
}

/// `d₂` in the slab model at distance `x > 0`.
pub fn slab_d2(x: f64) -> f64 {
    let r = bracket_radius(x);
    let mut v = quantized_distance(x - r);
    jumps_near(x, r, |j| v += 0.5 * j * (1.0 - marginal_cdf((j - x) / r)));
    v
}

fn gauss3() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(3).expect("degree 3"))
}

/// `d₀` in the slab model at distance `x > 0`.
///
/// `d₂` is a cubic in `x` near each jump and constant elsewhere, so splitting `[−1,1]` at the
/// transitions makes a 3-point Gauss rule exact on every piece.
pub fn slab_d0(x: f64) -> f64 {
    let r = bracket_radius(x);
    let mut cuts = vec![-1.0, 1.0];
    jumps_near(x, 4.0 * r, |j| {
        let rj = bracket_radius(j);
        for e in [j - rj, j + rj] {
            let z = (e - x) / r;
            if z > -1.0 && z < 1.0 {
                cuts.push(z);
            }
        }
    });
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rule = gauss3();
    cuts.windows(2)
        .map(|w| rule.integrate(w[0], w[1], |z| marginal_density(z) * slab_d2(x + r * z)))
        .sum()
}
