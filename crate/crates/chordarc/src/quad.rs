//! Fixed quadrature rules on the unit sphere and unit ball. Weights sum to one, so the
//! rules compute averages.

use gauss_quad::GaussLegendre;

use crate::geom::Point3;

#[derive(Debug, thiserror::Error)]
pub enum QuadError {
    #[error("unsupported node count {0}; use 48, 72, 160 or 512")]
    UnsupportedNodeCount(usize),
}

/// Directions and weights on the unit sphere.
#[derive(Clone, Debug)]
pub struct SphereRule {
    pub dirs: Vec<Point3>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    /// Gauss-Legendre in `cos θ` times the trapezoid rule in `φ`; exact for harmonics of degree
    /// `< min(2·n_theta, n_phi)`.
    pub fn product(n_theta: usize, n_phi: usize) -> Self {
        let gl = GaussLegendre::new(n_theta.max(2)).expect("degree >= 2");
        let mut dirs = Vec::new();
        let mut weights = Vec::new();
        for &(c, w) in gl.as_node_weight_pairs() {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for j in 0..n_phi {
                let phi = std::f64::consts::TAU * (j as f64 + 0.5) / n_phi as f64;
                dirs.push(Point3::new(s * phi.cos(), s * phi.sin(), c));
                weights.push(0.5 * w / n_phi as f64);
            }
        }
        SphereRule { dirs, weights }
    }

    /// The 12 icosahedron vertices, a spherical 5-design.
    pub fn icosahedron() -> Self {
        let g = (1.0 + 5f64.sqrt()) / 2.0;
        let mut dirs = Vec::new();
        for &a in &[-1.0, 1.0] {
            for &b in &[-g, g] {
                dirs.push(Point3::new(0.0, a, b));
                dirs.push(Point3::new(a, b, 0.0));
                dirs.push(Point3::new(b, 0.0, a));
            }
        }
        let dirs: Vec<Point3> = dirs.into_iter().map(|d| d / d.norm()).collect();
        SphereRule { weights: vec![1.0 / 12.0; 12], dirs }
    }

    /// Default 128-node rule for sphere averages (degree 15).
    pub fn mean_value_default() -> Self {
        Self::product(8, 16)
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    /// Average of `f` over the sphere of radius `r` centred at `c`.
    pub fn average(&self, c: Point3, r: f64, mut f: impl FnMut(Point3) -> f64) -> f64 {
        self.dirs.iter().zip(&self.weights).map(|(d, w)| w * f(c + *d * r)).sum()
    }
}

/// Nodes in the unit ball with weights summing to one.
#[derive(Clone, Debug)]
pub struct BallRule {
    pub nodes: Vec<Point3>,
    pub weights: Vec<f64>,
}

impl BallRule {
    /// Gauss-Legendre in `r ∈ [0,1]` with the volume factor `3r²` folded into the weights,
    /// crossed with a sphere rule.
    pub fn product(n_radial: usize, sphere: &SphereRule) -> Self {
        let gl = GaussLegendre::new(n_radial.max(2)).expect("degree >= 2");
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for &(x, w) in gl.as_node_weight_pairs() {
            let r = 0.5 * (1.0 + x);
            let wr = 0.5 * w * 3.0 * r * r;
            for (d, ws) in sphere.dirs.iter().zip(&sphere.weights) {
                nodes.push(*d * r);
                weights.push(wr * ws);
            }
        }
        BallRule { nodes, weights }
    }

    /// Rule selected by node count: 48 and 72 are degree 5, 160 is degree 7, 512 is the oracle mode.
    pub fn with_nodes(count: usize) -> Result<Self, QuadError> {
        match count {
            48 => Ok(Self::product(4, &SphereRule::icosahedron())),
            72 => Ok(Self::product(4, &SphereRule::product(3, 6))),
            160 => Ok(Self::product(5, &SphereRule::product(4, 8))),
            512 => Ok(Self::product(8, &SphereRule::product(8, 8))),
            n => Err(QuadError::UnsupportedNodeCount(n)),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Average of `f` over the ball of radius `r` centred at `c`.
    pub fn average(&self, c: Point3, r: f64, mut f: impl FnMut(Point3) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(n, w)| w * f(c + *n * r)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Exact averages of monomials x^a y^b z^c over the unit sphere / ball.
    fn double_factorial(n: i32) -> f64 {
        if n <= 0 {
            1.0
        } else {
            (n as f64) * double_factorial(n - 2)
        }
    }

    fn sphere_moment(a: i32, b: i32, c: i32) -> f64 {
        if a % 2 == 1 || b % 2 == 1 || c % 2 == 1 {
            return 0.0;
        }
        let k = a + b + c;
        double_factorial(a - 1) * double_factorial(b - 1) * double_factorial(c - 1) / double_factorial(k + 1)
    }

    fn ball_moment(a: i32, b: i32, c: i32) -> f64 {
        sphere_moment(a, b, c) * 3.0 / (a + b + c + 3) as f64
    }

    fn monomial(p: Point3, a: i32, b: i32, c: i32) -> f64 {
        p.x.powi(a) * p.y.powi(b) * p.z.powi(c)
    }

    #[test]
    fn ball_rules_are_exact_to_their_degree() {
        for (count, deg) in [(48, 5), (72, 5), (160, 7), (512, 7)] {
            let rule = BallRule::with_nodes(count).unwrap();
            assert_eq!(rule.len(), count);
            for a in 0..=deg {
                for b in 0..=deg - a {
                    for c in 0..=deg - a - b {
                        let q = rule.average(Point3::ORIGIN, 1.0, |p| monomial(p, a, b, c));
                        assert!((q - ball_moment(a, b, c)).abs() < 1e-13, "{count} {a}{b}{c}");
                    }
                }
            }
        }
        assert!(BallRule::with_nodes(64).is_err());
    }

    #[test]
    fn sphere_default_degree_fifteen() {
        let rule = SphereRule::mean_value_default();
        assert_eq!(rule.len(), 128);
        for (a, b, c) in [(2, 0, 0), (4, 2, 0), (6, 4, 4), (15, 0, 0), (8, 4, 2)] {
            let q = rule.average(Point3::ORIGIN, 1.0, |p| monomial(p, a, b, c));
            assert!((q - sphere_moment(a, b, c)).abs() < 1e-14, "{a}{b}{c}");
        }
    }
}
