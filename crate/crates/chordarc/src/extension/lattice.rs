//! Lazily filled node caches on regular lattices.
//!
//! Nodes are grouped in 8³ bricks held in a concurrent map. Each slot stores `f64` bits in an
//! atomic with NaN meaning "not computed yet"; concurrent fills of the same node compute the
//! same deterministic value, so races are benign.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

use dashmap::DashMap;

use crate::geom::Point3;

const SHIFT: i32 = 3;
const SIDE: i32 = 1 << SHIFT;
const SLOTS: usize = (SIDE * SIDE * SIDE) as usize;

struct Brick([AtomicU64; SLOTS]);

impl Brick {
    fn new() -> Self {
        Brick(std::array::from_fn(|_| AtomicU64::new(f64::NAN.to_bits())))
    }
}

type Key = [i32; 3];

/// One level of one stage: spacing `h`, nodes at `origin + h·(i, j, k)`.
pub(crate) struct Lattice {
    pub h: f64,
    pub origin: Point3,
    bricks: DashMap<Key, Arc<Brick>>,
    computed: AtomicUsize,
}

fn split(i: [i32; 3]) -> (Key, usize) {
    let key = [i[0] >> SHIFT, i[1] >> SHIFT, i[2] >> SHIFT];
    let m = SIDE - 1;
    let slot = ((i[0] & m) * SIDE * SIDE + (i[1] & m) * SIDE + (i[2] & m)) as usize;
    (key, slot)
}

/// Cubic B-spline weights for nodes `i0−1 ..= i0+2` at fractional offset `t ∈ [0,1)`.
pub(crate) fn bspline_weights(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    let t2 = t * t;
    let t3 = t2 * t;
    [s * s * s / 6.0, (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0, (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0, t3 / 6.0]
}

/// Derivatives of [`bspline_weights`] with respect to `t`.
pub(crate) fn bspline_derivative_weights(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    [-0.5 * s * s, 1.5 * t * t - 2.0 * t, -1.5 * t * t + t + 0.5, 0.5 * t * t]
}

impl Lattice {
    pub fn new(h: f64, origin: Point3) -> Self {
        Lattice { h, origin, bricks: DashMap::new(), computed: AtomicUsize::new(0) }
    }

    pub fn node(&self, i: [i32; 3]) -> Point3 {
        self.origin + Point3::new(i[0] as f64, i[1] as f64, i[2] as f64) * self.h
    }

    /// Lower cell corner and fractional offsets of `p`.
    pub fn locate(&self, p: Point3) -> ([i32; 3], [f64; 3]) {
        let u = (p - self.origin) / self.h;
        let f = [u.x.floor(), u.y.floor(), u.z.floor()];
        ([f[0] as i32, f[1] as i32, f[2] as i32], [u.x - f[0], u.y - f[1], u.z - f[2]])
    }

    pub fn computed(&self) -> usize {
        self.computed.load(Ordering::Relaxed)
    }

    fn brick(&self, key: Key) -> Arc<Brick> {
        if let Some(b) = self.bricks.get(&key) {
            return b.clone();
        }
        self.bricks.entry(key).or_insert_with(|| Arc::new(Brick::new())).clone()
    }

    /// Fills `out` with the `N³` nodes starting at `lo`, computing missing ones with `eval`.
    /// No map guard is held while `eval` runs.
    pub fn gather<const N: usize>(
        &self,
        lo: [i32; 3],
        out: &mut [[[f64; N]; N]; N],
        eval: &dyn Fn(Point3) -> f64,
    ) {
        let mut cached: Option<(Key, Arc<Brick>)> = None;
        for a in 0..N {
            for b in 0..N {
                for c in 0..N {
                    let idx = [lo[0] + a as i32, lo[1] + b as i32, lo[2] + c as i32];
                    let (key, slot) = split(idx);
                    let brick = match &cached {
                        Some((k, br)) if *k == key => br.clone(),
                        _ => {
                            let br = self.brick(key);
                            cached = Some((key, br.clone()));
                            br
                        }
                    };
                    let bits = brick.0[slot].load(Ordering::Relaxed);
                    let mut v = f64::from_bits(bits);
                    if v.is_nan() {
                        v = eval(self.node(idx));
                        brick.0[slot].store(v.to_bits(), Ordering::Relaxed);
                        self.computed.fetch_add(1, Ordering::Relaxed);
                    }
                    out[a][b][c] = v;
                }
            }
        }
    }

    pub fn trilinear(&self, p: Point3, eval: &dyn Fn(Point3) -> f64) -> f64 {
        let (lo, t) = self.locate(p);
        let mut v = [[[0.0; 2]; 2]; 2];
        self.gather::<2>(lo, &mut v, eval);
        let w = |i: usize, t: f64| if i == 0 { 1.0 - t } else { t };
        let mut s = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    s += w(a, t[0]) * w(b, t[1]) * w(c, t[2]) * v[a][b][c];
                }
            }
        }
        s
    }

    pub fn bspline(&self, p: Point3, eval: &dyn Fn(Point3) -> f64) -> f64 {
        let (lo, t) = self.locate(p);
        let mut v = [[[0.0; 4]; 4]; 4];
        self.gather::<4>([lo[0] - 1, lo[1] - 1, lo[2] - 1], &mut v, eval);
        let (wx, wy, wz) = (bspline_weights(t[0]), bspline_weights(t[1]), bspline_weights(t[2]));
        let mut s = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                let mut row = 0.0;
                for c in 0..4 {
                    row += wz[c] * v[a][b][c];
                }
                s += wx[a] * wy[b] * row;
            }
        }
        s
    }

    /// Spline value and gradient at `p`.
    pub fn bspline_gradient(&self, p: Point3, eval: &dyn Fn(Point3) -> f64) -> (f64, Point3) {
        let (lo, t) = self.locate(p);
        let mut v = [[[0.0; 4]; 4]; 4];
        self.gather::<4>([lo[0] - 1, lo[1] - 1, lo[2] - 1], &mut v, eval);
        let w = [bspline_weights(t[0]), bspline_weights(t[1]), bspline_weights(t[2])];
        let dw = [bspline_derivative_weights(t[0]), bspline_derivative_weights(t[1]), bspline_derivative_weights(t[2])];
        let (mut f, mut gx, mut gy, mut gz) = (0.0, 0.0, 0.0, 0.0);
        for a in 0..4 {
            for b in 0..4 {
                let (mut r, mut rz) = (0.0, 0.0);
                for c in 0..4 {
                    r += w[2][c] * v[a][b][c];
                    rz += dw[2][c] * v[a][b][c];
                }
                f += w[0][a] * w[1][b] * r;
                gx += dw[0][a] * w[1][b] * r;
                gy += w[0][a] * dw[1][b] * r;
                gz += w[0][a] * w[1][b] * rz;
            }
        }
        (f, Point3::new(gx, gy, gz) / self.h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_handles_negative_indices() {
        assert_eq!(split([-1, 0, 9]), ([-1, 0, 1], (7 * 64 + 1) as usize));
    }

    #[test]
    fn interpolants_reproduce_linear_functions() {
        let lat = Lattice::new(0.3, Point3::new(0.15, -0.1, 0.05));
        let f = |p: Point3| 2.0 * p.x - p.y + 0.5 * p.z + 1.0;
        for p in [Point3::new(0.41, -2.3, 7.7), Point3::new(-1.0, 0.0, 0.33)] {
            assert!((lat.trilinear(p, &f) - f(p)).abs() < 1e-12);
            assert!((lat.bspline(p, &f) - f(p)).abs() < 1e-12);
        }
        let (v, g) = lat.bspline_gradient(Point3::new(0.41, -2.3, 7.7), &f);
        assert!((v - f(Point3::new(0.41, -2.3, 7.7))).abs() < 1e-12);
        assert!((g - Point3::new(2.0, -1.0, 0.5)).norm() < 1e-12);
        let w = bspline_weights(0.37);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(lat.computed() > 0);
        let before = lat.computed();
        lat.trilinear(Point3::new(0.41, -2.3, 7.7), &f);
        assert_eq!(lat.computed(), before);
    }
}
