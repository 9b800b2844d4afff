//! Newtonian potentials of volumetric charge clouds.
//!
//! A cloud is a list of cubic cells with weights (density × volume) and optional dipole
//! moments. The potential is `−(1/4π) Σ [wᵢ/ρᵢ + pᵢ·(M − cᵢ)/ρᵢ³]` with `ρᵢ = ‖M − cᵢ‖`;
//! inside the equal-volume ball of a cell the kernel switches to the potential of a uniform
//! ball, so evaluation is finite everywhere. The treecode is a Barnes-Hut scheme over an
//! octree of the cells, with node monopoles, dipoles and quadrupoles about the node center.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use gauss_quad::GaussLegendre;
use rayon::prelude::*;

use crate::extension::ExtensionField;
use crate::geom::Point3;

#[derive(Debug, thiserror::Error)]
pub enum PotentialError {
    #[error("octree depth cap reached with unresolved volume {volume:e}")]
    DepthCapExceeded { volume: f64 },
    #[error("region contains no cells")]
    EmptyRegion,
    #[error("probe at distance {distance:e} is below the resolved floor {floor:e}")]
    BelowFloor { distance: f64, floor: f64 },
    #[error("cloud file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cloud total charge {found:e} does not match header {expected:e}")]
    Integrity { expected: f64, found: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `(6/π)^{1/3}`: radius of the ball with the volume of a unit half-width cube.
const EQUIVALENT_RADIUS: f64 = 1.240_700_981_798_799;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChargeCell {
    pub center: Point3,
    pub half_width: f64,
    pub weight: f64,
    /// Mean density over the cell.
    pub density: f64,
    /// First moment `∫ (x − center) ρ dx` of the cell's charge.
    pub dipole: Point3,
}

impl ChargeCell {
    pub fn new(center: Point3, half_width: f64, weight: f64) -> Self {
        let vol = 8.0 * half_width * half_width * half_width;
        ChargeCell { center, half_width, weight, density: weight / vol, dipole: Point3::ORIGIN }
    }

    pub fn with_dipole(mut self, dipole: Point3) -> Self {
        self.dipole = dipole;
        self
    }

    /// Radius of the ball with the cell's volume; the smeared kernel applies inside it.
    pub fn smear_radius(&self) -> f64 {
        EQUIVALENT_RADIUS * self.half_width
    }

    /// `w/ρ + p·r/ρ³` outside the smear radius `a`; inside, the uniform-ball kernel
    /// `(3a² − ρ²)/(2a³)` for the charge and `p·r/a³` for the dipole.
    fn kernel(&self, m: Point3) -> f64 {
        let r = m - self.center;
        let rho = r.norm();
        let a = self.smear_radius();
        if rho >= a {
            (self.weight + self.dipole.dot(r) / (rho * rho)) / rho
        } else {
            let a3 = a * a * a;
            self.weight * (3.0 * a * a - rho * rho) / (2.0 * a3) + self.dipole.dot(r) / a3
        }
    }

    fn kernel_gradient(&self, m: Point3) -> Point3 {
        let r = m - self.center;
        let rho = r.norm();
        let a = self.smear_radius();
        if rho >= a {
            let r3 = rho * rho * rho;
            r * (-self.weight / r3) + dipole_gradient(self.dipole, r, rho)
        } else {
            let a3 = a * a * a;
            r * (-self.weight / a3) + self.dipole / a3
        }
    }
}

/// `rᵀQr`.
fn quadratic_form(q: &[[f64; 3]; 3], r: Point3) -> f64 {
    let r = r.to_array();
    (0..3).map(|i| (0..3).map(|j| q[i][j] * r[i] * r[j]).sum::<f64>()).sum()
}

fn mat_vec(q: &[[f64; 3]; 3], r: Point3) -> Point3 {
    let r = r.to_array();
    Point3::from_array(std::array::from_fn(|i| (0..3).map(|j| q[i][j] * r[j]).sum()))
}

/// `∇ₘ (p·r/ρ³)` with `r = M − c`.
fn dipole_gradient(p: Point3, r: Point3, rho: f64) -> Point3 {
    let r3 = rho * rho * rho;
    p / r3 - r * (3.0 * p.dot(r) / (r3 * rho * rho))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvalMode {
    Direct,
    /// Treecode; a node of radius `r` is expanded when `r < θ·(dist − r)`, i.e. when it is
    /// seen from the evaluation point under an angle below about `θ` measured from its near side.
    Tree { theta: f64 },
}

impl Default for EvalMode {
    fn default() -> Self {
        EvalMode::Tree { theta: 0.5 }
    }
}

#[derive(Clone, Debug)]
struct Node {
    monopole: f64,
    dipole: Point3,
    // Traceless quadrupole `Σ w(3ssᵀ − s²I)` plus the cell dipole terms, `s` the offset from `center`.
    quadrupole: [[f64; 3]; 3],
    // Expansion center: centroid weighted by |w| (well defined for mixed signs).
    center: Point3,
    // Radius about `center` enclosing every cell's smear ball.
    radius: f64,
    start: usize,
    end: usize,
    children: Vec<usize>,
}

/// Cells plus their octree.
#[derive(Clone, Debug)]
pub struct ChargeCloud {
    cells: Vec<ChargeCell>,
    total_charge: f64,
    bbox: (Point3, Point3),
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl ChargeCloud {
    pub fn new(cells: Vec<ChargeCell>) -> Self {
        let total_charge = cells.iter().map(|c| c.weight).sum();
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for c in &cells {
            let h = Point3::new(c.half_width, c.half_width, c.half_width);
            lo = lo.component_min(c.center - h);
            hi = hi.component_max(c.center + h);
        }
        let mut cloud = ChargeCloud {
            order: (0..cells.len()).collect(),
            cells,
            total_charge,
            bbox: (lo, hi),
            nodes: Vec::new(),
        };
        if !cloud.cells.is_empty() {
            let center = (lo + hi) * 0.5;
            let hw = (hi - lo).max_abs() * 0.5;
            cloud.build_node(0, cloud.cells.len(), center, hw, 0);
        }
        cloud
    }

    fn build_node(&mut self, start: usize, end: usize, box_center: Point3, hw: f64, depth: u32) -> usize {
        let idx = self.nodes.len();
        let (mut monopole, mut abs, mut acc) = (0.0, 0.0, Point3::ORIGIN);
        for &i in &self.order[start..end] {
            let c = &self.cells[i];
            monopole += c.weight;
            abs += c.weight.abs();
            acc += c.center * c.weight.abs();
        }
        let center = if abs > 0.0 {
            acc / abs
        } else {
            self.order[start..end].iter().fold(Point3::ORIGIN, |s, &i| s + self.cells[i].center) / (end - start) as f64
        };
        let radius = self.order[start..end]
            .iter()
            .map(|&i| self.cells[i].center.dist(center) + self.cells[i].smear_radius())
            .fold(0.0, f64::max);
        let mut dipole = Point3::ORIGIN;
        let mut quadrupole = [[0.0; 3]; 3];
        for &i in &self.order[start..end] {
            let c = &self.cells[i];
            let s = c.center - center;
            dipole += c.dipole + s * c.weight;
            let (sa, pa) = (s.to_array(), c.dipole.to_array());
            let (s2, ps) = (s.norm2(), c.dipole.dot(s));
            for a in 0..3 {
                for b in 0..3 {
                    let diag = if a == b { 1.0 } else { 0.0 };
                    quadrupole[a][b] += c.weight * (3.0 * sa[a] * sa[b] - s2 * diag)
                        + 3.0 * (pa[a] * sa[b] + sa[a] * pa[b])
                        - 2.0 * ps * diag;
                }
            }
        }
        self.nodes.push(Node { monopole, dipole, quadrupole, center, radius, start, end, children: Vec::new() });
        if end - start <= LEAF_SIZE || depth > 40 {
            return idx;
        }
        let octant = |p: Point3| (p.x > box_center.x) as usize | ((p.y > box_center.y) as usize) << 1 | ((p.z > box_center.z) as usize) << 2;
        let cells = &self.cells;
        self.order[start..end].sort_by_key(|&i| octant(cells[i].center));
        let mut bounds = [start; 9];
        for o in 0..8 {
            bounds[o + 1] = bounds[o] + self.order[start..end].iter().filter(|&&i| octant(cells[i].center) == o).count();
        }
        let h = hw * 0.5;
        let mut children = Vec::new();
        for o in 0..8 {
            if bounds[o + 1] > bounds[o] {
                let sign = |bit: usize| if o & bit != 0 { h } else { -h };
                let c = box_center + Point3::new(sign(1), sign(2), sign(4));
                children.push(self.build_node(bounds[o], bounds[o + 1], c, h, depth + 1));
            }
        }
        self.nodes[idx].children = children;
        idx
    }

    pub fn cells(&self) -> &[ChargeCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_charge(&self) -> f64 {
        self.total_charge
    }

    pub fn bounding_box(&self) -> (Point3, Point3) {
        self.bbox
    }

    /// Monopoles of the octree nodes at each depth (root first), for accounting checks.
    pub fn monopoles_by_depth(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let mut frontier = vec![0usize];
        while !frontier.is_empty() {
            out.push(frontier.iter().map(|&i| self.nodes[i].monopole).collect());
            let mut next = Vec::new();
            for &i in &frontier {
                let n = &self.nodes[i];
                if n.children.is_empty() {
                    // Leaves carry through so every depth covers all cells.
                    next.push(i);
                } else {
                    next.extend(&n.children);
                }
            }
            if next == frontier {
                break;
            }
            frontier = next;
        }
        out
    }

    /// `Σ wᵢ K(M, cᵢ)` (no prefactor).
    fn kernel_sum(&self, m: Point3, mode: EvalMode) -> f64 {
        match mode {
            EvalMode::Direct => self.cells.iter().map(|c| c.kernel(m)).sum(),
            EvalMode::Tree { theta } => {
                if self.nodes.is_empty() {
                    return 0.0;
                }
                let mut sum = 0.0;
                let mut stack = vec![0usize];
                while let Some(i) = stack.pop() {
                    let n = &self.nodes[i];
                    let r = m - n.center;
                    let dist = r.norm();
                    if n.radius < theta * (dist - n.radius) {
                        let d2 = dist * dist;
                        sum += (n.monopole + n.dipole.dot(r) / d2 + quadratic_form(&n.quadrupole, r) / (2.0 * d2 * d2)) / dist;
                    } else if n.children.is_empty() {
                        for &j in &self.order[n.start..n.end] {
                            sum += self.cells[j].kernel(m);
                        }
                    } else {
                        stack.extend(n.children.iter().rev());
                    }
                }
                sum
            }
        }
    }

    fn kernel_gradient_sum(&self, m: Point3, mode: EvalMode) -> Point3 {
        match mode {
            EvalMode::Direct => self.cells.iter().fold(Point3::ORIGIN, |s, c| s + c.kernel_gradient(m)),
            EvalMode::Tree { theta } => {
                if self.nodes.is_empty() {
                    return Point3::ORIGIN;
                }
                let mut sum = Point3::ORIGIN;
                let mut stack = vec![0usize];
                while let Some(i) = stack.pop() {
                    let n = &self.nodes[i];
                    let v = m - n.center;
                    let dist = v.norm();
                    if n.radius < theta * (dist - n.radius) {
                        let d5 = dist.powi(5);
                        let quad = mat_vec(&n.quadrupole, v) / d5 - v * (2.5 * quadratic_form(&n.quadrupole, v) / (d5 * dist * dist));
                        sum += v * (-n.monopole / (dist * dist * dist)) + dipole_gradient(n.dipole, v, dist) + quad;
                    } else if n.children.is_empty() {
                        for &j in &self.order[n.start..n.end] {
                            sum += self.cells[j].kernel_gradient(m);
                        }
                    } else {
                        stack.extend(n.children.iter().rev());
                    }
                }
                sum
            }
        }
    }

    /// `−(1/4π) Σ [wᵢ/ρᵢ + pᵢ·(M − cᵢ)/ρᵢ³]`.
    pub fn potential(&self, m: Point3, mode: EvalMode) -> f64 {
        -self.kernel_sum(m, mode) / (4.0 * std::f64::consts::PI)
    }

    pub fn potential_direct(&self, m: Point3) -> f64 {
        self.potential(m, EvalMode::Direct)
    }

    pub fn potential_tree(&self, m: Point3, theta: f64) -> f64 {
        self.potential(m, EvalMode::Tree { theta })
    }

    /// Analytic gradient of [`potential`](Self::potential).
    pub fn gradient(&self, m: Point3, mode: EvalMode) -> Point3 {
        self.kernel_gradient_sum(m, mode) * (-1.0 / (4.0 * std::f64::consts::PI))
    }

    pub fn potential_many(&self, points: &[Point3], mode: EvalMode) -> Vec<f64> {
        points.par_iter().map(|&p| self.potential(p, mode)).collect()
    }

    /// Text dump: a `# total_charge` header, then `cx cy cz half_width weight` per line,
    /// followed by `px py pz` when the cloud carries dipoles.
    pub fn to_text(&self) -> String {
        let mut s = format!("# total_charge {:e}\n", self.total_charge);
        let dipoles = self.cells.iter().any(|c| c.dipole != Point3::ORIGIN);
        for c in &self.cells {
            let _ = write!(s, "{:e} {:e} {:e} {:e} {:e}", c.center.x, c.center.y, c.center.z, c.half_width, c.weight);
            if dipoles {
                let _ = write!(s, " {:e} {:e} {:e}", c.dipole.x, c.dipole.y, c.dipole.z);
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), PotentialError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, PotentialError> {
        let mut expected = None;
        let mut cells = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |message: String| PotentialError::Parse { line: i + 1, message };
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("total_charge") {
                    expected = Some(v.trim().parse::<f64>().map_err(|e| err(e.to_string()))?);
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| err(e.to_string())))
                .collect::<Result<_, _>>()?;
            if !(v.len() == 5 || v.len() == 8) || !(v[3] > 0.0) {
                return Err(err("expected cx cy cz half_width weight [px py pz]".into()));
            }
            let mut cell = ChargeCell::new(Point3::new(v[0], v[1], v[2]), v[3], v[4]);
            if v.len() == 8 {
                cell.dipole = Point3::new(v[5], v[6], v[7]);
            }
            cells.push(cell);
        }
        let cloud = ChargeCloud::new(cells);
        if let Some(e) = expected {
            let scale = cloud.cells.iter().map(|c| c.weight.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
            if (cloud.total_charge - e).abs() > 1e-9 * scale {
                return Err(PotentialError::Integrity { expected: e, found: cloud.total_charge });
            }
        }
        Ok(cloud)
    }

    pub fn load(path: &Path) -> Result<Self, PotentialError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Octree refinement policy.
#[derive(Clone, Copy, Debug)]
pub struct Resolution {
    /// Refine while `half_width > theta_ref · scale(center)`.
    pub theta_ref: f64,
    /// Cells are always refined to this depth.
    pub min_depth: u32,
    /// Cells straddling the region boundary are refined to this depth.
    pub boundary_depth: u32,
    pub max_depth: u32,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution { theta_ref: 0.25, min_depth: 2, boundary_depth: 6, max_depth: 24 }
    }
}

/// A leaf cube of an adaptive octree.
#[derive(Clone, Copy, Debug)]
pub struct Octant {
    pub center: Point3,
    pub half_width: f64,
    pub depth: u32,
}

impl Octant {
    pub fn volume(&self) -> f64 {
        let s = 2.0 * self.half_width;
        s * s * s
    }

    /// The 8 corners followed by the center.
    pub fn probes(&self) -> [Point3; 9] {
        let h = self.half_width;
        let mut p = [self.center; 9];
        for (i, q) in p.iter_mut().take(8).enumerate() {
            let s = |bit: usize| if i & bit != 0 { h } else { -h };
            *q = self.center + Point3::new(s(1), s(2), s(4));
        }
        p
    }

    fn children(&self) -> [Octant; 8] {
        let h = self.half_width * 0.5;
        std::array::from_fn(|i| {
            let s = |bit: usize| if i & bit != 0 { h } else { -h };
            Octant { center: self.center + Point3::new(s(1), s(2), s(4)), half_width: h, depth: self.depth + 1 }
        })
    }
}

/// Depth-first adaptive subdivision of the root cube; `refine` decides per octant.
/// Leaves are returned in a deterministic order.
pub fn adaptive_octants(root: Octant, max_depth: u32, mut refine: impl FnMut(&Octant) -> bool) -> Vec<Octant> {
    let mut leaves = Vec::new();
    let mut stack = vec![root];
    while let Some(o) = stack.pop() {
        if o.depth < max_depth && refine(&o) {
            stack.extend(o.children().into_iter().rev());
        } else {
            leaves.push(o);
        }
    }
    leaves
}

/// Discretizes `density` over the region `inside` within the cube `(center, half_width)`.
///
/// Inside fractions of boundary cells come from the 9 corner and center probes. `scale`
/// sets the local resolution (return `f64::INFINITY` for none).
pub fn discretize_region(
    center: Point3,
    half_width: f64,
    inside: impl Fn(Point3) -> bool,
    density: impl Fn(Point3) -> f64,
    scale: impl Fn(Point3) -> f64,
    res: Resolution,
) -> Result<ChargeCloud, PotentialError> {
    let mut unresolved = 0.0;
    let fraction = |o: &Octant| o.probes().iter().filter(|p| inside(**p)).count();
    let leaves = adaptive_octants(Octant { center, half_width, depth: 0 }, res.max_depth, |o| {
        if o.depth < res.min_depth {
            return true;
        }
        let n_in = fraction(o);
        let wants_scale = o.half_width > res.theta_ref * scale(o.center);
        (n_in > 0 && wants_scale) || (n_in > 0 && n_in < 9 && o.depth < res.boundary_depth)
    });
    let mut cells = Vec::new();
    for o in &leaves {
        let n_in = fraction(o);
        if n_in == 0 {
            continue;
        }
        if o.depth >= res.max_depth && o.half_width > res.theta_ref * scale(o.center) {
            unresolved += o.volume() * n_in as f64 / 9.0;
        }
        let rho = density(o.center);
        let mut cell = ChargeCell::new(o.center, o.half_width, rho * o.volume() * n_in as f64 / 9.0);
        cell.density = rho;
        cells.push(cell);
    }
    if cells.is_empty() {
        return Err(PotentialError::EmptyRegion);
    }
    if unresolved > 0.0 {
        return Err(PotentialError::DepthCapExceeded { volume: unresolved });
    }
    Ok(ChargeCloud::new(cells))
}

/// Cube enclosing the support of `f₀`.
pub fn support_cube(field: &ExtensionField) -> (Point3, f64) {
    let v = field.curve().vertices();
    let (mut lo, mut hi) = (v[0], v[0]);
    for p in v {
        lo = lo.component_min(*p);
        hi = hi.component_max(*p);
    }
    ((lo + hi) * 0.5, (hi - lo).max_abs() * 0.5 + field.support_radius())
}

/// Integer address of a cube in an octree: depth and index triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CubeKey {
    pub depth: u32,
    pub index: [i64; 3],
}

/// Adaptive octree addressed by [`CubeKey`], remembering which cubes were refined.
pub struct KeyedOctree {
    corner: Point3,
    side: f64,
    leaves: Vec<CubeKey>,
    refined: HashSet<CubeKey>,
}

impl KeyedOctree {
    pub fn build(center: Point3, half_width: f64, max_depth: u32, mut refine: impl FnMut(&Octant) -> bool) -> Self {
        let corner = center - Point3::new(half_width, half_width, half_width);
        let mut tree = KeyedOctree { corner, side: 2.0 * half_width, leaves: Vec::new(), refined: HashSet::new() };
        let mut stack = vec![CubeKey { depth: 0, index: [0; 3] }];
        while let Some(key) = stack.pop() {
            let o = tree.octant(key);
            if key.depth < max_depth && refine(&o) {
                tree.refined.insert(key);
                for c in (0..8).rev() {
                    let bit = |b: usize| ((c >> b) & 1) as i64;
                    stack.push(CubeKey {
                        depth: key.depth + 1,
                        index: [2 * key.index[0] + bit(0), 2 * key.index[1] + bit(1), 2 * key.index[2] + bit(2)],
                    });
                }
            } else {
                tree.leaves.push(key);
            }
        }
        tree
    }

    pub fn leaves(&self) -> &[CubeKey] {
        &self.leaves
    }

    fn cube_side(&self, depth: u32) -> f64 {
        self.side * 0.5f64.powi(depth as i32)
    }

    pub fn octant(&self, key: CubeKey) -> Octant {
        let s = self.cube_side(key.depth);
        let i = key.index;
        Octant {
            center: self.corner + Point3::new(i[0] as f64 + 0.5, i[1] as f64 + 0.5, i[2] as f64 + 0.5) * s,
            half_width: 0.5 * s,
            depth: key.depth,
        }
    }

    fn inside_root(&self, key: CubeKey) -> bool {
        let n = 1i64 << key.depth;
        key.index.iter().all(|&i| (0..n).contains(&i))
    }
}

/// Outward fluxes `∮ ∂ₙu` of a gradient field through the leaves of a [`KeyedOctree`].
///
/// Each face is integrated once, on the finer side of the two cubes sharing it, so the
/// fluxes of neighbouring leaves cancel exactly and the leaf sums telescope.
struct FluxIntegrator<'a> {
    tree: &'a KeyedOctree,
    nodes: Vec<(f64, f64)>,
    cache: HashMap<(CubeKey, usize), FaceMoments>,
}

/// Integrals over one face with normal `+axis`: `∫∂ₙu`, `∫x ∂ₙu` and `∫u`.
#[derive(Clone, Copy, Default)]
struct FaceMoments {
    flux: f64,
    first: Point3,
    value: f64,
}

impl std::ops::AddAssign for FaceMoments {
    fn add_assign(&mut self, o: Self) {
        self.flux += o.flux;
        self.first += o.first;
        self.value += o.value;
    }
}

impl<'a> FluxIntegrator<'a> {
    fn new(tree: &'a KeyedOctree, order: usize) -> Self {
        let gl = GaussLegendre::new(order.max(1)).expect("order >= 1");
        let nodes = gl.as_node_weight_pairs().iter().map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect();
        FluxIntegrator { tree, nodes, cache: HashMap::new() }
    }

    // Flux in the +axis direction through the face between `key` and its +axis neighbour.
    fn face(&mut self, key: CubeKey, axis: usize, eval: &dyn Fn(Point3) -> (f64, Point3)) -> FaceMoments {
        let mut next = key;
        next.index[axis] += 1;
        if !self.tree.inside_root(key) || !self.tree.inside_root(next) {
            return FaceMoments::default();
        }
        if let Some(&v) = self.cache.get(&(key, axis)) {
            return v;
        }
        let v = if self.tree.refined.contains(&key) || self.tree.refined.contains(&next) {
            let mut sum = FaceMoments::default();
            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
            for c in 0..4 {
                let mut child = CubeKey { depth: key.depth + 1, index: [0; 3] };
                child.index[axis] = 2 * key.index[axis] + 1;
                child.index[a] = 2 * key.index[a] + (c & 1) as i64;
                child.index[b] = 2 * key.index[b] + (c >> 1) as i64;
                sum += self.face(child, axis, eval);
            }
            sum
        } else {
            let o = self.tree.octant(key);
            let s = 2.0 * o.half_width;
            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
            let mut base = o.center - Point3::new(o.half_width, o.half_width, o.half_width);
            base = base + unit(axis) * s;
            let mut sum = FaceMoments::default();
            for &(u, wu) in &self.nodes {
                for &(v, wv) in &self.nodes {
                    let p = base + unit(a) * (u * s) + unit(b) * (v * s);
                    let (f, g) = eval(p);
                    let w = wu * wv * s * s;
                    let gn = g.axis(axis);
                    sum += FaceMoments { flux: w * gn, first: p * (w * gn), value: w * f };
                }
            }
            sum
        };
        self.cache.insert((key, axis), v);
        v
    }

    /// `(∫Δu, ∫(x − c)Δu)` over the leaf, from Green's identities on its faces.
    fn leaf_moments(&mut self, key: CubeKey, eval: &dyn Fn(Point3) -> (f64, Point3)) -> (f64, Point3) {
        let c = self.tree.octant(key).center;
        let (mut q, mut p) = (0.0, Point3::ORIGIN);
        for axis in 0..3 {
            let mut prev = key;
            prev.index[axis] -= 1;
            for (face, sign) in [(self.face(key, axis, eval), 1.0), (self.face(prev, axis, eval), -1.0)] {
                q += sign * face.flux;
                p += (face.first - c * face.flux - unit(axis) * face.value) * sign;
            }
        }
        (q, p)
    }
}

fn unit(axis: usize) -> Point3 {
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    Point3::from_array(e)
}

/// Resolution for `Δf₀` clouds: cells shrink with the smallest possible distance to the curve
/// inside them, floored at `Λ_{n_max}`.
pub fn laplacian_resolution(field: &ExtensionField, theta_ref: f64) -> Resolution {
    let (_, hw) = support_cube(field);
    let depth = (hw / (theta_ref * field.frozen_floor())).log2().ceil() as u32 + 1;
    Resolution { theta_ref, min_depth: 2, boundary_depth: 0, max_depth: depth }
}

/// Adaptive octree over the support of `Δf₀` at the given resolution.
pub fn laplacian_octree(field: &ExtensionField, theta_ref: f64) -> KeyedOctree {
    let (center, hw) = support_cube(field);
    let res = laplacian_resolution(field, theta_ref);
    let floor = field.frozen_floor();
    let support = field.support_radius();
    KeyedOctree::build(center, hw, res.max_depth, |o| {
        if o.depth < res.min_depth {
            return true;
        }
        let near = field.curve().distance(o.center) - 3f64.sqrt() * o.half_width;
        near <= support && o.half_width > theta_ref * near.max(floor)
    })
}

/// Gauss points per face side in flux integrals.
pub const FLUX_ORDER: usize = 3;

/// Cloud of `Δf₀` over its whole support, the quadrature behind [`reconstruct_f0`].
///
/// Cell weights are `∫_cell Δf₀ = ∮ ∂ₙf₀` and dipoles `∫_cell (x − c)Δf₀ = ∮ [(x − c)∂ₙf₀ − f₀n]`,
/// integrated on the faces with the analytic gradient. The total charge vanishes up to rounding.
pub fn laplacian_cloud(field: &ExtensionField, theta_ref: f64) -> Result<ChargeCloud, PotentialError> {
    let tree = laplacian_octree(field, theta_ref);
    let support = field.support_radius();
    let eval = |p: Point3| field.value_gradient(p);
    let mut flux = FluxIntegrator::new(&tree, FLUX_ORDER);
    let mut cells = Vec::new();
    for &key in tree.leaves() {
        let o = tree.octant(key);
        if field.curve().distance(o.center) - 3f64.sqrt() * o.half_width > support {
            continue;
        }
        let (q, p) = flux.leaf_moments(key, &eval);
        cells.push(ChargeCell::new(o.center, o.half_width, q).with_dipole(p));
    }
    if cells.is_empty() {
        return Err(PotentialError::EmptyRegion);
    }
    Ok(ChargeCloud::new(cells))
}

/// `f₀(M)` recovered as `−(1/4π)∫ Δf₀/ρ` from a cloud built by [`laplacian_cloud`].
pub fn reconstruct_f0(field: &ExtensionField, cloud: &ChargeCloud, m: Point3, mode: EvalMode) -> Result<f64, PotentialError> {
    let d = field.curve().distance(m);
    if d < field.frozen_floor() {
        return Err(PotentialError::BelowFloor { distance: d, floor: field.frozen_floor() });
    }
    Ok(cloud.potential(m, mode))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_values() {
        let cloud = ChargeCloud::new(vec![ChargeCell::new(Point3::ORIGIN, 0.01, 4.0 * std::f64::consts::PI)]);
        let m = Point3::new(0.0, 0.0, 2.0);
        assert!((cloud.potential_direct(m) + 0.5).abs() < 1e-15);
        assert!((cloud.potential_tree(m, 0.7) + 0.5).abs() < 1e-15);
        let g = cloud.gradient(m, EvalMode::Direct);
        assert!((g.z - 0.25).abs() < 1e-15 && g.x == 0.0 && g.y == 0.0);
    }

    #[test]
    fn tree_expansion_matches_direct_sum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut r = || rng.gen_range(-1.0..1.0);
        let cells: Vec<ChargeCell> = (0..4000)
            .map(|_| {
                let c = Point3::new(r(), r(), r());
                ChargeCell::new(c, 0.01, r()).with_dipole(Point3::new(r(), r(), r()) * 0.01)
            })
            .collect();
        let cloud = ChargeCloud::new(cells);
        for m in [Point3::new(3.0, 0.5, -1.0), Point3::new(0.2, 0.1, 0.0), Point3::new(-1.5, 1.5, 1.5)] {
            let d = cloud.potential_direct(m);
            let scale = cloud.cells().iter().map(|c| c.weight.abs() / c.center.dist(m)).sum::<f64>() / (4.0 * std::f64::consts::PI);
            assert!((cloud.potential_tree(m, 0.5) - d).abs() < 1e-3 * scale);
            assert!((cloud.potential_tree(m, 0.01) - d).abs() < 1e-7 * scale);
            let gscale = cloud.cells().iter().map(|c| c.weight.abs() / c.center.dist(m).powi(2)).sum::<f64>() / (4.0 * std::f64::consts::PI);
            let g = cloud.gradient(m, EvalMode::Direct);
            let gt = cloud.gradient(m, EvalMode::Tree { theta: 0.5 });
            assert!((g - gt).norm() < 1e-2 * gscale);
        }
    }

    #[test]
    fn smeared_kernel_is_continuous() {
        let c = ChargeCell::new(Point3::ORIGIN, 1.0, 1.0);
        let a = c.smear_radius();
        let inner = c.kernel(Point3::new(a * (1.0 - 1e-12), 0.0, 0.0));
        let outer = c.kernel(Point3::new(a * (1.0 + 1e-12), 0.0, 0.0));
        assert!((inner - outer).abs() < 1e-10);
        // Cube volume equals the equivalent ball volume.
        assert!((4.0 / 3.0 * std::f64::consts::PI * a.powi(3) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn ball_volume_quadrature() {
        let res = Resolution { theta_ref: 1.0, min_depth: 2, boundary_depth: 6, max_depth: 6 };
        let ball = discretize_region(Point3::ORIGIN, 1.0, |p| p.norm() <= 1.0, |_| 1.0, |_| f64::INFINITY, res).unwrap();
        let exact = 4.0 / 3.0 * std::f64::consts::PI;
        assert!((ball.total_charge() - exact).abs() < 0.01 * exact, "{}", ball.total_charge());
        let shell = discretize_region(
            Point3::ORIGIN,
            1.0,
            |p| p.norm() <= 1.0 && p.norm() >= 0.5,
            |_| 1.0,
            |_| f64::INFINITY,
            res,
        )
        .unwrap();
        assert!((shell.total_charge() - exact * 0.875).abs() < 0.01 * exact * 0.875);
        let zero = discretize_region(Point3::ORIGIN, 1.0, |p| p.norm() <= 1.0, |_| 0.0, |_| f64::INFINITY, res).unwrap();
        assert_eq!(zero.total_charge(), 0.0);
        assert!(matches!(
            discretize_region(Point3::ORIGIN, 1.0, |_| false, |_| 1.0, |_| f64::INFINITY, res),
            Err(PotentialError::EmptyRegion)
        ));
    }

    #[test]
    fn text_round_trip() {
        let cells = vec![
            ChargeCell::new(Point3::new(0.1, 0.2, 0.3), 0.5, -1.25),
            ChargeCell::new(Point3::new(-1.0, 2.0, 0.0), 0.25, 3.5).with_dipole(Point3::new(0.5, -0.125, 2.0)),
        ];
        let cloud = ChargeCloud::new(cells);
        let back = ChargeCloud::from_text(&cloud.to_text()).unwrap();
        assert_eq!(back.cells(), cloud.cells());
        let tampered = cloud.to_text().replace("3.5e0", "3.6e0");
        assert!(matches!(ChargeCloud::from_text(&tampered), Err(PotentialError::Integrity { .. })));
    }
}
