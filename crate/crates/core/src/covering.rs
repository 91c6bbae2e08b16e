//! Coverings of the constraint boxes and the buffers `eta` that make the
//! finitely many center constraints imply the constraint on the whole box.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{operator_pair, DifferentialOperator, KernelSpec};
use crate::shapes::{tensor_product, CompactBox, ConstraintSystem};

/// Default number of sampled directions when the sup in the buffer is not direction-free.
pub const DEFAULT_SPHERE_SAMPLES: usize = 64;

/// Safety factor applied when the direction sup is estimated from samples.
pub const DIRECTION_INFLATION: f64 = 1.01;

/// Inflation applied to sampled Voronoi radii in `d >= 2` recycled nets.
pub const VORONOI_INFLATION: f64 = 1.05;

const RADIAL_GRID: usize = 33;
const CANDIDATE_BUDGET: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    #[default]
    L2,
    Linf,
}

impl Norm {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Norm::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Norm::Linf => a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
        }
    }

    fn of(&self, v: &[f64]) -> f64 {
        match self {
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Linf => v.iter().map(|x| x.abs()).fold(0.0, f64::max),
        }
    }
}

/// Centers, radii and buffers covering one constraint box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Net {
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    pub etas: Vec<f64>,
}

impl Net {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn max_eta(&self) -> f64 {
        self.etas.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_radius(&self) -> f64 {
        self.radii.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covering {
    pub nets: Vec<Net>,
    pub norm: Norm,
}

impl Covering {
    /// Computes buffers for given centers and radii, one `(centers, radii)` pair per constraint.
    pub fn from_centers(
        system: &ConstraintSystem,
        spec: &KernelSpec,
        norm: Norm,
        parts: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
        n_sphere_samples: usize,
    ) -> Result<Self> {
        if parts.len() != system.len() {
            return Err(Error::CoveringMismatch(format!("{} nets for {} constraints", parts.len(), system.len())));
        }
        let mut nets = Vec::with_capacity(parts.len());
        for ((centers, radii), c) in parts.into_iter().zip(&system.constraints) {
            if centers.len() != radii.len() {
                return Err(Error::DimensionMismatch { expected: centers.len(), got: radii.len() });
            }
            let mut etas = Vec::with_capacity(centers.len());
            let mut cache: Vec<(f64, f64)> = Vec::new();
            for (x, &r) in centers.iter().zip(&radii) {
                let cached =
                    spec.is_shift_invariant().then(|| cache.iter().find(|(d, _)| *d == r).map(|&(_, e)| e)).flatten();
                let eta = match cached {
                    Some(e) => e,
                    None => {
                        let e = compute_eta(spec, &c.operator, x, r, norm, n_sphere_samples)?;
                        cache.push((r, e));
                        e
                    }
                };
                etas.push(eta);
            }
            nets.push(Net { centers, radii, etas });
        }
        let covering = Self { nets, norm };
        covering.validate(system)?;
        Ok(covering)
    }

    /// Uniform `delta`-net of every constraint box.
    pub fn uniform(
        system: &ConstraintSystem,
        spec: &KernelSpec,
        delta: f64,
        norm: Norm,
        n_sphere_samples: usize,
    ) -> Result<Self> {
        let parts =
            system.constraints.iter().map(|c| uniform_box_net(&c.domain, delta, norm)).collect::<Result<Vec<_>>>()?;
        Self::from_centers(system, spec, norm, parts, n_sphere_samples)
    }

    /// Uniform net with `per_axis` cell midpoints along each axis of every box.
    pub fn uniform_count(
        system: &ConstraintSystem,
        spec: &KernelSpec,
        per_axis: usize,
        norm: Norm,
        n_sphere_samples: usize,
    ) -> Result<Self> {
        if per_axis == 0 {
            return Err(invalid("a net needs at least one center per axis"));
        }
        let parts =
            system.constraints.iter().map(|c| grid_net(&c.domain, &vec![per_axis; c.domain.dim()], norm)).collect();
        Self::from_centers(system, spec, norm, parts, n_sphere_samples)
    }

    /// Nets recycling the sample points that fall in each box.
    pub fn recycled(
        system: &ConstraintSystem,
        spec: &KernelSpec,
        samples: &[Vec<f64>],
        max_added: usize,
        norm: Norm,
        n_sphere_samples: usize,
    ) -> Result<Self> {
        let parts = system
            .constraints
            .iter()
            .map(|c| {
                let inside: Vec<Vec<f64>> = samples.iter().filter(|x| c.domain.contains(x, 0.0)).cloned().collect();
                recycled_net(&c.domain, &inside, max_added, norm)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_centers(system, spec, norm, parts, n_sphere_samples)
    }

    pub fn validate(&self, system: &ConstraintSystem) -> Result<()> {
        if self.nets.len() != system.len() {
            return Err(Error::CoveringMismatch(format!("{} nets for {} constraints", self.nets.len(), system.len())));
        }
        for (i, (net, c)) in self.nets.iter().zip(&system.constraints).enumerate() {
            if net.centers.len() != net.radii.len() || net.centers.len() != net.etas.len() {
                return Err(Error::CoveringMismatch(format!("net {i} has inconsistent lengths")));
            }
            if net.centers.is_empty() {
                return Err(Error::CoveringMismatch(format!("net {i} is empty")));
            }
            for x in &net.centers {
                if !c.domain.contains(x, 1e-9) {
                    return Err(Error::CoveringMismatch(format!("net {i} has a center outside its box")));
                }
            }
            if net.radii.iter().chain(&net.etas).any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::CoveringMismatch(format!("net {i} has invalid radii or buffers")));
            }
        }
        Ok(())
    }

    pub fn total_centers(&self) -> usize {
        self.nets.iter().map(Net::len).sum()
    }

    pub fn eta_inf(&self) -> f64 {
        self.nets.iter().map(Net::max_eta).fold(0.0, f64::max)
    }

    /// Replaces each per-center buffer by the largest buffer of its net.
    pub fn uniformized(&self) -> Self {
        let mut out = self.clone();
        for net in &mut out.nets {
            let m = net.max_eta();
            net.etas.iter_mut().for_each(|e| *e = m);
        }
        out
    }

    /// Same centers with every buffer set to zero.
    pub fn without_buffers(&self) -> Self {
        let mut out = self.clone();
        for net in &mut out.nets {
            net.etas.iter_mut().for_each(|e| *e = 0.0);
        }
        out
    }

    /// Whether `x` lies in the ball of some center of net `i`.
    pub fn covers(&self, i: usize, x: &[f64]) -> bool {
        let net = &self.nets[i];
        net.centers.iter().zip(&net.radii).any(|(c, &r)| self.norm.distance(c, x) <= r * (1.0 + 1e-12) + 1e-15)
    }
}

/// Regular grid of cell midpoints with `ceil(w_j / (2 delta'))` cells per axis,
/// where `delta' = delta` for the sup-norm and `delta / sqrt(d)` for the Euclidean norm.
pub fn uniform_box_net(domain: &CompactBox, delta: f64, norm: Norm) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid(format!("net radius must be positive, got {delta}")));
    }
    let d = domain.dim();
    let per_axis = match norm {
        Norm::Linf => delta,
        Norm::L2 => delta / (d as f64).sqrt(),
    };
    let counts: Vec<usize> = (0..d)
        .map(|j| {
            let ratio = domain.width(j) / (2.0 * per_axis);
            ((ratio - 1e-12).ceil() as usize).max(1)
        })
        .collect();
    let (centers, _) = grid_net(domain, &counts, norm);
    let radii = vec![delta; centers.len()];
    Ok((centers, radii))
}

/// Cell-midpoint grid with the exact covering radius of its cells.
fn grid_net(domain: &CompactBox, counts: &[usize], norm: Norm) -> (Vec<Vec<f64>>, Vec<f64>) {
    let axes: Vec<Vec<f64>> = counts
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let (l, w) = (domain.lower()[j], domain.width(j));
            (0..n).map(|k| l + (k as f64 + 0.5) * w / n as f64).collect()
        })
        .collect();
    let half: Vec<f64> = counts.iter().enumerate().map(|(j, &n)| domain.width(j) / (2.0 * n as f64)).collect();
    let radius = norm.of(&half);
    let centers = tensor_product(&axes);
    let radii = vec![radius; centers.len()];
    (centers, radii)
}

/// Net made of the given in-box samples plus at most `max_added` virtual centers.
pub fn recycled_net(
    domain: &CompactBox,
    samples_in_box: &[Vec<f64>],
    max_added: usize,
    norm: Norm,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    for x in samples_in_box {
        if !domain.contains(x, 1e-12) {
            return Err(invalid("recycled_net expects samples inside the box"));
        }
    }
    if samples_in_box.is_empty() {
        let d = domain.dim();
        let per_axis = ((max_added.max(1) as f64).powf(1.0 / d as f64) + 1e-9).floor().max(1.0) as usize;
        return Ok(grid_net(domain, &vec![per_axis; d], norm));
    }
    if domain.dim() == 1 {
        Ok(recycled_interval(domain, samples_in_box, max_added))
    } else {
        Ok(recycled_farthest_point(domain, samples_in_box, max_added, norm))
    }
}

fn recycled_interval(domain: &CompactBox, samples: &[Vec<f64>], max_added: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (l, u) = (domain.lower()[0], domain.upper()[0]);
    let mut pts: Vec<f64> = samples.iter().map(|x| x[0]).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    for _ in 0..max_added {
        // The farthest point of [l, u] from the current centers is an edge or a gap midpoint.
        let mut best = (pts[0] - l, l);
        let last = *pts.last().unwrap();
        if u - last > best.0 {
            best = (u - last, u);
        }
        for w in pts.windows(2) {
            let half = 0.5 * (w[1] - w[0]);
            if half > best.0 {
                best = (half, 0.5 * (w[0] + w[1]));
            }
        }
        if best.0 <= 0.0 {
            break;
        }
        let pos = pts.partition_point(|&p| p < best.1);
        pts.insert(pos, best.1);
    }
    let n = pts.len();
    let radii = (0..n)
        .map(|m| {
            let left = if m == 0 { pts[0] - l } else { 0.5 * (pts[m] - pts[m - 1]) };
            let right = if m + 1 == n { u - pts[m] } else { 0.5 * (pts[m + 1] - pts[m]) };
            left.max(right)
        })
        .collect();
    (pts.into_iter().map(|p| vec![p]).collect(), radii)
}

fn recycled_farthest_point(
    domain: &CompactBox,
    samples: &[Vec<f64>],
    max_added: usize,
    norm: Norm,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let d = domain.dim();
    let per_axis = ((CANDIDATE_BUDGET as f64).powf(1.0 / d as f64).floor() as usize).max(2);
    let candidates = domain.grid(per_axis);
    // Every box point is within `cell_slack` of a candidate.
    let half_cell: Vec<f64> = (0..d).map(|j| 0.5 * domain.width(j) / (per_axis - 1) as f64).collect();
    let cell_slack = norm.of(&half_cell);

    let mut centers: Vec<Vec<f64>> = samples.to_vec();
    let mut nearest: Vec<(f64, usize)> = candidates
        .iter()
        .map(|g| {
            centers.iter().enumerate().map(|(m, c)| (norm.distance(g, c), m)).fold((f64::INFINITY, 0), |a, b| {
                if b.0 < a.0 {
                    b
                } else {
                    a
                }
            })
        })
        .collect();
    for _ in 0..max_added {
        let (k, far) = nearest
            .iter()
            .enumerate()
            .fold((0, 0.0), |best, (k, &(dist, _))| if dist > best.1 { (k, dist) } else { best });
        if far <= 0.0 {
            break;
        }
        let m = centers.len();
        centers.push(candidates[k].clone());
        for (g, slot) in candidates.iter().zip(nearest.iter_mut()) {
            let dist = norm.distance(g, &centers[m]);
            if dist < slot.0 {
                *slot = (dist, m);
            }
        }
    }
    let mut cell_radius = vec![0.0_f64; centers.len()];
    for &(dist, m) in &nearest {
        cell_radius[m] = cell_radius[m].max(dist);
    }
    let radii = cell_radius
        .into_iter()
        .map(|r| if r > 0.0 { (VORONOI_INFLATION * r).max(r + cell_slack) } else { cell_slack })
        .collect();
    (centers, radii)
}

/// `sup_{|u| <= 1} || D_x k(c, .) - D_x k(c + delta u, .) ||_k`.
pub fn compute_eta(
    spec: &KernelSpec,
    op: &DifferentialOperator,
    center: &[f64],
    delta: f64,
    norm: Norm,
    n_sphere_samples: usize,
) -> Result<f64> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(invalid(format!("buffer radius must be nonnegative, got {delta}")));
    }
    let d = center.len();
    if op.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: op.dim() });
    }
    if op.order() > spec.smoothness {
        return Err(Error::UnsupportedOrder { requested: op.order(), supported: spec.smoothness });
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    let at_c = operator_pair(spec, op, op, center, center);
    let sq_dist = |v: &[f64]| -> f64 {
        let shifted: Vec<f64> = center.iter().zip(v).map(|(a, b)| a + b).collect();
        at_c - 2.0 * operator_pair(spec, op, op, center, &shifted) + operator_pair(spec, op, op, &shifted, &shifted)
    };

    let (directions, inflation) = if d == 1 {
        (vec![vec![1.0], vec![-1.0]], 1.0)
    } else if spec.is_shift_invariant() && op.is_identity_like() {
        // For the isotropic Gaussian the distance only depends on |v|_2 and
        // grows with it, so the sup sits at the farthest point of the ball.
        let reach = match norm {
            Norm::L2 => delta,
            Norm::Linf => delta * (d as f64).sqrt(),
        };
        let mut v = vec![0.0; d];
        v[0] = reach;
        let value = sq_dist(&v);
        if !value.is_finite() {
            return Err(Error::NonFinite("buffer"));
        }
        return Ok(value.max(0.0).sqrt());
    } else {
        (sphere_directions(d, n_sphere_samples), DIRECTION_INFLATION)
    };

    let mut best = 0.0_f64;
    for u in &directions {
        let scale = delta / norm.of(u);
        let profile = |r: f64| {
            let v: Vec<f64> = u.iter().map(|x| x * r * scale).collect();
            sq_dist(&v)
        };
        best = best.max(radial_max(profile, 1.0));
    }
    if !best.is_finite() {
        return Err(Error::NonFinite("buffer"));
    }
    Ok(inflation * best.max(0.0).sqrt())
}

/// Maximum of `f` on `[0, r_max]` from a uniform grid refined by golden-section search.
fn radial_max(f: impl Fn(f64) -> f64, r_max: f64) -> f64 {
    let step = r_max / (RADIAL_GRID - 1) as f64;
    let values: Vec<f64> = (0..RADIAL_GRID).map(|k| f(k as f64 * step)).collect();
    let (k_best, mut best) =
        values.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (k, &v)| if v > b.1 { (k, v) } else { b });
    if k_best == 0 || k_best == RADIAL_GRID - 1 {
        return best;
    }
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = ((k_best - 1) as f64 * step, (k_best + 1) as f64 * step);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    best = best.max(f1).max(f2);
    best
}

/// Deterministic set of directions: coordinate axes, cube diagonals, and
/// `n` quasi-uniform directions on the sphere. Callers rescale each
/// direction onto the unit sphere of the norm in use.
fn sphere_directions(d: usize, n: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for j in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[j] = s;
            dirs.push(e);
        }
    }
    if d <= 12 {
        for mask in 0..(1usize << d) {
            dirs.push((0..d).map(|j| if mask >> j & 1 == 1 { -1.0 } else { 1.0 }).collect());
        }
    }
    if d == 2 {
        dirs.extend((0..n).map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            vec![a.cos(), a.sin()]
        }));
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d1e5);
        for _ in 0..n {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            dirs.push(v);
        }
    }
    dirs
}

/// `sqrt(2 L delta)`, an upper bound on the buffer when `D_x D_y k` is
/// `L`-Lipschitz on the `delta`-ball.
pub fn eta_lipschitz_bound(l_delta: f64, delta: f64) -> f64 {
    (2.0 * l_delta.max(0.0) * delta.max(0.0)).sqrt()
}
