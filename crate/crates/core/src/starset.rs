//! Compact star sets in the plane, centered at the origin.
//!
//! A [`StarSet2`] stores a radial function on the uniform grid
//! `θ_k = 2πk/n`. The represented set is the star polygon
//! `⋃_k triangle(0, p_k, p_{k+1})` with `p_k = ρ_k (cos θ_k, sin θ_k)`, which
//! is closed under scaling by `[0, 1]`. A zero radius means the set meets that
//! ray only at the origin, so a single nonzero radius is a segment.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use crate::bilinear::Dynamics;
use crate::error::{Error, Result};
use crate::matops::{expm, SquareMatrix};

pub const MIN_ANGLES: usize = 16;

/// Query samples inserted along each boundary edge by [`hausdorff`].
const EDGE_SUBSAMPLES: usize = 2;

type P2 = [f64; 2];

#[inline]
fn cross(a: P2, b: P2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
fn norm(a: P2) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
fn sub(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn point_segment_distance(q: P2, a: P2, b: P2) -> f64 {
    let ab = sub(b, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return norm(sub(q, a));
    }
    let t = (((q[0] - a[0]) * ab[0] + (q[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    norm(sub(q, [a[0] + t * ab[0], a[1] + t * ab[1]]))
}

/// Distance from `q` to the filled triangle `(0, a, b)`.
fn point_triangle_distance(q: P2, a: P2, b: P2) -> f64 {
    let o = [0.0, 0.0];
    let area = cross(a, b);
    if area.abs() > 0.0 {
        let s = area.signum();
        let c1 = cross(a, q) * s;
        let c2 = cross(sub(b, a), sub(q, a)) * s;
        let c3 = cross(sub(o, b), sub(q, b)) * s;
        if c1 >= 0.0 && c2 >= 0.0 && c3 >= 0.0 {
            return 0.0;
        }
    }
    point_segment_distance(q, o, a)
        .min(point_segment_distance(q, a, b))
        .min(point_segment_distance(q, b, o))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarSet2 {
    radii: Vec<f64>,
}

impl StarSet2 {
    pub fn from_radii(radii: Vec<f64>) -> Result<Self> {
        if radii.len() < 3 {
            return Err(Error::InvalidArgument(format!("need at least 3 angles, got {}", radii.len())));
        }
        if radii.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("radii"));
        }
        if let Some(r) = radii.iter().find(|r| **r < 0.0) {
            return Err(Error::InvalidArgument(format!("negative radius {r}")));
        }
        Ok(Self { radii })
    }

    fn check_grid(n: usize) -> Result<()> {
        if n < MIN_ANGLES {
            return Err(Error::InvalidArgument(format!("grid size {n} < {MIN_ANGLES}")));
        }
        Ok(())
    }

    /// The closed unit ball.
    pub fn ball(n: usize) -> Result<Self> {
        Self::check_grid(n)?;
        Ok(Self { radii: vec![1.0; n] })
    }

    /// The segment `[0, 1]·x`, snapped to the grid ray nearest `arg x`.
    pub fn segment(x: &[f64], n: usize) -> Result<Self> {
        Self::check_grid(n)?;
        if x.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: x.len() });
        }
        let r = x[0].hypot(x[1]);
        if !r.is_finite() {
            return Err(Error::NonFinite("segment endpoint"));
        }
        if r == 0.0 {
            return Err(Error::ZeroVector);
        }
        let mut radii = vec![0.0; n];
        radii[nearest_bin(x[1].atan2(x[0]), n)] = r;
        Ok(Self { radii })
    }

    /// Filled circular sector swept counterclockwise from `theta1` to `theta2`.
    pub fn sector(theta1: f64, theta2: f64, radius: f64, n: usize) -> Result<Self> {
        Self::check_grid(n)?;
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::InvalidArgument(format!("sector radius {radius}")));
        }
        let h = 2.0 * PI / n as f64;
        let span = (theta2 - theta1).rem_euclid(2.0 * PI);
        let full = (theta2 - theta1).abs() >= 2.0 * PI - 1e-12;
        let radii = (0..n)
            .map(|k| {
                let off = (k as f64 * h - theta1).rem_euclid(2.0 * PI);
                let inside = full || off <= span + 1e-12 || off >= 2.0 * PI - 1e-12;
                if inside { radius } else { 0.0 }
            })
            .collect();
        Ok(Self { radii })
    }

    /// Radial function `f(θ)` sampled on the grid.
    pub fn from_radial_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::check_grid(n)?;
        let h = 2.0 * PI / n as f64;
        Self::from_radii((0..n).map(|k| f(k as f64 * h)).collect())
    }

    /// Radial function of a closed polygon that is star-shaped with respect to
    /// the origin (the origin may lie on its boundary).
    pub fn from_polygon(vertices: &[[f64; 2]], n: usize) -> Result<Self> {
        Self::check_grid(n)?;
        if vertices.len() < 2 {
            return Err(Error::Empty("polygon vertices"));
        }
        let h = 2.0 * PI / n as f64;
        let radii = (0..n)
            .map(|k| {
                let dir = [(k as f64 * h).cos(), (k as f64 * h).sin()];
                let mut best = 0.0f64;
                for i in 0..vertices.len() {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % vertices.len()];
                    if let Some(r) = ray_segment(dir, a, b) {
                        best = best.max(r);
                    }
                }
                best
            })
            .collect();
        Self::from_radii(radii)
    }

    pub fn n_angles(&self) -> usize {
        self.radii.len()
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn angle(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.radii.len() as f64
    }

    pub fn vertex(&self, k: usize) -> [f64; 2] {
        let k = k % self.radii.len();
        let th = self.angle(k);
        [self.radii[k] * th.cos(), self.radii[k] * th.sin()]
    }

    pub fn max_radius(&self) -> f64 {
        self.radii.iter().copied().fold(0.0, f64::max)
    }

    /// Boundary polyline `p_0, …, p_{n−1}` (closed implicitly).
    pub fn boundary(&self) -> Vec<[f64; 2]> {
        (0..self.radii.len()).map(|k| self.vertex(k)).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "theta,rho")?;
        for (k, r) in self.radii.iter().enumerate() {
            writeln!(w, "{:.17e},{:.17e}", self.angle(k), r)?;
        }
        Ok(())
    }

    /// Reads the `theta,rho` format written by [`StarSet2::write_csv`]. Rows
    /// must be on the uniform grid, in order.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut radii = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("theta")) {
                continue;
            }
            let mut fields = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|v| v.trim().parse::<f64>().ok()).ok_or_else(|| {
                    Error::InvalidArgument(format!("line {}: expected `theta,rho`", lineno + 1))
                })
            };
            let _theta = parse(fields.next())?;
            radii.push(parse(fields.next())?);
        }
        if radii.is_empty() {
            return Err(Error::Empty("radial CSV"));
        }
        Self::from_radii(radii)
    }
}

fn nearest_bin(theta: f64, n: usize) -> usize {
    let h = 2.0 * PI / n as f64;
    ((theta.rem_euclid(2.0 * PI) / h).round() as usize) % n
}

/// Distance along the unit ray `dir` to the segment `ab`, if it is hit.
fn ray_segment(dir: P2, a: P2, b: P2) -> Option<f64> {
    let e = sub(b, a);
    let len = norm(e);
    let denom = cross(dir, e);
    let eps = 1e-12;
    if denom.abs() <= eps * len.max(f64::MIN_POSITIVE) {
        // parallel: only collinear with the ray counts
        let on_line = cross(dir, a).abs() <= eps * norm(a).max(1.0);
        if !on_line {
            return None;
        }
        let r = (a[0] * dir[0] + a[1] * dir[1]).max(b[0] * dir[0] + b[1] * dir[1]);
        return (r >= 0.0).then_some(r);
    }
    let r = cross(a, e) / denom;
    let lambda = cross(a, dir) / denom;
    let slack = 1e-12;
    if r >= -slack && (-slack..=1.0 + slack).contains(&lambda) {
        Some(r.max(0.0))
    } else {
        None
    }
}

/// Radial function of `T·S`.
///
/// Every grid ray is intersected exactly with the mapped boundary edges.
/// Vertices that end a filled arc (or form an isolated radial segment) have a
/// radial edge that no grid ray sees after mapping; those are binned by output
/// angle with a per-bin max, so mapped segments keep their length and snap to
/// the nearest grid ray.
pub fn linear_image(s: &StarSet2, t: &SquareMatrix) -> Result<StarSet2> {
    if t.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: t.dim() });
    }
    let det = t.determinant();
    if !(det.abs() > 1e-12) {
        return Err(Error::Singular(det.abs()));
    }
    let n = s.n_angles();
    let h = 2.0 * PI / n as f64;
    let m = t.as_slice();
    let map = |p: P2| -> P2 { [m[0] * p[0] + m[1] * p[1], m[2] * p[0] + m[3] * p[1]] };

    let img: Vec<P2> = s.boundary().into_iter().map(map).collect();
    let mut out = vec![0.0f64; n];

    for k in 0..n {
        let prev = (k + n - 1) % n;
        let next = (k + 1) % n;
        if s.radii[k] == 0.0 || (s.radii[prev] > 0.0 && s.radii[next] > 0.0) {
            continue;
        }
        let q = img[k];
        let bin = nearest_bin(q[1].atan2(q[0]), n);
        out[bin] = out[bin].max(norm(q));
    }

    for k in 0..n {
        let next = (k + 1) % n;
        if s.radii[k] == 0.0 || s.radii[next] == 0.0 {
            continue;
        }
        let (a, b) = (img[k], img[next]);
        let alpha = a[1].atan2(a[0]);
        let delta = (b[1].atan2(b[0]) - alpha + PI).rem_euclid(2.0 * PI) - PI;
        let (lo, hi) = if delta >= 0.0 { (alpha, alpha + delta) } else { (alpha + delta, alpha) };
        let j_lo = (lo / h - 1e-9).ceil() as i64;
        let j_hi = (hi / h + 1e-9).floor() as i64;
        let e = sub(b, a);
        let num = cross(a, b);
        for j in j_lo..=j_hi {
            let th = j as f64 * h;
            let dir = [th.cos(), th.sin()];
            let denom = cross(dir, e);
            if denom.abs() <= 1e-300 {
                continue;
            }
            let r = num / denom;
            if !(r.is_finite() && r > 0.0) {
                continue;
            }
            // stay on the segment; guards grid rays at the span's end points
            let r = r.min(norm(a).max(norm(b)));
            let idx = j.rem_euclid(n as i64) as usize;
            if r > out[idx] {
                out[idx] = r;
            }
        }
    }
    StarSet2::from_radii(out)
}

fn check_same_grid(a: &StarSet2, b: &StarSet2) -> Result<()> {
    if a.n_angles() != b.n_angles() {
        return Err(Error::GridMismatch(a.n_angles(), b.n_angles()));
    }
    Ok(())
}

pub fn union(a: &StarSet2, b: &StarSet2) -> Result<StarSet2> {
    check_same_grid(a, b)?;
    Ok(StarSet2 { radii: a.radii.iter().zip(&b.radii).map(|(x, y)| x.max(*y)).collect() })
}

pub fn scale(s: &StarSet2, alpha: f64) -> Result<StarSet2> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("scale factor {alpha} must be finite and nonnegative")));
    }
    StarSet2::from_radii(s.radii.iter().map(|r| r * alpha).collect())
}

/// `sup_{a ∈ A} dist(a, B)`.
///
/// For star sets the supremum is attained on the outer boundary of `A`
/// (scaling a point toward the origin never moves it farther from a star
/// set), so only boundary vertices and edge samples of `A` are queried.
pub fn directed_hausdorff(a: &StarSet2, b: &StarSet2) -> Result<f64> {
    check_same_grid(a, b)?;
    let n = a.n_angles();
    let bverts = b.boundary();
    let averts = a.boundary();
    let mut worst = 0.0f64;
    for k in 0..n {
        if a.radii[k] == 0.0 {
            continue;
        }
        let next = (k + 1) % n;
        let steps = if a.radii[next] > 0.0 { EDGE_SUBSAMPLES + 1 } else { 1 };
        for j in 0..steps {
            let f = j as f64 / steps as f64;
            let q = [
                averts[k][0] + f * (averts[next][0] - averts[k][0]),
                averts[k][1] + f * (averts[next][1] - averts[k][1]),
            ];
            let d = distance_to_star(q, &bverts);
            worst = worst.max(d);
        }
    }
    Ok(worst)
}

fn distance_to_star(q: P2, bverts: &[P2]) -> f64 {
    let n = bverts.len();
    let h = 2.0 * PI / n as f64;
    let rq = norm(q);
    if rq == 0.0 {
        return 0.0;
    }
    let tri = |j: i64| -> f64 {
        let j0 = j.rem_euclid(n as i64) as usize;
        point_triangle_distance(q, bverts[j0], bverts[(j0 + 1) % n])
    };
    let j0 = (q[1].atan2(q[0]).rem_euclid(2.0 * PI) / h).floor() as i64;
    let mut best = rq;
    for j in j0 - 1..=j0 + 1 {
        best = best.min(tri(j));
    }
    if best == 0.0 {
        return 0.0;
    }
    let w = if best >= rq {
        (n / 2 + 1) as i64
    } else {
        ((best / rq).asin() / h).ceil() as i64 + 1
    };
    for j in j0 - w..=j0 + w {
        if (j0 - 1..=j0 + 1).contains(&j) {
            continue;
        }
        best = best.min(tri(j));
        if best == 0.0 {
            break;
        }
    }
    best
}

/// Symmetric Hausdorff distance between the represented sets.
pub fn hausdorff(a: &StarSet2, b: &StarSet2) -> Result<f64> {
    Ok(directed_hausdorff(a, b)?.max(directed_hausdorff(b, a)?))
}

/// `true` iff every point of `a` is within `tol` of `b`.
pub fn is_subset_tol(a: &StarSet2, b: &StarSet2, tol: f64) -> Result<bool> {
    Ok(directed_hausdorff(a, b)? <= tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachOptions {
    step: f64,
    control_samples: Vec<Vec<f64>>,
}

impl ReachOptions {
    pub fn new(step: f64, control_samples: Vec<Vec<f64>>) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidArgument(format!("step {step} must be positive")));
        }
        if control_samples.is_empty() {
            return Err(Error::Empty("control samples"));
        }
        Ok(Self { step, control_samples })
    }

    /// `count` grid samples of the control box of `sys`.
    pub fn uniform<D: Dynamics + ?Sized>(sys: &D, step: f64, count: usize) -> Result<Self> {
        Self::new(step, sys.control_grid(count))
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn control_samples(&self) -> &[Vec<f64>] {
        &self.control_samples
    }

    pub fn with_step(&self, step: f64) -> Result<Self> {
        Self::new(step, self.control_samples.clone())
    }
}

/// Transition matrices `e^{τF(u₀)}` for every sampled control value.
pub fn step_maps<D: Dynamics + ?Sized>(sys: &D, opts: &ReachOptions) -> Result<Vec<SquareMatrix>> {
    if sys.dim() != 2 {
        return Err(Error::Unsupported(format!("planar star sets need d = 2, got d = {}", sys.dim())));
    }
    opts.control_samples.iter().map(|u| expm(&sys.drift(u)?, opts.step)).collect()
}

/// One exact-time step of the reachable set under constant sampled controls:
/// `⋃_{u₀} e^{τF(u₀)} S`. An inner approximation of `𝒪_τ(S)`.
pub fn reach_step<D: Dynamics + ?Sized>(sys: &D, s: &StarSet2, opts: &ReachOptions) -> Result<StarSet2> {
    let maps = step_maps(sys, opts)?;
    reach_step_with(&maps, s)
}

/// [`reach_step`] with precomputed step maps.
pub fn reach_step_with(maps: &[SquareMatrix], s: &StarSet2) -> Result<StarSet2> {
    let mut acc: Option<StarSet2> = None;
    for t in maps {
        let img = linear_image(s, t)?;
        acc = Some(match acc {
            None => img,
            Some(prev) => union(&prev, &img)?,
        });
    }
    acc.ok_or(Error::Empty("control samples"))
}
