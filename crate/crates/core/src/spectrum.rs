//! Growth rates along rays.
//!
//! `S_x` collects the rates `α` with `φ(t, x, u) = e^{tα}x` for some control
//! and `t > 0`; `ξ(x) = sup S_x`. Lower bounds come from explicit ray-return
//! witnesses found by searching cyclic bang-bang controls. Upper bounds come
//! from the logarithmic norm of the vertex drifts. Nothing here claims the
//! supremum is attained.

use std::f64::consts::PI;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::bilinear::{flow, project, BilinearSystem, Dynamics, PwcControl};
use crate::error::{Error, Result};
use crate::matops::{expm, lognorm2, operator_norm, vec_norm, SquareMatrix};
use crate::sphere_cs::ControlSetArc;

/// Smallest segment duration used by the search.
pub const MIN_SEGMENT: f64 = 1e-3;

/// Witness that `rate ∈ S_x` up to the recorded angular residual.
#[derive(Debug, Clone, PartialEq)]
pub struct RayReturnCertificate {
    pub x: Vec<f64>,
    /// Cyclic control whose first period returns `x` to its own ray.
    pub control: PwcControl,
    pub period: f64,
    pub rate: f64,
    /// `(max ‖F(v)‖) · angular_residual`.
    pub rate_error: f64,
    pub angular_residual: f64,
}

impl RayReturnCertificate {
    /// Evaluates `control` over one period from `x`.
    pub fn evaluate<D: Dynamics + ?Sized>(sys: &D, x: &[f64], control: &PwcControl) -> Result<Self> {
        let xhat = project(x)?;
        let period = control.total_duration();
        let y = flow(sys, period, &xhat, control)?;
        let rate = vec_norm(&y).ln() / period;
        let angular_residual = angle_between(&xhat, &y)?;
        let lip = lipschitz_bound(sys)?;
        Ok(Self {
            x: x.to_vec(),
            control: control.clone().with_cyclic(true),
            period,
            rate,
            rate_error: lip * angular_residual,
            angular_residual,
        })
    }
}

/// Certified enclosure of `ξ(x)` (or of `R`). `lower` is `-∞` when no
/// witness was found.
#[derive(Debug, Clone, PartialEq)]
pub struct RateBracket {
    pub lower: f64,
    pub upper: f64,
    pub witness: Option<RayReturnCertificate>,
}

impl RateBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64, tol: f64) -> bool {
        self.lower - tol <= value && value <= self.upper + tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub horizon: f64,
    pub angular_tol: f64,
    pub n_segments: usize,
    pub n_restarts: usize,
    /// Total matrix-exponential evaluations allowed.
    pub budget: usize,
    pub seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { horizon: 40.0, angular_tol: 1e-6, n_segments: 8, n_restarts: 24, budget: 200_000, seed: 7 }
    }
}

impl SearchOptions {
    fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 2.0 * MIN_SEGMENT) {
            return Err(Error::InvalidArgument(format!("horizon {} too small", self.horizon)));
        }
        if !(self.angular_tol > 0.0) {
            return Err(Error::InvalidArgument("angular_tol must be positive".into()));
        }
        if self.n_segments == 0 {
            return Err(Error::InvalidArgument("n_segments must be at least 1".into()));
        }
        Ok(())
    }
}

fn lipschitz_bound<D: Dynamics + ?Sized>(sys: &D) -> Result<f64> {
    sys.vertices().iter().map(|v| Ok(operator_norm(&sys.drift(v)?))).try_fold(0.0f64, |m, r: Result<f64>| Ok(m.max(r?)))
}

/// Angle between the rays of `x` and `y`, in `[0, π]`.
pub fn angle_between(x: &[f64], y: &[f64]) -> Result<f64> {
    let xh = project(x)?;
    let yh = project(y)?;
    let c: f64 = xh.iter().zip(&yh).map(|(a, b)| a * b).sum();
    let perp: f64 = yh.iter().zip(&xh).map(|(b, a)| (b - c * a).powi(2)).sum::<f64>().sqrt();
    Ok(perp.atan2(c))
}

/// `max_v lognorm2(F(v))` over the vertices of the control box: a bound on
/// `d/dt ln‖x(t)‖` for every control, hence on `ξ(x)` for every `x`.
pub fn xi_upper_bound<D: Dynamics + ?Sized>(sys: &D) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for v in sys.vertices() {
        best = best.max(lognorm2(&sys.drift(&v)?));
    }
    Ok(best)
}

struct Search<'a, D: Dynamics + ?Sized> {
    sys: &'a D,
    xhat: Vec<f64>,
    vertex_drifts: Vec<SquareMatrix>,
    opts: &'a SearchOptions,
    evals: usize,
}

/// Result of closing a loop with the last segment.
struct Closure {
    last: f64,
    rate: f64,
}

impl<'a, D: Dynamics + ?Sized> Search<'a, D> {
    fn exhausted(&self) -> bool {
        self.evals >= self.opts.budget
    }

    fn propagate(&mut self, seq: &[usize], durations: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let mut state = x.to_vec();
        for (v, h) in seq.iter().zip(durations) {
            self.evals += 1;
            state = expm(&self.vertex_drifts[*v], *h)?.apply(&state)?;
        }
        Ok(state)
    }

    /// Signed planar angle from `xhat` to `y` (d = 2), else the unsigned one.
    fn miss(&self, y: &[f64]) -> f64 {
        if self.xhat.len() == 2 {
            let c = self.xhat[0] * y[0] + self.xhat[1] * y[1];
            let s = self.xhat[0] * y[1] - self.xhat[1] * y[0];
            s.atan2(c)
        } else {
            angle_between(&self.xhat, y).unwrap_or(PI)
        }
    }

    /// Chooses the last segment's duration so the trajectory returns to the
    /// ray of `xhat`, preferring the candidate with the highest rate.
    fn close_loop(&mut self, seq: &[usize], head: &[f64], window: Option<(f64, f64)>) -> Result<Option<Closure>> {
        let head_time: f64 = head.iter().sum();
        let room = self.opts.horizon - head_time;
        if room < MIN_SEGMENT {
            return Ok(None);
        }
        let xhat = self.xhat.clone();
        let y = self.propagate(&seq[..seq.len() - 1], head, &xhat)?;
        let last_drift = self.vertex_drifts[*seq.last().expect("nonempty")].clone();
        let (lo, hi) = match window {
            Some((a, b)) => (a.max(MIN_SEGMENT), b.min(room)),
            None => (MIN_SEGMENT, room),
        };
        if hi <= lo {
            return Ok(None);
        }
        let ln_head = vec_norm(&y).ln();
        let tol = self.opts.angular_tol;
        let planar = self.xhat.len() == 2;
        // (miss, ln gain of the last segment)
        let eval = |s: &mut Self, t: f64| -> Result<(f64, f64)> {
            s.evals += 1;
            let z = expm(&last_drift, t)?.apply(&y)?;
            let scale = vec_norm(&z);
            let zn: Vec<f64> = z.iter().map(|v| v / scale).collect();
            Ok((s.miss(&zn), scale.ln()))
        };
        let consider = |best: &mut Option<Closure>, t: f64, (miss, ln_gain): (f64, f64)| {
            let residual = miss.abs();
            if residual > tol {
                return;
            }
            let rate = (ln_head + ln_gain) / (head_time + t);
            if best.as_ref().map_or(true, |b| rate > b.rate) {
                *best = Some(Closure { last: t, rate });
            }
        };

        let n_scan = 96;
        let grid: Vec<f64> = (0..=n_scan).map(|k| lo + (hi - lo) * k as f64 / n_scan as f64).collect();
        let mut vals = Vec::with_capacity(grid.len());
        for &t in &grid {
            vals.push(eval(self, t)?);
        }
        let mut best: Option<Closure> = None;
        for k in 0..grid.len() {
            consider(&mut best, grid[k], vals[k]);
            if k + 1 == grid.len() {
                break;
            }
            let (m, m2) = (vals[k].0, vals[k + 1].0);
            if planar {
                // bracketed zero away from the ±π wrap
                if m.signum() != m2.signum() && m.abs() < PI / 2.0 && m2.abs() < PI / 2.0 {
                    let (mut a, mut b, mut fa) = (grid[k], grid[k + 1], m);
                    let mut last = (a, vals[k]);
                    for _ in 0..80 {
                        let mid = 0.5 * (a + b);
                        let v = eval(self, mid)?;
                        last = (mid, v);
                        if v.0 == 0.0 || (b - a) < 1e-15 * b.max(1.0) {
                            break;
                        }
                        if v.0.signum() == fa.signum() {
                            a = mid;
                            fa = v.0;
                        } else {
                            b = mid;
                        }
                    }
                    consider(&mut best, last.0, last.1);
                }
            } else if k > 0 && vals[k].0 <= vals[k - 1].0 && vals[k].0 <= m2 {
                // golden-section refinement of a local minimum
                let (mut a, mut b) = (grid[k - 1], grid[k + 1]);
                let phi = 0.5 * (5f64.sqrt() - 1.0);
                for _ in 0..60 {
                    let c = b - phi * (b - a);
                    let d = a + phi * (b - a);
                    if eval(self, c)?.0 <= eval(self, d)?.0 {
                        b = d;
                    } else {
                        a = c;
                    }
                }
                let t = 0.5 * (a + b);
                let v = eval(self, t)?;
                consider(&mut best, t, v);
            }
        }
        Ok(best)
    }

    fn certificate(&mut self, x: &[f64], seq: &[usize], durations: &[f64], vertices: &[Vec<f64>]) -> Result<RayReturnCertificate> {
        let values = seq.iter().map(|v| vertices[*v].clone()).collect();
        let control = PwcControl::new(durations.to_vec(), values, true)?;
        let mut cert = RayReturnCertificate::evaluate(self.sys, &self.xhat, &control)?;
        cert.x = x.to_vec();
        Ok(cert)
    }
}

/// Searches cyclic bang-bang controls for trajectories that return to the ray
/// of `x` within `angular_tol` before `horizon`. Certificates come back sorted
/// by rate, highest first. Deterministic for a fixed seed.
pub fn ray_return_search<D: Dynamics + ?Sized>(
    sys: &D,
    x: &[f64],
    opts: &SearchOptions,
) -> Result<Vec<RayReturnCertificate>> {
    opts.validate()?;
    let xhat = project(x)?;
    if xhat.len() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), got: xhat.len() });
    }
    let vertices = sys.vertices();
    let vertex_drifts = vertices.iter().map(|v| sys.drift(v)).collect::<Result<Vec<_>>>()?;
    let mut search = Search { sys, xhat, vertex_drifts, opts, evals: 0 };
    let mut rng = StdRng::seed_from_u64(opts.seed);
    let mut found = Vec::new();

    // single constant segments: eigen-rays and rigid returns
    for v in 0..vertices.len() {
        if let Some(c) = search.close_loop(&[v], &[], None)? {
            found.push(search.certificate(x, &[v], &[c.last], &vertices)?);
        }
    }

    let n_vertices = vertices.len();
    if n_vertices > 1 && opts.n_segments > 1 {
        for restart in 0..opts.n_restarts {
            if search.exhausted() {
                break;
            }
            let k = 2 + restart % (opts.n_segments - 1);
            let mut seq = Vec::with_capacity(k);
            for i in 0..k {
                let mut v = rng.gen_range(0..n_vertices);
                if i > 0 && v == seq[i - 1] {
                    v = (v + 1 + rng.gen_range(0..n_vertices - 1)) % n_vertices;
                }
                seq.push(v);
            }
            let mut head: Vec<f64> = (0..k - 1)
                .map(|_| rng.gen_range(MIN_SEGMENT..(opts.horizon / k as f64).max(2.0 * MIN_SEGMENT)))
                .collect();
            let Some(mut closure) = search.close_loop(&seq, &head, None)? else {
                continue;
            };

            // coordinate ascent on the free durations
            let mut step = opts.horizon / (4.0 * k as f64);
            while step > 1e-6 && !search.exhausted() {
                let mut improved = false;
                for i in 0..head.len() {
                    for dir in [1.0, -1.0] {
                        let mut trial = head.clone();
                        trial[i] += dir * step;
                        if trial[i] < MIN_SEGMENT {
                            continue;
                        }
                        let window = Some((closure.last - 2.0 * step, closure.last + 2.0 * step));
                        let candidate = match search.close_loop(&seq, &trial, window)? {
                            Some(c) => Some(c),
                            None => search.close_loop(&seq, &trial, None)?,
                        };
                        if let Some(c) = candidate {
                            if c.rate > closure.rate + 1e-14 {
                                head = trial;
                                closure = c;
                                improved = true;
                                break;
                            }
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            let mut durations = head.clone();
            durations.push(closure.last);
            let cert = search.certificate(x, &seq, &durations, &vertices)?;
            if cert.angular_residual <= opts.angular_tol {
                found.push(cert);
            }
        }
    }
    found.retain(|c| c.angular_residual <= opts.angular_tol && c.rate.is_finite());
    found.sort_by(|a, b| b.rate.total_cmp(&a.rate));
    Ok(found)
}

/// Bracket for `ξ(x)`: best witness rate below, log-norm bound above.
pub fn xi_estimate<D: Dynamics + ?Sized>(sys: &D, x: &[f64], opts: &SearchOptions) -> Result<RateBracket> {
    let upper = xi_upper_bound(sys)?;
    let certs = ray_return_search(sys, x, opts)?;
    let witness = certs.into_iter().next();
    let lower = witness.as_ref().map_or(f64::NEG_INFINITY, |c| c.rate.min(upper));
    Ok(RateBracket { lower, upper, witness })
}

#[derive(Debug, Clone)]
pub struct RateEstimate {
    pub bracket: RateBracket,
    pub per_ray: Vec<(Vec<f64>, RateBracket)>,
    /// `false` when per-ray lower bounds disagree by more than the tolerance.
    pub consistent: bool,
}

/// Rays sampled across an arc: its midpoint first, then evenly spaced rays
/// including both end points.
pub fn arc_rays(arc: &ControlSetArc, count: usize) -> Result<Vec<Vec<f64>>> {
    let mid = crate::sphere_cs::interior_ray(arc)?;
    let mut rays = vec![mid];
    let (a, b) = arc.widest_interval();
    let span = (b - a).max(0.0);
    let count = count.max(2);
    for k in 0..count {
        let th = a + span * k as f64 / (count - 1) as f64;
        rays.push(vec![th.cos(), th.sin()]);
    }
    Ok(rays)
}

/// System rate `R` from rays of an invariant control set.
///
/// `ξ` is constant on the interior of the lifted set and bounded by `R`
/// everywhere, so the best witness from any sampled ray is a lower bound for
/// `R`; the log-norm bound is the upper bound.
pub fn compute_rate_from_rays<D: Dynamics + ?Sized>(
    sys: &D,
    rays: &[Vec<f64>],
    opts: &SearchOptions,
    consistency_tol: f64,
) -> Result<RateEstimate> {
    if rays.is_empty() {
        return Err(Error::Empty("rays"));
    }
    let upper = xi_upper_bound(sys)?;
    let mut per_ray = Vec::with_capacity(rays.len());
    for r in rays {
        per_ray.push((r.clone(), xi_estimate(sys, r, opts)?));
    }
    let best = per_ray
        .iter()
        .filter(|(_, b)| b.witness.is_some())
        .max_by(|a, b| a.1.lower.total_cmp(&b.1.lower));
    let (lower, witness) = match best {
        Some((_, b)) => (b.lower, b.witness.clone()),
        None => (f64::NEG_INFINITY, None),
    };
    let finite: Vec<f64> = per_ray.iter().map(|(_, b)| b.lower).filter(|v| v.is_finite()).collect();
    let consistent = match (
        finite.iter().copied().reduce(f64::max),
        finite.iter().copied().reduce(f64::min),
    ) {
        (Some(hi), Some(lo)) => hi - lo <= consistency_tol && finite.len() == per_ray.len(),
        _ => false,
    };
    Ok(RateEstimate { bracket: RateBracket { lower, upper, witness }, per_ray, consistent })
}

pub fn compute_rate(sys: &BilinearSystem, arc: &ControlSetArc, opts: &SearchOptions) -> Result<RateEstimate> {
    let rays = arc_rays(arc, 5)?;
    compute_rate_from_rays(sys, &rays, opts, 5e-2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bilinear::shifted_flow;
    use crate::matops::SquareMatrix;

    fn sys(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> BilinearSystem {
        BilinearSystem::new(
            SquareMatrix::from_rows(&a).unwrap(),
            vec![SquareMatrix::from_rows(&b).unwrap()],
            vec![-1.0],
            vec![1.0],
        )
        .unwrap()
    }

    fn example1() -> BilinearSystem {
        sys([[-1.0, 1.0], [1.0, 1.0]], [[1.0, 1.0], [1.0, -1.0]])
    }

    fn example2() -> BilinearSystem {
        sys([[1.0, -2.0], [2.0, 1.0]], [[-1.0, -2.0], [2.0, -1.0]])
    }

    fn scalar(r: f64) -> BilinearSystem {
        sys([[r, 0.0], [0.0, r]], [[0.0, 0.0], [0.0, 0.0]])
    }

    fn quick() -> SearchOptions {
        SearchOptions { horizon: 20.0, n_restarts: 8, budget: 60_000, ..Default::default() }
    }

    #[test]
    fn upper_bounds() {
        assert!((xi_upper_bound(&scalar(0.7)).unwrap() - 0.7).abs() < 1e-15);
        assert!((xi_upper_bound(&example1()).unwrap() - 2.0).abs() < 1e-12);
        assert!((xi_upper_bound(&example2()).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn example1_diagonal_ray_has_rate_two() {
        let certs = ray_return_search(&example1(), &[1.0, 1.0], &quick()).unwrap();
        let best = &certs[0];
        assert!((best.rate - 2.0).abs() < 1e-12);
        assert!(best.angular_residual < 1e-12);
        assert_eq!(best.control.values()[0], vec![1.0]);
    }

    #[test]
    fn example2_every_ray_has_rate_two() {
        for x in [[1.0, 0.0], [-0.3, 0.8]] {
            let b = xi_estimate(&example2(), &x, &quick()).unwrap();
            assert!((b.lower - 2.0).abs() < 1e-12 && (b.upper - 2.0).abs() < 1e-12);
            assert_eq!(b.witness.unwrap().control.values()[0], vec![-1.0]);
        }
    }

    #[test]
    fn scalar_system_bracket_pinches() {
        let b = xi_estimate(&scalar(-0.4), &[0.2, 1.0], &quick()).unwrap();
        assert!(b.width().abs() <= 1e-9);
        assert!((b.lower + 0.4).abs() < 1e-12);
    }

    #[test]
    fn saddle_has_no_return_off_axis() {
        let s = sys([[1.0, 0.0], [0.0, -1.0]], [[0.0, 0.0], [0.0, 0.0]]);
        assert!(ray_return_search(&s, &[1.0, 1.0], &quick()).unwrap().is_empty());
        let b = xi_estimate(&s, &[1.0, 1.0], &quick()).unwrap();
        assert_eq!(b.lower, f64::NEG_INFINITY);
        let certs = ray_return_search(&s, &[0.0, 1.0], &quick()).unwrap();
        assert!((certs[0].rate + 1.0).abs() < 1e-12);
        let certs = ray_return_search(&s, &[1.0, 0.0], &quick()).unwrap();
        assert!((certs[0].rate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interior_ray_of_example1_finds_switching_witness() {
        let th = 3.0 * PI / 8.0;
        let opts = SearchOptions { horizon: 40.0, ..quick() };
        let certs = ray_return_search(&example1(), &[th.cos(), th.sin()], &opts).unwrap();
        let best = certs.first().expect("a returning trajectory exists");
        assert!(best.control.len() >= 2);
        assert!(best.angular_residual <= 1e-6);
        assert!(best.rate > 1.9 && best.rate <= 2.0 + 1e-9, "rate {}", best.rate);
    }

    #[test]
    fn certificates_respect_upper_bound_and_shift() {
        let s = example1();
        let th: f64 = 1.2;
        let certs = ray_return_search(&s, &[th.cos(), th.sin()], &quick()).unwrap();
        assert!(!certs.is_empty());
        let ub = xi_upper_bound(&s).unwrap();
        for c in &certs {
            assert!(c.rate <= ub + 1e-9);
            for r in [0.5, 2.0, -1.0] {
                let y = shifted_flow(&s.shifted(r), c.period, &project(&c.x).unwrap(), &c.control).unwrap();
                let shifted_rate = vec_norm(&y).ln() / c.period;
                assert!((shifted_rate - (c.rate - r)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cyclic_extension_preserves_rate() {
        let s = example1();
        let th: f64 = 1.2;
        let certs = ray_return_search(&s, &[th.cos(), th.sin()], &quick()).unwrap();
        let c = &certs[0];
        for k in 2..=5 {
            let rep = RayReturnCertificate::evaluate(&s, &c.x, &c.control.repeated(k)).unwrap();
            assert!((rep.rate - c.rate).abs() <= c.rate_error + 1e-9);
            assert!(rep.angular_residual <= k as f64 * c.angular_residual.max(1e-15) + 1e-12);
        }
    }

    #[test]
    fn brackets_are_scale_invariant() {
        let s = example1();
        let a = xi_estimate(&s, &[0.3, 0.9], &quick()).unwrap();
        let b = xi_estimate(&s, &[0.6, 1.8], &quick()).unwrap();
        assert_eq!(a.lower, b.lower);
        assert_eq!(a.upper, b.upper);
    }

    #[test]
    fn search_is_deterministic() {
        let s = example1();
        let a = ray_return_search(&s, &[0.2, 1.0], &quick()).unwrap();
        let b = ray_return_search(&s, &[0.2, 1.0], &quick()).unwrap();
        assert_eq!(a, b);
    }
}
