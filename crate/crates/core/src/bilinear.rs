//! Bilinear control systems `ẋ = (A + Σ uᵢBᵢ) x` with controls in a box,
//! piecewise-constant control signals, exact flows and the induced dynamics on
//! the unit sphere.

use crate::error::{Error, Result};
use crate::matops::{expm, vec_norm, SquareMatrix};

/// Tolerance for control values sitting on the box boundary.
pub const CONTROL_BOX_TOL: f64 = 1e-12;

/// Anything that assigns a drift matrix to each control value in a box.
///
/// Implemented by [`BilinearSystem`] and [`ShiftedSystem`], so flows and
/// reachable-set propagation are written once for both.
pub trait Dynamics {
    fn dim(&self) -> usize;
    fn control_box(&self) -> (&[f64], &[f64]);
    fn drift_unchecked(&self, u0: &[f64]) -> SquareMatrix;

    fn n_controls(&self) -> usize {
        self.control_box().0.len()
    }

    fn contains_control(&self, u0: &[f64]) -> bool {
        let (lo, hi) = self.control_box();
        u0.len() == lo.len()
            && u0
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(u, (l, h))| u.is_finite() && *u >= l - CONTROL_BOX_TOL && *u <= h + CONTROL_BOX_TOL)
    }

    fn check_control_value(&self, u0: &[f64]) -> Result<()> {
        if u0.len() != self.n_controls() {
            return Err(Error::DimensionMismatch { expected: self.n_controls(), got: u0.len() });
        }
        if !self.contains_control(u0) {
            return Err(Error::OutsideControlSet { value: u0.to_vec() });
        }
        Ok(())
    }

    /// `F(u0)`, validated against the control box.
    fn drift(&self, u0: &[f64]) -> Result<SquareMatrix> {
        self.check_control_value(u0)?;
        Ok(self.drift_unchecked(u0))
    }

    /// The `2^m` corners of the control box, in binary order (first
    /// coordinate varies slowest). Degenerate axes are not deduplicated.
    fn vertices(&self) -> Vec<Vec<f64>> {
        let (lo, hi) = self.control_box();
        let m = lo.len();
        (0..1usize << m)
            .map(|mask| (0..m).map(|i| if mask >> (m - 1 - i) & 1 == 1 { hi[i] } else { lo[i] }).collect())
            .collect()
    }

    /// Uniform grid over the box with about `count` points in total
    /// (`⌈count^{1/m}⌉` per axis), always including the corners.
    fn control_grid(&self, count: usize) -> Vec<Vec<f64>> {
        let (lo, hi) = self.control_box();
        let m = lo.len();
        let per_axis = ((count.max(1) as f64).powf(1.0 / m as f64).round() as usize).max(2);
        let axis = |i: usize| -> Vec<f64> {
            if hi[i] == lo[i] {
                return vec![lo[i]];
            }
            (0..per_axis)
                .map(|k| lo[i] + (hi[i] - lo[i]) * k as f64 / (per_axis - 1) as f64)
                .collect()
        };
        let mut grid: Vec<Vec<f64>> = vec![vec![]];
        for i in 0..m {
            let values = axis(i);
            grid = grid
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(*v);
                        p
                    })
                })
                .collect();
        }
        grid
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilinearSystem {
    a: SquareMatrix,
    bs: Vec<SquareMatrix>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BilinearSystem {
    pub fn new(a: SquareMatrix, bs: Vec<SquareMatrix>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if bs.is_empty() {
            return Err(Error::Empty("control matrices"));
        }
        for b in &bs {
            if b.dim() != a.dim() {
                return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
            }
        }
        if lo.len() != bs.len() || hi.len() != bs.len() {
            return Err(Error::DimensionMismatch { expected: bs.len(), got: lo.len().min(hi.len()) });
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !l.is_finite() || !h.is_finite() {
                return Err(Error::NonFinite("control box"));
            }
            if l > h {
                return Err(Error::InvalidArgument(format!("empty control interval [{l}, {h}]")));
            }
        }
        Ok(Self { a, bs, lo, hi })
    }

    pub fn a(&self) -> &SquareMatrix {
        &self.a
    }

    pub fn bs(&self) -> &[SquareMatrix] {
        &self.bs
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// The system with drift `F(u) − r·Id`.
    pub fn shifted(&self, r: f64) -> ShiftedSystem {
        ShiftedSystem { base: self.clone(), r }
    }
}

impl Dynamics for BilinearSystem {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn control_box(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    fn drift_unchecked(&self, u0: &[f64]) -> SquareMatrix {
        self.bs
            .iter()
            .zip(u0)
            .fold(self.a.clone(), |acc, (b, u)| acc.axpy(*u, b).expect("dims checked at construction"))
    }
}

/// `F(u0) = A + Σ u0ᵢ Bᵢ`.
pub fn drift_matrix(sys: &BilinearSystem, u0: &[f64]) -> Result<SquareMatrix> {
    sys.drift(u0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedSystem {
    base: BilinearSystem,
    r: f64,
}

impl ShiftedSystem {
    pub fn base(&self) -> &BilinearSystem {
        &self.base
    }

    pub fn r(&self) -> f64 {
        self.r
    }
}

impl Dynamics for ShiftedSystem {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn control_box(&self) -> (&[f64], &[f64]) {
        self.base.control_box()
    }

    fn drift_unchecked(&self, u0: &[f64]) -> SquareMatrix {
        let d = self.dim();
        self.base.drift_unchecked(u0).axpy(-self.r, &SquareMatrix::identity(d)).expect("same dim")
    }
}

/// A piecewise-constant control: segment `k` holds `values[k]` for
/// `durations[k]` time units. Cyclic controls repeat the segment list.
#[derive(Debug, Clone, PartialEq)]
pub struct PwcControl {
    durations: Vec<f64>,
    values: Vec<Vec<f64>>,
    cyclic: bool,
}

impl PwcControl {
    pub fn new(durations: Vec<f64>, values: Vec<Vec<f64>>, cyclic: bool) -> Result<Self> {
        if durations.is_empty() {
            return Err(Error::Empty("control segments"));
        }
        if durations.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: durations.len(), got: values.len() });
        }
        if let Some(d) = durations.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::InvalidControl(format!("segment duration {d} must be positive and finite")));
        }
        let m = values[0].len();
        if values.iter().any(|v| v.len() != m) {
            return Err(Error::InvalidControl("segment values differ in length".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("control values"));
        }
        Ok(Self { durations, values, cyclic })
    }

    pub fn constant(value: Vec<f64>, duration: f64) -> Result<Self> {
        Self::new(vec![duration], vec![value], true)
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn is_cyclic(&self) -> bool {
        self.cyclic
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    /// Length of one pass through the segment list (the period when cyclic).
    pub fn total_duration(&self) -> f64 {
        self.durations.iter().sum()
    }

    pub fn with_cyclic(mut self, cyclic: bool) -> Self {
        self.cyclic = cyclic;
        self
    }

    /// The segment list concatenated `k` times.
    pub fn repeated(&self, k: usize) -> Self {
        let k = k.max(1);
        Self {
            durations: self.durations.repeat(k),
            values: (0..k).flat_map(|_| self.values.iter().cloned()).collect(),
            cyclic: self.cyclic,
        }
    }

    /// Ordered `(duration, value)` pieces covering `[0, t]`.
    pub fn pieces(&self, t: f64) -> Result<Vec<(f64, &[f64])>> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidArgument(format!("time {t} must be finite and nonnegative")));
        }
        let total = self.total_duration();
        if !self.cyclic && t > total * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::TimeOutOfRange { t, duration: total });
        }
        let mut out = Vec::new();
        let mut remaining = t;
        'outer: loop {
            for (d, v) in self.durations.iter().zip(&self.values) {
                if remaining <= 0.0 {
                    break 'outer;
                }
                let h = d.min(remaining);
                out.push((h, v.as_slice()));
                remaining -= h;
            }
            if !self.cyclic || remaining <= 0.0 {
                break;
            }
        }
        Ok(out)
    }

    /// `u(· + t)`: the control as seen after `t` time units.
    pub fn shifted(&self, t: f64) -> Result<Self> {
        let total = self.total_duration();
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidArgument(format!("shift {t} must be finite and nonnegative")));
        }
        let offset = if self.cyclic { t % total } else { t };
        if !self.cyclic && offset >= total {
            return Err(Error::TimeOutOfRange { t, duration: total });
        }
        let mut durations = Vec::new();
        let mut values = Vec::new();
        let mut acc = 0.0;
        let mut head = Vec::new();
        for (d, v) in self.durations.iter().zip(&self.values) {
            let start = acc;
            let end = acc + d;
            acc = end;
            if end <= offset {
                head.push((*d, v.clone()));
                continue;
            }
            if start < offset {
                durations.push(end - offset);
                values.push(v.clone());
                head.push((offset - start, v.clone()));
            } else {
                durations.push(*d);
                values.push(v.clone());
            }
        }
        if self.cyclic {
            for (d, v) in head {
                if d > 0.0 {
                    durations.push(d);
                    values.push(v);
                }
            }
        }
        Self::new(durations, values, self.cyclic)
    }

    /// `∫₀ᵗ u(s) ds`, componentwise.
    pub fn integral(&self, t: f64) -> Result<Vec<f64>> {
        let m = self.values[0].len();
        let mut acc = vec![0.0; m];
        for (h, v) in self.pieces(t)? {
            for (a, vi) in acc.iter_mut().zip(v) {
                *a += h * vi;
            }
        }
        Ok(acc)
    }
}

fn check_control<D: Dynamics + ?Sized>(sys: &D, u: &PwcControl) -> Result<()> {
    for v in u.values() {
        sys.check_control_value(v)?;
    }
    Ok(())
}

/// Transition matrix `φ_u^t` as the ordered product of segment exponentials.
pub fn flow_matrix<D: Dynamics + ?Sized>(sys: &D, t: f64, u: &PwcControl) -> Result<SquareMatrix> {
    check_control(sys, u)?;
    let mut phi = SquareMatrix::identity(sys.dim());
    for (h, v) in u.pieces(t)? {
        let step = expm(&sys.drift_unchecked(v), h)?;
        phi = step.matmul(&phi)?;
    }
    Ok(phi)
}

/// `φ(t, x, u)`.
pub fn flow<D: Dynamics + ?Sized>(sys: &D, t: f64, x: &[f64], u: &PwcControl) -> Result<Vec<f64>> {
    if x.len() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state"));
    }
    check_control(sys, u)?;
    let mut state = x.to_vec();
    for (h, v) in u.pieces(t)? {
        state = expm(&sys.drift_unchecked(v), h)?.apply_unchecked(&state);
    }
    if state.iter().any(|v| !v.is_finite()) {
        return Err(Error::Range("flow overflowed".into()));
    }
    Ok(state)
}

/// Flow of `Σ_r`, integrated directly with the drift `F(u) − r·Id`.
pub fn shifted_flow(sh: &ShiftedSystem, t: f64, x: &[f64], u: &PwcControl) -> Result<Vec<f64>> {
    flow(sh, t, x, u)
}

/// The point `y` with `φ(t, y, u) = x`, via the inverse transition matrix.
pub fn backward_flow<D: Dynamics + ?Sized>(sys: &D, t: f64, x: &[f64], u: &PwcControl) -> Result<Vec<f64>> {
    flow_matrix(sys, t, u)?.inverse()?.apply(x)
}

/// `x / ‖x‖`.
pub fn project(x: &[f64]) -> Result<Vec<f64>> {
    let n = vec_norm(x);
    if !n.is_finite() {
        return Err(Error::NonFinite("vector"));
    }
    if n <= 1e-300 {
        return Err(Error::ZeroVector);
    }
    Ok(x.iter().map(|v| v / n).collect())
}

/// Vector field on the sphere induced by `ẋ = Mx`: `Mx̂ − ⟨x̂, Mx̂⟩x̂`.
pub fn sphere_field(m: &SquareMatrix, xhat: &[f64]) -> Result<Vec<f64>> {
    let n = vec_norm(xhat);
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::NotUnit(n));
    }
    let mx = m.apply(xhat)?;
    let radial: f64 = mx.iter().zip(xhat).map(|(a, b)| a * b).sum();
    Ok(mx.iter().zip(xhat).map(|(a, b)| a - radial * b).collect())
}
