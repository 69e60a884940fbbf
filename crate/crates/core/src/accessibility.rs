//! Accessibility of the projected system via the Lie algebra rank condition.
//!
//! A `true` verdict certifies the hypothesis on the checked grid. A `false`
//! verdict only means the hypothesis could not be certified there.

use crate::bilinear::{sphere_field, BilinearSystem, Dynamics};
use crate::error::{Error, Result};
use crate::matops::{lie_bracket, span_rank, SquareMatrix};

#[derive(Debug, Clone)]
pub struct LieAlgebraBasis {
    pub elements: Vec<SquareMatrix>,
    /// `true` when a bracket layer added nothing before `max_depth` ran out.
    pub saturated: bool,
}

#[derive(Debug, Clone)]
pub struct AccessibilityReport {
    pub checked_points: Vec<Vec<f64>>,
    pub rank_ok: Vec<bool>,
    pub generated_basis_size: usize,
    pub saturated: bool,
    pub verdict: bool,
}

/// Gram–Schmidt accumulator over vectorized matrices.
struct SpanTracker {
    orthonormal: Vec<Vec<f64>>,
    tol: f64,
}

impl SpanTracker {
    fn new(tol: f64) -> Self {
        Self { orthonormal: Vec::new(), tol }
    }

    fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut r = v.to_vec();
        // two passes for numerical orthogonality
        for _ in 0..2 {
            for q in &self.orthonormal {
                let c: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
                r.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        r
    }

    fn relative_residual(&self, v: &[f64]) -> f64 {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return 0.0;
        }
        self.residual(v).iter().map(|x| x * x).sum::<f64>().sqrt() / n
    }

    /// Adds `v` if it is independent of the current span.
    fn try_add(&mut self, v: &[f64]) -> bool {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return false;
        }
        let r = self.residual(v);
        let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if rn <= self.tol * n {
            return false;
        }
        self.orthonormal.push(r.into_iter().map(|x| x / rn).collect());
        true
    }
}

/// Basis of the matrix Lie algebra generated by the vertex drifts `F(v)`.
pub fn lie_algebra_basis(sys: &BilinearSystem, max_depth: usize, tol: f64) -> Result<LieAlgebraBasis> {
    if max_depth == 0 {
        return Err(Error::InvalidArgument("max_depth must be at least 1".into()));
    }
    let mut tracker = SpanTracker::new(tol);
    let mut basis: Vec<SquareMatrix> = Vec::new();
    let mut layer: Vec<SquareMatrix> = Vec::new();
    for v in sys.vertices() {
        let g = sys.drift(&v)?;
        if tracker.try_add(g.as_slice()) {
            basis.push(g.clone());
            layer.push(g);
        }
    }
    let mut saturated = false;
    for _depth in 2..=max_depth {
        let mut next = Vec::new();
        for x in &layer {
            for y in basis.clone() {
                let br = lie_bracket(x, &y)?;
                if tracker.try_add(br.as_slice()) {
                    basis.push(br.clone());
                    next.push(br);
                }
            }
        }
        if next.is_empty() {
            saturated = true;
            break;
        }
        layer = next;
    }
    if !saturated && max_depth == 1 {
        saturated = basis.iter().all(|x| {
            basis.iter().all(|y| {
                lie_bracket(x, y).map(|b| tracker.relative_residual(b.as_slice()) <= tol).unwrap_or(false)
            })
        });
    }
    Ok(LieAlgebraBasis { elements: basis, saturated })
}

/// Rank condition at one point: the projected basis fields span the tangent
/// space of the sphere at `xhat`.
pub fn larc_at_point(basis: &[SquareMatrix], xhat: &[f64], tol: f64) -> Result<bool> {
    let d = xhat.len();
    if d <= 1 {
        return Ok(true);
    }
    if basis.is_empty() {
        return Ok(false);
    }
    let fields = basis.iter().map(|m| sphere_field(m, xhat)).collect::<Result<Vec<_>>>()?;
    let largest = fields.iter().map(|f| f.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
    // all fields vanish: rank 0 regardless of relative cutoff
    let scale = basis.iter().map(SquareMatrix::max_abs).fold(0.0, f64::max);
    if largest <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Ok(false);
    }
    Ok(span_rank(&fields, tol)? == d - 1)
}

/// Points on `S^{d−1}` used for the grid sweep: a uniform angular grid on
/// the circle, a Fibonacci lattice on `S²`.
pub fn sphere_grid(dim: usize, n: usize) -> Result<Vec<Vec<f64>>> {
    use std::f64::consts::PI;
    match dim {
        1 => Ok(vec![vec![1.0], vec![-1.0]]),
        2 => Ok((0..n)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / n as f64;
                vec![th.cos(), th.sin()]
            })
            .collect()),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            Ok((0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * k as f64;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect())
        }
        _ => Err(Error::Unsupported(format!("sphere grids in dimension {dim}"))),
    }
}

pub fn check_accessibility(
    sys: &BilinearSystem,
    grid_size: usize,
    max_depth: usize,
    tol: f64,
) -> Result<AccessibilityReport> {
    if grid_size < 8 {
        return Err(Error::InvalidArgument(format!("grid_size {grid_size} < 8")));
    }
    let points = sphere_grid(sys.dim(), grid_size)?;
    let basis = lie_algebra_basis(sys, max_depth, tol)?;
    let rank_ok = points
        .iter()
        .map(|p| larc_at_point(&basis.elements, p, tol))
        .collect::<Result<Vec<_>>>()?;
    let verdict = rank_ok.iter().all(|ok| *ok);
    Ok(AccessibilityReport {
        checked_points: points,
        rank_ok,
        generated_basis_size: basis.elements.len(),
        saturated: basis.saturated,
        verdict,
    })
}
