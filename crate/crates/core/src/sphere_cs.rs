//! Invariant control sets of the projected planar system.
//!
//! The circle is cut into `n` half-open bins `[i·h, (i+1)·h)`. Bin `i` has an
//! edge to bin `j` when some sampled constant control carries a point of bin
//! `i` into bin `j` in time `τ`. Closed communicating classes of this graph
//! approximate the invariant control sets.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::bilinear::Dynamics;
use crate::error::{Error, Result};
use crate::matops::expm;

/// Image arcs are shrunk by this fraction of a bin so that fixed points on a
/// bin boundary do not leak into the neighbouring bin.
const BOUNDARY_SHRINK: f64 = 1e-9;
pub const MIN_BINS: usize = 90;

#[derive(Debug, Clone, PartialEq)]
pub struct ReachGraph {
    n_bins: usize,
    tau: f64,
    edges: Vec<Vec<usize>>,
}

impl ReachGraph {
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn bin_width(&self) -> f64 {
        TAU / self.n_bins as f64
    }

    pub fn successors(&self, bin: usize) -> &[usize] {
        &self.edges[bin]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges[from].binary_search(&to).is_ok()
    }

    pub fn bin_of(&self, theta: f64) -> usize {
        bin_index(theta, self.n_bins)
    }

    pub fn bin_center(&self, bin: usize) -> f64 {
        (bin as f64 + 0.5) * self.bin_width()
    }
}

fn bin_index(theta: f64, n: usize) -> usize {
    let h = TAU / n as f64;
    ((theta.rem_euclid(TAU) / h).floor() as usize).min(n - 1)
}

fn angle_of(v: &[f64]) -> f64 {
    v[1].atan2(v[0]).rem_euclid(TAU)
}

/// Builds the bin graph for a planar system.
pub fn build_reach_graph<D: Dynamics + ?Sized>(
    sys: &D,
    n_bins: usize,
    tau: f64,
    control_samples: &[Vec<f64>],
) -> Result<ReachGraph> {
    if sys.dim() != 2 {
        return Err(Error::Unsupported(format!("bin graph needs dimension 2, got {}", sys.dim())));
    }
    if n_bins < MIN_BINS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_BINS} bins, got {n_bins}")));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    if control_samples.is_empty() {
        return Err(Error::Empty("control_samples"));
    }
    let maps = control_samples
        .iter()
        .map(|u| expm(&sys.drift(u)?, tau))
        .collect::<Result<Vec<_>>>()?;
    let h = TAU / n_bins as f64;
    let eps = BOUNDARY_SHRINK * h;
    let mut edges = vec![Vec::new(); n_bins];
    for (i, out) in edges.iter_mut().enumerate() {
        let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
        for m in &maps {
            let pa = m.apply(&[a.cos(), a.sin()])?;
            let pb = m.apply(&[b.cos(), b.sin()])?;
            let start = angle_of(&pa);
            let mut len = (angle_of(&pb) - start).rem_euclid(TAU);
            // orientation preserving, so the image runs counter-clockwise
            if len > PI {
                len = 0.0;
            }
            let lo = start + eps.min(0.5 * len);
            let hi = start + (len - eps).max(0.5 * len);
            let first = bin_index(lo, n_bins);
            let count = ((hi - (first as f64) * h).max(0.0) / h).floor() as usize;
            for k in 0..=count.min(n_bins - 1) {
                out.push((first + k) % n_bins);
            }
        }
        out.sort_unstable();
        out.dedup();
    }
    Ok(ReachGraph { n_bins, tau, edges })
}

/// A closed communicating class, as angular intervals `[start, end]` with
/// `end > start` (an interval may pass through `2π`).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSetArc {
    pub bins: Vec<usize>,
    pub intervals: Vec<(f64, f64)>,
    pub full_circle: bool,
    /// No graph edge leaves the bin set.
    pub invariant: bool,
}

impl ControlSetArc {
    fn from_bins(mut bins: Vec<usize>, n: usize) -> Self {
        bins.sort_unstable();
        let h = TAU / n as f64;
        if bins.len() == n {
            return Self { bins, intervals: vec![(0.0, TAU)], full_circle: true, invariant: true };
        }
        let member = {
            let mut m = vec![false; n];
            for &b in &bins {
                m[b] = true;
            }
            m
        };
        let mut intervals = Vec::new();
        for &b in &bins {
            if member[(b + n - 1) % n] {
                continue;
            }
            let mut len = 1;
            while member[(b + len) % n] {
                len += 1;
            }
            intervals.push((b as f64 * h, (b + len) as f64 * h));
        }
        intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
        Self { bins, intervals, full_circle: false, invariant: true }
    }

    pub fn width(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn widest_interval(&self) -> (f64, f64) {
        *self
            .intervals
            .iter()
            .max_by(|x, y| (x.1 - x.0).total_cmp(&(y.1 - y.0)))
            .expect("arc has at least one interval")
    }

    pub fn contains_angle(&self, theta: f64) -> bool {
        let t = theta.rem_euclid(TAU);
        self.intervals
            .iter()
            .any(|&(a, b)| (t >= a && t <= b) || (t + TAU >= a && t + TAU <= b))
    }
}

fn closed_classes(g: &ReachGraph) -> Vec<Vec<usize>> {
    let mut dg = DiGraph::<(), ()>::with_capacity(g.n_bins, 0);
    let nodes: Vec<_> = (0..g.n_bins).map(|_| dg.add_node(())).collect();
    for (i, out) in g.edges.iter().enumerate() {
        for &j in out {
            dg.add_edge(nodes[i], nodes[j], ());
        }
    }
    let sccs = tarjan_scc(&dg);
    let mut comp = vec![0usize; g.n_bins];
    for (c, scc) in sccs.iter().enumerate() {
        for n in scc {
            comp[n.index()] = c;
        }
    }
    sccs.into_iter()
        .enumerate()
        .filter(|(c, scc)| scc.iter().all(|n| g.edges[n.index()].iter().all(|&j| comp[j] == *c)))
        .map(|(_, scc)| scc.into_iter().map(|n| n.index()).collect())
        .collect()
}

/// Closed classes with at least two bins, ordered by starting angle.
pub fn invariant_control_sets(g: &ReachGraph) -> Vec<ControlSetArc> {
    let mut arcs: Vec<_> = closed_classes(g)
        .into_iter()
        .filter(|c| c.len() >= 2)
        .map(|c| ControlSetArc::from_bins(c, g.n_bins))
        .collect();
    arcs.sort_by(|a, b| a.intervals[0].0.total_cmp(&b.intervals[0].0));
    arcs
}

/// Centres of single-bin closed classes: candidate equilibrium rays.
pub fn equilibrium_rays(g: &ReachGraph) -> Vec<f64> {
    let mut rays: Vec<f64> = closed_classes(g)
        .into_iter()
        .filter(|c| c.len() == 1)
        .map(|c| g.bin_center(c[0]))
        .collect();
    rays.sort_by(f64::total_cmp);
    rays
}

/// Unit vector at the middle of the widest interval; `(1, 0)` for the full
/// circle.
pub fn interior_ray(arc: &ControlSetArc) -> Result<Vec<f64>> {
    if arc.full_circle {
        return Ok(vec![1.0, 0.0]);
    }
    let (a, b) = arc.widest_interval();
    if arc.bins.len() < 2 || b - a <= 0.0 {
        return Err(Error::Degenerate("arc has no interior".into()));
    }
    let mid = 0.5 * (a + b);
    Ok(vec![mid.cos(), mid.sin()])
}

/// Writes `arc,start,end,invariant` rows, angles in radians.
pub fn write_arcs_csv<W: Write>(arcs: &[ControlSetArc], mut w: W) -> std::io::Result<()> {
    writeln!(w, "arc,start,end,invariant")?;
    for (i, arc) in arcs.iter().enumerate() {
        for (a, b) in &arc.intervals {
            writeln!(w, "{i},{a:.17e},{b:.17e},{}", arc.invariant)?;
        }
    }
    Ok(())
}
