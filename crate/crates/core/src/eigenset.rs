//! Control eigensets of planar systems.
//!
//! A compact star set `D` with `𝒪_t(D) = e^{tR}·D` for all `t ≥ 0`. Equivalently
//! `D` is invariant under the shifted system `Σ_R`, which is what both
//! constructions iterate.

use crate::bilinear::{BilinearSystem, Dynamics};
use crate::error::{Error, Result};
use crate::spectrum::RayReturnCertificate;
use crate::starset::{
    directed_hausdorff, hausdorff, reach_step_with, scale, step_maps, union, ReachOptions, StarSet2,
};

/// Witness rate and `R` may differ by at most this much.
pub const WITNESS_RATE_TOL: f64 = 1e-3;
/// Phase one of the general construction gives up past this radius.
pub const BLOW_UP_RADIUS: f64 = 1e6;
/// A constructed set must reach at least this radius somewhere.
pub const NONTRIVIAL_RADIUS: f64 = 1e-6;
/// Sampled reach sets are inner approximations.
pub const REACH_CAVEAT: &str =
    "reach side uses sampled constant controls (inner approximation); deficit is measured against reachable samples only";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Construction {
    Witness,
    General,
}

#[derive(Debug, Clone)]
pub struct EigensetResult {
    pub set: StarSet2,
    pub rate: f64,
    pub construction: Construction,
    pub iterations: usize,
    pub converged: bool,
    pub final_increment: f64,
    /// Forward-invariant set from phase one of the general construction.
    pub d0: Option<StarSet2>,
}

#[derive(Debug, Clone)]
pub struct IterationOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub n_angles: usize,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self { tol: 1e-3, max_iter: 500, n_angles: 1024 }
    }
}

impl IterationOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol {} must be positive", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be positive".into()));
        }
        Ok(())
    }
}

fn check_planar(sys: &BilinearSystem) -> Result<()> {
    if sys.dim() != 2 {
        return Err(Error::Unsupported(format!("eigensets are built for d = 2, got d = {}", sys.dim())));
    }
    Ok(())
}

/// Grows `W ← W ∪ 𝒪_τ(W)` under `Σ_R` from the segment `[0, x]` of a
/// returning ray until the Hausdorff increment drops below `tol`.
pub fn construct_from_witness(
    sys: &BilinearSystem,
    rate: f64,
    witness: &RayReturnCertificate,
    reach: &ReachOptions,
    iter: &IterationOptions,
) -> Result<EigensetResult> {
    if (witness.rate - rate).abs() > WITNESS_RATE_TOL {
        return Err(Error::InvalidArgument(format!(
            "witness rate {} differs from R = {rate}",
            witness.rate
        )));
    }
    construct_from_seed(sys, rate, &witness.x, reach, iter)
}

/// As [`construct_from_witness`] with an explicit seed point.
pub fn construct_from_seed(
    sys: &BilinearSystem,
    rate: f64,
    seed: &[f64],
    reach: &ReachOptions,
    iter: &IterationOptions,
) -> Result<EigensetResult> {
    check_planar(sys)?;
    iter.validate()?;
    if !rate.is_finite() {
        return Err(Error::NonFinite("rate"));
    }
    let maps = step_maps(&sys.shifted(rate), reach)?;
    let mut w = StarSet2::segment(seed, iter.n_angles)?;
    let mut increment = f64::INFINITY;
    let mut iterations = 0;
    while iterations < iter.max_iter {
        iterations += 1;
        let next = union(&w, &reach_step_with(&maps, &w)?)?;
        increment = hausdorff(&next, &w)?;
        w = next;
        if increment < iter.tol {
            break;
        }
    }
    if w.max_radius() < NONTRIVIAL_RADIUS {
        return Err(Error::Degenerate("iteration collapsed below the nontriviality floor".into()));
    }
    Ok(EigensetResult {
        set: w,
        rate,
        construction: Construction::Witness,
        iterations,
        converged: increment < iter.tol,
        final_increment: increment,
        d0: None,
    })
}

/// Two phases under `Σ_R`: grow the unit ball to a forward-invariant `D₀`,
/// then iterate `E ← 𝒪_τ(E)` from `D₀` until it stops moving.
pub fn construct_general(
    sys: &BilinearSystem,
    rate: f64,
    reach: &ReachOptions,
    iter: &IterationOptions,
) -> Result<EigensetResult> {
    check_planar(sys)?;
    iter.validate()?;
    if !rate.is_finite() {
        return Err(Error::NonFinite("rate"));
    }
    let maps = step_maps(&sys.shifted(rate), reach)?;

    let mut d0 = StarSet2::ball(iter.n_angles)?;
    let mut grown = false;
    for _ in 0..iter.max_iter {
        let next = union(&d0, &reach_step_with(&maps, &d0)?)?;
        if next.max_radius() > BLOW_UP_RADIUS {
            return Err(Error::BlowUp(format!(
                "invariant hull exceeded radius {BLOW_UP_RADIUS}; R = {rate} is likely too small"
            )));
        }
        let inc = hausdorff(&next, &d0)?;
        d0 = next;
        if inc < iter.tol {
            grown = true;
            break;
        }
    }
    if !grown {
        return Err(Error::BlowUp("invariant hull did not settle within max_iter".into()));
    }

    let mut e = d0.clone();
    let mut increment = f64::INFINITY;
    let mut iterations = 0;
    while iterations < iter.max_iter {
        iterations += 1;
        let next = reach_step_with(&maps, &e)?;
        increment = hausdorff(&next, &e)?;
        e = next;
        if increment < iter.tol {
            break;
        }
    }
    if e.max_radius() < NONTRIVIAL_RADIUS {
        return Err(Error::Degenerate("iteration collapsed to the origin; R is likely too large".into()));
    }
    Ok(EigensetResult {
        set: e,
        rate,
        construction: Construction::General,
        iterations,
        converged: increment < iter.tol,
        final_increment: increment,
        d0: Some(d0),
    })
}

#[derive(Debug, Clone)]
pub struct TimeCheck {
    pub t: f64,
    /// `hausdorff(𝒪_t(D), e^{tR}D) / e^{tR}`.
    pub distance: f64,
    /// Part of the reachable set outside the target, same normalisation.
    pub excess: f64,
    /// Part of the target the reachable set misses, same normalisation.
    pub deficit: f64,
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub checks: Vec<TimeCheck>,
    pub max_distance: f64,
    pub tol: f64,
    pub pass: bool,
    pub caveat: &'static str,
}

/// Compares the sampled reachable set of `D` under the unshifted system with
/// `e^{tR}·D` at each requested time. Times must be multiples of the reach
/// step. Distances are divided by `e^{tR}` so they measure shape, not size.
pub fn verify_eigenset(
    sys: &BilinearSystem,
    set: &StarSet2,
    rate: f64,
    times: &[f64],
    reach: &ReachOptions,
    tol: f64,
) -> Result<VerificationReport> {
    check_planar(sys)?;
    if times.is_empty() {
        return Err(Error::Empty("times"));
    }
    let step = reach.step();
    let mut plan = Vec::with_capacity(times.len());
    for &t in times {
        let k = (t / step).round();
        if !(t > 0.0) || (k * step - t).abs() > 1e-9 * t.max(1.0) || k < 1.0 {
            return Err(Error::InvalidArgument(format!("time {t} is not a positive multiple of the step {step}")));
        }
        plan.push((t, k as usize));
    }
    let maps = step_maps(sys, reach)?;
    let mut cache: Vec<StarSet2> = vec![set.clone()];
    let mut checks = Vec::with_capacity(plan.len());
    for (t, k) in plan {
        while cache.len() <= k {
            let next = reach_step_with(&maps, cache.last().expect("nonempty"))?;
            cache.push(next);
        }
        let growth = (t * rate).exp();
        let target = scale(set, growth)?;
        let reached = &cache[k];
        let excess = directed_hausdorff(reached, &target)? / growth;
        let deficit = directed_hausdorff(&target, reached)? / growth;
        checks.push(TimeCheck { t, distance: excess.max(deficit), excess, deficit });
    }
    let max_distance = checks.iter().map(|c| c.distance).fold(0.0, f64::max);
    Ok(VerificationReport { checks, max_distance, tol, pass: max_distance <= tol, caveat: REACH_CAVEAT })
}

/// Union of scaled eigensets `⋃ αᵢ Dᵢ`; the result is again an eigenset when
/// all members share the rate.
pub fn union_family(members: &[(f64, StarSet2)]) -> Result<StarSet2> {
    let mut iter = members.iter();
    let (a0, s0) = iter.next().ok_or(Error::Empty("members"))?;
    let mut acc = scale(s0, *a0)?;
    for (a, s) in iter {
        acc = union(&acc, &scale(s, *a)?)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matops::SquareMatrix;
    use crate::starset::is_subset_tol;

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

    fn opts(s: &BilinearSystem) -> ReachOptions {
        ReachOptions::uniform(s, 0.05, 9).unwrap()
    }

    fn small() -> IterationOptions {
        IterationOptions { n_angles: 256, ..Default::default() }
    }

    #[test]
    fn example1_witness_gives_triangle() {
        let s = example1();
        let reach = ReachOptions::uniform(&s, 0.05, 32).unwrap();
        let res = construct_from_seed(&s, 2.0, &[1.0, 1.0], &reach, &IterationOptions::default()).unwrap();
        assert!(res.converged);
        let tri = StarSet2::from_polygon(&[[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]], 1024).unwrap();
        let d = hausdorff(&res.set, &tri).unwrap();
        assert!(d < 0.02, "distance {d}");
    }

    #[test]
    fn example1_verifies_at_rate_two() {
        let s = example1();
        let tri = StarSet2::from_polygon(&[[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]], 256).unwrap();
        let rep = verify_eigenset(&s, &tri, 2.0, &[0.25, 0.5], &opts(&s), 0.03).unwrap();
        assert!(rep.pass, "{rep:?}");
        let ball = StarSet2::ball(256).unwrap();
        let rep = verify_eigenset(&s, &ball, 2.0, &[0.25, 0.5], &opts(&s), 0.03).unwrap();
        assert!(!rep.pass);
    }

    #[test]
    fn example2_general_gives_ball() {
        let s = example2();
        let res = construct_general(&s, 2.0, &opts(&s), &small()).unwrap();
        let ball = StarSet2::ball(256).unwrap();
        let d = hausdorff(&res.set, &ball).unwrap();
        assert!(d < 0.05, "distance {d}");
    }

    #[test]
    fn general_construction_contains_triangle_family() {
        let s = example1();
        let res = construct_general(&s, 2.0, &opts(&s), &small()).unwrap();
        let t1 = StarSet2::from_polygon(&[[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]], 256).unwrap();
        let t2 = StarSet2::from_polygon(&[[0.0, 0.0], [0.0, -1.0], [-1.0, -1.0]], 256).unwrap();
        let fam = union_family(&[(std::f64::consts::FRAC_1_SQRT_2, t1), (std::f64::consts::FRAC_1_SQRT_2, t2)]).unwrap();
        assert!(is_subset_tol(&fam, &res.set, 0.03).unwrap());
    }

    #[test]
    fn wrong_rate_is_rejected_or_fails() {
        let s = example1();
        let tri = StarSet2::from_polygon(&[[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]], 256).unwrap();
        let rep = verify_eigenset(&s, &tri, 1.5, &[0.5], &opts(&s), 0.03).unwrap();
        assert!(!rep.pass);
        assert!(matches!(construct_general(&s, 1.0, &opts(&s), &small()), Err(Error::BlowUp(_))));
    }

    #[test]
    fn verification_rejects_off_grid_times() {
        let s = example1();
        let tri = StarSet2::ball(64).unwrap();
        assert!(verify_eigenset(&s, &tri, 2.0, &[0.03], &opts(&s), 0.03).is_err());
        assert!(verify_eigenset(&s, &tri, 2.0, &[], &opts(&s), 0.03).is_err());
    }

    #[test]
    fn trivial_system_keeps_the_ball() {
        let s = sys([[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]);
        let res = construct_general(&s, 0.0, &opts(&s), &small()).unwrap();
        assert!(hausdorff(&res.set, &StarSet2::ball(256).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn scalar_system_scales_ball_exactly() {
        let s = sys([[0.4, 0.0], [0.0, 0.4]], [[0.0, 0.0], [0.0, 0.0]]);
        let ball = StarSet2::ball(256).unwrap();
        let rep = verify_eigenset(&s, &ball, 0.4, &[0.5, 1.0, 2.0], &opts(&s), 1e-6).unwrap();
        assert!(rep.pass && rep.max_distance <= 1e-6);
    }

    #[test]
    fn witness_triangle_verifies_over_long_times() {
        let s = example1();
        let tri = StarSet2::from_polygon(&[[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]], 512).unwrap();
        let times: Vec<f64> = (1..=10).map(|k| 0.2 * k as f64).collect();
        let rep = verify_eigenset(&s, &tri, 2.0, &times, &opts(&s), 0.03).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn rates_are_distinguished() {
        let s = example1();
        let tri = StarSet2::from_polygon(&[[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]], 256).unwrap();
        let a = verify_eigenset(&s, &tri, 2.0, &[0.5, 1.0], &opts(&s), 0.01).unwrap();
        let b = verify_eigenset(&s, &tri, 2.1, &[0.5, 1.0], &opts(&s), 0.01).unwrap();
        assert!(!(a.pass && b.pass));
    }

    #[test]
    fn general_phases_are_invariant_and_descending() {
        let s = example1();
        let reach = opts(&s);
        let res = construct_general(&s, 2.0, &reach, &small()).unwrap();
        let d0 = res.d0.as_ref().unwrap();
        let maps = step_maps(&s.shifted(2.0), &reach).unwrap();
        let stepped = reach_step_with(&maps, d0).unwrap();
        assert!(directed_hausdorff(&stepped, d0).unwrap() <= 2e-3);
        let again = reach_step_with(&maps, &stepped).unwrap();
        let h = std::f64::consts::TAU / 256.0;
        for k in 0..256 {
            assert!(again.radii()[k] <= stepped.radii()[k] + h * 1.5);
        }
        let contact = (0..256).any(|k| res.set.radii()[k] >= (1.0 - 1e-3) * d0.radii()[k] && d0.radii()[k] > 0.0);
        assert!(contact);
    }

    #[test]
    fn union_family_scales_members() {
        let b = StarSet2::ball(64).unwrap();
        let u = union_family(&[(0.5, b.clone()), (2.0, b.clone())]).unwrap();
        assert!(u.radii().iter().all(|r| (r - 2.0).abs() < 1e-15));
        assert!(union_family(&[]).is_err());
        let tri = StarSet2::from_polygon(&[[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]], 64).unwrap();
        assert_eq!(union_family(&[(1.0, tri.clone())]).unwrap(), tri);
        assert_eq!(union_family(&[(1.0, tri.clone()), (1.0, tri.clone())]).unwrap(), tri);
    }
}
