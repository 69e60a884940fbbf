//! accessibility → invariant arcs → rate → construction → verification.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use eigenset::accessibility::{check_accessibility, AccessibilityReport};
use eigenset::eigenset::{
    construct_from_witness, construct_general, verify_eigenset, Construction, EigensetResult, IterationOptions,
    VerificationReport,
};
use eigenset::sphere_cs::{build_reach_graph, equilibrium_rays, invariant_control_sets, write_arcs_csv, ControlSetArc};
use eigenset::spectrum::{arc_rays, compute_rate_from_rays, RateEstimate, SearchOptions};
use eigenset::{BilinearSystem, Dynamics, ReachOptions};

use crate::plot::{render_svg, PlotOptions};
use crate::scenario::{Defaults, Scenario};

/// Allowed distance of a reported arc end from its expected angle, in bins.
pub const ARC_TOL_BINS: f64 = 2.0;
/// Witness rates below the bracket's top by more than this are not used to
/// construct from.
pub const WITNESS_GAP: f64 = 1e-3;
const RATE_CONSISTENCY_TOL: f64 = 5e-2;

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub name: String,
    pub accessibility: AccessibilityReport,
    pub arcs: Vec<ControlSetArc>,
    pub equilibria: Vec<f64>,
    pub bin_width: f64,
    pub rate: RateEstimate,
    /// Rate used for construction and verification.
    pub r: f64,
    pub eigenset: EigensetResult,
    pub verification: VerificationReport,
    pub failures: Vec<String>,
}

impl PipelineOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario: {}", self.name);
        let acc = &self.accessibility;
        let _ = writeln!(
            s,
            "accessibility: {} (lie basis {}, rank ok at {}/{} points)",
            if acc.verdict { "accessible" } else { "not accessible" },
            acc.generated_basis_size,
            acc.rank_ok.iter().filter(|b| **b).count(),
            acc.checked_points.len()
        );
        if self.arcs.is_empty() {
            let _ = writeln!(s, "invariant arcs: none ({} equilibrium rays)", self.equilibria.len());
        } else {
            let parts: Vec<String> = self
                .arcs
                .iter()
                .map(|a| {
                    if a.full_circle {
                        "full circle".to_string()
                    } else {
                        let (x, y) = a.widest_interval();
                        format!("[{:.1}°, {:.1}°]", x.to_degrees(), y.to_degrees())
                    }
                })
                .collect();
            let _ = writeln!(s, "invariant arcs: {}", parts.join(", "));
        }
        let b = &self.rate.bracket;
        let _ = writeln!(
            s,
            "rate: [{:.9}, {:.9}] width {:.2e}{}",
            b.lower,
            b.upper,
            b.width(),
            if self.rate.consistent { "" } else { " (per-ray bounds disagree)" }
        );
        let e = &self.eigenset;
        let _ = writeln!(
            s,
            "construction: {} at R = {:.9}, {} iterations, {}, increment {:.2e}, max radius {:.4}",
            match e.construction {
                Construction::Witness => "witness",
                Construction::General => "general",
            },
            self.r,
            e.iterations,
            if e.converged { "converged" } else { "not converged" },
            e.final_increment,
            e.set.max_radius()
        );
        let v = &self.verification;
        let _ = writeln!(
            s,
            "verification: max distance {:.4e} vs tol {} ({})",
            v.max_distance,
            v.tol,
            if v.pass { "pass" } else { "fail" }
        );
        for f in &self.failures {
            let _ = writeln!(s, "check failed: {f}");
        }
        let _ = writeln!(s, "status: {}", if self.passed() { "pass" } else { "fail" });
        s
    }
}

pub fn search_options(d: &Defaults) -> SearchOptions {
    SearchOptions { horizon: d.horizon, budget: d.budget, seed: d.seed, ..SearchOptions::default() }
}

pub fn reach_options(sys: &BilinearSystem, d: &Defaults) -> Result<ReachOptions> {
    Ok(ReachOptions::uniform(sys, d.tau, d.control_samples)?)
}

pub fn iteration_options(d: &Defaults) -> IterationOptions {
    IterationOptions { tol: d.tol, max_iter: d.max_iter, n_angles: d.grid }
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

pub fn run_pipeline(sc: &Scenario, d: &Defaults) -> Result<PipelineOutcome> {
    let sys = sc.system()?;
    let mut failures = Vec::new();

    let accessibility = check_accessibility(&sys, 64, 8, 1e-9)?;

    let samples = sys.control_grid(d.control_samples);
    let graph = build_reach_graph(&sys, d.graph_bins, d.graph_tau, &samples)?;
    let arcs = invariant_control_sets(&graph);
    let equilibria = equilibrium_rays(&graph);
    let h = graph.bin_width();

    let rays = match arcs.first() {
        Some(arc) => arc_rays(arc, 4)?,
        None => {
            let th = *equilibria.first().context("reach graph has no closed class")?;
            vec![vec![th.cos(), th.sin()]]
        }
    };
    let rate = compute_rate_from_rays(&sys, &rays, &search_options(d), RATE_CONSISTENCY_TOL)?;
    let bracket = &rate.bracket;
    if bracket.witness.is_none() {
        failures.push("no ray-return witness found; rate has no lower bound".into());
    }
    let r = if bracket.lower.is_finite() { bracket.lower } else { bracket.upper };

    let reach = reach_options(&sys, d)?;
    let iter = iteration_options(d);
    let eigenset = match (&bracket.witness, arcs.is_empty()) {
        (Some(w), false) if bracket.upper - w.rate <= WITNESS_GAP => construct_from_witness(&sys, r, w, &reach, &iter)?,
        _ => construct_general(&sys, r, &reach, &iter)?,
    };
    if !eigenset.converged {
        failures.push(format!("construction did not converge (increment {:.3e})", eigenset.final_increment));
    }
    let verification = verify_eigenset(&sys, &eigenset.set, r, &d.verify_times, &reach, d.verify_tol)?;
    if !verification.pass {
        failures.push(format!(
            "verification distance {:.4e} exceeds {}",
            verification.max_distance, verification.tol
        ));
    }

    if let Some(exp) = &sc.expected {
        if let Some(want) = exp.rate {
            if !bracket.contains(want, WITNESS_GAP) {
                failures.push(format!("expected rate {want} outside [{}, {}]", bracket.lower, bracket.upper));
            }
        }
        if let Some(want) = &exp.arcs_deg {
            let got: Vec<(f64, f64)> = arcs.iter().map(|a| a.widest_interval()).collect();
            let matches = want.len() == got.len()
                && want.iter().zip(&got).all(|(w, g)| {
                    angle_gap(w[0].to_radians(), g.0) <= ARC_TOL_BINS * h && angle_gap(w[1].to_radians(), g.1) <= ARC_TOL_BINS * h
                });
            if !matches {
                failures.push(format!("invariant arcs differ from expected {want:?}"));
            }
        }
        if let Some(full) = exp.full_circle {
            let got = arcs.len() == 1 && arcs[0].full_circle;
            if got != full {
                failures.push(format!("expected full circle = {full}"));
            }
        }
    }

    Ok(PipelineOutcome {
        name: sc.name.clone(),
        accessibility,
        arcs,
        equilibria,
        bin_width: h,
        rate,
        r,
        eigenset,
        verification,
        failures,
    })
}

/// Writes arcs.csv, rate.csv, eigenset.csv, verification.csv, eigenset.svg
/// and summary.txt into `dir`.
pub fn write_artifacts(out: &PipelineOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_arcs_csv(&out.arcs, BufWriter::new(File::create(dir.join("arcs.csv"))?))?;

    let mut w = csv::Writer::from_path(dir.join("rate.csv"))?;
    w.write_record(["ray_x", "ray_y", "lower", "upper"])?;
    for (ray, b) in &out.rate.per_ray {
        w.write_record([
            format!("{:.17e}", ray[0]),
            format!("{:.17e}", ray[1]),
            format!("{:.17e}", b.lower),
            format!("{:.17e}", b.upper),
        ])?;
    }
    w.flush()?;

    out.eigenset.set.write_csv(BufWriter::new(File::create(dir.join("eigenset.csv"))?))?;
    write_verification(&out.verification, &dir.join("verification.csv"))?;
    let svg = render_svg(&[(out.name.clone(), out.eigenset.set.clone())], &PlotOptions { axes: true, unit_circle: false })?;
    fs::write(dir.join("eigenset.svg"), svg)?;
    fs::write(dir.join("summary.txt"), out.summary())?;
    Ok(())
}

pub fn write_verification(v: &VerificationReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "hausdorff", "excess", "deficit"])?;
    for c in &v.checks {
        w.write_record([
            format!("{}", c.t),
            format!("{:.6e}", c.distance),
            format!("{:.6e}", c.excess),
            format!("{:.6e}", c.deficit),
        ])?;
    }
    w.flush()?;
    Ok(())
}
