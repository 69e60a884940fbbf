//! Command-line front end: scenarios, pipeline stages, CSV and SVG output.

pub mod pipeline;
pub mod plot;
pub mod scenario;
pub mod simulate;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use eigenset::accessibility::check_accessibility;
use eigenset::eigenset::{construct_from_seed, construct_general, verify_eigenset};
use eigenset::spectrum::xi_estimate;
use eigenset::sphere_cs::{build_reach_graph, equilibrium_rays, invariant_control_sets, write_arcs_csv};
use eigenset::{Dynamics, StarSet2};
use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::pipeline::{iteration_options, reach_options, run_pipeline, search_options, write_artifacts, write_verification};
use crate::plot::{render_svg, PlotOptions};
use crate::scenario::{resolve, Defaults, Scenario};
use crate::simulate::{parse_control, parse_vector, random_control, simulate, write_trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Bad flags, unreadable or invalid scenario files.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| UsageError(format!("{e:#}")).into())
}

#[derive(Debug, Parser)]
#[command(name = "eigenset", version, about = "Eigensets of bilinear control systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct ScenarioArgs {
    /// Scenario file, or bundled:example1 / bundled:example2 / bundled:trivial
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub budget: Option<usize>,
}

impl ScenarioArgs {
    pub fn load(&self) -> Result<(Scenario, Defaults)> {
        let sc = usage(resolve(&self.scenario))?;
        let mut d = sc.defaults.clone();
        if let Some(v) = self.seed {
            d.seed = v;
        }
        if let Some(v) = self.grid {
            d.grid = v;
        }
        if let Some(v) = self.tau {
            d.tau = v;
        }
        if let Some(v) = self.tol {
            d.tol = v;
        }
        if let Some(v) = self.budget {
            d.budget = v;
        }
        let checked = Scenario { defaults: d.clone(), ..sc.clone() };
        usage(checked.validate())?;
        Ok((sc, d))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a trajectory; adds an error column against the closed form when one exists
    Simulate {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        /// Segments "duration:value;..." (multi-input values comma separated)
        #[arg(long, allow_hyphen_values = true, conflicts_with = "random_segments")]
        control: Option<String>,
        /// Seeded random control with this many segments spanning [0, t]
        #[arg(long)]
        random_segments: Option<usize>,
        #[arg(long)]
        cyclic: bool,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
    },
    /// Run every stage and write all artifacts
    Pipeline {
        #[command(flatten)]
        common: ScenarioArgs,
    },
    /// Lie algebra rank check on a sphere grid
    Accessibility {
        #[command(flatten)]
        common: ScenarioArgs,
    },
    /// Invariant arcs of the projected system
    Arcs {
        #[command(flatten)]
        common: ScenarioArgs,
    },
    /// Rate bracket along one ray
    Rate {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long, allow_hyphen_values = true)]
        ray: String,
    },
    /// Build an eigenset from a seed point, or from the unit ball with --general
    Construct {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long, allow_hyphen_values = true)]
        rate: f64,
        #[arg(long, allow_hyphen_values = true, required_unless_present = "general")]
        from: Option<String>,
        #[arg(long)]
        general: bool,
    },
    /// Check a radial CSV against the defining scaling property
    Verify {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long)]
        set: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        rate: f64,
        #[arg(long)]
        verify_tol: Option<f64>,
    },
    /// Render radial CSV files to SVG
    Plot {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        axes: bool,
        #[arg(long)]
        unit_circle: bool,
    },
}

fn read_radial(path: &PathBuf) -> Result<StarSet2> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    StarSet2::read_csv(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

/// Runs a parsed command; returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate { common, x0, control, random_segments, cyclic, t, dt } => {
            let (sc, d) = common.load()?;
            let sys = sc.system()?;
            let x0 = usage(parse_vector(&x0))?;
            let u = match (control, random_segments) {
                (Some(text), _) => usage(parse_control(&text, cyclic))?,
                (None, Some(n)) => random_control(&sys, n, t, &mut StdRng::seed_from_u64(d.seed))?,
                (None, None) => return Err(UsageError("give --control or --random-segments".into()).into()),
            };
            let rows = simulate(&sys, &x0, &u, t, dt)?;
            fs::create_dir_all(&common.out)?;
            let path = common.out.join("trajectory.csv");
            write_trajectory(&rows, BufWriter::new(File::create(&path)?))?;
            let last = rows.last().expect("at least one sample");
            println!("t = {} x = {:?}", last.t, last.x);
            if let Some(e) = rows.iter().filter_map(|r| r.error).reduce(f64::max) {
                println!("max closed-form error {e:.3e}");
            }
            println!("wrote {}", path.display());
            Ok(EXIT_OK)
        }
        Command::Pipeline { common } => {
            let (sc, d) = common.load()?;
            let out = run_pipeline(&sc, &d)?;
            write_artifacts(&out, &common.out)?;
            print!("{}", out.summary());
            Ok(if out.passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Accessibility { common } => {
            let (sc, _) = common.load()?;
            let rep = check_accessibility(&sc.system()?, 64, 8, 1e-9)?;
            println!(
                "{}: lie basis {}{}, rank ok at {}/{} points",
                if rep.verdict { "accessible" } else { "not accessible" },
                rep.generated_basis_size,
                if rep.saturated { " (saturated)" } else { "" },
                rep.rank_ok.iter().filter(|b| **b).count(),
                rep.checked_points.len()
            );
            Ok(EXIT_OK)
        }
        Command::Arcs { common } => {
            let (sc, d) = common.load()?;
            let sys = sc.system()?;
            let g = build_reach_graph(&sys, d.graph_bins, d.graph_tau, &sys.control_grid(d.control_samples))?;
            let arcs = invariant_control_sets(&g);
            fs::create_dir_all(&common.out)?;
            write_arcs_csv(&arcs, BufWriter::new(File::create(common.out.join("arcs.csv"))?))?;
            for a in &arcs {
                for (x, y) in &a.intervals {
                    println!("[{:.2}°, {:.2}°]", x.to_degrees(), y.to_degrees());
                }
            }
            let eq = equilibrium_rays(&g);
            if !eq.is_empty() {
                println!("{} single-bin classes (equilibrium rays)", eq.len());
            }
            Ok(EXIT_OK)
        }
        Command::Rate { common, ray } => {
            let (sc, d) = common.load()?;
            let x = usage(parse_vector(&ray))?;
            let b = xi_estimate(&sc.system()?, &x, &search_options(&d))?;
            println!("[{:.12}, {:.12}]", b.lower, b.upper);
            if let Some(w) = &b.witness {
                println!(
                    "witness: period {:.6}, {} segments, residual {:.2e}, rate error {:.2e}",
                    w.period,
                    w.control.len(),
                    w.angular_residual,
                    w.rate_error
                );
            }
            Ok(EXIT_OK)
        }
        Command::Construct { common, rate, from, general } => {
            let (sc, d) = common.load()?;
            let sys = sc.system()?;
            let reach = reach_options(&sys, &d)?;
            let iter = iteration_options(&d);
            let res = if general {
                construct_general(&sys, rate, &reach, &iter)?
            } else {
                let seed = usage(parse_vector(from.as_deref().expect("required by clap")))?;
                construct_from_seed(&sys, rate, &seed, &reach, &iter)?
            };
            fs::create_dir_all(&common.out)?;
            let path = common.out.join("eigenset.csv");
            res.set.write_csv(BufWriter::new(File::create(&path)?))?;
            println!(
                "{} iterations, {}, increment {:.2e}; wrote {}",
                res.iterations,
                if res.converged { "converged" } else { "not converged" },
                res.final_increment,
                path.display()
            );
            Ok(if res.converged { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Verify { common, set, rate, verify_tol } => {
            let (sc, d) = common.load()?;
            let sys = sc.system()?;
            let s = usage(read_radial(&set))?;
            let tol = verify_tol.unwrap_or(d.verify_tol);
            let rep = verify_eigenset(&sys, &s, rate, &d.verify_times, &reach_options(&sys, &d)?, tol)?;
            fs::create_dir_all(&common.out)?;
            write_verification(&rep, &common.out.join("verification.csv"))?;
            for c in &rep.checks {
                println!("t = {}: {:.4e}", c.t, c.distance);
            }
            println!("{} (max {:.4e}, tol {tol})", if rep.pass { "pass" } else { "fail" }, rep.max_distance);
            Ok(if rep.pass { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Plot { inputs, out, axes, unit_circle } => {
            let mut sets = Vec::new();
            for p in &inputs {
                let label = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
                sets.push((label, usage(read_radial(p))?));
            }
            let svg = render_svg(&sets, &PlotOptions { axes, unit_circle })?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(&out, svg)?;
            println!("wrote {}", out.display());
            Ok(EXIT_OK)
        }
    }
}

/// Exit code for an error escaping [`run`].
pub fn error_code(e: &anyhow::Error) -> i32 {
    if e.downcast_ref::<UsageError>().is_some() {
        EXIT_USAGE
    } else {
        EXIT_CHECK_FAILED
    }
}
