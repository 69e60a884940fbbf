//! Trajectory sampling and the closed form for commuting planar systems.

use std::io::Write;

use anyhow::{bail, Context, Result};
use eigenset::bilinear::flow;
use eigenset::{BilinearSystem, Dynamics, PwcControl, SquareMatrix};
use rand::Rng;

pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad number '{s}' in '{text}'")))
        .collect()
}

/// `"d1:u1;d2:u2"`, multi-input values comma separated: `"0.5:1,-1;0.2:0,0"`.
pub fn parse_control(text: &str, cyclic: bool) -> Result<PwcControl> {
    let mut durations = Vec::new();
    let mut values = Vec::new();
    for seg in text.split(';').filter(|s| !s.trim().is_empty()) {
        let (d, v) = seg.split_once(':').with_context(|| format!("segment '{seg}' lacks ':'"))?;
        durations.push(d.trim().parse::<f64>().with_context(|| format!("bad duration '{d}'"))?);
        values.push(parse_vector(v)?);
    }
    if durations.is_empty() {
        bail!("control '{text}' has no segments");
    }
    Ok(PwcControl::new(durations, values, cyclic)?)
}

/// Non-cyclic control with `n` segments whose total duration is `t`.
pub fn random_control<R: Rng>(sys: &BilinearSystem, n: usize, t: f64, rng: &mut R) -> Result<PwcControl> {
    if n == 0 || !(t > 0.0) {
        bail!("random control needs n > 0 and t > 0");
    }
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let durations = weights.iter().map(|w| w / total * t).collect();
    let (lo, hi) = sys.control_box();
    let values = (0..n)
        .map(|_| lo.iter().zip(hi).map(|(l, h)| if l == h { *l } else { rng.gen_range(*l..=*h) }).collect())
        .collect();
    Ok(PwcControl::new(durations, values, false)?)
}

/// Coefficients `(a, b)` when `m = aI + bJ`, `J` the quarter turn.
fn rotation_coefficients(m: &SquareMatrix) -> Option<(f64, f64)> {
    if m.dim() != 2 {
        return None;
    }
    let (p, q, r, s) = (m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1));
    let scale = m.max_abs().max(1.0);
    ((p - s).abs() <= 1e-14 * scale && (q + r).abs() <= 1e-14 * scale).then_some((p, r))
}

/// Flow of a planar system whose matrices all commute as `aI + bJ`:
/// `e^{α}Rot(β)` with `α, β` linear in `t` and the control integral.
#[derive(Debug, Clone)]
pub struct ClosedForm {
    drift: (f64, f64),
    inputs: Vec<(f64, f64)>,
}

impl ClosedForm {
    pub fn detect(sys: &BilinearSystem) -> Option<Self> {
        let drift = rotation_coefficients(sys.a())?;
        let inputs = sys.bs().iter().map(rotation_coefficients).collect::<Option<Vec<_>>>()?;
        Some(Self { drift, inputs })
    }

    pub fn flow(&self, t: f64, x: &[f64], u: &PwcControl) -> Result<Vec<f64>> {
        let integral = if t == 0.0 { vec![0.0; self.inputs.len()] } else { u.integral(t)? };
        let mut alpha = self.drift.0 * t;
        let mut beta = self.drift.1 * t;
        for ((a, b), i) in self.inputs.iter().zip(&integral) {
            alpha += a * i;
            beta += b * i;
        }
        let (s, c) = beta.sin_cos();
        let g = alpha.exp();
        Ok(vec![g * (c * x[0] - s * x[1]), g * (s * x[0] + c * x[1])])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub error: Option<f64>,
}

/// Samples at `0, dt, 2dt, ...` and at `t` itself.
pub fn simulate(sys: &BilinearSystem, x0: &[f64], u: &PwcControl, t: f64, dt: f64) -> Result<Vec<Sample>> {
    if x0.len() != sys.dim() {
        bail!("initial state has {} entries, system dimension is {}", x0.len(), sys.dim());
    }
    if !(t >= 0.0) || !(dt > 0.0) {
        bail!("need t >= 0 and dt > 0");
    }
    let closed = ClosedForm::detect(sys);
    let mut times = Vec::new();
    let mut k = 0usize;
    while (k as f64) * dt < t - 1e-12 * t.max(1.0) {
        times.push(k as f64 * dt);
        k += 1;
    }
    times.push(t);
    times
        .into_iter()
        .map(|s| {
            let x = flow(sys, s, x0, u)?;
            let error = match &closed {
                Some(cf) => {
                    let y = cf.flow(s, x0, u)?;
                    Some(x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                }
                None => None,
            };
            Ok(Sample { t: s, x, error })
        })
        .collect()
}

pub fn write_trajectory<W: Write>(samples: &[Sample], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let dim = samples.first().map_or(0, |s| s.x.len());
    let with_error = samples.first().is_some_and(|s| s.error.is_some());
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|i| format!("x{i}")));
    if with_error {
        header.push("error".into());
    }
    out.write_record(&header)?;
    for s in samples {
        let mut row = vec![format!("{:.17e}", s.t)];
        row.extend(s.x.iter().map(|v| format!("{v:.17e}")));
        if let Some(e) = s.error {
            row.push(format!("{e:.6e}"));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::resolve;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn example1_diagonal_trajectory() {
        let sys = resolve("bundled:example1").unwrap().system().unwrap();
        let u = parse_control("1:1", true).unwrap();
        let rows = simulate(&sys, &[1.0, 1.0], &u, 1.0, 0.25).unwrap();
        assert_eq!(rows.len(), 5);
        let last = rows.last().unwrap();
        let e2 = 1f64.exp().powi(2);
        assert!((last.x[0] - e2).abs() < 1e-12 * e2 && (last.x[1] - e2).abs() < 1e-12 * e2);
        assert!(last.error.is_none());
        let rows = simulate(&sys, &[1.0, 1.0], &u, 0.0, 0.25).unwrap();
        assert_eq!(rows, vec![Sample { t: 0.0, x: vec![1.0, 1.0], error: None }]);
    }

    #[test]
    fn example2_matches_closed_form() {
        let sys = resolve("bundled:example2").unwrap().system().unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let u = random_control(&sys, 6, 5.0, &mut rng).unwrap();
        let rows = simulate(&sys, &[0.3, -0.7], &u, 5.0, 0.1).unwrap();
        assert!(rows.iter().all(|r| r.error.unwrap() <= 1e-8));
    }

    #[test]
    fn control_parsing() {
        let u = parse_control("0.5:1; 0.25:-1", false).unwrap();
        assert_eq!(u.durations(), &[0.5, 0.25]);
        assert_eq!(u.values(), &[vec![1.0], vec![-1.0]]);
        assert!(parse_control("", false).is_err());
        assert!(parse_control("0.5", false).is_err());
        assert!(parse_control("-1:0", false).is_err());
    }

    #[test]
    fn csv_layout() {
        let rows = vec![Sample { t: 0.0, x: vec![1.0, 2.0], error: Some(0.0) }];
        let mut buf = Vec::new();
        write_trajectory(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x1,x2,error\n"));
    }
}
