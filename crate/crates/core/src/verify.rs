//! Numerical checks of the forbidden-zone estimates, the trace and integral bounds
//! for walls, and extraction of the constants those bounds leave unspecified.

use serde::Serialize;
use serde_json::Value;

use crate::dispersion::{scan_minus_interval, EnergyWindow, FiberProblem};
use crate::error::{invalid, Error, Result};
use crate::fiber::{self, Grid, SolverConfig};
use crate::oracle::landau_psi;
use crate::potentials::ConfiningPotential;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    /// The hypothesis of the estimate does not hold at these parameters.
    Precondition,
    Fail,
}

/// One machine-readable outcome.
#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub lemma: String,
    pub parameters: Value,
    pub margin: f64,
    pub status: Status,
}

impl Verdict {
    pub fn new(lemma: impl Into<String>, parameters: Value, margin: f64, status: Status) -> Self {
        Self {
            lemma: lemma.into(),
            parameters,
            margin,
            status,
        }
    }

    /// Pass when `margin >= 0`.
    pub fn from_margin(lemma: impl Into<String>, parameters: Value, margin: f64) -> Self {
        let status = if margin >= 0.0 { Status::Pass } else { Status::Fail };
        Self::new(lemma, parameters, margin, status)
    }

    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("verdicts serialize")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ConstantName {
    #[serde(rename = "C_n_hat")]
    CurrentConstant,
    #[serde(rename = "gamma_nj_hat")]
    TraceConstant,
    #[serde(rename = "slope")]
    Slope,
}

/// A constant read off numerical data, with the B values it came from.
#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalConstant {
    pub name: ConstantName,
    pub value: f64,
    pub fit_range: Vec<f64>,
    pub residual: f64,
}

/// Minimum number of field strengths behind any extracted constant.
pub const MIN_FIT_POINTS: usize = 4;

/// Least-squares line through (ln x, ln y): (slope, intercept, rms residual).
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("log-log fit needs at least two paired samples"));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(invalid("log-log fit needs positive data"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(invalid("log-log fit needs distinct abscissae"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok((slope, intercept, rms))
}

fn slope_constant(fields: &[f64], values: &[f64]) -> Result<EmpiricalConstant> {
    if fields.len() < MIN_FIT_POINTS {
        return Err(invalid(format!(
            "a fitted constant needs at least {MIN_FIT_POINTS} field strengths, got {}",
            fields.len()
        )));
    }
    let (slope, _, residual) = fit_loglog(fields, values)?;
    Ok(EmpiricalConstant {
        name: ConstantName::Slope,
        value: slope,
        fit_range: fields.to_vec(),
        residual,
    })
}

/// W(x; k) = (k − Bx)² + V₀(x) − ω on every node.
pub fn effective_potential(grid: &Grid, k: f64, omega: f64, field: f64, pot: &ConfiningPotential) -> Vec<f64> {
    grid.sample(|x| (k - field * x).powi(2) + pot.evaluate(x) - omega)
}

/// Relative size below which eigenvector samples are treated as numerical zero.
pub const TAIL_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub nodes: usize,
    /// min over node pairs s < t of ln φ(s) − ln φ(t) − ∫_s^t √W.
    pub min_slack: f64,
    pub status: Status,
}

/// Checks φ(t) ≤ φ(s)·exp(−∫_s^t √W) for every pair of nodes s < t with s ≥ `s_min`.
///
/// φ is oriented positive at the first tested node. The test stops at the first node
/// where |φ| drops below `TAIL_FLOOR`·max|φ|: further out the computed vector carries
/// rounding noise rather than decay.
pub fn forbidden_decay_check(grid: &Grid, phi: &[f64], w: &[f64], s_min: f64) -> Result<DecayReport> {
    grid.check(phi)?;
    grid.check(w)?;
    let start = (0..grid.n_points).find(|&i| grid.x(i) >= s_min).ok_or(Error::OutsideGrid {
        x: s_min,
        x_min: grid.x_min,
        x_max: grid.x_max,
    })?;
    let sign = if phi[start] < 0.0 { -1.0 } else { 1.0 };
    let peak = phi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let end = (start..grid.n_points)
        .find(|&i| phi[i].abs() < TAIL_FLOOR * peak)
        .unwrap_or(grid.n_points);
    if w[start..end].iter().any(|&v| !(v > 0.0)) {
        return Ok(DecayReport {
            nodes: end - start,
            min_slack: f64::NAN,
            status: Status::Precondition,
        });
    }
    let h = grid.spacing;
    let mut integral = 0.0;
    let mut best = f64::INFINITY;
    let mut min_slack = f64::INFINITY;
    for i in start..end {
        if i > start {
            integral += 0.5 * h * (w[i - 1].sqrt() + w[i].sqrt());
        }
        let v = sign * phi[i];
        if v < 0.0 {
            return Ok(DecayReport {
                nodes: i - start + 1,
                min_slack: f64::NEG_INFINITY,
                status: Status::Fail,
            });
        }
        let g = v.ln() + integral;
        if i > start {
            min_slack = min_slack.min(best - g);
        }
        best = best.min(g);
    }
    if !min_slack.is_finite() {
        min_slack = 0.0;
    }
    Ok(DecayReport {
        nodes: end - start,
        min_slack,
        status: if min_slack >= 0.0 { Status::Pass } else { Status::Fail },
    })
}

/// ln φ(s) − ln φ(t) − ∫_s^t √W for one pair of nodes (zero when s = t).
pub fn decay_slack(grid: &Grid, phi: &[f64], w: &[f64], s: usize, t: usize) -> Result<f64> {
    grid.check(phi)?;
    grid.check(w)?;
    if s > t || t >= grid.n_points {
        return Err(invalid(format!("node pair ({s}, {t}) is not ordered inside the grid")));
    }
    let integral: f64 = (s..t).map(|i| 0.5 * grid.spacing * (w[i].max(0.0).sqrt() + w[i + 1].max(0.0).sqrt())).sum();
    Ok(phi[s].abs().ln() - phi[t].abs().ln() - integral)
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceReport {
    pub value: f64,
    pub bound: f64,
    pub status: Status,
}

/// φ(0)² against (BL/2)·exp(−BL²/24). The hypothesis is W ≥ (BL/8)² for x ≥ −L/6.
pub fn trace_bound_check(grid: &Grid, phi: &[f64], w: &[f64], field: f64, width: f64) -> Result<TraceReport> {
    grid.check(w)?;
    let value = fiber::trace_value(grid, phi, 0.0)?.powi(2);
    let bound = 0.5 * field * width * (-field * width * width / 24.0).exp();
    let floor = (field * width / 8.0).powi(2);
    let hypothesis = (0..grid.n_points)
        .filter(|&i| grid.x(i) >= -width / 6.0)
        .all(|i| w[i] >= floor);
    let status = if !hypothesis {
        Status::Precondition
    } else if value <= bound {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(TraceReport { value, bound, status })
}

/// Sharp-wall trace samples at one field strength over a set of wave numbers.
#[derive(Clone, Debug, Serialize)]
pub struct SedPoint {
    pub field: f64,
    /// max_k 𝒱₀·φ_j(L/2)²/B
    pub right: f64,
    /// min_k 𝒱₀·φ_j(−L/2)²/B
    pub left: f64,
}

pub fn sed_point(problem: &FiberProblem, band: usize, ks: &[f64]) -> Result<SedPoint> {
    let (height, width) = match problem.potential {
        ConfiningPotential::Sharp { height, width } => (height, width),
        ConfiningPotential::Free => {
            return Ok(SedPoint {
                field: problem.field,
                right: 0.0,
                left: 0.0,
            })
        }
        _ => return Err(Error::WrongPotential { expected: "sharp" }),
    };
    if ks.is_empty() {
        return Err(invalid("no wave numbers to sample"));
    }
    let b = problem.field;
    let (mut right, mut left) = (0.0f64, f64::INFINITY);
    for &k in ks {
        let sol = problem.solve(k, band + 1)?;
        let phi = &sol.pairs[band].phi;
        right = right.max(height * fiber::trace_value(&sol.grid, phi, width / 2.0)?.powi(2) / b);
        left = left.min(height * fiber::trace_value(&sol.grid, phi, -width / 2.0)?.powi(2) / b);
    }
    Ok(SedPoint { field: b, right, left })
}

#[derive(Clone, Debug, Serialize)]
pub struct SedReport {
    pub points: Vec<SedPoint>,
    pub constant: EmpiricalConstant,
    pub non_increasing: bool,
    /// Growth exponent of the left trace; about 1/2 for the sharp wall.
    pub left_slope: Option<EmpiricalConstant>,
}

/// γ̂(n, j) = max over the sampled fields of the right-trace ratio, which must not grow with B.
pub fn sed_constant_extract(points: &[SedPoint]) -> Result<SedReport> {
    if points.len() < MIN_FIT_POINTS {
        return Err(invalid(format!("need at least {MIN_FIT_POINTS} field strengths")));
    }
    let fields: Vec<f64> = points.iter().map(|p| p.field).collect();
    let right: Vec<f64> = points.iter().map(|p| p.right).collect();
    let value = right.iter().fold(0.0f64, |a, &v| a.max(v));
    let non_increasing = right.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-6));
    let residual = right.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
    let left: Vec<f64> = points.iter().map(|p| p.left).collect();
    let left_slope = if left.iter().all(|&v| v > 0.0) {
        Some(slope_constant(&fields, &left)?)
    } else {
        None
    };
    Ok(SedReport {
        points: points.to_vec(),
        constant: EmpiricalConstant {
            name: ConstantName::TraceConstant,
            value,
            fit_range: fields,
            residual,
        },
        non_increasing,
        left_slope,
    })
}

/// Trapezoid rule with repeated halving until two levels agree to `rel_tol`.
pub fn adaptive_trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    let mut n = 1usize;
    let mut h = b - a;
    let mut t = 0.5 * h * (f(a) + f(b));
    for level in 1..=24 {
        let mid: f64 = (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum();
        let next = 0.5 * t + 0.5 * h * mid;
        n *= 2;
        h *= 0.5;
        let done = level >= 5 && (next - t).abs() <= rel_tol * next.abs();
        t = next;
        if done {
            break;
        }
    }
    t
}

/// ∫_{−∞}^{−L/2} (−x − L/2)^{p+1} ψ_m(x; k)² dx.
pub fn ipm_integral(m: usize, exponent: f64, k: f64, field: f64, width: f64) -> f64 {
    let edge = -width / 2.0;
    let reach = (14.0 + 2.0 * (2 * m + 1) as f64) / field.sqrt();
    let lo = (k / field).min(edge) - reach;
    adaptive_trapezoid(
        |x| (edge - x).max(0.0).powf(exponent + 1.0) * landau_psi(m, x, k, field).powi(2),
        lo,
        edge,
        1e-11,
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct IpmPoint {
    pub field: f64,
    pub height: f64,
    pub k: f64,
    pub integral: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IpmReport {
    pub m: usize,
    pub exponent: f64,
    pub points: Vec<IpmPoint>,
    pub slope: EmpiricalConstant,
    pub threshold: f64,
    pub status: Status,
}

/// Power wall of height (2n+c)·B^{(p+2)/2}; k at the left end of ω₀^{-1}(Δ_n)_-.
#[allow(clippy::too_many_arguments)]
pub fn ipm_scaling_check(
    m: usize,
    exponent: f64,
    fields: &[f64],
    level: usize,
    lower: f64,
    upper: f64,
    width: f64,
    solver: &SolverConfig,
) -> Result<IpmReport> {
    let mut points = Vec::with_capacity(fields.len());
    for &b in fields {
        let height = (2 * level) as f64 + upper;
        let height = height * b.powf(0.5 * (exponent + 2.0));
        let pot = ConfiningPotential::Power {
            height,
            width,
            exponent,
        };
        let problem = FiberProblem::new(b, pot, *solver)?;
        let window = EnergyWindow::new(level, lower, upper, b)?;
        let (k, _) = scan_minus_interval(&problem, 0, &window)?.minus.ok_or(Error::EmptyPacket)?;
        points.push(IpmPoint {
            field: b,
            height,
            k,
            integral: ipm_integral(m, exponent, k, b, width),
        });
    }
    let fs: Vec<f64> = points.iter().map(|p| p.field).collect();
    let vs: Vec<f64> = points.iter().map(|p| p.integral).collect();
    let slope = slope_constant(&fs, &vs)?;
    let threshold = -0.5 * (exponent + 1.0) + 0.1;
    let status = if slope.value <= threshold { Status::Pass } else { Status::Fail };
    Ok(IpmReport {
        m,
        exponent,
        points,
        slope,
        threshold,
        status,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LmteReport {
    pub k: f64,
    pub value: f64,
    pub bound: f64,
    pub status: Status,
}

/// ∫_{x ≥ 0} V₀ φ ψ_m dx on the grid of φ, with φ and ψ_m oriented positive on x ≥ 0.
pub fn lmte_integral(grid: &Grid, phi: &[f64], pot: &ConfiningPotential, m: usize, k: f64, field: f64) -> Result<f64> {
    grid.check(phi)?;
    let start = (0..grid.n_points).find(|&i| grid.x(i) >= 0.0);
    let Some(start) = start else { return Ok(0.0) };
    let sphi = if fiber::trace_value(grid, phi, 0.0)? < 0.0 { -1.0 } else { 1.0 };
    let spsi = if landau_psi(m, 0.0, k, field) < 0.0 { -1.0 } else { 1.0 };
    let f: Vec<f64> = (start..grid.n_points)
        .map(|i| {
            let x = grid.x(i);
            pot.evaluate(x) * sphi * phi[i] * spsi * landau_psi(m, x, k, field)
        })
        .collect();
    let mut s = 0.0;
    for w in f.windows(2) {
        s += 0.5 * grid.spacing * (w[0] + w[1]);
    }
    // piece between 0 and the first node at or right of it
    let x0 = grid.x(start);
    if x0 > 0.0 && start > 0 {
        s += 0.5 * x0 * (f[0] + pot.evaluate(0.0) * sphi * fiber::trace_value(grid, phi, 0.0)? * spsi * landau_psi(m, 0.0, k, field));
    }
    Ok(s)
}

/// The integral at the midpoint of ω_j^{-1}(Δ_n)_- against (L/2)·√((2n+c)B).
pub fn lmte_check(j: usize, m: usize, problem: &FiberProblem, window: &EnergyWindow) -> Result<LmteReport> {
    let width = match problem.potential {
        ConfiningPotential::Power { width, .. } => width,
        _ => return Err(Error::WrongPotential { expected: "power" }),
    };
    let b = problem.field;
    let (_, hi) = window.bounds();
    let bound = 0.5 * width * hi.sqrt();
    let (lo_k, hi_k) = scan_minus_interval(problem, j, window)?.minus.ok_or(Error::EmptyPacket)?;
    let k = 0.5 * (lo_k + hi_k);
    let sol = problem.solve(k, j + 1)?;
    let pair = &sol.pairs[j];
    let w = effective_potential(&sol.grid, k, pair.omega, b, &problem.potential);
    let forbidden = (0..sol.grid.n_points).filter(|&i| sol.grid.x(i) >= 0.0).all(|i| w[i] > 0.0);
    let oscillator_forbidden = k / b + ((2 * m + 1) as f64 / b).sqrt() < 0.0;
    let value = lmte_integral(&sol.grid, &pair.phi, &problem.potential, m, k, b)?;
    let status = if !(forbidden && oscillator_forbidden) {
        Status::Precondition
    } else if (-1e-12 * bound..=bound).contains(&value) {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(LmteReport { k, value, bound, status })
}

#[derive(Clone, Debug, Serialize)]
pub struct CnReport {
    pub constant: EmpiricalConstant,
    /// min over k at each field strength
    pub per_field: Vec<f64>,
    /// coefficient of variation of `per_field`
    pub variation: f64,
    pub stable: bool,
}

/// Ĉ_n = min over B and k of −ω′(k) / ((a−1)²(3−c)²·√B), from slopes sampled on the
/// minus intervals. A non-negative slope there is reported as an error.
pub fn cn_extract(samples: &[(f64, Vec<f64>)], lower: f64, upper: f64) -> Result<CnReport> {
    if samples.len() < MIN_FIT_POINTS {
        return Err(invalid(format!("need at least {MIN_FIT_POINTS} field strengths")));
    }
    let shape = (lower - 1.0).powi(2) * (3.0 - upper).powi(2);
    let mut per_field = Vec::with_capacity(samples.len());
    for (b, slopes) in samples {
        if slopes.is_empty() {
            return Err(invalid(format!("no slopes sampled at B = {b}")));
        }
        if let Some(s) = slopes.iter().find(|&&s| !(s < 0.0)) {
            return Err(Error::LemmaViolated(format!(
                "band slope {s} >= 0 on the minus interval at B = {b}"
            )));
        }
        let min = slopes.iter().map(|s| -s / (shape * b.sqrt())).fold(f64::INFINITY, f64::min);
        per_field.push(min);
    }
    let n = per_field.len() as f64;
    let mean = per_field.iter().sum::<f64>() / n;
    let sd = (per_field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let variation = sd / mean;
    let value = per_field.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(CnReport {
        constant: EmpiricalConstant {
            name: ConstantName::CurrentConstant,
            value,
            fit_range: samples.iter().map(|s| s.0).collect(),
            residual: variation,
        },
        per_field,
        variation,
        stable: value > 0.0 && variation < 0.3,
    })
}
