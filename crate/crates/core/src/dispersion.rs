//! Dispersion curves ω_j(k), their slopes by several routes, and inverse images of
//! energy windows.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fiber::{self, FiberSolution, Grid, SolverConfig};
use crate::potentials::ConfiningPotential;

/// A wall, a field strength and the solver settings used for every fiber.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberProblem {
    pub field: f64,
    pub potential: ConfiningPotential,
    pub solver: SolverConfig,
}

impl FiberProblem {
    pub fn new(field: f64, potential: ConfiningPotential, solver: SolverConfig) -> Result<Self> {
        if !(field > 0.0 && field.is_finite()) {
            return Err(invalid(format!("field strength {field} must be positive")));
        }
        potential.validate()?;
        solver.validate()?;
        Ok(Self {
            field,
            potential,
            solver,
        })
    }

    /// B for walls, B_g for the parabolic channel.
    pub fn reference_field(&self) -> f64 {
        self.potential.effective_field(self.field)
    }

    /// Lowest `count` eigenpairs of h₀(k).
    pub fn solve(&self, k: f64, count: usize) -> Result<FiberSolution> {
        fiber::solve_fiber(self.field, k, &self.potential, count, &self.solver).map_err(|e| match e {
            Error::NonConvergence { band } => Error::Fiber {
                band,
                k,
                source: Box::new(e),
            },
            other => Error::Fiber {
                band: count.saturating_sub(1),
                k,
                source: Box::new(other),
            },
        })
    }
}

/// Δ_n = [(2n + a)·ref, (2n + c)·ref] with 1 < a < c < 3.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyWindow {
    pub level: usize,
    pub lower: f64,
    pub upper: f64,
    pub reference: f64,
}

impl EnergyWindow {
    pub fn new(level: usize, lower: f64, upper: f64, reference: f64) -> Result<Self> {
        if !(1.0 < lower && lower < upper && upper < 3.0) {
            return Err(invalid(format!("window needs 1 < a < c < 3, got a={lower}, c={upper}")));
        }
        if !(reference > 0.0 && reference.is_finite()) {
            return Err(invalid(format!("window reference field {reference} must be positive")));
        }
        Ok(Self {
            level,
            lower,
            upper,
            reference,
        })
    }

    pub fn for_problem(problem: &FiberProblem, level: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(level, lower, upper, problem.reference_field())
    }

    /// Energies bounding the window.
    pub fn bounds(&self) -> (f64, f64) {
        let base = 2.0 * self.level as f64;
        ((base + self.lower) * self.reference, (base + self.upper) * self.reference)
    }

    pub fn width(&self) -> f64 {
        (self.upper - self.lower) * self.reference
    }

    pub fn contains(&self, energy: f64) -> bool {
        let (lo, hi) = self.bounds();
        (lo..=hi).contains(&energy)
    }
}

/// An eigenfunction kept together with its grid.
#[derive(Clone, Debug)]
pub struct SampledState {
    pub grid: Grid,
    pub phi: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct DispersionCurve {
    pub band: usize,
    pub k: Vec<f64>,
    pub omega: Vec<f64>,
    /// 2⟨φ, (k − Bx)φ⟩
    pub d_omega_fh: Vec<f64>,
    /// Central differences of `omega` on the k-grid.
    pub d_omega_fd: Vec<f64>,
    pub states: Option<Vec<SampledState>>,
}

impl DispersionCurve {
    /// Position of an exactly sampled wave number.
    pub fn index_of(&self, k: f64) -> Option<usize> {
        self.k.binary_search_by(|probe| probe.total_cmp(&k)).ok()
    }
}

/// `samples` points mirrored exactly about zero on [−half_span, half_span].
pub fn symmetric_grid(half_span: f64, samples: usize) -> Vec<f64> {
    let samples = samples.max(2);
    if samples % 2 == 1 {
        let m = samples / 2;
        let pos: Vec<f64> = (1..=m).map(|i| half_span * i as f64 / m as f64).collect();
        pos.iter().rev().map(|v| -v).chain(std::iter::once(0.0)).chain(pos.iter().copied()).collect()
    } else {
        let m = samples / 2;
        let step = 2.0 * half_span / (samples - 1) as f64;
        let pos: Vec<f64> = (0..m).map(|i| 0.5 * step + step * i as f64).collect();
        pos.iter().rev().map(|v| -v).chain(pos.iter().copied()).collect()
    }
}

/// Half-width of the default k-grid: it covers every inverse image of an admissible
/// window at level `level`.
pub fn default_k_span(problem: &FiberProblem, level: usize) -> f64 {
    let b = problem.field;
    let top = (2 * level + 3) as f64;
    match problem.potential {
        ConfiningPotential::Sharp { width, .. } | ConfiningPotential::Power { width, .. } => {
            0.5 * b * width + 6.0 * (top * b).sqrt()
        }
        ConfiningPotential::Parabolic { stiffness } => {
            let bg = problem.reference_field();
            let k_top = bg.powf(1.5) / stiffness * (2.0 * level as f64 + 2.0).sqrt();
            1.2 * k_top + 1.0
        }
        ConfiningPotential::Free => 6.0 * (top * b).sqrt(),
    }
}

pub fn default_k_grid(problem: &FiberProblem, level: usize, samples: usize) -> Vec<f64> {
    symmetric_grid(default_k_span(problem, level), samples)
}

/// Solves bands 0..=j_max at each k (in parallel) and assembles one curve per band.
pub fn trace_curves(
    problem: &FiberProblem,
    j_max: usize,
    k_grid: &[f64],
    retain_states: bool,
) -> Result<Vec<DispersionCurve>> {
    if k_grid.is_empty() {
        return Err(invalid("empty k-grid"));
    }
    if k_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("k-grid must be strictly increasing"));
    }
    let solutions: Vec<FiberSolution> = k_grid
        .par_iter()
        .map(|&k| problem.solve(k, j_max + 1))
        .collect::<Result<_>>()?;
    Ok((0..=j_max)
        .map(|band| {
            let omega: Vec<f64> = solutions.iter().map(|s| s.pairs[band].omega).collect();
            let d_omega_fh = solutions
                .iter()
                .map(|s| fh_derivative(&s.grid, &s.pairs[band].phi, s.k, problem.field))
                .collect();
            let d_omega_fd = central_differences(k_grid, &omega);
            let states = retain_states.then(|| {
                solutions
                    .iter()
                    .map(|s| SampledState {
                        grid: s.grid.clone(),
                        phi: s.pairs[band].phi.clone(),
                    })
                    .collect()
            });
            DispersionCurve {
                band,
                k: k_grid.to_vec(),
                omega,
                d_omega_fh,
                d_omega_fd,
                states,
            }
        })
        .collect())
}

/// Second-order differences on a possibly uneven grid, one-sided at the ends.
pub fn central_differences(x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = x.len();
    match n {
        0 => return Vec::new(),
        1 => return vec![0.0],
        2 => {
            let d = (f[1] - f[0]) / (x[1] - x[0]);
            return vec![d, d];
        }
        _ => {}
    }
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let (h1, h2) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        out[i] = -h2 / (h1 * (h1 + h2)) * f[i - 1] + (h2 - h1) / (h1 * h2) * f[i] + h1 / (h2 * (h1 + h2)) * f[i + 1];
    }
    let (h1, h2) = (x[1] - x[0], x[2] - x[1]);
    out[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[0] + (h1 + h2) / (h1 * h2) * f[1] - h1 / (h2 * (h1 + h2)) * f[2];
    let (h1, h2) = (x[n - 2] - x[n - 3], x[n - 1] - x[n - 2]);
    out[n - 1] = h2 / (h1 * (h1 + h2)) * f[n - 3] - (h1 + h2) / (h1 * h2) * f[n - 2] + (2.0 * h2 + h1) / (h2 * (h1 + h2)) * f[n - 1];
    out
}

/// Band slope from the eigenfunction: 2⟨φ, (k − Bx)φ⟩.
pub fn fh_derivative(grid: &Grid, phi: &[f64], k: f64, field: f64) -> f64 {
    2.0 * fiber::expectation_with(grid, phi, |x| k - field * x).expect("phi sampled on grid")
}

/// Band slope from the boundary traces of a sharp wall: (𝒱₀/B)(φ(L/2)² − φ(−L/2)²).
pub fn sharp_trace_derivative(grid: &Grid, phi: &[f64], pot: &ConfiningPotential, field: f64) -> Result<f64> {
    let ConfiningPotential::Sharp { height, width } = *pot else {
        return Err(Error::WrongPotential { expected: "sharp" });
    };
    let right = fiber::trace_value(grid, phi, 0.5 * width)?;
    let left = fiber::trace_value(grid, phi, -0.5 * width)?;
    Ok(height / field * (right * right - left * left))
}

/// Band slope of a power wall from the two wall integrals,
/// −p(𝒱₀/B)(I(k) − I(−k)) with I(k) = ∫_{x<−L/2} (−x − L/2)^{p−1} φ² dx.
/// The mirrored integral I(−k) is read off the right wall of the same φ.
pub fn power_derivative(grid: &Grid, phi: &[f64], pot: &ConfiningPotential, field: f64) -> Result<f64> {
    let ConfiningPotential::Power {
        height,
        width,
        exponent,
    } = *pot
    else {
        return Err(Error::WrongPotential { expected: "power" });
    };
    let half = 0.5 * width;
    let left = fiber::expectation_with(grid, phi, |x| if x < -half { (-x - half).powf(exponent - 1.0) } else { 0.0 })?;
    let right = fiber::expectation_with(grid, phi, |x| if x > half { (x - half).powf(exponent - 1.0) } else { 0.0 })?;
    Ok(-exponent * height / field * (left - right))
}

/// Negative-k component of ω_j^{-1}(Δ); the positive component is its mirror image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InverseImage {
    pub band: usize,
    pub minus: Option<(f64, f64)>,
}

impl InverseImage {
    pub fn is_empty(&self) -> bool {
        self.minus.is_none()
    }

    pub fn plus(&self) -> Option<(f64, f64)> {
        self.minus.map(|(lo, hi)| (-hi, -lo))
    }
}

/// Inverts the piecewise-linear interpolant of a sampled curve over the window,
/// restricted to k ≤ 0.
pub fn inverse_image(curve: &DispersionCurve, window: &EnergyWindow) -> Result<InverseImage> {
    let (e_lo, e_hi) = window.bounds();
    let idx: Vec<usize> = (0..curve.k.len()).filter(|&i| curve.k[i] <= 0.0).collect();
    for edge in [e_lo, e_hi] {
        let crossings = idx
            .windows(2)
            .filter(|w| (curve.omega[w[0]] >= edge) != (curve.omega[w[1]] >= edge))
            .count();
        if crossings > 1 {
            return Err(Error::AmbiguousInversion {
                band: curve.band,
                edge,
                crossings,
            });
        }
    }
    let mut span: Option<(f64, f64)> = None;
    let mut extend = |a: f64, b: f64| {
        span = Some(match span {
            None => (a, b),
            Some((lo, hi)) => (lo.min(a), hi.max(b)),
        });
    };
    if idx.len() == 1 {
        let i = idx[0];
        if window.contains(curve.omega[i]) {
            extend(curve.k[i], curve.k[i]);
        }
    }
    for w in idx.windows(2) {
        let (k0, k1) = (curve.k[w[0]], curve.k[w[1]]);
        let (f0, f1) = (curve.omega[w[0]], curve.omega[w[1]]);
        // parameter range t ∈ [0,1] where e_lo ≤ f0 + t(f1 − f0) ≤ e_hi
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        let df = f1 - f0;
        if df == 0.0 {
            if !(e_lo..=e_hi).contains(&f0) {
                continue;
            }
        } else {
            let (ta, tb) = ((e_lo - f0) / df, (e_hi - f0) / df);
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
            if t0 > t1 {
                continue;
            }
        }
        extend(k0 + t0 * (k1 - k0), k0 + t1 * (k1 - k0));
    }
    Ok(InverseImage {
        band: curve.band,
        minus: span,
    })
}

/// Moves each endpoint of a sampled inverse image onto the true crossing of
/// ω_j(k) with the window edge, using fresh fiber solves (regula falsi, Illinois variant).
/// `bracket` is the half-width of the k-interval searched around each endpoint.
pub fn refine_inverse_image(
    problem: &FiberProblem,
    image: &InverseImage,
    window: &EnergyWindow,
    bracket: f64,
) -> Result<InverseImage> {
    let Some((lo, hi)) = image.minus else {
        return Ok(*image);
    };
    let band = image.band;
    let (e_lo, e_hi) = window.bounds();
    let mut ends = [lo, hi];
    for end in ends.iter_mut() {
        let a = *end - bracket;
        let b = (*end + bracket).min(0.0);
        if !(a < b) {
            continue;
        }
        let (fa, fb) = (band_energy(problem, band, a)?, band_energy(problem, band, b)?);
        let target = [e_lo, e_hi].into_iter().find(|&e| (fa - e) * (fb - e) < 0.0);
        let Some(target) = target else { continue };
        *end = crossing(problem, band, target, (a, fa), (b, fb), 1e-8 * window.reference)?;
    }
    Ok(InverseImage {
        band,
        minus: Some((ends[0].min(ends[1]), ends[0].max(ends[1]))),
    })
}

fn band_energy(problem: &FiberProblem, band: usize, k: f64) -> Result<f64> {
    Ok(problem.solve(k, band + 1)?.pairs[band].omega)
}

/// Root of ω_band(k) = target inside a sign-changing bracket (regula falsi, Illinois variant).
fn crossing(
    problem: &FiberProblem,
    band: usize,
    target: f64,
    (a, fa): (f64, f64),
    (b, fb): (f64, f64),
    tol: f64,
) -> Result<f64> {
    let (mut a, mut b, mut ga, mut gb) = (a, b, fa - target, fb - target);
    let mut side = 0i8;
    let mut best = 0.5 * (a + b);
    for _ in 0..100 {
        let c = (a * gb - b * ga) / (gb - ga);
        let gc = band_energy(problem, band, c)? - target;
        best = c;
        if gc.abs() <= tol || (b - a).abs() <= 1e-13 * c.abs().max(1.0) {
            break;
        }
        if gc * gb > 0.0 {
            b = c;
            gb = gc;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        } else {
            a = c;
            ga = gc;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        }
    }
    Ok(best)
}

/// ω_j^{-1}(Δ)_- without a precomputed curve: walks left from k = 0 in steps of
/// √ref/4 and solves for each window-edge crossing. Returns an empty image when
/// the band never enters the window before the walk ends.
pub fn scan_minus_interval(problem: &FiberProblem, band: usize, window: &EnergyWindow) -> Result<InverseImage> {
    let (e_lo, e_hi) = window.bounds();
    let reference = problem.reference_field();
    let step = 0.25 * reference.sqrt();
    let k_stop = match problem.potential {
        ConfiningPotential::Parabolic { stiffness } => 4.0 * e_hi.sqrt() * reference / stiffness + 1.0,
        pot => 4.0 * (problem.field * pot.half_width() + e_hi.sqrt()),
    };
    let tol = 1e-8 * window.reference;
    let mut prev = (0.0, band_energy(problem, band, 0.0)?);
    let mut inner = window.contains(prev.1).then_some(0.0);
    let mut outer = None;
    while outer.is_none() {
        let k = prev.0 - step;
        if k < -k_stop {
            if inner.is_some() {
                return Err(invalid(format!("band {band} does not leave the window before k = {k}")));
            }
            return Ok(InverseImage { band, minus: None });
        }
        let f = band_energy(problem, band, k)?;
        for edge in [e_lo, e_hi] {
            if (prev.1 - edge) * (f - edge) < 0.0 {
                let root = crossing(problem, band, edge, prev, (k, f), tol)?;
                if edge == e_lo && inner.is_none() {
                    inner = Some(root);
                } else if edge == e_hi {
                    outer = Some(root);
                }
            }
        }
        prev = (k, f);
    }
    let outer = outer.expect("loop exits with an upper crossing");
    let inner = inner.unwrap_or(outer);
    Ok(InverseImage {
        band,
        minus: Some((outer, inner)),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    /// Sampled min over k and j < n of ω_{j+1} − ω_j; infinite when n = 0.
    pub min_gap: f64,
    pub window_width: f64,
    pub gap_ok: bool,
    pub disjoint: bool,
}

impl GapReport {
    pub fn pass(&self) -> bool {
        self.gap_ok && self.disjoint
    }
}

/// Checks that the window is narrower than the smallest band separation below level n,
/// and that the computed inverse images of distinct bands do not overlap.
pub fn gap_test(curves: &[DispersionCurve], window: &EnergyWindow, images: &[InverseImage]) -> GapReport {
    let n = window.level;
    let mut min_gap = f64::INFINITY;
    for j in 0..n {
        let (Some(lower), Some(upper)) = (curves.iter().find(|c| c.band == j), curves.iter().find(|c| c.band == j + 1))
        else {
            continue;
        };
        for (a, b) in lower.omega.iter().zip(&upper.omega) {
            min_gap = min_gap.min(b - a);
        }
    }
    let mut disjoint = true;
    for (i, a) in images.iter().enumerate() {
        for b in &images[i + 1..] {
            if let (Some((a0, a1)), Some((b0, b1))) = (a.minus, b.minus) {
                if !(a1 < b0 || b1 < a0) {
                    disjoint = false;
                }
            }
        }
    }
    GapReport {
        min_gap,
        window_width: window.width(),
        gap_ok: window.width() < min_gap,
        disjoint,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WaveNumberReport {
    pub threshold: f64,
    /// Largest right endpoint over the non-empty minus intervals.
    pub rightmost: Option<f64>,
    pub pass: bool,
}

/// Every minus interval must lie left of −B·L/α.
pub fn wave_number_check(images: &[InverseImage], field: f64, width: f64, alpha: f64) -> Result<WaveNumberReport> {
    if !(alpha > 2.0) {
        return Err(invalid(format!("alpha {alpha} must exceed 2")));
    }
    let threshold = -field * width / alpha;
    let rightmost = images.iter().filter_map(|im| im.minus.map(|(_, hi)| hi)).reduce(f64::max);
    Ok(WaveNumberReport {
        threshold,
        rightmost,
        pass: rightmost.is_none_or(|r| r < threshold),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymptoteReport {
    pub band: usize,
    /// E_j(B) + C, absent when C is infinite.
    pub limit: Option<f64>,
    /// limit − ω at the two outermost samples (or ω itself for unbounded walls).
    pub outer_values: (f64, f64),
    /// Gap shrinks (or ω grows, for unbounded walls) monotonically over the outer samples.
    pub monotone: bool,
    /// E_j(B) ≤ ω_j(k) ≤ E_j(B) + C at every sample.
    pub within_bounds: bool,
}

/// Watches the outermost `tail` samples on both sides of the k-grid.
pub fn asymptote_check(curve: &DispersionCurve, pot: &ConfiningPotential, field: f64, tail: usize) -> AsymptoteReport {
    let n = curve.k.len();
    let tail = tail.clamp(2, n.max(2)).min(n);
    let landau = (2 * curve.band + 1) as f64 * field;
    let cap = pot.limit_at_infinity();
    let limit = cap.is_finite().then_some(landau + cap);
    // discretization pulls levels slightly below E_j
    let slack = 1e-4 * field;
    let within_bounds = match pot {
        ConfiningPotential::Parabolic { .. } => true,
        _ => curve.omega.iter().all(|&w| w >= landau - slack && w <= landau + cap + slack),
    };
    let tol = 1e-9 * curve.omega.iter().fold(1.0f64, |m, w| m.max(w.abs()));
    // toward the right end ω should rise (gap shrinks), toward the left end likewise
    let right_ok = curve.omega[n - tail..].windows(2).all(|w| w[1] >= w[0] - tol);
    let left_ok = curve.omega[..tail].windows(2).all(|w| w[0] >= w[1] - tol);
    let monotone = match pot {
        ConfiningPotential::Free => {
            let (lo, hi) = curve.omega.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &w| (a.min(w), b.max(w)));
            hi - lo <= 1e-4 * field
        }
        _ => right_ok && left_ok,
    };
    let outer = |w: f64| limit.map_or(w, |l| l - w);
    AsymptoteReport {
        band: curve.band,
        limit,
        outer_values: (outer(curve.omega[0]), outer(curve.omega[n - 1])),
        monotone,
        within_bounds,
    }
}

/// 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV with columns k, then omega_j, d_omega_fh_j, d_omega_fd_j for each band.
pub fn write_curves_csv(curves: &[DispersionCurve], mut out: impl Write) -> Result<()> {
    let Some(first) = curves.first() else {
        return Err(invalid("no curves to write"));
    };
    if curves.iter().any(|c| c.k != first.k) {
        return Err(invalid("curves sampled on different k-grids"));
    }
    let mut header = String::from("k");
    for c in curves {
        let j = c.band;
        header.push_str(&format!(",omega_{j},d_omega_fh_{j},d_omega_fd_{j}"));
    }
    writeln!(out, "{header}")?;
    for (i, &k) in first.k.iter().enumerate() {
        let mut line = fmt_num(k);
        for c in curves {
            for v in [c.omega[i], c.d_omega_fh[i], c.d_omega_fd[i]] {
                line.push(',');
                line.push_str(&fmt_num(v));
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}
