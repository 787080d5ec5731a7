//! Finite cylinder of circumference D: Fourier modes k_p = 2πp/D, the pure-point
//! spectrum, eigenstate and packet currents, and a perturbed solve that couples modes.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::band::SymBand;
use crate::dispersion::{fmt_num, EnergyWindow, FiberProblem};
use crate::error::{invalid, Error, Result};
use crate::fiber::{self, FiberHamiltonian, Grid, SolverConfig};
use crate::potentials::ConfiningPotential;
use crate::tridiag::SymTridiagonal;

/// Consecutive modes above the window needed before the outward scan stops.
const EXIT_RUN: i64 = 5;

pub fn mode_wavenumber(p: i64, circumference: f64) -> f64 {
    2.0 * std::f64::consts::PI * p as f64 / circumference
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderGeometry {
    pub circumference: f64,
    pub wall: ConfiningPotential,
    pub field: f64,
}

impl CylinderGeometry {
    pub fn new(circumference: f64, wall: ConfiningPotential, field: f64) -> Result<Self> {
        if !(circumference > 0.0 && circumference.is_finite()) {
            return Err(invalid(format!("circumference {circumference} must be positive")));
        }
        if !(field > 0.0 && field.is_finite()) {
            return Err(invalid(format!("field strength {field} must be positive")));
        }
        wall.validate()?;
        Ok(Self {
            circumference,
            wall,
            field,
        })
    }

    pub fn k(&self, p: i64) -> f64 {
        mode_wavenumber(p, self.circumference)
    }

    /// A sharp wall must clear E_n + B so that the window is reached at finite |p|.
    fn check_wall(&self, window: &EnergyWindow) -> Result<()> {
        if let ConfiningPotential::Sharp { height, .. } = self.wall {
            let need = (2 * window.level + 2) as f64 * self.field;
            if height < need {
                return Err(invalid(format!(
                    "sharp wall height {height} is below E_n + B = {need}; the window may never be left"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ModeState {
    pub k: f64,
    pub omega: f64,
    pub grid: Grid,
    pub phi: Vec<f64>,
}

/// {ω_m(k_p)} for m ≤ m_max and |p| ≤ p_range.
#[derive(Clone, Debug)]
pub struct CylinderSpectrum {
    pub geometry: CylinderGeometry,
    pub window: EnergyWindow,
    pub m_max: usize,
    pub p_range: i64,
    /// Largest |p| with ω₀(k_p) in the window; `None` if no mode of band 0 lands there.
    pub p_star: Option<i64>,
    pub entries: BTreeMap<(usize, i64), ModeState>,
}

impl CylinderSpectrum {
    pub fn get(&self, m: usize, p: i64) -> Result<&ModeState> {
        self.entries.get(&(m, p)).ok_or(Error::MissingEntry { m, p })
    }

    /// Membership is decided on the p ≤ 0 side so that ±p always enter together.
    pub fn in_window(&self, m: usize, p: i64) -> bool {
        self.entries
            .get(&(m, -p.abs()))
            .is_some_and(|s| self.window.contains(s.omega))
    }

    pub fn window_modes(&self) -> Vec<(usize, i64)> {
        self.entries
            .keys()
            .copied()
            .filter(|&(m, p)| self.in_window(m, p))
            .collect()
    }
}

/// Solves h₀(k_p) for p = 0, ±1, ±2, … until ω₀ has stayed above the window for
/// several consecutive |p|.
pub fn assemble_spectrum(
    geom: &CylinderGeometry,
    m_max: usize,
    window: &EnergyWindow,
    solver: &SolverConfig,
    p_cap: i64,
) -> Result<CylinderSpectrum> {
    geom.check_wall(window)?;
    let problem = FiberProblem::new(geom.field, geom.wall, *solver)?;
    let count = m_max + 1;
    let (_, top) = window.bounds();
    let mut minus = Vec::new();
    let mut p_star = None;
    let mut run = 0;
    let mut p = 0i64;
    while run < EXIT_RUN {
        if p > p_cap {
            return Err(Error::ModeCap { cap: p_cap });
        }
        let sol = problem.solve(geom.k(-p), count)?;
        let omega0 = sol.pairs[0].omega;
        if window.contains(omega0) {
            p_star = Some(p);
        }
        run = if omega0 > top { run + 1 } else { 0 };
        minus.push(sol);
        p += 1;
    }
    let p_range = p - 1;
    let plus: Vec<_> = (1..=p_range)
        .into_par_iter()
        .map(|p| problem.solve(geom.k(p), count))
        .collect::<Result<_>>()?;
    let mut entries = BTreeMap::new();
    for (p, sol) in minus
        .into_iter()
        .enumerate()
        .map(|(i, s)| (-(i as i64), s))
        .chain(plus.into_iter().enumerate().map(|(i, s)| (i as i64 + 1, s)))
    {
        for pair in sol.pairs {
            entries.insert(
                (pair.band, p),
                ModeState {
                    k: sol.k,
                    omega: pair.omega,
                    grid: sol.grid.clone(),
                    phi: pair.phi,
                },
            );
        }
    }
    Ok(CylinderSpectrum {
        geometry: *geom,
        window: *window,
        m_max,
        p_range,
        p_star,
        entries,
    })
}

/// ⟨φ, (k_p − Bx) φ⟩ for the stored eigenfunction; half the slope of ω_m at k_p.
pub fn eigenstate_current(spectrum: &CylinderSpectrum, m: usize, p: i64) -> Result<f64> {
    let s = spectrum.get(m, p)?;
    let b = spectrum.geometry.field;
    fiber::expectation_with(&s.grid, &s.phi, |x| s.k - b * x)
}

/// Central difference of ω_m across neighboring continuous k.
pub fn slope_by_differences(problem: &FiberProblem, m: usize, k: f64, dk: f64) -> Result<f64> {
    let up = problem.solve(k + dk, m + 1)?.pairs[m].omega;
    let down = problem.solve(k - dk, m + 1)?.pairs[m].omega;
    Ok((up - down) / (2.0 * dk))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CylinderPacket {
    pub coeffs: BTreeMap<(usize, i64), f64>,
    pub gamma: f64,
}

impl CylinderPacket {
    /// Equal weights on the p < 0 modes, mirrored with factor (1+γ²)^{-1/2}.
    /// p = 0 modes only carry weight when γ = 0.
    pub fn over_modes(modes: &[(usize, i64)], gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0) {
            return Err(invalid(format!("asymmetry gamma {gamma} must be >= 0")));
        }
        let mirror = if gamma.is_infinite() {
            0.0
        } else {
            1.0 / (1.0 + gamma * gamma).sqrt()
        };
        let mut coeffs = BTreeMap::new();
        for &(m, p) in modes {
            let beta = match p {
                p if p < 0 => 1.0,
                0 if gamma == 0.0 => 1.0,
                0 => continue,
                _ => mirror,
            };
            if beta != 0.0 {
                coeffs.insert((m, p), beta);
            }
        }
        let norm: f64 = coeffs.values().map(|b| b * b).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::EmptyPacket);
        }
        coeffs.values_mut().for_each(|b| *b /= norm);
        Ok(Self { coeffs, gamma })
    }

    pub fn one_mode(m: usize, p: i64) -> Self {
        Self {
            coeffs: BTreeMap::from([((m, p), 1.0)]),
            gamma: 0.0,
        }
    }
}

pub fn build_cylinder_packet(spectrum: &CylinderSpectrum, gamma: f64) -> Result<CylinderPacket> {
    CylinderPacket::over_modes(&spectrum.window_modes(), gamma)
}

/// Σ |β_m^(p)|² · current(m, p).
pub fn packet_current(spectrum: &CylinderSpectrum, packet: &CylinderPacket) -> Result<f64> {
    let mut total = 0.0;
    for (&(m, p), beta) in &packet.coeffs {
        if !spectrum.in_window(m, p) {
            return Err(Error::SupportMismatch { band: m });
        }
        total += beta * beta * eigenstate_current(spectrum, m, p)?;
    }
    Ok(total)
}

/// Rows `m, p, k_p, omega, current` for every entry.
pub fn write_spectrum_csv(spectrum: &CylinderSpectrum, mut out: impl Write) -> Result<()> {
    writeln!(out, "m,p,k_p,omega,current")?;
    let mut keys: Vec<_> = spectrum.entries.keys().copied().collect();
    keys.sort_by_key(|&(m, p)| (m, p));
    for (m, p) in keys {
        let s = &spectrum.entries[&(m, p)];
        let current = eigenstate_current(spectrum, m, p)?;
        writeln!(out, "{m},{p},{},{},{}", fmt_num(s.k), fmt_num(s.omega), fmt_num(current))?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Harmonic {
    Cos,
    Sin,
}

/// One term w(x)·cos(2πqy/D) or w(x)·sin(2πqy/D), with w given by samples and
/// linear interpolation, zero outside the sampled range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeCoupling {
    pub harmonic: Harmonic,
    pub index: u32,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
}

impl ModeCoupling {
    /// amplitude·cos²(πx/(2a)) on [−a, a].
    pub fn bump(harmonic: Harmonic, index: u32, amplitude: f64, half_width: f64, samples: usize) -> Self {
        let samples = samples.max(3);
        let x: Vec<f64> = (0..samples)
            .map(|i| -half_width + 2.0 * half_width * i as f64 / (samples - 1) as f64)
            .collect();
        let values = x
            .iter()
            .map(|&v| amplitude * (std::f64::consts::FRAC_PI_2 * v / half_width).cos().powi(2))
            .collect();
        Self {
            harmonic,
            index,
            x,
            values,
        }
    }

    pub fn validate(&self, wall: &ConfiningPotential) -> Result<()> {
        if self.x.len() < 2 || self.x.len() != self.values.len() {
            return Err(invalid("a coupling profile needs at least two (x, value) samples of equal length"));
        }
        if self.x.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("coupling profile abscissae must increase strictly"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("coupling profile values must be finite"));
        }
        if self.harmonic == Harmonic::Sin && self.index == 0 {
            return Err(invalid("sine harmonic index must be at least 1"));
        }
        if let Some(width) = wall.width() {
            let half = width / 2.0 + 1e-12;
            let outside = self.x.iter().zip(&self.values).any(|(x, v)| x.abs() > half && *v != 0.0);
            if outside {
                return Err(invalid("coupling profile must vanish outside the strip"));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x < self.x[0] || x > self.x[n - 1] {
            return 0.0;
        }
        let i = self.x.partition_point(|&v| v <= x).clamp(1, n - 1);
        let t = (x - self.x[i - 1]) / (self.x[i] - self.x[i - 1]);
        self.values[i - 1] + t * (self.values[i] - self.values[i - 1])
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }
}

/// Knobs for the coupled-mode solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbedSettings {
    /// Nodes of the shared x-grid, box ends included.
    pub grid_points: usize,
    pub pad_sigmas: f64,
    pub dimension_cap: usize,
    /// Extra Fourier modes kept beyond p_star + harmonic bandwidth.
    pub mode_margin: i64,
    /// Enlarged window (ã, c̃); defaults to the midpoints towards the Landau levels.
    pub enlarged: Option<(f64, f64)>,
    /// Bisection tolerance relative to ‖H‖∞.
    pub eigen_tol: f64,
}

impl Default for PerturbedSettings {
    fn default() -> Self {
        Self {
            grid_points: 401,
            pad_sigmas: 8.0,
            dimension_cap: 25_000,
            mode_margin: 3,
            enlarged: None,
            eigen_tol: 1e-13,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenShift {
    pub index: usize,
    pub m: usize,
    pub p: i64,
    pub unperturbed: f64,
    pub perturbed: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbedReport {
    pub dimension: usize,
    pub modes: i64,
    pub p_star: Option<i64>,
    pub grid_points: usize,
    /// Σ sup|w| over the coupling terms; bounds ‖V₁‖.
    pub perturbation_norm: f64,
    pub enlarged_bounds: (f64, f64),
    /// Perturbed eigenvalues in the enlarged window with their global indices.
    pub eigenvalues: Vec<(usize, f64)>,
    pub shifts: Vec<EigenShift>,
    pub max_shift: f64,
    pub unperturbed_current: f64,
    pub perturbed_current: f64,
    /// ‖ψ‖² after projecting the unit unperturbed packet.
    pub retained_norm_sq: f64,
}

struct Block {
    tri: SymTridiagonal,
    /// Lowest eigenpairs as unit Euclidean vectors on the interior nodes.
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
}

/// Symmetric grid with the strip walls on nodes, covering the strip plus padding.
fn shared_grid(geom: &CylinderGeometry, settings: &PerturbedSettings) -> Result<Grid> {
    if settings.grid_points < 5 {
        return Err(invalid("shared grid needs at least 5 points"));
    }
    let half_nodes = (settings.grid_points - 1) / 2;
    let half = geom.wall.half_width();
    let reach = half + settings.pad_sigmas / geom.field.sqrt();
    let h = if half > 0.0 {
        let m = ((half_nodes as f64) * half / reach).floor().max(1.0);
        half / m
    } else {
        reach / half_nodes as f64
    };
    Grid::lattice(-(half_nodes as i64), 2 * half_nodes + 1, h)
}

/// Couples the Fourier modes through V₁, solves H₀ + V₁ on a shared x-grid, checks
/// eigenvalue shifts against ‖V₁‖, and compares the current of the projected packet.
pub fn perturbed_cylinder_project(
    geom: &CylinderGeometry,
    couplings: &[ModeCoupling],
    window: &EnergyWindow,
    settings: &PerturbedSettings,
    gamma: f64,
) -> Result<PerturbedReport> {
    geom.check_wall(window)?;
    for c in couplings {
        c.validate(&geom.wall)?;
    }
    let b = geom.field;
    let level = window.level;
    let (lo, hi) = window.bounds();
    let (ea, ec) = settings.enlarged.unwrap_or((
        0.5 * (1.0 + window.lower),
        0.5 * (window.upper + 3.0),
    ));
    if !(1.0 < ea && ea <= window.lower && window.upper <= ec && ec < 3.0) {
        return Err(invalid(format!("enlarged window ({ea}, {ec}) must satisfy 1 < ã ≤ a < c ≤ c̃ < 3")));
    }
    let base = 2.0 * level as f64;
    let (elo, ehi) = ((base + ea) * window.reference, (base + ec) * window.reference);

    let grid = shared_grid(geom, settings)?;
    let interior = grid.n_points - 2;
    let x: Vec<f64> = (1..=interior).map(|i| grid.x(i)).collect();
    let tol = settings.eigen_tol;
    let count = level + 1;

    let solve_block = |p: i64| -> Result<Block> {
        let ham = FiberHamiltonian::new(b, geom.k(p), geom.wall, grid.clone());
        let tri = ham.assemble();
        let values = tri.lowest_eigenvalues(count, tol * tri.norm_inf());
        let mut vectors: Vec<Vec<f64>> = Vec::new();
        for (j, &v) in values.iter().enumerate() {
            let refs: Vec<&[f64]> = vectors.iter().map(Vec::as_slice).collect();
            let vec = tri
                .inverse_iteration(v, &refs, 8, 1e-9 * tri.norm_inf(), j as u64)
                .ok_or(Error::NonConvergence { band: j })?;
            vectors.push(vec);
        }
        Ok(Block { tri, values, vectors })
    };

    // outward scan for p_star on the shared grid
    let mut p_star = None;
    let mut run = 0;
    let mut p = 0i64;
    while run < EXIT_RUN {
        if (2 * p + 1) as usize * interior > settings.dimension_cap {
            return Err(Error::DimensionCap {
                dim: (2 * p + 1) as usize * interior,
                cap: settings.dimension_cap,
            });
        }
        let blk = solve_block(-p)?;
        if window.contains(blk.values[0]) {
            p_star = Some(p);
        }
        run = if blk.values[0] > hi { run + 1 } else { 0 };
        p += 1;
    }
    let bandwidth = couplings.iter().map(|c| c.index as i64).max().unwrap_or(0);
    let modes = p_star.unwrap_or(0) + bandwidth + settings.mode_margin;
    let width = (2 * modes + 1) as usize;
    let complex = couplings.iter().any(|c| c.harmonic == Harmonic::Sin);
    let factor = if complex { 2 } else { 1 };
    let dim = interior * width * factor;
    if dim > settings.dimension_cap {
        return Err(Error::DimensionCap {
            dim,
            cap: settings.dimension_cap,
        });
    }
    let blocks: Vec<Block> = (-modes..=modes).into_par_iter().map(solve_block).collect::<Result<_>>()?;
    let block = |p: i64| &blocks[(p + modes) as usize];

    // unperturbed in-window modes, membership decided on the p ≤ 0 side
    let mut window_modes = Vec::new();
    for m in 0..count {
        for p in -modes..=modes {
            if lo <= block(-p.abs()).values[m] && block(-p.abs()).values[m] <= hi {
                window_modes.push((m, p));
            }
        }
    }
    let packet = CylinderPacket::over_modes(&window_modes, gamma)?;

    // global indices in the direct sum of the blocks
    let mut all: Vec<(f64, usize, i64)> = Vec::new();
    for p in -modes..=modes {
        let blk = block(p);
        let below = blk.tri.count_below(ehi);
        let vals = if below > blk.values.len() {
            blk.tri.lowest_eigenvalues(below, tol * blk.tri.norm_inf())
        } else {
            blk.values.clone()
        };
        all.extend(vals.into_iter().enumerate().map(|(m, v)| (v, m, p)));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
    let index_of: BTreeMap<(usize, i64), usize> =
        all.iter().enumerate().map(|(g, &(_, m, p))| ((m, p), g)).collect();

    // assemble H₀ + V₁, unknowns ordered x-major: (i, p) → i·width + p + modes
    let unknown = |i: usize, p: i64| i * width + (p + modes) as usize;
    let band_w = if complex { 2 * width + 1 } else { width };
    let mut mat = SymBand::zeros(dim, band_w);
    let mut put = |u: usize, v: usize, re: f64, im: f64| -> Result<()> {
        if complex {
            mat.add(2 * u, 2 * v, re)?;
            mat.add(2 * u + 1, 2 * v + 1, re)?;
            if u != v && im != 0.0 {
                mat.add(2 * u, 2 * v + 1, -im)?;
                mat.add(2 * u + 1, 2 * v, im)?;
            }
            Ok(())
        } else {
            mat.add(u, v, re)
        }
    };
    for p in -modes..=modes {
        let t = &block(p).tri;
        for i in 0..interior {
            put(unknown(i, p), unknown(i, p), t.diag()[i], 0.0)?;
            if i + 1 < interior {
                put(unknown(i + 1, p), unknown(i, p), t.off()[i], 0.0)?;
            }
        }
    }
    for c in couplings {
        let q = c.index as i64;
        for (i, &xi) in x.iter().enumerate() {
            let w = c.eval(xi);
            if w == 0.0 {
                continue;
            }
            for p in -modes..=modes {
                let to = p + q;
                match (c.harmonic, q) {
                    (Harmonic::Cos, 0) => put(unknown(i, p), unknown(i, p), w, 0.0)?,
                    (Harmonic::Cos, _) if to <= modes => put(unknown(i, to), unknown(i, p), 0.5 * w, 0.0)?,
                    // ⟨p+q| sin |p⟩ = −i/2
                    (Harmonic::Sin, _) if to <= modes => put(unknown(i, to), unknown(i, p), 0.0, -0.5 * w)?,
                    _ => {}
                }
            }
        }
    }
    let norm = mat.norm_inf();
    let tri = mat.to_tridiagonal();
    let etol = tol * norm;

    // eigenvalue shifts at fixed global index
    let mut shifts = Vec::new();
    for &(m, p) in &window_modes {
        let g = index_of[&(m, p)];
        let perturbed = tri.eigenvalues_by_index(g * factor, 1, etol)[0];
        shifts.push(EigenShift {
            index: g,
            m,
            p,
            unperturbed: block(p).values[m],
            perturbed,
        });
    }
    let max_shift = shifts.iter().fold(0.0_f64, |a, s| a.max((s.perturbed - s.unperturbed).abs()));

    // eigenvectors in the enlarged window
    let found = tri.eigenvalues_in(elo, ehi, etol);
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(found.len());
    for &(g, lambda) in &found {
        let refs: Vec<&[f64]> = vectors.iter().map(Vec::as_slice).collect();
        let v = [0.0, 1.0, -1.0, 10.0]
            .iter()
            .enumerate()
            .find_map(|(a, s)| mat.inverse_iteration(lambda + s * etol, &refs, 8, 1e-9 * norm, (g * 4 + a) as u64))
            .ok_or(Error::NonConvergence { band: g })?;
        vectors.push(v);
    }

    // unperturbed packet and its projection
    let mut psi0 = vec![0.0; dim];
    let mut unperturbed_current = 0.0;
    for (&(m, p), beta) in &packet.coeffs {
        let v = &block(p).vectors[m];
        for i in 0..interior {
            psi0[unknown(i, p) * factor] += beta * v[i];
        }
        let e: f64 = (0..interior).map(|i| (geom.k(p) - b * x[i]) * v[i] * v[i]).sum();
        unperturbed_current += beta * beta * e;
    }
    let mut psi = vec![0.0; dim];
    for v in &vectors {
        let d: f64 = v.iter().zip(&psi0).map(|(a, c)| a * c).sum();
        psi.iter_mut().zip(v).for_each(|(a, c)| *a += d * c);
    }
    let retained: f64 = psi.iter().map(|a| a * a).sum();
    if retained < 0.5 {
        return Err(Error::ProjectionLoss { retained });
    }
    let mut current = 0.0;
    for i in 0..interior {
        for p in -modes..=modes {
            let u = unknown(i, p) * factor;
            let amp: f64 = psi[u..u + factor].iter().map(|a| a * a).sum();
            current += (geom.k(p) - b * x[i]) * amp;
        }
    }

    Ok(PerturbedReport {
        dimension: dim,
        modes,
        p_star,
        grid_points: grid.n_points,
        perturbation_norm: couplings.iter().map(ModeCoupling::sup).sum(),
        enlarged_bounds: (elo, ehi),
        eigenvalues: found.into_iter().map(|(g, v)| (g / factor, v)).step_by(factor).collect(),
        shifts,
        max_shift,
        unperturbed_current,
        perturbed_current: current / retained,
        retained_norm_sq: retained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sharp(height: f64) -> ConfiningPotential {
        ConfiningPotential::Sharp { height, width: 1.0 }
    }

    fn coarse() -> SolverConfig {
        SolverConfig {
            resolution: 120.0,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn wavenumbers() {
        assert_eq!(mode_wavenumber(0, 1.0), 0.0);
        assert!((mode_wavenumber(3, 2.0 * std::f64::consts::PI) - 3.0).abs() < 1e-15);
        assert!((mode_wavenumber(-2, 1.0) + 4.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn geometry_rejects_bad_input() {
        assert!(CylinderGeometry::new(0.0, sharp(10.0), 1.0).is_err());
        assert!(CylinderGeometry::new(1.0, sharp(10.0), -1.0).is_err());
    }

    #[test]
    fn low_wall_is_rejected() {
        let geom = CylinderGeometry::new(1.0, sharp(150.0), 100.0).unwrap();
        let w = EnergyWindow::new(0, 1.2, 2.8, 100.0).unwrap();
        assert!(assemble_spectrum(&geom, 0, &w, &coarse(), 100).is_err());
    }

    #[test]
    fn free_line_hits_the_cap() {
        let geom = CylinderGeometry::new(1.0, ConfiningPotential::Free, 10.0).unwrap();
        let w = EnergyWindow::new(0, 1.2, 2.8, 10.0).unwrap();
        let e = assemble_spectrum(&geom, 0, &w, &coarse(), 6).unwrap_err();
        assert!(matches!(e, Error::ModeCap { cap: 6 }));
    }

    #[test]
    fn spectrum_symmetry_and_currents() {
        let b = 30.0;
        let geom = CylinderGeometry::new(2.0, sharp(2.0 * 2.8 * b), b).unwrap();
        let w = EnergyWindow::new(0, 1.2, 2.8, b).unwrap();
        let spec = assemble_spectrum(&geom, 1, &w, &coarse(), 200).unwrap();
        let p_star = spec.p_star.expect("window reached");
        assert!(!w.contains(spec.get(0, -p_star - 1).unwrap().omega));
        for (&(m, p), s) in &spec.entries {
            assert!(s.omega >= b * (1.0 - 1e-6));
            if p > 0 {
                let mirror = spec.get(m, -p).unwrap();
                assert!((s.omega - mirror.omega).abs() <= 1e-8 * s.omega);
                let (c, cm) = (eigenstate_current(&spec, m, p).unwrap(), eigenstate_current(&spec, m, -p).unwrap());
                assert!((c + cm).abs() <= 1e-8 * c.abs().max(1.0));
            }
        }
        assert!(eigenstate_current(&spec, 0, 0).unwrap().abs() < 1e-8);
        for (m, p) in spec.window_modes() {
            if p < 0 {
                assert!(eigenstate_current(&spec, m, p).unwrap() < 0.0);
            }
        }
        let sym = build_cylinder_packet(&spec, 0.0).unwrap();
        assert!(packet_current(&spec, &sym).unwrap().abs() < 1e-10);
        let (m, p) = spec.window_modes()[0];
        let one = CylinderPacket::one_mode(m, p);
        assert_eq!(packet_current(&spec, &one).unwrap(), eigenstate_current(&spec, m, p).unwrap());
        let left = build_cylinder_packet(&spec, f64::INFINITY).unwrap();
        assert!(left.coeffs.keys().all(|&(_, p)| p < 0));
        assert!(packet_current(&spec, &left).unwrap() < 0.0);
        assert!(packet_current(&spec, &CylinderPacket::one_mode(0, 0)).is_err());
    }

    #[test]
    fn current_is_half_the_slope() {
        let b = 30.0;
        let geom = CylinderGeometry::new(2.0, sharp(2.0 * 2.8 * b), b).unwrap();
        let w = EnergyWindow::new(0, 1.2, 2.8, b).unwrap();
        let spec = assemble_spectrum(&geom, 0, &w, &coarse(), 200).unwrap();
        let problem = FiberProblem::new(b, geom.wall, coarse()).unwrap();
        let (m, p) = spec.window_modes()[0];
        let s = spec.get(m, p).unwrap();
        let fd = slope_by_differences(&problem, m, s.k, 1e-3).unwrap();
        let c = eigenstate_current(&spec, m, p).unwrap();
        assert!((2.0 * c - fd).abs() < 1e-4 * fd.abs(), "{c} {fd}");
    }

    #[test]
    fn packet_normalization_and_asymmetry() {
        let modes = [(0, -3), (0, -2), (0, 2), (0, 3), (1, 0)];
        let pk = CylinderPacket::over_modes(&modes, 2.0).unwrap();
        let total: f64 = pk.coeffs.values().map(|b| b * b).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(!pk.coeffs.contains_key(&(1, 0)));
        let ratio = pk.coeffs[&(0, -2)].powi(2) / pk.coeffs[&(0, 2)].powi(2);
        assert!((ratio - 5.0).abs() < 1e-12);
        assert!(CylinderPacket::over_modes(&[(0, 1)], f64::INFINITY).is_err());
    }

    #[test]
    fn coupling_profile() {
        let c = ModeCoupling::bump(Harmonic::Cos, 1, 2.0, 0.5, 101);
        assert!((c.eval(0.0) - 2.0).abs() < 1e-12);
        assert_eq!(c.eval(0.7), 0.0);
        assert!(c.eval(0.5).abs() < 1e-12);
        assert!(c.validate(&sharp(10.0)).is_ok());
        let wide = ModeCoupling::bump(Harmonic::Cos, 1, 2.0, 0.8, 101);
        assert!(wide.validate(&sharp(10.0)).is_err());
        assert!(ModeCoupling::bump(Harmonic::Sin, 0, 1.0, 0.5, 11).validate(&sharp(10.0)).is_err());
    }

    fn small_case() -> (CylinderGeometry, EnergyWindow, PerturbedSettings) {
        let b = 30.0;
        let geom = CylinderGeometry::new(2.0, sharp(2.0 * 2.8 * b), b).unwrap();
        let w = EnergyWindow::new(0, 1.2, 2.8, b).unwrap();
        let settings = PerturbedSettings {
            grid_points: 121,
            ..PerturbedSettings::default()
        };
        (geom, w, settings)
    }

    #[test]
    fn unperturbed_solve_is_block_diagonal() {
        let (geom, w, settings) = small_case();
        let r = perturbed_cylinder_project(&geom, &[], &w, &settings, f64::INFINITY).unwrap();
        assert!(!r.shifts.is_empty());
        for s in &r.shifts {
            assert!((s.perturbed - s.unperturbed).abs() <= 1e-8 * s.unperturbed, "{s:?}");
        }
        assert!((r.retained_norm_sq - 1.0).abs() < 1e-8);
        assert!((r.perturbed_current - r.unperturbed_current).abs() <= 1e-8 * r.unperturbed_current.abs());
    }

    #[test]
    fn cosine_and_sine_couplings_respect_weyl() {
        let (geom, w, settings) = small_case();
        let eps = 0.05 * geom.field;
        for h in [Harmonic::Cos, Harmonic::Sin] {
            let c = ModeCoupling::bump(h, 1, eps, 0.5, 201);
            let r = perturbed_cylinder_project(&geom, &[c], &w, &settings, f64::INFINITY).unwrap();
            assert!(r.max_shift <= eps, "{h:?}: {}", r.max_shift);
            assert!(r.perturbed_current < 0.0);
            assert!(r.perturbed_current.abs() >= 0.5 * r.unperturbed_current.abs());
        }
    }

    #[test]
    fn sine_matches_shifted_cosine() {
        // sin(θ) is cos(θ − π/2): a translation in y, so the spectra coincide
        let (geom, w, settings) = small_case();
        let eps = 0.2 * geom.field;
        let cos = perturbed_cylinder_project(&geom, &[ModeCoupling::bump(Harmonic::Cos, 1, eps, 0.5, 201)], &w, &settings, 0.0).unwrap();
        let sin = perturbed_cylinder_project(&geom, &[ModeCoupling::bump(Harmonic::Sin, 1, eps, 0.5, 201)], &w, &settings, 0.0).unwrap();
        assert_eq!(cos.eigenvalues.len(), sin.eigenvalues.len());
        for (a, b) in cos.eigenvalues.iter().zip(&sin.eigenvalues) {
            assert_eq!(a.0, b.0);
            assert!((a.1 - b.1).abs() < 1e-8 * a.1);
        }
    }

    #[test]
    fn dimension_cap_is_enforced() {
        let (geom, w, mut settings) = small_case();
        settings.dimension_cap = 500;
        let e = perturbed_cylinder_project(&geom, &[], &w, &settings, 1.0).unwrap_err();
        assert!(matches!(e, Error::DimensionCap { .. }));
    }
}
