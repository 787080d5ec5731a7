//! Finite-difference fibers h₀(k) = p_x² + (k − Bx)² + V₀(x) on a Dirichlet box.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::potentials::ConfiningPotential;
use crate::tridiag::{self, SymTridiagonal};

/// Discretization and solver knobs shared by every fiber solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Grid nodes per magnetic length.
    pub resolution: f64,
    /// Box padding beyond the classical region, in magnetic lengths.
    pub pad_sigmas: f64,
    pub max_points: usize,
    /// Absolute bisection tolerance on eigenvalues.
    pub eigen_tol: f64,
    pub inverse_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            resolution: 600.0,
            pad_sigmas: 8.0,
            max_points: 200_001,
            eigen_tol: 1e-10,
            inverse_iterations: 5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution >= 2.0 && self.resolution.is_finite()) {
            return Err(invalid(format!("resolution {} must be >= 2", self.resolution)));
        }
        if !(self.pad_sigmas > 0.0 && self.pad_sigmas.is_finite()) {
            return Err(invalid("pad_sigmas must be positive"));
        }
        if self.max_points < 3 {
            return Err(invalid("max_points must be at least 3"));
        }
        if !(self.eigen_tol > 0.0) {
            return Err(invalid("eigen_tol must be positive"));
        }
        if self.inverse_iterations == 0 {
            return Err(invalid("inverse_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Uniform grid. Lattice grids place node i at `(first + i) * h`, so boxes built for
/// `k` and `-k` are exact mirror images.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub spacing: f64,
    anchor: Option<i64>,
}

impl Grid {
    pub fn uniform(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if n_points < 3 || !(x_min < x_max) {
            return Err(invalid(format!("bad grid [{x_min}, {x_max}] with {n_points} points")));
        }
        Ok(Self {
            x_min,
            x_max,
            n_points,
            spacing: (x_max - x_min) / (n_points - 1) as f64,
            anchor: None,
        })
    }

    pub fn lattice(first: i64, n_points: usize, spacing: f64) -> Result<Self> {
        if n_points < 3 || !(spacing > 0.0) {
            return Err(invalid(format!("bad lattice grid: {n_points} points, spacing {spacing}")));
        }
        Ok(Self {
            x_min: first as f64 * spacing,
            x_max: (first + n_points as i64 - 1) as f64 * spacing,
            n_points,
            spacing,
            anchor: Some(first),
        })
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        match self.anchor {
            Some(first) => (first + i as i64) as f64 * self.spacing,
            None => self.x_min + i as f64 * self.spacing,
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n_points).map(|i| f(self.x(i))).collect()
    }

    /// Index of the node sitting exactly at `x`, if any.
    pub fn node_at(&self, x: f64) -> Option<usize> {
        let t = ((x - self.x_min) / self.spacing).round();
        if t < 0.0 || t >= self.n_points as f64 {
            return None;
        }
        let i = t as usize;
        (self.x(i) == x).then_some(i)
    }

    pub(crate) fn check(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.n_points {
            return Err(Error::GridMismatch {
                expected: self.n_points,
                got: f.len(),
            });
        }
        Ok(())
    }
}

/// Box for the fiber at wave number `k`: covers the strip and the orbit center `k/B`,
/// padded by `pad_sigmas` magnetic lengths, and pushed out until V_eff ≥ 4·max_energy at both ends.
pub fn build_grid(
    field: f64,
    k: f64,
    pot: &ConfiningPotential,
    max_energy: f64,
    cfg: &SolverConfig,
) -> Result<Grid> {
    if !(field > 0.0) || !(max_energy > 0.0) {
        return Err(invalid(format!("build_grid needs B > 0 and max_energy > 0 (B={field}, E={max_energy})")));
    }
    let half = pot.half_width();
    let center = k / field;
    let mut w = cfg.pad_sigmas / field.sqrt();
    if let ConfiningPotential::Sharp { height, .. } = *pot {
        if height > max_energy {
            w += 1.0 / height.sqrt();
        }
    }
    let mut lo = (-half).min(center) - w;
    let mut hi = half.max(center) + w;
    let veff = |x: f64| (field * x - k).powi(2) + pot.evaluate(x);
    let need = 4.0 * max_energy;
    if veff(lo) < need {
        let rest = (need - pot.evaluate(lo)).max(0.0).sqrt();
        lo -= ((rest - (k - field * lo)) / field).max(0.0) * 1.0001;
    }
    if veff(hi) < need {
        let rest = (need - pot.evaluate(hi)).max(0.0).sqrt();
        hi += ((rest - (field * hi - k)) / field).max(0.0) * 1.0001;
    }

    let ell = 1.0 / pot.effective_field(field).sqrt();
    let target = ell / cfg.resolution;
    let h = if half > 0.0 {
        half / (half / target).ceil()
    } else {
        target
    };
    let first = (lo / h).floor() as i64;
    let mut last = (hi / h).ceil() as i64;
    if (last - first) % 2 == 1 {
        last += 1;
    }
    let needed = (last - first + 1) as usize;
    if needed > cfg.max_points {
        return Err(Error::GridTooLarge {
            needed,
            cap: cfg.max_points,
        });
    }
    Grid::lattice(first, needed, h)
}

#[derive(Clone, Debug)]
pub struct FiberHamiltonian {
    pub field: f64,
    pub k: f64,
    pub potential: ConfiningPotential,
    pub grid: Grid,
    /// V_eff(x_i; k) = (B·x_i − k)² + V₀(x_i) on every node, box ends included.
    pub effective: Vec<f64>,
}

impl FiberHamiltonian {
    pub fn new(field: f64, k: f64, potential: ConfiningPotential, grid: Grid) -> Self {
        let effective = grid.sample(|x| (field * x - k).powi(2) + potential.evaluate(x));
        Self {
            field,
            k,
            potential,
            grid,
            effective,
        }
    }

    /// Interior-node matrix with Dirichlet ends: diagonal 2/h² + V_eff, off-diagonal −1/h².
    pub fn assemble(&self) -> SymTridiagonal {
        let h2 = self.grid.spacing * self.grid.spacing;
        let n = self.grid.n_points - 2;
        let diag = self.effective[1..=n].iter().map(|v| 2.0 / h2 + v).collect();
        let off = vec![-1.0 / h2; n - 1];
        SymTridiagonal::new(diag, off).expect("grid has at least one interior node")
    }

    /// Whether the box ends sit at V_eff ≥ 4·energy.
    pub fn box_holds(&self, energy: f64) -> bool {
        let cap = 4.0 * energy;
        self.effective[0] >= cap && self.effective[self.effective.len() - 1] >= cap
    }
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub band: usize,
    pub omega: f64,
    /// Samples on every grid node; the Dirichlet ends hold zero.
    pub phi: Vec<f64>,
    /// ‖h₀φ − ωφ‖ in the grid L² norm.
    pub residual: f64,
}

/// The `count` lowest eigenpairs of an assembled fiber matrix on `grid`.
pub fn eigen_lowest(
    tri: &SymTridiagonal,
    grid: &Grid,
    count: usize,
    cfg: &SolverConfig,
) -> Result<Vec<EigenPair>> {
    if count == 0 || count > tri.len() {
        return Err(invalid(format!("cannot extract {count} eigenpairs from a {0}x{0} matrix", tri.len())));
    }
    if tri.len() + 2 != grid.n_points {
        return Err(Error::GridMismatch {
            expected: grid.n_points - 2,
            got: tri.len(),
        });
    }
    let values = tri.lowest_eigenvalues(count, cfg.eigen_tol);
    let res_tol = 10.0 * cfg.eigen_tol;
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut pairs = Vec::with_capacity(count);
    for (band, &omega) in values.iter().enumerate() {
        let refs: Vec<&[f64]> = vectors.iter().map(Vec::as_slice).collect();
        let shifts = [0.0, 1.0, -1.0, 10.0, -10.0].map(|m| omega + m * cfg.eigen_tol);
        let v = shifts
            .iter()
            .enumerate()
            .find_map(|(attempt, &s)| {
                tri.inverse_iteration(s, &refs, cfg.inverse_iterations, res_tol, (band * 8 + attempt) as u64)
            })
            .ok_or(Error::NonConvergence { band })?;
        let residual = tridiag::residual(tri, &v, omega);
        let mut phi = Vec::with_capacity(grid.n_points);
        phi.push(0.0);
        phi.extend(v.iter().map(|a| a / grid.spacing.sqrt()));
        phi.push(0.0);
        normalize_and_fix_sign(grid, &mut phi);
        vectors.push(v);
        pairs.push(EigenPair {
            band,
            omega,
            phi,
            residual,
        });
    }
    Ok(pairs)
}

fn normalize_and_fix_sign(grid: &Grid, phi: &mut [f64]) {
    let ones = vec![1.0; phi.len()];
    let norm = expectation(grid, phi, &ones).expect("same grid").sqrt();
    let mut peak = 0;
    for (i, v) in phi.iter().enumerate() {
        if v.abs() > phi[peak].abs() {
            peak = i;
        }
    }
    let s = if phi[peak] < 0.0 { -1.0 / norm } else { 1.0 / norm };
    phi.iter_mut().for_each(|v| *v *= s);
}

/// Eigenpairs of one fiber together with the grid they live on.
#[derive(Clone, Debug)]
pub struct FiberSolution {
    pub field: f64,
    pub k: f64,
    pub grid: Grid,
    pub pairs: Vec<EigenPair>,
}

/// Builds the box, solves, and enlarges the box if the computed top eigenvalue
/// turns out to violate the V_eff ≥ 4E margin.
pub fn solve_fiber(
    field: f64,
    k: f64,
    pot: &ConfiningPotential,
    count: usize,
    cfg: &SolverConfig,
) -> Result<FiberSolution> {
    let b_eff = pot.effective_field(field);
    let mut energy = (2 * count + 1) as f64 * b_eff + pot.evaluate(k / field).min(1e300);
    for _ in 0..4 {
        let grid = build_grid(field, k, pot, energy, cfg)?;
        let ham = FiberHamiltonian::new(field, k, *pot, grid);
        let pairs = eigen_lowest(&ham.assemble(), &ham.grid, count, cfg)?;
        let top = pairs.last().map_or(energy, |p| p.omega);
        if ham.box_holds(top) {
            return Ok(FiberSolution {
                field,
                k,
                grid: ham.grid,
                pairs,
            });
        }
        energy = 1.5 * top.max(energy);
    }
    Err(invalid(format!("fiber box failed to contain band {} at k = {k}", count - 1)))
}

/// Trapezoid value of ∫ weight·φ² dx, summed left to right.
pub fn expectation(grid: &Grid, phi: &[f64], weight: &[f64]) -> Result<f64> {
    grid.check(phi)?;
    grid.check(weight)?;
    let n = phi.len();
    let mut s = 0.5 * (weight[0] * phi[0] * phi[0] + weight[n - 1] * phi[n - 1] * phi[n - 1]);
    for i in 1..n - 1 {
        s += weight[i] * phi[i] * phi[i];
    }
    Ok(s * grid.spacing)
}

/// Same as [`expectation`] with the weight given as a function of x.
pub fn expectation_with(grid: &Grid, phi: &[f64], weight: impl Fn(f64) -> f64) -> Result<f64> {
    expectation(grid, phi, &grid.sample(weight))
}

/// Cubic interpolation of φ at `x` from the four nearest nodes.
pub fn trace_value(grid: &Grid, phi: &[f64], x: f64) -> Result<f64> {
    grid.check(phi)?;
    if !(x >= grid.x_min && x <= grid.x_max) {
        return Err(Error::OutsideGrid {
            x,
            x_min: grid.x_min,
            x_max: grid.x_max,
        });
    }
    if let Some(i) = grid.node_at(x) {
        return Ok(phi[i]);
    }
    let n = grid.n_points;
    let i = (((x - grid.x_min) / grid.spacing).floor() as usize).min(n - 2);
    let start = i.saturating_sub(1).min(n - 4);
    let xs: Vec<f64> = (start..start + 4).map(|j| grid.x(j)).collect();
    let mut value = 0.0;
    for a in 0..4 {
        let mut w = 1.0;
        for b in 0..4 {
            if a != b {
                w *= (x - xs[b]) / (xs[a] - xs[b]);
            }
        }
        value += w * phi[start + a];
    }
    Ok(value)
}
