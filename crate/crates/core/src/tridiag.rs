//! Symmetric tridiagonal eigenproblems: Sturm-count bisection for eigenvalues and
//! pivoted inverse iteration for eigenvectors.

use crate::error::{invalid, Result};

#[derive(Clone, Debug)]
pub struct SymTridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
    off_sq: Vec<f64>,
    pivmin: f64,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(invalid("empty tridiagonal matrix"));
        }
        if off.len() + 1 != diag.len() {
            return Err(invalid(format!(
                "off-diagonal has {} entries for a {}x{} matrix",
                off.len(),
                diag.len(),
                diag.len()
            )));
        }
        let off_sq: Vec<f64> = off.iter().map(|e| e * e).collect();
        let max_sq = off_sq.iter().copied().fold(1.0, f64::max);
        Ok(Self {
            diag,
            off,
            off_sq,
            pivmin: f64::MIN_POSITIVE * max_sq,
        })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off(&self) -> &[f64] {
        &self.off
    }

    /// Gershgorin interval containing the whole spectrum.
    #[must_use]
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    pub fn norm_inf(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    /// Number of eigenvalues strictly below `x`.
    #[must_use]
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q.abs() < self.pivmin {
            q = -self.pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.diag.len() {
            q = self.diag[i] - x - self.off_sq[i - 1] / q;
            if q.abs() < self.pivmin {
                q = -self.pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Eigenvalues with global indices `first..first + count`, each to absolute tolerance `tol`.
    pub fn eigenvalues_by_index(&self, first: usize, count: usize, tol: f64) -> Vec<f64> {
        let n = self.len();
        let count = count.min(n.saturating_sub(first));
        let (glo, ghi) = self.gershgorin();
        let pad = f64::EPSILON * (glo.abs().max(ghi.abs()) + 1.0) * 4.0;
        let mut lower = vec![glo - pad; count];
        let mut upper = vec![ghi + pad; count];
        let mut out = Vec::with_capacity(count);
        for j in 0..count {
            let target = first + j;
            let (mut lo, mut hi) = (lower[j], upper[j]);
            if j > 0 {
                lo = lo.max(out[j - 1]).min(hi);
            }
            // Gershgorin tops are ~4/h² on fine grids; walk up from below instead
            let mut step = if j > 0 && out[j - 1] > glo {
                (out[j - 1] - glo).max(tol)
            } else {
                (lo.abs() * 0.5).max(1.0)
            };
            while lo + step < hi {
                let probe = lo + step;
                if self.count_below(probe) > target {
                    hi = probe;
                    break;
                }
                lo = probe;
                step *= 2.0;
            }
            for _ in 0..256 {
                let eff = tol.max(2.0 * f64::EPSILON * lo.abs().max(hi.abs()));
                if hi - lo <= eff {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let c = self.count_below(mid);
                // tighten brackets of the remaining eigenvalues as a side effect
                for (l, (lw, up)) in lower.iter_mut().zip(upper.iter_mut()).enumerate().skip(j + 1) {
                    if c > first + l {
                        *up = up.min(mid);
                    } else {
                        *lw = lw.max(mid);
                    }
                }
                if c > target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        out
    }

    /// The `count` smallest eigenvalues.
    pub fn lowest_eigenvalues(&self, count: usize, tol: f64) -> Vec<f64> {
        self.eigenvalues_by_index(0, count, tol)
    }

    /// Eigenvalues in `[lo, hi)` with their global indices.
    pub fn eigenvalues_in(&self, lo: f64, hi: f64, tol: f64) -> Vec<(usize, f64)> {
        let first = self.count_below(lo);
        let last = self.count_below(hi);
        self.eigenvalues_by_index(first, last.saturating_sub(first), tol)
            .into_iter()
            .enumerate()
            .map(|(i, v)| (first + i, v))
            .collect()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s += self.off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * v[i + 1];
                }
                s
            })
            .collect()
    }

    /// Unit eigenvector for the eigenvalue nearest `shift`, orthogonal to `against`.
    ///
    /// Stops once the residual bound drops below `res_tol`; returns `None` if that
    /// does not happen within `max_iter` steps.
    pub fn inverse_iteration(
        &self,
        shift: f64,
        against: &[&[f64]],
        max_iter: usize,
        res_tol: f64,
        seed: u64,
    ) -> Option<Vec<f64>> {
        let n = self.len();
        let lu = ShiftedLu::factor(self, shift);
        let mut x = start_vector(n, seed);
        orthogonalize(&mut x, against);
        normalize(&mut x)?;
        let target = res_tol.max(64.0 * f64::EPSILON * self.norm_inf().max(1.0));
        for it in 0..max_iter.max(1) {
            let mut y = x.clone();
            lu.solve(&mut y);
            orthogonalize(&mut y, against);
            let growth = normalize(&mut y)?;
            x = y;
            // ‖(T - σ)x‖ ≤ 1/growth
            if it >= 1 && 1.0 / growth <= target {
                return Some(x);
            }
        }
        (residual(self, &x, shift) <= target).then_some(x)
    }
}

/// Euclidean residual ‖(T - λ)v‖.
pub fn residual(t: &SymTridiagonal, v: &[f64], lambda: f64) -> f64 {
    t.mul_vec(v)
        .iter()
        .zip(v)
        .map(|(a, b)| (a - lambda * b).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn normalize(v: &mut [f64]) -> Option<f64> {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return None;
    }
    v.iter_mut().for_each(|a| *a /= norm);
    Some(norm)
}

pub(crate) fn orthogonalize(v: &mut [f64], against: &[&[f64]]) {
    for _ in 0..2 {
        for u in against {
            let d: f64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u.iter()).for_each(|(a, b)| *a -= d * b);
        }
    }
}

/// Deterministic pseudo-random start vector with entries in [0.5, 1.5).
pub(crate) fn start_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x2545_F491_4F6C_DD1D);
    (0..n)
        .map(|_| {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            0.5 + (z >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

/// LU factorization of T - σI with partial pivoting.
struct ShiftedLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swap: Vec<bool>,
}

impl ShiftedLu {
    fn factor(t: &SymTridiagonal, shift: f64) -> Self {
        let n = t.len();
        let mut d: Vec<f64> = t.diag.iter().map(|v| v - shift).collect();
        let mut dl = t.off.clone();
        let mut du = t.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swap = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swap[i] = true;
            }
        }
        let tiny = f64::EPSILON * t.norm_inf().max(1.0);
        for v in d.iter_mut() {
            if v.abs() < tiny {
                *v = if *v < 0.0 { -tiny } else { tiny };
            }
        }
        Self {
            dl,
            d,
            du,
            du2,
            swap,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n.saturating_sub(1) {
            if self.swap[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}
