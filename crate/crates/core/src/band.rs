//! Symmetric band matrices: Givens reduction to tridiagonal form (eigenvalues only)
//! and shifted banded LU for inverse iteration.

use crate::error::{invalid, Result};
use crate::tridiag::{orthogonalize, start_vector, SymTridiagonal};

/// Lower-triangle band storage with one spare diagonal for the bulge of the reduction.
#[derive(Clone, Debug)]
pub struct SymBand {
    n: usize,
    bw: usize,
    width: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        let width = bandwidth + 2;
        Self {
            n,
            bw: bandwidth,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        r * self.width + (r - c)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            return 0.0;
        }
        self.data[self.at(i, j)]
    }

    /// Adds `v` to entry (i, j) and its mirror.
    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        if i >= self.n || j >= self.n || i.abs_diff(j) > self.bw {
            return Err(invalid(format!("entry ({i}, {j}) outside a band of width {}", self.bw)));
        }
        let idx = self.at(i, j);
        self.data[idx] += v;
        Ok(())
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            out[i] += self.data[i * self.width] * v[i];
            for d in 1..=self.bw.min(i) {
                let a = self.data[i * self.width + d];
                if a != 0.0 {
                    out[i] += a * v[i - d];
                    out[i - d] += a * v[i];
                }
            }
        }
        out
    }

    /// Orthogonally similar tridiagonal matrix (Schwarz's Givens bulge chasing).
    pub fn to_tridiagonal(&self) -> SymTridiagonal {
        let mut a = self.clone();
        let n = a.n;
        for m in (2..=a.bw).rev() {
            for col in 0..n.saturating_sub(m) {
                // zero (col + m, col), then chase the bulge down the band
                let (mut q, mut c0) = (col + m, col);
                while q < n {
                    if !a.rotate_out(q, c0, m) {
                        break;
                    }
                    c0 = q - 1;
                    q += m;
                }
            }
        }
        let diag = (0..n).map(|i| a.data[i * a.width]).collect();
        let off = (1..n).map(|i| a.data[i * a.width + 1]).collect();
        SymTridiagonal::new(diag, off).expect("non-empty band matrix")
    }

    /// Rotation in the plane (q−1, q) annihilating entry (q, c0) at current bandwidth m.
    /// Returns false when the entry was already zero.
    fn rotate_out(&mut self, q: usize, c0: usize, m: usize) -> bool {
        let w = self.width;
        let p = q - 1;
        let target = self.data[q * w + (q - c0)];
        if target == 0.0 {
            return false;
        }
        let pivot = self.data[p * w + (p - c0)];
        let r = pivot.hypot(target);
        let (c, s) = (pivot / r, target / r);
        let lo = (q as isize - m as isize - 1).max(0) as usize;
        let hi = (q + m).min(self.n - 1);
        // columns left of the pair
        for j in lo..p {
            let ip = p * w + (p - j);
            let iq = q * w + (q - j);
            let (x, y) = (self.data[ip], self.data[iq]);
            self.data[ip] = c * x + s * y;
            self.data[iq] = -s * x + c * y;
        }
        // the 2x2 block
        let (app, aqq, apq) = (self.data[p * w], self.data[q * w], self.data[q * w + 1]);
        self.data[p * w] = c * c * app + 2.0 * c * s * apq + s * s * aqq;
        self.data[q * w] = s * s * app - 2.0 * c * s * apq + c * c * aqq;
        self.data[q * w + 1] = c * s * (aqq - app) + (c * c - s * s) * apq;
        // rows below the pair
        for j in q + 1..=hi {
            let ip = j * w + (j - p);
            let iq = j * w + (j - q);
            let (x, y) = (self.data[ip], self.data[iq]);
            self.data[ip] = c * x + s * y;
            self.data[iq] = -s * x + c * y;
        }
        self.data[q * w + (q - c0)] = 0.0;
        true
    }

    /// Unit eigenvector for the eigenvalue nearest `shift`, orthogonal to `against`.
    pub fn inverse_iteration(
        &self,
        shift: f64,
        against: &[&[f64]],
        max_iter: usize,
        res_tol: f64,
        seed: u64,
    ) -> Option<Vec<f64>> {
        let lu = BandLu::factor(self, shift);
        let mut x = start_vector(self.n, seed);
        orthogonalize(&mut x, against);
        unit(&mut x)?;
        for it in 0..max_iter.max(1) {
            let mut y = x.clone();
            lu.solve(&mut y);
            orthogonalize(&mut y, against);
            let growth = unit(&mut y)?;
            x = y;
            if it >= 1 && 1.0 / growth <= res_tol {
                return Some(x);
            }
        }
        (self.residual(&x, shift) <= res_tol).then_some(x)
    }

    pub fn residual(&self, v: &[f64], lambda: f64) -> f64 {
        self.mul_vec(v)
            .iter()
            .zip(v)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// max_i Σ_j |a_ij|
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j).abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

fn unit(v: &mut [f64]) -> Option<f64> {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return None;
    }
    v.iter_mut().for_each(|a| *a /= norm);
    Some(norm)
}

/// Partial-pivoting LU of A − σI for a band matrix. Row at position i keeps
/// columns i−b ..= i+2b (pivoting widens the upper band to 2b).
struct BandLu {
    n: usize,
    b: usize,
    width: usize,
    rows: Vec<f64>,
    lower: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    #[inline]
    fn idx(&self, row: usize, col: usize) -> usize {
        row * self.width + (col + self.b - row)
    }

    fn factor(a: &SymBand, shift: f64) -> Self {
        let (n, b) = (a.n, a.bw);
        let width = 3 * b + 1;
        let mut lu = Self {
            n,
            b,
            width,
            rows: vec![0.0; n * width],
            lower: vec![0.0; n * b.max(1)],
            pivots: vec![0; n],
        };
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let hi = (i + b).min(n - 1);
            for j in lo..=hi {
                let v = a.get(i, j) - if i == j { shift } else { 0.0 };
                let k = lu.idx(i, j);
                lu.rows[k] = v;
            }
        }
        let tiny = f64::EPSILON * a.norm_inf().max(1.0);
        for k in 0..n {
            let last_row = (k + b).min(n - 1);
            let last_col = (k + 2 * b).min(n - 1);
            let mut piv = k;
            let mut best = lu.rows[lu.idx(k, k)].abs();
            for r in k + 1..=last_row {
                let v = lu.rows[lu.idx(r, k)].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            lu.pivots[k] = piv;
            if piv != k {
                for c in k..=last_col {
                    let (i1, i2) = (lu.idx(k, c), lu.idx(piv, c));
                    lu.rows.swap(i1, i2);
                }
            }
            let dk = lu.idx(k, k);
            if lu.rows[dk].abs() < tiny {
                lu.rows[dk] = if lu.rows[dk] < 0.0 { -tiny } else { tiny };
            }
            let d = lu.rows[dk];
            for r in k + 1..=last_row {
                let ir = lu.idx(r, k);
                let l = lu.rows[ir] / d;
                lu.rows[ir] = 0.0;
                lu.lower[k * b.max(1) + (r - k - 1)] = l;
                if l != 0.0 {
                    for c in k + 1..=last_col {
                        let src = lu.rows[lu.idx(k, c)];
                        let dst = lu.idx(r, c);
                        lu.rows[dst] -= l * src;
                    }
                }
            }
        }
        lu
    }

    fn solve(&self, x: &mut [f64]) {
        let (n, b) = (self.n, self.b);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for r in k + 1..=(k + b).min(n - 1) {
                x[r] -= self.lower[k * b.max(1) + (r - k - 1)] * xk;
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for c in k + 1..=(k + 2 * b).min(n - 1) {
                s -= self.rows[self.idx(k, c)] * x[c];
            }
            x[k] = s / self.rows[self.idx(k, k)];
        }
    }
}
