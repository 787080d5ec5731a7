//! Closed forms: Hermite functions, Landau oscillator states and the parabolic channel.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{invalid, Result};

/// Physicists' Hermite polynomial by the three-term recurrence.
#[must_use]
pub fn hermite(m: usize, u: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 2.0 * u);
    if m == 0 {
        return prev;
    }
    for j in 1..m {
        let next = 2.0 * u * cur - 2.0 * j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// 2^m · m!
fn hermite_norm_sq(m: usize) -> f64 {
    (1..=m).fold(1.0, |acc, j| acc * 2.0 * j as f64)
}

/// Normalized Landau oscillator state centred at k/B.
#[must_use]
pub fn landau_psi(m: usize, x: f64, k: f64, field: f64) -> f64 {
    let d = x - k / field;
    let u = field.sqrt() * d;
    (field / PI).powf(0.25) / hermite_norm_sq(m).sqrt() * hermite(m, u) * (-0.5 * field * d * d).exp()
}

/// Strip with confinement g²x², solvable in closed form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ParabolicModel {
    pub field: f64,
    pub stiffness: f64,
    /// √(B² + g²)
    pub modified_field: f64,
}

impl ParabolicModel {
    pub fn new(field: f64, stiffness: f64) -> Result<Self> {
        if !(field > 0.0 && stiffness > 0.0) {
            return Err(invalid(format!("parabolic model needs B > 0, g > 0 (got {field}, {stiffness})")));
        }
        Ok(Self {
            field,
            stiffness,
            modified_field: (field * field + stiffness * stiffness).sqrt(),
        })
    }

    /// Curvature factor (g/B_g)² of every band.
    fn curvature(&self) -> f64 {
        (self.stiffness / self.modified_field).powi(2)
    }

    #[must_use]
    pub fn omega(&self, j: usize, k: f64) -> f64 {
        (2 * j + 1) as f64 * self.modified_field + self.curvature() * k * k
    }

    /// dω_j/dk; the same for every band.
    #[must_use]
    pub fn omega_slope(&self, k: f64) -> f64 {
        2.0 * self.curvature() * k
    }

    /// Unit-norm fiber eigenfunction, centred at (B/B_g²)k with width 1/√B_g.
    #[must_use]
    pub fn phi(&self, j: usize, x: f64, k: f64) -> f64 {
        let bg = self.modified_field;
        let d = x - self.field / (bg * bg) * k;
        (bg / PI).powf(0.25) / hermite_norm_sq(j).sqrt() * hermite(j, bg.sqrt() * d) * (-0.5 * bg * d * d).exp()
    }

    /// Positive wave number where band `j` meets the level (2n + endpoint)·B_g.
    pub fn kinv(&self, j: usize, n: usize, endpoint: f64) -> Result<f64> {
        if !(endpoint > 1.0 && endpoint < 3.0) {
            return Err(invalid(format!("window endpoint {endpoint} outside (1, 3)")));
        }
        if j > n {
            return Err(invalid(format!("band {j} lies above level {n}")));
        }
        let bg = self.modified_field;
        Ok(bg.powf(1.5) / self.stiffness * (2.0 * (n - j) as f64 + endpoint - 1.0).sqrt())
    }

    /// Negative-k part of the inverse image of [(2n+a)B_g, (2n+c)B_g] under band `j`.
    pub fn minus_interval(&self, j: usize, n: usize, a: f64, c: f64) -> Result<(f64, f64)> {
        Ok((-self.kinv(j, n, c)?, -self.kinv(j, n, a)?))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HermiteConstants {
    /// sup_u H_m(u) e^{−u²/2}
    pub sup_weighted: Vec<f64>,
    /// (Σ_{m ≤ n} sup_weighted[m]² / (2^m m!))^{1/2}, indexed by n
    pub aggregate: Vec<f64>,
    /// sup_u H_m(u) e^{−u²/4}
    pub sup_quarter_weighted: Vec<f64>,
}

pub fn hermite_constants(n_max: usize) -> HermiteConstants {
    let sup_weighted: Vec<f64> = (0..=n_max).map(|m| weighted_sup(m, 0.5)).collect();
    let sup_quarter_weighted = (0..=n_max).map(|m| weighted_sup(m, 0.25)).collect();
    let mut acc = 0.0;
    let aggregate = sup_weighted
        .iter()
        .enumerate()
        .map(|(m, s)| {
            acc += s * s / hermite_norm_sq(m);
            acc.sqrt()
        })
        .collect();
    HermiteConstants {
        sup_weighted,
        aggregate,
        sup_quarter_weighted,
    }
}

/// sup over ℝ of H_m(u)·e^{−rate·u²}. On u ≥ 0 this is the max of f for even m
/// and of |f| for odd m, since odd f mirrors with a sign flip.
fn weighted_sup(m: usize, rate: f64) -> f64 {
    let f = |u: f64| {
        let v = hermite(m, u) * (-rate * u * u).exp();
        if m % 2 == 1 {
            v.abs()
        } else {
            v
        }
    };
    let top = 2.0 * ((2 * m + 1) as f64).sqrt() + 4.0;
    let step = 1e-3;
    let steps = (top / step).ceil() as usize;
    let (mut best_i, mut best) = (0, f(0.0));
    for i in 1..=steps {
        let v = f(i as f64 * step);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let (mut lo, mut hi) = ((best_i as f64 - 1.0).max(0.0) * step, (best_i + 1) as f64 * step);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-12 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        }
    }
    best.max(f(0.5 * (lo + hi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model() -> ParabolicModel {
        ParabolicModel::new(3.0, 4.0).unwrap()
    }

    fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * f(lo + i as f64 * h)
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn hermite_values() {
        assert_eq!(hermite(0, 7.3), 1.0);
        assert_eq!(hermite(1, 2.0), 4.0);
        assert_eq!(hermite(3, 1.0), -4.0);
        for u in [-1.3f64, 0.2, 2.7] {
            let h4 = 16.0 * u.powi(4) - 48.0 * u * u + 12.0;
            assert!((hermite(4, u) - h4).abs() < 1e-10 * h4.abs().max(1.0));
        }
    }

    #[test]
    fn landau_states() {
        let (b, k) = (2.5, 1.7);
        assert!((landau_psi(0, k / b, k, b) - (b / PI).powf(0.25)).abs() < 1e-15);
        assert_eq!(landau_psi(1, k / b, k, b), 0.0);
        for m in 0..5 {
            let norm = integrate(|x| landau_psi(m, x, k, b).powi(2), -10.0, 12.0, 20000);
            assert!((norm - 1.0).abs() < 1e-10, "m={m} norm {norm}");
        }
    }

    #[test]
    fn parabolic_closed_forms() {
        let p = model();
        assert_eq!(p.modified_field, 5.0);
        assert!((p.omega(0, 0.0) - 5.0).abs() < 1e-15);
        assert!((p.omega(1, 5.0) - 31.0).abs() < 1e-12);
        assert!((p.phi(0, 3.0 / 25.0 * 2.0, 2.0) - (5.0 / PI).powf(0.25)).abs() < 1e-15);
        assert_eq!(p.phi(1, 3.0 / 25.0 * 2.0, 2.0), 0.0);
        for j in 0..4 {
            let norm = integrate(|x| p.phi(j, x, -1.3).powi(2), -8.0, 8.0, 20000);
            assert!((norm - 1.0).abs() < 1e-10);
        }
        let k0 = p.kinv(0, 0, 1.5).unwrap();
        assert!((k0 - 1.97642).abs() < 1e-5);
        assert!((p.omega(0, -k0) - 7.5).abs() < 1e-12);
        let (lo, hi) = p.minus_interval(0, 0, 1.5, 2.5).unwrap();
        assert!((lo + 3.423).abs() < 1e-3 && (hi + 1.976).abs() < 1e-3);
        assert!(p.kinv(0, 0, 1.0 + 1e-14).unwrap() < 1e-6);
        assert!(p.kinv(0, 0, 3.0).is_err());
        assert!(p.kinv(2, 1, 1.5).is_err());
    }

    #[test]
    fn expectation_of_current_density() {
        // ∫ (k − Bx) φ₀² dx = (g/B_g)² k
        let p = model();
        let k = -2.0;
        let v = integrate(|x| (k - 3.0 * x) * p.phi(0, x, k).powi(2), -8.0, 8.0, 40000);
        assert!((v - 16.0 / 25.0 * k).abs() < 1e-10);
        assert!((p.omega_slope(-2.0) + 2.56).abs() < 1e-12);
    }

    #[test]
    fn hermite_sup_constants() {
        let c = hermite_constants(4);
        assert!((c.sup_weighted[0] - 1.0).abs() < 1e-12);
        assert!((c.sup_weighted[1] - 2.0 * (-0.5f64).exp()).abs() < 1e-10);
        assert!((c.aggregate[0] - 1.0).abs() < 1e-12);
        assert!((c.sup_quarter_weighted[1] - 2.0 * 2f64.sqrt() * (-0.5f64).exp()).abs() < 1e-10);
        assert!(c.sup_weighted.iter().chain(&c.sup_quarter_weighted).all(|&v| v > 0.0));
        // H₂ = 4u² − 2: sup of (4u²−2)e^{−u²/2} sits at u² = 5/2
        assert!((c.sup_weighted[2] - 8.0 * (-1.25f64).exp()).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn landau_recurrence(m in 1usize..10, x in -3.0..3.0f64, k in -5.0..5.0f64, b in 0.5..20.0f64) {
            let u = b.sqrt() * (x - k / b);
            let lhs = u * landau_psi(m, x, k, b);
            let rhs = ((m + 1) as f64 / 2.0).sqrt() * landau_psi(m + 1, x, k, b)
                + (m as f64 / 2.0).sqrt() * landau_psi(m - 1, x, k, b);
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
        }

        #[test]
        fn parabolic_evenness(j in 0usize..6, x in -3.0..3.0f64, k in -6.0..6.0f64) {
            let p = model();
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            prop_assert_eq!(p.phi(j, -x, -k), s * p.phi(j, x, k));
        }
    }
}
