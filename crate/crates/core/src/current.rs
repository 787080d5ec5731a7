//! Wave packets between Landau levels, their edge currents, the closed-form lower
//! bounds, and Mourre commutator forms.

use serde::{Deserialize, Serialize};

use crate::dispersion::{trace_curves, DispersionCurve, EnergyWindow, FiberProblem, InverseImage};
use crate::error::{invalid, Error, Result};
use crate::fiber;
use crate::oracle::ParabolicModel;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileShape {
    Flat,
    /// sin²(πt) on the interval, vanishing to second order at both ends.
    #[default]
    CosineBump,
}

impl ProfileShape {
    fn value(self, t: f64) -> f64 {
        match self {
            Self::Flat => 1.0,
            Self::CosineBump => (std::f64::consts::PI * t).sin().powi(2),
        }
    }
}

/// Weight γ²/(2+γ²) of the asymmetric part; 1 for γ = ∞.
pub fn asymmetry_factor(gamma: f64) -> f64 {
    if gamma.is_infinite() {
        1.0
    } else {
        gamma * gamma / (2.0 + gamma * gamma)
    }
}

/// β_j sampled on the minus interval; the plus side is the mirror scaled by `mirror_scale`.
#[derive(Clone, Debug)]
pub struct BandProfile {
    pub band: usize,
    /// Ascending nodes on the minus interval.
    pub k: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct WavePacket {
    pub window: EnergyWindow,
    pub gamma: f64,
    /// |β(−k)| / |β(k)| = 1/√(1+γ²); zero for γ = ∞.
    pub mirror_scale: f64,
    pub bands: Vec<BandProfile>,
    pub norm_sq: f64,
}

impl WavePacket {
    /// Every wave number where the band needs a fiber sample, ascending and mirror-symmetric.
    pub fn support(&self, band: usize) -> Option<Vec<f64>> {
        let prof = self.bands.iter().find(|b| b.band == band)?;
        let mut k: Vec<f64> = prof.k.clone();
        k.extend(prof.k.iter().rev().map(|v| -v));
        Some(k)
    }

    /// The same packet with every β multiplied by `factor` (no renormalization).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for b in &mut out.bands {
            b.beta.iter_mut().for_each(|v| *v *= factor);
        }
        out.norm_sq *= factor * factor;
        out
    }
}

/// Trapezoid weights on ascending nodes.
pub fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = 0.5 * (x[i + 1] - x[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

/// Bump profiles on each non-empty minus interval, normalized to unit total mass.
pub fn build_packet(
    images: &[InverseImage],
    window: &EnergyWindow,
    shape: ProfileShape,
    gamma: f64,
    nodes: usize,
) -> Result<WavePacket> {
    if !(gamma >= 0.0) {
        return Err(invalid(format!("asymmetry gamma {gamma} must be >= 0")));
    }
    if nodes < 3 {
        return Err(invalid("a packet needs at least 3 nodes per band"));
    }
    let mirror_scale = if gamma.is_infinite() {
        0.0
    } else {
        1.0 / (1.0 + gamma * gamma).sqrt()
    };
    let mut bands = Vec::new();
    for im in images {
        let Some((lo, hi)) = im.minus else { continue };
        if !(lo < hi) || hi > 0.0 {
            continue;
        }
        let k: Vec<f64> = (0..nodes)
            .map(|i| if i + 1 == nodes { hi } else { lo + (hi - lo) * i as f64 / (nodes - 1) as f64 })
            .collect();
        let beta = k.iter().map(|&v| shape.value((v - lo) / (hi - lo))).collect();
        bands.push(BandProfile {
            band: im.band,
            k,
            beta,
        });
    }
    if bands.is_empty() {
        return Err(Error::EmptyPacket);
    }
    let mass: f64 = bands
        .iter()
        .map(|b| {
            trapezoid_weights(&b.k)
                .iter()
                .zip(&b.beta)
                .map(|(w, v)| w * v * v)
                .sum::<f64>()
        })
        .sum::<f64>()
        * (1.0 + mirror_scale * mirror_scale);
    let scale = 1.0 / mass.sqrt();
    for b in &mut bands {
        b.beta.iter_mut().for_each(|v| *v *= scale);
    }
    let mut packet = WavePacket {
        window: *window,
        gamma,
        mirror_scale,
        bands,
        norm_sq: 0.0,
    };
    packet.norm_sq = packet_norm_sq(&packet);
    Ok(packet)
}

/// Σ_j ∫ |β_j|² dk over both signs of k.
pub fn packet_norm_sq(packet: &WavePacket) -> f64 {
    let s2 = packet.mirror_scale * packet.mirror_scale;
    packet
        .bands
        .iter()
        .map(|b| {
            trapezoid_weights(&b.k)
                .iter()
                .zip(&b.beta)
                .map(|(w, v)| w * v * v)
                .sum::<f64>()
        })
        .sum::<f64>()
        * (1.0 + s2)
}

/// One curve per packet band, sampled exactly on that band's support.
pub fn trace_packet_curves(problem: &FiberProblem, packet: &WavePacket, retain_states: bool) -> Result<Vec<DispersionCurve>> {
    packet
        .bands
        .iter()
        .map(|b| {
            let support = packet.support(b.band).expect("band present");
            let mut curves = trace_curves(problem, b.band, &support, retain_states)?;
            Ok(curves.swap_remove(b.band))
        })
        .collect()
}

fn curve_for(curves: &[DispersionCurve], band: usize) -> Result<&DispersionCurve> {
    curves.iter().find(|c| c.band == band).ok_or(Error::SupportMismatch { band })
}

fn lookup(curve: &DispersionCurve, k: f64) -> Result<usize> {
    curve.index_of(k).ok_or(Error::SupportMismatch { band: curve.band })
}

/// ½ Σ_j ∫_minus (|β(k)|² − |β(−k)|²) ω_j′(k) dk with the Feynman–Hellmann slopes.
pub fn edge_current(packet: &WavePacket, curves: &[DispersionCurve]) -> Result<f64> {
    let s2 = packet.mirror_scale * packet.mirror_scale;
    let mut total = 0.0;
    for b in &packet.bands {
        let curve = curve_for(curves, b.band)?;
        let w = trapezoid_weights(&b.k);
        for (i, &k) in b.k.iter().enumerate() {
            let idx = lookup(curve, k)?;
            total += w[i] * 0.5 * (1.0 - s2) * b.beta[i] * b.beta[i] * curve.d_omega_fh[idx];
        }
    }
    Ok(total)
}

/// Σ_j ∫ |β_j(k)|² ⟨φ_j, (k − Bx)φ_j⟩ dk over both signs of k, from the retained eigenfunctions.
pub fn direct_current(packet: &WavePacket, curves: &[DispersionCurve], field: f64) -> Result<f64> {
    let s2 = packet.mirror_scale * packet.mirror_scale;
    let mut total = 0.0;
    for b in &packet.bands {
        let curve = curve_for(curves, b.band)?;
        let states = curve.states.as_ref().ok_or(Error::SupportMismatch { band: b.band })?;
        let density = |k: f64| -> Result<f64> {
            let st = &states[lookup(curve, k)?];
            fiber::expectation_with(&st.grid, &st.phi, |x| k - field * x)
        };
        let w = trapezoid_weights(&b.k);
        for (i, &k) in b.k.iter().enumerate() {
            let mass = b.beta[i] * b.beta[i];
            total += w[i] * mass * (density(k)? + s2 * density(-k)?);
        }
    }
    Ok(total)
}

/// Closed-form lower bound on −current for the parabolic channel:
/// γ²/(2+γ²) · √(a−1) · g/√B_g.
pub fn parabolic_bound(model: &ParabolicModel, window: &EnergyWindow, gamma: f64) -> f64 {
    asymmetry_factor(gamma) * (window.lower - 1.0).sqrt() * model.stiffness / model.modified_field.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationBudget {
    /// ã of the enlarged window, 1 < ã < a.
    pub outer_lower: f64,
    /// c̃ of the enlarged window, c < c̃ < 3.
    pub outer_upper: f64,
    /// ‖V₁‖∞ / B
    pub v1_ratio: f64,
    pub fitted_cn: f64,
    pub gamma: f64,
}

impl PerturbationBudget {
    pub fn validate(&self, window: &EnergyWindow) -> Result<()> {
        let ok = 1.0 < self.outer_lower
            && self.outer_lower < window.lower
            && window.upper < self.outer_upper
            && self.outer_upper < 3.0;
        if !ok {
            return Err(invalid(format!(
                "enlarged window needs 1 < ã < a < c < c̃ < 3 (ã={}, a={}, c={}, c̃={})",
                self.outer_lower, window.lower, window.upper, self.outer_upper
            )));
        }
        if !(self.v1_ratio >= 0.0) || !(self.fitted_cn >= 0.0) || !(self.gamma >= 0.0) {
            return Err(invalid("v1_ratio, fitted_cn and gamma must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MarginReport {
    pub f_n: f64,
    /// γ²/(2+γ²)·Ĉ_n·(3−c̃)²(ã−1)²
    pub leading: f64,
    /// leading − F_n; the guaranteed bound is √B times this.
    pub per_sqrt_b: f64,
}

impl MarginReport {
    pub fn bound(&self, field: f64) -> f64 {
        field.sqrt() * self.per_sqrt_b
    }
}

pub fn perturbation_margin(budget: &PerturbationBudget, window: &EnergyWindow) -> Result<MarginReport> {
    budget.validate(window)?;
    let (a, c) = (window.lower, window.upper);
    let (at, ct) = (budget.outer_lower, budget.outer_upper);
    let v = budget.v1_ratio;
    let n = window.level as f64;
    let leading = asymmetry_factor(budget.gamma) * budget.fitted_cn * (3.0 - ct).powi(2) * (at - 1.0).powi(2);
    let spread = 2.0 / (ct - at);
    let half = 0.5 * (c - a) + v;
    let f_n = spread.sqrt() * half.sqrt() * (2.0 * (2.0 * n + c + v).sqrt() + leading * spread.powf(1.5) * half.powf(1.5));
    Ok(MarginReport {
        f_n,
        leading,
        per_sqrt_b: leading - f_n,
    })
}

/// Translation step of the conjugate operator together with s_{α,n}.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MourreProbe {
    pub alpha: f64,
    pub s_constant: f64,
    pub k_max: f64,
}

impl MourreProbe {
    /// Requires 0 < α·k_max < π so that sin(α|k|) > 0 on the support.
    pub fn new(alpha: f64, k_max: f64, s_constant: f64) -> Result<Self> {
        if !(alpha > 0.0 && k_max > 0.0 && alpha * k_max < std::f64::consts::PI) {
            return Err(invalid(format!("alpha {alpha} must lie in (0, pi/{k_max})")));
        }
        Ok(Self {
            alpha,
            s_constant,
            k_max,
        })
    }

    /// Parabolic probe with s = min(sin(α k_n(a)), sin(α k_0(c))).
    pub fn for_parabolic(model: &ParabolicModel, window: &EnergyWindow, alpha: f64) -> Result<Self> {
        let n = window.level;
        let k_top = model.kinv(0, n, window.upper)?;
        let k_bottom = model.kinv(n, n, window.lower)?;
        let s = (alpha * k_bottom).sin().min((alpha * k_top).sin());
        Self::new(alpha, k_top, s)
    }
}

/// Lower bound (2g/√B_g)·√(a−1)·s_{α,n}·‖ψ‖² on the parabolic Mourre form.
pub fn parabolic_mourre_bound(model: &ParabolicModel, window: &EnergyWindow, probe: &MourreProbe, norm_sq: f64) -> f64 {
    2.0 * model.stiffness / model.modified_field.sqrt() * (window.lower - 1.0).sqrt() * probe.s_constant * norm_sq
}

/// Σ_j ∫_minus sin(αk)(|β(k)|² + |β(−k)|²) ω_j′(k) dk, i.e. −⟨ψ, [H₀, iS_α]ψ⟩;
/// positive for edge packets.
pub fn mourre_form(packet: &WavePacket, curves: &[DispersionCurve], probe: &MourreProbe) -> Result<f64> {
    let s2 = packet.mirror_scale * packet.mirror_scale;
    let mut total = 0.0;
    for b in &packet.bands {
        if b.k.iter().any(|k| probe.alpha * k.abs() >= std::f64::consts::PI) {
            return Err(invalid("packet support reaches beyond pi/alpha"));
        }
        let curve = curve_for(curves, b.band)?;
        let w = trapezoid_weights(&b.k);
        for (i, &k) in b.k.iter().enumerate() {
            let idx = lookup(curve, k)?;
            total += w[i] * (probe.alpha * k).sin() * (1.0 + s2) * b.beta[i] * b.beta[i] * curve.d_omega_fh[idx];
        }
    }
    Ok(total)
}

/// Allowance 2‖yV₁‖∞ + |α|·‖V₁‖∞ for y-decaying perturbations (per unit ‖ψ‖²).
pub fn mourre_perturbation_budget(alpha: f64, v1_inf: f64, yv1_inf: f64) -> f64 {
    2.0 * yv1_inf + alpha.abs() * v1_inf
}

#[derive(Clone, Debug, Serialize)]
pub struct CurrentReport {
    pub potential: String,
    pub field: f64,
    pub window: EnergyWindow,
    pub gamma: String,
    pub current: f64,
    pub current_per_sqrt_b: f64,
    pub bound: Option<f64>,
    pub margin: Option<f64>,
    pub pass: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::SolverConfig;
    use crate::potentials::ConfiningPotential;

    fn window() -> EnergyWindow {
        EnergyWindow::new(0, 1.5, 2.5, 5.0).unwrap()
    }

    fn images() -> Vec<InverseImage> {
        vec![InverseImage {
            band: 0,
            minus: Some((-3.4, -2.0)),
        }]
    }

    #[test]
    fn packet_normalization_and_symmetry() {
        for gamma in [0.0, 0.5, 1.0, f64::INFINITY] {
            let p = build_packet(&images(), &window(), ProfileShape::CosineBump, gamma, 65).unwrap();
            assert!((p.norm_sq - 1.0).abs() < 1e-10);
            if gamma == 0.0 {
                assert_eq!(p.mirror_scale, 1.0);
            }
            if gamma.is_infinite() {
                assert_eq!(p.mirror_scale, 0.0);
            }
            let b = &p.bands[0];
            assert_eq!(b.beta[0], 0.0);
            assert!(b.beta[b.beta.len() - 1].abs() < 1e-15);
        }
        let p = build_packet(&images(), &window(), ProfileShape::Flat, 2.0, 9).unwrap();
        assert!((p.mirror_scale.powi(2) * 5.0 - 1.0).abs() < 1e-15);
        assert!(build_packet(&[InverseImage { band: 0, minus: None }], &window(), ProfileShape::Flat, 1.0, 9).is_err());
        assert!(build_packet(&images(), &window(), ProfileShape::Flat, f64::NAN, 9).is_err());
    }

    #[test]
    fn support_is_mirror_symmetric() {
        let p = build_packet(&images(), &window(), ProfileShape::CosineBump, 1.0, 11).unwrap();
        let s = p.support(0).unwrap();
        assert_eq!(s.len(), 22);
        for i in 0..s.len() {
            assert_eq!(s[i], -s[s.len() - 1 - i]);
        }
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn bound_closed_forms() {
        let m = ParabolicModel::new(3.0, 4.0).unwrap();
        let w = window();
        assert!((parabolic_bound(&m, &w, 1.0) - 0.42164).abs() < 1e-5);
        assert_eq!(parabolic_bound(&m, &w, 0.0), 0.0);
        let lim = 0.5f64.sqrt() * 4.0 / 5f64.sqrt();
        assert!((parabolic_bound(&m, &w, f64::INFINITY) - lim).abs() < 1e-15);
        assert!((parabolic_bound(&m, &w, 1e8) - lim).abs() < 1e-12);
    }

    #[test]
    fn margin_example() {
        let w = EnergyWindow::new(0, 1.4, 1.6, 1.0).unwrap();
        let mut budget = PerturbationBudget {
            outer_lower: 1.2,
            outer_upper: 1.8,
            v1_ratio: 0.01,
            fitted_cn: 0.0,
            gamma: 1.0,
        };
        let r = perturbation_margin(&budget, &w).unwrap();
        assert!((r.f_n - 1.5367).abs() < 1e-4, "{}", r.f_n);
        let mut last = r.f_n;
        budget.fitted_cn = 0.3;
        for v in [0.02, 0.05, 0.1] {
            budget.v1_ratio = v;
            let f = perturbation_margin(&budget, &w).unwrap().f_n;
            assert!(f > last);
            last = f;
        }
        let narrow = EnergyWindow::new(0, 1.5, 1.5 + 1e-12, 1.0).unwrap();
        budget.v1_ratio = 0.0;
        assert!(perturbation_margin(&budget, &narrow).unwrap().f_n < 1e-5);
        budget.outer_lower = 1.5;
        assert!(perturbation_margin(&budget, &w).is_err());
    }

    #[test]
    fn mourre_budget() {
        assert_eq!(mourre_perturbation_budget(0.3, 0.0, 0.0), 0.0);
        assert!((mourre_perturbation_budget(0.01, 1.0, 2.0) - 4.01).abs() < 1e-15);
        assert!((mourre_perturbation_budget(0.01, 2.0, 4.0) - 8.02).abs() < 1e-14);
    }

    #[test]
    fn probe_rejects_wide_alpha() {
        let m = ParabolicModel::new(3.0, 4.0).unwrap();
        let w = window();
        let k_top = m.kinv(0, 0, 2.5).unwrap();
        assert!(MourreProbe::for_parabolic(&m, &w, 0.99 * std::f64::consts::PI / k_top).is_ok());
        assert!(MourreProbe::for_parabolic(&m, &w, 1.01 * std::f64::consts::PI / k_top).is_err());
    }

    #[test]
    fn parabolic_packet_currents() {
        let problem = FiberProblem::new(
            3.0,
            ConfiningPotential::Parabolic { stiffness: 4.0 },
            SolverConfig {
                resolution: 150.0,
                ..SolverConfig::default()
            },
        )
        .unwrap();
        let m = ParabolicModel::new(3.0, 4.0).unwrap();
        let w = window();
        let (lo, hi) = m.minus_interval(0, 0, 1.5, 2.5).unwrap();
        let ims = [InverseImage {
            band: 0,
            minus: Some((lo, hi)),
        }];
        for gamma in [0.0, 1.0, f64::INFINITY] {
            let p = build_packet(&ims, &w, ProfileShape::CosineBump, gamma, 33).unwrap();
            let curves = trace_packet_curves(&problem, &p, true).unwrap();
            let edge = edge_current(&p, &curves).unwrap();
            let direct = direct_current(&p, &curves, 3.0).unwrap();
            if gamma == 0.0 {
                assert!(edge.abs() <= 1e-10 * 3f64.sqrt());
                assert!(direct.abs() < 1e-8);
            } else {
                assert!(-edge > parabolic_bound(&m, &w, gamma));
                assert!((edge - direct).abs() <= 1e-8 * edge.abs());
            }
            let scaled = p.scaled(2.0);
            assert!((edge_current(&scaled, &curves).unwrap() - 4.0 * edge).abs() <= 1e-12 * edge.abs().max(1.0));
            let probe = MourreProbe::for_parabolic(&m, &w, 0.5 * std::f64::consts::PI / m.kinv(0, 0, 2.5).unwrap()).unwrap();
            let form = mourre_form(&p, &curves, &probe).unwrap();
            assert!(form >= parabolic_mourre_bound(&m, &w, &probe, p.norm_sq) - 1e-8);
        }
    }

    #[test]
    fn mismatched_curves_are_rejected() {
        let p = build_packet(&images(), &window(), ProfileShape::CosineBump, 1.0, 5).unwrap();
        let curve = DispersionCurve {
            band: 0,
            k: vec![-1.0, 0.0, 1.0],
            omega: vec![0.0; 3],
            d_omega_fh: vec![0.0; 3],
            d_omega_fd: vec![0.0; 3],
            states: None,
        };
        assert!(matches!(edge_current(&p, &[curve]), Err(Error::SupportMismatch { band: 0 })));
    }
}
