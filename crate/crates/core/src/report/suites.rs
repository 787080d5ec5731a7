//! Verification suites run by `edgecurrents verify`. Each suite produces verdicts;
//! a numerical error inside a suite becomes a failing verdict instead of aborting.

use serde_json::{json, Value};

use crate::current::{
    build_packet, direct_current, edge_current, mourre_form, parabolic_bound, parabolic_mourre_bound,
    trace_packet_curves, MourreProbe, ProfileShape, WavePacket,
};
use crate::cylinder::{
    assemble_spectrum, build_cylinder_packet, eigenstate_current, packet_current, perturbed_cylinder_project,
    CylinderGeometry, Harmonic, ModeCoupling, PerturbedSettings,
};
use crate::dispersion::{
    asymptote_check, default_k_grid, fh_derivative, gap_test, power_derivative, scan_minus_interval,
    sharp_trace_derivative, symmetric_grid, trace_curves, wave_number_check, DispersionCurve, EnergyWindow,
    FiberProblem, InverseImage,
};
use crate::error::{Error, Result};
use crate::fiber::SolverConfig;
use crate::oracle::ParabolicModel;
use crate::potentials::ConfiningPotential;
use crate::verify::{
    cn_extract, effective_potential, fit_loglog, forbidden_decay_check, ipm_scaling_check, lmte_check, sed_constant_extract,
    sed_point, trace_bound_check, Status, Verdict,
};

#[derive(Clone, Copy, Debug)]
pub struct SuiteContext {
    pub solver: SolverConfig,
    pub fast: bool,
}

impl SuiteContext {
    fn pick<T>(&self, full: T, fast: T) -> T {
        if self.fast {
            fast
        } else {
            full
        }
    }
}

/// Runs one named suite. Unknown names are rejected by the config layer.
pub fn run_suite(name: &str, ctx: &SuiteContext) -> Vec<Verdict> {
    let result = match name {
        "oracle" => oracle(ctx),
        "derivatives" => derivatives(ctx),
        "currents" => currents(ctx),
        "wavenumber" => wavenumber(ctx),
        "scaling" => scaling(ctx),
        "lemmas" => lemmas(ctx),
        "cylinder" => cylinder(ctx),
        other => Err(Error::Config(format!("unknown suite `{other}`"))),
    };
    result.unwrap_or_else(|e| {
        vec![Verdict::new(
            format!("{name}_error"),
            json!({ "error": e.to_string() }),
            f64::NAN,
            Status::Fail,
        )]
    })
}

fn sharp(b: f64, level: usize, c: f64) -> ConfiningPotential {
    ConfiningPotential::Sharp {
        height: 2.0 * ((2 * level) as f64 + c) * b,
        width: 1.0,
    }
}

fn power(b: f64, level: usize, c: f64, exponent: f64) -> ConfiningPotential {
    ConfiningPotential::Power {
        height: ((2 * level) as f64 + c) * b.powf(0.5 * (exponent + 2.0)),
        width: 1.0,
        exponent,
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn status_of(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

fn minus_images(problem: &FiberProblem, window: &EnergyWindow) -> Result<Vec<InverseImage>> {
    (0..=window.level).map(|j| scan_minus_interval(problem, j, window)).collect()
}

fn packet_for(
    problem: &FiberProblem,
    window: &EnergyWindow,
    gamma: f64,
    nodes: usize,
) -> Result<(WavePacket, Vec<DispersionCurve>)> {
    let images = minus_images(problem, window)?;
    let packet = build_packet(&images, window, ProfileShape::CosineBump, gamma, nodes)?;
    let curves = trace_packet_curves(problem, &packet, true)?;
    Ok((packet, curves))
}

fn gamma_value(gamma: f64) -> Value {
    if gamma.is_infinite() {
        json!("inf")
    } else {
        json!(gamma)
    }
}

fn oracle(ctx: &SuiteContext) -> Result<Vec<Verdict>> {
    let mut out = Vec::new();
    let model = ParabolicModel::new(3.0, 4.0)?;
    let problem = FiberProblem::new(3.0, ConfiningPotential::Parabolic { stiffness: 4.0 }, ctx.solver)?;
    let samples = ctx.pick(101, 41);
    let curves = trace_curves(&problem, 3, &symmetric_grid(10.0, samples), true)?;
    let (mut worst_e, mut worst_phi) = (0.0f64, 0.0f64);
    for c in &curves {
        let states = c.states.as_ref().expect("states retained");
        for (i, &k) in c.k.iter().enumerate() {
            let exact = model.omega(c.band, k);
            worst_e = worst_e.max((c.omega[i] - exact).abs() / exact);
            let st = &states[i];
            let want = st.grid.sample(|x| model.phi(c.band, x, k));
            let sign = want.iter().zip(&st.phi).map(|(a, b)| a * b).sum::<f64>().signum();
            let err = want.iter().zip(&st.phi).map(|(a, b)| (a - sign * b).abs()).fold(0.0, f64::max);
            worst_phi = worst_phi.max(err);
        }
    }
    let params = json!({ "field": 3.0, "stiffness": 4.0, "bands": 4, "k_samples": samples });
    out.push(Verdict::from_margin("parabolic_energies", params.clone(), 1e-6 - worst_e));
    out.push(Verdict::from_margin("parabolic_eigenfunctions", params, 1e-5 - worst_phi));

    let samples = ctx.pick(41, 11);
    for b in [1.0, 100.0] {
        let problem = FiberProblem::new(b, ConfiningPotential::Free, ctx.solver)?;
        let mut worst = 0.0f64;
        for c in trace_curves(&problem, 3, &default_k_grid(&problem, 3, samples), false)? {
            let level = (2 * c.band + 1) as f64 * b;
            worst = c.omega.iter().fold(worst, |w, &v| w.max((v - level).abs() / b));
        }
        out.push(Verdict::from_margin(
            "landau_levels",
            json!({ "field": b, "bands": 4, "k_samples": samples }),
            1e-4 - worst,
        ));
    }
    Ok(out)
}

fn derivatives(ctx: &SuiteContext) -> Result<Vec<Verdict>> {
    let mut out = Vec::new();
    let b = 100.0;
    let samples = 1601;
    for pot in [sharp(b, 0, 1.7), power(b, 0, 1.7, 2.0), ConfiningPotential::Parabolic { stiffness: 50.0 }] {
        let problem = FiberProblem::new(b, pot, ctx.solver)?;
        let mut worst = 0.0f64;
        for c in trace_curves(&problem, 1, &default_k_grid(&problem, 0, samples), false)? {
            for i in 1..c.k.len() - 1 {
                let tol = (1e-3 * c.d_omega_fh[i].abs()).max(1e-3 * b.sqrt());
                worst = worst.max((c.d_omega_fh[i] - c.d_omega_fd[i]).abs() / tol);
            }
        }
        out.push(Verdict::from_margin(
            "slope_consistency",
            json!({ "potential": pot.name(), "field": b, "bands": 2, "k_samples": samples }),
            1.0 - worst,
        ));
    }
    let nodes = ctx.pick(21, 7);
    for (pot, tol) in [(sharp(b, 0, 1.7), 0.02), (power(b, 0, 1.7, 2.0), 0.01)] {
        let problem = FiberProblem::new(b, pot, ctx.solver)?;
        let window = EnergyWindow::new(0, 1.5, 1.7, b)?;
        let (lo, hi) = scan_minus_interval(&problem, 0, &window)?.minus.ok_or(Error::EmptyPacket)?;
        let mut worst = 0.0f64;
        for k in linspace(lo, hi, nodes) {
            let sol = problem.solve(k, 1)?;
            let phi = &sol.pairs[0].phi;
            let fh = fh_derivative(&sol.grid, phi, k, b);
            let route = match pot {
                ConfiningPotential::Sharp { .. } => sharp_trace_derivative(&sol.grid, phi, &pot, b)?,
                _ => power_derivative(&sol.grid, phi, &pot, b)?,
            };
            worst = worst.max((route - fh).abs() / fh.abs());
        }
        out.push(Verdict::from_margin(
            format!("{}_wall_slope", pot.name()),
            json!({ "field": b, "minus_interval": [lo, hi], "k_samples": nodes }),
            tol - worst,
        ));
    }
    Ok(out)
}

fn currents(ctx: &SuiteContext) -> Result<Vec<Verdict>> {
    let mut out = Vec::new();
    let b = 100.0;
    for pot in [sharp(b, 0, 1.7), power(b, 0, 1.7, 2.0), ConfiningPotential::Parabolic { stiffness: 50.0 }] {
        let problem = FiberProblem::new(b, pot, ctx.solver)?;
        let window = EnergyWindow::for_problem(&problem, 0, 1.5, 1.7)?;
        let (packet, curves) = packet_for(&problem, &window, 0.0, 21)?;
        let j = direct_current(&packet, &curves, b)?.abs() / b.sqrt();
        out.push(Verdict::from_margin(
            "zero_net_current",
            json!({ "potential": pot.name(), "field": b, "gamma": 0.0 }),
            1e-10 - j,
        ));
    }

    let model = ParabolicModel::new(3.0, 4.0)?;
    let problem = FiberProblem::new(3.0, ConfiningPotential::Parabolic { stiffness: 4.0 }, ctx.solver)?;
    let nodes = ctx.pick(81, 21);
    let gammas: &[f64] = ctx.pick(&[0.5, 1.0, 2.0, f64::INFINITY], &[1.0, f64::INFINITY]);
    for level in [0, 1] {
        let window = EnergyWindow::new(level, 1.5, 2.5, model.modified_field)?;
        for &gamma in gammas {
            let (packet, curves) = packet_for(&problem, &window, gamma, nodes)?;
            let current = edge_current(&packet, &curves)?;
            let bound = parabolic_bound(&model, &window, gamma) * packet.norm_sq;
            out.push(Verdict::from_margin(
                "parabolic_current_bound",
                json!({ "field": 3.0, "stiffness": 4.0, "level": level, "gamma": gamma_value(gamma), "current": current, "bound": bound }),
                -current - bound,
            ));
        }
    }

    let gammas: &[f64] = ctx.pick(&[0.0, 1.0, f64::INFINITY], &[0.0, f64::INFINITY]);
    for level in [0, 1] {
        let window = EnergyWindow::new(level, 1.5, 2.5, model.modified_field)?;
        let alpha = 0.5 * std::f64::consts::PI / model.kinv(0, level, 2.5)?;
        let probe = MourreProbe::for_parabolic(&model, &window, alpha)?;
        for &gamma in gammas {
            let (packet, curves) = packet_for(&problem, &window, gamma, nodes)?;
            let form = mourre_form(&packet, &curves, &probe)?;
            let bound = parabolic_mourre_bound(&model, &window, &probe, packet.norm_sq);
            out.push(Verdict::from_margin(
                "mourre_positivity",
                json!({ "field": 3.0, "stiffness": 4.0, "level": level, "gamma": gamma_value(gamma), "alpha": alpha }),
                form - bound + 1e-8,
            ));
        }
    }
    Ok(out)
}

fn wavenumber(ctx: &SuiteContext) -> Result<Vec<Verdict>> {
    let mut out = Vec::new();
    let b = 200.0;
    let alpha = 3.0;
    for pot in [sharp(b, 1, 1.7), power(b, 1, 1.7, 2.0)] {
        let problem = FiberProblem::new(b, pot, ctx.solver)?;
        for level in [0, 1] {
            let window = EnergyWindow::new(level, 1.5, 1.7, b)?;
            let images = minus_images(&problem, &window)?;
            let r = wave_number_check(&images, b, 1.0, alpha)?;
            let margin = r.rightmost.map_or(f64::INFINITY, |x| r.threshold - x);
            let status = if r.rightmost.is_none() { Status::Precondition } else { status_of(r.pass) };
            out.push(Verdict::new(
                "wave_number_localization",
                json!({ "potential": pot.name(), "field": b, "level": level, "alpha": alpha, "threshold": r.threshold }),
                margin,
                status,
            ));
        }
    }
    Ok(out)
}

fn scaling(ctx: &SuiteContext) -> Result<Vec<Verdict>> {
    let mut out = Vec::new();
    let fields = [50.0, 100.0, 200.0, 400.0];
    let mut currents = Vec::new();
    let mut minus = Vec::new();
    for &b in &fields {
        let problem = FiberProblem::new(b, sharp(b, 0, 1.7), ctx.solver)?;
        let window = EnergyWindow::new(0, 1.5, 1.7, b)?;
        let (packet, curves) = packet_for(&problem, &window, f64::INFINITY, 21)?;
        currents.push(-edge_current(&packet, &curves)?);
        let fh = &curves[0].d_omega_fh;
        minus.push((b, fh[..fh.len() / 2].to_vec()));
    }
    let params = json!({ "potential": "sharp", "fields": fields, "gamma": "inf" });
    if currents.iter().all(|&c| c > 0.0) {
        let (slope, _, _) = fit_loglog(&fields, &currents)?;
        out.push(Verdict::from_margin("sqrt_b_scaling", params.clone(), 0.1 - (slope - 0.5).abs()));
    } else {
        out.push(Verdict::new("sqrt_b_scaling", params.clone(), f64::NAN, Status::Fail));
    }
    let cn = cn_extract(&minus, 1.5, 1.7)?;
    out.push(Verdict::new(
        "current_constant",
        json!({ "potential": "sharp", "fields": fields, "C_n_hat": cn.constant.value, "variation": cn.variation }),
        0.3 - cn.variation,
        status_of(cn.stable && cn.constant.value > 0.0 && cn.variation < 0.3),
    ));

    let ms: &[usize] = ctx.pick(&[0, 1, 2], &[0]);
    for &m in ms {
        let r = ipm_scaling_check(m, 2.0, &[100.0, 200.0, 400.0, 800.0], 2, 1.5, 1.7, 1.0, &ctx.solver)?;
        out.push(Verdict::new(
            "tail_integral_scaling",
            json!({ "m": m, "exponent": 2.0, "level": 2, "slope": r.slope.value, "fields": r.slope.fit_range }),
            r.threshold - r.slope.value,
            r.status,
        ));
    }
    Ok(out)
}

fn lemmas(ctx: &SuiteContext) -> Result<Vec<Verdict>> {
    let mut out = Vec::new();
    let b = 200.0;
    let problem = FiberProblem::new(b, sharp(b, 0, 1.7), ctx.solver)?;
    let window = EnergyWindow::new(0, 1.5, 1.7, b)?;
    let (lo, hi) = scan_minus_interval(&problem, 0, &window)?.minus.ok_or(Error::EmptyPacket)?;
    for k in linspace(lo, hi, ctx.pick(9, 3)) {
        let sol = problem.solve(k, 1)?;
        let pair = &sol.pairs[0];
        let w = effective_potential(&sol.grid, k, pair.omega, b, &problem.potential);
        let d = forbidden_decay_check(&sol.grid, &pair.phi, &w, -1.0 / 6.0)?;
        out.push(Verdict::new("forbidden_decay", json!({ "field": b, "k": k, "nodes": d.nodes }), d.min_slack, d.status));
        let t = trace_bound_check(&sol.grid, &pair.phi, &w, b, 1.0)?;
        out.push(Verdict::new("trace_bound", json!({ "field": b, "k": k, "value": t.value }), t.bound - t.value, t.status));
    }

    let problem = FiberProblem::new(b, power(b, 0, 1.7, 2.0), ctx.solver)?;
    for m in 0..=ctx.pick(1, 0) {
        let r = lmte_check(0, m, &problem, &window)?;
        out.push(Verdict::new(
            "wall_overlap_bound",
            json!({ "field": b, "band": 0, "m": m, "k": r.k, "value": r.value, "bound": r.bound }),
            r.bound - r.value,
            r.status,
        ));
    }

    let fields = [100.0, 200.0, 400.0, 800.0];
    let mut points = Vec::new();
    for &f in &fields {
        let problem = FiberProblem::new(f, sharp(f, 0, 1.7), ctx.solver)?;
        let window = EnergyWindow::new(0, 1.5, 1.7, f)?;
        let (lo, hi) = scan_minus_interval(&problem, 0, &window)?.minus.ok_or(Error::EmptyPacket)?;
        points.push(sed_point(&problem, 0, &linspace(lo, hi, ctx.pick(5, 3)))?);
    }
    let sed = sed_constant_extract(&points)?;
    out.push(Verdict::new(
        "trace_constant",
        json!({ "fields": fields, "gamma_nj_hat": sed.constant.value }),
        0.0 - sed.constant.residual,
        status_of(sed.non_increasing),
    ));

    let b = 100.0;
    let samples = ctx.pick(201, 61);
    for pot in [sharp(b, 1, 1.7), power(b, 1, 1.7, 2.0), ConfiningPotential::Parabolic { stiffness: 50.0 }] {
        let problem = FiberProblem::new(b, pot, ctx.solver)?;
        let window = EnergyWindow::for_problem(&problem, 1, 1.5, 1.7)?;
        let curves = trace_curves(&problem, 1, &default_k_grid(&problem, 1, samples), false)?;
        let mut odd = 0.0f64;
        for c in &curves {
            let n = c.k.len();
            for i in 0..n / 2 {
                odd = odd.max((c.omega[i] - c.omega[n - 1 - i]).abs() / c.omega[i].abs());
            }
        }
        let params = json!({ "potential": pot.name(), "field": b, "bands": 2, "k_samples": samples });
        out.push(Verdict::from_margin("curve_evenness", params.clone(), 1e-9 - odd));
        let images = minus_images(&problem, &window)?;
        let gap = gap_test(&curves, &window, &images);
        out.push(Verdict::new("band_separation", params.clone(), gap.min_gap - gap.window_width, status_of(gap.pass())));
        for c in &curves {
            let a = asymptote_check(c, &pot, b, 5);
            out.push(Verdict::new(
                "dispersion_asymptote",
                json!({ "potential": pot.name(), "field": b, "band": c.band }),
                if a.monotone && a.within_bounds { 0.0 } else { -1.0 },
                status_of(a.monotone && a.within_bounds),
            ));
        }
    }
    Ok(out)
}

fn cylinder(ctx: &SuiteContext) -> Result<Vec<Verdict>> {
    let mut out = Vec::new();
    let b = 100.0;
    let geom = CylinderGeometry::new(1.0, sharp(b, 0, 2.8), b)?;
    let window = EnergyWindow::new(0, 1.2, 2.8, b)?;
    let params = json!({ "circumference": 1.0, "field": b, "window": [1.2, 2.8] });

    let spectrum = assemble_spectrum(&geom, 0, &window, &ctx.solver, 10_000)?;
    let packet = build_cylinder_packet(&spectrum, 1.0)?;
    let j = packet_current(&spectrum, &packet)?;
    let mut again = 0.0;
    for (&(m, p), beta) in packet.coeffs.iter().rev() {
        again += beta * beta * eigenstate_current(&spectrum, m, p)?;
    }
    out.push(Verdict::from_margin(
        "cylinder_finite_sum",
        params.clone(),
        1e-12 - (j - again).abs() / j.abs().max(1.0),
    ));
    let mut anti = 0.0f64;
    for p in 1..=spectrum.p_range {
        let (a, c) = (eigenstate_current(&spectrum, 0, p)?, eigenstate_current(&spectrum, 0, -p)?);
        anti = anti.max((a + c).abs() / a.abs().max(1.0));
    }
    out.push(Verdict::from_margin("cylinder_mirror_currents", params.clone(), 1e-8 - anti));

    let settings = PerturbedSettings {
        grid_points: ctx.pick(401, 201),
        ..PerturbedSettings::default()
    };
    let r = perturbed_cylinder_project(&geom, &[], &window, &settings, 1.0)?;
    let gap = r
        .shifts
        .iter()
        .map(|s| (s.perturbed - s.unperturbed).abs() / s.unperturbed)
        .fold(0.0, f64::max);
    out.push(Verdict::new(
        "cylinder_unperturbed_solve",
        json!({ "dimension": r.dimension, "grid_points": r.grid_points }),
        1e-8 - gap,
        status_of(gap <= 1e-8 && !r.shifts.is_empty()),
    ));

    let eps = 0.05 * b;
    let v1 = ModeCoupling::bump(Harmonic::Cos, 1, eps, 0.5, 401);
    let r = perturbed_cylinder_project(&geom, &[v1], &window, &settings, f64::INFINITY)?;
    out.push(Verdict::from_margin(
        "cylinder_eigenvalue_shift",
        json!({ "dimension": r.dimension, "perturbation_norm": eps, "max_shift": r.max_shift }),
        eps - r.max_shift,
    ));
    let kept = r.perturbed_current / r.unperturbed_current;
    out.push(Verdict::new(
        "cylinder_perturbed_current",
        json!({ "unperturbed": r.unperturbed_current, "perturbed": r.perturbed_current, "retained_norm_sq": r.retained_norm_sq }),
        kept - 0.5,
        status_of(r.unperturbed_current < 0.0 && r.perturbed_current < 0.0 && kept >= 0.5),
    ));
    Ok(out)
}
