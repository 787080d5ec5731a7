//! Command layer behind the `edgecurrents` binary: run configs, output files and
//! exit-code policy.

pub mod config;
pub mod suites;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::current::{
    build_packet, direct_current, edge_current, parabolic_bound, trace_packet_curves, CurrentReport, WavePacket,
};
use crate::cylinder::{
    assemble_spectrum, build_cylinder_packet, eigenstate_current, packet_current, perturbed_cylinder_project,
    write_spectrum_csv, CylinderGeometry,
};
use crate::dispersion::{
    asymptote_check, default_k_grid, fmt_num, gap_test, inverse_image, scan_minus_interval, trace_curves,
    wave_number_check, write_curves_csv, DispersionCurve, EnergyWindow, FiberProblem, InverseImage,
};
use crate::error::{Error, Result};
use crate::oracle::ParabolicModel;
use crate::potentials::ConfiningPotential;
use crate::verify::{cn_extract, fit_loglog, Status, Verdict};

use config::{Geometry, RunConfig};
use suites::{run_suite, SuiteContext};

/// Outcome of a command that ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Passed,
    ChecksFailed,
}

/// 0 on success, 1 for failed checks and numerical errors, 2 for bad configuration.
pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(Outcome::Passed) => 0,
        Ok(Outcome::ChecksFailed) => 1,
        Err(Error::Config(_) | Error::InvalidParameter(_)) => 2,
        Err(_) => 1,
    }
}

/// Per-run options from the command line.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    /// Seeds a small random modulation of packet profiles.
    pub seed: Option<u64>,
}

struct OutDir(PathBuf);

impl OutDir {
    fn create(cfg: &RunConfig, opts: &RunOptions) -> Result<Self> {
        let dir = opts
            .out
            .clone()
            .or_else(|| cfg.output.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&dir)?;
        Ok(Self(dir))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    fn text(&self, name: &str, body: &str) -> Result<()> {
        fs::write(self.path(name), body)?;
        Ok(())
    }

    fn json(&self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut body = serde_json::to_string_pretty(value).expect("reports serialize");
        body.push('\n');
        self.text(name, &body)
    }

    fn verdicts(&self, verdicts: &[Verdict]) -> Result<()> {
        let body: String = verdicts.iter().map(|v| v.json_line() + "\n").collect();
        self.text("verdicts.jsonl", &body)
    }
}

fn units() -> Value {
    json!({
        "x": "length",
        "k": "1/length",
        "field": "1/length^2",
        "omega": "1/length^2",
        "wall_height": "1/length^2",
        "current": "1/length",
        "current_per_sqrt_b": "dimensionless",
        "circumference": "length",
    })
}

fn gamma_label(gamma: f64) -> String {
    if gamma.is_infinite() {
        "inf".into()
    } else {
        format!("{gamma}")
    }
}

fn field_tag(b: f64) -> String {
    format!("B{b}")
}

fn outcome_of(verdicts: &[Verdict]) -> Outcome {
    if verdicts.iter().any(|v| v.status == Status::Fail) {
        Outcome::ChecksFailed
    } else {
        Outcome::Passed
    }
}

fn report_verdicts(verdicts: &[Verdict]) {
    let count = |s: Status| verdicts.iter().filter(|v| v.status == s).count();
    println!(
        "{} verdicts: {} pass, {} precondition not met, {} fail",
        verdicts.len(),
        count(Status::Pass),
        count(Status::Precondition),
        count(Status::Fail)
    );
    for v in verdicts.iter().filter(|v| v.status == Status::Fail) {
        println!("FAIL {} margin {} {}", v.lemma, v.margin, v.parameters);
    }
}

/// Multiplies each profile sample by 1 + u with u uniform in [−0.05, 0.05], then
/// restores unit norm. The mirrored side shares the samples, so it moves equally.
fn jitter(packet: &mut WavePacket, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for band in &mut packet.bands {
        for beta in &mut band.beta {
            *beta *= 1.0 + rng.gen_range(-0.05..=0.05);
        }
    }
    packet.norm_sq = crate::current::packet_norm_sq(packet);
    *packet = packet.scaled(1.0 / packet.norm_sq.sqrt());
}

struct StripRun {
    problem: FiberProblem,
    window: EnergyWindow,
    images: Vec<InverseImage>,
    packet: WavePacket,
    curves: Vec<DispersionCurve>,
}

fn strip_packet(cfg: &RunConfig, b: f64, seed: Option<u64>) -> Result<StripRun> {
    let problem = FiberProblem::new(b, cfg.potential_at(b)?, cfg.solver)?;
    let w = cfg.window;
    let window = EnergyWindow::for_problem(&problem, w.level, w.lower, w.upper)?;
    let images = (0..=w.level)
        .map(|j| scan_minus_interval(&problem, j, &window))
        .collect::<Result<Vec<_>>>()?;
    let mut packet = build_packet(&images, &window, cfg.packet.shape, cfg.packet.gamma, cfg.packet.nodes)?;
    if let Some(seed) = seed {
        jitter(&mut packet, seed);
    }
    let curves = trace_packet_curves(&problem, &packet, true)?;
    Ok(StripRun {
        problem,
        window,
        images,
        packet,
        curves,
    })
}

/// Dispersion curves with inverse images, the gap test and the wall checks.
pub fn dispersion(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome> {
    cfg.require_potential()?;
    let out = OutDir::create(cfg, opts)?;
    let w = cfg.window;
    let j_max = cfg.sampling.bands.map_or(w.level, |n| (n - 1).max(w.level));
    let mut verdicts = Vec::new();
    let mut entries = Vec::new();
    let mut plots = Vec::new();
    for &b in &cfg.fields {
        let pot = cfg.potential_at(b)?;
        let problem = FiberProblem::new(b, pot, cfg.solver)?;
        let window = EnergyWindow::for_problem(&problem, w.level, w.lower, w.upper)?;
        let ks = default_k_grid(&problem, w.level, cfg.sampling.k_samples);
        let curves = trace_curves(&problem, j_max, &ks, false)?;
        let name = format!("dispersion_{}_{}.csv", pot.name(), field_tag(b));
        let mut csv = Vec::new();
        write_curves_csv(&curves, &mut csv)?;
        fs::write(out.path(&name), csv)?;
        plots.push((name.clone(), b, curves.len()));

        let params = json!({ "potential": pot.name(), "field": b, "level": w.level });
        let images = if pot == ConfiningPotential::Free {
            Vec::new()
        } else {
            curves[..=w.level]
                .iter()
                .map(|c| inverse_image(c, &window))
                .collect::<Result<Vec<_>>>()?
        };
        let gap = gap_test(&curves, &window, &images);
        verdicts.push(Verdict::new(
            "band_separation",
            params.clone(),
            gap.min_gap - gap.window_width,
            if gap.pass() { Status::Pass } else { Status::Fail },
        ));
        let mut odd = 0.0f64;
        for c in &curves {
            let n = c.k.len();
            for i in 0..n / 2 {
                odd = odd.max((c.omega[i] - c.omega[n - 1 - i]).abs() / c.omega[i].abs());
            }
        }
        verdicts.push(Verdict::from_margin("curve_evenness", params.clone(), 1e-9 - odd));
        let asymptotes: Vec<_> = curves.iter().map(|c| asymptote_check(c, &pot, b, 5)).collect();
        for a in &asymptotes {
            let ok = a.monotone && a.within_bounds;
            verdicts.push(Verdict::new(
                "dispersion_asymptote",
                json!({ "potential": pot.name(), "field": b, "band": a.band }),
                if ok { 0.0 } else { -1.0 },
                if ok { Status::Pass } else { Status::Fail },
            ));
        }
        let wave = match pot.width() {
            Some(width) if !images.is_empty() => {
                let r = wave_number_check(&images, b, width, cfg.sampling.alpha)?;
                // the localization is a large-B statement
                let status = if r.pass { Status::Pass } else { Status::Precondition };
                verdicts.push(Verdict::new(
                    "wave_number_localization",
                    json!({ "potential": pot.name(), "field": b, "alpha": cfg.sampling.alpha, "threshold": r.threshold }),
                    r.rightmost.map_or(f64::INFINITY, |x| r.threshold - x),
                    status,
                ));
                Some(r)
            }
            _ => None,
        };
        let mut worst_fd = 0.0f64;
        for c in &curves {
            for i in 1..c.k.len().saturating_sub(1) {
                worst_fd = worst_fd.max((c.d_omega_fh[i] - c.d_omega_fd[i]).abs());
            }
        }
        entries.push(json!({
            "field": b,
            "potential": pot,
            "window": window,
            "k_samples": ks.len(),
            "csv": name,
            "inverse_images": images,
            "gap": gap,
            "wave_number": wave,
            "asymptotes": asymptotes,
            "max_slope_difference": worst_fd,
        }));
    }
    out.json("dispersion.json", &json!({ "units": units(), "runs": entries }))?;
    let mut gp = String::from("set datafile separator ','\nset xlabel 'k'\nset ylabel 'omega'\nset key outside\nplot \\\n");
    let mut lines = Vec::new();
    for (name, b, bands) in &plots {
        for j in 0..*bands {
            lines.push(format!("  '{name}' skip 1 using 1:{} with lines title 'B={b} band {j}'", 2 + 3 * j));
        }
    }
    gp.push_str(&lines.join(", \\\n"));
    gp.push('\n');
    out.text("dispersion.gp", &gp)?;
    out.verdicts(&verdicts)?;
    report_verdicts(&verdicts);
    Ok(outcome_of(&verdicts))
}

#[derive(Serialize)]
struct CurrentEntry {
    #[serde(flatten)]
    report: CurrentReport,
    direct_current: f64,
    minus_intervals: Vec<InverseImage>,
}

fn current_report(cfg: &RunConfig, run: &StripRun) -> Result<CurrentEntry> {
    let b = run.problem.field;
    let gamma = cfg.packet.gamma;
    let current = edge_current(&run.packet, &run.curves)?;
    let direct = direct_current(&run.packet, &run.curves, b)?;
    let bound = match run.problem.potential {
        ConfiningPotential::Parabolic { stiffness } if gamma > 0.0 => {
            let model = ParabolicModel::new(b, stiffness)?;
            Some(parabolic_bound(&model, &run.window, gamma) * run.packet.norm_sq)
        }
        _ => None,
    };
    let margin = if gamma == 0.0 {
        Some(1e-10 * b.sqrt() - direct.abs())
    } else {
        bound.map(|lb| -current - lb)
    };
    let agree = (current - direct).abs() <= 1e-8 * current.abs().max(b.sqrt());
    let pass = agree
        && match margin {
            Some(m) => m >= 0.0,
            None => current < 0.0,
        };
    Ok(CurrentEntry {
        report: CurrentReport {
            potential: run.problem.potential.name().into(),
            field: b,
            window: run.window,
            gamma: gamma_label(gamma),
            current,
            current_per_sqrt_b: current / b.sqrt(),
            bound,
            margin,
            pass,
        },
        direct_current: direct,
        minus_intervals: run.images.clone(),
    })
}

fn profiles_csv(runs: &[(f64, &WavePacket)]) -> String {
    let mut s = String::from("field,band,k,beta\n");
    for (b, packet) in runs {
        for band in &packet.bands {
            for (k, beta) in band.k.iter().zip(&band.beta) {
                let _ = writeln!(s, "{},{},{},{}", fmt_num(*b), band.band, fmt_num(*k), fmt_num(*beta));
            }
        }
    }
    s
}

/// Edge current of the configured packet at each field strength.
pub fn current(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome> {
    cfg.require_potential()?;
    let out = OutDir::create(cfg, opts)?;
    let runs = cfg
        .fields
        .iter()
        .map(|&b| strip_packet(cfg, b, opts.seed))
        .collect::<Result<Vec<_>>>()?;
    let entries = runs.iter().map(|r| current_report(cfg, r)).collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("field,potential,gamma,current,current_per_sqrt_b,direct_current,pass\n");
    for e in &entries {
        let r = &e.report;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            fmt_num(r.field),
            r.potential,
            r.gamma,
            fmt_num(r.current),
            fmt_num(r.current_per_sqrt_b),
            fmt_num(e.direct_current),
            r.pass
        );
    }
    out.text("current.csv", &csv)?;
    let packets: Vec<(f64, &WavePacket)> = runs.iter().map(|r| (r.problem.field, &r.packet)).collect();
    out.text("current_profiles.csv", &profiles_csv(&packets))?;
    let slope = if entries.len() >= 2 && entries.iter().all(|e| e.report.current < 0.0) {
        let fs: Vec<f64> = entries.iter().map(|e| e.report.field).collect();
        let js: Vec<f64> = entries.iter().map(|e| -e.report.current).collect();
        Some(fit_loglog(&fs, &js)?.0)
    } else {
        None
    };
    let verdicts: Vec<Verdict> = entries
        .iter()
        .map(|e| {
            let r = &e.report;
            Verdict::new(
                "edge_current",
                json!({ "potential": r.potential, "field": r.field, "gamma": r.gamma, "current": r.current }),
                r.margin.unwrap_or(-r.current),
                if r.pass { Status::Pass } else { Status::Fail },
            )
        })
        .collect();
    out.json(
        "current_report.json",
        &json!({ "units": units(), "seed": opts.seed, "reports": entries, "field_exponent": slope }),
    )?;
    out.verdicts(&verdicts)?;
    report_verdicts(&verdicts);
    Ok(outcome_of(&verdicts))
}

/// Current growth across the field sweep and the fitted current constant.
pub fn scaling(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome> {
    let pot = cfg.require_potential()?;
    if pot.width().is_none() {
        return Err(Error::Config("scaling needs a sharp or power wall".into()));
    }
    if cfg.fields.len() < crate::verify::MIN_FIT_POINTS {
        return Err(Error::Config(format!(
            "scaling needs at least {} field strengths",
            crate::verify::MIN_FIT_POINTS
        )));
    }
    if !(cfg.packet.gamma > 0.0) {
        return Err(Error::Config("scaling needs an asymmetric packet (gamma > 0)".into()));
    }
    let out = OutDir::create(cfg, opts)?;
    let mut currents = Vec::new();
    let mut minus = Vec::new();
    for &b in &cfg.fields {
        let run = strip_packet(cfg, b, opts.seed)?;
        currents.push(edge_current(&run.packet, &run.curves)?);
        let mut slopes = Vec::new();
        for c in &run.curves {
            slopes.extend_from_slice(&c.d_omega_fh[..c.k.len() / 2]);
        }
        minus.push((b, slopes));
    }
    let mut csv = String::from("field,current,current_per_sqrt_b\n");
    for (b, j) in cfg.fields.iter().zip(&currents) {
        let _ = writeln!(csv, "{},{},{}", fmt_num(*b), fmt_num(*j), fmt_num(j / b.sqrt()));
    }
    out.text("scaling.csv", &csv)?;
    out.text(
        "scaling.gp",
        "set datafile separator ','\nset logscale xy\nset xlabel 'B'\nset ylabel '-current'\n\
         plot 'scaling.csv' skip 1 using 1:(-$2) with linespoints title '-J', \
         '' skip 1 using 1:(-$3) with linespoints title '-J/sqrt(B)'\n",
    )?;
    let params = json!({ "potential": pot.name(), "fields": cfg.fields, "gamma": gamma_label(cfg.packet.gamma) });
    let mut verdicts = Vec::new();
    let slope = if currents.iter().all(|&j| j < 0.0) {
        let js: Vec<f64> = currents.iter().map(|j| -j).collect();
        let (slope, _, rms) = fit_loglog(&cfg.fields, &js)?;
        verdicts.push(Verdict::from_margin("sqrt_b_scaling", params.clone(), 0.1 - (slope - 0.5).abs()));
        Some((slope, rms))
    } else {
        verdicts.push(Verdict::new("sqrt_b_scaling", params.clone(), f64::NAN, Status::Fail));
        None
    };
    let w = cfg.window;
    let cn = match cn_extract(&minus, w.lower, w.upper) {
        Ok(cn) => {
            verdicts.push(Verdict::new(
                "current_constant",
                json!({ "potential": pot.name(), "C_n_hat": cn.constant.value, "variation": cn.variation }),
                0.3 - cn.variation,
                if cn.stable && cn.constant.value > 0.0 { Status::Pass } else { Status::Fail },
            ));
            Some(cn)
        }
        Err(Error::LemmaViolated(msg)) => {
            verdicts.push(Verdict::new("current_constant", json!({ "error": msg }), f64::NAN, Status::Fail));
            None
        }
        Err(e) => return Err(e),
    };
    out.json(
        "scaling.json",
        &json!({
            "units": units(),
            "fields": cfg.fields,
            "currents": currents,
            "slope": slope.map(|s| s.0),
            "fit_residual": slope.map(|s| s.1),
            "current_constant": cn,
        }),
    )?;
    out.verdicts(&verdicts)?;
    report_verdicts(&verdicts);
    Ok(outcome_of(&verdicts))
}

/// Cylinder mode spectrum, packet current and, when configured, the coupled-mode solve.
pub fn cylinder(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome> {
    cfg.require_potential()?;
    let Geometry::Cylinder {
        circumference,
        m_max,
        p_cap,
    } = cfg.geometry
    else {
        return Err(Error::Config("cylinder needs [geometry] kind = \"cylinder\"".into()));
    };
    let out = OutDir::create(cfg, opts)?;
    let w = cfg.window;
    let gamma = cfg.packet.gamma;
    let mut verdicts = Vec::new();
    let mut entries = Vec::new();
    for &b in &cfg.fields {
        let pot = cfg.potential_at(b)?;
        let geom = CylinderGeometry::new(circumference, pot, b)?;
        let window = EnergyWindow::new(w.level, w.lower, w.upper, b)?;
        let spectrum = assemble_spectrum(&geom, m_max.unwrap_or(w.level), &window, &cfg.solver, p_cap)?;
        let name = format!("cylinder_spectrum_{}.csv", field_tag(b));
        let mut csv = Vec::new();
        write_spectrum_csv(&spectrum, &mut csv)?;
        fs::write(out.path(&name), csv)?;
        let params = json!({ "potential": pot.name(), "field": b, "circumference": circumference });

        let mut anti = 0.0f64;
        for &(m, p) in spectrum.entries.keys().filter(|&&(_, p)| p > 0) {
            let (a, c) = (eigenstate_current(&spectrum, m, p)?, eigenstate_current(&spectrum, m, -p)?);
            anti = anti.max((a + c).abs() / a.abs().max(1.0));
        }
        verdicts.push(Verdict::from_margin("cylinder_mirror_currents", params.clone(), 1e-8 - anti));

        let modes = spectrum.window_modes();
        let packet_current = match build_cylinder_packet(&spectrum, gamma) {
            Ok(packet) => {
                let j = packet_current(&spectrum, &packet)?;
                let (margin, ok) = if gamma == 0.0 {
                    (1e-10 * b.sqrt() - j.abs(), j.abs() <= 1e-10 * b.sqrt())
                } else {
                    (-j, j < 0.0)
                };
                verdicts.push(Verdict::new(
                    "cylinder_packet_current",
                    json!({ "field": b, "gamma": gamma_label(gamma), "current": j }),
                    margin,
                    if ok { Status::Pass } else { Status::Fail },
                ));
                Some(j)
            }
            Err(Error::EmptyPacket) => {
                verdicts.push(Verdict::new(
                    "cylinder_packet_current",
                    json!({ "field": b, "gamma": gamma_label(gamma), "window_modes": 0 }),
                    f64::NAN,
                    Status::Precondition,
                ));
                None
            }
            Err(e) => return Err(e),
        };

        let perturbed = match &cfg.perturbation {
            Some(perturbation) => {
                let couplings = perturbation
                    .terms
                    .iter()
                    .map(|t| t.coupling(pot.half_width().max(0.5)))
                    .collect::<Result<Vec<_>>>()?;
                let r = perturbed_cylinder_project(&geom, &couplings, &window, &perturbation.settings, gamma)?;
                verdicts.push(Verdict::from_margin(
                    "cylinder_eigenvalue_shift",
                    json!({ "field": b, "dimension": r.dimension, "perturbation_norm": r.perturbation_norm }),
                    r.perturbation_norm - r.max_shift,
                ));
                if gamma > 0.0 {
                    let kept = r.perturbed_current / r.unperturbed_current;
                    let ok = r.unperturbed_current < 0.0 && r.perturbed_current < 0.0;
                    verdicts.push(Verdict::new(
                        "cylinder_perturbed_current",
                        json!({ "field": b, "unperturbed": r.unperturbed_current, "perturbed": r.perturbed_current }),
                        kept,
                        if ok { Status::Pass } else { Status::Fail },
                    ));
                }
                Some(r)
            }
            None => None,
        };
        entries.push(json!({
            "field": b,
            "potential": pot,
            "window": window,
            "csv": name,
            "p_range": spectrum.p_range,
            "p_star": spectrum.p_star,
            "window_modes": modes,
            "gamma": gamma_label(gamma),
            "packet_current": packet_current,
            "perturbed": perturbed,
        }));
    }
    out.json("cylinder_report.json", &json!({ "units": units(), "runs": entries }))?;
    out.verdicts(&verdicts)?;
    report_verdicts(&verdicts);
    Ok(outcome_of(&verdicts))
}

/// Runs the configured verification suites and writes verdicts plus a summary table.
pub fn verify(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome> {
    let out = OutDir::create(cfg, opts)?;
    let ctx = SuiteContext {
        solver: cfg.solver,
        fast: cfg.verify.fast,
    };
    let mut verdicts = Vec::new();
    let mut csv = String::from("suite,lemma,status,margin\n");
    for suite in &cfg.verify.suites {
        let found = run_suite(suite, &ctx);
        for v in &found {
            let status = serde_json::to_value(v.status).expect("status serializes");
            let _ = writeln!(csv, "{suite},{},{},{}", v.lemma, status.as_str().unwrap_or_default(), fmt_num(v.margin));
        }
        verdicts.extend(found);
    }
    out.text("verify_summary.csv", &csv)?;
    out.verdicts(&verdicts)?;
    report_verdicts(&verdicts);
    Ok(outcome_of(&verdicts))
}

/// Loads the config file, or the defaults when none is given.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}
