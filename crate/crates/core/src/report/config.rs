//! TOML run configuration. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::current::ProfileShape;
use crate::cylinder::{Harmonic, ModeCoupling, PerturbedSettings};
use crate::dispersion::EnergyWindow;
use crate::error::{Error, Result};
use crate::fiber::SolverConfig;
use crate::potentials::ConfiningPotential;

/// How the wall height follows the field in a sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeightRule {
    /// Use the configured height at every B.
    #[default]
    Fixed,
    /// Sharp: 2(2n+c)·B. Power: (2n+c)·B^{(p+2)/2}.
    Window,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSpec {
    pub level: usize,
    pub lower: f64,
    pub upper: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            level: 0,
            lower: 1.5,
            upper: 1.7,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Geometry {
    #[default]
    Strip,
    Cylinder {
        circumference: f64,
        #[serde(default)]
        m_max: Option<usize>,
        #[serde(default = "default_p_cap")]
        p_cap: i64,
    },
}

fn default_p_cap() -> i64 {
    10_000
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacketSpec {
    pub shape: ProfileShape,
    pub gamma: f64,
    /// Profile nodes per band on the minus interval.
    pub nodes: usize,
}

impl Default for PacketSpec {
    fn default() -> Self {
        Self {
            shape: ProfileShape::CosineBump,
            gamma: 1.0,
            nodes: 41,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    pub k_samples: usize,
    /// Bands traced by `dispersion`; defaults to level + 1.
    pub bands: Option<usize>,
    /// α of the wave-number localization check.
    pub alpha: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            k_samples: 401,
            bands: None,
            alpha: 3.0,
        }
    }
}

/// One perturbation term: either explicit samples or a cos² bump filling the strip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub harmonic: Harmonic,
    pub index: u32,
    #[serde(default)]
    pub bump: Option<f64>,
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

impl TermSpec {
    pub fn coupling(&self, half_width: f64) -> Result<ModeCoupling> {
        match (self.bump, &self.x, &self.values) {
            (Some(amp), None, None) => Ok(ModeCoupling::bump(self.harmonic, self.index, amp, half_width, 401)),
            (None, Some(x), Some(values)) => Ok(ModeCoupling {
                harmonic: self.harmonic,
                index: self.index,
                x: x.clone(),
                values: values.clone(),
            }),
            _ => Err(Error::Config(
                "a perturbation term needs either `bump` or both `x` and `values`".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSpec {
    pub settings: PerturbedSettings,
    pub terms: Vec<TermSpec>,
}

pub const SUITES: [&str; 7] = ["oracle", "derivatives", "currents", "wavenumber", "scaling", "lemmas", "cylinder"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub suites: Vec<String>,
    /// Smaller samplings where accuracy allows.
    pub fast: bool,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            suites: SUITES.iter().map(|s| s.to_string()).collect(),
            fast: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub potential: Option<ConfiningPotential>,
    pub wall_height: HeightRule,
    pub fields: Vec<f64>,
    pub window: WindowSpec,
    pub geometry: Geometry,
    pub packet: PacketSpec,
    pub solver: SolverConfig,
    pub sampling: Sampling,
    pub perturbation: Option<PerturbationSpec>,
    pub verify: VerifySpec,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            potential: None,
            wall_height: HeightRule::Fixed,
            fields: vec![100.0],
            window: WindowSpec::default(),
            geometry: Geometry::Strip,
            packet: PacketSpec::default(),
            solver: SolverConfig::default(),
            sampling: Sampling::default(),
            perturbation: None,
            verify: VerifySpec::default(),
            output: None,
        }
    }
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(config_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.potential {
            p.validate().map_err(config_error)?;
        }
        if self.fields.is_empty() || self.fields.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(config_error("fields must be a non-empty list of positive numbers"));
        }
        EnergyWindow::new(self.window.level, self.window.lower, self.window.upper, 1.0).map_err(config_error)?;
        if let Geometry::Cylinder { circumference, p_cap, .. } = self.geometry {
            if !(circumference > 0.0 && circumference.is_finite()) || p_cap < 1 {
                return Err(config_error("cylinder needs circumference > 0 and p_cap >= 1"));
            }
        }
        if !(self.packet.gamma >= 0.0) || self.packet.nodes < 3 {
            return Err(config_error("packet needs gamma >= 0 and at least 3 nodes"));
        }
        self.solver.validate().map_err(config_error)?;
        if self.sampling.k_samples < 3 || !(self.sampling.alpha > 2.0) {
            return Err(config_error("sampling needs k_samples >= 3 and alpha > 2"));
        }
        if self.sampling.bands == Some(0) {
            return Err(config_error("sampling.bands must be at least 1"));
        }
        if let Some(p) = &self.perturbation {
            if p.settings.grid_points < 5 || p.settings.dimension_cap == 0 {
                return Err(config_error("perturbation settings need grid_points >= 5 and a positive dimension cap"));
            }
            for t in &p.terms {
                t.coupling(0.5)?;
            }
        }
        if self.verify.suites.is_empty() {
            return Err(config_error("verify.suites selects nothing"));
        }
        if let Some(bad) = self.verify.suites.iter().find(|s| !SUITES.contains(&s.as_str())) {
            return Err(config_error(format!("unknown verify suite `{bad}` (known: {})", SUITES.join(", "))));
        }
        Ok(())
    }

    pub fn require_potential(&self) -> Result<ConfiningPotential> {
        self.potential.ok_or_else(|| config_error("this command needs a [potential] table"))
    }

    /// The configured wall at field strength `b`, after the height rule.
    pub fn potential_at(&self, b: f64) -> Result<ConfiningPotential> {
        let pot = self.require_potential()?;
        let top = (2 * self.window.level) as f64 + self.window.upper;
        Ok(match (self.wall_height, pot) {
            (HeightRule::Window, ConfiningPotential::Sharp { width, .. }) => ConfiningPotential::Sharp {
                height: 2.0 * top * b,
                width,
            },
            (HeightRule::Window, ConfiningPotential::Power { width, exponent, .. }) => ConfiningPotential::Power {
                height: top * b.powf(0.5 * (exponent + 2.0)),
                width,
                exponent,
            },
            (_, p) => p,
        })
    }
}
