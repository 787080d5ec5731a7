//! Even confining walls V₀(x) and their pointwise derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ConfiningPotential {
    /// Step of height `height` outside the strip |x| < width/2.
    Sharp { height: f64, width: f64 },
    /// `height * (|x| - width/2)^exponent` outside the strip.
    Power {
        height: f64,
        width: f64,
        exponent: f64,
    },
    /// `stiffness^2 * x^2`.
    Parabolic { stiffness: f64 },
    /// No wall; the fibers are plain Landau oscillators.
    Free,
}

impl ConfiningPotential {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Sharp { height, width } => {
                if !(height >= 0.0 && height.is_finite()) {
                    return Err(invalid(format!("sharp wall height {height} must be finite and >= 0")));
                }
                if !(width > 0.0 && width.is_finite()) {
                    return Err(invalid(format!("strip width {width} must be positive")));
                }
            }
            Self::Power {
                height,
                width,
                exponent,
            } => {
                if !(height >= 0.0 && height.is_finite()) {
                    return Err(invalid(format!("power wall height {height} must be finite and >= 0")));
                }
                if !(width > 0.0 && width.is_finite()) {
                    return Err(invalid(format!("strip width {width} must be positive")));
                }
                if !(exponent > 1.0 && exponent.is_finite()) {
                    return Err(invalid(format!("power exponent {exponent} must exceed 1")));
                }
            }
            Self::Parabolic { stiffness } => {
                if !(stiffness > 0.0 && stiffness.is_finite()) {
                    return Err(invalid(format!("stiffness {stiffness} must be positive")));
                }
            }
            Self::Free => {}
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Sharp { .. } => "sharp",
            Self::Power { .. } => "power",
            Self::Parabolic { .. } => "parabolic",
            Self::Free => "free",
        }
    }

    /// Half the strip width, where the walls begin. Zero for walls without a strip.
    pub fn half_width(&self) -> f64 {
        match *self {
            Self::Sharp { width, .. } | Self::Power { width, .. } => 0.5 * width,
            _ => 0.0,
        }
    }

    /// Strip width when the potential has one.
    pub fn width(&self) -> Option<f64> {
        match *self {
            Self::Sharp { width, .. } | Self::Power { width, .. } => Some(width),
            _ => None,
        }
    }

    /// Limit of V₀ at infinity.
    pub fn limit_at_infinity(&self) -> f64 {
        match *self {
            Self::Sharp { height, .. } => height,
            Self::Power { height: 0.0, .. } => 0.0,
            Self::Power { .. } | Self::Parabolic { .. } => f64::INFINITY,
            Self::Free => 0.0,
        }
    }

    #[must_use]
    pub fn evaluate(&self, x: f64) -> f64 {
        let ax = x.abs();
        match *self {
            Self::Sharp { height, width } => {
                let edge = 0.5 * width;
                if ax > edge {
                    height
                } else if ax == edge {
                    0.5 * height
                } else {
                    0.0
                }
            }
            Self::Power {
                height,
                width,
                exponent,
            } => {
                let d = ax - 0.5 * width;
                if d > 0.0 {
                    height * d.powf(exponent)
                } else {
                    0.0
                }
            }
            Self::Parabolic { stiffness } => stiffness * stiffness * x * x,
            Self::Free => 0.0,
        }
    }

    /// Pointwise V₀′(x); `None` for the sharp wall, whose derivative is a pair of deltas.
    #[must_use]
    pub fn smooth_derivative(&self, x: f64) -> Option<f64> {
        match *self {
            Self::Sharp { .. } => None,
            Self::Power {
                height,
                width,
                exponent,
            } => {
                let d = x.abs() - 0.5 * width;
                if d > 0.0 {
                    Some(x.signum() * exponent * height * d.powf(exponent - 1.0))
                } else {
                    Some(0.0)
                }
            }
            Self::Parabolic { stiffness } => Some(2.0 * stiffness * stiffness * x),
            Self::Free => Some(0.0),
        }
    }

    /// Field that sets the fiber length scale: B for walls, √(B²+g²) for the parabola.
    pub fn effective_field(&self, field: f64) -> f64 {
        match *self {
            Self::Parabolic { stiffness } => field.hypot(stiffness),
            _ => field,
        }
    }
}
