use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elementwise activations with exact derivative rules.
///
/// `Srelu` is the compactly supported hat `relu(x) * relu(1 - x)`, useful for
/// scaled sub-networks that should only respond on a bounded input range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Sin,
    Srelu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sin => x.sin(),
            Activation::Srelu => x.max(0.0) * (1.0 - x).max(0.0),
        }
    }

    /// d/dx of the activation given the input `x` and the output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sin => x.cos(),
            Activation::Srelu => {
                if x > 0.0 && x < 1.0 {
                    1.0 - 2.0 * x
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Sin => "sin",
            Activation::Srelu => "srelu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "sin" => Ok(Activation::Sin),
            "srelu" => Ok(Activation::Srelu),
            other => Err(Error::config(format!(
                "unknown activation `{other}` (expected tanh, relu, sin, or srelu)"
            ))),
        }
    }
}
