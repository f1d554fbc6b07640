use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named numeric tolerances threaded through the pipeline.
///
/// Every field can be overridden by name (`--tol name=value` on the CLI).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Root matching radius for the numerical gcd.
    pub gcd_eps: f64,
    /// Relative tolerance for Smith form residuals and zero tests.
    pub smith: f64,
    /// Maximum accepted equation residual for a feedback law.
    pub residual: f64,
    /// Relative Newton corrector tolerance while path tracking.
    pub corrector: f64,
    /// Cluster radius used to merge path endpoints.
    pub dedup: f64,
    /// Largest imaginary part (relative) of a coefficient deemed real.
    pub real: f64,
    /// Norm beyond which a path is declared to diverge.
    pub at_infinity: f64,
    /// Threshold on |det D_h| in the realization.
    pub dh_singular: f64,
    /// Coefficient matching residual allowed in the realization.
    pub realization: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            gcd_eps: 1e-8,
            smith: 1e-8,
            residual: 1e-8,
            corrector: 1e-10,
            dedup: 1e-6,
            real: 1e-6,
            at_infinity: 1e8,
            dh_singular: 1e-10,
            realization: 1e-8,
        }
    }
}

impl Tolerances {
    pub const NAMES: [&'static str; 9] = [
        "gcd_eps",
        "smith",
        "residual",
        "corrector",
        "dedup",
        "real",
        "at_infinity",
        "dh_singular",
        "realization",
    ];

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Parse(format!("tolerance {name} must be positive, got {value}")));
        }
        let slot = match name {
            "gcd_eps" => &mut self.gcd_eps,
            "smith" => &mut self.smith,
            "residual" => &mut self.residual,
            "corrector" => &mut self.corrector,
            "dedup" => &mut self.dedup,
            "real" => &mut self.real,
            "at_infinity" => &mut self.at_infinity,
            "dh_singular" => &mut self.dh_singular,
            "realization" => &mut self.realization,
            _ => return Err(Error::Parse(format!("unknown tolerance `{name}`"))),
        };
        *slot = value;
        Ok(())
    }

    /// Parses `name=value`.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected name=value, got `{spec}`")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad tolerance value `{value}`")))?;
        self.set(name.trim(), value)
    }
}
