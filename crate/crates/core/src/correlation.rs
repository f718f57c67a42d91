use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat3, C64};

/// Index into the pseudospin triple, ordered (−, +, z).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spin {
    Minus = 0,
    Plus = 1,
    Z = 2,
}

impl Spin {
    pub const ALL: [Spin; 3] = [Spin::Minus, Spin::Plus, Spin::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Spin::Minus => "-",
            Spin::Plus => "+",
            Spin::Z => "z",
        }
    }
}

/// Which route produced a correlation or spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sto,
    Qrt,
    Grn,
    /// Propagated-field estimate; produced only by the FDTD route.
    Fdtd,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sto => "sto",
            Method::Qrt => "qrt",
            Method::Grn => "grn",
            Method::Fdtd => "fdtd",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sto" => Ok(Method::Sto),
            "qrt" => Ok(Method::Qrt),
            "grn" => Ok(Method::Grn),
            other => Err(Error::config("methods", format!("unknown method `{other}`"))),
        }
    }
}

/// Uniform lag grid τ_m = m·dt, m = 0..len.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauGrid {
    pub dt: f64,
    pub len: usize,
}

impl TauGrid {
    pub fn new(dt: f64, len: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParams(format!("tau step must be > 0, got {dt}")));
        }
        if len == 0 {
            return Err(Error::InvalidParams("tau grid must contain at least τ = 0".into()));
        }
        Ok(TauGrid { dt, len })
    }

    /// Grid covering [0, tau_max] with step `dt` (tau_max rounded to a whole step).
    pub fn covering(dt: f64, tau_max: f64) -> Result<Self> {
        Self::new(dt, (tau_max / dt).round() as usize + 1)
    }

    /// Default lag grid: Δτ = T₁/200 up to 15·T₁.
    pub fn default_for(t1: f64) -> Self {
        TauGrid {
            dt: t1 / 200.0,
            len: 3001,
        }
    }

    pub fn tau(&self, m: usize) -> f64 {
        m as f64 * self.dt
    }

    pub fn tau_max(&self) -> f64 {
        self.tau(self.len - 1)
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|m| self.tau(m))
    }
}

/// Two-time fluctuation correlation C_ij(τ) on a lag grid.
#[derive(Debug, Clone)]
pub struct CorrelationSeries {
    pub grid: TauGrid,
    pub values: Vec<CMat3>,
    pub method: Method,
    /// Per-entry standard errors (real and imaginary part separately) for
    /// Monte Carlo estimates.
    pub stderr: Option<Vec<[[(f64, f64); 3]; 3]>>,
}

impl CorrelationSeries {
    pub fn component(&self, i: Spin, j: Spin) -> Vec<C64> {
        self.values.iter().map(|m| m[(i.index(), j.index())]).collect()
    }

    pub fn component_stderr(&self, i: Spin, j: Spin) -> Option<Vec<(f64, f64)>> {
        self.stderr
            .as_ref()
            .map(|s| s.iter().map(|e| e[i.index()][j.index()]).collect())
    }

    /// Largest entrywise deviation from another series on the same grid.
    pub fn max_deviation(&self, other: &CorrelationSeries) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| crate::linalg::max_abs(&(a - b)))
            .fold(0.0, f64::max)
    }

    /// Plain tabular dump: τ then `re,im` columns for every (i, j) in row-major order.
    pub fn to_table(&self) -> String {
        let mut out = format!("# method = {}\n# tau", self.method.as_str());
        for i in Spin::ALL {
            for j in Spin::ALL {
                out.push_str(&format!(
                    ",re_C{}{},im_C{}{}",
                    i.label(),
                    j.label(),
                    i.label(),
                    j.label()
                ));
            }
        }
        out.push('\n');
        for (m, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{:.10e}", self.grid.tau(m)));
            for i in 0..3 {
                for j in 0..3 {
                    out.push_str(&format!(",{:.12e},{:.12e}", v[(i, j)].re, v[(i, j)].im));
                }
            }
            out.push('\n');
        }
        out
    }
}
