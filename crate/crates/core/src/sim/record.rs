use serde::{Deserialize, Serialize};

use super::SourceConfig;
use crate::error::argument;
use crate::Result;

/// Integer tallies behind the rates of a [`CountRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCounts {
    pub signal: u64,
    pub idler: u64,
    pub central: u64,
    /// Sum over all satellite windows.
    pub satellite_sum: u64,
    pub satellite_windows: u32,
}

/// Singles and coincidence rates over one integration window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    #[serde(default, rename = "power_mW", skip_serializing_if = "Option::is_none")]
    pub pump_power_mw: Option<f64>,
    pub duration_s: f64,
    #[serde(rename = "N_s")]
    pub n_s: f64,
    #[serde(rename = "N_i")]
    pub n_i: f64,
    #[serde(rename = "C_raw")]
    pub c_raw: f64,
    #[serde(rename = "C_b")]
    pub c_b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_counts: Option<RawCounts>,
}

impl CountRecord {
    /// Record from rates alone, e.g. a hand-entered measurement.
    pub fn from_rates(pump_power_mw: Option<f64>, n_s: f64, n_i: f64, c_raw: f64, c_b: f64) -> Self {
        Self { pump_power_mw, duration_s: 1.0, n_s, n_i, c_raw, c_b, raw_counts: None }
    }

    /// Net coincidence rate `C_raw − C_b`.
    pub fn net_coincidences(&self) -> f64 {
        self.c_raw - self.c_b
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("duration_s", self.duration_s),
            ("N_s", self.n_s),
            ("N_i", self.n_i),
            ("C_raw", self.c_raw),
            ("C_b", self.c_b),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(argument(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.duration_s > 0.0) {
            return Err(argument("duration_s must be positive"));
        }
        Ok(())
    }

    /// Statistical oddities that are reported rather than rejected.
    pub fn flags(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.c_raw > self.n_s.min(self.n_i) {
            out.push(format!("C_raw {} exceeds min(N_s, N_i) {}", self.c_raw, self.n_s.min(self.n_i)));
        }
        if self.c_b > self.c_raw {
            out.push(format!("C_b {} exceeds C_raw {}", self.c_b, self.c_raw));
        }
        out
    }

    /// Counts behind each rate: the stored tallies when present, otherwise
    /// `rate × duration` with a single satellite window.
    pub fn counts(&self) -> RawCounts {
        self.raw_counts.unwrap_or_else(|| {
            let n = |r: f64| (r * self.duration_s).round() as u64;
            RawCounts {
                signal: n(self.n_s),
                idler: n(self.n_i),
                central: n(self.c_raw),
                satellite_sum: n(self.c_b),
                satellite_windows: 1,
            }
        })
    }
}

/// Record as written to disk, with the generating configuration echoed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFile {
    #[serde(flatten)]
    pub record: CountRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<SourceConfig>,
}
