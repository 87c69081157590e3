use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the uniform variable is mapped onto the `s`-grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UMode {
    /// `floor(s u) / s`
    #[default]
    Floor,
    /// `(2 floor(s u) + 1) / (2 s)`, the cell midpoint
    Symmetric,
}

impl UMode {
    /// Worst-case distance between `u` and its discretisation, in units of `1/s`.
    pub fn error_factor(self) -> f64 {
        match self {
            UMode::Floor => 1.0,
            UMode::Symmetric => 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// `s(n) = n^r`
    Polynomial { r: u32 },
    /// `s(n) = ceil(gamma^n)`
    Exponential { gamma: f64 },
}

/// The lattice-resolution map `n -> s(n)`, with `s(0) = s(1) = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretisationSchedule {
    pub kind: ScheduleKind,
    #[serde(default)]
    pub u_mode: UMode,
}

/// Largest resolution we accept; beyond this `f64` lattice coordinates lose integrality.
const MAX_S: u64 = 1 << 52;

impl DiscretisationSchedule {
    pub fn polynomial(r: u32) -> Self {
        DiscretisationSchedule { kind: ScheduleKind::Polynomial { r }, u_mode: UMode::Floor }
    }

    pub fn exponential(gamma: f64) -> Self {
        DiscretisationSchedule { kind: ScheduleKind::Exponential { gamma }, u_mode: UMode::Floor }
    }

    pub fn with_u_mode(mut self, u_mode: UMode) -> Self {
        self.u_mode = u_mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ScheduleKind::Polynomial { r: 0 } => {
                Err(Error::InvalidArgument("polynomial schedule needs r >= 1".into()))
            }
            ScheduleKind::Exponential { gamma } if !(gamma > 1.0 && gamma.is_finite()) => {
                Err(Error::InvalidArgument("exponential schedule needs gamma > 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn s(&self, n: u32) -> Result<u64> {
        schedule_s(self, n)
    }

    /// Human-readable label, e.g. `n^3` or `1.5^n`.
    pub fn label(&self) -> String {
        let base = match self.kind {
            ScheduleKind::Polynomial { r } => format!("n^{r}"),
            ScheduleKind::Exponential { gamma } => format!("{gamma}^n"),
        };
        match self.u_mode {
            UMode::Floor => base,
            UMode::Symmetric => format!("{base} (symmetric)"),
        }
    }
}

pub fn schedule_s(sched: &DiscretisationSchedule, n: u32) -> Result<u64> {
    sched.validate()?;
    if n <= 1 {
        return Ok(1);
    }
    let s = match sched.kind {
        ScheduleKind::Polynomial { r } => (n as u64)
            .checked_pow(r)
            .ok_or(Error::ScheduleOverflow { n })?,
        ScheduleKind::Exponential { gamma } => {
            let raw = gamma.powi(n as i32);
            // integral powers computed slightly high must not round up a whole step
            let v = if (raw - raw.round()).abs() <= 1e-9 * raw { raw.round() } else { raw.ceil() };
            if !v.is_finite() || v > MAX_S as f64 {
                return Err(Error::ScheduleOverflow { n });
            }
            v as u64
        }
    };
    if s > MAX_S {
        return Err(Error::ScheduleOverflow { n });
    }
    Ok(s)
}

/// Maps `u` in `[0, 1]` to its grid representative.
#[inline]
pub fn discretise_u(u: f64, s: u64, mode: UMode) -> f64 {
    let sf = s as f64;
    // nudge so that cell/s <= u < (cell+1)/s holds in the same arithmetic
    let mut cell = (sf * u).floor();
    if cell / sf > u {
        cell -= 1.0;
    } else if (cell + 1.0) / sf <= u {
        cell += 1.0;
    }
    match mode {
        UMode::Floor => cell / sf,
        UMode::Symmetric => (2.0 * cell + 1.0) / (2.0 * sf),
    }
}

/// The grid point used for u-index `i` in a step with resolution `s`.
#[inline]
pub fn grid_u(i: u64, s: u64, mode: UMode) -> f64 {
    match mode {
        UMode::Floor => i as f64 / s as f64,
        UMode::Symmetric => (2 * i + 1) as f64 / (2 * s) as f64,
    }
}
