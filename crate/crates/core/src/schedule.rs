//! Step-size and trust schedules.
//!
//! The textual form accepted by [`Schedule::from_str`] is deliberately small:
//!
//! | text                  | value at step `t`      |
//! |-----------------------|------------------------|
//! | `c`                   | `c`                    |
//! | `c/(1+t/tau)`         | `c / (1 + t/tau)`      |
//! | `c/(1+t/tau)^p`       | `c / (1 + t/tau)^p`    |
//! | `1/t`                 | `1 / max(t, 1)`        |
//!
//! A per-state table is available programmatically but has no textual form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Schedule {
    Constant(f64),
    Decaying { c: f64, tau: f64, power: f64 },
    Reciprocal,
    PerState(Vec<f64>),
}

impl Schedule {
    /// Value at global time `t` while the process is in `state`.
    pub fn at(&self, t: u64, state: usize) -> f64 {
        match self {
            Schedule::Constant(c) => *c,
            Schedule::Decaying { c, tau, power } => {
                let base = 1.0 + t as f64 / tau;
                if *power == 1.0 {
                    c / base
                } else {
                    c / base.powf(*power)
                }
            }
            Schedule::Reciprocal => 1.0 / t.max(1) as f64,
            Schedule::PerState(table) => table[state],
        }
    }

    /// True when the value never depends on `t`.
    pub fn is_stationary(&self) -> bool {
        matches!(self, Schedule::Constant(_) | Schedule::PerState(_))
    }
}

fn number(text: &str, whole: &str) -> Result<f64> {
    let v: f64 = text
        .parse()
        .map_err(|_| Error::Schedule(whole.to_string()))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Schedule(whole.to_string()))
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if compact == "1/t" {
            return Ok(Schedule::Reciprocal);
        }
        if let Some((c, rest)) = compact.split_once("/(1+t/") {
            let (tau, tail) = rest
                .split_once(')')
                .ok_or_else(|| Error::Schedule(s.to_string()))?;
            let power = if tail.is_empty() {
                1.0
            } else {
                let p = tail
                    .strip_prefix('^')
                    .ok_or_else(|| Error::Schedule(s.to_string()))?;
                number(p, s)?
            };
            let c = number(c, s)?;
            let tau = number(tau, s)?;
            if tau <= 0.0 || power <= 0.0 {
                return Err(Error::Schedule(s.to_string()));
            }
            return Ok(Schedule::Decaying { c, tau, power });
        }
        number(&compact, s).map(Schedule::Constant)
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Constant(c) => write!(f, "{c}"),
            Schedule::Decaying { c, tau, power } if *power == 1.0 => write!(f, "{c}/(1+t/{tau})"),
            Schedule::Decaying { c, tau, power } => write!(f, "{c}/(1+t/{tau})^{power}"),
            Schedule::Reciprocal => write!(f, "1/t"),
            Schedule::PerState(table) => write!(f, "per-state{table:?}"),
        }
    }
}

/// The pair of rules used when turning a sampled trajectory into an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSchedule {
    pub alpha: Schedule,
    pub beta: Schedule,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            alpha: Schedule::Constant(0.1),
            beta: Schedule::Constant(1.0),
        }
    }
}
