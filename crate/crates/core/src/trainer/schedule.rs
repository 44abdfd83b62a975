use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::Cosine => "cosine",
        })
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ScheduleKind::Linear),
            "cosine" => Ok(ScheduleKind::Cosine),
            _ => Err(crate::error::Error::Config(format!("unknown schedule {s:?}"))),
        }
    }
}

pub fn warmup_steps(total_steps: usize, warmup_fraction: f64) -> usize {
    (warmup_fraction * total_steps as f64).round() as usize
}

/// Learning rate at `step`: linear ramp from 0 to `peak` over the warmup
/// steps, then linear or half-cosine decay reaching 0 at `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, peak: f64, warmup_fraction: f64, kind: ScheduleKind) -> Result<f64> {
    if step >= total_steps {
        return Err(contract(format!("step {step} outside schedule of {total_steps} steps")));
    }
    let warmup = warmup_steps(total_steps, warmup_fraction);
    if step < warmup {
        return Ok(peak * step as f64 / warmup as f64);
    }
    let u = (step - warmup) as f64 / (total_steps - warmup) as f64;
    Ok(match kind {
        ScheduleKind::Linear => peak * (1.0 - u),
        ScheduleKind::Cosine => peak * 0.5 * (1.0 + (std::f64::consts::PI * u).cos()),
    })
}
