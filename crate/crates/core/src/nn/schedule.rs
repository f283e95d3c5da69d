use serde::{Deserialize, Serialize};

use crate::error::{DdrError, Result};

/// Piecewise-constant value keyed by (0-based) epoch.
///
/// Each segment `(start, value)` is in force from `start` until the next
/// segment begins. The first segment must start at epoch 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, f64)>", into = "Vec<(usize, f64)>")]
pub struct PiecewiseSchedule {
    segments: Vec<(usize, f64)>,
}

impl TryFrom<Vec<(usize, f64)>> for PiecewiseSchedule {
    type Error = DdrError;

    fn try_from(segments: Vec<(usize, f64)>) -> Result<Self> {
        PiecewiseSchedule::new(segments)
    }
}

impl From<PiecewiseSchedule> for Vec<(usize, f64)> {
    fn from(s: PiecewiseSchedule) -> Self {
        s.segments
    }
}

impl PiecewiseSchedule {
    pub fn new(mut segments: Vec<(usize, f64)>) -> Result<Self> {
        segments.sort_by_key(|s| s.0);
        match segments.first() {
            Some((0, _)) => {}
            _ => return Err(DdrError::invalid("schedule must start at epoch 0")),
        }
        if segments.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(DdrError::invalid("schedule has duplicate start epochs"));
        }
        if segments.iter().any(|s| !s.1.is_finite()) {
            return Err(DdrError::invalid("schedule values must be finite"));
        }
        Ok(PiecewiseSchedule { segments })
    }

    pub fn constant(value: f64) -> Self {
        PiecewiseSchedule {
            segments: vec![(0, value)],
        }
    }

    pub fn value_at(&self, epoch: usize) -> f64 {
        self.segments
            .iter()
            .rev()
            .find(|(start, _)| *start <= epoch)
            .map(|s| s.1)
            .unwrap_or(self.segments[0].1)
    }

    pub fn segments(&self) -> &[(usize, f64)] {
        &self.segments
    }
}
