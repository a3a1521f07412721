//! Time histories of the flow: per-step diagnostics plus strided field
//! snapshots.

use crate::error::{Result, TvError};
use crate::field::ScalarField;
use crate::grid::GridDomain;
use std::sync::Arc;

/// Scalar diagnostics recorded at every time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    /// Total variation including the boundary term (the relaxed energy of
    /// the state).
    pub tv: f64,
    /// Sup norm.
    pub linf: f64,
    /// L^N norm (N = spatial dimension).
    pub ln: f64,
    /// L^2 norm.
    pub l2: f64,
    /// `M(tv)` where `M` is the coefficient antiderivative — the Lyapunov
    /// quantity of the flow.
    pub energy: f64,
}

/// A computed flow history.
///
/// Diagnostics are recorded at every entry of `times`; full fields are kept
/// only at `snapshot_indices` (a strictly increasing subset of time indices
/// that always contains the first and last index), to bound memory.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    /// Sample times, strictly increasing, starting at 0.
    pub times: Vec<f64>,
    /// One diagnostics record per entry of `times`.
    pub diagnostics: Vec<StepDiagnostics>,
    /// Indices into `times` at which a field snapshot was stored.
    pub snapshot_indices: Vec<usize>,
    /// Stored fields, parallel to `snapshot_indices`.
    pub fields: Vec<ScalarField>,
    /// First time at which the solution is (numerically) zero, when reached.
    pub extinction_time: Option<f64>,
}

impl FlowTrajectory {
    /// Validate and wrap the parts of a trajectory.
    pub fn new(
        times: Vec<f64>,
        diagnostics: Vec<StepDiagnostics>,
        snapshot_indices: Vec<usize>,
        fields: Vec<ScalarField>,
        extinction_time: Option<f64>,
    ) -> Result<Self> {
        if times.is_empty() {
            return Err(TvError::Argument("trajectory has no time samples".into()));
        }
        if times[0] != 0.0 {
            return Err(TvError::Argument(format!(
                "trajectory must start at time 0, starts at {}",
                times[0]
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(TvError::Argument(
                "trajectory times must be strictly increasing".into(),
            ));
        }
        if diagnostics.len() != times.len() {
            return Err(TvError::Argument(format!(
                "{} diagnostics records for {} times",
                diagnostics.len(),
                times.len()
            )));
        }
        if fields.len() != snapshot_indices.len() {
            return Err(TvError::Argument(format!(
                "{} fields for {} snapshot indices",
                fields.len(),
                snapshot_indices.len()
            )));
        }
        if snapshot_indices.is_empty() {
            return Err(TvError::Argument("trajectory stores no snapshots".into()));
        }
        if snapshot_indices.windows(2).any(|w| w[1] <= w[0])
            || *snapshot_indices.last().unwrap() >= times.len()
        {
            return Err(TvError::Argument(
                "snapshot indices must be strictly increasing and in range".into(),
            ));
        }
        if snapshot_indices[0] != 0 || *snapshot_indices.last().unwrap() != times.len() - 1 {
            return Err(TvError::Argument(
                "snapshots must include the first and last time".into(),
            ));
        }
        Ok(FlowTrajectory {
            times,
            diagnostics,
            snapshot_indices,
            fields,
            extinction_time,
        })
    }

    /// Number of time samples (every step, not just snapshots).
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        self.fields[0].domain()
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Initial-state diagnostics.
    pub fn initial(&self) -> &StepDiagnostics {
        &self.diagnostics[0]
    }

    /// Time of the `j`-th stored snapshot.
    pub fn snapshot_time(&self, j: usize) -> f64 {
        self.times[self.snapshot_indices[j]]
    }

    /// Iterate `(time, field)` over stored snapshots.
    pub fn iter_snapshots(&self) -> impl Iterator<Item = (f64, &ScalarField)> {
        self.snapshot_indices
            .iter()
            .map(|&i| self.times[i])
            .zip(self.fields.iter())
    }

    /// The state at time `t`, linearly interpolated per cell between the
    /// bracketing snapshots.  Beyond the last snapshot the state is the zero
    /// field when the flow is extinct there; otherwise the query is an
    /// error.
    pub fn field_at_time(&self, t: f64) -> Result<ScalarField> {
        if t < 0.0 {
            return Err(TvError::Argument(format!("negative query time {t}")));
        }
        let t_last = self.snapshot_time(self.fields.len() - 1);
        if t > t_last {
            if self.extinction_time.map_or(false, |ext| t >= ext) {
                return Ok(ScalarField::zeros(self.domain().clone()));
            }
            return Err(TvError::Argument(format!(
                "query time {t} is beyond the last stored state at {t_last} and the flow is not extinct there"
            )));
        }
        // Find the first snapshot at or after t.
        let j = self
            .snapshot_indices
            .partition_point(|&i| self.times[i] < t);
        if j == 0 {
            return Ok(self.fields[0].clone());
        }
        let (t0, t1) = (self.snapshot_time(j - 1), self.snapshot_time(j));
        if t1 == t {
            return Ok(self.fields[j].clone());
        }
        let w = (t - t0) / (t1 - t0);
        let mut out = self.fields[j - 1].clone();
        let late = self.fields[j].values();
        for (v, &b) in out.values_mut().iter_mut().zip(late) {
            *v = *v * (1.0 - w) + b * w;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::indicator_field;
    use crate::grid::make_ball_domain;

    fn diag(v: f64) -> StepDiagnostics {
        StepDiagnostics {
            tv: v,
            linf: v,
            ln: v,
            l2: v,
            energy: v,
        }
    }

    #[test]
    fn validates_structure() {
        let d = make_ball_domain(1, 1.0, 0.1).unwrap();
        let f = indicator_field(&d, 0.5, 1.0).unwrap();
        // Valid two-sample trajectory.
        let ok = FlowTrajectory::new(
            vec![0.0, 0.1],
            vec![diag(1.0), diag(0.5)],
            vec![0, 1],
            vec![f.clone(), f.clone()],
            None,
        );
        assert!(ok.is_ok());
        // Must start at zero.
        assert!(FlowTrajectory::new(
            vec![0.1, 0.2],
            vec![diag(1.0), diag(0.5)],
            vec![0, 1],
            vec![f.clone(), f.clone()],
            None,
        )
        .is_err());
        // Strictly increasing times.
        assert!(FlowTrajectory::new(
            vec![0.0, 0.0],
            vec![diag(1.0), diag(0.5)],
            vec![0, 1],
            vec![f.clone(), f.clone()],
            None,
        )
        .is_err());
        // Snapshot must cover the final time.
        assert!(FlowTrajectory::new(
            vec![0.0, 0.1],
            vec![diag(1.0), diag(0.5)],
            vec![0],
            vec![f.clone()],
            None,
        )
        .is_err());
        // Diagnostics length mismatch.
        assert!(FlowTrajectory::new(
            vec![0.0, 0.1],
            vec![diag(1.0)],
            vec![0, 1],
            vec![f.clone(), f],
            None,
        )
        .is_err());
    }

    #[test]
    fn interpolates_between_snapshots() {
        let d = make_ball_domain(1, 1.0, 0.1).unwrap();
        let u0 = indicator_field(&d, 0.5, 1.0).unwrap();
        let mut u1 = u0.clone();
        u1.scale(0.0);
        let traj = FlowTrajectory::new(
            vec![0.0, 1.0],
            vec![diag(1.0), diag(0.0)],
            vec![0, 1],
            vec![u0.clone(), u1],
            Some(1.0),
        )
        .unwrap();
        let mid = traj.field_at_time(0.25).unwrap();
        for (a, b) in mid.values().iter().zip(u0.values()) {
            assert!((a - 0.75 * b).abs() < 1e-15);
        }
        // Beyond extinction: zero field.
        let after = traj.field_at_time(2.0).unwrap();
        assert!(after.values().iter().all(|&v| v == 0.0));
        // Exact endpoints round-trip.
        assert_eq!(traj.field_at_time(0.0).unwrap().values(), u0.values());
    }

    #[test]
    fn rejects_queries_beyond_live_trajectory() {
        let d = make_ball_domain(1, 1.0, 0.1).unwrap();
        let f = indicator_field(&d, 0.5, 1.0).unwrap();
        let traj = FlowTrajectory::new(
            vec![0.0, 0.1],
            vec![diag(1.0), diag(0.9)],
            vec![0, 1],
            vec![f.clone(), f],
            None,
        )
        .unwrap();
        assert!(traj.field_at_time(0.2).is_err());
        assert!(traj.field_at_time(-0.1).is_err());
    }
}
