//! Deviation events: deterministic membership tests on trajectories.
//!
//! Events realize the closed/open sets of the decay-rate statements. All
//! norms are sup norms over `[0, T]`; endpoint events look only at `z(T)`.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::path::Trajectory;
use crate::stats::norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfspaceSide {
    /// Event `{ z_i(T) >= threshold }`.
    Above,
    /// Event `{ z_i(T) <= threshold }`.
    Below,
}

#[derive(Debug, Clone)]
pub enum EventSpec {
    /// Endpoint coordinate beyond a threshold.
    EndpointHalfspace { coord: usize, threshold: f64, side: HalfspaceSide },
    /// Endpoint outside a ball: `{ |z(T) - center| >= radius }`.
    EndpointBallExterior { center: Vec<f64>, radius: f64 },
    /// Path leaves the tube of given radius around a reference trajectory:
    /// `{ sup_{[0,T]} |z(t) - ref(t)| > radius }`.
    TubeExit { reference: Trajectory, radius: f64 },
}

impl EventSpec {
    /// Validate against the grid and state dimension the event will see.
    pub fn validate_for(&self, grid: &TimeGrid, dim: usize) -> Result<()> {
        match self {
            EventSpec::EndpointHalfspace { coord, threshold, .. } => {
                if *coord >= dim {
                    return Err(Error::InvalidArgument(format!(
                        "event coordinate {coord} out of range for dimension {dim}"
                    )));
                }
                if threshold.is_nan() {
                    return Err(Error::InvalidArgument("event threshold is NaN".into()));
                }
            }
            EventSpec::EndpointBallExterior { center, radius } => {
                if center.len() != dim {
                    return Err(Error::InvalidArgument(format!(
                        "event center has dimension {}, state has {dim}",
                        center.len()
                    )));
                }
                if !(*radius >= 0.0) {
                    return Err(Error::InvalidArgument("event radius must be nonnegative".into()));
                }
            }
            EventSpec::TubeExit { reference, radius } => {
                if !reference.grid().same_as(grid) {
                    return Err(Error::GridMismatch("tube reference is on a different grid".into()));
                }
                if reference.dim() != dim {
                    return Err(Error::GridMismatch(format!(
                        "tube reference has dimension {}, state has {dim}",
                        reference.dim()
                    )));
                }
                if !(*radius >= 0.0) {
                    return Err(Error::InvalidArgument("tube radius must be nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    /// Deterministic membership test.
    pub fn contains(&self, traj: &Trajectory) -> bool {
        match self {
            EventSpec::EndpointHalfspace { coord, threshold, side } => {
                let v = traj.endpoint()[*coord];
                match side {
                    HalfspaceSide::Above => v >= *threshold,
                    HalfspaceSide::Below => v <= *threshold,
                }
            }
            EventSpec::EndpointBallExterior { center, radius } => {
                let z = traj.endpoint();
                let d: Vec<f64> = z.iter().zip(center).map(|(a, b)| a - b).collect();
                norm(&d) >= *radius
            }
            EventSpec::TubeExit { reference, radius } => {
                let g = traj.grid();
                (g.origin_index()..g.n_nodes()).any(|i| {
                    let a = traj.node(i);
                    let b = reference.node(i);
                    let d: Vec<f64> = a.iter().zip(b).map(|(a, b)| a - b).collect();
                    norm(&d) > *radius
                })
            }
        }
    }

    /// How far the endpoint is from satisfying the event; zero inside.
    /// Only defined for the endpoint events the minimizer supports.
    pub fn endpoint_shortfall(&self, endpoint: &[f64]) -> Option<f64> {
        match self {
            EventSpec::EndpointHalfspace { coord, threshold, side } => {
                let v = endpoint[*coord];
                Some(match side {
                    HalfspaceSide::Above => (threshold - v).max(0.0),
                    HalfspaceSide::Below => (v - threshold).max(0.0),
                })
            }
            EventSpec::EndpointBallExterior { center, radius } => {
                let d: Vec<f64> = endpoint.iter().zip(center).map(|(a, b)| a - b).collect();
                Some((radius - norm(&d)).max(0.0))
            }
            EventSpec::TubeExit { .. } => None,
        }
    }

    /// Gradient of `shortfall^2` with respect to the endpoint.
    pub(crate) fn shortfall_sq_gradient(&self, endpoint: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match self {
            EventSpec::EndpointHalfspace { coord, threshold, side } => {
                let v = endpoint[*coord];
                match side {
                    HalfspaceSide::Above => {
                        let s = threshold - v;
                        if s > 0.0 {
                            out[*coord] = -2.0 * s;
                        }
                    }
                    HalfspaceSide::Below => {
                        let s = v - threshold;
                        if s > 0.0 {
                            out[*coord] = 2.0 * s;
                        }
                    }
                }
            }
            EventSpec::EndpointBallExterior { center, radius } => {
                let d: Vec<f64> = endpoint.iter().zip(center).map(|(a, b)| a - b).collect();
                let dist = norm(&d);
                let s = radius - dist;
                if s > 0.0 && dist > 1e-14 {
                    for (o, dc) in out.iter_mut().zip(&d) {
                        *o = -2.0 * s * dc / dist;
                    }
                }
            }
            EventSpec::TubeExit { .. } => {}
        }
    }

    pub fn is_minimizable(&self) -> bool {
        !matches!(self, EventSpec::TubeExit { .. })
    }

    /// Short human-readable description for summaries.
    pub fn describe(&self) -> String {
        match self {
            EventSpec::EndpointHalfspace { coord, threshold, side } => {
                let op = match side {
                    HalfspaceSide::Above => ">=",
                    HalfspaceSide::Below => "<=",
                };
                format!("z_{coord}(T) {op} {threshold}")
            }
            EventSpec::EndpointBallExterior { center, radius } => {
                format!("|z(T) - {center:?}| >= {radius}")
            }
            EventSpec::TubeExit { radius, .. } => format!("sup |z - ref| > {radius}"),
        }
    }
}
