//! Pairwise, per-cell and trajectory infection risk.
//!
//! A patient occupying a cell at `(x_p, y_p, t_p)` exposes a person in cell
//! `(x, y, t)` with probability
//!
//! ```text
//! p0 * exp(-(x - x_p)^2 / sx^2 - (y - y_p)^2 / sy^2 - (t - t_p)^2 / st^2)   if t >= t_p
//! 0                                                                       otherwise
//! ```
//!
//! Every (user cell, patient cell) pair is an independent Bernoulli exposure,
//! so the per-cell and per-trajectory risks are complements of products of
//! complements. Products are accumulated as sums of `ln(1 - p)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `0.01 / sqrt(2 pi)`, the base probability of the reference decay example.
pub const DEFAULT_P0: f64 = 0.01 / 2.506_628_274_631_000_7;

/// Upper clamp applied to a probability before taking `ln(1 - p)`.
pub const MAX_FACTOR_PROBABILITY: f64 = 1.0 - 1e-15;

/// `ln(1 - p)` with `p` clamped to `[0, 1 - 1e-15]`.
#[inline]
pub fn log_complement(p: f64) -> f64 {
    (-p.clamp(0.0, MAX_FACTOR_PROBABILITY)).ln_1p()
}

/// Inverse of [`log_complement`]: `1 - exp(log_q)`.
#[inline]
pub fn probability_from_log_complement(log_q: f64) -> f64 {
    (0.0 - log_q.exp_m1()).clamp(0.0, 1.0)
}

/// Decay model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskParams {
    p0: f64,
    sigma_x: f64,
    sigma_y: f64,
    sigma_t: f64,
}

/// Precision view of [`RiskParams`]: `tau = 1 / sigma^2` per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Precisions {
    pub tau_x: f64,
    pub tau_y: f64,
    pub tau_t: f64,
}

impl RiskParams {
    pub fn new(p0: f64, sigma_x: f64, sigma_y: f64, sigma_t: f64) -> Result<Self> {
        if !(p0 > 0.0 && p0 < 1.0) {
            return Err(Error::InvalidParams(format!("p0 must lie in (0, 1), got {p0}")));
        }
        for (name, v) in [("sigma_x", sigma_x), ("sigma_y", sigma_y), ("sigma_t", sigma_t)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(Self { p0, sigma_x, sigma_y, sigma_t })
    }

    /// Isotropic spatial decay with the default base probability.
    pub fn isotropic(sigma_xy: f64, sigma_t: f64) -> Result<Self> {
        Self::new(DEFAULT_P0, sigma_xy, sigma_xy, sigma_t)
    }

    /// Parameters of the reference decay example: `p0 = 0.01/sqrt(2 pi)`,
    /// `sx = sy = 1 m`, `st = 100 s`.
    pub fn reference() -> Self {
        Self { p0: DEFAULT_P0, sigma_x: 1.0, sigma_y: 1.0, sigma_t: 100.0 }
    }

    /// Builds parameters from a shared spatial precision and a temporal precision.
    pub fn from_precisions(p0: f64, tau: f64, tau_t: f64) -> Result<Self> {
        if !(tau > 0.0 && tau_t > 0.0) {
            return Err(Error::InvalidParams(format!("precisions must be positive, got tau={tau}, tau_t={tau_t}")));
        }
        let s = tau.sqrt().recip();
        Self::new(p0, s, s, tau_t.sqrt().recip())
    }

    pub fn with_sigma_t(self, sigma_t: f64) -> Result<Self> {
        Self::new(self.p0, self.sigma_x, self.sigma_y, sigma_t)
    }

    pub fn with_p0(self, p0: f64) -> Result<Self> {
        Self::new(p0, self.sigma_x, self.sigma_y, self.sigma_t)
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigma_x
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }

    pub fn sigma_t(&self) -> f64 {
        self.sigma_t
    }

    pub fn precisions(&self) -> Precisions {
        Precisions {
            tau_x: (self.sigma_x * self.sigma_x).recip(),
            tau_y: (self.sigma_y * self.sigma_y).recip(),
            tau_t: (self.sigma_t * self.sigma_t).recip(),
        }
    }

    /// Re-validates fields, e.g. after deserializing.
    pub fn validate(&self) -> Result<()> {
        Self::new(self.p0, self.sigma_x, self.sigma_y, self.sigma_t).map(|_| ())
    }
}

impl Default for RiskParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// One occupied spatio-temporal cell, given by its center: `x`, `y` in meters
/// of a planar local frame and `t` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresenceCell {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl PresenceCell {
    pub const fn new(x: f64, y: f64, t: f64) -> Self {
        Self { x, y, t }
    }
}

/// An ordered sequence of occupied cells for one person.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    /// Local-only label. Never written into maps or requests.
    pub person_id: Option<String>,
    cells: Vec<PresenceCell>,
}

impl Trajectory {
    /// Fails unless cell times are strictly increasing.
    pub fn new(cells: Vec<PresenceCell>) -> Result<Self> {
        if let Some(w) = cells.windows(2).find(|w| !(w[1].t > w[0].t)) {
            return Err(Error::Ordering(format!(
                "trajectory times must be strictly increasing ({} then {})",
                w[0].t, w[1].t
            )));
        }
        Ok(Self { person_id: None, cells })
    }

    pub fn with_person_id(mut self, id: impl Into<String>) -> Self {
        self.person_id = Some(id.into());
        self
    }

    /// Optional sanity bound: consecutive cells must not imply a speed above
    /// `max_speed` (m/s).
    pub fn check_max_speed(&self, max_speed: f64) -> Result<()> {
        for w in self.cells.windows(2) {
            let dist = (w[1].x - w[0].x).hypot(w[1].y - w[0].y);
            let dt = w[1].t - w[0].t;
            if dist > max_speed * dt {
                return Err(Error::Domain(format!(
                    "step of {dist} m in {dt} s exceeds max speed {max_speed} m/s at t={}",
                    w[1].t
                )));
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> &[PresenceCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn into_cells(self) -> Vec<PresenceCell> {
        self.cells
    }
}

/// Infection probability for a user cell from a single patient cell.
#[inline]
pub fn pairwise_risk(user: &PresenceCell, patient: &PresenceCell, params: &RiskParams) -> f64 {
    if user.t < patient.t {
        return 0.0;
    }
    let dx = (user.x - patient.x) / params.sigma_x;
    let dy = (user.y - patient.y) / params.sigma_y;
    let dt = (user.t - patient.t) / params.sigma_t;
    params.p0 * (-(dx * dx) - dy * dy - dt * dt).exp()
}

/// `sum_i ln(1 - pairwise_risk(user, patient_i))`.
pub fn cell_log_complement(user: &PresenceCell, patients: &[PresenceCell], params: &RiskParams) -> f64 {
    patients.iter().map(|p| log_complement(pairwise_risk(user, p, params))).sum()
}

/// Aggregate risk of one cell from any number of patient cells. Duplicated
/// patient cells count as separate exposures.
pub fn cell_risk(user: &PresenceCell, patients: &[PresenceCell], params: &RiskParams) -> f64 {
    probability_from_log_complement(cell_log_complement(user, patients, params))
}

/// `ln(1 - P(C = 1 | s))` for a user trajectory.
pub fn trajectory_log_complement(user: &Trajectory, patients: &[PresenceCell], params: &RiskParams) -> f64 {
    user.cells().iter().map(|c| cell_log_complement(c, patients, params)).sum()
}

/// Overall infection probability of a user trajectory.
pub fn trajectory_risk(user: &Trajectory, patients: &[PresenceCell], params: &RiskParams) -> f64 {
    probability_from_log_complement(trajectory_log_complement(user, patients, params))
}
