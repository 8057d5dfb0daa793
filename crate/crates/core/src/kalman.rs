//! Constant-velocity Kalman smoothing for per-axis position series.
//!
//! Each player coordinate is filtered independently with a two-state
//! (position, velocity) model driven by white acceleration noise. The
//! filter is strictly causal: the estimate at an instant uses only
//! samples up to that instant, so results match what an online consumer
//! of the stream would have seen.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Axis, FrameSeries};

/// Noise model for the constant-velocity filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanConfig {
    /// White-acceleration spectral density q, in (m/s^2)^2 per second.
    pub process_noise: f64,
    /// Measurement variance R, in m^2. The default corresponds to a
    /// 0.2 m sensor standard deviation.
    pub measurement_noise: f64,
    /// Prior variance on the unknown initial velocity, in (m/s)^2.
    pub initial_velocity_variance: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig {
            process_noise: 1.0,
            measurement_noise: 0.04,
            initial_velocity_variance: 10.0,
        }
    }
}

impl KalmanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.process_noise > 0.0) || !self.process_noise.is_finite() {
            return Err(Error::Config(format!(
                "kalman process_noise must be positive, got {}",
                self.process_noise
            )));
        }
        if !(self.measurement_noise > 0.0) || !self.measurement_noise.is_finite() {
            return Err(Error::Config(format!(
                "kalman measurement_noise must be positive, got {}",
                self.measurement_noise
            )));
        }
        if !(self.initial_velocity_variance >= 0.0)
            || !self.initial_velocity_variance.is_finite()
        {
            return Err(Error::Config(format!(
                "kalman initial_velocity_variance must be non-negative, got {}",
                self.initial_velocity_variance
            )));
        }
        Ok(())
    }
}

/// One-axis constant-velocity filter with explicit 2x2 arithmetic.
///
/// State is (position, velocity); the transition over a step of `dt`
/// seconds is x' = x + dt v, v' = v. Process noise integrates white
/// acceleration over the step:
///
/// ```text
/// Q = q * [dt^4/4  dt^3/2]
///         [dt^3/2  dt^2  ]
/// ```
///
/// The covariance update uses the Joseph form and re-symmetrizes, which
/// keeps the matrix positive semidefinite under long runs.
#[derive(Debug, Clone, Copy)]
pub struct AxisFilter {
    position: f64,
    velocity: f64,
    /// Covariance entries [p00, p01, p11]; p10 == p01 by construction.
    cov: [f64; 3],
    gain: [f64; 2],
    q: f64,
    r: f64,
}

impl AxisFilter {
    /// Initializes at the first measurement with zero velocity. The
    /// position prior carries the measurement variance; the velocity
    /// prior is wide since nothing is known about motion yet.
    pub fn new(first_measurement: f64, config: &KalmanConfig) -> Self {
        AxisFilter {
            position: first_measurement,
            velocity: 0.0,
            cov: [
                config.measurement_noise,
                0.0,
                config.initial_velocity_variance,
            ],
            gain: [0.0, 0.0],
            q: config.process_noise,
            r: config.measurement_noise,
        }
    }

    /// Predicts `dt` seconds ahead, fuses the measurement `z`, and
    /// returns the updated position estimate.
    pub fn step(&mut self, dt: f64, z: f64) -> f64 {
        let [p00, p01, p11] = self.cov;

        // Predict.
        let x_pred = self.position + dt * self.velocity;
        let v_pred = self.velocity;
        let dt2 = dt * dt;
        let q00 = self.q * dt2 * dt2 / 4.0;
        let q01 = self.q * dt2 * dt / 2.0;
        let q11 = self.q * dt2;
        let pp00 = p00 + 2.0 * dt * p01 + dt2 * p11 + q00;
        let pp01 = p01 + dt * p11 + q01;
        let pp11 = p11 + q11;

        // Update.
        let s = pp00 + self.r;
        let k0 = pp00 / s;
        let k1 = pp01 / s;
        let innovation = z - x_pred;
        self.position = x_pred + k0 * innovation;
        self.velocity = v_pred + k1 * innovation;
        self.gain = [k0, k1];

        // Joseph form: P = (I - K H) P (I - K H)^T + K R K^T.
        let a00 = (1.0 - k0) * pp00;
        let a01 = (1.0 - k0) * pp01;
        let a10 = pp01 - k1 * pp00;
        let a11 = pp11 - k1 * pp01;
        let n00 = a00 * (1.0 - k0) + k0 * k0 * self.r;
        let n01 = -a00 * k1 + a01 + k0 * k1 * self.r;
        let n10 = a10 * (1.0 - k0) + k0 * k1 * self.r;
        let n11 = -a10 * k1 + a11 + k1 * k1 * self.r;
        self.cov = [n00, 0.5 * (n01 + n10), n11];

        self.position
    }

    pub fn position(&self) -> f64 {
        self.position
    }

    pub fn velocity(&self) -> f64 {
        self.velocity
    }

    /// Full covariance matrix [[p00, p01], [p10, p11]].
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let [p00, p01, p11] = self.cov;
        [[p00, p01], [p01, p11]]
    }

    /// Gain used by the most recent update.
    pub fn gain(&self) -> [f64; 2] {
        self.gain
    }
}

/// Filters one coordinate series sampled every `dt` seconds.
///
/// The first output equals the first input (the filter initializes
/// there); subsequent outputs are the causal position estimates.
pub fn filter_axis(values: &[f64], dt: f64, config: &KalmanConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if values.is_empty() {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("kalman dt must be positive, got {dt}")));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let mut out = Vec::with_capacity(values.len());
    let mut filter = AxisFilter::new(values[0], config);
    out.push(values[0]);
    for z in &values[1..] {
        out.push(filter.step(dt, *z));
    }
    Ok(out)
}

/// Applies [`filter_axis`] to every player and both axes of a frame
/// series, independently. Marks the result as filtered.
pub fn filter_frames(frames: &FrameSeries, config: &KalmanConfig) -> Result<FrameSeries> {
    config.validate()?;
    if frames.is_empty() {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    let dt = frames.grid_step as f64 / 1000.0;
    let mut out = frames.clone();
    for player_idx in 0..frames.players.len() {
        for axis in [Axis::X, Axis::Y] {
            let series = frames.axis_series(player_idx, axis);
            let filtered = filter_axis(&series, dt, config)?;
            out.set_axis_series(player_idx, axis, &filtered);
        }
    }
    out.filtered = true;
    Ok(out)
}
