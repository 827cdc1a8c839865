//! Right-invariant EKF on SE₂(3) for the robot state relative to a moving ground.
//!
//! Propagation uses the exact discretization `X⁺ = Z_D⁻¹ X Z_B` with
//! `Z = exp(U Δt)` for inputs held over the step. The covariance follows the
//! linear log-error dynamics `ξ̇ = A ξ`, which depend only on the ground IMU.
//! Corrections are applied on the left: `X̄⁺ = exp(K r) X̄`.

use log::warn;
use nalgebra::{Matrix3, UnitQuaternion};

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, JointState, KinematicChain};
use crate::liegroup::{exp_se23, gamma0, gamma1, gamma2, Mat3, Mat5, Mat9, Tangent9, Vec3, Vec9, SE23};
use crate::models::{
    jacobian_h_at, measurement_noise, measurement_y, phi_blocks, predicted_foot_velocity, qbar,
    ImuFrame, ImuSample, NoiseParams,
};
use crate::streams::{GroundHold, SensorLog};

/// Updates whose innovation covariance is worse conditioned than this are skipped.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

/// `exp(U Δt)` for one IMU reading: an SE₂(3)-like block with `Δt` in entry (4, 5).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuIncrement {
    pub rot: Mat3,
    pub vel: Vec3,
    pub pos: Vec3,
    pub dt: f64,
}

impl ImuIncrement {
    pub fn to_matrix(&self) -> Mat5 {
        let mut m = SE23::new(self.rot, self.vel, self.pos).to_matrix();
        m[(3, 4)] = self.dt;
        m
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rot.transpose();
        Self {
            rot: rt,
            vel: -(rt * self.vel),
            pos: -(rt * (self.pos - self.vel * self.dt)),
            dt: -self.dt,
        }
    }
}

/// Closed-form `exp(U Δt)`: `Γ₀(ωΔt)`, `Γ₁(ωΔt) a Δt`, `Γ₂(ωΔt) a Δt²`.
pub fn zmatrix(sample: &ImuSample, dt: f64) -> Result<ImuIncrement> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::arg(format!("time step must be positive, got {dt}")));
    }
    let phi = sample.omega * dt;
    Ok(ImuIncrement {
        rot: gamma0(&phi),
        vel: gamma1(&phi) * sample.accel * dt,
        pos: gamma2(&phi) * sample.accel * (dt * dt),
        dt,
    })
}

/// `Z_D⁻¹ X Z_B`.
pub fn discrete_dynamics(x: &SE23, z_b: &ImuIncrement, z_d: &ImuIncrement) -> SE23 {
    let zd_inv = z_d.inverse();
    // X Z_B
    let rot = x.rot * z_b.rot;
    let vel = x.rot * z_b.vel + x.vel;
    let pos = x.rot * z_b.pos + x.vel * z_b.dt + x.pos;
    // Z_D⁻¹ (X Z_B); the (4,5) entries cancel.
    SE23::new(
        zd_inv.rot * rot,
        zd_inv.rot * vel + zd_inv.vel,
        zd_inv.rot * pos + zd_inv.vel * z_b.dt + zd_inv.pos,
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterState {
    pub xhat: SE23,
    pub cov: Mat9,
    pub t: f64,
}

impl FilterState {
    pub fn new(xhat: SE23, cov: Mat9, t: f64) -> Self {
        Self { xhat, cov, t }
    }

    pub fn max_asymmetry(&self) -> f64 {
        (self.cov - self.cov.transpose()).amax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.cov.symmetric_eigenvalues().min()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterConfig {
    pub noise: NoiseParams,
    pub initial_state: SE23,
    /// Diagonal of the initial covariance, ordered (rotation, velocity, position).
    pub initial_cov_diag: Vec9,
    pub ground_hold: GroundHold,
    pub reorth_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let rot = 23f64.to_radians().powi(2);
        Self {
            noise: NoiseParams::default(),
            initial_state: SE23::identity(),
            initial_cov_diag: Vec9::from_column_slice(&[rot, rot, rot, 1.0, 1.0, 1.0, 9.0, 9.0, 9.0]),
            ground_hold: GroundHold::ZeroOrder,
            reorth_threshold: 1e-8,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if self.initial_cov_diag.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::arg("initial covariance diagonal entries must be positive"));
        }
        if !self.initial_state.is_finite() {
            return Err(Error::arg("initial state is not finite"));
        }
        Ok(())
    }

    pub fn initial_filter_state(&self, t: f64) -> FilterState {
        FilterState::new(self.initial_state, Mat9::from_diagonal(&self.initial_cov_diag), t)
    }
}

fn symmetrize(p: &Mat9) -> Mat9 {
    (p + p.transpose()) * 0.5
}

/// One propagation step of length `dt` with both IMU readings held constant.
pub fn propagate(
    state: &FilterState,
    u_b: &ImuSample,
    u_d: &ImuSample,
    dt: f64,
    noise: &NoiseParams,
    reorth_threshold: f64,
) -> Result<FilterState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::arg(format!("time step must be positive, got {dt}")));
    }
    if u_b.frame != ImuFrame::RobotB || u_d.frame != ImuFrame::GroundD {
        return Err(Error::arg("propagate expects (RobotB, GroundD) samples"));
    }
    if !u_b.is_finite() || !u_d.is_finite() || !state.xhat.is_finite() {
        return Err(Error::fault(format!("non-finite input at t = {}", state.t)));
    }
    let z_b = zmatrix(u_b, dt)?;
    let z_d = zmatrix(u_d, dt)?;
    let xhat = discrete_dynamics(&state.xhat, &z_b, &z_d).reorthonormalized(reorth_threshold);

    let phi = phi_blocks(&u_d.omega, &u_d.accel, dt)?;
    let q = qbar(&state.xhat, noise);
    let cov = symmetrize(&(phi * (state.cov + q * dt) * phi.transpose()));
    Ok(FilterState::new(xhat, cov, state.t + dt))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateOutcome {
    pub state: FilterState,
    pub innovation: Vec3,
    /// True when the innovation covariance was too poorly conditioned to invert.
    pub skipped: bool,
}

/// Leg-odometry foot-velocity update.
pub fn update(
    state: &FilterState,
    joint: &JointState,
    omega_b: &Vec3,
    omega_d: &Vec3,
    chain: &KinematicChain,
    noise: &NoiseParams,
) -> Result<UpdateOutcome> {
    let s = forward_kinematics(chain, &joint.q)?;
    let y = measurement_y(omega_b, joint, chain)?;
    let xhat = &state.xhat;
    let innovation = y - predicted_foot_velocity(xhat, omega_d, &s);
    if !innovation.iter().all(|x| x.is_finite()) {
        return Err(Error::fault(format!("non-finite innovation at t = {}", state.t)));
    }
    let h = jacobian_h_at(xhat, omega_d, &s);
    let n = measurement_noise(xhat, noise);
    let p = state.cov;
    let s_mat: Matrix3<f64> = h * p * h.transpose() + n;
    let s_mat = (s_mat + s_mat.transpose()) * 0.5;

    let eig = s_mat.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let chol = if lo > 0.0 && hi / lo <= MAX_INNOVATION_CONDITION {
        s_mat.cholesky()
    } else {
        None
    };
    let Some(chol) = chol else {
        warn!(
            "skipping update at t = {}: innovation covariance is ill-conditioned (eigenvalues {lo:e}..{hi:e})",
            state.t
        );
        return Ok(UpdateOutcome {
            state: *state,
            innovation,
            skipped: true,
        });
    };

    // K = P Hᵀ S⁻¹, computed as (S⁻¹ H P)ᵀ.
    let gain = chol.solve(&(h * p)).transpose();
    let correction = Tangent9::from_vector(&(gain * innovation));
    let xhat = exp_se23(&correction) * *xhat;
    let i_kh = Mat9::identity() - gain * h;
    let cov = symmetrize(&(i_kh * p * i_kh.transpose() + gain * n * gain.transpose()));
    Ok(UpdateOutcome {
        state: FilterState::new(xhat, cov, state.t),
        innovation,
        skipped: false,
    })
}

/// One line of an estimate trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub rot: Mat3,
    pub vel: Vec3,
    pub pos: Vec3,
    pub cov_diag: Vec9,
    pub innovation_norm: f64,
}

impl TraceRecord {
    pub fn from_state(state: &FilterState, innovation_norm: f64) -> Self {
        Self {
            t: state.t,
            rot: state.xhat.rot,
            vel: state.xhat.vel,
            pos: state.xhat.pos,
            cov_diag: state.cov.diagonal(),
            innovation_norm,
        }
    }

    /// Unit quaternion `(w, x, y, z)` with non-negative scalar part.
    pub fn quaternion(&self) -> [f64; 4] {
        quaternion_wxyz(&self.rot)
    }
}

pub fn quaternion_wxyz(rot: &Mat3) -> [f64; 4] {
    let q = UnitQuaternion::from_matrix(rot);
    let q = q.quaternion();
    let sign = if q.w < 0.0 { -1.0 } else { 1.0 };
    [q.w * sign, q.i * sign, q.j * sign, q.k * sign]
}

/// Runs the filter over a log: one record per robot-IMU sample, an update at every
/// encoder sample.
pub fn run(log: &SensorLog, config: &FilterConfig, chain: &KinematicChain) -> Result<Vec<TraceRecord>> {
    let mut states = Vec::new();
    run_with(log, config, chain, |state, innov| {
        states.push(TraceRecord::from_state(state, innov));
    })?;
    Ok(states)
}

/// Like [`run`] but hands every post-update state to `visit` instead of collecting records.
pub fn run_with(
    log: &SensorLog,
    config: &FilterConfig,
    chain: &KinematicChain,
    mut visit: impl FnMut(&FilterState, f64),
) -> Result<()> {
    config.validate()?;
    let steps = log.schedule()?;
    if log.ground_imu.is_empty() {
        return Err(Error::fault("ground IMU stream is empty"));
    }
    let ground = |t: f64| {
        log.ground_at(t, config.ground_hold)
            .expect("ground stream checked non-empty")
    };

    let mut state = config.initial_filter_state(steps[0].t);
    for (k, step) in steps.iter().enumerate() {
        if k > 0 {
            let prev = &log.robot_imu[k - 1];
            let dt = step.t - prev.t;
            state = propagate(
                &state,
                prev,
                &ground(prev.t),
                dt,
                &config.noise,
                config.reorth_threshold,
            )?;
            // keep the clock on the sample grid rather than accumulating dt
            state.t = step.t;
        }
        let mut innov_norm = f64::NAN;
        if let Some(e) = step.encoder {
            let robot = &log.robot_imu[step.index];
            let outcome = update(
                &state,
                &log.encoders[e],
                &robot.omega,
                &ground(step.t).omega,
                chain,
                &config.noise,
            )?;
            state = outcome.state;
            innov_norm = outcome.innovation.norm();
        }
        visit(&state, innov_norm);
    }
    Ok(())
}
