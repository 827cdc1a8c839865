//! Contact-aided right-invariant EKF that treats the ground as a static world frame.
//!
//! State `(R, v, p, d)` in world coordinates, with `d` the stance-foot position,
//! right-invariant error `η = X̄X⁻¹` and tangent order (rotation, velocity,
//! position, contact). Only the robot IMU and the encoders are used.

use log::warn;
use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::filter::TraceRecord;
use crate::kinematics::{forward_kinematics, leg_jacobian, JointState, KinematicChain};
use crate::liegroup::{gamma0, gamma1, gamma2, hat3, project_to_rotation, Mat3, Vec3, Vec9};
use crate::models::{ImuFrame, ImuSample};
use crate::streams::SensorLog;

pub type Vec12 = SVector<f64, 12>;
pub type Mat12 = SMatrix<f64, 12, 12>;
pub type Mat3x12 = SMatrix<f64, 3, 12>;

pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SrsNoiseParams {
    pub sd_gyro: f64,
    pub sd_accel: f64,
    /// Joint-angle noise (rad) mapped through the leg Jacobian.
    pub sd_encoder: f64,
    /// Random-walk SD of the contact point (m/s).
    pub sd_contact_walk: f64,
}

impl Default for SrsNoiseParams {
    fn default() -> Self {
        Self {
            sd_gyro: 0.01,
            sd_accel: 0.3,
            sd_encoder: 1f64.to_radians(),
            sd_contact_walk: 0.01,
        }
    }
}

impl SrsNoiseParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.sd_gyro, self.sd_accel, self.sd_encoder, self.sd_contact_walk];
        if all.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::arg("noise standard deviations must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SrsState {
    pub rot: Mat3,
    pub vel: Vec3,
    pub pos: Vec3,
    pub contact: Vec3,
    pub cov: Mat12,
    pub t: f64,
}

impl SrsState {
    /// Starts with the contact point placed at the foot, `d = p + R s(q)`, so its
    /// invariant error coincides with the position error.
    #[allow(clippy::too_many_arguments)]
    pub fn from_base(
        rot: Mat3,
        vel: Vec3,
        pos: Vec3,
        base_cov_diag: &Vec9,
        joint: &JointState,
        chain: &KinematicChain,
        noise: &SrsNoiseParams,
        t: f64,
    ) -> Result<Self> {
        let s = forward_kinematics(chain, &joint.q)?;
        let mut cov = Mat12::zeros();
        for i in 0..9 {
            cov[(i, i)] = base_cov_diag[i];
        }
        let pp = cov.fixed_view::<3, 3>(6, 6).into_owned();
        cov.fixed_view_mut::<3, 3>(9, 9)
            .copy_from(&(pp + encoder_noise(&rot, joint, chain, noise)?));
        cov.fixed_view_mut::<3, 3>(6, 9).copy_from(&pp);
        cov.fixed_view_mut::<3, 3>(9, 6).copy_from(&pp);
        Ok(Self {
            rot,
            vel,
            pos,
            contact: pos + rot * s,
            cov,
            t,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.rot
            .iter()
            .chain(self.vel.iter())
            .chain(self.pos.iter())
            .chain(self.contact.iter())
            .chain(self.cov.iter())
            .all(|x| x.is_finite())
    }

    fn to_trace(self, innovation_norm: f64) -> TraceRecord {
        TraceRecord {
            t: self.t,
            rot: self.rot,
            vel: self.vel,
            pos: self.pos,
            cov_diag: self.cov.diagonal().fixed_rows::<9>(0).into_owned(),
            innovation_norm,
        }
    }
}

fn symmetrize(p: &Mat12) -> Mat12 {
    (p + p.transpose()) * 0.5
}

fn adjoint(s: &SrsState) -> Mat12 {
    let mut ad = Mat12::zeros();
    for (i, t) in [s.vel, s.pos, s.contact].iter().enumerate() {
        ad.fixed_view_mut::<3, 3>(3 * (i + 1), 0).copy_from(&(hat3(t) * s.rot));
    }
    for i in 0..4 {
        ad.fixed_view_mut::<3, 3>(3 * i, 3 * i).copy_from(&s.rot);
    }
    ad
}

/// `exp(ξ)` applied on the left of the state.
fn left_retract(s: &SrsState, xi: &Vec12) -> SrsState {
    let phi = xi.fixed_rows::<3>(0).into_owned();
    let r = gamma0(&phi);
    let j = gamma1(&phi);
    let part = |k: usize| j * xi.fixed_rows::<3>(3 * k).into_owned();
    SrsState {
        rot: r * s.rot,
        vel: r * s.vel + part(1),
        pos: r * s.pos + part(2),
        contact: r * s.contact + part(3),
        ..*s
    }
}

fn encoder_noise(rot: &Mat3, joint: &JointState, chain: &KinematicChain, noise: &SrsNoiseParams) -> Result<Mat3> {
    let jac = leg_jacobian(chain, &joint.q)?;
    let js = &jac * jac.transpose() * (noise.sd_encoder * noise.sd_encoder);
    Ok(rot * js * rot.transpose())
}

/// Strapdown propagation in the world frame under gravity `g`.
pub fn srs_propagate(
    state: &SrsState,
    u_b: &ImuSample,
    dt: f64,
    gravity: &Vec3,
    noise: &SrsNoiseParams,
) -> Result<SrsState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::arg(format!("time step must be positive, got {dt}")));
    }
    if u_b.frame != ImuFrame::RobotB {
        return Err(Error::arg("baseline propagation expects a robot IMU sample"));
    }
    if !u_b.is_finite() {
        return Err(Error::fault(format!("non-finite IMU reading at t = {}", u_b.t)));
    }
    let phi = u_b.omega * dt;
    let (r, a, g) = (&state.rot, &u_b.accel, gravity);
    let mut next_rot = r * gamma0(&phi);
    if (next_rot.transpose() * next_rot - Mat3::identity()).norm() > 1e-8 {
        next_rot = project_to_rotation(&next_rot);
    }
    let next_vel = state.vel + r * gamma1(&phi) * a * dt + g * dt;
    let next_pos = state.pos + state.vel * dt + r * gamma2(&phi) * a * (dt * dt) + g * (0.5 * dt * dt);

    // exp(A dt) for A with [g]× at (vel, rot) and I at (pos, vel).
    let gx = hat3(g);
    let mut phi_m = Mat12::identity();
    phi_m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(gx * dt));
    phi_m.fixed_view_mut::<3, 3>(6, 0).copy_from(&(gx * (0.5 * dt * dt)));
    phi_m.fixed_view_mut::<3, 3>(6, 3).copy_from(&(Mat3::identity() * dt));

    let mut cov_w = Mat12::zeros();
    let vars = [
        noise.sd_gyro.powi(2),
        noise.sd_accel.powi(2),
        0.0,
        noise.sd_contact_walk.powi(2),
    ];
    for (i, v) in vars.iter().enumerate() {
        cov_w.fixed_view_mut::<3, 3>(3 * i, 3 * i).fill_diagonal(*v);
    }
    let ad = adjoint(state);
    let q = symmetrize(&(ad * cov_w * ad.transpose()));
    let cov = symmetrize(&(phi_m * (state.cov + q * dt) * phi_m.transpose()));
    Ok(SrsState {
        rot: next_rot,
        vel: next_vel,
        pos: next_pos,
        contact: state.contact,
        cov,
        t: state.t + dt,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SrsUpdateOutcome {
    pub state: SrsState,
    pub innovation: Vec3,
    pub skipped: bool,
}

/// Foot-position update `d − p = R s(q̃)`.
pub fn srs_update(
    state: &SrsState,
    joint: &JointState,
    chain: &KinematicChain,
    noise: &SrsNoiseParams,
) -> Result<SrsUpdateOutcome> {
    let s = forward_kinematics(chain, &joint.q)?;
    // ν = R̄ s + p̄ − d̄ ≈ ξ_p − ξ_d
    let innovation = state.rot * s + state.pos - state.contact;
    if !innovation.iter().all(|x| x.is_finite()) {
        return Err(Error::fault(format!("non-finite innovation at t = {}", state.t)));
    }
    let mut h = Mat3x12::zeros();
    h.fixed_view_mut::<3, 3>(0, 6).fill_diagonal(1.0);
    h.fixed_view_mut::<3, 3>(0, 9).fill_diagonal(-1.0);
    let n = encoder_noise(&state.rot, joint, chain, noise)?;
    let p = state.cov;
    let s_mat = h * p * h.transpose() + n;
    let s_mat = (s_mat + s_mat.transpose()) * 0.5;

    let eig = s_mat.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let chol = if lo > 0.0 && hi / lo <= crate::filter::MAX_INNOVATION_CONDITION {
        s_mat.cholesky()
    } else {
        None
    };
    let Some(chol) = chol else {
        warn!("skipping baseline update at t = {}: ill-conditioned innovation covariance", state.t);
        return Ok(SrsUpdateOutcome {
            state: *state,
            innovation,
            skipped: true,
        });
    };
    let gain = chol.solve(&(h * p)).transpose();
    let xi = gain * innovation;
    let mut next = left_retract(state, &(-xi));
    let i_kh = Mat12::identity() - gain * h;
    next.cov = symmetrize(&(i_kh * p * i_kh.transpose() + gain * n * gain.transpose()));
    Ok(SrsUpdateOutcome {
        state: next,
        innovation,
        skipped: false,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SrsConfig {
    pub noise: SrsNoiseParams,
    pub gravity: Vec3,
    pub initial_rot: Mat3,
    pub initial_vel: Vec3,
    pub initial_pos: Vec3,
    pub initial_cov_diag: Vec9,
}

impl Default for SrsConfig {
    fn default() -> Self {
        let rot = 23f64.to_radians().powi(2);
        Self {
            noise: SrsNoiseParams::default(),
            gravity: Vec3::new(0.0, 0.0, -STANDARD_GRAVITY),
            initial_rot: Mat3::identity(),
            initial_vel: Vec3::zeros(),
            initial_pos: Vec3::zeros(),
            initial_cov_diag: Vec9::from_column_slice(&[rot, rot, rot, 1.0, 1.0, 1.0, 9.0, 9.0, 9.0]),
        }
    }
}

/// Runs the baseline over a log with the same step schedule as the proposed filter.
/// The contact point is initialized from the first encoder sample.
pub fn run_srs(log: &SensorLog, config: &SrsConfig, chain: &KinematicChain) -> Result<Vec<TraceRecord>> {
    config.noise.validate()?;
    if config.initial_cov_diag.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::arg("initial covariance diagonal entries must be positive"));
    }
    let steps = log.schedule()?;
    let first_joint = log
        .encoders
        .first()
        .ok_or_else(|| Error::fault("encoder stream is empty"))?;
    let mut state = SrsState::from_base(
        config.initial_rot,
        config.initial_vel,
        config.initial_pos,
        &config.initial_cov_diag,
        first_joint,
        chain,
        &config.noise,
        steps[0].t,
    )?;
    let mut out = Vec::with_capacity(steps.len());
    for (k, step) in steps.iter().enumerate() {
        if k > 0 {
            let prev = &log.robot_imu[k - 1];
            state = srs_propagate(&state, prev, step.t - prev.t, &config.gravity, &config.noise)?;
            state.t = step.t;
        }
        let mut innov = f64::NAN;
        if let Some(e) = step.encoder {
            let o = srs_update(&state, &log.encoders[e], chain, &config.noise)?;
            state = o.state;
            innov = o.innovation.norm();
        }
        if !state.is_finite() {
            return Err(Error::fault(format!("baseline state diverged at t = {}", step.t)));
        }
        out.push(state.to_trace(innov));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::humanoid_leg;
    use crate::liegroup::{rotation_about, Mat5};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};

    fn expm_series(m: &Mat5) -> Mat5 {
        let mut term = Mat5::identity();
        let mut out = Mat5::identity();
        for n in 1..30 {
            term = term * m / n as f64;
            out += term;
        }
        out
    }

    fn state_at(rot: Mat3, vel: Vec3, pos: Vec3) -> SrsState {
        SrsState {
            rot,
            vel,
            pos,
            contact: Vec3::zeros(),
            cov: Mat12::identity(),
            t: 0.0,
        }
    }

    fn g() -> Vec3 {
        Vec3::new(0.0, 0.0, -STANDARD_GRAVITY)
    }

    #[test]
    fn hover_reading_keeps_state() {
        let s = state_at(Mat3::identity(), Vec3::zeros(), Vec3::new(1.0, 2.0, 3.0));
        let u = ImuSample::new(0.0, Vec3::zeros(), -g(), ImuFrame::RobotB);
        let n = srs_propagate(&s, &u, 0.002, &g(), &SrsNoiseParams::default()).unwrap();
        assert_eq!((n.rot, n.vel, n.pos), (s.rot, s.vel, s.pos));
        assert!(n.cov.trace() > s.cov.trace());
    }

    #[test]
    fn free_fall() {
        let s = state_at(Mat3::identity(), Vec3::new(0.3, 0.0, 0.0), Vec3::zeros());
        let u = ImuSample::new(0.0, Vec3::zeros(), Vec3::zeros(), ImuFrame::RobotB);
        let n = srs_propagate(&s, &u, 0.01, &g(), &SrsNoiseParams::default()).unwrap();
        assert!((n.vel - (s.vel + g() * 0.01)).amax() < 1e-15);
        assert!(srs_propagate(&s, &u, -0.01, &g(), &SrsNoiseParams::default()).is_err());
    }

    #[test]
    fn matches_series_strapdown() {
        // Ẋ = G X + X U with G carrying gravity and cancelling the clock entry.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut rv = |s: f64| Vec3::from_fn(|_, _| rng.random_range(-s..s));
        let mut gm = Mat5::zeros();
        gm.fixed_view_mut::<3, 1>(0, 3).copy_from(&g());
        gm[(3, 4)] = -1.0;
        for _ in 0..100 {
            let axis = rv(1.0);
            let s = state_at(rotation_about(&axis.normalize(), axis.norm() * 3.0), rv(1.0), rv(1.0));
            let u = ImuSample::new(0.0, rv(3.0), rv(15.0), ImuFrame::RobotB);
            let dt = 0.002;
            let n = srs_propagate(&s, &u, dt, &g(), &SrsNoiseParams::default()).unwrap();
            let x = crate::liegroup::SE23::new(s.rot, s.vel, s.pos).to_matrix();
            let want = expm_series(&(gm * dt)) * x * expm_series(&(crate::models::build_u(&u) * dt));
            let got = crate::liegroup::SE23::new(n.rot, n.vel, n.pos).to_matrix();
            assert!((got - want).amax() < 1e-10);
        }
    }

    #[test]
    fn consistent_measurement_is_a_no_op() {
        let chain = humanoid_leg();
        let joint = JointState::standing(0.0, DVector::from_element(6, 0.1));
        let rot = rotation_about(&Vec3::z(), 0.4);
        let s = SrsState::from_base(
            rot,
            Vec3::zeros(),
            Vec3::new(0.0, 0.0, 1.0),
            &Vec9::from_element(0.5),
            &joint,
            &chain,
            &SrsNoiseParams::default(),
            0.0,
        )
        .unwrap();
        let out = srs_update(&s, &joint, &chain, &SrsNoiseParams::default()).unwrap();
        assert!(!out.skipped);
        assert!(out.innovation.norm() < 1e-15);
        assert!((out.state.pos - s.pos).amax() < 1e-15);
        assert!((out.state.rot - s.rot).amax() < 1e-15);
        assert!(out.state.cov.trace() <= s.cov.trace());
        assert!(out.state.cov.symmetric_eigenvalues().min() > -1e-12);
    }

    #[test]
    fn update_pulls_contact_towards_foot() {
        let chain = humanoid_leg();
        let joint = JointState::standing(0.0, DVector::zeros(6));
        let noise = SrsNoiseParams::default();
        let mut s = SrsState::from_base(
            Mat3::identity(),
            Vec3::zeros(),
            Vec3::zeros(),
            &Vec9::from_element(1.0),
            &joint,
            &chain,
            &noise,
            0.0,
        )
        .unwrap();
        // decorrelate position and contact, then offset the contact point
        s.cov = Mat12::identity();
        s.contact += Vec3::new(0.1, 0.0, 0.0);
        let before = (s.rot * forward_kinematics(&chain, &joint.q).unwrap() + s.pos - s.contact).norm();
        let o = srs_update(&s, &joint, &chain, &noise).unwrap();
        let n = o.state;
        let after = (n.rot * forward_kinematics(&chain, &joint.q).unwrap() + n.pos - n.contact).norm();
        assert!(after < 0.5 * before);
    }
}
