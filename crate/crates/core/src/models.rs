//! Process and measurement models of the relative-state filter, together
//! with their linearizations.
//!
//! The state `X = (R, v, p)` is the pose and velocity of the robot base `{B}`
//! relative to the moving ground frame `{D}`, expressed in `{D}`. Inputs are
//! the two IMU readings; the robot-side measurement is the velocity of the
//! stance foot predicted from leg odometry.

use nalgebra::SMatrix;

use crate::error::{Error, Result};
use crate::kinematics::{foot_velocity, forward_kinematics, JointState, KinematicChain};
use crate::liegroup::{adjoint, gamma1, gamma2, hat3, rotation_about, Mat3, Mat5, Mat9, Vec3, SE23};

pub type Mat3x9 = SMatrix<f64, 3, 9>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ImuFrame {
    RobotB,
    GroundD,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// Angular velocity in the sensor frame (rad/s).
    pub omega: Vec3,
    /// Specific force in the sensor frame (m/s²).
    pub accel: Vec3,
    pub frame: ImuFrame,
}

impl ImuSample {
    pub fn new(t: f64, omega: Vec3, accel: Vec3, frame: ImuFrame) -> Self {
        Self {
            t,
            omega,
            accel,
            frame,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.omega.iter().all(|x| x.is_finite())
            && self.accel.iter().all(|x| x.is_finite())
    }
}

/// Standard deviations of the white noise terms, per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseParams {
    pub sd_omega_b: f64,
    pub sd_accel_b: f64,
    pub sd_omega_d: f64,
    pub sd_accel_d: f64,
    /// Lumped foot-velocity noise `n_f` (m/s), covering encoder noise and slip.
    pub sd_contact_vel: f64,
}

impl Default for NoiseParams {
    /// Values tuned for the standing experiment: 0.01 rad/s gyros, 0.1 m/s² accelerometers,
    /// 0.1 m/s foot velocity.
    fn default() -> Self {
        Self {
            sd_omega_b: 0.01,
            sd_accel_b: 0.1,
            sd_omega_d: 0.01,
            sd_accel_d: 0.1,
            sd_contact_vel: 0.1,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.sd_omega_b,
            self.sd_accel_b,
            self.sd_omega_d,
            self.sd_accel_d,
            self.sd_contact_vel,
        ];
        if all.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::arg("noise standard deviations must be finite and non-negative"));
        }
        Ok(())
    }

    /// `Cov(ⁱw)` for `ⁱw = [w^ω; w^a; 0]`.
    pub fn imu_covariance(&self, frame: ImuFrame) -> Mat9 {
        let (sw, sa) = match frame {
            ImuFrame::RobotB => (self.sd_omega_b, self.sd_accel_b),
            ImuFrame::GroundD => (self.sd_omega_d, self.sd_accel_d),
        };
        let mut cov = Mat9::zeros();
        for i in 0..3 {
            cov[(i, i)] = sw * sw;
            cov[(i + 3, i + 3)] = sa * sa;
        }
        cov
    }
}

/// The 5×5 input matrix `[[ω]×, a, 0; 0, 0, 1; 0, 0, 0]`.
pub fn build_u(sample: &ImuSample) -> Mat5 {
    let mut u = Mat5::zeros();
    u.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat3(&sample.omega));
    u.fixed_view_mut::<3, 1>(0, 3).copy_from(&sample.accel);
    u[(3, 4)] = 1.0;
    u
}

fn check_frames(u_b: &ImuSample, u_d: &ImuSample) -> Result<()> {
    if u_b.frame != ImuFrame::RobotB || u_d.frame != ImuFrame::GroundD {
        return Err(Error::arg(format!(
            "expected (RobotB, GroundD) samples, got ({:?}, {:?})",
            u_b.frame, u_d.frame
        )));
    }
    Ok(())
}

/// Noise-free drift `−U_D X + X U_B` as a 5×5 matrix.
pub fn process_f(x: &Mat5, u_b: &ImuSample, u_d: &ImuSample) -> Result<Mat5> {
    check_frames(u_b, u_d)?;
    Ok(-build_u(u_d) * x + x * build_u(u_b))
}

/// Foot velocity seen from the robot: `[ω̃_B]× s(q̃) + J(q̃) q̇̃`.
pub fn measurement_y(omega_b: &Vec3, joint: &JointState, chain: &KinematicChain) -> Result<Vec3> {
    let s = forward_kinematics(chain, &joint.q)?;
    Ok(omega_b.cross(&s) + foot_velocity(chain, joint)?)
}

/// Predicted observation `Rᵀ([ω̃_D]× R s − v + [ω̃_D]× p)`.
pub fn measurement_h(
    x: &SE23,
    omega_d: &Vec3,
    joint: &JointState,
    chain: &KinematicChain,
) -> Result<Vec3> {
    let s = forward_kinematics(chain, &joint.q)?;
    Ok(predicted_foot_velocity(x, omega_d, &s))
}

pub(crate) fn predicted_foot_velocity(x: &SE23, omega_d: &Vec3, s: &Vec3) -> Vec3 {
    let foot = x.rot * s + x.pos;
    x.rot.transpose() * (omega_d.cross(&foot) - x.vel)
}

/// `c_t`, the rotation block of the measurement Jacobian.
pub fn measurement_c(xhat: &SE23, omega_d: &Vec3, s: &Vec3) -> Mat3 {
    let rt = xhat.rot.transpose();
    let w = hat3(omega_d);
    let rs = xhat.rot * s;
    let p = xhat.pos;
    rt * hat3(&(w * rs)) - rt * w * hat3(&rs) + rt * hat3(&(w * p)) - rt * w * hat3(&p)
}

/// `H = [c_t, −R̄ᵀ, R̄ᵀ[ω̃_D]×]`, linearizing `h(X̄) − h(X)` in the right-invariant error.
pub fn jacobian_h(
    xhat: &SE23,
    omega_d: &Vec3,
    joint: &JointState,
    chain: &KinematicChain,
) -> Result<Mat3x9> {
    let s = forward_kinematics(chain, &joint.q)?;
    Ok(jacobian_h_at(xhat, omega_d, &s))
}

pub(crate) fn jacobian_h_at(xhat: &SE23, omega_d: &Vec3, s: &Vec3) -> Mat3x9 {
    let rt = xhat.rot.transpose();
    let mut h = Mat3x9::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&measurement_c(xhat, omega_d, s));
    h.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-rt));
    h.fixed_view_mut::<3, 3>(0, 6).copy_from(&(rt * hat3(omega_d)));
    h
}

/// Error-dynamics matrix `A_t`; depends only on the ground IMU.
pub fn matrix_a(omega_d: &Vec3, accel_d: &Vec3) -> Mat9 {
    let w = -hat3(omega_d);
    let mut a = Mat9::zeros();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&w);
    a.fixed_view_mut::<3, 3>(3, 3).copy_from(&w);
    a.fixed_view_mut::<3, 3>(6, 6).copy_from(&w);
    a.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-hat3(accel_d)));
    a.fixed_view_mut::<3, 3>(6, 3).copy_from(&Mat3::identity());
    a
}

/// The six 3×3 blocks of `Φ = exp(A Δt)` for inputs held constant over `Δt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiBlocks {
    pub phi11: Mat3,
    pub phi21: Mat3,
    pub phi22: Mat3,
    pub phi31: Mat3,
    pub phi32: Mat3,
    pub phi33: Mat3,
}

impl PhiBlocks {
    pub fn assemble(&self) -> Mat9 {
        let mut phi = Mat9::zeros();
        phi.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.phi11);
        phi.fixed_view_mut::<3, 3>(3, 0).copy_from(&self.phi21);
        phi.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.phi22);
        phi.fixed_view_mut::<3, 3>(6, 0).copy_from(&self.phi31);
        phi.fixed_view_mut::<3, 3>(6, 3).copy_from(&self.phi32);
        phi.fixed_view_mut::<3, 3>(6, 6).copy_from(&self.phi33);
        phi
    }
}

/// Closed-form blocks of the discrete transition matrix.
///
/// With `E = exp(−[ω]× Δt)`:
/// `φ11 = φ22 = φ33 = E`, `φ32 = Δt E`,
/// `φ21 = −E [Δt Γ₁(ωΔt) a]×`, `φ31 = −E [Δt² Γ₂(ωΔt) a]×`.
/// At `ω = 0` these reduce to `−[a]× Δt` and `−½[a]× Δt²`.
pub fn phi_blocks_of(omega_d: &Vec3, accel_d: &Vec3, dt: f64) -> Result<PhiBlocks> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::arg(format!("time step must be positive, got {dt}")));
    }
    let phi = omega_d * dt;
    let e = rotation_about_vec(&(-phi));
    Ok(PhiBlocks {
        phi11: e,
        phi22: e,
        phi33: e,
        phi32: e * dt,
        phi21: -e * hat3(&(gamma1(&phi) * accel_d * dt)),
        phi31: -e * hat3(&(gamma2(&phi) * accel_d * (dt * dt))),
    })
}

fn rotation_about_vec(phi: &Vec3) -> Mat3 {
    let n = phi.norm();
    if n == 0.0 {
        Mat3::identity()
    } else {
        rotation_about(&(phi / n), n)
    }
}

/// `Φ_k = exp(A_k Δt)` assembled from [`phi_blocks_of`].
pub fn phi_blocks(omega_d: &Vec3, accel_d: &Vec3, dt: f64) -> Result<Mat9> {
    Ok(phi_blocks_of(omega_d, accel_d, dt)?.assemble())
}

/// `Q̄ = Ad_X̄ Cov(ᴮw) Ad_X̄ᵀ + Cov(ᴰw)`.
pub fn qbar(xhat: &SE23, noise: &NoiseParams) -> Mat9 {
    let ad = adjoint(xhat);
    let q = ad * noise.imu_covariance(ImuFrame::RobotB) * ad.transpose()
        + noise.imu_covariance(ImuFrame::GroundD);
    (q + q.transpose()) * 0.5
}

/// `N = R̄ Cov(n_f) R̄ᵀ` with isotropic `Cov(n_f)`.
pub fn measurement_noise(xhat: &SE23, noise: &NoiseParams) -> Mat3 {
    let var = noise.sd_contact_vel * noise.sd_contact_vel;
    xhat.rot * (Mat3::identity() * var) * xhat.rot.transpose()
}
