//! Serial revolute leg model used for leg odometry.
//!
//! The foot position is composed as
//! `T = Trans(base_offset) · Π_j [Trans(origin_j) · Rot(axis_j, q_j)] · foot_offset`,
//! each `origin_j` being expressed in the frame of the previous joint.

use nalgebra::{DVector, Matrix3xX};

use crate::error::{Error, Result};
use crate::liegroup::{rotation_about, Mat3, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub axis: Vec3,
    pub origin: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KinematicChain {
    pub base_offset: Vec3,
    pub joints: Vec<Joint>,
    pub foot_offset: Vec3,
}

/// Joint angles and rates at one encoder sample.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    pub t: f64,
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl JointState {
    pub fn new(t: f64, q: DVector<f64>, qdot: DVector<f64>) -> Self {
        Self { t, q, qdot }
    }

    /// A motionless configuration.
    pub fn standing(t: f64, q: DVector<f64>) -> Self {
        let n = q.len();
        Self::new(t, q, DVector::zeros(n))
    }
}

/// Axis origins and directions of every joint, plus the foot, in the base frame.
struct ChainPose {
    origins: Vec<Vec3>,
    axes: Vec<Vec3>,
    foot: Vec3,
}

impl KinematicChain {
    pub fn new(base_offset: Vec3, joints: Vec<Joint>, foot_offset: Vec3) -> Result<Self> {
        let chain = Self {
            base_offset,
            joints,
            foot_offset,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.is_empty() {
            return Err(Error::arg("kinematic chain needs at least one joint"));
        }
        for (i, j) in self.joints.iter().enumerate() {
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::arg(format!(
                    "joint {} axis has norm {}, expected unit length",
                    i + 1,
                    j.axis.norm()
                )));
            }
        }
        let finite = |v: &Vec3| v.iter().all(|x| x.is_finite());
        if !finite(&self.base_offset)
            || !finite(&self.foot_offset)
            || !self.joints.iter().all(|j| finite(&j.origin))
        {
            return Err(Error::arg("kinematic chain contains non-finite offsets"));
        }
        Ok(())
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    fn check_len(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.joints.len() {
            return Err(Error::arg(format!(
                "expected {} joint angles, got {}",
                self.joints.len(),
                q.len()
            )));
        }
        Ok(())
    }

    fn pose(&self, q: &DVector<f64>) -> ChainPose {
        let mut rot = Mat3::identity();
        let mut pos = self.base_offset;
        let mut origins = Vec::with_capacity(self.joints.len());
        let mut axes = Vec::with_capacity(self.joints.len());
        for (joint, &angle) in self.joints.iter().zip(q.iter()) {
            pos += rot * joint.origin;
            origins.push(pos);
            axes.push(rot * joint.axis);
            rot *= rotation_about(&joint.axis, angle);
        }
        ChainPose {
            origins,
            axes,
            foot: pos + rot * self.foot_offset,
        }
    }
}

/// Foot position relative to the base, in the base frame.
pub fn forward_kinematics(chain: &KinematicChain, q: &DVector<f64>) -> Result<Vec3> {
    chain.check_len(q)?;
    Ok(chain.pose(q).foot)
}

/// `∂s/∂q`, one column per joint: `axis_j × (foot − origin_j)`.
pub fn leg_jacobian(chain: &KinematicChain, q: &DVector<f64>) -> Result<Matrix3xX<f64>> {
    chain.check_len(q)?;
    let pose = chain.pose(q);
    let mut jac = Matrix3xX::zeros(q.len());
    for (j, (axis, origin)) in pose.axes.iter().zip(&pose.origins).enumerate() {
        jac.set_column(j, &axis.cross(&(pose.foot - origin)));
    }
    Ok(jac)
}

/// Foot velocity relative to the base due to joint motion, `J(q) q̇`.
pub fn foot_velocity(chain: &KinematicChain, joint: &JointState) -> Result<Vec3> {
    chain.check_len(&joint.qdot)?;
    Ok(leg_jacobian(chain, &joint.q)? * &joint.qdot)
}

/// Backward finite-difference joint rates for encoder logs without a rate channel.
pub fn backward_difference_rates(samples: &[(f64, DVector<f64>)]) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(samples.len());
    for (i, (t, q)) in samples.iter().enumerate() {
        if i == 0 {
            out.push(DVector::zeros(q.len()));
            continue;
        }
        let (t_prev, q_prev) = &samples[i - 1];
        let dt = t - t_prev;
        if dt > 0.0 {
            out.push((q - q_prev) / dt);
        } else {
            out.push(out[i - 1].clone());
        }
    }
    out
}

/// Covariance of the foot position `s(q)` induced by independent joint-angle noise.
pub fn foot_position_covariance(chain: &KinematicChain, q: &DVector<f64>, sd_q: f64) -> Result<Mat3> {
    let jac = leg_jacobian(chain, q)?;
    Ok(&jac * jac.transpose() * (sd_q * sd_q))
}

/// Six-joint leg roughly proportioned like a 1.6 m humanoid: hip roll, yaw and
/// pitch, knee, ankle pitch and roll.
pub fn humanoid_leg() -> KinematicChain {
    let x = Vec3::x();
    let y = Vec3::y();
    let z = Vec3::z();
    KinematicChain {
        base_offset: Vec3::new(0.0, -0.1, -0.1),
        joints: vec![
            Joint { axis: x, origin: Vec3::zeros() },
            Joint { axis: z, origin: Vec3::new(0.0, 0.0, -0.05) },
            Joint { axis: y, origin: Vec3::new(0.0, 0.0, -0.05) },
            Joint { axis: y, origin: Vec3::new(0.0, 0.0, -0.42) },
            Joint { axis: y, origin: Vec3::new(0.0, 0.0, -0.42) },
            Joint { axis: x, origin: Vec3::zeros() },
        ],
        foot_offset: Vec3::new(0.02, 0.0, -0.06),
    }
}
