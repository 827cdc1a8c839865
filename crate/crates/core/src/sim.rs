//! Synthetic pitch/sway ground with a robot standing on it.
//!
//! World frame `W` is inertial with gravity `g`. The ground frame `D` rotates about
//! its origin and translates along a fixed world axis. The robot pose relative to `D`
//! comes from a [`RelativeMotion`]; the default keeps it fixed (standing).

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, JointState, KinematicChain};
use crate::liegroup::{hat3, rotation_about, Mat3, Vec3, SE23};
use crate::models::{ImuFrame, ImuSample, NoiseParams};
use crate::streams::SensorLog;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundMotionParams {
    pub pitch_amplitude: f64,
    pub pitch_frequency: f64,
    pub pitch_axis: Vec3,
    pub sway_amplitude: f64,
    pub sway_frequency: f64,
    pub sway_axis: Vec3,
    /// Optional second rotation, applied after the pitch rotation.
    pub roll_amplitude: f64,
    pub roll_frequency: f64,
    pub roll_axis: Vec3,
    pub gravity: Vec3,
}

impl Default for GroundMotionParams {
    /// 10° pitch `sin(πt/2)` about y and 0.05 m sway `cos(πt/2)` along x.
    fn default() -> Self {
        let w = std::f64::consts::FRAC_PI_2;
        Self {
            pitch_amplitude: 10f64.to_radians(),
            pitch_frequency: w,
            pitch_axis: Vec3::y(),
            sway_amplitude: 0.05,
            sway_frequency: w,
            sway_axis: Vec3::x(),
            roll_amplitude: 0.0,
            roll_frequency: w,
            roll_axis: Vec3::x(),
            gravity: Vec3::new(0.0, 0.0, -9.81),
        }
    }
}

impl GroundMotionParams {
    pub fn stationary() -> Self {
        Self {
            pitch_amplitude: 0.0,
            sway_amplitude: 0.0,
            roll_amplitude: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let freqs = [self.pitch_frequency, self.sway_frequency, self.roll_frequency];
        if freqs.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
            return Err(Error::arg("ground motion frequencies must be positive"));
        }
        let amps = [self.pitch_amplitude, self.sway_amplitude, self.roll_amplitude];
        if amps.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::arg("ground motion amplitudes must be non-negative"));
        }
        for (name, axis) in [("pitch", self.pitch_axis), ("sway", self.sway_axis), ("roll", self.roll_axis)] {
            if (axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::arg(format!("{name} axis must have unit norm")));
            }
        }
        if !self.gravity.iter().all(|x| x.is_finite()) {
            return Err(Error::arg("gravity must be finite"));
        }
        Ok(())
    }
}

/// Pose and derivatives of `D` in `W`. Angular rates are expressed in `D`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundState {
    pub rot: Mat3,
    pub omega: Vec3,
    pub alpha: Vec3,
    pub pos: Vec3,
    pub vel: Vec3,
    pub acc: Vec3,
}

/// `A sin(ωt)` and its first two derivatives.
fn sine(a: f64, w: f64, t: f64) -> (f64, f64, f64) {
    let (s, c) = (w * t).sin_cos();
    (a * s, a * w * c, -a * w * w * s)
}

pub fn ground_motion(t: f64, params: &GroundMotionParams) -> GroundState {
    let (th_p, dth_p, ddth_p) = sine(params.pitch_amplitude, params.pitch_frequency, t);
    let (th_r, dth_r, ddth_r) = sine(params.roll_amplitude, params.roll_frequency, t);
    let (ep, er) = (params.pitch_axis, params.roll_axis);
    let rr = rotation_about(&er, th_r);
    let rot = rotation_about(&ep, th_p) * rr;
    let ep_in_d = rr.transpose() * ep;
    let omega = ep_in_d * dth_p + er * dth_r;
    let alpha = ep_in_d * ddth_p - hat3(&er) * ep_in_d * (dth_r * dth_p) + er * ddth_r;

    let w = params.sway_frequency;
    let (s, c) = (w * t).sin_cos();
    let a = params.sway_amplitude;
    GroundState {
        rot,
        omega,
        alpha,
        pos: params.sway_axis * (a * c),
        vel: params.sway_axis * (-a * w * s),
        acc: params.sway_axis * (-a * w * w * c),
    }
}

/// Robot pose relative to `D` and joint configuration at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct RelativeSample {
    pub rot: Mat3,
    /// Body-frame rate of the relative rotation: `Ṙ = R [ω]×`.
    pub omega: Vec3,
    pub pos: Vec3,
    pub pos_rate: Vec3,
    pub pos_accel: Vec3,
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

/// Source of the robot's motion relative to the ground.
pub trait RelativeMotion: Sync {
    fn sample(&self, t: f64) -> RelativeSample;
}

/// Fixed base pose and joint angles.
#[derive(Clone, Debug, PartialEq)]
pub struct StandingPose {
    pub rot: Mat3,
    pub pos: Vec3,
    pub q: DVector<f64>,
}

impl StandingPose {
    /// Places the base so that the foot sits at `foot` in `D`.
    pub fn with_foot_at(chain: &KinematicChain, rot: Mat3, q: DVector<f64>, foot: Vec3) -> Result<Self> {
        let s = forward_kinematics(chain, &q)?;
        Ok(Self { rot, pos: foot - rot * s, q })
    }

    pub fn state(&self) -> SE23 {
        SE23::new(self.rot, Vec3::zeros(), self.pos)
    }
}

impl RelativeMotion for StandingPose {
    fn sample(&self, _t: f64) -> RelativeSample {
        let n = self.q.len();
        RelativeSample {
            rot: self.rot,
            omega: Vec3::zeros(),
            pos: self.pos,
            pos_rate: Vec3::zeros(),
            pos_accel: Vec3::zeros(),
            q: self.q.clone(),
            qdot: DVector::zeros(n),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorRig {
    pub robot_rate: f64,
    pub ground_rate: f64,
    pub encoder_rate: f64,
    pub imu_noise: NoiseParams,
    pub sd_joint_angle: f64,
    pub sd_joint_rate: f64,
    pub seed: u64,
}

impl Default for SensorRig {
    fn default() -> Self {
        Self {
            robot_rate: 500.0,
            ground_rate: 200.0,
            encoder_rate: 500.0,
            imu_noise: NoiseParams::default(),
            sd_joint_angle: 1e-3,
            sd_joint_rate: 0.05,
            seed: 0,
        }
    }
}

impl SensorRig {
    pub fn noise_free(mut self) -> Self {
        self.imu_noise = NoiseParams {
            sd_omega_b: 0.0,
            sd_accel_b: 0.0,
            sd_omega_d: 0.0,
            sd_accel_d: 0.0,
            ..self.imu_noise
        };
        self.sd_joint_angle = 0.0;
        self.sd_joint_rate = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for r in [self.robot_rate, self.ground_rate, self.encoder_rate] {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::arg("sensor rates must be positive"));
            }
        }
        self.imu_noise.validate()?;
        if !(self.sd_joint_angle >= 0.0) || !(self.sd_joint_rate >= 0.0) {
            return Err(Error::arg("encoder noise must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruthRecord {
    pub t: f64,
    /// Robot state relative to the ground.
    pub rel: SE23,
    pub ground_rot: Mat3,
    pub ground_vel: Vec3,
    pub ground_pos: Vec3,
    pub robot_rot: Mat3,
    pub robot_vel: Vec3,
    pub robot_pos: Vec3,
    /// Foot position in `D`.
    pub foot: Vec3,
}

#[derive(Clone, Debug)]
pub struct Scenario<M: RelativeMotion = StandingPose> {
    pub ground: GroundMotionParams,
    pub rig: SensorRig,
    pub chain: KinematicChain,
    pub motion: M,
    pub duration: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub log: SensorLog,
    pub truth: Vec<GroundTruthRecord>,
}

/// Samples at `i / rate` for `i = 0..n` with `t = 0` included and `t = duration` excluded.
pub fn sample_count(duration: f64, rate: f64) -> usize {
    let n = (duration * rate - 1e-9).ceil();
    if n > 0.0 { n as usize } else { 0 }
}

#[derive(Clone, Copy)]
#[repr(u64)]
enum Stream {
    RobotImu = 1,
    GroundImu = 2,
    Encoders = 3,
}

/// Counter-keyed Gaussian source: every `(seed, stream, index)` gets its own generator.
pub fn keyed_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn gaussian3(rng: &mut ChaCha8Rng, sd: f64) -> Vec3 {
    let v = Vec3::from_fn(|_, _| StandardNormal.sample(rng));
    if sd == 0.0 { Vec3::zeros() } else { v * sd }
}

struct Kinematics {
    ground: GroundState,
    rel: RelativeSample,
    robot_rot: Mat3,
    robot_omega: Vec3,
    robot_vel: Vec3,
    robot_acc: Vec3,
}

fn kinematics_at<M: RelativeMotion>(t: f64, ground: &GroundMotionParams, motion: &M) -> Kinematics {
    let g = ground_motion(t, ground);
    let r = motion.sample(t);
    let (w, al) = (hat3(&g.omega), hat3(&g.alpha));
    let robot_rot = g.rot * r.rot;
    let robot_omega = r.rot.transpose() * g.omega + r.omega;
    let robot_vel = g.vel + g.rot * (w * r.pos + r.pos_rate);
    let robot_acc = g.acc + g.rot * (al * r.pos + w * w * r.pos + 2.0 * w * r.pos_rate + r.pos_accel);
    Kinematics {
        ground: g,
        rel: r,
        robot_rot,
        robot_omega,
        robot_vel,
        robot_acc,
    }
}

impl<M: RelativeMotion> Scenario<M> {
    pub fn validate(&self) -> Result<()> {
        self.ground.validate()?;
        self.rig.validate()?;
        self.chain.validate()?;
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::arg(format!("duration must be positive, got {}", self.duration)));
        }
        let q = self.motion.sample(0.0).q;
        if q.len() != self.chain.joint_count() {
            return Err(Error::arg(format!(
                "relative motion has {} joints but the chain has {}",
                q.len(),
                self.chain.joint_count()
            )));
        }
        Ok(())
    }

    pub fn ground_truth(&self, t: f64) -> Result<GroundTruthRecord> {
        if !(t >= 0.0) || t > self.duration {
            return Err(Error::arg(format!("t = {t} outside [0, {}]", self.duration)));
        }
        let k = kinematics_at(t, &self.ground, &self.motion);
        let g = &k.ground;
        let rel = SE23::new(
            g.rot.transpose() * k.robot_rot,
            g.rot.transpose() * (k.robot_vel - g.vel),
            g.rot.transpose() * (g.rot * k.rel.pos),
        );
        let foot = k.rel.pos + k.rel.rot * forward_kinematics(&self.chain, &k.rel.q)?;
        Ok(GroundTruthRecord {
            t,
            rel,
            ground_rot: g.rot,
            ground_vel: g.vel,
            ground_pos: g.pos,
            robot_rot: k.robot_rot,
            robot_vel: k.robot_vel,
            robot_pos: g.pos + g.rot * k.rel.pos,
            foot,
        })
    }

    /// Noise-free IMU readings at time `t`: `ω` in the sensor frame and specific force
    /// `Rᵀ(a − g)`.
    pub fn ideal_imu(&self, t: f64) -> (ImuSample, ImuSample) {
        let k = kinematics_at(t, &self.ground, &self.motion);
        let gvec = self.ground.gravity;
        let robot = ImuSample::new(t, k.robot_omega, k.robot_rot.transpose() * (k.robot_acc - gvec), ImuFrame::RobotB);
        let ground = ImuSample::new(
            t,
            k.ground.omega,
            k.ground.rot.transpose() * (k.ground.acc - gvec),
            ImuFrame::GroundD,
        );
        (robot, ground)
    }

    fn robot_sample(&self, i: usize) -> ImuSample {
        let t = i as f64 / self.rig.robot_rate;
        let (mut s, _) = self.ideal_imu(t);
        let n = &self.rig.imu_noise;
        let mut rng = keyed_rng(self.rig.seed, Stream::RobotImu as u64, i as u64);
        s.omega += gaussian3(&mut rng, n.sd_omega_b);
        s.accel += gaussian3(&mut rng, n.sd_accel_b);
        s
    }

    fn ground_sample(&self, i: usize) -> ImuSample {
        let t = i as f64 / self.rig.ground_rate;
        let (_, mut s) = self.ideal_imu(t);
        let n = &self.rig.imu_noise;
        let mut rng = keyed_rng(self.rig.seed, Stream::GroundImu as u64, i as u64);
        s.omega += gaussian3(&mut rng, n.sd_omega_d);
        s.accel += gaussian3(&mut rng, n.sd_accel_d);
        s
    }

    fn encoder_sample(&self, i: usize) -> JointState {
        let t = i as f64 / self.rig.encoder_rate;
        let r = self.motion.sample(t);
        let mut rng = keyed_rng(self.rig.seed, Stream::Encoders as u64, i as u64);
        let mut draw = |sd: f64| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if sd == 0.0 { 0.0 } else { z * sd }
        };
        let q = r.q.map(|x| x + draw(self.rig.sd_joint_angle));
        let qdot = r.qdot.map(|x| x + draw(self.rig.sd_joint_rate));
        JointState::new(t, q, qdot)
    }

    /// Generates all streams and truth (at the robot-IMU rate). `parallel` only affects
    /// speed; the output is identical either way.
    pub fn synthesize(&self, parallel: bool) -> Result<SimOutput> {
        self.validate()?;
        let nr = sample_count(self.duration, self.rig.robot_rate);
        let ng = sample_count(self.duration, self.rig.ground_rate);
        let ne = sample_count(self.duration, self.rig.encoder_rate);
        let robot_t = |i: usize| i as f64 / self.rig.robot_rate;
        let (robot_imu, ground_imu, encoders, truth) = if parallel {
            (
                (0..nr).into_par_iter().map(|i| self.robot_sample(i)).collect(),
                (0..ng).into_par_iter().map(|i| self.ground_sample(i)).collect(),
                (0..ne).into_par_iter().map(|i| self.encoder_sample(i)).collect(),
                (0..nr)
                    .into_par_iter()
                    .map(|i| self.ground_truth(robot_t(i)))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            (
                (0..nr).map(|i| self.robot_sample(i)).collect(),
                (0..ng).map(|i| self.ground_sample(i)).collect(),
                (0..ne).map(|i| self.encoder_sample(i)).collect(),
                (0..nr).map(|i| self.ground_truth(robot_t(i))).collect::<Result<Vec<_>>>()?,
            )
        };
        Ok(SimOutput {
            log: SensorLog {
                robot_imu,
                ground_imu,
                encoders,
            },
            truth,
        })
    }
}

/// Default standing configuration for [`crate::kinematics::humanoid_leg`]: knee bent,
/// foot 0.3 m ahead of the ground origin.
pub fn default_standing(chain: &KinematicChain) -> Result<StandingPose> {
    let n = chain.joint_count();
    let mut q = DVector::zeros(n);
    if n == 6 {
        q.copy_from_slice(&[0.0, 0.0, -0.3, 0.6, -0.3, 0.0]);
    }
    StandingPose::with_foot_at(chain, Mat3::identity(), q, Vec3::new(0.3, 0.1, 0.0))
}
