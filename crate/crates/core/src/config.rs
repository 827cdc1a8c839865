//! TOML run configuration. Every field has a default; unknown keys are rejected.

use std::path::{Path, PathBuf};

use nalgebra::{DVector, Rotation3};
use serde::{Deserialize, Serialize};

use crate::baseline::{SrsConfig, SrsNoiseParams};
use crate::error::{Error, Result};
use crate::filter::FilterConfig;
use crate::kinematics::{humanoid_leg, Joint, KinematicChain};
use crate::liegroup::{Vec3, Vec9};
use crate::models::NoiseParams;
use crate::report::InitErrorRanges;
use crate::sim::{GroundMotionParams, Scenario, SensorRig, StandingPose};
use crate::streams::GroundHold;

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundSection {
    pub pitch_amplitude_deg: f64,
    pub pitch_frequency: f64,
    pub pitch_axis: [f64; 3],
    pub sway_amplitude: f64,
    pub sway_frequency: f64,
    pub sway_axis: [f64; 3],
    pub roll_amplitude_deg: f64,
    pub roll_frequency: f64,
    pub roll_axis: [f64; 3],
    pub gravity: [f64; 3],
}

impl Default for GroundSection {
    fn default() -> Self {
        let p = GroundMotionParams::default();
        Self {
            pitch_amplitude_deg: p.pitch_amplitude.to_degrees(),
            pitch_frequency: p.pitch_frequency,
            pitch_axis: p.pitch_axis.into(),
            sway_amplitude: p.sway_amplitude,
            sway_frequency: p.sway_frequency,
            sway_axis: p.sway_axis.into(),
            roll_amplitude_deg: p.roll_amplitude.to_degrees(),
            roll_frequency: p.roll_frequency,
            roll_axis: p.roll_axis.into(),
            gravity: p.gravity.into(),
        }
    }
}

impl GroundSection {
    pub fn params(&self) -> GroundMotionParams {
        GroundMotionParams {
            pitch_amplitude: self.pitch_amplitude_deg.to_radians(),
            pitch_frequency: self.pitch_frequency,
            pitch_axis: v3(self.pitch_axis),
            sway_amplitude: self.sway_amplitude,
            sway_frequency: self.sway_frequency,
            sway_axis: v3(self.sway_axis),
            roll_amplitude: self.roll_amplitude_deg.to_radians(),
            roll_frequency: self.roll_frequency,
            roll_axis: v3(self.roll_axis),
            gravity: v3(self.gravity),
        }
    }
}

/// Mirror of [`NoiseParams`] for (de)serialization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub sd_omega_b: f64,
    pub sd_accel_b: f64,
    pub sd_omega_d: f64,
    pub sd_accel_d: f64,
    pub sd_contact_vel: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseParams::default().into()
    }
}

impl From<NoiseParams> for NoiseSection {
    fn from(n: NoiseParams) -> Self {
        Self {
            sd_omega_b: n.sd_omega_b,
            sd_accel_b: n.sd_accel_b,
            sd_omega_d: n.sd_omega_d,
            sd_accel_d: n.sd_accel_d,
            sd_contact_vel: n.sd_contact_vel,
        }
    }
}

impl From<NoiseSection> for NoiseParams {
    fn from(n: NoiseSection) -> Self {
        Self {
            sd_omega_b: n.sd_omega_b,
            sd_accel_b: n.sd_accel_b,
            sd_omega_d: n.sd_omega_d,
            sd_accel_d: n.sd_accel_d,
            sd_contact_vel: n.sd_contact_vel,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigSection {
    pub robot_rate: f64,
    pub ground_rate: f64,
    pub encoder_rate: f64,
    pub sd_joint_angle: f64,
    pub sd_joint_rate: f64,
    /// Drops all sensor noise when true.
    pub noise_free: bool,
    pub imu_noise: NoiseSection,
}

impl Default for RigSection {
    fn default() -> Self {
        let r = SensorRig::default();
        Self {
            robot_rate: r.robot_rate,
            ground_rate: r.ground_rate,
            encoder_rate: r.encoder_rate,
            sd_joint_angle: r.sd_joint_angle,
            sd_joint_rate: r.sd_joint_rate,
            noise_free: false,
            imu_noise: r.imu_noise.into(),
        }
    }
}

impl RigSection {
    pub fn rig(&self, seed: u64) -> SensorRig {
        let rig = SensorRig {
            robot_rate: self.robot_rate,
            ground_rate: self.ground_rate,
            encoder_rate: self.encoder_rate,
            imu_noise: self.imu_noise.into(),
            sd_joint_angle: self.sd_joint_angle,
            sd_joint_rate: self.sd_joint_rate,
            seed,
        };
        if self.noise_free { rig.noise_free() } else { rig }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrsNoiseSection {
    pub sd_gyro: f64,
    pub sd_accel: f64,
    pub sd_encoder_deg: f64,
    pub sd_contact_walk: f64,
}

impl Default for SrsNoiseSection {
    fn default() -> Self {
        let n = SrsNoiseParams::default();
        Self {
            sd_gyro: n.sd_gyro,
            sd_accel: n.sd_accel,
            sd_encoder_deg: n.sd_encoder.to_degrees(),
            sd_contact_walk: n.sd_contact_walk,
        }
    }
}

impl From<SrsNoiseSection> for SrsNoiseParams {
    fn from(n: SrsNoiseSection) -> Self {
        Self {
            sd_gyro: n.sd_gyro,
            sd_accel: n.sd_accel,
            sd_encoder: n.sd_encoder_deg.to_radians(),
            sd_contact_walk: n.sd_contact_walk,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSection {
    pub axis: [f64; 3],
    #[serde(default)]
    pub origin: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub base_offset: [f64; 3],
    pub foot_offset: [f64; 3],
    pub joints: Vec<JointSection>,
}

impl Default for ChainSection {
    fn default() -> Self {
        let c = humanoid_leg();
        Self {
            base_offset: c.base_offset.into(),
            foot_offset: c.foot_offset.into(),
            joints: c
                .joints
                .iter()
                .map(|j| JointSection {
                    axis: j.axis.into(),
                    origin: j.origin.into(),
                })
                .collect(),
        }
    }
}

impl ChainSection {
    pub fn chain(&self) -> Result<KinematicChain> {
        let joints = self
            .joints
            .iter()
            .map(|j| Joint {
                axis: v3(j.axis),
                origin: v3(j.origin),
            })
            .collect();
        KinematicChain::new(v3(self.base_offset), joints, v3(self.foot_offset))
            .map_err(|e| Error::Config(format!("chain: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StandingSection {
    /// Joint angles (rad); empty means the default bent-knee pose for six joints, zeros otherwise.
    pub q: Vec<f64>,
    /// Foot position in the ground frame (m).
    pub foot: [f64; 3],
    /// Base attitude relative to the ground, roll/pitch/yaw (deg).
    pub rpy_deg: [f64; 3],
}

impl Default for StandingSection {
    fn default() -> Self {
        Self {
            q: Vec::new(),
            foot: [0.3, 0.1, 0.0],
            rpy_deg: [0.0; 3],
        }
    }
}

impl StandingSection {
    pub fn pose(&self, chain: &KinematicChain) -> Result<StandingPose> {
        let n = chain.joint_count();
        let q = if self.q.is_empty() {
            let mut q = DVector::zeros(n);
            if n == 6 {
                q.copy_from_slice(&[0.0, 0.0, -0.3, 0.6, -0.3, 0.0]);
            }
            q
        } else if self.q.len() == n {
            DVector::from_column_slice(&self.q)
        } else {
            return Err(Error::Config(format!(
                "standing.q has {} entries but the chain has {n} joints",
                self.q.len()
            )));
        };
        let [r, p, y] = self.rpy_deg.map(f64::to_radians);
        let rot = Rotation3::from_euler_angles(r, p, y).into_inner();
        StandingPose::with_foot_at(chain, rot, q, v3(self.foot))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HoldPolicy {
    ZeroOrder,
    Linear,
}

impl From<HoldPolicy> for GroundHold {
    fn from(h: HoldPolicy) -> Self {
        match h {
            HoldPolicy::ZeroOrder => GroundHold::ZeroOrder,
            HoldPolicy::Linear => GroundHold::Linear,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub ground_hold: HoldPolicy,
    pub reorth_threshold: f64,
    /// Initial standard deviations: attitude (deg), velocity (m/s), position (m).
    pub init_sd_angle_deg: f64,
    pub init_sd_vel: f64,
    pub init_sd_pos: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            ground_hold: HoldPolicy::ZeroOrder,
            reorth_threshold: 1e-8,
            init_sd_angle_deg: 23.0,
            init_sd_vel: 1.0,
            init_sd_pos: 3.0,
        }
    }
}

impl FilterSection {
    pub fn cov_diag(&self) -> Vec9 {
        let (a, v, p) = (self.init_sd_angle_deg.to_radians().powi(2), self.init_sd_vel.powi(2), self.init_sd_pos.powi(2));
        Vec9::from_column_slice(&[a, a, a, v, v, v, p, p, p])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitErrorSection {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub angle_deg: [f64; 2],
}

impl Default for InitErrorSection {
    fn default() -> Self {
        let r = InitErrorRanges::default();
        Self {
            pos: [r.pos.0, r.pos.1],
            vel: [r.vel.0, r.vel.1],
            angle_deg: [r.angle_deg.0, r.angle_deg.1],
        }
    }
}

impl InitErrorSection {
    pub fn ranges(&self) -> InitErrorRanges {
        InitErrorRanges {
            pos: (self.pos[0], self.pos[1]),
            vel: (self.vel[0], self.vel[1]),
            angle_deg: (self.angle_deg[0], self.angle_deg[1]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub duration: f64,
    pub ground: GroundSection,
    pub rig: RigSection,
    pub noise: NoiseSection,
    pub srs_noise: SrsNoiseSection,
    pub chain: ChainSection,
    pub standing: StandingSection,
    pub filter: FilterSection,
    pub init_error: InitErrorSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            duration: 10.0,
            ground: GroundSection::default(),
            rig: RigSection::default(),
            noise: NoiseSection::default(),
            srs_noise: SrsNoiseSection::default(),
            chain: ChainSection::default(),
            standing: StandingSection::default(),
            filter: FilterSection::default(),
            init_error: InitErrorSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::Config(format!("duration must be positive, got {}", self.duration)));
        }
        self.ground.params().validate().map_err(wrap)?;
        self.rig.rig(0).validate().map_err(wrap)?;
        NoiseParams::from(self.noise).validate().map_err(wrap)?;
        SrsNoiseParams::from(self.srs_noise).validate().map_err(wrap)?;
        let chain = self.chain.chain()?;
        self.standing.pose(&chain).map_err(wrap)?;
        self.filter_config().validate().map_err(wrap)?;
        if !(self.filter.reorth_threshold > 0.0) {
            return Err(Error::Config("filter.reorth_threshold must be positive".into()));
        }
        self.init_error.ranges().validate().map_err(wrap)?;
        Ok(())
    }

    pub fn scenario(&self, seed: u64) -> Result<Scenario> {
        let chain = self.chain.chain()?;
        let motion = self.standing.pose(&chain)?;
        Ok(Scenario {
            ground: self.ground.params(),
            rig: self.rig.rig(seed),
            chain,
            motion,
            duration: self.duration,
        })
    }

    /// Proposed-filter settings with the initial state left at identity.
    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            noise: self.noise.into(),
            initial_cov_diag: self.filter.cov_diag(),
            ground_hold: self.filter.ground_hold.into(),
            reorth_threshold: self.filter.reorth_threshold,
            ..FilterConfig::default()
        }
    }

    pub fn srs_config(&self) -> SrsConfig {
        SrsConfig {
            noise: self.srs_noise.into(),
            gravity: v3(self.ground.gravity),
            initial_cov_diag: self.filter.cov_diag(),
            ..SrsConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.ground.params(), GroundMotionParams::default());
        assert_eq!(c.chain.chain().unwrap(), humanoid_leg());
        assert_eq!(c.filter_config(), FilterConfig::default());
    }

    #[test]
    #[allow(clippy::field_reassign_with_default)]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.duration = 3.5;
        c.ground.roll_amplitude_deg = 4.0;
        c.filter.ground_hold = HoldPolicy::Linear;
        c.output.dir = Some("out".into());
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn sections_parse() {
        let text = r#"
            duration = 2.0
            [ground]
            pitch_amplitude_deg = 5.0
            [rig]
            noise_free = true
            [chain]
            foot_offset = [0.0, 0.0, -0.8]
            [[chain.joints]]
            axis = [0.0, 1.0, 0.0]
            [standing]
            q = [0.1]
            [init_error]
            pos = [-1.0, 1.0]
        "#;
        let c = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(c.chain.joints.len(), 1);
        let sc = c.scenario(3).unwrap();
        assert_eq!(sc.rig.imu_noise.sd_accel_b, 0.0);
        assert_eq!(sc.motion.q.len(), 1);
        assert_eq!(c.init_error.ranges().pos, (-1.0, 1.0));
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "duration = -1.0",
            "unknown = 1",
            "[ground]\npitch_axis = [0.0, 2.0, 0.0]",
            "[init_error]\npos = [1.0, -1.0]",
            "[standing]\nq = [0.1]",
            "[filter]\nground_hold = \"cubic\"",
            "[rig]\nrobot_rate = 0.0",
            "duration = ",
        ] {
            assert!(matches!(RunConfig::from_toml_str(text), Err(Error::Config(_))), "{text}");
        }
    }
}
