//! Time-ordered sensor logs and the step schedule that drives both filters.

use crate::error::{Error, Result};
use crate::kinematics::JointState;
use crate::liegroup::Vec3;
use crate::models::{ImuFrame, ImuSample};

/// Encoder samples within this distance of a robot-IMU tick count as simultaneous.
const CLOCK_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SensorLog {
    pub robot_imu: Vec<ImuSample>,
    pub ground_imu: Vec<ImuSample>,
    pub encoders: Vec<JointState>,
}

/// How ground-IMU values are carried between their (slower) samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GroundHold {
    #[default]
    ZeroOrder,
    Linear,
}

/// Inputs for one filter step at robot-IMU tick `index`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub index: usize,
    pub t: f64,
    /// Encoder sample that arrived since the previous tick, if any.
    pub encoder: Option<usize>,
}

fn check_monotone(times: impl Iterator<Item = f64>, name: &str, strict: bool) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for (i, t) in times.enumerate() {
        if !t.is_finite() {
            return Err(Error::fault(format!("{name}: non-finite timestamp at index {i}")));
        }
        if t < prev || (strict && t == prev) {
            return Err(Error::fault(format!(
                "{name}: timestamp regresses at index {i} ({t} after {prev})"
            )));
        }
        prev = t;
    }
    Ok(())
}

impl SensorLog {
    /// Checks ordering and frame tags; the robot stream must be non-empty and strictly increasing.
    pub fn validate(&self) -> Result<()> {
        if self.robot_imu.is_empty() {
            return Err(Error::fault("robot IMU stream is empty"));
        }
        check_monotone(self.robot_imu.iter().map(|s| s.t), "robot IMU", true)?;
        check_monotone(self.ground_imu.iter().map(|s| s.t), "ground IMU", false)?;
        check_monotone(self.encoders.iter().map(|s| s.t), "encoders", false)?;
        if let Some(i) = self.robot_imu.iter().position(|s| s.frame != ImuFrame::RobotB) {
            return Err(Error::fault(format!("robot IMU sample {i} is tagged with the ground frame")));
        }
        if let Some(i) = self.ground_imu.iter().position(|s| s.frame != ImuFrame::GroundD) {
            return Err(Error::fault(format!("ground IMU sample {i} is tagged with the robot frame")));
        }
        if let Some(i) = self
            .robot_imu
            .iter()
            .chain(&self.ground_imu)
            .position(|s| !s.is_finite())
        {
            return Err(Error::fault(format!("non-finite IMU reading at merged index {i}")));
        }
        Ok(())
    }

    /// One step per robot-IMU sample; encoders are attached to the first tick at or after
    /// their timestamp.
    pub fn schedule(&self) -> Result<Vec<Step>> {
        self.validate()?;
        let mut steps = Vec::with_capacity(self.robot_imu.len());
        let mut next_enc = 0;
        for (index, s) in self.robot_imu.iter().enumerate() {
            let mut encoder = None;
            while next_enc < self.encoders.len() && self.encoders[next_enc].t <= s.t + CLOCK_TOLERANCE {
                encoder = Some(next_enc);
                next_enc += 1;
            }
            steps.push(Step { index, t: s.t, encoder });
        }
        Ok(steps)
    }

    /// Ground reading at time `t` under the given hold policy. Times before the first
    /// sample take the first sample.
    pub fn ground_at(&self, t: f64, hold: GroundHold) -> Option<ImuSample> {
        let g = &self.ground_imu;
        if g.is_empty() {
            return None;
        }
        // index of the last sample with time <= t
        let upper = g.partition_point(|s| s.t <= t + CLOCK_TOLERANCE);
        if upper == 0 {
            return Some(ImuSample { t, ..g[0] });
        }
        let a = &g[upper - 1];
        let out = match (hold, g.get(upper)) {
            (GroundHold::Linear, Some(b)) if b.t > a.t => {
                let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
                let lerp = |x: &Vec3, y: &Vec3| x + (y - x) * w;
                ImuSample::new(t, lerp(&a.omega, &b.omega), lerp(&a.accel, &b.accel), ImuFrame::GroundD)
            }
            _ => ImuSample { t, ..*a },
        };
        Some(out)
    }
}
