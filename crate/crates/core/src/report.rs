//! Error metrics, RMSE tables and initial-error sampling.

use nalgebra::Rotation3;
use rand::Rng;

use crate::error::{Error, Result};
use crate::filter::TraceRecord;
use crate::liegroup::{Mat3, Vec3, SE23};
use crate::sim::{keyed_rng, GroundTruthRecord};

/// Noise stream used for initial-error draws; distinct from the sensor streams.
const INIT_ERROR_STREAM: u64 = 100;

/// Timestamps closer than this are considered aligned.
const ALIGN_TOLERANCE: f64 = 1e-9;

/// Closed sampling intervals per component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitErrorRanges {
    pub pos: (f64, f64),
    pub vel: (f64, f64),
    pub angle_deg: (f64, f64),
}

impl Default for InitErrorRanges {
    fn default() -> Self {
        Self {
            pos: (-3.0, 3.0),
            vel: (-1.0, 1.0),
            angle_deg: (-23.0, 23.0),
        }
    }
}

impl InitErrorRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("pos", self.pos), ("vel", self.vel), ("angle_deg", self.angle_deg)] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::arg(format!("{name} range must satisfy lo <= hi, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Perturbation applied to a true state: `R̄ = R_err R`, `v̄ = v + δv`, `p̄ = p + δp`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialError {
    /// Roll, pitch, yaw of `R_err` (rad, intrinsic Z-Y-X).
    pub euler: Vec3,
    pub vel: Vec3,
    pub pos: Vec3,
}

impl InitialError {
    pub fn zero() -> Self {
        Self {
            euler: Vec3::zeros(),
            vel: Vec3::zeros(),
            pos: Vec3::zeros(),
        }
    }

    pub fn rotation(&self) -> Mat3 {
        Rotation3::from_euler_angles(self.euler.x, self.euler.y, self.euler.z).into_inner()
    }

    pub fn apply(&self, truth: &SE23) -> SE23 {
        SE23::new(self.rotation() * truth.rot, truth.vel + self.vel, truth.pos + self.pos)
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi { lo } else { rng.random_range(lo..=hi) }
}

/// Uniform per-axis draw, reproducible from `(seed, trial)`.
pub fn sample_initial_error(ranges: &InitErrorRanges, seed: u64, trial: u64) -> Result<InitialError> {
    ranges.validate()?;
    let mut rng = keyed_rng(seed, INIT_ERROR_STREAM, trial);
    let mut draw3 = |r: (f64, f64)| Vec3::new(uniform(&mut rng, r), uniform(&mut rng, r), uniform(&mut rng, r));
    let (lo, hi) = ranges.angle_deg;
    let euler = draw3((lo.to_radians(), hi.to_radians()));
    let vel = draw3(ranges.vel);
    let pos = draw3(ranges.pos);
    Ok(InitialError { euler, vel, pos })
}

/// Roll, pitch, yaw of `R̄ Rᵀ`.
pub fn euler_error(est: &Mat3, truth: &Mat3) -> Vec3 {
    let (r, p, y) = Rotation3::from_matrix(&(est * truth.transpose())).euler_angles();
    Vec3::new(r, p, y)
}

/// Estimate minus truth, with attitude as Z-Y-X angles (rad).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateError {
    pub euler: Vec3,
    pub vel: Vec3,
    pub pos: Vec3,
}

impl StateError {
    pub fn between(est_rot: &Mat3, est_vel: &Vec3, est_pos: &Vec3, truth: &SE23) -> Self {
        Self {
            euler: euler_error(est_rot, &truth.rot),
            vel: est_vel - truth.vel,
            pos: est_pos - truth.pos,
        }
    }

    pub fn of_trace(rec: &TraceRecord, truth: &SE23) -> Self {
        Self::between(&rec.rot, &rec.vel, &rec.pos, truth)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TruthFrame {
    /// Robot relative to the ground.
    Relative,
    /// Robot in the inertial world frame.
    World,
}

impl GroundTruthRecord {
    pub fn state_in(&self, frame: TruthFrame) -> SE23 {
        match frame {
            TruthFrame::Relative => self.rel,
            TruthFrame::World => SE23::new(self.robot_rot, self.robot_vel, self.robot_pos),
        }
    }
}

/// Per-component RMSE: velocities in m/s, angles in degrees, positions in m.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmseRecord {
    pub vel: Vec3,
    pub euler_deg: Vec3,
    pub pos: Vec3,
    pub samples: usize,
}

impl RmseRecord {
    /// Components in table order.
    pub const NAMES: [&'static str; 9] = ["vx", "vy", "vz", "roll", "pitch", "yaw", "px", "py", "pz"];

    pub fn components(&self) -> [f64; 9] {
        let (v, e, p) = (self.vel, self.euler_deg, self.pos);
        [v.x, v.y, v.z, e.x, e.y, e.z, p.x, p.y, p.z]
    }
}

/// RMSE over records with `t ≥ steady_start`. Trace and truth must share a clock.
pub fn rmse_report(
    trace: &[TraceRecord],
    truth: &[GroundTruthRecord],
    frame: TruthFrame,
    steady_start: f64,
) -> Result<RmseRecord> {
    if trace.len() != truth.len() {
        return Err(Error::fault(format!(
            "trace has {} records but truth has {}",
            trace.len(),
            truth.len()
        )));
    }
    if let Some((i, (a, b))) = trace
        .iter()
        .zip(truth)
        .enumerate()
        .find(|(_, (a, b))| (a.t - b.t).abs() > ALIGN_TOLERANCE)
    {
        return Err(Error::fault(format!(
            "timestamps misaligned at record {i}: trace t = {}, truth t = {}",
            a.t, b.t
        )));
    }
    let horizon = trace.last().map_or(f64::NEG_INFINITY, |r| r.t);
    if !(steady_start <= horizon) {
        return Err(Error::arg(format!(
            "steady-state start {steady_start} is past the last record at {horizon}"
        )));
    }
    let mut sum = [0.0; 9];
    let mut n = 0usize;
    for (est, tr) in trace.iter().zip(truth).filter(|(e, _)| e.t >= steady_start) {
        let e = StateError::of_trace(est, &tr.state_in(frame));
        let deg = e.euler.map(f64::to_degrees);
        let parts = [e.vel.x, e.vel.y, e.vel.z, deg.x, deg.y, deg.z, e.pos.x, e.pos.y, e.pos.z];
        for (s, x) in sum.iter_mut().zip(parts) {
            *s += x * x;
        }
        n += 1;
    }
    let r = sum.map(|s| (s / n as f64).sqrt());
    Ok(RmseRecord {
        vel: Vec3::new(r[0], r[1], r[2]),
        euler_deg: Vec3::new(r[3], r[4], r[5]),
        pos: Vec3::new(r[6], r[7], r[8]),
        samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::{rotation_about, Vec9};

    fn truth_at(t: f64) -> GroundTruthRecord {
        let rel = SE23::new(rotation_about(&Vec3::z(), 0.2 * t), Vec3::new(t, 0.0, 0.0), Vec3::new(0.0, t, 1.0));
        GroundTruthRecord {
            t,
            rel,
            ground_rot: Mat3::identity(),
            ground_vel: Vec3::zeros(),
            ground_pos: Vec3::zeros(),
            robot_rot: rel.rot,
            robot_vel: rel.vel,
            robot_pos: rel.pos,
            foot: Vec3::zeros(),
        }
    }

    fn trace_of(truth: &[GroundTruthRecord], offset: Vec3) -> Vec<TraceRecord> {
        truth
            .iter()
            .map(|r| TraceRecord {
                t: r.t,
                rot: r.rel.rot,
                vel: r.rel.vel,
                pos: r.rel.pos + offset,
                cov_diag: Vec9::zeros(),
                innovation_norm: 0.0,
            })
            .collect()
    }

    #[test]
    fn exact_trace_has_zero_rmse() {
        let truth: Vec<_> = (0..50).map(|i| truth_at(i as f64 * 0.1)).collect();
        let r = rmse_report(&trace_of(&truth, Vec3::zeros()), &truth, TruthFrame::Relative, 1.0).unwrap();
        assert!(r.components().iter().all(|x| x.abs() < 1e-12));
        assert_eq!(r.samples, 40);
    }

    #[test]
    fn constant_offset() {
        let truth: Vec<_> = (0..50).map(|i| truth_at(i as f64 * 0.1)).collect();
        let r = rmse_report(&trace_of(&truth, Vec3::new(0.1, 0.0, 0.0)), &truth, TruthFrame::World, 0.0).unwrap();
        let c = r.components();
        assert!((c[6] - 0.1).abs() < 1e-12);
        for (i, x) in c.iter().enumerate() {
            if i != 6 {
                assert!(x.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn misalignment_names_the_record() {
        let truth: Vec<_> = (0..5).map(|i| truth_at(i as f64 * 0.1)).collect();
        let mut trace = trace_of(&truth, Vec3::zeros());
        trace[3].t += 0.01;
        let err = rmse_report(&trace, &truth, TruthFrame::Relative, 0.0).unwrap_err().to_string();
        assert!(err.contains("record 3"), "{err}");
        assert!(rmse_report(&trace[..4], &truth, TruthFrame::Relative, 0.0).is_err());
        assert!(rmse_report(&trace_of(&truth, Vec3::zeros()), &truth, TruthFrame::Relative, 9.0).is_err());
    }

    #[test]
    fn euler_error_round_trip() {
        let err = InitialError {
            euler: Vec3::new(0.1, -0.2, 0.3),
            vel: Vec3::zeros(),
            pos: Vec3::zeros(),
        };
        let truth = SE23::new(rotation_about(&Vec3::new(1.0, 2.0, 3.0).normalize(), 0.7), Vec3::zeros(), Vec3::zeros());
        let est = err.apply(&truth);
        assert!((euler_error(&est.rot, &truth.rot) - err.euler).amax() < 1e-12);
    }

    #[test]
    fn sampling_is_reproducible_and_in_range() {
        let r = InitErrorRanges::default();
        let a = sample_initial_error(&r, 5, 3).unwrap();
        assert_eq!(a, sample_initial_error(&r, 5, 3).unwrap());
        assert_ne!(a, sample_initial_error(&r, 5, 4).unwrap());
        for k in 0..200 {
            let e = sample_initial_error(&r, 1, k).unwrap();
            assert!(e.pos.amax() <= 3.0 && e.vel.amax() <= 1.0 && e.euler.amax() <= 23f64.to_radians());
        }
        let bad = InitErrorRanges { pos: (1.0, -1.0), ..r };
        assert!(sample_initial_error(&bad, 0, 0).is_err());
    }
}
