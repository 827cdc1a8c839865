//! Helpers shared by the integration tests. Oracles here are written from the
//! definitions directly and do not call the library routines they check.
#![allow(dead_code)]

use nalgebra::{DVector, SMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use niekf::baseline::{run_srs, SrsConfig};
use niekf::filter::{run, FilterConfig, TraceRecord};
use niekf::kinematics::{humanoid_leg, Joint, KinematicChain};
use niekf::liegroup::{Mat3, Mat5, Mat9, Vec3, Vec9, SE23};
use niekf::models::{ImuFrame, ImuSample};
use niekf::report::{sample_initial_error, InitErrorRanges, InitialError};
use niekf::sim::{default_standing, GroundMotionParams, Scenario, SensorRig, SimOutput};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rv(rng: &mut impl Rng, s: f64) -> Vec3 {
    Vec3::from_fn(|_, _| rng.random_range(-s..s))
}

pub fn unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = rv(rng, 1.0);
        if v.norm() > 0.1 {
            return v.normalize();
        }
    }
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Truncated power series `Σ_{n<terms} Mⁿ/n!`.
pub fn series_expm<const N: usize>(m: &SMatrix<f64, N, N>, terms: usize) -> SMatrix<f64, N, N> {
    let mut term = SMatrix::<f64, N, N>::identity();
    let mut out = term;
    for n in 1..terms {
        term = term * m / n as f64;
        out += term;
    }
    out
}

pub fn random_rotation(rng: &mut impl Rng) -> Mat3 {
    let angle = rng.random_range(0.0..3.0);
    series_expm(&skew(&(unit(rng) * angle)), 40)
}

pub fn random_state(rng: &mut impl Rng) -> SE23 {
    SE23::new(random_rotation(rng), rv(rng, 2.0), rv(rng, 2.0))
}

/// `[[ω]×, a, 0; 0, 0, 1; 0, 0, 0]`.
pub fn input_matrix(omega: &Vec3, accel: &Vec3) -> Mat5 {
    let mut u = Mat5::zeros();
    u.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(omega));
    u.fixed_view_mut::<3, 1>(0, 3).copy_from(accel);
    u[(3, 4)] = 1.0;
    u
}

pub fn wedge(xi: &Vec9) -> Mat5 {
    let mut m = Mat5::zeros();
    let r = Vec3::new(xi[0], xi[1], xi[2]);
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&r));
    for i in 0..3 {
        m[(i, 3)] = xi[3 + i];
        m[(i, 4)] = xi[6 + i];
    }
    m
}

pub fn vee(m: &Mat5) -> Vec9 {
    Vec9::from_column_slice(&[
        m[(2, 1)],
        m[(0, 2)],
        m[(1, 0)],
        m[(0, 3)],
        m[(1, 3)],
        m[(2, 3)],
        m[(0, 4)],
        m[(1, 4)],
        m[(2, 4)],
    ])
}

/// Right-invariant error generator: `ξ̇^ = ξ^ U_D − U_D ξ^`, as a 9×9 matrix.
pub fn error_generator(omega_d: &Vec3, accel_d: &Vec3) -> Mat9 {
    let u = input_matrix(omega_d, accel_d);
    let mut a = Mat9::zeros();
    for j in 0..9 {
        let e = Vec9::from_fn(|i, _| if i == j { 1.0 } else { 0.0 });
        let x = wedge(&e);
        a.set_column(j, &vee(&(x * u - u * x)));
    }
    a
}

pub fn random_imu(rng: &mut impl Rng, frame: ImuFrame) -> ImuSample {
    ImuSample::new(0.0, rv(rng, 2.0), rv(rng, 15.0), frame)
}

/// Random open chain with 1..=7 revolute joints.
pub fn random_chain(rng: &mut impl Rng) -> KinematicChain {
    let n = rng.random_range(1..=7);
    let joints = (0..n)
        .map(|_| Joint {
            axis: unit(rng),
            origin: rv(rng, 0.3),
        })
        .collect();
    KinematicChain::new(rv(rng, 0.2), joints, rv(rng, 0.5)).unwrap()
}

pub fn random_q(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.5..1.5))
}

pub fn scenario(ground: GroundMotionParams, rig: SensorRig, duration: f64) -> Scenario {
    let chain = humanoid_leg();
    let motion = default_standing(&chain).unwrap();
    Scenario {
        ground,
        rig,
        chain,
        motion,
        duration,
    }
}

/// Ground pitching about y and rolling about x at incommensurate rates.
pub fn two_axis_ground() -> GroundMotionParams {
    GroundMotionParams {
        roll_amplitude: 6f64.to_radians(),
        roll_frequency: 2.3,
        ..GroundMotionParams::default()
    }
}

pub struct Trial {
    pub sim: SimOutput,
    pub err: InitialError,
    pub proposed: Vec<TraceRecord>,
}

/// One seeded trial: sensor noise from `seed`, initial error drawn for `trial`.
pub fn proposed_trial(sc: &Scenario, seed: u64, trial: u64, ranges: &InitErrorRanges) -> Trial {
    let sim = sc.synthesize(false).unwrap();
    let err = sample_initial_error(ranges, seed, trial).unwrap();
    let proposed = run_proposed(&sim, &err, sc);
    Trial { sim, err, proposed }
}

pub fn run_proposed(sim: &SimOutput, err: &InitialError, sc: &Scenario) -> Vec<TraceRecord> {
    let cfg = FilterConfig {
        initial_state: err.apply(&sim.truth[0].rel),
        ..FilterConfig::default()
    };
    run(&sim.log, &cfg, &sc.chain).unwrap()
}

pub fn run_baseline(sim: &SimOutput, err: &InitialError, sc: &Scenario) -> Vec<TraceRecord> {
    let t = &sim.truth[0];
    let start = err.apply(&SE23::new(t.robot_rot, t.robot_vel, t.robot_pos));
    let cfg = SrsConfig {
        gravity: sc.ground.gravity,
        initial_rot: start.rot,
        initial_vel: start.vel,
        initial_pos: start.pos,
        ..SrsConfig::default()
    };
    run_srs(&sim.log, &cfg, &sc.chain).unwrap()
}
