//! Property-based checks of structural invariants.

mod common;

use nalgebra::DVector;
use proptest::prelude::*;

use common::*;
use niekf::filter::{update, FilterState, TraceRecord};
use niekf::kinematics::{forward_kinematics, humanoid_leg, JointState};
use niekf::liegroup::{
    adjoint, exp_se23, gamma, log_se23, rotation_about, Mat3, Mat9, Tangent9, Vec3, GAMMA_SERIES_THRESHOLD, SE23,
};
use niekf::models::{process_f, ImuFrame, ImuSample, NoiseParams};
use niekf::observability::{build_observability, rank_and_nullspace};
use niekf::report::{rmse_report, TruthFrame};
use niekf::sim::{sample_count, GroundMotionParams, SensorRig};

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    proptest::array::uniform3(-r..r).prop_map(Vec3::from)
}

fn rotation() -> impl Strategy<Value = Mat3> {
    (vec3(1.0), 0.0..3.1f64).prop_filter_map("axis", |(a, t)| (a.norm() > 0.1).then(|| rotation_about(&a.normalize(), t)))
}

fn element() -> impl Strategy<Value = SE23> {
    (rotation(), vec3(5.0), vec3(5.0)).prop_map(|(r, v, p)| SE23::new(r, v, p))
}

fn imu(frame: ImuFrame) -> impl Strategy<Value = ImuSample> {
    (vec3(3.0), vec3(20.0)).prop_map(move |(w, a)| ImuSample::new(0.0, w, a, frame))
}

/// `Γ_m` from its defining series.
fn gamma_series(m: usize, phi: &Vec3) -> Mat3 {
    let k = skew(phi);
    let mut out = Mat3::zeros();
    let mut pow = Mat3::identity();
    let mut fact: f64 = (1..=m).map(|i| i as f64).product();
    for n in 0..40 {
        out += pow / fact;
        pow *= k;
        fact *= (n + m + 1) as f64;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exp_log_round_trip(dir in vec3(1.0), angle in 0.0..3.0f64, v in vec3(10.0), p in vec3(10.0)) {
        prop_assume!(dir.norm() > 0.1);
        let xi = Tangent9::new(dir.normalize() * angle, v, p);
        let back = log_se23(&exp_se23(&xi)).unwrap();
        prop_assert!((back.to_vector() - xi.to_vector()).amax() < 1e-9);
    }

    #[test]
    fn gamma_branches_agree(dir in vec3(1.0), side in prop::bool::ANY, m in 0u8..3) {
        prop_assume!(dir.norm() > 0.1);
        let d = dir.normalize();
        let t = GAMMA_SERIES_THRESHOLD + if side { 1e-3 } else { -1e-3 };
        let g = gamma(m, &(d * t)).unwrap();
        prop_assert!((g - gamma_series(m as usize, &(d * t))).amax() < 1e-10);
        let below = gamma(m, &(d * (GAMMA_SERIES_THRESHOLD - 1e-12))).unwrap();
        let above = gamma(m, &(d * (GAMMA_SERIES_THRESHOLD + 1e-12))).unwrap();
        prop_assert!((below - above).amax() < 1e-10);
    }

    #[test]
    fn adjoint_is_a_homomorphism(x in element(), y in element()) {
        let lhs = adjoint(&(x * y));
        let rhs = adjoint(&x) * adjoint(&y);
        prop_assert!((lhs - rhs).amax() < 1e-11 * lhs.amax().max(1.0));
    }

    #[test]
    fn process_model_is_group_affine(x1 in element(), x2 in element(), ub in imu(ImuFrame::RobotB), ud in imu(ImuFrame::GroundD)) {
        let f = |x: &niekf::liegroup::Mat5| process_f(x, &ub, &ud).unwrap();
        let (a, b) = (x1.to_matrix(), x2.to_matrix());
        let lhs = f(&(a * b));
        let rhs = f(&a) * b + a * f(&b) - a * f(&niekf::liegroup::Mat5::identity()) * b;
        prop_assert!((lhs - rhs).amax() < 1e-11 * lhs.amax().max(1.0));
    }

    #[test]
    fn fk_is_periodic(seed in 0u64..1000, joint in 0usize..6) {
        let chain = humanoid_leg();
        let mut r = rng(seed);
        let q = random_q(&mut r, 6);
        let mut q2 = q.clone();
        q2[joint] += std::f64::consts::TAU;
        let a = forward_kinematics(&chain, &q).unwrap();
        let b = forward_kinematics(&chain, &q2).unwrap();
        prop_assert!((a - b).amax() < 1e-12);
    }

    /// Rotating the ground frame by a constant `Γ` (trajectory, estimate and ground gyro)
    /// leaves the innovation unchanged.
    #[test]
    fn innovation_invariant_under_ground_rotation(x in element(), g in rotation(), wd in vec3(1.0), wb in vec3(1.0), seed in 0u64..1000) {
        let chain = humanoid_leg();
        let mut r = rng(seed);
        let joint = JointState::new(0.0, random_q(&mut r, 6), random_q(&mut r, 6));
        let noise = NoiseParams::default();
        let state = FilterState::new(x, Mat9::identity(), 0.0);
        let rotated = FilterState::new(SE23::new(g * x.rot, g * x.vel, g * x.pos), Mat9::identity(), 0.0);
        let a = update(&state, &joint, &wb, &wd, &chain, &noise).unwrap();
        let b = update(&rotated, &joint, &wb, &(g * wd), &chain, &noise).unwrap();
        prop_assert!((a.innovation - b.innovation).amax() < 1e-9);
    }

    #[test]
    fn rank_and_null_space_are_consistent(seed in 0u64..1000, rank in 0usize..=9, rows in 1usize..40) {
        let mut r = rng(seed);
        let left = nalgebra::DMatrix::from_fn(rows, rank, |_, _| rand::Rng::random_range(&mut r, -1.0..1.0));
        let right = nalgebra::DMatrix::from_fn(rank, 9, |_, _| rand::Rng::random_range(&mut r, -1.0..1.0));
        let m = left * right;
        let (k, sv, null) = rank_and_nullspace(&m, 1e-9).unwrap();
        prop_assert!(k <= 9);
        prop_assert_eq!(null.len(), 9 - k);
        prop_assert!(k <= rank.min(rows));
        prop_assert!(sv.windows(2).all(|w| w[0] >= w[1]));
        let scale = m.amax().max(1.0);
        for v in &null {
            prop_assert!((&m * v).amax() <= 1e-8 * scale);
        }
    }

    #[test]
    fn sample_counts_follow_the_grid(duration in 0.01..3.0f64, rate in 10.0..600.0f64) {
        let n = sample_count(duration, rate);
        // samples at i / rate for i < n: the last lies before `duration`, the next does not
        prop_assert!(n >= 1);
        prop_assert!((n - 1) as f64 / rate < duration);
        prop_assert!(n as f64 / rate >= duration - 1e-9);
    }

    #[test]
    fn trace_equal_to_truth_has_zero_rmse(seed in 0u64..50) {
        let sc = scenario(GroundMotionParams::default(), SensorRig { seed, ..SensorRig::default() }, 0.5);
        let sim = sc.synthesize(false).unwrap();
        let trace: Vec<TraceRecord> = sim.truth.iter().map(|t| TraceRecord {
            t: t.t, rot: t.rel.rot, vel: t.rel.vel, pos: t.rel.pos,
            cov_diag: niekf::liegroup::Vec9::zeros(), innovation_norm: f64::NAN,
        }).collect();
        let r = rmse_report(&trace, &sim.truth, TruthFrame::Relative, 0.0).unwrap();
        prop_assert!(r.components().iter().all(|x| *x < 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn simulated_streams_have_expected_lengths(duration in 0.05..1.0f64, rr in 50.0..600.0f64, gr in 20.0..300.0f64, er in 20.0..600.0f64) {
        let rig = SensorRig { robot_rate: rr, ground_rate: gr, encoder_rate: er, ..SensorRig::default() };
        let sim = scenario(GroundMotionParams::default(), rig, duration).synthesize(true).unwrap();
        prop_assert_eq!(sim.log.robot_imu.len(), sample_count(duration, rr));
        prop_assert_eq!(sim.log.ground_imu.len(), sample_count(duration, gr));
        prop_assert_eq!(sim.log.encoders.len(), sample_count(duration, er));
        prop_assert_eq!(sim.truth.len(), sim.log.robot_imu.len());
    }

    #[test]
    fn observability_null_space_is_annihilated(seed in 0u64..100, k in 1usize..12) {
        let mut r = rng(seed);
        let chain = humanoid_leg();
        let q = random_q(&mut r, 6);
        let states: Vec<FilterState> = (0..k).map(|j| FilterState::new(random_state(&mut r), Mat9::identity(), j as f64 * 0.002)).collect();
        let inputs: Vec<ImuSample> = (0..k).map(|_| random_imu(&mut r, ImuFrame::GroundD)).collect();
        let joints: Vec<JointState> = (0..k).map(|j| JointState::new(j as f64 * 0.002, q.clone(), DVector::zeros(6))).collect();
        let rep = build_observability(&states, &inputs, &joints, &chain, k).unwrap();
        prop_assert_eq!(rep.null_space.len(), 9 - rep.rank);
        for v in &rep.null_space {
            prop_assert!((&rep.o * DVector::from_column_slice(v.to_vector().as_slice())).amax() <= 1e-8 * rep.o.amax());
        }
    }
}

#[test]
fn long_composition_stays_orthonormal() {
    let mut r = rng(77);
    let steps: Vec<SE23> = (0..16).map(|_| random_state(&mut r)).collect();
    let mut x = SE23::identity();
    let mut worst = 0f64;
    for i in 0..100_000 {
        x = (x * steps[i % steps.len()]).reorthonormalized(1e-8);
        // keep translations bounded so that the check is about R
        x = SE23::new(x.rot, x.vel * 0.0, x.pos * 0.0);
        worst = worst.max(x.orthonormality_error());
    }
    assert!(worst <= 1e-8, "{worst}");
}
