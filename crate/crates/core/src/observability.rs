//! Local observability matrix of the linearized relative-state filter.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filter::FilterState;
use crate::kinematics::{forward_kinematics, JointState, KinematicChain};
use crate::liegroup::{Mat9, Tangent9, Vec3, Vec9};
use crate::models::{jacobian_h_at, phi_blocks, ImuSample};
use crate::sim::{RelativeMotion, Scenario};

/// Relative singular-value tolerance per matrix dimension.
pub const RANK_TOLERANCE_FACTOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    FullyObservable,
    YawAndPositionUnobservable,
    Other,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FullyObservable => "fully-observable",
            Self::YawAndPositionUnobservable => "yaw-and-position-unobservable",
            Self::Other => "other",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservabilityReport {
    pub o: DMatrix<f64>,
    pub rank: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
    pub null_space: Vec<Tangent9>,
    pub classification: Classification,
}

/// Numeric rank and an orthonormal basis of the right null space.
///
/// Singular values at or below `tol · σ_max` count as zero.
pub fn rank_and_nullspace(m: &DMatrix<f64>, tol: f64) -> Result<(usize, Vec<f64>, Vec<DVector<f64>>)> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::arg("rank of an empty matrix is undefined"));
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::arg(format!("rank tolerance must be positive, got {tol}")));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::arg("matrix contains non-finite entries"));
    }
    let n = m.ncols();
    // pad so that Vᵀ is square
    let padded = if m.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.rows_mut(0, m.nrows()).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let cutoff = tol * sv[0];
    let rank = if sv[0] == 0.0 { 0 } else { sv.iter().filter(|s| **s > cutoff).count() };
    let basis = order[rank..]
        .iter()
        .map(|&i| v_t.row(i).transpose())
        .collect();
    let sv = sv.into_iter().take(m.nrows().min(n)).collect();
    Ok((rank, sv, basis))
}

/// Stacks `H_{j} Φ_{j−1}⋯Φ_0` for `j = 0..k`, with `H_j` linearized at `states[j]`
/// and `Φ_j` from `inputs_d[j]` over `states[j+1].t − states[j].t`.
pub fn build_observability(
    states: &[FilterState],
    inputs_d: &[ImuSample],
    joints: &[JointState],
    chain: &KinematicChain,
    k: usize,
) -> Result<ObservabilityReport> {
    if k == 0 {
        return Err(Error::arg("observability needs at least one step"));
    }
    if states.len() < k || inputs_d.len() < k || joints.len() < k {
        return Err(Error::arg(format!(
            "need {k} states, ground samples and joint samples; got {}, {}, {}",
            states.len(),
            inputs_d.len(),
            joints.len()
        )));
    }
    let mut o = DMatrix::zeros(3 * k, 9);
    let mut transition = Mat9::identity();
    for j in 0..k {
        let s = forward_kinematics(chain, &joints[j].q)?;
        let h = jacobian_h_at(&states[j].xhat, &inputs_d[j].omega, &s);
        o.fixed_view_mut::<3, 9>(3 * j, 0).copy_from(&(h * transition));
        if j + 1 < k {
            let dt = states[j + 1].t - states[j].t;
            transition = phi_blocks(&inputs_d[j].omega, &inputs_d[j].accel, dt)? * transition;
        }
    }
    let tol = RANK_TOLERANCE_FACTOR * (3 * k).max(9) as f64;
    let (rank, singular_values, basis) = rank_and_nullspace(&o, tol)?;
    let null_space: Vec<Tangent9> = basis
        .iter()
        .map(|v| Tangent9::from_vector(&Vec9::from_column_slice(v.as_slice())))
        .collect();
    let mean_accel = inputs_d[..k].iter().map(|u| u.accel).sum::<Vec3>() / k as f64;
    let classification = classify(rank, &null_space, &mean_accel);
    Ok(ObservabilityReport {
        o,
        rank,
        singular_values,
        null_space,
        classification,
    })
}

/// Observability along a simulated trajectory: `k` noise-free samples spaced `dt`
/// apart starting at `t0`, linearized at the true relative state.
pub fn scenario_observability<M: RelativeMotion>(
    scenario: &Scenario<M>,
    t0: f64,
    dt: f64,
    k: usize,
) -> Result<ObservabilityReport> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::arg(format!("step must be positive, got {dt}")));
    }
    let mut states = Vec::with_capacity(k);
    let mut inputs = Vec::with_capacity(k);
    let mut joints = Vec::with_capacity(k);
    for j in 0..k {
        let t = t0 + j as f64 * dt;
        let truth = scenario.ground_truth(t)?;
        states.push(FilterState::new(truth.rel, Mat9::identity(), t));
        inputs.push(scenario.ideal_imu(t).1);
        let r = scenario.motion.sample(t);
        joints.push(JointState::new(t, r.q, r.qdot));
    }
    build_observability(&states, &inputs, &joints, &scenario.chain, k)
}

/// Distance of `v` from the span of an orthonormal basis.
fn span_residual(basis: &[Tangent9], v: &Vec9) -> f64 {
    let proj = basis.iter().fold(Vec9::zeros(), |acc, b| {
        let b = b.to_vector();
        acc + b * b.dot(v)
    });
    (v - proj).norm()
}

fn classify(rank: usize, null_space: &[Tangent9], accel_d: &Vec3) -> Classification {
    if rank == 9 {
        return Classification::FullyObservable;
    }
    if rank != 5 || accel_d.norm() == 0.0 {
        return Classification::Other;
    }
    let yaw = Tangent9::new(accel_d.normalize(), Vec3::zeros(), Vec3::zeros()).to_vector();
    let mut wanted = vec![yaw];
    for i in 0..3 {
        let mut e = Vec9::zeros();
        e[6 + i] = 1.0;
        wanted.push(e);
    }
    if wanted.iter().all(|w| span_residual(null_space, w) < 1e-6) {
        Classification::YawAndPositionUnobservable
    } else {
        Classification::Other
    }
}

impl fmt::Display for ObservabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows: {}", self.o.nrows())?;
        writeln!(f, "rank: {}", self.rank)?;
        writeln!(f, "classification: {}", self.classification)?;
        let sv: Vec<String> = self.singular_values.iter().map(|s| format!("{s:.6e}")).collect();
        writeln!(f, "singular_values: [{}]", sv.join(", "))?;
        writeln!(f, "null_space:")?;
        for v in &self.null_space {
            let parts: Vec<String> = v.to_vector().iter().map(|x| format!("{x:+.6}")).collect();
            writeln!(f, "  - [{}]", parts.join(", "))?;
        }
        Ok(())
    }
}
