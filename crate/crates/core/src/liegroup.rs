//! Rotation and SE₂(3) group math.
//!
//! Group elements are kept as `(R, v, p)` triples and only expanded to the
//! 5×5 matrix
//!
//! ```text
//! | R  v  p |
//! | 0  1  0 |
//! | 0  0  1 |
//! ```
//!
//! when a caller needs matrix semantics. Tangent vectors are ordered
//! `(rotation, velocity, position)`, three components each.

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix5, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat5 = Matrix5<f64>;
pub type Vec9 = SVector<f64, 9>;
pub type Mat9 = SMatrix<f64, 9, 9>;

/// Below this angle the Γ coefficients are evaluated from their power series.
///
/// The closed forms lose all precision for Γ₂ well before 1e-4 rad because
/// `θ² + 2cos θ − 2` cancels to O(θ⁴), so the switch sits much higher.
pub const GAMMA_SERIES_THRESHOLD: f64 = 0.5;

/// Largest rotation angle accepted by the principal logarithm.
pub const LOG_MAX_ANGLE: f64 = std::f64::consts::PI - 1e-6;

/// Skew-symmetric matrix such that `hat3(v) * w == v.cross(&w)`.
pub fn hat3(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat3`]; reads the three off-diagonal entries below the diagonal.
pub fn vee3(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

// Σ_k (−1)^k θ^{2k} / (2k + offset)!, truncated once terms fall below f64 resolution
// for θ < GAMMA_SERIES_THRESHOLD.
fn alternating_series(theta_sq: f64, offset: u32) -> f64 {
    let mut fact = (1..=offset).map(f64::from).product::<f64>();
    let mut power = 1.0;
    let mut sum = 0.0;
    for k in 0..10u32 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * power / fact;
        power *= theta_sq;
        let n = 2 * k + offset;
        fact *= f64::from(n + 1) * f64::from(n + 2);
    }
    sum
}

/// Coefficients `(sin θ/θ, (1−cos θ)/θ², (θ−sin θ)/θ³, (θ²+2cos θ−2)/(2θ⁴))`.
fn gamma_coefficients(theta: f64) -> [f64; 4] {
    if theta < GAMMA_SERIES_THRESHOLD {
        let t2 = theta * theta;
        [
            alternating_series(t2, 1),
            alternating_series(t2, 2),
            alternating_series(t2, 3),
            alternating_series(t2, 4),
        ]
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        let half = (0.5 * theta).sin();
        [
            s / theta,
            2.0 * half * half / t2,
            (theta - s) / (t2 * theta),
            (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2),
        ]
    }
}

/// `Γ_m(φ) = Σ_n [φ]×ⁿ / (n+m)!` for `m ∈ {0, 1, 2}`.
///
/// `Γ₀` is the SO(3) exponential, `Γ₁` its left Jacobian.
pub fn gamma(m: u8, phi: &Vec3) -> Result<Mat3> {
    let k = hat3(phi);
    let k2 = k * k;
    let [c1, c2, c3, c4] = gamma_coefficients(phi.norm());
    let id = Mat3::identity();
    match m {
        0 => Ok(id + k * c1 + k2 * c2),
        1 => Ok(id + k * c2 + k2 * c3),
        2 => Ok(id * 0.5 + k * c3 + k2 * c4),
        _ => Err(Error::arg(format!("gamma order must be 0, 1 or 2, got {m}"))),
    }
}

pub(crate) fn gamma0(phi: &Vec3) -> Mat3 {
    gamma(0, phi).expect("order 0 is valid")
}

pub(crate) fn gamma1(phi: &Vec3) -> Mat3 {
    gamma(1, phi).expect("order 1 is valid")
}

pub(crate) fn gamma2(phi: &Vec3) -> Mat3 {
    gamma(2, phi).expect("order 2 is valid")
}

/// Inverse of `Γ₁(φ)`, valid for `‖φ‖ < 2π`.
fn gamma1_inverse(phi: &Vec3) -> Mat3 {
    let theta = phi.norm();
    let k = hat3(phi);
    let d = if theta < 0.1 {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2 * t2 * t2 / 1_209_600.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half * half.cos() / half.sin()) / (theta * theta)
    };
    Mat3::identity() - k * 0.5 + k * k * d
}

/// Principal logarithm of a rotation matrix.
pub fn log_so3(r: &Mat3) -> Result<Vec3> {
    let w = vee3(&(r - r.transpose())) * 0.5;
    let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin_theta = w.norm();
    let theta = sin_theta.atan2(cos_theta);
    if theta >= LOG_MAX_ANGLE {
        return Err(Error::Domain(format!(
            "rotation angle {theta} is too close to π for the principal logarithm"
        )));
    }
    if theta < 0.5 {
        // sin θ / θ from its series; w = (sin θ/θ) φ.
        return Ok(w / alternating_series(theta * theta, 1));
    }
    if theta < std::f64::consts::PI - 0.1 {
        return Ok(w * (theta / sin_theta));
    }
    // Near π the antisymmetric part vanishes; recover the axis from the symmetric part.
    let sym = (r + r.transpose()) * 0.5 - Mat3::identity() * cos_theta;
    let one_minus_cos = 1.0 - cos_theta;
    let i = (0..3)
        .max_by(|&a, &b| sym[(a, a)].total_cmp(&sym[(b, b)]))
        .unwrap_or(0);
    let ni = (sym[(i, i)] / one_minus_cos).max(0.0).sqrt();
    let mut axis = sym.column(i) / (one_minus_cos * ni);
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    Ok(axis.normalize() * theta)
}

/// Nearest rotation matrix in the Frobenius sense.
pub fn project_to_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let (Some(mut u), Some(v_t)) = (svd.u, svd.v_t) else {
        return *m;
    };
    if (u * v_t).determinant() < 0.0 {
        let mut col = u.column_mut(2);
        col *= -1.0;
    }
    u * v_t
}

/// Element of the Lie algebra of SE₂(3) as a 9-vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tangent9 {
    pub rot: Vec3,
    pub vel: Vec3,
    pub pos: Vec3,
}

impl Tangent9 {
    pub fn new(rot: Vec3, vel: Vec3, pos: Vec3) -> Self {
        Self { rot, vel, pos }
    }

    pub fn zeros() -> Self {
        Self::new(Vec3::zeros(), Vec3::zeros(), Vec3::zeros())
    }

    pub fn from_vector(v: &Vec9) -> Self {
        Self {
            rot: v.fixed_rows::<3>(0).into_owned(),
            vel: v.fixed_rows::<3>(3).into_owned(),
            pos: v.fixed_rows::<3>(6).into_owned(),
        }
    }

    pub fn to_vector(&self) -> Vec9 {
        let mut out = Vec9::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&self.rot);
        out.fixed_rows_mut::<3>(3).copy_from(&self.vel);
        out.fixed_rows_mut::<3>(6).copy_from(&self.pos);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }
}

/// Element of SE₂(3): a rotation with two attached 3-vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SE23 {
    pub rot: Mat3,
    pub vel: Vec3,
    pub pos: Vec3,
}

impl Default for SE23 {
    fn default() -> Self {
        Self::identity()
    }
}

impl SE23 {
    pub fn new(rot: Mat3, vel: Vec3, pos: Vec3) -> Self {
        Self { rot, vel, pos }
    }

    pub fn identity() -> Self {
        Self::new(Mat3::identity(), Vec3::zeros(), Vec3::zeros())
    }

    pub fn to_matrix(&self) -> Mat5 {
        let mut m = Mat5::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rot);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.vel);
        m.fixed_view_mut::<3, 1>(0, 4).copy_from(&self.pos);
        m
    }

    /// Reads the top three rows of a 5×5 matrix; the bottom rows must be `[0 0 0 1 0; 0 0 0 0 1]`.
    pub fn from_matrix(m: &Mat5) -> Result<Self> {
        let bottom = m.fixed_view::<2, 5>(3, 0);
        let expected = Mat5::identity().fixed_view::<2, 5>(3, 0).into_owned();
        if (bottom - expected).amax() > 1e-12 {
            return Err(Error::arg("matrix is not in SE2(3) layout"));
        }
        Ok(Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
            m.fixed_view::<3, 1>(0, 4).into_owned(),
        ))
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rot.transpose();
        Self::new(rt, -(rt * self.vel), -(rt * self.pos))
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rot.transpose() * self.rot - Mat3::identity()).norm()
    }

    /// Projects the rotation block back onto SO(3) when its drift exceeds `threshold`.
    pub fn reorthonormalized(mut self, threshold: f64) -> Self {
        if self.orthonormality_error() > threshold {
            self.rot = project_to_rotation(&self.rot);
        }
        self
    }

    pub fn is_finite(&self) -> bool {
        self.rot.iter().chain(self.vel.iter()).chain(self.pos.iter()).all(|x| x.is_finite())
    }
}

impl Mul for SE23 {
    type Output = SE23;

    fn mul(self, rhs: SE23) -> SE23 {
        SE23::new(
            self.rot * rhs.rot,
            self.rot * rhs.vel + self.vel,
            self.rot * rhs.pos + self.pos,
        )
    }
}

impl Mul for &SE23 {
    type Output = SE23;

    fn mul(self, rhs: &SE23) -> SE23 {
        *self * *rhs
    }
}

/// `ξ^∧`: rotation block skew-symmetric, velocity and position in columns 4 and 5.
pub fn wedge_se23(xi: &Tangent9) -> Mat5 {
    let mut m = Mat5::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat3(&xi.rot));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&xi.vel);
    m.fixed_view_mut::<3, 1>(0, 4).copy_from(&xi.pos);
    m
}

pub fn vee_se23(m: &Mat5) -> Tangent9 {
    Tangent9::new(
        vee3(&m.fixed_view::<3, 3>(0, 0).into_owned()),
        m.fixed_view::<3, 1>(0, 3).into_owned(),
        m.fixed_view::<3, 1>(0, 4).into_owned(),
    )
}

pub fn exp_se23(xi: &Tangent9) -> SE23 {
    let j = gamma1(&xi.rot);
    SE23::new(gamma0(&xi.rot), j * xi.vel, j * xi.pos)
}

/// Principal logarithm; fails when the rotation angle reaches [`LOG_MAX_ANGLE`].
pub fn log_se23(x: &SE23) -> Result<Tangent9> {
    let rot = log_so3(&x.rot)?;
    let j_inv = gamma1_inverse(&rot);
    Ok(Tangent9::new(rot, j_inv * x.vel, j_inv * x.pos))
}

/// `Ad_X`, satisfying `(Ad_X ξ)^∧ = X ξ^∧ X⁻¹`.
pub fn adjoint(x: &SE23) -> Mat9 {
    let r = x.rot;
    let mut ad = Mat9::zeros();
    ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
    ad.fixed_view_mut::<3, 3>(6, 6).copy_from(&r);
    ad.fixed_view_mut::<3, 3>(3, 0).copy_from(&(hat3(&x.vel) * r));
    ad.fixed_view_mut::<3, 3>(6, 0).copy_from(&(hat3(&x.pos) * r));
    ad
}

/// Elementwise rotation about a unit axis.
pub fn rotation_about(axis: &Vec3, angle: f64) -> Mat3 {
    gamma0(&(axis * angle))
}
