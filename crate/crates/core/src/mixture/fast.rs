//! Precision-matrix learning step. The covariance update
//!
//! ```text
//! C(t) = (1 - w) C(t-1) + w e* e*^T - dmu dmu^T
//! ```
//!
//! is split into a rank-one addition followed by a rank-one subtraction, and
//! both `C^-1` and `|C|` are carried through each half with Sherman-Morrison
//! and the matrix determinant lemma. Every step is O(D^2).

use crate::linalg::{dot, LinalgError, SymmetricMatrix};

use super::{downdate_guard, DegeneratePolicy};

/// Intermediate scalars of one precision update, exposed for tests.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FastUpdateTrace {
    /// `e*^T Lambda(t-1) e*`
    pub q_add: f64,
    /// `1 + w / (1 - w) * q_add`, shared by the determinant and inverse
    /// updates of the addition.
    pub bracket: f64,
    /// `dmu^T Lambda_bar dmu`
    pub q_sub: f64,
    /// Determinant factor of the subtraction after clamping.
    pub factor: f64,
    pub clamped: bool,
}

/// Updates `lambda` and `log_det_cov` in place.
///
/// Order: determinant of the intermediate covariance, intermediate
/// precision, final determinant, final precision.
pub fn update_precision(
    lambda: &mut SymmetricMatrix,
    log_det_cov: &mut f64,
    e_star: &[f64],
    delta_mu: &[f64],
    omega: f64,
    policy: DegeneratePolicy,
) -> Result<FastUpdateTrace, LinalgError> {
    let d = lambda.order() as f64;
    let one_minus = 1.0 - omega;
    let ratio = omega / one_minus;

    let w = lambda.mat_vec(e_star);
    let q_add = dot(e_star, &w);
    let bracket = 1.0 + ratio * q_add;

    // |C_bar| = (1 - w)^D |C| (1 + w/(1-w) e*' L e*)
    let mut log_det = *log_det_cov + d * one_minus.ln() + bracket.ln();

    // L_bar = L / (1 - w) - [w / (1 - w)^2] L e* e*' L / bracket
    lambda.scale_add_outer(1.0 / one_minus, -(ratio / one_minus) / bracket, &w);

    let z = lambda.mat_vec(delta_mu);
    let q_sub = dot(delta_mu, &z);
    let guard = downdate_guard(1.0 - q_sub, q_sub, policy)?;

    // |C(t)| = |C_bar| (1 - dmu' L_bar dmu)
    log_det += guard.factor.ln();

    // L(t) = L_bar + L_bar dmu dmu' L_bar / (1 - dmu' L_bar dmu)
    lambda.add_outer(guard.scale / guard.factor, &z);

    *log_det_cov = log_det;
    Ok(FastUpdateTrace {
        q_add,
        bracket,
        q_sub,
        factor: guard.factor,
        clamped: guard.clamped,
    })
}
