//! Covariance-matrix learning step: the update is applied to `C` directly
//! and `C` is refactorized to recover `|C|` and `C^-1`. O(D^3) per step.

use crate::linalg::{Cholesky, LinalgError, SymmetricMatrix};

use super::{downdate_guard, DegeneratePolicy};

/// Applies `C <- (1 - w) C + w e* e*^T - dmu dmu^T` and returns the new
/// Cholesky factor together with whether the subtraction was clamped.
///
/// The subtraction is checked against the intermediate matrix exactly like
/// the precision backend does, so both backends clamp the same steps.
pub fn update_covariance(
    cov: &mut SymmetricMatrix,
    e_star: &[f64],
    delta_mu: &[f64],
    omega: f64,
    policy: DegeneratePolicy,
) -> Result<(Cholesky, bool), LinalgError> {
    cov.scale_add_outer(1.0 - omega, omega, e_star);
    let q_sub = Cholesky::factor(cov)?.inv_quad_form(delta_mu);
    let guard = downdate_guard(1.0 - q_sub, q_sub, policy)?;
    cov.add_outer(-guard.scale, delta_mu);
    let factor = Cholesky::factor(cov)?;
    Ok((factor, guard.clamped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_trace() {
        let mut cov = SymmetricMatrix::from_diagonal(&[1.0]);
        let (f, clamped) = update_covariance(&mut cov, &[1.8], &[0.2], 0.1, DegeneratePolicy::Error).unwrap();
        assert!(!clamped);
        assert_relative_eq!(cov.get(0, 0), 1.184, max_relative = 1e-14);
        assert_relative_eq!(f.log_det().exp(), 1.184, max_relative = 1e-14);
    }

    #[test]
    fn clamp_matches_precision_backend() {
        let e_star = [2.0, 0.0];
        let dmu = [2.0, 0.0];
        let mut cov = SymmetricMatrix::identity(2);
        assert!(update_covariance(&mut cov.clone(), &e_star, &dmu, 0.5, DegeneratePolicy::Error).is_err());
        let (f, clamped) = update_covariance(&mut cov, &e_star, &dmu, 0.5, DegeneratePolicy::Clamp).unwrap();
        assert!(clamped);

        let mut lambda = SymmetricMatrix::identity(2);
        let mut log_det = 0.0;
        super::super::fast::update_precision(&mut lambda, &mut log_det, &e_star, &dmu, 0.5, DegeneratePolicy::Clamp)
            .unwrap();
        // Condition number ~1e6 after the clamp.
        assert!((f.log_det() - log_det).abs() < 1e-8);
        let inv = f.inverse();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(inv.get(i, j), lambda.get(i, j), max_relative = 1e-8, epsilon = 1e-9);
            }
        }
    }
}
