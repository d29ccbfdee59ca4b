use crate::linalg::{self, Cholesky, LinalgError, SymmetricMatrix};

use super::{fast, reference, DegeneratePolicy};

/// ln(2 pi)
pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// The second-order statistic a component carries, which depends on the
/// backend that created it.
#[derive(Clone, Debug)]
pub enum Shape {
    /// Precision matrix `C^-1`, maintained by rank-one updates.
    Precision(SymmetricMatrix),
    /// Covariance matrix `C` with its Cholesky factor, refactorized after
    /// every update.
    Covariance { cov: SymmetricMatrix, factor: Cholesky },
}

/// One Gaussian of the mixture.
#[derive(Clone, Debug)]
pub struct GaussianComponent {
    pub(crate) mean: Vec<f64>,
    pub(crate) shape: Shape,
    /// `ln |C|`; kept in log space because `|C|` leaves the f64 range for a
    /// few hundred dimensions.
    pub(crate) log_det_cov: f64,
    pub(crate) sp: f64,
    pub(crate) age: f64,
    pub(crate) clamped: u32,
}

impl GaussianComponent {
    pub(crate) fn new_precision(x: &[f64], sigma: &[f64]) -> Self {
        let inv_var: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
        Self {
            mean: x.to_vec(),
            shape: Shape::Precision(SymmetricMatrix::from_diagonal(&inv_var)),
            log_det_cov: log_det_diag(sigma),
            sp: 1.0,
            age: 1.0,
            clamped: 0,
        }
    }

    pub(crate) fn new_covariance(x: &[f64], sigma: &[f64]) -> Result<Self, LinalgError> {
        let var: Vec<f64> = sigma.iter().map(|s| s * s).collect();
        Ok(Self {
            mean: x.to_vec(),
            shape: Shape::Covariance {
                factor: Cholesky::from_diagonal(&var)?,
                cov: SymmetricMatrix::from_diagonal(&var),
            },
            log_det_cov: log_det_diag(sigma),
            sp: 1.0,
            age: 1.0,
            clamped: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Precision matrix, if this component belongs to the fast backend.
    pub fn precision(&self) -> Option<&SymmetricMatrix> {
        match &self.shape {
            Shape::Precision(l) => Some(l),
            Shape::Covariance { .. } => None,
        }
    }

    /// Covariance matrix, if this component belongs to the reference backend.
    pub fn covariance(&self) -> Option<&SymmetricMatrix> {
        match &self.shape {
            Shape::Covariance { cov, .. } => Some(cov),
            Shape::Precision(_) => None,
        }
    }

    pub fn log_det_cov(&self) -> f64 {
        self.log_det_cov
    }

    /// `|C|`. May underflow or overflow in high dimensions; prefer
    /// [`log_det_cov`](Self::log_det_cov).
    pub fn det_cov(&self) -> f64 {
        self.log_det_cov.exp()
    }

    /// Posterior accumulator `sp`.
    pub fn sp(&self) -> f64 {
        self.sp
    }

    /// Number of update steps this component has lived through (`v`).
    pub fn age(&self) -> f64 {
        self.age
    }

    /// How many downdates were clamped to keep the covariance positive
    /// definite.
    pub fn clamped_updates(&self) -> u32 {
        self.clamped
    }

    /// Squared Mahalanobis distance from the component mean.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        let e = linalg::sub(x, &self.mean);
        match &self.shape {
            Shape::Precision(lambda) => lambda.quad_form(&e),
            Shape::Covariance { factor, .. } => factor.inv_quad_form(&e),
        }
    }

    /// Log-density `ln p(x | j)` given a precomputed squared distance.
    pub fn log_density_from_d2(&self, d2: f64) -> f64 {
        -0.5 * (self.dim() as f64 * LN_2PI + self.log_det_cov + d2)
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.log_density_from_d2(self.mahalanobis_sq(x))
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    /// Applies one learning step for data point `x` with posterior
    /// `p(j | x)`.
    pub(crate) fn update(&mut self, x: &[f64], posterior: f64, policy: DegeneratePolicy) -> Result<(), LinalgError> {
        self.age += 1.0;
        self.sp += posterior;
        if posterior == 0.0 {
            // omega = 0: mean, matrix and determinant are fixed points.
            return Ok(());
        }
        let omega = posterior / self.sp;
        let e = linalg::sub(x, &self.mean);
        let delta_mu: Vec<f64> = e.iter().map(|v| omega * v).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta_mu) {
            *m += d;
        }
        let e_star = linalg::sub(x, &self.mean);

        let clamped = match &mut self.shape {
            Shape::Precision(lambda) => {
                let trace = fast::update_precision(lambda, &mut self.log_det_cov, &e_star, &delta_mu, omega, policy)?;
                trace.clamped
            }
            Shape::Covariance { cov, factor } => {
                let (f, clamped) = reference::update_covariance(cov, &e_star, &delta_mu, omega, policy)?;
                self.log_det_cov = f.log_det();
                *factor = f;
                clamped
            }
        };
        if clamped {
            self.clamped += 1;
        }
        Ok(())
    }
}

fn log_det_diag(sigma: &[f64]) -> f64 {
    2.0 * sigma.iter().map(|s| s.ln()).sum::<f64>()
}
