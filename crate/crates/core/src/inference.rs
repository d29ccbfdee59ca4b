//! Reconstruction of target elements from input elements.
//!
//! For component `j`, split the vector into inputs `i` and targets `t` and
//! write its precision matrix in blocks
//!
//! ```text
//! Lambda = [ X  Y ]   (X: inputs x inputs, Y: inputs x targets,
//!          [ Z  W ]    Z = Y^T, W: targets x targets)
//! ```
//!
//! The conditional mean is `mu_t - W^-1 Z (x_i - mu_i)` and the input
//! marginal has precision `X - Y W^-1 Z` and determinant `|W| |C|`. Only the
//! `o x o` block `W` is ever factorized, so prediction costs O(D^2 + o^3)
//! per component. The reference backend instead factorizes the input block
//! of the covariance on every call.

use crate::linalg::{self, dot, small_spd_factor, Cholesky, SymmetricMatrix};
use crate::mixture::{normalize_log_weights, Backend, GaussianComponent, IgmnError, MixtureModel, Result, Shape, LN_2PI};
use crate::par;

/// Which elements are given (inputs) and which are reconstructed (targets).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlicePlan {
    dim: usize,
    inputs: Vec<usize>,
    targets: Vec<usize>,
}

impl SlicePlan {
    /// Builds a plan; the two index sets must be disjoint, cover `0..dim`
    /// and `targets` must be non-empty.
    pub fn new(dim: usize, inputs: Vec<usize>, targets: Vec<usize>) -> Result<Self> {
        let invalid = |m: String| Err(IgmnError::InvalidPlan(m));
        if targets.is_empty() {
            return invalid("no target elements".into());
        }
        let mut seen = vec![false; dim];
        for &i in inputs.iter().chain(&targets) {
            if i >= dim {
                return invalid(format!("index {i} out of range for dimension {dim}"));
            }
            if std::mem::replace(&mut seen[i], true) {
                return invalid(format!("index {i} listed twice"));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return invalid(format!("index {missing} is neither input nor target"));
        }
        Ok(Self { dim, inputs, targets })
    }

    /// The last `n_targets` elements are targets, the rest inputs.
    pub fn targets_last(dim: usize, n_targets: usize) -> Result<Self> {
        if n_targets > dim {
            return Err(IgmnError::InvalidPlan(format!("{n_targets} targets exceed dimension {dim}")));
        }
        let split = dim - n_targets;
        Self::new(dim, (0..split).collect(), (split..dim).collect())
    }

    /// Every element not listed in `targets` is an input.
    pub fn from_targets(dim: usize, targets: Vec<usize>) -> Result<Self> {
        let inputs = (0..dim).filter(|i| !targets.contains(i)).collect();
        Self::new(dim, inputs, targets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }
}

/// The four blocks of a precision matrix under a [`SlicePlan`].
#[derive(Clone, Debug)]
pub struct BlockView {
    pub x: SymmetricMatrix,
    /// inputs x targets, row-major.
    pub y: Vec<f64>,
    pub w: SymmetricMatrix,
    n_inputs: usize,
    n_targets: usize,
}

impl BlockView {
    pub fn from_precision(lambda: &SymmetricMatrix, plan: &SlicePlan) -> Self {
        Self {
            x: lambda.principal(plan.inputs()),
            y: lambda.block(plan.inputs(), plan.targets()),
            w: lambda.principal(plan.targets()),
            n_inputs: plan.inputs().len(),
            n_targets: plan.targets().len(),
        }
    }

    /// `Z = Y^T`, targets x inputs, row-major.
    pub fn z(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.y.len()];
        for a in 0..self.n_inputs {
            for b in 0..self.n_targets {
                z[b * self.n_inputs + a] = self.y[a * self.n_targets + b];
            }
        }
        z
    }
}

/// Input-block marginal of one component.
#[derive(Clone, Debug)]
pub struct MarginalInput {
    /// `X - Y W^-1 Z`
    pub precision: SymmetricMatrix,
    /// `ln |C_i| = ln |W| + ln |C|`
    pub log_det_cov: f64,
}

/// Marginal precision and covariance log-determinant of the input block,
/// computed from the precision matrix with a single `o x o` factorization.
pub fn marginal_input_params(comp: &GaussianComponent, plan: &SlicePlan) -> Result<MarginalInput> {
    let lambda = comp.precision().ok_or(IgmnError::WrongBackend(Backend::Fast))?;
    check_plan(comp.dim(), plan)?;
    let blocks = BlockView::from_precision(lambda, plan);
    let w_factor = small_spd_factor(&blocks.w)?;
    let (ni, no) = (plan.inputs().len(), plan.targets().len());
    let z = blocks.z();
    // W^-1 Z, column by column (each column of Z is one input).
    let mut winv_z = vec![0.0; no * ni];
    let mut col = vec![0.0; no];
    for a in 0..ni {
        for b in 0..no {
            col[b] = z[b * ni + a];
        }
        let s = w_factor.solve(&col);
        for b in 0..no {
            winv_z[b * ni + a] = s[b];
        }
    }
    let precision = SymmetricMatrix::from_fn(ni, |a, c| {
        let ya = &blocks.y[a * no..(a + 1) * no];
        let correction: f64 = (0..no).map(|b| ya[b] * winv_z[b * ni + c]).sum();
        blocks.x.get(a, c) - correction
    });
    Ok(MarginalInput {
        precision,
        log_det_cov: w_factor.log_det() + comp.log_det_cov(),
    })
}

fn check_plan(dim: usize, plan: &SlicePlan) -> Result<()> {
    if plan.dim() != dim {
        return Err(IgmnError::DimensionMismatch {
            expected: dim,
            found: plan.dim(),
        });
    }
    Ok(())
}

/// Per-component pieces of a reconstruction.
struct Conditional {
    log_density: f64,
    target_mean: Vec<f64>,
}

fn conditional(comp: &GaussianComponent, x_i: &[f64], plan: &SlicePlan) -> Result<Conditional> {
    let mu = comp.mean();
    let ni = plan.inputs().len();
    let (d2, log_det, target_mean) = match comp.shape() {
        Shape::Precision(lambda) => {
            // Zero-padded deviation so u' Lambda u = r' X r over contiguous rows.
            let mut u = vec![0.0; comp.dim()];
            for (k, &i) in plan.inputs().iter().enumerate() {
                u[i] = x_i[k] - mu[i];
            }
            let quad = lambda.quad_form(&u);
            let g: Vec<f64> = plan.targets().iter().map(|&t| dot(lambda.row(t), &u)).collect();
            let w_factor = small_spd_factor(&lambda.principal(plan.targets()))?;
            let h = w_factor.solve(&g);
            let target_mean = plan.targets().iter().zip(&h).map(|(&t, hv)| mu[t] - hv).collect();
            (quad - dot(&g, &h), w_factor.log_det() + comp.log_det_cov(), target_mean)
        }
        Shape::Covariance { cov, .. } => {
            let factor = Cholesky::factor(&cov.principal(plan.inputs()))?;
            let r: Vec<f64> = plan.inputs().iter().zip(x_i).map(|(&i, x)| x - mu[i]).collect();
            let a = factor.solve(&r);
            let target_mean = plan
                .targets()
                .iter()
                .map(|&t| {
                    let row = cov.row(t);
                    mu[t] + plan.inputs().iter().zip(&a).map(|(&i, av)| row[i] * av).sum::<f64>()
                })
                .collect();
            (dot(&r, &a), factor.log_det(), target_mean)
        }
    };
    Ok(Conditional {
        log_density: -0.5 * (ni as f64 * LN_2PI + log_det + d2),
        target_mean,
    })
}

/// Result of [`reconstruct_full`].
#[derive(Clone, Debug)]
pub struct Reconstruction {
    /// Reconstructed targets, in `plan.targets()` order.
    pub values: Vec<f64>,
    /// `p(j | x_i)` per component.
    pub posteriors: Vec<f64>,
}

fn check_inputs(model: &MixtureModel, x_i: &[f64], plan: &SlicePlan) -> Result<()> {
    if model.is_empty() {
        return Err(IgmnError::EmptyModel);
    }
    check_plan(model.dim(), plan)?;
    if x_i.len() != plan.inputs().len() {
        return Err(IgmnError::DimensionMismatch {
            expected: plan.inputs().len(),
            found: x_i.len(),
        });
    }
    Ok(())
}

fn work_per_component(model: &MixtureModel, plan: &SlicePlan) -> usize {
    let d = model.dim();
    match model.backend() {
        Backend::Fast => d * d,
        Backend::Reference => plan.inputs().len().pow(3) / 3 + d * d,
    }
}

pub fn reconstruct_full(model: &MixtureModel, x_i: &[f64], plan: &SlicePlan) -> Result<Reconstruction> {
    check_inputs(model, x_i, plan)?;
    let parts: Vec<Conditional> = par::map(model.components(), work_per_component(model, plan), |c| {
        conditional(c, x_i, plan)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let log_w: Vec<f64> = parts
        .iter()
        .zip(model.components())
        .map(|(p, c)| p.log_density + c.sp().ln())
        .collect();
    let posteriors = normalize_log_weights(&log_w).unwrap_or_else(|| model.priors());
    let mut values = vec![0.0; plan.targets().len()];
    for (p, part) in posteriors.iter().zip(&parts) {
        for (v, m) in values.iter_mut().zip(&part.target_mean) {
            *v += p * m;
        }
    }
    Ok(Reconstruction { values, posteriors })
}

/// `p(j | x_i)` using only the input elements.
pub fn conditional_posteriors(model: &MixtureModel, x_i: &[f64], plan: &SlicePlan) -> Result<Vec<f64>> {
    Ok(reconstruct_full(model, x_i, plan)?.posteriors)
}

/// Posterior-weighted conditional mean of the targets given `x_i`.
pub fn reconstruct(model: &MixtureModel, x_i: &[f64], plan: &SlicePlan) -> Result<Vec<f64>> {
    Ok(reconstruct_full(model, x_i, plan)?.values)
}

/// Reconstructs many rows; rows are processed in parallel when enabled.
pub fn reconstruct_batch<R: AsRef<[f64]> + Sync>(model: &MixtureModel, rows: &[R], plan: &SlicePlan) -> Result<Vec<Vec<f64>>> {
    let work = model.len() * work_per_component(model, plan);
    par::map(rows, work, |r| reconstruct(model, r.as_ref(), plan))
        .into_iter()
        .collect()
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Classifies `features` with a model trained on `[features | one-hot class]`
/// vectors. Returns the predicted class and the raw reconstructed class
/// scores.
pub fn classify(model: &MixtureModel, features: &[f64], n_classes: usize) -> Result<(usize, Vec<f64>)> {
    let plan = SlicePlan::targets_last(model.dim(), n_classes)?;
    let scores = reconstruct(model, features, &plan)?;
    Ok((argmax(&scores), scores))
}

/// Input-block Mahalanobis distance from the marginal precision (diagnostic
/// and test use).
pub fn marginal_mahalanobis_sq(marginal: &MarginalInput, x_i: &[f64], mu_i: &[f64]) -> Result<f64> {
    Ok(linalg::mahalanobis_sq(x_i, mu_i, &marginal.precision)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::IgmnConfig;
    use approx::assert_relative_eq;

    #[test]
    fn plan_validation() {
        assert!(SlicePlan::new(3, vec![0, 1, 2], vec![]).is_err());
        assert!(SlicePlan::new(3, vec![0, 1], vec![1, 2]).is_err());
        assert!(SlicePlan::new(3, vec![0], vec![2]).is_err());
        assert!(SlicePlan::new(3, vec![0, 1], vec![3]).is_err());
        let p = SlicePlan::from_targets(4, vec![1]).unwrap();
        assert_eq!(p.inputs(), &[0, 2, 3]);
        assert_eq!(SlicePlan::targets_last(5, 2).unwrap().targets(), &[3, 4]);
        assert!(SlicePlan::targets_last(5, 0).is_err());
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[-1.0, 3.0, 3.0]), 1);
    }

    fn block_diagonal_component() -> GaussianComponent {
        let mut m = MixtureModel::new(IgmnConfig::new(1.0, 0.1), &[0.5, 2.0, 1.5]).unwrap();
        m.create_component(&[1.0, 2.0, 3.0]).unwrap();
        m.components()[0].clone()
    }

    #[test]
    fn decoupled_blocks() {
        let comp = block_diagonal_component();
        let plan = SlicePlan::targets_last(3, 1).unwrap();
        let marg = marginal_input_params(&comp, &plan).unwrap();
        assert_eq!(marg.precision.diagonal(), vec![4.0, 0.25]);
        assert_relative_eq!(marg.log_det_cov, (1.0f64 / 1.5f64.powi(2)).ln() + comp.log_det_cov(), max_relative = 1e-14);
        let view = BlockView::from_precision(comp.precision().unwrap(), &plan);
        assert_eq!(view.y, vec![0.0, 0.0]);
        assert_eq!(view.z(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_component_at_mean_returns_target_mean() {
        let mut m = MixtureModel::new(IgmnConfig::new(1.0, 0.0), &[1.0, 1.0, 1.0]).unwrap();
        for x in [[0.0, 0.0, 0.0], [1.0, 0.5, 2.0], [0.3, -0.4, 1.0], [2.0, 1.0, 3.5], [-1.0, 0.2, -0.5]] {
            m.learn_one(&x).unwrap();
        }
        let plan = SlicePlan::targets_last(3, 1).unwrap();
        let mu = m.components()[0].mean().to_vec();
        let y = reconstruct(&m, &mu[..2], &plan).unwrap();
        assert_relative_eq!(y[0], mu[2], max_relative = 1e-12);
    }

    #[test]
    fn independent_targets_average_the_means() {
        let mut m = MixtureModel::new(IgmnConfig::new(1.0, 0.1), &[1.0, 1.0]).unwrap();
        m.create_component(&[0.0, 10.0]).unwrap();
        m.create_component(&[1.0, 20.0]).unwrap();
        let plan = SlicePlan::targets_last(2, 1).unwrap();
        let r = reconstruct_full(&m, &[0.3], &plan).unwrap();
        let expected = r.posteriors[0] * 10.0 + r.posteriors[1] * 20.0;
        assert_relative_eq!(r.values[0], expected, max_relative = 1e-14);
        // x_i = 0.5 is equidistant from both means
        let p = conditional_posteriors(&m, &[0.5], &plan).unwrap();
        assert_relative_eq!(p[0], 0.5, max_relative = 1e-14);
        assert_relative_eq!(p[1], 0.5, max_relative = 1e-14);
    }

    #[test]
    fn contract_violations() {
        let mut m = MixtureModel::new(IgmnConfig::new(1.0, 0.1), &[1.0, 1.0]).unwrap();
        let plan = SlicePlan::targets_last(2, 1).unwrap();
        assert!(matches!(reconstruct(&m, &[0.0], &plan), Err(IgmnError::EmptyModel)));
        m.create_component(&[0.0, 0.0]).unwrap();
        assert!(matches!(reconstruct(&m, &[0.0, 1.0], &plan), Err(IgmnError::DimensionMismatch { .. })));
        let wide = SlicePlan::targets_last(3, 1).unwrap();
        assert!(reconstruct(&m, &[0.0, 1.0], &wide).is_err());
        let (label, scores) = classify(&m, &[0.0], 1).unwrap();
        assert_eq!((label, scores.len()), (0, 1));
    }

    #[test]
    fn reference_components_need_covariance_route() {
        let mut m = MixtureModel::new(IgmnConfig::new(1.0, 0.1).with_backend(Backend::Reference), &[1.0, 1.0]).unwrap();
        m.create_component(&[0.0, 0.0]).unwrap();
        let plan = SlicePlan::targets_last(2, 1).unwrap();
        assert!(matches!(
            marginal_input_params(&m.components()[0], &plan),
            Err(IgmnError::WrongBackend(Backend::Fast))
        ));
        assert_eq!(reconstruct(&m, &[0.0], &plan).unwrap(), vec![0.0]);
    }
}
