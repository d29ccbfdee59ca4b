//! Brute-force oracles shared by the integration tests. Everything here works
//! on plain row vectors and is independent of the library's linear algebra.

#![allow(dead_code, clippy::needless_range_loop)]

use figmn::linalg::SymmetricMatrix;
use figmn::mixture::MixtureModel;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rows = Vec<Vec<f64>>;

/// Gauss-Jordan inverse with partial pivoting.
pub fn gj_inverse(a: &[Vec<f64>]) -> Rows {
    let n = a.len();
    let mut m: Rows = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, p);
        let piv = m[c][c];
        assert!(piv != 0.0, "singular matrix in oracle");
        for v in m[c].iter_mut() {
            *v /= piv;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// `(sign, ln|det|)` by LU elimination with partial pivoting.
pub fn lu_log_det(a: &[Vec<f64>]) -> (f64, f64) {
    let n = a.len();
    let mut m = a.to_vec();
    let mut sign = 1.0;
    let mut log = 0.0;
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        if p != c {
            m.swap(c, p);
            sign = -sign;
        }
        let piv = m[c][c];
        if piv == 0.0 {
            return (0.0, f64::NEG_INFINITY);
        }
        if piv < 0.0 {
            sign = -sign;
        }
        log += piv.abs().ln();
        for r in c + 1..n {
            let f = m[r][c] / piv;
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    (sign, log)
}

pub fn lu_det(a: &[Vec<f64>]) -> f64 {
    let (s, l) = lu_log_det(a);
    s * l.exp()
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Rows {
    a.iter()
        .map(|r| (0..b[0].len()).map(|j| r.iter().zip(b).map(|(x, br)| x * br[j]).sum()).collect())
        .collect()
}

pub fn mat_vec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

pub fn quad(a: &[Vec<f64>], v: &[f64]) -> f64 {
    mat_vec(a, v).iter().zip(v).map(|(x, y)| x * y).sum()
}

pub fn add_outer(a: &[Vec<f64>], c: f64, u: &[f64]) -> Rows {
    a.iter()
        .enumerate()
        .map(|(i, r)| r.iter().enumerate().map(|(j, v)| v + c * u[i] * u[j]).collect())
        .collect()
}

pub fn sub_matrix(a: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> Rows {
    rows.iter().map(|&i| cols.iter().map(|&j| a[i][j]).collect()).collect()
}

pub fn identity(n: usize) -> Rows {
    (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect()
}

/// Largest elementwise distance from the identity.
pub fn identity_error(m: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, r) in m.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            worst = worst.max((v - f64::from(u8::from(i == j))).abs());
        }
    }
    worst
}

/// Largest elementwise difference relative to the larger magnitude of `b`
/// (floored at 1).
pub fn max_rel_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let scale = b.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Well-conditioned random SPD matrix: `B B^T / n + s I` with `s` in
/// `[0.5, 1.5)`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Rows {
    let b: Rows = (0..n).map(|_| gaussian_vec(rng, n)).collect();
    let s = rng.gen_range(0.5..1.5);
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let v: f64 = b[i].iter().zip(&b[j]).map(|(x, y)| x * y).sum::<f64>() / n as f64;
                    v + if i == j { s } else { 0.0 }
                })
                .collect()
        })
        .collect()
}

pub fn sym(rows: &[Vec<f64>]) -> SymmetricMatrix {
    SymmetricMatrix::from_rows(rows).unwrap()
}

/// Covariance of component `j`, from whichever matrix the backend stores.
pub fn component_cov(model: &MixtureModel, j: usize) -> Rows {
    let c = &model.components()[j];
    match (c.covariance(), c.precision()) {
        (Some(cov), _) => cov.to_rows(),
        (None, Some(l)) => gj_inverse(&l.to_rows()),
        _ => unreachable!(),
    }
}

/// Conditional-mean regression evaluated on the covariance side: each
/// component contributes `mu_t + C_ti C_ii^-1 (x_i - mu_i)`, weighted by
/// `sp_j N(x_i; mu_i, C_ii)` normalized over components. Returns the
/// reconstruction and the posteriors.
pub fn regression_oracle(model: &MixtureModel, x_i: &[f64], inputs: &[usize], targets: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let mut log_w = Vec::new();
    let mut means = Vec::new();
    for (j, comp) in model.components().iter().enumerate() {
        let cov = component_cov(model, j);
        let mu = comp.mean();
        let cii = sub_matrix(&cov, inputs, inputs);
        let cti = sub_matrix(&cov, targets, inputs);
        let cii_inv = gj_inverse(&cii);
        let r: Vec<f64> = inputs.iter().zip(x_i).map(|(&i, x)| x - mu[i]).collect();
        let a = mat_vec(&cii_inv, &r);
        let m: Vec<f64> = targets.iter().zip(mat_vec(&cti, &a)).map(|(&t, v)| mu[t] + v).collect();
        let (_, ld) = lu_log_det(&cii);
        let d2: f64 = r.iter().zip(&a).map(|(x, y)| x * y).sum();
        let n = inputs.len() as f64;
        log_w.push(comp.sp().ln() - 0.5 * (n * (2.0 * std::f64::consts::PI).ln() + ld + d2));
        means.push(m);
    }
    let post = softmax(&log_w);
    let mut out = vec![0.0; targets.len()];
    for (p, m) in post.iter().zip(&means) {
        for (o, v) in out.iter_mut().zip(m) {
            *o += p * v;
        }
    }
    (out, post)
}

/// Full-vector posteriors by direct density evaluation on the covariance
/// side.
pub fn posterior_oracle(model: &MixtureModel, x: &[f64]) -> Vec<f64> {
    let all: Vec<usize> = (0..model.dim()).collect();
    let log_w: Vec<f64> = model
        .components()
        .iter()
        .enumerate()
        .map(|(j, comp)| {
            let cov = component_cov(model, j);
            let r: Vec<f64> = all.iter().map(|&i| x[i] - comp.mean()[i]).collect();
            let d2 = quad(&gj_inverse(&cov), &r);
            let (_, ld) = lu_log_det(&cov);
            comp.sp().ln() - 0.5 * (all.len() as f64 * (2.0 * std::f64::consts::PI).ln() + ld + d2)
        })
        .collect();
    softmax(&log_w)
}

pub fn softmax(log_w: &[f64]) -> Vec<f64> {
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = log_w.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Path of a bundled dataset.
pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

/// Stream of `n` points in `dim` dimensions drawn around a few random
/// centres with random per-cluster scales.
pub fn fuzz_stream(seed: u64, dim: usize, n: usize) -> Rows {
    use rand::{Rng, SeedableRng};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(1..=4);
    let centres: Rows = (0..k).map(|_| (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
    let scales: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..2.0)).collect();
    (0..n)
        .map(|_| {
            let c = rng.gen_range(0..k);
            let z = gaussian_vec(&mut rng, dim);
            (0..dim)
                .map(|i| centres[c][i] + scales[c] * (z[i] + 0.3 * z[(i + 1) % dim]))
                .collect()
        })
        .collect()
}

/// Checks the model invariants that must hold after every learning step.
/// The reconstruction check uses the last element as target and the
/// others as inputs (skipped for one-dimensional models).
pub fn check_invariants(model: &MixtureModel, probe: &[f64]) -> Result<(), String> {
    use figmn::inference::{reconstruct, SlicePlan};
    use figmn::linalg::Cholesky;

    let total: f64 = model.priors().iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(format!("priors sum to {total}"));
    }
    for (j, c) in model.components().iter().enumerate() {
        // det_c = exp(ln|C|) > 0 exactly when the stored log is finite.
        if !c.log_det_cov().is_finite() {
            return Err(format!("component {j}: det_c not positive"));
        }
        let m = c.precision().or(c.covariance()).unwrap();
        if m.asymmetry() != 0.0 {
            return Err(format!("component {j}: stored matrix is not exactly symmetric"));
        }
        let f = Cholesky::factor(m).map_err(|e| format!("component {j}: not SPD: {e}"))?;
        if c.precision().is_some() {
            let err = (f.log_det() + c.log_det_cov()).exp_m1().abs();
            if err > 1e-6 {
                return Err(format!("component {j}: det(Lambda) det_c - 1 = {err:e} (clamped {})", c.clamped_updates()));
            }
        }
    }
    let d = model.dim();
    if d >= 2 {
        let plan = SlicePlan::targets_last(d, 1).unwrap();
        let inputs: Vec<usize> = (0..d - 1).collect();
        let got = reconstruct(model, &probe[..d - 1], &plan).map_err(|e| e.to_string())?;
        let (want, _) = regression_oracle(model, &probe[..d - 1], &inputs, &[d - 1]);
        if (got[0] - want[0]).abs() > 1e-8 * want[0].abs().max(1.0) {
            return Err(format!("reconstruction {} vs oracle {}", got[0], want[0]));
        }
    }
    Ok(())
}

/// Saves and reloads the model, requiring a bit-identical file.
pub fn check_round_trip(model: &MixtureModel) -> Result<(), String> {
    let text = model.to_json();
    let back = MixtureModel::from_json(&text).map_err(|e| e.to_string())?;
    if back.to_file() != model.to_file() || back.to_json() != text {
        return Err("model changed across save/load".into());
    }
    Ok(())
}
