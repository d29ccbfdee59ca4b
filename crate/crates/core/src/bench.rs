//! Training and inference timing on synthetic data, per backend and
//! dimension.

use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::inference::{reconstruct, SlicePlan};
use crate::mixture::{Backend, IgmnConfig, MixtureModel, Result};
use crate::par;

pub const CSV_HEADER: &str = "backend,D,N,K_final,train_s,test_s,per_sample_us";

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    pub samples: usize,
    pub backends: Vec<Backend>,
    pub seed: u64,
    /// Timings are the median over this many fresh runs.
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dims: vec![32, 64, 128, 256, 512],
            samples: 2000,
            backends: vec![Backend::Fast, Backend::Reference],
            seed: 0,
            repetitions: 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchRecord {
    pub backend: Backend,
    pub dim: usize,
    pub samples: usize,
    pub k_final: usize,
    pub train_seconds: f64,
    pub test_seconds: f64,
    /// Test rows reconstructed (one target element each).
    pub test_samples: usize,
    /// Component means after the last repetition.
    pub final_means: Vec<Vec<f64>>,
}

impl BenchRecord {
    pub fn per_sample_train_us(&self) -> f64 {
        self.train_seconds / self.samples as f64 * 1e6
    }

    pub fn per_sample_test_us(&self) -> f64 {
        self.test_seconds / self.test_samples.max(1) as f64 * 1e6
    }
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
}

impl BenchReport {
    pub fn record(&self, backend: Backend, dim: usize) -> Option<&BenchRecord> {
        self.records.iter().find(|r| r.backend == backend && r.dim == dim)
    }

    /// Log-log slope of per-sample training time against `D`, or `None`
    /// with fewer than three distinct dimensions.
    pub fn slope(&self, backend: Backend) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .records
            .iter()
            .filter(|r| r.backend == backend)
            .map(|r| (r.dim as f64, r.per_sample_train_us()))
            .collect();
        loglog_slope(&pts)
    }

    /// Reference over fast training time at `dim`.
    pub fn train_speedup(&self, dim: usize) -> Option<f64> {
        Some(self.record(Backend::Reference, dim)?.train_seconds / self.record(Backend::Fast, dim)?.train_seconds)
    }

    /// Reference over fast per-sample inference time at `dim`.
    pub fn test_speedup(&self, dim: usize) -> Option<f64> {
        Some(self.record(Backend::Reference, dim)?.per_sample_test_us() / self.record(Backend::Fast, dim)?.per_sample_test_us())
    }

    /// Largest absolute difference between the two backends' final means at
    /// `dim`; `None` if either is missing or the component counts differ.
    pub fn mean_discrepancy(&self, dim: usize) -> Option<f64> {
        let (a, b) = (self.record(Backend::Fast, dim)?, self.record(Backend::Reference, dim)?);
        if a.final_means.len() != b.final_means.len() {
            return None;
        }
        let diffs = a.final_means.iter().flatten().zip(b.final_means.iter().flatten());
        Some(diffs.map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.backend,
                r.dim,
                r.samples,
                r.k_final,
                r.train_seconds,
                r.test_seconds,
                r.per_sample_train_us()
            );
        }
        out
    }

    /// Aligned table plus slopes and speedups, for terminals.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "{:<10} {:>5} {:>6} {:>4} {:>10} {:>10} {:>14} {:>14}\n",
            "backend", "D", "N", "K", "train_s", "test_s", "train_us/pt", "test_us/pt"
        );
        for r in &self.records {
            let _ = writeln!(
                out,
                "{:<10} {:>5} {:>6} {:>4} {:>10.4} {:>10.4} {:>14.2} {:>14.2}",
                r.backend.name(),
                r.dim,
                r.samples,
                r.k_final,
                r.train_seconds,
                r.test_seconds,
                r.per_sample_train_us(),
                r.per_sample_test_us()
            );
        }
        for b in [Backend::Fast, Backend::Reference] {
            if let Some(s) = self.slope(b) {
                let _ = writeln!(out, "log-log slope ({b}): {s:.3}");
            }
        }
        let mut dims: Vec<usize> = self.records.iter().map(|r| r.dim).collect();
        dims.sort_unstable();
        dims.dedup();
        for d in dims {
            if let (Some(tr), Some(te)) = (self.train_speedup(d), self.test_speedup(d)) {
                let _ = writeln!(out, "D={d}: reference/fast train {tr:.1}x, inference {te:.1}x");
            }
        }
        out
    }
}

/// Least-squares slope of `ln y` on `ln x`; needs three distinct `x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return None;
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// `n` rows of i.i.d. standard normal values.
pub fn gaussian_rows(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Trains one model per backend and dimension with `delta = 1`, `beta = 0`
/// (a single component) and times the learning loop and the reconstruction
/// of the last element of `N / 10` held-out rows. Runs single-threaded.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let reps = cfg.repetitions.max(1);
    let n_test = (cfg.samples / 10).max(1);
    let mut records = Vec::new();
    for &dim in &cfg.dims {
        if dim < 2 {
            return Err(crate::mixture::IgmnError::InvalidConfig("benchmark dimensions must be at least 2".into()));
        }
        let seed = cfg.seed ^ (dim as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let train = gaussian_rows(cfg.samples, dim, seed);
        let test: Vec<Vec<f64>> = gaussian_rows(n_test, dim, seed.wrapping_add(1))
            .into_iter()
            .map(|mut r| {
                r.pop();
                r
            })
            .collect();
        let plan = SlicePlan::targets_last(dim, 1)?;
        for &backend in &cfg.backends {
            let config = IgmnConfig::new(1.0, 0.0).with_backend(backend);
            let mut train_times = Vec::with_capacity(reps);
            let mut test_times = Vec::with_capacity(reps);
            let mut last = None;
            for _ in 0..reps {
                let (model, tr, te) = par::sequential(|| -> Result<_> {
                    let mut model = MixtureModel::from_data(config.clone(), &train)?;
                    let start = Instant::now();
                    for x in &train {
                        model.learn_one(x)?;
                    }
                    let tr = start.elapsed().as_secs_f64();
                    let start = Instant::now();
                    for x in &test {
                        std::hint::black_box(reconstruct(&model, x, &plan)?);
                    }
                    Ok((model, tr, start.elapsed().as_secs_f64()))
                })?;
                train_times.push(tr);
                test_times.push(te);
                last = Some(model);
            }
            let model = last.expect("at least one repetition");
            log::info!("bench {backend} D={dim}: done");
            records.push(BenchRecord {
                backend,
                dim,
                samples: cfg.samples,
                k_final: model.len(),
                train_seconds: median(train_times),
                test_seconds: median(test_times),
                test_samples: n_test,
                final_means: model.components().iter().map(|c| c.mean().to_vec()).collect(),
            });
        }
    }
    Ok(BenchReport { records })
}
