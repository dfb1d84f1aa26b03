//! Seeded Monte Carlo rate experiments.
//!
//! Each replication draws from its own ChaCha8 stream: the key is the experiment seed and the
//! stream id is a hash of `(n, replication)`. Squared errors are collected by replication index
//! and summed in that order, so results are identical under any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::fit::loglog_slope;

/// Number of batches used by the median-of-batches diagnostic.
pub const DIAGNOSTIC_BATCHES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Uniform {
        low: f64,
        high: f64,
    },
    /// Pareto with tail index `a` and scale `x_min`; `P(X > x) = (x_min / x)^a`.
    Pareto {
        a: f64,
        #[serde(default = "one")]
        x_min: f64,
    },
    Beta {
        a: f64,
        b: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Sampler {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Sampler::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            Sampler::Pareto { a, x_min } => {
                a > 0.0 && a.is_finite() && x_min > 0.0 && x_min.is_finite()
            }
            Sampler::Beta { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidExperiment(format!(
                "bad sampler parameters: {self:?}"
            )))
        }
    }

    pub fn mean(&self) -> Result<f64> {
        self.validate()?;
        match *self {
            Sampler::Uniform { low, high } => Ok(0.5 * (low + high)),
            Sampler::Pareto { a, x_min } if a > 1.0 => Ok(a * x_min / (a - 1.0)),
            Sampler::Pareto { a, .. } => Err(Error::UnsupportedFamily(format!(
                "Pareto with tail index {a} has no finite mean"
            ))),
            Sampler::Beta { a, b } => Ok(a / (a + b)),
        }
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        self.validate()?;
        Ok(match *self {
            Sampler::Uniform { low, high } => {
                if (low..=high).contains(&x) {
                    1.0 / (high - low)
                } else {
                    0.0
                }
            }
            Sampler::Pareto { a, x_min } => {
                if x >= x_min {
                    a * x_min.powf(a) / x.powf(a + 1.0)
                } else {
                    0.0
                }
            }
            Sampler::Beta { a, b } => {
                if x > 0.0 && x < 1.0 {
                    ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b)).exp()
                } else {
                    0.0
                }
            }
        })
    }

    fn draw<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        match *self {
            Sampler::Uniform { low, high } => (0..n)
                .map(|_| low + (high - low) * rng.random::<f64>())
                .collect(),
            Sampler::Pareto { a, x_min } => (0..n)
                .map(|_| x_min * (1.0 - rng.random::<f64>()).powf(-1.0 / a))
                .collect(),
            Sampler::Beta { a, b } => {
                let dist = Beta::new(a, b).expect("validated");
                (0..n).map(|_| dist.sample(rng)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MeanEstimation,
    DensityAtPoint { x: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    SampleMean,
    /// Epanechnikov kernel with bandwidth `h = bandwidth_constant * n^(-1/5)`.
    KernelDensity {
        #[serde(default = "one")]
        bandwidth_constant: f64,
    },
}

/// The analytic target: the mean for mean estimation, the density at `x` otherwise.
pub fn truth_for(sampler: &Sampler, kind: &ExperimentKind) -> Result<f64> {
    match kind {
        ExperimentKind::MeanEstimation => sampler.mean(),
        ExperimentKind::DensityAtPoint { x } => sampler.pdf(*x),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateExperiment {
    pub kind: ExperimentKind,
    pub sampler: Sampler,
    pub truth: f64,
    pub n_values: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub estimator: Estimator,
}

impl RateExperiment {
    /// Fills in the truth from [`truth_for`].
    pub fn new(
        kind: ExperimentKind,
        sampler: Sampler,
        estimator: Estimator,
        n_values: Vec<usize>,
        replications: usize,
        seed: u64,
    ) -> Result<Self> {
        let truth = truth_for(&sampler, &kind)?;
        let e = Self {
            kind,
            sampler,
            truth,
            n_values,
            replications,
            seed,
            estimator,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if !self.truth.is_finite() {
            return Err(Error::InvalidExperiment("truth must be finite".into()));
        }
        if let (ExperimentKind::MeanEstimation, Sampler::Pareto { a, .. }) =
            (self.kind, self.sampler)
        {
            if a <= 1.0 {
                return Err(Error::InvalidExperiment(format!(
                    "Pareto tail index {a} <= 1 has no mean"
                )));
            }
        }
        if self.n_values.is_empty() || self.n_values[0] == 0 {
            return Err(Error::InvalidExperiment(
                "sample sizes must be positive".into(),
            ));
        }
        if self.n_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidExperiment(
                "sample sizes must be increasing".into(),
            ));
        }
        if self.replications == 0 {
            return Err(Error::InvalidExperiment(
                "need at least one replication".into(),
            ));
        }
        match (self.kind, self.estimator) {
            (ExperimentKind::MeanEstimation, Estimator::SampleMean) => Ok(()),
            (
                ExperimentKind::DensityAtPoint { x },
                Estimator::KernelDensity { bandwidth_constant },
            ) => {
                if !(bandwidth_constant > 0.0 && bandwidth_constant.is_finite()) {
                    return Err(Error::InvalidExperiment(
                        "bandwidth constant must be positive".into(),
                    ));
                }
                if !x.is_finite() {
                    return Err(Error::InvalidExperiment(
                        "evaluation point must be finite".into(),
                    ));
                }
                Ok(())
            }
            (k, est) => Err(Error::InvalidExperiment(format!(
                "estimator {est:?} does not fit experiment {k:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub rmse: f64,
    pub rmse_stderr: f64,
    /// Square root of the median over batches of the batch mean squared error.
    pub median_batch_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub per_n: Vec<RatePoint>,
    /// Absent with fewer than three sample sizes or a zero rmse.
    pub fitted_slope: Option<f64>,
    pub slope_stderr: Option<f64>,
}

/// Neumaier-compensated sum, in slice order.
pub fn compensated_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream_rng(seed: u64, n: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(splitmix64(splitmix64(n as u64) ^ rep as u64));
    rng
}

fn estimate(e: &RateExperiment, sample: &[f64]) -> f64 {
    let n = sample.len() as f64;
    match (e.kind, e.estimator) {
        (ExperimentKind::DensityAtPoint { x }, Estimator::KernelDensity { bandwidth_constant }) => {
            let h = bandwidth_constant * n.powf(-0.2);
            let k: Vec<f64> = sample
                .iter()
                .map(|xi| {
                    let z = (x - xi) / h;
                    if z.abs() < 1.0 {
                        0.75 * (1.0 - z * z)
                    } else {
                        0.0
                    }
                })
                .collect();
            compensated_sum(&k) / (n * h)
        }
        _ => compensated_sum(sample) / n,
    }
}

fn point(n: usize, sq: &[f64]) -> RatePoint {
    let r = sq.len() as f64;
    let mse = compensated_sum(sq) / r;
    let rmse = mse.sqrt();
    let rmse_stderr = if sq.len() > 1 && rmse > 0.0 {
        let dev: Vec<f64> = sq.iter().map(|s| (s - mse).powi(2)).collect();
        let var = compensated_sum(&dev) / (r - 1.0);
        (var / r).sqrt() / (2.0 * rmse)
    } else {
        0.0
    };
    let batches = DIAGNOSTIC_BATCHES.min(sq.len());
    let size = sq.len() / batches;
    let mut batch_mse: Vec<f64> = (0..batches)
        .map(|b| compensated_sum(&sq[b * size..(b + 1) * size]) / size as f64)
        .collect();
    batch_mse.sort_by(f64::total_cmp);
    let median = if batches % 2 == 1 {
        batch_mse[batches / 2]
    } else {
        0.5 * (batch_mse[batches / 2 - 1] + batch_mse[batches / 2])
    };
    RatePoint {
        n,
        rmse,
        rmse_stderr,
        median_batch_rmse: median.sqrt(),
    }
}

pub fn run_experiment(e: &RateExperiment) -> Result<RateReport> {
    e.validate()?;
    let mut per_n = Vec::with_capacity(e.n_values.len());
    for &n in &e.n_values {
        let sq: Vec<f64> = (0..e.replications)
            .into_par_iter()
            .map(|rep| {
                let mut rng = stream_rng(e.seed, n, rep);
                let sample = e.sampler.draw(&mut rng, n);
                (estimate(e, &sample) - e.truth).powi(2)
            })
            .collect();
        per_n.push(point(n, &sq));
    }
    let fit = fit_rate(&per_n.iter().map(|p| (p.n, p.rmse)).collect::<Vec<_>>()).ok();
    Ok(RateReport {
        per_n,
        fitted_slope: fit.map(|f| f.0),
        slope_stderr: fit.map(|f| f.1),
    })
}

/// OLS slope of `ln rmse` on `ln n` with its standard error.
pub fn fit_rate(per_n: &[(usize, f64)]) -> Result<(f64, f64)> {
    if per_n.len() < 3 {
        return Err(Error::DegenerateFit("need at least three points".into()));
    }
    if per_n.iter().any(|(_, r)| !(*r > 0.0)) {
        return Err(Error::DegenerateFit("rmse values must be positive".into()));
    }
    let x: Vec<f64> = per_n.iter().map(|(n, _)| *n as f64).collect();
    let y: Vec<f64> = per_n.iter().map(|(_, r)| *r).collect();
    loglog_slope(&x, &y)
}
