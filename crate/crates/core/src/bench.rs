//! Wall-clock benchmarks of the selection strategies on synthetic posteriors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::acquisition::{select, Strategy, StrategyParams};
use crate::error::{Error, Result};
use crate::tensor::PosteriorTensor;

/// Shape and seed of a synthetic pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolSpec {
    pub n: usize,
    pub k: usize,
    pub c: usize,
    pub seed: u64,
}

impl Default for PoolSpec {
    fn default() -> Self {
        Self {
            n: 2000,
            k: 10,
            c: 10,
            seed: 0,
        }
    }
}

/// Members are `softmax(base + N(0, 1))` around a per-point base `N(0, 2²)`
/// logit vector, so points differ in both confidence and disagreement.
pub fn synthetic_posterior(n: usize, k: usize, c: usize, seed: u64) -> Result<PosteriorTensor> {
    if n == 0 || k == 0 || c < 2 {
        return Err(Error::InvalidShape(format!("synthetic pool {n}x{k}x{c} needs n, k >= 1 and c >= 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base_dist = Normal::new(0.0, 2.0).expect("valid normal");
    let member_dist = Normal::new(0.0, 1.0).expect("valid normal");
    let mut probs = Vec::with_capacity(n * k * c);
    let mut base = vec![0.0; c];
    let mut logits = vec![0.0; c];
    for _ in 0..n {
        base.iter_mut().for_each(|b| *b = base_dist.sample(&mut rng));
        for _ in 0..k {
            for (l, b) in logits.iter_mut().zip(&base) {
                *l = b + member_dist.sample(&mut rng);
            }
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            probs.extend(logits.iter().map(|l| (l - max).exp() / total));
        }
    }
    PosteriorTensor::new(n, k, c, probs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEnv {
    pub n: usize,
    pub k: usize,
    pub c: usize,
    pub reps: usize,
    pub seed: u64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub strategy: String,
    pub batch_size: usize,
    pub mean_s: f64,
    /// Sample standard deviation; 0 for a single repetition.
    pub std_s: f64,
    pub times_s: Vec<f64>,
}

/// Indices chosen during a benchmark cell; independent of timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSelection {
    pub strategy: String,
    pub batch_size: usize,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub env: BenchEnv,
    pub rows: Vec<BenchRow>,
    pub selections: Vec<BenchSelection>,
}

impl BenchTable {
    pub fn row(&self, strategy: Strategy, batch_size: usize) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy.label() && r.batch_size == batch_size)
    }

    pub fn mean(&self, strategy: Strategy, batch_size: usize) -> Option<f64> {
        self.row(strategy, batch_size).map(|r| r.mean_s)
    }
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Times `select` for every (strategy, batch size) cell on one worker thread.
///
/// Each cell runs once untimed as a warm-up, then `reps` timed calls. The
/// selection of the warm-up call is kept in [`BenchTable::selections`];
/// stochastic strategies use `params.seed` for every call, so all calls of a
/// cell pick the same indices.
pub fn bench_runtime(
    strategies: &[Strategy],
    batch_sizes: &[usize],
    pool: &PoolSpec,
    reps: usize,
    params: &StrategyParams,
) -> Result<BenchTable> {
    if reps == 0 || strategies.is_empty() || batch_sizes.is_empty() {
        return Err(Error::InvalidSpec("benchmark needs strategies, batch sizes and reps >= 1".into()));
    }
    let tensor = synthetic_posterior(pool.n, pool.k, pool.c, pool.seed)?;
    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidSpec(format!("cannot build benchmark thread pool: {e}")))?;
    workers.install(|| {
        let mut rows = Vec::new();
        let mut selections = Vec::new();
        for &strategy in strategies {
            for &b in batch_sizes {
                let warm = select(&tensor, strategy, b, params)?;
                let mut times = Vec::with_capacity(reps);
                for _ in 0..reps {
                    let run = select(&tensor, strategy, b, params)?;
                    times.push(run.wall_time.max(1e-9));
                }
                let (mean_s, std_s) = mean_std(&times);
                rows.push(BenchRow {
                    strategy: strategy.label().to_string(),
                    batch_size: b,
                    mean_s,
                    std_s,
                    times_s: times,
                });
                selections.push(BenchSelection {
                    strategy: strategy.label().to_string(),
                    batch_size: b,
                    indices: warm.indices,
                });
            }
        }
        Ok(BenchTable {
            env: BenchEnv {
                n: pool.n,
                k: pool.k,
                c: pool.c,
                reps,
                seed: pool.seed,
                threads: 1,
            },
            rows,
            selections,
        })
    })
}

/// Least-squares fit `y = t0 + beta · x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub t0: f64,
    pub beta: f64,
    /// Largest `|y − ŷ| / ŷ` over the fitted points.
    pub max_relative_residual: f64,
}

pub fn fit_linear(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::DimensionMismatch("linear fit needs two or more paired points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidSpec("linear fit needs distinct x values".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let beta = sxy / sxx;
    let t0 = my - beta * mx;
    let max_relative_residual = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let fit = t0 + beta * x;
            (y - fit).abs() / fit.abs()
        })
        .fold(0.0, f64::max);
    Ok(LinearFit {
        t0,
        beta,
        max_relative_residual,
    })
}
