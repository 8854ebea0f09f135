//! Batch selection strategies.
//!
//! Greedy strategies add one point at a time and record the increase of
//! their batch objective as the per-step gain. Stochastic strategies own a
//! private generator seeded from [`StrategyParams::seed`].

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::joint::{configuration_count, ConfigMode, JointConfigState, DEFAULT_ENUMERATION_CAP, DEFAULT_MC_SAMPLES};
use crate::pairwise::{PairwiseContext, PairwiseMiMatrix, DEFAULT_FULL_MATRIX_CAP};
use crate::scores::{bald_scores, entropy_scores, least_confident_scores};
use crate::tensor::{PosteriorTensor, ScoreVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Random,
    TopkEntropy,
    TopkLeastConfident,
    Bald,
    PowerBald,
    BatchBald,
    Lbb,
    PowerLbb,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::Random,
        Strategy::TopkEntropy,
        Strategy::TopkLeastConfident,
        Strategy::Bald,
        Strategy::PowerBald,
        Strategy::BatchBald,
        Strategy::Lbb,
        Strategy::PowerLbb,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::TopkEntropy => "topk-entropy",
            Strategy::TopkLeastConfident => "topk-lc",
            Strategy::Bald => "bald",
            Strategy::PowerBald => "pbald",
            Strategy::BatchBald => "batchbald",
            Strategy::Lbb => "lbb",
            Strategy::PowerLbb => "plbb",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Strategy::Random | Strategy::PowerBald | Strategy::PowerLbb)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.label() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown strategy `{s}`")))
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Conditions worth surfacing to the caller that did not abort selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "flag", rename_all = "snake_case")]
pub enum SelectionFlag {
    /// More points were requested than the pool holds; the whole pool was returned.
    BatchLargerThanPool { requested: usize, pool: usize },
    /// Every remaining score was at or below the clamp floor at this step; the draw was uniform.
    AllScoresZero { step: usize },
    /// Joint entropies were estimated from sampled configurations from this step on.
    MonteCarloFrom { step: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionBatch {
    pub indices: Vec<usize>,
    pub gains: Vec<f64>,
    pub strategy: String,
    pub seed: Option<u64>,
    /// Seconds spent inside the selection call.
    pub wall_time: f64,
    pub flags: Vec<SelectionFlag>,
}

/// Power-sampling parameters: pick probability `∝ max(score, clamp_floor)^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub alpha: f64,
    pub seed: u64,
    pub clamp_floor: f64,
}

impl PowerConfig {
    pub fn new(alpha: f64, seed: u64) -> Self {
        Self {
            alpha,
            seed,
            clamp_floor: 1e-12,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidSpec(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.clamp_floor > 0.0) {
            return Err(Error::InvalidSpec("clamp_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Which pairwise-MI implementation the LBB strategies use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairwisePath {
    /// Full matrix when the pool fits under the matrix cap, lazy otherwise.
    #[default]
    Auto,
    Full,
    /// Candidate-versus-selected evaluation only.
    Lazy,
}

/// Knobs shared by all strategies; each strategy reads the ones it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyParams {
    pub seed: u64,
    pub alpha: f64,
    pub clamp_floor: f64,
    pub mc_samples: usize,
    pub enumeration_cap: usize,
    pub pairwise: PairwisePath,
    pub full_matrix_cap: usize,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self {
            seed: 0,
            alpha: 1.0,
            clamp_floor: 1e-12,
            mc_samples: DEFAULT_MC_SAMPLES,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            pairwise: PairwisePath::Auto,
            full_matrix_cap: DEFAULT_FULL_MATRIX_CAP,
        }
    }
}

impl StrategyParams {
    pub fn power(&self) -> PowerConfig {
        PowerConfig {
            alpha: self.alpha,
            seed: self.seed,
            clamp_floor: self.clamp_floor,
        }
    }
}

fn check_batch(b: usize, n: usize) -> Result<()> {
    if b == 0 {
        return Err(Error::InvalidSpec("batch size must be >= 1".into()));
    }
    if b > n {
        return Err(Error::BatchLargerThanPool { batch: b, pool: n });
    }
    Ok(())
}

/// Runs `strategy` on the tensor, timing the whole call including scoring.
pub fn select(tensor: &PosteriorTensor, strategy: Strategy, b: usize, params: &StrategyParams) -> Result<SelectionBatch> {
    let start = Instant::now();
    let mut batch = match strategy {
        Strategy::Random => select_random(tensor.pool_size(), b, params.seed)?,
        Strategy::TopkEntropy => select_topk(&entropy_scores(tensor), b)?,
        Strategy::TopkLeastConfident => select_topk(&least_confident_scores(tensor), b)?,
        Strategy::Bald => select_topk(&bald_scores(tensor).0, b)?,
        Strategy::PowerBald => select_power(&bald_scores(tensor).0, b, &params.power())?,
        Strategy::BatchBald => select_batchbald(tensor, b, params)?,
        Strategy::Lbb => select_lbb(tensor, b, params)?,
        Strategy::PowerLbb => select_plbb(tensor, b, params)?,
    };
    batch.strategy = strategy.label().to_string();
    batch.wall_time = start.elapsed().as_secs_f64();
    Ok(batch)
}

/// Indices of the `b` largest scores, descending, ties to the lowest index.
pub fn select_topk(scores: &ScoreVector, b: usize) -> Result<SelectionBatch> {
    let start = Instant::now();
    if b == 0 {
        return Err(Error::InvalidSpec("batch size must be >= 1".into()));
    }
    let n = scores.len();
    let mut flags = Vec::new();
    if b > n {
        flags.push(SelectionFlag::BatchLargerThanPool { requested: b, pool: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps ascending index order among equal scores.
    order.sort_by(|&a, &c| scores.values[c].total_cmp(&scores.values[a]));
    order.truncate(b.min(n));
    let gains = order.iter().map(|&i| scores.values[i]).collect();
    Ok(SelectionBatch {
        indices: order,
        gains,
        strategy: scores.label.clone(),
        seed: None,
        wall_time: start.elapsed().as_secs_f64(),
        flags,
    })
}

/// Uniform sample of `b` distinct indices from `0..n`.
pub fn select_random(n: usize, b: usize, seed: u64) -> Result<SelectionBatch> {
    let start = Instant::now();
    check_batch(b, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = index::sample(&mut rng, n, b).into_vec();
    Ok(SelectionBatch {
        indices,
        gains: Vec::new(),
        strategy: Strategy::Random.label().into(),
        seed: Some(seed),
        wall_time: start.elapsed().as_secs_f64(),
        flags: Vec::new(),
    })
}

/// Draws one position from `remaining` with probability `∝ max(score, floor)^alpha`.
///
/// Weights are normalized in log space so large `alpha` does not underflow.
fn power_draw<R: Rng>(
    remaining: &[usize],
    score: impl Fn(usize) -> f64,
    cfg: &PowerConfig,
    rng: &mut R,
    weights: &mut Vec<f64>,
) -> (usize, bool) {
    weights.clear();
    let mut all_floor = true;
    let mut max_log = f64::NEG_INFINITY;
    for &i in remaining {
        let s = score(i);
        if s > cfg.clamp_floor {
            all_floor = false;
        }
        let lw = cfg.alpha * s.max(cfg.clamp_floor).ln();
        max_log = max_log.max(lw);
        weights.push(lw);
    }
    let mut total = 0.0;
    for w in weights.iter_mut() {
        *w = (*w - max_log).exp();
        total += *w;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (pos, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return (pos, all_floor);
        }
    }
    (remaining.len() - 1, all_floor)
}

/// Sequential power sampling without replacement over fixed scores.
pub fn select_power(scores: &ScoreVector, b: usize, cfg: &PowerConfig) -> Result<SelectionBatch> {
    let start = Instant::now();
    cfg.validate()?;
    let n = scores.len();
    check_batch(b, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut weights = Vec::with_capacity(n);
    let mut indices = Vec::with_capacity(b);
    let mut gains = Vec::with_capacity(b);
    let mut flags = Vec::new();
    for step in 0..b {
        let (pos, all_floor) = power_draw(&remaining, |i| scores.values[i], cfg, &mut rng, &mut weights);
        if all_floor {
            flags.push(SelectionFlag::AllScoresZero { step });
        }
        let picked = remaining.remove(pos);
        gains.push(scores.values[picked]);
        indices.push(picked);
    }
    Ok(SelectionBatch {
        indices,
        gains,
        strategy: format!("power-{}", scores.label),
        seed: Some(cfg.seed),
        wall_time: start.elapsed().as_secs_f64(),
        flags,
    })
}

fn argmax_remaining(values: &[(usize, f64)]) -> (usize, f64) {
    let mut best = values[0];
    for &(i, v) in &values[1..] {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Greedy BatchBALD.
///
/// Joint entropies are enumerated exactly while `c^(step+1)` stays within
/// `params.enumeration_cap`; after that the selected points' configurations
/// are sampled (`params.mc_samples`, seeded by `params.seed`) and extended
/// member-wise for the remaining steps.
pub fn select_batchbald(tensor: &PosteriorTensor, b: usize, params: &StrategyParams) -> Result<SelectionBatch> {
    let start = Instant::now();
    let n = tensor.pool_size();
    check_batch(b, n)?;
    let c = tensor.classes();
    let (_, parts) = bald_scores(tensor);
    let conditional: Vec<f64> = parts.iter().map(|d| d.mean_conditional_entropy).collect();

    let mut state = JointConfigState::new(tensor.members());
    let mut taken = vec![false; n];
    let mut indices = Vec::with_capacity(b);
    let mut gains = Vec::with_capacity(b);
    let mut flags = Vec::new();
    let mut previous = 0.0;
    let mut selected_conditional = 0.0;

    for step in 0..b {
        if state.mode() == ConfigMode::Exact && configuration_count(c, step + 1) > params.enumeration_cap as u128 {
            state = JointConfigState::sampled(tensor, &indices, params.mc_samples, params.seed)?;
            flags.push(SelectionFlag::MonteCarloFrom { step });
        }
        let candidates: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
        let values: Vec<(usize, f64)> = candidates
            .par_iter()
            .map_init(
                || vec![0.0; c],
                |scratch, &x| {
                    let h = state.candidate_entropy(tensor, x, scratch);
                    (x, h - selected_conditional - conditional[x])
                },
            )
            .collect();
        let (best, value) = argmax_remaining(&values);
        gains.push(value - previous);
        previous = value;
        selected_conditional += conditional[best];
        taken[best] = true;
        indices.push(best);
        if step + 1 < b {
            state.absorb(tensor, best);
        }
    }
    Ok(SelectionBatch {
        indices,
        gains,
        strategy: Strategy::BatchBald.label().into(),
        seed: (!flags.is_empty()).then_some(params.seed),
        wall_time: start.elapsed().as_secs_f64(),
        flags,
    })
}

/// Source of `I(y_x; y_j)` for the LBB penalty updates.
enum PairwiseSource<'a> {
    Full(PairwiseMiMatrix),
    Lazy(PairwiseContext<'a>),
}

impl<'a> PairwiseSource<'a> {
    fn new(tensor: &'a PosteriorTensor, params: &StrategyParams, b: usize) -> Result<Self> {
        let ctx = PairwiseContext::new(tensor);
        let n = tensor.pool_size();
        Ok(match params.pairwise {
            // a single pick never consults the penalty
            _ if b == 1 => PairwiseSource::Lazy(ctx),
            PairwisePath::Lazy => PairwiseSource::Lazy(ctx),
            PairwisePath::Full => {
                if n > params.full_matrix_cap {
                    return Err(Error::PoolTooLarge {
                        n,
                        cap: params.full_matrix_cap,
                    });
                }
                PairwiseSource::Full(PairwiseMiMatrix::compute_with(&ctx))
            }
            PairwisePath::Auto if n <= params.full_matrix_cap => PairwiseSource::Full(PairwiseMiMatrix::compute_with(&ctx)),
            PairwisePath::Auto => PairwiseSource::Lazy(ctx),
        })
    }

    /// Adds `2 · I(y_x; y_picked)` to the penalty of every unselected `x`.
    fn penalize(&self, picked: usize, taken: &[bool], penalty: &mut [f64]) {
        match self {
            PairwiseSource::Full(m) => {
                let row = m.row(picked);
                for (x, p) in penalty.iter_mut().enumerate() {
                    if !taken[x] {
                        *p += 2.0 * row[x];
                    }
                }
            }
            PairwiseSource::Lazy(ctx) => {
                let candidates: Vec<usize> = (0..taken.len()).filter(|&x| !taken[x]).collect();
                let mi = ctx.mi_against(picked, &candidates);
                for (&x, v) in candidates.iter().zip(mi) {
                    penalty[x] += 2.0 * v;
                }
            }
        }
    }
}

/// Greedy Large BatchBALD: gain `bald[x] − 2 Σ_{j∈selected} I(y_x; y_j)`.
///
/// The gains sum to `Σ bald − Ĉ(batch)` with `Ĉ` over ordered pairs.
pub fn select_lbb(tensor: &PosteriorTensor, b: usize, params: &StrategyParams) -> Result<SelectionBatch> {
    let start = Instant::now();
    let n = tensor.pool_size();
    check_batch(b, n)?;
    let bald = bald_scores(tensor).0.values;
    let source = PairwiseSource::new(tensor, params, b)?;
    let mut penalty = vec![0.0; n];
    let mut taken = vec![false; n];
    let mut indices = Vec::with_capacity(b);
    let mut gains = Vec::with_capacity(b);
    for step in 0..b {
        let values: Vec<(usize, f64)> = (0..n).filter(|&x| !taken[x]).map(|x| (x, bald[x] - penalty[x])).collect();
        let (best, gain) = argmax_remaining(&values);
        taken[best] = true;
        indices.push(best);
        gains.push(gain);
        if step + 1 < b {
            source.penalize(best, &taken, &mut penalty);
        }
    }
    Ok(SelectionBatch {
        indices,
        gains,
        strategy: Strategy::Lbb.label().into(),
        seed: None,
        wall_time: start.elapsed().as_secs_f64(),
        flags: Vec::new(),
    })
}

/// Power Large BatchBALD: each step samples from the powered LBB gains of the
/// remaining candidates instead of taking their argmax.
pub fn select_plbb(tensor: &PosteriorTensor, b: usize, params: &StrategyParams) -> Result<SelectionBatch> {
    let start = Instant::now();
    let cfg = params.power();
    cfg.validate()?;
    let n = tensor.pool_size();
    check_batch(b, n)?;
    let bald = bald_scores(tensor).0.values;
    let source = PairwiseSource::new(tensor, params, b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut penalty = vec![0.0; n];
    let mut taken = vec![false; n];
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut weights = Vec::with_capacity(n);
    let mut indices = Vec::with_capacity(b);
    let mut gains = Vec::with_capacity(b);
    let mut flags = Vec::new();
    for step in 0..b {
        let (pos, all_floor) = power_draw(&remaining, |x| bald[x] - penalty[x], &cfg, &mut rng, &mut weights);
        if all_floor {
            flags.push(SelectionFlag::AllScoresZero { step });
        }
        let picked = remaining.remove(pos);
        taken[picked] = true;
        gains.push(bald[picked] - penalty[picked]);
        indices.push(picked);
        if step + 1 < b {
            source.penalize(picked, &taken, &mut penalty);
        }
    }
    Ok(SelectionBatch {
        indices,
        gains,
        strategy: Strategy::PowerLbb.label().into(),
        seed: Some(cfg.seed),
        wall_time: start.elapsed().as_secs_f64(),
        flags,
    })
}
