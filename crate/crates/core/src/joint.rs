//! Joint predictive entropies over label configurations of several pool
//! points, BatchBALD scores, and exact total correlation.
//!
//! Labels of distinct points are independent given a posterior sample, so
//! `p(y_1..y_b | θ_j) = Π_i p(y_i | x_i, θ_j)` and the predictive joint is the
//! member average of those products. [`JointConfigState`] keeps the
//! `configurations × members` matrix of these products and grows it one point
//! at a time, either over every configuration (exact) or over configurations
//! sampled member-stratified (Monte Carlo).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::{ln_floor, xlogx};
use crate::pairwise::check_subset;
use crate::scores::decompose_point;
use crate::tensor::PosteriorTensor;

/// Largest number of configurations enumerated exactly by default.
pub const DEFAULT_ENUMERATION_CAP: usize = 10_000;

/// Default number of sampled configurations in Monte Carlo mode.
pub const DEFAULT_MC_SAMPLES: usize = 10_000;

/// How joint entropies are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigMode {
    Exact,
    MonteCarlo,
}

/// Joint entropy terms of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchScoreBreakdown {
    pub joint_entropy: f64,
    /// Sum of the points' mean conditional entropies.
    pub conditional_joint_entropy: f64,
    /// `joint_entropy - conditional_joint_entropy`.
    pub score: f64,
}

/// Number of label configurations of `points` points with `c` classes, saturating.
pub fn configuration_count(c: usize, points: usize) -> u128 {
    (c as u128).checked_pow(points as u32).unwrap_or(u128::MAX)
}

#[derive(Debug, Clone)]
struct McSample {
    member: usize,
    labels: Vec<u16>,
}

/// Running `p(y_{1:i} = config | θ_j)` matrix for a growing set of points.
#[derive(Debug, Clone)]
pub struct JointConfigState {
    mode: ConfigMode,
    k: usize,
    points: Vec<usize>,
    /// Row-major `rows × k`.
    probs_given_theta: Vec<f64>,
    /// Member average of each row, `q(config)`.
    config_mass: Vec<f64>,
    /// Monte Carlo only: multiplicity of each distinct sampled configuration over the sample count.
    sample_weights: Vec<f64>,
    samples: Vec<McSample>,
    rng: Option<ChaCha8Rng>,
}

impl JointConfigState {
    /// Exact state with no points absorbed: one empty configuration of probability one.
    pub fn new(members: usize) -> Self {
        Self {
            mode: ConfigMode::Exact,
            k: members,
            points: Vec::new(),
            probs_given_theta: vec![1.0; members],
            config_mass: vec![1.0],
            sample_weights: Vec::new(),
            samples: Vec::new(),
            rng: None,
        }
    }

    /// Monte Carlo state over `points`: each of `samples` configurations is
    /// drawn by picking a member uniformly, then each label from that member's prediction.
    pub fn sampled(tensor: &PosteriorTensor, points: &[usize], samples: usize, seed: u64) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidSpec("Monte Carlo sample count must be >= 1".into()));
        }
        for &p in points {
            tensor.check_index(p)?;
        }
        let k = tensor.members();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws = (0..samples)
            .map(|_| {
                let member = rng.random_range(0..k);
                let labels = points
                    .iter()
                    .map(|&p| draw_label(tensor.row(p, member), &mut rng))
                    .collect();
                McSample { member, labels }
            })
            .collect();
        let mut state = Self {
            mode: ConfigMode::MonteCarlo,
            k,
            points: points.to_vec(),
            probs_given_theta: Vec::new(),
            config_mass: Vec::new(),
            sample_weights: Vec::new(),
            samples: draws,
            rng: Some(rng),
        };
        state.rebuild_sampled(tensor);
        Ok(state)
    }

    pub fn mode(&self) -> ConfigMode {
        self.mode
    }

    pub fn depth(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn row_count(&self) -> usize {
        self.config_mass.len()
    }

    pub fn probs_given_theta(&self) -> &[f64] {
        &self.probs_given_theta
    }

    pub fn sample_weights(&self) -> &[f64] {
        &self.sample_weights
    }

    /// Appends point `x`.
    ///
    /// Exact mode expands every configuration into `c` children; Monte Carlo
    /// mode extends each sample with a label drawn from its own member.
    pub fn absorb(&mut self, tensor: &PosteriorTensor, x: usize) {
        match self.mode {
            ConfigMode::Exact => {
                let (k, c) = (self.k, tensor.classes());
                let rows = self.row_count();
                let mut next = vec![0.0; rows * c * k];
                for r in 0..rows {
                    let parent = &self.probs_given_theta[r * k..(r + 1) * k];
                    for a in 0..c {
                        let child = &mut next[(r * c + a) * k..(r * c + a + 1) * k];
                        for (j, slot) in child.iter_mut().enumerate() {
                            *slot = parent[j] * tensor.get(x, j, a);
                        }
                    }
                }
                self.probs_given_theta = next;
                self.points.push(x);
                self.config_mass = row_means(&self.probs_given_theta, k);
            }
            ConfigMode::MonteCarlo => {
                let rng = self.rng.as_mut().expect("sampled state owns a generator");
                for s in &mut self.samples {
                    let y = draw_label(tensor.row(x, s.member), rng);
                    s.labels.push(y);
                }
                self.points.push(x);
                self.rebuild_sampled(tensor);
            }
        }
    }

    fn rebuild_sampled(&mut self, tensor: &PosteriorTensor) {
        let mut counts: BTreeMap<&[u16], usize> = BTreeMap::new();
        for s in &self.samples {
            *counts.entry(s.labels.as_slice()).or_default() += 1;
        }
        let k = self.k;
        let total = self.samples.len() as f64;
        let mut rows = Vec::with_capacity(counts.len() * k);
        let mut weights = Vec::with_capacity(counts.len());
        for (labels, count) in counts {
            for j in 0..k {
                let mut p = 1.0;
                for (&point, &y) in self.points.iter().zip(labels) {
                    p *= tensor.get(point, j, y as usize);
                }
                rows.push(p);
            }
            weights.push(count as f64 / total);
        }
        self.config_mass = row_means(&rows, k);
        self.probs_given_theta = rows;
        self.sample_weights = weights;
    }

    /// Joint entropy of the absorbed points.
    pub fn entropy(&self) -> f64 {
        match self.mode {
            ConfigMode::Exact => -self.config_mass.iter().map(|&q| xlogx(q)).sum::<f64>(),
            ConfigMode::MonteCarlo => -self
                .sample_weights
                .iter()
                .zip(&self.config_mass)
                .map(|(&w, &q)| w * ln_floor(q))
                .sum::<f64>(),
        }
    }

    /// Joint entropy of the absorbed points plus candidate `x`, without mutating the state.
    ///
    /// `scratch` must hold at least `c` values.
    pub fn candidate_entropy(&self, tensor: &PosteriorTensor, x: usize, scratch: &mut [f64]) -> f64 {
        let (k, c) = (self.k, tensor.classes());
        let kf = k as f64;
        let block = tensor.point(x);
        let acc = &mut scratch[..c];
        let mut h = 0.0;
        for r in 0..self.row_count() {
            let row = &self.probs_given_theta[r * k..(r + 1) * k];
            acc.fill(0.0);
            for (j, &w) in row.iter().enumerate() {
                let member_row = &block[j * c..(j + 1) * c];
                for (slot, &p) in acc.iter_mut().zip(member_row) {
                    *slot += w * p;
                }
            }
            match self.mode {
                ConfigMode::Exact => {
                    for &s in acc.iter() {
                        h -= xlogx(s / kf);
                    }
                }
                ConfigMode::MonteCarlo => {
                    let mass = self.config_mass[r];
                    if mass <= 0.0 {
                        continue;
                    }
                    let mut inner = 0.0;
                    for &s in acc.iter() {
                        let q = s / kf;
                        if q > 0.0 {
                            inner -= q * ln_floor(q);
                        }
                    }
                    h += self.sample_weights[r] * inner / mass;
                }
            }
        }
        h
    }
}

fn row_means(rows: &[f64], k: usize) -> Vec<f64> {
    let kf = k as f64;
    rows.chunks_exact(k).map(|r| r.iter().sum::<f64>() / kf).collect()
}

fn draw_label<R: Rng>(dist: &[f64], rng: &mut R) -> u16 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (a, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            last_positive = a;
        }
        acc += p;
        if u < acc {
            return a as u16;
        }
    }
    // Rows sum to 1 within tolerance; fall back to the last class with mass.
    last_positive as u16
}

fn check_cap(tensor: &PosteriorTensor, points: usize, cap: usize) -> Result<()> {
    let configs = configuration_count(tensor.classes(), points);
    if configs > cap as u128 {
        Err(Error::EnumerationCapExceeded { configs, cap })
    } else {
        Ok(())
    }
}

fn exact_state(tensor: &PosteriorTensor, subset: &[usize], cap: usize) -> Result<JointConfigState> {
    check_subset(tensor, subset)?;
    check_cap(tensor, subset.len(), cap)?;
    let mut state = JointConfigState::new(tensor.members());
    for &i in subset {
        state.absorb(tensor, i);
    }
    Ok(state)
}

/// Exact joint entropy of the subset's labels, with the default cap.
pub fn joint_entropy_exact(tensor: &PosteriorTensor, subset: &[usize]) -> Result<f64> {
    joint_entropy_exact_with_cap(tensor, subset, DEFAULT_ENUMERATION_CAP)
}

pub fn joint_entropy_exact_with_cap(tensor: &PosteriorTensor, subset: &[usize], cap: usize) -> Result<f64> {
    Ok(exact_state(tensor, subset, cap)?.entropy())
}

/// Monte Carlo joint entropy from `samples` member-stratified configurations.
pub fn joint_entropy_mc(tensor: &PosteriorTensor, subset: &[usize], samples: usize, seed: u64) -> Result<f64> {
    check_subset(tensor, subset)?;
    Ok(JointConfigState::sampled(tensor, subset, samples, seed)?.entropy())
}

fn conditional_sum(tensor: &PosteriorTensor, subset: &[usize]) -> f64 {
    let mut scratch = vec![0.0; tensor.classes()];
    subset
        .iter()
        .map(|&i| decompose_point(tensor, i, &mut scratch).mean_conditional_entropy)
        .sum()
}

/// Mutual information between the subset's joint labels and the parameters.
pub fn batchbald_score(tensor: &PosteriorTensor, subset: &[usize], mode: JointMode) -> Result<BatchScoreBreakdown> {
    let joint_entropy = match mode {
        JointMode::Exact => joint_entropy_exact(tensor, subset)?,
        JointMode::MonteCarlo { samples, seed } => joint_entropy_mc(tensor, subset, samples, seed)?,
    };
    let conditional_joint_entropy = conditional_sum(tensor, subset);
    Ok(BatchScoreBreakdown {
        joint_entropy,
        conditional_joint_entropy,
        score: joint_entropy - conditional_joint_entropy,
    })
}

/// Exact total correlation `Σ_config q ln(q / Π_i p̄_i(config_i))`.
pub fn total_correlation_exact(tensor: &PosteriorTensor, subset: &[usize]) -> Result<f64> {
    total_correlation_exact_with_cap(tensor, subset, DEFAULT_ENUMERATION_CAP)
}

pub fn total_correlation_exact_with_cap(tensor: &PosteriorTensor, subset: &[usize], cap: usize) -> Result<f64> {
    let state = exact_state(tensor, subset, cap)?;
    let c = tensor.classes();
    let mean = tensor.predictive_mean();
    // Σ_i ln p̄_i(config_i) per configuration, in the same order as the state rows.
    let mut log_product = vec![0.0];
    for &i in subset {
        let logs: Vec<f64> = mean.row(i).iter().map(|&p| ln_floor(p)).collect();
        let mut next = Vec::with_capacity(log_product.len() * c);
        for &base in &log_product {
            next.extend(logs.iter().map(|&l| base + l));
        }
        log_product = next;
    }
    Ok(state
        .config_mass
        .iter()
        .zip(&log_product)
        .filter(|(&q, _)| q > 0.0)
        .map(|(&q, &lp)| q * (ln_floor(q) - lp))
        .sum())
}

/// `Σ BALD − BatchBALD − C` over the subset; zero up to rounding.
pub fn identity_residual(tensor: &PosteriorTensor, subset: &[usize]) -> Result<f64> {
    let mut scratch = vec![0.0; tensor.classes()];
    let bald_sum: f64 = subset
        .iter()
        .map(|&i| decompose_point(tensor, i, &mut scratch).bald)
        .sum();
    let bb = batchbald_score(tensor, subset, JointMode::Exact)?;
    let tc = total_correlation_exact(tensor, subset)?;
    Ok(bald_sum - bb.score - tc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::bald_scores;

    const MI_13: f64 = 0.130_812_035_941_136_96;
    const LN2: f64 = std::f64::consts::LN_2;

    fn trio() -> PosteriorTensor {
        let probs = vec![
            1.0, 0.0, 0.0, 1.0, //
            1.0, 0.0, 0.0, 1.0, //
            0.75, 0.25, 0.25, 0.75,
        ];
        PosteriorTensor::new(3, 2, 2, probs).unwrap()
    }

    #[test]
    fn singleton_joint_entropy_is_marginal() {
        let t = PosteriorTensor::new(1, 2, 2, vec![0.9, 0.1, 0.1, 0.9]).unwrap();
        assert!((joint_entropy_exact(&t, &[0]).unwrap() - LN2).abs() < 1e-15);
    }

    #[test]
    fn correlated_pair_joint_entropy() {
        assert!((joint_entropy_exact(&trio(), &[0, 1]).unwrap() - LN2).abs() < 1e-15);
    }

    #[test]
    fn exact_columns_are_distributions() {
        let t = trio();
        let mut state = JointConfigState::new(2);
        for i in 0..3 {
            state.absorb(&t, i);
        }
        assert_eq!(state.row_count(), 8);
        for j in 0..2 {
            let s: f64 = state.probs_given_theta().chunks(2).map(|r| r[j]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let t = trio();
        assert!(matches!(
            joint_entropy_exact_with_cap(&t, &[0, 1, 2], 4),
            Err(Error::EnumerationCapExceeded { configs: 8, cap: 4 })
        ));
        assert_eq!(configuration_count(10, 60), u128::MAX);
    }

    #[test]
    fn deterministic_tensor_has_zero_mc_entropy() {
        let t = PosteriorTensor::new(2, 3, 2, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        for m in [1, 10, 1000] {
            assert_eq!(joint_entropy_mc(&t, &[0, 1], m, 3).unwrap(), 0.0);
        }
    }

    #[test]
    fn batchbald_examples() {
        let t = trio();
        let (bald, _) = bald_scores(&t);
        for i in 0..3 {
            let s = batchbald_score(&t, &[i], JointMode::Exact).unwrap();
            assert!((s.score - bald.values[i]).abs() < 1e-12);
        }
        let dup = batchbald_score(&t, &[0, 1], JointMode::Exact).unwrap();
        assert!((dup.joint_entropy - LN2).abs() < 1e-15);
        assert_eq!(dup.conditional_joint_entropy, 0.0);
        assert!((dup.score - LN2).abs() < 1e-15);

        let mixed = batchbald_score(&t, &[0, 2], JointMode::Exact).unwrap();
        assert!((mixed.score - LN2).abs() < 1e-12);
        assert!((bald.values[0] + bald.values[2] - MI_13 - mixed.score).abs() < 1e-12);
    }

    #[test]
    fn total_correlation_examples() {
        let t = trio();
        assert!((total_correlation_exact(&t, &[0, 1]).unwrap() - LN2).abs() < 1e-15);
        assert!((total_correlation_exact(&t, &[0, 2]).unwrap() - MI_13).abs() < 1e-12);
        let constant = PosteriorTensor::new(2, 2, 2, vec![0.3, 0.7, 0.3, 0.7, 0.6, 0.4, 0.6, 0.4]).unwrap();
        assert!(total_correlation_exact(&constant, &[0, 1]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn residual_closed_forms() {
        let t = trio();
        assert!(identity_residual(&t, &[0, 1]).unwrap().abs() < 1e-15);
        for i in 0..3 {
            assert!(identity_residual(&t, &[i]).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn candidate_entropy_matches_absorbed_entropy() {
        let t = trio();
        let mut state = JointConfigState::new(2);
        state.absorb(&t, 0);
        let mut scratch = vec![0.0; 2];
        let predicted = state.candidate_entropy(&t, 2, &mut scratch);
        state.absorb(&t, 2);
        assert!((predicted - state.entropy()).abs() < 1e-15);
    }
}
