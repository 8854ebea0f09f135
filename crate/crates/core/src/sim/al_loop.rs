//! The acquire → label → retrain cycle.

use std::collections::HashSet;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{make_dataset, BlobSpec, Dataset};
use super::idx::load_idx_with_classes;
use super::model::{accuracy, posterior_predict, train_model, ModelSpec};
use crate::acquisition::{select, SelectionFlag, Strategy, StrategyParams};
use crate::error::{Error, Result};

/// Where the simulation data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Blobs(BlobSpec),
    /// IDX image/label files. The test split is either a second file pair
    /// or the last `holdout` points of the training files.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        limit: Option<usize>,
        #[serde(default = "ten")]
        classes: usize,
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        #[serde(default)]
        test_limit: Option<usize>,
        #[serde(default)]
        holdout: Option<usize>,
    },
}

fn ten() -> usize {
    10
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSource::Blobs(spec) => make_dataset(spec),
            DatasetSource::Idx {
                images,
                labels,
                limit,
                classes,
                test_images,
                test_labels,
                test_limit,
                holdout,
            } => {
                let train = load_idx_with_classes(images, labels, *limit, *classes)?;
                match (test_images, test_labels, holdout) {
                    (Some(ti), Some(tl), None) => {
                        let test = load_idx_with_classes(ti, tl, *test_limit, *classes)?;
                        train.with_test_set(&test)
                    }
                    (None, None, Some(h)) => train.with_holdout(*h),
                    _ => Err(Error::InvalidSpec(
                        "idx source needs either test_images + test_labels or holdout".into(),
                    )),
                }
            }
        }
    }

    /// Input files whose contents determine the dataset.
    pub fn input_files(&self) -> Vec<PathBuf> {
        match self {
            DatasetSource::Blobs(_) => Vec::new(),
            DatasetSource::Idx {
                images,
                labels,
                test_images,
                test_labels,
                ..
            } => [Some(images), Some(labels), test_images.as_ref(), test_labels.as_ref()]
                .into_iter()
                .flatten()
                .cloned()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub strategy: Strategy,
    #[serde(default)]
    pub params: StrategyParams,
}

impl From<Strategy> for StrategySpec {
    fn from(strategy: Strategy) -> Self {
        Self {
            strategy,
            params: StrategyParams::default(),
        }
    }
}

/// One strategy run over a list of seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub model: ModelSpec,
    pub strategy: StrategySpec,
    /// Size of the class-balanced initial labeled set.
    pub initial: usize,
    pub batch: usize,
    /// Total number of labels, initial set included.
    pub budget: usize,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundEntry {
    /// 0 is the model trained on the initial set only.
    pub round: usize,
    pub labeled_count: usize,
    pub test_accuracy: f64,
    pub acquisition_wall_time_s: f64,
    pub train_wall_time_s: f64,
    /// Dataset indices labeled in this round.
    pub acquired_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub strategy: String,
    pub seed: u64,
    pub rounds: Vec<RoundEntry>,
    pub warnings: Vec<String>,
}

impl RunRecord {
    pub fn final_accuracy(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.test_accuracy)
    }

    /// Mean over acquisition rounds of [`duplicate_pairs`] in the acquired batch.
    pub fn mean_duplicate_pairs(&self, data: &Dataset) -> f64 {
        let batches: Vec<_> = self.rounds.iter().filter(|r| !r.acquired_indices.is_empty()).collect();
        if batches.is_empty() {
            return 0.0;
        }
        let total: usize = batches.iter().map(|r| duplicate_pairs(data, &r.acquired_indices)).sum();
        total as f64 / batches.len() as f64
    }
}

/// Unordered pairs inside `indices` that share a duplicate group.
pub fn duplicate_pairs(data: &Dataset, indices: &[usize]) -> usize {
    let mut count = 0;
    for (a, &i) in indices.iter().enumerate() {
        for &j in &indices[a + 1..] {
            if data.group(i).is_some() && data.group(i) == data.group(j) {
                count += 1;
            }
        }
    }
    count
}

/// SplitMix64 finalizer over a (seed, round, purpose) triple.
fn derive_seed(seed: u64, round: u64, purpose: u64) -> u64 {
    let mut z = seed
        .wrapping_add(round.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(purpose.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const INIT_PURPOSE: u64 = 1;
const MODEL_PURPOSE: u64 = 2;
const SELECT_PURPOSE: u64 = 3;

fn validate(cfg: &RunConfig, data: &Dataset) -> Result<()> {
    let c = data.classes();
    if cfg.initial == 0 || cfg.initial % c != 0 {
        return Err(Error::InvalidSpec(format!(
            "initial size {} must be a positive multiple of the {c} classes",
            cfg.initial
        )));
    }
    if cfg.batch == 0 {
        return Err(Error::InvalidSpec("batch size must be >= 1".into()));
    }
    if cfg.budget < cfg.initial || cfg.budget > data.pool().len() {
        return Err(Error::InvalidSpec(format!(
            "budget {} must lie between the initial size {} and the pool size {}",
            cfg.budget,
            cfg.initial,
            data.pool().len()
        )));
    }
    if data.test().is_empty() {
        return Err(Error::InvalidSpec("dataset has no test points".into()));
    }
    if cfg.seeds.is_empty() {
        return Err(Error::InvalidSpec("at least one seed required".into()));
    }
    Ok(())
}

/// `initial / c` pool points of every class, drawn from the seed.
fn balanced_initial(data: &Dataset, initial: usize, seed: u64) -> Result<Vec<usize>> {
    let per_class = initial / data.classes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(initial);
    for class in 0..data.classes() {
        let mut members: Vec<usize> = data.pool().iter().copied().filter(|&i| data.labels()[i] == class).collect();
        if members.len() < per_class {
            return Err(Error::InvalidSpec(format!(
                "class {class} has {} pool points, {per_class} needed for the initial set",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        chosen.extend_from_slice(&members[..per_class]);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

fn push_unique(warnings: &mut Vec<String>, w: String) {
    if !warnings.contains(&w) {
        warnings.push(w);
    }
}

/// Loads the dataset and runs one seed.
pub fn run_al_loop(cfg: &RunConfig, seed: u64) -> Result<RunRecord> {
    let data = cfg.dataset.load()?;
    run_al_loop_on(cfg, &data, seed)
}

/// Runs one seed on an already loaded dataset.
///
/// Round `r` trains from scratch on the current labels, scores the remaining
/// pool with that model, labels the selected batch, retrains and evaluates.
/// When `budget − initial` is not a multiple of the batch size the last
/// batch is smaller and a `BudgetNotDivisible` warning is recorded.
pub fn run_al_loop_on(cfg: &RunConfig, data: &Dataset, seed: u64) -> Result<RunRecord> {
    validate(cfg, data)?;
    let mut warnings = Vec::new();
    let extra = cfg.budget - cfg.initial;
    if extra % cfg.batch != 0 {
        warnings.push(format!(
            "BudgetNotDivisible: {extra} acquisitions with batch {} leave a final batch of {}",
            cfg.batch,
            extra % cfg.batch
        ));
    }
    let n_rounds = extra.div_ceil(cfg.batch);

    let mut labeled = balanced_initial(data, cfg.initial, derive_seed(seed, 0, INIT_PURPOSE))?;
    let taken: HashSet<usize> = labeled.iter().copied().collect();
    let mut pool: Vec<usize> = data.pool().iter().copied().filter(|i| !taken.contains(i)).collect();

    let train = |labeled: &[usize], round: usize, warnings: &mut Vec<String>| -> Result<_> {
        let spec = ModelSpec {
            seed: derive_seed(seed, round as u64, MODEL_PURPOSE),
            ..cfg.model.clone()
        };
        let start = Instant::now();
        let model = train_model(data, labeled, &spec)?;
        let elapsed = start.elapsed().as_secs_f64();
        for w in &model.warnings {
            push_unique(warnings, w.clone());
        }
        Ok((model, elapsed))
    };

    let (mut model, train_time) = train(&labeled, 0, &mut warnings)?;
    let mut rounds = vec![RoundEntry {
        round: 0,
        labeled_count: labeled.len(),
        test_accuracy: accuracy(&model, data, data.test())?,
        acquisition_wall_time_s: 0.0,
        train_wall_time_s: train_time,
        acquired_indices: Vec::new(),
    }];

    for round in 1..=n_rounds {
        let b = cfg.batch.min(cfg.budget - labeled.len());
        let start = Instant::now();
        let tensor = posterior_predict(&model, &data.gather(&pool))?;
        let params = StrategyParams {
            seed: derive_seed(seed, round as u64, SELECT_PURPOSE),
            ..cfg.strategy.params
        };
        let batch = select(&tensor, cfg.strategy.strategy, b, &params)?;
        let acquisition_time = start.elapsed().as_secs_f64();
        for flag in &batch.flags {
            if let SelectionFlag::AllScoresZero { .. } = flag {
                push_unique(&mut warnings, format!("AllScoresZero in round {round}"));
            }
        }

        let acquired: Vec<usize> = batch.indices.iter().map(|&p| pool[p]).collect();
        let picked: HashSet<usize> = batch.indices.iter().copied().collect();
        pool = pool
            .into_iter()
            .enumerate()
            .filter(|(p, _)| !picked.contains(p))
            .map(|(_, i)| i)
            .collect();
        labeled.extend_from_slice(&acquired);

        let (next, train_time) = train(&labeled, round, &mut warnings)?;
        model = next;
        rounds.push(RoundEntry {
            round,
            labeled_count: labeled.len(),
            test_accuracy: accuracy(&model, data, data.test())?,
            acquisition_wall_time_s: acquisition_time,
            train_wall_time_s: train_time,
            acquired_indices: acquired,
        });
    }

    Ok(RunRecord {
        strategy: cfg.strategy.strategy.label().to_string(),
        seed,
        rounds,
        warnings,
    })
}

/// Runs every seed of the config in order.
pub fn run_seeds(cfg: &RunConfig) -> Result<Vec<RunRecord>> {
    let data = cfg.dataset.load()?;
    cfg.seeds.iter().map(|&s| run_al_loop_on(cfg, &data, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(repeat: usize) -> DatasetSource {
        DatasetSource::Blobs(BlobSpec {
            classes: 2,
            dims: 2,
            per_class: 30,
            test_per_class: 20,
            noise: 0.8,
            repeat,
            seed: 3,
            ..BlobSpec::default()
        })
    }

    fn config(strategy: Strategy, initial: usize, batch: usize, budget: usize) -> RunConfig {
        RunConfig {
            dataset: blobs(1),
            model: ModelSpec {
                epochs: 40,
                members: 3,
                ..ModelSpec::default()
            },
            strategy: strategy.into(),
            initial,
            batch,
            budget,
            seeds: vec![0],
        }
    }

    #[test]
    fn round_arithmetic() {
        let rec = run_al_loop(&config(Strategy::Bald, 10, 10, 50), 0).unwrap();
        assert_eq!(rec.rounds.len(), 5);
        let counts: Vec<_> = rec.rounds.iter().map(|r| r.labeled_count).collect();
        assert_eq!(counts, vec![10, 20, 30, 40, 50]);
        assert!(rec.warnings.is_empty());
        assert!(rec.rounds.iter().all(|r| (0.0..=1.0).contains(&r.test_accuracy)));
    }

    #[test]
    fn labeled_and_pool_stay_disjoint() {
        let rec = run_al_loop(&config(Strategy::Lbb, 4, 7, 40), 1).unwrap();
        let mut seen = HashSet::new();
        for r in &rec.rounds {
            for &i in &r.acquired_indices {
                assert!(seen.insert(i), "index {i} acquired twice");
            }
        }
        assert_eq!(seen.len(), 36);
        assert_eq!(rec.rounds.last().unwrap().labeled_count, 40);
        assert!(rec.warnings.iter().any(|w| w.starts_with("BudgetNotDivisible")));
    }

    #[test]
    fn random_runs_are_reproducible() {
        let cfg = config(Strategy::Random, 4, 5, 24);
        let a = run_al_loop(&cfg, 9).unwrap();
        let b = run_al_loop(&cfg, 9).unwrap();
        let acc = |r: &RunRecord| r.rounds.iter().map(|e| e.test_accuracy.to_bits()).collect::<Vec<_>>();
        assert_eq!(acc(&a), acc(&b));
        assert_eq!(
            a.rounds.iter().map(|r| &r.acquired_indices).collect::<Vec<_>>(),
            b.rounds.iter().map(|r| &r.acquired_indices).collect::<Vec<_>>()
        );
    }

    #[test]
    fn invalid_configs() {
        assert!(run_al_loop(&config(Strategy::Bald, 5, 10, 50), 0).is_err());
        assert!(run_al_loop(&config(Strategy::Bald, 10, 10, 5000), 0).is_err());
        assert!(run_al_loop(&config(Strategy::Bald, 10, 0, 50), 0).is_err());
    }

    #[test]
    fn counts_duplicate_pairs() {
        let data = blobs(4).load().unwrap();
        assert_eq!(duplicate_pairs(&data, &[0, 1, 2, 3]), 6);
        assert_eq!(duplicate_pairs(&data, &[0, 4, 8]), 0);
        assert_eq!(duplicate_pairs(&data, &[0, 1, 4, 5]), 2);
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = config(Strategy::PowerLbb, 10, 10, 30);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        let minimal: RunConfig = serde_json::from_str(
            r#"{"dataset":{"kind":"blobs","classes":3},"strategy":{"strategy":"lbb"},"initial":3,"batch":1,"budget":5,"seeds":[1]}"#,
        )
        .unwrap();
        assert_eq!(minimal.model, ModelSpec::default());
    }
}
