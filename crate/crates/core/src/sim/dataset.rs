use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaussian blobs: `classes` centers in `dims` dimensions, optionally with
/// every training point repeated `repeat` times under small noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobSpec {
    pub classes: usize,
    pub dims: usize,
    /// Base training points per class (before repetition).
    pub per_class: usize,
    /// Held-out test points per class; never repeated.
    pub test_per_class: usize,
    /// Standard deviation of points around their class center.
    pub noise: f64,
    /// Standard deviation of the class centers around the origin.
    pub center_scale: f64,
    pub repeat: usize,
    /// Noise of the repeated copies; defaults to 5% of the base feature std.
    pub dup_noise: Option<f64>,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            classes: 2,
            dims: 2,
            per_class: 100,
            test_per_class: 0,
            noise: 1.0,
            center_scale: 2.0,
            repeat: 1,
            dup_noise: None,
            seed: 0,
        }
    }
}

/// Labeled points with a pool/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dims: usize,
    labels: Vec<usize>,
    classes: usize,
    pool: Vec<usize>,
    test: Vec<usize>,
    groups: Vec<Option<usize>>,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        dims: usize,
        labels: Vec<usize>,
        classes: usize,
        pool: Vec<usize>,
        test: Vec<usize>,
        groups: Vec<Option<usize>>,
    ) -> Result<Self> {
        let n = labels.len();
        if dims == 0 || features.len() != n * dims {
            return Err(Error::DimensionMismatch(format!(
                "{} feature values for {n} points of dimension {dims}",
                features.len()
            )));
        }
        if groups.len() != n {
            return Err(Error::DimensionMismatch("one duplicate group entry per point required".into()));
        }
        if let Some((item, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes, item });
        }
        let mut seen = vec![false; n];
        for &i in pool.iter().chain(&test) {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidSpec(format!("pool/test split reuses or exceeds index {i}")));
            }
        }
        Ok(Self {
            features,
            dims,
            labels,
            classes,
            pool,
            test,
            groups,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dims..(i + 1) * self.dims]
    }

    /// Indices available for labeling.
    pub fn pool(&self) -> &[usize] {
        &self.pool
    }

    pub fn test(&self) -> &[usize] {
        &self.test
    }

    pub fn group(&self, i: usize) -> Option<usize> {
        self.groups[i]
    }

    pub fn has_groups(&self) -> bool {
        self.groups.iter().any(Option::is_some)
    }

    /// Row-major features of the given points.
    pub fn gather(&self, indices: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(indices.len() * self.dims);
        for &i in indices {
            out.extend_from_slice(self.features(i));
        }
        out
    }

    /// Moves the last `count` pool points (in pool order) to the test split.
    pub fn with_holdout(mut self, count: usize) -> Result<Self> {
        if count >= self.pool.len() {
            return Err(Error::InvalidSpec(format!(
                "holdout of {count} leaves no pool out of {}",
                self.pool.len()
            )));
        }
        let cut = self.pool.len() - count;
        let moved = self.pool.split_off(cut);
        self.test.extend(moved);
        Ok(self)
    }

    /// Appends another dataset's points as test points.
    pub fn with_test_set(mut self, other: &Dataset) -> Result<Self> {
        if other.dims != self.dims {
            return Err(Error::DimensionMismatch(format!(
                "test features have dimension {}, training {}",
                other.dims, self.dims
            )));
        }
        let offset = self.len();
        for i in 0..other.len() {
            if other.labels[i] >= self.classes {
                return Err(Error::LabelOutOfRange {
                    label: other.labels[i],
                    classes: self.classes,
                    item: i,
                });
            }
            self.features.extend_from_slice(other.features(i));
            self.labels.push(other.labels[i]);
            self.groups.push(None);
            self.test.push(offset + i);
        }
        Ok(self)
    }
}

fn validate(spec: &BlobSpec) -> Result<()> {
    let bad = |msg: &str| Err(Error::InvalidSpec(msg.to_string()));
    if spec.classes < 2 {
        return bad("blobs need at least 2 classes");
    }
    if spec.dims == 0 || spec.per_class == 0 {
        return bad("dims and per_class must be positive");
    }
    if spec.repeat == 0 {
        return bad("repeat factor must be >= 1");
    }
    if !(spec.noise >= 0.0) || !(spec.center_scale >= 0.0) || spec.dup_noise.is_some_and(|s| !(s >= 0.0)) {
        return bad("noise levels must be non-negative");
    }
    Ok(())
}

/// Generates a blob dataset; deterministic per `spec.seed`.
///
/// Pool points come first (base point `b`'s copies are contiguous and share
/// group `b` when `repeat > 1`), followed by the test points.
pub fn make_dataset(spec: &BlobSpec) -> Result<Dataset> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let d = spec.dims;
    let centers: Vec<f64> = (0..spec.classes * d)
        .map(|_| spec.center_scale * std_normal.sample(&mut rng))
        .collect();

    let draw = |class: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..d)
            .map(|a| centers[class * d + a] + spec.noise * std_normal.sample(rng))
            .collect()
    };

    let mut base = Vec::with_capacity(spec.classes * spec.per_class * d);
    let mut base_labels = Vec::with_capacity(spec.classes * spec.per_class);
    for class in 0..spec.classes {
        for _ in 0..spec.per_class {
            base.extend(draw(class, &mut rng));
            base_labels.push(class);
        }
    }
    let mut test = Vec::with_capacity(spec.classes * spec.test_per_class * d);
    let mut test_labels = Vec::with_capacity(spec.classes * spec.test_per_class);
    for class in 0..spec.classes {
        for _ in 0..spec.test_per_class {
            test.extend(draw(class, &mut rng));
            test_labels.push(class);
        }
    }

    let (features, labels, groups) = if spec.repeat > 1 {
        let sigma = spec.dup_noise.unwrap_or_else(|| 0.05 * feature_std(&base, d));
        let mut features = Vec::with_capacity(base.len() * spec.repeat);
        let mut labels = Vec::with_capacity(base_labels.len() * spec.repeat);
        let mut groups = Vec::with_capacity(base_labels.len() * spec.repeat);
        for (b, &label) in base_labels.iter().enumerate() {
            for _ in 0..spec.repeat {
                features.extend(base[b * d..(b + 1) * d].iter().map(|&x| x + sigma * std_normal.sample(&mut rng)));
                labels.push(label);
                groups.push(Some(b));
            }
        }
        (features, labels, groups)
    } else {
        let n = base_labels.len();
        (base, base_labels, vec![None; n])
    };

    let n_pool = labels.len();
    let n_test = test_labels.len();
    let mut all_features = features;
    all_features.extend(test);
    let mut all_labels = labels;
    all_labels.extend(test_labels);
    let mut all_groups = groups;
    all_groups.extend(std::iter::repeat_n(None, n_test));
    Dataset::new(
        all_features,
        d,
        all_labels,
        spec.classes,
        (0..n_pool).collect(),
        (n_pool..n_pool + n_test).collect(),
        all_groups,
    )
}

/// Mean over dimensions of the per-dimension standard deviation.
fn feature_std(features: &[f64], d: usize) -> f64 {
    let n = features.len() / d;
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for a in 0..d {
        let mean = (0..n).map(|i| features[i * d + a]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (features[i * d + a] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        total += var.sqrt();
    }
    total / d as f64
}
