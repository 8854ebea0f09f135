//! Single-hidden-layer softmax MLPs used as posterior samplers: either an
//! ensemble of independently initialized networks or one network evaluated
//! under fresh dropout masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tensor::PosteriorTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ensemble,
    McDropout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Ensemble members, or stochastic forward passes for MC dropout.
    pub members: usize,
    pub hidden: usize,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Off by default. When set, this fraction of the labeled set is held out
    /// and the parameters with the best held-out accuracy are kept.
    pub validation_fraction: Option<f64>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::Ensemble,
            members: 5,
            hidden: 32,
            dropout_rate: 0.5,
            epochs: 200,
            learning_rate: 0.01,
            seed: 0,
            validation_fraction: None,
        }
    }
}

impl ModelSpec {
    fn validate(&self) -> Result<()> {
        if self.members == 0 || self.hidden == 0 || self.epochs == 0 {
            return Err(Error::InvalidSpec("members, hidden and epochs must be positive".into()));
        }
        if self.kind == ModelKind::McDropout && !(self.dropout_rate > 0.0 && self.dropout_rate < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "dropout rate must lie in (0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidSpec("learning rate must be positive".into()));
        }
        if let Some(f) = self.validation_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidSpec("validation fraction must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }
}

/// `softmax(W2 · relu(W1 x + b1) + b2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    inputs: usize,
    hidden: usize,
    classes: usize,
    /// `hidden × inputs`, then `hidden`, then `classes × hidden`, then `classes`.
    params: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    fn glorot<R: Rng>(inputs: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        let mut params = vec![0.0; hidden * inputs + hidden + classes * hidden + classes];
        let l1 = (6.0 / (inputs + hidden) as f64).sqrt();
        let l2 = (6.0 / (hidden + classes) as f64).sqrt();
        let (w1, rest) = params.split_at_mut(hidden * inputs);
        let (_, rest) = rest.split_at_mut(hidden);
        let (w2, _) = rest.split_at_mut(classes * hidden);
        for w in w1.iter_mut() {
            *w = rng.random_range(-l1..l1);
        }
        for w in w2.iter_mut() {
            *w = rng.random_range(-l2..l2);
        }
        Self {
            inputs,
            hidden,
            classes,
            params,
        }
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.inputs;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.classes * self.hidden;
        (b1, w2, b2)
    }

    /// Forward pass; `mask` holds per-hidden-unit multipliers (already scaled).
    fn forward(&self, x: &[f64], mask: Option<&[f64]>, hidden: &mut [f64], probs: &mut [f64]) {
        let (ob1, ow2, ob2) = self.offsets();
        let p = &self.params;
        for h in 0..self.hidden {
            let w = &p[h * self.inputs..(h + 1) * self.inputs];
            let z = p[ob1 + h] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            let a = z.max(0.0);
            hidden[h] = mask.map_or(a, |m| a * m[h]);
        }
        let mut max = f64::NEG_INFINITY;
        for c in 0..self.classes {
            let w = &p[ow2 + c * self.hidden..ow2 + (c + 1) * self.hidden];
            let z = p[ob2 + c] + w.iter().zip(hidden.iter()).map(|(a, b)| a * b).sum::<f64>();
            probs[c] = z;
            max = max.max(z);
        }
        let mut total = 0.0;
        for v in probs.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in probs.iter_mut() {
            *v /= total;
        }
    }

    /// Accumulates the cross-entropy gradient of one example into `grad`.
    fn backward(&self, x: &[f64], label: usize, mask: Option<&[f64]>, hidden: &mut [f64], probs: &mut [f64], grad: &mut [f64]) {
        self.forward(x, mask, hidden, probs);
        let (ob1, ow2, ob2) = self.offsets();
        for c in 0..self.classes {
            let delta = probs[c] - if c == label { 1.0 } else { 0.0 };
            grad[ob2 + c] += delta;
            for h in 0..self.hidden {
                grad[ow2 + c * self.hidden + h] += delta * hidden[h];
            }
        }
        for h in 0..self.hidden {
            // relu'(z) is 1 exactly where the unmasked activation is positive.
            if hidden[h] <= 0.0 {
                continue;
            }
            let mut back = 0.0;
            for c in 0..self.classes {
                let delta = probs[c] - if c == label { 1.0 } else { 0.0 };
                back += delta * self.params[ow2 + c * self.hidden + h];
            }
            let back = mask.map_or(back, |m| back * m[h]);
            grad[ob1 + h] += back;
            let row = &mut grad[h * self.inputs..(h + 1) * self.inputs];
            for (g, &xi) in row.iter_mut().zip(x) {
                *g += back * xi;
            }
        }
    }

    fn accuracy(&self, data: &Dataset, indices: &[usize]) -> f64 {
        let mut hidden = vec![0.0; self.hidden];
        let mut probs = vec![0.0; self.classes];
        let correct = indices
            .iter()
            .filter(|&&i| {
                self.forward(data.features(i), None, &mut hidden, &mut probs);
                argmax(&probs) == data.labels()[i]
            })
            .count();
        correct as f64 / indices.len().max(1) as f64
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn dropout_mask<R: Rng>(rate: f64, rng: &mut R, out: &mut [f64]) {
    let scale = 1.0 / (1.0 - rate);
    for m in out.iter_mut() {
        *m = if rng.random::<f64>() < rate { 0.0 } else { scale };
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Full-batch Adam on mean cross-entropy.
fn fit(
    mlp: &mut Mlp,
    data: &Dataset,
    train: &[usize],
    validation: &[usize],
    spec: &ModelSpec,
    dropout: Option<&mut ChaCha8Rng>,
) {
    let mut adam = Adam::new(mlp.params.len());
    let mut grad = vec![0.0; mlp.params.len()];
    let mut hidden = vec![0.0; mlp.hidden];
    let mut probs = vec![0.0; mlp.classes];
    let mut mask = vec![1.0; mlp.hidden];
    let scale = 1.0 / train.len() as f64;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut dropout = dropout;
    for epoch in 0..spec.epochs {
        grad.fill(0.0);
        for &i in train {
            let m = match dropout.as_deref_mut() {
                Some(rng) => {
                    dropout_mask(spec.dropout_rate, rng, &mut mask);
                    Some(mask.as_slice())
                }
                None => None,
            };
            mlp.backward(data.features(i), data.labels()[i], m, &mut hidden, &mut probs, &mut grad);
        }
        grad.iter_mut().for_each(|g| *g *= scale);
        adam.step(&mut mlp.params, &grad, spec.learning_rate);
        if !validation.is_empty() && (epoch % 10 == 9 || epoch + 1 == spec.epochs) {
            let acc = mlp.accuracy(data, validation);
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, mlp.params.clone()));
            }
        }
    }
    if let Some((_, params)) = best {
        mlp.params = params;
    }
}

/// Trained posterior sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    kind: ModelKind,
    networks: Vec<Mlp>,
    passes: usize,
    dropout_rate: f64,
    seed: u64,
    classes: usize,
    dims: usize,
    pub warnings: Vec<String>,
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn networks(&self) -> &[Mlp] {
        &self.networks
    }

    /// Number of posterior samples per input.
    pub fn samples(&self) -> usize {
        self.passes
    }
}

fn member_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const PREDICT_STREAM: u64 = 1 << 32;

/// Trains from scratch on `labeled`; deterministic per `spec.seed`.
///
/// A class missing from the labeled set is not an error; it is recorded in
/// [`Model::warnings`] and the network still predicts over every class.
pub fn train_model(data: &Dataset, labeled: &[usize], spec: &ModelSpec) -> Result<Model> {
    spec.validate()?;
    if labeled.is_empty() {
        return Err(Error::EmptyInput("labeled set".into()));
    }
    let classes = data.classes();
    let mut warnings = Vec::new();
    let mut present = vec![false; classes];
    for &i in labeled {
        present[data.labels()[i]] = true;
    }
    for (c, _) in present.iter().enumerate().filter(|(_, &p)| !p) {
        warnings.push(format!("MissingClass: class {c} has no labeled example"));
    }

    let (train, validation) = match spec.validation_fraction {
        Some(f) if labeled.len() >= 2 => {
            let mut shuffled = labeled.to_vec();
            shuffled.shuffle(&mut member_rng(spec.seed, u64::MAX));
            let held = ((labeled.len() as f64 * f).ceil() as usize).clamp(1, labeled.len() - 1);
            let validation = shuffled.split_off(labeled.len() - held);
            (shuffled, validation)
        }
        _ => (labeled.to_vec(), Vec::new()),
    };

    let dims = data.dims();
    let networks = match spec.kind {
        ModelKind::Ensemble => (0..spec.members as u64)
            .into_par_iter()
            .map(|member| {
                let mut rng = member_rng(spec.seed, member);
                let mut mlp = Mlp::glorot(dims, spec.hidden, classes, &mut rng);
                fit(&mut mlp, data, &train, &validation, spec, None);
                mlp
            })
            .collect(),
        ModelKind::McDropout => {
            let mut rng = member_rng(spec.seed, 0);
            let mut mlp = Mlp::glorot(dims, spec.hidden, classes, &mut rng);
            let mut masks = member_rng(spec.seed, 1);
            fit(&mut mlp, data, &train, &validation, spec, Some(&mut masks));
            vec![mlp]
        }
    };
    Ok(Model {
        kind: spec.kind,
        networks,
        passes: spec.members,
        dropout_rate: spec.dropout_rate,
        seed: spec.seed,
        classes,
        dims,
        warnings,
    })
}

/// Posterior predictive tensor over row-major `inputs` (`n × dims`).
pub fn posterior_predict(model: &Model, inputs: &[f64]) -> Result<PosteriorTensor> {
    let d = model.dims;
    if inputs.is_empty() || inputs.len() % d != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} input values do not form rows of dimension {d}",
            inputs.len()
        )));
    }
    let n = inputs.len() / d;
    let (k, c) = (model.passes, model.classes);
    let mut probs = vec![0.0; n * k * c];
    match model.kind {
        ModelKind::Ensemble => {
            probs.par_chunks_mut(k * c).enumerate().for_each(|(i, block)| {
                let x = &inputs[i * d..(i + 1) * d];
                for (j, net) in model.networks.iter().enumerate() {
                    let mut hidden = vec![0.0; net.hidden];
                    net.forward(x, None, &mut hidden, &mut block[j * c..(j + 1) * c]);
                }
            });
        }
        ModelKind::McDropout => {
            let net = &model.networks[0];
            let mut hidden = vec![0.0; net.hidden];
            let mut mask = vec![1.0; net.hidden];
            for j in 0..k {
                let mut rng = member_rng(model.seed, PREDICT_STREAM + j as u64);
                for i in 0..n {
                    dropout_mask(model.dropout_rate, &mut rng, &mut mask);
                    let start = (i * k + j) * c;
                    net.forward(&inputs[i * d..(i + 1) * d], Some(&mask), &mut hidden, &mut probs[start..start + c]);
                }
            }
        }
    }
    PosteriorTensor::new(n, k, c, probs)
}

/// Fraction of `indices` whose predictive-mean argmax equals the label.
pub fn accuracy(model: &Model, data: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::EmptyInput("evaluation set".into()));
    }
    let tensor = posterior_predict(model, &data.gather(indices))?;
    let mean = tensor.predictive_mean();
    let correct = indices
        .iter()
        .enumerate()
        .filter(|&(row, &i)| mean.argmax(row) == data.labels()[i])
        .count();
    Ok(correct as f64 / indices.len() as f64)
}
