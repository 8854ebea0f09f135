//! Pairwise mutual information between pool outputs and the pairwise
//! approximation of total correlation.
//!
//! For points `i`, `l` the joint over class pairs is
//! `J[a, b] = (1/k) Σ_t p(a | x_i, θ_t) p(b | x_l, θ_t)` and
//! `I(y_i; y_l) = Σ_{a,b} J[a,b] (ln J[a,b] - ln p̄_i[a] - ln p̄_l[b])`.
//! The full `c × c` class-pair sum is evaluated for every point pair.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::info::ln_floor;
use crate::tensor::PosteriorTensor;

/// Largest pool for which the full `n × n` matrix is materialized by default.
pub const DEFAULT_FULL_MATRIX_CAP: usize = 4096;

/// Precomputed floored logs of the predictive mean, shared by all pair evaluations.
#[derive(Debug, Clone)]
pub struct PairwiseContext<'a> {
    tensor: &'a PosteriorTensor,
    log_mean: Vec<f64>,
}

impl<'a> PairwiseContext<'a> {
    pub fn new(tensor: &'a PosteriorTensor) -> Self {
        let mean = tensor.predictive_mean();
        let log_mean = mean.as_slice().iter().map(|&p| ln_floor(p)).collect();
        Self { tensor, log_mean }
    }

    pub fn tensor(&self) -> &PosteriorTensor {
        self.tensor
    }

    /// `I(y_i; y_l)` without index checks. The pair is evaluated in
    /// canonical `(min, max)` order so that every code path sees the same bits.
    #[inline]
    pub fn mi_unchecked(&self, i: usize, l: usize, joint: &mut [f64]) -> f64 {
        let (a, b) = if i <= l { (i, l) } else { (l, i) };
        self.mi_ordered(a, b, joint)
    }

    fn mi_ordered(&self, i: usize, l: usize, joint: &mut [f64]) -> f64 {
        let t = self.tensor;
        let (k, c) = (t.members(), t.classes());
        joint.fill(0.0);
        for member in 0..k {
            let pi = t.row(i, member);
            let pl = t.row(l, member);
            for (a, &pa) in pi.iter().enumerate() {
                let row = &mut joint[a * c..(a + 1) * c];
                for (slot, &pb) in row.iter_mut().zip(pl) {
                    *slot += pa * pb;
                }
            }
        }
        let kf = k as f64;
        let log_i = &self.log_mean[i * c..(i + 1) * c];
        let log_l = &self.log_mean[l * c..(l + 1) * c];
        let mut mi = 0.0;
        for a in 0..c {
            for b in 0..c {
                let q = joint[a * c + b] / kf;
                if q > 0.0 {
                    mi += q * (ln_floor(q) - log_i[a] - log_l[b]);
                }
            }
        }
        mi
    }

    /// `I(y_i; y_l)` for every candidate against one fixed point.
    pub fn mi_against(&self, fixed: usize, candidates: &[usize]) -> Vec<f64> {
        let c = self.tensor.classes();
        candidates
            .par_iter()
            .map_init(
                || vec![0.0; c * c],
                |joint, &x| {
                    if x == fixed {
                        0.0
                    } else {
                        self.mi_unchecked(x, fixed, joint)
                    }
                },
            )
            .collect()
    }
}

/// `I(y_i; y_j)` in nats.
pub fn pairwise_mi(tensor: &PosteriorTensor, i: usize, j: usize) -> Result<f64> {
    tensor.check_index(i)?;
    tensor.check_index(j)?;
    if i == j {
        return Err(Error::SelfPair(i));
    }
    let ctx = PairwiseContext::new(tensor);
    let c = tensor.classes();
    Ok(ctx.mi_unchecked(i, j, &mut vec![0.0; c * c]))
}

/// Dense tile of pairwise MI values; entries on the diagonal are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MiTile {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
    /// Row-major `rows.len() × cols.len()`.
    pub values: Vec<f64>,
}

impl MiTile {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let width = self.cols.len();
        self.values[(i - self.rows.start) * width + (j - self.cols.start)]
    }
}

fn check_range(tensor: &PosteriorTensor, r: &Range<usize>) -> Result<()> {
    if r.start > r.end {
        return Err(Error::InvalidSpec(format!("empty or reversed range {r:?}")));
    }
    if r.end > tensor.pool_size() {
        return Err(Error::IndexOutOfRange {
            index: r.end - 1,
            n: tensor.pool_size(),
        });
    }
    Ok(())
}

/// Pairwise MI between every point of `rows` and every point of `cols`.
pub fn pairwise_mi_block(tensor: &PosteriorTensor, rows: Range<usize>, cols: Range<usize>) -> Result<MiTile> {
    check_range(tensor, &rows)?;
    check_range(tensor, &cols)?;
    let ctx = PairwiseContext::new(tensor);
    Ok(block_with(&ctx, rows, cols))
}

fn block_with(ctx: &PairwiseContext<'_>, rows: Range<usize>, cols: Range<usize>) -> MiTile {
    let c = ctx.tensor.classes();
    let width = cols.len();
    let mut values = vec![0.0; rows.len() * width];
    values
        .par_chunks_mut(width.max(1))
        .zip(rows.clone().into_par_iter())
        .for_each_init(
            || vec![0.0; c * c],
            |joint, (out, i)| {
                for (slot, j) in out.iter_mut().zip(cols.clone()) {
                    *slot = if i == j { 0.0 } else { ctx.mi_unchecked(i, j, joint) };
                }
            },
        );
    MiTile { rows, cols, values }
}

/// Symmetric `n × n` pairwise MI matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMiMatrix {
    n: usize,
    values: Vec<f64>,
}

impl PairwiseMiMatrix {
    /// Materializes the full matrix; fails when `n` exceeds `cap`.
    pub fn compute(tensor: &PosteriorTensor, cap: usize) -> Result<Self> {
        let n = tensor.pool_size();
        if n > cap {
            return Err(Error::PoolTooLarge { n, cap });
        }
        let ctx = PairwiseContext::new(tensor);
        Ok(Self::compute_with(&ctx))
    }

    pub(crate) fn compute_with(ctx: &PairwiseContext<'_>) -> Self {
        let n = ctx.tensor.pool_size();
        let c = ctx.tensor.classes();
        // Upper triangle row by row, then mirrored.
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map_init(
                || vec![0.0; c * c],
                |joint, i| ((i + 1)..n).map(|j| ctx.mi_unchecked(i, j, joint)).collect(),
            )
            .collect();
        let mut values = vec![0.0; n * n];
        for (i, row) in upper.iter().enumerate() {
            for (offset, &v) in row.iter().enumerate() {
                let j = i + 1 + offset;
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Self { n, values }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn write_to<W: std::io::Write>(&self, writer: W) -> Result<()> {
        crate::tensor::write_matrix(writer, self.n, self.n, &self.values)
    }
}

pub(crate) fn check_subset(tensor: &PosteriorTensor, subset: &[usize]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for &i in subset {
        tensor.check_index(i)?;
        if !seen.insert(i) {
            return Err(Error::DuplicateIndex(i));
        }
    }
    Ok(())
}

/// `Ĉ = Σ_i Σ_{j≠i} I(y_i; y_j)` over ordered pairs, so each unordered pair counts twice.
pub fn total_correlation_pairwise(tensor: &PosteriorTensor, subset: &[usize]) -> Result<f64> {
    check_subset(tensor, subset)?;
    if subset.is_empty() {
        return Err(Error::EmptyInput("subset".into()));
    }
    let ctx = PairwiseContext::new(tensor);
    let c = tensor.classes();
    let mut joint = vec![0.0; c * c];
    let mut total = 0.0;
    for &i in subset {
        for &j in subset {
            if i != j {
                total += ctx.mi_unchecked(i, j, &mut joint);
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MI_13: f64 = 0.130_812_035_941_136_96;

    /// dup, dup, then a point that only partially agrees with the dup members.
    fn trio() -> PosteriorTensor {
        let probs = vec![
            1.0, 0.0, 0.0, 1.0, //
            1.0, 0.0, 0.0, 1.0, //
            0.75, 0.25, 0.25, 0.75,
        ];
        PosteriorTensor::new(3, 2, 2, probs).unwrap()
    }

    #[test]
    fn perfectly_correlated_pair() {
        let mi = pairwise_mi(&trio(), 0, 1).unwrap();
        assert!((mi - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn member_constant_point_is_independent() {
        let t = PosteriorTensor::new(2, 2, 2, vec![1.0, 0.0, 0.0, 1.0, 0.3, 0.7, 0.3, 0.7]).unwrap();
        assert!(pairwise_mi(&t, 0, 1).unwrap().abs() < 1e-15);
    }

    #[test]
    fn partial_agreement_pair() {
        let mi = pairwise_mi(&trio(), 0, 2).unwrap();
        assert!((mi - MI_13).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let t = trio();
        assert!(matches!(pairwise_mi(&t, 1, 1), Err(Error::SelfPair(1))));
        assert!(matches!(pairwise_mi(&t, 0, 3), Err(Error::IndexOutOfRange { index: 3, n: 3 })));
        assert!(matches!(total_correlation_pairwise(&t, &[0, 2, 0]), Err(Error::DuplicateIndex(0))));
    }

    #[test]
    fn blocks_match_pairs() {
        let t = trio();
        let one = pairwise_mi_block(&t, 0..1, 2..3).unwrap();
        assert_eq!(one.values, vec![pairwise_mi(&t, 0, 2).unwrap()]);

        let full = pairwise_mi_block(&t, 0..3, 0..3).unwrap();
        let ln2 = 2f64.ln();
        let expected = [0.0, ln2, MI_13, ln2, 0.0, MI_13, MI_13, MI_13, 0.0];
        for (v, e) in full.values.iter().zip(expected) {
            assert!((v - e).abs() < 1e-12);
        }
        let m = PairwiseMiMatrix::compute(&t, 16).unwrap();
        assert_eq!(m.as_slice(), full.values.as_slice());
        assert!(matches!(PairwiseMiMatrix::compute(&t, 2), Err(Error::PoolTooLarge { .. })));
    }

    #[test]
    fn pairwise_total_correlation_examples() {
        let t = trio();
        assert_eq!(total_correlation_pairwise(&t, &[2]).unwrap(), 0.0);
        let c01 = total_correlation_pairwise(&t, &[0, 1]).unwrap();
        assert!((c01 - 2.0 * 2f64.ln()).abs() < 1e-12);
        let c02 = total_correlation_pairwise(&t, &[0, 2]).unwrap();
        assert!((c02 - 2.0 * MI_13).abs() < 1e-12);
    }
}
