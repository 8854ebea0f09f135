//! Posterior predictive tensor and its reductions.
//!
//! Layout is row-major `[pool, member, class]`: the `k × c` block of one pool
//! point is contiguous, which is what the pairwise and joint kernels stream.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the class-sum of each `(pool, member)` row.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

const DTYPE: &str = "f64";
const ORDER: &str = "pool,member,class";

/// `p(y = c | x_i, θ_j)` for every pool point `i`, posterior sample `j`, class `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTensor {
    n: usize,
    k: usize,
    c: usize,
    probs: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorHeader {
    n: usize,
    k: usize,
    c: usize,
    dtype: String,
    order: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixHeader {
    n: usize,
    m: usize,
    dtype: String,
}

impl PosteriorTensor {
    /// Validates shape and probability invariants.
    pub fn new(n: usize, k: usize, c: usize, probs: Vec<f64>) -> Result<Self> {
        if n == 0 || k == 0 || c < 2 {
            return Err(Error::InvalidShape(format!(
                "need n >= 1, k >= 1, c >= 2 (got n={n}, k={k}, c={c})"
            )));
        }
        let declared = n * k * c;
        if probs.len() != declared {
            return Err(Error::HeaderMismatch {
                declared,
                actual: probs.len(),
            });
        }
        for (row_idx, row) in probs.chunks_exact(c).enumerate() {
            let (pool, member) = (row_idx / k, row_idx % k);
            for (class, &value) in row.iter().enumerate() {
                if !(value >= 0.0) {
                    return Err(Error::NegativeProbability {
                        pool,
                        member,
                        class,
                        value,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::RowSumViolation { pool, member, sum });
            }
        }
        Ok(Self { n, k, c, probs })
    }

    /// Builds a tensor from a per-`(pool, member)` row generator.
    pub fn from_rows<F>(n: usize, k: usize, c: usize, mut row: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Vec<f64>,
    {
        let mut probs = Vec::with_capacity(n * k * c);
        for i in 0..n {
            for j in 0..k {
                let r = row(i, j);
                if r.len() != c {
                    return Err(Error::InvalidShape(format!(
                        "row ({i}, {j}) has {} classes, expected {c}",
                        r.len()
                    )));
                }
                probs.extend_from_slice(&r);
            }
        }
        Self::new(n, k, c, probs)
    }

    pub fn pool_size(&self) -> usize {
        self.n
    }

    pub fn members(&self) -> usize {
        self.k
    }

    pub fn classes(&self) -> usize {
        self.c
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Contiguous `k × c` block of pool point `i`.
    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        let stride = self.k * self.c;
        &self.probs[i * stride..(i + 1) * stride]
    }

    /// Class distribution of pool point `i` under member `j`.
    #[inline]
    pub fn row(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.k + j) * self.c;
        &self.probs[start..start + self.c]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, class: usize) -> f64 {
        self.probs[(i * self.k + j) * self.c + class]
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i < self.n {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: i, n: self.n })
        }
    }

    /// Restricts the tensor to the given pool rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut probs = Vec::with_capacity(rows.len() * self.k * self.c);
        for &i in rows {
            self.check_index(i)?;
            probs.extend_from_slice(self.point(i));
        }
        Ok(Self {
            n: rows.len(),
            k: self.k,
            c: self.c,
            probs,
        })
    }

    /// Predictive mean over members.
    pub fn predictive_mean(&self) -> MeanMatrix {
        let mut values = vec![0.0; self.n * self.c];
        for i in 0..self.n {
            mean_of_point(self, i, &mut values[i * self.c..(i + 1) * self.c]);
        }
        MeanMatrix {
            n: self.n,
            c: self.c,
            values,
        }
    }

    /// Reads the binary format: a JSON header line followed by little-endian f64 values.
    pub fn read_from<R: BufRead>(mut reader: R) -> Result<Self> {
        let mut line = Vec::new();
        reader.read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            return Err(Error::BadHeader("missing newline after header".into()));
        }
        let header: TensorHeader = serde_json::from_slice(&line[..line.len() - 1])
            .map_err(|e| Error::BadHeader(e.to_string()))?;
        if header.dtype != DTYPE {
            return Err(Error::BadHeader(format!("unsupported dtype `{}`", header.dtype)));
        }
        if header.order != ORDER {
            return Err(Error::BadHeader(format!("unsupported order `{}`", header.order)));
        }
        let mut payload = Vec::new();
        reader.read_to_end(&mut payload)?;
        let declared = header.n * header.k * header.c;
        if payload.len() != declared * 8 {
            return Err(Error::HeaderMismatch {
                declared,
                actual: payload.len() / 8,
            });
        }
        let mut probs = vec![0.0; declared];
        LittleEndian::read_f64_into(&payload, &mut probs);
        Self::new(header.n, header.k, header.c, probs)
    }

    pub fn write_to<W: Write>(&self, mut writer: W) -> Result<()> {
        let header = TensorHeader {
            n: self.n,
            k: self.k,
            c: self.c,
            dtype: DTYPE.into(),
            order: ORDER.into(),
        };
        serde_json::to_writer(&mut writer, &header)?;
        writer.write_all(b"\n")?;
        write_f64s(&mut writer, &self.probs)?;
        writer.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file))
    }
}

/// Mean of point `i` over members, written into `out` (length `c`).
#[inline]
pub(crate) fn mean_of_point(tensor: &PosteriorTensor, i: usize, out: &mut [f64]) {
    out.fill(0.0);
    for j in 0..tensor.k {
        for (o, &p) in out.iter_mut().zip(tensor.row(i, j)) {
            *o += p;
        }
    }
    let k = tensor.k as f64;
    for o in out.iter_mut() {
        *o /= k;
    }
}

fn write_f64s<W: Write>(writer: &mut W, values: &[f64]) -> std::io::Result<()> {
    let mut buf = [0u8; 8];
    for &v in values {
        LittleEndian::write_f64(&mut buf, v);
        writer.write_all(&buf)?;
    }
    Ok(())
}

/// Writes an `n × m` matrix in the binary matrix format (header `{"n","m","dtype"}`).
pub fn write_matrix<W: Write>(mut writer: W, n: usize, m: usize, values: &[f64]) -> Result<()> {
    if values.len() != n * m {
        return Err(Error::HeaderMismatch {
            declared: n * m,
            actual: values.len(),
        });
    }
    let header = MatrixHeader {
        n,
        m,
        dtype: DTYPE.into(),
    };
    serde_json::to_writer(&mut writer, &header)?;
    writer.write_all(b"\n")?;
    write_f64s(&mut writer, values)?;
    writer.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix`]; returns `(n, m, values)`.
pub fn read_matrix<R: BufRead>(mut reader: R) -> Result<(usize, usize, Vec<f64>)> {
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::BadHeader("missing newline after header".into()));
    }
    let header: MatrixHeader = serde_json::from_slice(&line[..line.len() - 1])
        .map_err(|e| Error::BadHeader(e.to_string()))?;
    if header.dtype != DTYPE {
        return Err(Error::BadHeader(format!("unsupported dtype `{}`", header.dtype)));
    }
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    let declared = header.n * header.m;
    if payload.len() != declared * 8 {
        return Err(Error::HeaderMismatch {
            declared,
            actual: payload.len() / 8,
        });
    }
    let mut values = vec![0.0; declared];
    LittleEndian::read_f64_into(&payload, &mut values);
    Ok((header.n, header.m, values))
}

/// `n × c` predictive mean; each row is a distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanMatrix {
    n: usize,
    c: usize,
    values: Vec<f64>,
}

impl MeanMatrix {
    pub fn pool_size(&self) -> usize {
        self.n
    }

    pub fn classes(&self) -> usize {
        self.c
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.c..(i + 1) * self.c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Index of the most probable class of row `i` (lowest class on ties).
    pub fn argmax(&self, i: usize) -> usize {
        let row = self.row(i);
        let mut best = 0;
        for (c, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = c;
            }
        }
        best
    }

    /// CSV with header `pool_index,class_0,…`.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        write!(writer, "pool_index")?;
        for c in 0..self.c {
            write!(writer, ",class_{c}")?;
        }
        writeln!(writer)?;
        for i in 0..self.n {
            write!(writer, "{i}")?;
            for v in self.row(i) {
                write!(writer, ",{v}")?;
            }
            writeln!(writer)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Per-pool-point acquisition scores in nats, with the strategy that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub label: String,
    pub values: Vec<f64>,
}

impl ScoreVector {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV with header `pool_index,score`.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "pool_index,score")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(writer, "{i},{v}")?;
        }
        writer.flush()?;
        Ok(())
    }
}
