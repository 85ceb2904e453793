//! Sparse datasets, libsvm text I/O, synthetic data and model files.
//!
//! libsvm lines look like `label idx:val idx:val ...` with indices strictly
//! increasing. Labels `+1`/`1` map to positive, `-1`/`0` to negative. A `#`
//! starts a comment.
//!
//! Model files are `d <dim>` followed by one `idx weight` line per nonzero
//! weight, 0-based indices, weights printed with 17 significant digits.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::trainer::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    /// `-1.0` or `+1.0`.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Label::Negative => -1.0,
            Label::Positive => 1.0,
        }
    }
}

/// One row of the design matrix with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseExample {
    indices: Vec<u32>,
    values: Vec<f64>,
    label: Label,
}

impl SparseExample {
    /// Builds an example; indices must be strictly increasing and values finite and nonzero.
    pub fn new(indices: Vec<u32>, values: Vec<f64>, label: Label) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::InvalidConfig(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("indices not strictly increasing".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v == 0.0) {
            return Err(Error::InvalidConfig(format!("stored value {v} must be finite and nonzero")));
        }
        Ok(SparseExample {
            indices,
            values,
            label,
        })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&j| j as usize).zip(self.values.iter().copied())
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.iter().map(|(j, x)| weights[j] * x).sum()
    }

    fn max_index(&self) -> Option<usize> {
        self.indices.last().map(|&j| j as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<SparseExample>,
    dims: usize,
}

impl Dataset {
    pub fn new(examples: Vec<SparseExample>, dims: usize) -> Result<Self> {
        let ds = Dataset { examples, dims };
        if let Some(index) = ds.max_index() {
            if index >= dims {
                return Err(Error::DimensionMismatch { index, dims });
            }
        }
        Ok(ds)
    }

    /// Appends `x`, which must fit within the dimensionality.
    pub fn push(&mut self, x: SparseExample) -> Result<()> {
        if let Some(&last) = x.indices().last() {
            if last as usize >= self.dims {
                return Err(Error::DimensionMismatch {
                    index: last as usize,
                    dims: self.dims,
                });
            }
        }
        self.examples.push(x);
        Ok(())
    }

    pub fn examples(&self) -> &[SparseExample] {
        &self.examples
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.examples.iter().filter_map(SparseExample::max_index).max()
    }

    /// Mean number of stored values per example.
    pub fn p_mean(&self) -> f64 {
        if self.examples.is_empty() {
            return 0.0;
        }
        let nnz: usize = self.examples.iter().map(SparseExample::nnz).sum();
        nnz as f64 / self.examples.len() as f64
    }

    pub fn positive_fraction(&self) -> f64 {
        if self.examples.is_empty() {
            return 0.0;
        }
        let pos = self
            .examples
            .iter()
            .filter(|e| e.label == Label::Positive)
            .count();
        pos as f64 / self.examples.len() as f64
    }
}

/// Index base used in libsvm files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndexBase {
    Zero,
    #[default]
    One,
}

impl IndexBase {
    pub fn offset(self) -> u64 {
        match self {
            IndexBase::Zero => 0,
            IndexBase::One => 1,
        }
    }
}

fn parse_label(tok: &str, line: usize) -> Result<Label> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(line, format!("bad label {tok:?}")))?;
    if v == 1.0 {
        Ok(Label::Positive)
    } else if v == -1.0 || v == 0.0 {
        Ok(Label::Negative)
    } else {
        Err(Error::parse(line, format!("label {tok:?} not in {{-1, +1, 0, 1}}")))
    }
}

/// Reads a libsvm/svmlight file.
///
/// `dims` fixes the dimensionality; otherwise it is the largest index plus one.
/// Explicit zero values are dropped.
pub fn parse_libsvm<R: BufRead>(reader: R, base: IndexBase, dims: Option<usize>) -> Result<Dataset> {
    let mut examples = Vec::new();
    let mut max_index: Option<usize> = None;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label = parse_label(tokens.next().unwrap_or_default(), lineno)?;
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut last: Option<u64> = None;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(lineno, format!("expected idx:val, got {tok:?}")))?;
            let raw: u64 = idx
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad feature index {idx:?}")))?;
            if raw < base.offset() {
                return Err(Error::parse(lineno, format!("feature index {raw} below index base")));
            }
            let j = raw - base.offset();
            if j > u32::MAX as u64 {
                return Err(Error::parse(lineno, format!("feature index {raw} too large")));
            }
            if last.is_some_and(|prev| j <= prev) {
                return Err(Error::parse(lineno, format!("feature index {raw} not increasing")));
            }
            last = Some(j);
            let v: f64 = val
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad feature value {val:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(lineno, format!("non-finite feature value {val:?}")));
            }
            if let Some(d) = dims {
                if j as usize >= d {
                    return Err(Error::DimensionMismatch {
                        index: j as usize,
                        dims: d,
                    });
                }
            }
            if v != 0.0 {
                indices.push(j as u32);
                values.push(v);
            }
        }
        if let Some(j) = last {
            max_index = max_index.max(Some(j as usize));
        }
        examples.push(SparseExample {
            indices,
            values,
            label,
        });
    }
    let dims = dims.unwrap_or_else(|| max_index.map_or(0, |j| j + 1));
    Dataset::new(examples, dims)
}

pub fn write_libsvm<W: Write>(dataset: &Dataset, mut out: W, base: IndexBase) -> Result<()> {
    let mut line = String::new();
    for ex in dataset.examples() {
        line.clear();
        line.push_str(match ex.label {
            Label::Positive => "+1",
            Label::Negative => "-1",
        });
        for (j, v) in ex.iter() {
            write!(line, " {}:{}", j as u64 + base.offset(), v).expect("write to String");
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// A synthetic dataset and the weights its labels were drawn from.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub true_weights: Vec<f64>,
}

/// Draws `n` examples with exactly `p` distinct features each, values in
/// `[0.5, 1.5]`, and labels `~ Bernoulli(sigmoid(w . x))` for a random
/// sparse `w` with `ceil(weight_sparsity * d)` standard-normal entries.
pub fn generate_synthetic(n: usize, d: usize, p: usize, weight_sparsity: f64, seed: u64) -> Synthetic {
    assert!(p >= 1 && p <= d, "need 1 <= p <= d, got p = {p}, d = {d}");
    assert!(
        (0.0..=1.0).contains(&weight_sparsity),
        "weight_sparsity must lie in [0, 1]"
    );
    assert!(d <= u32::MAX as usize + 1, "dimensionality exceeds u32 indices");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let support = ((weight_sparsity * d as f64).ceil() as usize).min(d);
    let mut true_weights = vec![0.0; d];
    for j in index::sample(&mut rng, d, support) {
        true_weights[j] = StandardNormal.sample(&mut rng);
    }

    let value_dist = Uniform::new_inclusive(0.5, 1.5).expect("valid range");
    let mut examples = Vec::with_capacity(n);
    for _ in 0..n {
        let mut indices: Vec<u32> = index::sample(&mut rng, d, p)
            .into_iter()
            .map(|j| j as u32)
            .collect();
        indices.sort_unstable();
        let values: Vec<f64> = (0..p).map(|_| value_dist.sample(&mut rng)).collect();
        let margin: f64 = indices
            .iter()
            .zip(&values)
            .map(|(&j, v)| true_weights[j as usize] * v)
            .sum();
        let label = if rng.random::<f64>() < sigmoid(margin) {
            Label::Positive
        } else {
            Label::Negative
        };
        examples.push(SparseExample {
            indices,
            values,
            label,
        });
    }
    Synthetic {
        dataset: Dataset { examples, dims: d },
        true_weights,
    }
}

/// A trained dense weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    weights: Vec<f64>,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>) -> Self {
        LinearModel { weights }
    }

    pub fn zeros(dims: usize) -> Self {
        LinearModel {
            weights: vec![0.0; dims],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn dims(&self) -> usize {
        self.weights.len()
    }

    pub fn nonzeros(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }

    /// Probability of the positive class.
    pub fn predict(&self, x: &SparseExample) -> Result<f64> {
        if let Some(index) = x.max_index() {
            if index >= self.dims() {
                return Err(Error::DimensionMismatch {
                    index,
                    dims: self.dims(),
                });
            }
        }
        Ok(sigmoid(x.dot(&self.weights)))
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let mut text = format!("d {}\n", self.dims());
        for (j, w) in self.weights.iter().enumerate() {
            if *w != 0.0 {
                assert!(w.is_finite(), "non-finite weight at {j}");
                writeln!(text, "{j} {w:.16e}").expect("write to String");
            }
        }
        out.write_all(text.as_bytes())?;
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let dims = loop {
            match lines.next() {
                None => return Err(Error::parse(1, "missing \"d <dim>\" header")),
                Some((i, line)) => {
                    let line = line?;
                    let trimmed = line.trim();
                    if trimmed.is_empty() {
                        continue;
                    }
                    let dim = trimmed
                        .strip_prefix("d ")
                        .and_then(|d| d.trim().parse::<usize>().ok())
                        .ok_or_else(|| Error::parse(i + 1, format!("bad header {trimmed:?}")))?;
                    break dim;
                }
            }
        };
        let mut weights = vec![0.0; dims];
        let mut seen = vec![false; dims];
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let mut parts = trimmed.split_whitespace();
            let (Some(idx), Some(val), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::parse(lineno, format!("expected \"idx weight\", got {trimmed:?}")));
            };
            let j: usize = idx
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad index {idx:?}")))?;
            let w: f64 = val
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad weight {val:?}")))?;
            if !w.is_finite() {
                return Err(Error::parse(lineno, format!("non-finite weight {val:?}")));
            }
            if j >= dims {
                return Err(Error::DimensionMismatch { index: j, dims });
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::parse(lineno, format!("duplicate index {j}")));
            }
            weights[j] = w;
        }
        Ok(LinearModel { weights })
    }
}
