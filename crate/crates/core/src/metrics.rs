//! Evaluation metrics for generated audio: Fréchet distance between Gaussian
//! fits of two embedding sets, Inception Score over classifier
//! probabilities, and CLAP score (mean paired audio-text cosine).
//!
//! All arithmetic is 64-bit. Sums run in a fixed order so every result is
//! bit-reproducible, including when Gaussian estimation is spread over
//! threads through a [`BlockExecutor`].

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymmetricEigen};
use crate::similarity::cosine;

/// Ridge added to both covariances when either is near-singular.
pub const DEFAULT_FD_EPS: f64 = 1e-6;
pub const DEFAULT_IS_SPLITS: usize = 10;
/// Probabilities are floored at this value before renormalization.
pub const PROB_FLOOR: f64 = 1e-12;
pub const PROB_SUM_TOL: f64 = 1e-6;
pub const COV_SYMMETRY_TOL: f64 = 1e-10;
/// Rows per partial-sum block in Gaussian estimation.
pub const GAUSSIAN_BLOCK_ROWS: usize = 1024;
/// Blocks handed to the executor at a time; bounds peak memory.
const BLOCKS_PER_WAVE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: Vec<f64>,
    pub cov: Matrix,
    pub n: usize,
}

impl GaussianStats {
    pub fn new(mean: Vec<f64>, cov: Matrix, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewSamples { n, required: 2 });
        }
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: cov.dim(),
            });
        }
        if let Some((row, col)) = cov.asymmetry(COV_SYMMETRY_TOL) {
            return Err(Error::NotSymmetric { row, col });
        }
        Ok(Self { mean, cov, n })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Runs a per-block computation over a batch of row blocks and returns the
/// results in block order. Implementations may run blocks concurrently.
pub trait BlockExecutor {
    fn map_blocks<T, F>(&self, blocks: &[&[T]], f: F) -> Vec<Vec<f64>>
    where
        T: Sync,
        F: Fn(&[T]) -> Vec<f64> + Sync + Send;
}

pub struct Sequential;

impl BlockExecutor for Sequential {
    fn map_blocks<T, F>(&self, blocks: &[&[T]], f: F) -> Vec<Vec<f64>>
    where
        T: Sync,
        F: Fn(&[T]) -> Vec<f64> + Sync + Send,
    {
        blocks.iter().map(|b| f(b)).collect()
    }
}

/// Mean and unbiased (n − 1) covariance of the rows of a row-major `n × dim`
/// matrix. The covariance is symmetric by construction.
pub fn estimate_gaussian<T>(data: &[T], dim: usize) -> Result<GaussianStats>
where
    T: Copy + Into<f64> + Sync,
{
    estimate_gaussian_with(data, dim, &Sequential)
}

pub fn estimate_gaussian_with<T, E>(data: &[T], dim: usize, exec: &E) -> Result<GaussianStats>
where
    T: Copy + Into<f64> + Sync,
    E: BlockExecutor,
{
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: data.len(),
        });
    }
    let n = data.len() / dim;
    if n < 2 {
        return Err(Error::TooFewSamples { n, required: 2 });
    }
    if let Some(index) = data.iter().position(|&x| !x.into().is_finite()) {
        return Err(Error::NonFinite { index });
    }

    let blocks: Vec<&[T]> = data.chunks(GAUSSIAN_BLOCK_ROWS * dim).collect();

    let mut sums = vec![0.0; dim];
    for wave in blocks.chunks(BLOCKS_PER_WAVE) {
        let partials = exec.map_blocks(wave, |block| {
            let mut s = vec![0.0; dim];
            for row in block.chunks_exact(dim) {
                for (acc, &x) in s.iter_mut().zip(row) {
                    *acc += x.into();
                }
            }
            s
        });
        for p in partials {
            for (acc, x) in sums.iter_mut().zip(p) {
                *acc += x;
            }
        }
    }
    let mean: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();

    // upper triangle, row-major packed
    let packed = dim * (dim + 1) / 2;
    let mut scatter = vec![0.0; packed];
    for wave in blocks.chunks(BLOCKS_PER_WAVE) {
        let mean = &mean;
        let partials = exec.map_blocks(wave, |block| {
            let mut s = vec![0.0; packed];
            let mut centered = vec![0.0; dim];
            for row in block.chunks_exact(dim) {
                for ((c, &x), m) in centered.iter_mut().zip(row).zip(mean) {
                    *c = x.into() - m;
                }
                let mut k = 0;
                for i in 0..dim {
                    let ci = centered[i];
                    for &cj in &centered[i..] {
                        s[k] += ci * cj;
                        k += 1;
                    }
                }
            }
            s
        });
        for p in partials {
            for (acc, x) in scatter.iter_mut().zip(p) {
                *acc += x;
            }
        }
    }

    let divisor = (n - 1) as f64;
    let mut cov = Matrix::zeros(dim);
    let mut k = 0;
    for i in 0..dim {
        for j in i..dim {
            let v = scatter[k] / divisor;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
            k += 1;
        }
    }
    GaussianStats::new(mean, cov, n)
}

/// Fréchet distance between two Gaussians:
/// `‖μg − μr‖² + Tr(Σg + Σr − 2 (Σg^½ Σr Σg^½)^½)`.
///
/// If either covariance has smallest eigenvalue below `eps` times its
/// largest, `eps·I` is added to both. Tiny negative results from round-off
/// are clamped to zero.
pub fn frechet_distance(g: &GaussianStats, r: &GaussianStats, eps: f64) -> Result<f64> {
    if g.dim() != r.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: r.dim(),
        });
    }
    let mean_term: f64 = g
        .mean
        .iter()
        .zip(&r.mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if g.dim() == 0 {
        return Ok(mean_term);
    }

    let mut eig_g = SymmetricEigen::new(&g.cov)?;
    let eig_r = SymmetricEigen::new(&r.cov)?;
    let near_singular =
        |e: &SymmetricEigen| !(e.max_value() > 0.0) || e.min_value() < eps * e.max_value();
    let ridge = if near_singular(&eig_g) || near_singular(&eig_r) {
        eps
    } else {
        0.0
    };

    let mut cov_r = r.cov.clone();
    if ridge > 0.0 {
        // Σg + εI shares eigenvectors with Σg
        for l in &mut eig_g.values {
            *l += ridge;
        }
        cov_r.add_diagonal(ridge);
    }
    let sqrt_g = eig_g.reconstruct_with(|l| libm::sqrt(l.max(0.0)));
    let mut inner = sqrt_g.matmul(&cov_r)?.matmul(&sqrt_g)?;
    inner.symmetrize();
    let tr_sqrt: f64 = SymmetricEigen::new(&inner)?
        .values
        .iter()
        .map(|&l| libm::sqrt(l.max(0.0)))
        .sum();

    let d = g.dim() as f64;
    let trace_term = (g.cov.trace() + ridge * d) + cov_r.trace() - 2.0 * tr_sqrt;
    Ok((mean_term + trace_term).max(0.0))
}

/// `n × C` table of per-item class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbTable {
    data: Vec<f64>,
    classes: usize,
}

impl ProbTable {
    /// Each row must be finite, non-negative and sum to 1 within 1e-6;
    /// at least two classes.
    pub fn new(data: Vec<f64>, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidConfig("probability table needs at least 2 classes".into()));
        }
        if !data.len().is_multiple_of(classes) {
            return Err(Error::DimensionMismatch {
                expected: classes,
                found: data.len(),
            });
        }
        for (row, probs) in data.chunks_exact(classes).enumerate() {
            if probs.iter().any(|p| !p.is_finite()) {
                return Err(Error::InvalidProbabilityRow {
                    row,
                    reason: "non-finite value",
                });
            }
            if probs.iter().any(|&p| p < 0.0) {
                return Err(Error::InvalidProbabilityRow {
                    row,
                    reason: "negative value",
                });
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::InvalidProbabilityRow {
                    row,
                    reason: "row does not sum to 1",
                });
            }
        }
        Ok(Self { data, classes })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let classes = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != classes) {
            return Err(Error::DimensionMismatch {
                expected: classes,
                found: bad.len(),
            });
        }
        Self::new(rows.concat(), classes)
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.classes
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }
}

/// Inception Score `exp(E_x KL(p(y|x) ‖ p(y)))` as `(mean, std)` over
/// `splits` chunks of the seeded-shuffled rows. The std is the population
/// standard deviation across chunks.
pub fn inception_score(p: &ProbTable, splits: usize, seed: u64) -> Result<(f64, f64)> {
    let n = p.rows();
    if splits == 0 {
        return Err(Error::InvalidConfig("splits must be a positive integer".into()));
    }
    if n < splits {
        return Err(Error::TooFewSamples { n, required: splits });
    }
    let c = p.classes();

    let mut floored = Vec::with_capacity(n * c);
    for i in 0..n {
        let row = p.row(i);
        let start = floored.len();
        floored.extend(row.iter().map(|&x| x.max(PROB_FLOOR)));
        let sum: f64 = floored[start..].iter().sum();
        for x in &mut floored[start..] {
            *x /= sum;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let base = n / splits;
    let extra = n % splits;
    let mut scores = Vec::with_capacity(splits);
    let mut start = 0;
    for s in 0..splits {
        let len = base + usize::from(s < extra);
        let chunk = &order[start..start + len];
        start += len;

        let mut marginal = vec![0.0; c];
        for &i in chunk {
            for (m, &x) in marginal.iter_mut().zip(&floored[i * c..(i + 1) * c]) {
                *m += x;
            }
        }
        let log_marginal: Vec<f64> = marginal.iter().map(|m| libm::log(m / len as f64)).collect();

        let mut kl_sum = 0.0;
        for &i in chunk {
            let mut kl = 0.0;
            for (&x, lm) in floored[i * c..(i + 1) * c].iter().zip(&log_marginal) {
                kl += x * (libm::log(x) - lm);
            }
            kl_sum += kl;
        }
        scores.push(libm::exp(kl_sum / len as f64));
    }

    let mean = scores.iter().sum::<f64>() / splits as f64;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / splits as f64;
    Ok((mean, libm::sqrt(var)))
}

/// Mean cosine between paired audio and text embeddings, accumulated in
/// index order.
pub fn clap_score<T, V>(audio_vecs: &[V], text_vecs: &[V]) -> Result<f64>
where
    T: Copy + Into<f64>,
    V: AsRef<[T]>,
{
    if audio_vecs.len() != text_vecs.len() {
        return Err(Error::LengthMismatch {
            left: audio_vecs.len(),
            right: text_vecs.len(),
        });
    }
    if audio_vecs.is_empty() {
        return Err(Error::TooFewSamples { n: 0, required: 1 });
    }
    let mut sum = 0.0;
    for (a, t) in audio_vecs.iter().zip(text_vecs) {
        sum += cosine(a.as_ref(), t.as_ref())?;
    }
    Ok(sum / audio_vecs.len() as f64)
}

/// Evaluator settings echoed into every metric report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    pub fd_eps: f64,
    pub is_splits: usize,
    pub seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            fd_eps: DEFAULT_FD_EPS,
            is_splits: DEFAULT_IS_SPLITS,
            seed: 0,
        }
    }
}

impl MetricConfig {
    /// Covariance normalization, fixed to the unbiased estimator.
    pub const COV_DIVISOR: &'static str = "n-1";
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub fd: Option<f64>,
    pub fad: Option<f64>,
    pub is_mean: Option<f64>,
    pub is_std: Option<f64>,
    pub clap: Option<f64>,
    pub config: MetricConfig,
}
