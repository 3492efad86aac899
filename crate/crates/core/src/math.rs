//! Dense row-major matrices and seeded randomness.
//!
//! Everything is `f64`. Kernels are written as row-wise `axpy` loops so the
//! inner loop vectorizes without reassociating floating-point sums, which keeps
//! results bit-identical between runs and between row-block splits.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Dense 2-D array stored in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} values, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Copies the given rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols && self.rows > 0 && other.rows > 0 {
            return Err(Error::shape("vstack", self.shape(), other.shape()));
        }
        let cols = if self.rows > 0 { self.cols } else { other.cols };
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols,
            data,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Adds `bias` to every row.
    pub fn add_row_vector(&mut self, bias: &[f64]) -> Result<()> {
        if bias.len() != self.cols {
            return Err(Error::shape(
                "add_row_vector",
                self.shape(),
                (1, bias.len()),
            ));
        }
        for row in self.data.chunks_exact_mut(self.cols.max(1)) {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        Ok(())
    }

    /// Sum over rows, one value per column.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        out
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }
}

/// `a × b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    if b.cols == 0 {
        return Ok(out);
    }
    for (a_row, out_row) in a
        .data
        .chunks_exact(a.cols.max(1))
        .zip(out.data.chunks_exact_mut(b.cols))
    {
        for (k, &aik) in a_row.iter().enumerate().take(a.cols) {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `a × bᵀ`.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::shape("matmul_nt", a.shape(), b.shape()));
    }
    matmul(a, &b.transpose())
}

/// `aᵀ × b`.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::shape("matmul_tn", a.shape(), b.shape()));
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    if b.cols == 0 {
        return Ok(out);
    }
    for k in 0..a.rows {
        let a_row = a.row(k);
        let b_row = b.row(k);
        for (i, &aki) in a_row.iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aki * bkj;
            }
        }
    }
    Ok(out)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = log_softmax_rows(logits);
    out.map_inplace(f64::exp);
    out
}

/// Row-wise log-softmax, `z - max - ln Σ exp(z - max)`.
pub fn log_softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let log_sum = sum.ln();
        for v in row.iter_mut() {
            *v = (*v - max) - log_sum;
        }
    }
    out
}

/// Numerically stable `ln Σ exp(v)`; `-inf` for an empty slice.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values
        .into_iter()
        .map(|v| (v - max).exp())
        .sum::<f64>()
        .ln()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Lower-triangular factor `L` with `L Lᵀ = cov` for a positive semidefinite matrix.
///
/// Non-positive pivots are treated as zero so degenerate (including all-zero)
/// covariances are accepted.
pub fn cholesky_psd(cov: &Matrix) -> Result<Matrix> {
    let n = cov.rows;
    if cov.cols != n {
        return Err(Error::shape("cholesky", cov.shape(), cov.shape()));
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = cov.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        let pivot = if d > 1e-14 { d.sqrt() } else { 0.0 };
        l.set(j, j, pivot);
        for i in j + 1..n {
            let mut s = cov.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, if pivot > 0.0 { s / pivot } else { 0.0 });
        }
    }
    Ok(l)
}

/// Seeded generator: ChaCha with 8 rounds, keyed by a 64-bit seed.
///
/// Streams derived with [`RngState::derive`] are independent of each other and
/// of the parent, so consumers can draw in any order without disturbing others.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fresh generator for sub-stream `stream` of this seed.
    pub fn derive(&self, stream: u64) -> RngState {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        RngState {
            seed: self.seed,
            inner,
        }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform index in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for RngState {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Vector of independent Bernoulli(`keep_prob`) draws encoded as 0.0 / 1.0.
pub fn bernoulli_mask(rng: &mut RngState, n: usize, keep_prob: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&keep_prob) {
        return Err(Error::InvalidArgument(format!(
            "keep_prob must lie in [0, 1], got {keep_prob}"
        )));
    }
    Ok((0..n)
        .map(|_| if rng.uniform() < keep_prob { 1.0 } else { 0.0 })
        .collect())
}

/// `fan_out × fan_in` weights drawn from N(0, 2 / fan_in).
pub fn he_init(rng: &mut RngState, fan_in: usize, fan_out: usize) -> Result<Matrix> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::InvalidArgument(format!(
            "layer dims must be >= 1, got fan_in={fan_in} fan_out={fan_out}"
        )));
    }
    let std = (2.0 / fan_in as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| std * rng.standard_normal())
        .collect();
    Matrix::from_vec(fan_out, fan_in, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(
            matmul(&a, &m(&[&[5.0], &[6.0]])).unwrap(),
            m(&[&[17.0], &[39.0]])
        );
        assert_eq!(
            matmul(&a, &m(&[&[0.0], &[0.0]])).unwrap(),
            m(&[&[0.0], &[0.0]])
        );

        let k = m(&[
            &[1.5, -2.0, 0.25, 9.0],
            &[0.0, 1.0, 2.0, 3.0],
            &[-4.0, 5.0, 6.0, 7.0],
        ]);
        assert_eq!(matmul(&Matrix::identity(3), &k).unwrap(), k);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let mut rng = RngState::new(3);
        let a = he_init(&mut rng, 4, 5).unwrap();
        let b = he_init(&mut rng, 7, 5).unwrap();
        let c = he_init(&mut rng, 7, 6).unwrap();
        assert_eq!(
            matmul_tn(&a, &b).unwrap(),
            matmul(&a.transpose(), &b).unwrap()
        );
        assert_eq!(
            matmul_nt(&b, &c).unwrap(),
            matmul(&b, &c.transpose()).unwrap()
        );
    }

    #[test]
    fn bernoulli_mask_extremes_and_mean() {
        let mut rng = RngState::new(11);
        assert!(bernoulli_mask(&mut rng, 50, 1.0)
            .unwrap()
            .iter()
            .all(|&v| v == 1.0));
        assert!(bernoulli_mask(&mut rng, 50, 0.0)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let mask = bernoulli_mask(&mut rng, 100_000, 0.8).unwrap();
        let mean = mask.iter().sum::<f64>() / mask.len() as f64;
        assert!((mean - 0.8).abs() < 0.01, "{mean}");
        assert!(bernoulli_mask(&mut rng, 3, 1.5).is_err());
        assert!(bernoulli_mask(&mut rng, 3, -0.1).is_err());
    }

    #[test]
    fn he_init_moments_and_determinism() {
        let w = he_init(&mut RngState::new(5), 2, 3).unwrap();
        assert_eq!(w.shape(), (3, 2));
        assert_eq!(w, he_init(&mut RngState::new(5), 2, 3).unwrap());

        // 10^4 draws with fan_in = 2 should have std close to sqrt(2/2) = 1.
        let big = he_init(&mut RngState::new(9), 2, 5000).unwrap();
        let n = big.as_slice().len() as f64;
        let mean = big.as_slice().iter().sum::<f64>() / n;
        let var = big
            .as_slice()
            .iter()
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / n;
        assert!((var.sqrt() - 1.0).abs() < 0.2, "{}", var.sqrt());

        let tiny = he_init(&mut RngState::new(1), 1_000_000, 1).unwrap();
        assert!(tiny.is_finite());
        assert!(tiny.as_slice().iter().all(|v| v.abs() < 0.1));
        assert!(he_init(&mut RngState::new(1), 0, 3).is_err());
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let logits = m(&[&[1000.0, -1000.0, 999.0], &[-1e3, -1e3, -1e3]]);
        let p = softmax_rows(&logits);
        for r in 0..2 {
            let s: f64 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(p.row(r).iter().all(|v| v.is_finite()));
        }
        assert!((p.get(1, 0) - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn cholesky_reconstructs_and_tolerates_zero() {
        let cov = m(&[&[4.0, 2.0], &[2.0, 3.0]]);
        let l = cholesky_psd(&cov).unwrap();
        let back = matmul_nt(&l, &l).unwrap();
        for (a, b) in back.as_slice().iter().zip(cov.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(
            cholesky_psd(&Matrix::zeros(3, 3)).unwrap(),
            Matrix::zeros(3, 3)
        );
    }

    #[test]
    fn derived_streams_are_reproducible_and_distinct() {
        let root = RngState::new(42);
        let mut a = root.derive(1);
        let mut b = root.derive(1);
        let mut c = root.derive(2);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let zs: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, zs);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
            proptest::collection::vec(-10.0f64..10.0, rows * cols)
                .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
        }

        proptest! {
            #[test]
            fn matmul_is_associative(
                (a, b, c) in (1usize..6, 1usize..6, 1usize..6, 1usize..6)
                    .prop_flat_map(|(p, q, r, s)| (matrix(p, q), matrix(q, r), matrix(r, s)))
            ) {
                let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
                let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
                for (x, y) in left.as_slice().iter().zip(right.as_slice()) {
                    let scale = x.abs().max(y.abs()).max(1.0);
                    prop_assert!((x - y).abs() / scale < 1e-9);
                }
            }

            #[test]
            fn softmax_rows_sum_to_one(logits in proptest::collection::vec(-1e3f64..1e3, 1..12)) {
                let n = logits.len();
                let p = softmax_rows(&Matrix::from_vec(1, n, logits).unwrap());
                prop_assert!((p.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
