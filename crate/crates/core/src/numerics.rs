//! Seeded randomness, small dense linear algebra and Monte Carlo statistics.

use std::ops::{Deref, DerefMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{arg, check_dims, numeric, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded ChaCha8 stream. Children made by [`RngState::fork`] depend only on
/// the root seed, the fork path and the index, never on how much the parent
/// has been consumed, so Monte Carlo trials can run in any order.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    key: u64,
    rng: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::from_key(seed, splitmix64(seed))
    }

    fn from_key(seed: u64, key: u64) -> Self {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&key.to_le_bytes());
        bytes[8..16].copy_from_slice(&splitmix64(key).to_le_bytes());
        bytes[16..24].copy_from_slice(&seed.to_le_bytes());
        bytes[24..].copy_from_slice(&splitmix64(key ^ seed).to_le_bytes());
        Self { seed, key, rng: ChaCha8Rng::from_seed(bytes) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream number `index`.
    pub fn fork(&self, index: u64) -> Self {
        let key = splitmix64(self.key ^ splitmix64(index.wrapping_mul(GOLDEN).wrapping_add(1)));
        Self::from_key(self.seed, key)
    }

    /// `k` children, equal to `fork(0..k)`.
    pub fn split(&self, k: usize) -> Vec<Self> {
        (0..k as u64).map(|i| self.fork(i)).collect()
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.rng.random_range(0..=i);
            p.swap(i, j);
        }
        p
    }
}

/// Dense real vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(pub Vec<f64>);

/// Flat parameter vector (policy weights, estimates, EMA shadows).
pub type ParamVector = Vector;

impl Deref for Vector {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Vector {
    /// Checked constructor: every entry must be finite.
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return arg("vector entries must be finite");
        }
        Ok(Self(v))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        Vector(self.iter().zip(other.iter()).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &Vector) -> Vector {
        Vector(self.iter().zip(other.iter()).map(|(a, b)| a + b).collect())
    }

    pub fn scaled(&self, c: f64) -> Vector {
        Vector(self.iter().map(|a| a * c).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

/// Returns `mean + scale * z` with `z` standard normal.
pub fn gaussian_vector(rng: &mut RngState, d: usize, mean: &Vector, scale: f64) -> Result<Vector> {
    if d == 0 {
        return arg("gaussian_vector: d must be >= 1");
    }
    if !(scale >= 0.0) {
        return arg("gaussian_vector: scale must be >= 0");
    }
    check_dims("gaussian_vector", d, mean.dim())?;
    Ok(Vector(mean.iter().map(|m| m + scale * rng.normal()).collect()))
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return arg(format!("matrix: {} entries for {rows}x{cols}", data.len()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return arg("matrix entries must be finite");
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        if rows.iter().any(|x| x.len() != c) {
            return arg("matrix: ragged rows");
        }
        Self::new(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (i, x) in d.iter().enumerate() {
            m.data[i * n + i] = *x;
        }
        m
    }

    pub fn column(v: &[f64]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.cols + j] = x;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return arg(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dims("mul_vec", self.cols, v.len())?;
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return arg("elementwise op: shape mismatch");
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * c).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// Gauss-Jordan inverse with partial pivoting.
    pub fn inverse(&self) -> Result<Matrix> {
        if !self.is_square() {
            return arg("inverse: matrix must be square");
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Matrix::identity(n);
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a.get(i, col).abs().total_cmp(&a.get(j, col).abs()))
                .unwrap_or(col);
            let p = a.get(piv, col);
            if p.abs() < 1e-12 {
                return numeric("inverse", format!("pivot {p:e} below 1e-12 at column {col}"));
            }
            if piv != col {
                for j in 0..n {
                    a.data.swap(piv * n + j, col * n + j);
                    inv.data.swap(piv * n + j, col * n + j);
                }
            }
            for j in 0..n {
                a.data[col * n + j] /= p;
                inv.data[col * n + j] /= p;
            }
            for i in 0..n {
                if i == col {
                    continue;
                }
                let f = a.get(i, col);
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a.data[i * n + j] -= f * a.data[col * n + j];
                    inv.data[i * n + j] -= f * inv.data[col * n + j];
                }
            }
        }
        Ok(inv)
    }

    /// Determinant by LU with partial pivoting.
    pub fn determinant(&self) -> Result<f64> {
        if !self.is_square() {
            return arg("determinant: matrix must be square");
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
                .unwrap_or(col);
            if a[piv * n + col] == 0.0 {
                return Ok(0.0);
            }
            if piv != col {
                for j in 0..n {
                    a.swap(piv * n + j, col * n + j);
                }
                det = -det;
            }
            let p = a[col * n + col];
            det *= p;
            for i in col + 1..n {
                let f = a[i * n + col] / p;
                for j in col..n {
                    a[i * n + j] -= f * a[col * n + j];
                }
            }
        }
        Ok(det)
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
    pub fn symmetric_eigenvalues(&self) -> Result<Vec<f64>> {
        if !self.is_square() {
            return arg("symmetric_eigenvalues: matrix must be square");
        }
        let n = self.rows;
        let mut a = self.clone();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a.get(i, j).powi(2))
                .sum();
            if off <= 1e-30 * (1.0 + a.frobenius().powi(2)) {
                let mut ev: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
                ev.sort_by(|x, y| x.total_cmp(y));
                return Ok(ev);
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a.get(p, q);
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                }
            }
        }
        numeric("symmetric_eigenvalues", "Jacobi sweeps did not converge")
    }

    /// Symmetric and all eigenvalues >= -tol.
    pub fn is_psd(&self, tol: f64) -> bool {
        self.is_symmetric(tol)
            && self
                .symmetric_eigenvalues()
                .map(|ev| ev.iter().all(|&l| l >= -tol))
                .unwrap_or(false)
    }
}

/// Matrix exponential by scaling and squaring with a Taylor series whose
/// remainder is bounded below `tol`.
pub fn mat_exp(m: &Matrix, tol: f64) -> Result<Matrix> {
    if !m.is_square() {
        return arg("mat_exp: matrix must be square");
    }
    if !(tol > 0.0) {
        return arg("mat_exp: tol must be > 0");
    }
    let n = m.rows();
    let norm = m.frobenius();
    let mut s = 0u32;
    while norm / 2f64.powi(s as i32) > 0.5 {
        s += 1;
    }
    let x = norm / 2f64.powi(s as i32);
    // squaring s times multiplies the local error by roughly 2^s e^norm
    let local_tol = tol / (2f64.powi(s as i32) * norm.exp().max(1.0));
    let scaled = m.scale(1.0 / 2f64.powi(s as i32));
    let mut term = Matrix::identity(n);
    let mut sum = Matrix::identity(n);
    let mut k = 1usize;
    let mut bound_term = 1.0;
    loop {
        term = term.matmul(&scaled)?.scale(1.0 / k as f64);
        sum = sum.add(&term)?;
        bound_term *= x / k as f64;
        // remainder of the exponential series after order k
        let rem = bound_term * x / (k as f64 + 1.0) / (1.0 - x / (k as f64 + 2.0));
        if rem < local_tol || k >= 40 {
            break;
        }
        k += 1;
    }
    for _ in 0..s {
        sum = sum.matmul(&sum)?;
    }
    Ok(sum)
}

/// Largest singular value by power iteration on `MᵀM`.
pub fn op_norm(m: &Matrix, tol: f64) -> Result<f64> {
    if m.rows() == 0 || m.cols() == 0 {
        return arg("op_norm: empty matrix");
    }
    let mtm = m.transpose().matmul(m)?;
    let n = mtm.rows();
    if mtm.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64 + 0.01 * (i * i) as f64).collect();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    let mut lambda = 0.0f64;
    for _ in 0..100_000 {
        let w = mtm.mul_vec(&v)?;
        let new_lambda: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nw == 0.0 {
            return Ok(0.0);
        }
        v = w.into_iter().map(|x| x / nw).collect();
        // relative change of λ = σ² below tol (floored near machine precision)
        if (new_lambda - lambda).abs() <= tol.max(1e-14) * new_lambda.abs() {
            return Ok(new_lambda.max(0.0).sqrt());
        }
        lambda = new_lambda;
    }
    numeric("op_norm", "power iteration hit the iteration cap")
}

/// 2x2 rotation by `angle`.
pub fn rotation_from_angle(angle: f64) -> Matrix {
    let (s, c) = angle.sin_cos();
    Matrix { rows: 2, cols: 2, data: vec![c, -s, s, c] }
}

/// Uniformly random rotation (determinant +1).
pub fn random_rotation(rng: &mut RngState, d: usize) -> Result<Matrix> {
    match d {
        0 => arg("random_rotation: d must be >= 1"),
        1 => Ok(Matrix::identity(1)),
        2 => Ok(rotation_from_angle(rng.uniform_range(0.0, std::f64::consts::TAU))),
        _ => {
            // Gram-Schmidt on Gaussian columns == QR with positive diag(R)
            let g: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
            let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
            for col in g {
                let mut u = col;
                for _ in 0..2 {
                    for e in &q {
                        let p: f64 = u.iter().zip(e).map(|(a, b)| a * b).sum();
                        u.iter_mut().zip(e).for_each(|(a, b)| *a -= p * b);
                    }
                }
                let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                if nu < 1e-12 {
                    return numeric("random_rotation", "degenerate Gaussian draw");
                }
                q.push(u.into_iter().map(|x| x / nu).collect());
            }
            let mut m = Matrix::zeros(d, d);
            for (j, col) in q.iter().enumerate() {
                for (i, x) in col.iter().enumerate() {
                    m.set(i, j, *x);
                }
            }
            if m.determinant()? < 0.0 {
                for i in 0..d {
                    m.set(i, 0, -m.get(i, 0));
                }
            }
            Ok(m)
        }
    }
}

/// Runs `n` independent trials on forked streams `rng.fork(i)`; results come
/// back in trial order whatever the scheduling.
pub fn par_trials<T, F>(rng: &RngState, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, RngState) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(|i| f(i, rng.fork(i as u64))).collect()
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean with standard error `s/sqrt(n)`.
pub fn mean_estimate(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Estimate { value: m, se: (var / n).sqrt() }
}

/// Population variance with the delta-method standard error `sqrt((m4 - var²)/n)`.
pub fn variance_estimate(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    Estimate { value: var, se: ((m4 - var * var).max(0.0) / n).sqrt() }
}

/// Delete-one jackknife standard error of the sample mean.
pub fn jackknife_se(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let total: f64 = xs.iter().sum();
    let loo: Vec<f64> = xs.iter().map(|x| (total - x) / (n - 1) as f64).collect();
    let m = mean(&loo);
    let ss: f64 = loo.iter().map(|x| (x - m).powi(2)).sum();
    ((n - 1) as f64 / n as f64 * ss).sqrt()
}
