//! Dense linear-algebra kernels and stable activations shared by every
//! other module. All arithmetic is f64; everything here is pure and
//! reentrant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of f64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {}x{}={} values, got {}",
                rows,
                cols,
                rows * cols,
                values.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    /// Copy of column `c` as a vector.
    pub fn col(&self, c: usize) -> DenseVector {
        let mut v = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            v.push(self.get(r, c));
        }
        DenseVector::from(v)
    }

    pub fn set_col(&mut self, c: usize, v: &[f64]) {
        debug_assert_eq!(v.len(), self.rows);
        for (r, x) in v.iter().enumerate() {
            self.set(r, c, *x);
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Standard matrix product.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let brow = other.row(k);
                let orow = out.row_mut(i);
                for (o, b) in orow.iter_mut().zip(brow.iter()) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn matvec(&self, x: &DenseVector) -> Result<DenseVector> {
        if self.cols != x.dim() {
            return Err(Error::Shape(format!(
                "matvec: {}x{} times {}",
                self.rows,
                self.cols,
                x.dim()
            )));
        }
        let mut out = vec![0.0; self.rows];
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(r), x.values());
        }
        Ok(DenseVector::from(out))
    }

    /// `self += scale * other`, shapes must match.
    pub fn add_scaled(&mut self, other: &DenseMatrix, scale: f64) {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(self.cols, other.cols);
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a += scale * b;
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// Dense f64 vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseVector {
    values: Vec<f64>,
}

impl DenseVector {
    pub fn zeros(dim: usize) -> Self {
        DenseVector {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        dot(&self.values, &other.values)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.values, &self.values)
    }

    pub fn add_scaled(&mut self, other: &DenseVector, scale: f64) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a += scale * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(values: Vec<f64>) -> Self {
        DenseVector { values }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Solve `a * x = b` for symmetric positive definite `a` via Cholesky
/// factorization, with one step of iterative refinement so the residual
/// satisfies `||a*x - b||_inf <= 1e-9 * (1 + ||b||_inf)`.
pub fn solve_spd(a: &DenseMatrix, b: &DenseVector) -> Result<DenseVector> {
    let n = a.rows();
    if a.cols() != n || b.dim() != n {
        return Err(Error::Shape(format!(
            "solve_spd: matrix {}x{}, rhs {}",
            a.rows(),
            a.cols(),
            b.dim()
        )));
    }
    let chol = cholesky(a)?;
    let mut x = chol_solve(&chol, n, b.values());

    // Refinement: r = b - a*x, x += a \ r.
    let ax = a.matvec(&DenseVector::from(x.clone()))?;
    let r: Vec<f64> = b
        .values()
        .iter()
        .zip(ax.values())
        .map(|(bv, av)| bv - av)
        .collect();
    let dx = chol_solve(&chol, n, &r);
    for i in 0..n {
        x[i] += dx[i];
    }
    Ok(DenseVector::from(x))
}

/// Lower-triangular Cholesky factor, packed row-major in an n*n buffer.
fn cholesky(a: &DenseMatrix) -> Result<Vec<f64>> {
    let n = a.rows();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotSpd { row: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    Ok(l)
}

fn chol_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    // Forward: L y = b.
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    // Backward: L^T x = y.
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Numerically stable logistic sigmoid.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    x.tanh()
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Softmax with max-subtraction; entries positive, summing to one.
pub fn softmax(v: &DenseVector) -> DenseVector {
    debug_assert!(v.dim() >= 1);
    let max = v
        .values()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.values().iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for o in out.iter_mut() {
        *o /= sum;
    }
    DenseVector::from(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matmul_identity() {
        let i2 = DenseMatrix::identity(2);
        let a = DenseMatrix::from_values(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(i2.matmul(&a).unwrap(), a);
    }

    #[test]
    fn matmul_annihilator() {
        let a = DenseMatrix::from_values(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let z = DenseMatrix::zeros(2, 2);
        assert_eq!(a.matmul(&z).unwrap(), z);
    }

    #[test]
    fn matmul_hand_expansion() {
        // Each entry is the dot product of a row of the left factor with a
        // column of the right factor, expanded by hand.
        let a = DenseMatrix::from_values(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = DenseMatrix::from_values(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.values(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_shape_error() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(Error::Shape(_))));
    }

    #[test]
    fn solve_identity() {
        let x = solve_spd(&DenseMatrix::identity(3), &DenseVector::from(vec![1.0, 2.0, 3.0]))
            .unwrap();
        assert_eq!(x.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn solve_diagonal_scaling() {
        let mut a = DenseMatrix::identity(2);
        a.set(0, 0, 2.0);
        a.set(1, 1, 2.0);
        let x = solve_spd(&a, &DenseVector::from(vec![4.0, 6.0])).unwrap();
        assert_eq!(x.values(), &[2.0, 3.0]);
    }

    #[test]
    fn solve_verified_by_substitution() {
        let a = DenseMatrix::from_values(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let b = DenseVector::from(vec![3.0, 3.0]);
        let x = solve_spd(&a, &b).unwrap();
        let ax = a.matvec(&x).unwrap();
        for (l, r) in ax.values().iter().zip(b.values()) {
            assert!((l - r).abs() <= 1e-12);
        }
        assert!((x.values()[0] - 1.0).abs() < 1e-12);
        assert!((x.values()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn solve_rejects_non_spd() {
        let a = DenseMatrix::from_values(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let b = DenseVector::from(vec![1.0, 1.0]);
        assert!(matches!(solve_spd(&a, &b), Err(Error::NotSpd { .. })));
    }

    #[test]
    fn activation_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(relu(-1.0), 0.0);
        assert_eq!(relu(2.0), 2.0);
        let s = softmax(&DenseVector::from(vec![0.0, 0.0, 0.0]));
        for v in s.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let s = softmax(&DenseVector::from(vec![1e3, -1e3, 0.0, 7.5]));
        let sum: f64 = s.values().iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
        assert!(s.values().iter().all(|v| *v >= 0.0));
    }

    /// Random SPD system: A = B^T B + n*I for random B.
    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> (DenseMatrix, DenseVector) {
        let b = DenseMatrix::from_values(
            n,
            n,
            (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += b.get(k, i) * b.get(k, j);
                }
                a.set(i, j, s);
            }
        }
        for i in 0..n {
            a.set(i, i, a.get(i, i) + n as f64);
        }
        let rhs = DenseVector::from((0..n).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>());
        (a, rhs)
    }

    #[test]
    fn solve_roundtrip_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(1..=50);
            let (a, b) = random_spd(&mut rng, n);
            let x = solve_spd(&a, &b).unwrap();
            let ax = a.matvec(&x).unwrap();
            let bnorm = b.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (l, r) in ax.values().iter().zip(b.values()) {
                assert!(
                    (l - r).abs() <= 1e-8 * (1.0 + bnorm),
                    "residual too large: {} vs {}",
                    l,
                    r
                );
            }
        }
    }

    proptest! {
        #[test]
        fn softmax_shift_invariance(v in proptest::collection::vec(-10.0f64..10.0, 1..12), c in -5.0f64..5.0) {
            let base = softmax(&DenseVector::from(v.clone()));
            let shifted = softmax(&DenseVector::from(v.iter().map(|x| x + c).collect::<Vec<_>>()));
            for (a, b) in base.values().iter().zip(shifted.values()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn matmul_associativity(vals in proptest::collection::vec(-2.0f64..2.0, 48)) {
            let a = DenseMatrix::from_values(4, 4, vals[0..16].to_vec()).unwrap();
            let b = DenseMatrix::from_values(4, 4, vals[16..32].to_vec()).unwrap();
            let c = DenseMatrix::from_values(4, 4, vals[32..48].to_vec()).unwrap();
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            for (l, r) in left.values().iter().zip(right.values()) {
                prop_assert!((l - r).abs() <= 1e-10);
            }
        }
    }
}
