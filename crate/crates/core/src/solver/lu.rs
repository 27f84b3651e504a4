//! Dense LU with partial pivoting.
//!
//! Storage is dense, but elimination skips structural zeros in the pivot row
//! and column, so nodal matrices with a leaf-first ordering factor in close
//! to `O(n^2)` time.

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `b - A x`.
    pub fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let ax: f64 = self.row(i).iter().zip(x).filter(|(a, _)| **a != 0.0).map(|(a, x)| a * x).sum();
                b[i] - ax
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

/// Factorises `a` in place. On failure returns the column with no usable
/// pivot.
pub fn factor(a: DenseMatrix) -> Result<LuFactors, usize> {
    let n = a.n;
    let mut lu = a.data;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut pivot_cols = Vec::with_capacity(n);

    for k in 0..n {
        let mut p = k;
        let mut best = lu[k * n + k].abs();
        for i in k + 1..n {
            let v = lu[i * n + k].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if !(best > 0.0) || !best.is_finite() {
            return Err(k);
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
        }

        pivot_cols.clear();
        pivot_cols.extend((k + 1..n).filter(|&j| lu[k * n + j] != 0.0));
        let pivot = lu[k * n + k];
        for i in k + 1..n {
            let m = lu[i * n + k];
            if m == 0.0 {
                continue;
            }
            let l = m / pivot;
            lu[i * n + k] = l;
            let (upper, lower) = lu.split_at_mut(i * n);
            let pivot_row = &upper[k * n..k * n + n];
            let row = &mut lower[..n];
            for &j in &pivot_cols {
                row[j] -= l * pivot_row[j];
            }
        }
    }
    Ok(LuFactors { n, lu, perm })
}

impl LuFactors {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let mut s = y[i];
            for (j, l) in row.iter().enumerate() {
                if *l != 0.0 {
                    s -= l * y[j];
                }
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n..(i + 1) * n];
            let mut s = y[i];
            for j in i + 1..n {
                if row[j] != 0.0 {
                    s -= row[j] * y[j];
                }
            }
            y[i] = s / row[i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_with_pivoting() {
        // Zero leading pivot forces a row swap.
        let mut a = DenseMatrix::zeros(3);
        let rows = [[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 4.0]];
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                a.set(i, j, *v);
            }
        }
        let x_true = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3).map(|i| (0..3).map(|j| rows[i][j] * x_true[j]).sum()).collect();
        let x = factor(a.clone()).unwrap().solve(&b);
        for (u, v) in x.iter().zip(x_true) {
            assert!((u - v).abs() < 1e-14);
        }
        assert!(a.residual(&x, &b).iter().all(|r| r.abs() < 1e-14));
    }

    #[test]
    fn reports_singular_column() {
        let mut a = DenseMatrix::zeros(2);
        a.set(0, 0, 1.0);
        a.set(1, 0, 1.0);
        assert_eq!(factor(a).unwrap_err(), 1);
    }
}
