//! Direct solvers for the two linear systems the solver meets: the
//! tridiagonal mesh equation and the banded Newton Jacobian.

use crate::error::{Error, Result};

/// Solves a tridiagonal system by Thomas elimination (no pivoting).
///
/// `lower[i]` multiplies `x[i-1]` in row `i` (`lower[0]` unused) and
/// `upper[i]` multiplies `x[i+1]` (`upper[n-1]` unused).
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    debug_assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    if n == 0 {
        return d;
    }
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

/// Square band matrix with `kl` sub- and `ku` super-diagonals.
///
/// Storage reserves `kl` extra super-diagonals for fill-in from row
/// interchanges, as in LAPACK's `gbtrf`.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    stride: usize,
    data: Vec<f64>,
    /// Copy of `data` kept by `factor` for the pivoted restart.
    backup: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let stride = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            stride,
            data: vec![0.0; n * stride],
            backup: Vec::new(),
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n, self.kl, self.ku)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|a| *a = 0.0);
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        i * self.stride + (j + self.kl - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.kl + self.ku {
            0.0
        } else {
            self.data[self.offset(i, j)]
        }
    }

    /// Sets entry `(i, j)`; `j - i` must lie within `[-kl, ku]`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "({i}, {j}) outside band"
        );
        let idx = self.offset(i, j);
        self.data[idx] = value;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "({i}, {j}) outside band"
        );
        let idx = self.offset(i, j);
        self.data[idx] += value;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// LU factorisation. Elimination runs without pivoting first; if a pivot
    /// smaller than `1e-12` of its row maximum appears, it restarts with
    /// partial pivoting.
    pub fn factor(mut self) -> Result<BandLu> {
        self.backup.clear();
        self.backup.extend_from_slice(&self.data);
        match self.factor_impl(false) {
            Ok(lu) => Ok(lu),
            Err((mut m, _)) => {
                std::mem::swap(&mut m.data, &mut m.backup);
                m.factor_impl(true).map_err(|(_, e)| e)
            }
        }
    }

    /// On failure the partly eliminated matrix comes back with the error.
    #[allow(clippy::result_large_err)]
    fn factor_impl(mut self, pivoting: bool) -> Result<BandLu, (BandMatrix, Error)> {
        let n = self.n;
        let kl = self.kl;
        // Upper extent grows to ku + kl once rows are interchanged.
        let ku_ext = if pivoting { self.ku + kl } else { self.ku };
        let mut pivots: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let row_end = (k + ku_ext).min(n - 1);
            let col_end = (k + kl).min(n - 1);
            if pivoting {
                let mut p = k;
                let mut best = self.get(k, k).abs();
                for i in k + 1..=col_end {
                    let a = self.get(i, k).abs();
                    if a > best {
                        best = a;
                        p = i;
                    }
                }
                if p != k {
                    pivots[k] = p;
                    for j in k..=row_end {
                        let a = self.offset(k, j);
                        let b = self.offset(p, j);
                        self.data.swap(a, b);
                    }
                }
            }
            let pivot = self.get(k, k);
            if !pivot.is_finite() || pivot == 0.0 {
                return Err((self, Error::SingularJacobian { row: k }));
            }
            // Entry (r, j) of row r lives at `r * stride + kl - r + j`.
            let stride = self.stride;
            let kbase = k * stride + kl - k;
            if !pivoting {
                let row_max = (k..=row_end)
                    .map(|j| self.data[kbase + j].abs())
                    .fold(0.0, f64::max);
                if pivot.abs() < 1e-12 * row_max {
                    return Err((self, Error::SingularJacobian { row: k }));
                }
            }
            let inv = 1.0 / pivot;
            let data = &mut self.data;
            for i in k + 1..=col_end {
                let ibase = i * stride + kl - i;
                let factor = data[ibase + k] * inv;
                data[ibase + k] = factor;
                if factor == 0.0 {
                    continue;
                }
                for j in k + 1..=row_end {
                    data[ibase + j] -= factor * data[kbase + j];
                }
            }
        }
        let pivoted = pivots.iter().enumerate().any(|(k, &p)| p != k);
        let inv_diag = (0..n).map(|k| 1.0 / self.get(k, k)).collect();
        Ok(BandLu {
            matrix: self,
            pivots,
            ku_ext,
            pivoted,
            inv_diag,
        })
    }
}

/// Factorised band matrix ready for repeated back-solves.
#[derive(Clone, Debug)]
pub struct BandLu {
    matrix: BandMatrix,
    pivots: Vec<usize>,
    ku_ext: usize,
    pivoted: bool,
    inv_diag: Vec<f64>,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.matrix.n
    }

    /// Hands back the storage for building the next matrix of the same shape.
    pub fn into_matrix(self) -> BandMatrix {
        self.matrix
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let m = &self.matrix;
        let (n, kl) = (m.n, m.kl);
        assert_eq!(b.len(), n, "right-hand side length");
        if !self.pivoted && kl == 3 && self.ku_ext == 3 {
            return self.solve_unpivoted_fixed::<3>(b);
        }
        if self.pivoted {
            for k in 0..n {
                let p = self.pivots[k];
                if p != k {
                    b.swap(k, p);
                }
                let bk = b[k];
                if bk != 0.0 {
                    for i in k + 1..=(k + kl).min(n - 1) {
                        b[i] -= m.data[m.offset(i, k)] * bk;
                    }
                }
            }
        } else if kl > 0 {
            for i in 1..n {
                self.forward_row(b, i);
            }
        }
        for k in (0..n).rev() {
            self.back_row(b, k);
        }
    }

    // Without interchanges L(i, k) sits at `i * stride + kl - i + k`. The
    // newest unknown is subtracted last to keep the dependency chain between
    // rows short.
    fn forward_row(&self, b: &mut [f64], i: usize) {
        let m = &self.matrix;
        let base = i * m.stride + m.kl - i;
        let mut s = 0.0;
        for k in i.saturating_sub(m.kl)..i - 1 {
            s += m.data[base + k] * b[k];
        }
        b[i] = (b[i] - s) - m.data[base + i - 1] * b[i - 1];
    }

    fn back_row(&self, b: &mut [f64], k: usize) {
        let m = &self.matrix;
        let hi = (k + self.ku_ext).min(m.n - 1);
        let base = k * m.stride + m.kl - k;
        let mut s = 0.0;
        for j in (k + 2..=hi).rev() {
            s += m.data[base + j] * b[j];
        }
        if hi > k {
            s += m.data[base + k + 1] * b[k + 1];
        }
        b[k] = (b[k] - s) * self.inv_diag[k];
    }

    /// Unpivoted solve with `kl = ku = W`, unrolled over full interior rows.
    fn solve_unpivoted_fixed<const W: usize>(&self, b: &mut [f64]) {
        let m = &self.matrix;
        let (n, stride, data) = (m.n, m.stride, &m.data);
        for i in 1..n.min(W) {
            self.forward_row(b, i);
        }
        for i in W..n {
            let l: &[f64; W] = data[i * stride..i * stride + W].try_into().unwrap();
            let x: &[f64; W] = b[i - W..i].try_into().unwrap();
            let mut s = 0.0;
            for t in 0..W - 1 {
                s += l[t] * x[t];
            }
            let newest = l[W - 1] * x[W - 1];
            b[i] = (b[i] - s) - newest;
        }
        let interior = n.saturating_sub(W);
        for k in (interior..n).rev() {
            self.back_row(b, k);
        }
        for k in (0..interior).rev() {
            let start = k * stride + W + 1;
            let u: &[f64; W] = data[start..start + W].try_into().unwrap();
            let x: &[f64; W] = b[k + 1..k + 1 + W].try_into().unwrap();
            let mut s = 0.0;
            for t in (1..W).rev() {
                s += u[t] * x[t];
            }
            s += u[0] * x[0];
            b[k] = (b[k] - s) * self.inv_diag[k];
        }
    }

    /// Whether row interchanges were needed.
    pub fn pivoted(&self) -> bool {
        self.pivoted
    }
}
