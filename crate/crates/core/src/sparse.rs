//! Symmetric sparse matrices in CSR form, built from triplets, with a
//! Jacobi-preconditioned conjugate gradient solver and a small dense
//! fallback used by test oracles.

use crate::error::{Error, Result};

/// Symmetric sparse matrix; both triangles are stored so matvec is a plain
/// row sweep.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Accumulator for element-local scatters.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        if v != 0.0 {
            self.entries.push((i, j, v));
        }
    }

    pub fn build(mut self) -> SparseOperator {
        self.entries
            .sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut it = self.entries.into_iter().peekable();
        for i in 0..self.n {
            while let Some(&(ri, rj, _)) = it.peek() {
                if ri != i {
                    break;
                }
                let mut acc = 0.0;
                while let Some(&(ci, cj, v)) = it.peek() {
                    if ci == ri && cj == rj {
                        acc += v;
                        it.next();
                    } else {
                        break;
                    }
                }
                col_idx.push(rj);
                values.push(acc);
            }
            row_ptr[i + 1] = col_idx.len();
        }
        SparseOperator {
            n: self.n,
            row_ptr,
            col_idx,
            values,
        }
    }
}

impl SparseOperator {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .find(|&(c, _)| c == j)
            .map_or(0.0, |(_, v)| v)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Entrywise sum; patterns need not match.
    pub fn add(&self, other: &SparseOperator) -> SparseOperator {
        assert_eq!(self.n, other.n);
        let mut b = TripletBuilder::new(self.n);
        for (i, j, v) in self.entries() {
            b.add(i, j, v);
        }
        for (i, j, v) in other.entries() {
            b.add(i, j, v);
        }
        b.build()
    }

    /// Extract the principal submatrix on `keep` (old index -> position).
    pub fn restrict(&self, keep: &[usize]) -> SparseOperator {
        let mut pos = vec![usize::MAX; self.n];
        for (p, &i) in keep.iter().enumerate() {
            pos[i] = p;
        }
        let mut b = TripletBuilder::new(keep.len());
        for (p, &i) in keep.iter().enumerate() {
            for (j, v) in self.row(i) {
                if pos[j] != usize::MAX {
                    b.add(p, pos[j], v);
                }
            }
        }
        b.build()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, j, v) in self.entries() {
            worst = worst.max((v - self.get(j, i)).abs());
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n]; self.n];
        for (i, j, v) in self.entries() {
            m[i][j] = v;
        }
        m
    }

    /// Matrix Market coordinate format (general symmetric stored full).
    pub fn write_matrix_market<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for (i, j, v) in self.entries() {
            writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned conjugate gradients.
///
/// Converges when the residual drops below `rel_tol * ||b||` (or `rel_tol`
/// absolutely for zero right-hand sides).
pub fn pcg(op: &SparseOperator, rhs: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = op.n();
    assert_eq!(rhs.len(), n);
    if n == 0 {
        return Ok(Vec::new());
    }
    let bnorm = norm(rhs);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let inv_diag: Vec<f64> = op
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    for iter in 0..max_iter {
        if norm(&r) <= rel_tol * bnorm {
            return Ok(x);
        }
        op.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Indefinite { iter });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let residual = norm(&r) / bnorm;
    if residual <= rel_tol {
        Ok(x)
    } else {
        Err(Error::LinearMaxIter {
            iters: max_iter,
            residual,
        })
    }
}

/// Dense Gaussian elimination with partial pivoting; oracle and small-system
/// fallback.
pub fn dense_solve(matrix: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut b = rhs.to_vec();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())
            .unwrap();
        if a[piv][k].abs() < 1e-300 {
            return Err(Error::Structural("singular dense system".into()));
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f != 0.0 {
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= a[i][j] * x[j];
        }
        x[i] = s / a[i][i];
    }
    Ok(x)
}
