//! Row-list sparse matrices and a banded LU with partial pivoting.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::field::C64;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    rows: Vec<Vec<(usize, C64)>>,
}

/// Accumulates entries before freezing into a [`SparseMatrix`].
#[derive(Clone, Debug)]
pub struct Builder {
    n: usize,
    rows: Vec<BTreeMap<usize, C64>>,
}

impl Builder {
    pub fn new(n: usize) -> Self {
        Self { n, rows: vec![BTreeMap::new(); n] }
    }

    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        if v != C64::new(0.0, 0.0) {
            *self.rows[i].entry(j).or_insert(C64::new(0.0, 0.0)) += v;
        }
    }

    pub fn build(self) -> SparseMatrix {
        SparseMatrix {
            n: self.n,
            rows: self.rows.into_iter().map(|r| r.into_iter().collect()).collect(),
        }
    }
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        Self { n, rows: (0..n).map(|i| vec![(i, C64::new(1.0, 0.0))]).collect() }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self {
            n: d.len(),
            rows: d.iter().enumerate().map(|(i, &x)| vec![(i, C64::new(x, 0.0))]).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[(usize, C64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.rows[i]
            .iter()
            .find(|(c, _)| *c == j)
            .map(|(_, v)| *v)
            .unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        self.rows.iter().map(|r| r.iter().map(|(j, v)| v * x[*j]).sum()).collect()
    }

    /// `v^H K u`.
    pub fn form(&self, u: &[C64], v: &[C64]) -> C64 {
        self.matvec(u).iter().zip(v).map(|(a, b)| a * b.conj()).sum()
    }

    pub fn adjoint(&self) -> Self {
        let mut b = Builder::new(self.n);
        for (i, r) in self.rows.iter().enumerate() {
            for (j, v) in r {
                b.add(*j, i, v.conj());
            }
        }
        b.build()
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: C64, other: &SparseMatrix, beta: C64) -> Self {
        let mut b = Builder::new(self.n);
        for (i, r) in self.rows.iter().enumerate() {
            for (j, v) in r {
                b.add(i, *j, alpha * v);
            }
        }
        for (i, r) in other.rows.iter().enumerate() {
            for (j, v) in r {
                b.add(i, *j, beta * v);
            }
        }
        b.build()
    }

    pub fn scale(&self, z: C64) -> Self {
        Self {
            n: self.n,
            rows: self.rows.iter().map(|r| r.iter().map(|(j, v)| (*j, v * z)).collect()).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &SparseMatrix) -> f64 {
        let d = self.combine(C64::new(1.0, 0.0), other, C64::new(-1.0, 0.0));
        d.rows.iter().flatten().map(|(_, v)| v.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.rows.iter().map(|r| r.iter().map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for (i, r) in self.rows.iter().enumerate() {
            for (j, _) in r {
                if *j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }

    pub fn to_dense(&self) -> Vec<Vec<C64>> {
        let mut d = vec![vec![C64::new(0.0, 0.0); self.n]; self.n];
        for (i, r) in self.rows.iter().enumerate() {
            for (j, v) in r {
                d[i][*j] = *v;
            }
        }
        d
    }
}

/// LU factors of a banded matrix, rows stored over columns `i-kl ..= i+ku+kl`.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    a: Vec<C64>,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn factor(m: &SparseMatrix) -> Result<Self> {
        let n = m.n;
        let (kl, ku) = m.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut lu = Self { n, kl, ku, width, a: vec![C64::new(0.0, 0.0); n * width], piv: vec![0; n] };
        for (i, r) in m.rows.iter().enumerate() {
            for (j, v) in r {
                *lu.at(i, *j) = *v;
            }
        }
        let scale = m.norm_inf().max(f64::MIN_POSITIVE);
        let reach = ku + kl;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.get(k, k).norm();
            for i in k + 1..=last {
                let v = lu.get(i, k).norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-300 * scale || best == 0.0 {
                return Err(Error::Factorization(k));
            }
            lu.piv[k] = p;
            let cmax = (k + reach).min(n - 1);
            if p != k {
                for col in k..=cmax {
                    let t = lu.get(k, col);
                    *lu.at(k, col) = lu.get(p, col);
                    *lu.at(p, col) = t;
                }
            }
            let pivot = lu.get(k, k);
            for i in k + 1..=last {
                let f = lu.get(i, k) / pivot;
                if f == C64::new(0.0, 0.0) {
                    continue;
                }
                *lu.at(i, k) = f;
                for col in k + 1..=cmax {
                    let u = lu.get(k, col);
                    *lu.at(i, col) -= f * u;
                }
            }
        }
        Ok(lu)
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> C64 {
        if j + self.kl < i || j > i + self.ku + self.kl {
            return C64::new(0.0, 0.0);
        }
        self.a[self.offset(i, j)]
    }

    #[inline]
    fn at(&mut self, i: usize, j: usize) -> &mut C64 {
        let o = self.offset(i, j);
        &mut self.a[o]
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for i in k + 1..=(k + self.kl).min(n.saturating_sub(1)) {
                x[i] -= self.get(i, k) * xk;
            }
        }
        let reach = self.ku + self.kl;
        for k in (0..n).rev() {
            let mut s = x[k];
            for col in k + 1..=(k + reach).min(n - 1) {
                s -= self.get(k, col) * x[col];
            }
            x[k] = s / self.get(k, k);
        }
        x
    }
}
