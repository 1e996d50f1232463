//! Domains, grids and coefficient tuples.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Vector in C^d with the inner product `<z,w> = sum z_j conj(w_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexVec(pub Vec<C64>);

impl ComplexVec {
    pub fn new(entries: Vec<C64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Dimension("empty vector".into()));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(Self(entries))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![C64::new(0.0, 0.0); d])
    }

    pub fn from_real(x: &[f64]) -> Self {
        Self(x.iter().map(|&r| C64::new(r, 0.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, w: &ComplexVec) -> C64 {
        self.0.iter().zip(&w.0).map(|(a, b)| a * b.conj()).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn conj(&self) -> ComplexVec {
        Self(self.0.iter().map(|z| z.conj()).collect())
    }

    pub fn re(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.im).collect()
    }

    pub fn scale(&self, s: C64) -> ComplexVec {
        Self(self.0.iter().map(|z| z * s).collect())
    }

    pub fn add(&self, w: &ComplexVec) -> ComplexVec {
        Self(self.0.iter().zip(&w.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, w: &ComplexVec) -> ComplexVec {
        Self(self.0.iter().zip(&w.0).map(|(a, b)| a - b).collect())
    }

    /// `sum_k xi_k b_k`, i.e. `<xi, conj(b)>`.
    pub fn bilinear(&self, b: &ComplexVec) -> C64 {
        self.0.iter().zip(&b.0).map(|(x, y)| x * y).sum()
    }

    /// Real coordinates `(Re xi, Im xi)` in R^{2d}.
    pub fn to_real(&self) -> Vec<f64> {
        let mut out = self.re();
        out.extend(self.im());
        out
    }

    pub fn from_real_coords(x: &[f64]) -> ComplexVec {
        let d = x.len() / 2;
        Self((0..d).map(|k| C64::new(x[k], x[d + k])).collect())
    }
}

/// Square complex matrix with cached `lambda` (bottom of the Hermitian part)
/// and `Lambda` (operator norm).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    d: usize,
    data: Vec<C64>,
    lambda: f64,
    big_lambda: f64,
}

impl ComplexMatrix {
    /// Row-major `d x d` entries.
    pub fn new(d: usize, data: Vec<C64>) -> Result<Self> {
        if d == 0 || data.len() != d * d {
            return Err(Error::Dimension(format!("{} entries for d = {}", data.len(), d)));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        let (lambda, big_lambda) = spectral_constants(d, &data);
        Ok(Self { d, data, lambda, big_lambda })
    }

    pub fn from_rows(rows: Vec<Vec<C64>>) -> Result<Self> {
        let d = rows.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::NotSquare { rows: d, bad: i, len: r.len() });
            }
        }
        Self::new(d, rows.into_iter().flatten().collect())
    }

    pub fn identity(d: usize) -> Self {
        Self::scalar(d, C64::new(1.0, 0.0))
    }

    pub fn scalar(d: usize, z: C64) -> Self {
        let mut data = vec![C64::new(0.0, 0.0); d * d];
        for k in 0..d {
            data[k * d + k] = z;
        }
        Self::new(d, data).expect("finite scalar matrix")
    }

    pub fn diag(entries: &[C64]) -> Self {
        let d = entries.len();
        let mut data = vec![C64::new(0.0, 0.0); d * d];
        for (k, z) in entries.iter().enumerate() {
            data[k * d + k] = *z;
        }
        Self::new(d, data).expect("finite diagonal")
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.d + j]
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn big_lambda(&self) -> f64 {
        self.big_lambda
    }

    pub fn adjoint(&self) -> Self {
        let d = self.d;
        let mut data = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for j in 0..d {
                data[j * d + i] = self.data[i * d + j].conj();
            }
        }
        Self { d, data, lambda: self.lambda, big_lambda: self.big_lambda }
    }

    pub fn scale(&self, z: C64) -> Self {
        Self::new(self.d, self.data.iter().map(|a| a * z).collect()).expect("finite scale")
    }

    /// `A + s I`.
    pub fn shift(&self, s: f64) -> Self {
        let mut data = self.data.clone();
        for k in 0..self.d {
            data[k * self.d + k] += s;
        }
        Self::new(self.d, data).expect("finite shift")
    }

    pub fn mul_vec(&self, x: &ComplexVec) -> ComplexVec {
        let d = self.d;
        ComplexVec(
            (0..d)
                .map(|i| (0..d).map(|j| self.data[i * d + j] * x.0[j]).sum())
                .collect(),
        )
    }

    pub fn mul(&self, other: &ComplexMatrix) -> Self {
        let d = self.d;
        let mut data = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for j in 0..d {
                data[i * d + j] = (0..d).map(|k| self.get(i, k) * other.get(k, j)).sum();
            }
        }
        Self::new(d, data).expect("finite product")
    }

    pub fn is_real_symmetric(&self, tol: f64) -> bool {
        (0..self.d).all(|i| {
            (0..self.d).all(|j| {
                let a = self.get(i, j);
                a.im.abs() <= tol && (a.re - self.get(j, i).re).abs() <= tol
            })
        })
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Real form `[[Re A, -Im A], [Im A, Re A]]`.
    pub fn real_form(&self) -> DMatrix<f64> {
        let d = self.d;
        DMatrix::from_fn(2 * d, 2 * d, |r, c| {
            let a = self.get(r % d, c % d);
            match (r < d, c < d) {
                (true, true) | (false, false) => a.re,
                (true, false) => -a.im,
                (false, true) => a.im,
            }
        })
    }
}

fn spectral_constants(d: usize, data: &[C64]) -> (f64, f64) {
    let m = DMatrix::from_fn(2 * d, 2 * d, |r, c| {
        let a = data[(r % d) * d + c % d];
        match (r < d, c < d) {
            (true, true) | (false, false) => a.re,
            (true, false) => -a.im,
            (false, true) => a.im,
        }
    });
    let sym = (&m + m.transpose()) * 0.5;
    let lambda = sym.symmetric_eigenvalues().min();
    let big = m.singular_values().max();
    (lambda, big)
}

/// `(lambda, Lambda)`; errors when `lambda <= 0`.
pub fn ellipticity_constants(a: &ComplexMatrix) -> Result<(f64, f64)> {
    if a.lambda <= 0.0 {
        return Err(Error::NotElliptic(a.lambda));
    }
    Ok((a.lambda, a.big_lambda))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bc {
    Dirichlet,
    Neumann,
}

/// Rectangular grid of `n_cells` cells per axis, unknowns at cell centres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    pub dim: usize,
    pub extents: Vec<[f64; 2]>,
    pub n_cells: Vec<usize>,
    pub bc: Bc,
}

impl GridDomain {
    pub fn new(extents: Vec<[f64; 2]>, n_cells: Vec<usize>, bc: Bc) -> Result<Self> {
        let dim = extents.len();
        if !(1..=2).contains(&dim) || n_cells.len() != dim {
            return Err(Error::Dimension(format!("grid dim {dim} with {} axes", n_cells.len())));
        }
        if n_cells.iter().any(|&n| n < 2) {
            return Err(Error::InvalidParam("n_cells must be >= 2".into()));
        }
        if extents.iter().any(|e| !(e[1] > e[0]) || !e[0].is_finite() || !e[1].is_finite()) {
            return Err(Error::InvalidParam("extents must be finite with positive length".into()));
        }
        Ok(Self { dim, extents, n_cells, bc })
    }

    pub fn interval(a: f64, b: f64, n: usize, bc: Bc) -> Result<Self> {
        Self::new(vec![[a, b]], vec![n], bc)
    }

    pub fn h(&self, axis: usize) -> f64 {
        (self.extents[axis][1] - self.extents[axis][0]) / self.n_cells[axis] as f64
    }

    pub fn len(&self) -> usize {
        self.n_cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|k| self.h(k)).product()
    }

    /// Lexicographic index, x fastest.
    pub fn index(&self, ij: &[usize]) -> usize {
        if self.dim == 1 {
            ij[0]
        } else {
            ij[1] * self.n_cells[0] + ij[0]
        }
    }

    pub fn multi_index(&self, k: usize) -> Vec<usize> {
        if self.dim == 1 {
            vec![k]
        } else {
            vec![k % self.n_cells[0], k / self.n_cells[0]]
        }
    }

    pub fn center(&self, k: usize) -> Vec<f64> {
        self.multi_index(k)
            .iter()
            .enumerate()
            .map(|(ax, &i)| self.extents[ax][0] + (i as f64 + 0.5) * self.h(ax))
            .collect()
    }

    pub fn centers(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.center(k)).collect()
    }

    pub fn with_cells(&self, n_cells: Vec<usize>) -> Result<Self> {
        Self::new(self.extents.clone(), n_cells, self.bc)
    }
}

/// Coefficients of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub a: ComplexMatrix,
    pub b: ComplexVec,
    pub c: ComplexVec,
    pub v: f64,
}

impl Cell {
    pub fn new(a: ComplexMatrix, b: ComplexVec, c: ComplexVec, v: f64) -> Result<Self> {
        let d = a.dim();
        if b.dim() != d || c.dim() != d {
            return Err(Error::Dimension(format!("A is {d}x{d}, b has {}, c has {}", b.dim(), c.dim())));
        }
        if !v.is_finite() {
            return Err(Error::NonFinite("potential"));
        }
        Ok(Self { a, b, c, v })
    }

    /// `(A, 0, 0, V)`.
    pub fn pure(a: ComplexMatrix, v: f64) -> Self {
        let d = a.dim();
        Self { a, b: ComplexVec::zeros(d), c: ComplexVec::zeros(d), v }
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn v_plus(&self) -> f64 {
        self.v.max(0.0)
    }

    pub fn v_minus(&self) -> f64 {
        (-self.v).max(0.0)
    }
}

/// The tuple `(A, b, c, V)`, cellwise constant. A field of length one is
/// constant over the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientTuple {
    d: usize,
    cells: Option<usize>,
    pub a: Vec<ComplexMatrix>,
    pub b: Vec<ComplexVec>,
    pub c: Vec<ComplexVec>,
    pub v: Vec<f64>,
}

impl CoefficientTuple {
    pub fn new(
        a: Vec<ComplexMatrix>,
        b: Vec<ComplexVec>,
        c: Vec<ComplexVec>,
        v: Vec<f64>,
    ) -> Result<Self> {
        if a.is_empty() || b.is_empty() || c.is_empty() || v.is_empty() {
            return Err(Error::Dimension("empty coefficient field".into()));
        }
        let d = a[0].dim();
        if a.iter().any(|m| m.dim() != d) || b.iter().chain(&c).any(|x| x.dim() != d) {
            return Err(Error::Dimension("mixed dimensions in tuple".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("potential"));
        }
        let lens: Vec<usize> = [a.len(), b.len(), c.len(), v.len()]
            .into_iter()
            .filter(|&l| l > 1)
            .collect();
        let cells = match lens.first() {
            None => None,
            Some(&n) => {
                if lens.iter().any(|&l| l != n) {
                    return Err(Error::Dimension("per-cell fields of different lengths".into()));
                }
                Some(n)
            }
        };
        Ok(Self { d, cells, a, b, c, v })
    }

    pub fn constant(cell: Cell) -> Self {
        Self::new(vec![cell.a], vec![cell.b], vec![cell.c], vec![cell.v]).expect("valid cell")
    }

    /// `(A, 0, 0, V)` with per-cell potential.
    pub fn with_potential(a: ComplexMatrix, v: Vec<f64>) -> Result<Self> {
        let d = a.dim();
        Self::new(vec![a], vec![ComplexVec::zeros(d)], vec![ComplexVec::zeros(d)], v)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of cells if any field is per-cell.
    pub fn n_cells(&self) -> Option<usize> {
        self.cells
    }

    /// Number of distinct cells to iterate over (1 for a constant tuple).
    pub fn n_distinct(&self) -> usize {
        self.cells.unwrap_or(1)
    }

    pub fn is_constant(&self) -> bool {
        self.cells.is_none()
    }

    fn pick<T: Clone>(f: &[T], x: usize) -> T {
        if f.len() == 1 {
            f[0].clone()
        } else {
            f[x].clone()
        }
    }

    /// Coefficients at cell `x`.
    pub fn cell(&self, x: usize) -> Result<Cell> {
        if let Some(n) = self.cells {
            if x >= n {
                return Err(Error::OutOfRange { index: x, len: n });
            }
        }
        Ok(Cell {
            a: Self::pick(&self.a, x),
            b: Self::pick(&self.b, x),
            c: Self::pick(&self.c, x),
            v: Self::pick(&self.v, x),
        })
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.n_distinct()).map(move |x| self.cell(x).expect("in range"))
    }

    pub fn v_at(&self, x: usize) -> f64 {
        Self::pick(&self.v, x)
    }

    pub fn v_plus(&self) -> Vec<f64> {
        self.v.iter().map(|x| x.max(0.0)).collect()
    }

    pub fn v_minus(&self) -> Vec<f64> {
        self.v.iter().map(|x| (-x).max(0.0)).collect()
    }

    pub fn map_v(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { v: self.v.iter().map(|&x| f(x)).collect(), ..self.clone() }
    }

    pub fn max_diff(&self, other: &CoefficientTuple) -> f64 {
        let n = self.n_distinct().max(other.n_distinct());
        let mut m: f64 = 0.0;
        for x in 0..n {
            let (p, q) = (self.cell(x).unwrap(), other.cell(x).unwrap());
            m = m.max(p.a.max_abs_diff(&q.a));
            m = m.max(p.b.sub(&q.b).norm()).max(p.c.sub(&q.c).norm());
            m = m.max((p.v - q.v).abs());
        }
        m
    }

    /// Constant field expanded to `n` cells.
    pub fn expand(&self, n: usize) -> Result<Self> {
        let cells = (0..n).map(|x| self.cell(x)).collect::<Result<Vec<Cell>>>()?;
        Self::new(
            cells.iter().map(|c| c.a.clone()).collect(),
            cells.iter().map(|c| c.b.clone()).collect(),
            cells.iter().map(|c| c.c.clone()).collect(),
            cells.iter().map(|c| c.v).collect(),
        )
    }
}

/// `(alpha, sigma)` with `alpha >= 0`, `0 <= sigma < 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubcriticalityCert {
    pub alpha: f64,
    pub sigma: f64,
}

impl SubcriticalityCert {
    pub fn new(alpha: f64, sigma: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParam(format!("alpha = {alpha} must be >= 0")));
        }
        if !(0.0..1.0).contains(&sigma) {
            return Err(Error::InvalidParam(format!("sigma = {sigma} must lie in [0,1)")));
        }
        Ok(Self { alpha, sigma })
    }

    pub fn zero() -> Self {
        Self { alpha: 0.0, sigma: 0.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixField {
    Constant(Vec<Vec<[f64; 2]>>),
    PerCell(Vec<Vec<Vec<[f64; 2]>>>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum VectorField {
    Constant(Vec<[f64; 2]>),
    PerCell(Vec<Vec<[f64; 2]>>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ScalarField {
    Constant(f64),
    PerCell(Vec<f64>),
}

/// On-disk coefficient document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientDoc {
    pub dim: usize,
    pub extents: Vec<[f64; 2]>,
    pub n_cells: Vec<usize>,
    pub bc: Bc,
    #[serde(rename = "A")]
    a: MatrixField,
    b: VectorField,
    c: VectorField,
    #[serde(rename = "V")]
    v: ScalarField,
}

fn cplx(z: &[f64; 2]) -> C64 {
    C64::new(z[0], z[1])
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

impl CoefficientDoc {
    pub fn into_parts(self) -> Result<(GridDomain, CoefficientTuple)> {
        let domain = GridDomain::new(self.extents, self.n_cells, self.bc)?;
        if domain.dim != self.dim {
            return Err(Error::Dimension(format!("dim {} vs {} extents", self.dim, domain.dim)));
        }
        let mat = |rows: &Vec<Vec<[f64; 2]>>| {
            ComplexMatrix::from_rows(rows.iter().map(|r| r.iter().map(cplx).collect()).collect())
        };
        let vecf = |v: &Vec<[f64; 2]>| ComplexVec::new(v.iter().map(cplx).collect());
        let a = match &self.a {
            MatrixField::Constant(m) => vec![mat(m)?],
            MatrixField::PerCell(ms) => ms.iter().map(mat).collect::<Result<_>>()?,
        };
        let vf = |f: &VectorField| -> Result<Vec<ComplexVec>> {
            match f {
                VectorField::Constant(v) => Ok(vec![vecf(v)?]),
                VectorField::PerCell(vs) => vs.iter().map(vecf).collect(),
            }
        };
        let v = match &self.v {
            ScalarField::Constant(x) => vec![*x],
            ScalarField::PerCell(xs) => xs.clone(),
        };
        let tuple = CoefficientTuple::new(a, vf(&self.b)?, vf(&self.c)?, v)?;
        if let Some(n) = tuple.n_cells() {
            if n != domain.len() {
                return Err(Error::Dimension(format!("{n} cell values for {} cells", domain.len())));
            }
        }
        if tuple.dim() != domain.dim {
            return Err(Error::Dimension("matrix size differs from grid dimension".into()));
        }
        Ok((domain, tuple))
    }

    pub fn from_parts(domain: &GridDomain, t: &CoefficientTuple) -> Self {
        let m = |a: &ComplexMatrix| {
            (0..a.dim()).map(|i| (0..a.dim()).map(|j| pair(a.get(i, j))).collect()).collect()
        };
        let v = |x: &ComplexVec| x.0.iter().map(|z| pair(*z)).collect::<Vec<_>>();
        Self {
            dim: domain.dim,
            extents: domain.extents.clone(),
            n_cells: domain.n_cells.clone(),
            bc: domain.bc,
            a: if t.a.len() == 1 {
                MatrixField::Constant(m(&t.a[0]))
            } else {
                MatrixField::PerCell(t.a.iter().map(m).collect())
            },
            b: if t.b.len() == 1 {
                VectorField::Constant(v(&t.b[0]))
            } else {
                VectorField::PerCell(t.b.iter().map(v).collect())
            },
            c: if t.c.len() == 1 {
                VectorField::Constant(v(&t.c[0]))
            } else {
                VectorField::PerCell(t.c.iter().map(v).collect())
            },
            v: if t.v.len() == 1 {
                ScalarField::Constant(t.v[0])
            } else {
                ScalarField::PerCell(t.v.clone())
            },
        }
    }
}

pub fn load_coefficients(path: &Path) -> Result<(GridDomain, CoefficientTuple)> {
    let text = std::fs::read_to_string(path)?;
    parse_coefficients(&text)
}

pub fn parse_coefficients(text: &str) -> Result<(GridDomain, CoefficientTuple)> {
    let doc: CoefficientDoc = serde_json::from_str(text)?;
    doc.into_parts()
}
