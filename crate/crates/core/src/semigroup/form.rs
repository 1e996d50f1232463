//! Finite-difference assembly of the sesquilinear form on a cell-centred grid.
//!
//! Unknowns sit at cell centres. The form is assembled face by face:
//! `<A grad u, grad v>` diagonal entries and the first-order terms live on
//! faces, off-diagonal entries of `A` on interior vertices. Dirichlet data
//! enter through the ghost value `-u`, Neumann through a vanishing face flux.

use crate::error::{Error, Result};
use crate::field::{Bc, CoefficientTuple, ComplexMatrix, ComplexVec, GridDomain, C64};
use crate::sparse::{Builder, SparseMatrix};

/// Form matrix `K` with `a(u, v) = v^H K u` and lumped mass.
#[derive(Clone, Debug)]
pub struct DiscreteForm {
    pub stiffness: SparseMatrix,
    pub mass: Vec<f64>,
    pub bc: Bc,
    pub h: Vec<f64>,
    pub domain: GridDomain,
    /// Faces where numerical diffusion was added (cell Peclet number > 2).
    pub upwinded_faces: usize,
}

/// One term of a gradient stencil: `du/dx_axis ~ sum w_k u_{idx_k}`.
type Stencil = Vec<(usize, f64)>;

struct Acc<'a> {
    b: Builder,
    t: &'a CoefficientTuple,
    upwinded: usize,
}

fn avg_mat(ms: &[ComplexMatrix]) -> Vec<C64> {
    let d = ms[0].dim();
    let mut out = vec![C64::new(0.0, 0.0); d * d];
    for m in ms {
        for (o, v) in out.iter_mut().zip(m.data()) {
            *o += v / ms.len() as f64;
        }
    }
    out
}

fn avg_vec(vs: &[ComplexVec]) -> Vec<C64> {
    let d = vs[0].dim();
    let mut out = vec![C64::new(0.0, 0.0); d];
    for v in vs {
        for (o, x) in out.iter_mut().zip(&v.0) {
            *o += x / vs.len() as f64;
        }
    }
    out
}

impl Acc<'_> {
    /// `w * coef * (grad_k u) * conj(grad_j v)`.
    fn grad_grad(&mut self, w: f64, coef: C64, gk: &Stencil, gj: &Stencil) {
        for (i, wi) in gj {
            for (jj, wj) in gk {
                self.b.add(*i, *jj, coef * (w * wi * wj));
            }
        }
    }

    /// `w * coef * (grad u) * conj(mean v)`.
    fn grad_val(&mut self, w: f64, coef: C64, g: &Stencil, m: &Stencil) {
        for (i, mi) in m {
            for (jj, gj) in g {
                self.b.add(*i, *jj, coef * (w * mi * gj));
            }
        }
    }

    /// `w * coef * (mean u) * conj(grad v)`.
    fn val_grad(&mut self, w: f64, coef: C64, m: &Stencil, g: &Stencil) {
        for (i, gi) in g {
            for (jj, mj) in m {
                self.b.add(*i, *jj, coef * (w * gi * mj));
            }
        }
    }

    /// Face normal to `axis` between cells `l` and `r` (either may be a wall).
    fn face(&mut self, axis: usize, l: Option<usize>, r: Option<usize>, h: f64, area: f64, bc: Bc) {
        let cells: Vec<usize> = [l, r].into_iter().flatten().collect();
        let cs: Vec<_> = cells.iter().map(|&k| self.t.cell(k).expect("cell in range")).collect();
        let a = avg_mat(&cs.iter().map(|c| c.a.clone()).collect::<Vec<_>>());
        let d = cs[0].dim();
        let akk = a[axis * d + axis];
        match (l, r) {
            (Some(l), Some(r)) => {
                let b = avg_vec(&cs.iter().map(|c| c.b.clone()).collect::<Vec<_>>())[axis];
                let c = avg_vec(&cs.iter().map(|c| c.c.clone()).collect::<Vec<_>>())[axis];
                let g = vec![(l, -1.0 / h), (r, 1.0 / h)];
                let m = vec![(l, 0.5), (r, 0.5)];
                let w = h * area;
                let lam = akk.re.max(1e-300);
                let drift = b.norm().max(c.norm());
                let mut diff = akk;
                if drift * h / lam > 2.0 {
                    diff += drift * h / 2.0;
                    self.upwinded += 1;
                }
                self.grad_grad(w, diff, &g, &g);
                self.grad_val(w, b, &g, &m);
                self.val_grad(w, c, &m, &g);
            }
            (Some(k), None) | (None, Some(k)) => {
                if bc == Bc::Dirichlet {
                    let g = vec![(k, 2.0 / h)];
                    self.grad_grad(0.5 * h * area, akk, &g, &g);
                }
            }
            (None, None) => {}
        }
    }
}

/// Assembles the form of `t` on `domain`.
pub fn assemble(t: &CoefficientTuple, domain: &GridDomain) -> Result<DiscreteForm> {
    if t.dim() != domain.dim {
        return Err(Error::Dimension(format!("tuple dim {} vs grid dim {}", t.dim(), domain.dim)));
    }
    if let Some(n) = t.n_cells() {
        if n != domain.len() {
            return Err(Error::Dimension(format!("{n} coefficient cells for {} grid cells", domain.len())));
        }
    }
    for cell in t.cells() {
        if cell.a.lambda() <= 0.0 {
            return Err(Error::NotElliptic(cell.a.lambda()));
        }
    }
    let n = domain.len();
    let vol = domain.cell_volume();
    let h: Vec<f64> = (0..domain.dim).map(|k| domain.h(k)).collect();
    let mut acc = Acc { b: Builder::new(n), t, upwinded: 0 };
    if domain.dim == 1 {
        let nx = domain.n_cells[0];
        for f in 0..=nx {
            let l = if f > 0 { Some(f - 1) } else { None };
            let r = if f < nx { Some(f) } else { None };
            acc.face(0, l, r, h[0], 1.0, domain.bc);
        }
    } else {
        let (nx, ny) = (domain.n_cells[0], domain.n_cells[1]);
        let id = |i: usize, j: usize| j * nx + i;
        for j in 0..ny {
            for f in 0..=nx {
                let l = if f > 0 { Some(id(f - 1, j)) } else { None };
                let r = if f < nx { Some(id(f, j)) } else { None };
                acc.face(0, l, r, h[0], h[1], domain.bc);
            }
        }
        for i in 0..nx {
            for f in 0..=ny {
                let l = if f > 0 { Some(id(i, f - 1)) } else { None };
                let r = if f < ny { Some(id(i, f)) } else { None };
                acc.face(1, l, r, h[1], h[0], domain.bc);
            }
        }
        // mixed derivatives on interior vertices
        for j in 1..ny {
            for i in 1..nx {
                let four = [id(i - 1, j - 1), id(i, j - 1), id(i - 1, j), id(i, j)];
                let cs: Vec<_> = four.iter().map(|&k| t.cell(k).expect("cell")).collect();
                let a = avg_mat(&cs.iter().map(|c| c.a.clone()).collect::<Vec<_>>());
                let gx: Stencil = vec![
                    (four[0], -0.5 / h[0]),
                    (four[1], 0.5 / h[0]),
                    (four[2], -0.5 / h[0]),
                    (four[3], 0.5 / h[0]),
                ];
                let gy: Stencil = vec![
                    (four[0], -0.5 / h[1]),
                    (four[1], -0.5 / h[1]),
                    (four[2], 0.5 / h[1]),
                    (four[3], 0.5 / h[1]),
                ];
                let w = h[0] * h[1];
                // A_{xy} d_y u conj(d_x v) + A_{yx} d_x u conj(d_y v)
                acc.grad_grad(w, a[1], &gy, &gx);
                acc.grad_grad(w, a[2], &gx, &gy);
            }
        }
    }
    for k in 0..n {
        acc.b.add(k, k, C64::new(vol * t.v_at(k), 0.0));
    }
    let upwinded_faces = acc.upwinded;
    Ok(DiscreteForm {
        stiffness: acc.b.build(),
        mass: vec![vol; n],
        bc: domain.bc,
        h,
        domain: domain.clone(),
        upwinded_faces,
    })
}

/// Form of the plain Laplacian `(I, 0, 0, 0)`: `v^H K v = ||grad_h v||^2`.
pub fn laplacian(domain: &GridDomain) -> SparseMatrix {
    let t = CoefficientTuple::constant(crate::field::Cell::pure(ComplexMatrix::identity(domain.dim), 0.0));
    assemble(&t, domain).expect("identity is elliptic").stiffness
}

impl DiscreteForm {
    pub fn n(&self) -> usize {
        self.mass.len()
    }

    /// `a_h(u, v)`.
    pub fn eval(&self, u: &[C64], v: &[C64]) -> C64 {
        self.stiffness.form(u, v)
    }
}

/// Per-face gradient samples of a grid function: `(weight, mean value, gradient)`.
/// Interior faces use the two-point difference; Dirichlet walls use the ghost
/// value. Each face carries the gradient component normal to it and, in 2D,
/// the tangential component averaged from the neighbouring faces.
pub fn face_samples(domain: &GridDomain, u: &[C64]) -> Vec<(f64, C64, Vec<C64>, usize)> {
    let mut out = Vec::new();
    let h: Vec<f64> = (0..domain.dim).map(|k| domain.h(k)).collect();
    if domain.dim == 1 {
        let nx = domain.n_cells[0];
        for f in 0..=nx {
            match (f.checked_sub(1), (f < nx).then_some(f)) {
                (Some(l), Some(r)) => {
                    out.push((h[0], (u[l] + u[r]) * 0.5, vec![(u[r] - u[l]) / h[0]], l));
                }
                (Some(k), None) | (None, Some(k)) => {
                    if domain.bc == Bc::Dirichlet {
                        let s = if f == 0 { 1.0 } else { -1.0 };
                        out.push((0.5 * h[0], C64::new(0.0, 0.0), vec![u[k] * (2.0 * s / h[0])], k));
                    }
                }
                _ => {}
            }
        }
        return out;
    }
    let (nx, ny) = (domain.n_cells[0], domain.n_cells[1]);
    let id = |i: usize, j: usize| j * nx + i;
    let cell_grad = |i: usize, j: usize, axis: usize| -> C64 {
        let (n, hh) = if axis == 0 { (nx, h[0]) } else { (ny, h[1]) };
        let k = if axis == 0 { i } else { j };
        let at = |m: isize| -> C64 {
            if m < 0 || m >= n as isize {
                if domain.bc == Bc::Dirichlet {
                    -u[id(i, j)]
                } else {
                    u[id(i, j)]
                }
            } else if axis == 0 {
                u[id(m as usize, j)]
            } else {
                u[id(i, m as usize)]
            }
        };
        (at(k as isize + 1) - at(k as isize - 1)) / (2.0 * hh)
    };
    for j in 0..ny {
        for f in 0..=nx {
            let area = h[0] * h[1];
            match (f.checked_sub(1), (f < nx).then_some(f)) {
                (Some(l), Some(r)) => {
                    let (a, b) = (id(l, j), id(r, j));
                    let gy = (cell_grad(l, j, 1) + cell_grad(r, j, 1)) * 0.5;
                    out.push((area, (u[a] + u[b]) * 0.5, vec![(u[b] - u[a]) / h[0], gy], a));
                }
                (Some(k), None) | (None, Some(k)) => {
                    if domain.bc == Bc::Dirichlet {
                        let s = if f == 0 { 1.0 } else { -1.0 };
                        let c = id(k, j);
                        out.push((0.5 * area, C64::new(0.0, 0.0), vec![u[c] * (2.0 * s / h[0]), C64::new(0.0, 0.0)], c));
                    }
                }
                _ => {}
            }
        }
    }
    for i in 0..nx {
        for f in 0..=ny {
            let area = h[0] * h[1];
            match (f.checked_sub(1), (f < ny).then_some(f)) {
                (Some(l), Some(r)) => {
                    let (a, b) = (id(i, l), id(i, r));
                    let gx = (cell_grad(i, l, 0) + cell_grad(i, r, 0)) * 0.5;
                    out.push((area, (u[a] + u[b]) * 0.5, vec![gx, (u[b] - u[a]) / h[1]], a));
                }
                (Some(k), None) | (None, Some(k)) => {
                    if domain.bc == Bc::Dirichlet {
                        let s = if f == 0 { 1.0 } else { -1.0 };
                        let c = id(i, k);
                        out.push((0.5 * area, C64::new(0.0, 0.0), vec![C64::new(0.0, 0.0), u[c] * (2.0 * s / h[1])], c));
                    }
                }
                _ => {}
            }
        }
    }
    // each face in 2D carries a full gradient, so halve weights to avoid double counting
    for s in out.iter_mut() {
        s.0 *= 0.5;
    }
    out
}
