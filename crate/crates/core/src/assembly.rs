//! Assembly of the weighted form `(1/d_s) int y^alpha grad w . grad v` on P1 x P1
//! tensor spaces, trace loads, and trace extraction.
//!
//! Every local matrix factorises into an x-part (exact P1 formulas) and a y-part
//! built from the weighted moments `int_I y^alpha t^j dy`, `t = (y - y0)/h`.

use std::ops::{Deref, DerefMut};

use rayon::prelude::*;

use crate::base_mesh::BaseGrid;
use crate::cylinder_mesh::{GradedInterval, TensorMesh};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::sparse::CsrMatrix;

/// `int_{y0}^{y1} y^(alpha + m) dy` in closed form.
pub fn weighted_interval_integral(alpha: f64, m: u32, y0: f64, y1: f64) -> Result<f64> {
    if !(alpha > -1.0) {
        return Err(Error::NonIntegrableWeight { alpha });
    }
    if !(y0 >= 0.0 && y1 > y0) {
        return Err(Error::InvalidArgument(format!(
            "weighted integral needs 0 <= y0 < y1 (got {y0}, {y1})"
        )));
    }
    let p = alpha + m as f64 + 1.0;
    Ok((y1.powf(p) - y0.powf(p)) / p)
}

const MOMENT_GAUSS_POINTS: usize = 12;

/// Moments `int_{y0}^{y1} y^alpha t^j dy` for `j = 0..=max_degree`.
///
/// Near the origin (`y0 < h`) the binomial expansion of the closed form loses at
/// most a factor `2^j`; away from it the weight is analytic on a neighbourhood
/// of the interval and Gauss-Legendre is exact to round-off while the closed
/// form would cancel catastrophically.
pub fn weighted_moments(alpha: f64, y0: f64, y1: f64, max_degree: usize) -> Result<Vec<f64>> {
    let h = y1 - y0;
    if !(alpha > -1.0) {
        return Err(Error::NonIntegrableWeight { alpha });
    }
    if !(y0 >= 0.0 && h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "weighted moments need 0 <= y0 < y1 (got {y0}, {y1})"
        )));
    }
    let mut mu = vec![0.0; max_degree + 1];
    if y0 < h {
        let raw: Vec<f64> = (0..=max_degree)
            .map(|i| weighted_interval_integral(alpha, i as u32, y0, y1))
            .collect::<Result<_>>()?;
        for (j, mj) in mu.iter_mut().enumerate() {
            let mut acc = 0.0;
            let mut binom = 1.0;
            for (i, r) in raw.iter().enumerate().take(j + 1) {
                if i > 0 {
                    binom = binom * (j + 1 - i) as f64 / i as f64;
                }
                acc += binom * (-y0).powi((j - i) as i32) * r;
            }
            *mj = acc / h.powi(j as i32);
        }
    } else {
        for (t, w) in gauss_legendre(MOMENT_GAUSS_POINTS) {
            let wy = w * h * (y0 + t * h).powf(alpha);
            let mut tp = 1.0;
            for mj in mu.iter_mut() {
                *mj += wy * tp;
                tp *= t;
            }
        }
    }
    Ok(mu)
}

/// Lagrange basis on `[0, 1]` as monomial coefficients; P2 nodes are ordered
/// left, midpoint, right.
pub fn lagrange_coefficients(degree: usize) -> Vec<Vec<f64>> {
    match degree {
        1 => vec![vec![1.0, -1.0], vec![0.0, 1.0]],
        2 => vec![
            vec![1.0, -3.0, 2.0],
            vec![0.0, 4.0, -4.0],
            vec![0.0, -1.0, 2.0],
        ],
        _ => panic!("only P1 and P2 interval elements are supported"),
    }
}

fn derivative(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &a)| i as f64 * a)
        .collect()
}

fn moment_product(a: &[f64], b: &[f64], mu: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            s += ai * bj * mu[i + j];
        }
    }
    s
}

/// Weighted interval matrices between Lagrange bases of degree `p` (rows) and `q`
/// (columns): `K_ab = int y^alpha phi_a' psi_b'`, `M_ab = int y^alpha phi_a psi_b`,
/// both row-major.
pub fn interval_matrices(
    alpha: f64,
    y0: f64,
    y1: f64,
    p: usize,
    q: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = y1 - y0;
    let mu = weighted_moments(alpha, y0, y1, p + q)?;
    let rows = lagrange_coefficients(p);
    let cols = lagrange_coefficients(q);
    let mut k = Vec::with_capacity(rows.len() * cols.len());
    let mut m = Vec::with_capacity(rows.len() * cols.len());
    for a in &rows {
        let da = derivative(a);
        for b in &cols {
            let db = derivative(b);
            k.push(moment_product(&da, &db, &mu) / (h * h));
            m.push(moment_product(a, b, &mu));
        }
    }
    Ok((k, m))
}

/// Symmetric tridiagonal matrix; `off[k]` couples `k` and `k + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.abs_diff(j) {
            0 => self.diag[i],
            1 => self.off[i.min(j)],
            _ => 0.0,
        }
    }

    /// Leading principal block of size `n`.
    pub fn leading(&self, n: usize) -> Tridiagonal {
        Tridiagonal {
            diag: self.diag[..n].to_vec(),
            off: self.off[..n.saturating_sub(1)].to_vec(),
        }
    }
}

/// Global P1 stiffness and mass in `y` over all levels `0..=M`.
pub fn y_matrices(interval: &GradedInterval, alpha: f64) -> Result<(Tridiagonal, Tridiagonal)> {
    let levels = interval.m() + 1;
    let mut ky = Tridiagonal {
        diag: vec![0.0; levels],
        off: vec![0.0; levels - 1],
    };
    let mut my = ky.clone();
    let y = interval.nodes();
    for k in 0..interval.m() {
        let (kl, ml) = interval_matrices(alpha, y[k], y[k + 1], 1, 1)?;
        ky.diag[k] += kl[0];
        ky.diag[k + 1] += kl[3];
        ky.off[k] += kl[1];
        my.diag[k] += ml[0];
        my.diag[k + 1] += ml[3];
        my.off[k] += ml[1];
    }
    Ok((ky, my))
}

/// Global P1 stiffness and mass on the base mesh over all vertices.
pub fn base_matrices<G: BaseGrid>(mesh: &G) -> (CsrMatrix, CsrMatrix) {
    let n = G::DIM + 1;
    let mut kt = Vec::with_capacity(mesh.n_cells() * n * n);
    let mut mt = Vec::with_capacity(mesh.n_cells() * n * n);
    for c in 0..mesh.n_cells() {
        let (k, m) = mesh.p1_local(c);
        let verts = mesh.cell(c);
        for i in 0..n {
            for j in 0..n {
                kt.push((verts[i], verts[j], k[i * n + j]));
                mt.push((verts[i], verts[j], m[i * n + j]));
            }
        }
    }
    let nv = mesh.n_vertices();
    (
        CsrMatrix::from_triplets(nv, nv, kt),
        CsrMatrix::from_triplets(nv, nv, mt),
    )
}

/// Nodal coefficient vector over a finite element space.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScalarField(pub Vec<f64>);

impl ScalarField {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }
}

impl Deref for ScalarField {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for ScalarField {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

/// Discrete weighted operator on the free nodes of `V(T_Y)`.
///
/// Free nodes are interior base vertices on levels `0..M`; the free index of
/// `(vertex i, level k)` is `k * Nf + free(i)`.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    /// Base stiffness and mass over all vertices.
    pub kx: CsrMatrix,
    pub mx: CsrMatrix,
    /// Base stiffness and mass restricted to free vertices.
    pub kx_free: CsrMatrix,
    pub mx_free: CsrMatrix,
    /// y matrices over all levels, including the Dirichlet top.
    pub ky: Tridiagonal,
    pub my: Tridiagonal,
    pub free_vertices: Vec<usize>,
    pub vertex_to_free: Vec<Option<usize>>,
    pub n_vertices: usize,
    pub layers: usize,
    pub d_s: f64,
}

impl SparseSystem {
    pub fn n_free(&self) -> usize {
        self.free_vertices.len() * self.layers
    }

    pub fn free_index(&self, free_vertex: usize, level: usize) -> usize {
        level * self.free_vertices.len() + free_vertex
    }

    /// Expand free coefficients to all nodes (Dirichlet entries zero).
    pub fn to_full(&self, x: &[f64]) -> ScalarField {
        let nf = self.free_vertices.len();
        let mut full = vec![0.0; self.n_vertices * (self.layers + 1)];
        for k in 0..self.layers {
            for (i, &v) in self.free_vertices.iter().enumerate() {
                full[k * self.n_vertices + v] = x[k * nf + i];
            }
        }
        ScalarField(full)
    }

    pub fn to_free(&self, full: &[f64]) -> Vec<f64> {
        let nf = self.free_vertices.len();
        let mut x = vec![0.0; self.n_free()];
        for k in 0..self.layers {
            for (i, &v) in self.free_vertices.iter().enumerate() {
                x[k * nf + i] = full[k * self.n_vertices + v];
            }
        }
        x
    }

    /// Trace on base vertices of a free coefficient vector.
    pub fn trace_from_free(&self, x: &[f64]) -> Vec<f64> {
        let mut tr = vec![0.0; self.n_vertices];
        for (i, &v) in self.free_vertices.iter().enumerate() {
            tr[v] = x[i];
        }
        tr
    }

    /// Free right-hand side whose only nonzeros are the level-0 entries of a
    /// base-vertex load.
    pub fn trace_rhs(&self, base_load: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.n_free()];
        for (i, &v) in self.free_vertices.iter().enumerate() {
            b[i] = base_load[v];
        }
        b
    }

    /// `a_Y(w, w)` for a free coefficient vector.
    pub fn energy(&self, x: &[f64]) -> f64 {
        crate::sparse::dot(x, &self.matrix.mul_vec(x))
    }
}

pub fn assemble_stiffness<G: BaseGrid>(mesh: &TensorMesh<G>) -> Result<SparseSystem> {
    let base = &mesh.base;
    let (kx, mx) = base_matrices(base);
    let (ky, my) = y_matrices(&mesh.interval, mesh.alpha)?;
    let n_vertices = base.n_vertices();
    let free_vertices = base.interior_vertices();
    let mut vertex_to_free = vec![None; n_vertices];
    for (i, &v) in free_vertices.iter().enumerate() {
        vertex_to_free[v] = Some(i);
    }
    let restrict = |a: &CsrMatrix| {
        let rows = free_vertices
            .iter()
            .map(|&v| {
                let (cols, vals) = a.row(v);
                cols.iter()
                    .zip(vals)
                    .filter_map(|(&c, &x)| vertex_to_free[c].map(|j| (j, x)))
                    .collect()
            })
            .collect();
        CsrMatrix::from_rows(free_vertices.len(), rows)
    };
    let kx_free = restrict(&kx);
    let mx_free = restrict(&mx);

    let nf = free_vertices.len();
    let layers = mesh.interval.m();
    let inv_ds = 1.0 / mesh.d_s;
    let rows: Vec<Vec<(usize, f64)>> = (0..nf * layers)
        .into_par_iter()
        .map(|row| {
            let k = row / nf;
            let i = row % nf;
            let (cols, kv) = kx_free.row(i);
            let (_, mv) = mx_free.row(i);
            let mut out = Vec::with_capacity(3 * cols.len());
            for kk in k.saturating_sub(1)..(k + 2).min(layers) {
                let (a, b) = (my.get(k, kk), ky.get(k, kk));
                for ((&j, &kxv), &mxv) in cols.iter().zip(kv).zip(mv) {
                    out.push((kk * nf + j, inv_ds * (kxv * a + mxv * b)));
                }
            }
            out
        })
        .collect();
    let matrix = CsrMatrix::from_rows(nf * layers, rows);
    Ok(SparseSystem {
        matrix,
        kx,
        mx,
        kx_free,
        mx_free,
        ky,
        my,
        free_vertices,
        vertex_to_free,
        n_vertices,
        layers,
        d_s: mesh.d_s,
    })
}

/// Data on the base domain paired with P1 trace hats.
#[derive(Clone, Copy)]
pub enum TraceData<'a> {
    /// One value per base cell.
    Cellwise(&'a [f64]),
    /// P1 nodal values on base vertices.
    Nodal(&'a [f64]),
    Function(&'a (dyn Fn([f64; 2]) -> f64 + Sync)),
}

/// Quadrature degree used for general data in loads and cost evaluation.
pub const DATA_DEGREE: usize = 4;

/// `F_v = (g, phi_v)_{L2(Omega)}` for every base vertex.
pub fn assemble_trace_load<G: BaseGrid>(base: &G, g: TraceData<'_>) -> Vec<f64> {
    let nv = base.n_vertices();
    let n = G::DIM + 1;
    let mut f = vec![0.0; nv];
    match g {
        TraceData::Cellwise(z) => {
            for c in 0..base.n_cells() {
                let share = base.measure(c) * z[c] / n as f64;
                for &v in base.cell(c) {
                    f[v] += share;
                }
            }
        }
        TraceData::Nodal(u) => {
            let (_, mx) = base_matrices(base);
            mx.mul_vec_into(u, &mut f);
        }
        TraceData::Function(func) => {
            let rule = G::rule(DATA_DEGREE);
            for c in 0..base.n_cells() {
                let area = base.measure(c);
                let verts = base.cell(c);
                for q in &rule {
                    let gv = func(base.map_bary(c, &q.bary)) * q.weight * area;
                    for (i, &v) in verts.iter().enumerate() {
                        f[v] += gv * q.bary[i];
                    }
                }
            }
        }
    }
    f
}

/// Restriction of a field on `V(T_Y)` to the plane `y = 0`.
pub fn trace_of<G: BaseGrid>(mesh: &TensorMesh<G>, field: &ScalarField) -> ScalarField {
    ScalarField(field[..mesh.base.n_vertices()].to_vec())
}
