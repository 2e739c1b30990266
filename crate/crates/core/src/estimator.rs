//! Star-based a posteriori indicators: enriched local problems on cylindrical
//! stars for state and adjoint, the control indicator, and data oscillation.
//!
//! For an interior base node `z` the local space is spanned, in `x`, by the
//! quadratic Lagrange functions of `z` and of the midpoints of the edges through
//! `z`, plus the cubic bubble of every triangle in the star; in `y` by
//! continuous quadratics on the graded partition vanishing at `y = Y`.

use rayon::prelude::*;

use crate::assembly::interval_matrices;
use crate::base_mesh::{vertex_size, BaseGrid};
use crate::control::{clamp, ControlField};
use crate::cylinder_mesh::TensorMesh;
use crate::data::Data;
use crate::error::{Error, Result};
use crate::quadrature::{simplex_rule, SimplexPoint};

/// Quadrature degree for terms that involve data.
pub const ESTIMATOR_DATA_DEGREE: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Enrichment {
    /// Quadratics plus bubbles in `x`, quadratics in `y`.
    Full,
    /// Only the hat of the star centre and linears in `y`; the local space is
    /// then a subspace of the trial space.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EstimatorConfig {
    pub enrichment: Enrichment,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            enrichment: Enrichment::Full,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StarIndicators {
    pub node: usize,
    pub e_v: f64,
    pub e_p: f64,
    pub e_z: f64,
    pub osc: f64,
    pub total: f64,
    pub n_cells: usize,
}

impl StarIndicators {
    pub fn e_ocp(&self) -> f64 {
        self.e_v + self.e_p + self.e_z
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementIndicator {
    /// Star values distributed to the cell, `sum_{z in K} E_ocp(C_z)^2 / #S_z`.
    pub e_sq: f64,
    /// `h_K^{2s} ||f - mean_K f||^2` for `u_d` and `tr V`, combined.
    pub osc_sq: f64,
}

#[derive(Clone, Debug)]
pub struct EstimatorReport {
    pub stars: Vec<StarIndicators>,
    pub e_v: f64,
    pub e_p: f64,
    /// Sum over base cells of the cellwise control indicator.
    pub e_z: f64,
    pub osc: f64,
    pub total: f64,
    pub elements: Vec<ElementIndicator>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum LocalFn {
    Vertex(usize),
    Edge(usize, usize),
    Bubble,
    Hat(usize),
}

impl LocalFn {
    fn value(self, l: &[f64; 3]) -> f64 {
        match self {
            LocalFn::Vertex(i) => l[i] * (2.0 * l[i] - 1.0),
            LocalFn::Edge(i, j) => 4.0 * l[i] * l[j],
            LocalFn::Bubble => 27.0 * l[0] * l[1] * l[2],
            LocalFn::Hat(i) => l[i],
        }
    }

    fn grad(self, l: &[f64; 3], g: &[[f64; 2]; 3]) -> [f64; 2] {
        let comb = |c: [f64; 3]| {
            [
                c[0] * g[0][0] + c[1] * g[1][0] + c[2] * g[2][0],
                c[0] * g[0][1] + c[1] * g[1][1] + c[2] * g[2][1],
            ]
        };
        match self {
            LocalFn::Vertex(i) => {
                let mut c = [0.0; 3];
                c[i] = 4.0 * l[i] - 1.0;
                comb(c)
            }
            LocalFn::Edge(i, j) => {
                let mut c = [0.0; 3];
                c[i] = 4.0 * l[j];
                c[j] = 4.0 * l[i];
                comb(c)
            }
            LocalFn::Bubble => comb([27.0 * l[1] * l[2], 27.0 * l[0] * l[2], 27.0 * l[0] * l[1]]),
            LocalFn::Hat(i) => {
                let mut c = [0.0; 3];
                c[i] = 1.0;
                comb(c)
            }
        }
    }
}

/// Symmetric positive definite band matrix stored by rows of the lower band.
struct BandMatrix {
    n: usize,
    w: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    fn zeros(n: usize, w: usize) -> Self {
        Self {
            n,
            w,
            data: vec![0.0; n * (w + 1)],
        }
    }

    #[inline]
    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        debug_assert!(j <= i && i - j <= self.w);
        &mut self.data[i * (self.w + 1) + (i - j)]
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.w + 1) + (i - j)]
    }

    /// In-place Cholesky factorisation `A = L L^T`.
    fn factor(&mut self) -> Result<()> {
        let w = self.w;
        for i in 0..self.n {
            let lo = i.saturating_sub(w);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(w));
                let mut s = self.get(i, j);
                for k in klo..j {
                    s -= self.get(i, k) * self.get(j, k);
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::SingularLocalMatrix { pivot: i, value: s });
                    }
                    *self.at(i, i) = s.sqrt();
                } else {
                    let d = self.get(j, j);
                    *self.at(i, j) = s / d;
                }
            }
        }
        Ok(())
    }

    fn solve(&self, b: &mut [f64]) {
        let w = self.w;
        for i in 0..self.n {
            let mut s = b[i];
            for k in i.saturating_sub(w)..i {
                s -= self.get(i, k) * b[k];
            }
            b[i] = s / self.get(i, i);
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in (i + 1)..(i + w + 1).min(self.n) {
                s -= self.get(k, i) * b[k];
            }
            b[i] = s / self.get(i, i);
        }
    }
}

/// y-direction matrices over the whole of `(0, Y)`, shared by all stars.
struct YSpace {
    degree: usize,
    /// number of local y-functions (the top node is excluded)
    n: usize,
    /// dense `n x n` stiffness and mass of the local y-space
    k: Vec<f64>,
    m: Vec<f64>,
    /// trial (P1, all levels `0..=M`) against local y-space: `(M+1) x n`
    kc: Vec<f64>,
    mc: Vec<f64>,
}

impl YSpace {
    fn new<G: BaseGrid>(mesh: &TensorMesh<G>, degree: usize) -> Result<Self> {
        let m_layers = mesh.interval.m();
        let y = mesh.interval.nodes();
        let n_all = degree * m_layers + 1;
        let n = n_all - 1;
        let mut k = vec![0.0; n_all * n_all];
        let mut m = vec![0.0; n_all * n_all];
        let mut kc = vec![0.0; (m_layers + 1) * n_all];
        let mut mc = vec![0.0; (m_layers + 1) * n_all];
        for layer in 0..m_layers {
            let (kl, ml) = interval_matrices(mesh.alpha, y[layer], y[layer + 1], degree, degree)?;
            let (kx, mx) = interval_matrices(mesh.alpha, y[layer], y[layer + 1], 1, degree)?;
            let d = degree + 1;
            for a in 0..d {
                let ga = degree * layer + a;
                for b in 0..d {
                    let gb = degree * layer + b;
                    k[ga * n_all + gb] += kl[a * d + b];
                    m[ga * n_all + gb] += ml[a * d + b];
                }
            }
            for a in 0..2 {
                for b in 0..d {
                    let gb = degree * layer + b;
                    kc[(layer + a) * n_all + gb] += kx[a * d + b];
                    mc[(layer + a) * n_all + gb] += mx[a * d + b];
                }
            }
        }
        let shrink = |full: &[f64], rows: usize| -> Vec<f64> {
            let mut out = Vec::with_capacity(rows * n);
            for r in 0..rows {
                out.extend_from_slice(&full[r * n_all..r * n_all + n]);
            }
            out
        };
        Ok(Self {
            degree,
            n,
            k: shrink(&k, n),
            m: shrink(&m, n),
            kc: shrink(&kc, m_layers + 1),
            mc: shrink(&mc, m_layers + 1),
        })
    }
}

/// Local x-space of one star: basis functions per cell and global numbering.
struct StarSpace {
    cells: Vec<usize>,
    /// star vertices (trial hats), sorted
    vertices: Vec<usize>,
    /// per cell: (local function, local dof index)
    funcs: Vec<Vec<(LocalFn, usize)>>,
    n: usize,
}

impl StarSpace {
    fn new<G: BaseGrid>(base: &G, z: usize, enrichment: Enrichment) -> Self {
        let cells = base.vertex_cells(z).to_vec();
        let mut vertices: Vec<usize> = cells.iter().flat_map(|&c| base.cell(c).to_vec()).collect();
        vertices.sort_unstable();
        vertices.dedup();
        let mut n = 1;
        let mut funcs = Vec::with_capacity(cells.len());
        match enrichment {
            Enrichment::None => {
                for &c in &cells {
                    let ci = base.cell(c).iter().position(|&v| v == z).unwrap();
                    funcs.push(vec![(LocalFn::Hat(ci), 0)]);
                }
            }
            Enrichment::Full => {
                let neighbours: Vec<usize> = vertices.iter().copied().filter(|&v| v != z).collect();
                n += neighbours.len();
                for &c in &cells {
                    let verts = base.cell(c);
                    let ci = verts.iter().position(|&v| v == z).unwrap();
                    let mut list = vec![(LocalFn::Vertex(ci), 0)];
                    for (j, &v) in verts.iter().enumerate() {
                        if j != ci {
                            let idx = 1 + neighbours.binary_search(&v).unwrap();
                            list.push((LocalFn::Edge(ci, j), idx));
                        }
                    }
                    if G::DIM == 2 {
                        list.push((LocalFn::Bubble, n));
                        n += 1;
                    }
                    funcs.push(list);
                }
            }
        }
        Self {
            cells,
            vertices,
            funcs,
            n,
        }
    }
}

/// Exact x-matrices of a star: local/local stiffness and mass, trial/local
/// couplings, and local load vectors for the two data terms.
struct StarMatrices {
    k: Vec<f64>,
    m: Vec<f64>,
    /// `vertices x n`
    kc: Vec<f64>,
    mc: Vec<f64>,
}

fn star_matrices<G: BaseGrid>(base: &G, space: &StarSpace, rule: &[SimplexPoint]) -> StarMatrices {
    let n = space.n;
    let nv = space.vertices.len();
    let mut k = vec![0.0; n * n];
    let mut m = vec![0.0; n * n];
    let mut kc = vec![0.0; nv * n];
    let mut mc = vec![0.0; nv * n];
    for (ci, &c) in space.cells.iter().enumerate() {
        let area = base.measure(c);
        let g = base.bary_gradients(c);
        let verts = base.cell(c);
        let vidx: Vec<usize> = verts
            .iter()
            .map(|v| space.vertices.binary_search(v).unwrap())
            .collect();
        let funcs = &space.funcs[ci];
        for q in rule {
            let w = q.weight * area;
            let vals: Vec<f64> = funcs.iter().map(|(f, _)| f.value(&q.bary)).collect();
            let grads: Vec<[f64; 2]> = funcs.iter().map(|(f, _)| f.grad(&q.bary, &g)).collect();
            for (a, &(_, ia)) in funcs.iter().enumerate() {
                for (b, &(_, ib)) in funcs.iter().enumerate() {
                    k[ia * n + ib] += w * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                    m[ia * n + ib] += w * vals[a] * vals[b];
                }
                for (lv, &gv) in vidx.iter().enumerate() {
                    let hat = LocalFn::Hat(lv);
                    let hv = hat.value(&q.bary);
                    let hg = hat.grad(&q.bary, &g);
                    kc[gv * n + ia] += w * (hg[0] * grads[a][0] + hg[1] * grads[a][1]);
                    mc[gv * n + ia] += w * hv * vals[a];
                }
            }
        }
    }
    StarMatrices { k, m, kc, mc }
}

/// Inputs shared by all stars.
pub struct EstimatorInput<'a, G: BaseGrid> {
    pub mesh: &'a TensorMesh<G>,
    /// state and adjoint on all nodes
    pub state: &'a [f64],
    pub adjoint: &'a [f64],
    pub control: &'a ControlField,
    pub u_d: &'a Data,
    pub mu: f64,
}

struct LocalResult {
    e_v: f64,
    e_p: f64,
}

fn local_problems<G: BaseGrid>(
    input: &EstimatorInput<'_, G>,
    ys: &YSpace,
    z: usize,
    enrichment: Enrichment,
    mat_rule: &[SimplexPoint],
    data_rule: &[SimplexPoint],
) -> Result<LocalResult> {
    let mesh = input.mesh;
    let base = &mesh.base;
    let space = StarSpace::new(base, z, enrichment);
    let sm = star_matrices(base, &space, mat_rule);
    let nx = space.n;
    let ny = ys.n;
    let inv_ds = 1.0 / mesh.d_s;

    // y-major ordering: index = l * nx + a; y couplings reach `degree` dofs
    let w = ys.degree * nx + nx - 1;
    let n = nx * ny;
    let mut band = BandMatrix::zeros(n, w);
    for l in 0..ny {
        for lp in l.saturating_sub(ys.degree)..=l {
            let (kyv, myv) = (ys.k[l * ny + lp], ys.m[l * ny + lp]);
            if kyv == 0.0 && myv == 0.0 {
                continue;
            }
            for a in 0..nx {
                for b in 0..nx {
                    let i = l * nx + a;
                    let j = lp * nx + b;
                    if j > i {
                        continue;
                    }
                    *band.at(i, j) += inv_ds * (sm.k[a * nx + b] * myv + sm.m[a * nx + b] * kyv);
                }
            }
        }
    }
    band.factor()?;

    // a_z(U, W) for trial U given on all nodes
    let m_levels = mesh.interval.m() + 1;
    let nv = space.vertices.len();
    let bilinear = |u: &[f64], f: &mut [f64]| {
        // U_v(y) against y test functions: t1 = U M_yc, t2 = U K_yc
        let mut t1 = vec![0.0; nv * ny];
        let mut t2 = vec![0.0; nv * ny];
        for (iv, &v) in space.vertices.iter().enumerate() {
            for kk in 0..m_levels {
                let uv = u[mesh.node(v, kk)];
                if uv == 0.0 {
                    continue;
                }
                let lo = (ys.degree * kk).saturating_sub(ys.degree);
                let hi = (ys.degree * kk + ys.degree).min(ny - 1);
                for l in lo..=hi {
                    t1[iv * ny + l] += uv * ys.mc[kk * ny + l];
                    t2[iv * ny + l] += uv * ys.kc[kk * ny + l];
                }
            }
        }
        for iv in 0..nv {
            for a in 0..nx {
                let (kxa, mxa) = (sm.kc[iv * nx + a], sm.mc[iv * nx + a]);
                if kxa == 0.0 && mxa == 0.0 {
                    continue;
                }
                for l in 0..ny {
                    f[l * nx + a] -= inv_ds * (kxa * t1[iv * ny + l] + mxa * t2[iv * ny + l]);
                }
            }
        }
    };

    // data terms only touch the y = 0 test functions
    let mut load_z = vec![0.0; nx];
    let mut load_p = vec![0.0; nx];
    for (ci, &c) in space.cells.iter().enumerate() {
        let area = base.measure(c);
        let verts = base.cell(c);
        let zc = input.control.values[c];
        for q in data_rule {
            let wq = q.weight * area;
            let trv: f64 = verts
                .iter()
                .enumerate()
                .map(|(i, &v)| q.bary[i] * input.state[v])
                .sum();
            let diff = trv - input.u_d.eval(base.map_bary(c, &q.bary));
            for &(f, ia) in &space.funcs[ci] {
                let fv = f.value(&q.bary);
                load_z[ia] += wq * zc * fv;
                load_p[ia] += wq * diff * fv;
            }
        }
    }

    let energy = |mut rhs: Vec<f64>| -> f64 {
        let f = rhs.clone();
        band.solve(&mut rhs);
        let e: f64 = rhs.iter().zip(&f).map(|(x, y)| x * y).sum();
        (mesh.d_s * e.max(0.0)).sqrt()
    };

    let mut f_v = vec![0.0; n];
    f_v[..nx].copy_from_slice(&load_z);
    bilinear(input.state, &mut f_v);
    let mut f_p = vec![0.0; n];
    f_p[..nx].copy_from_slice(&load_p);
    bilinear(input.adjoint, &mut f_p);
    Ok(LocalResult {
        e_v: energy(f_v),
        e_p: energy(f_p),
    })
}

/// `||Z_K - Pi(-tr P / mu)||^2_{L2(K)}`, integrated exactly by splitting `K`
/// along the level sets where the projected adjoint reaches a bound.
pub fn control_indicator_sq<G: BaseGrid>(
    base: &G,
    c: usize,
    z_k: f64,
    adjoint_trace: &[f64],
    mu: f64,
    a: f64,
    b: f64,
) -> f64 {
    let verts = base.cell(c);
    let mut q = [0.0; 3];
    for (i, &v) in verts.iter().enumerate() {
        q[i] = -adjoint_trace[v] / mu;
    }
    let mut corners: Vec<[f64; 3]> = Vec::with_capacity(3);
    for i in 0..=G::DIM {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        corners.push(e);
    }
    let level = |p: &[f64; 3]| p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
    let below = clip(&corners, |p| a - level(p), G::DIM);
    let above = clip(&corners, |p| level(p) - b, G::DIM);
    let middle = clip(
        &clip(&corners, |p| level(p) - a, G::DIM),
        |p| b - level(p),
        G::DIM,
    );
    let area = base.measure(c);
    let rule = simplex_rule(G::DIM, 2);
    let mut total = 0.0;
    for (poly, kind) in [(below, 0), (above, 1), (middle, 2)] {
        for (simplex, frac) in fan(&poly, G::DIM) {
            if frac <= 0.0 {
                continue;
            }
            for qp in &rule {
                let mut p = [0.0; 3];
                for (s, &w) in simplex.iter().zip(&qp.bary) {
                    for d in 0..3 {
                        p[d] += w * s[d];
                    }
                }
                let v = match kind {
                    0 => a,
                    1 => b,
                    _ => clamp(level(&p), a, b),
                };
                total += qp.weight * frac * area * (z_k - v) * (z_k - v);
            }
        }
    }
    total
}

/// Keep the part of a convex polygon (or segment) where `f >= 0`.
fn clip(poly: &[[f64; 3]], f: impl Fn(&[f64; 3]) -> f64, dim: usize) -> Vec<[f64; 3]> {
    if poly.is_empty() {
        return Vec::new();
    }
    let lerp = |p: &[f64; 3], q: &[f64; 3], fp: f64, fq: f64| {
        let t = fp / (fp - fq);
        [
            p[0] + t * (q[0] - p[0]),
            p[1] + t * (q[1] - p[1]),
            p[2] + t * (q[2] - p[2]),
        ]
    };
    if dim == 1 {
        if poly.len() < 2 {
            return Vec::new();
        }
        let (p, q) = (poly[0], poly[1]);
        let (fp, fq) = (f(&p), f(&q));
        return match (fp >= 0.0, fq >= 0.0) {
            (true, true) => vec![p, q],
            (false, false) => Vec::new(),
            (true, false) => vec![p, lerp(&p, &q, fp, fq)],
            (false, true) => vec![lerp(&p, &q, fp, fq), q],
        };
    }
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let (fp, fq) = (f(&p), f(&q));
        if fp >= 0.0 {
            out.push(p);
        }
        if (fp >= 0.0) != (fq >= 0.0) {
            out.push(lerp(&p, &q, fp, fq));
        }
    }
    out
}

/// Split a clipped polygon into simplices with their measure fractions.
fn fan(poly: &[[f64; 3]], dim: usize) -> Vec<(Vec<[f64; 3]>, f64)> {
    if dim == 1 {
        if poly.len() < 2 {
            return Vec::new();
        }
        let frac = (poly[1][1] - poly[0][1]).abs();
        return vec![(vec![poly[0], poly[1]], frac)];
    }
    if poly.len() < 3 {
        return Vec::new();
    }
    (1..poly.len() - 1)
        .map(|i| {
            let (p, q, r) = (poly[0], poly[i], poly[i + 1]);
            let det = p[0] * (q[1] * r[2] - q[2] * r[1]) - p[1] * (q[0] * r[2] - q[2] * r[0])
                + p[2] * (q[0] * r[1] - q[1] * r[0]);
            (vec![p, q, r], det.abs())
        })
        .collect()
}

/// `||f - mean_K f||^2_{L2(K)}` with a degree-7 rule.
fn deviation_sq<G: BaseGrid>(
    base: &G,
    c: usize,
    rule: &[SimplexPoint],
    f: impl Fn([f64; 3]) -> f64,
) -> f64 {
    let vals: Vec<f64> = rule.iter().map(|q| f(q.bary)).collect();
    let mean: f64 = rule.iter().zip(&vals).map(|(q, v)| q.weight * v).sum();
    base.measure(c)
        * rule
            .iter()
            .zip(&vals)
            .map(|(q, v)| q.weight * (v - mean) * (v - mean))
            .sum::<f64>()
}

/// Per-cell `(||u_d - mean||^2, ||tr V - mean||^2)`.
fn cell_deviations<G: BaseGrid>(base: &G, state_trace: &[f64], u_d: &Data) -> Vec<(f64, f64)> {
    let rule = G::rule(ESTIMATOR_DATA_DEGREE);
    (0..base.n_cells())
        .map(|c| {
            let du = match u_d {
                Data::Constant(_) => 0.0,
                _ => deviation_sq(base, c, &rule, |l| u_d.eval(base.map_bary(c, &l))),
            };
            let verts = base.cell(c);
            let dv = deviation_sq(base, c, &rule, |l| {
                verts
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| l[i] * state_trace[v])
                    .sum()
            });
            (du, dv)
        })
        .collect()
}

/// `osc(u_d; S_z) + osc(tr V; S_z)`, with `osc(f; S) = h_z^s ||f - f_z||_{L2(S)}`
/// and `f_z` the cellwise mean.
pub fn oscillation<G: BaseGrid>(
    base: &G,
    z: usize,
    state_trace: &[f64],
    u_d: &Data,
    s: f64,
) -> f64 {
    let rule = G::rule(ESTIMATOR_DATA_DEGREE);
    let h = vertex_size(base, z).powf(s);
    let (mut du, mut dv) = (0.0, 0.0);
    for &c in base.vertex_cells(z) {
        if u_d.as_constant().is_none() {
            du += deviation_sq(base, c, &rule, |l| u_d.eval(base.map_bary(c, &l)));
        }
        let verts = base.cell(c);
        dv += deviation_sq(base, c, &rule, |l| {
            verts
                .iter()
                .enumerate()
                .map(|(i, &v)| l[i] * state_trace[v])
                .sum()
        });
    }
    h * (du.sqrt() + dv.sqrt())
}

/// `sqrt((E_V + E_P + E_Z)^2 + osc^2)`.
pub fn total_indicator(e_v: f64, e_p: f64, e_z: f64, osc: f64) -> f64 {
    let e = e_v + e_p + e_z;
    (e * e + osc * osc).sqrt()
}

/// Distribute star values `E_ocp(C_z)^2 / #S_z` to the cells of each star.
pub fn to_elementwise<G: BaseGrid>(base: &G, stars: &[StarIndicators]) -> Vec<f64> {
    let mut e = vec![0.0; base.n_cells()];
    for st in stars {
        let share = st.e_ocp().powi(2) / st.n_cells as f64;
        for &c in base.vertex_cells(st.node) {
            e[c] += share;
        }
    }
    e
}

/// State indicator of one star.
pub fn estimate_ev<G: BaseGrid>(input: &EstimatorInput<'_, G>, z: usize) -> Result<f64> {
    Ok(single_star(input, z)?.e_v)
}

/// Adjoint indicator of one star.
pub fn estimate_ep<G: BaseGrid>(input: &EstimatorInput<'_, G>, z: usize) -> Result<f64> {
    Ok(single_star(input, z)?.e_p)
}

fn single_star<G: BaseGrid>(input: &EstimatorInput<'_, G>, z: usize) -> Result<LocalResult> {
    check_interior(&input.mesh.base, z)?;
    let ys = YSpace::new(input.mesh, 2)?;
    local_problems(
        input,
        &ys,
        z,
        Enrichment::Full,
        &G::rule(6),
        &G::rule(ESTIMATOR_DATA_DEGREE),
    )
}

fn check_interior<G: BaseGrid>(base: &G, z: usize) -> Result<()> {
    if z >= base.n_vertices() {
        return Err(Error::InvalidNode {
            index: z,
            len: base.n_vertices(),
        });
    }
    if base.is_boundary_vertex(z) {
        return Err(Error::InvalidArgument(format!(
            "node {z} lies on the boundary; indicators live on interior nodes"
        )));
    }
    Ok(())
}

/// Control indicator on the star of `z`: the root of the summed cell squares.
pub fn estimate_ez<G: BaseGrid>(input: &EstimatorInput<'_, G>, z: usize) -> f64 {
    let base = &input.mesh.base;
    let tr_p = &input.adjoint[..base.n_vertices()];
    base.vertex_cells(z)
        .iter()
        .map(|&c| {
            control_indicator_sq(
                base,
                c,
                input.control.values[c],
                tr_p,
                input.mu,
                input.control.a,
                input.control.b,
            )
        })
        .sum::<f64>()
        .sqrt()
}

/// Evaluate all indicators on every interior node.
pub fn estimate<G: BaseGrid>(
    input: &EstimatorInput<'_, G>,
    config: &EstimatorConfig,
) -> Result<EstimatorReport> {
    let mesh = input.mesh;
    let base = &mesh.base;
    let nv = base.n_vertices();
    let degree = match config.enrichment {
        Enrichment::Full => 2,
        Enrichment::None => 1,
    };
    let ys = YSpace::new(mesh, degree)?;
    let mat_rule = G::rule(6);
    let data_rule = G::rule(ESTIMATOR_DATA_DEGREE);
    let tr_v = &input.state[..nv];
    let tr_p = &input.adjoint[..nv];

    let ez_cells: Vec<f64> = (0..base.n_cells())
        .into_par_iter()
        .map(|c| {
            control_indicator_sq(
                base,
                c,
                input.control.values[c],
                tr_p,
                input.mu,
                input.control.a,
                input.control.b,
            )
        })
        .collect();
    let deviations = cell_deviations(base, tr_v, input.u_d);

    let interior = base.interior_vertices();
    let stars: Vec<StarIndicators> = interior
        .par_iter()
        .map(|&z| -> Result<StarIndicators> {
            let local = local_problems(input, &ys, z, config.enrichment, &mat_rule, &data_rule)?;
            let cells = base.vertex_cells(z);
            let e_z = cells.iter().map(|&c| ez_cells[c]).sum::<f64>().sqrt();
            let (du, dv) = cells.iter().fold((0.0, 0.0), |acc, &c| {
                (acc.0 + deviations[c].0, acc.1 + deviations[c].1)
            });
            let osc = vertex_size(base, z).powf(mesh.s) * (du.sqrt() + dv.sqrt());
            Ok(StarIndicators {
                node: z,
                e_v: local.e_v,
                e_p: local.e_p,
                e_z,
                osc,
                total: total_indicator(local.e_v, local.e_p, e_z, osc),
                n_cells: cells.len(),
            })
        })
        .collect::<Result<_>>()?;

    let sum_sq =
        |f: &dyn Fn(&StarIndicators) -> f64| stars.iter().map(|s| f(s).powi(2)).sum::<f64>().sqrt();
    let e_sq = to_elementwise(base, &stars);
    let elements = (0..base.n_cells())
        .map(|c| {
            let h = base.diameter(c).powf(mesh.s);
            let (du, dv) = deviations[c];
            let osc = h * (du.sqrt() + dv.sqrt());
            ElementIndicator {
                e_sq: e_sq[c],
                osc_sq: osc * osc,
            }
        })
        .collect();
    Ok(EstimatorReport {
        e_v: sum_sq(&|s| s.e_v),
        e_p: sum_sq(&|s| s.e_p),
        e_z: ez_cells.iter().sum::<f64>().sqrt(),
        osc: sum_sq(&|s| s.osc),
        total: sum_sq(&|s| s.total),
        stars,
        elements,
    })
}

/// Efficiency constant `max{2/d_s, d_s^{-1/2}(1/mu + d_s^{-1/2}), 1 + d_s^{-1/2}}`.
pub fn efficiency_constant(d_s: f64, mu: f64) -> f64 {
    let r = d_s.powf(-0.5);
    (2.0 / d_s).max(r * (1.0 / mu + r)).max(1.0 + r)
}
