//! Conforming simplicial meshes of the base domain with newest-vertex bisection.
//!
//! Triangles are stored with their refinement edge opposite local vertex 0, so
//! `[v0, v1, v2]` has newest vertex `v0` and refinement edge `(v1, v2)`. Every
//! refinement produces a new mesh value; the previous mesh is never mutated.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::quadrature::{simplex_rule, SimplexPoint};

/// Common interface of the base meshes (intervals in 1D, triangles in 2D).
pub trait BaseGrid: Clone + Send + Sync {
    /// Topological dimension of the base domain.
    const DIM: usize;

    fn n_vertices(&self) -> usize;
    fn n_cells(&self) -> usize;
    /// Coordinates of a vertex; the second component is zero in 1D.
    fn point(&self, v: usize) -> [f64; 2];
    /// Vertex indices of a cell (`DIM + 1` entries).
    fn cell(&self, c: usize) -> &[usize];
    fn measure(&self, c: usize) -> f64;
    /// Cell diameter `h_K` (longest edge).
    fn diameter(&self, c: usize) -> f64;
    fn is_boundary_vertex(&self, v: usize) -> bool;
    /// Cells incident to a vertex, in increasing order.
    fn vertex_cells(&self, v: usize) -> &[usize];
    /// Gradients of the barycentric coordinates of a cell.
    fn bary_gradients(&self, c: usize) -> [[f64; 2]; 3];
    /// Refine all marked cells (and whatever closure requires).
    fn refine(&self, marked: &[usize]) -> Self;
    /// For every cell, the index of the cell it came from in the previous mesh.
    fn cell_origin(&self) -> &[usize];
    /// For vertices created by the last refinement, the endpoints of the split edge.
    fn vertex_origin(&self) -> &[Option<(usize, usize)>];

    fn refine_uniform(&self) -> Self {
        let all: Vec<usize> = (0..self.n_cells()).collect();
        self.refine(&all)
    }

    fn total_measure(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.measure(c)).sum()
    }

    fn interior_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices())
            .filter(|&v| !self.is_boundary_vertex(v))
            .collect()
    }

    /// Physical point of barycentric coordinates on a cell.
    fn map_bary(&self, c: usize, bary: &[f64; 3]) -> [f64; 2] {
        let mut x = [0.0; 2];
        for (i, &v) in self.cell(c).iter().enumerate() {
            let p = self.point(v);
            x[0] += bary[i] * p[0];
            x[1] += bary[i] * p[1];
        }
        x
    }

    /// Quadrature rule on the reference simplex of this dimension.
    fn rule(degree: usize) -> Vec<SimplexPoint> {
        simplex_rule(Self::DIM, degree)
    }

    /// Local P1 stiffness and mass matrices (row-major, `(DIM+1)^2` entries).
    fn p1_local(&self, c: usize) -> (Vec<f64>, Vec<f64>) {
        let n = Self::DIM + 1;
        let g = self.bary_gradients(c);
        let area = self.measure(c);
        let denom = ((Self::DIM + 1) * (Self::DIM + 2)) as f64;
        let mut k = vec![0.0; n * n];
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                m[i * n + j] = area * if i == j { 2.0 } else { 1.0 } / denom;
            }
        }
        (k, m)
    }
}

/// Star of a vertex: every cell containing it, and `h_z = min h_K` over those.
#[derive(Clone, Debug, PartialEq)]
pub struct Star {
    pub center: usize,
    pub cells: Vec<usize>,
    pub h: f64,
}

pub fn star_of<G: BaseGrid>(mesh: &G, z: usize) -> Result<Star> {
    if z >= mesh.n_vertices() {
        return Err(Error::InvalidNode {
            index: z,
            len: mesh.n_vertices(),
        });
    }
    let cells = mesh.vertex_cells(z).to_vec();
    let h = cells
        .iter()
        .map(|&c| mesh.diameter(c))
        .fold(f64::INFINITY, f64::min);
    Ok(Star {
        center: z,
        cells,
        h,
    })
}

/// Local mesh size `h_z` of a vertex.
pub fn vertex_size<G: BaseGrid>(mesh: &G, z: usize) -> f64 {
    mesh.vertex_cells(z)
        .iter()
        .map(|&c| mesh.diameter(c))
        .fold(f64::INFINITY, f64::min)
}

fn build_incidence(n_vertices: usize, cells: &[&[usize]]) -> Vec<Vec<usize>> {
    let mut inc = vec![Vec::new(); n_vertices];
    for (c, verts) in cells.iter().enumerate() {
        for &v in verts.iter() {
            inc[v].push(c);
        }
    }
    inc
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Conforming triangulation of a polygonal domain.
#[derive(Clone, Debug)]
pub struct BaseMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    generation: Vec<u32>,
    origin: Vec<usize>,
    vertex_origin: Vec<Option<(usize, usize)>>,
    boundary_vertex: Vec<bool>,
    incidence: Vec<Vec<usize>>,
}

impl PartialEq for BaseMesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.triangles == other.triangles
    }
}

impl BaseMesh {
    /// Build a mesh from vertices and triangles `[v0, v1, v2]` whose refinement
    /// edge is `(v1, v2)`. Triangles must be counter-clockwise.
    pub fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidArgument(format!(
                    "triangle {t} references a missing vertex"
                )));
            }
            if signed_area(&vertices, tri) <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "triangle {t} is not counter-clockwise"
                )));
            }
        }
        let n = triangles.len();
        let nv = vertices.len();
        Ok(Self::assemble(
            vertices,
            triangles,
            vec![0; n],
            (0..n).collect(),
            vec![None; nv],
        ))
    }

    fn assemble(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        generation: Vec<u32>,
        origin: Vec<usize>,
        vertex_origin: Vec<Option<(usize, usize)>>,
    ) -> Self {
        let cells: Vec<&[usize]> = triangles.iter().map(|t| &t[..]).collect();
        let incidence = build_incidence(vertices.len(), &cells);
        let mut edge_count: HashMap<(usize, usize), u32> = HashMap::new();
        for t in &triangles {
            for k in 0..3 {
                *edge_count
                    .entry(edge_key(t[(k + 1) % 3], t[(k + 2) % 3]))
                    .or_insert(0) += 1;
            }
        }
        let mut boundary_vertex = vec![false; vertices.len()];
        for (&(a, b), &count) in &edge_count {
            if count == 1 {
                boundary_vertex[a] = true;
                boundary_vertex[b] = true;
            }
        }
        Self {
            vertices,
            triangles,
            generation,
            origin,
            vertex_origin,
            boundary_vertex,
            incidence,
        }
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn generation(&self, t: usize) -> u32 {
        self.generation[t]
    }

    /// Edges with exactly one incident triangle, as sorted vertex pairs.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<_> = self
            .edge_incidence()
            .into_iter()
            .filter(|(_, tris)| tris.len() == 1)
            .map(|(e, _)| e)
            .collect();
        edges.sort_unstable();
        edges
    }

    /// Every edge with the triangles that share it.
    pub fn edge_incidence(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                map.entry(edge_key(tri[(k + 1) % 3], tri[(k + 2) % 3]))
                    .or_default()
                    .push(t);
            }
        }
        map
    }

    /// Conformity audit: no edge has more than two triangles, and every edge
    /// with a single triangle lies on the outer boundary (no hanging nodes).
    pub fn is_conforming(&self) -> bool {
        let inc = self.edge_incidence();
        if inc.values().any(|t| t.len() > 2) {
            return false;
        }
        // a hanging node sits in the interior of some other triangle's edge
        for (&(a, b), tris) in &inc {
            if tris.len() != 1 {
                continue;
            }
            let pa = self.vertices[a];
            let pb = self.vertices[b];
            for (&(c, d), tris2) in &inc {
                if tris2.len() != 1 || (c, d) == (a, b) {
                    continue;
                }
                // a boundary edge strictly contained in another boundary edge
                let pc = self.vertices[c];
                let pd = self.vertices[d];
                if on_segment(pc, pa, pb) && on_segment(pd, pa, pb) {
                    return false;
                }
            }
        }
        true
    }

    pub fn min_angle(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let p: Vec<[f64; 2]> = t.iter().map(|&v| self.vertices[v]).collect();
                (0..3)
                    .map(|k| {
                        let a = p[k];
                        let b = p[(k + 1) % 3];
                        let c = p[(k + 2) % 3];
                        let u = [b[0] - a[0], b[1] - a[1]];
                        let w = [c[0] - a[0], c[1] - a[1]];
                        let cos = (u[0] * w[0] + u[1] * w[1])
                            / ((u[0] * u[0] + u[1] * u[1]).sqrt()
                                * (w[0] * w[0] + w[1] * w[1]).sqrt());
                        cos.clamp(-1.0, 1.0).acos()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Newest-vertex bisection of the marked triangles with conforming closure.
    pub fn bisect(&self, marked: &[usize]) -> BaseMesh {
        let edges = self.edge_incidence();
        let mut mark: HashMap<(usize, usize), usize> = HashMap::new();
        let mut order: Vec<(usize, usize)> = Vec::new();
        let mut queue: VecDeque<usize> = VecDeque::new();

        let mut mark_edge = |e: (usize, usize),
                             mark: &mut HashMap<(usize, usize), usize>,
                             queue: &mut VecDeque<usize>| {
            if mark.insert(e, usize::MAX).is_none() {
                order.push(e);
                queue.extend(edges[&e].iter().copied());
            }
        };

        let mut sorted: Vec<usize> = marked.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for &t in &sorted {
            let tri = self.triangles[t];
            mark_edge(edge_key(tri[1], tri[2]), &mut mark, &mut queue);
        }
        // closure: any triangle with a marked edge must have its refinement edge marked
        while let Some(t) = queue.pop_front() {
            let tri = self.triangles[t];
            let refe = edge_key(tri[1], tri[2]);
            if !mark.contains_key(&refe) {
                mark_edge(refe, &mut mark, &mut queue);
            }
        }

        if order.is_empty() {
            let mut copy = self.clone();
            copy.origin = (0..self.triangles.len()).collect();
            copy.vertex_origin = vec![None; self.vertices.len()];
            return copy;
        }

        let mut vertices = self.vertices.clone();
        let mut vertex_origin = vec![None; vertices.len()];
        for e in &order {
            let (a, b) = *e;
            let pa = vertices[a];
            let pb = vertices[b];
            mark.insert(*e, vertices.len());
            vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            vertex_origin.push(Some((a, b)));
        }

        let mut triangles = Vec::with_capacity(self.triangles.len() + 2 * order.len());
        let mut generation = Vec::with_capacity(triangles.capacity());
        let mut origin = Vec::with_capacity(triangles.capacity());
        for (t, &tri) in self.triangles.iter().enumerate() {
            split(tri, self.generation[t], &mark, &mut |child, gen| {
                triangles.push(child);
                generation.push(gen);
                origin.push(t);
            });
        }
        BaseMesh::assemble(vertices, triangles, generation, origin, vertex_origin)
    }

    /// Write the plain-text mesh format (vertex block then triangle block).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vertices {}", self.vertices.len());
        for (i, p) in self.vertices.iter().enumerate() {
            let _ = writeln!(out, "{i} {:.17e} {:.17e}", p[0], p[1]);
        }
        let _ = writeln!(out, "triangles {}", self.triangles.len());
        for (i, t) in self.triangles.iter().enumerate() {
            let _ = writeln!(out, "{i} {} {} {} 0", t[0], t[1], t[2]);
        }
        out
    }

    /// Parse the plain-text mesh format. The last column of a triangle row is the
    /// local index of the vertex opposite the refinement edge.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let parse_err = |line: usize, msg: &str| Error::Parse(format!("line {}: {msg}", line + 1));

        let header = |lines: &mut dyn Iterator<Item = (usize, &str)>, key: &str| {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing '{key}' block")))?;
            let mut it = l.split_whitespace();
            if it.next() != Some(key) {
                return Err(parse_err(ln, &format!("expected '{key} <count>'")));
            }
            it.next()
                .and_then(|n| n.parse::<usize>().ok())
                .ok_or_else(|| parse_err(ln, "bad count"))
        };

        let nv = header(&mut lines, "vertices")?;
        let mut vertices = vec![[0.0; 2]; nv];
        for _ in 0..nv {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated vertex block".into()))?;
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(parse_err(ln, "expected 'index x y'"));
            }
            let i: usize = f[0].parse().map_err(|_| parse_err(ln, "bad index"))?;
            if i >= nv {
                return Err(parse_err(ln, "vertex index out of range"));
            }
            let x: f64 = f[1].parse().map_err(|_| parse_err(ln, "bad x"))?;
            let y: f64 = f[2].parse().map_err(|_| parse_err(ln, "bad y"))?;
            vertices[i] = [x, y];
        }
        let nt = header(&mut lines, "triangles")?;
        let mut triangles = vec![[0usize; 3]; nt];
        for _ in 0..nt {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated triangle block".into()))?;
            let f: Vec<usize> = l
                .split_whitespace()
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(ln, "bad integer"))?;
            if f.len() != 5 || f[0] >= nt || f[4] > 2 {
                return Err(parse_err(ln, "expected 'index v0 v1 v2 refEdge'"));
            }
            let r = f[4];
            triangles[f[0]] = [f[1 + r], f[1 + (r + 1) % 3], f[1 + (r + 2) % 3]];
        }
        BaseMesh::new(vertices, triangles)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let len2 = (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2);
    if cross.abs() > 1e-12 * len2 {
        return false;
    }
    let dot = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1]);
    dot >= -1e-12 * len2 && dot <= len2 * (1.0 + 1e-12)
}

fn split(
    tri: [usize; 3],
    gen: u32,
    mark: &HashMap<(usize, usize), usize>,
    emit: &mut dyn FnMut([usize; 3], u32),
) {
    match mark.get(&edge_key(tri[1], tri[2])) {
        Some(&m) => {
            split([m, tri[0], tri[1]], gen + 1, mark, emit);
            split([m, tri[2], tri[0]], gen + 1, mark, emit);
        }
        None => emit(tri, gen),
    }
}

fn signed_area(vertices: &[[f64; 2]], t: &[usize; 3]) -> f64 {
    let a = vertices[t[0]];
    let b = vertices[t[1]];
    let c = vertices[t[2]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

impl BaseGrid for BaseMesh {
    const DIM: usize = 2;

    fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    fn n_cells(&self) -> usize {
        self.triangles.len()
    }

    fn point(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    fn cell(&self, c: usize) -> &[usize] {
        &self.triangles[c]
    }

    fn measure(&self, c: usize) -> f64 {
        signed_area(&self.vertices, &self.triangles[c])
    }

    fn diameter(&self, c: usize) -> f64 {
        let t = self.triangles[c];
        (0..3)
            .map(|k| {
                let a = self.vertices[t[k]];
                let b = self.vertices[t[(k + 1) % 3]];
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
            })
            .fold(0.0, f64::max)
    }

    fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    fn vertex_cells(&self, v: usize) -> &[usize] {
        &self.incidence[v]
    }

    fn bary_gradients(&self, c: usize) -> [[f64; 2]; 3] {
        let t = self.triangles[c];
        let p = [
            self.vertices[t[0]],
            self.vertices[t[1]],
            self.vertices[t[2]],
        ];
        let two_area = 2.0 * self.measure(c);
        let mut g = [[0.0; 2]; 3];
        for i in 0..3 {
            let a = p[(i + 1) % 3];
            let b = p[(i + 2) % 3];
            // rotate the opposite edge by -90 degrees
            g[i] = [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area];
        }
        g
    }

    fn refine(&self, marked: &[usize]) -> Self {
        self.bisect(marked)
    }

    fn cell_origin(&self) -> &[usize] {
        &self.origin
    }

    fn vertex_origin(&self) -> &[Option<(usize, usize)>] {
        &self.vertex_origin
    }
}

/// Criss-cross triangulation of a union of axis-aligned squares: each square is
/// cut along the diagonal through `corner`, and that diagonal is the refinement edge.
fn squares_mesh(squares: &[([f64; 2], f64)], corner: [f64; 2]) -> BaseMesh {
    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let index = |p: [f64; 2], vertices: &mut Vec<[f64; 2]>| -> usize {
        if let Some(i) = vertices
            .iter()
            .position(|q| (q[0] - p[0]).abs() < 1e-14 && (q[1] - p[1]).abs() < 1e-14)
        {
            i
        } else {
            vertices.push(p);
            vertices.len() - 1
        }
    };
    let mut triangles = Vec::new();
    for &(lo, side) in squares {
        let c = [
            [lo[0], lo[1]],
            [lo[0] + side, lo[1]],
            [lo[0] + side, lo[1] + side],
            [lo[0], lo[1] + side],
        ];
        let ids: Vec<usize> = c.iter().map(|&p| index(p, &mut vertices)).collect();
        // the diagonal through the corner closest to `corner`
        let near = (0..4)
            .min_by(|&i, &j| {
                let di = (c[i][0] - corner[0]).powi(2) + (c[i][1] - corner[1]).powi(2);
                let dj = (c[j][0] - corner[0]).powi(2) + (c[j][1] - corner[1]).powi(2);
                di.total_cmp(&dj)
            })
            .unwrap();
        let far = (near + 2) % 4;
        // right-angle vertices are the two off-diagonal corners
        for &apex in &[(near + 1) % 4, (near + 3) % 4] {
            let mut tri = [ids[apex], ids[near], ids[far]];
            if signed_area(&vertices, &tri) < 0.0 {
                tri.swap(1, 2);
            }
            triangles.push(tri);
        }
    }
    BaseMesh::new(vertices, triangles).expect("valid square mesh")
}

fn refine_levels(mut mesh: BaseMesh, levels: usize) -> BaseMesh {
    for _ in 0..levels {
        mesh = mesh.refine_uniform();
    }
    mesh
}

/// L-shaped domain `(-1,1)^2 \ [0,1) x (-1,0]` from six right triangles, with
/// `refine_level` uniform bisection passes.
pub fn make_lshape(refine_level: usize) -> BaseMesh {
    let squares = [([0.0, 0.0], 1.0), ([-1.0, 0.0], 1.0), ([-1.0, -1.0], 1.0)];
    refine_levels(squares_mesh(&squares, [0.0, 0.0]), refine_level)
}

/// Unit square from eight right triangles meeting at the centre.
pub fn make_unit_square(refine_level: usize) -> BaseMesh {
    let squares = [
        ([0.0, 0.0], 0.5),
        ([0.5, 0.0], 0.5),
        ([0.0, 0.5], 0.5),
        ([0.5, 0.5], 0.5),
    ];
    refine_levels(squares_mesh(&squares, [0.5, 0.5]), refine_level)
}

/// Unit square cut into two triangles along the diagonal from (0,0) to (1,1).
pub fn make_two_triangle_square() -> BaseMesh {
    BaseMesh::new(
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        vec![[1, 2, 0], [3, 0, 2]],
    )
    .expect("valid square")
}

/// Partition of a bounded interval, refined by bisection.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalMesh {
    points: Vec<f64>,
    cells: Vec<[usize; 2]>,
    origin: Vec<usize>,
    vertex_origin: Vec<Option<(usize, usize)>>,
    incidence: Vec<Vec<usize>>,
    boundary: Vec<bool>,
}

impl IntervalMesh {
    /// Uniform partition of `(lo, hi)` into `n` cells.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 || hi <= lo {
            return Err(Error::InvalidArgument(
                "interval mesh needs n >= 1 and hi > lo".into(),
            ));
        }
        let points: Vec<f64> = (0..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .collect();
        let cells: Vec<[usize; 2]> = (0..n).map(|i| [i, i + 1]).collect();
        let np = points.len();
        Ok(Self::assemble(
            points,
            cells,
            (0..n).collect(),
            vec![None; np],
        ))
    }

    fn assemble(
        points: Vec<f64>,
        cells: Vec<[usize; 2]>,
        origin: Vec<usize>,
        vertex_origin: Vec<Option<(usize, usize)>>,
    ) -> Self {
        let views: Vec<&[usize]> = cells.iter().map(|c| &c[..]).collect();
        let incidence = build_incidence(points.len(), &views);
        let boundary = incidence.iter().map(|c| c.len() < 2).collect();
        Self {
            points,
            cells,
            origin,
            vertex_origin,
            incidence,
            boundary,
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Mesh from explicit points and cells `[left, right]`.
    pub fn from_parts(points: Vec<f64>, cells: Vec<[usize; 2]>) -> Result<Self> {
        for (c, &[a, b]) in cells.iter().enumerate() {
            if a >= points.len() || b >= points.len() || points[b] <= points[a] {
                return Err(Error::InvalidArgument(format!(
                    "interval cell {c} is invalid"
                )));
            }
        }
        let np = points.len();
        let nc = cells.len();
        Ok(Self::assemble(
            points,
            cells,
            (0..nc).collect(),
            vec![None; np],
        ))
    }

    /// Same layout as the triangle format, with an `intervals` block.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vertices {}", self.points.len());
        for (i, x) in self.points.iter().enumerate() {
            let _ = writeln!(out, "{i} {x:.17e} 0");
        }
        let _ = writeln!(out, "intervals {}", self.cells.len());
        for (i, [a, b]) in self.cells.iter().enumerate() {
            let _ = writeln!(out, "{i} {a} {b}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let bad = |ln: usize, msg: &str| Error::Parse(format!("line {}: {msg}", ln + 1));
        let mut block = |key: &str| -> Result<Vec<(usize, Vec<String>)>> {
            let (ln, head) = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing '{key}' block")))?;
            let mut it = head.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(ln, &format!("expected '{key} <count>'")));
            }
            let n: usize = it
                .next()
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| bad(ln, "bad count"))?;
            (0..n)
                .map(|_| {
                    lines
                        .next()
                        .map(|(ln, l)| (ln, l.split_whitespace().map(String::from).collect()))
                        .ok_or_else(|| Error::Parse(format!("truncated '{key}' block")))
                })
                .collect()
        };
        let vrows = block("vertices")?;
        let mut points = vec![0.0; vrows.len()];
        for (ln, f) in &vrows {
            let i: usize = f
                .first()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(*ln, "bad index"))?;
            let x: f64 = f
                .get(1)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(*ln, "bad x"))?;
            *points
                .get_mut(i)
                .ok_or_else(|| bad(*ln, "vertex index out of range"))? = x;
        }
        let crows = block("intervals")?;
        let mut cells = vec![[0usize; 2]; crows.len()];
        for (ln, f) in &crows {
            let v: Vec<usize> = f
                .iter()
                .map(|t| t.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(*ln, "bad integer"))?;
            if v.len() != 3 || v[0] >= cells.len() {
                return Err(bad(*ln, "expected 'index v0 v1'"));
            }
            cells[v[0]] = [v[1], v[2]];
        }
        Self::from_parts(points, cells)
    }
}

impl BaseGrid for IntervalMesh {
    const DIM: usize = 1;

    fn n_vertices(&self) -> usize {
        self.points.len()
    }

    fn n_cells(&self) -> usize {
        self.cells.len()
    }

    fn point(&self, v: usize) -> [f64; 2] {
        [self.points[v], 0.0]
    }

    fn cell(&self, c: usize) -> &[usize] {
        &self.cells[c]
    }

    fn measure(&self, c: usize) -> f64 {
        let [a, b] = self.cells[c];
        (self.points[b] - self.points[a]).abs()
    }

    fn diameter(&self, c: usize) -> f64 {
        self.measure(c)
    }

    fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary[v]
    }

    fn vertex_cells(&self, v: usize) -> &[usize] {
        &self.incidence[v]
    }

    fn bary_gradients(&self, c: usize) -> [[f64; 2]; 3] {
        let [a, b] = self.cells[c];
        let h = self.points[b] - self.points[a];
        [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0, 0.0]]
    }

    fn refine(&self, marked: &[usize]) -> Self {
        let mut is_marked = vec![false; self.cells.len()];
        for &c in marked {
            is_marked[c] = true;
        }
        let mut points = self.points.clone();
        let mut vertex_origin = vec![None; points.len()];
        let mut cells = Vec::with_capacity(self.cells.len() + marked.len());
        let mut origin = Vec::with_capacity(cells.capacity());
        for (c, &[a, b]) in self.cells.iter().enumerate() {
            if is_marked[c] {
                let m = points.len();
                points.push(0.5 * (self.points[a] + self.points[b]));
                vertex_origin.push(Some(edge_key(a, b)));
                cells.push([a, m]);
                cells.push([m, b]);
                origin.push(c);
                origin.push(c);
            } else {
                cells.push([a, b]);
                origin.push(c);
            }
        }
        Self::assemble(points, cells, origin, vertex_origin)
    }

    fn cell_origin(&self) -> &[usize] {
        &self.origin
    }

    fn vertex_origin(&self) -> &[Option<(usize, usize)>] {
        &self.vertex_origin
    }
}

/// Prolongate a P1 nodal function through one refinement step.
pub fn prolongate_p1<G: BaseGrid>(fine: &G, coarse_values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; fine.n_vertices()];
    out[..coarse_values.len()].copy_from_slice(coarse_values);
    for (v, orig) in fine.vertex_origin().iter().enumerate() {
        if let Some((a, b)) = orig {
            out[v] = 0.5 * (out[*a] + out[*b]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_text_round_trip() {
        let m = IntervalMesh::uniform(0.0, 1.0, 3).unwrap().refine(&[1]);
        let back = IntervalMesh::from_text(&m.to_text()).unwrap();
        assert_eq!(back.points(), m.points());
        assert_eq!(back.n_cells(), 4);
        assert!((0..4).all(|c| back.cell(c) == m.cell(c)));
        assert!(IntervalMesh::from_text("vertices 1\n0 0 0\nintervals 1\n0 0 3\n").is_err());
    }

    fn conforming_and_area(mesh: &BaseMesh, area: f64) {
        assert!(mesh.is_conforming());
        let total = mesh.total_measure();
        assert!((total - area).abs() <= 1e-12 * area, "area {total}");
        for c in 0..mesh.n_cells() {
            assert!(mesh.measure(c) > 0.0);
        }
    }

    #[test]
    fn lshape_counts() {
        let m0 = make_lshape(0);
        assert_eq!(m0.n_cells(), 6);
        assert_eq!(m0.n_vertices(), 8);
        conforming_and_area(&m0, 3.0);
        let m1 = make_lshape(1);
        assert_eq!(m1.n_cells(), 12);
        conforming_and_area(&m1, 3.0);
        for level in 2..6 {
            conforming_and_area(&make_lshape(level), 3.0);
        }
        // the reentrant corner belongs to all six initial triangles
        let origin = m0
            .vertices()
            .iter()
            .position(|p| p[0] == 0.0 && p[1] == 0.0)
            .unwrap();
        assert_eq!(m0.vertex_cells(origin).len(), 6);
        assert!(m0.is_boundary_vertex(origin));
    }

    #[test]
    fn empty_marking_is_identity() {
        let m = make_lshape(2);
        let r = m.bisect(&[]);
        assert_eq!(m, r);
    }

    #[test]
    fn single_mark_on_two_triangle_square() {
        let m = make_two_triangle_square();
        // the shared diagonal is the refinement edge of both triangles
        let r = m.bisect(&[0]);
        assert_eq!(r.n_cells(), 4);
        assert_eq!(r.n_vertices(), 5);
        conforming_and_area(&r, 1.0);
        let r2 = r.bisect(&[0]);
        conforming_and_area(&r2, 1.0);
    }

    #[test]
    fn marking_all_doubles() {
        let m = make_unit_square(1);
        let r = m.refine_uniform();
        assert!(r.n_cells() >= 2 * m.n_cells());
        conforming_and_area(&r, 1.0);
    }

    #[test]
    fn star_queries() {
        let sq = make_two_triangle_square();
        let s = star_of(&sq, 0).unwrap();
        assert_eq!(s.cells, vec![0, 1]);
        let fan = make_unit_square(0);
        let centre = fan
            .vertices()
            .iter()
            .position(|p| p[0] == 0.5 && p[1] == 0.5)
            .unwrap();
        assert_eq!(star_of(&fan, centre).unwrap().cells.len(), 8);
        assert!(star_of(&fan, 99).is_err());

        // legs 0.25 after two uniform levels
        let m = make_unit_square(2);
        for v in m.interior_vertices() {
            let s = star_of(&m, v).unwrap();
            assert!((s.h - 0.25 * 2f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn text_round_trip() {
        let m = make_lshape(2).bisect(&[0, 5]);
        let back = BaseMesh::from_text(&m.to_text()).unwrap();
        assert_eq!(m, back);
        // rotated refinement-edge column is normalised
        let rot = "vertices 3\n0 0 0\n1 1 0\n2 0 1\ntriangles 1\n0 1 2 0 2\n";
        let t = BaseMesh::from_text(rot).unwrap();
        assert_eq!(t.triangles()[0], [0, 1, 2]);
        assert!(BaseMesh::from_text("vertices 1\n0 0\n").is_err());
    }

    #[test]
    fn nvb_keeps_right_isosceles_shapes() {
        let mut m = make_lshape(1);
        let initial = m.min_angle();
        for round in 0..10 {
            let marked: Vec<usize> = (0..m.n_cells())
                .filter(|t| (t * 7 + round) % 5 == 0)
                .collect();
            m = m.bisect(&marked);
            assert!(m.min_angle() >= initial - 1e-12);
            conforming_and_area(&m, 3.0);
        }
    }

    #[test]
    fn prolongation_reproduces_linears() {
        let coarse = make_lshape(1);
        let fine = coarse.bisect(&[0, 3, 7]);
        let f = |p: [f64; 2]| 2.0 * p[0] - 0.5 * p[1] + 1.0;
        let cv: Vec<f64> = coarse.vertices().iter().map(|&p| f(p)).collect();
        let fv = prolongate_p1(&fine, &cv);
        for (v, &p) in fine.vertices().iter().enumerate() {
            assert!((fv[v] - f(p)).abs() < 1e-14);
        }
    }

    #[test]
    fn interval_refinement() {
        let m = IntervalMesh::uniform(0.0, 1.0, 4).unwrap();
        assert_eq!(m.interior_vertices().len(), 3);
        let r = m.refine(&[1]);
        assert_eq!(r.n_cells(), 5);
        assert!((r.total_measure() - 1.0).abs() < 1e-15);
        assert_eq!(star_of(&r, 5).unwrap().cells.len(), 2);
        assert!(IntervalMesh::uniform(0.0, 1.0, 0).is_err());
    }
}
