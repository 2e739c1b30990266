//! Graded partitions of `(0, Y)` and tensor-product cylinder meshes.

use statrs::function::gamma::ln_gamma;

use crate::base_mesh::{star_of, vertex_size, BaseGrid, Star};
use crate::error::{Error, Result};

/// Default offset added to the lower bound `3/(2s)` of the grading exponent.
pub const GAMMA_OFFSET: f64 = 0.2;

pub fn alpha_of(s: f64) -> f64 {
    1.0 - 2.0 * s
}

/// Normalisation constant `2^alpha Gamma(1-s) / Gamma(s)`.
pub fn d_s(s: f64) -> f64 {
    let alpha = alpha_of(s);
    (alpha * std::f64::consts::LN_2 + ln_gamma(1.0 - s) - ln_gamma(s)).exp()
}

pub fn grading_exponent(s: f64, offset: f64) -> f64 {
    3.0 / (2.0 * s) + offset
}

/// Truncation height `1 + ln(n)/3` for a base mesh with `n` cells.
pub fn truncation_height(n_cells: usize) -> f64 {
    1.0 + (n_cells as f64).ln() / 3.0
}

fn check_order(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fractional order s = {s} must lie in (0, 1)"
        )));
    }
    Ok(())
}

/// Partition `y_k = (k/M)^gamma * Y` of `(0, Y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedInterval {
    y: f64,
    gamma: f64,
    nodes: Vec<f64>,
}

pub fn graded_points(m: usize, gamma: f64, y: f64) -> Result<GradedInterval> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "graded interval needs M >= 1".into(),
        ));
    }
    if !(gamma >= 1.0) || !(y > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "graded interval needs gamma >= 1 and Y > 0 (got {gamma}, {y})"
        )));
    }
    let nodes: Vec<f64> = (0..=m)
        .map(|k| {
            if k == m {
                y
            } else {
                (k as f64 / m as f64).powf(gamma) * y
            }
        })
        .collect();
    if nodes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "graded interval with M = {m}, gamma = {gamma} is not strictly increasing in floating point"
        )));
    }
    Ok(GradedInterval { y, gamma, nodes })
}

impl GradedInterval {
    pub fn m(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn height(&self) -> f64 {
        self.y
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn h(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }

    /// Largest subinterval, which for a graded partition is the last one.
    pub fn h_max(&self) -> f64 {
        (0..self.m()).map(|k| self.h(k)).fold(0.0, f64::max)
    }

    /// Largest ratio of neighbouring subinterval lengths, in either order.
    pub fn neighbor_ratio_max(&self) -> f64 {
        (1..self.m())
            .map(|k| {
                let a = self.h(k - 1);
                let b = self.h(k);
                (a / b).max(b / a)
            })
            .fold(1.0, f64::max)
    }
}

/// `T_Y = T_Omega x I_Y`, with nodes numbered plane by plane: `k * Nv + v`.
#[derive(Clone, Debug)]
pub struct TensorMesh<G: BaseGrid> {
    pub base: G,
    pub interval: GradedInterval,
    pub s: f64,
    pub alpha: f64,
    pub d_s: f64,
}

impl<G: BaseGrid> TensorMesh<G> {
    pub fn new(base: G, s: f64, interval: GradedInterval) -> Result<Self> {
        check_order(s)?;
        Ok(Self {
            base,
            interval,
            s,
            alpha: alpha_of(s),
            d_s: d_s(s),
        })
    }

    /// Tensor mesh with `m` graded layers and the default grading exponent.
    pub fn with_layers(base: G, s: f64, y: f64, m: usize) -> Result<Self> {
        check_order(s)?;
        let interval = graded_points(m, grading_exponent(s, GAMMA_OFFSET), y)?;
        Self::new(base, s, interval)
    }

    pub fn n_nodes(&self) -> usize {
        self.base.n_vertices() * (self.interval.m() + 1)
    }

    pub fn n_cells(&self) -> usize {
        self.base.n_cells() * self.interval.m()
    }

    pub fn node(&self, v: usize, k: usize) -> usize {
        k * self.base.n_vertices() + v
    }

    /// Cells `K x I_k` are numbered `K * M + k`.
    pub fn cell(&self, c: usize, k: usize) -> usize {
        c * self.interval.m() + k
    }

    /// Dirichlet nodes lie on the lateral boundary or on the top `y = Y`.
    pub fn is_dirichlet(&self, node: usize) -> bool {
        let nv = self.base.n_vertices();
        node / nv == self.interval.m() || self.base.is_boundary_vertex(node % nv)
    }

    pub fn summary_line(&self) -> String {
        format!(
            "s={} alpha={} gamma={} Y={} M={} #T_Omega={} #T_Y={}",
            self.s,
            self.alpha,
            self.interval.gamma(),
            self.interval.height(),
            self.interval.m(),
            self.base.n_cells(),
            self.n_cells()
        )
    }
}

/// Build the cylinder mesh over `base`: start from `M = ceil(#T^(1/n))` layers and,
/// when `c_tr` is given, add layers until `h_Y <= c_tr * h_z` at interior nodes.
pub fn build_tensor<G: BaseGrid>(
    base: G,
    s: f64,
    y: f64,
    c_tr: Option<f64>,
    gamma_offset: f64,
) -> Result<TensorMesh<G>> {
    check_order(s)?;
    if !(y > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "truncation height {y} must be positive"
        )));
    }
    let gamma = grading_exponent(s, gamma_offset);
    let mut m = (base.n_cells() as f64)
        .powf(1.0 / G::DIM as f64)
        .ceil()
        .max(1.0) as usize;
    // guard against round-off in the root, e.g. 36^(1/2) = 6.000000000000001
    if m > 1 && ((m - 1) as f64).powi(G::DIM as i32) >= base.n_cells() as f64 {
        m -= 1;
    }
    if let Some(c) = c_tr {
        if !(c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "C_Tr = {c} must be positive"
            )));
        }
        let h_min = min_interior_size(&base);
        if h_min.is_finite() {
            // h_Y = Y (1 - (1 - 1/M)^gamma) <= Y gamma / M, so this bound is always enough
            let m_cap = (y * gamma / (c * h_min)).ceil() as usize + 1;
            while m < m_cap {
                let interval = graded_points(m, gamma, y)?;
                if interval.h_max() <= c * h_min {
                    break;
                }
                m += 1;
            }
        }
    }
    let interval = graded_points(m, gamma, y)?;
    TensorMesh::new(base, s, interval)
}

fn min_interior_size<G: BaseGrid>(base: &G) -> f64 {
    base.interior_vertices()
        .into_iter()
        .map(|z| vertex_size(base, z))
        .fold(f64::INFINITY, f64::min)
}

/// Whether `h_Y <= c_tr * h_z` at every interior base node, and the worst ratio
/// `h_Y / h_z` (zero when there are no interior nodes).
pub fn check_compatibility<G: BaseGrid>(mesh: &TensorMesh<G>, c_tr: f64) -> (bool, f64) {
    let h_min = min_interior_size(&mesh.base);
    if !h_min.is_finite() {
        return (true, 0.0);
    }
    let h_y = mesh.interval.h_max();
    (h_y <= c_tr * h_min, h_y / h_min)
}

/// `C_z = S_z x (0, Y)`.
#[derive(Clone, Debug)]
pub struct CylindricalStar {
    pub star: Star,
    pub layers: usize,
}

impl CylindricalStar {
    pub fn new<G: BaseGrid>(mesh: &TensorMesh<G>, z: usize) -> Result<Self> {
        Ok(Self {
            star: star_of(&mesh.base, z)?,
            layers: mesh.interval.m(),
        })
    }

    /// Member cells as `(base cell, layer)` pairs.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.star
            .cells
            .iter()
            .flat_map(move |&c| (0..self.layers).map(move |k| (c, k)))
    }
}
