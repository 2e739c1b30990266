//! Eigenpairs of the Dirichlet Laplacian on the unit interval and square, and
//! the y-profile of one extended eigenmode.

use std::f64::consts::PI;

use crate::assembly::interval_matrices;
use crate::cylinder_mesh::{alpha_of, d_s, graded_points, grading_exponent, GAMMA_OFFSET};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralDomain {
    UnitInterval,
    UnitSquare,
}

/// The first `count` eigenpairs, ordered by eigenvalue (ties by index).
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    pub domain: SpectralDomain,
    /// Mode indices: `(k, 0)` on the interval, `(i, j)` on the square.
    modes: Vec<(usize, usize)>,
}

impl SpectralBasis {
    pub fn new(domain: SpectralDomain, count: usize) -> Self {
        let modes = match domain {
            SpectralDomain::UnitInterval => (1..=count).map(|k| (k, 0)).collect(),
            SpectralDomain::UnitSquare => {
                let side = count + 1;
                let mut all: Vec<(usize, usize)> = (1..=side)
                    .flat_map(|i| (1..=side).map(move |j| (i, j)))
                    .collect();
                all.sort_by_key(|&(i, j)| (i * i + j * j, i));
                all.truncate(count);
                all
            }
        };
        Self { domain, modes }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn mode(&self, k: usize) -> (usize, usize) {
        self.modes[k]
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        let (i, j) = self.modes[k];
        PI * PI * (i * i + j * j) as f64
    }

    /// `phi_k(p)`, normalised in `L2(Omega)`.
    pub fn eval(&self, k: usize, p: [f64; 2]) -> f64 {
        let (i, j) = self.modes[k];
        match self.domain {
            SpectralDomain::UnitInterval => 2f64.sqrt() * (i as f64 * PI * p[0]).sin(),
            SpectralDomain::UnitSquare => {
                2.0 * (i as f64 * PI * p[0]).sin() * (j as f64 * PI * p[1]).sin()
            }
        }
    }
}

/// Coefficients of the solution of `(-Delta)^s u = z`: `u_k = lambda_k^{-s} z_k`.
pub fn fractional_solve_exact(basis: &SpectralBasis, z: &[f64], s: f64) -> Result<Vec<f64>> {
    if z.len() > basis.len() {
        return Err(Error::InvalidArgument(format!(
            "{} coefficients for a basis of {} modes",
            z.len(),
            basis.len()
        )));
    }
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "coefficient {bad} is not finite"
        )));
    }
    Ok(z.iter()
        .enumerate()
        .map(|(k, zk)| basis.eigenvalue(k).powf(-s) * zk)
        .collect())
}

/// Nodes used by `extension_profile`.
pub const PROFILE_NODES: usize = 20_000;

/// P1 solution of `-(y^alpha psi')' + lambda y^alpha psi = 0` on `(0, Y)` with
/// `psi(0) = 1`, `psi(Y) = 0`.
#[derive(Clone, Debug)]
pub struct ExtensionProfile {
    pub lambda: f64,
    pub s: f64,
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    /// `int_0^Y y^alpha (psi'^2 + lambda psi^2)`, which equals `-lim y^alpha psi'(0)`.
    pub energy: f64,
}

impl ExtensionProfile {
    /// Piecewise linear interpolation of the nodal values.
    pub fn eval(&self, y: f64) -> f64 {
        let n = self.nodes.len();
        if y <= 0.0 {
            return self.values[0];
        }
        if y >= self.nodes[n - 1] {
            return self.values[n - 1];
        }
        let k = self.nodes.partition_point(|&t| t <= y) - 1;
        let t = (y - self.nodes[k]) / (self.nodes[k + 1] - self.nodes[k]);
        (1.0 - t) * self.values[k] + t * self.values[k + 1]
    }

    /// Trace of the extension of `phi` solving the truncated Neumann problem
    /// with data `phi`: the factor multiplying `phi` on `y = 0`.
    pub fn trace_factor(&self) -> f64 {
        d_s(self.s) / self.energy
    }
}

pub fn extension_profile(lambda: f64, s: f64, y: f64) -> Result<ExtensionProfile> {
    extension_profile_with(lambda, s, y, PROFILE_NODES)
}

/// As `extension_profile` with an explicit node count.
pub fn extension_profile_with(
    lambda: f64,
    s: f64,
    y: f64,
    n_nodes: usize,
) -> Result<ExtensionProfile> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eigenvalue {lambda} must be positive"
        )));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "s = {s} must lie in (0, 1)"
        )));
    }
    if n_nodes < 3 {
        return Err(Error::InvalidArgument(
            "a profile needs at least 3 nodes".into(),
        ));
    }
    let alpha = alpha_of(s);
    let m = n_nodes - 1;
    let interval = graded_points(m, grading_exponent(s, GAMMA_OFFSET).min(3.0), y)?;
    let nodes = interval.nodes().to_vec();
    let mut diag = vec![0.0; n_nodes];
    let mut off = vec![0.0; m];
    let mut elems = Vec::with_capacity(m);
    for k in 0..m {
        let (kl, ml) = interval_matrices(alpha, nodes[k], nodes[k + 1], 1, 1)?;
        elems.push((kl[0], [ml[0], ml[1], ml[3]]));
        diag[k] += kl[0] + lambda * ml[0];
        diag[k + 1] += kl[3] + lambda * ml[3];
        off[k] += kl[1] + lambda * ml[1];
    }
    // unknowns 1..m-1, psi_0 = 1 moves to the right-hand side
    let n = m - 1;
    let mut a: Vec<f64> = diag[1..m].to_vec();
    let mut rhs = vec![0.0; n];
    rhs[0] = -off[0];
    let c: Vec<f64> = off[1..m - 1].to_vec();
    // Thomas algorithm
    for i in 1..n {
        let w = c[i - 1] / a[i - 1];
        a[i] -= w * c[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    let mut x = vec![0.0; n];
    x[n - 1] = rhs[n - 1] / a[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (rhs[i] - c[i] * x[i + 1]) / a[i];
    }
    let mut values = Vec::with_capacity(n_nodes);
    values.push(1.0);
    values.extend_from_slice(&x);
    values.push(0.0);
    // elementwise, since (A psi)_0 cancels badly on the thin bottom cells
    let energy = elems
        .iter()
        .enumerate()
        .map(|(k, (stiff, ml))| {
            let (u, v) = (values[k], values[k + 1]);
            stiff * (u - v) * (u - v)
                + lambda * (ml[0] * u * u + 2.0 * ml[1] * u * v + ml[2] * v * v)
        })
        .sum();
    Ok(ExtensionProfile {
        lambda,
        s,
        nodes,
        values,
        energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;

    #[test]
    fn bases_are_orthonormal_and_sorted() {
        for domain in [SpectralDomain::UnitInterval, SpectralDomain::UnitSquare] {
            let b = SpectralBasis::new(domain, 6);
            assert_eq!(b.len(), 6);
            assert!((0..5).all(|k| b.eigenvalue(k) <= b.eigenvalue(k + 1)));
            assert!(b.eigenvalue(0) > 0.0);
            let gl = gauss_legendre(20);
            // composite rule over 10 subintervals per direction
            let pts: Vec<(f64, f64)> = (0..10)
                .flat_map(|c| {
                    gl.iter()
                        .map(move |&(t, w)| ((c as f64 + t) / 10.0, w / 10.0))
                })
                .collect();
            for j in 0..6 {
                for k in 0..6 {
                    let ip: f64 = match domain {
                        SpectralDomain::UnitInterval => pts
                            .iter()
                            .map(|&(x, w)| w * b.eval(j, [x, 0.0]) * b.eval(k, [x, 0.0]))
                            .sum(),
                        SpectralDomain::UnitSquare => pts
                            .iter()
                            .flat_map(|&(x, wx)| pts.iter().map(move |&(y, wy)| (x, y, wx * wy)))
                            .map(|(x, y, w)| w * b.eval(j, [x, y]) * b.eval(k, [x, y]))
                            .sum(),
                    };
                    let e = if j == k { 1.0 } else { 0.0 };
                    assert!((ip - e).abs() < 1e-12, "{domain:?} {j} {k}: {ip}");
                }
            }
        }
    }

    #[test]
    fn single_mode_solves() {
        let line = SpectralBasis::new(SpectralDomain::UnitInterval, 3);
        for s in [0.1, 0.5, 0.9] {
            let u = fractional_solve_exact(&line, &[1.0], s).unwrap();
            assert!((u[0] - (PI * PI).powf(-s)).abs() < 1e-15);
        }
        let u = fractional_solve_exact(&line, &[1.0, 2.0, 3.0], 1e-12).unwrap();
        assert!(u
            .iter()
            .zip([1.0, 2.0, 3.0])
            .all(|(a, b)| (a - b).abs() < 1e-10));
        let sq = SpectralBasis::new(SpectralDomain::UnitSquare, 1);
        assert_eq!(sq.mode(0), (1, 1));
        let u = fractional_solve_exact(&sq, &[1.0], 0.5).unwrap();
        assert!((u[0] - (2.0 * PI * PI).powf(-0.5)).abs() < 1e-15);
        assert!(fractional_solve_exact(&sq, &[f64::NAN], 0.5).is_err());
        assert!(fractional_solve_exact(&sq, &[1.0, 1.0], 0.5).is_err());
    }

    #[test]
    fn profile_matches_sinh_for_unweighted_case() {
        let (lambda, y) = (PI * PI, 2.5);
        let p = extension_profile(lambda, 0.5, y).unwrap();
        let r = lambda.sqrt();
        let mut worst = 0.0f64;
        for (t, v) in p.nodes.iter().zip(&p.values) {
            let e = (r * (y - t)).sinh() / (r * y).sinh();
            worst = worst.max((v - e).abs());
        }
        assert!(worst < 1e-6, "{worst}");
        // -psi'(0) = sqrt(lambda) coth(sqrt(lambda) Y)
        let n_exact = r / (r * y).tanh();
        assert!(
            (p.energy - n_exact).abs() < 1e-6 * n_exact,
            "{} {}",
            p.energy,
            n_exact
        );
    }

    #[test]
    fn profile_boundary_values_and_monotonicity() {
        for s in [0.2, 0.5, 0.8] {
            let p = extension_profile_with(PI * PI, s, 2.0, 2000).unwrap();
            assert_eq!(p.values[0], 1.0);
            assert_eq!(*p.values.last().unwrap(), 0.0);
            assert!(p.values.windows(2).all(|w| w[1] <= w[0]));
            // a long cylinder recovers lambda^{-s}
            let long = extension_profile(PI * PI, s, 12.0).unwrap();
            let f = long.trace_factor();
            assert!((f - (PI * PI).powf(-s)).abs() < 1e-4 * f, "{s}: {f}");
        }
        assert!(extension_profile(0.0, 0.5, 1.0).is_err());
    }
}
