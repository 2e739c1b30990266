//! Piecewise-constant admissible controls and the projection onto `[a, b]`.

use crate::base_mesh::BaseGrid;
use crate::error::{Error, Result};

fn check_bounds(a: f64, b: f64) -> Result<()> {
    if !(a <= b) {
        return Err(Error::InvalidArgument(format!(
            "control bounds must satisfy a <= b (got a = {a}, b = {b})"
        )));
    }
    Ok(())
}

/// `min{b, max{a, v}}`.
pub fn clamp_project(v: f64, a: f64, b: f64) -> Result<f64> {
    check_bounds(a, b)?;
    Ok(clamp(v, a, b))
}

#[inline]
pub(crate) fn clamp(v: f64, a: f64, b: f64) -> f64 {
    b.min(a.max(v))
}

/// One value per base cell, with the admissible interval `[a, b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlField {
    pub values: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

impl ControlField {
    pub fn new(values: Vec<f64>, a: f64, b: f64) -> Result<Self> {
        check_bounds(a, b)?;
        Ok(Self { values, a, b })
    }

    pub fn constant(n: usize, value: f64, a: f64, b: f64) -> Result<Self> {
        Self::new(vec![value; n], a, b)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_admissible(&self) -> bool {
        self.values.iter().all(|&v| self.a <= v && v <= self.b)
    }

    /// Cellwise projection onto `[a, b]`.
    pub fn projected(&self) -> Self {
        Self {
            values: self
                .values
                .iter()
                .map(|&v| clamp(v, self.a, self.b))
                .collect(),
            a: self.a,
            b: self.b,
        }
    }

    /// Carry values to a refined mesh through the cell genealogy.
    pub fn prolongate<G: BaseGrid>(&self, fine: &G) -> Self {
        Self {
            values: fine.cell_origin().iter().map(|&c| self.values[c]).collect(),
            a: self.a,
            b: self.b,
        }
    }

    /// `||Z||^2_{L2(Omega)}`.
    pub fn l2_norm_sq<G: BaseGrid>(&self, base: &G) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(c, v)| base.measure(c) * v * v)
            .sum()
    }
}

/// Mean of a P1 trace over each cell.
pub fn cell_means<G: BaseGrid>(base: &G, trace: &[f64]) -> Vec<f64> {
    (0..base.n_cells())
        .map(|c| {
            let verts = base.cell(c);
            verts.iter().map(|&v| trace[v]).sum::<f64>() / verts.len() as f64
        })
        .collect()
}

/// `g_K = mu Z_K + mean_K tr P`, the L2-Riesz representative of the reduced
/// gradient on piecewise constants.
pub fn reduced_gradient<G: BaseGrid>(
    base: &G,
    z: &ControlField,
    adjoint_trace: &[f64],
    mu: f64,
) -> Vec<f64> {
    cell_means(base, adjoint_trace)
        .into_iter()
        .zip(&z.values)
        .map(|(m, &zk)| mu * zk + m)
        .collect()
}

/// `Z_K - Pi(-mean_K tr P / mu)` for every cell.
pub fn fixed_point_defect<G: BaseGrid>(
    base: &G,
    z: &ControlField,
    adjoint_trace: &[f64],
    mu: f64,
) -> Vec<f64> {
    cell_means(base, adjoint_trace)
        .into_iter()
        .zip(&z.values)
        .map(|(m, &zk)| zk - clamp(-m / mu, z.a, z.b))
        .collect()
}

/// Area-weighted l2 norm of the fixed-point defect; zero exactly when `Z`
/// satisfies the discrete variational inequality.
pub fn vi_residual<G: BaseGrid>(base: &G, z: &ControlField, adjoint_trace: &[f64], mu: f64) -> f64 {
    fixed_point_defect(base, z, adjoint_trace, mu)
        .iter()
        .enumerate()
        .map(|(c, d)| base.measure(c) * d * d)
        .sum::<f64>()
        .sqrt()
}

/// `(tr P + mu Z, Y - Z)_{L2(Omega)}` for a competitor control `Y`.
pub fn vi_pairing<G: BaseGrid>(
    base: &G,
    z: &ControlField,
    adjoint_trace: &[f64],
    mu: f64,
    competitor: &[f64],
) -> f64 {
    reduced_gradient(base, z, adjoint_trace, mu)
        .iter()
        .enumerate()
        .map(|(c, g)| base.measure(c) * g * (competitor[c] - z.values[c]))
        .sum()
}
