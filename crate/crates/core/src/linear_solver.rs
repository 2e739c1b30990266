//! Preconditioned conjugate gradients for the SPD extension systems.

use rayon::prelude::*;

use crate::assembly::SparseSystem;
use crate::error::{Error, Result};
use crate::sparse::{dot, CsrMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PreconditionerKind {
    Diagonal,
    SymmetricGaussSeidel,
    /// Block Jacobi with one tridiagonal block per base vertex (all y-levels).
    LineJacobi,
    /// Symmetric block Gauss-Seidel over the same y-lines.
    LineGaussSeidel,
}

impl PreconditionerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Diagonal => "diagonal",
            Self::SymmetricGaussSeidel => "sgs",
            Self::LineJacobi => "line-jacobi",
            Self::LineGaussSeidel => "line-sgs",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "diagonal" | "jacobi" => Some(Self::Diagonal),
            "sgs" => Some(Self::SymmetricGaussSeidel),
            "line-jacobi" => Some(Self::LineJacobi),
            "line-sgs" => Some(Self::LineGaussSeidel),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub preconditioner: PreconditionerKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 20_000,
            preconditioner: PreconditionerKind::LineGaussSeidel,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Backward error `||b - Ax|| / || |A||x| + |b| ||` of the returned iterate.
    pub residual: f64,
}

/// `L D L^T` factor of a symmetric tridiagonal block.
#[derive(Clone, Debug)]
struct TridiagFactor {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl TridiagFactor {
    fn new(diag: &[f64], off: &[f64]) -> Self {
        let n = diag.len();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        d[0] = diag[0];
        for k in 1..n {
            l[k - 1] = off[k - 1] / d[k - 1];
            d[k] = diag[k] - l[k - 1] * off[k - 1];
        }
        Self { d, l }
    }

    fn solve(&self, x: &mut [f64]) {
        let n = self.d.len();
        for k in 1..n {
            x[k] -= self.l[k - 1] * x[k - 1];
        }
        for k in 0..n {
            x[k] /= self.d[k];
        }
        for k in (0..n.saturating_sub(1)).rev() {
            x[k] -= self.l[k] * x[k + 1];
        }
    }
}

enum Preconditioner {
    Diagonal(Vec<f64>),
    Sgs(Vec<f64>),
    Lines {
        blocks: Vec<TridiagFactor>,
        lines: usize,
        symmetric_gs: bool,
    },
}

/// A PCG solver bound to one matrix with a prebuilt preconditioner.
pub struct SpdSolver<'a> {
    matrix: &'a CsrMatrix,
    pre: Preconditioner,
    pub config: SolverConfig,
}

impl<'a> SpdSolver<'a> {
    /// `lines` is the number of y-lines (free base vertices) for the line
    /// preconditioners; row `r` belongs to line `r % lines`.
    pub fn new(matrix: &'a CsrMatrix, lines: usize, config: SolverConfig) -> Result<Self> {
        if !(config.tol > 0.0) {
            return Err(Error::InvalidArgument(
                "solver tolerance must be positive".into(),
            ));
        }
        let n = matrix.n_rows();
        let diag = matrix.diagonal();
        if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "matrix diagonal entry {i} is not positive"
            )));
        }
        let pre = match config.preconditioner {
            PreconditionerKind::Diagonal => Preconditioner::Diagonal(diag),
            PreconditionerKind::SymmetricGaussSeidel => Preconditioner::Sgs(diag),
            kind => {
                let lines = lines.max(1);
                if n % lines != 0 {
                    return Err(Error::InvalidArgument(format!(
                        "{n} unknowns do not split into {lines} lines"
                    )));
                }
                let layers = n / lines;
                let blocks = (0..lines)
                    .into_par_iter()
                    .map(|i| {
                        let dg: Vec<f64> = (0..layers).map(|k| diag[k * lines + i]).collect();
                        let off: Vec<f64> = (1..layers)
                            .map(|k| matrix.get((k - 1) * lines + i, k * lines + i))
                            .collect();
                        TridiagFactor::new(&dg, &off)
                    })
                    .collect();
                Preconditioner::Lines {
                    blocks,
                    lines,
                    symmetric_gs: kind == PreconditionerKind::LineGaussSeidel,
                }
            }
        };
        Ok(Self {
            matrix,
            pre,
            config,
        })
    }

    pub fn for_system(system: &'a SparseSystem, config: SolverConfig) -> Result<Self> {
        Self::new(&system.matrix, system.free_vertices.len(), config)
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let a = self.matrix;
        match &self.pre {
            Preconditioner::Diagonal(d) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(d) {
                    *zi = ri / di;
                }
            }
            Preconditioner::Sgs(d) => {
                let n = r.len();
                for i in 0..n {
                    let (cols, vals) = a.row(i);
                    let mut s = r[i];
                    for (&j, &v) in cols.iter().zip(vals) {
                        if j < i {
                            s -= v * z[j];
                        }
                    }
                    z[i] = s / d[i];
                }
                for i in 0..n {
                    z[i] *= d[i];
                }
                for i in (0..n).rev() {
                    let (cols, vals) = a.row(i);
                    let mut s = z[i];
                    for (&j, &v) in cols.iter().zip(vals) {
                        if j > i {
                            s -= v * z[j];
                        }
                    }
                    z[i] = s / d[i];
                }
            }
            Preconditioner::Lines {
                blocks,
                lines,
                symmetric_gs,
            } => {
                let lines = *lines;
                let layers = r.len() / lines;
                if !symmetric_gs {
                    let solved: Vec<Vec<f64>> = (0..lines)
                        .into_par_iter()
                        .map(|i| {
                            let mut x: Vec<f64> = (0..layers).map(|k| r[k * lines + i]).collect();
                            blocks[i].solve(&mut x);
                            x
                        })
                        .collect();
                    for (i, x) in solved.into_iter().enumerate() {
                        for (k, v) in x.into_iter().enumerate() {
                            z[k * lines + i] = v;
                        }
                    }
                    return;
                }
                z.iter_mut().for_each(|v| *v = 0.0);
                let mut buf = vec![0.0; layers];
                // forward sweep: couplings to lines already visited
                for i in 0..lines {
                    for k in 0..layers {
                        let row = k * lines + i;
                        let (cols, vals) = a.row(row);
                        let mut s = r[row];
                        for (&j, &v) in cols.iter().zip(vals) {
                            if j % lines < i {
                                s -= v * z[j];
                            }
                        }
                        buf[k] = s;
                    }
                    blocks[i].solve(&mut buf);
                    for k in 0..layers {
                        z[k * lines + i] = buf[k];
                    }
                }
                // backward sweep: the full residual of each line block
                for i in (0..lines).rev() {
                    for k in 0..layers {
                        let row = k * lines + i;
                        let (cols, vals) = a.row(row);
                        let mut s = 0.0;
                        for (&j, &v) in cols.iter().zip(vals) {
                            if j % lines > i {
                                s += v * z[j];
                            }
                        }
                        buf[k] = s;
                    }
                    blocks[i].solve(&mut buf);
                    for k in 0..layers {
                        z[k * lines + i] -= buf[k];
                    }
                }
            }
        }
    }

    /// Solve `A x = b`, starting from `x0` when given.
    pub fn solve(&self, b: &[f64], x0: Option<&[f64]>) -> Result<(Vec<f64>, SolveStats)> {
        let n = self.matrix.n_rows();
        if b.len() != n {
            return Err(Error::InvalidArgument(format!(
                "right-hand side has length {} but the system has {n} unknowns",
                b.len()
            )));
        }
        if b.iter().all(|&v| v == 0.0) {
            return Ok((vec![0.0; n], SolveStats::default()));
        }
        let mut z = vec![0.0; n];
        // Stopping test on the backward error ||b - Ax|| <= tol || |A||x| + |b| ||.
        // Rows of the thinnest layers carry entries many orders above the rest, so
        // ||b - Ax|| <= tol ||b|| can sit below the round-off of Ax itself.
        let a = self.matrix;
        let scale = |x: &[f64]| -> f64 {
            (0..n)
                .map(|i| {
                    let (cols, vals) = a.row(i);
                    let s: f64 = cols.iter().zip(vals).map(|(&j, v)| (v * x[j]).abs()).sum();
                    (s + b[i].abs()).powi(2)
                })
                .sum::<f64>()
                .sqrt()
        };
        let mut b_norm = dot(b, b).sqrt();
        let mut x = match x0 {
            Some(x0) if x0.len() == n => x0.to_vec(),
            _ => vec![0.0; n],
        };
        let mut target = self.config.tol * b_norm;
        let mut r = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut ap = vec![0.0; n];
        let mut rz = 0.0;
        let mut res = f64::INFINITY;
        let mut last_true = f64::INFINITY;
        let mut restart = true;
        let mut done = 0;
        for it in 0..=self.config.max_iter {
            done = it;
            if restart {
                // (re)start from the true residual
                self.matrix.mul_vec_into(&x, &mut ap);
                for i in 0..n {
                    r[i] = b[i] - ap[i];
                }
                self.apply(&r, &mut z);
                rz = dot(&r, &z);
                b_norm = scale(&x);
                target = self.config.tol * b_norm;
                let true_res = dot(&r, &r).sqrt();
                if true_res <= target {
                    return Ok((
                        x,
                        SolveStats {
                            iterations: it,
                            residual: true_res / b_norm,
                        },
                    ));
                }
                if !(true_res < 0.5 * last_true) {
                    // restarting made no progress: the attainable accuracy is reached
                    res = true_res;
                    break;
                }
                last_true = true_res;
                res = true_res;
                p.copy_from_slice(&z);
                restart = false;
            }
            if it == self.config.max_iter {
                break;
            }
            self.matrix.mul_vec_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::SolverDiverged {
                    iterations: it + 1,
                    residual: res / b_norm,
                });
            }
            let step = rz / pap;
            for i in 0..n {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            self.apply(&r, &mut z);
            let rz_new = dot(&r, &z);
            res = dot(&r, &r).sqrt();
            if it % 10 == 9 {
                b_norm = scale(&x);
                target = self.config.tol * b_norm;
            }
            if res <= target {
                restart = true;
                continue;
            }
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::SolverDiverged {
            iterations: done,
            residual: res / b_norm.max(f64::MIN_POSITIVE),
        })
    }
}

/// One-shot solve on a sparse system.
pub fn solve_spd(
    system: &SparseSystem,
    rhs: &[f64],
    config: SolverConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    SpdSolver::for_system(system, config)?.solve(rhs, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_kinds() -> [PreconditionerKind; 4] {
        [
            PreconditionerKind::Diagonal,
            PreconditionerKind::SymmetricGaussSeidel,
            PreconditionerKind::LineJacobi,
            PreconditionerKind::LineGaussSeidel,
        ]
    }

    #[test]
    fn identity_and_zero() {
        let a = CsrMatrix::identity(5);
        let b = [1.0, -2.0, 3.0, 0.5, 7.0];
        for kind in all_kinds() {
            let cfg = SolverConfig {
                preconditioner: kind,
                ..Default::default()
            };
            let s = SpdSolver::new(&a, 1, cfg).unwrap();
            let (x, _) = s.solve(&b, None).unwrap();
            for (xi, bi) in x.iter().zip(b) {
                assert!((xi - bi).abs() < 1e-14);
            }
            let (z, stats) = s.solve(&[0.0; 5], None).unwrap();
            assert!(z.iter().all(|&v| v == 0.0));
            assert_eq!(stats.iterations, 0);
        }
    }

    #[test]
    fn poisson_three_by_three() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            vec![
                (0, 0, 2.0),
                (0, 1, -1.0),
                (1, 0, -1.0),
                (1, 1, 2.0),
                (1, 2, -1.0),
                (2, 1, -1.0),
                (2, 2, 2.0),
            ],
        );
        for kind in all_kinds() {
            for lines in [1, 3] {
                let cfg = SolverConfig {
                    preconditioner: kind,
                    ..Default::default()
                };
                let (x, _) = SpdSolver::new(&a, lines, cfg)
                    .unwrap()
                    .solve(&[1.0; 3], None)
                    .unwrap();
                for (xi, e) in x.iter().zip([1.5, 2.0, 1.5]) {
                    assert!((xi - e).abs() < 1e-12, "{kind:?} {lines}: {x:?}");
                }
            }
        }
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, t);
        let cfg = SolverConfig {
            tol: 1e-12,
            max_iter: 3,
            preconditioner: PreconditionerKind::Diagonal,
        };
        match SpdSolver::new(&a, 1, cfg)
            .unwrap()
            .solve(&vec![1.0; n], None)
        {
            Err(Error::SolverDiverged {
                iterations,
                residual,
            }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-12);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
