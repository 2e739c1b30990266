//! The fully discrete optimal control problem and its reduced-space optimizers.

use crate::assembly::{assemble_trace_load, ScalarField, SparseSystem, TraceData, DATA_DEGREE};
use crate::base_mesh::BaseGrid;
use crate::control::{cell_means, clamp, fixed_point_defect, vi_residual, ControlField};
use crate::cylinder_mesh::TensorMesh;
use crate::data::Data;
use crate::error::{Error, Result};
use crate::linear_solver::{SolverConfig, SpdSolver};
use crate::sparse::dot;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    ProjectedGradient,
    ProjectedLbfgs,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::ProjectedGradient => "projected-gradient",
            Self::ProjectedLbfgs => "projected-lbfgs",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "projected-gradient" | "pg" => Some(Self::ProjectedGradient),
            "projected-lbfgs" | "projected-bfgs" | "lbfgs" => Some(Self::ProjectedLbfgs),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    /// Stop when the l2 norm of the projected gradient is at most this.
    pub tol: f64,
    pub max_iter: usize,
    pub armijo_sigma: f64,
    pub backtrack: f64,
    pub lbfgs_memory: usize,
    pub solver: SolverConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::ProjectedGradient,
            tol: 1e-5,
            max_iter: 500,
            armijo_sigma: 1e-4,
            backtrack: 0.5,
            lbfgs_memory: 10,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct OcpProblem {
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    pub u_d: Data,
}

impl OcpProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mu = {} must be positive",
                self.mu
            )));
        }
        if !(self.a <= self.b) {
            return Err(Error::InvalidArgument(format!(
                "control bounds must satisfy a <= b (got {}, {})",
                self.a, self.b
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub j: f64,
    pub pg_norm: f64,
    pub step: f64,
    pub cg_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct OcpSolution {
    /// State on all nodes of `V(T_Y)`.
    pub state: ScalarField,
    /// Adjoint on all nodes of `V(T_Y)`.
    pub adjoint: ScalarField,
    pub control: ControlField,
    pub j: f64,
    pub iterations: usize,
    pub pg_norm: f64,
    pub vi_residual: f64,
    pub log: Vec<IterationLog>,
}

/// `1/2 ||tr V - u_d||^2 + mu/2 ||Z||^2`, with `tr V` a P1 function on the base mesh.
pub fn evaluate_j<G: BaseGrid>(
    base: &G,
    state_trace: &[f64],
    z: &ControlField,
    u_d: &Data,
    mu: f64,
) -> f64 {
    let rule = G::rule(DATA_DEGREE);
    let mut misfit = 0.0;
    for c in 0..base.n_cells() {
        let verts = base.cell(c);
        let mut acc = 0.0;
        for q in &rule {
            let u: f64 = verts
                .iter()
                .enumerate()
                .map(|(i, &v)| q.bary[i] * state_trace[v])
                .sum();
            let d = u - u_d.eval(base.map_bary(c, &q.bary));
            acc += q.weight * d * d;
        }
        misfit += base.measure(c) * acc;
    }
    0.5 * misfit + 0.5 * mu * z.l2_norm_sq(base)
}

/// State `V` with `a_Y(V, W) = (Z, tr W)` for all discrete `W`.
pub fn solve_state<G: BaseGrid>(
    mesh: &TensorMesh<G>,
    system: &SparseSystem,
    z: &ControlField,
    config: SolverConfig,
) -> Result<ScalarField> {
    let load = assemble_trace_load(&mesh.base, TraceData::Cellwise(&z.values));
    let solver = SpdSolver::for_system(system, config)?;
    let (x, _) = solver.solve(&system.trace_rhs(&load), None)?;
    Ok(system.to_full(&x))
}

/// Adjoint `P` with `a_Y(P, W) = (tr V - u_d, tr W)` for all discrete `W`.
pub fn solve_adjoint<G: BaseGrid>(
    mesh: &TensorMesh<G>,
    system: &SparseSystem,
    state_trace: &[f64],
    u_d: &Data,
    config: SolverConfig,
) -> Result<ScalarField> {
    let mut load = system.mx.mul_vec(state_trace);
    for (l, d) in load.iter_mut().zip(u_d.load(&mesh.base)) {
        *l -= d;
    }
    let solver = SpdSolver::for_system(system, config)?;
    let (x, _) = solver.solve(&system.trace_rhs(&load), None)?;
    Ok(system.to_full(&x))
}

struct Workspace<'a, G: BaseGrid> {
    base: &'a G,
    system: &'a SparseSystem,
    solver: SpdSolver<'a>,
    areas: Vec<f64>,
    ud_load: Vec<f64>,
    cg_iterations: usize,
}

impl<G: BaseGrid> Workspace<'_, G> {
    fn mdot(&self, x: &[f64], y: &[f64]) -> f64 {
        self.areas
            .iter()
            .zip(x)
            .zip(y)
            .map(|((a, u), v)| a * u * v)
            .sum()
    }

    fn solve(&mut self, rhs: Vec<f64>, warm: Option<&[f64]>) -> Result<Vec<f64>> {
        let (x, stats) = self.solver.solve(&rhs, warm)?;
        self.cg_iterations += stats.iterations;
        Ok(x)
    }

    fn state(&mut self, z: &[f64], warm: Option<&[f64]>) -> Result<Vec<f64>> {
        let load = assemble_trace_load(self.base, TraceData::Cellwise(z));
        let rhs = self.system.trace_rhs(&load);
        self.solve(rhs, warm)
    }

    /// Adjoint for the trace data `tr V - u_d` (or just `tr dV` for increments).
    fn adjoint(&mut self, v: &[f64], with_data: bool, warm: Option<&[f64]>) -> Result<Vec<f64>> {
        let tr = self.system.trace_from_free(v);
        let mut load = self.system.mx.mul_vec(&tr);
        if with_data {
            for (l, d) in load.iter_mut().zip(&self.ud_load) {
                *l -= d;
            }
        }
        let rhs = self.system.trace_rhs(&load);
        self.solve(rhs, warm)
    }

    /// `(tr V - u_d, tr W)` for free coefficient vectors.
    fn misfit_pairing(&self, v: &[f64], w: &[f64]) -> f64 {
        let tv = self.system.trace_from_free(v);
        let tw = self.system.trace_from_free(w);
        dot(&tw, &self.system.mx.mul_vec(&tv)) - dot(&tw, &self.ud_load)
    }

    fn trace_norm_sq(&self, w: &[f64]) -> f64 {
        let tw = self.system.trace_from_free(w);
        dot(&tw, &self.system.mx.mul_vec(&tw))
    }
}

struct Lbfgs {
    memory: usize,
    pairs: Vec<(Vec<f64>, Vec<f64>, f64)>,
}

impl Lbfgs {
    /// Two-loop recursion in the area-weighted inner product, restricted to the
    /// cells in `free`.
    fn direction(&self, g: &[f64], free: &[bool], areas: &[f64], mu: f64) -> Vec<f64> {
        let mdot = |x: &[f64], y: &[f64]| -> f64 {
            (0..x.len())
                .filter(|&k| free[k])
                .map(|k| areas[k] * x[k] * y[k])
                .sum()
        };
        let mut q: Vec<f64> = g
            .iter()
            .zip(free)
            .map(|(&v, &f)| if f { v } else { 0.0 })
            .collect();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, _) in self.pairs.iter().rev() {
            let sy = mdot(s, y);
            if sy <= 0.0 {
                alphas.push(0.0);
                continue;
            }
            let a = mdot(s, &q) / sy;
            for k in 0..q.len() {
                q[k] -= a * y[k];
            }
            alphas.push(a);
        }
        let gamma = match self.pairs.last() {
            Some((s, y, _)) => {
                let sy = mdot(s, y);
                let yy = mdot(y, y);
                if sy > 0.0 && yy > 0.0 {
                    sy / yy
                } else {
                    1.0 / mu
                }
            }
            None => 1.0 / mu,
        };
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for ((s, y, _), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let sy = mdot(s, y);
            if sy <= 0.0 {
                continue;
            }
            let b = mdot(y, &q) / sy;
            for k in 0..q.len() {
                q[k] += (a - b) * s[k];
            }
        }
        q.iter()
            .zip(free)
            .map(|(&v, &f)| if f { -v } else { 0.0 })
            .collect()
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>, sy: f64) {
        if sy <= 0.0 || self.memory == 0 {
            return;
        }
        if self.pairs.len() == self.memory {
            self.pairs.remove(0);
        }
        self.pairs.push((s, y, sy));
    }
}

/// Minimise the reduced cost over `Z_ad`. Each trial step solves for the state
/// increment, so cost differences are computed without cancellation.
pub fn solve_ocp<G: BaseGrid>(
    mesh: &TensorMesh<G>,
    system: &SparseSystem,
    problem: &OcpProblem,
    config: &OptimizerConfig,
    initial: Option<&ControlField>,
) -> Result<OcpSolution> {
    problem.validate()?;
    if !(config.tol > 0.0) {
        return Err(Error::InvalidArgument(
            "optimizer tolerance must be positive".into(),
        ));
    }
    let base = &mesh.base;
    let (a, b, mu) = (problem.a, problem.b, problem.mu);
    let n = base.n_cells();
    let mut z: Vec<f64> = match initial {
        Some(init) if init.len() == n => init.values.iter().map(|&v| clamp(v, a, b)).collect(),
        _ => vec![clamp(0.0, a, b); n],
    };
    let mut ws = Workspace {
        base,
        system,
        solver: SpdSolver::for_system(system, config.solver)?,
        areas: (0..n).map(|c| base.measure(c)).collect(),
        ud_load: problem.u_d.load(base),
        cg_iterations: 0,
    };

    let mut v = ws.state(&z, None)?;
    let mut p = ws.adjoint(&v, true, None)?;
    let mut j = evaluate_j(
        base,
        &system.trace_from_free(&v),
        &ControlField {
            values: z.clone(),
            a,
            b,
        },
        &problem.u_d,
        mu,
    );
    let mut log = Vec::new();
    let mut lbfgs = Lbfgs {
        memory: config.lbfgs_memory,
        pairs: Vec::new(),
    };
    let mut step = 1.0 / mu;
    let mut last_step = 0.0;
    let mut iterations = 0;
    let mut refreshed = false;
    let mut search_refreshed = false;

    loop {
        let means = cell_means(base, &system.trace_from_free(&p));
        let g: Vec<f64> = z.iter().zip(&means).map(|(zk, m)| mu * zk + m).collect();
        let pg_norm = z
            .iter()
            .zip(&means)
            .map(|(zk, m)| {
                let d = zk - clamp(-m / mu, a, b);
                d * d
            })
            .sum::<f64>()
            .sqrt();
        log.push(IterationLog {
            iteration: iterations,
            j,
            pg_norm,
            step: last_step,
            cg_iterations: ws.cg_iterations,
        });

        if pg_norm <= config.tol {
            if refreshed || iterations == 0 {
                break;
            }
            // recompute state and adjoint from the full data before certifying
            v = ws.state(&z, Some(&v))?;
            p = ws.adjoint(&v, true, Some(&p))?;
            refreshed = true;
            log.pop();
            continue;
        }
        refreshed = false;
        if iterations >= config.max_iter {
            return Err(Error::OptimizerStalled {
                iterations,
                pg_norm,
                tol: config.tol,
            });
        }

        let free: Vec<bool> = z
            .iter()
            .zip(&g)
            .map(|(&zk, &gk)| !((zk <= a && gk > 0.0) || (zk >= b && gk < 0.0)))
            .collect();
        let mut direction: Vec<f64> = match config.kind {
            OptimizerKind::ProjectedGradient => g.iter().map(|gk| -gk).collect(),
            OptimizerKind::ProjectedLbfgs => lbfgs.direction(&g, &free, &ws.areas, mu),
        };
        let mut t = match config.kind {
            OptimizerKind::ProjectedGradient => step,
            OptimizerKind::ProjectedLbfgs => 1.0,
        };
        if config.kind == OptimizerKind::ProjectedLbfgs && ws.mdot(&g, &direction) >= 0.0 {
            direction = g.iter().map(|gk| -gk / mu).collect();
        }

        let noise = 8.0 * f64::EPSILON * j.abs();
        let mut accepted = None;
        for _ in 0..60 {
            let z_new: Vec<f64> = z
                .iter()
                .zip(&direction)
                .map(|(zk, dk)| clamp(zk + t * dk, a, b))
                .collect();
            let dz: Vec<f64> = z_new.iter().zip(&z).map(|(x, y)| x - y).collect();
            let slope = ws.mdot(&g, &dz);
            if dz.iter().all(|&d| d == 0.0) || slope >= 0.0 {
                t *= config.backtrack;
                continue;
            }
            let dv = ws.state(&dz, None)?;
            let dj = ws.misfit_pairing(&v, &dv)
                + 0.5 * ws.trace_norm_sq(&dv)
                + mu * ws.mdot(&z, &dz)
                + 0.5 * mu * ws.mdot(&dz, &dz);
            // cost increments below the round-off of j carry no information
            if dj <= config.armijo_sigma * slope || dj <= noise {
                accepted = Some((z_new, dz, dv, dj));
                break;
            }
            t *= config.backtrack;
        }
        let Some((z_new, dz, dv, dj)) = accepted else {
            if search_refreshed {
                return Err(Error::OptimizerStalled {
                    iterations,
                    pg_norm,
                    tol: config.tol,
                });
            }
            // the incrementally updated state and adjoint may have drifted far
            // enough to spoil the descent test; rebuild them and retry
            v = ws.state(&z, Some(&v))?;
            p = ws.adjoint(&v, true, Some(&p))?;
            j = evaluate_j(
                base,
                &system.trace_from_free(&v),
                &ControlField {
                    values: z.clone(),
                    a,
                    b,
                },
                &problem.u_d,
                mu,
            );
            lbfgs.pairs.clear();
            step = 1.0 / mu;
            search_refreshed = true;
            log.pop();
            continue;
        };
        search_refreshed = false;
        let dp = ws.adjoint(&dv, false, None)?;
        for (x, d) in v.iter_mut().zip(&dv) {
            *x += d;
        }
        for (x, d) in p.iter_mut().zip(&dp) {
            *x += d;
        }
        z = z_new;
        j += dj;
        iterations += 1;
        last_step = t;

        // curvature information: y = mu s + mean(tr dP)
        let dmeans = cell_means(base, &system.trace_from_free(&dp));
        let y: Vec<f64> = dz.iter().zip(&dmeans).map(|(s, m)| mu * s + m).collect();
        let sy = ws.mdot(&dz, &y);
        let ss = ws.mdot(&dz, &dz);
        step = if sy > 0.0 {
            (ss / sy).clamp(1e-10, 1e10)
        } else {
            1.0 / mu
        };
        if config.kind == OptimizerKind::ProjectedLbfgs {
            lbfgs.push(dz, y, sy);
        }
    }

    let state_trace = system.trace_from_free(&v);
    let control = ControlField::new(z, a, b)?;
    let adjoint = system.to_full(&p);
    let adjoint_trace = system.trace_from_free(&p);
    let j_final = evaluate_j(base, &state_trace, &control, &problem.u_d, mu);
    let pg_norm = fixed_point_defect(base, &control, &adjoint_trace, mu)
        .iter()
        .map(|d| d * d)
        .sum::<f64>()
        .sqrt();
    let vi = vi_residual(base, &control, &adjoint_trace, mu);
    Ok(OcpSolution {
        state: system.to_full(&v),
        adjoint,
        control,
        j: j_final,
        iterations,
        pg_norm,
        vi_residual: vi,
        log,
    })
}
