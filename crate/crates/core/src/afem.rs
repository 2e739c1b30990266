//! The adaptive loop SOLVE -> ESTIMATE -> MARK -> REFINE.

use std::collections::BTreeSet;

use crate::assembly::assemble_stiffness;
use crate::base_mesh::BaseGrid;
use crate::control::ControlField;
use crate::cylinder_mesh::{build_tensor, truncation_height, TensorMesh, GAMMA_OFFSET};
use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimatorConfig, EstimatorInput, EstimatorReport};
use crate::ocp::{solve_ocp, OcpProblem, OcpSolution, OptimizerConfig};

#[derive(Clone, Debug)]
pub struct AfemConfig {
    pub s: f64,
    pub problem: OcpProblem,
    /// Dörfler parameter in `(0, 1]`.
    pub theta: f64,
    pub max_cycles: usize,
    /// Stop once `#T_Y` reaches this many cells.
    pub max_cells: usize,
    /// Enforce `h_Y <= C_Tr h_z` by adding layers; `None` keeps `M ~ #T^(1/n)`.
    pub c_tr: Option<f64>,
    pub gamma_offset: f64,
    pub optimizer: OptimizerConfig,
    pub estimator: EstimatorConfig,
}

impl AfemConfig {
    pub fn new(s: f64, problem: OcpProblem) -> Self {
        Self {
            s,
            problem,
            theta: 0.5,
            max_cycles: 17,
            max_cells: 100_000,
            c_tr: None,
            gamma_offset: GAMMA_OFFSET,
            optimizer: OptimizerConfig::default(),
            estimator: EstimatorConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "s = {} must lie in (0, 1)",
                self.s
            )));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "theta = {} must lie in (0, 1]",
                self.theta
            )));
        }
        if self.max_cells == 0 {
            return Err(Error::InvalidArgument(
                "cell budget must be positive".into(),
            ));
        }
        if let Some(c) = self.c_tr {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "C_Tr = {c} must be positive"
                )));
            }
        }
        self.problem.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleRecord {
    pub cycle: usize,
    pub n_t_omega: usize,
    pub m: usize,
    pub y: f64,
    pub n_t_y: usize,
    pub e_v: f64,
    pub e_p: f64,
    pub e_z: f64,
    pub osc: f64,
    pub total: f64,
    pub j: f64,
    pub opt_iters: usize,
    pub pg_norm: f64,
    pub vi_residual: f64,
    pub cg_iterations: usize,
    /// Number of marked stars (0 on the last cycle).
    pub marked: usize,
}

/// Everything produced on one cycle, handed to the observer of `run_afem`.
pub struct CycleState<'a, G: BaseGrid> {
    pub record: &'a CycleRecord,
    pub mesh: &'a TensorMesh<G>,
    pub solution: &'a OcpSolution,
    pub report: &'a EstimatorReport,
    /// Marked base nodes (empty on the last cycle).
    pub marked_nodes: &'a [usize],
}

/// Indices of the shortest prefix of the values sorted in decreasing order
/// (ties by index) whose squares sum to at least `theta^2` times the total.
pub fn mark_dorfler(values: &[f64], theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "theta = {theta} must lie in (0, 1]"
        )));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].abs().total_cmp(&values[i].abs()).then(i.cmp(&j)));
    let total: f64 = values.iter().map(|v| v * v).sum();
    let target = theta * theta * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for i in order {
        if acc >= target && !marked.is_empty() {
            break;
        }
        acc += values[i] * values[i];
        marked.push(i);
    }
    if theta == 1.0 {
        marked = (0..values.len()).collect();
    }
    marked.sort_unstable();
    Ok(marked)
}

/// Union of the cells of the stars around `nodes`.
pub fn star_cells<G: BaseGrid>(base: &G, nodes: &[usize]) -> Vec<usize> {
    let set: BTreeSet<usize> = nodes
        .iter()
        .flat_map(|&z| base.vertex_cells(z).iter().copied())
        .collect();
    set.into_iter().collect()
}

/// Bisect every cell of the marked stars and rebuild the cylinder with the new
/// truncation height.
pub fn refine_cycle<G: BaseGrid>(
    mesh: &TensorMesh<G>,
    marked_nodes: &[usize],
    config: &AfemConfig,
) -> Result<TensorMesh<G>> {
    let cells = star_cells(&mesh.base, marked_nodes);
    let base = mesh.base.refine(&cells);
    initial_tensor(base, config)
}

/// Cylinder over `base` with `Y = 1 + ln(#T)/3`.
pub fn initial_tensor<G: BaseGrid>(base: G, config: &AfemConfig) -> Result<TensorMesh<G>> {
    let y = truncation_height(base.n_cells());
    build_tensor(base, config.s, y, config.c_tr, config.gamma_offset)
}

/// Run the adaptive loop from `base`. `observe` sees every completed cycle, so
/// its records survive an error on a later cycle.
pub fn run_afem<G: BaseGrid>(
    base: G,
    config: &AfemConfig,
    mut observe: impl FnMut(&CycleState<'_, G>) -> Result<()>,
) -> Result<Vec<CycleRecord>> {
    config.validate()?;
    let mut mesh = initial_tensor(base, config)?;
    let mut records = Vec::new();
    let mut warm: Option<ControlField> = None;
    for cycle in 0..=config.max_cycles {
        let system = assemble_stiffness(&mesh)?;
        let solution = solve_ocp(
            &mesh,
            &system,
            &config.problem,
            &config.optimizer,
            warm.as_ref(),
        )?;
        let report = estimate(
            &EstimatorInput {
                mesh: &mesh,
                state: &solution.state,
                adjoint: &solution.adjoint,
                control: &solution.control,
                u_d: &config.problem.u_d,
                mu: config.problem.mu,
            },
            &config.estimator,
        )?;
        let last = cycle == config.max_cycles || mesh.n_cells() >= config.max_cells;
        let marked_nodes: Vec<usize> = if last {
            Vec::new()
        } else {
            let totals: Vec<f64> = report.stars.iter().map(|s| s.total).collect();
            mark_dorfler(&totals, config.theta)?
                .into_iter()
                .map(|i| report.stars[i].node)
                .collect()
        };
        let record = CycleRecord {
            cycle,
            n_t_omega: mesh.base.n_cells(),
            m: mesh.interval.m(),
            y: mesh.interval.height(),
            n_t_y: mesh.n_cells(),
            e_v: report.e_v,
            e_p: report.e_p,
            e_z: report.e_z,
            osc: report.osc,
            total: report.total,
            j: solution.j,
            opt_iters: solution.iterations,
            pg_norm: solution.pg_norm,
            vi_residual: solution.vi_residual,
            cg_iterations: solution.log.iter().map(|l| l.cg_iterations).sum(),
            marked: marked_nodes.len(),
        };
        observe(&CycleState {
            record: &record,
            mesh: &mesh,
            solution: &solution,
            report: &report,
            marked_nodes: &marked_nodes,
        })?;
        records.push(record);
        if last {
            break;
        }
        let next = refine_cycle(&mesh, &marked_nodes, config)?;
        warm = Some(solution.control.prolongate(&next.base));
        mesh = next;
    }
    Ok(records)
}
