//! Experiment front end: INI-style run configuration, the run directory
//! layout, rate fitting and re-export of stored cycles.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::afem::{run_afem, AfemConfig, CycleRecord, CycleState};
use crate::base_mesh::{make_lshape, make_unit_square, BaseGrid, BaseMesh, IntervalMesh};
use crate::control::ControlField;
use crate::cylinder_mesh::{TensorMesh, GAMMA_OFFSET};
use crate::data::Data;
use crate::error::{Error, Result};
use crate::estimator::{Enrichment, EstimatorConfig};
use crate::linear_solver::{PreconditionerKind, SolverConfig};
use crate::ocp::{OcpProblem, OptimizerConfig, OptimizerKind};
use crate::vtk::{base_grid, cylinder_grid, Channel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    LShape,
    UnitInterval,
    UnitSquare,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Self::LShape => "lshape",
            Self::UnitInterval => "unit-interval",
            Self::UnitSquare => "unit-square",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lshape" | "l-shape" => Some(Self::LShape),
            "unit-interval" | "interval" => Some(Self::UnitInterval),
            "unit-square" | "square" => Some(Self::UnitSquare),
            _ => None,
        }
    }
}

/// Desired state: a constant, or the first Dirichlet eigenfunction of the domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DesiredState {
    Constant(f64),
    Sine,
}

impl DesiredState {
    pub fn to_data(self, domain: Domain) -> Data {
        use std::f64::consts::PI;
        match (self, domain) {
            (Self::Constant(c), _) => Data::Constant(c),
            (Self::Sine, Domain::UnitInterval) => {
                Data::function(|p| 2f64.sqrt() * (PI * p[0]).sin())
            }
            (Self::Sine, Domain::UnitSquare) => {
                Data::function(|p| 2.0 * (PI * p[0]).sin() * (PI * p[1]).sin())
            }
            // first mode of the bounding square (-1,1)^2, vanishing on the axes of the cut
            (Self::Sine, Domain::LShape) => {
                Data::function(|p| (PI * p[0]).sin() * (PI * p[1]).sin())
            }
        }
    }

    fn text(self) -> String {
        match self {
            Self::Constant(c) => format!("{c}"),
            Self::Sine => "sine".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub domain: Domain,
    /// Uniform bisection passes applied to the initial mesh.
    pub initial_refinements: usize,
    pub s: f64,
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    pub u_d: DesiredState,
    pub theta: f64,
    pub max_cycles: usize,
    pub max_cells: usize,
    pub c_tr: Option<f64>,
    pub gamma_offset: f64,
    pub optimizer: OptimizerKind,
    pub optimizer_tol: f64,
    pub optimizer_max_iter: usize,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub preconditioner: PreconditionerKind,
    pub enrichment: Enrichment,
    /// Relative paths are taken relative to the directory of the config file.
    pub output_dir: PathBuf,
    pub export_vtk: bool,
    pub export_cylinder: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        Self {
            domain: Domain::LShape,
            initial_refinements: 2,
            s: 0.5,
            mu: 1.0,
            a: 0.1,
            b: 0.3,
            u_d: DesiredState::Constant(1.0),
            theta: 0.5,
            max_cycles: 17,
            max_cells: 100_000,
            c_tr: None,
            gamma_offset: GAMMA_OFFSET,
            optimizer: opt.kind,
            optimizer_tol: opt.tol,
            optimizer_max_iter: opt.max_iter,
            solver_tol: opt.solver.tol,
            solver_max_iter: opt.solver.max_iter,
            preconditioner: opt.solver.preconditioner,
            enrichment: Enrichment::Full,
            output_dir: PathBuf::from("run"),
            export_vtk: true,
            export_cylinder: false,
            seed: 0,
        }
    }
}

const KEYS: &[&str] = &[
    "domain",
    "initial_refinements",
    "s",
    "mu",
    "a",
    "b",
    "u_d",
    "theta",
    "max_cycles",
    "max_cells",
    "c_tr",
    "gamma_offset",
    "optimizer",
    "optimizer_tol",
    "optimizer_max_iter",
    "solver_tol",
    "solver_max_iter",
    "preconditioner",
    "enrichment",
    "output_dir",
    "export_vtk",
    "export_cylinder",
    "seed",
];

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

fn enrichment_name(e: Enrichment) -> &'static str {
    match e {
        Enrichment::Full => "full",
        Enrichment::None => "none",
    }
}

impl RunConfig {
    /// Parse `key = value` lines. `#` and `;` start comments, `[section]`
    /// headers are ignored, missing keys keep their defaults.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Config {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut cfg = RunConfig::default();
        let mut lines: HashMap<&'static str, usize> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(ln, format!("expected 'key = value', found '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let key = *KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| err(ln, format!("unknown key '{key}'")))?;
            if let Some(prev) = lines.insert(key, ln) {
                return Err(err(
                    ln,
                    format!("duplicate key '{key}' (first set on line {prev})"),
                ));
            }
            let bad = |what: &str| err(ln, format!("{key}: expected {what}, found '{value}'"));
            let float = || value.parse::<f64>().map_err(|_| bad("a number"));
            let int = || {
                value
                    .parse::<usize>()
                    .map_err(|_| bad("a non-negative integer"))
            };
            match key {
                "domain" => {
                    cfg.domain = Domain::parse(value)
                        .ok_or_else(|| bad("lshape, unit-interval or unit-square"))?
                }
                "initial_refinements" => cfg.initial_refinements = int()?,
                "s" => cfg.s = float()?,
                "mu" => cfg.mu = float()?,
                "a" => cfg.a = float()?,
                "b" => cfg.b = float()?,
                "u_d" => {
                    cfg.u_d = if value == "sine" {
                        DesiredState::Sine
                    } else {
                        DesiredState::Constant(
                            value.parse().map_err(|_| bad("a number or 'sine'"))?,
                        )
                    }
                }
                "theta" => cfg.theta = float()?,
                "max_cycles" => cfg.max_cycles = int()?,
                "max_cells" => cfg.max_cells = int()?,
                "c_tr" => {
                    cfg.c_tr = if value == "none" {
                        None
                    } else {
                        Some(value.parse().map_err(|_| bad("a number or 'none'"))?)
                    }
                }
                "gamma_offset" => cfg.gamma_offset = float()?,
                "optimizer" => {
                    cfg.optimizer = OptimizerKind::parse(value)
                        .ok_or_else(|| bad("projected-gradient or projected-lbfgs"))?
                }
                "optimizer_tol" => cfg.optimizer_tol = float()?,
                "optimizer_max_iter" => cfg.optimizer_max_iter = int()?,
                "solver_tol" => cfg.solver_tol = float()?,
                "solver_max_iter" => cfg.solver_max_iter = int()?,
                "preconditioner" => {
                    cfg.preconditioner = PreconditionerKind::parse(value)
                        .ok_or_else(|| bad("diagonal, sgs, line-jacobi or line-sgs"))?
                }
                "enrichment" => {
                    cfg.enrichment = match value {
                        "full" => Enrichment::Full,
                        "none" => Enrichment::None,
                        _ => return Err(bad("full or none")),
                    }
                }
                "output_dir" => {
                    if value.is_empty() {
                        return Err(bad("a path"));
                    }
                    cfg.output_dir = PathBuf::from(value)
                }
                "export_vtk" => {
                    cfg.export_vtk = parse_bool(value).ok_or_else(|| bad("true or false"))?
                }
                "export_cylinder" => {
                    cfg.export_cylinder = parse_bool(value).ok_or_else(|| bad("true or false"))?
                }
                "seed" => cfg.seed = value.parse().map_err(|_| bad("a non-negative integer"))?,
                _ => unreachable!(),
            }
        }
        cfg.check()
            .map_err(|(key, message)| err(lines.get(key).copied().unwrap_or(0), message))?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            line: 0,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&text, path)
    }

    /// Range checks; the error names the offending key.
    fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let finite = |key: &'static str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err((key, format!("{key} = {v} must be finite")))
            }
        };
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(("s", format!("s = {} must lie in (0, 1)", self.s)));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(("mu", format!("mu = {} must be positive", self.mu)));
        }
        finite("a", self.a)?;
        finite("b", self.b)?;
        if self.a > self.b {
            return Err((
                "b",
                format!("bounds a = {} and b = {} need a <= b", self.a, self.b),
            ));
        }
        if let DesiredState::Constant(c) = self.u_d {
            finite("u_d", c)?;
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err((
                "theta",
                format!("theta = {} must lie in (0, 1]", self.theta),
            ));
        }
        if self.max_cells == 0 {
            return Err(("max_cells", "max_cells must be positive".into()));
        }
        if let Some(c) = self.c_tr {
            if !(c > 0.0) || !c.is_finite() {
                return Err(("c_tr", format!("c_tr = {c} must be positive")));
            }
        }
        if !(self.gamma_offset > 0.0) || !self.gamma_offset.is_finite() {
            return Err((
                "gamma_offset",
                format!("gamma_offset = {} must be positive", self.gamma_offset),
            ));
        }
        if !(self.optimizer_tol > 0.0) {
            return Err(("optimizer_tol", "optimizer_tol must be positive".into()));
        }
        if self.optimizer_max_iter == 0 {
            return Err((
                "optimizer_max_iter",
                "optimizer_max_iter must be positive".into(),
            ));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1.0) {
            return Err(("solver_tol", "solver_tol must lie in (0, 1)".into()));
        }
        if self.solver_max_iter == 0 {
            return Err(("solver_max_iter", "solver_max_iter must be positive".into()));
        }
        Ok(())
    }

    /// Every key with its value, in a form `parse` reads back to an equal config.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        let c_tr = self
            .c_tr
            .map_or_else(|| "none".to_string(), |c| format!("{c}"));
        let rows: [(&str, String); 23] = [
            ("domain", self.domain.name().into()),
            ("initial_refinements", self.initial_refinements.to_string()),
            ("s", format!("{}", self.s)),
            ("mu", format!("{}", self.mu)),
            ("a", format!("{}", self.a)),
            ("b", format!("{}", self.b)),
            ("u_d", self.u_d.text()),
            ("theta", format!("{}", self.theta)),
            ("max_cycles", self.max_cycles.to_string()),
            ("max_cells", self.max_cells.to_string()),
            ("c_tr", c_tr),
            ("gamma_offset", format!("{}", self.gamma_offset)),
            ("optimizer", self.optimizer.name().into()),
            ("optimizer_tol", format!("{:e}", self.optimizer_tol)),
            ("optimizer_max_iter", self.optimizer_max_iter.to_string()),
            ("solver_tol", format!("{:e}", self.solver_tol)),
            ("solver_max_iter", self.solver_max_iter.to_string()),
            ("preconditioner", self.preconditioner.name().into()),
            ("enrichment", enrichment_name(self.enrichment).into()),
            ("output_dir", self.output_dir.display().to_string()),
            ("export_vtk", self.export_vtk.to_string()),
            ("export_cylinder", self.export_cylinder.to_string()),
            ("seed", self.seed.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn afem_config(&self) -> AfemConfig {
        let problem = OcpProblem {
            mu: self.mu,
            a: self.a,
            b: self.b,
            u_d: self.u_d.to_data(self.domain),
        };
        let mut cfg = AfemConfig::new(self.s, problem);
        cfg.theta = self.theta;
        cfg.max_cycles = self.max_cycles;
        cfg.max_cells = self.max_cells;
        cfg.c_tr = self.c_tr;
        cfg.gamma_offset = self.gamma_offset;
        cfg.optimizer = OptimizerConfig {
            kind: self.optimizer,
            tol: self.optimizer_tol,
            max_iter: self.optimizer_max_iter,
            solver: SolverConfig {
                tol: self.solver_tol,
                max_iter: self.solver_max_iter,
                preconditioner: self.preconditioner,
            },
            ..OptimizerConfig::default()
        };
        cfg.estimator = EstimatorConfig {
            enrichment: self.enrichment,
        };
        cfg
    }
}

/// Base meshes that can be stored in and restored from a run directory.
pub trait StoredGrid: BaseGrid {
    fn to_text(&self) -> String;
    fn from_text(text: &str) -> Result<Self>;
    /// Cylinder export, where the geometry supports it.
    fn cylinder_vtk(_mesh: &TensorMesh<Self>, _state: &[f64], _path: &Path) -> Result<bool> {
        Ok(false)
    }
}

impl StoredGrid for BaseMesh {
    fn to_text(&self) -> String {
        BaseMesh::to_text(self)
    }

    fn from_text(text: &str) -> Result<Self> {
        BaseMesh::from_text(text)
    }

    fn cylinder_vtk(mesh: &TensorMesh<Self>, state: &[f64], path: &Path) -> Result<bool> {
        let grid = cylinder_grid(
            mesh,
            vec![Channel {
                name: "state",
                values: state,
            }],
        );
        grid.write(path, "state on the truncated cylinder")?;
        Ok(true)
    }
}

impl StoredGrid for IntervalMesh {
    fn to_text(&self) -> String {
        IntervalMesh::to_text(self)
    }

    fn from_text(text: &str) -> Result<Self> {
        IntervalMesh::from_text(text)
    }
}

pub const SUMMARY_HEADER: &str =
    "cycle,n_t_omega,m,y,n_t_y,e_v,e_p,e_z,osc,total,j,opt_iters,pg_norm,vi_residual,cg_iterations,marked";

pub fn summary_row(r: &CycleRecord) -> String {
    format!(
        "{},{},{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e},{},{}",
        r.cycle,
        r.n_t_omega,
        r.m,
        r.y,
        r.n_t_y,
        r.e_v,
        r.e_p,
        r.e_z,
        r.osc,
        r.total,
        r.j,
        r.opt_iters,
        r.pg_norm,
        r.vi_residual,
        r.cg_iterations,
        r.marked
    )
}

pub fn cycle_dir(run_dir: &Path, cycle: usize) -> PathBuf {
    run_dir.join(format!("cycle_{cycle:03}"))
}

#[derive(Debug)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub records: Vec<CycleRecord>,
}

/// Read the config at `path`, run the adaptive loop and fill the run directory.
pub fn cmd_run(path: &Path) -> Result<RunOutcome> {
    let config = RunConfig::read(path)?;
    let run_dir = if config.output_dir.is_absolute() {
        config.output_dir.clone()
    } else {
        path.parent()
            .unwrap_or(Path::new("."))
            .join(&config.output_dir)
    };
    run_config(&config, &run_dir)
}

/// Run a parsed config, writing into `run_dir`.
pub fn run_config(config: &RunConfig, run_dir: &Path) -> Result<RunOutcome> {
    let records = match config.domain {
        Domain::UnitInterval => run_in_dir(initial_interval(config)?, config, run_dir, |_| Ok(()))?,
        Domain::UnitSquare => run_in_dir(
            make_unit_square(config.initial_refinements),
            config,
            run_dir,
            |_| Ok(()),
        )?,
        Domain::LShape => run_in_dir(
            make_lshape(config.initial_refinements),
            config,
            run_dir,
            |_| Ok(()),
        )?,
    };
    Ok(RunOutcome {
        run_dir: run_dir.to_path_buf(),
        records,
    })
}

/// `2^initial_refinements` uniform cells on `(0, 1)` (at least two, so that
/// there is an interior node).
pub fn initial_interval(config: &RunConfig) -> Result<IntervalMesh> {
    let n = 1usize << config.initial_refinements.min(24);
    IntervalMesh::uniform(0.0, 1.0, n.max(2))
}

/// As `run_config` from an explicit initial mesh; `hook` sees every cycle
/// after its files are written.
pub fn run_in_dir<G: StoredGrid>(
    base: G,
    config: &RunConfig,
    run_dir: &Path,
    mut hook: impl FnMut(&CycleState<'_, G>) -> Result<()>,
) -> Result<Vec<CycleRecord>> {
    fs::create_dir_all(run_dir)?;
    fs::write(run_dir.join("config.ini"), config.snapshot())?;
    let afem = config.afem_config();
    let mut summary = fs::File::create(run_dir.join("summary.csv"))?;
    writeln!(summary, "{SUMMARY_HEADER}")?;
    let mut log = fs::File::create(run_dir.join("log.txt"))?;
    let mid = config.max_cycles / 2;
    let mut clock = Instant::now();
    let result = run_afem(base, &afem, |state: &CycleState<'_, G>| {
        let r = state.record;
        writeln!(summary, "{}", summary_row(r))?;
        summary.flush()?;
        let last = state.marked_nodes.is_empty();
        let vtk = config.export_vtk && (r.cycle == 0 || r.cycle == mid || last);
        write_cycle(state, config, run_dir, vtk)?;
        writeln!(
            log,
            "cycle {:3} | {} | total {:.6e} | J {:.10e} | opt {} it, pg {:.2e}, vi {:.2e} | cg {} | marked {} | {:.2}s",
            r.cycle,
            state.mesh.summary_line(),
            r.total,
            r.j,
            r.opt_iters,
            r.pg_norm,
            r.vi_residual,
            r.cg_iterations,
            r.marked,
            clock.elapsed().as_secs_f64()
        )?;
        log.flush()?;
        clock = Instant::now();
        hook(state)
    });
    if let Err(e) = &result {
        let _ = writeln!(log, "aborted: {e}");
    }
    result
}

fn write_cycle<G: StoredGrid>(
    state: &CycleState<'_, G>,
    config: &RunConfig,
    run_dir: &Path,
    vtk: bool,
) -> Result<()> {
    let dir = cycle_dir(run_dir, state.record.cycle);
    fs::create_dir_all(&dir)?;
    let base = &state.mesh.base;
    fs::write(dir.join("mesh.txt"), base.to_text())?;

    let mut stars = String::from("node,e_v,e_p,e_z,osc,total\n");
    for st in &state.report.stars {
        let _ = writeln!(
            stars,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            st.node, st.e_v, st.e_p, st.e_z, st.osc, st.total
        );
    }
    fs::write(dir.join("stars.csv"), stars)?;

    let mut elems = String::from("cell,e_sq,osc_sq\n");
    for (c, el) in state.report.elements.iter().enumerate() {
        let _ = writeln!(elems, "{c},{:.16e},{:.16e}", el.e_sq, el.osc_sq);
    }
    fs::write(dir.join("elements.csv"), elems)?;

    let z = &state.solution.control.values;
    let mut control = String::from("cell,value\n");
    for (c, v) in z.iter().enumerate() {
        let _ = writeln!(control, "{c},{v:.16e}");
    }
    fs::write(dir.join("control.csv"), control)?;

    let nv = base.n_vertices();
    let (u, p) = (&state.solution.state[..nv], &state.solution.adjoint[..nv]);
    let mut traces = String::from("vertex,x,y,state,adjoint\n");
    for v in 0..nv {
        let x = base.point(v);
        let _ = writeln!(
            traces,
            "{v},{:.16e},{:.16e},{:.16e},{:.16e}",
            x[0], x[1], u[v], p[v]
        );
    }
    fs::write(dir.join("traces.csv"), traces)?;

    let mut solver = String::from("iteration,j,pg_norm,step,cg_iterations\n");
    for l in &state.solution.log {
        let _ = writeln!(
            solver,
            "{},{:.16e},{:.16e},{:.16e},{}",
            l.iteration, l.j, l.pg_norm, l.step, l.cg_iterations
        );
    }
    fs::write(dir.join("solver.csv"), solver)?;

    if vtk {
        let e_sq: Vec<f64> = state.report.elements.iter().map(|e| e.e_sq).collect();
        let grid = base_grid(
            base,
            vec![
                Channel {
                    name: "state_trace",
                    values: u,
                },
                Channel {
                    name: "adjoint_trace",
                    values: p,
                },
            ],
            vec![
                Channel {
                    name: "control",
                    values: z,
                },
                Channel {
                    name: "estimator_sq",
                    values: &e_sq,
                },
            ],
        );
        grid.write(
            &dir.join("base.vtk"),
            &format!("cycle {}", state.record.cycle),
        )?;
        if config.export_cylinder {
            G::cylinder_vtk(state.mesh, &state.solution.state, &dir.join("cylinder.vtk"))?;
        }
    }
    Ok(())
}

/// Least-squares slope of `ln total` against `ln n` over `(n, total)` pairs.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "rate fit needs at least 2 rows, got {}",
            points.len()
        )));
    }
    if let Some(&(n, e)) = points
        .iter()
        .find(|(n, e)| !(*n > 0.0 && *e > 0.0) || !n.is_finite() || !e.is_finite())
    {
        return Err(Error::InvalidArgument(format!(
            "cannot take logarithms of ({n}, {e})"
        )));
    }
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 1e-12 * xs.iter().map(|x| x * x).sum::<f64>()) {
        return Err(Error::InvalidArgument(
            "all rows share the same #T_Y".into(),
        ));
    }
    Ok(sxy / sxx)
}

/// `(n_t_y, total)` pairs from a summary CSV.
pub fn read_summary(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty file", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Parse(format!("{}: no '{name}' column", path.display())))
    };
    let (cn, ce) = (col("n_t_y")?, col("total")?);
    lines
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            let get = |c: usize| {
                f.get(c)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse(format!("{}:{}: bad row", path.display(), i + 1)))
            };
            Ok((get(cn)?, get(ce)?))
        })
        .collect()
}

/// Slope of `ln total` against `ln #T_Y` over the last `window` rows of a summary.
pub fn cmd_fit_rate(path: &Path, window: usize) -> Result<f64> {
    if window < 2 {
        return Err(Error::InvalidArgument(format!(
            "window {window} must be at least 2"
        )));
    }
    let rows = read_summary(path)?;
    let start = rows.len().saturating_sub(window);
    fit_rate(&rows[start..])
}

fn read_column(path: &Path, col: usize, len: usize) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut out = vec![f64::NAN; len];
    for (i, l) in text
        .lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let f: Vec<&str> = l.split(',').collect();
        let bad = || Error::Parse(format!("{}:{}: bad row", path.display(), i + 1));
        let idx: usize = f[0].trim().parse().map_err(|_| bad())?;
        let v: f64 = f
            .get(col)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(bad)?;
        *out.get_mut(idx).ok_or_else(bad)? = v;
    }
    if out.iter().any(|v| v.is_nan()) {
        return Err(Error::Parse(format!("{}: missing rows", path.display())));
    }
    Ok(out)
}

/// Rebuild `export.vtk` in a stored cycle: base mesh, control as cell data and
/// the state and adjoint traces as point data.
pub fn cmd_export(run_dir: &Path, cycle: usize) -> Result<PathBuf> {
    let dir = cycle_dir(run_dir, cycle);
    if !dir.join("mesh.txt").is_file() {
        return Err(Error::InvalidArgument(format!(
            "run {} has no cycle {cycle}",
            run_dir.display()
        )));
    }
    let config = RunConfig::read(&run_dir.join("config.ini"))?;
    match config.domain {
        Domain::UnitInterval => export_in::<IntervalMesh>(&dir, cycle),
        Domain::UnitSquare | Domain::LShape => export_in::<BaseMesh>(&dir, cycle),
    }
}

fn export_in<G: StoredGrid>(dir: &Path, cycle: usize) -> Result<PathBuf> {
    let base = G::from_text(&fs::read_to_string(dir.join("mesh.txt"))?)?;
    let control = read_column(&dir.join("control.csv"), 1, base.n_cells())?;
    let state = read_column(&dir.join("traces.csv"), 3, base.n_vertices())?;
    let adjoint = read_column(&dir.join("traces.csv"), 4, base.n_vertices())?;
    let grid = base_grid(
        &base,
        vec![
            Channel {
                name: "state_trace",
                values: &state,
            },
            Channel {
                name: "adjoint_trace",
                values: &adjoint,
            },
        ],
        vec![Channel {
            name: "control",
            values: &control,
        }],
    );
    let out = dir.join("export.vtk");
    grid.write(&out, &format!("cycle {cycle}"))?;
    Ok(out)
}

/// Control of a stored cycle, for checks that reload a run.
pub fn read_control(
    run_dir: &Path,
    cycle: usize,
    n_cells: usize,
    a: f64,
    b: f64,
) -> Result<ControlField> {
    let values = read_column(&cycle_dir(run_dir, cycle).join("control.csv"), 1, n_cells)?;
    ControlField::new(values, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test.ini")
    }

    #[test]
    fn defaults_and_round_trip() {
        let cfg = RunConfig::parse("", p()).unwrap();
        assert_eq!(cfg, RunConfig::default());
        let text = "domain = unit-square\ns = 0.3\nu_d = sine\nc_tr = 1.5\nsolver_tol = 1e-12\n\
                    enrichment = none\noptimizer = projected-lbfgs\nexport_cylinder = yes\nseed = 42\n";
        let cfg = RunConfig::parse(text, p()).unwrap();
        assert_eq!(cfg.domain, Domain::UnitSquare);
        assert_eq!(cfg.c_tr, Some(1.5));
        assert_eq!(cfg.u_d, DesiredState::Sine);
        assert_eq!(RunConfig::parse(&cfg.snapshot(), p()).unwrap(), cfg);
    }

    #[test]
    fn comments_sections_and_blank_lines() {
        let cfg = RunConfig::parse("# experiment\n[run]\n\n s = 0.25 ; inline\n", p()).unwrap();
        assert_eq!(cfg.s, 0.25);
    }

    fn line_of(text: &str) -> (usize, String) {
        match RunConfig::parse(text, p()) {
            Err(Error::Config { line, message, .. }) => (line, message),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_are_line_anchored() {
        assert_eq!(line_of("mu = 1\ns = 1.2\n").0, 2);
        assert_eq!(line_of("mu = 1\n\nfoo = 3\n").0, 3);
        assert_eq!(line_of("s = abc\n").0, 1);
        assert_eq!(line_of("s = 0.5\ns = 0.4\n").0, 2);
        assert_eq!(line_of("a = 0.5\nmu=1\nb = 0.1\n").0, 3);
        assert_eq!(line_of("theta = 0\n").0, 1);
        assert_eq!(line_of("\nnot a pair\n").0, 2);
        assert_eq!(line_of("domain = disk\n").0, 1);
        assert!(line_of("s = 1.2").1.contains("(0, 1)"));
    }

    #[test]
    fn rate_fit_examples() {
        let pts: Vec<(f64, f64)> = [1e2f64, 1e3, 3e3, 1e4, 1e5]
            .iter()
            .map(|&n| (n, 2.5 * n.powf(-1.0 / 3.0)))
            .collect();
        assert!((fit_rate(&pts).unwrap() + 1.0 / 3.0).abs() < 1e-12);
        let flat: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, 0.7)).collect();
        assert!(fit_rate(&flat).unwrap().abs() < 1e-14);
        assert!((fit_rate(&[(10.0, 1.0), (1000.0, 0.1)]).unwrap() + 0.5).abs() < 1e-14);
        assert!(fit_rate(&[(10.0, 1.0)]).is_err());
        assert!(fit_rate(&[(10.0, 1.0), (10.0, 0.5)]).is_err());
        assert!(fit_rate(&[(10.0, 0.0), (20.0, 0.5)]).is_err());
    }
}
