mod common;

use fracocp::assembly::{assemble_stiffness, assemble_trace_load, SparseSystem, TraceData};
use fracocp::base_mesh::{make_lshape, make_unit_square, BaseGrid, BaseMesh};
use fracocp::control::{vi_pairing, vi_residual, ControlField};
use fracocp::cylinder_mesh::{build_tensor, truncation_height, TensorMesh};
use fracocp::data::Data;
use fracocp::linear_solver::{solve_spd, PreconditionerKind, SolverConfig};
use fracocp::ocp::{
    evaluate_j, solve_adjoint, solve_ocp, solve_state, OcpProblem, OptimizerConfig,
};
use fracocp::sparse::{dot, norm2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{barycentric, locate};

fn lshape(level: usize, s: f64) -> (TensorMesh<BaseMesh>, SparseSystem) {
    let base = make_lshape(level);
    let y = truncation_height(base.n_cells());
    let mesh = build_tensor(base, s, y, None, 0.2).unwrap();
    let system = assemble_stiffness(&mesh).unwrap();
    (mesh, system)
}

fn tight() -> SolverConfig {
    SolverConfig {
        tol: 1e-12,
        ..Default::default()
    }
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm2(&d) / norm2(b).max(f64::MIN_POSITIVE)
}

fn random_control(rng: &mut ChaCha8Rng, n: usize, a: f64, b: f64) -> ControlField {
    ControlField::new((0..n).map(|_| rng.gen_range(a..=b)).collect(), a, b).unwrap()
}

#[test]
fn zero_control_gives_zero_state() {
    let (mesh, system) = lshape(2, 0.3);
    let z = ControlField::constant(mesh.base.n_cells(), 0.0, -1.0, 1.0).unwrap();
    let v = solve_state(&mesh, &system, &z, tight()).unwrap();
    assert!(v.iter().all(|&x| x == 0.0));
}

#[test]
fn galerkin_residual_is_small() {
    for s in [0.2, 0.5, 0.8] {
        let (mesh, system) = lshape(3, s);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random_control(&mut rng, mesh.base.n_cells(), 0.1, 0.3);
        let v = solve_state(&mesh, &system, &z, tight()).unwrap();
        let load = assemble_trace_load(&mesh.base, TraceData::Cellwise(&z.values));
        let f = system.trace_rhs(&load);
        let av = system.matrix.mul_vec(&system.to_free(&v));
        let r: Vec<f64> = f.iter().zip(&av).map(|(a, b)| a - b).collect();
        assert!(
            norm2(&r) <= 1e-8 * norm2(&f),
            "s={s}: {}",
            norm2(&r) / norm2(&f)
        );
    }
}

#[test]
fn state_is_linear_in_control() {
    let (mesh, system) = lshape(2, 0.6);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = mesh.base.n_cells();
    let z1 = random_control(&mut rng, n, -1.0, 1.0);
    let z2 = random_control(&mut rng, n, -1.0, 1.0);
    let sum = ControlField::new(
        z1.values
            .iter()
            .zip(&z2.values)
            .map(|(a, b)| a + b)
            .collect(),
        -2.0,
        2.0,
    )
    .unwrap();
    let v1 = solve_state(&mesh, &system, &z1, tight()).unwrap();
    let v2 = solve_state(&mesh, &system, &z2, tight()).unwrap();
    let v12 = solve_state(&mesh, &system, &sum, tight()).unwrap();
    let added: Vec<f64> = v1.iter().zip(v2.iter()).map(|(a, b)| a + b).collect();
    assert!(rel_diff(&v12, &added) <= 1e-8);
}

#[test]
fn adjoint_is_linear_in_data() {
    let (mesh, system) = lshape(2, 0.4);
    let nv = mesh.base.n_vertices();
    let zero = vec![0.0; nv];
    let p1 = solve_adjoint(
        &mesh,
        &system,
        &zero,
        &Data::function(|p| p[0] * p[1]),
        tight(),
    )
    .unwrap();
    let p2 = solve_adjoint(&mesh, &system, &zero, &Data::Constant(0.7), tight()).unwrap();
    let p12 = solve_adjoint(
        &mesh,
        &system,
        &zero,
        &Data::function(|p| p[0] * p[1] + 0.7),
        tight(),
    )
    .unwrap();
    let added: Vec<f64> = p1.iter().zip(p2.iter()).map(|(a, b)| a + b).collect();
    assert!(rel_diff(&p12, &added) <= 1e-8);
}

#[test]
fn adjoint_vanishes_when_trace_matches_data() {
    let (mesh, system) = lshape(2, 0.5);
    let z = ControlField::constant(mesh.base.n_cells(), 1.0, 0.0, 2.0).unwrap();
    let v = solve_state(&mesh, &system, &z, tight()).unwrap();
    let trace = v[..mesh.base.n_vertices()].to_vec();
    // u_d is the P1 interpolant of the trace itself
    let base = mesh.base.clone();
    let tr = trace.clone();
    let u_d = Data::function(move |p| {
        let t = locate(&base, p).expect("point inside the mesh");
        let l = barycentric(&base, t, p);
        base.cell(t).iter().zip(l).map(|(&v, li)| li * tr[v]).sum()
    });
    let p = solve_adjoint(&mesh, &system, &trace, &u_d, tight()).unwrap();
    let scale = norm2(&v);
    assert!(norm2(&p) <= 1e-10 * scale, "{}", norm2(&p));
}

#[test]
fn adjoint_of_zero_state_flips_sign() {
    let (mesh, system) = lshape(2, 0.7);
    let nv = mesh.base.n_vertices();
    let p = solve_adjoint(
        &mesh,
        &system,
        &vec![0.0; nv],
        &Data::Constant(1.0),
        tight(),
    )
    .unwrap();
    let one = ControlField::constant(mesh.base.n_cells(), 1.0, 0.0, 1.0).unwrap();
    let v = solve_state(&mesh, &system, &one, tight()).unwrap();
    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
    assert!(rel_diff(&p, &neg) <= 1e-8);
}

#[test]
fn preconditioners_give_the_same_solution() {
    let (_, system) = lshape(3, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let b: Vec<f64> = (0..system.n_free())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let kinds = [
        PreconditionerKind::Diagonal,
        PreconditionerKind::SymmetricGaussSeidel,
        PreconditionerKind::LineJacobi,
        PreconditionerKind::LineGaussSeidel,
    ];
    let solutions: Vec<Vec<f64>> = kinds
        .iter()
        .map(|&k| {
            let cfg = SolverConfig {
                tol: 1e-12,
                max_iter: 20_000,
                preconditioner: k,
            };
            let (x, stats) = solve_spd(&system, &b, cfg).unwrap();
            assert!(stats.residual <= 1e-12, "{}", k.name());
            x
        })
        .collect();
    for (k, x) in kinds.iter().zip(&solutions).skip(1) {
        assert!(rel_diff(x, &solutions[0]) <= 1e-8, "{}", k.name());
    }
}

#[test]
fn stiffness_is_coercive() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for s in [0.1, 0.5, 0.9] {
        let (_, system) = lshape(2, s);
        for _ in 0..100 {
            let x: Vec<f64> = (0..system.n_free())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            assert!(system.energy(&x) > 0.0);
        }
    }
}

#[test]
fn trace_is_bounded_by_energy() {
    // ||tr W||^2 <= (1/d_s) ||grad W||^2_{L2(y^alpha)} = a_Y(W, W)
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for s in [0.2, 0.5, 0.8] {
        let (_, system) = lshape(2, s);
        for _ in 0..100 {
            let x: Vec<f64> = (0..system.n_free())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let tr = system.trace_from_free(&x);
            let tr_sq = dot(&tr, &system.mx.mul_vec(&tr));
            assert!(
                tr_sq <= system.energy(&x),
                "s={s}: {tr_sq} > {}",
                system.energy(&x)
            );
        }
    }
}

fn lshape_problem() -> OcpProblem {
    OcpProblem {
        mu: 1.0,
        a: 0.1,
        b: 0.3,
        u_d: Data::Constant(1.0),
    }
}

#[test]
fn lshape_optimum_certificates() {
    let (mesh, system) = lshape(3, 0.4);
    let problem = lshape_problem();
    let cfg = OptimizerConfig {
        tol: 1e-9,
        solver: tight(),
        ..Default::default()
    };
    let sol = solve_ocp(&mesh, &system, &problem, &cfg, None).unwrap();
    let nv = mesh.base.n_vertices();
    let tr_p = &sol.adjoint[..nv];
    assert!(sol.vi_residual <= 1e-5);
    assert!(vi_residual(&mesh.base, &sol.control, tr_p, problem.mu) <= 1e-5);
    assert!(sol.pg_norm <= 1e-9);

    // monotone descent over accepted iterations
    for w in sol.log.windows(2) {
        assert!(w[1].j <= w[0].j, "J rose from {} to {}", w[0].j, w[1].j);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = mesh.base.n_cells();
    for _ in 0..100 {
        let y = random_control(&mut rng, n, problem.a, problem.b);
        assert!(vi_pairing(&mesh.base, &sol.control, tr_p, problem.mu, &y.values) >= -1e-8);
    }

    // strict convexity: no admissible perturbation lowers J
    let j_bar = evaluate_j(
        &mesh.base,
        &sol.state[..nv],
        &sol.control,
        &problem.u_d,
        problem.mu,
    );
    assert!((j_bar - sol.j).abs() <= 1e-12 * j_bar.abs().max(1.0));
    for _ in 0..20 {
        let values = sol
            .control
            .values
            .iter()
            .map(|&z| (z + rng.gen_range(-0.1..0.1)).clamp(problem.a, problem.b))
            .collect();
        let z = ControlField::new(values, problem.a, problem.b).unwrap();
        let v = solve_state(&mesh, &system, &z, tight()).unwrap();
        let j = evaluate_j(&mesh.base, &v[..nv], &z, &problem.u_d, problem.mu);
        assert!(j >= j_bar - 1e-10, "{j} < {j_bar}");
    }
}

#[test]
fn unit_square_descent_with_active_bounds() {
    let base = make_unit_square(3);
    let mesh = build_tensor(base, 0.6, 2.0, None, 0.2).unwrap();
    let system = assemble_stiffness(&mesh).unwrap();
    let problem = OcpProblem {
        mu: 1e-2,
        a: -0.5,
        b: 0.5,
        u_d: Data::function(|p| (3.0 * p[0]).sin() - p[1]),
    };
    let sol = solve_ocp(&mesh, &system, &problem, &OptimizerConfig::default(), None).unwrap();
    assert!(sol.pg_norm <= 1e-5);
    assert!(sol.log.len() >= 2);
    for w in sol.log.windows(2) {
        assert!(w[1].j <= w[0].j);
    }
    assert!(sol.control.is_admissible());
}
