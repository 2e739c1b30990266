//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use fracocp::base_mesh::{BaseGrid, BaseMesh};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_41,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Gauss-Kronrod 7-15 on `(a, b)`: (Kronrod value, |Kronrod - Gauss|, integral of |f|).
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    for i in 0..7 {
        let dx = h * XGK[i];
        let (f1, f2) = (f(c - dx), f(c + dx));
        k += WGK[i] * (f1 + f2);
        abs += WGK[i] * (f1.abs() + f2.abs());
        if i % 2 == 1 {
            g += WG[i / 2] * (f1 + f2);
        }
    }
    (k * h, ((k - g) * h).abs(), abs * h.abs())
}

/// Adaptive Gauss-Kronrod quadrature with absolute target `tol`; handles
/// integrable endpoint singularities by bisection toward them.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
        let (v, err, _) = gk15(f, a, b);
        if err <= tol || depth > 200 || (b - a).abs() < 1e-300 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    rec(f, a, b, tol, 0)
}

/// `integrate` with a tolerance relative to the integral of `|f|`.
pub fn integrate_rel(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel: f64) -> f64 {
    let (_, _, abs) = gk15(f, a, b);
    integrate(f, a, b, rel * abs.max(f64::MIN_POSITIVE))
}

/// `Gamma(x)` for `x` in `(0, 2)` from its defining integral.
pub fn gamma_by_quadrature(x: f64) -> f64 {
    let f = |t: f64| t.powf(x - 1.0) * (-t).exp();
    integrate_rel(&f, 0.0, 1.0, 1e-15) + integrate_rel(&f, 1.0, 60.0, 1e-15)
}

pub fn d_s_oracle(s: f64) -> f64 {
    let alpha = 1.0 - 2.0 * s;
    2f64.powf(alpha) * gamma_by_quadrature(1.0 - s) / gamma_by_quadrature(s)
}

/// Lagrange basis on `[0, 1]` with equispaced nodes, and its derivative.
pub fn lagrange(degree: usize, a: usize, t: f64) -> (f64, f64) {
    let nodes: Vec<f64> = (0..=degree).map(|i| i as f64 / degree as f64).collect();
    let mut val = 1.0;
    for (m, &tm) in nodes.iter().enumerate() {
        if m != a {
            val *= (t - tm) / (nodes[a] - tm);
        }
    }
    let mut der = 0.0;
    for (l, &tl) in nodes.iter().enumerate() {
        if l == a {
            continue;
        }
        let mut term = 1.0 / (nodes[a] - tl);
        for (m, &tm) in nodes.iter().enumerate() {
            if m != a && m != l {
                term *= (t - tm) / (nodes[a] - tm);
            }
        }
        der += term;
    }
    (val, der)
}

/// `(int y^alpha phi_a' psi_b', int y^alpha phi_a psi_b)` over `(y0, y1)` by
/// adaptive quadrature.
pub fn weighted_pair(
    alpha: f64,
    y0: f64,
    y1: f64,
    p: usize,
    a: usize,
    q: usize,
    b: usize,
) -> (f64, f64) {
    let h = y1 - y0;
    let stiff = |y: f64| {
        let t = (y - y0) / h;
        y.powf(alpha) * lagrange(p, a, t).1 * lagrange(q, b, t).1 / (h * h)
    };
    let mass = |y: f64| {
        let t = (y - y0) / h;
        y.powf(alpha) * lagrange(p, a, t).0 * lagrange(q, b, t).0
    };
    (
        integrate_rel(&stiff, y0, y1, 1e-14),
        integrate_rel(&mass, y0, y1, 1e-14),
    )
}

/// Barycentric coordinates of `p` in triangle `t` of `mesh`.
pub fn barycentric(mesh: &BaseMesh, t: usize, p: [f64; 2]) -> [f64; 3] {
    let v = mesh.cell(t);
    let (a, b, c) = (mesh.point(v[0]), mesh.point(v[1]), mesh.point(v[2]));
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Triangle of `mesh` containing `p` (first match, with a small tolerance).
pub fn locate(mesh: &BaseMesh, p: [f64; 2]) -> Option<usize> {
    (0..mesh.n_cells()).find(|&t| barycentric(mesh, t, p).iter().all(|&l| l >= -1e-12))
}

pub fn barycenter<G: BaseGrid>(mesh: &G, c: usize) -> [f64; 2] {
    let v = mesh.cell(c);
    let mut x = [0.0; 2];
    for &i in v {
        let p = mesh.point(i);
        x[0] += p[0] / v.len() as f64;
        x[1] += p[1] / v.len() as f64;
    }
    x
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
