//! Gauss-Legendre rules and collapsed (Duffy) rules on simplices.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        // Newton on P_n from the Chebyshev-like initial guess.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((0.5 * (1.0 - x), 0.5 * w));
    }
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A quadrature point in barycentric coordinates; weights sum to one so that
/// `integral over K of f = |K| * sum(w * f)`.
#[derive(Clone, Copy, Debug)]
pub struct SimplexPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

/// Rule exact for polynomials of total degree `degree` on an interval (`dim = 1`)
/// or a triangle (`dim = 2`).
pub fn simplex_rule(dim: usize, degree: usize) -> Vec<SimplexPoint> {
    match dim {
        1 => gauss_legendre(degree / 2 + 1)
            .into_iter()
            .map(|(t, w)| SimplexPoint {
                bary: [1.0 - t, t, 0.0],
                weight: w,
            })
            .collect(),
        2 => triangle_rule(degree),
        _ => panic!("simplex rules only for dim 1 or 2"),
    }
}

/// Conical product rule on the reference triangle. The collapse `y = eta (1 - xi)`
/// adds one to the degree in `xi`.
pub fn triangle_rule(degree: usize) -> Vec<SimplexPoint> {
    let n_xi = (degree + 2).div_ceil(2).max(1);
    let n_eta = (degree + 1).div_ceil(2).max(1);
    let gx = gauss_legendre(n_xi);
    let ge = gauss_legendre(n_eta);
    let mut pts = Vec::with_capacity(n_xi * n_eta);
    for &(xi, wx) in &gx {
        for &(eta, we) in &ge {
            let x = xi;
            let y = eta * (1.0 - xi);
            // reference area is 1/2, so normalise by 2
            pts.push(SimplexPoint {
                bary: [1.0 - x - y, x, y],
                weight: 2.0 * wx * we * (1.0 - xi),
            });
        }
    }
    pts
}
