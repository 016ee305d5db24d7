//! Reference implementations used only by tests.
#![allow(dead_code)]

use flipflop_core::spinham::{CMatrix, HyperfineSystem};
use nalgebra::Matrix3;
use num_complex::Complex64;

/// Kronecker product of two square matrices.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (n, m) = (a.nrows(), b.nrows());
    CMatrix::from_fn(n * m, n * m, |r, c| a[(r / m, c / m)] * b[(r % m, c % m)])
}

/// `Σ_pq C_pq I_p ⊗ I_q` on the full product space.
pub fn dipolar_operator(c: &Matrix3<f64>, ops: &[CMatrix; 3]) -> CMatrix {
    let n = ops[0].nrows();
    let mut h = CMatrix::zeros(n * n, n * n);
    for p in 0..3 {
        for q in 0..3 {
            h += kron(&ops[p], &ops[q]) * Complex64::new(c[(p, q)], 0.0);
        }
    }
    h
}

/// `⟨y_i x_j|H|x_i y_j⟩` from an explicit product-basis transformation.
pub fn product_space_element(
    h: &CMatrix,
    sys_i: &HyperfineSystem,
    sys_j: &HyperfineSystem,
    x: usize,
    y: usize,
) -> Complex64 {
    let u = kron(&sys_i.states, &sys_j.states);
    let hu = u.adjoint() * h * &u;
    let n = sys_i.dimension();
    hu[(y * n + x, x * n + y)]
}

/// Read C back from the operator via `Tr[(I_p ⊗ I_q) H] = C_pq Tr(I_p²) Tr(I_q²)`.
pub fn coupling_from_operator(h: &CMatrix, ops: &[CMatrix; 3]) -> Matrix3<f64> {
    let norm = (&ops[2] * &ops[2]).trace().re;
    Matrix3::from_fn(|p, q| (kron(&ops[p], &ops[q]) * h).trace().re / (norm * norm))
}

/// `dN/dt` of the three-level rate equations.
pub fn rate_rhs(r: [f64; 3], n: [f64; 3]) -> [f64; 3] {
    let [ab, bc, ac] = r;
    let [na, nb, nc] = n;
    [
        ab * nb + ac * nc - (ab + ac) * na,
        ab * na + bc * nc - (ab + bc) * nb,
        ac * na + bc * nb - (ac + bc) * nc,
    ]
}

/// Dormand–Prince 5(4) integration of the rate equations, returning the state at each requested time.
pub fn integrate_rates(
    r: [f64; 3],
    n0: [f64; 3],
    times: &[f64],
    rtol: f64,
    atol: f64,
) -> Vec<[f64; 3]> {
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut y = n0;
    let kmax = r[0] + r[1] + r[2];
    let mut h = if kmax > 0.0 { 0.01 / kmax } else { 1.0 };
    for &target in times {
        while t < target {
            let step = h.min(target - t);
            let mut k = [[0.0; 3]; 7];
            for s in 0..7 {
                let mut ys = y;
                for (j, kj) in k.iter().enumerate().take(s) {
                    for d in 0..3 {
                        ys[d] += step * A[s][j] * kj[d];
                    }
                }
                k[s] = rate_rhs(r, ys);
            }
            let mut y5 = y;
            let mut err: f64 = 0.0;
            for d in 0..3 {
                let (mut s5, mut s4) = (0.0, 0.0);
                for s in 0..7 {
                    s5 += B5[s] * k[s][d];
                    s4 += B4[s] * k[s][d];
                }
                y5[d] += step * s5;
                let scale = atol + rtol * y[d].abs().max(y5[d].abs());
                err = err.max((step * (s5 - s4)).abs() / scale);
            }
            if err <= 1.0 {
                t += step;
                y = y5;
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = step * factor;
        }
        out.push(y);
    }
    out
}

/// Log-uniform sample in `[lo, hi]` from a uniform `u`.
pub fn log_uniform(u: f64, lo: f64, hi: f64) -> f64 {
    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
}
