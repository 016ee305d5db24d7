//! Magnetic dipole-dipole coupling between two effective nuclear spins.
//!
//! The moment of ion i is `μ_s = -h Σ_p M_sp I_p` with M in Hz/T, and the
//! coupling is the point-dipole energy divided by h, so
//! `H_dd / h = Σ_pq C_pq I_p^i I_q^j` with C in Hz.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use crate::constants::{KHZ_PER_MT_TO_HZ_PER_T, MU0_OVER_4PI, NM_TO_M, PLANCK};
use crate::error::{Error, Result};
use crate::spinham::{HyperfineSystem, Level};

/// Which angular structure to use for C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CouplingModel {
    #[default]
    Dipolar,
    /// Drops the `3 (M r̂)(M r̂)` term so C depends on r only through `1/r³`.
    Isotropic,
}

/// `μ0 h / 4π / r³` for r in nm and tensors in Hz/T, in Hz·(T/Hz)².
fn prefactor(r_nm: f64) -> f64 {
    let r = r_nm * NM_TO_M;
    MU0_OVER_4PI * PLANCK / (r * r * r)
}

/// C in Hz from Zeeman tensors in kHz/mT and the displacement from i to j in nm.
pub fn coupling_tensor(
    m_i: &Matrix3<f64>,
    m_j: &Matrix3<f64>,
    r_ij_nm: &Vector3<f64>,
) -> Result<Matrix3<f64>> {
    coupling_tensor_with(m_i, m_j, r_ij_nm, CouplingModel::Dipolar)
}

pub fn coupling_tensor_with(
    m_i: &Matrix3<f64>,
    m_j: &Matrix3<f64>,
    r_ij_nm: &Vector3<f64>,
    model: CouplingModel,
) -> Result<Matrix3<f64>> {
    let r = r_ij_nm.norm();
    if r == 0.0 {
        return Err(Error::CoincidentIons);
    }
    if !r.is_finite() {
        return Err(Error::invalid("displacement must be finite"));
    }
    let gi = m_i * KHZ_PER_MT_TO_HZ_PER_T;
    let gj = m_j * KHZ_PER_MT_TO_HZ_PER_T;
    let mut c = gi.transpose() * gj;
    if model == CouplingModel::Dipolar {
        let n = r_ij_nm / r;
        let ui = gi.transpose() * n;
        let uj = gj.transpose() * n;
        c -= ui * uj.transpose() * 3.0;
    }
    Ok(c * prefactor(r))
}

/// Complex amplitude `⟨y_i ⊗ x_j| H_dd |x_i ⊗ y_j⟩` in Hz: ion i goes x → y while j goes y → x.
pub fn flipflop_amplitude(
    sys_i: &HyperfineSystem,
    sys_j: &HyperfineSystem,
    c: &Matrix3<f64>,
    x: usize,
    y: usize,
) -> Result<Complex64> {
    let n = sys_i.dimension();
    if sys_j.dimension() != n {
        return Err(Error::DimensionMismatch(n, sys_j.dimension()));
    }
    if x >= n || y >= n {
        return Err(Error::invalid(format!(
            "level index out of range for dimension {n}"
        )));
    }
    let mut sum = Complex64::new(0.0, 0.0);
    for p in 0..3 {
        let a = sys_i.spin_element(p, y, x);
        let mut inner = Complex64::new(0.0, 0.0);
        for q in 0..3 {
            inner += sys_j.spin_element(q, x, y) * c[(p, q)];
        }
        sum += a * inner;
    }
    Ok(sum)
}

/// Magnitude of the flip-flop element, Hz.
pub fn flipflop_element(
    sys_i: &HyperfineSystem,
    sys_j: &HyperfineSystem,
    c: &Matrix3<f64>,
    x: Level,
    y: Level,
) -> Result<f64> {
    if x.manifold() == y.manifold() {
        return Err(Error::invalid(format!(
            "{} -> {} stays within one hyperfine pair",
            x.name(),
            y.name()
        )));
    }
    Ok(flipflop_amplitude(sys_i, sys_j, c, x.index(), y.index())?.norm())
}

#[derive(Debug, Clone)]
pub struct PairCoupling {
    pub ids: (usize, usize),
    pub displacement: Vector3<f64>,
    pub coupling_tensor: Matrix3<f64>,
    /// `[x][y]` magnitude in Hz for the center going x → y; zero within a pair.
    pub matrix_elements: [[f64; 6]; 6],
}

impl PairCoupling {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ids: (usize, usize),
        displacement: Vector3<f64>,
        m_i: &Matrix3<f64>,
        m_j: &Matrix3<f64>,
        sys_i: &HyperfineSystem,
        sys_j: &HyperfineSystem,
        model: CouplingModel,
    ) -> Result<Self> {
        let c = coupling_tensor_with(m_i, m_j, &displacement, model)?;
        let mut matrix_elements = [[0.0; 6]; 6];
        for x in Level::ALL {
            for y in Level::ALL {
                if x.manifold() != y.manifold() {
                    matrix_elements[x.index()][y.index()] =
                        flipflop_element(sys_i, sys_j, &c, x, y)?;
                }
            }
        }
        Ok(PairCoupling {
            ids,
            displacement,
            coupling_tensor: c,
            matrix_elements,
        })
    }
}
