//! Effective nuclear spin Hamiltonian `H = B·M·I + I·Q·I` and its hyperfine eigenstates.
//!
//! Units: g in kHz/mT, D and E in MHz, B in mT, energies in MHz.
//! Euler angles follow the active ZYZ convention, `R = Rz(α)·Ry(β)·Rz(γ)`.

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

const C0: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl EulerAngles {
    pub const IDENTITY: EulerAngles = EulerAngles {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
    };

    pub fn from_degrees(alpha: f64, beta: f64, gamma: f64) -> Self {
        EulerAngles {
            alpha: alpha.to_radians(),
            beta: beta.to_radians(),
            gamma: gamma.to_radians(),
        }
    }

    pub fn to_degrees(self) -> [f64; 3] {
        [
            self.alpha.to_degrees(),
            self.beta.to_degrees(),
            self.gamma.to_degrees(),
        ]
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rz(self.alpha) * ry(self.beta) * rz(self.gamma)
    }
}

fn rz(t: f64) -> Matrix3<f64> {
    let (s, c) = t.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn ry(t: f64) -> Matrix3<f64> {
    let (s, c) = t.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinParams {
    pub nuclear_spin: f64,
    /// kHz/mT
    pub g_principal: [f64; 3],
    pub zeeman_euler: EulerAngles,
    /// MHz
    pub d_mhz: f64,
    /// MHz
    pub e_mhz: f64,
    pub quad_euler: EulerAngles,
    /// Extra rotation applied to both tensors for each orientation class.
    pub orientation_transforms: [EulerAngles; 4],
}

/// Pr:YSO site 1 Euler angles in degrees, (alpha, beta, gamma).
pub const PR_YSO_ZEEMAN_EULER_DEG: [f64; 3] = [-99.7, 55.7, -40.1];
pub const PR_YSO_QUAD_EULER_DEG: [f64; 3] = [-94.5, 52.5, -31.2];
pub const PR_YSO_ORIENTATION_EULER_DEG: [[f64; 3]; 4] =
    [[0.0; 3], [180.0, 0.0, 0.0], [0.0; 3], [180.0, 0.0, 0.0]];

impl SpinParams {
    /// Pr3+ site 1 in Y2SiO5, ground state, from Raman heterodyne measurements.
    ///
    /// Orientation classes 0 and 2 are related by inversion and share the
    /// tensors; classes 1 and 3 are their images under the C2 rotation about b.
    pub fn pr_yso_site1() -> Self {
        let deg = |a: [f64; 3]| EulerAngles::from_degrees(a[0], a[1], a[2]);
        SpinParams {
            nuclear_spin: 2.5,
            g_principal: [28.6, 30.5, 115.6],
            zeeman_euler: deg(PR_YSO_ZEEMAN_EULER_DEG),
            d_mhz: 4.4441,
            e_mhz: 0.5631,
            quad_euler: deg(PR_YSO_QUAD_EULER_DEG),
            orientation_transforms: PR_YSO_ORIENTATION_EULER_DEG.map(deg),
        }
    }

    pub fn dimension(&self) -> usize {
        (2.0 * self.nuclear_spin).round() as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        check_spin(self.nuclear_spin)?;
        let finite = self.g_principal.iter().all(|g| g.is_finite())
            && self.d_mhz.is_finite()
            && self.e_mhz.is_finite();
        let angles = std::iter::once(&self.zeeman_euler)
            .chain(std::iter::once(&self.quad_euler))
            .chain(self.orientation_transforms.iter())
            .all(|e| e.alpha.is_finite() && e.beta.is_finite() && e.gamma.is_finite());
        if !finite || !angles {
            return Err(Error::invalid("spin parameters must be finite"));
        }
        Ok(())
    }
}

fn check_spin(i: f64) -> Result<()> {
    let twice = 2.0 * i;
    if !(i >= 0.5) || (twice - twice.round()).abs() > 1e-12 || twice > 99.0 {
        return Err(Error::invalid(format!(
            "nuclear spin {i} is not a positive half-integer"
        )));
    }
    Ok(())
}

/// `(Ix, Iy, Iz)` in the |I, m⟩ basis with m descending.
pub fn spin_operators(i: f64) -> Result<[CMatrix; 3]> {
    check_spin(i)?;
    let n = (2.0 * i).round() as usize + 1;
    let m = |k: usize| i - k as f64;
    let mut plus = CMatrix::zeros(n, n);
    for k in 1..n {
        // I+ |m_k⟩ = sqrt(I(I+1) - m_k(m_k+1)) |m_k + 1⟩, and m_{k-1} = m_k + 1
        let mk = m(k);
        plus[(k - 1, k)] = Complex64::new((i * (i + 1.0) - mk * (mk + 1.0)).sqrt(), 0.0);
    }
    let minus = plus.adjoint();
    let ix = (&plus + &minus) * Complex64::new(0.5, 0.0);
    let iy = (&plus - &minus) * Complex64::new(0.0, -0.5);
    let iz = CMatrix::from_fn(n, n, |r, c| {
        if r == c {
            Complex64::new(m(r), 0.0)
        } else {
            C0
        }
    });
    Ok([ix, iy, iz])
}

/// `(M, Q)` in the D1/D2/b frame for one orientation class. M in kHz/mT, Q in MHz.
pub fn build_tensors(
    params: &SpinParams,
    orientation_class: u8,
) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
    let class = orientation_class as usize;
    if class > 3 {
        return Err(Error::invalid(format!(
            "orientation class {orientation_class} outside 0..=3"
        )));
    }
    let [gx, gy, gz] = params.g_principal;
    let rm = params.zeeman_euler.rotation();
    let m = rm * Matrix3::from_diagonal(&Vector3::new(gx, gy, gz)) * rm.transpose();
    let (d, e) = (params.d_mhz, params.e_mhz);
    let rq = params.quad_euler.rotation();
    let q = rq
        * Matrix3::from_diagonal(&Vector3::new(e - d / 3.0, -e - d / 3.0, 2.0 * d / 3.0))
        * rq.transpose();
    let ro = params.orientation_transforms[class].rotation();
    let m = ro * m * ro.transpose();
    let q = ro * q * ro.transpose();
    // exact symmetry; the products above differ from their transposes by rounding only
    Ok(((m + m.transpose()) * 0.5, (q + q.transpose()) * 0.5))
}

/// Hamiltonian in MHz from tensors, spin operators and a field in mT.
pub fn hamiltonian_from_tensors(
    m: &Matrix3<f64>,
    q: &Matrix3<f64>,
    ops: &[CMatrix; 3],
    field_mt: &Vector3<f64>,
) -> CMatrix {
    let n = ops[0].nrows();
    let mut h = CMatrix::zeros(n, n);
    // B_p M_pq I_q, kHz -> MHz
    let bm = m.transpose() * field_mt / 1000.0;
    for qi in 0..3 {
        h += &ops[qi] * Complex64::new(bm[qi], 0.0);
    }
    for p in 0..3 {
        for qi in 0..3 {
            if q[(p, qi)] != 0.0 {
                h += (&ops[p] * &ops[qi]) * Complex64::new(q[(p, qi)], 0.0);
            }
        }
    }
    h
}

pub fn hamiltonian(
    params: &SpinParams,
    orientation_class: u8,
    field_mt: &Vector3<f64>,
) -> Result<CMatrix> {
    params.validate()?;
    let ops = spin_operators(params.nuclear_spin)?;
    let (m, q) = build_tensors(params, orientation_class)?;
    Ok(hamiltonian_from_tensors(&m, &q, &ops, field_mt))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Manifold {
    A,
    B,
    C,
}

impl Manifold {
    pub const ALL: [Manifold; 3] = [Manifold::A, Manifold::B, Manifold::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        ["a", "b", "c"][self as usize]
    }
}

/// One of the six hyperfine levels, in ascending-energy order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    PlusA,
    MinusA,
    PlusB,
    MinusB,
    PlusC,
    MinusC,
}

impl Level {
    pub const ALL: [Level; 6] = [
        Level::PlusA,
        Level::MinusA,
        Level::PlusB,
        Level::MinusB,
        Level::PlusC,
        Level::MinusC,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(k: usize) -> Option<Level> {
        Level::ALL.get(k).copied()
    }

    pub fn manifold(self) -> Manifold {
        Manifold::ALL[self as usize / 2]
    }

    pub fn name(self) -> &'static str {
        ["+a", "-a", "+b", "-b", "+c", "-c"][self as usize]
    }
}

/// Eigenstates of one ion at one field.
#[derive(Debug, Clone)]
pub struct HyperfineSystem {
    /// MHz, ascending.
    pub energies: Vec<f64>,
    /// Column k is the state of level k.
    pub states: CMatrix,
    pub field_mt: Vector3<f64>,
    /// `V† I_p V` for p = x, y, z, cached for matrix-element evaluation.
    pub spin_in_eigenbasis: [CMatrix; 3],
}

impl HyperfineSystem {
    pub fn dimension(&self) -> usize {
        self.energies.len()
    }

    pub fn energy(&self, level: Level) -> f64 {
        self.energies[level.index()]
    }

    pub fn state(&self, level: Level) -> nalgebra::DVector<Complex64> {
        self.states.column(level.index()).into_owned()
    }

    /// `⟨row|I_p|col⟩` in the eigenbasis.
    pub fn spin_element(&self, p: usize, row: usize, col: usize) -> Complex64 {
        self.spin_in_eigenbasis[p][(row, col)]
    }
}

/// Levels closer than this are treated as one degenerate doublet, MHz.
const DEGENERACY_TOL: f64 = 1e-7;
/// Label stability is guaranteed up to this field magnitude, mT.
pub const LABEL_CHECK_LIMIT_MT: f64 = 10.0;
const SWEEP_STEP_MT: f64 = 0.1;

/// Diagonalize, order, gauge-fix and label the hyperfine states.
///
/// Levels are paired by ascending energy: (0,1) is ±a, (2,3) is ±b, (4,5) is ±c.
/// Within an exactly degenerate pair the basis is the one that diagonalizes the
/// Zeeman operator projected along the field (along b when B = 0), which is the
/// B → 0⁺ limit of the split states. Each state's largest component is made
/// real and positive.
pub fn eigensystem(
    params: &SpinParams,
    orientation_class: u8,
    field_mt: &Vector3<f64>,
) -> Result<HyperfineSystem> {
    params.validate()?;
    if !field_mt.iter().all(|x| x.is_finite()) {
        return Err(Error::invalid("magnetic field must be finite"));
    }
    let ops = spin_operators(params.nuclear_spin)?;
    let (m, q) = build_tensors(params, orientation_class)?;
    let sys = solve(&m, &q, &ops, field_mt)?;
    if sys.energies.len() == 6 {
        check_labels(&m, &q, &ops, field_mt)?;
    }
    Ok(sys)
}

/// As [`eigensystem`] but from explicit tensors, skipping the label check.
pub fn eigensystem_from_tensors(
    m: &Matrix3<f64>,
    q: &Matrix3<f64>,
    ops: &[CMatrix; 3],
    field_mt: &Vector3<f64>,
) -> Result<HyperfineSystem> {
    solve(m, q, ops, field_mt)
}

fn diagonalize(h: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = h.nrows();
    let eig = h
        .clone()
        .try_symmetric_eigen(1e-15, 10_000)
        .ok_or_else(|| {
            log::error!("eigensolver failed on Hamiltonian {h}");
            Error::EigenNonConvergence(format!("{h}"))
        })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let states = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((energies, states))
}

fn solve(
    m: &Matrix3<f64>,
    q: &Matrix3<f64>,
    ops: &[CMatrix; 3],
    field_mt: &Vector3<f64>,
) -> Result<HyperfineSystem> {
    let h = hamiltonian_from_tensors(m, q, ops, field_mt);
    let n = h.nrows();
    let (mut energies, mut states) = diagonalize(&h)?;

    let dir = if field_mt.norm() > 0.0 {
        field_mt.normalize()
    } else {
        Vector3::z()
    };
    let md = m.transpose() * dir;
    let zeeman = &ops[0] * Complex64::new(md[0], 0.0)
        + &ops[1] * Complex64::new(md[1], 0.0)
        + &ops[2] * Complex64::new(md[2], 0.0);

    let mut k = 0;
    while k + 1 < n {
        if energies[k + 1] - energies[k] < DEGENERACY_TOL {
            let v = states.columns(k, 2).into_owned();
            let proj = v.adjoint() * &zeeman * &v;
            let (w, u) = diagonalize(&proj)?;
            let rotated = &v * &u;
            let mut cols = [
                rotated.column(0).into_owned(),
                rotated.column(1).into_owned(),
            ];
            for c in cols.iter_mut() {
                fix_gauge(c);
            }
            let swap = if (w[1] - w[0]).abs() > 1e-12 * (w[0].abs() + w[1].abs()).max(1e-300) {
                false
            } else {
                dominant_index(&cols[0]) > dominant_index(&cols[1])
            };
            if swap {
                cols.swap(0, 1);
            }
            states.set_column(k, &cols[0]);
            states.set_column(k + 1, &cols[1]);
            let mean = 0.5 * (energies[k] + energies[k + 1]);
            energies[k] = mean;
            energies[k + 1] = mean;
            k += 2;
        } else {
            let mut c = states.column(k).into_owned();
            fix_gauge(&mut c);
            states.set_column(k, &c);
            k += 1;
        }
    }
    if k < n {
        let mut c = states.column(k).into_owned();
        fix_gauge(&mut c);
        states.set_column(k, &c);
    }

    let vh = states.adjoint();
    let spin_in_eigenbasis = [0, 1, 2].map(|p| &vh * &ops[p] * &states);
    Ok(HyperfineSystem {
        energies,
        states,
        field_mt: *field_mt,
        spin_in_eigenbasis,
    })
}

/// Index of the largest-magnitude component; earliest index wins near-ties.
fn dominant_index(v: &nalgebra::DVector<Complex64>) -> usize {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    v.iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-10))
        .unwrap_or(0)
}

fn fix_gauge(v: &mut nalgebra::DVector<Complex64>) {
    let k = dominant_index(v);
    let z = v[k];
    if z.norm() > 0.0 {
        let phase = z.conj() / z.norm();
        v.iter_mut().for_each(|c| *c *= phase);
        v[k] = Complex64::new(v[k].norm(), 0.0);
    }
}

/// Raise [`Error::LabelCrossing`] if the ascending-energy pairing at this field
/// differs from the pairing obtained by following the zero-field doublets
/// continuously along the straight path from B = 0.
fn check_labels(
    m: &Matrix3<f64>,
    q: &Matrix3<f64>,
    ops: &[CMatrix; 3],
    field_mt: &Vector3<f64>,
) -> Result<()> {
    let b = field_mt.norm();
    if b == 0.0 {
        return Ok(());
    }
    let (e0, mut prev) = diagonalize(&hamiltonian_from_tensors(m, q, ops, &Vector3::zeros()))?;
    let n = e0.len();
    let gaps = (0..n / 2 - 1)
        .map(|k| e0[2 * k + 2] - e0[2 * k + 1])
        .fold(f64::INFINITY, f64::min);
    let spin = (n as f64 - 1.0) / 2.0;
    // Weyl: every level moves by at most |M^T B| I
    let shift = (m.transpose() * field_mt).norm() / 1000.0 * spin;
    if 2.0 * shift < gaps {
        return Ok(());
    }
    let steps = (b / SWEEP_STEP_MT).ceil().max(1.0) as usize;
    // pair membership of each tracked state
    let mut owner: Vec<usize> = (0..n).map(|k| k / 2).collect();
    for s in 1..=steps {
        let field = field_mt * (s as f64 / steps as f64);
        let (_, states) = diagonalize(&hamiltonian_from_tensors(m, q, ops, &field))?;
        let overlap = prev.adjoint() * &states;
        let mut next_owner = vec![0; n];
        for c in 0..n {
            let mut weight = vec![0.0; n / 2];
            for r in 0..n {
                weight[owner[r]] += overlap[(r, c)].norm_sqr();
            }
            next_owner[c] = (0..n / 2)
                .max_by(|&a, &b| weight[a].total_cmp(&weight[b]))
                .unwrap();
        }
        owner = next_owner;
        prev = states;
    }
    let crossed = (0..n).any(|k| owner[k] != k / 2);
    if crossed && b <= LABEL_CHECK_LIMIT_MT {
        return Err(Error::LabelCrossing {
            field_mt: [field_mt.x, field_mt.y, field_mt.z],
        });
    }
    if crossed {
        log::warn!("hyperfine pairs interleave at |B| = {b} mT; labels follow energy order");
    }
    Ok(())
}
