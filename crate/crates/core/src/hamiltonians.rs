//! Effective non-Hermitian Hamiltonians of the single-excitation sector.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::LatticeParams;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseMode {
    /// Propagation phase `omega d / c` evaluated at the given frequency.
    Exact(f64),
    /// Frequency-independent phase `omega0 d / c`.
    Markov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    OpenOpen,
    OpenXPeriodicY,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveHamiltonian {
    pub matrix: Array2<Complex64>,
    pub phase_mode: PhaseMode,
    pub boundary: Boundary,
}

impl EffectiveHamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Largest deviation between a matrix and its unconjugated transpose.
pub fn symmetry_defect(m: ArrayView2<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((m[[i, j]] - m[[j, i]]).norm());
        }
    }
    worst
}

/// `a ⊗ I_m + I_n ⊗ b` for square `a` (n×n) and `b` (m×m).
pub fn kron_sum(a: ArrayView2<Complex64>, b: ArrayView2<Complex64>) -> Array2<Complex64> {
    let (n, m) = (a.nrows(), b.nrows());
    let mut out = Array2::zeros((n * m, n * m));
    for j in 0..n {
        for jp in 0..n {
            let v = a[[j, jp]];
            if v != Complex64::new(0.0, 0.0) {
                for l in 0..m {
                    out[[j * m + l, jp * m + l]] += v;
                }
            }
        }
    }
    for j in 0..n {
        let base = j * m;
        for l in 0..m {
            for lp in 0..m {
                out[[base + l, base + lp]] += b[[l, lp]];
            }
        }
    }
    out
}

/// Coupling block `K(j, j') = -i gamma e^{i phi |j - j'|}`, diagonal included.
pub fn coupling_block(n: usize, gamma: f64, phi: f64) -> Array2<Complex64> {
    Array2::from_shape_fn((n, n), |(j, jp)| {
        let sep = j.abs_diff(jp) as f64;
        -I * gamma * Complex64::from_polar(1.0, phi * sep)
    })
}

pub fn build_h1d(n: usize, gamma: f64, phi: f64, omega0_term: f64) -> Result<EffectiveHamiltonian> {
    if n == 0 {
        return Err(Error::invalid("n", "chain needs at least one atom"));
    }
    if !(gamma >= 0.0) {
        return Err(Error::invalid("gamma", format!("must be non-negative, got {gamma}")));
    }
    let mut matrix = coupling_block(n, gamma, phi);
    for j in 0..n {
        matrix[[j, j]] += omega0_term;
    }
    Ok(EffectiveHamiltonian { matrix, phase_mode: PhaseMode::Markov, boundary: Boundary::OpenOpen })
}

fn mode_phase(lattice: &LatticeParams, mode: PhaseMode) -> Result<f64> {
    match mode {
        PhaseMode::Markov => Ok(lattice.phi0()),
        PhaseMode::Exact(omega) => {
            if !(omega > 0.0) {
                return Err(Error::invalid("omega", format!("must be positive, got {omega}")));
            }
            Ok(lattice.phi(omega))
        }
    }
}

/// `H = omega0 I + K_x ⊗ I_y + I_x ⊗ K_y` on the open lattice.
pub fn build_heff_2d(lattice: &LatticeParams, phase_mode: PhaseMode) -> Result<EffectiveHamiltonian> {
    let phi = mode_phase(lattice, phase_mode)?;
    let kx = coupling_block(lattice.n_x, lattice.gamma_x(), phi);
    let ky = coupling_block(lattice.n_y, lattice.gamma_y(), phi);
    let mut matrix = kron_sum(kx.view(), ky.view());
    for i in 0..matrix.nrows() {
        matrix[[i, i]] += lattice.omega0;
    }
    Ok(EffectiveHamiltonian { matrix, phase_mode, boundary: Boundary::OpenOpen })
}

/// Quantized transverse momenta `2 pi n / (n_y d)`, `n = 1..=n_y`, folded into `(-pi/d, pi/d]`.
pub fn ribbon_momenta(n_y: usize, d: f64) -> Vec<f64> {
    let bz = 2.0 * PI / d;
    (1..=n_y)
        .map(|n| {
            let k = bz * n as f64 / n_y as f64;
            if k > PI / d + 1e-12 * bz { k - bz } else { k }
        })
        .collect()
}

/// Open along x, periodic along y with momentum-sum couplings regularized by `i epsilon`.
pub fn build_heff_ribbon(lattice: &LatticeParams, omega: f64, epsilon: f64) -> Result<EffectiveHamiltonian> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon", format!("must be positive, got {epsilon}")));
    }
    let phi = mode_phase(lattice, PhaseMode::Exact(omega))?;
    let kappa = omega / lattice.c;
    let ly = lattice.n_y as f64 * lattice.d;
    let momenta = ribbon_momenta(lattice.n_y, lattice.d);
    let mut denominators = Vec::with_capacity(momenta.len());
    for (n, k) in momenta.iter().enumerate() {
        let den = kappa.abs() - k.abs();
        if den.abs() < epsilon / 10.0 {
            return Err(Error::NearSingularMomentum { mode: n + 1, denominator: den });
        }
        denominators.push(Complex64::new(den, epsilon));
    }
    let pref = lattice.gamma_y() / ly;
    let ry = Array2::from_shape_fn((lattice.n_y, lattice.n_y), |(l, lp)| {
        let dy = (l as f64 - lp as f64) * lattice.d;
        momenta
            .iter()
            .zip(&denominators)
            .map(|(k, den)| Complex64::from_polar(1.0, k * dy) / den)
            .sum::<Complex64>()
            * pref
    });
    let kx = coupling_block(lattice.n_x, lattice.gamma_x(), phi);
    let mut matrix = kron_sum(kx.view(), ry.view());
    for i in 0..matrix.nrows() {
        matrix[[i, i]] += lattice.omega0;
    }
    Ok(EffectiveHamiltonian {
        matrix,
        phase_mode: PhaseMode::Exact(omega),
        boundary: Boundary::OpenXPeriodicY,
    })
}

/// Onsite and hopping constants of the tridiagonal inverse of a coupling block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseChainCoefficients {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub phi: f64,
    pub gamma: f64,
}

pub fn inverse_chain_coefficients(gamma: f64, phi: f64) -> Result<InverseChainCoefficients> {
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma", format!("must be positive, got {gamma}")));
    }
    let s = phi.sin();
    if s.abs() < 1e-12 {
        return Err(Error::SingularPhase { phi });
    }
    let cot = phi.cos() / s;
    Ok(InverseChainCoefficients {
        a: -(Complex64::new(cot, -1.0)) / (2.0 * gamma),
        b: Complex64::new(-cot / gamma, 0.0),
        c: Complex64::new(1.0 / (2.0 * gamma * s), 0.0),
        phi,
        gamma,
    })
}

/// Tridiagonal chain: hopping `C`, bulk onsite `B`, end onsite `A`.
pub fn build_inverse_h1d(n: usize, coeffs: &InverseChainCoefficients) -> Result<Array2<Complex64>> {
    if n < 2 {
        return Err(Error::invalid("n", "inverse chain needs n >= 2"));
    }
    let mut m = Array2::zeros((n, n));
    for j in 0..n {
        m[[j, j]] = if j == 0 || j == n - 1 { coeffs.a } else { coeffs.b };
        if j + 1 < n {
            m[[j, j + 1]] = coeffs.c;
            m[[j + 1, j]] = coeffs.c;
        }
    }
    Ok(m)
}

/// Square-lattice inverse Hamiltonian as the Kronecker sum of two inverse chains.
pub fn build_inverse_h2d(n: usize, coeffs: &InverseChainCoefficients) -> Result<Array2<Complex64>> {
    let h = build_inverse_h1d(n, coeffs)?;
    Ok(kron_sum(h.view(), h.view()))
}
