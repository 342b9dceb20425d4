//! Resolvent solves and four-direction output amplitudes.

use ndarray::{Array1, ArrayView2};
use ndarray_linalg::{FactorizeInto, ReciprocalConditionNum, Solve};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hamiltonians::{build_heff_2d, EffectiveHamiltonian, PhaseMode};
use crate::model::{Direction, LatticeParams, PhotonInput};

/// Condition-number ceiling above which a resolvent solve is treated as a pole.
pub const POLE_CONDITION: f64 = 1e14;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Solves `(omega I - H) x = source` by LU factorization.
pub fn green_apply(h: &EffectiveHamiltonian, omega: f64, source: &Array1<Complex64>) -> Result<Array1<Complex64>> {
    resolvent_solve(h.matrix.view(), omega, source)
}

pub(crate) fn resolvent_solve(
    h: ArrayView2<Complex64>,
    omega: f64,
    source: &Array1<Complex64>,
) -> Result<Array1<Complex64>> {
    let n = h.nrows();
    if h.ncols() != n || source.len() != n {
        return Err(Error::invalid("source", format!("dimension mismatch: matrix {n}, source {}", source.len())));
    }
    let mut a = h.mapv(|z| -z);
    for i in 0..n {
        a[[i, i]] += omega;
    }
    let lu = a
        .factorize_into()
        .map_err(|_| Error::Pole { omega, condition: f64::INFINITY })?;
    let rcond = lu.rcond().map_err(|_| Error::Pole { omega, condition: f64::INFINITY })?;
    if !(rcond > 0.0) || 1.0 / rcond > POLE_CONDITION {
        return Err(Error::Pole { omega, condition: 1.0 / rcond });
    }
    Ok(lu.solve(source)?)
}

/// Output amplitudes on the four port families.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringAmplitudes {
    pub chi_x: Array1<Complex64>,
    pub chi_xbar: Array1<Complex64>,
    pub chi_y: Array1<Complex64>,
    pub chi_ybar: Array1<Complex64>,
    pub omega: f64,
}

impl ScatteringAmplitudes {
    pub fn get(&self, direction: Direction) -> &Array1<Complex64> {
        match direction {
            Direction::ForwardX => &self.chi_x,
            Direction::BackwardX => &self.chi_xbar,
            Direction::UpwardY => &self.chi_y,
            Direction::DownwardY => &self.chi_ybar,
        }
    }

    /// `|chi|^2` per port of one direction.
    pub fn probabilities(&self, direction: Direction) -> Array1<f64> {
        self.get(direction).mapv(|z| z.norm_sqr())
    }
}

/// Atomic excitation amplitudes, scaled by `g_x / sqrt(2 pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationField {
    pub q: Array1<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortTotals {
    pub s_x: f64,
    pub s_xbar: f64,
    pub s_y: f64,
    pub s_ybar: f64,
}

impl PortTotals {
    pub fn total(&self) -> f64 {
        self.s_x + self.s_xbar + self.s_y + self.s_ybar
    }

    pub fn get(&self, direction: Direction) -> f64 {
        match direction {
            Direction::ForwardX => self.s_x,
            Direction::BackwardX => self.s_xbar,
            Direction::UpwardY => self.s_y,
            Direction::DownwardY => self.s_ybar,
        }
    }
}

pub fn port_totals(amps: &ScatteringAmplitudes) -> PortTotals {
    let s = |v: &Array1<Complex64>| v.iter().map(|z| z.norm_sqr()).sum::<f64>();
    PortTotals {
        s_x: s(&amps.chi_x),
        s_xbar: s(&amps.chi_xbar),
        s_y: s(&amps.chi_y),
        s_ybar: s(&amps.chi_ybar),
    }
}

/// Scattering with exact (frequency-dependent) propagation phases.
pub fn scatter(lattice: &LatticeParams, input: &PhotonInput) -> Result<(ScatteringAmplitudes, ExcitationField)> {
    scatter_with(lattice, input, PhaseMode::Exact(input.omega))
}

/// Scattering through a Hamiltonian built in the given phase mode. The output
/// contractions always use `kappa = omega / c`.
pub fn scatter_with(
    lattice: &LatticeParams,
    input: &PhotonInput,
    mode: PhaseMode,
) -> Result<(ScatteringAmplitudes, ExcitationField)> {
    let h = build_heff_2d(lattice, mode)?;
    scatter_through(lattice, input, &h)
}

pub fn scatter_through(
    lattice: &LatticeParams,
    input: &PhotonInput,
    h: &EffectiveHamiltonian,
) -> Result<(ScatteringAmplitudes, ExcitationField)> {
    let (nx, ny) = (lattice.n_x, lattice.n_y);
    if input.f.len() != ny {
        return Err(Error::invalid("f", format!("expected {ny} port amplitudes, got {}", input.f.len())));
    }
    if h.dim() != nx * ny {
        return Err(Error::invalid("h", "Hamiltonian dimension does not match the lattice"));
    }
    let kappa = input.kappa;
    let ex: Vec<Complex64> = (1..=nx).map(|j| Complex64::from_polar(1.0, kappa * lattice.x(j))).collect();
    let ey: Vec<Complex64> = (1..=ny).map(|l| Complex64::from_polar(1.0, kappa * lattice.y(l))).collect();

    let source = Array1::from_shape_fn(nx * ny, |i| ex[i / ny] * input.f[i % ny]);
    let x = green_apply(h, input.omega, &source)?;

    let gx = lattice.gamma_x();
    let gxy = lattice.g_x * lattice.g_y / lattice.c;
    let mut chi_x = input.f.clone();
    let mut chi_xbar = Array1::zeros(ny);
    let mut chi_y = Array1::zeros(nx);
    let mut chi_ybar = Array1::zeros(nx);
    for j in 0..nx {
        for l in 0..ny {
            let v = x[j * ny + l];
            chi_x[l] += -I * gx * ex[j].conj() * v;
            chi_xbar[l] += -I * gx * ex[j] * v;
            chi_y[j] += -I * gxy * ey[l].conj() * v;
            chi_ybar[j] += -I * gxy * ey[l] * v;
        }
    }
    let pref = lattice.g_x / (2.0 * std::f64::consts::PI).sqrt();
    let amps = ScatteringAmplitudes { chi_x, chi_xbar, chi_y, chi_ybar, omega: input.omega };
    Ok((amps, ExcitationField { q: x.mapv(|z| z * pref) }))
}
