//! Lattice geometry, port conventions and injected photon states.

use ndarray::Array1;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Geometry and coupling constants of the crossed-waveguide array.
///
/// Atom `(j, l)` sits at `x_j = j d`, `y_l = l d` with 1-based `j` and `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeParams {
    pub n_x: usize,
    pub n_y: usize,
    pub d: f64,
    pub c: f64,
    pub omega0: f64,
    pub g_x: f64,
    pub g_y: f64,
}

impl LatticeParams {
    pub fn new(n_x: usize, n_y: usize, d: f64, c: f64, omega0: f64, g_x: f64, g_y: f64) -> Result<Self> {
        let p = LatticeParams { n_x, n_y, d, c, omega0, g_x, g_y };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 {
            return Err(Error::invalid("n_x", "must be at least 1"));
        }
        if self.n_y == 0 {
            return Err(Error::invalid("n_y", "must be at least 1"));
        }
        for (name, v) in [("d", self.d), ("c", self.c), ("omega0", self.omega0)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [("g_x", self.g_x), ("g_y", self.g_y)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        if self.g_x == 0.0 && self.g_y == 0.0 {
            return Err(Error::invalid("g_x", "g_x and g_y cannot both vanish"));
        }
        Ok(())
    }

    /// Same lattice with a different number of vertical waveguides.
    pub fn with_n_x(&self, n_x: usize) -> Self {
        LatticeParams { n_x, ..self.clone() }
    }

    pub fn gamma_x(&self) -> f64 {
        self.g_x * self.g_x / self.c
    }

    pub fn gamma_y(&self) -> f64 {
        self.g_y * self.g_y / self.c
    }

    /// Markov phase per spacing, `omega0 d / c`.
    pub fn phi0(&self) -> f64 {
        self.omega0 * self.d / self.c
    }

    /// Propagation phase per spacing at frequency `omega`.
    pub fn phi(&self, omega: f64) -> f64 {
        omega * self.d / self.c
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.d
    }

    pub fn y(&self, l: usize) -> f64 {
        l as f64 * self.d
    }

    pub fn sites(&self) -> usize {
        self.n_x * self.n_y
    }

    /// Flattened 0-based site index of atom `(j, l)` given 1-based indices.
    pub fn site(&self, j: usize, l: usize) -> usize {
        (j - 1) * self.n_y + (l - 1)
    }

    /// Center of the horizontal port set, `(n_y + 1) / 2`.
    pub fn center_y(&self) -> f64 {
        (self.n_y as f64 + 1.0) / 2.0
    }

    /// Mirror partner of horizontal port `l`.
    pub fn mirror_port(&self, l: usize) -> usize {
        self.n_y + 1 - l
    }

    /// Absolute frequency for a detuning given in units of `gamma_x`.
    pub fn omega_from_detuning(&self, detuning: f64) -> f64 {
        self.omega0 + detuning * self.gamma_x()
    }

    pub fn detuning(&self, omega: f64) -> f64 {
        (omega - self.omega0) / self.gamma_x()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    ForwardX,
    BackwardX,
    UpwardY,
    DownwardY,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::ForwardX,
        Direction::BackwardX,
        Direction::UpwardY,
        Direction::DownwardY,
    ];

    pub fn is_horizontal(self) -> bool {
        matches!(self, Direction::ForwardX | Direction::BackwardX)
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::ForwardX => "x",
            Direction::BackwardX => "xbar",
            Direction::UpwardY => "y",
            Direction::DownwardY => "ybar",
        }
    }
}

/// An output port: horizontal directions are indexed by row `1..=n_y`,
/// vertical directions by column `1..=n_x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PortLabel {
    pub direction: Direction,
    pub index: usize,
}

impl PortLabel {
    pub fn new(lattice: &LatticeParams, direction: Direction, index: usize) -> Result<Self> {
        let max = if direction.is_horizontal() { lattice.n_y } else { lattice.n_x };
        if index == 0 || index > max {
            return Err(Error::PortOutOfRange { index, max });
        }
        Ok(PortLabel { direction, index })
    }
}

impl std::fmt::Display for PortLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}[{}]", self.direction.label(), self.index)
    }
}

/// Injected single photon: frequency plus amplitude on each horizontal input port.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonInput {
    pub omega: f64,
    pub kappa: f64,
    pub f: Array1<Complex64>,
    pub centroid: f64,
}

impl PhotonInput {
    /// Builds an input from arbitrary port amplitudes, renormalizing them to unit norm.
    pub fn from_amplitudes(lattice: &LatticeParams, omega: f64, f: Array1<Complex64>) -> Result<Self> {
        check_omega(omega)?;
        if f.len() != lattice.n_y {
            return Err(Error::invalid("f", format!("expected {} amplitudes, got {}", lattice.n_y, f.len())));
        }
        let norm = f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::invalid("f", "amplitudes must have finite nonzero norm"));
        }
        let f = f.mapv(|z| z / norm);
        let centroid = f
            .iter()
            .enumerate()
            .map(|(i, z)| (i + 1) as f64 * z.norm_sqr())
            .sum();
        Ok(PhotonInput { omega, kappa: omega / lattice.c, f, centroid })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.f.iter().map(|z| z.norm_sqr()).sum()
    }
}

fn check_omega(omega: f64) -> Result<()> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::invalid("omega", format!("must be positive, got {omega}")));
    }
    Ok(())
}

/// Unit amplitude on horizontal port `l_in`.
pub fn single_port_input(lattice: &LatticeParams, omega: f64, l_in: usize) -> Result<PhotonInput> {
    check_omega(omega)?;
    if l_in == 0 || l_in > lattice.n_y {
        return Err(Error::PortOutOfRange { index: l_in, max: lattice.n_y });
    }
    let mut f = Array1::zeros(lattice.n_y);
    f[l_in - 1] = Complex64::new(1.0, 0.0);
    Ok(PhotonInput { omega, kappa: omega / lattice.c, f, centroid: l_in as f64 })
}

/// Gaussian wavepacket over the ports,
/// `f_l ∝ exp(-(l - center)^2 / (4 sigma^2) + i k_y (l - center))`,
/// normalized on the discrete port set.
pub fn gaussian_input(
    lattice: &LatticeParams,
    omega: f64,
    sigma: f64,
    k_y: f64,
    center: f64,
) -> Result<PhotonInput> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid("sigma", format!("must be positive, got {sigma}")));
    }
    if !k_y.is_finite() || !center.is_finite() {
        return Err(Error::invalid("k_y", "k_y and center must be finite"));
    }
    let f = Array1::from_iter((1..=lattice.n_y).map(|l| {
        let u = l as f64 - center;
        Complex64::from_polar((-u * u / (4.0 * sigma * sigma)).exp(), k_y * u)
    }));
    PhotonInput::from_amplitudes(lattice, omega, f)
}
