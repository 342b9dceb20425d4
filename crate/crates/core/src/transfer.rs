//! Transfer-matrix oracle for the 2D network and analytic 1D chain relations.

use ndarray::{Array1, Array2};
use ndarray_linalg::{FactorizeInto, ReciprocalConditionNum, Solve};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::green::ScatteringAmplitudes;
use crate::model::LatticeParams;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const D: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];

/// Phase-weighted coupling vectors of atom `(j, l)`; `f C = i/(2 c (omega0 - omega)) v wᵀ`.
///
/// Writing the couplings through `g_x, g_y` rather than `lambda = g_y / g_x`
/// keeps the `g_x = 0` lattice well defined.
fn coupling_vectors(lattice: &LatticeParams, kappa: f64, j: usize, l: usize, gx: f64) -> ([Complex64; 4], [Complex64; 4]) {
    let a = Complex64::from_polar(1.0, kappa * lattice.x(j));
    let b = Complex64::from_polar(1.0, kappa * lattice.y(l));
    let gy = lattice.g_y;
    let v = [a.conj() * gx, a * gx, b.conj() * gy, b * gy];
    let w = [a * gx, a.conj() * gx, b * gy, b.conj() * gy];
    (v, w)
}

/// The printed coupling matrix `C_{j,l}` (requires `g_x > 0`).
pub fn coupling_matrix(lattice: &LatticeParams, omega: f64, j: usize, l: usize) -> Result<Array2<Complex64>> {
    if lattice.g_x <= 0.0 {
        return Err(Error::invalid("g_x", "C is normalized by g_x and needs g_x > 0"));
    }
    let (v, w) = coupling_vectors(lattice, omega / lattice.c, j, l, lattice.g_x);
    let g2 = lattice.g_x * lattice.g_x;
    Ok(Array2::from_shape_fn((4, 4), |(r, k)| v[r] * w[k] / g2))
}

/// `M = (D + f C)^{-1} (D - f C)` mapping `(t, r, u, d)` before the atom to after it.
pub fn atom_transfer_matrix(lattice: &LatticeParams, omega: f64, j: usize, l: usize) -> Result<Array2<Complex64>> {
    if j == 0 || j > lattice.n_x || l == 0 || l > lattice.n_y {
        return Err(Error::invalid("j", format!("atom ({j}, {l}) outside the lattice")));
    }
    if omega == lattice.omega0 {
        return Err(Error::ResonanceSingularity);
    }
    let f = I * lattice.gamma_x() / (2.0 * (lattice.omega0 - omega));
    let c = coupling_matrix(lattice, omega, j, l)?;
    let mut a = c.mapv(|z| z * f);
    let mut b = c.mapv(|z| -z * f);
    for k in 0..4 {
        a[[k, k]] += D[k];
        b[[k, k]] += D[k];
    }
    let lu = a.factorize_into().map_err(|_| Error::ResonanceSingularity)?;
    let mut m = Array2::zeros((4, 4));
    for k in 0..4 {
        let col = lu.solve(&b.column(k).to_owned())?;
        m.column_mut(k).assign(&col);
    }
    Ok(m)
}

/// Boundary and interior coefficients of the network.
///
/// `t_h[[s, l]]`, `r_h[[s, l]]`: right/left-moving amplitudes on horizontal
/// waveguide `l` in segment `s` (segment `s` lies between atoms `s` and `s + 1`).
/// `t_v[[s, j]]`, `r_v[[s, j]]`: up/down-moving amplitudes on vertical waveguide `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferSolution {
    pub t_h: Array2<Complex64>,
    pub r_h: Array2<Complex64>,
    pub t_v: Array2<Complex64>,
    pub r_v: Array2<Complex64>,
    pub omega: f64,
}

impl TransferSolution {
    /// Outgoing boundary amplitudes arranged like the Green-function output.
    pub fn amplitudes(&self) -> ScatteringAmplitudes {
        let nx = self.t_h.nrows() - 1;
        let ny = self.t_v.nrows() - 1;
        ScatteringAmplitudes {
            chi_x: self.t_h.row(nx).to_owned(),
            chi_xbar: self.r_h.row(0).to_owned(),
            chi_y: self.t_v.row(ny).to_owned(),
            chi_ybar: self.r_v.row(0).to_owned(),
            omega: self.omega,
        }
    }

    pub fn total_output(&self) -> f64 {
        let a = self.amplitudes();
        [&a.chi_x, &a.chi_xbar, &a.chi_y, &a.chi_ybar]
            .iter()
            .map(|v| v.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }
}

/// Deliberate corruption of one atom's equations, used as a negative control
/// for solver comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyFault {
    pub j: usize,
    pub l: usize,
    /// Relative error injected into that atom's horizontal coupling.
    pub scale: f64,
}

pub fn solve_network(lattice: &LatticeParams, omega: f64, l_in: usize) -> Result<TransferSolution> {
    solve_network_with_fault(lattice, omega, l_in, None)
}

#[derive(Clone, Copy)]
enum Var {
    T,
    R,
    U,
    Dn,
}

/// Assembles the per-atom relations `(D + fC) out = (D - fC) in` and solves
/// them densely.
///
/// Each atom carries one auxiliary unknown `sigma = i wᵀ(out + in) / (2 c (omega0 - omega))`,
/// proportional to its excitation amplitude, so the relations read
/// `D (out - in) + v sigma = 0` and `2 c (omega0 - omega) sigma = i wᵀ(out + in)`.
/// Eliminating `sigma` recovers the `4 n_x n_y` transfer relations; keeping it
/// leaves the system regular at exact resonance, where `f` diverges.
pub fn solve_network_with_fault(
    lattice: &LatticeParams,
    omega: f64,
    l_in: usize,
    fault: Option<AssemblyFault>,
) -> Result<TransferSolution> {
    let (nx, ny) = (lattice.n_x, lattice.n_y);
    if l_in == 0 || l_in > ny {
        return Err(Error::PortOutOfRange { index: l_in, max: ny });
    }
    if !(omega > 0.0) {
        return Err(Error::invalid("omega", format!("must be positive, got {omega}")));
    }
    let n = nx * ny;
    let kappa = omega / lattice.c;
    let delta = lattice.omega0 - omega;

    // Unknown index, or the fixed boundary input value.
    let slot = |var: Var, seg: usize, idx: usize| -> std::result::Result<usize, Complex64> {
        match var {
            Var::T if seg == 0 => Err(if idx + 1 == l_in { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }),
            Var::T => Ok((seg - 1) * ny + idx),
            Var::R if seg == nx => Err(Complex64::new(0.0, 0.0)),
            Var::R => Ok(n + seg * ny + idx),
            Var::U if seg == 0 => Err(Complex64::new(0.0, 0.0)),
            Var::U => Ok(2 * n + (seg - 1) * nx + idx),
            Var::Dn if seg == ny => Err(Complex64::new(0.0, 0.0)),
            Var::Dn => Ok(3 * n + seg * nx + idx),
        }
    };

    let dim = 5 * n;
    let mut a = Array2::<Complex64>::zeros((dim, dim));
    let mut rhs = Array1::<Complex64>::zeros(dim);
    for j in 1..=nx {
        for l in 1..=ny {
            let mut gx = lattice.g_x;
            if let Some(fl) = fault {
                if fl.j == j && fl.l == l {
                    gx *= 1.0 + fl.scale;
                }
            }
            let (v, w) = coupling_vectors(lattice, kappa, j, l, gx);
            let outs = [
                slot(Var::T, j, l - 1),
                slot(Var::R, j, l - 1),
                slot(Var::U, l, j - 1),
                slot(Var::Dn, l, j - 1),
            ];
            let ins = [
                slot(Var::T, j - 1, l - 1),
                slot(Var::R, j - 1, l - 1),
                slot(Var::U, l - 1, j - 1),
                slot(Var::Dn, l - 1, j - 1),
            ];
            let site = lattice.site(j, l);
            let sigma = 4 * n + site;
            let row0 = 4 * site;
            for k in 0..4 {
                let row = row0 + k;
                match outs[k] {
                    Ok(col) => a[[row, col]] += D[k],
                    Err(val) => rhs[row] -= D[k] * val,
                }
                match ins[k] {
                    Ok(col) => a[[row, col]] -= D[k],
                    Err(val) => rhs[row] += D[k] * val,
                }
                a[[row, sigma]] += v[k];
            }
            let row = sigma;
            a[[row, sigma]] += 2.0 * lattice.c * delta;
            for k in 0..4 {
                for slot in [outs[k], ins[k]] {
                    match slot {
                        Ok(col) => a[[row, col]] -= I * w[k],
                        Err(val) => rhs[row] += I * w[k] * val,
                    }
                }
            }
        }
    }

    let lu = a.factorize_into().map_err(|_| Error::SingularNetwork { omega })?;
    let rc = lu.rcond().map_err(|_| Error::SingularNetwork { omega })?;
    if !(rc > 0.0) || 1.0 / rc > crate::green::POLE_CONDITION {
        return Err(Error::SingularNetwork { omega });
    }
    let x = lu.solve_into(rhs)?;
    let value = |s: std::result::Result<usize, Complex64>| match s {
        Ok(i) => x[i],
        Err(v) => v,
    };
    let t_h = Array2::from_shape_fn((nx + 1, ny), |(s, l)| value(slot(Var::T, s, l)));
    let r_h = Array2::from_shape_fn((nx + 1, ny), |(s, l)| value(slot(Var::R, s, l)));
    let t_v = Array2::from_shape_fn((ny + 1, nx), |(s, j)| value(slot(Var::U, s, j)));
    let r_v = Array2::from_shape_fn((ny + 1, nx), |(s, j)| value(slot(Var::Dn, s, j)));
    Ok(TransferSolution { t_h, r_h, t_v, r_v, omega })
}

fn chain_f(gamma: f64, detuning: f64) -> Result<Complex64> {
    if detuning == 0.0 {
        return Err(Error::ResonanceSingularity);
    }
    // f = i gamma / (2 (omega0 - omega)) with detuning = omega - omega0.
    Ok(I * gamma / (-2.0 * detuning))
}

/// Two-port matrix of one atom of a 1D chain including one spacing of propagation.
pub fn chain_p_matrix(gamma: f64, phi: f64, detuning: f64) -> Result<[[Complex64; 2]; 2]> {
    let f = chain_f(gamma, detuning)?;
    let e = Complex64::from_polar(1.0, phi);
    let one = Complex64::new(1.0, 0.0);
    Ok([
        [-(one + 2.0 * f) * e, -2.0 * f * e],
        [2.0 * f * e.conj(), (2.0 * f - one) * e.conj()],
    ])
}

fn mul2(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    let mut c = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Transmission `t_N` and reflection `r_0` of an `n`-atom chain.
/// `detuning` is `omega - omega0` in the same units as `gamma`.
pub fn chain_transfer_1d(gamma: f64, phi: f64, detuning: f64, n: usize) -> Result<(Complex64, Complex64)> {
    if n == 0 {
        return Err(Error::invalid("n", "chain needs at least one atom"));
    }
    let p = chain_p_matrix(gamma, phi, detuning)?;
    let mut q = p;
    for _ in 1..n {
        q = mul2(&p, &q);
    }
    if q[1][1].norm() == 0.0 {
        return Err(Error::SingularNetwork { omega: detuning });
    }
    let r0 = -q[1][0] / q[1][1];
    // det P = 1, so t_N = det(P^N) / Q_22 without the cancellation in Q_11 + Q_12 r_0.
    let tn = Complex64::new(1.0, 0.0) / q[1][1];
    Ok((tn, r0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Band,
    Gap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainClassification {
    pub regime: Regime,
    /// Quasi-momentum `k_x` in the band, decay exponent per atom in the gap.
    pub k_or_gamma: f64,
    /// Gap interval in units of `gamma`.
    pub gap_range: (f64, f64),
    pub eigenvalues: [Complex64; 2],
}

pub fn gap_range(phi: f64) -> Result<(f64, f64)> {
    if phi.sin().abs() < 1e-12 {
        return Err(Error::SingularPhase { phi });
    }
    Ok((-(phi / 2.0).tan(), 1.0 / (phi / 2.0).tan()))
}

/// Classifies a frequency as propagating or evanescent in the 1D chain.
///
/// The chain matrix has eigenvalues `-e^{±i k}` inside the band, so the
/// quasi-momentum is read off `arg(-lambda)`; with that choice it satisfies
/// `omega = omega0 + gamma sin(phi) / (cos k - cos phi)`.
pub fn chain_eigen_analysis(gamma: f64, phi: f64, detuning: f64) -> Result<ChainClassification> {
    let range = gap_range(phi)?;
    if detuning == 0.0 {
        return Err(Error::ResonanceSingularity);
    }
    let fp = gamma / (-2.0 * detuning);
    let mu = 2.0 * fp * phi.sin() - phi.cos();
    let root = Complex64::new(mu * mu - 1.0, 0.0).sqrt();
    let l1 = mu + root;
    let l2 = mu - root;
    if (l1.norm() - 1.0).abs() < 1e-10 && (l2.norm() - 1.0).abs() < 1e-10 {
        let k = (-l1).arg().abs();
        Ok(ChainClassification { regime: Regime::Band, k_or_gamma: k, gap_range: range, eigenvalues: [l1, l2] })
    } else {
        let inner = if l1.norm() < l2.norm() { l1 } else { l2 };
        Ok(ChainClassification {
            regime: Regime::Gap,
            k_or_gamma: inner.norm().ln().abs(),
            gap_range: range,
            eigenvalues: [l1, l2],
        })
    }
}

/// Band dispersion `(omega - omega0) / gamma` at quasi-momentum `k`.
pub fn chain_dispersion(phi: f64, k: f64) -> f64 {
    phi.sin() / (k.cos() - phi.cos())
}

/// Spatial period of the transmitted-intensity oscillation, `max(pi/k, pi/(pi-k))`.
pub fn oscillation_period_law(k_x: f64) -> f64 {
    let pi = std::f64::consts::PI;
    (pi / k_x).max(pi / (pi - k_x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::{port_totals, scatter};
    use crate::model::single_port_input;
    use ndarray_linalg::Determinant;
    use std::f64::consts::PI;

    fn lattice(nx: usize, ny: usize, gy: f64) -> LatticeParams {
        LatticeParams::new(nx, ny, 1.0, 100.0, 100.0 * PI / 6.0, 1.0, gy).unwrap()
    }

    #[test]
    fn printed_c_entries() {
        let p = lattice(2, 3, 1.4);
        let w = p.omega0 * 1.01;
        let k = w / p.c;
        let (x, y, lam) = (p.x(2), p.y(3), 1.4);
        let c = coupling_matrix(&p, w, 2, 3).unwrap();
        let e = |t: f64| Complex64::from_polar(1.0, t);
        assert!((c[[0, 1]] - e(-2.0 * k * x)).norm() < 1e-12);
        assert!((c[[0, 2]] - lam * e(k * (y - x))).norm() < 1e-12);
        assert!((c[[1, 3]] - lam * e(k * (x - y))).norm() < 1e-12);
        assert!((c[[2, 1]] - lam * e(-k * (x + y))).norm() < 1e-12);
        assert!((c[[3, 1]] - lam * e(k * (y - x))).norm() < 1e-12);
        assert!((c[[3, 2]] - lam * lam * e(2.0 * k * y)).norm() < 1e-12);
    }

    #[test]
    fn transfer_matrix_is_unimodular() {
        let p = lattice(3, 3, 1.0);
        for det in [-2.0, -0.3, 0.7, 4.0] {
            let m = atom_transfer_matrix(&p, p.omega_from_detuning(det), 2, 3).unwrap();
            assert!((m.det().unwrap().norm() - 1.0).abs() < 1e-10);
        }
        assert!(matches!(atom_transfer_matrix(&p, p.omega0, 1, 1), Err(Error::ResonanceSingularity)));
    }

    #[test]
    fn transfer_matrix_decouples_without_vertical_coupling() {
        let p = lattice(2, 2, 0.0);
        let m = atom_transfer_matrix(&p, p.omega_from_detuning(0.8), 1, 2).unwrap();
        for r in 0..2 {
            for k in 2..4 {
                assert!(m[[r, k]].norm() < 1e-14 && m[[k, r]].norm() < 1e-14);
            }
        }
        assert!((m[[2, 2]] - 1.0).norm() < 1e-14 && (m[[3, 3]] - 1.0).norm() < 1e-14);
        let f = I * p.gamma_x() / (2.0 * (p.omega0 - p.omega_from_detuning(0.8)));
        // Horizontal block: solve the 2x2 relation directly.
        let (t_out, r_in) = (m[[0, 0]], m[[1, 0]]);
        let a = Complex64::from_polar(1.0, p.omega_from_detuning(0.8) / p.c * p.x(1));
        let lhs0 = (-1.0 + f) * t_out + f / (a * a) * r_in;
        assert!((lhs0 - (-1.0 - f)).norm() < 1e-12);
    }

    #[test]
    fn transparent_limit() {
        let p = lattice(2, 2, 1.0);
        let m = atom_transfer_matrix(&p, p.omega0 + 1e9, 1, 1).unwrap();
        for r in 0..4 {
            for k in 0..4 {
                let e = if r == k { 1.0 } else { 0.0 };
                assert!((m[[r, k]] - e).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn network_matches_green_small() {
        for (nx, ny) in [(1, 1), (1, 2), (2, 2), (3, 2)] {
            let p = lattice(nx, ny, 1.0);
            for det in [-1.7, -0.2, 0.0, 0.6, 2.5] {
                let w = p.omega_from_detuning(det);
                for l in 1..=ny {
                    let sol = solve_network(&p, w, l).unwrap();
                    let g = scatter(&p, &single_port_input(&p, w, l).unwrap()).unwrap().0;
                    let t = sol.amplitudes();
                    for dir in crate::model::Direction::ALL {
                        let a = t.probabilities(dir);
                        let b = g.probabilities(dir);
                        for (x, y) in a.iter().zip(b.iter()) {
                            assert!((x - y).abs() < 1e-10, "{nx}x{ny} {det} {dir:?}: {x} vs {y}");
                        }
                    }
                    assert!((sol.total_output() - 1.0).abs() < 1e-10);
                    assert!((port_totals(&g).total() - 1.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn fault_changes_outputs() {
        let p = lattice(2, 2, 1.0);
        let w = p.omega_from_detuning(0.4);
        let good = solve_network(&p, w, 1).unwrap().amplitudes();
        let bad = solve_network_with_fault(&p, w, 1, Some(AssemblyFault { j: 2, l: 1, scale: 0.1 }))
            .unwrap()
            .amplitudes();
        let diff = (&good.chi_x - &bad.chi_x).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff > 1e-4);
    }

    #[test]
    fn single_atom_chain_lorentzian() {
        let (g, phi) = (0.01, 0.9);
        for det in [-0.03, -0.004, 0.002, 0.05] {
            let (t, r) = chain_transfer_1d(g, phi, det, 1).unwrap();
            assert!((t.norm_sqr() + r.norm_sqr() - 1.0).abs() < 1e-12);
            assert!((r.norm_sqr() - g * g / (det * det + g * g)).abs() < 1e-12);
        }
        assert!(chain_transfer_1d(g, phi, 0.0, 3).is_err());
    }

    #[test]
    fn chain_flux_conservation() {
        for n in [1, 2, 7, 20, 50] {
            for det in [-5.0, -0.1, 0.3, 2.0] {
                let (t, r) = chain_transfer_1d(1.0, PI / 6.0, det, n).unwrap();
                assert!((t.norm_sqr() + r.norm_sqr() - 1.0).abs() < 1e-9, "{n} {det}");
            }
        }
    }

    #[test]
    fn chain_matches_green_1d() {
        // A single row of the 2D lattice with g_y = 0 is the 1D chain.
        let p = LatticeParams::new(6, 1, 1.0, 100.0, 100.0 * PI / 6.0, 1.0, 0.0).unwrap();
        for det in [-2.0, 0.5, 1.3] {
            let w = p.omega_from_detuning(det);
            let g = scatter(&p, &single_port_input(&p, w, 1).unwrap()).unwrap().0;
            // Markov phase in the chain, exact phase in Green: compare at tiny omega - omega0.
            let (t, r) = chain_transfer_1d(p.gamma_x(), p.phi(w), w - p.omega0, 6).unwrap();
            assert!((t.norm_sqr() - g.chi_x[0].norm_sqr()).abs() < 1e-10);
            assert!((r.norm_sqr() - g.chi_xbar[0].norm_sqr()).abs() < 1e-10);
        }
    }

    #[test]
    fn dispersion_and_gap_examples() {
        assert!((chain_dispersion(PI / 6.0, PI / 4.0) + 3.1464).abs() < 2e-4);
        let (lo, hi) = gap_range(PI / 6.0).unwrap();
        assert!((lo + 0.2679).abs() < 1e-4 && (hi - 3.7321).abs() < 1e-4);
        let c = chain_eigen_analysis(1.0, PI / 6.0, 1.0).unwrap();
        assert_eq!(c.regime, Regime::Gap);
        let c = chain_eigen_analysis(1.0, PI / 6.0, chain_dispersion(PI / 6.0, PI / 4.0)).unwrap();
        assert_eq!(c.regime, Regime::Band);
        assert!((c.k_or_gamma - PI / 4.0).abs() < 1e-9);
        assert!(gap_range(PI).is_err());
    }

    #[test]
    fn gap_transmission_decays_exponentially() {
        let (g, phi, det) = (1.0, PI / 6.0, 1.0);
        let gam = chain_eigen_analysis(g, phi, det).unwrap().k_or_gamma;
        let ns: Vec<f64> = (10..=60).map(|n| n as f64).collect();
        let ys: Vec<f64> = (10..=60).map(|n| chain_transfer_1d(g, phi, det, n).unwrap().0.norm_sqr().ln()).collect();
        let (slope, r2) = linear_fit(&ns, &ys);
        assert!(r2 > 0.99);
        assert!((slope + 2.0 * gam).abs() < 1e-6 * gam.max(1.0) + 1e-3);
    }

    fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        let slope = sxy / sxx;
        (slope, sxy * sxy / (sxx * syy))
    }

    #[test]
    fn period_law_examples() {
        assert!((oscillation_period_law(PI / 4.0) - 4.0).abs() < 1e-12);
        assert!((oscillation_period_law(3.0 * PI / 4.0) - 4.0).abs() < 1e-12);
        assert!((oscillation_period_law(PI / 8.0) - 8.0).abs() < 1e-12);
    }
}
