//! Non-Hermitian spectra: unconjugated normalization, IPR, scale-free states,
//! subradiant resonances and the separable symmetry sums.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2};
use ndarray_linalg::Eig;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hamiltonians::{build_h1d, EffectiveHamiltonian, InverseChainCoefficients};
use crate::model::LatticeParams;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Relative threshold on `|Σψ²| / Σ|ψ|²` below which a state counts as self-orthogonal.
pub const SELF_ORTHOGONAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: Array1<Complex64>,
    /// Columns normalized so that the unconjugated sum `Σ ψ(i)^2 = 1`.
    pub eigenvectors: Array2<Complex64>,
    pub ipr: Array1<f64>,
    /// States that could not be normalized (near an exceptional point).
    pub flagged: Vec<bool>,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// State indices sorted by decreasing IPR (ties by index).
    pub fn by_ipr_desc(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.ipr[b].total_cmp(&self.ipr[a]).then(a.cmp(&b)));
        idx
    }

    pub fn state(&self, n: usize) -> Array1<Complex64> {
        self.eigenvectors.column(n).to_owned()
    }

    /// Largest `‖H ψ_n − ω_n ψ_n‖ / ‖ψ_n‖` over all states.
    pub fn max_residual(&self, h: ArrayView2<Complex64>) -> f64 {
        let hv = h.dot(&self.eigenvectors);
        let mut worst: f64 = 0.0;
        for n in 0..self.len() {
            let col = self.eigenvectors.column(n);
            let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let r = hv
                .column(n)
                .iter()
                .zip(col.iter())
                .map(|(a, b)| (a - self.eigenvalues[n] * b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            worst = worst.max(r / norm);
        }
        worst
    }
}

pub fn ipr(state: &[Complex64]) -> f64 {
    let p2: f64 = state.iter().map(|z| z.norm_sqr()).sum();
    let p4: f64 = state.iter().map(|z| z.norm_sqr().powi(2)).sum();
    p4 / (p2 * p2)
}

pub fn eigendecompose(h: &EffectiveHamiltonian) -> Result<SpectralDecomposition> {
    eigendecompose_matrix(h.matrix.view())
}

/// Full eigendecomposition of a complex-symmetric matrix with each eigenvector
/// scaled by `1/sqrt(Σψ²)` (principal branch).
pub fn eigendecompose_matrix(h: ArrayView2<Complex64>) -> Result<SpectralDecomposition> {
    if h.nrows() != h.ncols() {
        return Err(Error::invalid("h", "matrix must be square"));
    }
    let (eigenvalues, vecs) = h.to_owned().eig()?;
    Ok(normalize(eigenvalues, vecs))
}

fn normalize(eigenvalues: Array1<Complex64>, mut vecs: Array2<Complex64>) -> SpectralDecomposition {
    let n = eigenvalues.len();
    let mut flagged = vec![false; n];
    let mut iprs = Array1::zeros(n);
    for k in 0..n {
        let mut col = vecs.column_mut(k);
        let s2: Complex64 = col.iter().map(|z| z * z).sum();
        let n2: f64 = col.iter().map(|z| z.norm_sqr()).sum();
        iprs[k] = ipr(col.as_slice().unwrap_or(&col.to_vec()));
        if s2.norm() < SELF_ORTHOGONAL_TOL * n2 {
            flagged[k] = true;
            col.mapv_inplace(|z| z / n2.sqrt());
        } else {
            let scale = s2.sqrt();
            col.mapv_inplace(|z| z / scale);
        }
    }
    SpectralDecomposition { eigenvalues, eigenvectors: vecs, ipr: iprs, flagged }
}

/// Product-state decomposition of `Hx ⊗ I + I ⊗ Hy` from the two factor spectra.
///
/// When both factors are the same chain, degenerate pairs `(m, n)`/`(n, m)` are
/// replaced by their exchange-symmetric and antisymmetric combinations, which fixes
/// an otherwise arbitrary basis inside each two-dimensional eigenspace.
pub fn kronecker_decomposition(
    dx: &SpectralDecomposition,
    dy: &SpectralDecomposition,
    exchange_symmetric: bool,
) -> SpectralDecomposition {
    let (nx, ny) = (dx.len(), dy.len());
    let dim = dx.eigenvectors.nrows() * dy.eigenvectors.nrows();
    let mut values = Vec::with_capacity(nx * ny);
    let mut cols: Vec<Array1<Complex64>> = Vec::with_capacity(nx * ny);
    let product = |m: usize, n: usize| -> Array1<Complex64> {
        let a = dx.eigenvectors.column(m);
        let b = dy.eigenvectors.column(n);
        Array1::from_shape_fn(dim, |i| a[i / b.len()] * b[i % b.len()])
    };
    if exchange_symmetric && nx == ny {
        let s = 1.0 / 2f64.sqrt();
        for m in 0..nx {
            values.push(dx.eigenvalues[m] + dy.eigenvalues[m]);
            cols.push(product(m, m));
            for n in m + 1..nx {
                let (p, q) = (product(m, n), product(n, m));
                values.push(dx.eigenvalues[m] + dy.eigenvalues[n]);
                cols.push((&p + &q) * s);
                values.push(dx.eigenvalues[n] + dy.eigenvalues[m]);
                cols.push((&p - &q) * s);
            }
        }
    } else {
        for m in 0..nx {
            for n in 0..ny {
                values.push(dx.eigenvalues[m] + dy.eigenvalues[n]);
                cols.push(product(m, n));
            }
        }
    }
    let mut vecs = Array2::zeros((dim, cols.len()));
    for (k, c) in cols.iter().enumerate() {
        vecs.column_mut(k).assign(c);
    }
    normalize(Array1::from_vec(values), vecs)
}

/// `G(i, i') = Σ_n ψ_n(i) ψ_n(i') / (omega − omega_n)` over usable states.
pub fn spectral_green_entry(dec: &SpectralDecomposition, omega: f64, i: usize, ip: usize) -> Result<Complex64> {
    let dim = dec.eigenvectors.nrows();
    if i >= dim || ip >= dim {
        return Err(Error::invalid("i", format!("site index out of range 0..{dim}")));
    }
    let mut g = Complex64::new(0.0, 0.0);
    let mut excluded = 0.0;
    for n in 0..dec.len() {
        let num = dec.eigenvectors[[i, n]] * dec.eigenvectors[[ip, n]];
        if dec.flagged[n] {
            excluded += num.norm();
            continue;
        }
        g += num / (omega - dec.eigenvalues[n]);
    }
    if excluded > 1e-6 {
        return Err(Error::ReconstructionUnreliable { weight: excluded });
    }
    Ok(g)
}

/// Eigenvalues of a 1D Markov chain coupling block plus `omega0_term`.
fn chain_spectrum(n: usize, gamma: f64, phi: f64, omega0_term: f64) -> Result<SpectralDecomposition> {
    let h = build_h1d(n, gamma, phi, omega0_term)?;
    eigendecompose(&h)
}

/// Most subradiant y-chain eigenvalue (coupling block only, no `omega0`):
/// minimal `|Im|`, ties broken by smaller real part.
pub fn most_subradiant_y(lattice: &LatticeParams) -> Result<Complex64> {
    let dy = chain_spectrum(lattice.n_y, lattice.gamma_y(), lattice.phi0(), 0.0)?;
    Ok(sort_by_decay(&dy.eigenvalues)[0])
}

fn sort_by_decay(values: &Array1<Complex64>) -> Vec<Complex64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.im.abs().total_cmp(&b.im.abs()).then(a.re.total_cmp(&b.re)));
    v
}

/// Complex Markov resonances `omega_x^s + omega_y^{s0}` for all x-states `s`,
/// sorted by real part.
pub fn subradiant_modes(lattice: &LatticeParams) -> Result<Vec<Complex64>> {
    let dx = chain_spectrum(lattice.n_x, lattice.gamma_x(), lattice.phi0(), lattice.omega0)?;
    let y0 = most_subradiant_y(lattice)?;
    let mut out: Vec<Complex64> = dx.eigenvalues.iter().map(|w| w + y0).collect();
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(out)
}

pub fn subradiant_frequencies(lattice: &LatticeParams) -> Result<Vec<f64>> {
    Ok(subradiant_modes(lattice)?.iter().map(|z| z.re).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub theta: f64,
    pub f: f64,
    /// Real part of the scaled inverse energy, `gamma / (omega - omega0)`.
    pub inverse_energy: f64,
    /// Decay rate in units of `gamma`.
    pub decay_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleFreeCurve {
    pub points: Vec<CurvePoint>,
    /// Angles where `F` diverges.
    pub dropped: Vec<f64>,
}

/// Exponent `F(θ) = ln |(J e^{iθ} − C) / (J e^{−iθ} − C)|` with `J = A − B`,
/// or `None` where it diverges.
pub fn scale_free_exponent(coeffs: &InverseChainCoefficients, theta: f64) -> Option<f64> {
    let j = coeffs.a - coeffs.b;
    let num = j * Complex64::from_polar(1.0, theta) - coeffs.c;
    let den = j * Complex64::from_polar(1.0, -theta) - coeffs.c;
    let scale = coeffs.c.norm().max(j.norm());
    if den.norm() < 1e-12 * scale || num.norm() < 1e-12 * scale {
        return None;
    }
    let f = (num.norm() / den.norm()).ln();
    f.is_finite().then_some(f)
}

/// Inverse-Hamiltonian eigenvalue `E(θ) = 2C cos θ + B + i 2C sin θ F / n`.
pub fn scale_free_energy(coeffs: &InverseChainCoefficients, theta: f64, n: usize) -> Option<Complex64> {
    let f = scale_free_exponent(coeffs, theta)?;
    let re = 2.0 * coeffs.c * theta.cos() + coeffs.b;
    let im = 2.0 * coeffs.c * theta.sin() * f / n as f64;
    Some(re + I * im)
}

/// Maps an inverse-Hamiltonian eigenvalue `E` to `(gamma Re E, decay / gamma)`.
pub fn inverse_energy_point(gamma: f64, e: Complex64) -> (f64, f64) {
    let es = e * gamma;
    (es.re, es.im / es.norm_sqr())
}

pub fn scale_free_curve(coeffs: &InverseChainCoefficients, thetas: &[f64], n: usize) -> Result<ScaleFreeCurve> {
    if n < 2 {
        return Err(Error::invalid("n", "curve needs n >= 2"));
    }
    let mut points = Vec::with_capacity(thetas.len());
    let mut dropped = Vec::new();
    for &theta in thetas {
        match (scale_free_exponent(coeffs, theta), scale_free_energy(coeffs, theta, n)) {
            (Some(f), Some(e)) => {
                let (x, y) = inverse_energy_point(coeffs.gamma, e);
                if x.is_finite() && y.is_finite() {
                    points.push(CurvePoint { theta, f, inverse_energy: x, decay_ratio: y });
                } else {
                    dropped.push(theta);
                }
            }
            _ => dropped.push(theta),
        }
    }
    Ok(ScaleFreeCurve { points, dropped })
}

/// Uniform open grid of `m` angles in `(0, 2π)`.
pub fn theta_grid(m: usize) -> Vec<f64> {
    (0..m).map(|k| 2.0 * PI * (k as f64 + 0.5) / m as f64).collect()
}

/// Distance from an exact point to the curve: the curve sample minimizing
/// `max(|Δx| / tol_x, |Δ ln y| / tol_log)`, returned as `(|Δx|, |Δ ln y|)`.
pub fn curve_mismatch(curve: &ScaleFreeCurve, point: (f64, f64), tol_x: f64, tol_log: f64) -> (f64, f64) {
    let mut best = (f64::INFINITY, f64::INFINITY);
    let mut best_score = f64::INFINITY;
    for p in &curve.points {
        let dx = (p.inverse_energy - point.0).abs();
        let dl = if p.decay_ratio > 0.0 && point.1 > 0.0 {
            (p.decay_ratio.ln() - point.1.ln()).abs()
        } else {
            f64::INFINITY
        };
        let score = (dx / tol_x).max(dl / tol_log);
        if score < best_score {
            best_score = score;
            best = (dx, dl);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitForm {
    Edge,
    CornerTwo,
    CornerFour,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleFreeFit {
    pub f: f64,
    pub form: FitForm,
    /// Mean squared misfit of `ln |ψ|²` after the optimal amplitude shift.
    pub residual: f64,
}

fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

struct FitData {
    coords: Vec<(f64, f64)>,
    logp: Vec<f64>,
    n: f64,
    form: FitForm,
}

impl FitData {
    fn model(&self, f: f64, (u, v): (f64, f64)) -> f64 {
        let s = f / self.n;
        match self.form {
            FitForm::Edge => 2.0 * ln_cosh(s * u),
            FitForm::CornerTwo => 2.0 * ln_cosh(s * (u + v)),
            FitForm::CornerFour => 2.0 * log_add(ln_cosh(s * (u + v)), ln_cosh(s * (u - v))),
        }
    }

    fn residual(&self, f: f64) -> f64 {
        let r: Vec<f64> = self.coords.iter().zip(&self.logp).map(|(&c, &lp)| lp - self.model(f, c)).collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / r.len() as f64
    }
}

/// Least-squares fit of `ln |ψ|²` to a scale-free form in `F` plus a free amplitude.
///
/// Coordinates are measured from the lattice center, so the symmetric forms
/// peak at the boundaries. For corner forms the state is an `n × n` field
/// flattened row-major. Sites with `|ψ|² < 1e-14` (relative) are skipped.
pub fn fit_scale_free(state: &[Complex64], form: FitForm) -> Result<ScaleFreeFit> {
    let len = state.len();
    let (n, two_d) = match form {
        FitForm::Edge => (len, false),
        _ => {
            let n = (len as f64).sqrt().round() as usize;
            if n * n != len {
                return Err(Error::invalid("state", "corner forms need a square field"));
            }
            (n, true)
        }
    };
    if n < 2 {
        return Err(Error::invalid("state", "need at least two sites per side"));
    }
    let total: f64 = state.iter().map(|z| z.norm_sqr()).sum();
    if !(total > 0.0) {
        return Err(Error::invalid("state", "zero state"));
    }
    let center = (n as f64 + 1.0) / 2.0;
    let mut coords = Vec::with_capacity(len);
    let mut logp = Vec::with_capacity(len);
    for (k, z) in state.iter().enumerate() {
        let p = z.norm_sqr() / total;
        if p < 1e-14 {
            continue;
        }
        let (u, v) = if two_d {
            ((k / n) as f64 + 1.0 - center, (k % n) as f64 + 1.0 - center)
        } else {
            (k as f64 + 1.0 - center, 0.0)
        };
        coords.push((u, v));
        logp.push(p.ln());
    }
    if coords.len() < 3 {
        return Err(Error::invalid("state", "too few nonzero sites to fit"));
    }
    let data = FitData { coords, logp, n: n as f64, form };

    let (lo, hi, steps) = (0.0, 60.0, 1200);
    let h = (hi - lo) / steps as f64;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=steps {
        let f = lo + h * k as f64;
        let r = data.residual(f);
        if r < best.0 {
            best = (r, f);
        }
    }
    let (mut a, mut b) = ((best.1 - h).max(lo), (best.1 + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (data.residual(c), data.residual(d));
    while b - a > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = data.residual(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = data.residual(d);
        }
    }
    let f = 0.5 * (a + b);
    let r = data.residual(f);
    let (f, residual) = if r <= best.0 { (f, r) } else { (best.1, best.0) };
    Ok(ScaleFreeFit { f, form, residual: residual.max(0.0) })
}

/// Bands `Re[omega_x(k) + omega_y^n]` over a quasi-momentum grid, one row per
/// y-chain state ordered from most to least subradiant.
pub fn ribbon_bands(lattice: &LatticeParams, kx_grid: &[f64]) -> Result<Array2<f64>> {
    let phi = lattice.phi0();
    if phi.sin().abs() < 1e-12 {
        return Err(Error::SingularPhase { phi });
    }
    for &k in kx_grid {
        if (k.cos() - phi.cos()).abs() < 1e-12 {
            return Err(Error::invalid("kx_grid", format!("k = {k} sits on the band-edge pole k = ±phi0")));
        }
    }
    let dy = chain_spectrum(lattice.n_y, lattice.gamma_y(), phi, 0.0)?;
    let ys = sort_by_decay(&dy.eigenvalues);
    let gx = lattice.gamma_x();
    Ok(Array2::from_shape_fn((lattice.n_y, kx_grid.len()), |(n, c)| {
        let k = kx_grid[c];
        lattice.omega0 + gx * phi.sin() / (k.cos() - phi.cos()) + ys[n].re
    }))
}

/// Backward total and mean backward position from the separable spectral sums
/// (Markov spectra), written with dipole moments and y-correlation tensors.
pub fn symmetry_decomposition(lattice: &LatticeParams, omega: f64, l_in: usize) -> Result<(f64, f64)> {
    if l_in == 0 || l_in > lattice.n_y {
        return Err(Error::PortOutOfRange { index: l_in, max: lattice.n_y });
    }
    let phi = lattice.phi0();
    let dx = chain_spectrum(lattice.n_x, lattice.gamma_x(), phi, lattice.omega0)?;
    let dy = chain_spectrum(lattice.n_y, lattice.gamma_y(), phi, 0.0)?;
    if dx.flagged.iter().chain(dy.flagged.iter()).any(|&f| f) {
        return Err(Error::ReconstructionUnreliable { weight: 1.0 });
    }
    let kappa = omega / lattice.c;
    let (nx, ny) = (dx.len(), dy.len());
    let d2: Vec<Complex64> = (0..nx)
        .map(|m| {
            let d: Complex64 = (0..lattice.n_x)
                .map(|j| Complex64::from_polar(1.0, kappa * lattice.x(j + 1)) * dx.eigenvectors[[j, m]])
                .sum();
            d * d
        })
        .collect();
    let psi_in: Vec<Complex64> = (0..ny).map(|n| dy.eigenvectors[[l_in - 1, n]]).collect();
    let mut c = Array2::<Complex64>::zeros((ny, ny));
    let mut dd = Array2::<Complex64>::zeros((ny, ny));
    for a in 0..ny {
        for b in 0..ny {
            for l in 0..lattice.n_y {
                let t = dy.eigenvectors[[l, a]] * psi_in[a] * (dy.eigenvectors[[l, b]] * psi_in[b]).conj();
                c[[a, b]] += t;
                dd[[a, b]] += t * (l + 1) as f64;
            }
        }
    }
    // Collapse the x sums first: W(n_y) = Σ_{n_x} d² / (ω − ω_{n_x} − ω_{n_y}).
    let w: Vec<Complex64> = (0..ny)
        .map(|a| (0..nx).map(|m| d2[m] / (omega - dx.eigenvalues[m] - dy.eigenvalues[a])).sum())
        .collect();
    let g2 = lattice.gamma_x().powi(2);
    let mut s = Complex64::new(0.0, 0.0);
    let mut p = Complex64::new(0.0, 0.0);
    for a in 0..ny {
        for b in 0..ny {
            let k = w[a] * w[b].conj();
            s += c[[a, b]] * k;
            p += dd[[a, b]] * k;
        }
    }
    let s = g2 * s.re;
    let p = if s > 1e-12 { g2 * p.re / s } else { f64::NAN };
    Ok((s, p))
}
