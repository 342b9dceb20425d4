//! Observables: mean-position shifts, momentum-space phase shifts, sweeps,
//! size scans, oscillation periods and the decay-ratio scaling study.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::green::{port_totals, scatter, PortTotals, ScatteringAmplitudes};
use crate::model::{gaussian_input, single_port_input, Direction, LatticeParams, PhotonInput};
use crate::spectral::most_subradiant_y;

/// Totals below this are treated as empty when forming mean positions.
pub const EMPTY_TOTAL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QghResult {
    pub s_x: f64,
    pub s_xbar: f64,
    pub s_y: f64,
    pub s_ybar: f64,
    /// Mean output rows; `None` when the direction carries no probability.
    pub p_x: Option<f64>,
    pub p_xbar: Option<f64>,
    pub dp_x: Option<f64>,
    pub dp_xbar: Option<f64>,
}

impl QghResult {
    pub fn totals(&self) -> PortTotals {
        PortTotals { s_x: self.s_x, s_xbar: self.s_xbar, s_y: self.s_y, s_ybar: self.s_ybar }
    }
}

fn mean_row(chi: &ndarray::Array1<Complex64>) -> (f64, Option<f64>) {
    let total: f64 = chi.iter().map(|z| z.norm_sqr()).sum();
    if total < EMPTY_TOTAL {
        return (total, None);
    }
    let m: f64 = chi.iter().enumerate().map(|(i, z)| (i + 1) as f64 * z.norm_sqr()).sum();
    (total, Some(m / total))
}

/// Port totals, mean output rows `P = Σ l |χ_l|² / Σ |χ_l|²` and shifts `P − P_in`.
pub fn mean_shift(amps: &ScatteringAmplitudes, input: &PhotonInput) -> QghResult {
    let t = port_totals(amps);
    let (_, p_x) = mean_row(&amps.chi_x);
    let (_, p_xbar) = mean_row(&amps.chi_xbar);
    QghResult {
        s_x: t.s_x,
        s_xbar: t.s_xbar,
        s_y: t.s_y,
        s_ybar: t.s_ybar,
        p_x,
        p_xbar,
        dp_x: p_x.map(|p| p - input.centroid),
        dp_xbar: p_xbar.map(|p| p - input.centroid),
    }
}

/// Port-space Fourier data of the input and one reflected/transmitted field.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumSpectrum {
    /// Uniform grid on `[-π, π)`.
    pub k_grid: Vec<f64>,
    pub h_in: Vec<Complex64>,
    pub h_re: Vec<Complex64>,
    pub r: Vec<f64>,
    /// Relative phase `arg(h_re / h_in)` unwrapped along the grid.
    pub theta: Vec<f64>,
    /// `k` windows where the unwrap was ambiguous or `h_in` vanished.
    pub unreliable: Vec<(f64, f64)>,
}

impl MomentumSpectrum {
    pub fn is_clean(&self) -> bool {
        self.unreliable.is_empty()
    }
}

/// Default zero-padded transform length for [`momentum_qgh`].
pub const MOMENTUM_GRID: usize = 8192;

/// `h(k) = Σ_l v_l e^{-i k l}` on the grid `k_m = -π + 2π m / m_len`.
pub fn port_transform(v: &[Complex64], m_len: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); m_len];
    // Entry l = 1..n sits at buffer index l - 1; shift to put k = -π first.
    for (i, z) in v.iter().enumerate() {
        // e^{-i(-π) (l-1)} = (-1)^{l-1} moves the grid origin to -π.
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        buf[i] = z * sign;
    }
    let fft = FftPlanner::new().plan_fft_forward(m_len);
    fft.process(&mut buf);
    (0..m_len)
        .map(|m| {
            let k = -PI + 2.0 * PI * m as f64 / m_len as f64;
            buf[m] * Complex64::from_polar(1.0, -k)
        })
        .collect()
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI { y + 2.0 * PI } else { y }
}

/// Momentum-space shift `ΔP = −Σ |h_re|² ∂θ/∂k / Σ |h_re|²` on the default grid.
pub fn momentum_qgh(
    lattice: &LatticeParams,
    input: &PhotonInput,
    amps: &ScatteringAmplitudes,
    direction: Direction,
) -> Result<(f64, MomentumSpectrum)> {
    momentum_qgh_on(lattice, input, amps, direction, MOMENTUM_GRID)
}

/// As [`momentum_qgh`] with an explicit transform length.
///
/// Adjacent phase increments close to ±π are taken as sign changes of a real
/// amplitude and removed; increments between π/4 and 3π/4 cannot be assigned
/// a branch and mark the window unreliable.
pub fn momentum_qgh_on(
    lattice: &LatticeParams,
    input: &PhotonInput,
    amps: &ScatteringAmplitudes,
    direction: Direction,
    m_len: usize,
) -> Result<(f64, MomentumSpectrum)> {
    if !direction.is_horizontal() {
        return Err(Error::invalid("direction", "momentum shift is defined for horizontal outputs"));
    }
    if m_len < 2 * lattice.n_y {
        return Err(Error::invalid("m_len", "transform length must be at least 2 n_y"));
    }
    let chi = amps.get(direction);
    let h_in = port_transform(input.f.as_slice().unwrap_or(&input.f.to_vec()), m_len);
    let h_re = port_transform(chi.as_slice().unwrap_or(&chi.to_vec()), m_len);
    let dk = 2.0 * PI / m_len as f64;
    let k_grid: Vec<f64> = (0..m_len).map(|m| -PI + dk * m as f64).collect();

    let usable: Vec<bool> = h_in.iter().zip(&h_re).map(|(a, b)| a.norm() > 1e-10 && b.norm() > 0.0).collect();
    let wrapped: Vec<f64> = h_in.iter().zip(&h_re).map(|(a, b)| (b / a).arg()).collect();
    let r: Vec<f64> = h_in.iter().zip(&h_re).map(|(a, b)| if a.norm() > 1e-10 { b.norm() / a.norm() } else { 0.0 }).collect();

    // inc[m] is the corrected increment from m to m+1 (periodic).
    let mut inc = vec![f64::NAN; m_len];
    let mut unreliable = Vec::new();
    for m in 0..m_len {
        let n = (m + 1) % m_len;
        if !(usable[m] && usable[n]) {
            unreliable.push((k_grid[m], k_grid[m] + dk));
            continue;
        }
        let mut d = wrap(wrapped[n] - wrapped[m]);
        if d.abs() > 0.75 * PI {
            d -= PI * d.signum();
        } else if d.abs() > 0.25 * PI {
            unreliable.push((k_grid[m], k_grid[m] + dk));
        }
        inc[m] = d;
    }
    let mut theta = vec![0.0; m_len];
    theta[0] = wrapped[0];
    for m in 1..m_len {
        let d = inc[m - 1];
        theta[m] = theta[m - 1] + if d.is_finite() { d } else { wrap(wrapped[m] - wrapped[m - 1]) };
    }

    let mut num = 0.0;
    let mut den = 0.0;
    for m in 0..m_len {
        let prev = inc[(m + m_len - 1) % m_len];
        let next = inc[m];
        if !(prev.is_finite() && next.is_finite()) {
            continue;
        }
        let w = h_re[m].norm_sqr();
        num += w * (prev + next) / (2.0 * dk);
        den += w;
    }
    if !(den > 0.0) {
        return Err(Error::invalid("amps", "output field vanishes in momentum space"));
    }
    merge_windows(&mut unreliable);
    let spec = MomentumSpectrum { k_grid, h_in, h_re, r, theta, unreliable };
    Ok((-num / den, spec))
}

fn merge_windows(w: &mut Vec<(f64, f64)>) {
    w.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(w.len());
    for &(a, b) in w.iter() {
        match out.last_mut() {
            Some(last) if a <= last.1 + 1e-12 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    *w = out;
}

/// Injection recipe instantiated per frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputTemplate {
    SinglePort { l_in: usize },
    Gaussian { sigma: f64, k_y: f64, center: f64 },
}

impl InputTemplate {
    pub fn build(&self, lattice: &LatticeParams, omega: f64) -> Result<PhotonInput> {
        match *self {
            InputTemplate::SinglePort { l_in } => single_port_input(lattice, omega, l_in),
            InputTemplate::Gaussian { sigma, k_y, center } => gaussian_input(lattice, omega, sigma, k_y, center),
        }
    }
}

/// Frequency offset, in units of `gamma_x`, applied when a sweep point hits a pole.
pub const POLE_NUDGE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub input: usize,
    /// Requested frequency.
    pub omega: f64,
    /// Frequency actually solved (differs after a pole nudge).
    pub omega_solved: f64,
    pub nudged: bool,
    pub result: Result<QghResult>,
}

/// Scatters the template at `omega`, retrying once at `omega + 1e-9 gamma_x` on a pole.
pub fn scatter_nudged(
    lattice: &LatticeParams,
    template: &InputTemplate,
    omega: f64,
) -> (f64, bool, Result<(PhotonInput, ScatteringAmplitudes)>) {
    let attempt = |w: f64| -> Result<(PhotonInput, ScatteringAmplitudes)> {
        let inp = template.build(lattice, w)?;
        let (a, _) = scatter(lattice, &inp)?;
        Ok((inp, a))
    };
    match attempt(omega) {
        Err(Error::Pole { .. }) => {
            let w = omega + POLE_NUDGE * lattice.gamma_x();
            (w, true, attempt(w))
        }
        r => (omega, false, r),
    }
}

/// One row per `(input, omega)`, input-major; points are solved in parallel.
pub fn sweep_frequency(lattice: &LatticeParams, inputs: &[InputTemplate], omega_grid: &[f64]) -> Vec<SweepRow> {
    let jobs: Vec<(usize, f64)> = (0..inputs.len())
        .flat_map(|i| omega_grid.iter().map(move |&w| (i, w)))
        .collect();
    jobs.par_iter()
        .map(|&(i, w)| {
            let (ws, nudged, r) = scatter_nudged(lattice, &inputs[i], w);
            SweepRow {
                input: i,
                omega: w,
                omega_solved: ws,
                nudged,
                result: r.map(|(inp, a)| mean_shift(&a, &inp)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeRow {
    pub n_x: usize,
    pub nudged: bool,
    pub result: Result<PortTotals>,
}

/// Port totals as a function of the number of vertical waveguides.
pub fn size_scan(lattice: &LatticeParams, n_x_values: &[usize], input: &InputTemplate, omega: f64) -> Result<Vec<SizeRow>> {
    if n_x_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("n_x_values", "must be strictly ascending"));
    }
    if n_x_values.first() == Some(&0) {
        return Err(Error::invalid("n_x_values", "sizes must be at least 1"));
    }
    Ok(n_x_values
        .par_iter()
        .map(|&nx| {
            let lat = lattice.with_n_x(nx);
            let (_, nudged, r) = scatter_nudged(&lat, input, omega);
            SizeRow { n_x: nx, nudged, result: r.map(|(_, a)| port_totals(&a)) }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationPeak {
    /// `2π / Ω*` in atoms.
    pub period: f64,
    /// Dominant DFT angular frequency `Ω*` (radians per atom).
    pub omega_peak: f64,
    /// DFT bin spacing `2π / L`.
    pub bin_width: f64,
    /// Magnitudes for bins `0..=L/2`.
    pub spectrum: Vec<f64>,
    /// Peak magnitude over the median of the nonzero bins.
    pub prominence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Oscillation {
    Peak(OscillationPeak),
    /// Spectrum without a peak at least three times its median.
    Flat { spectrum: Vec<f64>, prominence: f64 },
}

/// Dominant period of a mean-removed series via its DFT.
pub fn oscillation_period(series: &[f64]) -> Result<Oscillation> {
    let len = series.len();
    if len < 16 {
        return Err(Error::invalid("series", format!("need at least 16 samples, got {len}")));
    }
    let mean = series.iter().sum::<f64>() / len as f64;
    let mut buf: Vec<Complex64> = series.iter().map(|x| Complex64::new(x - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let spectrum: Vec<f64> = buf[..=len / 2].iter().map(|z| z.norm()).collect();
    let (best, peak) = spectrum
        .iter()
        .enumerate()
        .skip(1)
        .fold((1, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let mut rest: Vec<f64> = spectrum[1..].to_vec();
    rest.sort_by(f64::total_cmp);
    let median = rest[rest.len() / 2];
    let prominence = if peak <= 0.0 {
        0.0
    } else if median > 0.0 {
        peak / median
    } else {
        f64::INFINITY
    };
    if !(prominence >= 3.0) {
        return Ok(Oscillation::Flat { spectrum, prominence });
    }
    let bin_width = 2.0 * PI / len as f64;
    let omega_peak = best as f64 * bin_width;
    Ok(Oscillation::Peak(OscillationPeak { period: 2.0 * PI / omega_peak, omega_peak, bin_width, spectrum, prominence }))
}

/// [`oscillation_period`] applied to first differences, which removes the
/// slowly varying background of a damped size scan before the transform.
pub fn oscillation_period_differenced(series: &[f64]) -> Result<Oscillation> {
    let diff: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    oscillation_period(&diff)
}

/// Quasi-momentum `k_x` resonant with `omega` once the most subradiant y-mode
/// shift is included: `omega = omega_x(k_x) + omega_y^{s0}`. `None` in the gap.
pub fn resonant_kx(lattice: &LatticeParams, omega: f64) -> Result<Option<f64>> {
    let phi = lattice.phi0();
    let y0 = most_subradiant_y(lattice)?;
    let eff = (omega - lattice.omega0 - y0.re) / lattice.gamma_x();
    if eff == 0.0 {
        return Ok(None);
    }
    let c = phi.cos() + phi.sin() / eff;
    Ok((c.abs() <= 1.0).then(|| c.acos()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub ratio: f64,
    pub value: Result<f64>,
    /// Per-direction vertical totals divided by the horizontal total.
    pub upward: f64,
    pub downward: f64,
}

/// `(S_y + S_ȳ) / (S_x + S_x̄)` with `g_y = g_x sqrt(ratio)`.
pub fn ratio_scaling(lattice: &LatticeParams, ratios: &[f64], input: &InputTemplate, omega: f64) -> Result<Vec<RatioRow>> {
    if let Some(r) = ratios.iter().find(|r| !(**r >= 0.0)) {
        return Err(Error::invalid("ratio", format!("ratios must be non-negative, got {r}")));
    }
    Ok(ratios
        .par_iter()
        .map(|&ratio| {
            let lat = LatticeParams { g_y: lattice.g_x * ratio.sqrt(), ..lattice.clone() };
            let (_, _, r) = scatter_nudged(&lat, input, omega);
            match r {
                Ok((_, a)) => {
                    let t = port_totals(&a);
                    let h = t.s_x + t.s_xbar;
                    RatioRow { ratio, value: Ok((t.s_y + t.s_ybar) / h), upward: t.s_y / h, downward: t.s_ybar / h }
                }
                Err(e) => RatioRow { ratio, value: Err(e), upward: f64::NAN, downward: f64::NAN },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3() -> LatticeParams {
        LatticeParams::new(15, 5, 1.0, 100.0, 100.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn center_port_has_no_shift() {
        let p = fig3();
        for det in [-1.2, 0.3, 1.7] {
            let inp = single_port_input(&p, p.omega_from_detuning(det), 3).unwrap();
            let a = scatter(&p, &inp).unwrap().0;
            let q = mean_shift(&a, &inp);
            assert!(q.dp_x.unwrap().abs() < 1e-10);
            assert!(q.dp_xbar.unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn mirror_ports_have_opposite_shifts() {
        let p = fig3();
        let w = p.omega_from_detuning(0.61);
        let q = |l| {
            let inp = single_port_input(&p, w, l).unwrap();
            mean_shift(&scatter(&p, &inp).unwrap().0, &inp)
        };
        let (a, b) = (q(1), q(5));
        assert!((a.dp_xbar.unwrap() + b.dp_xbar.unwrap()).abs() < 1e-9);
        assert!((a.s_xbar - b.s_xbar).abs() < 1e-10);
    }

    #[test]
    fn single_row_position_is_one() {
        let p = LatticeParams::new(4, 1, 1.0, 100.0, 100.0, 1.0, 1.0).unwrap();
        let inp = single_port_input(&p, p.omega_from_detuning(0.2), 1).unwrap();
        let q = mean_shift(&scatter(&p, &inp).unwrap().0, &inp);
        assert_eq!(q.p_x, Some(1.0));
        assert_eq!(q.dp_xbar, Some(0.0));
    }

    #[test]
    fn empty_direction_has_undefined_shift() {
        let p = LatticeParams::new(1, 1, 1.0, 100.0, 100.0, 1.0, 0.0).unwrap();
        let inp = single_port_input(&p, p.omega0, 1).unwrap();
        let q = mean_shift(&scatter(&p, &inp).unwrap().0, &inp);
        assert!(q.p_x.is_none() && q.dp_x.is_none());
        assert!(q.p_xbar.is_some());
    }

    #[test]
    fn transform_of_shifted_delta_is_linear_phase() {
        let mut v = vec![Complex64::new(0.0, 0.0); 6];
        v[3] = Complex64::new(1.0, 0.0);
        let h = port_transform(&v, 64);
        for (m, z) in h.iter().enumerate() {
            let k = -PI + 2.0 * PI * m as f64 / 64.0;
            assert!((z - Complex64::from_polar(1.0, -4.0 * k)).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_momentum_gaussian_has_no_momentum_shift() {
        let p = LatticeParams::new(5, 9, 1.0, 100.0, 100.0, 1.0, 1.0).unwrap();
        let w = p.omega_from_detuning(0.45);
        let inp = gaussian_input(&p, w, 1.5, 0.0, p.center_y()).unwrap();
        let a = scatter(&p, &inp).unwrap().0;
        let (s, spec) = momentum_qgh(&p, &inp, &a, Direction::BackwardX).unwrap();
        assert!(s.abs() < 1e-6, "{s}");
        for m in 0..spec.k_grid.len() {
            assert!((spec.h_re[m].norm() - spec.h_in[m].norm() * spec.r[m]).abs() < 1e-10);
        }
    }

    #[test]
    fn momentum_and_real_space_agree() {
        let p = LatticeParams::new(6, 13, 1.0, 100.0, 100.0, 1.0, 1.0).unwrap();
        let inp = gaussian_input(&p, p.omega_from_detuning(-0.7), 2.0, 0.1 * PI, p.center_y()).unwrap();
        let a = scatter(&p, &inp).unwrap().0;
        let (s, spec) = momentum_qgh(&p, &inp, &a, Direction::BackwardX).unwrap();
        let real = mean_shift(&a, &inp).dp_xbar.unwrap();
        if spec.is_clean() {
            assert!((s - real).abs() < 1e-3, "{s} vs {real}");
        }
        assert!(momentum_qgh(&p, &inp, &a, Direction::UpwardY).is_err());
    }

    #[test]
    fn synthetic_period_four() {
        let s: Vec<f64> = (0..100).map(|n| (2.0 * PI * n as f64 / 4.0).cos() * (-(n as f64) / 50.0).exp()).collect();
        match oscillation_period(&s).unwrap() {
            Oscillation::Peak(p) => {
                assert!((p.omega_peak - PI / 2.0).abs() <= p.bin_width);
                assert!((p.period - 4.0).abs() < 0.2);
            }
            Oscillation::Flat { .. } => panic!("expected a peak"),
        }
        assert!(oscillation_period(&s[..10]).is_err());
    }

    #[test]
    fn constant_series_is_flat() {
        assert!(matches!(oscillation_period(&[2.5; 40]).unwrap(), Oscillation::Flat { .. }));
    }

    #[test]
    fn sweep_order_and_transparency() {
        let p = LatticeParams::new(3, 3, 1.0, 100.0, 100.0, 1.0, 1.0).unwrap();
        let ws = [p.omega_from_detuning(1e6), p.omega_from_detuning(0.1), p.omega_from_detuning(2e6)];
        let tpl = [InputTemplate::SinglePort { l_in: 1 }, InputTemplate::SinglePort { l_in: 3 }];
        let rows = sweep_frequency(&p, &tpl, &ws);
        assert_eq!(rows.len(), 6);
        for (k, row) in rows.iter().enumerate() {
            assert_eq!(row.input, k / 3);
            assert_eq!(row.omega, ws[k % 3]);
        }
        assert!(rows[0].result.as_ref().unwrap().s_x >= 0.999);
        let (a, b) = (rows[1].result.as_ref().unwrap(), rows[4].result.as_ref().unwrap());
        assert!((a.s_x - b.s_x).abs() < 1e-10 && (a.s_xbar - b.s_xbar).abs() < 1e-10);
    }

    #[test]
    fn pole_is_nudged() {
        // Two atoms at phase pi have a lossless dark state exactly at omega0.
        let p = LatticeParams::new(2, 1, 1.0, 100.0 / PI, 100.0, 1.0, 0.0).unwrap();
        let p = LatticeParams { d: PI * p.c / p.omega0, ..p };
        let rows = sweep_frequency(&p, &[InputTemplate::SinglePort { l_in: 1 }], &[p.omega0]);
        assert!(rows[0].result.is_ok());
    }

    #[test]
    fn size_scan_first_point_matches_direct() {
        let p = LatticeParams::new(1, 3, 1.0, 100.0, 100.0, 1.0, 1.0).unwrap();
        let tpl = InputTemplate::SinglePort { l_in: 2 };
        let w = p.omega_from_detuning(0.3);
        let rows = size_scan(&p, &[1, 2, 5], &tpl, w).unwrap();
        let direct = port_totals(&scatter(&p, &single_port_input(&p, w, 2).unwrap()).unwrap().0);
        assert_eq!(rows[0].result.as_ref().unwrap(), &direct);
        assert!(size_scan(&p, &[2, 1], &tpl, w).is_err());
    }

    #[test]
    fn zero_ratio_gives_zero() {
        let p = LatticeParams::new(4, 3, 1.0, 100.0, 100.0, 1.0, 1.0).unwrap();
        let rows = ratio_scaling(&p, &[0.0, 1e-3], &InputTemplate::SinglePort { l_in: 2 }, p.omega_from_detuning(-0.078)).unwrap();
        assert_eq!(*rows[0].value.as_ref().unwrap(), 0.0);
        assert!(*rows[1].value.as_ref().unwrap() > 0.0);
    }

    #[test]
    fn resonant_kx_reproduces_band_value() {
        let p = LatticeParams::new(100, 5, 1.0, 100.0, 100.0 * PI / 6.0, 1.0, 1.0).unwrap();
        let y0 = most_subradiant_y(&p).unwrap();
        let det = crate::transfer::chain_dispersion(p.phi0(), PI / 4.0) + y0.re / p.gamma_x();
        let k = resonant_kx(&p, p.omega_from_detuning(det)).unwrap().unwrap();
        assert!((k - PI / 4.0).abs() < 1e-9);
    }
}
