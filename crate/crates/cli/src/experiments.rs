//! Experiment drivers. Each returns result tables plus a short stdout report.

use std::f64::consts::PI;

use rayon::prelude::*;

use wqed2d::green::port_totals;
use wqed2d::hamiltonians::{build_heff_2d, build_inverse_h1d, inverse_chain_coefficients, PhaseMode};
use wqed2d::model::{Direction, LatticeParams};
use wqed2d::qgh::{
    mean_shift, momentum_qgh, oscillation_period, oscillation_period_differenced, ratio_scaling, resonant_kx,
    scatter_nudged, size_scan, sweep_frequency, InputTemplate, Oscillation, QghResult,
};
use wqed2d::spectral::{
    eigendecompose, eigendecompose_matrix, fit_scale_free, inverse_energy_point, kronecker_decomposition,
    ribbon_bands, scale_free_curve, theta_grid, FitForm, SpectralDecomposition,
};
use wqed2d::transfer::{oscillation_period_law, solve_network_with_fault, AssemblyFault};
use wqed2d::Error;

use crate::config::{Config, Experiment, InputKind, SpectrumKind};
use crate::error::CliError;
use crate::table::{Cell, ResultTable};

pub struct Outcome {
    pub tables: Vec<ResultTable>,
    pub report: Vec<String>,
    /// Set when the experiment ran but its check failed.
    pub failure: Option<CliError>,
}

impl Outcome {
    fn tables(tables: Vec<ResultTable>) -> Self {
        Outcome { tables, report: Vec::new(), failure: None }
    }
}

const DETUNING: &str = "Gamma_x";

pub fn run(exp: Experiment, cfg: &Config) -> Result<Outcome, CliError> {
    let lattice = cfg.lattice.params()?;
    match exp {
        Experiment::Scatter => scatter_table(cfg, &lattice),
        Experiment::Sweep => sweep(cfg, &lattice),
        Experiment::SizeScan => size(cfg, &lattice),
        Experiment::RatioScan => ratio(cfg, &lattice),
        Experiment::KyScan => ky_scan(cfg, &lattice),
        Experiment::Spectrum => spectrum(cfg, &lattice),
        Experiment::ScaleFree => scale_free(cfg),
        Experiment::RibbonBands => ribbon(cfg, &lattice),
        Experiment::OracleCheck => oracle(cfg, &lattice),
    }
}

fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![start];
    }
    (0..points).map(|k| start + (stop - start) * k as f64 / (points - 1) as f64).collect()
}

fn detuning_grid(cfg: &Config) -> Result<Vec<f64>, CliError> {
    let s = &cfg.sweep;
    if s.points == 0 {
        return Err(CliError::schema("sweep.points", "grid must be non-empty"));
    }
    if !(s.start.0.is_finite() && s.stop.0.is_finite()) {
        return Err(CliError::schema("sweep.start", "grid bounds must be finite"));
    }
    Ok(linspace(s.start.0, s.stop.0, s.points))
}

/// Injection templates with their column labels.
fn templates(cfg: &Config, lattice: &LatticeParams) -> Result<Vec<(String, InputTemplate)>, CliError> {
    let s = &cfg.sweep;
    match s.input {
        InputKind::SinglePort => {
            let ports: Vec<usize> = if s.ports.is_empty() { (1..=lattice.n_y).collect() } else { s.ports.clone() };
            for &l in &ports {
                if l == 0 || l > lattice.n_y {
                    return Err(CliError::schema("sweep.ports", format!("port {l} outside 1..={}", lattice.n_y)));
                }
            }
            Ok(ports.into_iter().map(|l| (format!("l{l}"), InputTemplate::SinglePort { l_in: l })).collect())
        }
        InputKind::Gaussian => {
            if !(s.sigma.0 > 0.0) {
                return Err(CliError::schema("sweep.sigma", "must be positive"));
            }
            let center = s.center.map_or(lattice.center_y(), |c| c.0);
            Ok(vec![("gaussian".into(), InputTemplate::Gaussian { sigma: s.sigma.0, k_y: s.ky.0, center })])
        }
    }
}

fn solved<T>(section: &str, lattice: &LatticeParams, omega: f64, r: &Result<T, Error>) -> Result<(), CliError> {
    match r {
        Ok(_) => Ok(()),
        Err(Error::Pole { .. }) => Err(CliError::Pole(format!(
            "{section}: unrecoverable pole at detuning {} after nudging",
            lattice.detuning(omega)
        ))),
        Err(e) => Err(CliError::from_core(section, e.clone())),
    }
}

fn scatter_table(cfg: &Config, lattice: &LatticeParams) -> Result<Outcome, CliError> {
    let omega = lattice.omega_from_detuning(cfg.scatter.detuning.0);
    let mut t = ResultTable::new(
        "",
        &[("input", "label"), ("direction", "label"), ("index", "waveguide"), ("chi_re", "1"), ("chi_im", "1"), ("probability", "1")],
    );
    let mut report = Vec::new();
    for (label, tpl) in templates(cfg, lattice)? {
        let (w, nudged, r) = scatter_nudged(lattice, &tpl, omega);
        solved("scatter", lattice, w, &r)?;
        let (_, amps) = r.unwrap();
        for dir in Direction::ALL {
            for (i, z) in amps.get(dir).iter().enumerate() {
                t.push(vec![label.as_str().into(), dir.label().into(), (i + 1).into(), z.re.into(), z.im.into(), z.norm_sqr().into()]);
            }
        }
        let tot = port_totals(&amps);
        report.push(format!(
            "{label}: S_x={:.6} S_xbar={:.6} S_y={:.6} S_ybar={:.6} total={:.12}{}",
            tot.s_x,
            tot.s_xbar,
            tot.s_y,
            tot.s_ybar,
            tot.total(),
            if nudged { " (nudged off a pole)" } else { "" }
        ));
    }
    Ok(Outcome { tables: vec![t], report, failure: None })
}

fn sweep(cfg: &Config, lattice: &LatticeParams) -> Result<Outcome, CliError> {
    let dets = detuning_grid(cfg)?;
    let grid: Vec<f64> = dets.iter().map(|&d| lattice.omega_from_detuning(d)).collect();
    let tpls = templates(cfg, lattice)?;
    let inputs: Vec<InputTemplate> = tpls.iter().map(|t| t.1).collect();
    let rows = sweep_frequency(lattice, &inputs, &grid);
    for r in &rows {
        solved("sweep", lattice, r.omega_solved, &r.result)?;
    }
    type Pick = fn(&QghResult) -> Option<f64>;
    let picks: [(&str, &str, Pick); 4] = [
        ("s_x", "1", |q| Some(q.s_x)),
        ("s_xbar", "1", |q| Some(q.s_xbar)),
        ("dp_x", "port spacing", |q| q.dp_x),
        ("dp_xbar", "port spacing", |q| q.dp_xbar),
    ];
    let mut tables = Vec::new();
    for (name, unit, pick) in picks {
        let mut t = ResultTable::new(name, &[("detuning", DETUNING)]);
        for (label, _) in &tpls {
            t.add_column(label.clone(), unit);
        }
        t.add_column("nudged", "count");
        for (k, &d) in dets.iter().enumerate() {
            let mut row: Vec<Cell> = vec![d.into()];
            let mut nudged = 0;
            for i in 0..tpls.len() {
                let r = &rows[i * grid.len() + k];
                row.push(pick(r.result.as_ref().unwrap()).into());
                nudged += r.nudged as usize;
            }
            row.push(nudged.into());
            t.push(row);
        }
        tables.push(t);
    }
    let nudged = rows.iter().filter(|r| r.nudged).count();
    let mut out = Outcome::tables(tables);
    out.report.push(format!("{} points x {} inputs, {nudged} nudged off poles", grid.len(), tpls.len()));
    Ok(out)
}

fn oscillation_cells(o: &Oscillation) -> Vec<Cell> {
    match o {
        Oscillation::Peak(p) => vec![p.period.into(), p.omega_peak.into(), p.bin_width.into(), p.prominence.into(), true.into()],
        Oscillation::Flat { prominence, .. } => {
            vec![f64::NAN.into(), f64::NAN.into(), f64::NAN.into(), (*prominence).into(), false.into()]
        }
    }
}

fn size(cfg: &Config, lattice: &LatticeParams) -> Result<Outcome, CliError> {
    let sc = &cfg.size_scan;
    if sc.n_x.is_empty() || sc.n_x.contains(&0) {
        return Err(CliError::schema("size_scan.n_x", "need a non-empty list of positive sizes"));
    }
    let omega = lattice.omega_from_detuning(sc.detuning.0);
    let mut t = ResultTable::new(
        "",
        &[
            ("input", "label"),
            ("n_x", "atoms"),
            ("s_x", "1"),
            ("s_xbar", "1"),
            ("s_y", "1"),
            ("s_ybar", "1"),
            ("total", "1"),
            ("nudged", "flag"),
        ],
    );
    let mut per = ResultTable::new(
        "period",
        &[
            ("input", "label"),
            ("series", "label"),
            ("method", "label"),
            ("period", "atoms"),
            ("omega_peak", "rad/atom"),
            ("bin_width", "rad/atom"),
            ("prominence", "1"),
            ("peaked", "flag"),
            ("predicted_period", "atoms"),
        ],
    );
    let predicted = resonant_kx(lattice, omega)
        .map_err(|e| CliError::from_core("size_scan", e))?
        .map(oscillation_period_law);
    let mut report = Vec::new();
    for (label, tpl) in templates(cfg, lattice)? {
        let rows = size_scan(lattice, &sc.n_x, &tpl, omega).map_err(|e| CliError::from_core("size_scan", e))?;
        let mut sx = Vec::new();
        let mut sxb = Vec::new();
        for r in &rows {
            solved("size_scan", lattice, omega, &r.result)?;
            let p = r.result.as_ref().unwrap();
            sx.push(p.s_x);
            sxb.push(p.s_xbar);
            t.push(vec![
                label.as_str().into(),
                r.n_x.into(),
                p.s_x.into(),
                p.s_xbar.into(),
                p.s_y.into(),
                p.s_ybar.into(),
                p.total().into(),
                r.nudged.into(),
            ]);
        }
        for (series, values) in [("s_x", &sx), ("s_xbar", &sxb)] {
            let analyses: [(&str, fn(&[f64]) -> wqed2d::Result<Oscillation>); 2] =
                [("raw", oscillation_period), ("differenced", oscillation_period_differenced)];
            for (method, f) in analyses {
                let mut row: Vec<Cell> = vec![label.as_str().into(), series.into(), method.into()];
                match f(values) {
                    Ok(o) => {
                        if let (Oscillation::Peak(p), "s_x", "differenced") = (&o, series, method) {
                            report.push(format!("{label}: S_x oscillation period {:.4} atoms", p.period));
                        }
                        row.extend(oscillation_cells(&o));
                    }
                    Err(_) => row.extend([f64::NAN.into(), f64::NAN.into(), f64::NAN.into(), f64::NAN.into(), false.into()]),
                }
                row.push(predicted.into());
                per.push(row);
            }
        }
    }
    match predicted {
        Some(p) => report.push(format!("predicted period from the resonant k_x: {p:.4} atoms")),
        None => report.push("detuning lies in the gap: no propagating k_x".into()),
    }
    Ok(Outcome { tables: vec![t, per], report, failure: None })
}

fn ratio(cfg: &Config, lattice: &LatticeParams) -> Result<Outcome, CliError> {
    let rc = &cfg.ratio_scan;
    if rc.ratios.is_empty() {
        return Err(CliError::schema("ratio_scan.ratios", "need at least one ratio"));
    }
    let ratios: Vec<f64> = rc.ratios.iter().map(|r| r.0).collect();
    let omega = lattice.omega_from_detuning(rc.detuning.0);
    let mut t = ResultTable::new(
        "",
        &[
            ("input", "label"),
            ("ratio", "Gamma_y/Gamma_x"),
            ("value", "1"),
            ("normalized", "1"),
            ("upward", "1"),
            ("downward", "1"),
        ],
    );
    for (label, tpl) in templates(cfg, lattice)? {
        let rows = ratio_scaling(lattice, &ratios, &tpl, omega).map_err(|e| CliError::from_core("ratio_scan", e))?;
        for r in rows {
            solved("ratio_scan", lattice, omega, &r.value)?;
            let v = *r.value.as_ref().unwrap();
            t.push(vec![
                label.as_str().into(),
                r.ratio.into(),
                v.into(),
                (v / r.ratio).into(),
                (r.upward / r.ratio).into(),
                (r.downward / r.ratio).into(),
            ]);
        }
    }
    Ok(Outcome::tables(vec![t]))
}

fn ky_scan(cfg: &Config, lattice: &LatticeParams) -> Result<Outcome, CliError> {
    let s = &cfg.sweep;
    if !(s.sigma.0 > 0.0) {
        return Err(CliError::schema("sweep.sigma", "must be positive"));
    }
    let kc = &cfg.ky_scan;
    if kc.points == 0 {
        return Err(CliError::schema("ky_scan.points", "grid must be non-empty"));
    }
    let kys = linspace(kc.start.0, kc.stop.0, kc.points);
    let dets = detuning_grid(cfg)?;
    let center = s.center.map_or(lattice.center_y(), |c| c.0);
    let jobs: Vec<(f64, f64)> = kys.iter().flat_map(|&k| dets.iter().map(move |&d| (k, d))).collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(k_y, d)| {
            let tpl = InputTemplate::Gaussian { sigma: s.sigma.0, k_y, center };
            let (w, nudged, r) = scatter_nudged(lattice, &tpl, lattice.omega_from_detuning(d));
            let r = r.map(|(inp, amps)| {
                let q = mean_shift(&amps, &inp);
                let mom = momentum_qgh(lattice, &inp, &amps, Direction::BackwardX).ok();
                (q, mom.filter(|m| m.1.is_clean()).map(|m| m.0))
            });
            (w, nudged, r)
        })
        .collect();
    let mut t = ResultTable::new(
        "",
        &[
            ("ky", "rad/port"),
            ("detuning", DETUNING),
            ("s_x", "1"),
            ("s_xbar", "1"),
            ("s_y", "1"),
            ("s_ybar", "1"),
            ("dp_x", "port spacing"),
            ("dp_xbar", "port spacing"),
            ("dp_xbar_momentum", "port spacing"),
            ("nudged", "flag"),
        ],
    );
    for (&(k, d), (w, nudged, r)) in jobs.iter().zip(&results) {
        solved("ky_scan", lattice, *w, r)?;
        let (q, mom) = r.as_ref().unwrap();
        t.push(vec![
            k.into(),
            d.into(),
            q.s_x.into(),
            q.s_xbar.into(),
            q.s_y.into(),
            q.s_ybar.into(),
            q.dp_x.into(),
            q.dp_xbar.into(),
            (*mom).into(),
            (*nudged).into(),
        ]);
    }
    Ok(Outcome::tables(vec![t]))
}

fn spectrum(cfg: &Config, lattice: &LatticeParams) -> Result<Outcome, CliError> {
    let sp = &cfg.spectrum;
    if sp.hamiltonian == SpectrumKind::Effective {
        let h = build_heff_2d(lattice, PhaseMode::Markov).map_err(|e| CliError::from_core("lattice", e))?;
        let dec = eigendecompose(&h).map_err(|e| CliError::from_core("spectrum", e))?;
        let gx = lattice.gamma_x();
        let mut order: Vec<usize> = (0..dec.len()).collect();
        order.sort_by(|&a, &b| {
            let (x, y) = (dec.eigenvalues[a], dec.eigenvalues[b]);
            x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im))
        });
        let mut t = ResultTable::new(
            "",
            &[("index", "1"), ("detuning", DETUNING), ("decay", DETUNING), ("ipr", "1"), ("flagged", "flag")],
        );
        for (i, &k) in order.iter().enumerate() {
            let e = dec.eigenvalues[k];
            t.push(vec![(i + 1).into(), lattice.detuning(e.re).into(), (e.im / gx).into(), dec.ipr[k].into(), dec.flagged[k].into()]);
        }
        return Ok(Outcome::tables(vec![t]));
    }
    if sp.n < 2 {
        return Err(CliError::schema("spectrum.n", "need at least two sites"));
    }
    let gamma = sp.gamma.0;
    let co = inverse_chain_coefficients(gamma, sp.phi.0).map_err(|e| CliError::from_core("spectrum", e))?;
    let h1 = build_inverse_h1d(sp.n, &co).map_err(|e| CliError::from_core("spectrum", e))?;
    let d1 = eigendecompose_matrix(h1.view()).map_err(|e| CliError::from_core("spectrum", e))?;
    let (dec, forms): (SpectralDecomposition, &[FitForm]) = match sp.hamiltonian {
        SpectrumKind::Inverse1d => (d1, &[FitForm::Edge]),
        _ => (kronecker_decomposition(&d1, &d1, true), &[FitForm::CornerTwo, FitForm::CornerFour]),
    };
    let mut t = ResultTable::new(
        "",
        &[
            ("rank", "1"),
            ("e_re", "1/gamma"),
            ("e_im", "1/gamma"),
            ("inverse_energy", "1"),
            ("decay_ratio", "1"),
            ("ipr", "1"),
            ("flagged", "flag"),
        ],
    );
    for f in forms {
        let n = form_name(*f);
        t.add_column(format!("{n}_f"), "1");
        t.add_column(format!("{n}_residual"), "1");
    }
    for (rank, &k) in dec.by_ipr_desc().iter().enumerate() {
        let e = dec.eigenvalues[k];
        let (x, y) = inverse_energy_point(gamma, e);
        let mut row: Vec<Cell> =
            vec![(rank + 1).into(), e.re.into(), e.im.into(), x.into(), y.into(), dec.ipr[k].into(), dec.flagged[k].into()];
        for f in forms {
            if rank < sp.fit_top {
                let state = dec.state(k);
                let fit = fit_scale_free(state.as_slice().unwrap(), *f).map_err(|e| CliError::from_core("spectrum", e))?;
                row.push(fit.f.into());
                row.push(fit.residual.into());
            } else {
                row.push(f64::NAN.into());
                row.push(f64::NAN.into());
            }
        }
        t.push(row);
    }
    Ok(Outcome::tables(vec![t]))
}

fn form_name(f: FitForm) -> &'static str {
    match f {
        FitForm::Edge => "edge",
        FitForm::CornerTwo => "corner_two",
        FitForm::CornerFour => "corner_four",
    }
}

fn scale_free(cfg: &Config) -> Result<Outcome, CliError> {
    let sf = &cfg.scale_free;
    if sf.points == 0 {
        return Err(CliError::schema("scale_free.points", "grid must be non-empty"));
    }
    let co = inverse_chain_coefficients(sf.gamma.0, sf.phi.0).map_err(|e| CliError::from_core("scale_free", e))?;
    let curve = scale_free_curve(&co, &theta_grid(sf.points), sf.n).map_err(|e| CliError::from_core("scale_free", e))?;
    let mut t = ResultTable::new("", &[("theta", "rad"), ("f", "1"), ("inverse_energy", "1"), ("decay_ratio", "1")]);
    for p in &curve.points {
        t.push(vec![p.theta.into(), p.f.into(), p.inverse_energy.into(), p.decay_ratio.into()]);
    }
    let mut out = Outcome::tables(vec![t]);
    out.report.push(format!("{} curve points, {} angles dropped where F diverges", curve.points.len(), curve.dropped.len()));
    Ok(out)
}

fn ribbon(cfg: &Config, lattice: &LatticeParams) -> Result<Outcome, CliError> {
    let rb = &cfg.ribbon_bands;
    if rb.points == 0 {
        return Err(CliError::schema("ribbon_bands.points", "grid must be non-empty"));
    }
    let phi = lattice.phi0();
    // Grid over (-pi, pi] in units of 1/d.
    let ks: Vec<f64> = (0..rb.points).map(|c| -PI + 2.0 * PI * (c + 1) as f64 / rb.points as f64).collect();
    let keep: Vec<f64> = ks.iter().copied().filter(|k| (k.cos() - phi.cos()).abs() >= rb.epsilon.0).collect();
    let bands = ribbon_bands(lattice, &keep).map_err(|e| CliError::from_core("ribbon_bands", e))?;
    let mut t = ResultTable::new("", &[("kx", "rad/d")]);
    for n in 1..=lattice.n_y {
        t.add_column(format!("band_{n}"), DETUNING);
    }
    let mut col = 0;
    for &k in &ks {
        let mut row: Vec<Cell> = vec![k.into()];
        if keep.get(col) == Some(&k) {
            row.extend((0..lattice.n_y).map(|n| Cell::from(lattice.detuning(bands[[n, col]]))));
            col += 1;
        } else {
            row.extend((0..lattice.n_y).map(|_| Cell::from(f64::NAN)));
        }
        t.push(row);
    }
    Ok(Outcome::tables(vec![t]))
}

fn oracle(cfg: &Config, lattice: &LatticeParams) -> Result<Outcome, CliError> {
    if lattice.n_x > 10 || lattice.n_y > 10 {
        return Err(CliError::schema("lattice", "oracle_check supports lattices up to 10 x 10"));
    }
    if cfg.sweep.input != InputKind::SinglePort {
        return Err(CliError::schema("sweep.input", "oracle_check injects at single ports"));
    }
    let fault = match cfg.oracle_check.fault {
        Some(f) => {
            if f.j == 0 || f.j > lattice.n_x || f.l == 0 || f.l > lattice.n_y {
                return Err(CliError::schema("oracle_check.fault", "atom outside the lattice"));
            }
            Some(AssemblyFault { j: f.j, l: f.l, scale: f.scale.0 })
        }
        None => None,
    };
    let tol = cfg.oracle_check.tolerance.0;
    let dets = detuning_grid(cfg)?;
    let tpls = templates(cfg, lattice)?;
    let jobs: Vec<(usize, f64)> = (0..tpls.len()).flat_map(|i| dets.iter().map(move |&d| (i, d))).collect();
    let per_point: Vec<Result<Vec<[f64; 4]>, CliError>> = jobs
        .par_iter()
        .map(|&(i, d)| {
            let tpl = tpls[i].1;
            let InputTemplate::SinglePort { l_in } = tpl else { unreachable!() };
            let (w, _, r) = scatter_nudged(lattice, &tpl, lattice.omega_from_detuning(d));
            solved("oracle_check", lattice, w, &r)?;
            let g = r.unwrap().1;
            let tm = solve_network_with_fault(lattice, w, l_in, fault)
                .map_err(|e| CliError::from_core("oracle_check", e))?
                .amplitudes();
            let n = lattice.n_x.max(lattice.n_y);
            let mut out = vec![[f64::NAN; 4]; n];
            for (c, dir) in Direction::ALL.into_iter().enumerate() {
                let (pg, pt) = (g.probabilities(dir), tm.probabilities(dir));
                for (k, (a, b)) in pg.iter().zip(pt.iter()).enumerate() {
                    out[k][c] = (a - b).abs();
                }
            }
            Ok(out)
        })
        .collect();
    let mut worst: Vec<[f64; 4]> = vec![[0.0; 4]; lattice.n_x.max(lattice.n_y)];
    for r in per_point {
        for (k, row) in r?.into_iter().enumerate() {
            for c in 0..4 {
                if !row[c].is_nan() {
                    worst[k][c] = worst[k][c].max(row[c]);
                }
            }
        }
    }
    let mut t = ResultTable::new(
        "",
        &[("direction", "label"), ("index", "waveguide"), ("max_discrepancy", "1"), ("pass", "flag")],
    );
    let mut top = (0.0, "x", 0);
    for (c, dir) in Direction::ALL.into_iter().enumerate() {
        let count = if dir.is_horizontal() { lattice.n_y } else { lattice.n_x };
        for (k, w) in worst.iter().enumerate().take(count) {
            let v = w[c];
            if v > top.0 || top.2 == 0 {
                top = (v, dir.label(), k + 1);
            }
            t.push(vec![dir.label().into(), (k + 1).into(), v.into(), (v <= tol).into()]);
        }
    }
    let pass = top.0 <= tol;
    let line = format!(
        "oracle_check: worst port {}[{}] max |P_green - P_transfer| = {:.3e} over {} points x {} inputs, tolerance {tol:.0e}: {}",
        top.1,
        top.2,
        top.0,
        dets.len(),
        tpls.len(),
        if pass { "PASS" } else { "FAIL" }
    );
    let failure = (!pass).then(|| CliError::OracleMismatch(line.clone()));
    Ok(Outcome { tables: vec![t], report: vec![line], failure })
}
