//! JSON experiment configuration: schema, defaults and dotted-path overrides.
//!
//! Every real-valued field accepts a JSON number or a string such as `"0.1pi"`,
//! `"pi/6"` or `"-3pi/4"`. Frequencies are detunings `(omega - omega0) / Gamma_x`.

use std::f64::consts::PI;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use wqed2d::model::LatticeParams;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Num(pub f64);

/// Parses a decimal or a multiple of pi (`pi`, `0.1pi`, `-pi/2`, `3*pi/4`).
pub fn parse_num(s: &str) -> Option<f64> {
    let t: String = s.trim().to_ascii_lowercase().chars().filter(|c| !c.is_whitespace()).collect();
    let Some(at) = t.find("pi") else {
        return t.parse().ok();
    };
    let head = t[..at].trim_end_matches('*');
    let coef = match head {
        "" | "+" => 1.0,
        "-" => -1.0,
        h => h.parse::<f64>().ok()?,
    };
    let tail = &t[at + 2..];
    let div = if tail.is_empty() { 1.0 } else { tail.strip_prefix('/')?.parse::<f64>().ok()? };
    Some(coef * PI / div)
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Num;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a multiple of pi such as \"0.1pi\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Num, E> {
                Ok(Num(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Num, E> {
                parse_num(v).map(Num).ok_or_else(|| E::custom(format!("cannot read {v:?} as a number")))
            }
        }
        d.deserialize_any(V)
    }
}

fn num(x: f64) -> Num {
    Num(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Scatter,
    Sweep,
    SizeScan,
    RatioScan,
    KyScan,
    Spectrum,
    ScaleFree,
    RibbonBands,
    OracleCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Scatter,
        Experiment::Sweep,
        Experiment::SizeScan,
        Experiment::RatioScan,
        Experiment::KyScan,
        Experiment::Spectrum,
        Experiment::ScaleFree,
        Experiment::RibbonBands,
        Experiment::OracleCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Scatter => "scatter",
            Experiment::Sweep => "sweep",
            Experiment::SizeScan => "size_scan",
            Experiment::RatioScan => "ratio_scan",
            Experiment::KyScan => "ky_scan",
            Experiment::Spectrum => "spectrum",
            Experiment::ScaleFree => "scale_free",
            Experiment::RibbonBands => "ribbon_bands",
            Experiment::OracleCheck => "oracle_check",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub experiment: Option<Experiment>,
    pub lattice: LatticeSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub scatter: ScatterSection,
    #[serde(default)]
    pub size_scan: SizeScanSection,
    #[serde(default)]
    pub ratio_scan: RatioScanSection,
    #[serde(default)]
    pub ky_scan: KyScanSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub scale_free: ScaleFreeSection,
    #[serde(default)]
    pub ribbon_bands: RibbonSection,
    #[serde(default)]
    pub oracle_check: OracleSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn d_one() -> Num {
    num(1.0)
}
fn d_c() -> Num {
    num(100.0)
}

/// Lattice geometry. `omega0` defaults to `c / d` (phase 1 per spacing);
/// `phi0 = omega0 d / c` may be given instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub n_x: usize,
    pub n_y: usize,
    #[serde(default = "d_one")]
    pub d: Num,
    #[serde(default = "d_c")]
    pub c: Num,
    #[serde(default)]
    pub omega0: Option<Num>,
    #[serde(default)]
    pub phi0: Option<Num>,
    #[serde(default = "d_one")]
    pub g_x: Num,
    #[serde(default = "d_one")]
    pub g_y: Num,
}

impl LatticeSection {
    pub fn params(&self) -> Result<LatticeParams, CliError> {
        let omega0 = match (self.omega0, self.phi0) {
            (Some(_), Some(_)) => return Err(CliError::schema("lattice.phi0", "give either omega0 or phi0, not both")),
            (Some(w), None) => w.0,
            (None, Some(p)) => p.0 * self.c.0 / self.d.0,
            (None, None) => self.c.0 / self.d.0,
        };
        LatticeParams::new(self.n_x, self.n_y, self.d.0, self.c.0, omega0, self.g_x.0, self.g_y.0)
            .map_err(|e| CliError::from_core("lattice", e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    SinglePort,
    Gaussian,
}

/// Frequency grid and injection recipe shared by most experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub start: Num,
    pub stop: Num,
    pub points: usize,
    pub input: InputKind,
    /// Injection ports for `single_port`; empty means every port.
    pub ports: Vec<usize>,
    pub sigma: Num,
    pub ky: Num,
    /// Wavepacket center; `null` means the middle of the port set.
    pub center: Option<Num>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            start: num(-3.0),
            stop: num(3.0),
            points: 200,
            input: InputKind::SinglePort,
            ports: Vec::new(),
            sigma: num(3.0),
            ky: num(0.0),
            center: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatterSection {
    pub detuning: Num,
}

impl Default for ScatterSection {
    fn default() -> Self {
        ScatterSection { detuning: num(0.0) }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SizeScanSection {
    pub detuning: Num,
    pub n_x: Vec<usize>,
}

impl Default for SizeScanSection {
    fn default() -> Self {
        SizeScanSection { detuning: num(-3.445), n_x: (1..=100).collect() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatioScanSection {
    pub detuning: Num,
    /// Values of `Gamma_y / Gamma_x`.
    pub ratios: Vec<Num>,
}

impl Default for RatioScanSection {
    fn default() -> Self {
        RatioScanSection { detuning: num(-0.078), ratios: [1e-5, 1e-4, 1e-3, 1e-2, 1e-1].map(num).to_vec() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KyScanSection {
    pub start: Num,
    pub stop: Num,
    pub points: usize,
}

impl Default for KyScanSection {
    fn default() -> Self {
        KyScanSection { start: num(-0.5 * PI), stop: num(0.5 * PI), points: 41 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    /// Markov effective Hamiltonian of the configured lattice.
    Effective,
    /// Inverse of the 1D chain coupling operator.
    #[serde(rename = "inverse_1d")]
    Inverse1d,
    /// Kronecker-sum inverse operator on an n x n square.
    #[serde(rename = "inverse_2d")]
    Inverse2d,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub hamiltonian: SpectrumKind,
    pub n: usize,
    pub phi: Num,
    pub gamma: Num,
    /// Number of highest-IPR states fitted with the scale-free profile.
    pub fit_top: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection { hamiltonian: SpectrumKind::Effective, n: 30, phi: num(PI / 2.0), gamma: num(0.01), fit_top: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleFreeSection {
    pub n: usize,
    pub phi: Num,
    pub gamma: Num,
    pub points: usize,
}

impl Default for ScaleFreeSection {
    fn default() -> Self {
        ScaleFreeSection { n: 600, phi: num(PI / 2.0), gamma: num(0.01), points: 2000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RibbonSection {
    pub points: usize,
    /// Grid points with `|cos k - cos phi0|` below this are left empty.
    pub epsilon: Num,
}

impl Default for RibbonSection {
    fn default() -> Self {
        RibbonSection { points: 201, epsilon: num(1e-8) }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSection {
    pub j: usize,
    pub l: usize,
    pub scale: Num,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub tolerance: Num,
    /// Corrupts one atom of the transfer-matrix assembly (negative control).
    pub fault: Option<FaultSection>,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection { tolerance: num(1e-8), fault: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<String>,
    pub format: Format,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { path: None, format: Format::Csv }
    }
}

/// Template used only to check that override keys exist.
fn skeleton() -> Value {
    let cfg = Config {
        experiment: None,
        lattice: LatticeSection {
            n_x: 0,
            n_y: 0,
            d: d_one(),
            c: d_c(),
            omega0: None,
            phi0: None,
            g_x: d_one(),
            g_y: d_one(),
        },
        sweep: Default::default(),
        scatter: Default::default(),
        size_scan: Default::default(),
        ratio_scan: Default::default(),
        ky_scan: Default::default(),
        spectrum: Default::default(),
        scale_free: Default::default(),
        ribbon_bands: Default::default(),
        oracle_check: Default::default(),
        output: Default::default(),
    };
    serde_json::to_value(cfg).expect("config serializes")
}

/// Override values are read as JSON when possible, otherwise kept as strings
/// (so `0.1pi` reaches the numeric parser).
fn override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Applies `key=value` with a dotted key to the raw document.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::schema(spec, "override must look like key=value"))?;
    let parts: Vec<&str> = key.split('.').collect();
    let skel = skeleton();
    let mut node = &skel;
    for (i, p) in parts.iter().enumerate() {
        match node {
            Value::Object(m) => match m.get(*p) {
                Some(v) => node = v,
                None => return Err(CliError::schema(key, format!("unknown key `{}`", parts[..=i].join(".")))),
            },
            // Optional sections (null in the template) are checked on deserialization.
            Value::Null => break,
            _ => return Err(CliError::schema(key, format!("`{}` is not a section", parts[..i].join(".")))),
        }
    }
    let mut target = doc;
    for p in &parts[..parts.len() - 1] {
        let obj = target
            .as_object_mut()
            .ok_or_else(|| CliError::schema(key, "config root must be an object"))?;
        let entry = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Default::default()));
        if entry.is_null() {
            *entry = Value::Object(Default::default());
        }
        target = entry;
    }
    target
        .as_object_mut()
        .ok_or_else(|| CliError::schema(key, "parent is not an object"))?
        .insert(parts[parts.len() - 1].to_string(), override_value(raw));
    Ok(())
}

/// Deserializes with the failing field path in the error message.
pub fn from_value(doc: Value) -> Result<Config, CliError> {
    serde_path_to_error::deserialize::<_, Config>(doc).map_err(|e| {
        let mut path = e.path().to_string();
        let msg = e.inner().to_string();
        if let Some(rest) = msg.strip_prefix("missing field `") {
            let field = rest.split('`').next().unwrap_or_default();
            path = if path == "." || path.is_empty() { field.to_string() } else { format!("{path}.{field}") };
        }
        CliError::schema(&path, msg)
    })
}

pub fn parse(text: &str, overrides: &[String]) -> Result<Config, CliError> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| CliError::schema("<config>", format!("invalid JSON: {e}")))?;
    if !doc.is_object() {
        return Err(CliError::schema("<config>", "top level must be an object"));
    }
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    from_value(doc)
}

impl Config {
    /// SHA-256 of the fully resolved configuration.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pi_multiples() {
        assert_eq!(parse_num("pi"), Some(PI));
        assert!((parse_num("0.1pi").unwrap() - 0.1 * PI).abs() < 1e-15);
        assert!((parse_num("-pi/2").unwrap() + PI / 2.0).abs() < 1e-15);
        assert!((parse_num("3*pi/4").unwrap() - 0.75 * PI).abs() < 1e-15);
        assert_eq!(parse_num("2.5"), Some(2.5));
        assert_eq!(parse_num("pie"), None);
        assert_eq!(parse_num("x"), None);
    }

    #[test]
    fn defaults_fill_everything_but_dimensions() {
        let c = parse(r#"{"lattice": {"n_x": 3, "n_y": 2}}"#, &[]).unwrap();
        assert_eq!(c.sweep.points, 200);
        assert_eq!(c.lattice.params().unwrap().omega0, 100.0);
        assert_eq!(c.output.format, Format::Csv);
    }

    #[test]
    fn missing_dimension_names_its_path() {
        let e = parse(r#"{"lattice": {"n_y": 2}}"#, &[]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("lattice.n_x"), "{e}");
    }

    #[test]
    fn unknown_field_names_its_path() {
        let e = parse(r#"{"lattice": {"n_x": 1, "n_y": 2}, "sweep": {"pionts": 3}}"#, &[]).unwrap_err();
        assert!(e.to_string().contains("sweep"), "{e}");
    }

    #[test]
    fn overrides_use_dotted_paths() {
        let ov = vec!["sweep.ky=0.1pi".to_string(), "lattice.n_x=7".to_string(), "sweep.ports=[2,3]".to_string()];
        let c = parse(r#"{"lattice": {"n_x": 1, "n_y": 5}}"#, &ov).unwrap();
        assert!((c.sweep.ky.0 - 0.1 * PI).abs() < 1e-15);
        assert_eq!(c.lattice.n_x, 7);
        assert_eq!(c.sweep.ports, vec![2, 3]);
        let c = parse(r#"{"lattice": {"n_x": 1, "n_y": 5}}"#, &["oracle_check.fault={\"j\":1,\"l\":1,\"scale\":0.5}".into()]).unwrap();
        assert_eq!(c.oracle_check.fault.unwrap().j, 1);
        let e = parse(r#"{"lattice": {"n_x": 1, "n_y": 5}}"#, &["sweep.kyy=1".into()]).unwrap_err();
        assert!(e.to_string().contains("sweep.kyy"), "{e}");
    }

    #[test]
    fn phase_or_frequency() {
        let c = parse(r#"{"lattice": {"n_x": 1, "n_y": 1, "phi0": "pi/6"}}"#, &[]).unwrap();
        assert!((c.lattice.params().unwrap().phi0() - PI / 6.0).abs() < 1e-14);
        let e = parse(r#"{"lattice": {"n_x": 1, "n_y": 1, "phi0": 1, "omega0": 100}}"#, &[]).unwrap().lattice.params();
        assert!(e.unwrap_err().to_string().contains("lattice.phi0"));
    }

    #[test]
    fn hash_tracks_resolved_values() {
        let a = parse(r#"{"lattice": {"n_x": 1, "n_y": 1}}"#, &[]).unwrap();
        let b = parse(r#"{"lattice": {"n_x": 1, "n_y": 1, "d": 1.0}}"#, &[]).unwrap();
        let c = parse(r#"{"lattice": {"n_x": 2, "n_y": 1}}"#, &[]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}
