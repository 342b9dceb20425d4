//! Command-line driver for wqed2d: JSON configs in, CSV/JSON tables out.

pub mod config;
pub mod error;
pub mod experiments;
pub mod table;

use std::fs;
use std::path::{Path, PathBuf};

use config::{Experiment, Format};
use error::CliError;
use table::{write_tables, Provenance};

pub const VERSION: &str = concat!("wqed2d v", env!("CARGO_PKG_VERSION"));

/// Honors `SOURCE_DATE_EPOCH` so provenance can be pinned.
fn timestamp() -> String {
    use time::format_description::well_known::Rfc3339;
    use time::OffsetDateTime;
    let t = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
        .and_then(|s| OffsetDateTime::from_unix_timestamp(s).ok())
        .unwrap_or_else(OffsetDateTime::now_utc);
    t.format(&Rfc3339).unwrap_or_default()
}

pub struct Request {
    pub experiment: String,
    pub config: PathBuf,
    pub overrides: Vec<String>,
    pub out: Option<PathBuf>,
}

pub struct Report {
    pub written: Vec<PathBuf>,
    pub lines: Vec<String>,
}

/// Runs one experiment end to end. A failed oracle check still writes its table
/// before the error is returned.
pub fn run(req: &Request) -> Result<Report, CliError> {
    let exp = Experiment::parse(&req.experiment).ok_or_else(|| {
        let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
        CliError::schema("<experiment>", format!("unknown experiment `{}`; expected one of {}", req.experiment, names.join(", ")))
    })?;
    let text = fs::read_to_string(&req.config).map_err(|e| CliError::Io(format!("{}: {e}", req.config.display())))?;
    let mut cfg = config::parse(&text, &req.overrides)?;
    cfg.experiment = Some(exp);
    let outcome = experiments::run(exp, &cfg)?;
    let ext = match cfg.output.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let base = match (&req.out, &cfg.output.path) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => Path::new(exp.name()).with_extension(ext),
    };
    let prov = Provenance {
        experiment: exp.name().to_string(),
        config_hash: cfg.hash(),
        version: VERSION.to_string(),
        timestamp: timestamp(),
    };
    let written = write_tables(&outcome.tables, &base, cfg.output.format, &prov)?;
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(Report { written, lines: outcome.report }),
    }
}
