//! TOML scenario files.
//!
//! ```toml
//! rx_antennas = 3
//!
//! [[users]]
//! antennas = 3
//! snr_db = 0.0
//! constellation = "qpsk"            # gaussian | qpsk | qam16
//! correlation = { kind = "azimuth", d_lambda = 1.0, theta_deg = 0.0, delta_deg = 5.0 }
//! precoder = "optimize"             # identity | optimize | { file = "g.txt" }
//! # rx_correlation = { file = "r.txt" }
//!
//! [[interferers]]
//! antennas = 3
//! snr_db = 0.0
//! constellation = "gaussian"
//! ```
//!
//! SNRs are converted from dB once, here. Relative file paths are resolved
//! against the scenario file's directory.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{
    synthesize_correlation, AzimuthSpectrumParams, Constellation, Role, Scenario, TerminalProfile,
};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::precoder;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub rx_antennas: usize,
    pub users: Vec<TerminalConfig>,
    #[serde(default)]
    pub interferers: Vec<TerminalConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalConfig {
    pub antennas: usize,
    pub snr_db: f64,
    #[serde(default = "default_constellation")]
    pub constellation: String,
    #[serde(default)]
    pub correlation: CorrelationConfig,
    #[serde(default)]
    pub precoder: PrecoderConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rx_correlation: Option<FileRef>,
}

fn default_constellation() -> String {
    "gaussian".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRef {
    pub file: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CorrelationConfig {
    Identity,
    Azimuth {
        d_lambda: f64,
        #[serde(default)]
        theta_deg: f64,
        delta_deg: f64,
    },
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig::Identity
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PrecoderConfig {
    /// `"identity"` or `"optimize"`.
    Named(String),
    File(FileRef),
}

impl Default for PrecoderConfig {
    fn default() -> Self {
        PrecoderConfig::Named("identity".into())
    }
}

/// A built scenario together with the terminals marked for optimization.
#[derive(Clone, Debug)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub optimize_users: Vec<usize>,
    pub optimize_interferers: Vec<usize>,
    pub config: ScenarioConfig,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Parses a scenario document; TOML errors carry line and column.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    toml::from_str(text).map_err(|e| {
        let field = match e.span() {
            Some(span) => {
                let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                format!("line {line}")
            }
            None => "scenario".into(),
        };
        Error::config(field, e.message().trim().to_string())
    })
}

pub fn load_scenario(path: &Path) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    let config = parse_scenario(&text)?;
    config.build(path.parent().unwrap_or(Path::new(".")))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads an `N×N` matrix stored as `correlation <N>` followed by rows of
/// `re im` pairs.
pub fn read_correlation(path: &Path, n: usize, field: &str) -> Result<CMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config(field, format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let head: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
    if head.len() != 2 || head[0] != "correlation" || head[1].parse::<usize>() != Ok(n) {
        return Err(Error::config(field, format!("expected header `correlation {n}`")));
    }
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        let vals: Vec<f64> = lines
            .next()
            .ok_or_else(|| Error::config(field, format!("expected {n} rows, found {i}")))?
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::config(field, format!("row {}: {e}", i + 1)))?;
        if vals.len() != 2 * n {
            return Err(Error::config(field, format!("row {}: expected {} numbers", i + 1, 2 * n)));
        }
        for j in 0..n {
            m[(i, j)] = Complex64::new(vals[2 * j], vals[2 * j + 1]);
        }
    }
    let e = linalg::HermitianEigen::new(&m);
    if linalg::frobenius(&(&m - m.adjoint())) > 1e-9 * (1.0 + linalg::frobenius(&m)) || e.min_value() < -1e-9 {
        return Err(Error::config(field, "correlation matrix must be Hermitian positive semidefinite"));
    }
    let tr = linalg::trace_re(&m);
    if tr <= 0.0 {
        return Err(Error::config(field, "correlation matrix has zero trace"));
    }
    Ok(linalg::hermitize(&(m * linalg::c(n as f64 / tr))))
}

impl TerminalConfig {
    fn build(&self, role: Role, rx: usize, base: &Path, label: &str) -> Result<(TerminalProfile, bool)> {
        if self.antennas == 0 {
            return Err(Error::config(format!("{label}.antennas"), "must be positive"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::config(format!("{label}.snr_db"), "must be finite"));
        }
        let cst = Constellation::from_name(&self.constellation).ok_or_else(|| {
            Error::config(
                format!("{label}.constellation"),
                format!("unknown constellation `{}` (gaussian, qpsk, qam16)", self.constellation),
            )
        })?;
        let mut t = TerminalProfile::new(role, self.antennas, rx, db_to_linear(self.snr_db), cst);
        if let CorrelationConfig::Azimuth {
            d_lambda,
            theta_deg,
            delta_deg,
        } = self.correlation
        {
            let params = AzimuthSpectrumParams::from_degrees(d_lambda, theta_deg, delta_deg)
                .map_err(|e| Error::config(format!("{label}.correlation"), e.to_string()))?;
            t.correlation.tx = synthesize_correlation(&params, self.antennas)?;
        }
        if let Some(f) = &self.rx_correlation {
            t.correlation.rx = read_correlation(&resolve(base, &f.file), rx, &format!("{label}.rx_correlation"))?;
        }
        let optimize = match &self.precoder {
            PrecoderConfig::Named(n) if n == "identity" => false,
            PrecoderConfig::Named(n) if n == "optimize" => true,
            PrecoderConfig::Named(n) => {
                return Err(Error::config(
                    format!("{label}.precoder"),
                    format!("unknown precoder `{n}` (identity, optimize, or {{ file = ... }})"),
                ))
            }
            PrecoderConfig::File(f) => {
                let path = resolve(base, &f.file);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::config(format!("{label}.precoder"), format!("{}: {e}", path.display())))?;
                let (g, _) = precoder::parse_precoder(&text).map_err(|e| {
                    Error::config(format!("{label}.precoder"), format!("{}: {e}", path.display()))
                })?;
                t.precoder = g;
                false
            }
        };
        t.validate(rx, label)?;
        Ok((t, optimize))
    }
}

impl ScenarioConfig {
    pub fn build(&self, base: &Path) -> Result<ScenarioSpec> {
        if self.rx_antennas == 0 {
            return Err(Error::config("rx_antennas", "must be positive"));
        }
        if self.users.is_empty() {
            return Err(Error::config("users", "at least one [[users]] entry is required"));
        }
        let mut users = Vec::new();
        let mut optimize_users = Vec::new();
        for (k, u) in self.users.iter().enumerate() {
            let (t, opt) = u.build(Role::User, self.rx_antennas, base, &format!("users[{k}]"))?;
            users.push(t);
            if opt {
                optimize_users.push(k);
            }
        }
        let mut interferers = Vec::new();
        let mut optimize_interferers = Vec::new();
        for (l, i) in self.interferers.iter().enumerate() {
            let (t, opt) = i.build(Role::Interferer, self.rx_antennas, base, &format!("interferers[{l}]"))?;
            interferers.push(t);
            if opt {
                optimize_interferers.push(l);
            }
        }
        Ok(ScenarioSpec {
            scenario: Scenario::new(self.rx_antennas, users, interferers)?,
            optimize_users,
            optimize_interferers,
            config: self.clone(),
        })
    }

    /// Same shape with every antenna count scaled so that the first user has
    /// `m` antennas; all loads `β` are kept exactly.
    pub fn resized(&self, m: usize) -> Result<ScenarioConfig> {
        let reference = self.users.first().map(|u| u.antennas).unwrap_or(0);
        if reference == 0 || m == 0 {
            return Err(Error::config("users[0].antennas", "cannot resize an empty scenario"));
        }
        let scale = |n: usize, field: String| {
            if (n * m) % reference != 0 {
                Err(Error::config(field, format!("{n} antennas do not scale to size {m} at fixed load")))
            } else {
                Ok(n * m / reference)
            }
        };
        let mut out = self.clone();
        out.rx_antennas = scale(self.rx_antennas, "rx_antennas".into())?;
        for (label, list) in [("users", &mut out.users), ("interferers", &mut out.interferers)] {
            for (k, t) in list.iter_mut().enumerate() {
                t.antennas = scale(t.antennas, format!("{label}[{k}].antennas"))?;
                if matches!(t.precoder, PrecoderConfig::File(_)) || t.rx_correlation.is_some() {
                    return Err(Error::config(
                        format!("{label}[{k}]"),
                        "precoder and receive-correlation files cannot be resized",
                    ));
                }
            }
        }
        Ok(out)
    }

    /// Sets every terminal's SNR.
    pub fn with_common_snr_db(mut self, snr_db: f64) -> Self {
        for t in self.users.iter_mut().chain(self.interferers.iter_mut()) {
            t.snr_db = snr_db;
        }
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
rx_antennas = 3

[[users]]
antennas = 3
snr_db = 10.0
constellation = "qpsk"
correlation = { kind = "azimuth", d_lambda = 1.0, theta_deg = 0.0, delta_deg = 5.0 }
precoder = "optimize"

[[interferers]]
antennas = 3
snr_db = 0.0
"#;

    #[test]
    fn parses_and_builds() {
        let spec = parse_scenario(SAMPLE).unwrap().build(Path::new(".")).unwrap();
        let sc = &spec.scenario;
        assert_eq!(sc.rx_antennas, 3);
        assert!((sc.users[0].snr - 10.0).abs() < 1e-12);
        assert!((sc.interferers[0].snr - 1.0).abs() < 1e-15);
        assert!(sc.interferers[0].constellation.is_gaussian());
        assert!(!linalg::is_identity(&sc.users[0].correlation.tx, 1e-3));
        assert_eq!(spec.optimize_users, vec![0]);
        assert!(spec.optimize_interferers.is_empty());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = parse_scenario(SAMPLE).unwrap();
        assert_eq!(parse_scenario(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let bad = SAMPLE.replace("\"qpsk\"", "\"8psk\"");
        let err = parse_scenario(&bad).unwrap().build(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("users[0].constellation"), "{err}");

        let bad = SAMPLE.replace("antennas = 3\nsnr_db = 0.0", "antennas = 3\nsnr = 0.0");
        let err = parse_scenario(&bad).unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");

        let bad = SAMPLE.replace("\"optimize\"", "\"best\"");
        let err = parse_scenario(&bad).unwrap().build(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("users[0].precoder"), "{err}");

        let bad = SAMPLE.replace("delta_deg = 5.0", "delta_deg = -5.0");
        let err = parse_scenario(&bad).unwrap().build(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("users[0].correlation"), "{err}");
    }

    #[test]
    fn resizing_keeps_loads() {
        let cfg = parse_scenario(SAMPLE).unwrap().resized(6).unwrap();
        assert_eq!(cfg.rx_antennas, 6);
        assert_eq!(cfg.users[0].antennas, 6);
        assert!(parse_scenario(SAMPLE).unwrap().resized(4).is_ok());
        let mut odd = parse_scenario(SAMPLE).unwrap();
        odd.rx_antennas = 2;
        assert!(odd.resized(4).is_err());
    }
}
