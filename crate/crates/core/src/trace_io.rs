//! Trace data model and the CSV / JSON file formats.
//!
//! Trace files carry two columns `t,x` (CSV, header optional) or an array of
//! `{"t": .., "x": ..}` objects (JSON). Sanitized traces use `t,z` and always
//! carry the mechanism metadata. Floats are written in Rust's shortest
//! round-trip representation, so reading a written file back is bit-exact.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{CipError, Result, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub x: f64,
}

/// An ordered location trace with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Trace {
    points: Vec<TracePoint>,
}

impl Trace {
    pub fn new(points: Vec<TracePoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(CipError::Domain(format!(
                "a trace needs at least 2 points, got {}",
                points.len()
            )));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.t.is_finite() || !p.x.is_finite() {
                return Err(CipError::Domain(format!(
                    "point {i} has a non-finite value (t={}, x={})",
                    p.t, p.x
                )));
            }
        }
        if let Some(i) = points.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(CipError::Domain(format!(
                "timestamps must be strictly increasing: t[{}]={} is followed by t[{}]={}",
                i,
                points[i].t,
                i + 1,
                points[i + 1].t
            )));
        }
        Ok(Trace { points })
    }

    /// Builds a trace from parallel timestamp and location slices.
    pub fn from_columns(t: &[f64], x: &[f64]) -> Result<Self> {
        if t.len() != x.len() {
            return Err(CipError::DimensionMismatch {
                expected: t.len(),
                got: x.len(),
            });
        }
        Trace::new(
            t.iter()
                .zip(x)
                .map(|(&t, &x)| TracePoint { t, x })
                .collect(),
        )
    }

    /// Evenly spaced timestamps `0, spacing, 2*spacing, ..` with all locations zero.
    ///
    /// Losses depend only on timestamps and the partition, so this is enough to
    /// reproduce loss curves without a data file.
    pub fn synthetic(d: usize, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(CipError::param("spacing", "must be finite and > 0"));
        }
        Trace::new(
            (0..d)
                .map(|i| TracePoint {
                    t: i as f64 * spacing,
                    x: 0.0,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[TracePoint] {
        &self.points
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn locations(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }
}

impl<'de> Deserialize<'de> for Trace {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let points = Vec::<TracePoint>::deserialize(de)?;
        Trace::new(points).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SanitizedPoint {
    pub t: f64,
    pub z: f64,
}

/// Mechanism parameters echoed alongside a release.
///
/// `sigma_z2`, `seed` and `generator` are always present; the budget fields are
/// `null` when the noise level was given directly instead of calibrated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismMeta {
    pub sigma_z2: f64,
    pub seed: u64,
    pub epsilon: Option<f64>,
    pub r: Option<f64>,
    pub lambda: Option<f64>,
    pub generator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanitizedTrace {
    pub schema_version: u32,
    pub meta: MechanismMeta,
    pub points: Vec<SanitizedPoint>,
}

impl SanitizedTrace {
    /// Pairs released values with the source timestamps.
    pub fn from_source(source: &Trace, z: &[f64], meta: MechanismMeta) -> Result<Self> {
        if z.len() != source.len() {
            return Err(CipError::DimensionMismatch {
                expected: source.len(),
                got: z.len(),
            });
        }
        let out = SanitizedTrace {
            schema_version: SCHEMA_VERSION,
            meta,
            points: source
                .points()
                .iter()
                .zip(z)
                .map(|(p, &z)| SanitizedPoint { t: p.t, z })
                .collect(),
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.meta.sigma_z2 > 0.0 && self.meta.sigma_z2.is_finite()) {
            return Err(CipError::Domain(format!(
                "sanitized trace metadata needs sigma_z2 > 0, got {}",
                self.meta.sigma_z2
            )));
        }
        if self.points.len() < 2 {
            return Err(CipError::Domain("sanitized trace has fewer than 2 points".into()));
        }
        Ok(())
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.z).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Guesses the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = CipError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(CipError::param("format", format!("expected csv or json, got `{other}`"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CipError {
    CipError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_trace(path: &Path, format: Format) -> Result<Trace> {
    let body = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_trace(&body, format)
}

pub fn parse_trace(body: &str, format: Format) -> Result<Trace> {
    match format {
        Format::Csv => {
            let rows = parse_two_columns(body, "x")?;
            Trace::new(rows.into_iter().map(|(t, x)| TracePoint { t, x }).collect())
        }
        Format::Json => {
            let points: Vec<TracePoint> = serde_json::from_str(body).map_err(|e| CipError::Parse {
                line: e.line(),
                msg: e.to_string(),
            })?;
            Trace::new(points)
        }
    }
}

/// Reads `t,<value>` rows. A first row of `t,<value>` is taken as a header;
/// blank lines and `#` comments are skipped.
fn parse_two_columns(body: &str, value_col: &str) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CipError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 2 {
            return Err(CipError::Parse {
                line,
                msg: format!("expected 2 columns (t,{value_col}), got {}", record.len()),
            });
        }
        if i == 0 && record[0].eq_ignore_ascii_case("t") && record[1].eq_ignore_ascii_case(value_col) {
            continue;
        }
        let field = |k: usize| -> Result<f64> {
            record[k].parse::<f64>().map_err(|e| CipError::Parse {
                line,
                msg: format!("`{}`: {e}", &record[k]),
            })
        };
        rows.push((field(0)?, field(1)?));
    }
    Ok(rows)
}

pub fn write_sanitized(trace: &SanitizedTrace, path: &Path, format: Format) -> Result<()> {
    fs::write(path, render_sanitized(trace, format)?).map_err(|e| io_err(path, e))
}

pub fn render_sanitized(trace: &SanitizedTrace, format: Format) -> Result<String> {
    trace.validate()?;
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(trace)?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let m = &trace.meta;
            let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:?}"));
            let mut s = format!(
                "# schema_version={},sigma_z2={:?},seed={},epsilon={},r={},lambda={},generator={}\nt,z\n",
                trace.schema_version,
                m.sigma_z2,
                m.seed,
                opt(m.epsilon),
                opt(m.r),
                opt(m.lambda),
                m.generator
            );
            for p in &trace.points {
                s.push_str(&format!("{:?},{:?}\n", p.t, p.z));
            }
            Ok(s)
        }
    }
}

pub fn read_sanitized(path: &Path, format: Format) -> Result<SanitizedTrace> {
    let body = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_sanitized(&body, format)
}

pub fn parse_sanitized(body: &str, format: Format) -> Result<SanitizedTrace> {
    let out = match format {
        Format::Json => serde_json::from_str::<SanitizedTrace>(body).map_err(|e| CipError::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?,
        Format::Csv => {
            let first = body.lines().next().unwrap_or("");
            let meta_line = first.strip_prefix('#').ok_or(CipError::Parse {
                line: 1,
                msg: "missing `# sigma_z2=..` metadata line".into(),
            })?;
            let (schema_version, meta) = parse_meta_line(meta_line)?;
            let points = parse_two_columns(body, "z")?
                .into_iter()
                .map(|(t, z)| SanitizedPoint { t, z })
                .collect();
            SanitizedTrace {
                schema_version,
                meta,
                points,
            }
        }
    };
    out.validate()?;
    Ok(out)
}

fn parse_meta_line(line: &str) -> Result<(u32, MechanismMeta)> {
    let bad = |msg: String| CipError::Parse { line: 1, msg };
    let mut schema_version = None;
    let mut sigma_z2 = None;
    let mut seed = None;
    let mut epsilon = None;
    let mut r = None;
    let mut lambda = None;
    let mut generator = String::new();
    let num = |v: &str| -> Result<Option<f64>> {
        if v.is_empty() {
            Ok(None)
        } else {
            v.parse().map(Some).map_err(|e| bad(format!("`{v}`: {e}")))
        }
    };
    for kv in line.trim().split(',') {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| bad(format!("metadata entry `{kv}` is not key=value")))?;
        match k.trim() {
            "schema_version" => {
                schema_version = Some(v.parse().map_err(|e| bad(format!("schema_version: {e}")))?)
            }
            "sigma_z2" => sigma_z2 = num(v)?,
            "seed" => seed = Some(v.parse().map_err(|e| bad(format!("seed: {e}")))?),
            "epsilon" => epsilon = num(v)?,
            "r" => r = num(v)?,
            "lambda" => lambda = num(v)?,
            "generator" => generator = v.to_string(),
            other => return Err(bad(format!("unknown metadata key `{other}`"))),
        }
    }
    let meta = MechanismMeta {
        sigma_z2: sigma_z2.ok_or_else(|| bad("metadata lacks sigma_z2".into()))?,
        seed: seed.ok_or_else(|| bad("metadata lacks seed".into()))?,
        epsilon,
        r,
        lambda,
        generator,
    };
    Ok((schema_version.unwrap_or(SCHEMA_VERSION), meta))
}
