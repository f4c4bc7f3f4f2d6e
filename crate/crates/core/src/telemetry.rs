//! Telemetry logs: one JSON object per line, an optional header line, and a
//! comma-separated variant accepted on read.
//!
//! ```text
//! {"header":{"version":1,"rate_hint":40.0,"units":{"delta":"deg"}}}
//! {"t":0.0,"v":1.0,"delta":0.0,"ax":0.0,"ay":0.0,"vx":1.0,"vy":0.0,"wpsi":0.0}
//! {"t":0.025,"v":1.0,"delta":2.5,"ax":0.1,"ay":0.2,"vx":1.0,"vy":0.0,"wpsi":0.1,"surface":"tile","slip":false}
//! ```
//!
//! Values are stored in SI. Logs are always written in SI with
//! shortest-round-trip floats, so write then load is bit-exact.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::par;
use crate::types::{ControlAction, Observation, TelemetryRecord, VehicleGeometry};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_ALIGN_RATE: f64 = 40.0;

/// Mandatory numeric keys, in CSV column order.
pub const COLUMNS: [&str; 8] = ["t", "v", "delta", "ax", "ay", "vx", "vy", "wpsi"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_hint: Option<f64>,
    /// Channel key to unit. Channels not listed are SI.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub units: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<VehicleGeometry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl Default for LogHeader {
    fn default() -> Self {
        Self {
            version: FORMAT_VERSION,
            rate_hint: None,
            units: BTreeMap::new(),
            geometry: None,
            metadata: BTreeMap::new(),
        }
    }
}

impl LogHeader {
    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Header(format!("unsupported version {}", self.version)));
        }
        if let Some(r) = self.rate_hint {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Header(format!("rate_hint must be finite and > 0, got {r}")));
            }
        }
        self.scale().map(|_| ())
    }

    /// Factors converting each declared unit to SI.
    pub fn scale(&self) -> Result<UnitScale> {
        let mut s = UnitScale::default();
        for (key, unit) in &self.units {
            let factor = match (key.as_str(), unit.as_str()) {
                ("t", "s") | ("v" | "vx" | "vy", "m/s") | ("ax" | "ay", "m/s^2" | "m/s2") => 1.0,
                ("delta", "rad") | ("wpsi", "rad/s") => 1.0,
                ("delta", "deg") | ("wpsi", "deg/s") => std::f64::consts::PI / 180.0,
                _ if COLUMNS.contains(&key.as_str()) => {
                    return Err(Error::Header(format!("unit `{unit}` not convertible for `{key}`")))
                }
                _ => return Err(Error::Header(format!("unknown channel `{key}` in units"))),
            };
            match key.as_str() {
                "delta" => s.delta = factor,
                "wpsi" => s.wpsi = factor,
                _ => {}
            }
        }
        Ok(s)
    }

    /// The header as written next to SI records.
    pub fn to_si(&self) -> Self {
        Self {
            units: BTreeMap::new(),
            ..self.clone()
        }
    }
}

/// Multipliers applied at ingestion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitScale {
    pub delta: f64,
    pub wpsi: f64,
}

impl Default for UnitScale {
    fn default() -> Self {
        Self { delta: 1.0, wpsi: 1.0 }
    }
}

fn number(obj: &Map<String, Value>, key: &str, line: usize) -> Result<f64> {
    let parse_err = |message: String| Error::Parse {
        line,
        field: key.into(),
        message,
    };
    let x = match obj.get(key) {
        None => return Err(parse_err("missing".into())),
        Some(Value::Number(n)) => n
            .as_f64()
            .ok_or_else(|| parse_err(format!("{n} is not representable")))?,
        // Non-finite values have no JSON literal; accept their spelled-out form
        // only to report them as value errors.
        Some(Value::String(s)) => match s.trim().parse::<f64>() {
            Ok(x) if !x.is_finite() => x,
            _ => return Err(parse_err(format!("expected a number, got {s:?}"))),
        },
        Some(other) => return Err(parse_err(format!("expected a number, got {other}"))),
    };
    if !x.is_finite() {
        return Err(Error::Value {
            line,
            field: key.into(),
        });
    }
    Ok(x)
}

fn build_record(n: [f64; 8], scale: &UnitScale, surface: Option<String>, slip: Option<bool>) -> TelemetryRecord {
    let [t, v, delta, ax, ay, vx, vy, wpsi] = n;
    TelemetryRecord {
        t,
        u: ControlAction::new(v, delta * scale.delta),
        y: Observation {
            a_x: ax,
            a_y: ay,
            v_x: vx,
            v_y: vy,
            yaw_rate: wpsi * scale.wpsi,
        },
        surface,
        slip_label: slip,
    }
}

/// Parses one record line (1-based `line` for error messages), in SI.
pub fn parse_record(text: &str, line: usize) -> Result<TelemetryRecord> {
    parse_record_scaled(text, line, &UnitScale::default())
}

pub fn parse_record_scaled(text: &str, line: usize, scale: &UnitScale) -> Result<TelemetryRecord> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        field: "<line>".into(),
        message: e.to_string(),
    })?;
    let Value::Object(obj) = value else {
        return Err(Error::Parse {
            line,
            field: "<line>".into(),
            message: "expected a JSON object".into(),
        });
    };
    record_from_object(&obj, line, scale)
}

fn record_from_object(obj: &Map<String, Value>, line: usize, scale: &UnitScale) -> Result<TelemetryRecord> {
    let mut n = [0.0; 8];
    for (slot, key) in n.iter_mut().zip(COLUMNS) {
        *slot = number(obj, key, line)?;
    }
    let surface = match obj.get("surface") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(other) => {
            return Err(Error::Parse {
                line,
                field: "surface".into(),
                message: format!("expected a string, got {other}"),
            })
        }
    };
    let slip = match obj.get("slip") {
        None | Some(Value::Null) => None,
        Some(Value::Bool(b)) => Some(*b),
        Some(other) => {
            return Err(Error::Parse {
                line,
                field: "slip".into(),
                message: format!("expected a boolean, got {other}"),
            })
        }
    };
    Ok(build_record(n, scale, surface, slip))
}

#[derive(Serialize)]
struct Line<'a> {
    t: f64,
    v: f64,
    delta: f64,
    ax: f64,
    ay: f64,
    vx: f64,
    vy: f64,
    wpsi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    surface: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slip: Option<bool>,
}

/// One log line without the trailing newline. Rejects non-finite values,
/// which have no JSON representation.
pub fn format_record(rec: &TelemetryRecord) -> Result<String> {
    let line = Line {
        t: rec.t,
        v: rec.u.v,
        delta: rec.u.delta,
        ax: rec.y.a_x,
        ay: rec.y.a_y,
        vx: rec.y.v_x,
        vy: rec.y.v_y,
        wpsi: rec.y.yaw_rate,
        surface: rec.surface.as_deref(),
        slip: rec.slip_label,
    };
    let values = [
        line.t, line.v, line.delta, line.ax, line.ay, line.vx, line.vy, line.wpsi,
    ];
    if let Some(i) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::domain(format!(
            "record at t={} has non-finite `{}`",
            rec.t, COLUMNS[i]
        )));
    }
    Ok(serde_json::to_string(&line).expect("plain struct serializes"))
}

/// Writes an optional header and the records, one per line.
pub fn write_stream<W: Write>(mut w: W, header: Option<&LogHeader>, records: &[TelemetryRecord]) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<output>", e);
    if let Some(h) = header {
        let line = serde_json::json!({ "header": h.to_si() });
        writeln!(w, "{line}").map_err(io)?;
    }
    for r in records {
        writeln!(w, "{}", format_record(r)?).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// The log as bytes, ready for an atomic write.
pub fn to_bytes(header: Option<&LogHeader>, records: &[TelemetryRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_stream(&mut buf, header, records)?;
    Ok(buf)
}

/// How `load_stream` treats timestamps that do not increase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadMode {
    /// Any non-increasing timestamp is an error.
    #[default]
    Strict,
    /// A repeated timestamp replaces the earlier record; an earlier timestamp
    /// is dropped. Both count as warnings.
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedStream {
    pub header: Option<LogHeader>,
    pub records: Vec<TelemetryRecord>,
    pub warnings: usize,
}

fn order(records: Vec<TelemetryRecord>, mode: LoadMode) -> Result<(Vec<TelemetryRecord>, usize)> {
    let mut out: Vec<TelemetryRecord> = Vec::with_capacity(records.len());
    let mut warnings = 0;
    for (index, rec) in records.into_iter().enumerate() {
        let Some(prev) = out.last() else {
            out.push(rec);
            continue;
        };
        if rec.t > prev.t {
            out.push(rec);
            continue;
        }
        match mode {
            LoadMode::Strict => {
                return Err(Error::Ordering {
                    index,
                    previous: prev.t,
                    t: rec.t,
                })
            }
            LoadMode::Lenient => {
                warnings += 1;
                if rec.t == prev.t {
                    *out.last_mut().expect("non-empty") = rec;
                }
            }
        }
    }
    Ok((out, warnings))
}

/// Reads the line-delimited format.
pub fn read_jsonl<R: Read>(reader: R, mode: LoadMode) -> Result<LoadedStream> {
    let mut header = None;
    let mut scale = UnitScale::default();
    let mut records = Vec::new();
    let mut seen_record = false;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            field: "<line>".into(),
            message: e.to_string(),
        })?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: line_no,
            field: "<line>".into(),
            message: e.to_string(),
        })?;
        let Value::Object(obj) = value else {
            return Err(Error::Parse {
                line: line_no,
                field: "<line>".into(),
                message: "expected a JSON object".into(),
            });
        };
        if let Some(h) = obj.get("header") {
            if seen_record || header.is_some() {
                return Err(Error::Header(format!("line {line_no}: header must be the first line")));
            }
            let h: LogHeader =
                serde_json::from_value(h.clone()).map_err(|e| Error::Header(format!("line {line_no}: {e}")))?;
            h.validate()?;
            scale = h.scale()?;
            header = Some(h);
            continue;
        }
        seen_record = true;
        records.push(record_from_object(&obj, line_no, &scale)?);
    }
    let (records, warnings) = order(records, mode)?;
    Ok(LoadedStream {
        header,
        records,
        warnings,
    })
}

/// Reads the comma-separated variant: a header row starting with the eight
/// mandatory columns in [`COLUMNS`] order, optionally followed by `surface`
/// and `slip`. Empty optional cells are absent.
pub fn read_csv<R: Read>(reader: R, mode: LoadMode) -> Result<LoadedStream> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let head = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            field: "<header>".into(),
            message: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = head.iter().collect();
    if names.len() < COLUMNS.len() || names[..COLUMNS.len()] != COLUMNS {
        return Err(Error::Header(format!(
            "csv columns must start with {}",
            COLUMNS.join(",")
        )));
    }
    let extra = &names[COLUMNS.len()..];
    let surface_col = extra.iter().position(|c| *c == "surface").map(|p| p + COLUMNS.len());
    let slip_col = extra.iter().position(|c| *c == "slip").map(|p| p + COLUMNS.len());
    if let Some(bad) = extra.iter().find(|c| !matches!(**c, "surface" | "slip")) {
        return Err(Error::Header(format!("unknown csv column `{bad}`")));
    }

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            field: "<row>".into(),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let mut n = [0.0; 8];
        for (i, key) in COLUMNS.iter().enumerate() {
            let cell = row.get(i).unwrap_or("");
            let x: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                field: (*key).into(),
                message: format!("expected a number, got {cell:?}"),
            })?;
            if !x.is_finite() {
                return Err(Error::Value {
                    line,
                    field: (*key).into(),
                });
            }
            n[i] = x;
        }
        let surface = surface_col
            .and_then(|c| row.get(c))
            .filter(|s| !s.is_empty())
            .map(str::to_owned);
        let slip = match slip_col.and_then(|c| row.get(c)).filter(|s| !s.is_empty()) {
            None => None,
            Some("true" | "1") => Some(true),
            Some("false" | "0") => Some(false),
            Some(other) => {
                return Err(Error::Parse {
                    line,
                    field: "slip".into(),
                    message: format!("expected a boolean, got {other:?}"),
                })
            }
        };
        records.push(build_record(n, &UnitScale::default(), surface, slip));
    }
    let (records, warnings) = order(records, mode)?;
    Ok(LoadedStream {
        header: None,
        records,
        warnings,
    })
}

/// Loads a log file; a `.csv` extension selects the comma-separated reader.
pub fn load_stream(path: &Path, mode: LoadMode) -> Result<LoadedStream> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_csv(file, mode)
    } else {
        read_jsonl(file, mode)
    }
}

/// Loads several files concurrently, preserving order.
pub fn load_many(paths: &[PathBuf], mode: LoadMode) -> Result<Vec<LoadedStream>> {
    par::try_map(paths, |p| load_stream(p, mode))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub a_x: f64,
    pub a_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdomSample {
    pub v_x: f64,
    pub v_y: f64,
    pub yaw_rate: f64,
}

/// Separately clocked input series. `control`, `imu` and `odom` are
/// mandatory; labels and surface tags are attached when present in window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Channels {
    pub control: Vec<(f64, ControlAction)>,
    pub imu: Vec<(f64, ImuSample)>,
    pub odom: Vec<(f64, OdomSample)>,
    pub label: Vec<(f64, bool)>,
    pub surface: Vec<(f64, String)>,
}

impl Channels {
    /// Splits records into one channel per sensor, all on the records' clock.
    pub fn from_records(records: &[TelemetryRecord]) -> Self {
        let mut c = Channels::default();
        for r in records {
            c.control.push((r.t, r.u));
            c.imu.push((
                r.t,
                ImuSample {
                    a_x: r.y.a_x,
                    a_y: r.y.a_y,
                },
            ));
            c.odom.push((
                r.t,
                OdomSample {
                    v_x: r.y.v_x,
                    v_y: r.y.v_y,
                    yaw_rate: r.y.yaw_rate,
                },
            ));
            if let Some(l) = r.slip_label {
                c.label.push((r.t, l));
            }
            if let Some(s) = &r.surface {
                c.surface.push((r.t, s.clone()));
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AlignStats {
    pub slots: usize,
    pub emitted: usize,
    pub dropped: usize,
    /// Slots in which each mandatory channel had no sample in window.
    pub missing: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub records: Vec<TelemetryRecord>,
    pub stats: AlignStats,
}

/// Index of the sample nearest `t` within `half`; ties go to the earlier one.
fn nearest<T>(series: &[(f64, T)], t: f64, half: f64) -> Option<usize> {
    let i = series.partition_point(|(s, _)| *s < t);
    [i.checked_sub(1), Some(i)]
        .into_iter()
        .flatten()
        .filter(|&j| j < series.len())
        .map(|j| (j, (series[j].0 - t).abs()))
        .filter(|&(_, d)| d <= half)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(j, _)| j)
}

fn check_channel<T>(name: &str, series: &[(f64, T)], mandatory: bool) -> Result<()> {
    if mandatory && series.is_empty() {
        return Err(Error::Alignment(format!("mandatory channel `{name}` is empty")));
    }
    crate::types::check_ordered(series.iter().map(|(t, _)| t))
}

/// Resamples onto the clock `t0 + k * (1 / rate)`, where `t0` is the earliest
/// mandatory sample, by nearest neighbour within half a period. Slots missing
/// any mandatory channel are dropped and counted.
pub fn align_channels(ch: &Channels, rate: f64) -> Result<Aligned> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::Alignment(format!("rate must be finite and > 0, got {rate}")));
    }
    check_channel("control", &ch.control, true)?;
    check_channel("imu", &ch.imu, true)?;
    check_channel("odom", &ch.odom, true)?;
    check_channel("label", &ch.label, false)?;
    check_channel("surface", &ch.surface, false)?;

    let period = 1.0 / rate;
    let half = period / 2.0;
    let firsts = [ch.control[0].0, ch.imu[0].0, ch.odom[0].0];
    let lasts = [
        ch.control[ch.control.len() - 1].0,
        ch.imu[ch.imu.len() - 1].0,
        ch.odom[ch.odom.len() - 1].0,
    ];
    let t0 = firsts.into_iter().fold(f64::INFINITY, f64::min);
    let t1 = lasts.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let slots = ((t1 - t0) / period + 1e-9).floor() as usize + 1;

    let mut stats = AlignStats {
        slots,
        missing: ["control", "imu", "odom"]
            .iter()
            .map(|c| ((*c).to_owned(), 0))
            .collect(),
        ..Default::default()
    };
    let mut records = Vec::with_capacity(slots);
    for k in 0..slots {
        let t = t0 + k as f64 * period;
        let c = nearest(&ch.control, t, half);
        let i = nearest(&ch.imu, t, half);
        let o = nearest(&ch.odom, t, half);
        for (name, hit) in [("control", c.is_some()), ("imu", i.is_some()), ("odom", o.is_some())] {
            if !hit {
                *stats.missing.get_mut(name).expect("preset") += 1;
            }
        }
        let (Some(c), Some(i), Some(o)) = (c, i, o) else {
            stats.dropped += 1;
            continue;
        };
        let imu = ch.imu[i].1;
        let odom = ch.odom[o].1;
        records.push(TelemetryRecord {
            t,
            u: ch.control[c].1,
            y: Observation {
                a_x: imu.a_x,
                a_y: imu.a_y,
                v_x: odom.v_x,
                v_y: odom.v_y,
                yaw_rate: odom.yaw_rate,
            },
            surface: nearest(&ch.surface, t, half).map(|j| ch.surface[j].1.clone()),
            slip_label: nearest(&ch.label, t, half).map(|j| ch.label[j].1),
        });
    }
    stats.emitted = records.len();
    Ok(Aligned { records, stats })
}
