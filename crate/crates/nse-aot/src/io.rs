//! File formats and configuration: spectral snapshots, streaming observation
//! records, run manifests, diagnostics CSV, and the flat key-value config.
//!
//! All binary payloads are little-endian 64-bit floats; every format starts
//! with a 4-byte magic and a u32 version.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write as _};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Row, TimeSeries};
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::GridSpec;
use crate::interpolant::InterpolantSpec;

const SNAPSHOT_MAGIC: &[u8; 4] = b"NSE3";
const RECORD_MAGIC: &[u8; 4] = b"NSEO";
const FORMAT_VERSION: u32 = 1;

// --- little-endian primitives -------------------------------------------

fn write_u32(w: &mut impl std::io::Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64(w: &mut impl std::io::Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64(w: &mut impl std::io::Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn check_magic(r: &mut impl Read, expected: &[u8; 4], what: &str) -> Result<()> {
    let mut m = [0u8; 4];
    read_exact(r, &mut m)?;
    if &m != expected {
        return Err(Error::Format(format!(
            "{what}: bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(expected)
        )));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{what}: unsupported format version {version} (this build reads {FORMAT_VERSION})"
        )));
    }
    Ok(())
}

// --- spectral snapshots ---------------------------------------------------

/// Write a full spectral state with its simulation time.
pub fn write_snapshot(path: impl AsRef<Path>, field: &SpectralField, time: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(SNAPSHOT_MAGIC)?;
    write_u32(&mut w, FORMAT_VERSION)?;
    write_u64(&mut w, field.grid.n as u64)?;
    write_f64(&mut w, field.grid.box_len)?;
    w.write_all(&[match field.grid.dealias {
        crate::grid::Dealias::TwoThirds => 0u8,
        crate::grid::Dealias::None => 1u8,
    }])?;
    write_f64(&mut w, time)?;
    for c in 0..3 {
        for v in field.component_slice(c) {
            write_f64(&mut w, v.re)?;
            write_f64(&mut w, v.im)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a spectral state and its simulation time.
pub fn read_snapshot(path: impl AsRef<Path>) -> Result<(SpectralField, f64)> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    check_magic(&mut r, SNAPSHOT_MAGIC, "snapshot")?;
    let n = read_u64(&mut r)? as usize;
    let box_len = read_f64(&mut r)?;
    let mut d = [0u8; 1];
    read_exact(&mut r, &mut d)?;
    let dealias = match d[0] {
        0 => crate::grid::Dealias::TwoThirds,
        1 => crate::grid::Dealias::None,
        other => return Err(Error::Format(format!("snapshot: unknown dealias tag {other}"))),
    };
    let grid = GridSpec::new(n, box_len, dealias)?;
    let time = read_f64(&mut r)?;
    let mut field = SpectralField::zeros(grid);
    for c in 0..3 {
        for v in field.component_slice_mut(c) {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            *v = Complex64::new(re, im);
        }
    }
    Ok((field, time))
}

// --- observation records --------------------------------------------------

/// Header of an observation record: everything a replay or an analysis pass
/// needs to interpret the payload blocks on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub spec: InterpolantSpec,
    /// Sampling interval of the blocks.
    pub dt_obs: f64,
    pub grid: GridSpec,
    /// L² norm of the producing run's body force (feeds the data bounds).
    pub f_norm: f64,
    /// Viscosity of the producing run.
    pub nu: f64,
    /// Hash of the producing run's configuration.
    pub run_hash: String,
}

/// Streaming, append-only writer: one flush per block, so a crashed run
/// leaves a readable prefix.
pub struct ObservationRecordWriter {
    w: BufWriter<File>,
    last_time: Option<f64>,
    blocks_written: u64,
}

impl ObservationRecordWriter {
    pub fn create(path: impl AsRef<Path>, header: &RecordHeader) -> Result<Self> {
        if !(header.dt_obs > 0.0) {
            return Err(Error::Config(format!(
                "observation sampling interval must be positive, got {}",
                header.dt_obs
            )));
        }
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        w.write_all(RECORD_MAGIC)?;
        write_u32(&mut w, FORMAT_VERSION)?;
        let json = serde_json::to_vec(header)
            .map_err(|e| Error::Format(format!("record header does not serialize: {e}")))?;
        write_u64(&mut w, json.len() as u64)?;
        w.write_all(&json)?;
        w.flush()?;
        Ok(Self { w, last_time: None, blocks_written: 0 })
    }

    pub fn append(&mut self, time: f64, payload: &[u8]) -> Result<()> {
        if let Some(last) = self.last_time {
            if time <= last {
                return Err(Error::Format(format!(
                    "observation times must be strictly increasing: {time} after {last}"
                )));
            }
        }
        write_f64(&mut self.w, time)?;
        write_u64(&mut self.w, payload.len() as u64)?;
        self.w.write_all(payload)?;
        self.w.flush().map_err(|e| {
            Error::Format(format!(
                "write failed after t = {:?} ({} blocks committed): {e}",
                self.last_time, self.blocks_written
            ))
        })?;
        self.last_time = Some(time);
        self.blocks_written += 1;
        Ok(())
    }

    pub fn blocks_written(&self) -> u64 {
        self.blocks_written
    }
}

/// Read-only view of a record: header plus a streaming block iterator.
pub struct ObservationRecordReader {
    header: RecordHeader,
    path: PathBuf,
    body_offset: u64,
}

impl ObservationRecordReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut r = BufReader::new(File::open(&path)?);
        check_magic(&mut r, RECORD_MAGIC, "observation record")?;
        let len = read_u64(&mut r)? as usize;
        if len > 16 << 20 {
            return Err(Error::Format(format!(
                "observation record header implausibly large ({len} bytes)"
            )));
        }
        let mut json = vec![0u8; len];
        read_exact(&mut r, &mut json)?;
        let header: RecordHeader = serde_json::from_slice(&json)
            .map_err(|e| Error::Format(format!("observation record header: {e}")))?;
        // Re-validate what deserialization cannot.
        let grid = GridSpec::new(header.grid.n, header.grid.box_len, header.grid.dealias)?;
        header.spec.validate(&grid)?;
        let body_offset = (4 + 4 + 8 + len) as u64;
        Ok(Self { header, path, body_offset })
    }

    pub fn header(&self) -> &RecordHeader {
        &self.header
    }

    /// Stream the (time, payload) blocks in file order.
    pub fn blocks(&self) -> Result<RecordBlocks> {
        let mut f = BufReader::new(File::open(&self.path)?);
        std::io::Seek::seek(&mut f, std::io::SeekFrom::Start(self.body_offset))?;
        Ok(RecordBlocks { r: f, last_time: None, done: false })
    }
}

pub struct RecordBlocks {
    r: BufReader<File>,
    last_time: Option<f64>,
    done: bool,
}

impl Iterator for RecordBlocks {
    type Item = Result<(f64, Vec<u8>)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        // A clean end-of-file before a block starts is the end of the record.
        let mut tb = [0u8; 8];
        match self.r.read_exact(&mut tb) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                self.done = true;
                return None;
            }
            Err(e) => {
                self.done = true;
                return Some(Err(e.into()));
            }
        }
        let time = f64::from_le_bytes(tb);
        let res: Result<(f64, Vec<u8>)> = (|| {
            if let Some(last) = self.last_time {
                if time <= last {
                    return Err(Error::Format(format!(
                        "observation record corrupt: time {time} after {last}"
                    )));
                }
            }
            let len = read_u64(&mut self.r)? as usize;
            if len > 1 << 32 {
                return Err(Error::Format(format!(
                    "observation block implausibly large ({len} bytes)"
                )));
            }
            let mut payload = vec![0u8; len];
            read_exact(&mut self.r, &mut payload)?;
            Ok((time, payload))
        })();
        match res {
            Ok((t, p)) => {
                self.last_time = Some(t);
                Some(Ok((t, p)))
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

// --- run manifests ----------------------------------------------------------

/// One produced output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub kind: String,
}

/// Everything needed to audit or re-run an invocation. Round-trips through
/// JSON exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub code_version: String,
    /// Subcommand that produced the run.
    pub command: String,
    /// Resolved flat configuration (file + overrides).
    pub config: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub run_hash: String,
    /// Unix epoch seconds.
    pub started_at: f64,
    pub wall_seconds: f64,
    pub outputs: Vec<OutputEntry>,
    /// Free-form verdicts from the analyses run as part of the invocation.
    pub verdicts: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, config: BTreeMap<String, String>, seed: Option<u64>) -> Self {
        let run_hash = hash_config(&config, seed);
        Self {
            format_version: FORMAT_VERSION,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            seed,
            run_hash,
            started_at: unix_now(),
            wall_seconds: 0.0,
            outputs: Vec::new(),
            verdicts: serde_json::Value::Null,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("manifest does not serialize: {e}")))?;
        std::fs::write(path.as_ref(), json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest: {e}")))
    }
}

pub fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// FNV-1a over the canonical config text plus the seed; stable across runs.
pub fn hash_config(config: &BTreeMap<String, String>, seed: Option<u64>) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for (k, v) in config {
        eat(k.as_bytes());
        eat(b"=");
        eat(v.as_bytes());
        eat(b"\n");
    }
    if let Some(s) = seed {
        eat(&s.to_le_bytes());
    }
    format!("{h:016x}")
}

// --- diagnostics CSV ----------------------------------------------------------

/// Fixed nine-column schema:
/// time,l2_u,h1_u,l2_w,h1_w,l2_err,h1_err,obs_h1,energy_residual.
pub fn write_series_csv(path: impl AsRef<Path>, series: &TimeSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path.as_ref())?));
    for row in &series.rows {
        w.serialize(row)
            .map_err(|e| Error::Format(format!("csv write: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path.as_ref())?));
    let mut rows = Vec::new();
    for rec in r.deserialize::<Row>() {
        rows.push(rec.map_err(|e| Error::Format(format!("csv read: {e}")))?);
    }
    Ok(TimeSeries { rows })
}

// --- flat key-value configuration ---------------------------------------------

/// Diff-friendly flat configuration: one `key = value` per line, `#`
/// comments, dotted keys (grid.n, solver.nu, nudge.mu, interp.kind, …).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlatConfig(pub BTreeMap<String, String>);

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "config line {} is not `key = value`: {raw:?}",
                    lineno + 1
                )));
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("config line {} has an empty key", lineno + 1)));
            }
            map.insert(key, v.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.as_ref().display()))
        })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.0 {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// Apply a `key=value` override (CLI `--set`).
    pub fn set_override(&mut self, kv: &str) -> Result<()> {
        let Some((k, v)) = kv.split_once('=') else {
            return Err(Error::Config(format!("--set expects key=value, got {kv:?}")));
        };
        self.0.insert(k.trim().to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing required config key `{key}`")))
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => parse_f64(key, s),
        }
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        parse_f64(key, self.require(key)?)
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("config `{key}` must be an integer, got {s:?}"))),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("config `{key}` must be an integer, got {s:?}"))),
        }
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(s) => Err(Error::Config(format!(
                "config `{key}` must be true or false, got {s:?}"
            ))),
        }
    }

    /// Parse a length that may be written relative to the box: `L/8`,
    /// `L/20`, or a plain number.
    pub fn get_length(&self, key: &str, box_len: f64) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => parse_length(key, s, box_len).map(Some),
        }
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    match s {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        _ => s
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("config `{key}` must be a number, got {s:?}"))),
    }
}

/// `L/8` → box_len/8; `0.785` → 0.785.
pub fn parse_length(key: &str, s: &str, box_len: f64) -> Result<f64> {
    let t = s.trim();
    if let Some(rest) = t.strip_prefix("L/") {
        let d: f64 = rest.parse().map_err(|_| {
            Error::Config(format!("config `{key}`: cannot parse divisor in {s:?}"))
        })?;
        if !(d > 0.0) {
            return Err(Error::Config(format!("config `{key}`: divisor must be positive in {s:?}")));
        }
        return Ok(box_len / d);
    }
    if t == "L" {
        return Ok(box_len);
    }
    parse_f64(key, t)
}
