//! Timestamped click files and their mapping onto detector bins.
//!
//! Text format:
//!
//! ```text
//! format_version=1
//! tdc_tick_ps=81
//! pulse_period_ns=50000
//! banks=1
//! stages=3
//! bin_spacing_ns=100
//! bank_delay_ns=400
//! pulses=1000
//!
//! 0,0,1235
//! 0,1,0
//! ```
//!
//! The header is `key=value` lines ending at the first blank line; the seven
//! keys shown before `pulses` are required and written first, in that order.
//! Events are `pulse,channel,ticks` in plain decimal, one per line, sorted
//! by `(pulse, channel, ticks)`.
//!
//! Binary format: the magic `TMD1`, a little-endian `u32` header length, the
//! header lines as above, then 13-byte events (`u64` pulse, `u8` channel,
//! `u32` ticks, all little-endian). A file with `n` events and an `h`-byte
//! header is exactly `8 + h + 13 n` bytes long.

use std::fmt;

use thiserror::Error;

use crate::detection::{ClickRecord, ClickRun, TmdLayout, DEFAULT_DETECTORS, DEFAULT_TRIGGER_WINDOW_NS};

pub const FORMAT_VERSION: u32 = 1;
pub const BINARY_MAGIC: &[u8; 4] = b"TMD1";
pub const BINARY_EVENT_BYTES: usize = 13;

const REQUIRED_KEYS: [&str; 7] = [
    "format_version",
    "tdc_tick_ps",
    "pulse_period_ns",
    "banks",
    "stages",
    "bin_spacing_ns",
    "bank_delay_ns",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Event(usize),
    Header,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(l) => write!(f, "line {l}"),
            Location::Event(e) => write!(f, "event {e}"),
            Location::Header => write!(f, "header"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TdcError {
    #[error("records not sorted by (pulse, channel, ticks) at record {0}")]
    UnsortedInput(usize),
    #[error("{at}: malformed input: {message}")]
    Malformed { at: Location, message: String },
    #[error("header is missing required key '{0}'")]
    MissingKey(String),
    #[error("{at}: duplicate header key '{key}'")]
    DuplicateKey { at: Location, key: String },
    #[error("unsupported format_version {found}, expected {FORMAT_VERSION}")]
    VersionMismatch { found: String },
    #[error("{at}: pulse index {found} follows {previous}")]
    NonMonotonePulse { at: Location, previous: u64, found: u64 },
    #[error("{at}: events within pulse {pulse} are not sorted by (channel, ticks)")]
    UnsortedEvents { at: Location, pulse: u64 },
    #[error("{at}: field '{field}' overflows its {bits}-bit range")]
    FieldOverflow { at: Location, field: &'static str, bits: u32 },
    #[error("{at}: timestamp {ticks} ticks lies beyond the pulse period")]
    TimestampOutOfPeriod { at: Location, ticks: u32 },
    #[error("header value for '{key}' is invalid: {value}")]
    InvalidHeader { key: String, value: String },
    #[error("binary file does not start with {BINARY_MAGIC:?}")]
    BadMagic,
    #[error("binary file truncated: {0}")]
    Truncated(String),
    #[error("ambiguous bin layout: {0}")]
    AmbiguousLayout(String),
    #[error("event on channel {channel} but the layout has {detectors} detectors")]
    UnknownChannel { channel: u8, detectors: usize },
    #[error("pulse index {pulse} outside the {pulses} pulses of the run")]
    PulseOutOfRange { pulse: u64, pulses: u64 },
}

/// One detector click: trigger count, physical channel, and delay after the
/// trigger in TDC ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TdcRecord {
    pub pulse_index: u64,
    pub channel: u8,
    pub timestamp_ticks: u32,
}

/// Run metadata carried in the file header.
#[derive(Debug, Clone, PartialEq)]
pub struct RunHeader {
    pub format_version: u32,
    pub tdc_tick_ps: f64,
    pub pulse_period_ns: f64,
    pub banks: u8,
    pub stages: u32,
    pub bin_spacing_ns: f64,
    pub bank_delay_ns: f64,
    /// Further keys, in file order.
    pub extra: Vec<(String, String)>,
}

impl RunHeader {
    /// Header describing a simulated run on `layout`.
    pub fn for_layout(layout: &TmdLayout, pulses: u64) -> Self {
        let stages = layout.modes().trailing_zeros();
        Self {
            format_version: FORMAT_VERSION,
            tdc_tick_ps: layout.tdc_tick_ps,
            pulse_period_ns: layout.pulse_period_ns,
            banks: layout.banks as u8,
            stages,
            bin_spacing_ns: layout.bin_spacing_ns,
            bank_delay_ns: layout.bank_delay_ns,
            extra: vec![
                ("pulses".into(), pulses.to_string()),
                ("detectors".into(), layout.detectors_per_bank.to_string()),
                ("dead_time_ns".into(), layout.dead_time_ns.to_string()),
                ("trigger_window_ns".into(), layout.trigger_window_ns.to_string()),
            ],
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.extra.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.extra.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.extra.push((key.to_string(), value)),
        }
    }

    fn parse_extra<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, TdcError> {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|_| TdcError::InvalidHeader { key: key.into(), value: v.into() })
            })
            .transpose()
    }

    /// Total number of pulses in the run.
    pub fn pulses(&self) -> Result<u64, TdcError> {
        self.parse_extra("pulses")?.ok_or_else(|| TdcError::MissingKey("pulses".into()))
    }

    /// Detector layout implied by the header. `detectors`, `dead_time_ns`
    /// and `trigger_window_ns` fall back to the defaults when absent.
    pub fn layout(&self) -> Result<TmdLayout, TdcError> {
        let detectors: usize = self.parse_extra("detectors")?.unwrap_or(DEFAULT_DETECTORS);
        let modes = 1usize.checked_shl(self.stages).unwrap_or(0);
        if detectors == 0 || modes == 0 || modes % detectors != 0 {
            return Err(TdcError::InvalidHeader {
                key: "detectors".into(),
                value: format!("{detectors} detectors for {} stages", self.stages),
            });
        }
        let layout = TmdLayout {
            banks: self.banks as usize,
            detectors_per_bank: detectors,
            bins_per_detector: modes / detectors,
            bin_spacing_ns: self.bin_spacing_ns,
            dead_time_ns: self.parse_extra("dead_time_ns")?.unwrap_or(self.bin_spacing_ns / 2.0),
            bank_delay_ns: self.bank_delay_ns,
            tdc_tick_ps: self.tdc_tick_ps,
            trigger_window_ns: self.parse_extra("trigger_window_ns")?.unwrap_or(DEFAULT_TRIGGER_WINDOW_NS),
            pulse_period_ns: self.pulse_period_ns,
        };
        layout
            .validate()
            .map_err(|e| TdcError::InvalidHeader { key: "layout".into(), value: e.to_string() })?;
        Ok(layout)
    }

    fn period_ticks(&self) -> f64 {
        self.pulse_period_ns * 1000.0 / self.tdc_tick_ps
    }

    fn header_text(&self) -> String {
        let mut out = String::new();
        let required = [
            self.format_version.to_string(),
            self.tdc_tick_ps.to_string(),
            self.pulse_period_ns.to_string(),
            self.banks.to_string(),
            self.stages.to_string(),
            self.bin_spacing_ns.to_string(),
            self.bank_delay_ns.to_string(),
        ];
        for (k, v) in REQUIRED_KEYS.iter().zip(required) {
            out.push_str(&format!("{k}={v}\n"));
        }
        for (k, v) in &self.extra {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    fn from_lines<'a, I>(lines: I) -> Result<Self, TdcError>
    where
        I: Iterator<Item = (Location, &'a str)>,
    {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (at, line) in lines {
            let Some((key, value)) = line.split_once('=') else {
                return Err(TdcError::Malformed { at, message: format!("expected key=value, got '{line}'") });
            };
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(TdcError::Malformed { at, message: format!("invalid key '{key}'") });
            }
            if entries.iter().any(|(k, _)| k == key) {
                return Err(TdcError::DuplicateKey { at, key: key.into() });
            }
            entries.push((key.into(), value.into()));
        }
        let take = |key: &str| -> Result<String, TdcError> {
            entries
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| TdcError::MissingKey(key.into()))
        };
        let version = take("format_version")?;
        if version != FORMAT_VERSION.to_string() {
            return Err(TdcError::VersionMismatch { found: version });
        }
        fn num<T: std::str::FromStr>(key: &str, value: String) -> Result<T, TdcError> {
            value.parse().map_err(|_| TdcError::InvalidHeader { key: key.into(), value })
        }
        let positive = |key: &str| -> Result<f64, TdcError> {
            let v: f64 = num(key, take(key)?)?;
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(TdcError::InvalidHeader { key: key.into(), value: v.to_string() })
            }
        };
        let header = RunHeader {
            format_version: FORMAT_VERSION,
            tdc_tick_ps: positive("tdc_tick_ps")?,
            pulse_period_ns: positive("pulse_period_ns")?,
            banks: num("banks", take("banks")?)?,
            stages: num("stages", take("stages")?)?,
            bin_spacing_ns: positive("bin_spacing_ns")?,
            bank_delay_ns: positive("bank_delay_ns")?,
            extra: entries
                .into_iter()
                .filter(|(k, _)| !REQUIRED_KEYS.contains(&k.as_str()))
                .collect(),
        };
        if header.tdc_tick_ps == 0.0 {
            return Err(TdcError::InvalidHeader { key: "tdc_tick_ps".into(), value: "0".into() });
        }
        Ok(header)
    }
}

fn check_records(header: &RunHeader, records: &[TdcRecord]) -> Result<(), TdcError> {
    if let Some(i) = records.windows(2).position(|w| w[0] > w[1]) {
        return Err(TdcError::UnsortedInput(i + 1));
    }
    let period = header.period_ticks();
    if let Some((i, r)) = records.iter().enumerate().find(|(_, r)| r.timestamp_ticks as f64 >= period) {
        return Err(TdcError::TimestampOutOfPeriod { at: Location::Event(i), ticks: r.timestamp_ticks });
    }
    Ok(())
}

/// Serializes to the text format. Records must be sorted.
pub fn write_text(header: &RunHeader, records: &[TdcRecord]) -> Result<Vec<u8>, TdcError> {
    check_records(header, records)?;
    let mut out = header.header_text();
    out.push('\n');
    for r in records {
        out.push_str(&format!("{},{},{}\n", r.pulse_index, r.channel, r.timestamp_ticks));
    }
    Ok(out.into_bytes())
}

/// Serializes to the fixed-width binary format. Records must be sorted.
pub fn write_binary(header: &RunHeader, records: &[TdcRecord]) -> Result<Vec<u8>, TdcError> {
    check_records(header, records)?;
    let text = header.header_text();
    let mut out = Vec::with_capacity(8 + text.len() + BINARY_EVENT_BYTES * records.len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    for r in records {
        out.extend_from_slice(&r.pulse_index.to_le_bytes());
        out.push(r.channel);
        out.extend_from_slice(&r.timestamp_ticks.to_le_bytes());
    }
    Ok(out)
}

/// Expected size of a binary file.
pub fn binary_len(header: &RunHeader, events: usize) -> usize {
    8 + header.header_text().len() + BINARY_EVENT_BYTES * events
}

/// Parses either format, detected by the binary magic.
pub fn parse_tdc_file(bytes: &[u8]) -> Result<(RunHeader, Vec<TdcRecord>), TdcError> {
    if bytes.starts_with(BINARY_MAGIC) {
        parse_binary(bytes)
    } else {
        parse_text(bytes)
    }
}

fn parse_decimal(at: Location, field: &'static str, text: &str, bits: u32) -> Result<u64, TdcError> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(TdcError::Malformed { at, message: format!("{field} '{text}' is not a plain decimal") });
    }
    if text.len() > 1 && text.starts_with('0') {
        return Err(TdcError::Malformed { at, message: format!("{field} '{text}' is zero-padded") });
    }
    let overflow = TdcError::FieldOverflow { at, field, bits };
    let value: u128 = if text.len() > 30 { return Err(overflow) } else { text.parse().unwrap() };
    if bits < 128 && value >> bits != 0 {
        return Err(overflow);
    }
    Ok(value as u64)
}

struct EventChecker {
    period: f64,
    last: Option<TdcRecord>,
}

impl EventChecker {
    fn push(&mut self, at: Location, r: TdcRecord) -> Result<(), TdcError> {
        if r.timestamp_ticks as f64 >= self.period {
            return Err(TdcError::TimestampOutOfPeriod { at, ticks: r.timestamp_ticks });
        }
        if let Some(prev) = self.last {
            if r.pulse_index < prev.pulse_index {
                return Err(TdcError::NonMonotonePulse { at, previous: prev.pulse_index, found: r.pulse_index });
            }
            if r < prev {
                return Err(TdcError::UnsortedEvents { at, pulse: r.pulse_index });
            }
        }
        self.last = Some(r);
        Ok(())
    }
}

fn parse_text(bytes: &[u8]) -> Result<(RunHeader, Vec<TdcRecord>), TdcError> {
    let text = std::str::from_utf8(bytes).map_err(|e| TdcError::Malformed {
        at: Location::Line(1 + bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count()),
        message: "invalid UTF-8".into(),
    })?;
    let Some(split) = text.find("\n\n").map(|i| i + 1).or_else(|| text.starts_with('\n').then_some(0)) else {
        return Err(TdcError::Malformed { at: Location::Header, message: "header not terminated by a blank line".into() });
    };
    let header_lines = text[..split].lines().enumerate().map(|(i, l)| (Location::Line(i + 1), l));
    let header = RunHeader::from_lines(header_lines)?;
    let first_event_line = text[..split].lines().count() + 2;
    let body = &text[split + 1..];
    if !body.is_empty() && !body.ends_with('\n') {
        let line = first_event_line + body.lines().count() - 1;
        return Err(TdcError::Malformed { at: Location::Line(line), message: "missing final newline".into() });
    }
    let mut checker = EventChecker { period: header.period_ticks(), last: None };
    let mut records = Vec::new();
    for (i, line) in body.split_terminator('\n').enumerate() {
        let at = Location::Line(first_event_line + i);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(TdcError::Malformed { at, message: format!("expected 3 fields, got {}", fields.len()) });
        }
        let r = TdcRecord {
            pulse_index: parse_decimal(at, "pulse", fields[0], 64)?,
            channel: parse_decimal(at, "channel", fields[1], 8)? as u8,
            timestamp_ticks: parse_decimal(at, "ticks", fields[2], 32)? as u32,
        };
        checker.push(at, r)?;
        records.push(r);
    }
    Ok((header, records))
}

fn parse_binary(bytes: &[u8]) -> Result<(RunHeader, Vec<TdcRecord>), TdcError> {
    if !bytes.starts_with(BINARY_MAGIC) {
        return Err(TdcError::BadMagic);
    }
    if bytes.len() < 8 {
        return Err(TdcError::Truncated("missing header length".into()));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body_start = 8 + header_len;
    if bytes.len() < body_start {
        return Err(TdcError::Truncated(format!("header needs {header_len} bytes")));
    }
    let text = std::str::from_utf8(&bytes[8..body_start])
        .map_err(|_| TdcError::Malformed { at: Location::Header, message: "invalid UTF-8".into() })?;
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(TdcError::Malformed { at: Location::Header, message: "missing final newline".into() });
    }
    let header = RunHeader::from_lines(text.lines().enumerate().map(|(i, l)| (Location::Line(i + 1), l)))?;
    let body = &bytes[body_start..];
    if body.len() % BINARY_EVENT_BYTES != 0 {
        return Err(TdcError::Truncated(format!(
            "{} trailing bytes after {} events",
            body.len() % BINARY_EVENT_BYTES,
            body.len() / BINARY_EVENT_BYTES
        )));
    }
    let mut checker = EventChecker { period: header.period_ticks(), last: None };
    let mut records = Vec::with_capacity(body.len() / BINARY_EVENT_BYTES);
    for (i, chunk) in body.chunks_exact(BINARY_EVENT_BYTES).enumerate() {
        let r = TdcRecord {
            pulse_index: u64::from_le_bytes(chunk[0..8].try_into().unwrap()),
            channel: chunk[8],
            timestamp_ticks: u32::from_le_bytes(chunk[9..13].try_into().unwrap()),
        };
        checker.push(Location::Event(i), r)?;
        records.push(r);
    }
    Ok((header, records))
}

/// Bin centers of one physical channel, in ticks, sorted.
#[derive(Debug, Clone)]
struct ChannelCenters {
    /// `(center_ticks, bank, bin)`
    centers: Vec<(i64, usize, usize)>,
}

fn ticks_of(ns: f64, tick_ps: f64) -> f64 {
    ns * 1000.0 / tick_ps
}

/// Converts bin-time offsets to TDC ticks and back.
#[derive(Debug, Clone)]
pub struct BinMap {
    window_ticks: i64,
    channels: Vec<ChannelCenters>,
}

impl BinMap {
    /// Refuses layouts where two centers of one channel lie within twice the
    /// trigger window of each other.
    pub fn new(layout: &TmdLayout) -> Result<Self, TdcError> {
        let window_ticks = (ticks_of(layout.trigger_window_ns, layout.tdc_tick_ps) + 1e-9).floor() as i64;
        let mut channels = Vec::with_capacity(layout.detectors_per_bank);
        for detector in 0..layout.detectors_per_bank {
            let mut centers = Vec::new();
            for bank in 0..layout.banks {
                for slot in 0..layout.bins_per_detector {
                    let bin = layout.bin_of(detector, slot);
                    let t = ticks_of(layout.bin_time_ns(bank, bin), layout.tdc_tick_ps).round() as i64;
                    centers.push((t, bank, bin));
                }
            }
            centers.sort();
            if let Some(w) = centers.windows(2).find(|w| w[1].0 - w[0].0 <= 2 * window_ticks) {
                return Err(TdcError::AmbiguousLayout(format!(
                    "channel {detector}: centers at {} and {} ticks overlap with window {window_ticks} ticks",
                    w[0].0, w[1].0
                )));
            }
            channels.push(ChannelCenters { centers });
        }
        Ok(Self { window_ticks, channels })
    }

    pub fn window_ticks(&self) -> i64 {
        self.window_ticks
    }

    /// Center tick of `bin` of `bank`.
    pub fn center(&self, layout: &TmdLayout, bank: usize, bin: usize) -> u32 {
        let (detector, _) = layout.locate(bin);
        self.channels[detector]
            .centers
            .iter()
            .find(|c| c.1 == bank && c.2 == bin)
            .map(|c| c.0 as u32)
            .expect("bin belongs to the layout")
    }

    /// `(bank, bin)` of an event, or `None` if it falls outside every window.
    pub fn assign(&self, channel: u8, ticks: u32) -> Result<Option<(usize, usize)>, TdcError> {
        let ch = self.channels.get(channel as usize).ok_or(TdcError::UnknownChannel {
            channel,
            detectors: self.channels.len(),
        })?;
        let t = ticks as i64;
        let idx = ch.centers.partition_point(|c| c.0 < t);
        let nearest = [idx.checked_sub(1), Some(idx)]
            .into_iter()
            .flatten()
            .filter_map(|i| ch.centers.get(i))
            .min_by_key(|c| (c.0 - t).abs());
        Ok(nearest.filter(|c| (c.0 - t).abs() <= self.window_ticks).map(|c| (c.1, c.2)))
    }
}

/// Timestamps of every click in `run`, at the bin centers, sorted.
pub fn timestamps_from_clicks(run: &ClickRun, layout: &TmdLayout) -> Result<Vec<TdcRecord>, TdcError> {
    let map = BinMap::new(layout)?;
    let mut out = Vec::new();
    for r in &run.records {
        let start = out.len();
        for bank in 0..run.banks {
            for bin in r.bins(bank) {
                let (detector, _) = layout.locate(bin);
                out.push(TdcRecord {
                    pulse_index: r.pulse_index,
                    channel: detector as u8,
                    timestamp_ticks: map.center(layout, bank, bin),
                });
            }
        }
        out[start..].sort_unstable();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BinningDiagnostics {
    pub accepted: u64,
    pub rejected: u64,
}

/// Maps timestamped events to bins and groups them per pulse. Events outside
/// every trigger window are dropped and counted.
pub fn bin_timestamps(
    records: &[TdcRecord],
    layout: &TmdLayout,
    pulses: u64,
) -> Result<(ClickRun, BinningDiagnostics), TdcError> {
    let map = BinMap::new(layout)?;
    let mut diag = BinningDiagnostics::default();
    let mut out: Vec<ClickRecord> = Vec::new();
    for r in records {
        if r.pulse_index >= pulses {
            return Err(TdcError::PulseOutOfRange { pulse: r.pulse_index, pulses });
        }
        let Some((bank, bin)) = map.assign(r.channel, r.timestamp_ticks)? else {
            diag.rejected += 1;
            continue;
        };
        diag.accepted += 1;
        match out.last_mut() {
            Some(last) if last.pulse_index == r.pulse_index => last.clicks[bank] |= 1 << bin,
            Some(last) if last.pulse_index > r.pulse_index => {
                return Err(TdcError::NonMonotonePulse {
                    at: Location::Event(0),
                    previous: last.pulse_index,
                    found: r.pulse_index,
                })
            }
            _ => {
                let mut clicks = [0u64; 2];
                clicks[bank] = 1 << bin;
                out.push(ClickRecord { pulse_index: r.pulse_index, clicks });
            }
        }
    }
    Ok((
        ClickRun { banks: layout.banks, modes: layout.modes(), pulses, records: out },
        diag,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> RunHeader {
        RunHeader::for_layout(&TmdLayout::with_defaults(1, 3, 2).unwrap(), 10)
    }

    fn rec(p: u64, c: u8, t: u32) -> TdcRecord {
        TdcRecord { pulse_index: p, channel: c, timestamp_ticks: t }
    }

    #[test]
    fn empty_file_is_header_only() {
        let bytes = write_text(&header(), &[]).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("format_version=1\ntdc_tick_ps=81\n"));
        assert!(text.ends_with("\n\n"));
        let (h, r) = parse_tdc_file(&bytes).unwrap();
        assert_eq!(h, header());
        assert!(r.is_empty());
        let bin = write_binary(&header(), &[]).unwrap();
        assert_eq!(bin.len(), binary_len(&header(), 0));
        assert_eq!(parse_tdc_file(&bin).unwrap(), (header(), vec![]));
    }

    #[test]
    fn single_record_round_trip() {
        let records = vec![rec(0, 0, 1234)];
        let text = write_text(&header(), &records).unwrap();
        assert!(String::from_utf8(text.clone()).unwrap().ends_with("\n\n0,0,1234\n"));
        assert_eq!(parse_tdc_file(&text).unwrap(), (header(), records.clone()));
        let bin = write_binary(&header(), &records).unwrap();
        assert_eq!(bin.len(), binary_len(&header(), 1));
        assert_eq!(parse_tdc_file(&bin).unwrap(), (header(), records));
    }

    #[test]
    fn unsorted_input_is_refused() {
        let records = vec![rec(1, 0, 5), rec(0, 0, 5)];
        assert_eq!(write_text(&header(), &records), Err(TdcError::UnsortedInput(1)));
        assert_eq!(write_binary(&header(), &records), Err(TdcError::UnsortedInput(1)));
    }

    fn with_events(events: &str) -> Vec<u8> {
        let mut bytes = write_text(&header(), &[]).unwrap();
        bytes.extend_from_slice(events.as_bytes());
        bytes
    }

    #[test]
    fn parse_errors_are_distinct() {
        let version = String::from_utf8(write_text(&header(), &[]).unwrap())
            .unwrap()
            .replace("format_version=1", "format_version=2");
        assert_eq!(
            parse_tdc_file(version.as_bytes()),
            Err(TdcError::VersionMismatch { found: "2".into() })
        );
        // header has 11 lines + blank, first event on line 13
        assert!(matches!(
            parse_tdc_file(&with_events("3,0,1\n2,0,1\n")),
            Err(TdcError::NonMonotonePulse { at: Location::Line(14), previous: 3, found: 2 })
        ));
        assert!(matches!(
            parse_tdc_file(&with_events("3,1,1\n3,0,1\n")),
            Err(TdcError::UnsortedEvents { at: Location::Line(14), pulse: 3 })
        ));
        assert!(matches!(
            parse_tdc_file(&with_events("3,256,1\n")),
            Err(TdcError::FieldOverflow { field: "channel", bits: 8, .. })
        ));
        assert!(matches!(
            parse_tdc_file(&with_events("3,0,4294967296\n")),
            Err(TdcError::FieldOverflow { field: "ticks", bits: 32, .. })
        ));
        assert!(matches!(
            parse_tdc_file(&with_events("18446744073709551616,0,1\n")),
            Err(TdcError::FieldOverflow { field: "pulse", bits: 64, .. })
        ));
        assert!(matches!(parse_tdc_file(&with_events("3,0\n")), Err(TdcError::Malformed { .. })));
        assert!(matches!(parse_tdc_file(&with_events("3, 0,1\n")), Err(TdcError::Malformed { .. })));
        assert!(matches!(parse_tdc_file(&with_events("03,0,1\n")), Err(TdcError::Malformed { .. })));
        assert!(matches!(parse_tdc_file(&with_events("3,0,1")), Err(TdcError::Malformed { .. })));
        assert!(matches!(
            parse_tdc_file(&with_events("3,0,700000\n")),
            Err(TdcError::TimestampOutOfPeriod { ticks: 700000, .. })
        ));
        assert!(matches!(parse_tdc_file(b"format_version=1\n"), Err(TdcError::Malformed { .. })));
        assert!(matches!(
            parse_tdc_file(b"format_version=1\n\n"),
            Err(TdcError::MissingKey(k)) if k == "tdc_tick_ps"
        ));
        assert!(matches!(
            parse_tdc_file(b"format_version=1\nformat_version=1\n\n"),
            Err(TdcError::DuplicateKey { .. })
        ));
    }

    #[test]
    fn binary_errors() {
        let bin = write_binary(&header(), &[rec(0, 0, 1), rec(0, 1, 2)]).unwrap();
        assert!(matches!(parse_tdc_file(&bin[..bin.len() - 3]), Err(TdcError::Truncated(_))));
        assert!(matches!(parse_tdc_file(&bin[..6]), Err(TdcError::Truncated(_))));
        let mut swapped = bin.clone();
        let n = swapped.len();
        // second event's pulse index -> 0 stays sorted; make it decrease instead
        swapped[n - 26] = 9;
        assert!(matches!(parse_tdc_file(&swapped), Err(TdcError::NonMonotonePulse { at: Location::Event(1), .. })));
    }

    #[test]
    fn metadata_round_trips_exactly() {
        let mut h = header();
        h.tdc_tick_ps = 80.99999999999999;
        h.set("source_kind", "thermal");
        h.set("source_mean", 0.1 + 0.2);
        let bytes = write_text(&h, &[]).unwrap();
        assert_eq!(parse_tdc_file(&bytes).unwrap().0, h);
        let bytes = write_binary(&h, &[]).unwrap();
        assert_eq!(parse_tdc_file(&bytes).unwrap().0, h);
        assert_eq!(h.pulses().unwrap(), 10);
        assert_eq!(header().layout().unwrap(), TmdLayout::with_defaults(1, 3, 2).unwrap());
    }

    #[test]
    fn bin_center_and_window_edges() {
        let layout = TmdLayout::with_defaults(1, 3, 2).unwrap();
        let map = BinMap::new(&layout).unwrap();
        let w = map.window_ticks() as u32;
        // slot 2 of detector 1 is bin 5 at 200 ns
        let center = map.center(&layout, 0, 5);
        assert_eq!(center, (200_000.0f64 / 81.0).round() as u32);
        assert_eq!(map.assign(1, center).unwrap(), Some((0, 5)));
        assert_eq!(map.assign(1, center + w).unwrap(), Some((0, 5)));
        assert_eq!(map.assign(1, center + w + 1).unwrap(), None);
        assert_eq!(map.assign(1, center - w - 1).unwrap(), None);
        let events = [rec(0, 1, center), rec(1, 1, center + w + 1)];
        let (run, diag) = bin_timestamps(&events, &layout, 2).unwrap();
        assert_eq!(diag, BinningDiagnostics { accepted: 1, rejected: 1 });
        assert_eq!(run.records, vec![ClickRecord { pulse_index: 0, clicks: [1 << 5, 0] }]);
        assert!(matches!(map.assign(2, 0), Err(TdcError::UnknownChannel { channel: 2, detectors: 2 })));
        assert!(matches!(bin_timestamps(&events, &layout, 1), Err(TdcError::PulseOutOfRange { .. })));
    }

    #[test]
    fn overlapping_banks_are_refused() {
        let mut layout = TmdLayout::with_defaults(2, 3, 2).unwrap();
        layout.bank_delay_ns = 100.0;
        assert!(matches!(BinMap::new(&layout), Err(TdcError::AmbiguousLayout(_))));
        layout.bank_delay_ns = 401.0;
        layout.trigger_window_ns = 0.5;
        assert!(BinMap::new(&layout).is_ok());
    }
}
