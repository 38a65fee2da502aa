//! Timestamped, labeled point streams and their on-disk formats.
//!
//! A [`PointStream`] is the capture-ordered output of the scanner. Timestamps
//! are opaque integer ticks and never decrease along the sequence; points that
//! share a tick keep their file order.
//!
//! # Binary layout
//!
//! All integers are little-endian.
//!
//! | field        | type                                    |
//! |--------------|-----------------------------------------|
//! | magic        | `b"PSTR"`                               |
//! | version      | `u16` (currently 1)                     |
//! | class count  | `u16` (C)                               |
//! | point count  | `u64`                                   |
//! | label map    | C × (`u16` byte length, UTF-8 name)     |
//! | meta entries | `u16` count, then (`u16` len, key, `u32` len, value) |
//! | records      | point count × 18 bytes                  |
//!
//! A record is `x, y, z` as `f32`, the label as `u16` and the timestamp as
//! `u32`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub type Label = u16;
pub type Tick = u32;

pub const MAGIC: [u8; 4] = *b"PSTR";
pub const FORMAT_VERSION: u16 = 1;
pub const RECORD_SIZE: usize = 3 * 4 + 2 + 4;

pub const CSV_HEADER: &str = "x,y,z,label,t";

/// One sensor detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPoint {
    pub position: [f32; 3],
    pub label: Label,
    pub t: Tick,
}

impl TimedPoint {
    pub fn new(x: f32, y: f32, z: f32, label: Label, t: Tick) -> Self {
        Self {
            position: [x, y, z],
            label,
            t,
        }
    }
}

/// Ordered class names; the position of a name is its label id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    names: Vec<String>,
}

/// Class names used by the synthetic rooms.
pub const ROOM_CLASSES: [&str; 11] = [
    "floor", "wall", "column", "window", "door", "table", "chair", "sofa", "bookcase", "board",
    "clutter",
];

impl LabelMap {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() > usize::from(u16::MAX) {
            return Err(Error::Config(format!("{} classes exceed the u16 label field", names.len())));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::Config(format!("duplicate class name {name:?}")));
            }
        }
        Ok(Self { names })
    }

    /// The eleven indoor classes (floor, wall, ..., clutter).
    pub fn room_classes() -> Self {
        Self {
            names: ROOM_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, label: Label) -> Option<&str> {
        self.names.get(usize::from(label)).map(String::as_str)
    }

    pub fn label_of(&self, name: &str) -> Option<Label> {
        self.names.iter().position(|n| n == name).map(|i| i as Label)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Capture-ordered sequence of detections. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PointStream {
    points: Vec<TimedPoint>,
    labels: LabelMap,
    meta: BTreeMap<String, String>,
}

impl PointStream {
    /// Validates finiteness, label range and timestamp monotonicity.
    pub fn new(
        points: Vec<TimedPoint>,
        labels: LabelMap,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        validate_points(&points, labels.len())?;
        Ok(Self {
            points,
            labels,
            meta,
        })
    }

    pub fn empty(labels: LabelMap) -> Self {
        Self {
            points: Vec::new(),
            labels,
            meta: BTreeMap::new(),
        }
    }

    pub fn points(&self) -> &[TimedPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &LabelMap {
        &self.labels
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn max_timestamp(&self) -> Option<Tick> {
        self.points.last().map(|p| p.t)
    }

    /// Index of the first point with a timestamp strictly greater than `t`.
    pub fn prefix_len(&self, t: i64) -> usize {
        self.points.partition_point(|p| i64::from(p.t) <= t)
    }

    /// A copy with extra metadata entries merged in.
    pub fn with_meta(mut self, entries: impl IntoIterator<Item = (String, String)>) -> Self {
        self.meta.extend(entries);
        self
    }
}

fn validate_points(points: &[TimedPoint], class_count: usize) -> Result<()> {
    let mut previous: Option<Tick> = None;
    for (index, p) in points.iter().enumerate() {
        if !p.position.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFiniteCoordinate(index));
        }
        if usize::from(p.label) >= class_count {
            return Err(Error::LabelOutOfRange {
                index,
                label: p.label,
                class_count,
            });
        }
        if let Some(prev) = previous {
            if p.t < prev {
                return Err(Error::NonMonotonicTimestamp {
                    index,
                    previous: prev,
                    current: p.t,
                });
            }
        }
        previous = Some(p.t);
    }
    Ok(())
}

/// Serializes `stream` and returns the number of bytes written.
pub fn write_stream<W: Write>(stream: &PointStream, mut out: W) -> Result<u64> {
    let bytes = encode(stream)?;
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(bytes.len() as u64)
}

pub fn write_stream_file(stream: &PointStream, path: impl AsRef<Path>) -> Result<u64> {
    let file = File::create(path)?;
    write_stream(stream, BufWriter::new(file))
}

fn encode(stream: &PointStream) -> Result<Vec<u8>> {
    // Points were validated when the stream was built.
    let mut buf = Vec::with_capacity(64 + stream.len() * RECORD_SIZE);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(stream.class_count() as u16).to_le_bytes());
    buf.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    for name in stream.labels.names() {
        put_str16(&mut buf, name)?;
    }
    if stream.meta.len() > usize::from(u16::MAX) {
        return Err(Error::Format("too many metadata entries".into()));
    }
    buf.extend_from_slice(&(stream.meta.len() as u16).to_le_bytes());
    for (key, value) in &stream.meta {
        put_str16(&mut buf, key)?;
        let len = u32::try_from(value.len())
            .map_err(|_| Error::Format(format!("metadata value for {key:?} too long")))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(value.as_bytes());
    }
    for p in &stream.points {
        for c in p.position {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        buf.extend_from_slice(&p.label.to_le_bytes());
        buf.extend_from_slice(&p.t.to_le_bytes());
    }
    Ok(buf)
}

fn put_str16(buf: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| Error::Format(format!("string of {} bytes exceeds u16 length", s.len())))?;
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

/// Parses a complete stream. Truncated or trailing input is a format error.
pub fn read_stream<R: Read>(mut source: R) -> Result<PointStream> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn read_stream_file(path: impl AsRef<Path>) -> Result<PointStream> {
    read_stream(File::open(path)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated input while reading {what}")))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("slice length checked"))
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn string(&mut self, len: usize, what: &str) -> Result<String> {
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Format(format!("{what} is not UTF-8")))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

fn decode(bytes: &[u8]) -> Result<PointStream> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.array::<4>("magic")? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = cur.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let class_count = usize::from(cur.u16("class count")?);
    let point_count = cur.u64("point count")?;

    let mut names = Vec::with_capacity(class_count);
    for _ in 0..class_count {
        let len = usize::from(cur.u16("label name length")?);
        names.push(cur.string(len, "label name")?);
    }
    let labels = LabelMap::new(names).map_err(|e| Error::Format(e.to_string()))?;

    let meta_count = cur.u16("metadata count")?;
    let mut meta = BTreeMap::new();
    for _ in 0..meta_count {
        let klen = usize::from(cur.u16("metadata key length")?);
        let key = cur.string(klen, "metadata key")?;
        let vlen = cur.u32("metadata value length")? as usize;
        let value = cur.string(vlen, "metadata value")?;
        meta.insert(key, value);
    }

    let expected = usize::try_from(point_count)
        .ok()
        .and_then(|n| n.checked_mul(RECORD_SIZE))
        .ok_or_else(|| Error::Format("point count overflows".into()))?;
    if cur.remaining() != expected {
        return Err(Error::Format(format!(
            "expected {expected} record bytes for {point_count} points, found {}",
            cur.remaining()
        )));
    }

    let mut points = Vec::with_capacity(point_count as usize);
    for _ in 0..point_count {
        let x = f32::from_le_bytes(cur.array("x")?);
        let y = f32::from_le_bytes(cur.array("y")?);
        let z = f32::from_le_bytes(cur.array("z")?);
        let label = cur.u16("label")?;
        let t = cur.u32("timestamp")?;
        points.push(TimedPoint::new(x, y, z, label, t));
    }
    PointStream::new(points, labels, meta)
}

/// Renders `x,y,z,label,t` lines after a header. Floats use the shortest
/// representation that parses back to the same value.
pub fn export_csv(stream: &PointStream) -> String {
    let mut out = String::with_capacity(32 * (stream.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for p in stream.points() {
        let [x, y, z] = p.position;
        let _ = writeln!(out, "{x},{y},{z},{},{}", p.label, p.t);
    }
    out
}

/// Parses the output of [`export_csv`] back into points.
pub fn parse_csv(text: &str) -> Result<Vec<TimedPoint>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::Format("missing CSV header".into())),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = || Error::Format(format!("malformed CSV line {}: {line:?}", i + 2));
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(bad());
            }
            let coord = |s: &str| s.trim().parse::<f32>().map_err(|_| bad());
            Ok(TimedPoint::new(
                coord(fields[0])?,
                coord(fields[1])?,
                coord(fields[2])?,
                fields[3].trim().parse().map_err(|_| bad())?,
                fields[4].trim().parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}
