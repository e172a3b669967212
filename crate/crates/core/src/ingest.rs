//! Readers and writers for raw recordings, minute tables, covariates,
//! mortality linkage and externally computed step series.
//!
//! Text inputs may be gzip-compressed; compression is detected from the
//! magic bytes, not the file name.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::detectors::BUILTIN_DETECTORS;
use crate::error::{Error, Result};
use crate::model::{
    parse_bool, parse_value, Alcohol, BmiCategory, Education, MinuteDataset, MinuteRecord,
    MortalityRecord, RaceEthnicity, SelfRatedHealth, Sex, Smoking, SubjectCovariates,
    SubjectSummary, TriaxialRecording, WearState, DEFAULT_SAMPLE_RATE_HZ,
};

/// Magic bytes of the binary sample cache.
pub const CACHE_MAGIC: &[u8; 4] = b"SFG1";

const TIMESTAMP_FORMATS: &[&str] = &[
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y/%m/%d %H:%M:%S%.f",
];

/// Layout of a delimiter-separated raw acceleration file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFileSchema {
    /// First column is a timestamp (seconds or date-time), followed by x, y, z.
    pub has_timestamp: bool,
    pub delimiter: u8,
    pub header: bool,
    /// `None` sniffs the gzip magic bytes.
    pub gzip: Option<bool>,
    pub sample_rate_hz: f64,
    /// Start time for files without date-time stamps.
    pub start: Option<NaiveDateTime>,
    pub chunk_seconds: f64,
}

impl Default for RawFileSchema {
    fn default() -> Self {
        Self {
            has_timestamp: false,
            delimiter: b',',
            header: true,
            gzip: None,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            start: None,
            chunk_seconds: 3600.0,
        }
    }
}

impl RawFileSchema {
    pub const KEYS: &'static [&'static str] = &[
        "timestamp",
        "delimiter",
        "header",
        "gzip",
        "sample_rate_hz",
        "start",
        "chunk_seconds",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let full = format!("raw.{key}");
        match key {
            "timestamp" => self.has_timestamp = parse_bool(&full, value)?,
            "delimiter" => {
                self.delimiter = match value.trim() {
                    "tab" | "\\t" => b'\t',
                    "space" => b' ',
                    v if v.len() == 1 => v.as_bytes()[0],
                    _ => return Err(Error::invalid(&full, "expected a single character")),
                }
            }
            "header" => self.header = parse_bool(&full, value)?,
            "gzip" => {
                self.gzip = match value.trim() {
                    "auto" => None,
                    v => Some(parse_bool(&full, v)?),
                }
            }
            "sample_rate_hz" => {
                let rate: f64 = parse_value(&full, value)?;
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(Error::invalid(&full, "must be positive"));
                }
                self.sample_rate_hz = rate;
            }
            "start" => self.start = Some(parse_datetime(value.trim()).ok_or_else(|| Error::invalid(&full, "bad date-time"))?),
            "chunk_seconds" => {
                let s: f64 = parse_value(&full, value)?;
                if !(s > 0.0) {
                    return Err(Error::invalid(&full, "must be positive"));
                }
                self.chunk_seconds = s;
            }
            _ => return Err(Error::UnknownKey(full)),
        }
        Ok(())
    }

    pub fn chunk_samples(&self) -> usize {
        ((self.chunk_seconds * self.sample_rate_hz).round() as usize).max(1)
    }

    fn default_start(&self) -> NaiveDateTime {
        self.start.unwrap_or_else(|| {
            NaiveDate::from_ymd_opt(2000, 1, 1)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .expect("valid constant date")
        })
    }
}

fn parse_datetime(s: &str) -> Option<NaiveDateTime> {
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// Opens a text file, transparently decompressing gzip.
pub fn open_text(path: &Path, gzip: Option<bool>) -> Result<Box<dyn BufRead + Send>> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let compressed = match gzip {
        Some(flag) => flag,
        None => {
            let mut magic = [0u8; 2];
            let n = file.read(&mut magic).map_err(|e| Error::io(path, e))?;
            file.seek(SeekFrom::Start(0)).map_err(|e| Error::io(path, e))?;
            n == 2 && magic == [0x1f, 0x8b]
        }
    };
    Ok(if compressed {
        Box::new(BufReader::with_capacity(1 << 16, MultiGzDecoder::new(file)))
    } else {
        Box::new(BufReader::with_capacity(1 << 16, file))
    })
}

/// Creates a text file, gzip-compressed when the name ends in `.gz`.
pub fn create_text(path: &Path) -> Result<Box<dyn Write + Send>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    Ok(if gz {
        Box::new(BufWriter::new(GzEncoder::new(file, Compression::fast())))
    } else {
        Box::new(BufWriter::new(file))
    })
}

/// Subject identifier derived from a file name: everything before the first dot.
pub fn subject_id_from_path(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.split('.').next().unwrap_or_default().to_string()
}

/// Streaming parser yielding fixed-size chunks of a raw recording.
pub struct RawReader<R> {
    reader: R,
    schema: RawFileSchema,
    source: PathBuf,
    subject_id: String,
    line_no: u64,
    line: String,
    start: Option<NaiveDateTime>,
    first_t: f64,
    last_t: f64,
    n_samples: u64,
    chunk_start_sample: u64,
    done: bool,
}

impl<R: BufRead> RawReader<R> {
    pub fn new(reader: R, schema: RawFileSchema, subject_id: impl Into<String>, source: impl Into<PathBuf>) -> Self {
        Self {
            reader,
            schema,
            source: source.into(),
            subject_id: subject_id.into(),
            line_no: 0,
            line: String::new(),
            start: None,
            first_t: 0.0,
            last_t: f64::NEG_INFINITY,
            n_samples: 0,
            chunk_start_sample: 0,
            done: false,
        }
    }

    /// Total samples read so far.
    pub fn samples_read(&self) -> u64 {
        self.n_samples
    }

    fn parse_err(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.clone(),
            line: self.line_no,
            reason: reason.into(),
        }
    }

    /// Seconds (relative to an arbitrary origin) and, for date-time stamps, the absolute time.
    fn parse_time(&self, field: &str) -> Result<(f64, Option<NaiveDateTime>)> {
        if let Ok(t) = field.parse::<f64>() {
            if t.is_finite() {
                return Ok((t, None));
            }
        }
        let dt = parse_datetime(field).ok_or_else(|| self.parse_err(format!("bad timestamp `{field}`")))?;
        let secs = dt.and_utc().timestamp_micros() as f64 / 1e6;
        Ok((secs, Some(dt)))
    }

    fn check_rate(&self) -> Result<()> {
        if !self.schema.has_timestamp || self.n_samples < 2 {
            return Ok(());
        }
        let observed = (self.n_samples - 1) as f64 / (self.last_t - self.first_t);
        if ((observed / self.schema.sample_rate_hz) - 1.0).abs() > 1e-4 {
            return Err(self.parse_err(format!(
                "row cadence {observed:.6} Hz does not match declared {} Hz",
                self.schema.sample_rate_hz
            )));
        }
        Ok(())
    }

    fn next_chunk(&mut self) -> Result<Option<TriaxialRecording>> {
        if self.done {
            return Ok(None);
        }
        let cap = self.schema.chunk_samples();
        let (mut x, mut y, mut z) = (Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap));
        let delim = self.schema.delimiter as char;
        let n_fields = if self.schema.has_timestamp { 4 } else { 3 };
        while x.len() < cap {
            self.line.clear();
            let read = self
                .reader
                .read_line(&mut self.line)
                .map_err(|e| Error::io(&self.source, e))?;
            if read == 0 {
                self.done = true;
                break;
            }
            self.line_no += 1;
            if self.line_no == 1 && self.schema.header {
                continue;
            }
            let row = self.line.trim_end_matches(['\n', '\r']);
            if row.trim().is_empty() {
                continue;
            }
            let mut fields = [""; 4];
            let mut count = 0;
            for f in row.split(delim) {
                if count == n_fields {
                    count += 1;
                    break;
                }
                fields[count] = f.trim();
                count += 1;
            }
            if count != n_fields {
                return Err(self.parse_err(format!("expected {n_fields} columns")));
            }
            let axes = &fields[n_fields - 3..n_fields];
            let mut v = [0f32; 3];
            for (k, f) in axes.iter().enumerate() {
                v[k] = match f.parse::<f32>() {
                    Ok(val) if val.is_finite() => val,
                    _ => {
                        return Err(self.parse_err(format!(
                            "bad {} value `{f}`",
                            ["x", "y", "z"][k]
                        )))
                    }
                };
            }
            if self.schema.has_timestamp {
                let (t, abs) = self.parse_time(fields[0])?;
                if self.n_samples == 0 {
                    self.first_t = t;
                    self.start = Some(match abs {
                        Some(dt) => dt,
                        None => self.schema.default_start() + Duration::microseconds((t * 1e6).round() as i64),
                    });
                } else if t <= self.last_t {
                    return Err(self.parse_err("timestamps are not strictly increasing"));
                }
                self.last_t = t;
            } else if self.n_samples == 0 {
                self.start = Some(self.schema.default_start());
            }
            x.push(v[0]);
            y.push(v[1]);
            z.push(v[2]);
            self.n_samples += 1;
        }
        self.check_rate()?;
        if x.is_empty() {
            return Ok(None);
        }
        let rate = self.schema.sample_rate_hz;
        let origin = self.start.unwrap_or_else(|| self.schema.default_start());
        let offset = (self.chunk_start_sample as f64 / rate * 1e6).round() as i64;
        self.chunk_start_sample += x.len() as u64;
        TriaxialRecording::new(self.subject_id.clone(), origin + Duration::microseconds(offset), rate, x, y, z).map(Some)
    }
}

impl<R: BufRead> Iterator for RawReader<R> {
    type Item = Result<TriaxialRecording>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.next_chunk() {
            Ok(Some(chunk)) => Some(Ok(chunk)),
            Ok(None) => None,
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Streams a raw text recording in chunks of `schema.chunk_seconds`.
pub fn read_raw_recording(path: &Path, schema: &RawFileSchema) -> Result<RawReader<Box<dyn BufRead + Send>>> {
    let reader = open_text(path, schema.gzip)?;
    Ok(RawReader::new(reader, schema.clone(), subject_id_from_path(path), path))
}

/// Start time of a raw text file, reading only its first data row.
pub fn raw_start_time(path: &Path, schema: &RawFileSchema) -> Result<NaiveDateTime> {
    let mut s = schema.clone();
    s.chunk_seconds = 1.0 / s.sample_rate_hz;
    let mut reader = read_raw_recording(path, &s)?;
    match reader.next() {
        Some(chunk) => Ok(chunk?.start()),
        None => Ok(s.default_start()),
    }
}

/// Writes a recording as `t,x,y,z` (date-time stamps) or `x,y,z` rows with a header.
pub fn write_raw_recording(rec: &TriaxialRecording, path: &Path, with_timestamps: bool) -> Result<()> {
    let mut out = create_text(path)?;
    let io_err = |e| Error::io(path, e);
    if with_timestamps {
        writeln!(out, "t,x,y,z").map_err(io_err)?;
    } else {
        writeln!(out, "x,y,z").map_err(io_err)?;
    }
    for i in 0..rec.len() {
        if with_timestamps {
            write!(out, "{},", rec.time_of(i).format("%Y-%m-%d %H:%M:%S%.6f")).map_err(io_err)?;
        }
        writeln!(out, "{},{},{}", rec.x()[i], rec.y()[i], rec.z()[i]).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Writer for the binary sample cache: `SFG1`, u32 sample count, then the x,
/// y and z blocks as little-endian `f32`.
///
/// The y and z blocks are spooled to side files so samples can be appended
/// chunk by chunk.
pub struct CacheWriter {
    path: PathBuf,
    main: BufWriter<File>,
    side: [(PathBuf, BufWriter<File>); 2],
    count: u64,
}

impl CacheWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let open = |p: &Path| -> Result<BufWriter<File>> {
            Ok(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?))
        };
        let mut main = open(path)?;
        main.write_all(CACHE_MAGIC).map_err(|e| Error::io(path, e))?;
        main.write_all(&0u32.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        let py = path.with_extension("sfg.y.tmp");
        let pz = path.with_extension("sfg.z.tmp");
        let side = [(py.clone(), open(&py)?), (pz.clone(), open(&pz)?)];
        Ok(Self {
            path: path.to_path_buf(),
            main,
            side,
            count: 0,
        })
    }

    pub fn append(&mut self, chunk: &TriaxialRecording) -> Result<()> {
        let path = self.path.clone();
        let put = |w: &mut BufWriter<File>, values: &[f32]| -> io::Result<()> {
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
            Ok(())
        };
        put(&mut self.main, chunk.x()).map_err(|e| Error::io(&path, e))?;
        put(&mut self.side[0].1, chunk.y()).map_err(|e| Error::io(&path, e))?;
        put(&mut self.side[1].1, chunk.z()).map_err(|e| Error::io(&path, e))?;
        self.count += chunk.len() as u64;
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let path = self.path;
        let count = u32::try_from(self.count)
            .map_err(|_| Error::InvalidInput("recording too long for the cache format".into()))?;
        let mut main = self.main.into_inner().map_err(|e| Error::io(&path, e.into_error()))?;
        for (side_path, w) in self.side {
            let f = w.into_inner().map_err(|e| Error::io(&side_path, e.into_error()))?;
            drop(f);
            let mut r = File::open(&side_path).map_err(|e| Error::io(&side_path, e))?;
            io::copy(&mut r, &mut main).map_err(|e| Error::io(&path, e))?;
            std::fs::remove_file(&side_path).map_err(|e| Error::io(&side_path, e))?;
        }
        main.seek(SeekFrom::Start(4)).map_err(|e| Error::io(&path, e))?;
        main.write_all(&count.to_le_bytes()).map_err(|e| Error::io(&path, e))?;
        main.sync_all().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

/// Chunked reader over a binary sample cache.
pub struct CacheReader {
    path: PathBuf,
    blocks: [BufReader<File>; 3],
    count: u64,
    pos: u64,
    chunk: usize,
    subject_id: String,
    start: NaiveDateTime,
    sample_rate_hz: f64,
}

impl CacheReader {
    pub fn open(path: &Path, subject_id: &str, start: NaiveDateTime, sample_rate_hz: f64, chunk: usize) -> Result<Self> {
        let count = cache_sample_count(path)?;
        let mut blocks = Vec::with_capacity(3);
        for axis in 0..3u64 {
            let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
            f.seek(SeekFrom::Start(8 + axis * 4 * count)).map_err(|e| Error::io(path, e))?;
            blocks.push(BufReader::with_capacity(1 << 16, f));
        }
        let blocks: [BufReader<File>; 3] = blocks.try_into().map_err(|_| Error::InvalidInput("cache".into()))?;
        Ok(Self {
            path: path.to_path_buf(),
            blocks,
            count,
            pos: 0,
            chunk: chunk.max(1),
            subject_id: subject_id.to_string(),
            start,
            sample_rate_hz,
        })
    }

    pub fn sample_count(&self) -> u64 {
        self.count
    }

    fn next_chunk(&mut self) -> Result<Option<TriaxialRecording>> {
        if self.pos >= self.count {
            return Ok(None);
        }
        let n = (self.count - self.pos).min(self.chunk as u64) as usize;
        let mut bytes = vec![0u8; n * 4];
        let mut axes: Vec<Vec<f32>> = Vec::with_capacity(3);
        for b in self.blocks.iter_mut() {
            b.read_exact(&mut bytes).map_err(|e| Error::io(&self.path, e))?;
            axes.push(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            );
        }
        let offset = (self.pos as f64 / self.sample_rate_hz * 1e6).round() as i64;
        self.pos += n as u64;
        let z = axes.pop().unwrap_or_default();
        let y = axes.pop().unwrap_or_default();
        let x = axes.pop().unwrap_or_default();
        TriaxialRecording::new(
            self.subject_id.clone(),
            self.start + Duration::microseconds(offset),
            self.sample_rate_hz,
            x,
            y,
            z,
        )
        .map(Some)
    }
}

impl Iterator for CacheReader {
    type Item = Result<TriaxialRecording>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.next_chunk() {
            Ok(Some(c)) => Some(Ok(c)),
            Ok(None) => None,
            Err(e) => {
                self.pos = self.count;
                Some(Err(e))
            }
        }
    }
}

/// Sample count of a well-formed cache file.
pub fn cache_sample_count(path: &Path) -> Result<u64> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = [0u8; 8];
    f.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
    if &header[..4] != CACHE_MAGIC {
        return Err(Error::InvalidInput(format!("{}: not a sample cache", path.display())));
    }
    let count = u32::from_le_bytes([header[4], header[5], header[6], header[7]]) as u64;
    let len = f.metadata().map_err(|e| Error::io(path, e))?.len();
    if len != 8 + 12 * count {
        return Err(Error::InvalidInput(format!("{}: truncated sample cache", path.display())));
    }
    Ok(count)
}

/// Chunks of a raw recording, from the binary cache when one is present.
pub enum RecordingChunks {
    Text {
        reader: RawReader<Box<dyn BufRead + Send>>,
        cache: Option<CacheWriter>,
    },
    Cache(CacheReader),
}

impl Iterator for RecordingChunks {
    type Item = Result<TriaxialRecording>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            RecordingChunks::Cache(r) => r.next(),
            RecordingChunks::Text { reader, cache } => match reader.next() {
                Some(Ok(chunk)) => {
                    if let Some(w) = cache.as_mut() {
                        if let Err(e) = w.append(&chunk) {
                            return Some(Err(e));
                        }
                    }
                    Some(Ok(chunk))
                }
                Some(Err(e)) => {
                    *cache = None;
                    Some(Err(e))
                }
                None => {
                    if let Some(w) = cache.take() {
                        if let Err(e) = w.finish() {
                            return Some(Err(e));
                        }
                    }
                    None
                }
            },
        }
    }
}

impl RecordingChunks {
    pub fn from_cache(&self) -> bool {
        matches!(self, RecordingChunks::Cache(_))
    }
}

/// Opens a raw recording, reading from `cache_path` if a valid cache exists
/// and otherwise parsing the text while writing the cache.
pub fn open_recording(path: &Path, schema: &RawFileSchema, cache_path: Option<&Path>) -> Result<RecordingChunks> {
    if let Some(cp) = cache_path {
        let fresh = match (std::fs::metadata(cp), std::fs::metadata(path)) {
            (Ok(c), Ok(src)) => match (c.modified(), src.modified()) {
                (Ok(cm), Ok(sm)) => cm >= sm,
                _ => true,
            },
            _ => false,
        };
        if fresh && cache_sample_count(cp).is_ok() {
            let start = if schema.has_timestamp {
                raw_start_time(path, schema)?
            } else {
                schema.default_start()
            };
            let reader = CacheReader::open(cp, &subject_id_from_path(path), start, schema.sample_rate_hz, schema.chunk_samples())?;
            return Ok(RecordingChunks::Cache(reader));
        }
    }
    let reader = read_raw_recording(path, schema)?;
    let cache = match cache_path {
        Some(cp) => Some(CacheWriter::create(cp)?),
        None => None,
    };
    Ok(RecordingChunks::Text { reader, cache })
}

/// Header-indexed CSV table with string cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Shortest round-trip formatting; non-finite values are written as `NA`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".to_string()
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_else(|| "NA".to_string())
}

/// Writes a comma-separated table with header row.
pub fn write_table(table: &Table, path: &Path) -> Result<()> {
    let out = create_text(path)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let to_err = |e: csv::Error| Error::io(path, io::Error::other(e));
    w.write_record(&table.columns).map_err(to_err)?;
    for row in &table.rows {
        w.write_record(row).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_table(path: &Path) -> Result<Table> {
    let input = open_text(path, None)?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let to_err = |e: csv::Error| {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: e.to_string(),
        }
    };
    let columns = r.headers().map_err(to_err)?.iter().map(|s| s.trim().to_string()).collect();
    let mut table = Table {
        columns,
        rows: Vec::new(),
    };
    for rec in r.records() {
        let rec = rec.map_err(to_err)?;
        table.rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(table)
}

/// Row accessor resolving columns by name with line-numbered errors.
struct RowView<'a> {
    table: &'a Table,
    path: &'a Path,
}

impl<'a> RowView<'a> {
    fn require(&self, names: &[&str]) -> Result<usize> {
        names
            .iter()
            .find_map(|n| self.table.column(n))
            .ok_or_else(|| Error::Parse {
                path: self.path.to_path_buf(),
                line: 1,
                reason: format!("missing column `{}`", names[0]),
            })
    }

    fn optional(&self, names: &[&str]) -> Option<usize> {
        names.iter().find_map(|n| self.table.column(n))
    }

    fn err(&self, row: usize, reason: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: row as u64 + 2,
            reason: reason.into(),
        }
    }

    fn parse<T: std::str::FromStr>(&self, row: usize, col: usize) -> Result<T> {
        let cell = self.table.rows[row][col].trim();
        cell.parse()
            .map_err(|_| self.err(row, format!("bad `{}` value `{cell}`", self.table.columns[col])))
    }

    fn cell(&self, row: usize, col: usize) -> &'a str {
        self.table.rows[row][col].trim()
    }
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c == "."
}

fn parse_flag(cell: &str) -> Option<bool> {
    match cell.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Some(true),
        "0" | "false" | "no" | "n" => Some(false),
        _ => None,
    }
}

/// Reads a minute-level table `subject,day,minute,wear,flag,mims[,ac][,steps_*...]`.
pub fn read_minute_file(path: &Path) -> Result<Vec<MinuteRecord>> {
    let table = read_table(path)?;
    let v = RowView { table: &table, path };
    let c_subject = v.require(&["subject", "subject_id"])?;
    let c_day = v.require(&["day", "day_index"])?;
    let c_minute = v.require(&["minute", "minute_of_day"])?;
    let c_wear = v.require(&["wear"])?;
    let c_flag = v.require(&["flag", "quality_flagged"])?;
    let c_mims = v.require(&["mims"])?;
    let c_ac = v.optional(&["ac"]);
    let step_cols: Vec<(usize, String)> = table
        .columns
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.strip_prefix("steps_").map(|n| (i, n.to_string())))
        .collect();

    let mut out = Vec::with_capacity(table.rows.len());
    for row in 0..table.rows.len() {
        let wear: WearState = v
            .cell(row, c_wear)
            .parse()
            .map_err(|_| v.err(row, format!("unknown wear label `{}`", v.cell(row, c_wear))))?;
        let flag = parse_flag(v.cell(row, c_flag)).ok_or_else(|| v.err(row, "bad flag"))?;
        let mims: f64 = v.parse(row, c_mims)?;
        let mut rec = MinuteRecord::new(
            v.cell(row, c_subject),
            v.parse(row, c_day)?,
            v.parse(row, c_minute)?,
            wear,
            flag,
            mims,
        )
        .map_err(|e| v.err(row, e.to_string()))?;
        if let Some(c) = c_ac {
            if !is_missing(v.cell(row, c)) {
                rec.ac = Some(v.parse(row, c)?);
            }
        }
        for (c, name) in &step_cols {
            if is_missing(v.cell(row, *c)) {
                continue;
            }
            let s: f64 = v.parse(row, *c)?;
            if !(s >= 0.0 && s.is_finite()) {
                return Err(v.err(row, format!("negative step count {s}")));
            }
            rec.steps.insert(name.clone(), s);
        }
        out.push(rec);
    }
    Ok(MinuteDataset::new(out)?.into_records())
}

/// Minute records as a table with deterministic column order.
pub fn minute_table(records: &[MinuteRecord]) -> Table {
    let has_ac = records.iter().any(|r| r.ac.is_some());
    let names: BTreeSet<&str> = records.iter().flat_map(|r| r.steps.keys().map(String::as_str)).collect();
    let mut cols: Vec<String> = ["subject", "day", "minute", "wear", "flag", "mims"].map(String::from).to_vec();
    if has_ac {
        cols.push("ac".into());
    }
    cols.extend(names.iter().map(|n| format!("steps_{n}")));
    let mut t = Table::new(cols);
    for r in records {
        let mut row = vec![
            r.subject_id.clone(),
            r.day_index.to_string(),
            r.minute_of_day.to_string(),
            r.wear.label().to_string(),
            u8::from(r.quality_flagged).to_string(),
            fmt_f64(r.mims),
        ];
        if has_ac {
            row.push(r.ac.map(|a| a.to_string()).unwrap_or_else(|| "NA".into()));
        }
        for n in &names {
            row.push(fmt_opt(r.steps.get(*n).copied()));
        }
        t.push(row);
    }
    t
}

pub fn write_minute_file(records: &[MinuteRecord], path: &Path) -> Result<()> {
    write_table(&minute_table(records), path)
}

pub const COVARIATE_COLUMNS: &[&str] = &[
    "subject",
    "wave",
    "age",
    "sex",
    "race_ethnicity",
    "education",
    "bmi_category",
    "diabetes",
    "chd",
    "chf",
    "heart_attack",
    "stroke",
    "cancer",
    "mobility_problem",
    "alcohol",
    "smoking",
    "self_reported_health",
    "survey_weight",
    "stratum",
    "psu",
];

/// Reads the covariate table. Empty or `NA` cells become missing values;
/// an empty alcohol cell is the explicit "missing alcohol" level.
pub fn read_covariates(path: &Path) -> Result<Vec<SubjectCovariates>> {
    let table = read_table(path)?;
    let v = RowView { table: &table, path };
    let col = |name: &str| v.require(&[name]);
    let c_subject = v.require(&["subject", "subject_id"])?;
    let c_wave = v.optional(&["wave"]);
    let c_age = v.require(&["age", "age_years"])?;
    let c_weight = v.require(&["survey_weight", "weight"])?;
    let c_stratum = v.require(&["stratum", "stratum_id"])?;
    let c_psu = v.require(&["psu", "psu_id"])?;
    let cols = [
        col("sex")?,
        col("race_ethnicity")?,
        col("education")?,
        col("bmi_category")?,
        col("diabetes")?,
        col("chd")?,
        col("chf")?,
        col("heart_attack")?,
        col("stroke")?,
        col("cancer")?,
        col("mobility_problem")?,
        col("alcohol")?,
        col("smoking")?,
        col("self_reported_health")?,
    ];

    fn level<T>(v: &RowView, row: usize, c: usize, parse: fn(&str) -> Option<T>) -> Result<Option<T>> {
        let cell = v.cell(row, c);
        if is_missing(cell) {
            return Ok(None);
        }
        parse(cell)
            .map(Some)
            .ok_or_else(|| v.err(row, format!("unknown `{}` level `{cell}`", v.table.columns[c])))
    }

    let mut out = Vec::with_capacity(table.rows.len());
    for row in 0..table.rows.len() {
        let age: f64 = v.parse(row, c_age)?;
        let weight: f64 = v.parse(row, c_weight)?;
        let mut c = SubjectCovariates::new(v.cell(row, c_subject), age, weight).map_err(|e| v.err(row, e.to_string()))?;
        c.wave = c_wave.map(|w| v.cell(row, w).to_string()).filter(|w| !w.is_empty());
        c.sex = level(&v, row, cols[0], Sex::parse)?;
        c.race_ethnicity = level(&v, row, cols[1], RaceEthnicity::parse)?;
        c.education = level(&v, row, cols[2], Education::parse)?;
        c.bmi_category = level(&v, row, cols[3], BmiCategory::parse)?;
        c.diabetes = level(&v, row, cols[4], parse_flag)?;
        c.chd = level(&v, row, cols[5], parse_flag)?;
        c.chf = level(&v, row, cols[6], parse_flag)?;
        c.heart_attack = level(&v, row, cols[7], parse_flag)?;
        c.stroke = level(&v, row, cols[8], parse_flag)?;
        c.cancer = level(&v, row, cols[9], parse_flag)?;
        c.mobility_problem = level(&v, row, cols[10], parse_flag)?;
        c.alcohol = level(&v, row, cols[11], Alcohol::parse)?.unwrap_or(Alcohol::Missing);
        c.smoking = level(&v, row, cols[12], Smoking::parse)?;
        c.self_reported_health = level(&v, row, cols[13], SelfRatedHealth::parse)?;
        c.stratum_id = v.cell(row, c_stratum).to_string();
        c.psu_id = v.cell(row, c_psu).to_string();
        out.push(c);
    }
    Ok(out)
}

pub fn write_covariates(rows: &[SubjectCovariates], path: &Path) -> Result<()> {
    fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
        v.map(|x| x.to_string()).unwrap_or_default()
    }
    fn flag(v: Option<bool>) -> String {
        v.map(|b| u8::from(b).to_string()).unwrap_or_default()
    }
    let mut t = Table::new(COVARIATE_COLUMNS.iter().copied());
    for c in rows {
        let age = if c.age_topcoded { c.age_years.max(80.0) } else { c.age_years };
        t.push(vec![
            c.subject_id.clone(),
            c.wave.clone().unwrap_or_default(),
            fmt_f64(age),
            opt(c.sex),
            opt(c.race_ethnicity),
            opt(c.education),
            opt(c.bmi_category),
            flag(c.diabetes),
            flag(c.chd),
            flag(c.chf),
            flag(c.heart_attack),
            flag(c.stroke),
            flag(c.cancer),
            flag(c.mobility_problem),
            c.alcohol.to_string(),
            opt(c.smoking),
            opt(c.self_reported_health),
            fmt_f64(c.survey_weight),
            c.stratum_id.clone(),
            c.psu_id.clone(),
        ]);
    }
    write_table(&t, path)
}

/// Mortality linkage. Rows with an empty event or follow-up cell are not
/// linked (ineligible) and are returned separately.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MortalityTable {
    pub records: Vec<MortalityRecord>,
    pub unlinked: Vec<String>,
}

pub fn read_mortality(path: &Path) -> Result<MortalityTable> {
    let table = read_table(path)?;
    let v = RowView { table: &table, path };
    let c_subject = v.require(&["subject", "subject_id"])?;
    let c_event = v.require(&["event", "mortstat"])?;
    let c_follow = v.require(&["followup_months", "permth"])?;
    let mut out = MortalityTable::default();
    for row in 0..table.rows.len() {
        let subject = v.cell(row, c_subject).to_string();
        if is_missing(v.cell(row, c_event)) || is_missing(v.cell(row, c_follow)) {
            out.unlinked.push(subject);
            continue;
        }
        let event = parse_flag(v.cell(row, c_event)).ok_or_else(|| v.err(row, "bad event indicator"))?;
        let months: f64 = v.parse(row, c_follow)?;
        out.records
            .push(MortalityRecord::new(subject, event, months).map_err(|e| v.err(row, e.to_string()))?);
    }
    Ok(out)
}

pub fn write_mortality(rows: &[MortalityRecord], path: &Path) -> Result<()> {
    let mut t = Table::new(["subject", "event", "followup_months"]);
    for r in rows {
        t.push(vec![r.subject_id.clone(), u8::from(r.event).to_string(), fmt_f64(r.followup_months)]);
    }
    write_table(&t, path)
}

/// Minute-keyed step counts produced outside this crate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalStepSeries {
    pub detector_name: String,
    pub values: BTreeMap<(String, u32, u16), f64>,
}

impl ExternalStepSeries {
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Adds the series to matching minutes; returns how many minutes received a value.
    pub fn merge_into(&self, records: &mut [MinuteRecord]) -> Result<usize> {
        if self.is_empty() {
            return Ok(0);
        }
        if BUILTIN_DETECTORS.contains(&self.detector_name.as_str())
            || records.iter().any(|r| r.steps.contains_key(&self.detector_name))
        {
            return Err(Error::NameCollision(self.detector_name.clone()));
        }
        let mut merged = 0;
        for r in records.iter_mut() {
            let key = (r.subject_id.clone(), r.day_index, r.minute_of_day);
            if let Some(&v) = self.values.get(&key) {
                r.steps.insert(self.detector_name.clone(), v);
                merged += 1;
            }
        }
        Ok(merged)
    }
}

/// Reads `subject,day,minute,steps` rows for an externally computed detector.
pub fn import_external_steps(path: &Path, detector_name: &str) -> Result<ExternalStepSeries> {
    let name = detector_name.trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(Error::invalid("detector_name", format!("`{detector_name}` must be [A-Za-z0-9_]+")));
    }
    if BUILTIN_DETECTORS.contains(&name) {
        return Err(Error::NameCollision(name.to_string()));
    }
    let table = read_table(path)?;
    let mut series = ExternalStepSeries {
        detector_name: name.to_string(),
        values: BTreeMap::new(),
    };
    if table.rows.is_empty() {
        return Ok(series);
    }
    let v = RowView { table: &table, path };
    let c_subject = v.require(&["subject", "subject_id"])?;
    let c_day = v.require(&["day", "day_index"])?;
    let c_minute = v.require(&["minute", "minute_of_day"])?;
    let c_steps = v.require(&["steps", name])?;
    for row in 0..table.rows.len() {
        let steps: f64 = v.parse(row, c_steps)?;
        if !(steps >= 0.0 && steps.is_finite()) {
            return Err(v.err(row, format!("negative step count {steps}")));
        }
        let minute: u16 = v.parse(row, c_minute)?;
        if minute >= 1440 {
            return Err(v.err(row, format!("minute {minute} outside [0, 1439]")));
        }
        let key = (v.cell(row, c_subject).to_string(), v.parse(row, c_day)?, minute);
        if series.values.insert(key, steps).is_some() {
            return Err(v.err(row, "duplicate minute"));
        }
    }
    Ok(series)
}

/// Subject summaries as `subject,n_valid_days,included,<variables...>`.
pub fn subject_summary_table(rows: &[SubjectSummary]) -> Table {
    let vars: BTreeSet<&str> = rows.iter().flat_map(|r| r.means.keys().map(String::as_str)).collect();
    let mut cols = vec!["subject".to_string(), "n_valid_days".into(), "included".into()];
    cols.extend(vars.iter().map(|v| v.to_string()));
    let mut t = Table::new(cols);
    for r in rows {
        let mut row = vec![r.subject_id.clone(), r.n_valid_days.to_string(), u8::from(r.included).to_string()];
        for v in &vars {
            row.push(r.means.get(*v).map(|&x| fmt_f64(x)).unwrap_or_default());
        }
        t.push(row);
    }
    t
}

pub fn subject_summaries_from_table(table: &Table, path: &Path) -> Result<Vec<SubjectSummary>> {
    let v = RowView { table, path };
    let c_subject = v.require(&["subject"])?;
    let c_days = v.require(&["n_valid_days"])?;
    let c_inc = v.require(&["included"])?;
    let vars: Vec<(usize, &String)> = table
        .columns
        .iter()
        .enumerate()
        .filter(|(i, _)| ![c_subject, c_days, c_inc].contains(i))
        .collect();
    let mut out = Vec::with_capacity(table.rows.len());
    for row in 0..table.rows.len() {
        let mut means = BTreeMap::new();
        for &(c, name) in &vars {
            if !is_missing(v.cell(row, c)) {
                means.insert(name.clone(), v.parse(row, c)?);
            }
        }
        out.push(SubjectSummary {
            subject_id: v.cell(row, c_subject).to_string(),
            n_valid_days: v.parse(row, c_days)?,
            included: parse_flag(v.cell(row, c_inc)).ok_or_else(|| v.err(row, "bad included flag"))?,
            means,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn dir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn write(path: &Path, text: &str) {
        std::fs::write(path, text).unwrap();
    }

    #[test]
    fn minimal_raw_file() {
        let d = dir();
        let p = d.path().join("123.csv");
        write(&p, "x,y,z\n0,0,1\n0.1,-0.2,0.98\n0.3,0.4,0\n");
        let chunks: Vec<_> = read_raw_recording(&p, &RawFileSchema::default())
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(chunks.len(), 1);
        let r = &chunks[0];
        assert_eq!(r.subject_id(), "123");
        assert_eq!(r.len(), 3);
        assert_eq!(r.x(), &[0.0, 0.1, 0.3]);
        assert_eq!(r.z()[1], 0.98);
    }

    #[test]
    fn malformed_value_reports_line() {
        let d = dir();
        let p = d.path().join("s.csv");
        write(&p, "x,y,z\n0,0,1\nNA,0,1\n");
        let err = read_raw_recording(&p, &RawFileSchema::default())
            .unwrap()
            .collect::<Result<Vec<_>>>()
            .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn timestamps_must_increase_and_match_rate() {
        let d = dir();
        let schema = RawFileSchema {
            has_timestamp: true,
            sample_rate_hz: 80.0,
            ..Default::default()
        };
        let p = d.path().join("a.csv");
        write(&p, "t,x,y,z\n0,0,0,1\n0.0125,0,0,1\n0.0125,0,0,1\n");
        assert!(read_raw_recording(&p, &schema).unwrap().collect::<Result<Vec<_>>>().is_err());

        write(&p, "t,x,y,z\n0,0,0,1\n0.02,0,0,1\n0.04,0,0,1\n");
        let err = read_raw_recording(&p, &schema).unwrap().collect::<Result<Vec<_>>>().unwrap_err();
        assert!(err.to_string().contains("cadence"), "{err}");

        write(
            &p,
            "t,x,y,z\n2012-03-04 10:00:00.0000,0,0,1\n2012-03-04 10:00:00.0125,0,0,1\n2012-03-04 10:00:00.0250,0,0,1\n",
        );
        let chunks = read_raw_recording(&p, &schema).unwrap().collect::<Result<Vec<_>>>().unwrap();
        assert_eq!(chunks[0].start(), parse_datetime("2012-03-04 10:00:00").unwrap());
    }

    /// Produces `n` rows of `0,0,1` without materialising the text.
    struct RowGenerator {
        remaining: u64,
        header: bool,
    }

    impl Read for RowGenerator {
        fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
            let mut n = 0;
            if self.header {
                buf[..6].copy_from_slice(b"x,y,z\n");
                self.header = false;
                n = 6;
            }
            const ROW: &[u8] = b"0,0,1\n";
            while n + ROW.len() <= buf.len() && self.remaining > 0 {
                buf[n..n + ROW.len()].copy_from_slice(ROW);
                n += ROW.len();
                self.remaining -= 1;
            }
            Ok(n)
        }
    }

    #[test]
    fn seven_days_stream_in_hour_chunks() {
        let rows = 7 * 86_400 * 80u64;
        assert_eq!(rows, 48_384_000);
        let reader = BufReader::with_capacity(1 << 16, RowGenerator { remaining: rows, header: true });
        let mut raw = RawReader::new(reader, RawFileSchema::default(), "s", "generated");
        let mut chunks = 0;
        let mut total = 0u64;
        let mut max_chunk = 0;
        for chunk in &mut raw {
            let chunk = chunk.unwrap();
            chunks += 1;
            total += chunk.len() as u64;
            max_chunk = max_chunk.max(chunk.len());
        }
        assert_eq!(chunks, 168);
        assert_eq!(total, rows);
        assert_eq!(raw.samples_read(), rows);
        assert_eq!(max_chunk, 3600 * 80);
    }

    #[test]
    fn chunk_start_times_advance() {
        let text: String = std::iter::once("x,y,z\n".to_string())
            .chain((0..250).map(|i| format!("{},0,1\n", i as f32 / 100.0)))
            .collect();
        let schema = RawFileSchema {
            chunk_seconds: 1.0,
            ..Default::default()
        };
        let chunks: Vec<_> = RawReader::new(Cursor::new(text), schema.clone(), "s", "mem")
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(chunks.iter().map(|c| c.len()).collect::<Vec<_>>(), vec![80, 80, 80, 10]);
        assert_eq!(chunks[2].start(), schema.default_start() + Duration::seconds(2));
        assert_eq!(chunks[1].x()[0], 0.8);
    }

    #[test]
    fn gzip_and_cache_round_trip() {
        let d = dir();
        let t0 = parse_datetime("2013-05-06 07:08:09").unwrap();
        let n = 1000;
        let x: Vec<f32> = (0..n).map(|i| (i as f32 * 0.37).sin()).collect();
        let y: Vec<f32> = (0..n).map(|i| (i as f32 * 0.11).cos() * 1.7).collect();
        let z: Vec<f32> = (0..n).map(|i| 1.0 + i as f32 * 1e-4).collect();
        let rec = TriaxialRecording::new("77", t0, 80.0, x, y, z).unwrap();
        let raw = d.path().join("77.csv.gz");
        write_raw_recording(&rec, &raw, true).unwrap();
        let schema = RawFileSchema {
            has_timestamp: true,
            chunk_seconds: 3.0,
            ..Default::default()
        };
        let cache = d.path().join("77.sfg");
        let mut first = open_recording(&raw, &schema, Some(&cache)).unwrap();
        assert!(!first.from_cache());
        let a: Vec<_> = (&mut first).collect::<Result<_>>().unwrap();
        assert_eq!(cache_sample_count(&cache).unwrap(), n as u64);
        let bytes = std::fs::read(&cache).unwrap();
        assert_eq!(&bytes[..4], b"SFG1");
        assert_eq!(bytes.len(), 8 + 12 * n);
        assert_eq!(f32::from_le_bytes(bytes[8 + 4 * n..12 + 4 * n].try_into().unwrap()), rec.y()[0]);

        let second = open_recording(&raw, &schema, Some(&cache)).unwrap();
        assert!(second.from_cache());
        let b: Vec<_> = second.collect::<Result<_>>().unwrap();
        assert_eq!(a, b);
        let mut joined = a[0].clone();
        for c in &a[1..] {
            joined.extend_from(c).unwrap();
        }
        assert_eq!(joined, rec);
    }

    #[test]
    fn minute_file_parsing() {
        let d = dir();
        let p = d.path().join("m.csv");
        write(
            &p,
            "subject,day,minute,wear,flag,mims,ac,steps_actilife\ns1,1,0,unknown,0,3.2,10,4\ns1,1,1,wake,1,-0.01,NA,\n",
        );
        let recs = read_minute_file(&p).unwrap();
        assert_eq!(recs[0].wear, WearState::Unknown);
        assert_eq!(recs[0].mims, 3.2);
        assert_eq!(recs[0].ac, Some(10));
        assert_eq!(recs[0].steps["actilife"], 4.0);
        assert_eq!(recs[1].mims, -0.01);
        assert!(recs[1].quality_flagged);
        assert!(recs[1].steps.is_empty());

        write(&p, "subject,day,minute,wear,flag,mims\ns1,1,0,wake,0,1\ns1,1,0,sleep,0,1\n");
        assert!(matches!(read_minute_file(&p), Err(Error::DuplicateMinute { .. })));
        write(&p, "subject,day,minute,wear,flag,mims\ns1,1,0,awake,0,1\n");
        assert!(read_minute_file(&p).unwrap_err().to_string().contains("wear"));
    }

    #[test]
    fn covariates_and_mortality() {
        let d = dir();
        let p = d.path().join("cov.csv");
        let header = COVARIATE_COLUMNS.join(",");
        write(
            &p,
            &format!(
                "{header}\n1,G,85,female,mexican_american,hs,obese,0,0,0,0,0,1,0,,former,good,1234.5,90,1\n2,H,50,male,white,more_than_hs,normal,1,,0,0,0,0,0,heavy,never,excellent,10,91,2\n"
            ),
        );
        let c = read_covariates(&p).unwrap();
        assert_eq!(c[0].alcohol, Alcohol::Missing);
        assert_eq!(c[0].age_years, 80.0);
        assert!(c[0].age_topcoded);
        assert!(c[0].is_complete());
        assert_eq!(c[1].chd, None);
        assert!(!c[1].is_complete());
        assert_eq!(c[1].wave.as_deref(), Some("H"));

        let round = d.path().join("cov2.csv");
        write_covariates(&c, &round).unwrap();
        assert_eq!(read_covariates(&round).unwrap(), c);

        write(&p, &format!("{header}\n1,G,50,female,white,hs,obese,0,0,0,0,0,1,0,,former,good,0,90,1\n"));
        assert!(read_covariates(&p).is_err());

        let m = d.path().join("mort.csv");
        write(&m, "subject,event,followup_months\n1,1,81\n2,0,\n");
        let t = read_mortality(&m).unwrap();
        assert_eq!(t.records, vec![MortalityRecord::new("1", true, 81.0).unwrap()]);
        assert_eq!(t.unlinked, vec!["2".to_string()]);
        write(&m, "subject,event,followup_months\n1,0,-1\n");
        assert!(read_mortality(&m).is_err());
    }

    #[test]
    fn external_steps_import() {
        let d = dir();
        let p = d.path().join("acti.csv");
        write(&p, "subject,day,minute,steps\ns1,1,0,12\ns1,1,2,30.5\n");
        let s = import_external_steps(&p, "actilife").unwrap();
        let mut recs: Vec<MinuteRecord> = (0..3)
            .map(|m| MinuteRecord::new("s1", 1, m, WearState::WakeWear, false, 1.0).unwrap())
            .collect();
        assert_eq!(s.merge_into(&mut recs).unwrap(), 2);
        assert_eq!(recs[0].steps["actilife"], 12.0);
        assert!(!recs[1].steps.contains_key("actilife"));
        assert!(matches!(s.merge_into(&mut recs), Err(Error::NameCollision(_))));
        assert!(matches!(import_external_steps(&p, "spectral"), Err(Error::NameCollision(_))));

        write(&p, "subject,day,minute,steps\n");
        let empty = import_external_steps(&p, "actilife").unwrap();
        assert!(empty.is_empty());
        let before = recs.clone();
        assert_eq!(empty.merge_into(&mut recs).unwrap(), 0);
        assert_eq!(before, recs);

        write(&p, "subject,day,minute,steps\ns1,1,0,-3\n");
        assert!(import_external_steps(&p, "stepcount_rf").is_err());
    }

    #[test]
    fn table_line_counts() {
        let d = dir();
        let p = d.path().join("t.csv");
        let mut t = Table::new(["a", "b"]);
        write_table(&t, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "a,b\n");
        for i in 0..3 {
            t.push(vec![i.to_string(), fmt_f64(i as f64 / 3.0)]);
        }
        write_table(&t, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 4);
        assert_eq!(read_table(&p).unwrap(), t);
        assert!(write_table(&t, &d.path().join("missing/dir/t.csv")).is_err());
    }

    #[test]
    fn schema_keys() {
        let mut s = RawFileSchema::default();
        s.set("delimiter", "tab").unwrap();
        s.set("timestamp", "true").unwrap();
        s.set("start", "2012-01-01 09:00:00").unwrap();
        assert_eq!(s.delimiter, b'\t');
        assert!(s.has_timestamp);
        assert!(s.set("rate", "80").is_err());
        assert!(s.set("sample_rate_hz", "-1").is_err());
        assert_eq!(RawFileSchema::default().chunk_samples(), 288_000);
    }
}
