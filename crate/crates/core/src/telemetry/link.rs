use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::csv::{write_header, write_row};
use crate::domain::{ActivityLabel, LabeledSeries, SensorSample};
use crate::error::{Error, Result};

/// One sensor reading on the wire. Serialized as a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireRecord {
    pub device_id: String,
    pub seq: u64,
    pub timestamp: f64,
    pub temperature: f64,
    pub humidity: f64,
    pub aqi_raw: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub drop_probability: f64,
    pub max_jitter_ms: f64,
    pub seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            drop_probability: 0.0,
            max_jitter_ms: 0.0,
            seed: 0,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.drop_probability) {
            return Err(Error::invalid("drop_probability", "must be in [0, 1)"));
        }
        if !(self.max_jitter_ms >= 0.0 && self.max_jitter_ms.is_finite()) {
            return Err(Error::invalid("max_jitter_ms", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    /// Records eligible for transmission (samples with both channels present).
    pub records: u64,
    pub sent: u64,
    pub dropped: u64,
    /// Sent records whose timestamp carries a non-zero modeled delay.
    pub delayed: u64,
    pub dropped_seqs: Vec<u64>,
    /// Source samples skipped because a channel was missing.
    pub skipped_missing: u64,
}

#[derive(Debug, thiserror::Error)]
#[error("stream aborted after {} sent records: {source}", summary.sent)]
pub struct ServeError {
    pub summary: SessionSummary,
    #[source]
    pub source: std::io::Error,
}

impl From<ServeError> for Error {
    fn from(e: ServeError) -> Self {
        Error::Transport(e.to_string())
    }
}

/// Streams a series to `endpoint`. `time_scale` paces records at the
/// series cadence divided by the scale; `None` sends as fast as possible.
///
/// Drop decisions never apply to the final record, so the receiver can
/// always observe the session length.
pub fn serve_stream(
    series: &LabeledSeries,
    link: &LinkConfig,
    endpoint: impl ToSocketAddrs,
    time_scale: Option<f64>,
) -> std::result::Result<SessionSummary, ServeError> {
    let stream = TcpStream::connect(endpoint).map_err(|source| ServeError {
        summary: SessionSummary::default(),
        source,
    })?;
    let _ = stream.set_nodelay(true);
    let mut w = BufWriter::new(stream);
    let summary = serve_to_writer(series, link, &mut w, time_scale)?;
    w.flush().map_err(|source| ServeError { summary: summary.clone(), source })?;
    Ok(summary)
}

pub fn serve_to_writer<W: Write>(
    series: &LabeledSeries,
    link: &LinkConfig,
    w: &mut W,
    time_scale: Option<f64>,
) -> std::result::Result<SessionSummary, ServeError> {
    if let Err(e) = link.validate() {
        return Err(ServeError {
            summary: SessionSummary::default(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(link.seed);
    let eligible: Vec<&SensorSample> = series
        .samples()
        .iter()
        .filter(|s| s.temperature.is_some() && s.humidity.is_some())
        .collect();
    let mut summary = SessionSummary {
        records: eligible.len() as u64,
        skipped_missing: (series.len() - eligible.len()) as u64,
        ..Default::default()
    };
    let start = Instant::now();
    let t0 = eligible.first().map(|s| s.timestamp).unwrap_or(0.0);
    let pace = time_scale.filter(|s| *s > 0.0 && s.is_finite());

    for (seq, s) in eligible.iter().enumerate() {
        let seq = seq as u64;
        let is_last = seq + 1 == summary.records;
        let dropped = rng.gen::<f64>() < link.drop_probability && !is_last;
        let delay_s = rng.gen::<f64>() * link.max_jitter_ms / 1000.0;
        if dropped {
            summary.dropped += 1;
            summary.dropped_seqs.push(seq);
            continue;
        }
        if let Some(scale) = pace {
            let due = Duration::from_secs_f64(((s.timestamp - t0) + delay_s).max(0.0) / scale);
            if let Some(wait) = due.checked_sub(start.elapsed()) {
                thread::sleep(wait);
            }
        }
        let record = WireRecord {
            device_id: series.device_id.clone(),
            seq,
            timestamp: s.timestamp + delay_s,
            temperature: s.temperature.expect("eligible"),
            humidity: s.humidity.expect("eligible"),
            aqi_raw: s.aqi_raw,
        };
        let line = serde_json::to_string(&record).expect("wire record serializes");
        let res = writeln!(w, "{line}").and_then(|_| if pace.is_some() { w.flush() } else { Ok(()) });
        if let Err(source) = res {
            return Err(ServeError { summary, source });
        }
        summary.sent += 1;
        if delay_s > 0.0 {
            summary.delayed += 1;
        }
    }
    Ok(summary)
}

/// Inclusive range of missing sequence numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqRange {
    pub start: u64,
    pub end: u64,
}

impl SeqRange {
    pub fn len(&self) -> u64 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub device_id: Option<String>,
    pub received: u64,
    pub parse_errors: u64,
    pub gaps_detected: Vec<SeqRange>,
    pub max_seq: Option<u64>,
    pub out_path: Option<PathBuf>,
}

impl IngestReport {
    pub fn missing(&self) -> u64 {
        self.gaps_detected.iter().map(SeqRange::len).sum()
    }

    pub fn missing_seqs(&self) -> Vec<u64> {
        self.gaps_detected.iter().flat_map(|r| r.start..=r.end).collect()
    }
}

fn file_stem_for(device_id: &str) -> String {
    device_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// Activity inferred from a `<subject>-<activity>` device id.
fn activity_from_device(device_id: &str) -> Option<ActivityLabel> {
    let tail = device_id.rsplit('-').next()?;
    ActivityLabel::ALL.into_iter().find(|l| l.as_str() == tail)
}

fn subject_from_device(device_id: &str) -> String {
    match device_id.rsplit_once('-') {
        Some((subject, _)) if activity_from_device(device_id).is_some() => subject.to_string(),
        _ => device_id.to_string(),
    }
}

struct Session {
    device_id: String,
    part_path: PathBuf,
    final_path: PathBuf,
    writer: BufWriter<File>,
    first: (u64, f64),
    last: (u64, f64),
}

/// Reads NDJSON records until EOF and logs them to `<out_dir>/<device>.csv`.
pub fn ingest_stream<R: BufRead>(reader: R, out_dir: &Path) -> Result<IngestReport> {
    ingest_with(reader, out_dir, &|stem: &str| out_dir.join(format!("{stem}.csv")))
}

fn ingest_with<R: BufRead>(
    reader: R,
    out_dir: &Path,
    claim: &dyn Fn(&str) -> PathBuf,
) -> Result<IngestReport> {
    let mut report = IngestReport::default();
    let mut session: Option<Session> = None;
    let mut next_expected: u64 = 0;

    for line in reader.split(b'\n') {
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                log::warn!("connection read error: {e}");
                break;
            }
        };
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let record: WireRecord = match serde_json::from_slice(&line) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("malformed wire line skipped: {e}");
                report.parse_errors += 1;
                continue;
            }
        };
        let sample = match SensorSample::new(record.timestamp, Some(record.temperature), Some(record.humidity), record.aqi_raw) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("invalid record seq {} skipped: {e}", record.seq);
                report.parse_errors += 1;
                continue;
            }
        };
        let s = match &mut session {
            None => {
                fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
                let final_path = claim(&file_stem_for(&record.device_id));
                let part_path = final_path.with_extension("csv.part");
                let file = File::create(&part_path).map_err(|e| Error::io(&part_path, e))?;
                report.device_id = Some(record.device_id.clone());
                session.insert(Session {
                    device_id: record.device_id.clone(),
                    part_path,
                    final_path,
                    writer: BufWriter::new(file),
                    first: (record.seq, record.timestamp),
                    last: (record.seq, record.timestamp),
                })
            }
            Some(s) => {
                if record.device_id != s.device_id || record.seq < next_expected || record.timestamp <= s.last.1 {
                    log::warn!("out-of-order or foreign record seq {} skipped", record.seq);
                    report.parse_errors += 1;
                    continue;
                }
                s
            }
        };
        if record.seq > next_expected {
            report.gaps_detected.push(SeqRange { start: next_expected, end: record.seq - 1 });
        }
        next_expected = record.seq + 1;
        s.last = (record.seq, record.timestamp);
        report.received += 1;
        report.max_seq = Some(record.seq);
        // A failed write leaves the `.part` file behind as the partial marker.
        write_row(&mut s.writer, &sample).map_err(|e| Error::io(&s.part_path, e))?;
    }

    if let Some(mut s) = session {
        s.writer.flush().map_err(|e| Error::io(&s.part_path, e))?;
        drop(s.writer);
        let hz = estimate_rate(s.first, s.last);
        let write_final = || -> std::io::Result<()> {
            let mut out = BufWriter::new(File::create(&s.final_path)?);
            write_header(
                &mut out,
                &s.device_id,
                activity_from_device(&s.device_id),
                hz,
                &subject_from_device(&s.device_id),
            )?;
            std::io::copy(&mut File::open(&s.part_path)?, &mut out)?;
            out.flush()
        };
        write_final().map_err(|e| Error::io(&s.final_path, e))?;
        fs::remove_file(&s.part_path).map_err(|e| Error::io(&s.part_path, e))?;
        report.out_path = Some(s.final_path);
    }
    Ok(report)
}

fn estimate_rate(first: (u64, f64), last: (u64, f64)) -> f64 {
    let dt = last.1 - first.1;
    if last.0 == first.0 || dt <= 0.0 {
        return 1.0;
    }
    let hz = (last.0 - first.0) as f64 / dt;
    (hz * 1000.0).round() / 1000.0
}

/// Accepts a single connection on `listen` and ingests it.
pub fn ingest(listen: impl ToSocketAddrs, out_dir: &Path) -> Result<IngestReport> {
    let ingester = Ingester::bind(listen)?;
    ingester.run(out_dir, Some(1))?.pop().expect("one session")
}

/// Multi-connection ingester; one thread per connection.
pub struct Ingester {
    listener: TcpListener,
}

impl Ingester {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self> {
        let listener = TcpListener::bind(addr).map_err(|e| Error::Transport(format!("bind failed: {e}")))?;
        Ok(Self { listener })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        self.listener.local_addr().map_err(|e| Error::Transport(e.to_string()))
    }

    /// Serves until `max_sessions` connections have completed (forever when
    /// `None`). Reports are returned in accept order.
    pub fn run(&self, out_dir: &Path, max_sessions: Option<usize>) -> Result<Vec<Result<IngestReport>>> {
        let claimed = Arc::new(Mutex::new(HashSet::<PathBuf>::new()));
        let mut handles = Vec::new();
        let mut accepted = 0usize;
        while max_sessions.is_none_or(|m| accepted < m) {
            let (stream, peer) = self
                .listener
                .accept()
                .map_err(|e| Error::Transport(format!("accept failed: {e}")))?;
            accepted += 1;
            log::info!("session {accepted} from {peer}");
            let out_dir = out_dir.to_path_buf();
            let claimed = Arc::clone(&claimed);
            handles.push(thread::spawn(move || {
                let claim = |stem: &str| {
                    let mut set = claimed.lock().expect("claim registry");
                    let mut n = 1;
                    loop {
                        let name = if n == 1 { format!("{stem}.csv") } else { format!("{stem}-{n}.csv") };
                        let p = out_dir.join(name);
                        if !p.exists() && set.insert(p.clone()) {
                            return p;
                        }
                        n += 1;
                    }
                };
                ingest_with(BufReader::new(stream), &out_dir, &claim)
            }));
        }
        Ok(handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Transport("session thread panicked".into()))))
            .collect())
    }
}
