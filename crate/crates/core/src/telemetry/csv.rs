//! Series CSV format.
//!
//! ```text
//! # device_id=s01-running
//! # activity=running
//! # sampling_hz=1
//! # subject_id=s01
//! timestamp_s,temperature_c,humidity_pct,aqi_raw
//! 0,29.41,75.02,119.8
//! ```
//!
//! Empty fields are missing markers. `subject_id` is optional and defaults
//! to the device id. Values are written with shortest round-trip precision.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::domain::{ActivityLabel, LabeledSeries, SensorSample};
use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 4] = ["timestamp_s", "temperature_c", "humidity_pct", "aqi_raw"];

pub(crate) fn write_header<W: Write>(
    w: &mut W,
    device_id: &str,
    activity: Option<ActivityLabel>,
    sampling_hz: f64,
    subject_id: &str,
) -> std::io::Result<()> {
    writeln!(w, "# device_id={device_id}")?;
    if let Some(a) = activity {
        writeln!(w, "# activity={a}")?;
    }
    writeln!(w, "# sampling_hz={sampling_hz}")?;
    writeln!(w, "# subject_id={subject_id}")?;
    writeln!(w, "{}", CSV_COLUMNS.join(","))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn write_row<W: Write>(w: &mut W, s: &SensorSample) -> std::io::Result<()> {
    writeln!(
        w,
        "{},{},{},{}",
        s.timestamp,
        opt(s.temperature),
        opt(s.humidity),
        opt(s.aqi_raw)
    )
}

pub fn write_csv_to<W: Write>(series: &LabeledSeries, w: &mut W) -> std::io::Result<()> {
    write_header(
        w,
        &series.device_id,
        Some(series.label),
        series.sampling_hz,
        &series.subject_id,
    )?;
    for s in series.samples() {
        write_row(w, s)?;
    }
    Ok(())
}

pub fn write_csv(series: &LabeledSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_csv_to(series, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<LabeledSeries> {
    read_csv_with_label(path, None)
}

/// Reads a series; `label` overrides (or supplies) the activity header.
pub fn read_csv_with_label(path: impl AsRef<Path>, label: Option<ActivityLabel>) -> Result<LabeledSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(BufReader::new(file), label).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_csv<R: BufRead>(reader: R, label: Option<ActivityLabel>) -> Result<LabeledSeries> {
    let mut device_id = None;
    let mut activity = label;
    let mut sampling_hz = None;
    let mut subject_id = None;
    let mut columns_seen = false;
    let mut samples: Vec<SensorSample> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let row = idx + 1;
        let line = line.map_err(|e| Error::io("<csv>", e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.trim().split_once('=') {
                let v = v.trim();
                match k.trim() {
                    "device_id" => device_id = Some(v.to_string()),
                    "activity" if label.is_none() => {
                        activity = Some(v.parse().map_err(|_| Error::Format {
                            row,
                            message: format!("unknown activity `{v}`"),
                        })?)
                    }
                    "sampling_hz" => {
                        sampling_hz = Some(v.parse::<f64>().map_err(|_| Error::Format {
                            row,
                            message: format!("bad sampling_hz `{v}`"),
                        })?)
                    }
                    "subject_id" => subject_id = Some(v.to_string()),
                    _ => {}
                }
            }
            continue;
        }
        if !columns_seen {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != CSV_COLUMNS {
                return Err(Error::Format {
                    row,
                    message: format!("expected columns {}, found `{line}`", CSV_COLUMNS.join(",")),
                });
            }
            columns_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != CSV_COLUMNS.len() {
            return Err(Error::Format {
                row,
                message: format!("expected {} fields, found {}", CSV_COLUMNS.len(), fields.len()),
            });
        }
        let num = |i: usize| -> Result<Option<f64>> {
            if fields[i].is_empty() {
                return Ok(None);
            }
            fields[i].parse::<f64>().map(Some).map_err(|_| Error::Format {
                row,
                message: format!("{} `{}` is not a number", CSV_COLUMNS[i], fields[i]),
            })
        };
        let t = num(0)?.ok_or_else(|| Error::Format { row, message: "missing timestamp".into() })?;
        if let Some(prev) = samples.last() {
            if !(t > prev.timestamp) {
                return Err(Error::Format {
                    row,
                    message: format!("non-monotonic timestamp {t} after {}", prev.timestamp),
                });
            }
        }
        let sample = SensorSample::new(t, num(1)?, num(2)?, num(3)?)
            .map_err(|e| Error::Format { row, message: e.to_string() })?;
        samples.push(sample);
    }

    if samples.is_empty() {
        return Err(Error::EmptySeries);
    }
    let missing = |what: &str| Error::Format { row: 0, message: format!("missing `# {what}=` header") };
    let device_id = device_id.ok_or_else(|| missing("device_id"))?;
    let activity = activity.ok_or_else(|| missing("activity"))?;
    let sampling_hz = sampling_hz.ok_or_else(|| missing("sampling_hz"))?;
    let subject_id = subject_id.unwrap_or_else(|| device_id.clone());
    LabeledSeries::new(samples, activity, sampling_hz, subject_id, device_id)
}
