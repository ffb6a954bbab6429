//! Mask-to-phone link emulation: a device emulator streams NDJSON
//! [`WireRecord`]s over TCP with modeled loss and delay, and an ingester logs
//! each connection to CSV while accounting for sequence gaps.

mod csv;
mod link;

pub use self::csv::{parse_csv, read_csv, read_csv_with_label, write_csv, write_csv_to, CSV_COLUMNS};
pub use self::link::{
    ingest, ingest_stream, serve_stream, serve_to_writer, IngestReport, Ingester, LinkConfig,
    SeqRange, ServeError, SessionSummary, WireRecord,
};
