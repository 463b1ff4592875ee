//! Channel-trace and frame-trace CSV files.
//!
//! Channel trace header: `time,txId,rxId,lossDb[,smallScaleDb]`, columns in
//! any order. Frame trace header: `frameIndex,mode,sizeBytes`.

use std::io::{Read, Write};

use ranai_core::app::{FrameTrace, LoopMode, ModeTable};
use ranai_core::channel::{ChannelError, ChannelTrace, TraceEntry};

#[derive(Debug, thiserror::Error)]
pub enum TraceFileError {
    #[error("line {line}: {message}")]
    Line { line: u64, message: String },
    #[error("header: {0}")]
    Header(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Frame(#[from] ranai_core::app::FrameTraceError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn line_err(line: u64, message: impl Into<String>) -> TraceFileError {
    TraceFileError::Line {
        line,
        message: message.into(),
    }
}

/// Maps the required and optional columns of a header to their positions.
fn columns(header: &csv::StringRecord, required: &[&str], optional: &[&str]) -> Result<Vec<Option<usize>>, TraceFileError> {
    let mut pos = vec![None; required.len() + optional.len()];
    for (i, name) in header.iter().enumerate() {
        let name = name.trim();
        let slot = required
            .iter()
            .chain(optional)
            .position(|c| *c == name)
            .ok_or_else(|| TraceFileError::Header(format!("unknown column `{name}`")))?;
        if pos[slot].replace(i).is_some() {
            return Err(TraceFileError::Header(format!("duplicate column `{name}`")));
        }
    }
    for (slot, name) in required.iter().enumerate() {
        if pos[slot].is_none() {
            return Err(TraceFileError::Header(format!("missing column `{name}`")));
        }
    }
    Ok(pos)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<T, TraceFileError> {
    let raw = rec.get(idx).ok_or_else(|| line_err(line, format!("missing {name}")))?.trim();
    raw.parse()
        .map_err(|_| line_err(line, format!("cannot parse {name} `{raw}`")))
}

fn reader<R: Read>(src: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().flexible(true).from_reader(src)
}

pub fn parse_trace<R: Read>(src: R) -> Result<ChannelTrace, TraceFileError> {
    let mut rdr = reader(src);
    let cols = columns(rdr.headers()?, &["time", "txId", "rxId", "lossDb"], &["smallScaleDb"])?;
    let mut entries = Vec::new();
    let mut last_time = f64::NEG_INFINITY;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let time_s: f64 = field(&rec, cols[0].unwrap(), "time", line)?;
        let tx = field(&rec, cols[1].unwrap(), "txId", line)?;
        let rx = field(&rec, cols[2].unwrap(), "rxId", line)?;
        let loss_db: f64 = field(&rec, cols[3].unwrap(), "lossDb", line)?;
        let small_scale_db = match cols[4].and_then(|i| rec.get(i)).map(str::trim) {
            None | Some("") => None,
            Some(_) => Some(field::<f64>(&rec, cols[4].unwrap(), "smallScaleDb", line)?),
        };
        if !time_s.is_finite() || time_s < 0.0 {
            return Err(line_err(line, "time must be finite and non-negative"));
        }
        if !loss_db.is_finite() || loss_db < 0.0 {
            return Err(line_err(line, format!("lossDb {loss_db} must be finite and non-negative")));
        }
        if small_scale_db.is_some_and(|s: f64| !s.is_finite()) {
            return Err(line_err(line, "smallScaleDb must be finite"));
        }
        if time_s < last_time {
            return Err(line_err(line, format!("time {time_s} is earlier than the previous row")));
        }
        last_time = time_s;
        entries.push(TraceEntry {
            time_s,
            tx,
            rx,
            loss_db,
            small_scale_db,
        });
    }
    Ok(ChannelTrace::from_entries(entries)?)
}

pub fn write_trace<W: Write>(trace: &ChannelTrace, dst: W) -> Result<(), TraceFileError> {
    let mut w = csv::Writer::from_writer(dst);
    w.write_record(["time", "txId", "rxId", "lossDb", "smallScaleDb"])?;
    for e in trace.entries() {
        w.write_record([
            e.time_s.to_string(),
            e.tx.to_string(),
            e.rx.to_string(),
            e.loss_db.to_string(),
            e.small_scale_db.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_frame_trace<R: Read>(src: R, modes: &ModeTable, loop_mode: LoopMode) -> Result<FrameTrace, TraceFileError> {
    let mut rdr = reader(src);
    let cols = columns(rdr.headers()?, &["frameIndex", "mode", "sizeBytes"], &[])?;
    let mut rows: Vec<(u32, String, u64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let frame = field(&rec, cols[0].unwrap(), "frameIndex", line)?;
        let mode: String = field(&rec, cols[1].unwrap(), "mode", line)?;
        if modes.by_name(&mode).is_none() {
            return Err(line_err(line, format!("unknown mode `{mode}`")));
        }
        let size = field(&rec, cols[2].unwrap(), "sizeBytes", line)?;
        rows.push((frame, mode, size));
    }
    Ok(FrameTrace::from_rows(
        rows.iter().map(|(f, m, s)| (*f, m.as_str(), *s)),
        modes,
        loop_mode,
    )?)
}

pub fn write_frame_trace<W: Write>(trace: &FrameTrace, modes: &ModeTable, dst: W) -> Result<(), TraceFileError> {
    let mut w = csv::Writer::from_writer(dst);
    w.write_record(["frameIndex", "mode", "sizeBytes"])?;
    for (frame, mode, size) in trace.rows() {
        w.write_record([frame.to_string(), modes.name(mode).to_string(), size.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ranai_core::SimTime;

    #[test]
    fn minimal_trace() {
        let t = parse_trace("time,txId,rxId,lossDb\n0,1,0,100\n0.1,1,0,103\n".as_bytes()).unwrap();
        assert_eq!(t.entries().len(), 2);
        assert_eq!(t.loss_at(1, 0, SimTime::from_millis(50)).unwrap(), 100.0);
        assert_eq!(t.loss_at(1, 0, SimTime::from_millis(100)).unwrap(), 103.0);
    }

    #[test]
    fn small_scale_is_added() {
        let t = parse_trace("txId,time,rxId,lossDb,smallScaleDb\n1,0,0,100,-2.5\n2,0,0,90,\n".as_bytes()).unwrap();
        assert_eq!(t.loss_at(1, 0, SimTime::ZERO).unwrap(), 97.5);
        assert_eq!(t.loss_at(2, 0, SimTime::ZERO).unwrap(), 90.0);
    }

    #[test]
    fn rejects_with_line_numbers() {
        let neg = parse_trace("time,txId,rxId,lossDb\n0,1,0,100\n0.1,1,0,-3\n".as_bytes()).unwrap_err();
        assert!(matches!(neg, TraceFileError::Line { line: 3, .. }), "{neg}");
        let bad = parse_trace("time,txId,rxId,lossDb\n0,1,zero,100\n".as_bytes()).unwrap_err();
        assert!(bad.to_string().starts_with("line 2:"), "{bad}");
        let back = parse_trace("time,txId,rxId,lossDb\n0.2,1,0,100\n0.1,1,0,100\n".as_bytes()).unwrap_err();
        assert!(matches!(back, TraceFileError::Line { line: 3, .. }), "{back}");
        let col = parse_trace("time,txId,rxId,lossDb,rssi\n".as_bytes()).unwrap_err();
        assert!(col.to_string().contains("unknown column `rssi`"));
        let missing = parse_trace("time,txId,lossDb\n".as_bytes()).unwrap_err();
        assert!(missing.to_string().contains("missing column `rxId`"));
    }

    #[test]
    fn trace_round_trip() {
        let src = "time,txId,rxId,lossDb,smallScaleDb\n0,2,0,88.123456789,\n0,1,0,97.1,0.25\n0.1,1,0,99.99999999999,-1\n";
        let t = parse_trace(src.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_trace(&t, &mut buf).unwrap();
        assert_eq!(parse_trace(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn frame_trace_round_trip() {
        let modes = ModeTable::default();
        let src = "frameIndex,mode,sizeBytes\n0,C-R,1900000\n0,C-SC,600000\n0,C-SA,120000\n1,C-R,1800000\n1,C-SC,610000\n1,C-SA,121000\n";
        let t = parse_frame_trace(src.as_bytes(), &modes, LoopMode::RestartAtEnd).unwrap();
        assert_eq!(t.frames(), 2);
        let mut buf = Vec::new();
        write_frame_trace(&t, &modes, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), src);
        let err = parse_frame_trace("frameIndex,mode,sizeBytes\n0,C-X,5\n".as_bytes(), &modes, LoopMode::StopAtEnd)
            .unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
