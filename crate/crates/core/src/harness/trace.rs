//! CSV traces.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::control::Region;
use crate::{Error, Result};

pub const TRACE_CSV_HEADER: &str = "t,v_pv,v_c,i_l,i_pv,p_pv,d,region,beta,y";

/// One closed-loop sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub v_pv: f64,
    pub v_c: f64,
    pub i_l: f64,
    pub i_pv: f64,
    pub p_pv: f64,
    pub d: f64,
    pub region: Region,
    /// Active resistance reference (Ω).
    pub beta: f64,
    /// Tracking error in the active coordinate.
    pub y: f64,
}

impl TraceRecord {
    fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            self.t, self.v_pv, self.v_c, self.i_l, self.i_pv, self.p_pv, self.d, self.region, self.beta, self.y
        )
    }
}

/// Writes `records` as CSV. `Display` for `f64` is shortest-round-trip, so
/// reading the file back reproduces every value bit for bit.
pub fn write_trace_to<W: Write>(records: &[TraceRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for r in records {
        r.write_csv(&mut out)?;
    }
    out.flush()
}

pub fn write_trace(records: &[TraceRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_trace_to(records, BufWriter::new(file)).map_err(io_err)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut lines = reader.lines();
    let header = lines.next().transpose().map_err(io_err)?;
    if header.as_deref() != Some(TRACE_CSV_HEADER) {
        return Err(parse_err(1, format!("expected header `{TRACE_CSV_HEADER}`")));
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(io_err)?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(parse_err(line_no, format!("expected 10 fields, got {}", fields.len())));
        }
        let num = |k: usize| -> Result<f64> {
            fields[k]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad number `{}`", fields[k])))
        };
        out.push(TraceRecord {
            t: num(0)?,
            v_pv: num(1)?,
            v_c: num(2)?,
            i_l: num(3)?,
            i_pv: num(4)?,
            p_pv: num(5)?,
            d: num(6)?,
            region: fields[7]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad region `{}`", fields[7])))?,
            beta: num(8)?,
            y: num(9)?,
        });
    }
    Ok(out)
}
