use std::io::{Read, Write};

use super::{parse_date, parse_value, IngestError, TableBuilder, TimeSeriesTable, Variable};
use crate::numfmt::sig12;

/// Reads a CSV table: first column ISO dates, remaining header cells are
/// variable codes.
pub fn parse_csv<R: Read>(input: R) -> Result<TimeSeriesTable, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| IngestError::MalformedHeader(e.to_string()))?
        .clone();
    if header.len() < 2 {
        return Err(IngestError::MalformedHeader(
            "need a date column and at least one variable".into(),
        ));
    }
    let codes: Vec<&str> = header.iter().skip(1).map(str::trim).collect();
    if codes.iter().any(|c| c.is_empty()) {
        return Err(IngestError::MalformedHeader("empty variable code".into()));
    }
    let mut builder = TableBuilder::new(codes.iter().map(|c| Variable::new(*c)).collect())?;
    for record in reader.records() {
        let record = record.map_err(|e| match e.position() {
            Some(p) => IngestError::RaggedRow(p.line() as usize),
            None => IngestError::MalformedHeader(e.to_string()),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != header.len() {
            return Err(IngestError::RaggedRow(line));
        }
        let date = parse_date(&record[0], line)?;
        builder.touch(date, None)?;
        for (v, cell) in record.iter().skip(1).enumerate() {
            builder.set(date, v, parse_value(cell))?;
        }
    }
    Ok(builder.finish())
}

/// Writes `t` as CSV with 12-significant-digit values and `NA` for gaps.
pub fn emit_csv<W: Write>(t: &TimeSeriesTable, out: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string()];
    header.extend(t.variables().iter().map(|v| v.code.clone()));
    w.write_record(&header).map_err(csv_to_io)?;
    for (d, row) in t.timestamps().iter().zip(t.values()) {
        let mut rec = vec![d.format("%Y-%m-%d").to_string()];
        rec.extend(row.iter().map(|v| v.map_or_else(|| "NA".to_string(), sig12)));
        w.write_record(&rec).map_err(csv_to_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_to_io(e: csv::Error) -> IngestError {
    IngestError::Io(std::io::Error::other(e))
}
